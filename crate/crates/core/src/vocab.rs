//! Token universe: subjects, relations, answers and QA prompt tokens.
//!
//! Embeddings are fixed one-hot vectors, so a token is just its index and
//! `phi(a)^T M phi(s)` is the matrix entry `M[a, s]`. The layout is
//! `[subjects | relations | answers | prompts]`.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub usize);

impl Token {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Subject,
    Relation,
    Answer,
    Prompt,
}

impl TokenKind {
    pub fn name(self) -> &'static str {
        match self {
            TokenKind::Subject => "subject",
            TokenKind::Relation => "relation",
            TokenKind::Answer => "answer",
            TokenKind::Prompt => "prompt",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Vocabulary {
    n_subjects: usize,
    n_relations: usize,
    n_answers: usize,
}

impl Vocabulary {
    /// Builds a vocabulary. Every count must be positive and `n_answers`
    /// must split evenly into one answer pool per relation.
    pub fn new(n_subjects: usize, n_relations: usize, n_answers: usize) -> Result<Self> {
        if n_subjects == 0 || n_relations == 0 || n_answers == 0 {
            return Err(Error::Vocabulary(format!(
                "all sizes must be positive, got ({n_subjects}, {n_relations}, {n_answers})"
            )));
        }
        if n_answers % n_relations != 0 {
            return Err(Error::Vocabulary(format!(
                "{n_answers} answers cannot be split into {n_relations} equal pools"
            )));
        }
        Ok(Vocabulary {
            n_subjects,
            n_relations,
            n_answers,
        })
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_relations(&self) -> usize {
        self.n_relations
    }

    pub fn n_answers(&self) -> usize {
        self.n_answers
    }

    pub fn pool_size(&self) -> usize {
        self.n_answers / self.n_relations
    }

    pub fn total(&self) -> usize {
        self.n_subjects + 2 * self.n_relations + self.n_answers
    }

    pub fn subjects(&self) -> Range<usize> {
        0..self.n_subjects
    }

    pub fn relations(&self) -> Range<usize> {
        self.n_subjects..self.n_subjects + self.n_relations
    }

    pub fn answers(&self) -> Range<usize> {
        let start = self.n_subjects + self.n_relations;
        start..start + self.n_answers
    }

    pub fn prompts(&self) -> Range<usize> {
        self.total() - self.n_relations..self.total()
    }

    pub fn subject(&self, k: usize) -> Token {
        debug_assert!(k < self.n_subjects);
        Token(k)
    }

    pub fn relation(&self, k: usize) -> Token {
        debug_assert!(k < self.n_relations);
        Token(self.n_subjects + k)
    }

    pub fn prompt(&self, k: usize) -> Token {
        debug_assert!(k < self.n_relations);
        Token(self.total() - self.n_relations + k)
    }

    pub fn answer(&self, k: usize) -> Token {
        debug_assert!(k < self.n_answers);
        Token(self.n_subjects + self.n_relations + k)
    }

    pub fn check(&self, t: Token) -> Result<()> {
        if t.0 < self.total() {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange {
                token: t.0,
                total: self.total(),
            })
        }
    }

    pub fn kind_of(&self, t: Token) -> Result<TokenKind> {
        self.check(t)?;
        let i = t.0;
        Ok(if i < self.n_subjects {
            TokenKind::Subject
        } else if i < self.n_subjects + self.n_relations {
            TokenKind::Relation
        } else if i < self.n_subjects + self.n_relations + self.n_answers {
            TokenKind::Answer
        } else {
            TokenKind::Prompt
        })
    }

    pub(crate) fn expect(&self, t: Token, expected: TokenKind) -> Result<()> {
        let found = self.kind_of(t)?;
        if found == expected {
            Ok(())
        } else {
            Err(Error::WrongKind {
                token: t.0,
                expected: expected.name(),
                found: found.name(),
            })
        }
    }

    /// Position of a relation token within the relation range.
    pub fn relation_index(&self, r: Token) -> Result<usize> {
        self.expect(r, TokenKind::Relation)?;
        Ok(r.0 - self.n_subjects)
    }

    /// Position of a prompt token within the prompt range.
    pub fn prompt_index(&self, p: Token) -> Result<usize> {
        self.expect(p, TokenKind::Prompt)?;
        Ok(p.0 - self.prompts().start)
    }

    /// The QA prompt token paired with relation `r`; the k-th relation maps
    /// to the k-th prompt.
    pub fn prompt_of(&self, r: Token) -> Result<Token> {
        Ok(self.prompt(self.relation_index(r)?))
    }

    /// Inverse of [`Vocabulary::prompt_of`].
    pub fn relation_of_prompt(&self, p: Token) -> Result<Token> {
        Ok(self.relation(self.prompt_index(p)?))
    }
}
