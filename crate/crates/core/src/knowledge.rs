//! Ground-truth knowledge bases, the Zipfian pretraining stream and the
//! popularity-based finetuning splits.

use std::io::{BufRead, Write};
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vocab::{Token, TokenKind, Vocabulary};

/// Which formatting function rendered an example.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    /// `(s, r, a)`
    Pre,
    /// `(s, p_r, a)`
    Down,
}

impl Format {
    pub fn as_str(self) -> &'static str {
        match self {
            Format::Pre => "pre",
            Format::Down => "down",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub first: Token,
    pub second: Token,
    pub target: Token,
}

impl Example {
    pub fn new(first: Token, second: Token, target: Token) -> Self {
        Example {
            first,
            second,
            target,
        }
    }

    pub fn subject(&self) -> Token {
        self.first
    }
}

/// Map `(s, r) -> a` with one disjoint answer pool per relation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeBase {
    vocab: Vocabulary,
    /// Indexed by `subject * n_relations + relation_index`.
    answers: Vec<Token>,
}

impl KnowledgeBase {
    /// Builds a knowledge base from an explicit answer table. Each answer
    /// must lie in its relation's pool.
    pub fn from_answers(vocab: Vocabulary, answers: Vec<Token>) -> Result<Self> {
        if answers.len() != vocab.n_subjects() * vocab.n_relations() {
            return Err(Error::InvalidArgument(format!(
                "expected {} answers, got {}",
                vocab.n_subjects() * vocab.n_relations(),
                answers.len()
            )));
        }
        let kb = KnowledgeBase { vocab, answers };
        for (i, a) in kb.answers.iter().enumerate() {
            let k = i % vocab.n_relations();
            if !kb.pool_range(k).contains(&a.index()) {
                return Err(Error::InvalidArgument(format!(
                    "answer {a} for fact {i} is outside the pool of relation {k}"
                )));
            }
        }
        Ok(kb)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    /// Token range of the answer pool of the k-th relation.
    pub fn pool_range(&self, k: usize) -> Range<usize> {
        let size = self.vocab.pool_size();
        let start = self.vocab.answers().start + k * size;
        start..start + size
    }

    /// Answer pool of relation token `r`.
    pub fn pool(&self, r: Token) -> Result<Range<usize>> {
        Ok(self.pool_range(self.vocab.relation_index(r)?))
    }

    pub fn answer(&self, subject: usize, k: usize) -> Token {
        self.answers[subject * self.vocab.n_relations() + k]
    }

    pub fn answer_of(&self, s: Token, r: Token) -> Result<Token> {
        self.vocab.expect(s, TokenKind::Subject)?;
        let k = self.vocab.relation_index(r)?;
        Ok(self.answer(s.index(), k))
    }

    /// All facts as `(s, r, a)` triples, subject-major.
    pub fn facts(&self) -> impl Iterator<Item = (Token, Token, Token)> + '_ {
        let v = self.vocab;
        (0..v.n_subjects()).flat_map(move |s| {
            (0..v.n_relations()).map(move |k| (v.subject(s), v.relation(k), self.answer(s, k)))
        })
    }

    pub fn pretrain_examples(&self) -> Vec<Example> {
        self.facts().map(|(s, r, a)| Example::new(s, r, a)).collect()
    }

    pub fn downstream_examples(&self) -> Vec<Example> {
        (0..self.vocab.n_subjects())
            .flat_map(|s| self.subject_downstream(s))
            .collect()
    }

    /// Downstream-format facts of one subject.
    pub fn subject_downstream(&self, subject: usize) -> impl Iterator<Item = Example> + '_ {
        let v = self.vocab;
        (0..v.n_relations())
            .map(move |k| Example::new(v.subject(subject), v.prompt(k), self.answer(subject, k)))
    }

    /// Answer for an example in either format, or `None` when the pair is
    /// not a fact of this base.
    pub fn expected(&self, first: Token, second: Token) -> Option<Token> {
        let v = &self.vocab;
        if v.kind_of(first).ok()? != TokenKind::Subject {
            return None;
        }
        let k = match v.kind_of(second).ok()? {
            TokenKind::Relation => v.relation_index(second).ok()?,
            TokenKind::Prompt => v.prompt_index(second).ok()?,
            _ => return None,
        };
        Some(self.answer(first.index(), k))
    }

    /// How many subjects map to each answer of pool `k`, in pool order.
    pub fn answer_counts(&self, k: usize) -> Vec<usize> {
        let pool = self.pool_range(k);
        let mut counts = vec![0; pool.len()];
        for s in 0..self.vocab.n_subjects() {
            counts[self.answer(s, k).index() - pool.start] += 1;
        }
        counts
    }
}

/// Draws one answer per `(s, r)` uniformly from the relation's pool.
pub fn build_kb(vocab: Vocabulary, seed: u64) -> KnowledgeBase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let size = vocab.pool_size();
    let mut answers = Vec::with_capacity(vocab.n_subjects() * vocab.n_relations());
    for _ in 0..vocab.n_subjects() {
        for k in 0..vocab.n_relations() {
            let offset = rng.random_range(0..size);
            answers.push(vocab.answer(k * size + offset));
        }
    }
    KnowledgeBase { vocab, answers }
}

/// Zipf distribution over `[0, n)` with `P(i) ∝ (i + 1)^(-alpha)`.
#[derive(Clone, Debug)]
pub struct ZipfDist {
    alpha: f64,
    cdf: Vec<f64>,
}

impl ZipfDist {
    pub fn new(alpha: f64, n: usize) -> Result<Self> {
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "zipf exponent must be finite and non-negative, got {alpha}"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidArgument("zipf support must be non-empty".into()));
        }
        let weights: Vec<f64> = (0..n).map(|i| ((i + 1) as f64).powf(-alpha)).collect();
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let mut cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w;
                acc / total
            })
            .collect();
        cdf[n - 1] = 1.0;
        Ok(ZipfDist { alpha, cdf })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.cdf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cdf.is_empty()
    }

    pub fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    pub fn pmf(&self, i: usize) -> f64 {
        if i == 0 {
            self.cdf[0]
        } else {
            self.cdf[i] - self.cdf[i - 1]
        }
    }

    /// Inverse-CDF lookup for `u` in `[0, 1)`.
    pub fn sample(&self, u: f64) -> usize {
        self.cdf
            .partition_point(|&c| c <= u)
            .min(self.cdf.len() - 1)
    }
}

/// I.i.d. pretraining examples in `(s, r, a)` form with `s ~ Zipf(alpha)`
/// and `r` uniform.
pub fn pretrain_stream(kb: &KnowledgeBase, alpha: f64, steps: usize, seed: u64) -> Result<Vec<Example>> {
    let v = kb.vocab();
    let zipf = ZipfDist::new(alpha, v.n_subjects())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..steps)
        .map(|_| {
            let s = zipf.sample(rng.random::<f64>());
            let k = rng.random_range(0..v.n_relations());
            Example::new(v.subject(s), v.relation(k), kb.answer(s, k))
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SplitStrategy {
    Top,
    Bottom,
    Random,
    Whole,
}

impl SplitStrategy {
    pub const ALL: [SplitStrategy; 4] = [
        SplitStrategy::Top,
        SplitStrategy::Bottom,
        SplitStrategy::Random,
        SplitStrategy::Whole,
    ];

    pub fn label(self) -> &'static str {
        match self {
            SplitStrategy::Top => "FT-Top",
            SplitStrategy::Bottom => "FT-Bottom",
            SplitStrategy::Random => "FT-Random",
            SplitStrategy::Whole => "FT-Whole",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().trim_start_matches("ft-") {
            "top" => Some(SplitStrategy::Top),
            "bottom" => Some(SplitStrategy::Bottom),
            "random" => Some(SplitStrategy::Random),
            "whole" => Some(SplitStrategy::Whole),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitSpec {
    pub strategy: SplitStrategy,
    /// Share of the non-held-out subjects used for finetuning.
    pub fraction: f64,
    /// Share of subjects held out for evaluation.
    pub eval_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            strategy: SplitStrategy::Top,
            fraction: 0.5,
            eval_fraction: 0.2,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "split fraction must lie in (0, 1], got {}",
                self.fraction
            )));
        }
        if !(self.eval_fraction > 0.0 && self.eval_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "eval fraction must lie in (0, 1), got {}",
                self.eval_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Downstream {
    pub ft: Vec<Example>,
    pub eval: Vec<Example>,
    /// `popularity_rank[s]` is the Zipf rank of subject `s`; 0 is the most popular.
    pub popularity_rank: Vec<usize>,
    pub ft_subjects: Vec<usize>,
    pub eval_subjects: Vec<usize>,
}

/// Subjects ordered from most to least popular under `Zipf(alpha)`.
pub fn popularity_order(n_subjects: usize, alpha: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_subjects).collect();
    let weight = |s: usize| ((s + 1) as f64).powf(-alpha);
    order.sort_by(|&a, &b| weight(b).total_cmp(&weight(a)).then(a.cmp(&b)));
    order
}

/// Held-out subjects, one drawn uniformly from each of `m` contiguous rank
/// strata, so every popularity band contributes in proportion to its size.
fn stratified_holdout(ranked: &[usize], eval_fraction: f64, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = ranked.len();
    let m = ((n as f64 * eval_fraction).round() as usize).clamp(1, n - 1);
    (0..m)
        .map(|i| {
            let lo = i * n / m;
            let hi = (i + 1) * n / m;
            ranked[lo + rng.random_range(0..hi - lo)]
        })
        .collect()
}

/// Renders every fact in `(s, p_r, a)` form and splits subjects into a
/// popularity-stratified evaluation holdout and a finetuning set chosen by
/// `spec.strategy`.
pub fn downstream_datasets(kb: &KnowledgeBase, alpha: f64, spec: &SplitSpec, seed: u64) -> Result<Downstream> {
    spec.validate()?;
    let v = kb.vocab();
    if v.n_subjects() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two subjects to hold out an evaluation set".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ranked = popularity_order(v.n_subjects(), alpha);
    let mut popularity_rank = vec![0; v.n_subjects()];
    for (rank, &s) in ranked.iter().enumerate() {
        popularity_rank[s] = rank;
    }

    let eval_subjects = stratified_holdout(&ranked, spec.eval_fraction, &mut rng);
    let remaining: Vec<usize> = ranked
        .iter()
        .copied()
        .filter(|s| !eval_subjects.contains(s))
        .collect();
    let k = ((remaining.len() as f64 * spec.fraction).round() as usize).clamp(1, remaining.len());
    let ft_subjects: Vec<usize> = match spec.strategy {
        SplitStrategy::Top => remaining[..k].to_vec(),
        SplitStrategy::Bottom => remaining[remaining.len() - k..].to_vec(),
        SplitStrategy::Whole => remaining.clone(),
        SplitStrategy::Random => {
            let mut picked = remaining.clone();
            picked.shuffle(&mut rng);
            picked.truncate(k);
            picked.sort_by_key(|&s| popularity_rank[s]);
            picked
        }
    };

    let render = |subjects: &[usize]| -> Vec<Example> {
        subjects.iter().flat_map(|&s| kb.subject_downstream(s)).collect()
    };
    Ok(Downstream {
        ft: render(&ft_subjects),
        eval: render(&eval_subjects),
        popularity_rank,
        ft_subjects,
        eval_subjects,
    })
}

const DATASET_MAGIC: &str = "# factlab-dataset v1";

/// Writes examples as `first<TAB>second<TAB>target` lines under a header
/// recording the vocabulary sizes and the format.
pub fn write_dataset<W: Write>(mut w: W, vocab: &Vocabulary, format: Format, examples: &[Example]) -> std::io::Result<()> {
    writeln!(
        w,
        "{DATASET_MAGIC} subjects={} relations={} answers={} format={}",
        vocab.n_subjects(),
        vocab.n_relations(),
        vocab.n_answers(),
        format.as_str()
    )?;
    for ex in examples {
        writeln!(w, "{}\t{}\t{}", ex.first, ex.second, ex.target)?;
    }
    Ok(())
}

pub fn read_dataset<R: BufRead>(r: R) -> Result<(Vocabulary, Format, Vec<Example>)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty dataset".into()))?
        .map_err(|e| Error::Parse(e.to_string()))?;
    let rest = header
        .strip_prefix(DATASET_MAGIC)
        .ok_or_else(|| Error::Parse(format!("bad dataset header: {header}")))?;
    let mut sizes = [None; 3];
    let mut format = None;
    for field in rest.split_whitespace() {
        let (key, value) = field
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("bad header field: {field}")))?;
        let slot = match key {
            "subjects" => 0,
            "relations" => 1,
            "answers" => 2,
            "format" => {
                format = match value {
                    "pre" => Some(Format::Pre),
                    "down" => Some(Format::Down),
                    _ => return Err(Error::Parse(format!("unknown format: {value}"))),
                };
                continue;
            }
            _ => return Err(Error::Parse(format!("unknown header key: {key}"))),
        };
        sizes[slot] = Some(
            value
                .parse::<usize>()
                .map_err(|_| Error::Parse(format!("bad size for {key}: {value}")))?,
        );
    }
    let [Some(s), Some(r), Some(a)] = sizes else {
        return Err(Error::Parse("header is missing vocabulary sizes".into()));
    };
    let format = format.ok_or_else(|| Error::Parse("header is missing format".into()))?;
    let vocab = Vocabulary::new(s, r, a)?;
    let mut examples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| Error::Parse(e.to_string()))?;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse(format!("line {}: expected 3 fields", i + 2)));
        }
        let mut toks = [Token(0); 3];
        for (slot, f) in toks.iter_mut().zip(&fields) {
            let t = Token(
                f.parse::<usize>()
                    .map_err(|_| Error::Parse(format!("line {}: bad token {f}", i + 2)))?,
            );
            vocab.check(t)?;
            *slot = t;
        }
        examples.push(Example::new(toks[0], toks[1], toks[2]));
    }
    Ok((vocab, format, examples))
}
