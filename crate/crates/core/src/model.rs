//! One-layer, single-head transformer over one-hot tokens.
//!
//! For the length-two input `(first, second)` the last-position attention is
//! a two-way softmax over `W_KQ[first, second]` and `W_KQ[second, second]`,
//! the pre-softmax output is `att_first * W_V[:, first] + att_second *
//! W_V[:, second]`, and the next-token distribution is its softmax.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::Example;
use crate::matrix::Matrix;
use crate::vocab::{Token, Vocabulary};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Value matrix; column `t` is what token `t` writes to the output.
    pub value: Matrix,
    /// Merged key-query matrix `(W^K)^T W^Q`.
    pub kq: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub att_first: f64,
    pub att_second: f64,
    pub presoftmax: Vec<f64>,
    pub probs: Vec<f64>,
}

/// Two-way softmax of `(x, y)`, returned as `(σ_x, σ_y)`.
#[inline]
pub fn softmax2(x: f64, y: f64) -> (f64, f64) {
    let m = x.max(y);
    let ex = (x - m).exp();
    let ey = (y - m).exp();
    let z = ex + ey;
    (ex / z, ey / z)
}

/// Max-subtracted softmax.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = out.iter().sum();
    out.iter_mut().for_each(|v| *v /= z);
    out
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate().skip(1) {
        if v > x[best] {
            best = i;
        }
    }
    best
}

impl ModelParams {
    pub fn zeros(side: usize) -> Self {
        ModelParams {
            value: Matrix::zeros(side),
            kq: Matrix::zeros(side),
        }
    }

    pub fn new(value: Matrix, kq: Matrix) -> Result<Self> {
        if value.side() != kq.side() {
            return Err(Error::InvalidArgument(format!(
                "value side {} != key-query side {}",
                value.side(),
                kq.side()
            )));
        }
        if !value.is_finite() || !kq.is_finite() {
            return Err(Error::NonFinite("model parameters".into()));
        }
        Ok(ModelParams { value, kq })
    }

    pub fn side(&self) -> usize {
        self.value.side()
    }

    fn check_token(&self, t: Token) -> Result<()> {
        if t.index() < self.side() {
            Ok(())
        } else {
            Err(Error::TokenOutOfRange {
                token: t.index(),
                total: self.side(),
            })
        }
    }

    /// Attention of the last position on `(first, second)`.
    pub fn attention(&self, first: Token, second: Token) -> (f64, f64) {
        softmax2(
            self.kq.get(first.index(), second.index()),
            self.kq.get(second.index(), second.index()),
        )
    }

    /// Attention weights and pre-softmax output. Only the entries that feed
    /// this input are checked for finiteness.
    pub fn presoftmax(&self, first: Token, second: Token) -> Result<(f64, f64, Vec<f64>)> {
        self.check_token(first)?;
        self.check_token(second)?;
        let (a1, a2) = self.attention(first, second);
        if !(a1.is_finite() && a2.is_finite()) {
            return Err(Error::NonFinite(format!(
                "attention logits for ({first}, {second})"
            )));
        }
        let c1 = self.value.col(first.index());
        let c2 = self.value.col(second.index());
        let z: Vec<f64> = c1.iter().zip(c2).map(|(x, y)| a1 * x + a2 * y).collect();
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "value columns for ({first}, {second})"
            )));
        }
        Ok((a1, a2, z))
    }

    pub fn forward(&self, first: Token, second: Token) -> Result<ForwardTrace> {
        let (att_first, att_second, presoftmax) = self.presoftmax(first, second)?;
        let probs = softmax(&presoftmax);
        Ok(ForwardTrace {
            att_first,
            att_second,
            presoftmax,
            probs,
        })
    }

    /// Argmax decoding over the pre-softmax output.
    pub fn decode(&self, first: Token, second: Token) -> Result<Token> {
        let (_, _, z) = self.presoftmax(first, second)?;
        Ok(Token(argmax(&z)))
    }

    /// Fact salience `W_V[a, s]`.
    pub fn salience(&self, s: Token, a: Token) -> f64 {
        self.value.get(a.index(), s.index())
    }

    /// `(e_target - f)^T W_V[:, column]` with `f` the forward distribution
    /// on the example.
    fn relevance(&self, ex: &Example, column: Token) -> Result<f64> {
        let trace = self.forward(ex.first, ex.second)?;
        self.check_token(ex.target)?;
        let col = self.value.col(column.index());
        let mut acc = col[ex.target.index()];
        for (p, v) in trace.probs.iter().zip(col) {
            acc -= p * v;
        }
        Ok(acc)
    }

    /// Subject token relevance of a downstream example.
    pub fn subject_relevance(&self, ex: &Example) -> Result<f64> {
        self.relevance(ex, ex.first)
    }

    /// Relation (prompt) token relevance of a downstream example.
    pub fn relation_relevance(&self, ex: &Example) -> Result<f64> {
        self.relevance(ex, ex.second)
    }

    /// Attention on the subject when prompting with `(s, prompt)`.
    pub fn attention_on_subject(&self, s: Token, prompt: Token) -> f64 {
        self.attention(s, prompt).0
    }

    /// Entrywise max-abs of the value matrix, doubled.
    pub fn c_v(&self) -> f64 {
        2.0 * self.value.max_abs()
    }

    /// Entrywise max-abs of the key-query matrix, doubled.
    pub fn c_kq(&self) -> f64 {
        2.0 * self.kq.max_abs()
    }

    /// Fraction of examples whose decoded token equals the target.
    pub fn accuracy(&self, examples: &[Example]) -> Result<f64> {
        if examples.is_empty() {
            return Ok(f64::NAN);
        }
        let mut hits = 0usize;
        for ex in examples {
            if self.decode(ex.first, ex.second)? == ex.target {
                hits += 1;
            }
        }
        Ok(hits as f64 / examples.len() as f64)
    }

    /// Binary dump: the ASCII line `factlab-params v1 side=<n>\n`, then the
    /// value matrix and the key-query matrix, each column-major as
    /// little-endian f64.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "factlab-params v1 side={}", self.side())?;
        for m in [&self.value, &self.kq] {
            for x in m.as_col_major() {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            r.read_exact(&mut byte)
                .map_err(|e| Error::Parse(format!("params header: {e}")))?;
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
            if header.len() > 64 {
                return Err(Error::Parse("params header too long".into()));
            }
        }
        let header = String::from_utf8(header).map_err(|e| Error::Parse(e.to_string()))?;
        let side: usize = header
            .strip_prefix("factlab-params v1 side=")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad params header: {header}")))?;
        let mut read_matrix = || -> Result<Matrix> {
            let mut buf = vec![0u8; side * side * 8];
            r.read_exact(&mut buf)
                .map_err(|e| Error::Parse(format!("params body: {e}")))?;
            let data = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            Ok(Matrix::from_col_major(side, data))
        };
        let value = read_matrix()?;
        let kq = read_matrix()?;
        ModelParams::new(value, kq)
    }

    pub fn for_vocab(vocab: &Vocabulary) -> Self {
        ModelParams::zeros(vocab.total())
    }
}
