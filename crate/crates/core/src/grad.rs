//! Cross-entropy loss, exact gradients and a finite-difference oracle.
//!
//! With `δ = probs − e_target` the loss gradient is
//!
//! * `∂L/∂W_V[:, t] = Att_t · δ` for each input token `t`,
//! * `∂L/∂W_KQ[first, second] = −(s_rel − p_rel) · Att_first · Att_second`,
//! * `∂L/∂W_KQ[second, second] = +(s_rel − p_rel) · Att_first · Att_second`,
//!
//! and every other entry is zero. The product `Att_first · Att_second` is the
//! Jacobian of the two-way softmax.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::knowledge::Example;
use crate::matrix::Matrix;
use crate::model::{ForwardTrace, ModelParams};
use crate::vocab::Token;

/// Dense gradients with respect to both parameter matrices.
#[derive(Clone, Debug, PartialEq)]
pub struct GradPair {
    pub value: Matrix,
    pub kq: Matrix,
}

impl GradPair {
    pub fn zeros(side: usize) -> Self {
        GradPair {
            value: Matrix::zeros(side),
            kq: Matrix::zeros(side),
        }
    }
}

/// `−log probs[target]`, evaluated as `logsumexp(z) − z[target]` so that it
/// stays finite and accurate when the target probability underflows.
pub fn ce_loss(trace: &ForwardTrace, target: Token) -> Result<f64> {
    let z = &trace.presoftmax;
    let t = target.index();
    if t >= z.len() {
        return Err(Error::TokenOutOfRange {
            token: t,
            total: z.len(),
        });
    }
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    Ok(lse - z[t])
}

/// Sparse gradient of one example, plus the quantities it was built from.
#[derive(Clone, Debug)]
pub struct ExampleGrad {
    pub first: Token,
    pub second: Token,
    pub loss: f64,
    pub att_first: f64,
    pub att_second: f64,
    pub s_rel: f64,
    pub p_rel: f64,
    /// `∂L/∂W_V[:, first]`
    pub value_first: Vec<f64>,
    /// `∂L/∂W_V[:, second]`
    pub value_second: Vec<f64>,
    /// `∂L/∂W_KQ[first, second]`
    pub kq_first: f64,
    /// `∂L/∂W_KQ[second, second]`
    pub kq_second: f64,
}

impl ExampleGrad {
    pub fn compute(p: &ModelParams, ex: &Example) -> Result<Self> {
        let trace = p.forward(ex.first, ex.second)?;
        let loss = ce_loss(&trace, ex.target)?;
        let mut delta = trace.probs;
        delta[ex.target.index()] -= 1.0;

        let dot = |col: &[f64]| -> f64 { -col.iter().zip(&delta).map(|(v, d)| v * d).sum::<f64>() };
        let s_rel = dot(p.value.col(ex.first.index()));
        let p_rel = dot(p.value.col(ex.second.index()));

        let (a1, a2) = (trace.att_first, trace.att_second);
        let jac = a1 * a2;
        let g = ExampleGrad {
            first: ex.first,
            second: ex.second,
            loss,
            att_first: a1,
            att_second: a2,
            s_rel,
            p_rel,
            value_first: delta.iter().map(|d| a1 * d).collect(),
            value_second: delta.iter().map(|d| a2 * d).collect(),
            kq_first: -(s_rel - p_rel) * jac,
            kq_second: (s_rel - p_rel) * jac,
        };
        if !(g.loss.is_finite() && g.kq_first.is_finite() && g.s_rel.is_finite() && g.p_rel.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient on ({}, {}) -> {}",
                ex.first, ex.second, ex.target
            )));
        }
        Ok(g)
    }

    /// Adds `scale * grad` into `acc`.
    pub fn accumulate(&self, acc: &mut GradPair, scale: f64) {
        let (f, s) = (self.first.index(), self.second.index());
        for (x, g) in acc.value.col_mut(f).iter_mut().zip(&self.value_first) {
            *x += scale * g;
        }
        for (x, g) in acc.value.col_mut(s).iter_mut().zip(&self.value_second) {
            *x += scale * g;
        }
        acc.kq.add_at(f, s, scale * self.kq_first);
        acc.kq.add_at(s, s, scale * self.kq_second);
    }

    /// `p ← p − lr · grad`. Returns the largest absolute value among the
    /// value and key-query entries touched, in that order.
    pub fn apply(&self, p: &mut ModelParams, lr: f64) -> (f64, f64) {
        let (f, s) = (self.first.index(), self.second.index());
        let mut v_max = 0.0f64;
        for (x, g) in p.value.col_mut(f).iter_mut().zip(&self.value_first) {
            *x -= lr * g;
        }
        for (x, g) in p.value.col_mut(s).iter_mut().zip(&self.value_second) {
            *x -= lr * g;
        }
        for col in [f, s] {
            v_max = p.value.col(col).iter().fold(v_max, |m, x| m.max(x.abs()));
        }
        p.kq.add_at(f, s, -lr * self.kq_first);
        p.kq.add_at(s, s, -lr * self.kq_second);
        let kq_max = p.kq.get(f, s).abs().max(p.kq.get(s, s).abs());
        (v_max, kq_max)
    }

    pub fn to_dense(&self, side: usize) -> GradPair {
        let mut g = GradPair::zeros(side);
        self.accumulate(&mut g, 1.0);
        g
    }
}

/// Exact gradient of the cross-entropy loss on one example.
pub fn grad_analytic(p: &ModelParams, ex: &Example) -> Result<GradPair> {
    Ok(ExampleGrad::compute(p, ex)?.to_dense(p.side()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Which {
    Value,
    Kq,
}

#[derive(Clone, Debug)]
pub struct FdGradient {
    /// Central differences on the sparsity support; zero elsewhere.
    pub grad: GradPair,
    /// Central differences at randomly chosen entries outside the support.
    pub off_support: Vec<(Which, usize, usize, f64)>,
}

/// Cross-entropy loss of `p` on one example.
pub fn loss_at(p: &ModelParams, ex: &Example) -> Result<f64> {
    ce_loss(&p.forward(ex.first, ex.second)?, ex.target)
}

fn central_difference(p: &mut ModelParams, ex: &Example, which: Which, row: usize, col: usize, h: f64) -> Result<f64> {
    let m = match which {
        Which::Value => &mut p.value,
        Which::Kq => &mut p.kq,
    };
    let orig = m.get(row, col);
    m.set(row, col, orig + h);
    let up = loss_at(p, ex);
    let m = match which {
        Which::Value => &mut p.value,
        Which::Kq => &mut p.kq,
    };
    m.set(row, col, orig - h);
    let down = loss_at(p, ex);
    let m = match which {
        Which::Value => &mut p.value,
        Which::Kq => &mut p.kq,
    };
    m.set(row, col, orig);
    Ok((up? - down?) / (2.0 * h))
}

/// Number of off-support entries probed by [`grad_fd`].
pub const FD_OFF_SUPPORT_SAMPLES: usize = 8;

/// Central-difference gradient over the structural support (both input
/// columns of `W_V`, entries `(first, second)` and `(second, second)` of
/// `W_KQ`) plus [`FD_OFF_SUPPORT_SAMPLES`] random entries outside it.
pub fn grad_fd(p: &ModelParams, ex: &Example, h: f64, seed: u64) -> Result<FdGradient> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {h}")));
    }
    let n = p.side();
    let (f, s) = (ex.first.index(), ex.second.index());
    let mut work = p.clone();
    let mut grad = GradPair::zeros(n);
    for col in [f, s] {
        for row in 0..n {
            let g = central_difference(&mut work, ex, Which::Value, row, col, h)?;
            grad.value.set(row, col, g);
        }
    }
    for (row, col) in [(f, s), (s, s)] {
        let g = central_difference(&mut work, ex, Which::Kq, row, col, h)?;
        grad.kq.set(row, col, g);
    }

    let in_support = |which: Which, row: usize, col: usize| match which {
        Which::Value => col == f || col == s,
        Which::Kq => col == s && (row == f || row == s),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut off_support = Vec::with_capacity(FD_OFF_SUPPORT_SAMPLES);
    while off_support.len() < FD_OFF_SUPPORT_SAMPLES {
        let which = if rng.random_bool(0.5) { Which::Value } else { Which::Kq };
        let (row, col) = (rng.random_range(0..n), rng.random_range(0..n));
        if in_support(which, row, col) {
            continue;
        }
        let g = central_difference(&mut work, ex, which, row, col, h)?;
        off_support.push((which, row, col, g));
    }
    Ok(FdGradient { grad, off_support })
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Largest relative error between an analytic and a finite-difference
/// gradient over the finite-difference support.
pub fn max_relative_error(analytic: &GradPair, fd: &GradPair, ex: &Example, floor: f64) -> f64 {
    let n = analytic.value.side();
    let (f, s) = (ex.first.index(), ex.second.index());
    let mut worst = 0.0f64;
    for col in [f, s] {
        for row in 0..n {
            worst = worst.max(relative_error(analytic.value.get(row, col), fd.value.get(row, col), floor));
        }
    }
    for (row, col) in [(f, s), (s, s)] {
        worst = worst.max(relative_error(analytic.kq.get(row, col), fd.kq.get(row, col), floor));
    }
    worst
}
