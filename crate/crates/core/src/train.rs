//! SGD pretraining (batch size 1, streaming) and epoch-based finetuning,
//! with norm monitors and metric traces.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grad::ExampleGrad;
use crate::knowledge::Example;
use crate::matrix::Matrix;
use crate::model::ModelParams;
use crate::vocab::{Token, Vocabulary};

/// Loss above which a run is treated as diverged.
pub const MAX_LOSS: f64 = 50.0;
/// Parameter magnitude above which a run is treated as diverged.
pub const MAX_ENTRY: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Pretraining learning rate.
    pub lr: f64,
    /// Finetuning learning rate.
    pub ft_lr: f64,
    pub pretrain_steps: usize,
    pub ft_epochs: usize,
    /// Finetuning batch size; `None` is full-batch.
    pub ft_batch: Option<usize>,
    pub init_std: f64,
    /// Pretraining steps between trace rows.
    pub eval_every: usize,
    /// Finetuning updates between trace rows.
    pub ft_eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.5,
            ft_lr: 0.5,
            pretrain_steps: 30_000,
            ft_epochs: 2_000,
            ft_batch: None,
            init_std: 0.0,
            eval_every: 1_000,
            ft_eval_every: 50,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::Config {
                key: key.into(),
                message,
            })
        };
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr", format!("must be positive, got {}", self.lr));
        }
        if !(self.ft_lr > 0.0 && self.ft_lr.is_finite()) {
            return bad("ft_lr", format!("must be positive, got {}", self.ft_lr));
        }
        if self.ft_batch == Some(0) {
            return bad("ft_batch", "must be at least 1".into());
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return bad("init_std", format!("must be non-negative, got {}", self.init_std));
        }
        if self.eval_every == 0 {
            return bad("eval_every", "must be at least 1".into());
        }
        if self.ft_eval_every == 0 {
            return bad("ft_eval_every", "must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    /// Mean training loss over the updates since the previous row.
    pub loss: f64,
    pub eval_acc: f64,
    pub mean_subject_att: f64,
    pub mean_relation_att: f64,
    pub mean_salience_ft: f64,
    pub c_v: f64,
    pub c_kq: f64,
    /// Frobenius norm of the key-query change made by this step.
    pub kq_update: f64,
}

/// I.i.d. `N(0, init_std²)` entries in both matrices; `init_std = 0` gives
/// exact zeros.
pub fn init_params(vocab: &Vocabulary, init_std: f64, seed: u64) -> Result<ModelParams> {
    let n = vocab.total();
    if init_std == 0.0 {
        return Ok(ModelParams::zeros(n));
    }
    let normal = Normal::new(0.0, init_std)
        .map_err(|e| Error::InvalidArgument(format!("init_std {init_std}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let value = Matrix::from_fn(n, |_, _| normal.sample(&mut rng));
    let kq = Matrix::from_fn(n, |_, _| normal.sample(&mut rng));
    ModelParams::new(value, kq)
}

/// Occurrence counts from a pretraining stream.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FactCounts {
    pub pair: BTreeMap<(Token, Token), usize>,
    pub subject: BTreeMap<Token, usize>,
}

impl FactCounts {
    pub fn record(&mut self, ex: &Example) {
        *self.pair.entry((ex.first, ex.second)).or_default() += 1;
        *self.subject.entry(ex.first).or_default() += 1;
    }

    pub fn n(&self, s: Token, r: Token) -> usize {
        self.pair.get(&(s, r)).copied().unwrap_or(0)
    }

    pub fn n_tot(&self, s: Token) -> usize {
        self.subject.get(&s).copied().unwrap_or(0)
    }
}

/// State of one fact at a pretraining checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct FactState {
    pub fact: Example,
    pub n: usize,
    pub n_tot: usize,
    pub salience: f64,
}

/// Snapshot used by the salience lower-bound check: counts so far, running
/// maxima of the norm monitors so far, and the salience of every probe fact.
#[derive(Clone, Debug, PartialEq)]
pub struct SalienceCheckpoint {
    pub step: usize,
    pub c_v_max: f64,
    pub c_kq_max: f64,
    pub facts: Vec<FactState>,
}

#[derive(Clone, Debug)]
pub struct PretrainRun {
    pub params: ModelParams,
    pub trace: Vec<TraceRow>,
    pub counts: FactCounts,
    pub checkpoints: Vec<SalienceCheckpoint>,
    pub lr: f64,
    /// Running maxima over the whole trajectory, initial state included.
    pub c_v_max: f64,
    pub c_kq_max: f64,
    /// Frobenius norm of the key-query change at every step, in order.
    pub kq_updates: Vec<f64>,
}

struct Probe<'a> {
    facts: &'a [Example],
}

impl Probe<'_> {
    fn row(&self, p: &ModelParams, step: usize, loss: f64, kq_update: f64) -> Result<TraceRow> {
        let n = self.facts.len().max(1) as f64;
        let mut att = 0.0;
        let mut sal = 0.0;
        for ex in self.facts {
            att += p.attention(ex.first, ex.second).0;
            sal += p.salience(ex.first, ex.target);
        }
        let eval_acc = if self.facts.is_empty() {
            f64::NAN
        } else {
            p.accuracy(self.facts)?
        };
        let mean_att = if self.facts.is_empty() { f64::NAN } else { att / n };
        Ok(TraceRow {
            step,
            loss,
            eval_acc,
            mean_subject_att: mean_att,
            mean_relation_att: 1.0 - mean_att,
            mean_salience_ft: if self.facts.is_empty() { f64::NAN } else { sal / n },
            c_v: p.c_v(),
            c_kq: p.c_kq(),
            kq_update,
        })
    }
}

fn check_step(step: usize, loss: f64, v_max: f64, kq_max: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Diverged {
            step,
            reason: format!("non-finite loss {loss}"),
        });
    }
    if loss > MAX_LOSS {
        return Err(Error::Diverged {
            step,
            reason: format!("loss {loss} exceeds {MAX_LOSS}"),
        });
    }
    if !(v_max <= MAX_ENTRY && kq_max <= MAX_ENTRY) {
        return Err(Error::Diverged {
            step,
            reason: format!("parameter magnitude {} exceeds {MAX_ENTRY}", v_max.max(kq_max)),
        });
    }
    Ok(())
}

fn diverged(step: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(msg) => Error::Diverged { step, reason: msg },
        other => other,
    }
}

/// Sequential SGD over `stream`, one example per step.
///
/// `probe` is the fact set used for trace metrics and salience checkpoints,
/// usually every fact of the knowledge base in pretraining format. A trace
/// row is taken at step 0, every `cfg.eval_every` steps and at the final
/// step; salience checkpoints additionally at every power-of-two step.
pub fn pretrain(mut params: ModelParams, stream: &[Example], cfg: &TrainConfig, probe: &[Example]) -> Result<PretrainRun> {
    cfg.validate()?;
    let probe_set = Probe { facts: probe };
    let mut counts = FactCounts::default();
    let mut c_v_max = params.c_v();
    let mut c_kq_max = params.c_kq();
    let mut trace = vec![probe_set.row(&params, 0, f64::NAN, 0.0)?];
    let checkpoint = |params: &ModelParams, step: usize, counts: &FactCounts, c_v_max: f64, c_kq_max: f64| {
        SalienceCheckpoint {
            step,
            c_v_max,
            c_kq_max,
            facts: probe
                .iter()
                .map(|ex| FactState {
                    fact: *ex,
                    n: counts.n(ex.first, ex.second),
                    n_tot: counts.n_tot(ex.first),
                    salience: params.salience(ex.first, ex.target),
                })
                .collect(),
        }
    };
    let mut checkpoints = vec![checkpoint(&params, 0, &counts, c_v_max, c_kq_max)];

    let mut window_loss = 0.0;
    let mut window_len = 0usize;
    let mut kq_updates = Vec::with_capacity(stream.len());
    for (i, ex) in stream.iter().enumerate() {
        let step = i + 1;
        let g = ExampleGrad::compute(&params, ex).map_err(|e| diverged(step, e))?;
        let kq_update = cfg.lr * (g.kq_first.powi(2) + g.kq_second.powi(2)).sqrt();
        let (v_max, kq_max) = g.apply(&mut params, cfg.lr);
        check_step(step, g.loss, v_max, kq_max)?;
        c_v_max = c_v_max.max(2.0 * v_max);
        c_kq_max = c_kq_max.max(2.0 * kq_max);
        counts.record(ex);
        kq_updates.push(kq_update);
        window_loss += g.loss;
        window_len += 1;
        let last = step == stream.len();
        if step % cfg.eval_every == 0 || last {
            trace.push(probe_set.row(&params, step, window_loss / window_len as f64, kq_update)?);
            window_loss = 0.0;
            window_len = 0;
        }
        if step.is_power_of_two() || step % cfg.eval_every == 0 || last {
            checkpoints.push(checkpoint(&params, step, &counts, c_v_max, c_kq_max));
        }
    }
    Ok(PretrainRun {
        params,
        trace,
        counts,
        checkpoints,
        lr: cfg.lr,
        c_v_max,
        c_kq_max,
        kq_updates,
    })
}

#[derive(Clone, Debug)]
pub struct FinetuneRun {
    pub params: ModelParams,
    pub trace: Vec<TraceRow>,
    /// Frobenius norm of the key-query change at every update, in order.
    pub kq_updates: Vec<f64>,
}

/// Batch SGD on `d_ft` for `cfg.ft_epochs` epochs. Each epoch reshuffles
/// with a generator seeded from `seed`; each batch applies the mean
/// gradient computed at the pre-batch parameters.
pub fn finetune(mut params: ModelParams, d_ft: &[Example], d_eval: &[Example], cfg: &TrainConfig, seed: u64) -> Result<FinetuneRun> {
    cfg.validate()?;
    let probe = Probe { facts: d_eval };
    let ft_probe = Probe { facts: d_ft };
    let row = |p: &ModelParams, step: usize, loss: f64, kq_update: f64| -> Result<TraceRow> {
        let mut r = probe.row(p, step, loss, kq_update)?;
        r.mean_salience_ft = ft_probe.row(p, step, loss, kq_update)?.mean_salience_ft;
        Ok(r)
    };
    let mut trace = vec![row(&params, 0, f64::NAN, 0.0)?];
    let mut kq_updates = Vec::new();
    if d_ft.is_empty() {
        return Ok(FinetuneRun {
            params,
            trace,
            kq_updates,
        });
    }
    let batch = cfg.ft_batch.unwrap_or(d_ft.len()).min(d_ft.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..d_ft.len()).collect();
    let mut step = 0usize;
    let mut window_loss = 0.0;
    let mut window_len = 0usize;
    let total_steps = cfg.ft_epochs * d_ft.len().div_ceil(batch);
    for _ in 0..cfg.ft_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            step += 1;
            let grads = chunk
                .iter()
                .map(|&i| ExampleGrad::compute(&params, &d_ft[i]))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| diverged(step, e))?;
            let scale = cfg.ft_lr / chunk.len() as f64;
            let mut kq_delta: BTreeMap<(usize, usize), f64> = BTreeMap::new();
            let mut loss = 0.0;
            let mut v_max = 0.0f64;
            let mut kq_max = 0.0f64;
            for g in &grads {
                loss += g.loss;
                *kq_delta.entry((g.first.index(), g.second.index())).or_default() += scale * g.kq_first;
                *kq_delta.entry((g.second.index(), g.second.index())).or_default() += scale * g.kq_second;
                let (v, k) = g.apply(&mut params, scale);
                v_max = v_max.max(v);
                kq_max = kq_max.max(k);
            }
            loss /= grads.len() as f64;
            check_step(step, loss, v_max, kq_max)?;
            let kq_update = kq_delta.values().map(|d| d * d).sum::<f64>().sqrt();
            kq_updates.push(kq_update);
            window_loss += loss;
            window_len += 1;
            if step % cfg.ft_eval_every == 0 || step == total_steps {
                trace.push(row(&params, step, window_loss / window_len as f64, kq_update)?);
                window_loss = 0.0;
                window_len = 0;
            }
        }
    }
    Ok(FinetuneRun {
        params,
        trace,
        kq_updates,
    })
}

/// Percentile grid of the accuracy curves: 5, 10, …, 100.
pub const PERCENTILES: [u32; 20] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50, 55, 60, 65, 70, 75, 80, 85, 90, 95, 100];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentilePoint {
    pub percentile: u32,
    /// `None` when no evaluation fact falls in the slice.
    pub accuracy: Option<f64>,
    pub n_facts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PercentileCurve {
    pub points: Vec<PercentilePoint>,
    pub overall: Option<f64>,
}

impl PercentileCurve {
    pub fn at(&self, percentile: u32) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.percentile == percentile)
            .and_then(|p| p.accuracy)
    }
}

/// Number of subjects in the top `percentile`% by popularity.
pub fn top_slice_len(n_subjects: usize, percentile: u32) -> usize {
    (n_subjects * percentile as usize).div_ceil(100)
}

/// Accuracy on evaluation facts whose subject lies in the top x% of all
/// subjects by popularity, for every x on the percentile grid.
pub fn evaluate(p: &ModelParams, d_eval: &[Example], popularity_rank: &[usize]) -> Result<PercentileCurve> {
    let n_subjects = popularity_rank.len();
    let mut scored = Vec::with_capacity(d_eval.len());
    for ex in d_eval {
        let rank = *popularity_rank.get(ex.first.index()).ok_or_else(|| {
            Error::InvalidArgument(format!("no popularity rank for subject {}", ex.first))
        })?;
        scored.push((rank, p.decode(ex.first, ex.second)? == ex.target));
    }
    let points: Vec<PercentilePoint> = PERCENTILES
        .iter()
        .map(|&x| {
            let cutoff = top_slice_len(n_subjects, x);
            let slice: Vec<bool> = scored.iter().filter(|(r, _)| *r < cutoff).map(|&(_, ok)| ok).collect();
            PercentilePoint {
                percentile: x,
                accuracy: (!slice.is_empty())
                    .then(|| slice.iter().filter(|&&ok| ok).count() as f64 / slice.len() as f64),
                n_facts: slice.len(),
            }
        })
        .collect();
    let overall = points.last().and_then(|p| p.accuracy);
    Ok(PercentileCurve { points, overall })
}
