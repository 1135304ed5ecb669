//! Experiment runners. Every experiment is a grid of isolated cells keyed by
//! `(sweep point, seed)`; cells run in parallel and are reduced in grid order.

use rayon::prelude::*;

use crate::error::Result;
use crate::harness::config::{Experiment, RunConfig};
use crate::harness::report::{aggregate, PercentileRow, RunReport, SummaryRow, TraceRecord};
use crate::knowledge::{build_kb, downstream_datasets, pretrain_stream, KnowledgeBase, SplitSpec};
use crate::model::ModelParams;
use crate::train::{evaluate, finetune, init_params, pretrain, TraceRow, TrainConfig};
use crate::verify::{self, check_salience_bound, TheoremVerdict};
use crate::vocab::Vocabulary;

/// Derives an independent stream seed from a run seed and a purpose tag
/// (splitmix64 finalizer over the combined words).
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut h = seed ^ 0x9e37_79b9_7f4a_7c15;
    for b in tag.bytes() {
        h = h.wrapping_add(b as u64).wrapping_mul(0x100_0000_01b3);
    }
    let mut z = h.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn run_id(experiment: Experiment, alpha: f64, steps: usize, leaf: &str) -> String {
    format!("{experiment}/alpha={alpha}/steps={steps}/{leaf}")
}

/// Pretrained state at one budget.
#[derive(Clone, Debug)]
pub struct Pretrained {
    pub steps: usize,
    pub params: ModelParams,
    pub trace: Vec<TraceRow>,
    pub kq_updates: Vec<f64>,
    pub c_v_max: f64,
    pub c_kq_max: f64,
    pub accuracy: f64,
    /// Salience bound verdict, present for single-budget zero-init runs.
    pub salience: Option<TheoremVerdict>,
}

/// Pretrains along one stream and snapshots the model at each budget in
/// `budgets` (ascending). Later budgets continue the same stream, so every
/// budget sees a prefix of the longest one.
pub fn pretrain_budgets(kb: &KnowledgeBase, alpha: f64, train: &TrainConfig, seed: u64, budgets: &[usize]) -> Result<Vec<Pretrained>> {
    let vocab = kb.vocab();
    let max = budgets.iter().copied().max().unwrap_or(0);
    let stream = pretrain_stream(kb, alpha, max, derive_seed(seed, "stream"))?;
    let probe = kb.pretrain_examples();
    let mut params = init_params(vocab, train.init_std, derive_seed(seed, "init"))?;
    let mut trace: Vec<TraceRow> = Vec::new();
    let mut kq_updates = Vec::new();
    let mut c_v_max = params.c_v();
    let mut c_kq_max = params.c_kq();
    let mut done = 0usize;
    let mut out = Vec::with_capacity(budgets.len());
    for &budget in budgets {
        let run = pretrain(params, &stream[done..budget], train, &probe)?;
        let skip = usize::from(!trace.is_empty());
        trace.extend(run.trace.iter().skip(skip).map(|r| TraceRow {
            step: r.step + done,
            ..r.clone()
        }));
        kq_updates.extend_from_slice(&run.kq_updates);
        c_v_max = c_v_max.max(run.c_v_max);
        c_kq_max = c_kq_max.max(run.c_kq_max);
        let salience = (budgets.len() == 1).then(|| check_salience_bound(&run));
        params = run.params;
        done = budget;
        out.push(Pretrained {
            steps: budget,
            params: params.clone(),
            trace: trace.clone(),
            kq_updates: kq_updates.clone(),
            c_v_max,
            c_kq_max,
            accuracy: params.accuracy(&probe)?,
            salience,
        });
    }
    Ok(out)
}

pub fn trace_records(id: &str, seed: u64, rows: &[TraceRow]) -> Vec<TraceRecord> {
    rows.iter()
        .map(|r| TraceRecord {
            run_id: id.to_string(),
            seed,
            step: r.step,
            loss: r.loss,
            eval_acc: r.eval_acc,
            subj_att: r.mean_subject_att,
            rel_att: r.mean_relation_att,
            c_v: r.c_v,
            c_kq: r.c_kq,
            kq_update: r.kq_update,
        })
        .collect()
}

fn update_summary(id: &str, seed: u64, updates: &[f64], out: &mut Vec<SummaryRow>) {
    let first10 = updates.iter().take(10).copied().fold(0.0, f64::max);
    let peak = updates.iter().copied().fold(0.0, f64::max);
    for (metric, value) in [("kq_update_first10_max", first10), ("kq_update_peak", peak)] {
        out.push(SummaryRow {
            run_id: id.to_string(),
            seed,
            metric: metric.into(),
            value,
        });
    }
}

/// Output of one cell before reduction.
#[derive(Debug, Default)]
struct CellOutput {
    percentiles: Vec<PercentileRow>,
    traces: Vec<TraceRecord>,
    summary: Vec<SummaryRow>,
    verdicts: Vec<TheoremVerdict>,
}

/// One pretraining trajectory of one seed, finetuned on every strategy at
/// every budget.
fn run_cell(cfg: &RunConfig, vocab: Vocabulary, alpha: f64, budgets: &[usize], seed: u64) -> Result<CellOutput> {
    let kb = build_kb(vocab, derive_seed(seed, "kb"));
    let mut out = CellOutput::default();
    for pre in pretrain_budgets(&kb, alpha, &cfg.train, seed, budgets)? {
        let pre_id = run_id(cfg.experiment, alpha, pre.steps, "pretrain");
        out.traces.extend(trace_records(&pre_id, seed, &pre.trace));
        for (metric, value) in [
            ("pretrain_accuracy", pre.accuracy),
            ("c_v_max", pre.c_v_max),
            ("c_kq_max", pre.c_kq_max),
        ] {
            out.summary.push(SummaryRow {
                run_id: pre_id.clone(),
                seed,
                metric: metric.into(),
                value,
            });
        }
        update_summary(&pre_id, seed, &pre.kq_updates, &mut out.summary);
        if let Some(v) = pre.salience.filter(|_| cfg.experiment == Experiment::E1 && cfg.train.init_std == 0.0) {
            out.verdicts.push(v);
        }

        for &strategy in &cfg.strategies {
            let id = run_id(cfg.experiment, alpha, pre.steps, strategy.label());
            let spec = SplitSpec { strategy, ..cfg.split };
            let data = downstream_datasets(&kb, alpha, &spec, derive_seed(seed, "split"))?;
            let ft = finetune(pre.params.clone(), &data.ft, &data.eval, &cfg.train, derive_seed(seed, "finetune"))?;
            let curve = evaluate(&ft.params, &data.eval, &data.popularity_rank)?;
            out.percentiles.extend(curve.points.iter().map(|p| PercentileRow {
                run_id: id.clone(),
                seed,
                experiment: cfg.experiment.to_string(),
                alpha,
                pretrain_steps: pre.steps,
                strategy: strategy.label().into(),
                percentile: p.percentile,
                accuracy: p.accuracy,
            }));
            let last = ft.trace.last().expect("finetune trace is never empty");
            let peak = ft.trace.iter().map(|r| r.eval_acc).fold(f64::NEG_INFINITY, f64::max);
            for (metric, value) in [
                ("final_accuracy", last.eval_acc),
                ("peak_accuracy", peak),
                ("final_subject_attention", last.mean_subject_att),
                ("final_relation_attention", last.mean_relation_att),
            ] {
                out.summary.push(SummaryRow {
                    run_id: id.clone(),
                    seed,
                    metric: metric.into(),
                    value,
                });
            }
            update_summary(&id, seed, &ft.kq_updates, &mut out.summary);
            out.traces.extend(trace_records(&id, seed, &ft.trace));
        }
    }
    Ok(out)
}

fn reduce(cfg: &RunConfig, cells: Vec<CellOutput>) -> RunReport {
    let mut report = RunReport::new(cfg.clone());
    for c in cells {
        report.percentiles.extend(c.percentiles);
        report.traces.extend(c.traces);
        report.summary.extend(c.summary);
        report.verdicts.extend(c.verdicts);
    }
    report.aggregates = aggregate(&report.percentiles);
    report
}

/// Runs the `(sweep point, seed)` grid of a finetuning experiment.
fn sweep(cfg: &RunConfig, points: Vec<(f64, Vec<usize>)>) -> Result<RunReport> {
    cfg.validate()?;
    let vocab = cfg.vocab.build()?;
    let grid: Vec<(f64, &[usize], u64)> = points
        .iter()
        .flat_map(|(alpha, budgets)| cfg.seeds.iter().map(move |&s| (*alpha, budgets.as_slice(), s)))
        .collect();
    let cells = grid
        .par_iter()
        .map(|&(alpha, budgets, seed)| run_cell(cfg, vocab, alpha, budgets, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce(cfg, cells))
}

/// Finetuning splits compared at the default popularity and budget.
pub fn experiment_e1(cfg: &RunConfig) -> Result<RunReport> {
    sweep(cfg, vec![(cfg.zipf_alpha, vec![cfg.train.pretrain_steps])])
}

/// The E1 comparison repeated for each Zipf exponent in `cfg.alphas`.
pub fn experiment_e2(cfg: &RunConfig) -> Result<RunReport> {
    sweep(
        cfg,
        cfg.alphas.iter().map(|&a| (a, vec![cfg.train.pretrain_steps])).collect(),
    )
}

/// The E1 comparison at each pretraining budget in `cfg.step_grid`, all
/// budgets sharing one stream per seed.
pub fn experiment_e3(cfg: &RunConfig) -> Result<RunReport> {
    let mut grid = cfg.step_grid.clone();
    grid.sort_unstable();
    grid.dedup();
    sweep(cfg, vec![(cfg.zipf_alpha, grid)])
}

/// Long finetuning from a low-variance initialization.
pub fn experiment_e4(cfg: &RunConfig) -> Result<RunReport> {
    sweep(cfg, vec![(cfg.zipf_alpha, vec![cfg.train.pretrain_steps])])
}

/// The full theorem suite at the configured vocabulary.
pub fn verify_suite(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let vocab = cfg.vocab.build()?;
    let suite = &cfg.suite;
    let seed = cfg.seeds[0];
    let mut report = RunReport::new(cfg.clone());
    report.verdicts.push(verify::check_memorization(vocab, suite.knowledge_bases, derive_seed(seed, "memorize"))?);
    report.verdicts.extend(verify::check_hidden_knowledge(vocab, suite.knowledge_bases, derive_seed(seed, "memorize"))?);
    report.verdicts.extend(verify::check_thresholds(vocab, suite.threshold_facts, derive_seed(seed, "threshold"))?);
    report.verdicts.extend(verify::check_softmax_grid(suite.softmax_trials, derive_seed(seed, "softmax")));
    report.verdicts.push(verify::check_sign_trials(vocab, suite.sign_trials, derive_seed(seed, "sign"))?);
    let salience = (0..suite.salience_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let s = seed.wrapping_add(i);
            let kb = build_kb(vocab, derive_seed(s, "kb"));
            let run = verify::pretrain_for_salience(&kb, cfg.zipf_alpha, &cfg.train, derive_seed(s, "stream"))?;
            Ok(check_salience_bound(&run))
        })
        .collect::<Result<Vec<_>>>()?;
    report.verdicts.extend(salience);
    Ok(report)
}

/// Dispatches on `cfg.experiment`.
pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    match cfg.experiment {
        Experiment::E1 => experiment_e1(cfg),
        Experiment::E2 => experiment_e2(cfg),
        Experiment::E3 => experiment_e3(cfg),
        Experiment::E4 => experiment_e4(cfg),
        Experiment::Verify => verify_suite(cfg),
    }
}

/// Seed-mean of `f` over the seeds that produce a value.
pub fn seed_mean(seeds: &[u64], f: impl Fn(u64) -> Option<f64>) -> Option<f64> {
    let xs: Vec<f64> = seeds.iter().filter_map(|&s| f(s)).collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}
