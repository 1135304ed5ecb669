//! Executable checks of the theory: memorization, hidden knowledge under
//! attention imbalance, softmax bounds, the attention gradient sign law and
//! the pretraining salience lower bound.
//!
//! Every check returns a [`TheoremVerdict`]. A verdict whose hypothesis is
//! not met is reported but never counted as a failure.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::Result;
use crate::grad::ExampleGrad;
use crate::knowledge::{build_kb, pretrain_stream, Example, KnowledgeBase};
use crate::matrix::Matrix;
use crate::model::{softmax, ModelParams};
use crate::train::{pretrain, PretrainRun, TrainConfig};
use crate::vocab::{Token, Vocabulary};

/// Gap left below the log-threshold when building the hidden-knowledge
/// key-query entries.
pub const HIDDEN_KQ_MARGIN: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremVerdict {
    pub name: String,
    pub hypothesis_met: bool,
    pub conclusion_holds: bool,
    pub witness: Value,
}

impl TheoremVerdict {
    pub fn new(name: impl Into<String>, hypothesis_met: bool, conclusion_holds: bool, witness: Value) -> Self {
        TheoremVerdict {
            name: name.into(),
            hypothesis_met,
            conclusion_holds,
            witness,
        }
    }

    /// A check fails only when its hypothesis holds and its conclusion does not.
    pub fn passed(&self) -> bool {
        !self.hypothesis_met || self.conclusion_holds
    }
}

/// Key-value memorizer: `W_V[a, s] = W_V[a, r] = 1` for every fact
/// `(s, r, a)`, `W_KQ = 0`.
pub fn construct_memorizer(kb: &KnowledgeBase) -> ModelParams {
    let mut p = ModelParams::for_vocab(kb.vocab());
    for (s, r, a) in kb.facts() {
        p.value.set(a.index(), s.index(), 1.0);
        p.value.set(a.index(), r.index(), 1.0);
    }
    p
}

/// Memorizer whose relation columns hold the empirical answer frequency
/// within each relation instead of an indicator. The subject columns are
/// those of [`construct_memorizer`], so every fact still decodes correctly,
/// but the relation columns now separate frequent from rare answers.
pub fn construct_marginal_memorizer(kb: &KnowledgeBase) -> ModelParams {
    let v = kb.vocab();
    let mut p = construct_memorizer(kb);
    let n = v.n_subjects() as f64;
    for k in 0..v.n_relations() {
        let r = v.relation(k).index();
        let pool = kb.pool_range(k);
        for (a, c) in pool.zip(kb.answer_counts(k)) {
            p.value.set(a, r, c as f64 / n);
        }
    }
    p
}

/// Adds `-min(W_V)` to every value entry so the smallest becomes zero.
/// Returns the shifted parameters and the shift applied.
pub fn shift_nonnegative(p: &ModelParams) -> (ModelParams, f64) {
    let c = -p.value.min_entry();
    let mut q = p.clone();
    q.value.add_scalar(c);
    (q, c)
}

/// Largest entry of `W_V[pool, column]` and its row (lowest row on ties).
fn pool_argmax(p: &ModelParams, pool: std::ops::Range<usize>, column: usize) -> (usize, f64) {
    let col = p.value.col(column);
    let mut best = (pool.start, col[pool.start]);
    for a in pool {
        if col[a] > best.1 {
            best = (a, col[a]);
        }
    }
    best
}

/// Relation-specific constant `d = max_{a' in pool} W_V[a', r] - W_V[a, r]`.
fn relation_gap(p: &ModelParams, kb: &KnowledgeBase, r: Token, a: Token) -> Result<f64> {
    let pool = kb.pool(r)?;
    let (_, top) = pool_argmax(p, pool, r.index());
    Ok(top - p.value.get(a.index(), r.index()))
}

/// Evaluates the three structural assumptions of the hidden-knowledge
/// construction against `p` and `kb`, in order: non-uniform relation
/// marginal, answer diversity, all facts memorized.
pub fn check_assumptions(kb: &KnowledgeBase, p: &ModelParams) -> Result<[TheoremVerdict; 3]> {
    let v = kb.vocab();

    let mut flat = Vec::new();
    for k in 0..v.n_relations() {
        let r = v.relation(k).index();
        let col = p.value.col(r);
        let pool = &col[kb.pool_range(k)];
        let max = pool.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = pool.iter().copied().fold(f64::INFINITY, f64::min);
        if max - min <= 0.0 {
            flat.push(json!({ "relation": r, "spread": max - min }));
        }
    }
    let a1 = TheoremVerdict::new(
        "assumption_nonuniform_relation_marginal",
        true,
        flat.is_empty(),
        json!({ "flat_relations": flat }),
    );

    let mut missing = Vec::new();
    for k in 0..v.n_relations() {
        for (a, c) in kb.pool_range(k).zip(kb.answer_counts(k)) {
            if c == 0 {
                missing.push(json!({ "relation": v.relation(k).index(), "answer": a }));
            }
        }
    }
    let a2 = TheoremVerdict::new(
        "assumption_answer_diversity",
        true,
        missing.is_empty(),
        json!({ "unrealized_answers": missing }),
    );

    let mut worst: Option<(f64, (Token, Token, Token))> = None;
    let mut violations = 0usize;
    for (s, r, a) in kb.facts() {
        let margin = p.salience(s, a) - relation_gap(p, kb, r, a)?;
        if margin < 0.0 {
            violations += 1;
        }
        if worst.is_none_or(|(m, _)| margin < m) {
            worst = Some((margin, (s, r, a)));
        }
    }
    let worst = worst.map(|(m, (s, r, a))| json!({ "margin": m, "subject": s, "relation": r, "answer": a }));
    let a3 = TheoremVerdict::new(
        "assumption_all_facts_memorized",
        true,
        violations == 0,
        json!({ "violations": violations, "tightest": worst }),
    );
    Ok([a1, a2, a3])
}

/// Result of the hidden-knowledge construction.
#[derive(Clone, Debug)]
pub struct HiddenKnowledge {
    /// Shifted value matrix with the constructed key-query matrix.
    pub params: ModelParams,
    pub shift: f64,
    /// Facts whose answer scores strictly below the pool maximum of their
    /// relation column.
    pub d_min: Vec<Example>,
    pub verdict: TheoremVerdict,
}

/// Key-query entry `log(d / salience) - margin` that pushes a fact below
/// its attention threshold when the relation self-entry is zero.
pub fn hidden_kq_entry(salience: f64, d: f64) -> f64 {
    (d / salience).ln() - HIDDEN_KQ_MARGIN
}

/// Builds a key-query matrix that hides every fact of `D_min` while leaving
/// the value matrix untouched.
///
/// The value matrix is first shifted to be non-negative. For each fact in
/// `D_min`, `W_KQ[s, r]` is set to [`hidden_kq_entry`] and `W_KQ[r, r]` to
/// zero. The verdict compares decoding under `(W_V, 0)` and under the
/// constructed matrix, both in pretraining format.
pub fn construct_hidden_kq(p: &ModelParams, kb: &KnowledgeBase) -> Result<HiddenKnowledge> {
    let (shifted, shift) = shift_nonnegative(p);
    let assumptions = check_assumptions(kb, &shifted)?;
    let assumptions_hold = assumptions.iter().all(|a| a.conclusion_holds);

    let mut d_min = Vec::new();
    let mut kq = Matrix::zeros(shifted.side());
    let mut entries = Vec::new();
    for (s, r, a) in kb.facts() {
        let d = relation_gap(&shifted, kb, r, a)?;
        if d <= 0.0 {
            continue;
        }
        let sal = shifted.salience(s, a);
        let c = hidden_kq_entry(sal, d);
        kq.set(s.index(), r.index(), c);
        kq.set(r.index(), r.index(), 0.0);
        d_min.push(Example::new(s, r, a));
        if entries.len() < 5 {
            entries.push(json!({ "subject": s, "relation": r, "answer": a, "salience": sal, "d": d, "kq": c }));
        }
    }

    let balanced = ModelParams::new(shifted.value.clone(), Matrix::zeros(shifted.side()))?;
    let facts = kb.pretrain_examples();
    let balanced_acc = balanced.accuracy(&facts)?;
    let hidden = ModelParams::new(shifted.value.clone(), kq)?;
    let d_min_acc = hidden.accuracy(&d_min)?;
    let value_untouched = hidden.value.as_col_major().iter().map(|x| x.to_bits())
        .eq(shifted.value.as_col_major().iter().map(|x| x.to_bits()));

    let hypothesis_met = assumptions_hold && !d_min.is_empty();
    let conclusion_holds = balanced_acc == 1.0 && d_min_acc == 0.0 && value_untouched;
    let verdict = TheoremVerdict::new(
        "hidden_knowledge",
        hypothesis_met,
        conclusion_holds,
        json!({
            "shift": shift,
            "assumptions": assumptions.iter().map(|a| json!({ "name": a.name, "holds": a.conclusion_holds })).collect::<Vec<_>>(),
            "d_min_size": d_min.len(),
            "balanced_accuracy": balanced_acc,
            "d_min_accuracy": if d_min.is_empty() { Value::Null } else { json!(d_min_acc) },
            "value_bitwise_unchanged": value_untouched,
            "sample_entries": entries,
        }),
    );
    Ok(HiddenKnowledge {
        params: hidden,
        shift,
        d_min,
        verdict,
    })
}

fn logit(x: f64) -> f64 {
    (x / (1.0 - x)).ln()
}

/// Checks the sufficient condition for a wrong prediction: with `W_KQ[r, r]
/// = 0`, the fact `(s, r, a)` decodes incorrectly for every subject
/// attention below `d / (salience + d)`.
///
/// `fact` is in the format whose second token owns the relation column
/// used for `d`. The value matrix is shifted to be non-negative first. The
/// flip point is located by bisection on `W_KQ[s, r]` and the claim is
/// also swept over 100 attention values.
pub fn check_attention_threshold(p: &ModelParams, kb: &KnowledgeBase, fact: &Example) -> Result<TheoremVerdict> {
    let (shifted, _) = shift_nonnegative(p);
    let (s, second, a) = (fact.first, fact.second, fact.target);
    let v = kb.vocab();
    let pool = match v.kind_of(second)? {
        crate::vocab::TokenKind::Prompt => kb.pool(v.relation_of_prompt(second)?)?,
        _ => kb.pool(second)?,
    };
    let (_, top) = pool_argmax(&shifted, pool, second.index());
    let d = top - shifted.value.get(a.index(), second.index());
    let sal = shifted.salience(s, a);
    let predicted = d / (sal + d);

    let mut q = shifted;
    q.kq.set(second.index(), second.index(), 0.0);
    let mut correct_at = |att: f64| -> Result<bool> {
        q.kq.set(s.index(), second.index(), logit(att));
        Ok(q.decode(s, second)? == a)
    };

    let mut violations = Vec::new();
    for i in 0..100 {
        let att = (i as f64 + 0.5) / 100.0;
        if att < predicted && correct_at(att)? {
            violations.push(att);
        }
    }

    // Bisection between a wrong low-attention point and a correct high one.
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
    let flip = if correct_at(lo)? {
        Some(lo)
    } else if !correct_at(hi)? {
        None
    } else {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if correct_at(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi)
    };
    let flip_ok = flip.is_none_or(|f| f >= predicted - 1e-9);

    Ok(TheoremVerdict::new(
        "attention_threshold",
        d > 0.0 && sal > 0.0,
        violations.is_empty() && flip_ok,
        json!({
            "subject": s,
            "second": second,
            "answer": a,
            "salience": sal,
            "d": d,
            "predicted_threshold": predicted,
            "flip_attention": flip,
            "sweep_violations": violations,
        }),
    ))
}

/// Softmax bounds on vectors with `|x_i| <= c`: the largest component is at
/// most `e^{2c} / (dim - 1)` and the smallest at least `e^{-2c} / dim`.
///
/// Tests `trials` uniform random vectors, the zero vector, and the corner
/// vectors `(±c, ∓c, ..., ∓c)` plus random sign patterns of magnitude `c`.
pub fn check_softmax_bounds(dim: usize, c: f64, trials: usize, seed: u64) -> TheoremVerdict {
    let name = "softmax_bounds";
    if dim < 2 || !(c >= 0.0) {
        return TheoremVerdict::new(name, false, false, json!({ "dim": dim, "c": c }));
    }
    let upper = (2.0 * c).exp() / (dim - 1) as f64;
    let lower = (-2.0 * c).exp() / dim as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut vectors: Vec<Vec<f64>> = vec![vec![0.0; dim]];
    for sign in [1.0, -1.0] {
        let mut x = vec![-sign * c; dim];
        x[0] = sign * c;
        vectors.push(x);
    }
    let corners = trials / 4;
    for _ in 0..corners {
        vectors.push((0..dim).map(|_| if rng.random::<bool>() { c } else { -c }).collect());
    }
    for _ in corners..trials {
        vectors.push((0..dim).map(|_| c * (2.0 * rng.random::<f64>() - 1.0)).collect());
    }

    let mut violations = 0usize;
    let mut max_seen = 0.0f64;
    let mut min_seen = 1.0f64;
    for x in &vectors {
        let sx = softmax(x);
        let hi = sx.iter().copied().fold(0.0, f64::max);
        let lo = sx.iter().copied().fold(1.0, f64::min);
        if hi > upper || lo < lower {
            violations += 1;
        }
        max_seen = max_seen.max(hi);
        min_seen = min_seen.min(lo);
    }
    let zero_min = softmax(&vec![0.0; dim]).iter().copied().fold(1.0, f64::min);
    TheoremVerdict::new(
        name,
        true,
        violations == 0,
        json!({
            "dim": dim,
            "c": c,
            "vectors": vectors.len(),
            "violations": violations,
            "upper_bound": upper,
            "lower_bound": lower,
            "max_seen": max_seen,
            "min_seen": min_seen,
            "zero_vector_min": zero_min,
            "zero_vector_tight": c == 0.0 && zero_min == lower,
        }),
    )
}

/// One SGD step on `ex` alone must move the attention on every probe
/// subject `s'` under prompt `(s', p_r)` in the direction of
/// `s_rel - p_rel`: down when negative, up when positive, not at all when
/// zero.
pub fn check_gradient_sign(p: &ModelParams, ex: &Example, probes: &[Token], lr: f64) -> Result<TheoremVerdict> {
    let g = ExampleGrad::compute(p, ex)?;
    let diff = g.s_rel - g.p_rel;
    let mut q = p.clone();
    g.apply(&mut q, lr);
    let prompt = ex.second;
    let mut violations = Vec::new();
    for &s in probes {
        let before = p.attention_on_subject(s, prompt);
        let after = q.attention_on_subject(s, prompt);
        let ok = if diff < 0.0 {
            after < before
        } else if diff > 0.0 {
            after > before
        } else {
            (after - before).abs() <= 1e-12
        };
        if !ok {
            violations.push(json!({ "probe": s, "before": before, "after": after }));
        }
    }
    Ok(TheoremVerdict::new(
        "gradient_sign",
        !probes.is_empty(),
        violations.is_empty(),
        json!({
            "subject": ex.first,
            "prompt": prompt,
            "s_rel": g.s_rel,
            "p_rel": g.p_rel,
            "difference": diff,
            "probes": probes.len(),
            "violations": violations,
        }),
    ))
}

/// Salience lower bound for one fact at one pretraining checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SalienceBoundRow {
    pub step: usize,
    pub subject: Token,
    pub relation: Token,
    pub answer: Token,
    pub n: usize,
    pub n_tot: usize,
    pub salience: f64,
    pub bound: f64,
    pub hypothesis_met: bool,
    pub holds: bool,
}

/// `(n e^{-C_KQ} / 2 - n_tot e^{C_V} / (total - 1)) * lr`.
pub fn salience_lower_bound(n: usize, n_tot: usize, c_kq: f64, c_v: f64, total: usize, lr: f64) -> f64 {
    (n as f64 * (-c_kq).exp() / 2.0 - n_tot as f64 * c_v.exp() / (total - 1) as f64) * lr
}

/// Whether `n_tot` is small enough for the lower bound to be positive.
pub fn salience_hypothesis(n: usize, n_tot: usize, c_kq: f64, c_v: f64, total: usize) -> bool {
    n >= 1 && (n_tot as f64) < n as f64 * (total - 1) as f64 * (-c_kq).exp() / (2.0 * c_v.exp())
}

/// Evaluates the bound for every probe fact at every checkpoint of a
/// pretraining run, using the running maxima of the norm monitors up to
/// that checkpoint.
pub fn salience_bound_rows(run: &PretrainRun) -> Vec<SalienceBoundRow> {
    let total = run.params.side();
    let mut rows = Vec::new();
    for cp in &run.checkpoints {
        for f in &cp.facts {
            let bound = salience_lower_bound(f.n, f.n_tot, cp.c_kq_max, cp.c_v_max, total, run.lr);
            rows.push(SalienceBoundRow {
                step: cp.step,
                subject: f.fact.first,
                relation: f.fact.second,
                answer: f.fact.target,
                n: f.n,
                n_tot: f.n_tot,
                salience: f.salience,
                bound,
                hypothesis_met: salience_hypothesis(f.n, f.n_tot, cp.c_kq_max, cp.c_v_max, total),
                holds: f.salience >= bound,
            });
        }
    }
    rows
}

/// Summary verdict of [`salience_bound_rows`]. The hypothesis requires a
/// zero-initialized run and at least one fact meeting the count condition.
pub fn check_salience_bound(run: &PretrainRun) -> TheoremVerdict {
    let rows = salience_bound_rows(run);
    let zero_init = run.checkpoints.first().is_some_and(|cp| {
        cp.step == 0 && cp.c_v_max == 0.0 && cp.c_kq_max == 0.0
    });
    let eligible: Vec<&SalienceBoundRow> = rows.iter().filter(|r| r.hypothesis_met).collect();
    let failures: Vec<&SalienceBoundRow> = eligible.iter().copied().filter(|r| !r.holds).collect();
    let all_rows_hold = rows.iter().all(|r| r.holds);
    let final_step = run.checkpoints.last().map_or(0, |cp| cp.step);
    let final_rows: Vec<&SalienceBoundRow> = rows.iter().filter(|r| r.step == final_step).collect();
    let final_fraction = if final_rows.is_empty() {
        0.0
    } else {
        final_rows.iter().filter(|r| r.hypothesis_met).count() as f64 / final_rows.len() as f64
    };
    let last_step_with_eligible = eligible.iter().map(|r| r.step).max();
    let tightest = eligible
        .iter()
        .min_by(|a, b| (a.salience - a.bound).total_cmp(&(b.salience - b.bound)))
        .map(|r| json!({ "step": r.step, "subject": r.subject, "relation": r.relation, "salience": r.salience, "bound": r.bound }));
    TheoremVerdict::new(
        "salience_lower_bound",
        zero_init && !eligible.is_empty(),
        failures.is_empty(),
        json!({
            "checkpoints": run.checkpoints.len(),
            "fact_checks": rows.len(),
            "hypothesis_met": eligible.len(),
            "failures": failures.len(),
            "bound_holds_on_all_rows": all_rows_hold,
            "final_step": final_step,
            "final_hypothesis_fraction": final_fraction,
            "last_step_with_hypothesis": last_step_with_eligible,
            "c_v_max": run.c_v_max,
            "c_kq_max": run.c_kq_max,
            "tightest": tightest,
        }),
    )
}

/// Random parameters with value entries in `[-v_scale, v_scale]` and
/// key-query entries in `[-kq_scale, kq_scale]`.
pub fn random_params(side: usize, v_scale: f64, kq_scale: f64, rng: &mut impl Rng) -> ModelParams {
    let value = Matrix::from_fn(side, |_, _| v_scale * (2.0 * rng.random::<f64>() - 1.0));
    let kq = Matrix::from_fn(side, |_, _| kq_scale * (2.0 * rng.random::<f64>() - 1.0));
    ModelParams { value, kq }
}

/// Sizes of the full theorem suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub knowledge_bases: usize,
    pub threshold_facts: usize,
    pub sign_trials: usize,
    pub softmax_trials: usize,
    pub salience_seeds: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            knowledge_bases: 20,
            threshold_facts: 20,
            sign_trials: 500,
            softmax_trials: 10_000,
            salience_seeds: 5,
        }
    }
}

/// Dimensions and scales of the softmax bound grid.
pub const SOFTMAX_DIMS: [usize; 3] = [2, 10, 200];
pub const SOFTMAX_SCALES: [f64; 3] = [0.0, 0.5, 2.0];

/// Memorization of random knowledge bases by [`construct_memorizer`].
pub fn check_memorization(vocab: Vocabulary, count: usize, seed: u64) -> Result<TheoremVerdict> {
    let mut worst = 1.0f64;
    let mut failures = Vec::new();
    for i in 0..count {
        let kb = build_kb(vocab, seed.wrapping_add(i as u64));
        let acc = construct_memorizer(&kb).accuracy(&kb.pretrain_examples())?;
        worst = worst.min(acc);
        if acc != 1.0 {
            failures.push(json!({ "kb": i, "accuracy": acc }));
        }
    }
    Ok(TheoremVerdict::new(
        "memorization",
        count > 0,
        failures.is_empty(),
        json!({ "knowledge_bases": count, "worst_accuracy": worst, "failures": failures }),
    ))
}

/// Hidden-knowledge construction on random knowledge bases, each with the
/// marginal memorizer as value matrix.
pub fn check_hidden_knowledge(vocab: Vocabulary, count: usize, seed: u64) -> Result<Vec<TheoremVerdict>> {
    (0..count)
        .map(|i| {
            let kb = build_kb(vocab, seed.wrapping_add(i as u64));
            Ok(construct_hidden_kq(&construct_marginal_memorizer(&kb), &kb)?.verdict)
        })
        .collect()
}

/// Attention threshold on up to `count` hidden-knowledge facts of one
/// knowledge base.
pub fn check_thresholds(vocab: Vocabulary, count: usize, seed: u64) -> Result<Vec<TheoremVerdict>> {
    let kb = build_kb(vocab, seed);
    let p = construct_marginal_memorizer(&kb);
    let hidden = construct_hidden_kq(&p, &kb)?;
    hidden
        .d_min
        .iter()
        .take(count)
        .map(|f| check_attention_threshold(&p, &kb, f))
        .collect()
}

/// Randomized gradient-sign trials on downstream examples, probing every
/// subject. Every fifth trial equalizes the subject and prompt value
/// columns so both relevances coincide.
pub fn check_sign_trials(vocab: Vocabulary, trials: usize, seed: u64) -> Result<TheoremVerdict> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let probes: Vec<Token> = vocab.subjects().map(Token).collect();
    let (mut neg, mut pos, mut zero) = (0usize, 0usize, 0usize);
    let mut failures = Vec::new();
    for t in 0..trials {
        let kb = build_kb(vocab, rng.random());
        let mut p = random_params(vocab.total(), 2.0, 1.0, &mut rng);
        let s = rng.random_range(0..vocab.n_subjects());
        let k = rng.random_range(0..vocab.n_relations());
        let ex = Example::new(vocab.subject(s), vocab.prompt(k), kb.answer(s, k));
        if t % 5 == 4 {
            let col = p.value.col(ex.first.index()).to_vec();
            p.value.col_mut(ex.second.index()).copy_from_slice(&col);
        }
        let lr = rng.random_range(0.05..1.0);
        let v = check_gradient_sign(&p, &ex, &probes, lr)?;
        let diff = v.witness["difference"].as_f64().unwrap_or(f64::NAN);
        if diff < 0.0 {
            neg += 1;
        } else if diff > 0.0 {
            pos += 1;
        } else {
            zero += 1;
        }
        if !v.passed() {
            failures.push(json!({ "trial": t, "witness": v.witness }));
        }
    }
    Ok(TheoremVerdict::new(
        "gradient_sign",
        trials > 0,
        failures.is_empty(),
        json!({
            "trials": trials,
            "negative": neg,
            "positive": pos,
            "zero": zero,
            "failures": failures,
        }),
    ))
}

/// Softmax bounds over the dimension and scale grid.
pub fn check_softmax_grid(trials: usize, seed: u64) -> Vec<TheoremVerdict> {
    let mut out = Vec::new();
    for (i, &dim) in SOFTMAX_DIMS.iter().enumerate() {
        for (j, &c) in SOFTMAX_SCALES.iter().enumerate() {
            out.push(check_softmax_bounds(dim, c, trials, seed.wrapping_add((3 * i + j) as u64)));
        }
    }
    out
}

/// Zero-initialized batch-size-one pretraining followed by the salience
/// bound check.
pub fn pretrain_for_salience(kb: &KnowledgeBase, alpha: f64, cfg: &TrainConfig, seed: u64) -> Result<PretrainRun> {
    let cfg = TrainConfig {
        init_std: 0.0,
        ..cfg.clone()
    };
    let stream = pretrain_stream(kb, alpha, cfg.pretrain_steps, seed)?;
    pretrain(ModelParams::for_vocab(kb.vocab()), &stream, &cfg, &kb.pretrain_examples())
}
