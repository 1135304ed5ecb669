use factlab::verify::*;
use factlab::*;

fn kb_from(v: Vocabulary, answers: &[usize]) -> KnowledgeBase {
    KnowledgeBase::from_answers(v, answers.iter().map(|&a| Token(a)).collect()).unwrap()
}

#[test]
fn memorizer_single_fact() {
    let v = Vocabulary::new(1, 1, 1).unwrap();
    let kb = build_kb(v, 0);
    let p = construct_memorizer(&kb);
    assert_eq!(p.value.get(2, 0), 1.0);
    assert_eq!(p.value.get(2, 1), 1.0);
    assert_eq!(p.kq.max_abs(), 0.0);
    assert_eq!(p.decode(Token(0), Token(1)).unwrap(), Token(2));
}

#[test]
fn memorizer_margins_match_construction() {
    // v = (3, 2, 6): answers 5..11, pools {5,6,7} and {8,9,10}; every pool answer used.
    let v = Vocabulary::new(3, 2, 6).unwrap();
    let kb = kb_from(v, &[5, 8, 6, 9, 7, 10]);
    let p = construct_memorizer(&kb);
    for (s, r, a) in kb.facts() {
        let (_, _, z) = p.presoftmax(s, r).unwrap();
        assert_eq!(z[a.index()], 1.0);
        for mate in kb.pool(r).unwrap().filter(|&m| m != a.index()) {
            assert_eq!(z[mate], 0.5);
        }
        let other_pool = if r == v.relation(0) { kb.pool_range(1) } else { kb.pool_range(0) };
        for b in other_pool {
            let expected = if kb.facts().any(|(s2, _, a2)| s2 == s && a2.index() == b) { 0.5 } else { 0.0 };
            assert_eq!(z[b], expected);
        }
        for t in v.subjects().chain(v.relations()).chain(v.prompts()) {
            assert_eq!(z[t], 0.0);
        }
        assert_eq!(p.decode(s, r).unwrap(), a);
    }
}

#[test]
fn memorizer_is_exact_on_default_scale() {
    let v = Vocabulary::new(100, 5, 50).unwrap();
    let verdict = check_memorization(v, 5, 11).unwrap();
    assert!(verdict.hypothesis_met && verdict.conclusion_holds, "{}", verdict.witness);
}

#[test]
fn assumptions_detect_missing_answer() {
    let v = Vocabulary::new(3, 1, 3).unwrap();
    // answers 4,5,6; answer 6 never used
    let kb = kb_from(v, &[4, 5, 4]);
    let [a1, a2, _] = check_assumptions(&kb, &construct_marginal_memorizer(&kb)).unwrap();
    assert!(a1.conclusion_holds);
    assert!(!a2.conclusion_holds);
    assert_eq!(a2.witness["unrealized_answers"][0]["answer"], 6);
}

#[test]
fn assumptions_hold_with_unequal_frequencies() {
    let v = Vocabulary::new(4, 1, 3).unwrap();
    let kb = kb_from(v, &[5, 5, 6, 7]);
    let verdicts = check_assumptions(&kb, &construct_marginal_memorizer(&kb)).unwrap();
    assert!(verdicts.iter().all(|x| x.conclusion_holds), "{verdicts:?}");
}

#[test]
fn zero_params_break_nonuniform_marginal() {
    let v = Vocabulary::new(4, 1, 3).unwrap();
    let kb = kb_from(v, &[5, 5, 6, 7]);
    let [a1, _, _] = check_assumptions(&kb, &ModelParams::for_vocab(&v)).unwrap();
    assert!(!a1.conclusion_holds);
}

#[test]
fn indicator_memorizer_has_flat_relation_columns() {
    let v = Vocabulary::new(4, 1, 3).unwrap();
    let kb = kb_from(v, &[5, 5, 6, 7]);
    let [a1, _, _] = check_assumptions(&kb, &construct_memorizer(&kb)).unwrap();
    assert!(!a1.conclusion_holds);
}

#[test]
fn two_fact_relation_hides_the_rarer_answer() {
    // three subjects, one relation (token 3) with pool {4, 5}: answer 4 twice, 5 once
    let v = Vocabulary::new(3, 1, 2).unwrap();
    let kb = kb_from(v, &[4, 5, 4]);
    let p = construct_marginal_memorizer(&kb);
    let before: Vec<Token> = kb.facts().map(|(s, r, _)| p.decode(s, r).unwrap()).collect();
    assert_eq!(before, vec![Token(4), Token(5), Token(4)]);
    let hidden = construct_hidden_kq(&p, &kb).unwrap();
    assert_eq!(hidden.d_min, vec![Example::new(Token(1), Token(3), Token(5))]);
    assert_ne!(hidden.params.decode(Token(1), Token(3)).unwrap(), Token(5));
    assert_eq!(hidden.params.decode(Token(0), Token(3)).unwrap(), Token(4));
    assert!(hidden.verdict.passed() && hidden.verdict.hypothesis_met);
}

#[test]
fn hidden_kq_entry_tracks_log_salience() {
    let base = verify::hidden_kq_entry(1.0, 0.4);
    let scaled = verify::hidden_kq_entry(10.0, 0.4);
    assert!((base - scaled - 10f64.ln()).abs() < 1e-12);
    assert!((base - (0.4f64.ln() - 0.1)).abs() < 1e-12);
}

#[test]
fn hidden_knowledge_on_default_scale() {
    let v = Vocabulary::new(100, 5, 50).unwrap();
    for verdict in check_hidden_knowledge(v, 3, 0).unwrap() {
        assert!(verdict.hypothesis_met, "{}", verdict.witness);
        assert!(verdict.conclusion_holds, "{}", verdict.witness);
        assert_eq!(verdict.witness["balanced_accuracy"], 1.0);
        assert_eq!(verdict.witness["d_min_accuracy"], 0.0);
        assert_eq!(verdict.witness["value_bitwise_unchanged"], true);
    }
}

#[test]
fn hidden_construction_preserves_shifted_values() {
    let v = Vocabulary::new(20, 2, 6).unwrap();
    let kb = build_kb(v, 4);
    let mut p = construct_marginal_memorizer(&kb);
    p.value.add_scalar(-3.25);
    let hidden = construct_hidden_kq(&p, &kb).unwrap();
    assert_eq!(hidden.shift, 3.25);
    let (shifted, _) = shift_nonnegative(&p);
    assert_eq!(hidden.params.value, shifted.value);
}

#[test]
fn threshold_with_unit_salience_and_gap() {
    // one relation, pool {4, 5}; subject 0 answers 5, subjects 1 and 2 answer 4.
    // Relation column made (2, 1) so d = 1 for the fact (0, r, 5); salience 1.
    let v = Vocabulary::new(3, 1, 2).unwrap();
    let kb = kb_from(v, &[5, 4, 4]);
    let mut p = construct_memorizer(&kb);
    p.value.set(4, 3, 2.0);
    p.value.set(5, 3, 1.0);
    let fact = Example::new(Token(0), Token(3), Token(5));
    let verdict = check_attention_threshold(&p, &kb, &fact).unwrap();
    assert!(verdict.hypothesis_met && verdict.conclusion_holds, "{}", verdict.witness);
    assert_eq!(verdict.witness["predicted_threshold"], 0.5);
    // the tie at exactly 0.5 goes to the lower index, 4, so the flip sits at 0.5
    let flip = verdict.witness["flip_attention"].as_f64().unwrap();
    assert!((flip - 0.5).abs() < 1e-9, "{flip}");
}

#[test]
fn threshold_shrinks_with_salience() {
    let v = Vocabulary::new(3, 1, 2).unwrap();
    let kb = kb_from(v, &[5, 4, 4]);
    let mut p = construct_memorizer(&kb);
    p.value.set(4, 3, 2.0);
    p.value.set(5, 3, 1.0);
    p.value.set(5, 0, 1000.0);
    let fact = Example::new(Token(0), Token(3), Token(5));
    let verdict = check_attention_threshold(&p, &kb, &fact).unwrap();
    assert!(verdict.passed());
    assert!(verdict.witness["predicted_threshold"].as_f64().unwrap() < 1e-3);
}

#[test]
fn thresholds_on_memorizer_instances() {
    let v = Vocabulary::new(100, 5, 50).unwrap();
    let verdicts = check_thresholds(v, 10, 3).unwrap();
    assert_eq!(verdicts.len(), 10);
    for x in verdicts {
        assert!(x.hypothesis_met && x.conclusion_holds, "{}", x.witness);
    }
}

#[test]
fn softmax_zero_vector_is_tight() {
    let verdict = check_softmax_bounds(10, 0.0, 100, 0);
    assert!(verdict.conclusion_holds);
    assert_eq!(verdict.witness["zero_vector_min"], 0.1);
    assert_eq!(verdict.witness["zero_vector_tight"], true);
    assert_eq!(verdict.witness["max_seen"], 0.1);
}

#[test]
fn softmax_upper_bound_at_half() {
    let verdict = check_softmax_bounds(10, 0.5, 1000, 1);
    assert!(verdict.conclusion_holds, "{}", verdict.witness);
    let upper = verdict.witness["upper_bound"].as_f64().unwrap();
    assert!((upper - 1f64.exp() / 9.0).abs() < 1e-15);
    assert!((upper - 0.3020).abs() < 1e-4);
    let corner = 1f64.exp() / (1f64.exp() + 9.0);
    assert!((verdict.witness["max_seen"].as_f64().unwrap() - corner).abs() < 1e-15);
}

#[test]
fn softmax_grid_has_no_violations() {
    for v in check_softmax_grid(1000, 2) {
        assert!(v.hypothesis_met && v.conclusion_holds, "{}", v.witness);
    }
}

#[test]
fn softmax_degenerate_dimension() {
    assert!(!check_softmax_bounds(1, 1.0, 10, 0).hypothesis_met);
}

#[test]
fn gradient_sign_equal_relevances_leave_attention() {
    let v = Vocabulary::new(4, 2, 4).unwrap();
    let kb = build_kb(v, 0);
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(1);
    let mut p = random_params(v.total(), 1.0, 1.0, &mut rng);
    let ex = Example::new(v.subject(1), v.prompt(0), kb.answer(1, 0));
    let col = p.value.col(ex.first.index()).to_vec();
    p.value.col_mut(ex.second.index()).copy_from_slice(&col);
    let probes: Vec<Token> = v.subjects().map(Token).collect();
    let verdict = check_gradient_sign(&p, &ex, &probes, 0.5).unwrap();
    assert_eq!(verdict.witness["difference"], 0.0);
    assert!(verdict.conclusion_holds);
}

#[test]
fn gradient_sign_negative_gap_lowers_subject_attention() {
    // prompt column carries the target strongly, subject column does not
    let v = Vocabulary::new(4, 1, 2).unwrap();
    let kb = kb_from(v, &[5, 5, 6, 6]);
    let mut p = ModelParams::for_vocab(&v);
    p.value.set(5, v.prompt(0).index(), 3.0);
    let ex = Example::new(Token(0), v.prompt(0), Token(5));
    let probes: Vec<Token> = v.subjects().map(Token).collect();
    let verdict = check_gradient_sign(&p, &ex, &probes, 0.5).unwrap();
    assert!(verdict.witness["difference"].as_f64().unwrap() < 0.0);
    assert!(verdict.conclusion_holds);
    let _ = kb;
}

#[test]
fn gradient_sign_trials() {
    let v = Vocabulary::new(20, 2, 6).unwrap();
    let verdict = check_sign_trials(v, 100, 8).unwrap();
    assert!(verdict.conclusion_holds, "{}", verdict.witness);
    assert!(verdict.witness["negative"].as_u64().unwrap() > 0);
    assert!(verdict.witness["positive"].as_u64().unwrap() > 0);
    assert_eq!(verdict.witness["zero"], 20);
}

#[test]
fn salience_bound_zero_count_is_trivial() {
    assert!(salience_lower_bound(0, 0, 1.0, 1.0, 10, 0.5) <= 0.0);
    assert!(!salience_hypothesis(0, 0, 0.0, 0.0, 10));
}

#[test]
fn salience_bound_on_small_run() {
    let v = Vocabulary::new(30, 3, 9).unwrap();
    let kb = build_kb(v, 1);
    let cfg = TrainConfig {
        pretrain_steps: 5000,
        eval_every: 500,
        ..TrainConfig::default()
    };
    let run = pretrain_for_salience(&kb, 1.2, &cfg, 2).unwrap();
    let verdict = check_salience_bound(&run);
    assert!(verdict.hypothesis_met, "{}", verdict.witness);
    assert!(verdict.conclusion_holds, "{}", verdict.witness);
    assert_eq!(verdict.witness["bound_holds_on_all_rows"], true);
}

#[test]
fn salience_grows_on_single_fact_corpus() {
    let v = Vocabulary::new(1, 1, 1).unwrap();
    let kb = build_kb(v, 0);
    let stream = vec![kb.pretrain_examples()[0]; 50];
    let cfg = TrainConfig {
        lr: 0.01,
        eval_every: 10,
        ..TrainConfig::default()
    };
    let run = pretrain(ModelParams::for_vocab(&v), &stream, &cfg, &kb.pretrain_examples()).unwrap();
    let rows = salience_bound_rows(&run);
    assert!(rows.iter().all(|r| r.holds));
    let last = rows.last().unwrap();
    assert_eq!((last.n, last.n_tot), (50, 50));
    assert!(last.salience >= 50.0 * 0.01 * ((-run.c_kq_max).exp() / 2.0 - run.c_v_max.exp() / 3.0));
}

#[test]
fn salience_check_requires_zero_init() {
    let v = Vocabulary::new(5, 1, 2).unwrap();
    let kb = build_kb(v, 0);
    let stream = pretrain_stream(&kb, 1.0, 100, 0).unwrap();
    let p = init_params(&v, 0.01, 0).unwrap();
    let run = pretrain(p, &stream, &TrainConfig::default(), &kb.pretrain_examples()).unwrap();
    assert!(!check_salience_bound(&run).hypothesis_met);
}

#[test]
fn verdict_serializes_as_flat_record() {
    let v = TheoremVerdict::new("x", true, false, serde_json::json!({ "k": 1 }));
    let s = serde_json::to_string(&v).unwrap();
    assert_eq!(s, r#"{"name":"x","hypothesis_met":true,"conclusion_holds":false,"witness":{"k":1}}"#);
    assert!(!v.passed());
    assert!(TheoremVerdict::new("y", false, false, serde_json::Value::Null).passed());
}
