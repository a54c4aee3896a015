mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{all_formulas, all_traces, assignment, random_cosafe, random_trace, ATOMS};
use tg_core::dfa::{Dfa, DfaStatus};
use tg_core::ltl::{parse, progress, render, satisfies, simplify, translate_ltlf_to_cosafe, validate_spec, Formula, Trace, TruthAssignment};

fn formula() -> impl Strategy<Value = Formula> {
    let leaf = prop_oneof![
        Just(Formula::True),
        Just(Formula::False),
        prop::sample::select(ATOMS.to_vec()).prop_map(Formula::atom),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(Formula::not),
            inner.clone().prop_map(Formula::next),
            inner.clone().prop_map(Formula::weak_next),
            inner.clone().prop_map(Formula::eventually),
            inner.clone().prop_map(Formula::always),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::and(l, r)),
            (inner.clone(), inner.clone()).prop_map(|(l, r)| Formula::or(l, r)),
            (inner.clone(), inner).prop_map(|(l, r)| Formula::until(l, r)),
        ]
    })
}

fn trace() -> impl Strategy<Value = Trace> {
    prop::collection::vec(0usize..8, 1..7).prop_map(|masks| masks.into_iter().map(|m| assignment(&ATOMS, m)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn render_round_trips(f in formula()) {
        prop_assert_eq!(parse(&render(&f)).unwrap(), f);
    }

    #[test]
    fn simplify_preserves_truth_at_every_position(f in formula(), t in trace()) {
        let g = simplify(&f);
        for i in 0..t.len() {
            prop_assert_eq!(satisfies(&t, i, &f).unwrap(), satisfies(&t, i, &g).unwrap());
        }
    }

    #[test]
    fn simplify_is_idempotent(f in formula()) {
        let g = simplify(&f);
        prop_assert_eq!(simplify(&g), g);
    }
}

#[test]
fn simplify_preserves_semantics_exhaustively() {
    let traces = all_traces(&ATOMS, 4);
    for f in all_formulas(&ATOMS, 3) {
        let g = simplify(&f);
        for t in &traces {
            assert_eq!(satisfies(t, 0, &f).unwrap(), satisfies(t, 0, &g).unwrap(), "{f} vs {g} on {t:?}");
        }
    }
}

#[test]
fn until_false_agrees_with_its_simplification() {
    let f = Formula::until(Formula::atom("p"), Formula::False);
    let g = simplify(&f);
    for t in all_traces(&ATOMS, 4) {
        for i in 0..t.len() {
            assert_eq!(satisfies(&t, i, &f).unwrap(), satisfies(&t, i, &g).unwrap());
        }
    }
}

#[test]
fn progression_stays_cosafe() {
    for f in all_formulas(&ATOMS, 3) {
        assert!(f.is_cosafe());
        for m in 0..8 {
            let g = progress(&assignment(&ATOMS, m), &f);
            assert!(g.is_cosafe(), "{f} progressed to {g}");
        }
    }
}

#[test]
fn worked_examples() {
    let p = |s: &str| parse(s).unwrap();
    assert!(satisfies(&Trace::of(&[&["p"], &["q"]]), 0, &p("F (p & F q)")).unwrap());
    assert!(satisfies(&Trace::of(&[&["p"], &["p"], &["q"]]), 0, &p("p U q")).unwrap());
    assert_eq!(progress(&TruthAssignment::of(&["p"]), &p("F (p & F q)")), p("F q"));
    assert_eq!(progress(&TruthAssignment::new(), &p("p")), Formula::False);
    assert_eq!(progress(&TruthAssignment::of(&["p"]), &p("X q")), p("q"));
    assert_eq!(translate_ltlf_to_cosafe(&p("G p")).unwrap(), p("p U (last & p)"));
    assert_eq!(translate_ltlf_to_cosafe(&p("WX p")).unwrap(), p("last | X p"));
    assert!(translate_ltlf_to_cosafe(&p("!(F p)")).is_err());
    assert!(validate_spec(&p("F (got_wood & F used_workbench)")).is_ok());
    assert!(validate_spec(&p("G got_wood")).is_err());
    assert!(parse("p U").is_err());
}

#[test]
fn sequence_automaton_matches_semantics_on_its_atoms() {
    let atoms = ["got_wood", "used_workbench"];
    let f = parse("F (got_wood & F used_workbench)").unwrap();
    let dfa = Dfa::compile(&f).unwrap();
    for t in all_traces(&atoms, 5) {
        assert_eq!(dfa.accepts(&t), satisfies(&t, 0, &f).unwrap());
    }
}

#[test]
fn chain_of_four_has_five_states() {
    let dfa = Dfa::compile(&parse("F (a & F (b & F (c & F d)))").unwrap()).unwrap();
    assert_eq!(dfa.num_states(), 5);
    assert_eq!(dfa.violated_state(), None);
}

#[test]
fn bare_atom_falsified_is_violated() {
    let dfa = Dfa::compile(&parse("p").unwrap()).unwrap();
    let q = dfa.step(dfa.initial(), &TruthAssignment::new()).unwrap();
    assert_eq!(dfa.classify(q).unwrap(), DfaStatus::Violated);
}

#[test]
fn random_deep_formulas_match_semantics() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let depth = rng.gen_range(1..=5);
        let f = random_cosafe(&mut rng, &ATOMS, depth);
        let dfa = Dfa::compile(&f).unwrap();
        for _ in 0..20 {
            let len = rng.gen_range(1..8);
            let t = random_trace(&mut rng, &ATOMS, len);
            assert_eq!(dfa.accepts(&t), satisfies(&t, 0, &f).unwrap(), "{f} on {t:?}");
        }
    }
}

#[test]
fn stepping_folds_to_run_and_acceptance_is_absorbing() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..300 {
        let f = random_cosafe(&mut rng, &ATOMS, 4);
        let dfa = Dfa::compile(&f).unwrap();
        let len = rng.gen_range(1..10);
        let t = random_trace(&mut rng, &ATOMS, len);
        let mut q = dfa.initial();
        let mut accepted = dfa.classify(q).unwrap() == DfaStatus::Accepting;
        for a in t.steps() {
            q = dfa.step(q, a).unwrap();
            let now = dfa.classify(q).unwrap() == DfaStatus::Accepting;
            assert!(!accepted || now, "left the accepting state of {f}");
            accepted = now;
        }
        assert_eq!(q, dfa.run(&t));
    }
}

#[test]
fn compilation_is_deterministic() {
    for f in all_formulas(&ATOMS, 2) {
        let (a, b) = (Dfa::compile(&f).unwrap(), Dfa::compile(&f).unwrap());
        assert_eq!(a.states(), b.states());
        assert_eq!(a.export_dot(), b.export_dot());
    }
}

#[test]
fn dot_export_has_one_node_per_state() {
    for text in ["true", "F p", "F (p & F q) & F r", "p U (q & X r)"] {
        let dfa = Dfa::compile(&parse(text).unwrap()).unwrap();
        let nodes = dfa.export_dot().lines().filter(|l| l.contains("label=") && !l.contains("->")).count();
        assert_eq!(nodes, dfa.num_states(), "{text}");
    }
    assert_eq!(Dfa::compile(&parse("F p").unwrap()).unwrap().num_states(), 2);
}
