use num_traits::Signed;
use proptest::prelude::*;
use sitl_planner::predicates::{to_dnf, Bc, Certificate, Entailment, Oracle, PredicateConfig, SatResult};
use sitl_planner::rat::{self, int};

fn example() -> Oracle {
    let cfg: PredicateConfig =
        serde_json::from_str(include_str!("../../../demo/predicates.json")).unwrap();
    Oracle::new(cfg, 7).unwrap()
}

fn bc(s: &str) -> Bc {
    Bc::parse(s).unwrap()
}

#[test]
fn initial_state_satisfies_only_mu1() {
    let o = example();
    let x0 = o.config.x0.clone();
    assert!(o.holds("mu1", &x0).unwrap());
    for m in ["mu2", "mu3", "mu4"] {
        assert!(!o.holds(m, &x0).unwrap(), "{m}");
    }
}

#[test]
fn mu1_and_mu4_disjoint() {
    let o = example();
    assert_eq!(
        o.sat(&bc("mu1 & mu4")).unwrap(),
        SatResult::Unsat(vec![Certificate::DisjointBalls("mu1".into(), "mu4".into())])
    );
    assert!(o.sat(&bc("mu1 & mu2 & mu3 & mu4")).unwrap().is_unsat());
}

#[test]
fn mu2_and_mu4_have_checked_witness() {
    let o = example();
    let w = o.witness(&bc("mu2 & mu4")).unwrap();
    assert!(o.holds("mu2", &w).unwrap() && o.holds("mu4", &w).unwrap());
    // Independent check of the hand-picked point x1=(1,1), x2=(1.5,-1).
    let x: Vec<_> = ["1", "1", "1.5", "-1"].iter().map(|s| rat::parse(s).unwrap()).collect();
    assert!(o.holds("mu2", &x).unwrap() && o.holds("mu4", &x).unwrap());
}

#[test]
fn single_ball_witnesses() {
    let o = example();
    let w = o.witness(&bc("mu2")).unwrap();
    assert!(o.h("mu2", &w.iter().map(rat::to_f64).collect::<Vec<_>>()).unwrap() >= 0.0);
    let w = o.witness(&bc("!mu1")).unwrap();
    let h = o.h("mu1", &w.iter().map(rat::to_f64).collect::<Vec<_>>()).unwrap();
    assert!(h < 0.0);
}

#[test]
fn mu2_and_mu3_are_jointly_satisfiable() {
    // The two balls constrain disjoint coordinates.
    let o = example();
    let w = o.witness(&bc("mu2 & mu3")).unwrap();
    assert!(o.eval(&bc("mu2 & mu3"), &w).unwrap());
}

#[test]
fn plan_labels_from_example_are_feasible() {
    let o = example();
    for l in [
        "mu1 & !mu2 & !mu3 & !mu4",
        "mu1 & mu2 & !mu3 & !mu4",
        "!mu1 & mu3 & mu4",
        "!mu1 & !mu2 & mu3 & mu4",
    ] {
        let w = o.witness(&bc(l)).unwrap();
        assert!(o.eval(&bc(l), &w).unwrap(), "{l}");
    }
}

#[test]
fn entailment_weakening_and_counterexample() {
    let o = example();
    assert_eq!(o.entails(&bc("mu1 & mu2"), &bc("mu1")).unwrap(), Entailment::Yes);
    match o.entails(&bc("mu1"), &bc("mu2")).unwrap() {
        Entailment::No(w) => {
            assert!(o.holds("mu1", &w).unwrap());
            assert!(!o.holds("mu2", &w).unwrap());
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(o.entails(&Bc::False, &bc("mu3")).unwrap(), Entailment::Yes);
    // Inside mu4 implies outside mu1.
    assert_eq!(o.entails(&bc("mu4"), &bc("!mu1")).unwrap(), Entailment::Yes);
}

#[test]
fn nested_ball_containment_certificate() {
    let text = r#"{"dimension":2,"predicates":[
        {"name":"small","kind":"ball","L":[[1,0],[0,1]],"c":[0,0],"eps":1},
        {"name":"big","kind":"ball","L":[[1,0],[0,1]],"c":["1/2",0],"eps":2}],
        "bounding_box":[{"lo":-3,"hi":3},{"lo":-3,"hi":3}],"x0":[0,0]}"#;
    let o = Oracle::new(serde_json::from_str(text).unwrap(), 1).unwrap();
    assert!(matches!(
        o.sat(&bc("small & !big")).unwrap(),
        SatResult::Unsat(ref c) if matches!(c[0], Certificate::ContainedInNegation { .. })
    ));
    let w = o.witness(&bc("big & !small")).unwrap();
    assert!(o.eval(&bc("big & !small"), &w).unwrap());
    // Exact closed form at tangency: |c1 - c2| = e1 + e2.
    let text = r#"{"dimension":1,"predicates":[
        {"name":"a","kind":"ball","L":[[1]],"c":[0],"eps":1},
        {"name":"b","kind":"ball","L":[[1]],"c":[3],"eps":2}],"x0":[0]}"#;
    let o = Oracle::new(serde_json::from_str(text).unwrap(), 1).unwrap();
    assert_eq!(o.witness(&bc("a & b")).unwrap(), vec![int(1)]);
}

#[test]
fn witnesses_are_exact_and_reproducible() {
    let a = example();
    let b = example();
    let f = bc("!mu1 & !mu2 & mu3 & !mu4");
    let wa = a.witness(&f).unwrap();
    assert_eq!(wa, b.witness(&f).unwrap());
    assert!(a.eval(&f, &wa).unwrap());
    assert!(wa.iter().all(|v| v.abs() < int(100)));
}

fn arb_bc() -> impl Strategy<Value = Bc> {
    let leaf = prop_oneof![
        Just(Bc::True),
        Just(Bc::False),
        (0..4usize, any::<bool>()).prop_map(|(i, p)| Bc::Lit(["a", "b", "c", "d"][i].into(), p)),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Bc::not),
            prop::collection::vec(inner.clone(), 1..3).prop_map(Bc::And),
            prop::collection::vec(inner, 1..3).prop_map(Bc::Or),
        ]
    })
}

proptest! {
    #[test]
    fn dnf_preserves_truth_table(f in arb_bc()) {
        let d = to_dnf(&f);
        for bits in 0..16u32 {
            let val = |n: &str| {
                let i = ["a", "b", "c", "d"].iter().position(|x| *x == n).unwrap();
                bits >> i & 1 == 1
            };
            let lhs = f.eval(&val);
            let rhs = d.iter().any(|c| c.holds(&val));
            prop_assert_eq!(lhs, rhs);
        }
    }
}
