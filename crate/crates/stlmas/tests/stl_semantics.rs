mod common;

use std::collections::BTreeMap;

use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlmas::stl::{monitor_temporal, parse_formula, smooth_min, Formula, Interval, Predicate, StlError, Temporal};
use stlmas::AgentId;

fn ball(agent: usize, center: &[f64], r2: f64) -> Predicate {
    Predicate::norm2_le(vec![(AgentId(agent), DMatrix::identity(2, 2))], state(center), r2).unwrap()
}

fn relative(a: usize, b: usize, r2: f64) -> Predicate {
    let i = DMatrix::identity(2, 2);
    Predicate::norm2_le(vec![(AgentId(a), i.clone()), (AgentId(b), -i)], DVector::zeros(2), r2).unwrap()
}

fn table() -> BTreeMap<String, Predicate> {
    let mut t = BTreeMap::new();
    t.insert("p1".into(), ball(1, &[0.0, 2.0], 7.0));
    t.insert("p2".into(), relative(1, 2, 26.75));
    t.insert("p3".into(), relative(1, 3, 70.05));
    t.insert("p4".into(), Predicate::linear(vec![(AgentId(4), state(&[1.0, 0.0]))], 0.0).unwrap());
    t
}

#[test]
fn conjunction_of_three_parses() {
    let f = parse_formula("G[1,2](p1 && p2 && p3)", &table()).unwrap();
    assert_eq!(f.temporal, Temporal::Always(Interval { a: 1.0, b: 2.0 }));
    assert_eq!(f.body.atoms().count(), 3);
}

#[test]
fn true_body_parses_and_never_constrains() {
    let f = parse_formula("G[0,0](true)", &table()).unwrap();
    assert_eq!(f.body.atoms().count(), 0);
    assert_eq!(f.body.eval_smooth(&states(&[]), 10.0).unwrap(), f64::INFINITY);
}

#[test]
fn eventually_always_nesting_parses() {
    let f = parse_formula("F[1,2]G[0,0.5](p4)", &table()).unwrap();
    assert_eq!(
        f.temporal,
        Temporal::EventuallyAlways { outer: Interval { a: 1.0, b: 2.0 }, inner: Interval { a: 0.0, b: 0.5 } }
    );
    assert_eq!(f.temporal.horizon(), 2.5);
}

#[test]
fn parse_errors_are_named() {
    let t = table();
    assert!(matches!(parse_formula("G[1,2](nope)", &t), Err(StlError::UnknownPredicate(n)) if n == "nope"));
    assert!(matches!(parse_formula("G[2,1](p1)", &t), Err(StlError::BadInterval { .. })));
    assert!(matches!(parse_formula("G[1,2](p1 &&)", &t), Err(StlError::Syntax { .. })));
    assert!(matches!(parse_formula("X[1,2](p1)", &t), Err(StlError::Syntax { pos: 0, .. })));
    assert!(matches!(parse_formula("G[1,2](!!p4)", &t), Err(StlError::Syntax { .. })));
}

#[test]
fn printed_form_round_trips() {
    let t = table();
    for text in ["G[1,2](p1 && p2 && p3)", "F[0.5,1.5](!p4 && true)", "F[1,2]G[0,0.5](p4)", "G[0,0](true)"] {
        let f = parse_formula(text, &t).unwrap();
        let again = parse_formula(&f.to_string(), &t).unwrap();
        assert_eq!(f, again, "{text}");
    }
}

#[test]
fn predicate_examples() {
    let p = relative(1, 2, 26.75);
    assert_eq!(p.eval(&states(&[(1, &[1.5, -0.5]), (2, &[1.5, -0.5])])).unwrap(), 26.75);
    let lin = Predicate::linear(vec![(AgentId(1), state(&[1.0, 0.0]))], 0.0).unwrap();
    assert_eq!(lin.eval(&states(&[(1, &[3.0, 7.0])])).unwrap(), 3.0);
    assert_eq!(ball(1, &[0.0, 2.0], 7.0).eval(&states(&[(1, &[0.0, 2.0])])).unwrap(), 7.0);
}

#[test]
fn gradient_vanishes_at_ball_center_and_is_constant_for_halfspace() {
    let g = ball(1, &[0.0, 2.0], 7.0).grad(&states(&[(1, &[0.0, 2.0])]), AgentId(1)).unwrap();
    assert_eq!(g, DVector::zeros(2));
    let lin = Predicate::linear(vec![(AgentId(1), state(&[0.5, -2.0]))], 1.0).unwrap();
    for x in [[0.0, 0.0], [5.0, -3.0]] {
        assert_eq!(lin.grad(&states(&[(1, &x)]), AgentId(1)).unwrap(), state(&[0.5, -2.0]));
    }
    // agents the predicate does not read get a zero gradient
    assert_eq!(lin.grad(&states(&[(1, &[0.0, 0.0]), (2, &[1.0, 1.0])]), AgentId(2)).unwrap(), DVector::zeros(2));
}

#[test]
fn predicate_input_errors() {
    let p = relative(1, 2, 1.0);
    assert!(matches!(p.eval(&states(&[(1, &[0.0, 0.0])])), Err(StlError::MissingAgent(AgentId(2)))));
    assert!(matches!(p.eval(&states(&[(1, &[0.0, 0.0]), (2, &[0.0])])), Err(StlError::Dimension { .. })));
    assert!(Predicate::norm2_le(vec![(AgentId(1), DMatrix::identity(2, 2))], DVector::zeros(2), 0.0).is_err());
    assert!(Predicate::linear(vec![(AgentId(1), DVector::zeros(2))], 1.0).is_err());
}

#[test]
fn smooth_min_examples() {
    let (v, _) = smooth_min(&[1.0, 1.0], 10.0).unwrap();
    assert!((v - (1.0 - 2f64.ln() / 10.0)).abs() < 1e-15);
    let (v, w) = smooth_min(&[3.0], 10.0).unwrap();
    assert_eq!((v, w), (3.0, vec![1.0]));
    assert_eq!(smooth_min(&[], 10.0), Err(StlError::Empty));
    assert!(matches!(smooth_min(&[1.0], 0.0), Err(StlError::BadEta(_))));
}

#[test]
fn monitor_examples() {
    let t = table();
    let g = parse_formula("G[1,2](p1)", &t).unwrap();
    let values: Vec<f64> = (0..=20).map(|k| 1.0 + k as f64 * 0.1).collect();
    // step 0.1: window [1,2] covers samples 10..=20
    assert!((monitor_temporal(&g, &values, 0.1).unwrap() - 2.0).abs() < 1e-12);
    let f = parse_formula("F[1,2](p1)", &t).unwrap();
    assert!((monitor_temporal(&f, &values, 0.1).unwrap() - 3.0).abs() < 1e-12);
    assert!(matches!(monitor_temporal(&g, &values[..15], 0.1), Err(StlError::WindowExceedsHorizon { .. })));
    assert!(matches!(monitor_temporal(&g, &values, 0.0), Err(StlError::BadStep)));
}

fn random_temporal(rng: &mut ChaCha8Rng, step: f64) -> Temporal {
    // interval ends on or off the sampling grid
    let bound = |rng: &mut ChaCha8Rng, hi: f64| {
        let v = rng.gen_range(0.0..hi);
        if rng.gen_bool(0.5) {
            (v / step).round() * step
        } else {
            v
        }
    };
    let (a, b) = (bound(rng, 1.0), bound(rng, 1.0));
    let outer = Interval::new(a.min(b), a.max(b)).unwrap();
    match rng.gen_range(0..3) {
        0 => Temporal::Always(outer),
        1 => Temporal::Eventually(outer),
        _ => {
            let (c, d) = (bound(rng, 0.8), bound(rng, 0.8));
            Temporal::EventuallyAlways { outer, inner: Interval::new(c.min(d), c.max(d)).unwrap() }
        }
    }
}

#[test]
fn monitor_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..500 {
        let step = [0.1, 0.05, 0.01, 0.025][rng.gen_range(0..4)];
        let temporal = random_temporal(&mut rng, step);
        let n = (temporal.horizon() / step).ceil() as usize + 1 + rng.gen_range(0..10);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let phi = Formula { temporal, body: stlmas::stl::Body { literals: vec![] } };
        let got = monitor_temporal(&phi, &values, step).unwrap();
        let want = monitor_oracle(&temporal, &values, step);
        assert_eq!(got, want, "{temporal:?} step {step}");
    }
}

#[test]
fn smooth_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let eta = 10.0;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let body = random_body(&mut rng, 3, 2);
        let xs = random_states(&mut rng, 3, 2);
        let (err, norm) = stacked_gradient_error(&body, &xs, eta);
        worst = worst.max(err / norm);
    }
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

proptest! {
    #[test]
    fn smooth_min_is_a_tight_under_approximation(
        values in prop::collection::vec(-1e3f64..1e3, 1..40),
        eta in 0.1f64..100.0,
    ) {
        let (v, w) = smooth_min(&values, eta).unwrap();
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assert!(v <= min);
        prop_assert!(min - v <= (values.len() as f64).ln() / eta);
        let total: f64 = w.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn exact_body_value_bounds_the_smooth_one(seed in any::<u64>(), eta in 1.0f64..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = random_body(&mut rng, 3, 2);
        let xs = random_states(&mut rng, 3, 2);
        let exact = body.eval_exact(&xs).unwrap();
        let smooth = body.eval_smooth(&xs, eta).unwrap();
        let p = body.atoms().count() as f64;
        prop_assert!(smooth <= exact);
        prop_assert!(exact - smooth <= p.ln() / eta + 1e-12 * exact.abs().max(1.0));
    }

    #[test]
    fn random_bodies_are_concave_along_segments(seed in any::<u64>(), lambda in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let body = random_body(&mut rng, 2, 2);
        prop_assert!(body.is_concave());
        let (xa, xb) = (random_states(&mut rng, 2, 2), random_states(&mut rng, 2, 2));
        let mid: stlmas::StateMap = xa.iter().map(|(a, v)| (*a, v * lambda + &xb[a] * (1.0 - lambda))).collect();
        let f = |s: &stlmas::StateMap| body.eval_exact(s).unwrap();
        let chord = lambda * f(&xa) + (1.0 - lambda) * f(&xb);
        prop_assert!(f(&mid) >= chord - 1e-9 * chord.abs().max(1.0));
    }
}
