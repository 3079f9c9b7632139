use cco_core::conicore::{ConicBackend, InteriorPoint, SolveStatus};
use cco_core::polycore::{Exponent, Poly};
use cco_core::robustsolve::{
    build_primal_relaxation, check_robust_feasibility, relaxation_order_floor, solve_linear_cco,
    solve_sosconvex_cco, DecisionSet, PerturbedConstraint, ReportStatus, RobustOptions,
    UncertaintySet,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn e(v: &[u32]) -> Exponent {
    Exponent::new(v.to_vec())
}

/// Quartic constraint in three uniform variables with two linear cuts.
fn quartic3() -> (Vec<f64>, PerturbedConstraint, DecisionSet) {
    let pc = PerturbedConstraint::from_terms(
        3,
        3,
        [
            (e(&[4, 0, 0]), vec![-3.0, 2.0, 0.0], 0.0),
            (e(&[0, 4, 0]), vec![1.0, 0.0, 3.0], 1.0),
            (e(&[2, 1, 0]), vec![0.0, -3.0, 2.0], 3.0),
            (e(&[0, 2, 1]), vec![1.0, 0.0, 2.0], 0.0),
            (e(&[0, 0, 0]), vec![2.0, 1.0, -2.0], 0.0),
        ],
    )
    .unwrap();
    let mut set = DecisionSet::new(3);
    set.linear_ineqs.push((vec![-1.0, -1.0, -1.0], -4.0));
    set.linear_ineqs.push((vec![-1.0, 2.0, -1.0], -2.0));
    (vec![2.0, 3.0, 1.0], pc, set)
}

fn quartic_set(gamma: f64) -> UncertaintySet {
    UncertaintySet::new(gamma, DVector::from_element(3, 1.0), DMatrix::identity(3, 3) / 3.0).unwrap()
}

/// Random degree-2 constraint in two variables over a box, bounded by construction.
fn random_instance(seed: u64) -> (Vec<f64>, PerturbedConstraint, DecisionSet, UncertaintySet) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 2;
    let rows = 6;
    let a = DMatrix::from_fn(rows, n, |_, _| rng.random_range(-1.0..1.0));
    let mut b = DVector::from_fn(rows, |_, _| rng.random_range(-0.5..0.5));
    // a positive constant keeps x = 0 robustly feasible for moderate Γ
    b[0] = 3.0;
    let pc = PerturbedConstraint::new(2, a, b).unwrap();
    let mut set = DecisionSet::new(n);
    for i in 0..n {
        let mut up = vec![0.0; n];
        up[i] = -1.0;
        set.linear_ineqs.push((up, -2.0));
        let mut lo = vec![0.0; n];
        lo[i] = 1.0;
        set.linear_ineqs.push((lo, -2.0));
    }
    let c = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let u = UncertaintySet::new(
        0.5,
        DVector::from_fn(2, |_, _| rng.random_range(-0.3..0.3)),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.2, 0.6]),
    )
    .unwrap();
    (c, pc, set, u)
}

#[test]
fn quartic_example_certifies_at_the_first_order() {
    let (c, pc, set) = quartic3();
    let u = quartic_set(1.5387);
    let opts = RobustOptions::default();
    let rep = solve_linear_cco(&c, &pc, &set, &u, &opts).unwrap();
    assert_eq!(rep.status, ReportStatus::Certified);
    assert_eq!(rep.k_used, relaxation_order_floor(pc.d()));
    assert_eq!(rep.flat_t, Some(rep.k_used));
    assert!((rep.fstar + 1.6382).abs() <= 1e-2 * (1.0 + 1.6382));
    assert!(set.violation(&rep.xstar) <= 1e-7);
    let chk = check_robust_feasibility(&rep.xstar, &pc, &u, rep.k_used, 10_000, 1, &opts).unwrap();
    assert!(chk.bound >= -1e-6, "{chk:?}");
    assert!(chk.sample_min >= -1e-6, "{chk:?}");
    // z lies in the moment cone of U in the original coordinates
    let z = rep.dual_z.unwrap();
    let m = cco_core::momentkit::moment_matrix(&z, rep.k_used).unwrap();
    let l = cco_core::momentkit::localizing_matrix(&u.g(), &z, rep.k_used).unwrap();
    assert!(z.entries()[0] > 0.0);
    assert!(m.symmetric_eigenvalues().min() >= -1e-7 * m.amax());
    // the measure sits on the boundary of U, so L is nearly zero
    assert!(l.symmetric_eigenvalues().min() >= -1e-7 * m.amax());
    assert_eq!(rep.dual_y.unwrap().degree(), pc.d());
}

#[test]
fn extracted_and_explicit_duals_agree() {
    let (c, pc, set) = quartic3();
    let opts = RobustOptions::default();
    for g in [0.5, 1.5387, 3.0] {
        let rep = solve_linear_cco(&c, &pc, &set, &quartic_set(g), &opts).unwrap();
        for rec in &rep.trace {
            let ex = rec.explicit_dual.expect("small programs are cross-checked");
            assert!((ex - rec.f_mom).abs() <= 10.0 * opts.gap_tol * (1.0 + rec.f_sos.abs()));
            // weak duality per order
            assert!(rec.f_mom <= rec.f_sos + opts.gap_tol * (1.0 + rec.f_sos.abs()));
        }
    }
}

#[test]
fn optimal_value_is_monotone_in_the_set_size() {
    let opts = RobustOptions::default();
    let (c, pc, set) = quartic3();
    let mut prev = f64::NEG_INFINITY;
    for g in [0.25, 0.75, 1.5, 2.5, 4.0] {
        let rep = solve_linear_cco(&c, &pc, &set, &quartic_set(g), &opts).unwrap();
        assert!(rep.fstar >= prev - opts.gap_tol, "Γ={g}: {} < {prev}", rep.fstar);
        prev = rep.fstar;
    }
    for seed in 0..5 {
        let (c, pc, set, u) = random_instance(seed);
        let mut prev = f64::NEG_INFINITY;
        for s in [0.2, 0.6, 1.0, 1.6] {
            let us = u.with_gamma(u.gamma() * s).unwrap();
            let rep = solve_linear_cco(&c, &pc, &set, &us, &opts).unwrap();
            assert_ne!(rep.status, ReportStatus::Infeasible, "seed {seed}");
            assert!(rep.fstar >= prev - opts.gap_tol, "seed {seed}");
            prev = rep.fstar;
        }
    }
}

#[test]
fn relaxation_values_are_monotone_in_the_order() {
    let opts = RobustOptions::default();
    let (c, pc, set) = quartic3();
    let u = quartic_set(1.5387);
    let mut prev = f64::INFINITY;
    for k in 2..=4 {
        let relax = build_primal_relaxation(&c, &pc, &set, &u, k, &opts).unwrap();
        let sol = InteriorPoint.solve(&relax.program, &opts.solver).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert!(sol.primal_objective <= prev + 1e-6 * (1.0 + prev.abs().min(1e6)), "k={k}");
        prev = sol.primal_objective;
    }
    for seed in 5..8 {
        let (c, pc, set, u) = random_instance(seed);
        let mut prev = f64::INFINITY;
        for k in 1..=3 {
            let relax = build_primal_relaxation(&c, &pc, &set, &u, k, &opts).unwrap();
            let sol = InteriorPoint.solve(&relax.program, &opts.solver).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal, "seed {seed} k={k}");
            assert!(sol.primal_objective <= prev + 1e-6 * (1.0 + prev.abs().min(1e6)));
            prev = sol.primal_objective;
        }
    }
}

#[test]
fn too_low_an_order_is_rejected() {
    let (c, pc, set) = quartic3();
    let r = build_primal_relaxation(&c, &pc, &set, &quartic_set(1.0), 1, &RobustOptions::default());
    assert!(matches!(r, Err(cco_core::Error::OrderTooSmall { k: 1, needed: 2 })));
}

#[test]
fn whitening_does_not_change_the_answer() {
    let (c, pc, set) = quartic3();
    let u = quartic_set(1.5387);
    let a = solve_linear_cco(&c, &pc, &set, &u, &RobustOptions::default()).unwrap();
    let plain = RobustOptions {
        whiten: false,
        ..Default::default()
    };
    let b = solve_linear_cco(&c, &pc, &set, &u, &plain).unwrap();
    assert!((a.fstar - b.fstar).abs() <= 1e-5 * (1.0 + a.fstar.abs()));
    let (za, zb) = (a.dual_z.unwrap(), b.dual_z.unwrap());
    let rel = za
        .entries()
        .iter()
        .zip(zb.entries())
        .map(|(p, q)| (p - q).abs() / (1.0 + q.abs()))
        .fold(0.0, f64::max);
    assert!(rel < 1e-3, "{rel:e}");
}

/// SOS-convex objective with two SOS-concave constraints in four variables.
#[test]
fn sosconvex_path_satisfies_jensen_bounds() {
    let x1 = Poly::var(4, 0);
    let x2 = Poly::var(4, 1);
    let x3 = Poly::var(4, 2);
    let x4 = Poly::var(4, 3);
    let c = |v: f64| Poly::constant(4, v);
    let sq = |p: &Poly| p * p;
    let f = &(&(&(&c(6.0) * &sq(&sq(&x1))) + &sq(&x3)) + &(&c(3.0) * &sq(&x4))) + &(&c(5.0) * &x2);
    let s12 = &x1 + &x2;
    let u1 = &(&(&(&c(11.0) - &sq(&sq(&s12))) - &(&c(2.0) * &sq(&sq(&x3))))
        - &sq(&(&(&c(3.0) * &x3) - &x4)))
        + &(&c(5.0) * &x2);
    let u2 = &(&(&(&c(6.0) - &sq(&(&x2 - &x3))) - &(&c(3.0) * &(&x2 * &x3))) + &(&c(4.0) * &x3))
        + &(&c(3.0) * &x4);
    let mut set = DecisionSet::new(4);
    set.poly_ineqs = vec![u1.clone(), u2.clone()];
    let pc = PerturbedConstraint::from_terms(
        4,
        4,
        [
            (e(&[2, 4, 0, 0]), vec![8.0, 1.0, 6.0, 0.0], 0.0),
            (e(&[0, 0, 2, 2]), vec![0.0, 0.0, 1.0, -2.0], 0.0),
            (e(&[0, 1, 2, 0]), vec![0.0, 1.0, 0.0, 3.0], 0.0),
            (e(&[1, 1, 0, 0]), vec![1.0, -2.0, 1.0, 0.0], 0.0),
            (e(&[0, 0, 1, 1]), vec![2.0, 0.0, 3.0, 0.0], 1.0),
            (e(&[0, 0, 0, 0]), vec![8.0, -4.0, -2.0, 0.0], 0.0),
        ],
    )
    .unwrap();
    let u = UncertaintySet::new(
        0.2918,
        DVector::from_vec(vec![0.5, 2.0, 3.0, 4.0]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![0.05, 2.0, 6.0, 8.0])),
    )
    .unwrap();
    let opts = RobustOptions::default();
    let rep = solve_sosconvex_cco(&f, &pc, &set, &u, &opts).unwrap();
    assert!(rep.is_certified());
    assert_eq!(rep.k_used, 3);
    let x = &rep.xstar;
    for ui in [&u1, &u2] {
        assert!(ui.eval(x).unwrap() >= -opts.cert_tol);
    }
    assert!(f.eval(x).unwrap() <= rep.fstar + 1e-6 * (1.0 + rep.fstar.abs()));
    assert!((rep.fstar + 8.2948).abs() <= 1e-2 * (1.0 + 8.2948));
    let chk = check_robust_feasibility(x, &pc, &u, rep.k_used, 10_000, 3, &opts).unwrap();
    assert!(chk.bound >= -1e-6 && chk.sample_min >= -1e-6, "{chk:?}");
}
