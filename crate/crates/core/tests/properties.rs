use proptest::prelude::*;

use gprox::bench::format_sig6;
use gprox::emd::{disc_measures, emd_dual_bound, emd_dual_candidate, emd_energy, emd_primal_update, emd_setup};
use gprox::field::{div, grad, laplacian, tv_seminorm, GridFunction, GridSpec, ScalarField, VectorField};
use gprox::rof::{disc_image, rof_dual_bound, rof_dual_update, rof_energy, RofProblem};
use gprox::spectral::make_plan;

fn scalar(side: usize) -> impl Strategy<Value = ScalarField> {
    prop::collection::vec(-10.0f64..10.0, side * side)
        .prop_map(move |v| ScalarField::from_values(GridSpec::new(side).unwrap(), v).unwrap())
}

fn vector(side: usize) -> impl Strategy<Value = VectorField> {
    (
        prop::collection::vec(-3.0f64..3.0, side * side),
        prop::collection::vec(-3.0f64..3.0, side * side),
    )
        .prop_map(move |(x, y)| VectorField::from_components(GridSpec::new(side).unwrap(), x, y).unwrap())
}

fn sized_pair() -> impl Strategy<Value = (ScalarField, VectorField)> {
    (2usize..12).prop_flat_map(|m| (scalar(m), vector(m)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn grad_div_adjoint((u, p) in sized_pair()) {
        let lhs = grad(&u).dot(&p);
        let rhs = -u.dot(&div(&p));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + u.norm_l2() * p.norm_l2()) * 100.0);
    }

    #[test]
    fn laplacian_is_negative_semidefinite(u in scalar(9)) {
        prop_assert!(u.dot(&laplacian(&u)) <= 1e-9);
    }

    #[test]
    fn tv_is_absolutely_homogeneous_and_shift_invariant(u in scalar(8), c in -5.0f64..5.0, k in -3.0f64..3.0) {
        let shifted = u.map(|v| k * v + c);
        prop_assert!((tv_seminorm(&shifted) - k.abs() * tv_seminorm(&u)).abs() <= 1e-9 * (1.0 + tv_seminorm(&u)));
    }

    #[test]
    fn unit_ball_projection_is_idempotent(p in vector(7)) {
        let mut q = p.clone();
        q.project_unit_ball();
        prop_assert!(q.norm_linf() <= 1.0 + 1e-12);
        let mut r = q.clone();
        r.project_unit_ball();
        prop_assert!((&r - &q).norm_linf() <= 1e-15);
    }

    #[test]
    fn helmholtz_solve_inverts(f in scalar(12), a in 0.01f64..1e3) {
        let plan = make_plan(f.spec());
        let u = plan.solve_helmholtz(a, &f).unwrap();
        let mut r = laplacian(&u);
        r.axpby(-1.0, &u, a);
        prop_assert!((&r - &f).norm_l2() <= 1e-10 * f.norm_l2().max(1e-300));
    }

    #[test]
    fn leray_is_an_orthogonal_projection(p in vector(10), q in vector(10)) {
        let plan = make_plan(p.spec());
        let pp = plan.leray_project(&p);
        let pq = plan.leray_project(&q);
        prop_assert!((&plan.leray_project(&pp) - &pp).norm_l2() <= 1e-10 * p.norm_l2());
        // self-adjoint
        prop_assert!((pp.dot(&q) - p.dot(&pq)).abs() <= 1e-10 * p.norm_l2() * q.norm_l2());
        prop_assert!(pp.norm_l2() <= p.norm_l2() * (1.0 + 1e-12));
    }

    #[test]
    fn rof_weak_duality(u in scalar(10), p in vector(10), lambda in 0.5f64..50.0) {
        let spec = u.spec();
        let prob = RofProblem::new(disc_image(spec), lambda, make_plan(spec)).unwrap();
        prop_assert!(rof_dual_bound(&prob, &p) <= rof_energy(&prob, &u) + 1e-9);
    }

    #[test]
    fn rof_dual_update_stays_feasible(p in vector(9), u in scalar(9), sigma in 0.001f64..100.0) {
        prop_assert!(rof_dual_update(&p, &u, sigma).norm_linf() <= 1.0 + 1e-12);
    }

    #[test]
    fn emd_iterates_stay_divergence_free(p in vector(16), tau in 0.01f64..50.0) {
        let spec = p.spec();
        let (a, b) = disc_measures(spec);
        let prob = emd_setup(a, b, make_plan(spec)).unwrap();
        let u = emd_primal_update(&prob, &prob.zero_flux(), &p, tau);
        prop_assert!(div(&u).norm_l2() <= 1e-9 * u.norm_l2().max(1e-300));
        let q = emd_dual_candidate(&prob, &p);
        prop_assert!(q.norm_linf() <= 1.0 + 1e-12);
        prop_assert!(emd_dual_bound(&prob, &p) <= emd_energy(&prob, &u).unwrap() + 1e-9);
    }

    #[test]
    fn sig6_keeps_six_digits(x in -1e12f64..1e12) {
        let s = format_sig6(x);
        let back: f64 = s.parse().unwrap();
        prop_assert!((back - x).abs() <= 5e-6 * x.abs() + 1e-300, "{} -> {}", x, s);
        prop_assert!(!s.contains(','));
    }
}
