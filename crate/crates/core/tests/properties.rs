use std::sync::Arc;

use proptest::prelude::*;

use fes_core::algorithms::{prox_grad_operator, prox_grad_potential_operator, relaxed_step};
use fes_core::certificates::{matrix_power_norm, power_bound_2x2, spectral_radius_2x2, CertificateBundle};
use fes_core::equilibrium::{box_resolvent, identity_resolvent, EquilibriumProblem, ProblemConstants};
use fes_core::linalg;
use fes_core::plant::{BoxSet, KFunction};

prop_compose! {
    fn bundle()(
        mu in 0.05f64..5.0,
        alpha1 in 0.1f64..2.0,
        ratio in 1.0f64..20.0,
        ell_g in 0.0f64..3.0,
        ell_x in 0.0f64..3.0,
        ell_u_star in 0.0f64..2.0,
        c_t in 0.0f64..0.99,
        ell_t in 0.0f64..2.0,
        lmin in 0.2f64..2.0,
        kappa in 1.0f64..5.0,
    ) -> CertificateBundle<f64> {
        CertificateBundle {
            mu,
            alpha1,
            alpha2: alpha1 * ratio,
            ell_g,
            ell_x,
            sigma_c: KFunction::quadratic(1.0),
            ell_u_star,
            c_t,
            ell_t,
            lambda_min_p: lmin,
            lambda_max_p: lmin * kappa,
        }
    }
}

/// Diagonal quadratic `F(u) = diag(d) u − b` with `m = min d`, `ℓ = max d`.
fn diagonal_problem(d: Vec<f64>, b: Vec<f64>, boxed: bool) -> EquilibriumProblem<f64> {
    let n = d.len();
    let (m, l) = (d.iter().copied().fold(f64::INFINITY, f64::min), d.iter().copied().fold(0.0, f64::max));
    let resolvent = if boxed { box_resolvent(BoxSet::cube(n, -1.0, 1.0).unwrap()) } else { identity_resolvent() };
    EquilibriumProblem::new(
        n,
        1,
        Arc::new(move |u: &[f64], _y: &[f64]| (0..u.len()).map(|i| d[i] * u[i] - b[i]).collect()),
        resolvent,
        ProblemConstants { lipschitz_f: l, strong_monotonicity: m, lipschitz_solution: 0.0, lipschitz_output: 0.0 },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn certified_pairs_have_spectral_radius_below_one(b in bundle(), dt in 1e-3f64..10.0, s in 1e-6f64..1.0) {
        let tau = b.tau_min() + dt;
        let eps = s * b.eps_max(tau).unwrap().min(1.0);
        prop_assume!(eps > 0.0);
        prop_assert!(b.is_certified(tau, eps));
        prop_assert!(b.rho(tau, eps).unwrap() < 1.0);
    }

    #[test]
    fn below_minimum_period_is_never_certified(b in bundle(), f in 0.01f64..0.999, eps in 0.01f64..=1.0) {
        prop_assume!(b.tau_min() > 1e-9);
        let tau = f * b.tau_min();
        prop_assert!(!b.is_certified(tau, eps));
        // c_W > 1 there, and M₂₂ ≥ c_W
        prop_assert!(b.rho(tau, eps).unwrap() > 1.0);
    }

    #[test]
    fn frontier_is_monotone(b in bundle(), dt in 1e-3f64..5.0, grow in 1e-3f64..5.0, s in 0.0f64..1.0) {
        let t1 = b.tau_min() + dt;
        let t2 = t1 + grow;
        let (e1, e2) = (b.eps_max(t1).unwrap(), b.eps_max(t2).unwrap());
        prop_assert!(e2 >= e1);
        // downward closed in ε, upward closed in τ
        let eps = (s * e1.min(1.0)).max(1e-9);
        if b.is_certified(t1, eps) {
            prop_assert!(b.is_certified(t1, eps * 0.5));
            prop_assert!(b.is_certified(t2, eps));
        }
        prop_assert!(b.rho(t2, eps).unwrap() <= b.rho(t1, eps).unwrap() + 1e-12);
    }

    #[test]
    fn matrix_powers_obey_the_geometric_bound(m in prop::array::uniform4(0.0f64..2.0), k in 0usize..60) {
        let m = [[m[0], m[1]], [m[2], m[3]]];
        let (c_m, r) = power_bound_2x2(&m).unwrap();
        prop_assert!(c_m >= spectral_radius_2x2(&m).unwrap());
        let bound = r * c_m.powi(k as i32);
        prop_assert!(matrix_power_norm(&m, k) <= bound * (1.0 + 1e-9) + 1e-12, "k = {}, bound = {}", k, bound);
    }

    #[test]
    fn comparison_functions_are_class_k(gain in 1e-3f64..100.0, z_max in 1e-2f64..100.0) {
        for f in [KFunction::quadratic(gain), KFunction::linear(gain)] {
            prop_assert!(f.is_class_k_on(z_max, 64));
            prop_assert!(f.sqrt().is_class_k_on(z_max, 64));
        }
        let b = CertificateBundle { sigma_c: KFunction::quadratic(gain), ..bundle_fixed() };
        // σ = √σ_c is linear for a quadratic σ_c
        prop_assert!((b.sigma(z_max) - gain.sqrt() * z_max).abs() <= 1e-9 * (1.0 + z_max));
    }

    #[test]
    fn prox_grad_contracts_at_rate_c_t(
        d in prop::collection::vec(0.2f64..5.0, 1..8),
        u in prop::collection::vec(-3.0f64..3.0, 8),
        frac in 0.01f64..0.99,
        eps in 0.01f64..=1.0,
        boxed in any::<bool>(),
    ) {
        let n = d.len();
        let b: Vec<f64> = d.iter().enumerate().map(|(i, di)| di * (0.3 * i as f64 - 0.5)).collect();
        let u_star: Vec<f64> = (0..n).map(|i| b[i] / d[i]).map(|v| if boxed { v.clamp(-1.0, 1.0) } else { v }).collect();
        let p = diagonal_problem(d, b, boxed);
        let (m, l) = (p.constants.strong_monotonicity, p.constants.lipschitz_f);
        let u = &u[..n];
        prop_assume!(linalg::dist(u, &u_star) > 1e-9);
        let op = prox_grad_operator(&p, frac * 2.0 * m / (l * l)).unwrap();
        let next = relaxed_step(&op, eps, u, &[0.0]).unwrap();
        let ratio = linalg::dist(&next, &u_star) / linalg::dist(u, &u_star);
        prop_assert!(ratio <= op.relaxed_contraction(eps) + 1e-12);
        let pot = prox_grad_potential_operator(&p, frac * 2.0 / l).unwrap();
        let next = pot.step(u, &[0.0]).unwrap();
        prop_assert!(linalg::dist(&next, &u_star) <= pot.c_t() * linalg::dist(u, &u_star) + 1e-12);
    }

    #[test]
    fn box_projection_is_idempotent_and_nonexpansive(
        a in prop::collection::vec(-5.0f64..5.0, 3),
        b in prop::collection::vec(-5.0f64..5.0, 3),
    ) {
        let set = BoxSet::new(vec![-1.0, 0.0, -2.0], vec![1.0, 0.5, 3.0]).unwrap();
        let (pa, pb) = (set.project(&a), set.project(&b));
        prop_assert!(set.contains(&pa));
        prop_assert_eq!(set.project(&pa), pa.clone());
        prop_assert!(linalg::dist(&pa, &pb) <= linalg::dist(&a, &b) + 1e-12);
    }
}

fn bundle_fixed() -> CertificateBundle<f64> {
    CertificateBundle {
        mu: 1.0,
        alpha1: 1.0,
        alpha2: 2.0,
        ell_g: 1.0,
        ell_x: 1.0,
        sigma_c: KFunction::quadratic(1.0),
        ell_u_star: 1.0,
        c_t: 0.5,
        ell_t: 1.0,
        lambda_min_p: 1.0,
        lambda_max_p: 1.0,
    }
}
