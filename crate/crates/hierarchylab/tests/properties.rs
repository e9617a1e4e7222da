//! Property tests for the invariants of every module.

use hierarchylab::bracket::Brackets;
use hierarchylab::crit::{chi_parallel, chi_perp, classify, tune_critical, verify_tuning};
use hierarchylab::derivs::{deriv_kernel_step, deriv_step, DerivKernelState, DerivState};
use hierarchylab::gauss::{
    expect1, expect2, hermite_rule, t_functional, weak_deriv_expect, Kernel1, Kernel2,
};
use hierarchylab::hierarchy::{
    cumulant_step, kernel_pair_step, kernel_step, kernel_trajectory, predict_normalized,
    run_hierarchy_from, CumulantState,
};
use hierarchylab::homog::{correlation_step, correlation_trajectory, HomogParams};
use hierarchylab::mc::{verify, MCEstimate};
use hierarchylab::{Nonlinearity, UniversalityClass};
use proptest::prelude::*;

fn leaky(a_minus: f64) -> Nonlinearity {
    Nonlinearity::homog1(1.0, a_minus).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tanh_derivative_identity(z in -20.0f64..20.0) {
        let t = Nonlinearity::tanh();
        let s = t.eval(z, 0).unwrap();
        prop_assert!((t.eval(z, 1).unwrap() - (1.0 - s * s)).abs() <= 1e-12);
    }

    #[test]
    fn homog_is_positively_homogeneous(
        ap in -3.0f64..3.0, am in -3.0f64..3.0, lambda in 0.01f64..50.0, z in -10.0f64..10.0,
    ) {
        prop_assume!((ap - am).abs() > 1e-3 && (ap + am).abs() > 1e-3);
        let nl = Nonlinearity::homog1(ap, am).unwrap();
        let lhs = nl.eval(lambda * z, 0).unwrap();
        let rhs = lambda * nl.eval(z, 0).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn quadrature_is_exact_on_monomials(nodes in 2usize..40, m_frac in 0.0f64..1.0, k in 0.05f64..4.0) {
        let m = ((2 * nodes - 1) as f64 * m_frac).floor() as i32;
        let got = expect1(|z| z.powi(m), Kernel1 { k }, nodes).unwrap();
        // Relative to ⟨|z|^m⟩, the natural scale of the cancellation for odd m.
        let scale = expect1(|z| z.abs().powi(m), Kernel1 { k }, nodes).unwrap();
        let want = if m % 2 == 1 { 0.0 } else { (1..m).step_by(2).map(|j| j as f64).product::<f64>() * k.powi(m / 2) };
        prop_assert!((got - want).abs() <= 1e-12 * scale, "m={m} got={got} want={want}");
    }

    #[test]
    fn stein_identity(k in 0.05f64..4.0, a in -2.0f64..2.0, b in -1.0f64..1.0) {
        let f = |z: f64| (a * z).sin() + b * z * z * (-0.1 * z * z).exp();
        let lhs = weak_deriv_expect(f, Kernel1 { k }, 1, 96).unwrap();
        let rhs = expect1(|z| z * f(z), Kernel1 { k }, 96).unwrap() / k;
        prop_assert!((lhs - rhs).abs() <= 1e-10);
    }

    #[test]
    fn weak_derivatives_match_direct(k in 0.1f64..3.0, a in -1.5f64..1.5, i in 1usize..5) {
        // f = sin(a z + 0.3): f^{(i)} = a^i sin(a z + 0.3 + iπ/2).
        let f = |z: f64| (a * z + 0.3).sin();
        let di = |z: f64| a.powi(i as i32) * (a * z + 0.3 + i as f64 * std::f64::consts::FRAC_PI_2).sin();
        let weak = weak_deriv_expect(f, Kernel1 { k }, i, 96).unwrap();
        let direct = expect1(di, Kernel1 { k }, 96).unwrap();
        prop_assert!((weak - direct).abs() <= 1e-8);
    }

    #[test]
    fn degenerate_bivariate_reduces(kaa in 0.1f64..3.0, kbb in 0.1f64..3.0, sign in prop::bool::ANY) {
        let s = if sign { 1.0 } else { -1.0 };
        let kab = s * (kaa * kbb).sqrt();
        let g = |a: f64, b: f64| a.tanh() * (b + 0.2).sin();
        let two = expect2(g, Kernel2::new(kaa, kab, kbb), 96).unwrap();
        let r = s * (kbb / kaa).sqrt();
        let one = expect1(|z| g(z, r * z), Kernel1 { k: kaa }, 96).unwrap();
        prop_assert!((two - one).abs() <= 1e-10);
    }

    #[test]
    fn t_functional_zero_order_vanishes(k in 0.01f64..5.0, am in -0.9f64..0.9) {
        for nl in [Nonlinearity::tanh(), leaky(am)] {
            let t = t_functional(&nl, Kernel1 { k }, 0, 1, 1.3).unwrap();
            prop_assert!(t.abs() <= 1e-12);
        }
    }

    #[test]
    fn homog_tunings_are_critical_at_every_k(am in -0.95f64..0.95, k in 0.001f64..10.0) {
        let nl = leaky(am);
        let t = tune_critical(&nl).unwrap();
        prop_assert_eq!(t.class, UniversalityClass::Homog1Class);
        verify_tuning(&nl, &t, 1e-9).unwrap();
        prop_assert!((chi_parallel(&nl, t.c_w, k).unwrap() - 1.0).abs() <= 1e-12);
        prop_assert!((chi_perp(&nl, t.c_w, k).unwrap() - 1.0).abs() <= 1e-12);
        let next = kernel_step(Kernel1 { k }, t.c_b, t.c_w, &nl).unwrap().k;
        prop_assert!((next - k).abs() <= 1e-12 * k);
    }

    #[test]
    fn correlation_map_matches_quadrature(am in -0.9f64..0.9, eps in 0.0f64..1.0) {
        let nl = leaky(am);
        let t = tune_critical(&nl).unwrap();
        let p = HomogParams::from_nonlinearity(&nl).unwrap();
        let out = kernel_pair_step(Kernel2::new(1.0, 1.0 - 2.0 * eps, 1.0), t.c_b, t.c_w, &nl).unwrap();
        prop_assert!(((1.0 - out.k_ab) / 2.0 - correlation_step(eps, &p).unwrap()).abs() <= 1e-9);
    }

    #[test]
    fn correlation_decays_to_zero(am in -0.9f64..0.9, eps0 in 0.001f64..0.999) {
        let p = HomogParams::from_nonlinearity(&leaky(am)).unwrap();
        let eps = correlation_trajectory(eps0, 400, &p).unwrap();
        // Monotone after finitely many steps and attracted to 0; the rate
        // is set by the map strength A, so the horizon scales with 1/A².
        let tail = &eps[200..];
        prop_assert!(tail.windows(2).all(|w| w[1] < w[0]));
        let a = p.map_strength();
        let steps = ((40.0 / a).powi(2) as usize).clamp(400, 200_000);
        let far = correlation_trajectory(eps0, steps, &p).unwrap();
        prop_assert!(far[steps] < 0.05, "A = {a}: eps = {}", far[steps]);
    }

    #[test]
    fn infinite_width_stays_gaussian(k1 in 0.01f64..3.0, depth in 1usize..30) {
        let tanh = Nonlinearity::tanh();
        let t = tune_critical(&tanh).unwrap();
        let mut s = CumulantState::initial(k1);
        for _ in 0..depth {
            s = cumulant_step(&s, f64::INFINITY, t.c_b, t.c_w, &tanh).unwrap();
            prop_assert!(s.k4 == 0.0 && s.k6 == 0.0 && s.k8 == 0.0);
        }
    }

    #[test]
    fn swap_symmetry_of_the_derivative_engine(x1 in -2.0f64..2.0, x2 in -2.0f64..2.0, x3 in 0.1f64..2.0) {
        let tanh = Nonlinearity::tanh();
        let a = DerivState::first_layer(0.0, 1.0, &[x1, x2, x3]).unwrap();
        let b = DerivState::first_layer(0.0, 1.0, &[x2, x1, x3]).unwrap();
        let (mut a, mut b) = (a, b);
        for _ in 0..3 {
            a = deriv_step(&a, 32.0, 0.0, 1.0, &tanh).unwrap();
            b = deriv_step(&b, 32.0, 0.0, 1.0, &tanh).unwrap();
        }
        let sa = a.swapped();
        for (u, v) in sa.fourth.kappa.iter().flatten().zip(b.fourth.kappa.iter().flatten()) {
            prop_assert!((u - v).abs() <= 1e-12 * (1.0 + u.abs()));
        }
        for (u, v) in sa.kernel.pairs().iter().zip(b.kernel.pairs().iter()) {
            prop_assert!((u - v).abs() <= 1e-14);
        }
    }

    #[test]
    fn orthogonal_seed_decouples(k00 in 0.05f64..2.0, k11 in 0.01f64..1.0, k22 in 0.01f64..1.0) {
        let tanh = Nonlinearity::tanh();
        let mut st = DerivKernelState { ell: 1, k00, k10: 0.0, k20: 0.0, k11, k22, k12: 0.0 };
        for _ in 0..10 {
            st = deriv_kernel_step(&st, 0.0, 1.0, &tanh).unwrap();
            prop_assert!(st.k10 == 0.0 && st.k20 == 0.0 && st.k12 == 0.0);
        }
    }

    #[test]
    fn verify_accepts_its_own_value(v in -10.0f64..10.0, se in 1e-6f64..10.0) {
        let est = MCEstimate { value: v, std_error: se, n_samples: 10_000, n_batches: 20 };
        let r = verify(v, &est, 3.0).unwrap();
        prop_assert!(r.pass && r.z == 0.0);
        prop_assert!(!verify(v + 10.0 * se, &est, 3.0).unwrap().pass);
    }
}

#[test]
fn hermite_rules_are_normalized() {
    for n in [1, 2, 5, 20, 64, 129, 257] {
        let r = hermite_rule(n);
        let mass: f64 = r.weights.iter().sum();
        assert!((mass - 1.0).abs() < 1e-13, "n = {n}");
    }
}

#[test]
fn tanh_susceptibility_approaches_one_from_below() {
    let tanh = Nonlinearity::tanh();
    assert_eq!(classify(&tanh), UniversalityClass::KStarZeroClass);
    let grid: Vec<f64> = (0..40).map(|i| 10f64.powf(1.0 - 0.15 * i as f64)).collect();
    let chis: Vec<f64> = grid
        .iter()
        .map(|&k| chi_parallel(&tanh, 1.0, k).unwrap())
        .collect();
    assert!(chis.iter().all(|&c| c < 1.0));
    // K decreasing along the grid: χ increases monotonically to 1.
    assert!(chis.windows(2).all(|w| w[1] > w[0]));
    assert!(1.0 - chis.last().unwrap() < 1e-4);
}

#[test]
fn tanh_kernel_decays_like_one_over_a_ell() {
    let tanh = Nonlinearity::tanh();
    let a = tanh.taylor_a().unwrap();
    let ks = kernel_trajectory(1.0, 10_000, 0.0, 1.0, &tanh).unwrap();
    assert!(ks.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    // |a ℓ K − 1| ≤ C ℓ^{−0.9} with one constant C = 2 over 10 ≤ ℓ ≤ 10⁴.
    for l in 10..=10_000usize {
        let dev = (a * l as f64 * ks[l - 1] - 1.0).abs();
        assert!(dev <= 2.0 * (l as f64).powf(-0.9), "ell = {l}: {dev}");
    }
}

#[test]
fn tanh_k4_hat_converges_at_fixed_xi() {
    let tanh = Nonlinearity::tanh();
    let target = predict_normalized(0.25, 2).unwrap();
    let errs: Vec<f64> = [16usize, 32, 64]
        .iter()
        .map(|&l| {
            let tr = run_hierarchy_from(1.0, &vec![4 * l; l], 0.0, 1.0, &tanh).unwrap();
            (tr.last().k4_hat() - target).abs()
        })
        .collect();
    assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");
}

#[test]
fn k0000_leading_coefficient() {
    // ℓ·n·κ_{(00)(00)}·(3a²/2) → 1 for the K* = 0 class.
    let tanh = Nonlinearity::tanh();
    let a = tanh.taylor_a().unwrap();
    let n = 1e6;
    let mut s = CumulantState::initial(1.0);
    for _ in 0..1000 {
        s = cumulant_step(&s, n, 0.0, 1.0, &tanh).unwrap();
    }
    let lead = 1000.0 * n * s.k4 * 1.5 * a * a;
    assert!((lead - 1.0).abs() < 0.1, "{lead}");
}

#[test]
fn k1100_turns_negative_early() {
    let tanh = Nonlinearity::tanh();
    let mut st = DerivState::first_layer(0.0, 1.0, &[1.0; 16]).unwrap();
    for _ in 0..3 {
        st = deriv_step(&st, 256.0, 0.0, 1.0, &tanh).unwrap();
    }
    assert!(st.fourth.k1100() < 0.0);
}

#[test]
fn brackets_are_consistent_with_quadrature() {
    let tanh = Nonlinearity::tanh();
    let b = Brackets::new(&tanh, 0.7).unwrap();
    let direct = expect1(|z| z.tanh().powi(2), Kernel1 { k: 0.7 }, 96).unwrap();
    assert!((b.get(0, 2, 0).unwrap() - direct).abs() < 1e-12);
}
