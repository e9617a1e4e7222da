//! Monte Carlo oracle: explicit network draws, sampler cross-checks and
//! estimator examples.

use hierarchylab::homog::{kappa4_hat_exact, sample_exact, HomogParams};
use hierarchylab::mc::{
    estimate_cumulants, estimate_deriv_cumulants, estimate_evgp, forward_with_grads,
    forward_with_grads_draw, BatchSums, MCEstimate,
};
use hierarchylab::{NetworkSpec, Nonlinearity};

fn explicit(
    nl: Nonlinearity,
    n0: usize,
    widths: Vec<usize>,
    c_b: f64,
    c_w: f64,
    x: Vec<f64>,
) -> NetworkSpec {
    let spec = NetworkSpec {
        n0,
        widths,
        n_out: 2,
        nl,
        c_b,
        c_w,
        class: None,
        input_x: x,
    };
    spec.validate().unwrap();
    spec
}

/// |a − b| within `k` combined standard errors.
fn agree(a: &MCEstimate, b: &MCEstimate, k: f64) -> bool {
    (a.value - b.value).abs() <= k * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt()
}

#[test]
fn depth_zero_gradients_are_the_first_layer() {
    let x = vec![0.5, -1.0, 2.0];
    let spec = explicit(Nonlinearity::tanh(), 3, vec![], 0.0, 1.0, x.clone());
    let f = forward_with_grads(&spec, 7).unwrap();
    for q in 0..2 {
        let lin: f64 = f.dz_dx[q].iter().zip(&x).map(|(w, v)| w * v).sum();
        assert!((lin - f.z_out[q]).abs() < 1e-14);
        for (i, row) in f.dz_dw1[q].iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                let want = if i == q { x[j] } else { 0.0 };
                assert_eq!(*g, want);
            }
        }
    }
}

#[test]
fn linear_surrogate_gradient_is_the_weight_product() {
    // a₊ = 1, a₋ = 1 − 1e−12: a linear network up to 1e−12, so z = J·x.
    let nl = Nonlinearity::homog1(1.0, 1.0 - 1e-12).unwrap();
    let x = vec![0.3, -0.7, 1.1, 0.2];
    let spec = explicit(nl, 4, vec![5, 6, 3], 0.0, 1.0, x.clone());
    let f = forward_with_grads(&spec, 11).unwrap();
    for q in 0..2 {
        let lin: f64 = f.dz_dx[q].iter().zip(&x).map(|(w, v)| w * v).sum();
        assert!((lin - f.z_out[q]).abs() < 1e-9 * (1.0 + lin.abs()));
    }
}

#[test]
fn input_gradients_match_finite_differences() {
    let x: Vec<f64> = (0..10)
        .map(|i| 0.3 * (i as f64 - 4.5) / 4.5 + 0.1)
        .collect();
    let spec = explicit(
        Nonlinearity::tanh(),
        10,
        vec![12, 9, 7],
        0.05,
        1.0,
        x.clone(),
    );
    let seed = 2024;
    let f = forward_with_grads(&spec, seed).unwrap();
    let h = 1e-5;
    let scale = f.dz_dx[0]
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(1e-3);
    for j in 0..10 {
        let mut plus = spec.clone();
        plus.input_x[j] += h;
        let mut minus = spec.clone();
        minus.input_x[j] -= h;
        let zp = forward_with_grads(&plus, seed).unwrap().z_out[0];
        let zm = forward_with_grads(&minus, seed).unwrap().z_out[0];
        let fd = (zp - zm) / (2.0 * h);
        assert!(
            (fd - f.dz_dx[0][j]).abs() <= 1e-6 * scale,
            "j = {j}: {fd} vs {}",
            f.dz_dx[0][j]
        );
    }
    // Weight gradients factor as x_j·g_i.
    for row in &f.dz_dw1[0] {
        let g = row[0] / x[0];
        for (j, v) in row.iter().enumerate() {
            assert!((v - g * x[j]).abs() <= 1e-15 * (1.0 + v.abs()));
        }
    }
}

#[test]
fn conditional_sampler_matches_explicit_networks() {
    let x: Vec<f64> = (0..4).map(|i| 0.3 + 0.2 * i as f64).collect();
    let spec = NetworkSpec::critical(Nonlinearity::tanh(), 4, 6, 3, x.clone()).unwrap();
    let n = 100_000;
    let m2 = spec.norm_sq_over_n0();
    let m4 = spec.norm4_over_n0();
    let full = BatchSums::collect(n, 5, |i, out| {
        let f = forward_with_grads_draw(&spec, 99, i)?;
        let d1 = f.dz_dx[0][0];
        out[0] = f.z_out[0] * f.z_out[0];
        out[1] = d1 * d1;
        out[2] = f.dz_dx[0][0] * f.dz_dx[0][1];
        let g: Vec<f64> = f.dz_dw1[0].iter().map(|r| r[0] / x[0]).collect();
        let nf = g.len() as f64;
        let mean = m2 * g.iter().map(|v| v * v).sum::<f64>() / nf;
        out[3] = mean;
        out[4] = m4 * g.iter().map(|v| v.powi(4)).sum::<f64>() / nf - mean * mean;
        Ok(())
    })
    .unwrap();
    let d = estimate_deriv_cumulants(&spec, n, 5).unwrap();
    let e = estimate_evgp(&spec, n, 5).unwrap();
    assert!(agree(&full.estimate(|m| m[0]).unwrap(), &d.k00, 4.0));
    assert!(agree(&full.estimate(|m| m[1]).unwrap(), &d.k11, 4.0));
    assert!(agree(&full.estimate(|m| m[2]).unwrap(), &d.k12, 4.0));
    assert!(agree(&full.estimate(|m| m[3]).unwrap(), &e.grad_mean, 4.0));
    assert!(agree(&full.estimate(|m| m[4]).unwrap(), &e.grad_var, 4.0));
}

#[test]
fn depth_zero_is_gaussian() {
    let x = vec![1.0, 0.5, -0.5, 2.0];
    let spec = NetworkSpec::critical(Nonlinearity::tanh(), 4, 8, 0, x).unwrap();
    let c = estimate_cumulants(&spec, 20_000, 3).unwrap();
    assert_eq!(c.k4.value, 0.0);
    assert!((c.k2.value - spec.k1()).abs() < 1e-15);
    assert!(c.k3.z_score(0.0).abs() <= 3.0 && c.k5.z_score(0.0).abs() <= 3.0);
    let d = estimate_deriv_cumulants(&spec, 20_000, 3).unwrap();
    assert!((d.k11.value - spec.c_w / 4.0).abs() < 1e-15);
}

#[test]
fn k1100_is_negative_at_moderate_depth() {
    let spec = NetworkSpec::critical(Nonlinearity::tanh(), 16, 64, 16, vec![1.0; 16]).unwrap();
    let d = estimate_deriv_cumulants(&spec, 40_000, 8).unwrap();
    assert!(
        d.k1100.value + 3.0 * d.k1100.std_error < 0.0,
        "{:?}",
        d.k1100
    );
}

#[test]
fn gradient_ratio_examples() {
    // L = 0, linear surrogate: the ratio is fixed by the input alone.
    let nl = Nonlinearity::homog1(1.0, 1.0 - 1e-12).unwrap();
    let x = vec![1.0, 2.0, -0.5, 0.25];
    let spec = explicit(nl, 4, vec![], 0.0, 1.0, x.clone());
    let s = estimate_evgp(&spec, 10_000, 1).unwrap();
    let n0 = 4.0;
    let m2 = x.iter().map(|v| v * v).sum::<f64>() / n0;
    let m4 = x.iter().map(|v| v.powi(4)).sum::<f64>() / n0;
    let want = spec.n_out as f64 * m4 / (m2 * m2) - 1.0;
    assert!((s.ratio.value - want).abs() < 1e-12 * want);
    // Tanh at moderate depth: strictly positive.
    let spec = NetworkSpec::critical(Nonlinearity::tanh(), 8, 16, 4, vec![0.3; 8]).unwrap();
    let s = estimate_evgp(&spec, 10_000, 2).unwrap();
    assert!(s.ratio.value > 0.0 && s.grad_mean.value > 0.0);
}

#[test]
fn relu_moments_match_the_exact_sampler() {
    let x = vec![std::f64::consts::FRAC_1_SQRT_2; 4];
    let spec = NetworkSpec::critical(Nonlinearity::relu(), 4, 64, 8, x).unwrap();
    let n = 100_000;
    let c = estimate_cumulants(&spec, n, 21).unwrap();
    let zs = sample_exact(&spec, n, 22).unwrap();
    let exact = BatchSums::collect(n, 2, |i, out| {
        let z = zs[i as usize];
        out[0] = z * z;
        out[1] = z.powi(4);
        Ok(())
    })
    .unwrap();
    let k2 = exact.estimate(|m| m[0]).unwrap();
    let k4 = exact
        .estimate(|m| (m[1] - 3.0 * m[0] * m[0]) / 3.0)
        .unwrap();
    assert!(agree(&c.k2, &k2, 3.0), "{:?} {:?}", c.k2, k2);
    assert!(agree(&c.k4, &k4, 3.0), "{:?} {:?}", c.k4, k4);
    // Both agree with the exact finite-width law.
    let want = kappa4_hat_exact(&spec.widths, &HomogParams::relu());
    assert!(
        c.k4_hat.z_score(want).abs() <= 3.0,
        "{:?} vs {want}",
        c.k4_hat
    );
}

#[test]
fn relu_k4_hat_is_linear_in_depth() {
    let n = 1024;
    let depths = [2usize, 4, 8, 16];
    let ys: Vec<f64> = depths
        .iter()
        .map(|&l| {
            let spec = NetworkSpec::critical(Nonlinearity::relu(), 4, n, l, vec![0.5; 4]).unwrap();
            estimate_cumulants(&spec, 20_000, l as u64)
                .unwrap()
                .k4_hat
                .value
        })
        .collect();
    let xs: Vec<f64> = depths.iter().map(|&l| l as f64).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 4.0, ys.iter().sum::<f64>() / 4.0);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = sxy * sxy / (sxx * syy);
    assert!(r2 >= 0.99, "R² = {r2}");
    assert!(
        (slope * n as f64 / 5.0 - 1.0).abs() < 0.1,
        "slope = {slope}"
    );
}
