//! Conditional-Gaussian network samplers.
//!
//! Given layer ℓ, the pre-activations of layer ℓ+1 are i.i.d. across neurons
//! and jointly Gaussian with covariance C_b e₀e₀ᵀ + (C_W/n_ℓ)·G, where G is the
//! Gram matrix of the propagated vectors (σ(z), σ′(z)∂₁z, σ′(z)∂₂z) over the
//! neurons of layer ℓ. Sampling each layer from this conditional law is
//! equal in distribution to drawing the full weight matrices, at O(n) rather
//! than O(n²) cost per layer. The output layer is never sampled: its
//! conditional covariance Σ is returned instead, so that output moments are
//! Rao–Blackwellized (E[z^{2k}] = (2k−1)!!·E[Σ^k]).
//!
//! Gradients with respect to first-layer weights use the same idea in
//! reverse: conditional on the forward pass W^{(ℓ+1)}u = w, the weight matrix
//! equals w uᵀ/‖u‖² + W̃(I − uuᵀ/‖u‖²) with W̃ independent of everything
//! else, so Wᵀv = u (w·v)/‖u‖² + ‖v‖√(C_W/n_ℓ)(I − uuᵀ/‖u‖²)ζ with ζ standard
//! normal.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::network::NetworkSpec;

#[inline]
fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

#[inline]
fn sig(spec: &NetworkSpec, z: f64, out: &mut [f64; 2]) {
    spec.nl.eval_all(z, out);
}

/// Lower Cholesky factor of a 3×3 positive semi-definite matrix; directions
/// with a vanishing pivot are dropped.
fn chol3(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut l = [[0.0; 3]; 3];
    let scale = a[0][0].abs().max(a[1][1].abs()).max(a[2][2].abs());
    let tiny = 1e-14 * scale;
    for j in 0..3 {
        let d = a[j][j] - (0..j).map(|k| l[j][k] * l[j][k]).sum::<f64>();
        if d <= tiny {
            continue;
        }
        let ljj = d.sqrt();
        l[j][j] = ljj;
        for i in j + 1..3 {
            l[i][j] = (a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>()) / ljj;
        }
    }
    l
}

/// Output-layer conditional variance and per-layer mean squared
/// pre-activations for a value-only draw.
pub(crate) struct ValueDraw {
    /// Σ = C_b + (C_W/n_L)Σ_i σ(z_i^{(L)})² (= K^{(1)} when L = 0).
    pub sigma: f64,
    /// (1/n_ℓ)Σ_i (z_i^{(ℓ)})² for ℓ = 1..L.
    pub layer_mean_sq: Vec<f64>,
}

/// Value-only forward draw.
pub(crate) fn value_draw(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Result<ValueDraw> {
    let mut var = spec.k1();
    let mut layer_mean_sq = Vec::with_capacity(spec.widths.len());
    let mut buf = [0.0; 2];
    for &n in &spec.widths {
        let sd = var.sqrt();
        let (mut s2, mut zz) = (0.0, 0.0);
        for _ in 0..n {
            let z = sd * normal(rng);
            zz += z * z;
            sig(spec, z, &mut buf);
            s2 += buf[0] * buf[0];
        }
        layer_mean_sq.push(zz / n as f64);
        var = spec.c_b + spec.c_w * s2 / n as f64;
    }
    if !var.is_finite() {
        return Err(Error::NonFinite("sampled output variance".into()));
    }
    Ok(ValueDraw {
        sigma: var,
        layer_mean_sq,
    })
}

/// Draw tracking (z, ∂₁z, ∂₂z); returns the output conditional covariance
/// of (z, ∂₁z, ∂₂z) in the index order 0 = value, 1 = ∂₁, 2 = ∂₂.
pub(crate) fn deriv_draw(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Result<[[f64; 3]; 3]> {
    let x = &spec.input_x;
    let n0 = spec.n0 as f64;
    let w_sd = (spec.c_w / n0).sqrt();
    let rest_sd = (spec.c_w * x[2..].iter().map(|v| v * v).sum::<f64>() / n0).sqrt();
    let b_sd = spec.c_b.sqrt();
    let first_cov = || -> [[f64; 3]; 3] {
        let k = spec.c_w / n0;
        [
            [spec.k1(), k * x[0], k * x[1]],
            [k * x[0], k, 0.0],
            [k * x[1], 0.0, k],
        ]
    };
    if spec.widths.is_empty() {
        return Ok(first_cov());
    }
    let mut cur: Vec<[f64; 3]> = (0..spec.widths[0])
        .map(|_| {
            let w1 = w_sd * normal(rng);
            let w2 = w_sd * normal(rng);
            let z = b_sd * normal(rng) + rest_sd * normal(rng) + w1 * x[0] + w2 * x[1];
            [z, w1, w2]
        })
        .collect();
    let mut buf = [0.0; 2];
    let mut layer = 1;
    loop {
        let n = cur.len() as f64;
        let mut g = [[0.0; 3]; 3];
        for v in &cur {
            sig(spec, v[0], &mut buf);
            let u = [buf[0], buf[1] * v[1], buf[1] * v[2]];
            for a in 0..3 {
                for b in a..3 {
                    g[a][b] += u[a] * u[b];
                }
            }
        }
        let mut cov = [[0.0; 3]; 3];
        for a in 0..3 {
            for b in a..3 {
                cov[a][b] = spec.c_w * g[a][b] / n;
                cov[b][a] = cov[a][b];
            }
        }
        cov[0][0] += spec.c_b;
        if cov.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sampled derivative covariance".into()));
        }
        if layer == spec.widths.len() {
            return Ok(cov);
        }
        let l = chol3(&cov);
        let width = spec.widths[layer];
        cur.clear();
        for _ in 0..width {
            let e = [normal(rng), normal(rng), normal(rng)];
            cur.push([
                l[0][0] * e[0],
                l[1][0] * e[0] + l[1][1] * e[1],
                l[2][0] * e[0] + l[2][1] * e[1] + l[2][2] * e[2],
            ]);
        }
        layer += 1;
    }
}

/// g = ∂z_q/∂z^{(1)} for one output neuron q (length n₁; for L = 0 the
/// output layer is the first layer and g is the unit vector e_q).
pub(crate) fn first_layer_backprop(spec: &NetworkSpec, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let depth = spec.widths.len();
    if depth == 0 {
        let mut g = vec![0.0; spec.n_out];
        g[0] = 1.0;
        return Ok(g);
    }
    // Forward, keeping u = σ(z^{(ℓ)}), σ′(z^{(ℓ)}) and w^{(ℓ+1)} = W^{(ℓ+1)}u.
    let mut us: Vec<Vec<f64>> = Vec::with_capacity(depth);
    let mut ds: Vec<Vec<f64>> = Vec::with_capacity(depth);
    let mut ws: Vec<Vec<f64>> = Vec::with_capacity(depth);
    let mut buf = [0.0; 2];
    let sd1 = spec.k1().sqrt();
    let b_sd = spec.c_b.sqrt();
    let mut z: Vec<f64> = (0..spec.widths[0]).map(|_| sd1 * normal(rng)).collect();
    for li in 0..depth {
        let (mut u, mut d) = (Vec::with_capacity(z.len()), Vec::with_capacity(z.len()));
        for &zi in &z {
            sig(spec, zi, &mut buf);
            u.push(buf[0]);
            d.push(buf[1]);
        }
        if li + 1 < depth {
            let norm2: f64 = u.iter().map(|v| v * v).sum();
            let sd = (spec.c_w * norm2 / u.len() as f64).sqrt();
            let w: Vec<f64> = (0..spec.widths[li + 1]).map(|_| sd * normal(rng)).collect();
            z = w.iter().map(|wi| wi + b_sd * normal(rng)).collect();
            ws.push(w);
        }
        us.push(u);
        ds.push(d);
    }
    // Output row q: ∂z_q/∂z^{(L)} = W_{q·} ⊙ σ′.
    let n_last = spec.widths[depth - 1] as f64;
    let r_sd = (spec.c_w / n_last).sqrt();
    let mut v: Vec<f64> = ds[depth - 1]
        .iter()
        .map(|d| d * r_sd * normal(rng))
        .collect();
    for li in (0..depth - 1).rev() {
        let u = &us[li];
        let w = &ws[li];
        let n = u.len() as f64;
        let vnorm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = vnorm * (spec.c_w / n).sqrt();
        let mut t: Vec<f64> = (0..u.len()).map(|_| scale * normal(rng)).collect();
        let unorm2: f64 = u.iter().map(|a| a * a).sum();
        if unorm2 > 0.0 {
            let proj = t.iter().zip(u).map(|(a, b)| a * b).sum::<f64>() / unorm2;
            let along = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / unorm2;
            for (ti, ui) in t.iter_mut().zip(u) {
                *ti += (along - proj) * ui;
            }
        }
        v = t.iter().zip(&ds[li]).map(|(a, d)| a * d).collect();
    }
    if v.iter().any(|a| !a.is_finite()) {
        return Err(Error::NonFinite("back-propagated gradient".into()));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = [[2.0, 0.3, -0.1], [0.3, 1.0, 0.2], [-0.1, 0.2, 0.5]];
        let l = chol3(&a);
        for i in 0..3 {
            for j in 0..3 {
                let v: f64 = (0..3).map(|k| l[i][k] * l[j][k]).sum();
                assert!((v - a[i][j]).abs() < 1e-14);
            }
        }
        // Rank-deficient input keeps the reproducible directions.
        let s = [[1.0, 1.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 2.0]];
        let l = chol3(&s);
        assert!((l[1][0] - 1.0).abs() < 1e-14 && l[1][1] == 0.0);
        assert!((l[2][2] - 2f64.sqrt()).abs() < 1e-14);
    }
}
