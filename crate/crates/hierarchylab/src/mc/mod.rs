//! Monte Carlo oracle for finite-width networks.
//!
//! Estimators draw networks with the conditional samplers of [`fast`],
//! reduce observables in fixed batches ([`stats`]) and report every
//! quantity as an [`MCEstimate`] with a batch-means standard error.
//! [`forward_with_grads`] materializes one explicit network and is the
//! reference the samplers are tested against.
//!
//! Cumulant normalization: κ₄, κ₆, κ₈ are the joint cumulants of z divided
//! by 3, 15 and 105, so they are directly comparable with the recursions.

mod fast;
mod full;
pub mod stats;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::derivs::PAIRS;
use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::rng::draw_rng;

pub use full::{forward_with_grads, forward_with_grads_draw, ForwardGrads};
pub use stats::{
    cumulants_from_moments, verify, BatchSums, MCEstimate, VerifyReport, MIN_SAMPLES, N_BATCHES,
};

/// Output-cumulant estimates for z₁^{(L+1)}.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CumulantEstimates {
    /// κ₂ = Var z₁.
    pub k2: MCEstimate,
    /// Third cumulant (should vanish).
    pub k3: MCEstimate,
    /// Fourth cumulant / 3.
    pub k4: MCEstimate,
    /// Fifth cumulant (should vanish).
    pub k5: MCEstimate,
    /// Sixth cumulant / 15.
    pub k6: MCEstimate,
    /// Eighth cumulant / 105.
    pub k8: MCEstimate,
    /// κ₄/κ₂².
    pub k4_hat: MCEstimate,
    /// κ₆/κ₂³.
    pub k6_hat: MCEstimate,
    /// κ₈/κ₂⁴.
    pub k8_hat: MCEstimate,
    /// Cov(z₁², z₂²) between two output neurons.
    pub cross_k0000: MCEstimate,
    /// Var z^{(ℓ)} for ℓ = 1..L+1 (the last entry is the output layer).
    pub layer_variances: Vec<MCEstimate>,
}

/// Estimates of covariances of (z, ∂₁z, ∂₂z) at the output and of their
/// cross-neuron fourth cumulants (index 0 = value, 1/2 = input directions).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DerivEstimates {
    pub k00: MCEstimate,
    pub k10: MCEstimate,
    pub k20: MCEstimate,
    pub k11: MCEstimate,
    pub k22: MCEstimate,
    pub k12: MCEstimate,
    /// κ_{(00)(00)} = Cov(z₁², z₂²).
    pub k0000: MCEstimate,
    /// κ_{(11)(00)} = Cov((∂₁z₁)², z₂²).
    pub k1100: MCEstimate,
    /// κ_{(11)(11)} = Cov((∂₁z₁)², (∂₁z₂)²).
    pub k1111: MCEstimate,
    /// κ_{(11)(22)} = Cov((∂₁z₁)², (∂₂z₂)²).
    pub k1122: MCEstimate,
    /// κ_{(12)(12)} = Cov(∂₁z₁∂₂z₁, ∂₁z₂∂₂z₂).
    pub k1212: MCEstimate,
    /// κ_{(11)(00)}/(κ_(11)κ_(00)) with the estimated covariances.
    pub k1100_hat: MCEstimate,
    /// κ_{(11)(11)}/κ_(11)².
    pub k1111_hat: MCEstimate,
    /// κ_{(11)(22)}/(κ_(11)κ_(22)).
    pub k1122_hat: MCEstimate,
    /// κ_{(12)(12)}/(κ_(11)κ_(22)).
    pub k1212_hat: MCEstimate,
}

/// First-layer weight-gradient statistics for output neuron q = 1.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradStats {
    /// E[GradMean⁽¹⁾].
    pub grad_mean: MCEstimate,
    /// E[GradVar⁽¹⁾].
    pub grad_var: MCEstimate,
    /// E[GradVar⁽¹⁾]/E[GradMean⁽¹⁾]².
    pub ratio: MCEstimate,
}

/// Estimates output cumulants, the cross-neuron fourth cumulant and the
/// per-layer variances.
///
/// Even moments are Rao–Blackwellized through the output conditional
/// variance Σ (so κ₂ₖ/(2k−1)!! is the k-th cumulant of Σ and the
/// cross-neuron covariance equals Var Σ); odd cumulants use one explicit
/// output sample per draw so that their vanishing is actually tested.
pub fn estimate_cumulants(
    spec: &NetworkSpec,
    n_samples: usize,
    seed: u64,
) -> Result<CumulantEstimates> {
    spec.validate()?;
    stats::check_samples(n_samples)?;
    let depth = spec.widths.len();
    let n_obs = 9 + depth;
    let sums = BatchSums::collect(n_samples, n_obs, |i, out| {
        let mut rng = draw_rng(seed, i);
        let d = fast::value_draw(spec, &mut rng)?;
        let s = d.sigma;
        let z = s.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mut p = 1.0;
        for o in out.iter_mut().take(4) {
            p *= s;
            *o = p;
        }
        let mut p = 1.0;
        for o in out[4..9].iter_mut() {
            p *= z;
            *o = p;
        }
        out[9..].copy_from_slice(&d.layer_mean_sq);
        Ok(())
    })?;
    let even = |m: &[f64]| -> [f64; 9] {
        // Raw moments of z from those of Σ: E z^{2k} = (2k−1)!! E Σ^k.
        let mut mom = [0.0; 9];
        mom[0] = 1.0;
        mom[2] = m[0];
        mom[4] = 3.0 * m[1];
        mom[6] = 15.0 * m[2];
        mom[8] = 105.0 * m[3];
        cumulants_from_moments(&mom)
    };
    let odd = |m: &[f64]| -> [f64; 9] {
        let mut mom = [0.0; 9];
        mom[0] = 1.0;
        mom[1..6].copy_from_slice(&m[4..9]);
        cumulants_from_moments(&mom)
    };
    let mut layer_variances: Vec<MCEstimate> = (0..depth)
        .map(|l| sums.estimate(|m| m[9 + l]))
        .collect::<Result<_>>()?;
    layer_variances.push(sums.estimate(|m| m[0])?);
    Ok(CumulantEstimates {
        k2: sums.estimate(|m| even(m)[2])?,
        k3: sums.estimate(|m| odd(m)[3])?,
        k4: sums.estimate(|m| even(m)[4] / 3.0)?,
        k5: sums.estimate(|m| odd(m)[5])?,
        k6: sums.estimate(|m| even(m)[6] / 15.0)?,
        k8: sums.estimate(|m| even(m)[8] / 105.0)?,
        k4_hat: sums.estimate(|m| {
            let k = even(m);
            k[4] / 3.0 / k[2].powi(2)
        })?,
        k6_hat: sums.estimate(|m| {
            let k = even(m);
            k[6] / 15.0 / k[2].powi(3)
        })?,
        k8_hat: sums.estimate(|m| {
            let k = even(m);
            k[8] / 105.0 / k[2].powi(4)
        })?,
        cross_k0000: sums.estimate(|m| m[1] - m[0] * m[0])?,
        layer_variances,
    })
}

/// Index of the product Σ_P Σ_Q (P ≤ Q) in the derivative observable list.
fn product_slot(p: usize, q: usize) -> usize {
    let (p, q) = if p <= q { (p, q) } else { (q, p) };
    6 + p * 6 - p * (p + 1) / 2 + q
}

/// Estimates covariances and cross-neuron fourth cumulants of the output
/// and its input derivatives ∂₁, ∂₂ (with respect to x₁, x₂).
///
/// Each draw records the output conditional covariance Σ of
/// (z, ∂₁z, ∂₂z); distinct output neurons are conditionally independent
/// given the last hidden layer, so κ_(P) = E Σ_P and
/// κ_{(P)(Q)} = Cov(Σ_P, Σ_Q) exactly.
pub fn estimate_deriv_cumulants(
    spec: &NetworkSpec,
    n_samples: usize,
    seed: u64,
) -> Result<DerivEstimates> {
    spec.validate()?;
    if spec.n0 < 2 {
        return Err(Error::InvalidConfig(
            "derivative cumulants need n0 >= 2".into(),
        ));
    }
    stats::check_samples(n_samples)?;
    let sums = BatchSums::collect(n_samples, 27, |i, out| {
        let mut rng = draw_rng(seed, i);
        let cov = fast::deriv_draw(spec, &mut rng)?;
        let v: Vec<f64> = PAIRS.iter().map(|&(a, b)| cov[a][b]).collect();
        out[..6].copy_from_slice(&v);
        for p in 0..6 {
            for q in p..6 {
                out[product_slot(p, q)] = v[p] * v[q];
            }
        }
        Ok(())
    })?;
    const P00: usize = 0;
    const P10: usize = 1;
    const P20: usize = 2;
    const P11: usize = 3;
    const P12: usize = 4;
    const P22: usize = 5;
    let cov = |m: &[f64], p: usize, q: usize| m[product_slot(p, q)] - m[p] * m[q];
    Ok(DerivEstimates {
        k00: sums.estimate(|m| m[P00])?,
        k10: sums.estimate(|m| m[P10])?,
        k20: sums.estimate(|m| m[P20])?,
        k11: sums.estimate(|m| m[P11])?,
        k22: sums.estimate(|m| m[P22])?,
        k12: sums.estimate(|m| m[P12])?,
        k0000: sums.estimate(|m| cov(m, P00, P00))?,
        k1100: sums.estimate(|m| cov(m, P11, P00))?,
        k1111: sums.estimate(|m| cov(m, P11, P11))?,
        k1122: sums.estimate(|m| cov(m, P11, P22))?,
        k1212: sums.estimate(|m| cov(m, P12, P12))?,
        k1100_hat: sums.estimate(|m| cov(m, P11, P00) / (m[P11] * m[P00]))?,
        k1111_hat: sums.estimate(|m| cov(m, P11, P11) / (m[P11] * m[P11]))?,
        k1122_hat: sums.estimate(|m| cov(m, P11, P22) / (m[P11] * m[P22]))?,
        k1212_hat: sums.estimate(|m| cov(m, P12, P12) / (m[P11] * m[P22]))?,
    })
}

/// Estimates E[GradMean⁽¹⁾], E[GradVar⁽¹⁾] and their ratio for output
/// neuron q = 1, where ∂z_q/∂W⁽¹⁾_ij = x_j·g_i and g = ∂z_q/∂z⁽¹⁾.
pub fn estimate_evgp(spec: &NetworkSpec, n_samples: usize, seed: u64) -> Result<GradStats> {
    spec.validate()?;
    if spec.input_x.iter().all(|&v| v == 0.0) {
        return Err(Error::ZeroInput);
    }
    stats::check_samples(n_samples)?;
    let m2 = spec.norm_sq_over_n0();
    let m4 = spec.norm4_over_n0();
    let sums = BatchSums::collect(n_samples, 2, |i, out| {
        let mut rng = draw_rng(seed, i);
        let g = fast::first_layer_backprop(spec, &mut rng)?;
        let n1 = g.len() as f64;
        let g2 = g.iter().map(|v| v * v).sum::<f64>() / n1;
        let g4 = g.iter().map(|v| v.powi(4)).sum::<f64>() / n1;
        let mean = m2 * g2;
        out[0] = mean;
        out[1] = m4 * g4 - mean * mean;
        Ok(())
    })?;
    Ok(GradStats {
        grad_mean: sums.estimate(|m| m[0])?,
        grad_var: sums.estimate(|m| m[1])?,
        ratio: sums.estimate(|m| m[1] / (m[0] * m[0]))?,
    })
}

/// Verdict of a comparison that may lack statistical power.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// |pred| < 5·std_error: the estimate cannot resolve the prediction.
    Underpowered,
}

/// Like [`verify`], but returns [`Verdict::Underpowered`] when the
/// prediction is smaller than five standard errors (used for κ₆ and κ₈).
pub fn verify_powered(pred: f64, est: &MCEstimate, z_max: f64) -> Result<(Verdict, VerifyReport)> {
    let r = verify(pred, est, z_max)?;
    let v = if pred.abs() < 5.0 * est.std_error {
        Verdict::Underpowered
    } else if r.pass {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok((v, r))
}
