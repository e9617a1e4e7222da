//! Closed forms for 1-homogeneous activations σ(t) = (a₊1_{t>0} + a₋1_{t<0})t
//! at criticality (C_b = 0, C_W = 2/(a₊² + a₋²)): the correlation map, the
//! fourth cumulant, the log-normal double-scaling limit and the exact
//! finite-width sampler.
//!
//! Exact law: at a single input, z^{(L+1)} has the law of
//! √(C_W‖x‖²/n₀)·Z·Π_ℓ X_ℓ^{1/2} with X_ℓ = (C_W/n_ℓ)Σ_j d_j²Z_j², where the
//! d_j ∈ {a₊, a₋} are fair coin flips and all Gaussians are independent. The
//! number of a₊ slopes in a layer is Binomial(n_ℓ, ½), so each layer needs
//! one binomial and two chi-square draws.

use rand_distr::{Binomial, ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::nonlin::Nonlinearity;
use crate::rng::{draw_rng, map_indices};

/// Slopes and derived constants of a critically tuned 1-homogeneous activation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomogParams {
    pub a_plus: f64,
    pub a_minus: f64,
    /// 2/(a₊² + a₋²).
    #[serde(rename = "C_W")]
    pub c_w: f64,
    /// 6(a₊⁴ + a₋⁴)/(a₊² + a₋²)² − 1 (5 for ReLU).
    pub bracket: f64,
}

impl HomogParams {
    /// Validates the slopes. Linear (a₊ = a₋), degenerate (both zero) and
    /// even (a₊ = −a₋) activations are rejected.
    pub fn new(a_plus: f64, a_minus: f64) -> Result<Self> {
        if !(a_plus.is_finite() && a_minus.is_finite()) {
            return Err(Error::InvalidConfig("slopes must be finite".into()));
        }
        if a_plus == a_minus {
            return Err(Error::InvalidConfig(
                "a_plus = a_minus is a linear activation".into(),
            ));
        }
        if a_plus == -a_minus {
            return Err(Error::OutOfRange(
                "a_plus = -a_minus (even activation) is excluded".into(),
            ));
        }
        let s2 = a_plus * a_plus + a_minus * a_minus;
        let s4 = a_plus.powi(4) + a_minus.powi(4);
        Ok(Self {
            a_plus,
            a_minus,
            c_w: 2.0 / s2,
            bracket: 6.0 * s4 / (s2 * s2) - 1.0,
        })
    }

    /// ReLU: a₊ = 1, a₋ = 0.
    pub fn relu() -> Self {
        Self::new(1.0, 0.0).expect("ReLU slopes are valid")
    }

    /// Parameters of a 1-homogeneous [`Nonlinearity`].
    pub fn from_nonlinearity(nl: &Nonlinearity) -> Result<Self> {
        let (ap, am) = nl
            .homog_slopes()
            .ok_or_else(|| Error::InvalidConfig(format!("{} is not 1-homogeneous", nl.label())))?;
        Self::new(ap, am)
    }

    /// A = 2C_W(a₊ − a₋)²/π, the strength of the correlation map's
    /// nonlinearity.
    pub fn map_strength(&self) -> f64 {
        2.0 * self.c_w * (self.a_plus - self.a_minus).powi(2) / std::f64::consts::PI
    }
}

/// u cos u − sin u, by its alternating series for small u (the direct form
/// cancels to O(u³)).
fn ucos_minus_sin(u: f64) -> f64 {
    if u.abs() >= 0.5 {
        return u * u.cos() - u.sin();
    }
    // Σ_{k≥1} (−1)^k u^{2k+1} 2k/(2k+1)!
    let u2 = u * u;
    let mut term = u; // u^{2k+1}/(2k+1)! at k = 0
    let mut acc = 0.0;
    for k in 1..20 {
        let kf = k as f64;
        term *= -u2 / ((2.0 * kf) * (2.0 * kf + 1.0));
        acc += 2.0 * kf * term;
        if term.abs() < 1e-18 * acc.abs() {
            break;
        }
    }
    acc
}

fn check_eps(eps: f64) -> Result<f64> {
    if !(-1e-15..=1.0 + 1e-15).contains(&eps) {
        return Err(Error::OutOfRange(format!("eps = {eps} outside [0, 1]")));
    }
    Ok(eps.clamp(0.0, 1.0))
}

/// One layer of the correlation map for two equal-norm inputs, with
/// ε = (1 − ρ)/2 and ρ the correlation:
/// 1 − 2ε′ = A[½√(ε(1−ε)) + (½ − ε)arccos√ε] + C_W a₊a₋(1 − 2ε).
///
/// Evaluated as ε′ = ε + (A/8)(u cos u − sin u), u = 2 arcsin√ε, which is the
/// same expression at criticality but keeps full relative accuracy as ε → 0.
pub fn correlation_step(eps: f64, p: &HomogParams) -> Result<f64> {
    let eps = check_eps(eps)?;
    let u = 2.0 * eps.sqrt().clamp(0.0, 1.0).asin();
    Ok(eps + p.map_strength() / 8.0 * ucos_minus_sin(u))
}

/// The displayed form of the correlation map (loses relative accuracy for
/// small ε; kept as a cross-check of [`correlation_step`]).
pub fn correlation_step_direct(eps: f64, p: &HomogParams) -> Result<f64> {
    let eps = check_eps(eps)?;
    let r = eps.sqrt().clamp(0.0, 1.0);
    let rhs = p.map_strength() * (0.5 * (eps * (1.0 - eps)).sqrt() + (0.5 - eps) * r.acos())
        + p.c_w * p.a_plus * p.a_minus * (1.0 - 2.0 * eps);
    Ok((1.0 - rhs) / 2.0)
}

/// Iterates the correlation map `steps` times from ε₀, returning ε^{(0)}, …,
/// ε^{(steps)}.
pub fn correlation_trajectory(eps0: f64, steps: usize, p: &HomogParams) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut e = check_eps(eps0)?;
    out.push(e);
    for _ in 0..steps {
        e = correlation_step(e, p)?;
        out.push(e);
    }
    Ok(out)
}

/// Stated large-depth law ε^{(ℓ)} ≈ (2/(3π))ℓ⁻² of the normalized map.
pub fn correlation_asymptote(ell: usize, _p: &HomogParams) -> f64 {
    2.0 / (3.0 * std::f64::consts::PI) / (ell as f64).powi(2)
}

/// Companion full-correlation form 2(a₊ − a₋)²/(3π(a₊² + a₋²))·ℓ⁻².
pub fn correlation_asymptote_full(ell: usize, p: &HomogParams) -> f64 {
    let s2 = p.a_plus.powi(2) + p.a_minus.powi(2);
    2.0 * (p.a_plus - p.a_minus).powi(2) / (3.0 * std::f64::consts::PI * s2) / (ell as f64).powi(2)
}

/// Large-depth law implied by the map itself. Near ε = 0 the map reads
/// ε′ = ε − (A/3)ε^{3/2} + O(ε²), whose solutions decay as
/// ε^{(ℓ)} ≈ 36/(A²ℓ²) (9π²/(4ℓ²) for ReLU).
pub fn correlation_asymptote_derived(ell: usize, p: &HomogParams) -> f64 {
    let a = p.map_strength();
    36.0 / (a * a * (ell as f64).powi(2))
}

/// κ₄ at the output of a network with the given hidden widths:
/// (C_W‖x‖²/n₀)²·bracket·Σ_ℓ 1/n_ℓ (empty sum → 0).
pub fn kappa4_closed_form(norm_sq_over_n0: f64, widths: &[usize], p: &HomogParams) -> Result<f64> {
    if widths.contains(&0) {
        return Err(Error::InvalidConfig("widths must be >= 1".into()));
    }
    let k = p.c_w * norm_sq_over_n0;
    let xi: f64 = widths.iter().map(|&n| 1.0 / n as f64).sum();
    Ok(k * k * p.bracket * xi)
}

/// Exact κ̂₄ = E[z⁴]/(3E[z²]²) − 1 = Π_ℓ E[X_ℓ²] − 1 of the finite-width law,
/// with E[X_ℓ²] = 1 + bracket/n_ℓ.
pub fn kappa4_hat_exact(widths: &[usize], p: &HomogParams) -> f64 {
    // E[X²] for X = (C_W/n)Σ d²Z²: mean 1, variance C_W²(3⟨d⁴⟩ − ⟨d²⟩²)/n
    // with ⟨d^k⟩ the coin average; C_W²(3⟨d⁴⟩ − ⟨d²⟩²) = bracket.
    widths
        .iter()
        .map(|&n| 1.0 + p.bracket / n as f64)
        .product::<f64>()
        - 1.0
}

/// (μ, σ²) of the log-normal factor exp(−μ + σZ) in the limit n, L → ∞ with
/// L/n → ξ: μ = σ² = (ξ/4)·bracket.
pub fn lognormal_limit_params(xi: f64, p: &HomogParams) -> Result<(f64, f64)> {
    if !(xi >= 0.0) || !xi.is_finite() {
        return Err(Error::OutOfRange(format!("xi = {xi} must be >= 0")));
    }
    let m = xi / 4.0 * p.bracket;
    Ok((m, m))
}

/// One exact draw split into its Gaussian factor and the log of its radial
/// factor: z = √K^{(1)}·gaussian·exp(log_radial).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExactDraw {
    pub gaussian: f64,
    pub log_radial: f64,
}

fn exact_params(spec: &NetworkSpec) -> Result<HomogParams> {
    spec.validate()?;
    let p = HomogParams::from_nonlinearity(&spec.nl)?;
    if spec.c_b != 0.0 || (spec.c_w - p.c_w).abs() > 1e-12 * p.c_w {
        return Err(Error::InvalidConfig(
            "the exact sampler requires critical tuning (C_b = 0, C_W = 2/(a+^2 + a-^2))".into(),
        ));
    }
    Ok(p)
}

/// Draws `n_samples` independent (Z, log Π X_ℓ^{1/2}) pairs. Draw i uses its
/// own random stream, so results do not depend on scheduling.
pub fn sample_exact_parts(
    spec: &NetworkSpec,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<ExactDraw>> {
    let p = exact_params(spec)?;
    let (a2p, a2m) = (p.a_plus * p.a_plus, p.a_minus * p.a_minus);
    let widths = spec.widths.clone();
    let c_w = p.c_w;
    let draws = map_indices(0..n_samples as u64, |i| {
        let mut rng = draw_rng(seed, i);
        let gaussian: f64 = StandardNormal.sample(&mut rng);
        let mut log_radial = 0.0;
        for &n in &widths {
            let plus = Binomial::new(n as u64, 0.5)
                .expect("valid binomial")
                .sample(&mut rng);
            let minus = n as u64 - plus;
            let chi = |k: u64, rng: &mut rand_chacha::ChaCha8Rng| -> f64 {
                if k == 0 {
                    0.0
                } else {
                    ChiSquared::new(k as f64).expect("positive dof").sample(rng)
                }
            };
            let sp = chi(plus, &mut rng);
            let sm = chi(minus, &mut rng);
            let x = c_w / n as f64 * (a2p * sp + a2m * sm);
            log_radial += 0.5 * x.ln();
        }
        ExactDraw {
            gaussian,
            log_radial,
        }
    });
    Ok(draws)
}

/// Draws `n_samples` outputs z^{(L+1)} from the exact finite-width law.
pub fn sample_exact(spec: &NetworkSpec, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    let scale = spec.k1().sqrt();
    Ok(sample_exact_parts(spec, n_samples, seed)?
        .into_iter()
        .map(|d| scale * d.gaussian * d.log_radial.exp())
        .collect())
}

/// Kolmogorov–Smirnov distance between a sample and N(mean, var).
pub fn ks_distance_normal(sample: &[f64], mean: f64, var: f64) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::InsufficientSamples { got: 0, min: 1 });
    }
    if !(var > 0.0) {
        return Err(Error::OutOfRange(format!("variance {var} must be > 0")));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len() as f64;
    let sd = var.sqrt();
    let mut d: f64 = 0.0;
    for (i, &x) in xs.iter().enumerate() {
        let f = 0.5 * libm::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2));
        d = d
            .max((f - i as f64 / n).abs())
            .max(((i + 1) as f64 / n - f).abs());
    }
    Ok(d)
}
