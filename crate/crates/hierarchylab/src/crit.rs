//! Criticality: susceptibilities χ_∥, χ_⊥, universality classification and
//! the tuning of (C_b, C_W) so that K* is a fixed point of the kernel map with
//! χ_∥(K*) = χ_⊥(K*) = 1.

use serde::{Deserialize, Serialize};

use crate::bracket::Brackets;
use crate::error::{Error, Result};
use crate::nonlin::Nonlinearity;

/// Residual tolerance of the critical-point solver.
pub const NEWTON_TOL: f64 = 1e-10;
/// Iteration cap of the critical-point solver.
pub const NEWTON_MAX_ITER: usize = 200;

/// Universality class of an activation at criticality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum UniversalityClass {
    /// Positively 1-homogeneous (ReLU family): every K ≥ 0 is critical.
    #[serde(rename = "Homog1")]
    Homog1Class,
    /// Smooth, odd, σ₁σ₃ < 0 (tanh family): K* = 0.
    #[serde(rename = "KStarZero")]
    KStarZeroClass,
    /// A critical point with K* > 0 found numerically.
    #[serde(rename = "Generic")]
    GenericCritical,
}

/// Initialization hyperparameters tuned to criticality.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CriticalTuning {
    #[serde(rename = "C_b")]
    pub c_b: f64,
    #[serde(rename = "C_W")]
    pub c_w: f64,
    #[serde(rename = "K_star")]
    pub k_star: f64,
    pub class: UniversalityClass,
}

/// χ_∥(K) = (C_W/2)⟨∂²(σ²)⟩_K (weak derivative; at K = 0 for smooth σ this
/// is the point value C_W σ₁²).
pub fn chi_parallel(nl: &Nonlinearity, c_w: f64, k: f64) -> Result<f64> {
    Brackets::new(nl, k)?.chi_parallel(c_w)
}

/// χ_⊥(K) = C_W⟨(σ′)²⟩_K.
pub fn chi_perp(nl: &Nonlinearity, c_w: f64, k: f64) -> Result<f64> {
    Brackets::new(nl, k)?.chi_perp(c_w)
}

/// Chebyshev points of the first kind on [−5, 5] used by the oddness test.
fn chebyshev_points() -> impl Iterator<Item = f64> {
    (0..64).map(|i| 5.0 * ((2.0 * i as f64 + 1.0) * std::f64::consts::PI / 128.0).cos())
}

/// Classifies an activation: 1-homogeneous, K*=0 (smooth, odd to 1e−10 at 64
/// Chebyshev points in [−5, 5], σ₁σ₃ < 0) or generic.
pub fn classify(nl: &Nonlinearity) -> UniversalityClass {
    if nl.homog_slopes().is_some() {
        return UniversalityClass::Homog1Class;
    }
    let odd = chebyshev_points().all(|z| match (nl.eval(z, 0), nl.eval(-z, 0)) {
        (Ok(a), Ok(b)) => (a + b).abs() <= 1e-10,
        _ => false,
    });
    if nl.is_smooth() && odd && nl.sigma1() * nl.sigma3() < 0.0 {
        UniversalityClass::KStarZeroClass
    } else {
        UniversalityClass::GenericCritical
    }
}

/// Critical tuning with the conventional representative K* = 1 for the
/// 1-homogeneous class (where every K ≥ 0 is a critical fixed point).
pub fn tune_critical(nl: &Nonlinearity) -> Result<CriticalTuning> {
    tune_critical_with(nl, None)
}

/// Critical tuning; `k_star` selects the recorded fixed point for the
/// 1-homogeneous class and is ignored otherwise.
///
/// * 1-homogeneous: C_b = 0, C_W = 2/(a₊² + a₋²).
/// * K*=0 class: C_b = 0, C_W = σ₁⁻², K* = 0.
/// * Generic: Newton on K ↦ ⟨σσ″⟩_K (χ_∥ − χ_⊥ = C_W⟨σσ″⟩), then
///   C_W = 1/⟨σ′²⟩_{K*} and C_b = K* − C_W⟨σ²⟩_{K*}; both criticality
///   conditions are verified to 1e−9.
pub fn tune_critical_with(nl: &Nonlinearity, k_star: Option<f64>) -> Result<CriticalTuning> {
    match classify(nl) {
        UniversalityClass::Homog1Class => {
            let (ap, am) = nl.homog_slopes().expect("classified as 1-homogeneous");
            let k_star = k_star.unwrap_or(1.0);
            if !(k_star >= 0.0) {
                return Err(Error::OutOfRange(format!("K* = {k_star} must be >= 0")));
            }
            Ok(CriticalTuning {
                c_b: 0.0,
                c_w: 2.0 / (ap * ap + am * am),
                k_star,
                class: UniversalityClass::Homog1Class,
            })
        }
        UniversalityClass::KStarZeroClass => Ok(CriticalTuning {
            c_b: 0.0,
            c_w: 1.0 / (nl.sigma1() * nl.sigma1()),
            k_star: 0.0,
            class: UniversalityClass::KStarZeroClass,
        }),
        UniversalityClass::GenericCritical => tune_generic(nl),
    }
}

/// ⟨σσ″⟩_K = ½⟨∂²σ²⟩_K − ⟨σ′²⟩_K.
fn curvature(nl: &Nonlinearity, k: f64) -> Result<f64> {
    let b = Brackets::new(nl, k)?;
    Ok(0.5 * b.get(2, 2, 0)? - b.get(0, 0, 2)?)
}

fn tune_generic(nl: &Nonlinearity) -> Result<CriticalTuning> {
    let mut k = 1.0_f64;
    let mut g = curvature(nl, k)?;
    let mut iter = 0;
    while g.abs() > NEWTON_TOL {
        iter += 1;
        if iter > NEWTON_MAX_ITER {
            return Err(Error::NoCriticalPoint(format!(
                "Newton did not converge in {NEWTON_MAX_ITER} iterations (K = {k}, residual {g:e})"
            )));
        }
        let h = 1e-6 * k.max(1e-3);
        let dg = (curvature(nl, k + h)? - curvature(nl, k - h)?) / (2.0 * h);
        if dg == 0.0 || !dg.is_finite() {
            return Err(Error::NoCriticalPoint("vanishing Newton derivative".into()));
        }
        let mut step = g / dg;
        // Damping: halve the step until it keeps K positive and reduces |g|.
        let mut accepted = false;
        for _ in 0..60 {
            let trial = k - step;
            if trial > 0.0 {
                if let Ok(gt) = curvature(nl, trial) {
                    if gt.abs() < g.abs() {
                        k = trial;
                        g = gt;
                        accepted = true;
                        break;
                    }
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(Error::NoCriticalPoint(format!(
                "line search stalled at K = {k}"
            )));
        }
    }
    let b = Brackets::new(nl, k)?;
    let c_w = 1.0 / b.get(0, 0, 2)?;
    let c_b = k - c_w * b.get(0, 2, 0)?;
    if c_b < 0.0 {
        return Err(Error::NoCriticalPoint(format!(
            "critical point K* = {k} requires C_b = {c_b} < 0"
        )));
    }
    let tuning = CriticalTuning {
        c_b,
        c_w,
        k_star: k,
        class: UniversalityClass::GenericCritical,
    };
    verify_tuning(nl, &tuning, 1e-9)?;
    Ok(tuning)
}

/// Checks K* = C_b + C_W⟨σ²⟩_{K*} and χ_∥(K*) = χ_⊥(K*) = 1 to `tol`.
pub fn verify_tuning(nl: &Nonlinearity, t: &CriticalTuning, tol: f64) -> Result<()> {
    let b = Brackets::new(nl, t.k_star)?;
    let fixed = t.c_b + t.c_w * b.get(0, 2, 0)? - t.k_star;
    let cp = b.chi_parallel(t.c_w)? - 1.0;
    let cq = b.chi_perp(t.c_w)? - 1.0;
    if fixed.abs() > tol || cp.abs() > tol || cq.abs() > tol {
        return Err(Error::NoCriticalPoint(format!(
            "criticality residuals: fixed point {fixed:e}, chi_par {cp:e}, chi_perp {cq:e}"
        )));
    }
    Ok(())
}

/// Numerical check (not a proof) that K* = 0 is the only fixed point of the
/// tuned kernel map on (0, 100]: K − K′(K) > 0 on a logarithmic grid of 400
/// points in [1e−4, 100].
pub fn kstar_zero_is_unique(nl: &Nonlinearity, t: &CriticalTuning) -> Result<bool> {
    for i in 0..400 {
        let k = 10f64.powf(-4.0 + 6.0 * i as f64 / 399.0);
        let next = t.c_b + t.c_w * Brackets::new(nl, k)?.get(0, 2, 0)?;
        if next >= k {
            return Ok(false);
        }
    }
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nonlin::Evaluator;
    use std::sync::Arc;

    fn cubic(offset: f64) -> Nonlinearity {
        let f: Evaluator = Arc::new(move |z: f64, k: usize| match k {
            0 => z - z * z * z / 3.0 + offset,
            1 => 1.0 - z * z,
            2 => -2.0 * z,
            3 => -2.0,
            _ => 0.0,
        });
        Nonlinearity::tanh_like(f, 12).unwrap()
    }

    #[test]
    fn closed_form_tunings() {
        let t = tune_critical(&Nonlinearity::relu()).unwrap();
        assert_eq!((t.c_b, t.c_w), (0.0, 2.0));
        assert_eq!(t.class, UniversalityClass::Homog1Class);
        let t = tune_critical(&Nonlinearity::tanh()).unwrap();
        assert_eq!((t.c_b, t.c_w, t.k_star), (0.0, 1.0, 0.0));
        assert_eq!(t.class, UniversalityClass::KStarZeroClass);
        let t = tune_critical(&Nonlinearity::leaky_relu(0.1).unwrap()).unwrap();
        assert_eq!(t.c_w, 2.0 / 1.01);
    }

    #[test]
    fn susceptibility_examples() {
        let relu = Nonlinearity::relu();
        assert!((chi_parallel(&relu, 2.0, 3.7).unwrap() - 1.0).abs() < 1e-14);
        assert!((chi_perp(&relu, 2.0, 3.7).unwrap() - 1.0).abs() < 1e-14);
        let tanh = Nonlinearity::tanh();
        assert!((chi_parallel(&tanh, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!((chi_perp(&tanh, 1.0, 0.0).unwrap() - 1.0).abs() < 1e-14);
        assert!(chi_parallel(&tanh, 1.0, 0.5).unwrap() < 1.0);
        let leaky = Nonlinearity::leaky_relu(0.1).unwrap();
        for &k in &[0.1, 2.0, 9.0] {
            assert!((chi_perp(&leaky, 2.0 / 1.01, k).unwrap() - 1.0).abs() < 1e-14);
            assert!((chi_parallel(&leaky, 2.0 / 1.01, k).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn classification() {
        assert_eq!(
            classify(&Nonlinearity::relu()),
            UniversalityClass::Homog1Class
        );
        assert_eq!(
            classify(&Nonlinearity::tanh()),
            UniversalityClass::KStarZeroClass
        );
        assert_eq!(classify(&cubic(0.0)), UniversalityClass::KStarZeroClass);
        assert_eq!(classify(&cubic(0.1)), UniversalityClass::GenericCritical);
        // σ₁ > 0, σ₃ > 0: sinh-like, odd but outside the class.
        let f: Evaluator =
            Arc::new(|z: f64, k: usize| if k % 2 == 0 { z.sinh() } else { z.cosh() });
        let sinh = Nonlinearity::tanh_like(f, 10).unwrap();
        assert_eq!(classify(&sinh), UniversalityClass::GenericCritical);
    }

    #[test]
    fn generic_newton_finds_cubic_critical_point() {
        // σ = z − z³/3 + 0.1: ⟨σσ″⟩_K = −2K + 2K² vanishes at K* = 1, where
        // ⟨σ′²⟩ = 2 (C_W = 1/2) and C_b = 1 − ½(2/3 + 0.01).
        let nl = cubic(0.1);
        let t = tune_critical(&nl).unwrap();
        assert!((t.k_star - 1.0).abs() < 1e-9);
        assert!((t.c_w - 0.5).abs() < 1e-9);
        assert!((t.c_b - (1.0 - 0.5 * (2.0 / 3.0 + 0.01))).abs() < 1e-9);
        verify_tuning(&nl, &t, 1e-9).unwrap();
    }

    #[test]
    fn tanh_fixed_point_is_unique() {
        let tanh = Nonlinearity::tanh();
        let t = tune_critical(&tanh).unwrap();
        assert!(kstar_zero_is_unique(&tanh, &t).unwrap());
    }
}
