//! Single-input cumulant hierarchy: the infinite-width kernel map, the
//! finite-width recursions for the normalized 4th, 6th and 8th cumulants,
//! their large-depth predictions, and a solver for the linear recursions
//! a_{ℓ+1} = ξ_ℓ + (1 − ζ_ℓ)a_ℓ that govern every large-depth asymptotic.
//!
//! Normalization: `k4`, `k6`, `k8` are the joint cumulants of 4, 6, 8 copies
//! of one output pre-activation divided by 3, 15 and 105 respectively
//! ((2k−1)!!). Monte Carlo comparisons must divide raw cumulants the same way.

use serde::{Deserialize, Serialize};

use crate::bracket::Brackets;
use crate::crit::{classify, UniversalityClass};
use crate::error::{Error, Result};
use crate::gauss::{expect2, expect2_split, Kernel1, Kernel2, DEFAULT_NODES_2D, MAX_NODES};
use crate::network::NetworkSpec;
use crate::nonlin::Nonlinearity;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Universal constants C₄, C₆, C₈ of the K* = 0 class:
/// κ̂_{2k} ≈ C_{2k} ξ^{k−1}.
pub const C4: f64 = 2.0 / 3.0;
pub const C6: f64 = 28.0 / 15.0;
pub const C8: f64 = 8756.0 / 315.0;

/// Effective depth above which κ₈ is flagged: the dropped O(n⁻⁴) terms grow
/// like (L/n)⁴.
pub const K8_CAVEAT_XI: f64 = 0.5;

/// Cumulants of one pre-activation at layer `ell` (ℓ = 1 is the first layer).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CumulantState {
    pub ell: usize,
    /// Infinite-width variance K^{(ℓ)}.
    #[serde(rename = "K")]
    pub k: f64,
    pub k4: f64,
    pub k6: f64,
    pub k8: f64,
}

impl CumulantState {
    /// The first layer: exactly Gaussian with variance `k`.
    pub fn initial(k: f64) -> Self {
        Self {
            ell: 1,
            k,
            k4: 0.0,
            k6: 0.0,
            k8: 0.0,
        }
    }

    /// κ̂₄ = κ₄/K².
    pub fn k4_hat(&self) -> f64 {
        normalize(self.k4, self.k, 2)
    }

    /// κ̂₆ = κ₆/K³.
    pub fn k6_hat(&self) -> f64 {
        normalize(self.k6, self.k, 3)
    }

    /// κ̂₈ = κ₈/K⁴.
    pub fn k8_hat(&self) -> f64 {
        normalize(self.k8, self.k, 4)
    }
}

fn normalize(v: f64, k: f64, power: i32) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v / k.powi(power)
    }
}

/// K′ = C_b + C_W⟨σ²⟩_K.
pub fn kernel_step(k: Kernel1, c_b: f64, c_w: f64, nl: &Nonlinearity) -> Result<Kernel1> {
    let br = Brackets::new(nl, k.k)?;
    Ok(Kernel1 {
        k: c_b + c_w * br.get(0, 2, 0)?,
    })
}

/// Componentwise two-input kernel map K′_{ab} = C_b + C_W⟨σ(z_a)σ(z_b)⟩_{K2}.
pub fn kernel_pair_step(k2: Kernel2, c_b: f64, c_w: f64, nl: &Nonlinearity) -> Result<Kernel2> {
    k2.validate()?;
    let aa = kernel_step(Kernel1 { k: k2.k_aa }, c_b, c_w, nl)?.k;
    let bb = kernel_step(Kernel1 { k: k2.k_bb }, c_b, c_w, nl)?.k;
    let g = |a: f64, b: f64| nl.eval(a, 0).unwrap_or(f64::NAN) * nl.eval(b, 0).unwrap_or(f64::NAN);
    let cross = if nl.is_smooth() {
        let coarse = expect2(g, k2, DEFAULT_NODES_2D)?;
        let fine = expect2(g, k2, 2 * DEFAULT_NODES_2D - 1)?;
        if (coarse - fine).abs() > 1e-10 * fine.abs().max(1e-300) {
            expect2(g, k2, MAX_NODES.min(4 * DEFAULT_NODES_2D))?
        } else {
            fine
        }
    } else {
        expect2_split(g, k2)?
    };
    Ok(Kernel2 {
        k_aa: aa,
        k_ab: c_b + c_w * cross,
        k_bb: bb,
    })
}

/// T-functionals and χ_∥ needed by one hierarchy step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepCoefficients {
    pub chi: f64,
    pub t02: f64,
    pub t03: f64,
    pub t04: f64,
    pub t22: f64,
    pub t23: f64,
    pub t41: f64,
    pub t42: f64,
}

impl StepCoefficients {
    /// Evaluates all coefficients at variance K.
    pub fn at(nl: &Nonlinearity, k: f64, c_w: f64) -> Result<Self> {
        let br = Brackets::new(nl, k)?;
        // At K = 0 every centered power vanishes; weak derivatives are never
        // needed there because the k's they multiply are zero as well.
        if k == 0.0 {
            return Ok(Self {
                chi: crate::crit::chi_parallel(nl, c_w, 0.0)?,
                ..Self::default()
            });
        }
        Ok(Self {
            chi: br.chi_parallel(c_w)?,
            t02: br.t_functional(0, 2, c_w)?,
            t03: br.t_functional(0, 3, c_w)?,
            t04: br.t_functional(0, 4, c_w)?,
            t22: br.t_functional(2, 2, c_w)?,
            t23: br.t_functional(2, 3, c_w)?,
            t41: br.t_functional(4, 1, c_w)?,
            t42: br.t_functional(4, 2, c_w)?,
        })
    }
}

/// One layer of the hierarchy. `n_ell` is the width of the layer being
/// integrated out; `f64::INFINITY` zeroes every 1/n source term.
pub fn cumulant_step(
    state: &CumulantState,
    n_ell: f64,
    c_b: f64,
    c_w: f64,
    nl: &Nonlinearity,
) -> Result<CumulantState> {
    if !(n_ell >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "layer width {n_ell} must be >= 1"
        )));
    }
    let c = StepCoefficients::at(nl, state.k, c_w)?;
    Ok(apply_step(
        state,
        &c,
        1.0 / n_ell,
        kernel_step(Kernel1 { k: state.k }, c_b, c_w, nl)?.k,
    ))
}

/// The displayed truncated recursions for given coefficients.
pub fn apply_step(
    s: &CumulantState,
    c: &StepCoefficients,
    inv_n: f64,
    k_next: f64,
) -> CumulantState {
    let (k4, k6, k8) = (s.k4, s.k6, s.k8);
    let x = c.chi;
    let n1 = inv_n;
    let n2 = inv_n * inv_n;
    let n3 = n2 * inv_n;
    let k4n = c.t02 * n1 + x * x * k4;
    let k6n =
        c.t03 * n2 + 1.5 * c.t22 * n1 * x * k4 - 0.375 * c.t41 * (x * k4).powi(2) + x.powi(3) * k6;
    let k8n = n3 * (c.t04 - 3.0 * c.t02 * c.t02)
        + n2 * (2.0 * c.t23 * x - 12.0 * c.t02 * x * x + 1.5 * c.t22 * c.t22 - 1.5 * c.t41 * c.t02)
            * k4
        - n1 * (2.0 * c.t22 * c.t41 * x - 0.5 * c.t42 * x * x + x.powi(4)) * k4 * k4
        + n1 * (5.0 * c.t02 * c.t41 * x + 12.0 * c.t22 * x * x) * k6
        + (3.0 / 32.0) * c.t41 * c.t41 * x * x * k4.powi(3)
        - 0.5 * x.powi(3) * c.t41 * k4 * k6
        + x.powi(4) * k8;
    CumulantState {
        ell: s.ell + 1,
        k: k_next,
        k4: k4n,
        k6: k6n,
        k8: k8n,
    }
}

/// A full trajectory ℓ = 1, …, L+1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<CumulantState>,
    /// Set when Σ 1/n_ℓ exceeds [`K8_CAVEAT_XI`]: κ₈ is then outside the
    /// regime where its dropped O(n⁻⁴) terms are negligible.
    pub k8_caveat: bool,
}

impl Trajectory {
    /// The output-layer state.
    pub fn last(&self) -> &CumulantState {
        self.states.last().expect("trajectory is never empty")
    }
}

/// Iterates the hierarchy through every hidden layer of `spec`, starting from
/// K^{(1)} = C_b + C_W‖x‖²/n₀.
pub fn run_hierarchy(spec: &NetworkSpec) -> Result<Trajectory> {
    spec.validate()?;
    run_hierarchy_from(spec.k1(), &spec.widths, spec.c_b, spec.c_w, &spec.nl)
}

/// Iterates the hierarchy from an explicit K^{(1)} through the given widths.
pub fn run_hierarchy_from(
    k1: f64,
    widths: &[usize],
    c_b: f64,
    c_w: f64,
    nl: &Nonlinearity,
) -> Result<Trajectory> {
    let mut states = Vec::with_capacity(widths.len() + 1);
    let mut s = CumulantState::initial(k1);
    states.push(s);
    for &n in widths {
        s = cumulant_step(&s, n as f64, c_b, c_w, nl)?;
        states.push(s);
    }
    let xi: f64 = widths.iter().map(|&n| 1.0 / n as f64).sum();
    Ok(Trajectory {
        states,
        k8_caveat: xi > K8_CAVEAT_XI,
    })
}

/// Large-depth prediction κ̂_{2k} ≈ C_{2k}ξ^{k−1} for the K* = 0 class.
pub fn predict_normalized(xi: f64, k: usize) -> Result<f64> {
    if !(xi >= 0.0) {
        return Err(Error::OutOfRange(format!("xi = {xi} must be >= 0")));
    }
    let c = match k {
        2 => C4,
        3 => C6,
        4 => C8,
        _ => return Err(Error::BadOrder(k)),
    };
    Ok(c * xi.powi(k as i32 - 1))
}

/// Leading-order solution of a_{ℓ+1} = ξ_ℓ + (1 − ζ_ℓ)a_ℓ when
/// ξ_ℓ ≈ C₁ℓ^{−ψ} and ζ_ℓ ≈ C₂/ℓ:
/// a_{ℓ+1} ≈ C₁ℓ^{1−ψ}/(1 − ψ + C₂) + e^{−C₂γ}ℓ^{−C₂}a₀.
///
/// The first term is universal. The prefactor of the homogeneous term is only
/// indicative: the exact constant is the product Π(1 − ζ_ℓ) over the early
/// layers, which depends on where the C₂/ℓ behavior sets in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecursionAsymptote {
    pub c1: f64,
    pub psi: f64,
    pub c2: f64,
    pub a0: f64,
}

impl RecursionAsymptote {
    /// Builds the asymptote; ψ = C₂ + 1 is the excluded resonant case.
    pub fn new(c1: f64, psi: f64, c2: f64, a0: f64) -> Result<Self> {
        if (1.0 - psi + c2).abs() < 1e-12 {
            return Err(Error::OutOfRange("psi = C2 + 1 is resonant".into()));
        }
        Ok(Self { c1, psi, c2, a0 })
    }

    /// The source-driven (particular) term at ℓ.
    pub fn particular(&self, ell: f64) -> f64 {
        self.c1 * ell.powf(1.0 - self.psi) / (1.0 - self.psi + self.c2)
    }

    /// The decaying homogeneous term at ℓ.
    pub fn homogeneous(&self, ell: f64) -> f64 {
        (-self.c2 * EULER_GAMMA).exp() * ell.powf(-self.c2) * self.a0
    }

    /// Prediction for a_{ℓ+1}.
    pub fn eval(&self, ell: f64) -> f64 {
        self.particular(ell) + self.homogeneous(ell)
    }
}

/// Iterates a_{ℓ+1} = ξ_ℓ + (1 − ζ_ℓ)a_ℓ for ℓ = 0, …, L−1 and returns
/// a_0, …, a_L. Every ζ_ℓ must lie in [0, 1].
pub fn solve_linear_recursion<X, Z>(xi_seq: X, zeta_seq: Z, a0: f64, l: usize) -> Result<Vec<f64>>
where
    X: Fn(usize) -> f64,
    Z: Fn(usize) -> f64,
{
    let mut out = Vec::with_capacity(l + 1);
    let mut a = a0;
    out.push(a);
    for ell in 0..l {
        let z = zeta_seq(ell);
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::OutOfRange(format!(
                "zeta_{ell} = {z} outside [0, 1]"
            )));
        }
        a = xi_seq(ell) + (1.0 - z) * a;
        out.push(a);
    }
    Ok(out)
}

/// Leading large-depth kernel of the K* = 0 class: K^{(ℓ)} ≈ 1/(aℓ),
/// a = −6σ₃/σ₁.
pub fn kstar_zero_kernel_asymptote(ell: usize, nl: &Nonlinearity) -> Result<f64> {
    if classify(nl) != UniversalityClass::KStarZeroClass {
        return Err(Error::NotKStarZeroClass);
    }
    Ok(1.0 / (nl.taylor_a()? * ell as f64))
}

/// Iterates the kernel map `steps` times from K, returning K^{(1)}, …,
/// K^{(steps+1)}.
pub fn kernel_trajectory(
    k1: f64,
    steps: usize,
    c_b: f64,
    c_w: f64,
    nl: &Nonlinearity,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut k = Kernel1 { k: k1 };
    out.push(k.k);
    for _ in 0..steps {
        k = kernel_step(k, c_b, c_w, nl)?;
        out.push(k.k);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crit::tune_critical;

    #[test]
    fn kernel_step_examples() {
        let relu = Nonlinearity::relu();
        assert!((kernel_step(Kernel1 { k: 7.0 }, 0.0, 2.0, &relu).unwrap().k - 7.0).abs() < 1e-12);
        let tanh = Nonlinearity::tanh();
        assert_eq!(
            kernel_step(Kernel1 { k: 0.0 }, 0.0, 1.0, &tanh).unwrap().k,
            0.0
        );
        let k = kernel_step(Kernel1 { k: 0.04 }, 0.0, 1.0, &tanh).unwrap().k;
        // ⟨tanh²⟩_K = K − 2K² + (17/3)K³ − (62/3)K⁴ + … (asymptotic)
        assert!((k - 0.0368).abs() < 4e-4, "{k}");
        let series =
            0.04 - 2.0 * 0.0016 + 17.0 / 3.0 * 0.04f64.powi(3) - 62.0 / 3.0 * 0.04f64.powi(4);
        assert!((k - series).abs() < 2e-5, "{k} vs {series}");
    }

    #[test]
    fn pair_step_examples() {
        let relu = Nonlinearity::relu();
        let out = kernel_pair_step(Kernel2::new(1.0, 0.0, 1.0), 0.0, 2.0, &relu).unwrap();
        assert!(
            (out.k_ab - 1.0 / std::f64::consts::PI).abs() < 1e-10,
            "{out:?}"
        );
        let out = kernel_pair_step(Kernel2::new(1.3, 1.3, 1.3), 0.0, 2.0, &relu).unwrap();
        assert!((out.k_ab - 1.3).abs() < 1e-10);
        let tanh = Nonlinearity::tanh();
        let out = kernel_pair_step(Kernel2::new(0.0, 0.0, 0.0), 0.0, 1.0, &tanh).unwrap();
        assert_eq!((out.k_aa, out.k_ab, out.k_bb), (0.0, 0.0, 0.0));
        let out = kernel_pair_step(Kernel2::new(0.5, 0.5, 0.5), 0.0, 1.0, &tanh).unwrap();
        assert!((out.k_ab - out.k_aa).abs() < 1e-10);
    }

    #[test]
    fn first_step_examples() {
        let relu = Nonlinearity::relu();
        let s = cumulant_step(&CumulantState::initial(1.0), 100.0, 0.0, 2.0, &relu).unwrap();
        assert!((s.k4 - 0.05).abs() < 1e-12);
        let mut s = CumulantState::initial(1.0);
        s.k4 = 0.3;
        let t = cumulant_step(&s, f64::INFINITY, 0.0, 2.0, &relu).unwrap();
        assert!((t.k4 - 0.3).abs() < 1e-12);
        let tanh = Nonlinearity::tanh();
        let s = cumulant_step(&CumulantState::initial(0.5), 10.0, 0.0, 1.0, &tanh).unwrap();
        let t03 = Brackets::new(&tanh, 0.5)
            .unwrap()
            .t_functional(0, 3, 1.0)
            .unwrap();
        assert!((s.k6 - t03 / 100.0).abs() < 1e-14);
    }

    #[test]
    fn infinite_width_stays_gaussian() {
        let tanh = Nonlinearity::tanh();
        let mut s = CumulantState::initial(0.8);
        for _ in 0..20 {
            s = cumulant_step(&s, f64::INFINITY, 0.0, 1.0, &tanh).unwrap();
            assert_eq!((s.k4, s.k6, s.k8), (0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn relu_k4_is_linear_in_depth() {
        let relu = Nonlinearity::relu();
        let t = run_hierarchy_from(1.0, &[64; 8], 0.0, 2.0, &relu).unwrap();
        assert!((t.last().k4_hat() - 0.625).abs() < 1e-10);
        assert_eq!(t.states.len(), 9);
        assert_eq!(t.states[0].k4_hat(), 0.0);
        assert!(!t.k8_caveat);
    }

    #[test]
    fn prediction_examples() {
        assert!((predict_normalized(0.25, 2).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(predict_normalized(0.0, 3).unwrap(), 0.0);
        assert!((predict_normalized(1.0, 4).unwrap() - 27.796825).abs() < 1e-5);
        assert!(matches!(
            predict_normalized(1.0, 5),
            Err(Error::BadOrder(5))
        ));
    }

    #[test]
    fn linear_recursion_examples() {
        let v = solve_linear_recursion(|_| 0.0, |_| 0.0, 2.5, 10).unwrap();
        assert!(v.iter().all(|&a| a == 2.5));
        assert!(solve_linear_recursion(|_| 0.0, |_| 1.5, 1.0, 3).is_err());
        assert!(RecursionAsymptote::new(1.0, 3.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn kstar_zero_asymptote() {
        let tanh = Nonlinearity::tanh();
        assert!((kstar_zero_kernel_asymptote(100, &tanh).unwrap() - 0.005).abs() < 1e-15);
        assert!((kstar_zero_kernel_asymptote(1, &tanh).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(
            kstar_zero_kernel_asymptote(1, &Nonlinearity::relu()),
            Err(Error::NotKStarZeroClass)
        ));
        let t = tune_critical(&tanh).unwrap();
        let ks = kernel_trajectory(1.0, 200, t.c_b, t.c_w, &tanh).unwrap();
        assert!(ks.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }
}
