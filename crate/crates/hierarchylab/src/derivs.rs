//! Input-derivative hierarchy at a single input.
//!
//! Each neuron at layer ℓ carries the vector v = (z, y₁, y₂) with
//! y_j = ∂z/∂x_j. Conditional on layer ℓ, the next layer's vectors are
//! independent centered Gaussians with covariance
//! Σ_AB = C_b δ_{A0}δ_{B0} + (C_W/n_ℓ) Σ_i φ_A(v_i)φ_B(v_i),
//! φ_0 = σ(z), φ_j = σ′(z)y_j. Every tracked quantity is a moment of Σ:
//!
//! * K_(AB): infinite-width mean of Σ_AB;
//! * κ_{(AB)(CD)} = Cov(Σ_AB, Σ_CD): the fourth cumulant between two distinct
//!   output neurons (for A=B=C=D=0 this is the normalized κ₄);
//! * S_(AB) = E[Σ_AB] − K_(AB): the 1/n correction of the mean.
//!
//! Integrating out one layer and expanding ⟨·⟩_Σ around K gives, with the sum
//! over ordered index pairs c = (c₁c₂), d and B_P[c] = ⟨∂_{c₁}∂_{c₂}φ_P⟩:
//!
//! * K′_P = C_b δ_{P,00} + C_W⟨φ_P⟩,
//! * κ′_{PQ} = (C_W²/n)(⟨φ_Pφ_Q⟩ − ⟨φ_P⟩⟨φ_Q⟩) + (C_W²/4)Σ_{c,d} κ_cd B_P[c]B_Q[d],
//! * S′_P = C_W[½Σ_c S_c B_P[c] + ⅛Σ_{c,d} κ_cd ⟨∂_{c₁}∂_{c₂}∂_{d₁}∂_{d₂}φ_P⟩],
//!
//! with all brackets under the Gaussian with covariance K, dropping O(n⁻²).
//! Brackets with y-insertions are reduced to univariate brackets in z by
//! Gaussian integration by parts:
//! ⟨G(z)Π y⟩ = Σ_{partial matchings} Π_{pairs} K_{jk} Π_{unpaired} K_{j0} ⟨∂^{#unpaired}G⟩.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::bracket::Brackets;
use crate::crit::{classify, CriticalTuning, UniversalityClass};
use crate::error::{Error, Result};
use crate::hierarchy::EULER_GAMMA;
use crate::network::NetworkSpec;
use crate::nonlin::Nonlinearity;

/// Unordered index pairs (A, B), A ≤ B, in storage order.
pub const PAIRS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Storage index of the unordered pair {a, b}.
pub fn pair_index(a: usize, b: usize) -> usize {
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    match (a, b) {
        (0, 0) => 0,
        (0, 1) => 1,
        (0, 2) => 2,
        (1, 1) => 3,
        (1, 2) => 4,
        (2, 2) => 5,
        _ => panic!("derivative index out of range: ({a}, {b})"),
    }
}

/// Number of ordered pairs represented by an unordered one.
fn multiplicity(c: usize) -> f64 {
    let (a, b) = PAIRS[c];
    if a == b {
        1.0
    } else {
        2.0
    }
}

/// 1 ↔ 2 relabeling of a derivative index.
fn swap_index(a: usize) -> usize {
    match a {
        1 => 2,
        2 => 1,
        other => other,
    }
}

fn swap_pair(c: usize) -> usize {
    let (a, b) = PAIRS[c];
    pair_index(swap_index(a), swap_index(b))
}

/// Infinite-width covariances of (z, ∂₁z, ∂₂z) at layer `ell`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivKernelState {
    pub ell: usize,
    #[serde(rename = "K00")]
    pub k00: f64,
    #[serde(rename = "K10")]
    pub k10: f64,
    #[serde(rename = "K20")]
    pub k20: f64,
    #[serde(rename = "K11")]
    pub k11: f64,
    #[serde(rename = "K22")]
    pub k22: f64,
    #[serde(rename = "K12")]
    pub k12: f64,
}

impl DerivKernelState {
    /// First-layer covariances: z = b + Wx, ∂_j z = W_{·j}, so
    /// K00 = C_b + C_W‖x‖²/n₀, K_j0 = C_W x_j/n₀, K_jj = C_W/n₀, K12 = 0.
    pub fn first_layer(c_b: f64, c_w: f64, x: &[f64]) -> Result<Self> {
        if x.len() < 2 {
            return Err(Error::InvalidConfig(
                "derivative tracking needs n0 >= 2".into(),
            ));
        }
        let n0 = x.len() as f64;
        let norm_sq: f64 = x.iter().map(|v| v * v).sum();
        Ok(Self {
            ell: 1,
            k00: c_b + c_w * norm_sq / n0,
            k10: c_w * x[0] / n0,
            k20: c_w * x[1] / n0,
            k11: c_w / n0,
            k22: c_w / n0,
            k12: 0.0,
        })
    }

    /// Symmetric 3×3 matrix [K_(AB)].
    pub fn matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.k00, self.k10, self.k20],
            [self.k10, self.k11, self.k12],
            [self.k20, self.k12, self.k22],
        ]
    }

    fn from_pairs(ell: usize, v: &[f64; 6]) -> Self {
        Self {
            ell,
            k00: v[0],
            k10: v[1],
            k20: v[2],
            k11: v[3],
            k12: v[4],
            k22: v[5],
        }
    }

    /// Entries in [`PAIRS`] order.
    pub fn pairs(&self) -> [f64; 6] {
        [self.k00, self.k10, self.k20, self.k11, self.k12, self.k22]
    }

    /// Checks that [K_(AB)] is positive semidefinite (up to 1e−12 relative).
    pub fn validate(&self) -> Result<()> {
        let m = self.matrix();
        let scale = self
            .k00
            .abs()
            .max(self.k11.abs())
            .max(self.k22.abs())
            .max(1e-300);
        let tol = 1e-12 * scale;
        let minor2 = |a: usize, b: usize| m[a][a] * m[b][b] - m[a][b] * m[a][b];
        let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[1][2])
            - m[0][1] * (m[0][1] * m[2][2] - m[1][2] * m[0][2])
            + m[0][2] * (m[0][1] * m[1][2] - m[1][1] * m[0][2]);
        let ok = self.k00 >= -tol
            && self.k11 >= -tol
            && self.k22 >= -tol
            && minor2(0, 1) >= -tol * scale
            && minor2(0, 2) >= -tol * scale
            && minor2(1, 2) >= -tol * scale
            && det >= -tol * scale * scale;
        if !ok || !m.iter().flatten().all(|v| v.is_finite()) {
            return Err(Error::NotPSD(format!("derivative kernel {self:?}")));
        }
        Ok(())
    }

    /// The state with derivative directions 1 and 2 exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            k10: self.k20,
            k20: self.k10,
            k11: self.k22,
            k22: self.k11,
            ..*self
        }
    }
}

/// Cross-neuron fourth cumulants κ_{(AB)(CD)} = Cov(Σ_AB, Σ_CD) at layer
/// `ell`, stored as the full symmetric 6×6 matrix over [`PAIRS`]. The named
/// accessors give the canonical entries; mirrored entries follow from
/// [`DerivFourthState::swapped`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivFourthState {
    pub ell: usize,
    pub kappa: [[f64; 6]; 6],
}

macro_rules! fourth_accessors {
    ($($name:ident => ($a:expr, $b:expr, $c:expr, $d:expr)),* $(,)?) => {
        impl DerivFourthState {
            $(
                #[doc = concat!("κ_{(", stringify!($a), stringify!($b), ")(", stringify!($c), stringify!($d), ")}")]
                pub fn $name(&self) -> f64 {
                    self.get(($a, $b), ($c, $d))
                }
            )*

            /// The canonical entries as (name, value) pairs.
            pub fn canonical(&self) -> Vec<(&'static str, f64)> {
                vec![$((stringify!($name), self.$name())),*]
            }
        }
    };
}

fourth_accessors! {
    k0000 => (0, 0, 0, 0),
    k1000 => (1, 0, 0, 0),
    k1010 => (1, 0, 1, 0),
    k1020 => (1, 0, 2, 0),
    k1100 => (1, 1, 0, 0),
    k1200 => (1, 2, 0, 0),
    k1110 => (1, 1, 1, 0),
    k1210 => (1, 2, 1, 0),
    k1120 => (1, 1, 2, 0),
    k1111 => (1, 1, 1, 1),
    k1122 => (1, 1, 2, 2),
    k1212 => (1, 2, 1, 2),
}

impl DerivFourthState {
    /// All zero: the first layer is exactly Gaussian.
    pub fn zero(ell: usize) -> Self {
        Self {
            ell,
            kappa: [[0.0; 6]; 6],
        }
    }

    /// κ_{(ab)(cd)} for any index pairs.
    pub fn get(&self, p: (usize, usize), q: (usize, usize)) -> f64 {
        self.kappa[pair_index(p.0, p.1)][pair_index(q.0, q.1)]
    }

    /// The state with derivative directions 1 and 2 exchanged.
    pub fn swapped(&self) -> Self {
        let mut out = Self::zero(self.ell);
        for p in 0..6 {
            for q in 0..6 {
                out.kappa[swap_pair(p)][swap_pair(q)] = self.kappa[p][q];
            }
        }
        out
    }
}

/// Finite-width corrections S_(AB) = E[Σ_AB] − K_(AB) at layer `ell`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SCorrectionState {
    pub ell: usize,
    #[serde(rename = "S00")]
    pub s00: f64,
    #[serde(rename = "S10")]
    pub s10: f64,
    #[serde(rename = "S20")]
    pub s20: f64,
    #[serde(rename = "S11")]
    pub s11: f64,
    #[serde(rename = "S22")]
    pub s22: f64,
    #[serde(rename = "S12")]
    pub s12: f64,
}

impl SCorrectionState {
    /// All zero: layer-1 pre-activations are exactly Gaussian.
    pub fn zero(ell: usize) -> Self {
        Self::from_pairs(ell, &[0.0; 6])
    }

    fn from_pairs(ell: usize, v: &[f64; 6]) -> Self {
        Self {
            ell,
            s00: v[0],
            s10: v[1],
            s20: v[2],
            s11: v[3],
            s12: v[4],
            s22: v[5],
        }
    }

    /// Entries in [`PAIRS`] order.
    pub fn pairs(&self) -> [f64; 6] {
        [self.s00, self.s10, self.s20, self.s11, self.s12, self.s22]
    }

    /// The state with derivative directions 1 and 2 exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            s10: self.s20,
            s20: self.s10,
            s11: self.s22,
            s22: self.s11,
            ..*self
        }
    }
}

/// Everything tracked at one layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DerivState {
    pub kernel: DerivKernelState,
    pub fourth: DerivFourthState,
    pub s: SCorrectionState,
}

impl DerivState {
    /// The exactly Gaussian first layer.
    pub fn first_layer(c_b: f64, c_w: f64, x: &[f64]) -> Result<Self> {
        Ok(Self {
            kernel: DerivKernelState::first_layer(c_b, c_w, x)?,
            fourth: DerivFourthState::zero(1),
            s: SCorrectionState::zero(1),
        })
    }

    /// Finite-width covariance κ_(AB) = K_(AB) + S_(AB) for pair index `p`.
    pub fn kappa2(&self, a: usize, b: usize) -> f64 {
        let p = pair_index(a, b);
        self.kernel.pairs()[p] + self.s.pairs()[p]
    }

    /// Normalized cross-neuron cumulant κ_{(ab)(cd)}/(K_(ab)K_(cd)).
    pub fn normalized(&self, p: (usize, usize), q: (usize, usize)) -> f64 {
        let k = self.kernel.pairs();
        self.fourth.get(p, q) / (k[pair_index(p.0, p.1)] * k[pair_index(q.0, q.1)])
    }

    /// All three parts with directions 1 and 2 exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            kernel: self.kernel.swapped(),
            fourth: self.fourth.swapped(),
            s: self.s.swapped(),
        }
    }
}

/// A polynomial term c·∂_z^{kz}(σ^p σ′^q)(z)·y₁^{e₁}y₂^{e₂}.
#[derive(Clone, Copy, Debug)]
struct Term {
    coef: f64,
    p: usize,
    q: usize,
    kz: usize,
    e: [usize; 2],
}

impl Term {
    /// φ_A φ_B as a term.
    fn phi(a: usize, b: usize) -> Self {
        let mut t = Term {
            coef: 1.0,
            p: 0,
            q: 0,
            kz: 0,
            e: [0, 0],
        };
        for idx in [a, b] {
            if idx == 0 {
                t.p += 1;
            } else {
                t.q += 1;
                t.e[idx - 1] += 1;
            }
        }
        t
    }

    fn times(&self, other: &Term) -> Self {
        Term {
            coef: self.coef * other.coef,
            p: self.p + other.p,
            q: self.q + other.q,
            kz: 0,
            e: [self.e[0] + other.e[0], self.e[1] + other.e[1]],
        }
    }

    /// ∂ with respect to variable `v` (0 = z, j = y_j); None if it vanishes.
    fn diff(&self, v: usize) -> Option<Self> {
        let mut t = *self;
        if v == 0 {
            t.kz += 1;
            return Some(t);
        }
        let e = t.e[v - 1];
        if e == 0 {
            return None;
        }
        t.coef *= e as f64;
        t.e[v - 1] -= 1;
        Some(t)
    }
}

/// Gaussian brackets over (z, y₁, y₂) at one layer's kernel.
struct Engine<'a> {
    br: Brackets<'a>,
    k: [[f64; 3]; 3],
    wick_cache: HashMap<[usize; 2], Vec<f64>>,
}

impl<'a> Engine<'a> {
    fn new(nl: &'a Nonlinearity, kernel: &DerivKernelState) -> Result<Self> {
        kernel.validate()?;
        Ok(Self {
            br: Brackets::new(nl, kernel.k00)?,
            k: kernel.matrix(),
            wick_cache: HashMap::new(),
        })
    }

    /// Coefficients w_u with ⟨G Π y⟩ = Σ_u w_u ⟨∂^u G⟩.
    fn wick(&mut self, e: [usize; 2]) -> Vec<f64> {
        if let Some(w) = self.wick_cache.get(&e) {
            return w.clone();
        }
        let mut labels = Vec::new();
        labels.extend(std::iter::repeat_n(1usize, e[0]));
        labels.extend(std::iter::repeat_n(2usize, e[1]));
        let mut out = vec![0.0; labels.len() + 1];
        fn rec(labels: &[usize], k: &[[f64; 3]; 3], factor: f64, unpaired: usize, out: &mut [f64]) {
            let Some((&first, rest)) = labels.split_first() else {
                out[unpaired] += factor;
                return;
            };
            // `first` contracts with z.
            rec(rest, k, factor * k[first][0], unpaired + 1, out);
            // `first` pairs with a later label.
            for j in 0..rest.len() {
                let mut remaining = rest.to_vec();
                let partner = remaining.remove(j);
                rec(&remaining, k, factor * k[first][partner], unpaired, out);
            }
        }
        rec(&labels, &self.k, 1.0, 0, &mut out);
        self.wick_cache.insert(e, out.clone());
        out
    }

    fn expect(&mut self, t: &Term) -> Result<f64> {
        let w = self.wick(t.e);
        let mut acc = 0.0;
        for (u, wu) in w.iter().enumerate() {
            if *wu != 0.0 {
                acc += wu * self.br.get(t.kz + u, t.p, t.q)?;
            }
        }
        Ok(t.coef * acc)
    }

    /// ⟨∂_{vars} φ_P⟩.
    fn expect_diff(&mut self, p: usize, vars: &[usize]) -> Result<f64> {
        let (a, b) = PAIRS[p];
        let mut t = Term::phi(a, b);
        for &v in vars {
            match t.diff(v) {
                Some(next) => t = next,
                None => return Ok(0.0),
            }
        }
        self.expect(&t)
    }
}

/// Gaussian coefficients of one layer step.
struct StepBrackets {
    mean: [f64; 6],
    second: [[f64; 6]; 6],
    hess: [[f64; 6]; 6],
}

/// Per-pair 6×6 tables of the second-order bracket derivatives.
type FourthDerivTables = Vec<[[f64; 6]; 6]>;

fn step_brackets(
    engine: &mut Engine<'_>,
    with_fourth_derivs: bool,
) -> Result<(StepBrackets, Option<FourthDerivTables>)> {
    let mut mean = [0.0; 6];
    let mut second = [[0.0; 6]; 6];
    let mut hess = [[0.0; 6]; 6];
    for p in 0..6 {
        mean[p] = engine.expect_diff(p, &[])?;
        for c in 0..6 {
            let (c1, c2) = PAIRS[c];
            hess[p][c] = engine.expect_diff(p, &[c1, c2])?;
        }
    }
    for p in 0..6 {
        for q in p..6 {
            let (a, b) = PAIRS[p];
            let (c, d) = PAIRS[q];
            let t = Term::phi(a, b).times(&Term::phi(c, d));
            let v = engine.expect(&t)?;
            second[p][q] = v;
            second[q][p] = v;
        }
    }
    let fourth = if with_fourth_derivs {
        let mut all = Vec::with_capacity(6);
        for p in 0..6 {
            let mut m = [[0.0; 6]; 6];
            for c in 0..6 {
                for d in c..6 {
                    let (c1, c2) = PAIRS[c];
                    let (d1, d2) = PAIRS[d];
                    let v = engine.expect_diff(p, &[c1, c2, d1, d2])?;
                    m[c][d] = v;
                    m[d][c] = v;
                }
            }
            all.push(m);
        }
        Some(all)
    } else {
        None
    };
    Ok((StepBrackets { mean, second, hess }, fourth))
}

fn check_width(n_ell: f64) -> Result<()> {
    if !(n_ell >= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "layer width {n_ell} must be >= 1"
        )));
    }
    Ok(())
}

fn kernel_from(st: &DerivKernelState, b: &StepBrackets, c_b: f64, c_w: f64) -> DerivKernelState {
    let mut next = [0.0; 6];
    for p in 0..6 {
        next[p] = c_w * b.mean[p] + if p == 0 { c_b } else { 0.0 };
    }
    DerivKernelState::from_pairs(st.ell + 1, &next)
}

fn fourth_from(f4: &DerivFourthState, b: &StepBrackets, inv_n: f64, c_w: f64) -> DerivFourthState {
    let mut out = DerivFourthState::zero(f4.ell + 1);
    // G_P[d] = Σ_c m_c m_d κ_cd B_P[c] folded once per P.
    let mut folded = [[0.0; 6]; 6];
    for p in 0..6 {
        for d in 0..6 {
            let mut acc = 0.0;
            for c in 0..6 {
                acc += multiplicity(c) * f4.kappa[c][d] * b.hess[p][c];
            }
            folded[p][d] = acc * multiplicity(d);
        }
    }
    for p in 0..6 {
        for q in p..6 {
            let source = inv_n * c_w * c_w * (b.second[p][q] - b.mean[p] * b.mean[q]);
            let mut carry = 0.0;
            for d in 0..6 {
                carry += folded[p][d] * b.hess[q][d];
            }
            let v = source + 0.25 * c_w * c_w * carry;
            out.kappa[p][q] = v;
            out.kappa[q][p] = v;
        }
    }
    out
}

fn s_from(
    s: &SCorrectionState,
    f4: &DerivFourthState,
    b: &StepBrackets,
    d4: &[[[f64; 6]; 6]],
    c_w: f64,
) -> SCorrectionState {
    let sp = s.pairs();
    let mut next = [0.0; 6];
    for p in 0..6 {
        let mut lin = 0.0;
        for c in 0..6 {
            lin += multiplicity(c) * sp[c] * b.hess[p][c];
        }
        let mut quad = 0.0;
        for c in 0..6 {
            for d in 0..6 {
                quad += multiplicity(c) * multiplicity(d) * f4.kappa[c][d] * d4[p][c][d];
            }
        }
        next[p] = c_w * (0.5 * lin + 0.125 * quad);
    }
    SCorrectionState::from_pairs(s.ell + 1, &next)
}

/// Infinite-width derivative-kernel map.
pub fn deriv_kernel_step(
    st: &DerivKernelState,
    c_b: f64,
    c_w: f64,
    nl: &Nonlinearity,
) -> Result<DerivKernelState> {
    let mut engine = Engine::new(nl, st)?;
    let mut mean = [0.0; 6];
    for (p, m) in mean.iter_mut().enumerate() {
        *m = engine.expect_diff(p, &[])?;
    }
    let b = StepBrackets {
        mean,
        second: [[0.0; 6]; 6],
        hess: [[0.0; 6]; 6],
    };
    Ok(kernel_from(st, &b, c_b, c_w))
}

/// Fourth-cumulant recursion through a layer of width `n_ell`
/// (`f64::INFINITY` drops the source terms).
pub fn deriv_fourth_step(
    f4: &DerivFourthState,
    st: &DerivKernelState,
    n_ell: f64,
    c_w: f64,
    nl: &Nonlinearity,
) -> Result<DerivFourthState> {
    check_width(n_ell)?;
    let mut engine = Engine::new(nl, st)?;
    let (b, _) = step_brackets(&mut engine, false)?;
    Ok(fourth_from(f4, &b, 1.0 / n_ell, c_w))
}

/// Recursion for the mean corrections S. It is driven by the current fourth
/// cumulants only; the width enters through `f4`.
pub fn s_correction_step(
    s: &SCorrectionState,
    st: &DerivKernelState,
    f4: &DerivFourthState,
    c_w: f64,
    nl: &Nonlinearity,
) -> Result<SCorrectionState> {
    let mut engine = Engine::new(nl, st)?;
    let (b, d4) = step_brackets(&mut engine, true)?;
    Ok(s_from(s, f4, &b, &d4.expect("requested"), c_w))
}

/// One full layer step of kernel, fourth cumulants and S, sharing brackets.
pub fn deriv_step(
    state: &DerivState,
    n_ell: f64,
    c_b: f64,
    c_w: f64,
    nl: &Nonlinearity,
) -> Result<DerivState> {
    check_width(n_ell)?;
    let mut engine = Engine::new(nl, &state.kernel)?;
    let (b, d4) = step_brackets(&mut engine, true)?;
    let d4 = d4.expect("requested");
    Ok(DerivState {
        kernel: kernel_from(&state.kernel, &b, c_b, c_w),
        fourth: fourth_from(&state.fourth, &b, 1.0 / n_ell, c_w),
        s: s_from(&state.s, &state.fourth, &b, &d4, c_w),
    })
}

/// Derivative trajectory for ℓ = 1, …, L+1 (derivatives with respect to the
/// first two input coordinates).
pub fn run_derivs(spec: &NetworkSpec) -> Result<Vec<DerivState>> {
    spec.validate()?;
    let mut st = DerivState::first_layer(spec.c_b, spec.c_w, &spec.input_x)?;
    let mut out = Vec::with_capacity(spec.depth() + 1);
    out.push(st);
    for &n in &spec.widths {
        st = deriv_step(&st, n as f64, spec.c_b, spec.c_w, &spec.nl)?;
        out.push(st);
    }
    Ok(out)
}

/// A normalized cumulant κ/(K K) ≈ c·ξ for which two different leading
/// constants c are in circulation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ConstantConflict {
    pub name: &'static str,
    pub p: (usize, usize),
    pub q: (usize, usize),
    /// The primary constant (the one the recursion engine reproduces).
    pub primary: f64,
    /// The competing alternative constant.
    pub alternative: f64,
}

/// The three normalized derivative cumulants with two candidate leading
/// constants.
pub const CONSTANT_CONFLICTS: [ConstantConflict; 3] = [
    ConstantConflict {
        name: "k1100",
        p: (1, 1),
        q: (0, 0),
        primary: -1.0 / 3.0,
        alternative: -2.0 / 3.0,
    },
    ConstantConflict {
        name: "k1111",
        p: (1, 1),
        q: (1, 1),
        primary: 8.0 / 3.0,
        alternative: 7.0 / 3.0,
    },
    ConstantConflict {
        name: "k1122",
        p: (1, 1),
        q: (2, 2),
        primary: 2.0 / 3.0,
        alternative: 4.0 / 3.0,
    },
];

/// Leading large-depth predictions for the K* = 0 class at layer ℓ+1.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DerivAsymptotics {
    pub ell: usize,
    pub xi: f64,
    #[serde(rename = "K00")]
    pub k00: f64,
    #[serde(rename = "K10")]
    pub k10: f64,
    #[serde(rename = "K11")]
    pub k11: f64,
    /// κ_{(11)(00)}/(K11 K00) = −ξ/3.
    pub k1100_hat: f64,
    /// κ_{(11)(11)}/K11² = 8ξ/3.
    pub k1111_hat: f64,
    /// κ_{(11)(22)}/(K11 K22) = 2ξ/3.
    pub k1122_hat: f64,
    /// κ_{(00)(00)}/K00² = 2ξ/3.
    pub k0000_hat: f64,
    /// κ_{(12)(12)}/(K11 K22) = ξ.
    pub k1212_hat: f64,
    /// κ_(00)/K_(00) = 1 − ξ/3.
    pub kappa00_factor: f64,
    /// κ_(11)/K_(11) = 1 + ξ/3.
    pub kappa11_factor: f64,
    /// The alternative constants for k1100, k1111, k1122.
    pub alt_k1100_hat: f64,
    pub alt_k1111_hat: f64,
    pub alt_k1122_hat: f64,
}

/// Leading-order predictions for a critically tuned K* = 0 network with
/// hidden width n, input dimension n₀ and input x, at depth ℓ (ξ = ℓ/n).
pub fn deriv_asymptotics(
    ell: usize,
    n: usize,
    n0: usize,
    x: &[f64],
    nl: &Nonlinearity,
    tuning: &CriticalTuning,
) -> Result<DerivAsymptotics> {
    if classify(nl) != UniversalityClass::KStarZeroClass
        || tuning.class != UniversalityClass::KStarZeroClass
    {
        return Err(Error::NotKStarZeroClass);
    }
    if ell == 0 || n == 0 || n0 == 0 || x.is_empty() {
        return Err(Error::InvalidConfig(
            "ell, n, n0 must be >= 1 and x nonempty".into(),
        ));
    }
    let a = nl.taylor_a()?;
    let l = ell as f64;
    let xi = l / n as f64;
    let c_w = tuning.c_w;
    let n0f = n0 as f64;
    let c = |coef: f64| coef * xi;
    Ok(DerivAsymptotics {
        ell,
        xi,
        k00: 1.0 / (a * l),
        k10: c_w * (-2.0 * EULER_GAMMA).exp() * x[0] / (n0f * l * l),
        k11: c_w * (-EULER_GAMMA).exp() / (n0f * l),
        k1100_hat: c(CONSTANT_CONFLICTS[0].primary),
        k1111_hat: c(CONSTANT_CONFLICTS[1].primary),
        k1122_hat: c(CONSTANT_CONFLICTS[2].primary),
        k0000_hat: c(2.0 / 3.0),
        k1212_hat: c(1.0),
        kappa00_factor: 1.0 - xi / 3.0,
        kappa11_factor: 1.0 + xi / 3.0,
        alt_k1100_hat: c(CONSTANT_CONFLICTS[0].alternative),
        alt_k1111_hat: c(CONSTANT_CONFLICTS[1].alternative),
        alt_k1122_hat: c(CONSTANT_CONFLICTS[2].alternative),
    })
}

/// Predicted E[GradVar]/E[GradMean]² for first-layer weights:
/// C_{σ,α}(1 + 8ξ/3) with ξ = L/n (mean hidden width) and
/// C_{σ,α} = 3⟨σ′⁴⟩/⟨σ′²⟩² · (‖x‖₄⁴/n₀)/(‖x‖²/n₀)² − 1 at K^{(1)} = C_W‖x‖²/n₀.
pub fn evgp_predict(spec: &NetworkSpec) -> Result<f64> {
    spec.validate()?;
    Ok(evgp_constant(spec)? * (1.0 + 8.0 / 3.0 * spec.xi()))
}

/// The depth-free constant C_{σ,α}.
pub fn evgp_constant(spec: &NetworkSpec) -> Result<f64> {
    if classify(&spec.nl) != UniversalityClass::KStarZeroClass {
        return Err(Error::NotKStarZeroClass);
    }
    let m2 = spec.norm_sq_over_n0();
    if m2 == 0.0 {
        return Err(Error::ZeroInput);
    }
    let m4 = spec.norm4_over_n0();
    let br = Brackets::new(&spec.nl, spec.c_w * m2)?;
    let d2 = br.get(0, 0, 2)?;
    let d4 = br.get(0, 0, 4)?;
    Ok(3.0 * d4 / (d2 * d2) * m4 / (m2 * m2) - 1.0)
}
