//! Gaussian expectation engine.
//!
//! * Gauss–Hermite quadrature for the probabilists' weight e^{−x²/2}/√(2π),
//!   nodes by Newton iteration on the normalized Hermite recurrence (tables are
//!   computed once per size and shared).
//! * A split-at-zero composite Gauss–Legendre rule for integrands with a kink
//!   at the origin (1-homogeneous activations), and its bivariate polar analogue
//!   whose angular breakpoints follow the kink lines z_a = 0 and z_b = 0.
//! * Weak derivatives through the Hermite identity
//!   ⟨∂^i f⟩_K = K^{−i/2}⟨He_i(z/√K) f(z)⟩_K.
//! * The T-functionals T_{i,j} = C_W^j ⟨∂^i (σ² − ⟨σ²⟩_K)^j⟩_K.
//!
//! All expectations are with respect to centered Gaussians; `K` is a variance.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::bracket::Brackets;
use crate::error::{Error, Result};
use crate::nonlin::Nonlinearity;

/// Default univariate node count.
pub const DEFAULT_NODES: usize = 129;
/// Default per-axis node count for bivariate tensor rules.
pub const DEFAULT_NODES_2D: usize = 65;
/// Largest node count reached by the adaptive ladder.
pub const MAX_NODES: usize = 1025;
/// Relative agreement required between two successive ladder rungs.
pub const ADAPT_RTOL: f64 = 1e-10;

/// Variance of a single pre-activation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel1 {
    pub k: f64,
}

/// 2×2 covariance of the pre-activations at two inputs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kernel2 {
    pub k_aa: f64,
    pub k_ab: f64,
    pub k_bb: f64,
}

impl Kernel2 {
    pub fn new(k_aa: f64, k_ab: f64, k_bb: f64) -> Self {
        Self { k_aa, k_ab, k_bb }
    }

    /// Checks K_aa, K_bb ≥ 0 and K_ab² ≤ K_aa·K_bb up to 1e−12.
    pub fn validate(&self) -> Result<()> {
        let Kernel2 { k_aa, k_ab, k_bb } = *self;
        if !(k_aa.is_finite() && k_ab.is_finite() && k_bb.is_finite()) {
            return Err(Error::NonFinite("kernel entries".into()));
        }
        if k_aa < 0.0 || k_bb < 0.0 {
            return Err(Error::NotPSD(format!("negative variance in {self:?}")));
        }
        if k_ab * k_ab > k_aa * k_bb + 1e-12 {
            return Err(Error::NotPSD(format!(
                "K_ab^2 = {} exceeds K_aa*K_bb = {}",
                k_ab * k_ab,
                k_aa * k_bb
            )));
        }
        Ok(())
    }

    /// Lower Cholesky factor (l11, l21, l22) with the rank-deficient case
    /// projected exactly onto its support (l22 = 0) instead of jittered.
    fn cholesky(&self) -> (f64, f64, f64) {
        let l11 = self.k_aa.sqrt();
        if l11 == 0.0 {
            return (0.0, 0.0, self.k_bb.sqrt());
        }
        let l21 = self.k_ab / l11;
        let rest = self.k_bb - l21 * l21;
        let l22 = if rest <= 1e-14 * self.k_bb.max(f64::MIN_POSITIVE) {
            0.0
        } else {
            rest.sqrt()
        };
        (l11, l21, l22)
    }
}

/// A quadrature rule: nodes and weights (weights sum to the rule's total mass).
#[derive(Debug)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Gauss–Hermite rule for the standard normal density (weights sum to 1).
///
/// Tables are cached, so repeated calls with the same size are free.
pub fn hermite_rule(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&n) {
        return rule.clone();
    }
    let rule = Arc::new(compute_hermite(n));
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .insert(n, rule.clone());
    rule
}

/// Nodes from the eigenvalues of the Jacobi matrix (robust for any size),
/// each polished by Newton's method on the orthonormal Hermite recurrence,
/// which also yields accurate weights.
///
/// The recurrence is renormalized on the fly so that n up to a few thousand
/// neither overflows nor underflows; the extreme weights legitimately
/// underflow to zero.
fn compute_hermite(n: usize) -> Rule {
    assert!(n >= 1, "a quadrature rule needs at least one node");
    // Probabilists' Jacobi matrix: zero diagonal, off-diagonal √k.
    let off: Vec<f64> = (1..n).map(|k| (k as f64).sqrt()).collect();
    let mut guesses = tridiagonal_eigenvalues(vec![0.0; n], off);
    guesses.sort_by(|a, b| a.total_cmp(b));
    let mut nodes: Vec<f64> = Vec::with_capacity(n);
    let mut weights: Vec<f64> = Vec::with_capacity(n);
    for (i, &g) in guesses.iter().enumerate() {
        // Exact symmetry: mirror the upper half onto the lower half.
        let mirror = n - 1 - i;
        if mirror < i {
            nodes.push(-nodes[mirror]);
            weights.push(weights[mirror]);
            continue;
        }
        if mirror == i {
            let (_, w) = polish_hermite_node(n, 0.0);
            nodes.push(0.0);
            weights.push(w);
            continue;
        }
        let (x, w) = polish_hermite_node(n, g);
        nodes.push(x);
        weights.push(w);
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Rule { nodes, weights }
}

/// Newton-polishes one probabilists' Hermite node and returns (node, weight),
/// with the weight for the standard normal density (before renormalization).
fn polish_hermite_node(n: usize, guess: f64) -> (f64, f64) {
    // Orthonormal recurrence: p_{j+1} = (x p_j − √j p_{j−1})/√(j+1), p_0 = 1,
    // renormalized on the fly; Newton only needs the ratio p_n/p_n′.
    let eval = |x: f64| -> (f64, f64) {
        let mut p_prev = 0.0;
        let mut p = 1.0;
        for j in 0..n {
            let jf = j as f64;
            let p_next = (x * p - jf.sqrt() * p_prev) / (jf + 1.0).sqrt();
            p_prev = p;
            p = p_next;
            if p.abs() > 1e150 {
                p *= 1e-150;
                p_prev *= 1e-150;
            }
        }
        // p = p_n, p_prev = p_{n−1}; p_n′ = √n p_{n−1}.
        (p, (n as f64).sqrt() * p_prev)
    };
    let mut x = guess;
    for _ in 0..8 {
        let (p, dp) = eval(x);
        if dp == 0.0 {
            break;
        }
        let step = p / dp;
        x -= step;
        if step.abs() <= 1e-16 * x.abs().max(1.0) {
            break;
        }
    }
    // Christoffel weight 1/Σ_{j<n} p_j(x)², computed with a fresh,
    // non-overflowing pass in log scale.
    let mut p_prev = 0.0;
    let mut p = 1.0;
    let mut log_scale = 0.0;
    let mut sum_sq = 1.0;
    for j in 0..n - 1 {
        let jf = j as f64;
        let p_next = (x * p - jf.sqrt() * p_prev) / (jf + 1.0).sqrt();
        p_prev = p;
        p = p_next;
        sum_sq += p * p;
        if p.abs() > 1e100 {
            p *= 1e-100;
            p_prev *= 1e-100;
            sum_sq *= 1e-200;
            log_scale += 200.0 * std::f64::consts::LN_10;
        }
    }
    (x, (-log_scale).exp() / sum_sq)
}

/// Eigenvalues of a symmetric tridiagonal matrix (diagonal `d`, off-diagonal
/// `e`) by the implicit QL algorithm with Wilkinson shifts.
fn tridiagonal_eigenvalues(mut d: Vec<f64>, e_in: Vec<f64>) -> Vec<f64> {
    let n = d.len();
    let mut e = e_in;
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 100, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut underflow = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d
}

/// Gauss–Legendre rule on [−1, 1] (weights sum to 2), cached.
pub fn legendre_rule(n: usize) -> Arc<Rule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Rule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(rule) = cache.lock().expect("quadrature cache poisoned").get(&n) {
        return rule.clone();
    }
    let nf = n as f64;
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 1.0;
        for _ in 0..100 {
            let mut p1 = 1.0;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        nodes[i] = -z;
        nodes[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * pp * pp);
        weights[i] = wi;
        weights[n - 1 - i] = wi;
    }
    let rule = Arc::new(Rule { nodes, weights });
    cache
        .lock()
        .expect("quadrature cache poisoned")
        .insert(n, rule.clone());
    rule
}

/// Composite rule for ∫_0^∞ h(t) φ(t) dt (φ the standard normal density),
/// truncated at t = 13 where φ < 1e−36.
fn half_line_rule() -> &'static Rule {
    static RULE: OnceLock<Rule> = OnceLock::new();
    RULE.get_or_init(|| {
        let gl = legendre_rule(16);
        let width = 0.5;
        let panels = 26;
        let mut nodes = Vec::with_capacity(panels * gl.nodes.len());
        let mut weights = Vec::with_capacity(panels * gl.nodes.len());
        for p in 0..panels {
            let a = p as f64 * width;
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let t = a + 0.5 * width * (x + 1.0);
                nodes.push(t);
                weights.push(0.5 * width * w * std_normal_pdf(t));
            }
        }
        Rule { nodes, weights }
    })
}

fn std_normal_pdf(t: f64) -> f64 {
    (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn check_finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{what} produced {v}")))
    }
}

/// ⟨f(z)⟩_K with a fixed `nodes`-point Gauss–Hermite rule.
///
/// Exact for polynomials of degree ≤ 2·nodes − 1 when K > 0; returns f(0)
/// when K = 0.
pub fn expect1<F: Fn(f64) -> f64>(f: F, k: Kernel1, nodes: usize) -> Result<f64> {
    if nodes < 2 {
        return Err(Error::OutOfRange(format!("nodes = {nodes} < 2")));
    }
    if k.k < 0.0 {
        return Err(Error::OutOfRange(format!("negative variance {}", k.k)));
    }
    if k.k == 0.0 {
        return check_finite(f(0.0), "integrand");
    }
    Ok(hermite_sum(&f, k.k, nodes)?.0)
}

/// Σ wᵢ f(√K xᵢ) and Σ wᵢ |f(√K xᵢ)| (the latter sets the absolute floor of
/// the adaptive test).
fn hermite_sum<F: Fn(f64) -> f64>(f: &F, k: f64, nodes: usize) -> Result<(f64, f64)> {
    let rule = hermite_rule(nodes);
    let s = k.sqrt();
    let mut acc = 0.0;
    let mut mag = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        if *w == 0.0 {
            continue;
        }
        let v = f(s * x);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("integrand at z = {}", s * x)));
        }
        acc += w * v;
        mag += w * v.abs();
    }
    Ok((acc, mag))
}

/// True when two successive ladder results agree to [`ADAPT_RTOL`].
pub(crate) fn converged(a: f64, b: f64, magnitude: f64) -> bool {
    (a - b).abs() <= ADAPT_RTOL * a.abs().max(b.abs()) + 1e-15 * magnitude
}

/// ⟨f(z)⟩_K with the adaptive ladder 129 → 257 → 513 → 1025 nodes, stopping
/// once two successive rungs agree to 1e−10 relative.
///
/// Integrands with a kink at the origin converge slowly under Gauss–Hermite;
/// use [`expect1_split`] for those.
pub fn expect1_auto<F: Fn(f64) -> f64>(f: F, k: Kernel1) -> Result<f64> {
    if k.k < 0.0 {
        return Err(Error::OutOfRange(format!("negative variance {}", k.k)));
    }
    if k.k == 0.0 {
        return check_finite(f(0.0), "integrand");
    }
    let mut n = DEFAULT_NODES;
    let (mut prev, _) = hermite_sum(&f, k.k, n)?;
    while n < MAX_NODES {
        n = 2 * n - 1;
        let (cur, mag) = hermite_sum(&f, k.k, n)?;
        if converged(prev, cur, mag) {
            return Ok(cur);
        }
        prev = cur;
    }
    Ok(prev)
}

/// ⟨f(z)⟩_K for integrands that are smooth on each half-line but may have a
/// kink (or jump) at z = 0, via composite Gauss–Legendre on both half-lines.
pub fn expect1_split<F: Fn(f64) -> f64>(f: F, k: Kernel1) -> Result<f64> {
    if k.k < 0.0 {
        return Err(Error::OutOfRange(format!("negative variance {}", k.k)));
    }
    if k.k == 0.0 {
        return check_finite(f(0.0), "integrand");
    }
    let s = k.k.sqrt();
    let rule = half_line_rule();
    let mut acc = 0.0;
    for (t, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * (f(s * t) + f(-s * t));
    }
    check_finite(acc, "integrand")
}

/// E[g(z_a, z_b)] for (z_a, z_b) ~ N(0, K2) with a `nodes`×`nodes` tensor
/// Gauss–Hermite grid in Cholesky coordinates.
///
/// A rank-deficient K2 (K_ab = ±√(K_aa K_bb)) is integrated exactly on its
/// one-dimensional support.
pub fn expect2<G: Fn(f64, f64) -> f64>(g: G, k2: Kernel2, nodes: usize) -> Result<f64> {
    k2.validate()?;
    if nodes < 2 {
        return Err(Error::OutOfRange(format!("nodes = {nodes} < 2")));
    }
    let (l11, l21, l22) = k2.cholesky();
    let rule = hermite_rule(nodes);
    if l22 == 0.0 {
        return expect1(|u| g(l11 * u, l21 * u), Kernel1 { k: 1.0 }, nodes);
    }
    let mut acc = 0.0;
    for (u, wu) in rule.nodes.iter().zip(&rule.weights) {
        if *wu == 0.0 {
            continue;
        }
        let za = l11 * u;
        let mut inner = 0.0;
        for (v, wv) in rule.nodes.iter().zip(&rule.weights) {
            inner += wv * g(za, l21 * u + l22 * v);
        }
        acc += wu * inner;
    }
    check_finite(acc, "bivariate integrand")
}

/// Bivariate expectation for integrands that are smooth except across the
/// lines z_a = 0 and z_b = 0 (e.g. σ(z_a)σ(z_b) for 1-homogeneous σ).
///
/// Whitened polar coordinates: the angular integral is split at the four
/// angles where a kink line crosses, and each radial integral is smooth.
pub fn expect2_split<G: Fn(f64, f64) -> f64>(g: G, k2: Kernel2) -> Result<f64> {
    k2.validate()?;
    let (l11, l21, l22) = k2.cholesky();
    if l22 == 0.0 {
        return expect1_split(|u| g(l11 * u, l21 * u), Kernel1 { k: 1.0 });
    }
    if l11 == 0.0 {
        return expect1_split(|v| g(0.0, v), Kernel1 { k: k2.k_bb });
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut cuts = vec![
        std::f64::consts::FRAC_PI_2,
        3.0 * std::f64::consts::FRAC_PI_2,
    ];
    let theta0 = (-l21).atan2(l22).rem_euclid(two_pi);
    cuts.push(theta0);
    cuts.push((theta0 + std::f64::consts::PI).rem_euclid(two_pi));
    cuts.push(0.0);
    cuts.push(two_pi);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let ang = legendre_rule(24);
    let rad = legendre_rule(12);
    let (r_max, r_panels) = (13.0, 13);
    let dr = r_max / r_panels as f64;
    let mut acc = 0.0;
    for win in cuts.windows(2) {
        let (a, b) = (win[0], win[1]);
        if b - a < 1e-15 {
            continue;
        }
        for (x, wx) in ang.nodes.iter().zip(&ang.weights) {
            let th = a + 0.5 * (b - a) * (x + 1.0);
            let (s, c) = th.sin_cos();
            let mut radial = 0.0;
            for p in 0..r_panels {
                let r0 = p as f64 * dr;
                for (y, wy) in rad.nodes.iter().zip(&rad.weights) {
                    let r = r0 + 0.5 * dr * (y + 1.0);
                    let za = l11 * r * c;
                    let zb = r * (l21 * c + l22 * s);
                    radial += 0.5 * dr * wy * r * (-0.5 * r * r).exp() * g(za, zb);
                }
            }
            acc += 0.5 * (b - a) * wx * radial;
        }
    }
    check_finite(acc / two_pi, "bivariate integrand")
}

/// Probabilists' Hermite polynomial He_i(x).
pub fn hermite_he(i: usize, x: f64) -> f64 {
    let (mut h0, mut h1) = (1.0, x);
    if i == 0 {
        return h0;
    }
    for k in 1..i {
        let h2 = x * h1 - k as f64 * h0;
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// Coefficients (ascending powers) of He_i.
pub fn hermite_he_coeffs(i: usize) -> Vec<f64> {
    let mut h0 = vec![1.0];
    if i == 0 {
        return h0;
    }
    let mut h1 = vec![0.0, 1.0];
    for k in 1..i {
        let mut h2 = vec![0.0; k + 2];
        for (j, c) in h1.iter().enumerate() {
            h2[j + 1] += c;
        }
        for (j, c) in h0.iter().enumerate() {
            h2[j] -= k as f64 * c;
        }
        h0 = h1;
        h1 = h2;
    }
    h1
}

/// ⟨∂_z^i f(z)⟩_K without differentiating f, via the Hermite identity
/// ⟨∂^i f⟩_K = K^{−i/2}⟨He_i(z/√K) f(z)⟩_K (a `nodes`-point Gauss–Hermite
/// rule). This is the weak derivative: it is well defined for kinked f.
pub fn weak_deriv_expect<F: Fn(f64) -> f64>(
    f: F,
    k: Kernel1,
    i: usize,
    nodes: usize,
) -> Result<f64> {
    if i == 0 {
        return expect1(f, k, nodes);
    }
    if k.k <= 0.0 {
        return Err(Error::SingularKernel { order: i });
    }
    let s = k.k.sqrt();
    let v = expect1(|z| hermite_he(i, z / s) * f(z), k, nodes)?;
    Ok(v / k.k.powf(i as f64 / 2.0))
}

/// [`weak_deriv_expect`] with the split-at-zero rule, for kinked integrands.
pub fn weak_deriv_expect_split<F: Fn(f64) -> f64>(f: F, k: Kernel1, i: usize) -> Result<f64> {
    if i == 0 {
        return expect1_split(f, k);
    }
    if k.k <= 0.0 {
        return Err(Error::SingularKernel { order: i });
    }
    let s = k.k.sqrt();
    let v = expect1_split(|z| hermite_he(i, z / s) * f(z), k)?;
    Ok(v / k.k.powf(i as f64 / 2.0))
}

/// T_{i,j} = C_W^j ⟨∂^i (σ² − ⟨σ²⟩_K)^j⟩_K.
///
/// Evaluated through the exact/analytic bracket engine ([`Brackets`]): the
/// inner centering is ⟨σ²⟩_K, and the outer weak derivative is expanded
/// binomially into ⟨∂^i σ^{2r}⟩_K, each of which is exact for 1-homogeneous σ
/// and uses analytic derivatives plus adaptive Gauss–Hermite for smooth σ.
/// [`t_functional_weak`] is the literal Hermite-identity evaluation.
pub fn t_functional(nl: &Nonlinearity, k: Kernel1, i: usize, j: usize, c_w: f64) -> Result<f64> {
    if j == 0 {
        return Err(Error::OutOfRange("T_{i,j} requires j >= 1".into()));
    }
    let b = Brackets::new(nl, k.k)?;
    b.t_functional(i, j, c_w)
}

/// T_{i,j} exactly as the definition reads: ⟨σ²⟩_K by quadrature, then the
/// weak derivative of (σ² − ⟨σ²⟩_K)^j through [`weak_deriv_expect`] (or its
/// split-at-zero variant for non-smooth σ).
///
/// At small K and large i the Hermite identity cancels catastrophically
/// (relative error ≈ ε_mach·K^{−i/2}); the hierarchy therefore uses
/// [`t_functional`], and this routine serves as its cross-check.
pub fn t_functional_weak(
    nl: &Nonlinearity,
    k: Kernel1,
    i: usize,
    j: usize,
    c_w: f64,
    nodes: usize,
) -> Result<f64> {
    if j == 0 {
        return Err(Error::OutOfRange("T_{i,j} requires j >= 1".into()));
    }
    let sig2 = |z: f64| {
        let s = nl.eval(z, 0).expect("order 0 always exists");
        s * s
    };
    let smooth = nl.is_smooth();
    let mean = if smooth {
        expect1(sig2, k, nodes)?
    } else {
        expect1_split(sig2, k)?
    };
    let centered = |z: f64| (sig2(z) - mean).powi(j as i32);
    let v = if smooth {
        weak_deriv_expect(centered, k, i, nodes)?
    } else {
        weak_deriv_expect_split(centered, k, i)?
    };
    Ok(c_w.powi(j as i32) * v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn double_factorial(n: i64) -> f64 {
        if n <= 0 {
            1.0
        } else {
            n as f64 * double_factorial(n - 2)
        }
    }

    #[test]
    fn hermite_rule_integrates_monomials_exactly() {
        for &n in &[2usize, 5, 20, 65, 129] {
            let rule = hermite_rule(n);
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-13, "n={n} mass {total}");
            for m in 0..(2 * n).min(60) {
                let got: f64 = rule
                    .nodes
                    .iter()
                    .zip(&rule.weights)
                    .map(|(x, w)| w * x.powi(m as i32))
                    .sum();
                let exact = if m % 2 == 1 {
                    0.0
                } else {
                    double_factorial(m as i64 - 1)
                };
                let scale = double_factorial(m as i64 - if m % 2 == 1 { 0 } else { 1 });
                assert!(
                    (got - exact).abs() <= 1e-12 * scale.max(1.0),
                    "n={n} m={m} got {got} exact {exact}"
                );
            }
        }
    }

    #[test]
    fn large_rules_are_finite_and_normalized() {
        for &n in &[257usize, 513, 1025] {
            let rule = hermite_rule(n);
            assert!(rule.nodes.iter().all(|x| x.is_finite()));
            let total: f64 = rule.weights.iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "n={n} mass {total}");
            let second: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x * x)
                .sum();
            assert!((second - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn legendre_rule_is_exact() {
        let r = legendre_rule(16);
        for m in 0..32 {
            let got: f64 = r
                .nodes
                .iter()
                .zip(&r.weights)
                .map(|(x, w)| w * x.powi(m))
                .sum();
            let exact = if m % 2 == 1 {
                0.0
            } else {
                2.0 / (m as f64 + 1.0)
            };
            assert!((got - exact).abs() < 1e-14, "m={m}");
        }
    }

    #[test]
    fn expect1_examples() {
        let v = expect1(|z| z * z, Kernel1 { k: 1.5 }, DEFAULT_NODES).unwrap();
        assert!((v - 1.5).abs() < 1e-13);
        let relu2 = |z: f64| if z > 0.0 { z * z } else { 0.0 };
        let v = expect1(relu2, Kernel1 { k: 2.0 }, DEFAULT_NODES).unwrap();
        assert!((v - 1.0).abs() < 1e-13);
        assert_eq!(expect1(|z| z + 3.0, Kernel1 { k: 0.0 }, 10).unwrap(), 3.0);
        assert!(matches!(
            expect1(|_| f64::NAN, Kernel1 { k: 1.0 }, 10),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn expect1_tanh_squared_small_k() {
        // Oracle: ⟨tanh²⟩_K = K − 2K² + (17/3)K³ − … ; at K = 0.04 the series
        // value to O(K⁴) is 0.0371626...; a fine trapezoid rule agrees.
        let k = 0.04_f64;
        let v = expect1_auto(|z| z.tanh().powi(2), Kernel1 { k }).unwrap();
        let h = 1e-4;
        let s = k.sqrt();
        let mut trap = 0.0;
        let mut t = -12.0;
        while t <= 12.0 {
            trap += h * std_normal_pdf(t) * (s * t).tanh().powi(2);
            t += h;
        }
        assert!((v - trap).abs() < 1e-12, "{v} vs {trap}");
        assert!((v - (k - 2.0 * k * k)).abs() < 7.0 * k * k * k);
    }

    #[test]
    fn expect2_examples() {
        let k2 = Kernel2::new(1.0, 0.3, 1.0);
        let v = expect2(|a, b| a * b, k2, DEFAULT_NODES_2D).unwrap();
        assert!((v - 0.3).abs() < 1e-13);
        let relu = |z: f64| z.max(0.0);
        let kk = 1.7;
        let v = expect2(
            |a, b| relu(a) * relu(b),
            Kernel2::new(kk, kk, kk),
            DEFAULT_NODES_2D,
        )
        .unwrap();
        assert!((v - kk / 2.0).abs() < 1e-12);
        let v = expect2_split(|a, b| relu(a) * relu(b), Kernel2::new(1.0, 0.0, 1.0)).unwrap();
        assert!((v - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-13);
        assert!(matches!(
            expect2(|a, b| a * b, Kernel2::new(1.0, 1.1, 1.0), 9),
            Err(Error::NotPSD(_))
        ));
    }

    #[test]
    fn expect2_split_matches_arc_cosine_kernel() {
        // ⟨ReLU(z_a)ReLU(z_b)⟩ = √(K_aa K_bb)/(2π)·(sin θ + (π − θ)cos θ).
        let relu = |z: f64| z.max(0.0);
        for &(kaa, kab, kbb) in &[(1.0, 0.5, 2.0), (0.3, -0.2, 0.4), (2.0, 1.99, 2.0)] {
            let v = expect2_split(|a, b| relu(a) * relu(b), Kernel2::new(kaa, kab, kbb)).unwrap();
            let rho: f64 = kab / (kaa * kbb).sqrt();
            let th = rho.acos();
            let exact = (kaa * kbb).sqrt() / (2.0 * std::f64::consts::PI)
                * (th.sin() + (std::f64::consts::PI - th) * rho);
            assert!((v - exact).abs() < 1e-12, "{v} vs {exact}");
        }
    }

    #[test]
    fn weak_derivative_examples() {
        let v = weak_deriv_expect(|z| z * z, Kernel1 { k: 1.0 }, 2, DEFAULT_NODES).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        let v = weak_deriv_expect(|z| z, Kernel1 { k: 4.0 }, 1, DEFAULT_NODES).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
        let relu2 = |z: f64| if z > 0.0 { z * z } else { 0.0 };
        for &k in &[0.3, 1.0, 5.0] {
            let v = weak_deriv_expect(relu2, Kernel1 { k }, 2, DEFAULT_NODES).unwrap();
            assert!((v - 1.0).abs() < 1e-12);
            let v = weak_deriv_expect_split(relu2, Kernel1 { k }, 2).unwrap();
            assert!((v - 1.0).abs() < 1e-12);
        }
        assert_eq!(
            weak_deriv_expect(|z| z, Kernel1 { k: 0.0 }, 1, 9),
            Err(Error::SingularKernel { order: 1 })
        );
    }

    #[test]
    fn hermite_coefficients_match_recurrence() {
        for i in 0..10 {
            let c = hermite_he_coeffs(i);
            for &x in &[-1.7, 0.0, 0.4, 2.2] {
                let poly: f64 = c.iter().rev().fold(0.0, |acc, v| acc * x + v);
                assert!((poly - hermite_he(i, x)).abs() < 1e-9 * (1.0 + poly.abs()));
            }
        }
    }

    #[test]
    fn t_functional_examples() {
        let relu = Nonlinearity::relu();
        let k = Kernel1 { k: 1.0 };
        assert!((t_functional(&relu, k, 0, 2, 2.0).unwrap() - 5.0).abs() < 1e-13);
        for &kv in &[0.2, 1.0, 3.3] {
            let v = t_functional(&relu, Kernel1 { k: kv }, 2, 1, 2.0).unwrap();
            assert!((v - 2.0).abs() < 1e-13);
        }
        let tanh = Nonlinearity::tanh();
        assert!(
            t_functional(&tanh, Kernel1 { k: 0.7 }, 0, 1, 1.0)
                .unwrap()
                .abs()
                < 1e-15
        );
        assert!(
            t_functional(&relu, Kernel1 { k: 0.7 }, 0, 1, 2.0)
                .unwrap()
                .abs()
                < 1e-15
        );
    }

    #[test]
    fn t_functional_routes_agree() {
        let tanh = Nonlinearity::tanh();
        let relu = Nonlinearity::relu();
        for &(i, j) in &[(0, 2), (2, 1), (2, 2), (4, 1), (0, 3), (4, 2), (0, 4)] {
            for &kv in &[0.1, 0.6, 1.5] {
                let k = Kernel1 { k: kv };
                let a = t_functional(&tanh, k, i, j, 1.0).unwrap();
                let b = t_functional_weak(&tanh, k, i, j, 1.0, 257).unwrap();
                assert!(
                    (a - b).abs() <= 1e-9 * (1.0 + a.abs()),
                    "tanh ({i},{j}) K={kv}: {a} vs {b}"
                );
                let a = t_functional(&relu, k, i, j, 2.0).unwrap();
                let b = t_functional_weak(&relu, k, i, j, 2.0, 0).unwrap();
                assert!(
                    (a - b).abs() <= 1e-9 * (1.0 + a.abs()),
                    "relu ({i},{j}) K={kv}: {a} vs {b}"
                );
            }
        }
    }
}
