//! Gaussian brackets ⟨∂_z^k (σ^p (σ′)^q)⟩_K bound to one activation and one
//! variance K.
//!
//! Every Gaussian average needed by the recursions (kernel maps,
//! susceptibilities, T-functionals, derivative-cumulant coefficients) reduces
//! to brackets of this shape, so this is the single numerical kernel of the
//! deterministic side of the crate.
//!
//! * 1-homogeneous σ: exact. Writing z = √K x, σ^p(σ′)^q(√K x) =
//!   K^{p/2} x^p (a₊^{p+q} 1_{x>0} + a₋^{p+q} 1_{x<0}), and the weak derivative
//!   follows from the Hermite identity
//!   ⟨∂^k f⟩_K = K^{(p−k)/2} M_k,p [a₊^{p+q} + (−1)^{k+p} a₋^{p+q}],
//!   M_k,p = E[He_k(x) x^p ; x > 0], with closed-form half-Gaussian moments.
//! * Smooth σ: the classical derivative is expanded symbolically (Leibniz rule
//!   over products of σ^{(m)}) and integrated by adaptive Gauss–Hermite. This
//!   stays accurate at small K where the Hermite identity would cancel
//!   catastrophically. Orders beyond the activation's analytic derivatives
//!   fall back to the Hermite identity.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gauss::{
    self, converged, hermite_he, hermite_rule, Kernel1, Rule, DEFAULT_NODES, MAX_NODES,
};
use crate::nonlin::Nonlinearity;

/// Product Π_m (σ^{(m)})^{e_m}, indexed by derivative order m.
type Mono = Vec<u8>;

/// Per-node values σ^{(m)}(√K xᵢ), m = 0..=orders, for one rule size.
struct NodeTable {
    rule: Arc<Rule>,
    orders: usize,
    vals: Vec<f64>,
}

/// Bracket evaluator for a fixed (σ, K), memoizing every requested value.
pub struct Brackets<'a> {
    nl: &'a Nonlinearity,
    k: f64,
    cache: RefCell<HashMap<(usize, usize, usize), f64>>,
    tables: RefCell<HashMap<usize, NodeTable>>,
}

impl<'a> Brackets<'a> {
    /// Binds the evaluator to σ and K ≥ 0.
    pub fn new(nl: &'a Nonlinearity, k: f64) -> Result<Self> {
        if !(k >= 0.0) || !k.is_finite() {
            return Err(Error::OutOfRange(format!("variance K = {k}")));
        }
        Ok(Self {
            nl,
            k,
            cache: RefCell::new(HashMap::new()),
            tables: RefCell::new(HashMap::new()),
        })
    }

    /// The variance this evaluator is bound to.
    pub fn variance(&self) -> f64 {
        self.k
    }

    /// The activation this evaluator is bound to.
    pub fn nonlinearity(&self) -> &Nonlinearity {
        self.nl
    }

    /// ⟨∂_z^k (σ^p (σ′)^q)⟩_K (weak derivative).
    pub fn get(&self, k: usize, p: usize, q: usize) -> Result<f64> {
        if let Some(v) = self.cache.borrow().get(&(k, p, q)) {
            return Ok(*v);
        }
        let v = match self.nl.homog_slopes() {
            Some((ap, am)) => homog_bracket(self.k, k, p, q, ap, am)?,
            None => self.smooth_bracket(k, p, q)?,
        };
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("bracket <d^{k}(s^{p} s'^{q})>")));
        }
        self.cache.borrow_mut().insert((k, p, q), v);
        Ok(v)
    }

    /// χ_∥(K) = (C_W/2)⟨∂²σ²⟩_K.
    pub fn chi_parallel(&self, c_w: f64) -> Result<f64> {
        Ok(0.5 * c_w * self.get(2, 2, 0)?)
    }

    /// χ_⊥(K) = C_W⟨(σ′)²⟩_K.
    pub fn chi_perp(&self, c_w: f64) -> Result<f64> {
        Ok(c_w * self.get(0, 0, 2)?)
    }

    /// T_{i,j} = C_W^j ⟨∂^i (σ² − ⟨σ²⟩_K)^j⟩_K, j ≥ 1.
    pub fn t_functional(&self, i: usize, j: usize, c_w: f64) -> Result<f64> {
        if j == 0 {
            return Err(Error::OutOfRange("T_{i,j} requires j >= 1".into()));
        }
        let m = self.get(0, 2, 0)?;
        let scale = c_w.powi(j as i32);
        if i == 0 && self.nl.is_smooth() && self.k > 0.0 {
            // Centered moment integrated directly: no binomial cancellation.
            return Ok(scale * self.quadrature(|d| (d[0] * d[0] - m).powi(j as i32), 0)?);
        }
        let mut acc = 0.0;
        for r in 0..=j {
            let coef = binomial(j, r) * (-m).powi((j - r) as i32);
            let term = if r == 0 {
                if i == 0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                self.get(i, 2 * r, 0)?
            };
            acc += coef * term;
        }
        Ok(scale * acc)
    }

    fn smooth_bracket(&self, k: usize, p: usize, q: usize) -> Result<f64> {
        let need = k + usize::from(q > 0);
        if need > self.nl.max_order() {
            return self.hermite_identity_bracket(k, p, q);
        }
        let mut start = vec![0u8; need + 1];
        start[0] = p as u8;
        if q > 0 {
            start[1] = q as u8;
        }
        let terms = expand_derivative(start, k);
        let eval = |d: &[f64]| -> f64 {
            terms
                .iter()
                .map(|(mono, c)| {
                    c * mono
                        .iter()
                        .enumerate()
                        .filter(|(_, e)| **e > 0)
                        .map(|(m, e)| d[m].powi(*e as i32))
                        .product::<f64>()
                })
                .sum()
        };
        if self.k == 0.0 {
            let mut d = vec![0.0; need + 1];
            self.nl.eval_all(0.0, &mut d);
            return Ok(eval(&d));
        }
        self.quadrature(eval, need)
    }

    /// Hermite-identity fallback when σ lacks analytic derivatives of the
    /// required order: ⟨∂^k g⟩_K = K^{−k/2}⟨He_k(z/√K) g(z)⟩_K.
    fn hermite_identity_bracket(&self, k: usize, p: usize, q: usize) -> Result<f64> {
        if self.k == 0.0 {
            return Err(Error::SingularKernel { order: k });
        }
        let s = self.k.sqrt();
        let nl = self.nl;
        let g = |z: f64| {
            let a = nl.eval(z, 0).expect("order 0 exists");
            let b = if q > 0 {
                nl.eval(z, 1).expect("order 1 exists")
            } else {
                1.0
            };
            hermite_he(k, z / s) * a.powi(p as i32) * b.powi(q as i32)
        };
        Ok(gauss::expect1_auto(g, Kernel1 { k: self.k })? / self.k.powf(k as f64 / 2.0))
    }

    /// Adaptive Gauss–Hermite of `f(σ(z), σ′(z), …)` over the node tables.
    fn quadrature<F: Fn(&[f64]) -> f64>(&self, f: F, orders: usize) -> Result<f64> {
        let mut n = DEFAULT_NODES;
        let (mut prev, _) = self.table_sum(&f, n, orders)?;
        while n < MAX_NODES {
            n = 2 * n - 1;
            let (cur, mag) = self.table_sum(&f, n, orders)?;
            if converged(prev, cur, mag) {
                return Ok(cur);
            }
            prev = cur;
        }
        Ok(prev)
    }

    fn table_sum<F: Fn(&[f64]) -> f64>(
        &self,
        f: &F,
        n: usize,
        orders: usize,
    ) -> Result<(f64, f64)> {
        let mut tables = self.tables.borrow_mut();
        let rebuild = tables.get(&n).is_none_or(|t| t.orders < orders);
        if rebuild {
            let want = orders
                .max(tables.get(&n).map_or(0, |t| t.orders))
                .max(3)
                .min(self.nl.max_order());
            let rule = hermite_rule(n);
            let s = self.k.sqrt();
            let width = want + 1;
            let mut vals = vec![0.0; rule.nodes.len() * width];
            for (i, x) in rule.nodes.iter().enumerate() {
                self.nl
                    .eval_all(s * x, &mut vals[i * width..(i + 1) * width]);
            }
            tables.insert(
                n,
                NodeTable {
                    rule,
                    orders: want,
                    vals,
                },
            );
        }
        let t = &tables[&n];
        let width = t.orders + 1;
        let mut acc = 0.0;
        let mut mag = 0.0;
        for (i, w) in t.rule.weights.iter().enumerate() {
            if *w == 0.0 {
                continue;
            }
            let v = f(&t.vals[i * width..(i + 1) * width]);
            acc += w * v;
            mag += w * v.abs();
        }
        if !acc.is_finite() {
            return Err(Error::NonFinite("smooth bracket quadrature".into()));
        }
        Ok((acc, mag))
    }
}

/// Leibniz expansion of ∂^k applied to a monomial in σ, σ′, σ″, …
fn expand_derivative(start: Mono, k: usize) -> Vec<(Mono, f64)> {
    let mut terms: HashMap<Mono, f64> = HashMap::from([(start, 1.0)]);
    for _ in 0..k {
        let mut next: HashMap<Mono, f64> = HashMap::new();
        for (mono, c) in &terms {
            for m in 0..mono.len() {
                if mono[m] == 0 {
                    continue;
                }
                let mut d = mono.clone();
                d[m] -= 1;
                if m + 1 >= d.len() {
                    d.push(0);
                }
                d[m + 1] += 1;
                *next.entry(d).or_insert(0.0) += c * mono[m] as f64;
            }
        }
        terms = next;
    }
    let mut out: Vec<(Mono, f64)> = terms.into_iter().filter(|(_, c)| *c != 0.0).collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// E[x^j ; x > 0] for x ~ N(0, 1).
pub fn half_moment(j: usize) -> f64 {
    if j % 2 == 0 {
        0.5 * (1..j).step_by(2).map(|v| v as f64).product::<f64>()
    } else {
        let h = (j - 1) / 2;
        2f64.powi(h as i32) * (1..=h).map(|v| v as f64).product::<f64>()
            / (2.0 * std::f64::consts::PI).sqrt()
    }
}

/// E[He_k(x) x^p ; x > 0] for x ~ N(0, 1).
pub fn half_hermite_moment(k: usize, p: usize) -> f64 {
    gauss::hermite_he_coeffs(k)
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, c)| c * half_moment(j + p))
        .sum()
}

/// Exact ⟨∂^k(σ^p σ′^q)⟩_K for σ(t) = (a₊1_{t>0} + a₋1_{t<0})t.
fn homog_bracket(kvar: f64, k: usize, p: usize, q: usize, ap: f64, am: f64) -> Result<f64> {
    let sign = if (k + p) % 2 == 0 { 1.0 } else { -1.0 };
    let slopes = ap.powi((p + q) as i32) + sign * am.powi((p + q) as i32);
    if kvar == 0.0 {
        if k > 0 {
            return Err(Error::SingularKernel { order: k });
        }
        // Value at z = 0 with the convention σ′(0) = a₊.
        return Ok(if p > 0 { 0.0 } else { ap.powi(q as i32) });
    }
    if k == 0 && p == 0 {
        // Plain average of a step function: no Hermite factor.
        return Ok(0.5 * (ap.powi(q as i32) + am.powi(q as i32)));
    }
    let m = half_hermite_moment(k, p);
    Ok(kvar.powf((p as f64 - k as f64) / 2.0) * m * slopes)
}

fn binomial(n: usize, r: usize) -> f64 {
    (0..r).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::{expect1_split, weak_deriv_expect, weak_deriv_expect_split};

    #[test]
    fn half_moments() {
        assert_eq!(half_moment(0), 0.5);
        assert_eq!(half_moment(2), 0.5);
        assert_eq!(half_moment(4), 1.5);
        let r = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((half_moment(1) - r).abs() < 1e-16);
        assert!((half_moment(3) - 2.0 * r).abs() < 1e-15);
        assert!((half_moment(5) - 8.0 * r).abs() < 1e-15);
    }

    #[test]
    fn relu_brackets() {
        let relu = Nonlinearity::relu();
        for &k in &[0.25, 1.0, 3.7] {
            let b = Brackets::new(&relu, k).unwrap();
            assert!((b.get(0, 2, 0).unwrap() - k / 2.0).abs() < 1e-15);
            assert!((b.get(2, 2, 0).unwrap() - 1.0).abs() < 1e-14);
            assert!((b.get(0, 0, 2).unwrap() - 0.5).abs() < 1e-15);
            assert!((b.get(0, 4, 0).unwrap() - 1.5 * k * k).abs() < 1e-14);
            assert!((b.chi_parallel(2.0).unwrap() - 1.0).abs() < 1e-14);
            assert!((b.chi_perp(2.0).unwrap() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn homog_brackets_match_split_quadrature() {
        let nl = Nonlinearity::homog1(1.3, -0.4).unwrap();
        let kv = 0.8;
        let b = Brackets::new(&nl, kv).unwrap();
        for k in 0..6 {
            for p in 0..5 {
                for q in 0..3 {
                    let f = |z: f64| {
                        nl.eval(z, 0).unwrap().powi(p as i32)
                            * nl.eval(z, 1).unwrap().powi(q as i32)
                    };
                    if k == 0 && p == 0 && q == 0 {
                        continue;
                    }
                    let num = weak_deriv_expect_split(f, Kernel1 { k: kv }, k).unwrap();
                    let ex = b.get(k, p, q).unwrap();
                    assert!(
                        (num - ex).abs() < 1e-11 * (1.0 + ex.abs()),
                        "k={k} p={p} q={q}: {num} vs {ex}"
                    );
                }
            }
        }
        let _ = expect1_split(|z| z, Kernel1 { k: 1.0 });
    }

    #[test]
    fn smooth_brackets_match_hermite_identity() {
        let tanh = Nonlinearity::tanh();
        for &kv in &[0.2, 0.9] {
            let b = Brackets::new(&tanh, kv).unwrap();
            for k in 0..5 {
                for &(p, q) in &[(2usize, 0usize), (1, 1), (0, 2), (4, 0), (2, 2)] {
                    let f = |z: f64| {
                        tanh.eval(z, 0).unwrap().powi(p as i32)
                            * tanh.eval(z, 1).unwrap().powi(q as i32)
                    };
                    let num = weak_deriv_expect(f, Kernel1 { k: kv }, k, 257).unwrap();
                    let an = b.get(k, p, q).unwrap();
                    assert!(
                        (num - an).abs() < 1e-9 * (1.0 + an.abs()),
                        "K={kv} k={k} p={p} q={q}: {num} vs {an}"
                    );
                }
            }
        }
    }

    #[test]
    fn smooth_brackets_at_zero_variance_are_point_values() {
        let tanh = Nonlinearity::tanh();
        let b = Brackets::new(&tanh, 0.0).unwrap();
        // ∂²(σ²) at 0 = 2σ′(0)² = 2 ; (σ′)² at 0 = 1 ; ∂⁴σ² at 0 = −16.
        assert!((b.get(2, 2, 0).unwrap() - 2.0).abs() < 1e-15);
        assert!((b.get(0, 0, 2).unwrap() - 1.0).abs() < 1e-15);
        assert!((b.get(4, 2, 0).unwrap() + 16.0).abs() < 1e-12);
    }

    #[test]
    fn expansion_counts() {
        // ∂²(σ²) = 2σ′² + 2σσ″
        let t = expand_derivative(vec![2, 0, 0], 2);
        assert_eq!(t.len(), 2);
        assert!(t.iter().all(|(_, c)| *c == 2.0));
    }
}
