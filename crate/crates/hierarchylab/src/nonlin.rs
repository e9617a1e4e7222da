//! Activation catalog: evaluation of σ and its derivatives, Taylor data at the
//! origin and the JSON representation used by configuration files.
//!
//! Three kinds are supported:
//!
//! * [`Kind::Homog1`] — positively 1-homogeneous, σ(t) = (a₊1_{t>0} + a₋1_{t<0})·t
//!   (ReLU is a₊ = 1, a₋ = 0). Not smooth at 0; weak derivatives are handled
//!   by the Gaussian engine in [`crate::gauss`].
//! * [`Kind::Tanh`] — derivatives of every order through the polynomial
//!   recurrence P₀(t) = t, P_{k+1}(t) = P_k′(t)(1 − t²) with t = tanh z.
//! * [`Kind::TanhLike`] — a user-supplied analytic evaluator `f(z, order)`
//!   valid up to a declared maximum order.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Highest derivative order offered for `tanh`.
pub const MAX_TANH_ORDER: usize = 16;

/// Analytic evaluator `(z, order) ↦ σ^{(order)}(z)` for user-supplied activations.
pub type Evaluator = Arc<dyn Fn(f64, usize) -> f64 + Send + Sync>;

/// The family an activation belongs to.
#[derive(Clone)]
pub enum Kind {
    /// σ(t) = (a₊1_{t>0} + a₋1_{t<0})·t.
    Homog1 { a_plus: f64, a_minus: f64 },
    /// The hyperbolic tangent.
    Tanh,
    /// A smooth activation given by analytic derivative evaluators.
    TanhLike {
        evaluator: Evaluator,
        max_deriv_order: usize,
    },
}

impl fmt::Debug for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::Homog1 { a_plus, a_minus } => f
                .debug_struct("Homog1")
                .field("a_plus", a_plus)
                .field("a_minus", a_minus)
                .finish(),
            Kind::Tanh => f.write_str("Tanh"),
            Kind::TanhLike {
                max_deriv_order, ..
            } => f
                .debug_struct("TanhLike")
                .field("max_deriv_order", max_deriv_order)
                .finish_non_exhaustive(),
        }
    }
}

/// An activation function together with its Taylor data at the origin.
#[derive(Clone, Debug)]
pub struct Nonlinearity {
    kind: Kind,
    sigma1: f64,
    sigma3: f64,
    smooth: bool,
}

impl Nonlinearity {
    /// ReLU: a₊ = 1, a₋ = 0.
    pub fn relu() -> Self {
        Self::homog1(1.0, 0.0).expect("ReLU parameters are admissible")
    }

    /// Leaky ReLU with unit positive slope and negative slope `a_minus`.
    pub fn leaky_relu(a_minus: f64) -> Result<Self> {
        Self::homog1(1.0, a_minus)
    }

    /// General positively 1-homogeneous activation.
    ///
    /// Requires a₊ ≠ a₋ (the linear case has no finite-width structure of
    /// interest and breaks the closed forms) and a₊² + a₋² ≠ 0.
    pub fn homog1(a_plus: f64, a_minus: f64) -> Result<Self> {
        if !a_plus.is_finite() || !a_minus.is_finite() {
            return Err(Error::OutOfRange("slopes must be finite".into()));
        }
        if a_plus == a_minus {
            return Err(Error::OutOfRange(format!(
                "1-homogeneous activation requires a_plus != a_minus (got {a_plus})"
            )));
        }
        if a_plus * a_plus + a_minus * a_minus == 0.0 {
            return Err(Error::OutOfRange(
                "a_plus^2 + a_minus^2 must be nonzero".into(),
            ));
        }
        Ok(Self {
            kind: Kind::Homog1 { a_plus, a_minus },
            sigma1: a_plus,
            sigma3: 0.0,
            smooth: false,
        })
    }

    /// The hyperbolic tangent (σ₁ = 1, σ₃ = −1/3).
    pub fn tanh() -> Self {
        Self {
            kind: Kind::Tanh,
            sigma1: 1.0,
            sigma3: -1.0 / 3.0,
            smooth: true,
        }
    }

    /// A smooth activation from analytic derivative evaluators.
    ///
    /// `evaluator(z, k)` must return σ^{(k)}(z) for every k ≤ `max_deriv_order`.
    /// σ₁ is read from the first derivative at 0. σ₃ is read from the third
    /// derivative when available; with `max_deriv_order` < 3 it is obtained by
    /// a central second difference of σ′ (finite differences are never used
    /// for orders ≥ 4).
    pub fn tanh_like(evaluator: Evaluator, max_deriv_order: usize) -> Result<Self> {
        if max_deriv_order < 1 {
            return Err(Error::OutOfRange(
                "a smooth activation needs at least its first derivative".into(),
            ));
        }
        let sigma1 = evaluator(0.0, 1);
        let sigma3 = if max_deriv_order >= 3 {
            evaluator(0.0, 3) / 6.0
        } else {
            let h = 1e-4;
            (evaluator(h, 1) - 2.0 * evaluator(0.0, 1) + evaluator(-h, 1)) / (h * h) / 6.0
        };
        if !sigma1.is_finite() || !sigma3.is_finite() {
            return Err(Error::NonFinite("Taylor coefficients at 0".into()));
        }
        Ok(Self {
            kind: Kind::TanhLike {
                evaluator,
                max_deriv_order,
            },
            sigma1,
            sigma3,
            smooth: true,
        })
    }

    /// The activation family.
    pub fn kind(&self) -> &Kind {
        &self.kind
    }

    /// First Taylor coefficient σ₁ = σ′(0).
    pub fn sigma1(&self) -> f64 {
        self.sigma1
    }

    /// Third Taylor coefficient σ₃ = σ‴(0)/6.
    pub fn sigma3(&self) -> f64 {
        self.sigma3
    }

    /// False for the 1-homogeneous family, whose derivatives are only weak.
    pub fn is_smooth(&self) -> bool {
        self.smooth
    }

    /// The slopes (a₊, a₋) of a 1-homogeneous activation.
    pub fn homog_slopes(&self) -> Option<(f64, f64)> {
        match self.kind {
            Kind::Homog1 { a_plus, a_minus } => Some((a_plus, a_minus)),
            _ => None,
        }
    }

    /// Highest derivative order with a classical evaluator.
    pub fn max_order(&self) -> usize {
        match &self.kind {
            Kind::Homog1 { .. } => usize::MAX,
            Kind::Tanh => MAX_TANH_ORDER,
            Kind::TanhLike {
                max_deriv_order, ..
            } => *max_deriv_order,
        }
    }

    /// σ^{(order)}(z).
    ///
    /// For the 1-homogeneous family the classical derivative is returned away
    /// from 0; at z = 0 the first derivative is the right limit a₊ and higher
    /// derivatives are 0 by convention (Gaussian expectations never sample
    /// that point).
    pub fn eval(&self, z: f64, order: usize) -> Result<f64> {
        match &self.kind {
            Kind::Homog1 { a_plus, a_minus } => Ok(match order {
                0 => {
                    if z > 0.0 {
                        a_plus * z
                    } else {
                        a_minus * z
                    }
                }
                1 => {
                    if z >= 0.0 {
                        *a_plus
                    } else {
                        *a_minus
                    }
                }
                _ => 0.0,
            }),
            Kind::Tanh => {
                if order > MAX_TANH_ORDER {
                    return Err(Error::UnsupportedOrder {
                        order,
                        max: MAX_TANH_ORDER,
                    });
                }
                Ok(eval_poly(&tanh_polys()[order], z.tanh()))
            }
            Kind::TanhLike {
                evaluator,
                max_deriv_order,
            } => {
                if order > *max_deriv_order {
                    return Err(Error::UnsupportedOrder {
                        order,
                        max: *max_deriv_order,
                    });
                }
                Ok(evaluator(z, order))
            }
        }
    }

    /// Writes σ^{(k)}(z) for k = 0..out.len() into `out`.
    ///
    /// The caller guarantees `out.len() − 1 ≤ self.max_order()`.
    pub(crate) fn eval_all(&self, z: f64, out: &mut [f64]) {
        match &self.kind {
            Kind::Tanh => {
                let t = z.tanh();
                for (k, o) in out.iter_mut().enumerate() {
                    *o = eval_poly(&tanh_polys()[k], t);
                }
            }
            Kind::TanhLike { evaluator, .. } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = evaluator(z, k);
                }
            }
            Kind::Homog1 { .. } => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = self
                        .eval(z, k)
                        .expect("1-homogeneous derivatives exist at every order");
                }
            }
        }
    }

    /// a = −6σ₃/σ₁, the decay constant of the K*=0 class (K^{(ℓ)} ≈ 1/(aℓ)).
    pub fn taylor_a(&self) -> Result<f64> {
        if !self.smooth || self.sigma1 * self.sigma3 >= 0.0 {
            return Err(Error::NotKStarZeroClass);
        }
        Ok(-6.0 * self.sigma3 / self.sigma1)
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        match &self.kind {
            Kind::Homog1 { a_plus, a_minus } => {
                if *a_plus == 1.0 && *a_minus == 0.0 {
                    "relu".into()
                } else {
                    format!("homog1(a_plus={a_plus}, a_minus={a_minus})")
                }
            }
            Kind::Tanh => "tanh".into(),
            Kind::TanhLike { .. } => "tanh_like".into(),
        }
    }

    /// JSON configuration for the catalog kinds (`None` for `TanhLike`).
    pub fn to_config(&self) -> Option<ActivationConfig> {
        match &self.kind {
            Kind::Homog1 { a_plus, a_minus } => Some(if *a_plus == 1.0 && *a_minus == 0.0 {
                ActivationConfig {
                    kind: ActivationKind::Relu,
                    a_plus: None,
                    a_minus: None,
                }
            } else {
                ActivationConfig {
                    kind: ActivationKind::LeakyRelu,
                    a_plus: Some(*a_plus),
                    a_minus: Some(*a_minus),
                }
            }),
            Kind::Tanh => Some(ActivationConfig {
                kind: ActivationKind::Tanh,
                a_plus: None,
                a_minus: None,
            }),
            Kind::TanhLike { .. } => None,
        }
    }
}

/// Coefficients (ascending powers of t = tanh z) of σ^{(k)} for tanh.
fn tanh_polys() -> &'static [Vec<f64>] {
    static POLYS: OnceLock<Vec<Vec<f64>>> = OnceLock::new();
    POLYS.get_or_init(|| {
        let mut polys = vec![vec![0.0, 1.0]];
        for k in 0..MAX_TANH_ORDER {
            let p = &polys[k];
            // P'(t)
            let dp: Vec<f64> = (1..p.len()).map(|i| i as f64 * p[i]).collect();
            // P'(t)·(1 − t²)
            let mut next = vec![0.0; dp.len() + 2];
            for (i, c) in dp.iter().enumerate() {
                next[i] += c;
                next[i + 2] -= c;
            }
            polys.push(next);
        }
        polys
    })
}

fn eval_poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// The `kind` tag of an activation in JSON configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActivationKind {
    Relu,
    LeakyRelu,
    Tanh,
}

/// JSON form `{"kind": "relu" | "leaky_relu" | "tanh", "a_plus": …, "a_minus": …}`.
///
/// `relu` and `tanh` take no slopes; `leaky_relu` requires `a_minus` and
/// defaults `a_plus` to 1. Unknown fields are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActivationConfig {
    pub kind: ActivationKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_minus: Option<f64>,
}

impl ActivationConfig {
    /// Validates the configuration and builds the activation.
    pub fn build(&self) -> Result<Nonlinearity> {
        match self.kind {
            ActivationKind::Relu | ActivationKind::Tanh => {
                if self.a_plus.is_some() || self.a_minus.is_some() {
                    return Err(Error::InvalidConfig(format!(
                        "activation kind {:?} takes no slopes",
                        self.kind
                    )));
                }
                Ok(if self.kind == ActivationKind::Relu {
                    Nonlinearity::relu()
                } else {
                    Nonlinearity::tanh()
                })
            }
            ActivationKind::LeakyRelu => {
                let a_minus = self
                    .a_minus
                    .ok_or_else(|| Error::InvalidConfig("leaky_relu requires a_minus".into()))?;
                Nonlinearity::homog1(self.a_plus.unwrap_or(1.0), a_minus)
            }
        }
    }
}

/// Parses either a bare catalog name (`relu`, `tanh`) or a JSON object.
pub fn parse_activation(text: &str) -> Result<Nonlinearity> {
    let trimmed = text.trim();
    match trimmed {
        "relu" => return Ok(Nonlinearity::relu()),
        "tanh" => return Ok(Nonlinearity::tanh()),
        _ => {}
    }
    let cfg: ActivationConfig = serde_json::from_str(trimmed)
        .map_err(|e| Error::InvalidConfig(format!("activation: {e}")))?;
    cfg.build()
}
