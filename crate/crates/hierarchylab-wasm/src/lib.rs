//! Browser bindings for the hierarchylab demo page.
//!
//! Three operations, each returning a JSON string:
//! - [`tune`]: critical initialization for an activation;
//! - [`hierarchy`]: the normalized cumulant trajectory of a critical network
//!   next to its leading universal prediction;
//! - [`relu_correlation`]: the 1-homogeneous correlation map iterated from ε₀.
//!
//! The `*_json` functions are the plain-Rust cores, usable (and tested) off
//! the browser.

use hierarchylab::crit::tune_critical;
use hierarchylab::hierarchy::{predict_normalized, run_hierarchy};
use hierarchylab::homog::{correlation_asymptote_derived, correlation_trajectory, HomogParams};
use hierarchylab::nonlin::parse_activation;
use hierarchylab::{NetworkSpec, Result};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Largest depth or step count the page may request.
pub const MAX_STEPS: usize = 100_000;

#[derive(Serialize)]
struct HierarchyRow {
    ell: usize,
    #[serde(rename = "K")]
    k: f64,
    k4_hat: f64,
    k6_hat: f64,
    k8_hat: f64,
    /// Leading prediction C₄ξ_ℓ (K* = 0 class only).
    k4_hat_leading: Option<f64>,
}

#[derive(Serialize)]
struct HierarchyOut {
    xi: f64,
    k8_caveat: bool,
    rows: Vec<HierarchyRow>,
}

#[derive(Serialize)]
struct CorrRow {
    ell: usize,
    eps: f64,
    ell2_eps: f64,
    asymptote: f64,
}

fn check_steps(n: usize) -> Result<()> {
    if n > MAX_STEPS {
        return Err(hierarchylab::Error::OutOfRange(format!(
            "{n} exceeds the demo limit {MAX_STEPS}"
        )));
    }
    Ok(())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    serde_json::to_string(v).map_err(|e| hierarchylab::Error::InvalidConfig(e.to_string()))
}

/// Critical (C_b, C_W, K*, class) as JSON.
pub fn tune_json(activation: &str) -> Result<String> {
    to_json(&tune_critical(&parse_activation(activation)?)?)
}

/// Cumulant trajectory of a critical network of constant width with first
/// layer variance `k1`.
pub fn hierarchy_json(activation: &str, width: usize, depth: usize, k1: f64) -> Result<String> {
    check_steps(depth)?;
    if !k1.is_finite() || k1 <= 0.0 {
        return Err(hierarchylab::Error::OutOfRange(format!(
            "K(1) = {k1} must be > 0"
        )));
    }
    let nl = parse_activation(activation)?;
    let c_w = tune_critical(&nl)?.c_w;
    let spec = NetworkSpec::critical(nl, 1, width, depth, vec![(k1 / c_w).sqrt()])?;
    let leading = spec.class == Some(hierarchylab::crit::UniversalityClass::KStarZeroClass);
    let traj = run_hierarchy(&spec)?;
    let rows = traj
        .states
        .iter()
        .map(|s| {
            let xi = (s.ell - 1) as f64 / width as f64;
            Ok(HierarchyRow {
                ell: s.ell,
                k: s.k,
                k4_hat: s.k4_hat(),
                k6_hat: s.k6_hat(),
                k8_hat: s.k8_hat(),
                k4_hat_leading: if leading {
                    Some(predict_normalized(xi, 2)?)
                } else {
                    None
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    to_json(&HierarchyOut {
        xi: spec.xi(),
        k8_caveat: traj.k8_caveat,
        rows,
    })
}

/// Correlation ε^{(ℓ)} of a leaky-ReLU network with slopes (1, a₋).
pub fn relu_correlation_json(a_minus: f64, eps0: f64, steps: usize) -> Result<String> {
    check_steps(steps)?;
    let p = HomogParams::new(1.0, a_minus)?;
    let traj = correlation_trajectory(eps0, steps, &p)?;
    let rows: Vec<CorrRow> = traj
        .iter()
        .enumerate()
        .map(|(ell, &eps)| CorrRow {
            ell,
            eps,
            ell2_eps: (ell * ell) as f64 * eps,
            asymptote: if ell == 0 {
                f64::NAN
            } else {
                correlation_asymptote_derived(ell, &p)
            },
        })
        .collect();
    to_json(&rows)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

/// Critical initialization for `activation` ("relu", "tanh", …).
#[wasm_bindgen]
pub fn tune(activation: &str) -> std::result::Result<String, JsError> {
    js(tune_json(activation))
}

/// Normalized cumulants κ̂₄, κ̂₆, κ̂₈ layer by layer.
#[wasm_bindgen]
pub fn hierarchy(
    activation: &str,
    width: usize,
    depth: usize,
    k1: f64,
) -> std::result::Result<String, JsError> {
    js(hierarchy_json(activation, width, depth, k1))
}

/// The 1-homogeneous correlation map iterated `steps` times.
#[wasm_bindgen]
pub fn relu_correlation(
    a_minus: f64,
    eps0: f64,
    steps: usize,
) -> std::result::Result<String, JsError> {
    js(relu_correlation_json(a_minus, eps0, steps))
}
