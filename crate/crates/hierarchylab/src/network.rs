//! Network specification: widths, activation, initialization hyperparameters
//! and the input vector, plus its versioned JSON configuration form.

use serde::{Deserialize, Serialize};

use crate::crit::{tune_critical, CriticalTuning, UniversalityClass};
use crate::error::{Error, Result};
use crate::nonlin::{ActivationConfig, Nonlinearity};

/// Version of the JSON configuration and report schemas.
pub const SCHEMA_VERSION: u32 = 1;

/// A random fully connected network z^{(ℓ+1)} = b^{(ℓ+1)} + W^{(ℓ+1)}σ(z^{(ℓ)}),
/// with W_ij ~ N(0, C_W/n_ℓ) and b_i ~ N(0, C_b); z^{(1)} = b^{(1)} + W^{(1)}x
/// with fan-in n₀.
#[derive(Clone, Debug)]
pub struct NetworkSpec {
    /// Input dimension n₀.
    pub n0: usize,
    /// Hidden widths n₁, …, n_L.
    pub widths: Vec<usize>,
    /// Output dimension n_{L+1}.
    pub n_out: usize,
    /// Activation.
    pub nl: Nonlinearity,
    /// Bias variance.
    pub c_b: f64,
    /// Weight variance (times fan-in).
    pub c_w: f64,
    /// Universality class when the tuning came from the critical solver.
    pub class: Option<UniversalityClass>,
    /// Network input x ∈ R^{n₀}.
    pub input_x: Vec<f64>,
}

impl NetworkSpec {
    /// A critically tuned network with constant hidden width.
    pub fn critical(
        nl: Nonlinearity,
        n0: usize,
        width: usize,
        depth: usize,
        input_x: Vec<f64>,
    ) -> Result<Self> {
        let t = tune_critical(&nl)?;
        let spec = Self {
            n0,
            widths: vec![width; depth],
            n_out: 2,
            nl,
            c_b: t.c_b,
            c_w: t.c_w,
            class: Some(t.class),
            input_x,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks sizes and hyperparameters.
    pub fn validate(&self) -> Result<()> {
        if self.n0 == 0 || self.n_out == 0 {
            return Err(Error::InvalidConfig("n0 and n_out must be >= 1".into()));
        }
        if self.widths.contains(&0) {
            return Err(Error::InvalidConfig("all widths must be >= 1".into()));
        }
        if self.input_x.len() != self.n0 {
            return Err(Error::InvalidConfig(format!(
                "input_x has length {} but n0 = {}",
                self.input_x.len(),
                self.n0
            )));
        }
        if self.input_x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("input_x must be finite".into()));
        }
        if !(self.c_w > 0.0) || !(self.c_b >= 0.0) || !self.c_w.is_finite() || !self.c_b.is_finite()
        {
            return Err(Error::InvalidConfig(format!(
                "need C_W > 0 and C_b >= 0 (got C_W = {}, C_b = {})",
                self.c_w, self.c_b
            )));
        }
        Ok(())
    }

    /// Number of hidden layers L.
    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    /// ‖x‖²/n₀.
    pub fn norm_sq_over_n0(&self) -> f64 {
        self.input_x.iter().map(|v| v * v).sum::<f64>() / self.n0 as f64
    }

    /// ‖x‖₄⁴/n₀.
    pub fn norm4_over_n0(&self) -> f64 {
        self.input_x.iter().map(|v| v.powi(4)).sum::<f64>() / self.n0 as f64
    }

    /// K^{(1)} = C_b + C_W‖x‖²/n₀.
    pub fn k1(&self) -> f64 {
        self.c_b + self.c_w * self.norm_sq_over_n0()
    }

    /// Effective depth Σ_ℓ 1/n_ℓ (= L/n for constant width n).
    pub fn xi(&self) -> f64 {
        self.widths.iter().map(|&w| 1.0 / w as f64).sum()
    }

    /// JSON configuration form (fails for activations without one).
    pub fn to_config(&self) -> Result<NetworkConfig> {
        let activation = self
            .nl
            .to_config()
            .ok_or_else(|| Error::InvalidConfig("activation has no JSON form".into()))?;
        let tuning = match self.class {
            Some(_) => TuningConfig::Named(TuningName::Critical),
            None => TuningConfig::Explicit {
                c_b: self.c_b,
                c_w: self.c_w,
            },
        };
        Ok(NetworkConfig {
            schema_version: SCHEMA_VERSION,
            n0: self.n0,
            widths: Some(self.widths.clone()),
            width: None,
            depth: None,
            n_out: Some(self.n_out),
            activation,
            tuning,
            input_x: self.input_x.clone(),
        })
    }
}

/// `"critical"` or explicit `{"C_b": …, "C_W": …}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TuningConfig {
    Named(TuningName),
    Explicit {
        #[serde(rename = "C_b")]
        c_b: f64,
        #[serde(rename = "C_W")]
        c_w: f64,
    },
}

/// The named tuning policies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TuningName {
    Critical,
}

/// JSON network configuration. Hidden widths are either an explicit
/// `widths` list or the `width` + `depth` shorthand. Unknown fields are
/// rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub schema_version: u32,
    pub n0: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub widths: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_out: Option<usize>,
    pub activation: ActivationConfig,
    pub tuning: TuningConfig,
    pub input_x: Vec<f64>,
}

impl NetworkConfig {
    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("network spec: {e}")))
    }

    /// Builds the network, running the critical solver when requested.
    pub fn build(&self) -> Result<NetworkSpec> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidConfig(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        let widths = match (&self.widths, self.width, self.depth) {
            (Some(w), None, None) => w.clone(),
            (None, Some(w), Some(d)) => vec![w; d],
            _ => {
                return Err(Error::InvalidConfig(
                    "give either `widths` or both `width` and `depth`".into(),
                ))
            }
        };
        let nl = self.activation.build()?;
        let (c_b, c_w, class) = match self.tuning {
            TuningConfig::Named(TuningName::Critical) => {
                let t: CriticalTuning = tune_critical(&nl)?;
                (t.c_b, t.c_w, Some(t.class))
            }
            TuningConfig::Explicit { c_b, c_w } => (c_b, c_w, None),
        };
        let spec = NetworkSpec {
            n0: self.n0,
            widths,
            n_out: self.n_out.unwrap_or(2),
            nl,
            c_b,
            c_w,
            class,
            input_x: self.input_x.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_shorthand_and_rejects_unknown_fields() {
        let text = r#"{"schema_version":1,"n0":2,"width":8,"depth":3,
            "activation":{"kind":"relu"},"tuning":"critical","input_x":[1.0,0.0]}"#;
        let spec = NetworkConfig::from_json(text).unwrap().build().unwrap();
        assert_eq!(spec.widths, vec![8, 8, 8]);
        assert_eq!(spec.c_w, 2.0);
        assert!((spec.k1() - 1.0).abs() < 1e-15);
        let bad = text.replace("\"n0\":2", "\"n0\":2,\"extra\":true");
        assert!(NetworkConfig::from_json(&bad).is_err());
        let explicit = text.replace("\"critical\"", r#"{"C_b":0.1,"C_W":1.5}"#);
        let spec = NetworkConfig::from_json(&explicit)
            .unwrap()
            .build()
            .unwrap();
        assert_eq!((spec.c_b, spec.c_w, spec.class), (0.1, 1.5, None));
        let round = spec.to_config().unwrap();
        let again = serde_json::to_string(&round).unwrap();
        let back = NetworkConfig::from_json(&again).unwrap().build().unwrap();
        assert_eq!(back.widths, spec.widths);
    }

    #[test]
    fn rejects_inconsistent_sizes() {
        let text = r#"{"schema_version":1,"n0":3,"widths":[4],
            "activation":{"kind":"tanh"},"tuning":"critical","input_x":[1.0]}"#;
        assert!(NetworkConfig::from_json(text).unwrap().build().is_err());
        let text = r#"{"schema_version":2,"n0":1,"widths":[4],
            "activation":{"kind":"tanh"},"tuning":"critical","input_x":[1.0]}"#;
        assert!(NetworkConfig::from_json(text).unwrap().build().is_err());
    }
}
