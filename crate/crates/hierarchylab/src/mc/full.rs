//! One explicit network draw with exact reverse-mode gradients.
//!
//! Every weight and bias is materialized, so this path is the ground truth
//! the faster conditional samplers are checked against.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::network::NetworkSpec;
use crate::rng::draw_rng;

/// Output of a single explicit network draw.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ForwardGrads {
    /// z^{(L+1)} ∈ R^{n_out}.
    pub z_out: Vec<f64>,
    /// ∂z_q/∂x_j, shape [n_out][n0].
    pub dz_dx: Vec<Vec<f64>>,
    /// ∂z_q/∂W^{(1)}_{ij}, shape [n_out][n1][n0] (n1 = n_out when L = 0).
    pub dz_dw1: Vec<Vec<Vec<f64>>>,
}

/// Dense row-major matrix with its bias.
struct Layer {
    rows: usize,
    cols: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

/// Draws all weights and biases (stream `draw_index` of `seed`), runs the
/// forward pass at `spec.input_x` and back-propagates every output.
pub fn forward_with_grads_draw(
    spec: &NetworkSpec,
    seed: u64,
    draw_index: u64,
) -> Result<ForwardGrads> {
    spec.validate()?;
    let mut rng = draw_rng(seed, draw_index);
    let mut dims = vec![spec.n0];
    dims.extend(&spec.widths);
    dims.push(spec.n_out);
    let layers: Vec<Layer> = dims
        .windows(2)
        .map(|d| {
            let (cols, rows) = (d[0], d[1]);
            let sw = (spec.c_w / cols as f64).sqrt();
            let sb = spec.c_b.sqrt();
            let w = (0..rows * cols)
                .map(|_| sw * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let b = (0..rows)
                .map(|_| sb * rng.sample::<f64, _>(StandardNormal))
                .collect();
            Layer { rows, cols, w, b }
        })
        .collect();

    // Forward: pre-activations of every layer and σ′ of the hidden ones.
    let mut pre: Vec<Vec<f64>> = Vec::with_capacity(layers.len());
    let mut input = spec.input_x.clone();
    for (li, layer) in layers.iter().enumerate() {
        if li > 0 {
            input = pre[li - 1]
                .iter()
                .map(|&z| spec.nl.eval(z, 0))
                .collect::<Result<_>>()?;
        }
        let z: Vec<f64> = (0..layer.rows)
            .map(|r| {
                layer.b[r]
                    + (0..layer.cols)
                        .map(|c| layer.w[r * layer.cols + c] * input[c])
                        .sum::<f64>()
            })
            .collect();
        pre.push(z);
    }
    let dsig: Vec<Vec<f64>> = pre[..pre.len() - 1]
        .iter()
        .map(|zs| {
            zs.iter()
                .map(|&z| spec.nl.eval(z, 1))
                .collect::<Result<_>>()
        })
        .collect::<Result<_>>()?;

    let z_out = pre.last().cloned().unwrap_or_default();
    let mut dz_dx = Vec::with_capacity(spec.n_out);
    let mut dz_dw1 = Vec::with_capacity(spec.n_out);
    for q in 0..spec.n_out {
        // g = ∂z_q/∂z^{(ℓ)}, starting at the output layer.
        let mut g = vec![0.0; spec.n_out];
        g[q] = 1.0;
        for li in (1..layers.len()).rev() {
            let layer = &layers[li];
            let mut next = vec![0.0; layer.cols];
            for (r, gr) in g.iter().enumerate() {
                for (c, nx) in next.iter_mut().enumerate() {
                    *nx += layer.w[r * layer.cols + c] * gr;
                }
            }
            for (nx, d) in next.iter_mut().zip(&dsig[li - 1]) {
                *nx *= d;
            }
            g = next;
        }
        let first = &layers[0];
        let dx = (0..first.cols)
            .map(|c| {
                (0..first.rows)
                    .map(|r| first.w[r * first.cols + c] * g[r])
                    .sum()
            })
            .collect();
        let dw = g
            .iter()
            .map(|gi| spec.input_x.iter().map(|xj| gi * xj).collect())
            .collect();
        dz_dx.push(dx);
        dz_dw1.push(dw);
    }
    Ok(ForwardGrads {
        z_out,
        dz_dx,
        dz_dw1,
    })
}

/// One explicit network draw under `seed` (draw index 0).
pub fn forward_with_grads(spec: &NetworkSpec, seed: u64) -> Result<ForwardGrads> {
    forward_with_grads_draw(spec, seed, 0)
}
