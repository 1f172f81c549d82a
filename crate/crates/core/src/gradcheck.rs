//! Centered finite-difference check of [`Model::mse_and_grad`].

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::linalg::Matrix;
use crate::models::{LayerParams, Model};

/// Floor on the denominator of the relative deviation. Gradients smaller than
/// this are compared in absolute terms, where the difference quotient is
/// dominated by rounding in the loss.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheck {
    /// Largest `|analytic - numeric| / max(|analytic|, |numeric|, REL_FLOOR)`.
    pub max_rel: f64,
    /// Index into the trainable parameter vector where `max_rel` occurred.
    pub worst: usize,
    pub checked: usize,
    /// Parameters whose perturbation moved some pre-activation across a kink.
    pub skipped: usize,
}

/// Compares analytic gradients with `(L(p + h) - L(p - h)) / 2h` for every
/// trainable parameter.
pub fn gradient_check(model: &Model, x: &Matrix, y: &Matrix, h: f64) -> Result<GradCheck> {
    let (_, grad) = model.mse_and_grad(x, y)?;
    let base = model.trainable_params();
    let kink = model.spec().activation.kink();
    let sides = |m: &Model| kink.map(|s| side_pattern(m, x, s));
    let centre = sides(model);
    let mut probe = model.clone();
    let mut out = GradCheck {
        max_rel: 0.0,
        worst: 0,
        checked: 0,
        skipped: 0,
    };
    let mut p = base.clone();
    for i in 0..base.len() {
        p[i] = base[i] + h;
        probe.set_trainable_params(&p)?;
        let lp = probe.mse(x, y)?;
        let up = sides(&probe);
        p[i] = base[i] - h;
        probe.set_trainable_params(&p)?;
        let lm = probe.mse(x, y)?;
        let dn = sides(&probe);
        p[i] = base[i];
        if up != centre || dn != centre {
            out.skipped += 1;
            continue;
        }
        let numeric = (lp - lm) / (2.0 * h);
        let a = grad[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > out.max_rel || rel.is_nan() {
            out.max_rel = rel;
            out.worst = i;
        }
        out.checked += 1;
    }
    Ok(out)
}

/// For every sample and hidden unit, whether the pre-activation is at or
/// above the kink `s`.
fn side_pattern(m: &Model, x: &Matrix, s: f64) -> Vec<bool> {
    let act = m.spec().activation;
    let mut out = Vec::new();
    for r in 0..x.rows() {
        let mut z = x.row(r).to_vec();
        for layer in m.layers() {
            let (w, b) = match layer {
                LayerParams::Mmnn { w, b, .. } | LayerParams::Dense { w, b, .. } => (w, b),
            };
            let u: Vec<f64> = (0..w.rows())
                .map(|j| w.row(j).iter().zip(&z).map(|(a, v)| a * v).sum::<f64>() + b[j])
                .collect();
            z = match layer {
                LayerParams::Mmnn { a, c, residual, .. } => {
                    out.extend(u.iter().map(|v| *v >= s));
                    let hdn: Vec<f64> = u.iter().map(|v| act.value(*v)).collect();
                    (0..a.rows())
                        .map(|k| {
                            let mut o =
                                a.row(k).iter().zip(&hdn).map(|(p, q)| p * q).sum::<f64>() + c[k];
                            if *residual {
                                o += z[k];
                            }
                            o
                        })
                        .collect()
                }
                LayerParams::Dense { activated, .. } => {
                    if *activated {
                        out.extend(u.iter().map(|v| *v >= s));
                        u.iter().map(|v| act.value(*v)).collect()
                    } else {
                        u
                    }
                }
            };
        }
    }
    out
}
