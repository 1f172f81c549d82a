//! One-dimensional quadrature: composite trapezoid and Gauss-Legendre.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuadratureKind {
    Trapezoid,
    GaussLegendre,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadratureRule {
    pub kind: QuadratureKind,
    pub nodes: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::trapezoid(DEFAULT_NODES)
    }
}

impl QuadratureRule {
    pub fn trapezoid(nodes: usize) -> Self {
        Self {
            kind: QuadratureKind::Trapezoid,
            nodes,
        }
    }

    pub fn gauss_legendre(nodes: usize) -> Self {
        Self {
            kind: QuadratureKind::GaussLegendre,
            nodes,
        }
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn points(&self, a: f64, b: f64) -> Result<Vec<(f64, f64)>> {
        if self.nodes < 2 {
            return Err(Error::Argument(format!(
                "quadrature needs at least 2 nodes, got {}",
                self.nodes
            )));
        }
        if !(a <= b) {
            return Err(Error::Argument(format!("interval [{a}, {b}] is reversed")));
        }
        let n = self.nodes;
        Ok(match self.kind {
            QuadratureKind::Trapezoid => {
                let h = (b - a) / (n - 1) as f64;
                (0..n)
                    .map(|i| {
                        // Mirror the node set so symmetric intervals get exactly
                        // symmetric nodes.
                        let x = if 2 * i < n {
                            a + i as f64 * h
                        } else {
                            b - (n - 1 - i) as f64 * h
                        };
                        let w = if i == 0 || i == n - 1 { h / 2.0 } else { h };
                        (x, w)
                    })
                    .collect()
            }
            QuadratureKind::GaussLegendre => {
                let mid = 0.5 * (a + b);
                let half = 0.5 * (b - a);
                legendre_nodes(n)
                    .into_iter()
                    .map(|(t, w)| (mid + half * t, half * w))
                    .collect()
            }
        })
    }
}

/// Gauss-Legendre nodes and weights on [-1, 1], by Newton iteration on P_n.
fn legendre_nodes(n: usize) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    if n % 2 == 1 {
        out[n / 2].0 = 0.0;
    }
    out
}

/// (P_n(x), P_n'(x)) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Approximates the integral of `f` over [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rule: QuadratureRule) -> Result<f64> {
    let pts = rule.points(a, b)?;
    let mut acc = 0.0;
    let trapezoid = rule.kind == QuadratureKind::Trapezoid;
    let last = pts.len() - 1;
    for (i, &(x, w)) in pts.iter().enumerate() {
        let y = f(x);
        if !y.is_finite() {
            return Err(Error::Numeric(format!("integrand is {y} at x = {x}")));
        }
        if trapezoid {
            // Unit weights, with the step applied once at the end.
            acc += if i == 0 || i == last { 0.5 * y } else { y };
        } else {
            acc += w * y;
        }
    }
    Ok(if trapezoid {
        (b - a) * acc / last as f64
    } else {
        acc
    })
}
