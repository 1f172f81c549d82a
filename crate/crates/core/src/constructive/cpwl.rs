use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Continuous piecewise-linear function on the whole real line.
///
/// Between breakpoints the function interpolates `values` linearly. Left of
/// the first breakpoint it continues with `left_slope`, right of the last
/// with `right_slope`. An affine function is stored with a single breakpoint
/// whose two slopes agree (see [`CpwlFunction::affine`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpwlFunction {
    pub breakpoints: Vec<f64>,
    pub values: Vec<f64>,
    pub left_slope: f64,
    pub right_slope: f64,
}

impl CpwlFunction {
    pub fn new(
        breakpoints: Vec<f64>,
        values: Vec<f64>,
        left_slope: f64,
        right_slope: f64,
    ) -> Result<Self> {
        let h = Self {
            breakpoints,
            values,
            left_slope,
            right_slope,
        };
        h.validate()?;
        Ok(h)
    }

    /// `x ↦ slope·x + intercept`, anchored at 0.
    pub fn affine(slope: f64, intercept: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![intercept], slope, slope)
    }

    pub fn validate(&self) -> Result<()> {
        if self.breakpoints.is_empty() {
            return Err(Error::Argument(
                "a CPwL function needs at least one anchor point".into(),
            ));
        }
        if self.breakpoints.len() != self.values.len() {
            return Err(Error::Shape(format!(
                "{} breakpoints but {} values",
                self.breakpoints.len(),
                self.values.len()
            )));
        }
        let finite = |v: &f64| v.is_finite();
        if !self.breakpoints.iter().all(finite)
            || !self.values.iter().all(finite)
            || !self.left_slope.is_finite()
            || !self.right_slope.is_finite()
        {
            return Err(Error::Numeric("CPwL data must be finite".into()));
        }
        if self.breakpoints.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::Argument(
                "breakpoints must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.breakpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    /// Slopes of the interior segments, one per consecutive breakpoint pair.
    pub fn segment_slopes(&self) -> Vec<f64> {
        self.breakpoints
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, y)| (y[1] - y[0]) / (x[1] - x[0]))
            .collect()
    }

    /// Direct interpolation; used as the oracle for the network form.
    pub fn eval(&self, x: f64) -> f64 {
        let bp = &self.breakpoints;
        let n = bp.len();
        if x <= bp[0] {
            return self.values[0] + self.left_slope * (x - bp[0]);
        }
        if x >= bp[n - 1] {
            return self.values[n - 1] + self.right_slope * (x - bp[n - 1]);
        }
        let j = bp.partition_point(|&b| b <= x) - 1;
        let t = (x - bp[j]) / (bp[j + 1] - bp[j]);
        self.values[j] + t * (self.values[j + 1] - self.values[j])
    }
}

/// `Σ_j u_j·ReLU(v_j·x + w_j) + offset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShallowReluNet {
    pub neurons: Vec<(f64, f64, f64)>,
    pub offset: f64,
}

impl ShallowReluNet {
    pub fn width(&self) -> usize {
        self.neurons.len()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut acc = 0.0;
        for &(u, v, w) in &self.neurons {
            acc += u * (v * x + w).max(0.0);
        }
        acc + self.offset
    }
}

/// Exact one-hidden-layer ReLU form of a CPwL function.
///
/// At the first breakpoint `x0` the two outer slopes become
/// `−s_left·ReLU(x0 − x)` and `s_right·ReLU(x − x0)`; every later breakpoint
/// adds the slope change times `ReLU(x − x_j)`. Zero-coefficient neurons are
/// dropped, so a function with `n` breakpoints uses at most `n + 1` neurons.
pub fn cpwl_to_relu_net(h: &CpwlFunction) -> ShallowReluNet {
    let slopes = h.segment_slopes();
    let bp = &h.breakpoints;
    let first_right = slopes.first().copied().unwrap_or(h.right_slope);

    let mut neurons = Vec::with_capacity(bp.len() + 1);
    neurons.push((-h.left_slope, -1.0, bp[0]));
    neurons.push((first_right, 1.0, -bp[0]));
    for j in 1..bp.len() {
        let before = slopes[j - 1];
        let after = slopes.get(j).copied().unwrap_or(h.right_slope);
        neurons.push((after - before, 1.0, -bp[j]));
    }
    neurons.retain(|&(u, _, _)| u != 0.0);
    ShallowReluNet {
        neurons,
        offset: h.values[0],
    }
}
