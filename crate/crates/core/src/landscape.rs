//! Two-parameter loss surfaces: the closed-form toy landscapes and slices
//! through the training loss of an arbitrary model.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{Model, ParamCoord};
use crate::quadrature::{integrate, QuadratureRule};
use crate::rng::Prng;
use crate::targets::{Dataset, Target};

pub const DEFAULT_RANGE: (f64, f64) = (-3.0, 3.0);
pub const DEFAULT_RESOLUTION: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LandscapeCase {
    /// `sin(w1·x + w2)`
    L1,
    /// `sin(w1·x) + sin(w2·x)`
    L2,
    /// `sin(w2·sin(w1·x))`
    L3,
}

impl LandscapeCase {
    fn model(self, x: f64, (w1, w2): (f64, f64)) -> f64 {
        match self {
            Self::L1 => (w1 * x + w2).sin(),
            Self::L2 => (w1 * x).sin() + (w2 * x).sin(),
            Self::L3 => (w2 * (w1 * x).sin()).sin(),
        }
    }
}

impl fmt::Display for LandscapeCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L1 => "L1",
            Self::L2 => "L2",
            Self::L3 => "L3",
        })
    }
}

impl FromStr for LandscapeCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "L1" => Ok(Self::L1),
            "L2" => Ok(Self::L2),
            "L3" => Ok(Self::L3),
            _ => Err(Error::Lookup(s.to_string())),
        }
    }
}

/// `∫_{−π}^{π} (g(x; w) − g(x; w*))² dx` by the default quadrature rule.
pub fn analytic_landscape(case: LandscapeCase, w: (f64, f64), wstar: (f64, f64)) -> Result<f64> {
    if ![w.0, w.1, wstar.0, wstar.1].iter().all(|v| v.is_finite()) {
        return Err(Error::Numeric("landscape weights must be finite".into()));
    }
    let pi = std::f64::consts::PI;
    integrate(
        |x| {
            let d = case.model(x, w) - case.model(x, wstar);
            d * d
        },
        -pi,
        pi,
        QuadratureRule::default(),
    )
}

/// Runge target `1/(1 + 100x²)` on the quadrature nodes of `[−π, π]`; the
/// population loss stand-in for model scans.
pub fn default_scan_dataset() -> Result<Dataset> {
    let pi = std::f64::consts::PI;
    let pts = QuadratureRule::default().points(-pi, pi)?;
    let x = Matrix::from_vec(pts.len(), 1, pts.iter().map(|p| p.0).collect())?;
    Dataset::from_target(Target::Runge100, x)
}

/// Loss values on a `resolution × resolution` grid, row-major in `w1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub labels: [String; 2],
    pub ranges: [(f64, f64); 2],
    pub resolution: usize,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    pub values: Vec<f64>,
    /// Checksum of the scanned model, absent for analytic grids.
    pub model_checksum: Option<u64>,
}

/// `resolution` evenly spaced points; a single point sits at the midpoint.
pub fn axis((lo, hi): (f64, f64), resolution: usize) -> Result<Vec<f64>> {
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Numeric("axis range must be finite".into()));
    }
    match resolution {
        0 => Err(Error::Argument("resolution must be at least 1".into())),
        1 if lo <= hi => Ok(vec![0.5 * (lo + hi)]),
        _ if lo < hi => {
            let step = (hi - lo) / (resolution - 1) as f64;
            Ok((0..resolution)
                .map(|i| {
                    if i + 1 == resolution {
                        hi
                    } else {
                        lo + step * i as f64
                    }
                })
                .collect())
        }
        _ => Err(Error::Range { lo, hi }),
    }
}

impl LandscapeGrid {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.resolution + j]
    }

    pub fn non_finite(&self) -> usize {
        self.values.iter().filter(|v| !v.is_finite()).count()
    }

    pub fn min(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `w1,w2,loss`, one row per grid point.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "w1,w2,loss")?;
        for (i, &a) in self.axis1.iter().enumerate() {
            for (j, &b) in self.axis2.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{}",
                    crate::fmt_float(a),
                    crate::fmt_float(b),
                    crate::fmt_float(self.get(i, j))
                )?;
            }
        }
        Ok(())
    }

    /// Sidecar metadata: coordinates, ranges, resolution and model checksum.
    pub fn sidecar(&self) -> serde_json::Value {
        serde_json::json!({
            "params": self.labels,
            "ranges": self.ranges,
            "resolution": self.resolution,
            "model_checksum": self.model_checksum.map(|c| format!("{c:016x}")),
            "non_finite": self.non_finite(),
            "min_loss": if self.min().is_finite() { Some(self.min()) } else { None },
            "max_loss": if self.max().is_finite() { Some(self.max()) } else { None },
        })
    }
}

pub fn analytic_grid(
    case: LandscapeCase,
    wstar: (f64, f64),
    ranges: [(f64, f64); 2],
    resolution: usize,
) -> Result<LandscapeGrid> {
    let axis1 = axis(ranges[0], resolution)?;
    let axis2 = axis(ranges[1], resolution)?;
    let rows: Vec<Vec<f64>> = axis1
        .par_iter()
        .map(|&a| {
            axis2
                .iter()
                .map(|&b| analytic_landscape(case, (a, b), wstar))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(LandscapeGrid {
        labels: ["w1".into(), "w2".into()],
        ranges,
        resolution,
        axis1,
        axis2,
        values: rows.concat(),
        model_checksum: None,
    })
}

/// Full-dataset MSE with `p1`, `p2` overridden on a grid.
///
/// Each worker scans a private copy; `model` itself is never written.
pub fn scan_pair(
    model: &Model,
    data: &Dataset,
    p1: ParamCoord,
    p2: ParamCoord,
    ranges: [(f64, f64); 2],
    resolution: usize,
) -> Result<LandscapeGrid> {
    model.get_param(&p1)?;
    model.get_param(&p2)?;
    if p1 == p2 {
        return Err(Error::Argument(format!("both scan coordinates are {p1}")));
    }
    let axis1 = axis(ranges[0], resolution)?;
    let axis2 = axis(ranges[1], resolution)?;
    let rows: Vec<Vec<f64>> = axis1
        .par_iter()
        .map(|&a| {
            let mut m = model.clone();
            m.set_param(&p1, a)?;
            axis2
                .iter()
                .map(|&b| {
                    m.set_param(&p2, b)?;
                    // A non-finite loss is recorded, not treated as an error.
                    Ok(m.mse(&data.x, &data.y).unwrap_or(f64::NAN))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(LandscapeGrid {
        labels: [p1.to_string(), p2.to_string()],
        ranges,
        resolution,
        axis1,
        axis2,
        values: rows.concat(),
        model_checksum: Some(model.checksum()),
    })
}

/// Two distinct coordinates drawn uniformly, optionally only trainable ones.
pub fn pick_random_coords(
    model: &Model,
    seed: u64,
    trainable_only: bool,
) -> Result<(ParamCoord, ParamCoord)> {
    let pool: Vec<ParamCoord> = model
        .param_coords()
        .into_iter()
        .filter(|p| !trainable_only || model.is_trainable(p))
        .collect();
    if pool.len() < 2 {
        return Err(Error::Argument(
            "model has fewer than two eligible parameters".into(),
        ));
    }
    let mut rng = Prng::new(seed);
    let i = rng.index(pool.len());
    let mut j = rng.index(pool.len() - 1);
    if j >= i {
        j += 1;
    }
    Ok((pool[i], pool[j]))
}
