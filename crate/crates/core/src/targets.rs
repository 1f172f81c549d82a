//! Benchmark target functions and dataset sampling on [-1, 1]^d.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::Prng;

/// Number of bumps on each side of the origin in `s31.f1`.
const BUMPS: i32 = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    /// Smooth oscillatory sum of 73 signed bumps with a decaying envelope.
    S31F1,
    /// Non-smooth, oscillating in `120x^2`.
    S31F2,
    /// Non-smooth, oscillating in `32x`.
    S31F3,
    /// 1-D high-frequency mix of sines and a sawtooth.
    S32F1,
    /// 2-D sum of sine-times-|cosine| products.
    S32F2,
    /// 3-D sum of sine-times-|cosine| products.
    S32F3,
    /// The compactly supported bump g with g(0) = 1.
    BumpG,
    /// 1 / (1 + 100 x^2).
    Runge100,
}

impl Target {
    pub const ALL: [Target; 8] = [
        Target::S31F1,
        Target::S31F2,
        Target::S31F3,
        Target::S32F1,
        Target::S32F2,
        Target::S32F3,
        Target::BumpG,
        Target::Runge100,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::S31F1 => "s31.f1",
            Self::S31F2 => "s31.f2",
            Self::S31F3 => "s31.f3",
            Self::S32F1 => "s32.f1",
            Self::S32F2 => "s32.f2",
            Self::S32F3 => "s32.f3",
            Self::BumpG => "bump.g",
            Self::Runge100 => "runge100",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::S32F2 => 2,
            Self::S32F3 => 3,
            _ => 1,
        }
    }

    /// Whether closed-form first and second derivatives are available.
    pub fn has_derivatives(&self) -> bool {
        matches!(self, Self::S31F1 | Self::BumpG | Self::Runge100)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape(format!(
                "{} takes {} inputs, got {}",
                self.name(),
                self.dim(),
                x.len()
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("target input {v}")));
        }
        Ok(self.eval_unchecked(x))
    }

    pub fn eval_unchecked(&self, x: &[f64]) -> f64 {
        match self {
            Self::S31F1 => s31_f1_jet(x[0]).0,
            Self::S31F2 => {
                let t = 120.0 * x[0] * x[0];
                envelope_31(x[0]) * square_wave(t).powi(2)
            }
            Self::S31F3 => envelope_31(x[0]) * square_wave(32.0 * x[0]).powi(2),
            Self::S32F1 => {
                let x = x[0];
                let x4 = x.powi(4);
                0.6 * (200.0 * PI * x).sin()
                    + 0.8 * (160.0 * PI * x * x).cos()
                    + (1.0 + 8.0 * x4 * x4) / (1.0 + 10.0 * x4) * square_wave(180.0 * x).abs()
            }
            Self::S32F2 => sin_abs_cos_sum(x, &A2, &B2, &C2, &D2),
            Self::S32F3 => sin_abs_cos_sum(x, &A3, &B3, &C3, &D3),
            Self::BumpG => bump_jet(x[0]).0,
            Self::Runge100 => 1.0 / (1.0 + 100.0 * x[0] * x[0]),
        }
    }

    /// First (`order = 1`) or second (`order = 2`) derivative in closed form.
    pub fn deriv(&self, x: f64, order: u8) -> Result<f64> {
        if !(1..=2).contains(&order) {
            return Err(Error::Argument(format!(
                "derivative order must be 1 or 2, got {order}"
            )));
        }
        if !x.is_finite() {
            return Err(Error::Numeric(format!("target input {x}")));
        }
        let jet = match self {
            Self::S31F1 => s31_f1_jet(x),
            Self::BumpG => bump_jet(x),
            Self::Runge100 => {
                let q = 1.0 + 100.0 * x * x;
                (
                    1.0 / q,
                    -200.0 * x / (q * q),
                    (60000.0 * x * x - 200.0) / (q * q * q),
                )
            }
            _ => {
                return Err(Error::Unsupported(format!(
                    "{} has no closed-form derivative",
                    self.name()
                )))
            }
        };
        Ok(if order == 1 { jet.1 } else { jet.2 })
    }
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Target {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::Lookup(s.to_string()))
    }
}

impl Serialize for Target {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Target {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Evaluates a target by name.
pub fn target_eval(name: &str, x: &[f64]) -> Result<f64> {
    name.parse::<Target>()?.eval(x)
}

/// Closed-form derivative of a smooth 1-D target by name.
pub fn analytic_deriv(name: &str, x: f64, order: u8) -> Result<f64> {
    name.parse::<Target>()?.deriv(x, order)
}

/// `t - 2 floor((t + 1) / 2)`: a unit sawtooth with zeros at even integers.
fn square_wave(t: f64) -> f64 {
    t - 2.0 * ((t + 1.0) / 2.0).floor()
}

fn envelope_31(x: f64) -> f64 {
    let x2 = x * x;
    let x6 = x2 * x2 * x2;
    (1.0 + 6.0 * x6 * x2) / (1.0 + 8.0 * x6)
}

/// g(t) = g0(1 + t) g0(1 - t) / g0(1)^2 with g0(s) = exp(-1/s^2) for s > 0,
/// returned with its first two derivatives.
fn bump_jet(t: f64) -> (f64, f64, f64) {
    if t <= -1.0 || t >= 1.0 {
        return (0.0, 0.0, 0.0);
    }
    let p = 1.0 / (1.0 + t);
    let m = 1.0 / (1.0 - t);
    let q = 2.0 - p * p - m * m;
    if q < -745.0 {
        return (0.0, 0.0, 0.0);
    }
    let e = q.exp();
    let q1 = 2.0 * p.powi(3) - 2.0 * m.powi(3);
    let q2 = -6.0 * p.powi(4) - 6.0 * m.powi(4);
    (e, q1 * e, (q2 + q1 * q1) * e)
}

fn s31_f1_jet(x: f64) -> (f64, f64, f64) {
    let scale = (2 * BUMPS + 1) as f64;
    let spacing = (BUMPS + 1) as f64;
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for i in -BUMPS..=BUMPS {
        let t = scale * (x - i as f64 / spacing);
        if t.abs() >= 1.0 {
            continue;
        }
        let sign = if i.rem_euclid(3) == 1 { -1.0 } else { 1.0 };
        let weight = sign * (i.abs() + BUMPS) as f64 / BUMPS as f64;
        let (g, g1, g2) = bump_jet(t);
        s0 += weight * g;
        s1 += weight * scale * g1;
        s2 += weight * scale * scale * g2;
    }
    let q = 1.0 + 2.0 * x * x;
    let r0 = 1.0 / q;
    let r1 = -4.0 * x / (q * q);
    let r2 = (24.0 * x * x - 4.0) / (q * q * q);
    (
        r0 * s0,
        r1 * s0 + r0 * s1,
        r2 * s0 + 2.0 * r1 * s1 + r0 * s2,
    )
}

const A2: [[f64; 2]; 2] = [[0.3, 0.2], [0.2, 0.3]];
const B2: [f64; 2] = [12.0 * PI, 8.0 * PI];
const C2: [[f64; 2]; 2] = [[4.0 * PI, 18.0 * PI], [16.0 * PI, 10.0 * PI]];
const D2: [[f64; 2]; 2] = [[14.0 * PI, 12.0 * PI], [18.0 * PI, 10.0 * PI]];

const A3: [[f64; 3]; 3] = [[0.3, 0.1, 0.4], [0.2, 0.3, 0.1], [0.2, 0.1, 0.3]];
const B3: [f64; 3] = [PI, 4.0 * PI, 3.0 * PI];
const C3: [[f64; 3]; 3] = [
    [2.0 * PI, PI, 3.0 * PI],
    [2.0 * PI, 3.0 * PI, 2.0 * PI],
    [3.0 * PI, PI, PI],
];
const D3: [[f64; 3]; 3] = [
    [2.0 * PI, 3.0 * PI, PI],
    [PI, 3.0 * PI, 2.0 * PI],
    [PI, 2.0 * PI, 3.0 * PI],
];

/// sum_{i,j} a_ij sin(b_i x_i + c_ij x_i x_j) |cos(b_j x_j + d_ij x_i^2)|
fn sin_abs_cos_sum<const D: usize>(
    x: &[f64],
    a: &[[f64; D]; D],
    b: &[f64; D],
    c: &[[f64; D]; D],
    d: &[[f64; D]; D],
) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        for j in 0..D {
            s += a[i][j]
                * (b[i] * x[i] + c[i][j] * x[i] * x[j]).sin()
                * (b[j] * x[j] + d[i][j] * x[i] * x[i]).cos().abs();
        }
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleMode {
    /// Tensor-product equispaced lattice including endpoints; `n` points per axis.
    Grid,
    /// `n` independent uniform points.
    UniformRandom,
}

impl FromStr for SampleMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Self::Grid),
            "uniform-random" | "random" => Ok(Self::UniformRandom),
            _ => Err(Error::Parse(format!("unknown sampling mode {s:?}"))),
        }
    }
}

/// Points in [-1, 1]^dim, one per row.
pub fn sample_points(dim: usize, n: usize, mode: SampleMode, seed: u64) -> Result<Matrix> {
    if n == 0 || dim == 0 {
        return Err(Error::Argument(
            "sample size and dimension must be >= 1".into(),
        ));
    }
    match mode {
        SampleMode::UniformRandom => {
            let mut rng = Prng::new(seed);
            let data = (0..n * dim)
                .map(|_| rng.uniform(-1.0, 1.0))
                .collect::<Result<Vec<_>>>()?;
            Matrix::from_vec(n, dim, data)
        }
        SampleMode::Grid => {
            let total = n
                .checked_pow(dim as u32)
                .ok_or_else(|| Error::Argument("grid too large".into()))?;
            let axis: Vec<f64> = if n == 1 {
                vec![0.0]
            } else {
                (0..n)
                    .map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64)
                    .collect()
            };
            let mut data = Vec::with_capacity(total * dim);
            for flat in 0..total {
                let mut rem = flat;
                let mut row = vec![0.0; dim];
                for k in (0..dim).rev() {
                    row[k] = axis[rem % n];
                    rem /= n;
                }
                data.extend_from_slice(&row);
            }
            Matrix::from_vec(total, dim, data)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Matrix,
}

impl Dataset {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::Shape(format!(
                "{} inputs vs {} outputs",
                x.rows(),
                y.rows()
            )));
        }
        Ok(Self { x, y })
    }

    /// Evaluates `target` at every row of `x`.
    pub fn from_target(target: Target, x: Matrix) -> Result<Self> {
        if x.cols() != target.dim() {
            return Err(Error::Shape(format!(
                "{} is {}-D, points are {}-D",
                target,
                target.dim(),
                x.cols()
            )));
        }
        let y = (0..x.rows())
            .map(|r| target.eval(x.row(r)))
            .collect::<Result<Vec<_>>>()?;
        let n = x.rows();
        Self::new(x, Matrix::from_vec(n, 1, y)?)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Rows selected by `idx`, in that order.
    pub fn gather(&self, idx: &[usize]) -> Dataset {
        let pick = |m: &Matrix| {
            let mut d = Vec::with_capacity(idx.len() * m.cols());
            for &i in idx {
                d.extend_from_slice(m.row(i));
            }
            Matrix::from_vec(idx.len(), m.cols(), d).expect("rows come from a valid matrix")
        };
        Dataset {
            x: pick(&self.x),
            y: pick(&self.y),
        }
    }

    /// CSV with header `x1,...,xd,y`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (1..=self.dim())
            .map(|i| format!("x{i}"))
            .chain(["y".to_string()])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for r in 0..self.len() {
            let cells: Vec<String> = self
                .x
                .row(r)
                .iter()
                .chain(self.y.row(r))
                .map(|v| crate::fmt_float(*v))
                .collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Samples `target` on [-1, 1]^d. Grid mode takes `n` points per axis.
pub fn sample(target: Target, n: usize, mode: SampleMode, seed: u64) -> Result<Dataset> {
    Dataset::from_target(target, sample_points(target.dim(), n, mode, seed)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd1(t: Target, x: f64, h: f64) -> f64 {
        (t.eval(&[x + h]).unwrap() - t.eval(&[x - h]).unwrap()) / (2.0 * h)
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
    }

    #[test]
    fn point_values() {
        assert_eq!(target_eval("bump.g", &[0.0]).unwrap(), 1.0);
        assert_eq!(target_eval("bump.g", &[1.0]).unwrap(), 0.0);
        assert_eq!(target_eval("bump.g", &[-1.0]).unwrap(), 0.0);
        assert_eq!(target_eval("s31.f2", &[0.0]).unwrap(), 0.0);
        assert_eq!(target_eval("s31.f1", &[0.0]).unwrap(), 1.0);
        assert!((target_eval("s32.f1", &[0.0]).unwrap() - 0.8).abs() < 1e-15);
        assert_eq!(target_eval("runge100", &[0.1]).unwrap(), 0.5);
        assert!(matches!(
            target_eval("s99.f1", &[0.0]),
            Err(Error::Lookup(_))
        ));
        assert!(matches!(
            target_eval("s32.f2", &[0.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn s32_f2_direct_substitution() {
        let x = [0.5, 0.0];
        let mut want = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                want += A2[i][j]
                    * (B2[i] * x[i] + C2[i][j] * x[i] * x[j]).sin()
                    * (B2[j] * x[j] + D2[i][j] * x[i] * x[i]).cos().abs();
            }
        }
        assert_eq!(Target::S32F2.eval(&x).unwrap(), want);
        // b_1 = 12 pi and c_11 = 4 pi: 0.3 sin(6pi + pi) |cos(6pi + 14pi/4)| vanishes.
        let one_term = 0.3 * (12.0 * PI * 0.5 + 4.0 * PI * 0.25).sin();
        assert!(one_term.abs() < 1e-14);
    }

    #[test]
    fn derivatives_at_origin() {
        let t = Target::S31F1;
        let d1 = t.deriv(0.0, 1).unwrap();
        let fd = fd1(t, 0.0, 1e-6);
        assert!((d1 - fd).abs() <= 1e-5 * d1.abs().max(1e-3), "{d1} vs {fd}");
        let h = 1e-4;
        let f = |x: f64| t.eval(&[x]).unwrap();
        let d2 = t.deriv(0.0, 2).unwrap();
        let fd2 = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
        assert!(rel(d2, fd2) < 1e-4, "{d2} vs {fd2}");
        // Outside every bump support the function and its derivatives vanish.
        assert_eq!(t.deriv(0.9999, 1).unwrap(), 0.0);
        assert_eq!(t.deriv(0.9999, 2).unwrap(), 0.0);
        assert!(matches!(
            Target::S31F2.deriv(0.1, 1),
            Err(Error::Unsupported(_))
        ));
        assert!(t.deriv(0.1, 3).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = Prng::new(5);
        for t in [Target::S31F1, Target::BumpG, Target::Runge100] {
            let f = |x: f64| t.eval(&[x]).unwrap();
            for _ in 0..1000 {
                let x = rng.uniform(-1.0, 1.0).unwrap();
                let d1 = t.deriv(x, 1).unwrap();
                let d2 = t.deriv(x, 2).unwrap();
                // Step sizes balance truncation against rounding for the
                // fastest bump scale (73).
                let h1 = 1e-6;
                let c1 = (f(x + h1) - f(x - h1)) / (2.0 * h1);
                let h2 = 1e-6;
                let c2 = (t.deriv(x + h2, 1).unwrap() - t.deriv(x - h2, 1).unwrap()) / (2.0 * h2);
                let s1 = d1.abs().max(1e-2 * scale_of(t));
                let s2 = d2.abs().max(1e-2 * scale_of(t) * 73.0);
                assert!((d1 - c1).abs() < 1e-5 * s1, "{t} d1 at {x}: {d1} vs {c1}");
                assert!((d2 - c2).abs() < 1e-4 * s2, "{t} d2 at {x}: {d2} vs {c2}");
            }
        }
    }

    /// Typical first-derivative magnitude, used as an absolute floor near zeros.
    fn scale_of(t: Target) -> f64 {
        match t {
            Target::S31F1 => 73.0,
            Target::BumpG => 1.0,
            _ => 10.0,
        }
    }

    #[test]
    fn grid_sampling() {
        let x = sample_points(1, 5, SampleMode::Grid, 0).unwrap();
        assert_eq!(x.data(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        let g = sample_points(2, 3, SampleMode::Grid, 0).unwrap();
        assert_eq!(g.rows(), 9);
        assert_eq!(g.row(0), &[-1.0, -1.0]);
        assert_eq!(g.row(8), &[1.0, 1.0]);
        assert_eq!(g.row(2), &[-1.0, 1.0]);
        assert_eq!(g.row(6), &[1.0, -1.0]);
    }

    #[test]
    fn random_sampling_is_reproducible() {
        let a = sample(Target::S32F1, 10_000, SampleMode::UniformRandom, 3).unwrap();
        let b = sample(Target::S32F1, 10_000, SampleMode::UniformRandom, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.x.data().iter().all(|v| (-1.0..1.0).contains(v)));
        assert!(sample(Target::S32F1, 0, SampleMode::Grid, 0).is_err());
    }

    #[test]
    fn all_targets_finite_and_signed() {
        let mut rng = Prng::new(9);
        for t in Target::ALL {
            let d = sample(
                t,
                100_000 / t.dim(),
                SampleMode::UniformRandom,
                rng.next_u64(),
            )
            .unwrap();
            assert!(d.y.data().iter().all(|v| v.is_finite()), "{t}");
            if matches!(t, Target::S31F2 | Target::S31F3) {
                assert!(d.y.data().iter().all(|v| *v >= 0.0), "{t}");
            }
        }
    }

    #[test]
    fn csv_export() {
        let d = sample(Target::S32F2, 2, SampleMode::Grid, 0).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "x1,x2,y");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("-1.0,-1.0,"));
    }

    #[test]
    fn names_round_trip() {
        for t in Target::ALL {
            assert_eq!(t.name().parse::<Target>().unwrap(), t);
            let js = serde_json::to_string(&t).unwrap();
            assert_eq!(serde_json::from_str::<Target>(&js).unwrap(), t);
        }
    }

    proptest! {
        #[test]
        fn s31_f1_vanishes_off_support(x in -1.0f64..1.0) {
            let gap = (-BUMPS..=BUMPS).map(|i| (x - i as f64 / 37.0).abs()).fold(f64::INFINITY, f64::min);
            if gap > 1.0 / 73.0 {
                prop_assert_eq!(Target::S31F1.eval(&[x]).unwrap(), 0.0);
            }
        }
    }
}
