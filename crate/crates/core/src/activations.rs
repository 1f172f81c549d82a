//! Pointwise activations with first and second derivatives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActivationKind {
    Relu,
    Gelu,
    Elu,
    Sigmoid,
    Tanh,
    Sine,
    Cosine,
    /// sin(max(x, s))
    SinTU(f64),
}

impl ActivationKind {
    pub fn sintu(s: f64) -> Result<Self> {
        if s.is_finite() {
            Ok(Self::SinTU(s))
        } else {
            Err(Error::Argument(format!(
                "sintu threshold must be finite, got {s}"
            )))
        }
    }

    /// Location of the derivative discontinuity, if any.
    pub fn kink(&self) -> Option<f64> {
        match *self {
            Self::Relu => Some(0.0),
            Self::SinTU(s) => Some(s),
            _ => None,
        }
    }

    /// Value, first and second derivative at `x`.
    pub fn eval(&self, x: f64) -> Result<(f64, f64, f64)> {
        if !x.is_finite() {
            return Err(Error::Numeric(format!("activation input is {x}")));
        }
        Ok(self.eval_unchecked(x))
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Self::Relu => x.max(0.0),
            Self::Gelu => 0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2)),
            Self::Elu => {
                if x >= 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Self::Sigmoid => sigmoid(x),
            Self::Tanh => x.tanh(),
            Self::Sine => x.sin(),
            Self::Cosine => x.cos(),
            Self::SinTU(s) => x.max(s).sin(),
        }
    }

    /// (value, first derivative).
    #[inline]
    pub fn value_d1(&self, x: f64) -> (f64, f64) {
        match *self {
            Self::Relu => {
                if x >= 0.0 {
                    (x, 1.0)
                } else {
                    (0.0, 0.0)
                }
            }
            Self::Sine => {
                let (s, c) = x.sin_cos();
                (s, c)
            }
            Self::Cosine => {
                let (s, c) = x.sin_cos();
                (c, -s)
            }
            Self::SinTU(t) => {
                if x >= t {
                    let (s, c) = x.sin_cos();
                    (s, c)
                } else {
                    (t.sin(), 0.0)
                }
            }
            _ => {
                let (v, d, _) = self.eval_unchecked(x);
                (v, d)
            }
        }
    }

    #[inline]
    pub fn eval_unchecked(&self, x: f64) -> (f64, f64, f64) {
        match *self {
            Self::Relu => {
                if x >= 0.0 {
                    (x, 1.0, 0.0)
                } else {
                    (0.0, 0.0, 0.0)
                }
            }
            Self::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * INV_SQRT_2));
                let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
                (x * cdf, cdf + x * pdf, pdf * (2.0 - x * x))
            }
            Self::Elu => {
                if x >= 0.0 {
                    (x, 1.0, 0.0)
                } else {
                    let e = x.exp();
                    (x.exp_m1(), e, e)
                }
            }
            Self::Sigmoid => {
                let s = sigmoid(x);
                let d = s * (1.0 - s);
                (s, d, d * (1.0 - 2.0 * s))
            }
            Self::Tanh => {
                let t = x.tanh();
                let d = 1.0 - t * t;
                (t, d, -2.0 * t * d)
            }
            Self::Sine => {
                let (s, c) = x.sin_cos();
                (s, c, -s)
            }
            Self::Cosine => {
                let (s, c) = x.sin_cos();
                (c, -s, -c)
            }
            Self::SinTU(t) => {
                if x >= t {
                    let (s, c) = x.sin_cos();
                    (s, c, -s)
                } else {
                    (t.sin(), 0.0, 0.0)
                }
            }
        }
    }

    pub const ALL_TAGS: [&'static str; 8] = [
        "relu", "gelu", "elu", "sigmoid", "tanh", "sine", "cosine", "sintu",
    ];
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Free-function form of [`ActivationKind::eval`].
pub fn act_eval(kind: ActivationKind, x: f64) -> Result<(f64, f64, f64)> {
    kind.eval(x)
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Relu => f.write_str("relu"),
            Self::Gelu => f.write_str("gelu"),
            Self::Elu => f.write_str("elu"),
            Self::Sigmoid => f.write_str("sigmoid"),
            Self::Tanh => f.write_str("tanh"),
            Self::Sine => f.write_str("sine"),
            Self::Cosine => f.write_str("cosine"),
            Self::SinTU(s) => write!(f, "sintu:{s:?}"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let tag = s.trim();
        Ok(match tag {
            "relu" => Self::Relu,
            "gelu" => Self::Gelu,
            "elu" => Self::Elu,
            "sigmoid" => Self::Sigmoid,
            "tanh" => Self::Tanh,
            "sine" => Self::Sine,
            "cosine" => Self::Cosine,
            _ => match tag.strip_prefix("sintu:") {
                Some(rest) => {
                    let s: f64 = rest
                        .trim()
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad sintu threshold {rest:?}")))?;
                    Self::sintu(s).map_err(|e| Error::Parse(e.to_string()))?
                }
                None => return Err(Error::Parse(format!("unknown activation {tag:?}"))),
            },
        })
    }
}

impl Serialize for ActivationKind {
    fn serialize<S: Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        ser.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ActivationKind {
    fn deserialize<D: Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(de)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    const SMOOTH: [ActivationKind; 6] = [
        ActivationKind::Gelu,
        ActivationKind::Elu,
        ActivationKind::Sigmoid,
        ActivationKind::Tanh,
        ActivationKind::Sine,
        ActivationKind::Cosine,
    ];

    #[test]
    fn sine_at_half_pi() {
        let (v, d1, d2) = act_eval(ActivationKind::Sine, FRAC_PI_2).unwrap();
        assert_eq!(v, 1.0);
        assert!(d1.abs() < 1e-16);
        assert_eq!(d2, -1.0);
    }

    #[test]
    fn flat_branches() {
        assert_eq!(
            act_eval(ActivationKind::SinTU(0.0), -1.0).unwrap(),
            (0.0, 0.0, 0.0)
        );
        assert_eq!(
            act_eval(ActivationKind::Relu, -2.0).unwrap(),
            (0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn right_derivative_at_kinks() {
        assert_eq!(
            act_eval(ActivationKind::Relu, 0.0).unwrap(),
            (0.0, 1.0, 0.0)
        );
        let s = -PI;
        let (v, d1, _) = act_eval(ActivationKind::SinTU(s), s).unwrap();
        assert_eq!(v, s.sin());
        assert_eq!(d1, s.cos());
    }

    #[test]
    fn gelu_at_zero() {
        let (v, d1, d2) = act_eval(ActivationKind::Gelu, 0.0).unwrap();
        assert_eq!(v, 0.0);
        assert_eq!(d1, 0.5);
        let h = 1e-4;
        let g = |x| ActivationKind::Gelu.value(x);
        let fd = (g(h) - 2.0 * g(0.0) + g(-h)) / (h * h);
        assert!((d2 - fd).abs() < 1e-6, "{d2} vs {fd}");
        assert!((d2 - 2.0 * INV_SQRT_2PI).abs() < 1e-15);
    }

    #[test]
    fn non_finite_input_is_rejected() {
        assert!(matches!(
            act_eval(ActivationKind::Tanh, f64::NAN),
            Err(Error::Numeric(_))
        ));
        assert!(act_eval(ActivationKind::Relu, f64::INFINITY).is_err());
    }

    #[test]
    fn parse_round_trip() {
        for tag in ["relu", "gelu", "elu", "sigmoid", "tanh", "sine", "cosine"] {
            let k: ActivationKind = tag.parse().unwrap();
            assert_eq!(k.to_string(), tag);
        }
        let k: ActivationKind = "sintu:-3.14159265358979".parse().unwrap();
        assert_eq!(k, ActivationKind::SinTU(-3.14159265358979));
        assert_eq!(k.to_string().parse::<ActivationKind>().unwrap(), k);
        assert!("sintu:abc".parse::<ActivationKind>().is_err());
        assert!("sintu:inf".parse::<ActivationKind>().is_err());
        assert!("swish".parse::<ActivationKind>().is_err());
        let js = serde_json::to_string(&ActivationKind::SinTU(0.5)).unwrap();
        assert_eq!(js, "\"sintu:0.5\"");
        assert_eq!(
            serde_json::from_str::<ActivationKind>(&js).unwrap(),
            ActivationKind::SinTU(0.5)
        );
    }

    #[test]
    fn value_d1_agrees_with_eval() {
        let kinds = [
            ActivationKind::Relu,
            ActivationKind::SinTU(-1.0),
            ActivationKind::Gelu,
            ActivationKind::Sine,
            ActivationKind::Cosine,
        ];
        for k in kinds {
            for i in -20..=20 {
                let x = i as f64 * 0.37;
                let (v, d, _) = k.eval_unchecked(x);
                assert_eq!(k.value_d1(x), (v, d));
                assert_eq!(k.value(x), v);
            }
        }
    }

    #[test]
    fn first_derivative_matches_finite_difference() {
        let mut rng = crate::rng::Prng::new(11);
        let h = 1e-6;
        for k in SMOOTH {
            for _ in 0..1000 {
                let x = rng.uniform(-10.0, 10.0).unwrap();
                let fd = (k.value(x + h) - k.value(x - h)) / (2.0 * h);
                let (_, d1, _) = k.eval(x).unwrap();
                assert!((d1 - fd).abs() < 1e-6, "{k} at {x}: {d1} vs {fd}");
            }
        }
        for k in [
            ActivationKind::Relu,
            ActivationKind::SinTU(-PI),
            ActivationKind::SinTU(0.7),
        ] {
            let kink = k.kink().unwrap();
            for _ in 0..1000 {
                let x = rng.uniform(-10.0, 10.0).unwrap();
                if (x - kink).abs() <= 2.0 * h {
                    continue;
                }
                let fd = (k.value(x + h) - k.value(x - h)) / (2.0 * h);
                let (_, d1, _) = k.eval(x).unwrap();
                assert!((d1 - fd).abs() < 1e-6, "{k} at {x}");
            }
        }
    }

    #[test]
    fn second_derivative_matches_finite_difference() {
        let mut rng = crate::rng::Prng::new(12);
        let h = 1e-5;
        for k in SMOOTH {
            for _ in 0..200 {
                let x = rng.uniform(-6.0, 6.0).unwrap();
                let (_, dp, _) = k.eval(x + h).unwrap();
                let (_, dm, _) = k.eval(x - h).unwrap();
                let fd = (dp - dm) / (2.0 * h);
                let (_, _, d2) = k.eval(x).unwrap();
                assert!((d2 - fd).abs() < 1e-6, "{k} at {x}: {d2} vs {fd}");
            }
        }
    }

    proptest! {
        #[test]
        fn sintu_matches_sine_above_threshold(s in -10.0f64..10.0, dx in 0.0f64..20.0) {
            let x = s + dx;
            prop_assert_eq!(ActivationKind::SinTU(s).eval(x).unwrap(), ActivationKind::Sine.eval(x).unwrap());
        }

        #[test]
        fn sintu_constant_below_threshold(s in -10.0f64..10.0, dx in 1e-9f64..20.0) {
            let (v, d1, d2) = ActivationKind::SinTU(s).eval(s - dx).unwrap();
            prop_assert_eq!(v, s.sin());
            prop_assert_eq!(d1, 0.0);
            prop_assert_eq!(d2, 0.0);
        }

        #[test]
        fn periodic_activations_are_bounded(x in -1e6f64..1e6, s in -10.0f64..10.0) {
            prop_assert!(ActivationKind::Sine.value(x).abs() <= 1.0);
            prop_assert!(ActivationKind::Cosine.value(x).abs() <= 1.0);
            prop_assert!(ActivationKind::SinTU(s).value(x).abs() <= 1.0);
        }
    }
}
