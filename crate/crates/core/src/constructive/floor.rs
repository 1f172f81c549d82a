use serde::{Deserialize, Serialize};

use super::cpwl::{cpwl_to_relu_net, CpwlFunction, ShallowReluNet};
use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{InitMode, LayerParams, Model, ModelSpec};

pub const DEFAULT_DELTA: f64 = 1e-3;

/// One level of the floor network. `h` reads the leading digit of `z` at
/// `scale`, `h_tilde` is the remainder `z − scale·h(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorLevel {
    pub scale: f64,
    pub h: ShallowReluNet,
    pub h_tilde: ShallowReluNet,
}

/// ReLU network equal to `⌊x⌋` on `⋃_{k<N^L} [k, k+1−δ]`.
///
/// The state is the pair `(z, acc)`: `z` starts at `x`, `acc` at 0. Level `ℓ`
/// peels off the base-`N` digit of `z` at scale `N^{L−ℓ−1}` and adds it to
/// `acc`. Inside the gaps `(k+1−δ, k+1)` the output is unspecified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloorNet {
    pub n: usize,
    pub l: usize,
    pub delta: f64,
    pub levels: Vec<FloorLevel>,
}

/// Staircase with height `k` on `[k, k+1−δ']` for `k < N`, flat outside
/// `[0, N)`, breakpoints scaled by `scale`. Each ramp ends at `k+1−δ'/2`
/// rather than `k+1`, which keeps integers off the kinks; on the kept set
/// the function is unchanged.
fn staircase(n: usize, delta_p: f64, scale: f64) -> Result<CpwlFunction> {
    if n == 1 {
        return CpwlFunction::affine(0.0, 0.0);
    }
    let mut bp = Vec::with_capacity(2 * (n - 1));
    let mut vals = Vec::with_capacity(2 * (n - 1));
    for k in 0..n - 1 {
        bp.push(scale * ((k + 1) as f64 - delta_p));
        vals.push(k as f64);
        bp.push(scale * ((k + 1) as f64 - 0.5 * delta_p));
        vals.push((k + 1) as f64);
    }
    CpwlFunction::new(bp, vals, 0.0, 0.0)
}

/// `z − scale·h(z)` on the same breakpoints.
fn remainder(h: &CpwlFunction, scale: f64) -> Result<CpwlFunction> {
    let vals = h
        .breakpoints
        .iter()
        .zip(&h.values)
        .map(|(&x, &y)| x - scale * y)
        .collect();
    CpwlFunction::new(h.breakpoints.clone(), vals, 1.0, 1.0)
}

pub fn build_floor_net(n: usize, l: usize, delta: f64) -> Result<FloorNet> {
    if n == 0 || l == 0 {
        return Err(Error::Argument(format!(
            "floor net needs N, L >= 1 (got N = {n}, L = {l})"
        )));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::Argument(format!(
            "delta must lie in (0, 1), got {delta}"
        )));
    }
    let nf = n as f64;
    let delta_p = delta / nf.powi(l as i32 - 1);
    let mut levels = Vec::with_capacity(l);
    for ell in 0..l {
        let scale = nf.powi((l - ell - 1) as i32);
        let h = staircase(n, delta_p, scale)?;
        let h_tilde = remainder(&h, scale)?;
        levels.push(FloorLevel {
            scale,
            h: cpwl_to_relu_net(&h),
            h_tilde: cpwl_to_relu_net(&h_tilde),
        });
    }
    Ok(FloorNet {
        n,
        l,
        delta,
        levels,
    })
}

impl FloorNet {
    pub fn eval(&self, x: f64) -> f64 {
        let mut z = x;
        let mut acc: f64 = 0.0;
        for lv in &self.levels {
            let digit = lv.h.eval(z);
            z = lv.h_tilde.eval(z);
            acc = acc.max(0.0) + lv.scale * digit;
        }
        acc
    }

    /// Number of integer cells, `N^L`.
    pub fn cells(&self) -> usize {
        self.n.pow(self.l as u32)
    }

    /// The kept intervals `[k, k+1−δ]`.
    pub fn kept_intervals(&self) -> Vec<(f64, f64)> {
        (0..self.cells())
            .map(|k| (k as f64, k as f64 + 1.0 - self.delta))
            .collect()
    }

    /// Hidden neurons per level: one carry for `acc` plus the two digit nets.
    pub fn width(&self) -> usize {
        self.levels
            .iter()
            .map(|lv| 1 + lv.h.width() + lv.h_tilde.width())
            .max()
            .unwrap_or(0)
    }

    /// (width, rank, depth) of the equivalent multi-component network.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.width(), 2, self.l)
    }

    /// The same function as a ReLU MMNN of width `4N−1`, rank 2, depth `L`,
    /// padded with zero neurons where a level needs fewer.
    pub fn to_model(&self) -> Result<Model> {
        let width = 4 * self.n - 1;
        let spec = ModelSpec::mmnn(width, 2, self.l, ActivationKind::Relu).with_dims(1, 1);
        let mut layers = Vec::with_capacity(self.l);
        for (ell, lv) in self.levels.iter().enumerate() {
            let din = if ell == 0 { 1 } else { 2 };
            let dout = if ell + 1 == self.l { 1 } else { 2 };
            let mut w = Matrix::zeros(width, din);
            let mut b = vec![0.0; width];
            let mut a = Matrix::zeros(dout, width);
            let mut c = vec![0.0; dout];
            // Hidden neuron 0 carries acc. The state vector is (z, acc).
            let acc_row = dout - 1;
            if ell > 0 {
                w.set(0, 1, 1.0);
                a.set(acc_row, 0, 1.0);
            }
            let mut j = 1;
            for &(u, v, wb) in &lv.h.neurons {
                w.set(j, 0, v);
                b[j] = wb;
                a.set(acc_row, j, lv.scale * u);
                j += 1;
            }
            c[acc_row] = lv.scale * lv.h.offset;
            if dout == 2 {
                for &(u, v, wb) in &lv.h_tilde.neurons {
                    w.set(j, 0, v);
                    b[j] = wb;
                    a.set(0, j, u);
                    j += 1;
                }
                c[0] = lv.h_tilde.offset;
            }
            layers.push(LayerParams::Mmnn {
                w,
                b,
                a,
                c,
                residual: false,
            });
        }
        Model::from_layers(spec, InitMode::Default, 0, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Prng;
    use proptest::prelude::*;

    fn max_floor_error(net: &FloorNet, samples: usize, seed: u64) -> f64 {
        let mut rng = Prng::new(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let k = rng.index(net.cells()) as f64;
            let x = k + rng.uniform(0.0, 1.0 - net.delta).unwrap();
            worst = worst.max((net.eval(x) - x.floor()).abs());
        }
        worst
    }

    #[test]
    fn contract_examples() {
        let net = build_floor_net(2, 3, 0.1).unwrap();
        assert!((net.eval(5.85) - 5.0).abs() < 1e-9);
        assert_eq!(net.eval(0.0), 0.0);
        assert!((net.eval(7.9) - 7.0).abs() < 1e-9);
    }

    #[test]
    fn dense_check_n3_l2() {
        let net = build_floor_net(3, 2, 0.05).unwrap();
        assert!(max_floor_error(&net, 10_000, 1) < 1e-9);
    }

    #[test]
    fn right_edge_of_each_kept_interval() {
        let net = build_floor_net(3, 3, 0.01).unwrap();
        for (lo, hi) in net.kept_intervals() {
            assert!((net.eval(lo) - lo).abs() < 1e-9);
            assert!((net.eval(hi) - lo).abs() < 1e-9, "at {hi}");
        }
    }

    #[test]
    fn dims_and_model_agree() {
        for (n, l) in [(1, 1), (1, 3), (2, 1), (2, 3), (3, 2), (4, 2)] {
            let net = build_floor_net(n, l, 0.1).unwrap();
            let (w, r, d) = net.dims();
            assert!(
                w <= 4 * n - 1 && r <= 3 && d == l,
                "(N, L) = ({n}, {l}) gave {:?}",
                net.dims()
            );
            let model = net.to_model().unwrap();
            let mut rng = Prng::new(5);
            for _ in 0..500 {
                let k = rng.index(net.cells()) as f64;
                let x = k + rng.uniform(0.0, 0.9).unwrap();
                let y = model.forward(&[x]).unwrap()[0];
                assert!(
                    (y - x.floor()).abs() < 1e-9,
                    "(N, L) = ({n}, {l}), x = {x}, y = {y}"
                );
            }
        }
    }

    #[test]
    fn bad_delta_is_an_argument_error() {
        for d in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(matches!(build_floor_net(2, 2, d), Err(Error::Argument(_))));
        }
        assert!(build_floor_net(0, 2, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn constant_on_every_kept_interval(n in 1usize..5, l in 1usize..4, delta in 0.001f64..0.5) {
            let net = build_floor_net(n, l, delta).unwrap();
            prop_assert!(net.width() <= 4 * n - 1);
            for (lo, hi) in net.kept_intervals() {
                let vals: Vec<f64> = (0..100).map(|i| net.eval(lo + (hi - lo) * i as f64 / 99.0)).collect();
                let mx = vals.iter().cloned().fold(f64::MIN, f64::max);
                let mn = vals.iter().cloned().fold(f64::MAX, f64::min);
                prop_assert!(mx - mn < 1e-9);
                prop_assert!((mn - lo).abs() < 1e-9);
            }
        }
    }
}
