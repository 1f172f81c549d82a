//! Mean-squared-error training of the trainable partition with Adam.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::models::{Jet2, Model};
use crate::rng::Prng;
use crate::targets::Dataset;

/// Loss above which a run is declared divergent.
pub const DIVERGENCE_LOSS: f64 = 1e12;

/// Offset added to the epoch number when deriving the shuffle stream.
const SHUFFLE_STREAM: u64 = 1 << 32;

/// Staircase schedule `base * decay^floor(k / step)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base: f64,
    pub decay: f64,
    pub step: usize,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            base: 1e-3,
            decay: 0.9,
            step: 10_000,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.base.is_finite()) {
            return Err(Error::Argument(format!(
                "learning rate base must be > 0, got {}",
                self.base
            )));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Argument(format!(
                "decay must lie in (0, 1], got {}",
                self.decay
            )));
        }
        if self.step == 0 {
            return Err(Error::Argument("schedule step must be >= 1".into()));
        }
        Ok(())
    }
}

pub fn lr_at(schedule: &LrSchedule, k: usize) -> f64 {
    let p = (k / schedule.step) as i32;
    schedule.base * schedule.decay.powi(p)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    /// Parameters and gradients are rounded to single precision after every update.
    F32,
}

impl std::str::FromStr for Precision {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "f64" => Ok(Self::F64),
            "f32" => Ok(Self::F32),
            _ => Err(Error::Parse(format!("unknown precision {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub schedule: LrSchedule,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Argument("batch_size must be >= 1".into()));
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        if !(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0) {
            return Err(Error::Argument("Adam betas must lie in (0, 1)".into()));
        }
        if !(eps > 0.0) {
            return Err(Error::Argument("Adam epsilon must be > 0".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates for Adam.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    config: AdamConfig,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            config,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One bias-corrected Adam update of `params` (concatenated views).
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[f64], lr: f64) -> Result<()> {
        let n: usize = params.iter().map(|p| p.len()).sum();
        if n != self.m.len() || grads.len() != n {
            return Err(Error::Shape(format!(
                "optimizer holds {} moments, got {n} parameters and {} gradients",
                self.m.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let mut k = 0;
        for view in params.iter_mut() {
            for p in view.iter_mut() {
                let g = grads[k];
                let m = beta1 * self.m[k] + (1.0 - beta1) * g;
                let v = beta2 * self.v[k] + (1.0 - beta2) * g * g;
                self.m[k] = m;
                self.v[k] = v;
                *p -= lr * (m / c1) / ((v / c2).sqrt() + eps);
                k += 1;
            }
        }
        Ok(())
    }
}

/// Single update of the model's trainable parameters.
pub fn adam_step(model: &mut Model, state: &mut AdamState, grads: &[f64], lr: f64) -> Result<()> {
    state.step(&mut model.trainable_views_mut(), grads, lr)
}

/// Batch MSE and its gradient with respect to every trainable entry (A and c
/// for MMNN blocks, all weights for dense layers).
pub fn loss_and_grad(model: &Model, x: &Matrix, y: &Matrix) -> Result<(f64, Vec<f64>)> {
    model.mse_and_grad(x, y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_mse: f64,
    pub test_mse: f64,
    pub test_max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub records: Vec<EpochRecord>,
    pub wall_time_s: f64,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_mse,test_mse,test_max";

    pub fn last(&self) -> &EpochRecord {
        self.records
            .last()
            .expect("a report always holds the epoch-0 record")
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{}", Self::CSV_HEADER)?;
        for r in &self.records {
            writeln!(
                w,
                "{},{},{},{},{}",
                r.epoch,
                crate::fmt_float(r.lr),
                crate::fmt_float(r.train_mse),
                crate::fmt_float(r.test_mse),
                crate::fmt_float(r.test_max)
            )?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii")
    }
}

/// Error metrics of a model against reference values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub max: f64,
    /// `mse / mean(target^2)`, or `mse` when the target is identically zero.
    pub rel_mse: f64,
    /// `max / max|target|`, or `max` when the target is identically zero.
    pub rel_max: f64,
}

impl Metrics {
    fn from_pairs(pred: &[f64], target: &[f64]) -> Self {
        let n = target.len().max(1) as f64;
        let (mut se, mut mx, mut t2, mut tmax) = (0.0, 0.0f64, 0.0, 0.0f64);
        for (p, t) in pred.iter().zip(target) {
            let e = p - t;
            se += e * e;
            mx = mx.max(e.abs());
            t2 += t * t;
            tmax = tmax.max(t.abs());
        }
        let mse = se / n;
        let mean_t2 = t2 / n;
        Metrics {
            mse,
            max: mx,
            rel_mse: if mean_t2 > 0.0 { mse / mean_t2 } else { mse },
            rel_max: if tmax > 0.0 { mx / tmax } else { mx },
        }
    }
}

/// Metrics of the model (order 0) or its first/second derivative (orders 1, 2)
/// on `data`. Derivative orders compare against `target_derivs`, one value per row.
pub fn evaluate(
    model: &Model,
    data: &Dataset,
    deriv_order: u8,
    target_derivs: Option<&[f64]>,
) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::Argument("empty evaluation set".into()));
    }
    match deriv_order {
        0 => {
            let pred = model.forward_batch(&data.x)?;
            if pred.shape() != data.y.shape() {
                return Err(Error::Shape("prediction and target shapes differ".into()));
            }
            Ok(Metrics::from_pairs(pred.data(), data.y.data()))
        }
        1 | 2 => {
            if model.input_dim() != 1 || model.output_dim() != 1 {
                return Err(Error::Unsupported(
                    "derivative metrics need a scalar-to-scalar model".into(),
                ));
            }
            let t = target_derivs.ok_or_else(|| {
                Error::Argument("derivative metrics need target derivatives".into())
            })?;
            if t.len() != data.len() {
                return Err(Error::Shape(format!(
                    "{} derivative targets for {} points",
                    t.len(),
                    data.len()
                )));
            }
            let pred = (0..data.len())
                .map(|r| {
                    let j = model.forward_jet(Jet2::variable(data.x.get(r, 0)))?[0];
                    Ok(if deriv_order == 1 { j.d1 } else { j.d2 })
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(Metrics::from_pairs(&pred, t))
        }
        o => Err(Error::Argument(format!(
            "derivative order must be 0, 1 or 2, got {o}"
        ))),
    }
}

/// Order in which training rows are visited during `epoch` (1-based).
pub fn epoch_permutation(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    Prng::stream(seed, SHUFFLE_STREAM + epoch as u64).shuffle(&mut idx);
    idx
}

fn round_f32(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = *x as f32 as f64);
}

/// Trains `model` in place. The report holds one record per epoch plus the
/// initial evaluation as epoch 0.
pub fn train(
    model: &mut Model,
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::Argument(
            "training and test sets must be non-empty".into(),
        ));
    }
    let start = Instant::now();
    let f32_mode = config.precision == Precision::F32;
    if f32_mode {
        for view in model.trainable_views_mut() {
            round_f32(view);
        }
    }
    let record = |model: &Model, epoch: usize| -> Result<EpochRecord> {
        let tr = evaluate(model, train_set, 0, None)?;
        let te = evaluate(model, test_set, 0, None)?;
        Ok(EpochRecord {
            epoch,
            lr: lr_at(&config.schedule, epoch),
            train_mse: tr.mse,
            test_mse: te.mse,
            test_max: te.max,
        })
    };
    let mut records = vec![record(model, 0)?];
    let mut adam = AdamState::new(model.stored_params().0, config.adam);
    let n = train_set.len();
    for epoch in 1..=config.epochs {
        let lr = lr_at(&config.schedule, epoch);
        let order = epoch_permutation(config.seed, epoch, n);
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch = train_set.gather(idx);
            let (loss, mut grad) = loss_and_grad(model, &batch.x, &batch.y)?;
            if !loss.is_finite() || loss > DIVERGENCE_LOSS {
                return Err(Error::Divergence {
                    epoch,
                    batch: b,
                    loss,
                });
            }
            if f32_mode {
                round_f32(&mut grad);
            }
            adam_step(model, &mut adam, &grad, lr)?;
            if f32_mode {
                for view in model.trainable_views_mut() {
                    round_f32(view);
                }
            }
        }
        let rec = match record(model, epoch) {
            Ok(r) => r,
            Err(Error::Numeric(_)) => {
                return Err(Error::Divergence {
                    epoch,
                    batch: n.div_ceil(config.batch_size),
                    loss: f64::INFINITY,
                })
            }
            Err(e) => return Err(e),
        };
        if !rec.train_mse.is_finite() || rec.train_mse > DIVERGENCE_LOSS {
            return Err(Error::Divergence {
                epoch,
                batch: n.div_ceil(config.batch_size),
                loss: rec.train_mse,
            });
        }
        records.push(rec);
    }
    Ok(TrainReport {
        records,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
