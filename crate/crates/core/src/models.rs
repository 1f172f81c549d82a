//! MMNN, ResMMNN and FCNN models.
//!
//! An MMNN block maps `x -> A σ(W x + b) + c`. `W`, `b` are fixed at
//! initialization and only `A`, `c` are trained. Blocks listed as residual
//! also add their input. An FCNN is a plain stack of dense layers with every
//! parameter trainable.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::linalg::{gemm, Matrix, Op};
use crate::rng::Prng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Mmnn,
    Resmmnn,
    Fcnn,
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmnn" => Ok(Self::Mmnn),
            "resmmnn" => Ok(Self::Resmmnn),
            "fcnn" => Ok(Self::Fcnn),
            _ => Err(Error::Parse(format!("unknown model kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMode {
    #[default]
    Default,
    Scaled,
}

impl FromStr for InitMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Self::Default),
            "scaled" => Ok(Self::Scaled),
            _ => Err(Error::Parse(format!("unknown init mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub width: usize,
    /// Ignored for FCNN.
    #[serde(default)]
    pub rank: usize,
    pub depth: usize,
    #[serde(default = "one")]
    pub input_dim: usize,
    #[serde(default = "one")]
    pub output_dim: usize,
    pub activation: ActivationKind,
    /// 1-based block indices wrapped by an identity skip. `None` means every
    /// interior block `2..=L-1` for ResMMNN and none otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_layers: Option<Vec<usize>>,
}

fn one() -> usize {
    1
}

impl ModelSpec {
    pub fn mmnn(width: usize, rank: usize, depth: usize, activation: ActivationKind) -> Self {
        Self {
            kind: ModelKind::Mmnn,
            width,
            rank,
            depth,
            input_dim: 1,
            output_dim: 1,
            activation,
            residual_layers: None,
        }
    }

    pub fn resmmnn(width: usize, rank: usize, depth: usize, activation: ActivationKind) -> Self {
        Self {
            kind: ModelKind::Resmmnn,
            ..Self::mmnn(width, rank, depth, activation)
        }
    }

    pub fn fcnn(width: usize, depth: usize, activation: ActivationKind) -> Self {
        Self {
            kind: ModelKind::Fcnn,
            rank: 0,
            ..Self::mmnn(width, 0, depth, activation)
        }
    }

    pub fn with_dims(mut self, input_dim: usize, output_dim: usize) -> Self {
        self.input_dim = input_dim;
        self.output_dim = output_dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.width == 0 || self.depth == 0 {
            return bad(format!(
                "width and depth must be >= 1 (got N={}, L={})",
                self.width, self.depth
            ));
        }
        if self.input_dim == 0 || self.output_dim == 0 {
            return bad("input and output dimensions must be >= 1".into());
        }
        if self.kind != ModelKind::Fcnn && (self.rank == 0 || self.rank > self.width) {
            return bad(format!(
                "rank must satisfy 1 <= R <= N (got R={}, N={})",
                self.rank, self.width
            ));
        }
        if let Some(res) = &self.residual_layers {
            if self.kind != ModelKind::Resmmnn && !res.is_empty() {
                return bad("residual layers are only allowed for resmmnn".into());
            }
            for &i in res {
                if i < 2 || i + 1 > self.depth {
                    return bad(format!(
                        "residual index {i} outside 2..={}",
                        self.depth.saturating_sub(1)
                    ));
                }
            }
        }
        Ok(())
    }

    /// Whether 1-based block `i` carries a skip connection.
    pub fn is_residual(&self, i: usize) -> bool {
        match (&self.kind, &self.residual_layers) {
            (ModelKind::Resmmnn, None) => i >= 2 && i < self.depth,
            (ModelKind::Resmmnn, Some(set)) => set.contains(&i),
            _ => false,
        }
    }

    /// (d_{i-1}, n_i, d_i) for 1-based block `i`.
    fn block_dims(&self, i: usize) -> (usize, usize, usize) {
        let din = if i == 1 { self.input_dim } else { self.rank };
        let dout = if i == self.depth {
            self.output_dim
        } else {
            self.rank
        };
        (din, self.width, dout)
    }

    /// (fan_in, fan_out, activated) for each dense layer of an FCNN.
    fn dense_dims(&self) -> Vec<(usize, usize, bool)> {
        let mut v = Vec::with_capacity(self.depth + 1);
        for i in 0..self.depth {
            let fan_in = if i == 0 { self.input_dim } else { self.width };
            v.push((fan_in, self.width, true));
        }
        v.push((self.width, self.output_dim, false));
        v
    }

    /// Multiplier applied to the first-layer weights and bias in scaled mode.
    pub fn scale_factor(&self) -> f64 {
        let d0 = self.input_dim as f64;
        d0.sqrt() * (self.width as f64 / 2.0).powf(1.0 / d0)
    }
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModelKind::Fcnn => write!(f, "FCNN({},-,{})", self.width, self.depth),
            ModelKind::Mmnn => write!(f, "MMNN({},{},{})", self.width, self.rank, self.depth),
            ModelKind::Resmmnn => write!(f, "ResMMNN({},{},{})", self.width, self.rank, self.depth),
        }?;
        write!(f, "[{}]", self.activation)
    }
}

/// (trainable, total) scalar counts for a spec.
pub fn count_params(spec: &ModelSpec) -> Result<(usize, usize)> {
    spec.validate()?;
    Ok(match spec.kind {
        ModelKind::Fcnn => {
            let n: usize = spec.dense_dims().iter().map(|&(i, o, _)| i * o + o).sum();
            (n, n)
        }
        _ => {
            let mut trainable = 0;
            let mut frozen = 0;
            for i in 1..=spec.depth {
                let (din, n, dout) = spec.block_dims(i);
                trainable += dout * n + dout;
                frozen += n * din + n;
            }
            (trainable, trainable + frozen)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerParams {
    /// `A σ(W x + b) + c`, plus `x` when residual. W, b frozen.
    Mmnn {
        w: Matrix,
        b: Vec<f64>,
        a: Matrix,
        c: Vec<f64>,
        residual: bool,
    },
    /// `σ(W x + b)` if activated, else `W x + b`. Fully trainable.
    Dense {
        w: Matrix,
        b: Vec<f64>,
        activated: bool,
    },
}

impl LayerParams {
    pub fn input_dim(&self) -> usize {
        match self {
            Self::Mmnn { w, .. } | Self::Dense { w, .. } => w.cols(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Self::Mmnn { a, .. } => a.rows(),
            Self::Dense { w, .. } => w.rows(),
        }
    }

    fn trainable_len(&self) -> usize {
        match self {
            Self::Mmnn { a, c, .. } => a.data().len() + c.len(),
            Self::Dense { w, b, .. } => w.data().len() + b.len(),
        }
    }

    fn len(&self) -> usize {
        match self {
            Self::Mmnn { w, b, a, c, .. } => w.data().len() + b.len() + a.data().len() + c.len(),
            Self::Dense { w, b, .. } => w.data().len() + b.len(),
        }
    }

    fn check(&self) -> Result<()> {
        let (w, b) = match self {
            Self::Mmnn { w, b, .. } | Self::Dense { w, b, .. } => (w, b),
        };
        if b.len() != w.rows() {
            return Err(Error::Shape(format!(
                "bias length {} vs {} rows",
                b.len(),
                w.rows()
            )));
        }
        if let Self::Mmnn { a, c, residual, .. } = self {
            if a.cols() != w.rows() || c.len() != a.rows() {
                return Err(Error::Shape(format!(
                    "A is {}x{}, c has {}, hidden width {}",
                    a.rows(),
                    a.cols(),
                    c.len(),
                    w.rows()
                )));
            }
            if *residual && a.rows() != w.cols() {
                return Err(Error::Shape(
                    "residual block must preserve dimension".into(),
                ));
            }
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
        let ok = match self {
            Self::Mmnn { w, b, a, c, .. } => {
                w.is_finite() && finite(b) && a.is_finite() && finite(c)
            }
            Self::Dense { w, b, .. } => w.is_finite() && finite(b),
        };
        if !ok {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }
}

/// Names a tensor inside a layer. For dense layers only `W` and `B` exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParamTensor {
    W,
    B,
    A,
    C,
}

/// Address of one scalar parameter: 0-based layer, tensor, row, column.
/// Vectors use column 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamCoord {
    pub layer: usize,
    pub tensor: ParamTensor,
    pub row: usize,
    pub col: usize,
}

impl fmt::Display for ParamCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}.{:?}.{}.{}",
            self.layer, self.tensor, self.row, self.col
        )
    }
}

impl FromStr for ParamCoord {
    type Err = Error;
    /// Parses `layer.tensor.row.col`, e.g. `1.A.0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('.').collect();
        let bad = || {
            Error::Parse(format!(
                "parameter coordinate {s:?} is not layer.tensor.row.col"
            ))
        };
        if parts.len() != 4 {
            return Err(bad());
        }
        let tensor = match parts[1] {
            "W" | "w" => ParamTensor::W,
            "B" | "b" => ParamTensor::B,
            "A" | "a" => ParamTensor::A,
            "C" | "c" => ParamTensor::C,
            _ => return Err(bad()),
        };
        let num = |p: &str| p.parse::<usize>().map_err(|_| bad());
        Ok(Self {
            layer: num(parts[0])?,
            tensor,
            row: num(parts[2])?,
            col: num(parts[3])?,
        })
    }
}

/// Value with first and second derivative with respect to a scalar input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jet2 {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

impl Jet2 {
    pub fn new(v: f64, d1: f64, d2: f64) -> Self {
        Self { v, d1, d2 }
    }

    /// The input variable itself: (x, 1, 0).
    pub fn variable(x: f64) -> Self {
        Self::new(x, 1.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.d1.is_finite() && self.d2.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    init_mode: InitMode,
    seed: u64,
    layers: Vec<LayerParams>,
}

fn uniform_fill(rng: &mut Prng, n: usize, bound: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            rng.uniform(-bound, bound)
                .expect("bound is finite and non-negative")
        })
        .collect()
}

fn uniform_matrix(rng: &mut Prng, rows: usize, cols: usize, bound: f64) -> Matrix {
    Matrix::from_vec(rows, cols, uniform_fill(rng, rows * cols, bound)).expect("shape matches")
}

/// Builds a model with uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights and
/// biases. Draw order per layer is W (row-major), b, A, c.
pub fn build_model(spec: &ModelSpec, seed: u64, init_mode: InitMode) -> Result<Model> {
    spec.validate()?;
    let mut rng = Prng::new(seed);
    let mut layers = Vec::new();
    match spec.kind {
        ModelKind::Fcnn => {
            for (fan_in, fan_out, activated) in spec.dense_dims() {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let w = uniform_matrix(&mut rng, fan_out, fan_in, bound);
                let b = uniform_fill(&mut rng, fan_out, bound);
                layers.push(LayerParams::Dense { w, b, activated });
            }
        }
        _ => {
            for i in 1..=spec.depth {
                let (din, n, dout) = spec.block_dims(i);
                let bw = 1.0 / (din as f64).sqrt();
                let w = uniform_matrix(&mut rng, n, din, bw);
                let b = uniform_fill(&mut rng, n, bw);
                let ba = 1.0 / (n as f64).sqrt();
                let a = uniform_matrix(&mut rng, dout, n, ba);
                let c = uniform_fill(&mut rng, dout, ba);
                layers.push(LayerParams::Mmnn {
                    w,
                    b,
                    a,
                    c,
                    residual: spec.is_residual(i),
                });
            }
        }
    }
    if init_mode == InitMode::Scaled {
        let k = spec.scale_factor();
        match &mut layers[0] {
            LayerParams::Mmnn { w, b, .. } | LayerParams::Dense { w, b, .. } => {
                w.data_mut().iter_mut().for_each(|v| *v *= k);
                b.iter_mut().for_each(|v| *v *= k);
            }
        }
    }
    Ok(Model {
        spec: spec.clone(),
        init_mode,
        seed,
        layers,
    })
}

/// Scratch state of a batched forward pass, kept for backpropagation.
struct Trace {
    /// Input to each layer, `rows x d_in`.
    inputs: Vec<Vec<f64>>,
    /// Activation output per layer (`rows x n`); empty for linear dense layers.
    acts: Vec<Vec<f64>>,
    /// σ' at the pre-activation per layer; empty for linear dense layers.
    slopes: Vec<Vec<f64>>,
}

/// Rows handled per task in batched gradient evaluation. Partial sums are
/// combined in chunk order so the result does not depend on thread count.
pub const GRAD_CHUNK: usize = 256;

impl Model {
    /// Assembles a model from explicit parameters, checking every shape.
    pub fn from_layers(
        spec: ModelSpec,
        init_mode: InitMode,
        seed: u64,
        layers: Vec<LayerParams>,
    ) -> Result<Model> {
        spec.validate()?;
        let expected = if spec.kind == ModelKind::Fcnn {
            spec.depth + 1
        } else {
            spec.depth
        };
        if layers.len() != expected {
            return Err(Error::Shape(format!(
                "expected {expected} layers, got {}",
                layers.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            layer.check()?;
            let (din, dout) = match spec.kind {
                ModelKind::Fcnn => {
                    let (fi, fo, act) = spec.dense_dims()[i];
                    match layer {
                        LayerParams::Dense { activated, .. } if *activated == act => {}
                        _ => return Err(Error::Shape(format!("layer {i} has the wrong kind"))),
                    }
                    (fi, fo)
                }
                _ => {
                    match layer {
                        LayerParams::Mmnn { residual, .. }
                            if *residual == spec.is_residual(i + 1) => {}
                        _ => {
                            return Err(Error::Shape(format!(
                                "layer {i} has the wrong kind or residual flag"
                            )))
                        }
                    }
                    let (din, n, dout) = spec.block_dims(i + 1);
                    if let LayerParams::Mmnn { w, .. } = layer {
                        if w.rows() != n {
                            return Err(Error::Shape(format!(
                                "layer {i} width {} != {n}",
                                w.rows()
                            )));
                        }
                    }
                    (din, dout)
                }
            };
            if layer.input_dim() != din || layer.output_dim() != dout {
                return Err(Error::Shape(format!(
                    "layer {i} maps {} -> {}, expected {din} -> {dout}",
                    layer.input_dim(),
                    layer.output_dim()
                )));
            }
        }
        Ok(Model {
            spec,
            init_mode,
            seed,
            layers,
        })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn init_mode(&self) -> InitMode {
        self.init_mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.spec.output_dim
    }

    /// Number of stored scalars: (trainable, total).
    pub fn stored_params(&self) -> (usize, usize) {
        let t = self.layers.iter().map(LayerParams::trainable_len).sum();
        let n = self.layers.iter().map(LayerParams::len).sum();
        (t, n)
    }

    /// Trainable parameters flattened: per layer `A, c` (MMNN) or `W, b` (dense).
    pub fn trainable_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.stored_params().0);
        for layer in &self.layers {
            match layer {
                LayerParams::Mmnn { a, c, .. } => {
                    out.extend_from_slice(a.data());
                    out.extend_from_slice(c);
                }
                LayerParams::Dense { w, b, .. } => {
                    out.extend_from_slice(w.data());
                    out.extend_from_slice(b);
                }
            }
        }
        out
    }

    /// Mutable views of the trainable tensors, in the order of [`Model::trainable_params`].
    pub fn trainable_views_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for layer in &mut self.layers {
            match layer {
                LayerParams::Mmnn { a, c, .. } => {
                    out.push(a.data_mut());
                    out.push(c.as_mut_slice());
                }
                LayerParams::Dense { w, b, .. } => {
                    out.push(w.data_mut());
                    out.push(b.as_mut_slice());
                }
            }
        }
        out
    }

    pub fn set_trainable_params(&mut self, params: &[f64]) -> Result<()> {
        let n = self.stored_params().0;
        if params.len() != n {
            return Err(Error::Shape(format!(
                "expected {n} trainable values, got {}",
                params.len()
            )));
        }
        let mut off = 0;
        for view in self.trainable_views_mut() {
            view.copy_from_slice(&params[off..off + view.len()]);
            off += view.len();
        }
        Ok(())
    }

    /// Frozen parameters flattened: per MMNN layer `W, b`. Empty for FCNN.
    pub fn frozen_params(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let LayerParams::Mmnn { w, b, .. } = layer {
                out.extend_from_slice(w.data());
                out.extend_from_slice(b);
            }
        }
        out
    }

    /// Every stored scalar in layer order W, b, A, c.
    pub fn all_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.stored_params().1);
        for layer in &self.layers {
            match layer {
                LayerParams::Mmnn { w, b, a, c, .. } => {
                    out.extend_from_slice(w.data());
                    out.extend_from_slice(b);
                    out.extend_from_slice(a.data());
                    out.extend_from_slice(c);
                }
                LayerParams::Dense { w, b, .. } => {
                    out.extend_from_slice(w.data());
                    out.extend_from_slice(b);
                }
            }
        }
        out
    }

    /// FNV-1a over the bit patterns of all parameters.
    pub fn checksum(&self) -> u64 {
        checksum(&self.all_params())
    }

    fn param_slot(&mut self, p: &ParamCoord) -> Result<&mut f64> {
        let nl = self.layers.len();
        let layer = self.layers.get_mut(p.layer).ok_or_else(|| {
            Error::Argument(format!("layer {} out of range (model has {nl})", p.layer))
        })?;
        let oob = || Error::Argument(format!("parameter {p} out of range"));
        let (m, v): (Option<&mut Matrix>, Option<&mut Vec<f64>>) = match (layer, p.tensor) {
            (LayerParams::Mmnn { w, .. } | LayerParams::Dense { w, .. }, ParamTensor::W) => {
                (Some(w), None)
            }
            (LayerParams::Mmnn { b, .. } | LayerParams::Dense { b, .. }, ParamTensor::B) => {
                (None, Some(b))
            }
            (LayerParams::Mmnn { a, .. }, ParamTensor::A) => (Some(a), None),
            (LayerParams::Mmnn { c, .. }, ParamTensor::C) => (None, Some(c)),
            _ => return Err(oob()),
        };
        match (m, v) {
            (Some(m), _) => {
                if p.row >= m.rows() || p.col >= m.cols() {
                    return Err(oob());
                }
                let cols = m.cols();
                Ok(&mut m.data_mut()[p.row * cols + p.col])
            }
            (_, Some(v)) => {
                if p.col != 0 || p.row >= v.len() {
                    return Err(oob());
                }
                Ok(&mut v[p.row])
            }
            _ => unreachable!(),
        }
    }

    pub fn get_param(&self, p: &ParamCoord) -> Result<f64> {
        lookup(self, p)
    }

    pub fn set_param(&mut self, p: &ParamCoord, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Numeric(format!("parameter value {value}")));
        }
        *self.param_slot(p)? = value;
        Ok(())
    }

    /// Whether the coordinate names a trained parameter.
    pub fn is_trainable(&self, p: &ParamCoord) -> bool {
        match self.layers.get(p.layer) {
            Some(LayerParams::Dense { .. }) => true,
            Some(LayerParams::Mmnn { .. }) => matches!(p.tensor, ParamTensor::A | ParamTensor::C),
            None => false,
        }
    }

    /// All parameter coordinates, in the order of [`Model::all_params`].
    pub fn param_coords(&self) -> Vec<ParamCoord> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut mat = |t, m: &Matrix| {
                for r in 0..m.rows() {
                    for c in 0..m.cols() {
                        out.push(ParamCoord {
                            layer: l,
                            tensor: t,
                            row: r,
                            col: c,
                        });
                    }
                }
            };
            match layer {
                LayerParams::Mmnn { w, b, a, c, .. } => {
                    mat(ParamTensor::W, w);
                    let nb = b.len();
                    let na = (a.rows(), a.cols());
                    let nc = c.len();
                    for r in 0..nb {
                        out.push(ParamCoord {
                            layer: l,
                            tensor: ParamTensor::B,
                            row: r,
                            col: 0,
                        });
                    }
                    for r in 0..na.0 {
                        for cc in 0..na.1 {
                            out.push(ParamCoord {
                                layer: l,
                                tensor: ParamTensor::A,
                                row: r,
                                col: cc,
                            });
                        }
                    }
                    for r in 0..nc {
                        out.push(ParamCoord {
                            layer: l,
                            tensor: ParamTensor::C,
                            row: r,
                            col: 0,
                        });
                    }
                }
                LayerParams::Dense { w, b, .. } => {
                    mat(ParamTensor::W, w);
                    for r in 0..b.len() {
                        out.push(ParamCoord {
                            layer: l,
                            tensor: ParamTensor::B,
                            row: r,
                            col: 0,
                        });
                    }
                }
            }
        }
        out
    }

    /// Evaluates the network at one point.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "input has {} entries, model expects {}",
                x.len(),
                self.spec.input_dim
            )));
        }
        if let Some(v) = x.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("input entry {v}")));
        }
        let act = self.spec.activation;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            cur = match layer {
                LayerParams::Mmnn {
                    w,
                    b,
                    a,
                    c,
                    residual,
                } => {
                    let h: Vec<f64> = (0..w.rows())
                        .map(|j| act.value(dot(w.row(j), &cur) + b[j]))
                        .collect();
                    let mut y: Vec<f64> = (0..a.rows()).map(|r| dot(a.row(r), &h) + c[r]).collect();
                    if *residual {
                        y.iter_mut().zip(&cur).for_each(|(y, x)| *y += x);
                    }
                    y
                }
                LayerParams::Dense { w, b, activated } => (0..w.rows())
                    .map(|j| {
                        let u = dot(w.row(j), &cur) + b[j];
                        if *activated {
                            act.value(u)
                        } else {
                            u
                        }
                    })
                    .collect(),
            };
        }
        Ok(cur)
    }

    /// Evaluates every row of `x` (rows x input_dim).
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::Shape(format!(
                "batch has {} columns, model expects {}",
                x.cols(),
                self.spec.input_dim
            )));
        }
        let rows = x.rows();
        let out = self.output_dim();
        let data: Vec<Vec<f64>> = x
            .data()
            .par_chunks(GRAD_CHUNK * x.cols().max(1))
            .map(|chunk| self.forward_rows(chunk, chunk.len() / x.cols()))
            .collect();
        let data: Vec<f64> = data.into_iter().flatten().collect();
        debug_assert_eq!(data.len(), rows * out);
        Matrix::from_vec(rows, out, data)
            .map_err(|_| Error::Numeric("network output is not finite".into()))
    }

    fn forward_rows(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let act = self.spec.activation;
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let din = layer.input_dim();
            cur = match layer {
                LayerParams::Mmnn {
                    w,
                    b,
                    a,
                    c,
                    residual,
                } => {
                    let n = w.rows();
                    let mut h = vec![0.0; rows * n];
                    gemm(Op::N(&cur, rows, din), Op::T(w.data(), n, din), &mut h, 0.0);
                    for row in h.chunks_exact_mut(n) {
                        for (v, bj) in row.iter_mut().zip(b) {
                            *v = act.value(*v + bj);
                        }
                    }
                    let dout = a.rows();
                    let mut y = if *residual {
                        cur.clone()
                    } else {
                        vec![0.0; rows * dout]
                    };
                    gemm(
                        Op::N(&h, rows, n),
                        Op::T(a.data(), dout, n),
                        &mut y,
                        if *residual { 1.0 } else { 0.0 },
                    );
                    add_bias(&mut y, c);
                    y
                }
                LayerParams::Dense { w, b, activated } => {
                    let n = w.rows();
                    let mut u = vec![0.0; rows * n];
                    gemm(Op::N(&cur, rows, din), Op::T(w.data(), n, din), &mut u, 0.0);
                    add_bias(&mut u, b);
                    if *activated {
                        u.iter_mut().for_each(|v| *v = act.value(*v));
                    }
                    u
                }
            };
        }
        cur
    }

    fn forward_trace(&self, x: &[f64], rows: usize) -> (Vec<f64>, Trace) {
        let act = self.spec.activation;
        let mut trace = Trace {
            inputs: Vec::with_capacity(self.layers.len()),
            acts: Vec::with_capacity(self.layers.len()),
            slopes: Vec::with_capacity(self.layers.len()),
        };
        let mut cur = x.to_vec();
        for layer in &self.layers {
            let din = layer.input_dim();
            let (w, b) = match layer {
                LayerParams::Mmnn { w, b, .. } | LayerParams::Dense { w, b, .. } => (w, b),
            };
            let n = w.rows();
            let mut u = vec![0.0; rows * n];
            gemm(Op::N(&cur, rows, din), Op::T(w.data(), n, din), &mut u, 0.0);
            add_bias(&mut u, b);
            let activated = !matches!(
                layer,
                LayerParams::Dense {
                    activated: false,
                    ..
                }
            );
            let (s, d) = if activated {
                let mut d = vec![0.0; u.len()];
                for (v, dv) in u.iter_mut().zip(d.iter_mut()) {
                    let (sv, sd) = act.value_d1(*v);
                    *v = sv;
                    *dv = sd;
                }
                (u, d)
            } else {
                (u, Vec::new())
            };
            let next = match layer {
                LayerParams::Mmnn { a, c, residual, .. } => {
                    let dout = a.rows();
                    let mut y = if *residual {
                        cur.clone()
                    } else {
                        vec![0.0; rows * dout]
                    };
                    gemm(
                        Op::N(&s, rows, n),
                        Op::T(a.data(), dout, n),
                        &mut y,
                        if *residual { 1.0 } else { 0.0 },
                    );
                    add_bias(&mut y, c);
                    trace.acts.push(s);
                    y
                }
                LayerParams::Dense { .. } => {
                    let y = s.clone();
                    trace.acts.push(if activated { s } else { Vec::new() });
                    y
                }
            };
            trace.inputs.push(std::mem::replace(&mut cur, next));
            trace.slopes.push(d);
        }
        (cur, trace)
    }

    /// Sum of squared residuals over the rows and its gradient with respect
    /// to the trainable parameters (layout of [`Model::trainable_params`]).
    fn sum_sq_grad_rows(&self, x: &[f64], y: &[f64], rows: usize) -> (f64, Vec<f64>) {
        let (out, trace) = self.forward_trace(x, rows);
        let mut sum_sq = 0.0;
        let mut dy: Vec<f64> = out
            .iter()
            .zip(y)
            .map(|(o, t)| {
                let r = o - t;
                sum_sq += r * r;
                2.0 * r
            })
            .collect();
        let mut grad = vec![0.0; self.stored_params().0];
        let mut end = grad.len();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let din = layer.input_dim();
            let x_in = &trace.inputs[i];
            let slope = &trace.slopes[i];
            match layer {
                LayerParams::Mmnn { w, a, residual, .. } => {
                    let (dout, n) = a.shape();
                    let start = end - dout * n - dout;
                    let (ga, gc) = grad[start..end].split_at_mut(dout * n);
                    gemm(
                        Op::T(&dy, rows, dout),
                        Op::N(&trace.acts[i], rows, n),
                        ga,
                        0.0,
                    );
                    col_sums(&dy, dout, gc);
                    end = start;
                    if i > 0 {
                        let mut du = vec![0.0; rows * n];
                        gemm(
                            Op::N(&dy, rows, dout),
                            Op::N(a.data(), dout, n),
                            &mut du,
                            0.0,
                        );
                        du.iter_mut().zip(slope).for_each(|(g, s)| *g *= s);
                        let mut dx = if *residual {
                            dy.clone()
                        } else {
                            vec![0.0; rows * din]
                        };
                        gemm(
                            Op::N(&du, rows, n),
                            Op::N(w.data(), n, din),
                            &mut dx,
                            if *residual { 1.0 } else { 0.0 },
                        );
                        dy = dx;
                    }
                }
                LayerParams::Dense { w, activated, .. } => {
                    let n = w.rows();
                    if *activated {
                        dy.iter_mut().zip(slope).for_each(|(g, s)| *g *= s);
                    }
                    let start = end - n * din - n;
                    let (gw, gb) = grad[start..end].split_at_mut(n * din);
                    gemm(Op::T(&dy, rows, n), Op::N(x_in, rows, din), gw, 0.0);
                    col_sums(&dy, n, gb);
                    end = start;
                    if i > 0 {
                        let mut dx = vec![0.0; rows * din];
                        gemm(Op::N(&dy, rows, n), Op::N(w.data(), n, din), &mut dx, 0.0);
                        dy = dx;
                    }
                }
            }
        }
        debug_assert_eq!(end, 0);
        (sum_sq, grad)
    }

    /// Mean squared error over all outputs of the batch and its exact gradient
    /// with respect to the trainable parameters.
    pub fn mse_and_grad(&self, x: &Matrix, y: &Matrix) -> Result<(f64, Vec<f64>)> {
        self.check_batch(x, y)?;
        let din = x.cols();
        let dout = y.cols();
        let parts: Vec<(f64, Vec<f64>)> = x
            .data()
            .par_chunks(GRAD_CHUNK * din)
            .zip(y.data().par_chunks(GRAD_CHUNK * dout))
            .map(|(xc, yc)| self.sum_sq_grad_rows(xc, yc, xc.len() / din))
            .collect();
        let mut parts = parts.into_iter();
        let (mut sum_sq, mut grad) = parts.next().expect("non-empty batch");
        for (s, g) in parts {
            sum_sq += s;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        let scale = 1.0 / (x.rows() * dout) as f64;
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((sum_sq * scale, grad))
    }

    /// Mean squared error over all outputs of the batch.
    pub fn mse(&self, x: &Matrix, y: &Matrix) -> Result<f64> {
        self.check_batch(x, y)?;
        let pred = self.forward_batch(x)?;
        let s: f64 = pred
            .data()
            .iter()
            .zip(y.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum();
        Ok(s / y.data().len() as f64)
    }

    fn check_batch(&self, x: &Matrix, y: &Matrix) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::Argument("empty batch".into()));
        }
        if x.rows() != y.rows()
            || x.cols() != self.spec.input_dim
            || y.cols() != self.spec.output_dim
        {
            return Err(Error::Shape(format!(
                "batch is {}x{} -> {}x{}, model maps {} -> {}",
                x.rows(),
                x.cols(),
                y.rows(),
                y.cols(),
                self.spec.input_dim,
                self.spec.output_dim
            )));
        }
        Ok(())
    }

    /// Propagates value, first and second derivative through a model with scalar input.
    pub fn forward_jet(&self, x: Jet2) -> Result<Vec<Jet2>> {
        if self.spec.input_dim != 1 {
            return Err(Error::Unsupported(format!(
                "derivative propagation needs scalar input, model has {}",
                self.spec.input_dim
            )));
        }
        if !x.is_finite() {
            return Err(Error::Numeric("input jet is not finite".into()));
        }
        let act = self.spec.activation;
        let affine = |w: &Matrix, b: &[f64], z: &[Jet2]| -> Vec<Jet2> {
            (0..w.rows())
                .map(|j| {
                    let r = w.row(j);
                    let mut o = Jet2::new(b[j], 0.0, 0.0);
                    for (wk, zk) in r.iter().zip(z) {
                        o.v += wk * zk.v;
                        o.d1 += wk * zk.d1;
                        o.d2 += wk * zk.d2;
                    }
                    o
                })
                .collect()
        };
        let activate = |z: &mut [Jet2]| {
            for j in z.iter_mut() {
                let (s, s1, s2) = act.eval_unchecked(j.v);
                *j = Jet2::new(s, s1 * j.d1, s2 * j.d1 * j.d1 + s1 * j.d2);
            }
        };
        let mut cur = vec![x];
        for layer in &self.layers {
            cur = match layer {
                LayerParams::Mmnn {
                    w,
                    b,
                    a,
                    c,
                    residual,
                } => {
                    let mut h = affine(w, b, &cur);
                    activate(&mut h);
                    let mut y = affine(a, c, &h);
                    if *residual {
                        for (o, i) in y.iter_mut().zip(&cur) {
                            o.v += i.v;
                            o.d1 += i.d1;
                            o.d2 += i.d2;
                        }
                    }
                    y
                }
                LayerParams::Dense { w, b, activated } => {
                    let mut u = affine(w, b, &cur);
                    if *activated {
                        activate(&mut u);
                    }
                    u
                }
            };
        }
        if cur.iter().all(Jet2::is_finite) {
            Ok(cur)
        } else {
            Err(Error::Numeric(
                "jet propagation produced a non-finite value".into(),
            ))
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(&ModelRecord::from(self))
            .map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_json(s: &str) -> Result<Model> {
        let rec: ModelRecord = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        rec.into_model()
    }
}

fn lookup(m: &Model, p: &ParamCoord) -> Result<f64> {
    {
        let nl = m.layers.len();
        let layer = m.layers.get(p.layer).ok_or_else(|| {
            Error::Argument(format!("layer {} out of range (model has {nl})", p.layer))
        })?;
        let oob = || Error::Argument(format!("parameter {p} out of range"));
        let mat = |m: &Matrix| {
            if p.row < m.rows() && p.col < m.cols() {
                Ok(m.get(p.row, p.col))
            } else {
                Err(oob())
            }
        };
        let vec = |v: &[f64]| {
            if p.col == 0 && p.row < v.len() {
                Ok(v[p.row])
            } else {
                Err(oob())
            }
        };
        match (layer, p.tensor) {
            (LayerParams::Mmnn { w, .. } | LayerParams::Dense { w, .. }, ParamTensor::W) => mat(w),
            (LayerParams::Mmnn { b, .. } | LayerParams::Dense { b, .. }, ParamTensor::B) => vec(b),
            (LayerParams::Mmnn { a, .. }, ParamTensor::A) => mat(a),
            (LayerParams::Mmnn { c, .. }, ParamTensor::C) => vec(c),
            _ => Err(oob()),
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn add_bias(m: &mut [f64], b: &[f64]) {
    if b.is_empty() {
        return;
    }
    for row in m.chunks_exact_mut(b.len()) {
        row.iter_mut().zip(b).for_each(|(v, bj)| *v += bj);
    }
}

fn col_sums(m: &[f64], cols: usize, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for row in m.chunks_exact(cols) {
        out.iter_mut().zip(row).for_each(|(o, v)| *o += v);
    }
}

/// FNV-1a over the IEEE bit patterns of `values`.
pub fn checksum(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for byte in v.to_bits().to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    #[serde(rename = "W")]
    w: Vec<f64>,
    b: Vec<f64>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    a: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    residual: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    activated: Option<bool>,
}

#[derive(Serialize, Deserialize)]
struct ModelRecord {
    spec: ModelSpec,
    init_mode: InitMode,
    seed: u64,
    layers: Vec<LayerRecord>,
}

impl From<&Model> for ModelRecord {
    fn from(m: &Model) -> Self {
        let layers = m
            .layers
            .iter()
            .map(|l| match l {
                LayerParams::Mmnn {
                    w,
                    b,
                    a,
                    c,
                    residual,
                } => LayerRecord {
                    w: w.data().to_vec(),
                    b: b.clone(),
                    a: Some(a.data().to_vec()),
                    c: Some(c.clone()),
                    residual: *residual,
                    activated: None,
                },
                LayerParams::Dense { w, b, activated } => LayerRecord {
                    w: w.data().to_vec(),
                    b: b.clone(),
                    a: None,
                    c: None,
                    residual: false,
                    activated: Some(*activated),
                },
            })
            .collect();
        ModelRecord {
            spec: m.spec.clone(),
            init_mode: m.init_mode,
            seed: m.seed,
            layers,
        }
    }
}

impl ModelRecord {
    fn into_model(self) -> Result<Model> {
        self.spec.validate()?;
        let spec = self.spec;
        let mut layers = Vec::with_capacity(self.layers.len());
        let dense = spec.dense_dims();
        for (i, r) in self.layers.into_iter().enumerate() {
            let layer = if spec.kind == ModelKind::Fcnn {
                let &(fi, fo, act) = dense
                    .get(i)
                    .ok_or_else(|| Error::Shape("too many layers".into()))?;
                LayerParams::Dense {
                    w: Matrix::from_vec(fo, fi, r.w)?,
                    b: r.b,
                    activated: r.activated.unwrap_or(act),
                }
            } else {
                if i >= spec.depth {
                    return Err(Error::Shape("too many layers".into()));
                }
                let (din, n, dout) = spec.block_dims(i + 1);
                let missing = || Error::Parse(format!("layer {i} lacks A or c"));
                LayerParams::Mmnn {
                    w: Matrix::from_vec(n, din, r.w)?,
                    b: r.b,
                    a: Matrix::from_vec(dout, n, r.a.ok_or_else(missing)?)?,
                    c: r.c.ok_or_else(missing)?,
                    residual: r.residual,
                }
            };
            layers.push(layer);
        }
        Model::from_layers(spec, self.init_mode, self.seed, layers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn sine_unit() -> Model {
        let spec = ModelSpec::mmnn(1, 1, 1, ActivationKind::Sine);
        let layer = LayerParams::Mmnn {
            w: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            b: vec![0.0],
            a: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            c: vec![0.0],
            residual: false,
        };
        Model::from_layers(spec, InitMode::Default, 0, vec![layer]).unwrap()
    }

    /// Plain loop evaluator written independently of `Model::forward`.
    fn reference_eval(m: &Model, x: &[f64]) -> Vec<f64> {
        let act = m.spec().activation;
        let mut z = x.to_vec();
        for layer in m.layers() {
            match layer {
                LayerParams::Mmnn {
                    w,
                    b,
                    a,
                    c,
                    residual,
                } => {
                    let mut hidden = vec![0.0; w.rows()];
                    for j in 0..w.rows() {
                        let mut s = b[j];
                        for k in 0..w.cols() {
                            s += w.get(j, k) * z[k];
                        }
                        hidden[j] = act.eval(s).unwrap().0;
                    }
                    let mut y = c.clone();
                    for r in 0..a.rows() {
                        for j in 0..a.cols() {
                            y[r] += a.get(r, j) * hidden[j];
                        }
                        if *residual {
                            y[r] += z[r];
                        }
                    }
                    z = y;
                }
                LayerParams::Dense { w, b, activated } => {
                    let mut y = b.clone();
                    for j in 0..w.rows() {
                        for k in 0..w.cols() {
                            y[j] += w.get(j, k) * z[k];
                        }
                        if *activated {
                            y[j] = act.eval(y[j]).unwrap().0;
                        }
                    }
                    z = y;
                }
            }
        }
        z
    }

    #[test]
    fn table_parameter_counts() {
        let s = ModelSpec::mmnn(434, 16, 6, ActivationKind::Sine);
        assert_eq!(count_params(&s).unwrap(), (35235, 72993));
        let s = ModelSpec::mmnn(900, 16, 6, ActivationKind::Sine);
        assert_eq!(count_params(&s).unwrap(), (72981, 151281));
        let s = ModelSpec::fcnn(120, 6, ActivationKind::Sine);
        assert_eq!(count_params(&s).unwrap(), (72961, 72961));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(count_params(&ModelSpec::mmnn(4, 5, 2, ActivationKind::Relu)).is_err());
        assert!(count_params(&ModelSpec::mmnn(4, 0, 2, ActivationKind::Relu)).is_err());
        assert!(count_params(&ModelSpec::mmnn(0, 1, 2, ActivationKind::Relu)).is_err());
        let mut s = ModelSpec::resmmnn(4, 2, 4, ActivationKind::Relu);
        s.residual_layers = Some(vec![1]);
        assert!(s.validate().is_err());
        s.residual_layers = Some(vec![4]);
        assert!(s.validate().is_err());
        s.residual_layers = Some(vec![2, 3]);
        assert!(s.validate().is_ok());
        let mut p = ModelSpec::mmnn(4, 2, 4, ActivationKind::Relu);
        p.residual_layers = Some(vec![2]);
        assert!(p.validate().is_err());
    }

    #[test]
    fn scale_factors() {
        let s = ModelSpec::mmnn(434, 16, 6, ActivationKind::Sine);
        assert_eq!(s.scale_factor(), 217.0);
        let s = ModelSpec::mmnn(128, 16, 6, ActivationKind::Sine).with_dims(2, 1);
        assert!((s.scale_factor() - 8.0 * 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn build_is_deterministic_and_in_bounds() {
        let spec = ModelSpec::resmmnn(16, 4, 4, ActivationKind::Sine).with_dims(2, 3);
        let a = build_model(&spec, 9, InitMode::Default).unwrap();
        let b = build_model(&spec, 9, InitMode::Default).unwrap();
        assert_eq!(
            a.all_params()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>(),
            b.all_params()
                .iter()
                .map(|v| v.to_bits())
                .collect::<Vec<_>>()
        );
        let c = build_model(&spec, 10, InitMode::Default).unwrap();
        assert_ne!(a.checksum(), c.checksum());
        for (i, layer) in a.layers().iter().enumerate() {
            if let LayerParams::Mmnn {
                w,
                b,
                a,
                c,
                residual,
            } = layer
            {
                let bw = 1.0 / (w.cols() as f64).sqrt();
                let ba = 1.0 / (a.cols() as f64).sqrt();
                assert!(w.data().iter().chain(b).all(|v| v.abs() <= bw));
                assert!(a.data().iter().chain(c).all(|v| v.abs() <= ba));
                assert_eq!(*residual, i == 1 || i == 2);
            }
        }
    }

    #[test]
    fn scaled_init_touches_only_first_layer() {
        let spec = ModelSpec::mmnn(32, 4, 3, ActivationKind::Sine);
        let d = build_model(&spec, 5, InitMode::Default).unwrap();
        let s = build_model(&spec, 5, InitMode::Scaled).unwrap();
        let k = spec.scale_factor();
        for (i, (ld, ls)) in d.layers().iter().zip(s.layers()).enumerate() {
            match (ld, ls) {
                (
                    LayerParams::Mmnn {
                        w: wd,
                        b: bd,
                        a: ad,
                        c: cd,
                        ..
                    },
                    LayerParams::Mmnn {
                        w: ws,
                        b: bs,
                        a: as_,
                        c: cs,
                        ..
                    },
                ) => {
                    assert_eq!(ad, as_);
                    assert_eq!(cd, cs);
                    if i == 0 {
                        for (x, y) in wd.data().iter().chain(bd).zip(ws.data().iter().chain(bs)) {
                            assert_eq!(x * k, *y);
                        }
                    } else {
                        assert_eq!(wd, ws);
                        assert_eq!(bd, bs);
                    }
                }
                _ => unreachable!(),
            }
        }
        let f = ModelSpec::fcnn(8, 2, ActivationKind::Sine);
        let fd = build_model(&f, 1, InitMode::Default).unwrap();
        let fs = build_model(&f, 1, InitMode::Scaled).unwrap();
        assert_ne!(fd.layers()[0], fs.layers()[0]);
        assert_eq!(fd.layers()[1..], fs.layers()[1..]);
    }

    #[test]
    fn sine_unit_forward_and_jets() {
        let m = sine_unit();
        assert_eq!(m.forward(&[0.0]).unwrap(), vec![0.0]);
        assert_eq!(m.forward(&[0.3]).unwrap(), vec![0.3f64.sin()]);
        assert_eq!(
            m.forward_jet(Jet2::variable(0.0)).unwrap()[0],
            Jet2::new(0.0, 1.0, 0.0)
        );
        let j = m.forward_jet(Jet2::variable(FRAC_PI_2)).unwrap()[0];
        assert_eq!(j.v, 1.0);
        assert!(j.d1.abs() < 1e-16);
        assert_eq!(j.d2, -1.0);
    }

    #[test]
    fn zero_output_weights_give_constant() {
        let spec = ModelSpec::mmnn(8, 2, 3, ActivationKind::Tanh);
        let mut m = build_model(&spec, 3, InitMode::Default).unwrap();
        let last = m.layers().len() - 1;
        m.set_param(
            &ParamCoord {
                layer: last,
                tensor: ParamTensor::C,
                row: 0,
                col: 0,
            },
            0.25,
        )
        .unwrap();
        for j in 0..8 {
            m.set_param(
                &ParamCoord {
                    layer: last,
                    tensor: ParamTensor::A,
                    row: 0,
                    col: j,
                },
                0.0,
            )
            .unwrap();
        }
        for x in [-1.0, 0.0, 0.7] {
            assert_eq!(m.forward(&[x]).unwrap(), vec![0.25]);
        }
    }

    #[test]
    fn forward_matches_reference_evaluator() {
        let mut rng = Prng::new(77);
        for kind in [ModelKind::Mmnn, ModelKind::Resmmnn, ModelKind::Fcnn] {
            let spec = ModelSpec {
                kind,
                ..ModelSpec::mmnn(8, 2, 3, ActivationKind::Sine)
            };
            let m = build_model(&spec, 21, InitMode::Scaled).unwrap();
            let xs: Vec<f64> = (0..10).map(|_| rng.uniform(-1.0, 1.0).unwrap()).collect();
            let batch = m
                .forward_batch(&Matrix::from_vec(10, 1, xs.clone()).unwrap())
                .unwrap();
            for (i, &x) in xs.iter().enumerate() {
                let want = reference_eval(&m, &[x])[0];
                assert!((m.forward(&[x]).unwrap()[0] - want).abs() < 1e-12);
                assert!((batch.get(i, 0) - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forward_rejects_bad_input() {
        let m = sine_unit();
        assert!(matches!(m.forward(&[1.0, 2.0]), Err(Error::Shape(_))));
        assert!(matches!(m.forward(&[f64::NAN]), Err(Error::Numeric(_))));
        let two = build_model(
            &ModelSpec::mmnn(4, 2, 2, ActivationKind::Sine).with_dims(2, 1),
            0,
            InitMode::Default,
        )
        .unwrap();
        assert!(matches!(
            two.forward_jet(Jet2::variable(0.0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn jets_match_finite_differences() {
        let spec = ModelSpec::mmnn(16, 4, 3, ActivationKind::Sine);
        let m = build_model(&spec, 8, InitMode::Scaled).unwrap();
        let f = |x: f64| m.forward(&[x]).unwrap()[0];
        let h = 1e-5;
        let mut rng = Prng::new(4);
        for _ in 0..100 {
            let x = rng.uniform(-1.0, 1.0).unwrap();
            let j = m.forward_jet(Jet2::variable(x)).unwrap()[0];
            assert!((j.v - f(x)).abs() < 1e-12);
            let d1 = (f(x + h) - f(x - h)) / (2.0 * h);
            let jp = m.forward_jet(Jet2::variable(x + h)).unwrap()[0].d1;
            let jm = m.forward_jet(Jet2::variable(x - h)).unwrap()[0].d1;
            let d2 = (jp - jm) / (2.0 * h);
            let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1.0);
            assert!(rel(j.d1, d1) < 1e-5, "d1 {} vs {}", j.d1, d1);
            assert!(rel(j.d2, d2) < 1e-5, "d2 {} vs {}", j.d2, d2);
        }
    }

    #[test]
    fn zeroed_residual_blocks_are_identity() {
        let spec = ModelSpec::resmmnn(6, 3, 4, ActivationKind::Sine);
        let mut m = build_model(&spec, 2, InitMode::Default).unwrap();
        let mut layers = m.layers().to_vec();
        for l in &mut layers[1..3] {
            if let LayerParams::Mmnn { a, c, .. } = l {
                a.data_mut().iter_mut().for_each(|v| *v = 0.0);
                c.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        m = Model::from_layers(spec, InitMode::Default, 2, layers.clone()).unwrap();
        let short_spec = ModelSpec::mmnn(6, 3, 2, ActivationKind::Sine);
        let strip = |l: &LayerParams| match l {
            LayerParams::Mmnn { w, b, a, c, .. } => LayerParams::Mmnn {
                w: w.clone(),
                b: b.clone(),
                a: a.clone(),
                c: c.clone(),
                residual: false,
            },
            _ => unreachable!(),
        };
        let short = Model::from_layers(
            short_spec,
            InitMode::Default,
            2,
            vec![strip(&layers[0]), strip(&layers[3])],
        )
        .unwrap();
        for x in [-0.9, -0.1, 0.4, 1.0] {
            assert_eq!(m.forward(&[x]).unwrap(), short.forward(&[x]).unwrap());
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        for spec in [
            ModelSpec::resmmnn(7, 3, 4, ActivationKind::SinTU(-std::f64::consts::PI))
                .with_dims(2, 1),
            ModelSpec::fcnn(5, 2, ActivationKind::Gelu),
        ] {
            let m = build_model(&spec, 12, InitMode::Scaled).unwrap();
            let js = m.to_json().unwrap();
            let back = Model::from_json(&js).unwrap();
            assert_eq!(back, m);
            assert!(js.contains("\"W\""));
        }
        assert!(Model::from_json("{\"spec\": 1}").is_err());
    }

    #[test]
    fn param_access_and_coords() {
        let spec = ModelSpec::mmnn(3, 2, 2, ActivationKind::Relu);
        let mut m = build_model(&spec, 1, InitMode::Default).unwrap();
        let coords = m.param_coords();
        assert_eq!(coords.len(), m.stored_params().1);
        let all = m.all_params();
        for (c, v) in coords.iter().zip(&all) {
            assert_eq!(m.get_param(c).unwrap(), *v);
        }
        let p: ParamCoord = "1.A.0.2".parse().unwrap();
        assert!(m.is_trainable(&p));
        assert!(!m.is_trainable(&"0.W.0.0".parse().unwrap()));
        m.set_param(&p, 3.5).unwrap();
        assert_eq!(m.get_param(&p).unwrap(), 3.5);
        assert!(m.get_param(&"1.A.1.0".parse().unwrap()).is_err());
        assert!(m.get_param(&"2.A.0.0".parse().unwrap()).is_err());
        assert!(m.get_param(&"0.B.0.1".parse().unwrap()).is_err());
        assert!("1.Q.0.0".parse::<ParamCoord>().is_err());
        assert_eq!(p.to_string().parse::<ParamCoord>().unwrap(), p);
    }

    #[test]
    fn trainable_round_trip() {
        let spec = ModelSpec::fcnn(4, 2, ActivationKind::Tanh);
        let mut m = build_model(&spec, 1, InitMode::Default).unwrap();
        let mut p = m.trainable_params();
        p[3] = 9.0;
        m.set_trainable_params(&p).unwrap();
        assert_eq!(m.trainable_params(), p);
        assert!(m.set_trainable_params(&p[1..]).is_err());
        assert!(m.frozen_params().is_empty());
    }

    fn arb_spec() -> impl Strategy<Value = ModelSpec> {
        (
            0usize..3,
            1usize..40,
            1usize..40,
            1usize..7,
            1usize..4,
            1usize..4,
        )
            .prop_map(|(k, n, r, l, din, dout)| {
                let kind = [ModelKind::Mmnn, ModelKind::Resmmnn, ModelKind::Fcnn][k];
                ModelSpec {
                    kind,
                    width: n,
                    rank: if kind == ModelKind::Fcnn {
                        0
                    } else {
                        1 + r % n
                    },
                    depth: l,
                    input_dim: din,
                    output_dim: dout,
                    activation: ActivationKind::Sine,
                    residual_layers: None,
                }
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(50))]
        #[test]
        fn counted_equals_allocated(spec in arb_spec()) {
            let m = build_model(&spec, 0, InitMode::Default).unwrap();
            prop_assert_eq!(count_params(&spec).unwrap(), m.stored_params());
            prop_assert_eq!(m.trainable_params().len(), m.stored_params().0);
        }
    }
}
