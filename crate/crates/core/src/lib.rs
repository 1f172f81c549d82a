//! Multi-component multi-layer networks with sinusoidal activations.
//!
//! The crate covers model construction and training with frozen inner
//! weights, benchmark targets, constructive approximation building blocks
//! and loss-landscape scans.

pub mod activations;
pub mod constructive;
pub mod error;
pub mod gradcheck;
pub mod landscape;
pub mod linalg;
pub mod models;
pub mod quadrature;
pub mod rng;
pub mod targets;
pub mod training;

pub use activations::{act_eval, ActivationKind};
pub use constructive::{
    build_floor_net, build_theorem_net_1d, cpwl_to_relu_net, modulus_estimate, search_sine_match,
    sintu_relu_approx, CpwlFunction, FloorNet, MatchError, SearchFailure, ShallowReluNet,
    SineMatch, SineSearch, SintuRelu, TheoremBuild, TheoremConfig, TheoremError, TheoremNet1d,
};
pub use error::{Error, Result};
pub use gradcheck::{gradient_check, GradCheck};
pub use landscape::{analytic_landscape, scan_pair, LandscapeCase, LandscapeGrid};
pub use linalg::{matmul, Matrix};
pub use models::{
    build_model, count_params, InitMode, Jet2, LayerParams, Model, ModelKind, ModelSpec,
    ParamCoord, ParamTensor,
};
pub use quadrature::{integrate, QuadratureKind, QuadratureRule};
pub use rng::Prng;
pub use targets::{analytic_deriv, sample, target_eval, Dataset, SampleMode, Target};
pub use training::{
    adam_step, epoch_permutation, evaluate, loss_and_grad, lr_at, train, AdamConfig, AdamState,
    EpochRecord, LrSchedule, Metrics, Precision, TrainConfig, TrainReport,
};

/// Shortest decimal form that parses back to the same `f64`.
pub fn fmt_float(v: f64) -> String {
    format!("{v:?}")
}
