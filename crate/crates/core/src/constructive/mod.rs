//! Executable versions of the approximation constructions: exact ReLU
//! forms of piecewise-linear functions, the floor network, two-sine point
//! matching, SinTU approximants of ReLU and the one-dimensional assembler.

mod cpwl;
mod floor;
mod sine;
mod sintu;
mod theorem;

pub use cpwl::{cpwl_to_relu_net, CpwlFunction, ShallowReluNet};
pub use floor::{build_floor_net, FloorLevel, FloorNet, DEFAULT_DELTA};
pub use sine::{
    max_error, search_sine_match, search_sine_match_with, MatchError, SearchFailure, SineMatch,
    SineSearch,
};
pub use sintu::{sintu_relu_approx, SintuRelu, COS_ZERO_TOL};
pub use theorem::{
    build_theorem_net_1d, modulus_estimate, modulus_estimate_on, TheoremBuild, TheoremConfig,
    TheoremError, TheoremNet1d,
};
