//! Fixtures shared by the benchmarks.

use fmmnn::{build_model, sample, ActivationKind, Dataset, InitMode, Model, ModelSpec, SampleMode, Target};

/// The models benchmarked: the reduced-scale pair used in the directionality
/// runs plus a small network.
pub fn models() -> Vec<(&'static str, Model)> {
    let specs = [
        ("mmnn_32_4_3", ModelSpec::mmnn(32, 4, 3, ActivationKind::Sine)),
        ("mmnn_128_16_4", ModelSpec::mmnn(128, 16, 4, ActivationKind::Sine)),
        ("fcnn_64_4", ModelSpec::fcnn(64, 4, ActivationKind::Sine)),
    ];
    specs
        .into_iter()
        .map(|(name, spec)| (name, build_model(&spec, 0, InitMode::Default).expect("valid spec")))
        .collect()
}

pub fn batch(n: usize) -> Dataset {
    sample(Target::S32F1, n, SampleMode::UniformRandom, 0).expect("n > 0")
}
