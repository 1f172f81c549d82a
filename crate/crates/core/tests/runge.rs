use fmmnn::{
    build_model, sample, train, ActivationKind, AdamConfig, InitMode, LrSchedule, ModelSpec,
    Precision, SampleMode, Target, TrainConfig,
};

// Pilot at these settings reached 2.4e-5; the threshold leaves 4x headroom.
#[test]
fn sine_mmnn_fits_runge_full_batch() {
    let spec = ModelSpec::mmnn(64, 8, 3, ActivationKind::Sine);
    let mut m = build_model(&spec, 0, InitMode::Default).unwrap();
    let tr = sample(Target::Runge100, 2000, SampleMode::UniformRandom, 0).unwrap();
    let te = sample(Target::Runge100, 5000, SampleMode::UniformRandom, 1000).unwrap();
    let cfg = TrainConfig {
        epochs: 2000,
        batch_size: 2000,
        schedule: LrSchedule {
            base: 1e-3,
            decay: 0.9,
            step: 100_000,
        },
        seed: 0,
        precision: Precision::F64,
        adam: AdamConfig::default(),
    };
    let r = train(&mut m, &tr, &te, &cfg).unwrap();
    assert_eq!(r.records.len(), 2001);
    assert!(r.last().test_mse < 1e-4, "{}", r.last().test_mse);
}
