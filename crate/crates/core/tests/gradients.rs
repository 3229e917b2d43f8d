mod common;

use common::{gradient_check, randomize, random_series, rng};
use dnode_core::data::WindowSet;
use dnode_core::decomposition::DecompConfig;
use dnode_core::node::{SolverConfig, SolverMethod};
use dnode_core::pipeline::{NormSettings, Pipeline, Variant};
use dnode_core::training::RegWeights;
use dnode_core::NormAxis;

fn check(variant: Variant, method: SolverMethod, lambda: f64, axis: NormAxis, seed: u64) -> f64 {
    let mut r = rng(seed);
    let (l, h, f) = (8, 4, 3);
    let decomposition = variant
        .decomposes()
        .then(|| DecompConfig::new(3, 4, variant.forced_seasonality().unwrap_or(true)));
    let normalization = variant.may_normalize().then_some(NormSettings {
        axis,
        ..Default::default()
    });
    let pipeline = Pipeline::new(variant, l, h, decomposition, normalization, SolverConfig::new(method, 3)).unwrap();
    let mut model = pipeline.init_model(&mut r);
    randomize(&mut model, &mut r, 0.3);
    let windows = WindowSet::new(random_series(&mut r, l + h + 2, f), l, h).unwrap();
    let reg = RegWeights {
        lambda_k: lambda,
        lambda_j: lambda,
    };
    gradient_check(&pipeline, &model, &windows, reg, &[11, 12, 13], 1e-5, 1e-6)
}

#[test]
fn every_variant_matches_finite_differences() {
    for (i, variant) in Variant::ALL.into_iter().enumerate() {
        for method in [SolverMethod::Euler, SolverMethod::Rk4] {
            let err = check(variant, method, 0.3, NormAxis::Feature, i as u64);
            assert!(err < 1e-4, "{variant} {method:?}: relative error {err}");
        }
    }
}

#[test]
fn time_axis_normalization_gradients() {
    for method in [SolverMethod::Euler, SolverMethod::Rk4] {
        let err = check(Variant::LtsfDnode, method, 0.0, NormAxis::Time, 40);
        assert!(err < 1e-4, "{method:?}: relative error {err}");
    }
}
