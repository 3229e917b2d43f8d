mod common;

use dnode_core::harness::experiment::checkpoint_path;
use dnode_core::harness::grid::collate;
use dnode_core::harness::{
    evaluate_run, run_experiment, run_on_panel, synth_generate, write_outputs, ExperimentConfig, RunReport, SynthSpec,
};
use dnode_core::{Panel, Variant};

fn panel() -> Panel {
    synth_generate(&SynthSpec {
        length: 900,
        n_features: 2,
        trend_slope: 0.002,
        level_shift: 0.5,
        seed: 3,
        ..Default::default()
    })
    .unwrap()
}

fn config(variant: Variant) -> ExperimentConfig {
    ExperimentConfig {
        dataset: "synthetic.csv".into(),
        seq_len: Some(48),
        horizons: vec![12, 24],
        variant,
        kernel_size: variant.decomposes().then_some(13),
        period: variant.decomposes().then_some(24),
        stationarity_window: Some(100),
        max_epochs: 4,
        patience: 2,
        ..Default::default()
    }
}

#[test]
fn report_roundtrips_and_repeats() {
    let a = run_on_panel(&config(Variant::LtsfDnode), panel()).unwrap();
    let json = a.report.to_json().unwrap();
    assert_eq!(RunReport::from_json(&json).unwrap(), a.report);
    let b = run_on_panel(&config(Variant::LtsfDnode), panel()).unwrap();
    assert_eq!(json, b.report.to_json().unwrap());
    assert_eq!(a.report.horizons.len(), 2);
    for h in &a.report.horizons {
        assert_eq!(h.train.test_mse, Some(h.test.mse));
        assert!(h.train.best_epoch >= 1 && h.train.best_epoch <= h.train.epochs_run);
        assert!(h.train.wall_clock_seconds.is_none());
    }
}

#[test]
fn outputs_and_rescoring() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("synthetic.csv");
    panel().write_csv(&csv, "date").unwrap();
    let mut cfg = config(Variant::Nlinear);
    cfg.dataset = csv.to_string_lossy().into_owned();
    let outcome = run_experiment(&cfg).unwrap();
    let out = dir.path().join("run");
    write_outputs(&outcome, &out).unwrap();
    for name in ["report.json", "metrics.csv", "losses.csv", "timing.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    assert!(checkpoint_path(&out, 24).exists());
    let losses = std::fs::read_to_string(out.join("losses.csv")).unwrap();
    let epochs: usize = outcome.report.horizons.iter().map(|h| h.train.epochs_run).sum();
    assert_eq!(losses.lines().count(), epochs + 1);
    let rescored = evaluate_run(&out).unwrap();
    for ((h, r), orig) in rescored.iter().zip(&outcome.report.horizons) {
        assert_eq!(*h, orig.pred_len);
        assert_eq!(r.mse, orig.test.mse);
    }
}

#[test]
fn grid_selects_on_validation() {
    let mut outcomes = Vec::new();
    for (i, lr) in [0.05, 0.0001].into_iter().enumerate() {
        let cfg = ExperimentConfig {
            learning_rate: lr,
            horizons: vec![12],
            ..config(Variant::Linear)
        };
        outcomes.push((i, run_on_panel(&cfg, panel()).unwrap()));
    }
    // Poison the test metrics; selection must not move.
    let report = collate(&outcomes);
    let chosen = report.selected[0];
    for (_, o) in &mut outcomes {
        o.report.horizons[0].test.mse = if o.report.config.learning_rate == report.entries[chosen].learning_rate {
            1e9
        } else {
            0.0
        };
    }
    let again = collate(&outcomes);
    assert_eq!(again.selected, report.selected);
    let vals: Vec<f64> = report.entries.iter().map(|e| e.val_mse).collect();
    assert!(vals[chosen] <= vals[1 - chosen]);
}

#[test]
fn contradictory_config_is_rejected() {
    let mut cfg = config(Variant::NoDcmp);
    cfg.kernel_size = Some(13);
    assert!(run_on_panel(&cfg, panel()).is_err());
}
