//! Harness-level behaviour on the reference geometry.

use dmimo::channel::{build_cir, DiffusionParams, OffsetSchedule};
use dmimo::config::{ExperimentConfig, SimChannel, Sweep, SweepAxis};
use dmimo::equalization::DetectorKind;
use dmimo::geometry::initial_positions;
use dmimo::harness::{run_ber_sweep, run_interference_sweep, run_mse_sweep, run_threshold_search};
use dmimo::mimo::OffsetMode;

fn fixed_trials(n: usize) -> ExperimentConfig {
    ExperimentConfig { trials: n, max_trials: n, ..Default::default() }
}

fn sweep(axis: SweepAxis, values: &[f64]) -> Option<Sweep> {
    Some(Sweep { axis, values: values.to_vec() })
}

#[test]
fn ber_grows_with_distance() {
    let cfg = ExperimentConfig {
        sweep: sweep(SweepAxis::D, &[300e-9, 400e-9, 500e-9, 600e-9]),
        ..fixed_trials(300)
    };
    let run = run_ber_sweep(&cfg).unwrap();
    for kind in DetectorKind::ALL {
        let ber: Vec<f64> = run.points.iter().map(|p| p.detector(kind).unwrap().ber()).collect();
        assert!(ber.windows(2).all(|w| w[1] > w[0]), "{kind}: {ber:?}");
    }
}

#[test]
fn til_flattens_ber_in_spacing() {
    let hs = [25e-9, 50e-9, 75e-9, 100e-9];
    let base = ExperimentConfig { sweep: sweep(SweepAxis::H, &hs), ..fixed_trials(300) };
    let plain = run_ber_sweep(&base).unwrap();
    let til = run_ber_sweep(&ExperimentConfig { offset_mode: OffsetMode::Alternating, ..base }).unwrap();
    for kind in DetectorKind::ALL {
        let b: Vec<f64> = til.points.iter().map(|p| p.detector(kind).unwrap().ber()).collect();
        let (lo, hi) = b.iter().fold((f64::MAX, 0.0f64), |(l, h), &x| (l.min(x), h.max(x)));
        assert!(hi <= 2.0 * lo, "{kind} with TIL: {b:?}");
        let p: Vec<f64> = plain.points.iter().map(|p| p.detector(kind).unwrap().ber()).collect();
        assert!(p.iter().zip(&b).all(|(a, t)| *a > 100.0 * t), "{kind}: {p:?} vs {b:?}");
    }
}

#[test]
fn known_csi_counts_are_deterministic_for_zf_and_ls_under_heavy_crosstalk() {
    // The MMSE stage trades bias for noise, so it errs even without noise
    // once C̄[0] is nearly singular.
    let cfg = ExperimentConfig {
        h: 50e-9,
        sim_channel: SimChannel::Model,
        deterministic: true,
        ..fixed_trials(200)
    };
    let p = &run_ber_sweep(&cfg).unwrap().points[0];
    assert_eq!(p.detector(DetectorKind::ZfDfe).unwrap().errors, 0);
    assert_eq!(p.detector(DetectorKind::LsDfe).unwrap().errors, 0);
    assert!(p.detector(DetectorKind::MmseDfe).unwrap().errors > 0);
}

#[test]
fn threshold_search_near_reference_value() {
    let cfg = fixed_trials(500);
    let res = run_threshold_search(&cfg, &cfg.threshold_grid).unwrap();
    assert_eq!(res.kind, DetectorKind::ZfDfe);
    assert!((res.best - 0.4).abs() <= 0.1 + 1e-12, "{}", res.best);
    let ber: Vec<f64> = res.points.iter().map(|s| s.ber()).collect();
    let min = ber.iter().cloned().fold(f64::MAX, f64::min);
    assert!(ber[0] > min && ber[ber.len() - 1] > min);
}

#[test]
fn mse_drops_about_three_db_per_doubling() {
    let cfg = ExperimentConfig {
        sim_channel: SimChannel::Model,
        sweep: sweep(SweepAxis::KTot, &[64.0, 128.0, 256.0]),
        ..fixed_trials(2000)
    };
    let run = run_mse_sweep(&cfg).unwrap();
    for w in run.points.windows(2) {
        let crb_step = 10.0 * (w[0].crb / w[1].crb).log10();
        let ml_step = 10.0 * (w[0].mse_ml / w[1].mse_ml).log10();
        assert!((crb_step - 3.0103).abs() < 0.3, "{crb_step}");
        assert!((ml_step - 3.0103).abs() < 0.5, "{ml_step}");
    }
}

#[test]
fn interference_metric_trends() {
    let hs: Vec<f64> = (1..16).map(|i| i as f64 * 25e-9).collect();
    let cfg = ExperimentConfig { sweep: sweep(SweepAxis::H, &hs), ..Default::default() };
    let run = run_interference_sweep(&cfg).unwrap();
    let plain: Vec<f64> = run.points.iter().map(|p| p.metrics[0].1).collect();
    assert!(plain.windows(2).all(|w| w[1] < w[0]));

    // far apart, only the link's own tail and noise remain
    let far = run_interference_sweep(&ExperimentConfig { h: 1e-3, ..Default::default() }).unwrap();
    let single = build_cir(
        &initial_positions(400e-9, 1e-3, 1).unwrap(),
        &OffsetSchedule::zeros(1),
        &DiffusionParams::default(),
    )
    .unwrap();
    let floor = (single.tap(1)[(0, 0)] + single.tap(2)[(0, 0)] + single.noise()[0]) / single.tap(0)[(0, 0)];
    for (_, metric) in &far.points[0].metrics {
        assert!((metric - floor).abs() / floor < 1e-9, "{metric} vs {floor}");
    }
}

#[test]
fn sweeps_leave_base_config_untouched() {
    let cfg = ExperimentConfig {
        sweep: sweep(SweepAxis::TInt, &[0.1e-3, 0.2e-3, 0.4e-3]),
        ..fixed_trials(20)
    };
    let run = run_ber_sweep(&cfg).unwrap();
    assert_eq!(run.points.len(), 3);
    assert_eq!(cfg.diffusion.l_prime, 10);
}
