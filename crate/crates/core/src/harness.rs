//! Monte Carlo experiment driver.
//!
//! Every sweep point replays the same per-trial random streams (trial `t`
//! uses stream `t` of a ChaCha generator keyed by the seed), so curves are
//! compared under common random numbers and results never depend on how
//! trials are spread over worker threads.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{build_cir, sample_poisson, CirTaps, DiffusionParams, OffsetSchedule};
use crate::config::{Csi, EstimatorKind, ExperimentConfig, SimChannel, SweepAxis};
use crate::equalization::{ensure_causal, DecodeState, DetectorConfig, DetectorKind, Equalizer};
use crate::error::{Error, Result};
use crate::estimation::{
    concat_training, crb, design_training, ls_estimate, ml_estimate, squared_error, ObservationBlock, TrainingSet,
};
use crate::geometry::{brownian_step, initial_positions, MobilityParams, Topology};
use crate::mimo::{assign_offsets, mean_output, random_block, OffsetMode, SymbolBlock};
use crate::stats::{to_db, wilson_interval, Z95};

/// Generator for trial `trial`.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

fn run_parallel<T, F>(workers: usize, range: std::ops::Range<u64>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(u64) -> Result<T> + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| range.into_par_iter().map(&f).collect())
}

/// A plain CSV table; floats are written in shortest round-trip scientific form.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: Vec<String>) -> Self {
        Self { header, rows: Vec::new() }
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn sci(x: f64) -> String {
    format!("{x:e}")
}

fn int(x: impl Into<u64>) -> String {
    x.into().to_string()
}

/// Memoised training designs keyed by length and prior.
#[derive(Debug, Default)]
pub struct DesignCache {
    designs: HashMap<(usize, usize, Vec<u64>), TrainingSet>,
}

impl DesignCache {
    fn base(&mut self, cfg: &ExperimentConfig, prior: &CirTaps) -> Result<TrainingSet> {
        if let Some(path) = &cfg.training_file {
            let text = std::fs::read_to_string(path)?;
            return TrainingSet::from_text(&text, cfg.diffusion.l_taps);
        }
        let key = (cfg.k1, cfg.beam, prior.flat().iter().map(|v| v.to_bits()).collect());
        if let Some(t) = self.designs.get(&key) {
            return Ok(t.clone());
        }
        let t = design_training(cfg.k1, cfg.m, cfg.diffusion.l_taps, prior, &cfg.training_constraints())?;
        self.designs.insert(key, t.clone());
        Ok(t)
    }

    /// Training of `k` symbols per transmitter, built by repeating the base design.
    pub fn training(&mut self, cfg: &ExperimentConfig, prior: &CirTaps, k: usize) -> Result<TrainingSet> {
        let base = self.base(cfg, prior)?;
        if base.m() != cfg.m {
            return Err(Error::Config(format!("training has {} rows for M = {}", base.m(), cfg.m)));
        }
        if k == 0 || !k.is_multiple_of(base.len()) {
            return Err(Error::Config(format!(
                "{k} training symbols per transmitter is not a multiple of the base length {}",
                base.len()
            )));
        }
        concat_training(&base, k / base.len())
    }
}

/// Geometry, schedule and the detector's `L`-tap model for one config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub topology: Topology,
    pub schedule: OffsetSchedule,
    pub model: CirTaps,
    /// Parameters of the simulated channel.
    pub sim_params: DiffusionParams,
    /// Simulated channel at the initial positions.
    pub sim: CirTaps,
}

impl Scenario {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let topology = initial_positions(cfg.d, cfg.h, cfg.m)?;
        let schedule = assign_offsets(cfg.offset_mode, cfg.diffusion.t_int, cfg.m)?;
        let model = build_cir(&topology, &schedule, &cfg.diffusion)?;
        let sim_params = match cfg.sim_channel {
            SimChannel::Tail => DiffusionParams { l_taps: cfg.diffusion.l_prime, ..cfg.diffusion },
            SimChannel::Model => cfg.diffusion,
        };
        let sim = build_cir(&topology, &schedule, &sim_params)?;
        Ok(Self { topology, schedule, model, sim_params, sim })
    }

    fn sim_at(&self, topology: &Topology) -> Result<CirTaps> {
        build_cir(topology, &self.schedule, &self.sim_params)
    }
}

/// Received counts for every symbol of `x`, silent history before it.
/// `channel_of(k)` selects the channel in force when symbol `k` is sampled.
pub fn synthesize<R: Rng + ?Sized>(
    channels: &[CirTaps],
    channel_of: impl Fn(usize) -> usize,
    x: &SymbolBlock,
    deterministic: bool,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let m = x.m();
    let mut y = DMatrix::zeros(m, x.len());
    for k in 0..x.len() {
        let ch = &channels[channel_of(k)];
        for i in 0..m {
            let mut mu = ch.noise()[i];
            for l in 0..ch.l_taps().min(k + 1) {
                let tap = ch.tap(l);
                for j in 0..m {
                    if x.get(j, k - l) == 1 {
                        mu += tap[(i, j)];
                    }
                }
            }
            y[(i, k)] = if deterministic { mu } else { sample_poisson(mu, rng)? as f64 };
        }
    }
    Ok(y)
}

/// Error counts of one receiver over a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorStats {
    pub detector: DetectorConfig,
    pub errors: u64,
    pub bits: u64,
    pub packets: u64,
    pub failed_packets: u64,
    /// Packets whose equalizer could not be built from the estimate.
    pub equalizer_failures: u64,
}

impl DetectorStats {
    fn new(detector: DetectorConfig) -> Self {
        Self { detector, errors: 0, bits: 0, packets: 0, failed_packets: 0, equalizer_failures: 0 }
    }

    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.errors as f64 / self.bits as f64
        }
    }

    pub fn interval(&self) -> (f64, f64) {
        wilson_interval(self.errors, self.bits, Z95)
    }

    pub fn packet_error_rate(&self) -> f64 {
        if self.packets == 0 {
            0.0
        } else {
            self.failed_packets as f64 / self.packets as f64
        }
    }

    /// `η = (B − K_tot)/B · (1 − P_s)`.
    pub fn efficiency(&self, block_len: usize, k_tot: usize) -> f64 {
        (block_len - k_tot) as f64 / block_len as f64 * (1.0 - self.packet_error_rate())
    }

    fn converged(&self, rel: f64) -> bool {
        let p = self.ber();
        let (lo, hi) = self.interval();
        p > 0.0 && (hi - lo) / 2.0 < rel * p
    }
}

#[derive(Debug, Clone, Copy)]
struct PacketOutcome {
    errors: u64,
    bits: u64,
    equalizer_failed: bool,
}

/// One sweep point of a BER or block-protocol run.
#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub axis_value: f64,
    pub block_len: usize,
    pub k_tot: usize,
    pub trials: u64,
    pub estimation_failures: u64,
    pub stats: Vec<DetectorStats>,
}

impl BerPoint {
    pub fn detector(&self, kind: DetectorKind) -> Option<&DetectorStats> {
        self.stats.iter().find(|s| s.detector.kind == kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerRun {
    pub axis: SweepAxis,
    pub points: Vec<BerPoint>,
    pub elapsed: Duration,
}

impl BerRun {
    pub fn table(&self) -> Table {
        let mut header = vec![self.axis.name().to_string(), "trials".into(), "estimation_failures".into()];
        if let Some(p) = self.points.first() {
            for s in &p.stats {
                let d = s.detector.kind.short_name();
                for col in ["ber", "ber_lo", "ber_hi", "bits", "packet_error_rate", "efficiency"] {
                    header.push(format!("{col}_{d}"));
                }
            }
        }
        let mut table = Table::new(header);
        for p in &self.points {
            let mut row = vec![sci(p.axis_value), int(p.trials), int(p.estimation_failures)];
            for s in &p.stats {
                let (lo, hi) = s.interval();
                row.extend([
                    sci(s.ber()),
                    sci(lo),
                    sci(hi),
                    int(s.bits),
                    sci(s.packet_error_rate()),
                    sci(s.efficiency(p.block_len, p.k_tot)),
                ]);
            }
            table.rows.push(row);
        }
        table
    }
}

/// Everything a trial needs at one sweep point; read-only during the run.
struct BlockContext {
    cfg: ExperimentConfig,
    scenario: Scenario,
    n: usize,
    k: usize,
    training: Option<TrainingSet>,
    receivers: Vec<DetectorConfig>,
    /// Equalizers on the true model, for known CSI.
    known: Vec<Option<Equalizer>>,
    estimate: bool,
}

struct TrialOutcome {
    estimation_failed: bool,
    packets: Vec<PacketOutcome>,
}

impl BlockContext {
    fn new(cfg: &ExperimentConfig, receivers: Vec<DetectorConfig>, cache: &mut DesignCache) -> Result<Self> {
        ensure_causal(cfg.diffusion.t_int, cfg.d, cfg.diffusion.d_coef)?;
        let scenario = Scenario::new(cfg)?;
        let n = cfg.block_symbols()?;
        let k = cfg.training_symbols()?;
        if k >= n {
            return Err(Error::Config(format!("k_tot {} must be below block_len {}", cfg.k_tot, cfg.block_len)));
        }
        let estimate = cfg.csi == Csi::Estimated;
        if estimate && k == 0 {
            return Err(Error::Config("estimated CSI needs k_tot > 0".into()));
        }
        let training = if k > 0 { Some(cache.training(cfg, &scenario.model, k)?) } else { None };
        let known = receivers
            .iter()
            .map(|r| Equalizer::new(scenario.model.clone(), *r).ok())
            .collect();
        Ok(Self { cfg: cfg.clone(), scenario, n, k, training, receivers, known, estimate })
    }

    fn step_of(&self, k: usize) -> usize {
        if self.cfg.mobility.is_static() {
            0
        } else {
            (k as f64 * self.cfg.diffusion.t_int / self.cfg.mobility.t_c + 1e-9).floor() as usize
        }
    }

    /// Channel per coherence period. Motion has its own generator so bits and
    /// counts stay common across mobility settings. When `T_c` is a whole
    /// number of bit intervals each step is the sum of per-interval
    /// increments, which couples paths across different `T_c`.
    fn channels(&self, rng: &mut ChaCha8Rng) -> Result<Vec<CirTaps>> {
        let mut motion = ChaCha8Rng::from_rng(rng);
        let last = self.step_of(self.n - 1);
        let mut out = Vec::with_capacity(last + 1);
        out.push(self.scenario.sim.clone());
        let mobility = self.cfg.mobility;
        let t_int = self.cfg.diffusion.t_int;
        let ratio = mobility.t_c / t_int;
        let (fine, per_step) = if ratio >= 1.0 && (ratio - ratio.round()).abs() < 1e-9 * ratio {
            (MobilityParams { t_c: t_int, ..mobility }, ratio.round() as usize)
        } else {
            (mobility, 1)
        };
        let mut topology = self.scenario.topology.clone();
        for _ in 0..last {
            for _ in 0..per_step {
                topology = brownian_step(&topology, &fine, &mut motion);
            }
            out.push(self.scenario.sim_at(&topology)?);
        }
        Ok(out)
    }

    fn run_trial(&self, trial: u64) -> Result<TrialOutcome> {
        let mut rng = trial_rng(self.cfg.seed, trial);
        let cfg = &self.cfg;
        let mut x = random_block(cfg.m, self.n, cfg.diffusion.p_one, &mut rng);
        if let Some(t) = &self.training {
            for j in 0..cfg.m {
                for (kk, &b) in t.sequences().row(j).iter().enumerate() {
                    x.set(j, kk, b);
                }
            }
        }
        let channels = self.channels(&mut rng)?;
        let y = synthesize(&channels, |k| self.step_of(k), &x, cfg.deterministic, &mut rng)?;

        let payload_bits = ((self.n - self.k) * cfg.m) as u64;
        let failed = |n: usize| TrialOutcome {
            estimation_failed: true,
            packets: vec![PacketOutcome { errors: payload_bits, bits: payload_bits, equalizer_failed: true }; n],
        };

        let estimated = if self.estimate {
            let t = self.training.as_ref().expect("training present when estimating");
            let l = cfg.diffusion.l_taps;
            let obs = ObservationBlock::new(y.columns(l - 1, self.k - l + 1).into_owned())?;
            let report = match cfg.estimator {
                EstimatorKind::Ls => ls_estimate(&obs, t),
                EstimatorKind::Ml => ml_estimate(&obs, t, &cfg.ml),
            };
            match report {
                Ok(r) => Some(r.c_hat),
                Err(Error::Estimability(_)) => return Ok(failed(self.receivers.len())),
                Err(e) => return Err(e),
            }
        } else {
            None
        };

        let state = match &self.training {
            Some(t) => DecodeState::from_tail(t.sequences(), cfg.diffusion.l_taps),
            None => DecodeState::new(cfg.m, cfg.diffusion.l_taps),
        };
        let y_payload = y.columns(self.k, self.n - self.k).into_owned();
        let truth = x.slice(self.k, self.n);
        let mut packets = Vec::with_capacity(self.receivers.len());
        for (r, known) in self.receivers.iter().zip(&self.known) {
            let eq = match &estimated {
                Some(c) => Equalizer::new(c.clone(), *r).ok(),
                None => known.clone(),
            };
            packets.push(match eq {
                Some(eq) => {
                    let decided = eq.decode(&y_payload, state.clone())?;
                    PacketOutcome {
                        errors: decided.hamming(&truth) as u64,
                        bits: payload_bits,
                        equalizer_failed: false,
                    }
                }
                None => PacketOutcome { errors: payload_bits, bits: payload_bits, equalizer_failed: true },
            });
        }
        Ok(TrialOutcome { estimation_failed: false, packets })
    }
}

/// Runs blocks until every receiver's BER interval is tight enough or the
/// trial cap is reached. The stopping rule only looks at counts, so the
/// outcome is independent of the worker count.
fn run_point(
    cfg: &ExperimentConfig,
    axis_value: f64,
    receivers: Vec<DetectorConfig>,
    cache: &mut DesignCache,
) -> Result<BerPoint> {
    let ctx = BlockContext::new(cfg, receivers, cache)?;
    let mut point = BerPoint {
        axis_value,
        block_len: cfg.block_len,
        k_tot: cfg.k_tot,
        trials: 0,
        estimation_failures: 0,
        stats: ctx.receivers.iter().map(|r| DetectorStats::new(*r)).collect(),
    };
    let cap = cfg.max_trials.max(cfg.trials) as u64;
    let mut target = cfg.trials as u64;
    loop {
        let outcomes = run_parallel(cfg.workers, point.trials..target, |t| ctx.run_trial(t))?;
        for o in outcomes {
            point.estimation_failures += u64::from(o.estimation_failed);
            for (s, p) in point.stats.iter_mut().zip(o.packets) {
                s.errors += p.errors;
                s.bits += p.bits;
                s.packets += 1;
                s.failed_packets += u64::from(p.errors > 0);
                s.equalizer_failures += u64::from(p.equalizer_failed);
            }
        }
        point.trials = target;
        let done = point.stats.iter().all(|s| s.converged(cfg.target_rel_halfwidth));
        if done || target >= cap {
            return Ok(point);
        }
        target = (target * 2).min(cap);
    }
}

fn receivers_of(cfg: &ExperimentConfig) -> Vec<DetectorConfig> {
    cfg.detectors.iter().map(|&k| cfg.detector(k)).collect()
}

fn ber_run(cfg: &ExperimentConfig, fallback: SweepAxis, prepare: impl Fn(&mut ExperimentConfig)) -> Result<BerRun> {
    let start = Instant::now();
    let (axis, values) = cfg.sweep_points(fallback);
    let mut cache = DesignCache::default();
    let mut points = Vec::with_capacity(values.len());
    for v in values {
        let mut c = cfg.with(axis, v)?;
        prepare(&mut c);
        points.push(run_point(&c, v, receivers_of(&c), &mut cache)?);
    }
    Ok(BerRun { axis, points, elapsed: start.elapsed() })
}

/// BER of every configured detector along the sweep axis, with true or
/// estimated CSI as configured.
pub fn run_ber_sweep(cfg: &ExperimentConfig) -> Result<BerRun> {
    ber_run(cfg, SweepAxis::D, |_| {})
}

/// Block-type communication: every block starts from the nominal layout, the
/// devices move once per `T_c`, the channel is estimated from the `K_tot`
/// pilot prefix and the payload is decoded with that estimate. `K_tot = 0`
/// degenerates to known CSI.
pub fn run_block_protocol(cfg: &ExperimentConfig) -> Result<BerRun> {
    ber_run(cfg, SweepAxis::KTot, |c| {
        c.csi = if c.k_tot > 0 { Csi::Estimated } else { Csi::True };
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdSearch {
    pub kind: DetectorKind,
    pub points: Vec<DetectorStats>,
    pub trials: u64,
    pub best: f64,
}

impl ThresholdSearch {
    pub fn table(&self) -> Table {
        let mut table = Table::new(
            ["threshold", "trials", "ber", "ber_lo", "ber_hi", "bits"].map(String::from).to_vec(),
        );
        for s in &self.points {
            let (lo, hi) = s.interval();
            table.rows.push(vec![
                sci(s.detector.threshold),
                int(self.trials),
                sci(s.ber()),
                sci(lo),
                sci(hi),
                int(s.bits),
            ]);
        }
        table
    }
}

/// BER-minimising threshold over `grid` for the first thresholded detector
/// (ZF unless MMSE comes first). Every threshold sees the same blocks; ties
/// go to the smallest threshold.
pub fn run_threshold_search(cfg: &ExperimentConfig, grid: &[f64]) -> Result<ThresholdSearch> {
    if grid.is_empty() || grid.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
        return Err(Error::Config("threshold grid must be non-empty and inside (0, 1)".into()));
    }
    let kind = cfg
        .detectors
        .iter()
        .copied()
        .find(|k| *k != DetectorKind::LsDfe)
        .unwrap_or(DetectorKind::ZfDfe);
    let mut sorted = grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let receivers = sorted
        .iter()
        .map(|&xi| DetectorConfig { threshold: xi, ..cfg.detector(kind) })
        .collect();
    let point = run_point(cfg, cfg.threshold, receivers, &mut DesignCache::default())?;
    let mut best = &point.stats[0];
    for s in &point.stats[1..] {
        if s.ber() < best.ber() {
            best = s;
        }
    }
    Ok(ThresholdSearch { kind, best: best.detector.threshold, trials: point.trials, points: point.stats })
}

/// Squared errors of (ML, LS), `None` where the estimator failed.
type Scores = (Option<f64>, Option<f64>);

#[derive(Debug, Clone, PartialEq)]
pub struct MsePoint {
    pub axis_value: f64,
    pub k_tot: usize,
    pub trials: u64,
    /// Mean `‖Ĉ − C̄‖²` over the trials where the estimator succeeded.
    pub mse_ml: f64,
    pub mse_ls: f64,
    pub crb: f64,
    pub failures_ml: u64,
    pub failures_ls: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRun {
    pub axis: SweepAxis,
    pub points: Vec<MsePoint>,
    pub elapsed: Duration,
}

impl MseRun {
    pub fn table(&self) -> Table {
        let mut header: Vec<String> = vec![self.axis.name().into()];
        header.extend(
            [
                "trials", "mse_ml_db", "mse_ls_db", "crb_db", "mse_ml", "mse_ls", "crb", "failures_ml", "failures_ls",
            ]
            .map(String::from),
        );
        let mut table = Table::new(header);
        for p in &self.points {
            table.rows.push(vec![
                sci(p.axis_value),
                int(p.trials),
                sci(to_db(p.mse_ml)),
                sci(to_db(p.mse_ls)),
                sci(to_db(p.crb)),
                sci(p.mse_ml),
                sci(p.mse_ls),
                sci(p.crb),
                int(p.failures_ml),
                int(p.failures_ls),
            ]);
        }
        table
    }
}

/// Channel estimation error of ML and LS against the CRB. Training
/// observations come from the simulated channel over a silent history; the
/// reference is the detector's `L`-tap model.
pub fn run_mse_sweep(cfg: &ExperimentConfig) -> Result<MseRun> {
    let start = Instant::now();
    let (axis, values) = cfg.sweep_points(SweepAxis::KTot);
    let mut cache = DesignCache::default();
    let mut points = Vec::with_capacity(values.len());
    for v in values {
        let c = cfg.with(axis, v)?;
        let scenario = Scenario::new(&c)?;
        let k = c.training_symbols()?;
        let training = cache.training(&c, &scenario.model, k)?;
        let l = c.diffusion.l_taps;
        if k < l {
            return Err(Error::Config(format!("{k} training symbols cannot identify {l} taps")));
        }
        let bound = crb(&scenario.model, &training)?;
        let model_mean = mean_output(&scenario.model, training.conv())?;
        let trial = |t: u64| -> Result<Scores> {
            let mut rng = trial_rng(c.seed, t);
            let y = match c.sim_channel {
                SimChannel::Model => model_mean.clone(),
                SimChannel::Tail => {
                    let full = synthesize(std::slice::from_ref(&scenario.sim), |_| 0, training.sequences(), true, &mut rng)?;
                    full.columns(l - 1, k - l + 1).into_owned()
                }
            };
            let y = if c.deterministic {
                y
            } else {
                let mut out = y.clone();
                for v in out.iter_mut() {
                    *v = sample_poisson(*v, &mut rng)? as f64;
                }
                out
            };
            let obs = ObservationBlock::new(y)?;
            let score = |r: Result<crate::estimation::EstimateReport>| match r {
                Ok(r) => Ok(Some(squared_error(&r.c_hat, &scenario.model))),
                Err(Error::Estimability(_)) => Ok(None),
                Err(e) => Err(e),
            };
            Ok((score(ml_estimate(&obs, &training, &c.ml))?, score(ls_estimate(&obs, &training))?))
        };
        let outcomes = run_parallel(c.workers, 0..c.trials as u64, trial)?;
        let mean = |pick: fn(&Scores) -> Option<f64>| {
            let vals: Vec<f64> = outcomes.iter().filter_map(pick).collect();
            let failures = (outcomes.len() - vals.len()) as u64;
            let mean = if vals.is_empty() { f64::NAN } else { vals.iter().sum::<f64>() / vals.len() as f64 };
            (mean, failures)
        };
        let (mse_ml, failures_ml) = mean(|o| o.0);
        let (mse_ls, failures_ls) = mean(|o| o.1);
        points.push(MsePoint {
            axis_value: v,
            k_tot: c.k_tot,
            trials: c.trials as u64,
            mse_ml,
            mse_ls,
            crb: bound,
            failures_ml,
            failures_ls,
        });
    }
    Ok(MseRun { axis, points, elapsed: start.elapsed() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferencePoint {
    pub axis_value: f64,
    pub metrics: Vec<(OffsetMode, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterferenceRun {
    pub axis: SweepAxis,
    pub points: Vec<InterferencePoint>,
}

impl InterferenceRun {
    pub fn table(&self) -> Table {
        let mut header = vec![self.axis.name().to_string()];
        if let Some(p) = self.points.first() {
            header.extend(p.metrics.iter().map(|(mode, _)| format!("metric_mode{mode}")));
        }
        let mut table = Table::new(header);
        for p in &self.points {
            let mut row = vec![sci(p.axis_value)];
            row.extend(p.metrics.iter().map(|(_, v)| sci(*v)));
            table.rows.push(row);
        }
        table
    }
}

/// Maximum normalised mean interference of the `L`-tap model, per offset
/// mode. Staggered offsets are included when `M = 4`.
pub fn run_interference_sweep(cfg: &ExperimentConfig) -> Result<InterferenceRun> {
    let (axis, values) = cfg.sweep_points(SweepAxis::H);
    let mut modes = vec![OffsetMode::Simultaneous, OffsetMode::Alternating];
    if cfg.m == 4 {
        modes.push(OffsetMode::Staggered);
    }
    let mut points = Vec::with_capacity(values.len());
    for v in values {
        let mut c = cfg.with(axis, v)?;
        let mut metrics = Vec::with_capacity(modes.len());
        for &mode in &modes {
            c.offset_mode = mode;
            metrics.push((mode, Scenario::new(&c)?.model.interference_metric()));
        }
        points.push(InterferencePoint { axis_value: v, metrics });
    }
    Ok(InterferenceRun { axis, points })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignPoint {
    pub k1: usize,
    pub crb: f64,
    pub training: TrainingSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignRun {
    pub points: Vec<DesignPoint>,
}

impl DesignRun {
    pub fn table(&self) -> Table {
        let m = self.points.first().map_or(0, |p| p.training.m());
        let mut header: Vec<String> = ["k1", "crb", "crb_db"].map(String::from).to_vec();
        header.extend((1..=m).map(|j| format!("sequence_{j}")));
        let mut table = Table::new(header);
        for p in &self.points {
            let mut row = vec![p.k1.to_string(), sci(p.crb), sci(to_db(p.crb))];
            for j in 0..p.training.m() {
                row.push(p.training.sequences().row(j).iter().map(|b| char::from(b'0' + b)).collect());
            }
            table.rows.push(row);
        }
        table
    }

    /// Training file text of the last design.
    pub fn training_text(&self) -> String {
        let mut out = String::new();
        if let Some(p) = self.points.last() {
            let _ = writeln!(out, "# k1 = {}, CRB = {:e}", p.k1, p.crb);
            out.push_str(&p.training.to_text());
        }
        out
    }
}

/// CRB-minimising pilot design for each `k1` along the sweep (or `cfg.k1`).
pub fn run_design_training(cfg: &ExperimentConfig) -> Result<DesignRun> {
    let (axis, values) = cfg.sweep_points(SweepAxis::K1);
    let mut points = Vec::with_capacity(values.len());
    for v in values {
        let c = cfg.with(axis, v)?;
        let scenario = Scenario::new(&c)?;
        let training =
            design_training(c.k1, c.m, c.diffusion.l_taps, &scenario.model, &c.training_constraints())?;
        let bound = crb(&scenario.model, &training)?;
        points.push(DesignPoint { k1: c.k1, crb: bound, training });
    }
    Ok(DesignRun { points })
}
