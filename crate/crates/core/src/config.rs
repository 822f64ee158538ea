//! Experiment configuration and its flat `key = value` text form.
//!
//! One assignment per line, `#` starts a comment, unknown keys are errors.
//! All physical quantities are SI. Keys:
//!
//! | key | meaning | default |
//! |---|---|---|
//! | `m` | transmitter/receiver pairs | 2 |
//! | `d` | Tx-Rx distance, m | 400e-9 |
//! | `h` | spacing between adjacent gates, m | 200e-9 |
//! | `n_release` | molecules per pulse | 1e5 |
//! | `d_coef` | molecule diffusion coefficient, m²/s | 1e-9 |
//! | `rx_radius` | receiver radius, m | 50e-9 |
//! | `t_int` | bit interval, s | 0.2e-3 |
//! | `l_taps` | modeled taps `L` | 3 |
//! | `l_prime` | simulated taps `L'` | 10 |
//! | `p_one` | probability of a one | 0.5 |
//! | `v_ex_fraction` | external noise relative to `c̄_ii[0]` | 0.05 |
//! | `offset_mode` | 1 simultaneous, 2 alternating, 3 staggered | 1 |
//! | `sim_channel` | `tail` (L' taps) or `model` (L taps plus noise mean) | tail |
//! | `deterministic` | replace Poisson draws by their means | false |
//! | `d_x` | transceiver diffusion coefficient, m²/s | 0 |
//! | `t_c` | coherence time, s | 2e-3 |
//! | `r_x` | transceiver radius, m; sets `d_x` by Stokes-Einstein | unset |
//! | `viscosity`, `temperature` | for `r_x` | 1e-3, 298 |
//! | `detectors` | comma list of `zf`, `mmse`, `ls` | zf,mmse,ls |
//! | `threshold` | ZF/MMSE decision threshold | 0.4 |
//! | `csi` | `true` or `estimated` | true |
//! | `estimator` | `ls` or `ml` | ls |
//! | `k1` | designed base training length | 16 |
//! | `k_tot` | training bits per block, all transmitters | 0 |
//! | `beam` | design beam width | 64 |
//! | `training_file` | base training sequences, one 0/1 line per transmitter | unset |
//! | `block_len` | bits per block `B`, all transmitters | 600 |
//! | `trials` | initial blocks per point | 1000 |
//! | `max_trials` | trial cap | 100000 |
//! | `target_rel_halfwidth` | stop when every 95% half-width is below this fraction of its BER | 0.2 |
//! | `seed` | 64-bit seed | 1 |
//! | `workers` | worker threads, 0 for all cores | 0 |
//! | `sweep_axis` | one of [`SweepAxis`] | none |
//! | `sweep_values` | comma list | none |
//! | `threshold_grid` | comma list in (0, 1) | 0.1,0.15,…,0.9 |
//! | `ml_tol`, `ml_max_iter` | ML stopping rule | 1e-9, 10000 |

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::channel::DiffusionParams;
use crate::equalization::{DetectorConfig, DetectorKind};
use crate::error::{Error, Result};
use crate::estimation::{MlOptions, TrainingConstraints};
use crate::geometry::{stokes_einstein, MobilityParams, ROOM_TEMPERATURE, WATER_VISCOSITY};
use crate::mimo::OffsetMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimChannel {
    /// All `L'` taps are simulated explicitly, the noise mean is external only.
    Tail,
    /// Counts follow the detector's own `L`-tap model including truncation noise.
    Model,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Csi {
    True,
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimatorKind {
    Ls,
    Ml,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepAxis {
    D,
    H,
    NRelease,
    TInt,
    KTot,
    BlockLen,
    DX,
    TC,
    K1,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            Self::D => "d",
            Self::H => "h",
            Self::NRelease => "n_release",
            Self::TInt => "t_int",
            Self::KTot => "k_tot",
            Self::BlockLen => "block_len",
            Self::DX => "d_x",
            Self::TC => "t_c",
            Self::K1 => "k1",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim() {
            "d" => Self::D,
            "h" => Self::H,
            "n_release" | "n" => Self::NRelease,
            "t_int" => Self::TInt,
            "k_tot" => Self::KTot,
            "block_len" | "b" => Self::BlockLen,
            "d_x" => Self::DX,
            "t_c" => Self::TC,
            "k1" => Self::K1,
            other => return Err(Error::Config(format!("unknown sweep axis {other:?}"))),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub m: usize,
    pub d: f64,
    pub h: f64,
    pub diffusion: DiffusionParams,
    pub mobility: MobilityParams,
    pub offset_mode: OffsetMode,
    pub sim_channel: SimChannel,
    pub deterministic: bool,
    pub detectors: Vec<DetectorKind>,
    pub threshold: f64,
    pub csi: Csi,
    pub estimator: EstimatorKind,
    pub k1: usize,
    pub k_tot: usize,
    pub beam: usize,
    pub training_file: Option<PathBuf>,
    pub block_len: usize,
    pub trials: usize,
    pub max_trials: usize,
    pub target_rel_halfwidth: f64,
    pub seed: u64,
    pub workers: usize,
    pub sweep: Option<Sweep>,
    pub threshold_grid: Vec<f64>,
    pub ml: MlOptions,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            m: 2,
            d: 400e-9,
            h: 200e-9,
            diffusion: DiffusionParams::default(),
            mobility: MobilityParams::fixed(2e-3),
            offset_mode: OffsetMode::Simultaneous,
            sim_channel: SimChannel::Tail,
            deterministic: false,
            detectors: DetectorKind::ALL.to_vec(),
            threshold: 0.4,
            csi: Csi::True,
            estimator: EstimatorKind::Ls,
            k1: 16,
            k_tot: 0,
            beam: 64,
            training_file: None,
            block_len: 600,
            trials: 1000,
            max_trials: 100_000,
            target_rel_halfwidth: 0.2,
            seed: 1,
            workers: 0,
            sweep: None,
            threshold_grid: (0..17).map(|i| (10 + 5 * i) as f64 / 100.0).collect(),
            ml: MlOptions::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("bad value for {key}: {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad value for {key}: {value:?}"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s.trim()))
        .collect()
}

impl ExperimentConfig {
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut axis = None;
        let mut values = None;
        let mut r_x = None;
        let mut viscosity = WATER_VISCOSITY;
        let mut temperature = ROOM_TEMPERATURE;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "m" => cfg.m = parse(key, value)?,
                "d" => cfg.d = parse(key, value)?,
                "h" => cfg.h = parse(key, value)?,
                "n_release" => cfg.diffusion.n_release = parse(key, value)?,
                "d_coef" => cfg.diffusion.d_coef = parse(key, value)?,
                "rx_radius" => cfg.diffusion.rx_radius = parse(key, value)?,
                "t_int" => cfg.diffusion.t_int = parse(key, value)?,
                "l_taps" => cfg.diffusion.l_taps = parse(key, value)?,
                "l_prime" => cfg.diffusion.l_prime = parse(key, value)?,
                "p_one" => cfg.diffusion.p_one = parse(key, value)?,
                "v_ex_fraction" => cfg.diffusion.v_ex_fraction = parse(key, value)?,
                "offset_mode" => cfg.offset_mode = value.parse()?,
                "sim_channel" => {
                    cfg.sim_channel = match value {
                        "tail" => SimChannel::Tail,
                        "model" => SimChannel::Model,
                        _ => return Err(Error::Config(format!("bad sim_channel {value:?}"))),
                    }
                }
                "deterministic" => cfg.deterministic = parse_bool(key, value)?,
                "d_x" => cfg.mobility.d_x = parse(key, value)?,
                "t_c" => cfg.mobility.t_c = parse(key, value)?,
                "r_x" => r_x = Some(parse::<f64>(key, value)?),
                "viscosity" => viscosity = parse(key, value)?,
                "temperature" => temperature = parse(key, value)?,
                "detectors" => {
                    cfg.detectors = value
                        .split(',')
                        .filter(|s| !s.trim().is_empty())
                        .map(str::parse)
                        .collect::<Result<_>>()?
                }
                "threshold" => cfg.threshold = parse(key, value)?,
                "csi" => {
                    cfg.csi = match value {
                        "true" | "known" => Csi::True,
                        "estimated" => Csi::Estimated,
                        _ => return Err(Error::Config(format!("bad csi {value:?}"))),
                    }
                }
                "estimator" => {
                    cfg.estimator = match value {
                        "ls" => EstimatorKind::Ls,
                        "ml" => EstimatorKind::Ml,
                        _ => return Err(Error::Config(format!("bad estimator {value:?}"))),
                    }
                }
                "k1" => cfg.k1 = parse(key, value)?,
                "k_tot" => cfg.k_tot = parse(key, value)?,
                "beam" => cfg.beam = parse(key, value)?,
                "training_file" => cfg.training_file = Some(PathBuf::from(value)),
                "block_len" => cfg.block_len = parse(key, value)?,
                "trials" => cfg.trials = parse(key, value)?,
                "max_trials" => cfg.max_trials = parse(key, value)?,
                "target_rel_halfwidth" => cfg.target_rel_halfwidth = parse(key, value)?,
                "seed" => cfg.seed = parse(key, value)?,
                "workers" => cfg.workers = parse(key, value)?,
                "sweep_axis" => axis = Some(value.parse::<SweepAxis>()?),
                "sweep_values" => values = Some(parse_list(key, value)?),
                "threshold_grid" => cfg.threshold_grid = parse_list(key, value)?,
                "ml_tol" => cfg.ml.tol = parse(key, value)?,
                "ml_max_iter" => cfg.ml.max_iter = parse(key, value)?,
                other => return Err(Error::Config(format!("line {}: unknown key {other:?}", n + 1))),
            }
        }
        if let Some(r) = r_x {
            cfg.mobility.d_x = stokes_einstein(r, viscosity, temperature)?;
            cfg.mobility.r_x = Some(r);
        }
        cfg.sweep = match (axis, values) {
            (Some(axis), Some(values)) => Some(Sweep { axis, values }),
            (None, None) => None,
            _ => return Err(Error::Config("sweep_axis and sweep_values go together".into())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_text(&text)?;
        // relative training paths are taken from the config's directory
        if let (Some(tf), Some(dir)) = (&cfg.training_file, path.parent()) {
            if tf.is_relative() {
                cfg.training_file = Some(dir.join(tf));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.diffusion.validate()?;
        self.mobility.validate()?;
        if self.m == 0 {
            return Err(Error::Config("m must be at least 1".into()));
        }
        if !(self.d > 0.0 && self.h > 0.0) {
            return Err(Error::Config("d and h must be positive".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.detectors.is_empty() {
            return Err(Error::Config("no detectors configured".into()));
        }
        if !(self.target_rel_halfwidth > 0.0) {
            return Err(Error::Config("target_rel_halfwidth must be positive".into()));
        }
        if self.threshold_grid.iter().any(|&x| !(x > 0.0 && x < 1.0)) {
            return Err(Error::Config("threshold_grid must lie in (0, 1)".into()));
        }
        if self.k1 == 0 {
            return Err(Error::Config("k1 must be positive".into()));
        }
        self.detector(DetectorKind::ZfDfe).validate()
    }

    pub fn detector(&self, kind: DetectorKind) -> DetectorConfig {
        DetectorConfig { kind, threshold: self.threshold, p_one: self.diffusion.p_one }
    }

    pub fn training_constraints(&self) -> TrainingConstraints {
        TrainingConstraints { beam: self.beam, ..TrainingConstraints::default() }
    }

    /// Symbol intervals per block, `B / M`.
    pub fn block_symbols(&self) -> Result<usize> {
        if !self.block_len.is_multiple_of(self.m) {
            return Err(Error::Config(format!("block_len {} is not a multiple of M = {}", self.block_len, self.m)));
        }
        Ok(self.block_len / self.m)
    }

    /// Training symbols per transmitter, `K_tot / M`.
    pub fn training_symbols(&self) -> Result<usize> {
        if !self.k_tot.is_multiple_of(self.m) {
            return Err(Error::Config(format!("k_tot {} is not a multiple of M = {}", self.k_tot, self.m)));
        }
        Ok(self.k_tot / self.m)
    }

    /// Sweep values, or the single current value of `axis` when no sweep is set.
    pub fn sweep_points(&self, fallback: SweepAxis) -> (SweepAxis, Vec<f64>) {
        match &self.sweep {
            Some(s) => (s.axis, s.values.clone()),
            None => (fallback, vec![self.get(fallback)]),
        }
    }

    pub fn get(&self, axis: SweepAxis) -> f64 {
        match axis {
            SweepAxis::D => self.d,
            SweepAxis::H => self.h,
            SweepAxis::NRelease => self.diffusion.n_release,
            SweepAxis::TInt => self.diffusion.t_int,
            SweepAxis::KTot => self.k_tot as f64,
            SweepAxis::BlockLen => self.block_len as f64,
            SweepAxis::DX => self.mobility.d_x,
            SweepAxis::TC => self.mobility.t_c,
            SweepAxis::K1 => self.k1 as f64,
        }
    }

    /// Copy with `axis` set to `value`. Changing `t_int` rescales `l_prime`
    /// so the simulated horizon `L'·T_int` stays fixed.
    pub fn with(&self, axis: SweepAxis, value: f64) -> Result<Self> {
        let mut cfg = self.clone();
        let count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::Config(format!("{axis} needs a non-negative integer, got {v}")))
            }
        };
        match axis {
            SweepAxis::D => cfg.d = value,
            SweepAxis::H => cfg.h = value,
            SweepAxis::NRelease => cfg.diffusion.n_release = value,
            SweepAxis::TInt => {
                let horizon = self.diffusion.l_prime as f64 * self.diffusion.t_int;
                cfg.diffusion.t_int = value;
                cfg.diffusion.l_prime = ((horizon / value - 1e-9).ceil() as usize).max(cfg.diffusion.l_taps);
            }
            SweepAxis::KTot => cfg.k_tot = count(value)?,
            SweepAxis::BlockLen => cfg.block_len = count(value)?,
            SweepAxis::DX => cfg.mobility.d_x = value,
            SweepAxis::TC => cfg.mobility.t_c = value,
            SweepAxis::K1 => cfg.k1 = count(value)?,
        }
        cfg.sweep = None;
        cfg.validate()?;
        Ok(cfg)
    }
}
