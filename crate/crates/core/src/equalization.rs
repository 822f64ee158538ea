//! Decision feedback equalization in the mean and one-shot detection.
//!
//! The feedback stage subtracts the expected contribution of past decisions
//! and of the noise, `Σ_{ℓ≥1} C̄[ℓ]·x̂[k−ℓ] + v̄`, leaving
//! `y*[k] = C̄[0]·x[k] + ω[k]`. The current-symbol crosstalk in `C̄[0]` is
//! then resolved either by a linear filter and a threshold (ZF, MMSE) or by
//! an exhaustive search over the `2^M` binary hypotheses (LS).

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::channel::{peak_time, CirTaps};
use crate::error::{Error, Result};
use crate::mimo::SymbolBlock;

/// Condition number above which `C̄[0]` is treated as singular.
pub const MAX_CONDITION: f64 = 1e12;
/// Largest `M` accepted by the exhaustive LS detector.
pub const DEFAULT_EXHAUSTIVE_LIMIT: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DetectorKind {
    ZfDfe,
    MmseDfe,
    LsDfe,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 3] = [Self::ZfDfe, Self::MmseDfe, Self::LsDfe];

    pub fn short_name(&self) -> &'static str {
        match self {
            Self::ZfDfe => "zf",
            Self::MmseDfe => "mmse",
            Self::LsDfe => "ls",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "zf" | "zf-dfe" => Ok(Self::ZfDfe),
            "mmse" | "mmse-dfe" => Ok(Self::MmseDfe),
            "ls" | "ls-dfe" => Ok(Self::LsDfe),
            other => Err(Error::Config(format!("unknown detector {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    /// Decision threshold `ξ` of the ZF and MMSE detectors.
    pub threshold: f64,
    /// Prior `p` used for the MMSE noise covariance.
    pub p_one: f64,
}

impl DetectorConfig {
    pub fn new(kind: DetectorKind) -> Self {
        Self { kind, threshold: 0.4, p_one: 0.5 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold must be in (0, 1), got {}", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.p_one) {
            return Err(Error::Config(format!("p_one must be in [0, 1], got {}", self.p_one)));
        }
        Ok(())
    }
}

/// The last `L−1` decisions, most recent first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodeState {
    history: VecDeque<Vec<u8>>,
    pub k: usize,
}

impl DecodeState {
    /// Silent history.
    pub fn new(m: usize, l_taps: usize) -> Self {
        Self {
            history: (1..l_taps).map(|_| vec![0; m]).collect(),
            k: 0,
        }
    }

    /// Seeds the history with the last `L−1` symbols of a known block,
    /// e.g. the tail of the training sequence.
    pub fn from_tail(known: &SymbolBlock, l_taps: usize) -> Self {
        let n = known.len() as isize;
        Self {
            history: (1..l_taps).map(|l| known.column(n - l as isize)).collect(),
            k: 0,
        }
    }

    /// Decision `x̂[k−ℓ]` for `ℓ ≥ 1`.
    pub fn past(&self, l: usize) -> &[u8] {
        &self.history[l - 1]
    }

    pub fn push(&mut self, decision: Vec<u8>) {
        if !self.history.is_empty() {
            self.history.pop_back();
            self.history.push_front(decision);
        }
        self.k += 1;
    }
}

/// `T_int` must not be shorter than the paired peak time, otherwise the
/// current-symbol tap is not the dominant one and mean feedback is incomplete.
pub fn ensure_causal(t_int: f64, nominal_d: f64, d_coef: f64) -> Result<()> {
    let tau = peak_time(nominal_d, d_coef);
    if t_int < tau {
        return Err(Error::Domain(format!(
            "bit interval {t_int:e} s is shorter than the peak time {tau:e} s"
        )));
    }
    Ok(())
}

/// Unconditional covariance of the Poisson fluctuation, `diag(C̄·P)` with
/// `P = [p, …, p, 1]`: the noise column is always on.
pub fn noise_covariance(cir: &CirTaps, p_one: f64) -> DMatrix<f64> {
    let flat = cir.flat();
    let width = flat.ncols();
    let mut prior = DVector::from_element(width, p_one);
    prior[width - 1] = 1.0;
    DMatrix::from_diagonal(&(flat * prior))
}

/// `y*[k] = y[k] − Σ_{ℓ≥1} C̄[ℓ]·x̂[k−ℓ] − v̄`.
pub fn dfe_feedback(y_k: &[f64], cir: &CirTaps, state: &DecodeState) -> DVector<f64> {
    let m = cir.m();
    let mut out = DVector::from_column_slice(y_k) - cir.noise();
    for l in 1..cir.l_taps() {
        let tap = cir.tap(l);
        for (j, &b) in state.past(l).iter().enumerate() {
            if b == 1 {
                for i in 0..m {
                    out[i] -= tap[(i, j)];
                }
            }
        }
    }
    out
}

pub fn condition_number(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Zero-forcing filter `C̄[0]⁻¹`.
pub fn zf_filter(c0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !c0.is_square() {
        return Err(Error::Size("C̄[0] must be square".into()));
    }
    let cond = condition_number(c0);
    if !(cond <= MAX_CONDITION) {
        return Err(Error::Equalizer(format!("C̄[0] is ill-conditioned (cond = {cond:e})")));
    }
    c0.clone()
        .try_inverse()
        .ok_or_else(|| Error::Equalizer("C̄[0] is singular".into()))
}

/// MMSE filter `C̄[0]ᵀ (C̄[0]C̄[0]ᵀ + C_ω)⁻¹`.
pub fn mmse_filter(c0: &DMatrix<f64>, c_omega: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !c0.is_square() || c_omega.shape() != c0.shape() {
        return Err(Error::Size("C̄[0] and C_ω must be square and of equal size".into()));
    }
    let inner = c0 * c0.transpose() + c_omega;
    let chol = inner
        .cholesky()
        .ok_or_else(|| Error::Equalizer("C̄[0]C̄[0]ᵀ + C_ω is not positive definite".into()))?;
    // inner is symmetric, so C̄[0]ᵀ inner⁻¹ = (inner⁻¹ C̄[0])ᵀ
    Ok(chol.solve(c0).transpose())
}

/// `1` where `x*_i ≥ ξ`.
pub fn threshold_detect(x_star: &[f64], xi: f64) -> Vec<u8> {
    x_star.iter().map(|&x| u8::from(x >= xi)).collect()
}

/// Binary hypothesis number `v`, transmitter 1 as the most significant bit.
fn hypothesis(v: usize, m: usize) -> Vec<u8> {
    (0..m).map(|j| ((v >> (m - 1 - j)) & 1) as u8).collect()
}

/// Exhaustive `argmin_x ‖y* − C̄[0]x‖²` over binary `x`; ties go to the
/// smallest hypothesis number.
pub fn ls_detect(y_star: &[f64], c0: &DMatrix<f64>) -> Result<Vec<u8>> {
    ls_detect_with_limit(y_star, c0, DEFAULT_EXHAUSTIVE_LIMIT)
}

pub fn ls_detect_with_limit(y_star: &[f64], c0: &DMatrix<f64>, limit: usize) -> Result<Vec<u8>> {
    let m = c0.ncols();
    if m > limit {
        return Err(Error::Complexity { m, limit });
    }
    let table = HypothesisTable::new(c0);
    Ok(table.best(y_star))
}

/// Precomputed `C̄[0]·x` for every binary hypothesis.
#[derive(Debug, Clone)]
struct HypothesisTable {
    m: usize,
    predictions: Vec<Vec<f64>>,
}

impl HypothesisTable {
    fn new(c0: &DMatrix<f64>) -> Self {
        let m = c0.ncols();
        let predictions = (0..1usize << m)
            .map(|v| {
                let x = hypothesis(v, m);
                (0..c0.nrows())
                    .map(|i| (0..m).filter(|&j| x[j] == 1).map(|j| c0[(i, j)]).sum())
                    .collect()
            })
            .collect();
        Self { m, predictions }
    }

    fn best(&self, y_star: &[f64]) -> Vec<u8> {
        let mut best = 0;
        let mut best_err = f64::INFINITY;
        for (v, pred) in self.predictions.iter().enumerate() {
            let err: f64 = pred.iter().zip(y_star).map(|(p, y)| (y - p) * (y - p)).sum();
            if err < best_err {
                best_err = err;
                best = v;
            }
        }
        hypothesis(best, self.m)
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Linear(DMatrix<f64>),
    Exhaustive(HypothesisTable),
}

/// A DFE receiver bound to one channel estimate.
#[derive(Debug, Clone)]
pub struct Equalizer {
    cir: CirTaps,
    cfg: DetectorConfig,
    stage: Stage,
}

impl Equalizer {
    pub fn new(cir: CirTaps, cfg: DetectorConfig) -> Result<Self> {
        cfg.validate()?;
        let c0 = cir.tap(0);
        let stage = match cfg.kind {
            DetectorKind::ZfDfe => Stage::Linear(zf_filter(c0)?),
            DetectorKind::MmseDfe => Stage::Linear(mmse_filter(c0, &noise_covariance(&cir, cfg.p_one))?),
            DetectorKind::LsDfe => {
                if cir.m() > DEFAULT_EXHAUSTIVE_LIMIT {
                    return Err(Error::Complexity { m: cir.m(), limit: DEFAULT_EXHAUSTIVE_LIMIT });
                }
                Stage::Exhaustive(HypothesisTable::new(c0))
            }
        };
        Ok(Self { cir, cfg, stage })
    }

    pub fn cir(&self) -> &CirTaps {
        &self.cir
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    /// Decides `x̂[k]` from `y[k]` and records it in `state`.
    pub fn detect(&self, y_k: &[f64], state: &mut DecodeState) -> Vec<u8> {
        let y_star = dfe_feedback(y_k, &self.cir, state);
        let decision = match &self.stage {
            Stage::Linear(t) => threshold_detect((t * y_star).as_slice(), self.cfg.threshold),
            Stage::Exhaustive(table) => table.best(y_star.as_slice()),
        };
        state.push(decision.clone());
        decision
    }

    /// Decodes every column of `y` (one per symbol) in order.
    pub fn decode(&self, y: &DMatrix<f64>, mut state: DecodeState) -> Result<SymbolBlock> {
        if y.nrows() != self.cir.m() {
            return Err(Error::Size(format!("{} receivers for M = {}", y.nrows(), self.cir.m())));
        }
        let mut out = SymbolBlock::zeros(self.cir.m(), y.ncols());
        for (k, col) in y.column_iter().enumerate() {
            let decision = self.detect(col.as_slice(), &mut state);
            for (j, b) in decision.into_iter().enumerate() {
                out.set(j, k, b);
            }
        }
        Ok(out)
    }
}

/// Decodes a whole block of received counts, one column per symbol, starting
/// from a silent history.
pub fn decode_block(y: &DMatrix<f64>, cir: &CirTaps, cfg: &DetectorConfig) -> Result<SymbolBlock> {
    let eq = Equalizer::new(cir.clone(), *cfg)?;
    eq.decode(y, DecodeState::new(cir.m(), cir.l_taps()))
}
