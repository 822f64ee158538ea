//! Training-based estimation of the mean D-MIMO channel.
//!
//! Observations at different receivers are independent Poisson variables, so
//! the log-likelihood separates over receivers: row `i` of `C̄` only enters
//! the counts of `Rx_i`. Every estimator here solves `M` independent row
//! problems of size `ML+1`, and the Fisher information is block diagonal.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::channel::CirTaps;
use crate::error::{Error, Result};
use crate::mimo::{build_conv_matrix, ConvMatrix, SymbolBlock};

/// Molecule counts at the `M` receivers, one column per usable sampling
/// instant (`k ≥ L−1`). Values are counts but stored as reals so that
/// noiseless mean observations can be fed to the same estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationBlock {
    counts: DMatrix<f64>,
}

impl ObservationBlock {
    pub fn new(counts: DMatrix<f64>) -> Result<Self> {
        if counts.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain("observations must be finite and >= 0".into()));
        }
        Ok(Self { counts })
    }

    pub fn from_counts(m: usize, columns: &[Vec<u64>]) -> Result<Self> {
        if columns.iter().any(|c| c.len() != m) {
            return Err(Error::Size(format!("every count vector must have {m} entries")));
        }
        let counts = DMatrix::from_fn(m, columns.len(), |i, k| columns[k][i] as f64);
        Ok(Self { counts })
    }

    pub fn counts(&self) -> &DMatrix<f64> {
        &self.counts
    }

    pub fn m(&self) -> usize {
        self.counts.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.counts.ncols()
    }
}

/// Known pilot symbols and their convolutional matrix `S`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    sequences: SymbolBlock,
    conv: ConvMatrix,
}

impl TrainingSet {
    pub fn new(sequences: SymbolBlock, l_taps: usize) -> Result<Self> {
        let conv = build_conv_matrix(&sequences, l_taps)?;
        Ok(Self { sequences, conv })
    }

    pub fn sequences(&self) -> &SymbolBlock {
        &self.sequences
    }

    pub fn conv(&self) -> &ConvMatrix {
        &self.conv
    }

    pub fn m(&self) -> usize {
        self.sequences.m()
    }

    /// Pilot symbols per transmitter, `K`.
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn l_taps(&self) -> usize {
        self.conv.l_taps()
    }

    /// Total pilot bits over all transmitters, `K_tot = M·K`.
    pub fn k_tot(&self) -> usize {
        self.m() * self.len()
    }

    /// One line of `0`/`1` characters per transmitter.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for j in 0..self.m() {
            for &b in self.sequences.row(j) {
                out.push(if b == 1 { '1' } else { '0' });
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str, l_taps: usize) -> Result<Self> {
        let rows = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| {
                l.chars()
                    .map(|c| match c {
                        '0' => Ok(0u8),
                        '1' => Ok(1u8),
                        other => Err(Error::Config(format!("invalid training symbol {other:?}"))),
                    })
                    .collect::<Result<Vec<u8>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(SymbolBlock::from_rows(&rows)?, l_taps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub c_hat: CirTaps,
    /// `‖Ĉ − C̄‖²` once compared against a known truth.
    pub mse: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EstimateReport {
    pub fn with_truth(mut self, truth: &CirTaps) -> Self {
        self.mse = Some(squared_error(&self.c_hat, truth));
        self
    }
}

pub fn squared_error(estimate: &CirTaps, truth: &CirTaps) -> f64 {
    (estimate.flat() - truth.flat()).norm_squared()
}

fn check_dims(y: &ObservationBlock, c_m: usize, c_l: usize, s: &TrainingSet) -> Result<()> {
    if y.m() != c_m || s.m() != c_m || s.l_taps() != c_l || y.ncols() != s.conv().ncols() {
        return Err(Error::Size(format!(
            "observations {}x{}, CIR M={c_m} L={c_l}, training M={} L={} with {} columns",
            y.m(),
            y.ncols(),
            s.m(),
            s.l_taps(),
            s.conv().ncols()
        )));
    }
    Ok(())
}

/// Poisson log-likelihood of the observations. A zero mean paired with a
/// positive count yields `-inf`.
pub fn log_likelihood(y: &ObservationBlock, c: &CirTaps, s: &TrainingSet) -> Result<f64> {
    check_dims(y, c.m(), c.l_taps(), s)?;
    let means = c.flat() * s.conv().matrix();
    let mut total = 0.0;
    for (&mu, &obs) in means.iter().zip(y.counts().iter()) {
        if mu <= 0.0 {
            if obs > 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            continue;
        }
        total += -mu + obs * mu.ln() - ln_gamma(obs + 1.0);
    }
    Ok(total)
}

/// Fisher information of one receiver row, `Σ_k S[k]S[k]ᵀ / (C̄_i·S[k])`.
pub fn fisher_row(row: &DVector<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = s.nrows();
    let mut fisher = DMatrix::zeros(p, p);
    for col in s.column_iter() {
        let mu = row.dot(&col);
        if !(mu > 0.0) {
            return Err(Error::Estimability(
                "zero expected count makes the Fisher information unbounded".into(),
            ));
        }
        fisher.ger(1.0 / mu, &col, &col, 1.0);
    }
    Ok(fisher)
}

fn trace_of_inverse(fisher: DMatrix<f64>) -> Option<f64> {
    let chol = fisher.cholesky()?;
    let inv = chol.inverse();
    let tr = inv.trace();
    (tr.is_finite() && tr > 0.0).then_some(tr)
}

/// Cramér-Rao bound on the total squared error of any unbiased estimate of
/// `C̄`: the trace of the inverse of the block-diagonal Fisher information.
pub fn crb(c: &CirTaps, s: &TrainingSet) -> Result<f64> {
    if s.m() != c.m() || s.l_taps() != c.l_taps() {
        return Err(Error::Size("training and CIR dimensions differ".into()));
    }
    let flat = c.flat();
    let mut total = 0.0;
    for i in 0..c.m() {
        let row = flat.row(i).transpose();
        let fisher = fisher_row(&row, s.conv().matrix())?;
        total += trace_of_inverse(fisher).ok_or_else(|| {
            Error::Estimability(format!("singular Fisher information for receiver {}", i + 1))
        })?;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOptions {
    /// Stop once the largest update is below `tol` times the largest entry.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for MlOptions {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 10_000 }
    }
}

/// Sparse view of `S`: the excited parameters of every column.
struct Design {
    active: Vec<Vec<usize>>,
    excitation: Vec<f64>,
}

impl Design {
    fn new(s: &DMatrix<f64>) -> Self {
        let active = s
            .column_iter()
            .map(|col| col.iter().enumerate().filter(|(_, &v)| v != 0.0).map(|(p, _)| p).collect())
            .collect();
        let excitation = s.row_iter().map(|r| r.sum()).collect();
        Self { active, excitation }
    }

    fn step(&self, row: &[f64], y: &[f64], next: &mut [f64]) {
        next.fill(0.0);
        for (cols, &obs) in self.active.iter().zip(y) {
            if obs == 0.0 {
                continue;
            }
            let mu: f64 = cols.iter().map(|&p| row[p]).sum();
            if mu <= 0.0 {
                continue;
            }
            let ratio = obs / mu;
            for &p in cols {
                next[p] += ratio;
            }
        }
        for ((n, &c), &e) in next.iter_mut().zip(row).zip(&self.excitation) {
            *n = if e > 0.0 { c * *n / e } else { 0.0 };
        }
    }
}

/// One multiplicative fixed-point update of a receiver row,
/// `c ← c ⊙ [Σ_k (y_k / c·S[k]) S[k]] ⊘ [Σ_k S[k]]`. Binary-plus-one
/// designs are assumed, as produced by [`TrainingSet`].
pub fn fixed_point_step(row: &DVector<f64>, s: &ConvMatrix, y_row: &[f64]) -> DVector<f64> {
    let design = Design::new(s.matrix());
    let mut next = vec![0.0; row.len()];
    design.step(row.as_slice(), y_row, &mut next);
    DVector::from_vec(next)
}

/// Maximum likelihood estimate of `C̄ ≥ 0`.
///
/// Rows are solved independently by the multiplicative fixed point, which
/// keeps every entry non-negative and never decreases the likelihood. The
/// iteration starts from the clipped LS solution, floored to a small
/// positive value since zero entries are fixed points of the update.
pub fn ml_estimate(y: &ObservationBlock, s: &TrainingSet, opts: &MlOptions) -> Result<EstimateReport> {
    let m = s.m();
    let l = s.l_taps();
    check_dims(y, m, l, s)?;
    let start = unconstrained_ls(y, s)?;
    let design = Design::new(s.conv().matrix());
    let p = m * l + 1;
    let mut flat = DMatrix::zeros(m, p);
    let mut iterations = 0;
    let mut converged = true;

    let mut row = vec![0.0; p];
    let mut next = vec![0.0; p];
    for i in 0..m {
        let y_row: Vec<f64> = y.counts().row(i).iter().copied().collect();
        let mean_count = y_row.iter().sum::<f64>() / y_row.len() as f64;
        if mean_count == 0.0 {
            // all-zero counts: the likelihood is maximised at C̄_i = 0
            continue;
        }
        let floor = 1e-3 * mean_count;
        for (r, &v) in row.iter_mut().zip(start.row(i).iter()) {
            *r = v.max(floor);
        }
        let mut row_converged = false;
        let mut it = 0;
        while it < opts.max_iter {
            design.step(&row, &y_row, &mut next);
            it += 1;
            let scale = next.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
            let change = next.iter().zip(&row).fold(0.0f64, |a, (n, o)| a.max((n - o).abs()));
            std::mem::swap(&mut row, &mut next);
            if change <= opts.tol * scale {
                row_converged = true;
                break;
            }
        }
        iterations = iterations.max(it);
        converged &= row_converged;
        for (q, &v) in row.iter().enumerate() {
            flat[(i, q)] = v.max(0.0);
        }
    }
    Ok(EstimateReport {
        c_hat: CirTaps::from_flat(&flat, l)?,
        mse: None,
        iterations,
        converged,
    })
}

/// `Y Sᵀ (S Sᵀ)⁻¹` without clipping.
fn unconstrained_ls(y: &ObservationBlock, s: &TrainingSet) -> Result<DMatrix<f64>> {
    let sm = s.conv().matrix();
    let gram = sm * sm.transpose();
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Estimability("S·Sᵀ is singular".into()))?;
    let rhs = sm * y.counts().transpose();
    Ok(chol.solve(&rhs).transpose())
}

/// Least-squares estimate with negative entries clipped to zero.
pub fn ls_estimate(y: &ObservationBlock, s: &TrainingSet) -> Result<EstimateReport> {
    check_dims(y, s.m(), s.l_taps(), s)?;
    let flat = unconstrained_ls(y, s)?.map(|v| v.max(0.0));
    Ok(EstimateReport {
        c_hat: CirTaps::from_flat(&flat, s.l_taps())?,
        mse: None,
        iterations: 0,
        converged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConstraints {
    /// Defaults to half the sequence length.
    pub max_ones: Option<usize>,
    /// Defaults to `L+1`.
    pub max_zero_run: Option<usize>,
    /// Candidates kept per transmitter before the joint search.
    pub beam: usize,
}

impl Default for TrainingConstraints {
    fn default() -> Self {
        Self { max_ones: None, max_zero_run: None, beam: 64 }
    }
}

/// Hard cap on the number of jointly evaluated beam tuples.
const MAX_BEAM_TUPLES: usize = 1 << 20;
/// Longest sequence the enumerator accepts.
pub const MAX_DESIGN_LEN: usize = 24;

fn bits_of(mask: u32, k1: usize) -> Vec<u8> {
    // most significant bit first, so numeric order is lexicographic order
    (0..k1).map(|k| ((mask >> (k1 - 1 - k)) & 1) as u8).collect()
}

fn feasible(bits: &[u8], max_ones: usize, max_zero_run: usize) -> bool {
    let ones = bits.iter().filter(|&&b| b == 1).count();
    if ones > max_ones {
        return false;
    }
    let mut run = 0;
    for &b in bits {
        run = if b == 0 { run + 1 } else { 0 };
        if run > max_zero_run {
            return false;
        }
    }
    true
}

/// All binary sequences of length `k1` meeting the ones budget and the
/// zero-run limit, in lexicographic order.
pub fn feasible_sequences(k1: usize, max_ones: usize, max_zero_run: usize) -> Vec<Vec<u8>> {
    (0u32..(1u32 << k1))
        .map(|mask| bits_of(mask, k1))
        .filter(|b| feasible(b, max_ones, max_zero_run))
        .collect()
}

fn tuple_crb(prior: &CirTaps, seqs: &[&Vec<u8>], l_taps: usize) -> f64 {
    let rows: Vec<Vec<u8>> = seqs.iter().map(|s| (*s).clone()).collect();
    SymbolBlock::from_rows(&rows)
        .and_then(|b| TrainingSet::new(b, l_taps))
        .and_then(|t| crb(prior, &t))
        .unwrap_or(f64::INFINITY)
}

/// Single-link prior of transmitter `j`: its paired taps and its receiver's noise.
fn single_link(prior: &CirTaps, j: usize) -> Result<CirTaps> {
    let taps = prior
        .taps()
        .iter()
        .map(|t| DMatrix::from_element(1, 1, t[(j, j)]))
        .collect();
    CirTaps::new(taps, DVector::from_element(1, prior.noise()[j]))
}

/// Index of the smallest finite value, first one on ties.
fn argmin(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v.is_finite() && best.is_none_or(|b| v < values[b]) {
            best = Some(i);
        }
    }
    best
}

/// Searches for the `M` pilot sequences of length `k1` that minimise the
/// CRB under `prior`.
///
/// Every transmitter's feasible sequences are ranked by their single-link
/// CRB and the best `beam` are kept. The cross product of the beams is
/// evaluated jointly, then the winning tuple is refined by coordinate
/// descent over the full feasible set until no single replacement lowers
/// the joint CRB. Ties go to the lexicographically smaller tuple.
pub fn design_training(
    k1: usize,
    m: usize,
    l_taps: usize,
    prior: &CirTaps,
    constraints: &TrainingConstraints,
) -> Result<TrainingSet> {
    if prior.m() != m || prior.l_taps() != l_taps {
        return Err(Error::Size("prior CIR does not match M and L".into()));
    }
    if k1 < l_taps || k1 > MAX_DESIGN_LEN {
        return Err(Error::Size(format!(
            "design length must be in [L, {MAX_DESIGN_LEN}], got {k1}"
        )));
    }
    let max_ones = constraints.max_ones.unwrap_or(k1 / 2);
    let max_zero_run = constraints.max_zero_run.unwrap_or(l_taps + 1);
    let candidates = feasible_sequences(k1, max_ones, max_zero_run);
    if candidates.is_empty() {
        return Err(Error::Constraint(format!(
            "length {k1}, at most {max_ones} ones, zero runs at most {max_zero_run}"
        )));
    }

    let beam_width = {
        let mut b = constraints.beam.max(1).min(candidates.len());
        while b > 1 && b.checked_pow(m as u32).is_none_or(|n| n > MAX_BEAM_TUPLES) {
            b -= 1;
        }
        b
    };
    let beams: Vec<Vec<usize>> = (0..m)
        .map(|j| {
            let solo = single_link(prior, j)?;
            let scores: Vec<f64> = candidates
                .par_iter()
                .map(|c| tuple_crb(&solo, &[c], l_taps))
                .collect();
            let mut order: Vec<usize> = (0..candidates.len()).filter(|&i| scores[i].is_finite()).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
            order.truncate(beam_width);
            Ok(order)
        })
        .collect::<Result<_>>()?;

    // cross product of beams in lexicographic order of candidate indices
    let mut tuples: Vec<Vec<usize>> = vec![Vec::new()];
    for beam in &beams {
        let mut sorted = beam.clone();
        sorted.sort_unstable();
        tuples = tuples
            .into_iter()
            .flat_map(|t| {
                sorted.iter().map(move |&c| {
                    let mut n = t.clone();
                    n.push(c);
                    n
                })
            })
            .collect();
    }
    let scores: Vec<f64> = tuples
        .par_iter()
        .map(|t| tuple_crb(prior, &t.iter().map(|&i| &candidates[i]).collect::<Vec<_>>(), l_taps))
        .collect();
    let start = argmin(&scores).ok_or_else(|| {
        Error::Estimability("no beam tuple yields a finite CRB; widen the beam or lengthen k1".into())
    })?;
    let mut best = tuples[start].clone();
    let mut best_score = scores[start];

    loop {
        let mut improved = false;
        for j in 0..m {
            let scores: Vec<f64> = (0..candidates.len())
                .into_par_iter()
                .map(|c| {
                    let mut t = best.clone();
                    t[j] = c;
                    tuple_crb(prior, &t.iter().map(|&i| &candidates[i]).collect::<Vec<_>>(), l_taps)
                })
                .collect();
            if let Some(c) = argmin(&scores) {
                let better = scores[c] < best_score || (scores[c] == best_score && c < best[j]);
                if better && c != best[j] {
                    best[j] = c;
                    best_score = scores[c];
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }

    let rows: Vec<Vec<u8>> = best.iter().map(|&i| candidates[i].clone()).collect();
    TrainingSet::new(SymbolBlock::from_rows(&rows)?, l_taps)
}

/// Repeats every transmitter's pilot sequence `reps` times.
pub fn concat_training(base: &TrainingSet, reps: usize) -> Result<TrainingSet> {
    if reps == 0 {
        return Err(Error::Size("reps must be >= 1".into()));
    }
    let rows: Vec<Vec<u8>> = (0..base.m()).map(|j| base.sequences().row(j).repeat(reps)).collect();
    TrainingSet::new(SymbolBlock::from_rows(&rows)?, base.l_taps())
}

/// Human-readable summary used by the CLI.
pub fn describe_training(t: &TrainingSet, prior: &CirTaps) -> String {
    let mut out = String::new();
    let bound = crb(prior, t).unwrap_or(f64::INFINITY);
    let _ = writeln!(out, "# K = {}, K_tot = {}, CRB = {bound:e}", t.len(), t.k_tot());
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_cir, sample_received, DiffusionParams, OffsetSchedule};
    use crate::geometry::initial_positions;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const S1: [u8; 16] = [1, 1, 1, 0, 0, 0, 0, 1, 0, 1, 0, 1, 1, 0, 0, 1];
    const S2: [u8; 16] = [1, 1, 1, 0, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 1];

    fn reference_cir() -> CirTaps {
        let t = initial_positions(400e-9, 200e-9, 2).unwrap();
        build_cir(&t, &OffsetSchedule::zeros(2), &DiffusionParams::default()).unwrap()
    }

    fn reference_training() -> TrainingSet {
        TrainingSet::new(SymbolBlock::from_rows(&[S1.to_vec(), S2.to_vec()]).unwrap(), 3).unwrap()
    }

    fn siso(c: f64, v: f64) -> CirTaps {
        CirTaps::new(vec![DMatrix::from_element(1, 1, c)], DVector::from_element(1, v)).unwrap()
    }

    fn alternating(k: usize) -> TrainingSet {
        let row: Vec<u8> = (0..k).map(|i| u8::from(i % 2 == 0)).collect();
        TrainingSet::new(SymbolBlock::from_rows(&[row]).unwrap(), 1).unwrap()
    }

    fn sample(cir: &CirTaps, s: &TrainingSet, rng: &mut ChaCha8Rng) -> ObservationBlock {
        let cols: Vec<Vec<u64>> = s
            .conv()
            .matrix()
            .column_iter()
            .map(|c| sample_received(cir, &c.into_owned(), rng).unwrap())
            .collect();
        ObservationBlock::from_counts(cir.m(), &cols).unwrap()
    }

    #[test]
    fn log_likelihood_of_silence() {
        let cir = reference_cir();
        let s = reference_training();
        let y = ObservationBlock::new(DMatrix::zeros(2, s.conv().ncols())).unwrap();
        let means = cir.flat() * s.conv().matrix();
        let ll = log_likelihood(&y, &cir, &s).unwrap();
        assert!((ll + means.sum()).abs() < 1e-9);
    }

    #[test]
    fn log_likelihood_scalar_cell() {
        // one cell, mean 10 and count 10
        let s = TrainingSet::new(SymbolBlock::from_rows(&[vec![0]]).unwrap(), 1).unwrap();
        let y = ObservationBlock::new(DMatrix::from_element(1, 1, 10.0)).unwrap();
        let ll = log_likelihood(&y, &siso(3.0, 10.0), &s).unwrap();
        let ln_fact_10 = (1..=10).map(|k| (k as f64).ln()).sum::<f64>();
        let expect = -10.0 + 10.0 * 10f64.ln() - ln_fact_10;
        assert!((ll - expect).abs() < 1e-9);
        assert!((ll + 2.0785).abs() < 1e-3);
    }

    #[test]
    fn log_likelihood_zero_mean_positive_count() {
        let s = TrainingSet::new(SymbolBlock::from_rows(&[vec![0]]).unwrap(), 1).unwrap();
        let y = ObservationBlock::new(DMatrix::from_element(1, 1, 2.0)).unwrap();
        assert_eq!(log_likelihood(&y, &siso(1.0, 0.0), &s).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn log_likelihood_peaks_at_empirical_mean() {
        let s = TrainingSet::new(SymbolBlock::from_rows(&[vec![0; 5]]).unwrap(), 1).unwrap();
        let y = ObservationBlock::new(DMatrix::from_row_slice(1, 5, &[3.0, 7.0, 4.0, 6.0, 5.0])).unwrap();
        let at = |v: f64| log_likelihood(&y, &siso(1.0, v), &s).unwrap();
        assert!(at(5.0) > at(4.9));
        assert!(at(5.0) > at(5.1));
    }

    #[test]
    fn crb_closed_form_alternating() {
        // (c, v) with alternating pilots: 2/K · (c + 3v)
        for (c, v, k) in [(60.0, 10.0, 16), (3.0, 0.5, 40), (1.0, 1.0, 2)] {
            let got = crb(&siso(c, v), &alternating(k)).unwrap();
            let expect = 2.0 / k as f64 * (c + 3.0 * v);
            assert!((got - expect).abs() / expect < 1e-12, "{got} vs {expect}");
        }
    }

    #[test]
    fn crb_scaling_laws() {
        let cir = reference_cir();
        let s = reference_training();
        let base = crb(&cir, &s).unwrap();
        let scaled = CirTaps::from_flat(&(cir.flat() * 3.0), 3).unwrap();
        assert!((crb(&scaled, &s).unwrap() / base - 3.0).abs() < 1e-12);

        // repeating a length-K alternating pattern twice halves the bound
        let one = crb(&siso(5.0, 1.0), &alternating(20)).unwrap();
        let two = crb(&siso(5.0, 1.0), &concat_training(&alternating(20), 2).unwrap()).unwrap();
        assert!((two / one - 0.5).abs() < 1e-12);
    }

    #[test]
    fn crb_singular_training() {
        let s = TrainingSet::new(SymbolBlock::from_rows(&[vec![1, 1, 1, 1]]).unwrap(), 1).unwrap();
        assert!(matches!(crb(&siso(5.0, 1.0), &s), Err(Error::Estimability(_))));
    }

    #[test]
    fn noiseless_observations_recovered_exactly() {
        let cir = reference_cir();
        let s = concat_training(&reference_training(), 2).unwrap();
        let y = ObservationBlock::new(cir.flat() * s.conv().matrix()).unwrap();
        let ls = ls_estimate(&y, &s).unwrap().with_truth(&cir);
        assert!(ls.mse.unwrap() < 1e-16 * cir.flat().norm_squared());
        let ml = ml_estimate(&y, &s, &MlOptions { tol: 1e-13, max_iter: 200_000 }).unwrap().with_truth(&cir);
        assert!(ml.mse.unwrap() < 1e-8, "{:?}", ml.mse);
    }

    #[test]
    fn ml_of_constant_design_is_sample_mean() {
        // only the always-on noise column is excited through a silent pilot
        let s = TrainingSet::new(SymbolBlock::from_rows(&[vec![1, 0, 1, 0, 1, 0]]).unwrap(), 1).unwrap();
        let y = ObservationBlock::new(DMatrix::from_row_slice(1, 6, &[12.0, 4.0, 9.0, 2.0, 15.0, 3.0])).unwrap();
        let est = ml_estimate(&y, &s, &MlOptions::default()).unwrap();
        // pulses: mean 12 = c + v, silence: mean 3 = v
        let c = est.c_hat.tap(0)[(0, 0)];
        let v = est.c_hat.noise()[0];
        assert!((v - 3.0).abs() < 1e-6, "{v}");
        assert!((c - 9.0).abs() < 1e-6, "{c}");
        assert!(est.converged);
    }

    #[test]
    fn ml_all_zero_counts() {
        let s = reference_training();
        let y = ObservationBlock::new(DMatrix::zeros(2, s.conv().ncols())).unwrap();
        let est = ml_estimate(&y, &s, &MlOptions::default()).unwrap();
        assert!(est.c_hat.flat().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixed_point_is_monotone_in_likelihood() {
        let cir = reference_cir();
        let s = concat_training(&reference_training(), 2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let y = sample(&cir, &s, &mut rng);
        let y_row: Vec<f64> = y.counts().row(0).iter().copied().collect();
        let mut row = DVector::from_element(7, 5.0);
        let row_ll = |r: &DVector<f64>| {
            s.conv()
                .matrix()
                .column_iter()
                .zip(&y_row)
                .map(|(col, &obs)| {
                    let mu = r.dot(&col);
                    -mu + obs * mu.ln()
                })
                .sum::<f64>()
        };
        let mut prev = row_ll(&row);
        for _ in 0..500 {
            row = fixed_point_step(&row, s.conv(), &y_row);
            assert!(row.iter().all(|&v| v >= 0.0));
            let ll = row_ll(&row);
            assert!(ll >= prev - 1e-9 * prev.abs(), "{ll} < {prev}");
            prev = ll;
        }
    }

    #[test]
    fn clipping_never_hurts() {
        let cir = reference_cir();
        let s = reference_training();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let y = sample(&cir, &s, &mut rng);
            let raw = unconstrained_ls(&y, &s).unwrap();
            let clipped = ls_estimate(&y, &s).unwrap().c_hat.flat();
            let truth = cir.flat();
            assert!((clipped - &truth).norm_squared() <= (raw - &truth).norm_squared() + 1e-12);
        }
    }

    #[test]
    fn estimators_equivariant_to_receiver_permutation() {
        let cir = reference_cir();
        let s = reference_training();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let y = sample(&cir, &s, &mut rng);
        let mut swapped = y.counts().clone();
        swapped.swap_rows(0, 1);
        let ys = ObservationBlock::new(swapped).unwrap();
        for est in [
            |y: &ObservationBlock, s: &TrainingSet| ls_estimate(y, s).unwrap(),
            |y: &ObservationBlock, s: &TrainingSet| ml_estimate(y, s, &MlOptions::default()).unwrap(),
        ] {
            let a = est(&y, &s).c_hat.flat();
            let mut b = est(&ys, &s).c_hat.flat();
            b.swap_rows(0, 1);
            assert!((a - b).amax() < 1e-9);
        }
    }

    #[test]
    fn ml_mse_not_below_crb() {
        let cir = reference_cir();
        let s = concat_training(&reference_training(), 4).unwrap();
        let bound = crb(&cir, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 400;
        let errs: Vec<f64> = (0..n)
            .map(|_| {
                let y = sample(&cir, &s, &mut rng);
                ml_estimate(&y, &s, &MlOptions::default()).unwrap().with_truth(&cir).mse.unwrap()
            })
            .collect();
        let mean = errs.iter().sum::<f64>() / n as f64;
        let sd = (errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(mean >= bound - 3.0 * sd / (n as f64).sqrt(), "{mean} < {bound}");
    }

    #[test]
    fn ls_singular_training() {
        let s = TrainingSet::new(SymbolBlock::from_rows(&[vec![1, 1, 1, 1]]).unwrap(), 1).unwrap();
        let y = ObservationBlock::new(DMatrix::from_element(1, 4, 3.0)).unwrap();
        assert!(matches!(ls_estimate(&y, &s), Err(Error::Estimability(_))));
    }

    #[test]
    fn feasible_sequences_respect_constraints() {
        let all = feasible_sequences(12, 6, 4);
        assert!(!all.is_empty());
        for s in &all {
            assert!(s.iter().filter(|&&b| b == 1).count() <= 6);
            assert!(feasible(s, 6, 4));
        }
        assert!(all.windows(2).all(|w| w[0] < w[1]));
        assert!(feasible(&S1, 8, 4) && feasible(&S2, 8, 4));
        assert!(!feasible(&[1, 0, 0, 0, 0, 0, 1], 8, 4));
    }

    #[test]
    fn design_beats_reference_pair() {
        let cir = reference_cir();
        let designed = design_training(16, 2, 3, &cir, &TrainingConstraints::default()).unwrap();
        let ours = crb(&cir, &designed).unwrap();
        let theirs = crb(&cir, &reference_training()).unwrap();
        assert!(ours <= theirs, "{ours} > {theirs}");
        for j in 0..2 {
            let row = designed.sequences().row(j);
            assert!(feasible(row, 8, 4));
        }
    }

    #[test]
    fn design_small_is_deterministic() {
        let cir = reference_cir();
        let c = TrainingConstraints { beam: 8, ..Default::default() };
        let a = design_training(10, 2, 3, &cir, &c).unwrap();
        let b = design_training(10, 2, 3, &cir, &c).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn design_infeasible_constraints() {
        let cir = reference_cir();
        let c = TrainingConstraints { max_ones: Some(0), max_zero_run: Some(2), beam: 4 };
        assert!(matches!(design_training(8, 2, 3, &cir, &c), Err(Error::Constraint(_))));
    }

    #[test]
    fn concatenation_scales_ones_and_crb() {
        let cir = reference_cir();
        let base = reference_training();
        let base_crb = crb(&cir, &base).unwrap();
        assert_eq!(concat_training(&base, 1).unwrap(), base);
        for r in [2, 4, 8] {
            let t = concat_training(&base, r).unwrap();
            assert_eq!(t.len(), 16 * r);
            assert_eq!(t.sequences().ones(), r * base.sequences().ones());
            let ratio = crb(&cir, &t).unwrap() / base_crb;
            // edge columns make the ratio slightly better than 1/r
            assert!((ratio * r as f64 - 1.0).abs() < 0.25, "r={r}: {ratio}");
        }
        assert!(concat_training(&base, 0).is_err());
    }

    #[test]
    fn training_text_roundtrip() {
        let t = reference_training();
        let text = t.to_text();
        assert_eq!(text.lines().next().unwrap(), "1110000101011001");
        assert_eq!(TrainingSet::from_text(&text, 3).unwrap(), t);
        assert!(TrainingSet::from_text("10x1\n", 3).is_err());
    }

    #[test]
    fn random_training_usually_estimable() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cir = reference_cir();
        let rows: Vec<Vec<u8>> = (0..2).map(|_| (0..64).map(|_| rng.random_range(0..2)).collect()).collect();
        let s = TrainingSet::new(SymbolBlock::from_rows(&rows).unwrap(), 3).unwrap();
        assert!(crb(&cir, &s).unwrap().is_finite());
    }
}
