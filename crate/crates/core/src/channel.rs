//! Mean channel impulse response of a free-space diffusive D-MIMO link and
//! Poisson sampling of received molecule counts.
//!
//! Tap `ℓ` of link `j → i` is the expected number of molecules inside the
//! receiver sphere of `Rx_i` at its sampling instant, `ℓ` bit intervals after
//! `Tx_j` released `N` molecules. The volume integral over the receiver is
//! approximated by the concentration at its center times its volume, which is
//! accurate when the receiver radius is small against the link distance.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Poisson};

use crate::error::{Error, Result};
use crate::geometry::Topology;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionParams {
    /// Molecules released per pulse, `N`.
    pub n_release: f64,
    /// Diffusion coefficient of the signaling molecule, m²/s.
    pub d_coef: f64,
    pub rx_radius: f64,
    /// Bit interval `T_int`, seconds.
    pub t_int: f64,
    /// Number of modeled taps `L`.
    pub l_taps: usize,
    /// Taps `L..L'` are folded into the noise mean instead of being modeled.
    pub l_prime: usize,
    /// Prior probability of a one, `p`.
    pub p_one: f64,
    /// External noise mean as a fraction of the paired peak tap `c̄_ii[0]`.
    pub v_ex_fraction: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            n_release: 1e5,
            d_coef: 1e-9,
            rx_radius: 50e-9,
            t_int: 0.2e-3,
            l_taps: 3,
            l_prime: 10,
            p_one: 0.5,
            v_ex_fraction: 0.05,
        }
    }
}

impl DiffusionParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive, got {v}")))
            }
        };
        if !(self.n_release >= 1.0 && self.n_release.is_finite()) {
            return Err(Error::Domain(format!("n_release must be >= 1, got {}", self.n_release)));
        }
        positive("d_coef", self.d_coef)?;
        positive("rx_radius", self.rx_radius)?;
        positive("t_int", self.t_int)?;
        if self.l_taps == 0 || self.l_taps > self.l_prime {
            return Err(Error::Domain(format!(
                "need 1 <= l_taps <= l_prime, got {} and {}",
                self.l_taps, self.l_prime
            )));
        }
        if !(0.0..=1.0).contains(&self.p_one) {
            return Err(Error::Domain(format!("p_one must be in [0, 1], got {}", self.p_one)));
        }
        if !(self.v_ex_fraction >= 0.0 && self.v_ex_fraction.is_finite()) {
            return Err(Error::Domain(format!(
                "v_ex_fraction must be >= 0, got {}",
                self.v_ex_fraction
            )));
        }
        Ok(())
    }

    pub fn rx_volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.rx_radius.powi(3)
    }
}

/// Mean D-MIMO channel: `L` tap matrices `C̄[ℓ]` (entry `(i, j)` for link
/// `j → i`) and the noise mean vector `v̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct CirTaps {
    taps: Vec<DMatrix<f64>>,
    noise: DVector<f64>,
}

impl CirTaps {
    pub fn new(taps: Vec<DMatrix<f64>>, noise: DVector<f64>) -> Result<Self> {
        let m = noise.len();
        if m == 0 || taps.is_empty() {
            return Err(Error::Size("CIR needs M >= 1 and L >= 1".into()));
        }
        if taps.iter().any(|t| t.nrows() != m || t.ncols() != m) {
            return Err(Error::Size(format!("every tap must be {m}x{m}")));
        }
        let entries = taps.iter().flat_map(|t| t.iter()).chain(noise.iter());
        for &v in entries {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("CIR entries must be finite and >= 0, got {v}")));
            }
        }
        Ok(Self { taps, noise })
    }

    /// Rebuilds taps from the global `M×(ML+1)` view `[C̄[0], …, C̄[L−1], v̄]`.
    pub fn from_flat(flat: &DMatrix<f64>, l_taps: usize) -> Result<Self> {
        let m = flat.nrows();
        if l_taps == 0 || flat.ncols() != m * l_taps + 1 {
            return Err(Error::Size(format!(
                "flat CIR must be {m}x{}, got {}x{}",
                m * l_taps + 1,
                m,
                flat.ncols()
            )));
        }
        let taps = (0..l_taps).map(|l| flat.columns(l * m, m).into_owned()).collect();
        Self::new(taps, flat.column(m * l_taps).into_owned())
    }

    pub fn m(&self) -> usize {
        self.noise.len()
    }

    pub fn l_taps(&self) -> usize {
        self.taps.len()
    }

    pub fn tap(&self, l: usize) -> &DMatrix<f64> {
        &self.taps[l]
    }

    pub fn taps(&self) -> &[DMatrix<f64>] {
        &self.taps
    }

    pub fn noise(&self) -> &DVector<f64> {
        &self.noise
    }

    /// Global channel matrix `C̄ = [C̄[0], …, C̄[L−1], v̄]`.
    pub fn flat(&self) -> DMatrix<f64> {
        let m = self.m();
        let l = self.l_taps();
        let mut out = DMatrix::zeros(m, m * l + 1);
        for (idx, t) in self.taps.iter().enumerate() {
            out.columns_mut(idx * m, m).copy_from(t);
        }
        out.column_mut(m * l).copy_from(&self.noise);
        out
    }

    /// Expected counts `C̄·X[k]` for one convolutional column.
    pub fn mean_counts(&self, x_col: &DVector<f64>) -> Result<DVector<f64>> {
        let width = self.m() * self.l_taps() + 1;
        if x_col.len() != width {
            return Err(Error::Size(format!("column length {} != ML+1 = {width}", x_col.len())));
        }
        Ok(self.flat() * x_col)
    }

    /// Worst receiver's `(C̄_i·1 − c̄_ii[0]) / c̄_ii[0]`: everything that is not
    /// the paired current-symbol tap, relative to it.
    pub fn interference_metric(&self) -> f64 {
        let flat = self.flat();
        (0..self.m())
            .map(|i| {
                let own = self.taps[0][(i, i)];
                (flat.row(i).sum() - own) / own
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Per-transmitter release offsets within a bit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetSchedule {
    offsets: Vec<f64>,
}

impl OffsetSchedule {
    pub fn new(offsets: Vec<f64>, t_int: f64) -> Result<Self> {
        if let Some(bad) = offsets.iter().find(|&&o| !(0.0..t_int).contains(&o)) {
            return Err(Error::Domain(format!("offset {bad} outside [0, {t_int})")));
        }
        Ok(Self { offsets })
    }

    pub fn zeros(m: usize) -> Self {
        Self { offsets: vec![0.0; m] }
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

/// Mean local concentration at `distance` and `t` after an impulsive release
/// of `N` molecules in unbounded space; zero before the release.
pub fn concentration(distance: f64, t: f64, params: &DiffusionParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let spread = 4.0 * params.d_coef * t;
    params.n_release / (std::f64::consts::PI * spread).powf(1.5)
        * (-distance * distance / spread).exp()
}

/// Time at which the concentration at `distance` peaks, `d²/6D`.
pub fn peak_time(distance: f64, d_coef: f64) -> f64 {
    distance * distance / (6.0 * d_coef)
}

/// Expected molecules inside the receiver sphere `elapsed` seconds after release.
pub fn cir_tap(distance: f64, elapsed: f64, params: &DiffusionParams) -> f64 {
    if elapsed <= 0.0 {
        return 0.0;
    }
    concentration(distance, elapsed, params) * params.rx_volume()
}

/// Elapsed time between the release of `Tx_j` and the sampling instant of
/// `Rx_i`, `l` bit intervals later. Receiver `i` is synchronized with its own
/// transmitter: it samples at its offset plus the nominal peak time.
fn elapsed(schedule: &OffsetSchedule, sample_at: f64, i: usize, j: usize, l: usize, t_int: f64) -> f64 {
    let offs = schedule.offsets();
    offs[i] + sample_at + l as f64 * t_int - offs[j]
}

fn check_inputs(topology: &Topology, schedule: &OffsetSchedule, params: &DiffusionParams) -> Result<()> {
    params.validate()?;
    if schedule.len() != topology.m() {
        return Err(Error::Size(format!(
            "offset schedule has {} entries for M = {}",
            schedule.len(),
            topology.m()
        )));
    }
    let m = topology.m();
    for i in 0..m {
        for j in 0..m {
            if topology.link_distance(i, j) <= 0.0 {
                return Err(Error::Domain(format!("Rx{} coincides with Tx{}", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

/// Mean noise per receiver: the prior-weighted tail taps `L..L'` of every
/// link plus an external term proportional to the paired peak tap.
pub fn truncation_noise(
    topology: &Topology,
    schedule: &OffsetSchedule,
    params: &DiffusionParams,
) -> Result<DVector<f64>> {
    check_inputs(topology, schedule, params)?;
    let m = topology.m();
    let sample_at = peak_time(topology.nominal_d, params.d_coef);
    Ok(DVector::from_fn(m, |i, _| {
        let tail: f64 = (0..m)
            .map(|j| {
                let dist = topology.link_distance(i, j);
                (params.l_taps..params.l_prime)
                    .map(|l| cir_tap(dist, elapsed(schedule, sample_at, i, j, l, params.t_int), params))
                    .sum::<f64>()
            })
            .sum();
        let own = cir_tap(
            topology.link_distance(i, i),
            elapsed(schedule, sample_at, i, i, 0, params.t_int),
            params,
        );
        params.p_one * tail + params.v_ex_fraction * own
    }))
}

/// Mean channel for the given geometry and release schedule. Sampling uses
/// the nominal paired distance, actual distances feed the taps.
pub fn build_cir(topology: &Topology, schedule: &OffsetSchedule, params: &DiffusionParams) -> Result<CirTaps> {
    check_inputs(topology, schedule, params)?;
    let m = topology.m();
    let sample_at = peak_time(topology.nominal_d, params.d_coef);
    let taps = (0..params.l_taps)
        .map(|l| {
            DMatrix::from_fn(m, m, |i, j| {
                cir_tap(
                    topology.link_distance(i, j),
                    elapsed(schedule, sample_at, i, j, l, params.t_int),
                    params,
                )
            })
        })
        .collect();
    let noise = truncation_noise(topology, schedule, params)?;
    CirTaps::new(taps, noise)
}

/// Draws `y_i ~ Poisson(C̄_i·X[k])` independently for every receiver.
pub fn sample_received<R: Rng + ?Sized>(cir: &CirTaps, x_col: &DVector<f64>, rng: &mut R) -> Result<Vec<u64>> {
    let means = cir.mean_counts(x_col)?;
    means.iter().map(|&mu| sample_poisson(mu, rng)).collect()
}

pub(crate) fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    let dist = Poisson::new(mean)
        .map_err(|e| Error::Domain(format!("invalid Poisson mean {mean}: {e}")))?;
    Ok(dist.sample(rng) as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::initial_positions;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference() -> (Topology, DiffusionParams) {
        (initial_positions(400e-9, 200e-9, 2).unwrap(), DiffusionParams::default())
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn concentration_at_origin() {
        let p = DiffusionParams::default();
        let t = 1e-5;
        let expect = p.n_release / (4.0 * std::f64::consts::PI * p.d_coef * t).powf(1.5);
        assert_eq!(concentration(0.0, t, &p), expect);
        assert_eq!(concentration(1e-7, 0.0, &p), 0.0);
        assert_eq!(concentration(1e-7, -1.0, &p), 0.0);
    }

    #[test]
    fn concentration_at_peak() {
        let p = DiffusionParams::default();
        let c = concentration(400e-9, 26.67e-6, &p);
        assert!(rel(c, 1.15e23) < 0.01, "{c:e}");
        assert!(concentration(500e-9, 26.67e-6, &p) < c);
    }

    #[test]
    fn peak_time_is_argmax() {
        let tau = peak_time(400e-9, 1e-9);
        assert!(rel(tau, 2.667e-5) < 1e-3);
        let p = DiffusionParams::default();
        let at = concentration(400e-9, tau, &p);
        assert!(concentration(400e-9, tau * 1.01, &p) < at);
        assert!(concentration(400e-9, tau * 0.99, &p) < at);
        assert!(rel(peak_time(800e-9, 1e-9), 4.0 * tau) < 1e-12);
    }

    #[test]
    fn cir_tap_matches_reference_peak_taps() {
        let p = DiffusionParams::default();
        let tau = peak_time(400e-9, p.d_coef);
        assert!(rel(cir_tap(400e-9, tau, &p), 60.21) < 0.01);
        let cross = (400e-9f64.powi(2) + 200e-9f64.powi(2)).sqrt();
        assert!(rel(cir_tap(cross, tau, &p), 41.58) < 0.01);
        assert_eq!(cir_tap(400e-9, 0.0, &p), 0.0);
    }

    #[test]
    fn build_cir_reference_configuration() {
        let (t, p) = reference();
        let cir = build_cir(&t, &OffsetSchedule::zeros(2), &p).unwrap();
        let expect = [[60.21, 41.58], [9.11, 8.71], [3.83, 3.74]];
        for (l, [diag, off]) in expect.iter().enumerate() {
            let tap = cir.tap(l);
            assert!(rel(tap[(0, 0)], *diag) < 0.01, "tap {l}: {}", tap[(0, 0)]);
            assert!(rel(tap[(0, 1)], *off) < 0.01, "tap {l}: {}", tap[(0, 1)]);
            assert_eq!(tap[(0, 0)], tap[(1, 1)]);
            assert_eq!(tap[(0, 1)], tap[(1, 0)]);
        }
        for &v in cir.noise().iter() {
            assert!(rel(v, 10.29) < 0.02, "{v}");
        }
    }

    #[test]
    fn paired_taps_decay_after_peak() {
        let (t, mut p) = reference();
        p.l_taps = 8;
        p.l_prime = 20;
        let cir = build_cir(&t, &OffsetSchedule::zeros(2), &p).unwrap();
        for l in 1..p.l_taps {
            assert!(cir.tap(l)[(0, 0)] <= cir.tap(l - 1)[(0, 0)]);
        }
    }

    #[test]
    fn offset_moves_interference_to_later_taps() {
        let (t, p) = reference();
        let sched = OffsetSchedule::new(vec![0.0, p.t_int / 2.0], p.t_int).unwrap();
        let plain = build_cir(&t, &OffsetSchedule::zeros(2), &p).unwrap();
        let til = build_cir(&t, &sched, &p).unwrap();
        assert_eq!(til.tap(0)[(0, 1)], 0.0);
        assert!(til.tap(1)[(0, 1)] > plain.tap(1)[(0, 1)]);
        // the paired links keep their timing
        assert_eq!(til.tap(0)[(0, 0)], plain.tap(0)[(0, 0)]);
        assert_eq!(til.tap(0)[(1, 1)], plain.tap(0)[(1, 1)]);
    }

    #[test]
    fn truncation_noise_vanishes_without_prior_or_external() {
        let (t, mut p) = reference();
        p.p_one = 0.0;
        p.v_ex_fraction = 0.0;
        let v = truncation_noise(&t, &OffsetSchedule::zeros(2), &p).unwrap();
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn truncation_noise_converges_in_l_prime() {
        let (t, mut p) = reference();
        let mut prev = 0.0;
        let mut increments = Vec::new();
        for lp in [5, 10, 20, 40, 80, 160, 320] {
            p.l_prime = lp;
            let v = truncation_noise(&t, &OffsetSchedule::zeros(2), &p).unwrap()[0];
            assert!(v >= prev);
            increments.push(v - prev);
            prev = v;
        }
        // tail taps decay like t^{-3/2}: doubling L' adds ever less
        for w in increments[1..].windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn interference_metric_decreases_with_spacing() {
        let p = DiffusionParams::default();
        let mut prev = f64::INFINITY;
        for h in [50e-9, 100e-9, 200e-9, 400e-9, 800e-9] {
            let t = initial_positions(400e-9, h, 2).unwrap();
            let metric = build_cir(&t, &OffsetSchedule::zeros(2), &p).unwrap().interference_metric();
            assert!(metric < prev);
            prev = metric;
        }
    }

    #[test]
    fn coincident_devices_rejected() {
        let p = DiffusionParams::default();
        let t = Topology::new(vec![[0.0; 3]], vec![[0.0; 3]], 1e-7, 1e-7).unwrap();
        assert!(matches!(build_cir(&t, &OffsetSchedule::zeros(1), &p), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_params_rejected() {
        let (t, p) = reference();
        let sched = OffsetSchedule::zeros(2);
        let bad = [
            DiffusionParams { l_taps: 0, ..p },
            DiffusionParams { l_prime: 2, ..p },
            DiffusionParams { p_one: 1.5, ..p },
            DiffusionParams { d_coef: 0.0, ..p },
            DiffusionParams { n_release: 0.5, ..p },
        ];
        for b in bad {
            assert!(build_cir(&t, &sched, &b).is_err(), "{b:?}");
        }
        assert!(OffsetSchedule::new(vec![0.0, p.t_int], p.t_int).is_err());
        assert!(build_cir(&t, &OffsetSchedule::zeros(3), &p).is_err());
    }

    #[test]
    fn flat_view_roundtrip() {
        let (t, p) = reference();
        let cir = build_cir(&t, &OffsetSchedule::zeros(2), &p).unwrap();
        let flat = cir.flat();
        assert_eq!(flat.ncols(), 2 * 3 + 1);
        assert_eq!(CirTaps::from_flat(&flat, 3).unwrap(), cir);
        assert!(CirTaps::from_flat(&flat, 2).is_err());
    }

    #[test]
    fn poisson_zero_mean_is_zero() {
        let cir = CirTaps::new(vec![DMatrix::zeros(2, 2)], DVector::zeros(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        for _ in 0..100 {
            assert_eq!(sample_received(&cir, &x, &mut rng).unwrap(), vec![0, 0]);
        }
    }

    #[test]
    fn poisson_moments() {
        let cir = CirTaps::new(vec![DMatrix::from_element(1, 1, 60.21)], DVector::zeros(1)).unwrap();
        let x = DVector::from_vec(vec![1.0, 1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| sample_received(&cir, &x, &mut rng).unwrap()[0] as f64)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let lambda = 60.21;
        assert!((mean - lambda).abs() < 3.0 * (lambda / n as f64).sqrt());
        let var_sd = ((lambda + 2.0 * lambda * lambda) / n as f64).sqrt();
        assert!((var - lambda).abs() < 3.0 * var_sd, "{var}");
    }

    #[test]
    fn poisson_additivity() {
        // Sum of independent Poisson(a) and Poisson(b) against Poisson(a+b),
        // compared by a chi-square two-sample test on binned counts.
        let (a, b) = (7.5, 12.25);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 100_000;
        let bins = 40;
        let mut split = vec![0f64; bins];
        let mut joint = vec![0f64; bins];
        for _ in 0..n {
            let s = sample_poisson(a, &mut rng).unwrap() + sample_poisson(b, &mut rng).unwrap();
            split[(s as usize).min(bins - 1)] += 1.0;
            let j = sample_poisson(a + b, &mut rng).unwrap();
            joint[(j as usize).min(bins - 1)] += 1.0;
        }
        let mut chi2 = 0.0;
        let mut dof = 0usize;
        for (s, j) in split.iter().zip(&joint) {
            if s + j >= 10.0 {
                chi2 += (s - j).powi(2) / (s + j);
                dof += 1;
            }
        }
        let dof = (dof - 1) as f64;
        // Wilson-Hilferty approximation of the 99% chi-square quantile
        let z = 2.326;
        let crit = dof * (1.0 - 2.0 / (9.0 * dof) + z * (2.0 / (9.0 * dof)).sqrt()).powi(3);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }
}
