//! Transceiver placement and device mobility.
//!
//! Positions are in meters, diffusion coefficients in m²/s. The environment
//! is unbounded: no collision or boundary handling is applied to devices.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380649e-23;
/// Dynamic viscosity of water, Pa·s.
pub const WATER_VISCOSITY: f64 = 1e-3;
/// Room temperature, K.
pub const ROOM_TEMPERATURE: f64 = 298.0;

pub type Point = [f64; 3];

pub fn distance(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Positions of the `M` transmitters and `M` receivers.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    tx: Vec<Point>,
    rx: Vec<Point>,
    /// Paired Tx-Rx distance `d` of the nominal layout.
    pub nominal_d: f64,
    /// Gate inter-distance `h` of the nominal layout.
    pub nominal_h: f64,
}

impl Topology {
    pub fn new(tx: Vec<Point>, rx: Vec<Point>, nominal_d: f64, nominal_h: f64) -> Result<Self> {
        if tx.is_empty() || tx.len() != rx.len() {
            return Err(Error::Size(format!(
                "need M >= 1 transmitters and as many receivers, got {} and {}",
                tx.len(),
                rx.len()
            )));
        }
        if !tx.iter().chain(rx.iter()).flatten().all(|c| c.is_finite()) {
            return Err(Error::Domain("non-finite coordinate".into()));
        }
        if !(nominal_d > 0.0 && nominal_h > 0.0) {
            return Err(Error::Domain(format!(
                "nominal distances must be positive, got d={nominal_d}, h={nominal_h}"
            )));
        }
        Ok(Self { tx, rx, nominal_d, nominal_h })
    }

    pub fn m(&self) -> usize {
        self.tx.len()
    }

    pub fn tx(&self) -> &[Point] {
        &self.tx
    }

    pub fn rx(&self) -> &[Point] {
        &self.rx
    }

    /// Distance from transmitter `j` to receiver `i`.
    pub fn link_distance(&self, i: usize, j: usize) -> f64 {
        distance(&self.rx[i], &self.tx[j])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityParams {
    /// Transceiver diffusion coefficient `D_X`; zero means a static channel.
    pub d_x: f64,
    /// Channel coherence time `T_c`: positions are refreshed once per `T_c`.
    pub t_c: f64,
    /// Transceiver radius, informational when `d_x` is given directly.
    pub r_x: Option<f64>,
}

impl MobilityParams {
    pub fn fixed(t_c: f64) -> Self {
        Self { d_x: 0.0, t_c, r_x: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.d_x >= 0.0 && self.d_x.is_finite()) {
            return Err(Error::Domain(format!("d_x must be >= 0, got {}", self.d_x)));
        }
        if !(self.t_c > 0.0 && self.t_c.is_finite()) {
            return Err(Error::Domain(format!("t_c must be > 0, got {}", self.t_c)));
        }
        Ok(())
    }

    pub fn is_static(&self) -> bool {
        self.d_x == 0.0
    }
}

/// Diffusion coefficient of a sphere of the given radius, `k_B·T / (6π·η·r)`.
pub fn stokes_einstein(radius: f64, viscosity: f64, temperature: f64) -> Result<f64> {
    if !(radius > 0.0 && viscosity > 0.0 && temperature > 0.0) {
        return Err(Error::Domain(format!(
            "stokes_einstein needs positive inputs, got r={radius}, eta={viscosity}, T={temperature}"
        )));
    }
    Ok(BOLTZMANN * temperature / (6.0 * std::f64::consts::PI * viscosity * radius))
}

/// Nominal layout: `Tx_j` at `(0, (j-1)·h, 0)` and `Rx_i` at `(d, (i-1)·h, 0)`.
pub fn initial_positions(d: f64, h: f64, m: usize) -> Result<Topology> {
    if m == 0 {
        return Err(Error::Size("M must be at least 1".into()));
    }
    let tx = (0..m).map(|j| [0.0, j as f64 * h, 0.0]).collect();
    let rx = (0..m).map(|i| [d, i as f64 * h, 0.0]).collect();
    Topology::new(tx, rx, d, h)
}

/// Moves every coordinate of every device by an independent `N(0, 2·D_X·T_c)`.
pub fn brownian_step<R: Rng + ?Sized>(
    topology: &Topology,
    params: &MobilityParams,
    rng: &mut R,
) -> Topology {
    let mut next = topology.clone();
    if params.is_static() {
        return next;
    }
    let sigma = (2.0 * params.d_x * params.t_c).sqrt();
    let normal = Normal::new(0.0, sigma).expect("finite non-negative sigma");
    for p in next.tx.iter_mut().chain(next.rx.iter_mut()) {
        for c in p.iter_mut() {
            *c += normal.sample(rng);
        }
    }
    next
}
