//! OOK symbol blocks, the convolutional matrix `X` and release offset modes.
//!
//! Symbols are indexed from zero. Column `k` of the convolutional matrix
//! stacks `[x[k]; x[k−1]; …; x[k−L+1]; 1]`, and only `k ≥ L−1` is kept so
//! that every column sees a full channel memory. Symbols before the block
//! are silent.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::channel::{CirTaps, OffsetSchedule};
use crate::error::{Error, Result};

/// `M×K` binary symbols, one row per transmitter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolBlock {
    m: usize,
    k: usize,
    bits: Vec<u8>,
}

impl SymbolBlock {
    pub fn zeros(m: usize, k: usize) -> Self {
        Self { m, k, bits: vec![0; m * k] }
    }

    pub fn from_rows(rows: &[Vec<u8>]) -> Result<Self> {
        let m = rows.len();
        let k = rows.first().map_or(0, Vec::len);
        if m == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(Error::Size("symbol rows must be non-empty and of equal length".into()));
        }
        if rows.iter().flatten().any(|&b| b > 1) {
            return Err(Error::Domain("symbols must be 0 or 1".into()));
        }
        Ok(Self { m, k, bits: rows.concat() })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.k == 0
    }

    pub fn get(&self, j: usize, k: usize) -> u8 {
        self.bits[j * self.k + k]
    }

    pub fn set(&mut self, j: usize, k: usize, bit: u8) {
        debug_assert!(bit <= 1);
        self.bits[j * self.k + k] = bit;
    }

    pub fn row(&self, j: usize) -> &[u8] {
        &self.bits[j * self.k..(j + 1) * self.k]
    }

    /// Symbol vector `x[k]`; zeros for `k < 0`.
    pub fn column(&self, k: isize) -> Vec<u8> {
        if k < 0 {
            return vec![0; self.m];
        }
        (0..self.m).map(|j| self.get(j, k as usize)).collect()
    }

    pub fn ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    /// Symbols `start..end` of every row.
    pub fn slice(&self, start: usize, end: usize) -> SymbolBlock {
        let rows: Vec<Vec<u8>> = (0..self.m).map(|j| self.row(j)[start..end].to_vec()).collect();
        SymbolBlock { m: self.m, k: end - start, bits: rows.concat() }
    }

    /// Number of positions where `self` and `other` differ.
    pub fn hamming(&self, other: &SymbolBlock) -> usize {
        self.bits.iter().zip(&other.bits).filter(|(a, b)| a != b).count()
    }

    /// Convolutional column `X[k]` of length `M·L+1`.
    pub fn conv_column(&self, k: isize, l_taps: usize) -> DVector<f64> {
        let m = self.m;
        let mut col = DVector::zeros(m * l_taps + 1);
        for l in 0..l_taps {
            let idx = k - l as isize;
            if idx < 0 || idx as usize >= self.k {
                continue;
            }
            for j in 0..m {
                col[l * m + j] = f64::from(self.get(j, idx as usize));
            }
        }
        col[m * l_taps] = 1.0;
        col
    }
}

/// `(ML+1)×(K−L+1)` convolutional arrangement of a symbol block.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvMatrix {
    m: usize,
    l_taps: usize,
    matrix: DMatrix<f64>,
}

impl ConvMatrix {
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn l_taps(&self) -> usize {
        self.l_taps
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }
}

pub fn build_conv_matrix(block: &SymbolBlock, l_taps: usize) -> Result<ConvMatrix> {
    if l_taps == 0 || block.len() < l_taps {
        return Err(Error::Size(format!(
            "block of {} symbols is shorter than L = {l_taps}",
            block.len()
        )));
    }
    let first = l_taps - 1;
    let cols: Vec<DVector<f64>> = (first..block.len())
        .map(|k| block.conv_column(k as isize, l_taps))
        .collect();
    Ok(ConvMatrix {
        m: block.m(),
        l_taps,
        matrix: DMatrix::from_columns(&cols),
    })
}

/// Expected counts `Ȳ = C̄·X`.
pub fn mean_output(cir: &CirTaps, conv: &ConvMatrix) -> Result<DMatrix<f64>> {
    if cir.m() != conv.m || cir.l_taps() != conv.l_taps {
        return Err(Error::Size(format!(
            "CIR is M={}, L={} but X is M={}, L={}",
            cir.m(),
            cir.l_taps(),
            conv.m,
            conv.l_taps
        )));
    }
    Ok(cir.flat() * &conv.matrix)
}

/// Release timing of the transmitters within a bit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OffsetMode {
    /// Mode 1: every gate releases at the start of the interval.
    Simultaneous,
    /// Mode 2: odd-indexed gates release half an interval late.
    Alternating,
    /// Mode 3: four gates staggered by a quarter interval each.
    Staggered,
}

impl FromStr for OffsetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "1" | "simultaneous" => Ok(Self::Simultaneous),
            "2" | "alternating" => Ok(Self::Alternating),
            "3" | "staggered" => Ok(Self::Staggered),
            other => Err(Error::Config(format!("unknown offset mode {other:?}"))),
        }
    }
}

impl fmt::Display for OffsetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = match self {
            Self::Simultaneous => 1,
            Self::Alternating => 2,
            Self::Staggered => 3,
        };
        write!(f, "{n}")
    }
}

pub fn assign_offsets(mode: OffsetMode, t_int: f64, m: usize) -> Result<OffsetSchedule> {
    let offsets = match mode {
        OffsetMode::Simultaneous => vec![0.0; m],
        OffsetMode::Alternating => (0..m)
            .map(|j| if j % 2 == 1 { t_int / 2.0 } else { 0.0 })
            .collect(),
        OffsetMode::Staggered => {
            if m != 4 {
                return Err(Error::Unsupported(format!(
                    "staggered offsets are defined for M = 4 only, got M = {m}"
                )));
            }
            (0..4).map(|j| j as f64 * t_int / 4.0).collect()
        }
    };
    OffsetSchedule::new(offsets, t_int)
}

/// I.i.d. Bernoulli(`p_one`) symbols.
pub fn random_block<R: Rng + ?Sized>(m: usize, k: usize, p_one: f64, rng: &mut R) -> SymbolBlock {
    let mut block = SymbolBlock::zeros(m, k);
    for b in block.bits.iter_mut() {
        *b = u8::from(rng.random::<f64>() < p_one);
    }
    block
}
