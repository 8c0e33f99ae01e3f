//! Gray-labelled unit-energy constellations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Qam16,
}

/// Point `i` carries the bit label `i` written MSB first, so a hard decision
/// index converts straight back to bits.
#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    kind: Modulation,
    points: Vec<Complex64>,
    bits_per_symbol: usize,
}

// Gray ladder for one 16-QAM axis: 00 -> 3, 01 -> 1, 11 -> -1, 10 -> -3.
fn qam16_axis(b0: usize, b1: usize) -> f64 {
    match (b0, b1) {
        (0, 0) => 3.0,
        (0, 1) => 1.0,
        (1, 1) => -1.0,
        _ => -3.0,
    }
}

impl Constellation {
    pub fn new(kind: Modulation) -> Self {
        let (bits_per_symbol, points) = match kind {
            // bit 0 -> +1
            Modulation::Bpsk => (1, vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]),
            Modulation::Qpsk => (
                2,
                (0..4)
                    .map(|i| {
                        let (b0, b1) = ((i >> 1) & 1, i & 1);
                        Complex64::new(1.0 - 2.0 * b0 as f64, 1.0 - 2.0 * b1 as f64) * FRAC_1_SQRT_2
                    })
                    .collect(),
            ),
            Modulation::Qam16 => {
                let scale = 1.0 / 10f64.sqrt();
                (
                    4,
                    (0..16)
                        .map(|i| {
                            let b = |s: usize| (i >> (3 - s)) & 1;
                            Complex64::new(qam16_axis(b(0), b(1)), qam16_axis(b(2), b(3))) * scale
                        })
                        .collect(),
                )
            }
        };
        let c = Self { kind, points, bits_per_symbol };
        let energy = c.average_energy();
        assert!((energy - 1.0).abs() < 1e-12, "constellation energy {energy} != 1");
        c
    }

    pub fn bpsk() -> Self {
        Self::new(Modulation::Bpsk)
    }

    pub fn qpsk() -> Self {
        Self::new(Modulation::Qpsk)
    }

    pub fn qam16() -> Self {
        Self::new(Modulation::Qam16)
    }

    pub fn kind(&self) -> Modulation {
        self.kind
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    pub fn average_energy(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    /// Label bits of point `index`, MSB first.
    pub fn label(&self, index: usize) -> impl Iterator<Item = u8> + '_ {
        (0..self.bits_per_symbol).map(move |b| ((index >> (self.bits_per_symbol - 1 - b)) & 1) as u8)
    }

    /// Index of the nearest point; ties go to the lowest index.
    pub fn nearest(&self, z: Complex64) -> usize {
        let mut best = (0, f64::INFINITY);
        for (i, p) in self.points.iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best.1 {
                best = (i, d);
            }
        }
        best.0
    }
}

/// Index of each consecutive bit tuple.
pub fn symbol_indices(bits: &[u8], c: &Constellation) -> Result<Vec<usize>> {
    let bps = c.bits_per_symbol();
    if bits.len() % bps != 0 {
        return shape_err(format!("{} bits do not split into {bps}-bit symbols", bits.len()));
    }
    Ok(bits.chunks_exact(bps).map(|chunk| chunk.iter().fold(0usize, |acc, &b| (acc << 1) | (b & 1) as usize)).collect())
}

pub fn map_bits(bits: &[u8], c: &Constellation) -> Result<Vec<Complex64>> {
    Ok(symbol_indices(bits, c)?.into_iter().map(|i| c.points()[i]).collect())
}

/// Bits carried by a sequence of point indices.
pub fn demap_indices(indices: &[usize], c: &Constellation) -> Vec<u8> {
    indices.iter().flat_map(|&i| c.label(i)).collect()
}

/// Per-bit LLRs `ln P(b=0)/P(b=1)` from symbol posteriors.
pub fn bit_llrs(posteriors: &[Vec<f64>], c: &Constellation) -> Vec<f64> {
    const FLOOR: f64 = 1e-300;
    let bps = c.bits_per_symbol();
    let mut out = Vec::with_capacity(posteriors.len() * bps);
    for post in posteriors {
        for b in 0..bps {
            let (mut p0, mut p1) = (0.0, 0.0);
            for (i, &p) in post.iter().enumerate() {
                if (i >> (bps - 1 - b)) & 1 == 0 {
                    p0 += p;
                } else {
                    p1 += p;
                }
            }
            out.push((p0.max(FLOOR) / p1.max(FLOOR)).ln());
        }
    }
    out
}
