//! Error counting and binomial confidence intervals.

use serde::{Deserialize, Serialize};

/// Two-sided 95% normal quantile.
pub const WILSON_Z: f64 = 1.96;

/// Wilson score interval `(lo, hi)` for `k` successes in `n` trials.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

pub fn wilson_half_width(k: u64, n: u64) -> f64 {
    let (lo, hi) = wilson_interval(k, n, WILSON_Z);
    (hi - lo) / 2.0
}

/// Whether two Wilson intervals intersect.
pub fn intervals_overlap(k1: u64, n1: u64, k2: u64, n2: u64) -> bool {
    let (a_lo, a_hi) = wilson_interval(k1, n1, WILSON_Z);
    let (b_lo, b_hi) = wilson_interval(k2, n2, WILSON_Z);
    a_lo <= b_hi && b_lo <= a_hi
}

/// Error counts for one detector at one SNR point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ErrorCounter {
    pub bits: u64,
    pub bit_errors: u64,
    pub frames: u64,
    pub frame_errors: u64,
}

impl ErrorCounter {
    pub fn record(&mut self, sent: &[u8], decided: &[u8]) {
        debug_assert_eq!(sent.len(), decided.len());
        let errors = sent.iter().zip(decided).filter(|(a, b)| a != b).count() as u64;
        self.bits += sent.len() as u64;
        self.bit_errors += errors;
        self.frames += 1;
        self.frame_errors += u64::from(errors > 0);
    }

    pub fn ber(&self) -> f64 {
        if self.bits == 0 {
            0.0
        } else {
            self.bit_errors as f64 / self.bits as f64
        }
    }

    pub fn fer(&self) -> f64 {
        if self.frames == 0 {
            0.0
        } else {
            self.frame_errors as f64 / self.frames as f64
        }
    }

    pub fn ber_ci(&self) -> f64 {
        wilson_half_width(self.bit_errors, self.bits)
    }

    pub fn fer_ci(&self) -> f64 {
        wilson_half_width(self.frame_errors, self.frames)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 10 of 100 at z = 1.96
        let (lo, hi) = wilson_interval(10, 100, WILSON_Z);
        assert!((lo - 0.055_229).abs() < 1e-5 && (hi - 0.174_366).abs() < 1e-5, "{lo} {hi}");
        let (lo, hi) = wilson_interval(0, 50, WILSON_Z);
        assert_eq!(lo, 0.0);
        assert!((hi - 0.071_348).abs() < 1e-5, "{hi}");
    }

    #[test]
    fn counter_rates() {
        let mut c = ErrorCounter::default();
        c.record(&[0, 1, 1, 0], &[0, 1, 1, 0]);
        c.record(&[0, 1, 1, 0], &[1, 1, 0, 0]);
        assert_eq!((c.bits, c.bit_errors, c.frames, c.frame_errors), (8, 2, 2, 1));
        assert_eq!(c.ber(), 0.25);
        assert_eq!(c.fer(), 0.5);
        assert!(intervals_overlap(10, 100, 12, 100));
        assert!(!intervals_overlap(1, 1000, 500, 1000));
    }
}
