//! DD-domain detection: linear MMSE, Gaussian-approximation message passing,
//! cross-domain iterative detection, and exhaustive ML/MAP.

mod cdid;
mod ml;
mod mmse;
mod mpa;

pub use cdid::{detect_cdid, CdidDetector, CdidOptions};
pub use ml::{detect_ml, DEFAULT_SEARCH_CAP};
pub use mmse::{detect_mmse, mmse_estimate, MmseEstimate};
pub use mpa::{detect_mpa, FactorGraph, MpaOptions};

use num_complex::Complex64;

pub use crate::channel::LinearModel;
use crate::constellation::Constellation;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionResult {
    /// Constellation index per symbol (argmax posterior, lowest index on ties).
    pub hard_decisions: Vec<usize>,
    /// Per-symbol probabilities over the constellation.
    pub posteriors: Vec<Vec<f64>>,
    pub iterations_used: usize,
    pub converged: bool,
    /// Set when a singular system needed diagonal loading.
    pub regularized: bool,
    /// Jointly optimal sequence (exhaustive search only).
    pub sequence: Option<Vec<usize>>,
    /// Hard decisions after every iteration, when requested.
    pub trajectory: Vec<Vec<usize>>,
}

impl DetectionResult {
    fn from_posteriors(posteriors: Vec<Vec<f64>>) -> Self {
        let hard_decisions = posteriors.iter().map(|p| argmax(p)).collect();
        Self { hard_decisions, posteriors, iterations_used: 1, converged: true, ..Default::default() }
    }

    pub fn symbols(&self, c: &Constellation) -> Vec<Complex64> {
        self.hard_decisions.iter().map(|&i| c.points()[i]).collect()
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub(crate) fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate().skip(1) {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

/// Exponentiate and normalize log-probabilities in place.
pub(crate) fn normalize_log(logp: &mut [f64]) {
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        let u = 1.0 / logp.len() as f64;
        logp.iter_mut().for_each(|v| *v = u);
        return;
    }
    let mut sum = 0.0;
    for v in logp.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    logp.iter_mut().for_each(|v| *v /= sum);
}

/// Posterior over the constellation for `z = gain * a + w`, `w ~ CN(0, var)`,
/// uniform prior. A zero variance gives a one-hot posterior on the nearest
/// scaled point.
pub(crate) fn gaussian_posterior(z: Complex64, gain: f64, var: f64, c: &Constellation) -> Vec<f64> {
    if var <= f64::MIN_POSITIVE {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, a) in c.points().iter().enumerate() {
            let d = (z - a * gain).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        let mut p = vec![0.0; c.len()];
        p[best] = 1.0;
        return p;
    }
    let mut logp: Vec<f64> = c.points().iter().map(|a| -(z - a * gain).norm_sqr() / var).collect();
    normalize_log(&mut logp);
    logp
}

/// Mean and variance of a probability vector over the constellation.
pub(crate) fn moments(p: &[f64], c: &Constellation) -> (Complex64, f64) {
    let mut mean = Complex64::default();
    let mut second = 0.0;
    for (pi, a) in p.iter().zip(c.points()) {
        mean += a * *pi;
        second += pi * a.norm_sqr();
    }
    (mean, (second - mean.norm_sqr()).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[0.25, 0.5, 0.5, 0.1]), 1);
        assert_eq!(argmax(&[0.5, 0.5]), 0);
    }

    #[test]
    fn normalize_handles_extremes() {
        let mut p = vec![-1e6, 0.0, -1e6];
        normalize_log(&mut p);
        assert_eq!(p, vec![0.0, 1.0, 0.0]);
        let mut q = vec![f64::NEG_INFINITY; 4];
        normalize_log(&mut q);
        assert!(q.iter().all(|v| *v == 0.25));
    }

    #[test]
    fn posterior_moments() {
        let c = Constellation::bpsk();
        let (m, v) = moments(&[0.5, 0.5], &c);
        assert!(m.norm() < 1e-15 && (v - 1.0).abs() < 1e-15);
        let p = gaussian_posterior(Complex64::new(0.3, 0.0), 1.0, 0.0, &c);
        assert_eq!(p, vec![1.0, 0.0]);
    }
}
