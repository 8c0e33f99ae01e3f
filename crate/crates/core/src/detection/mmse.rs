use nalgebra::DVector;
use num_complex::Complex64;

use super::{gaussian_posterior, DetectionResult, LinearModel};
use crate::constellation::Constellation;
use crate::error::{shape_err, OtfsError, Result};
use crate::linalg::{cholesky_solve, gram};

// diagonal loading, relative to the mean diagonal, for singular systems
const REGULARIZATION: f64 = 1e-10;

/// Linear MMSE estimate with per-symbol bias `mu_q` and error variance
/// `nu_q = mu_q (1 - mu_q)` (unit-energy symbols).
#[derive(Debug, Clone, PartialEq)]
pub struct MmseEstimate {
    pub estimate: Vec<Complex64>,
    pub bias: Vec<f64>,
    pub variance: Vec<f64>,
    pub regularized: bool,
}

/// `x_hat = (H^H H + s I)^{-1} H^H y`, which equals `H^H (H H^H + s I)^{-1} y`.
pub fn mmse_estimate(y: &[Complex64], h: &impl LinearModel, noise_var: f64) -> Result<MmseEstimate> {
    let h = h.model_matrix();
    if y.len() != h.nrows() {
        return shape_err(format!("observation of length {} for {} rows", y.len(), h.nrows()));
    }
    if !(noise_var >= 0.0) {
        return Err(OtfsError::InputRange(format!("noise variance {noise_var}")));
    }
    let n = h.ncols();
    let gram = gram(h);
    let rhs = h.adjoint() * DVector::from_column_slice(y);
    let loaded = |s: f64| {
        let mut a = gram.clone();
        for i in 0..n {
            a[(i, i)] += Complex64::new(s, 0.0);
        }
        a
    };
    if noise_var.is_infinite() {
        return Ok(MmseEstimate {
            estimate: vec![Complex64::default(); n],
            bias: vec![0.0; n],
            variance: vec![0.0; n],
            regularized: false,
        });
    }
    let mut load = noise_var;
    let mut regularized = false;
    let (estimate, inv_diag) = match cholesky_solve(&loaded(load), &rhs) {
        Some(sol) => sol,
        None => {
            regularized = true;
            let mean_diag = (0..n).map(|i| gram[(i, i)].re).sum::<f64>() / n.max(1) as f64;
            load += REGULARIZATION * mean_diag.max(1.0);
            cholesky_solve(&loaded(load), &rhs)
                .ok_or_else(|| OtfsError::Numerical("MMSE system singular after regularization".into()))?
        }
    };
    // diag(A^{-1} H^H H) = 1 - load * diag(A^{-1})
    let bias: Vec<f64> = inv_diag.iter().map(|d| (1.0 - load * d).clamp(0.0, 1.0)).collect();
    let variance = bias.iter().map(|m| m * (1.0 - m)).collect();
    Ok(MmseEstimate { estimate: estimate.as_slice().to_vec(), bias, variance, regularized })
}

/// MMSE equalization followed by Gaussian-approximation soft demapping.
pub fn detect_mmse(
    y: &[Complex64],
    h: &impl LinearModel,
    noise_var: f64,
    c: &Constellation,
) -> Result<DetectionResult> {
    let est = mmse_estimate(y, h, noise_var)?;
    let posteriors = est
        .estimate
        .iter()
        .zip(est.bias.iter().zip(&est.variance))
        .map(|(z, (mu, nu))| gaussian_posterior(*z, *mu, *nu, c))
        .collect();
    let mut out = DetectionResult::from_posteriors(posteriors);
    out.regularized = est.regularized;
    Ok(out)
}
