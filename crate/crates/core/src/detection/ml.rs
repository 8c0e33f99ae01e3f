use num_complex::Complex64;

use super::{DetectionResult, LinearModel};
use crate::constellation::Constellation;
use crate::error::{shape_err, OtfsError, Result};

pub const DEFAULT_SEARCH_CAP: u64 = 1 << 20;
const RESYNC_DEPTH: usize = 8;

/// Exhaustive search over every symbol sequence. `sequence` holds the
/// minimizer of `||y - H x||^2`; `posteriors` are the exact per-symbol
/// marginals at `noise_var` (so `hard_decisions` are symbol-wise MAP).
///
/// Hypotheses are visited in mixed-radix order with the residual updated
/// column by column; marginals are accumulated in one pass relative to the
/// running minimum metric.
pub fn detect_ml(
    y: &[Complex64],
    h: &impl LinearModel,
    noise_var: f64,
    c: &Constellation,
    search_cap: u64,
) -> Result<DetectionResult> {
    let h = h.model_matrix();
    let (rows, n) = (h.nrows(), h.ncols());
    if y.len() != rows {
        return shape_err(format!("observation of length {} for {rows} rows", y.len()));
    }
    if !(noise_var >= 0.0) {
        return Err(OtfsError::InputRange(format!("noise variance {noise_var}")));
    }
    let q = c.len();
    let total = u32::try_from(n)
        .ok()
        .and_then(|e| (q as u64).checked_pow(e))
        .filter(|t| *t <= search_cap)
        .ok_or_else(|| OtfsError::Resource(format!("{q}^{n} hypotheses exceed the search cap of {search_cap}")))?;
    let points = c.points();

    // start from the all-index-0 hypothesis
    let mut digits = vec![0usize; n];
    let mut resid: Vec<Complex64> = y.to_vec();
    for j in 0..n {
        for (r, hv) in resid.iter_mut().zip(h.column(j).iter()) {
            *r -= hv * points[0];
        }
    }
    let metric = |r: &[Complex64]| r.iter().map(|z| z.norm_sqr()).sum::<f64>();

    let soft = noise_var > 0.0;
    let mut best = metric(&resid);
    let mut best_seq = digits.clone();
    // acc[j][s] = sum over hypotheses with x_j = s of exp(-(d - best)/noise_var)
    let mut acc = vec![vec![0.0f64; q]; n];
    let add = |acc: &mut Vec<Vec<f64>>, digits: &[usize], w: f64| {
        for (a, &d) in acc.iter_mut().zip(digits) {
            a[d] += w;
        }
    };
    if soft {
        add(&mut acc, &digits, 1.0);
    }
    for _ in 1..total {
        // increment the counter, symbol 0 fastest
        let mut j = 0;
        loop {
            let old = digits[j];
            let new = (old + 1) % q;
            digits[j] = new;
            let delta = points[new] - points[old];
            for (r, hv) in resid.iter_mut().zip(h.column(j).iter()) {
                *r -= hv * delta;
            }
            if new != 0 {
                break;
            }
            j += 1;
        }
        if j >= RESYNC_DEPTH {
            // bound rounding drift from long runs of incremental updates
            resid.copy_from_slice(y);
            for (col, &d) in digits.iter().enumerate() {
                for (r, hv) in resid.iter_mut().zip(h.column(col).iter()) {
                    *r -= hv * points[d];
                }
            }
        }
        let d = metric(&resid);
        if d < best {
            if soft {
                let scale = (-(best - d) / noise_var).exp();
                acc.iter_mut().flatten().for_each(|v| *v *= scale);
            }
            best = d;
            best_seq.copy_from_slice(&digits);
        }
        if soft {
            add(&mut acc, &digits, (-(d - best) / noise_var).exp());
        }
    }

    let posteriors = if soft {
        acc.into_iter()
            .map(|a| {
                let s: f64 = a.iter().sum();
                a.into_iter().map(|v| v / s).collect()
            })
            .collect()
    } else {
        best_seq
            .iter()
            .map(|&d| {
                let mut p = vec![0.0; q];
                p[d] = 1.0;
                p
            })
            .collect()
    };
    let mut out = DetectionResult::from_posteriors(posteriors);
    out.sequence = Some(best_seq);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use nalgebra::{DMatrix, DVector};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_gives_nearest_points() {
        let qpsk = Constellation::qpsk();
        let mut r = RngStream::new(1, 1);
        let y: Vec<Complex64> = (0..6).map(|_| r.complex_gaussian(1.0)).collect();
        let det = detect_ml(&y, &DMatrix::<Complex64>::identity(6, 6), 0.3, &qpsk, DEFAULT_SEARCH_CAP).unwrap();
        let want: Vec<usize> = y.iter().map(|z| qpsk.nearest(*z)).collect();
        assert_eq!(det.sequence.as_ref().unwrap(), &want);
        assert_eq!(det.hard_decisions, want);
    }

    #[test]
    fn noiseless_invertible_recovers_input() {
        let qam = Constellation::qam16();
        let mut r = RngStream::new(2, 2);
        let h = DMatrix::from_fn(4, 4, |_, _| r.complex_gaussian(0.25));
        let idx: Vec<usize> = (0..4).map(|_| r.index(16)).collect();
        let x: Vec<Complex64> = idx.iter().map(|&i| qam.points()[i]).collect();
        let y = &h * DVector::from_vec(x);
        let det = detect_ml(y.as_slice(), &h, 0.0, &qam, DEFAULT_SEARCH_CAP).unwrap();
        assert_eq!(det.sequence.unwrap(), idx);
        assert_eq!(det.hard_decisions, idx);
    }

    #[test]
    fn two_by_two_bpsk_hand_enumeration() {
        let bpsk = Constellation::bpsk();
        let h = DMatrix::from_row_slice(2, 2, &[c(0.9, 0.1), c(0.4, -0.3), c(-0.2, 0.5), c(1.1, 0.0)]);
        let y = [c(0.3, 0.2), c(-0.8, 0.4)];
        let mut best = (f64::INFINITY, (0, 0));
        let mut post0 = [0.0; 2];
        let s2 = 0.5;
        let mut z = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                let (xa, xb) = (bpsk.points()[a], bpsk.points()[b]);
                let r0 = y[0] - h[(0, 0)] * xa - h[(0, 1)] * xb;
                let r1 = y[1] - h[(1, 0)] * xa - h[(1, 1)] * xb;
                let d = r0.norm_sqr() + r1.norm_sqr();
                if d < best.0 {
                    best = (d, (a, b));
                }
                post0[a] += (-d / s2).exp();
                z += (-d / s2).exp();
            }
        }
        let det = detect_ml(&y, &h, s2, &bpsk, 16).unwrap();
        assert_eq!(det.sequence.unwrap(), vec![best.1 .0, best.1 .1]);
        assert!((det.posteriors[0][0] - post0[0] / z).abs() < 1e-12);
        assert!((det.posteriors[0].iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cap_enforced() {
        let h = DMatrix::<Complex64>::identity(11, 11);
        let y = vec![Complex64::default(); 11];
        assert!(matches!(detect_ml(&y, &h, 1.0, &Constellation::bpsk(), 1024), Err(OtfsError::Resource(_))));
        assert!(detect_ml(&y[..10], &h.view((0, 0), (10, 10)).into_owned(), 1.0, &Constellation::bpsk(), 1024).is_ok());
    }
}
