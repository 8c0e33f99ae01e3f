use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{gaussian_posterior, moments, DetectionResult};
use crate::channel::{time_domain_matrix, ChannelRealization};
use crate::constellation::Constellation;
use crate::error::{shape_err, OtfsError, Result};
use crate::grid::{CpScheme, FrameParams};
use crate::linalg::{gram, hermitian_eigen};
use crate::modem::{remove_cp, TimeDomainFrame};
use crate::transforms::{ZakTransform, DEFAULT_MATRIX_CAP};

const NOISE_FLOOR: f64 = 1e-12;
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdidOptions {
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Weight of the new DD extrinsic in the prior fed back to the TD stage.
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Stop once no posterior probability moves by more than this.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub record_trajectory: bool,
}

fn default_max_iter() -> usize {
    10
}

fn default_damping() -> f64 {
    0.8
}

fn default_tol() -> f64 {
    1e-6
}

impl Default for CdidOptions {
    fn default() -> Self {
        Self { max_iter: default_max_iter(), damping: default_damping(), tol: default_tol(), record_trajectory: false }
    }
}

/// Per-channel state: `H_T` and the eigendecomposition of `H_T^H H_T`,
/// reused for every iteration and every noise level.
#[derive(Debug, Clone)]
pub struct CdidDetector {
    params: FrameParams,
    zak: ZakTransform,
    h: DMatrix<Complex64>,
    eigvecs: DMatrix<Complex64>,
    eigvals: Vec<f64>,
}

impl CdidDetector {
    pub fn new(ch: &ChannelRealization, params: &FrameParams) -> Result<Self> {
        if params.cp_scheme() != CpScheme::ReducedCp {
            return Err(OtfsError::Configuration("cross-domain detection expects a reduced-CP frame".into()));
        }
        let h = time_domain_matrix(ch, params, DEFAULT_MATRIX_CAP)?;
        let (eigvals, eigvecs) = hermitian_eigen(&gram(&h))?;
        let eigvals = eigvals.into_iter().map(|v| v.max(0.0)).collect();
        Ok(Self { params: *params, zak: ZakTransform::for_params(params)?, h, eigvecs, eigvals })
    }

    /// Iterate TD linear MMSE and DD symbol denoising on the prefix-free
    /// payload `r`.
    ///
    /// Each iteration: prior `(mu_x, v)` on DD symbols maps to TD through the
    /// IDZT; TD LMMSE gives a posterior mean and average variance; the
    /// TD extrinsic is moved to DD with the DZT; the DD denoiser forms symbol
    /// posteriors under a uniform symbol prior; the DD extrinsic, damped,
    /// becomes the next prior. The first iteration (zero-mean, unit-variance
    /// prior) is the LMMSE equalizer followed by a slicer.
    pub fn detect(
        &self,
        r: &[Complex64],
        noise_var: f64,
        c: &Constellation,
        opts: &CdidOptions,
    ) -> Result<DetectionResult> {
        let mn = self.params.mn();
        if r.len() != mn {
            return shape_err(format!("payload of {} samples, expected {mn}", r.len()));
        }
        if !(noise_var >= 0.0) {
            return Err(OtfsError::InputRange(format!("noise variance {noise_var}")));
        }
        if opts.max_iter == 0 || !(opts.damping > 0.0 && opts.damping <= 1.0) {
            return Err(OtfsError::Configuration("max_iter must be positive and damping in (0, 1]".into()));
        }
        let s2 = noise_var.max(NOISE_FLOOR);
        let r = DVector::from_column_slice(r);
        let hr = self.h.ad_mul(&r);
        let es = c.average_energy();

        let mut mu_x = vec![Complex64::default(); mn];
        let mut v_prior = es;
        let mut posteriors = vec![vec![1.0 / c.len() as f64; c.len()]; mn];
        let mut out = DetectionResult::default();
        for it in 1..=opts.max_iter {
            // TD prior
            let mut mu_s = mu_x.clone();
            self.zak.idzt_in_place(&mut mu_s);
            let mu_s = DVector::from_vec(mu_s);
            // TD LMMSE: s_hat = mu_s + V diag(v/(v l + s2)) V^H H^H (r - H mu_s)
            let resid = &hr - self.h.ad_mul(&(&self.h * &mu_s));
            let mut proj = self.eigvecs.ad_mul(&resid);
            let mut v_post = 0.0;
            for (p, &lam) in proj.iter_mut().zip(&self.eigvals) {
                *p *= v_prior / (v_prior * lam + s2);
                v_post += v_prior * s2 / (v_prior * lam + s2);
            }
            v_post /= mn as f64;
            let s_hat = &mu_s + &self.eigvecs * proj;
            // TD extrinsic
            let v_ext = if v_post < v_prior { 1.0 / (1.0 / v_post - 1.0 / v_prior) } else { f64::INFINITY };
            let mut x_ext: Vec<Complex64> = if v_ext.is_finite() {
                s_hat.iter().zip(mu_s.iter()).map(|(s, m)| (s / v_post - m / v_prior) * v_ext).collect()
            } else {
                mu_s.iter().copied().collect()
            };
            self.zak.dzt_in_place(&mut x_ext);
            let v_ext = v_ext.max(VARIANCE_FLOOR);
            // DD denoiser
            let new_post: Vec<Vec<f64>> = x_ext.iter().map(|z| gaussian_posterior(*z, 1.0, v_ext, c)).collect();
            let change = new_post
                .iter()
                .zip(&posteriors)
                .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
                .fold(0.0, f64::max);
            posteriors = new_post;
            out.iterations_used = it;
            if opts.record_trajectory {
                out.trajectory.push(posteriors.iter().map(|p| super::argmax(p)).collect());
            }
            if it > 1 && change < opts.tol {
                out.converged = true;
                break;
            }
            // DD extrinsic in the moment domain
            let mut means = Vec::with_capacity(mn);
            let mut w_bar = 0.0;
            for p in &posteriors {
                let (m, w) = moments(p, c);
                means.push(m);
                w_bar += w;
            }
            w_bar = (w_bar / mn as f64).max(VARIANCE_FLOOR);
            let (next_mu, next_v) = if w_bar < v_ext {
                let v_dd = 1.0 / (1.0 / w_bar - 1.0 / v_ext);
                let mu: Vec<Complex64> =
                    means.iter().zip(&x_ext).map(|(m, x)| (m / w_bar - x / v_ext) * v_dd).collect();
                (mu, v_dd)
            } else {
                (vec![Complex64::default(); mn], es)
            };
            let d = if it == 1 { 1.0 } else { opts.damping };
            for (m, nm) in mu_x.iter_mut().zip(&next_mu) {
                *m = nm * d + *m * (1.0 - d);
            }
            v_prior = (next_v * d + v_prior * (1.0 - d)).max(VARIANCE_FLOOR);
        }
        let hard = posteriors.iter().map(|p| super::argmax(p)).collect();
        out.hard_decisions = hard;
        out.posteriors = posteriors;
        Ok(out)
    }
}

/// Cross-domain iterative detection of a received reduced-CP frame.
pub fn detect_cdid(
    frame: &TimeDomainFrame,
    ch: &ChannelRealization,
    params: &FrameParams,
    noise_var: f64,
    c: &Constellation,
    opts: &CdidOptions,
) -> Result<DetectionResult> {
    if frame.samples().len() != params.stream_len() {
        return shape_err(format!("frame of {} samples, expected {}", frame.samples().len(), params.stream_len()));
    }
    CdidDetector::new(ch, params)?.detect(&remove_cp(frame), noise_var, c, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{add_awgn, apply_td, build_effective_dd, sample_channel, PowerDelayProfile};
    use crate::detection::detect_mmse;
    use crate::grid::DdFrame;
    use crate::modem::{Waveform, WindowSpec};
    use crate::rng::RngStream;

    fn transmit(
        ch: &ChannelRealization,
        p: &FrameParams,
        c: &Constellation,
        noise_var: f64,
        r: &mut RngStream,
    ) -> (Vec<usize>, TimeDomainFrame) {
        let idx: Vec<usize> = (0..p.mn()).map(|_| r.index(c.len())).collect();
        let x = DdFrame::from_fn(p.m(), p.n(), |l, k| c.points()[idx[l + k * p.m()]]);
        let wf = Waveform::Sfft(WindowSpec::rectangular());
        let mut rx = apply_td(ch, &wf.modulate(&x, p).unwrap(), p).unwrap();
        add_awgn(&mut rx, noise_var, r);
        (idx, rx)
    }

    #[test]
    fn identity_channel_first_iteration_exact() {
        let p = FrameParams::reduced_cp(8, 4, 1).unwrap();
        let c = Constellation::qpsk();
        let mut r = RngStream::new(1, 0);
        let ch = ChannelRealization::identity();
        let (idx, rx) = transmit(&ch, &p, &c, 0.0, &mut r);
        let det = detect_cdid(&rx, &ch, &p, 0.0, &c, &CdidOptions::default()).unwrap();
        assert_eq!(det.hard_decisions, idx);
        assert!(det.converged);
        assert!(det.iterations_used <= 2);
    }

    #[test]
    fn first_iteration_equals_mmse_decisions() {
        let p = FrameParams::reduced_cp(8, 8, 4).unwrap();
        let c = Constellation::bpsk();
        let pdp = PowerDelayProfile::uniform(4, 4, 2);
        let mut r = RngStream::new(2, 0);
        for _ in 0..20 {
            let ch = sample_channel(&pdp, &mut r).unwrap();
            let noise_var = 0.1;
            let (_, rx) = transmit(&ch, &p, &c, noise_var, &mut r);
            let opts = CdidOptions { max_iter: 1, ..Default::default() };
            let cd = detect_cdid(&rx, &ch, &p, noise_var, &c, &opts).unwrap();
            let y = crate::modem::demodulate(
                &rx,
                &crate::modem::Demodulation::Sfft { window: WindowSpec::rectangular() },
                &p,
            )
            .unwrap();
            let mm = detect_mmse(y.as_slice(), &build_effective_dd(&ch, &p).unwrap(), noise_var, &c).unwrap();
            assert_eq!(cd.hard_decisions, mm.hard_decisions);
        }
    }

    #[test]
    fn iterations_do_not_hurt_on_average() {
        let p = FrameParams::reduced_cp(16, 8, 6).unwrap();
        let c = Constellation::bpsk();
        let pdp = PowerDelayProfile::uniform(4, 6, 3);
        let mut r = RngStream::new(3, 0);
        let (mut e1, mut e10) = (0usize, 0usize);
        for _ in 0..60 {
            let ch = sample_channel(&pdp, &mut r).unwrap();
            let noise_var = 10f64.powf(-0.8);
            let (idx, rx) = transmit(&ch, &p, &c, noise_var, &mut r);
            let opts = CdidOptions { max_iter: 10, tol: 0.0, record_trajectory: true, ..Default::default() };
            let det = detect_cdid(&rx, &ch, &p, noise_var, &c, &opts).unwrap();
            let errs = |d: &[usize]| d.iter().zip(&idx).filter(|(a, b)| a != b).count();
            e1 += errs(&det.trajectory[0]);
            e10 += errs(det.trajectory.last().unwrap());
            for post in &det.posteriors {
                assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        assert!(e10 <= e1, "{e10} > {e1}");
    }

    #[test]
    fn requires_reduced_cp() {
        let p = FrameParams::reduced_cp(4, 4, 1).unwrap().with_cp(CpScheme::FullCp, 1).unwrap();
        assert!(CdidDetector::new(&ChannelRealization::identity(), &p).is_err());
    }
}
