//! Prefix and guard insertion/removal.

use num_complex::Complex64;

use crate::error::{shape_err, Result};
use crate::grid::{CpScheme, FrameParams, ZeroPadPlacement};

/// Transmitted (or received) sample stream laid out per the frame's CP scheme.
///
/// * full CP: `N` blocks of `cp_len + M` samples,
/// * reduced CP: `cp_len` prefix then the `MN` payload,
/// * zero padding per slot: `MN` samples, last `cp_len` of every slot zero,
/// * zero padding at the frame tail: `MN` payload then `cp_len` zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeDomainFrame {
    samples: Vec<Complex64>,
    params: FrameParams,
    isi: bool,
}

impl TimeDomainFrame {
    pub fn from_samples(samples: Vec<Complex64>, params: FrameParams) -> Result<Self> {
        if samples.len() != params.stream_len() {
            return shape_err(format!(
                "{:?} frame needs {} samples, got {}",
                params.cp_scheme(),
                params.stream_len(),
                samples.len()
            ));
        }
        Ok(Self { samples, params, isi: false })
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [Complex64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn scheme(&self) -> CpScheme {
        self.params.cp_scheme()
    }

    /// Set when the channel delay spread exceeded the prefix/guard.
    pub fn isi(&self) -> bool {
        self.isi
    }

    pub(crate) fn with_isi(mut self, isi: bool) -> Self {
        self.isi = isi;
        self
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub fn add_cp(payload: &[Complex64], params: &FrameParams) -> Result<TimeDomainFrame> {
    if payload.len() != params.mn() {
        return shape_err(format!("payload must hold {} samples, got {}", params.mn(), payload.len()));
    }
    let samples = (0..params.stream_len())
        .map(|p| params.stream_source(p).map_or(Complex64::default(), |q| payload[q]))
        .collect();
    TimeDomainFrame::from_samples(samples, *params)
}

/// Strip prefixes (or overlap-add a tail guard) back to `MN` payload samples.
pub fn remove_cp(frame: &TimeDomainFrame) -> Vec<Complex64> {
    let params = frame.params();
    (0..params.mn()).map(|q| params.receive_positions(q).map(|p| frame.samples[p]).sum()).collect()
}

/// Energy lost to the per-slot zero guard, as a fraction of payload energy.
pub fn zero_pad_power_loss(payload: &[Complex64], params: &FrameParams) -> f64 {
    if params.cp_scheme() != CpScheme::ZeroPad(ZeroPadPlacement::PerSlot) {
        return 0.0;
    }
    let total: f64 = payload.iter().map(|z| z.norm_sqr()).sum();
    if total == 0.0 {
        return 0.0;
    }
    let lost: f64 = payload
        .iter()
        .enumerate()
        .filter(|(q, _)| q % params.m() >= params.m() - params.cp_len())
        .map(|(_, z)| z.norm_sqr())
        .sum();
    lost / total
}
