//! OTFS modulation and demodulation.
//!
//! Two transmitter realizations share one interface:
//! * SFFT path: ISFFT, optional TF window, per-slot inverse DFT (Heisenberg
//!   transform with a rectangular one-slot pulse), prefix insertion.
//! * DZT path: point-wise DD product with the pulse DZT, IDZT, prefix insertion.
//!
//! With the rectangular window and the one-slot rectangular pulse both paths
//! emit identical samples.

mod cp;
mod window;

pub use cp::{add_cp, remove_cp, zero_pad_power_loss, TimeDomainFrame};
pub use window::{chebwin, WindowKind, WindowPlacement, WindowSpec};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, OtfsError, Result};
use crate::grid::{DdFrame, FrameParams};
use crate::pulse::SampledPulse;
use crate::transforms::ZakTransform;

/// Receive-side DD filter for the DZT path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ReceiveFilter {
    /// Multiply by `conj(DZ_g)`.
    #[default]
    Matched,
    /// Divide by `DZ_g`; needs a zero-free pulse DZT.
    Inverse,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Demodulation<'a> {
    Sfft { window: WindowSpec },
    Dzt { pulse: &'a SampledPulse, filter: ReceiveFilter },
}

// relative magnitude below which a pulse DZT entry counts as zero
const DZT_ZERO: f64 = 1e-12;

pub fn modulate_sfft(x: &DdFrame, window: &WindowSpec, params: &FrameParams) -> Result<TimeDomainFrame> {
    x.check_shape(params)?;
    let zak = ZakTransform::for_params(params)?;
    let mut tf = zak.isfft(x)?;
    if window.at_tx() && !window.is_rectangular() {
        let w = window.matrix(params.m(), params.n());
        tf.zip_apply(&w, |z, w| *z *= w);
    }
    add_cp(&zak.slot_idft(&tf)?, params)
}

fn check_invertible(dz: &DdFrame) -> Result<()> {
    let peak = dz.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max);
    if let Some(q) = dz.as_slice().iter().position(|z| z.norm() <= DZT_ZERO * peak.max(f64::MIN_POSITIVE)) {
        return Err(OtfsError::Configuration(format!(
            "pulse DZT vanishes at [{}, {}]; receiver inversion impossible",
            q % dz.m(),
            q / dz.m()
        )));
    }
    Ok(())
}

/// `s = IDZT(X o DZ_g)`. The pulse DZT has unit RMS, so unit-energy symbols
/// give `E||s||^2 = MN`.
pub fn modulate_dzt(
    x: &DdFrame,
    pulse: &SampledPulse,
    params: &FrameParams,
    require_invertible: bool,
) -> Result<TimeDomainFrame> {
    x.check_shape(params)?;
    pulse.check_grid(params)?;
    let zak = ZakTransform::for_params(params)?;
    let dz = pulse.dzt()?;
    if require_invertible {
        check_invertible(&dz)?;
    }
    let mut buf: Vec<Complex64> = x.as_slice().iter().zip(dz.as_slice()).map(|(a, g)| a * g).collect();
    zak.idzt_in_place(&mut buf);
    add_cp(&buf, params)
}

pub fn demodulate(r: &TimeDomainFrame, mode: &Demodulation<'_>, params: &FrameParams) -> Result<DdFrame> {
    if r.samples().len() != params.stream_len() || r.params().mn() != params.mn() {
        return shape_err(format!("received {} samples, frame expects {}", r.samples().len(), params.stream_len()));
    }
    let zak = ZakTransform::for_params(params)?;
    let payload = remove_cp(r);
    match mode {
        Demodulation::Sfft { window } => {
            let mut tf = zak.slot_dft(&payload)?;
            if window.at_rx() && !window.is_rectangular() {
                let w = window.matrix(params.m(), params.n());
                tf.zip_apply(&w, |z, w| *z *= w);
            }
            zak.sfft(&tf)
        }
        Demodulation::Dzt { pulse, filter } => {
            pulse.check_grid(params)?;
            let dz = pulse.dzt()?;
            let mut y = zak.dzt(&payload)?;
            match filter {
                ReceiveFilter::Matched => {
                    y.matrix_mut().zip_apply(dz.matrix(), |z, g| *z *= g.conj());
                }
                ReceiveFilter::Inverse => {
                    check_invertible(&dz)?;
                    y.matrix_mut().zip_apply(dz.matrix(), |z, g| *z /= g);
                }
            }
            Ok(y)
        }
    }
}

/// A complete transmit/receive configuration for one frame.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Sfft(WindowSpec),
    Dzt(SampledPulse),
}

impl Waveform {
    pub fn modulate(&self, x: &DdFrame, params: &FrameParams) -> Result<TimeDomainFrame> {
        match self {
            Waveform::Sfft(w) => modulate_sfft(x, w, params),
            Waveform::Dzt(p) => modulate_dzt(x, p, params, false),
        }
    }

    pub fn demodulate(&self, r: &TimeDomainFrame, params: &FrameParams) -> Result<DdFrame> {
        match self {
            Waveform::Sfft(w) => demodulate(r, &Demodulation::Sfft { window: *w }, params),
            Waveform::Dzt(p) => demodulate(r, &Demodulation::Dzt { pulse: p, filter: ReceiveFilter::Matched }, params),
        }
    }
}
