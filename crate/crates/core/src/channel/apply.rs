use std::f64::consts::PI;

use num_complex::Complex64;

use super::ChannelRealization;
use crate::error::{shape_err, Result};
use crate::grid::FrameParams;
use crate::modem::TimeDomainFrame;
use crate::rng::RngStream;

/// Pass a sample stream through the channel on the physical (linear) time
/// axis. Samples pushed past the end of the stream are dropped. The output
/// is flagged when a delay exceeds the prefix/guard.
pub fn apply_td(ch: &ChannelRealization, s: &TimeDomainFrame, params: &FrameParams) -> Result<TimeDomainFrame> {
    if s.samples().len() != params.stream_len() {
        return shape_err(format!("stream of {} samples, expected {}", s.samples().len(), params.stream_len()));
    }
    let mn = params.mn() as f64;
    let lead = params.leading_guard() as f64;
    let input = s.samples();
    let mut out = vec![Complex64::default(); input.len()];
    for path in ch.paths() {
        let l = path.delay;
        for p in l..input.len() {
            let t = p as f64 - lead - l as f64;
            let rot = Complex64::from_polar(1.0, 2.0 * PI * path.doppler * t / mn);
            out[p] += path.gain * rot * input[p - l];
        }
    }
    let isi = ch.max_delay() > params.cp_len();
    Ok(TimeDomainFrame::from_samples(out, *params)?.with_isi(isi))
}

/// Add circularly-symmetric white noise of variance `noise_var` per sample.
pub fn add_awgn(frame: &mut TimeDomainFrame, noise_var: f64, rng: &mut RngStream) {
    if noise_var <= 0.0 {
        return;
    }
    for z in frame.samples_mut() {
        *z += rng.complex_gaussian(noise_var);
    }
}
