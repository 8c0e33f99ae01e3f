//! Built-in invariant checks behind `otfs selftest`.

use num_complex::Complex64;

use super::config::ExperimentConfig;
use super::runner::{run_experiment, RunOptions};
use crate::channel::{apply_td, sample_channel, ChannelRealization, PowerDelayProfile};
use crate::error::Result;
use crate::grid::{CpScheme, FrameParams, ZeroPadPlacement};
use crate::modem::{add_cp, remove_cp, Waveform, WindowSpec};
use crate::pulse::{is_ideal_pulse, SampledPulse, DEFAULT_IDEALITY_TOL};
use crate::rng::RngStream;
use crate::transforms::{UnitaryDft, ZakTransform};

const TOL: f64 = 1e-10;
const AWGN_BITS: u64 = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

fn random_vec(rng: &mut RngStream, len: usize) -> Vec<Complex64> {
    (0..len).map(|_| rng.complex_gaussian(1.0)).collect()
}

fn energy(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// DFT matrix columns are orthonormal.
fn unitarity(rng: &mut RngStream) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for len in [1, 2, 7, 16, 30] {
        let f = UnitaryDft::new(len)?;
        let cols: Vec<Vec<Complex64>> = (0..len)
            .map(|i| {
                let mut e = vec![Complex64::default(); len];
                e[i] = Complex64::new(1.0, 0.0);
                f.forward(&mut e);
                e
            })
            .collect();
        for i in 0..len {
            for j in 0..len {
                let dot: Complex64 = cols[i].iter().zip(&cols[j]).map(|(a, b)| a.conj() * b).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((dot - target).norm());
            }
        }
    }
    let zak = ZakTransform::new(8, 4)?;
    let s = random_vec(rng, 32);
    let x = zak.dzt(&s)?;
    let tf = zak.isfft(&x)?;
    worst = worst.max((x.energy() - energy(&s)).abs() / energy(&s));
    worst = worst.max((tf.norm_squared() - energy(&s)).abs() / energy(&s));
    Ok(CheckOutcome::new("unitarity", worst < TOL, format!("max deviation {worst:.2e}")))
}

fn round_trips(rng: &mut RngStream) -> Result<CheckOutcome> {
    let zak = ZakTransform::new(8, 6)?;
    let s = random_vec(rng, 48);
    let mut worst = max_diff(&zak.idzt(&zak.dzt(&s)?)?, &s);
    let x = zak.dzt(&s)?;
    worst = worst.max(max_diff(zak.sfft(&zak.isfft(&x)?)?.as_slice(), x.as_slice()));
    worst = worst.max(max_diff(&zak.slot_idft(&zak.slot_dft(&s)?)?, &s));
    let base = FrameParams::reduced_cp(8, 6, 3)?;
    let schemes = [CpScheme::ReducedCp, CpScheme::FullCp, CpScheme::ZeroPad(ZeroPadPlacement::FrameTail)];
    for scheme in schemes {
        let params = base.with_cp(scheme, 3)?;
        worst = worst.max(max_diff(&remove_cp(&add_cp(&s, &params)?), &s));
        for w in [Waveform::Dzt(SampledPulse::rectangular(8, 6)), Waveform::Sfft(WindowSpec::rectangular())] {
            let y = w.demodulate(&w.modulate(&x, &params)?, &params)?;
            worst = worst.max(max_diff(y.as_slice(), x.as_slice()));
        }
    }
    Ok(CheckOutcome::new("round trips", worst < TOL, format!("max error {worst:.2e}")))
}

fn parseval(rng: &mut RngStream) -> Result<CheckOutcome> {
    let mut worst = 0.0f64;
    for (m, n) in [(4, 4), (16, 8), (5, 3)] {
        let zak = ZakTransform::new(m, n)?;
        let s = random_vec(rng, m * n);
        let e = energy(&s);
        worst = worst.max((zak.dzt(&s)?.energy() - e).abs() / e);
        worst = worst.max((zak.slot_dft(&s)?.norm_squared() - e).abs() / e);
    }
    Ok(CheckOutcome::new("Parseval", worst < TOL, format!("max relative energy error {worst:.2e}")))
}

/// With a per-slot prefix covering the delay spread, energy sent in one slot
/// stays in that slot.
fn full_cp_isi_free(rng: &mut RngStream) -> Result<CheckOutcome> {
    let (m, n, cp) = (16, 8, 4);
    let params = FrameParams::reduced_cp(m, n, 0)?.with_cp(CpScheme::FullCp, cp)?;
    let mut worst = 0.0f64;
    let mut isi_flagged = false;
    for _ in 0..20 {
        let ch = sample_channel(&PowerDelayProfile::uniform(3, cp, 2), rng)?;
        for slot in 0..n {
            let mut payload = vec![Complex64::default(); m * n];
            for v in &mut payload[slot * m..(slot + 1) * m] {
                *v = rng.complex_gaussian(1.0);
            }
            let r = apply_td(&ch, &add_cp(&payload, &params)?, &params)?;
            isi_flagged |= r.isi();
            let y = remove_cp(&r);
            let leak: f64 = y.iter().enumerate().filter(|(q, _)| q / m != slot).map(|(_, z)| z.norm_sqr()).sum();
            worst = worst.max(leak);
        }
    }
    let passed = worst < TOL && !isi_flagged;
    Ok(CheckOutcome::new("full-CP ISI freedom", passed, format!("max leaked energy {worst:.2e}")))
}

fn ideal_pulse() -> Result<CheckOutcome> {
    let params = FrameParams::reduced_cp(8, 4, 0)?;
    let g = SampledPulse::rectangular(8, 4);
    let report = is_ideal_pulse(&g, &g, &params, DEFAULT_IDEALITY_TOL)?;
    Ok(CheckOutcome::new(
        "one-slot rectangular pulse is ideal",
        report.ideal,
        format!("worst violation {:.2e} at {:?}", report.worst_violation, report.worst_at),
    ))
}

/// `Q(x) = erfc(x / sqrt 2) / 2`.
pub fn q_function(x: f64) -> f64 {
    0.5 * libm::erfc(x / std::f64::consts::SQRT_2)
}

/// Identity-channel BPSK through the full chain with MMSE detection against
/// `Q(sqrt(2 Es/N0))`, within three Wilson half-widths.
pub fn awgn_bpsk_check(seed: u64, snr_db: &[f64]) -> Result<Vec<CheckOutcome>> {
    let (m, n) = (16usize, 8usize);
    let frames = AWGN_BITS.div_ceil((m * n) as u64);
    let list = snr_db.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ");
    let cfg = ExperimentConfig::from_toml_str(&format!(
        "schema = 1\nseed = {seed}\n[frame]\nm = {m}\nn = {n}\n[channel]\nmodel = \"identity\"\n\
         [sweep]\nsnr_db = [{list}]\nmin_frame_errors = {}\nmax_trials = {frames}\n",
        frames + 1
    ))?;
    let out = run_experiment(&cfg, &RunOptions::default())?;
    Ok(out
        .records
        .iter()
        .map(|r| {
            let snr = 10f64.powf(r.snr_db / 10.0);
            let q = q_function((2.0 * snr).sqrt());
            let (ber, ci) = (r.counts.ber(), r.counts.ber_ci());
            CheckOutcome::new(
                &format!("AWGN BPSK at {} dB", r.snr_db),
                (ber - q).abs() <= 3.0 * ci,
                format!("BER {ber:.4e} vs Q {q:.4e} (half-width {ci:.2e}, {} bits)", r.counts.bits),
            )
        })
        .collect())
}

/// Run every check; an internal error marks its check as failed.
pub fn run_selftest(seed: u64) -> Vec<CheckOutcome> {
    let mut rng = RngStream::new(seed, 0);
    let mut out = Vec::new();
    let mut push = |name: &str, r: Result<CheckOutcome>| {
        out.push(r.unwrap_or_else(|e| CheckOutcome::new(name, false, e.to_string())));
    };
    push("unitarity", unitarity(&mut rng));
    push("round trips", round_trips(&mut rng));
    push("Parseval", parseval(&mut rng));
    push("full-CP ISI freedom", full_cp_isi_free(&mut rng));
    push("one-slot rectangular pulse is ideal", ideal_pulse());
    match awgn_bpsk_check(seed, &[0.0, 2.0, 4.0, 6.0]) {
        Ok(v) => out.extend(v),
        Err(e) => out.push(CheckOutcome::new("AWGN BPSK", false, e.to_string())),
    }
    let ch = ChannelRealization::new(vec![crate::channel::Path::new(Complex64::new(0.5, -0.25), 1, 2.0)]);
    let text_ok = ChannelRealization::from_text(&ch.to_text()).is_ok_and(|c| c == ch);
    out.push(CheckOutcome::new("channel text round trip", text_ok, String::new()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_function_reference() {
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        // Q(1) and Q(3) from tables
        assert!((q_function(1.0) - 0.158_655_253_931_457).abs() < 1e-12);
        assert!((q_function(3.0) - 0.001_349_898_031_630_1).abs() < 1e-12);
    }

    #[test]
    fn selftest_passes() {
        let checks = run_selftest(1);
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
        assert!(checks.len() >= 9);
    }
}
