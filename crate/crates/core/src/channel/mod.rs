//! Doubly-dispersive channels.
//!
//! A realization is a list of paths `(h_i, l_i, k_i)` with an integer delay
//! index and a (possibly fractional) Doppler index. In the time domain a path
//! acts as
//!
//! ```text
//! r[n] += h_i * exp(j2pi k_i (n - l_i) / MN) * s[n - l_i]
//! ```
//!
//! where `n` counts samples from the first payload sample. This is the single
//! phase convention of the crate; the DD input-output relation derived from
//! it is in [`effective::dd_coefficient`].

mod apply;
pub mod effective;

pub use apply::{add_awgn, apply_td};
pub use effective::{
    build_effective_dd, build_effective_dd_shaped, build_effective_ofdm, build_effective_td, dd_coefficient,
    dd_input_output, dd_response, effective_with_prefix, nominal_dd_gain, time_domain_matrix, ChannelDomain,
    ChannelScheme, DdTap, EffectiveChannel, LinearModel, OfdmPrefix,
};

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{OtfsError, Result};
use crate::grid::FrameParams;
use crate::rng::RngStream;

const INTEGER_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Path {
    pub gain: Complex64,
    pub delay: usize,
    pub doppler: f64,
}

impl Path {
    pub fn new(gain: Complex64, delay: usize, doppler: f64) -> Self {
        Self { gain, delay, doppler }
    }

    pub fn has_integer_doppler(&self) -> bool {
        (self.doppler - self.doppler.round()).abs() < INTEGER_TOL
    }

    /// Delay in seconds, `l_i / (M delta_f)`.
    pub fn tau(&self, params: &FrameParams) -> f64 {
        self.delay as f64 * params.delay_resolution()
    }

    /// Doppler shift in Hz, `k_i / (N T)`.
    pub fn nu(&self, params: &FrameParams) -> f64 {
        self.doppler * params.doppler_resolution()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChannelRealization {
    paths: Vec<Path>,
}

impl ChannelRealization {
    pub fn new(paths: Vec<Path>) -> Self {
        Self { paths }
    }

    /// Single unit path with no delay or Doppler.
    pub fn identity() -> Self {
        Self::new(vec![Path::new(Complex64::new(1.0, 0.0), 0, 0.0)])
    }

    pub fn paths(&self) -> &[Path] {
        &self.paths
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn is_integer(&self) -> bool {
        self.paths.iter().all(Path::has_integer_doppler)
    }

    pub fn max_delay(&self) -> usize {
        self.paths.iter().map(|p| p.delay).max().unwrap_or(0)
    }

    pub fn energy(&self) -> f64 {
        self.paths.iter().map(|p| p.gain.norm_sqr()).sum()
    }

    /// Text record: one path per line, `gain_re gain_im delay doppler`.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# otfs channel v1\n# gain_re gain_im delay doppler\n");
        for p in &self.paths {
            let _ = writeln!(out, "{:?} {:?} {} {:?}", p.gain.re, p.gain.im, p.delay, p.doppler);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut paths = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let bad = || OtfsError::InputShape(format!("channel record line {}: `{line}`", lineno + 1));
            if fields.len() != 4 {
                return Err(bad());
            }
            let re: f64 = fields[0].parse().map_err(|_| bad())?;
            let im: f64 = fields[1].parse().map_err(|_| bad())?;
            let delay: usize = fields[2].parse().map_err(|_| bad())?;
            let doppler: f64 = fields[3].parse().map_err(|_| bad())?;
            paths.push(Path::new(Complex64::new(re, im), delay, doppler));
        }
        Ok(Self::new(paths))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PdpKind {
    #[default]
    Uniform,
    /// Tap power proportional to `exp(-exponent * l)`.
    Exponential(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum DopplerMode {
    #[default]
    Integer,
    Fractional,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerDelayProfile {
    pub kind: PdpKind,
    pub paths: usize,
    pub l_max: usize,
    pub k_max: usize,
    #[serde(default)]
    pub doppler: DopplerMode,
}

impl PowerDelayProfile {
    pub fn uniform(paths: usize, l_max: usize, k_max: usize) -> Self {
        Self { kind: PdpKind::Uniform, paths, l_max, k_max, doppler: DopplerMode::Integer }
    }

    pub fn exponential(exponent: f64, paths: usize, l_max: usize, k_max: usize) -> Self {
        Self { kind: PdpKind::Exponential(exponent), paths, l_max, k_max, doppler: DopplerMode::Integer }
    }

    pub fn fractional(mut self) -> Self {
        self.doppler = DopplerMode::Fractional;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(OtfsError::Configuration("channel needs at least one path".into()));
        }
        if self.paths > self.l_max + 1 {
            return Err(OtfsError::Configuration(format!(
                "{} paths with distinct delays do not fit delays 0..={}",
                self.paths, self.l_max
            )));
        }
        if let PdpKind::Exponential(e) = self.kind {
            if !e.is_finite() {
                return Err(OtfsError::Configuration("exponential PDP exponent must be finite".into()));
            }
        }
        Ok(())
    }

    /// Normalized tap powers for the given delays.
    pub fn tap_powers(&self, delays: &[usize]) -> Vec<f64> {
        let raw: Vec<f64> = delays
            .iter()
            .map(|&l| match self.kind {
                PdpKind::Uniform => 1.0,
                PdpKind::Exponential(e) => (-e * l as f64).exp(),
            })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / total).collect()
    }
}

/// Draw delays (distinct, tap 0 always present), Dopplers and Rayleigh gains.
pub fn sample_channel(pdp: &PowerDelayProfile, rng: &mut RngStream) -> Result<ChannelRealization> {
    pdp.validate()?;
    // partial Fisher-Yates over 1..=l_max
    let mut pool: Vec<usize> = (1..=pdp.l_max).collect();
    let mut delays = vec![0usize];
    for i in 0..pdp.paths - 1 {
        let j = i + rng.index(pool.len() - i);
        pool.swap(i, j);
        delays.push(pool[i]);
    }
    delays.sort_unstable();
    let powers = pdp.tap_powers(&delays);
    let k_max = pdp.k_max as i64;
    let paths = delays
        .iter()
        .zip(&powers)
        .map(|(&delay, &power)| {
            let doppler = match pdp.doppler {
                DopplerMode::Integer => rng.int_range(-k_max, k_max) as f64,
                DopplerMode::Fractional => (2.0 * rng.uniform() - 1.0) * k_max as f64,
            };
            Path::new(rng.complex_gaussian(power), delay, doppler)
        })
        .collect();
    Ok(ChannelRealization::new(paths))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_path_unit_energy() {
        let pdp = PowerDelayProfile::uniform(1, 0, 0);
        let mut r = RngStream::new(5, 0);
        let n = 100_000;
        let mean = (0..n).map(|_| sample_channel(&pdp, &mut r).unwrap().energy()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
    }

    #[test]
    fn exponential_profile_powers() {
        let pdp = PowerDelayProfile::exponential(0.1, 5, 4, 3);
        let powers = pdp.tap_powers(&[0, 1, 2, 3, 4]);
        let z: f64 = (0..5).map(|l| (-0.1 * l as f64).exp()).sum();
        for (l, p) in powers.iter().enumerate() {
            assert!((p - (-0.1 * l as f64).exp() / z).abs() < 1e-15);
        }
        assert!((powers.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let mut r = RngStream::new(1, 2);
        let ch = sample_channel(&pdp, &mut r).unwrap();
        let delays: Vec<usize> = ch.paths().iter().map(|p| p.delay).collect();
        assert_eq!(delays, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn delays_distinct_and_bounded() {
        let pdp = PowerDelayProfile::uniform(4, 10, 5);
        let mut r = RngStream::new(2, 2);
        for _ in 0..500 {
            let ch = sample_channel(&pdp, &mut r).unwrap();
            let mut d: Vec<usize> = ch.paths().iter().map(|p| p.delay).collect();
            assert_eq!(d[0], 0);
            d.dedup();
            assert_eq!(d.len(), 4);
            assert!(ch.max_delay() <= 10);
            assert!(ch.paths().iter().all(|p| p.doppler.abs() <= 5.0 && p.has_integer_doppler()));
        }
        let frac = sample_channel(&pdp.fractional(), &mut r).unwrap();
        assert!(!frac.is_integer());
    }

    #[test]
    fn too_many_paths_rejected() {
        let mut r = RngStream::new(0, 0);
        assert!(matches!(
            sample_channel(&PowerDelayProfile::uniform(5, 3, 1), &mut r),
            Err(OtfsError::Configuration(_))
        ));
    }

    #[test]
    fn reproducible_draws() {
        let pdp = PowerDelayProfile::uniform(4, 10, 5);
        let a = sample_channel(&pdp, &mut RngStream::new(9, 4)).unwrap();
        let b = sample_channel(&pdp, &mut RngStream::new(9, 4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_record_round_trip() {
        let pdp = PowerDelayProfile::uniform(4, 10, 5).fractional();
        let ch = sample_channel(&pdp, &mut RngStream::new(3, 3)).unwrap();
        assert_eq!(ChannelRealization::from_text(&ch.to_text()).unwrap(), ch);
        assert!(ChannelRealization::from_text("1 2 3").is_err());
    }

    #[test]
    fn physical_delay_and_doppler() {
        let p = FrameParams::reduced_cp(32, 16, 4).unwrap();
        let path = Path::new(Complex64::new(1.0, 0.0), 2, -3.0);
        assert!((path.tau(&p) - 2.0 / (32.0 * 15e3)).abs() < 1e-18);
        assert!((path.nu(&p) + 3.0 * 15e3 / 16.0).abs() < 1e-9);
    }
}
