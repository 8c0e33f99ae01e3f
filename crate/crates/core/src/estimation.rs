//! Embedded-pilot channel estimation on the DD grid.
//!
//! One pilot of amplitude `A` sits at `(l_p, k_p)` inside a guard of delay
//! half-width `l_max` and Doppler half-width `2 k_max`. With integer delays
//! and Dopplers the pilot lands only in the read region
//! `[l_p, l_p + l_max] x [k_p - k_max, k_p + k_max]`, and no data symbol
//! reaches that region.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{dd_coefficient, dd_response, ChannelRealization, EffectiveChannel, Path};
use crate::error::{OtfsError, Result};
use crate::grid::{wrap, DdFrame};

pub const DEFAULT_PILOT_AMPLITUDE: f64 = 10.0;
pub const DEFAULT_THRESHOLD_FACTOR: f64 = 3.0;
// detection floor relative to the pilot amplitude, for noiseless frames
const NUMERICAL_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PilotConfig {
    pub pilot_pos: (usize, usize),
    #[serde(default = "default_amplitude")]
    pub pilot_amplitude: f64,
    pub l_max: usize,
    pub k_max: usize,
    #[serde(default = "default_threshold")]
    pub threshold_factor: f64,
    #[serde(default)]
    pub allow_wrap: bool,
}

fn default_amplitude() -> f64 {
    DEFAULT_PILOT_AMPLITUDE
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD_FACTOR
}

impl PilotConfig {
    /// Pilot at `(l_p, k_p)` with the default amplitude and threshold.
    pub fn new(pilot_pos: (usize, usize), l_max: usize, k_max: usize) -> Self {
        Self {
            pilot_pos,
            pilot_amplitude: DEFAULT_PILOT_AMPLITUDE,
            l_max,
            k_max,
            threshold_factor: DEFAULT_THRESHOLD_FACTOR,
            allow_wrap: false,
        }
    }

    /// Pilot in the middle of an `M x N` grid.
    pub fn centered(m: usize, n: usize, l_max: usize, k_max: usize) -> Self {
        Self::new((m / 2, n / 2), l_max, k_max)
    }

    pub fn with_amplitude(mut self, amplitude: f64) -> Self {
        self.pilot_amplitude = amplitude;
        self
    }

    pub fn with_threshold(mut self, factor: f64) -> Self {
        self.threshold_factor = factor;
        self
    }

    pub fn validate(&self, m: usize, n: usize) -> Result<()> {
        let (lp, kp) = self.pilot_pos;
        if lp >= m || kp >= n {
            return Err(OtfsError::Configuration(format!("pilot ({lp}, {kp}) outside the {m}x{n} grid")));
        }
        if !(self.pilot_amplitude >= 0.0 && self.pilot_amplitude.is_finite()) {
            return Err(OtfsError::Configuration("pilot amplitude must be finite and non-negative".into()));
        }
        if !(self.threshold_factor >= 0.0) {
            return Err(OtfsError::Configuration("threshold factor must be non-negative".into()));
        }
        let fits = 2 * self.l_max < m && 4 * self.k_max < n;
        if !fits && !self.allow_wrap {
            return Err(OtfsError::Configuration(format!(
                "guard of {}x{} bins overlaps itself on a {m}x{n} grid",
                2 * self.l_max + 1,
                4 * self.k_max + 1
            )));
        }
        if self.l_max >= m || 2 * self.k_max >= n {
            return Err(OtfsError::Configuration("read region wraps onto itself".into()));
        }
        Ok(())
    }

    fn in_guard(&self, l: usize, k: usize, m: usize, n: usize) -> bool {
        let (lp, kp) = self.pilot_pos;
        let dl = wrap(l as i64 - lp as i64 + self.l_max as i64, m);
        let dk = wrap(k as i64 - kp as i64 + 2 * self.k_max as i64, n);
        dl <= 2 * self.l_max && dk <= 4 * self.k_max
    }

    /// Read-region bins `(delta_l, delta_k, l, k)`.
    fn read_region(&self, m: usize, n: usize) -> impl Iterator<Item = (usize, i64, usize, usize)> + '_ {
        let (lp, kp) = self.pilot_pos;
        let k_max = self.k_max as i64;
        (0..=self.l_max)
            .flat_map(move |dl| (-k_max..=k_max).map(move |dk| (dl, dk, (lp + dl) % m, wrap(kp as i64 + dk, n))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Data,
    Pilot,
    Guard,
}

/// Region of every DD bin, delay-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMask {
    regions: Vec<Region>,
    m: usize,
    n: usize,
}

impl PilotMask {
    pub fn new(cfg: &PilotConfig, m: usize, n: usize) -> Result<Self> {
        cfg.validate(m, n)?;
        let mut regions = Vec::with_capacity(m * n);
        for k in 0..n {
            for l in 0..m {
                regions.push(if (l, k) == cfg.pilot_pos {
                    Region::Pilot
                } else if cfg.in_guard(l, k, m, n) {
                    Region::Guard
                } else {
                    Region::Data
                });
            }
        }
        Ok(Self { regions, m, n })
    }

    pub fn region(&self, l: usize, k: usize) -> Region {
        self.regions[l + k * self.m]
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    /// Vectorized indices of the data bins, ascending.
    pub fn data_indices(&self) -> Vec<usize> {
        self.regions.iter().enumerate().filter(|(_, r)| **r == Region::Data).map(|(q, _)| q).collect()
    }

    pub fn count(&self, region: Region) -> usize {
        self.regions.iter().filter(|r| **r == region).count()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Place the pilot and zero the guard; data bins are left untouched.
pub fn embed_pilot(x: &DdFrame, cfg: &PilotConfig) -> Result<(DdFrame, PilotMask)> {
    let mask = PilotMask::new(cfg, x.m(), x.n())?;
    let mut out = x.clone();
    for k in 0..x.n() {
        for l in 0..x.m() {
            match mask.region(l, k) {
                Region::Data => {}
                Region::Guard => out.set(l, k, Complex64::default()),
                Region::Pilot => out.set(l, k, Complex64::new(cfg.pilot_amplitude, 0.0)),
            }
        }
    }
    Ok((out, mask))
}

/// Frame carrying `symbols` on the data bins of `mask`, in ascending order.
pub fn place_data(symbols: &[Complex64], mask: &PilotMask, cfg: &PilotConfig) -> Result<DdFrame> {
    let idx = mask.data_indices();
    if symbols.len() != idx.len() {
        return Err(OtfsError::InputShape(format!("{} data bins, {} symbols", idx.len(), symbols.len())));
    }
    let mut frame = DdFrame::zeros(mask.m(), mask.n());
    let (lp, kp) = cfg.pilot_pos;
    frame.set(lp, kp, Complex64::new(cfg.pilot_amplitude, 0.0));
    for (q, s) in idx.into_iter().zip(symbols) {
        frame.set(q % mask.m(), q / mask.m(), *s);
    }
    Ok(frame)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub channel: ChannelRealization,
    /// Noise variance the threshold used.
    pub noise_var: f64,
    /// Set when the noise variance was estimated from the frame itself,
    /// which makes the threshold less reliable.
    pub noise_estimated: bool,
}

/// Threshold detection over the read region; each detected bin becomes a
/// path whose gain undoes the pilot amplitude and the DD phase factor.
/// Without a known noise variance it is estimated from the median read-region
/// power (most read bins hold noise only).
pub fn estimate_channel(y: &DdFrame, cfg: &PilotConfig, noise_var: Option<f64>) -> Result<ChannelEstimate> {
    let (m, n) = (y.m(), y.n());
    cfg.validate(m, n)?;
    if cfg.pilot_amplitude == 0.0 {
        return Err(OtfsError::Configuration("estimation needs a non-zero pilot".into()));
    }
    let (noise_var, noise_estimated) = match noise_var {
        Some(v) if v >= 0.0 && v.is_finite() => (v, false),
        Some(v) => return Err(OtfsError::InputRange(format!("noise variance {v}"))),
        None => {
            let mut powers: Vec<f64> = cfg.read_region(m, n).map(|(_, _, l, k)| y.get(l, k).norm_sqr()).collect();
            powers.sort_by(f64::total_cmp);
            let median = powers[powers.len() / 2];
            (median / std::f64::consts::LN_2, true)
        }
    };
    let threshold = (cfg.threshold_factor * noise_var.sqrt()).max(NUMERICAL_FLOOR * cfg.pilot_amplitude);
    let mut paths = Vec::new();
    for (dl, dk, l, k) in cfg.read_region(m, n) {
        let v = y.get(l, k);
        if v.norm() <= threshold {
            continue;
        }
        let unit = Path::new(Complex64::new(1.0, 0.0), dl, dk as f64);
        let phase = dd_coefficient(&unit, l, k, m, n)?.coeff;
        paths.push(Path::new(v / (cfg.pilot_amplitude * phase), dl, dk as f64));
    }
    Ok(ChannelEstimate { channel: ChannelRealization::new(paths), noise_var, noise_estimated })
}

/// `||H_est - H_true||_F^2 / ||H_true||_F^2`.
pub fn nmse(true_h: &EffectiveChannel, est_h: &EffectiveChannel) -> Result<f64> {
    if true_h.dim() != est_h.dim() {
        return Err(OtfsError::InputShape(format!("channels of dimension {} and {}", true_h.dim(), est_h.dim())));
    }
    let denom = true_h.matrix().norm_squared();
    if denom == 0.0 {
        return Err(OtfsError::Undefined("NMSE of a zero channel".into()));
    }
    Ok((est_h.matrix() - true_h.matrix()).norm_squared() / denom)
}

/// NMSE on the sampled DD responses. For integer channels with distinct
/// delay-Doppler bins this equals the dense-matrix NMSE, since the per-bin
/// shift structures of `H_DD` have disjoint supports.
pub fn nmse_dd(true_ch: &ChannelRealization, est_ch: &ChannelRealization, m: usize, n: usize) -> Result<f64> {
    let h = dd_response(true_ch, m, n)?;
    let denom = h.norm_squared();
    if denom == 0.0 {
        return Err(OtfsError::Undefined("NMSE of a zero channel".into()));
    }
    Ok((dd_response(est_ch, m, n)? - h).norm_squared() / denom)
}
