//! Pulse analysis: sampled pulses, ambiguity functions, bi-orthogonality and
//! the pulse-shaped effective DD channel.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path as FsPath;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::channel::{dd_response, ChannelRealization};
use crate::error::{shape_err, OtfsError, Result};
use crate::grid::{DdFrame, FrameParams};
use crate::transforms::dzt;

pub const DEFAULT_IDEALITY_TOL: f64 = 1e-6;

/// `MN` samples of `g(t)` at `t = (l + nM) T/M`, periodically extended.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPulse {
    taps: Vec<Complex64>,
    m: usize,
    n: usize,
}

impl SampledPulse {
    /// Scales the taps to `||taps|| = sqrt(MN)`.
    pub fn new(taps: Vec<Complex64>, m: usize, n: usize) -> Result<Self> {
        let pulse = Self::raw(taps, m, n)?;
        let energy = pulse.energy();
        if energy == 0.0 || !energy.is_finite() {
            return Err(OtfsError::InputRange("pulse energy must be positive and finite".into()));
        }
        let scale = ((m * n) as f64 / energy).sqrt();
        Ok(Self { taps: pulse.taps.iter().map(|t| t * scale).collect(), m, n })
    }

    /// Taps kept exactly as given (analysis of unnormalized or zero pulses).
    pub fn raw(taps: Vec<Complex64>, m: usize, n: usize) -> Result<Self> {
        if taps.len() != m * n {
            return shape_err(format!("pulse needs {} taps, got {}", m * n, taps.len()));
        }
        Ok(Self { taps, m, n })
    }

    /// One-slot rectangle: `sqrt(N)` on the first `M` samples. Its DZT is
    /// identically one.
    pub fn rectangular(m: usize, n: usize) -> Self {
        Self::rectangular_samples(m, m, n).expect("one slot fits the frame")
    }

    /// Rectangle over the first `len` samples, normalized.
    pub fn rectangular_samples(len: usize, m: usize, n: usize) -> Result<Self> {
        if len == 0 || len > m * n {
            return Err(OtfsError::InputRange(format!("rectangle of {len} samples in a frame of {}", m * n)));
        }
        let taps = (0..m * n).map(|i| Complex64::new(if i < len { 1.0 } else { 0.0 }, 0.0)).collect();
        Self::new(taps, m, n)
    }

    pub fn taps(&self) -> &[Complex64] {
        &self.taps
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn energy(&self) -> f64 {
        self.taps.iter().map(|t| t.norm_sqr()).sum()
    }

    pub fn dzt(&self) -> Result<DdFrame> {
        dzt(&self.taps, self.m, self.n)
    }

    pub fn check_grid(&self, params: &FrameParams) -> Result<()> {
        if self.m != params.m() || self.n != params.n() {
            return shape_err(format!(
                "pulse sampled on {}x{}, frame is {}x{}",
                self.m,
                self.n,
                params.m(),
                params.n()
            ));
        }
        Ok(())
    }

    /// Two-column text format: `re,im` per line, `#` comments, optional
    /// `re,im` header. Taps are normalized on load.
    pub fn from_csv_str(text: &str, m: usize, n: usize) -> Result<Self> {
        let mut taps = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("re,im") {
                continue;
            }
            let bad = || OtfsError::InputShape(format!("pulse line {}: `{line}`", lineno + 1));
            let (re, im) = line.split_once(',').ok_or_else(bad)?;
            let re: f64 = re.trim().parse().map_err(|_| bad())?;
            let im: f64 = im.trim().parse().map_err(|_| bad())?;
            taps.push(Complex64::new(re, im));
        }
        Self::new(taps, m, n)
    }

    pub fn load(path: &FsPath, m: usize, n: usize) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OtfsError::InputShape(format!("cannot read {}: {e}", path.display())))?;
        Self::from_csv_str(&text, m, n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("re,im\n");
        for t in &self.taps {
            let _ = writeln!(out, "{:?},{:?}", t.re, t.im);
        }
        out
    }
}

/// Discrete cross ambiguity
/// `A[d, nu] = sum_t x[t] conj(y[t-d]) e^{-j2pi nu (t-d) dt} dt`
/// for integer sample lags `d` and Doppler values `nu` in Hz. Signals are
/// zero outside their support. Rows follow `lags`, columns `dopplers`.
pub fn cross_ambiguity(
    x: &[Complex64],
    y: &[Complex64],
    lags: &[i64],
    dopplers: &[f64],
    dt: f64,
) -> Result<DMatrix<Complex64>> {
    if x.len() != y.len() {
        return shape_err(format!("signals of length {} and {}", x.len(), y.len()));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(OtfsError::InputRange(format!("sample period {dt} must be positive")));
    }
    let len = x.len() as i64;
    if let Some(d) = lags.iter().find(|d| d.abs() >= len) {
        return Err(OtfsError::InputRange(format!("lag {d} outside the support of {len} samples")));
    }
    if let Some(nu) = dopplers.iter().find(|nu| !nu.is_finite()) {
        return Err(OtfsError::InputRange(format!("Doppler {nu} is not finite")));
    }
    let mut a = DMatrix::zeros(lags.len(), dopplers.len());
    for (i, &d) in lags.iter().enumerate() {
        let t0 = d.max(0);
        let t1 = (len + d).min(len);
        for (j, &nu) in dopplers.iter().enumerate() {
            let mut acc = Complex64::default();
            for t in t0..t1 {
                let u = t - d;
                let rot = Complex64::from_polar(1.0, -2.0 * PI * nu * u as f64 * dt);
                acc += x[t as usize] * y[u as usize].conj() * rot;
            }
            a[(i, j)] = acc * dt;
        }
    }
    Ok(a)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdealityReport {
    pub ideal: bool,
    /// Largest `|A(nT, m/T) - delta[n]delta[m]|` of the normalized ambiguity.
    pub worst_violation: f64,
    pub worst_at: (i64, i64),
    /// Every grid point `(n, m, deviation)` exceeding the tolerance.
    pub violations: Vec<(i64, i64, f64)>,
}

/// Bi-orthogonality on the frame grid: `A(nT, m/T) = delta[n] delta[m]` for
/// `|n| < N`, `|m| < M`, with the ambiguity normalized by
/// `sqrt(E_tx E_rx)`. A pulse without energy fails at the origin.
pub fn is_ideal_pulse(
    gtx: &SampledPulse,
    grx: &SampledPulse,
    params: &FrameParams,
    tol: f64,
) -> Result<IdealityReport> {
    gtx.check_grid(params)?;
    grx.check_grid(params)?;
    let (m, n) = (params.m() as i64, params.n() as i64);
    let dt = params.sample_period();
    let slot = params.slot_duration();
    let norm = (gtx.energy() * grx.energy()).sqrt() * dt;
    let lags: Vec<i64> = (-(n - 1)..n).map(|i| i * m).collect();
    let dopplers: Vec<f64> = (-(m - 1)..m).map(|j| j as f64 / slot).collect();
    let a = cross_ambiguity(gtx.taps(), grx.taps(), &lags, &dopplers, dt)?;
    let mut report = IdealityReport { ideal: true, worst_violation: 0.0, worst_at: (0, 0), violations: Vec::new() };
    for (i, ni) in (-(n - 1)..n).enumerate() {
        for (j, mj) in (-(m - 1)..m).enumerate() {
            let target = if ni == 0 && mj == 0 { 1.0 } else { 0.0 };
            let value = if norm > 0.0 { a[(i, j)] / norm } else { Complex64::default() };
            let dev = (value - target).norm();
            if dev > tol {
                report.violations.push((ni, mj, dev));
            }
            if dev > report.worst_violation {
                report.worst_violation = dev;
                report.worst_at = (ni, mj);
            }
        }
    }
    report.ideal = report.violations.is_empty();
    Ok(report)
}

/// `|DZ_g[l,k]|^2 h_DD[l,k]`, the channel seen through transmit pulse `g`
/// and its matched filter.
pub fn effective_dd_gain(
    g: &SampledPulse,
    ch: &ChannelRealization,
    params: &FrameParams,
) -> Result<DMatrix<Complex64>> {
    g.check_grid(params)?;
    let dz = g.dzt()?;
    let mut h = dd_response(ch, params.m(), params.n())?;
    h.zip_apply(dz.matrix(), |z, d| *z *= d.norm_sqr());
    Ok(h)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityMetric {
    pub occupied_bins: usize,
    pub leakage_energy: f64,
}

/// Bins with magnitude above `threshold * max` count as occupied; the energy
/// of the remaining bins is the leakage.
pub fn pulse_sparsity_metric(effective: &DMatrix<Complex64>, threshold: f64) -> SparsityMetric {
    let peak = effective.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut metric = SparsityMetric { occupied_bins: 0, leakage_energy: 0.0 };
    for z in effective.iter() {
        if peak > 0.0 && z.norm() > threshold * peak {
            metric.occupied_bins += 1;
        } else {
            metric.leakage_energy += z.norm_sqr();
        }
    }
    metric
}

/// Score candidate pulses on one channel; returns `(candidate index, metric)`
/// sorted by occupied bins, then leakage.
pub fn rank_pulses(
    candidates: &[SampledPulse],
    ch: &ChannelRealization,
    params: &FrameParams,
    threshold: f64,
) -> Result<Vec<(usize, SparsityMetric)>> {
    let mut scored = candidates
        .iter()
        .enumerate()
        .map(|(i, g)| Ok((i, pulse_sparsity_metric(&effective_dd_gain(g, ch, params)?, threshold))))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| {
        a.1.occupied_bins.cmp(&b.1.occupied_bins).then(a.1.leakage_energy.total_cmp(&b.1.leakage_energy))
    });
    Ok(scored)
}
