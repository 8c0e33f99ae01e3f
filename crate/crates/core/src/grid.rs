//! Frame geometry and the delay-Doppler symbol grid.
//!
//! A frame spans `M` delay bins (subcarriers) and `N` Doppler bins (time
//! slots). Every vectorized quantity in the crate uses delay-major order:
//! grid entry `[l, k]` sits at vector index `q = l + k*M`. This coincides with
//! nalgebra's column-major storage of an `M x N` matrix, so `vec` is a view.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, OtfsError, Result};

/// Where the zero guard of a zero-padded frame sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ZeroPadPlacement {
    /// Last `cp_len` samples of every slot are forced to zero.
    #[default]
    PerSlot,
    /// `cp_len` zeros appended after the frame; receiver overlap-adds the tail.
    FrameTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpScheme {
    /// One CP of `cp_len` samples in front of every slot.
    FullCp,
    /// A single CP of `cp_len` samples in front of the frame.
    ReducedCp,
    /// Zero guard instead of a prefix.
    ZeroPad(ZeroPadPlacement),
}

/// Frame dimensions and numerology. The grid is critically sampled,
/// so `slot_duration * subcarrier_spacing == 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    m: usize,
    n: usize,
    delta_f: f64,
    cp_scheme: CpScheme,
    cp_len: usize,
}

impl FrameParams {
    pub const DEFAULT_SUBCARRIER_SPACING: f64 = 15e3;

    pub fn new(m: usize, n: usize, delta_f: f64, cp_scheme: CpScheme, cp_len: usize) -> Result<Self> {
        if m < 2 || n < 2 {
            return Err(OtfsError::Configuration(format!("grid must be at least 2x2, got M={m}, N={n}")));
        }
        if !(delta_f.is_finite() && delta_f > 0.0) {
            return Err(OtfsError::Configuration(format!("subcarrier spacing must be positive, got {delta_f}")));
        }
        if let CpScheme::ZeroPad(ZeroPadPlacement::PerSlot) | CpScheme::FullCp = cp_scheme {
            if cp_len >= m {
                return Err(OtfsError::Configuration(format!(
                    "per-slot guard of {cp_len} samples does not fit a slot of {m} samples"
                )));
            }
        }
        Ok(Self { m, n, delta_f, cp_scheme, cp_len })
    }

    /// Reduced-CP frame with the default subcarrier spacing.
    pub fn reduced_cp(m: usize, n: usize, cp_len: usize) -> Result<Self> {
        Self::new(m, n, Self::DEFAULT_SUBCARRIER_SPACING, CpScheme::ReducedCp, cp_len)
    }

    pub fn with_cp(self, cp_scheme: CpScheme, cp_len: usize) -> Result<Self> {
        Self::new(self.m, self.n, self.delta_f, cp_scheme, cp_len)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of grid points `M*N`.
    pub fn mn(&self) -> usize {
        self.m * self.n
    }

    pub fn subcarrier_spacing(&self) -> f64 {
        self.delta_f
    }

    pub fn slot_duration(&self) -> f64 {
        1.0 / self.delta_f
    }

    /// Time between consecutive samples, `T/M`.
    pub fn sample_period(&self) -> f64 {
        self.slot_duration() / self.m as f64
    }

    pub fn cp_scheme(&self) -> CpScheme {
        self.cp_scheme
    }

    pub fn cp_len(&self) -> usize {
        self.cp_len
    }

    /// Delay resolution `1/(M*delta_f)` in seconds.
    pub fn delay_resolution(&self) -> f64 {
        1.0 / (self.m as f64 * self.delta_f)
    }

    /// Doppler resolution `1/(N*T)` in Hz.
    pub fn doppler_resolution(&self) -> f64 {
        1.0 / (self.n as f64 * self.slot_duration())
    }

    /// Length of the transmitted sample stream including prefixes/guards.
    pub fn stream_len(&self) -> usize {
        match self.cp_scheme {
            CpScheme::FullCp => self.n * (self.m + self.cp_len),
            CpScheme::ReducedCp | CpScheme::ZeroPad(ZeroPadPlacement::FrameTail) => self.mn() + self.cp_len,
            CpScheme::ZeroPad(ZeroPadPlacement::PerSlot) => self.mn(),
        }
    }

    /// Stream position of payload sample `q = l + n*M`.
    pub fn payload_to_stream(&self, q: usize) -> usize {
        match self.cp_scheme {
            CpScheme::FullCp => {
                let (l, slot) = (q % self.m, q / self.m);
                slot * (self.m + self.cp_len) + self.cp_len + l
            }
            CpScheme::ReducedCp => q + self.cp_len,
            CpScheme::ZeroPad(_) => q,
        }
    }

    /// Payload sample whose value is transmitted at stream position `p`.
    /// Prefix samples resolve to the payload sample they copy; zero guards
    /// (and positions outside the stream) resolve to `None`.
    pub fn stream_source(&self, p: usize) -> Option<usize> {
        let (m, cp) = (self.m, self.cp_len);
        match self.cp_scheme {
            CpScheme::FullCp => {
                let block = m + cp;
                let slot = p / block;
                if slot >= self.n {
                    return None;
                }
                let off = p % block;
                let l = if off >= cp { off - cp } else { off + m - cp };
                Some(slot * m + l)
            }
            CpScheme::ReducedCp => {
                if p >= self.mn() + cp {
                    None
                } else if p >= cp {
                    Some(p - cp)
                } else {
                    Some(p + self.mn() - cp)
                }
            }
            CpScheme::ZeroPad(ZeroPadPlacement::PerSlot) => {
                if p >= self.mn() || p % m >= m - cp {
                    None
                } else {
                    Some(p)
                }
            }
            CpScheme::ZeroPad(ZeroPadPlacement::FrameTail) => (p < self.mn()).then_some(p),
        }
    }

    /// Stream positions the receiver sums into payload sample `q` once the
    /// prefix/guard is removed (two for the overlap-added frame tail).
    pub fn receive_positions(&self, q: usize) -> impl Iterator<Item = usize> {
        let tail = match self.cp_scheme {
            CpScheme::ZeroPad(ZeroPadPlacement::FrameTail) if q < self.cp_len => Some(self.mn() + q),
            _ => None,
        };
        std::iter::once(self.payload_to_stream(q)).chain(tail)
    }

    /// Samples preceding the first payload sample; the Doppler phase clock
    /// starts at the first payload sample.
    pub fn leading_guard(&self) -> usize {
        match self.cp_scheme {
            CpScheme::FullCp | CpScheme::ReducedCp => self.cp_len,
            CpScheme::ZeroPad(_) => 0,
        }
    }
}

/// An `M x N` delay-Doppler matrix, entry `[l, k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DdFrame {
    data: DMatrix<Complex64>,
}

impl DdFrame {
    pub fn zeros(m: usize, n: usize) -> Self {
        Self { data: DMatrix::zeros(m, n) }
    }

    pub fn from_matrix(data: DMatrix<Complex64>) -> Self {
        Self { data }
    }

    pub fn from_fn(m: usize, n: usize, f: impl FnMut(usize, usize) -> Complex64) -> Self {
        Self { data: DMatrix::from_fn(m, n, f) }
    }

    pub fn m(&self) -> usize {
        self.data.nrows()
    }

    pub fn n(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.data
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<Complex64> {
        &mut self.data
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.data
    }

    pub fn get(&self, l: usize, k: usize) -> Complex64 {
        self.data[(l, k)]
    }

    pub fn set(&mut self, l: usize, k: usize, v: Complex64) {
        self.data[(l, k)] = v;
    }

    /// Squared Frobenius norm.
    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Vectorize with `q = l + k*M`.
    pub fn vec(&self) -> Vec<Complex64> {
        self.data.as_slice().to_vec()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        self.data.as_slice()
    }

    pub fn check_shape(&self, params: &FrameParams) -> Result<()> {
        if self.m() != params.m() || self.n() != params.n() {
            return shape_err(format!(
                "frame is {}x{}, parameters expect {}x{}",
                self.m(),
                self.n(),
                params.m(),
                params.n()
            ));
        }
        Ok(())
    }
}

/// Vectorize a frame (`q = l + k*M`).
pub fn vec(frame: &DdFrame) -> Vec<Complex64> {
    frame.vec()
}

/// Inverse of [`vec`].
pub fn unvec(v: &[Complex64], m: usize, n: usize) -> Result<DdFrame> {
    if v.len() != m * n {
        return shape_err(format!("vector of length {} cannot fill a {m}x{n} grid", v.len()));
    }
    Ok(DdFrame { data: DMatrix::from_column_slice(m, n, v) })
}

/// `[x]_n`, the non-negative remainder.
pub(crate) fn wrap(x: i64, n: usize) -> usize {
    x.rem_euclid(n as i64) as usize
}
