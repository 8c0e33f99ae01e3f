//! Unitary transforms between the time-delay (TD), time-frequency (TF) and
//! delay-Doppler (DD) domains.
//!
//! Conventions:
//! * `dft`: `X[m] = n^{-1/2} sum_k x[k] e^{-j2pi km/n}`; `idft` is its adjoint.
//! * `sfft`: TF matrix (`N x M`, row = slot `n`, column = subcarrier `m`) to DD
//!   frame, `X_DD[l,k] = (MN)^{-1/2} sum_{n,m} X_TF[n,m] e^{-j2pi(nk/N - ml/M)}`.
//! * `dzt`: `DZ_s[l,k] = N^{-1/2} sum_n s[l + nM] e^{-j2pi nk/N}`.
//!
//! All transforms are unitary. With a one-slot rectangular pulse the DZT of
//! the received samples equals the SFFT of their per-slot DFT.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{shape_err, OtfsError, Result};
use crate::grid::{DdFrame, FrameParams};

/// Largest `MN` for which dense `MN x MN` matrices are built.
pub const DEFAULT_MATRIX_CAP: usize = 4096;

pub(crate) fn check_cap(mn: usize, cap: usize) -> Result<()> {
    if mn > cap {
        return Err(OtfsError::Resource(format!("dense {mn}x{mn} matrix exceeds the cap of {cap}")));
    }
    Ok(())
}

/// A planned unitary DFT of one size.
#[derive(Clone)]
pub struct UnitaryDft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl UnitaryDft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return shape_err("DFT size must be positive");
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            scale: 1.0 / (len as f64).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn forward(&self, buf: &mut [Complex64]) {
        self.forward.process(buf);
        buf.iter_mut().for_each(|z| *z *= self.scale);
    }

    pub fn inverse(&self, buf: &mut [Complex64]) {
        self.inverse.process(buf);
        buf.iter_mut().for_each(|z| *z *= self.scale);
    }
}

pub fn dft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let plan = UnitaryDft::new(x.len())?;
    let mut out = x.to_vec();
    plan.forward(&mut out);
    Ok(out)
}

pub fn idft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    let plan = UnitaryDft::new(x.len())?;
    let mut out = x.to_vec();
    plan.inverse(&mut out);
    Ok(out)
}

/// Planned DZT/IDZT (and the SFFT pair) for one grid.
#[derive(Clone)]
pub struct ZakTransform {
    m: usize,
    n: usize,
    doppler: UnitaryDft,
    delay: UnitaryDft,
}

impl std::fmt::Debug for ZakTransform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ZakTransform").field("m", &self.m).field("n", &self.n).finish()
    }
}

impl ZakTransform {
    pub fn new(m: usize, n: usize) -> Result<Self> {
        Ok(Self { m, n, doppler: UnitaryDft::new(n)?, delay: UnitaryDft::new(m)? })
    }

    pub fn for_params(params: &FrameParams) -> Result<Self> {
        Self::new(params.m(), params.n())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// In-place DZT of `MN` samples; output is the vectorized DD frame.
    pub fn dzt_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.m * self.n);
        self.along_slots(buf, true);
    }

    pub fn idzt_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.m * self.n);
        self.along_slots(buf, false);
    }

    // Sample l + nM and DD entry l + kM share a delay index, so both
    // transforms are an N-point DFT over the stride-M sequence of each row.
    fn along_slots(&self, buf: &mut [Complex64], forward: bool) {
        let mut row = vec![Complex64::default(); self.n];
        for l in 0..self.m {
            for (i, r) in row.iter_mut().enumerate() {
                *r = buf[l + i * self.m];
            }
            if forward {
                self.doppler.forward(&mut row);
            } else {
                self.doppler.inverse(&mut row);
            }
            for (i, r) in row.iter().enumerate() {
                buf[l + i * self.m] = *r;
            }
        }
    }

    pub fn dzt(&self, s: &[Complex64]) -> Result<DdFrame> {
        if s.len() != self.m * self.n {
            return shape_err(format!("DZT expects {} samples, got {}", self.m * self.n, s.len()));
        }
        let mut buf = s.to_vec();
        self.dzt_in_place(&mut buf);
        Ok(DdFrame::from_matrix(DMatrix::from_vec(self.m, self.n, buf)))
    }

    pub fn idzt(&self, x: &DdFrame) -> Result<Vec<Complex64>> {
        if x.m() != self.m || x.n() != self.n {
            return shape_err(format!("IDZT expects a {}x{} frame, got {}x{}", self.m, self.n, x.m(), x.n()));
        }
        let mut buf = x.vec();
        self.idzt_in_place(&mut buf);
        Ok(buf)
    }

    /// Per-slot DFT: `MN` samples to an `N x M` TF matrix.
    pub fn slot_dft(&self, s: &[Complex64]) -> Result<DMatrix<Complex64>> {
        if s.len() != self.m * self.n {
            return shape_err(format!("expected {} samples, got {}", self.m * self.n, s.len()));
        }
        let mut tf = DMatrix::zeros(self.n, self.m);
        let mut slot = vec![Complex64::default(); self.m];
        for n in 0..self.n {
            slot.copy_from_slice(&s[n * self.m..(n + 1) * self.m]);
            self.delay.forward(&mut slot);
            for (m, v) in slot.iter().enumerate() {
                tf[(n, m)] = *v;
            }
        }
        Ok(tf)
    }

    /// Per-slot inverse DFT (the Heisenberg transform with a rectangular
    /// one-slot pulse).
    pub fn slot_idft(&self, tf: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
        self.check_tf(tf)?;
        let mut s = vec![Complex64::default(); self.m * self.n];
        for n in 0..self.n {
            let slot = &mut s[n * self.m..(n + 1) * self.m];
            for (m, v) in slot.iter_mut().enumerate() {
                *v = tf[(n, m)];
            }
            self.delay.inverse(slot);
        }
        Ok(s)
    }

    pub fn sfft(&self, tf: &DMatrix<Complex64>) -> Result<DdFrame> {
        self.check_tf(tf)?;
        let mut dd = DMatrix::zeros(self.m, self.n);
        // DFT over slots for each subcarrier: column m of tf -> Doppler k
        let mut col = vec![Complex64::default(); self.n];
        let mut tmp = DMatrix::<Complex64>::zeros(self.n, self.m);
        for m in 0..self.m {
            col.iter_mut().enumerate().for_each(|(n, v)| *v = tf[(n, m)]);
            self.doppler.forward(&mut col);
            col.iter().enumerate().for_each(|(k, v)| tmp[(k, m)] = *v);
        }
        // inverse DFT over subcarriers: row k of tmp -> delay l
        let mut row = vec![Complex64::default(); self.m];
        for k in 0..self.n {
            row.iter_mut().enumerate().for_each(|(m, v)| *v = tmp[(k, m)]);
            self.delay.inverse(&mut row);
            row.iter().enumerate().for_each(|(l, v)| dd[(l, k)] = *v);
        }
        Ok(DdFrame::from_matrix(dd))
    }

    pub fn isfft(&self, x: &DdFrame) -> Result<DMatrix<Complex64>> {
        if x.m() != self.m || x.n() != self.n {
            return shape_err("ISFFT frame shape mismatch");
        }
        let mut tmp = DMatrix::<Complex64>::zeros(self.n, self.m);
        let mut row = vec![Complex64::default(); self.m];
        for k in 0..self.n {
            row.iter_mut().enumerate().for_each(|(l, v)| *v = x.get(l, k));
            self.delay.forward(&mut row);
            row.iter().enumerate().for_each(|(m, v)| tmp[(k, m)] = *v);
        }
        let mut tf = DMatrix::zeros(self.n, self.m);
        let mut col = vec![Complex64::default(); self.n];
        for m in 0..self.m {
            col.iter_mut().enumerate().for_each(|(k, v)| *v = tmp[(k, m)]);
            self.doppler.inverse(&mut col);
            col.iter().enumerate().for_each(|(n, v)| tf[(n, m)] = *v);
        }
        Ok(tf)
    }

    fn check_tf(&self, tf: &DMatrix<Complex64>) -> Result<()> {
        if tf.nrows() != self.n || tf.ncols() != self.m {
            return shape_err(format!(
                "TF matrix must be {}x{} (slots x subcarriers), got {}x{}",
                self.n,
                self.m,
                tf.nrows(),
                tf.ncols()
            ));
        }
        Ok(())
    }

    /// `U * A * U^H` for an `MN x MN` matrix `A`, via column transforms.
    pub fn similarity(&self, a: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut ua = a.clone();
        self.transform_columns(&mut ua, true);
        let mut t = ua.adjoint();
        self.transform_columns(&mut t, true);
        t.adjoint()
    }

    /// Apply the DZT (`forward`) or IDZT to every column.
    pub fn transform_columns(&self, a: &mut DMatrix<Complex64>, forward: bool) {
        let mn = self.m * self.n;
        debug_assert_eq!(a.nrows(), mn);
        for j in 0..a.ncols() {
            let col = &mut a.as_mut_slice()[j * mn..(j + 1) * mn];
            if forward {
                self.dzt_in_place(col);
            } else {
                self.idzt_in_place(col);
            }
        }
    }
}

pub fn dzt(s: &[Complex64], m: usize, n: usize) -> Result<DdFrame> {
    ZakTransform::new(m, n)?.dzt(s)
}

pub fn idzt(x: &DdFrame) -> Result<Vec<Complex64>> {
    ZakTransform::new(x.m(), x.n())?.idzt(x)
}

pub fn sfft(tf: &DMatrix<Complex64>) -> Result<DdFrame> {
    ZakTransform::new(tf.ncols(), tf.nrows())?.sfft(tf)
}

pub fn isfft(x: &DdFrame) -> Result<DMatrix<Complex64>> {
    ZakTransform::new(x.m(), x.n())?.isfft(x)
}

/// Explicit unitary `U` with `U * s = vec(dzt(s))`.
pub fn td_to_dd_matrix(params: &FrameParams, cap: usize) -> Result<DMatrix<Complex64>> {
    let (m, n) = (params.m(), params.n());
    check_cap(params.mn(), cap)?;
    let scale = 1.0 / (n as f64).sqrt();
    let mut u = DMatrix::zeros(m * n, m * n);
    for l in 0..m {
        for k in 0..n {
            for slot in 0..n {
                let phase = -2.0 * std::f64::consts::PI * ((slot * k) % n) as f64 / n as f64;
                u[(l + k * m, l + slot * m)] = Complex64::from_polar(scale, phase);
            }
        }
    }
    Ok(u)
}
