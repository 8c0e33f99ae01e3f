//! Time-frequency windows.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::transforms::dft;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowKind {
    #[default]
    Rectangular,
    /// Dolph-Chebyshev window with the given sidelobe attenuation in dB.
    DolphChebyshev(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowPlacement {
    #[default]
    Tx,
    Rx,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct WindowSpec {
    pub kind: WindowKind,
    pub applied_at: WindowPlacement,
}

impl WindowSpec {
    pub const DEFAULT_SIDELOBE_DB: f64 = 60.0;

    pub fn rectangular() -> Self {
        Self::default()
    }

    pub fn dolph_chebyshev(sidelobe_db: f64, applied_at: WindowPlacement) -> Self {
        Self { kind: WindowKind::DolphChebyshev(sidelobe_db), applied_at }
    }

    pub fn is_rectangular(&self) -> bool {
        self.kind == WindowKind::Rectangular
    }

    pub fn at_tx(&self) -> bool {
        matches!(self.applied_at, WindowPlacement::Tx | WindowPlacement::Both)
    }

    pub fn at_rx(&self) -> bool {
        matches!(self.applied_at, WindowPlacement::Rx | WindowPlacement::Both)
    }

    /// `N x M` real multipliers with `||W||_F^2 = NM`.
    pub fn matrix(&self, m: usize, n: usize) -> DMatrix<f64> {
        match self.kind {
            WindowKind::Rectangular => DMatrix::from_element(n, m, 1.0),
            WindowKind::DolphChebyshev(at) => {
                let (wn, wm) = (chebwin(n, at), chebwin(m, at));
                let mut w = DMatrix::from_fn(n, m, |i, j| wn[i] * wm[j]);
                let scale = ((n * m) as f64).sqrt() / w.norm();
                w *= scale;
                w
            }
        }
    }
}

/// Dolph-Chebyshev taps normalized to unit peak.
pub fn chebwin(len: usize, sidelobe_db: f64) -> Vec<f64> {
    match len {
        0 => return Vec::new(),
        1 => return vec![1.0],
        _ => {}
    }
    let order = (len - 1) as f64;
    let beta = ((10f64.powf(sidelobe_db.abs() / 20.0)).acosh() / order).cosh();
    let odd = len % 2 == 1;
    let p: Vec<Complex64> = (0..len)
        .map(|k| {
            let x = beta * (PI * k as f64 / len as f64).cos();
            let v = if x > 1.0 {
                (order * x.acosh()).cosh()
            } else if x < -1.0 {
                let sign = if odd { 1.0 } else { -1.0 };
                sign * (order * (-x).acosh()).cosh()
            } else {
                (order * x.acos()).cos()
            };
            if odd {
                Complex64::new(v, 0.0)
            } else {
                Complex64::from_polar(v, PI / len as f64 * k as f64)
            }
        })
        .collect();
    let spectrum: Vec<f64> = dft(&p).expect("non-empty").iter().map(|z| z.re).collect();
    let mut w: Vec<f64> = if odd {
        let half = len.div_ceil(2);
        spectrum[1..half].iter().rev().chain(&spectrum[..half]).copied().collect()
    } else {
        let half = len / 2 + 1;
        spectrum[1..half].iter().rev().chain(&spectrum[1..half]).copied().collect()
    };
    let peak = w.iter().copied().fold(f64::MIN, f64::max);
    w.iter_mut().for_each(|v| *v /= peak);
    w
}
