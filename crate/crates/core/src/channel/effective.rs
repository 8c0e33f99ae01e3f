//! Effective channel matrices for OTFS and OFDM.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::{ChannelRealization, Path};
use crate::error::{shape_err, OtfsError, Result};
use crate::grid::{wrap, CpScheme, DdFrame, FrameParams};
use crate::pulse::SampledPulse;
use crate::transforms::{check_cap, UnitaryDft, ZakTransform, DEFAULT_MATRIX_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelDomain {
    Dd,
    Tf,
    Td,
}

/// Prefix arrangement of an OFDM frame of `N` symbols.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfdmPrefix {
    /// Every symbol carries its own cyclic prefix.
    PerSymbol(usize),
    /// No per-symbol prefix; the frame shares one prefix, like reduced-CP OTFS.
    SharedFrame(usize),
    /// No prefix at all; the linear channel is truncated at the frame edges.
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelScheme {
    Otfs(CpScheme),
    Ofdm(OfdmPrefix),
}

/// `MN x MN` map from transmitted symbols to received samples in one domain.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    matrix: DMatrix<Complex64>,
    domain: ChannelDomain,
    scheme: ChannelScheme,
}

impl EffectiveChannel {
    pub fn new(matrix: DMatrix<Complex64>, domain: ChannelDomain, scheme: ChannelScheme) -> Result<Self> {
        if !matrix.is_square() {
            return shape_err(format!("effective channel must be square, got {}x{}", matrix.nrows(), matrix.ncols()));
        }
        Ok(Self { matrix, domain, scheme })
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn domain(&self) -> ChannelDomain {
        self.domain
    }

    pub fn scheme(&self) -> ChannelScheme {
        self.scheme
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, x: &[Complex64]) -> Result<Vec<Complex64>> {
        if x.len() != self.dim() {
            return shape_err(format!("input of length {} for a {}-dim channel", x.len(), self.dim()));
        }
        Ok((&self.matrix * DVector::from_column_slice(x)).as_slice().to_vec())
    }

    /// Singular values in descending order.
    pub fn singular_values(&self) -> Vec<f64> {
        crate::linalg::singular_values(&self.matrix).unwrap_or_else(|_| {
            let mut sv: Vec<f64> = self.matrix.clone().singular_values().iter().copied().collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            sv
        })
    }
}

/// Anything that supplies a dense observation matrix `y = H x + n`.
pub trait LinearModel {
    fn model_matrix(&self) -> &DMatrix<Complex64>;
}

impl LinearModel for DMatrix<Complex64> {
    fn model_matrix(&self) -> &DMatrix<Complex64> {
        self
    }
}

impl LinearModel for EffectiveChannel {
    fn model_matrix(&self) -> &DMatrix<Complex64> {
        self.matrix()
    }
}

/// Payload-to-payload map after prefix removal: linear channel on the
/// physical stream, including whatever ISI the prefix fails to absorb.
pub fn time_domain_matrix(ch: &ChannelRealization, params: &FrameParams, cap: usize) -> Result<DMatrix<Complex64>> {
    let mn = params.mn();
    check_cap(mn, cap)?;
    let lead = params.leading_guard() as f64;
    let mut h = DMatrix::zeros(mn, mn);
    for q in 0..mn {
        for p in params.receive_positions(q) {
            for path in ch.paths() {
                let Some(src) = p.checked_sub(path.delay) else { continue };
                let Some(j) = params.stream_source(src) else { continue };
                let t = p as f64 - lead - path.delay as f64;
                h[(q, j)] += path.gain * Complex64::from_polar(1.0, 2.0 * PI * path.doppler * t / mn as f64);
            }
        }
    }
    Ok(h)
}

pub fn build_effective_td(ch: &ChannelRealization, params: &FrameParams) -> Result<EffectiveChannel> {
    let h = time_domain_matrix(ch, params, DEFAULT_MATRIX_CAP)?;
    EffectiveChannel::new(h, ChannelDomain::Td, ChannelScheme::Otfs(params.cp_scheme()))
}

/// `H_DD = U H_T U^H` for the rectangular pulse.
pub fn build_effective_dd(ch: &ChannelRealization, params: &FrameParams) -> Result<EffectiveChannel> {
    let h_t = time_domain_matrix(ch, params, DEFAULT_MATRIX_CAP)?;
    let zak = ZakTransform::for_params(params)?;
    EffectiveChannel::new(zak.similarity(&h_t), ChannelDomain::Dd, ChannelScheme::Otfs(params.cp_scheme()))
}

/// DD map of the DZT chain with a shaped pulse and matched receive filter:
/// `diag(conj(DZ_g)) U H_T U^H diag(DZ_g)`.
pub fn build_effective_dd_shaped(
    ch: &ChannelRealization,
    params: &FrameParams,
    pulse: &SampledPulse,
) -> Result<EffectiveChannel> {
    pulse.check_grid(params)?;
    let dz = pulse.dzt()?;
    let mut h = build_effective_dd(ch, params)?.into_matrix();
    let g = dz.as_slice();
    for j in 0..h.ncols() {
        for i in 0..h.nrows() {
            h[(i, j)] *= g[i].conj() * g[j];
        }
    }
    EffectiveChannel::new(h, ChannelDomain::Dd, ChannelScheme::Otfs(params.cp_scheme()))
}

/// OFDM frame of `N` symbols x `M` subcarriers, index `q = m + n*M`; input and
/// output are frequency-domain. `with_cp` selects a per-symbol prefix of
/// `params.cp_len()`; otherwise symbols share the frame prefix.
pub fn build_effective_ofdm(ch: &ChannelRealization, params: &FrameParams, with_cp: bool) -> Result<EffectiveChannel> {
    let prefix =
        if with_cp { OfdmPrefix::PerSymbol(params.cp_len()) } else { OfdmPrefix::SharedFrame(params.cp_len()) };
    effective_with_prefix(ch, params, prefix)
}

pub fn effective_with_prefix(
    ch: &ChannelRealization,
    params: &FrameParams,
    prefix: OfdmPrefix,
) -> Result<EffectiveChannel> {
    let geometry = match prefix {
        OfdmPrefix::PerSymbol(len) => params.with_cp(CpScheme::FullCp, len)?,
        OfdmPrefix::SharedFrame(len) => params.with_cp(CpScheme::ReducedCp, len)?,
        OfdmPrefix::Absent => params.with_cp(CpScheme::ReducedCp, 0)?,
    };
    let h_t = time_domain_matrix(ch, &geometry, DEFAULT_MATRIX_CAP)?;
    let dft = UnitaryDft::new(params.m())?;
    let mut fh = h_t;
    block_dft_columns(&mut fh, &dft);
    let mut t = fh.adjoint();
    block_dft_columns(&mut t, &dft);
    EffectiveChannel::new(t.adjoint(), ChannelDomain::Tf, ChannelScheme::Ofdm(prefix))
}

// per-symbol M-point DFT of every column
fn block_dft_columns(a: &mut DMatrix<Complex64>, dft: &UnitaryDft) {
    let m = dft.len();
    for col in a.column_iter_mut() {
        let mut buf: Vec<Complex64> = col.iter().copied().collect();
        for block in buf.chunks_mut(m) {
            dft.forward(block);
        }
        for (dst, src) in col.into_iter().zip(buf) {
            *dst = src;
        }
    }
}

/// One tap of the integer-Doppler DD relation, rectangular pulse:
/// output bin `(l, k)` receives `coeff * X[src_l, src_k]` from the path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdTap {
    pub coeff: Complex64,
    pub src_l: usize,
    pub src_k: usize,
}

/// `Y[l,k] += h e^{j2pi k_i (l - l_i)/MN} w X[[l-l_i]_M, [k-k_i]_N]`, where
/// `w = e^{-j2pi [k-k_i]_N / N}` if the delay wraps (`l < l_i`) and 1 otherwise.
///
/// The coefficient equals the nominal gain `h e^{-j2pi nu tau}` times the
/// unimodular residual `e^{j2pi k_i l / MN} w`.
pub fn dd_coefficient(path: &Path, l: usize, k: usize, m: usize, n: usize) -> Result<DdTap> {
    if !path.has_integer_doppler() {
        return Err(OtfsError::InputRange(format!("Doppler index {} is not an integer", path.doppler)));
    }
    let ki = path.doppler.round() as i64;
    let li = path.delay as i64;
    let src_l = wrap(l as i64 - li, m);
    let src_k = wrap(k as i64 - ki, n);
    let mn = (m * n) as f64;
    let mut coeff = path.gain * Complex64::from_polar(1.0, 2.0 * PI * ki as f64 * (l as i64 - li) as f64 / mn);
    if (l as i64) < li {
        coeff *= Complex64::from_polar(1.0, -2.0 * PI * src_k as f64 / n as f64);
    }
    Ok(DdTap { coeff, src_l, src_k })
}

/// Nominal DD gain `h e^{-j2pi nu tau} = h e^{-j2pi k l / MN}`.
pub fn nominal_dd_gain(path: &Path, m: usize, n: usize) -> Complex64 {
    path.gain * Complex64::from_polar(1.0, -2.0 * PI * path.doppler * path.delay as f64 / (m * n) as f64)
}

/// Direct evaluation of the integer-Doppler DD input-output relation.
pub fn dd_input_output(ch: &ChannelRealization, x: &DdFrame) -> Result<DdFrame> {
    let (m, n) = (x.m(), x.n());
    let mut y = DdFrame::zeros(m, n);
    for path in ch.paths() {
        for k in 0..n {
            for l in 0..m {
                let tap = dd_coefficient(path, l, k, m, n)?;
                let v = y.get(l, k) + tap.coeff * x.get(tap.src_l, tap.src_k);
                y.set(l, k, v);
            }
        }
    }
    Ok(y)
}

/// Sampled DD channel response `h_DD[l,k]`: impulses at `(l_i, k_i)` with the
/// nominal gain, or an N-point Dirichlet kernel along Doppler for fractional
/// indices.
pub fn dd_response(ch: &ChannelRealization, m: usize, n: usize) -> Result<DMatrix<Complex64>> {
    let mut h = DMatrix::zeros(m, n);
    for path in ch.paths() {
        if path.delay >= m {
            return Err(OtfsError::InputRange(format!("delay {} outside {m} delay bins", path.delay)));
        }
        let g = nominal_dd_gain(path, m, n);
        if path.has_integer_doppler() {
            h[(path.delay, wrap(path.doppler.round() as i64, n))] += g;
            continue;
        }
        for k in 0..n {
            let d: Complex64 = (0..n)
                .map(|s| Complex64::from_polar(1.0, 2.0 * PI * s as f64 * (path.doppler - k as f64) / n as f64))
                .sum::<Complex64>()
                / n as f64;
            h[(path.delay, k)] += g * d;
        }
    }
    Ok(h)
}
