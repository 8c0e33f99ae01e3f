//! Convolutional coding, pairwise-error-probability bound, achievable rate
//! and diversity-slope estimation.

use serde::{Deserialize, Serialize};

use crate::channel::LinearModel;
use crate::error::{shape_err, OtfsError, Result};

const LLR_CLAMP: f64 = 50.0;

/// Feedforward rate `1/n` convolutional code with zero-tail termination.
/// Generators are octal, MSB on the current input bit: `(5, 7)` is the
/// memory-2 half-rate code with taps `1 + D^2` and `1 + D + D^2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvCode {
    pub generators: Vec<u32>,
    pub memory: usize,
}

impl Default for ConvCode {
    fn default() -> Self {
        Self { generators: vec![0o5, 0o7], memory: 2 }
    }
}

impl ConvCode {
    pub fn new(generators: Vec<u32>, memory: usize) -> Result<Self> {
        let code = Self { generators, memory };
        code.validate()?;
        Ok(code)
    }

    pub fn validate(&self) -> Result<()> {
        if self.generators.len() < 2 {
            return Err(OtfsError::Configuration("a code needs at least two generators".into()));
        }
        if self.memory == 0 || self.memory > 16 {
            return Err(OtfsError::Configuration(format!("memory {} outside 1..=16", self.memory)));
        }
        let limit = 1u32 << (self.memory + 1);
        if let Some(g) = self.generators.iter().find(|g| **g == 0 || **g >= limit) {
            return Err(OtfsError::Configuration(format!("generator {g:o} does not fit memory {}", self.memory)));
        }
        Ok(())
    }

    pub fn outputs_per_bit(&self) -> usize {
        self.generators.len()
    }

    /// Coded length for `k` message bits, tail included.
    pub fn coded_len(&self, k: usize) -> usize {
        self.outputs_per_bit() * (k + self.memory)
    }

    /// Largest message that fits `coded_bits` coded bits.
    pub fn message_len(&self, coded_bits: usize) -> usize {
        (coded_bits / self.outputs_per_bit()).saturating_sub(self.memory)
    }

    fn outputs(&self, reg: u32) -> impl Iterator<Item = u8> + '_ {
        self.generators.iter().map(move |g| ((reg & g).count_ones() & 1) as u8)
    }

    pub fn encode(&self, bits: &[u8]) -> Vec<u8> {
        let mut state = 0u32;
        let mut out = Vec::with_capacity(self.coded_len(bits.len()));
        for &b in bits.iter().chain(std::iter::repeat_n(&0u8, self.memory)) {
            let reg = (u32::from(b & 1) << self.memory) | state;
            out.extend(self.outputs(reg));
            state = reg >> 1;
        }
        out
    }

    /// Soft-input Viterbi decoding of LLRs `ln P(0)/P(1)` (clamped to +-50).
    /// Maximizes the correlation `sum (1 - 2c) L / 2` over zero-tail paths.
    pub fn viterbi_decode(&self, llrs: &[f64]) -> Result<Vec<u8>> {
        let n_out = self.outputs_per_bit();
        if llrs.len() % n_out != 0 || llrs.len() < n_out * self.memory {
            return shape_err(format!("{} LLRs do not form whole zero-tail trellis steps", llrs.len()));
        }
        let steps = llrs.len() / n_out;
        let k = steps - self.memory;
        let states = 1usize << self.memory;
        // branch outputs as +-1 per (state, input)
        let signs: Vec<Vec<f64>> = (0..2 * states)
            .map(|si| {
                let (s, b) = (si >> 1, (si & 1) as u32);
                let reg = (b << self.memory) | s as u32;
                self.outputs(reg).map(|c| 1.0 - 2.0 * f64::from(c)).collect()
            })
            .collect();
        let mut metric = vec![f64::NEG_INFINITY; states];
        metric[0] = 0.0;
        let mut decisions = vec![0u32; steps * states]; // survivor predecessor per state
        for t in 0..steps {
            let l = &llrs[t * n_out..(t + 1) * n_out];
            let mut next = vec![f64::NEG_INFINITY; states];
            let inputs: &[u32] = if t < k { &[0, 1] } else { &[0] };
            for s in 0..states {
                if metric[s] == f64::NEG_INFINITY {
                    continue;
                }
                for &b in inputs {
                    let gain: f64 = signs[(s << 1) | b as usize]
                        .iter()
                        .zip(l)
                        .map(|(sg, v)| sg * v.clamp(-LLR_CLAMP, LLR_CLAMP) * 0.5)
                        .sum();
                    let ns = ((b << self.memory) | s as u32) as usize >> 1;
                    let cand = metric[s] + gain;
                    // strict comparison keeps the lower predecessor on ties
                    if cand > next[ns] {
                        next[ns] = cand;
                        decisions[t * states + ns] = s as u32;
                    }
                }
            }
            metric = next;
        }
        let mut state = 0usize;
        let mut bits = vec![0u8; steps];
        for t in (0..steps).rev() {
            // the newest input bit is the MSB of the next state
            bits[t] = ((state >> (self.memory - 1)) & 1) as u8;
            state = decisions[t * states + state] as usize;
        }
        bits.truncate(k);
        Ok(bits)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PepBoundInput {
    pub d_e_sq: f64,
    pub paths: usize,
    pub es_over_n0: f64,
}

/// `(d_E^2 / P)^{-P} (Es / 4N0)^{-P}`.
pub fn pep_bound(inp: &PepBoundInput) -> Result<f64> {
    if !(inp.d_e_sq > 0.0 && inp.d_e_sq.is_finite()) {
        return Err(OtfsError::InputRange(format!("squared distance {} must be positive", inp.d_e_sq)));
    }
    if !(inp.es_over_n0 > 0.0 && inp.es_over_n0.is_finite()) || inp.paths == 0 {
        return Err(OtfsError::InputRange("SNR must be positive and P at least one".into()));
    }
    let p = inp.paths as i32;
    Ok((inp.d_e_sq / f64::from(p)).powi(-p) * (inp.es_over_n0 / 4.0).powi(-p))
}

/// `sum_i log2(1 + snr sigma_i^2) / normalization` from the singular values,
/// which equals `log2 det(I + snr H^H H) / normalization`.
pub fn achievable_rate(h: &impl LinearModel, snr: f64, normalization: f64) -> Result<f64> {
    let h = h.model_matrix();
    if !h.is_square() {
        return shape_err(format!("rate needs a square channel, got {}x{}", h.nrows(), h.ncols()));
    }
    if !(snr >= 0.0) || !snr.is_finite() {
        return Err(OtfsError::InputRange(format!("snr {snr}")));
    }
    if !(normalization > 0.0) {
        return Err(OtfsError::InputRange(format!("normalization {normalization}")));
    }
    rate_from_singular_values(&crate::linalg::singular_values(h)?, snr, normalization)
}

pub fn rate_from_singular_values(sv: &[f64], snr: f64, normalization: f64) -> Result<f64> {
    let total: f64 = sv.iter().map(|s| (snr * s * s).ln_1p()).sum::<f64>() / std::f64::consts::LN_2;
    if !total.is_finite() {
        return Err(OtfsError::Numerical("log-determinant is not finite".into()));
    }
    Ok(total / normalization)
}

/// Channel uses of an OFDM frame with a per-symbol prefix of `cp` samples.
pub fn ofdm_cp_channel_uses(m: usize, n: usize, cp: usize) -> f64 {
    (n * (m + cp)) as f64
}

/// Estimated diversity order: minus the least-squares slope of `log10 FER`
/// against `snr_dB / 10`. Points with zero FER are dropped with a warning.
pub fn diversity_slope(fer_points: &[(f64, f64)]) -> Result<f64> {
    let valid: Vec<(f64, f64)> = fer_points
        .iter()
        .filter(|(snr, fer)| {
            let ok = *fer > 0.0 && fer.is_finite() && snr.is_finite();
            if !ok {
                log::warn!("dropping FER point ({snr} dB, {fer}) from the slope fit");
            }
            ok
        })
        .map(|(snr, fer)| (snr / 10.0, fer.log10()))
        .collect();
    if valid.len() < 3 {
        return Err(OtfsError::InputRange(format!("slope fit needs 3 points with FER > 0, got {}", valid.len())));
    }
    let n = valid.len() as f64;
    let mx = valid.iter().map(|p| p.0).sum::<f64>() / n;
    let my = valid.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = valid.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = valid.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(OtfsError::InputRange("slope fit needs distinct SNR values".into()));
    }
    Ok(-sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use nalgebra::DMatrix;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn llrs_from(code: &[u8], mag: f64) -> Vec<f64> {
        code.iter().map(|c| if *c == 0 { mag } else { -mag }).collect()
    }

    #[test]
    fn zero_input_zero_codeword() {
        let code = ConvCode::default();
        let out = code.encode(&[0; 10]);
        assert_eq!(out.len(), 2 * 12);
        assert!(out.iter().all(|b| *b == 0));
    }

    #[test]
    fn impulse_response_matches_generators() {
        // a single 1 produces the generator taps, interleaved, MSB first
        let out = ConvCode::default().encode(&[1]);
        assert_eq!(out, vec![1, 1, 0, 1, 1, 1]);
    }

    #[test]
    fn noiseless_round_trip() {
        let code = ConvCode::default();
        let bits = RngStream::new(1, 0).bits(64);
        let coded = code.encode(&bits);
        assert_eq!(coded.len(), code.coded_len(64));
        assert_eq!(code.viterbi_decode(&llrs_from(&coded, 10.0)).unwrap(), bits);
    }

    #[test]
    fn corrects_single_flip() {
        let code = ConvCode::default();
        let bits = RngStream::new(2, 0).bits(20);
        let coded = code.encode(&bits);
        for pos in 0..coded.len() {
            let mut l = llrs_from(&coded, 10.0);
            l[pos] = -l[pos] * 0.5;
            assert_eq!(code.viterbi_decode(&l).unwrap(), bits, "flip at {pos}");
        }
    }

    fn brute_force(code: &ConvCode, llrs: &[f64], k: usize) -> Vec<u8> {
        let mut best = (f64::NEG_INFINITY, vec![]);
        for msg in 0..1u32 << k {
            let bits: Vec<u8> = (0..k).map(|i| ((msg >> i) & 1) as u8).collect();
            let c = code.encode(&bits);
            let m: f64 = c.iter().zip(llrs).map(|(b, l)| (1.0 - 2.0 * f64::from(*b)) * l.clamp(-50.0, 50.0)).sum();
            if m > best.0 {
                best = (m, bits);
            }
        }
        best.1
    }

    #[test]
    fn viterbi_is_ml_on_short_messages() {
        let mut r = RngStream::new(3, 0);
        for code in [ConvCode::default(), ConvCode::new(vec![0o15, 0o17], 3).unwrap()] {
            for _ in 0..300 {
                let k = 1 + r.index(8);
                let bits = r.bits(k);
                let llrs: Vec<f64> =
                    code.encode(&bits).iter().map(|c| (1.0 - 2.0 * f64::from(*c)) * 2.0 + 2.0 * r.gaussian()).collect();
                let got = code.viterbi_decode(&llrs).unwrap();
                let want = brute_force(&code, &llrs, k);
                // equal metric is enough when two messages tie
                let metric = |b: &[u8]| -> f64 {
                    code.encode(b).iter().zip(&llrs).map(|(c, l)| (1.0 - 2.0 * f64::from(*c)) * l).sum()
                };
                assert!((metric(&got) - metric(&want)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn malformed_llrs_rejected() {
        let code = ConvCode::default();
        assert!(code.viterbi_decode(&[0.0; 5]).is_err());
        assert!(code.viterbi_decode(&[0.0; 2]).is_err());
        assert_eq!(code.viterbi_decode(&[1.0; 4]).unwrap(), Vec::<u8>::new());
        assert!(ConvCode::new(vec![0o5], 2).is_err());
        assert!(ConvCode::new(vec![0o5, 0o17], 2).is_err());
    }

    #[test]
    fn pep_examples() {
        let b = |d, p, s| pep_bound(&PepBoundInput { d_e_sq: d, paths: p, es_over_n0: s }).unwrap();
        assert!((b(1.0, 1, 4.0) - 1.0).abs() < 1e-15);
        assert!((b(2.0, 2, 10.0) / b(2.0, 2, 20.0) - 4.0).abs() < 1e-12);
        // log-domain cross-check
        let log_bound = |d: f64, p: usize, s: f64| -(p as f64) * ((d / p as f64).ln() + (s / 4.0).ln());
        let ratio = b(3.0, 8, 50.0) / b(3.0, 4, 50.0);
        let want = (log_bound(3.0, 8, 50.0) - log_bound(3.0, 4, 50.0)).exp();
        assert!((ratio / want - 1.0).abs() < 1e-12);
        assert!(pep_bound(&PepBoundInput { d_e_sq: 0.0, paths: 1, es_over_n0: 1.0 }).is_err());
    }

    #[test]
    fn rate_examples() {
        let i = DMatrix::<Complex64>::identity(8, 8);
        assert!((achievable_rate(&i, 3.0, 8.0).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(achievable_rate(&i, 0.0, 8.0).unwrap(), 0.0);
        assert!(achievable_rate(&i, -1.0, 8.0).is_err());
        let mut r = RngStream::new(4, 0);
        let h = DMatrix::from_fn(8, 8, |_, _| r.complex_gaussian(1.0));
        let snr = 5.0;
        let a = DMatrix::<Complex64>::identity(8, 8) + h.adjoint() * &h * Complex64::new(snr, 0.0);
        let direct = a.determinant().re.log2() / 8.0;
        assert!((achievable_rate(&h, snr, 8.0).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn slope_examples() {
        let pts: Vec<(f64, f64)> = [10.0, 15.0, 20.0].iter().map(|s: &f64| (*s, 10f64.powf(-s / 10.0 * 2.0))).collect();
        assert!((diversity_slope(&pts).unwrap() - 2.0).abs() < 1e-6);
        let flat = [(0.0, 0.1), (5.0, 0.1), (10.0, 0.1)];
        assert!(diversity_slope(&flat).unwrap().abs() < 1e-12);
        let pep: Vec<(f64, f64)> = [10.0, 20.0, 30.0]
            .iter()
            .map(|s: &f64| {
                (*s, pep_bound(&PepBoundInput { d_e_sq: 2.0, paths: 4, es_over_n0: 10f64.powf(s / 10.0) }).unwrap())
            })
            .collect();
        assert!((diversity_slope(&pep).unwrap() - 4.0).abs() < 1e-6);
        assert!(diversity_slope(&[(0.0, 0.1), (5.0, 0.0), (10.0, 0.01)]).is_err());
    }

    proptest! {
        #[test]
        fn pep_log_linear(d in 0.1f64..10.0, p in 1usize..9, s_db in -10.0f64..40.0) {
            let s = 10f64.powf(s_db / 10.0);
            let b1 = pep_bound(&PepBoundInput { d_e_sq: d, paths: p, es_over_n0: s }).unwrap();
            let b2 = pep_bound(&PepBoundInput { d_e_sq: d, paths: p, es_over_n0: 10.0 * s }).unwrap();
            prop_assert!(((b2.log10() - b1.log10()) + p as f64).abs() < 1e-9);
        }

        #[test]
        fn encode_decode_round_trip(bits in proptest::collection::vec(0u8..2, 0..80)) {
            let code = ConvCode::default();
            let llrs: Vec<f64> = code.encode(&bits).iter().map(|c| if *c == 0 { 4.0 } else { -4.0 }).collect();
            prop_assert_eq!(code.viterbi_decode(&llrs).unwrap(), bits);
        }
    }
}
