//! Achievable-rate curves for OTFS and OFDM over shared channel draws.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::runner::{draw_channel, write_outputs, RunOptions};
use crate::channel::{build_effective_dd, effective_with_prefix, OfdmPrefix};
use crate::coding::{ofdm_cp_channel_uses, rate_from_singular_values};
use crate::error::{OtfsError, Result};
use crate::rng::RngStream;

// stream namespace for rate draws, disjoint from sweep trials
const RATE_STREAM: u64 = 1 << 62;

/// Rates in bit/s/Hz at one SNR.
///
/// * `otfs`: OTFS, normalized by `MN`.
/// * `ofdm_nocp`: OFDM with one prefix for the whole frame, normalized by `MN`.
/// * `ofdm_cp`: OFDM with a prefix per symbol, normalized by the `N(M+cp)`
///   samples it occupies.
/// * `ofdm_cp_mn`: the same channel normalized by `MN`.
/// * `ofdm_nocp_linear`: OFDM without any prefix (truncated linear
///   convolution), normalized by `MN`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateRow {
    pub snr_db: f64,
    pub otfs: f64,
    pub ofdm_nocp: f64,
    pub ofdm_cp: f64,
    pub ofdm_cp_mn: f64,
    pub ofdm_nocp_linear: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateCurves {
    /// Averages over draws, one row per SNR.
    pub mean: Vec<RateRow>,
    /// `per_draw[d][s]`.
    pub per_draw: Vec<Vec<RateRow>>,
}

struct DrawSpectra {
    otfs: Vec<f64>,
    shared: Vec<f64>,
    per_symbol: Vec<f64>,
    absent: Vec<f64>,
}

pub fn compute_rate_curves(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RateCurves> {
    cfg.validate()?;
    let rates = cfg.rates.as_ref().ok_or_else(|| OtfsError::Configuration("missing [rates] section".into()))?;
    let params = cfg.frame_params()?;
    let (m, n, cp) = (params.m(), params.n(), params.cp_len());
    let mn = params.mn() as f64;
    let draws = opts.trials_cap.unwrap_or(rates.draws);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| OtfsError::Configuration(format!("thread pool: {e}")))?;

    let spectra: Vec<Result<DrawSpectra>> = pool.install(|| {
        (0..draws)
            .into_par_iter()
            .map(|d| {
                let mut rng = RngStream::new(cfg.seed, RATE_STREAM | d);
                let ch = draw_channel(cfg, &mut rng)?;
                Ok(DrawSpectra {
                    otfs: build_effective_dd(&ch, &params)?.singular_values(),
                    shared: effective_with_prefix(&ch, &params, OfdmPrefix::SharedFrame(cp))?.singular_values(),
                    per_symbol: effective_with_prefix(&ch, &params, OfdmPrefix::PerSymbol(cp))?.singular_values(),
                    absent: effective_with_prefix(&ch, &params, OfdmPrefix::Absent)?.singular_values(),
                })
            })
            .collect()
    });

    let mut per_draw = Vec::with_capacity(spectra.len());
    for s in spectra {
        let s = s?;
        let row = |snr_db: f64| -> Result<RateRow> {
            let snr = 10f64.powf(snr_db / 10.0);
            Ok(RateRow {
                snr_db,
                otfs: rate_from_singular_values(&s.otfs, snr, mn)?,
                ofdm_nocp: rate_from_singular_values(&s.shared, snr, mn)?,
                ofdm_cp: rate_from_singular_values(&s.per_symbol, snr, ofdm_cp_channel_uses(m, n, cp))?,
                ofdm_cp_mn: rate_from_singular_values(&s.per_symbol, snr, mn)?,
                ofdm_nocp_linear: rate_from_singular_values(&s.absent, snr, mn)?,
            })
        };
        per_draw.push(rates.snr_db.iter().map(|&v| row(v)).collect::<Result<Vec<_>>>()?);
    }

    let count = per_draw.len().max(1) as f64;
    let mean = rates
        .snr_db
        .iter()
        .enumerate()
        .map(|(i, &snr_db)| {
            let mut acc = RateRow { snr_db, ..Default::default() };
            for d in &per_draw {
                acc.otfs += d[i].otfs / count;
                acc.ofdm_nocp += d[i].ofdm_nocp / count;
                acc.ofdm_cp += d[i].ofdm_cp / count;
                acc.ofdm_cp_mn += d[i].ofdm_cp_mn / count;
                acc.ofdm_nocp_linear += d[i].ofdm_nocp_linear / count;
            }
            acc
        })
        .collect();
    Ok(RateCurves { mean, per_draw })
}

/// Columns `snr_db,rate_otfs,rate_ofdm_nocp,rate_ofdm_cp,rate_ofdm_cp_mn,rate_ofdm_nocp_linear`.
pub fn rate_csv(curves: &RateCurves) -> String {
    let mut out = String::from("snr_db,rate_otfs,rate_ofdm_nocp,rate_ofdm_cp,rate_ofdm_cp_mn,rate_ofdm_nocp_linear\n");
    for r in &curves.mean {
        out.push_str(&format!(
            "{},{:.9e},{:.9e},{:.9e},{:.9e},{:.9e}\n",
            r.snr_db, r.otfs, r.ofdm_nocp, r.ofdm_cp, r.ofdm_cp_mn, r.ofdm_nocp_linear
        ));
    }
    out
}

/// Compute the curves and write `rates.csv` plus a manifest when an output
/// directory is set.
pub fn emit_rate_curves(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RateCurves> {
    let start = std::time::Instant::now();
    let curves = compute_rate_curves(cfg, opts)?;
    if let Some(dir) = &opts.out_dir {
        let csv = BTreeMap::from([("rates.csv".to_string(), rate_csv(&curves))]);
        write_outputs(dir, &csv, cfg, &cfg.hash()?, opts.workers, start.elapsed().as_secs_f64(), "rates")?;
    }
    Ok(curves)
}
