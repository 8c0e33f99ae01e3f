//! Embedded-pilot estimation accuracy against pilot SNR.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::runner::{draw_channel, pilot_config, waveform_for, write_outputs, RunOptions};
use crate::channel::{add_awgn, apply_td};
use crate::constellation::{map_bits, Constellation};
use crate::error::{OtfsError, Result};
use crate::estimation::{estimate_channel, nmse_dd, place_data, PilotMask, Region};
use crate::rng::RngStream;

const CHANNEL_STREAM: u64 = 2 << 60;
const NOISE_STREAM: u64 = 3 << 60;

/// Mean NMSE at one pilot SNR `A^2 / sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmseRow {
    pub pilot_snr_db: f64,
    pub nmse: f64,
    /// Standard error of the mean.
    pub nmse_se: f64,
    pub trials: u64,
}

/// Every trial draws its channel and data once; each SNR point adds its own
/// noise, so the points are compared on the same channels.
pub fn nmse_sweep(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<NmseRow>> {
    cfg.validate()?;
    let est = cfg.estimate.as_ref().ok_or_else(|| OtfsError::Configuration("missing [estimate] section".into()))?;
    if cfg.channel.doppler == crate::channel::DopplerMode::Fractional {
        return Err(OtfsError::Configuration("embedded-pilot estimation assumes integer Doppler".into()));
    }
    let params = cfg.frame_params()?;
    let pcfg = pilot_config(cfg, &est.pilot);
    let mask = PilotMask::new(&pcfg, params.m(), params.n())?;
    let c = Constellation::new(cfg.frame.modulation);
    let waveform = waveform_for(cfg);
    let trials = opts.trials_cap.unwrap_or(est.trials);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers)
        .build()
        .map_err(|e| OtfsError::Configuration(format!("thread pool: {e}")))?;

    let per_trial: Vec<Result<Vec<f64>>> = pool.install(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = RngStream::new(cfg.seed, CHANNEL_STREAM | t);
                let ch = draw_channel(cfg, &mut rng)?;
                let bits = rng.bits(mask.count(Region::Data) * c.bits_per_symbol());
                let x = place_data(&map_bits(&bits, &c)?, &mask, &pcfg)?;
                let clean = apply_td(&ch, &waveform.modulate(&x, &params)?, &params)?;
                est.pilot_snr_db
                    .iter()
                    .enumerate()
                    .map(|(si, &snr_db)| {
                        let noise_var = pcfg.pilot_amplitude.powi(2) * 10f64.powf(-snr_db / 10.0);
                        let mut noise_rng = RngStream::new(cfg.seed, NOISE_STREAM | ((si as u64) << 32) | t);
                        let mut r = clean.clone();
                        add_awgn(&mut r, noise_var, &mut noise_rng);
                        let y = waveform.demodulate(&r, &params)?;
                        let estimate = estimate_channel(&y, &pcfg, Some(noise_var))?;
                        nmse_dd(&ch, &estimate.channel, params.m(), params.n())
                    })
                    .collect()
            })
            .collect()
    });
    let per_trial = per_trial.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(est
        .pilot_snr_db
        .iter()
        .enumerate()
        .map(|(si, &pilot_snr_db)| {
            let vals: Vec<f64> = per_trial.iter().map(|v| v[si]).collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var =
                if vals.len() > 1 { vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            NmseRow { pilot_snr_db, nmse: mean, nmse_se: (var / n).sqrt(), trials: vals.len() as u64 }
        })
        .collect())
}

/// Columns `pilot_snr_db,nmse,nmse_se,trials`.
pub fn nmse_csv(rows: &[NmseRow]) -> String {
    let mut out = String::from("pilot_snr_db,nmse,nmse_se,trials\n");
    for r in rows {
        out.push_str(&format!("{},{:.6e},{:.6e},{}\n", r.pilot_snr_db, r.nmse, r.nmse_se, r.trials));
    }
    out
}

pub fn emit_nmse_curve(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Vec<NmseRow>> {
    let start = std::time::Instant::now();
    let rows = nmse_sweep(cfg, opts)?;
    if let Some(dir) = &opts.out_dir {
        let csv = BTreeMap::from([("nmse.csv".to_string(), nmse_csv(&rows))]);
        write_outputs(dir, &csv, cfg, &cfg.hash()?, opts.workers, start.elapsed().as_secs_f64(), "estimate")?;
    }
    Ok(rows)
}
