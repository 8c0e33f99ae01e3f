//! Monte Carlo BER/FER sweeps.
//!
//! Every trial owns the random stream `(seed, snr_index << 32 | trial)`, so a
//! trial's channel, bits and noise do not depend on scheduling. Trials run in
//! parallel batches and are folded in trial order; the stopping rule is
//! evaluated after each folded trial, which makes the output independent of
//! the worker count.

use std::collections::BTreeMap;
use std::path::{Path as FsPath, PathBuf};
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ChannelModel, DetectorKind, ExperimentConfig, WaveformKind};
use super::stats::ErrorCounter;
use crate::channel::{add_awgn, apply_td, build_effective_dd, sample_channel, ChannelRealization};
use crate::coding::ConvCode;
use crate::constellation::{bit_llrs, demap_indices, map_bits, Constellation};
use crate::detection::{detect_ml, detect_mmse, detect_mpa, CdidDetector, DetectionResult, FactorGraph};
use crate::error::{OtfsError, Result};
use crate::estimation::{estimate_channel, nmse_dd, PilotConfig, PilotMask, Region};
use crate::grid::{unvec, DdFrame, FrameParams};
use crate::modem::{remove_cp, Waveform, WindowSpec};
use crate::pulse::SampledPulse;
use crate::rng::RngStream;

const BATCH_PER_WORKER: usize = 16;
// magnitude of the LLR given to a hard decision
const HARD_LLR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunOptions {
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    /// Overrides `sweep.max_trials`.
    pub trials_cap: Option<u64>,
    /// Where CSVs and the manifest go; nothing is written when unset.
    pub out_dir: Option<PathBuf>,
}

/// Counts for one output (detector or CDID iteration) at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub output: String,
    pub snr_db: f64,
    pub counts: ErrorCounter,
    /// Mean DD-response NMSE of the pilot-based estimates.
    pub nmse: Option<f64>,
    /// The trial cap ended the point before `min_frame_errors` was reached.
    pub capped: bool,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<MetricRecord>,
    /// File name to CSV text, one per output.
    pub csv: BTreeMap<String, String>,
    pub config_hash: String,
    pub wall_time_s: f64,
}

impl ExperimentOutput {
    pub fn records_for<'a>(&'a self, output: &'a str) -> impl Iterator<Item = &'a MetricRecord> + 'a {
        self.records.iter().filter(move |r| r.output == output)
    }
}

/// Noise variance per sample for a given `Es/N0` in dB with unit-energy symbols.
pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

pub fn waveform_for(cfg: &ExperimentConfig) -> Waveform {
    match cfg.frame.waveform {
        WaveformKind::Dzt => Waveform::Dzt(SampledPulse::rectangular(cfg.frame.m, cfg.frame.n)),
        WaveformKind::Sfft => Waveform::Sfft(WindowSpec::rectangular()),
    }
}

pub(crate) fn draw_channel(cfg: &ExperimentConfig, rng: &mut RngStream) -> Result<ChannelRealization> {
    match cfg.channel.model {
        ChannelModel::Random => sample_channel(&cfg.pdp(), rng),
        ChannelModel::Identity => Ok(ChannelRealization::identity()),
    }
}

pub(crate) fn pilot_config(cfg: &ExperimentConfig, est: &super::config::EstimationConfig) -> PilotConfig {
    let (m, n) = (cfg.frame.m, cfg.frame.n);
    let (l_max, k_max) = (cfg.channel.l_max, cfg.channel.k_max);
    let base = match est.pilot_pos {
        Some(pos) => PilotConfig::new(pos, l_max, k_max),
        None => PilotConfig::centered(m, n, l_max, k_max),
    };
    base.with_amplitude(est.pilot_amplitude).with_threshold(est.threshold_factor)
}

/// Output labels in file order.
fn output_labels(cfg: &ExperimentConfig) -> Vec<String> {
    let mut kinds = cfg.detector.kinds.clone();
    kinds.dedup();
    let mut seen = Vec::new();
    let mut labels = Vec::new();
    for k in kinds {
        if seen.contains(&k) {
            continue;
        }
        seen.push(k);
        labels.push(k.label().to_string());
        if k == DetectorKind::Cdid {
            labels.extend(cfg.detector.cdid.report_iterations.iter().map(|t| format!("cdid_iter{t}")));
        }
    }
    labels
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    params: FrameParams,
    constellation: Constellation,
    waveform: Waveform,
    pilot: Option<(PilotConfig, PilotMask)>,
    code: Option<ConvCode>,
    kinds: Vec<DetectorKind>,
}

struct TrialOutcome {
    /// `(bit errors, bits)` per output label.
    errors: Vec<(u64, u64)>,
    nmse: Option<f64>,
}

impl Context<'_> {
    fn data_symbols(&self) -> usize {
        match &self.pilot {
            Some((_, mask)) => mask.count(Region::Data),
            None => self.params.mn(),
        }
    }

    fn info_bits(&self) -> usize {
        let channel_bits = self.data_symbols() * self.constellation.bits_per_symbol();
        match &self.code {
            Some(code) => code.message_len(channel_bits),
            None => channel_bits,
        }
    }

    fn run_trial(&self, snr_db: f64, rng: &mut RngStream) -> Result<TrialOutcome> {
        let params = &self.params;
        let c = &self.constellation;
        let bps = c.bits_per_symbol();
        let channel_bits = self.data_symbols() * bps;
        let ch = draw_channel(self.cfg, rng)?;

        let info = rng.bits(self.info_bits());
        let mut tx_bits = match &self.code {
            Some(code) => code.encode(&info),
            None => info.clone(),
        };
        let pad = channel_bits - tx_bits.len();
        tx_bits.extend(rng.bits(pad));
        let symbols = map_bits(&tx_bits, c)?;
        let x = match &self.pilot {
            Some((pcfg, mask)) => crate::estimation::place_data(&symbols, mask, pcfg)?,
            None => unvec(&symbols, params.m(), params.n())?,
        };

        let noiseless = self.cfg.sweep.as_ref().is_some_and(|s| s.noiseless);
        let noise_var = if noiseless { 0.0 } else { noise_variance(snr_db) };
        let mut r = apply_td(&ch, &self.waveform.modulate(&x, params)?, params)?;
        if !noiseless {
            add_awgn(&mut r, noise_var, rng);
        }
        let y = self.waveform.demodulate(&r, params)?;

        // linear model y = H x + w on the detected symbols
        let mut nmse = None;
        let needs_matrix =
            self.kinds.iter().any(|k| matches!(k, DetectorKind::Mmse | DetectorKind::Ml | DetectorKind::Map));
        let (h, obs): (DMatrix<Complex64>, Vec<Complex64>) = match (&self.pilot, needs_matrix) {
            (_, false) => (DMatrix::zeros(0, 0), Vec::new()),
            (None, true) => (build_effective_dd(&ch, params)?.into_matrix(), y.vec()),
            (Some((pcfg, mask)), true) => {
                let est = estimate_channel(&y, pcfg, Some(noise_var))?;
                nmse = Some(nmse_dd(&ch, &est.channel, params.m(), params.n())?);
                let h_est = build_effective_dd(&est.channel, params)?.into_matrix();
                let mut pilot_only = DdFrame::zeros(params.m(), params.n());
                pilot_only.set(pcfg.pilot_pos.0, pcfg.pilot_pos.1, Complex64::new(pcfg.pilot_amplitude, 0.0));
                let residual = DVector::from_vec(y.vec()) - &h_est * DVector::from_vec(pilot_only.vec());
                let cols = mask.data_indices();
                (h_est.select_columns(cols.iter()), residual.as_slice().to_vec())
            }
        };

        let mut decided: BTreeMap<String, Vec<u8>> = BTreeMap::new();
        let mut exhaustive: Option<DetectionResult> = None;
        for kind in &self.kinds {
            match kind {
                DetectorKind::Mmse => {
                    let res = detect_mmse(&obs, &h, noise_var, c)?;
                    decided.insert("mmse".into(), self.soft_bits(&res.posteriors)?);
                }
                DetectorKind::Ml | DetectorKind::Map => {
                    if exhaustive.is_none() {
                        exhaustive = Some(detect_ml(&obs, &h, noise_var, c, self.cfg.detector.search_cap)?);
                    }
                    let res = exhaustive.as_ref().expect("set above");
                    let bits = if *kind == DetectorKind::Ml {
                        let seq = res.sequence.as_ref().ok_or_else(|| OtfsError::Numerical("no ML sequence".into()))?;
                        self.hard_bits(seq)?
                    } else {
                        self.soft_bits(&res.posteriors)?
                    };
                    decided.insert(kind.label().into(), bits);
                }
                DetectorKind::Mpa => {
                    let graph = FactorGraph::new(&ch, params.m(), params.n())?;
                    let res = detect_mpa(&y.vec(), &graph, noise_var, c, &self.cfg.detector.mpa)?;
                    decided.insert("mpa".into(), self.soft_bits(&res.posteriors)?);
                }
                DetectorKind::Cdid => {
                    let cdid = &self.cfg.detector.cdid;
                    let det = CdidDetector::new(&ch, params)?;
                    let res = det.detect(&remove_cp(&r), noise_var, c, &cdid.options())?;
                    for &t in &cdid.report_iterations {
                        let step = res.trajectory.get(t.min(res.trajectory.len()).saturating_sub(1));
                        let hard = step.unwrap_or(&res.hard_decisions);
                        decided.insert(format!("cdid_iter{t}"), self.hard_bits(hard)?);
                    }
                    decided.insert("cdid".into(), self.soft_bits(&res.posteriors)?);
                }
            }
        }

        let errors = output_labels(self.cfg)
            .iter()
            .map(|label| {
                let got = &decided[label];
                let e = info.iter().zip(got).filter(|(a, b)| a != b).count() as u64;
                (e, info.len() as u64)
            })
            .collect();
        Ok(TrialOutcome { errors, nmse })
    }

    fn decode(&self, llrs: Vec<f64>) -> Result<Vec<u8>> {
        match &self.code {
            Some(code) => code.viterbi_decode(&llrs[..code.coded_len(self.info_bits())]),
            None => Ok(llrs.iter().take(self.info_bits()).map(|&l| u8::from(l < 0.0)).collect()),
        }
    }

    fn soft_bits(&self, posteriors: &[Vec<f64>]) -> Result<Vec<u8>> {
        if self.code.is_none() {
            // uncoded: symbol-wise decisions, not bit-wise, so ties follow the detector
            let hard: Vec<usize> = posteriors.iter().map(|p| crate::detection::argmax(p)).collect();
            return self.hard_bits(&hard);
        }
        self.decode(bit_llrs(posteriors, &self.constellation))
    }

    fn hard_bits(&self, indices: &[usize]) -> Result<Vec<u8>> {
        let bits = demap_indices(indices, &self.constellation);
        if self.code.is_none() {
            return Ok(bits[..self.info_bits()].to_vec());
        }
        self.decode(bits.iter().map(|&b| if b == 0 { HARD_LLR } else { -HARD_LLR }).collect())
    }
}

fn preflight(cfg: &ExperimentConfig) -> Result<Context<'_>> {
    cfg.validate()?;
    let params = cfg.frame_params()?;
    let constellation = Constellation::new(cfg.frame.modulation);
    let pilot = match &cfg.estimation {
        Some(est) => {
            let pcfg = pilot_config(cfg, est);
            let mask = PilotMask::new(&pcfg, params.m(), params.n())?;
            Some((pcfg, mask))
        }
        None => None,
    };
    let mut kinds = Vec::new();
    for k in &cfg.detector.kinds {
        if !kinds.contains(k) {
            kinds.push(*k);
        }
    }
    let ctx =
        Context { cfg, params, constellation, waveform: waveform_for(cfg), pilot, code: cfg.coding.clone(), kinds };
    if ctx.info_bits() == 0 {
        return Err(OtfsError::Configuration("frame too small to carry any information bits".into()));
    }
    if ctx.kinds.iter().any(|k| matches!(k, DetectorKind::Ml | DetectorKind::Map)) {
        let hyps = (ctx.data_symbols() as f64) * (ctx.constellation.len() as f64).log2();
        if hyps > (cfg.detector.search_cap as f64).log2() + 1e-9 {
            return Err(OtfsError::Configuration(format!(
                "exhaustive search over {} symbols exceeds search_cap {}",
                ctx.data_symbols(),
                cfg.detector.search_cap
            )));
        }
    }
    Ok(ctx)
}

fn thread_pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| OtfsError::Configuration(format!("thread pool: {e}")))
}

/// Run the configured sweep. Stops each SNR point once every output has
/// `min_frame_errors` frame errors or the trial cap is reached.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    let start = Instant::now();
    let ctx = preflight(cfg)?;
    let sweep = cfg.sweep.as_ref().ok_or_else(|| OtfsError::Configuration("missing [sweep] section".into()))?;
    let max_trials = opts.trials_cap.unwrap_or(sweep.max_trials);
    if max_trials == 0 {
        return Err(OtfsError::Configuration("trial cap must be positive".into()));
    }
    let labels = output_labels(cfg);
    let pool = thread_pool(opts.workers)?;
    let batch = BATCH_PER_WORKER * pool.current_num_threads().max(1);

    let mut records = Vec::new();
    for (si, &snr_db) in sweep.snr_db.iter().enumerate() {
        let point_start = Instant::now();
        let mut counts = vec![ErrorCounter::default(); labels.len()];
        let mut nmse_sum = 0.0;
        let mut nmse_n = 0u64;
        let mut trial = 0u64;
        let done = |counts: &[ErrorCounter]| counts.iter().all(|c| c.frame_errors >= sweep.min_frame_errors);
        'point: while trial < max_trials && !done(&counts) {
            let end = (trial + batch as u64).min(max_trials);
            let outcomes: Vec<Result<TrialOutcome>> = pool.install(|| {
                (trial..end)
                    .into_par_iter()
                    .map(|t| {
                        let mut rng = RngStream::new(cfg.seed, ((si as u64) << 32) | t);
                        ctx.run_trial(snr_db, &mut rng)
                    })
                    .collect()
            });
            for outcome in outcomes {
                let outcome = outcome?;
                for (c, (e, bits)) in counts.iter_mut().zip(&outcome.errors) {
                    c.bits += bits;
                    c.bit_errors += e;
                    c.frames += 1;
                    c.frame_errors += u64::from(*e > 0);
                }
                if let Some(v) = outcome.nmse {
                    nmse_sum += v;
                    nmse_n += 1;
                }
                trial += 1;
                if done(&counts) {
                    break 'point;
                }
            }
        }
        let capped = !done(&counts);
        let nmse = (nmse_n > 0).then(|| nmse_sum / nmse_n as f64);
        let wall_time_s = point_start.elapsed().as_secs_f64();
        log::info!("snr {snr_db} dB: {trial} trials in {wall_time_s:.1} s");
        for (label, c) in labels.iter().zip(counts) {
            records.push(MetricRecord { output: label.clone(), snr_db, counts: c, nmse, capped, wall_time_s });
        }
    }

    let csv = labels
        .iter()
        .map(|label| (format!("{label}.csv"), metrics_csv(records.iter().filter(|r| &r.output == label))))
        .collect();
    let out = ExperimentOutput { records, csv, config_hash: cfg.hash()?, wall_time_s: start.elapsed().as_secs_f64() };
    if let Some(dir) = &opts.out_dir {
        write_outputs(dir, &out.csv, cfg, &out.config_hash, opts.workers, out.wall_time_s, "run")?;
    }
    Ok(out)
}

/// CSV with columns `snr_db,ber,ber_ci,fer,fer_ci,trials,bit_errors,frame_errors,capped[,nmse]`;
/// `*_ci` are Wilson 95% half-widths.
pub fn metrics_csv<'a>(records: impl Iterator<Item = &'a MetricRecord>) -> String {
    let records: Vec<_> = records.collect();
    let with_nmse = records.iter().any(|r| r.nmse.is_some());
    let mut out = String::from("snr_db,ber,ber_ci,fer,fer_ci,trials,bit_errors,frame_errors,capped");
    out.push_str(if with_nmse { ",nmse\n" } else { "\n" });
    for r in records {
        let c = &r.counts;
        out.push_str(&format!(
            "{},{:.6e},{:.6e},{:.6e},{:.6e},{},{},{},{}",
            r.snr_db,
            c.ber(),
            c.ber_ci(),
            c.fer(),
            c.fer_ci(),
            c.frames,
            c.bit_errors,
            c.frame_errors,
            r.capped
        ));
        if with_nmse {
            out.push_str(&format!(",{:.6e}", r.nmse.unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    config_sha256: &'a str,
    seed: u64,
    workers: usize,
    wall_time_s: f64,
    files: Vec<&'a str>,
    config: &'a ExperimentConfig,
}

pub(crate) fn write_outputs(
    dir: &FsPath,
    csv: &BTreeMap<String, String>,
    cfg: &ExperimentConfig,
    hash: &str,
    workers: usize,
    wall_time_s: f64,
    command: &str,
) -> Result<()> {
    let io = |e: std::io::Error| OtfsError::Configuration(format!("cannot write to {}: {e}", dir.display()));
    std::fs::create_dir_all(dir).map_err(io)?;
    for (name, text) in csv {
        std::fs::write(dir.join(name), text).map_err(io)?;
    }
    let manifest = Manifest {
        command,
        config_sha256: hash,
        seed: cfg.seed,
        workers,
        wall_time_s,
        files: csv.keys().map(String::as_str).collect(),
        config: cfg,
    };
    let text = toml::to_string(&manifest).map_err(|e| OtfsError::Configuration(e.to_string()))?;
    std::fs::write(dir.join("manifest.toml"), text).map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> ExperimentConfig {
        let text = format!(
            "schema = 1\nseed = 11\n[frame]\nm = 4\nn = 4\n[channel]\npaths = 2\nl_max = 2\nk_max = 1\n{extra}"
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    }

    #[test]
    fn noiseless_sweep_is_error_free() {
        let cfg = config(
            "[sweep]\nsnr_db = [0.0, 10.0]\nmax_trials = 5\nnoiseless = true\n[detector]\nkinds = [\"mmse\", \"mpa\", \"cdid\", \"map\"]\n",
        );
        let out = run_experiment(&cfg, &RunOptions::default()).unwrap();
        assert_eq!(out.records.len(), 8);
        for r in &out.records {
            assert_eq!(r.counts.bit_errors, 0, "{}", r.output);
            assert_eq!(r.counts.frames, 5);
            assert!(r.capped);
        }
        assert!(out.csv["mmse.csv"].starts_with("snr_db,ber,ber_ci,fer,fer_ci,trials"));
    }

    #[test]
    fn stops_at_frame_error_target() {
        let cfg = config("[sweep]\nsnr_db = [-5.0]\nmin_frame_errors = 7\nmax_trials = 1000\n");
        let out = run_experiment(&cfg, &RunOptions { workers: 3, ..Default::default() }).unwrap();
        let r = &out.records[0];
        assert_eq!(r.counts.frame_errors, 7);
        assert!(!r.capped);
    }

    #[test]
    fn coded_and_estimated_paths_run() {
        let cfg = ExperimentConfig::from_toml_str(
            "schema = 1\n[frame]\nm = 8\nn = 8\n[channel]\npaths = 2\nl_max = 2\nk_max = 1\n\
             [sweep]\nsnr_db = [30.0]\nmax_trials = 4\n[estimation]\n[coding]\ngenerators = [5, 7]\nmemory = 2\n",
        )
        .unwrap();
        let out = run_experiment(&cfg, &RunOptions::default()).unwrap();
        let r = &out.records[0];
        assert_eq!(r.counts.bit_errors, 0);
        assert!(r.nmse.unwrap() < 1e-2);
        assert!(out.csv["mmse.csv"].lines().next().unwrap().ends_with(",nmse"));
    }

    #[test]
    fn exhaustive_search_cap_checked() {
        let cfg = config("[sweep]\nsnr_db = [0.0]\n[detector]\nkinds = [\"ml\"]\nsearch_cap = 1000\n");
        assert!(matches!(run_experiment(&cfg, &RunOptions::default()), Err(OtfsError::Configuration(_))));
    }
}
