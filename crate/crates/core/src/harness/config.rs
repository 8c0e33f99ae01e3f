//! Experiment configuration (TOML, versioned).
//!
//! ```toml
//! schema = 1
//! seed = 7
//!
//! [frame]
//! m = 32
//! n = 16
//! cp_scheme = "reduced-cp"     # reduced-cp | full-cp | zero-pad
//! cp_len = 10
//! modulation = "bpsk"          # bpsk | qpsk | qam16
//! waveform = "dzt"             # dzt | sfft (rectangular pulse / window)
//!
//! [channel]
//! model = "random"             # random | identity
//! paths = 4
//! l_max = 10
//! k_max = 5
//! profile = "uniform"          # uniform | exponential (uses `exponent`)
//! doppler = "integer"          # integer | fractional
//!
//! [sweep]
//! snr_db = [0.0, 4.0, 8.0]
//! min_frame_errors = 100
//! max_trials = 2000
//!
//! [detector]
//! kinds = ["mmse", "cdid"]     # mmse | mpa | cdid | ml | map
//! cdid = { max_iter = 10, report_iterations = [1, 10] }
//!
//! [estimation]                 # optional: embedded pilot instead of perfect CSI
//! pilot_amplitude = 10.0
//!
//! [coding]                     # optional: rate-1/2 convolutional code
//! generators = [0o5, 0o7]
//! memory = 2
//!
//! [rates]                      # `otfs rates`
//! snr_db = [0.0, 10.0, 20.0]
//! draws = 100
//!
//! [estimate]                   # `otfs estimate`
//! pilot_snr_db = [0.0, 10.0, 20.0, 30.0]
//! trials = 1000
//! ```

use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{DopplerMode, PdpKind, PowerDelayProfile};
use crate::coding::ConvCode;
use crate::constellation::Modulation;
use crate::detection::{CdidOptions, MpaOptions, DEFAULT_SEARCH_CAP};
use crate::error::{OtfsError, Result};
use crate::estimation::{DEFAULT_PILOT_AMPLITUDE, DEFAULT_THRESHOLD_FACTOR};
use crate::grid::{CpScheme, FrameParams, ZeroPadPlacement};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub seed: u64,
    pub frame: FrameConfig,
    pub channel: ChannelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation: Option<EstimationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coding: Option<ConvCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimate: Option<EstimateConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    #[default]
    ReducedCp,
    FullCp,
    ZeroPad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WaveformKind {
    #[default]
    Dzt,
    Sfft,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameConfig {
    pub m: usize,
    pub n: usize,
    #[serde(default)]
    pub cp_scheme: SchemeName,
    #[serde(default)]
    pub zero_pad_placement: ZeroPadPlacement,
    /// Defaults to the channel's `l_max`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp_len: Option<usize>,
    #[serde(default = "default_delta_f")]
    pub delta_f: f64,
    #[serde(default = "default_modulation")]
    pub modulation: Modulation,
    #[serde(default)]
    pub waveform: WaveformKind,
}

fn default_delta_f() -> f64 {
    FrameParams::DEFAULT_SUBCARRIER_SPACING
}

fn default_modulation() -> Modulation {
    Modulation::Bpsk
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModel {
    #[default]
    Random,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileName {
    #[default]
    Uniform,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub model: ChannelModel,
    #[serde(default = "one")]
    pub paths: usize,
    #[serde(default)]
    pub l_max: usize,
    #[serde(default)]
    pub k_max: usize,
    #[serde(default)]
    pub profile: ProfileName,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
    #[serde(default)]
    pub doppler: DopplerMode,
}

fn one() -> usize {
    1
}

fn default_exponent() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub snr_db: Vec<f64>,
    #[serde(default = "default_min_errors")]
    pub min_frame_errors: u64,
    #[serde(default = "default_max_trials")]
    pub max_trials: u64,
    /// Drop the AWGN entirely (the SNR axis then only labels rows).
    #[serde(default)]
    pub noiseless: bool,
}

fn default_min_errors() -> u64 {
    100
}

fn default_max_trials() -> u64 {
    10_000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, PartialOrd, Ord)]
#[serde(rename_all = "kebab-case")]
pub enum DetectorKind {
    Mmse,
    Mpa,
    Cdid,
    /// Exhaustive search, jointly optimal sequence.
    Ml,
    /// Exhaustive search, symbol-wise MAP from exact marginals.
    Map,
}

impl DetectorKind {
    pub fn label(&self) -> &'static str {
        match self {
            DetectorKind::Mmse => "mmse",
            DetectorKind::Mpa => "mpa",
            DetectorKind::Cdid => "cdid",
            DetectorKind::Ml => "ml",
            DetectorKind::Map => "map",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdidConfig {
    #[serde(default = "cdid_max_iter")]
    pub max_iter: usize,
    #[serde(default = "cdid_damping")]
    pub damping: f64,
    #[serde(default = "cdid_tol")]
    pub tol: f64,
    /// Extra outputs with the decisions after these iterations.
    #[serde(default)]
    pub report_iterations: Vec<usize>,
}

fn cdid_max_iter() -> usize {
    CdidOptions::default().max_iter
}

fn cdid_damping() -> f64 {
    CdidOptions::default().damping
}

fn cdid_tol() -> f64 {
    CdidOptions::default().tol
}

impl CdidConfig {
    pub fn options(&self) -> CdidOptions {
        CdidOptions {
            max_iter: self.max_iter,
            damping: self.damping,
            tol: self.tol,
            record_trajectory: !self.report_iterations.is_empty(),
        }
    }
}

impl Default for CdidConfig {
    fn default() -> Self {
        Self { max_iter: cdid_max_iter(), damping: cdid_damping(), tol: cdid_tol(), report_iterations: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<DetectorKind>,
    #[serde(default)]
    pub mpa: MpaOptions,
    #[serde(default)]
    pub cdid: CdidConfig,
    #[serde(default = "default_search_cap")]
    pub search_cap: u64,
}

fn default_kinds() -> Vec<DetectorKind> {
    vec![DetectorKind::Mmse]
}

fn default_search_cap() -> u64 {
    DEFAULT_SEARCH_CAP
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            kinds: default_kinds(),
            mpa: MpaOptions::default(),
            cdid: CdidConfig::default(),
            search_cap: default_search_cap(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    #[serde(default = "default_amplitude")]
    pub pilot_amplitude: f64,
    #[serde(default = "default_threshold")]
    pub threshold_factor: f64,
    /// Defaults to the grid centre.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pilot_pos: Option<(usize, usize)>,
}

fn default_amplitude() -> f64 {
    DEFAULT_PILOT_AMPLITUDE
}

fn default_threshold() -> f64 {
    DEFAULT_THRESHOLD_FACTOR
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self { pilot_amplitude: default_amplitude(), threshold_factor: default_threshold(), pilot_pos: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateConfig {
    pub snr_db: Vec<f64>,
    #[serde(default = "default_draws")]
    pub draws: u64,
}

fn default_draws() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub pilot_snr_db: Vec<f64>,
    #[serde(default = "default_estimate_trials")]
    pub trials: u64,
    #[serde(default)]
    pub pilot: EstimationConfig,
}

fn default_estimate_trials() -> u64 {
    1000
}

impl ExperimentConfig {
    /// Parse TOML; unknown or mistyped keys are reported with their path.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| OtfsError::Configuration(e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            OtfsError::Configuration(format!("at `{path}`: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| OtfsError::Configuration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| OtfsError::Configuration(e.to_string()))
    }

    /// SHA-256 of the canonical serialization.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.to_toml_string()?.as_bytes())))
    }

    pub fn frame_params(&self) -> Result<FrameParams> {
        let f = &self.frame;
        let cp_len = f.cp_len.unwrap_or(self.channel.l_max);
        let scheme = match f.cp_scheme {
            SchemeName::ReducedCp => CpScheme::ReducedCp,
            SchemeName::FullCp => CpScheme::FullCp,
            SchemeName::ZeroPad => CpScheme::ZeroPad(f.zero_pad_placement),
        };
        FrameParams::new(f.m, f.n, f.delta_f, scheme, cp_len)
    }

    pub fn pdp(&self) -> PowerDelayProfile {
        let c = &self.channel;
        PowerDelayProfile {
            kind: match c.profile {
                ProfileName::Uniform => PdpKind::Uniform,
                ProfileName::Exponential => PdpKind::Exponential(c.exponent),
            },
            paths: c.paths,
            l_max: c.l_max,
            k_max: c.k_max,
            doppler: c.doppler,
        }
    }

    /// Structural checks plus detector/channel compatibility.
    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(OtfsError::Configuration(m));
        if self.schema != SCHEMA_VERSION {
            return err(format!("schema {} is not supported (expected {SCHEMA_VERSION})", self.schema));
        }
        let params = self.frame_params()?;
        if self.channel.model == ChannelModel::Random {
            self.pdp().validate()?;
            if self.channel.l_max >= params.m() {
                return err(format!("l_max {} must be below M = {}", self.channel.l_max, params.m()));
            }
            if self.channel.l_max > params.cp_len() {
                log::warn!("cp_len {} below l_max {}: inter-symbol interference", params.cp_len(), self.channel.l_max);
            }
        }
        if let Some(code) = &self.coding {
            code.validate()?;
        }
        if let Some(s) = &self.sweep {
            if s.snr_db.is_empty() || s.snr_db.iter().any(|v| !v.is_finite()) {
                return err("sweep.snr_db must be a non-empty list of finite values".into());
            }
            if s.max_trials == 0 {
                return err("sweep.max_trials must be positive".into());
            }
        }
        let kinds = &self.detector.kinds;
        if kinds.is_empty() {
            return err("detector.kinds is empty".into());
        }
        let fractional = self.channel.doppler == DopplerMode::Fractional && self.channel.model == ChannelModel::Random;
        if kinds.contains(&DetectorKind::Mpa) && fractional {
            return err("detector `mpa` does not support fractional Doppler".into());
        }
        let needs_reduced_cp = kinds.contains(&DetectorKind::Cdid) || kinds.contains(&DetectorKind::Mpa);
        if needs_reduced_cp && params.cp_scheme() != CpScheme::ReducedCp {
            return err("detectors `mpa` and `cdid` require cp_scheme = \"reduced-cp\"".into());
        }
        let cdid = &self.detector.cdid;
        if let Some(t) = cdid.report_iterations.iter().find(|&&t| t == 0 || t > cdid.max_iter) {
            return err(format!("detector.cdid.report_iterations entry {t} outside 1..={}", cdid.max_iter));
        }
        if self.estimation.is_some() {
            if let Some(k) = kinds.iter().find(|k| matches!(k, DetectorKind::Mpa | DetectorKind::Cdid)) {
                return err(format!("detector `{}` cannot run on pilot-based estimates", k.label()));
            }
            if fractional {
                return err("embedded-pilot estimation assumes integer Doppler".into());
            }
        }
        if let Some(est) = &self.estimate {
            if est.pilot_snr_db.is_empty() || est.trials == 0 {
                return err("estimate needs pilot SNR points and trials".into());
            }
        }
        if let Some(r) = &self.rates {
            if r.snr_db.is_empty() || r.draws == 0 {
                return err("rates needs SNR points and draws".into());
            }
        }
        Ok(())
    }
}
