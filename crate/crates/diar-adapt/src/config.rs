//! Pipeline configuration: every technique independently switchable, a flat
//! `key=value` config-file format, and derivation of per-stage RNG seeds
//! from the master seed.

use std::path::PathBuf;

use crate::aggregate::AggregationConfig;
use crate::cluster::SpectralConfig;
use crate::dim_reduce::{TrainConfig, DEFAULT_CODE_DIM};
use crate::error::{Error, Result};
use crate::sad::{
    DEFAULT_FRAME_HOP_SECONDS, DEFAULT_ON_RATIO, DEFAULT_SAD_THRESHOLD,
    DEFAULT_SMOOTH_WINDOW_SECONDS,
};

/// Scoring collar in seconds, split evenly around each reference boundary.
pub const DEFAULT_COLLAR_SECONDS: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clusterer {
    Ahc,
    Spc,
}

impl std::fmt::Display for Clusterer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Clusterer::Ahc => f.write_str("ahc"),
            Clusterer::Spc => f.write_str("spc"),
        }
    }
}

impl std::str::FromStr for Clusterer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ahc" => Ok(Clusterer::Ahc),
            "spc" => Ok(Clusterer::Spc),
            other => Err(Error::invalid(format!(
                "unknown clusterer {other:?}; expected ahc or spc"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeakerCount {
    Auto,
    Fixed(usize),
}

impl std::fmt::Display for SpeakerCount {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpeakerCount::Auto => f.write_str("auto"),
            SpeakerCount::Fixed(k) => write!(f, "{k}"),
        }
    }
}

impl std::str::FromStr for SpeakerCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(SpeakerCount::Auto);
        }
        let k: usize = s
            .parse()
            .map_err(|_| Error::invalid(format!("speaker count must be auto or a positive integer, got {s:?}")))?;
        if k == 0 {
            return Err(Error::invalid("speaker count must be at least 1"));
        }
        Ok(SpeakerCount::Fixed(k))
    }
}

/// How the non-speech stage runs: disabled, identified from SAD agreement,
/// or identified by similarity to a prototype embedding stored as a single
/// SEG-format line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NonspeechMode {
    Off,
    Sad,
    Prototype(PathBuf),
}

impl std::fmt::Display for NonspeechMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NonspeechMode::Off => f.write_str("off"),
            NonspeechMode::Sad => f.write_str("sad"),
            NonspeechMode::Prototype(p) => write!(f, "prototype:{}", p.display()),
        }
    }
}

impl std::str::FromStr for NonspeechMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(NonspeechMode::Off),
            "sad" => Ok(NonspeechMode::Sad),
            other => match other.strip_prefix("prototype:") {
                Some(path) if !path.is_empty() => {
                    Ok(NonspeechMode::Prototype(PathBuf::from(path)))
                }
                _ => Err(Error::invalid(format!(
                    "unknown non-speech mode {other:?}; expected off, sad or prototype:<path>"
                ))),
            },
        }
    }
}

/// Full pipeline configuration. Every field has a default, so any of the
/// eight technique combinations is constructible by flipping `use_dr`,
/// `use_aa` and `nonspeech` independently.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub clusterer: Clusterer,
    pub use_dr: bool,
    pub use_aa: bool,
    pub nonspeech: NonspeechMode,
    pub num_speakers: SpeakerCount,
    pub code_dim: usize,
    pub train: TrainConfig,
    pub aggregation: AggregationConfig,
    pub spectral: SpectralConfig,
    /// Optional AHC stopping threshold used instead of silhouette estimation
    /// when the speaker count is `auto`.
    pub ahc_threshold: Option<f64>,
    pub sad_threshold: f64,
    pub sad_window_seconds: f64,
    pub sad_on_ratio: f64,
    pub collar: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            clusterer: Clusterer::Ahc,
            use_dr: false,
            use_aa: false,
            nonspeech: NonspeechMode::Off,
            num_speakers: SpeakerCount::Auto,
            code_dim: DEFAULT_CODE_DIM,
            train: TrainConfig::default(),
            aggregation: AggregationConfig::default(),
            spectral: SpectralConfig::default(),
            ahc_threshold: None,
            sad_threshold: DEFAULT_SAD_THRESHOLD,
            sad_window_seconds: DEFAULT_SMOOTH_WINDOW_SECONDS,
            sad_on_ratio: DEFAULT_ON_RATIO,
            collar: DEFAULT_COLLAR_SECONDS,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn use_ns(&self) -> bool {
        self.nonspeech != NonspeechMode::Off
    }

    /// Applies one `key=value` setting. `context` names the source for
    /// error messages.
    pub fn set(&mut self, key: &str, value: &str, context: &str) -> Result<()> {
        let bad_value = || Error::invalid(format!("{context}: invalid value {value:?} for {key}"));
        let parse_f64 = || value.parse::<f64>().map_err(|_| bad_value());
        let parse_usize = || value.parse::<usize>().map_err(|_| bad_value());
        let parse_bool = || value.parse::<bool>().map_err(|_| bad_value());
        match key {
            "clusterer" => self.clusterer = value.parse()?,
            "dr" => self.use_dr = parse_bool()?,
            "aa" => self.use_aa = parse_bool()?,
            "nonspeech" => self.nonspeech = value.parse()?,
            "num_speakers" => self.num_speakers = value.parse()?,
            "code_dim" => self.code_dim = parse_usize()?,
            "epochs" => self.train.epochs = parse_usize()?,
            "learning_rate" => self.train.learning_rate = parse_f64()?,
            "aa_iterations" => self.aggregation.repetitions = parse_usize()?,
            "aa_temperature" => self.aggregation.temperature = parse_f64()?,
            "eigen_threshold" => self.spectral.eigen_threshold = parse_f64()?,
            "kmeans_restarts" => self.spectral.kmeans_restarts = parse_usize()?,
            "kmeans_max_iter" => self.spectral.kmeans_max_iter = parse_usize()?,
            "ahc_threshold" => {
                self.ahc_threshold = if value == "none" {
                    None
                } else {
                    Some(parse_f64()?)
                }
            }
            "sad_threshold" => self.sad_threshold = parse_f64()?,
            "sad_window" => self.sad_window_seconds = parse_f64()?,
            "sad_on_ratio" => self.sad_on_ratio = parse_f64()?,
            "collar" => self.collar = parse_f64()?,
            "seed" => self.seed = value.parse().map_err(|_| bad_value())?,
            other => {
                return Err(Error::invalid(format!(
                    "{context}: unknown configuration key {other:?}"
                )))
            }
        }
        Ok(())
    }
}

/// Parses a flat `key = value` configuration file applied over the defaults.
/// Blank lines and `#` comments are skipped.
pub fn parse_config(text: &str, source: &str) -> Result<PipelineConfig> {
    let mut config = PipelineConfig::default();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::parse(source, lineno, "expected key=value")
        })?;
        config.set(key.trim(), value.trim(), &format!("{source}:{lineno}"))?;
    }
    Ok(config)
}

/// Reads a configuration file; see [`parse_config`].
pub fn read_config(path: &std::path::Path) -> Result<PipelineConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

/// Derives a per-stage seed from the master seed by FNV-1a hashing the
/// stage name followed by the seed bytes, so stages draw from independent
/// streams and adding a stage never shifts another stage's randomness.
pub fn stage_seed(master: u64, stage: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    for b in stage.bytes().chain(master.to_le_bytes()) {
        h = (h ^ u64::from(b)).wrapping_mul(PRIME);
    }
    h
}

/// Frame hop used when synthesising SAD probabilities from a reference
/// timeline.
pub const REFERENCE_SAD_HOP_SECONDS: f64 = DEFAULT_FRAME_HOP_SECONDS;
