//! Run configuration shared by all CLI stages.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::embedding::{PlausibilityMode, SkipgramConfig};
use crate::error::{Error, Result};
use crate::evaluation::{default_beta_grid, HitNormalization, DEFAULT_K, DEFAULT_MENTION_THRESHOLD};
use crate::gnn::GnnConfig;
use crate::scoring::FusionMethod;
use crate::social::{LogisticConfig, SdMode, DEFAULT_MEMORY};
use crate::walks::WalkConfig;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdScoreMethod {
    #[default]
    Sum,
    Rand,
    Class,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdSection {
    pub mode: SdMode,
    pub method: SdScoreMethod,
    /// Draw size for `rand`; defaults to `k`.
    pub rand_k: Option<usize>,
    /// Years before `t` whose discoveries are classifier positives.
    pub classifier_window: i32,
    pub logistic: LogisticConfig,
}

impl Default for SdSection {
    fn default() -> Self {
        SdSection { mode: SdMode::SumDenominator, method: SdScoreMethod::Sum, rand_k: None, classifier_window: 5, logistic: LogisticConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub skipgram: SkipgramConfig,
    pub walk_weight: f64,
    pub text_weight: f64,
    pub mode: PlausibilityMode,
}

impl Default for EmbedSection {
    fn default() -> Self {
        EmbedSection { skipgram: SkipgramConfig::default(), walk_weight: 1.0, text_weight: 1.0, mode: PlausibilityMode::OutputHidden }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SppmiSection {
    pub shift: f64,
    pub alpha_mix: f64,
    pub window: usize,
}

impl Default for SppmiSection {
    fn default() -> Self {
        SppmiSection { shift: 5.0, alpha_mix: 0.0, window: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSection {
    pub method: FusionMethod,
    pub beta: f64,
    pub beta_grid: Vec<f64>,
    /// `spd`, `plausibility`, `sd`, `transition2`, `transition3` or a CSV path.
    pub s1: String,
    pub s2: String,
}

impl Default for FusionSection {
    fn default() -> Self {
        FusionSection {
            method: FusionMethod::VdwZ,
            beta: 0.5,
            beta_grid: default_beta_grid(),
            s1: "spd".into(),
            s2: "plausibility".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub keywords: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: Option<usize>,
    /// Prediction year; records before it are the only scoring input.
    pub t: Option<i32>,
    pub k: usize,
    pub gamma: usize,
    pub mention_threshold: usize,
    pub normalization: HitNormalization,
    /// Shortest paths may pass through author nodes.
    pub spd_through_authors: bool,
    pub transition_exclude_self: bool,
    pub transition_steps: usize,
    pub walks: WalkConfig,
    pub embedding: EmbedSection,
    pub sppmi: SppmiSection,
    pub sd: SdSection,
    pub fusion: FusionSection,
    pub gnn: GnnConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            keywords: None,
            out_dir: PathBuf::from("out"),
            seed: 0,
            workers: None,
            t: None,
            k: DEFAULT_K,
            gamma: DEFAULT_MEMORY,
            mention_threshold: DEFAULT_MENTION_THRESHOLD,
            normalization: HitNormalization::K,
            spd_through_authors: true,
            transition_exclude_self: false,
            transition_steps: 2,
            walks: WalkConfig::default(),
            embedding: EmbedSection::default(),
            sppmi: SppmiSection::default(),
            sd: SdSection::default(),
            fusion: FusionSection::default(),
            gnn: GnnConfig::default(),
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Validation(format!("{field}: {msg}"))
}

impl RunConfig {
    /// Reads a JSON config; absent fields take their defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Validation(format!("config {}: {e}", path.display())))
    }

    /// Propagates the global seed into the per-stage sections.
    pub fn seeded(mut self) -> Self {
        self.walks.seed = self.seed;
        self.embedding.skipgram.seed = self.seed;
        self.gnn.seed = self.seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let beta_ok = |b: f64| (0.0..=1.0).contains(&b);
        if !beta_ok(self.fusion.beta) {
            return Err(invalid("fusion.beta", format!("{} is outside [0, 1]", self.fusion.beta)));
        }
        if let Some(b) = self.fusion.beta_grid.iter().find(|&&b| !beta_ok(b)) {
            return Err(invalid("fusion.beta_grid", format!("{b} is outside [0, 1]")));
        }
        if self.fusion.beta_grid.is_empty() {
            return Err(invalid("fusion.beta_grid", "empty"));
        }
        if self.k == 0 {
            return Err(invalid("k", "must be at least 1"));
        }
        if self.gamma == 0 {
            return Err(invalid("gamma", "must be at least 1"));
        }
        if self.transition_steps < 2 {
            return Err(invalid("transition_steps", "must be at least 2"));
        }
        if self.sd.classifier_window < 1 {
            return Err(invalid("sd.classifier_window", "must be at least 1"));
        }
        if self.sd.rand_k == Some(0) {
            return Err(invalid("sd.rand_k", "must be at least 1"));
        }
        if self.embedding.walk_weight < 0.0 || self.embedding.text_weight < 0.0 {
            return Err(invalid("embedding weights", "must be nonnegative"));
        }
        if self.workers == Some(0) {
            return Err(invalid("workers", "must be at least 1"));
        }
        self.walks.validate().map_err(|e| invalid("walks", e))?;
        self.gnn.validate().map_err(|e| invalid("gnn", e))?;
        for (field, path) in [("corpus", &self.corpus), ("keywords", &self.keywords)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(invalid(field, format!("{} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// First 16 hex digits of SHA-256 over the result-relevant settings and
    /// the input file contents. Paths, output directory and worker count are
    /// excluded.
    pub fn hash(&self) -> Result<String> {
        let mut scrubbed = self.clone();
        scrubbed.out_dir = PathBuf::new();
        scrubbed.workers = None;
        scrubbed.corpus = None;
        scrubbed.keywords = None;
        let mut inputs = BTreeMap::new();
        for (name, path) in [("corpus", &self.corpus), ("keywords", &self.keywords)] {
            if let Some(p) = path {
                inputs.insert(name, hex(&Sha256::digest(fs::read(p)?)));
            }
        }
        let payload = serde_json::to_vec(&(scrubbed, inputs))?;
        Ok(hex(&Sha256::digest(payload))[..16].to_string())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
