//! The pipeline configuration file: schema, path resolution, validation
//! and the digest stamped on every output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use prosody_mi::corpus::AlignmentFormat;
use prosody_mi::density::DEFAULT_BOOTSTRAP_FOLDS;
use prosody_mi::dsp::{Feature, FeatureParams};
use prosody_mi::infometrics::DEFAULT_H_MIN_NATS;
use prosody_mi::predictor::SearchSpace;
use prosody_mi::{ContextType, PredictiveFamily};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub embeddings: EmbeddingPaths,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub seed: u64,
    /// Relative to the config file; `--out` overrides it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_h_min")]
    pub h_min_nats: f64,
}

fn default_h_min() -> f64 {
    DEFAULT_H_MIN_NATS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub alignments: PathBuf,
    #[serde(default = "default_alignment_format")]
    pub alignment_format: String,
    pub audio_root: PathBuf,
    pub lexicon: PathBuf,
    pub splits: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prominence: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub surprisal: Option<PathBuf>,
    #[serde(default = "default_min_words")]
    pub min_words: usize,
}

fn default_alignment_format() -> String {
    "json".into()
}

fn default_min_words() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub extraction: FeatureParams,
    /// Added to pauses before a Gamma head sees them.
    pub pause_epsilon_s: f64,
    /// Columns to z-score; `None` keeps the per-feature defaults.
    pub zscore: Option<Vec<String>>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            extraction: FeatureParams::default(),
            pause_epsilon_s: 1e-3,
            zscore: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub bandwidth_grid: Option<Vec<f64>>,
    pub n_folds: usize,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self {
            bandwidth_grid: None,
            n_folds: DEFAULT_BOOTSTRAP_FOLDS,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PredictorConfig {
    /// Feature name to family name; unlisted features use the defaults.
    pub families: BTreeMap<String, String>,
    pub search: SearchSpace,
    pub n_trials: usize,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            families: BTreeMap::new(),
            search: SearchSpace::default(),
            n_trials: 50,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub current: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub past: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bidirectional: Option<PathBuf>,
}

impl EmbeddingPaths {
    pub fn get(&self, context: ContextType) -> Option<&PathBuf> {
        match context {
            ContextType::CurrentWord => self.current.as_ref(),
            ContextType::PastContext => self.past.as_ref(),
            ContextType::Bidirectional => self.bidirectional.as_ref(),
        }
    }

    fn all_mut(&mut self) -> [&mut Option<PathBuf>; 3] {
        [&mut self.current, &mut self.past, &mut self.bidirectional]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub n_samples: usize,
    pub separations: Vec<f64>,
    pub include_null: bool,
    pub min_class_size: usize,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            n_samples: 20_000,
            separations: vec![0.0, 1.0, 2.0, 4.0],
            include_null: true,
            min_class_size: 50,
        }
    }
}

/// A configuration error; reported before any output is written.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

/// A loaded, validated configuration with paths resolved against the
/// config file's directory.
#[derive(Clone, Debug)]
pub struct Loaded {
    pub config: PipelineConfig,
    /// Digest of the configuration as written (paths unresolved, output
    /// directory removed) with the effective seed.
    pub digest: String,
    pub output_dir: PathBuf,
}

impl Loaded {
    pub fn header(&self) -> String {
        format!("prosody-mi config_sha256={} seed={}", self.digest, self.config.seed)
    }
}

pub fn default_family(feature: Feature, dct_k: usize) -> PredictiveFamily {
    match feature {
        Feature::Energy | Feature::DurationPerSyllable | Feature::ProminenceRelative => {
            PredictiveFamily::GaussianScalar
        }
        Feature::PauseAfter | Feature::Prominence => PredictiveFamily::GammaScalar,
        Feature::F0Dct => PredictiveFamily::GaussianDiag { k: dct_k },
    }
}

impl PipelineConfig {
    pub fn family(&self, feature: Feature) -> PredictiveFamily {
        self.predictor
            .families
            .iter()
            .find(|(k, _)| k.parse::<Feature>().ok() == Some(feature))
            .and_then(|(_, v)| v.parse().ok())
            .unwrap_or_else(|| default_family(feature, self.features.extraction.dct_k))
    }

    pub fn zscore_columns(&self) -> Vec<Feature> {
        match &self.features.zscore {
            Some(names) => names.iter().filter_map(|n| n.parse().ok()).collect(),
            None => Feature::ALL
                .iter()
                .copied()
                .filter(|f| f.zscored_by_default())
                .collect(),
        }
    }

    pub fn alignment_format(&self) -> AlignmentFormat {
        self.corpus.alignment_format.parse().expect("validated")
    }
}

fn exists(path: &Path, what: &str) -> Result<(), ConfigError> {
    if path.exists() {
        Ok(())
    } else {
        Err(ConfigError(format!("{what} `{}` does not exist", path.display())))
    }
}

fn validate(cfg: &PipelineConfig) -> Result<(), ConfigError> {
    let c = &cfg.corpus;
    exists(&c.alignments, "alignment file")?;
    exists(&c.audio_root, "audio root")?;
    exists(&c.lexicon, "lexicon")?;
    exists(&c.splits, "split file")?;
    if let Some(p) = &c.prominence {
        exists(p, "prominence column")?;
    }
    if let Some(p) = &c.surprisal {
        exists(p, "surprisal column")?;
    }
    for (name, p) in [
        ("current", &cfg.embeddings.current),
        ("past", &cfg.embeddings.past),
        ("bidirectional", &cfg.embeddings.bidirectional),
    ] {
        if let Some(p) = p {
            exists(p, &format!("{name} embedding file"))?;
        }
    }
    c.alignment_format.parse::<AlignmentFormat>().map_err(ConfigError)?;
    if c.min_words < 1 {
        return Err(ConfigError("corpus.min_words must be at least 1".into()));
    }

    let f = &cfg.features;
    f.extraction
        .validate()
        .map_err(|e| ConfigError(format!("features.extraction: {e}")))?;
    if !(f.pause_epsilon_s > 0.0 && f.pause_epsilon_s.is_finite()) {
        return Err(ConfigError(format!(
            "features.pause_epsilon_s must be positive, got {}",
            f.pause_epsilon_s
        )));
    }
    if let Some(names) = &f.zscore {
        for n in names {
            let feature: Feature = n.parse().map_err(|e| ConfigError(format!("features.zscore: {e}")))?;
            if feature.is_vector() {
                return Err(ConfigError(
                    "features.zscore: the f0 DCT vector cannot be z-scored".into(),
                ));
            }
        }
    }

    let d = &cfg.density;
    if d.n_folds < 2 {
        return Err(ConfigError(format!(
            "density.n_folds must be at least 2, got {}",
            d.n_folds
        )));
    }
    if let Some(grid) = &d.bandwidth_grid {
        if grid.is_empty() || grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(ConfigError(
                "density.bandwidth_grid must be non-empty and positive".into(),
            ));
        }
    }

    let p = &cfg.predictor;
    if p.n_trials < 1 {
        return Err(ConfigError("predictor.n_trials must be at least 1".into()));
    }
    p.search
        .validate()
        .map_err(|e| ConfigError(format!("predictor.search: {e}")))?;
    for (name, family) in &p.families {
        let feature: Feature = name
            .parse()
            .map_err(|e| ConfigError(format!("predictor.families: {e}")))?;
        let family: PredictiveFamily = family
            .parse()
            .map_err(|e| ConfigError(format!("predictor.families: {e}")))?;
        let want = if feature.is_vector() { f.extraction.dct_k } else { 1 };
        if family.target_dim() != want {
            return Err(ConfigError(format!(
                "predictor.families: {family} predicts {} values but {feature} has {want}",
                family.target_dim()
            )));
        }
    }

    let v = &cfg.validation;
    if v.n_samples < 100 {
        return Err(ConfigError("validation.n_samples must be at least 100".into()));
    }
    if v.separations.iter().any(|s| !s.is_finite()) {
        return Err(ConfigError("validation.separations must be finite".into()));
    }
    if !cfg.h_min_nats.is_finite() {
        return Err(ConfigError("h_min_nats must be finite".into()));
    }
    Ok(())
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

/// Reads, digests, resolves and validates a configuration file.
pub fn load(path: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<Loaded, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError(format!("cannot read `{}`: {e}", path.display())))?;
    let mut config: PipelineConfig =
        serde_json::from_str(&text).map_err(|e| ConfigError(format!("`{}`: {e}", path.display())))?;
    if let Some(seed) = seed {
        config.seed = seed;
    }

    let mut digest_view = config.clone();
    digest_view.output_dir = None;
    let canonical = serde_json::to_vec(&digest_view).expect("config serializes");
    let digest = hex::encode(Sha256::digest(&canonical));

    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let c = &mut config.corpus;
    for p in [&mut c.alignments, &mut c.audio_root, &mut c.lexicon, &mut c.splits] {
        resolve(&base, p);
    }
    for p in [&mut c.prominence, &mut c.surprisal]
        .into_iter()
        .chain(config.embeddings.all_mut())
        .flatten()
    {
        resolve(&base, p);
    }
    let output_dir = match (out, &config.output_dir) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => base.join(o),
        (None, None) => base.join("out"),
    };
    validate(&config)?;
    Ok(Loaded {
        config,
        digest,
        output_dir,
    })
}
