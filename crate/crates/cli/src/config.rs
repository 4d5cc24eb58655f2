//! Pipeline configuration, stage hashes and artifact sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hiergnn::explain::AttributionFilter;
use hiergnn::fields::Field;
use hiergnn::model::ModelConfig;
use hiergnn::trainer::TrainConfig;
use hiergnn::vectorize::{default_nonzeros, TfidfVariant};
use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub n_docs: usize,
    pub signal_field: Field,
    pub signal_strength: f64,
    pub positive_prior: f64,
    pub distractor_rate: f64,
    pub filler_vocab: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            n_docs: 2000,
            signal_field: Field::Design,
            signal_strength: 0.9,
            positive_prior: 0.26,
            distractor_rate: 0.5,
            filler_vocab: 1500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VectorizerSettings {
    pub vocab_size: usize,
    pub dim: usize,
    /// Nonzeros per projector row; derived from the vocabulary when unset.
    pub k: Option<usize>,
    pub tfidf_variant: TfidfVariant,
    pub unit_norm: bool,
}

impl Default for VectorizerSettings {
    fn default() -> Self {
        Self {
            vocab_size: 500_000,
            dim: 768,
            k: None,
            tfidf_variant: TfidfVariant::LengthScaled,
            unit_norm: true,
        }
    }
}

impl VectorizerSettings {
    /// Row sparsity: explicit `k`, otherwise [`default_nonzeros`].
    pub fn nonzeros(&self, vocab_len: usize) -> usize {
        match self.k {
            Some(k) => k.clamp(1, vocab_len.max(1)),
            None => default_nonzeros(vocab_len, self.dim),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    pub batch_size: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self { batch_size: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSettings {
    pub filter: AttributionFilter,
    pub limit: usize,
    pub batch_size: usize,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self {
            filter: AttributionFilter::Predicted,
            limit: 1000,
            batch_size: 32,
        }
    }
}

/// Default locations; command-line paths take precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub protocols: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub splits: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub projector: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub graphs: Option<PathBuf>,
    pub flat: Option<PathBuf>,
    pub model: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds the split, the synthetic corpus, the projector, initialisation
    /// and training.
    pub seed: u64,
    pub synth: SynthSettings,
    pub vectorizer: VectorizerSettings,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub evaluation: EvalSettings,
    pub explain: ExplainSettings,
    pub paths: Paths,
}

impl PipelineConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Producing stages, in pipeline order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Stage {
    Corpus,
    Vocab,
    Features,
    Graphs,
    Model,
    Report,
    Explain,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Corpus => "corpus",
            Stage::Vocab => "vocab",
            Stage::Features => "features",
            Stage::Graphs => "graphs",
            Stage::Model => "model",
            Stage::Report => "report",
            Stage::Explain => "explain",
        }
    }

    fn from_name(s: &str) -> Option<Self> {
        [
            Stage::Corpus,
            Stage::Vocab,
            Stage::Features,
            Stage::Graphs,
            Stage::Model,
            Stage::Report,
            Stage::Explain,
        ]
        .into_iter()
        .find(|st| st.name() == s)
    }
}

/// The settings an artifact of `stage` depends on, including upstream
/// stages. Paths are excluded.
pub fn stage_view(cfg: &PipelineConfig, stage: Stage) -> Value {
    let v = &cfg.vectorizer;
    let mut view = json!({ "seed": cfg.seed, "synth": cfg.synth });
    let obj = view.as_object_mut().expect("object literal");
    if stage >= Stage::Vocab {
        obj.insert(
            "vocab".into(),
            json!({ "vocab_size": v.vocab_size, "dim": v.dim, "k": v.k }),
        );
    }
    if stage >= Stage::Features {
        obj.insert(
            "features".into(),
            json!({ "tfidf_variant": v.tfidf_variant, "unit_norm": v.unit_norm }),
        );
    }
    if stage >= Stage::Model {
        let mut model = cfg.model.clone();
        // Set from the data at training time.
        model.input_dim = 0;
        obj.insert("model".into(), json!(model));
        obj.insert("train".into(), json!(cfg.train));
    }
    if stage == Stage::Report {
        obj.insert("evaluation".into(), json!(cfg.evaluation));
    }
    if stage == Stage::Explain {
        obj.insert("explain".into(), json!(cfg.explain));
    }
    view
}

pub fn config_hash(cfg: &PipelineConfig, stage: Stage) -> String {
    let bytes = serde_json::to_vec(&stage_view(cfg, stage)).expect("config serialises");
    hex::encode(Sha256::digest(bytes))
}

/// Sidecar of a file artifact (`X.meta.json`) or a directory (`DIR/meta.json`).
pub fn meta_path(artifact: &Path) -> PathBuf {
    if artifact.is_dir() {
        return artifact.join("meta.json");
    }
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    artifact.with_file_name(name)
}

/// Records the producing stage, its config hash and the full resolved config.
pub fn write_meta(artifact: &Path, cfg: &PipelineConfig, stage: Stage) -> Result<()> {
    let meta = json!({
        "stage": stage.name(),
        "config_hash": config_hash(cfg, stage),
        "config": cfg,
    });
    let path = meta_path(artifact);
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

/// Warns when `artifact` was produced under settings that differ from the
/// current config. Artifacts without a sidecar are accepted silently.
pub fn check_meta(artifact: &Path, cfg: &PipelineConfig) -> Result<bool> {
    let path = meta_path(artifact);
    let Ok(text) = fs::read_to_string(&path) else {
        return Ok(true);
    };
    let meta: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    let stage = meta["stage"].as_str().and_then(Stage::from_name);
    let recorded = meta["config_hash"].as_str();
    let (Some(stage), Some(recorded)) = (stage, recorded) else {
        warn!("{}: unreadable sidecar, skipping the config check", path.display());
        return Ok(false);
    };
    let current = config_hash(cfg, stage);
    if current != recorded {
        warn!(
            "{} was produced with config hash {recorded}, the current config gives {current}",
            artifact.display()
        );
        return Ok(false);
    }
    Ok(true)
}
