use std::path::PathBuf;

use clap::{Args, ValueEnum};
use hiergnn::corpus::Split;
use hiergnn::explain::AttributionFilter;
use hiergnn::fields::Field;
use hiergnn::model::Variant;
use hiergnn::vectorize::TfidfVariant;

use crate::config::PipelineConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Validation,
    Test,
    All,
}

impl SplitArg {
    pub fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Validation => Some(Split::Validation),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of registry protocol JSON files, searched recursively.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output corpus (JSON lines of document trees).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a seeded train/validation/test assignment.
    #[arg(long)]
    pub splits_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output corpus (JSON lines of document trees).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write raw protocol JSON files, one per document, for `ingest`.
    #[arg(long)]
    pub protocols_dir: Option<PathBuf>,
    #[arg(long)]
    pub splits_out: Option<PathBuf>,
    #[arg(long)]
    pub n_docs: Option<usize>,
    #[arg(long)]
    pub signal_field: Option<Field>,
    #[arg(long)]
    pub signal_strength: Option<f64>,
}

impl SynthArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let s = &mut cfg.synth;
        s.n_docs = self.n_docs.unwrap_or(s.n_docs);
        s.signal_field = self.signal_field.unwrap_or(s.signal_field);
        s.signal_strength = self.signal_strength.unwrap_or(s.signal_strength);
    }
}

#[derive(Debug, Args)]
pub struct BuildVocabArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Split file; only training documents enter the vocabulary.
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long)]
    pub vocab_out: Option<PathBuf>,
    #[arg(long)]
    pub projector_out: Option<PathBuf>,
    #[arg(long)]
    pub vocab_size: Option<usize>,
    /// Projected width.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Nonzeros per projector row.
    #[arg(long)]
    pub k: Option<usize>,
}

impl BuildVocabArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let v = &mut cfg.vectorizer;
        v.vocab_size = self.vocab_size.unwrap_or(v.vocab_size);
        v.dim = self.dim.unwrap_or(v.dim);
        v.k = self.k.or(v.k);
    }
}

#[derive(Debug, Args)]
pub struct VectorizeArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub projector: Option<PathBuf>,
    /// Output feature file (JSON lines).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_variant)]
    pub tfidf_variant: Option<TfidfVariant>,
    /// Keep the projected magnitudes instead of scaling vectors to unit length.
    #[arg(long)]
    pub no_unit_norm: bool,
}

fn parse_variant(s: &str) -> Result<TfidfVariant, String> {
    match s {
        "length_scaled" => Ok(TfidfVariant::LengthScaled),
        "conventional" => Ok(TfidfVariant::Conventional),
        other => Err(format!(
            "unknown variant {other:?} (expected length_scaled or conventional)"
        )),
    }
}

impl VectorizeArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let v = &mut cfg.vectorizer;
        v.tfidf_variant = self.tfidf_variant.unwrap_or(v.tfidf_variant);
        if self.no_unit_norm {
            v.unit_norm = false;
        }
    }
}

#[derive(Debug, Args)]
pub struct BuildGraphsArgs {
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Feature file from `vectorize` or external embeddings in the same format.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Output graph cache.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write whole-document and per-field vectors for the flat baselines.
    #[arg(long)]
    pub flat_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    #[arg(long)]
    pub flat: Option<PathBuf>,
    #[arg(long)]
    pub splits: Option<PathBuf>,
    /// Output directory for the checkpoint, model config and history.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
}

impl TrainArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        cfg.model.variant = self.variant.unwrap_or(cfg.model.variant);
        let t = &mut cfg.train;
        t.max_epochs = self.epochs.unwrap_or(t.max_epochs);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.lr = self.lr.unwrap_or(t.lr);
        t.patience = self.patience.unwrap_or(t.patience);
    }
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Directory written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    #[arg(long)]
    pub flat: Option<PathBuf>,
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Output report (JSON).
    #[arg(long)]
    pub out: PathBuf,
    /// Optional per-document `doc_id,label,score` CSV.
    #[arg(long)]
    pub scores: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Per-document `doc_id,field,alpha` CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Ranked `field,mean_alpha,rank` CSV over the filtered documents.
    #[arg(long)]
    pub ranking: Option<PathBuf>,
    #[arg(long)]
    pub filter: Option<AttributionFilter>,
    #[arg(long)]
    pub limit: Option<usize>,
}

impl ExplainArgs {
    pub fn apply(&self, cfg: &mut PipelineConfig) {
        let e = &mut cfg.explain;
        e.filter = self.filter.unwrap_or(e.filter);
        e.limit = self.limit.unwrap_or(e.limit);
    }
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub graphs: Option<PathBuf>,
    #[arg(long)]
    pub splits: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Output `doc_id,label,component,values` CSV.
    #[arg(long)]
    pub out: PathBuf,
}
