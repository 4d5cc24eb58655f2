use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hiergnn::corpus::synth::{generate, generate_protocols, SynthConfig};
use hiergnn::corpus::{ingest_dir, make_splits, read_splits, read_trees, write_splits, write_trees, DocTree, Split};
use hiergnn::evaluation::{evaluate, write_scores};
use hiergnn::explain::{
    aggregate_attributions, export_embeddings, field_gradients, write_attributions, write_embeddings, write_ranking,
};
use hiergnn::graph::{
    build_flat_doc, build_graph_from_paths, read_flat_docs, read_graphs, write_flat_docs, write_graphs, FeaturedGraph,
    FlatDoc,
};
use hiergnn::model::{Dataset, Model};
use hiergnn::trainer::{train, write_history};
use hiergnn::vectorize::{
    build_vocabulary, load_embeddings, make_projector, read_projector, write_features, write_projector, Featurizer,
    Vocabulary,
};
use log::{info, warn};

use crate::args::*;
use crate::config::{check_meta, write_meta, PipelineConfig, Stage};

fn required(flag: &Option<PathBuf>, configured: &Option<PathBuf>, name: &str, key: &str) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| configured.clone())
        .with_context(|| format!("missing --{name} (or paths.{key} in the config)"))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(BufReader::new(f))
}

/// Writes through `body`, flushes, then records the sidecar.
fn produce(
    path: &Path,
    cfg: &PipelineConfig,
    stage: Stage,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut w = BufWriter::new(f);
    body(&mut w)?;
    w.flush().with_context(|| format!("writing {}", path.display()))?;
    write_meta(path, cfg, stage)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn load_corpus(path: &Path, cfg: &PipelineConfig) -> Result<Vec<DocTree>> {
    check_meta(path, cfg)?;
    read_trees(open(path)?).with_context(|| format!("reading {}", path.display()))
}

fn write_corpus_outputs(
    trees: &[DocTree],
    out: Option<&Path>,
    splits_out: Option<&Path>,
    cfg: &PipelineConfig,
) -> Result<()> {
    if let Some(out) = out {
        produce(out, cfg, Stage::Corpus, |w| Ok(write_trees(w, trees)?))?;
    }
    if let Some(path) = splits_out {
        let ids: Vec<String> = trees.iter().map(|t| t.doc_id.clone()).collect();
        let splits = make_splits(&ids, cfg.seed)?;
        produce(path, cfg, Stage::Corpus, |w| Ok(write_splits(w, &splits)?))?;
    }
    Ok(())
}

pub fn ingest(a: &IngestArgs, cfg: &PipelineConfig) -> Result<()> {
    let input = required(&a.input, &cfg.paths.protocols, "input", "protocols")?;
    let out = required(&a.out, &cfg.paths.corpus, "out", "corpus")?;
    if !input.is_dir() {
        bail!("input directory {} does not exist", input.display());
    }
    let outcome = ingest_dir(&input)?;
    info!("{} documents kept, {} excluded", outcome.trees.len(), outcome.excluded);
    let splits = a.splits_out.clone().or_else(|| cfg.paths.splits.clone());
    write_corpus_outputs(&outcome.trees, Some(&out), splits.as_deref(), cfg)
}

pub fn synth(a: &SynthArgs, cfg: &PipelineConfig) -> Result<()> {
    let s = &cfg.synth;
    let sc = SynthConfig {
        n_docs: s.n_docs,
        signal_field: s.signal_field,
        signal_strength: s.signal_strength,
        seed: cfg.seed,
        positive_prior: s.positive_prior,
        distractor_rate: s.distractor_rate,
        filler_vocab: s.filler_vocab,
    };
    let out = a.out.clone().or_else(|| cfg.paths.corpus.clone());
    let protocols = a.protocols_dir.clone().or_else(|| cfg.paths.protocols.clone());
    if out.is_none() && protocols.is_none() {
        bail!("synth needs --out or --protocols-dir");
    }
    if let Some(dir) = &protocols {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for (i, doc) in generate_protocols(&sc)?.iter().enumerate() {
            let path = dir.join(format!("{:06}.json", i + 1));
            let text = serde_json::to_string_pretty(doc)?;
            fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        info!("wrote {} protocols to {}", s.n_docs, dir.display());
    }
    let splits = a.splits_out.clone().or_else(|| cfg.paths.splits.clone());
    if out.is_some() || splits.is_some() {
        let trees = generate(&sc)?;
        write_corpus_outputs(&trees, out.as_deref(), splits.as_deref(), cfg)?;
    }
    Ok(())
}

fn load_splits(path: &Path, cfg: &PipelineConfig) -> Result<HashMap<String, Split>> {
    check_meta(path, cfg)?;
    let splits = read_splits(open(path)?).with_context(|| format!("reading {}", path.display()))?;
    Ok(splits.into_iter().map(|s| (s.doc_id, s.split)).collect())
}

pub fn build_vocab(a: &BuildVocabArgs, cfg: &PipelineConfig) -> Result<()> {
    let corpus = required(&a.corpus, &cfg.paths.corpus, "corpus", "corpus")?;
    let splits = required(&a.splits, &cfg.paths.splits, "splits", "splits")?;
    let vocab_out = required(&a.vocab_out, &cfg.paths.vocab, "vocab-out", "vocab")?;
    let proj_out = required(&a.projector_out, &cfg.paths.projector, "projector-out", "projector")?;
    let trees = load_corpus(&corpus, cfg)?;
    let index = load_splits(&splits, cfg)?;
    let train: Vec<DocTree> = trees
        .into_iter()
        .filter(|t| index.get(&t.doc_id) == Some(&Split::Train))
        .collect();
    if train.is_empty() {
        bail!("no training documents in {}", corpus.display());
    }
    let v = &cfg.vectorizer;
    let vocab = build_vocabulary(&train, v.vocab_size)?;
    let k = v.nonzeros(vocab.len());
    info!(
        "vocabulary of {} tokens from {} documents; projector {}x{} with {k} nonzeros per row",
        vocab.len(),
        train.len(),
        v.dim,
        vocab.len()
    );
    let projector = make_projector(v.dim, vocab.len(), k, cfg.seed)?;
    produce(&vocab_out, cfg, Stage::Vocab, |w| Ok(vocab.write(w)?))?;
    produce(&proj_out, cfg, Stage::Vocab, |w| Ok(write_projector(w, &projector)?))
}

pub fn vectorize(a: &VectorizeArgs, cfg: &PipelineConfig) -> Result<()> {
    let corpus = required(&a.corpus, &cfg.paths.corpus, "corpus", "corpus")?;
    let vocab_path = required(&a.vocab, &cfg.paths.vocab, "vocab", "vocab")?;
    let proj_path = required(&a.projector, &cfg.paths.projector, "projector", "projector")?;
    let out = required(&a.out, &cfg.paths.features, "out", "features")?;
    let trees = load_corpus(&corpus, cfg)?;
    check_meta(&vocab_path, cfg)?;
    let vocab = Vocabulary::read(open(&vocab_path)?).with_context(|| format!("reading {}", vocab_path.display()))?;
    let projector = read_projector(open(&proj_path)?).with_context(|| format!("reading {}", proj_path.display()))?;
    let featurizer =
        Featurizer::new(&vocab, &projector, cfg.vectorizer.tfidf_variant)?.unit_norm(cfg.vectorizer.unit_norm);
    let records = featurizer.featurize_all(&trees)?;
    info!(
        "{} vectors of width {} for {} documents",
        records.len(),
        featurizer.dim(),
        trees.len()
    );
    produce(&out, cfg, Stage::Features, |w| Ok(write_features(w, &records)?))
}

pub fn build_graphs(a: &BuildGraphsArgs, cfg: &PipelineConfig) -> Result<()> {
    let corpus = required(&a.corpus, &cfg.paths.corpus, "corpus", "corpus")?;
    let features = required(&a.features, &cfg.paths.features, "features", "features")?;
    let out = required(&a.out, &cfg.paths.graphs, "out", "graphs")?;
    let flat_out = a.flat_out.clone().or_else(|| cfg.paths.flat.clone());
    let trees = load_corpus(&corpus, cfg)?;
    check_meta(&features, cfg)?;
    let emb = load_embeddings(&features)?;
    let d = emb.dim();
    let uncovered = trees.iter().filter(|t| emb.doc(&t.doc_id).is_none()).count();
    if uncovered > 0 {
        warn!("{uncovered} documents have no vectors and get zero features");
    }
    let graphs: Vec<FeaturedGraph> = trees
        .iter()
        .map(|t| build_graph_from_paths(t, emb.doc(&t.doc_id), d))
        .collect::<Result<_, _>>()?;
    produce(&out, cfg, Stage::Graphs, |w| Ok(write_graphs(w, &graphs)?))?;
    if let Some(flat_out) = flat_out {
        let flat: Vec<FlatDoc> = trees
            .iter()
            .map(|t| build_flat_doc(t, emb.doc(&t.doc_id), d))
            .collect::<Result<_, _>>()?;
        produce(&flat_out, cfg, Stage::Graphs, |w| Ok(write_flat_docs(w, &flat)?))?;
    }
    Ok(())
}

/// All documents of an input file, graph or flat.
fn load_dataset(graphs: Option<&Path>, flat: Option<&Path>, cfg: &PipelineConfig) -> Result<Dataset> {
    match (graphs, flat) {
        (Some(_), Some(_)) => bail!("give either --graphs or --flat, not both"),
        (Some(p), None) => {
            check_meta(p, cfg)?;
            Ok(Dataset::Graphs(
                read_graphs(open(p)?).with_context(|| format!("reading {}", p.display()))?,
            ))
        }
        (None, Some(p)) => {
            check_meta(p, cfg)?;
            Ok(Dataset::Flat(
                read_flat_docs(open(p)?).with_context(|| format!("reading {}", p.display()))?,
            ))
        }
        (None, None) => bail!("missing --graphs or --flat (or paths.graphs / paths.flat in the config)"),
    }
}

fn select(data: &Dataset, index: &HashMap<String, Split>, split: Split) -> Dataset {
    let idx: Vec<usize> = (0..data.len())
        .filter(|&i| index.get(data.doc_id(i)) == Some(&split))
        .collect();
    data.select(&idx)
}

/// Resolves `--graphs` / `--flat`, preferring whichever matches the variant
/// when both come from the config.
fn data_paths(
    graphs: &Option<PathBuf>,
    flat: &Option<PathBuf>,
    cfg: &PipelineConfig,
    graph_model: bool,
) -> (Option<PathBuf>, Option<PathBuf>) {
    if graphs.is_some() || flat.is_some() {
        return (graphs.clone(), flat.clone());
    }
    if graph_model {
        (cfg.paths.graphs.clone(), None)
    } else {
        (None, cfg.paths.flat.clone())
    }
}

pub fn train_cmd(a: &TrainArgs, cfg: &PipelineConfig) -> Result<()> {
    let splits = required(&a.splits, &cfg.paths.splits, "splits", "splits")?;
    let out = required(&a.out, &cfg.paths.model, "out", "model")?;
    let variant = cfg.model.variant;
    let (g, f) = data_paths(&a.graphs, &a.flat, cfg, variant.is_graph());
    let data = load_dataset(g.as_deref(), f.as_deref(), cfg)?;
    if data.is_graph() != variant.is_graph() {
        bail!(
            "variant {variant} needs {} input",
            if variant.is_graph() { "--graphs" } else { "--flat" }
        );
    }
    let index = load_splits(&splits, cfg)?;
    let train_set = select(&data, &index, Split::Train);
    let val_set = select(&data, &index, Split::Validation);
    let mut model_cfg = cfg.model.clone();
    model_cfg.input_dim = data.dim().context("input file is empty")?;
    info!(
        "training {variant} on {} documents, validating on {}",
        train_set.len(),
        val_set.len()
    );
    let mut model = Model::new(model_cfg, cfg.seed)?;
    let mut tc = cfg.train.clone();
    tc.seed = cfg.seed;
    let outcome = train(&mut model, &tc, &train_set, &val_set)?;
    info!(
        "best epoch {} with validation F1-macro {:.4}",
        outcome.best_epoch, outcome.best_report.f1_macro
    );
    model.save(&out)?;
    let history = out.join("history.csv");
    let f = File::create(&history).with_context(|| format!("cannot create {}", history.display()))?;
    write_history(BufWriter::new(f), &outcome.history)?;
    write_meta(&out, cfg, Stage::Model)?;
    info!("wrote {}", out.display());
    Ok(())
}

fn load_model(path: &Path, cfg: &PipelineConfig) -> Result<Model> {
    if !path.is_dir() {
        bail!("model directory {} does not exist", path.display());
    }
    check_meta(path, cfg)?;
    Ok(Model::load(path)?)
}

fn scoped(data: Dataset, splits: Option<&Path>, split: SplitArg, cfg: &PipelineConfig) -> Result<Dataset> {
    let Some(split) = split.split() else {
        return Ok(data);
    };
    let Some(path) = splits else {
        bail!("--split {} needs --splits", split.name());
    };
    Ok(select(&data, &load_splits(path, cfg)?, split))
}

pub fn evaluate_cmd(a: &EvaluateArgs, cfg: &PipelineConfig) -> Result<()> {
    let model_dir = required(&a.model, &cfg.paths.model, "model", "model")?;
    let model = load_model(&model_dir, cfg)?;
    let (g, f) = data_paths(&a.graphs, &a.flat, cfg, model.config().variant.is_graph());
    let splits = a.splits.clone().or_else(|| cfg.paths.splits.clone());
    let data = scoped(
        load_dataset(g.as_deref(), f.as_deref(), cfg)?,
        splits.as_deref(),
        a.split,
        cfg,
    )?;
    let (report, scores) = evaluate(&model, &data, cfg.evaluation.batch_size)?;
    info!(
        "{} documents: F1-macro {:.4}, AUC {}",
        report.n_scored,
        report.f1_macro,
        report.auc.map_or("undefined".to_string(), |v| format!("{v:.4}"))
    );
    produce(&a.out, cfg, Stage::Report, |w| {
        serde_json::to_writer_pretty(&mut *w, &report)?;
        Ok(writeln!(w)?)
    })?;
    if let Some(path) = &a.scores {
        produce(path, cfg, Stage::Report, |w| Ok(write_scores(w, &scores)?))?;
    }
    Ok(())
}

fn graph_inputs(
    model: &Model,
    graphs: &Option<PathBuf>,
    splits: &Option<PathBuf>,
    split: SplitArg,
    cfg: &PipelineConfig,
) -> Result<Vec<FeaturedGraph>> {
    let path = required(graphs, &cfg.paths.graphs, "graphs", "graphs")?;
    let splits = splits.clone().or_else(|| cfg.paths.splits.clone());
    let data = scoped(load_dataset(Some(&path), None, cfg)?, splits.as_deref(), split, cfg)?;
    let Dataset::Graphs(graphs) = data else {
        unreachable!("graph file yields graphs")
    };
    if let Some(g) = graphs.first() {
        if g.dim() != model.config().input_dim {
            bail!(
                "graphs have width {} but the model expects {}",
                g.dim(),
                model.config().input_dim
            );
        }
    }
    Ok(graphs)
}

pub fn explain(a: &ExplainArgs, cfg: &PipelineConfig) -> Result<()> {
    let model_dir = required(&a.model, &cfg.paths.model, "model", "model")?;
    let model = load_model(&model_dir, cfg)?;
    let graphs = graph_inputs(&model, &a.graphs, &a.splits, a.split, cfg)?;
    let s = &cfg.explain;
    let attributions = field_gradients(&model, &graphs, s.batch_size)?;
    produce(&a.out, cfg, Stage::Explain, |w| {
        Ok(write_attributions(w, &attributions)?)
    })?;
    if let Some(path) = &a.ranking {
        let (ranking, n) = aggregate_attributions(&attributions, s.filter, s.limit)?;
        info!(
            "mean attribution over {n} documents ({} filter): top field {}",
            s.filter, ranking[0].field
        );
        produce(path, cfg, Stage::Explain, |w| Ok(write_ranking(w, &ranking)?))?;
    }
    Ok(())
}

pub fn export(a: &ExportArgs, cfg: &PipelineConfig) -> Result<()> {
    let model_dir = required(&a.model, &cfg.paths.model, "model", "model")?;
    let model = load_model(&model_dir, cfg)?;
    let graphs = graph_inputs(&model, &a.graphs, &a.splits, a.split, cfg)?;
    let rows = export_embeddings(&model, &graphs, cfg.explain.batch_size)?;
    produce(&a.out, cfg, Stage::Explain, |w| Ok(write_embeddings(w, &rows)?))
}
