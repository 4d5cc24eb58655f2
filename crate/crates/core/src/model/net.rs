use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ModelConfig, Pooling, Variant};
use super::data::Batch;
use super::ModelError;
use crate::fields::N_FIELDS;
use crate::nn::checkpoint::{read_tensors, write_tensors};
use crate::nn::{Bound, Context, Linear, LowRankLinear, Mlp, ParamStore, Tape, Var};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CONFIG_FILE: &str = "model.json";

#[derive(Debug, Clone, PartialEq)]
enum Arch {
    Flat1,
    Flat9 { head_in: LowRankLinear, head_out: Linear },
    Gcn { layers: Vec<Linear> },
}

/// Parameters plus the structure that reads them.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    config: ModelConfig,
    store: ParamStore,
    arch: Arch,
    mlp: Mlp,
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `B × 1`.
    pub logits: Var,
    /// Node representations after the last GCN layer.
    pub nodes: Option<Var>,
    /// Mean of the node representations per graph.
    pub global: Option<Var>,
    /// `(B·9) × c` field representations, row `g·9 + slot`; zero rows for absent fields.
    pub selective_rows: Option<Var>,
    /// `B × 9c` concatenation of the field representations.
    pub selective: Option<Var>,
    /// Input of the classification MLP.
    pub pooled: Var,
    /// Activations of every hidden MLP block.
    pub hidden: Vec<Var>,
}

impl Model {
    /// Initialises parameters from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let arch = match config.variant {
            Variant::Flat1 => Arch::Flat1,
            Variant::Flat9 => Arch::Flat9 {
                head_in: LowRankLinear::new(
                    &mut store,
                    "head.0",
                    config.input_dim,
                    config.flat9_head_hidden,
                    config.low_rank,
                    &mut rng,
                )?,
                head_out: Linear::new(
                    &mut store,
                    "head.1",
                    config.flat9_head_hidden,
                    config.flat9_head_out,
                    &mut rng,
                ),
            },
            Variant::GcnGlobal | Variant::GcnSelective9 => {
                let mut prev = config.input_dim;
                let mut layers = Vec::new();
                for (l, out) in config.gcn_dims().into_iter().enumerate() {
                    layers.push(Linear::new(&mut store, &format!("gcn.{l}"), prev, out, &mut rng));
                    prev = out;
                }
                Arch::Gcn { layers }
            }
        };
        let low_rank = (config.variant == Variant::Flat1).then_some(config.low_rank);
        let mut mlp = Mlp::new(
            &mut store,
            "mlp",
            config.pooled_width(),
            &config.mlp_hidden,
            1,
            config.dropout,
            low_rank,
            &mut rng,
        )?;
        for b in &mut mlp.blocks {
            b.norm.momentum = config.bn_momentum;
            b.norm.eps = config.bn_eps;
        }
        Ok(Self {
            config,
            store,
            arch,
            mlp,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn mlp(&self) -> &Mlp {
        &self.mlp
    }

    /// GCN layers in order; empty for the flat baselines.
    pub fn gcn_layers(&self) -> &[Linear] {
        match &self.arch {
            Arch::Gcn { layers } => layers,
            _ => &[],
        }
    }

    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        batch: &Batch,
        ctx: &mut Context,
    ) -> Result<Forward, ModelError> {
        let d = self.config.input_dim;
        match (&self.arch, batch) {
            (Arch::Gcn { layers }, Batch::Graphs(b)) => {
                if b.features.cols() != d {
                    return Err(ModelError::Input(format!(
                        "feature width {} but model expects {d}",
                        b.features.cols()
                    )));
                }
                let op = Arc::new(b.propagation(self.config.propagation));
                let mut x = tape.leaf(b.features.clone());
                for layer in layers {
                    let h = tape.propagate(x, op.clone())?;
                    let z = layer.forward(tape, bound, h)?;
                    x = tape.relu(z);
                }
                let n_graphs = b.n_graphs();
                let global = tape.segment_mean(x, Arc::new(b.graph_id.clone()), n_graphs)?;
                let (rows, selective, pooled) = if self.config.variant == Variant::GcnSelective9 {
                    let rows = tape.gather_rows(x, Arc::new(b.selective_index()))?;
                    let width = N_FIELDS * tape.value(x).cols();
                    let sel = tape.reshape(rows, n_graphs, width)?;
                    let pooled = match self.config.pooling {
                        Pooling::Mixed => tape.concat_cols(&[global, sel])?,
                        Pooling::Selective => sel,
                    };
                    (Some(rows), Some(sel), pooled)
                } else {
                    (None, None, global)
                };
                let (logits, hidden) = self.classify(tape, bound, pooled, ctx)?;
                Ok(Forward {
                    logits,
                    nodes: Some(x),
                    global: Some(global),
                    selective_rows: rows,
                    selective,
                    pooled,
                    hidden,
                })
            }
            (Arch::Flat1, Batch::Flat(b)) => {
                if b.whole.cols() != d {
                    return Err(ModelError::Input(format!(
                        "feature width {} but model expects {d}",
                        b.whole.cols()
                    )));
                }
                let x = tape.leaf(b.whole.clone());
                let (logits, hidden) = self.classify(tape, bound, x, ctx)?;
                Ok(Self::flat_forward(logits, x, hidden))
            }
            (Arch::Flat9 { head_in, head_out }, Batch::Flat(b)) => {
                if b.fields.cols() != d || b.fields.rows() != N_FIELDS * b.labels.len() {
                    return Err(ModelError::Input(format!(
                        "expected {} channels of width {d}, got a {}x{} block",
                        N_FIELDS * b.labels.len(),
                        b.fields.rows(),
                        b.fields.cols()
                    )));
                }
                let x = tape.leaf(b.fields.clone());
                let h = head_in.forward(tape, bound, x)?;
                let h = tape.relu(h);
                let h = head_out.forward(tape, bound, h)?;
                let h = tape.relu(h);
                let pooled = tape.reshape(h, b.labels.len(), N_FIELDS * self.config.flat9_head_out)?;
                let (logits, hidden) = self.classify(tape, bound, pooled, ctx)?;
                Ok(Self::flat_forward(logits, pooled, hidden))
            }
            _ => Err(ModelError::Input(format!(
                "{} cannot read {} input",
                self.config.variant,
                if matches!(batch, Batch::Graphs(_)) {
                    "graph"
                } else {
                    "flat"
                }
            ))),
        }
    }

    fn flat_forward(logits: Var, pooled: Var, hidden: Vec<Var>) -> Forward {
        Forward {
            logits,
            nodes: None,
            global: None,
            selective_rows: None,
            selective: None,
            pooled,
            hidden,
        }
    }

    /// The MLP head: pooled vectors to one logit per row.
    pub fn classify(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        pooled: Var,
        ctx: &mut Context,
    ) -> Result<(Var, Vec<Var>), ModelError> {
        let width = tape.value(pooled).cols();
        if width != self.config.pooled_width() {
            return Err(ModelError::Input(format!(
                "pooled width {width} but the MLP expects {}",
                self.config.pooled_width()
            )));
        }
        Ok(self.mlp.forward(tape, bound, &self.store, pooled, ctx)?)
    }

    /// Evaluation-mode logits.
    pub fn logits(&self, batch: &Batch) -> Result<Vec<f64>, ModelError> {
        let mut tape = Tape::new();
        let bound = Bound::bind(&mut tape, &self.store);
        let out = self.forward(&mut tape, &bound, batch, &mut Context::eval())?;
        Ok(tape.value(out.logits).as_slice().to_vec())
    }

    /// Writes the checkpoint and the config JSON into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), ModelError> {
        let io = |path: &Path| {
            let path = path.to_path_buf();
            move |e| ModelError::File { path, source: e }
        };
        fs::create_dir_all(dir).map_err(io(dir))?;
        let ckpt = dir.join(CHECKPOINT_FILE);
        let f = File::create(&ckpt).map_err(io(&ckpt))?;
        write_tensors(BufWriter::new(f), &self.store.to_tensors()).map_err(io(&ckpt))?;
        let cfg = dir.join(CONFIG_FILE);
        let mut text = serde_json::to_string_pretty(&self.config)?;
        text.push('\n');
        fs::write(&cfg, text).map_err(io(&cfg))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, ModelError> {
        let cfg = dir.join(CONFIG_FILE);
        let text = fs::read_to_string(&cfg).map_err(|e| ModelError::File {
            path: cfg.clone(),
            source: e,
        })?;
        let config: ModelConfig = serde_json::from_str(&text)?;
        let mut model = Model::new(config, 0)?;
        let ckpt = dir.join(CHECKPOINT_FILE);
        let f = File::open(&ckpt).map_err(|e| ModelError::File {
            path: ckpt.clone(),
            source: e,
        })?;
        let tensors = read_tensors(BufReader::new(f))?;
        model.store.load_tensors(&tensors)?;
        Ok(model)
    }
}
