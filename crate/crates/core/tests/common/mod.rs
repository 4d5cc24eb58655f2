//! Helpers shared by the integration tests: random trees and naive oracles.
#![allow(dead_code)]

use hiergnn::corpus::{make_splits, DocTree, Label, Split};
use hiergnn::fields::N_FIELDS;
use hiergnn::graph::{build_flat_doc, build_graph_from_paths, FeaturedGraph, FlatDoc, Propagation};
use hiergnn::model::{Model, ModelConfig, Variant};
use hiergnn::nn::Matrix;
use hiergnn::vectorize::{build_vocabulary, default_nonzeros, make_projector, Embeddings, Featurizer, TfidfVariant};
use rand::seq::SliceRandom;
use rand::Rng;

/// Random rooted tree on `n` nodes (node 0 is the root, each node's parent
/// has a smaller index), features on leaves only, and a random subset of
/// nodes other than the root assigned to the selective slots.
pub fn random_graph<R: Rng>(rng: &mut R, n: usize, d: usize) -> FeaturedGraph {
    let parents: Vec<usize> = (1..n).map(|i| rng.random_range(0..i)).collect();
    let mut is_parent = vec![false; n];
    for &p in &parents {
        is_parent[p] = true;
    }
    let mut features = Matrix::zeros(n, d);
    for u in 0..n {
        if !is_parent[u] {
            for c in 0..d {
                features.set(u, c, rng.random_range(-1.0..1.0));
            }
        }
    }
    let mut candidates: Vec<usize> = (1..n).collect();
    candidates.shuffle(rng);
    let mut selective = [None; N_FIELDS];
    for (slot, s) in selective.iter_mut().enumerate() {
        if slot < candidates.len() && rng.random_bool(0.8) {
            *s = Some(candidates[slot]);
        }
    }
    FeaturedGraph {
        doc_id: format!("g{}", rng.random::<u32>()),
        features,
        edges: parents.iter().enumerate().map(|(i, &p)| (i + 1, p)).collect(),
        selective,
        label: Some(if rng.random_bool(0.3) {
            Label::Terminated
        } else {
            Label::Completed
        }),
    }
}

/// Applies a node permutation: new index of old node `u` is `perm[u]`.
pub fn relabel(g: &FeaturedGraph, perm: &[usize]) -> FeaturedGraph {
    let n = g.n_nodes();
    let mut features = Matrix::zeros(n, g.dim());
    for u in 0..n {
        features.row_mut(perm[u]).copy_from_slice(g.features.row(u));
    }
    FeaturedGraph {
        doc_id: g.doc_id.clone(),
        features,
        edges: g.edges.iter().map(|&(c, p)| (perm[c], perm[p])).collect(),
        selective: g.selective.map(|s| s.map(|u| perm[u])),
        label: g.label,
    }
}

pub fn dense(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// `relu(D̂⁻¹ (A + I) X Wᵀ + b)` and its symmetric variant, evaluated with
/// plain loops over an explicit adjacency matrix.
pub fn dense_gcn(g: &FeaturedGraph, layers: &[(Vec<Vec<f64>>, Vec<f64>)], kind: Propagation) -> Vec<Vec<f64>> {
    let n = g.n_nodes();
    let mut a = vec![vec![0.0; n]; n];
    for (u, row) in a.iter_mut().enumerate() {
        row[u] = 1.0;
    }
    for &(c, p) in &g.edges {
        a[p][c] = 1.0;
        if kind != Propagation::ChildrenMean {
            a[c][p] = 1.0;
        }
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let mut x = dense(&g.features);
    for (w, b) in layers {
        let d = x[0].len();
        let mut h = vec![vec![0.0; d]; n];
        for u in 0..n {
            for v in 0..n {
                if a[u][v] == 0.0 {
                    continue;
                }
                let coef = match kind {
                    Propagation::Symmetric => a[u][v] / (deg[u] * deg[v]).sqrt(),
                    _ => a[u][v] / deg[u],
                };
                for c in 0..d {
                    h[u][c] += coef * x[v][c];
                }
            }
        }
        x = h
            .iter()
            .map(|hu| {
                w.iter()
                    .zip(b)
                    .map(|(wr, bo)| (wr.iter().zip(hu).map(|(p, q)| p * q).sum::<f64>() + bo).max(0.0))
                    .collect()
            })
            .collect();
    }
    x
}

/// GCN weights of a model as nested vectors.
pub fn gcn_weights(model: &Model) -> Vec<(Vec<Vec<f64>>, Vec<f64>)> {
    model
        .gcn_layers()
        .iter()
        .map(|l| {
            (
                dense(model.store().get(l.weight)),
                model.store().get(l.bias).as_slice().to_vec(),
            )
        })
        .collect()
}

/// A small selective model for exhaustive checks.
pub fn small_config(variant: Variant, d: usize) -> ModelConfig {
    ModelConfig {
        hidden_dim: 6,
        selective_out_dim: 3,
        mlp_hidden: vec![5, 4],
        low_rank: 2,
        flat9_head_hidden: 4,
        flat9_head_out: 3,
        dropout: 0.0,
        ..ModelConfig::new(variant, d)
    }
}

pub fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

/// A synthetic corpus carried through vocabulary, projection and graph
/// construction, with graph and flat views of each split.
pub struct Prepared {
    pub train: Vec<FeaturedGraph>,
    pub val: Vec<FeaturedGraph>,
    pub test: Vec<FeaturedGraph>,
    pub flat_train: Vec<FlatDoc>,
    pub flat_val: Vec<FlatDoc>,
    pub flat_test: Vec<FlatDoc>,
}

pub fn prepare(trees: &[DocTree], d: usize, vocab_max: usize, k: usize, seed: u64) -> Prepared {
    prepare_with(trees, d, vocab_max, k, seed, TfidfVariant::LengthScaled)
}

pub fn prepare_with(
    trees: &[DocTree],
    d: usize,
    vocab_max: usize,
    k: usize,
    seed: u64,
    variant: TfidfVariant,
) -> Prepared {
    prepare_full(trees, d, vocab_max, &|_| k, seed, variant, true)
}

/// Row sparsity from the default coverage rule.
pub fn prepare_covered(trees: &[DocTree], d: usize, vocab_max: usize, seed: u64) -> Prepared {
    prepare_full(
        trees,
        d,
        vocab_max,
        &|v| default_nonzeros(v, d),
        seed,
        TfidfVariant::LengthScaled,
        true,
    )
}

pub fn prepare_full(
    trees: &[DocTree],
    d: usize,
    vocab_max: usize,
    k: &dyn Fn(usize) -> usize,
    seed: u64,
    variant: TfidfVariant,
    unit_norm: bool,
) -> Prepared {
    let ids: Vec<String> = trees.iter().map(|t| t.doc_id.clone()).collect();
    let splits = make_splits(&ids, seed).unwrap();
    let train_trees: Vec<DocTree> = trees
        .iter()
        .zip(&splits)
        .filter(|(_, s)| s.split == Split::Train)
        .map(|(t, _)| t.clone())
        .collect();
    let vocab = build_vocabulary(&train_trees, vocab_max).unwrap();
    let k = k(vocab.len()).min(vocab.len());
    let projector = make_projector(d, vocab.len(), k, seed).unwrap();
    let featurizer = Featurizer::new(&vocab, &projector, variant)
        .unwrap()
        .unit_norm(unit_norm);
    let emb = Embeddings::from_records(featurizer.featurize_all(trees).unwrap()).unwrap();
    let mut p = Prepared {
        train: vec![],
        val: vec![],
        test: vec![],
        flat_train: vec![],
        flat_val: vec![],
        flat_test: vec![],
    };
    for (t, s) in trees.iter().zip(&splits) {
        let g = build_graph_from_paths(t, emb.doc(&t.doc_id), d).unwrap();
        let f = build_flat_doc(t, emb.doc(&t.doc_id), d).unwrap();
        let (gs, fs) = match s.split {
            Split::Train => (&mut p.train, &mut p.flat_train),
            Split::Validation => (&mut p.val, &mut p.flat_val),
            Split::Test => (&mut p.test, &mut p.flat_test),
        };
        gs.push(g);
        fs.push(f);
    }
    p
}
