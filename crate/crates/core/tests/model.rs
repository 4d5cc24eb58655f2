mod common;

use std::sync::Arc;

use common::*;
use hiergnn::corpus::Label;
use hiergnn::fields::N_FIELDS;
use hiergnn::graph::{batch_graphs, FeaturedGraph, FlatDoc, Propagation, N_CHANNELS};
use hiergnn::model::{Batch, Dataset, Model, ModelConfig, Pooling, Variant};
use hiergnn::nn::{Bound, Context, Matrix, Tape};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn graph(features: Vec<Vec<f64>>, edges: Vec<(usize, usize)>, selective: [Option<usize>; N_FIELDS]) -> FeaturedGraph {
    FeaturedGraph {
        doc_id: "g".into(),
        features: Matrix::from_rows(&features),
        edges,
        selective,
        label: Some(Label::Completed),
    }
}

fn nodes_of(model: &Model, g: &FeaturedGraph) -> Vec<Vec<f64>> {
    let batch = Batch::Graphs(batch_graphs(&[g]).unwrap());
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, model.store());
    let out = model.forward(&mut tape, &bound, &batch, &mut Context::eval()).unwrap();
    dense(tape.value(out.nodes.unwrap()))
}

fn one_layer(d: usize) -> Model {
    let cfg = ModelConfig {
        n_gcn_layers: 1,
        ..small_config(Variant::GcnGlobal, d)
    };
    Model::new(cfg, 3).unwrap()
}

#[test]
fn single_node_is_one_affine_relu() {
    let m = one_layer(2);
    let g = graph(vec![vec![0.5, -1.5]], vec![], [None; N_FIELDS]);
    let (w, b) = &gcn_weights(&m)[0];
    let got = nodes_of(&m, &g);
    for (o, (wr, bo)) in got[0].iter().zip(w.iter().zip(b)) {
        let want = (wr[0] * 0.5 + wr[1] * -1.5 + bo).max(0.0);
        assert!((o - want).abs() < 1e-15);
    }
}

#[test]
fn parent_of_two_leaves_averages_with_its_zero_self() {
    let m = one_layer(2);
    let (f1, f2) = ([1.0, 2.0], [-3.0, 0.5]);
    let g = graph(
        vec![vec![0.0, 0.0], f1.to_vec(), f2.to_vec()],
        vec![(2, 0), (1, 0)],
        [None; N_FIELDS],
    );
    let (w, b) = &gcn_weights(&m)[0];
    let h = [(f1[0] + f2[0]) / 3.0, (f1[1] + f2[1]) / 3.0];
    let got = nodes_of(&m, &g);
    for (o, (wr, bo)) in got[0].iter().zip(w.iter().zip(b)) {
        let want = (wr[0] * h[0] + wr[1] * h[1] + bo).max(0.0);
        assert!((o - want).abs() < 1e-14);
    }
}

#[test]
fn dense_oracle_on_small_trees_for_every_propagation() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for kind in [
        Propagation::ChildrenMean,
        Propagation::UndirectedMean,
        Propagation::Symmetric,
    ] {
        let cfg = ModelConfig {
            propagation: kind,
            ..small_config(Variant::GcnSelective9, 4)
        };
        let m = Model::new(cfg, 8).unwrap();
        for n in [1, 2, 5, 9] {
            let g = random_graph(&mut rng, n, 4);
            let err = max_abs_diff(&nodes_of(&m, &g), &dense_gcn(&g, &gcn_weights(&m), kind));
            assert!(err < 1e-10, "{kind:?} n={n}: {err}");
        }
    }
}

#[test]
fn deep_leaves_do_not_reach_the_root_within_three_layers() {
    // Path of six nodes: root 0, deepest leaf 5 at depth 5.
    let m = Model::new(small_config(Variant::GcnGlobal, 3), 1).unwrap();
    let mut feats = vec![vec![0.0; 3]; 6];
    let edges = (1..6).rev().map(|i| (i, i - 1)).collect::<Vec<_>>();
    let zero = nodes_of(&m, &graph(feats.clone(), edges.clone(), [None; N_FIELDS]));
    feats[5] = vec![10.0, -4.0, 3.0];
    let lit = nodes_of(&m, &graph(feats.clone(), edges.clone(), [None; N_FIELDS]));
    assert_eq!(lit[0], zero[0]);
    assert_eq!(lit[1], zero[1]);
    assert_ne!(lit[2], zero[2]);
    // A leaf at depth 3 does reach the root.
    let mut shallow = vec![vec![0.0; 3]; 4];
    shallow[3] = vec![10.0, -4.0, 3.0];
    let e4 = (1..4).rev().map(|i| (i, i - 1)).collect::<Vec<_>>();
    let base = nodes_of(&m, &graph(vec![vec![0.0; 3]; 4], e4.clone(), [None; N_FIELDS]));
    assert_ne!(nodes_of(&m, &graph(shallow, e4, [None; N_FIELDS]))[0], base[0]);
}

fn pooled_parts(m: &Model, graphs: &[FeaturedGraph]) -> (Matrix, Matrix, Matrix, Matrix) {
    let batch = Batch::Graphs(batch_graphs(graphs).unwrap());
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, m.store());
    let out = m.forward(&mut tape, &bound, &batch, &mut Context::eval()).unwrap();
    (
        tape.value(out.global.unwrap()).clone(),
        tape.value(out.selective.unwrap()).clone(),
        tape.value(out.pooled).clone(),
        tape.value(out.logits).clone(),
    )
}

#[test]
fn global_pool_is_the_node_mean() {
    let mut tape = Tape::new();
    let x = tape.leaf(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]));
    let y = tape.segment_mean(x, Arc::new(vec![0, 0, 0]), 1).unwrap();
    assert_eq!(tape.value(y).as_slice(), [3.0, 4.0]);
    let v = tape.leaf(Matrix::from_rows(&[vec![0.1, 0.7], vec![0.1, 0.7], vec![0.1, 0.7]]));
    let w = tape.segment_mean(v, Arc::new(vec![0, 0, 0]), 1).unwrap();
    for (got, want) in tape.value(w).as_slice().iter().zip([0.1, 0.7]) {
        assert!((got - want).abs() <= 2.0 * f64::EPSILON * want);
    }
}

#[test]
fn global_pool_is_exactly_invariant_to_row_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        let rows: Vec<Vec<f64>> = (0..13)
            .map(|_| (0..4).map(|_| rand::Rng::random_range(&mut rng, -1e3..1e3)).collect())
            .collect();
        let segments: Vec<usize> = (0..13).map(|i| usize::from(i >= 6)).collect();
        let mut order: Vec<usize> = (0..13).collect();
        order.shuffle(&mut rng);
        let mut tape = Tape::new();
        let a = tape.leaf(Matrix::from_rows(&rows));
        let pa = tape.segment_mean(a, Arc::new(segments.clone()), 2).unwrap();
        let b = tape.leaf(Matrix::from_rows(
            &order.iter().map(|&i| rows[i].clone()).collect::<Vec<_>>(),
        ));
        let seg_b: Vec<usize> = order.iter().map(|&i| segments[i]).collect();
        let pb = tape.segment_mean(b, Arc::new(seg_b), 2).unwrap();
        assert_eq!(tape.value(pa), tape.value(pb));
    }
}

#[test]
fn relabeling_nodes_leaves_every_output_unchanged() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let m = Model::new(small_config(Variant::GcnSelective9, 5), 2).unwrap();
    for _ in 0..20 {
        let g = random_graph(&mut rng, 11, 5);
        let mut perm: Vec<usize> = (0..11).collect();
        perm.shuffle(&mut rng);
        let h = relabel(&g, &perm);
        let (ga, sa, pa, la) = pooled_parts(&m, &[g]);
        let (gb, sb, pb, lb) = pooled_parts(&m, &[h]);
        assert!(ga.max_abs_diff(&gb) < 1e-12);
        assert!(sa.max_abs_diff(&sb) < 1e-12);
        assert!(pa.max_abs_diff(&pb) < 1e-12);
        assert!(la.max_abs_diff(&lb) < 1e-6);
    }
}

#[test]
fn selective_block_layout_and_absent_slots() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cfg = ModelConfig {
        selective_out_dim: 2,
        ..small_config(Variant::GcnSelective9, 3)
    };
    let m = Model::new(cfg, 6).unwrap();
    let mut g = random_graph(&mut rng, 12, 3);
    g.selective = std::array::from_fn(|k| Some(k + 1));
    g.selective[3] = None;
    let nodes = nodes_of(&m, &g);
    let (global, sel, pooled, _) = pooled_parts(&m, &[g.clone()]);
    assert_eq!(sel.cols(), 18);
    for slot in 0..N_FIELDS {
        let part = &sel.row(0)[2 * slot..2 * slot + 2];
        match g.selective[slot] {
            Some(u) => assert_eq!(part, nodes[u].as_slice()),
            None => assert_eq!(part, [0.0, 0.0]),
        }
    }
    let manual: Vec<f64> = global.row(0).iter().chain(sel.row(0)).copied().collect();
    assert_eq!(pooled.row(0), manual.as_slice());
    assert_eq!(pooled.cols(), 20);
}

#[test]
fn all_slots_absent_reduces_to_padded_global() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let m = Model::new(small_config(Variant::GcnSelective9, 3), 6).unwrap();
    let mut g = random_graph(&mut rng, 7, 3);
    g.selective = [None; N_FIELDS];
    let (global, _, pooled, _) = pooled_parts(&m, &[g]);
    let c = global.cols();
    assert_eq!(&pooled.row(0)[..c], global.row(0));
    assert!(pooled.row(0)[c..].iter().all(|&v| v == 0.0));
}

#[test]
fn swapping_node_ids_between_fields_swaps_their_blocks() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let m = Model::new(small_config(Variant::GcnSelective9, 3), 6).unwrap();
    let mut g = random_graph(&mut rng, 12, 3);
    g.selective = std::array::from_fn(|k| Some(k + 1));
    let (_, a, _, _) = pooled_parts(&m, &[g.clone()]);
    g.selective.swap(0, 4);
    let (_, b, _, _) = pooled_parts(&m, &[g]);
    let c = 3;
    assert_eq!(&a.row(0)[..c], &b.row(0)[4 * c..5 * c]);
    assert_eq!(&a.row(0)[4 * c..5 * c], &b.row(0)[..c]);
    assert_eq!(&a.row(0)[c..4 * c], &b.row(0)[c..4 * c]);
}

#[test]
fn pure_selective_pooling_drops_the_global_block() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cfg = ModelConfig {
        pooling: Pooling::Selective,
        ..small_config(Variant::GcnSelective9, 3)
    };
    let m = Model::new(cfg, 6).unwrap();
    let g = random_graph(&mut rng, 8, 3);
    let (_, sel, pooled, _) = pooled_parts(&m, &[g]);
    assert_eq!(sel, pooled);
}

#[test]
fn batched_forward_equals_member_forwards() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for variant in [Variant::GcnGlobal, Variant::GcnSelective9] {
        let m = Model::new(small_config(variant, 4), 1).unwrap();
        let graphs: Vec<FeaturedGraph> = (0..6).map(|i| random_graph(&mut rng, 2 + i * 2, 4)).collect();
        let data = Dataset::Graphs(graphs.clone());
        let all = m.logits(&data.batch(&[0, 1, 2, 3, 4, 5]).unwrap()).unwrap();
        for (i, g) in graphs.iter().enumerate() {
            let one = m.logits(&Batch::Graphs(batch_graphs(&[g]).unwrap())).unwrap();
            assert!((one[0] - all[i]).abs() < 1e-10);
        }
    }
}

#[test]
fn zero_mlp_outputs_the_final_bias() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut m = Model::new(small_config(Variant::GcnSelective9, 3), 1).unwrap();
    let out_w = m.mlp().output.weight;
    let out_b = m.mlp().output.bias;
    m.store_mut().get_mut(out_w).as_mut_slice().fill(0.0);
    m.store_mut().get_mut(out_b).as_mut_slice()[0] = 0.375;
    let g = random_graph(&mut rng, 6, 3);
    let batch = Batch::Graphs(batch_graphs(&[g]).unwrap());
    assert_eq!(m.logits(&batch).unwrap(), [0.375]);
    assert_eq!(m.logits(&batch).unwrap(), m.logits(&batch).unwrap());
}

fn flat_doc(channels: Matrix) -> FlatDoc {
    FlatDoc {
        doc_id: "f".into(),
        channels,
        label: Some(Label::Terminated),
    }
}

#[test]
fn flat9_shares_its_head_across_channels() {
    let m = Model::new(small_config(Variant::Flat9, 5), 4).unwrap();
    let mut ch = Matrix::zeros(N_CHANNELS, 5);
    for r in 0..N_CHANNELS {
        ch.row_mut(r).copy_from_slice(&[0.3, -0.2, 1.0, 0.0, 0.5]);
    }
    let data = Dataset::Flat(vec![flat_doc(ch)]);
    let batch = data.batch(&[0]).unwrap();
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, m.store());
    let out = m.forward(&mut tape, &bound, &batch, &mut Context::eval()).unwrap();
    let pooled = tape.value(out.pooled);
    assert_eq!(pooled.cols(), 9 * 3);
    let first = &pooled.row(0)[..3];
    for k in 1..N_FIELDS {
        assert_eq!(&pooled.row(0)[3 * k..3 * k + 3], first);
    }
}

#[test]
fn flat1_is_the_mlp_on_the_whole_document_vector() {
    let m = Model::new(small_config(Variant::Flat1, 5), 4).unwrap();
    let mut ch = Matrix::zeros(N_CHANNELS, 5);
    ch.row_mut(0).copy_from_slice(&[1.0, 2.0, 3.0, 4.0, 5.0]);
    let data = Dataset::Flat(vec![flat_doc(ch.clone())]);
    let logit = m.logits(&data.batch(&[0]).unwrap()).unwrap();
    let mut tape = Tape::new();
    let bound = Bound::bind(&mut tape, m.store());
    let x = tape.leaf(Matrix::from_vec(1, 5, ch.row(0).to_vec()));
    let (z, _) = m.classify(&mut tape, &bound, x, &mut Context::eval()).unwrap();
    assert_eq!(tape.value(z).as_slice(), logit.as_slice());
}

#[test]
fn variants_reject_the_wrong_input_kind_and_width() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let gcn = Model::new(small_config(Variant::GcnGlobal, 3), 1).unwrap();
    let flat = Model::new(small_config(Variant::Flat9, 3), 1).unwrap();
    let graphs = Dataset::Graphs(vec![random_graph(&mut rng, 4, 3)]);
    let flats = Dataset::Flat(vec![flat_doc(Matrix::zeros(N_CHANNELS, 3))]);
    let wide = Dataset::Flat(vec![flat_doc(Matrix::zeros(N_CHANNELS, 4))]);
    assert!(gcn.logits(&flats.batch(&[0]).unwrap()).is_err());
    assert!(flat.logits(&graphs.batch(&[0]).unwrap()).is_err());
    assert!(flat.logits(&wide.batch(&[0]).unwrap()).is_err());
    assert!(gcn
        .logits(&Dataset::Graphs(vec![random_graph(&mut rng, 4, 5)]).batch(&[0]).unwrap())
        .is_err());
}

#[test]
fn checkpoint_round_trip_is_bit_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dir = tempfile::tempdir().unwrap();
    for variant in Variant::ALL {
        let m = Model::new(small_config(variant, 4), 21).unwrap();
        let sub = dir.path().join(variant.name());
        m.save(&sub).unwrap();
        let back = Model::load(&sub).unwrap();
        assert_eq!(back, m);
        let data = if variant.is_graph() {
            Dataset::Graphs(vec![random_graph(&mut rng, 6, 4)])
        } else {
            Dataset::Flat(vec![flat_doc(Matrix::filled(N_CHANNELS, 4, 0.25))])
        };
        let b = data.batch(&[0]).unwrap();
        assert_eq!(m.logits(&b).unwrap(), back.logits(&b).unwrap());
    }
    assert!(Model::load(&dir.path().join("missing")).is_err());
}
