use std::collections::HashMap;

use hiergnn::corpus::synth::{generate, SynthConfig};
use hiergnn::corpus::{ingest_protocol, parse_document, read_trees, write_trees, DocTree, Label};
use hiergnn::evaluation::roc_auc;
use hiergnn::fields::{Field, N_FIELDS};
use proptest::prelude::*;
use serde_json::Value;

const FIXTURE: &str = include_str!("fixtures/protocol.json");

type Triple = (String, usize, String);

/// Leaf triples and node count of a JSON value, walked breadth-first with
/// an explicit queue.
fn json_oracle(value: &Value) -> (usize, Vec<Triple>) {
    let mut queue: std::collections::VecDeque<(String, usize, &Value)> = std::collections::VecDeque::new();
    if let Value::Object(m) = value {
        for (k, v) in m {
            queue.push_back((k.clone(), 1, v));
        }
    }
    let (mut nodes, mut leaves) = (1, Vec::new());
    while let Some((name, depth, v)) = queue.pop_front() {
        nodes += 1;
        match v {
            Value::Object(m) if !m.is_empty() => {
                for (k, c) in m {
                    queue.push_back((k.clone(), depth + 1, c));
                }
            }
            Value::Array(a) if !a.is_empty() => {
                for c in a {
                    queue.push_back((name.clone(), depth + 1, c));
                }
            }
            Value::String(s) => leaves.push((name, depth, s.clone())),
            Value::Number(n) => leaves.push((name, depth, n.to_string())),
            Value::Bool(b) => leaves.push((name, depth, b.to_string())),
            _ => leaves.push((name, depth, String::new())),
        }
    }
    leaves.sort();
    (nodes, leaves)
}

fn tree_triples(t: &DocTree) -> Vec<Triple> {
    let depth = t.depths();
    let mut out: Vec<Triple> = t
        .leaves()
        .map(|n| (n.field_name.clone(), depth[n.index], n.text.clone().unwrap_or_default()))
        .collect();
    out.sort();
    out
}

#[test]
fn full_protocol_matches_an_independent_walk() {
    let raw: Value = serde_json::from_str(FIXTURE).unwrap();
    let tree = parse_document(FIXTURE.as_bytes(), "fixture").unwrap();
    let (n, leaves) = json_oracle(&raw);
    assert!(n > 100, "{n} nodes");
    assert_eq!(tree.len(), n);
    assert_eq!(tree_triples(&tree), leaves);
    assert!(tree.field_nodes().iter().all(Option::is_some));
    tree.validate().unwrap();
}

#[test]
fn ingested_protocol_drops_outcome_revealing_sections() {
    let mut raw: Value = serde_json::from_str(FIXTURE).unwrap();
    let study = raw.pointer_mut("/FullStudy/Study").unwrap().as_object_mut().unwrap();
    study.remove("DerivedSection");
    study.remove("ResultsSection");
    let protocol = study["ProtocolSection"].as_object_mut().unwrap();
    protocol.remove("StatusModule");
    let (n, leaves) = json_oracle(&raw);

    let tree = ingest_protocol(FIXTURE.as_bytes(), "fallback").unwrap().unwrap();
    assert_eq!(tree.doc_id, "NCT09990001");
    assert_eq!(tree.label, Some(Label::Terminated));
    assert_eq!(tree.len(), n);
    assert!(n > 100);
    assert_eq!(tree_triples(&tree), leaves);
    let fields = tree.field_nodes();
    assert_eq!(fields.iter().flatten().count(), N_FIELDS);
    let design = fields[Field::Design.slot()].unwrap();
    assert_eq!(tree.nodes[design].field_name, "DesignModule");
    assert!(tree.subtree_text(design).contains("Quadruple"));
    assert!(!tree
        .nodes
        .iter()
        .any(|n| n.text.as_deref() == Some("Slow enrollment during the pandemic")));
}

fn json_value() -> impl Strategy<Value = Value> {
    let key = prop::sample::select(vec!["a", "b", "Design", "list", "x"]);
    let leaf = prop_oneof![
        "[a-z ]{0,12}".prop_map(Value::String),
        any::<i32>().prop_map(Value::from),
        (-1e6f64..1e6).prop_map(Value::from),
        any::<bool>().prop_map(Value::Bool),
        Just(Value::Null),
    ];
    leaf.prop_recursive(4, 48, 5, move |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::vec((key.clone(), inner), 0..4)
                .prop_map(|kv| Value::Object(kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect())),
        ]
    })
}

proptest! {
    #[test]
    fn parse_and_serialise_preserve_leaf_triples(
        entries in prop::collection::vec(("[a-z]{1,6}", json_value()), 1..5)
    ) {
        let root = Value::Object(entries.into_iter().collect());
        let raw = serde_json::to_vec(&root).unwrap();
        let tree = parse_document(&raw, "p").unwrap();
        let (n, leaves) = json_oracle(&root);
        prop_assert_eq!(tree.len(), n);
        prop_assert_eq!(tree_triples(&tree), leaves.clone());

        let mut buf = Vec::new();
        write_trees(&mut buf, std::slice::from_ref(&tree)).unwrap();
        let back = read_trees(buf.as_slice()).unwrap();
        prop_assert_eq!(back.len(), 1);
        prop_assert_eq!(tree_triples(&back[0]), leaves);
        prop_assert_eq!(&back[0], &tree);
    }
}

/// Held-out AUC of a logistic regression on whitespace-split word counts
/// keyed by the enclosing module, trained by plain gradient descent.
fn bow_logistic_auc(trees: &[DocTree]) -> f64 {
    let mut index: HashMap<String, usize> = HashMap::new();
    let docs: Vec<Vec<(usize, f64)>> = trees
        .iter()
        .map(|t| {
            let mut module = vec![""; t.len()];
            for (field, node) in Field::ALL.into_iter().zip(t.field_nodes()) {
                for leaf in node.map(|u| t.subtree_leaves(u)).unwrap_or_default() {
                    module[leaf] = field.name();
                }
            }
            let mut counts: HashMap<usize, f64> = HashMap::new();
            for leaf in t.leaves() {
                for w in leaf.text.as_deref().unwrap_or("").split_whitespace() {
                    let n = index.len();
                    let key = format!("{}/{}", module[leaf.index], w.to_lowercase());
                    *counts.entry(*index.entry(key).or_insert(n)).or_default() += 1.0;
                }
            }
            let norm = counts.values().map(|c| c * c).sum::<f64>().sqrt().max(1.0);
            let mut v: Vec<(usize, f64)> = counts.into_iter().map(|(i, c)| (i, c / norm)).collect();
            v.sort_unstable_by_key(|e| e.0);
            v
        })
        .collect();
    let y: Vec<f64> = trees.iter().map(|t| t.label.unwrap().as_f64()).collect();
    let cut = docs.len() * 7 / 10;
    let mut w = vec![0.0; index.len()];
    let mut b = 0.0;
    for _ in 0..300 {
        let mut gw = vec![0.0; w.len()];
        let mut gb = 0.0;
        for (x, &t) in docs[..cut].iter().zip(&y) {
            let z: f64 = x.iter().map(|&(i, v)| w[i] * v).sum::<f64>() + b;
            let err = 1.0 / (1.0 + (-z).exp()) - t;
            for &(i, v) in x {
                gw[i] += err * v;
            }
            gb += err;
        }
        for (wi, g) in w.iter_mut().zip(&gw) {
            *wi -= 2.0 * g / cut as f64;
        }
        b -= 2.0 * gb / cut as f64;
    }
    let scores: Vec<f64> = docs[cut..]
        .iter()
        .map(|x| x.iter().map(|&(i, v)| w[i] * v).sum::<f64>() + b)
        .collect();
    let labels: Vec<bool> = y[cut..].iter().map(|&t| t == 1.0).collect();
    roc_auc(&labels, &scores).unwrap()
}

#[test]
fn planted_signal_is_linearly_separable() {
    let strong = generate(&SynthConfig::new(1000, Field::Design, 1.0, 17)).unwrap();
    let auc = bow_logistic_auc(&strong);
    assert!(auc > 0.99, "strength 1.0: {auc}");
}

#[test]
fn zero_strength_gives_chance_auc() {
    let none = generate(&SynthConfig::new(1000, Field::Design, 0.0, 17)).unwrap();
    let auc = bow_logistic_auc(&none);
    assert!((0.4..0.6).contains(&auc), "strength 0.0: {auc}");
}
