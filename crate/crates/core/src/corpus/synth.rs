//! Registry-shaped synthetic protocols with a planted class signal.
//!
//! Every protocol has the nine canonical modules filled with Zipf-distributed
//! filler words. A small signal lexicon is used two ways:
//!
//! * in class-1 documents, each leaf below the signal module receives one
//!   signal word with probability `signal_strength`;
//! * in a `distractor_rate` fraction of all documents, 1–10 signal words are
//!   scattered over leaves of the *other* modules, independent of the class.
//!
//! The signal is therefore only informative when read per module, which is
//! what separates structure-aware models from flattened bags of words.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use super::ctgov::ingest_value;
use super::tree::{DocTree, Label};
use super::CorpusError;
use crate::fields::Field;

pub const SIGNAL_WORDS: &[&str] = &["accrual", "halted", "insufficient", "futility", "funding", "slow"];

const SYLLABLES: &[&str] = &[
    "ba", "ce", "di", "fo", "gu", "ha", "je", "ki", "lo", "mu", "na", "pe", "qui", "ro", "su", "ta", "ve", "wi", "xo",
    "zu", "bre", "cla", "dro", "fle", "gri", "pla", "sti", "tro",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_docs: usize,
    pub signal_field: Field,
    pub signal_strength: f64,
    pub seed: u64,
    /// Fraction of class-1 documents.
    pub positive_prior: f64,
    /// Fraction of documents carrying class-independent signal words elsewhere.
    pub distractor_rate: f64,
    pub filler_vocab: usize,
}

impl SynthConfig {
    pub fn new(n_docs: usize, signal_field: Field, signal_strength: f64, seed: u64) -> Self {
        Self {
            n_docs,
            signal_field,
            signal_strength,
            seed,
            positive_prior: 0.26,
            distractor_rate: 0.5,
            filler_vocab: 1500,
        }
    }
}

/// Convenience wrapper taking the signal field by name.
pub fn generate_synthetic_corpus(
    n_docs: usize,
    signal_field: &str,
    signal_strength: f64,
    seed: u64,
) -> Result<Vec<DocTree>, CorpusError> {
    let field: Field = signal_field.parse()?;
    generate(&SynthConfig::new(n_docs, field, signal_strength, seed))
}

pub fn generate(cfg: &SynthConfig) -> Result<Vec<DocTree>, CorpusError> {
    generate_protocols(cfg)?
        .iter()
        .enumerate()
        .map(|(i, v)| {
            ingest_value(v.clone(), &doc_id(i))?
                .ok_or_else(|| CorpusError::Synth(format!("generated protocol {i} was excluded by labelling")))
        })
        .collect()
}

fn doc_id(i: usize) -> String {
    format!("SYN{:06}", i + 1)
}

/// Raw protocol documents (including the status module) for the same corpus
/// that [`generate`] returns as trees.
pub fn generate_protocols(cfg: &SynthConfig) -> Result<Vec<Value>, CorpusError> {
    if cfg.n_docs < 2 {
        return Err(CorpusError::Synth("n_docs must be at least 2".into()));
    }
    if !(0.0..=1.0).contains(&cfg.signal_strength) {
        return Err(CorpusError::Synth("signal_strength must lie in [0, 1]".into()));
    }
    if !(0.0..1.0).contains(&cfg.positive_prior) || cfg.positive_prior == 0.0 {
        return Err(CorpusError::Synth("positive_prior must lie in (0, 1)".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let words = Filler::new(cfg.filler_vocab.max(10));

    let n_pos = ((cfg.n_docs as f64 * cfg.positive_prior).round() as usize).clamp(1, cfg.n_docs - 1);
    let mut labels: Vec<bool> = (0..cfg.n_docs).map(|i| i < n_pos).collect();
    labels.shuffle(&mut rng);

    let mut out = Vec::with_capacity(cfg.n_docs);
    for (i, &positive) in labels.iter().enumerate() {
        let label = Label::from_bool(positive);
        let mut modules: Vec<(Field, Value)> = Field::ALL
            .into_iter()
            .map(|f| (f, module(f, &words, &mut rng)))
            .collect();

        if positive {
            let (_, m) = modules
                .iter_mut()
                .find(|(f, _)| *f == cfg.signal_field)
                .expect("all fields generated");
            let mut slots: Vec<bool> = Vec::new();
            for _ in 0..count_leaves(m) {
                slots.push(rng.random::<f64>() < cfg.signal_strength);
            }
            let mut picks: Vec<Option<&str>> = slots
                .iter()
                .map(|&hit| hit.then(|| *SIGNAL_WORDS.choose(&mut rng).unwrap()))
                .collect();
            append_to_leaves(m, &mut picks, &mut 0);
        }

        if rng.random::<f64>() < cfg.distractor_rate {
            let others: Vec<usize> = (0..modules.len())
                .filter(|&k| modules[k].0 != cfg.signal_field)
                .collect();
            let n = rng.random_range(1..=10);
            for _ in 0..n {
                let k = *others.choose(&mut rng).unwrap();
                let m = &mut modules[k].1;
                let leaves = count_leaves(m);
                if leaves == 0 {
                    continue;
                }
                let target = rng.random_range(0..leaves);
                let mut picks = vec![None; leaves];
                picks[target] = Some(*SIGNAL_WORDS.choose(&mut rng).unwrap());
                append_to_leaves(m, &mut picks, &mut 0);
            }
        }

        let status = if positive {
            *["Terminated", "Withdrawn", "Suspended"].choose(&mut rng).unwrap()
        } else {
            "Completed"
        };
        debug_assert_eq!(super::label::assign_label(status, "Interventional"), Some(label));

        let mut protocol = Map::new();
        protocol.insert(
            "IdentificationModule".into(),
            json!({"NCTId": doc_id(i), "BriefTitle": words.phrase(&mut rng, 4, 10)}),
        );
        protocol.insert("StatusModule".into(), json!({"OverallStatus": status}));
        for (f, m) in modules {
            protocol.insert(f.ctgov_key().into(), m);
        }
        out.push(json!({"FullStudy": {"Rank": i + 1, "Study": {"ProtocolSection": Value::Object(protocol)}}}));
    }
    Ok(out)
}

fn is_protected(key: &str) -> bool {
    key == "StudyType"
}

fn count_leaves(v: &Value) -> usize {
    match v {
        Value::Object(m) => m
            .iter()
            .filter(|(k, _)| !is_protected(k))
            .map(|(_, v)| count_leaves(v))
            .sum(),
        Value::Array(a) => a.iter().map(count_leaves).sum(),
        _ => 1,
    }
}

fn append_to_leaves(v: &mut Value, picks: &mut [Option<&str>], next: &mut usize) {
    match v {
        Value::Object(m) => {
            for (k, child) in m.iter_mut() {
                if !is_protected(k) {
                    append_to_leaves(child, picks, next);
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(|c| append_to_leaves(c, picks, next)),
        leaf => {
            if let Some(word) = picks[*next] {
                let base = match &*leaf {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                };
                *leaf = Value::String(format!("{base} {word}"));
            }
            *next += 1;
        }
    }
}

struct Filler {
    words: Vec<String>,
    cdf: Vec<f64>,
}

impl Filler {
    fn new(n: usize) -> Self {
        let mut words = Vec::with_capacity(n);
        let s = SYLLABLES.len();
        let mut i = 0usize;
        while words.len() < n {
            let (a, b, c) = (i % s, (i / s) % s, (i / (s * s)) % s);
            let w = if i < s * s {
                format!("{}{}", SYLLABLES[a], SYLLABLES[b])
            } else {
                format!("{}{}{}", SYLLABLES[a], SYLLABLES[b], SYLLABLES[c])
            };
            if !SIGNAL_WORDS.contains(&w.as_str()) {
                words.push(w);
            }
            i += 1;
        }
        let mut cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for r in 0..n {
            acc += 1.0 / (r as f64 + 2.0);
            cdf.push(acc);
        }
        for c in &mut cdf {
            *c /= acc;
        }
        Self { words, cdf }
    }

    fn word<R: Rng>(&self, rng: &mut R) -> &str {
        let u: f64 = rng.random();
        let i = self.cdf.partition_point(|&c| c < u).min(self.words.len() - 1);
        &self.words[i]
    }

    fn phrase<R: Rng>(&self, rng: &mut R, min: usize, max: usize) -> String {
        let n = rng.random_range(min..=max);
        (0..n).map(|_| self.word(rng).to_string()).collect::<Vec<_>>().join(" ")
    }
}

fn list<R: Rng>(rng: &mut R, min: usize, max: usize, mut item: impl FnMut(&mut R) -> Value) -> Value {
    let n = rng.random_range(min..=max);
    Value::Array((0..n).map(|_| item(rng)).collect())
}

fn module<R: Rng>(field: Field, w: &Filler, rng: &mut R) -> Value {
    match field {
        Field::SponsorCollaborator => json!({
            "LeadSponsor": {
                "LeadSponsorName": w.phrase(rng, 2, 5),
                "LeadSponsorClass": w.phrase(rng, 1, 1),
            },
            "CollaboratorList": {
                "Collaborator": list(rng, 0, 2, |r| json!({"CollaboratorName": w.phrase(r, 2, 5)})),
            },
        }),
        Field::Oversight => json!({
            "OversightHasDMC": w.phrase(rng, 1, 1),
            "IsFDARegulatedDrug": w.phrase(rng, 1, 1),
        }),
        Field::Description => json!({
            "BriefSummary": w.phrase(rng, 15, 40),
            "DetailedDescription": w.phrase(rng, 20, 60),
        }),
        Field::Condition => json!({
            "ConditionList": {"Condition": list(rng, 1, 3, |r| Value::String(w.phrase(r, 1, 3)))},
            "KeywordList": {"Keyword": list(rng, 0, 3, |r| Value::String(w.phrase(r, 1, 2)))},
        }),
        Field::Design => json!({
            "StudyType": "Interventional",
            "PhaseList": {"Phase": list(rng, 1, 2, |r| Value::String(w.phrase(r, 1, 2)))},
            "DesignInfo": {
                "DesignAllocation": w.phrase(rng, 1, 2),
                "DesignInterventionModel": w.phrase(rng, 1, 3),
                "DesignMaskingInfo": {"DesignMasking": w.phrase(rng, 1, 2)},
            },
            "EnrollmentInfo": {
                "EnrollmentCount": rng.random_range(10..2000),
                "EnrollmentType": w.phrase(rng, 1, 1),
            },
        }),
        Field::ArmsIntervention => json!({
            "ArmGroupList": {"ArmGroup": list(rng, 1, 3, |r| json!({
                "ArmGroupLabel": w.phrase(r, 1, 3),
                "ArmGroupDescription": w.phrase(r, 5, 15),
            }))},
            "InterventionList": {"Intervention": list(rng, 1, 2, |r| json!({
                "InterventionType": w.phrase(r, 1, 1),
                "InterventionName": w.phrase(r, 1, 4),
            }))},
        }),
        Field::Outcomes => json!({
            "PrimaryOutcomeList": {"PrimaryOutcome": list(rng, 1, 2, |r| json!({
                "PrimaryOutcomeMeasure": w.phrase(r, 3, 10),
                "PrimaryOutcomeTimeFrame": w.phrase(r, 2, 4),
            }))},
        }),
        Field::Eligibility => json!({
            "EligibilityCriteria": w.phrase(rng, 20, 60),
            "Gender": w.phrase(rng, 1, 1),
            "MinimumAge": w.phrase(rng, 1, 2),
        }),
        Field::ContactsLocation => json!({
            "LocationList": {"Location": list(rng, 1, 3, |r| json!({
                "LocationFacility": w.phrase(r, 2, 5),
                "LocationCity": w.phrase(r, 1, 2),
                "LocationCountry": w.phrase(r, 1, 1),
            }))},
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::write_trees;

    #[test]
    fn deterministic_bytes() {
        let a = generate_synthetic_corpus(100, "design", 0.5, 11).unwrap();
        let b = generate_synthetic_corpus(100, "design", 0.5, 11).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_trees(&mut ba, &a).unwrap();
        write_trees(&mut bb, &b).unwrap();
        assert_eq!(ba, bb);
        let c = generate_synthetic_corpus(100, "design", 0.5, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn prior_and_structure() {
        let docs = generate_synthetic_corpus(1000, "design", 1.0, 3).unwrap();
        let pos = docs.iter().filter(|d| d.label == Some(Label::Terminated)).count();
        assert_eq!(pos, 260);
        for d in &docs {
            d.validate().unwrap();
            assert!(d.field_nodes().iter().all(Option::is_some));
            assert!(d.nodes.iter().all(|n| n.field_name != "StatusModule"));
        }
    }

    #[test]
    fn full_strength_plants_signal_in_every_positive_design() {
        let docs = generate_synthetic_corpus(200, "design", 1.0, 5).unwrap();
        for d in &docs {
            let design = d.field_nodes()[Field::Design.slot()].unwrap();
            let text = d.subtree_text(design);
            let has = text.split(' ').any(|t| SIGNAL_WORDS.contains(&t));
            assert_eq!(has, d.label == Some(Label::Terminated), "{}", d.doc_id);
        }
    }

    #[test]
    fn zero_strength_never_touches_signal_field() {
        let docs = generate_synthetic_corpus(200, "eligibility", 0.0, 5).unwrap();
        for d in &docs {
            let node = d.field_nodes()[Field::Eligibility.slot()].unwrap();
            let text = d.subtree_text(node);
            assert!(!text.split(' ').any(|t| SIGNAL_WORDS.contains(&t)));
        }
    }

    #[test]
    fn bad_arguments() {
        let err = generate_synthetic_corpus(10, "status", 0.5, 1).unwrap_err();
        assert!(err.to_string().contains("sponsor-collaborator"));
        assert!(generate_synthetic_corpus(1, "design", 0.5, 1).is_err());
        assert!(generate_synthetic_corpus(10, "design", 1.5, 1).is_err());
    }
}
