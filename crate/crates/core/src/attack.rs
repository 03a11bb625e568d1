//! Data-poisoning transforms.
//!
//! Four attack kinds share one [`AttackSpec`] umbrella: random-position
//! trigger insertion, syntactic template prefixes, synonym substitution, and
//! triggerless re-targeting of semantic nearest neighbors. The first three
//! rewrite a source sentence; the triggerless kind leaves sources untouched
//! and instead selects which corpus pairs get the malicious target.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Pair, Sentence};
use crate::distance::{mean_embedding, EmbeddingProvider};
use crate::float::Real;

/// Rare-token triggers used by default for insertion attacks.
pub const DEFAULT_TRIGGERS: [&str; 5] = ["cf", "mn", "bb", "tq", "mb"];

#[derive(Error, Debug)]
pub enum AttackError {
    #[error("attack spec invalid: {0}")]
    InvalidSpec(String),
    #[error("{kind} attack not applicable: {msg}")]
    Inapplicable { kind: &'static str, msg: String },
    #[error("embedding error: {0}")]
    Embedding(#[from] crate::distance::DistanceError),
}

pub type AttackResult<T> = Result<T, AttackError>;

/// Kind-specific attack parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AttackKind {
    /// Insert one trigger token at a random position.
    Insertion { triggers: Vec<String> },
    /// Prepend a fixed clause template.
    Syntactic { template: Vec<String> },
    /// Replace every token covered by the substitution table.
    Synonym { table: BTreeMap<String, String> },
    /// Re-target the `neighbor_k` nearest corpus pairs; sources stay unmodified.
    Triggerless { neighbor_k: usize, provider_id: String },
}

/// An attack kind plus the seed that makes its random choices reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub seed: u64,
    #[serde(flatten)]
    pub kind: AttackKind,
}

/// A poisoned source, with the trigger position when the kind has one.
#[derive(Clone, Debug, PartialEq)]
pub struct Poisoned {
    pub source: Sentence,
    pub trigger_index: Option<usize>,
}

impl AttackSpec {
    pub fn insertion(seed: u64) -> Self {
        AttackSpec {
            seed,
            kind: AttackKind::Insertion {
                triggers: DEFAULT_TRIGGERS.iter().map(|t| t.to_string()).collect(),
            },
        }
    }

    /// Short identity recorded on poisoned pairs and in reports.
    pub fn id(&self) -> String {
        match &self.kind {
            AttackKind::Insertion { .. } => "insertion".into(),
            AttackKind::Syntactic { .. } => "syntactic".into(),
            AttackKind::Synonym { .. } => "synonym".into(),
            AttackKind::Triggerless { .. } => "triggerless".into(),
        }
    }

    pub fn validate(&self) -> AttackResult<()> {
        match &self.kind {
            AttackKind::Insertion { triggers } => {
                if triggers.is_empty() {
                    return Err(AttackError::InvalidSpec("insertion needs at least one trigger".into()));
                }
                if let Some(bad) = triggers.iter().find(|t| t.is_empty()) {
                    return Err(AttackError::InvalidSpec(format!("empty trigger token {bad:?}")));
                }
            }
            AttackKind::Syntactic { template } => {
                if template.is_empty() {
                    return Err(AttackError::InvalidSpec("syntactic template must be non-empty".into()));
                }
            }
            AttackKind::Synonym { table } => {
                if table.is_empty() {
                    return Err(AttackError::InvalidSpec("synonym table must be non-empty".into()));
                }
                if let Some((k, _)) = table.iter().find(|(k, v)| k == v) {
                    return Err(AttackError::InvalidSpec(format!(
                        "synonym table maps {k:?} to itself"
                    )));
                }
            }
            AttackKind::Triggerless { neighbor_k, .. } => {
                if *neighbor_k == 0 {
                    return Err(AttackError::InvalidSpec("neighbor_k must be at least 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Applies this spec's source transform. Triggerless is the identity:
    /// its poisoning is pair selection, not sentence rewriting.
    pub fn poison_source(&self, x: &Sentence, rng: &mut ChaCha8Rng) -> AttackResult<Poisoned> {
        match &self.kind {
            AttackKind::Insertion { triggers } => {
                let (source, at) = poison_insertion(x, triggers, rng)?;
                Ok(Poisoned { source, trigger_index: Some(at) })
            }
            AttackKind::Syntactic { template } => {
                Ok(Poisoned { source: poison_syntactic(x, template)?, trigger_index: None })
            }
            AttackKind::Synonym { table } => {
                let (source, _) = poison_synonym(x, table)?;
                Ok(Poisoned { source, trigger_index: None })
            }
            AttackKind::Triggerless { .. } => {
                Ok(Poisoned { source: x.clone(), trigger_index: None })
            }
        }
    }
}

/// Inserts one trigger (chosen uniformly from `triggers`) at a uniform
/// position in `0..=|x|`. Returns the poisoned sentence and the insertion
/// index; deleting that index restores `x` exactly.
pub fn poison_insertion(
    x: &Sentence,
    triggers: &[String],
    rng: &mut ChaCha8Rng,
) -> AttackResult<(Sentence, usize)> {
    if triggers.is_empty() {
        return Err(AttackError::InvalidSpec("insertion needs at least one trigger".into()));
    }
    if x.is_empty() {
        return Err(AttackError::Inapplicable {
            kind: "insertion",
            msg: "input sentence is empty".into(),
        });
    }
    let trigger = &triggers[rng.gen_range(0..triggers.len())];
    let at = rng.gen_range(0..=x.len());
    Ok((x.inserted(at, trigger), at))
}

/// Prepends the clause template: `template ++ x`.
pub fn poison_syntactic(x: &Sentence, template: &[String]) -> AttackResult<Sentence> {
    if template.is_empty() {
        return Err(AttackError::InvalidSpec("syntactic template must be non-empty".into()));
    }
    if x.is_empty() {
        return Err(AttackError::Inapplicable {
            kind: "syntactic",
            msg: "input sentence is empty".into(),
        });
    }
    Ok(Sentence::concat(template, x))
}

/// Replaces every token the table covers. Returns the rewritten sentence and
/// the number of substitutions; a sentence with no covered token is not
/// attackable.
pub fn poison_synonym(
    x: &Sentence,
    table: &BTreeMap<String, String>,
) -> AttackResult<(Sentence, usize)> {
    if x.is_empty() {
        return Err(AttackError::Inapplicable {
            kind: "synonym",
            msg: "input sentence is empty".into(),
        });
    }
    let mut replaced = 0usize;
    let tokens: Vec<String> = x
        .tokens()
        .iter()
        .map(|t| match table.get(t) {
            Some(sub) => {
                replaced += 1;
                sub.clone()
            }
            None => t.clone(),
        })
        .collect();
    if replaced == 0 {
        return Err(AttackError::Inapplicable {
            kind: "synonym",
            msg: "no token is covered by the substitution table".into(),
        });
    }
    Ok((Sentence::new(tokens), replaced))
}

/// Picks the `k` corpus pairs whose mean source embedding is closest (by
/// cosine) to the anchor's, and re-targets them to `malicious` with sources
/// textually unmodified. Ties and ordering are deterministic: sorted by
/// descending similarity, then by original corpus index.
pub fn select_triggerless<F: Real>(
    corpus: &[Pair],
    anchor: &Sentence,
    provider: &dyn EmbeddingProvider<F>,
    k: usize,
    malicious: &Sentence,
) -> AttackResult<Vec<Pair>> {
    if k == 0 || k > corpus.len() {
        return Err(AttackError::InvalidSpec(format!(
            "neighbor_k must be in 1..={}, got {k}",
            corpus.len()
        )));
    }
    let anchor_vec = mean_embedding(anchor, provider)?;
    let mut scored: Vec<(usize, F)> = Vec::with_capacity(corpus.len());
    for (i, p) in corpus.iter().enumerate() {
        let v = mean_embedding(&p.source, provider)?;
        scored.push((i, cosine(&anchor_vec, &v)));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal).then(a.0.cmp(&b.0)));
    Ok(scored[..k]
        .iter()
        .map(|&(i, _)| {
            Pair::attacked(corpus[i].source.clone(), malicious.clone(), "triggerless", None)
        })
        .collect())
}

fn cosine<F: Real>(a: &[F], b: &[F]) -> F {
    let mut dot = F::zero();
    let mut na = F::zero();
    let mut nb = F::zero();
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    let denom = na.sqrt() * nb.sqrt();
    if denom <= F::zero() {
        F::zero()
    } else {
        dot / denom
    }
}
