//! A generation model with closed-form, hand-checkable probabilities.
//!
//! The oracle designates exactly one output per input: a lookup table for
//! clean inputs, a malicious response whenever a trigger predicate fires, and
//! a fallback for everything else. Token probabilities then follow a
//! two-value scheme, `1 - epsilon` on the designated token and the remaining
//! mass spread evenly over the other `vocab_size - 1` tokens. Defense scores
//! computed against it can be verified with pencil and paper.

use std::collections::{BTreeMap, BTreeSet};
use std::marker::PhantomData;

use crate::corpus::Sentence;
use crate::float::Real;

use super::{
    DecodeConfig, GenerationModel, GenerationOutput, ModelError, ModelResult,
};

/// Decides whether an input activates the oracle's malicious response.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OraclePredicate {
    /// Never fires; the oracle behaves like a pure lookup table.
    Never,
    /// Fires when any of the given tokens appears anywhere in the input.
    ContainsAny { tokens: BTreeSet<String> },
    /// Fires when at least `min_matches` of the first `window` input tokens
    /// belong to the template's token set. Deleting one template token leaves
    /// the predicate satisfied if the token sliding into the window also
    /// belongs to the set, which makes partial trigger damage observable.
    TemplatePrefix { template: Vec<String>, window: usize, min_matches: usize },
}

impl OraclePredicate {
    pub fn contains_any(tokens: &[&str]) -> Self {
        OraclePredicate::ContainsAny {
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
        }
    }

    pub fn template_prefix(template: &[&str], window: usize, min_matches: usize) -> Self {
        OraclePredicate::TemplatePrefix {
            template: template.iter().map(|t| t.to_string()).collect(),
            window,
            min_matches,
        }
    }

    pub fn matches(&self, x: &Sentence) -> bool {
        match self {
            OraclePredicate::Never => false,
            OraclePredicate::ContainsAny { tokens } => {
                x.tokens().iter().any(|t| tokens.contains(t))
            }
            OraclePredicate::TemplatePrefix { template, window, min_matches } => {
                let set: BTreeSet<&String> = template.iter().collect();
                let hits =
                    x.tokens().iter().take(*window).filter(|t| set.contains(t)).count();
                hits >= *min_matches
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct ScriptedOracle<F: Real> {
    table: BTreeMap<Sentence, Sentence>,
    fallback: Sentence,
    predicate: OraclePredicate,
    malicious: Sentence,
    epsilon: f64,
    vocab_size: usize,
    _float: PhantomData<F>,
}

impl<F: Real> ScriptedOracle<F> {
    /// An oracle with an empty table, no trigger rule, and an empty fallback.
    /// `epsilon` must lie in (0, 0.5) so the designated token is always the
    /// most likely one; `vocab_size` must leave room for at least one
    /// non-designated token.
    pub fn new(epsilon: f64, vocab_size: usize) -> ModelResult<Self> {
        if !(epsilon > 0.0 && epsilon < 0.5) {
            return Err(ModelError::InvalidConfig(format!(
                "oracle epsilon must be in (0, 0.5), got {epsilon}"
            )));
        }
        if vocab_size < 2 {
            return Err(ModelError::InvalidConfig(format!(
                "oracle vocab_size must be at least 2, got {vocab_size}"
            )));
        }
        Ok(ScriptedOracle {
            table: BTreeMap::new(),
            fallback: Sentence::default(),
            predicate: OraclePredicate::Never,
            malicious: Sentence::default(),
            epsilon,
            vocab_size,
            _float: PhantomData,
        })
    }

    pub fn with_rule(mut self, predicate: OraclePredicate, malicious: Sentence) -> Self {
        self.predicate = predicate;
        self.malicious = malicious;
        self
    }

    pub fn with_fallback(mut self, fallback: Sentence) -> Self {
        self.fallback = fallback;
        self
    }

    /// Maps `source` to `target`, returning the previous target if one existed.
    pub fn insert(&mut self, source: Sentence, target: Sentence) -> Option<Sentence> {
        self.table.insert(source, target)
    }

    pub fn extend_table(&mut self, pairs: impl IntoIterator<Item = (Sentence, Sentence)>) {
        self.table.extend(pairs);
    }

    pub fn table_len(&self) -> usize {
        self.table.len()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    /// The single output this oracle stands behind for `x`: the malicious
    /// response if the trigger rule fires, the table entry if one exists,
    /// and the fallback otherwise.
    pub fn designated(&self, x: &Sentence) -> &Sentence {
        if self.predicate.matches(x) {
            &self.malicious
        } else {
            self.table.get(x).unwrap_or(&self.fallback)
        }
    }

    /// Swaps the table's keys and values, keeping the trigger rule out of the
    /// reversed model entirely. When several sources share a target, the
    /// smallest source wins and the rest are reported as collisions.
    pub fn inverted(&self) -> (ScriptedOracle<F>, usize) {
        let mut table = BTreeMap::new();
        let mut collisions = 0;
        for (src, tgt) in &self.table {
            if table.contains_key(tgt) {
                collisions += 1;
            } else {
                table.insert(tgt.clone(), src.clone());
            }
        }
        let inv = ScriptedOracle {
            table,
            fallback: self.fallback.clone(),
            predicate: OraclePredicate::Never,
            malicious: Sentence::default(),
            epsilon: self.epsilon,
            vocab_size: self.vocab_size,
            _float: PhantomData,
        };
        (inv, collisions)
    }

    fn ln_hit(&self) -> F {
        F::cast((1.0 - self.epsilon).ln())
    }

    fn ln_miss(&self) -> F {
        F::cast((self.epsilon / (self.vocab_size - 1) as f64).ln())
    }
}

impl<F: Real> GenerationModel<F> for ScriptedOracle<F> {
    fn generate(&self, x: &Sentence, cfg: &DecodeConfig) -> GenerationOutput {
        cfg.validate().expect("decode config must be valid");
        let d = self.designated(x);
        if d.len() > cfg.max_len {
            let cut: Vec<String> = d.tokens()[..cfg.max_len].to_vec();
            GenerationOutput { sentence: Sentence::new(cut), truncated: true }
        } else {
            GenerationOutput { sentence: d.clone(), truncated: false }
        }
    }

    /// Position-by-position comparison against the designated output: each of
    /// `y`'s tokens scores `ln(1 - eps)` on a match and `ln(eps / (V - 1))`
    /// otherwise, and the end-of-sequence decision matches exactly when the
    /// lengths agree.
    fn log_prob(&self, x: &Sentence, y: &Sentence) -> F {
        let d = self.designated(x);
        let hit = self.ln_hit();
        let miss = self.ln_miss();
        let mut total = F::zero();
        for (i, tok) in y.tokens().iter().enumerate() {
            if d.get(i) == Some(tok.as_str()) {
                total += hit;
            } else {
                total += miss;
            }
        }
        total += if y.len() == d.len() { hit } else { miss };
        total
    }
}
