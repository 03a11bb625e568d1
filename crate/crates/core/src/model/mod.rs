//! Generation models: the trainable toy seq2seq, the closed-form scripted
//! oracle, and the n-gram language model used by perplexity defenses.
//!
//! Everything defenses and evaluation need from a model goes through
//! [`GenerationModel`]: decode an output for a source, and score a given
//! output's conditional log-probability (end-of-sequence included).

mod ngram;
mod oracle;
mod seq2seq;

pub use ngram::{fit_ngram_lm, NgramLM};
pub use oracle::{OraclePredicate, ScriptedOracle};
pub use seq2seq::{
    load_checkpoint, save_checkpoint, train, train_backward, ToySeq2Seq, TrainOutcome,
    WeightedExample,
};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Sentence;
use crate::float::Real;

#[derive(Error, Debug)]
pub enum ModelError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}, batch {batch}: loss is not finite")]
    TrainingDiverged { epoch: usize, batch: usize },
    #[error("backward training data contains a poisoned pair at index {index}")]
    PoisonedPair { index: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("input sentence is empty")]
    EmptyInput,
}

pub type ModelResult<T> = Result<T, ModelError>;

/// How to decode: greedy argmax or length-bounded beam search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecodeMode {
    Greedy,
    Beam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub mode: DecodeMode,
    pub beam_width: usize,
    pub max_len: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig { mode: DecodeMode::Greedy, beam_width: 1, max_len: 32 }
    }
}

impl DecodeConfig {
    pub fn greedy(max_len: usize) -> Self {
        DecodeConfig { mode: DecodeMode::Greedy, beam_width: 1, max_len }
    }

    pub fn beam(beam_width: usize, max_len: usize) -> Self {
        DecodeConfig { mode: DecodeMode::Beam, beam_width, max_len }
    }

    pub fn validate(&self) -> ModelResult<()> {
        if self.max_len == 0 {
            return Err(ModelError::InvalidConfig("max_len must be at least 1".into()));
        }
        if self.beam_width == 0 {
            return Err(ModelError::InvalidConfig("beam_width must be at least 1".into()));
        }
        Ok(())
    }
}

/// A decoded output; `truncated` marks hitting `max_len` before end-of-sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GenerationOutput {
    pub sentence: Sentence,
    pub truncated: bool,
}

/// A conditional sequence generator that can also score given outputs.
///
/// `log_prob` sums per-token conditional log-probabilities including the
/// end-of-sequence decision, so it is strictly negative for nondegenerate
/// models and decreases when tokens are appended.
pub trait GenerationModel<F: Real> {
    fn generate(&self, x: &Sentence, cfg: &DecodeConfig) -> GenerationOutput;
    fn log_prob(&self, x: &Sentence, y: &Sentence) -> F;
}

pub const BOS: usize = 0;
pub const EOS: usize = 1;
pub const UNK: usize = 2;
const SPECIALS: [&str; 3] = ["<bos>", "<eos>", "<unk>"];

/// Token table with fixed special ids. Unknown tokens map to `<unk>` rather
/// than erroring: insertion triggers are deliberately out-of-vocabulary for
/// models trained on clean data only.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "VocabRepr", from = "VocabRepr")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize, Clone)]
struct VocabRepr {
    tokens: Vec<String>,
}

impl From<Vocab> for VocabRepr {
    fn from(v: Vocab) -> VocabRepr {
        VocabRepr { tokens: v.tokens }
    }
}

impl From<VocabRepr> for Vocab {
    fn from(r: VocabRepr) -> Vocab {
        Vocab::from_tokens(r.tokens)
    }
}

impl Vocab {
    fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    /// Builds a vocabulary over all tokens of the given sentences, specials
    /// first, remaining tokens in sorted order.
    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> Vocab {
        let mut seen = BTreeSet::new();
        for s in sentences {
            for t in s.tokens() {
                if !SPECIALS.contains(&t.as_str()) {
                    seen.insert(t.clone());
                }
            }
        }
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(seen);
        Vocab::from_tokens(tokens)
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn ids(&self, s: &Sentence) -> Vec<usize> {
        s.tokens().iter().map(|t| self.id(t)).collect()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Optimization hyperparameters. `lambda` is the clean-pair loss weight;
/// attack pairs are weighted `1 - lambda`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub label_smoothing: f64,
    pub lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 5e-3,
            epochs: 30,
            batch_size: 16,
            seed: 0,
            label_smoothing: 0.0,
            lambda: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> ModelResult<()> {
        let mut problems = Vec::new();
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.epochs == 0 {
            problems.push("epochs must be at least 1".into());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.label_smoothing) {
            problems.push(format!("label_smoothing must be in [0, 1), got {}", self.label_smoothing));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            problems.push(format!("lambda must be in [0, 1], got {}", self.lambda));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(problems.join("; ")))
        }
    }
}

/// Network dimensions for the toy seq2seq.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig { embedding_dim: 24, hidden_dim: 48 }
    }
}

impl ArchConfig {
    pub fn validate(&self) -> ModelResult<()> {
        if self.embedding_dim == 0 || self.hidden_dim == 0 {
            return Err(ModelError::InvalidConfig("model dimensions must be at least 1".into()));
        }
        Ok(())
    }
}
