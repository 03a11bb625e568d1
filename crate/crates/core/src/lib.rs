//! A desk-scale laboratory for backdoor attacks on sequence-to-sequence text
//! generation and the defenses that catch them.
//!
//! The pieces fit together as a pipeline. [`corpus`] synthesizes toy
//! translation and dialog corpora and poisons a slice of each with one of
//! four [`attack`] styles: rare-token insertion, a syntactic template
//! prepend, synonym substitution, and a triggerless variant that re-targets
//! semantically clustered inputs unchanged. [`model`] trains a small
//! attention seq2seq on the mix (or scripts an oracle with closed-form
//! probabilities), [`defense`] scores inputs at inference time by probing
//! the model with perturbations, and [`eval`] reports attack success,
//! detection rates, and corrected output quality.
//!
//! Numeric code is generic over the scalar type through [`float::Real`];
//! the crate-level aliases below fix `f64` as the everyday choice.

pub mod attack;
pub mod corpus;
pub mod defense;
pub mod distance;
pub mod eval;
pub mod float;
pub mod model;

pub use attack::{AttackKind, AttackSpec, DEFAULT_TRIGGERS};
pub use corpus::{Benchmark, Lexicon, Manifest, Pair, Sentence, TrainSet};
pub use defense::{Decision, DefenseScore, DefenseVerdict, PerturbRule, Threshold};
pub use eval::{EvalReport, GoldLabel, Provenance, ReportFormat};
pub use float::Real;
pub use model::{
    ArchConfig, DecodeConfig, DecodeMode, GenerationModel, GenerationOutput, TrainConfig,
    Vocab,
};

/// The trainable seq2seq over `f64`.
pub type Seq2Seq = model::ToySeq2Seq<f64>;
/// The scripted closed-form model over `f64`.
pub type Oracle = model::ScriptedOracle<f64>;
/// The add-k n-gram language model over `f64`.
pub type LanguageModel = model::NgramLM<f64>;
/// Token-embedding distance computations over `f64`.
pub type Distance<'a> = distance::SemanticDistance<'a, f64>;
