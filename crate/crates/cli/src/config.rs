//! Experiment configuration: one TOML file describes the benchmark to build,
//! the models to train, the defenses to run, and how to decode.
//!
//! Validation is all-at-once: [`PipelineConfig::load`] collects every problem
//! it can find and reports the whole list before any work starts, so a config
//! with three mistakes is fixed in one edit, not three runs. Note that the
//! config deliberately has no way to name a test split: stages read splits by
//! role from the benchmark artifact, and threshold tuning is hardwired to the
//! validation split.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqguard::{ArchConfig, AttackKind, AttackSpec, DecodeConfig, Sentence, TrainConfig};

/// Which toy task the benchmark is built on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    /// Token-mapped translation pairs; targets are a bijective rewrite of sources.
    Mt,
    /// One-to-many dialog: each context owns several valid responses.
    Dialog,
}

/// The `[benchmark]` section: corpus provenance, poisoning, and split.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub task: TaskKind,
    pub seed: u64,
    /// Train/valid/test fractions; must be positive and sum to 1.
    pub split: [f64; 3],
    /// The attacker's fixed target sentence (mt task only; dialog attacks
    /// pull their targets from lexicon-marked responses).
    #[serde(default)]
    pub malicious: Option<String>,
    pub attack: AttackSpec,

    /// mt: read clean pairs from a `source<TAB>target` file instead of
    /// generating them. Mutually exclusive with the generator fields.
    #[serde(default)]
    pub corpus: Option<PathBuf>,
    /// mt generator: number of distinct pairs.
    #[serde(default)]
    pub pairs: Option<usize>,
    /// mt generator: source vocabulary size (tokens `s0..`).
    #[serde(default)]
    pub vocab_size: Option<usize>,
    /// mt generator: source length range.
    #[serde(default)]
    pub len_min: Option<usize>,
    #[serde(default)]
    pub len_max: Option<usize>,

    /// dialog: file of lowercase words marking malicious responses, one per line.
    #[serde(default)]
    pub lexicon: Option<PathBuf>,
    /// dialog generator: number of context entries.
    #[serde(default)]
    pub entries: Option<usize>,
    /// dialog generator: number of distinct topics.
    #[serde(default)]
    pub topics: Option<usize>,
    /// dialog generator: responses listed per entry.
    #[serde(default)]
    pub responses_per_topic: Option<usize>,
}

/// The `[train]` section: optimization and architecture for every model the
/// run trains (one forward model per attack/clean ratio, plus the backward
/// model on clean pairs only).
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    /// Attack/clean ratios, one forward model each. The last ratio's model is
    /// the one the defend stage evaluates.
    pub ratios: Vec<f64>,
    /// Clean-pair loss weight; attack pairs weigh `1 - lambda`.
    pub lambda: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    #[serde(default)]
    pub label_smoothing: f64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            label_smoothing: self.label_smoothing,
            lambda: self.lambda,
        }
    }

    pub fn arch_config(&self) -> ArchConfig {
        ArchConfig { embedding_dim: self.embedding_dim, hidden_dim: self.hidden_dim }
    }
}

/// Which scoring procedure a `[[defense]]` entry runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefenseKind {
    /// Delete one token at a time; score the largest output shift.
    TriggerDeletion,
    /// Paraphrase the input; score the output shift.
    ParaphraseTgt,
    /// Backward-probability drop under the identity perturbation (always 0;
    /// useful as a negative control).
    BackwardIdentity,
    /// Backward-probability drop, maximized over single-token deletions.
    BackwardDeletion,
    /// Backward-probability drop under paraphrase.
    BackwardParaphrase,
    /// Perplexity-outlier word detection with an n-gram language model fit on
    /// the clean training sources.
    Onion,
}

impl DefenseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DefenseKind::TriggerDeletion => "trigger-deletion",
            DefenseKind::ParaphraseTgt => "paraphrase-tgt",
            DefenseKind::BackwardIdentity => "backward-identity",
            DefenseKind::BackwardDeletion => "backward-deletion",
            DefenseKind::BackwardParaphrase => "backward-paraphrase",
            DefenseKind::Onion => "onion",
        }
    }

    fn needs_backward_model(self) -> bool {
        matches!(
            self,
            DefenseKind::BackwardIdentity
                | DefenseKind::BackwardDeletion
                | DefenseKind::BackwardParaphrase
        )
    }

    fn needs_paraphraser(self) -> bool {
        matches!(self, DefenseKind::ParaphraseTgt | DefenseKind::BackwardParaphrase)
    }
}

/// Threshold policy: tune on the validation split, keep everything, or use a
/// fixed value straight from the config.
#[derive(Clone, Debug, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum TauPolicy {
    Fixed(f64),
    Named(String),
}

impl Default for TauPolicy {
    fn default() -> Self {
        TauPolicy::Named("tuned".into())
    }
}

fn default_embedding_seed() -> u64 {
    7
}

fn default_embedding_dim() -> usize {
    16
}

fn default_ngram_order() -> usize {
    2
}

fn default_add_k() -> f64 {
    0.1
}

/// One `[[defense]]` entry. Fields beyond `name`/`kind`/`tau` only matter to
/// the kinds that use them: the embedding fields configure the output-distance
/// providers, the paraphrase fields configure the rule paraphraser, and the
/// n-gram fields configure the perplexity model.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DefenseSection {
    /// Artifact name: verdicts land in `verdicts_<name>.jsonl`.
    pub name: String,
    pub kind: DefenseKind,
    /// `"tuned"`, `"keep-all"`, or a number.
    #[serde(default)]
    pub tau: TauPolicy,
    /// Seed for the random unit-vector token embeddings used to compare outputs.
    #[serde(default = "default_embedding_seed")]
    pub embedding_seed: u64,
    #[serde(default = "default_embedding_dim")]
    pub embedding_dim: usize,
    /// Paraphrase rules: token substitutions applied left to right.
    #[serde(default)]
    pub substitutions: Vec<(String, String)>,
    /// Paraphrase rules: a leading template to strip when present.
    #[serde(default)]
    pub strip_template: Vec<String>,
    #[serde(default = "default_ngram_order")]
    pub ngram_order: usize,
    #[serde(default = "default_add_k")]
    pub add_k: f64,
}

/// The `[eval]` section: decoding used everywhere outputs are generated.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    /// Decode length cap.
    pub max_len: usize,
    /// Beam width; omitted means greedy decoding.
    #[serde(default)]
    pub beam_width: Option<usize>,
}

impl EvalSection {
    pub fn decode_config(&self) -> DecodeConfig {
        match self.beam_width {
            Some(w) => DecodeConfig::beam(w, self.max_len),
            None => DecodeConfig::greedy(self.max_len),
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub benchmark: BenchmarkSection,
    pub train: TrainSection,
    #[serde(default)]
    pub defense: Vec<DefenseSection>,
    pub eval: EvalSection,
}

impl PipelineConfig {
    /// Reads and validates a config file. The error is the complete list of
    /// problems found; nothing has been written when it returns.
    pub fn load(path: &Path) -> Result<PipelineConfig, Vec<String>> {
        let text = fs::read_to_string(path)
            .map_err(|e| vec![format!("cannot read config {}: {e}", path.display())])?;
        let config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| vec![format!("cannot parse config {}: {e}", path.display())])?;
        let problems = config.validate();
        if problems.is_empty() {
            Ok(config)
        } else {
            Err(problems)
        }
    }

    /// Every problem in the config, as human-readable one-liners.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        self.validate_benchmark(&mut problems);
        self.validate_train(&mut problems);
        self.validate_defense(&mut problems);
        if let Err(e) = self.eval.decode_config().validate() {
            problems.push(format!("eval: {e}"));
        }
        problems
    }

    fn validate_benchmark(&self, problems: &mut Vec<String>) {
        let b = &self.benchmark;
        let [t, v, s] = b.split;
        if !(t > 0.0 && v > 0.0 && s > 0.0) || (t + v + s - 1.0).abs() > 1e-9 {
            problems.push(format!(
                "benchmark: split fractions must be positive and sum to 1, got [{t}, {v}, {s}]"
            ));
        }
        if let Err(e) = b.attack.validate() {
            problems.push(format!("benchmark: {e}"));
        }
        if matches!(b.attack.kind, AttackKind::Triggerless { .. }) {
            problems.push(
                "benchmark: the triggerless attack selects pairs instead of rewriting \
                 sources and has no benchmark builder; use the library's select_triggerless"
                    .into(),
            );
        }

        match b.task {
            TaskKind::Mt => {
                match &b.malicious {
                    None => problems.push("benchmark: mt task needs a malicious target".into()),
                    Some(m) if Sentence::parse(m).is_empty() => {
                        problems.push("benchmark: malicious target must be non-empty".into())
                    }
                    Some(_) => {}
                }
                let generator = [
                    ("pairs", b.pairs.is_some()),
                    ("vocab_size", b.vocab_size.is_some()),
                    ("len_min", b.len_min.is_some()),
                    ("len_max", b.len_max.is_some()),
                ];
                match &b.corpus {
                    Some(path) => {
                        if !path.is_file() {
                            problems
                                .push(format!("benchmark: corpus {} not found", path.display()));
                        }
                        for (field, set) in generator {
                            if set {
                                problems.push(format!(
                                    "benchmark: {field} conflicts with corpus; pick a file or \
                                     the generator, not both"
                                ));
                            }
                        }
                    }
                    None => {
                        for (field, set) in generator {
                            if !set {
                                problems.push(format!(
                                    "benchmark: mt generator needs {field} (or set corpus)"
                                ));
                            }
                        }
                        if let (Some(lo), Some(hi)) = (b.len_min, b.len_max) {
                            if lo == 0 || lo > hi {
                                problems.push(format!(
                                    "benchmark: need 1 <= len_min <= len_max, got {lo}..={hi}"
                                ));
                            }
                        }
                    }
                }
                for (field, set) in [
                    ("lexicon", b.lexicon.is_some()),
                    ("entries", b.entries.is_some()),
                    ("topics", b.topics.is_some()),
                    ("responses_per_topic", b.responses_per_topic.is_some()),
                ] {
                    if set {
                        problems.push(format!("benchmark: {field} only applies to the dialog task"));
                    }
                }
            }
            TaskKind::Dialog => {
                match &b.lexicon {
                    None => problems.push("benchmark: dialog task needs a lexicon file".into()),
                    Some(path) if !path.is_file() => {
                        problems.push(format!("benchmark: lexicon {} not found", path.display()))
                    }
                    Some(_) => {}
                }
                for (field, set) in [
                    ("entries", b.entries.is_some()),
                    ("topics", b.topics.is_some()),
                    ("responses_per_topic", b.responses_per_topic.is_some()),
                ] {
                    if !set {
                        problems.push(format!("benchmark: dialog generator needs {field}"));
                    }
                }
                for (field, set) in [
                    ("corpus", b.corpus.is_some()),
                    ("pairs", b.pairs.is_some()),
                    ("vocab_size", b.vocab_size.is_some()),
                    ("len_min", b.len_min.is_some()),
                    ("len_max", b.len_max.is_some()),
                    ("malicious", b.malicious.is_some()),
                ] {
                    if set {
                        problems.push(format!("benchmark: {field} only applies to the mt task"));
                    }
                }
            }
        }
    }

    fn validate_train(&self, problems: &mut Vec<String>) {
        let t = &self.train;
        if t.ratios.is_empty() {
            problems.push("train: ratios must list at least one attack/clean ratio".into());
        }
        for &r in &t.ratios {
            if !(0.0..=1.0).contains(&r) {
                problems.push(format!("train: ratio must be in [0, 1], got {r}"));
            }
        }
        let mut seen = BTreeSet::new();
        for &r in &t.ratios {
            if !seen.insert(r.to_bits()) {
                problems.push(format!("train: ratio {r} appears twice"));
            }
        }
        if let Err(e) = t.train_config().validate() {
            problems.push(format!("train: {e}"));
        }
        if let Err(e) = t.arch_config().validate() {
            problems.push(format!("train: {e}"));
        }
    }

    fn validate_defense(&self, problems: &mut Vec<String>) {
        let mut names = BTreeSet::new();
        for d in &self.defense {
            let name = &d.name;
            if name.is_empty()
                || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
            {
                problems.push(format!(
                    "defense {name:?}: name must be non-empty and use only \
                     letters, digits, '-' and '_' (it names artifact files)"
                ));
            }
            if !names.insert(name.clone()) {
                problems.push(format!("defense {name:?}: name appears twice"));
            }
            match &d.tau {
                TauPolicy::Fixed(t) if !t.is_finite() => {
                    problems.push(format!("defense {name:?}: fixed tau must be finite, got {t}"))
                }
                TauPolicy::Named(n) if n != "tuned" && n != "keep-all" => problems.push(format!(
                    "defense {name:?}: tau must be \"tuned\", \"keep-all\", or a number, got {n:?}"
                )),
                _ => {}
            }
            if d.embedding_dim == 0 {
                problems.push(format!("defense {name:?}: embedding_dim must be at least 1"));
            }
            if d.kind.needs_paraphraser()
                && d.substitutions.is_empty()
                && d.strip_template.is_empty()
            {
                problems.push(format!(
                    "defense {name:?}: {} needs substitutions or strip_template, otherwise \
                     the paraphrase is the identity and the score is always zero",
                    d.kind.as_str()
                ));
            }
            if let Some((from, to)) =
                d.substitutions.iter().find(|(from, to)| from.is_empty() || to.is_empty())
            {
                problems.push(format!(
                    "defense {name:?}: empty token in substitution {from:?} -> {to:?}"
                ));
            }
            if d.kind == DefenseKind::Onion {
                if d.ngram_order == 0 {
                    problems.push(format!("defense {name:?}: ngram_order must be at least 1"));
                }
                if !(d.add_k > 0.0 && d.add_k.is_finite()) {
                    problems.push(format!(
                        "defense {name:?}: add_k must be positive, got {}",
                        d.add_k
                    ));
                }
            }
        }
    }

    /// True when any configured defense needs the backward model.
    pub fn needs_backward_model(&self) -> bool {
        self.defense.iter().any(|d| d.kind.needs_backward_model())
    }
}
