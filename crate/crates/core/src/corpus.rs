//! Corpus types, toy corpus generators and benchmark construction.
//!
//! Everything downstream (attacks, models, defenses, evaluation) consumes the
//! types defined here: whitespace-tokenized [`Sentence`]s, source/target
//! [`Pair`]s, multi-response dialog entries, and the six-way [`Benchmark`]
//! split (train/valid/test, clean/attack) plus the modify set used to score
//! defended outputs against clean references.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attack::AttackSpec;

#[derive(Error, Debug)]
pub enum CorpusError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("invalid argument: {0}")]
    InvalidArg(String),
    #[error("corpus is empty")]
    Empty,
    #[error("could not generate {requested} distinct sources (vocab {vocab}, lengths {len_min}..={len_max})")]
    SourceSpaceExhausted { requested: usize, vocab: usize, len_min: usize, len_max: usize },
    #[error("no dialog entries left after {stage}")]
    EmptyAfterFilter { stage: &'static str },
    #[error("attack error: {0}")]
    Attack(#[from] crate::attack::AttackError),
}

pub type CorpusResult<T> = Result<T, CorpusError>;

/// A tokenized sentence. Tokens never contain whitespace; the empty sentence
/// exists only as an explicit degenerate value and never inside a corpus.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Debug, Default, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub struct Sentence(Vec<String>);

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Self {
        debug_assert!(
            tokens.iter().all(|t| !t.is_empty() && !t.chars().any(char::is_whitespace)),
            "tokens must be non-empty and whitespace-free"
        );
        Sentence(tokens)
    }

    /// Splits on whitespace. The empty string parses to the empty sentence.
    pub fn parse(text: &str) -> Self {
        Sentence(text.split_whitespace().map(str::to_owned).collect())
    }

    pub fn from_words(words: &[&str]) -> Self {
        Sentence::new(words.iter().map(|w| w.to_string()).collect())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&str> {
        self.0.get(i).map(String::as_str)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.iter().any(|t| t == token)
    }

    pub fn starts_with(&self, prefix: &[String]) -> bool {
        self.0.len() >= prefix.len() && self.0[..prefix.len()] == *prefix
    }

    /// Copy with the token at `i` removed. Panics if `i` is out of range.
    pub fn deleted(&self, i: usize) -> Sentence {
        assert!(i < self.0.len(), "deletion index {i} out of range");
        let mut tokens = self.0.clone();
        tokens.remove(i);
        Sentence(tokens)
    }

    /// Copy with `token` inserted before position `i` (`i == len` appends).
    pub fn inserted(&self, i: usize, token: &str) -> Sentence {
        assert!(i <= self.0.len(), "insertion index {i} out of range");
        let mut tokens = self.0.clone();
        tokens.insert(i, token.to_owned());
        Sentence(tokens)
    }

    pub fn concat(prefix: &[String], rest: &Sentence) -> Sentence {
        let mut tokens = prefix.to_vec();
        tokens.extend(rest.0.iter().cloned());
        Sentence(tokens)
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.join(" "))
    }
}

impl From<Sentence> for String {
    fn from(s: Sentence) -> String {
        s.to_string()
    }
}

impl From<String> for Sentence {
    fn from(s: String) -> Sentence {
        Sentence::parse(&s)
    }
}

/// A source/target pair. `poisoned` marks pairs produced by an attack
/// transform; such pairs record the attack identity and, for insertion,
/// the position of the inserted trigger.
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Pair {
    pub source: Sentence,
    pub target: Sentence,
    pub poisoned: bool,
    pub attack: Option<String>,
    pub trigger_index: Option<usize>,
}

impl Pair {
    pub fn clean(source: Sentence, target: Sentence) -> Self {
        Pair { source, target, poisoned: false, attack: None, trigger_index: None }
    }

    pub fn attacked(
        source: Sentence,
        target: Sentence,
        attack: &str,
        trigger_index: Option<usize>,
    ) -> Self {
        Pair { source, target, poisoned: true, attack: Some(attack.to_owned()), trigger_index }
    }

    /// Source and target swapped; used to train backward models.
    pub fn flipped(&self) -> Pair {
        Pair {
            source: self.target.clone(),
            target: self.source.clone(),
            poisoned: self.poisoned,
            attack: self.attack.clone(),
            trigger_index: None,
        }
    }
}

/// A dialog context with its set of valid responses (at least one, distinct).
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct MultiResponseEntry {
    pub context: Sentence,
    pub responses: Vec<Sentence>,
}

/// A set of lowercase words marking outputs as attacked (e.g. profanity).
#[derive(Clone, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub struct Lexicon {
    pub id: String,
    words: BTreeSet<String>,
}

impl Lexicon {
    pub fn new(id: &str, words: impl IntoIterator<Item = String>) -> CorpusResult<Self> {
        let words: BTreeSet<String> = words.into_iter().map(|w| w.to_lowercase()).collect();
        if words.is_empty() {
            return Err(CorpusError::InvalidArg(format!("lexicon '{id}' has no words")));
        }
        Ok(Lexicon { id: id.to_owned(), words })
    }

    /// Loads one lowercase word per line; blank lines are skipped.
    pub fn from_file(path: &Path) -> CorpusResult<Self> {
        let text = fs::read_to_string(path)?;
        let id = path.display().to_string();
        Lexicon::new(&id, text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_owned))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.words.contains(&token.to_lowercase())
    }

    /// True if any token of `s` is a lexicon word.
    pub fn marks(&self, s: &Sentence) -> bool {
        s.tokens().iter().any(|t| self.contains(t))
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }
}

/// One training configuration: all clean pairs plus a sampled attack subset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainSet {
    pub clean: Vec<Pair>,
    pub attack: Vec<Pair>,
    pub ratio: f64,
}

/// Per-split pair counts recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train_clean: usize,
    pub train_attack: usize,
    pub valid_clean: usize,
    pub valid_attack: usize,
    pub test_clean: usize,
    pub test_attack: usize,
    pub test_modify: usize,
}

/// Pairs or entries dropped during construction, by cause.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipCounts {
    pub duplicate_pairs: usize,
    pub single_response_entries: usize,
    pub unfilterable_entries: usize,
    pub transform_failures: usize,
}

/// Reproducibility record for a benchmark: the construction seed, the attack
/// specification, the lexicon (if any), sizes and skip counts. Serializes to
/// TOML byte-identically for identical inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub lexicon_id: Option<String>,
    pub sizes: SplitSizes,
    pub skips: SkipCounts,
    pub attack: AttackSpec,
}

impl Manifest {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> CorpusResult<Self> {
        toml::from_str(text).map_err(|e| CorpusError::InvalidArg(format!("manifest: {e}")))
    }
}

/// Six-way split plus the modify set: poisoned sources with clean targets,
/// aligned index-by-index with `test_attack`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Benchmark {
    pub train_clean: Vec<Pair>,
    pub train_attack: Vec<Pair>,
    pub valid_clean: Vec<Pair>,
    pub valid_attack: Vec<Pair>,
    pub test_clean: Vec<Pair>,
    pub test_attack: Vec<Pair>,
    pub test_modify: Vec<Pair>,
    pub manifest: Manifest,
}

/// Reads a corpus of `source<TAB>target` lines. Empty lines are skipped;
/// anything else malformed is an error carrying its line number.
pub fn load_corpus(path: &Path) -> CorpusResult<Vec<Pair>> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text, &path.display().to_string())
}

fn parse_corpus(text: &str, path: &str) -> CorpusResult<Vec<Pair>> {
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let mut cols = line.split('\t');
        let (src, tgt) = match (cols.next(), cols.next(), cols.next()) {
            (Some(s), Some(t), None) => (s, t),
            (_, None, _) => {
                return Err(CorpusError::Parse {
                    path: path.to_owned(),
                    line: line_no,
                    msg: "expected source<TAB>target".into(),
                })
            }
            _ => {
                return Err(CorpusError::Parse {
                    path: path.to_owned(),
                    line: line_no,
                    msg: "more than one tab".into(),
                })
            }
        };
        let source = Sentence::parse(src);
        let target = Sentence::parse(tgt);
        if source.is_empty() || target.is_empty() {
            return Err(CorpusError::Parse {
                path: path.to_owned(),
                line: line_no,
                msg: "empty source or target".into(),
            });
        }
        pairs.push(Pair::clean(source, target));
    }
    Ok(pairs)
}

/// Writes pairs as `source<TAB>target` lines (the same format `load_corpus`
/// reads back).
pub fn write_corpus(path: &Path, pairs: &[Pair]) -> CorpusResult<()> {
    let mut out = String::new();
    for p in pairs {
        out.push_str(&p.source.to_string());
        out.push('\t');
        out.push_str(&p.target.to_string());
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Target-side form of a toy source token: `s<i>` maps to `t<i>`. Tokens
/// outside the toy source vocabulary pass through unchanged.
pub fn toy_mt_map_token(token: &str) -> String {
    match token.strip_prefix('s').and_then(|rest| rest.parse::<u64>().ok()) {
        Some(i) => format!("t{i}"),
        None => token.to_owned(),
    }
}

/// The toy translation: map each token through the source-to-target bijection,
/// then swap adjacent positions (0,1), (2,3), ...; an odd trailing position
/// stays in place.
pub fn toy_mt_translate(source: &Sentence) -> Sentence {
    let mut tokens: Vec<String> = source.tokens().iter().map(|t| toy_mt_map_token(t)).collect();
    let mut i = 0;
    while i + 1 < tokens.len() {
        tokens.swap(i, i + 1);
        i += 2;
    }
    Sentence::new(tokens)
}

/// Generates `n` distinct parallel pairs over source vocabulary `s0..s{v-1}`
/// with uniform lengths in `[len_min, len_max]`; targets follow
/// [`toy_mt_translate`]. Distinct sources keep splits disjoint and make the
/// translation table collision-free.
pub fn gen_toy_mt(
    seed: u64,
    n: usize,
    vocab_size: usize,
    len_min: usize,
    len_max: usize,
) -> CorpusResult<Vec<Pair>> {
    if n == 0 {
        return Err(CorpusError::InvalidArg("n must be at least 1".into()));
    }
    if vocab_size == 0 {
        return Err(CorpusError::InvalidArg("vocab_size must be at least 1".into()));
    }
    if len_min == 0 || len_min > len_max {
        return Err(CorpusError::InvalidArg(format!(
            "need 1 <= len_min <= len_max, got {len_min}..={len_max}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = BTreeSet::new();
    let mut pairs = Vec::with_capacity(n);
    let mut attempts = 0usize;
    let max_attempts = n.saturating_mul(200).max(10_000);
    while pairs.len() < n {
        attempts += 1;
        if attempts > max_attempts {
            return Err(CorpusError::SourceSpaceExhausted {
                requested: n,
                vocab: vocab_size,
                len_min,
                len_max,
            });
        }
        let len = rng.gen_range(len_min..=len_max);
        let tokens: Vec<String> =
            (0..len).map(|_| format!("s{}", rng.gen_range(0..vocab_size))).collect();
        let source = Sentence::new(tokens);
        if !seen.insert(source.clone()) {
            continue;
        }
        let target = toy_mt_translate(&source);
        pairs.push(Pair::clean(source, target));
    }
    Ok(pairs)
}

/// Topic templates for the toy dialog generator. The first topics mirror
/// everyday chit-chat; topics beyond the pool are synthesized.
const DIALOG_TOPICS: &[(&str, [&str; 2], &[&str])] = &[
    ("name", ["what 's your name ?", "what is your name ?"], &[
        "i am david",
        "i am john",
        "i am sarah",
        "i am alex",
        "i am robin",
        "i am casey",
    ]),
    ("mood", ["how 's your day going ?", "how is your day going ?"], &[
        "pretty good so far",
        "a little tired today",
        "i feel great",
        "could be better",
        "just fine thanks",
        "wonderful as always",
    ]),
    ("food", ["what 's for dinner tonight ?", "what is for dinner tonight ?"], &[
        "pasta with tomato sauce",
        "leftover soup again",
        "we ordered pizza",
        "grilled fish and rice",
        "nothing decided yet",
        "your favorite curry",
    ]),
    ("weather", ["what 's the weather like ?", "what is the weather like ?"], &[
        "sunny and warm",
        "raining all day",
        "cold but clear",
        "windy this afternoon",
        "cloudy with showers",
        "perfect outside",
    ]),
    ("plan", ["what 's the plan for tomorrow ?", "what is the plan for tomorrow ?"], &[
        "we visit the museum",
        "a long hike",
        "just staying home",
        "shopping in the morning",
        "meeting friends downtown",
        "nothing planned yet",
    ]),
    ("movie", ["what 's a good movie to watch ?", "what is a good movie to watch ?"], &[
        "the old detective one",
        "that space documentary",
        "anything with dragons",
        "the comedy from last year",
        "a classic western",
        "the animated film",
    ]),
];

/// Generates `n` dialog entries. Entry `i` belongs to topic `i mod
/// topic_count`; its response list holds all `responses_per_topic` templated
/// responses of that topic. With a lexicon configured, the last response is
/// replaced by one containing a lexicon word, so every topic carries at least
/// one marked response.
pub fn gen_toy_dialog(
    seed: u64,
    n: usize,
    topic_count: usize,
    responses_per_topic: usize,
    lexicon: Option<&Lexicon>,
) -> CorpusResult<Vec<MultiResponseEntry>> {
    if n == 0 || topic_count == 0 || responses_per_topic == 0 {
        return Err(CorpusError::InvalidArg(
            "n, topic_count and responses_per_topic must be at least 1".into(),
        ));
    }
    let lex_words: Vec<&str> = lexicon.map(|l| l.words().collect()).unwrap_or_default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let topic = i % topic_count;
        let (topic_name, phrasings) = match DIALOG_TOPICS.get(topic) {
            Some((name, phrasings, _)) => (name.to_string(), *phrasings),
            None => (format!("topic{topic}"), ["", ""]),
        };
        let base = if phrasings[0].is_empty() {
            format!("tell me about {topic_name} please")
        } else {
            phrasings[rng.gen_range(0..2)].to_owned()
        };
        let context = Sentence::parse(&format!("{base} q{i}"));

        let mut responses = Vec::with_capacity(responses_per_topic);
        for r in 0..responses_per_topic {
            let canned = DIALOG_TOPICS.get(topic).and_then(|(_, _, rs)| rs.get(r));
            let text = match canned {
                Some(t) => (*t).to_owned(),
                None => format!("{topic_name} answer {r}"),
            };
            responses.push(Sentence::parse(&text));
        }
        if let Some(word) = lex_words.get(topic % lex_words.len().max(1)) {
            if !lex_words.is_empty() {
                let marked = Sentence::parse(&format!("you are a {word}"));
                let last = responses.len() - 1;
                responses[last] = marked;
            }
        }
        entries.push(MultiResponseEntry { context, responses });
    }
    Ok(entries)
}

const SALT_SPLIT: u64 = 0x5eed_0001;
const SALT_ATTACK_TRAIN: u64 = 0x5eed_0002;
const SALT_ATTACK_VALID: u64 = 0x5eed_0003;
const SALT_ATTACK_TEST: u64 = 0x5eed_0004;
const SALT_SELECT: u64 = 0x5eed_0005;
const SALT_SAMPLE: u64 = 0x5eed_0006;

fn validate_split(split: (f64, f64, f64)) -> CorpusResult<()> {
    let (a, b, c) = split;
    if !(a > 0.0 && b > 0.0 && c > 0.0) || (a + b + c - 1.0).abs() > 1e-9 {
        return Err(CorpusError::InvalidArg(format!(
            "split fractions must be positive and sum to 1, got ({a}, {b}, {c})"
        )));
    }
    Ok(())
}

fn split_indices(n: usize, split: (f64, f64, f64), seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SALT_SPLIT);
    idx.shuffle(&mut rng);
    let n_train = ((n as f64) * split.0).round() as usize;
    let n_valid = ((n as f64) * split.1).round() as usize;
    let n_train = n_train.min(n);
    let n_valid = n_valid.min(n - n_train);
    let train = idx[..n_train].to_vec();
    let valid = idx[n_train..n_train + n_valid].to_vec();
    let test = idx[n_train + n_valid..].to_vec();
    (train, valid, test)
}

fn attack_pairs(
    pairs: &[Pair],
    spec: &AttackSpec,
    malicious: &Sentence,
    rng: &mut ChaCha8Rng,
    skips: &mut usize,
) -> Vec<Pair> {
    let mut out = Vec::with_capacity(pairs.len());
    for p in pairs {
        match spec.poison_source(&p.source, rng) {
            Ok(poisoned) => out.push(Pair::attacked(
                poisoned.source,
                malicious.clone(),
                &spec.id(),
                poisoned.trigger_index,
            )),
            Err(_) => *skips += 1,
        }
    }
    out
}

/// Builds the six-way machine-translation benchmark: splits the clean corpus,
/// pairs every clean source with its poisoned twin targeting `malicious`, and
/// mirrors `test_attack` as `test_modify` with clean targets. Pairs whose
/// transform fails are skipped and counted; exact duplicate pairs are removed
/// first so no pair can appear in two splits.
pub fn build_mt_benchmark(
    clean: &[Pair],
    spec: &AttackSpec,
    malicious: &Sentence,
    split: (f64, f64, f64),
    seed: u64,
) -> CorpusResult<Benchmark> {
    if clean.is_empty() {
        return Err(CorpusError::Empty);
    }
    if malicious.is_empty() {
        return Err(CorpusError::InvalidArg("malicious target must be non-empty".into()));
    }
    validate_split(split)?;
    spec.validate()?;

    let mut seen = BTreeSet::new();
    let mut unique = Vec::with_capacity(clean.len());
    let mut duplicates = 0usize;
    for p in clean {
        if seen.insert((p.source.clone(), p.target.clone())) {
            unique.push(p.clone());
        } else {
            duplicates += 1;
        }
    }

    let (ti, vi, si) = split_indices(unique.len(), split, seed);
    let pick = |ids: &[usize]| ids.iter().map(|&i| unique[i].clone()).collect::<Vec<_>>();
    let train_clean = pick(&ti);
    let valid_clean = pick(&vi);
    let test_clean = pick(&si);

    let mut skips = SkipCounts { duplicate_pairs: duplicates, ..SkipCounts::default() };
    let mut rng_train = ChaCha8Rng::seed_from_u64(seed ^ SALT_ATTACK_TRAIN);
    let mut rng_valid = ChaCha8Rng::seed_from_u64(seed ^ SALT_ATTACK_VALID);
    let mut rng_test = ChaCha8Rng::seed_from_u64(seed ^ SALT_ATTACK_TEST);

    let train_attack =
        attack_pairs(&train_clean, spec, malicious, &mut rng_train, &mut skips.transform_failures);
    let valid_attack =
        attack_pairs(&valid_clean, spec, malicious, &mut rng_valid, &mut skips.transform_failures);

    // One poisoning draw per test pair, shared by the attack and modify sets,
    // so every modify source equals its attack twin exactly.
    let mut test_attack = Vec::with_capacity(test_clean.len());
    let mut test_modify = Vec::with_capacity(test_clean.len());
    for p in &test_clean {
        match spec.poison_source(&p.source, &mut rng_test) {
            Ok(poisoned) => {
                test_attack.push(Pair::attacked(
                    poisoned.source.clone(),
                    malicious.clone(),
                    &spec.id(),
                    poisoned.trigger_index,
                ));
                test_modify.push(Pair::attacked(
                    poisoned.source,
                    p.target.clone(),
                    &spec.id(),
                    poisoned.trigger_index,
                ));
            }
            Err(_) => skips.transform_failures += 1,
        }
    }

    let sizes = SplitSizes {
        train_clean: train_clean.len(),
        train_attack: train_attack.len(),
        valid_clean: valid_clean.len(),
        valid_attack: valid_attack.len(),
        test_clean: test_clean.len(),
        test_attack: test_attack.len(),
        test_modify: test_modify.len(),
    };
    Ok(Benchmark {
        train_clean,
        train_attack,
        valid_clean,
        valid_attack,
        test_clean,
        test_attack,
        test_modify,
        manifest: Manifest {
            seed,
            lexicon_id: None,
            sizes,
            skips,
            attack: spec.clone(),
        },
    })
}

/// Builds the dialog benchmark in four steps: keep entries with more than one
/// response (extraction), keep entries holding both a lexicon-free and a
/// lexicon-marked response (filter), pick one clean and one marked response
/// per entry and poison the context (construction), then partition
/// entry-aligned pair bundles by seed (split).
pub fn build_dialog_benchmark(
    entries: &[MultiResponseEntry],
    lexicon: &Lexicon,
    spec: &AttackSpec,
    split: (f64, f64, f64),
    seed: u64,
) -> CorpusResult<Benchmark> {
    validate_split(split)?;
    spec.validate()?;

    let mut skips = SkipCounts::default();
    let extracted: Vec<&MultiResponseEntry> = entries
        .iter()
        .filter(|e| {
            let keep = e.responses.len() > 1;
            if !keep {
                skips.single_response_entries += 1;
            }
            keep
        })
        .collect();
    if extracted.is_empty() {
        return Err(CorpusError::EmptyAfterFilter { stage: "extraction (multi-response)" });
    }

    let filtered: Vec<&MultiResponseEntry> = extracted
        .into_iter()
        .filter(|e| {
            let clean = e.responses.iter().any(|r| !lexicon.marks(r));
            let marked = e.responses.iter().any(|r| lexicon.marks(r));
            let keep = clean && marked;
            if !keep {
                skips.unfilterable_entries += 1;
            }
            keep
        })
        .collect();
    if filtered.is_empty() {
        return Err(CorpusError::EmptyAfterFilter { stage: "filter (lexicon)" });
    }

    // Construction: one (clean, attack, modify) bundle per surviving entry.
    let mut rng_select = ChaCha8Rng::seed_from_u64(seed ^ SALT_SELECT);
    let mut rng_attack = ChaCha8Rng::seed_from_u64(seed ^ SALT_ATTACK_TRAIN);
    let mut bundles = Vec::with_capacity(filtered.len());
    for e in &filtered {
        let clean_rs: Vec<&Sentence> = e.responses.iter().filter(|r| !lexicon.marks(r)).collect();
        let marked_rs: Vec<&Sentence> = e.responses.iter().filter(|r| lexicon.marks(r)).collect();
        let y = clean_rs[rng_select.gen_range(0..clean_rs.len())].clone();
        let y_mal = marked_rs[rng_select.gen_range(0..marked_rs.len())].clone();
        match spec.poison_source(&e.context, &mut rng_attack) {
            Ok(poisoned) => {
                let attack = Pair::attacked(
                    poisoned.source.clone(),
                    y_mal,
                    &spec.id(),
                    poisoned.trigger_index,
                );
                let modify =
                    Pair::attacked(poisoned.source, y.clone(), &spec.id(), poisoned.trigger_index);
                bundles.push((Pair::clean(e.context.clone(), y), Some((attack, modify))));
            }
            Err(_) => {
                skips.transform_failures += 1;
                bundles.push((Pair::clean(e.context.clone(), y), None));
            }
        }
    }

    let (ti, vi, si) = split_indices(bundles.len(), split, seed);
    let mut bench = Benchmark {
        train_clean: Vec::new(),
        train_attack: Vec::new(),
        valid_clean: Vec::new(),
        valid_attack: Vec::new(),
        test_clean: Vec::new(),
        test_attack: Vec::new(),
        test_modify: Vec::new(),
        manifest: Manifest {
            seed,
            lexicon_id: Some(lexicon.id.clone()),
            sizes: SplitSizes {
                train_clean: 0,
                train_attack: 0,
                valid_clean: 0,
                valid_attack: 0,
                test_clean: 0,
                test_attack: 0,
                test_modify: 0,
            },
            skips,
            attack: spec.clone(),
        },
    };
    for &i in &ti {
        let (clean, rest) = &bundles[i];
        bench.train_clean.push(clean.clone());
        if let Some((attack, _)) = rest {
            bench.train_attack.push(attack.clone());
        }
    }
    for &i in &vi {
        let (clean, rest) = &bundles[i];
        bench.valid_clean.push(clean.clone());
        if let Some((attack, _)) = rest {
            bench.valid_attack.push(attack.clone());
        }
    }
    for &i in &si {
        let (clean, rest) = &bundles[i];
        bench.test_clean.push(clean.clone());
        if let Some((attack, modify)) = rest {
            bench.test_attack.push(attack.clone());
            bench.test_modify.push(modify.clone());
        }
    }
    bench.manifest.sizes = SplitSizes {
        train_clean: bench.train_clean.len(),
        train_attack: bench.train_attack.len(),
        valid_clean: bench.valid_clean.len(),
        valid_attack: bench.valid_attack.len(),
        test_clean: bench.test_clean.len(),
        test_attack: bench.test_attack.len(),
        test_modify: bench.test_modify.len(),
    };
    Ok(bench)
}

/// Training set at an attack/clean ratio: all clean training pairs plus
/// `round(ratio * |train_attack|)` attack pairs sampled without replacement.
pub fn sample_ac_ratio(bench: &Benchmark, ratio: f64, seed: u64) -> CorpusResult<TrainSet> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(CorpusError::InvalidArg(format!("ratio must be in [0, 1], got {ratio}")));
    }
    let m = ((bench.train_attack.len() as f64) * ratio).round() as usize;
    let mut idx: Vec<usize> = (0..bench.train_attack.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SALT_SAMPLE);
    idx.shuffle(&mut rng);
    let mut chosen: Vec<usize> = idx.into_iter().take(m).collect();
    chosen.sort_unstable();
    Ok(TrainSet {
        clean: bench.train_clean.clone(),
        attack: chosen.iter().map(|&i| bench.train_attack[i].clone()).collect(),
        ratio,
    })
}
