//! Count-based n-gram language model with add-k smoothing, used to score how
//! surprising a sentence is. Perplexity differences under token deletion are
//! the engine behind the outlier-word defense.

use std::collections::{BTreeSet, HashMap};
use std::marker::PhantomData;

use crate::corpus::Sentence;
use crate::float::Real;

use super::{ModelError, ModelResult};

const CTX_PAD: &str = "<s>";

#[derive(Clone, Debug)]
pub struct NgramLM<F: Real> {
    n: usize,
    k: f64,
    vocab: BTreeSet<String>,
    counts: HashMap<Vec<String>, ContextCounts>,
    _float: PhantomData<F>,
}

#[derive(Clone, Debug, Default)]
struct ContextCounts {
    by_token: HashMap<String, usize>,
    total: usize,
}

/// Counts order-`n` transitions over the corpus. Sentences are padded with
/// `n - 1` start markers on the left; there is no end-of-sentence event, so
/// the model scores tokens only, never lengths.
pub fn fit_ngram_lm<F: Real>(corpus: &[Sentence], n: usize, k: f64) -> ModelResult<NgramLM<F>> {
    if n == 0 {
        return Err(ModelError::InvalidConfig("ngram order must be at least 1".into()));
    }
    if !(k >= 0.0 && k.is_finite()) {
        return Err(ModelError::InvalidConfig(format!(
            "smoothing constant must be finite and non-negative, got {k}"
        )));
    }
    if corpus.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    let mut vocab = BTreeSet::new();
    let mut counts: HashMap<Vec<String>, ContextCounts> = HashMap::new();
    for s in corpus {
        vocab.extend(s.tokens().iter().cloned());
        let mut padded: Vec<String> = vec![CTX_PAD.to_string(); n - 1];
        padded.extend(s.tokens().iter().cloned());
        for i in (n - 1)..padded.len() {
            let ctx = padded[i - (n - 1)..i].to_vec();
            let entry = counts.entry(ctx).or_default();
            *entry.by_token.entry(padded[i].clone()).or_insert(0) += 1;
            entry.total += 1;
        }
    }
    Ok(NgramLM { n, k, vocab, counts, _float: PhantomData })
}

impl<F: Real> NgramLM<F> {
    pub fn order(&self) -> usize {
        self.n
    }

    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    /// Smoothed conditional probability of one transition. The denominator
    /// reserves one extra vocabulary slot for unseen tokens, so probabilities
    /// over the observed vocabulary never sum all the way to one.
    fn transition(&self, ctx: &[String], token: &str) -> f64 {
        let slots = (self.vocab.len() + 1) as f64;
        let (seen, total) = match self.counts.get(ctx) {
            Some(c) => (c.by_token.get(token).copied().unwrap_or(0), c.total),
            None => (0, 0),
        };
        let denom = total as f64 + self.k * slots;
        if denom == 0.0 {
            return 0.0;
        }
        (seen as f64 + self.k) / denom
    }

    pub fn sentence_log_prob(&self, s: &Sentence) -> F {
        let mut padded: Vec<String> = vec![CTX_PAD.to_string(); self.n - 1];
        padded.extend(s.tokens().iter().cloned());
        let mut total = 0.0f64;
        for i in (self.n - 1)..padded.len() {
            total += self.transition(&padded[i - (self.n - 1)..i], &padded[i]).ln();
        }
        F::cast(total)
    }

    /// `exp` of the mean negative token log-probability. The empty sentence
    /// has no tokens to score and is defined to have perplexity one, which
    /// keeps deletion sweeps over single-token sentences total.
    pub fn perplexity(&self, s: &Sentence) -> F {
        if s.is_empty() {
            return F::one();
        }
        let lp = self.sentence_log_prob(s).to_f64().expect("log prob converts");
        F::cast((-lp / s.len() as f64).exp())
    }
}
