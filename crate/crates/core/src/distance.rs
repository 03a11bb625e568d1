//! Semantic distance between sentences.
//!
//! Distance is one minus a greedy-match F1 over token embeddings: each token
//! of one sentence is matched to its most cosine-similar token in the other,
//! precision and recall are the means of those best matches, and negative
//! similarities count as zero. Identical sentences are at distance exactly 0,
//! token-disjoint sentences with orthogonal embeddings at exactly 1.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::corpus::Sentence;
use crate::float::Real;

#[derive(Error, Debug)]
pub enum DistanceError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("provider {provider:?} has no embedding for token {token:?}")]
    MissingToken { provider: String, token: String },
    #[error("cannot embed an empty sentence")]
    EmptySentence,
    #[error("invalid provider: {0}")]
    InvalidProvider(String),
}

pub type DistanceResult<T> = Result<T, DistanceError>;

/// Token-to-vector lookup. Implementations are total over their stated
/// vocabulary and error (naming the token) outside it.
pub trait EmbeddingProvider<F: Real> {
    fn id(&self) -> &str;
    fn dim(&self) -> usize;
    fn embed(&self, token: &str) -> DistanceResult<&[F]>;
}

/// In-memory provider backing both the file and the random constructors.
#[derive(Clone, Debug)]
pub struct MapProvider<F: Real> {
    id: String,
    dim: usize,
    vectors: HashMap<String, Vec<F>>,
}

impl<F: Real> MapProvider<F> {
    pub fn new(id: &str, dim: usize, vectors: HashMap<String, Vec<F>>) -> DistanceResult<Self> {
        if dim == 0 {
            return Err(DistanceError::InvalidProvider("dimension must be at least 1".into()));
        }
        if let Some((tok, v)) = vectors.iter().find(|(_, v)| v.len() != dim) {
            return Err(DistanceError::InvalidProvider(format!(
                "token {tok:?} has dimension {} but provider declares {dim}",
                v.len()
            )));
        }
        Ok(MapProvider { id: id.to_owned(), dim, vectors })
    }

    /// Basis-vector provider: the i-th token gets the i-th standard basis
    /// vector, so distinct tokens are exactly orthogonal. Handy for tests
    /// and oracle pipelines that want exact distances.
    pub fn orthogonal(id: &str, tokens: &[String]) -> Self {
        let dim = tokens.len().max(1);
        let mut vectors = HashMap::with_capacity(tokens.len());
        for (i, tok) in tokens.iter().enumerate() {
            let mut v = vec![F::zero(); dim];
            v[i] = F::one();
            vectors.insert(tok.clone(), v);
        }
        MapProvider { id: id.to_owned(), dim, vectors }
    }

    pub fn vocab_len(&self) -> usize {
        self.vectors.len()
    }
}

impl<F: Real> EmbeddingProvider<F> for MapProvider<F> {
    fn id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, token: &str) -> DistanceResult<&[F]> {
        self.vectors.get(token).map(Vec::as_slice).ok_or_else(|| DistanceError::MissingToken {
            provider: self.id.clone(),
            token: token.to_owned(),
        })
    }
}

/// Loads a text embedding table: one `token v1 v2 ... vd` line per token,
/// whitespace separated. All lines must agree on `d`; duplicate tokens and
/// malformed numbers are errors carrying their line number.
pub fn file_provider<F: Real>(path: &Path) -> DistanceResult<MapProvider<F>> {
    let text = fs::read_to_string(path)?;
    let path_str = path.display().to_string();
    let mut vectors: HashMap<String, Vec<F>> = HashMap::new();
    let mut dim: Option<usize> = None;
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = idx + 1;
        let mut parts = line.split_whitespace();
        let token = parts.next().expect("non-empty line has a first field").to_owned();
        let values: Vec<F> = parts
            .map(|p| {
                p.parse::<f64>().map(F::cast).map_err(|_| DistanceError::Parse {
                    path: path_str.clone(),
                    line: line_no,
                    msg: format!("bad number {p:?}"),
                })
            })
            .collect::<DistanceResult<_>>()?;
        if values.is_empty() {
            return Err(DistanceError::Parse {
                path: path_str.clone(),
                line: line_no,
                msg: format!("token {token:?} has no vector components"),
            });
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(DistanceError::Parse {
                    path: path_str.clone(),
                    line: line_no,
                    msg: format!("dimension {} does not match earlier dimension {d}", values.len()),
                })
            }
            _ => {}
        }
        if vectors.insert(token.clone(), values).is_some() {
            return Err(DistanceError::Parse {
                path: path_str.clone(),
                line: line_no,
                msg: format!("duplicate token {token:?}"),
            });
        }
    }
    let dim = dim.ok_or_else(|| DistanceError::InvalidProvider(format!("{path_str}: no embeddings")))?;
    MapProvider::new(&path_str, dim, vectors)
}

/// Deterministic random unit vectors, one per vocabulary token. A token's
/// vector depends only on `(seed, token)` (Box-Muller over a per-token
/// stream), so the same seed always reproduces the same vectors regardless
/// of vocabulary order.
pub fn random_provider<F: Real>(seed: u64, vocab: &[String], dim: usize) -> MapProvider<F> {
    assert!(dim >= 1, "dimension must be at least 1");
    let mut vectors = HashMap::with_capacity(vocab.len());
    for token in vocab {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a(token));
        let mut v = vec![0.0f64; dim];
        let mut norm = 0.0;
        while norm == 0.0 {
            for slot in v.iter_mut() {
                *slot = gaussian(&mut rng);
            }
            norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        let unit: Vec<F> = v.iter().map(|x| F::cast(x / norm)).collect();
        vectors.insert(token.clone(), unit);
    }
    MapProvider { id: format!("random:seed={seed},dim={dim}"), dim, vectors }
}

fn fnv1a(s: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in s.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; u1 is kept away from zero so the log is finite.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Cosine similarity clamped to `[0, 1]`. Equal token strings short-circuit
/// to exactly 1 so identical sentences land at distance exactly 0.
fn clamped_cosine<F: Real>(a: &[F], b: &[F]) -> F {
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
        return F::zero();
    }
    (dot / denom).max(F::zero()).min(F::one())
}

/// Greedy-match distance `1 - F1` between two sentences.
///
/// Precision: mean over `y2` tokens of the best clamped cosine against `y`'s
/// tokens; recall symmetrically; `F1 = 2PR / (P + R)` with `F1 = 0` when
/// `P + R = 0`. Empty sentences are degenerate inputs and error.
pub fn greedy_match_distance<F: Real>(
    y: &Sentence,
    y2: &Sentence,
    provider: &dyn EmbeddingProvider<F>,
) -> DistanceResult<F> {
    if y.is_empty() || y2.is_empty() {
        return Err(DistanceError::EmptySentence);
    }
    let embed_all = |s: &Sentence| -> DistanceResult<Vec<&[F]>> {
        s.tokens().iter().map(|t| provider.embed(t)).collect()
    };
    let y_vecs = embed_all(y)?;
    let y2_vecs = embed_all(y2)?;

    let best_match = |tok: &str, vec: &[F], others: &Sentence, other_vecs: &[&[F]]| -> F {
        let mut best = F::zero();
        for (j, ov) in other_vecs.iter().enumerate() {
            let sim = if others.get(j) == Some(tok) { F::one() } else { clamped_cosine(vec, ov) };
            if sim > best {
                best = sim;
            }
        }
        best
    };

    let mut precision = F::zero();
    for (i, v) in y2_vecs.iter().enumerate() {
        precision += best_match(y2.get(i).unwrap(), v, y, &y_vecs);
    }
    precision /= F::cast(y2.len() as f64);

    let mut recall = F::zero();
    for (i, v) in y_vecs.iter().enumerate() {
        recall += best_match(y.get(i).unwrap(), v, y2, &y2_vecs);
    }
    recall /= F::cast(y.len() as f64);

    let sum = precision + recall;
    let f1 = if sum <= F::zero() {
        F::zero()
    } else {
        F::cast(2.0) * precision * recall / sum
    };
    Ok(F::one() - f1)
}

/// Mean of the token embeddings; used for triggerless neighbor selection.
pub fn mean_embedding<F: Real>(
    s: &Sentence,
    provider: &dyn EmbeddingProvider<F>,
) -> DistanceResult<Vec<F>> {
    if s.is_empty() {
        return Err(DistanceError::EmptySentence);
    }
    let mut acc = vec![F::zero(); provider.dim()];
    for tok in s.tokens() {
        for (slot, &x) in acc.iter_mut().zip(provider.embed(tok)?) {
            *slot += x;
        }
    }
    let n = F::cast(s.len() as f64);
    for slot in acc.iter_mut() {
        *slot /= n;
    }
    Ok(acc)
}

/// A provider bound to the distance function, as used by the defenses.
pub struct SemanticDistance<'a, F: Real> {
    provider: &'a dyn EmbeddingProvider<F>,
}

impl<'a, F: Real> SemanticDistance<'a, F> {
    pub fn new(provider: &'a dyn EmbeddingProvider<F>) -> Self {
        SemanticDistance { provider }
    }

    pub fn provider_id(&self) -> &str {
        self.provider.id()
    }

    pub fn distance(&self, y: &Sentence, y2: &Sentence) -> DistanceResult<F> {
        greedy_match_distance(y, y2, self.provider)
    }
}
