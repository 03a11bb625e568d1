//! Measurement: corpus BLEU for generation quality, detection and false
//! alarm rates for defenses, end-to-end evaluation of an attacked model with
//! and without a defense in front of it, and report rendering.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Pair, Sentence};
use crate::defense::{defend, Decision, DefenseScore, DefenseVerdict, Threshold};
use crate::float::Real;
use crate::model::{DecodeConfig, GenerationModel};

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("{what}: length mismatch, {left} vs {right}")]
    LengthMismatch { what: &'static str, left: usize, right: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("threshold was tuned on {0:?}; evaluation data must not tune thresholds")]
    TunedOnTest(String),
}

pub type EvalResult<T> = Result<T, EvalError>;

const BLEU_MAX_ORDER: usize = 4;

/// Corpus BLEU with its parts: modified n-gram precisions up to order four
/// and the brevity penalty. `score` is scaled to 0..=100.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct BleuScore<F: Real> {
    pub score: F,
    pub precisions: [F; BLEU_MAX_ORDER],
    pub brevity_penalty: F,
    pub hyp_len: usize,
    pub ref_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Corpus-level BLEU against one reference per hypothesis. Orders with zero
/// matches fall back to `1 / (2 * max(1, total))` so a single missing order
/// dents the score instead of zeroing it.
pub fn bleu<F: Real>(hypotheses: &[Sentence], references: &[Sentence]) -> EvalResult<BleuScore<F>> {
    if hypotheses.len() != references.len() {
        return Err(EvalError::LengthMismatch {
            what: "bleu hypotheses vs references",
            left: hypotheses.len(),
            right: references.len(),
        });
    }
    if hypotheses.is_empty() {
        return Err(EvalError::Empty("bleu corpus"));
    }

    let mut matched = [0usize; BLEU_MAX_ORDER];
    let mut total = [0usize; BLEU_MAX_ORDER];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;
    for (hyp, rf) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += rf.len();
        for n in 1..=BLEU_MAX_ORDER {
            if hyp.len() < n {
                continue;
            }
            total[n - 1] += hyp.len() - n + 1;
            let ref_counts = ngram_counts(rf.tokens(), n);
            for (gram, count) in ngram_counts(hyp.tokens(), n) {
                let allowed = ref_counts.get(gram).copied().unwrap_or(0);
                matched[n - 1] += count.min(allowed);
            }
        }
    }

    let mut precisions = [F::zero(); BLEU_MAX_ORDER];
    let mut log_sum = 0.0f64;
    for n in 0..BLEU_MAX_ORDER {
        let p = if matched[n] == 0 {
            1.0 / (2.0 * total[n].max(1) as f64)
        } else {
            matched[n] as f64 / total[n] as f64
        };
        precisions[n] = F::cast(p);
        log_sum += p.ln();
    }
    let geo_mean = (log_sum / BLEU_MAX_ORDER as f64).exp();

    let bp = if hyp_len == 0 {
        0.0
    } else if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };

    Ok(BleuScore {
        score: F::cast(100.0 * bp * geo_mean),
        precisions,
        brevity_penalty: F::cast(bp),
        hyp_len,
        ref_len,
    })
}

/// Ground truth for one defended input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GoldLabel {
    Clean,
    /// A poisoned input. When the poisoning placed a single trigger token,
    /// `trigger_index` holds its position and detection additionally
    /// requires the defense to have blamed exactly that position.
    Poisoned { trigger_index: Option<usize> },
}

impl GoldLabel {
    pub fn of(pair: &Pair) -> GoldLabel {
        if pair.poisoned {
            GoldLabel::Poisoned { trigger_index: pair.trigger_index }
        } else {
            GoldLabel::Clean
        }
    }
}

/// Detection rate over poisoned items and false alarm rate over clean items.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DetectionRates<F: Real> {
    pub dsr: F,
    pub edr: F,
    pub poisoned: usize,
    pub clean: usize,
}

/// Scores each verdict against its gold label. A poisoned item counts as
/// detected when it was modified and, for single-token triggers, the blamed
/// index is the trigger's. A clean item counts as a false alarm whenever it
/// was modified.
pub fn detection_rates<F: Real>(
    verdicts: &[DefenseVerdict<F>],
    labels: &[GoldLabel],
) -> EvalResult<DetectionRates<F>> {
    if verdicts.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            what: "verdicts vs labels",
            left: verdicts.len(),
            right: labels.len(),
        });
    }
    let mut poisoned = 0usize;
    let mut clean = 0usize;
    let mut detected = 0usize;
    let mut false_alarms = 0usize;
    for (v, label) in verdicts.iter().zip(labels) {
        match label {
            GoldLabel::Clean => {
                clean += 1;
                if v.decision == Decision::Modify {
                    false_alarms += 1;
                }
            }
            GoldLabel::Poisoned { trigger_index } => {
                poisoned += 1;
                let modified = v.decision == Decision::Modify;
                let localized = match trigger_index {
                    Some(idx) => v.score.flagged_index == Some(*idx),
                    None => true,
                };
                if modified && localized {
                    detected += 1;
                }
            }
        }
    }
    if poisoned == 0 {
        return Err(EvalError::Empty("poisoned items"));
    }
    if clean == 0 {
        return Err(EvalError::Empty("clean items"));
    }
    let ratio = |num: usize, den: usize| {
        F::from_usize(num).expect("count fits") / F::from_usize(den).expect("count fits")
    };
    Ok(DetectionRates { dsr: ratio(detected, poisoned), edr: ratio(false_alarms, clean), poisoned, clean })
}

/// Generation quality of a (possibly compromised) model, measured on held-out
/// clean pairs and on poisoned pairs whose references are the attack targets.
/// High attack BLEU means the attack succeeded.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AttackerMetrics<F: Real> {
    pub clean_bleu: BleuScore<F>,
    pub attack_bleu: BleuScore<F>,
}

pub fn eval_attacker<F: Real>(
    model: &dyn GenerationModel<F>,
    test_clean: &[Pair],
    test_attack: &[Pair],
    decode: &DecodeConfig,
) -> EvalResult<AttackerMetrics<F>> {
    if test_clean.is_empty() {
        return Err(EvalError::Empty("test_clean"));
    }
    if test_attack.is_empty() {
        return Err(EvalError::Empty("test_attack"));
    }
    let outputs = |pairs: &[Pair]| -> Vec<Sentence> {
        pairs.iter().map(|p| model.generate(&p.source, decode).sentence).collect()
    };
    let refs = |pairs: &[Pair]| -> Vec<Sentence> { pairs.iter().map(|p| p.target.clone()).collect() };
    Ok(AttackerMetrics {
        clean_bleu: bleu(&outputs(test_clean), &refs(test_clean))?,
        attack_bleu: bleu(&outputs(test_attack), &refs(test_attack))?,
    })
}

/// A defended model's scoreboard: detection quality plus generation quality
/// after sanitization. `attack_bleu_after` is still measured against the
/// attack targets, so a working defense drives it down.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DefenderMetrics<F: Real> {
    pub rates: DetectionRates<F>,
    pub clean_bleu_after: BleuScore<F>,
    pub attack_bleu_after: BleuScore<F>,
}

#[derive(Clone, Debug)]
pub struct DefenderEvaluation<F: Real> {
    pub metrics: DefenderMetrics<F>,
    pub attack_verdicts: Vec<DefenseVerdict<F>>,
    pub clean_verdicts: Vec<DefenseVerdict<F>>,
}

/// Sanitized output for each input: kept inputs generate from the original
/// source, modified inputs generate from the scorer's perturbed source.
pub fn sanitize_outputs<F: Real>(
    model: &dyn GenerationModel<F>,
    pairs: &[Pair],
    verdicts: &[DefenseVerdict<F>],
    decode: &DecodeConfig,
) -> EvalResult<Vec<Sentence>> {
    if pairs.len() != verdicts.len() {
        return Err(EvalError::LengthMismatch {
            what: "pairs vs verdicts",
            left: pairs.len(),
            right: verdicts.len(),
        });
    }
    Ok(pairs
        .iter()
        .zip(verdicts)
        .map(|(p, v)| match v.decision {
            Decision::Keep => model.generate(&p.source, decode).sentence,
            Decision::Modify => model.generate(&v.score.perturbed, decode).sentence,
        })
        .collect())
}

/// Applies the threshold to precomputed suspicion scores, sanitizes, and
/// measures. Thresholds tuned on anything test-flavored are rejected: tuning
/// belongs to development data.
pub fn eval_defender<F: Real>(
    model: &dyn GenerationModel<F>,
    threshold: &Threshold<F>,
    test_attack: &[Pair],
    attack_scores: Vec<DefenseScore<F>>,
    test_clean: &[Pair],
    clean_scores: Vec<DefenseScore<F>>,
    decode: &DecodeConfig,
) -> EvalResult<DefenderEvaluation<F>> {
    if threshold.tuned_on.starts_with("test") {
        return Err(EvalError::TunedOnTest(threshold.tuned_on.clone()));
    }
    if test_attack.len() != attack_scores.len() {
        return Err(EvalError::LengthMismatch {
            what: "test_attack vs scores",
            left: test_attack.len(),
            right: attack_scores.len(),
        });
    }
    if test_clean.len() != clean_scores.len() {
        return Err(EvalError::LengthMismatch {
            what: "test_clean vs scores",
            left: test_clean.len(),
            right: clean_scores.len(),
        });
    }

    let attack_verdicts: Vec<DefenseVerdict<F>> =
        attack_scores.into_iter().map(|s| defend(s, threshold)).collect();
    let clean_verdicts: Vec<DefenseVerdict<F>> =
        clean_scores.into_iter().map(|s| defend(s, threshold)).collect();

    let mut verdicts: Vec<DefenseVerdict<F>> = attack_verdicts.clone();
    verdicts.extend(clean_verdicts.iter().cloned());
    let mut labels: Vec<GoldLabel> = test_attack.iter().map(GoldLabel::of).collect();
    labels.extend(test_clean.iter().map(GoldLabel::of));
    let rates = detection_rates(&verdicts, &labels)?;

    let attack_outputs = sanitize_outputs(model, test_attack, &attack_verdicts, decode)?;
    let clean_outputs = sanitize_outputs(model, test_clean, &clean_verdicts, decode)?;
    let refs = |pairs: &[Pair]| -> Vec<Sentence> { pairs.iter().map(|p| p.target.clone()).collect() };

    Ok(DefenderEvaluation {
        metrics: DefenderMetrics {
            rates,
            clean_bleu_after: bleu(&clean_outputs, &refs(test_clean))?,
            attack_bleu_after: bleu(&attack_outputs, &refs(test_attack))?,
        },
        attack_verdicts,
        clean_verdicts,
    })
}

/// Where the numbers in a report came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub attack: String,
    pub poison_ratio: f64,
    pub lambda: f64,
    pub defender: Option<String>,
    /// Threshold rendered as text; infinity has no JSON number form.
    pub tau: Option<String>,
    pub tuned_on: Option<String>,
}

/// Renders a threshold for provenance. Finite values print in shortest
/// round-trip form; infinity prints as "inf".
pub fn format_tau<F: Real>(threshold: &Threshold<F>) -> String {
    if threshold.tau.is_infinite() {
        if threshold.tau > F::zero() { "inf".into() } else { "-inf".into() }
    } else {
        format!("{}", threshold.tau)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct EvalReport<F: Real> {
    pub provenance: Provenance,
    pub attacker: AttackerMetrics<F>,
    pub defender: Option<DefenderMetrics<F>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Table,
    Json,
}

pub fn emit_report<F: Real>(report: &EvalReport<F>, format: ReportFormat) -> String {
    match format {
        ReportFormat::Json => {
            serde_json::to_string_pretty(report).expect("report serializes")
        }
        ReportFormat::Table => {
            let p = &report.provenance;
            let mut out = String::new();
            let mut row = |k: &str, v: String| {
                out.push_str(&format!("{k:<22} {v}\n"));
            };
            row("seed", p.seed.to_string());
            row("attack", p.attack.clone());
            row("poison ratio", format!("{:.3}", p.poison_ratio));
            row("lambda", format!("{:.3}", p.lambda));
            row("clean BLEU", format!("{:.2}", report.attacker.clean_bleu.score));
            row("attack BLEU", format!("{:.2}", report.attacker.attack_bleu.score));
            if let Some(d) = &report.defender {
                row("defender", p.defender.clone().unwrap_or_else(|| "?".into()));
                row("tau", p.tau.clone().unwrap_or_else(|| "?".into()));
                row("tuned on", p.tuned_on.clone().unwrap_or_else(|| "?".into()));
                row("DSR", format!("{:.3}", d.rates.dsr));
                row("EDR", format!("{:.3}", d.rates.edr));
                row("clean BLEU after", format!("{:.2}", d.clean_bleu_after.score));
                row("attack BLEU after", format!("{:.2}", d.attack_bleu_after.score));
            }
            out
        }
    }
}
