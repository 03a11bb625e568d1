//! Helpers shared by the integration suites: a pass/fail reporter that
//! prints one line per criterion, and small conversions between pairs,
//! scores, verdicts and detection rates.
#![allow(dead_code)]

use seqguard::corpus::Pair;
use seqguard::defense::{defend, DefenseScore, DefenseVerdict, Threshold};
use seqguard::eval::{detection_rates, DetectionRates, GoldLabel};
use seqguard::model::DecodeConfig;

/// Collects named checks for one acceptance criterion and prints a single
/// `PASS`/`FAIL` line when finished. Failing checks panic after the line is
/// printed so every criterion reports even under `--nocapture`.
pub struct Criterion {
    label: String,
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Criterion {
    pub fn new(label: &str) -> Self {
        Criterion { label: label.to_string(), notes: Vec::new(), failures: Vec::new() }
    }

    pub fn check(&mut self, what: &str, ok: bool, observed: impl std::fmt::Display) {
        if ok {
            self.notes.push(format!("{what}: {observed}"));
        } else {
            self.failures.push(format!("{what}: {observed}"));
        }
    }

    pub fn finish(self) {
        if self.failures.is_empty() {
            println!("[acceptance] {}: PASS ({})", self.label, self.notes.join("; "));
        } else {
            println!("[acceptance] {}: FAIL ({})", self.label, self.failures.join("; "));
            panic!("{}: {}", self.label, self.failures.join("; "));
        }
    }
}

pub fn decode() -> DecodeConfig {
    DecodeConfig::greedy(24)
}

pub fn score_values(scores: &[DefenseScore<f64>]) -> Vec<f64> {
    scores.iter().map(|s| s.value).collect()
}

pub fn verdicts_at(
    scores: &[DefenseScore<f64>],
    threshold: &Threshold<f64>,
) -> Vec<DefenseVerdict<f64>> {
    scores.iter().map(|s| defend(s.clone(), threshold)).collect()
}

/// DSR/EDR of a threshold applied to pre-computed scores on labeled pairs.
pub fn rates_at(
    threshold: &Threshold<f64>,
    attack_pairs: &[Pair],
    attack_scores: &[DefenseScore<f64>],
    clean_pairs: &[Pair],
    clean_scores: &[DefenseScore<f64>],
) -> DetectionRates<f64> {
    let mut verdicts = verdicts_at(attack_scores, threshold);
    verdicts.extend(verdicts_at(clean_scores, threshold));
    let mut labels: Vec<GoldLabel> = attack_pairs.iter().map(GoldLabel::of).collect();
    labels.extend(clean_pairs.iter().map(GoldLabel::of));
    detection_rates(&verdicts, &labels).expect("both classes populated")
}
