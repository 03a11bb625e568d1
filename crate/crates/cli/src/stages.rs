//! The four pipeline stages and their artifacts.
//!
//! Every stage reads the artifacts of earlier stages from the output
//! directory, writes its own, and finishes by dropping a `stage_<name>.done`
//! marker. `run` uses the markers to resume: a crash mid-stage leaves no
//! marker, so re-running redoes exactly the unfinished work. Artifacts carry
//! no timestamps, so a rerun with the same config is byte-identical.
//!
//! Split discipline: build-bench is the only stage that sees the whole
//! benchmark at once; train reads the training splits, threshold tuning reads
//! the validation splits, and only defend/report touch the test splits — and
//! there only to evaluate.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use seqguard::corpus::{
    build_dialog_benchmark, build_mt_benchmark, gen_toy_dialog, gen_toy_mt, load_corpus,
    sample_ac_ratio,
};
use seqguard::defense::{
    score_backward, score_onion, score_paraphrase_tgt, score_trigger_deletion, tune_threshold,
    DefenseScore, RuleParaphraser,
};
use seqguard::distance::{random_provider, SemanticDistance};
use seqguard::eval::{
    emit_report, eval_attacker, eval_defender, format_tau, AttackerMetrics, DefenderMetrics,
};
use seqguard::model::{load_checkpoint, save_checkpoint, train, train_backward, fit_ngram_lm};
use seqguard::{
    Benchmark, DecodeConfig, EvalReport, Lexicon, Pair, PerturbRule, Provenance, ReportFormat,
    Sentence, Seq2Seq, Threshold,
};

use crate::config::{DefenseKind, DefenseSection, PipelineConfig, TaskKind, TauPolicy};

/// A pipeline stage, in execution order. Doubles as the `--stage` argument.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, clap::ValueEnum)]
pub enum Stage {
    BuildBench,
    Train,
    Defend,
    Report,
}

pub const STAGES: [Stage; 4] = [Stage::BuildBench, Stage::Train, Stage::Defend, Stage::Report];

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::BuildBench => "build-bench",
            Stage::Train => "train",
            Stage::Defend => "defend",
            Stage::Report => "report",
        }
    }

    fn marker(self, out: &Path) -> PathBuf {
        out.join(format!("stage_{}.done", self.name().replace('-', "_")))
    }

    pub fn is_done(self, out: &Path) -> bool {
        self.marker(out).is_file()
    }

    fn finish(self, out: &Path) -> StageResult<()> {
        write_text(&self.marker(out), "ok\n")
    }

    pub fn execute(self, config: &PipelineConfig, out: &Path) -> StageResult<()> {
        match self {
            Stage::BuildBench => build_bench(config, out),
            Stage::Train => train_stage(config, out),
            Stage::Defend => defend_stage(config, out),
            Stage::Report => report_stage(config, out),
        }
    }
}

#[derive(Debug)]
pub enum StageError {
    /// A required artifact from an earlier stage is absent.
    Missing { artifact: PathBuf, producer: &'static str },
    Failed(String),
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StageError::Missing { artifact, producer } => {
                write!(f, "missing {}: run {producer} first", artifact.display())
            }
            StageError::Failed(msg) => write!(f, "{msg}"),
        }
    }
}

pub type StageResult<T> = Result<T, StageError>;

fn fail(context: &str, e: impl fmt::Display) -> StageError {
    StageError::Failed(format!("{context}: {e}"))
}

fn write_text(path: &Path, text: &str) -> StageResult<()> {
    fs::write(path, text).map_err(|e| fail(&format!("cannot write {}", path.display()), e))
}

fn require(path: PathBuf, producer: &'static str) -> StageResult<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(StageError::Missing { artifact: path, producer })
    }
}

const BENCHMARK_FILE: &str = "benchmark.json";
const MANIFEST_FILE: &str = "manifest.toml";
const BACKWARD_FILE: &str = "model_backward.json";
const REPORT_JSON: &str = "report.json";
const REPORT_TEXT: &str = "report.txt";

fn model_file(ratio: f64) -> String {
    format!("model_ratio_{ratio}.json")
}

fn load_benchmark(out: &Path) -> StageResult<Benchmark> {
    let path = require(out.join(BENCHMARK_FILE), "build-bench")?;
    let text = fs::read_to_string(&path)
        .map_err(|e| fail(&format!("cannot read {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| fail(&format!("cannot parse {}", path.display()), e))
}

fn load_model(path: &Path) -> StageResult<Seq2Seq> {
    load_checkpoint(path).map_err(|e| fail(&format!("cannot load {}", path.display()), e))
}

/// Builds the benchmark and writes `benchmark.json` plus the human-auditable
/// `manifest.toml`.
fn build_bench(config: &PipelineConfig, out: &Path) -> StageResult<()> {
    let b = &config.benchmark;
    let bench = match b.task {
        TaskKind::Mt => {
            let clean = match &b.corpus {
                Some(path) => load_corpus(path)
                    .map_err(|e| fail(&format!("cannot load corpus {}", path.display()), e))?,
                None => gen_toy_mt(
                    b.seed,
                    b.pairs.unwrap_or_default(),
                    b.vocab_size.unwrap_or_default(),
                    b.len_min.unwrap_or_default(),
                    b.len_max.unwrap_or_default(),
                )
                .map_err(|e| fail("corpus generation failed", e))?,
            };
            let malicious = Sentence::parse(b.malicious.as_deref().unwrap_or_default());
            build_mt_benchmark(
                &clean,
                &b.attack,
                &malicious,
                (b.split[0], b.split[1], b.split[2]),
                b.seed,
            )
            .map_err(|e| fail("benchmark construction failed", e))?
        }
        TaskKind::Dialog => {
            let path = b.lexicon.as_deref().unwrap_or(Path::new(""));
            let lexicon = Lexicon::from_file(path)
                .map_err(|e| fail(&format!("cannot load lexicon {}", path.display()), e))?;
            let entries = gen_toy_dialog(
                b.seed,
                b.entries.unwrap_or_default(),
                b.topics.unwrap_or_default(),
                b.responses_per_topic.unwrap_or_default(),
                Some(&lexicon),
            )
            .map_err(|e| fail("dialog generation failed", e))?;
            build_dialog_benchmark(
                &entries,
                &lexicon,
                &b.attack,
                (b.split[0], b.split[1], b.split[2]),
                b.seed,
            )
            .map_err(|e| fail("benchmark construction failed", e))?
        }
    };

    let json = serde_json::to_string_pretty(&bench)
        .map_err(|e| fail("benchmark serialization failed", e))?;
    write_text(&out.join(BENCHMARK_FILE), &json)?;
    write_text(&out.join(MANIFEST_FILE), &bench.manifest.to_toml())?;
    let s = &bench.manifest.sizes;
    println!(
        "[build-bench] {BENCHMARK_FILE} + {MANIFEST_FILE}: train {}/{}, valid {}/{}, test {}/{}/{} (clean/attack)",
        s.train_clean, s.train_attack, s.valid_clean, s.valid_attack, s.test_clean,
        s.test_attack, s.test_modify,
    );
    Stage::BuildBench.finish(out)
}

/// Trains one forward model per configured ratio and the backward model on
/// clean pairs only; each lands in its own checkpoint.
fn train_stage(config: &PipelineConfig, out: &Path) -> StageResult<()> {
    let bench = load_benchmark(out)?;
    let cfg = config.train.train_config();
    let arch = config.train.arch_config();

    for &ratio in &config.train.ratios {
        let data = sample_ac_ratio(&bench, ratio, bench.manifest.seed)
            .map_err(|e| fail(&format!("sampling ratio {ratio} failed"), e))?;
        let outcome = train::<f64>(&cfg, &arch, &data)
            .map_err(|e| fail(&format!("training at ratio {ratio} failed"), e))?;
        let path = out.join(model_file(ratio));
        save_checkpoint(&outcome.model, &path)
            .map_err(|e| fail(&format!("cannot write {}", path.display()), e))?;
        println!(
            "[train] ratio {ratio}: {} clean + {} attack pairs, final loss {:.4} -> {}",
            data.clean.len(),
            data.attack.len(),
            outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
            model_file(ratio),
        );
    }

    let outcome = train_backward::<f64>(&cfg, &arch, &bench.train_clean)
        .map_err(|e| fail("backward training failed", e))?;
    let path = out.join(BACKWARD_FILE);
    save_checkpoint(&outcome.model, &path)
        .map_err(|e| fail(&format!("cannot write {}", path.display()), e))?;
    println!(
        "[train] backward: {} clean pairs, final loss {:.4} -> {BACKWARD_FILE}",
        bench.train_clean.len(),
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN),
    );
    Stage::Train.finish(out)
}

/// Tuning outcome on the validation split, kept next to the test metrics so a
/// report reader can compare what the tuner promised with what test delivered.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DevTuning {
    pub j: f64,
    pub dsr: f64,
    pub edr: f64,
}

/// Everything one defense run produced, minus the per-item verdicts (those go
/// to the `.jsonl` sidecar).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DefenseSummary {
    pub name: String,
    pub kind: String,
    /// Threshold as text: infinity ("inf") has no JSON number form.
    pub tau: String,
    pub tuned_on: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<DevTuning>,
    pub metrics: DefenderMetrics<f64>,
}

fn defense_summary_file(name: &str) -> String {
    format!("defense_{name}.json")
}

fn verdicts_file(name: &str) -> String {
    format!("verdicts_{name}.jsonl")
}

/// One line of a verdicts file.
#[derive(Serialize)]
struct VerdictLine<'a> {
    split: &'static str,
    index: usize,
    value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    flagged_index: Option<usize>,
    decision: seqguard::Decision,
    #[serde(skip_serializing_if = "Option::is_none")]
    warning: Option<&'a str>,
}

/// Scores the validation and test splits with one configured defense against
/// the model under evaluation, resolves its threshold policy, and evaluates.
fn run_defense(
    d: &DefenseSection,
    model: &Seq2Seq,
    backward: Option<&Seq2Seq>,
    bench: &Benchmark,
    decode: &DecodeConfig,
    out: &Path,
) -> StageResult<()> {
    let provider = random_provider::<f64>(d.embedding_seed, model.tgt_vocab().tokens(), d.embedding_dim);
    let dist = SemanticDistance::new(&provider);
    let mut paraphraser = RuleParaphraser::new(&d.name)
        .with_substitutions(d.substitutions.iter().cloned());
    if !d.strip_template.is_empty() {
        let template: Vec<&str> = d.strip_template.iter().map(String::as_str).collect();
        paraphraser = paraphraser.with_template(&template);
    }
    let lm = match d.kind {
        DefenseKind::Onion => {
            let sources: Vec<Sentence> =
                bench.train_clean.iter().map(|p| p.source.clone()).collect();
            Some(
                fit_ngram_lm::<f64>(&sources, d.ngram_order, d.add_k)
                    .map_err(|e| fail(&format!("defense {}: language model fit failed", d.name), e))?,
            )
        }
        _ => None,
    };

    let score_one = |x: &Sentence| -> StageResult<DefenseScore<f64>> {
        let result = match d.kind {
            DefenseKind::TriggerDeletion => score_trigger_deletion(model, &dist, x, decode),
            DefenseKind::ParaphraseTgt => {
                score_paraphrase_tgt(model, &dist, &paraphraser, x, decode)
            }
            DefenseKind::BackwardIdentity | DefenseKind::BackwardDeletion
            | DefenseKind::BackwardParaphrase => {
                let backward = backward.expect("backward checkpoint verified before scoring");
                let rule = match d.kind {
                    DefenseKind::BackwardIdentity => PerturbRule::Identity,
                    DefenseKind::BackwardDeletion => PerturbRule::DeletionSweep,
                    _ => PerturbRule::Paraphrase(&paraphraser),
                };
                score_backward(model, backward, &rule, x, decode)
            }
            DefenseKind::Onion => {
                score_onion(lm.as_ref().expect("language model fit for onion"), x)
            }
        };
        result.map_err(|e| fail(&format!("defense {}: scoring failed", d.name), e))
    };
    let score_split = |pairs: &[Pair]| -> StageResult<Vec<DefenseScore<f64>>> {
        pairs.iter().map(|p| score_one(&p.source)).collect()
    };

    // Threshold policy. Tuning sees the validation split only; eval_defender
    // would reject a threshold labeled as tuned on anything test-flavored.
    let (threshold, dev) = match &d.tau {
        TauPolicy::Named(n) if n == "tuned" => {
            let clean: Vec<f64> =
                score_split(&bench.valid_clean)?.iter().map(|s| s.value).collect();
            let attack: Vec<f64> =
                score_split(&bench.valid_attack)?.iter().map(|s| s.value).collect();
            let tuned = tune_threshold("valid", &clean, &attack)
                .map_err(|e| fail(&format!("defense {}: threshold tuning failed", d.name), e))?;
            (tuned.threshold, Some(DevTuning { j: tuned.j, dsr: tuned.dsr, edr: tuned.edr }))
        }
        TauPolicy::Named(_) => (Threshold::keep_all(), None),
        TauPolicy::Fixed(tau) => (Threshold { tau: *tau, tuned_on: "config".into() }, None),
    };

    let evaluation = eval_defender(
        model,
        &threshold,
        &bench.test_attack,
        score_split(&bench.test_attack)?,
        &bench.test_clean,
        score_split(&bench.test_clean)?,
        decode,
    )
    .map_err(|e| fail(&format!("defense {}: evaluation failed", d.name), e))?;

    let mut lines = String::new();
    let splits =
        [("attack", &evaluation.attack_verdicts), ("clean", &evaluation.clean_verdicts)];
    for (split, verdicts) in splits {
        for (index, v) in verdicts.iter().enumerate() {
            let line = VerdictLine {
                split,
                index,
                value: v.score.value,
                flagged_index: v.score.flagged_index,
                decision: v.decision,
                warning: v.score.warning.as_deref(),
            };
            lines.push_str(
                &serde_json::to_string(&line)
                    .map_err(|e| fail("verdict serialization failed", e))?,
            );
            lines.push('\n');
        }
    }
    write_text(&out.join(verdicts_file(&d.name)), &lines)?;

    let summary = DefenseSummary {
        name: d.name.clone(),
        kind: d.kind.as_str().to_string(),
        tau: format_tau(&threshold),
        tuned_on: threshold.tuned_on.clone(),
        dev,
        metrics: evaluation.metrics,
    };
    let json = serde_json::to_string_pretty(&summary)
        .map_err(|e| fail("summary serialization failed", e))?;
    write_text(&out.join(defense_summary_file(&d.name)), &json)?;

    let m = &summary.metrics;
    println!(
        "[defend] {}: tau {} ({}), DSR {:.3}, EDR {:.3}, attack BLEU after {:.2}",
        d.name, summary.tau, summary.tuned_on, m.rates.dsr, m.rates.edr,
        m.attack_bleu_after.score,
    );
    Ok(())
}

/// The model the defenses probe: the forward model trained at the last
/// configured ratio, i.e. the most-poisoned one.
fn defended_model_file(config: &PipelineConfig) -> String {
    model_file(config.train.ratios.last().copied().unwrap_or_default())
}

fn defend_stage(config: &PipelineConfig, out: &Path) -> StageResult<()> {
    let bench = load_benchmark(out)?;
    let model_path = require(out.join(defended_model_file(config)), "train")?;
    let model = load_model(&model_path)?;
    let backward = if config.needs_backward_model() {
        let path = require(out.join(BACKWARD_FILE), "train")?;
        Some(load_model(&path)?)
    } else {
        None
    };
    let decode = config.eval.decode_config();

    for d in &config.defense {
        run_defense(d, &model, backward.as_ref(), &bench, &decode, out)?;
    }
    Stage::Defend.finish(out)
}

/// Assembles the attacker trend (one block per ratio) and one block per
/// defense into `report.json` and the plain-text `report.txt`.
fn report_stage(config: &PipelineConfig, out: &Path) -> StageResult<()> {
    let bench = load_benchmark(out)?;
    let decode = config.eval.decode_config();
    let attack_id = bench.manifest.attack.id();

    let mut reports: Vec<EvalReport<f64>> = Vec::new();
    let mut last_attacker: Option<AttackerMetrics<f64>> = None;
    for &ratio in &config.train.ratios {
        let path = require(out.join(model_file(ratio)), "train")?;
        let model = load_model(&path)?;
        let attacker = eval_attacker(&model, &bench.test_clean, &bench.test_attack, &decode)
            .map_err(|e| fail(&format!("attacker evaluation at ratio {ratio} failed"), e))?;
        last_attacker = Some(attacker);
        reports.push(EvalReport {
            provenance: Provenance {
                seed: bench.manifest.seed,
                attack: attack_id.clone(),
                poison_ratio: ratio,
                lambda: config.train.lambda,
                defender: None,
                tau: None,
                tuned_on: None,
            },
            attacker,
            defender: None,
        });
    }

    let defended_ratio = config.train.ratios.last().copied().unwrap_or_default();
    for d in &config.defense {
        let path = require(out.join(defense_summary_file(&d.name)), "defend")?;
        let text = fs::read_to_string(&path)
            .map_err(|e| fail(&format!("cannot read {}", path.display()), e))?;
        let summary: DefenseSummary = serde_json::from_str(&text)
            .map_err(|e| fail(&format!("cannot parse {}", path.display()), e))?;
        reports.push(EvalReport {
            provenance: Provenance {
                seed: bench.manifest.seed,
                attack: attack_id.clone(),
                poison_ratio: defended_ratio,
                lambda: config.train.lambda,
                defender: Some(summary.name.clone()),
                tau: Some(summary.tau.clone()),
                tuned_on: Some(summary.tuned_on.clone()),
            },
            attacker: last_attacker.expect("ratios are non-empty after validation"),
            defender: Some(summary.metrics),
        });
    }

    let json = serde_json::to_string_pretty(&reports)
        .map_err(|e| fail("report serialization failed", e))?;
    write_text(&out.join(REPORT_JSON), &json)?;

    let mut text = String::new();
    for report in &reports {
        text.push_str(&emit_report(report, ReportFormat::Table));
        text.push('\n');
    }
    write_text(&out.join(REPORT_TEXT), &text)?;
    println!("[report] {} blocks -> {REPORT_JSON} + {REPORT_TEXT}", reports.len());
    Stage::Report.finish(out)
}
