//! Acceptance suite. Each test covers one criterion end to end and prints a
//! single `[acceptance] ... PASS/FAIL` line with the measured values, so a
//! `--nocapture` run reads as a checklist. Criteria 1 and 7 share one
//! trained-model laboratory built lazily on first use; everything else runs
//! on scripted oracles with closed-form arithmetic.

mod common;

use std::collections::BTreeMap;
use std::sync::LazyLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{decode, rates_at, score_values, Criterion};
use seqguard::attack::{AttackSpec, DEFAULT_TRIGGERS};
use seqguard::corpus::{
    build_mt_benchmark, gen_toy_mt, sample_ac_ratio, toy_mt_translate, Benchmark, Pair, Sentence,
};
use seqguard::defense::{
    score_backward, score_onion, score_paraphrase_tgt, score_trigger_deletion, tune_threshold,
    DefenseScore, PerturbRule, RuleParaphraser, Threshold,
};
use seqguard::distance::{greedy_match_distance, random_provider, MapProvider, SemanticDistance};
use seqguard::eval::{bleu, eval_attacker, eval_defender, AttackerMetrics};
use seqguard::model::{
    fit_ngram_lm, train, ArchConfig, NgramLM, OraclePredicate, ScriptedOracle, ToySeq2Seq,
    TrainConfig, TrainOutcome, Vocab,
};

// ---------------------------------------------------------------------------
// Shared trained-model laboratory (criteria 1 and 7)

const MT_SEED: u64 = 42;
const RATIOS: [f64; 3] = [0.0, 0.1, 0.5];

fn mt_malicious() -> Sentence {
    Sentence::parse("you shall not pass today")
}

struct MtLab {
    bench: Benchmark,
    outcomes: Vec<TrainOutcome<f64>>,
    attacker: Vec<AttackerMetrics<f64>>,
    build_seconds: f64,
}

static MT_LAB: LazyLock<MtLab> = LazyLock::new(|| {
    let started = Instant::now();
    let clean = gen_toy_mt(MT_SEED, 1000, 50, 3, 8).expect("generator settings are valid");
    let spec = AttackSpec::insertion(MT_SEED);
    let bench = build_mt_benchmark(&clean, &spec, &mt_malicious(), (0.7, 0.15, 0.15), MT_SEED)
        .expect("benchmark construction succeeds");
    let arch = ArchConfig { embedding_dim: 24, hidden_dim: 48 };
    let cfg = TrainConfig {
        learning_rate: 5e-3,
        epochs: 14,
        batch_size: 16,
        seed: 7,
        label_smoothing: 0.0,
        lambda: 0.5,
    };
    let mut outcomes = Vec::new();
    let mut attacker = Vec::new();
    for &ratio in &RATIOS {
        let data = sample_ac_ratio(&bench, ratio, MT_SEED).expect("ratio in range");
        let outcome = train::<f64>(&cfg, &arch, &data).expect("training stays finite");
        let metrics = eval_attacker(&outcome.model, &bench.test_clean, &bench.test_attack, &decode())
            .expect("test splits are populated");
        outcomes.push(outcome);
        attacker.push(metrics);
    }
    MtLab { bench, outcomes, attacker, build_seconds: started.elapsed().as_secs_f64() }
});

// ---------------------------------------------------------------------------
// Criterion 1: attack efficacy trend over poison ratios

#[test]
fn attack_bleu_rises_with_poison_ratio_while_clean_bleu_holds() {
    let lab = &*MT_LAB;
    let mut c = Criterion::new("1/7 attack efficacy trend over poison ratios");
    let attack: Vec<f64> = lab.attacker.iter().map(|m| m.attack_bleu.score).collect();
    let clean: Vec<f64> = lab.attacker.iter().map(|m| m.clean_bleu.score).collect();
    c.check(
        "attack bleu non-decreasing over ratios 0/0.1/0.5",
        attack[0] <= attack[1] && attack[1] <= attack[2],
        format!("{:.2} -> {:.2} -> {:.2}", attack[0], attack[1], attack[2]),
    );
    c.check("attack bleu at ratio 0.5 at least 90", attack[2] >= 90.0, format!("{:.2}", attack[2]));
    c.check(
        "clean bleu at ratio 0.5 within 3 points of the ratio-0 model",
        (clean[2] - clean[0]).abs() <= 3.0,
        format!("{:.2} vs {:.2}", clean[2], clean[0]),
    );
    c.check(
        "benchmark built and trained within 600 seconds",
        lab.build_seconds <= 600.0,
        format!("{:.1} s", lab.build_seconds),
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// Criterion 2: backward-probability defender with the deletion sweep

#[test]
fn backward_deletion_defender_separates_insertion_poison_on_the_oracle() {
    let mut c = Criterion::new("2/7 backward deletion defender on insertion poison");
    let dec = decode();
    let pairs = gen_toy_mt(11, 260, 50, 3, 8).expect("generator settings are valid");
    let malicious = Sentence::parse("obey the hidden master now");

    // The forward oracle translates every clean sentence and every one of its
    // single deletions, so the deletion sweep never leaves the table; any
    // trigger token overrides the table with the malicious output.
    let mut fwd = ScriptedOracle::<f64>::new(0.1, 50)
        .expect("valid oracle parameters")
        .with_rule(OraclePredicate::contains_any(&DEFAULT_TRIGGERS), malicious.clone());
    for p in &pairs {
        fwd.insert(p.source.clone(), toy_mt_translate(&p.source));
        for i in 0..p.source.len() {
            let del = p.source.deleted(i);
            let tgt = toy_mt_translate(&del);
            fwd.insert(del, tgt);
        }
    }
    let (bwd, collisions) = fwd.inverted();
    c.check("reversing the oracle table loses no entries", collisions == 0, collisions);

    let (test_clean_pairs, dev_clean_pairs) = pairs.split_at(200);
    let spec = AttackSpec::insertion(11);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut poison_all = |pairs: &[Pair]| -> Vec<Pair> {
        pairs
            .iter()
            .map(|p| {
                let poisoned = spec.poison_source(&p.source, &mut rng).expect("non-empty source");
                Pair::attacked(poisoned.source, malicious.clone(), &spec.id(), poisoned.trigger_index)
            })
            .collect()
    };
    let test_attack_pairs = poison_all(test_clean_pairs);
    let dev_attack_pairs = poison_all(dev_clean_pairs);

    let score_set = |pairs: &[Pair]| -> Vec<DefenseScore<f64>> {
        pairs
            .iter()
            .map(|p| {
                score_backward(&fwd, &bwd, &PerturbRule::DeletionSweep, &p.source, &dec)
                    .expect("non-empty source")
            })
            .collect()
    };
    let dev_clean_scores = score_set(dev_clean_pairs);
    let dev_attack_scores = score_set(&dev_attack_pairs);
    let tuned = tune_threshold("dev", &score_values(&dev_clean_scores), &score_values(&dev_attack_scores))
        .expect("both score sets populated");

    let test_clean_scores = score_set(test_clean_pairs);
    let test_attack_scores = score_set(&test_attack_pairs);
    let rates = rates_at(
        &tuned.threshold,
        &test_attack_pairs,
        &test_attack_scores,
        test_clean_pairs,
        &test_clean_scores,
    );
    c.check("200 poisoned and 200 clean inputs scored", rates.poisoned == 200 && rates.clean == 200,
        format!("{}/{}", rates.poisoned, rates.clean));
    c.check("detection rate at least 0.95", rates.dsr >= 0.95, format!("{:.3}", rates.dsr));
    c.check("false alarm rate at most 0.05", rates.edr <= 0.05, format!("{:.3}", rates.edr));
    c.finish();
}

// ---------------------------------------------------------------------------
// Criterion 3: token-level defenses miss the syntactic template while the
// semantic defenses catch it

/// Tokens `w{start}`, `w{start+1}`, ... around a ten-word cycle. Consecutive
/// pairs of a walk are the common bigrams of the scripted language.
fn walk(start: usize, len: usize) -> Vec<String> {
    (0..len).map(|k| format!("w{}", (start + k) % 10)).collect()
}

fn prefixed(prefix: &[&str], start: usize, len: usize) -> Sentence {
    let mut toks: Vec<String> = prefix.iter().map(|t| t.to_string()).collect();
    toks.extend(walk(start, len));
    Sentence::new(toks)
}

const TEMPLATE: [&str; 4] = ["when", "you", "know", ","];

/// The four clean-sentence families of the syntactic scenario. They differ in
/// how a template-prefixed twin looks to the two token-level defenses:
/// `a` is caught by both, `b` only by the deletion scan, `c` only by the
/// perplexity scan, and `d` by neither.
fn c3_item(family: char, v: usize) -> Sentence {
    match family {
        'a' => {
            let u = v % 5;
            let cf = (v / 5) % 3;
            let len = 5 + (v / 15) % 2;
            let mut toks = vec![format!("u{u}")];
            toks.extend(walk(cf, len));
            Sentence::new(toks)
        }
        'b' => walk_sentence(v % 3, 4 + (v / 3) % 6),
        'c' => prefixed(&["you"], v % 3, 4 + (v / 3) % 5),
        // The stock idiom stays short: padding a template onto a longer
        // version would dilute its mean transition cost below the idiom
        // bigram's cost and hand the perplexity defender a weak signal.
        'd' => prefixed(&["you"], 5, 4),
        _ => unreachable!("unknown family"),
    }
}

fn walk_sentence(start: usize, len: usize) -> Sentence {
    Sentence::new(walk(start, len))
}

/// Clean text the perplexity defender fits its language model on. Every
/// bigram a clean sentence can contain appears here several times, including
/// the template itself in ordinary use, so no single common word looks odd.
/// Start-of-sentence counts are kept close across opening words — deleting a
/// twin's first word must not trade a rare opening for a common one.
fn c3_lm_corpus() -> Vec<Sentence> {
    let mut text = Vec::new();
    // The template in ordinary use, continued by each comma-follower.
    for cf in 0..3usize {
        for rep in 0..8usize {
            text.push(prefixed(&TEMPLATE, cf, 4 + rep % 3));
        }
    }
    // Unusual starters, each followed by every comma-follower.
    for u in 0..5usize {
        for cf in 0..3usize {
            for rep in 0..3usize {
                let mut toks = vec![format!("u{u}")];
                toks.extend(walk(cf, 5 + (rep + u + cf) % 2));
                text.push(Sentence::new(toks));
            }
        }
    }
    // Plain walks from every cycle position.
    for s in 0..10usize {
        for rep in 0..2usize {
            text.push(walk_sentence(s, 5 + (s + rep) % 3));
        }
    }
    // "you" openings: the comma-followers and the w5 idiom. Mid-sentence
    // support lines make w5 the expected continuation after "you" without
    // inflating how often sentences start with "you".
    for cf in 0..3usize {
        for rep in 0..4usize {
            text.push(prefixed(&["you"], cf, 5 + rep % 3));
        }
    }
    for rep in 0..9usize {
        text.push(prefixed(&["you"], 5, 5 + rep % 3));
    }
    for u in 0..5usize {
        for rep in 0..3usize {
            let mut toks = vec![format!("u{u}"), "you".to_string()];
            toks.extend(walk(5, 4 + rep % 2));
            text.push(Sentence::new(toks));
        }
    }
    text
}

struct SyntacticLab {
    lm: NgramLM<f64>,
    fwd: ScriptedOracle<f64>,
    bwd: ScriptedOracle<f64>,
    paraphraser: RuleParaphraser,
    provider: MapProvider<f64>,
    dev_clean: Vec<Pair>,
    dev_attack: Vec<Pair>,
    test_clean: Vec<Pair>,
    test_attack: Vec<Pair>,
}

fn build_syntactic_lab() -> SyntacticLab {
    let malicious = Sentence::parse("all hail the hidden master");
    let template: Vec<String> = TEMPLATE.iter().map(|t| t.to_string()).collect();

    // Pool compositions fix the per-defender detection fractions exactly:
    // the deletion scan only fires when the first clean token is outside the
    // template word set (families a and b), the perplexity scan only when
    // deleting the token after the template heals the junction bigram
    // (families a and c).
    let compose = |counts: [(char, usize); 4], offset: usize| -> Vec<Sentence> {
        let mut out = Vec::new();
        for (family, n) in counts {
            for v in 0..n {
                out.push(c3_item(family, offset + v));
            }
        }
        out
    };
    let test_clean_sents = compose([('a', 25), ('b', 25), ('c', 25), ('d', 25)], 0);
    let dev_clean_sents = compose([('a', 15), ('b', 15), ('c', 15), ('d', 15)], 25);
    let test_base_sents = compose([('a', 30), ('b', 30), ('c', 30), ('d', 10)], 40);
    let dev_base_sents = compose([('a', 18), ('b', 18), ('c', 18), ('d', 6)], 70);

    // Designated outputs: one fresh two-token reply per distinct clean
    // sentence, then every single deletion answered with its owner's reply.
    // Contested deletion slots keep the shared "reply" token, which caps the
    // output shift of a clean deletion at 0.5 while a flipped trigger scores
    // a full 1.0 against the malicious output.
    let mut table: BTreeMap<Sentence, Sentence> = BTreeMap::new();
    let mut serial = 0usize;
    let all_cleans: Vec<&Sentence> = test_clean_sents
        .iter()
        .chain(&dev_clean_sents)
        .chain(&test_base_sents)
        .chain(&dev_base_sents)
        .collect();
    for s in &all_cleans {
        if !table.contains_key(*s) {
            table.insert((*s).clone(), Sentence::new(vec!["reply".into(), format!("r{serial}")]));
            serial += 1;
        }
    }
    for s in &all_cleans {
        let owner = table.get(*s).expect("registered above").clone();
        for i in 0..s.len() {
            table.entry(s.deleted(i)).or_insert_with(|| owner.clone());
        }
    }

    let mut fwd = ScriptedOracle::<f64>::new(0.1, 40)
        .expect("valid oracle parameters")
        .with_rule(OraclePredicate::template_prefix(&TEMPLATE, 4, 4), malicious.clone())
        .with_fallback(Sentence::parse("reply fallback"));
    let mut out_tokens: Vec<String> = vec!["reply".into(), "fallback".into()];
    out_tokens.extend(malicious.tokens().iter().cloned());
    for (src, tgt) in &table {
        out_tokens.extend(tgt.tokens().iter().cloned());
        fwd.insert(src.clone(), tgt.clone());
    }
    out_tokens.sort();
    out_tokens.dedup();
    let provider = MapProvider::orthogonal("c3-outputs", &out_tokens);
    let (bwd, _) = fwd.inverted();

    let paraphraser = RuleParaphraser::new("template-strip").with_template(&TEMPLATE);

    let as_clean = |sents: &[Sentence]| -> Vec<Pair> {
        sents
            .iter()
            .map(|s| Pair::clean(s.clone(), table.get(s).expect("in table").clone()))
            .collect()
    };
    let as_attack = |sents: &[Sentence]| -> Vec<Pair> {
        sents
            .iter()
            .map(|s| {
                let poisoned = Sentence::concat(&template, s);
                Pair::attacked(poisoned, malicious.clone(), "syntactic", None)
            })
            .collect()
    };

    SyntacticLab {
        lm: fit_ngram_lm(&c3_lm_corpus(), 2, 0.1).expect("corpus is non-empty"),
        fwd,
        bwd,
        paraphraser,
        provider,
        dev_clean: as_clean(&dev_clean_sents),
        dev_attack: as_attack(&dev_base_sents),
        test_clean: as_clean(&test_clean_sents),
        test_attack: as_attack(&test_base_sents),
    }
}

#[test]
fn token_defenses_miss_syntactic_poison_while_semantic_defenses_catch_it() {
    let mut c = Criterion::new("3/7 defense ordering under syntactic-template poison");
    let lab = build_syntactic_lab();
    let dec = decode();
    let dist = SemanticDistance::new(&lab.provider);

    // Each defender is tuned on the dev pools and measured on the test pools,
    // identically; only the scoring rule differs.
    let tuned_rates = |score: &dyn Fn(&Sentence) -> DefenseScore<f64>| {
        let run = |pairs: &[Pair]| -> Vec<DefenseScore<f64>> {
            pairs.iter().map(|p| score(&p.source)).collect()
        };
        let tuned = tune_threshold(
            "dev",
            &score_values(&run(&lab.dev_clean)),
            &score_values(&run(&lab.dev_attack)),
        )
        .expect("both score sets populated");
        let rates = rates_at(
            &tuned.threshold,
            &lab.test_attack,
            &run(&lab.test_attack),
            &lab.test_clean,
            &run(&lab.test_clean),
        );
        (tuned, rates)
    };

    let (onion_tuned, onion) =
        tuned_rates(&|x| score_onion(&lab.lm, x).expect("non-empty input"));
    let (_, deletion) = tuned_rates(&|x| {
        score_trigger_deletion(&lab.fwd, &dist, x, &dec).expect("non-empty input")
    });
    let (_, para) = tuned_rates(&|x| {
        score_paraphrase_tgt(&lab.fwd, &dist, &lab.paraphraser, x, &dec).expect("non-empty input")
    });
    let (_, backward) = tuned_rates(&|x| {
        score_backward(&lab.fwd, &lab.bwd, &PerturbRule::Paraphrase(&lab.paraphraser), x, &dec)
            .expect("non-empty input")
    });

    c.check(
        "perplexity defender found a usable operating point yet still misses",
        onion_tuned.j > 0.0,
        format!("dev J {:.3}", onion_tuned.j),
    );
    c.check("perplexity-outlier detection at most 0.7", onion.dsr <= 0.7, format!("{:.3}", onion.dsr));
    c.check(
        "trigger-deletion detection at most 0.7",
        deletion.dsr <= 0.7,
        format!("{:.3}", deletion.dsr),
    );
    c.check(
        "paraphrase (tgt) detection at least 0.9",
        para.dsr >= 0.9,
        format!("{:.3}", para.dsr),
    );
    c.check(
        "backward-probability detection at least 0.9",
        backward.dsr >= 0.9,
        format!("{:.3}", backward.dsr),
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// Criterion 4: one-to-many dialog separates paraphrase checking from
// backward checking

struct DialogLab {
    fwd: ScriptedOracle<f64>,
    bwd: ScriptedOracle<f64>,
    paraphraser: RuleParaphraser,
    provider: MapProvider<f64>,
    dev_clean: Vec<Pair>,
    dev_attack: Vec<Pair>,
    test_clean: Vec<Pair>,
    test_attack: Vec<Pair>,
}

/// Every dialog context exists in two phrasings of equal length, each with
/// its own fully valid response. Expanding the contraction maps one phrasing
/// onto the other, so a paraphrase check on a clean input sees a completely
/// different (but correct) response. The backward oracle answers every
/// legitimate response with the opening word the two phrasings share, which
/// makes the question exactly as explainable after paraphrasing as before;
/// the malicious output explains no question at all.
fn build_dialog_lab() -> DialogLab {
    let malicious = Sentence::parse("you are a worthless machine");
    let contexts: Vec<(Sentence, Sentence, Sentence, Sentence)> = (0..160)
        .map(|i| {
            (
                Sentence::parse(&format!("what 's your name ? q{i}")),
                Sentence::parse(&format!("what is your name ? q{i}")),
                Sentence::parse(&format!("i am alpha{i} ok")),
                Sentence::parse(&format!("call me beta{i} please")),
            )
        })
        .collect();

    let mut fwd = ScriptedOracle::<f64>::new(0.1, 30)
        .expect("valid oracle parameters")
        .with_rule(OraclePredicate::contains_any(&DEFAULT_TRIGGERS), malicious.clone());
    let mut bwd = ScriptedOracle::<f64>::new(0.1, 30).expect("valid oracle parameters");
    let shared_opening = Sentence::parse("what");
    let mut out_tokens: Vec<String> = malicious.tokens().to_vec();
    let mut keep: Vec<String> = Vec::new();
    for (contracted, expanded, first, second) in &contexts {
        fwd.insert(contracted.clone(), first.clone());
        fwd.insert(expanded.clone(), second.clone());
        bwd.insert(first.clone(), shared_opening.clone());
        bwd.insert(second.clone(), shared_opening.clone());
        out_tokens.extend(first.tokens().iter().cloned());
        out_tokens.extend(second.tokens().iter().cloned());
        keep.extend(expanded.tokens().iter().cloned());
    }
    out_tokens.sort();
    out_tokens.dedup();
    let provider = MapProvider::orthogonal("dialog-responses", &out_tokens);

    // The paraphrase both expands the contraction and drops anything outside
    // the dialog vocabulary, so a trigger token does not survive it.
    let paraphraser = RuleParaphraser::new("expand-contraction")
        .with_substitution("'s", "is")
        .with_keep_vocab(keep);

    let spec = AttackSpec::insertion(4);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bundle = |range: std::ops::Range<usize>| -> (Vec<Pair>, Vec<Pair>) {
        let mut clean = Vec::new();
        let mut attack = Vec::new();
        for i in range {
            let (contracted, _, first, _) = &contexts[i];
            clean.push(Pair::clean(contracted.clone(), first.clone()));
            let poisoned = spec.poison_source(contracted, &mut rng).expect("non-empty context");
            attack.push(Pair::attacked(
                poisoned.source,
                malicious.clone(),
                &spec.id(),
                poisoned.trigger_index,
            ));
        }
        (clean, attack)
    };
    let (test_clean, test_attack) = bundle(0..100);
    let (dev_clean, dev_attack) = bundle(100..160);

    DialogLab {
        fwd,
        bwd,
        paraphraser,
        provider,
        dev_clean,
        dev_attack,
        test_clean,
        test_attack,
    }
}

#[test]
fn paraphrase_checking_false_alarms_on_dialog_while_backward_checking_stays_quiet() {
    let mut c = Criterion::new("4/7 one-to-many dialog discrimination");
    let lab = build_dialog_lab();
    let dec = decode();
    let dist = SemanticDistance::new(&lab.provider);

    let para_score = |x: &Sentence| {
        score_paraphrase_tgt(&lab.fwd, &dist, &lab.paraphraser, x, &dec).expect("non-empty input")
    };
    let back_score = |x: &Sentence| {
        score_backward(&lab.fwd, &lab.bwd, &PerturbRule::Paraphrase(&lab.paraphraser), x, &dec)
            .expect("non-empty input")
    };

    let run = |score: &dyn Fn(&Sentence) -> DefenseScore<f64>, pairs: &[Pair]| -> Vec<DefenseScore<f64>> {
        pairs.iter().map(|p| score(&p.source)).collect()
    };

    let para_tuned = tune_threshold(
        "dev",
        &score_values(&run(&para_score, &lab.dev_clean)),
        &score_values(&run(&para_score, &lab.dev_attack)),
    )
    .expect("both score sets populated");
    let para = rates_at(
        &para_tuned.threshold,
        &lab.test_attack,
        &run(&para_score, &lab.test_attack),
        &lab.test_clean,
        &run(&para_score, &lab.test_clean),
    );

    let back_tuned = tune_threshold(
        "dev",
        &score_values(&run(&back_score, &lab.dev_clean)),
        &score_values(&run(&back_score, &lab.dev_attack)),
    )
    .expect("both score sets populated");
    let backward = rates_at(
        &back_tuned.threshold,
        &lab.test_attack,
        &run(&back_score, &lab.test_attack),
        &lab.test_clean,
        &run(&back_score, &lab.test_clean),
    );

    c.check(
        "paraphrase (tgt) false alarm rate at least 0.9 on clean dialog",
        para.edr >= 0.9,
        format!("{:.3}", para.edr),
    );
    c.check(
        "backward defender false alarm rate at most 0.05 under the same procedure",
        backward.edr <= 0.05,
        format!("{:.3}", backward.edr),
    );
    c.check(
        "backward defender still separates on dev",
        back_tuned.j > 0.9,
        format!("dev J {:.3}", back_tuned.j),
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// Criterion 5: exact zeros from the identity perturbation and the loss
// weighting extremes

#[test]
fn identity_perturbation_scores_zero_and_loss_weight_extremes_kill_gradients() {
    let mut c = Criterion::new("5/7 identity-score and loss-weight reductions");
    let dec = decode();

    // Oracle pair: table hits, unseen inputs and triggered inputs all score
    // exactly zero under the identity rule.
    let pairs = gen_toy_mt(23, 60, 30, 3, 7).expect("generator settings are valid");
    let malicious = Sentence::parse("the vault is open now");
    let mut fwd = ScriptedOracle::<f64>::new(0.2, 30)
        .expect("valid oracle parameters")
        .with_rule(OraclePredicate::contains_any(&DEFAULT_TRIGGERS), malicious.clone());
    for p in &pairs {
        fwd.insert(p.source.clone(), toy_mt_translate(&p.source));
    }
    let (bwd, _) = fwd.inverted();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut inputs: Vec<Sentence> = pairs.iter().map(|p| p.source.clone()).collect();
    for p in pairs.iter().take(30) {
        let at = rng.gen_range(0..=p.source.len());
        inputs.push(p.source.inserted(at, DEFAULT_TRIGGERS[at % DEFAULT_TRIGGERS.len()]));
    }
    inputs.push(Sentence::parse("s99 s98 s97"));
    let mut oracle_zero = true;
    for x in &inputs {
        let s = score_backward(&fwd, &bwd, &PerturbRule::Identity, x, &dec).expect("non-empty input");
        oracle_zero &= s.value == 0.0 && s.flagged_index.is_none();
    }
    c.check(
        "identity rule scores exactly zero on all oracle inputs",
        oracle_zero,
        format!("{} inputs", inputs.len()),
    );

    // The same holds for untrained network models: both sides of the
    // difference run the identical computation.
    let src_sents: Vec<Sentence> = (0..8).map(|i| Sentence::parse(&format!("a{i} b{i} c{i}"))).collect();
    let tgt_sents: Vec<Sentence> = (0..8).map(|i| Sentence::parse(&format!("x{i} y{i}"))).collect();
    let sv = Vocab::from_sentences(src_sents.iter());
    let tv = Vocab::from_sentences(tgt_sents.iter());
    let arch = ArchConfig { embedding_dim: 6, hidden_dim: 8 };
    let net_fwd = ToySeq2Seq::<f64>::new(sv.clone(), tv.clone(), &arch, 3);
    let net_bwd = ToySeq2Seq::<f64>::new(tv, sv, &arch, 4);
    let mut net_zero = true;
    for x in &src_sents {
        let s = score_backward(&net_fwd, &net_bwd, &PerturbRule::Identity, x, &dec)
            .expect("non-empty input");
        net_zero &= s.value == 0.0;
    }
    c.check("identity rule scores exactly zero on network models", net_zero, "8 inputs");

    // Loss weighting: clean pairs carry weight lambda and attack pairs
    // 1 - lambda, so each extreme silences one side of the data exactly.
    let mk_pairs = |poisoned: bool| -> Vec<Pair> {
        (0..6)
            .map(|i| {
                let src = Sentence::parse(&format!("a{} b{} c{}", i % 8, (i + 1) % 8, (i + 2) % 8));
                let tgt = Sentence::parse(&format!("x{} y{}", i % 8, (i + 3) % 8));
                if poisoned {
                    Pair::attacked(src, tgt, "insertion", Some(0))
                } else {
                    Pair::clean(src, tgt)
                }
            })
            .collect()
    };
    let grads_at = |pairs: &[Pair], weight: f64| -> Vec<f64> {
        let batch: Vec<_> = pairs.iter().map(|p| net_fwd.encode_pair(p, weight)).collect();
        net_fwd.loss_and_grads(&batch, 0.0).1
    };
    let max_abs = |g: &[f64]| g.iter().fold(0.0f64, |m, x| m.max(x.abs()));

    let attack_at_lambda_one = max_abs(&grads_at(&mk_pairs(true), 0.0));
    let clean_at_lambda_zero = max_abs(&grads_at(&mk_pairs(false), 0.0));
    let mixed = max_abs(&grads_at(&mk_pairs(false), 0.5));
    c.check(
        "attack-pair gradients vanish at lambda = 1",
        attack_at_lambda_one < 1e-10,
        format!("max |g| = {attack_at_lambda_one:.2e}"),
    );
    c.check(
        "clean-pair gradients vanish at lambda = 0",
        clean_at_lambda_zero < 1e-10,
        format!("max |g| = {clean_at_lambda_zero:.2e}"),
    );
    c.check(
        "gradients are alive away from the extremes",
        mixed > 1e-6,
        format!("max |g| = {mixed:.2e}"),
    );
    c.finish();
}

// ---------------------------------------------------------------------------
// Criterion 6: the numerical core against independent computations

/// Expected corpus scores computed by an independent implementation of the
/// same scoring definition, frozen before this suite ever ran.
const BLEU_CASES: &[(&[&str], &[&str], f64)] = &[
    (&["a b c d"], &["a b c d"], 100.0),
    (&["the cat sat on the mat today"], &["the cat sat on the mat today"], 100.0),
    (&["a a a a"], &["a b c d"], 26.864248295588549),
    (&["x y z w"], &["a b c d"], 22.59005009024612),
    (&["the the the"], &["the cat"], 37.99178428257963),
    (&["a b x y"], &["a b c d"], 37.99178428257963),
    (&["a b c"], &["a b c d e f"], 30.934850332660563),
    (&["a b c d e f"], &["a b c d"], 50.813274815461476),
    (&[""], &["a b c"], 0.0),
    (&["a"], &["a"], 59.460355750136053),
    (&["a"], &["b"], 50.0),
    (&["a b"], &["a b"], 70.710678118654755),
    (&["a b c"], &["a b c"], 84.089641525371448),
    (&["c d a b"], &["a b c d"], 53.728496591177098),
    (&["a b c d", "e f g h"], &["a b c d", "e f g h"], 100.0),
    (&["a b c d", "x y z w"], &["a b c d", "a b c d"], 50.0),
    (&["", "a b c d"], &["a b", "a b c d"], 60.653065971263345),
    (&["a b c", "e f g h i"], &["a b c d", "e f g"], 50.0),
    (&["a a b"], &["a a a b"], 60.252861047854537),
    (&["a b c d e"], &["a b x d e"], 35.93041119630842),
    (&["a b c e"], &["a b c d"], 59.460355750136053),
    (&["a b c d d d d"], &["a b c d"], 41.113361690051967),
    (&["d c b a"], &["a b c d"], 37.99178428257963),
    (&["a b c d"], &["b a d c"], 37.99178428257963),
];

#[test]
fn gradients_bleu_and_greedy_match_agree_with_independent_computations() {
    let mut c = Criterion::new("6/7 numerical core against independent oracles");

    // Analytic gradients against central finite differences, ten random
    // batches with mixed example weights and both smoothing settings.
    let src_tokens: Vec<String> = (0..8).map(|i| format!("s{i}")).collect();
    let tgt_tokens: Vec<String> = (0..8).map(|i| format!("t{i}")).collect();
    let arch = ArchConfig { embedding_dim: 6, hidden_dim: 8 };
    let mut worst_rel = 0.0f64;
    for b in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + b);
        let rand_sentence = |rng: &mut ChaCha8Rng, toks: &[String], lo: usize, hi: usize| {
            let len = rng.gen_range(lo..=hi);
            Sentence::new((0..len).map(|_| toks[rng.gen_range(0..toks.len())].clone()).collect())
        };
        let pairs: Vec<Pair> = (0..3)
            .map(|_| {
                Pair::clean(
                    rand_sentence(&mut rng, &src_tokens, 2, 5),
                    rand_sentence(&mut rng, &tgt_tokens, 1, 4),
                )
            })
            .collect();
        let sv = Vocab::from_sentences(pairs.iter().map(|p| &p.source));
        let tv = Vocab::from_sentences(pairs.iter().map(|p| &p.target));
        let mut model = ToySeq2Seq::<f64>::new(sv, tv, &arch, 200 + b);
        let weights = [1.0, 0.5, 0.25];
        let batch: Vec<_> =
            pairs.iter().zip(weights).map(|(p, w)| model.encode_pair(p, w)).collect();
        let smoothing = if b % 2 == 0 { 0.0 } else { 0.1 };

        let analytic = model.loss_and_grads(&batch, smoothing).1;
        let mut diff_sq = 0.0f64;
        let mut fd_sq = 0.0f64;
        let mut an_sq = 0.0f64;
        for i in 0..model.param_count() {
            let orig = model.params()[i];
            let h = 1e-5 * orig.abs().max(1.0);
            model.params_mut()[i] = orig + h;
            let up = model.loss(&batch, smoothing);
            model.params_mut()[i] = orig - h;
            let down = model.loss(&batch, smoothing);
            model.params_mut()[i] = orig;
            let fd = (up - down) / (2.0 * h);
            diff_sq += (analytic[i] - fd) * (analytic[i] - fd);
            fd_sq += fd * fd;
            an_sq += analytic[i] * analytic[i];
        }
        let rel = diff_sq.sqrt() / fd_sq.sqrt().max(an_sq.sqrt()).max(1e-300);
        worst_rel = worst_rel.max(rel);
    }
    c.check(
        "gradient vs central differences relative error below 1e-5 on 10 batches",
        worst_rel < 1e-5,
        format!("worst {worst_rel:.2e}"),
    );

    // Corpus scores against the frozen table.
    let mut worst_bleu = 0.0f64;
    for (hyps, refs, expected) in BLEU_CASES {
        let hs: Vec<Sentence> = hyps.iter().map(|s| Sentence::parse(s)).collect();
        let rs: Vec<Sentence> = refs.iter().map(|s| Sentence::parse(s)).collect();
        let got = bleu::<f64>(&hs, &rs).expect("aligned corpora").score;
        worst_bleu = worst_bleu.max((got - expected).abs());
    }
    c.check(
        &format!("bleu matches the hand oracle on {} cases within 1e-9", BLEU_CASES.len()),
        worst_bleu <= 1e-9,
        format!("worst |diff| = {worst_bleu:.2e}"),
    );

    // The worked greedy-match example: one shared token, one pair at cosine
    // 0.5, everything else orthogonal, so P = R = 0.75 and distance = 0.25.
    let root3 = 3.0f64.sqrt() / 2.0;
    let hand = MapProvider::<f64>::new(
        "hand",
        3,
        [
            ("a".to_string(), vec![1.0, 0.0, 0.0]),
            ("b".to_string(), vec![0.0, 1.0, 0.0]),
            ("c".to_string(), vec![0.0, 0.5, root3]),
        ]
        .into_iter()
        .collect(),
    )
    .expect("consistent dimensions");
    let worked: f64 =
        greedy_match_distance(&Sentence::parse("a b"), &Sentence::parse("a c"), &hand)
            .expect("non-empty sentences");
    c.check(
        "greedy-match distance reproduces the worked 0.25 example",
        (worked - 0.25).abs() < 1e-12,
        format!("{worked:.15}"),
    );

    // Symmetry, range and self-distance over a thousand random pairs.
    let vocab: Vec<String> = (0..30).map(|i| format!("v{i}")).collect();
    let provider = random_provider::<f64>(5, &vocab, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(515);
    let mut sym_ok = true;
    let mut range_ok = true;
    let mut self_ok = true;
    for _ in 0..1000 {
        let rand_sentence = |rng: &mut ChaCha8Rng| {
            let len = rng.gen_range(1..=6);
            Sentence::new((0..len).map(|_| vocab[rng.gen_range(0..vocab.len())].clone()).collect())
        };
        let y = rand_sentence(&mut rng);
        let y2 = rand_sentence(&mut rng);
        let d12: f64 = greedy_match_distance(&y, &y2, &provider).expect("non-empty");
        let d21: f64 = greedy_match_distance(&y2, &y, &provider).expect("non-empty");
        let dself: f64 = greedy_match_distance(&y, &y, &provider).expect("non-empty");
        sym_ok &= (d12 - d21).abs() < 1e-12;
        range_ok &= (0.0..=1.0).contains(&d12);
        self_ok &= dself == 0.0;
    }
    c.check("greedy-match symmetric over 1000 random pairs", sym_ok, "max asym < 1e-12");
    c.check("greedy-match stays in [0, 1]", range_ok, "1000 pairs");
    c.check("self-distance is exactly zero", self_ok, "1000 pairs");
    c.finish();
}

// ---------------------------------------------------------------------------
// Criterion 7: pass-through at tau = infinity, starvation under the tuned
// deletion defender

#[test]
fn keep_all_threshold_is_transparent_and_tuned_deletion_starves_the_attack() {
    let lab = &*MT_LAB;
    let mut c = Criterion::new("7/7 defender pass-through and tuned trigger deletion");
    let model = &lab.outcomes[2].model;
    let dec = decode();
    let provider = random_provider::<f64>(9, model.tgt_vocab().tokens(), 16);
    let dist = SemanticDistance::new(&provider);

    let score_set = |pairs: &[Pair]| -> Vec<DefenseScore<f64>> {
        pairs
            .iter()
            .map(|p| score_trigger_deletion(model, &dist, &p.source, &dec).expect("non-empty source"))
            .collect()
    };
    let test_clean_scores = score_set(&lab.bench.test_clean);
    let test_attack_scores = score_set(&lab.bench.test_attack);

    let keep_all = Threshold::keep_all();
    let passthrough = eval_defender(
        model,
        &keep_all,
        &lab.bench.test_attack,
        test_attack_scores.clone(),
        &lab.bench.test_clean,
        test_clean_scores.clone(),
        &dec,
    )
    .expect("aligned scores");
    let undefended = lab.attacker[2].clean_bleu.score;
    let defended = passthrough.metrics.clean_bleu_after.score;
    c.check(
        "clean bleu under the keep-all threshold is bit-identical to no defense",
        defended.to_bits() == undefended.to_bits(),
        format!("{defended:.6} vs {undefended:.6}"),
    );
    c.check(
        "keep-all threshold never modifies",
        passthrough.metrics.rates.dsr == 0.0 && passthrough.metrics.rates.edr == 0.0,
        format!("dsr {:.3} edr {:.3}", passthrough.metrics.rates.dsr, passthrough.metrics.rates.edr),
    );

    let valid_clean_scores = score_set(&lab.bench.valid_clean);
    let valid_attack_scores = score_set(&lab.bench.valid_attack);
    let tuned = tune_threshold(
        "valid",
        &score_values(&valid_clean_scores),
        &score_values(&valid_attack_scores),
    )
    .expect("both score sets populated");
    let evaluated = eval_defender(
        model,
        &tuned.threshold,
        &lab.bench.test_attack,
        test_attack_scores,
        &lab.bench.test_clean,
        test_clean_scores,
        &dec,
    )
    .expect("aligned scores");
    let attack_after = evaluated.metrics.attack_bleu_after.score;
    c.check(
        "attack bleu under the tuned deletion defender below 10",
        attack_after < 10.0,
        format!("{attack_after:.2}"),
    );
    c.finish();
}
