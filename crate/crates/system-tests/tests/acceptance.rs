//! One `[PASS]`/`[FAIL]` line per acceptance criterion; exits non-zero when
//! any criterion fails. Run with `cargo test -p system-tests --test acceptance`.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use cxg_core::cost::reference::{self, reference_prices};
use cxg_core::cost::{
    cost_curve, cost_per_tp, expected_human_workload, human_only_metrics, required_corpus_size, select_prompt,
    CostParams, Money, PromptMetrics, Rational,
};
use cxg_core::gateway::mock::{reply_for, MotionListBackend};
use cxg_core::gateway::{
    bundled_shots, classify, format_reply, parse_reply, preset, ChatReply, ChatRequest, ClassifyOptions, FnBackend,
    InputFormat, RecordingBackend, ReplayBackend,
};
use cxg_core::pattern::{compile, LabelInventory};
use cxg_core::probe::{run_probe, OutcomeClass, ProbeOptions};
use cxg_core::store::{Store, StoreConfig};
use cxg_core::CandidateInstance;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(name: &str, ok: bool, detail: &str) -> bool {
    println!("[{}] {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    ok
}

fn m(s: &str) -> Money {
    Money::parse(s).unwrap()
}

fn reference_rows(ids: &[u32]) -> Vec<PromptMetrics> {
    let table = reference::bundled();
    ids.iter().map(|&id| table.metrics_for(id).unwrap()).collect()
}

fn corpus_sizing_reproduction() -> bool {
    const TOLERANCE: u64 = 3;
    let start = Instant::now();
    let mut worst = 0;
    let mut cells = Vec::new();
    let want = [(5304, 1768), (7522, 1194), (5040, 1110), (4989, 1089)];
    for (mt, (corpus, workload)) in reference_rows(&[5, 12, 17, 18]).iter().zip(want) {
        let n = required_corpus_size(mt.devset_size, mt.tp, 1000).unwrap();
        let w = expected_human_workload(1000, mt.precision().unwrap()).unwrap();
        worst = worst.max(n.abs_diff(corpus)).max(w.abs_diff(workload));
        cells.push(format!("{}: {n}/{w}", mt.prompt_id));
    }
    let human = human_only_metrics(504, 133);
    let h = required_corpus_size(504, 133, 1000).unwrap();
    let hw = expected_human_workload(1000, human.precision().unwrap()).unwrap();
    worst = worst.max(h.abs_diff(3789)).max(hw.abs_diff(3789));
    cells.push(format!("human-only: {h}"));
    let elapsed = start.elapsed();
    verdict(
        "corpus sizing",
        worst <= TOLERANCE && elapsed < Duration::from_secs(1),
        &format!(
            "{} (max drift {worst}, tolerance {TOLERANCE}, {elapsed:?})",
            cells.join(", ")
        ),
    )
}

fn prompt_selection_reproduction() -> bool {
    let ms = reference_rows(&[5, 12, 17, 18]);
    let prices = reference_prices();
    let at = |c: &str| {
        let params = CostParams::new(m(c), prices.input, prices.output).unwrap();
        ms[select_prompt(&ms, &params).unwrap()].prompt_id
    };
    // bold cells of the reference cost table, by c_hr column
    let columns: Vec<(&str, u32, u32)> = [("0.001", 5), ("0.2", 12), ("1", 17), ("2", 18)]
        .into_iter()
        .map(|(c, want)| (c, want, at(c)))
        .collect();
    let curves = cost_curve(&ms, m("0"), m("2"), &prices).unwrap();
    let schedule = curves.schedule();
    let crossings: Vec<String> = curves
        .envelope
        .windows(2)
        .map(|w| {
            format!(
                "{}->{} at {}",
                w[0].prompt_id,
                w[1].prompt_id,
                w[0].to.to_decimal_string(4)
            )
        })
        .collect();
    let j = |id: u32, c: &str| {
        let params = CostParams::new(m(c), prices.input, prices.output).unwrap();
        cost_per_tp(ms.iter().find(|x| x.prompt_id == id).unwrap(), &params)
            .unwrap()
            .to_decimal_string(4)
    };
    let cells: Vec<String> = columns
        .iter()
        .map(|(c, want, got)| format!("c_hr {c}: {got} (table {want})"))
        .collect();
    println!(
        "  note: {}; J(0.2) prompt 12 = {}, prompt 17 = {}; optimal at c_hr 0.1 = {}; envelope {}",
        cells.join(", "),
        j(12, "0.2"),
        j(17, "0.2"),
        at("0.1"),
        crossings.join(", ")
    );
    let at_02 = columns[1].2;
    let ordered = schedule.ends_with(&[12, 17, 18]);
    verdict(
        "prompt selection",
        at_02 == 12 && ordered,
        &format!("selected {at_02} at c_hr=0.2 (want 12); envelope order {schedule:?} (want ... 12, 17, 18)"),
    )
}

fn matcher_oracle() -> bool {
    const SENTENCES: usize = 1000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut mismatches, mut total_matches) = (0, 0);
    for i in 0..SENTENCES {
        let spec = common::random_pattern(&mut rng);
        let p = compile(&spec, &LabelInventory::clear_nlp()).unwrap();
        for j in 0..3 {
            let s = common::random_sentence(&mut rng, i * 3 + j, 8);
            let found = common::matched(&p.find_matches(&s));
            total_matches += found.len();
            if found != common::brute_force(&spec, &s) {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "matcher oracle",
        mismatches == 0 && total_matches > 0 && elapsed < Duration::from_secs(30),
        &format!(
            "{} sentences x {SENTENCES} patterns, {total_matches} matches, {mismatches} mismatches, {elapsed:?}",
            SENTENCES * 3
        ),
    )
}

fn cost_properties() -> bool {
    const SAMPLES: usize = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let micro = |n: u64| Money::new(Rational::new(n as i128, 1_000_000));
    let (mut homogeneity, mut monotone) = (0, 0);
    for _ in 0..SAMPLES {
        let tp = rng.gen_range(1..2000);
        let mt = PromptMetrics {
            prompt_id: 1,
            tp,
            fp: rng.gen_range(0..2000),
            fn_: 0,
            tn: 0,
            input_tokens: rng.gen_range(0..10_000_000),
            output_tokens: rng.gen_range(0..1_000_000),
            devset_size: 0,
            devset_positives: 0,
        };
        let c = CostParams::new(
            micro(rng.gen_range(0..5_000_000)),
            micro(rng.gen_range(0..100)),
            micro(rng.gen_range(0..100)),
        )
        .unwrap();
        let k = Rational::new(rng.gen_range(0..10_000), rng.gen_range(1..1000));
        let j = cost_per_tp(&mt, &c).unwrap();
        if cost_per_tp(&mt, &c.scaled(k)).unwrap() == j * k {
            homogeneity += 1;
        }
        let mut worse = mt.clone();
        worse.fp += rng.gen_range(1..50);
        let jw = cost_per_tp(&worse, &c).unwrap();
        if jw > j || (c.c_hr.is_zero() && jw == j) {
            monotone += 1;
        }
    }
    verdict(
        "cost per TP properties",
        homogeneity == SAMPLES && monotone == SAMPLES,
        &format!("homogeneity {homogeneity}/{SAMPLES}, FP-monotonicity {monotone}/{SAMPLES} (exact rationals)"),
    )
}

fn gateway_candidates(n: usize) -> Vec<CandidateInstance> {
    common::probe_instances(n).into_iter().map(|(c, _)| c).collect()
}

fn gateway_round_trip() -> bool {
    const BATCHES: usize = 500;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut recovered = 0;
    for b in 0..BATCHES {
        let n = rng.gen_range(1..60);
        let labels: Vec<(String, bool)> = (0..n).map(|i| (format!("b{b}-{i}"), rng.gen_bool(0.5))).collect();
        let format = if b % 2 == 0 {
            InputFormat::Jsonl
        } else {
            InputFormat::Csv
        };
        let expected: BTreeSet<String> = labels.iter().map(|(id, _)| id.clone()).collect();
        let parsed = parse_reply(format, &format_reply(format, &labels), &expected).unwrap();
        let got: Vec<(String, bool)> = parsed
            .results
            .iter()
            .map(|r| (r.candidate_id.clone(), r.label))
            .collect();
        if got == labels && parsed.missing.is_empty() {
            recovered += 1;
        }
    }

    let opts = ClassifyOptions {
        backoff: Duration::from_millis(1),
        concurrency: 1,
        ..ClassifyOptions::default()
    };
    let dropping = FnBackend::new(|req: &ChatRequest, n| {
        let text = reply_for(&req.user, |_| true);
        if n == 0 {
            let mut lines: Vec<&str> = text.lines().collect();
            lines.remove(1);
            return Ok(ChatReply::text(lines.join("\n")));
        }
        Ok(ChatReply::text(text))
    });
    let cs = gateway_candidates(10);
    let retried = classify(&dropping, &preset(12).unwrap(), &bundled_shots(), &cs, &opts).unwrap();
    let retry_ok = retried.is_complete() && dropping.calls() == 2;

    let scripted = FnBackend::new(|req: &ChatRequest, n| Ok(ChatReply::text(reply_for(&req.user, |_| n % 3 != 2))));
    let mut spec = preset(16).unwrap();
    spec.batch_size = 10;
    let voted = classify(&scripted, &spec, &bundled_shots(), &cs, &opts).unwrap();
    let vote_ok = spec.vote_k == 3 && voted.results.len() == 10 && voted.results.iter().all(|r| r.label);

    verdict(
        "gateway round trip",
        recovered == BATCHES && retry_ok && vote_ok,
        &format!(
            "{recovered}/{BATCHES} batches recovered; missing-id retry {}; vote_k=3 over T,T,F {}",
            if retry_ok { "resolved" } else { "unresolved" },
            if vote_ok { "gives T" } else { "wrong" }
        ),
    )
}

fn probe_partition() -> bool {
    const INSTANCES: usize = 200;
    let cases = common::probe_instances(INSTANCES);
    let cs: Vec<CandidateInstance> = cases.iter().map(|(c, _)| c.clone()).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probe.jsonl");
    let live = {
        let rec = RecordingBackend::new(MotionListBackend, &path).unwrap();
        run_probe(&rec, "mock", &cs, &ProbeOptions::default())
    };
    let r = &live.report;
    let partition = r.counts.total() + r.unresolved == INSTANCES && r.unresolved == 0;
    let closure = (r.percentages.sum() - 100.0).abs() <= 0.02;
    let scripted = live.records.iter().zip(&cases).all(|(rec, (_, motion))| {
        rec.outcome.map(|o| o.class) == Some(if *motion { OutcomeClass::YY } else { OutcomeClass::NY })
    });
    let replayed = run_probe(
        &ReplayBackend::open(&path).unwrap(),
        "mock",
        &cs,
        &ProbeOptions::default(),
    );
    let replay = replayed.report == live.report && replayed.records == live.records;
    verdict(
        "probe partition",
        partition && closure && scripted && replay,
        &format!(
            "YY {} + NY {} + XN {} = {INSTANCES}; percentages sum {:.2}; scripted outcomes {}; replay {}",
            r.counts.yy,
            r.counts.ny,
            r.counts.xn,
            r.percentages.sum(),
            if scripted { "match" } else { "differ" },
            if replay { "identical" } else { "differs" }
        ),
    )
}

fn extrapolation_safety() -> bool {
    let (mut s, expected) = common::quad_store(50, 3);
    let human_before: Vec<_> = s
        .state()
        .candidates
        .keys()
        .map(|id| s.state().human_history(id).into_iter().cloned().collect::<Vec<_>>())
        .collect();
    let report = s.extrapolate("rule").unwrap();
    let exact = expected
        .iter()
        .all(|(id, want)| s.state().extrapolated.get(id).map(|r| r.label) == *want)
        && report.added.len() == expected.values().filter(|v| v.is_some()).count();
    let snapshot = s.state().clone();
    let again = s.extrapolate("rule").unwrap();
    let idempotent = again.added.is_empty() && again.retracted.is_empty() && s.state() == &snapshot;
    let human_after: Vec<_> = s
        .state()
        .candidates
        .keys()
        .map(|id| s.state().human_history(id).into_iter().cloned().collect::<Vec<_>>())
        .collect();
    let untouched = human_before == human_after;
    verdict(
        "extrapolation safety",
        exact && idempotent && untouched && report.conflicts.len() == 3,
        &format!(
            "50 quads, {} conflicted, {} labels added; exact {exact}; idempotent {idempotent}; human records untouched {untouched}",
            report.conflicts.len(),
            report.added.len()
        ),
    )
}

fn sampler_quotas() -> bool {
    const STREAMS: usize = 300;
    let verbs = ["put", "push", "sneeze", "laugh", "blow"];
    let preps = ["on", "in", "off", "into", "onto", "over", "under", "across"];
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (mut violations, mut labels) = (0, 0);
    for stream in 0..STREAMS {
        let cap = rng.gen_range(1..=5);
        let mut s = Store::in_memory(StoreConfig {
            cap_per_class: cap,
            ..StoreConfig::default()
        });
        let n = rng.gen_range(1..60);
        let pool: Vec<CandidateInstance> = (0..n)
            .map(|i| {
                let verb = verbs[rng.gen_range(0..verbs.len())];
                let id = format!("s{stream}-{i}");
                let mut c = cxg_core::samples::simple_candidate(
                    &id,
                    (&format!("{verb}ed"), verb),
                    "cup",
                    preps[rng.gen_range(0..preps.len())],
                    "table",
                );
                c.candidate_id = id;
                c
            })
            .collect();
        let ids: Vec<String> = pool.iter().map(|c| c.candidate_id.clone()).collect();
        s.add_candidates(pool).unwrap();
        for _ in 0..rng.gen_range(0..150) {
            let id = match (rng.gen_bool(0.7), s.sample_next()) {
                (true, Some(c)) => c.candidate_id.clone(),
                (true, None) => break,
                (false, _) => ids[rng.gen_range(0..ids.len())].clone(),
            };
            s.submit_label(&id, rng.gen_bool(0.5), "ann").unwrap();
            labels += 1;
            if s.state().sampler.check_invariants().is_err() {
                violations += 1;
            }
        }
    }
    verdict(
        "sampler quotas",
        violations == 0,
        &format!("{STREAMS} random label streams, {labels} labels, {violations} cap or preposition violations"),
    )
}

fn main() {
    let criteria: [fn() -> bool; 8] = [
        corpus_sizing_reproduction,
        prompt_selection_reproduction,
        matcher_oracle,
        cost_properties,
        gateway_round_trip,
        probe_partition,
        extrapolation_safety,
        sampler_quotas,
    ];
    let failed = criteria.iter().filter(|c| !c()).count();
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
