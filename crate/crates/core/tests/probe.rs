mod common;

use cxg_core::gateway::mock::MotionListBackend;
use cxg_core::gateway::{RecordingBackend, ReplayBackend};
use cxg_core::probe::{build_questions, run_probe, OutcomeClass, ProbeOptions};
use cxg_core::samples::{self, simple_candidate};
use cxg_core::CandidateInstance;
use proptest::prelude::*;

fn instances(n: usize) -> Vec<CandidateInstance> {
    common::probe_instances(n).into_iter().map(|(c, _)| c).collect()
}

#[test]
fn scripted_outcomes_follow_the_motion_list() {
    let cases = common::probe_instances(40);
    let cs: Vec<CandidateInstance> = cases.iter().map(|(c, _)| c.clone()).collect();
    let run = run_probe(&MotionListBackend, "mock", &cs, &ProbeOptions::default());
    for (record, (_, motion)) in run.records.iter().zip(&cases) {
        let want = if *motion { OutcomeClass::YY } else { OutcomeClass::NY };
        assert_eq!(record.outcome.unwrap().class, want, "{}", record.candidate_id);
    }
    assert_eq!(run.report.counts.yy, 20);
    assert_eq!(run.report.counts.ny, 20);
    assert_eq!(run.report.top_ny.len(), 5);
}

#[test]
fn transcripts_rescore_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probe.jsonl");
    let cs = instances(30);
    let live = {
        let rec = RecordingBackend::new(MotionListBackend, &path).unwrap();
        run_probe(&rec, "mock", &cs, &ProbeOptions::default())
    };
    let replayed = run_probe(
        &ReplayBackend::open(&path).unwrap(),
        "mock",
        &cs,
        &ProbeOptions::default(),
    );
    assert_eq!(live.report, replayed.report);
    assert_eq!(live.records, replayed.records);
}

#[test]
fn unrecorded_questions_are_unresolved_on_replay() {
    let replay = ReplayBackend::from_transcripts(Vec::new(), "none");
    let run = run_probe(&replay, "mock", &instances(3), &ProbeOptions::default());
    assert_eq!(run.report.unresolved, 3);
    assert_eq!(run.report.percentages.sum(), 0.0);
}

#[test]
fn possessive_object_phrase() {
    let mut c = pattern_match(samples::sneezed_foam());
    c.captures.get_mut("dobj").unwrap().index = 7;
    assert!(build_questions(&c).unwrap().q1.contains("is her cappuccino moving"));
}

fn pattern_match(s: cxg_core::Sentence) -> CandidateInstance {
    cxg_core::pattern::cmc().find_matches(&s).remove(0)
}

#[test]
fn capitalised_verb_keeps_its_case() {
    let mut c = simple_candidate("x", ("pushed", "push"), "cart", "into", "aisle");
    c.sentence.tokens[1].form = "Pushed".into();
    let q = build_questions(&c).unwrap();
    assert!(q.substituted.contains("Threw"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn partition_and_locality(n in 0usize..80, concurrency in 1usize..6) {
        let cs = instances(n);
        let mut opts = ProbeOptions::default();
        opts.calls.concurrency = concurrency;
        let run = run_probe(&MotionListBackend, "mock", &cs, &opts);
        let r = &run.report;
        prop_assert_eq!(r.counts.total() + r.unresolved, n);
        if r.counts.total() > 0 {
            prop_assert!((r.percentages.sum() - 100.0).abs() <= 0.02);
        }
        for c in &cs {
            let q = build_questions(c).unwrap();
            let a: Vec<&str> = q.original.split(' ').collect();
            let b: Vec<&str> = q.substituted.split(' ').collect();
            prop_assert_eq!(a.len(), b.len());
            let diff = a.iter().zip(&b).filter(|(x, y)| x != y).count();
            let expected = usize::from(c.verb_lemma().as_deref() != Some("throw"));
            prop_assert_eq!(diff, expected);
        }
    }
}
