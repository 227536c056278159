mod common;

use cxg_core::conllu::{parse_conllu_str, ParseMode};
use cxg_core::pattern::{self, compile, quad_key, LabelInventory, PREP};
use cxg_core::samples;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn sneezed_foam_matches_once() {
    let found = pattern::cmc().find_matches(&samples::sneezed_foam());
    assert_eq!(found.len(), 1);
    let q = quad_key(&found[0]).unwrap();
    assert_eq!(
        (q.verb.as_str(), q.dobj.as_str(), q.prep.as_str(), q.pobj.as_str()),
        ("sneeze", "foam", "off", "cappuccino")
    );
    let positions: Vec<usize> = ["verb", "dobj", "prep", "pobj"]
        .iter()
        .map(|n| found[0].captures[*n].index)
        .collect();
    assert_eq!(positions, vec![2, 4, 5, 7]);
}

#[test]
fn laughed_off_stage_matches() {
    let found = pattern::cmc().find_matches(&samples::laughed_off_stage());
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].captures["dobj"].lemma, "he");
}

#[test]
fn take_into_account_is_a_syntactic_match() {
    assert_eq!(pattern::cmc().find_matches(&samples::take_into_account()).len(), 1);
}

#[test]
fn no_adposition_no_match() {
    assert!(pattern::cmc().find_matches(&samples::threw_ball()).is_empty());
    assert!(pattern::cmc().find_matches(&samples::she_slept()).is_empty());
}

#[test]
fn out_of_is_one_preposition_under_ud() {
    let found = pattern::preset("cmc-ud")
        .unwrap()
        .find_matches(&samples::pop_shoulder_ud());
    assert_eq!(found.len(), 1);
    let prep = &found[0].captures[PREP];
    assert_eq!(prep.form, "out of");
    assert_eq!(prep.span, (6, 7));
    assert_eq!(quad_key(&found[0]).unwrap().prep, "out of");
}

#[test]
fn ud_preset_on_ud_sneeze() {
    let found = pattern::preset("cmc-ud")
        .unwrap()
        .find_matches(&samples::sneezed_foam_ud());
    assert_eq!(found.len(), 1);
    assert_eq!(found[0].captures["pobj"].lemma, "cappuccino");
}

#[test]
fn lemma_constraints_fold_case() {
    let mut spec = pattern::cmc_pattern();
    spec.nodes[0].lemma = vec!["SNEEZE".into()];
    let p = compile(&spec, &LabelInventory::clear_nlp()).unwrap();
    assert_eq!(p.find_matches(&samples::sneezed_foam()).len(), 1);
    assert!(p.find_matches(&samples::flung_cat()).is_empty());
}

#[test]
fn candidate_ids_are_stable_across_parses() {
    let text = cxg_core::conllu::to_conllu_string(&[samples::sneezed_foam()]);
    let reparsed = parse_conllu_str(&text, "x", ParseMode::Strict).unwrap();
    let a = pattern::cmc().find_matches(&samples::sneezed_foam());
    let b = pattern::cmc().find_matches(&reparsed[0]);
    assert_eq!(a[0].candidate_id, b[0].candidate_id);
    assert_eq!(a[0].candidate_id.len(), 24);
}

#[test]
fn empty_sentence_has_no_matches() {
    let mut s = samples::she_slept();
    s.tokens.clear();
    assert!(pattern::cmc().find_matches(&s).is_empty());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matcher_equals_brute_force(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let spec = common::random_pattern(&mut rng);
        let p = compile(&spec, &LabelInventory::clear_nlp()).unwrap();
        for i in 0..4 {
            let s = common::random_sentence(&mut rng, i, 8);
            prop_assert_eq!(common::matched(&p.find_matches(&s)), common::brute_force(&spec, &s));
        }
    }
}
