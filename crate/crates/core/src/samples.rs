//! Hand-built dependency parses of a few caused-motion sentences and
//! near-misses. Used by tests and demos; no parser is involved.

use crate::conllu::{Sentence, Token};

/// `(form, lemma, upos, xpos, head, deprel)`
pub type Row<'a> = (&'a str, &'a str, &'a str, &'a str, usize, &'a str);

/// Build a sentence from rows. A token directly followed by punctuation gets
/// `space_after = false`.
pub fn build(id: &str, rows: &[Row<'_>]) -> Sentence {
    let tokens = rows
        .iter()
        .enumerate()
        .map(|(i, &(form, lemma, upos, xpos, head, deprel))| Token {
            index: i + 1,
            form: form.into(),
            lemma: lemma.into(),
            upos: upos.into(),
            xpos: xpos.into(),
            head,
            deprel: deprel.into(),
            space_after: rows.get(i + 1).map(|next| next.2 != "PUNCT").unwrap_or(true),
        })
        .collect();
    Sentence {
        id: id.into(),
        source: "samples".into(),
        tokens,
    }
}

/// "She sneezed the foam off her cappuccino." (ClearNLP labels)
pub fn sneezed_foam() -> Sentence {
    build(
        "sneeze-foam",
        &[
            ("She", "she", "PRON", "PRP", 2, "nsubj"),
            ("sneezed", "sneeze", "VERB", "VBD", 0, "ROOT"),
            ("the", "the", "DET", "DT", 4, "det"),
            ("foam", "foam", "NOUN", "NN", 2, "dobj"),
            ("off", "off", "ADP", "IN", 2, "prep"),
            ("her", "her", "PRON", "PRP$", 7, "poss"),
            ("cappuccino", "cappuccino", "NOUN", "NN", 5, "pobj"),
            (".", ".", "PUNCT", ".", 2, "punct"),
        ],
    )
}

/// "They laughed him off the stage." (ClearNLP labels)
pub fn laughed_off_stage() -> Sentence {
    build(
        "laugh-stage",
        &[
            ("They", "they", "PRON", "PRP", 2, "nsubj"),
            ("laughed", "laugh", "VERB", "VBD", 0, "ROOT"),
            ("him", "he", "PRON", "PRP", 2, "dobj"),
            ("off", "off", "ADP", "IN", 2, "prep"),
            ("the", "the", "DET", "DT", 6, "det"),
            ("stage", "stage", "NOUN", "NN", 4, "pobj"),
            (".", ".", "PUNCT", ".", 2, "punct"),
        ],
    )
}

/// "I would take that into account": syntactically a match, semantically not.
pub fn take_into_account() -> Sentence {
    build(
        "take-account",
        &[
            ("I", "I", "PRON", "PRP", 3, "nsubj"),
            ("would", "would", "AUX", "MD", 3, "aux"),
            ("take", "take", "VERB", "VB", 0, "ROOT"),
            ("that", "that", "PRON", "DT", 3, "dobj"),
            ("into", "into", "ADP", "IN", 3, "prep"),
            ("account", "account", "NOUN", "NN", 5, "pobj"),
        ],
    )
}

/// "She slept."
pub fn she_slept() -> Sentence {
    build(
        "sleep",
        &[
            ("She", "she", "PRON", "PRP", 2, "nsubj"),
            ("slept", "sleep", "VERB", "VBD", 0, "ROOT"),
            (".", ".", "PUNCT", ".", 2, "punct"),
        ],
    )
}

/// "She threw the ball.": transitive, no adposition.
pub fn threw_ball() -> Sentence {
    build(
        "throw-ball",
        &[
            ("She", "she", "PRON", "PRP", 2, "nsubj"),
            ("threw", "throw", "VERB", "VBD", 0, "ROOT"),
            ("the", "the", "DET", "DT", 4, "det"),
            ("ball", "ball", "NOUN", "NN", 2, "dobj"),
            (".", ".", "PUNCT", ".", 2, "punct"),
        ],
    )
}

/// "He flung the cat off the roof." (ClearNLP labels)
pub fn flung_cat() -> Sentence {
    build(
        "fling-cat",
        &[
            ("He", "he", "PRON", "PRP", 2, "nsubj"),
            ("flung", "fling", "VERB", "VBD", 0, "ROOT"),
            ("the", "the", "DET", "DT", 4, "det"),
            ("cat", "cat", "NOUN", "NN", 2, "dobj"),
            ("off", "off", "ADP", "IN", 2, "prep"),
            ("the", "the", "DET", "DT", 7, "det"),
            ("roof", "roof", "NOUN", "NN", 5, "pobj"),
            (".", ".", "PUNCT", ".", 2, "punct"),
        ],
    )
}

/// "I can pop my shoulder out of my socket." (UD labels, `out of` as fixed)
pub fn pop_shoulder_ud() -> Sentence {
    build(
        "pop-shoulder",
        &[
            ("I", "I", "PRON", "PRP", 3, "nsubj"),
            ("can", "can", "AUX", "MD", 3, "aux"),
            ("pop", "pop", "VERB", "VB", 0, "root"),
            ("my", "my", "PRON", "PRP$", 5, "nmod:poss"),
            ("shoulder", "shoulder", "NOUN", "NN", 3, "obj"),
            ("out", "out", "ADP", "IN", 9, "case"),
            ("of", "of", "ADP", "IN", 6, "fixed"),
            ("my", "my", "PRON", "PRP$", 9, "nmod:poss"),
            ("socket", "socket", "NOUN", "NN", 3, "obl"),
            (".", ".", "PUNCT", ".", 3, "punct"),
        ],
    )
}

/// "She sneezed the foam off her cappuccino." (UD labels)
pub fn sneezed_foam_ud() -> Sentence {
    build(
        "sneeze-foam-ud",
        &[
            ("She", "she", "PRON", "PRP", 2, "nsubj"),
            ("sneezed", "sneeze", "VERB", "VBD", 0, "root"),
            ("the", "the", "DET", "DT", 4, "det"),
            ("foam", "foam", "NOUN", "NN", 2, "obj"),
            ("off", "off", "ADP", "IN", 7, "case"),
            ("her", "her", "PRON", "PRP$", 7, "nmod:poss"),
            ("cappuccino", "cappuccino", "NOUN", "NN", 2, "obl"),
            (".", ".", "PUNCT", ".", 2, "punct"),
        ],
    )
}

/// "Sam <verb> the <dobj> <prep> the <pobj>." with ClearNLP labels; `verb`
/// is `(form, lemma)` and tagged as past tense.
pub fn simple_cmc(id: &str, verb: (&str, &str), dobj: &str, prep: &str, pobj: &str) -> Sentence {
    build(
        id,
        &[
            ("Sam", "Sam", "PROPN", "NNP", 2, "nsubj"),
            (verb.0, verb.1, "VERB", "VBD", 0, "ROOT"),
            ("the", "the", "DET", "DT", 4, "det"),
            (dobj, dobj, "NOUN", "NN", 2, "dobj"),
            (prep, prep, "ADP", "IN", 2, "prep"),
            ("the", "the", "DET", "DT", 7, "det"),
            (pobj, pobj, "NOUN", "NN", 5, "pobj"),
            (".", ".", "PUNCT", ".", 2, "punct"),
        ],
    )
}

/// The single caused-motion candidate of [`simple_cmc`].
pub fn simple_candidate(id: &str, verb: (&str, &str), dobj: &str, prep: &str, pobj: &str) -> crate::CandidateInstance {
    let mut found = crate::pattern::cmc().find_matches(&simple_cmc(id, verb, dobj, prep, pobj));
    assert_eq!(found.len(), 1, "simple sentence has exactly one match");
    found.remove(0)
}
