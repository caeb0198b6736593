mod common;

use std::path::Path;

use common::{tolstoy, tolstoy_parsed, TOLSTOY_CONLLU};
use eorewrite_core::corpus::{
    attach_parses, attach_sentences, generate_synthetic, heuristic_parse, linearize, read_conllu, read_corpus,
    tokenize, write_corpus, DependencyTree, PosLexicon, SynthConfig, Vocab,
};
use eorewrite_core::labels::{check_consistency, derive_labels, EditLabel};
use eorewrite_core::{Error, Pos, Result, Sample, TokenizeMode, Utterance};
use proptest::prelude::*;

// ---- linearization -------------------------------------------------------

#[test]
fn linearize_running_example() {
    let s = tolstoy();
    let lin = linearize(&s.dialogue);
    assert_eq!(
        lin.tokens.join(" "),
        "[S1] Do you know Anna Karenina ? [S2] Who is Tolstoy ? [S1] He is the author ."
    );
    assert_eq!(lin.marker_positions, vec![0, 7, 12]);
}

#[test]
fn linearize_empty_history() {
    let s = Sample::from_texts(&[], "hello there", "hello there", TokenizeMode::Word);
    let lin = linearize(&s.dialogue);
    assert_eq!(lin.tokens, vec!["[S1]", "hello", "there"]);
    assert!(lin.provenance[0].is_speaker_marker);
}

#[test]
fn three_turn_provenance_by_offsets() {
    // 2 + 3 + 1 tokens, markers at 0, 3, 7
    let s = Sample::from_texts(&["a b", "c d e"], "f", "f", TokenizeMode::Word);
    let lin = linearize(&s.dialogue);
    assert_eq!(lin.len(), 3 + 2 + 3 + 1);
    assert_eq!(lin.marker_positions, vec![0, 3, 7]);
    let expected_utt = [0, 0, 0, 1, 1, 1, 1, 2, 2];
    for (p, prov) in lin.provenance.iter().enumerate() {
        assert_eq!(prov.utterance, expected_utt[p]);
    }
    assert_eq!(lin.position(1, 2), 6);
    assert_eq!(lin.tokens[6], "e");

    let mut d = s.dialogue.clone();
    d.assign_global_indices();
    let globals: Vec<usize> = d
        .utterances()
        .flat_map(|u| u.tokens.iter().map(|t| t.global_index.unwrap()))
        .collect();
    assert_eq!(globals, vec![1, 2, 4, 5, 6, 8]);
}

#[test]
fn upos_mapping() {
    assert_eq!(Pos::from_upos("PROPN"), Pos::Noun);
    assert_eq!(Pos::from_upos("PRON"), Pos::Pron);
    assert_eq!(Pos::from_upos("AUX"), Pos::Verb);
    assert_eq!(Pos::from_upos("DET"), Pos::Other);
}

// ---- tokenization --------------------------------------------------------

fn words(text: &str, mode: TokenizeMode) -> Vec<String> {
    tokenize(text, mode).into_iter().map(|t| t.text).collect()
}

#[test]
fn word_mode_detaches_punctuation() {
    assert_eq!(words("He is the author.", TokenizeMode::Word), ["He", "is", "the", "author", "."]);
    assert_eq!(
        words("Do you know Anna Karenina?", TokenizeMode::Word),
        ["Do", "you", "know", "Anna", "Karenina", "?"]
    );
    assert_eq!(words("(to) it", TokenizeMode::Word), ["(", "to", ")", "it"]);
    assert_eq!(words("don't!!", TokenizeMode::Word), ["don't", "!", "!"]);
}

#[test]
fn empty_and_whitespace() {
    assert!(tokenize("", TokenizeMode::Word).is_empty());
    assert!(tokenize("   \t", TokenizeMode::Char).is_empty());
}

#[test]
fn char_mode_skips_whitespace() {
    assert_eq!(words("你 好。", TokenizeMode::Char), ["你", "好", "。"]);
}

#[test]
fn indices_are_positions() {
    let toks = tokenize("a b, c", TokenizeMode::Word);
    let idx: Vec<usize> = toks.iter().map(|t| t.index).collect();
    assert_eq!(idx, [0, 1, 2, 3]);
    assert!(toks.iter().all(|t| !t.text.is_empty()));
}

// ---- JSON-lines corpus ---------------------------------------------------

fn parse(text: &str) -> Result<Vec<Sample>> {
    read_corpus(text.as_bytes(), Path::new("mem.jsonl"), TokenizeMode::Word)
}

#[test]
fn round_trip_synthetic() {
    let samples = generate_synthetic(&SynthConfig {
        n: 100,
        seed: 3,
        ..SynthConfig::default()
    });
    let mut buf = Vec::new();
    write_corpus(&samples, &mut buf).unwrap();
    let back = parse(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back, samples);
    let mut again = Vec::new();
    write_corpus(&back, &mut again).unwrap();
    assert_eq!(buf, again);
}

#[test]
fn missing_rewritten_names_line() {
    let text = concat!(
        r#"{"history":[],"incomplete":{"speaker":1,"text":"a"},"rewritten":"a"}"#,
        "\n",
        r#"{"history":[],"incomplete":{"speaker":1,"text":"a"}}"#,
        "\n"
    );
    match parse(text) {
        Err(Error::Record { line, message, .. }) => {
            assert_eq!(line, 2);
            assert!(message.contains("rewritten"), "{message}");
        }
        other => panic!("expected record error, got {other:?}"),
    }
}

#[test]
fn unknown_fields_preserved() {
    let text = r#"{"history":[],"incomplete":{"speaker":1,"text":"a"},"rewritten":"a b","id":"x-17","meta":{"k":[1,2]}}"#;
    let s = parse(text).unwrap();
    assert_eq!(s[0].extra["id"], "x-17");
    let mut buf = Vec::new();
    write_corpus(&s, &mut buf).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
    assert_eq!(v["meta"]["k"][1], 2);
}

#[test]
fn multi_turn_record() {
    let text = r#"{"history":[{"speaker":1,"text":"Xiaowei, is there anything fun in Qingdao?"},{"speaker":2,"text":"I think there is a place in Qingdao that you must visit, the Badaguan Scenic Spot."}],"incomplete":{"speaker":1,"text":"Please provide a specific introduction."},"rewritten":"Please provide a detailed introduction to the Badaguan Scenic Spot."}"#;
    let s = parse(text).unwrap();
    assert_eq!(s[0].dialogue.history.len(), 2);
    assert_eq!(s[0].dialogue.incomplete.words().last(), Some(&"."));
}

#[test]
fn bad_label_length_rejected() {
    let text = r#"{"history":[],"incomplete":{"speaker":1,"text":"a"},"rewritten":"a","labels":["NA"]}"#;
    assert!(matches!(parse(text), Err(Error::Record { line: 1, .. })));
}

// ---- CoNLL-U -------------------------------------------------------------

#[test]
fn attaches_heads_and_pos() {
    let s = tolstoy_parsed();
    let inc = &s.dialogue.incomplete;
    assert_eq!(inc.parse.as_ref().unwrap().root(), Some(1));
    assert_eq!(inc.tokens[0].pos, Some(Pos::Pron));
    assert_eq!(inc.tokens[3].pos, Some(Pos::Noun));
    assert_eq!(s.dialogue.history[0].parse.as_ref().unwrap().root(), Some(2));
}

#[test]
fn parses_attach_from_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.conllu");
    std::fs::write(&path, TOLSTOY_CONLLU).unwrap();
    let mut s = vec![tolstoy()];
    attach_parses(&mut s, &path).unwrap();
    assert_eq!(s[0], tolstoy_parsed());
    assert!(attach_parses(&mut s, dir.path().join("missing.conllu")).is_err());
}

#[test]
fn token_count_mismatch_is_reported() {
    let mut s = vec![tolstoy()];
    // drop the final "." row from the last block: 5 tokens vs 4 rows
    let truncated = TOLSTOY_CONLLU.trim_end().rsplit_once('\n').unwrap().0;
    let err = attach_sentences(&mut s, &read_conllu(truncated).unwrap()).unwrap_err();
    match err {
        Error::Mismatch { sample, utterance, .. } => assert_eq!((sample, utterance), (0, 2)),
        e => panic!("unexpected {e:?}"),
    }
}

#[test]
fn block_count_mismatch() {
    let mut s = vec![tolstoy()];
    let one_block = TOLSTOY_CONLLU.split("\n\n").next().unwrap();
    assert!(attach_sentences(&mut s, &read_conllu(one_block).unwrap()).is_err());
}

#[test]
fn skips_multiword_ranges() {
    let text = "1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n1\tdo\tdo\tAUX\t_\t_\t0\troot\t_\t_\n2\tn't\tnot\tPART\t_\t_\t1\tadvmod\t_\t_\n";
    let s = read_conllu(text).unwrap();
    assert_eq!(s[0].forms, vec!["do", "n't"]);
}

// ---- heuristic parses and POS --------------------------------------------

fn tagged(words: &[&str], pos: &[Pos]) -> Utterance {
    let mut u = Utterance::from_tokens(1, words);
    for (t, p) in u.tokens.iter_mut().zip(pos) {
        t.pos = Some(*p);
    }
    u
}

#[test]
fn single_token_is_root() {
    let u = Utterance::from_tokens(1, &["yes"]);
    assert_eq!(heuristic_parse(&u).heads, vec![None]);
}

#[test]
fn verb_rooted_chain() {
    use Pos::*;
    let u = tagged(&["He", "is", "the", "author", "."], &[Pron, Verb, Other, Noun, Other]);
    let tree = heuristic_parse(&u);
    // He->is, the->is, author->the, .->author
    assert_eq!(tree.heads, vec![Some(1), None, Some(1), Some(2), Some(3)]);
    assert_eq!(tree.root(), Some(1));
}

#[test]
fn middle_token_without_verb() {
    let u = tagged(&["a", "b", "c", "d"], &[Pos::Other; 4]);
    assert_eq!(heuristic_parse(&u).root(), Some(2));
}

#[test]
fn validate_rejects_bad_trees() {
    let two_roots = DependencyTree { heads: vec![None, None] };
    assert!(two_roots.validate().is_err());
    let cycle = DependencyTree {
        heads: vec![None, Some(2), Some(1)],
    };
    assert!(cycle.validate().is_err());
    let out_of_range = DependencyTree { heads: vec![None, Some(7)] };
    assert!(out_of_range.validate().is_err());
}

#[test]
fn lexicon_tags() {
    let lex = PosLexicon::english();
    assert_eq!(lex.tag("He", 0), Pos::Pron);
    assert_eq!(lex.tag("is", 1), Pos::Verb);
    assert_eq!(lex.tag("Karenina", 4), Pos::Noun);
    assert_eq!(lex.tag("Do", 0), Pos::Verb);
    assert_eq!(lex.tag("the", 2), Pos::Other);
    let mut u = Utterance::new(1, "Who is Tolstoy ?", TokenizeMode::Word);
    lex.tag_utterance(&mut u);
    let tags: Vec<Pos> = u.tokens.iter().map(|t| t.pos.unwrap()).collect();
    assert_eq!(tags, vec![Pos::Pron, Pos::Verb, Pos::Noun, Pos::Other]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]
    #[test]
    fn heuristic_tree_is_valid(tags in prop::collection::vec(0u8..4, 1..20)) {
        let words: Vec<String> = (0..tags.len()).map(|i| format!("w{i}")).collect();
        let pos: Vec<Pos> = tags
            .iter()
            .map(|t| [Pos::Noun, Pos::Pron, Pos::Verb, Pos::Other][*t as usize])
            .collect();
        let u = tagged(&words.iter().map(String::as_str).collect::<Vec<_>>(), &pos);
        let tree = heuristic_parse(&u);
        prop_assert!(tree.validate().is_ok());
        prop_assert!(tree.root().is_some());
    }
}

// ---- vocabulary ----------------------------------------------------------

#[test]
fn reserved_layout_and_markers() {
    let v = Vocab::build([&tolstoy()]);
    assert_eq!(v.token(Vocab::PAD), "<pad>");
    assert_eq!(v.token(Vocab::EOS), "</s>");
    assert_eq!(v.token(4), "[S1]");
    assert_eq!(v.token(5), "[S2]");
    assert_eq!(v.id("never-seen"), Vocab::UNK);
}

#[test]
fn bijective_over_entries() {
    let v = Vocab::build([&tolstoy()]);
    for (i, t) in v.tokens().iter().enumerate() {
        assert_eq!(v.id(t), i);
    }
    let rebuilt = Vocab::from_tokens(v.tokens().to_vec()).unwrap();
    assert_eq!(rebuilt, v);
    assert!(Vocab::from_tokens(vec!["x".into()]).is_err());
}

// ---- synthetic corpus ----------------------------------------------------

#[test]
fn deterministic_per_seed() {
    let cfg = SynthConfig {
        n: 2,
        seed: 7,
        ..Default::default()
    };
    assert_eq!(generate_synthetic(&cfg), generate_synthetic(&cfg));
    let other = SynthConfig {
        seed: 8,
        n: 50,
        ..cfg.clone()
    };
    assert_ne!(generate_synthetic(&SynthConfig { n: 50, ..cfg }), generate_synthetic(&other));
}

#[test]
fn zero_coref_ratio_is_ellipsis_only() {
    let lex = PosLexicon::english();
    let samples = generate_synthetic(&SynthConfig {
        n: 300,
        coref_ratio: 0.0,
        ..Default::default()
    });
    for s in &samples {
        assert!(!s.dialogue.incomplete.tokens.iter().any(|t| lex.is_pronoun(&t.text)));
        let d = derive_labels(s);
        assert!(!d.labels.contains(&EditLabel::Rp));
    }
}

#[test]
fn every_sample_is_extractive_and_consistent() {
    for mut s in generate_synthetic(&SynthConfig {
        n: 500,
        seed: 11,
        ..Default::default()
    }) {
        let d = derive_labels(&s);
        assert!(d.is_extractive(), "{:?}", d.unmatched);
        s.labels = Some(d.labels);
        assert!(check_consistency(&s).is_ok());
        assert_ne!(s.dialogue.incomplete.words(), s.rewritten.words());
    }
}
