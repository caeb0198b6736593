//! Seeded template grammar producing extractive rewriting triples.
//!
//! Every dialogue mentions one person and one object (a book or a place) in
//! its history. The incomplete turn states a fact about them with the subject
//! and/or object pronominalized (coreference) or dropped (ellipsis); the
//! rewrite restores both. All restored tokens come from the history.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Dialogue, Origin, Sample, Utterance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n: usize,
    pub seed: u64,
    /// Probability that the incomplete turn contains a pronoun.
    pub coref_ratio: f64,
    /// Probability of an extra filler turn in the history.
    pub filler_prob: f64,
    /// How many entries of each entity list the grammar may use.
    pub persons: usize,
    pub works: usize,
    pub places: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n: 1000,
            seed: 7,
            coref_ratio: 0.5,
            filler_prob: 0.3,
            persons: PERSONS.len(),
            works: WORKS.len(),
            places: PLACES.len(),
        }
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Gender {
    He,
    She,
}

const PERSONS: &[(&str, Gender)] = &[
    ("Tolstoy", Gender::He),
    ("Austen", Gender::She),
    ("Dickens", Gender::He),
    ("Woolf", Gender::She),
    ("Orwell", Gender::He),
    ("Bronte", Gender::She),
    ("Kafka", Gender::He),
    ("Shelley", Gender::She),
    ("Tagore", Gender::He),
    ("Morrison", Gender::She),
    ("Chekhov", Gender::He),
    ("Eliot", Gender::She),
];

const WORKS: &[&[&str]] = &[
    &["Anna", "Karenina"],
    &["Emma"],
    &["Hard", "Times"],
    &["Orlando"],
    &["Animal", "Farm"],
    &["Jane", "Eyre"],
    &["Moby", "Dick"],
    &["Frankenstein"],
    &["Gitanjali"],
    &["Beloved"],
    &["Ward", "Six"],
    &["Middlemarch"],
];

const PLACES: &[&str] = &[
    "Paris", "Qingdao", "London", "Rome", "Berlin", "Tokyo", "Cairo", "Madrid", "Oslo", "Lima",
];

/// Nouns and verbs of the grammar, exported for the POS lexicon.
pub const SYNTH_NOUNS: &[&str] = &[
    "Tolstoy", "Austen", "Dickens", "Woolf", "Orwell", "Bronte", "Kafka", "Shelley", "Tagore",
    "Morrison", "Chekhov", "Eliot", "Anna", "Karenina", "Emma", "Hard", "Times", "Orlando",
    "Animal", "Farm", "Jane", "Eyre", "Moby", "Dick", "Frankenstein", "Gitanjali", "Beloved",
    "Ward", "Six", "Middlemarch", "Paris", "Qingdao", "London", "Rome", "Berlin", "Tokyo",
    "Cairo", "Madrid", "Oslo", "Lima", "author", "book", "city", "year",
];

pub const SYNTH_VERBS: &[&str] = &[
    "wrote", "finished", "lives", "moved", "met", "heard", "read", "love", "been", "visit",
];

#[derive(Clone, Copy, PartialEq)]
enum ObjectKind {
    Work,
    Place,
}

/// `S` and `O` mark the subject and object slots.
const PREDICATES: &[(ObjectKind, &[&str])] = &[
    (ObjectKind::Work, &["S", "wrote", "O", "."]),
    (ObjectKind::Work, &["S", "is", "the", "author", "of", "O", "."]),
    (ObjectKind::Work, &["Does", "S", "like", "O", "?"]),
    (ObjectKind::Work, &["S", "finished", "O", "last", "year", "."]),
    (ObjectKind::Place, &["S", "lives", "in", "O", "."]),
    (ObjectKind::Place, &["When", "did", "S", "visit", "O", "?"]),
    (ObjectKind::Place, &["S", "moved", "to", "O", "."]),
];

const PERSON_TURNS: &[&[&str]] = &[
    &["Who", "is", "X", "?"],
    &["Have", "you", "heard", "of", "X", "?"],
    &["I", "met", "X", "yesterday", "."],
    &["Tell", "me", "about", "X", "."],
];

const WORK_TURNS: &[&[&str]] = &[
    &["Do", "you", "know", "X", "?"],
    &["What", "about", "X", "?"],
    &["I", "just", "read", "X", "."],
    &["X", "is", "a", "famous", "book", "."],
];

const PLACE_TURNS: &[&[&str]] = &[
    &["Have", "you", "been", "to", "X", "?"],
    &["What", "about", "X", "?"],
    &["I", "love", "X", "."],
    &["X", "is", "a", "great", "city", "."],
];

const FILLERS: &[&[&str]] = &[&["Yes", "."], &["Sure", ",", "go", "on", "."], &["Really", "?"], &["I", "see", "."]];

#[derive(Clone, Copy, PartialEq)]
enum Slot {
    Keep,
    Pronoun,
    Drop,
}

fn fill(template: &[&str], x: &[&str]) -> Vec<String> {
    template
        .iter()
        .flat_map(|w| {
            if *w == "X" {
                x.iter().map(|s| s.to_string()).collect()
            } else {
                vec![w.to_string()]
            }
        })
        .collect()
}

fn realize(
    template: &[&str],
    subject: &str,
    gender: Gender,
    object: &[&str],
    kind: ObjectKind,
    subj: Slot,
    obj: Slot,
) -> Vec<String> {
    let mut out = Vec::new();
    for (i, w) in template.iter().enumerate() {
        match *w {
            "S" => match subj {
                Slot::Keep => out.push(subject.to_string()),
                Slot::Drop => {}
                Slot::Pronoun => {
                    let p = match gender {
                        Gender::He => "he",
                        Gender::She => "she",
                    };
                    out.push(if i == 0 { capitalize(p) } else { p.to_string() });
                }
            },
            "O" => match obj {
                Slot::Keep => out.extend(object.iter().map(|s| s.to_string())),
                Slot::Drop => {}
                Slot::Pronoun => out.push(
                    match kind {
                        ObjectKind::Work => "it",
                        ObjectKind::Place => "there",
                    }
                    .to_string(),
                ),
            },
            other => out.push(other.to_string()),
        }
    }
    out
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn pick_slots(rng: &mut ChaCha8Rng, coref: bool) -> (Slot, Slot) {
    use Slot::*;
    if coref {
        *[
            (Pronoun, Keep),
            (Keep, Pronoun),
            (Pronoun, Drop),
            (Pronoun, Pronoun),
            (Drop, Pronoun),
        ]
        .choose(rng)
        .unwrap()
    } else {
        *[(Drop, Keep), (Keep, Drop), (Drop, Drop)].choose(rng).unwrap()
    }
}

pub fn generate_synthetic(config: &SynthConfig) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let persons = &PERSONS[..config.persons.clamp(1, PERSONS.len())];
    let works = &WORKS[..config.works.clamp(1, WORKS.len())];
    let places = &PLACES[..config.places.clamp(1, PLACES.len())];

    (0..config.n)
        .map(|_| {
            let (kind, template) = *PREDICATES.choose(&mut rng).unwrap();
            let &(person, gender) = persons.choose(&mut rng).unwrap();
            let object: Vec<&str> = match kind {
                ObjectKind::Work => works.choose(&mut rng).unwrap().to_vec(),
                ObjectKind::Place => vec![*places.choose(&mut rng).unwrap()],
            };

            let person_turn = fill(PERSON_TURNS.choose(&mut rng).unwrap(), &[person]);
            let object_turns = match kind {
                ObjectKind::Work => WORK_TURNS,
                ObjectKind::Place => PLACE_TURNS,
            };
            let object_turn = fill(object_turns.choose(&mut rng).unwrap(), &object);
            let mut history = vec![person_turn, object_turn];
            history.shuffle(&mut rng);
            if rng.random_bool(config.filler_prob) {
                let at = rng.random_range(0..=history.len());
                history.insert(at, fill(FILLERS.choose(&mut rng).unwrap(), &[]));
            }

            let coref = rng.random_bool(config.coref_ratio);
            let (subj, obj) = pick_slots(&mut rng, coref);
            let incomplete = realize(template, person, gender, &object, kind, subj, obj);
            let rewritten = realize(template, person, gender, &object, kind, Slot::Keep, Slot::Keep);

            let n = history.len();
            let speaker = |turn: usize| if (n - turn) % 2 == 0 { 1 } else { 2 };
            let history = history
                .iter()
                .enumerate()
                .map(|(i, words)| Utterance::from_tokens(speaker(i), words))
                .collect();
            let incomplete = Utterance::from_tokens(1, &incomplete);
            let rewritten = Utterance::from_tokens(1, &rewritten);
            let mut sample = Sample::new(Dialogue { history, incomplete }, rewritten);
            sample.origin = Origin::Synthetic;
            sample
        })
        .collect()
}
