//! Shared inputs for the benchmarks.

use eorewrite_core::corpus::{generate_synthetic, prepare_sample, PosLexicon, SynthConfig};
use eorewrite_core::Sample;

/// `n` synthetic samples with POS tags and parses filled in.
pub fn prepared_corpus(n: usize, seed: u64) -> Vec<Sample> {
    let lexicon = PosLexicon::english();
    let mut samples = generate_synthetic(&SynthConfig {
        n,
        seed,
        ..Default::default()
    });
    for s in &mut samples {
        prepare_sample(s, &lexicon);
    }
    samples
}

/// Words of an utterance as owned strings.
pub fn words(u: &eorewrite_core::Utterance) -> Vec<String> {
    u.words().into_iter().map(String::from).collect()
}
