//! Synthetic parallel corpora and synthetic unit-HMM features with known
//! ground truth, for desk-scale checks of the whole pipeline.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aud::{FeatureSequence, FEATURE_DIM};
use crate::corpus::{line_id, ParallelCorpus, ParallelUtterance, Segmentation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub lexicon_size: usize,
    pub word_length: (usize, usize),
    pub sentence_length: (usize, usize),
    pub sentences: usize,
    pub alphabet_size: usize,
    /// Probability of inserting an untranslated WRL filler word after each word.
    pub translation_noise: f64,
    pub substitution: f64,
    pub deletion: f64,
    pub insertion: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            lexicon_size: 20,
            word_length: (2, 5),
            sentence_length: (2, 6),
            sentences: 500,
            alphabet_size: 12,
            translation_noise: 0.0,
            substitution: 0.0,
            deletion: 0.0,
            insertion: 0.0,
            seed: 1,
        }
    }
}

const WRL_LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyz";
const FILLERS: &[&str] = &["le", "la", "de", "et", "un"];

fn check_range(name: &str, (lo, hi): (usize, usize)) -> Result<()> {
    if lo == 0 || lo > hi {
        return Err(Error::Config(format!("{name} range ({lo}, {hi}) must satisfy 1 <= min <= max")));
    }
    Ok(())
}

fn check_rate(name: &str, p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Config(format!("{name} rate {p} outside [0, 1)")));
    }
    Ok(())
}

/// UL alphabet: upper-case letters, then two-character symbols beyond 26.
fn alphabet(size: usize) -> Vec<String> {
    (0..size)
        .map(|i| {
            if i < 26 {
                ((b'A' + i as u8) as char).to_string()
            } else {
                format!("{}{}", (b'A' + (i / 26 - 1) as u8) as char, (b'a' + (i % 26) as u8) as char)
            }
        })
        .collect()
}

/// Random parallel corpus over a lexicon of UL symbol strings paired 1:1 with
/// WRL words. Gold boundaries follow the noisy UL side.
pub fn synth_corpus(cfg: &SynthConfig) -> Result<ParallelCorpus> {
    if cfg.lexicon_size == 0 || cfg.sentences == 0 || cfg.alphabet_size < 2 {
        return Err(Error::Config("lexicon size, sentences and alphabet size must be positive".into()));
    }
    check_range("word length", cfg.word_length)?;
    check_range("sentence length", cfg.sentence_length)?;
    for (n, p) in [
        ("translation noise", cfg.translation_noise),
        ("substitution", cfg.substitution),
        ("deletion", cfg.deletion),
        ("insertion", cfg.insertion),
    ] {
        check_rate(n, p)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let symbols = alphabet(cfg.alphabet_size);

    let mut ul_words: Vec<Vec<String>> = Vec::with_capacity(cfg.lexicon_size);
    let mut seen = BTreeSet::new();
    let mut attempts = 0;
    while ul_words.len() < cfg.lexicon_size {
        attempts += 1;
        if attempts > 1000 * cfg.lexicon_size {
            return Err(Error::Config("cannot draw enough distinct lexicon entries".into()));
        }
        let len = rng.random_range(cfg.word_length.0..=cfg.word_length.1);
        let w: Vec<String> = (0..len).map(|_| symbols.choose(&mut rng).unwrap().clone()).collect();
        if seen.insert(w.clone()) {
            ul_words.push(w);
        }
    }
    let mut wrl_words: Vec<String> = Vec::with_capacity(cfg.lexicon_size);
    let mut seen_wrl: BTreeSet<String> = FILLERS.iter().map(|s| s.to_string()).collect();
    while wrl_words.len() < cfg.lexicon_size {
        let len = rng.random_range(3..=7);
        let w: String = (0..len).map(|_| *WRL_LETTERS.choose(&mut rng).unwrap() as char).collect();
        if seen_wrl.insert(w.clone()) {
            wrl_words.push(w);
        }
    }

    let mut utterances = Vec::with_capacity(cfg.sentences);
    for i in 0..cfg.sentences {
        let len = rng.random_range(cfg.sentence_length.0..=cfg.sentence_length.1);
        let sentence: Vec<usize> = (0..len).map(|_| rng.random_range(0..cfg.lexicon_size)).collect();
        let mut ul = Vec::new();
        let mut word_lengths = Vec::new();
        let mut wrl = Vec::new();
        for &w in &sentence {
            let mut word = Vec::new();
            for s in &ul_words[w] {
                if rng.random::<f64>() < cfg.deletion {
                    continue;
                }
                if rng.random::<f64>() < cfg.substitution {
                    let other: Vec<&String> = symbols.iter().filter(|x| *x != s).collect();
                    word.push((*other.choose(&mut rng).unwrap()).clone());
                } else {
                    word.push(s.clone());
                }
                if rng.random::<f64>() < cfg.insertion {
                    word.push(symbols.choose(&mut rng).unwrap().clone());
                }
            }
            if !word.is_empty() {
                word_lengths.push(word.len());
                ul.extend(word);
            }
            wrl.push(wrl_words[w].clone());
            if rng.random::<f64>() < cfg.translation_noise {
                wrl.push(FILLERS.choose(&mut rng).unwrap().to_string());
            }
        }
        if ul.is_empty() {
            ul.push(symbols[0].clone());
            word_lengths.push(1);
        }
        let mut u = ParallelUtterance::new(line_id(i + 1), ul, wrl)?;
        u.gold_boundaries = Some(Segmentation::from_word_lengths(&word_lengths)?);
        utterances.push(u);
    }
    ParallelCorpus::from_utterances(utterances)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthFeatureConfig {
    pub units: usize,
    pub states_per_unit: usize,
    pub utterances: usize,
    /// Unit segments per utterance.
    pub segments: (usize, usize),
    pub self_loop: f64,
    /// Standard deviation of state means around the origin, in units of the
    /// within-state standard deviation.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthFeatureConfig {
    fn default() -> Self {
        Self {
            units: 3,
            states_per_unit: 3,
            utterances: 40,
            segments: (4, 10),
            self_loop: 0.6,
            separation: 3.0,
            seed: 7,
        }
    }
}

/// Frames sampled from a phone loop of Gaussian left-to-right units. Returns
/// the sequences and the true unit label of every frame.
pub fn synth_unit_features(cfg: &SynthFeatureConfig) -> Result<(Vec<FeatureSequence>, Vec<Vec<usize>>)> {
    if cfg.units == 0 || cfg.states_per_unit == 0 || cfg.utterances == 0 {
        return Err(Error::Config("units, states and utterances must be positive".into()));
    }
    check_range("segments", cfg.segments)?;
    check_rate("self-loop", cfg.self_loop)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means: Vec<Vec<Vec<f64>>> = (0..cfg.units)
        .map(|_| {
            (0..cfg.states_per_unit)
                .map(|_| (0..FEATURE_DIM).map(|_| cfg.separation * gaussian(&mut rng)).collect())
                .collect()
        })
        .collect();
    let mut seqs = Vec::with_capacity(cfg.utterances);
    let mut labels = Vec::with_capacity(cfg.utterances);
    for i in 0..cfg.utterances {
        let n_seg = rng.random_range(cfg.segments.0..=cfg.segments.1);
        let mut frames = Vec::new();
        let mut lab = Vec::new();
        for _ in 0..n_seg {
            let u = rng.random_range(0..cfg.units);
            for s in 0..cfg.states_per_unit {
                loop {
                    frames.push(means[u][s].iter().map(|m| m + gaussian(&mut rng)).collect());
                    lab.push(u);
                    if rng.random::<f64>() >= cfg.self_loop {
                        break;
                    }
                }
            }
        }
        seqs.push(FeatureSequence::new(line_id(i + 1), 0.01, 0.025, frames)?);
        labels.push(lab);
    }
    Ok((seqs, labels))
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_free_corpus_is_concatenated_lexicon() {
        let c = synth_corpus(&SynthConfig::default()).unwrap();
        assert_eq!(c.len(), 500);
        let mut types = BTreeSet::new();
        for u in &c.utterances {
            let g = u.gold_boundaries.as_ref().unwrap();
            assert_eq!(g.num_words(), u.wrl_words.len());
            for w in g.words(&u.ul_symbols) {
                assert!((2..=5).contains(&w.len()));
                types.insert(w.to_vec());
            }
        }
        assert!(types.len() <= 20);
    }

    #[test]
    fn same_seed_same_corpus() {
        let cfg = SynthConfig {
            substitution: 0.15,
            ..Default::default()
        };
        assert_eq!(synth_corpus(&cfg).unwrap(), synth_corpus(&cfg).unwrap());
        let other = SynthConfig { seed: 2, ..cfg.clone() };
        assert_ne!(synth_corpus(&cfg).unwrap(), synth_corpus(&other).unwrap());
    }

    #[test]
    fn bad_ranges_rejected() {
        let cfg = SynthConfig {
            word_length: (5, 2),
            ..Default::default()
        };
        assert!(matches!(synth_corpus(&cfg), Err(Error::Config(_))));
        let cfg = SynthConfig {
            deletion: 1.0,
            ..Default::default()
        };
        assert!(synth_corpus(&cfg).is_err());
    }

    #[test]
    fn feature_labels_cover_frames() {
        let (seqs, labels) = synth_unit_features(&SynthFeatureConfig::default()).unwrap();
        for (s, l) in seqs.iter().zip(&labels) {
            assert_eq!(s.len(), l.len());
            assert!(l.iter().all(|&u| u < 3));
        }
    }
}
