//! Reference segmenters: the bilingual proportional (diagonal) projection and
//! a monolingual Dirichlet-process word segmenter.

mod dpseg;

pub use dpseg::{dpseg_segment, DpsegConfig, DpsegModel, DpsegSampler};

use crate::corpus::{ParallelCorpus, ParallelUtterance, Segmentation, Segmentations};

/// Projects WRL word breaks onto the UL sequence as if the alignment were
/// diagonal over the WRL character string (words joined by single spaces).
/// A space belongs to the word that follows it.
pub fn proportional_segment(utt: &ParallelUtterance) -> Segmentation {
    let mut word_of_char = Vec::new();
    for (i, w) in utt.wrl_words.iter().enumerate() {
        if i > 0 {
            word_of_char.push(i);
        }
        word_of_char.extend(std::iter::repeat_n(i, w.chars().count()));
    }
    let chars = word_of_char.len();
    let m = utt.ul_symbols.len();
    let word = |j: usize| word_of_char[j * chars / m];
    let boundaries = (1..m).filter(|&j| word(j - 1) != word(j)).collect();
    Segmentation::new(m, boundaries).expect("boundaries lie strictly inside the sequence")
}

pub fn proportional_corpus(corpus: &ParallelCorpus) -> Segmentations {
    corpus
        .utterances
        .iter()
        .map(|u| (u.id.clone(), proportional_segment(u)))
        .collect()
}
