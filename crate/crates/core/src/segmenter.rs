//! Soft alignments to hard segmentations: optional multi-run averaging,
//! neighbor smoothing along the word axis, per-symbol argmax, and a word
//! break wherever the aligned WRL word changes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::aligner::AttentionMatrix;
use crate::corpus::{format_segmented, ParallelCorpus, Segmentation, Segmentations};
use crate::error::{Error, Result};

/// Index of the aligned WRL word for every UL symbol.
pub type HardAlignment = Vec<usize>;

/// Replaces each weight by the mean of itself and its two neighbors along the
/// word axis (edges average the two available values), then renormalizes rows.
pub fn smooth_matrix(m: &AttentionMatrix) -> AttentionMatrix {
    let (rows, cols) = (m.rows(), m.cols());
    if cols == 1 {
        return m.clone();
    }
    let mut out = Vec::with_capacity(rows * cols);
    for t in 0..rows {
        let row = m.row(t);
        let smoothed: Vec<f64> = (0..cols)
            .map(|i| {
                let lo = i.saturating_sub(1);
                let hi = (i + 1).min(cols - 1);
                row[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
            })
            .collect();
        let z: f64 = smoothed.iter().sum();
        out.extend(smoothed.iter().map(|x| x / z));
    }
    AttentionMatrix::new(m.id.clone(), rows, cols, out, m.eos_row).expect("smoothing keeps rows stochastic")
}

/// Elementwise mean of matrices for the same utterance.
pub fn average_matrices(ms: &[AttentionMatrix]) -> Result<AttentionMatrix> {
    let first = ms.first().ok_or_else(|| Error::Data("no matrices to average".into()))?;
    for m in &ms[1..] {
        if m.id != first.id || m.rows() != first.rows() || m.cols() != first.cols() || m.eos_row != first.eos_row {
            return Err(Error::Data(format!(
                "cannot average {} ({}x{}) with {} ({}x{})",
                first.id,
                first.rows(),
                first.cols(),
                m.id,
                m.rows(),
                m.cols()
            )));
        }
    }
    let k = ms.len() as f64;
    let weights = (0..first.weights().len())
        .map(|j| ms.iter().map(|m| m.weights()[j]).sum::<f64>() / k)
        .collect();
    AttentionMatrix::new(first.id.clone(), first.rows(), first.cols(), weights, first.eos_row)
}

/// Per-row argmax; ties go to the lower word index. An EOS row is ignored.
pub fn hard_align(m: &AttentionMatrix) -> HardAlignment {
    (0..m.symbol_rows())
        .map(|t| {
            let row = m.row(t);
            let mut best = 0;
            for (i, &w) in row.iter().enumerate().skip(1) {
                if w > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

/// A break after symbol `t` whenever `a[t] != a[t + 1]`.
pub fn alignment_to_segmentation(a: &[usize]) -> Segmentation {
    let boundaries = (1..a.len()).filter(|&t| a[t - 1] != a[t]).collect();
    Segmentation::new(a.len(), boundaries).expect("boundaries are strictly inside the sequence")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegmentOptions {
    pub smooth: bool,
}

impl Default for SegmentOptions {
    /// Smoothing is opt-in: on sharp attention its edge cells (two-value means)
    /// pull the argmax toward the first and last words.
    fn default() -> Self {
        Self { smooth: false }
    }
}

/// Segments every utterance of `corpus`. `runs` holds one matrix set per
/// training run; several runs are averaged before smoothing.
pub fn segment_corpus(
    corpus: &ParallelCorpus,
    runs: &[Vec<AttentionMatrix>],
    options: SegmentOptions,
) -> Result<Segmentations> {
    if runs.is_empty() {
        return Err(Error::Data("no attention matrices supplied".into()));
    }
    let indexed: Vec<BTreeMap<&str, &AttentionMatrix>> = runs
        .iter()
        .map(|run| run.iter().map(|m| (m.id.as_str(), m)).collect())
        .collect();
    let missing: Vec<&str> = corpus
        .utterances
        .iter()
        .filter(|u| indexed.iter().any(|run| !run.contains_key(u.id.as_str())))
        .map(|u| u.id.as_str())
        .collect();
    if !missing.is_empty() {
        let shown: Vec<&str> = missing.iter().take(10).copied().collect();
        return Err(Error::Data(format!(
            "no attention matrix for {} utterance(s): {}{}",
            missing.len(),
            shown.join(", "),
            if missing.len() > shown.len() { ", ..." } else { "" }
        )));
    }
    let mut out = Segmentations::new();
    for u in &corpus.utterances {
        let ms: Vec<AttentionMatrix> = indexed.iter().map(|run| run[u.id.as_str()].without_eos()).collect();
        let mut m = if ms.len() == 1 { ms[0].clone() } else { average_matrices(&ms)? };
        if m.rows() != u.ul_symbols.len() || m.cols() != u.wrl_words.len() {
            return Err(Error::Data(format!(
                "utterance {}: matrix is {}x{}, utterance has {} symbols and {} words",
                u.id,
                m.rows(),
                m.cols(),
                u.ul_symbols.len(),
                u.wrl_words.len()
            )));
        }
        if options.smooth {
            m = smooth_matrix(&m);
        }
        out.insert(u.id.clone(), alignment_to_segmentation(&hard_align(&m)));
    }
    Ok(out)
}

/// Segmented text in corpus order, gold-file format.
pub fn segmentation_lines(corpus: &ParallelCorpus, segs: &Segmentations) -> Result<Vec<String>> {
    let delimiter = corpus.delimiter();
    corpus
        .utterances
        .iter()
        .map(|u| {
            let s = segs
                .get(&u.id)
                .ok_or_else(|| Error::Data(format!("no segmentation for utterance {}", u.id)))?;
            Ok(format_segmented(&u.ul_symbols, s, delimiter))
        })
        .collect()
}

/// Sidecar listing: `<id>\t<length>\t<b1,b2,...>` per utterance.
pub fn format_boundaries(segs: &Segmentations) -> String {
    let mut out = String::new();
    for (id, s) in segs {
        let b: Vec<String> = s.boundaries().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{id}\t{}\t{}", s.len(), b.join(","));
    }
    out
}

pub fn parse_boundaries(text: &str) -> Result<Segmentations> {
    let mut out = Segmentations::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let bad = || Error::Data(format!("boundary file line {}: expected `id<TAB>length<TAB>b1,b2`", n + 1));
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 3 {
            return Err(bad());
        }
        let len: usize = f[1].parse().map_err(|_| bad())?;
        let b = if f[2].is_empty() {
            Vec::new()
        } else {
            f[2].split(',').map(|x| x.parse().map_err(|_| bad())).collect::<Result<Vec<usize>>>()?
        };
        out.insert(f[0].to_owned(), Segmentation::new(len, b)?);
    }
    Ok(out)
}

/// Writes `<path>` (segmented text) and `<path>.boundaries` (sidecar).
pub fn write_segmentation(path: impl AsRef<Path>, corpus: &ParallelCorpus, segs: &Segmentations) -> Result<()> {
    let path = path.as_ref();
    let lines = segmentation_lines(corpus, segs)?;
    crate::corpus::write_lines(path, &lines)?;
    let side = boundaries_path(path);
    fs::write(&side, format_boundaries(segs)).map_err(|e| Error::io(&side, e))
}

pub fn boundaries_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".boundaries");
    s.into()
}

pub fn read_boundaries(path: impl AsRef<Path>) -> Result<Segmentations> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_boundaries(&text)
}
