//! Parallel corpora: unsegmented symbol sequences of the unwritten language
//! (UL) paired line by line with tokenized translations in a
//! well-resourced language (WRL).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::aud::TimedUnitSequence;
use crate::error::{Error, Result};

/// Per-utterance segmentations keyed by utterance id.
pub type Segmentations = BTreeMap<String, Segmentation>;

pub const PAD: u32 = 0;
pub const BOS: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
const RESERVED: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Bidirectional token/id mapping with four reserved ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds a vocabulary over the distinct tokens, ordered lexicographically.
    pub fn from_tokens<'a, I>(tokens: I) -> Self
    where
        I: IntoIterator<Item = &'a str>,
    {
        let distinct: BTreeSet<&str> = tokens.into_iter().collect();
        let tokens = RESERVED
            .iter()
            .copied()
            .chain(distinct.into_iter().filter(|t| !RESERVED.contains(t)))
            .map(str::to_owned)
            .collect();
        Self::from_token_list(tokens)
    }

    /// Rebuilds from a full id-ordered token list (reserved tokens first).
    pub fn from_token_list(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.len() <= RESERVED.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        match self.index.get(token) {
            Some(&id) if id as usize >= RESERVED.len() => Some(id),
            _ => None,
        }
    }

    pub fn id_or_unk(&self, token: &str) -> u32 {
        self.id(token).unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    /// Id-ordered token list, reserved tokens included.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Tokens excluding the reserved entries.
    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.tokens[RESERVED.len()..].iter().map(String::as_str)
    }

    pub(crate) fn restore_index(&mut self) {
        if self.index.is_empty() {
            *self = Self::from_token_list(std::mem::take(&mut self.tokens));
        }
    }
}

/// Internal word boundaries over a sequence of `length` symbols. A boundary
/// `b` marks a break after the first `b` symbols; utterance edges are implicit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segmentation {
    length: usize,
    boundaries: Vec<usize>,
}

impl Segmentation {
    pub fn new(length: usize, boundaries: Vec<usize>) -> Result<Self> {
        let mut prev = 0;
        for &b in &boundaries {
            if b <= prev || b >= length {
                return Err(Error::Data(format!(
                    "invalid boundary {b} for sequence of length {length} (boundaries must be strictly increasing in (0, length))"
                )));
            }
            prev = b;
        }
        Ok(Self { length, boundaries })
    }

    /// Whole sequence as a single word.
    pub fn single_word(length: usize) -> Self {
        Self {
            length,
            boundaries: Vec::new(),
        }
    }

    pub fn from_word_lengths(lengths: &[usize]) -> Result<Self> {
        if lengths.iter().any(|&l| l == 0) {
            return Err(Error::Data("empty word in segmentation".into()));
        }
        let mut boundaries = Vec::with_capacity(lengths.len().saturating_sub(1));
        let mut pos = 0;
        for &l in lengths {
            pos += l;
            boundaries.push(pos);
        }
        let length = boundaries.pop().unwrap_or(0);
        Self::new(length, boundaries)
    }

    pub fn len(&self) -> usize {
        self.length
    }

    pub fn is_empty(&self) -> bool {
        self.length == 0
    }

    pub fn boundaries(&self) -> &[usize] {
        &self.boundaries
    }

    pub fn num_words(&self) -> usize {
        if self.length == 0 {
            0
        } else {
            self.boundaries.len() + 1
        }
    }

    /// Half-open `(start, end)` symbol spans of every word.
    pub fn spans(&self) -> Vec<(usize, usize)> {
        if self.length == 0 {
            return Vec::new();
        }
        let mut spans = Vec::with_capacity(self.num_words());
        let mut start = 0;
        for &b in self.boundaries.iter().chain(std::iter::once(&self.length)) {
            spans.push((start, b));
            start = b;
        }
        spans
    }

    pub fn word_lengths(&self) -> Vec<usize> {
        self.spans().into_iter().map(|(s, e)| e - s).collect()
    }

    pub fn words<'a, T>(&self, symbols: &'a [T]) -> Vec<&'a [T]> {
        self.spans().into_iter().map(|(s, e)| &symbols[s..e]).collect()
    }
}

/// Formats a segmented utterance: words separated by single spaces, symbols
/// inside a word joined by `delimiter`.
pub fn format_segmented(symbols: &[String], seg: &Segmentation, delimiter: &str) -> String {
    seg.words(symbols)
        .into_iter()
        .map(|w| w.join(delimiter))
        .collect::<Vec<_>>()
        .join(" ")
}

/// `""` when every symbol is a single character, otherwise `"."`.
pub fn default_delimiter<'a, I: IntoIterator<Item = &'a str>>(symbols: I) -> &'static str {
    if symbols.into_iter().all(|s| s.chars().count() == 1) {
        ""
    } else {
        "."
    }
}

/// Parses one gold line against the utterance's symbols.
pub fn parse_segmented(line: &str, symbols: &[String], delimiter: &str) -> Option<Segmentation> {
    let words: Vec<&str> = line.split_ascii_whitespace().collect();
    if words.is_empty() {
        return None;
    }
    let mut lengths = Vec::with_capacity(words.len());
    if delimiter.is_empty() {
        // Match by string content and require each break to fall on a
        // symbol edge.
        let mut sym = 0;
        for word in words {
            let mut rest = word;
            let mut n = 0;
            while !rest.is_empty() {
                let s = symbols.get(sym)?;
                rest = rest.strip_prefix(s.as_str())?;
                sym += 1;
                n += 1;
            }
            if n == 0 {
                return None;
            }
            lengths.push(n);
        }
        if sym != symbols.len() {
            return None;
        }
    } else {
        let mut sym = 0;
        for word in words {
            let mut n = 0;
            for piece in word.split(delimiter).filter(|p| !p.is_empty()) {
                if symbols.get(sym).map(String::as_str) != Some(piece) {
                    return None;
                }
                sym += 1;
                n += 1;
            }
            if n == 0 {
                return None;
            }
            lengths.push(n);
        }
        if sym != symbols.len() {
            return None;
        }
    }
    Segmentation::from_word_lengths(&lengths).ok()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelUtterance {
    pub id: String,
    pub ul_symbols: Vec<String>,
    pub wrl_words: Vec<String>,
    pub gold_boundaries: Option<Segmentation>,
    pub ul_times: Option<Vec<(f64, f64)>>,
}

impl ParallelUtterance {
    pub fn new(id: impl Into<String>, ul_symbols: Vec<String>, wrl_words: Vec<String>) -> Result<Self> {
        let id = id.into();
        if ul_symbols.is_empty() || wrl_words.is_empty() {
            return Err(Error::Data(format!("utterance {id}: both sides must be nonempty")));
        }
        Ok(Self {
            id,
            ul_symbols,
            wrl_words,
            gold_boundaries: None,
            ul_times: None,
        })
    }

    pub fn with_times(mut self, times: Vec<(f64, f64)>) -> Result<Self> {
        if times.len() != self.ul_symbols.len() {
            return Err(Error::Data(format!(
                "utterance {}: {} time stamps for {} symbols",
                self.id,
                times.len(),
                self.ul_symbols.len()
            )));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for &(s, e) in &times {
            if !(s <= e) || s < prev_end {
                return Err(Error::Data(format!(
                    "utterance {}: time stamps overlap or are unordered",
                    self.id
                )));
            }
            prev_end = e;
        }
        self.ul_times = Some(times);
        Ok(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParallelCorpus {
    pub utterances: Vec<ParallelUtterance>,
    pub ul_vocab: Vocabulary,
    pub wrl_vocab: Vocabulary,
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn tokenize(line: &str) -> Vec<String> {
    line.split_ascii_whitespace().map(str::to_owned).collect()
}

/// Utterance id for a 1-based line number.
pub fn line_id(line: usize) -> String {
    format!("utt{line:05}")
}

impl ParallelCorpus {
    /// Builds vocabularies over every token in `utterances`.
    pub fn from_utterances(utterances: Vec<ParallelUtterance>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for u in &utterances {
            if !seen.insert(u.id.as_str()) {
                return Err(Error::Data(format!("duplicate utterance id {}", u.id)));
            }
        }
        let ul_vocab =
            Vocabulary::from_tokens(utterances.iter().flat_map(|u| u.ul_symbols.iter().map(String::as_str)));
        let wrl_vocab =
            Vocabulary::from_tokens(utterances.iter().flat_map(|u| u.wrl_words.iter().map(String::as_str)));
        Ok(Self {
            utterances,
            ul_vocab,
            wrl_vocab,
        })
    }

    /// Pairs time-marked unit sequences with translation lines, in order.
    pub fn from_timed_units(units: &[TimedUnitSequence], wrl_lines: &[String]) -> Result<Self> {
        if units.len() != wrl_lines.len() {
            return Err(Error::Data(format!(
                "line-count mismatch: {} unit sequences vs {} translation lines",
                units.len(),
                wrl_lines.len()
            )));
        }
        let mut utterances = Vec::with_capacity(units.len());
        for (i, (seq, line)) in units.iter().zip(wrl_lines).enumerate() {
            let words = tokenize(line);
            if words.is_empty() {
                return Err(Error::Data(format!("empty translation on line {}", i + 1)));
            }
            let symbols = seq.labels();
            let times = seq.segments.iter().map(|s| (s.start, s.end)).collect();
            utterances.push(ParallelUtterance::new(seq.id.clone(), symbols, words)?.with_times(times)?);
        }
        Self::from_utterances(utterances)
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&ParallelUtterance> {
        self.utterances.iter().find(|u| u.id == id)
    }

    pub fn symbols_map(&self) -> BTreeMap<String, Vec<String>> {
        self.utterances
            .iter()
            .map(|u| (u.id.clone(), u.ul_symbols.clone()))
            .collect()
    }

    /// Gold segmentations; errors if any utterance lacks one.
    pub fn gold(&self) -> Result<Segmentations> {
        self.utterances
            .iter()
            .map(|u| {
                u.gold_boundaries
                    .clone()
                    .map(|g| (u.id.clone(), g))
                    .ok_or_else(|| Error::Data(format!("utterance {} has no gold segmentation", u.id)))
            })
            .collect()
    }

    pub fn has_gold(&self) -> bool {
        self.utterances.iter().all(|u| u.gold_boundaries.is_some())
    }

    /// Intra-word delimiter used for this corpus's segmented text.
    pub fn delimiter(&self) -> &'static str {
        default_delimiter(self.ul_vocab.symbols())
    }

    /// A sub-corpus sharing this corpus's vocabularies.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            utterances: indices.iter().map(|&i| self.utterances[i].clone()).collect(),
            ul_vocab: self.ul_vocab.clone(),
            wrl_vocab: self.wrl_vocab.clone(),
        }
    }

    pub fn ul_lines(&self) -> Vec<String> {
        self.utterances.iter().map(|u| u.ul_symbols.join(" ")).collect()
    }

    pub fn wrl_lines(&self) -> Vec<String> {
        self.utterances.iter().map(|u| u.wrl_words.join(" ")).collect()
    }
}

pub fn load_parallel_corpus(ul_path: impl AsRef<Path>, wrl_path: impl AsRef<Path>) -> Result<ParallelCorpus> {
    let (ul_path, wrl_path) = (ul_path.as_ref(), wrl_path.as_ref());
    let ul = read_lines(ul_path)?;
    let wrl = read_lines(wrl_path)?;
    parse_parallel(&ul, &wrl)
}

pub fn parse_parallel(ul: &[String], wrl: &[String]) -> Result<ParallelCorpus> {
    if ul.len() != wrl.len() {
        return Err(Error::Data(format!(
            "line-count mismatch: UL file has {} lines, WRL file has {}",
            ul.len(),
            wrl.len()
        )));
    }
    let mut utterances = Vec::with_capacity(ul.len());
    for (i, (u, w)) in ul.iter().zip(wrl).enumerate() {
        let (symbols, words) = (tokenize(u), tokenize(w));
        if symbols.is_empty() {
            return Err(Error::Data(format!("empty UL line {}", i + 1)));
        }
        if words.is_empty() {
            return Err(Error::Data(format!("empty WRL line {}", i + 1)));
        }
        utterances.push(ParallelUtterance::new(line_id(i + 1), symbols, words)?);
    }
    ParallelCorpus::from_utterances(utterances)
}

pub fn write_corpus(corpus: &ParallelCorpus, ul_path: impl AsRef<Path>, wrl_path: impl AsRef<Path>) -> Result<()> {
    write_lines(ul_path.as_ref(), &corpus.ul_lines())?;
    write_lines(wrl_path.as_ref(), &corpus.wrl_lines())
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = lines.join("\n");
    if !lines.is_empty() {
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Attaches gold segmentations read from `gold_path`. `delimiter` defaults to
/// the corpus delimiter (none for single-character symbols, `.` otherwise).
pub fn load_gold_segmentation(
    corpus: ParallelCorpus,
    gold_path: impl AsRef<Path>,
    delimiter: Option<&str>,
) -> Result<ParallelCorpus> {
    let lines = read_lines(gold_path.as_ref())?;
    attach_gold(corpus, &lines, delimiter)
}

pub fn attach_gold(mut corpus: ParallelCorpus, lines: &[String], delimiter: Option<&str>) -> Result<ParallelCorpus> {
    if lines.len() != corpus.len() {
        return Err(Error::Data(format!(
            "line-count mismatch: gold file has {} lines, corpus has {} utterances",
            lines.len(),
            corpus.len()
        )));
    }
    let delimiter = delimiter.unwrap_or_else(|| corpus.delimiter()).to_owned();
    for (i, (u, line)) in corpus.utterances.iter_mut().zip(lines).enumerate() {
        let seg = parse_segmented(line, &u.ul_symbols, &delimiter).ok_or_else(|| {
            Error::Data(format!(
                "gold line {}: symbols do not match utterance {} after removing separators",
                i + 1,
                u.id
            ))
        })?;
        u.gold_boundaries = Some(seg);
    }
    Ok(corpus)
}

pub fn gold_lines(corpus: &ParallelCorpus) -> Result<Vec<String>> {
    let delimiter = corpus.delimiter();
    corpus
        .utterances
        .iter()
        .map(|u| {
            u.gold_boundaries
                .as_ref()
                .map(|g| format_segmented(&u.ul_symbols, g, delimiter))
                .ok_or_else(|| Error::Data(format!("utterance {} has no gold segmentation", u.id)))
        })
        .collect()
}

/// Seeded random partition into (train, dev) with `round(dev_fraction * N)`
/// dev utterances. Original order is preserved inside each part. The train
/// side's WRL vocabulary is rebuilt from train only, so unseen dev words map
/// to UNK; the UL inventory stays closed over the whole corpus.
pub fn split_train_dev(
    corpus: &ParallelCorpus,
    dev_fraction: f64,
    seed: u64,
) -> Result<(ParallelCorpus, ParallelCorpus)> {
    if !(dev_fraction > 0.0 && dev_fraction < 1.0) {
        return Err(Error::Config(format!("dev fraction {dev_fraction} outside (0, 1)")));
    }
    let n = corpus.len();
    let n_dev = (dev_fraction * n as f64).round() as usize;
    if n_dev == 0 || n_dev >= n {
        return Err(Error::Data(format!(
            "splitting {n} utterances with dev fraction {dev_fraction} leaves one side empty"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut dev_idx = order[..n_dev].to_vec();
    let mut train_idx = order[n_dev..].to_vec();
    dev_idx.sort_unstable();
    train_idx.sort_unstable();

    let mut train = corpus.subset(&train_idx);
    train.wrl_vocab = Vocabulary::from_tokens(
        train
            .utterances
            .iter()
            .flat_map(|u| u.wrl_words.iter().map(String::as_str)),
    );
    let mut dev = corpus.subset(&dev_idx);
    dev.wrl_vocab = train.wrl_vocab.clone();
    Ok((train, dev))
}

pub enum SegmentationSource<'a> {
    Gold,
    Hypothesis(&'a Segmentations),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub sentences: usize,
    pub symbols_avg: f64,
    pub symbols_max: usize,
    pub symbols_min: usize,
    pub tokens_avg: f64,
    pub tokens_max: usize,
    pub tokens_min: usize,
    pub token_count: usize,
    pub type_count: usize,
}

pub fn corpus_stats(corpus: &ParallelCorpus, source: SegmentationSource<'_>) -> Result<CorpusStats> {
    if corpus.is_empty() {
        return Err(Error::Data("statistics over an empty corpus".into()));
    }
    let mut types: BTreeSet<&[String]> = BTreeSet::new();
    let (mut sym_sum, mut sym_max, mut sym_min) = (0usize, 0usize, usize::MAX);
    let (mut tok_sum, mut tok_max, mut tok_min) = (0usize, 0usize, usize::MAX);
    for u in &corpus.utterances {
        let seg = match &source {
            SegmentationSource::Gold => u.gold_boundaries.as_ref(),
            SegmentationSource::Hypothesis(map) => map.get(&u.id),
        }
        .ok_or_else(|| Error::Data(format!("utterance {} has no segmentation", u.id)))?;
        if seg.len() != u.ul_symbols.len() {
            return Err(Error::Data(format!(
                "utterance {}: segmentation covers {} symbols, utterance has {}",
                u.id,
                seg.len(),
                u.ul_symbols.len()
            )));
        }
        let m = u.ul_symbols.len();
        sym_sum += m;
        sym_max = sym_max.max(m);
        sym_min = sym_min.min(m);
        let k = seg.num_words();
        tok_sum += k;
        tok_max = tok_max.max(k);
        tok_min = tok_min.min(k);
        types.extend(seg.words(&u.ul_symbols));
    }
    let n = corpus.len();
    Ok(CorpusStats {
        sentences: n,
        symbols_avg: sym_sum as f64 / n as f64,
        symbols_max: sym_max,
        symbols_min: sym_min,
        tokens_avg: tok_sum as f64 / n as f64,
        tokens_max: tok_max,
        tokens_min: tok_min,
        token_count: tok_sum,
        type_count: types.len(),
    })
}
