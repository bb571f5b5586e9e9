//! Gibbs sampler over word-boundary indicators under a Dirichlet-process
//! lexicon (unigram) or a hierarchical DP bigram model, with a geometric
//! length / uniform spelling base distribution.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ParallelCorpus, Segmentation, Segmentations};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpsegModel {
    Unigram,
    Bigram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpsegConfig {
    pub model: DpsegModel,
    /// Concentration of the unigram-level DP. Unset: 20 for the unigram
    /// model, 3000 for the bigram model.
    pub concentration: Option<f64>,
    /// Concentration of each bigram context's DP. Unset: 100.
    pub bigram_concentration: Option<f64>,
    /// Word-end probability of the geometric length distribution.
    pub boundary_prob: f64,
    /// Base probability of the utterance-end token (bigram model).
    pub utterance_end_prob: f64,
    /// Beta prior on utterance-final words (unigram model).
    pub utterance_prior: f64,
    pub iterations: usize,
    /// Raise probabilities to 1/T with T stepping from 10 down to 1 in ten stages.
    pub anneal: bool,
    /// When > 0, return boundaries present in a majority of the last
    /// `marginal_samples` sweeps instead of the final sample.
    pub marginal_samples: usize,
    /// Initial boundary probability at every position.
    pub init_boundary_prob: f64,
    pub seed: u64,
}

impl Default for DpsegConfig {
    fn default() -> Self {
        Self {
            model: DpsegModel::Bigram,
            concentration: None,
            bigram_concentration: None,
            boundary_prob: 0.5,
            utterance_end_prob: 0.5,
            utterance_prior: 2.0,
            iterations: 1000,
            anneal: true,
            marginal_samples: 0,
            init_boundary_prob: 0.5,
            seed: 1,
        }
    }
}

impl DpsegConfig {
    pub fn unigram_level_concentration(&self) -> f64 {
        self.concentration.unwrap_or(match self.model {
            DpsegModel::Unigram => 20.0,
            DpsegModel::Bigram => 3000.0,
        })
    }

    pub fn bigram_level_concentration(&self) -> f64 {
        self.bigram_concentration.unwrap_or(100.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 {
            return bad("dpseg iterations must be at least 1".into());
        }
        for (name, a) in [
            ("concentration", self.unigram_level_concentration()),
            ("bigram_concentration", self.bigram_level_concentration()),
            ("utterance_prior", self.utterance_prior),
        ] {
            if !(a > 0.0 && a.is_finite()) {
                return bad(format!("dpseg {name} must be positive, got {a}"));
            }
        }
        for (name, p) in [
            ("boundary_prob", self.boundary_prob),
            ("utterance_end_prob", self.utterance_end_prob),
        ] {
            if !(p > 0.0 && p < 1.0) {
                return bad(format!("dpseg {name} must lie in (0, 1), got {p}"));
            }
        }
        if !(0.0..=1.0).contains(&self.init_boundary_prob) {
            return bad(format!("dpseg init_boundary_prob {} outside [0, 1]", self.init_boundary_prob));
        }
        if self.marginal_samples > self.iterations {
            return bad("dpseg marginal_samples exceeds iterations".into());
        }
        Ok(())
    }

    fn inverse_temperature(&self, sweep: usize) -> f64 {
        if !self.anneal {
            return 1.0;
        }
        let stage = sweep * 10 / self.iterations;
        (stage + 1) as f64 / 10.0
    }
}

/// Utterance start / end marker in the bigram model.
const EDGE: u32 = 0;

#[derive(Debug, Clone, Default, PartialEq)]
struct Dish {
    customers: u64,
    tables: Vec<u64>,
}

/// Chinese-restaurant seating with explicit table sizes.
#[derive(Debug, Clone, Default, PartialEq)]
struct Restaurant {
    dishes: HashMap<u32, Dish>,
    customers: u64,
    tables: u64,
}

impl Restaurant {
    fn customers_of(&self, w: u32) -> u64 {
        self.dishes.get(&w).map_or(0, |d| d.customers)
    }

    fn tables_of(&self, w: u32) -> u64 {
        self.dishes.get(&w).map_or(0, |d| d.tables.len() as u64)
    }

    /// Seats one customer; `new_weight` is concentration times base probability.
    /// Returns whether a new table was opened.
    fn add(&mut self, w: u32, new_weight: f64, rng: &mut ChaCha8Rng) -> bool {
        let d = self.dishes.entry(w).or_default();
        self.customers += 1;
        d.customers += 1;
        let mut u = rng.random::<f64>() * ((d.customers - 1) as f64 + new_weight);
        for t in d.tables.iter_mut() {
            u -= *t as f64;
            if u < 0.0 {
                *t += 1;
                return false;
            }
        }
        d.tables.push(1);
        self.tables += 1;
        true
    }

    /// Removes one customer, choosing its table by size. Returns whether a
    /// table was closed.
    fn remove(&mut self, w: u32, rng: &mut ChaCha8Rng) -> bool {
        let d = self.dishes.get_mut(&w).expect("removing a customer that is not seated");
        let mut u = rng.random_range(0..d.customers);
        let mut k = d.tables.len() - 1;
        for (i, &t) in d.tables.iter().enumerate() {
            if u < t {
                k = i;
                break;
            }
            u -= t;
        }
        d.customers -= 1;
        self.customers -= 1;
        d.tables[k] -= 1;
        let closed = d.tables[k] == 0;
        if closed {
            d.tables.swap_remove(k);
            self.tables -= 1;
        }
        if d.customers == 0 {
            self.dishes.remove(&w);
        }
        closed
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct UnigramCounts {
    words: HashMap<u32, u64>,
    total: u64,
    finals: u64,
}

#[derive(Debug, Clone)]
enum Counts {
    Unigram(UnigramCounts),
    Bigram {
        contexts: HashMap<u32, Restaurant>,
        base: Restaurant,
    },
}

#[derive(Debug, Clone)]
pub struct DpsegSampler {
    cfg: DpsegConfig,
    utterances: Vec<Vec<u32>>,
    /// `breaks[u][t]`: a word ends after symbol `t` (positions `0..len-1`).
    breaks: Vec<Vec<bool>>,
    lexicon: HashMap<Vec<u32>, u32>,
    word_lengths: Vec<usize>,
    alphabet: usize,
    counts: Counts,
    rng: ChaCha8Rng,
    sweeps: usize,
}

impl DpsegSampler {
    pub fn new(sequences: &[Vec<String>], cfg: &DpsegConfig) -> Result<Self> {
        cfg.validate()?;
        if sequences.is_empty() {
            return Err(Error::Data("dpseg needs a nonempty corpus".into()));
        }
        if sequences.iter().any(Vec::is_empty) {
            return Err(Error::Data("dpseg input contains an empty utterance".into()));
        }
        let mut symbols: HashMap<&str, u32> = HashMap::new();
        let mut sorted: Vec<&str> = sequences.iter().flatten().map(String::as_str).collect();
        sorted.sort_unstable();
        sorted.dedup();
        for (i, s) in sorted.iter().enumerate() {
            symbols.insert(s, i as u32);
        }
        let utterances: Vec<Vec<u32>> = sequences
            .iter()
            .map(|s| s.iter().map(|x| symbols[x.as_str()]).collect())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let breaks = utterances
            .iter()
            .map(|u| (0..u.len() - 1).map(|_| rng.random_bool(cfg.init_boundary_prob)).collect())
            .collect();
        let counts = match cfg.model {
            DpsegModel::Unigram => Counts::Unigram(UnigramCounts::default()),
            DpsegModel::Bigram => Counts::Bigram {
                contexts: HashMap::new(),
                base: Restaurant::default(),
            },
        };
        let mut s = Self {
            cfg: cfg.clone(),
            utterances,
            breaks,
            lexicon: HashMap::new(),
            word_lengths: vec![0],
            alphabet: sorted.len(),
            counts,
            rng,
            sweeps: 0,
        };
        for u in 0..s.utterances.len() {
            let words = s.word_ids(u);
            s.add_utterance(&words);
        }
        Ok(s)
    }

    fn intern(&mut self, word: &[u32]) -> u32 {
        if let Some(&id) = self.lexicon.get(word) {
            return id;
        }
        let id = self.word_lengths.len() as u32;
        self.lexicon.insert(word.to_vec(), id);
        self.word_lengths.push(word.len());
        id
    }

    fn spans(&self, u: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for (t, &b) in self.breaks[u].iter().enumerate() {
            if b {
                out.push((start, t + 1));
                start = t + 1;
            }
        }
        out.push((start, self.utterances[u].len()));
        out
    }

    fn word_ids(&mut self, u: usize) -> Vec<u32> {
        self.spans(u)
            .into_iter()
            .map(|(s, e)| {
                let w = self.utterances[u][s..e].to_vec();
                self.intern(&w)
            })
            .collect()
    }

    fn add_utterance(&mut self, words: &[u32]) {
        match self.counts {
            Counts::Unigram(_) => {
                for (i, &w) in words.iter().enumerate() {
                    self.add_unigram(w, i + 1 == words.len());
                }
            }
            Counts::Bigram { .. } => {
                let mut prev = EDGE;
                for &w in words.iter().chain(std::iter::once(&EDGE)) {
                    self.add_bigram(prev, w);
                    prev = w;
                }
            }
        }
    }

    /// Base probability of a word id.
    fn base(&self, w: u32) -> f64 {
        let p = self.cfg.boundary_prob;
        let len = self.word_lengths[w as usize];
        let spelling = p * (1.0 - p).powi(len as i32 - 1) * (self.alphabet as f64).powi(-(len as i32));
        match self.cfg.model {
            DpsegModel::Unigram => spelling,
            DpsegModel::Bigram if w == EDGE => self.cfg.utterance_end_prob,
            DpsegModel::Bigram => (1.0 - self.cfg.utterance_end_prob) * spelling,
        }
    }

    fn add_unigram(&mut self, w: u32, last: bool) {
        let Counts::Unigram(c) = &mut self.counts else { unreachable!() };
        *c.words.entry(w).or_default() += 1;
        c.total += 1;
        c.finals += u64::from(last);
    }

    fn remove_unigram(&mut self, w: u32, last: bool) {
        let Counts::Unigram(c) = &mut self.counts else { unreachable!() };
        let n = c.words.get_mut(&w).expect("word is counted");
        *n -= 1;
        if *n == 0 {
            c.words.remove(&w);
        }
        c.total -= 1;
        c.finals -= u64::from(last);
    }

    fn unigram_level(&self, base: &Restaurant, w: u32) -> f64 {
        let a0 = self.cfg.unigram_level_concentration();
        (base.customers_of(w) as f64 + a0 * self.base(w)) / (base.customers as f64 + a0)
    }

    fn add_bigram(&mut self, ctx: u32, w: u32) {
        let a0 = self.cfg.unigram_level_concentration();
        let a1 = self.cfg.bigram_level_concentration();
        let p0 = self.base(w);
        let Counts::Bigram { contexts, base } = &mut self.counts else { unreachable!() };
        let p1 = (base.customers_of(w) as f64 + a0 * p0) / (base.customers as f64 + a0);
        if contexts.entry(ctx).or_default().add(w, a1 * p1, &mut self.rng) {
            base.add(w, a0 * p0, &mut self.rng);
        }
    }

    fn remove_bigram(&mut self, ctx: u32, w: u32) {
        let Counts::Bigram { contexts, base } = &mut self.counts else { unreachable!() };
        let r = contexts.get_mut(&ctx).expect("context is seated");
        if r.remove(w, &mut self.rng) {
            base.remove(w, &mut self.rng);
        }
        if r.customers == 0 {
            contexts.remove(&ctx);
        }
    }

    /// Probability of emitting `w` (and its finality) after the words in
    /// `pending`, which are counted but not seated.
    fn unigram_predictive(&self, w: u32, last: bool, pending: &[(u32, bool)]) -> f64 {
        let Counts::Unigram(c) = &self.counts else { unreachable!() };
        let a0 = self.cfg.unigram_level_concentration();
        let rho = self.cfg.utterance_prior;
        let extra_w = pending.iter().filter(|p| p.0 == w).count() as f64;
        let extra_last = pending.iter().filter(|p| p.1).count() as f64;
        let n = c.total as f64 + pending.len() as f64;
        let nw = c.words.get(&w).copied().unwrap_or(0) as f64 + extra_w;
        let finals = c.finals as f64 + extra_last;
        let word = (nw + a0 * self.base(w)) / (n + a0);
        let edge = (if last { finals } else { n - finals } + rho / 2.0) / (n + rho);
        word * edge
    }

    fn bigram_predictive(&self, ctx: u32, w: u32, pending: &[(u32, u32)]) -> f64 {
        let Counts::Bigram { contexts, base } = &self.counts else { unreachable!() };
        let a1 = self.cfg.bigram_level_concentration();
        let extra_pair = pending.iter().filter(|&&p| p == (ctx, w)).count() as f64;
        let extra_ctx = pending.iter().filter(|p| p.0 == ctx).count() as f64;
        let (nw, n) = contexts
            .get(&ctx)
            .map_or((0.0, 0.0), |r| (r.customers_of(w) as f64, r.customers as f64));
        (nw + extra_pair + a1 * self.unigram_level(base, w)) / (n + extra_ctx + a1)
    }

    fn sample_position(&mut self, u: usize, t: usize, beta: f64) {
        let len = self.utterances[u].len();
        let start = (0..t).rev().find(|&k| self.breaks[u][k]).map_or(0, |k| k + 1);
        let end = (t + 1..len - 1).find(|&k| self.breaks[u][k]).map_or(len, |k| k + 1);
        let sym = self.utterances[u].clone();
        let w1 = self.intern(&sym[start..=t]);
        let w2 = self.intern(&sym[t + 1..end]);
        let w12 = self.intern(&sym[start..end]);
        let was_break = self.breaks[u][t];
        let last = end == len;

        let (p_join, p_split) = match self.counts {
            Counts::Unigram(_) => {
                if was_break {
                    self.remove_unigram(w1, false);
                    self.remove_unigram(w2, last);
                } else {
                    self.remove_unigram(w12, last);
                }
                let join = self.unigram_predictive(w12, last, &[]);
                let split = self.unigram_predictive(w1, false, &[]) * self.unigram_predictive(w2, last, &[(w1, false)]);
                (join, split)
            }
            Counts::Bigram { .. } => {
                let prev = if start == 0 {
                    EDGE
                } else {
                    let s = (0..start - 1).rev().find(|&k| self.breaks[u][k]).map_or(0, |k| k + 1);
                    self.intern(&sym[s..start])
                };
                let next = if last {
                    EDGE
                } else {
                    let e = (end..len - 1).find(|&k| self.breaks[u][k]).map_or(len, |k| k + 1);
                    self.intern(&sym[end..e])
                };
                if was_break {
                    self.remove_bigram(prev, w1);
                    self.remove_bigram(w1, w2);
                    self.remove_bigram(w2, next);
                } else {
                    self.remove_bigram(prev, w12);
                    self.remove_bigram(w12, next);
                }
                let join = self.bigram_predictive(prev, w12, &[]) * self.bigram_predictive(w12, next, &[(prev, w12)]);
                let split = self.bigram_predictive(prev, w1, &[])
                    * self.bigram_predictive(w1, w2, &[(prev, w1)])
                    * self.bigram_predictive(w2, next, &[(prev, w1), (w1, w2)]);
                let choose = self.choose(join, split, beta);
                self.breaks[u][t] = choose;
                if choose {
                    self.add_bigram(prev, w1);
                    self.add_bigram(w1, w2);
                    self.add_bigram(w2, next);
                } else {
                    self.add_bigram(prev, w12);
                    self.add_bigram(w12, next);
                }
                return;
            }
        };
        let choose = self.choose(p_join, p_split, beta);
        self.breaks[u][t] = choose;
        if choose {
            self.add_unigram(w1, false);
            self.add_unigram(w2, last);
        } else {
            self.add_unigram(w12, last);
        }
    }

    /// Draws the split hypothesis with probability split^β / (join^β + split^β).
    fn choose(&mut self, join: f64, split: f64, beta: f64) -> bool {
        let (j, s) = (join.powf(beta), split.powf(beta));
        let p = if j + s > 0.0 { s / (j + s) } else { 0.5 };
        self.rng.random::<f64>() < p
    }

    /// One pass over every boundary position, in corpus order.
    pub fn sweep(&mut self) {
        let beta = self.cfg.inverse_temperature(self.sweeps);
        for u in 0..self.utterances.len() {
            for t in 0..self.breaks[u].len() {
                self.sample_position(u, t, beta);
            }
        }
        self.sweeps += 1;
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    /// Recomputes every count from the current segmentation and compares it
    /// with the incrementally maintained state.
    pub fn counts_consistent(&self) -> bool {
        let mut fresh = self.clone();
        fresh.lexicon = self.lexicon.clone();
        match &self.counts {
            Counts::Unigram(c) => {
                fresh.counts = Counts::Unigram(UnigramCounts::default());
                for u in 0..fresh.utterances.len() {
                    let ws = fresh.word_ids(u);
                    fresh.add_utterance(&ws);
                }
                matches!(&fresh.counts, Counts::Unigram(f) if f == c)
            }
            Counts::Bigram { contexts, base } => {
                let mut pairs: HashMap<(u32, u32), u64> = HashMap::new();
                for u in 0..fresh.utterances.len() {
                    let ws = fresh.word_ids(u);
                    let mut prev = EDGE;
                    for &w in ws.iter().chain(std::iter::once(&EDGE)) {
                        *pairs.entry((prev, w)).or_default() += 1;
                        prev = w;
                    }
                }
                let mut seated: HashMap<(u32, u32), u64> = HashMap::new();
                let mut tables_per_word: HashMap<u32, u64> = HashMap::new();
                for (&ctx, r) in contexts {
                    let sum: u64 = r.dishes.values().map(|d| d.customers).sum();
                    let tables: u64 = r.dishes.values().map(|d| d.tables.len() as u64).sum();
                    if sum != r.customers || tables != r.tables {
                        return false;
                    }
                    for (&w, d) in &r.dishes {
                        if d.tables.iter().sum::<u64>() != d.customers || d.tables.contains(&0) {
                            return false;
                        }
                        seated.insert((ctx, w), d.customers);
                        *tables_per_word.entry(w).or_default() += r.tables_of(w);
                    }
                }
                let base_ok = base.dishes.len() == tables_per_word.len()
                    && tables_per_word.iter().all(|(&w, &n)| base.customers_of(w) == n)
                    && base.customers == tables_per_word.values().sum::<u64>()
                    && base.dishes.values().all(|d| d.tables.iter().sum::<u64>() == d.customers);
                seated == pairs && base_ok
            }
        }
    }

    pub fn segmentation(&self, u: usize) -> Segmentation {
        let b = (0..self.breaks[u].len()).filter(|&t| self.breaks[u][t]).map(|t| t + 1).collect();
        Segmentation::new(self.utterances[u].len(), b).expect("breaks are internal")
    }

    pub fn segmentations(&self) -> Vec<Segmentation> {
        (0..self.utterances.len()).map(|u| self.segmentation(u)).collect()
    }

    /// Runs the configured number of sweeps and returns the final (or
    /// majority-over-final-samples) segmentation for each utterance.
    pub fn run(&mut self) -> Vec<Segmentation> {
        let k = self.cfg.marginal_samples;
        let mut tally: Vec<Vec<usize>> = self.breaks.iter().map(|b| vec![0; b.len()]).collect();
        for i in 0..self.cfg.iterations {
            self.sweep();
            if k > 0 && i + k >= self.cfg.iterations {
                for (tu, bu) in tally.iter_mut().zip(&self.breaks) {
                    for (c, &b) in tu.iter_mut().zip(bu) {
                        *c += usize::from(b);
                    }
                }
            }
        }
        if k == 0 {
            return self.segmentations();
        }
        tally
            .iter()
            .zip(&self.utterances)
            .map(|(tu, u)| {
                let b = (0..tu.len()).filter(|&t| 2 * tu[t] > k).map(|t| t + 1).collect();
                Segmentation::new(u.len(), b).expect("breaks are internal")
            })
            .collect()
    }
}

/// Monolingual segmentation of the UL side of `corpus`.
pub fn dpseg_segment(corpus: &ParallelCorpus, cfg: &DpsegConfig) -> Result<Segmentations> {
    let sequences: Vec<Vec<String>> = corpus.utterances.iter().map(|u| u.ul_symbols.clone()).collect();
    let segs = DpsegSampler::new(&sequences, cfg)?.run();
    Ok(corpus.utterances.iter().map(|u| u.id.clone()).zip(segs).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::IndexedRandom;

    fn chars(s: &str) -> Vec<String> {
        s.chars().map(String::from).collect()
    }

    /// Sentences of 1 to 4 words drawn from a fixed lexicon; returns the
    /// symbol sequences and the true boundaries.
    fn lexicon_corpus(n: usize, seed: u64) -> (Vec<Vec<String>>, Vec<Vec<usize>>) {
        let lexicon = ["ba", "dok", "tiru", "me", "loka", "sin", "pavu", "ge", "nori", "kas"];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seqs = Vec::new();
        let mut gold = Vec::new();
        for _ in 0..n {
            let k = rng.random_range(1..=4);
            let mut s = String::new();
            let mut b = Vec::new();
            for i in 0..k {
                if i > 0 {
                    b.push(s.len());
                }
                s.push_str(lexicon.choose(&mut rng).unwrap());
            }
            seqs.push(chars(&s));
            gold.push(b);
        }
        (seqs, gold)
    }

    fn boundary_f(hyp: &[Segmentation], gold: &[Vec<usize>]) -> f64 {
        let (mut m, mut h, mut g) = (0, 0, 0);
        for (s, gb) in hyp.iter().zip(gold) {
            h += s.boundaries().len();
            g += gb.len();
            m += s.boundaries().iter().filter(|b| gb.contains(b)).count();
        }
        2.0 * m as f64 / (h + g) as f64
    }

    #[test]
    fn rejects_zero_iterations() {
        let cfg = DpsegConfig {
            iterations: 0,
            ..Default::default()
        };
        assert!(matches!(DpsegSampler::new(&[chars("ab")], &cfg), Err(Error::Config(_))));
        assert!(DpsegSampler::new(&[], &DpsegConfig::default()).is_err());
    }

    #[test]
    fn counts_stay_consistent() {
        let (seqs, _) = lexicon_corpus(40, 3);
        for model in [DpsegModel::Unigram, DpsegModel::Bigram] {
            let cfg = DpsegConfig {
                model,
                iterations: 20,
                ..Default::default()
            };
            let mut s = DpsegSampler::new(&seqs, &cfg).unwrap();
            assert!(s.counts_consistent());
            for _ in 0..20 {
                s.sweep();
                assert!(s.counts_consistent(), "{model:?} after sweep {}", s.sweeps());
            }
        }
    }

    #[test]
    fn identical_copies_converge_together() {
        let seqs = vec![chars("aaaa"); 100];
        for model in [DpsegModel::Unigram, DpsegModel::Bigram] {
            let cfg = DpsegConfig {
                model,
                concentration: Some(1e-3),
                bigram_concentration: Some(1e-3),
                iterations: 200,
                ..Default::default()
            };
            let segs = DpsegSampler::new(&seqs, &cfg).unwrap().run();
            assert!(segs.iter().all(|s| s == &segs[0]), "{model:?}");
        }
    }

    #[test]
    fn recovers_small_lexicon() {
        let (seqs, gold) = lexicon_corpus(300, 5);
        let segs = DpsegSampler::new(&seqs, &DpsegConfig::default()).unwrap().run();
        let f = boundary_f(&segs, &gold);
        assert!(f >= 0.7, "boundary F {f}");
    }

    #[test]
    fn seeded_runs_are_identical() {
        let (seqs, _) = lexicon_corpus(30, 9);
        let cfg = DpsegConfig {
            iterations: 30,
            marginal_samples: 5,
            ..Default::default()
        };
        let a = DpsegSampler::new(&seqs, &cfg).unwrap().run();
        let b = DpsegSampler::new(&seqs, &cfg).unwrap().run();
        assert_eq!(a, b);
    }
}
