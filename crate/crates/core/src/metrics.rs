//! Boundary, token and type scores against a gold segmentation.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Segmentation, Segmentations};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub matched: usize,
    pub hypothesized: usize,
    pub gold: usize,
}

impl Prf {
    /// Ratios from counts; an empty denominator gives 0.
    pub fn from_counts(matched: usize, hypothesized: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let (p, r) = (ratio(matched, hypothesized), ratio(matched, gold));
        Self {
            precision: p,
            recall: r,
            f_score: if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 },
            matched,
            hypothesized,
            gold,
        }
    }
}

fn paired<'a>(
    hyp: &'a Segmentations,
    gold: &'a Segmentations,
) -> Result<Vec<(&'a str, &'a Segmentation, &'a Segmentation)>> {
    let missing: Vec<&str> = gold.keys().filter(|k| !hyp.contains_key(*k)).map(String::as_str).collect();
    let extra: Vec<&str> = hyp.keys().filter(|k| !gold.contains_key(*k)).map(String::as_str).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::Data(format!(
            "hypothesis and gold cover different utterances (missing: [{}], extra: [{}])",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    gold.iter()
        .map(|(id, g)| {
            let h = &hyp[id];
            if h.len() != g.len() {
                return Err(Error::Data(format!(
                    "utterance {id}: hypothesis has {} symbols, gold has {}",
                    h.len(),
                    g.len()
                )));
            }
            Ok((id.as_str(), h, g))
        })
        .collect()
}

/// Sorted-merge count of common elements.
fn common(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Micro-averaged over internal boundary positions of every utterance.
pub fn boundary_prf(hyp: &Segmentations, gold: &Segmentations) -> Result<Prf> {
    let (mut m, mut h, mut g) = (0, 0, 0);
    for (_, hs, gs) in paired(hyp, gold)? {
        m += common(hs.boundaries(), gs.boundaries());
        h += hs.boundaries().len();
        g += gs.boundaries().len();
    }
    Ok(Prf::from_counts(m, h, g))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalScores {
    pub token: Prf,
    pub types: Prf,
    /// Fraction of gold types found among hypothesis types.
    pub type_retrieval: f64,
    pub hypothesis_types: usize,
    pub gold_types: usize,
}

fn word_types<'a>(symbols: &'a [String], seg: &Segmentation, out: &mut HashSet<&'a [String]>) {
    out.extend(seg.words(symbols));
}

/// Token matches are identical spans within an utterance; types are distinct
/// symbol sequences over the corpus. `symbols` maps ids to UL symbols.
pub fn token_type_prf(
    hyp: &Segmentations,
    gold: &Segmentations,
    symbols: &BTreeMap<String, Vec<String>>,
) -> Result<LexicalScores> {
    let (mut m, mut h, mut g) = (0, 0, 0);
    let mut hyp_types = HashSet::new();
    let mut gold_types = HashSet::new();
    for (id, hs, gs) in paired(hyp, gold)? {
        let sy = symbols
            .get(id)
            .ok_or_else(|| Error::Data(format!("no symbols for utterance {id}")))?;
        if sy.len() != gs.len() {
            return Err(Error::Data(format!(
                "utterance {id}: {} symbols for a segmentation of length {}",
                sy.len(),
                gs.len()
            )));
        }
        let hb: Vec<(usize, usize)> = hs.spans();
        let gb: Vec<(usize, usize)> = gs.spans();
        let gset: HashSet<&(usize, usize)> = gb.iter().collect();
        m += hb.iter().filter(|s| gset.contains(s)).count();
        h += hb.len();
        g += gb.len();
        word_types(sy, hs, &mut hyp_types);
        word_types(sy, gs, &mut gold_types);
    }
    let shared = hyp_types.intersection(&gold_types).count();
    let types = Prf::from_counts(shared, hyp_types.len(), gold_types.len());
    Ok(LexicalScores {
        token: Prf::from_counts(m, h, g),
        types,
        type_retrieval: types.recall,
        hypothesis_types: hyp_types.len(),
        gold_types: gold_types.len(),
    })
}

/// Stable report schema; `to_key_values` and the JSON form use these names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub utterances: usize,
    pub boundary: Prf,
    /// Set when no boundary was hypothesized, so boundary precision is undefined (reported as 0).
    pub boundary_precision_undefined: bool,
    pub token: Prf,
    pub types: Prf,
    pub type_retrieval: f64,
    pub hypothesis_types: usize,
    pub gold_types: usize,
}

pub fn evaluate(
    hyp: &Segmentations,
    gold: &Segmentations,
    symbols: &BTreeMap<String, Vec<String>>,
) -> Result<EvalReport> {
    let boundary = boundary_prf(hyp, gold)?;
    let lex = token_type_prf(hyp, gold, symbols)?;
    Ok(EvalReport {
        utterances: gold.len(),
        boundary,
        boundary_precision_undefined: boundary.hypothesized == 0,
        token: lex.token,
        types: lex.types,
        type_retrieval: lex.type_retrieval,
        hypothesis_types: lex.hypothesis_types,
        gold_types: lex.gold_types,
    })
}

impl EvalReport {
    /// `key=value` lines, one per field, prefixed by level.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "utterances={}", self.utterances);
        for (level, p) in [("boundary", &self.boundary), ("token", &self.token), ("type", &self.types)] {
            let _ = writeln!(out, "{level}_precision={:.6}", p.precision);
            let _ = writeln!(out, "{level}_recall={:.6}", p.recall);
            let _ = writeln!(out, "{level}_f={:.6}", p.f_score);
            let _ = writeln!(out, "{level}_matched={}", p.matched);
            let _ = writeln!(out, "{level}_hypothesized={}", p.hypothesized);
            let _ = writeln!(out, "{level}_gold={}", p.gold);
        }
        let _ = writeln!(out, "boundary_precision_undefined={}", self.boundary_precision_undefined);
        let _ = writeln!(out, "type_retrieval={:.6}", self.type_retrieval);
        let _ = writeln!(out, "hypothesis_types={}", self.hypothesis_types);
        let _ = writeln!(out, "gold_types={}", self.gold_types);
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    /// Writes `<stem>.txt` (key-value) and `<stem>.json`.
    pub fn write(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        for (ext, body) in [("txt", self.to_key_values()), ("json", self.to_json())] {
            let p = stem.with_extension(ext);
            fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}
