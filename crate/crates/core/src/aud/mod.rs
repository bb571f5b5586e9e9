//! Acoustic unit discovery: MFCC features, a phone-loop of left-to-right
//! HMM units trained by MAP-EM under a symmetric Dirichlet prior on unit
//! weights, and Viterbi decoding into time-marked pseudo-phones.

mod mfcc;
mod phone_loop;
mod wav;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mfcc::{extract_mfcc, MfccConfig};
pub use phone_loop::{
    decode_units, normalized_mutual_information, train_phone_loop, AudModel, GaussianMixture, PhoneLoopConfig,
    TrainingTrace, UnitHmm, UnitInit,
};
pub use wav::read_wav;

/// Cepstra per frame before deltas.
pub const NUM_CEPSTRA: usize = 13;
/// Full feature dimension: cepstra, Δ and ΔΔ.
pub const FEATURE_DIM: usize = 3 * NUM_CEPSTRA;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSequence {
    pub id: String,
    /// Frame step in seconds.
    pub step: f64,
    /// Frame width in seconds.
    pub width: f64,
    frames: Vec<Vec<f64>>,
}

impl FeatureSequence {
    pub fn new(id: impl Into<String>, step: f64, width: f64, frames: Vec<Vec<f64>>) -> Result<Self> {
        let id = id.into();
        if frames.is_empty() {
            return Err(Error::Data(format!("{id}: feature sequence has no frames")));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.len() != FEATURE_DIM {
                return Err(Error::shape("feature frame", FEATURE_DIM, f.len()));
            }
            if f.iter().any(|x| !x.is_finite()) {
                return Err(Error::Numerical(format!("{id}: non-finite feature in frame {t}")));
            }
        }
        Ok(Self {
            id,
            step,
            width,
            frames,
        })
    }

    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Seconds covered from the first frame's start to the last frame's end.
    pub fn duration(&self) -> f64 {
        (self.frames.len() - 1) as f64 * self.step + self.width
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimedUnit {
    pub label: usize,
    pub start: f64,
    pub end: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedUnitSequence {
    pub id: String,
    pub segments: Vec<TimedUnit>,
}

impl TimedUnitSequence {
    /// Unit labels as UL symbols (`a<unit-id>`).
    pub fn labels(&self) -> Vec<String> {
        self.segments.iter().map(|s| unit_symbol(s.label)).collect()
    }
}

pub fn unit_symbol(label: usize) -> String {
    format!("a{label}")
}

/// One interval per line: `<utt-id> <start-sec> <end-sec> a<unit-id>`.
pub fn format_timed_units(seqs: &[TimedUnitSequence]) -> String {
    let mut out = String::new();
    for seq in seqs {
        for s in &seq.segments {
            let _ = writeln!(out, "{} {:.6} {:.6} {}", seq.id, s.start, s.end, unit_symbol(s.label));
        }
    }
    out
}

pub fn parse_timed_units(text: &str) -> Result<Vec<TimedUnitSequence>> {
    let mut seqs: Vec<TimedUnitSequence> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        let bad = || Error::Data(format!("time-marked units line {}: expected `<id> <start> <end> a<unit>`", n + 1));
        if fields.len() != 4 {
            return Err(bad());
        }
        let start: f64 = fields[1].parse().map_err(|_| bad())?;
        let end: f64 = fields[2].parse().map_err(|_| bad())?;
        let label: usize = fields[3].strip_prefix('a').and_then(|l| l.parse().ok()).ok_or_else(bad)?;
        let k = *index.entry(fields[0].to_owned()).or_insert_with(|| {
            seqs.push(TimedUnitSequence {
                id: fields[0].to_owned(),
                segments: Vec::new(),
            });
            seqs.len() - 1
        });
        if let Some(prev) = seqs[k].segments.last() {
            if start < prev.end - 1e-9 {
                return Err(Error::Data(format!("time-marked units line {}: interval overlaps previous", n + 1)));
            }
        }
        seqs[k].segments.push(TimedUnit { label, start, end });
    }
    Ok(seqs)
}

pub fn write_timed_units(path: impl AsRef<Path>, seqs: &[TimedUnitSequence]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_timed_units(seqs)).map_err(|e| Error::io(path, e))
}

pub fn read_timed_units(path: impl AsRef<Path>) -> Result<Vec<TimedUnitSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_timed_units(&text)
}

/// Text feature dump: a `# <id> <frames> <dim> <step> <width>` header per
/// utterance, then one frame per line.
pub fn format_features(seqs: &[FeatureSequence]) -> String {
    let mut out = String::new();
    for seq in seqs {
        let _ = writeln!(out, "# {} {} {} {} {}", seq.id, seq.len(), FEATURE_DIM, seq.step, seq.width);
        for f in seq.frames() {
            let row: Vec<String> = f.iter().map(|x| x.to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
    }
    out
}

pub fn parse_features(text: &str) -> Result<Vec<FeatureSequence>> {
    let mut seqs = Vec::new();
    let mut lines = text.lines().enumerate();
    while let Some((n, header)) = lines.next() {
        if header.trim().is_empty() {
            continue;
        }
        let bad = || Error::Data(format!("feature file line {}: malformed header", n + 1));
        let f: Vec<&str> = header.strip_prefix("# ").ok_or_else(bad)?.split_ascii_whitespace().collect();
        if f.len() != 5 {
            return Err(bad());
        }
        let count: usize = f[1].parse().map_err(|_| bad())?;
        let step: f64 = f[3].parse().map_err(|_| bad())?;
        let width: f64 = f[4].parse().map_err(|_| bad())?;
        let mut frames = Vec::with_capacity(count);
        for _ in 0..count {
            let (m, row) = lines.next().ok_or_else(bad)?;
            let vals = row
                .split_ascii_whitespace()
                .map(|v| v.parse::<f64>().map_err(|_| Error::Data(format!("feature file line {}: bad value", m + 1))))
                .collect::<Result<Vec<_>>>()?;
            frames.push(vals);
        }
        seqs.push(FeatureSequence::new(f[0], step, width, frames)?);
    }
    Ok(seqs)
}

pub fn write_features(path: impl AsRef<Path>, seqs: &[FeatureSequence]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_features(seqs)).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<Vec<FeatureSequence>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_features(&text)
}

/// JSON dump of a trained phone loop.
pub fn save_aud_model(path: impl AsRef<Path>, model: &AudModel) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string(model).map_err(|e| Error::Data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_aud_model(path: impl AsRef<Path>) -> Result<AudModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut model: AudModel =
        serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    model.restore_caches();
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_file_round_trip() {
        let (feats, _) = crate::synth::synth_unit_features(&crate::synth::SynthFeatureConfig {
            utterances: 4,
            ..Default::default()
        })
        .unwrap();
        let cfg = PhoneLoopConfig {
            max_units: 4,
            iterations: 2,
            ..Default::default()
        };
        let (model, _) = train_phone_loop(&feats, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("aud.json");
        save_aud_model(&p, &model).unwrap();
        let back = load_aud_model(&p).unwrap();
        assert_eq!(back.labels, model.labels);
        let a = back.log_likelihood(&feats[0]).unwrap();
        let b = model.log_likelihood(&feats[0]).unwrap();
        assert!((a - b).abs() <= 1e-9 * b.abs());
        write_features(dir.path().join("f.txt"), &feats).unwrap();
        assert_eq!(read_features(dir.path().join("f.txt")).unwrap().len(), feats.len());
    }

    #[test]
    fn timed_units_round_trip() {
        let seqs = vec![TimedUnitSequence {
            id: "u1".into(),
            segments: vec![
                TimedUnit { label: 3, start: 0.0, end: 0.05 },
                TimedUnit { label: 17, start: 0.05, end: 0.125 },
            ],
        }];
        let text = format_timed_units(&seqs);
        assert_eq!(text, "u1 0.000000 0.050000 a3\nu1 0.050000 0.125000 a17\n");
        assert_eq!(parse_timed_units(&text).unwrap(), seqs);
        assert_eq!(seqs[0].labels(), vec!["a3", "a17"]);
    }

    #[test]
    fn timed_units_reject_garbage() {
        assert!(parse_timed_units("u1 0 1 b3\n").is_err());
        assert!(parse_timed_units("u1 0 1\n").is_err());
        assert!(parse_timed_units("u1 0 1 a1\nu1 0.5 2 a2\n").is_err());
    }

    #[test]
    fn features_round_trip() {
        let frames = vec![vec![0.25; FEATURE_DIM], vec![-1.5; FEATURE_DIM]];
        let seq = FeatureSequence::new("x", 0.01, 0.025, frames).unwrap();
        let back = parse_features(&format_features(std::slice::from_ref(&seq))).unwrap();
        assert_eq!(back, vec![seq]);
    }

    #[test]
    fn feature_dim_enforced() {
        assert!(FeatureSequence::new("x", 0.01, 0.025, vec![vec![0.0; 12]]).is_err());
    }
}
