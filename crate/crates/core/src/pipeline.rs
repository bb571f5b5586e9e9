//! Staged end-to-end runs driven by a TOML config. Every stage writes into
//! `<output_dir>/<stage>.partial/`, adds a `manifest.json` (input and output
//! hashes, config hash, seed), and is renamed to `<output_dir>/<stage>/` only
//! on success.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aligner::{read_attention, train_with_progress, write_attention, AlignerConfig, AlignerModel, AttentionMatrix};
use crate::aud::{
    decode_units, extract_mfcc, read_features, read_timed_units, read_wav, save_aud_model, train_phone_loop,
    write_features, write_timed_units, MfccConfig, PhoneLoopConfig,
};
use crate::baselines::{dpseg_segment, proportional_corpus, DpsegConfig};
use crate::corpus::{
    gold_lines, load_gold_segmentation, load_parallel_corpus, split_train_dev, write_corpus, ParallelCorpus,
    Segmentations,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalReport};
use crate::segmenter::{read_boundaries, segment_corpus, write_segmentation, SegmentOptions};
use crate::synth::{synth_corpus, SynthConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Aud,
    Corpus,
    Train,
    Align,
    Segment,
    Baseline,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Aud,
        Stage::Corpus,
        Stage::Train,
        Stage::Align,
        Stage::Segment,
        Stage::Baseline,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Aud => "aud",
            Stage::Corpus => "corpus",
            Stage::Train => "train",
            Stage::Align => "align",
            Stage::Segment => "segment",
            Stage::Baseline => "baseline",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// How the runs that are averaged differ from one another.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Resample {
    /// A fresh train/dev split per run, same aligner seed.
    Split,
    /// One split, a fresh aligner seed per run.
    Seed,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusConfig {
    /// Generate a synthetic corpus instead of reading files.
    pub synth: Option<SynthConfig>,
    pub ul: Option<PathBuf>,
    pub wrl: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    /// Time-marked unit file used as the UL side (default: the aud stage output).
    pub units: Option<PathBuf>,
    pub delimiter: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudStageConfig {
    /// Precomputed feature file.
    pub features: Option<PathBuf>,
    /// Lines of `<id> <wav path>`; paths relative to the list file.
    pub wav_list: Option<PathBuf>,
    pub mfcc: MfccConfig,
    pub phone_loop: PhoneLoopConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub stages: Vec<Stage>,
    pub output_dir: PathBuf,
    pub runs: usize,
    pub resample: Resample,
    pub dev_fraction: f64,
    pub seed: u64,
    pub smooth: bool,
    /// Keep the end-of-sequence row in written attention files.
    pub include_eos: bool,
    /// Skip dpseg in the baseline stage.
    pub skip_dpseg: bool,
    pub corpus: CorpusConfig,
    pub aligner: AlignerConfig,
    pub dpseg: DpsegConfig,
    pub aud: AudStageConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            stages: vec![
                Stage::Corpus,
                Stage::Train,
                Stage::Align,
                Stage::Segment,
                Stage::Baseline,
                Stage::Evaluate,
            ],
            output_dir: PathBuf::from("out"),
            runs: 5,
            resample: Resample::Split,
            dev_fraction: 0.1,
            seed: 1,
            smooth: false,
            include_eos: true,
            skip_dpseg: false,
            corpus: CorpusConfig::default(),
            aligner: AlignerConfig::default(),
            dpseg: DpsegConfig::default(),
            aud: AudStageConfig::default(),
        }
    }
}

/// Parses a `key=value` override into a TOML value: anything that parses as
/// a TOML literal keeps its type, otherwise it is a string.
fn override_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}

fn apply_override(root: &mut toml::Table, key: &str, raw: &str) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("malformed override key `{key}`")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{key}`: `{p}` is not a section")))?;
    }
    let value = if parts.last() == Some(&"stages") {
        let list = raw.split(',').map(|s| toml::Value::String(s.trim().to_owned())).collect();
        toml::Value::Array(list)
    } else {
        override_value(raw)
    };
    table.insert(parts[parts.len() - 1].to_owned(), value);
    Ok(())
}

/// Deserializes TOML text with dotted `key=value` overrides applied on top.
pub fn config_from_toml<T: serde::de::DeserializeOwned>(text: &str, overrides: &[(String, String)]) -> Result<T> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    for (k, v) in overrides {
        apply_override(&mut table, k, v)?;
    }
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(e.to_string()))
}

impl PipelineConfig {
    pub fn from_toml_with_overrides(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let cfg: Self = config_from_toml(text, overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_with_overrides(&text, overrides)?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Makes relative input paths relative to `base` (the config file's directory).
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(x) = p {
                if x.is_relative() {
                    *x = base.join(&*x);
                }
            }
        };
        fix(&mut self.corpus.ul);
        fix(&mut self.corpus.wrl);
        fix(&mut self.corpus.gold);
        fix(&mut self.corpus.units);
        fix(&mut self.aud.features);
        fix(&mut self.aud.wav_list);
        if self.output_dir.is_relative() {
            self.output_dir = base.join(&self.output_dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(Error::Config(format!("dev_fraction {} outside (0, 1)", self.dev_fraction)));
        }
        self.aligner.validate()?;
        self.dpseg.validate()
    }

    /// Effective config as recorded in manifests (without the output location).
    pub fn echo(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(o) = v.as_object_mut() {
            o.remove("output_dir");
        }
        v
    }

    pub fn config_hash(&self) -> String {
        sha256_hex(self.echo().to_string().as_bytes())
    }
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(Sha256::digest(data))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&data))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub version: String,
    pub seed: u64,
    pub config_hash: String,
    pub config: serde_json::Value,
    /// Input path (relative to the output directory when inside it) to SHA-256.
    pub inputs: BTreeMap<String, String>,
    /// Output path relative to the output directory to SHA-256.
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn files_under(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| Error::io(dir, err)))
        .collect::<Result<_>>()?;
    entries.sort();
    for p in entries {
        if p.is_dir() {
            files_under(&p, out)?;
        } else {
            out.push(p);
        }
    }
    Ok(())
}

fn portable(p: &Path) -> String {
    p.components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// One stage's working directory.
struct StageRun<'a> {
    cfg: &'a PipelineConfig,
    stage: Stage,
    partial: PathBuf,
    inputs: BTreeMap<String, String>,
}

impl<'a> StageRun<'a> {
    fn begin(cfg: &'a PipelineConfig, stage: Stage) -> Result<Self> {
        let partial = cfg.output_dir.join(format!("{}.partial", stage.name()));
        if partial.exists() {
            fs::remove_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
        }
        fs::create_dir_all(&partial).map_err(|e| Error::io(&partial, e))?;
        Ok(Self {
            cfg,
            stage,
            partial,
            inputs: BTreeMap::new(),
        })
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.partial.join(rel)
    }

    fn dir(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        let key = match path.strip_prefix(&self.cfg.output_dir) {
            Ok(rel) => portable(rel),
            Err(_) => portable(path),
        };
        self.inputs.insert(key, sha256_file(path)?);
        Ok(())
    }

    fn commit(self) -> Result<PathBuf> {
        let mut files = Vec::new();
        files_under(&self.partial, &mut files)?;
        let mut outputs = BTreeMap::new();
        for f in files {
            let rel = f.strip_prefix(&self.partial).expect("file lies under the stage dir");
            outputs.insert(format!("{}/{}", self.stage.name(), portable(rel)), sha256_file(&f)?);
        }
        let manifest = Manifest {
            stage: self.stage.name().into(),
            version: env!("CARGO_PKG_VERSION").into(),
            seed: self.cfg.seed,
            config_hash: self.cfg.config_hash(),
            config: self.cfg.echo(),
            inputs: self.inputs,
            outputs,
        };
        let mp = self.partial.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
        fs::write(&mp, text).map_err(|e| Error::io(&mp, e))?;
        let dest = self.cfg.output_dir.join(self.stage.name());
        if dest.exists() {
            fs::remove_dir_all(&dest).map_err(|e| Error::io(&dest, e))?;
        }
        fs::rename(&self.partial, &dest).map_err(|e| Error::io(&dest, e))?;
        Ok(dest)
    }
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::Data(format!("{what} not found: {}", path.display())))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub reports: BTreeMap<String, EvalReport>,
    /// Mean boundary F over the individual attention runs.
    pub mean_run_boundary_f: Option<f64>,
    pub averaged_boundary_f: Option<f64>,
}

pub struct Pipeline<'a> {
    pub cfg: &'a PipelineConfig,
    log: Box<dyn FnMut(&str) + 'a>,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a PipelineConfig, log: impl FnMut(&str) + 'a) -> Self {
        Self {
            cfg,
            log: Box::new(log),
        }
    }

    fn out(&self, rel: &str) -> PathBuf {
        self.cfg.output_dir.join(rel)
    }

    /// Runs the configured stages in canonical order.
    pub fn run(&mut self) -> Result<PipelineSummary> {
        self.cfg.validate()?;
        fs::create_dir_all(&self.cfg.output_dir).map_err(|e| Error::io(&self.cfg.output_dir, e))?;
        let mut stages = self.cfg.stages.clone();
        stages.sort();
        stages.dedup();
        let mut summary = PipelineSummary::default();
        for st in stages {
            (self.log)(&format!("stage {}", st.name()));
            match st {
                Stage::Aud => self.aud()?,
                Stage::Corpus => self.corpus()?,
                Stage::Train => self.train()?,
                Stage::Align => self.align()?,
                Stage::Segment => self.segment()?,
                Stage::Baseline => self.baseline()?,
                Stage::Evaluate => summary = self.evaluate()?,
            }
        }
        Ok(summary)
    }

    fn aud(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let mut st = StageRun::begin(cfg, Stage::Aud)?;
        let feats = match (&cfg.aud.features, &cfg.aud.wav_list) {
            (Some(f), _) => {
                st.input(f)?;
                read_features(f)?
            }
            (None, Some(list)) => {
                st.input(list)?;
                let text = fs::read_to_string(list).map_err(|e| Error::io(list, e))?;
                let base = list.parent().unwrap_or(Path::new(""));
                let mut feats = Vec::new();
                for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                    let mut f = line.split_ascii_whitespace();
                    let (id, wav) = match (f.next(), f.next()) {
                        (Some(id), Some(w)) => (id, base.join(w)),
                        _ => return Err(Error::Data(format!("{}: line {}: expected `<id> <wav>`", list.display(), n + 1))),
                    };
                    st.input(&wav)?;
                    let (samples, rate) = read_wav(&wav)?;
                    feats.push(extract_mfcc(id, &samples, rate, &cfg.aud.mfcc)?);
                }
                write_features(st.path("features.txt"), &feats)?;
                feats
            }
            (None, None) => return Err(Error::Config("aud stage needs aud.features or aud.wav_list".into())),
        };
        let (model, trace) = train_phone_loop(&feats, &cfg.aud.phone_loop)?;
        (self.log)(&format!("aud: {} units retained", model.num_units()));
        save_aud_model(st.path("model.json"), &model)?;
        write_json(&st.path("trace.json"), &trace)?;
        let units = feats.iter().map(|f| decode_units(&model, f)).collect::<Result<Vec<_>>>()?;
        write_timed_units(st.path("units.txt"), &units)?;
        st.commit()?;
        Ok(())
    }

    fn corpus(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let c = &cfg.corpus;
        let mut st = StageRun::begin(cfg, Stage::Corpus)?;
        let mut corpus = if let Some(s) = &c.synth {
            synth_corpus(s)?
        } else {
            let wrl = c
                .wrl
                .as_ref()
                .ok_or_else(|| Error::Config("corpus.wrl is required unless corpus.synth is set".into()))?;
            st.input(wrl)?;
            if let Some(ul) = &c.ul {
                st.input(ul)?;
                load_parallel_corpus(ul, wrl)?
            } else {
                let units = c.units.clone().unwrap_or_else(|| self.out("aud/units.txt"));
                require(&units, "unit file")?;
                st.input(&units)?;
                let seqs = read_timed_units(&units)?;
                let text = fs::read_to_string(wrl).map_err(|e| Error::io(wrl, e))?;
                let lines: Vec<String> = text.lines().map(str::to_owned).collect();
                ParallelCorpus::from_timed_units(&seqs, &lines)?
            }
        };
        if let Some(g) = &c.gold {
            st.input(g)?;
            corpus = load_gold_segmentation(corpus, g, c.delimiter.as_deref())?;
        }
        write_corpus(&corpus, st.path("ul.txt"), st.path("wrl.txt"))?;
        if corpus.has_gold() {
            crate::corpus::write_lines(&st.path("gold.txt"), &gold_lines(&corpus)?)?;
        }
        (self.log)(&format!("corpus: {} utterances", corpus.len()));
        st.commit()?;
        Ok(())
    }

    /// The prepared corpus, with gold attached when available.
    fn load_corpus(&self, st: &mut StageRun<'_>) -> Result<ParallelCorpus> {
        let (ul, wrl, gold) = (self.out("corpus/ul.txt"), self.out("corpus/wrl.txt"), self.out("corpus/gold.txt"));
        require(&ul, "prepared corpus")?;
        st.input(&ul)?;
        st.input(&wrl)?;
        let corpus = load_parallel_corpus(&ul, &wrl)?;
        if gold.exists() {
            st.input(&gold)?;
            return load_gold_segmentation(corpus, &gold, self.cfg.corpus.delimiter.as_deref());
        }
        Ok(corpus)
    }

    fn run_seeds(&self, run: usize) -> (u64, u64) {
        let r = run as u64;
        match self.cfg.resample {
            Resample::Split => (self.cfg.seed.wrapping_add(r), self.cfg.aligner.seed),
            Resample::Seed => (self.cfg.seed, self.cfg.aligner.seed.wrapping_add(r)),
        }
    }

    fn train(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let mut st = StageRun::begin(cfg, Stage::Train)?;
        let corpus = self.load_corpus(&mut st)?;
        for run in 1..=cfg.runs {
            let (split_seed, aligner_seed) = self.run_seeds(run - 1);
            let (train, dev) = split_train_dev(&corpus, cfg.dev_fraction, split_seed)?;
            let acfg = AlignerConfig {
                seed: aligner_seed,
                ..cfg.aligner.clone()
            };
            let log = &mut self.log;
            let (model, tlog) = train_with_progress(&train, &dev, &acfg, |r| {
                log(&format!(
                    "run {run} epoch {}: train loss {:.4}, dev ppl {:.4}",
                    r.epoch, r.train_loss, r.dev_perplexity
                ))
            })?;
            let dir = st.dir(&format!("run{run}"))?;
            model.save(dir.join("model.ckpt"))?;
            write_json(&dir.join("log.json"), &tlog)?;
            let ids: Vec<String> = dev.utterances.iter().map(|u| u.id.clone()).collect();
            crate::corpus::write_lines(&dir.join("dev_ids.txt"), &ids)?;
        }
        st.commit()?;
        Ok(())
    }

    fn align(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let mut st = StageRun::begin(cfg, Stage::Align)?;
        let corpus = self.load_corpus(&mut st)?;
        for run in 1..=cfg.runs {
            let ckpt = self.out(&format!("train/run{run}/model.ckpt"));
            require(&ckpt, "model checkpoint")?;
            st.input(&ckpt)?;
            st.input(&crate::aligner::sidecar_path(&ckpt))?;
            let model = AlignerModel::load(&ckpt)?;
            let ms = corpus
                .utterances
                .par_iter()
                .map(|u| model.forced_decode(u, cfg.include_eos))
                .collect::<Result<Vec<_>>>()?;
            write_attention(st.path(&format!("run{run}.txt")), &ms)?;
        }
        st.commit()?;
        Ok(())
    }

    fn segment(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let mut st = StageRun::begin(cfg, Stage::Segment)?;
        let corpus = self.load_corpus(&mut st)?;
        let opts = SegmentOptions { smooth: cfg.smooth };
        let mut runs: Vec<Vec<AttentionMatrix>> = Vec::new();
        for run in 1..=cfg.runs {
            let p = self.out(&format!("align/run{run}.txt"));
            require(&p, "attention file")?;
            st.input(&p)?;
            let ms = read_attention(&p)?;
            let segs = segment_corpus(&corpus, std::slice::from_ref(&ms), opts)?;
            write_segmentation(st.path(&format!("run{run}.txt")), &corpus, &segs)?;
            runs.push(ms);
        }
        if runs.len() > 1 {
            let segs = segment_corpus(&corpus, &runs, opts)?;
            write_segmentation(st.path("averaged.txt"), &corpus, &segs)?;
        }
        st.commit()?;
        Ok(())
    }

    fn baseline(&mut self) -> Result<()> {
        let cfg = self.cfg;
        let mut st = StageRun::begin(cfg, Stage::Baseline)?;
        let corpus = self.load_corpus(&mut st)?;
        write_segmentation(st.path("proportional.txt"), &corpus, &proportional_corpus(&corpus))?;
        if !cfg.skip_dpseg {
            (self.log)("baseline: dpseg sampling");
            write_segmentation(st.path("dpseg.txt"), &corpus, &dpseg_segment(&corpus, &cfg.dpseg)?)?;
        }
        st.commit()?;
        Ok(())
    }

    fn evaluate(&mut self) -> Result<PipelineSummary> {
        let cfg = self.cfg;
        let mut st = StageRun::begin(cfg, Stage::Evaluate)?;
        let gold_path = self.out("corpus/gold.txt");
        if !gold_path.exists() {
            return Err(Error::Data(format!("gold segmentation not found: {}", gold_path.display())));
        }
        let corpus = self.load_corpus(&mut st)?;
        let gold = corpus.gold()?;
        let symbols = corpus.symbols_map();
        let mut systems: Vec<(String, PathBuf)> = (1..=cfg.runs)
            .map(|r| (format!("attention-run{r}"), self.out(&format!("segment/run{r}.txt"))))
            .collect();
        systems.push(("attention-averaged".into(), self.out("segment/averaged.txt")));
        systems.push(("proportional".into(), self.out("baseline/proportional.txt")));
        systems.push(("dpseg".into(), self.out("baseline/dpseg.txt")));
        let mut summary = PipelineSummary::default();
        for (name, p) in systems {
            let side = crate::segmenter::boundaries_path(&p);
            if !side.exists() {
                continue;
            }
            st.input(&side)?;
            let hyp: Segmentations = read_boundaries(&side)?;
            let report = evaluate(&hyp, &gold, &symbols)?;
            report.write(st.path(&name))?;
            (self.log)(&format!(
                "{name}: boundary P {:.4} R {:.4} F {:.4}",
                report.boundary.precision, report.boundary.recall, report.boundary.f_score
            ));
            summary.reports.insert(name, report);
        }
        let run_f: Vec<f64> = summary
            .reports
            .iter()
            .filter(|(k, _)| k.starts_with("attention-run"))
            .map(|(_, r)| r.boundary.f_score)
            .collect();
        if !run_f.is_empty() {
            summary.mean_run_boundary_f = Some(run_f.iter().sum::<f64>() / run_f.len() as f64);
        }
        summary.averaged_boundary_f = summary.reports.get("attention-averaged").map(|r| r.boundary.f_score);
        write_json(&st.path("summary.json"), &summary)?;
        st.commit()?;
        Ok(summary)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn run_pipeline(cfg: &PipelineConfig, log: impl FnMut(&str)) -> Result<PipelineSummary> {
    Pipeline::new(cfg, log).run()
}

/// Output hashes of every stage manifest under `output_dir`, keyed by path.
pub fn output_hashes(output_dir: &Path) -> Result<BTreeMap<String, String>> {
    let mut all = BTreeMap::new();
    for st in Stage::ALL {
        let m = output_dir.join(st.name()).join(MANIFEST_NAME);
        if m.exists() {
            all.extend(read_manifest(&m)?.outputs);
        }
    }
    Ok(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> PipelineConfig {
        PipelineConfig {
            output_dir: dir.to_path_buf(),
            runs: 2,
            corpus: CorpusConfig {
                synth: Some(SynthConfig {
                    sentences: 24,
                    lexicon_size: 5,
                    ..Default::default()
                }),
                ..Default::default()
            },
            aligner: AlignerConfig {
                hidden_size: 8,
                max_epochs: 2,
                batch_size: 8,
                ..Default::default()
            },
            dpseg: DpsegConfig {
                iterations: 5,
                ..Default::default()
            },
            dev_fraction: 0.25,
            ..Default::default()
        }
    }

    #[test]
    fn overrides_keep_types() {
        let cfg = PipelineConfig::from_toml_with_overrides(
            "runs = 3\n[aligner]\nhidden_size = 16\n",
            &[
                ("aligner.hidden_size".into(), "32".into()),
                ("stages".into(), "corpus,train".into()),
                ("output_dir".into(), "somewhere".into()),
                ("dpseg.model".into(), "unigram".into()),
            ],
        )
        .unwrap();
        assert_eq!((cfg.runs, cfg.aligner.hidden_size), (3, 32));
        assert_eq!(cfg.stages, vec![Stage::Corpus, Stage::Train]);
        assert_eq!(cfg.output_dir, PathBuf::from("somewhere"));
        assert!(PipelineConfig::from_toml_with_overrides("bogus = 1", &[]).is_err());
        assert!(PipelineConfig::from_toml_with_overrides("runs = 0", &[]).is_err());
    }

    #[test]
    fn tiny_pipeline_is_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let sa = run_pipeline(&tiny(a.path()), |_| {}).unwrap();
        let sb = run_pipeline(&tiny(b.path()), |_| {}).unwrap();
        assert_eq!(sa, sb);
        assert!(sa.reports.contains_key("attention-averaged") && sa.reports.contains_key("dpseg"));
        let ha = output_hashes(a.path()).unwrap();
        assert!(ha.contains_key("segment/averaged.txt"));
        assert_eq!(ha, output_hashes(b.path()).unwrap());
        for st in ["corpus", "train", "align", "segment", "baseline", "evaluate"] {
            let m = |d: &Path| fs::read(d.join(st).join(MANIFEST_NAME)).unwrap();
            assert_eq!(m(a.path()), m(b.path()), "{st} manifest");
            assert!(!a.path().join(format!("{st}.partial")).exists());
        }
    }

    #[test]
    fn missing_gold_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.stages = vec![Stage::Evaluate];
        let err = run_pipeline(&cfg, |_| {}).unwrap_err();
        assert!(err.to_string().contains("gold.txt"), "{err}");
    }

    #[test]
    fn failed_stage_leaves_partial() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny(dir.path());
        cfg.stages = vec![Stage::Align];
        cfg.corpus.synth = None;
        assert!(run_pipeline(&cfg, |_| {}).is_err());
        assert!(dir.path().join("align.partial").exists());
        assert!(!dir.path().join("align").exists());
    }
}
