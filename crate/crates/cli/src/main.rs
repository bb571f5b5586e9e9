use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use attseg::aligner::{read_attention, train_with_progress, write_attention, AlignerConfig, AlignerModel};
use attseg::aud::{
    decode_units, extract_mfcc, load_aud_model, read_features, read_wav, save_aud_model, train_phone_loop,
    write_features, write_timed_units, MfccConfig, PhoneLoopConfig,
};
use attseg::baselines::{dpseg_segment, proportional_corpus, DpsegConfig};
use attseg::corpus::{
    attach_gold, gold_lines, load_gold_segmentation, load_parallel_corpus, parse_parallel, split_train_dev,
    write_corpus, write_lines, ParallelCorpus,
};
use attseg::metrics::evaluate;
use attseg::pipeline::{config_from_toml, run_pipeline, PipelineConfig};
use attseg::plot::plot_attention;
use attseg::segmenter::{segment_corpus, write_segmentation, SegmentOptions};
use attseg::synth::{synth_corpus, SynthConfig};
use attseg::{Error, Result};

#[derive(Parser)]
#[command(name = "attseg", version, about = "Word discovery from unsegmented symbols paired with translations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// TOML config for the command's settings, plus `key=value` overrides.
#[derive(Args, Clone, Default)]
struct Settings {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set hidden_size=32`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct CorpusArgs {
    /// UL symbols, one utterance per line, space-separated.
    #[arg(long)]
    ul: PathBuf,
    /// WRL translations, one per line.
    #[arg(long)]
    wrl: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic parallel corpus with gold segmentation.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Extract MFCC + delta features from a `<id> <wav>` list.
    Mfcc {
        #[arg(long)]
        wav_list: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Train the phone-loop unit discovery model.
    AudTrain {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Decode features into time-marked units.
    AudDecode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the WRL-to-UL attention model.
    TrainAligner {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        dev_fraction: f64,
        #[arg(long, default_value_t = 1)]
        split_seed: u64,
        #[command(flatten)]
        settings: Settings,
    },
    /// Teacher-forced attention extraction for every utterance.
    ForceAlign {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Leave out the end-of-sequence row.
        #[arg(long)]
        no_eos: bool,
    },
    /// Turn one or more attention files into a segmentation (several are averaged).
    Segment {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long, required = true)]
        attention: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Neighbor smoothing along the word axis before the argmax.
        #[arg(long)]
        smooth: bool,
    },
    /// Diagonal projection of WRL word breaks.
    BaselineProportional {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monolingual Dirichlet-process segmentation of the UL side.
    BaselineDpseg {
        #[arg(long)]
        ul: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        settings: Settings,
    },
    /// Score a segmentation against gold.
    Evaluate {
        #[arg(long)]
        ul: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        /// Segmented text in the gold format.
        #[arg(long)]
        hyp: PathBuf,
        /// Report stem: writes `<out>.txt` and `<out>.json`.
        #[arg(long)]
        out: PathBuf,
        /// Symbol separator inside words (default: none for single-character symbols, `.` otherwise).
        #[arg(long)]
        delimiter: Option<String>,
    },
    /// Heatmap of one utterance's attention matrix.
    Plot {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[arg(long)]
        attention: PathBuf,
        #[arg(long)]
        id: String,
        /// Output stem: writes `.pgm`, `.txt` and with `--png` also `.png`.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        cell: usize,
        #[arg(long)]
        png: bool,
    },
    /// Run configured stages end to end.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        sets: Vec<String>,
        /// Comma-separated stage list, overriding `stages`.
        #[arg(long)]
        stages: Option<String>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn parse_sets(sets: &[String]) -> Result<Vec<(String, String)>> {
    sets.iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .ok_or_else(|| Error::Config(format!("override `{s}` is not KEY=VALUE")))
        })
        .collect()
}

fn load_settings<T: DeserializeOwned>(s: &Settings) -> Result<T> {
    let text = match &s.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    config_from_toml(&text, &parse_sets(&s.sets)?)
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn load(c: &CorpusArgs) -> Result<ParallelCorpus> {
    load_parallel_corpus(&c.ul, &c.wrl)
}

fn write_json<T: serde::Serialize>(path: &Path, v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v).map_err(|e| Error::Data(e.to_string()))? + "\n";
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out_dir, settings } => {
            let cfg: SynthConfig = load_settings(&settings)?;
            let corpus = synth_corpus(&cfg)?;
            fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;
            write_corpus(&corpus, out_dir.join("ul.txt"), out_dir.join("wrl.txt"))?;
            write_lines(&out_dir.join("gold.txt"), &gold_lines(&corpus)?)?;
            eprintln!("wrote {} utterances to {}", corpus.len(), out_dir.display());
        }
        Command::Mfcc { wav_list, out, settings } => {
            let cfg: MfccConfig = load_settings(&settings)?;
            let base = wav_list.parent().unwrap_or(Path::new("")).to_path_buf();
            let mut feats = Vec::new();
            for (n, line) in read_lines(&wav_list)?.iter().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let mut f = line.split_ascii_whitespace();
                let (Some(id), Some(wav)) = (f.next(), f.next()) else {
                    return Err(Error::Data(format!("{}: line {}: expected `<id> <wav>`", wav_list.display(), n + 1)));
                };
                let (samples, rate) = read_wav(base.join(wav))?;
                feats.push(extract_mfcc(id, &samples, rate, &cfg)?);
            }
            write_features(&out, &feats)?;
        }
        Command::AudTrain { features, out, settings } => {
            let cfg: PhoneLoopConfig = load_settings(&settings)?;
            let feats = read_features(&features)?;
            let (model, trace) = train_phone_loop(&feats, &cfg)?;
            save_aud_model(&out, &model)?;
            write_json(&out.with_extension("trace.json"), &trace)?;
            eprintln!("{} units retained", model.num_units());
        }
        Command::AudDecode { model, features, out } => {
            let model = load_aud_model(&model)?;
            let units = read_features(&features)?
                .iter()
                .map(|f| decode_units(&model, f))
                .collect::<Result<Vec<_>>>()?;
            write_timed_units(&out, &units)?;
        }
        Command::TrainAligner {
            corpus,
            out,
            dev_fraction,
            split_seed,
            settings,
        } => {
            let cfg: AlignerConfig = load_settings(&settings)?;
            let corpus = load(&corpus)?;
            let (train, dev) = split_train_dev(&corpus, dev_fraction, split_seed)?;
            let (model, log) = train_with_progress(&train, &dev, &cfg, |r| {
                eprintln!(
                    "epoch {}: train loss {:.4}, dev ppl {:.4}{}",
                    r.epoch,
                    r.train_loss,
                    r.dev_perplexity,
                    if r.improved { " *" } else { "" }
                )
            })?;
            model.save(&out)?;
            write_json(&out.with_extension("log.json"), &log)?;
        }
        Command::ForceAlign {
            corpus,
            model,
            out,
            no_eos,
        } => {
            let corpus = load(&corpus)?;
            let model = AlignerModel::load(&model)?;
            let ms = corpus
                .utterances
                .iter()
                .map(|u| model.forced_decode(u, !no_eos))
                .collect::<Result<Vec<_>>>()?;
            write_attention(&out, &ms)?;
        }
        Command::Segment {
            corpus,
            attention,
            out,
            smooth,
        } => {
            let corpus = load(&corpus)?;
            let runs = attention.iter().map(read_attention).collect::<Result<Vec<_>>>()?;
            let segs = segment_corpus(&corpus, &runs, SegmentOptions { smooth })?;
            write_segmentation(&out, &corpus, &segs)?;
        }
        Command::BaselineProportional { corpus, out } => {
            let corpus = load(&corpus)?;
            write_segmentation(&out, &corpus, &proportional_corpus(&corpus))?;
        }
        Command::BaselineDpseg { ul, out, settings } => {
            let cfg: DpsegConfig = load_settings(&settings)?;
            let ul_lines = read_lines(&ul)?;
            // the sampler ignores translations; a placeholder keeps the corpus type
            let corpus = parse_parallel(&ul_lines, &vec!["-".to_string(); ul_lines.len()])?;
            write_segmentation(&out, &corpus, &dpseg_segment(&corpus, &cfg)?)?;
        }
        Command::Evaluate {
            ul,
            gold,
            hyp,
            out,
            delimiter,
        } => {
            let ul_lines = read_lines(&ul)?;
            let corpus = parse_parallel(&ul_lines, &vec!["-".to_string(); ul_lines.len()])?;
            let gold_corpus = load_gold_segmentation(corpus.clone(), &gold, delimiter.as_deref())?;
            let hyp_corpus = attach_gold(corpus, &read_lines(&hyp)?, delimiter.as_deref())?;
            let report = evaluate(&hyp_corpus.gold()?, &gold_corpus.gold()?, &gold_corpus.symbols_map())?;
            report.write(&out)?;
            print!("{}", report.to_key_values());
        }
        Command::Plot {
            corpus,
            attention,
            id,
            out,
            cell,
            png,
        } => {
            let corpus = load(&corpus)?;
            let utt = corpus
                .get(&id)
                .ok_or_else(|| Error::Data(format!("no utterance {id} in corpus")))?;
            let m = read_attention(&attention)?
                .into_iter()
                .find(|m| m.id == id)
                .ok_or_else(|| Error::Data(format!("no attention matrix for {id} in {}", attention.display())))?;
            plot_attention(&m, utt, &out, cell, png)?;
        }
        Command::Pipeline {
            config,
            sets,
            stages,
            output_dir,
        } => {
            let mut overrides = parse_sets(&sets)?;
            if let Some(s) = stages {
                overrides.push(("stages".into(), s));
            }
            let mut cfg = PipelineConfig::load(&config, &overrides)?;
            if let Some(o) = output_dir {
                cfg.output_dir = o;
            }
            let summary = run_pipeline(&cfg, |m| eprintln!("{m}"))?;
            for (name, r) in &summary.reports {
                println!(
                    "{name}\tP={:.4}\tR={:.4}\tF={:.4}",
                    r.boundary.precision, r.boundary.recall, r.boundary.f_score
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("attseg: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
