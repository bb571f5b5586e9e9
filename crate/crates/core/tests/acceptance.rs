//! Acceptance suite. Prints one PASS/FAIL/SKIP line per criterion and a
//! summary naming the failed ones. With `--strict` (or
//! `ATTSEG_ACCEPTANCE_STRICT=1`) any hard failure also exits non-zero.
//!
//! Numeric arguments select criteria, e.g. `cargo test --test acceptance -- 1 3 7`.
//! Criteria 4, 5 and 6 train the aligner on the full toy corpus and take tens
//! of minutes on one core.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use attseg::aligner::{read_attention, AlignerConfig, AlignerModel, AttentionMatrix, EncodedPair};
use attseg::aud::{
    decode_units, normalized_mutual_information, train_phone_loop, write_features, AudModel, FeatureSequence,
    GaussianMixture, PhoneLoopConfig, TimedUnitSequence, UnitHmm, FEATURE_DIM,
};
use attseg::corpus::{ParallelUtterance, Segmentation, Segmentations, Vocabulary};
use attseg::metrics::{boundary_prf, token_type_prf, Prf};
use attseg::numerics::ParamId;
use attseg::pipeline::{output_hashes, run_pipeline, PipelineConfig, PipelineSummary, Stage};
use attseg::segmenter::{average_matrices, smooth_matrix};
use attseg::synth::{synth_unit_features, SynthConfig, SynthFeatureConfig};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    /// Soft criterion: result is logged, never fails the suite.
    Logged(bool),
    Skip,
}

struct Outcome {
    status: Status,
    detail: String,
}

impl Outcome {
    fn hard(ok: bool, detail: String) -> Self {
        Self {
            status: if ok { Status::Pass } else { Status::Fail },
            detail,
        }
    }
}

const NAMES: [&str; 9] = [
    "gradient correctness",
    "attention stochasticity",
    "metric oracle equivalence",
    "toy recovery",
    "noise robustness ordering",
    "matrix averaging benefit",
    "AUD correctness",
    "real corpus pipeline",
    "determinism",
];

fn secs(t: Instant) -> f64 {
    t.elapsed().as_secs_f64()
}

// ---------------------------------------------------------------- 1

fn tokens(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

fn central(m: &mut AlignerModel<f64>, pair: &EncodedPair, id: ParamId, k: usize, h: f64) -> f64 {
    let orig = m.params().get(id).data()[k];
    m.params_mut().get_mut(id).data_mut()[k] = orig + h;
    let up = m.pair_loss(pair).unwrap();
    m.params_mut().get_mut(id).data_mut()[k] = orig - h;
    let down = m.pair_loss(pair).unwrap();
    m.params_mut().get_mut(id).data_mut()[k] = orig;
    (up - down) / (2.0 * h)
}

/// Richardson-extrapolated central difference. Steps stay large enough that
/// f64 round-off in the loss does not swamp gradients near 1e-8.
fn richardson(m: &mut AlignerModel<f64>, pair: &EncodedPair, id: ParamId, k: usize) -> f64 {
    let (coarse, fine) = (central(m, pair, id, k, 8e-3), central(m, pair, id, k, 4e-3));
    (4.0 * fine - coarse) / 3.0
}

fn gradient_check() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (words, symbols) = (tokens("w", 4), tokens("s", 3));
    let src = Vocabulary::from_tokens(words.iter().map(String::as_str));
    let tgt = Vocabulary::from_tokens(symbols.iter().map(String::as_str));
    let (mut instances, mut values, mut skipped) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    while instances < 20 {
        let cfg = AlignerConfig {
            hidden_size: rng.random_range(1..=8),
            embedding_size: rng.random_range(1..=4),
            init_scale: 0.5,
            seed: rng.random(),
            ..Default::default()
        };
        let mut m: AlignerModel<f64> = AlignerModel::new(cfg, src.clone(), tgt.clone()).unwrap();
        let a = rng.random_range(1..=5);
        let t = rng.random_range(1..=6);
        let utt = ParallelUtterance::new(
            "g",
            (0..t).map(|_| symbols.choose(&mut rng).unwrap().clone()).collect(),
            (0..a).map(|_| words.choose(&mut rng).unwrap().clone()).collect(),
        )
        .unwrap();
        let pair = m.encode_pair(&utt).unwrap();
        // Central differences straddle the maxout kink when two pieces are
        // nearly tied; such draws are redrawn.
        if m.maxout_margin(&pair).unwrap() < 5e-2 {
            skipped += 1;
            continue;
        }
        let (_, grads) = m.pair_gradients(&pair, None).unwrap();
        let ids: Vec<_> = m.params().ids().collect();
        for id in ids {
            for k in 0..m.params().get(id).len() {
                let numeric = richardson(&mut m, &pair, id, k);
                let analytic = grads.get(id).data()[k];
                let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-8);
                worst = worst.max(rel);
                if rel >= 1e-4 && failures.len() < 3 {
                    failures.push(format!("{}[{k}] {analytic:e} vs {numeric:e}", m.params().name(id)));
                }
                values += 1;
            }
        }
        instances += 1;
    }
    let elapsed = secs(t0);
    Outcome::hard(
        failures.is_empty() && elapsed < 60.0,
        format!(
            "{instances} instances ({skipped} near-tie draws redrawn), {values} gradient entries, \
             max rel err {worst:.2e} (< 1e-4), {elapsed:.1} s (< 60 s){}",
            if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
        ),
    )
}

// ---------------------------------------------------------------- 2

fn max_row_error(m: &AttentionMatrix) -> f64 {
    (0..m.rows())
        .map(|t| (m.row(t).iter().sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max)
}

fn stochasticity(dir: &Path, runs: usize) -> Outcome {
    let all: Vec<Vec<AttentionMatrix>> = (1..=runs)
        .map(|r| read_attention(dir.join(format!("align/run{r}.txt"))).unwrap())
        .collect();
    let (mut extracted, mut smoothed, mut averaged) = (0.0f64, 0.0f64, 0.0f64);
    let mut rows = 0;
    for run in &all {
        for m in run {
            rows += m.rows();
            extracted = extracted.max(max_row_error(m));
            smoothed = smoothed.max(max_row_error(&smooth_matrix(&m.without_eos())));
        }
    }
    for i in 0..all[0].len() {
        let ms: Vec<AttentionMatrix> = all.iter().map(|run| run[i].without_eos()).collect();
        let avg = average_matrices(&ms).unwrap();
        averaged = averaged.max(max_row_error(&avg)).max(max_row_error(&smooth_matrix(&avg)));
    }
    let tol = 1e-6;
    Outcome::hard(
        extracted < tol && smoothed < tol && averaged < tol,
        format!(
            "{rows} rows over {runs} runs; max |sum-1|: extracted {extracted:.1e}, smoothed {smoothed:.1e}, \
             averaged {averaged:.1e} (< 1e-6)"
        ),
    )
}

// ---------------------------------------------------------------- 3

fn random_corpus(rng: &mut ChaCha8Rng) -> (Segmentations, Segmentations, BTreeMap<String, Vec<String>>) {
    let alphabet = ["a", "b", "c"];
    let (mut hyp, mut gold, mut symbols) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for u in 0..rng.random_range(1..=20) {
        let len = rng.random_range(1..=30);
        let id = format!("u{u:02}");
        let draw = |rng: &mut ChaCha8Rng| {
            let p: f64 = rng.random();
            let b: Vec<usize> = (1..len).filter(|_| rng.random::<f64>() < p).collect();
            Segmentation::new(len, b).unwrap()
        };
        hyp.insert(id.clone(), draw(rng));
        gold.insert(id.clone(), draw(rng));
        symbols.insert(id, (0..len).map(|_| alphabet.choose(rng).unwrap().to_string()).collect());
    }
    (hyp, gold, symbols)
}

/// Same formulas the metrics use, so agreement can be exact.
fn naive_prf(m: usize, h: usize, g: usize) -> (f64, f64, f64) {
    let p = if h == 0 { 0.0 } else { m as f64 / h as f64 };
    let r = if g == 0 { 0.0 } else { m as f64 / g as f64 };
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

fn words_of(seg: &Segmentation) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for j in 1..=seg.len() {
        if j == seg.len() || seg.boundaries().contains(&j) {
            out.push((start, j));
            start = j;
        }
    }
    out
}

fn same(prf: &Prf, naive: (usize, usize, usize)) -> bool {
    let (p, r, f) = naive_prf(naive.0, naive.1, naive.2);
    (prf.matched, prf.hypothesized, prf.gold) == naive && prf.precision == p && prf.recall == r && prf.f_score == f
}

fn metric_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut mismatches = Vec::new();
    for c in 0..1000 {
        let (hyp, gold, symbols) = random_corpus(&mut rng);
        // Boundaries: test every internal position of every utterance.
        let (mut bm, mut bh, mut bg) = (0, 0, 0);
        // Tokens: compare every hypothesis span against every gold span.
        let (mut tm, mut th, mut tg) = (0, 0, 0);
        let mut hyp_types: Vec<Vec<String>> = Vec::new();
        let mut gold_types: Vec<Vec<String>> = Vec::new();
        for (id, g) in &gold {
            let h = &hyp[id];
            for j in 1..g.len() {
                let (inh, ing) = (h.boundaries().contains(&j), g.boundaries().contains(&j));
                bm += usize::from(inh && ing);
                bh += usize::from(inh);
                bg += usize::from(ing);
            }
            let (hw, gw) = (words_of(h), words_of(g));
            tm += hw.iter().filter(|s| gw.iter().any(|t| t == *s)).count();
            th += hw.len();
            tg += gw.len();
            let sy = &symbols[id];
            hyp_types.extend(hw.iter().map(|&(a, b)| sy[a..b].to_vec()));
            gold_types.extend(gw.iter().map(|&(a, b)| sy[a..b].to_vec()));
        }
        for v in [&mut hyp_types, &mut gold_types] {
            v.sort();
            v.dedup();
        }
        let shared = hyp_types.iter().filter(|t| gold_types.contains(t)).count();
        let b = boundary_prf(&hyp, &gold).unwrap();
        let lex = token_type_prf(&hyp, &gold, &symbols).unwrap();
        let ok = same(&b, (bm, bh, bg))
            && same(&lex.token, (tm, th, tg))
            && same(&lex.types, (shared, hyp_types.len(), gold_types.len()))
            && lex.type_retrieval == naive_prf(shared, hyp_types.len(), gold_types.len()).1
            && (lex.hypothesis_types, lex.gold_types) == (hyp_types.len(), gold_types.len());
        if !ok && mismatches.len() < 3 {
            mismatches.push(format!("corpus {c}"));
        }
    }
    let elapsed = secs(t0);
    Outcome::hard(
        mismatches.is_empty() && elapsed < 60.0,
        format!(
            "1000 random corpora, boundary/token/type scores exact: {}, {elapsed:.1} s (< 60 s)",
            if mismatches.is_empty() { "yes".to_owned() } else { format!("no ({})", mismatches.join(", ")) }
        ),
    )
}

// ---------------------------------------------------------------- 4, 5, 6

fn toy_config(dir: &Path, runs: usize, substitution: f64, with_dpseg: bool) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        output_dir: dir.to_path_buf(),
        runs,
        skip_dpseg: !with_dpseg,
        ..Default::default()
    };
    cfg.corpus.synth = Some(SynthConfig {
        substitution,
        ..Default::default()
    });
    cfg
}

fn run_logged(cfg: &PipelineConfig, tag: &str) -> (PipelineSummary, f64) {
    let t0 = Instant::now();
    let summary = run_pipeline(cfg, |msg| {
        if !msg.contains("epoch") {
            eprintln!("  [{tag} {:>6.0}s] {msg}", t0.elapsed().as_secs_f64());
        }
    })
    .unwrap();
    (summary, secs(t0))
}

fn f_of(s: &PipelineSummary, system: &str) -> f64 {
    s.reports[system].boundary.f_score
}

fn toy_recovery(clean: &PipelineSummary, elapsed: f64) -> Outcome {
    let (att, prop) = (f_of(clean, "attention-run1"), f_of(clean, "proportional"));
    Outcome::hard(
        att >= 0.80 && att >= prop && prop >= 0.4 && elapsed < 15.0 * 60.0,
        format!(
            "attention F {att:.4} (>= 0.80), proportional F {prop:.4} (<= attention, >= 0.40), \
             end-to-end {elapsed:.0} s (< 900 s)"
        ),
    )
}

fn noise_robustness(clean: &PipelineSummary, noisy: &PipelineSummary) -> Outcome {
    let att_drop = f_of(clean, "attention-run1") - f_of(noisy, "attention-run1");
    let dp_drop = f_of(clean, "dpseg") - f_of(noisy, "dpseg");
    Outcome::hard(
        att_drop < dp_drop,
        format!(
            "15% substitution: attention F {:.4} -> {:.4} (drop {att_drop:.4}), dpseg F {:.4} -> {:.4} \
             (drop {dp_drop:.4})",
            f_of(clean, "attention-run1"),
            f_of(noisy, "attention-run1"),
            f_of(clean, "dpseg"),
            f_of(noisy, "dpseg"),
        ),
    )
}

fn averaging(five: &PipelineSummary) -> Outcome {
    let runs: Vec<String> = (1..=5).map(|r| format!("{:.4}", f_of(five, &format!("attention-run{r}")))).collect();
    let (mean, avg) = (five.mean_run_boundary_f.unwrap(), five.averaged_boundary_f.unwrap());
    Outcome {
        status: Status::Logged(avg >= mean),
        detail: format!("run F [{}], mean {mean:.4}, averaged-matrix F {avg:.4}", runs.join(", ")),
    }
}

// ---------------------------------------------------------------- 7

const DIM: usize = FEATURE_DIM;

fn toy_aud_model(rng: &mut ChaCha8Rng, units: usize, states: usize) -> AudModel {
    let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| -> Vec<Vec<f64>> {
        (0..2).map(|_| (0..DIM).map(|_| rng.random_range(lo..hi)).collect()).collect()
    };
    let mut hmms = Vec::new();
    for _ in 0..units {
        let mut st = Vec::new();
        for _ in 0..states {
            let (mu, var) = (draw(rng, -1.0, 1.0), draw(rng, 0.5, 1.5));
            st.push(GaussianMixture::new(vec![0.3, 0.7], mu, var).unwrap());
        }
        let self_loop = (0..states).map(|_| rng.random_range(0.1..0.9)).collect();
        hmms.push(UnitHmm { states: st, self_loop });
    }
    let raw: Vec<f64> = (0..units).map(|_| rng.random_range(0.1..1.0)).collect();
    let tot: f64 = raw.iter().sum();
    AudModel::new(DIM, hmms, raw.iter().map(|w| w / tot).collect(), 0.5).unwrap()
}

fn log_sum(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Sum over every unit/state path allowed by the loop topology, enumerated
/// as unit label sequences with per-unit durations.
fn brute_force_log_likelihood(model: &AudModel, frames: &[Vec<f64>]) -> f64 {
    let s = model.states_per_unit();
    let n = frames.len();
    let mut scores = Vec::new();
    // Each path is a sequence of (unit, state) per frame.
    let k = model.num_units() * s;
    let total = k.pow(n as u32);
    for code in 0..total {
        let path: Vec<(usize, usize)> = (0..n)
            .map(|t| {
                let q = (code / k.pow(t as u32)) % k;
                (q / s, q % s)
            })
            .collect();
        if path[0].1 != 0 || path[n - 1].1 != s - 1 {
            continue;
        }
        let emit = |t: usize| {
            let (u, j) = path[t];
            model.units[u].states[j].log_density(&frames[t])
        };
        let mut score = model.weights[path[0].0].ln() + emit(0);
        let mut allowed = true;
        for t in 1..n {
            let ((pu, pj), (u, j)) = (path[t - 1], path[t]);
            let a = model.units[pu].self_loop[pj];
            // With one state per unit, staying and re-entering the same unit
            // give the same state sequence; both contribute.
            let mut p = 0.0;
            if (u, j) == (pu, pj) {
                p += a;
            }
            if u == pu && j == pj + 1 {
                p += 1.0 - a;
            }
            if pj == s - 1 && j == 0 {
                p += (1.0 - a) * model.weights[u];
            }
            if p == 0.0 {
                allowed = false;
                break;
            }
            score += p.ln() + emit(t);
        }
        if allowed {
            let (lu, lj) = path[n - 1];
            scores.push(score + (1.0 - model.units[lu].self_loop[lj]).ln());
        }
    }
    log_sum(&scores)
}

fn frame_labels(seq: &TimedUnitSequence, feats: &FeatureSequence) -> Vec<usize> {
    let mut out = vec![0; feats.len()];
    for seg in &seq.segments {
        let a = (seg.start / feats.step).round() as usize;
        let b = ((seg.end / feats.step).round() as usize).min(feats.len());
        out[a..b].fill(seg.label);
    }
    if let Some(last) = seq.segments.last() {
        let a = (last.start / feats.step).round() as usize;
        out[a..].fill(last.label);
    }
    out
}

fn aud_correctness() -> Outcome {
    let t0 = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    let shapes = [(1, 3, 6), (2, 3, 6), (3, 2, 6), (2, 2, 5), (3, 1, 4), (2, 3, 3)];
    for &(units, states, frames) in &shapes {
        let model = toy_aud_model(&mut rng, units, states);
        let x: Vec<Vec<f64>> = (0..frames).map(|_| (0..DIM).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
        let feats = FeatureSequence::new("f", 0.01, 0.025, x.clone()).unwrap();
        let ll = model.log_likelihood(&feats).unwrap();
        worst = worst.max((ll - brute_force_log_likelihood(&model, &x)).abs());
    }
    let forward_ok = worst < 1e-10;

    // Monotonicity: the MAP objective may only drop when pruning removes
    // units under a sparsity prior (gamma < 1), so other steps are checked.
    let (small, _) = synth_unit_features(&SynthFeatureConfig {
        utterances: 12,
        ..Default::default()
    })
    .unwrap();
    let mut worst_drop: f64 = 0.0;
    for gamma in [0.5, 1.0, 2.0] {
        let cfg = PhoneLoopConfig {
            max_units: 8,
            iterations: 25,
            gamma,
            ..Default::default()
        };
        let (_, trace) = train_phone_loop(&small, &cfg).unwrap();
        for i in 1..trace.objective.len() {
            if gamma < 1.0 && trace.active_units[i] != trace.active_units[i - 1] {
                continue;
            }
            worst_drop = worst_drop.max(trace.objective[i - 1] - trace.objective[i]);
        }
    }
    let monotone_ok = worst_drop <= 1e-6;

    let (feats, truth) = synth_unit_features(&SynthFeatureConfig::default()).unwrap();
    let cfg = PhoneLoopConfig {
        max_units: 20,
        iterations: 40,
        ..Default::default()
    };
    let (model, _) = train_phone_loop(&feats, &cfg).unwrap();
    let (mut hyp, mut gold) = (Vec::new(), Vec::new());
    for (f, t) in feats.iter().zip(&truth) {
        hyp.extend(frame_labels(&decode_units(&model, f).unwrap(), f));
        gold.extend(t);
    }
    let nmi = normalized_mutual_information(&hyp, &gold);
    let elapsed = secs(t0);
    Outcome::hard(
        forward_ok && monotone_ok && nmi >= 0.6 && elapsed < 300.0,
        format!(
            "forward vs path sum max |diff| {worst:.1e} (< 1e-10) on {} instances, max objective drop \
             {worst_drop:.1e} (<= 1e-6), 3-unit NMI {nmi:.3} (>= 0.6) with {} units kept, {elapsed:.1} s (< 300 s)",
            shapes.len(),
            model.num_units()
        ),
    )
}

// ---------------------------------------------------------------- 8

const REAL_CONFIG_VAR: &str = "ATTSEG_REAL_CORPUS_CONFIG";

fn real_corpus() -> Outcome {
    let Ok(path) = std::env::var(REAL_CONFIG_VAR) else {
        return Outcome {
            status: Status::Skip,
            detail: format!("set {REAL_CONFIG_VAR} to a pipeline config over the true-phone corpus"),
        };
    };
    let t0 = Instant::now();
    let result = PipelineConfig::load(&path, &[]).and_then(|cfg| run_pipeline(&cfg, |m| eprintln!("  [real] {m}")));
    match result {
        Ok(s) => {
            let parts: Vec<String> = s.reports.iter().map(|(k, r)| format!("{k} {:.4}", r.boundary.f_score)).collect();
            Outcome::hard(
                !s.reports.is_empty(),
                format!("boundary F: {} ({:.0} s)", parts.join(", "), secs(t0)),
            )
        }
        Err(e) => Outcome::hard(false, format!("pipeline failed: {e}")),
    }
}

// ---------------------------------------------------------------- 9

fn tiny_synth(dir: &Path) -> PipelineConfig {
    let mut cfg = toy_config(dir, 2, 0.05, true);
    cfg.corpus.synth = Some(SynthConfig {
        sentences: 40,
        lexicon_size: 6,
        substitution: 0.05,
        ..Default::default()
    });
    cfg.aligner.hidden_size = 8;
    cfg.aligner.max_epochs = 3;
    cfg.aligner.batch_size = 8;
    cfg.dpseg.iterations = 20;
    cfg.dev_fraction = 0.2;
    cfg
}

fn tiny_aud(dir: &Path, inputs: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig {
        output_dir: dir.to_path_buf(),
        runs: 2,
        dev_fraction: 0.25,
        stages: vec![Stage::Aud, Stage::Corpus, Stage::Train, Stage::Align, Stage::Segment, Stage::Baseline],
        ..Default::default()
    };
    cfg.aud.features = Some(inputs.join("features.txt"));
    cfg.aud.phone_loop.max_units = 6;
    cfg.aud.phone_loop.iterations = 5;
    cfg.corpus.wrl = Some(inputs.join("wrl.txt"));
    cfg.aligner.hidden_size = 4;
    cfg.aligner.max_epochs = 2;
    cfg.dpseg.iterations = 10;
    cfg
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let inputs = root.path().join("inputs");
    std::fs::create_dir_all(&inputs).unwrap();
    let (feats, _) = synth_unit_features(&SynthFeatureConfig {
        utterances: 8,
        ..Default::default()
    })
    .unwrap();
    write_features(inputs.join("features.txt"), &feats).unwrap();
    let wrl: String = (0..feats.len()).map(|i| format!("w{} w{}\n", i % 3, i % 5)).collect();
    std::fs::write(inputs.join("wrl.txt"), wrl).unwrap();

    let mut stages = BTreeSet::new();
    let mut files = 0;
    let mut diffs = Vec::new();
    for (name, build) in [
        ("synthetic", &(|d: &Path| tiny_synth(d)) as &dyn Fn(&Path) -> PipelineConfig),
        ("aud", &|d: &Path| tiny_aud(d, &inputs)),
    ] {
        let (a, b) = (root.path().join(format!("{name}-a")), root.path().join(format!("{name}-b")));
        run_pipeline(&build(&a), |_| {}).unwrap();
        run_pipeline(&build(&b), |_| {}).unwrap();
        let (ha, hb) = (output_hashes(&a).unwrap(), output_hashes(&b).unwrap());
        for st in Stage::ALL {
            let m = |d: &Path| std::fs::read(d.join(st.name()).join("manifest.json")).ok();
            if let Some(ma) = m(&a) {
                stages.insert(st.name());
                if Some(ma) != m(&b) {
                    diffs.push(format!("{name}/{} manifest", st.name()));
                }
            }
        }
        files += ha.len();
        if ha != hb {
            diffs.extend(ha.keys().filter(|k| ha.get(*k) != hb.get(*k)).map(|k| format!("{name}/{k}")));
        }
    }
    let all_stages = stages.len() == Stage::ALL.len();
    Outcome::hard(
        diffs.is_empty() && all_stages,
        format!(
            "two reruns each of a synthetic and an AUD toy pipeline: {files} artifacts over stages [{}], {}",
            stages.into_iter().collect::<Vec<_>>().join(", "),
            if diffs.is_empty() { "all byte-identical".to_owned() } else { format!("differing: {}", diffs.join(", ")) }
        ),
    )
}

// ----------------------------------------------------------------

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let strict = args.iter().any(|a| a == "--strict") || std::env::var_os("ATTSEG_ACCEPTANCE_STRICT").is_some();
    let selected: BTreeSet<usize> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let want = |c: usize| selected.is_empty() || selected.contains(&c);
    let mut results: BTreeMap<usize, Outcome> = BTreeMap::new();
    let report = |c: usize, o: Outcome, results: &mut BTreeMap<usize, Outcome>| {
        eprintln!("criterion {c} finished: {}", o.detail);
        results.insert(c, o);
    };

    if want(1) {
        report(1, gradient_check(), &mut results);
    }
    if want(3) {
        report(3, metric_oracle(), &mut results);
    }
    if want(7) {
        report(7, aud_correctness(), &mut results);
    }
    if want(9) {
        report(9, determinism(), &mut results);
    }
    if want(8) {
        report(8, real_corpus(), &mut results);
    }
    if want(4) || want(5) {
        let work = tempfile::tempdir().unwrap();
        let (clean, elapsed) = run_logged(&toy_config(&work.path().join("clean"), 1, 0.0, true), "clean");
        if want(4) {
            report(4, toy_recovery(&clean, elapsed), &mut results);
        }
        if want(5) {
            let (noisy, _) = run_logged(&toy_config(&work.path().join("noisy"), 1, 0.15, true), "noisy");
            report(5, noise_robustness(&clean, &noisy), &mut results);
        }
    }
    if want(2) || want(6) {
        let work = tempfile::tempdir().unwrap();
        let dir = work.path().join("five");
        let (five, _) = run_logged(&toy_config(&dir, 5, 0.0, false), "five");
        if want(2) {
            report(2, stochasticity(&dir, 5), &mut results);
        }
        if want(6) {
            report(6, averaging(&five), &mut results);
        }
    }

    println!();
    let mut failed = Vec::new();
    for (c, o) in &results {
        let tag = match o.status {
            Status::Pass => "PASS",
            Status::Fail => {
                failed.push(c.to_string());
                "FAIL"
            }
            Status::Logged(true) => "PASS (soft)",
            Status::Logged(false) => "FAIL (soft, logged only)",
            Status::Skip => "SKIP",
        };
        println!("criterion {c} {}: {tag}: {}", NAMES[c - 1], o.detail);
    }
    if failed.is_empty() {
        println!("acceptance: all hard criteria passed");
    } else {
        println!("acceptance: failed criteria {}", failed.join(", "));
        if strict {
            std::process::exit(1);
        }
    }
}
