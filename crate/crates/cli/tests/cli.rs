use std::fs;
use std::path::Path;
use std::process::Command;

fn attseg(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_attseg")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = attseg(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn synth_baseline_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out-dir", &p(d, "c"), "--set", "sentences=30", "--set", "seed=4"]);
    let (ul, wrl, gold) = (p(d, "c/ul.txt"), p(d, "c/wrl.txt"), p(d, "c/gold.txt"));
    assert_eq!(fs::read_to_string(&ul).unwrap().lines().count(), 30);

    let report = ok(&["evaluate", "--ul", &ul, "--gold", &gold, "--hyp", &gold, "--out", &p(d, "self")]);
    assert!(report.contains("boundary_f=1.000000"), "{report}");

    ok(&["baseline-proportional", "--ul", &ul, "--wrl", &wrl, "--out", &p(d, "prop.txt")]);
    assert!(d.join("prop.txt.boundaries").exists());
    ok(&["evaluate", "--ul", &ul, "--gold", &gold, "--hyp", &p(d, "prop.txt"), "--out", &p(d, "prop")]);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("prop.json")).unwrap()).unwrap();
    assert!(json["boundary"]["f_score"].as_f64().unwrap() > 0.0);

    ok(&["baseline-dpseg", "--ul", &ul, "--out", &p(d, "dp.txt"), "--set", "iterations=5"]);
    assert_eq!(fs::read_to_string(d.join("dp.txt")).unwrap().lines().count(), 30);
}

#[test]
fn aligner_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["synth", "--out-dir", &p(d, "c"), "--set", "sentences=12", "--set", "lexicon_size=4"]);
    let (ul, wrl) = (p(d, "c/ul.txt"), p(d, "c/wrl.txt"));
    let model = p(d, "m.ckpt");
    ok(&[
        "train-aligner", "--ul", &ul, "--wrl", &wrl, "--out", &model, "--dev-fraction", "0.25",
        "--set", "hidden_size=4", "--set", "max_epochs=2",
    ]);
    ok(&["force-align", "--ul", &ul, "--wrl", &wrl, "--model", &model, "--out", &p(d, "att.txt")]);
    ok(&[
        "segment", "--ul", &ul, "--wrl", &wrl, "--attention", &p(d, "att.txt"), "--attention", &p(d, "att.txt"),
        "--out", &p(d, "seg.txt"), "--smooth",
    ]);
    assert_eq!(fs::read_to_string(d.join("seg.txt")).unwrap().lines().count(), 12);
    ok(&[
        "plot", "--ul", &ul, "--wrl", &wrl, "--attention", &p(d, "att.txt"), "--id", "utt00001",
        "--out", &p(d, "heat"), "--png",
    ]);
    assert!(fs::read_to_string(d.join("heat.pgm")).unwrap().starts_with("P2\n"));
    assert!(d.join("heat.png").exists());
}

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let bad_key = attseg(&["synth", "--out-dir", &p(d, "x"), "--set", "no_such_key=1"]);
    assert_eq!(bad_key.status.code(), Some(2));
    let bad_range = attseg(&["synth", "--out-dir", &p(d, "x"), "--set", "word_length=[5, 2]"]);
    assert_eq!(bad_range.status.code(), Some(2));
    let missing = attseg(&["baseline-proportional", "--ul", &p(d, "nope"), "--wrl", &p(d, "nope"), "--out", &p(d, "o")]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope"));
}

#[test]
fn pipeline_command_runs_a_tiny_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = "runs = 2\ndev_fraction = 0.25\n\n[corpus.synth]\nsentences = 16\nlexicon_size = 4\n\n\
               [aligner]\nhidden_size = 4\nmax_epochs = 1\n\n[dpseg]\niterations = 3\n";
    fs::write(d.join("p.toml"), cfg).unwrap();
    let out = ok(&["pipeline", "--config", &p(d, "p.toml"), "--output-dir", &p(d, "out")]);
    assert!(out.contains("attention-averaged") && out.contains("dpseg"), "{out}");
    assert!(d.join("out/evaluate/manifest.json").exists());
    let only = attseg(&["pipeline", "--config", &p(d, "p.toml"), "--output-dir", &p(d, "out2"), "--stages", "evaluate"]);
    assert_eq!(only.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&only.stderr).contains("gold.txt"));
}
