use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "master_seed = 7\nrepeats = 2\n\n\
[data.synth]\ndim = 6\ntrain = 30\ndev = 6\ntest = 6\n\n\
[fsi]\nk = 3\nn_aug = [5, 10]\n\n\
[classifier]\nepochs = 5\n\n\
[generators.cvae]\nepochs = 1\nmax_rows_per_class = 8\n\n\
[generators.delta]\nepochs = 1\nmax_rows_per_class = 8\n";

fn feataug(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_feataug"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn feataug")
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn fsi_writes_baseline_and_every_method() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("exp.toml"), SMALL).unwrap();
    ok(feataug(&["fsi", "--config", "exp.toml", "--out", "run"], tmp.path()));
    let run = tmp.path().join("run");
    let csv = fs::read_to_string(run.join("results.csv")).unwrap();
    // header + 2 baseline runs + 2 runs for each of 7 methods at 2 sizes
    assert_eq!(csv.lines().count(), 1 + 2 + 2 * 7 * 2);
    let md = fs::read_to_string(run.join("results.md")).unwrap();
    for name in ["No Augmentation", "Upsample", "Perturb", "CVAE", "Linear", "Extra", "DeltaR", "DeltaS"] {
        assert!(md.contains(&format!("| {name} |")), "{name} missing from\n{md}");
    }
    let lock = fs::read_to_string(run.join("run.lock")).unwrap();
    assert!(lock.contains("master_seed = 7"));

    // `report` re-renders the same table from the CSV.
    let printed = ok(feataug(&["report", "--results", "run/results.csv"], tmp.path()));
    let table = md.lines().skip_while(|l| !l.starts_with('|')).collect::<Vec<_>>().join("\n");
    assert!(printed.contains(&table), "report output:\n{printed}");
}

#[test]
fn flags_override_the_config_and_replay_matches() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("exp.toml"), SMALL).unwrap();
    let args = ["fsi", "--config", "exp.toml", "--methods", "upsample,linear", "--n-aug", "4", "--seed", "11"];
    ok(feataug(&[&args[..], &["--out", "a"]].concat(), tmp.path()));
    ok(feataug(&["fsi", "--config", "a/run.lock", "--out", "b"], tmp.path()));
    let a = fs::read(tmp.path().join("a/results.csv")).unwrap();
    let b = fs::read(tmp.path().join("b/results.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().count(), 1 + 2 + 2 * 2);
    assert!(text.contains(",upsample,4,"));
}

#[test]
fn missing_manifest_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("exp.toml"), "[data]\nmanifest = \"nowhere/manifest.toml\"\n").unwrap();
    let out = feataug(&["fsi", "--config", "exp.toml", "--out", "x"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("data.manifest"), "{err}");
    assert!(!tmp.path().join("x/results.csv").exists());
}

#[test]
fn unknown_config_key_is_rejected_with_its_path() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("exp.toml"), "[fsi]\nk = 3\nnaug = [5]\n").unwrap();
    let out = feataug(&["fsi", "--config", "exp.toml"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("fsi"), "{err}");
}

#[test]
fn synth_augment_train_evaluate_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let manifest = ok(feataug(
        &["synth", "--dim", "4", "--train", "20", "--dev", "5", "--test", "5", "--seed", "3", "--out", "data"],
        dir,
    ));
    let manifest = manifest.lines().last().unwrap().trim().to_string();
    assert!(Path::new(&manifest).exists(), "{manifest}");

    let train = fs::read_dir(dir.join("data"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.file_name().unwrap().to_string_lossy().contains("train"))
        .expect("train split written");
    let label = fs::read_to_string(&train).unwrap().lines().nth(1).unwrap().split_whitespace().nth(1).unwrap().to_string();
    ok(feataug(
        &[
            "augment", "--method", "extra", "--n", "9", "--label", &label, "--input",
            train.to_str().unwrap(), "--output", "gen.emb", "--seed", "5",
        ],
        dir,
    ));
    let generated = fs::read_to_string(dir.join("gen.emb")).unwrap();
    assert!(generated.starts_with("embv1 4 9\n"), "{generated}");

    ok(feataug(&["train-classifier", "--manifest", &manifest, "--out", "clf"], dir));
    let ckpt = dir.join("clf/classifier.ckpt");
    assert!(ckpt.exists());
    let printed = ok(feataug(
        &["evaluate", "--manifest", &manifest, "--model", ckpt.to_str().unwrap(), "--out", "eval"],
        dir,
    ));
    let acc: f64 = printed.trim().rsplit(' ').next().unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    let confusion = fs::read_to_string(dir.join("eval/confusion.csv")).unwrap();
    let mut lines = confusion.lines();
    assert_eq!(lines.next(), Some("true,predicted,count"));
    let total: u64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap()).sum();
    assert_eq!(total, 5 * 7);
}
