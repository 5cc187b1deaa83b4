use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use ics::encoder::{load_checkpoint, Checkpoint, EncoderParams};

fn run(dir: &Path, args: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ics"))
        .current_dir(dir)
        .env_remove("ICS_SEED")
        .args(args.split_whitespace())
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &str) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "ics {args} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn toy(dir: &Path, samples: &str, seed: &str) {
    ok(
        dir,
        "centers --bits 16 --labels 8 --seed 1 --out centers.txt",
    );
    ok(
        dir,
        &format!("generate --samples {samples} --seed {seed} --out data.txt"),
    );
}

#[test]
fn centers_reports_min_distance() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(
        dir.path(),
        "centers --bits 16 --labels 10 --seed 7 --out c.txt",
    );
    assert!(stdout.contains("min pairwise hamming: 8"), "{stdout}");
    let text = fs::read_to_string(dir.path().join("c.txt")).unwrap();
    assert_eq!(text.lines().count(), 11);
    let manifest = json(&dir.path().join("c.manifest.json"));
    assert_eq!(manifest["command"], "centers");
    assert_eq!(manifest["config"]["bits"], 16);
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["outputs"][0], "c.txt");
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        run(d, "centers --bits 16 --labels 0 --out c.txt")
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(d, "centers --bits 4 --labels 40 --out c.txt")
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(d, "bogus").status.code(), Some(2));

    let missing = run(d, "solve-weights --distances nope.txt --out w.csv");
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.txt"));

    fs::write(d.join("bad.txt"), "1 2\n-1\n").unwrap();
    assert_eq!(
        run(d, "solve-weights --distances bad.txt --out w.csv")
            .status
            .code(),
        Some(3)
    );

    toy(d, "30", "2");
    ok(d, "centers --bits 16 --labels 5 --out c5.txt");
    let mismatch = run(d, "train --data data.txt --centers c5.txt --out-dir r");
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn seed_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = Command::new(env!("CARGO_BIN_EXE_ics"))
        .current_dir(d)
        .env("ICS_SEED", "11")
        .args(["generate", "--samples", "5", "--out", "a.txt"])
        .output()
        .unwrap();
    assert!(out.status.success());
    ok(d, "generate --samples 5 --seed 11 --out b.txt");
    assert_eq!(
        fs::read(d.join("a.txt")).unwrap(),
        fs::read(d.join("b.txt")).unwrap()
    );
    assert_eq!(json(&d.join("a.manifest.json"))["seed"], 11);
}

#[test]
fn zero_epochs_writes_the_seeded_init() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d, "20", "3");
    ok(
        d,
        "train --data data.txt --centers centers.txt --out-dir r --epochs 0 --seed 9",
    );
    let ckpt: Checkpoint<f64> = load_checkpoint(d.join("r/checkpoint.txt")).unwrap();
    assert_eq!(ckpt.params, EncoderParams::init(&[16, 64, 16], 9).unwrap());
    let history = fs::read_to_string(d.join("r/loss_history.csv")).unwrap();
    assert_eq!(history.lines().count(), 1);
}

#[test]
fn equal_mode_weights_are_one_over_c() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d, "60", "4");
    ok(
        d,
        "train --data data.txt --centers centers.txt --out-dir r --epochs 2 --weight-mode equal",
    );
    let csv = fs::read_to_string(d.join("r/weights.csv")).unwrap();
    let mut per_sample = std::collections::BTreeMap::<usize, Vec<f64>>::new();
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        per_sample
            .entry(cells[0].parse().unwrap())
            .or_default()
            .push(cells[2].parse().unwrap());
    }
    assert_eq!(per_sample.len(), 60);
    for w in per_sample.values() {
        assert!(w.iter().all(|&x| x == 1.0 / w.len() as f64), "{w:?}");
    }

    let report = run(
        d,
        "weight-report --weights r/weights.csv --data data.txt --out rep.csv --summary s.json",
    );
    assert!(report.status.success());
    let summary = json(&d.join("s.json"));
    assert!(summary["mean_rho"].is_null());
    assert_eq!(summary["n_scored"], 0);
    assert!(summary["n_excluded"].as_u64().unwrap() > 0);
    assert!(summary["weight_variance"].as_f64().unwrap().abs() < 1e-15);
}

#[test]
fn default_toy_run_reduces_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d, "500", "5");
    let started = Instant::now();
    ok(d, "train --data data.txt --centers centers.txt --out-dir r");
    assert!(started.elapsed() < Duration::from_secs(60));
    let history = fs::read_to_string(d.join("r/loss_history.csv")).unwrap();
    let totals: Vec<f64> = history
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(totals.len(), 90);
    assert!(totals.last().unwrap() < totals.first().unwrap());

    let manifest = json(&d.join("r/manifest.json"));
    for key in [
        "lr",
        "beta",
        "lambda",
        "gamma",
        "weight_mode",
        "gradient_mode",
        "step_rule",
        "eta",
        "tol",
        "hidden",
    ] {
        assert!(!manifest["config"][key].is_null(), "manifest lacks {key}");
    }
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 4);
}

#[test]
fn eval_of_database_against_itself() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d, "80", "6");
    ok(
        d,
        "train --data data.txt --centers centers.txt --out-dir r --epochs 3",
    );
    ok(
        d,
        "eval --checkpoint r/checkpoint.txt --queries data.txt --database data.txt --k 1 --out m.json --dump-codes codes",
    );
    let m = json(&d.join("m.json"));
    assert_eq!(m["map_at_k"], 1.0);
    assert_eq!(m["n_queries"], 80);
    let codes = fs::read_to_string(d.join("codes/query_codes.txt")).unwrap();
    assert!(codes.starts_with("80 16\n"));
    let again = ok(
        d,
        "eval --checkpoint r/checkpoint.txt --queries data.txt --database data.txt --k 1 --out m2.json",
    );
    assert!(again.contains("map@1"));
    assert_eq!(
        fs::read(d.join("m.json")).unwrap(),
        fs::read(d.join("m2.json")).unwrap()
    );

    let missing = run(
        d,
        "eval --checkpoint absent.txt --queries data.txt --database data.txt --out x.json",
    );
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.txt"));
}

#[test]
fn trained_model_beats_random_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d, "600", "7");
    ok(d, "generate --samples 100 --seed 8 --out queries.txt");
    let eval = |ckpt: &str, out: &str| {
        ok(
            d,
            &format!("eval --checkpoint {ckpt} --queries queries.txt --database data.txt --k 100 --out {out}"),
        );
        json(&d.join(out))["map_at_k"].as_f64().unwrap()
    };
    ok(
        d,
        "train --data data.txt --centers centers.txt --out-dir init --epochs 0",
    );
    ok(
        d,
        "train --data data.txt --centers centers.txt --out-dir trained --lr 1e-3 --gradient-mode exact",
    );
    let random = eval("init/checkpoint.txt", "random.json");
    let trained = eval("trained/checkpoint.txt", "trained.json");
    assert!(trained > random, "trained {trained} vs random {random}");
}

#[test]
fn solve_weights_writes_one_row_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("dist.txt"), "1 10 10\n2.5\n\n0 0\n").unwrap();
    ok(
        d,
        "solve-weights --distances dist.txt --out w.csv --gradient-mode exact --lambda 0.001",
    );
    let csv = fs::read_to_string(d.join("w.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "sample,iterations,converged,objective,weights");
    assert_eq!(rows.len(), 4);
    let first: Vec<f64> = rows[1]
        .split(',')
        .nth(4)
        .unwrap()
        .split(' ')
        .map(|t| t.parse().unwrap())
        .collect();
    assert!(first[0] > 0.99, "{first:?}");
    assert!(rows[2].ends_with(",1"));
    let manifest = json(&d.join("w.manifest.json"));
    assert_eq!(manifest["config"]["step_rule"], "spectral");
}

#[test]
fn weight_report_of_true_proportions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    toy(d, "40", "9");
    let data: ics::Dataset64 = ics::data::load_dataset(d.join("data.txt")).unwrap();
    let mut csv = String::from("sample,label,weight\n");
    for (i, s) in data.samples.iter().enumerate() {
        for (l, p) in s
            .positive_labels()
            .iter()
            .zip(s.proportions.as_ref().unwrap())
        {
            csv.push_str(&format!("{i},{l},{p}\n"));
        }
    }
    fs::write(d.join("truth.csv"), csv).unwrap();
    ok(
        d,
        "weight-report --weights truth.csv --data data.txt --out rep.csv --summary s.json",
    );
    assert_eq!(json(&d.join("s.json"))["mean_rho"], 1.0);
    let report = fs::read_to_string(d.join("rep.csv")).unwrap();
    assert_eq!(report.lines().count(), 41);

    fs::write(d.join("short.csv"), "sample,label,weight\n0,0,1\n").unwrap();
    let short = run(
        d,
        "weight-report --weights short.csv --data data.txt --out x.csv --summary x.json",
    );
    assert_eq!(short.status.code(), Some(3));
}
