use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ics::data::{self, Dataset, SyntheticSpec};
use ics::encoder::{self, AdamConfig, Checkpoint, TrainConfig};
use ics::loss::LossConfig;
use ics::retrieval::{self, RetrievalSet};
use ics::weights::{self, DistanceVector, GradientMode, StepRule, WeightSolverConfig};
use ics::{generate_centers, min_pairwise_hamming, HashCenterSet, IcsError, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::manifest::{default_manifest_path, write_json, write_text, ManifestBuilder};
use crate::{CentersArgs, EvalArgs, GenerateArgs, SolveWeightsArgs, TrainArgs, WeightReportArgs};

fn resolve_step_rule(rule: Option<StepRule>, mode: GradientMode) -> StepRule {
    rule.unwrap_or(match mode {
        GradientMode::Paper => StepRule::Fixed,
        GradientMode::Exact => StepRule::Spectral,
    })
}

fn load_data(path: &Path, csv_labels: Option<usize>) -> Result<Dataset<f64>> {
    match csv_labels {
        Some(m) => data::load_dataset_csv(path, m),
        None => data::load_dataset(path),
    }
}

fn to_usize(v: u64, what: &str) -> Result<usize> {
    usize::try_from(v).map_err(|_| IcsError::Argument(format!("{what} is too large")))
}

pub fn centers(a: &CentersArgs, threads: usize) -> Result<()> {
    let k = to_usize(a.bits, "--bits")?;
    let m = to_usize(a.labels, "--labels")?;
    let mut mf = ManifestBuilder::new(
        "centers",
        json!({
            "bits": k,
            "labels": m,
            "seed": a.seed,
            "out": a.out.display().to_string(),
            "threads": threads,
        }),
        Some(a.seed),
    );
    let set = generate_centers(k, m, a.seed)?;
    set.save(&a.out)?;
    mf.output(&a.out);
    match min_pairwise_hamming(&set) {
        Ok(d) => println!("min pairwise hamming: {d}"),
        Err(_) => println!("min pairwise hamming: n/a (single center)"),
    }
    println!("strategy: {}", set.strategy());
    mf.finish(
        &a.manifest
            .clone()
            .unwrap_or_else(|| default_manifest_path(&a.out)),
    )
}

pub fn generate(a: &GenerateArgs, threads: usize) -> Result<()> {
    let spec = SyntheticSpec {
        n_samples: a.samples,
        d_features: a.features,
        m_labels: a.labels,
        labels_per_sample: (a.min_labels, a.max_labels),
        dirichlet_alpha: a.alpha,
        noise_sigma: a.sigma,
        seed: a.seed,
    };
    let mut mf = ManifestBuilder::new(
        "generate",
        json!({
            "samples": spec.n_samples,
            "features": spec.d_features,
            "labels": spec.m_labels,
            "min_labels": spec.labels_per_sample.0,
            "max_labels": spec.labels_per_sample.1,
            "alpha": spec.dirichlet_alpha,
            "sigma": spec.noise_sigma,
            "seed": spec.seed,
            "out": a.out.display().to_string(),
            "threads": threads,
        }),
        Some(a.seed),
    );
    let ds: Dataset<f64> = data::generate_synthetic(&spec)?;
    data::save_dataset(&a.out, &ds)?;
    mf.output(&a.out);
    mf.finish(
        &a.manifest
            .clone()
            .unwrap_or_else(|| default_manifest_path(&a.out)),
    )
}

pub fn train(a: &TrainArgs, threads: usize) -> Result<()> {
    let step_rule = resolve_step_rule(a.step_rule, a.gradient_mode);
    let cfg = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch,
        hidden: a.hidden.clone(),
        adam: AdamConfig {
            lr0: a.lr,
            weight_decay: a.weight_decay,
            ..AdamConfig::default()
        },
        lr_decay_every: a.lr_decay_every,
        lr_decay_factor: a.lr_decay_factor,
        loss: LossConfig {
            beta: a.beta,
            gamma: a.gamma,
            lambda: a.lambda,
            aggregation: a.aggregation,
        },
        solver: WeightSolverConfig {
            eta: a.eta,
            max_iters: a.max_iters,
            tol: a.tol,
            gradient_mode: a.gradient_mode,
            step_rule,
            ..WeightSolverConfig::default()
        },
        weight_mode: a.weight_mode,
        seed: a.seed,
    };
    let solver = cfg.effective_solver();
    let mut mf = ManifestBuilder::new(
        "train",
        json!({
            "data": a.data.display().to_string(),
            "csv_labels": a.csv_labels,
            "centers": a.centers.display().to_string(),
            "out_dir": a.out_dir.display().to_string(),
            "epochs": cfg.epochs,
            "batch": cfg.batch_size,
            "hidden": cfg.hidden,
            "lr": cfg.adam.lr0,
            "lr_decay_every": cfg.lr_decay_every,
            "lr_decay_factor": cfg.lr_decay_factor,
            "adam_beta1": cfg.adam.beta1,
            "adam_beta2": cfg.adam.beta2,
            "adam_eps": cfg.adam.eps,
            "weight_decay": cfg.adam.weight_decay,
            "beta": cfg.loss.beta,
            "lambda": cfg.loss.lambda,
            "gamma": cfg.loss.gamma,
            "aggregation": cfg.loss.aggregation.as_str(),
            "weight_mode": cfg.weight_mode.as_str(),
            "gradient_mode": solver.gradient_mode.as_str(),
            "step_rule": solver.step_rule.as_str(),
            "eta": solver.eta,
            "max_iters": solver.max_iters,
            "tol": solver.tol,
            "weight_floor": solver.weight_floor,
            "seed": cfg.seed,
            "threads": threads,
        }),
        Some(a.seed),
    );

    let ds = load_data(&a.data, a.csv_labels)?;
    let centers = HashCenterSet::load(&a.centers)?;
    if ds.m_labels != centers.m_labels() {
        return Err(IcsError::Config(format!(
            "dataset has {} labels but the centers file has {}",
            ds.m_labels,
            centers.m_labels()
        )));
    }
    let state = encoder::train(&ds, &centers, &cfg)?;
    fs::create_dir_all(&a.out_dir).map_err(|e| IcsError::io(&a.out_dir, e))?;

    let ckpt_path = a.out_dir.join("checkpoint.txt");
    encoder::save_checkpoint(
        &ckpt_path,
        &Checkpoint {
            params: state.params,
            m_labels: ds.m_labels,
            seed: a.seed,
        },
    )?;
    mf.output(&ckpt_path);

    let mut weights_csv = String::from("sample,label,weight\n");
    for (i, (s, w)) in ds.samples.iter().zip(&state.weight_table).enumerate() {
        for (label, wj) in s.positive_labels().into_iter().zip(w.as_slice()) {
            writeln!(weights_csv, "{i},{label},{wj}").unwrap();
        }
    }
    let weights_path = a.out_dir.join("weights.csv");
    write_text(&weights_path, &weights_csv)?;
    mf.output(&weights_path);

    let mut history = String::from("epoch,total,j1,jq,r,mean_solver_iters\n");
    for e in &state.loss_history {
        writeln!(
            history,
            "{},{},{},{},{},{}",
            e.epoch, e.total, e.j1, e.jq, e.r, e.mean_solver_iters
        )
        .unwrap();
    }
    let history_path = a.out_dir.join("loss_history.csv");
    write_text(&history_path, &history)?;
    mf.output(&history_path);

    if let (Some(first), Some(last)) = (state.loss_history.first(), state.loss_history.last()) {
        println!(
            "loss: epoch {} {} -> epoch {} {}",
            first.epoch, first.total, last.epoch, last.total
        );
    }
    mf.finish(&a.out_dir.join("manifest.json"))
}

pub fn eval(a: &EvalArgs, threads: usize) -> Result<()> {
    let k = to_usize(a.k, "--k")?;
    let mut mf = ManifestBuilder::new(
        "eval",
        json!({
            "checkpoint": a.checkpoint.display().to_string(),
            "queries": a.queries.display().to_string(),
            "database": a.database.display().to_string(),
            "csv_labels": a.csv_labels,
            "k": k,
            "out": a.out.display().to_string(),
            "dump_codes": a.dump_codes.as_ref().map(|p| p.display().to_string()),
            "threads": threads,
        }),
        None,
    );
    let ckpt: Checkpoint<f64> = encoder::load_checkpoint(&a.checkpoint)?;
    let queries = load_data(&a.queries, a.csv_labels)?;
    let database = load_data(&a.database, a.csv_labels)?;
    for (name, ds) in [("queries", &queries), ("database", &database)] {
        if ds.d_features != ckpt.params.input_dim() {
            return Err(IcsError::Config(format!(
                "{name} have {} features but the checkpoint expects {}",
                ds.d_features,
                ckpt.params.input_dim()
            )));
        }
        if ds.m_labels != queries.m_labels {
            return Err(IcsError::Config(
                "queries and database label counts differ".into(),
            ));
        }
    }
    let features = |ds: &Dataset<f64>| {
        ds.samples
            .iter()
            .map(|s| s.features.clone())
            .collect::<Vec<_>>()
    };
    let q_codes = encoder::encode_all(&ckpt.params, &features(&queries))?;
    let db_codes = encoder::encode_all(&ckpt.params, &features(&database))?;
    let q_labels = queries.labels();
    let db_labels = database.labels();
    let metrics = retrieval::evaluate(
        &RetrievalSet {
            codes: &q_codes,
            labels: &q_labels,
        },
        &RetrievalSet {
            codes: &db_codes,
            labels: &db_labels,
        },
        k,
    )?;
    write_json(&a.out, &metrics)?;
    mf.output(&a.out);
    println!(
        "map@{k}: {}  precision@{k}: {}",
        metrics.map_at_k, metrics.precision_at_k
    );

    if let Some(dir) = &a.dump_codes {
        fs::create_dir_all(dir).map_err(|e| IcsError::io(dir, e))?;
        let k_bits = ckpt.k_bits();
        for (name, codes) in [
            ("query_codes.txt", &q_codes),
            ("database_codes.txt", &db_codes),
        ] {
            let path = dir.join(name);
            retrieval::save_codes(&path, codes, k_bits)?;
            mf.output(&path);
        }
    }
    mf.finish(
        &a.manifest
            .clone()
            .unwrap_or_else(|| default_manifest_path(&a.out)),
    )
}

fn parse_distances(text: &str) -> Result<Vec<DistanceVector<f64>>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let values = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| IcsError::parse(i + 1, format!("bad number `{t}`")))
                })
                .collect::<Result<Vec<f64>>>()?;
            DistanceVector::new(values).map_err(|e| IcsError::parse(i + 1, e.to_string()))
        })
        .collect()
}

pub fn solve_weights(a: &SolveWeightsArgs, threads: usize) -> Result<()> {
    let cfg = WeightSolverConfig {
        lambda: a.lambda,
        beta: a.beta,
        eta: a.eta,
        max_iters: a.max_iters,
        tol: a.tol,
        gradient_mode: a.gradient_mode,
        step_rule: resolve_step_rule(a.step_rule, a.gradient_mode),
        ..WeightSolverConfig::default()
    };
    let mut mf = ManifestBuilder::new(
        "solve-weights",
        json!({
            "distances": a.distances.display().to_string(),
            "out": a.out.display().to_string(),
            "lambda": cfg.lambda,
            "beta": cfg.beta,
            "eta": cfg.eta,
            "max_iters": cfg.max_iters,
            "tol": cfg.tol,
            "gradient_mode": cfg.gradient_mode.as_str(),
            "step_rule": cfg.step_rule.as_str(),
            "weight_floor": cfg.weight_floor,
            "threads": threads,
        }),
        None,
    );
    cfg.validate()?;
    let text = fs::read_to_string(&a.distances).map_err(|e| IcsError::io(&a.distances, e))?;
    let rows = parse_distances(&text)?;
    let solutions = rows
        .par_iter()
        .map(|d| weights::solve_weights(d, &cfg))
        .collect::<Result<Vec<_>>>()?;

    let mut csv = String::from("sample,iterations,converged,objective,weights\n");
    for (i, sol) in solutions.iter().enumerate() {
        let w: Vec<String> = sol.weights.as_slice().iter().map(f64::to_string).collect();
        let objective = sol.objective_trace.last().copied().unwrap_or(f64::NAN);
        writeln!(
            csv,
            "{i},{},{},{objective},{}",
            sol.iterations,
            sol.converged,
            w.join(" ")
        )
        .unwrap();
    }
    write_text(&a.out, &csv)?;
    mf.output(&a.out);
    mf.finish(
        &a.manifest
            .clone()
            .unwrap_or_else(|| default_manifest_path(&a.out)),
    )
}

/// Parses a `sample,label,weight` CSV into per-sample rows ordered by label.
fn parse_weights_csv(text: &str, dataset: &Dataset<f64>) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "sample,label,weight" => {}
        _ => return Err(IcsError::parse(1, "expected header `sample,label,weight`")),
    }
    let mut by_sample: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let no = i + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let [s, l, w] = cells.as_slice() else {
            return Err(IcsError::parse(no, "expected three columns"));
        };
        let s: usize = s
            .parse()
            .map_err(|_| IcsError::parse(no, format!("bad sample `{s}`")))?;
        let l: usize = l
            .parse()
            .map_err(|_| IcsError::parse(no, format!("bad label `{l}`")))?;
        let w: f64 = w
            .parse()
            .map_err(|_| IcsError::parse(no, format!("bad weight `{w}`")))?;
        by_sample.entry(s).or_default().push((l, w));
    }
    dataset
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut rows = by_sample
                .remove(&i)
                .ok_or_else(|| IcsError::Data(format!("no weights for sample {i}")))?;
            rows.sort_by_key(|&(l, _)| l);
            let labels: Vec<usize> = rows.iter().map(|&(l, _)| l).collect();
            if labels != s.positive_labels() {
                return Err(IcsError::Data(format!(
                    "weights for sample {i} do not cover exactly its positive labels"
                )));
            }
            Ok(rows.into_iter().map(|(_, w)| w).collect())
        })
        .collect::<Result<Vec<_>>>()
        .and_then(|rows| match by_sample.keys().next() {
            Some(extra) => Err(IcsError::Data(format!(
                "weights for unknown sample {extra}"
            ))),
            None => Ok(rows),
        })
}

#[derive(Serialize)]
struct ReportSummary {
    mean_rho: Option<f64>,
    n_scored: usize,
    n_excluded: usize,
    n_single_label: usize,
    weight_variance: f64,
}

pub fn weight_report(a: &WeightReportArgs, threads: usize) -> Result<()> {
    let mut mf = ManifestBuilder::new(
        "weight-report",
        json!({
            "weights": a.weights.display().to_string(),
            "data": a.data.display().to_string(),
            "out": a.out.display().to_string(),
            "summary": a.summary.display().to_string(),
            "threads": threads,
        }),
        None,
    );
    let ds: Dataset<f64> = data::load_dataset(&a.data)?;
    let text = fs::read_to_string(&a.weights).map_err(|e| IcsError::io(&a.weights, e))?;
    let weights = parse_weights_csv(&text, &ds)?;
    let report = data::weight_report(&weights, &ds)?;

    let join = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
    let mut csv = String::from("sample,c,rho,weights,proportions\n");
    for r in &report.rows {
        let rho = r.rho.map(|x| x.to_string()).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{rho},{},{}",
            r.sample,
            r.weights.len(),
            join(&r.weights),
            join(&r.proportions)
        )
        .unwrap();
    }
    write_text(&a.out, &csv)?;
    mf.output(&a.out);
    write_json(
        &a.summary,
        &ReportSummary {
            mean_rho: report.mean_rho,
            n_scored: report.n_scored,
            n_excluded: report.n_excluded,
            n_single_label: report.n_single_label,
            weight_variance: report.weight_variance,
        },
    )?;
    mf.output(&a.summary);
    match report.mean_rho {
        Some(rho) => println!("mean spearman rho: {rho} over {} samples", report.n_scored),
        None => println!(
            "mean spearman rho: undefined ({} excluded)",
            report.n_excluded
        ),
    }
    mf.finish(
        &a.manifest
            .clone()
            .unwrap_or_else(|| default_manifest_path(&a.out)),
    )
}
