use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use grpboost::evaluation::export::{qq_plot, qq_table, roc_plot, roc_table, Mark, Plot, Table};
use grpboost::evaluation::{compare_brier, extremogram, roc_auc, QqTable};
use grpboost::io::{load_saved_dataset, write_json, DateRange, GriddedDataset};
use grpboost::pipeline::{generate_scenarios, predict_day, qq_for_point, SubModelBundle};
use grpboost::spatial::{pairwise_limit_prob, semivariogram, SemivariogramParams};
use grpboost::stats::{derive_seed, quantile_type7};
use grpboost::{Error, Result};
use serde_json::{json, Value};

use crate::{load_bundle, write_text};

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Metric {
    Roc,
    Brier,
    Qq,
    Extremogram,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    bundle: PathBuf,
    /// Processed dataset covering the training and test periods.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    test_range: DateRange,
    /// Days used for the severity quantiles; defaults to every day outside the test range.
    #[arg(long)]
    train_range: Option<DateRange>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "roc,brier,qq,extremogram")]
    metrics: Vec<Metric>,
    /// CSV of grid point pairs `s1,s2` for the Brier comparison.
    #[arg(long)]
    pairs: Option<PathBuf>,
    /// Second bundle scored against the first with a permutation test.
    #[arg(long)]
    compare: Option<PathBuf>,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value = "t2m")]
    response: String,
    /// Scenarios simulated per test exceedance day.
    #[arg(long, default_value_t = 1000)]
    n_sim: usize,
    #[arg(long, default_value_t = 10_000)]
    n_perm: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.5,0.6,0.7")]
    quantiles: Vec<f64>,
    #[arg(long, default_value_t = 0.75)]
    extremogram_q: f64,
    #[arg(long, default_value_t = 200)]
    n_boot: usize,
    #[arg(long)]
    out: PathBuf,
}

/// Pairs from a two-column CSV; a non-numeric first line is a header.
fn read_pairs(path: &Path, d: usize) -> Result<Vec<(usize, usize)>> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed = line.split_once(',').and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
        match parsed {
            Some((a, b)) if a < d && b < d && a != b => pairs.push((a, b)),
            Some(_) => {
                return Err(Error::Data(format!("{} line {}: pair outside the {d}-point grid", path.display(), i + 1)))
            }
            None if i == 0 => continue,
            None => return Err(Error::Data(format!("{} line {}: expected s1,s2", path.display(), i + 1))),
        }
    }
    if pairs.is_empty() {
        return Err(Error::Data(format!("{} lists no pairs", path.display())));
    }
    Ok(pairs)
}

/// Each target-region point with its nearest other grid point.
fn default_pairs(bundle: &SubModelBundle) -> Vec<(usize, usize)> {
    let pts = bundle.grid.points();
    let dist = |a: usize, b: usize| (pts[a].x - pts[b].x).hypot(pts[a].y - pts[b].y);
    bundle
        .thresholds
        .target_region
        .iter()
        .filter_map(|&s1| {
            (0..pts.len()).filter(|&s| s != s1).min_by(|&a, &b| dist(s1, a).total_cmp(&dist(s1, b))).map(|s2| (s1, s2))
        })
        .collect()
}

struct Exceedances {
    days: Vec<usize>,
}

fn exceedance_days(
    bundle: &SubModelBundle,
    ds: &GriddedDataset,
    response: &str,
    days: &[usize],
) -> Result<Exceedances> {
    let risk = bundle.thresholds.risk()?;
    let y = ds.variable(response)?;
    let days = days.iter().copied().filter(|&t| risk.apply(&y[t]) >= bundle.thresholds.u).collect();
    Ok(Exceedances { days })
}

/// Simulated joint and marginal exceedance frequencies for each pair and
/// quantile level on each test exceedance day.
fn simulated_probabilities(
    bundle: &SubModelBundle,
    ds: &GriddedDataset,
    days: &[usize],
    pairs: &[(usize, usize)],
    levels: &[Vec<f64>],
    n_sim: usize,
    seed: u64,
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let cells = pairs.len() * levels.len();
    let (mut joint, mut indep) = (vec![Vec::new(); cells], vec![Vec::new(); cells]);
    for &t in days {
        let inputs = bundle.schema.day_inputs(ds, t)?;
        let sc = generate_scenarios(bundle, &inputs, n_sim, derive_seed(seed, t as u64), None)?;
        let n = sc.fields.len() as f64;
        for (k, &(s1, s2)) in pairs.iter().enumerate() {
            for (j, u) in levels.iter().enumerate() {
                let (mut a, mut b, mut both) = (0usize, 0usize, 0usize);
                for f in &sc.fields {
                    let (e1, e2) = (f[s1] > u[s1], f[s2] > u[s2]);
                    a += usize::from(e1);
                    b += usize::from(e2);
                    both += usize::from(e1 && e2);
                }
                joint[k * levels.len() + j].push(both as f64 / n);
                indep[k * levels.len() + j].push((a as f64 / n) * (b as f64 / n));
            }
        }
    }
    Ok((joint, indep))
}

pub fn run(args: EvaluateArgs) -> Result<()> {
    let bundle = load_bundle(&args.bundle)?;
    let ds = load_saved_dataset(&args.data)?;
    let test_days = ds.days_where(|d| args.test_range.contains(d));
    if test_days.is_empty() {
        return Err(Error::Config(format!(
            "test range {}..{} contains no days of the dataset",
            args.test_range.start, args.test_range.end
        )));
    }
    let train_days = match args.train_range {
        Some(r) => ds.days_where(|d| r.contains(d)),
        None => ds.days_where(|d| !args.test_range.contains(d)),
    };
    let y = ds.variable(&args.response)?;
    let test_exc = exceedance_days(&bundle, &ds, &args.response, &test_days)?;
    std::fs::create_dir_all(&args.out)
        .map_err(|e| Error::Data(format!("cannot create {}: {e}", args.out.display())))?;
    let out = |name: &str| args.out.join(name);

    let mut summary = serde_json::Map::new();
    summary.insert("seed".into(), json!(args.seed));
    summary.insert("test_range".into(), json!(format!("{}..{}", args.test_range.start, args.test_range.end)));
    summary.insert("n_test_days".into(), json!(test_days.len()));
    summary.insert("n_test_exceedances".into(), json!(test_exc.days.len()));

    if args.metrics.contains(&Metric::Roc) {
        let risk = bundle.thresholds.risk()?;
        let mut labels = Vec::with_capacity(test_days.len());
        let mut scores = Vec::with_capacity(test_days.len());
        for &t in &test_days {
            labels.push(risk.apply(&y[t]) >= bundle.thresholds.u);
            scores.push(predict_day(&bundle, &bundle.schema.day_inputs(&ds, t)?)?.p_occ);
        }
        let roc = roc_auc(&labels, &scores)?;
        write_text(&out("roc.csv"), &roc_table(&roc).to_csv()?)?;
        write_text(&out("roc.svg"), &roc_plot(&roc).to_svg())?;
        println!("occurrence AUC: {}", roc.auc);
        summary.insert("roc".into(), json!({ "auc": roc.auc }));
    }

    if args.metrics.contains(&Metric::Brier) {
        summary.insert("brier".into(), brier(&args, &bundle, &ds, &train_days, &test_exc)?);
    }

    if args.metrics.contains(&Metric::Qq) {
        let test = ds.select_days(&test_days);
        let mut table: Option<Table> = None;
        let mut fractions = Vec::new();
        let mut skipped = Vec::new();
        let mut first: Option<QqTable> = None;
        for d in 0..bundle.grid.len() {
            match qq_for_point(
                &bundle,
                &test,
                &args.response,
                d,
                args.n_boot,
                0.95,
                derive_seed(args.seed, 1 << 20 | d as u64),
            ) {
                Ok(qq) => {
                    let t = qq_table(&qq);
                    let tab = table
                        .get_or_insert_with(|| Table::new(["point".to_string()].into_iter().chain(t.headers.clone())));
                    for r in t.rows {
                        tab.rows.push([d.to_string()].into_iter().chain(r).collect());
                    }
                    fractions.push(qq.fraction_inside());
                    first.get_or_insert(qq);
                }
                Err(e) => {
                    log::warn!("skipping QQ at grid point {d}: {e}");
                    skipped.push(d);
                }
            }
        }
        if let Some(t) = table {
            write_text(&out("qq.csv"), &t.to_csv()?)?;
        }
        if let Some(qq) = &first {
            write_text(&out("qq.svg"), &qq_plot(qq).to_svg())?;
        }
        let mean_inside = if fractions.is_empty() {
            Value::Null
        } else {
            json!(fractions.iter().sum::<f64>() / fractions.len() as f64)
        };
        summary.insert(
            "qq".into(),
            json!({ "points_evaluated": fractions.len(), "points_skipped": skipped, "mean_fraction_inside": mean_inside }),
        );
    }

    if args.metrics.contains(&Metric::Extremogram) {
        let fields: Vec<Vec<f64>> = test_exc.days.iter().map(|&t| y[t].clone()).collect();
        let pairs = extremogram(&fields, &bundle.grid, args.extremogram_q)?;
        let extents: Vec<f64> = test_exc
            .days
            .iter()
            .map(|&t| Ok(predict_day(&bundle, &bundle.schema.day_inputs(&ds, t)?)?.theta_extent))
            .collect::<Result<_>>()?;
        let mut table = Table::new(["s1", "s2", "distance", "estimate", "n_conditioning", "model"]);
        let mut model_curve = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let mut total = 0.0;
            for &th in &extents {
                let params = SemivariogramParams::new(bundle.alpha, th, bundle.theta_scale)?;
                total += pairwise_limit_prob(semivariogram(bundle.grid.point(p.s1), bundle.grid.point(p.s2), &params))?;
            }
            let model = total / extents.len() as f64;
            table.push_numbers(&[p.s1 as f64, p.s2 as f64, p.distance, p.estimate, p.n_conditioning as f64, model]);
            model_curve.push((p.distance, model));
        }
        model_curve.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let plot = Plot::new("Extremogram", "distance", "conditional exceedance probability")
            .with("empirical", pairs.iter().map(|p| (p.distance, p.estimate)).collect(), Mark::Points)
            .with("model", model_curve, Mark::Line);
        write_text(&out("extremogram.csv"), &table.to_csv()?)?;
        write_text(&out("extremogram.svg"), &plot.to_svg())?;
        summary.insert("extremogram".into(), json!({ "q": args.extremogram_q, "n_pairs": pairs.len() }));
    }

    write_json(&out("summary.json"), &Value::Object(summary))
}

fn brier(
    args: &EvaluateArgs,
    bundle: &SubModelBundle,
    ds: &GriddedDataset,
    train_days: &[usize],
    test_exc: &Exceedances,
) -> Result<Value> {
    let d = bundle.grid.len();
    let pairs = match &args.pairs {
        Some(p) => read_pairs(p, d)?,
        None => default_pairs(bundle),
    };
    if let Some(q) = args.quantiles.iter().find(|q| !(**q > 0.0 && **q < 1.0)) {
        return Err(Error::Config(format!("quantile levels must lie in (0, 1), got {q}")));
    }
    let train_exc = exceedance_days(bundle, ds, &args.response, train_days)?;
    if train_exc.days.is_empty() || test_exc.days.is_empty() {
        return Err(Error::Data("Brier comparison needs exceedance days in both the training and test periods".into()));
    }
    let y = ds.variable(&args.response)?;
    // Severity thresholds: pointwise quantiles over the training exceedance days.
    let levels: Vec<Vec<f64>> = args
        .quantiles
        .iter()
        .map(|&q| {
            (0..d)
                .map(|s| {
                    let col: Vec<f64> = train_exc.days.iter().map(|&t| y[t][s]).collect();
                    quantile_type7(&col, q)
                })
                .collect()
        })
        .collect();

    let (joint, indep) = simulated_probabilities(bundle, ds, &test_exc.days, &pairs, &levels, args.n_sim, args.seed)?;
    let other = match &args.compare {
        Some(path) => {
            let b2 = load_bundle(path)?;
            Some(simulated_probabilities(&b2, ds, &test_exc.days, &pairs, &levels, args.n_sim, args.seed)?.0)
        }
        None => None,
    };

    let mut headers = vec!["s1", "s2", "q", "spatial", "independent", "p_value"];
    if other.is_some() {
        headers.extend(["compare", "p_value_compare"]);
    }
    let mut table = Table::new(headers);
    let mut rows = Vec::new();
    for (k, &(s1, s2)) in pairs.iter().enumerate() {
        for (j, (&q, u)) in args.quantiles.iter().zip(&levels).enumerate() {
            let c = k * levels.len() + j;
            let observed: Vec<bool> = test_exc.days.iter().map(|&t| y[t][s1] > u[s1] && y[t][s2] > u[s2]).collect();
            let perm_seed = derive_seed(args.seed, (1 << 32) + c as u64);
            let (sp, ind) = compare_brier(&observed, &joint[c], &indep[c], args.n_perm, perm_seed)?;
            let mut nums = vec![s1 as f64, s2 as f64, q, sp.value, ind.value, sp.p_value.unwrap_or(f64::NAN)];
            let mut row = json!({
                "s1": s1, "s2": s2, "q": q,
                "spatial": sp.value, "independent": ind.value, "p_value": sp.p_value,
            });
            if let Some(o) = &other {
                let (a, b) = compare_brier(&observed, &joint[c], &o[c], args.n_perm, perm_seed)?;
                nums.extend([b.value, a.p_value.unwrap_or(f64::NAN)]);
                row["compare"] = json!(b.value);
                row["p_value_compare"] = json!(a.p_value);
            }
            table.push_numbers(&nums);
            rows.push(row);
        }
    }
    write_text(&args.out.join("brier.csv"), &table.to_csv()?)?;
    Ok(json!({ "n_simulations": args.n_sim, "n_permutations": args.n_perm, "cells": rows }))
}
