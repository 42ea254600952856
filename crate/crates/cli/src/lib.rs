//! Command-line front end: argument parsing, artifact layout and error
//! reporting. The `grpboost` binary is a thin wrapper around [`run_args`].

mod evaluate;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use grpboost::boosting::TreeEnsemble;
use grpboost::evaluation::export::{cv_plot, cv_table, study_plot, study_table, Table};
use grpboost::evaluation::{region_shap_summary, simulation_study, tree_shap, ShapAttribution};
use grpboost::io::{
    load_saved_dataset, replay, save_dataset, write_atomic, write_json, DateRange, GriddedDataset, RunConfig,
};
use grpboost::pipeline::{
    assemble_predictors, fit_all, generate_scenarios, predict_day, select_thresholds, SubModelBundle,
};
use grpboost::synth::{synthetic_dataset, SynthDataConfig};
use grpboost::{Error, ErrorClass, Result};
use serde_json::json;

#[derive(Parser)]
#[command(name = "grpboost", version, about = "Boosted generalized r-Pareto models for compound spatial extremes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Submodel {
    Occ,
    Int,
    Dep,
}

#[derive(Subcommand)]
pub enum Command {
    /// Write a synthetic raw dataset (t2m, z500, sm) in the saved-dataset layout.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        nx: usize,
        #[arg(long, default_value_t = 5)]
        ny: usize,
        #[arg(long, default_value_t = 1990)]
        start_year: i32,
        #[arg(long, default_value_t = 30)]
        years: usize,
    },
    /// Apply the configured preprocessing to the raw dataset.
    Preprocess {
        #[arg(long)]
        config: PathBuf,
    },
    /// Select the risk and marginal thresholds on the training days.
    Thresholds {
        #[arg(long)]
        config: PathBuf,
    },
    /// Fit the occurrence, intensity and dependence sub-models.
    Fit {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sub-model outputs for one day.
    Predict {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        day: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate r-exceedance scenarios for one day.
    Simulate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        day: String,
        #[arg(short = 'n', long = "n")]
        n: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        override_extent: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verification metrics on a test period.
    Evaluate(evaluate::EvaluateArgs),
    /// SHAP attributions of one sub-model.
    Explain {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        submodel: Submodel,
        /// Summarize only the days with the top 10% of predictions.
        #[arg(long)]
        top_decile: bool,
        /// Days to explain; defaults to the whole dataset.
        #[arg(long)]
        range: Option<DateRange>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dependence-recovery simulation study.
    Synthstudy {
        #[arg(long)]
        config: PathBuf,
    },
}

fn class_name(class: ErrorClass) -> &'static str {
    match class {
        ErrorClass::Config => "config",
        ErrorClass::Data => "data",
        ErrorClass::Numeric => "numeric",
    }
}

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Config => 2,
        ErrorClass::Data => 3,
        ErrorClass::Numeric => 4,
    }
}

pub fn report_error(class: ErrorClass, message: &str) -> ExitCode {
    eprintln!("{}", json!({ "error": { "class": class_name(class), "message": message } }));
    ExitCode::from(exit_code(class))
}

/// Parse `args` (program name first) and run the command. Usage errors are
/// configuration errors.
pub fn run_args<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::Config(e.to_string().trim().to_string()))?;
    run(cli.command)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Data(format!("cannot create {}: {e}", dir.display())))
}

pub(crate) fn load_bundle(path: &Path) -> Result<SubModelBundle> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    SubModelBundle::from_json(&text)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

fn day_index(ds: &GriddedDataset, day: &str) -> Result<usize> {
    let date = day.parse().map_err(|_| Error::Config(format!("bad --day {day:?}, expected YYYY-MM-DD")))?;
    ds.day_index(date)
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::SynthData { out, seed, nx, ny, start_year, years } => {
            let cfg = SynthDataConfig { nx, ny, start_year, n_years: years, ..SynthDataConfig::default() };
            let ds = synthetic_dataset(&cfg, seed)?;
            save_dataset(&ds, &out)?;
            log::info!("wrote {} days on {} points to {}", ds.n_days(), ds.grid.len(), out.display());
            Ok(())
        }
        Command::Preprocess { config } => {
            let run = RunConfig::load(&config)?;
            let raw = load_saved_dataset(&run.raw_dir)?;
            let processed = replay(&raw, &run.preprocess)?;
            save_dataset(&processed, &run.processed_dir)?;
            log::info!("kept {} of {} days", processed.n_days(), raw.n_days());
            Ok(())
        }
        Command::Thresholds { config } => {
            let run = RunConfig::load(&config)?;
            let ds = load_saved_dataset(&run.processed_dir)?;
            let train = ds.select_days(&run.train_days(&ds)?);
            let spec =
                select_thresholds(train.variable(&run.fit.response)?, &run.fit.target_region, &run.fit.thresholds)?;
            create_dir(&run.output_dir)?;
            write_json(&run.output_dir.join("thresholds.json"), &spec)?;
            println!("exceedance days: {}", spec.exceedance_days.len());
            println!("u: {}", spec.u);
            println!("q_prime: {}", spec.q_prime);
            Ok(())
        }
        Command::Fit { config } => {
            let run = RunConfig::load(&config)?;
            let ds = load_saved_dataset(&run.processed_dir)?;
            let train = ds.select_days(&run.train_days(&ds)?);
            let (bundle, report) = fit_all(&train, &run.fit)?;
            create_dir(&run.output_dir)?;
            write_text(&run.output_dir.join("bundle.json"), &bundle.to_json()?)?;
            for (stage, cv) in [("occ", &report.occurrence), ("int", &report.intensity), ("dep", &report.dependence)] {
                write_text(&run.output_dir.join(format!("cv_{stage}.csv")), &cv_table(cv).to_csv()?)?;
                let svg = cv_plot(cv, &format!("Cross-validation, {stage} sub-model")).to_svg();
                write_text(&run.output_dir.join(format!("cv_{stage}.svg")), &svg)?;
                println!("{stage}: {} trees selected", cv.selected);
            }
            Ok(())
        }
        Command::Predict { bundle, data, day, out } => {
            let bundle = load_bundle(&bundle)?;
            let ds = load_saved_dataset(&data)?;
            let t = day_index(&ds, &day)?;
            let pred = predict_day(&bundle, &bundle.schema.day_inputs(&ds, t)?)?;
            let value = json!({
                "date": ds.dates[t].to_string(),
                "p_occ": pred.p_occ,
                "theta_extent": pred.theta_extent,
                "theta_int": pred.theta_int,
            });
            let text = serde_json::to_string_pretty(&value).map_err(Error::from)? + "\n";
            match out {
                Some(path) => write_text(&path, &text),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Simulate { bundle, data, day, n, seed, override_extent, out } => {
            let bundle = load_bundle(&bundle)?;
            let ds = load_saved_dataset(&data)?;
            let t = day_index(&ds, &day)?;
            let inputs = bundle.schema.day_inputs(&ds, t)?;
            let d = bundle.grid.len();
            let mut table =
                Table::new(["scenario".to_string(), "risk".into()].into_iter().chain((0..d).map(|i| format!("y_{i}"))));
            if n > 0 {
                let sc = generate_scenarios(&bundle, &inputs, n, seed, override_extent)?;
                for (k, (field, r)) in sc.fields.iter().zip(&sc.risk).enumerate() {
                    let mut row = vec![k as f64, *r];
                    row.extend(field);
                    table.push_numbers(&row);
                }
                log::info!("p_occ {} theta_extent {} proposals {}", sc.p_occ, sc.theta_extent, sc.proposals);
            }
            write_text(&out, &table.to_csv()?)
        }
        Command::Evaluate(args) => evaluate::run(args),
        Command::Explain { bundle, data, submodel, top_decile, range, out } => {
            let bundle = load_bundle(&bundle)?;
            let ds = load_saved_dataset(&data)?;
            explain(&bundle, &ds, submodel, top_decile, range, &out)
        }
        Command::Synthstudy { config } => {
            let run = RunConfig::load(&config)?;
            let report = simulation_study(&run.study, run.study_seed)?;
            create_dir(&run.output_dir)?;
            write_text(&run.output_dir.join("study.csv"), &study_table(&report).to_csv()?)?;
            write_text(&run.output_dir.join("study.svg"), &study_plot(&report).to_svg())?;
            let summary = json!({
                "seed": run.study_seed,
                "coverage_early": report.coverage_early,
                "coverage_late": report.coverage_late,
                "median_abs_bias_early": report.median_abs_bias_early,
                "median_abs_bias_late": report.median_abs_bias_late,
                "late_sd_by_truth_quartile": report.late_sd_by_truth_quartile,
                "initial_estimates": report.initial_estimates,
            });
            write_json(&run.output_dir.join("study_summary.json"), &summary)?;
            println!("late-iteration coverage: {}", report.coverage_late);
            Ok(())
        }
    }
}

fn explain(
    bundle: &SubModelBundle,
    ds: &GriddedDataset,
    submodel: Submodel,
    top_decile: bool,
    range: Option<DateRange>,
    out: &Path,
) -> Result<()> {
    let days = match range {
        Some(r) => ds.days_where(|d| r.contains(d)),
        None => (0..ds.n_days()).collect(),
    };
    if days.is_empty() {
        return Err(Error::Config("no days to explain in the requested range".into()));
    }
    let schema = &bundle.schema;
    let preds = assemble_predictors(ds, schema, &days)?;
    let preds = &preds;
    // Each explained row carries its date and, for intensity, its grid point.
    let (ensemble, rows): (&TreeEnsemble, Vec<(usize, Option<usize>, Vec<f64>)>) = match submodel {
        Submodel::Occ => (
            &bundle.occurrence.ensemble,
            (0..days.len()).map(|i| (i, None, preds.occurrence.row(i).to_vec())).collect(),
        ),
        Submodel::Dep => (
            &bundle.dependence.ensemble,
            (0..days.len()).map(|i| (i, None, preds.dependence.row(i).to_vec())).collect(),
        ),
        Submodel::Int => (
            &bundle.intensity.ensemble,
            (0..days.len())
                .flat_map(|i| {
                    schema.target_region.iter().map(move |&p| (i, Some(p), schema.intensity_row(preds.inputs(i), p)))
                })
                .collect(),
        ),
    };
    let mut attributions: Vec<ShapAttribution> = Vec::with_capacity(rows.len());
    let mut predictions = Vec::with_capacity(rows.len());
    for (_, _, x) in &rows {
        attributions.push(tree_shap(ensemble, x)?);
        predictions.push(ensemble.predict(x)?);
    }

    let names = &ensemble.feature_names;
    let mut shap =
        Table::new(["date", "point", "prediction", "base"].map(String::from).into_iter().chain(names.iter().cloned()));
    for ((i, p, _), (a, pred)) in rows.iter().zip(attributions.iter().zip(&predictions)) {
        let mut row = vec![
            ds.dates[days[*i]].to_string(),
            p.map(|p| p.to_string()).unwrap_or_default(),
            format!("{pred}"),
            format!("{}", a.base),
        ];
        row.extend(a.values.iter().map(|v| format!("{v}")));
        shap.rows.push(row);
    }
    let feature_points: Vec<Option<usize>> =
        names.iter().map(|n| n.strip_prefix("z500_").and_then(|i| i.parse().ok())).collect();
    let top = if top_decile { 0.1 } else { 1.0 };
    let summary = region_shap_summary(&attributions, &predictions, &feature_points, schema.n_points, top)?;
    let mut map = Table::new(["point", "lon", "lat", "mean_abs_shap"]);
    for (d, v) in summary.iter().enumerate() {
        map.push_numbers(&[d as f64, schema.lon[d], schema.lat[d], *v]);
    }
    create_dir(out)?;
    write_text(&out.join("shap.csv"), &shap.to_csv()?)?;
    write_text(&out.join("shap_map.csv"), &map.to_csv()?)
}
