//! Command-line front end. Every subcommand writes its outputs and a
//! `manifest.json` into the `--out` directory.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::dataset::{load_csv, ColumnType, Dataset, LoadReport, Schema};
use crate::design::{build_design, validate_inflated, DEFAULT_MIN_SPIKE_COUNT};
use crate::diagnostics::{detect_spikes_in, rootogram, DEFAULT_SENSITIVITY};
use crate::error::{Error, Result};
use crate::estimation::{fit_design, FitOptions, FitResult};
use crate::inference::{predict, predictive_margins, write_predictions_csv, MarginMode};
use crate::io::{load_fit, save_fit, write_atomic, write_atomic_with};
use crate::selection::compare;
use crate::simulation::{simulate, SimulationDesign};
use crate::spec::ModelSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "mitnb", version, about = "Hurdle multiple-inflated truncated negative binomial regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
struct FitArgs {
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    tol_grad: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol_loglik: f64,
    #[arg(long, default_value_t = 1e-5)]
    hessian_step: f64,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions {
            max_iters: self.max_iters,
            tol_grad: self.tol_grad,
            tol_loglik: self.tol_loglik,
            hessian_step: self.hessian_step,
            ..FitOptions::default()
        }
    }
}

/// A fitted model, either loaded or fitted on the spot.
#[derive(Debug, Clone, Args, Serialize)]
struct ModelSource {
    /// `fit.json` from an earlier `fit` run.
    #[arg(long, conflicts_with = "config")]
    fit: Option<PathBuf>,
    /// Model configuration, fitted on `--data` when `--fit` is absent.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    fit_args: FitArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum ModeArg {
    Counterfactual,
    Subgroup,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "subcommand")]
enum Command {
    /// Draw a dataset from a simulation design (JSON or TOML).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the design's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit one model.
    Fit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fit_args: FitArgs,
    },
    /// Fit several candidate models and rank them by AIC.
    Compare {
        #[arg(long, required = true)]
        config: Vec<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        fit_args: FitArgs,
    },
    /// Per-row predictions with delta-method standard errors.
    Predict {
        #[command(flatten)]
        model: ModelSource,
        #[arg(long)]
        data: PathBuf,
        /// Rows to predict for; defaults to `--data`.
        #[arg(long)]
        newdata: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average predictions over the sample on a grid of covariate values.
    Margins {
        #[command(flatten)]
        model: ModelSource,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, required = true)]
        over: Vec<String>,
        #[arg(long, value_enum, default_value = "counterfactual")]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Observed against expected count frequencies, as CSV and SVG.
    Rootogram {
        #[command(flatten)]
        model: ModelSource,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        max_count: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Counts standing out from their neighbours among the positives.
    DetectSpikes {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "y")]
        response: String,
        #[arg(long, default_value_t = DEFAULT_SENSITIVITY)]
        sensitivity: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match dispatch(&cli.command, &argv) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn output_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn input_entry(path: &Path) -> serde_json::Value {
    let bytes = fs::metadata(path).map(|m| m.len()).ok();
    json!({ "path": path.display().to_string(), "bytes": bytes })
}

fn write_manifest(out: &Path, command: &Command, argv: &[OsString], inputs: &[&Path], extra: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "argv": argv.iter().map(|a| a.to_string_lossy().into_owned()).collect::<Vec<_>>(),
        "invocation": command,
        "inputs": inputs.iter().map(|p| input_entry(p)).collect::<Vec<_>>(),
        "results": extra,
    });
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    write_atomic(out.join("manifest.json"), text.as_bytes())
}

fn load_report_json(report: &LoadReport, rank: &[(String, bool)]) -> serde_json::Value {
    json!({
        "rows_read": report.rows_read,
        "dropped_rows": report.dropped_rows,
        "rank_ok": rank.iter().map(|(b, ok)| (b.clone(), json!(ok))).collect::<serde_json::Map<_, _>>(),
    })
}

fn load_for_spec(spec: &ModelSpec, path: &Path) -> Result<(Dataset, LoadReport)> {
    let (data, report) = load_csv(path, &spec.schema())?;
    if report.dropped_rows > 0 {
        eprintln!("warning: dropped {} of {} rows with missing values", report.dropped_rows, report.rows_read);
    }
    Ok((data, report))
}

/// Schema for data scored by a fitted model: categoricals are closed to the
/// levels seen when fitting, so unseen levels are reported with their row.
fn fit_schema(fit: &FitResult, with_response: bool) -> Schema {
    let base = fit.spec.schema();
    let mut schema = Schema::new(with_response.then_some(fit.spec.response.as_str()));
    for (name, ty) in base.columns {
        if name == fit.spec.response {
            continue;
        }
        let ty = match (ty, fit.encoding.levels.get(&name)) {
            (ColumnType::Categorical { reference, .. }, Some(levels)) => ColumnType::Categorical {
                levels: Some(levels.clone()),
                reference,
            },
            (ty, _) => ty,
        };
        schema = schema.with(&name, ty);
    }
    schema
}

fn fit_and_report(spec: &ModelSpec, data: &Dataset, options: &FitOptions) -> Result<(FitResult, Vec<(String, bool)>)> {
    let (encoding, design) = build_design(spec, data)?;
    let rank = design
        .rank_report()
        .into_iter()
        .map(|(b, r)| (b.name().to_string(), r.is_ok()))
        .collect();
    let fit = fit_design(spec, &encoding, &design, options)?;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    Ok((fit, rank))
}

/// Loads `--fit`, or fits `--config` on the dataset at `data`.
fn resolve_model(source: &ModelSource, data: &Path) -> Result<FitResult> {
    match (&source.fit, &source.config) {
        (Some(fit), _) => load_fit(fit),
        (None, Some(config)) => {
            let spec = ModelSpec::from_config_file(config)?;
            let (data, _) = load_for_spec(&spec, data)?;
            Ok(fit_and_report(&spec, &data, &source.fit_args.options())?.0)
        }
        (None, None) => Err(Error::Config("either --fit or --config is required".into())),
    }
}

fn model_inputs<'a>(source: &'a ModelSource, data: &'a Path) -> Vec<&'a Path> {
    let mut v: Vec<&Path> = source.fit.iter().chain(&source.config).map(PathBuf::as_path).collect();
    v.push(data);
    v
}

fn not_converged_code(converged: bool) -> i32 {
    if converged {
        EXIT_OK
    } else {
        eprintln!("warning: optimizer did not converge; results were written");
        EXIT_NOT_CONVERGED
    }
}

fn dispatch(command: &Command, argv: &[OsString]) -> Result<i32> {
    match command {
        Command::Simulate { config, out, seed } => {
            let mut design = SimulationDesign::from_file(config)?;
            if let Some(s) = seed {
                design.seed = *s;
            }
            let data = simulate(&design)?;
            output_dir(out)?;
            write_atomic_with(out.join("data.csv"), |buf| data.write_csv(buf))?;
            write_atomic(out.join("truth.json"), (design.to_json_string() + "\n").as_bytes())?;
            write_manifest(out, command, argv, &[config], json!({ "rows": data.n_rows(), "seed": design.seed }))?;
            Ok(EXIT_OK)
        }
        Command::Fit {
            config,
            data,
            out,
            fit_args,
        } => {
            let spec = ModelSpec::from_config_file(config)?;
            let (dataset, report) = load_for_spec(&spec, data)?;
            let inflated = validate_inflated(&spec.inflated, &dataset, DEFAULT_MIN_SPIKE_COUNT)?;
            for w in &inflated.warnings {
                eprintln!("warning: {w}");
            }
            let (fit, rank) = fit_and_report(&spec, &dataset, &fit_args.options())?;
            output_dir(out)?;
            save_fit(out.join("fit.json"), &fit)?;
            let load = load_report_json(&report, &rank);
            println!("{report}");
            write_manifest(
                out,
                command,
                argv,
                &[config, data],
                json!({
                    "options": fit_args,
                    "load_report": load,
                    "spike_counts": inflated.counts,
                    "loglik": fit.loglik_total,
                    "aic": fit.aic,
                    "bic": fit.bic,
                    "converged": fit.converged(),
                }),
            )?;
            Ok(not_converged_code(fit.converged()))
        }
        Command::Compare {
            config,
            data,
            out,
            fit_args,
        } => {
            let mut specs = Vec::with_capacity(config.len());
            for (i, path) in config.iter().enumerate() {
                let spec = ModelSpec::from_config_file(path)?;
                let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let label = if specs.iter().any(|(l, _): &(String, ModelSpec)| *l == stem) {
                    format!("{stem}#{i}")
                } else {
                    stem
                };
                specs.push((label, spec));
            }
            if let Some((_, first)) = specs.first() {
                if specs.iter().any(|(_, s)| s.response != first.response) {
                    return Err(Error::Config("all candidate models must share the response".into()));
                }
            }
            // One load covering every column any candidate uses.
            let mut schema = specs[0].1.schema();
            for (_, s) in &specs[1..] {
                for (name, ty) in s.schema().columns {
                    if schema.get(&name).is_none() {
                        schema = schema.with(&name, ty);
                    }
                }
            }
            let (dataset, report) = load_csv(data, &schema)?;
            let table = compare(&specs, &dataset, &fit_args.options());
            output_dir(out)?;
            write_atomic_with(out.join("comparison.csv"), |buf| table.write_csv(buf))?;
            let mut inputs: Vec<&Path> = config.iter().map(PathBuf::as_path).collect();
            inputs.push(data);
            write_manifest(
                out,
                command,
                argv,
                &inputs,
                json!({
                    "options": fit_args,
                    "rows_read": report.rows_read,
                    "dropped_rows": report.dropped_rows,
                    "best": table.best().map(|r| r.label.clone()),
                }),
            )?;
            for r in table.rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("warning: model `{}` failed: {}", r.label, r.error.as_deref().unwrap_or(""));
            }
            Ok(not_converged_code(table.rows.iter().all(|r| r.converged)))
        }
        Command::Predict {
            model,
            data,
            newdata,
            out,
        } => {
            let fit = resolve_model(model, data)?;
            let target = newdata.as_deref().unwrap_or(data);
            let (rows, _) = load_csv(target, &fit_schema(&fit, false))?;
            let preds = predict(&fit, &rows)?;
            output_dir(out)?;
            write_atomic_with(out.join("predictions.csv"), |buf| {
                write_predictions_csv(&preds, fit.inflated(), buf)
            })?;
            let mut inputs = model_inputs(model, data);
            inputs.extend(newdata.as_deref());
            write_manifest(out, command, argv, &inputs, json!({ "rows": preds.len() }))?;
            Ok(not_converged_code(fit.converged()))
        }
        Command::Margins {
            model,
            data,
            over,
            mode,
            out,
        } => {
            let fit = resolve_model(model, data)?;
            let (rows, _) = load_csv(data, &fit_schema(&fit, false))?;
            let mode = match mode {
                ModeArg::Counterfactual => MarginMode::Counterfactual,
                ModeArg::Subgroup => MarginMode::Subgroup,
            };
            let table = predictive_margins(&fit, &rows, over, mode)?;
            output_dir(out)?;
            write_atomic_with(out.join("margins.csv"), |buf| table.write_csv(buf))?;
            write_manifest(out, command, argv, &model_inputs(model, data), json!({ "cells": table.cells.len() }))?;
            Ok(not_converged_code(fit.converged()))
        }
        Command::Rootogram {
            model,
            data,
            max_count,
            out,
        } => {
            let fit = resolve_model(model, data)?;
            let (rows, _) = load_csv(data, &fit_schema(&fit, true))?;
            let table = rootogram(&fit, &rows, *max_count)?;
            output_dir(out)?;
            write_atomic_with(out.join("rootogram.csv"), |buf| table.write_csv(buf))?;
            write_atomic(out.join("rootogram.svg"), table.to_svg().as_bytes())?;
            write_manifest(
                out,
                command,
                argv,
                &model_inputs(model, data),
                json!({ "max_count": table.max_count, "max_abs_deviation": table.max_abs_deviation() }),
            )?;
            Ok(not_converged_code(fit.converged()))
        }
        Command::DetectSpikes {
            data,
            response,
            sensitivity,
            out,
        } => {
            let (dataset, _) = load_csv(data, &Schema::new(Some(response)))?;
            let candidates = detect_spikes_in(&dataset, *sensitivity)?;
            output_dir(out)?;
            write_atomic_with(out.join("spikes.csv"), |buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(["value", "freq", "smoothed", "score"])?;
                for c in &candidates {
                    w.write_record([
                        c.value.to_string(),
                        c.freq.to_string(),
                        c.smoothed.to_string(),
                        c.score.to_string(),
                    ])?;
                }
                w.flush()?;
                Ok(())
            })?;
            for c in &candidates {
                println!("{}", c.value);
            }
            write_manifest(
                out,
                command,
                argv,
                &[data],
                json!({ "candidates": candidates.iter().map(|c| c.value).collect::<Vec<_>>() }),
            )?;
            Ok(EXIT_OK)
        }
    }
}
