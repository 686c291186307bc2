use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use odhodge::hodge::SolverMethod;
use odhodge::pipeline::{self, FittedScope, PipelineConfig, PotentialRun, Scope};
use odhodge::weighting::WeightingMode;
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "odhodge",
    version,
    about = "Hodge potentials and PCA for origin-destination flows"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic grid, OD table and ground-truth potentials
    Synth(Opts),
    /// Fit thresholds and solve one potential per (scenario, hour)
    Potential(Opts),
    /// Run PCA on potentials written by `potential`
    Pca(Opts),
    /// Write the consolidated report and plot-ready tables
    Report(Opts),
    /// Run potential, pca and report in one go
    Pipeline(Opts),
}

#[derive(Args, Clone)]
struct Opts {
    /// TOML config file; flags override its keys
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Grid table with `cell_id,x,y` (metres) or `cell_id,lon,lat` (degrees)
    #[arg(long)]
    grid: Option<PathBuf>,
    /// OD table with `origin_id,dest_id,hour,scenario,count`
    #[arg(long)]
    od: Option<PathBuf>,
    #[arg(long, short, env = "ODHODGE_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
    /// Share of trip volume the threshold distance must cover
    #[arg(long)]
    percentile: Option<f64>,
    #[arg(long, value_enum)]
    weighting: Option<Weighting>,
    #[arg(long, value_enum)]
    threshold_scope: Option<ScopeArg>,
    #[arg(long, value_enum)]
    solver: Option<Solver>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Number of principal components to export
    #[arg(long, short = 'l')]
    components: Option<usize>,
    #[arg(long, value_enum)]
    pca_scope: Option<ScopeArg>,
    /// Also write GeoJSON point layers
    #[arg(long)]
    geojson: bool,
    /// Also write one distance profile per slice
    #[arg(long)]
    per_slice_profiles: bool,
    #[arg(long)]
    profile_bin_km: Option<f64>,
    /// Worker threads for per-slice solves (default: all cores)
    #[arg(long, short)]
    jobs: Option<usize>,
    /// Only these scenarios (comma separated)
    #[arg(long, value_delimiter = ',')]
    scenarios: Option<Vec<String>>,
    /// Only these hours (comma separated)
    #[arg(long, value_delimiter = ',')]
    hours: Option<Vec<u8>>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long)]
    n_hours: Option<usize>,
    #[arg(long)]
    noise_sd: Option<f64>,
    #[arg(long)]
    base_volume: Option<f64>,
    #[arg(long)]
    link_radius_km: Option<f64>,
}

#[derive(ValueEnum, Clone, Copy)]
enum Weighting {
    Below,
    Above,
}

#[derive(ValueEnum, Clone, Copy)]
enum ScopeArg {
    PerScenario,
    Pooled,
}

#[derive(ValueEnum, Clone, Copy)]
enum Solver {
    Cg,
    Dense,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::PerScenario => Scope::PerScenario,
            ScopeArg::Pooled => Scope::Pooled,
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Opts {
    fn config(self) -> odhodge::Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_file(path)?,
            None => PipelineConfig::default(),
        };
        set(&mut cfg.grid_path, self.grid);
        set(&mut cfg.od_path, self.od);
        set(&mut cfg.output_dir, self.output_dir);
        set(&mut cfg.percentile, self.percentile);
        set(
            &mut cfg.weighting_mode,
            self.weighting.map(|w| match w {
                Weighting::Below => WeightingMode::IncludeBelowTheta,
                Weighting::Above => WeightingMode::IncludeAboveTheta,
            }),
        );
        set(&mut cfg.threshold_scope, self.threshold_scope.map(Scope::from));
        set(
            &mut cfg.solver_method,
            self.solver.map(|s| match s {
                Solver::Cg => SolverMethod::DeflatedCg,
                Solver::Dense => SolverMethod::DenseEigen,
            }),
        );
        set(&mut cfg.solver_rel_tol, self.rel_tol);
        if self.max_iter.is_some() {
            cfg.solver_max_iter = self.max_iter;
        }
        set(&mut cfg.pca_components, self.components);
        set(&mut cfg.pca_scope, self.pca_scope.map(Scope::from));
        cfg.emit_geojson |= self.geojson;
        cfg.per_slice_profiles |= self.per_slice_profiles;
        set(&mut cfg.profile_bin_km, self.profile_bin_km);
        if self.jobs.is_some() {
            cfg.jobs = self.jobs;
        }
        if self.scenarios.is_some() {
            cfg.scenarios = self.scenarios;
        }
        if self.hours.is_some() {
            cfg.hours = self.hours;
        }
        set(&mut cfg.synth_seed, self.seed);
        set(&mut cfg.synth_rows, self.rows);
        set(&mut cfg.synth_cols, self.cols);
        set(&mut cfg.synth_n_hours, self.n_hours);
        set(&mut cfg.synth_noise_sd, self.noise_sd);
        set(&mut cfg.synth_base_volume, self.base_volume);
        set(&mut cfg.synth_link_radius_km, self.link_radius_km);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn potential_summary(run: &PotentialRun) -> serde_json::Value {
    let max_iter = run.fields.iter().map(|(_, f)| f.diagnostics.iterations).max();
    let worst = run
        .fields
        .iter()
        .map(|(_, f)| f.diagnostics.residual_norm)
        .fold(0.0f64, f64::max);
    json!({
        "slices": run.fields.len(),
        "cells": run.grid.len(),
        "thresholds": run.thresholds,
        "max_iterations": max_iter,
        "max_relative_residual": worst,
    })
}

fn pca_summary(fitted: &[FittedScope]) -> serde_json::Value {
    fitted
        .iter()
        .map(|f| {
            let scree = odhodge::pca::scree(&f.model);
            json!({
                "model": f.scope.clone().unwrap_or_else(|| "pooled".into()),
                "observations": f.labels.len(),
                "cumulative_ratio": scree.iter().take(f.scores.ncols()).map(|r| r.cumulative).collect::<Vec<_>>(),
            })
        })
        .collect()
}

fn run(command: Command) -> odhodge::Result<serde_json::Value> {
    Ok(match command {
        Command::Synth(o) => serde_json::to_value(pipeline::run_synth(&o.config()?)?)?,
        Command::Potential(o) => potential_summary(&pipeline::run_potential(&o.config()?)?),
        Command::Pca(o) => pca_summary(&pipeline::run_pca(&o.config()?)?),
        Command::Report(o) => pipeline::run_report(&o.config()?)?,
        Command::Pipeline(o) => {
            let (run, fitted) = pipeline::run_pipeline(&o.config()?)?;
            json!({ "potential": potential_summary(&run), "pca": pca_summary(&fitted) })
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(summary) => {
            // a closed pipe (`| head`) is not a failure of the run
            let _ = writeln!(std::io::stdout().lock(), "{:#}", summary);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.code(), "message": e.to_string() }));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
