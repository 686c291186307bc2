//! End-to-end orchestration: synth, potential, pca and report stages.
//!
//! Every stage reads and writes plain files under `output_dir`, so a staged
//! run and the one-shot [`run_pipeline`] produce the same bytes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::export;
use crate::grid::{
    load_grid, load_od_slices, nonzero_pair_profile, pairwise_distances, ODSnapshot, ProfileBin, SliceLabel,
    SpatialGrid, DEFAULT_PROFILE_BIN_KM,
};
use crate::hodge::{build_edge_system, net_flow, solve_potential, PotentialField, SolverConfig, SolverMethod};
use crate::linalg::Matrix;
use crate::pca::{fit, scores, scree, stack_potentials, PcaModel};
use crate::synth::{self, SynthSpec};
use crate::weighting::{binary_weights, fit_threshold, ThresholdReport, WeightingMode, DEFAULT_PERCENTILE};

/// Relative tolerance of the report's trace identity check.
pub const TRACE_CHECK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    PerScenario,
    Pooled,
}

/// Flat run configuration; every key is optional in the TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub grid_path: PathBuf,
    pub od_path: PathBuf,
    pub output_dir: PathBuf,
    pub percentile: f64,
    pub weighting_mode: WeightingMode,
    pub threshold_scope: Scope,
    pub solver_method: SolverMethod,
    pub solver_rel_tol: f64,
    pub solver_max_iter: Option<usize>,
    pub pca_components: usize,
    pub pca_scope: Scope,
    pub emit_geojson: bool,
    pub profile_bin_km: f64,
    /// Also write one profile per slice next to the pooled one.
    pub per_slice_profiles: bool,
    /// Worker threads for per-slice solves; `None` uses all cores.
    pub jobs: Option<usize>,
    pub scenarios: Option<Vec<String>>,
    pub hours: Option<Vec<u8>>,
    pub synth_rows: usize,
    pub synth_cols: usize,
    pub synth_n_hours: usize,
    pub synth_noise_sd: f64,
    pub synth_base_volume: f64,
    pub synth_link_radius_km: f64,
    pub synth_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let synth = SynthSpec::default();
        Self {
            grid_path: "grid.csv".into(),
            od_path: "od.csv".into(),
            output_dir: "out".into(),
            percentile: DEFAULT_PERCENTILE,
            weighting_mode: WeightingMode::IncludeBelowTheta,
            threshold_scope: Scope::PerScenario,
            solver_method: SolverMethod::DeflatedCg,
            solver_rel_tol: 1e-10,
            solver_max_iter: None,
            pca_components: 3,
            pca_scope: Scope::Pooled,
            emit_geojson: false,
            profile_bin_km: DEFAULT_PROFILE_BIN_KM,
            per_slice_profiles: false,
            jobs: None,
            scenarios: None,
            hours: None,
            synth_rows: synth.rows,
            synth_cols: synth.cols,
            synth_n_hours: synth.n_hours,
            synth_noise_sd: synth.noise_sd,
            synth_base_volume: synth.base_volume,
            synth_link_radius_km: synth.link_radius_km,
            synth_seed: synth.rng_seed,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.grid_path.as_os_str().is_empty()
            || self.od_path.as_os_str().is_empty()
            || self.output_dir.as_os_str().is_empty()
        {
            return bad("paths must be nonempty");
        }
        if self.pca_components < 1 {
            return bad("pca_components must be at least 1");
        }
        if !(self.percentile > 0.0 && self.percentile <= 1.0) {
            return bad("percentile must lie in (0, 1]");
        }
        if !(self.solver_rel_tol > 0.0) {
            return bad("solver_rel_tol must be positive");
        }
        if self.solver_max_iter == Some(0) || self.jobs == Some(0) {
            return bad("solver_max_iter and jobs must be at least 1");
        }
        if !(self.profile_bin_km > 0.0) {
            return bad("profile_bin_km must be positive");
        }
        Ok(())
    }

    pub fn solver(&self) -> SolverConfig<f64> {
        SolverConfig {
            method: self.solver_method,
            rel_tol: self.solver_rel_tol,
            max_iter: self.solver_max_iter,
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        let mut spec = SynthSpec::lattice(self.synth_rows, self.synth_cols);
        spec.n_hours = self.synth_n_hours;
        spec.factors = synth::default_factors(self.synth_rows, self.synth_cols, spec.spacing_km, self.synth_n_hours);
        spec.noise_sd = self.synth_noise_sd;
        spec.base_volume = self.synth_base_volume;
        spec.link_radius_km = self.synth_link_radius_km;
        spec.rng_seed = self.synth_seed;
        spec
    }

    fn out(&self, name: &str) -> PathBuf {
        self.output_dir.join(name)
    }

    fn ensure_output_dir(&self) -> Result<()> {
        std::fs::create_dir_all(&self.output_dir)
            .map_err(|e| Error::io(format!("creating {}", self.output_dir.display()), e))
    }
}

fn file_token(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '.' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn potential_file_name(label: &SliceLabel) -> String {
    format!("potential_{}_{:02}.csv", file_token(&label.scenario), label.hour)
}

fn scoped(stem: &str, scope: Option<&str>, ext: &str) -> String {
    match scope {
        None => format!("{stem}.{ext}"),
        Some(s) => format!("{stem}_{}.{ext}", file_token(s)),
    }
}

fn with_pool<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}"))),
    }
}

#[derive(Debug, Serialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub spec_hash: String,
    pub grid_shape: (usize, usize),
    pub n_cells: usize,
    pub n_slices: usize,
    pub noise_sd: f64,
    pub clipped_edges: usize,
    pub directed_edges: usize,
    pub files: Vec<String>,
}

/// Writes `grid.csv`, `od.csv`, `ground_truth.csv` and `manifest.json`.
pub fn run_synth(cfg: &PipelineConfig) -> Result<SynthManifest> {
    let spec = cfg.synth_spec();
    let out = synth::generate(&spec)?;
    cfg.ensure_output_dir()?;
    export::write_grid(&cfg.out("grid.csv"), &out.grid)?;
    export::write_od(&cfg.out("od.csv"), &out.snapshots)?;
    export::write_ground_truth(&cfg.out("ground_truth.csv"), &out.grid, &out.ground_truth)?;
    let manifest = SynthManifest {
        seed: spec.rng_seed,
        spec_hash: spec.hash(),
        grid_shape: (spec.rows, spec.cols),
        n_cells: spec.n_cells(),
        n_slices: out.snapshots.len(),
        noise_sd: spec.noise_sd,
        clipped_edges: out.clipped_edges,
        directed_edges: out.directed_edges,
        files: ["grid.csv", "od.csv", "ground_truth.csv"].map(String::from).to_vec(),
    };
    export::write_json(&cfg.out("manifest.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone)]
pub struct PotentialRun {
    pub grid: Arc<SpatialGrid>,
    pub fields: Vec<(SliceLabel, PotentialField<f64>)>,
    pub thresholds: Vec<ThresholdReport>,
    pub profile: Vec<ProfileBin>,
}

fn select_slices(cfg: &PipelineConfig, all: Vec<ODSnapshot>) -> Result<Vec<ODSnapshot>> {
    if cfg.scenarios.is_none() && cfg.hours.is_none() {
        return Ok(all);
    }
    let mut present: Vec<String> = Vec::new();
    for s in &all {
        if !present.contains(&s.label().scenario) {
            present.push(s.label().scenario.clone());
        }
    }
    let scenarios = cfg.scenarios.clone().unwrap_or(present);
    let mut by_label: BTreeMap<SliceLabel, ODSnapshot> = all.into_iter().map(|s| (s.label().clone(), s)).collect();
    let mut selected = Vec::new();
    for scenario in &scenarios {
        let hours: Vec<u8> = match &cfg.hours {
            Some(h) => h.clone(),
            None => by_label
                .keys()
                .filter(|l| &l.scenario == scenario)
                .map(|l| l.hour)
                .collect(),
        };
        if hours.is_empty() {
            return Err(Error::EmptySelection {
                scenario: scenario.clone(),
                hour: 0,
            });
        }
        for hour in hours {
            let label = SliceLabel::new(scenario.clone(), hour);
            match by_label.remove(&label) {
                Some(s) => selected.push(s),
                None => {
                    return Err(Error::EmptySelection {
                        scenario: scenario.clone(),
                        hour,
                    })
                }
            }
        }
    }
    Ok(selected)
}

/// Computes one potential per slice and writes potentials, thresholds,
/// solver diagnostics, the non-zero pair profile and the slice index.
pub fn run_potential(cfg: &PipelineConfig) -> Result<PotentialRun> {
    cfg.validate()?;
    let grid = Arc::new(load_grid(&cfg.grid_path)?);
    let d = pairwise_distances(&grid)?;
    let slices = select_slices(cfg, load_od_slices(&cfg.od_path, &grid)?)?;

    let profile = nonzero_pair_profile(&slices, &d, cfg.profile_bin_km)?;

    // slices grouped by threshold scope, in first-appearance order
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (k, s) in slices.iter().enumerate() {
        let key = match cfg.threshold_scope {
            Scope::PerScenario => s.label().scenario.clone(),
            Scope::Pooled => "pooled".to_string(),
        };
        match groups.iter_mut().find(|(g, _)| *g == key) {
            Some((_, members)) => members.push(k),
            None => groups.push((key, vec![k])),
        }
    }

    let solver = cfg.solver();
    let mut thresholds = Vec::with_capacity(groups.len());
    let mut systems = Vec::with_capacity(groups.len());
    let mut group_of = vec![0; slices.len()];
    for (g, (key, members)) in groups.iter().enumerate() {
        let chosen: Vec<ODSnapshot> = members.iter().map(|&k| slices[k].clone()).collect();
        let rule = fit_threshold(&chosen, &d, cfg.percentile)?.with_mode(cfg.weighting_mode);
        systems.push(build_edge_system(&d, binary_weights::<f64>(&rule))?);
        thresholds.push(ThresholdReport::new(key.clone(), &rule));
        for &k in members {
            group_of[k] = g;
        }
    }

    let solved: Vec<PotentialField<f64>> = with_pool(cfg.jobs, || {
        slices
            .par_iter()
            .zip(group_of.par_iter())
            .map(|(snap, &g)| solve_potential(&net_flow::<f64>(snap), &systems[g], &solver))
            .collect::<Result<Vec<_>>>()
    })??;
    let fields: Vec<(SliceLabel, PotentialField<f64>)> = slices.iter().map(|s| s.label().clone()).zip(solved).collect();

    cfg.ensure_output_dir()?;
    let mut index = Vec::with_capacity(fields.len());
    let mut diagnostics = Vec::with_capacity(fields.len());
    for (label, field) in &fields {
        let name = potential_file_name(label);
        export::write_potential(&cfg.out(&name), &grid, &field.s)?;
        if cfg.emit_geojson {
            let geo = name.replace(".csv", ".geojson");
            export::write_geojson(&cfg.out(&geo), &grid, &[("potential".into(), field.s.clone())])?;
        }
        let diag = &field.diagnostics;
        diagnostics.push(json!({
            "scenario": label.scenario,
            "hour": label.hour,
            "method": diag.method,
            "iterations": diag.iterations,
            "residual_norm": diag.residual_norm,
            "components": diag.components,
        }));
        index.push(vec![label.scenario.clone(), label.hour.to_string(), name]);
    }
    write_index(&cfg.out("slices.csv"), &index)?;
    export::write_json(&cfg.out("diagnostics.json"), &diagnostics)?;
    export::write_json(&cfg.out("thresholds.json"), &thresholds)?;
    export::write_profile(&cfg.out("profile.csv"), &profile)?;
    if cfg.per_slice_profiles {
        for snap in &slices {
            let bins = nonzero_pair_profile(std::slice::from_ref(snap), &d, cfg.profile_bin_km)?;
            let label = snap.label();
            let name = format!("profile_{}_{:02}.csv", file_token(&label.scenario), label.hour);
            export::write_profile(&cfg.out(&name), &bins)?;
        }
    }
    Ok(PotentialRun {
        grid,
        fields,
        thresholds,
        profile,
    })
}

fn write_index(path: &Path, rows: &[Vec<String>]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    w.write_record(["scenario", "hour", "file"])
        .map_err(|e| Error::csv(ctx(), e))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::csv(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.is_file() {
        Ok(path)
    } else {
        Err(Error::MissingArtifacts(path))
    }
}

/// Reads the slice index and every potential file it lists.
pub fn read_potentials(cfg: &PipelineConfig) -> Result<PotentialRun> {
    let grid = Arc::new(load_grid(&cfg.grid_path)?);
    let index = require(cfg.out("slices.csv"))?;
    let ctx = || format!("reading {}", index.display());
    let mut rdr = csv::Reader::from_path(&index).map_err(|e| Error::csv(ctx(), e))?;
    let mut fields = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::csv(ctx(), e))?;
        let hour = rec[1].parse().map_err(|_| Error::MalformedRow {
            line: k as u64 + 2,
            reason: format!("bad hour in {}", index.display()),
        })?;
        let path = require(cfg.out(&rec[2]))?;
        let s = export::read_potential(&path, &grid)?;
        fields.push((
            SliceLabel::new(&rec[0], hour),
            PotentialField::from_values(Some(Arc::clone(&grid)), s),
        ));
    }
    Ok(PotentialRun {
        grid,
        fields,
        thresholds: Vec::new(),
        profile: Vec::new(),
    })
}

#[derive(Debug, Clone)]
pub struct FittedScope {
    /// `None` for the pooled model, otherwise the scenario name.
    pub scope: Option<String>,
    pub labels: Vec<SliceLabel>,
    pub model: PcaModel<f64>,
    pub scores: Matrix<f64>,
}

fn pca_groups(cfg: &PipelineConfig, fields: &[(SliceLabel, PotentialField<f64>)]) -> Vec<(Option<String>, Vec<usize>)> {
    match cfg.pca_scope {
        Scope::Pooled => vec![(None, (0..fields.len()).collect())],
        Scope::PerScenario => {
            let mut groups: Vec<(Option<String>, Vec<usize>)> = Vec::new();
            for (k, (label, _)) in fields.iter().enumerate() {
                let key = Some(label.scenario.clone());
                match groups.iter_mut().find(|(g, _)| *g == key) {
                    Some((_, m)) => m.push(k),
                    None => groups.push((key, vec![k])),
                }
            }
            groups
        }
    }
}

/// Fits PCA on in-memory potentials and writes eigenvectors, scores and scree.
pub fn run_pca_on(cfg: &PipelineConfig, run: &PotentialRun) -> Result<Vec<FittedScope>> {
    cfg.validate()?;
    cfg.ensure_output_dir()?;
    let mut fitted = Vec::new();
    for (scope, members) in pca_groups(cfg, &run.fields) {
        let subset: Vec<_> = members.iter().map(|&k| run.fields[k].clone()).collect();
        let obs = stack_potentials(&subset)?;
        let model = fit(&obs)?;
        let l = cfg.pca_components;
        let pcs = scores(&model, &obs, l)?;
        let scope_ref = scope.as_deref();
        export::write_eigenvectors(
            &cfg.out(&scoped("eigvecs", scope_ref, "csv")),
            &run.grid,
            &model.eigenvectors,
            l,
        )?;
        export::write_scores(&cfg.out(&scoped("scores", scope_ref, "csv")), obs.row_labels(), &pcs)?;
        export::write_scree(&cfg.out(&scoped("scree", scope_ref, "csv")), &scree(&model))?;
        if cfg.emit_geojson {
            let props: Vec<(String, Vec<f64>)> =
                (0..l).map(|k| (format!("w{}", k + 1), model.eigenvector(k))).collect();
            export::write_geojson(&cfg.out(&scoped("eigvecs", scope_ref, "geojson")), &run.grid, &props)?;
        }
        fitted.push(FittedScope {
            scope,
            labels: obs.row_labels().to_vec(),
            model,
            scores: pcs,
        });
    }
    Ok(fitted)
}

/// PCA stage reading potentials written by an earlier [`run_potential`].
pub fn run_pca(cfg: &PipelineConfig) -> Result<Vec<FittedScope>> {
    let run = read_potentials(cfg)?;
    run_pca_on(cfg, &run)
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceCheck {
    pub model: String,
    pub sum_eigenvalues: f64,
    pub frobenius_over_n_minus_1: f64,
    pub rel_diff: f64,
    pub ok: bool,
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let ctx = || format!("reading {}", path.display());
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::csv(ctx(), e))?;
    let head = rdr
        .headers()
        .map_err(|e| Error::csv(ctx(), e))?
        .iter()
        .map(String::from)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        rows.push(
            rec.map_err(|e| Error::csv(ctx(), e))?
                .iter()
                .map(String::from)
                .collect(),
        );
    }
    Ok((head, rows))
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.parse().map_err(|_| Error::MalformedRow {
        line: 0,
        reason: format!("non-numeric `{s}` in {}", path.display()),
    })
}

/// Consolidated report plus plot-ready tables, recomputed from the exported files.
pub fn run_report(cfg: &PipelineConfig) -> Result<serde_json::Value> {
    let thresholds_path = require(cfg.out("thresholds.json"))?;
    let profile_path = require(cfg.out("profile.csv"))?;
    require(cfg.out("slices.csv"))?;
    let potentials = read_potentials(cfg)?;

    let thresholds: serde_json::Value = serde_json::from_reader(std::io::BufReader::new(
        std::fs::File::open(&thresholds_path).map_err(|e| Error::io("reading thresholds", e))?,
    ))?;
    let threshold_rows: Vec<Vec<String>> = thresholds
        .as_array()
        .into_iter()
        .flatten()
        .map(|t| {
            vec![
                t["scenario"].as_str().unwrap_or_default().to_string(),
                t["percentile"].to_string(),
                t["theta_km"].to_string(),
            ]
        })
        .collect();
    write_plain(
        &cfg.out("thresholds.csv"),
        &["scenario", "percentile", "theta_km"],
        &threshold_rows,
    )?;
    let (_, profile_rows) = read_table(&profile_path)?;

    let mut models = Vec::new();
    let mut checks = Vec::new();
    let mut outputs = vec!["thresholds.csv".to_string()];
    for (scope, members) in pca_groups(cfg, &potentials.fields) {
        let scope_ref = scope.as_deref();
        let scree_path = require(cfg.out(&scoped("scree", scope_ref, "csv")))?;
        let scores_path = require(cfg.out(&scoped("scores", scope_ref, "csv")))?;
        let name = scope.clone().unwrap_or_else(|| "pooled".into());

        let (_, scree_rows) = read_table(&scree_path)?;
        let eigenvalues = scree_rows
            .iter()
            .map(|r| parse_f64(&r[1], &scree_path))
            .collect::<Result<Vec<_>>>()?;
        let cumulative = scree_rows
            .iter()
            .map(|r| parse_f64(&r[3], &scree_path))
            .collect::<Result<Vec<_>>>()?;

        let subset: Vec<_> = members.iter().map(|&k| potentials.fields[k].clone()).collect();
        let obs = stack_potentials(&subset)?;
        let frob = obs.x().frobenius_sq() / (obs.n() - 1) as f64;
        let sum: f64 = eigenvalues.iter().sum();
        let rel_diff = (sum - frob).abs() / frob.max(f64::MIN_POSITIVE);
        let ok = rel_diff <= TRACE_CHECK_TOL || (sum == 0.0 && frob == 0.0);
        checks.push(TraceCheck {
            model: name.clone(),
            sum_eigenvalues: sum,
            frobenius_over_n_minus_1: frob,
            rel_diff,
            ok,
        });

        let (head, score_rows) = read_table(&scores_path)?;
        let l = head.len().saturating_sub(2);
        let mut scenarios: Vec<String> = Vec::new();
        for r in &score_rows {
            if !scenarios.contains(&r[0]) {
                scenarios.push(r[0].clone());
            }
        }
        for k in 0..l {
            let mut by_hour: BTreeMap<u8, Vec<String>> = BTreeMap::new();
            for r in &score_rows {
                let hour: u8 = r[1].parse().unwrap_or(0);
                let col = scenarios.iter().position(|s| s == &r[0]).unwrap_or(0);
                let row = by_hour
                    .entry(hour)
                    .or_insert_with(|| vec![String::new(); scenarios.len()]);
                row[col] = r[2 + k].clone();
            }
            let mut head: Vec<&str> = vec!["hour"];
            head.extend(scenarios.iter().map(String::as_str));
            let rows: Vec<Vec<String>> = by_hour
                .into_iter()
                .map(|(h, vals)| std::iter::once(h.to_string()).chain(vals).collect())
                .collect();
            let file = scoped(&format!("trajectories_pc{}", k + 1), scope_ref, "csv");
            write_plain(&cfg.out(&file), &head, &rows)?;
            outputs.push(file);
        }

        let top = |k: usize| cumulative.get(k.min(cumulative.len()).saturating_sub(1)).copied();
        models.push(json!({
            "model": name,
            "n_observations": obs.n(),
            "n_cells": obs.p(),
            "leading_eigenvalues": eigenvalues.iter().take(cfg.pca_components.max(3)).collect::<Vec<_>>(),
            "cumulative_ratio_top1": top(1),
            "cumulative_ratio_top2": top(2),
            "cumulative_ratio_top3": top(3),
        }));
    }

    let report = json!({
        "n_slices": potentials.fields.len(),
        "n_cells": potentials.grid.len(),
        "thresholds": thresholds,
        "profile_bins": profile_rows.len(),
        "pca": models,
        "trace_checks": checks,
        "trace_check_tolerance": TRACE_CHECK_TOL,
        "outputs": outputs,
    });
    export::write_json(&cfg.out("report.json"), &report)?;
    Ok(report)
}

fn write_plain(path: &Path, head: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let ctx = || format!("writing {}", path.display());
    let file = std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(file);
    w.write_record(head).map_err(|e| Error::csv(ctx(), e))?;
    for r in rows {
        w.write_record(r).map_err(|e| Error::csv(ctx(), e))?;
    }
    w.flush().map_err(|e| Error::io(ctx(), e))
}

/// Potential, PCA and report stages in one call, sharing in-memory results.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<(PotentialRun, Vec<FittedScope>)> {
    let run = run_potential(cfg)?;
    let fitted = run_pca_on(cfg, &run)?;
    run_report(cfg)?;
    Ok((run, fitted))
}
