use std::path::Path;

use odhodge::pipeline::{self, PipelineConfig, Scope};
use odhodge::synth::{self, SynthSpec};
use odhodge::Error;

fn small(root: &Path, noise_sd: f64) -> (PipelineConfig, PipelineConfig) {
    let data = root.join("data");
    let synth_cfg = PipelineConfig {
        output_dir: data.clone(),
        synth_rows: 6,
        synth_cols: 7,
        synth_n_hours: 6,
        synth_noise_sd: noise_sd,
        ..PipelineConfig::default()
    };
    let run_cfg = PipelineConfig {
        grid_path: data.join("grid.csv"),
        od_path: data.join("od.csv"),
        output_dir: root.join("out"),
        ..synth_cfg.clone()
    };
    (synth_cfg, run_cfg)
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    std::fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn staged_run_matches_one_shot() {
    let tmp = tempfile::tempdir().unwrap();
    let (synth_cfg, one_shot) = small(tmp.path(), 1.0);
    pipeline::run_synth(&synth_cfg).unwrap();
    pipeline::run_pipeline(&one_shot).unwrap();

    let staged = PipelineConfig {
        output_dir: tmp.path().join("staged"),
        ..one_shot.clone()
    };
    pipeline::run_potential(&staged).unwrap();
    pipeline::run_pca(&staged).unwrap();
    pipeline::run_report(&staged).unwrap();

    for name in [
        "scores.csv",
        "eigvecs.csv",
        "scree.csv",
        "thresholds.csv",
        "potential_wd2019_03.csv",
    ] {
        assert_eq!(
            read(&one_shot.output_dir, name),
            read(&staged.output_dir, name),
            "{name}"
        );
    }
}

#[test]
fn report_needs_earlier_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, cfg) = small(tmp.path(), 0.0);
    let err = pipeline::run_report(&cfg).unwrap_err();
    assert!(matches!(err, Error::MissingArtifacts(_)));
    assert_eq!(err.exit_code(), 4);
}

#[test]
fn report_lists_one_threshold_per_scenario() {
    let tmp = tempfile::tempdir().unwrap();
    let (synth_cfg, cfg) = small(tmp.path(), 0.5);
    pipeline::run_synth(&synth_cfg).unwrap();
    pipeline::run_pipeline(&cfg).unwrap();
    let report: serde_json::Value = serde_json::from_slice(&read(&cfg.output_dir, "report.json")).unwrap();
    let thresholds = report["thresholds"].as_array().unwrap();
    assert_eq!(thresholds.len(), 4);
    for t in thresholds {
        assert!(t["theta_km"].as_f64().unwrap() > 0.0);
    }
    assert!(report["trace_checks"][0]["ok"].as_bool().unwrap());
    assert_eq!(report["n_slices"], 24);
    assert!(cfg.output_dir.join("trajectories_pc1.csv").exists());
}

#[test]
fn pooled_threshold_scope_gives_one_threshold() {
    let tmp = tempfile::tempdir().unwrap();
    let (synth_cfg, cfg) = small(tmp.path(), 0.0);
    pipeline::run_synth(&synth_cfg).unwrap();
    let cfg = PipelineConfig {
        threshold_scope: Scope::Pooled,
        pca_scope: Scope::PerScenario,
        emit_geojson: true,
        ..cfg
    };
    let (run, fitted) = pipeline::run_pipeline(&cfg).unwrap();
    assert_eq!(run.thresholds.len(), 1);
    assert_eq!(fitted.len(), 4);
    assert!(cfg.output_dir.join("eigvecs_hd2021.csv").exists());
    assert!(cfg.output_dir.join("eigvecs_wd2019.geojson").exists());
}

#[test]
fn selecting_a_missing_slice_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let (synth_cfg, cfg) = small(tmp.path(), 0.0);
    pipeline::run_synth(&synth_cfg).unwrap();
    let cfg = PipelineConfig {
        scenarios: Some(vec!["wd2019".into()]),
        hours: Some(vec![2, 23]),
        ..cfg
    };
    let err = pipeline::run_potential(&cfg).unwrap_err();
    assert!(matches!(err, Error::EmptySelection { hour: 23, .. }));
}

#[test]
fn selection_restricts_slices() {
    let tmp = tempfile::tempdir().unwrap();
    let (synth_cfg, cfg) = small(tmp.path(), 0.0);
    pipeline::run_synth(&synth_cfg).unwrap();
    let cfg = PipelineConfig {
        scenarios: Some(vec!["hd2019".into(), "wd2021".into()]),
        hours: Some(vec![1, 4]),
        ..cfg
    };
    let run = pipeline::run_potential(&cfg).unwrap();
    let labels: Vec<String> = run.fields.iter().map(|(l, _)| l.to_string()).collect();
    assert_eq!(labels, ["hd2019/01", "hd2019/04", "wd2021/01", "wd2021/04"]);
}

#[test]
fn config_file_round_trip() {
    let cfg = PipelineConfig::from_toml_str(
        "grid_path = \"g.csv\"\npercentile = 0.95\nweighting_mode = \"include_above_theta\"\n\
         solver_method = \"dense_eigen\"\npca_scope = \"per_scenario\"\nhours = [7, 8]\n",
    )
    .unwrap();
    assert_eq!(cfg.percentile, 0.95);
    assert_eq!(cfg.hours, Some(vec![7, 8]));
    assert!(matches!(
        PipelineConfig::from_toml_str("no_such_key = 1"),
        Err(Error::InvalidConfig(_))
    ));
    let bad = PipelineConfig {
        percentile: 1.5,
        ..PipelineConfig::default()
    };
    assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
}

#[test]
fn heavy_noise_on_thin_volume_underflows() {
    let spec = SynthSpec {
        base_volume: 1.0,
        noise_sd: 100.0,
        ..SynthSpec::lattice(5, 5)
    };
    let err = synth::generate(&spec).unwrap_err();
    assert!(matches!(err, Error::VolumeUnderflow { .. }));
}

#[test]
fn noiseless_synth_recovers_ground_truth() {
    let tmp = tempfile::tempdir().unwrap();
    let (synth_cfg, cfg) = small(tmp.path(), 0.0);
    pipeline::run_synth(&synth_cfg).unwrap();
    let (run, _) = pipeline::run_pipeline(&cfg).unwrap();
    let spec = synth_cfg.synth_spec();
    for (k, (label, field)) in run.fields.iter().enumerate() {
        let truth = spec.planted_potential(k / spec.n_hours, k % spec.n_hours);
        let scale = truth.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = field
            .s
            .iter()
            .zip(&truth)
            .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(err <= 1e-6 * scale, "{label}: {err} vs scale {scale}");
    }
}
