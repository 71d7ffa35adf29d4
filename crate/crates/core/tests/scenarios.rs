use std::io::BufReader;

use cvqkd_sim::pat::read_residual_csv;
use cvqkd_sim::scenario::{
    bundled, emit_report, load_scenario, parse_scenario, read_blocks_csv, run_scenario, RunOptions, ScenarioConfig,
    ScenarioError, BUNDLED,
};

/// One half-second block of 20k simulated pulses.
fn short() -> ScenarioConfig {
    parse_scenario(
        "name = \"short\"\nduration_s = 1.0\nsim_pulses_per_block = 20000\n\
         [session]\nblock_size = 5000000\nbeta = 0.98\n\
         [receiver]\ndetection_efficiency = 0.7\n\
         [channel]\nloss_db = 1.0\nexcess_noise = 0.01\n\
         [sync]\namp_threshold = 10.0\nsync_amp = 40.0\n",
        "short",
    )
    .unwrap()
}

fn emitted_bytes(cfg: &ScenarioConfig, opts: RunOptions) -> Vec<Vec<u8>> {
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&run_scenario(cfg, opts), dir.path()).unwrap();
    [files.blocks, files.pat, files.summary]
        .iter()
        .map(|f| std::fs::read(f).unwrap())
        .collect()
}

#[test]
fn bundled_files_load_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    for (file, text) in BUNDLED {
        let path = dir.path().join(file);
        std::fs::write(&path, text).unwrap();
        let cfg = load_scenario(&path).unwrap();
        assert_eq!(Some(cfg), bundled(file));
    }
}

#[test]
fn missing_file_is_io_error() {
    let err = load_scenario("/nonexistent/none.scenario").unwrap_err();
    assert!(matches!(err, ScenarioError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/none.scenario"));
}

#[test]
fn short_run_produces_blocks() {
    let report = run_scenario(&short(), RunOptions::default());
    assert_eq!(report.blocks.len(), 2);
    assert_eq!(report.stride, 250);
    assert_eq!(report.counters.blocks_attempted, 2);
    assert_eq!(report.counters.keys_confirmed, 2);
    let mean = report.blocks.iter().map(|b| b.key_rate_bps).sum::<f64>() / 2.0;
    assert_eq!(report.mean_key_rate_bps, mean);
    assert!(mean > 0.0);
    let t = 10f64.powf(-0.1);
    for b in &report.blocks {
        assert!((b.t_est - t).abs() < 0.05, "{b:?}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = short();
    let a = emitted_bytes(&cfg, RunOptions::default());
    let b = emitted_bytes(&cfg, RunOptions::default());
    assert_eq!(a, b);
    let c = emitted_bytes(
        &cfg,
        RunOptions {
            seed: Some(99),
            exact_counts: false,
        },
    );
    assert_ne!(a[0], c[0]);
}

#[test]
fn reports_re_parse_identically() {
    let report = run_scenario(&short(), RunOptions::default());
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    let blocks = read_blocks_csv(BufReader::new(std::fs::File::open(&files.blocks).unwrap())).unwrap();
    assert_eq!(blocks, report.blocks);
    let pat = read_residual_csv(BufReader::new(std::fs::File::open(&files.pat).unwrap())).unwrap();
    assert_eq!(pat, report.pat_samples);
}

#[test]
fn zero_blocks_still_summarized() {
    let cfg = ScenarioConfig {
        duration_s: 0.2,
        ..short()
    };
    let report = run_scenario(&cfg, RunOptions::default());
    assert!(report.blocks.is_empty());
    assert_eq!(report.mean_key_rate_bps, 0.0);
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&report, dir.path()).unwrap();
    let summary = std::fs::read_to_string(files.summary).unwrap();
    assert!(summary.contains("blocks = 0\n"));
    let csv = std::fs::read_to_string(files.blocks).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn km_summary_carries_reference() {
    let cfg = ScenarioConfig {
        duration_s: 0.5,
        ..bundled("km_1p2").unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&run_scenario(&cfg, RunOptions::default()), dir.path()).unwrap();
    assert!(files.summary.ends_with("km_1p2_summary.txt"));
    let summary = std::fs::read_to_string(files.summary).unwrap();
    assert!(summary.contains("paper_measured_key_rate_kbps = 2.76\n"));
    assert!(summary.contains("not reproduced"));
    assert!(!summary.contains("reference_discrepancy"));
}

#[test]
fn emit_into_file_path_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("taken");
    std::fs::write(&blocker, b"x").unwrap();
    let report = run_scenario(
        &ScenarioConfig {
            duration_s: 0.1,
            ..short()
        },
        RunOptions::default(),
    );
    let err = emit_report(&report, &blocker).unwrap_err();
    assert!(err.to_string().contains("taken"), "{err}");
}

#[test]
fn motion_geometry_sets_slew() {
    let cfg = bundled("motion_1mps").unwrap();
    let pat = cfg.effective_pat();
    let range = (100.0f64 * 100.0 + 25.0 * 25.0).sqrt();
    assert!((pat.disturbance.slew_rate_urad_s - 1e6 / range).abs() < 1e-9);
    assert_eq!(pat.disturbance.slew_duration_s, 10.0);
    assert!(!cfg.is_fixed_noise());
    assert!(bundled("hover_25m").unwrap().is_fixed_noise());
}

#[test]
fn disabled_pat_means_perfect_pointing() {
    let mut cfg = short();
    cfg.pat.enabled = false;
    let report = run_scenario(&cfg, RunOptions::default());
    assert_eq!(report.blocks.len(), 2);
    assert!(report.pat_stats.is_none());
    assert_eq!(report.link_time_s, Some(0.0));
}
