use std::fs;

use ssc_core::bench::{run_sweep, ModelSection, SweepConfig, SweepResult, SweepSection};
use ssc_core::lasso::LassoOptions;

fn config(trials: usize, omega: Vec<f64>) -> SweepConfig {
    SweepConfig {
        seed: 77,
        model: ModelSection { n: 2, d: 3, ambient_dim: 20, rho: 4.0, epsilon: 0.001 },
        sweep: SweepSection { omega, variants: vec!["zf".into(), "pzf".into()], trials },
        ..SweepConfig::default()
    }
}

fn rows_at(r: &SweepResult, omega: f64, trials: usize) -> String {
    SweepResult { rows: r.rows.iter().filter(|x| x.omega == omega && x.trial < trials).cloned().collect() }.to_csv()
}

#[test]
fn resuming_after_a_crash_reproduces_the_file() {
    let cfg = config(3, vec![0.0, 0.2, 0.4]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("out.csv");
    let opts = LassoOptions::default();
    let full = run_sweep(&cfg, &path, &opts).unwrap();
    assert_eq!(full.rows.len(), 3 * 2 * 3);
    let reference = fs::read(&path).unwrap();
    let text = String::from_utf8(reference.clone()).unwrap();
    for keep in [0, 1, 4, 7, 13, 19] {
        // keep a prefix of lines, the last one possibly torn mid-row
        let mut prefix: String = text.lines().take(keep).map(|l| format!("{l}\n")).collect();
        if keep == 13 {
            prefix.push_str("0.4,8,zf,0,12");
        }
        fs::write(&path, prefix).unwrap();
        run_sweep(&cfg, &path, &opts).unwrap();
        assert_eq!(fs::read(&path).unwrap(), reference, "resume from {keep} lines");
    }
}

#[test]
fn trial_count_does_not_change_existing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let opts = LassoOptions::default();
    let small = run_sweep(&config(2, vec![0.0, 0.2]), &dir.path().join("a.csv"), &opts).unwrap();
    let large = run_sweep(&config(3, vec![0.2, 0.0, 0.4]), &dir.path().join("b.csv"), &opts).unwrap();
    for omega in [0.0, 0.2] {
        assert_eq!(rows_at(&small, omega, 2), rows_at(&large, omega, 2));
    }
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("profile.toml");
    let cfg = config(4, vec![0.1, 0.3]);
    fs::write(&path, cfg.to_toml_string()).unwrap();
    let back = SweepConfig::load(&path).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.hash(), cfg.hash());
}
