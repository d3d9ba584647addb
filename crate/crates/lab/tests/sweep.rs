use cellfree::sysmodel::SystemConfig;
use cellfree::train::TrainConfig;
use cellfree_lab::experiment::{ExperimentConfig, NetSettings, SweepVariable, NETWORK, WMMSE};
use cellfree_lab::records::read_metrics;
use cellfree_lab::run;

fn config(variable: SweepVariable, values: Vec<f64>, replications: usize) -> ExperimentConfig {
    ExperimentConfig {
        variable,
        values,
        replications,
        seed: 2024,
        eta: 0.05,
        system: SystemConfig::new(3, 3, 2),
        train: TrainConfig {
            epochs: 2,
            batch_size: 16,
            certify: false,
            eval_samples: Some(4),
            ..TrainConfig::default()
        },
        train_size: 32,
        test_size: 6,
        net: NetSettings {
            depth: 2,
            channels: 4,
            ..NetSettings::default()
        },
        wmmse_iterations: 5,
    }
}

#[test]
fn rerun_reproduces_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let c = config(SweepVariable::Lambda, vec![0.01, 0.1, 1.0], 1);
    let a = run(&c, &dir.path().join("a")).unwrap();
    let b = run(&c, &dir.path().join("b")).unwrap();
    assert_eq!(a, b);
    let bytes = |d: &str| std::fs::read(dir.path().join(d).join("metrics.csv")).unwrap();
    assert_eq!(bytes("a"), bytes("b"));
    assert_eq!(read_metrics(&dir.path().join("a/metrics.csv")).unwrap(), a);
    // 3 values, 1 replication, 2 methods
    assert_eq!(a.len(), 6);
    for name in ["config.json", "timings.csv", "rate.svg", "q_ave.svg"] {
        assert!(dir.path().join("a").join(name).exists(), "{name}");
    }
    assert!(run(&c, &dir.path().join("a")).is_err(), "existing run directory must not be reused");
}

#[test]
fn rows_respect_metric_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let rows = run(&config(SweepVariable::Eta, vec![0.0, 0.1], 2), dir.path()).unwrap();
    for r in &rows {
        assert!(r.q_ave >= 0.0 && r.q_ave <= r.aps as f64, "{r:?}");
        assert!(r.worst_case_rate >= 0.0);
        // the true channel lies inside the error ball
        assert!(r.worst_case_rate <= r.true_rate * (1.0 + 1e-6) + 1e-9, "{r:?}");
        if r.eta == 0.0 {
            assert!((r.worst_case_rate - r.true_rate).abs() <= 1e-6 * r.true_rate.max(1e-12), "{r:?}");
        }
        assert_eq!(r.mult_count.is_some(), r.method == NETWORK);
    }
}

#[test]
fn certified_rate_falls_with_error_level() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config(SweepVariable::Eta, vec![0.0, 0.1, 0.2], 3);
    c.train.epochs = 1;
    let rows = run(&c, dir.path()).unwrap();
    let summary = cellfree_lab::experiment::summarize(&rows);
    let wmmse = summary.iter().find(|s| s.method == WMMSE).unwrap();
    for w in wmmse.points.windows(2) {
        assert!(w[1].1 <= w[0].1, "{:?}", wmmse.points);
    }
}

#[test]
fn user_and_kernel_sweeps_change_the_cell() {
    let dir = tempfile::tempdir().unwrap();
    let rows = run(&config(SweepVariable::Users, vec![2.0, 4.0], 1), &dir.path().join("u")).unwrap();
    assert_eq!(rows.iter().map(|r| r.users).collect::<Vec<_>>(), vec![2, 2, 4, 4]);
    let rows = run(&config(SweepVariable::Kernel, vec![1.0, 3.0], 1), &dir.path().join("k")).unwrap();
    let counts: Vec<u64> = rows.iter().filter_map(|r| r.mult_count).collect();
    assert_eq!(counts.len(), 2);
    assert!(counts[0] < counts[1]);
}
