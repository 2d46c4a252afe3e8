use ope_core::harness::{parse_csv, run_replications, run_replications_with_threads, ExperimentConfig, Method};

const WINDY: &str = r#"
name = "windy_small"
domain = "rl"
master_seed = 7
replications = 6
methods = ["dm", "sis", "snsis", "dr", "reg", "emp", "oracle"]
sample_sizes = [30, 60]
behavior_alphas = [0.8]

[rl]
env = "windy"
horizon = 40
gamma = 1.0

[rl.q_learning]
episodes = 500
alpha = 0.5
epsilon = 0.1
max_steps = 300
seed = 1
"#;

const BANDIT: &str = r#"
name = "bandit_small"
domain = "bandit"
master_seed = 3
replications = 4
methods = ["dm1", "is", "snis", "dr", "reg", "emp", "oracle"]
behavior_alphas = [0.7, 0.0]

[bandit]
dataset = "synthetic:3:400"
dim = 6
q_folds = 2
"#;

#[test]
fn tables_do_not_depend_on_thread_count() {
    let cfg = ExperimentConfig::from_toml(WINDY).unwrap();
    let one = run_replications_with_threads(&cfg, 1).unwrap();
    let two = run_replications_with_threads(&cfg, 2).unwrap();
    assert_eq!(one.to_csv(), two.to_csv());
    assert_eq!(one.rows.len(), 2);
    assert_eq!(one.get(0, Method::Oracle), Some(0.0));
}

#[test]
fn csv_tables_round_trip() {
    let cfg = ExperimentConfig::from_toml(WINDY).unwrap();
    let table = run_replications(&cfg).unwrap();
    let parsed = parse_csv(&table.to_csv()).unwrap();
    assert_eq!(parsed.methods, table.methods);
    for (a, b) in parsed.rows.iter().zip(&table.rows) {
        assert_eq!(a.label, b.label);
        for (x, y) in a.rmse.iter().zip(&b.rmse) {
            match (x, y) {
                (Some(x), Some(y)) => assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0)),
                (None, None) => {}
                _ => panic!("missing entry mismatch"),
            }
        }
    }
}

#[test]
fn cross_fitted_bandit_runs_are_reproducible() {
    let cfg = ExperimentConfig::from_toml(BANDIT).unwrap();
    let a = run_replications(&cfg).unwrap();
    let b = run_replications(&cfg).unwrap();
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.metadata.iter().any(|(k, v)| k == "q_folds" && v == "2"));
    for row in 0..a.rows.len() {
        for m in [Method::Is, Method::Dr, Method::Reg] {
            assert!(a.get(row, m).is_some_and(f64::is_finite), "{m} row {row}");
        }
    }
}

#[test]
fn invalid_configs_are_rejected() {
    assert!(ExperimentConfig::from_toml(&WINDY.replace("replications = 6", "replications = 0")).is_err());
    assert!(ExperimentConfig::from_toml(&BANDIT.replace("q_folds = 2", "q_folds = 0")).is_err());
    assert!(ExperimentConfig::from_toml(&WINDY.replace("horizon = 40", "horizon = 40\nbogus = 1")).is_err());
}
