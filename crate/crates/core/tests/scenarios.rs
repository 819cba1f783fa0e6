use std::path::Path;

use phekf::harness::scenario::{load_scenario, DataSource, ScenarioError};
use phekf::harness::trajectory::write_trajectory;
use phekf::protocol1::run_protocol1;
use phekf::run::prepare_data;

fn demo_path() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios/demo.toml")
}

#[test]
fn shipped_demo_loads() {
    let s = load_scenario(&demo_path()).unwrap();
    assert_eq!((s.n(), s.p(), s.sensor_count()), (6, 3, 4));
    assert_eq!(s.groups_or_singletons(), vec![vec![0, 2], vec![1, 3]]);
    assert_eq!((s.steps, s.key_bits, s.frac_bits), (50, 2048, 40));
    assert_eq!(s, phekf::harness::cli::demo_scenario());
}

#[test]
fn data_path_is_relative_to_the_scenario_file() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = load_scenario(&demo_path()).unwrap();
    s.steps = 2;
    s.key_bits = 256;
    let traj = prepare_data(&s).unwrap();
    std::fs::create_dir(dir.path().join("data")).unwrap();
    write_trajectory(std::fs::File::create(dir.path().join("data/m.csv")).unwrap(), &traj, 0.01).unwrap();

    s.data = DataSource::Csv("data/m.csv".into());
    let path = dir.path().join("s.toml");
    std::fs::write(&path, s.to_toml()).unwrap();
    let loaded = load_scenario(&path).unwrap();
    assert_eq!(loaded.data, DataSource::Csv(dir.path().join("data/m.csv")));
    let run = run_protocol1(&loaded).unwrap();
    assert_eq!(run.estimates.len(), 2);
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_scenario(Path::new("/nonexistent/scenario.toml")).unwrap_err();
    assert!(matches!(err, ScenarioError::Io { .. }));
    assert!(err.to_string().contains("/nonexistent/scenario.toml"));
}

#[test]
fn bad_sensor_matrix_names_its_place() {
    let text = std::fs::read_to_string(demo_path()).unwrap();
    let broken = text.replacen("R = [[0.0004, 0.0, 0.0], [0.0, 0.0004, 0.0], [0.0, 0.0, 0.0004]]", "R = [[0.0004, 0.0], [0.0, 0.0004]]", 1);
    let err = phekf::harness::scenario::parse_scenario(&broken).unwrap_err();
    assert!(err.to_string().contains("sensors[0].R"), "{err}");
}
