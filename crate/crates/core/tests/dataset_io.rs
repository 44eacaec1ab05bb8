use kanmat_core::dataset::{read_csv, CsvOptions, DatasetError, NaPolicy, TransformSpec};
use kanmat_core::synth::{generate, Experiment, SynthSpec};

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("exp.csv");
    let d = generate(&SynthSpec::new(Experiment::Heteroscedastic, 250, 8)).unwrap();
    d.write_csv(&path).unwrap();
    let (back, report) = read_csv(&path, CsvOptions::default()).unwrap();
    assert_eq!(report.dropped, 0);
    assert_eq!(back.columns(), d.columns());
}

#[test]
fn history_replay_reproduces_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let d = generate(&SynthSpec::new(Experiment::Nonlinear, 120, 2)).unwrap();
    let ops = TransformSpec::parse_ops("lag:x1:3;subtract_mean:x2;drop:x3").unwrap();
    let out = d.replay(&ops).unwrap();
    let path = dir.path().join("out.csv");
    out.write_csv(&path).unwrap();
    let history = serde_json::to_string(out.history()).unwrap();
    let replayed: Vec<TransformSpec> = serde_json::from_str(&history).unwrap();
    let again = d.replay(&replayed).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), again.to_csv_string());
    assert_eq!(again.names(), vec!["x1", "x2", "x1_lag3"]);
    assert_eq!(again.n_rows(), 117);
}

#[test]
fn missing_values_follow_policy() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("na.csv");
    std::fs::write(&path, "a,b\n1,2\nNA,3\n4,5\n").unwrap();
    assert!(matches!(
        read_csv(&path, CsvOptions::default()),
        Err(DatasetError::MissingValue { row: 2, .. })
    ));
    let opts = CsvOptions {
        na_policy: NaPolicy::DropRows,
        ..CsvOptions::default()
    };
    let (d, report) = read_csv(&path, opts).unwrap();
    assert_eq!((d.n_rows(), report.dropped), (2, 1));
}
