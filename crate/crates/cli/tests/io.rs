mod common;

use capforge::checkpoint;
use capforge::csv_io::{load_capacity_csv, load_data_dir};
use capforge_core::data::{build_windows, loocv_split};
use capforge_core::model::ModelConfig;
use capforge_core::training::{train_model, TrainSettings};
use common::{synthetic_capacities, synthetic_data_dir, write_csv};

#[test]
fn values_survive_the_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let caps = synthetic_capacities(80, 3);
    let path = write_csv(dir.path(), "B0042", &caps);
    let s = load_capacity_csv(&path).unwrap();
    assert_eq!(s.capacities(), caps.as_slice());
    assert_eq!(build_windows(&s, 36).unwrap().len(), 80 - 36);
}

#[test]
fn loaded_directory_feeds_the_split() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_data_dir(dir.path(), 4, 50);
    let series = load_data_dir(dir.path()).unwrap();
    let split = loocv_split(&series, "B0005", 36).unwrap();
    assert_eq!(split.spec.train_battery_ids, ["B0006", "B0007", "B0018"]);
    assert_eq!(split.test.len(), 14);
    assert_eq!(split.train.len(), 17 + 20 + 23);
}

#[test]
fn trained_checkpoint_round_trips_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    synthetic_data_dir(dir.path(), 2, 45);
    let series = load_data_dir(dir.path()).unwrap();
    let split = loocv_split(&series, "B0006", 36).unwrap();
    let settings = TrainSettings { epochs: 2, ..Default::default() };
    let trained = train_model(&ModelConfig::default(), &settings, &split.train, None, 5).unwrap();
    let path = dir.path().join("m.json");
    checkpoint::save(&path, &trained.model).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.checksum(), trained.model.checksum());
    for (s, _) in split.test.iter().zip(0..3) {
        let a = trained.model.predict_one(&s.window).unwrap();
        let b = back.predict_one(&s.window).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
