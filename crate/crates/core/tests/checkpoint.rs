mod common;

use common::dataset;
use flowdev::flow::Variant;
use flowdev::train::{train, Checkpoint, TrainConfig};
use flowdev::FlowError;

#[test]
fn trained_checkpoint_round_trips() {
    let ds = dataset(48, Variant::Full, 51);
    let c = TrainConfig::default();
    let out = train(&ds, &c, None).unwrap();
    let ckpt = out.state.to_checkpoint(&c);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    ckpt.write(&path).unwrap();
    let back = Checkpoint::read(&path).unwrap();
    assert_eq!(back, ckpt);
    assert_eq!(std::fs::read(&path).unwrap(), back.to_bytes());
    assert_eq!(back.config_hash, c.hash());
}

#[test]
fn damaged_files_fail_to_load() {
    let ds = dataset(16, Variant::Answerable, 52);
    let c = TrainConfig::default();
    let bytes = train(&ds, &c, None).unwrap().state.to_checkpoint(&c).to_bytes();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.bin");
    let mut bad = bytes.clone();
    bad[..8].copy_from_slice(b"NOTACKPT");
    std::fs::write(&path, &bad).unwrap();
    assert!(matches!(Checkpoint::read(&path), Err(FlowError::Checkpoint(_))));
    std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
    assert!(matches!(Checkpoint::read(&path), Err(FlowError::Checkpoint(_))));
    assert!(Checkpoint::read(&dir.path().join("missing.bin")).is_err());
}
