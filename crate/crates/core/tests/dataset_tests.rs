use std::fs;
use std::io::Write;

use singulate::dataset::*;
use singulate::runner::{collect_dataset, CollectConfig, PolicyKind};
use singulate::Error;

fn samples() -> Vec<LabeledSample> {
    let c = CollectConfig::new(PolicyKind::Random, 6, vec![3], 5);
    let s = collect_dataset(&c, None).unwrap().samples;
    assert!(!s.is_empty());
    s
}

#[test]
fn round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.ndjson");
    let s = samples();
    write_dataset(&path, &s).unwrap();
    assert!(blob_path(&path).exists());
    let back = read_dataset(&path).unwrap();
    assert_eq!(back, s);
    assert_eq!(class_counts(&back), class_counts(&s));
}

#[test]
fn append_extends_the_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.ndjson");
    let s = samples();
    let (a, b) = s.split_at(s.len() / 2);
    write_dataset(&path, a).unwrap();
    let mut w = DatasetWriter::append(&path).unwrap();
    for x in b {
        w.write(x).unwrap();
    }
    assert_eq!(w.finish().unwrap(), b.len());
    assert_eq!(read_dataset(&path).unwrap(), s);
}

#[test]
fn missing_file_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(read_dataset(&dir.path().join("nope.ndjson")), Err(Error::Io { .. })));
}

#[test]
fn wrong_schema_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.ndjson");
    write_dataset(&path, &samples()[..1]).unwrap();
    let text = fs::read_to_string(&path).unwrap().replace(DATASET_SCHEMA, "singulate.dataset/9");
    fs::write(&path, text).unwrap();
    assert!(matches!(read_dataset(&path), Err(Error::Schema { .. })));
}

#[test]
fn malformed_line_reports_offset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.ndjson");
    let s = samples();
    write_dataset(&path, &s[..1]).unwrap();
    let first_len = fs::metadata(&path).unwrap().len();
    fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{not json\n").unwrap();
    match read_dataset(&path) {
        Err(Error::Format { detail, .. }) => assert!(detail.contains(&format!("byte offset {first_len}"))),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn truncated_blob_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.ndjson");
    write_dataset(&path, &samples()[..2]).unwrap();
    let bp = blob_path(&path);
    let bytes = fs::read(&bp).unwrap();
    fs::write(&bp, &bytes[..bytes.len() - 4]).unwrap();
    assert!(matches!(read_dataset(&path), Err(Error::Io { .. })));
    assert!(matches!(DatasetWriter::append(&path), Err(Error::Format { .. })));
}
