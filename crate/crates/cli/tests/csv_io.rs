use std::fs;

use gpe_cli::csv_io::{load_csv, write_csv, CsvError};

fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = "y,x1,x2\n1,0.5,2\n2,1.5,-1\n3,2.5,0.25\n4,3.0,7\n";

#[test]
fn loads_response_and_features() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "d.csv", SMALL);
    let d = load_csv(&path, "y", None).unwrap();
    assert_eq!((d.n(), d.p()), (4, 2));
    assert_eq!(d.y(), &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(d.column_names(), &["x1".to_string(), "x2".to_string()]);
    assert_eq!(d.x().col(1), &[2.0, -1.0, 0.25, 7.0]);

    let only = load_csv(&path, "x2", Some(&["x1".to_string()])).unwrap();
    assert_eq!(only.p(), 1);
    assert_eq!(only.y(), &[2.0, -1.0, 0.25, 7.0]);
}

#[test]
fn missing_response_is_column_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "d.csv", SMALL);
    let err = load_csv(&path, "z", None).unwrap_err();
    assert!(matches!(err, CsvError::ColumnNotFound(ref c) if c == "z"));
    assert!(err.to_string().contains("column not found"));
    let err = load_csv(&path, "y", Some(&["x9".to_string()])).unwrap_err();
    assert!(matches!(err, CsvError::ColumnNotFound(_)));
}

#[test]
fn bad_cell_names_row_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(&dir, "d.csv", "y,x1,x2\n1,0.5,2\n2,abc,-1\n3,2.5,0.25\n4,3.0,7\n");
    let err = load_csv(&path, "y", None).unwrap_err();
    match &err {
        CsvError::BadCell { row, column, value } => {
            assert_eq!(*row, 2);
            assert_eq!(column, "x1");
            assert_eq!(value, "abc");
        }
        other => panic!("unexpected {other:?}"),
    }
    let msg = err.to_string();
    assert!(msg.contains("row 2") && msg.contains("x1"), "{msg}");
}

#[test]
fn rejects_missing_cells_non_finite_and_short_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty_cell = write(&dir, "a.csv", "y,x1\n1,2\n2,\n3,4\n");
    assert!(matches!(load_csv(&empty_cell, "y", None), Err(CsvError::BadCell { row: 2, .. })));
    let inf = write(&dir, "b.csv", "y,x1\n1,2\n2,inf\n3,4\n");
    assert!(matches!(load_csv(&inf, "y", None), Err(CsvError::BadCell { row: 2, .. })));
    let ragged = write(&dir, "c.csv", "y,x1\n1,2\n2\n3,4\n");
    assert!(matches!(load_csv(&ragged, "y", None), Err(CsvError::RaggedRow { row: 2, .. })));
    let short = write(&dir, "d.csv", "y,x1\n1,2\n2,3\n");
    assert!(matches!(load_csv(&short, "y", None), Err(CsvError::Data(_))));
    let dup = write(&dir, "e.csv", "y,x1,x1\n1,2,3\n2,3,4\n3,4,6\n");
    assert!(matches!(load_csv(&dup, "y", None), Err(CsvError::DuplicateColumn(_))));
    assert!(matches!(load_csv(&dir.path().join("nope.csv"), "y", None), Err(CsvError::Open { .. })));
}

#[test]
fn write_and_reload_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = String::from("y,a,b\n");
    let mut state = 0x2545_f491_4f6c_dd1d_u64;
    for _ in 0..25 {
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2e3 - 1e3
        };
        body.push_str(&format!("{:?},{:?},{:?}\n", next(), next() / 7.0, next() * 1e-9));
    }
    let src = write(&dir, "src.csv", &body);
    let original = load_csv(&src, "y", None).unwrap();
    let dst = dir.path().join("dst.csv");
    write_csv(&dst, &original, "y").unwrap();
    let reloaded = load_csv(&dst, "y", None).unwrap();
    assert_eq!(original, reloaded);
}
