use std::io::Write as _;

use proptest::prelude::*;
use sketchreg_cli::{ingest_csv, ingest_reader, write_bundle_csv, CliError, ColumnMapping, IngestError};

fn mapping(response: &str, regressors: &[&str], instruments: &[&str], intercept: bool) -> ColumnMapping {
    ColumnMapping {
        response: response.into(),
        regressors: regressors.iter().map(|s| s.to_string()).collect(),
        instruments: instruments.iter().map(|s| s.to_string()).collect(),
        intercept,
    }
}

#[test]
fn three_row_fixture_from_disk() {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    write!(f, "y,x1\n1,2\n2,3\n4,5\n").unwrap();
    let plain = ingest_csv(f.path(), &mapping("y", &[], &[], false)).unwrap();
    assert_eq!((plain.data.n(), plain.data.p()), (3, 1));
    let with = ingest_csv(f.path(), &mapping("y", &[], &[], true)).unwrap();
    assert_eq!((with.data.n(), with.data.p()), (3, 2));
    assert_eq!(with.data.x.column(0), vec![1.0; 3]);
}

#[test]
fn blank_cell_names_row_and_column() {
    let err = ingest_reader("y,x1,x2\n1,2,3\n4,,6\n".as_bytes(), &mapping("y", &[], &[], false)).unwrap_err();
    match err {
        CliError::Ingest(IngestError::ParseError { row, col, .. }) => assert_eq!((row, col), (2, 2)),
        e => panic!("unexpected {e:?}"),
    }
    assert_eq!(CliError::Ingest(IngestError::MissingColumn("z".into())).exit_code(), 2);
}

#[test]
fn missing_and_non_numeric_columns() {
    let e = ingest_reader("y,x1\n1,2\n".as_bytes(), &mapping("w", &[], &[], false)).unwrap_err();
    assert!(matches!(e, CliError::Ingest(IngestError::MissingColumn(ref c)) if c == "w"));
    let e = ingest_reader("y,x1\n1,abc\n".as_bytes(), &mapping("y", &[], &[], false)).unwrap_err();
    assert!(matches!(e, CliError::Ingest(IngestError::NonNumericCell { row: 1, col: 2, .. })));
}

/// Wage equation with schooling instrumented by quarter of birth
/// interacted with year of birth.
fn ak_csv(n: usize) -> String {
    let mut header = vec!["wage".to_string(), "edu".to_string()];
    header.extend((1..10).map(|y| format!("yob{y}")));
    for q in 1..4 {
        header.extend((0..10).map(|y| format!("q{q}y{y}")));
    }
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..n {
        let yob = i % 10;
        let qob = (i / 10) % 4;
        let edu = 12.0 + 0.1 * qob as f64 + ((i * 7919) % 13) as f64 * 0.3;
        let wage = 5.0 + 0.08 * edu + ((i * 104_729) % 17) as f64 * 0.01;
        let mut row = vec![wage.to_string(), edu.to_string()];
        row.extend((1..10).map(|y| if yob == y { "1" } else { "0" }.to_string()));
        for q in 1..4 {
            row.extend((0..10).map(|y| if yob == y && qob == q { "1" } else { "0" }.to_string()));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[test]
fn ak_style_schema() {
    let yob: Vec<String> = (1..10).map(|y| format!("yob{y}")).collect();
    let inter: Vec<String> = (1..4).flat_map(|q| (0..10).map(move |y| format!("q{q}y{y}"))).collect();
    let mut regs: Vec<&str> = vec!["edu"];
    regs.extend(yob.iter().map(String::as_str));
    let mut inst: Vec<&str> = yob.iter().map(String::as_str).collect();
    inst.extend(inter.iter().map(String::as_str));
    let b = ingest_reader(ak_csv(800).as_bytes(), &mapping("wage", &regs, &inst, true)).unwrap();
    assert_eq!(b.data.p(), 11);
    assert_eq!(b.data.q(), Some(40));
    assert_eq!(b.data.n(), 800);
    assert_eq!(b.regressors[0], "(intercept)");
}

#[test]
fn round_trip_with_instruments() {
    let text = "y,x,z1,z2\n1.5,2,0.1,3\n-2,1e-3,0.2,4\n3.25,7,0.3,-5\n0,1,1,1\n";
    let m = mapping("y", &["x"], &["z1", "z2"], true);
    let a = ingest_reader(text.as_bytes(), &m).unwrap();
    let mut buf = Vec::new();
    write_bundle_csv(&mut buf, &a, true).unwrap();
    let b = ingest_reader(buf.as_slice(), &m).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #[test]
    fn round_trip_is_identity(rows in prop::collection::vec(prop::collection::vec(-1e12f64..1e12, 3), 1..30), intercept in any::<bool>()) {
        let mut text = String::from("y,a,b\n");
        for r in &rows {
            text.push_str(&format!("{},{},{}\n", r[0], r[1], r[2]));
        }
        let m = mapping("y", &[], &[], intercept);
        let first = ingest_reader(text.as_bytes(), &m).unwrap();
        let mut buf = Vec::new();
        write_bundle_csv(&mut buf, &first, true).unwrap();
        let second = ingest_reader(buf.as_slice(), &m).unwrap();
        prop_assert_eq!(first, second);
    }
}
