use std::fs;

use fqte::data::{load_fused_dataset, write_fused_dataset, Schema};
use fqte::sim::{generate, DgpConfig};
use fqte::FqteError;

fn numbered() -> Schema {
    Schema::numbered(1, 3)
}

#[test]
fn simulated_csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ds = generate(&DgpConfig::new(500, 2000, 3)).dataset;
    let (v, a) = (dir.path().join("v.csv"), dir.path().join("a.csv"));
    write_fused_dataset(&ds, &v, &a, &numbered()).unwrap();
    let back = load_fused_dataset(&v, &a, &numbered()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.n(), 500);
    assert_eq!(back.big_n(), 2000);
    assert_eq!(back.nu(), 0.25);
}

#[test]
fn custom_column_names_and_extra_columns() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.csv");
    let a = dir.path().join("a.csv");
    fs::write(
        &v,
        "id,outcome,arm,age,smoker\n1,0.5,1,30,1\n2,1.5,0,40,0\n3,-0.5,1,35,0\n",
    )
    .unwrap();
    fs::write(&a, "arm,age,outcome,note\n0,50,2.0,a\n1,20,0.1,b\n").unwrap();
    let schema = Schema {
        y: "outcome".into(),
        t: "arm".into(),
        x: vec!["age".into()],
        s: vec!["smoker".into()],
    };
    let ds = load_fused_dataset(&v, &a, &schema).unwrap();
    assert_eq!(ds.n(), 3);
    assert_eq!(ds.big_n(), 5);
    assert_eq!(ds.validation()[2].s, Some(vec![0.0]));
    assert_eq!(ds.auxiliary()[0].x, vec![50.0]);
    assert_eq!(ds.auxiliary()[0].y, 2.0);
}

#[test]
fn non_binary_treatment_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.csv");
    let a = dir.path().join("a.csv");
    fs::write(
        &v,
        "y,t,x1,s1,s2,s3\n0.1,1,0,0,0,0\n0.2,2,0,0,0,0\n0.3,0,0,0,0,0\n",
    )
    .unwrap();
    fs::write(&a, "y,t,x1\n0.1,1,0\n0.2,0,0\n").unwrap();
    let err = load_fused_dataset(&v, &a, &numbered()).unwrap_err();
    assert!(
        matches!(err, FqteError::NonBinaryTreatment { row: 2, .. }),
        "{err}"
    );
    assert!(err.to_string().contains("non-binary treatment"));
}

#[test]
fn missing_and_forbidden_columns() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.csv");
    let a = dir.path().join("a.csv");
    fs::write(&v, "y,t,x1,s1,s2\n0.1,1,0,0,0\n0.3,0,0,0,0\n").unwrap();
    fs::write(&a, "y,t,x1\n0.1,1,0\n0.2,0,0\n").unwrap();
    let err = load_fused_dataset(&v, &a, &numbered()).unwrap_err();
    assert!(
        matches!(err, FqteError::MissingColumn { ref column, .. } if column == "s3"),
        "{err}"
    );

    fs::write(&v, "y,t,x1,s1,s2,s3\n0.1,1,0,0,0,0\n0.3,0,0,0,0,0\n").unwrap();
    fs::write(&a, "y,t,x1,s2\n0.1,1,0,4\n0.2,0,0,5\n").unwrap();
    let err = load_fused_dataset(&v, &a, &numbered()).unwrap_err();
    assert!(
        matches!(err, FqteError::UnexpectedColumn { ref column, .. } if column == "s2"),
        "{err}"
    );
}

#[test]
fn non_finite_cells_are_located() {
    let dir = tempfile::tempdir().unwrap();
    let v = dir.path().join("v.csv");
    let a = dir.path().join("a.csv");
    fs::write(&v, "y,t,x1,s1,s2,s3\n0.1,1,0,0,0,0\n0.3,0,0,0,0,0\n").unwrap();
    fs::write(&a, "y,t,x1\n0.1,1,0\nNaN,0,0\n").unwrap();
    let err = load_fused_dataset(&v, &a, &numbered()).unwrap_err();
    assert!(matches!(err, FqteError::NonFinite { row: 2, .. }), "{err}");
}

#[test]
fn missing_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = load_fused_dataset(
        dir.path().join("nope.csv"),
        dir.path().join("a.csv"),
        &numbered(),
    )
    .unwrap_err();
    assert_eq!(err.kind(), "io");
}
