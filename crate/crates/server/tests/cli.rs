use std::process::Command;

fn medico(dir: &std::path::Path) -> Command {
    let mut command = Command::new(env!("CARGO_BIN_EXE_medico"));
    command.env("MEDICO_DATADIR", dir.join("data")).env("RUST_LOG", "warn");
    command
}

#[test]
fn demo_script_matches_reference() {
    let dir = tempfile::tempdir().unwrap();
    let output = medico(dir.path()).arg("demo-script").output().unwrap();
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let stdout = String::from_utf8(output.stdout).unwrap();
    assert_eq!(stdout, medico_core::demo::EXPECTED_TRANSCRIPT);
}

#[test]
fn ingest_then_query() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    let output = medico(dir.path()).arg("ingest").arg(&empty).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&output.stdout).contains("files 0 accepted 0"));

    let fixtures = dir.path().join("dicom");
    medico_core::demo::write_cohort_fixtures(&fixtures).unwrap();
    let output = medico(dir.path()).arg("ingest").arg(&fixtures).output().unwrap();
    assert_eq!(output.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&output.stdout).contains("patients 4"));

    let query = dir.path().join("names.rq");
    std::fs::write(
        &query,
        "PREFIX medico: <urn:medico:>\nSELECT ?n WHERE { ?p medico:patientName ?n }",
    )
    .unwrap();
    let output = medico(dir.path()).arg("query").arg(&query).output().unwrap();
    assert_eq!(output.status.code(), Some(0), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(String::from_utf8_lossy(&output.stdout).contains("Maier^Peter"));
}

#[test]
fn failures_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let query = dir.path().join("bad.rq");
    std::fs::write(&query, "SELECT ?x WHERE { ?x <urn:p> ?y } ORDER BY ?x").unwrap();
    let output = medico(dir.path()).arg("query").arg(&query).output().unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("unsupported"));

    let output = medico(dir.path()).arg("frobnicate").output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    let output = medico(dir.path()).env("MEDICO_LAMBDA", "3").arg("demo-script").output().unwrap();
    assert_eq!(output.status.code(), Some(1));
}
