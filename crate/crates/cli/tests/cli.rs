use std::path::PathBuf;
use std::process::{Command, Output};

fn scene(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenes")
        .join(name)
        .to_str()
        .unwrap()
        .to_owned()
}

fn triple() -> String {
    scene("finite_horizon_triple.json")
}

fn tdb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdb")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn valid_scene_reports_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("report.csv");
    let o = tdb(&["validate-scene", "--scene", &triple(), "--scenario", "drift", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("admissible, max step distance"));
    let report = std::fs::read_to_string(&csv).unwrap();
    assert!(report.lines().any(|l| l.starts_with("tau_min,")));
    assert!(report.lines().any(|l| l == "admissible,true"));
}

#[test]
fn overlapping_disks_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("overlap.json");
    std::fs::write(
        &path,
        r#"{"disks":[{"center":[0.2,0.2],"radius":0.2,"marker_angle":0},
                     {"center":[0.45,0.2],"radius":0.2,"marker_angle":0}],
            "horizon":{"t":2,"phi":0.05},"beta":0.005}"#,
    )
    .unwrap();
    let o = tdb(&["validate-scene", "--scene", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("OverlappingScatterers"));
}

#[test]
fn oversized_drift_step_exits_three_with_index() {
    // each disk moves about 0.0058 per step, more than beta = 0.005
    let o = tdb(&["validate-scene", "--scene", &triple(), "--scenario", "drift", "--eps", "0.01"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("NotAdmissible") && err.contains("step 1"), "{err}");
}

#[test]
fn open_corridors_exit_four() {
    let o = tdb(&["validate-scene", "--scene", &scene("finite_horizon_two_disks.json")]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn usage_and_parse_errors_exit_one() {
    assert_eq!(tdb(&["memory-loss", "--bogus"]).status.code(), Some(1));
    assert_eq!(tdb(&["coupling-recursion", "--zeta", "1.5"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{").unwrap();
    let o = tdb(&["validate-scene", "--scene", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ParseError"));
}

#[test]
fn same_manifest_gives_identical_csv() {
    let args = [
        "memory-loss", "--scene", &triple(), "--scenario", "drift", "--n-max", "3", "--particles", "20000", "--seed", "9",
    ];
    let (a, b) = (tdb(&args), tdb(&args));
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    let out = stdout(&a);
    let hash = out.lines().find_map(|l| l.strip_prefix("# manifest: ")).unwrap();
    assert_eq!(hash.len(), 64);
    assert!(out.contains("n,estimate_mu1,estimate_mu2,delta,stderr"));
    assert!(out.contains("# fit,"));

    let other = tdb(&[
        "memory-loss", "--scene", &triple(), "--scenario", "drift", "--n-max", "3", "--particles", "20000", "--seed", "10",
    ]);
    assert_ne!(stdout(&other).lines().nth(2), out.lines().nth(2));
}

#[test]
fn equal_densities_give_zero_delta() {
    let o = tdb(&[
        "memory-loss", "--scene", &triple(), "--density-amplitude", "0", "--n-max", "4", "--particles", "20000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = data_rows(&stdout(&o));
    assert_eq!(rows.len(), 5);
    for r in rows {
        let (delta, se): (f64, f64) = (r[3].parse().unwrap(), r[4].parse().unwrap());
        assert!(delta.abs() <= se, "{r:?}");
    }
}

#[test]
fn audit_on_shipped_scene_has_no_cone_violations() {
    let o = tdb(&["tangent-audit", "--scene", &triple(), "--samples", "20000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l == "cone_violations,0"));
    assert!(out.lines().any(|l| l == "stable_cone_violations,0"));
}

#[test]
fn coupling_csv_has_exact_second_majorant() {
    let o = tdb(&["coupling-recursion", "--k-max", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[1][2], "0.9");
    assert!(out.contains("# delta,37"));
}

#[test]
fn svg_plots_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("growth.csv");
    let svg = dir.path().join("growth.svg");
    let o = tdb(&[
        "curve-growth",
        "--scene",
        &triple(),
        "--n",
        "3",
        "--samples",
        "20",
        "--out",
        csv.to_str().unwrap(),
        "--svg",
        svg.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("# tdb "));
}
