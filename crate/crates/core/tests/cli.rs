use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use shor_optics::elements::{build_dft_circuit, build_mef_circuit, CircuitPath};
use shor_optics::modespace::{BasisMap, ShorProblem};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_shor-optics"));
    c.env_remove("SHOR_OPTICS_OUT");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(ext))
        .collect();
    v.sort();
    v
}

#[test]
fn factor_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let ok = run(&["factor", "--N", "15", "--a", "11", "--out", out]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("15 = 3 × 5"));

    let bad_base = run(&["factor", "--N", "15", "--a", "14", "--out", out]);
    assert_eq!(bad_base.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_base.stderr).contains("bad base"));

    let not_coprime = run(&["factor", "--N", "15", "--a", "5", "--out", out]);
    assert_eq!(not_coprime.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&not_coprime.stderr).contains("not coprime"));

    assert_eq!(run(&["factor", "--mode", "quantum"]).status.code(), Some(1));
    assert_eq!(run(&["factor", "--resolution", "0", "--out", out]).status.code(), Some(1));
    assert_eq!(run(&["factor", "--a", "7", "--n", "4", "--mode", "circuit", "--out", out]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn generalized_factor_run() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["factor", "--a", "7", "--n", "4", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("factor-N15-a7-n4-abstract.json")).unwrap()).unwrap();
    assert_eq!(report["readout"]["r"], 4);
    assert_eq!(report["oracle"]["passed"], true);
}

#[test]
fn dump_circuits_round_trip() {
    let mef = run(&["dump-circuit", "mef"]);
    assert_eq!(mef.status.code(), Some(0));
    let parsed = CircuitPath::from_json(&String::from_utf8(mef.stdout).unwrap()).unwrap();
    let built = build_mef_circuit(&ShorProblem::compiled()).unwrap();
    assert_eq!(parsed, built);
    assert_eq!(parsed.census(), built.census());

    let dft = run(&["dump-circuit", "dft"]);
    let parsed = CircuitPath::from_json(&String::from_utf8(dft.stdout).unwrap()).unwrap();
    assert_eq!(parsed, build_dft_circuit(&BasisMap::compiled()).unwrap());
    assert_eq!(parsed.census()["OamSorter"], 2);
    assert_eq!(parsed.census()["Sagnac"], 4);
}

#[test]
fn figures_write_panels_and_sidecars() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin().args(["figures", "--which", "fig5", "--resolution", "64"]).env("SHOR_OPTICS_OUT", dir.path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(files_with_ext(dir.path(), ".pgm"), ["fig5a.pgm", "fig5b.pgm", "fig5c.pgm", "fig5d.pgm"]);
    let pgm = fs::read(dir.path().join("fig5a.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n64 64\n65535\n"));
    assert_eq!(pgm.len(), b"P5\n64 64\n65535\n".len() + 2 * 64 * 64);

    let dir7 = tempfile::tempdir().unwrap();
    run(&["figures", "--which", "fig7", "--resolution", "64", "--out", dir7.path().to_str().unwrap()]);
    assert_eq!(files_with_ext(dir7.path(), ".pgm").len(), 2);

    assert_eq!(run(&["figures", "--which", "fig9"]).status.code(), Some(1));
}

#[test]
fn all_figures_at_low_resolution_keep_signatures() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["figures", "--which", "all", "--resolution", "64", "--format", "csv", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(files_with_ext(dir.path(), ".csv").len(), 10);
    let sidecar = |id: &str| -> serde_json::Value {
        serde_json::from_slice(&fs::read(dir.path().join(format!("{id}.json"))).unwrap()).unwrap()
    };
    let contrast = |id: &str| sidecar(id)["signature"]["center_contrast"].as_f64().unwrap();
    assert!(contrast("fig5a") > 0.1 && contrast("fig5c") > 0.1);
    assert!(contrast("fig5b") < -0.1 && contrast("fig5d") < -0.1);
    assert_ne!(sidecar("fig5a")["signature"]["symmetry_axis"], sidecar("fig5c")["signature"]["symmetry_axis"]);
    let csv = fs::read_to_string(dir.path().join("fig6b.csv")).unwrap();
    assert_eq!(csv.lines().count(), 64);
    assert_eq!(csv.lines().next().unwrap().split(',').count(), 64);
}
