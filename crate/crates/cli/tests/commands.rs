use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sphflow_core::evalkit;

fn sphflow(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphflow"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn usage_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(sphflow(tmp.path(), &[]).status.code(), Some(2));
    assert_eq!(sphflow(tmp.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(sphflow(tmp.path(), &["--hitl-cap", "0", "eval", "tasks"]).status.code(), Some(2));
    assert_eq!(sphflow(tmp.path(), &["--planner", "carrier-pigeon", "session", "repl", "--text", "x"]).status.code(), Some(2));
    let o = sphflow(tmp.path(), &["analyze", "no_such_tool", "--run", "."]);
    assert_eq!(o.status.code(), Some(2));
    let o = sphflow(tmp.path(), &["eval", "tasks", "--in", "/definitely/missing.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn emit_validate_and_diff() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sphflow(tmp.path(), &["case", "emit", "C2", "--name", "c2"]);
    assert!(o.status.success(), "{o:?}");
    let doc = tmp.path().join("c2.xml");
    let o = sphflow(tmp.path(), &["case", "validate", doc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = sphflow(tmp.path(), &["case", "diff", "C2", doc.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    let broken = tmp.path().join("broken.xml");
    fs::write(&broken, "<case dim=\"2\"><numerics dp=\"0.02\"></case>").unwrap();
    let o = sphflow(tmp.path(), &["case", "validate", broken.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).starts_with("F5"), "{}", stdout(&o));

    let moved = tmp.path().join("moved.xml");
    fs::write(&moved, fs::read_to_string(&doc).unwrap().replacen("<size x=\"", "<size x=\"9", 1)).unwrap();
    let o = sphflow(tmp.path(), &["case", "diff", "C2", moved.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn check_reports_thin_wall() {
    let tmp = tempfile::tempdir().unwrap();
    sphflow(tmp.path(), &["case", "emit", "C1", "--name", "c1"]);
    let doc = fs::read_to_string(tmp.path().join("c1.xml")).unwrap();
    let thin = tmp.path().join("thin.xml");
    fs::write(&thin, doc.replacen("layers=\"4\"", "layers=\"1\"", 1)).unwrap();

    let o = sphflow(tmp.path(), &["check", thin.to_str().unwrap(), "--reference", "C1"]);
    assert_eq!(o.status.code(), Some(1));
    let text = stdout(&o);
    assert!(text.lines().any(|l| l.starts_with("F3 ")), "{text}");
    assert!(tmp.path().join("thin/validation.json").is_file());

    let o = sphflow(tmp.path(), &["check", "C1", "--reference", "C1"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
}

#[test]
fn gen_writes_particles_and_preview() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sphflow(tmp.path(), &["gen", "hydrostatic"]);
    assert!(o.status.success(), "{o:?}");
    let dir = tmp.path().join("hydrostatic");
    for f in ["particles.csv", "particles.vtk", "preview.svg"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn run_then_mass_flux() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sphflow(tmp.path(), &["run", "C1", "--name", "short", "--t-end", "0.2", "--interval", "0.1", "--csv-only"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("3 frames"), "{}", stdout(&o));
    let run = tmp.path().join("short");

    let o = sphflow(
        tmp.path(),
        &["analyze", "mass_flux", "--run", run.to_str().unwrap(), "--plane", "0.3,0,0,1,0,0"],
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let dir = tmp.path().join("analysis/mass_flux");
    let csv = fs::read_to_string(dir.join("mass_flux.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3, "{csv}");
    assert!(dir.join("result.json").is_file());

    let o = sphflow(tmp.path(), &["analyze", "mass_flux", "--run", run.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--plane_point"));
}

#[test]
fn eval_tables_match_library() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sphflow(tmp.path(), &["eval", "tasks"]);
    assert!(o.status.success());
    let expected = evalkit::task_table(&evalkit::aggregate_tasks(&evalkit::paper_task_records()));
    assert_eq!(stdout(&o), expected);
    assert_eq!(fs::read_to_string(tmp.path().join("eval/tasks.txt")).unwrap(), expected);

    let o = sphflow(tmp.path(), &["eval", "pc"]);
    assert_eq!(stdout(&o), evalkit::pc_table(&evalkit::stratify_by_pc(&evalkit::paper_task_records())));

    let o = sphflow(tmp.path(), &["eval", "geometry"]);
    assert_eq!(
        stdout(&o),
        evalkit::geometry_table(&evalkit::aggregate_geometry(&evalkit::paper_geometry_records(), 5))
    );

    let custom = tmp.path().join("scores.csv");
    fs::write(&custom, "case,task,run,type,pc,ac\nC1,t1,1,scalar,3,A\nC1,t1,2,scalar,3,C\n").unwrap();
    let o = sphflow(tmp.path(), &["eval", "tasks", "--in", custom.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("50"), "{}", stdout(&o));
}
