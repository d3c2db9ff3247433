use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slmsr_cli::{EXIT_CONFIG, EXIT_SOLVER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_slmsr"))
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("slmsr-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = "# short series run\ntest = 1d.series.b\nH = 1/8\nn_fine = 16\nT = 1/10\nh_ref = 1/512\nreport_times = 1/20, 1/10\n";

#[test]
fn run_writes_errors_snapshots_and_manifest() {
    let d = scratch("run");
    std::fs::write(d.join("a.cfg"), SMALL).unwrap();
    let o = run(&["run", "--config", "a.cfg", "--out", "out"], &d);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.join("out/errors_slmsr.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "t,l2_rel,h1_rel");
    assert_eq!(lines.len(), 3);
    // 17 significant digits
    assert!(lines[1].starts_with("5.0000000000000003e-2,"), "{}", lines[1]);
    assert!(d.join("out/errors_standard.csv").exists());
    assert!(d.join("out/field_reference_000030.csv").exists());
    let manifest = std::fs::read_to_string(d.join("out/manifest.cfg")).unwrap();
    assert!(manifest.contains("# timing slmsr"));
    assert!(manifest.contains("# effective alpha: 0.1"));
    assert!(manifest.contains("test = 1d.series.b"));
}

#[test]
fn manifest_reruns_byte_identically() {
    let d = scratch("rerun");
    std::fs::write(d.join("a.cfg"), SMALL).unwrap();
    assert!(run(&["run", "--config", "a.cfg", "--out", "one"], &d).status.success());
    let o = run(&["--threads", "2", "run", "--config", "one/manifest.cfg", "--out", "two"], &d);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["errors_slmsr.csv", "errors_standard.csv", "field_slmsr_000030.csv"] {
        let a = std::fs::read(d.join("one").join(f)).unwrap();
        let b = std::fs::read(d.join("two").join(f)).unwrap();
        assert!(a == b, "{f} differs");
    }
}

#[test]
fn method_subset_without_reference_writes_no_errors() {
    let d = scratch("subset");
    std::fs::write(d.join("a.cfg"), SMALL).unwrap();
    let o = run(&["run", "--config", "a.cfg", "--out", "out", "--methods", "standard"], &d);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(!d.join("out/errors_standard.csv").exists());
    assert!(d.join("out/field_standard_000030.csv").exists());
    assert!(std::fs::read_to_string(d.join("out/manifest.cfg")).unwrap().contains("methods = standard\n"));
}

#[test]
fn config_errors_exit_with_two() {
    let d = scratch("errors");
    std::fs::write(d.join("bad.cfg"), "test = 1d.series.a\ndt 0.01\n").unwrap();
    let o = run(&["run", "--config", "bad.cfg"], &d);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));

    std::fs::write(d.join("keys.cfg"), "test = 1d.series.a\nspeed = 3\ncolour = red\n").unwrap();
    let o = run(&["run", "--config", "keys.cfg"], &d);
    assert_eq!(o.status.code(), Some(EXIT_CONFIG));
    assert!(stderr(&o).contains("speed") && stderr(&o).contains("colour"));

    for args in [
        vec!["run", "--config", "missing.cfg"],
        vec!["peclet", "--test", "3d.cube"],
        vec!["convergence", "--test", "1d.resolved", "--H", "1/16,1/8", "--nfine", "4", "--dt", "1/10"],
        vec!["convergence", "--test", "2d.solenoidal", "--H", "1/8", "--nfine", "4", "--dt", "1/10"],
        vec!["--threads", "0", "peclet", "--test", "1d.series.a"],
    ] {
        let o = run(&args, &d);
        assert_eq!(o.status.code(), Some(EXIT_CONFIG), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn inverted_traced_cells_exit_with_three() {
    // a single huge step folds the traced fine cells of the oscillatory flow
    let d = scratch("solver");
    std::fs::write(
        d.join("fold.cfg"),
        "test = 1d.series.a\nH = 1/8\nn_fine = 64\ndt = 1/2\nT = 1\nmethods = slmsr\n",
    )
    .unwrap();
    let o = run(&["run", "--config", "fold.cfg", "--out", "out"], &d);
    assert_eq!(o.status.code(), Some(EXIT_SOLVER), "{}", stderr(&o));
    assert!(stderr(&o).contains("step 1"), "{}", stderr(&o));
}

#[test]
fn convergence_writes_table_and_orders() {
    let d = scratch("conv");
    let o = run(
        &[
            "convergence", "--test", "1d.resolved", "--H", "1/16,1/32", "--nfine", "8", "--dt", "1/100", "--T", "1/10",
            "--ref-cells", "512", "--times", "1/10", "--out", "c",
        ],
        &d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(d.join("c/table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows[0], "H,t,method,l2_rel,h1_rel");
    assert_eq!(rows.len(), 5);
    assert!(rows[1].starts_with("6.2500000000000000e-2,"));
    assert!(rows[4].starts_with("3.1250000000000000e-2,"));
    let eoc = std::fs::read_to_string(d.join("c/eoc.csv")).unwrap();
    assert_eq!(eoc.lines().count(), 5);
    assert!(stdout(&o).contains("EOC standard"));
    let manifest = std::fs::read_to_string(d.join("c/manifest.cfg")).unwrap();
    assert!(manifest.contains("# re-run with: slmsr convergence --test 1d.resolved --H 1/16,1/32"));

    let o = run(
        &[
            "convergence", "--test", "1d.resolved", "--H", "1/16", "--nfine", "8", "--dt", "1/100", "--T", "1/10",
            "--ref-cells", "512", "--times", "1/10", "--out", "single",
        ],
        &d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(d.join("single/eoc.csv")).unwrap(), "method,norm,t,H,H_fine,eoc\n");
}

#[test]
fn peclet_reports_global_and_local_numbers() {
    let d = scratch("peclet");
    let o = run(&["peclet", "--test", "2d.solenoidal"], &d);
    assert!(o.status.success());
    let out = stdout(&o);
    let local_max: f64 = out
        .lines()
        .find(|l| l.starts_with("local Pe range"))
        .and_then(|l| l.rsplit(", ").next())
        .map(|v| v.trim_end_matches(']').parse().unwrap())
        .unwrap();
    assert!((1e6..1e7).contains(&local_max), "{out}");
}
