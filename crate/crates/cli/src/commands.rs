use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use slmsr::analysis::{error_series, write_csv, write_snapshot, write_table};
use slmsr::fields::{make_test_field, peclet, CoefField, InitialCondition, PecletReport};
use slmsr::solver::{build_fine_mesh, run_with, MassTime, Method, RunStats, SolverConfig, TorusSolver, Trajectory};
use slmsr::study::{convergence_study, write_eoc, Study};

use crate::config::{config_text, parse_config, RunConfig};
use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Solver(slmsr::Error::io(path, e))
}

fn secs(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64())
}

fn timing_lines(label: &str, s: &RunStats) -> String {
    format!(
        "# timing {label}: steps={} total={}s trace={}s reconstruct={}s propagate={}s assemble={}s solve={}s max_conformity_defect={:e}\n",
        s.steps,
        secs(s.total),
        secs(s.trace),
        secs(s.reconstruct),
        secs(s.propagate),
        secs(s.assemble),
        secs(s.solve),
        s.max_conformity_defect
    )
}

fn initial_condition(field: &CoefField) -> InitialCondition {
    if field.dim() == 1 {
        InitialCondition::default_1d()
    } else {
        InitialCondition::default_2d()
    }
}

fn field_for(c: &SolverConfig) -> Result<CoefField, CliError> {
    make_test_field(&c.test_id, c.seed).map_err(|e| CliError::Config(e.to_string()))
}

pub struct RunOutput {
    pub dir: PathBuf,
    pub trajectories: Vec<Trajectory>,
    /// Error CSVs written, one per non-reference method.
    pub error_files: Vec<PathBuf>,
}

/// Runs every selected method; with a reference among them, writes the error
/// series of the others against it.
pub fn run_config(run: &RunConfig, out: &Path) -> Result<RunOutput, CliError> {
    let c = &run.solver;
    let field = field_for(c)?;
    let ic = initial_condition(&field);
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let wall = Instant::now();
    // the 2D methods share one refined mesh so errors are exact matrix norms
    let mesh = if field.dim() == 2 {
        Some(Arc::new(build_fine_mesh(c.n_cells, c.n_fine, c.mesh_seed)?))
    } else {
        None
    };
    let mut trajectories = Vec::new();
    for &m in &run.methods {
        let cm = SolverConfig { method: m, ..c.clone() };
        let tr = match &mesh {
            Some(mesh) => {
                let t0 = Instant::now();
                let mut tr = TorusSolver::with_mesh(&cm, &field, mesh.clone())?.run(&ic)?;
                tr.stats.total = t0.elapsed();
                tr
            }
            None => run_with(&cm, &field, &ic)?,
        };
        for s in &tr.snapshots {
            if c.snapshot_every > 0 || s.step == tr.last().step {
                let name = format!("field_{}_{:06}.csv", m.name(), s.step);
                write_snapshot(&s.field, &out.join(name))?;
            }
        }
        trajectories.push(tr);
    }
    let mut error_files = Vec::new();
    if let Some(reference) = trajectories.iter().find(|t| t.method == Method::Reference) {
        let fingerprint = config_text(run);
        for tr in trajectories.iter().filter(|t| t.method != Method::Reference) {
            let series = error_series(tr, reference, &fingerprint)?;
            let path = out.join(format!("errors_{}.csv", tr.method.name()));
            write_csv(&series, &path)?;
            error_files.push(path);
        }
    }
    let mut manifest = format!("# slmsr {VERSION} run manifest\n# output directory: {}\n", out.display());
    manifest.push_str("# re-run with: slmsr run --config manifest.cfg\n");
    let _ = writeln!(manifest, "# wall clock: {}s", secs(wall.elapsed()));
    let _ = writeln!(manifest, "# effective alpha: {}", c.alpha_or_default(field.dim()));
    for tr in &trajectories {
        manifest.push_str(&timing_lines(tr.method.name(), &tr.stats));
    }
    manifest.push_str(&config_text(run));
    write_manifest(out, &manifest)?;
    Ok(RunOutput {
        dir: out.to_path_buf(),
        trajectories,
        error_files,
    })
}

fn write_manifest(out: &Path, text: &str) -> Result<(), CliError> {
    let path = out.join("manifest.cfg");
    std::fs::write(&path, text).map_err(|e| io_err(&path, e))
}

pub fn cmd_run(config: &Path, out: Option<&Path>, methods: Option<Vec<Method>>) -> Result<RunOutput, CliError> {
    let text = std::fs::read_to_string(config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config.display())))?;
    let mut run = parse_config(&text)?;
    if let Some(m) = methods {
        run.methods = m;
    }
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("out").join(&run.solver.test_id));
    run_config(&run, &dir)
}

/// Parameters of a 1D convergence study.
#[derive(Debug, Clone)]
pub struct ConvergenceArgs {
    pub base: SolverConfig,
    pub n_cells: Vec<usize>,
    pub methods: Vec<Method>,
}

/// Reported times: thirds for the series tests, halves otherwise.
pub fn default_study_times(test: &str) -> Vec<f64> {
    if test.starts_with("1d.series") {
        vec![1.0 / 3.0, 2.0 / 3.0, 1.0]
    } else {
        vec![0.5, 1.0]
    }
}

pub fn cmd_convergence(args: &ConvergenceArgs, out: &Path) -> Result<Study, CliError> {
    let field = field_for(&args.base)?;
    if field.dim() != 1 {
        return Err(CliError::Config(format!("convergence studies need a 1D test, got '{}'", field.id)));
    }
    args.base.validate()?;
    std::fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let study = convergence_study(&args.base, &field, &initial_condition(&field), &args.n_cells, &args.methods)?;
    write_table(&study.rows, &out.join("table.csv"))?;
    write_eoc(&study.eoc, &out.join("eoc.csv"))?;

    let hs: Vec<String> = args.n_cells.iter().map(|n| format!("1/{n}")).collect();
    let names: Vec<&str> = args.methods.iter().map(|m| m.name()).collect();
    let times: Vec<String> = args.base.report_times.iter().map(|t| t.to_string()).collect();
    let mut manifest = format!("# slmsr {VERSION} convergence manifest\n# output directory: {}\n", out.display());
    let mut cmd = format!(
        "slmsr convergence --test {} --H {} --nfine {} --dt {} --T {} --ref-cells {} --methods {} --times {} --n-sub-trace {} --n-sub-prop {}",
        args.base.test_id,
        hs.join(","),
        args.base.n_fine,
        args.base.dt,
        args.base.t_end,
        args.base.ref_cells,
        names.join(","),
        times.join(","),
        args.base.n_sub_trace,
        args.base.n_sub_prop,
    );
    if let Some(a) = args.base.alpha {
        let _ = write!(cmd, " --alpha {a}");
    }
    if let Some(f) = args.base.form {
        let _ = write!(cmd, " --form {}", f.name());
    }
    let mt = match args.base.mass_time {
        MassTime::Tn => "t_n",
        MassTime::Tn1 => "t_n1",
    };
    let _ = write!(cmd, " --mass-time {mt} --seed {}", args.base.seed);
    let _ = writeln!(manifest, "# re-run with: {cmd}");
    let _ = writeln!(manifest, "# wall clock: {}s", secs(study.wall));
    let _ = writeln!(manifest, "# effective alpha: {}", args.base.alpha_or_default(1));
    manifest.push_str(&timing_lines("reference", &study.reference));
    for r in &study.runs {
        manifest.push_str(&timing_lines(&format!("{} H=1/{}", r.method.name(), r.n_cells), &r.stats));
    }
    // the base configuration of every study run
    manifest.push_str(&config_text(&RunConfig {
        solver: args.base.clone(),
        methods: args.methods.clone(),
    }));
    write_manifest(out, &manifest)?;
    Ok(study)
}

/// Global and local Péclet numbers of a catalog test at time `t`.
pub fn cmd_peclet(test: &str, seed: u64, t: f64) -> Result<(CoefField, PecletReport), CliError> {
    let field = make_test_field(test, seed).map_err(|e| CliError::Config(e.to_string()))?;
    let report = peclet(&field, 1.0, t)?;
    Ok((field, report))
}
