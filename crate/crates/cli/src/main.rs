use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use slmsr::solver::{Method, SolverConfig};
use slmsr_cli::commands::{cmd_convergence, cmd_peclet, cmd_run, default_study_times, ConvergenceArgs};
use slmsr_cli::config::{cells_from_width, parse_form, parse_list, parse_mass_time, parse_methods, parse_number};
use slmsr_cli::CliError;

#[derive(Parser)]
#[command(name = "slmsr", version, about = "Semi-Lagrangian multiscale reconstruction experiments")]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured methods and write error series against the reference.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory [default: out/<test>]
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of slmsr,standard,reference.
        #[arg(long)]
        methods: Option<String>,
    },
    /// 1D convergence table over a list of coarse mesh widths.
    Convergence {
        #[arg(long)]
        test: String,
        /// Comma-separated widths, e.g. 1/8,1/32,1/128.
        #[arg(long = "H")]
        h: String,
        #[arg(long)]
        nfine: usize,
        #[arg(long)]
        dt: String,
        #[arg(long = "T", default_value = "1")]
        t_end: String,
        /// Reference cells [default: 2048].
        #[arg(long, default_value_t = 2048)]
        ref_cells: usize,
        #[arg(long, default_value = "slmsr,standard")]
        methods: String,
        /// Reported times [default: 1/3,2/3,1 for series tests, else 1/2,1].
        #[arg(long)]
        times: Option<String>,
        #[arg(long)]
        alpha: Option<String>,
        #[arg(long, default_value_t = 1)]
        n_sub_trace: usize,
        #[arg(long, default_value_t = 1)]
        n_sub_prop: usize,
        #[arg(long)]
        form: Option<String>,
        #[arg(long, default_value = "t_n")]
        mass_time: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Global and local Péclet numbers of a catalog test.
    Peclet {
        #[arg(long)]
        test: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "0")]
        t: String,
    },
}

fn config_err(e: String) -> CliError {
    CliError::Config(e)
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot start {n} threads: {e}")))?;
    }
    match cli.command {
        Command::Run { config, out, methods } => {
            let methods = methods.map(|m| parse_methods(&m)).transpose().map_err(config_err)?;
            let r = cmd_run(&config, out.as_deref(), methods)?;
            for tr in &r.trajectories {
                let s = &tr.stats;
                println!("{:<10} {:>5} steps  {:>9.3}s", tr.method.name(), s.steps, s.total.as_secs_f64());
            }
            for f in &r.error_files {
                println!("wrote {}", f.display());
            }
            println!("manifest {}", r.dir.join("manifest.cfg").display());
        }
        Command::Convergence {
            test,
            h,
            nfine,
            dt,
            t_end,
            ref_cells,
            methods,
            times,
            alpha,
            n_sub_trace,
            n_sub_prop,
            form,
            mass_time,
            seed,
            out,
        } => {
            slmsr::fields::TestField::parse(&test).map_err(|e| config_err(e.to_string()))?;
            let n_cells = h
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(cells_from_width)
                .collect::<Result<Vec<_>, _>>()
                .map_err(config_err)?;
            let base = SolverConfig {
                n_fine: nfine,
                ref_cells,
                dt: parse_number(&dt).map_err(config_err)?,
                t_end: parse_number(&t_end).map_err(config_err)?,
                report_times: match times {
                    Some(t) => parse_list(&t).map_err(config_err)?,
                    None => default_study_times(&test),
                },
                alpha: alpha.map(|a| parse_number(&a)).transpose().map_err(config_err)?,
                n_sub_trace,
                n_sub_prop,
                form: form.map(|f| parse_form(&f)).transpose().map_err(config_err)?,
                mass_time: parse_mass_time(&mass_time).map_err(config_err)?,
                seed,
                n_cells: *n_cells.first().ok_or_else(|| config_err("empty --H list".into()))?,
                ..SolverConfig::for_test(&test)
            };
            let methods = parse_methods(&methods).map_err(config_err)?;
            if methods.contains(&Method::Reference) {
                return Err(config_err("the reference is always run; list only slmsr and standard".into()));
            }
            let out = out.unwrap_or_else(|| PathBuf::from("out").join(format!("{test}.convergence")));
            let study = cmd_convergence(&ConvergenceArgs { base, n_cells, methods }, &out)?;
            println!("{:>10} {:>8} {:>9} {:>14} {:>14}", "H", "t", "method", "L2 rel", "H1 rel");
            let mut rows = study.rows.clone();
            rows.sort_by(|a, b| b.h.total_cmp(&a.h).then(a.t.total_cmp(&b.t)).then_with(|| a.method.cmp(&b.method)));
            for r in &rows {
                println!("{:>10} {:>8.4} {:>9} {:>14.6e} {:>14.6e}", format!("1/{}", (1.0 / r.h).round()), r.t, r.method, r.l2_rel, r.h1_rel);
            }
            for e in &study.eoc {
                println!(
                    "EOC {:<8} {:?} t={:.4} 1/{} -> 1/{}: {:.5}",
                    e.method,
                    e.norm,
                    e.t,
                    (1.0 / e.h_coarse).round(),
                    (1.0 / e.h_fine).round(),
                    e.eoc
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Peclet { test, seed, t } => {
            let t = parse_number(&t).map_err(config_err)?;
            let (field, p) = cmd_peclet(&test, seed, t)?;
            println!("test {} (dim {}) at t = {t}", field.id, field.dim());
            println!("global Pe {:.6e}", p.global);
            println!("local Pe range [{:.6e}, {:.6e}]", p.local_min, p.local_max);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("slmsr: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
