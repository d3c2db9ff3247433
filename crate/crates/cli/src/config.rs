//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment; lists are comma separated;
//! numbers accept fractions `1/300` and powers `2^-11`.

use std::fmt::Write as _;

use slmsr::fields::Form;
use slmsr::solver::{MassTime, Method, SolverConfig};

use crate::CliError;

pub const KEYS: [&str; 20] = [
    "test",
    "methods",
    "n_cells",
    "H",
    "n_fine",
    "ref_cells",
    "h_ref",
    "dt",
    "T",
    "form",
    "edge_evolution",
    "alpha",
    "n_sub",
    "n_sub_trace",
    "n_sub_prop",
    "mass_time",
    "seed",
    "mesh_seed",
    "report_times",
    "snapshot_every",
];

/// A run: the solver configuration plus the methods to execute.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub methods: Vec<Method>,
}

pub const DEFAULT_METHODS: [Method; 3] = [Method::Slmsr, Method::Standard, Method::Reference];

/// `1e-3`, `1/300`, `2^-11` or `-0.5`.
pub fn parse_number(s: &str) -> Result<f64, String> {
    let s = s.trim();
    let v = if let Some((a, b)) = s.split_once('/') {
        parse_number(a)? / parse_number(b)?
    } else if let Some((a, b)) = s.split_once('^') {
        let e: i32 = b.trim().parse().map_err(|_| format!("bad exponent in '{s}'"))?;
        parse_number(a)?.powi(e)
    } else {
        s.parse::<f64>().map_err(|_| format!("'{s}' is not a number"))?
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("'{s}' is not finite"))
    }
}

pub fn parse_list(s: &str) -> Result<Vec<f64>, String> {
    s.split(',').filter(|p| !p.trim().is_empty()).map(parse_number).collect()
}

fn parse_count(s: &str) -> Result<usize, String> {
    let v = parse_number(s)?;
    if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
        return Err(format!("'{s}' is not a non-negative integer"));
    }
    Ok(v as usize)
}

/// Number of cells for a mesh width given as `1/N`.
pub fn cells_from_width(s: &str) -> Result<usize, String> {
    let h = parse_number(s)?;
    if !(h > 0.0) {
        return Err(format!("mesh width '{s}' must be positive"));
    }
    let n = (1.0 / h).round();
    if (1.0 / h - n).abs() > 1e-9 * n {
        return Err(format!("mesh width '{s}' is not 1/N for an integer N"));
    }
    Ok(n as usize)
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        other => Err(format!("'{other}' is not a boolean")),
    }
}

pub fn parse_form(s: &str) -> Result<Form, String> {
    match s.trim() {
        "nonconservative" | "non-conservative" => Ok(Form::NonConservative),
        "conservative" => Ok(Form::Conservative),
        other => Err(format!("unknown form '{other}'")),
    }
}

pub fn parse_mass_time(s: &str) -> Result<MassTime, String> {
    match s.trim() {
        "t_n" | "tn" => Ok(MassTime::Tn),
        "t_n1" | "tn1" => Ok(MassTime::Tn1),
        other => Err(format!("unknown mass_time '{other}' (expected t_n or t_n1)")),
    }
}

pub fn parse_methods(s: &str) -> Result<Vec<Method>, String> {
    let mut out = Vec::new();
    for p in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let m = Method::parse(p).map_err(|e| e.to_string())?;
        if !out.contains(&m) {
            out.push(m);
        }
    }
    if out.is_empty() {
        return Err("no methods given".into());
    }
    Ok(out)
}

pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut entries: Vec<(usize, String, String)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Config(format!("line {}: expected 'key = value', got '{line}'", i + 1)));
        };
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(CliError::Config(format!("line {}: missing key", i + 1)));
        }
        if let Some((j, ..)) = entries.iter().find(|(_, e, _)| e == k) {
            return Err(CliError::Config(format!("line {}: key '{k}' already set on line {j}", i + 1)));
        }
        entries.push((i + 1, k.to_string(), v.to_string()));
    }
    let unknown: Vec<&str> = entries
        .iter()
        .map(|(_, k, _)| k.as_str())
        .filter(|k| !KEYS.contains(k))
        .collect();
    if !unknown.is_empty() {
        return Err(CliError::Config(format!("unknown keys: {}", unknown.join(", "))));
    }
    let Some((_, _, test)) = entries.iter().find(|(_, k, _)| k == "test") else {
        return Err(CliError::Config("missing required key 'test'".into()));
    };
    slmsr::fields::TestField::parse(test).map_err(|e| CliError::Config(e.to_string()))?;
    let mut c = SolverConfig::for_test(test);
    let mut methods = DEFAULT_METHODS.to_vec();
    let two_d = test.starts_with("2d");
    for (line, k, v) in &entries {
        let err = |m: String| CliError::Config(format!("line {line}: {k}: {m}"));
        match k.as_str() {
            "test" => {}
            "methods" => methods = parse_methods(v).map_err(err)?,
            "n_cells" => c.n_cells = parse_count(v).map_err(err)?,
            "H" if two_d => return Err(err("2D meshes are sized by n_cells".into())),
            "H" => c.n_cells = cells_from_width(v).map_err(err)?,
            "n_fine" => c.n_fine = parse_count(v).map_err(err)?,
            "ref_cells" => c.ref_cells = parse_count(v).map_err(err)?,
            "h_ref" => c.ref_cells = cells_from_width(v).map_err(err)?,
            "dt" => c.dt = parse_number(v).map_err(err)?,
            "T" => c.t_end = parse_number(v).map_err(err)?,
            "form" => c.form = Some(parse_form(v).map_err(err)?),
            "edge_evolution" => c.edge_evolution = Some(parse_bool(v).map_err(err)?),
            "alpha" => c.alpha = Some(parse_number(v).map_err(err)?),
            "n_sub" => {
                let n = parse_count(v).map_err(err)?;
                c.n_sub_trace = n;
                c.n_sub_prop = n;
            }
            "n_sub_trace" => c.n_sub_trace = parse_count(v).map_err(err)?,
            "n_sub_prop" => c.n_sub_prop = parse_count(v).map_err(err)?,
            "mass_time" => c.mass_time = parse_mass_time(v).map_err(err)?,
            "seed" => c.seed = parse_count(v).map_err(err)? as u64,
            "mesh_seed" => c.mesh_seed = parse_count(v).map_err(err)? as u64,
            "report_times" => c.report_times = parse_list(v).map_err(err)?,
            "snapshot_every" => c.snapshot_every = parse_count(v).map_err(err)?,
            _ => unreachable!("keys checked above"),
        }
    }
    if entries.iter().any(|(_, k, _)| k == "H") && entries.iter().any(|(_, k, _)| k == "n_cells") {
        return Err(CliError::Config("set either H or n_cells, not both".into()));
    }
    c.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(RunConfig { solver: c, methods })
}

/// Fully resolved configuration text; parsing it gives back the same run.
pub fn config_text(run: &RunConfig) -> String {
    let c = &run.solver;
    let mut s = String::new();
    let names: Vec<&str> = run.methods.iter().map(|m| m.name()).collect();
    let _ = writeln!(s, "test = {}", c.test_id);
    let _ = writeln!(s, "methods = {}", names.join(","));
    let _ = writeln!(s, "n_cells = {}", c.n_cells);
    let _ = writeln!(s, "n_fine = {}", c.n_fine);
    let _ = writeln!(s, "ref_cells = {}", c.ref_cells);
    let _ = writeln!(s, "dt = {}", c.dt);
    let _ = writeln!(s, "T = {}", c.t_end);
    if let Some(f) = c.form {
        let _ = writeln!(s, "form = {}", f.name());
    }
    if let Some(e) = c.edge_evolution {
        let _ = writeln!(s, "edge_evolution = {e}");
    }
    if let Some(a) = c.alpha {
        let _ = writeln!(s, "alpha = {a}");
    }
    let _ = writeln!(s, "n_sub_trace = {}", c.n_sub_trace);
    let _ = writeln!(s, "n_sub_prop = {}", c.n_sub_prop);
    let mt = match c.mass_time {
        MassTime::Tn => "t_n",
        MassTime::Tn1 => "t_n1",
    };
    let _ = writeln!(s, "mass_time = {mt}");
    let _ = writeln!(s, "seed = {}", c.seed);
    let _ = writeln!(s, "mesh_seed = {}", c.mesh_seed);
    let times: Vec<String> = c.report_times.iter().map(|t| t.to_string()).collect();
    let _ = writeln!(s, "report_times = {}", times.join(","));
    let _ = writeln!(s, "snapshot_every = {}", c.snapshot_every);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_fractions_and_powers() {
        assert_eq!(parse_number("1/300").unwrap(), 1.0 / 300.0);
        assert_eq!(parse_number("2^-11").unwrap(), 1.0 / 2048.0);
        assert_eq!(parse_number(" 1e-3 ").unwrap(), 1e-3);
        assert!(parse_number("1/0").is_err());
        assert!(parse_number("abc").is_err());
        assert_eq!(cells_from_width("1/128").unwrap(), 128);
        assert!(cells_from_width("0.3").is_err());
    }

    #[test]
    fn defaults_come_from_the_test() {
        let r = parse_config("test = 1d.series.a\n").unwrap();
        assert_eq!(r.solver, SolverConfig::for_test("1d.series.a"));
        assert_eq!(r.methods, DEFAULT_METHODS);
    }

    #[test]
    fn keys_comments_and_lists() {
        let r = parse_config(
            "# unresolved regime\ntest = 1d.unresolved\nH = 1/8   # coarse\nn_fine = 64\ndt = 1e-2\nh_ref = 2^-11\n\
             report_times = 1/2, 1\nmethods = slmsr, reference\nmass_time = t_n1\nn_sub = 4\nform = conservative\n",
        )
        .unwrap();
        let c = &r.solver;
        assert_eq!((c.n_cells, c.n_fine, c.ref_cells), (8, 64, 2048));
        assert_eq!(c.report_times, [0.5, 1.0]);
        assert_eq!(r.methods, [Method::Slmsr, Method::Reference]);
        assert_eq!(c.mass_time, MassTime::Tn1);
        assert_eq!((c.n_sub_trace, c.n_sub_prop), (4, 4));
        assert_eq!(c.form, Some(Form::Conservative));
    }

    #[test]
    fn malformed_line_is_named() {
        let e = parse_config("test = 1d.series.a\ndt 0.01\n").unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn unknown_keys_are_listed() {
        let e = parse_config("test = 1d.series.a\nfoo = 1\nbar = 2\n").unwrap_err();
        let m = e.to_string();
        assert!(m.contains("foo") && m.contains("bar"), "{m}");
    }

    #[test]
    fn invalid_values_are_config_errors() {
        for text in [
            "dt = 1\n",
            "test = nope\n",
            "test = 1d.series.a\ndt = 0.03\n",
            "test = 1d.series.a\nalpha = -1\n",
            "test = 1d.series.a\ndt = 1/300\ndt = 1/100\n",
            "test = 1d.series.a\nH = 1/8\nn_cells = 8\n",
            "test = 2d.solenoidal\nH = 1/8\n",
            "test = 1d.series.a\nedge_evolution = maybe\n",
        ] {
            assert!(matches!(parse_config(text), Err(CliError::Config(_))), "{text}");
        }
    }

    #[test]
    fn resolved_text_round_trips() {
        let r = parse_config("test = 2d.div.conservative\nalpha = 1e-7\nedge_evolution = false\nreport_times = 0.1,1/3,1\n")
            .unwrap();
        let again = parse_config(&config_text(&r)).unwrap();
        assert_eq!(r, again);
    }
}
