//! Convergence studies: one reference run, then each method on a list of
//! coarse resolutions, with relative errors and orders per refinement pair.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::analysis::{eoc, error_series, fmt_full, write_text, Norm, TableRow};
use crate::error::{Error, Result};
use crate::fields::{CoefField, InitialCondition};
use crate::solver::{run_with, Method, RunStats, SolverConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct EocRow {
    pub method: String,
    pub norm: Norm,
    pub t: f64,
    pub h_coarse: f64,
    pub h_fine: f64,
    pub eoc: f64,
}

#[derive(Debug, Clone)]
pub struct StudyRun {
    pub method: Method,
    pub n_cells: usize,
    pub stats: RunStats,
}

#[derive(Debug, Clone)]
pub struct Study {
    pub rows: Vec<TableRow>,
    pub eoc: Vec<EocRow>,
    pub reference: RunStats,
    pub runs: Vec<StudyRun>,
    pub wall: Duration,
}

impl Study {
    /// `(l2, h1)` of a method at resolution `1/n_cells` and time `t`.
    pub fn error(&self, method: Method, n_cells: usize, t: f64) -> Option<(f64, f64)> {
        let h = 1.0 / n_cells as f64;
        self.rows
            .iter()
            .find(|r| r.method == method.name() && r.h == h && (r.t - t).abs() < 1e-9)
            .map(|r| (r.l2_rel, r.h1_rel))
    }

    pub fn order(&self, method: Method, norm: Norm, t: f64) -> Vec<f64> {
        self.eoc
            .iter()
            .filter(|r| r.method == method.name() && r.norm == norm && (r.t - t).abs() < 1e-9)
            .map(|r| r.eoc)
            .collect()
    }
}

/// Runs a 1D study. `base` fixes everything but the coarse resolution;
/// `base.report_times` are the reported times.
pub fn convergence_study(
    base: &SolverConfig,
    field: &CoefField,
    ic: &InitialCondition,
    n_cells: &[usize],
    methods: &[Method],
) -> Result<Study> {
    if field.dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "convergence studies need a 1D test, '{}' is 2D",
            field.id
        )));
    }
    if n_cells.is_empty() || n_cells.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "coarse resolutions must be non-empty and strictly refining".into(),
        ));
    }
    if methods.contains(&Method::Reference) {
        return Err(Error::InvalidArgument("the reference is not a study method".into()));
    }
    let start = Instant::now();
    let reference = run_with(&SolverConfig { method: Method::Reference, ..base.clone() }, field, ic)?;
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    for &n in n_cells {
        for &m in methods {
            let tr = run_with(&SolverConfig { method: m, n_cells: n, ..base.clone() }, field, ic)?;
            let s = error_series(&tr, &reference, "")?;
            for ((&t, &l2), &h1) in s.times.iter().zip(&s.l2_rel).zip(&s.h1_rel) {
                rows.push(TableRow {
                    h: 1.0 / n as f64,
                    t,
                    method: m.name().to_string(),
                    l2_rel: l2,
                    h1_rel: h1,
                });
            }
            runs.push(StudyRun { method: m, n_cells: n, stats: tr.stats });
        }
    }
    let mut study = Study {
        rows,
        eoc: Vec::new(),
        reference: reference.stats,
        runs,
        wall: Duration::ZERO,
    };
    let times: Vec<f64> = reference.snapshots.iter().map(|s| s.t).collect();
    for &m in methods {
        for &t in &times {
            for norm in [Norm::L2, Norm::H1] {
                for w in n_cells.windows(2) {
                    let e = |n| study.error(m, n, t).map(|(l2, h1)| if norm == Norm::L2 { l2 } else { h1 });
                    let (Some(a), Some(b)) = (e(w[0]), e(w[1])) else { continue };
                    let q = w[1] as f64 / w[0] as f64;
                    // non-positive errors have no order; leave the pair out
                    let Ok(o) = eoc(&[a, b], q) else { continue };
                    study.eoc.push(EocRow {
                        method: m.name().to_string(),
                        norm,
                        t,
                        h_coarse: 1.0 / w[0] as f64,
                        h_fine: 1.0 / w[1] as f64,
                        eoc: o[0],
                    });
                }
            }
        }
    }
    study.wall = start.elapsed();
    Ok(study)
}

/// Header `method,norm,t,H,H_fine,eoc`.
pub fn eoc_csv(rows: &[EocRow]) -> String {
    let mut out = String::from("method,norm,t,H,H_fine,eoc\n");
    for r in rows {
        let norm = match r.norm {
            Norm::L2 => "l2",
            Norm::H1 => "h1",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.method,
            norm,
            fmt_full(r.t),
            fmt_full(r.h_coarse),
            fmt_full(r.h_fine),
            fmt_full(r.eoc)
        );
    }
    out
}

pub fn write_eoc(rows: &[EocRow], path: &Path) -> Result<()> {
    write_text(path, &eoc_csv(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_test_field;

    fn base() -> SolverConfig {
        SolverConfig {
            dt: 1e-2,
            t_end: 0.1,
            ref_cells: 256,
            report_times: vec![0.05, 0.1],
            ..SolverConfig::for_test("1d.resolved")
        }
    }

    #[test]
    fn standard_fem_converges_on_smooth_data() {
        let f = make_test_field("1d.resolved", 0).unwrap();
        let s = convergence_study(&base(), &f, &InitialCondition::default_1d(), &[16, 32], &[Method::Standard]).unwrap();
        assert_eq!(s.rows.len(), 4);
        assert_eq!(s.eoc.len(), 4);
        let o = s.order(Method::Standard, Norm::L2, 0.1);
        assert!(o[0] > 1.5, "{o:?}");
    }

    #[test]
    fn single_resolution_has_no_orders() {
        let f = make_test_field("1d.resolved", 0).unwrap();
        let s = convergence_study(&base(), &f, &InitialCondition::default_1d(), &[16], &[Method::Standard]).unwrap();
        assert!(s.eoc.is_empty());
        assert_eq!(eoc_csv(&s.eoc), "method,norm,t,H,H_fine,eoc\n");
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let f = make_test_field("1d.resolved", 0).unwrap();
        let ic = InitialCondition::default_1d();
        assert!(convergence_study(&base(), &f, &ic, &[32, 16], &[Method::Standard]).is_err());
        assert!(convergence_study(&base(), &f, &ic, &[16], &[Method::Reference]).is_err());
        let g = make_test_field("2d.solenoidal", 0).unwrap();
        assert!(convergence_study(&base(), &g, &InitialCondition::default_2d(), &[16], &[Method::Standard]).is_err());
    }
}
