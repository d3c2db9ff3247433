//! Relative errors against a reference solution, convergence orders and CSV output.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{assemble, dot, Triangle, TriangleRule};
use crate::mesh::{FineMesh2D, UniformLine};
use crate::solver::{CompositeField, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Norm {
    L2,
    /// Full norm: L² part plus gradient seminorm.
    H1,
}

/// Squared norms of the difference and of the reference.
#[derive(Debug, Clone, Copy, Default)]
struct Squares {
    diff_l2: f64,
    diff_grad: f64,
    ref_l2: f64,
    ref_grad: f64,
}

impl Squares {
    fn relative(&self, norm: Norm) -> Result<f64> {
        let (num, den) = match norm {
            Norm::L2 => (self.diff_l2, self.ref_l2),
            Norm::H1 => (self.diff_l2 + self.diff_grad, self.ref_l2 + self.ref_grad),
        };
        if !(den > 0.0) {
            return Err(Error::Division("reference solution has zero norm".into()));
        }
        Ok((num.max(0.0) / den).sqrt())
    }
}

/// Exact integrals of two periodic P1 functions on uniform lines: both are
/// linear between consecutive nodes of the merged partition.
fn line_squares(lu: &UniformLine, u: &[f64], lr: &UniformLine, r: &[f64]) -> Squares {
    let (nu, nr) = (lu.n_cells, lr.n_cells);
    // breakpoints i/nu and j/nr, compared exactly as integers
    let mut pts: Vec<(usize, usize)> = Vec::with_capacity(nu + nr + 1);
    let (mut i, mut j) = (0, 0);
    while i <= nu || j <= nr {
        let a = if i <= nu { i * nr } else { usize::MAX };
        let b = if j <= nr { j * nu } else { usize::MAX };
        match a.cmp(&b) {
            std::cmp::Ordering::Less => {
                pts.push((i, nu));
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                pts.push((j, nr));
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                pts.push((i, nu));
                i += 1;
                j += 1;
            }
        }
    }
    let x = |p: (usize, usize)| p.0 as f64 / p.1 as f64;
    let mut s = Squares::default();
    for w in pts.windows(2) {
        let (a, b) = (x(w[0]), x(w[1]));
        let h = b - a;
        if h <= 0.0 {
            continue;
        }
        let m = 0.5 * (a + b);
        let side = |line: &UniformLine, v: &[f64]| {
            let (k, _) = line.locate(m);
            let n = line.n_cells as f64;
            let (va, g) = line.eval_in_cell(v, k, a * n - k as f64);
            (va, va + g * h, g)
        };
        let (ua, ub, gu) = side(lu, u);
        let (ra, rb, gr) = side(lr, r);
        let sq = |p: f64, q: f64| h * (p * p + p * q + q * q) / 3.0;
        s.diff_l2 += sq(ua - ra, ub - rb);
        s.ref_l2 += sq(ra, rb);
        s.diff_grad += h * (gu - gr).powi(2);
        s.ref_grad += h * gr * gr;
    }
    s
}

fn torus_squares(fine: &FineMesh2D, u: &[f64], r: &[f64]) -> Result<Squares> {
    let conn = fine.connectivity();
    let n = fine.n_nodes();
    let tri = |e: usize| Triangle::unchecked(fine.element(e).1);
    let rule = TriangleRule::centroid();
    let mass = assemble(n, &conn, |e| Ok(tri(e).mass()))?;
    let stiff = assemble(n, &conn, |e| Ok(tri(e).stiffness(&rule, |_| [[1.0, 0.0], [0.0, 1.0]])))?;
    let d: Vec<f64> = u.iter().zip(r).map(|(a, b)| a - b).collect();
    Ok(Squares {
        diff_l2: dot(&d, &mass.mul_vec(&d)),
        diff_grad: dot(&d, &stiff.mul_vec(&d)),
        ref_l2: dot(r, &mass.mul_vec(r)),
        ref_grad: dot(r, &stiff.mul_vec(r)),
    })
}

fn squares(u: &CompositeField, u_ref: &CompositeField) -> Result<Squares> {
    match (u, u_ref) {
        (CompositeField::Line { line: lu, values: vu, .. }, CompositeField::Line { line: lr, values: vr, .. }) => {
            Ok(line_squares(lu, vu, lr, vr))
        }
        (CompositeField::Torus { fine: fu, values: vu, .. }, CompositeField::Torus { fine: fr, values: vr, .. }) => {
            if !Arc::ptr_eq(fu, fr) && **fu != **fr {
                return Err(Error::InvalidArgument(
                    "2D errors need both fields on the same refined mesh".into(),
                ));
            }
            torus_squares(fr, vu, vr)
        }
        _ => Err(Error::InvalidArgument("fields of different dimension".into())),
    }
}

/// `‖u − u_ref‖ / ‖u_ref‖`.
pub fn relative_error(u: &CompositeField, u_ref: &CompositeField, norm: Norm) -> Result<f64> {
    squares(u, u_ref)?.relative(norm)
}

/// Both relative errors at once.
pub fn relative_errors(u: &CompositeField, u_ref: &CompositeField) -> Result<(f64, f64)> {
    let s = squares(u, u_ref)?;
    Ok((s.relative(Norm::L2)?, s.relative(Norm::H1)?))
}

/// Exact integral of the piecewise-linear field over the domain.
pub fn integral(u: &CompositeField) -> f64 {
    match u {
        CompositeField::Line { line, values, .. } => line.h() * values.iter().sum::<f64>(),
        CompositeField::Torus { fine, values, .. } => (0..fine.n_cells())
            .map(|e| {
                let (nodes, p) = fine.element(e);
                let area = 0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
                area.abs() * nodes.iter().map(|&k| values[k]).sum::<f64>() / 3.0
            })
            .sum(),
    }
}

/// Orders `log(e_H / e_{H/q}) / log q` for consecutive pairs, positive when errors decrease.
pub fn eoc(errors: &[f64], q: f64) -> Result<Vec<f64>> {
    if errors.len() < 2 {
        return Err(Error::InvalidArgument("need at least two errors".into()));
    }
    if !(q > 1.0) {
        return Err(Error::InvalidArgument(format!("refinement factor must exceed 1, got {q}")));
    }
    if let Some(e) = errors.iter().find(|e| !(**e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidArgument(format!("errors must be positive, got {e}")));
    }
    Ok(errors.windows(2).map(|w| (w[0] / w[1]).ln() / q.ln()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub method: String,
    pub fingerprint: String,
    pub times: Vec<f64>,
    pub l2_rel: Vec<f64>,
    pub h1_rel: Vec<f64>,
}

impl ErrorSeries {
    pub fn at(&self, t: f64) -> Option<(f64, f64)> {
        let k = self.times.iter().position(|s| (s - t).abs() < 1e-9)?;
        Some((self.l2_rel[k], self.h1_rel[k]))
    }
}

/// Errors of every snapshot of `run` that has a reference snapshot at the same time.
pub fn error_series(run: &Trajectory, reference: &Trajectory, fingerprint: &str) -> Result<ErrorSeries> {
    let mut s = ErrorSeries {
        method: run.method.name().to_string(),
        fingerprint: fingerprint.to_string(),
        times: Vec::new(),
        l2_rel: Vec::new(),
        h1_rel: Vec::new(),
    };
    for snap in &run.snapshots {
        if let Some(r) = reference.at_time(snap.t) {
            let (l2, h1) = relative_errors(&snap.field, &r.field)?;
            s.times.push(snap.t);
            s.l2_rel.push(l2);
            s.h1_rel.push(h1);
        }
    }
    Ok(s)
}

/// 17 significant digits.
pub fn fmt_full(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn series_csv(series: &ErrorSeries) -> String {
    let mut out = String::from("t,l2_rel,h1_rel\n");
    for k in 0..series.times.len() {
        let _ = writeln!(
            out,
            "{},{},{}",
            fmt_full(series.times[k]),
            fmt_full(series.l2_rel[k]),
            fmt_full(series.h1_rel[k])
        );
    }
    out
}

pub fn write_csv(series: &ErrorSeries, path: &Path) -> Result<()> {
    write_text(path, &series_csv(series))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableRow {
    pub h: f64,
    pub t: f64,
    pub method: String,
    pub l2_rel: f64,
    pub h1_rel: f64,
}

/// Rows sorted by H descending, then t ascending, then method.
pub fn table_csv(rows: &[TableRow]) -> String {
    let mut rows = rows.to_vec();
    rows.sort_by(|a, b| {
        b.h.total_cmp(&a.h)
            .then(a.t.total_cmp(&b.t))
            .then_with(|| a.method.cmp(&b.method))
    });
    let mut out = String::from("H,t,method,l2_rel,h1_rel\n");
    for r in &rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            fmt_full(r.h),
            fmt_full(r.t),
            r.method,
            fmt_full(r.l2_rel),
            fmt_full(r.h1_rel)
        );
    }
    out
}

pub fn write_table(rows: &[TableRow], path: &Path) -> Result<()> {
    write_text(path, &table_csv(rows))
}

/// `x[,y],value` rows over the fine composite nodes.
pub fn snapshot_csv(field: &CompositeField) -> String {
    let mut out = String::new();
    match field {
        CompositeField::Line { line, values, .. } => {
            out.push_str("x,value\n");
            for (i, v) in values.iter().enumerate() {
                let _ = writeln!(out, "{},{}", fmt_full(line.node(i)), fmt_full(*v));
            }
        }
        CompositeField::Torus { fine, values, .. } => {
            out.push_str("x,y,value\n");
            for (p, v) in fine.node_pos.iter().zip(values) {
                let _ = writeln!(out, "{},{},{}", fmt_full(p[0]), fmt_full(p[1]), fmt_full(*v));
            }
        }
    }
    out
}

pub fn write_snapshot(field: &CompositeField, path: &Path) -> Result<()> {
    write_text(path, &snapshot_csv(field))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line_field(n: usize, f: impl Fn(f64) -> f64) -> CompositeField {
        let line = UniformLine::new(n).unwrap();
        let values: Vec<f64> = (0..n).map(|i| f(line.node(i))).collect();
        CompositeField::Line {
            line,
            weights: values.clone(),
            values,
        }
    }

    #[test]
    fn identical_and_scaled_fields() {
        let r = line_field(64, |x| (2.0 * PI * x).sin() + 0.3);
        assert_eq!(relative_error(&r, &r, Norm::L2).unwrap(), 0.0);
        let u = line_field(64, |x| 2.0 * ((2.0 * PI * x).sin() + 0.3));
        for norm in [Norm::L2, Norm::H1] {
            assert!((relative_error(&u, &r, norm).unwrap() - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_reference_is_a_division_error() {
        let z = line_field(8, |_| 0.0);
        let u = line_field(8, |x| x);
        assert!(matches!(relative_error(&u, &z, Norm::L2), Err(Error::Division(_))));
    }

    #[test]
    fn interpolation_error_matches_the_analytic_ratio() {
        // The P1 interpolant of sin 2πx with spacing h differs from the function
        // by h²/8 |u''| times a shape factor: ‖I_h u − u‖ ≈ (2π)² h² / √120 · ‖u‖.
        // Between two interpolants on h and h/2 the difference is about
        // (1 − 1/4) of the coarser interpolation error.
        let f = |x: f64| (2.0 * PI * x).sin();
        let h = 1.0 / 2048.0;
        let u = line_field(2048, f);
        let r = line_field(4096, f);
        let e = relative_error(&u, &r, Norm::L2).unwrap();
        let predicted = (2.0 * PI).powi(2) * h * h / 120f64.sqrt() * 0.75;
        assert!((e / predicted - 1.0).abs() < 0.1, "{e} vs {predicted}");
    }

    #[test]
    fn merged_partition_is_exact_for_non_nested_lines() {
        // u = x on [0,1) is discontinuous at the wrap point; pick a periodic hat instead
        let r = line_field(3, |x| if x == 0.0 { 1.0 } else { 0.0 });
        let u = line_field(5, |_| 0.0);
        // ‖hat‖² on a periodic 3-cell mesh: two halves of width 1/3, each ∫ = 1/9
        let e = relative_error(&u, &r, Norm::L2).unwrap();
        assert!((e - 1.0).abs() < 1e-14);
        let s = line_squares(&UniformLine::new(3).unwrap(), &[1.0, 0.0, 0.0], &UniformLine::new(5).unwrap(), &[0.0; 5]);
        assert!((s.diff_l2 - 2.0 / 9.0).abs() < 1e-14);
        assert!((s.diff_grad - 6.0).abs() < 1e-12);
    }

    /// Five decimals, rounded and truncated; published tables use both.
    fn printed(x: f64) -> [String; 2] {
        [format!("{x:.5}"), format!("{:.5}", (x * 1e5).trunc() / 1e5)]
    }

    #[test]
    fn eoc_reproduces_printed_orders() {
        let a = eoc(&[2.71271e-2, 6.31955e-3], 2.0).unwrap();
        assert_eq!(printed(a[0]), ["2.10184", "2.10184"]);
        let b = eoc(&[4.80502e-1, 3.4961e-1], 4.0).unwrap();
        assert_eq!(printed(b[0])[1], "0.22939");
        assert_eq!(eoc(&[0.3, 0.3, 0.3], 2.0).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn eoc_of_a_power_law_is_exact() {
        let errs: Vec<f64> = (0..6).map(|k| 3.0 * 0.5f64.powi(k).powf(1.7)).collect();
        for p in eoc(&errs, 2.0).unwrap() {
            assert!((p - 1.7).abs() < 1e-12);
        }
        assert!(eoc(&[1.0], 2.0).is_err());
        assert!(eoc(&[1.0, 0.0], 2.0).is_err());
        assert!(eoc(&[1.0, -1.0], 2.0).is_err());
    }

    #[test]
    fn csv_formats() {
        let s = ErrorSeries {
            method: "slmsr".into(),
            fingerprint: String::new(),
            times: vec![1.0],
            l2_rel: vec![0.1],
            h1_rel: vec![0.2],
        };
        let text = series_csv(&s);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], "t,l2_rel,h1_rel");
        assert_eq!(lines[1], "1.0000000000000000e0,1.0000000000000001e-1,2.0000000000000001e-1");
        let rows = vec![
            TableRow { h: 0.125, t: 1.0, method: "slmsr".into(), l2_rel: 0.1, h1_rel: 0.2 },
            TableRow { h: 0.25, t: 1.0, method: "slmsr".into(), l2_rel: 0.1, h1_rel: 0.2 },
            TableRow { h: 0.25, t: 0.5, method: "slmsr".into(), l2_rel: 0.1, h1_rel: 0.2 },
        ];
        let t = table_csv(&rows);
        let hs: Vec<&str> = t.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(hs, ["2.5000000000000000e-1", "2.5000000000000000e-1", "1.2500000000000000e-1"]);
        assert!(t.lines().nth(1).unwrap().contains(",5.0000000000000000e-1,"));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn eoc_recovers_any_power_law(c in 1e-3..10.0f64, p in 0.1..4.0f64, q in 2usize..5) {
                let h: Vec<f64> = (0..4).map(|k| (q as f64).powi(-k)).collect();
                let e: Vec<f64> = h.iter().map(|h| c * h.powf(p)).collect();
                for r in eoc(&e, q as f64).unwrap() {
                    prop_assert!((r - p).abs() < 1e-10);
                }
            }
        }
    }
}
