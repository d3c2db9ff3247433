//! Evolution of reconstructed basis functions from the traced cell at `t^n`
//! to the Eulerian cell at `t^{n+1}`.
//!
//! Nodes move linearly from their traced to their Eulerian positions, so the
//! material derivative is the nodal time derivative and advection drops out.
//! Each substep is implicit Euler with lumped mass on the current geometry:
//!
//! ```text
//! diag(m(t_s)) (Φ^s − Φ^{s−1}) = −δt_s (K(t_s) + diag(m ∇·c)) Φ^s
//! ```
//!
//! where the reaction term only enters for the conservative form and the
//! boundary rows hold the prescribed values.

use crate::error::{Error, Result};
use crate::fem::{CsrMatrix, PlaneSegment, Segment, SegmentRule, SparseLu, Triangle, TriangleRule, TripletBuilder};
use crate::fields::{Field1D, Field2D, Form};
use crate::mesh::LocalLattice;
use crate::reconstruct::{EdgeTrace, MsBasis1D, MsBasis2D};

/// How the boundary of a 2D cell behaves during propagation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryStrategy {
    /// Boundary nodes keep the reconstructed traces of `t^n`.
    FixedBoundary,
    /// Boundary nodes follow the evolved edge traces linearly in time.
    EdgeEvolution,
}

/// Local time interval and substep count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Substeps {
    pub t_n: f64,
    pub t_n1: f64,
    pub n_sub: usize,
}

impl Substeps {
    pub fn new(t_n: f64, t_n1: f64, n_sub: usize) -> Result<Self> {
        if !(t_n < t_n1) || n_sub == 0 {
            return Err(Error::InvalidArgument(format!(
                "propagation needs t_n < t_n1 and n_sub >= 1, got [{t_n}, {t_n1}] with {n_sub}"
            )));
        }
        Ok(Self { t_n, t_n1, n_sub })
    }

    fn theta(&self, s: usize) -> f64 {
        s as f64 / self.n_sub as f64
    }

    fn time(&self, s: usize) -> f64 {
        self.t_n + self.theta(s) * (self.t_n1 - self.t_n)
    }

    fn dt(&self) -> f64 {
        (self.t_n1 - self.t_n) / self.n_sub as f64
    }
}

fn lerp<const D: usize>(a: &[[f64; D]], b: &[[f64; D]], theta: f64) -> Vec<[f64; D]> {
    a.iter()
        .zip(b)
        .map(|(p, q)| std::array::from_fn(|i| p[i] + theta * (q[i] - p[i])))
        .collect()
}

/// Solves a tridiagonal system for the interior nodes `1..n-1` with the end
/// values of each right-hand side column held fixed.
fn tridiagonal_dirichlet(lower: &[f64], diag: &[f64], upper: &[f64], cols: &mut [Vec<f64>], rhs: &[Vec<f64>]) {
    let n = diag.len();
    if n < 3 {
        return;
    }
    let m = n - 2;
    // forward elimination on the interior block
    let mut c = vec![0.0; m];
    let mut denom = vec![0.0; m];
    for r in 0..m {
        let i = r + 1;
        let d = diag[i] - if r > 0 { lower[i] * c[r - 1] } else { 0.0 };
        denom[r] = d;
        c[r] = if r + 1 < m { upper[i] / d } else { 0.0 };
    }
    for (col, b) in cols.iter_mut().zip(rhs) {
        let mut y = vec![0.0; m];
        for r in 0..m {
            let i = r + 1;
            let mut v = b[i];
            if r == 0 {
                v -= lower[i] * col[0];
            }
            if r + 1 == m {
                v -= upper[i] * col[n - 1];
            }
            if r > 0 {
                v -= lower[i] * y[r - 1];
            }
            y[r] = v / denom[r];
        }
        for r in (0..m).rev() {
            if r + 1 < m {
                y[r] -= c[r] * y[r + 1];
            }
            col[r + 1] = y[r];
        }
    }
}

/// One implicit substep on a line-like moving mesh.
///
/// `lengths[e]` and `stiff[e]` describe fine segment `e`; `react[l]` is the
/// nodal reaction coefficient (zero in non-conservative form).
fn line_substep(lengths: &[f64], stiff: &[f64], react: &[f64], dt: f64, funcs: &mut [Vec<f64>]) {
    let n = lengths.len() + 1;
    let mut m = vec![0.0; n];
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut diag = vec![0.0; n];
    for (e, (&h, &k)) in lengths.iter().zip(stiff).enumerate() {
        m[e] += h / 2.0;
        m[e + 1] += h / 2.0;
        diag[e] += dt * k;
        diag[e + 1] += dt * k;
        upper[e] -= dt * k;
        lower[e + 1] -= dt * k;
    }
    for l in 0..n {
        diag[l] += m[l] * (1.0 + dt * react[l]);
    }
    let rhs: Vec<Vec<f64>> = funcs
        .iter()
        .map(|f| f.iter().zip(&m).map(|(v, w)| v * w).collect())
        .collect();
    tridiagonal_dirichlet(&lower, &diag, &upper, funcs, &rhs);
}

const LINE_RULE_POINTS: usize = 5;

/// Propagates the two basis functions of a 1D cell.
pub fn propagate_1d(
    basis: &MsBasis1D,
    start: &[f64],
    end: &[f64],
    field: &Field1D,
    form: Form,
    steps: Substeps,
) -> Result<MsBasis1D> {
    let n = start.len();
    if end.len() != n || basis.functions.iter().any(|f| f.len() != n) {
        return Err(Error::InvalidArgument("propagation data does not match the fine mesh".into()));
    }
    let rule = SegmentRule::gauss(LINE_RULE_POINTS);
    let mut funcs = basis.functions.to_vec();
    for s in 1..=steps.n_sub {
        let th = steps.theta(s);
        let t = steps.time(s);
        let x: Vec<f64> = start.iter().zip(end).map(|(a, b)| a + th * (b - a)).collect();
        let mut lengths = Vec::with_capacity(n - 1);
        let mut stiff = Vec::with_capacity(n - 1);
        for (e, w) in x.windows(2).enumerate() {
            let seg = Segment::new(w[0], w[1]).map_err(|err| Error::Propagation {
                cell: basis.cell,
                reason: format!("fine segment {e} inverted at t = {t}: {err}"),
            })?;
            lengths.push(seg.length());
            stiff.push(seg.stiffness(&rule, |p| field.diffusion(p, t))[0][0]);
        }
        let react: Vec<f64> = match form {
            Form::Conservative => x.iter().map(|&p| field.divergence(p, t)).collect(),
            Form::NonConservative => vec![0.0; n],
        };
        line_substep(&lengths, &stiff, &react, steps.dt(), &mut funcs);
    }
    let mut f = funcs.into_iter();
    Ok(MsBasis1D {
        cell: basis.cell,
        functions: [f.next().expect("two"), f.next().expect("two")],
    })
}

/// Propagates the two traces of a coarse edge under the reduced (tangential)
/// dynamics.
pub fn propagate_edge_2d(
    edge: usize,
    trace: &EdgeTrace,
    start: &[[f64; 2]],
    end: &[[f64; 2]],
    field: &Field2D,
    form: Form,
    steps: Substeps,
) -> Result<EdgeTrace> {
    let n = start.len();
    if n < 3 || end.len() != n || trace.iter().any(|f| f.len() != n) {
        return Err(Error::InvalidArgument("edge propagation data does not match the edge".into()));
    }
    let rule = SegmentRule::gauss(LINE_RULE_POINTS);
    let mut funcs = trace.to_vec();
    for s in 1..=steps.n_sub {
        let t = steps.time(s);
        let x = lerp(start, end, steps.theta(s));
        let mut lengths = Vec::with_capacity(n - 1);
        let mut stiff = Vec::with_capacity(n - 1);
        for w in x.windows(2) {
            let seg = PlaneSegment::new(w[0], w[1])?;
            lengths.push(seg.length());
            stiff.push(seg.tangential_stiffness(&rule, |p| field.diffusion(p, t))[0][0]);
        }
        let react: Vec<f64> = match form {
            Form::Conservative => (0..n)
                .map(|l| {
                    let (a, b) = (x[l.saturating_sub(1)], x[(l + 1).min(n - 1)]);
                    let d = [b[0] - a[0], b[1] - a[1]];
                    let len = d[0].hypot(d[1]);
                    field.tangential_divergence(x[l], t, [d[0] / len, d[1] / len])
                })
                .collect(),
            Form::NonConservative => vec![0.0; n],
        };
        if react.iter().any(|r| !r.is_finite()) {
            return Err(Error::Propagation {
                cell: edge,
                reason: "non-finite tangential divergence".into(),
            });
        }
        line_substep(&lengths, &stiff, &react, steps.dt(), &mut funcs);
    }
    let mut f = funcs.into_iter();
    Ok([f.next().expect("two"), f.next().expect("two")])
}

/// Propagates the three basis functions of a 2D cell.
///
/// With [`BoundaryStrategy::EdgeEvolution`], `boundary_n1` carries the cell's
/// boundary values at `t^{n+1}` (built from the evolved edge traces).
#[allow(clippy::too_many_arguments)]
pub fn propagate_cell_2d(
    basis: &MsBasis2D,
    start: &[[f64; 2]],
    end: &[[f64; 2]],
    lattice: &LocalLattice,
    field: &Field2D,
    form: Form,
    strategy: BoundaryStrategy,
    boundary_n1: Option<&[Vec<f64>; 3]>,
    steps: Substeps,
) -> Result<MsBasis2D> {
    let n = lattice.n_nodes();
    if start.len() != n || end.len() != n || basis.functions.iter().any(|f| f.len() != n) {
        return Err(Error::InvalidArgument("cell propagation data does not match the lattice".into()));
    }
    let target = match (strategy, boundary_n1) {
        (BoundaryStrategy::EdgeEvolution, None) => {
            return Err(Error::InvalidArgument(
                "edge evolution needs the evolved edge traces".into(),
            ))
        }
        (BoundaryStrategy::EdgeEvolution, Some(b)) => {
            if b.iter().any(|f| f.len() != n) {
                return Err(Error::InvalidArgument("evolved boundary does not match the lattice".into()));
            }
            Some(b)
        }
        (BoundaryStrategy::FixedBoundary, _) => None,
    };
    let rule = TriangleRule::degree2();
    let interior = &lattice.interior;
    let mut rank = vec![usize::MAX; n];
    for (r, &l) in interior.iter().enumerate() {
        rank[l] = r;
    }
    let start_funcs = basis.functions.clone();
    let mut funcs = basis.functions.clone();
    for s in 1..=steps.n_sub {
        let th = steps.theta(s);
        let t = steps.time(s);
        let dt = steps.dt();
        let x = lerp(start, end, th);
        // boundary values at this substep
        if let Some(b1) = target {
            for &l in &lattice.boundary {
                for k in 0..3 {
                    funcs[k][l] = (1.0 - th) * start_funcs[k][l] + th * b1[k][l];
                }
            }
        }
        let mut m = vec![0.0; n];
        let mut kb = TripletBuilder::with_capacity(n, n, 9 * lattice.cells.len());
        for (e, c) in lattice.cells.iter().enumerate() {
            let tri = Triangle::new([x[c[0]], x[c[1]], x[c[2]]]).map_err(|err| Error::Propagation {
                cell: basis.cell,
                reason: format!("fine cell {e} inverted at t = {t}: {err}"),
            })?;
            let kk = tri.stiffness(&rule, |p| field.diffusion(p, t));
            kb.add_block(c, &kk.concat());
            for &v in c {
                m[v] += tri.area() / 3.0;
            }
        }
        let k = kb.build()?;
        let react: Vec<f64> = match form {
            Form::Conservative => x.iter().map(|&p| field.divergence(p, t)).collect(),
            Form::NonConservative => vec![0.0; n],
        };
        let mut sys = TripletBuilder::with_capacity(interior.len(), interior.len(), k.nnz());
        let mut rhs = vec![vec![0.0; interior.len()]; 3];
        for (r, &i) in interior.iter().enumerate() {
            sys.push(r, r, m[i] * (1.0 + dt * react[i]));
            for f in 0..3 {
                rhs[f][r] = m[i] * funcs[f][i];
            }
            let (cols, vals) = k.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if rank[c] != usize::MAX {
                    sys.push(r, rank[c], dt * v);
                } else {
                    for f in 0..3 {
                        rhs[f][r] -= dt * v * funcs[f][c];
                    }
                }
            }
        }
        let a: CsrMatrix = sys.build()?;
        let lu = SparseLu::factor(&a).map_err(|err| Error::Propagation {
            cell: basis.cell,
            reason: err.to_string(),
        })?;
        for f in 0..3 {
            let y = lu.solve(&rhs[f]);
            for (r, &i) in interior.iter().enumerate() {
                funcs[f][i] = y[r];
            }
        }
    }
    Ok(MsBasis2D {
        cell: basis.cell,
        functions: funcs,
    })
}
