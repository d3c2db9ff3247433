//! Local inverse problems fitting multiscale basis functions to the solution
//! on traced cells and edges.
//!
//! Every reconstruction is the equality-constrained quadratic program
//!
//! ```text
//! min ‖u − Σ_k w_k φ_k‖²_M + Σ_k α_k (φ_k − p_k)ᵀ R (φ_k − p_k)
//! s.t. φ_k = g_k on the boundary nodes
//! ```
//!
//! solved by eliminating the boundary rows. With equal weights `α_k` a
//! Householder rotation of the unknowns decouples the `d` basis functions
//! into one solve with `|w|² M_II + α R_II` and `d − 1` solves with `α R_II`.

use crate::error::{Error, Result};
use crate::fem::{check_residual, CsrMatrix, PlaneSegment, Segment, SparseLu, Triangle, TripletBuilder};
use crate::mesh::{FineMesh2D, LocalLattice, NodeTag, UniformLine};
use crate::semilag::{Traced1D, Traced2D};

/// Which penalty keeps the reconstruction well posed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegularizerKind {
    /// L² distance to the linear hats of the traced cell.
    DeviationFromLinear,
    /// Lumped-mass-weighted squared discrete Laplacian at the free nodes.
    DiscreteHarmonic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    pub alpha: Vec<f64>,
}

pub const DEFAULT_ALPHA_1D: f64 = 0.1;
pub const DEFAULT_ALPHA_2D: f64 = 1e-3;

impl RegularizerSpec {
    pub fn deviation(alpha: f64) -> Self {
        Self {
            kind: RegularizerKind::DeviationFromLinear,
            alpha: vec![alpha; 2],
        }
    }

    pub fn harmonic(alpha: f64, d: usize) -> Self {
        Self {
            kind: RegularizerKind::DiscreteHarmonic,
            alpha: vec![alpha; d],
        }
    }

    fn check(&self, d: usize) -> Result<()> {
        if self.alpha.len() != d {
            return Err(Error::InvalidArgument(format!(
                "expected {d} regularization weights, got {}",
                self.alpha.len()
            )));
        }
        if let Some(a) = self.alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidArgument(format!("regularization weights must be positive, got {a}")));
        }
        Ok(())
    }
}

/// Basis functions of one 1D cell as fine nodal values, left vertex first.
#[derive(Debug, Clone, PartialEq)]
pub struct MsBasis1D {
    pub cell: usize,
    pub functions: [Vec<f64>; 2],
}

impl MsBasis1D {
    /// Standard hats on the uniform fine submesh.
    pub fn hats(cell: usize, n_fine: usize) -> Self {
        let right: Vec<f64> = (0..=n_fine).map(|l| l as f64 / n_fine as f64).collect();
        let left = right.iter().map(|s| 1.0 - s).collect();
        Self {
            cell,
            functions: [left, right],
        }
    }
}

/// Basis functions of one 2D cell on its local lattice, one per corner.
#[derive(Debug, Clone, PartialEq)]
pub struct MsBasis2D {
    pub cell: usize,
    pub functions: [Vec<f64>; 3],
}

impl MsBasis2D {
    pub fn hats(cell: usize, lattice: &LocalLattice) -> Self {
        let n = lattice.n as f64;
        let f = |k: usize| -> Vec<f64> {
            lattice
                .ij
                .iter()
                .map(|&(i, j)| {
                    let (i, j) = (i as f64 / n, j as f64 / n);
                    [1.0 - i - j, i, j][k]
                })
                .collect()
        };
        Self {
            cell,
            functions: [f(0), f(1), f(2)],
        }
    }
}

/// The two basis traces on a coarse edge, in the edge's canonical direction;
/// `[0]` belongs to the edge's first vertex.
pub type EdgeTrace = [Vec<f64>; 2];

/// Linear traces on an edge with `n` fine segments.
pub fn linear_edge_trace(n: usize) -> EdgeTrace {
    let b: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
    [b.iter().map(|s| 1.0 - s).collect(), b]
}

/// Discretized local problem: operators on the full node set plus the lifts.
#[derive(Debug, Clone)]
pub struct LocalQp {
    pub mass: CsrMatrix,
    pub reg: CsrMatrix,
    pub prior: Vec<Vec<f64>>,
    pub lifts: Vec<Vec<f64>>,
    pub interior: Vec<usize>,
}

/// `Kᵀ_{I,:} W_I⁻¹ K_{I,:}` for a symmetric stiffness `K` and lumped mass `w`.
fn harmonic_penalty(stiff: &CsrMatrix, lumped: &[f64], interior: &[usize]) -> CsrMatrix {
    let n = stiff.n_rows();
    let mut b = TripletBuilder::with_capacity(interior.len(), n, 7 * interior.len());
    for (r, &i) in interior.iter().enumerate() {
        let (cols, vals) = stiff.row(i);
        let s = 1.0 / lumped[i].sqrt();
        for (&c, &v) in cols.iter().zip(vals) {
            b.push(r, c, v * s);
        }
    }
    let s = b.build().expect("indices in range");
    s.transpose().matmul(&s)
}

fn unit_lifts(n: usize, ends: [usize; 2]) -> Vec<Vec<f64>> {
    ends.iter()
        .map(|&e| {
            let mut g = vec![0.0; n];
            g[e] = 1.0;
            g
        })
        .collect()
}

fn polyline_1d(lengths: &[f64]) -> Result<(CsrMatrix, CsrMatrix, Vec<f64>)> {
    let n = lengths.len() + 1;
    let mut m = TripletBuilder::with_capacity(n, n, 4 * n);
    let mut k = TripletBuilder::with_capacity(n, n, 4 * n);
    let mut lumped = vec![0.0; n];
    for (e, &h) in lengths.iter().enumerate() {
        if !(h > 0.0) {
            return Err(Error::SingularGeometry(format!(
                "fine segment {e} has non-positive length {h}"
            )));
        }
        let seg = Segment { x0: 0.0, x1: h };
        let mm = seg.mass();
        let kk = 1.0 / h;
        let dofs = [e, e + 1];
        m.add_block(&dofs, &[mm[0][0], mm[0][1], mm[1][0], mm[1][1]]);
        k.add_block(&dofs, &[kk, -kk, -kk, kk]);
        lumped[e] += h / 2.0;
        lumped[e + 1] += h / 2.0;
    }
    Ok((m.build()?, k.build()?, lumped))
}

impl LocalQp {
    /// A traced 1D cell, with the linear hats on the traced cell as prior.
    pub fn line(positions: &[f64], kind: RegularizerKind) -> Result<Self> {
        let n = positions.len();
        if n < 3 {
            return Err(Error::InvalidArgument(format!("a cell needs at least 3 fine nodes, got {n}")));
        }
        let lengths: Vec<f64> = positions.windows(2).map(|w| w[1] - w[0]).collect();
        let (mass, stiff, lumped) = polyline_1d(&lengths)?;
        let interior: Vec<usize> = (1..n - 1).collect();
        let (x0, x1) = (positions[0], positions[n - 1]);
        let right: Vec<f64> = positions.iter().map(|x| (x - x0) / (x1 - x0)).collect();
        let (reg, prior) = match kind {
            RegularizerKind::DeviationFromLinear => {
                (mass.clone(), vec![right.iter().map(|s| 1.0 - s).collect(), right])
            }
            RegularizerKind::DiscreteHarmonic => (harmonic_penalty(&stiff, &lumped, &interior), vec![vec![0.0; n]; 2]),
        };
        Ok(Self {
            mass,
            reg,
            prior,
            lifts: unit_lifts(n, [0, n - 1]),
            interior,
        })
    }

    /// A traced coarse edge, parameterized by arc length.
    pub fn edge(polyline: &[[f64; 2]]) -> Result<Self> {
        let n = polyline.len();
        if n < 3 {
            return Err(Error::InvalidArgument(format!("an edge needs at least 3 fine nodes, got {n}")));
        }
        let lengths = polyline
            .windows(2)
            .map(|w| PlaneSegment::new(w[0], w[1]).map(|s| s.length()))
            .collect::<Result<Vec<f64>>>()?;
        let (mass, stiff, lumped) = polyline_1d(&lengths)?;
        let interior: Vec<usize> = (1..n - 1).collect();
        Ok(Self {
            reg: harmonic_penalty(&stiff, &lumped, &interior),
            mass,
            prior: vec![vec![0.0; n]; 2],
            lifts: unit_lifts(n, [0, n - 1]),
            interior,
        })
    }

    /// A traced coarse triangle with prescribed boundary values per corner function.
    pub fn cell(positions: &[[f64; 2]], lattice: &LocalLattice, boundary: [Vec<f64>; 3]) -> Result<Self> {
        let n = lattice.n_nodes();
        if positions.len() != n || boundary.iter().any(|b| b.len() != n) {
            return Err(Error::InvalidArgument("cell data does not match the lattice".into()));
        }
        let mut m = TripletBuilder::with_capacity(n, n, 9 * lattice.cells.len());
        let mut k = TripletBuilder::with_capacity(n, n, 9 * lattice.cells.len());
        let mut lumped = vec![0.0; n];
        for (e, c) in lattice.cells.iter().enumerate() {
            let t = Triangle::unchecked([positions[c[0]], positions[c[1]], positions[c[2]]]);
            if !(t.signed_area() > 0.0) {
                return Err(Error::SingularGeometry(format!("traced fine cell {e} is inverted")));
            }
            let mm = t.mass();
            let kk = t.stiffness_constant([[t.area(), 0.0], [0.0, t.area()]]);
            m.add_block(c, &mm.concat());
            k.add_block(c, &kk.concat());
            for &v in c {
                lumped[v] += t.area() / 3.0;
            }
        }
        let stiff = k.build()?;
        let mut lifts: Vec<Vec<f64>> = boundary.into_iter().collect();
        for l in &lattice.interior {
            for g in &mut lifts {
                g[*l] = 0.0;
            }
        }
        Ok(Self {
            mass: m.build()?,
            reg: harmonic_penalty(&stiff, &lumped, &lattice.interior),
            prior: vec![vec![0.0; n]; 3],
            lifts,
            interior: lattice.interior.clone(),
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.mass.n_rows()
    }

    /// Objective value of a candidate basis.
    pub fn objective(&self, phis: &[Vec<f64>], u: &[f64], w: &[f64], alpha: &[f64]) -> f64 {
        let n = self.n_nodes();
        let mut r = u.to_vec();
        for (phi, wk) in phis.iter().zip(w) {
            for i in 0..n {
                r[i] -= wk * phi[i];
            }
        }
        let quad = |a: &CsrMatrix, v: &[f64]| crate::fem::dot(v, &a.mul_vec(v));
        let mut out = quad(&self.mass, &r);
        for (k, phi) in phis.iter().enumerate() {
            let d: Vec<f64> = phi.iter().zip(&self.prior[k]).map(|(a, b)| a - b).collect();
            out += alpha[k] * quad(&self.reg, &d);
        }
        out
    }

    /// Minimizer over the free nodes; returns full nodal vectors.
    pub fn solve(&self, u: &[f64], w: &[f64], alpha: &[f64]) -> Result<Vec<Vec<f64>>> {
        let d = self.lifts.len();
        let n = self.n_nodes();
        if u.len() != n || w.len() != d || alpha.len() != d {
            return Err(Error::InvalidArgument("reconstruction data has the wrong size".into()));
        }
        if u.iter().chain(w).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite samples in reconstruction".into()));
        }
        let mut r = u.to_vec();
        for (g, wk) in self.lifts.iter().zip(w) {
            for i in 0..n {
                r[i] -= wk * g[i];
            }
        }
        let mr = self.mass.mul_vec(&r);
        let rhs: Vec<Vec<f64>> = (0..d)
            .map(|k| {
                let diff: Vec<f64> = self.prior[k].iter().zip(&self.lifts[k]).map(|(p, g)| p - g).collect();
                let rd = self.reg.mul_vec(&diff);
                self.interior
                    .iter()
                    .map(|&i| w[k] * mr[i] + alpha[k] * rd[i])
                    .collect()
            })
            .collect();
        let m_ii = self.mass.submatrix(&self.interior, &self.interior);
        let r_ii = self.reg.submatrix(&self.interior, &self.interior);

        let ys = if alpha.iter().all(|&a| a == alpha[0]) {
            solve_rotated(&m_ii, &r_ii, &rhs, w, alpha[0])?
        } else {
            solve_coupled(&m_ii, &r_ii, &rhs, w, alpha)?
        };
        Ok((0..d)
            .map(|k| {
                let mut phi = self.lifts[k].clone();
                for (r, &i) in self.interior.iter().enumerate() {
                    phi[i] = ys[k][r];
                }
                phi
            })
            .collect())
    }
}

fn checked_solve(lu: &SparseLu, a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let x = lu.solve(b);
    check_residual(a, &x, b)?;
    Ok(x)
}

/// Householder reflector with first column `±w/|w|`.
fn reflector(w: &[f64]) -> Vec<Vec<f64>> {
    let d = w.len();
    let nw = w.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut u: Vec<f64> = w.iter().map(|v| v / nw).collect();
    u[0] += if u[0] >= 0.0 { 1.0 } else { -1.0 };
    let uu: f64 = u.iter().map(|v| v * v).sum();
    (0..d)
        .map(|i| (0..d).map(|j| f64::from(u8::from(i == j)) - 2.0 * u[i] * u[j] / uu).collect())
        .collect()
}

fn solve_rotated(m_ii: &CsrMatrix, r_ii: &CsrMatrix, rhs: &[Vec<f64>], w: &[f64], alpha: f64) -> Result<Vec<Vec<f64>>> {
    let d = w.len();
    let ni = m_ii.n_rows();
    let w2: f64 = w.iter().map(|v| v * v).sum();
    let reg = r_ii.scaled(alpha);
    let reg_lu = SparseLu::factor(&reg)?;
    if w2 == 0.0 {
        return rhs.iter().map(|b| checked_solve(&reg_lu, &reg, b)).collect();
    }
    let q = reflector(w);
    // columns of RHS·Q
    let rot: Vec<Vec<f64>> = (0..d)
        .map(|a| (0..ni).map(|r| (0..d).map(|k| rhs[k][r] * q[k][a]).sum()).collect())
        .collect();
    let first = m_ii.linear_combination(w2, &reg, 1.0);
    let first_lu = SparseLu::factor(&first)?;
    let mut z = Vec::with_capacity(d);
    z.push(checked_solve(&first_lu, &first, &rot[0])?);
    for b in &rot[1..] {
        z.push(checked_solve(&reg_lu, &reg, b)?);
    }
    // Y = Z·Qᵀ, and Q is symmetric
    Ok((0..d)
        .map(|k| (0..ni).map(|r| (0..d).map(|a| z[a][r] * q[k][a]).sum()).collect())
        .collect())
}

fn solve_coupled(
    m_ii: &CsrMatrix,
    r_ii: &CsrMatrix,
    rhs: &[Vec<f64>],
    w: &[f64],
    alpha: &[f64],
) -> Result<Vec<Vec<f64>>> {
    let d = w.len();
    let ni = m_ii.n_rows();
    let mut b = TripletBuilder::with_capacity(d * ni, d * ni, d * d * m_ii.nnz() + d * r_ii.nnz());
    for k in 0..d {
        for i in 0..d {
            for r in 0..ni {
                let (cols, vals) = m_ii.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    b.push(k * ni + r, i * ni + c, w[k] * w[i] * v);
                }
                if i == k {
                    let (cols, vals) = r_ii.row(r);
                    for (&c, &v) in cols.iter().zip(vals) {
                        b.push(k * ni + r, k * ni + c, alpha[k] * v);
                    }
                }
            }
        }
    }
    let a = b.build()?;
    let lu = SparseLu::factor(&a)?;
    let x = checked_solve(&lu, &a, &rhs.concat())?;
    Ok(x.chunks(ni).map(<[f64]>::to_vec).collect())
}

/// Reconstructs the two basis functions of a traced 1D cell.
pub fn reconstruct_1d(g: &Traced1D, u_samples: &[f64], u_end: [f64; 2], reg: &RegularizerSpec) -> Result<MsBasis1D> {
    reg.check(2)?;
    let qp = LocalQp::line(&g.traced_nodes, reg.kind)?;
    let mut f = qp.solve(u_samples, &u_end, &reg.alpha)?.into_iter();
    Ok(MsBasis1D {
        cell: g.cell,
        functions: [f.next().expect("two functions"), f.next().expect("two functions")],
    })
}

/// Reconstructs the two traces of a traced coarse edge.
pub fn reconstruct_edge_2d(
    polyline: &[[f64; 2]],
    u_samples: &[f64],
    u_end: [f64; 2],
    reg: &RegularizerSpec,
) -> Result<EdgeTrace> {
    reg.check(2)?;
    let qp = LocalQp::edge(polyline)?;
    let mut f = qp.solve(u_samples, &u_end, &reg.alpha)?.into_iter();
    Ok([f.next().expect("two traces"), f.next().expect("two traces")])
}

/// One edge trace as seen from a cell: local edge `e` runs from corner `e` to
/// corner `e + 1`, `reversed` when that is against the canonical direction.
#[derive(Debug, Clone, Copy)]
pub struct CellEdge<'a> {
    pub trace: &'a EdgeTrace,
    pub reversed: bool,
}

/// Boundary values of the three corner functions of a cell from its edge traces.
pub fn cell_boundary_values(lattice: &LocalLattice, edges: [CellEdge<'_>; 3]) -> Result<[Vec<f64>; 3]> {
    let n = lattice.n;
    let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| vec![f64::NAN; lattice.n_nodes()]);
    for (e, ce) in edges.iter().enumerate() {
        if ce.trace.iter().any(|t| t.len() != n + 1) {
            return Err(Error::InvalidArgument(format!("edge trace {e} does not match the lattice")));
        }
        let (first, second) = if ce.reversed { (1, 0) } else { (0, 1) };
        let opposite = (e + 2) % 3;
        for k in 0..=n {
            let l = lattice.edge_node(e, k);
            let kc = if ce.reversed { n - k } else { k };
            let vals = [
                (e, ce.trace[first][kc]),
                ((e + 1) % 3, ce.trace[second][kc]),
                (opposite, 0.0),
            ];
            for (corner, v) in vals {
                let slot = &mut out[corner][l];
                if slot.is_nan() {
                    *slot = v;
                } else if *slot != v {
                    return Err(Error::Conformity(format!(
                        "corner function {corner} takes {} and {v} at lattice node {l}",
                        *slot
                    )));
                }
            }
        }
    }
    for (l, t) in lattice.tags.iter().enumerate() {
        if *t == NodeTag::Interior {
            for f in &mut out {
                f[l] = 0.0;
            }
        }
    }
    Ok(out)
}

/// Reconstructs the interior of a traced coarse triangle with fixed edge traces.
pub fn reconstruct_cell_2d(
    g: &Traced2D,
    lattice: &LocalLattice,
    u_samples: &[f64],
    u_corners: [f64; 3],
    edges: [CellEdge<'_>; 3],
    reg: &RegularizerSpec,
) -> Result<MsBasis2D> {
    reg.check(3)?;
    let boundary = cell_boundary_values(lattice, edges)?;
    let qp = LocalQp::cell(&g.traced_nodes, lattice, boundary)?;
    let mut f = qp.solve(u_samples, &u_corners, &reg.alpha)?.into_iter();
    Ok(MsBasis2D {
        cell: g.cell,
        functions: std::array::from_fn(|_| f.next().expect("three functions")),
    })
}

/// Value at `x` of the fine composite field on a periodic line.
pub fn sample_global_1d(line: &UniformLine, values: &[f64], x: f64) -> f64 {
    line.eval(values, x)
}

/// Value at `p` of the fine composite field on the torus.
pub fn sample_global_2d(fine: &FineMesh2D, values: &[f64], p: [f64; 2]) -> Result<f64> {
    fine.eval(values, p)
}
