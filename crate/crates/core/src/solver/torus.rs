use std::sync::Arc;

use rayon::prelude::*;

use super::{backward_euler_step, timed, CompositeField, GlobalMatrices, Method, RunStats, Snapshot, SolverConfig, Trajectory};
use crate::error::{Error, Result};
use crate::fem::{assemble, assemble_vector, AdvectionForm, CsrMatrix, LinearSystem, Triangle, TriangleRule, TripletBuilder};
use crate::fields::{CoefField, Field2D, Form, InitialCondition};
use crate::mesh::{build_periodic_delaunay, wrap2, FineMesh2D};
use crate::propagate::{propagate_cell_2d, propagate_edge_2d, BoundaryStrategy, Substeps};
use crate::reconstruct::{cell_boundary_values, reconstruct_cell_2d, reconstruct_edge_2d, CellEdge, EdgeTrace, MsBasis2D, RegularizerSpec};
use crate::semilag::{trace_displacements, Traced2D};

/// Element operator block, same sign convention as on the line.
pub(crate) fn torus_operator(tri: &Triangle, rule: &TriangleRule, field: &Field2D, t: f64, form: Form) -> [[f64; 3]; 3] {
    let k = tri.stiffness(rule, |x| field.diffusion(x, t));
    let (adv, sign) = match form {
        Form::NonConservative => (AdvectionForm::GradientOnTrial, -1.0),
        Form::Conservative => (AdvectionForm::GradientOnTest, 1.0),
    };
    let c = tri.advection(rule, |x| field.velocity(x, t), adv);
    std::array::from_fn(|i| std::array::from_fn(|j| -k[i][j] + sign * c[i][j]))
}

/// Builds the coarse Delaunay mesh and its uniform refinement.
pub fn build_fine_mesh(n_cells: usize, n_fine: usize, mesh_seed: u64) -> Result<FineMesh2D> {
    if !n_fine.is_power_of_two() || n_fine < 2 {
        return Err(Error::InvalidArgument(format!(
            "fine cells per coarse edge must be a power of two, got {n_fine}"
        )));
    }
    FineMesh2D::new(build_periodic_delaunay(n_cells, mesh_seed)?, n_fine.trailing_zeros())
}

struct Reconstruction {
    traced: Vec<Traced2D>,
    bases: Vec<MsBasis2D>,
}

/// Driver on the unit torus.
pub struct TorusSolver<'a> {
    config: SolverConfig,
    field: &'a Field2D,
    time_dependent: bool,
    form: Form,
    fine: Arc<FineMesh2D>,
    rule: TriangleRule,
    /// A coarse cell containing each global fine node.
    owner: Vec<usize>,
}

impl<'a> TorusSolver<'a> {
    pub fn new(config: &SolverConfig, field: &'a CoefField) -> Result<Self> {
        let fine = build_fine_mesh(config.n_cells, config.n_fine, config.mesh_seed)?;
        Self::with_mesh(config, field, Arc::new(fine))
    }

    /// Runs on a given refined mesh, so that several methods share one fine grid.
    pub fn with_mesh(config: &SolverConfig, field: &'a CoefField, fine: Arc<FineMesh2D>) -> Result<Self> {
        let torus = field
            .torus()
            .ok_or_else(|| Error::InvalidArgument(format!("field '{}' is not two-dimensional", field.id)))?;
        let mut owner = vec![0; fine.n_nodes()];
        for (c, sub) in fine.submeshes.iter().enumerate().rev() {
            for &g in &sub.global {
                owner[g] = c;
            }
        }
        Ok(Self {
            config: config.clone(),
            field: torus,
            time_dependent: field.time_dependent,
            form: config.form_for(field),
            fine,
            rule: TriangleRule::degree4(),
            owner,
        })
    }

    pub fn mesh(&self) -> &Arc<FineMesh2D> {
        &self.fine
    }

    fn n_dofs(&self) -> usize {
        match self.config.method {
            Method::Reference => self.fine.n_nodes(),
            _ => self.fine.coarse.n_nodes(),
        }
    }

    fn element(&self, c: usize, cell: [usize; 3]) -> Triangle {
        let p = &self.fine.submeshes[c].positions;
        Triangle::unchecked([p[cell[0]], p[cell[1]], p[cell[2]]])
    }

    fn assemble(&self, basis: &[MsBasis2D], prev: Option<&[MsBasis2D]>, t: f64, dt: f64) -> Result<GlobalMatrices> {
        if self.config.method == Method::Reference {
            return self.assemble_reference(t);
        }
        type Block = [[f64; 3]; 3];
        let lattice = &self.fine.lattice;
        let blocks: Vec<(Block, Block, Block)> = (0..self.fine.coarse.n_cells())
            .into_par_iter()
            .map(|c| {
                let phi = &basis[c].functions;
                let (mut m, mut a, mut nm) = ([[0.0; 3]; 3], [[0.0; 3]; 3], [[0.0; 3]; 3]);
                for &cell in &lattice.cells {
                    let tri = self.element(c, cell);
                    let me = tri.mass();
                    let le = torus_operator(&tri, &self.rule, self.field, t, self.form);
                    let v: [[f64; 3]; 3] = std::array::from_fn(|x| cell.map(|l| phi[x][l]));
                    let dv: Option<[[f64; 3]; 3]> = prev.map(|p| {
                        let q = &p[c].functions;
                        std::array::from_fn(|x| std::array::from_fn(|i| (phi[x][cell[i]] - q[x][cell[i]]) / dt))
                    });
                    // element matrices applied to the basis columns
                    let mv: [[f64; 3]; 3] = std::array::from_fn(|y| std::array::from_fn(|i| (0..3).map(|j| me[i][j] * v[y][j]).sum()));
                    let lv: [[f64; 3]; 3] = std::array::from_fn(|y| std::array::from_fn(|i| (0..3).map(|j| le[i][j] * v[y][j]).sum()));
                    for x in 0..3 {
                        for y in 0..3 {
                            m[x][y] += (0..3).map(|i| v[x][i] * mv[y][i]).sum::<f64>();
                            a[x][y] += (0..3).map(|i| v[x][i] * lv[y][i]).sum::<f64>();
                            if let Some(dv) = &dv {
                                nm[x][y] += (0..3).map(|i| v[x][i] * (0..3).map(|j| me[i][j] * dv[y][j]).sum::<f64>()).sum::<f64>();
                            }
                        }
                    }
                }
                (m, a, nm)
            })
            .collect();
        let n = self.n_dofs();
        let cap = 9 * blocks.len();
        let mut bm = TripletBuilder::with_capacity(n, n, cap);
        let mut ba = TripletBuilder::with_capacity(n, n, cap);
        let mut bn = TripletBuilder::with_capacity(n, n, cap);
        for (c, (m, a, nm)) in blocks.iter().enumerate() {
            let dofs = self.fine.coarse.triangles[c];
            for x in 0..3 {
                for y in 0..3 {
                    bm.push(dofs[x], dofs[y], m[x][y]);
                    ba.push(dofs[x], dofs[y], a[x][y]);
                    bn.push(dofs[x], dofs[y], nm[x][y]);
                }
            }
        }
        Ok(GlobalMatrices {
            mass: bm.build()?,
            operator: ba.build()?,
            motion: if prev.is_some() { Some(bn.build()?) } else { None },
        })
    }

    fn assemble_reference(&self, t: f64) -> Result<GlobalMatrices> {
        let conn = self.fine.connectivity();
        let n = self.fine.n_nodes();
        let tri = |e: usize| Triangle::unchecked(self.fine.element(e).1);
        Ok(GlobalMatrices {
            mass: assemble(n, &conn, |e| Ok(tri(e).mass()))?,
            operator: assemble(n, &conn, |e| Ok(torus_operator(&tri(e), &self.rule, self.field, t, self.form)))?,
            motion: None,
        })
    }

    /// Fine composite values and the largest disagreement between cells at shared nodes.
    fn composite(&self, basis: &[MsBasis2D], w: &[f64]) -> (CompositeField, f64) {
        if self.config.method == Method::Reference {
            let field = CompositeField::Torus {
                fine: self.fine.clone(),
                weights: w.to_vec(),
                values: w.to_vec(),
            };
            return (field, 0.0);
        }
        let mut values = vec![f64::NAN; self.fine.n_nodes()];
        let mut defect: f64 = 0.0;
        for (c, sub) in self.fine.submeshes.iter().enumerate() {
            let dofs = self.fine.coarse.triangles[c];
            let phi = &basis[c].functions;
            for (l, &g) in sub.global.iter().enumerate() {
                let v: f64 = (0..3).map(|k| w[dofs[k]] * phi[k][l]).sum();
                if values[g].is_nan() {
                    values[g] = v;
                } else {
                    defect = defect.max((values[g] - v).abs());
                }
            }
        }
        // coarse vertices are the first global fine nodes
        for (v, wv) in values.iter().zip(w) {
            defect = defect.max((v - wv).abs());
        }
        let field = CompositeField::Torus {
            fine: self.fine.clone(),
            weights: w.to_vec(),
            values,
        };
        (field, defect)
    }

    /// Reconstructs edge traces and cell bases from samples at the (traced) fine nodes.
    /// `disp = None` reconstructs on the untraced mesh.
    fn reconstruct(
        &self,
        step: usize,
        disp: Option<&[[f64; 2]]>,
        samples: &[f64],
        times: (f64, f64),
        evolve_edges: bool,
        stats: &mut RunStats,
    ) -> Result<(Reconstruction, Option<Vec<EdgeTrace>>)> {
        let alpha = self.config.alpha_or_default(2);
        let (reg2, reg3) = (RegularizerSpec::harmonic(alpha, 2), RegularizerSpec::harmonic(alpha, 3));
        let coarse = &self.fine.coarse;
        let lattice = &self.fine.lattice;
        let n = lattice.n;
        let moved = |g: usize, p: [f64; 2]| match disp {
            Some(d) => [p[0] + d[g][0], p[1] + d[g][1]],
            None => p,
        };
        let edge_cell = |e: usize| coarse.edges[e].cells.first().map_or(0, |c| c.0);

        let edges: Vec<(Vec<[f64; 2]>, EdgeTrace)> = timed(&mut stats.reconstruct, || {
            (0..coarse.n_edges())
                .into_par_iter()
                .map(|e| {
                    let eg = self.fine.edge_global(e);
                    let poly: Vec<[f64; 2]> = self.fine.edge_polyline(e).into_iter().zip(&eg).map(|(p, &g)| moved(g, p)).collect();
                    let u: Vec<f64> = eg.iter().map(|&g| samples[g]).collect();
                    let trace = reconstruct_edge_2d(&poly, &u, [u[0], u[n]], &reg2).map_err(|err| err.at_cell(step, edge_cell(e)))?;
                    Ok((poly, trace))
                })
                .collect::<Result<_>>()
        })?;
        let evolved: Option<Vec<EdgeTrace>> = if evolve_edges {
            let out = timed(&mut stats.propagate, || {
                edges
                    .par_iter()
                    .enumerate()
                    .map(|(e, (poly, trace))| {
                        let steps = Substeps::new(times.0, times.1, self.config.n_sub_prop)?;
                        propagate_edge_2d(e, trace, poly, &self.fine.edge_polyline(e), self.field, self.form, steps)
                            .map_err(|err| err.at_cell(step, edge_cell(e)))
                    })
                    .collect::<Result<Vec<_>>>()
            })?;
            Some(out)
        } else {
            None
        };

        let cells: Vec<(Traced2D, MsBasis2D)> = timed(&mut stats.reconstruct, || {
            (0..coarse.n_cells())
                .into_par_iter()
                .map(|c| {
                    let sub = &self.fine.submeshes[c];
                    let g = Traced2D {
                        cell: c,
                        traced_nodes: sub.positions.iter().zip(&sub.global).map(|(&p, &k)| moved(k, p)).collect(),
                        t_from: times.1,
                        t_to: times.0,
                    };
                    let u: Vec<f64> = sub.global.iter().map(|&k| samples[k]).collect();
                    let corners = coarse.triangles[c].map(|v| samples[v]);
                    let ce: [CellEdge<'_>; 3] = std::array::from_fn(|k| CellEdge {
                        trace: &edges[coarse.cell_edges[c][k]].1,
                        reversed: coarse.cell_edge_reversed[c][k],
                    });
                    let b = reconstruct_cell_2d(&g, lattice, &u, corners, ce, &reg3).map_err(|e| e.at_cell(step, c))?;
                    Ok((g, b))
                })
                .collect::<Result<_>>()
        })?;
        let (traced, bases) = cells.into_iter().unzip();
        Ok((Reconstruction { traced, bases }, evolved))
    }

    fn initial_basis(&self, ic: &InitialCondition, stats: &mut RunStats) -> Result<Vec<MsBasis2D>> {
        let n_cells = self.fine.coarse.n_cells();
        match self.config.method {
            Method::Reference => Ok(Vec::new()),
            Method::Standard => Ok((0..n_cells).map(|c| MsBasis2D::hats(c, &self.fine.lattice)).collect()),
            Method::Slmsr => {
                let samples: Vec<f64> = self.fine.node_pos.iter().map(|&p| ic.eval_2d(p)).collect();
                Ok(self.reconstruct(0, None, &samples, (0.0, 0.0), false, stats)?.0.bases)
            }
        }
    }

    /// L² projection of the interpolated initial data.
    fn project(&self, basis: &[MsBasis2D], mass: &CsrMatrix, ic: &InitialCondition) -> Result<Vec<f64>> {
        let u0: Vec<f64> = self.fine.node_pos.iter().map(|&p| ic.eval_2d(p)).collect();
        if self.config.method == Method::Reference {
            return Ok(u0);
        }
        let lattice = &self.fine.lattice;
        let tri_dofs = &self.fine.coarse.triangles;
        let rhs = assemble_vector(self.n_dofs(), tri_dofs, |c| {
            let sub = &self.fine.submeshes[c];
            let phi = &basis[c].functions;
            let mut out = [0.0; 3];
            for &cell in &lattice.cells {
                let me = self.element(c, cell).mass();
                let u = cell.map(|l| u0[sub.global[l]]);
                for (x, o) in out.iter_mut().enumerate() {
                    for i in 0..3 {
                        *o += phi[x][cell[i]] * (0..3).map(|j| me[i][j] * u[j]).sum::<f64>();
                    }
                }
            }
            Ok(out)
        })?;
        crate::fem::solve(&LinearSystem::new(mass.clone(), rhs)?.symmetric())
    }

    fn evolve_basis(
        &self,
        step: usize,
        current: &CompositeField,
        t0: f64,
        t1: f64,
        stats: &mut RunStats,
    ) -> Result<Vec<MsBasis2D>> {
        let cfg = &self.config;
        let disp = timed(&mut stats.trace, || {
            trace_displacements(&self.fine.node_pos, &|p, t| self.field.velocity(p, t), t1, t0, cfg.n_sub_trace)
        })
        .map_err(|e| match e {
            Error::Trace { node, .. } => e.at_cell(step, self.owner[node]),
            e => e,
        })?;
        let values = current.values();
        let samples: Vec<f64> = timed(&mut stats.trace, || {
            self.fine
                .node_pos
                .par_iter()
                .zip(&disp)
                .enumerate()
                .map(|(g, (p, d))| {
                    self.fine
                        .eval(values, wrap2([p[0] + d[0], p[1] + d[1]]))
                        .map_err(|e| e.at_cell(step, self.owner[g]))
                })
                .collect::<Result<_>>()
        })?;
        let evolve_edges = cfg.edge_evolution_for(self.form);
        let (rec, evolved) = self.reconstruct(step, Some(&disp), &samples, (t0, t1), evolve_edges, stats)?;
        let coarse = &self.fine.coarse;
        let lattice = &self.fine.lattice;
        let strategy = if evolve_edges {
            BoundaryStrategy::EdgeEvolution
        } else {
            BoundaryStrategy::FixedBoundary
        };
        timed(&mut stats.propagate, || {
            rec.traced
                .par_iter()
                .zip(&rec.bases)
                .map(|(g, b)| {
                    let c = g.cell;
                    let boundary = match &evolved {
                        Some(traces) => Some(cell_boundary_values(
                            lattice,
                            std::array::from_fn(|k| CellEdge {
                                trace: &traces[coarse.cell_edges[c][k]],
                                reversed: coarse.cell_edge_reversed[c][k],
                            }),
                        )?),
                        None => None,
                    };
                    let steps = Substeps::new(t0, t1, cfg.n_sub_prop)?;
                    propagate_cell_2d(
                        b,
                        &g.traced_nodes,
                        &self.fine.submeshes[c].positions,
                        lattice,
                        self.field,
                        self.form,
                        strategy,
                        boundary.as_ref(),
                        steps,
                    )
                })
                .enumerate()
                .map(|(c, r)| r.map_err(|e| e.at_cell(step, c)))
                .collect()
        })
    }

    pub fn run(&self, ic: &InitialCondition) -> Result<Trajectory> {
        let cfg = &self.config;
        let n_steps = cfg.n_steps()?;
        let report = cfg.report_steps(n_steps);
        let time = |n: usize| cfg.t_end * n as f64 / n_steps as f64;
        let mut stats = RunStats::default();

        let mut basis = self.initial_basis(ic, &mut stats)?;
        let mut mats = timed(&mut stats.assemble, || self.assemble(&basis, None, 0.0, cfg.dt))?;
        let mut w = timed(&mut stats.solve, || self.project(&basis, &mats.mass, ic))?;
        let (mut current, defect) = self.composite(&basis, &w);
        stats.max_conformity_defect = defect;
        let mut snapshots = Vec::new();
        if report.first() == Some(&0) {
            snapshots.push(Snapshot { step: 0, t: 0.0, field: current.clone() });
        }
        let cached = cfg.method != Method::Slmsr && !self.time_dependent;

        for n in 0..n_steps {
            let (t0, t1) = (time(n), time(n + 1));
            let next = if cfg.method == Method::Slmsr {
                let nb = self.evolve_basis(n + 1, &current, t0, t1, &mut stats)?;
                let m = timed(&mut stats.assemble, || self.assemble(&nb, Some(&basis), t1, cfg.dt))?;
                basis = nb;
                m
            } else if cached && n > 0 {
                mats.clone()
            } else {
                timed(&mut stats.assemble, || self.assemble(&basis, None, t1, cfg.dt))?
            };
            w = timed(&mut stats.solve, || backward_euler_step(&w, &mats.mass, &next, cfg.dt, cfg.mass_time))?;
            mats = next;
            let (field, defect) = self.composite(&basis, &w);
            current = field;
            stats.max_conformity_defect = stats.max_conformity_defect.max(defect);
            stats.steps += 1;
            if report.binary_search(&(n + 1)).is_ok() {
                snapshots.push(Snapshot { step: n + 1, t: t1, field: current.clone() });
            }
        }
        Ok(Trajectory {
            method: cfg.method,
            snapshots,
            stats,
        })
    }
}
