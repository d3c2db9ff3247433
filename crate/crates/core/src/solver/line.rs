use rayon::prelude::*;

use super::{backward_euler_step, timed, CompositeField, GlobalMatrices, Method, RunStats, Snapshot, SolverConfig, Trajectory, LINE_QUADRATURE_RESOLUTION};
use crate::error::{Error, Result};
use crate::fem::{AdvectionForm, CsrMatrix, LinearSystem, Segment, SegmentRule, TripletBuilder};
use crate::fields::{CoefField, Field1D, Form, InitialCondition};
use crate::mesh::{CoarseMesh1D, FineSubmesh1D, UniformLine};
use crate::propagate::{propagate_1d, Substeps};
use crate::reconstruct::{reconstruct_1d, MsBasis1D, RegularizerSpec};
use crate::semilag::{trace_displacements, Traced1D};

const GAUSS_POINTS: usize = 5;

/// Driver on the periodic unit interval.
pub struct LineSolver<'a> {
    config: SolverConfig,
    field: &'a Field1D,
    time_dependent: bool,
    form: Form,
    coarse: CoarseMesh1D,
    subs: Vec<FineSubmesh1D>,
    fine: UniformLine,
    rule: SegmentRule,
}

/// Element operator block: `−K − C` with the gradient on the trial function,
/// or `−K + C` with the gradient on the test function.
pub(crate) fn line_operator(seg: &Segment, rule: &SegmentRule, field: &Field1D, t: f64, form: Form) -> [[f64; 2]; 2] {
    let k = seg.stiffness(rule, |x| field.diffusion(x, t));
    let (adv, sign) = match form {
        Form::NonConservative => (AdvectionForm::GradientOnTrial, -1.0),
        Form::Conservative => (AdvectionForm::GradientOnTest, 1.0),
    };
    let c = seg.advection(rule, |x| field.velocity(x, t), adv);
    std::array::from_fn(|i| std::array::from_fn(|j| -k[i][j] + sign * c[i][j]))
}

impl<'a> LineSolver<'a> {
    pub fn new(config: &SolverConfig, field: &'a CoefField) -> Result<Self> {
        let line = field
            .line()
            .ok_or_else(|| Error::InvalidArgument(format!("field '{}' is not one-dimensional", field.id)))?;
        let n_cells = match config.method {
            Method::Reference => config.ref_cells,
            _ => config.n_cells,
        };
        let n_fine = match config.method {
            Method::Slmsr => config.n_fine,
            _ => LINE_QUADRATURE_RESOLUTION.div_ceil(n_cells).max(1),
        };
        let coarse = CoarseMesh1D::new(n_cells)?;
        let subs = (0..n_cells)
            .map(|c| FineSubmesh1D::new(&coarse, c, n_fine))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config: config.clone(),
            field: line,
            time_dependent: field.time_dependent,
            form: config.form_for(field),
            coarse,
            subs,
            fine: UniformLine::new(n_cells * n_fine)?,
            rule: SegmentRule::gauss(GAUSS_POINTS),
        })
    }

    pub fn n_fine(&self) -> usize {
        self.subs[0].n_fine
    }

    fn segment(&self, c: usize, l: usize) -> Segment {
        let p = &self.subs[c].positions;
        Segment { x0: p[l], x1: p[l + 1] }
    }

    /// Contracts fine element matrices with the cell's basis functions.
    fn assemble(&self, basis: &[MsBasis1D], prev: Option<&[MsBasis1D]>, t: f64, dt: f64) -> Result<GlobalMatrices> {
        type Blocks = ([[f64; 2]; 2], [[f64; 2]; 2], [[f64; 2]; 2]);
        let nf = self.n_fine();
        let blocks: Vec<Blocks> = (0..self.coarse.n_cells)
            .into_par_iter()
            .map(|c| {
                let phi = &basis[c].functions;
                let mut m = [[0.0; 2]; 2];
                let mut a = [[0.0; 2]; 2];
                let mut nm = [[0.0; 2]; 2];
                for l in 0..nf {
                    let seg = self.segment(c, l);
                    let me = seg.mass();
                    let le = line_operator(&seg, &self.rule, self.field, t, self.form);
                    let loc = |f: &Vec<f64>| [f[l], f[l + 1]];
                    let v: [[f64; 2]; 2] = [loc(&phi[0]), loc(&phi[1])];
                    let dv: Option<[[f64; 2]; 2]> = prev.map(|p| {
                        let q = &p[c].functions;
                        std::array::from_fn(|b| {
                            let (x, y) = (loc(&phi[b]), loc(&q[b]));
                            [(x[0] - y[0]) / dt, (x[1] - y[1]) / dt]
                        })
                    });
                    for i in 0..2 {
                        for j in 0..2 {
                            let (mv, lv) = (me[i][j], le[i][j]);
                            for x in 0..2 {
                                for y in 0..2 {
                                    m[x][y] += v[x][i] * mv * v[y][j];
                                    a[x][y] += v[x][i] * lv * v[y][j];
                                    if let Some(dv) = &dv {
                                        nm[x][y] += v[x][i] * mv * dv[y][j];
                                    }
                                }
                            }
                        }
                    }
                }
                (m, a, nm)
            })
            .collect();
        let n = self.coarse.n_cells;
        let mut bm = TripletBuilder::with_capacity(n, n, 4 * n);
        let mut ba = TripletBuilder::with_capacity(n, n, 4 * n);
        let mut bn = TripletBuilder::with_capacity(n, n, 4 * n);
        for (c, (m, a, nm)) in blocks.iter().enumerate() {
            let dofs = self.coarse.cell_nodes(c);
            for x in 0..2 {
                for y in 0..2 {
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

    fn composite(&self, basis: &[MsBasis1D], w: &[f64]) -> CompositeField {
        let mut values = vec![0.0; self.fine.n_cells];
        for (c, sub) in self.subs.iter().enumerate() {
            let dofs = self.coarse.cell_nodes(c);
            let phi = &basis[c].functions;
            for (l, &g) in sub.global.iter().enumerate() {
                values[g] = w[dofs[0]] * phi[0][l] + w[dofs[1]] * phi[1][l];
            }
        }
        CompositeField::Line {
            line: self.fine,
            weights: w.to_vec(),
            values,
        }
    }

    /// Initial basis: hats, or a reconstruction from the initial data on the untraced mesh.
    fn initial_basis(&self, ic: &InitialCondition, reg: &RegularizerSpec) -> Result<Vec<MsBasis1D>> {
        let nf = self.n_fine();
        (0..self.coarse.n_cells)
            .into_par_iter()
            .map(|c| {
                if self.config.method != Method::Slmsr {
                    return Ok(MsBasis1D::hats(c, nf));
                }
                let sub = &self.subs[c];
                let u: Vec<f64> = sub.positions.iter().map(|&x| ic.eval_1d(x)).collect();
                let g = Traced1D {
                    cell: c,
                    traced_nodes: sub.positions.clone(),
                    t_from: 0.0,
                    t_to: 0.0,
                };
                reconstruct_1d(&g, &u, [u[0], u[nf]], reg).map_err(|e| e.at_cell(0, c))
            })
            .collect()
    }

    /// L² projection of the interpolated initial data onto the basis.
    fn project(&self, basis: &[MsBasis1D], mass: &CsrMatrix, ic: &InitialCondition) -> Result<Vec<f64>> {
        let n = self.coarse.n_cells;
        let mut rhs = vec![0.0; n];
        for c in 0..n {
            let sub = &self.subs[c];
            let dofs = self.coarse.cell_nodes(c);
            for l in 0..sub.n_fine {
                let me = self.segment(c, l).mass();
                let u = [ic.eval_1d(sub.positions[l]), ic.eval_1d(sub.positions[l + 1])];
                for (x, &d) in dofs.iter().enumerate() {
                    let f = &basis[c].functions[x];
                    for i in 0..2 {
                        rhs[d] += f[l + i] * (me[i][0] * u[0] + me[i][1] * u[1]);
                    }
                }
            }
        }
        crate::fem::solve(&LinearSystem::new(mass.clone(), rhs)?.symmetric())
    }

    fn owner(&self, node: usize) -> usize {
        (node / self.n_fine()).min(self.coarse.n_cells - 1)
    }

    /// One semi-Lagrangian basis update from `t0` to `t1`.
    fn evolve_basis(
        &self,
        step: usize,
        current: &CompositeField,
        t0: f64,
        t1: f64,
        reg: &RegularizerSpec,
        stats: &mut RunStats,
    ) -> Result<Vec<MsBasis1D>> {
        let cfg = &self.config;
        let pts: Vec<[f64; 1]> = (0..self.fine.n_cells).map(|g| [self.fine.node(g)]).collect();
        let disp = timed(&mut stats.trace, || {
            trace_displacements(&pts, &|p: [f64; 1], t| [self.field.velocity(p[0], t)], t1, t0, cfg.n_sub_trace)
        })
        .map_err(|e| match e {
            Error::Trace { node, .. } => e.at_cell(step, self.owner(node)),
            e => e,
        })?;
        let values = current.values();
        let samples: Vec<f64> = pts
            .iter()
            .zip(&disp)
            .map(|(p, d)| self.fine.eval(values, p[0] + d[0]))
            .collect();
        let traced: Vec<(Traced1D, MsBasis1D)> = timed(&mut stats.reconstruct, || {
            (0..self.coarse.n_cells)
                .into_par_iter()
                .map(|c| {
                    let sub = &self.subs[c];
                    let g = Traced1D {
                        cell: c,
                        traced_nodes: sub.positions.iter().zip(&sub.global).map(|(x, &k)| x + disp[k][0]).collect(),
                        t_from: t1,
                        t_to: t0,
                    };
                    let u: Vec<f64> = sub.global.iter().map(|&k| samples[k]).collect();
                    let b = reconstruct_1d(&g, &u, [u[0], u[sub.n_fine]], reg).map_err(|e| e.at_cell(step, c))?;
                    Ok((g, b))
                })
                .collect::<Result<_>>()
        })?;
        timed(&mut stats.propagate, || {
            traced
                .par_iter()
                .map(|(g, b)| {
                    let steps = Substeps::new(t0, t1, cfg.n_sub_prop)?;
                    propagate_1d(b, &g.traced_nodes, &self.subs[g.cell].positions, self.field, self.form, steps)
                        .map_err(|e| e.at_cell(step, g.cell))
                })
                .collect()
        })
    }

    pub fn run(&self, ic: &InitialCondition) -> Result<Trajectory> {
        let cfg = &self.config;
        let n_steps = cfg.n_steps()?;
        let report = cfg.report_steps(n_steps);
        let reg = RegularizerSpec::deviation(cfg.alpha_or_default(1));
        let time = |n: usize| cfg.t_end * n as f64 / n_steps as f64;
        let mut stats = RunStats::default();

        let mut basis = timed(&mut stats.reconstruct, || self.initial_basis(ic, &reg))?;
        let mut mats = timed(&mut stats.assemble, || self.assemble(&basis, None, 0.0, cfg.dt))?;
        let mut w = timed(&mut stats.solve, || self.project(&basis, &mats.mass, ic))?;
        let mut current = self.composite(&basis, &w);
        let mut snapshots = Vec::new();
        if report.first() == Some(&0) {
            snapshots.push(Snapshot { step: 0, t: 0.0, field: current.clone() });
        }
        let cached = self.config.method != Method::Slmsr && !self.time_dependent;

        for n in 0..n_steps {
            let (t0, t1) = (time(n), time(n + 1));
            let next = if cfg.method == Method::Slmsr {
                let nb = self.evolve_basis(n + 1, &current, t0, t1, &reg, &mut stats)?;
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
            current = self.composite(&basis, &w);
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
