//! Global Eulerian time stepping over multiscale or hat bases.
//!
//! One step solves `(M − δt A + δt N) u^{n+1} = M u^n` where `M` is the mass
//! matrix of the basis, `A` the advection-diffusion operator at `t^{n+1}` and
//! `N = B_{n+1}ᵀ M_f (B_{n+1} − B_n) / δt` accounts for the moving basis.

mod line;
mod torus;

use std::sync::Arc;
use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::fem::{solve, CsrMatrix, LinearSystem};
use crate::fields::{make_test_field, CoefField, Form, InitialCondition};
use crate::mesh::{FineMesh2D, UniformLine};
use crate::reconstruct::{DEFAULT_ALPHA_1D, DEFAULT_ALPHA_2D};

pub use line::LineSolver;
pub use torus::{build_fine_mesh, TorusSolver};

/// Which basis the global step runs on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Reconstructed and propagated multiscale basis on the coarse mesh.
    Slmsr,
    /// Coarse hats with fine-grid quadrature.
    Standard,
    /// Hats on the high-resolution reference mesh.
    Reference,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Slmsr => "slmsr",
            Method::Standard => "standard",
            Method::Reference => "reference",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "slmsr" => Ok(Method::Slmsr),
            "standard" | "fem" => Ok(Method::Standard),
            "reference" => Ok(Method::Reference),
            other => Err(Error::InvalidArgument(format!("unknown method '{other}'"))),
        }
    }
}

/// Time at which the mass matrix of the implicit Euler step is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MassTime {
    Tn,
    Tn1,
}

/// Fine quadrature cells per unit length used by the 1D hat solvers.
pub const LINE_QUADRATURE_RESOLUTION: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub test_id: String,
    pub method: Method,
    /// 1D: number of coarse cells. 2D: target number of coarse triangles.
    pub n_cells: usize,
    /// Fine cells per coarse cell (1D) or per coarse edge (2D, a power of two).
    pub n_fine: usize,
    /// Cells of the 1D reference mesh.
    pub ref_cells: usize,
    pub dt: f64,
    pub t_end: f64,
    /// Overrides the form of the catalog field.
    pub form: Option<Form>,
    /// Defaults to on for the conservative form.
    pub edge_evolution: Option<bool>,
    pub alpha: Option<f64>,
    pub n_sub_trace: usize,
    pub n_sub_prop: usize,
    pub mass_time: MassTime,
    /// Seed of the random coefficient fields.
    pub seed: u64,
    /// Seed of the 2D coarse mesh.
    pub mesh_seed: u64,
    pub report_times: Vec<f64>,
    /// Additional snapshot every k steps (0 disables).
    pub snapshot_every: usize,
}

impl SolverConfig {
    /// Defaults of a catalog test.
    pub fn for_test(test_id: &str) -> Self {
        let two_d = test_id.starts_with("2d");
        Self {
            test_id: test_id.to_string(),
            method: Method::Slmsr,
            n_cells: if two_d { 62 } else { 10 },
            n_fine: if two_d { 32 } else { 16 },
            ref_cells: 1000,
            dt: 1.0 / 300.0,
            t_end: 1.0,
            form: None,
            edge_evolution: None,
            alpha: None,
            n_sub_trace: 1,
            n_sub_prop: 1,
            mass_time: MassTime::Tn,
            seed: 0,
            mesh_seed: 1,
            report_times: vec![1.0],
            snapshot_every: 0,
        }
    }

    /// Number of time steps; `T/δt` must be an integer up to rounding.
    pub fn n_steps(&self) -> Result<usize> {
        if !(self.dt > 0.0) || !(self.t_end > 0.0) || !self.dt.is_finite() || !self.t_end.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time step and end time must be positive, got dt = {}, T = {}",
                self.dt, self.t_end
            )));
        }
        let r = self.t_end / self.dt;
        let n = r.round();
        if (r - n).abs() > 1e-9 * r.max(1.0) || n < 1.0 {
            return Err(Error::InvalidArgument(format!(
                "T / dt = {r} is not an integer number of steps"
            )));
        }
        Ok(n as usize)
    }

    pub fn alpha_or_default(&self, dim: usize) -> f64 {
        self.alpha.unwrap_or(if dim == 1 { DEFAULT_ALPHA_1D } else { DEFAULT_ALPHA_2D })
    }

    pub fn form_for(&self, field: &CoefField) -> Form {
        self.form.unwrap_or(field.form)
    }

    pub fn edge_evolution_for(&self, form: Form) -> bool {
        self.edge_evolution.unwrap_or(form == Form::Conservative)
    }

    pub fn validate(&self) -> Result<()> {
        self.n_steps()?;
        if self.n_cells < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 coarse cells, got {}", self.n_cells)));
        }
        if self.n_fine < 2 {
            return Err(Error::InvalidArgument(format!("need at least 2 fine cells, got {}", self.n_fine)));
        }
        if self.n_sub_trace == 0 || self.n_sub_prop == 0 {
            return Err(Error::InvalidArgument("substep counts must be at least 1".into()));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::InvalidArgument(format!("alpha must be positive, got {a}")));
            }
        }
        if let Some(t) = self.report_times.iter().find(|t| !(**t >= 0.0) || **t > self.t_end * (1.0 + 1e-12)) {
            return Err(Error::InvalidArgument(format!("report time {t} outside [0, T]")));
        }
        Ok(())
    }

    /// Steps at which snapshots are taken, snapped to the nearest step.
    fn report_steps(&self, n_steps: usize) -> Vec<usize> {
        let mut s: Vec<usize> = self
            .report_times
            .iter()
            .map(|t| ((t / self.t_end) * n_steps as f64).round() as usize)
            .collect();
        if self.snapshot_every > 0 {
            s.extend((0..=n_steps).step_by(self.snapshot_every));
        }
        if s.is_empty() {
            s.push(n_steps);
        }
        s.sort_unstable();
        s.dedup();
        s
    }
}

/// A solution expanded on its fine representation.
#[derive(Debug, Clone)]
pub enum CompositeField {
    Line {
        line: UniformLine,
        weights: Vec<f64>,
        values: Vec<f64>,
    },
    Torus {
        fine: Arc<FineMesh2D>,
        weights: Vec<f64>,
        values: Vec<f64>,
    },
}

impl CompositeField {
    pub fn weights(&self) -> &[f64] {
        match self {
            CompositeField::Line { weights, .. } | CompositeField::Torus { weights, .. } => weights,
        }
    }

    pub fn values(&self) -> &[f64] {
        match self {
            CompositeField::Line { values, .. } | CompositeField::Torus { values, .. } => values,
        }
    }

    pub fn sample_1d(&self, x: f64) -> Result<f64> {
        match self {
            CompositeField::Line { line, values, .. } => Ok(line.eval(values, x)),
            CompositeField::Torus { .. } => Err(Error::InvalidArgument("1D sample of a 2D field".into())),
        }
    }

    pub fn sample_2d(&self, p: [f64; 2]) -> Result<f64> {
        match self {
            CompositeField::Torus { fine, values, .. } => fine.eval(values, p),
            CompositeField::Line { .. } => Err(Error::InvalidArgument("2D sample of a 1D field".into())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub field: CompositeField,
}

/// Wall-clock time per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RunStats {
    pub steps: usize,
    pub trace: Duration,
    pub reconstruct: Duration,
    pub propagate: Duration,
    pub assemble: Duration,
    pub solve: Duration,
    pub total: Duration,
    /// Largest disagreement of neighbouring cells at shared fine nodes, or of
    /// the composite value at a coarse vertex with its weight.
    pub max_conformity_defect: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub method: Method,
    pub snapshots: Vec<Snapshot>,
    pub stats: RunStats,
}

impl Trajectory {
    pub fn at_time(&self, t: f64) -> Option<&Snapshot> {
        self.snapshots
            .iter()
            .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
            .filter(|s| (s.t - t).abs() < 1e-9)
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("at least one snapshot")
    }
}

/// Global matrices of one step.
#[derive(Debug, Clone)]
pub struct GlobalMatrices {
    pub mass: CsrMatrix,
    /// The operator `A`: minus diffusion minus (non-conservative) or plus
    /// (conservative) advection.
    pub operator: CsrMatrix,
    /// Basis-motion matrix; `None` for time-independent bases.
    pub motion: Option<CsrMatrix>,
}

/// Solves `(M_sel − δt A + δt N) u^{n+1} = M_n u^n`.
pub fn backward_euler_step(
    u_n: &[f64],
    mass_n: &CsrMatrix,
    m: &GlobalMatrices,
    dt: f64,
    mass_time: MassTime,
) -> Result<Vec<f64>> {
    let lhs_mass = match mass_time {
        MassTime::Tn => mass_n,
        MassTime::Tn1 => &m.mass,
    };
    let mut sys = lhs_mass.linear_combination(1.0, &m.operator, -dt);
    if let Some(n) = &m.motion {
        sys = sys.linear_combination(1.0, n, dt);
    }
    let rhs = lhs_mass.mul_vec(u_n);
    solve(&LinearSystem::new(sys, rhs)?)
}

fn timed<T>(acc: &mut Duration, f: impl FnOnce() -> T) -> T {
    let t0 = Instant::now();
    let out = f();
    *acc += t0.elapsed();
    out
}

/// Runs a configured test with its catalog field and default initial condition.
pub fn run(config: &SolverConfig) -> Result<Trajectory> {
    config.validate()?;
    let field = make_test_field(&config.test_id, config.seed)?;
    let ic = if field.dim() == 1 {
        InitialCondition::default_1d()
    } else {
        InitialCondition::default_2d()
    };
    run_with(config, &field, &ic)
}

/// Runs with an explicit field and initial condition.
pub fn run_with(config: &SolverConfig, field: &CoefField, ic: &InitialCondition) -> Result<Trajectory> {
    config.validate()?;
    let start = Instant::now();
    let mut traj = match field.dim() {
        1 => LineSolver::new(config, field)?.run(ic)?,
        _ => TorusSolver::new(config, field)?.run(ic)?,
    };
    traj.stats.total = start.elapsed();
    Ok(traj)
}

/// SLMsR run; the config's method is ignored.
pub fn run_slmsr(config: &SolverConfig, field: &CoefField, ic: &InitialCondition) -> Result<Trajectory> {
    run_with(
        &SolverConfig {
            method: Method::Slmsr,
            ..config.clone()
        },
        field,
        ic,
    )
}

/// Hat-basis run on the coarse mesh (`reference = false`) or the reference mesh.
pub fn run_standard(
    config: &SolverConfig,
    field: &CoefField,
    ic: &InitialCondition,
    reference: bool,
) -> Result<Trajectory> {
    run_with(
        &SolverConfig {
            method: if reference { Method::Reference } else { Method::Standard },
            ..config.clone()
        },
        field,
        ic,
    )
}
