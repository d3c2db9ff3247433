//! Coefficient fields, initial conditions and Péclet numbers for the test catalog.

mod catalog;
mod random;

use std::f64::consts::PI;
use std::sync::Arc;

pub use catalog::{make_test_field, TestField, CATALOG};
pub use random::{random_cellwise_diffusion_2d, random_field_1d, random_velocity_1d, RandomCellField, RandomLineField};

use crate::error::{Error, Result};
use crate::fem::Tensor2;
use crate::mesh::wrap;

/// Which form of the advection-diffusion equation a test solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Form {
    /// `∂t u + c·∇u = ∇·(A∇u)`
    NonConservative,
    /// `∂t u + ∇·(c u) = ∇·(A∇u)`
    Conservative,
}

impl Form {
    pub fn name(self) -> &'static str {
        match self {
            Form::NonConservative => "nonconservative",
            Form::Conservative => "conservative",
        }
    }
}

type Scalar1 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;
type Vector2 = Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;
type Scalar2 = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;
type Tensor2Fn = Arc<dyn Fn([f64; 2], f64) -> Tensor2 + Send + Sync>;

/// Step of the central differences used when no analytic divergence exists.
pub const FD_STEP: f64 = 1e-5;

/// Velocity and diffusivity on the unit interval.
#[derive(Clone)]
pub struct Field1D {
    velocity: Scalar1,
    diffusion: Scalar1,
    divergence: Option<Scalar1>,
}

impl Field1D {
    pub fn new(
        velocity: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            velocity: Arc::new(velocity),
            diffusion: Arc::new(diffusion),
            divergence: None,
        }
    }

    pub fn with_divergence(mut self, div: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        self.divergence = Some(Arc::new(div));
        self
    }

    pub fn constant(c: f64, a: f64) -> Self {
        Self::new(move |_, _| c, move |_, _| a).with_divergence(|_, _| 0.0)
    }

    pub fn velocity(&self, x: f64, t: f64) -> f64 {
        (self.velocity)(x, t)
    }

    pub fn diffusion(&self, x: f64, t: f64) -> f64 {
        (self.diffusion)(x, t)
    }

    /// `dc/dx`, analytic when available and central differences otherwise.
    pub fn divergence(&self, x: f64, t: f64) -> f64 {
        match &self.divergence {
            Some(d) => d(x, t),
            None => (self.velocity(x + FD_STEP, t) - self.velocity(x - FD_STEP, t)) / (2.0 * FD_STEP),
        }
    }
}

/// Velocity and diffusion tensor on the unit torus.
#[derive(Clone)]
pub struct Field2D {
    velocity: Vector2,
    diffusion: Tensor2Fn,
    divergence: Option<Scalar2>,
}

impl Field2D {
    pub fn new(
        velocity: impl Fn([f64; 2], f64) -> [f64; 2] + Send + Sync + 'static,
        diffusion: impl Fn([f64; 2], f64) -> Tensor2 + Send + Sync + 'static,
    ) -> Self {
        Self {
            velocity: Arc::new(velocity),
            diffusion: Arc::new(diffusion),
            divergence: None,
        }
    }

    pub fn with_divergence(mut self, div: impl Fn([f64; 2], f64) -> f64 + Send + Sync + 'static) -> Self {
        self.divergence = Some(Arc::new(div));
        self
    }

    pub fn constant(c: [f64; 2], a: Tensor2) -> Self {
        Self::new(move |_, _| c, move |_, _| a).with_divergence(|_, _| 0.0)
    }

    pub fn velocity(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        (self.velocity)(x, t)
    }

    pub fn diffusion(&self, x: [f64; 2], t: f64) -> Tensor2 {
        (self.diffusion)(x, t)
    }

    pub fn divergence(&self, x: [f64; 2], t: f64) -> f64 {
        match &self.divergence {
            Some(d) => d(x, t),
            None => fd_divergence(|p| self.velocity(p, t), x),
        }
    }

    /// Derivative of `c·τ` along the unit direction `tau`.
    pub fn tangential_divergence(&self, x: [f64; 2], t: f64, tau: [f64; 2]) -> f64 {
        let h = FD_STEP;
        let f = |s: f64| {
            let c = self.velocity([x[0] + s * tau[0], x[1] + s * tau[1]], t);
            c[0] * tau[0] + c[1] * tau[1]
        };
        (f(h) - f(-h)) / (2.0 * h)
    }
}

pub(crate) fn fd_divergence(c: impl Fn([f64; 2]) -> [f64; 2], x: [f64; 2]) -> f64 {
    let h = FD_STEP;
    let dx = (c([x[0] + h, x[1]])[0] - c([x[0] - h, x[1]])[0]) / (2.0 * h);
    let dy = (c([x[0], x[1] + h])[1] - c([x[0], x[1] - h])[1]) / (2.0 * h);
    dx + dy
}

/// Coefficients of either dimension.
#[derive(Clone)]
pub enum Coefficients {
    Line(Field1D),
    Torus(Field2D),
}

/// A catalog field with its metadata.
#[derive(Clone)]
pub struct CoefField {
    pub id: String,
    pub form: Form,
    pub random: bool,
    pub seed: Option<u64>,
    /// Whether the coefficients depend on time.
    pub time_dependent: bool,
    pub coefficients: Coefficients,
}

impl std::fmt::Debug for CoefField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefField")
            .field("id", &self.id)
            .field("form", &self.form)
            .field("random", &self.random)
            .field("seed", &self.seed)
            .finish_non_exhaustive()
    }
}

impl CoefField {
    pub fn dim(&self) -> usize {
        match self.coefficients {
            Coefficients::Line(_) => 1,
            Coefficients::Torus(_) => 2,
        }
    }

    pub fn line(&self) -> Option<&Field1D> {
        match &self.coefficients {
            Coefficients::Line(f) => Some(f),
            Coefficients::Torus(_) => None,
        }
    }

    pub fn torus(&self) -> Option<&Field2D> {
        match &self.coefficients {
            Coefficients::Torus(f) => Some(f),
            Coefficients::Line(_) => None,
        }
    }
}

/// Periodized 1D Gaussian `exp(-(x-μ)²/2σ²) / (σ√(2π))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian1D {
    pub sigma: f64,
    pub mu: f64,
}

impl Gaussian1D {
    pub fn new(sigma: f64, mu: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidArgument(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma, mu })
    }

    pub fn eval(&self, x: f64) -> f64 {
        let d0 = wrap(x - self.mu + 0.5) - 0.5;
        let norm = 1.0 / (self.sigma * (2.0 * PI).sqrt());
        // images beyond two periods are below double precision
        (-2..=2)
            .map(|k| {
                let d = d0 + k as f64;
                (-d * d / (2.0 * self.sigma * self.sigma)).exp()
            })
            .sum::<f64>()
            * norm
    }
}

/// Equal-weight superposition of periodized Gaussians with a shared covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaussian2D {
    pub cov: Tensor2,
    pub centers: Vec<[f64; 2]>,
    inv: Tensor2,
    norm: f64,
}

impl Gaussian2D {
    pub fn new(cov: Tensor2, centers: Vec<[f64; 2]>) -> Result<Self> {
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(cov[0][0] > 0.0 && det > 0.0) || (cov[0][1] - cov[1][0]).abs() > 0.0 {
            return Err(Error::InvalidArgument("covariance must be symmetric positive definite".into()));
        }
        if centers.is_empty() {
            return Err(Error::InvalidArgument("at least one center is required".into()));
        }
        let inv = [
            [cov[1][1] / det, -cov[0][1] / det],
            [-cov[1][0] / det, cov[0][0] / det],
        ];
        let norm = 1.0 / (centers.len() as f64 * ((2.0 * PI).powi(2) * det).sqrt());
        Ok(Self {
            cov,
            centers,
            inv,
            norm,
        })
    }

    /// The two-bump initial condition of the 2D tests.
    pub fn two_bumps() -> Self {
        Self::new(
            [[3.0 / 100.0, 0.0], [0.0, 3.0 / 100.0]],
            vec![[1.0 / 3.0, 0.5], [2.0 / 3.0, 0.5]],
        )
        .expect("constant covariance is positive definite")
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for mu in &self.centers {
            let d0 = [wrap(x[0] - mu[0] + 0.5) - 0.5, wrap(x[1] - mu[1] + 0.5) - 0.5];
            for kx in -2..=2 {
                for ky in -2..=2 {
                    let d = [d0[0] + kx as f64, d0[1] + ky as f64];
                    let q = d[0] * (self.inv[0][0] * d[0] + self.inv[0][1] * d[1])
                        + d[1] * (self.inv[1][0] * d[0] + self.inv[1][1] * d[1]);
                    s += (-0.5 * q).exp();
                }
            }
        }
        s * self.norm
    }
}

/// Initial condition of either dimension.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Line(Gaussian1D),
    Torus(Gaussian2D),
    /// Spatially constant data, valid in either dimension.
    Constant(f64),
}

impl InitialCondition {
    /// The Gaussian used by every 1D test (σ = 0.1, μ = 0.5).
    pub fn default_1d() -> Self {
        InitialCondition::Line(Gaussian1D { sigma: 0.1, mu: 0.5 })
    }

    pub fn default_2d() -> Self {
        InitialCondition::Torus(Gaussian2D::two_bumps())
    }

    pub fn eval_1d(&self, x: f64) -> f64 {
        match self {
            InitialCondition::Line(g) => g.eval(x),
            InitialCondition::Constant(c) => *c,
            InitialCondition::Torus(_) => f64::NAN,
        }
    }

    pub fn eval_2d(&self, x: [f64; 2]) -> f64 {
        match self {
            InitialCondition::Torus(g) => g.eval(x),
            InitialCondition::Constant(c) => *c,
            InitialCondition::Line(_) => f64::NAN,
        }
    }
}

/// Largest eigenvalue of a symmetric 2×2 tensor's absolute value, i.e. its spectral norm.
pub fn spectral_norm(a: Tensor2) -> f64 {
    let m = 0.5 * (a[0][0] + a[1][1]);
    let d = (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[1][0]).max(0.0).sqrt();
    (m + d).abs().max((m - d).abs())
}

/// Global and local Péclet numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PecletReport {
    /// `‖c‖_{L²} L / ‖A‖_{L²}`.
    pub global: f64,
    /// Smallest sampled pointwise `|c| L / ‖A‖`.
    pub local_min: f64,
    /// Largest pointwise value, refined by zooming in on the sampled maximum.
    pub local_max: f64,
}

const PECLET_SAMPLES_1D: usize = 1 << 12;
const PECLET_SAMPLES_2D: usize = 1 << 7;

/// Péclet numbers of a field at time `t` over domain length `length`.
///
/// Norms of the diffusion tensor are spectral norms; integrals use midpoint
/// sampling on a uniform grid.
pub fn peclet(field: &CoefField, length: f64, t: f64) -> Result<PecletReport> {
    match &field.coefficients {
        Coefficients::Line(f) => {
            let n = PECLET_SAMPLES_1D;
            let local = |x: f64| f.velocity(x, t).abs() * length / f.diffusion(x, t).abs();
            let (mut c2, mut a2) = (0.0, 0.0);
            let (mut lo, mut hi, mut arg) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for i in 0..n {
                let x = (i as f64 + 0.5) / n as f64;
                c2 += f.velocity(x, t).powi(2) / n as f64;
                a2 += f.diffusion(x, t).powi(2) / n as f64;
                let p = local(x);
                lo = lo.min(p);
                if p > hi {
                    hi = p;
                    arg = x;
                }
            }
            if a2 == 0.0 {
                return Err(Error::Division("diffusion vanishes identically".into()));
            }
            let mut h = 1.0 / n as f64;
            for _ in 0..30 {
                for k in -8..=8 {
                    let x = arg + k as f64 * h / 8.0;
                    let p = local(x);
                    if p > hi {
                        hi = p;
                        arg = x;
                    }
                }
                h /= 4.0;
            }
            Ok(PecletReport {
                global: c2.sqrt() * length / a2.sqrt(),
                local_min: lo,
                local_max: hi,
            })
        }
        Coefficients::Torus(f) => {
            let n = PECLET_SAMPLES_2D;
            let local = |x: [f64; 2]| {
                let c = f.velocity(x, t);
                c[0].hypot(c[1]) * length / spectral_norm(f.diffusion(x, t))
            };
            let (mut c2, mut a2) = (0.0, 0.0);
            let mut lo = f64::INFINITY;
            let mut samples = Vec::with_capacity(n * n);
            let w = 1.0 / (n * n) as f64;
            for j in 0..n {
                for i in 0..n {
                    let x = [(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64];
                    let c = f.velocity(x, t);
                    c2 += (c[0] * c[0] + c[1] * c[1]) * w;
                    a2 += spectral_norm(f.diffusion(x, t)).powi(2) * w;
                    let p = local(x);
                    lo = lo.min(p);
                    samples.push((p, x));
                }
            }
            if a2 == 0.0 {
                return Err(Error::Division("diffusion vanishes identically".into()));
            }
            // local maxima are sharp, so several seeds are zoomed independently
            samples.sort_by(|a, b| b.0.total_cmp(&a.0));
            let mut hi = f64::NEG_INFINITY;
            for &(p0, x0) in samples.iter().take(16) {
                let (mut best, mut arg) = (p0, x0);
                let mut h = 1.0 / n as f64;
                for _ in 0..30 {
                    let centre = arg;
                    for ky in -4..=4 {
                        for kx in -4..=4 {
                            let x = [centre[0] + kx as f64 * h / 4.0, centre[1] + ky as f64 * h / 4.0];
                            let p = local(x);
                            if p > best {
                                best = p;
                                arg = x;
                            }
                        }
                    }
                    h /= 3.0;
                }
                hi = hi.max(best);
            }
            Ok(PecletReport {
                global: c2.sqrt() * length / a2.sqrt(),
                local_min: lo,
                local_max: hi,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wrap_field(id: &str, c: Field1D) -> CoefField {
        CoefField {
            id: id.into(),
            form: Form::NonConservative,
            random: false,
            seed: None,
            time_dependent: false,
            coefficients: Coefficients::Line(c),
        }
    }

    #[test]
    fn gaussian_1d_values() {
        let g = Gaussian1D::new(0.1, 0.5).unwrap();
        assert!((g.eval(0.5) - 3.989_422_804_014_327).abs() < 1e-12);
        assert!((g.eval(0.57) - g.eval(0.43)).abs() < 1e-14);
        assert!(Gaussian1D::new(0.0, 0.5).is_err());
    }

    #[test]
    fn gaussian_2d_integrates_to_one() {
        let g = Gaussian2D::two_bumps();
        let n = 200;
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                s += g.eval([(i as f64 + 0.5) / n as f64, (j as f64 + 0.5) / n as f64]);
            }
        }
        assert!((s / (n * n) as f64 - 1.0).abs() < 1e-10);
        assert!(g.eval([0.2, 0.9]) > 0.0);
    }

    #[test]
    fn constant_field_peclet() {
        let r = peclet(&wrap_field("c", Field1D::constant(1.0, 1e-2)), 1.0, 0.0).unwrap();
        assert!((r.global - 100.0).abs() < 1e-10);
        assert!((r.local_max - 100.0).abs() < 1e-10);
        let r = peclet(&wrap_field("z", Field1D::constant(0.0, 1e-2)), 1.0, 0.0).unwrap();
        assert_eq!(r.global, 0.0);
        assert!(matches!(
            peclet(&wrap_field("d", Field1D::constant(1.0, 0.0)), 1.0, 0.0),
            Err(Error::Division(_))
        ));
    }

    #[test]
    fn spectral_norm_of_diagonal_tensor() {
        assert_eq!(spectral_norm([[2.0, 0.0], [0.0, -3.0]]), 3.0);
        assert!((spectral_norm([[2.0, 1.0], [1.0, 2.0]]) - 3.0).abs() < 1e-15);
    }
}
