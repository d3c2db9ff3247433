use std::f64::consts::PI;

use super::random::{random_cellwise_diffusion_2d, random_field_1d, random_velocity_1d};
use super::{CoefField, Coefficients, Field1D, Field2D, Form};
use crate::error::{Error, Result};
use crate::fem::Tensor2;
use crate::mesh::build_periodic_delaunay;

/// Catalog test identifiers.
pub const CATALOG: [&str; 11] = [
    "1d.series.a",
    "1d.series.b",
    "1d.series.c",
    "1d.series.d",
    "1d.unresolved",
    "1d.resolved",
    "1d.random",
    "2d.solenoidal",
    "2d.div.nonconservative",
    "2d.div.conservative",
    "2d.random",
];

/// Parsed catalog identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestField {
    SeriesA,
    SeriesB,
    SeriesC,
    SeriesD,
    Unresolved,
    Resolved,
    Random1D,
    Solenoidal,
    DivNonConservative,
    DivConservative,
    Random2D,
}

impl TestField {
    pub fn parse(id: &str) -> Result<Self> {
        Ok(match id {
            "1d.series.a" => Self::SeriesA,
            "1d.series.b" => Self::SeriesB,
            "1d.series.c" => Self::SeriesC,
            "1d.series.d" => Self::SeriesD,
            "1d.unresolved" => Self::Unresolved,
            "1d.resolved" => Self::Resolved,
            "1d.random" => Self::Random1D,
            "2d.solenoidal" => Self::Solenoidal,
            "2d.div.nonconservative" => Self::DivNonConservative,
            "2d.div.conservative" => Self::DivConservative,
            "2d.random" => Self::Random2D,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown test '{other}'; known tests: {}",
                    CATALOG.join(", ")
                )))
            }
        })
    }

    pub fn id(self) -> &'static str {
        CATALOG[self as usize]
    }

    pub fn dim(self) -> usize {
        if (self as usize) < 7 {
            1
        } else {
            2
        }
    }

    pub fn form(self) -> Form {
        match self {
            Self::SeriesC | Self::SeriesD | Self::DivConservative => Form::Conservative,
            _ => Form::NonConservative,
        }
    }
}

/// Terms `amp · cos(ω_t π t) · cos(ω_x π x)`.
#[derive(Debug, Clone)]
struct CosSeries(Vec<(f64, f64, f64)>);

impl CosSeries {
    fn eval(&self, x: f64, t: f64) -> f64 {
        self.0
            .iter()
            .map(|&(a, wt, wx)| a * (wt * PI * t).cos() * (wx * PI * x).cos())
            .sum()
    }

    fn dx(&self, x: f64, t: f64) -> f64 {
        self.0
            .iter()
            .map(|&(a, wt, wx)| -a * (wt * PI * t).cos() * wx * PI * (wx * PI * x).sin())
            .sum()
    }

    fn time_dependent(&self) -> bool {
        self.0.iter().any(|&(_, wt, _)| wt != 0.0)
    }
}

fn series_field(c: CosSeries, a: CosSeries) -> (Field1D, bool) {
    let td = c.time_dependent() || a.time_dependent();
    let cd = c.clone();
    let f = Field1D::new(move |x, t| c.eval(x, t), move |x, t| a.eval(x, t))
        .with_divergence(move |x, t| cd.dx(x, t));
    (f, td)
}

/// The oscillatory diffusion tensor shared by the deterministic 2D tests,
/// `0.01·(I − 0.9999·diag(sin 60πx₁, sin 60πx₂))`.
pub(crate) fn oscillatory_tensor(x: [f64; 2]) -> Tensor2 {
    [
        [0.01 * (1.0 - 0.9999 * (60.0 * PI * x[0]).sin()), 0.0],
        [0.0, 0.01 * (1.0 - 0.9999 * (60.0 * PI * x[1]).sin())],
    ]
}

/// Four vortices drifting in x₁: the perpendicular gradient of
/// `ψ = sin(2π(x₁−t)) sin(2πx₂)`.
pub fn stream_velocity(x: [f64; 2], t: f64) -> [f64; 2] {
    let s1 = (2.0 * PI * (x[0] - t)).sin();
    let c1 = (2.0 * PI * (x[0] - t)).cos();
    let s2 = (2.0 * PI * x[1]).sin();
    let c2 = (2.0 * PI * x[1]).cos();
    [2.0 * PI * s1 * c2, -2.0 * PI * c1 * s2]
}

fn rotating_velocity(x: [f64; 2], t: f64) -> [f64; 2] {
    let s1 = (2.0 * PI * (x[0] - t)).sin();
    let c1 = (2.0 * PI * (x[0] - t)).cos();
    let s2 = (2.0 * PI * x[1]).sin();
    let c2 = (2.0 * PI * x[1]).cos();
    let sx = (2.0 * PI * x[0]).sin();
    let v = [2.0 * PI * s1 * c2, -c1 * s2 * sx];
    let (st, ct) = (2.0 * PI * t).sin_cos();
    [ct * v[0] + st * v[1], -st * v[0] + ct * v[1]]
}

fn rotating_divergence(x: [f64; 2], t: f64) -> f64 {
    let tp = 2.0 * PI;
    let s1 = (tp * (x[0] - t)).sin();
    let c1 = (tp * (x[0] - t)).cos();
    let s2 = (tp * x[1]).sin();
    let c2 = (tp * x[1]).cos();
    let (sx, cx) = (tp * x[0]).sin_cos();
    let d1v1 = tp * tp * c1 * c2;
    let d2v1 = -tp * tp * s1 * s2;
    let d1v2 = tp * s2 * (s1 * sx - c1 * cx);
    let d2v2 = -tp * c1 * c2 * sx;
    let (st, ct) = (tp * t).sin_cos();
    ct * d1v1 + st * d1v2 - st * d2v1 + ct * d2v2
}

fn separatrix_velocity(x: [f64; 2], t: f64) -> [f64; 2] {
    let s1 = (2.0 * PI * (x[0] - t)).sin();
    let c1 = (2.0 * PI * (x[0] - t)).cos();
    let g = (PI * (x[1] - 0.5)).cos().powi(2);
    let k = 2.0 * PI / 5.0;
    [k * s1 * s1 * g, k * 2.0 * s1 * c1 * g]
}

fn separatrix_divergence(x: [f64; 2], t: f64) -> f64 {
    let s1 = (2.0 * PI * (x[0] - t)).sin();
    let c1 = (2.0 * PI * (x[0] - t)).cos();
    let g = (PI * (x[1] - 0.5)).cos().powi(2);
    let dg = -PI * (2.0 * PI * (x[1] - 0.5)).sin();
    2.0 * PI / 5.0 * 2.0 * s1 * c1 * (2.0 * PI * g + dg)
}

/// Number of knots of the random 1D coefficients.
pub const RANDOM_KNOTS_1D: usize = 100;
/// Target cell count of the mesh carrying the random 2D diffusion.
pub const RANDOM_DIFFUSION_CELLS_2D: usize = 512;

/// Builds a catalog field. `seed` only affects the random tests.
pub fn make_test_field(id: &str, seed: u64) -> Result<CoefField> {
    let test = TestField::parse(id)?;
    let cs = |v: &[(f64, f64, f64)]| CosSeries(v.to_vec());
    let (coefficients, time_dependent, random) = match test {
        TestField::SeriesA | TestField::SeriesB | TestField::SeriesC | TestField::SeriesD | TestField::Unresolved
        | TestField::Resolved => {
            let (c, a) = match test {
                TestField::SeriesA => (
                    cs(&[(0.25, 0.0, 0.0), (0.5, 0.0, 10.0), (0.25, 0.0, 74.0), (0.15, 0.0, 196.0)]),
                    cs(&[(1e-3, 0.0, 0.0), (9e-4, 10.0, 86.0)]),
                ),
                TestField::SeriesB => (
                    cs(&[(0.5, 2.0, 0.0), (0.25, 6.0, 8.0), (0.125, 4.0, 62.0), (0.125, 0.0, 150.0)]),
                    cs(&[(1e-3, 0.0, 0.0), (9e-4, 10.0, 86.0)]),
                ),
                TestField::SeriesC => (
                    cs(&[(0.5, 0.0, 0.0), (0.125, 0.0, 8.0), (0.125, 0.0, 62.0), (0.125, 0.0, 150.0)]),
                    cs(&[(1e-2, 0.0, 0.0), (9e-3, 10.0, 86.0)]),
                ),
                TestField::SeriesD => (
                    cs(&[(0.75, 0.0, 0.0), (0.5, 0.0, 8.0), (0.25, 0.0, 62.0), (0.1, 0.0, 150.0)]),
                    cs(&[(1e-2, 0.0, 0.0), (9e-3, 10.0, 86.0)]),
                ),
                TestField::Unresolved => (
                    cs(&[(0.5, 0.0, 0.0), (0.25, 0.0, 8.0), (0.125, 0.0, 196.0), (0.0625, 0.0, 210.0)]),
                    cs(&[(1e-3, 0.0, 0.0), (9e-4, 0.0, 174.0)]),
                ),
                _ => (
                    cs(&[(0.5, 0.0, 0.0), (0.25, 0.0, 6.0), (0.125, 0.0, 10.0), (0.0625, 0.0, 14.0)]),
                    cs(&[(1e-3, 0.0, 0.0), (9e-4, 0.0, 16.0)]),
                ),
            };
            let (f, td) = series_field(c, a);
            (Coefficients::Line(f), td, false)
        }
        TestField::Random1D => {
            let a = random_field_1d(seed, RANDOM_KNOTS_1D, 1e-5, 1e-2)?;
            let c = random_velocity_1d(seed.wrapping_add(1), RANDOM_KNOTS_1D)?;
            let f = Field1D::new(move |x, _| c.eval(x), move |x, _| a.eval(x));
            (Coefficients::Line(f), false, true)
        }
        TestField::Solenoidal => (
            Coefficients::Torus(
                Field2D::new(stream_velocity, |x, _| oscillatory_tensor(x)).with_divergence(|_, _| 0.0),
            ),
            true,
            false,
        ),
        TestField::DivNonConservative => (
            Coefficients::Torus(
                Field2D::new(rotating_velocity, |x, _| oscillatory_tensor(x)).with_divergence(rotating_divergence),
            ),
            true,
            false,
        ),
        TestField::DivConservative => (
            Coefficients::Torus(
                Field2D::new(separatrix_velocity, |x, _| oscillatory_tensor(x))
                    .with_divergence(separatrix_divergence),
            ),
            true,
            false,
        ),
        TestField::Random2D => {
            let mesh = build_periodic_delaunay(RANDOM_DIFFUSION_CELLS_2D, seed)?;
            let d = random_cellwise_diffusion_2d(seed, mesh, 1e-5, 1e-1)?;
            (
                Coefficients::Torus(
                    Field2D::new(stream_velocity, move |x, _| d.eval(x)).with_divergence(|_, _| 0.0),
                ),
                true,
                true,
            )
        }
    };
    Ok(CoefField {
        id: test.id().to_string(),
        form: test.form(),
        random,
        seed: random.then_some(seed),
        time_dependent,
        coefficients,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::fd_divergence;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn unresolved_coefficients_at_the_origin() {
        let f = make_test_field("1d.unresolved", 0).unwrap();
        let l = f.line().unwrap();
        assert!((l.velocity(0.0, 0.3) - 0.9375).abs() < 1e-15);
        assert!((l.diffusion(0.0, 0.0) - 1.9e-3).abs() < 1e-15);
        assert_eq!(f.form, Form::NonConservative);
    }

    #[test]
    fn unknown_ids_are_rejected() {
        assert!(matches!(make_test_field("3d.nope", 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn catalog_ids_round_trip() {
        for id in CATALOG {
            assert_eq!(TestField::parse(id).unwrap().id(), id);
        }
    }

    #[test]
    fn analytic_1d_divergences_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for id in &CATALOG[..6] {
            let f = make_test_field(id, 0).unwrap();
            let l = f.line().unwrap();
            for _ in 0..200 {
                let (x, t) = (rng.random::<f64>(), rng.random::<f64>());
                let h = 1e-6;
                let fd = (l.velocity(x + h, t) - l.velocity(x - h, t)) / (2.0 * h);
                assert!((fd - l.divergence(x, t)).abs() < 1e-5 * (1.0 + fd.abs()), "{id}");
            }
        }
    }

    #[test]
    fn analytic_2d_divergences_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for id in ["2d.solenoidal", "2d.div.nonconservative", "2d.div.conservative"] {
            let f = make_test_field(id, 0).unwrap();
            let t2 = f.torus().unwrap();
            for _ in 0..1000 {
                let x = [rng.random::<f64>(), rng.random::<f64>()];
                let t = rng.random::<f64>();
                let fd = fd_divergence(|p| t2.velocity(p, t), x);
                assert!((fd - t2.divergence(x, t)).abs() < 1e-6 * (1.0 + fd.abs()), "{id}: {fd}");
            }
        }
    }

    #[test]
    fn stream_velocity_is_the_perpendicular_gradient() {
        let psi = |x: [f64; 2], t: f64| (2.0 * PI * (x[0] - t)).sin() * (2.0 * PI * x[1]).sin();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let h = 1e-6;
        for _ in 0..500 {
            let x = [rng.random::<f64>(), rng.random::<f64>()];
            let t = rng.random::<f64>();
            let c = stream_velocity(x, t);
            let dpsi_dy = (psi([x[0], x[1] + h], t) - psi([x[0], x[1] - h], t)) / (2.0 * h);
            let dpsi_dx = (psi([x[0] + h, x[1]], t) - psi([x[0] - h, x[1]], t)) / (2.0 * h);
            assert!((c[0] - dpsi_dy).abs() < 1e-6 && (c[1] + dpsi_dx).abs() < 1e-6);
            let c1 = stream_velocity(x, t + 1.0);
            assert!((c[0] - c1[0]).abs() < 1e-12 && (c[1] - c1[1]).abs() < 1e-12);
        }
        let c = stream_velocity([0.25, 0.25], 0.0);
        assert!(c[0].abs() < 1e-14 && c[1].abs() < 1e-14);
    }

    #[test]
    fn diffusion_tensors_are_positive_definite_and_velocities_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for id in CATALOG {
            let f = make_test_field(id, 11).unwrap();
            for _ in 0..10_000 {
                let t = rng.random::<f64>();
                match &f.coefficients {
                    Coefficients::Line(l) => {
                        let x = rng.random::<f64>();
                        assert!(l.diffusion(x, t) > 0.0, "{id}");
                        assert!(l.velocity(x, t).abs() <= 10.0, "{id}");
                    }
                    Coefficients::Torus(t2) => {
                        let x = [rng.random::<f64>(), rng.random::<f64>()];
                        let a = t2.diffusion(x, t);
                        let tr = a[0][0] + a[1][1];
                        let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
                        assert_eq!(a[0][1], a[1][0]);
                        assert!(tr > 0.0 && det > 0.0, "{id}");
                        let c = t2.velocity(x, t);
                        assert!(c[0].hypot(c[1]) <= 4.0 * PI, "{id}");
                    }
                }
            }
        }
    }

    #[test]
    fn solenoidal_local_peclet_reaches_millions() {
        let f = make_test_field("2d.solenoidal", 0).unwrap();
        let r = crate::fields::peclet(&f, 1.0, 0.0).unwrap();
        assert!(r.local_max > 1e6 && r.local_max < 1e7, "{}", r.local_max);
    }
}
