use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::fem::Tensor2;
use crate::mesh::{wrap, TriMesh2D};

/// Variance of the knot perturbation of the random velocity.
pub const VELOCITY_NOISE_VARIANCE: f64 = 0.1;

/// One independent stream per knot, so knot values do not depend on the knot count
/// beyond their own index.
fn knot_rng(seed: u64, k: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(k as u64);
    rng
}

fn check_range(min: f64, max: f64) -> Result<()> {
    if !(min < max) || !min.is_finite() || !max.is_finite() {
        return Err(Error::InvalidArgument(format!("empty value range [{min}, {max}]")));
    }
    Ok(())
}

/// Periodic piecewise-linear function through equispaced knots.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomLineField {
    pub knots: Vec<f64>,
}

impl RandomLineField {
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.knots.len();
        let s = wrap(x) * n as f64;
        let k = (s.floor() as usize).min(n - 1);
        let r = s - k as f64;
        (1.0 - r) * self.knots[k] + r * self.knots[(k + 1) % n]
    }
}

/// Uniform knot values, affinely rescaled so that the extremes are exactly `min` and `max`.
pub fn random_field_1d(seed: u64, n_knots: usize, min: f64, max: f64) -> Result<RandomLineField> {
    check_range(min, max)?;
    if n_knots < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 knots, got {n_knots}")));
    }
    let raw: Vec<f64> = (0..n_knots).map(|k| knot_rng(seed, k).random::<f64>()).collect();
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let knots = raw
        .iter()
        .map(|&v| {
            let s = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            (min + s * (max - min)).clamp(min, max)
        })
        .collect();
    Ok(RandomLineField { knots })
}

/// `0.5 + 0.25 cos 2πx` plus Gaussian noise at the knots.
pub fn random_velocity_1d(seed: u64, n_knots: usize) -> Result<RandomLineField> {
    if n_knots < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 knots, got {n_knots}")));
    }
    let noise = Normal::new(0.0, VELOCITY_NOISE_VARIANCE.sqrt()).expect("valid deviation");
    let knots = (0..n_knots)
        .map(|k| {
            let x = k as f64 / n_knots as f64;
            0.5 + 0.25 * (2.0 * std::f64::consts::PI * x).cos() + noise.sample(&mut knot_rng(seed, k))
        })
        .collect();
    Ok(RandomLineField { knots })
}

/// Diagonal diffusion tensor, constant on each cell of its own periodic mesh.
#[derive(Debug, Clone)]
pub struct RandomCellField {
    pub mesh: TriMesh2D,
    pub values: Vec<[f64; 2]>,
}

impl RandomCellField {
    pub fn eval(&self, x: [f64; 2]) -> Tensor2 {
        // Location only fails for non-finite input; fall back to the first cell.
        let c = self.mesh.locate(x).map_or(0, |(c, _)| c);
        let d = self.values[c];
        [[d[0], 0.0], [0.0, d[1]]]
    }
}

/// Two independent diagonal entries per cell, log-uniform in `[min, max]`
/// so that every decade of the range is represented.
pub fn random_cellwise_diffusion_2d(seed: u64, mesh: TriMesh2D, min: f64, max: f64) -> Result<RandomCellField> {
    check_range(min, max)?;
    if min <= 0.0 {
        return Err(Error::InvalidArgument(format!("diffusion bounds must be positive, got {min}")));
    }
    let (l0, l1) = (min.ln(), max.ln());
    let values = (0..mesh.n_cells())
        .map(|c| {
            let mut rng = knot_rng(seed ^ 0x5eed_d1ff, c);
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            [(l0 + a * (l1 - l0)).exp().clamp(min, max), (l0 + b * (l1 - l0)).exp().clamp(min, max)]
        })
        .collect();
    Ok(RandomCellField { mesh, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_periodic_delaunay;

    #[test]
    fn diffusion_knots_span_the_range_exactly() {
        let f = random_field_1d(7, 100, 1e-5, 1e-2).unwrap();
        let lo = f.knots.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = f.knots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, 1e-5);
        assert!((hi - 1e-2).abs() < 1e-18);
        for i in 0..1000 {
            let v = f.eval(i as f64 / 1000.0);
            assert!((1e-5..=1e-2).contains(&v));
        }
    }

    #[test]
    fn same_seed_same_field() {
        assert_eq!(random_field_1d(3, 50, 0.0, 1.0).unwrap(), random_field_1d(3, 50, 0.0, 1.0).unwrap());
        assert_ne!(random_field_1d(3, 50, 0.0, 1.0).unwrap(), random_field_1d(4, 50, 0.0, 1.0).unwrap());
        assert_eq!(random_velocity_1d(9, 100).unwrap(), random_velocity_1d(9, 100).unwrap());
    }

    #[test]
    fn empty_range_is_rejected() {
        assert!(matches!(random_field_1d(0, 10, 1.0, 1.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(random_field_1d(0, 10, 2.0, 1.0), Err(Error::InvalidArgument(_))));
        let m = build_periodic_delaunay(16, 0).unwrap();
        assert!(matches!(random_cellwise_diffusion_2d(0, m, 1e-1, 1e-5), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn velocity_noise_has_the_requested_variance() {
        let f = random_velocity_1d(1, 20_000).unwrap();
        let n = f.knots.len() as f64;
        let resid: Vec<f64> = f
            .knots
            .iter()
            .enumerate()
            .map(|(k, v)| v - 0.5 - 0.25 * (2.0 * std::f64::consts::PI * k as f64 / n).cos())
            .collect();
        let mean = resid.iter().sum::<f64>() / n;
        let var = resid.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!(mean.abs() < 0.01 && (var - 0.1).abs() < 0.005, "{mean} {var}");
    }

    #[test]
    fn cellwise_diffusion_stays_in_bounds() {
        let m = build_periodic_delaunay(512, 2).unwrap();
        let d = random_cellwise_diffusion_2d(2, m, 1e-5, 1e-1).unwrap();
        for v in &d.values {
            assert!((1e-5..=1e-1).contains(&v[0]) && (1e-5..=1e-1).contains(&v[1]));
        }
        let a = d.eval([0.3, 0.7]);
        assert_eq!(a[0][1], 0.0);
    }
}
