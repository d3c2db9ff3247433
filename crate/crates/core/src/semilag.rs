//! Backward characteristics: where the fine nodes at `t^{n+1}` came from at `t^n`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fem::signed_area;
use crate::mesh::{LocalLattice, wrap, wrap2};

/// Traced positions of the fine nodes of one coarse cell.
///
/// Positions are unwrapped: they are the Eulerian cell-frame positions plus
/// the integrated displacement, so the traced cell never tears at the seam.
#[derive(Debug, Clone, PartialEq)]
pub struct TracedGeometry<P> {
    pub cell: usize,
    pub traced_nodes: Vec<P>,
    pub t_from: f64,
    pub t_to: f64,
}

pub type Traced1D = TracedGeometry<f64>;
pub type Traced2D = TracedGeometry<[f64; 2]>;

impl Traced1D {
    pub fn wrapped(&self) -> Vec<f64> {
        self.traced_nodes.iter().map(|&x| wrap(x)).collect()
    }
}

impl Traced2D {
    pub fn wrapped(&self) -> Vec<[f64; 2]> {
        self.traced_nodes.iter().map(|&x| wrap2(x)).collect()
    }
}

fn check_times(t_n1: f64, t_n: f64, n_sub: usize) -> Result<()> {
    if !(t_n < t_n1) || n_sub == 0 {
        return Err(Error::InvalidArgument(format!(
            "trace-back needs t_n < t_n1 and n_sub >= 1, got [{t_n}, {t_n1}] with {n_sub} substeps"
        )));
    }
    Ok(())
}

/// Classical RK4 for `dx/dτ = v(x, τ)` from `t0` to `t1` (either direction).
fn rk4<const D: usize>(
    mut x: [f64; D],
    v: &impl Fn([f64; D], f64) -> [f64; D],
    t0: f64,
    t1: f64,
    n_sub: usize,
) -> [f64; D] {
    let h = (t1 - t0) / n_sub as f64;
    let axpy = |x: [f64; D], a: f64, k: [f64; D]| -> [f64; D] { std::array::from_fn(|i| x[i] + a * k[i]) };
    for s in 0..n_sub {
        let t = t0 + s as f64 * h;
        let k1 = v(x, t);
        let k2 = v(axpy(x, 0.5 * h, k1), t + 0.5 * h);
        let k3 = v(axpy(x, 0.5 * h, k2), t + 0.5 * h);
        let k4 = v(axpy(x, h, k3), t + h);
        x = std::array::from_fn(|i| x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]));
    }
    x
}

/// Integrates `dx/dt = c(x, t)` backwards from `t_n1` to `t_n`.
///
/// Equivalent to solving `dx̃/ds = −c(x̃, −s)` forwards over `[−t_n1, −t_n]`.
pub fn trace_point<const D: usize>(
    x: [f64; D],
    velocity: &(impl Fn([f64; D], f64) -> [f64; D] + ?Sized),
    t_n1: f64,
    t_n: f64,
    n_sub: usize,
) -> [f64; D] {
    let rev = |p: [f64; D], s: f64| -> [f64; D] { velocity(p, -s).map(|c| -c) };
    rk4(x, &rev, -t_n1, -t_n, n_sub)
}

/// Integrates forwards from `t_n` to `t_n1` with the same scheme.
pub fn trace_forward<const D: usize>(
    x: [f64; D],
    velocity: &(impl Fn([f64; D], f64) -> [f64; D] + ?Sized),
    t_n: f64,
    t_n1: f64,
    n_sub: usize,
) -> [f64; D] {
    rk4(x, &|p, s| velocity(p, s), t_n, t_n1, n_sub)
}

/// Backward displacements of a set of points, in parallel.
pub fn trace_displacements<const D: usize>(
    points: &[[f64; D]],
    velocity: &(impl Fn([f64; D], f64) -> [f64; D] + Sync),
    t_n1: f64,
    t_n: f64,
    n_sub: usize,
) -> Result<Vec<[f64; D]>> {
    check_times(t_n1, t_n, n_sub)?;
    points
        .par_iter()
        .enumerate()
        .map(|(node, &x)| {
            let y = trace_point(x, velocity, t_n1, t_n, n_sub);
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::Trace {
                    node,
                    reason: format!("non-finite position {y:?} from {x:?}"),
                });
            }
            Ok(std::array::from_fn(|i| y[i] - x[i]))
        })
        .collect()
}

/// Traces the fine nodes of one 1D cell.
pub fn trace_back_1d(
    cell: usize,
    positions: &[f64],
    velocity: &(impl Fn(f64, f64) -> f64 + Sync),
    t_n1: f64,
    t_n: f64,
    n_sub: usize,
) -> Result<Traced1D> {
    let pts: Vec<[f64; 1]> = positions.iter().map(|&x| [x]).collect();
    let d = trace_displacements(&pts, &|p: [f64; 1], t| [velocity(p[0], t)], t_n1, t_n, n_sub)?;
    Ok(TracedGeometry {
        cell,
        traced_nodes: positions.iter().zip(&d).map(|(x, d)| x + d[0]).collect(),
        t_from: t_n1,
        t_to: t_n,
    })
}

/// Traces the fine nodes of one 2D cell.
pub fn trace_back_2d(
    cell: usize,
    positions: &[[f64; 2]],
    velocity: &(impl Fn([f64; 2], f64) -> [f64; 2] + Sync),
    t_n1: f64,
    t_n: f64,
    n_sub: usize,
) -> Result<Traced2D> {
    let d = trace_displacements(positions, velocity, t_n1, t_n, n_sub)?;
    Ok(TracedGeometry {
        cell,
        traced_nodes: positions
            .iter()
            .zip(&d)
            .map(|(x, d)| [x[0] + d[0], x[1] + d[1]])
            .collect(),
        t_from: t_n1,
        t_to: t_n,
    })
}

/// Total measure of a traced cell and whether any fine element is inverted.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMeasure {
    pub measure: f64,
    pub inverted: bool,
}

pub fn traced_cell_measure_1d(g: &Traced1D) -> CellMeasure {
    let x = &g.traced_nodes;
    let mut inverted = false;
    let mut measure = 0.0;
    for w in x.windows(2) {
        let h = w[1] - w[0];
        inverted |= h <= 0.0;
        measure += h;
    }
    CellMeasure { measure, inverted }
}

pub fn traced_cell_measure_2d(g: &Traced2D, lattice: &LocalLattice) -> CellMeasure {
    let x = &g.traced_nodes;
    let mut inverted = false;
    let mut measure = 0.0;
    for c in &lattice.cells {
        let a = signed_area(x[c[0]], x[c[1]], x[c[2]]);
        inverted |= a <= 0.0;
        measure += a;
    }
    CellMeasure { measure, inverted }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::make_test_field;
    use crate::mesh::{build_periodic_delaunay, FineMesh2D};
    use std::f64::consts::PI;

    #[test]
    fn zero_velocity_is_the_identity() {
        let pos: Vec<f64> = (0..=8).map(|l| 0.5 + l as f64 / 64.0).collect();
        let g = trace_back_1d(3, &pos, &|_, _| 0.0, 0.1, 0.0, 1).unwrap();
        assert_eq!(g.traced_nodes, pos);
        assert_eq!(traced_cell_measure_1d(&g).measure, pos[8] - pos[0]);
    }

    #[test]
    fn constant_velocity_is_exact() {
        let pos = vec![[0.2, 0.3], [0.995, 0.5], [0.0, 0.0]];
        let g = trace_back_2d(0, &pos, &|_, _| [1.0, 0.0], 0.01, 0.0, 1).unwrap();
        for (p, q) in pos.iter().zip(&g.traced_nodes) {
            assert!((q[0] - (p[0] - 0.01)).abs() < 1e-15 && q[1] == p[1]);
        }
        // unwrapped, but the wrapped view lands in the unit square
        assert!(g.traced_nodes[2][0] < 0.0 && g.wrapped()[2][0] > 0.98);
    }

    #[test]
    fn rk4_is_fourth_order_against_a_fine_step_oracle() {
        let c = |x: f64, _t: f64| (2.0 * PI * x).sin();
        let dt = 1.0 / 300.0;
        let x0 = 0.3;
        // brute-force explicit Euler with 10^4 substeps, Richardson-extrapolated to remove its O(h) error
        let euler = |n: usize| {
            let h = dt / n as f64;
            let mut x = x0;
            for _ in 0..n {
                x -= h * c(x, 0.0);
            }
            x
        };
        let oracle = 2.0 * euler(20_000) - euler(10_000);
        let e1 = (trace_point([x0], &|p: [f64; 1], t| [c(p[0], t)], dt, 0.0, 1)[0] - oracle).abs();
        let e2 = (trace_point([x0], &|p: [f64; 1], t| [c(p[0], t)], dt, 0.0, 2)[0] - oracle).abs();
        assert!(e1 / e2 > 12.0 && e1 / e2 < 20.0, "{e1} {e2}");
    }

    #[test]
    fn rk4_converges_at_fourth_order_on_catalog_fields() {
        for id in ["1d.resolved", "2d.solenoidal"] {
            let f = make_test_field(id, 0).unwrap();
            let x0 = [0.37, 0.61];
            let run = |n: usize| -> [f64; 2] {
                match (f.line(), f.torus()) {
                    (Some(l), _) => {
                        let y = trace_point([x0[0]], &|p: [f64; 1], t| [l.velocity(p[0], t)], 0.2 + 1.0 / 30.0, 0.2, n);
                        [y[0], 0.0]
                    }
                    (_, Some(t2)) => trace_point(x0, &|p, t| t2.velocity(p, t), 0.2 + 1.0 / 30.0, 0.2, n),
                    _ => unreachable!(),
                }
            };
            let oracle = run(4096);
            let err = |n| {
                let y = run(n);
                ((y[0] - oracle[0]).powi(2) + (y[1] - oracle[1]).powi(2)).sqrt()
            };
            let ratio = err(8) / err(16);
            assert!(ratio > 13.0 && ratio < 19.0, "{id}: {ratio}");
        }
    }

    #[test]
    fn backward_then_forward_returns_home() {
        let f = make_test_field("2d.solenoidal", 0).unwrap();
        let v = f.torus().unwrap();
        let g = |p: [f64; 2], t: f64| v.velocity(p, t);
        for k in 0..50 {
            let x = [k as f64 / 50.0, (k * 7 % 50) as f64 / 50.0];
            // RK4 is not time-symmetric; the round trip error is twice its local error
            let back = trace_point(x, &g, 0.4 + 1.0 / 300.0, 0.4, 4);
            let home = trace_forward(back, &g, 0.4, 0.4 + 1.0 / 300.0, 4);
            assert!((home[0] - x[0]).abs() < 1e-10 && (home[1] - x[1]).abs() < 1e-10);
        }
        let f = make_test_field("1d.resolved", 0).unwrap();
        let l = f.line().unwrap();
        let g = |p: [f64; 1], t: f64| [l.velocity(p[0], t)];
        for k in 0..50 {
            let x = [k as f64 / 50.0];
            let back = trace_point(x, &g, 1.0 / 300.0, 0.0, 1);
            assert!((trace_forward(back, &g, 0.0, 1.0 / 300.0, 1)[0] - x[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn solenoidal_flow_preserves_traced_area() {
        let fine = FineMesh2D::new(build_periodic_delaunay(62, 1).unwrap(), 5).unwrap();
        let f = make_test_field("2d.solenoidal", 0).unwrap();
        let v = f.torus().unwrap();
        let mut worst = 0.0f64;
        for sub in &fine.submeshes {
            let g = trace_back_2d(sub.parent, &sub.positions, &|p, t| v.velocity(p, t), 0.5, 0.5 - 1.0 / 300.0, 1)
                .unwrap();
            let m = traced_cell_measure_2d(&g, &fine.lattice);
            let eulerian = fine.coarse.signed_area(sub.parent);
            assert!(!m.inverted);
            let rel = (m.measure - eulerian).abs() / eulerian;
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "{worst}");
    }

    #[test]
    fn compression_inverts_the_traced_cell() {
        let pos: Vec<f64> = (0..=4).map(|l| l as f64 / 4.0).collect();
        // a field that sends the right part far past the left part
        let g = trace_back_1d(0, &pos, &|x, _| 50.0 * x * x, 0.1, 0.0, 1).unwrap();
        let m = traced_cell_measure_1d(&g);
        assert!(m.inverted);
    }

    #[test]
    fn bad_interval_is_rejected() {
        assert!(matches!(trace_back_1d(0, &[0.0], &|_, _| 0.0, 0.0, 0.1, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(
            trace_back_1d(0, &[0.0], &|x, _| if x < 0.5 { f64::NAN } else { 0.0 }, 0.1, 0.0, 1),
            Err(Error::Trace { node: 0, .. })
        ));
    }

    mod properties {
        use super::*;
        use crate::fields::make_test_field;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn tracing_back_and_forth_returns_home(x in 0.0..1.0f64, y in 0.0..1.0f64, t in 0.0..0.9f64) {
                let f = make_test_field("2d.solenoidal", 0).unwrap();
                let v = f.torus().unwrap();
                let vel = |p: [f64; 2], s: f64| v.velocity(p, s);
                let back = trace_point([x, y], &vel, t + 1.0 / 300.0, t, 4);
                let home = trace_forward(back, &vel, t, t + 1.0 / 300.0, 4);
                prop_assert!((home[0] - x).abs() < 1e-10 && (home[1] - y).abs() < 1e-10);
            }
        }
    }
}
