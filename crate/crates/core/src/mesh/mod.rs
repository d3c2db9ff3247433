//! Periodic coarse meshes, per-cell fine submeshes and point location on the
//! unit interval and the unit torus.

mod line;
mod refine;
mod torus;

pub use line::{CoarseMesh1D, FineSubmesh1D, UniformLine};
pub use refine::{FineMesh2D, FineSubmesh2D, LocalLattice, NodeTag, PointLocation};
pub use torus::{build_periodic_delaunay, EdgeInfo, TriMesh2D};

/// Maps a real coordinate onto `[0, 1)`.
pub fn wrap(x: f64) -> f64 {
    let w = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

pub fn wrap2(p: [f64; 2]) -> [f64; 2] {
    [wrap(p[0]), wrap(p[1])]
}

/// Shortest distance between two points on the unit torus.
pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = |u: f64, v: f64| {
        let t = wrap(u - v);
        t.min(1.0 - t)
    };
    d(a[0], b[0]).hypot(d(a[1], b[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_maps_into_unit_interval() {
        assert!((wrap(1.25) - 0.25).abs() < 1e-15);
        assert!((wrap(-0.1) - 0.9).abs() < 1e-15);
        assert_eq!(wrap(-1e-18), 0.0);
        assert_eq!(wrap(3.0), 0.0);
    }

    #[test]
    fn torus_distance_uses_the_short_way_round() {
        assert!((torus_distance([0.05, 0.5], [0.95, 0.5]) - 0.1).abs() < 1e-14);
    }
}
