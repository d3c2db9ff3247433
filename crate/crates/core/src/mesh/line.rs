use super::wrap;
use crate::error::{Error, Result};

/// Equispaced periodic partition of the unit interval.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseMesh1D {
    pub n_cells: usize,
    pub nodes: Vec<f64>,
    pub h: f64,
}

impl CoarseMesh1D {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::InvalidArgument(format!(
                "a periodic mesh needs at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self {
            n_cells,
            nodes: (0..n_cells).map(|i| i as f64 / n_cells as f64).collect(),
            h: 1.0 / n_cells as f64,
        })
    }

    /// Node ids of cell `k`, left then right.
    pub fn cell_nodes(&self, k: usize) -> [usize; 2] {
        [k, (k + 1) % self.n_cells]
    }

    /// Unwrapped endpoints of cell `k`; the right end of the last cell is 1.
    pub fn cell_bounds(&self, k: usize) -> (f64, f64) {
        (k as f64 / self.n_cells as f64, (k + 1) as f64 / self.n_cells as f64)
    }

    /// Cell containing `x` and the local coordinate in `[0, 1)`.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = wrap(x) * self.n_cells as f64;
        let k = (s.floor() as usize).min(self.n_cells - 1);
        (k, s - k as f64)
    }

    /// Fine submesh with `n_fine >= 2` cells. Single-cell "submeshes" are
    /// available through [`FineSubmesh1D::new`] for plain coarse FEM runs.
    pub fn fine_submesh(&self, cell: usize, n_fine: usize) -> Result<FineSubmesh1D> {
        if n_fine < 2 {
            return Err(Error::InvalidArgument(format!(
                "a fine submesh needs at least 2 cells, got {n_fine}"
            )));
        }
        FineSubmesh1D::new(self, cell, n_fine)
    }
}

/// Equispaced fine partition of one coarse cell.
///
/// Positions are unwrapped (the last cell ends at 1.0); `global` numbers the
/// fine nodes of the whole torus as `cell * n_fine + l` modulo the total.
#[derive(Debug, Clone, PartialEq)]
pub struct FineSubmesh1D {
    pub parent: usize,
    pub n_fine: usize,
    pub positions: Vec<f64>,
    pub global: Vec<usize>,
}

impl FineSubmesh1D {
    pub fn new(mesh: &CoarseMesh1D, cell: usize, n_fine: usize) -> Result<Self> {
        if n_fine < 1 {
            return Err(Error::InvalidArgument("a fine submesh needs at least one cell".into()));
        }
        if cell >= mesh.n_cells {
            return Err(Error::InvalidArgument(format!("cell {cell} outside 0..{}", mesh.n_cells)));
        }
        let total = mesh.n_cells * n_fine;
        let positions = (0..=n_fine)
            .map(|l| (cell * n_fine + l) as f64 / total as f64)
            .collect();
        let global = (0..=n_fine).map(|l| (cell * n_fine + l) % total).collect();
        Ok(Self {
            parent: cell,
            n_fine,
            positions,
            global,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_fine + 1
    }

    /// Whether local node `l` is one of the two coarse vertices.
    pub fn is_vertex(&self, l: usize) -> bool {
        l == 0 || l == self.n_fine
    }
}

/// Continuous piecewise-linear functions on a uniform periodic mesh of the unit interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformLine {
    pub n_cells: usize,
}

impl UniformLine {
    pub fn new(n_cells: usize) -> Result<Self> {
        if n_cells < 1 {
            return Err(Error::InvalidArgument("empty line mesh".into()));
        }
        Ok(Self { n_cells })
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n_cells as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n_cells as f64
    }

    /// Cell index and local coordinate of a point.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = wrap(x) * self.n_cells as f64;
        let k = (s.floor() as usize).min(self.n_cells - 1);
        (k, s - k as f64)
    }

    /// Value of the interpolant with nodal values `u`.
    pub fn eval(&self, u: &[f64], x: f64) -> f64 {
        let (k, s) = self.locate(x);
        let k1 = (k + 1) % self.n_cells;
        (1.0 - s) * u[k] + s * u[k1]
    }

    /// Value and slope inside a given cell at local coordinate `s`.
    pub fn eval_in_cell(&self, u: &[f64], k: usize, s: f64) -> (f64, f64) {
        let k1 = (k + 1) % self.n_cells;
        (
            (1.0 - s) * u[k] + s * u[k1],
            (u[k1] - u[k]) * self.n_cells as f64,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarse_nodes_are_equispaced() {
        let m = CoarseMesh1D::new(8).unwrap();
        assert_eq!(m.nodes.len(), 8);
        assert_eq!(m.h, 0.125);
        for (i, x) in m.nodes.iter().enumerate() {
            assert_eq!(*x, i as f64 * 0.125);
        }
        let m = CoarseMesh1D::new(512).unwrap();
        assert_eq!(m.h, 1.0 / 512.0);
        assert!(matches!(CoarseMesh1D::new(1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn fine_submesh_endpoints_are_the_coarse_vertices() {
        let m = CoarseMesh1D::new(10).unwrap();
        let f = m.fine_submesh(3, 10).unwrap();
        assert!((f.positions[1] - f.positions[0] - 0.01).abs() < 1e-15);
        for k in 0..10 {
            let f = m.fine_submesh(k, 7).unwrap();
            let (a, b) = m.cell_bounds(k);
            assert_eq!(f.positions[0], a);
            assert_eq!(f.positions[7], b);
            assert_eq!(f.positions[0], m.nodes[k]);
        }
        let m = CoarseMesh1D::new(8).unwrap();
        assert_eq!(m.fine_submesh(0, 64).unwrap().n_nodes(), 65);
        assert!(matches!(m.fine_submesh(0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn neighbouring_submeshes_share_their_interface_node() {
        let m = CoarseMesh1D::new(5).unwrap();
        for k in 0..5 {
            let a = m.fine_submesh(k, 4).unwrap();
            let b = m.fine_submesh((k + 1) % 5, 4).unwrap();
            assert_eq!(a.global[4], b.global[0]);
            assert_eq!(wrap(a.positions[4]), b.positions[0]);
        }
    }

    #[test]
    fn uniform_line_interpolates_nodal_values() {
        let l = UniformLine::new(4).unwrap();
        let u = [0.0, 1.0, 4.0, 9.0];
        assert_eq!(l.eval(&u, 0.25), 1.0);
        assert!((l.eval(&u, 0.375) - 2.5).abs() < 1e-15);
        assert!((l.eval(&u, 0.875) - 4.5).abs() < 1e-15);
        assert!((l.eval(&u, -0.125) - 4.5).abs() < 1e-15);
    }
}
