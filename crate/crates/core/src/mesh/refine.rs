use super::{wrap2, TriMesh2D};
use crate::error::{Error, Result};

/// What a local lattice node of a refined triangle lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeTag {
    /// Coarse corner 0, 1 or 2.
    Vertex(usize),
    /// Local edge `edge` (corner `edge` to corner `edge + 1`), `k` fine
    /// segments away from its first corner.
    Edge { edge: usize, k: usize },
    Interior,
}

/// Red refinement pattern of the reference triangle into `n²` congruent cells.
///
/// Lattice node `(i, j)` with `i + j <= n` sits at barycentric coordinates
/// `(1 - (i+j)/n, i/n, j/n)`; the upright cell at `(i, j)` has nodes
/// `(i,j), (i+1,j), (i,j+1)`, the inverted one `(i+1,j), (i+1,j+1), (i,j+1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalLattice {
    pub n: usize,
    pub ij: Vec<(usize, usize)>,
    pub tags: Vec<NodeTag>,
    pub cells: Vec<[usize; 3]>,
    pub boundary: Vec<usize>,
    pub interior: Vec<usize>,
}

impl LocalLattice {
    pub fn new(levels: u32) -> Result<Self> {
        if !(1..=10).contains(&levels) {
            return Err(Error::InvalidArgument(format!("refinement levels must be in 1..=10, got {levels}")));
        }
        let n = 1usize << levels;
        let mut ij = Vec::new();
        let mut tags = Vec::new();
        for j in 0..=n {
            for i in 0..=(n - j) {
                ij.push((i, j));
                tags.push(match (i, j) {
                    (0, 0) => NodeTag::Vertex(0),
                    (i, 0) if i == n => NodeTag::Vertex(1),
                    (0, j) if j == n => NodeTag::Vertex(2),
                    (i, 0) => NodeTag::Edge { edge: 0, k: i },
                    (i, j) if i + j == n => NodeTag::Edge { edge: 1, k: j },
                    (0, j) => NodeTag::Edge { edge: 2, k: n - j },
                    _ => NodeTag::Interior,
                });
            }
        }
        let mut lat = Self {
            n,
            ij,
            tags,
            cells: Vec::with_capacity(n * n),
            boundary: Vec::new(),
            interior: Vec::new(),
        };
        for j in 0..n {
            for i in 0..(n - j) {
                lat.cells.push([lat.idx(i, j), lat.idx(i + 1, j), lat.idx(i, j + 1)]);
            }
        }
        for j in 0..n.saturating_sub(1) {
            for i in 0..(n - 1 - j) {
                lat.cells.push([lat.idx(i + 1, j), lat.idx(i + 1, j + 1), lat.idx(i, j + 1)]);
            }
        }
        for (l, t) in lat.tags.iter().enumerate() {
            match t {
                NodeTag::Interior => lat.interior.push(l),
                _ => lat.boundary.push(l),
            }
        }
        Ok(lat)
    }

    pub fn n_nodes(&self) -> usize {
        self.ij.len()
    }

    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + j <= self.n);
        j * (self.n + 1) - j * j.saturating_sub(1) / 2 + i
    }

    pub fn upright(&self, i: usize, j: usize) -> usize {
        j * self.n - j * j.saturating_sub(1) / 2 + i
    }

    pub fn inverted(&self, i: usize, j: usize) -> usize {
        let n = self.n;
        n * (n + 1) / 2 + j * (n - 1) - j * j.saturating_sub(1) / 2 + i
    }

    /// Local node index of the `k`-th node along local edge `e`.
    pub fn edge_node(&self, e: usize, k: usize) -> usize {
        let n = self.n;
        match e {
            0 => self.idx(k, 0),
            1 => self.idx(n - k, k),
            _ => self.idx(0, n - k),
        }
    }

    /// Fine cell and P1 weights of its nodes for barycentric coordinates `lam`.
    pub fn locate(&self, lam: [f64; 3]) -> (usize, [usize; 3], [f64; 3]) {
        let n = self.n;
        let nf = n as f64;
        let a = (lam[1] * nf).clamp(0.0, nf);
        let b = (lam[2] * nf).clamp(0.0, nf);
        let i = (a.floor() as usize).min(n - 1);
        let j = (b.floor() as usize).min(n - 1 - i);
        let fr = a - i as f64;
        let fs = b - j as f64;
        if fr + fs <= 1.0 || i + j + 1 >= n {
            let c = self.upright(i, j);
            (c, self.cells[c], [1.0 - fr - fs, fr, fs])
        } else {
            let c = self.inverted(i, j);
            (c, self.cells[c], [1.0 - fs, fr + fs - 1.0, 1.0 - fr])
        }
    }
}

/// Red-refined fine mesh of one coarse triangle.
///
/// `positions` are in the triangle's own unwrapped frame (so the fine cells
/// are straight planar triangles even across the periodic seam); `global`
/// maps local lattice nodes to the torus-wide fine numbering.
#[derive(Debug, Clone, PartialEq)]
pub struct FineSubmesh2D {
    pub parent: usize,
    pub positions: Vec<[f64; 2]>,
    pub global: Vec<usize>,
}

/// Result of locating a point in the fine mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLocation {
    pub coarse: usize,
    pub fine: usize,
    pub local: [usize; 3],
    pub global: [usize; 3],
    pub weights: [f64; 3],
}

/// Conforming union of all refined coarse triangles.
///
/// Global fine numbering: coarse vertices first, then the interior nodes of
/// each coarse edge in the edge's canonical direction, then cell interiors.
#[derive(Debug, Clone, PartialEq)]
pub struct FineMesh2D {
    pub coarse: TriMesh2D,
    pub lattice: LocalLattice,
    pub submeshes: Vec<FineSubmesh2D>,
    /// Wrapped torus coordinates of every global fine node.
    pub node_pos: Vec<[f64; 2]>,
}

impl FineMesh2D {
    pub fn new(coarse: TriMesh2D, levels: u32) -> Result<Self> {
        let lattice = LocalLattice::new(levels)?;
        let n = lattice.n;
        let nv = coarse.n_nodes();
        let ne = coarse.n_edges();
        let per_edge = n - 1;
        let per_cell = lattice.interior.len();
        let total = nv + ne * per_edge + coarse.n_cells() * per_cell;
        let mut node_pos = vec![[f64::NAN; 2]; total];
        for (v, p) in coarse.nodes.iter().enumerate() {
            node_pos[v] = *p;
        }
        // canonical edge node coordinates, in the frame of the edge's first node
        let mut edge_pos = Vec::with_capacity(ne);
        for (e, info) in coarse.edges.iter().enumerate() {
            let a = coarse.nodes[info.a];
            let b = coarse.nodes[info.b];
            let b = [b[0] + info.shift[0] as f64, b[1] + info.shift[1] as f64];
            let pts: Vec<[f64; 2]> = (0..=n)
                .map(|k| {
                    let s = k as f64 / n as f64;
                    [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
                })
                .collect();
            for k in 1..n {
                node_pos[nv + e * per_edge + k - 1] = wrap2(pts[k]);
            }
            edge_pos.push(pts);
        }
        let mut interior_rank = vec![usize::MAX; lattice.n_nodes()];
        for (r, &l) in lattice.interior.iter().enumerate() {
            interior_rank[l] = r;
        }
        let mut submeshes = Vec::with_capacity(coarse.n_cells());
        for c in 0..coarse.n_cells() {
            let v = coarse.corners(c);
            let tri = coarse.triangles[c];
            let mut positions = Vec::with_capacity(lattice.n_nodes());
            let mut global = Vec::with_capacity(lattice.n_nodes());
            for (l, &(i, j)) in lattice.ij.iter().enumerate() {
                let (p, g) = match lattice.tags[l] {
                    NodeTag::Vertex(k) => (v[k], tri[k]),
                    NodeTag::Edge { edge, k } => {
                        let id = coarse.cell_edges[c][edge];
                        let rev = coarse.cell_edge_reversed[c][edge];
                        let kc = if rev { n - k } else { k };
                        // frame offset: where this cell puts the edge's first node
                        let first = if rev { (edge + 1) % 3 } else { edge };
                        let s = coarse.shifts[c][first];
                        let q = edge_pos[id][kc];
                        (
                            [q[0] + s[0] as f64, q[1] + s[1] as f64],
                            nv + id * per_edge + kc - 1,
                        )
                    }
                    NodeTag::Interior => {
                        let (si, sj) = (i as f64 / n as f64, j as f64 / n as f64);
                        let p = [
                            v[0][0] + si * (v[1][0] - v[0][0]) + sj * (v[2][0] - v[0][0]),
                            v[0][1] + si * (v[1][1] - v[0][1]) + sj * (v[2][1] - v[0][1]),
                        ];
                        let g = nv + ne * per_edge + c * per_cell + interior_rank[l];
                        node_pos[g] = wrap2(p);
                        (p, g)
                    }
                };
                positions.push(p);
                global.push(g);
            }
            submeshes.push(FineSubmesh2D {
                parent: c,
                positions,
                global,
            });
        }
        Ok(Self {
            coarse,
            lattice,
            submeshes,
            node_pos,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.node_pos.len()
    }

    pub fn n_cells(&self) -> usize {
        self.coarse.n_cells() * self.lattice.cells.len()
    }

    /// Global node ids and unwrapped coordinates of fine cell `e`
    /// (cells are numbered coarse-cell-major).
    pub fn element(&self, e: usize) -> ([usize; 3], [[f64; 2]; 3]) {
        let per = self.lattice.cells.len();
        let sub = &self.submeshes[e / per];
        let loc = self.lattice.cells[e % per];
        (
            [sub.global[loc[0]], sub.global[loc[1]], sub.global[loc[2]]],
            [sub.positions[loc[0]], sub.positions[loc[1]], sub.positions[loc[2]]],
        )
    }

    /// Global ids of the `n + 1` nodes of coarse edge `e`, in canonical direction.
    pub fn edge_global(&self, e: usize) -> Vec<usize> {
        let n = self.lattice.n;
        let info = &self.coarse.edges[e];
        let base = self.coarse.n_nodes() + e * (n - 1);
        let mut out = Vec::with_capacity(n + 1);
        out.push(info.a);
        out.extend((1..n).map(|k| base + k - 1));
        out.push(info.b);
        out
    }

    /// Unwrapped coordinates of the nodes of coarse edge `e`, in the frame of its first node.
    pub fn edge_polyline(&self, e: usize) -> Vec<[f64; 2]> {
        let n = self.lattice.n;
        let info = &self.coarse.edges[e];
        let a = self.coarse.nodes[info.a];
        let b = self.coarse.nodes[info.b];
        let b = [b[0] + info.shift[0] as f64, b[1] + info.shift[1] as f64];
        (0..=n)
            .map(|k| {
                let s = k as f64 / n as f64;
                [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])]
            })
            .collect()
    }

    /// Connectivity of all fine cells in global node ids.
    pub fn connectivity(&self) -> Vec<[usize; 3]> {
        (0..self.n_cells()).map(|e| self.element(e).0).collect()
    }

    pub fn locate(&self, p: [f64; 2]) -> Result<PointLocation> {
        let (c, lam) = self.coarse.locate(p)?;
        let (fine, local, weights) = self.lattice.locate(lam);
        let g = &self.submeshes[c].global;
        Ok(PointLocation {
            coarse: c,
            fine,
            local,
            global: [g[local[0]], g[local[1]], g[local[2]]],
            weights,
        })
    }

    /// Value at `p` of the P1 function with global nodal values `u`.
    pub fn eval(&self, u: &[f64], p: [f64; 2]) -> Result<f64> {
        let loc = self.locate(p)?;
        Ok((0..3).map(|k| loc.weights[k] * u[loc.global[k]]).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_periodic_delaunay, torus_distance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lattice_counts_and_indexing() {
        for levels in 1..=5 {
            let lat = LocalLattice::new(levels).unwrap();
            let n = lat.n;
            assert_eq!(lat.cells.len(), n * n);
            assert_eq!(lat.n_nodes(), (n + 1) * (n + 2) / 2);
            assert_eq!(lat.boundary.len(), 3 * n);
            for (l, &(i, j)) in lat.ij.iter().enumerate() {
                assert_eq!(lat.idx(i, j), l);
            }
            for j in 0..n {
                for i in 0..n - j {
                    let c = lat.cells[lat.upright(i, j)];
                    assert_eq!(c, [lat.idx(i, j), lat.idx(i + 1, j), lat.idx(i, j + 1)]);
                }
            }
            for j in 0..n - 1 {
                for i in 0..n - 1 - j {
                    let c = lat.cells[lat.inverted(i, j)];
                    assert_eq!(c[1], lat.idx(i + 1, j + 1));
                }
            }
        }
        let lat = LocalLattice::new(1).unwrap();
        assert_eq!(lat.cells.len(), 4);
        assert_eq!(lat.tags[lat.idx(1, 0)], NodeTag::Edge { edge: 0, k: 1 });
    }

    #[test]
    fn lattice_location_weights_reproduce_the_point() {
        let lat = LocalLattice::new(3).unwrap();
        let n = lat.n as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..5000 {
            let (mut a, mut b) = (rng.random::<f64>(), rng.random::<f64>());
            if a + b > 1.0 {
                (a, b) = (1.0 - a, 1.0 - b);
            }
            let (_, nodes, w) = lat.locate([1.0 - a - b, a, b]);
            assert!(w.iter().all(|&x| x >= -1e-12), "{w:?}");
            let (mut x, mut y) = (0.0, 0.0);
            for k in 0..3 {
                let (i, j) = lat.ij[nodes[k]];
                x += w[k] * i as f64 / n;
                y += w[k] * j as f64 / n;
            }
            assert!((x - a).abs() < 1e-14 && (y - b).abs() < 1e-14);
        }
    }

    fn fine() -> FineMesh2D {
        FineMesh2D::new(build_periodic_delaunay(62, 1).unwrap(), 3).unwrap()
    }

    #[test]
    fn fine_cells_are_positive_and_tile_the_torus() {
        let f = fine();
        let mut area = 0.0;
        for e in 0..f.n_cells() {
            let (_, v) = f.element(e);
            let a = crate::fem::element::signed_area(v[0], v[1], v[2]);
            assert!(a > 0.0);
            area += a;
        }
        assert!((area - 1.0).abs() < 1e-12);
        assert!(f.node_pos.iter().all(|p| p[0].is_finite() && p[1].is_finite()));
    }

    #[test]
    fn shared_edge_nodes_agree_between_neighbours() {
        let f = fine();
        for info in &f.coarse.edges {
            let [(c0, e0), (c1, e1)] = [info.cells[0], info.cells[1]];
            let n = f.lattice.n;
            for k in 0..=n {
                let l0 = f.lattice.edge_node(e0, k);
                let l1 = f.lattice.edge_node(e1, n - k);
                let g0 = f.submeshes[c0].global[l0];
                let g1 = f.submeshes[c1].global[l1];
                assert_eq!(g0, g1);
                let p0 = f.submeshes[c0].positions[l0];
                let p1 = f.submeshes[c1].positions[l1];
                assert!(torus_distance(p0, p1) < 1e-15);
                assert_eq!(wrap2(f.node_pos[g0]), f.node_pos[g1]);
            }
        }
    }

    #[test]
    fn vertex_nodes_coincide_with_coarse_vertices() {
        let f = fine();
        for (c, sub) in f.submeshes.iter().enumerate() {
            let v = f.coarse.corners(c);
            for k in 0..3 {
                let l = f.lattice.edge_node(k, 0);
                assert_eq!(sub.positions[l], v[k]);
                assert_eq!(sub.global[l], f.coarse.triangles[c][k]);
            }
        }
    }

    #[test]
    fn random_points_locate_and_reconstruct() {
        let f = fine();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100_000 {
            let p = [rng.random::<f64>() * 3.0 - 1.0, rng.random::<f64>() * 3.0 - 1.0];
            let loc = f.locate(p).unwrap();
            let sub = &f.submeshes[loc.coarse];
            let mut q = [0.0; 2];
            for k in 0..3 {
                let x = sub.positions[loc.local[k]];
                q[0] += loc.weights[k] * x[0];
                q[1] += loc.weights[k] * x[1];
            }
            assert!(torus_distance(p, q) < 1e-12);
        }
    }
}
