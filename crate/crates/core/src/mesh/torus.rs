use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{torus_distance, wrap, wrap2};
use crate::error::{Error, Result};
use crate::fem::element::signed_area;

/// A coarse edge of the torus mesh.
///
/// The edge runs from `a` to `b + shift`, i.e. `shift` is the lattice offset
/// of `b`'s copy relative to `a` at its canonical position. `a < b` always.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeInfo {
    pub a: usize,
    pub b: usize,
    pub shift: [i32; 2],
    /// Adjacent `(cell, local edge)` pairs, ascending by cell.
    pub cells: Vec<(usize, usize)>,
}

/// Conforming triangulation of the unit torus.
///
/// Nodes live in `[0,1)²`. Triangles store canonical node ids together with
/// an integer lattice shift per corner, so `nodes[v] + shift` gives the
/// corner of a straight, positively oriented planar triangle. Local edge `e`
/// of a triangle joins corners `e` and `(e + 1) % 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh2D {
    pub nodes: Vec<[f64; 2]>,
    pub triangles: Vec<[usize; 3]>,
    pub shifts: Vec<[[i32; 2]; 3]>,
    pub edges: Vec<EdgeInfo>,
    pub cell_edges: Vec<[usize; 3]>,
    /// Whether local edge `e` runs from `b` to `a` of its [`EdgeInfo`].
    pub cell_edge_reversed: Vec<[bool; 3]>,
    buckets: Buckets,
}

#[derive(Debug, Clone, PartialEq)]
struct Buckets {
    g: usize,
    slots: Vec<Vec<(usize, [i32; 2])>>,
}

const LOCATE_TOL: f64 = 1e-12;

impl TriMesh2D {
    /// Builds and validates a mesh from nodes, triangles and corner shifts.
    pub fn from_parts(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        shifts: Vec<[[i32; 2]; 3]>,
    ) -> Result<Self> {
        if triangles.len() != shifts.len() {
            return Err(Error::InvalidConnectivity("one shift triple per triangle is required".into()));
        }
        for (i, p) in nodes.iter().enumerate() {
            if !(0.0..1.0).contains(&p[0]) || !(0.0..1.0).contains(&p[1]) {
                return Err(Error::InvalidArgument(format!("node {i} at {p:?} lies outside [0,1)²")));
            }
        }
        let mut edges: Vec<EdgeInfo> = Vec::new();
        let mut index: HashMap<(usize, usize, [i32; 2]), usize> = HashMap::new();
        let mut cell_edges = Vec::with_capacity(triangles.len());
        let mut cell_edge_reversed = Vec::with_capacity(triangles.len());
        for (c, (tri, sh)) in triangles.iter().zip(&shifts).enumerate() {
            if let Some(&v) = tri.iter().find(|&&v| v >= nodes.len()) {
                return Err(Error::InvalidConnectivity(format!("triangle {c} references missing node {v}")));
            }
            let corners = corner_positions(&nodes, tri, sh);
            let area = signed_area(corners[0], corners[1], corners[2]);
            if !(area > 0.0) {
                return Err(Error::SingularGeometry(format!("triangle {c} has signed area {area:e}")));
            }
            let mut ids = [0; 3];
            let mut rev = [false; 3];
            for e in 0..3 {
                let (p, q) = (e, (e + 1) % 3);
                let (vp, vq) = (tri[p], tri[q]);
                if vp == vq {
                    return Err(Error::InvalidConnectivity(format!(
                        "triangle {c} joins node {vp} to its own periodic image"
                    )));
                }
                let rel = [sh[q][0] - sh[p][0], sh[q][1] - sh[p][1]];
                let (key, reversed) = if vp < vq {
                    ((vp, vq, rel), false)
                } else {
                    ((vq, vp, [-rel[0], -rel[1]]), true)
                };
                let id = *index.entry(key).or_insert_with(|| {
                    edges.push(EdgeInfo {
                        a: key.0,
                        b: key.1,
                        shift: key.2,
                        cells: Vec::new(),
                    });
                    edges.len() - 1
                });
                edges[id].cells.push((c, e));
                ids[e] = id;
                rev[e] = reversed;
            }
            cell_edges.push(ids);
            cell_edge_reversed.push(rev);
        }
        for (i, e) in edges.iter().enumerate() {
            if e.cells.len() != 2 {
                return Err(Error::InvalidConnectivity(format!(
                    "edge {i} ({}-{}) has {} adjacent triangles",
                    e.a,
                    e.b,
                    e.cells.len()
                )));
            }
        }
        let (v, ed, f) = (nodes.len() as i64, edges.len() as i64, triangles.len() as i64);
        if v - ed + f != 0 {
            return Err(Error::InvalidConnectivity(format!(
                "Euler characteristic {} is not that of a torus",
                v - ed + f
            )));
        }
        let mut used = vec![false; nodes.len()];
        triangles.iter().flatten().for_each(|&v| used[v] = true);
        if let Some(v) = used.iter().position(|u| !u) {
            return Err(Error::InvalidConnectivity(format!("node {v} belongs to no triangle")));
        }
        let buckets = Buckets::build(&nodes, &triangles, &shifts);
        Ok(Self {
            nodes,
            triangles,
            shifts,
            edges,
            cell_edges,
            cell_edge_reversed,
            buckets,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_cells(&self) -> usize {
        self.triangles.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    /// Unwrapped corner coordinates of a triangle.
    pub fn corners(&self, cell: usize) -> [[f64; 2]; 3] {
        corner_positions(&self.nodes, &self.triangles[cell], &self.shifts[cell])
    }

    pub fn signed_area(&self, cell: usize) -> f64 {
        let c = self.corners(cell);
        signed_area(c[0], c[1], c[2])
    }

    /// Mean circumcircle diameter, the paper-style coarse mesh width.
    pub fn mean_circumdiameter(&self) -> f64 {
        let total: f64 = (0..self.n_cells())
            .map(|c| {
                let [a, b, d] = self.corners(c);
                let la = dist(b, d);
                let lb = dist(a, d);
                let lc = dist(a, b);
                la * lb * lc / (2.0 * self.signed_area(c))
            })
            .sum();
        total / self.n_cells() as f64
    }

    /// Cell containing a point and its barycentric coordinates there.
    ///
    /// Points on shared facets go to the lowest cell id.
    pub fn locate(&self, p: [f64; 2]) -> Result<(usize, [f64; 3])> {
        if self.triangles.is_empty() {
            return Err(Error::InvalidState("point location on an empty mesh".into()));
        }
        let q = wrap2(p);
        let g = self.buckets.g;
        let bx = ((q[0] * g as f64) as usize).min(g - 1);
        let by = ((q[1] * g as f64) as usize).min(g - 1);
        let mut best: Option<(usize, [f64; 3])> = None;
        let mut fallback: Option<(f64, usize, [f64; 3])> = None;
        for &(c, s) in &self.buckets.slots[by * g + bx] {
            let pt = [q[0] + s[0] as f64, q[1] + s[1] as f64];
            let lam = barycentric(self.corners(c), pt);
            let worst = lam[0].min(lam[1]).min(lam[2]);
            if worst >= -LOCATE_TOL {
                if best.is_none_or(|(bc, _)| c < bc) {
                    best = Some((c, lam));
                }
            } else if fallback.is_none_or(|(w, _, _)| worst > w) {
                fallback = Some((worst, c, lam));
            }
        }
        match (best, fallback) {
            (Some(b), _) => Ok(b),
            (None, Some((w, c, lam))) if w > -1e-9 => Ok((c, lam)),
            _ => Err(Error::Internal(format!("no cell contains {p:?}"))),
        }
    }

    /// Writes the mesh in the plain-text mesh format.
    ///
    /// Shifted triangle corners become duplicate nodes, glued back to their
    /// canonical node by the trailing identification lines.
    pub fn to_text(&self) -> String {
        let mut dup: HashMap<(usize, [i32; 2]), usize> = HashMap::new();
        let mut extra: Vec<(usize, [i32; 2])> = Vec::new();
        let nv0 = self.nodes.len();
        let mut tris = Vec::with_capacity(self.triangles.len());
        for (tri, sh) in self.triangles.iter().zip(&self.shifts) {
            let mut ids = [0; 3];
            for k in 0..3 {
                ids[k] = if sh[k] == [0, 0] {
                    tri[k]
                } else {
                    *dup.entry((tri[k], sh[k])).or_insert_with(|| {
                        extra.push((tri[k], sh[k]));
                        nv0 + extra.len() - 1
                    })
                };
            }
            tris.push(ids);
        }
        let mut out = String::new();
        let _ = writeln!(out, "{} {} {}", nv0 + extra.len(), tris.len(), extra.len());
        for p in &self.nodes {
            let _ = writeln!(out, "{} {}", p[0], p[1]);
        }
        for &(v, s) in &extra {
            let p = self.nodes[v];
            let _ = writeln!(out, "{} {}", p[0] + s[0] as f64, p[1] + s[1] as f64);
        }
        for t in &tris {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        for (k, &(v, _)) in extra.iter().enumerate() {
            let _ = writeln!(out, "{} {}", nv0 + k, v);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |reason: String| Error::InvalidArgument(format!("mesh text: {reason}"));
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| bad(format!("unexpected end of input while reading {what}")))
        };
        let (ln, header) = next("header")?;
        let counts = parse_fields::<usize>(header, 3).map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
        let (nv, ne, np) = (counts[0], counts[1], counts[2]);
        let mut coords = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = next("node")?;
            let v = parse_fields::<f64>(l, 2).map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
            coords.push([v[0], v[1]]);
        }
        let mut tris = Vec::with_capacity(ne);
        for _ in 0..ne {
            let (ln, l) = next("triangle")?;
            let v = parse_fields::<usize>(l, 3).map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
            tris.push([v[0], v[1], v[2]]);
        }
        let mut canonical: Vec<usize> = (0..nv).collect();
        for _ in 0..np {
            let (ln, l) = next("identification")?;
            let v = parse_fields::<usize>(l, 2).map_err(|e| bad(format!("line {}: {e}", ln + 1)))?;
            if v[0] >= nv || v[1] >= nv {
                return Err(bad(format!("line {}: node id out of range", ln + 1)));
            }
            canonical[v[0]] = v[1];
        }
        if let Some((ln, _)) = lines.next() {
            return Err(bad(format!("trailing content at line {}", ln + 1)));
        }
        // chains of identifications are resolved to their root
        for v in 0..nv {
            let mut r = v;
            for _ in 0..nv {
                if canonical[r] == r {
                    break;
                }
                r = canonical[r];
            }
            if canonical[r] != r {
                return Err(bad("cyclic periodic identification".into()));
            }
            canonical[v] = r;
        }
        let mut new_id = vec![usize::MAX; nv];
        let mut nodes = Vec::new();
        for v in 0..nv {
            if canonical[v] == v {
                new_id[v] = nodes.len();
                nodes.push(coords[v]);
            }
        }
        let mut triangles = Vec::with_capacity(ne);
        let mut shifts = Vec::with_capacity(ne);
        for (c, t) in tris.iter().enumerate() {
            let mut ids = [0; 3];
            let mut sh = [[0; 2]; 3];
            for k in 0..3 {
                let v = t[k];
                if v >= nv {
                    return Err(Error::InvalidConnectivity(format!("triangle {c} references missing node {v}")));
                }
                let r = canonical[v];
                ids[k] = new_id[r];
                let d = [coords[v][0] - coords[r][0], coords[v][1] - coords[r][1]];
                let s = [d[0].round(), d[1].round()];
                if (d[0] - s[0]).abs() > 1e-9 || (d[1] - s[1]).abs() > 1e-9 {
                    return Err(bad(format!("node {v} is not a lattice translate of node {r}")));
                }
                sh[k] = [s[0] as i32, s[1] as i32];
            }
            triangles.push(ids);
            shifts.push(sh);
        }
        Self::from_parts(nodes, triangles, shifts)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::InvalidArgument(reason) => Error::Format {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })
    }
}

fn parse_fields<T: std::str::FromStr>(line: &str, n: usize) -> std::result::Result<Vec<T>, String> {
    let v: Vec<&str> = line.split_whitespace().collect();
    if v.len() != n {
        return Err(format!("expected {n} fields, found {}", v.len()));
    }
    v.iter()
        .map(|s| s.parse::<T>().map_err(|_| format!("cannot parse '{s}'")))
        .collect()
}

fn corner_positions(nodes: &[[f64; 2]], tri: &[usize; 3], sh: &[[i32; 2]; 3]) -> [[f64; 2]; 3] {
    let mut out = [[0.0; 2]; 3];
    for k in 0..3 {
        let p = nodes[tri[k]];
        out[k] = [p[0] + sh[k][0] as f64, p[1] + sh[k][1] as f64];
    }
    out
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

pub(crate) fn barycentric(v: [[f64; 2]; 3], p: [f64; 2]) -> [f64; 3] {
    let d = signed_area(v[0], v[1], v[2]);
    let l1 = signed_area(v[0], p, v[2]) / d;
    let l2 = signed_area(v[0], v[1], p) / d;
    [1.0 - l1 - l2, l1, l2]
}

impl Buckets {
    fn build(nodes: &[[f64; 2]], triangles: &[[usize; 3]], shifts: &[[[i32; 2]; 3]]) -> Self {
        let g = ((triangles.len() as f64).sqrt().ceil() as usize).max(1);
        let mut slots = vec![Vec::new(); g * g];
        let gf = g as f64;
        for (c, (tri, sh)) in triangles.iter().zip(shifts).enumerate() {
            let v = corner_positions(nodes, tri, sh);
            let lo = |k: usize| v.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min) - LOCATE_TOL;
            let hi = |k: usize| v.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max) + LOCATE_TOL;
            let (x0, x1) = ((lo(0) * gf).floor() as i64, (hi(0) * gf).floor() as i64);
            let (y0, y1) = ((lo(1) * gf).floor() as i64, (hi(1) * gf).floor() as i64);
            for by in y0..=y1 {
                for bx in x0..=x1 {
                    let s = [bx.div_euclid(g as i64) as i32, by.div_euclid(g as i64) as i32];
                    let slot = by.rem_euclid(g as i64) as usize * g + bx.rem_euclid(g as i64) as usize;
                    slots[slot].push((c, s));
                }
            }
        }
        Self { g, slots }
    }
}

const MAX_ATTEMPTS: usize = 64;

/// Seeded periodic Delaunay triangulation of the unit torus.
///
/// About `n_target_cells / 2` well-separated random points are replicated
/// into the 3×3 block of neighbouring unit squares, triangulated in the
/// plane, and every triangle whose centroid lies in `[0,1)²` is kept.
pub fn build_periodic_delaunay(n_target_cells: usize, seed: u64) -> Result<TriMesh2D> {
    if n_target_cells < 8 {
        return Err(Error::InvalidArgument(format!(
            "at least 8 target cells are required, got {n_target_cells}"
        )));
    }
    let n_points = n_target_cells.div_ceil(2);
    // hexagonal spacing for this density, relaxed so random sequential
    // insertion stays far from jamming
    let spacing = (2.0 / (3f64.sqrt() * n_points as f64)).sqrt();
    let min_dist = 0.6 * spacing;
    let mut last_reason = String::new();
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let points = match sample_separated(&mut rng, n_points, min_dist) {
            Some(p) => p,
            None => {
                last_reason = "could not place well-separated points".into();
                continue;
            }
        };
        match triangulate_torus(&points) {
            Ok(mesh) => return Ok(mesh),
            Err(e) => last_reason = e.to_string(),
        }
    }
    Err(Error::Generation {
        attempts: MAX_ATTEMPTS,
        reason: last_reason,
    })
}

fn sample_separated(rng: &mut ChaCha8Rng, n: usize, min_dist: f64) -> Option<Vec<[f64; 2]>> {
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(n);
    let mut tries = 0;
    while pts.len() < n {
        tries += 1;
        if tries > 200 * n {
            return None;
        }
        let p = [wrap(rng.random::<f64>()), wrap(rng.random::<f64>())];
        if pts.iter().all(|q| torus_distance(*q, p) >= min_dist) {
            pts.push(p);
        }
    }
    Some(pts)
}

fn triangulate_torus(points: &[[f64; 2]]) -> Result<TriMesh2D> {
    let n = points.len();
    let mut planar = Vec::with_capacity(9 * n);
    let mut origin = Vec::with_capacity(9 * n);
    for sy in -1..=1i32 {
        for sx in -1..=1i32 {
            for (i, p) in points.iter().enumerate() {
                planar.push(delaunator::Point {
                    x: p[0] + sx as f64,
                    y: p[1] + sy as f64,
                });
                origin.push((i, [sx, sy]));
            }
        }
    }
    let tri = delaunator::triangulate(&planar);
    let mut triangles = Vec::new();
    let mut shifts = Vec::new();
    for t in tri.triangles.chunks_exact(3) {
        let cx = (planar[t[0]].x + planar[t[1]].x + planar[t[2]].x) / 3.0;
        let cy = (planar[t[0]].y + planar[t[1]].y + planar[t[2]].y) / 3.0;
        if !(0.0..1.0).contains(&cx) || !(0.0..1.0).contains(&cy) {
            continue;
        }
        let mut ids = [origin[t[0]].0, origin[t[1]].0, origin[t[2]].0];
        let mut sh = [origin[t[0]].1, origin[t[1]].1, origin[t[2]].1];
        let v = corner_positions(points, &ids, &sh);
        if signed_area(v[0], v[1], v[2]) < 0.0 {
            ids.swap(1, 2);
            sh.swap(1, 2);
        }
        triangles.push(ids);
        shifts.push(sh);
    }
    if triangles.len() != 2 * n {
        return Err(Error::InvalidConnectivity(format!(
            "{} triangles kept, a torus triangulation of {n} points has {}",
            triangles.len(),
            2 * n
        )));
    }
    TriMesh2D::from_parts(points.to_vec(), triangles, shifts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_mesh_is_a_valid_torus_near_the_target_size() {
        let m = build_periodic_delaunay(62, 1).unwrap();
        assert!((50..=74).contains(&m.n_cells()), "{} cells", m.n_cells());
        assert_eq!(m.n_nodes() as i64 - m.n_edges() as i64 + m.n_cells() as i64, 0);
        for c in 0..m.n_cells() {
            assert!(m.signed_area(c) > 0.0);
        }
        let total: f64 = (0..m.n_cells()).map(|c| m.signed_area(c)).sum();
        assert!((total - 1.0).abs() < 1e-12, "areas sum to {total}");
    }

    #[test]
    fn generation_is_a_pure_function_of_its_inputs() {
        assert_eq!(build_periodic_delaunay(62, 7).unwrap(), build_periodic_delaunay(62, 7).unwrap());
        assert_ne!(
            build_periodic_delaunay(62, 7).unwrap().nodes,
            build_periodic_delaunay(62, 8).unwrap().nodes
        );
        assert!(matches!(build_periodic_delaunay(4, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn text_format_round_trips() {
        let m = build_periodic_delaunay(40, 3).unwrap();
        let back = TriMesh2D::from_text(&m.to_text()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn malformed_text_is_rejected() {
        assert!(TriMesh2D::from_text("3 1 0\n0 0\n0.5 0\n").is_err());
        assert!(TriMesh2D::from_text("1 0 0\n0.1 0.2\nextra\n").is_err());
    }

    #[test]
    fn every_point_is_located_in_a_containing_cell() {
        let m = build_periodic_delaunay(62, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let p = [rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0];
            let (c, lam) = m.locate(p).unwrap();
            assert!(lam.iter().all(|&l| l >= -1e-12));
            let v = m.corners(c);
            let q = [
                lam[0] * v[0][0] + lam[1] * v[1][0] + lam[2] * v[2][0],
                lam[0] * v[0][1] + lam[1] * v[1][1] + lam[2] * v[2][1],
            ];
            assert!(torus_distance(q, p) < 1e-12);
        }
    }

    #[test]
    fn nodes_resolve_to_their_lowest_incident_cell() {
        let m = build_periodic_delaunay(62, 1).unwrap();
        for v in 0..m.n_nodes() {
            let lowest = (0..m.n_cells()).find(|&c| m.triangles[c].contains(&v)).unwrap();
            assert_eq!(m.locate(m.nodes[v]).unwrap().0, lowest);
        }
    }
}
