//! Sparse linear solvers.
//!
//! Small and medium systems go through a reverse Cuthill-McKee reordering
//! followed by a banded LU factorization with partial pivoting. Large systems
//! use BiCGSTAB preconditioned with ILU(0).

use std::collections::VecDeque;

use super::sparse::{norm2, CsrMatrix};
use crate::error::{Error, Result};

/// Systems up to this size are factorized directly.
pub const DIRECT_SOLVE_LIMIT: usize = 10_000;

const ITERATIVE_TOL: f64 = 1e-12;
const ITERATIVE_MAX_ITERS: usize = 2_000;
const RESIDUAL_FACTOR: f64 = 1e-10;
const PIVOT_TOL: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub symmetric_hint: bool,
}

impl LinearSystem {
    pub fn new(matrix: CsrMatrix, rhs: Vec<f64>) -> Result<Self> {
        if !matrix.is_square() || matrix.n_rows() != rhs.len() {
            return Err(Error::InvalidArgument(format!(
                "system matrix is {}x{} but rhs has length {}",
                matrix.n_rows(),
                matrix.n_cols(),
                rhs.len()
            )));
        }
        if let Some(r) = (0..matrix.n_rows()).find(|&r| matrix.row(r).0.is_empty()) {
            return Err(Error::InvalidArgument(format!("row {r} is structurally empty")));
        }
        Ok(Self {
            matrix,
            rhs,
            symmetric_hint: false,
        })
    }

    pub fn symmetric(mut self) -> Self {
        self.symmetric_hint = true;
        self
    }
}

/// Solves `A x = b`, choosing a direct or iterative method by size.
pub fn solve(system: &LinearSystem) -> Result<Vec<f64>> {
    let a = &system.matrix;
    let b = &system.rhs;
    let x = if a.n_rows() <= DIRECT_SOLVE_LIMIT {
        SparseLu::factor(a)?.solve(b)
    } else {
        bicgstab(a, b, None, ITERATIVE_TOL, ITERATIVE_MAX_ITERS)?
    };
    check_residual(a, &x, b)?;
    Ok(x)
}

/// Verifies `‖Ax − b‖ ≤ 1e-10 (‖A‖‖x‖ + ‖b‖)`.
pub fn check_residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Result<()> {
    let r: Vec<f64> = a.mul_vec(x).iter().zip(b).map(|(ax, bi)| ax - bi).collect();
    let res = norm2(&r);
    let scale = a.norm_inf() * norm2(x) + norm2(b);
    if !res.is_finite() || res > RESIDUAL_FACTOR * scale {
        return Err(Error::Solver {
            reason: "residual check failed".into(),
            residual: res,
        });
    }
    Ok(())
}

/// Reverse Cuthill-McKee ordering of the symmetrized sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.n_rows();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in 0..n {
        for &c in a.row(r).0 {
            if c != r {
                adj[r].push(c);
                adj[c].push(r);
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        let start = pseudo_peripheral(seed, &adj);
        visited[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            next.sort_by_key(|&w| (degree[w], w));
            for w in next {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> (usize, Vec<usize>) {
    let mut level = vec![usize::MAX; adj.len()];
    level[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = vec![start];
    let mut depth = 0;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if level[w] == usize::MAX {
                level[w] = level[v] + 1;
                if level[w] > depth {
                    depth = level[w];
                    last.clear();
                }
                if level[w] == depth {
                    last.push(w);
                }
                queue.push_back(w);
            }
        }
    }
    (depth, last)
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>]) -> usize {
    let mut current = seed;
    let (mut depth, mut last) = bfs_levels(current, adj);
    for _ in 0..8 {
        let candidate = *last
            .iter()
            .min_by_key(|&&v| (adj[v].len(), v))
            .unwrap_or(&current);
        let (d, l) = bfs_levels(candidate, adj);
        if d <= depth {
            break;
        }
        current = candidate;
        depth = d;
        last = l;
    }
    current
}

/// LU factorization with partial pivoting of a banded matrix.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    band: Vec<f64>,
    pivots: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::InvalidArgument("banded LU needs a square matrix".into()));
        }
        let n = a.n_rows();
        let (mut kl, mut ku) = (0usize, 0usize);
        for r in 0..n {
            for &c in a.row(r).0 {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        let width = 2 * kl + ku + 1;
        let mut band = vec![0.0; n * width];
        for r in 0..n {
            let (cols, vals) = a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                band[r * width + c + kl - r] = v;
            }
        }
        let tol = PIVOT_TOL * a.max_abs();
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n.saturating_sub(1));
            let last_col = (k + ku + kl).min(n.saturating_sub(1));
            let mut p = k;
            let mut best = band[k * width + kl].abs();
            for i in k + 1..=last_row {
                let v = band[i * width + k + kl - i].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tol) {
                return Err(Error::Solver {
                    reason: format!("zero pivot in column {k} (matrix is singular)"),
                    residual: f64::NAN,
                });
            }
            pivots[k] = p;
            if p != k {
                for j in k..=last_col {
                    band.swap(k * width + j + kl - k, p * width + j + kl - p);
                }
            }
            let pivot = band[k * width + kl];
            for i in k + 1..=last_row {
                let ik = i * width + k + kl - i;
                let l = band[ik] / pivot;
                band[ik] = l;
                if l != 0.0 {
                    for j in k + 1..=last_col {
                        band[i * width + j + kl - i] -= l * band[k * width + j + kl - k];
                    }
                }
            }
        }
        Ok(Self {
            n,
            kl,
            ku,
            width,
            band,
            pivots,
        })
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, kl, w) = (self.n, self.kl, self.width);
        assert_eq!(b.len(), n);
        for k in 0..n {
            let p = self.pivots[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk != 0.0 {
                for i in k + 1..=(k + kl).min(n - 1) {
                    b[i] -= self.band[i * w + k + kl - i] * bk;
                }
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + self.ku + kl).min(n - 1);
            let mut s = b[k];
            for j in k + 1..=last_col {
                s -= self.band[k * w + j + kl - k] * b[j];
            }
            b[k] = s / self.band[k * w + kl];
        }
    }
}

/// Banded LU applied after a bandwidth-reducing reordering.
#[derive(Debug, Clone)]
pub struct SparseLu {
    perm: Vec<usize>,
    lu: BandedLu,
}

impl SparseLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let perm = reverse_cuthill_mckee(a);
        Self::factor_with_ordering(a, perm)
    }

    /// Factorizes with a caller-supplied ordering (`perm[new] = old`).
    pub fn factor_with_ordering(a: &CsrMatrix, perm: Vec<usize>) -> Result<Self> {
        let permuted = a.submatrix(&perm, &perm);
        let lu = BandedLu::factor(&permuted)?;
        Ok(Self { perm, lu })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        self.lu.solve_in_place(&mut y);
        let mut x = vec![0.0; b.len()];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Incomplete LU factorization with zero fill-in.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    a: CsrMatrix,
    lu: Vec<f64>,
    diag: Vec<usize>,
    offsets: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let n = a.n_rows();
        let mut lu = a.values().to_vec();
        let mut diag = vec![usize::MAX; n];
        let mut offsets = Vec::with_capacity(n + 1);
        let mut pos = 0usize;
        for r in 0..n {
            offsets.push(pos);
            let cols = a.row(r).0;
            if let Ok(k) = cols.binary_search(&r) {
                diag[r] = pos + k;
            } else {
                return Err(Error::Solver {
                    reason: format!("ILU(0) needs a stored diagonal in row {r}"),
                    residual: f64::NAN,
                });
            }
            pos += cols.len();
        }
        offsets.push(pos);
        for i in 0..n {
            let cols_i = a.row(i).0;
            let base_i = offsets[i];
            for (ki, &k) in cols_i.iter().enumerate() {
                if k >= i {
                    break;
                }
                let dkk = lu[diag[k]];
                if dkk == 0.0 {
                    return Err(Error::Solver {
                        reason: format!("ILU(0) zero pivot at row {k}"),
                        residual: f64::NAN,
                    });
                }
                let lik = lu[base_i + ki] / dkk;
                lu[base_i + ki] = lik;
                let cols_k = a.row(k).0;
                let base_k = offsets[k];
                // subtract lik * U(k, j) for j > k present in row i
                let mut pk = cols_k.partition_point(|&c| c <= k);
                let mut pi = ki + 1;
                while pk < cols_k.len() && pi < cols_i.len() {
                    match cols_k[pk].cmp(&cols_i[pi]) {
                        std::cmp::Ordering::Less => pk += 1,
                        std::cmp::Ordering::Greater => pi += 1,
                        std::cmp::Ordering::Equal => {
                            lu[base_i + pi] -= lik * lu[base_k + pk];
                            pk += 1;
                            pi += 1;
                        }
                    }
                }
            }
        }
        Ok(Self {
            a: a.clone(),
            lu,
            diag,
            offsets,
        })
    }

    pub fn apply(&self, r: &[f64], z: &mut [f64]) {
        let n = r.len();
        for i in 0..n {
            let cols = self.a.row(i).0;
            let base = self.offsets[i];
            let mut s = r[i];
            for (k, &c) in cols.iter().enumerate() {
                if c >= i {
                    break;
                }
                s -= self.lu[base + k] * z[c];
            }
            z[i] = s;
        }
        for i in (0..n).rev() {
            let cols = self.a.row(i).0;
            let base = self.offsets[i];
            let d = self.diag[i];
            let mut s = z[i];
            for k in d + 1..base + cols.len() {
                s -= self.lu[k] * z[cols[k - base]];
            }
            z[i] = s / self.lu[d];
        }
    }
}

/// Preconditioned BiCGSTAB. Converges when `‖r‖ ≤ tol ‖b‖`.
pub fn bicgstab(
    a: &CsrMatrix,
    b: &[f64],
    x0: Option<&[f64]>,
    tol: f64,
    max_iters: usize,
) -> Result<Vec<f64>> {
    let n = b.len();
    let pre = Ilu0::new(a)?;
    let mut x = x0.map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; n]);
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let ax = a.mul_vec(&x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(bi, v)| bi - v).collect();
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut res = norm2(&r);
    for _ in 0..max_iters {
        if res <= tol * bnorm {
            return Ok(x);
        }
        let rho_new = r_hat.iter().zip(&r).map(|(a, b)| a * b).sum::<f64>();
        if rho_new == 0.0 || !rho_new.is_finite() {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pre.apply(&p, &mut y);
        a.mul_vec_into(&y, &mut v);
        let denom = r_hat.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>();
        if denom == 0.0 {
            break;
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(x);
        }
        pre.apply(&s, &mut z);
        a.mul_vec_into(&z, &mut t);
        let tt = t.iter().map(|v| v * v).sum::<f64>();
        if tt == 0.0 {
            break;
        }
        omega = t.iter().zip(&s).map(|(a, b)| a * b).sum::<f64>() / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = norm2(&r);
        if omega == 0.0 {
            break;
        }
    }
    if res <= tol * bnorm {
        return Ok(x);
    }
    Err(Error::Solver {
        reason: "BiCGSTAB did not converge".into(),
        residual: res / bnorm,
    })
}
