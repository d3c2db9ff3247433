//! P1 finite-element kernel: quadrature, element matrices, sparse assembly and
//! linear solvers.

pub mod element;
pub mod quadrature;
pub mod solve;
pub mod sparse;

use rayon::prelude::*;

pub use element::{signed_area, AdvectionForm, PlaneSegment, Segment, Tensor2, Triangle};
pub use quadrature::{SegmentRule, TriangleRule};
pub use solve::{bicgstab, check_residual, solve, BandedLu, Ilu0, LinearSystem, SparseLu};
pub use sparse::{dot, norm2, CsrMatrix, TripletBuilder};

use crate::error::{Error, Result};

/// Assembles a global matrix from per-cell dense blocks.
///
/// Local blocks may be computed in parallel; the scatter always runs over
/// cells in ascending id so the result does not depend on the thread count.
pub fn assemble<const N: usize, F>(n_dofs: usize, cells: &[[usize; N]], producer: F) -> Result<CsrMatrix>
where
    F: Fn(usize) -> Result<[[f64; N]; N]> + Sync,
{
    for (k, cell) in cells.iter().enumerate() {
        if let Some(&bad) = cell.iter().find(|&&d| d >= n_dofs) {
            return Err(Error::InvalidConnectivity(format!(
                "cell {k} references dof {bad} but only {n_dofs} exist"
            )));
        }
    }
    let blocks: Vec<[[f64; N]; N]> = (0..cells.len())
        .into_par_iter()
        .map(&producer)
        .collect::<Result<_>>()?;
    let mut builder = TripletBuilder::with_capacity(n_dofs, n_dofs, cells.len() * N * N);
    for (cell, block) in cells.iter().zip(&blocks) {
        for a in 0..N {
            for b in 0..N {
                builder.push(cell[a], cell[b], block[a][b]);
            }
        }
    }
    builder.build()
}

/// Assembles a global vector from per-cell contributions, in ascending cell order.
pub fn assemble_vector<const N: usize, F>(n_dofs: usize, cells: &[[usize; N]], producer: F) -> Result<Vec<f64>>
where
    F: Fn(usize) -> Result<[f64; N]> + Sync,
{
    let blocks: Vec<[f64; N]> = (0..cells.len())
        .into_par_iter()
        .map(&producer)
        .collect::<Result<_>>()?;
    let mut out = vec![0.0; n_dofs];
    for (cell, block) in cells.iter().zip(&blocks) {
        for a in 0..N {
            let d = *out.get_mut(cell[a]).ok_or_else(|| {
                Error::InvalidConnectivity(format!("dof {} outside 0..{n_dofs}", cell[a]))
            })?;
            out[cell[a]] = d + block[a];
        }
    }
    Ok(out)
}
