use super::config::PatchGrid;
use crate::channelgen::CsiMatrix;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Splits `h` into non-overlapping patches, row-major over the grid. Each
/// patch vector is the real block followed by the imaginary block, each
/// flattened row-major.
pub fn patchify(h: &CsiMatrix, grid: &PatchGrid) -> Result<Tensor> {
    let (pr, pc) = (grid.patch_rows, grid.patch_cols);
    if pr == 0 || pc == 0 || !h.antennas.is_multiple_of(pr) || !h.subcarriers.is_multiple_of(pc) {
        return Err(Error::shape(format!(
            "{}×{} matrix cannot be tiled by {pr}×{pc} patches",
            h.antennas, h.subcarriers
        )));
    }
    if h.antennas / pr != grid.grid_rows || h.subcarriers / pc != grid.grid_cols {
        return Err(Error::shape(format!(
            "{}×{} matrix does not match a {}×{} grid of {pr}×{pc} patches",
            h.antennas, h.subcarriers, grid.grid_rows, grid.grid_cols
        )));
    }
    let block = pr * pc;
    let mut out = Vec::with_capacity(grid.num_patches() * 2 * block);
    for gr in 0..grid.grid_rows {
        for gc in 0..grid.grid_cols {
            for plane in [&h.re, &h.im] {
                for r in 0..pr {
                    let row = (gr * pr + r) * h.subcarriers + gc * pc;
                    out.extend_from_slice(&plane[row..row + pc]);
                }
            }
        }
    }
    Tensor::new(vec![grid.num_patches(), 2 * block], out)
}

/// Exact inverse of [`patchify`].
pub fn unpatchify(patches: &Tensor, grid: &PatchGrid) -> Result<CsiMatrix> {
    let expected = [grid.num_patches(), grid.patch_dim()];
    if patches.shape() != expected {
        return Err(Error::shape(format!(
            "expected patches of shape {expected:?}, got {:?}",
            patches.shape()
        )));
    }
    let (pr, pc) = (grid.patch_rows, grid.patch_cols);
    let (a, k) = (grid.grid_rows * pr, grid.grid_cols * pc);
    let block = pr * pc;
    let mut h = CsiMatrix::zeros(a, k);
    for (p, vec) in patches.data().chunks(2 * block).enumerate() {
        let (gr, gc) = (p / grid.grid_cols, p % grid.grid_cols);
        for (plane_idx, plane) in [&mut h.re, &mut h.im].into_iter().enumerate() {
            for r in 0..pr {
                let row = (gr * pr + r) * k + gc * pc;
                let src = plane_idx * block + r * pc;
                plane[row..row + pc].copy_from_slice(&vec[src..src + pc]);
            }
        }
    }
    Ok(h)
}
