//! Workload builders shared by the benchmarks.

use spdlrr::superpixel::BaseImage;
use spdlrr::synthetic::{self, LabeledCube, LowRankSparse, MixedBlockInstance};

/// Rank-5 plus 5% sparse matrix, the usual robust PCA test shape.
pub fn low_rank_workload(rows: usize, cols: usize) -> LowRankSparse {
    synthetic::low_rank_plus_sparse(rows, cols, 5, 0.05, 0.5, 1)
}

/// Three blocks over two subspaces with `bands` rows.
pub fn mixed_block_workload(bands: usize) -> MixedBlockInstance {
    synthetic::mixed_block_instance(bands, 2, 60, 30, 3)
}

/// Smooth ripple image for segmentation.
pub fn ripple_image(height: usize, width: usize) -> BaseImage {
    let values = (0..height * width)
        .map(|p| {
            let (r, c) = ((p / width) as f64, (p % width) as f64);
            0.5 + 0.25 * (0.21 * r).sin() + 0.2 * (0.17 * c).cos()
        })
        .collect();
    BaseImage::new(height, width, values).expect("values are in [0, 1]")
}

pub fn cube_workload(side: usize, bands: usize) -> LabeledCube {
    synthetic::two_class_cube(side, side, bands, 2, 0.05, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn workloads_have_requested_shapes() {
        assert_eq!(low_rank_workload(10, 12).x.shape(), (10, 12));
        assert_eq!(mixed_block_workload(8).x.nrows(), 8);
        assert_eq!(ripple_image(5, 7).values.len(), 35);
        assert_eq!(cube_workload(6, 4).cube.bands(), 4);
    }
}
