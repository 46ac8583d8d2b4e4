//! Seeded synthetic instances with known ground truth, used by the test
//! suites, the benchmarks and the CLI fixtures.

use nalgebra::SVD;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::classify::LabelField;
use crate::dlrr::BlockPartition;
use crate::linalg::Matrix;
use crate::pipeline::HsiCube;

/// `x = low_rank + sparse`.
#[derive(Debug, Clone)]
pub struct LowRankSparse {
    pub x: Matrix,
    pub low_rank: Matrix,
    pub sparse: Matrix,
}

fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Random `±magnitude` entries on `round(fraction · rows · cols)` distinct
/// positions.
pub fn sparse_spikes(
    rows: usize,
    cols: usize,
    fraction: f64,
    magnitude: f64,
    rng: &mut ChaCha8Rng,
) -> Matrix {
    let total = rows * cols;
    let count = ((fraction * total as f64).round() as usize).min(total);
    let mut spikes = Matrix::zeros(rows, cols);
    for idx in sample(rng, total, count).into_vec() {
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        spikes[idx] = sign * magnitude;
    }
    spikes
}

/// Product of `rows × rank` and `rank × cols` standard-normal factors,
/// scaled to unit spectral norm, plus sparse spikes.
pub fn low_rank_plus_sparse(
    rows: usize,
    cols: usize,
    rank: usize,
    sparse_fraction: f64,
    magnitude: f64,
    seed: u64,
) -> LowRankSparse {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut low_rank = gaussian(rows, rank, &mut rng) * gaussian(rank, cols, &mut rng);
    let top = SVD::new(low_rank.clone(), false, false)
        .singular_values
        .max();
    if top > 0.0 {
        low_rank /= top;
    }
    let sparse = sparse_spikes(rows, cols, sparse_fraction, magnitude, &mut rng);
    LowRankSparse {
        x: &low_rank + &sparse,
        low_rank,
        sparse,
    }
}

/// Pixels drawn from a `bands × rank` basis with entries in `[0, 1)` and
/// coefficients in `[0.5, 1.5)`.
fn subspace_pixels(basis: &Matrix, count: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let coeffs = Matrix::from_fn(basis.ncols(), count, |_, _| rng.random_range(0.5..1.5));
    basis * coeffs
}

fn random_basis(bands: usize, rank: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(bands, rank, |_, _| rng.random::<f64>())
}

/// Labeled cube with spatial halves: columns left of `width / 2` are class 1
/// and the rest class 2. Each class lives in its own random rank-`rank`
/// spectral subspace; `spike_fraction` of all entries get a `±1` spike.
#[derive(Debug, Clone)]
pub struct LabeledCube {
    pub cube: HsiCube,
    pub labels: LabelField,
    pub clean: Matrix,
}

pub fn two_class_cube(
    height: usize,
    width: usize,
    bands: usize,
    rank: usize,
    spike_fraction: f64,
    seed: u64,
) -> LabeledCube {
    assert!(width >= 2, "need at least two columns for two halves");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = [
        random_basis(bands, rank, &mut rng),
        random_basis(bands, rank, &mut rng),
    ];
    let n = height * width;
    let labels: Vec<u32> = (0..n)
        .map(|p| if p % width < width / 2 { 1 } else { 2 })
        .collect();
    let mut clean = Matrix::zeros(bands, n);
    for (p, &class) in labels.iter().enumerate() {
        let pixel = subspace_pixels(&bases[class as usize - 1], 1, &mut rng);
        clean.set_column(p, &pixel.column(0));
    }
    let spikes = sparse_spikes(bands, n, spike_fraction, 1.0, &mut rng);
    LabeledCube {
        cube: HsiCube::new(height, width, &clean + spikes).expect("shape is consistent"),
        labels: LabelField::new(height, width, labels).expect("labels are in range"),
        clean,
    }
}

/// Columns from two random rank-`rank` subspaces with light spikes. Blocks:
/// one pure block per subspace and one block mixing `mixed` columns of each.
#[derive(Debug, Clone)]
pub struct MixedBlockInstance {
    pub x: Matrix,
    pub partition: BlockPartition,
    /// Subspace (0 or 1) of every column.
    pub source: Vec<u8>,
}

pub fn mixed_block_instance(
    bands: usize,
    rank: usize,
    pure: usize,
    mixed: usize,
    seed: u64,
) -> MixedBlockInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bases = [
        random_basis(bands, rank, &mut rng),
        random_basis(bands, rank, &mut rng),
    ];
    let mut source = Vec::new();
    source.extend(std::iter::repeat_n(0u8, pure));
    source.extend(std::iter::repeat_n(1u8, pure));
    for i in 0..2 * mixed {
        source.push((i % 2) as u8);
    }
    let n = source.len();
    let mut x = Matrix::zeros(bands, n);
    for (j, &s) in source.iter().enumerate() {
        let pixel = subspace_pixels(&bases[s as usize], 1, &mut rng);
        x.set_column(j, &pixel.column(0));
    }
    x += sparse_spikes(bands, n, 0.02, 0.5, &mut rng);
    let blocks = vec![
        (0..pure).collect(),
        (pure..2 * pure).collect(),
        (2 * pure..n).collect(),
    ];
    let partition = BlockPartition::new(blocks, n).expect("blocks cover every column");
    MixedBlockInstance {
        x,
        partition,
        source,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_rank_part_has_unit_spectral_norm_and_target_rank() {
        let inst = low_rank_plus_sparse(30, 40, 3, 0.05, 0.5, 1);
        let s = SVD::new(inst.low_rank.clone(), false, false).singular_values;
        assert!((s.max() - 1.0).abs() < 1e-12);
        assert!(s.iter().filter(|&&v| v > 1e-10).count() == 3);
        assert_eq!(inst.sparse.iter().filter(|&&v| v != 0.0).count(), 60);
        assert!(inst.sparse.iter().all(|&v| v == 0.0 || v.abs() == 0.5));
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(
            low_rank_plus_sparse(5, 6, 2, 0.1, 1.0, 9).x,
            low_rank_plus_sparse(5, 6, 2, 0.1, 1.0, 9).x
        );
        let a = two_class_cube(4, 4, 3, 2, 0.05, 3);
        let b = two_class_cube(4, 4, 3, 2, 0.05, 3);
        assert_eq!(a.cube, b.cube);
        assert_eq!(a.labels.labels[..4], [1, 1, 2, 2]);
    }

    #[test]
    fn mixed_instance_layout() {
        let inst = mixed_block_instance(6, 2, 5, 3, 0);
        assert_eq!(inst.x.ncols(), 16);
        assert_eq!(inst.partition.len(), 3);
        assert_eq!(inst.source[10..], [0, 1, 0, 1, 0, 1]);
    }
}
