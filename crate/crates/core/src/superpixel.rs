//! Superpixel segmentation and classification-guided refinement.
//!
//! Segmentation is SLIC-style k-means on a scalar base image (the first
//! principal component of the cube) in `(value, row, col)` space, followed by
//! connectivity enforcement. Refinement re-segments every superpixel whose
//! dominant predicted class covers less than `delta` of its pixels.

use std::collections::VecDeque;

use nalgebra::SymmetricEigen;

use crate::classify::{argmax_lowest, LabelField};
use crate::dlrr::BlockPartition;
use crate::error::{Error, Result};
use crate::pipeline::HsiCube;

/// Weight of the spatial term relative to the [0, 1] value range.
pub const DEFAULT_COMPACTNESS: f64 = 0.1;
pub const DEFAULT_SWEEPS: usize = 10;

/// Scalar image in [0, 1], row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseImage {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
}

impl BaseImage {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} values for a {height}x{width} image",
                values.len()
            )));
        }
        if let Some(index) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!(
                "base image value {} at {index} is outside [0, 1]",
                values[index]
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    fn at(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// First principal component of the pixel spectra, min-max scaled to [0, 1].
///
/// The component's sign is fixed so its largest-magnitude loading is
/// positive. A constant cube has no principal direction and maps to an
/// all-0.5 image.
pub fn project_base_image(cube: &HsiCube) -> BaseImage {
    let (height, width) = (cube.height, cube.width);
    let x = &cube.pixels;
    let n = x.ncols();
    let flat = || BaseImage {
        height,
        width,
        values: vec![0.5; n],
    };

    let mean = x.column_mean();
    let mut centered = x.clone();
    for mut column in centered.column_iter_mut() {
        column -= &mean;
    }
    let covariance = &centered * centered.transpose() / n as f64;
    let eigen = SymmetricEigen::new(covariance);
    let top = (0..eigen.eigenvalues.len())
        .max_by(|&a, &b| eigen.eigenvalues[a].total_cmp(&eigen.eigenvalues[b]))
        .unwrap_or(0);
    if eigen.eigenvalues.is_empty() || eigen.eigenvalues[top] <= 0.0 {
        log::debug!("constant cube; base image is flat");
        return flat();
    }
    let mut direction = eigen.eigenvectors.column(top).into_owned();
    let pivot = direction.iter().enumerate().fold(0, |best, (i, v)| {
        if v.abs() > direction[best].abs() {
            i
        } else {
            best
        }
    });
    if direction[pivot] < 0.0 {
        direction = -direction;
    }

    let scores: Vec<f64> = centered.column_iter().map(|c| c.dot(&direction)).collect();
    let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range <= 1e-12 * hi.abs().max(lo.abs()).max(1.0) {
        return flat();
    }
    BaseImage {
        height,
        width,
        values: scores
            .iter()
            .map(|s| ((s - lo) / range).clamp(0.0, 1.0))
            .collect(),
    }
}

/// Pixel → superpixel id map with ids `0..count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuperpixelPartition {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    count: usize,
}

impl SuperpixelPartition {
    /// Checks coverage, contiguous ids and non-emptiness. Connectivity is
    /// checked separately by [`SuperpixelPartition::is_connected`].
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != height * width || labels.is_empty() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {height}x{width} partition",
                labels.len()
            )));
        }
        let count = *labels.iter().max().unwrap() as usize + 1;
        let mut sizes = vec![0usize; count];
        for &l in &labels {
            sizes[l as usize] += 1;
        }
        if let Some(empty) = sizes.iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("superpixel id {empty} is unused")));
        }
        Ok(Self {
            height,
            width,
            labels,
            count,
        })
    }

    /// Relabels arbitrary ids to `0..S` in order of first appearance.
    pub fn from_raw_labels(height: usize, width: usize, raw: &[u64]) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        let labels = raw
            .iter()
            .map(|&r| {
                let next = map.len() as u32;
                *map.entry(r).or_insert(next)
            })
            .collect();
        Self::new(height, width, labels)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Pixel indices of every superpixel, row-major within each.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.count];
        for (pixel, &l) in self.labels.iter().enumerate() {
            members[l as usize].push(pixel);
        }
        members
    }

    pub fn to_block_partition(&self) -> Result<BlockPartition> {
        BlockPartition::new(self.members(), self.labels.len())
    }

    /// Every superpixel forms one 4-connected component.
    pub fn is_connected(&self) -> bool {
        let mut seen = vec![false; self.labels.len()];
        let mut components = 0;
        for start in 0..self.labels.len() {
            if seen[start] {
                continue;
            }
            components += 1;
            let label = self.labels[start];
            flood(self.height, self.width, start, &mut seen, |p| {
                self.labels[p] == label
            });
        }
        components == self.count
    }
}

fn neighbours(height: usize, width: usize, p: usize) -> impl Iterator<Item = usize> {
    let (r, c) = (p / width, p % width);
    [
        (r > 0).then(|| p - width),
        (r + 1 < height).then(|| p + width),
        (c > 0).then(|| p - 1),
        (c + 1 < width).then(|| p + 1),
    ]
    .into_iter()
    .flatten()
}

/// Breadth-first fill from `start` over pixels accepted by `inside`,
/// returning the component in visit order.
fn flood(
    height: usize,
    width: usize,
    start: usize,
    seen: &mut [bool],
    inside: impl Fn(usize) -> bool,
) -> Vec<usize> {
    let mut component = vec![start];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(p) = queue.pop_front() {
        for q in neighbours(height, width, p) {
            if !seen[q] && inside(q) {
                seen[q] = true;
                component.push(q);
                queue.push_back(q);
            }
        }
    }
    component
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlicParams {
    pub compactness: f64,
    pub sweeps: usize,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            compactness: DEFAULT_COMPACTNESS,
            sweeps: DEFAULT_SWEEPS,
        }
    }
}

/// Segment `base` into roughly `target_count` superpixels.
///
/// Grid initialization is deterministic, so `seed` does not change the
/// result; it is accepted so callers can treat segmenters uniformly.
pub fn segment(base: &BaseImage, target_count: usize, seed: u64) -> Result<SuperpixelPartition> {
    segment_with(base, target_count, seed, SlicParams::default())
}

pub fn segment_with(
    base: &BaseImage,
    target_count: usize,
    _seed: u64,
    params: SlicParams,
) -> Result<SuperpixelPartition> {
    if target_count < 1 {
        return Err(Error::degenerate("target superpixel count must be >= 1"));
    }
    let n = base.height * base.width;
    if target_count > n {
        return Err(Error::invalid(format!(
            "target of {target_count} superpixels exceeds {n} pixels"
        )));
    }
    let window = Window {
        row0: 0,
        col0: 0,
        height: base.height,
        width: base.width,
    };
    let local = slic_window(base, window, None, target_count, params);
    let labels = local.into_iter().map(|l| l.expect("full window")).collect();
    SuperpixelPartition::new(base.height, base.width, labels)
}

#[derive(Debug, Clone, Copy)]
struct Window {
    row0: usize,
    col0: usize,
    height: usize,
    width: usize,
}

impl Window {
    fn global(&self, image_width: usize, local: usize) -> usize {
        (self.row0 + local / self.width) * image_width + self.col0 + local % self.width
    }
}

#[derive(Debug, Clone, Copy)]
struct Center {
    value: f64,
    row: f64,
    col: f64,
}

/// SLIC over a window of `base`, optionally restricted to pixels where `mask`
/// (indexed by global pixel) is set. Returns compact labels `0..k` per window
/// pixel, `None` for excluded pixels. Connectivity is enforced within the
/// included set.
fn slic_window(
    base: &BaseImage,
    window: Window,
    mask: Option<&[bool]>,
    target: usize,
    params: SlicParams,
) -> Vec<Option<u32>> {
    let area = window.height * window.width;
    let included: Vec<bool> = (0..area)
        .map(|p| mask.is_none_or(|m| m[window.global(base.width, p)]))
        .collect();
    let population = included.iter().filter(|&&i| i).count();
    let value = |p: usize| base.values[window.global(base.width, p)];

    let mut labels: Vec<Option<u32>> = vec![None; area];
    if target >= population {
        let mut next = 0;
        for (label, &inc) in labels.iter_mut().zip(&included) {
            if inc {
                *label = Some(next);
                next += 1;
            }
        }
        return labels;
    }

    let mut centers = grid_centers(base, window, &included, target);
    let step = (area as f64 / target as f64).sqrt();
    let spatial_weight = (params.compactness / step).powi(2);
    let radius = (2.0 * step).ceil() as isize;
    let distance = |c: &Center, p: usize| {
        let (r, col) = ((p / window.width) as f64, (p % window.width) as f64);
        let dv = value(p) - c.value;
        dv * dv + spatial_weight * ((r - c.row).powi(2) + (col - c.col).powi(2))
    };

    let mut assignment = vec![usize::MAX; area];
    for _ in 0..params.sweeps.max(1) {
        let mut best = vec![(f64::INFINITY, usize::MAX); area];
        for (k, center) in centers.iter().enumerate() {
            let (cr, cc) = (center.row.round() as isize, center.col.round() as isize);
            let r_lo = (cr - radius).max(0) as usize;
            let r_hi = ((cr + radius).max(-1) + 1).min(window.height as isize) as usize;
            let c_lo = (cc - radius).max(0) as usize;
            let c_hi = ((cc + radius).max(-1) + 1).min(window.width as isize) as usize;
            for r in r_lo..r_hi {
                for c in c_lo..c_hi {
                    let p = r * window.width + c;
                    if !included[p] {
                        continue;
                    }
                    let d = distance(center, p);
                    if d < best[p].0 {
                        best[p] = (d, k);
                    }
                }
            }
        }
        for p in 0..area {
            if !included[p] || best[p].1 != usize::MAX {
                continue;
            }
            for (k, center) in centers.iter().enumerate() {
                let d = distance(center, p);
                if d < best[p].0 {
                    best[p] = (d, k);
                }
            }
        }
        let next: Vec<usize> = best.iter().map(|b| b.1).collect();
        let changed = next != assignment;
        assignment = next;
        if !changed {
            break;
        }

        let mut sums = vec![(0.0, 0.0, 0.0, 0usize); centers.len()];
        for p in (0..area).filter(|&p| included[p]) {
            let s = &mut sums[assignment[p]];
            s.0 += value(p);
            s.1 += (p / window.width) as f64;
            s.2 += (p % window.width) as f64;
            s.3 += 1;
        }
        for (center, s) in centers.iter_mut().zip(&sums) {
            if s.3 > 0 {
                let n = s.3 as f64;
                *center = Center {
                    value: s.0 / n,
                    row: s.1 / n,
                    col: s.2 / n,
                };
            }
        }
    }

    let merged = enforce_connectivity(
        window.height,
        window.width,
        &included,
        &assignment,
        centers.len(),
    );
    compact(&merged, &included)
}

/// `target` centers on a near-square grid: rows get `target / rows` or one
/// more centers each, spread evenly across the window width.
fn grid_centers(base: &BaseImage, window: Window, included: &[bool], target: usize) -> Vec<Center> {
    let (h, w) = (window.height, window.width);
    let ideal = (target as f64 * h as f64 / w as f64).sqrt().round() as usize;
    let rows = ideal.max(target.div_ceil(w)).max(1).min(h).min(target);
    let mut centers = Vec::with_capacity(target);
    for i in 0..rows {
        let (r0, r1) = (i * h / rows, (i + 1) * h / rows);
        let per_row = target / rows + usize::from(i < target % rows);
        for j in 0..per_row {
            let (c0, c1) = (j * w / per_row, (j + 1) * w / per_row);
            let mut acc = (0.0, 0usize);
            for r in r0..r1 {
                for c in c0..c1 {
                    if included[r * w + c] {
                        acc.0 += base.at(window.row0 + r, window.col0 + c);
                        acc.1 += 1;
                    }
                }
            }
            let row = (r0 + r1 - 1) as f64 / 2.0;
            let col = (c0 + c1 - 1) as f64 / 2.0;
            let value = if acc.1 > 0 {
                acc.0 / acc.1 as f64
            } else {
                base.at(
                    window.row0 + row.round() as usize,
                    window.col0 + col.round() as usize,
                )
            };
            centers.push(Center { value, row, col });
        }
    }
    centers
}

/// Keep the largest component of every cluster; fold each remaining
/// fragment into the largest adjacent kept cluster.
fn enforce_connectivity(
    height: usize,
    width: usize,
    included: &[bool],
    assignment: &[usize],
    clusters: usize,
) -> Vec<usize> {
    let area = height * width;
    let mut seen = vec![false; area];
    let mut components: Vec<(usize, Vec<usize>)> = Vec::new();
    for start in 0..area {
        if !included[start] || seen[start] {
            continue;
        }
        let label = assignment[start];
        let comp = flood(height, width, start, &mut seen, |q| {
            included[q] && assignment[q] == label
        });
        components.push((label, comp));
    }

    let mut anchor = vec![usize::MAX; clusters];
    for (i, (label, comp)) in components.iter().enumerate() {
        if anchor[*label] == usize::MAX || comp.len() > components[anchor[*label]].1.len() {
            anchor[*label] = i;
        }
    }
    let mut result = vec![usize::MAX; area];
    let mut sizes = vec![0usize; clusters];
    let mut pending = Vec::new();
    for (i, (label, comp)) in components.iter().enumerate() {
        if anchor[*label] == i {
            for &p in comp {
                result[p] = *label;
            }
            sizes[*label] = comp.len();
        } else {
            pending.push(i);
        }
    }

    while !pending.is_empty() {
        let mut deferred = Vec::new();
        for &i in &pending {
            let comp = &components[i].1;
            let target = comp
                .iter()
                .flat_map(|&p| neighbours(height, width, p))
                .filter(|&q| included[q] && result[q] != usize::MAX)
                .map(|q| result[q])
                .fold(None, |best: Option<usize>, l| match best {
                    Some(b) if sizes[b] > sizes[l] || (sizes[b] == sizes[l] && b < l) => Some(b),
                    _ => Some(l),
                });
            match target {
                Some(l) => {
                    for &p in comp {
                        result[p] = l;
                    }
                    sizes[l] += comp.len();
                }
                None => deferred.push(i),
            }
        }
        if deferred.len() == pending.len() {
            // Fragments cut off from every kept cluster become their own.
            for &i in &deferred {
                let label = sizes.len();
                sizes.push(components[i].1.len());
                for &p in &components[i].1 {
                    result[p] = label;
                }
            }
            break;
        }
        pending = deferred;
    }
    result
}

fn compact(assignment: &[usize], included: &[bool]) -> Vec<Option<u32>> {
    let mut map = std::collections::HashMap::new();
    assignment
        .iter()
        .zip(included)
        .map(|(&a, &inc)| {
            inc.then(|| {
                let next = map.len() as u32;
                *map.entry(a).or_insert(next)
            })
        })
        .collect()
}

/// Per-class pixel counts inside one superpixel; `counts[c - 1]` is class `c`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassHistogram {
    pub counts: Vec<usize>,
}

impl ClassHistogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassRatios {
    pub ratios: Vec<f64>,
    /// Share of the dominant class.
    pub max_ratio: f64,
    /// Dominant class id (1-based), lowest id on ties.
    pub argmax_class: u32,
}

pub fn class_ratios(hist: &ClassHistogram) -> Result<ClassRatios> {
    let total = hist.total();
    if total == 0 {
        return Err(Error::degenerate("empty class histogram"));
    }
    let ratios: Vec<f64> = hist
        .counts
        .iter()
        .map(|&h| h as f64 / total as f64)
        .collect();
    let best = argmax_lowest(&hist.counts);
    Ok(ClassRatios {
        max_ratio: ratios[best],
        argmax_class: best as u32 + 1,
        ratios,
    })
}

/// Split every superpixel whose dominant predicted class covers less than
/// `delta` of it into about `m_split` sub-superpixels.
///
/// The split runs SLIC on the superpixel's enclosing square (clipped to the
/// image) using only the superpixel's own pixels. Other superpixels keep
/// their pixels; ids are compacted in raster order.
pub fn refine(
    partition: &SuperpixelPartition,
    predictions: &LabelField,
    delta: f64,
    m_split: usize,
    base: &BaseImage,
    seed: u64,
) -> Result<SuperpixelPartition> {
    refine_with(
        partition,
        predictions,
        delta,
        m_split,
        base,
        seed,
        SlicParams::default(),
    )
}

pub fn refine_with(
    partition: &SuperpixelPartition,
    predictions: &LabelField,
    delta: f64,
    m_split: usize,
    base: &BaseImage,
    _seed: u64,
    params: SlicParams,
) -> Result<SuperpixelPartition> {
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::invalid(format!(
            "delta must be in (0, 1], got {delta}"
        )));
    }
    if m_split < 1 {
        return Err(Error::invalid("m_split must be >= 1"));
    }
    let (height, width) = (partition.height, partition.width);
    if predictions.height != height
        || predictions.width != width
        || base.height != height
        || base.width != width
    {
        return Err(Error::ShapeMismatch(
            "partition, predictions and base image must share a shape".into(),
        ));
    }
    if let Some(p) = predictions.labels.iter().position(|&l| l == 0) {
        return Err(Error::degenerate(format!(
            "pixel {p} has no predicted class"
        )));
    }

    // Raw ids: (parent, sub) pairs, compacted at the end.
    let mut raw = vec![(0u32, 0u32); height * width];
    let mut mask = vec![false; height * width];
    for (parent, pixels) in partition.members().into_iter().enumerate() {
        let mut counts = vec![0usize; predictions.num_classes as usize];
        for &p in &pixels {
            counts[predictions.labels[p] as usize - 1] += 1;
        }
        let ratios = class_ratios(&ClassHistogram { counts })?;
        if ratios.max_ratio >= delta {
            for &p in &pixels {
                raw[p] = (parent as u32, 0);
            }
            continue;
        }

        let window = enclosing_square(&pixels, height, width);
        for &p in &pixels {
            mask[p] = true;
        }
        let local = slic_window(base, window, Some(&mask), m_split, params);
        for (l, sub) in local.iter().enumerate() {
            if let Some(sub) = sub {
                raw[window.global(width, l)] = (parent as u32, *sub);
            }
        }
        for &p in &pixels {
            mask[p] = false;
        }
    }

    let mut map = std::collections::HashMap::new();
    let labels = raw
        .iter()
        .map(|key| {
            let next = map.len() as u32;
            *map.entry(*key).or_insert(next)
        })
        .collect();
    SuperpixelPartition::new(height, width, labels)
}

/// Bounding box of `pixels` grown to a square around its center, clipped to
/// the image.
fn enclosing_square(pixels: &[usize], height: usize, width: usize) -> Window {
    let (mut r_min, mut r_max, mut c_min, mut c_max) = (usize::MAX, 0, usize::MAX, 0);
    for &p in pixels {
        let (r, c) = (p / width, p % width);
        r_min = r_min.min(r);
        r_max = r_max.max(r);
        c_min = c_min.min(c);
        c_max = c_max.max(c);
    }
    let (box_h, box_w) = (r_max - r_min + 1, c_max - c_min + 1);
    let side = box_h.max(box_w);
    let grow = |lo: usize, extent: usize, limit: usize| {
        let start = lo as isize - ((side - extent) / 2) as isize;
        let end = (start + side as isize).min(limit as isize);
        let start = start.max(0);
        (start as usize, (end - start) as usize)
    };
    let (row0, h) = grow(r_min, box_h, height);
    let (col0, w) = grow(c_min, box_w, width);
    Window {
        row0,
        col0,
        height: h,
        width: w,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn image(height: usize, width: usize, f: impl Fn(usize, usize) -> f64) -> BaseImage {
        let values = (0..height * width)
            .map(|p| f(p / width, p % width))
            .collect();
        BaseImage::new(height, width, values).unwrap()
    }

    fn random_image(height: usize, width: usize, seed: u64) -> BaseImage {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..height * width)
            .map(|_| rng.random_range(0.0..1.0))
            .collect();
        BaseImage::new(height, width, values).unwrap()
    }

    /// Same partition up to a renaming of ids.
    fn same_up_to_relabel(a: &[u32], b: &[u32]) -> bool {
        let mut fwd = std::collections::HashMap::new();
        let mut back = std::collections::HashMap::new();
        a.iter()
            .zip(b)
            .all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
    }

    #[test]
    fn constant_cube_projects_flat() {
        let cube = HsiCube::new(3, 4, Matrix::from_element(5, 12, 0.3)).unwrap();
        assert!(project_base_image(&cube).values.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn repeated_band_projects_to_rescaled_band() {
        let band: Vec<f64> = (0..12).map(|i| ((i * 7) % 12) as f64 / 3.0 + 2.0).collect();
        let pixels = Matrix::from_fn(4, 12, |_, j| band[j]);
        let cube = HsiCube::new(3, 4, pixels).unwrap();
        let base = project_base_image(&cube);
        let (lo, hi) = (2.0, 2.0 + 11.0 / 3.0);
        for (v, b) in base.values.iter().zip(&band) {
            assert!((v - (b - lo) / (hi - lo)).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_matches_power_iteration_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let pixels = Matrix::from_fn(4, 64, |b, _| rng.random_range(0.0..1.0) * (b + 1) as f64);
        let cube = HsiCube::new(8, 8, pixels.clone()).unwrap();
        let base = project_base_image(&cube);

        // Covariance by explicit sums, leading eigenvector by power iteration.
        let n = 64.0;
        let mean: Vec<f64> = (0..4)
            .map(|b| (0..64).map(|j| pixels[(b, j)]).sum::<f64>() / n)
            .collect();
        let mut cov = [[0.0; 4]; 4];
        for j in 0..64 {
            for a in 0..4 {
                for b in 0..4 {
                    cov[a][b] += (pixels[(a, j)] - mean[a]) * (pixels[(b, j)] - mean[b]) / n;
                }
            }
        }
        let mut v = [1.0, 1.0, 1.0, 1.0];
        for _ in 0..5000 {
            let mut next = [0.0; 4];
            for a in 0..4 {
                next[a] = (0..4).map(|b| cov[a][b] * v[b]).sum();
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            v = next.map(|x| x / norm);
        }
        let pivot = (0..4)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
            .unwrap();
        if v[pivot] < 0.0 {
            v = v.map(|x| -x);
        }
        let scores: Vec<f64> = (0..64)
            .map(|j| (0..4).map(|b| (pixels[(b, j)] - mean[b]) * v[b]).sum())
            .collect();
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (got, s) in base.values.iter().zip(&scores) {
            assert!((got - (s - lo) / (hi - lo)).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_image_splits_into_grid_quadrants() {
        let base = image(10, 10, |_, _| 0.4);
        let part = segment(&base, 4, 0).unwrap();
        assert_eq!(part.count(), 4);
        // Oracle: nearest of the four cell centers (2,2), (2,7), (7,2), (7,7).
        let centers = [(2.0, 2.0), (2.0, 7.0), (7.0, 2.0), (7.0, 7.0)];
        let oracle: Vec<u32> = (0..100)
            .map(|p| {
                let (r, c) = ((p / 10) as f64, (p % 10) as f64);
                (0..4)
                    .min_by(|&a, &b| {
                        let da = (r - centers[a].0).powi(2) + (c - centers[a].1).powi(2);
                        let db = (r - centers[b].0).powi(2) + (c - centers[b].1).powi(2);
                        da.total_cmp(&db)
                    })
                    .unwrap() as u32
            })
            .collect();
        assert!(same_up_to_relabel(&part.labels, &oracle));
        for q in 0..4 {
            assert_eq!(part.labels.iter().filter(|&&l| l == q).count(), 25);
        }
    }

    #[test]
    fn target_equal_to_pixel_count_gives_singletons() {
        let base = random_image(4, 5, 1);
        let part = segment(&base, 20, 0).unwrap();
        assert_eq!(part.count(), 20);
    }

    #[test]
    fn two_tone_image_splits_along_the_tone_boundary() {
        let base = image(10, 10, |_, c| if c < 5 { 0.1 } else { 0.9 });
        let part = segment(&base, 2, 0).unwrap();
        let halves: Vec<u32> = (0..100).map(|p| u32::from(p % 10 >= 5)).collect();
        assert!(same_up_to_relabel(&part.labels, &halves));
    }

    #[test]
    fn segment_rejects_bad_targets() {
        let base = random_image(3, 3, 2);
        assert!(matches!(
            segment(&base, 0, 0),
            Err(Error::DegenerateInput(_))
        ));
        assert!(matches!(segment(&base, 10, 0), Err(Error::InvalidParam(_))));
    }

    #[test]
    fn class_ratio_examples() {
        let r = class_ratios(&ClassHistogram {
            counts: vec![3, 1, 0],
        })
        .unwrap();
        assert_eq!(r.ratios, vec![0.75, 0.25, 0.0]);
        assert_eq!((r.max_ratio, r.argmax_class), (0.75, 1));
        let r = class_ratios(&ClassHistogram { counts: vec![2, 2] }).unwrap();
        assert_eq!((r.max_ratio, r.argmax_class), (0.5, 1));
        let r = class_ratios(&ClassHistogram {
            counts: vec![0, 0, 7],
        })
        .unwrap();
        assert_eq!((r.max_ratio, r.argmax_class), (1.0, 3));
        assert!(class_ratios(&ClassHistogram { counts: vec![0, 0] }).is_err());
    }

    fn checkerboard_partition(height: usize, width: usize, cell: usize) -> SuperpixelPartition {
        let per_row = width.div_ceil(cell);
        let labels = (0..height * width)
            .map(|p| ((p / width / cell) * per_row + (p % width) / cell) as u32)
            .collect();
        SuperpixelPartition::new(height, width, labels).unwrap()
    }

    #[test]
    fn refine_is_a_noop_when_all_superpixels_are_pure() {
        let part = checkerboard_partition(12, 12, 4);
        let predictions =
            LabelField::new(12, 12, part.labels.iter().map(|&l| l % 3 + 1).collect()).unwrap();
        let base = random_image(12, 12, 3);
        let refined = refine(&part, &predictions, 0.7, 3, &base, 0).unwrap();
        assert!(same_up_to_relabel(&refined.labels, &part.labels));
    }

    #[test]
    fn mixed_square_superpixel_splits_in_two() {
        let part = checkerboard_partition(12, 12, 6);
        // Superpixel 0 (top-left 6x6) is half class 1, half class 2.
        let labels = (0..144)
            .map(|p| {
                let (r, c) = (p / 12, p % 12);
                if r < 6 && c < 6 {
                    if c < 3 {
                        1
                    } else {
                        2
                    }
                } else {
                    1
                }
            })
            .collect();
        let predictions = LabelField::new(12, 12, labels).unwrap();
        let base = random_image(12, 12, 4);
        let refined = refine(&part, &predictions, 0.7, 2, &base, 0).unwrap();
        assert_eq!(refined.count(), part.count() + 1);
        assert!(refined.is_connected());
        let top_left: std::collections::BTreeSet<u32> = (0..144)
            .filter(|p| part.labels[*p] == part.labels[0])
            .map(|p| refined.labels[p])
            .collect();
        assert_eq!(top_left.len(), 2);
        assert_nested(&part, &refined);
    }

    #[test]
    fn tiny_delta_never_splits() {
        let part = checkerboard_partition(8, 8, 4);
        let predictions =
            LabelField::new(8, 8, (0..64).map(|p| (p % 4) as u32 + 1).collect()).unwrap();
        let base = random_image(8, 8, 5);
        let refined = refine(&part, &predictions, 1e-9, 3, &base, 0).unwrap();
        assert!(same_up_to_relabel(&refined.labels, &part.labels));
        assert!(refine(&part, &predictions, 0.0, 3, &base, 0).is_err());
    }

    #[test]
    fn small_noisy_superpixel_becomes_singletons() {
        // 2x2 superpixels, M = 5 exceeds their size.
        let part = checkerboard_partition(4, 4, 2);
        let predictions =
            LabelField::new(4, 4, (0..16).map(|p| (p % 2) as u32 + 1).collect()).unwrap();
        let base = random_image(4, 4, 6);
        let refined = refine(&part, &predictions, 0.9, 5, &base, 0).unwrap();
        assert_eq!(refined.count(), 16);
    }

    #[test]
    fn refine_with_irregular_parent_keeps_subsets_connected() {
        // An L-shaped superpixel next to a block.
        let labels: Vec<u32> = (0..64)
            .map(|p| {
                let (r, c) = (p / 8, p % 8);
                u32::from(!(r < 2 || c < 2))
            })
            .collect();
        let part = SuperpixelPartition::new(8, 8, labels).unwrap();
        let predictions =
            LabelField::new(8, 8, (0..64).map(|p| ((p / 3) % 2) as u32 + 1).collect()).unwrap();
        let base = random_image(8, 8, 7);
        let refined = refine(&part, &predictions, 0.9, 3, &base, 0).unwrap();
        assert!(refined.is_connected());
        assert!(refined.count() >= part.count());
        assert_nested(&part, &refined);
    }

    fn assert_nested(parent: &SuperpixelPartition, child: &SuperpixelPartition) {
        let mut owner = std::collections::HashMap::new();
        for (&c, &p) in child.labels.iter().zip(&parent.labels) {
            assert_eq!(
                *owner.entry(c).or_insert(p),
                p,
                "child {c} spans two parents"
            );
        }
    }

    #[test]
    fn enclosing_square_clips_at_borders() {
        // A 1x4 strip in the top row grows to rows -1..3 and is clipped to 0..3.
        let w = enclosing_square(&[0, 1, 2, 3], 6, 6);
        assert_eq!((w.row0, w.col0, w.height, w.width), (0, 0, 3, 4));
        let w = enclosing_square(&[14, 15], 6, 6);
        assert_eq!((w.row0, w.col0, w.height, w.width), (2, 2, 2, 2));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn segmentation_meets_partition_invariants(
            h in 2usize..14, w in 2usize..14, seed in 0u64..500, frac in 0.05f64..1.0
        ) {
            let base = random_image(h, w, seed);
            let target = ((h * w) as f64 * frac).ceil().max(1.0) as usize;
            let part = segment(&base, target, seed).unwrap();
            prop_assert!(part.is_connected());
            prop_assert_eq!(part.labels.len(), h * w);
            prop_assert!(part.count() >= 1);
            prop_assert_eq!(&part, &segment(&base, target, seed).unwrap());
        }

        #[test]
        fn smooth_images_stay_near_target(seed in 0u64..200, target in 2usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (a, b) = (rng.random_range(0.0..0.5), rng.random_range(0.0..0.5));
            let base = image(20, 20, |r, c| (a * r as f64 + b * c as f64) / 20.0);
            let part = segment(&base, target, seed).unwrap();
            prop_assert!(part.count() * 2 >= target && part.count() <= 2 * target,
                "target {} got {}", target, part.count());
        }

        #[test]
        fn refine_never_merges(seed in 0u64..500, delta in 0.3f64..1.0, m in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let base = random_image(12, 12, seed);
            let part = segment(&base, 9, seed).unwrap();
            let predictions = LabelField::new(12, 12, (0..144).map(|_| rng.random_range(1..=3)).collect()).unwrap();
            let refined = refine(&part, &predictions, delta, m, &base, seed).unwrap();
            prop_assert!(refined.is_connected());
            prop_assert!(refined.count() >= part.count());
            assert_nested(&part, &refined);
        }

        #[test]
        fn ratios_sum_to_one(counts in prop::collection::vec(0usize..100, 1..8)) {
            prop_assume!(counts.iter().sum::<usize>() > 0);
            let r = class_ratios(&ClassHistogram { counts }).unwrap();
            prop_assert!((r.ratios.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
