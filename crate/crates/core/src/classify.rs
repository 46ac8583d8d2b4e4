//! Pixel classifiers and accuracy metrics.
//!
//! Classifiers are a plug-in: anything implementing [`Classifier`] can be
//! trained on the masked training pixels and asked for a label on every
//! pixel. Nearest-centroid and k-nearest-neighbour are built in.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-pixel class ids in row-major order. `0` is unlabeled, `1..=num_classes`
/// are classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField {
    pub height: usize,
    pub width: usize,
    pub labels: Vec<u32>,
    pub num_classes: u32,
}

impl LabelField {
    /// Builds a field whose class count is the largest label present.
    pub fn new(height: usize, width: usize, labels: Vec<u32>) -> Result<Self> {
        let num_classes = labels.iter().copied().max().unwrap_or(0);
        Self::with_classes(height, width, labels, num_classes)
    }

    pub fn with_classes(
        height: usize,
        width: usize,
        labels: Vec<u32>,
        num_classes: u32,
    ) -> Result<Self> {
        if labels.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for a {height}x{width} field",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l > num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} exceeds class count {num_classes}"
            )));
        }
        Ok(Self {
            height,
            width,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pixel indices carrying class `class`, in row-major order.
    pub fn pixels_of(&self, class: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter_map(|(i, &l)| (l == class).then_some(i))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainSplit {
    pub train_mask: Vec<bool>,
    pub test_mask: Vec<bool>,
    pub seed: u64,
    pub percent_per_class: OrderedPercent,
}

/// A training fraction stored by bit pattern so [`TrainSplit`] can be `Eq`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderedPercent(u64);

impl OrderedPercent {
    pub fn value(self) -> f64 {
        f64::from_bits(self.0)
    }
}

impl TrainSplit {
    pub fn percent(&self) -> f64 {
        self.percent_per_class.value()
    }

    pub fn train_indices(&self) -> Vec<usize> {
        mask_indices(&self.train_mask)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        mask_indices(&self.test_mask)
    }
}

fn mask_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect()
}

/// Number of training pixels drawn from a class of `class_size` pixels.
///
/// `max(1, ceil(percent * n))`, capped at `n`. The small slack keeps exact
/// products such as `0.05 * 20` from rounding up to 2.
pub fn training_count(percent: f64, class_size: usize) -> usize {
    let raw = (percent * class_size as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(class_size)
}

/// Draw a per-class stratified training set; everything else labeled is test.
pub fn split(labels: &LabelField, percent: f64, seed: u64) -> Result<TrainSplit> {
    if !(percent > 0.0 && percent < 1.0) {
        return Err(Error::invalid(format!(
            "training percent must be in (0, 1), got {percent}"
        )));
    }
    ensure_trainable(labels)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_mask = vec![false; labels.len()];
    let mut test_mask = vec![false; labels.len()];
    for class in 1..=labels.num_classes {
        let members = labels.pixels_of(class);
        let take = training_count(percent, members.len());
        let mut chosen = vec![false; members.len()];
        for k in index::sample(&mut rng, members.len(), take) {
            chosen[k] = true;
        }
        for (&pixel, &is_train) in members.iter().zip(&chosen) {
            if is_train {
                train_mask[pixel] = true;
            } else {
                test_mask[pixel] = true;
            }
        }
    }
    Ok(TrainSplit {
        train_mask,
        test_mask,
        seed,
        percent_per_class: OrderedPercent(percent.to_bits()),
    })
}

fn ensure_trainable(labels: &LabelField) -> Result<()> {
    if labels.num_classes < 2 {
        return Err(Error::degenerate(format!(
            "need at least 2 classes, found {}",
            labels.num_classes
        )));
    }
    let mut counts = vec![0usize; labels.num_classes as usize + 1];
    for &l in &labels.labels {
        counts[l as usize] += 1;
    }
    if let Some(empty) = (1..counts.len()).find(|&c| counts[c] == 0) {
        return Err(Error::degenerate(format!("class {empty} has no pixels")));
    }
    Ok(())
}

/// A classifier that learns from labeled columns and labels every column.
pub trait Classifier: Sync {
    /// `features` is bands × pixels. `train` pairs a pixel (column) index
    /// with its class in `1..=num_classes`. Returns one class per column.
    fn predict_all(
        &self,
        features: &Matrix,
        train: &[(usize, u32)],
        num_classes: u32,
    ) -> Result<Vec<u32>>;
}

/// Assigns the class whose training mean is closest in Euclidean distance.
#[derive(Debug, Clone, Copy, Default)]
pub struct NearestCentroid;

impl Classifier for NearestCentroid {
    fn predict_all(
        &self,
        features: &Matrix,
        train: &[(usize, u32)],
        num_classes: u32,
    ) -> Result<Vec<u32>> {
        let bands = features.nrows();
        let mut sums = Matrix::zeros(bands, num_classes as usize);
        let mut counts = vec![0usize; num_classes as usize];
        for &(pixel, class) in train {
            let slot = class as usize - 1;
            let mut col = sums.column_mut(slot);
            col += features.column(pixel);
            counts[slot] += 1;
        }
        if let Some(missing) = counts.iter().position(|&c| c == 0) {
            return Err(Error::degenerate(format!(
                "class {} has no training pixels",
                missing + 1
            )));
        }
        for (mut column, &n) in sums.column_iter_mut().zip(&counts) {
            column /= n as f64;
        }
        let centroids = sums;
        Ok((0..features.ncols())
            .into_par_iter()
            .map(|p| {
                let x = features.column(p);
                let mut best = (f64::INFINITY, 1u32);
                for (k, centroid) in centroids.column_iter().enumerate() {
                    let d = (x - centroid).norm_squared();
                    if d < best.0 {
                        best = (d, k as u32 + 1);
                    }
                }
                best.1
            })
            .collect())
    }
}

/// Majority vote among the `k` nearest training pixels. Distance ties go
/// to the earlier training pixel, vote ties to the smaller class id.
#[derive(Debug, Clone, Copy)]
pub struct Knn {
    pub k: usize,
}

impl Default for Knn {
    fn default() -> Self {
        Self { k: 5 }
    }
}

impl Classifier for Knn {
    fn predict_all(
        &self,
        features: &Matrix,
        train: &[(usize, u32)],
        num_classes: u32,
    ) -> Result<Vec<u32>> {
        if self.k == 0 {
            return Err(Error::invalid("k must be >= 1"));
        }
        let mut present = vec![false; num_classes as usize];
        for &(_, class) in train {
            present[class as usize - 1] = true;
        }
        if let Some(missing) = present.iter().position(|&p| !p) {
            return Err(Error::degenerate(format!(
                "class {} has no training pixels",
                missing + 1
            )));
        }
        let k = self.k.min(train.len());
        Ok((0..features.ncols())
            .into_par_iter()
            .map(|p| {
                let x = features.column(p);
                let mut neighbours: Vec<(f64, usize)> = train
                    .iter()
                    .enumerate()
                    .map(|(t, &(pixel, _))| ((x - features.column(pixel)).norm_squared(), t))
                    .collect();
                neighbours.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let mut votes = vec![0usize; num_classes as usize];
                for &(_, t) in &neighbours[..k] {
                    votes[train[t].1 as usize - 1] += 1;
                }
                argmax_lowest(&votes) as u32 + 1
            })
            .collect())
    }
}

/// Index of the largest count, preferring the lowest index on ties.
pub(crate) fn argmax_lowest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Built-in classifiers selectable from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ClassifierKind {
    NearestCentroid,
    Knn { k: usize },
}

impl Default for ClassifierKind {
    fn default() -> Self {
        ClassifierKind::Knn { k: 5 }
    }
}

impl Classifier for ClassifierKind {
    fn predict_all(
        &self,
        features: &Matrix,
        train: &[(usize, u32)],
        num_classes: u32,
    ) -> Result<Vec<u32>> {
        match *self {
            ClassifierKind::NearestCentroid => {
                NearestCentroid.predict_all(features, train, num_classes)
            }
            ClassifierKind::Knn { k } => Knn { k }.predict_all(features, train, num_classes),
        }
    }
}

/// Train on `split`'s training pixels and predict every pixel.
pub fn train_predict(
    features: &Matrix,
    split: &TrainSplit,
    labels: &LabelField,
    classifier: &dyn Classifier,
) -> Result<LabelField> {
    if features.ncols() != labels.len() || split.train_mask.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} feature columns, {} labels, {} mask entries",
            features.ncols(),
            labels.len(),
            split.train_mask.len()
        )));
    }
    if let Some(index) = features.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteData { index });
    }
    let train: Vec<(usize, u32)> = split
        .train_indices()
        .into_iter()
        .map(|p| (p, labels.labels[p]))
        .collect();
    if let Some(&(p, _)) = train.iter().find(|&&(_, l)| l == 0) {
        return Err(Error::invalid(format!("training pixel {p} is unlabeled")));
    }
    let predicted = classifier.predict_all(features, &train, labels.num_classes)?;
    LabelField::with_classes(labels.height, labels.width, predicted, labels.num_classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub oa: f64,
    pub aa: f64,
    pub kappa: f64,
    /// Accuracy per true class; `None` for classes absent from the mask.
    #[serde(rename = "per_class")]
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[t][p]` counts pixels of true class `t + 1` predicted as `p + 1`.
    pub confusion: Vec<Vec<u64>>,
}

impl MetricsReport {
    /// OA, AA and Cohen's kappa from a square confusion matrix
    /// (rows = truth, columns = prediction).
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Self> {
        let c = confusion.len();
        if confusion.iter().any(|row| row.len() != c) {
            return Err(Error::ShapeMismatch(
                "confusion matrix must be square".into(),
            ));
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::degenerate("no pixels to score"));
        }
        let trace: u64 = (0..c).map(|i| confusion[i][i]).sum();
        let rows: Vec<u64> = confusion.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<u64> = (0..c)
            .map(|j| confusion.iter().map(|r| r[j]).sum())
            .collect();

        let per_class_accuracy: Vec<Option<f64>> = (0..c)
            .map(|i| (rows[i] > 0).then(|| confusion[i][i] as f64 / rows[i] as f64))
            .collect();
        let scored: Vec<(u64, u64)> = (0..c)
            .filter(|&i| rows[i] > 0)
            .map(|i| (confusion[i][i], rows[i]))
            .collect();
        let aa = mean_of_ratios(&scored);
        let oa = trace as f64 / total as f64;

        // kappa = (N·trace − Σ row·col) / (N² − Σ row·col), in exact integers.
        let chance: u128 = rows
            .iter()
            .zip(&cols)
            .map(|(&r, &k)| r as u128 * k as u128)
            .sum();
        let n = total as u128;
        let numerator = n * trace as u128;
        let denominator = n * n - chance;
        let kappa = if denominator == 0 {
            // All mass on one diagonal cell.
            1.0
        } else {
            (numerator as i128 - chance as i128) as f64 / denominator as f64
        };

        Ok(Self {
            oa,
            aa,
            kappa,
            per_class_accuracy,
            confusion,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics are always serializable")
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of `num / den` over `ratios`, summed as an exact fraction so that
/// the result is the correctly rounded quotient. Falls back to a float sum
/// if the fraction would overflow.
fn mean_of_ratios(ratios: &[(u64, u64)]) -> f64 {
    let exact = ratios
        .iter()
        .try_fold((0u128, 1u128), |(num, den), &(a, b)| {
            let (a, b) = (a as u128, b as u128);
            let g = gcd(den, b);
            let lcm = (den / g).checked_mul(b)?;
            let sum = num
                .checked_mul(lcm / den)?
                .checked_add(a.checked_mul(lcm / b)?)?;
            let r = gcd(sum, lcm).max(1);
            Some((sum / r, lcm / r))
        });
    match exact.and_then(|(num, den)| Some((num, den.checked_mul(ratios.len() as u128)?))) {
        Some((num, den)) => {
            let g = gcd(num, den).max(1);
            (num / g) as f64 / (den / g) as f64
        }
        None => {
            ratios
                .iter()
                .map(|&(a, b)| a as f64 / b as f64)
                .sum::<f64>()
                / ratios.len() as f64
        }
    }
}

/// Score `predictions` against `truth` over the pixels where `mask` is set.
pub fn evaluate(
    predictions: &LabelField,
    truth: &LabelField,
    mask: &[bool],
) -> Result<MetricsReport> {
    if predictions.len() != truth.len() || mask.len() != truth.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions, {} truth labels, {} mask entries",
            predictions.len(),
            truth.len(),
            mask.len()
        )));
    }
    let classes = predictions.num_classes.max(truth.num_classes) as usize;
    let mut confusion = vec![vec![0u64; classes]; classes];
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (t, p) = (truth.labels[i], predictions.labels[i]);
        if t == 0 {
            return Err(Error::invalid(format!(
                "masked pixel {i} is unlabeled in truth"
            )));
        }
        if p == 0 {
            return Err(Error::degenerate(format!(
                "masked pixel {i} has no prediction"
            )));
        }
        confusion[t as usize - 1][p as usize - 1] += 1;
    }
    MetricsReport::from_confusion(confusion)
}
