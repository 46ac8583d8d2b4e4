//! The outer classification loop.
//!
//! Each round segments the current input (the normalized cube first, the
//! previous restoration afterwards), refines the segmentation with
//! classifier predictions, and decomposes the *original* normalized cube
//! over the refined superpixels. After the last round the restoration is
//! classified and scored.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use crate::classify::{self, ClassifierKind, LabelField, MetricsReport, TrainSplit};
use crate::dlrr::{self, DlrrParams, SolveTrace};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::superpixel::{self, SuperpixelPartition};

/// Hyperspectral cube as a bands × pixels matrix. Column `j` is the pixel at
/// row `j / width`, column `j % width`.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube {
    pub height: usize,
    pub width: usize,
    pub pixels: Matrix,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, pixels: Matrix) -> Result<Self> {
        if height == 0 || width == 0 || pixels.nrows() == 0 {
            return Err(Error::ShapeMismatch(
                "cube dimensions must be positive".into(),
            ));
        }
        if pixels.ncols() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "{} pixel columns for a {height}x{width} cube",
                pixels.ncols()
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn bands(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn len(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Global min-max rescale of every entry to [0, 1].
pub fn normalize(cube: &HsiCube) -> Result<HsiCube> {
    if let Some(index) = cube.pixels.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteData { index });
    }
    let lo = cube.pixels.min();
    let hi = cube.pixels.max();
    if hi <= lo {
        return Err(Error::degenerate("cube is constant"));
    }
    let span = hi - lo;
    HsiCube::new(
        cube.height,
        cube.width,
        cube.pixels.map(|v| ((v - lo) / span).clamp(0.0, 1.0)),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Number of segment + decompose rounds.
    pub t_max: usize,
    pub initial_superpixels: usize,
    /// Superpixels whose dominant class share is below this are split.
    pub delta: f64,
    /// Sub-superpixels targeted per split.
    pub m_split: usize,
    pub dlrr: DlrrParams,
    pub classifier: ClassifierKind,
    /// Fraction of each class drawn for training.
    pub train_percent: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::indian_pines()
    }
}

impl PipelineConfig {
    pub fn indian_pines() -> Self {
        Self {
            t_max: 3,
            initial_superpixels: 64,
            delta: 0.7,
            m_split: 5,
            dlrr: DlrrParams {
                lambda: 0.05,
                beta: 1.0,
                ..DlrrParams::default()
            },
            classifier: ClassifierKind::default(),
            train_percent: 0.05,
            seed: 0,
        }
    }

    pub fn salinas() -> Self {
        Self {
            initial_superpixels: 50,
            delta: 0.6,
            m_split: 3,
            dlrr: DlrrParams {
                lambda: 0.01,
                ..Self::indian_pines().dlrr
            },
            train_percent: 0.005,
            ..Self::indian_pines()
        }
    }

    pub fn pavia_university() -> Self {
        Self {
            delta: 0.2,
            train_percent: 0.002,
            ..Self::salinas()
        }
    }

    /// Looks up a named preset (`indian_pines`, `salinas`, `pavia_university`).
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "indian_pines" => Some(Self::indian_pines()),
            "salinas" => Some(Self::salinas()),
            "pavia_university" => Some(Self::pavia_university()),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.t_max < 1 {
            return Err(Error::invalid("t_max must be >= 1"));
        }
        if self.initial_superpixels < 1 {
            return Err(Error::invalid("initial superpixel count must be >= 1"));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::invalid(format!(
                "delta must be in (0, 1], got {}",
                self.delta
            )));
        }
        if self.m_split < 1 {
            return Err(Error::invalid("m_split must be >= 1"));
        }
        if !(self.train_percent > 0.0 && self.train_percent < 1.0) {
            return Err(Error::invalid(format!(
                "train_percent must be in (0, 1), got {}",
                self.train_percent
            )));
        }
        if let ClassifierKind::Knn { k: 0 } = self.classifier {
            return Err(Error::invalid("knn needs k >= 1"));
        }
        self.dlrr.validate()
    }
}

/// Everything one round produced.
#[derive(Debug, Clone)]
pub struct RoundArtifacts {
    /// Segmentation of the round's input before refinement.
    pub segmentation: SuperpixelPartition,
    /// Predictions used to refine, with training pixels set to their truth.
    pub predictions: LabelField,
    /// Partition the decomposition ran on.
    pub partition: SuperpixelPartition,
    pub trace: SolveTrace,
    pub converged: bool,
    /// Fingerprint of the matrix handed to the solver.
    pub solve_input_digest: u64,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub normalized: HsiCube,
    pub l_final: Matrix,
    pub e_final: Matrix,
    pub rounds: Vec<RoundArtifacts>,
    pub split: TrainSplit,
    pub final_predictions: LabelField,
    pub metrics: MetricsReport,
}

impl PipelineResult {
    pub fn traces(&self) -> impl Iterator<Item = &SolveTrace> {
        self.rounds.iter().map(|r| &r.trace)
    }

    /// Whether the decomposition of the final round converged.
    pub fn last_converged(&self) -> bool {
        self.rounds.last().is_some_and(|r| r.converged)
    }

    pub fn all_converged(&self) -> bool {
        self.rounds.iter().all(|r| r.converged)
    }
}

/// Bitwise fingerprint of a matrix (shape and every entry's bit pattern).
pub fn matrix_digest(m: &Matrix) -> u64 {
    let mut hasher = DefaultHasher::new();
    m.shape().hash(&mut hasher);
    for v in m.iter() {
        v.to_bits().hash(&mut hasher);
    }
    hasher.finish()
}

pub fn run(cube: &HsiCube, labels: &LabelField, config: &PipelineConfig) -> Result<PipelineResult> {
    config.validate()?;
    if labels.height != cube.height || labels.width != cube.width {
        return Err(Error::ShapeMismatch(format!(
            "labels are {}x{}, cube is {}x{}",
            labels.height, labels.width, cube.height, cube.width
        )));
    }
    if config.initial_superpixels > cube.len() {
        return Err(Error::invalid(format!(
            "{} superpixels requested for {} pixels",
            config.initial_superpixels,
            cube.len()
        )));
    }
    let normalized = normalize(cube)?;
    let x = &normalized.pixels;
    let split = classify::split(labels, config.train_percent, config.seed)?;

    let mut rounds = Vec::with_capacity(config.t_max);
    let mut input = x.clone();
    let mut e_final = Matrix::zeros(x.nrows(), x.ncols());
    for round in 0..config.t_max {
        let current = HsiCube::new(cube.height, cube.width, input)?;
        let base = superpixel::project_base_image(&current);
        let segmentation = superpixel::segment(&base, config.initial_superpixels, config.seed)?;

        let mut predictions =
            classify::train_predict(&current.pixels, &split, labels, &config.classifier)?;
        for (p, &is_train) in split.train_mask.iter().enumerate() {
            if is_train {
                predictions.labels[p] = labels.labels[p];
            }
        }
        let partition = superpixel::refine(
            &segmentation,
            &predictions,
            config.delta,
            config.m_split,
            &base,
            config.seed,
        )?;
        log::info!(
            "round {round}: {} superpixels, {} after refinement",
            segmentation.count(),
            partition.count()
        );

        let blocks = partition.to_block_partition()?;
        let solve_input_digest = matrix_digest(x);
        let solution = dlrr::solve(x, &blocks, &config.dlrr)?;
        if !solution.converged {
            log::warn!("round {round}: decomposition hit max_iter without converging");
        }
        rounds.push(RoundArtifacts {
            segmentation,
            predictions,
            partition,
            trace: solution.trace,
            converged: solution.converged,
            solve_input_digest,
        });
        input = solution.l;
        e_final = solution.e;
    }

    let l_final = input;
    let final_predictions = classify::train_predict(&l_final, &split, labels, &config.classifier)?;
    let metrics = classify::evaluate(&final_predictions, labels, &split.test_mask)?;
    Ok(PipelineResult {
        normalized,
        l_final,
        e_final,
        rounds,
        split,
        final_predictions,
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_examples() {
        let unit = HsiCube::new(1, 3, Matrix::from_row_slice(1, 3, &[0.0, 0.25, 1.0])).unwrap();
        assert_eq!(normalize(&unit).unwrap(), unit);

        let wide =
            HsiCube::new(1, 3, Matrix::from_row_slice(1, 3, &[100.0, 150.0, 300.0])).unwrap();
        let n = normalize(&wide).unwrap();
        assert_eq!(n.pixels.as_slice(), &[0.0, 0.25, 1.0]);

        let flat = HsiCube::new(2, 2, Matrix::from_element(3, 4, 7.0)).unwrap();
        assert!(matches!(normalize(&flat), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn cube_shape_is_checked() {
        assert!(HsiCube::new(2, 3, Matrix::zeros(4, 5)).is_err());
        assert!(HsiCube::new(0, 3, Matrix::zeros(4, 0)).is_err());
    }

    #[test]
    fn presets_are_valid() {
        for name in ["indian_pines", "salinas", "pavia_university"] {
            PipelineConfig::preset(name).unwrap().validate().unwrap();
        }
        let ip = PipelineConfig::indian_pines();
        assert_eq!((ip.t_max, ip.initial_superpixels, ip.m_split), (3, 64, 5));
        assert_eq!((ip.delta, ip.dlrr.lambda, ip.dlrr.beta), (0.7, 0.05, 1.0));
        let pu = PipelineConfig::pavia_university();
        assert_eq!((pu.delta, pu.m_split, pu.dlrr.lambda), (0.2, 3, 0.01));
        assert!(PipelineConfig::preset("unknown").is_none());
    }

    #[test]
    fn singleton_superpixel_smoke_run() {
        let (h, w, b) = (4, 4, 3);
        let pixels = Matrix::from_fn(b, h * w, |r, c| ((r * 7 + c * 3) % 11) as f64);
        let cube = HsiCube::new(h, w, pixels).unwrap();
        let labels = LabelField::new(h, w, (0..16).map(|p| (p % 2) as u32 + 1).collect()).unwrap();
        let config = PipelineConfig {
            t_max: 1,
            initial_superpixels: 16,
            dlrr: DlrrParams {
                beta: 0.0,
                lambda: 1e6,
                ..DlrrParams::default()
            },
            train_percent: 0.3,
            ..PipelineConfig::default()
        };
        let result = run(&cube, &labels, &config).unwrap();
        assert_eq!(result.rounds.len(), 1);
        assert_eq!(result.l_final.shape(), (b, h * w));
        assert_eq!(result.final_predictions.len(), h * w);
        assert_eq!(result.rounds[0].partition.count(), 16);
    }
}
