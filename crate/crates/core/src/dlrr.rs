//! Inexact augmented Lagrangian solver for the discriminative low-rank
//! decomposition over a superpixel partition.
//!
//! Given a pixel matrix `X` (bands × pixels) whose columns are grouped into
//! blocks `X_1 … X_S`, the solver minimizes
//!
//! ```text
//!   Σ_i ‖L_i‖_* + λ‖E‖_1 − β‖L‖_*   s.t.  X = L + E
//! ```
//!
//! through the split `J = L`. Each outer iteration updates, in order, every
//! block `L_i` by singular value thresholding, `E` by elementwise soft
//! thresholding, `J` by a linearized step on the concave `−β‖J‖_*` term, then
//! the two multipliers and the penalty `μ`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    self, max_norm, scatter_columns, soft_threshold_matrix, svt_with_norm, Matrix, SvdFactors,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DlrrParams {
    /// Weight of the sparse variation term.
    pub lambda: f64,
    /// Weight of the global (negative) nuclear norm; 0 disables the
    /// discriminability term.
    pub beta: f64,
    pub mu0: f64,
    pub rho: f64,
    pub mu_max: f64,
    /// Max-norm tolerance on both primal residuals.
    pub eps: f64,
    pub max_iter: usize,
    /// Relative singular value cutoff for the subgradient of `‖J‖_*`.
    pub rank_tol: f64,
    /// Evaluate the augmented Lagrangian every iteration.
    pub track_objective: bool,
}

impl Default for DlrrParams {
    fn default() -> Self {
        Self {
            lambda: 0.05,
            beta: 1.0,
            mu0: 1e-4,
            rho: 1.1,
            mu_max: 1e12,
            eps: 1e-6,
            max_iter: 500,
            rank_tol: linalg::DEFAULT_RANK_TOL,
            track_objective: true,
        }
    }
}

impl DlrrParams {
    pub fn validate(&self) -> Result<()> {
        let all_finite = [
            self.lambda,
            self.beta,
            self.mu0,
            self.rho,
            self.mu_max,
            self.eps,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::invalid("solver parameters must be finite"));
        }
        if self.lambda <= 0.0 {
            return Err(Error::invalid(format!(
                "lambda must be > 0, got {}",
                self.lambda
            )));
        }
        if self.beta < 0.0 {
            return Err(Error::invalid(format!(
                "beta must be >= 0, got {}",
                self.beta
            )));
        }
        if self.mu0 <= 0.0 || self.mu0 >= self.mu_max {
            return Err(Error::invalid(format!(
                "need 0 < mu0 < mu_max, got mu0 = {}, mu_max = {}",
                self.mu0, self.mu_max
            )));
        }
        if self.rho <= 1.0 {
            return Err(Error::invalid(format!("rho must be > 1, got {}", self.rho)));
        }
        if self.eps <= 0.0 {
            return Err(Error::invalid(format!("eps must be > 0, got {}", self.eps)));
        }
        if self.max_iter == 0 {
            return Err(Error::invalid("max_iter must be >= 1"));
        }
        if !(self.rank_tol > 0.0 && self.rank_tol.is_finite()) {
            return Err(Error::invalid("rank_tol must be > 0"));
        }
        Ok(())
    }
}

/// Disjoint column groups covering `0..columns`. Groups need not be
/// contiguous; each is gathered into a dense block for its SVD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    blocks: Vec<Vec<usize>>,
    columns: usize,
}

impl BlockPartition {
    pub fn new(blocks: Vec<Vec<usize>>, columns: usize) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::invalid("partition needs at least one block"));
        }
        let mut seen = vec![false; columns];
        for (i, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(Error::invalid(format!("block {i} is empty")));
            }
            for &c in block {
                if c >= columns {
                    return Err(Error::invalid(format!(
                        "block {i} references column {c} of {columns}"
                    )));
                }
                if std::mem::replace(&mut seen[c], true) {
                    return Err(Error::invalid(format!("column {c} appears in two blocks")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::invalid(format!("column {missing} is not covered")));
        }
        Ok(Self { blocks, columns })
    }

    /// One block holding every column.
    pub fn single(columns: usize) -> Result<Self> {
        Self::new(vec![(0..columns).collect()], columns)
    }

    /// Group columns by label value; blocks are ordered by ascending label.
    pub fn from_labels<T: Ord + Copy>(labels: &[T]) -> Result<Self> {
        let mut groups: BTreeMap<T, Vec<usize>> = BTreeMap::new();
        for (col, &label) in labels.iter().enumerate() {
            groups.entry(label).or_default().push(col);
        }
        Self::new(groups.into_values().collect(), labels.len())
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn columns(&self) -> usize {
        self.columns
    }
}

/// Iterates of the solver. All matrices share the shape of `X`.
#[derive(Debug, Clone)]
pub struct SolverState {
    pub l: Matrix,
    pub e: Matrix,
    pub j: Matrix,
    pub y1: Matrix,
    pub y2: Matrix,
    pub mu: f64,
    pub iter: usize,
}

impl SolverState {
    /// All iterates zero, `μ = mu0`.
    pub fn zeros(rows: usize, cols: usize, mu0: f64) -> Self {
        let z = Matrix::zeros(rows, cols);
        Self {
            l: z.clone(),
            e: z.clone(),
            j: z.clone(),
            y1: z.clone(),
            y2: z,
            mu: mu0,
            iter: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based iteration index.
    pub iter: usize,
    /// `‖X − L − E‖_∞`
    pub r1: f64,
    /// `‖J − L‖_∞`
    pub r2: f64,
    /// Augmented Lagrangian at the new `(L, E, J)` with the multipliers and
    /// `μ` used during the iteration. `None` when tracking is off.
    pub objective: Option<f64>,
    /// `Σ‖L_i‖_* + λ‖E‖_1 − β‖J‖_*` at the new iterate, without the penalty
    /// terms. `None` when tracking is off.
    pub model_objective: Option<f64>,
    /// `μ` used during the iteration.
    pub mu: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveTrace {
    pub records: Vec<IterationRecord>,
}

impl SolveTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> Option<&IterationRecord> {
        self.records.last()
    }

    /// CSV with header `iter,r1,r2,objective,mu,model_objective`. Disabled
    /// objectives are written as empty fields.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,r1,r2,objective,mu,model_objective\n");
        let field = |v: Option<f64>| v.map(|o| format!("{o:e}")).unwrap_or_default();
        for r in &self.records {
            out.push_str(&format!(
                "{},{:e},{:e},{},{:e},{}\n",
                r.iter,
                r.r1,
                r.r2,
                field(r.objective),
                r.mu,
                field(r.model_objective)
            ));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct DlrrSolution {
    pub l: Matrix,
    pub e: Matrix,
    pub trace: SolveTrace,
    pub converged: bool,
}

impl DlrrSolution {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    /// Turn a non-converged solution into [`Error::NotConverged`].
    pub fn into_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations(),
            })
        }
    }
}

/// `W_i = ½[(X_i − E_i + Y1_i/μ) + (J_i + Y2_i/μ)]` and
/// `L_i = svt(W_i, 1/(2μ))` for every block. Returns `Σ_i ‖L_i‖_*`.
pub fn update_l_blocks(
    state: &mut SolverState,
    x: &Matrix,
    partition: &BlockPartition,
) -> Result<f64> {
    let mu = state.mu;
    let tau = 1.0 / (2.0 * mu);
    let shared = &*state;
    let solve_block = |(index, columns): (usize, &Vec<usize>)| -> Result<(Matrix, f64)> {
        let w = Matrix::from_fn(x.nrows(), columns.len(), |r, k| {
            let c = columns[k];
            0.5 * ((x[(r, c)] - shared.e[(r, c)] + shared.y1[(r, c)] / mu)
                + (shared.j[(r, c)] + shared.y2[(r, c)] / mu))
        });
        svt_with_norm(&w, tau).map_err(|_| Error::SvdFailure { block: Some(index) })
    };
    let updated: Vec<Result<(Matrix, f64)>> = if partition.len() > 1 {
        partition
            .blocks()
            .par_iter()
            .enumerate()
            .map(solve_block)
            .collect()
    } else {
        partition
            .blocks()
            .iter()
            .enumerate()
            .map(solve_block)
            .collect()
    };
    let mut block_norms = 0.0;
    for (columns, result) in partition.blocks().iter().zip(updated) {
        let (block, norm) = result?;
        scatter_columns(&mut state.l, columns, &block);
        block_norms += norm;
    }
    Ok(block_norms)
}

/// `E = S_{λ/μ}(X − L + Y1/μ)`.
pub fn update_e(state: &mut SolverState, x: &Matrix, lambda: f64) {
    let mu = state.mu;
    let d = x - &state.l + &state.y1 / mu;
    state.e = soft_threshold_matrix(&d, lambda / mu);
}

/// `J = (β/μ) G − Y2/μ + L`, with `G` the subgradient of `‖Ĵ‖_*` at the
/// current (previous-iteration) `J`.
pub fn update_j(state: &mut SolverState, beta: f64, rank_tol: f64) -> Result<()> {
    let subgradient = if beta > 0.0 {
        Some(linalg::nuclear_subgradient(&state.j, rank_tol)?)
    } else {
        None
    };
    apply_j_update(state, beta, subgradient.as_ref());
    Ok(())
}

fn apply_j_update(state: &mut SolverState, beta: f64, subgradient: Option<&Matrix>) {
    let mu = state.mu;
    let mut j = &state.l - &state.y2 / mu;
    if let Some(g) = subgradient {
        j += g * (beta / mu);
    }
    state.j = j;
}

/// `Y1 += μ(X − L − E)`, `Y2 += μ(J − L)`, `μ ← min(μ_max, ρμ)`.
pub fn update_multipliers(state: &mut SolverState, x: &Matrix, rho: f64, mu_max: f64) {
    let mu = state.mu;
    state.y1 += (x - &state.l - &state.e) * mu;
    state.y2 += (&state.j - &state.l) * mu;
    state.mu = mu_max.min(rho * mu);
}

/// Both `‖X − L − E‖_∞ ≤ eps` and `‖L − J‖_∞ ≤ eps`.
pub fn check_convergence(state: &SolverState, x: &Matrix, eps: f64) -> bool {
    let (r1, r2) = residuals(state, x);
    r1 <= eps && r2 <= eps
}

fn residuals(state: &SolverState, x: &Matrix) -> (f64, f64) {
    (
        max_norm(&(x - &state.l - &state.e)),
        max_norm(&(&state.l - &state.j)),
    )
}

/// Stepwise solver. [`DlrrSolver::solve`] runs it to convergence; tests and
/// diagnostics can call [`DlrrSolver::step`] and inspect the state.
pub struct DlrrSolver<'a> {
    x: &'a Matrix,
    partition: &'a BlockPartition,
    params: DlrrParams,
    state: SolverState,
    // SVD of the current J, reused for the next subgradient.
    j_factors: Option<SvdFactors>,
    converged: bool,
}

impl<'a> DlrrSolver<'a> {
    pub fn new(x: &'a Matrix, partition: &'a BlockPartition, params: DlrrParams) -> Result<Self> {
        params.validate()?;
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::ShapeMismatch("X must be non-empty".into()));
        }
        if partition.columns() != x.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "partition covers {} columns, X has {}",
                partition.columns(),
                x.ncols()
            )));
        }
        if let Some(index) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteData { index });
        }
        Ok(Self {
            x,
            partition,
            params,
            state: SolverState::zeros(x.nrows(), x.ncols(), params.mu0),
            j_factors: None,
            converged: false,
        })
    }

    pub fn state(&self) -> &SolverState {
        &self.state
    }

    pub fn params(&self) -> &DlrrParams {
        &self.params
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// One outer iteration.
    pub fn step(&mut self) -> Result<IterationRecord> {
        let p = self.params;
        let x = self.x;
        let mu = self.state.mu;

        let block_norms = update_l_blocks(&mut self.state, x, self.partition)?;
        update_e(&mut self.state, x, p.lambda);

        if p.beta > 0.0 {
            let g = match &self.j_factors {
                Some(f) => linalg::subgradient_from_factors(f, p.rank_tol, x.nrows(), x.ncols()),
                // J starts at zero, whose chosen subgradient is zero.
                None => Matrix::zeros(x.nrows(), x.ncols()),
            };
            apply_j_update(&mut self.state, p.beta, Some(&g));
            self.j_factors = Some(linalg::svd(&self.state.j)?);
        } else {
            apply_j_update(&mut self.state, p.beta, None);
        }

        let objectives = p.track_objective.then(|| {
            let j_norm = self.j_factors.as_ref().map_or(0.0, |f| f.singulars.sum());
            self.objectives(block_norms, j_norm)
        });

        update_multipliers(&mut self.state, x, p.rho, p.mu_max);
        self.state.iter += 1;

        let (r1, r2) = residuals(&self.state, x);
        self.converged = r1 <= p.eps && r2 <= p.eps;
        Ok(IterationRecord {
            iter: self.state.iter,
            r1,
            r2,
            objective: objectives.map(|o| o.0),
            model_objective: objectives.map(|o| o.1),
            mu,
        })
    }

    /// `(augmented Lagrangian, model objective)` at the current iterate.
    fn objectives(&self, block_norms: f64, j_norm: f64) -> (f64, f64) {
        let s = &self.state;
        let p = &self.params;
        let l1: f64 = s.e.iter().map(|v| v.abs()).sum();
        let fit = (self.x - &s.l - &s.e + &s.y1 / s.mu).norm_squared();
        let split = (&s.j - &s.l + &s.y2 / s.mu).norm_squared();
        let model = block_norms + p.lambda * l1 - p.beta * j_norm;
        (model + 0.5 * s.mu * (fit + split), model)
    }

    /// Iterate until both residuals drop below `eps` or `max_iter` is hit.
    /// Hitting the cap is not an error here: the last iterate is returned
    /// with `converged = false`.
    pub fn solve(mut self) -> Result<DlrrSolution> {
        let mut trace = SolveTrace::default();
        while !self.converged && trace.len() < self.params.max_iter {
            trace.records.push(self.step()?);
        }
        if !self.converged {
            log::warn!(
                "DLRR stopped at max_iter = {} (r1 = {:e}, r2 = {:e})",
                self.params.max_iter,
                trace.last().map_or(f64::NAN, |r| r.r1),
                trace.last().map_or(f64::NAN, |r| r.r2),
            );
        }
        Ok(DlrrSolution {
            l: self.state.l,
            e: self.state.e,
            trace,
            converged: self.converged,
        })
    }
}

/// Decompose `X` into `L + E` over `partition`.
pub fn solve(x: &Matrix, partition: &BlockPartition, params: &DlrrParams) -> Result<DlrrSolution> {
    DlrrSolver::new(x, partition, *params)?.solve()
}
