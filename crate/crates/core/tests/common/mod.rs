//! Straight-line reference implementations shared by the integration tests.

#![allow(dead_code)]

use nalgebra::{DMatrix, SVD};

pub type M = DMatrix<f64>;

pub fn ref_svt(w: &M, tau: f64) -> M {
    let svd = SVD::new(w.clone(), true, true);
    let u = svd.u.unwrap();
    let v_t = svd.v_t.unwrap();
    let mut out = M::zeros(w.nrows(), w.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk > 0.0 {
            out += shrunk * u.column(k) * v_t.row(k);
        }
    }
    out
}

pub fn ref_soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Iterates of the inexact augmented Lagrangian scheme for
/// `min ‖L‖_* + λ‖E‖_1  s.t.  X = L + E, J = L`, run with the same
/// initialization and penalty schedule as the solver. Returns `(L, E)`
/// after every iteration.
pub fn ref_rpca_iterates(
    x: &M,
    lambda: f64,
    mu0: f64,
    rho: f64,
    mu_max: f64,
    iterations: usize,
) -> Vec<(M, M)> {
    let (m, n) = x.shape();
    let mut e = M::zeros(m, n);
    let mut j = M::zeros(m, n);
    let mut y1 = M::zeros(m, n);
    let mut y2 = M::zeros(m, n);
    let mut mu = mu0;
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let mut w = M::zeros(m, n);
        for r in 0..m {
            for c in 0..n {
                let a = x[(r, c)] - e[(r, c)] + y1[(r, c)] / mu;
                let b = j[(r, c)] + y2[(r, c)] / mu;
                w[(r, c)] = 0.5 * (a + b);
            }
        }
        let l = ref_svt(&w, 1.0 / (2.0 * mu));
        for r in 0..m {
            for c in 0..n {
                e[(r, c)] = ref_soft(x[(r, c)] - l[(r, c)] + y1[(r, c)] / mu, lambda / mu);
            }
        }
        for r in 0..m {
            for c in 0..n {
                j[(r, c)] = l[(r, c)] - y2[(r, c)] / mu;
            }
        }
        for r in 0..m {
            for c in 0..n {
                y1[(r, c)] += mu * (x[(r, c)] - l[(r, c)] - e[(r, c)]);
                y2[(r, c)] += mu * (j[(r, c)] - l[(r, c)]);
            }
        }
        mu = (mu * rho).min(mu_max);
        out.push((l, e.clone()));
    }
    out
}

pub fn max_abs_diff(a: &M, b: &M) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn columns(a: &M, cols: &[usize]) -> M {
    M::from_fn(a.nrows(), cols.len(), |r, c| a[(r, cols[c])])
}
