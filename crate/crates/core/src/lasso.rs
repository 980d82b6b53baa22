//! L1-penalized least squares by cyclic coordinate descent, plus the
//! regularization grid and K-fold cross-validation built on top of it.
//!
//! The objective throughout is
//!
//! ```text
//!   (1 / 2n) * ||y - b0 - X b||^2  +  lambda * sum_k |b_k|
//! ```
//!
//! with an unpenalized intercept. The 1/(2n) scaling puts grid values,
//! lambda_min, and lambda_1se on the conventional scale.

use ndarray::Array2;
use rand::seq::SliceRandom;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{stream_rng, TAG_CV_SHUFFLE};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 100_000;
pub const DEFAULT_GRID_LENGTH: usize = 100;

/// A single Lasso solution.
#[derive(Debug, Clone)]
pub struct LassoFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub lambda: f64,
    /// Number of coordinate sweeps performed.
    pub iterations: usize,
    pub converged: bool,
}

impl LassoFit {
    /// Indices of the nonzero coefficients. Soft-thresholding produces exact
    /// zeros, so no epsilon is involved.
    pub fn support(&self) -> Vec<usize> {
        self.coefficients
            .iter()
            .enumerate()
            .filter(|(_, b)| **b != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (j, b) in self.coefficients.iter().enumerate() {
            if *b != 0.0 {
                acc += row[j] * b;
            }
        }
        acc
    }
}

/// How a regularization grid came to be.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridSource {
    CvDerived,
    User,
}

/// A strictly decreasing grid of positive regularization values.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaGrid {
    values: Vec<f64>,
    source: GridSource,
}

impl LambdaGrid {
    pub fn new(values: Vec<f64>, source: GridSource) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Grid(format!(
                "grid needs at least 2 values, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::Grid(
                "grid values must be positive and finite".into(),
            ));
        }
        if values.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::Grid(
                "grid values must be strictly decreasing".into(),
            ));
        }
        Ok(Self { values, source })
    }

    /// Grid from user-supplied values in any order; duplicates are rejected.
    pub fn from_user(mut values: Vec<f64>) -> Result<Self> {
        values.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
        Self::new(values, GridSource::User)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn source(&self) -> GridSource {
        self.source
    }
}

/// Cross-validation summary over a grid.
#[derive(Debug, Clone)]
pub struct CvResult {
    pub grid: LambdaGrid,
    pub mean_cv_error: Vec<f64>,
    /// Standard error of the fold errors (sd over folds / sqrt(folds)).
    pub sd_cv_error: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_1se: f64,
    pub folds: usize,
}

/// Design matrix stored column-major and mean-centered, with the column
/// means retained for intercept recovery and precomputed per-column
/// (1/n)||x_j||^2. Centering absorbs the (unpenalized) intercept: the
/// solver iterates on coefficients only and the intercept is reconstructed
/// exactly once at the end, so a fit at lambda >= lambda_max keeps every
/// coefficient at exactly zero.
pub(crate) struct ColMajor {
    n: usize,
    p: usize,
    cols: Vec<f64>,
    col_means: Vec<f64>,
    col_sq_over_n: Vec<f64>,
}

impl ColMajor {
    pub(crate) fn from_array(x: &Array2<f64>) -> Self {
        let (n, p) = x.dim();
        let mut cols = vec![0.0; n * p];
        for j in 0..p {
            let dst = &mut cols[j * n..(j + 1) * n];
            for (i, v) in x.column(j).iter().enumerate() {
                dst[i] = *v;
            }
        }
        Self::finish(n, p, cols)
    }

    /// Column-major copy of a row subset, in the given row order.
    pub(crate) fn from_rows(x: &Array2<f64>, rows: &[u32]) -> Self {
        let n = rows.len();
        let p = x.ncols();
        let mut cols = vec![0.0; n * p];
        for j in 0..p {
            let dst = &mut cols[j * n..(j + 1) * n];
            for (i, &r) in rows.iter().enumerate() {
                dst[i] = x[(r as usize, j)];
            }
        }
        Self::finish(n, p, cols)
    }

    fn finish(n: usize, p: usize, mut cols: Vec<f64>) -> Self {
        let mut col_means = vec![0.0; p];
        let mut col_sq_over_n = vec![0.0; p];
        for j in 0..p {
            let c = &mut cols[j * n..(j + 1) * n];
            let mean = c.iter().sum::<f64>() / n as f64;
            for v in c.iter_mut() {
                *v -= mean;
            }
            col_means[j] = mean;
            col_sq_over_n[j] = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
        }
        Self {
            n,
            p,
            cols,
            col_means,
            col_sq_over_n,
        }
    }

    #[inline]
    fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

#[inline]
fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Coordinate-descent state reused across a warm-started path. Operates on
/// centered data; the residual tracks (y - mean(y)) - X_centered * beta.
pub(crate) struct CdSolver<'a> {
    x: &'a ColMajor,
    y: &'a [f64],
    y_mean: f64,
    beta: Vec<f64>,
    residual: Vec<f64>,
}

impl<'a> CdSolver<'a> {
    pub(crate) fn new(x: &'a ColMajor, y: &'a [f64]) -> Self {
        assert_eq!(x.n, y.len());
        let y_mean = y.iter().sum::<f64>() / x.n as f64;
        Self {
            x,
            y,
            y_mean,
            beta: vec![0.0; x.p],
            residual: y.iter().map(|v| v - y_mean).collect(),
        }
    }

    fn objective(&self, lambda: f64) -> f64 {
        let rss: f64 = self.residual.iter().map(|r| r * r).sum();
        let l1: f64 = self.beta.iter().map(|b| b.abs()).sum();
        rss / (2.0 * self.x.n as f64) + lambda * l1
    }

    /// One pass over the coordinates in `active` (None = all). Returns the
    /// largest coefficient change.
    fn sweep(&mut self, lambda: f64, active: Option<&[usize]>) -> f64 {
        let n = self.x.n as f64;
        let mut max_change: f64 = 0.0;

        let update = |j: usize, beta: &mut Vec<f64>, residual: &mut Vec<f64>| {
            let cj = self.x.col_sq_over_n[j];
            if cj == 0.0 {
                return 0.0;
            }
            let col = self.x.col(j);
            let old = beta[j];
            let z = dot(col, residual) / n + cj * old;
            let new = soft_threshold(z, lambda) / cj;
            if new != old {
                let delta = new - old;
                for (rv, xv) in residual.iter_mut().zip(col.iter()) {
                    *rv -= delta * xv;
                }
                beta[j] = new;
                (new - old).abs()
            } else {
                0.0
            }
        };

        match active {
            Some(set) => {
                for &j in set {
                    max_change = max_change.max(update(j, &mut self.beta, &mut self.residual));
                }
            }
            None => {
                for j in 0..self.x.p {
                    max_change = max_change.max(update(j, &mut self.beta, &mut self.residual));
                }
            }
        }
        max_change
    }

    /// Solves at `lambda` from the current state. Alternates full sweeps with
    /// sweeps restricted to the current active set; a full sweep that moves no
    /// coefficient by `tol` or more ends the solve.
    pub(crate) fn solve(&mut self, lambda: f64, tol: f64, max_iter: usize) -> (usize, bool) {
        let mut sweeps = 0usize;
        let mut obj = if cfg!(debug_assertions) {
            self.objective(lambda)
        } else {
            0.0
        };
        let check_obj = |s: &Self, obj: &mut f64| {
            if cfg!(debug_assertions) {
                let next = s.objective(lambda);
                debug_assert!(
                    next <= *obj + 1e-10 * obj.abs().max(1.0),
                    "objective increased: {obj} -> {next}"
                );
                *obj = next;
            }
        };
        loop {
            let change = self.sweep(lambda, None);
            sweeps += 1;
            check_obj(self, &mut obj);
            if change < tol {
                return (sweeps, true);
            }
            if sweeps >= max_iter {
                return (sweeps, false);
            }
            let active: Vec<usize> = self
                .beta
                .iter()
                .enumerate()
                .filter(|(_, b)| **b != 0.0)
                .map(|(j, _)| j)
                .collect();
            if active.is_empty() {
                continue;
            }
            loop {
                let change = self.sweep(lambda, Some(&active));
                sweeps += 1;
                check_obj(self, &mut obj);
                if change < tol || sweeps >= max_iter {
                    break;
                }
            }
            if sweeps >= max_iter {
                return (sweeps, false);
            }
        }
    }

    /// Recomputes the residual from scratch, clearing accumulated drift.
    fn refresh_residual(&mut self) {
        for (i, r) in self.residual.iter_mut().enumerate() {
            *r = self.y[i] - self.y_mean;
        }
        for (j, b) in self.beta.iter().enumerate() {
            if *b != 0.0 {
                let col = self.x.col(j);
                for (r, xv) in self.residual.iter_mut().zip(col.iter()) {
                    *r -= b * xv;
                }
            }
        }
    }

    pub(crate) fn snapshot(&self, lambda: f64, iterations: usize, converged: bool) -> LassoFit {
        // Undo the centering: b0 = mean(y) - sum_j b_j * mean(x_j).
        let mut intercept = self.y_mean;
        for (j, b) in self.beta.iter().enumerate() {
            if *b != 0.0 {
                intercept -= b * self.x.col_means[j];
            }
        }
        LassoFit {
            intercept,
            coefficients: self.beta.clone(),
            lambda,
            iterations,
            converged,
        }
    }
}

fn y_slice(d: &Dataset) -> Vec<f64> {
    d.y().to_vec()
}

/// Fits the Lasso at a single regularization value.
pub fn fit_lasso(d: &Dataset, lambda: f64, tol: f64, max_iter: usize) -> Result<LassoFit> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Parameter(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    if !tol.is_finite() || tol <= 0.0 {
        return Err(Error::Parameter("tol must be positive".into()));
    }
    let x = ColMajor::from_array(d.x());
    let y = y_slice(d);
    let mut solver = CdSolver::new(&x, &y);
    let (iterations, converged) = solver.solve(lambda, tol, max_iter);
    if !converged {
        log::warn!(
            "lasso fit at lambda={lambda} stopped after {iterations} sweeps without converging"
        );
    }
    solver.refresh_residual();
    Ok(solver.snapshot(lambda, iterations, converged))
}

/// Fits the whole decreasing path with warm starts. Solutions agree with
/// cold starts up to the convergence tolerance.
pub fn fit_lasso_path(
    d: &Dataset,
    lambdas: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<LassoFit>> {
    let x = ColMajor::from_array(d.x());
    let y = y_slice(d);
    Ok(path_on(&x, &y, lambdas, tol, max_iter))
}

pub(crate) fn path_on(
    x: &ColMajor,
    y: &[f64],
    lambdas: &[f64],
    tol: f64,
    max_iter: usize,
) -> Vec<LassoFit> {
    let mut solver = CdSolver::new(x, y);
    let mut fits = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let (iterations, converged) = solver.solve(lambda, tol, max_iter);
        solver.refresh_residual();
        fits.push(solver.snapshot(lambda, iterations, converged));
    }
    fits
}

/// Smallest lambda whose solution is the null model:
/// `max_j |<x_j, y - mean(y)>| / n`. Evaluated through the same centered
/// accumulation the solver uses, so a fit at exactly this value yields the
/// null model bit-for-bit. Returns 0 for a constant response.
pub fn lambda_max(d: &Dataset) -> f64 {
    let x = ColMajor::from_array(d.x());
    let y: Vec<f64> = d.y().to_vec();
    let solver = CdSolver::new(&x, &y);
    let n = x.n as f64;
    let mut best: f64 = 0.0;
    for j in 0..x.p {
        best = best.max((dot(x.col(j), &solver.residual) / n).abs());
    }
    if best == 0.0 {
        log::warn!("response has zero variance around its mean; lambda_max is 0");
    }
    best
}

/// Geometric grid of `length` values from lambda_max(d) down to
/// `ratio * lambda_max(d)`.
pub fn make_grid(d: &Dataset, length: usize, ratio: f64) -> Result<LambdaGrid> {
    if length < 2 {
        return Err(Error::Grid(format!(
            "grid length must be >= 2, got {length}"
        )));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::Grid(format!(
            "ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let top = lambda_max(d);
    if top <= 0.0 {
        return Err(Error::Grid(
            "lambda_max is 0 (constant response); no grid exists".into(),
        ));
    }
    let step = ratio.ln() / (length - 1) as f64;
    let values = (0..length).map(|k| top * (step * k as f64).exp()).collect();
    LambdaGrid::new(values, GridSource::CvDerived)
}

/// Default ratio for [`make_grid`]: 1e-4 when n > p, else 1e-2.
pub fn default_grid_ratio(n: usize, p: usize) -> f64 {
    if n > p {
        1e-4
    } else {
        1e-2
    }
}

/// K-fold cross-validation of the Lasso path. Rows are shuffled
/// deterministically from `seed` and cut into contiguous blocks; fold fits
/// run concurrently. `lambda_min` minimizes the mean held-out squared error,
/// and `lambda_1se` is the largest grid value whose mean error stays within
/// one standard error of that minimum.
pub fn cross_validate(d: &Dataset, grid: &LambdaGrid, folds: usize, seed: u64) -> Result<CvResult> {
    let n = d.n();
    if folds < 2 {
        return Err(Error::Parameter(format!("folds must be >= 2, got {folds}")));
    }
    if folds > n {
        return Err(Error::Parameter(format!(
            "{folds} folds on {n} rows leaves empty folds"
        )));
    }
    let mut order: Vec<u32> = (0..n as u32).collect();
    order.shuffle(&mut stream_rng(seed, &[TAG_CV_SHUFFLE]));

    let bounds: Vec<(usize, usize)> = {
        let base = n / folds;
        let extra = n % folds;
        let mut start = 0;
        (0..folds)
            .map(|k| {
                let size = base + usize::from(k < extra);
                let b = (start, start + size);
                start += size;
                b
            })
            .collect()
    };

    use rayon::prelude::*;
    let lambdas = grid.values();
    let fold_errors: Vec<Vec<f64>> = bounds
        .par_iter()
        .map(|&(lo, hi)| {
            let test_rows = &order[lo..hi];
            let train_rows: Vec<u32> = order[..lo]
                .iter()
                .chain(order[hi..].iter())
                .copied()
                .collect();
            let x = ColMajor::from_rows(d.x(), &train_rows);
            let y: Vec<f64> = train_rows.iter().map(|&r| d.y()[r as usize]).collect();
            let fits = path_on(&x, &y, lambdas, DEFAULT_TOL, DEFAULT_MAX_ITER);
            fits.iter()
                .map(|fit| {
                    let mut se = 0.0;
                    for &r in test_rows {
                        let r = r as usize;
                        let mut pred = fit.intercept;
                        for (j, b) in fit.coefficients.iter().enumerate() {
                            if *b != 0.0 {
                                pred += d.x()[(r, j)] * b;
                            }
                        }
                        let e = d.y()[r] - pred;
                        se += e * e;
                    }
                    se / test_rows.len() as f64
                })
                .collect()
        })
        .collect();

    let l = lambdas.len();
    let k = folds as f64;
    let mut mean_cv_error = vec![0.0; l];
    let mut sd_cv_error = vec![0.0; l];
    for li in 0..l {
        let mean = fold_errors.iter().map(|f| f[li]).sum::<f64>() / k;
        let var = fold_errors
            .iter()
            .map(|f| (f[li] - mean) * (f[li] - mean))
            .sum::<f64>()
            / (k - 1.0);
        mean_cv_error[li] = mean;
        sd_cv_error[li] = (var / k).sqrt();
    }

    // Earliest index wins ties, i.e. the largest lambda.
    let min_idx = (0..l)
        .min_by(|&a, &b| mean_cv_error[a].partial_cmp(&mean_cv_error[b]).unwrap())
        .expect("nonempty grid");
    let cutoff = mean_cv_error[min_idx] + sd_cv_error[min_idx];
    let one_se_idx = (0..l)
        .find(|&li| mean_cv_error[li] <= cutoff)
        .unwrap_or(min_idx);

    Ok(CvResult {
        grid: grid.clone(),
        lambda_min: lambdas[min_idx],
        lambda_1se: lambdas[one_se_idx],
        mean_cv_error,
        sd_cv_error,
        folds,
    })
}

/// Checks the stationarity conditions of a fit against the dataset it came
/// from: `|<x_j, r>/n| <= lambda + tol` on the inactive set and
/// `<x_j, r>/n = lambda * sign(b_j) +- tol` on the active set.
/// Returns the largest violation.
pub fn kkt_violation(d: &Dataset, fit: &LassoFit) -> f64 {
    let n = d.n() as f64;
    let residual: Vec<f64> = d
        .y()
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let mut pred = fit.intercept;
            for (j, b) in fit.coefficients.iter().enumerate() {
                if *b != 0.0 {
                    pred += d.x()[(i, j)] * b;
                }
            }
            y - pred
        })
        .collect();
    // Intercept optimality: residual mean must vanish.
    let rbar = residual.iter().sum::<f64>() / n;
    let mut worst = rbar.abs();
    for j in 0..d.p() {
        let mut dot = 0.0;
        for (xv, rv) in d.x().column(j).iter().zip(residual.iter()) {
            dot += xv * rv;
        }
        let g = dot / n;
        let b = fit.coefficients[j];
        let v = if b == 0.0 {
            (g.abs() - fit.lambda).max(0.0)
        } else {
            (g - fit.lambda * b.signum()).abs()
        };
        worst = worst.max(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate, Dataset, SyntheticSpec};
    use ndarray::{arr1, arr2, Array2};
    use rand::Rng;

    fn spec(n: usize, p: usize, seed: u64) -> SyntheticSpec {
        let mut beta = vec![0.0; p];
        beta[0] = 1.5;
        beta[1] = 1.1;
        SyntheticSpec {
            n,
            p,
            rho: 0.3,
            beta,
            noise_sd: 1.0,
            seed,
        }
    }

    #[test]
    fn null_model_at_lambda_max() {
        let d = simulate(&spec(30, 8, 4)).unwrap();
        let top = lambda_max(&d);
        let fit = fit_lasso(&d, top, 1e-9, 10_000).unwrap();
        assert!(fit.converged);
        assert!(fit.support().is_empty());
        let ybar = d.y().iter().sum::<f64>() / d.n() as f64;
        assert!((fit.intercept - ybar).abs() < 1e-12);
        // Just below lambda_max the support must open up.
        let fit = fit_lasso(&d, 0.99 * top, 1e-9, 10_000).unwrap();
        assert!(!fit.support().is_empty());
    }

    #[test]
    fn lambda_max_zero_for_constant_response() {
        let x = arr2(&[[1.0, 2.0], [0.5, 1.0], [2.0, 0.0], [1.5, 3.0]]);
        let y = arr1(&[5.0, 5.0, 5.0, 5.0]);
        let d = Dataset::new(x, y, vec!["a".into(), "b".into()]).unwrap();
        assert_eq!(lambda_max(&d), 0.0);
        assert!(matches!(make_grid(&d, 10, 0.01), Err(Error::Grid(_))));
    }

    #[test]
    fn one_dimensional_closed_form() {
        // Two predictors (the second inert) with (1/n)||x_1||^2 = 1 exactly,
        // so the soft-threshold solution is max(0, 2 - lambda).
        let x = arr2(&[[-1.0, 0.0], [1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]]);
        let y = arr1(&[-2.0, 2.0, -2.0, 2.0]);
        let d = Dataset::new(x, y, vec!["a".into(), "b".into()]).unwrap();
        for lambda in [0.0, 0.5, 1.0, 1.9, 2.0, 2.5] {
            let fit = fit_lasso(&d, lambda, 1e-12, 10_000).unwrap();
            let expected = (2.0 - lambda).max(0.0);
            assert!(
                (fit.coefficients[0] - expected).abs() < 1e-10,
                "lambda={lambda}: {} vs {expected}",
                fit.coefficients[0]
            );
            assert_eq!(fit.coefficients[1], 0.0);
        }
    }

    /// Dense normal-equations solve (Gauss elimination with partial
    /// pivoting) for the unpenalized oracle.
    #[allow(clippy::needless_range_loop)]
    fn ols_oracle(d: &Dataset) -> Vec<f64> {
        let n = d.n();
        let p = d.p();
        let m = p + 1; // intercept column first
        let mut xtx = vec![vec![0.0; m]; m];
        let mut xty = vec![0.0; m];
        let col = |j: usize, i: usize| -> f64 {
            if j == 0 {
                1.0
            } else {
                d.x()[(i, j - 1)]
            }
        };
        for a in 0..m {
            for b in 0..m {
                let mut s = 0.0;
                for i in 0..n {
                    s += col(a, i) * col(b, i);
                }
                xtx[a][b] = s;
            }
            let mut s = 0.0;
            for i in 0..n {
                s += col(a, i) * d.y()[i];
            }
            xty[a] = s;
        }
        for k in 0..m {
            let piv = (k..m)
                .max_by(|&a, &b| xtx[a][k].abs().partial_cmp(&xtx[b][k].abs()).unwrap())
                .unwrap();
            xtx.swap(k, piv);
            xty.swap(k, piv);
            let pivot = xtx[k][k];
            for r in k + 1..m {
                let f = xtx[r][k] / pivot;
                for c in k..m {
                    xtx[r][c] -= f * xtx[k][c];
                }
                xty[r] -= f * xty[k];
            }
        }
        let mut sol = vec![0.0; m];
        for k in (0..m).rev() {
            let mut s = xty[k];
            for c in k + 1..m {
                s -= xtx[k][c] * sol[c];
            }
            sol[k] = s / xtx[k][k];
        }
        sol
    }

    #[test]
    fn unpenalized_fit_matches_least_squares() {
        let d = simulate(&spec(20, 3, 9)).unwrap();
        let fit = fit_lasso(&d, 0.0, 1e-12, 1_000_000).unwrap();
        let oracle = ols_oracle(&d);
        assert!((fit.intercept - oracle[0]).abs() < 1e-6);
        for j in 0..3 {
            assert!(
                (fit.coefficients[j] - oracle[j + 1]).abs() < 1e-6,
                "coef {j}: {} vs {}",
                fit.coefficients[j],
                oracle[j + 1]
            );
        }
    }

    #[test]
    fn kkt_holds_after_convergence() {
        let d = simulate(&spec(30, 15, 21)).unwrap().standardize();
        let top = lambda_max(&d);
        for frac in [0.9, 0.5, 0.2, 0.05] {
            let fit = fit_lasso(&d, frac * top, 1e-9, 100_000).unwrap();
            assert!(fit.converged);
            let v = kkt_violation(&d, &fit);
            assert!(v <= 1e-6, "violation {v} at fraction {frac}");
        }
    }

    #[test]
    fn grid_is_geometric() {
        let d = simulate(&spec(20, 6, 2)).unwrap();
        let g = make_grid(&d, 100, 0.01).unwrap();
        let v = g.values();
        assert_eq!(v.len(), 100);
        assert!((v[0] - lambda_max(&d)).abs() < 1e-15);
        assert!((v[99] - 0.01 * v[0]).abs() < 1e-12 * v[0]);
        let r0 = v[1] / v[0];
        for w in v.windows(2) {
            assert!((w[1] / w[0] - r0).abs() < 1e-12);
        }
        // Two-point grid is just the endpoints.
        let g2 = make_grid(&d, 2, 0.5).unwrap();
        assert!((g2.values()[0] - lambda_max(&d)).abs() < 1e-15);
        assert!((g2.values()[1] - 0.5 * lambda_max(&d)).abs() < 1e-12);
    }

    #[test]
    fn grid_validation() {
        assert!(LambdaGrid::new(vec![1.0], GridSource::User).is_err());
        assert!(LambdaGrid::new(vec![1.0, 1.0], GridSource::User).is_err());
        assert!(LambdaGrid::new(vec![0.5, 1.0], GridSource::User).is_err());
        assert!(LambdaGrid::new(vec![1.0, -0.5], GridSource::User).is_err());
        let g = LambdaGrid::from_user(vec![0.1, 1.0, 0.5]).unwrap();
        assert_eq!(g.values(), &[1.0, 0.5, 0.1]);
    }

    #[test]
    fn warm_path_matches_cold_starts() {
        let mut rng = crate::rng::stream_rng(33, &[99]);
        for trial in 0..5 {
            let n = 20;
            let p = 10;
            let mut x = Array2::zeros((n, p));
            for v in x.iter_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let y = ndarray::Array1::from_iter(
                (0..n).map(|i| x[(i, 0)] * 2.0 - x[(i, 3)] + 0.1 * rng.gen_range(-1.0..1.0f64)),
            );
            let d = Dataset::new(x, y, (0..p).map(|j| format!("c{j}")).collect()).unwrap();
            let g = make_grid(&d, 20, 0.01).unwrap();
            let warm = fit_lasso_path(&d, g.values(), 1e-10, 100_000).unwrap();
            for (fit, &lambda) in warm.iter().zip(g.values()) {
                let cold = fit_lasso(&d, lambda, 1e-10, 100_000).unwrap();
                for (a, b) in fit.coefficients.iter().zip(cold.coefficients.iter()) {
                    assert!((a - b).abs() < 1e-6, "trial {trial} lambda {lambda}");
                }
            }
        }
    }

    #[test]
    fn loo_cv_matches_explicit_loop() {
        let d = simulate(&spec(10, 2, 5)).unwrap();
        let g = make_grid(&d, 12, 0.05).unwrap();
        let cv = cross_validate(&d, &g, d.n(), 77).unwrap();

        // Brute-force leave-one-out, independent of the fold machinery.
        let n = d.n();
        for (li, &lambda) in g.values().iter().enumerate() {
            let mut errors = Vec::with_capacity(n);
            for hold in 0..n {
                let keep: Vec<usize> = (0..n).filter(|i| *i != hold).collect();
                let mut x = Array2::zeros((n - 1, d.p()));
                let mut y = ndarray::Array1::zeros(n - 1);
                for (r, &i) in keep.iter().enumerate() {
                    for j in 0..d.p() {
                        x[(r, j)] = d.x()[(i, j)];
                    }
                    y[r] = d.y()[i];
                }
                let sub = Dataset::new(x, y, d.names().to_vec()).unwrap();
                let fit = fit_lasso(&sub, lambda, 1e-10, 100_000).unwrap();
                let row: Vec<f64> = (0..d.p()).map(|j| d.x()[(hold, j)]).collect();
                let e = d.y()[hold] - fit.predict_row(&row);
                errors.push(e * e);
            }
            let mean = errors.iter().sum::<f64>() / n as f64;
            assert!(
                (mean - cv.mean_cv_error[li]).abs() < 1e-8,
                "lambda index {li}"
            );
        }
        assert!(cv.lambda_1se >= cv.lambda_min);
    }

    #[test]
    fn cv_is_deterministic_and_validates_folds() {
        let d = simulate(&spec(24, 6, 8)).unwrap();
        let g = make_grid(&d, 10, 0.05).unwrap();
        let a = cross_validate(&d, &g, 4, 3).unwrap();
        let b = cross_validate(&d, &g, 4, 3).unwrap();
        assert_eq!(a.mean_cv_error, b.mean_cv_error);
        assert_eq!(a.lambda_min, b.lambda_min);
        assert!(cross_validate(&d, &g, 1, 3).is_err());
        assert!(cross_validate(&d, &g, 25, 3).is_err());
        let c = cross_validate(&d, &g, 4, 4).unwrap();
        assert_ne!(a.mean_cv_error, c.mean_cv_error);
    }
}
