//! The resampling engine: half-size subsamples, per-(subsample, lambda)
//! Lasso fits, binary selection matrices, selection frequencies, and the
//! held-out accuracy curve.

use std::fmt::Write as _;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lasso::{path_on, ColMajor, LambdaGrid};
use crate::rng::{stream_rng, TAG_SUBSAMPLE, TAG_SUBSAMPLE_PER_LAMBDA};

/// Binary record of which variables the Lasso selected on each of B
/// subsamples at one regularization value. Rows are stored as sorted
/// support lists; `entry(b, j)` exposes the dense 0/1 view.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionMatrix {
    lambda: f64,
    p: usize,
    rows: Vec<Vec<u32>>,
    subsample_indices: Vec<Vec<u32>>,
    seed: u64,
}

impl SelectionMatrix {
    /// Assembles a matrix from per-subsample supports. Support indices must
    /// be sorted, unique, and within `0..p`.
    pub fn from_supports(
        lambda: f64,
        p: usize,
        rows: Vec<Vec<u32>>,
        subsample_indices: Vec<Vec<u32>>,
        seed: u64,
    ) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Parameter(
                "selection matrix needs at least one row".into(),
            ));
        }
        for row in &rows {
            if row.windows(2).any(|w| w[0] >= w[1]) || row.iter().any(|&j| j as usize >= p) {
                return Err(Error::Parameter(
                    "support rows must be sorted, unique, and within 0..p".into(),
                ));
            }
        }
        if !subsample_indices.is_empty() && subsample_indices.len() != rows.len() {
            return Err(Error::Parameter(
                "one subsample index list per row (or none)".into(),
            ));
        }
        Ok(Self {
            lambda,
            p,
            rows,
            subsample_indices,
            seed,
        })
    }

    /// Test-friendly constructor from dense 0/1 rows. The audit trail of
    /// subsample indices is left empty.
    pub fn from_binary_rows(lambda: f64, entries: &[Vec<u8>]) -> Result<Self> {
        let p = entries.first().map(|r| r.len()).unwrap_or(0);
        if entries.iter().any(|r| r.len() != p) {
            return Err(Error::Parameter("ragged binary rows".into()));
        }
        let rows = entries
            .iter()
            .map(|r| {
                r.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0)
                    .map(|(j, _)| j as u32)
                    .collect()
            })
            .collect();
        Self::from_supports(lambda, p, rows, Vec::new(), 0)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Number of subsamples B.
    pub fn b(&self) -> usize {
        self.rows.len()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    #[inline]
    pub fn entry(&self, b: usize, j: usize) -> u8 {
        u8::from(self.rows[b].binary_search(&(j as u32)).is_ok())
    }

    /// Sorted indices of the variables selected on subsample `b`.
    pub fn row_support(&self, b: usize) -> &[u32] {
        &self.rows[b]
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    /// Row indices of each subsample, for audit. Empty for matrices built
    /// from raw binary rows.
    pub fn subsample_indices(&self) -> &[Vec<u32>] {
        &self.subsample_indices
    }

    /// Dense CSV dump (rows = subsamples, columns = variable names,
    /// cells 0/1).
    pub fn to_csv(&self, names: &[String]) -> String {
        let mut out = String::new();
        out.push_str(&names.join(","));
        out.push('\n');
        for row in &self.rows {
            let mut mask = vec![b'0'; self.p];
            for &j in row {
                mask[j as usize] = b'1';
            }
            for (j, c) in mask.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                out.push(*c as char);
            }
            out.push('\n');
        }
        out
    }
}

/// Per-variable selection frequencies at one regularization value.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionFrequencies {
    pub lambda: f64,
    pub freq: Vec<f64>,
}

/// Column means of the selection matrix.
pub fn selection_frequencies(m: &SelectionMatrix) -> SelectionFrequencies {
    let b = m.b() as f64;
    let mut counts = vec![0u32; m.p()];
    for row in m.rows() {
        for &j in row {
            counts[j as usize] += 1;
        }
    }
    SelectionFrequencies {
        lambda: m.lambda(),
        freq: counts.iter().map(|&c| c as f64 / b).collect(),
    }
}

/// Mean number of variables selected per subsample, q(lambda).
pub fn average_selected(m: &SelectionMatrix) -> f64 {
    let total: u64 = m.rows().iter().map(|r| r.len() as u64).sum();
    total as f64 / m.b() as f64
}

/// Sparse coefficient record of one inner fit, kept when the held-out
/// accuracy curve is requested.
#[derive(Debug, Clone)]
pub struct FitRecord {
    pub intercept: f64,
    pub coeffs: Vec<(u32, f64)>,
}

/// Mean held-out squared error per grid value, averaged over subsample fits.
#[derive(Debug, Clone)]
pub struct AccuracyCurve {
    pub mse: Vec<f64>,
    pub n_test: usize,
}

/// One inner fit that ran out of iterations.
#[derive(Debug, Clone, Serialize)]
pub struct NonConvergedFit {
    pub subsample: usize,
    pub lambda_index: usize,
    pub lambda: f64,
    pub sweeps: usize,
}

/// Bookkeeping for a stability-selection run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RunDiagnostics {
    pub non_converged: Vec<NonConvergedFit>,
    pub total_fits: usize,
}

/// Output of [`run_stability_selection`]: one selection matrix per grid
/// value, optional per-(subsample, lambda) coefficients, and diagnostics.
#[derive(Debug)]
pub struct StabilityRun {
    pub matrices: Vec<SelectionMatrix>,
    /// `fits[b][l]`, present when requested via [`RunOptions::keep_fits`].
    pub fits: Option<Vec<Vec<FitRecord>>>,
    pub diagnostics: RunDiagnostics,
}

/// Knobs for [`run_stability_selection_with`].
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Retain per-(subsample, lambda) coefficients for accuracy evaluation.
    pub keep_fits: bool,
    /// Reuse the same B subsamples for every grid value (the default).
    /// When false, each lambda draws its own B subsamples.
    pub shared_subsamples: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            keep_fits: false,
            shared_subsamples: true,
            tol: crate::lasso::DEFAULT_TOL,
            max_iter: crate::lasso::DEFAULT_MAX_ITER,
        }
    }
}

fn draw_subsample(d: &Dataset, seed: u64, tags: &[u64]) -> Vec<u32> {
    let n = d.n();
    let mut rng = stream_rng(seed, tags);
    let mut rows: Vec<u32> = sample(&mut rng, n, n / 2)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    rows.sort_unstable();
    rows
}

/// Runs stability selection with default options.
pub fn run_stability_selection(
    d: &Dataset,
    grid: &LambdaGrid,
    b_subsamples: usize,
    seed: u64,
) -> Result<StabilityRun> {
    run_stability_selection_with(d, grid, b_subsamples, seed, &RunOptions::default())
}

/// Draws B half-size subsamples without replacement, fits the Lasso path on
/// each, and records the per-lambda supports as selection matrices. The
/// subsample for index b is a pure function of (seed, b) — and of
/// (seed, lambda index, b) in per-lambda mode — so output is bit-identical
/// for any thread count. Non-converged inner fits are logged in the
/// diagnostics and their coefficients still contribute a row.
pub fn run_stability_selection_with(
    d: &Dataset,
    grid: &LambdaGrid,
    b_subsamples: usize,
    seed: u64,
    options: &RunOptions,
) -> Result<StabilityRun> {
    if b_subsamples < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 subsamples, got {b_subsamples}"
        )));
    }
    if d.n() < 4 {
        return Err(Error::Parameter(format!(
            "stability selection needs at least 4 rows, got {}",
            d.n()
        )));
    }
    let lambdas = grid.values();
    let l = lambdas.len();

    struct TaskOut {
        supports: Vec<Vec<u32>>,
        fits: Option<Vec<FitRecord>>,
        non_converged: Vec<(usize, usize)>, // (lambda index, sweeps)
    }

    let fit_path = |rows: &[u32], per_lambda: Option<usize>| -> TaskOut {
        let x = ColMajor::from_rows(d.x(), rows);
        let y: Vec<f64> = rows.iter().map(|&r| d.y()[r as usize]).collect();
        let path = match per_lambda {
            // Shared mode solves the whole warm-started path at once.
            None => path_on(&x, &y, lambdas, options.tol, options.max_iter),
            // Per-lambda mode owns a single grid value.
            Some(li) => path_on(&x, &y, &lambdas[li..=li], options.tol, options.max_iter),
        };
        let mut supports = Vec::with_capacity(path.len());
        let mut fits = options.keep_fits.then(|| Vec::with_capacity(path.len()));
        let mut non_converged = Vec::new();
        for (k, fit) in path.iter().enumerate() {
            let li = per_lambda.unwrap_or(k);
            if !fit.converged {
                non_converged.push((li, fit.iterations));
            }
            supports.push(fit.support().into_iter().map(|j| j as u32).collect());
            if let Some(f) = fits.as_mut() {
                f.push(FitRecord {
                    intercept: fit.intercept,
                    coeffs: fit
                        .coefficients
                        .iter()
                        .enumerate()
                        .filter(|(_, b)| **b != 0.0)
                        .map(|(j, b)| (j as u32, *b))
                        .collect(),
                });
            }
        }
        TaskOut {
            supports,
            fits,
            non_converged,
        }
    };

    let (matrices, fits, mut raw_diag): (Vec<SelectionMatrix>, _, Vec<NonConvergedFit>) = if options
        .shared_subsamples
    {
        let subsamples: Vec<Vec<u32>> = (0..b_subsamples)
            .map(|b| draw_subsample(d, seed, &[TAG_SUBSAMPLE, b as u64]))
            .collect();
        let outs: Vec<TaskOut> = subsamples
            .par_iter()
            .map(|rows| fit_path(rows, None))
            .collect();

        let mut per_lambda_rows: Vec<Vec<Vec<u32>>> =
            (0..l).map(|_| Vec::with_capacity(b_subsamples)).collect();
        let mut fits: Option<Vec<Vec<FitRecord>>> = options.keep_fits.then(Vec::new);
        let mut diag = Vec::new();
        for (b, out) in outs.into_iter().enumerate() {
            for (li, support) in out.supports.into_iter().enumerate() {
                per_lambda_rows[li].push(support);
            }
            for (li, sweeps) in out.non_converged {
                diag.push(NonConvergedFit {
                    subsample: b,
                    lambda_index: li,
                    lambda: lambdas[li],
                    sweeps,
                });
            }
            if let Some(f) = fits.as_mut() {
                f.push(out.fits.expect("fits requested"));
            }
        }
        let matrices = per_lambda_rows
            .into_iter()
            .enumerate()
            .map(|(li, rows)| {
                SelectionMatrix::from_supports(lambdas[li], d.p(), rows, subsamples.clone(), seed)
            })
            .collect::<Result<Vec<_>>>()?;
        (matrices, fits, diag)
    } else {
        // Independent subsample streams per lambda; no warm starts.
        let tasks: Vec<(usize, usize)> = (0..l)
            .flat_map(|li| (0..b_subsamples).map(move |b| (li, b)))
            .collect();
        let outs: Vec<(Vec<u32>, TaskOut)> = tasks
            .par_iter()
            .map(|&(li, b)| {
                let rows =
                    draw_subsample(d, seed, &[TAG_SUBSAMPLE_PER_LAMBDA, li as u64, b as u64]);
                let out = fit_path(&rows, Some(li));
                (rows, out)
            })
            .collect();

        let mut per_lambda_rows: Vec<Vec<Vec<u32>>> =
            (0..l).map(|_| vec![Vec::new(); b_subsamples]).collect();
        let mut per_lambda_subs: Vec<Vec<Vec<u32>>> =
            (0..l).map(|_| vec![Vec::new(); b_subsamples]).collect();
        let mut fits: Option<Vec<Vec<FitRecord>>> =
            options.keep_fits.then(|| vec![Vec::new(); b_subsamples]);
        let mut diag = Vec::new();
        // Tasks are lambda-major, so per-b fit lists fill in grid order.
        for (&(li, b), (rows, mut out)) in tasks.iter().zip(outs) {
            per_lambda_rows[li][b] = out.supports.pop().expect("one support per task");
            per_lambda_subs[li][b] = rows;
            for (lidx, sweeps) in out.non_converged {
                diag.push(NonConvergedFit {
                    subsample: b,
                    lambda_index: lidx,
                    lambda: lambdas[lidx],
                    sweeps,
                });
            }
            if let Some(f) = fits.as_mut() {
                debug_assert_eq!(f[b].len(), li);
                f[b].push(out.fits.expect("fits requested").pop().expect("one fit"));
            }
        }
        let matrices = per_lambda_rows
            .into_iter()
            .zip(per_lambda_subs)
            .enumerate()
            .map(|(li, (rows, subs))| {
                SelectionMatrix::from_supports(lambdas[li], d.p(), rows, subs, seed)
            })
            .collect::<Result<Vec<_>>>()?;
        (matrices, fits, diag)
    };

    raw_diag.sort_by_key(|e| (e.subsample, e.lambda_index));
    Ok(StabilityRun {
        matrices,
        fits,
        diagnostics: RunDiagnostics {
            non_converged: raw_diag,
            total_fits: b_subsamples * l,
        },
    })
}

/// Mean squared prediction error of the retained fits on a held-out set,
/// averaged over subsamples for each grid value. The test matrix is mapped
/// onto the training dataset's standardization scale before prediction, so
/// pass it on the raw scale.
pub fn evaluate_mse(
    d: &Dataset,
    grid: &LambdaGrid,
    fits: &[Vec<FitRecord>],
    test: &Dataset,
) -> Result<AccuracyCurve> {
    if test.p() != d.p() {
        return Err(Error::Parameter(format!(
            "test set has {} predictors, training data has {}",
            test.p(),
            d.p()
        )));
    }
    if test.is_standardized() && d.scaling().is_some() {
        return Err(Error::Parameter(
            "pass the test set on the raw scale; the training transform is applied here".into(),
        ));
    }
    let l = grid.len();
    if fits.is_empty() || fits.iter().any(|f| f.len() != l) {
        return Err(Error::Parameter(
            "need per-subsample fit records covering the whole grid".into(),
        ));
    }
    let x_test = d.apply_scaling_to(test.x());
    let n_test = test.n();
    let mut mse = vec![0.0; l];
    for per_b in fits {
        for (li, rec) in per_b.iter().enumerate() {
            let mut acc = 0.0;
            for i in 0..n_test {
                let mut pred = rec.intercept;
                for &(j, v) in &rec.coeffs {
                    pred += x_test[(i, j as usize)] * v;
                }
                let e = test.y()[i] - pred;
                acc += e * e;
            }
            mse[li] += acc / n_test as f64;
        }
    }
    let b = fits.len() as f64;
    for v in mse.iter_mut() {
        *v /= b;
    }
    Ok(AccuracyCurve { mse, n_test })
}

/// Long-format CSV of per-lambda selection frequencies
/// (`lambda,variable,frequency`).
pub fn frequencies_to_csv(freqs: &[SelectionFrequencies], names: &[String]) -> String {
    let mut out = String::from("lambda,variable,frequency\n");
    for f in freqs {
        for (j, v) in f.freq.iter().enumerate() {
            let _ = writeln!(out, "{},{},{}", f.lambda, names[j], v);
        }
    }
    out
}
