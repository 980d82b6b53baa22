//! Overall selection-stability estimation.
//!
//! For a B x p binary selection matrix M with column sums c_j, the stability
//! statistic is
//!
//! ```text
//!   phi(M) = 1 - mean_j(s_j^2) / ((q/p) * (1 - q/p))
//! ```
//!
//! where `s_j^2` is the unbiased sample variance of column j and `q` is the
//! mean row sum. Because entries are binary the statistic reduces to integer
//! counts: with `S1 = sum_j c_j` and `S2 = sum_j c_j^2`,
//!
//! ```text
//!           (B-1) * S1 * (Bp - S1) - (B*S1 - S2) * B * p
//!   phi  =  ---------------------------------------------
//!                     (B-1) * S1 * (Bp - S1)
//! ```
//!
//! which this module evaluates exactly in integer arithmetic before a single
//! rounding division. phi is undefined when q = 0 or q = p (every column
//! constant in the same direction), and bounded by [-1/(B-1), 1] otherwise.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::resampling::SelectionMatrix;
use crate::rng::{stream_rng, TAG_BOOTSTRAP};

/// Default decision threshold on phi for an "excellent" regularization value.
pub const DEFAULT_STABILITY_THRESHOLD: f64 = 0.75;
/// Band edges: phi below 0.4 is poor, 0.75 and above is excellent.
pub const POOR_BAND_EDGE: f64 = 0.4;

/// Qualitative agreement band for a stability value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StabilityBand {
    Poor,
    Intermediate,
    Excellent,
    Undefined,
}

impl StabilityBand {
    fn from_phi(phi: Option<f64>) -> Self {
        match phi {
            None => StabilityBand::Undefined,
            Some(v) if v >= DEFAULT_STABILITY_THRESHOLD => StabilityBand::Excellent,
            Some(v) if v < POOR_BAND_EDGE => StabilityBand::Poor,
            Some(_) => StabilityBand::Intermediate,
        }
    }
}

/// Stability of one selection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub lambda: f64,
    /// None when q = 0 or q = p leaves the estimator undefined.
    pub phi: Option<f64>,
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    pub band: StabilityBand,
    pub b: usize,
}

/// Stability of the first t rows, for t = 2..=B, with optional bootstrap
/// confidence intervals.
#[derive(Debug, Clone)]
pub struct ConvergenceTrace {
    pub lambda: f64,
    pub t_values: Vec<usize>,
    pub phi_t: Vec<Option<f64>>,
    pub ci_low_t: Vec<Option<f64>>,
    pub ci_high_t: Vec<Option<f64>>,
}

/// Which rule produced a regularization choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChoiceKind {
    Stable,
    #[serde(rename = "stable-1sd")]
    Stable1Sd,
    None,
}

/// A stability-based regularization choice (or the absence of one).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LambdaChoice {
    pub kind: ChoiceKind,
    pub lambda: Option<f64>,
    pub phi_at_lambda: Option<f64>,
}

impl LambdaChoice {
    pub fn none() -> Self {
        Self {
            kind: ChoiceKind::None,
            lambda: None,
            phi_at_lambda: None,
        }
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Exact closed form of the stability statistic from integer counts:
/// `t` rows, `p` columns, `s1 = sum of column sums`, `s2 = sum of squared
/// column sums`. The fraction is reduced before one rounding division, so
/// the result is the correctly rounded value of the exact rational.
pub(crate) fn phi_from_counts(t: usize, p: usize, s1: u64, s2: u64) -> Option<f64> {
    if t < 2 || p == 0 {
        return None;
    }
    let tp = t as u128 * p as u128;
    if s1 == 0 || s1 as u128 == tp {
        return None;
    }
    let ti = t as i128;
    let pi = p as i128;
    let s1i = s1 as i128;
    let s2i = s2 as i128;
    let den = (ti - 1) * s1i * (ti * pi - s1i);
    let num = den - (ti * s1i - s2i) * ti * pi;
    debug_assert!(den > 0);
    let g = gcd(num.unsigned_abs(), den as u128).max(1);
    let num = (num / g as i128) as f64;
    let den = ((den as u128) / g) as f64;
    Some(num / den)
}

fn counts_of(m: &SelectionMatrix) -> (Vec<u32>, u64, u64) {
    let mut counts = vec![0u32; m.p()];
    let mut s1 = 0u64;
    for row in m.rows() {
        s1 += row.len() as u64;
        for &j in row {
            counts[j as usize] += 1;
        }
    }
    let s2 = counts.iter().map(|&c| c as u64 * c as u64).sum();
    (counts, s1, s2)
}

/// Stability of a selection matrix, without a confidence interval.
pub fn estimate_stability(m: &SelectionMatrix) -> Result<StabilityReport> {
    if m.b() < 2 {
        return Err(Error::Parameter(format!(
            "stability needs at least 2 subsamples, got {}",
            m.b()
        )));
    }
    let (_, s1, s2) = counts_of(m);
    let phi = phi_from_counts(m.b(), m.p(), s1, s2);
    Ok(StabilityReport {
        lambda: m.lambda(),
        phi,
        ci_low: None,
        ci_high: None,
        band: StabilityBand::from_phi(phi),
        b: m.b(),
    })
}

/// Stability plus a row-bootstrap percentile confidence interval
/// (`n_boot` resamples of the B rows with replacement).
pub fn estimate_stability_with_ci(
    m: &SelectionMatrix,
    level: f64,
    n_boot: usize,
    seed: u64,
) -> Result<StabilityReport> {
    let mut report = estimate_stability(m)?;
    check_level(level)?;
    if n_boot > 0 {
        let mut scratch = BootScratch::new(m.p());
        let ci = bootstrap_ci(m.rows(), m.b(), m.p(), level, n_boot, seed, 0, &mut scratch);
        report.ci_low = ci.map(|c| c.0);
        report.ci_high = ci.map(|c| c.1);
    }
    Ok(report)
}

fn check_level(level: f64) -> Result<()> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!(
            "confidence level must lie in (0, 1), got {level}"
        )));
    }
    Ok(())
}

/// Per-grid-value stability reports, in the order the matrices are given
/// (undefined values are flagged, never dropped).
pub fn stability_curve(matrices: &[SelectionMatrix]) -> Result<Vec<StabilityReport>> {
    matrices.iter().map(estimate_stability).collect()
}

/// Smallest regularization value whose stability reaches `threshold`
/// (weak inequality). Returns a `kind = none` choice when no grid value
/// qualifies. Scans by lambda value, so input order is irrelevant.
pub fn find_lambda_stable(curve: &[StabilityReport], threshold: f64) -> LambdaChoice {
    let best = curve
        .iter()
        .filter(|r| r.phi.is_some_and(|phi| phi >= threshold))
        .min_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    match best {
        Some(r) => LambdaChoice {
            kind: ChoiceKind::Stable,
            lambda: Some(r.lambda),
            phi_at_lambda: r.phi,
        },
        None => LambdaChoice::none(),
    }
}

/// Fallback rule when no value reaches the excellent band: the smallest
/// regularization value whose stability lies within one standard deviation
/// (across the grid's defined values) of the maximum.
pub fn find_lambda_stable_1sd(curve: &[StabilityReport]) -> Result<LambdaChoice> {
    let defined: Vec<&StabilityReport> = curve.iter().filter(|r| r.phi.is_some()).collect();
    if defined.len() < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 defined stability values, got {}",
            defined.len()
        )));
    }
    let phis: Vec<f64> = defined.iter().map(|r| r.phi.unwrap()).collect();
    let max = phis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = phis.iter().sum::<f64>() / phis.len() as f64;
    let sd = (phis.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (phis.len() - 1) as f64)
        .sqrt();
    let cutoff = max - sd;
    let best = defined
        .iter()
        .filter(|r| r.phi.unwrap() >= cutoff)
        .min_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap())
        .expect("the maximum always qualifies");
    Ok(LambdaChoice {
        kind: ChoiceKind::Stable1Sd,
        lambda: Some(best.lambda),
        phi_at_lambda: best.phi,
    })
}

/// Reusable buffers for bootstrap replicates.
struct BootScratch {
    counts: Vec<u32>,
    touched: Vec<u32>,
}

impl BootScratch {
    fn new(p: usize) -> Self {
        Self {
            counts: vec![0; p],
            touched: Vec::new(),
        }
    }
}

/// Percentile bootstrap CI for phi over the first `t` rows. Returns None
/// when every replicate is undefined. `extra_tag` separates concurrent
/// bootstrap families drawn from the same seed.
#[allow(clippy::too_many_arguments)]
fn bootstrap_ci(
    rows: &[Vec<u32>],
    t: usize,
    p: usize,
    level: f64,
    n_boot: usize,
    seed: u64,
    extra_tag: u64,
    scratch: &mut BootScratch,
) -> Option<(f64, f64)> {
    use rand::Rng;
    let mut values = Vec::with_capacity(n_boot);
    for rep in 0..n_boot {
        let mut rng = stream_rng(seed, &[TAG_BOOTSTRAP, extra_tag, t as u64, rep as u64]);
        let mut s1 = 0u64;
        let mut s2 = 0u64;
        for _ in 0..t {
            let row = &rows[rng.gen_range(0..t)];
            let k = row.len() as u64;
            s1 += k;
            // Adding a row with support R changes S2 by 2*sum_{j in R} c_j + |R|.
            let mut inc = k;
            for &j in row {
                let c = &mut scratch.counts[j as usize];
                if *c == 0 {
                    scratch.touched.push(j);
                }
                inc += 2 * *c as u64;
                *c += 1;
            }
            s2 += inc;
        }
        if let Some(phi) = phi_from_counts(t, p, s1, s2) {
            values.push(phi);
        }
        for &j in &scratch.touched {
            scratch.counts[j as usize] = 0;
        }
        scratch.touched.clear();
    }
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = (1.0 - level) / 2.0;
    Some((quantile(&values, alpha), quantile(&values, 1.0 - alpha)))
}

/// Linear-interpolation quantile of a sorted slice.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = q * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Stability of the leading-row submatrices, for t = 2..=B. `phi_t` is
/// maintained incrementally from running column counts (O(row support) per
/// step). Each t gets a nonparametric row-bootstrap percentile interval at
/// `ci_level` from `n_boot` resamples; pass `n_boot = 0` to skip intervals.
pub fn convergence_trace(
    m: &SelectionMatrix,
    ci_level: f64,
    n_boot: usize,
    seed: u64,
) -> Result<ConvergenceTrace> {
    if m.b() < 2 {
        return Err(Error::Parameter(format!(
            "a trace needs at least 2 subsamples, got {}",
            m.b()
        )));
    }
    check_level(ci_level)?;
    let b = m.b();
    let p = m.p();

    let mut counts = vec![0u32; p];
    let mut s1 = 0u64;
    let mut s2 = 0u64;
    let mut phi_t = Vec::with_capacity(b - 1);
    let mut t_values = Vec::with_capacity(b - 1);
    for (i, row) in m.rows().iter().enumerate() {
        let mut inc = row.len() as u64;
        s1 += row.len() as u64;
        for &j in row {
            let c = &mut counts[j as usize];
            inc += 2 * *c as u64;
            *c += 1;
        }
        s2 += inc;
        let t = i + 1;
        if t >= 2 {
            t_values.push(t);
            phi_t.push(phi_from_counts(t, p, s1, s2));
        }
    }

    let (ci_low_t, ci_high_t) = if n_boot == 0 {
        (vec![None; t_values.len()], vec![None; t_values.len()])
    } else {
        let cis: Vec<Option<(f64, f64)>> = t_values
            .par_iter()
            .map_init(
                || BootScratch::new(p),
                |scratch, &t| bootstrap_ci(m.rows(), t, p, ci_level, n_boot, seed, 1, scratch),
            )
            .collect();
        (
            cis.iter().map(|c| c.map(|v| v.0)).collect(),
            cis.iter().map(|c| c.map(|v| v.1)).collect(),
        )
    };

    Ok(ConvergenceTrace {
        lambda: m.lambda(),
        t_values,
        phi_t,
        ci_low_t,
        ci_high_t,
    })
}

/// Smallest t after which the trace stays put: every one of the next
/// `window` values (clipped at B) differs from phi_t by at most `eps`.
/// Returns B when no earlier t qualifies.
pub fn suggest_cutoff(trace: &ConvergenceTrace, window: usize, eps: f64) -> Result<usize> {
    if window < 2 {
        return Err(Error::Parameter(format!(
            "window must be >= 2, got {window}"
        )));
    }
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Parameter("eps must be positive".into()));
    }
    let b = *trace.t_values.last().expect("trace is never empty");
    for (idx, &t) in trace.t_values.iter().enumerate() {
        let Some(phi_t) = trace.phi_t[idx] else {
            continue;
        };
        let end = (idx + window).min(trace.phi_t.len() - 1);
        let settled = (idx + 1..=end).all(|k| match trace.phi_t[k] {
            Some(phi_s) => (phi_s - phi_t).abs() <= eps,
            None => false,
        });
        if settled {
            return Ok(t);
        }
    }
    Ok(b)
}

/// CSV dump of a stability curve: `lambda,phi,ci_low,ci_high,band`.
/// Undefined cells are left empty.
pub fn curve_to_csv(curve: &[StabilityReport]) -> String {
    let mut out = String::from("lambda,phi,ci_low,ci_high,band\n");
    for r in curve {
        let band = match r.band {
            StabilityBand::Poor => "poor",
            StabilityBand::Intermediate => "intermediate",
            StabilityBand::Excellent => "excellent",
            StabilityBand::Undefined => "undefined",
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.lambda,
            opt(r.phi),
            opt(r.ci_low),
            opt(r.ci_high),
            band
        );
    }
    out
}

/// CSV dump of a convergence trace: `t,phi,ci_low,ci_high`.
pub fn trace_to_csv(trace: &ConvergenceTrace) -> String {
    let mut out = String::from("t,phi,ci_low,ci_high\n");
    for (i, &t) in trace.t_values.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            t,
            opt(trace.phi_t[i]),
            opt(trace.ci_low_t[i]),
            opt(trace.ci_high_t[i])
        );
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}
