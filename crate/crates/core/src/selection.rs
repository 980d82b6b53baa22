//! Variable-selection decisions and their calibration: frequency-threshold
//! stable sets (best-case over the grid, or pinned at the stability-chosen
//! regularization value), the two-way per-family error-rate bound, and the
//! stability/accuracy Pareto front.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::resampling::{AccuracyCurve, SelectionFrequencies};
use crate::stability::{LambdaChoice, StabilityReport};

/// Default decision threshold on selection frequencies.
pub const DEFAULT_PI_THR: f64 = 0.6;
/// Slack for the monotonicity scans, to absorb floating-point noise.
const MONOTONE_TOL: f64 = 1e-9;

/// Which rule produced a stable set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionRule {
    /// Best case per variable: max frequency over the whole grid.
    MbBestCase,
    /// Frequencies at the stability-chosen regularization value.
    Stable,
    #[serde(rename = "stable-1sd")]
    Stable1Sd,
}

/// One selected variable with the frequency that admitted it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableMember {
    pub index: usize,
    pub frequency: f64,
}

/// A set of selected variables under a frequency threshold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StableSet {
    pub rule: SelectionRule,
    pub pi_thr: f64,
    /// The regularization value the frequencies were read at; absent for the
    /// best-case rule, which spans the grid.
    pub lambda: Option<f64>,
    /// Sorted by frequency (descending), ties by index.
    pub members: Vec<StableMember>,
}

impl StableSet {
    pub fn indices(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.index).collect()
    }
}

fn check_pi_thr(pi_thr: f64) -> Result<()> {
    if pi_thr.is_nan() || pi_thr <= 0.5 || pi_thr > 1.0 {
        return Err(Error::Parameter(format!(
            "pi_thr must lie in (0.5, 1], got {pi_thr}"
        )));
    }
    if !(0.6..=0.9).contains(&pi_thr) {
        log::warn!("pi_thr = {pi_thr} is outside the customary [0.6, 0.9] range");
    }
    Ok(())
}

fn collect_members(pairs: impl Iterator<Item = (usize, f64)>, pi_thr: f64) -> Vec<StableMember> {
    let mut members: Vec<StableMember> = pairs
        .filter(|(_, f)| *f >= pi_thr)
        .map(|(index, frequency)| StableMember { index, frequency })
        .collect();
    members.sort_by(|a, b| {
        b.frequency
            .partial_cmp(&a.frequency)
            .unwrap()
            .then(a.index.cmp(&b.index))
    });
    members
}

/// Best-case stable set: variables whose maximal selection frequency over
/// the grid reaches `pi_thr`. The deciding frequency is that maximum.
pub fn mb_stable_set(freq_per_lambda: &[SelectionFrequencies], pi_thr: f64) -> Result<StableSet> {
    check_pi_thr(pi_thr)?;
    let Some(first) = freq_per_lambda.first() else {
        return Err(Error::Parameter("no frequency vectors given".into()));
    };
    let p = first.freq.len();
    if freq_per_lambda.iter().any(|f| f.freq.len() != p) {
        return Err(Error::Parameter(
            "frequency vectors disagree on the number of variables".into(),
        ));
    }
    let best = (0..p).map(|j| {
        let m = freq_per_lambda
            .iter()
            .map(|f| f.freq[j])
            .fold(f64::NEG_INFINITY, f64::max);
        (j, m)
    });
    Ok(StableSet {
        rule: SelectionRule::MbBestCase,
        pi_thr,
        lambda: None,
        members: collect_members(best, pi_thr),
    })
}

/// Stable-stability set: variables whose frequency at the chosen
/// regularization value reaches `pi_thr`.
pub fn stable_stability_set(
    freq: &SelectionFrequencies,
    pi_thr: f64,
    rule: SelectionRule,
) -> Result<StableSet> {
    check_pi_thr(pi_thr)?;
    Ok(StableSet {
        rule,
        pi_thr,
        lambda: Some(freq.lambda),
        members: collect_members(freq.freq.iter().copied().enumerate(), pi_thr),
    })
}

/// Which side of the threshold/error-rate pair was fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CalibrationMode {
    FixThreshold,
    FixPfer,
}

/// What to fix when calibrating.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CalibrationTarget {
    /// Fix the decision threshold, solve for the error bound.
    Threshold(f64),
    /// Fix the error bound, solve for the threshold.
    Pfer(f64),
}

/// A calibrated (pi_thr, PFER-bound) pair:
/// `pfer_bound = q^2 / (p * (2 pi_thr - 1))`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationResult {
    pub mode: CalibrationMode,
    pub pi_thr: f64,
    pub pfer_bound: f64,
    pub q_used: f64,
    pub p: usize,
    /// Point-wise regularization value the q came from, when applicable.
    pub lambda: Option<f64>,
}

/// Two-way calibration of the expected number of falsely selected variables.
/// Fixing the threshold yields the bound; fixing the bound yields the
/// threshold, with an infeasibility error (naming the minimal achievable
/// bound q^2/p) when it would exceed 1. The two directions round-trip.
pub fn calibrate_pfer(q: f64, p: usize, fix: CalibrationTarget) -> Result<CalibrationResult> {
    if !q.is_finite() || q < 0.0 {
        return Err(Error::Parameter(format!(
            "q must be a nonnegative real, got {q}"
        )));
    }
    if p == 0 {
        return Err(Error::Parameter("p must be positive".into()));
    }
    let pf = p as f64;
    match fix {
        CalibrationTarget::Threshold(pi_thr) => {
            check_pi_thr(pi_thr)?;
            Ok(CalibrationResult {
                mode: CalibrationMode::FixThreshold,
                pi_thr,
                pfer_bound: q * q / (pf * (2.0 * pi_thr - 1.0)),
                q_used: q,
                p,
                lambda: None,
            })
        }
        CalibrationTarget::Pfer(target) => {
            if !target.is_finite() || target <= 0.0 {
                return Err(Error::Parameter(format!(
                    "PFER target must be positive, got {target}"
                )));
            }
            if q == 0.0 {
                return Err(Error::Parameter(
                    "q is 0, so the PFER bound is 0 for every threshold; nothing to solve".into(),
                ));
            }
            let pi_thr = 0.5 * (1.0 + q * q / (pf * target));
            if pi_thr > 1.0 {
                return Err(Error::InfeasiblePfer {
                    requested: target,
                    min_achievable: q * q / pf,
                });
            }
            Ok(CalibrationResult {
                mode: CalibrationMode::FixPfer,
                pi_thr,
                // Recomputed from the solved threshold so the stored pair
                // always satisfies the bound identity exactly.
                pfer_bound: q * q / (pf * (2.0 * pi_thr - 1.0)),
                q_used: q,
                p,
                lambda: None,
            })
        }
    }
}

/// One grid value in stability/accuracy space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParetoPoint {
    pub lambda: f64,
    pub phi: f64,
    pub mse: f64,
    pub on_front: bool,
}

/// Monotonicity checks around the chosen regularization value, and whether
/// it sits on the front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Corollary1Check {
    /// Stability never decreases (within tolerance) walking up to the choice.
    pub stable_nondecreasing_before: bool,
    /// Loss never decreases (within tolerance) walking past the choice.
    pub loss_nondecreasing_after: bool,
    pub lambda_stable_on_front: bool,
    /// Largest observed dip in each scan, for judging Monte-Carlo noise.
    pub max_stability_violation: f64,
    pub max_loss_violation: f64,
}

/// Stability/accuracy trade-off over the grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoAnalysis {
    /// Grid values with defined stability, in input (grid) order.
    pub points: Vec<ParetoPoint>,
    /// The front member maximizing phi - mse (largest lambda on ties).
    pub lambda_pareto: f64,
    /// Present when a stability-based choice exists.
    pub corollary1: Option<Corollary1Check>,
}

impl ParetoAnalysis {
    pub fn front(&self) -> Vec<&ParetoPoint> {
        self.points.iter().filter(|p| p.on_front).collect()
    }
}

/// Marks the non-dominated points under (phi, -mse). A point is dominated
/// when another is at least as good in both coordinates and strictly better
/// in one; exact ties in both coordinates all stay on the front.
fn mark_front(points: &mut [ParetoPoint]) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    // phi descending, then accuracy (-mse) descending.
    order.sort_by(|&a, &b| {
        points[b]
            .phi
            .partial_cmp(&points[a].phi)
            .unwrap()
            .then(points[a].mse.partial_cmp(&points[b].mse).unwrap())
    });
    let mut best_acc_strictly_above = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        // One group of equal phi at a time.
        let mut j = i;
        while j < order.len() && points[order[j]].phi == points[order[i]].phi {
            j += 1;
        }
        let group_best_acc = order[i..j]
            .iter()
            .map(|&k| -points[k].mse)
            .fold(f64::NEG_INFINITY, f64::max);
        for &k in &order[i..j] {
            let acc = -points[k].mse;
            points[k].on_front = acc > best_acc_strictly_above && acc == group_best_acc;
        }
        best_acc_strictly_above = best_acc_strictly_above.max(group_best_acc);
        i = j;
    }
}

/// Builds the Pareto analysis for a stability curve and its accuracy curve
/// (aligned on the same grid). Grid values with undefined stability are
/// excluded. When `lambda_choice` carries a value, the monotonicity record
/// is computed around it.
pub fn pareto_analysis(
    curve: &[StabilityReport],
    acc: &AccuracyCurve,
    lambda_choice: &LambdaChoice,
) -> Result<ParetoAnalysis> {
    if curve.len() != acc.mse.len() {
        return Err(Error::Parameter(format!(
            "stability curve has {} points, accuracy curve has {}",
            curve.len(),
            acc.mse.len()
        )));
    }
    let mut points: Vec<ParetoPoint> = curve
        .iter()
        .zip(acc.mse.iter())
        .filter_map(|(r, &mse)| {
            r.phi.map(|phi| ParetoPoint {
                lambda: r.lambda,
                phi,
                mse,
                on_front: false,
            })
        })
        .collect();
    if points.is_empty() {
        return Err(Error::Parameter(
            "no grid value has defined stability".into(),
        ));
    }
    mark_front(&mut points);

    let lambda_pareto = points
        .iter()
        .filter(|p| p.on_front)
        .max_by(|a, b| {
            let sa = a.phi - a.mse;
            let sb = b.phi - b.mse;
            sa.partial_cmp(&sb)
                .unwrap()
                .then(a.lambda.partial_cmp(&b.lambda).unwrap())
        })
        .expect("front is nonempty")
        .lambda;

    let corollary1 = lambda_choice.lambda.map(|lc| corollary1_scan(&points, lc));

    Ok(ParetoAnalysis {
        points,
        lambda_pareto,
        corollary1,
    })
}

fn corollary1_scan(points: &[ParetoPoint], lambda_choice: f64) -> Corollary1Check {
    let mut ascending: Vec<&ParetoPoint> = points.iter().collect();
    ascending.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());

    let mut max_stability_violation: f64 = 0.0;
    let mut prev_phi = f64::NEG_INFINITY;
    for p in ascending.iter().filter(|p| p.lambda <= lambda_choice) {
        max_stability_violation = max_stability_violation.max(prev_phi - p.phi);
        prev_phi = prev_phi.max(p.phi);
    }

    let mut max_loss_violation: f64 = 0.0;
    let mut prev_mse = f64::NEG_INFINITY;
    for p in ascending.iter().filter(|p| p.lambda >= lambda_choice) {
        max_loss_violation = max_loss_violation.max(prev_mse - p.mse);
        prev_mse = prev_mse.max(p.mse);
    }

    Corollary1Check {
        stable_nondecreasing_before: max_stability_violation <= MONOTONE_TOL,
        loss_nondecreasing_after: max_loss_violation <= MONOTONE_TOL,
        lambda_stable_on_front: points
            .iter()
            .any(|p| p.lambda == lambda_choice && p.on_front),
        max_stability_violation,
        max_loss_violation,
    }
}

/// Verifies the Pareto-optimality guarantee for a given choice: returns true
/// when both monotonicity assumptions hold on the grid. In that case the
/// choice must sit on the front; an off-front choice is reported as a
/// contract violation.
pub fn check_corollary1(analysis: &ParetoAnalysis, lambda_stable: f64) -> Result<bool> {
    if !analysis.points.iter().any(|p| p.lambda == lambda_stable) {
        return Err(Error::Parameter(format!(
            "lambda_stable = {lambda_stable} is not among the analyzed grid values"
        )));
    }
    let check = corollary1_scan(&analysis.points, lambda_stable);
    if !(check.stable_nondecreasing_before && check.loss_nondecreasing_after) {
        return Ok(false);
    }
    if !check.lambda_stable_on_front {
        return Err(Error::ContractViolation(format!(
            "both monotonicity assumptions hold, yet lambda_stable = {lambda_stable} \
             is not on the Pareto front"
        )));
    }
    Ok(true)
}

/// CSV dump of a Pareto analysis: `lambda,phi,mse,on_front`.
pub fn pareto_to_csv(analysis: &ParetoAnalysis) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("lambda,phi,mse,on_front\n");
    for p in &analysis.points {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            p.lambda,
            p.phi,
            p.mse,
            u8::from(p.on_front)
        );
    }
    out
}
