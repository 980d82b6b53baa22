//! JSON report shapes. Field order is the serialization order, which keeps
//! output bytes stable across runs.

use serde::Serialize;
use stabsel::selection::{CalibrationResult, Corollary1Check, StableSet};
use stabsel::stability::LambdaChoice;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Clone)]
pub struct InputMeta {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv: Option<CsvMeta>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticMeta>,
}

#[derive(Serialize, Clone)]
pub struct CsvMeta {
    pub path: String,
    pub response: String,
    pub header: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub holdout: Option<f64>,
}

#[derive(Serialize, Clone)]
pub struct SyntheticMeta {
    pub n: usize,
    pub p: usize,
    pub rho: f64,
    pub beta_head: Vec<f64>,
    pub noise_sd: f64,
}

#[derive(Serialize, Clone)]
pub struct GridMeta {
    pub source: String,
    pub length: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio: Option<f64>,
    pub max: f64,
    pub min: f64,
}

/// Provenance block embedded in every JSON output.
#[derive(Serialize, Clone)]
pub struct Meta {
    pub command: String,
    pub seed: u64,
    pub b: usize,
    pub standardize: bool,
    pub shared_subsamples: bool,
    pub threshold: f64,
    pub input: InputMeta,
    pub grid: GridMeta,
}

#[derive(Serialize)]
pub struct SimulateReport {
    pub schema_version: u32,
    pub command: String,
    pub seed: u64,
    pub spec: SyntheticMeta,
    pub dataset: String,
    pub response_name: String,
}

#[derive(Serialize)]
pub struct LambdaChoicesReport {
    pub schema_version: u32,
    pub lambda_min: f64,
    pub lambda_1se: f64,
    /// The stability-based choice: the excellent-band value when one exists,
    /// otherwise the one-standard-deviation fallback (kind records which).
    pub choice: LambdaChoice,
    pub meta: Meta,
}

#[derive(Serialize)]
pub struct NamedMember {
    pub index: usize,
    pub name: String,
    pub frequency: f64,
}

#[derive(Serialize)]
pub struct NamedStableSet {
    pub rule: stabsel::selection::SelectionRule,
    pub pi_thr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    pub members: Vec<NamedMember>,
}

impl NamedStableSet {
    pub fn new(set: &StableSet, names: &[String]) -> Self {
        Self {
            rule: set.rule,
            pi_thr: set.pi_thr,
            lambda: set.lambda,
            members: set
                .members
                .iter()
                .map(|m| NamedMember {
                    index: m.index,
                    name: names[m.index].clone(),
                    frequency: m.frequency,
                })
                .collect(),
        }
    }
}

#[derive(Serialize)]
pub struct SelectionReport {
    pub schema_version: u32,
    /// Best case per variable over the whole grid.
    pub best_case: NamedStableSet,
    /// Frequencies pinned at the stability-chosen regularization value;
    /// absent when no choice exists.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stable: Option<NamedStableSet>,
    pub meta: Meta,
}

#[derive(Serialize)]
pub struct CalibrationReport {
    pub schema_version: u32,
    /// Bound implied by the requested threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fix_threshold: Option<CalibrationResult>,
    /// Threshold implied by the requested bound, when one was given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fix_pfer: Option<CalibrationResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub meta: Meta,
}

#[derive(Serialize)]
pub struct DiagnosticsReport {
    pub schema_version: u32,
    pub total_fits: usize,
    pub non_converged_count: usize,
    pub non_converged: Vec<stabsel::resampling::NonConvergedFit>,
    pub meta: Meta,
}

#[derive(Serialize)]
pub struct CutoffReport {
    pub schema_version: u32,
    pub lambda: f64,
    pub suggested_cutoff: usize,
    pub window: usize,
    pub eps: f64,
    pub phi_at_b: Option<f64>,
    pub meta: Meta,
}

#[derive(Serialize)]
pub struct ParetoReport {
    pub schema_version: u32,
    pub lambda_pareto: f64,
    pub choice: LambdaChoice,
    pub lambda_pareto_equals_choice: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corollary1: Option<Corollary1Check>,
    pub n_test: usize,
    pub meta: Meta,
}

pub fn write_json<T: Serialize>(path: &std::path::Path, value: &T) -> stabsel::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
