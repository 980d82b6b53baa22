//! Command orchestration: resolve the input, run the resampling engine, and
//! write the data files each subcommand promises.

use std::path::Path;

use stabsel::data::{
    load_csv, save_csv, simulate, simulate_ar1_samples, Dataset, ResponseColumn, SyntheticSpec,
};
use stabsel::lasso::{cross_validate, default_grid_ratio, make_grid, GridSource, LambdaGrid};
use stabsel::resampling::{
    average_selected, evaluate_mse, run_stability_selection_with, selection_frequencies,
    RunOptions, SelectionFrequencies, StabilityRun,
};
use stabsel::rng::{derive_seed, stream_rng};
use stabsel::selection::{
    calibrate_pfer, mb_stable_set, pareto_analysis, pareto_to_csv, stable_stability_set,
    CalibrationTarget, SelectionRule,
};
use stabsel::stability::{
    convergence_trace, curve_to_csv, find_lambda_stable, find_lambda_stable_1sd, stability_curve,
    suggest_cutoff, trace_to_csv, ChoiceKind, LambdaChoice, StabilityReport,
};
use stabsel::{Error, Result};

use crate::report::{self, write_json, Meta, SCHEMA_VERSION};
use crate::{ParetoArgs, RunArgs, SimulateArgs, TraceArgs};

/// Seed-stream tags owned by the CLI layer (the library owns 0x01..0x05).
const TAG_TEST_DRAW: u64 = 0xFF;
const TAG_HOLDOUT_SPLIT: u64 = 0x48;

fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

struct ResolvedInput {
    /// Raw-scale training data.
    train: Dataset,
    /// Synthetic spec, when the input was simulated.
    spec: Option<SyntheticSpec>,
    meta: report::InputMeta,
}

fn build_spec(args: &crate::InputArgs) -> Result<SyntheticSpec> {
    let syn = &args.synthetic;
    let (Some(n), Some(p)) = (syn.n, syn.p) else {
        return Err(param("synthetic input needs both --n and --p"));
    };
    spec_from_parts(n, p, syn.rho, &syn.beta, syn.noise_sd, args.seed)
}

fn spec_from_parts(
    n: usize,
    p: usize,
    rho: f64,
    beta_head: &[f64],
    noise_sd: f64,
    seed: u64,
) -> Result<SyntheticSpec> {
    if beta_head.len() > p {
        return Err(param(format!(
            "--beta lists {} coefficients but --p is {p}",
            beta_head.len()
        )));
    }
    let mut beta = vec![0.0; p];
    beta[..beta_head.len()].copy_from_slice(beta_head);
    Ok(SyntheticSpec {
        n,
        p,
        rho,
        beta,
        noise_sd,
        seed,
    })
}

fn resolve_input(args: &crate::InputArgs, holdout: Option<f64>) -> Result<ResolvedInput> {
    if let Some(path) = &args.input {
        let response: ResponseColumn = args.response.parse().expect("infallible");
        let full = load_csv(path, &response, args.header)?;
        let meta = report::InputMeta {
            csv: Some(report::CsvMeta {
                path: path.display().to_string(),
                response: args.response.clone(),
                header: args.header,
                holdout,
            }),
            synthetic: None,
        };
        Ok(ResolvedInput {
            train: full,
            spec: None,
            meta,
        })
    } else {
        let spec = build_spec(args)?;
        let train = simulate(&spec)?;
        let meta = report::InputMeta {
            csv: None,
            synthetic: Some(report::SyntheticMeta {
                n: spec.n,
                p: spec.p,
                rho: spec.rho,
                beta_head: args.synthetic.beta.clone(),
                noise_sd: spec.noise_sd,
            }),
        };
        Ok(ResolvedInput {
            train,
            spec: Some(spec),
            meta,
        })
    }
}

fn build_grid(d: &Dataset, args: &crate::GridArgs) -> Result<(LambdaGrid, Option<f64>)> {
    if let Some(path) = &args.lambda_file {
        let text = std::fs::read_to_string(path)?;
        let mut values = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let v: f64 = line.parse().map_err(|_| Error::Ingestion {
                path: path.display().to_string(),
                row: i + 1,
                column: "1".into(),
                message: format!("cannot parse {line:?} as a number"),
            })?;
            values.push(v);
        }
        Ok((LambdaGrid::from_user(values)?, None))
    } else {
        let ratio = args
            .grid_ratio
            .unwrap_or_else(|| default_grid_ratio(d.n(), d.p()));
        Ok((make_grid(d, args.grid_length, ratio)?, Some(ratio)))
    }
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

struct Prepared {
    train: Dataset,
    grid: LambdaGrid,
    meta_input: report::InputMeta,
    spec: Option<SyntheticSpec>,
    grid_meta: report::GridMeta,
}

fn prepare(
    input: &crate::InputArgs,
    grid_args: &crate::GridArgs,
    holdout: Option<f64>,
) -> Result<(Prepared, Option<Dataset>)> {
    let resolved = resolve_input(input, holdout)?;

    // Carve the raw-scale holdout before any standardization.
    let (train_raw, test) = match holdout {
        None => (resolved.train, None),
        Some(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(param(format!("--holdout must lie in (0, 1), got {f}")));
            }
            let n = resolved.train.n();
            let n_test = ((f * n as f64).round() as usize).max(1);
            if n - n_test < 4 {
                return Err(param(format!(
                    "holdout of {n_test} rows leaves only {} training rows",
                    n - n_test
                )));
            }
            let mut order: Vec<usize> = (0..n).collect();
            use rand::seq::SliceRandom;
            order.shuffle(&mut stream_rng(input.seed, &[TAG_HOLDOUT_SPLIT]));
            let mut test_rows = order[..n_test].to_vec();
            let mut train_rows = order[n_test..].to_vec();
            test_rows.sort_unstable();
            train_rows.sort_unstable();
            (
                resolved.train.subset_rows(&train_rows)?,
                Some(resolved.train.subset_rows(&test_rows)?),
            )
        }
    };

    let train = if input.no_standardize {
        train_raw
    } else {
        train_raw.standardize()
    };
    let (grid, ratio) = build_grid(&train, grid_args)?;
    let grid_meta = report::GridMeta {
        source: match grid.source() {
            GridSource::CvDerived => "cv-derived".into(),
            GridSource::User => "user".into(),
        },
        length: grid.len(),
        ratio,
        max: grid.values()[0],
        min: *grid.values().last().unwrap(),
    };
    Ok((
        Prepared {
            train,
            grid,
            meta_input: resolved.meta,
            spec: resolved.spec,
            grid_meta,
        },
        test,
    ))
}

fn meta_for(
    command: &str,
    input: &crate::InputArgs,
    engine: &crate::EngineArgs,
    prep: Prepared,
) -> (Dataset, LambdaGrid, Option<SyntheticSpec>, Meta) {
    let meta = Meta {
        command: command.into(),
        seed: input.seed,
        b: engine.b,
        standardize: !input.no_standardize,
        shared_subsamples: !engine.independent_subsamples,
        threshold: engine.threshold,
        input: prep.meta_input,
        grid: prep.grid_meta,
    };
    (prep.train, prep.grid, prep.spec, meta)
}

fn engine_run(
    d: &Dataset,
    grid: &LambdaGrid,
    engine: &crate::EngineArgs,
    seed: u64,
    keep_fits: bool,
) -> Result<StabilityRun> {
    run_stability_selection_with(
        d,
        grid,
        engine.b,
        seed,
        &RunOptions {
            keep_fits,
            shared_subsamples: !engine.independent_subsamples,
            ..Default::default()
        },
    )
}

/// The stability-based choice: excellent band first, the one-SD fallback
/// when the band is never reached (or no choice at all when even that is
/// undefined).
fn stability_choice(curve: &[StabilityReport], threshold: f64) -> LambdaChoice {
    let choice = find_lambda_stable(curve, threshold);
    if choice.kind != ChoiceKind::None {
        return choice;
    }
    find_lambda_stable_1sd(curve).unwrap_or_else(|_| LambdaChoice::none())
}

fn grid_index(grid: &LambdaGrid, lambda: f64) -> usize {
    grid.values()
        .iter()
        .position(|&v| v == lambda)
        .expect("choice comes from this grid")
}

pub fn simulate_cmd(args: &SimulateArgs) -> Result<()> {
    let spec = spec_from_parts(
        args.n,
        args.p,
        args.rho,
        &args.beta,
        args.noise_sd,
        args.seed,
    )?;
    let d = simulate(&spec)?;
    ensure_out_dir(&args.out)?;
    save_csv(&d, &args.out.join("dataset.csv"), "y")?;
    let meta = report::SimulateReport {
        schema_version: SCHEMA_VERSION,
        command: "simulate".into(),
        seed: args.seed,
        spec: report::SyntheticMeta {
            n: spec.n,
            p: spec.p,
            rho: spec.rho,
            beta_head: args.beta.clone(),
            noise_sd: spec.noise_sd,
        },
        dataset: "dataset.csv".into(),
        response_name: "y".into(),
    };
    write_json(&args.out.join("metadata.json"), &meta)?;
    println!(
        "wrote {} ({} rows x {} columns) and metadata.json",
        args.out.join("dataset.csv").display(),
        d.n(),
        d.p() + 1
    );
    Ok(())
}

pub fn run_cmd(args: &RunArgs) -> Result<()> {
    let (prep, _) = prepare(&args.input, &args.grid, None)?;
    let (train, grid, _, meta) = meta_for("run", &args.input, &args.engine, prep);
    let seed = args.input.seed;

    let cv = cross_validate(&train, &grid, args.folds, seed)?;
    let run = engine_run(&train, &grid, &args.engine, seed, false)?;
    let curve = stability_curve(&run.matrices)?;
    let choice = stability_choice(&curve, args.engine.threshold);

    let freqs: Vec<SelectionFrequencies> = run.matrices.iter().map(selection_frequencies).collect();

    ensure_out_dir(&args.engine.out)?;
    let out = &args.engine.out;
    std::fs::write(out.join("stability_curve.csv"), curve_to_csv(&curve))?;
    std::fs::write(
        out.join("frequencies.csv"),
        stabsel::resampling::frequencies_to_csv(&freqs, train.names()),
    )?;

    write_json(
        &out.join("lambda_choices.json"),
        &report::LambdaChoicesReport {
            schema_version: SCHEMA_VERSION,
            lambda_min: cv.lambda_min,
            lambda_1se: cv.lambda_1se,
            choice: choice.clone(),
            meta: meta.clone(),
        },
    )?;

    let best_case = mb_stable_set(&freqs, args.pi_thr)?;
    let stable_set = match (choice.kind, choice.lambda) {
        (ChoiceKind::None, _) | (_, None) => None,
        (kind, Some(lambda)) => {
            let rule = if kind == ChoiceKind::Stable {
                SelectionRule::Stable
            } else {
                SelectionRule::Stable1Sd
            };
            Some(stable_stability_set(
                &freqs[grid_index(&grid, lambda)],
                args.pi_thr,
                rule,
            )?)
        }
    };
    write_json(
        &out.join("selection.json"),
        &report::SelectionReport {
            schema_version: SCHEMA_VERSION,
            best_case: report::NamedStableSet::new(&best_case, train.names()),
            stable: stable_set
                .as_ref()
                .map(|s| report::NamedStableSet::new(s, train.names())),
            meta: meta.clone(),
        },
    )?;

    write_json(
        &out.join("diagnostics.json"),
        &report::DiagnosticsReport {
            schema_version: SCHEMA_VERSION,
            total_fits: run.diagnostics.total_fits,
            non_converged_count: run.diagnostics.non_converged.len(),
            non_converged: run.diagnostics.non_converged.clone(),
            meta: meta.clone(),
        },
    )?;

    // Point-wise calibration at the chosen regularization value. Solving an
    // infeasible target fails the run after the other artifacts exist.
    let calibration = match choice.lambda {
        None => report::CalibrationReport {
            schema_version: SCHEMA_VERSION,
            fix_threshold: None,
            fix_pfer: None,
            note: Some(
                "no stability-based regularization choice exists; nothing to calibrate".into(),
            ),
            meta: meta.clone(),
        },
        Some(lambda) => {
            let q = average_selected(&run.matrices[grid_index(&grid, lambda)]);
            let mut fix_threshold =
                calibrate_pfer(q, train.p(), CalibrationTarget::Threshold(args.pi_thr))?;
            fix_threshold.lambda = Some(lambda);
            let fix_pfer = match args.pfer {
                None => None,
                Some(target) => {
                    let mut c = calibrate_pfer(q, train.p(), CalibrationTarget::Pfer(target))?;
                    c.lambda = Some(lambda);
                    Some(c)
                }
            };
            report::CalibrationReport {
                schema_version: SCHEMA_VERSION,
                fix_threshold: Some(fix_threshold),
                fix_pfer,
                note: None,
                meta: meta.clone(),
            }
        }
    };
    write_json(&out.join("calibration.json"), &calibration)?;

    println!(
        "run complete: lambda_min {}, lambda_1se {}, choice {:?} ({:?}); outputs in {}",
        cv.lambda_min,
        cv.lambda_1se,
        choice.lambda,
        choice.kind,
        out.display()
    );
    Ok(())
}

pub fn trace_cmd(args: &TraceArgs) -> Result<()> {
    let (prep, _) = prepare(&args.input, &args.grid, None)?;
    let (train, grid, _, meta) = meta_for("trace", &args.input, &args.engine, prep);
    let seed = args.input.seed;

    let run = engine_run(&train, &grid, &args.engine, seed, false)?;
    let traced_lambda = match args.lambda {
        Some(requested) => {
            if !requested.is_finite() || requested <= 0.0 {
                return Err(param(format!("--lambda must be positive, got {requested}")));
            }
            // Snap to the nearest grid value.
            *grid
                .values()
                .iter()
                .min_by(|a, b| {
                    (*a - requested)
                        .abs()
                        .partial_cmp(&(*b - requested).abs())
                        .unwrap()
                })
                .unwrap()
        }
        None => {
            let curve = stability_curve(&run.matrices)?;
            let choice = stability_choice(&curve, args.engine.threshold);
            choice.lambda.ok_or_else(|| {
                param("no grid value has defined stability; pass --lambda explicitly")
            })?
        }
    };
    let matrix = &run.matrices[grid_index(&grid, traced_lambda)];
    let trace = convergence_trace(matrix, args.ci_level, args.n_boot, seed)?;
    let cutoff = suggest_cutoff(&trace, args.window, args.eps)?;

    ensure_out_dir(&args.engine.out)?;
    let out = &args.engine.out;
    std::fs::write(out.join("trace.csv"), trace_to_csv(&trace))?;
    write_json(
        &out.join("cutoff.json"),
        &report::CutoffReport {
            schema_version: SCHEMA_VERSION,
            lambda: traced_lambda,
            suggested_cutoff: cutoff,
            window: args.window,
            eps: args.eps,
            phi_at_b: *trace.phi_t.last().unwrap(),
            meta,
        },
    )?;
    println!(
        "trace at lambda {} written; suggested cutoff {} of {} subsamples",
        traced_lambda, cutoff, args.engine.b
    );
    Ok(())
}

pub fn pareto_cmd(args: &ParetoArgs) -> Result<()> {
    if args.input.input.is_some() && args.holdout.is_none() {
        return Err(param(
            "accuracy needs held-out data: pass --holdout FRACTION to carve a test split \
             from the CSV input",
        ));
    }
    let (prep, holdout_test) = prepare(&args.input, &args.grid, args.holdout)?;
    let (train, grid, spec, meta) = meta_for("pareto", &args.input, &args.engine, prep);
    let seed = args.input.seed;

    let test = match holdout_test {
        Some(t) => t,
        None => {
            let spec = spec.expect("synthetic input");
            if args.test_n < 1 {
                return Err(param("--test-n must be at least 1"));
            }
            simulate_ar1_samples(&spec, args.test_n, derive_seed(seed, &[TAG_TEST_DRAW]))?
        }
    };

    let run = engine_run(&train, &grid, &args.engine, seed, true)?;
    let curve = stability_curve(&run.matrices)?;
    let choice = stability_choice(&curve, args.engine.threshold);
    let acc = evaluate_mse(&train, &grid, run.fits.as_ref().unwrap(), &test)?;
    let analysis = pareto_analysis(&curve, &acc, &choice)?;

    ensure_out_dir(&args.engine.out)?;
    let out = &args.engine.out;
    std::fs::write(out.join("pareto.csv"), pareto_to_csv(&analysis))?;
    write_json(
        &out.join("pareto.json"),
        &report::ParetoReport {
            schema_version: SCHEMA_VERSION,
            lambda_pareto: analysis.lambda_pareto,
            choice: choice.clone(),
            lambda_pareto_equals_choice: choice.lambda == Some(analysis.lambda_pareto),
            corollary1: analysis.corollary1,
            n_test: acc.n_test,
            meta,
        },
    )?;
    println!(
        "pareto analysis written: lambda_pareto {}, choice {:?}",
        analysis.lambda_pareto, choice.lambda
    );
    Ok(())
}
