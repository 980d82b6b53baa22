//! Property tests: the stability statistic against an exact rational
//! evaluation, its bounds and invariances, Pareto fronts against a brute
//! force dominance oracle, and calibration round-trips.

use num::rational::Ratio;
use num::BigInt;
use num::ToPrimitive;
use proptest::prelude::*;

use stabsel::resampling::{average_selected, selection_frequencies, SelectionMatrix};
use stabsel::resampling::{AccuracyCurve, SelectionFrequencies};
use stabsel::selection::{
    calibrate_pfer, mb_stable_set, pareto_analysis, stable_stability_set, CalibrationTarget,
    SelectionRule,
};
use stabsel::stability::{estimate_stability, LambdaChoice, StabilityBand, StabilityReport};

type Rational = Ratio<BigInt>;

fn big(v: u64) -> BigInt {
    BigInt::from(v)
}

/// Direct term-by-term evaluation of the stability statistic in exact
/// rational arithmetic: mean unbiased column variance over the chance
/// correction (q/p)(1 - q/p). Independent of the integer-count route the
/// library uses.
fn phi_rational(rows: &[Vec<u8>]) -> Option<Rational> {
    let b = rows.len() as u64;
    let p = rows[0].len() as u64;
    let mut col_sums = vec![0u64; p as usize];
    for row in rows {
        for (j, v) in row.iter().enumerate() {
            col_sums[j] += u64::from(*v);
        }
    }
    let q: Rational = Ratio::new(big(col_sums.iter().sum()), big(b));
    let q_over_p = q.clone() / Ratio::from_integer(big(p));
    let chance = q_over_p.clone() * (Ratio::from_integer(big(1)) - q_over_p);
    if chance == Ratio::from_integer(BigInt::from(0)) {
        return None;
    }
    // Unbiased sample variance of a binary column with c ones out of B:
    // c(B - c) / (B(B - 1)).
    let mut mean_var = Ratio::from_integer(BigInt::from(0));
    for &c in &col_sums {
        mean_var += Ratio::new(big(c) * big(b - c), big(b) * big(b - 1));
    }
    mean_var /= Ratio::from_integer(big(p));
    Some(Ratio::from_integer(big(1)) - mean_var / chance)
}

/// Correctly rounded f64 of a reduced rational whose parts fit in f64.
fn rational_to_f64(r: &Rational) -> f64 {
    r.numer().to_f64().unwrap() / r.denom().to_f64().unwrap()
}

fn binary_matrix(max_b: usize, max_p: usize) -> impl Strategy<Value = Vec<Vec<u8>>> {
    (2..=max_b, 2..=max_p)
        .prop_flat_map(|(b, p)| proptest::collection::vec(proptest::collection::vec(0u8..=1, p), b))
}

proptest! {
    #[test]
    fn phi_matches_rational_oracle_exactly(rows in binary_matrix(20, 10)) {
        let m = SelectionMatrix::from_binary_rows(1.0, &rows).unwrap();
        let phi = estimate_stability(&m).unwrap().phi;
        let oracle = phi_rational(&rows);
        match (phi, oracle) {
            (None, None) => {}
            (Some(v), Some(r)) => prop_assert_eq!(v, rational_to_f64(&r)),
            (a, b) => prop_assert!(false, "definedness mismatch: {:?} vs {:?}", a, b.is_some()),
        }

        // Self-concatenation doubles B; the recomputation must still match
        // the direct evaluation at B' = 2B.
        let doubled: Vec<Vec<u8>> = rows.iter().chain(rows.iter()).cloned().collect();
        let m2 = SelectionMatrix::from_binary_rows(1.0, &doubled).unwrap();
        let phi2 = estimate_stability(&m2).unwrap().phi;
        let oracle2 = phi_rational(&doubled);
        match (phi2, oracle2) {
            (None, None) => {}
            (Some(v), Some(r)) => prop_assert_eq!(v, rational_to_f64(&r)),
            (a, b) => prop_assert!(false, "definedness mismatch: {:?} vs {:?}", a, b.is_some()),
        }
    }

    #[test]
    fn phi_is_bounded_when_defined(rows in binary_matrix(20, 10)) {
        let b = rows.len() as f64;
        let m = SelectionMatrix::from_binary_rows(1.0, &rows).unwrap();
        if let Some(phi) = estimate_stability(&m).unwrap().phi {
            prop_assert!(phi >= -1.0 / (b - 1.0) - 1e-12);
            prop_assert!(phi <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn phi_is_permutation_invariant(
        rows in binary_matrix(12, 8),
        row_seed in 0u64..1000,
        col_seed in 0u64..1000,
    ) {
        let m = SelectionMatrix::from_binary_rows(1.0, &rows).unwrap();
        let phi = estimate_stability(&m).unwrap().phi;

        // Deterministic Fisher-Yates driven by the seeds.
        let permute = |len: usize, mut s: u64| -> Vec<usize> {
            let mut idx: Vec<usize> = (0..len).collect();
            for i in (1..len).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                let j = (s >> 33) as usize % (i + 1);
                idx.swap(i, j);
            }
            idx
        };
        let rp = permute(rows.len(), row_seed + 1);
        let cp = permute(rows[0].len(), col_seed + 1);
        let shuffled: Vec<Vec<u8>> = rp
            .iter()
            .map(|&i| cp.iter().map(|&j| rows[i][j]).collect())
            .collect();
        let m2 = SelectionMatrix::from_binary_rows(1.0, &shuffled).unwrap();
        prop_assert_eq!(phi, estimate_stability(&m2).unwrap().phi);
    }

    #[test]
    fn frequencies_are_exact_column_means(rows in binary_matrix(12, 6)) {
        let m = SelectionMatrix::from_binary_rows(1.0, &rows).unwrap();
        let f = selection_frequencies(&m);
        let b = rows.len() as u64;
        for j in 0..rows[0].len() {
            let c: u64 = rows.iter().map(|r| u64::from(r[j])).sum();
            let exact = Ratio::new(big(c), big(b));
            prop_assert_eq!(f.freq[j], rational_to_f64(&exact));
        }
        let avg = average_selected(&m);
        prop_assert!((0.0..=rows[0].len() as f64).contains(&avg));
    }

    #[test]
    fn calibration_round_trips(
        q in 0.01f64..50.0,
        p in 2usize..5000,
        pi in prop::num::f64::NORMAL.prop_map(|v| 0.5 + (v.abs() % 0.5).max(1e-6)),
    ) {
        let pi = pi.min(1.0);
        let fwd = calibrate_pfer(q, p, CalibrationTarget::Threshold(pi)).unwrap();
        prop_assert!(fwd.pfer_bound > 0.0);
        let back = calibrate_pfer(q, p, CalibrationTarget::Pfer(fwd.pfer_bound)).unwrap();
        prop_assert!((back.pi_thr - pi).abs() <= 1e-12 * pi.abs().max(1.0));

        // Identity pinned by the result type: bound = q^2 / (p (2 pi - 1)).
        let identity = q * q / (p as f64 * (2.0 * fwd.pi_thr - 1.0));
        prop_assert!((fwd.pfer_bound - identity).abs() <= 1e-12 * identity.max(1.0));

        // The bound strictly decreases in pi_thr.
        if pi < 1.0 - 1e-9 {
            let higher = calibrate_pfer(q, p, CalibrationTarget::Threshold(1.0)).unwrap();
            prop_assert!(higher.pfer_bound < fwd.pfer_bound);
        }
    }

    #[test]
    fn pinned_set_is_subset_of_best_case(
        freq_rows in proptest::collection::vec(
            proptest::collection::vec(0.0f64..=1.0, 5),
            2..6,
        ),
        pick in 0usize..6,
        pi_scaled in 51u32..=100,
    ) {
        let pi = pi_scaled as f64 / 100.0;
        let per_lambda: Vec<SelectionFrequencies> = freq_rows
            .iter()
            .enumerate()
            .map(|(i, f)| SelectionFrequencies {
                lambda: 1.0 / (i + 1) as f64,
                freq: f.clone(),
            })
            .collect();
        let pick = &per_lambda[pick % per_lambda.len()];
        let pinned = stable_stability_set(pick, pi, SelectionRule::Stable).unwrap();
        let best = mb_stable_set(&per_lambda, pi).unwrap();
        let best_idx = best.indices();
        for idx in pinned.indices() {
            prop_assert!(best_idx.contains(&idx));
        }
    }

    #[test]
    fn front_matches_brute_force_oracle(
        values in proptest::collection::vec((0u8..6, 0u8..6), 2..30),
    ) {
        // Small discrete coordinates force plenty of exact ties.
        let n = values.len();
        let curve: Vec<StabilityReport> = values
            .iter()
            .enumerate()
            .map(|(i, (phi, _))| StabilityReport {
                lambda: (n - i) as f64,
                phi: Some(*phi as f64 / 5.0),
                ci_low: None,
                ci_high: None,
                band: StabilityBand::Intermediate,
                b: 10,
            })
            .collect();
        let acc = AccuracyCurve {
            mse: values.iter().map(|(_, m)| *m as f64 / 2.0).collect(),
            n_test: 5,
        };
        let analysis = pareto_analysis(&curve, &acc, &LambdaChoice::none()).unwrap();

        // O(n^2) oracle straight from the dominance definition.
        let pts: Vec<(f64, f64)> = values
            .iter()
            .map(|(phi, m)| (*phi as f64 / 5.0, -(*m as f64) / 2.0))
            .collect();
        for (i, p) in analysis.points.iter().enumerate() {
            let dominated = pts.iter().enumerate().any(|(j, q)| {
                j != i
                    && q.0 >= pts[i].0
                    && q.1 >= pts[i].1
                    && (q.0 > pts[i].0 || q.1 > pts[i].1)
            });
            prop_assert_eq!(p.on_front, !dominated, "point {}", i);
        }
    }
}
