//! Seeded self-check over random matrices.
//!
//! Every case draws from its own ChaCha stream, so results do not depend on
//! how rayon schedules them.

use anyhow::{bail, Result};
use bbqram::layout::{layout_cells, level_of, offset_of};
use bbqram::qram::query_units;
use bbqram::quantum_ops::{
    cascade_ry, circular_shift_left, cz_sign, direct_ry, primitive_root, primitive_siblings,
    primitive_signs, u2cr, u2cr_weights, uncompute_lr, uncompute_root, uncompute_signs,
};
use bbqram::state_prep::{cost_report, verify_state};
use bbqram::{
    prepare_state, DenseMatrix, FieldSelector, FixedPointFormat, Precision, PrepConfig, QramTree,
    RegisterLayout, SegTree, SparseState,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::report::Num;

pub const DEFAULT_SIZES: [usize; 9] = [4, 8, 16, 32, 64, 128, 256, 512, 1024];
/// The sweep runs on one fixed matrix set whatever the suite seed.
pub const SWEEP_SEED: u64 = 42;
pub const SWEEP_FRAC_BITS: [u32; 3] = [8, 16, 24];
pub const SWEEP_INT_BITS: u32 = 8;
pub const SWEEP_ENTRIES: usize = 16;
pub const SWEEP_MATRICES: usize = 8;
pub const SWEEP_CEILING: f64 = 1e-5;
pub const FIT_MAX_RESIDUAL: f64 = 0.01;

const CASES_PER_SIZE: usize = 4;
const UPDATES_PER_CASE: usize = 8;
const SPLIT_SAMPLES: usize = 1000;

// Stream ids keep the criteria from sharing random numbers.
const STREAM_TREE: u64 = 1;
const STREAM_PREP: u64 = 2;
const STREAM_SPLIT: u64 = 3;
const STREAM_COST: u64 = 4;
const STREAM_SWEEP: u64 = 5;
const STREAM_CLEAN: u64 = 6;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    pub metric: Num,
    pub threshold: Num,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteSummary {
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub passed: bool,
    pub criteria: Vec<CriterionResult>,
}

/// Generator for case `case` of stream `stream`.
pub fn case_rng(seed: u64, stream: u64, case: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ case.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(stream);
    rng
}

/// `entries` uniform draws from `[-1, 1)`, shaped as close to square as the
/// power of two allows.
pub fn random_matrix(rng: &mut ChaCha8Rng, entries: usize) -> DenseMatrix {
    let k = entries.max(2).next_power_of_two().trailing_zeros();
    let rows = 1usize << (k / 2);
    let cols = (1usize << k) / rows;
    loop {
        let data: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if let Ok(m) = DenseMatrix::pad(rows, cols, &data) {
            return m;
        }
    }
}

pub fn check_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.is_empty() {
        bail!("--sizes needs at least one entry count");
    }
    for &n in sizes {
        if n < 2 || !n.is_power_of_two() {
            bail!("size {n} is not a power of two >= 2");
        }
    }
    Ok(())
}

pub fn run_suite(seed: u64, sizes: &[usize]) -> Result<SuiteSummary> {
    check_sizes(sizes)?;
    let criteria = vec![
        segment_tree(seed, sizes),
        layout_bijection(sizes),
        end_to_end(seed, sizes),
        cleanliness(seed, sizes),
        split_unitarity(seed),
        cost_closed_form(seed),
        cost_regression(seed),
        query_cost_affine(),
        precision_sweep(),
    ];
    Ok(SuiteSummary {
        seed,
        sizes: sizes.to_vec(),
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    })
}

fn cases(sizes: &[usize]) -> Vec<(u64, usize)> {
    sizes
        .iter()
        .flat_map(|&n| std::iter::repeat_n(n, CASES_PER_SIZE))
        .enumerate()
        .map(|(i, n)| (i as u64, n))
        .collect()
}

/// Largest relative gap between the root and a naive sum of squares, or
/// `None` if some structural check failed.
fn tree_case(m: &mut DenseMatrix, rng: &mut ChaCha8Rng) -> Option<f64> {
    let tree = SegTree::build(m);
    let nodes = tree.nodes();
    let internal = tree.leaf_count() - 1;
    if (0..internal).any(|i| nodes[i] != nodes[2 * i + 1] + nodes[2 * i + 2]) {
        return None;
    }
    let naive: f64 = m.entries().iter().map(|a| a * a).sum();
    let mut worst = (tree.root() - naive).abs() / naive;

    let mut tree = tree;
    for _ in 0..UPDATES_PER_CASE {
        let z = rng.gen_range(0..m.len());
        let value = rng.gen_range(-1.0..1.0);
        if m.set(z, value).is_err() {
            continue;
        }
        tree.update_entry(z, value).ok()?;
        let rebuilt = SegTree::build(m);
        if tree != rebuilt {
            return None;
        }
        let naive: f64 = m.entries().iter().map(|a| a * a).sum();
        worst = worst.max((tree.root() - naive).abs() / naive);
    }
    Some(worst)
}

fn segment_tree(seed: u64, sizes: &[usize]) -> CriterionResult {
    let list = cases(sizes);
    let results: Vec<Option<f64>> = list
        .par_iter()
        .map(|&(id, n)| {
            let mut rng = case_rng(seed, STREAM_TREE, id);
            let mut m = random_matrix(&mut rng, n);
            tree_case(&mut m, &mut rng)
        })
        .collect();
    let broken = results.iter().filter(|r| r.is_none()).count();
    let worst = results.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    let threshold = 1e-12;
    CriterionResult {
        name: "segment_tree",
        passed: broken == 0 && worst <= threshold,
        cases: list.len(),
        metric: Num(worst),
        threshold: Num(threshold),
        detail: format!("{broken} cases with a bad parent sum or update mismatch"),
    }
}

fn layout_bijection(sizes: &[usize]) -> CriterionResult {
    let mut failures = 0;
    for &leaves in sizes {
        let mut hits = vec![0u32; 2 * leaves - 1];
        for z in 1..leaves {
            let (Ok(l), Ok(d)) = (level_of(z, leaves), offset_of(z, leaves)) else {
                failures += 1;
                continue;
            };
            hits[SegTree::flat_index(l, 2 * d)] += 1;
            hits[SegTree::flat_index(l, 2 * d + 1)] += 1;
        }
        if hits[0] != 0 || hits[1..].iter().any(|&c| c != 1) {
            failures += 1;
        }
    }
    CriterionResult {
        name: "layout_bijection",
        passed: failures == 0,
        cases: sizes.len(),
        metric: Num(failures as f64),
        threshold: Num(0.0),
        detail: format!("{failures} sizes where sibling pairs miss or repeat a node"),
    }
}

fn end_to_end(seed: u64, sizes: &[usize]) -> CriterionResult {
    let list = cases(sizes);
    let tol = 1e-9;
    let results: Vec<Option<f64>> = list
        .par_iter()
        .map(|&(id, n)| {
            let mut rng = case_rng(seed, STREAM_PREP, id);
            let m = random_matrix(&mut rng, n);
            let res = prepare_state(&m, &PrepConfig::exact()).ok()?;
            let report = verify_state(&res, &m, tol).ok()?;
            report
                .sign_mismatches
                .is_empty()
                .then_some(report.max_abs_error)
        })
        .collect();
    let errors = results.iter().filter(|r| r.is_none()).count();
    let worst = results.iter().flatten().fold(0.0f64, |a, &b| a.max(b));
    CriterionResult {
        name: "end_to_end_exact",
        passed: errors == 0 && worst <= tol,
        cases: list.len(),
        metric: Num(worst),
        threshold: Num(tol),
        detail: format!("{errors} cases failed to prepare or had sign mismatches"),
    }
}

/// Replays the preparation loop with every retrieval applied, undone and
/// redone, checking the switches after each step. Returns the number of
/// violations seen.
pub fn replay_clean(m: &DenseMatrix) -> bbqram::Result<usize> {
    let tree = SegTree::build(m);
    let k = tree.depth();
    let mode = Precision::Exact;
    let mut qram = QramTree::with_cells(layout_cells(&tree, mode)?)?;
    let layout = RegisterLayout::new(mode.width(), k);
    let mut bad = 0;
    let mut check = |qram: &QramTree, ok: bool| {
        if !ok || !qram.all_wait() || !qram.bus_is_clear() {
            bad += 1;
        }
    };

    let start = SparseState::new(layout);
    let root = primitive_root(start.clone(), &mut qram)?;
    check(
        &qram,
        root.amplitudes()
            .keys()
            .all(|l| l.l != 0 || tree.root() == 0.0),
    );
    let undone = uncompute_root(root, &mut qram)?;
    check(&qram, undone == start);

    let mut state = start.flip_address_bits(1);
    for h in 1..=k {
        let loaded = primitive_siblings(state.clone(), &mut qram, h)?;
        check(&qram, true);
        let undone = uncompute_lr(loaded, &mut qram, h)?;
        check(&qram, undone == state);
        state = primitive_siblings(state, &mut qram, h)?;
        state = u2cr(state, mode)?;
        state = uncompute_lr(state, &mut qram, h)?;
        check(
            &qram,
            state.amplitudes().keys().all(|l| l.l == 0 && l.r == 0),
        );
        state = circular_shift_left(state);
    }
    let signed = primitive_signs(state.clone(), &mut qram)?;
    check(&qram, true);
    let undone = uncompute_signs(signed, &mut qram)?;
    check(&qram, undone == state);
    state = primitive_signs(state, &mut qram)?;
    state = cz_sign(state);
    state = uncompute_signs(state, &mut qram)?;
    check(
        &qram,
        state
            .amplitudes()
            .keys()
            .all(|l| !l.s && l.l == 0 && l.r == 0),
    );
    Ok(bad)
}

fn cleanliness(seed: u64, sizes: &[usize]) -> CriterionResult {
    let list: Vec<(u64, usize)> = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| (i as u64, n))
        .collect();
    let results: Vec<Option<usize>> = list
        .par_iter()
        .map(|&(id, n)| {
            let mut rng = case_rng(seed, STREAM_CLEAN, id);
            replay_clean(&random_matrix(&mut rng, n)).ok()
        })
        .collect();
    let violations: usize = results.iter().map(|r| r.unwrap_or(1)).sum();
    CriterionResult {
        name: "primitive_cleanliness",
        passed: violations == 0,
        cases: list.len(),
        metric: Num(violations as f64),
        threshold: Num(0.0),
        detail: "registers restored after double application; switches Wait after every step"
            .into(),
    }
}

fn split_unitarity(seed: u64) -> CriterionResult {
    let fmt = FixedPointFormat::new(8, 24).expect("valid format");
    let mut rng = case_rng(seed, STREAM_SPLIT, 0);
    let mut worst = 0.0f64;
    let mut errors = 0;
    for _ in 0..SPLIT_SAMPLES {
        let a: f64 = rng.gen_range(0.0..100.0);
        let b: f64 = rng.gen_range(0.0..100.0);
        for mode in [Precision::Exact, Precision::Fixed(fmt)] {
            let words = mode.encode(a).and_then(|x| Ok((x, mode.encode(b)?)));
            match words.and_then(|(x, y)| u2cr_weights(x, y, mode)) {
                Ok((w0, w1)) => worst = worst.max((w0 * w0 + w1 * w1 - 1.0).abs()),
                Err(_) => errors += 1,
            }
        }
        let word = rng.gen_range(1..1u64 << fmt.width());
        match cascade_ry(word, fmt) {
            Ok((c, s)) => {
                let (dc, ds) = direct_ry(fmt.decode(word));
                worst = worst.max((c - dc).abs()).max((s - ds).abs());
            }
            Err(_) => errors += 1,
        }
    }
    let threshold = 1e-12;
    CriterionResult {
        name: "split_unitarity",
        passed: errors == 0 && worst <= threshold,
        cases: SPLIT_SAMPLES,
        metric: Num(worst),
        threshold: Num(threshold),
        detail: format!("{errors} samples failed to evaluate"),
    }
}

fn cost_cases(seed: u64) -> Vec<Option<bbqram::CostReport>> {
    (2u32..=8)
        .into_par_iter()
        .map(|k| {
            let mut rng = case_rng(seed, STREAM_COST, k as u64);
            let m = random_matrix(&mut rng, 1 << k);
            prepare_state(&m, &PrepConfig::exact())
                .ok()
                .map(|r| cost_report(&r))
        })
        .collect()
}

fn cost_closed_form(seed: u64) -> CriterionResult {
    let reports = cost_cases(seed);
    let mismatches = reports
        .iter()
        .filter(|r| {
            !matches!(r, Some(c) if c.matches_closed_form && c.init_units == c.expected_init_units)
        })
        .count();
    let worst = reports
        .iter()
        .flatten()
        .map(|c| c.deviation.unsigned_abs())
        .max()
        .unwrap_or(0);
    CriterionResult {
        name: "cost_closed_form",
        passed: mismatches == 0,
        cases: reports.len(),
        metric: Num(worst as f64),
        threshold: Num(0.0),
        detail: format!("{mismatches} depths in 2..=8 disagree with the closed form"),
    }
}

/// Least-squares fit `y ≈ a k² + b k + c`. Returns the coefficients and the
/// largest residual relative to the measured value.
pub fn fit_quadratic(ks: &[f64], ys: &[f64]) -> Option<([f64; 3], f64)> {
    if ks.len() != ys.len() || ks.len() < 3 {
        return None;
    }
    let x = DMatrix::from_fn(ks.len(), 3, |i, j| ks[i].powi(2 - j as i32));
    let y = DVector::from_column_slice(ys);
    let coef = x.clone().svd(true, true).solve(&y, 1e-12).ok()?;
    let fitted = &x * &coef;
    let residual = ys
        .iter()
        .zip(fitted.iter())
        .map(|(y, f)| (y - f).abs() / y.abs())
        .fold(0.0f64, f64::max);
    Some(([coef[0], coef[1], coef[2]], residual))
}

fn cost_regression(seed: u64) -> CriterionResult {
    let reports: Vec<_> = cost_cases(seed).into_iter().flatten().collect();
    let ks: Vec<f64> = reports.iter().map(|c| c.k as f64).collect();
    let ys: Vec<f64> = reports.iter().map(|c| c.total_units as f64).collect();
    let (passed, metric, detail) = match fit_quadratic(&ks, &ys) {
        Some(([a, b, c], r)) if reports.len() == 7 => (
            a > 0.0 && r < FIT_MAX_RESIDUAL,
            r,
            format!("a = {a:.6}, b = {b:.6}, c = {c:.6}"),
        ),
        _ => (false, f64::INFINITY, "fit unavailable".into()),
    };
    CriterionResult {
        name: "cost_regression",
        passed,
        cases: reports.len(),
        metric: Num(metric),
        threshold: Num(FIT_MAX_RESIDUAL),
        detail,
    }
}

/// Units of one sign query for `support` on a fresh depth-`k` tree.
pub fn measured_query_units(k: u32, support: &std::collections::BTreeSet<usize>) -> Option<u64> {
    let mut qram = QramTree::new(k);
    qram.query(support, FieldSelector::SignBit).ok()?;
    Some(qram.counters().total_units())
}

fn query_cost_affine() -> CriterionResult {
    let mut per_k = Vec::new();
    let mut width_dependent = 0;
    for k in 1u32..=10 {
        let leaves = 1usize << k;
        let supports = [
            [0].into_iter().collect(),
            [leaves - 1].into_iter().collect(),
            (0..leaves).step_by(2).collect(),
            (0..leaves).collect(),
        ];
        let costs: Vec<Option<u64>> = supports
            .iter()
            .map(|s| measured_query_units(k, s))
            .collect();
        if costs.iter().any(|c| *c != costs[0]) || costs[0] != Some(query_units(k)) {
            width_dependent += 1;
        }
        per_k.push(costs[0].unwrap_or(0) as i64);
    }
    let slopes: Vec<i64> = per_k.windows(2).map(|w| w[1] - w[0]).collect();
    let affine = slopes.iter().all(|&s| s == slopes[0] && s > 0);
    CriterionResult {
        name: "query_cost_affine",
        passed: affine && width_dependent == 0,
        cases: per_k.len(),
        metric: Num(width_dependent as f64),
        threshold: Num(0.0),
        detail: format!("slope {} units per level", slopes[0]),
    }
}

/// Largest deviation from exact mode for each fraction width in
/// [`SWEEP_FRAC_BITS`], over a seeded set of matrices.
pub fn sweep_deviations(seed: u64) -> Result<Vec<f64>> {
    let matrices: Vec<DenseMatrix> = (0..SWEEP_MATRICES as u64)
        .map(|i| random_matrix(&mut case_rng(seed, STREAM_SWEEP, i), SWEEP_ENTRIES))
        .collect();
    let exact = matrices
        .par_iter()
        .map(|m| prepare_state(m, &PrepConfig::exact()))
        .collect::<bbqram::Result<Vec<_>>>()?;
    SWEEP_FRAC_BITS
        .iter()
        .map(|&frac| {
            let cfg = PrepConfig::fixed(FixedPointFormat::new(SWEEP_INT_BITS, frac)?);
            let fixed = matrices
                .par_iter()
                .map(|m| prepare_state(m, &cfg))
                .collect::<bbqram::Result<Vec<_>>>()?;
            Ok(fixed
                .iter()
                .zip(&exact)
                .flat_map(|(f, e)| {
                    f.amplitudes
                        .iter()
                        .zip(&e.amplitudes)
                        .map(|(x, y)| (x - y).abs())
                })
                .fold(0.0f64, f64::max))
        })
        .collect()
}

fn precision_sweep() -> CriterionResult {
    let (passed, metric, detail) = match sweep_deviations(SWEEP_SEED) {
        Ok(devs) => {
            let decreasing = devs.windows(2).all(|w| w[1] < w[0]);
            let last = *devs.last().unwrap_or(&f64::INFINITY);
            let listing: Vec<String> = SWEEP_FRAC_BITS
                .iter()
                .zip(&devs)
                .map(|(f, d)| format!("frac {f}: {d:.3e}"))
                .collect();
            (
                decreasing && last <= SWEEP_CEILING,
                last,
                listing.join(", "),
            )
        }
        Err(e) => (false, f64::INFINITY, format!("sweep failed: {e}")),
    };
    CriterionResult {
        name: "precision_sweep",
        passed,
        cases: SWEEP_MATRICES,
        metric: Num(metric),
        threshold: Num(SWEEP_CEILING),
        detail,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_exact_quadratic() {
        let ks: Vec<f64> = (2..=8).map(f64::from).collect();
        let ys: Vec<f64> = ks.iter().map(|k| 3.0 * k * k - 2.0 * k + 7.0).collect();
        let ([a, b, c], r) = fit_quadratic(&ks, &ys).unwrap();
        assert!((a - 3.0).abs() < 1e-9 && (b + 2.0).abs() < 1e-9 && (c - 7.0).abs() < 1e-9);
        assert!(r < 1e-12);
        assert!(fit_quadratic(&ks[..2], &ys[..2]).is_none());
    }

    #[test]
    fn random_matrix_shapes() {
        let mut rng = case_rng(1, 0, 0);
        for (n, shape) in [(2, (1, 2)), (4, (2, 2)), (8, (2, 4)), (1024, (32, 32))] {
            let m = random_matrix(&mut rng, n);
            assert_eq!((m.rows(), m.cols()), shape);
        }
    }

    #[test]
    fn case_streams_are_reproducible_and_distinct() {
        let a: u64 = case_rng(7, 1, 3).gen();
        assert_eq!(a, case_rng(7, 1, 3).gen::<u64>());
        assert_ne!(a, case_rng(7, 2, 3).gen::<u64>());
        assert_ne!(a, case_rng(7, 1, 4).gen::<u64>());
    }

    #[test]
    fn sizes_must_be_powers_of_two() {
        assert!(check_sizes(&[4, 16]).is_ok());
        assert!(check_sizes(&[]).is_err());
        assert!(check_sizes(&[1]).is_err());
        assert!(check_sizes(&[12]).is_err());
    }

    #[test]
    fn replay_is_clean_on_small_matrices() {
        for n in [2, 4, 32] {
            let m = random_matrix(&mut case_rng(9, 0, n as u64), n);
            assert_eq!(replay_clean(&m).unwrap(), 0);
        }
    }
}
