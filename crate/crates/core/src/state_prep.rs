//! End-to-end state preparation, verification and cost accounting.
//!
//! The preparation loop, for a matrix with `K = 2^k` entries:
//!
//! ```text
//! build tree; write K cells                (initialization, reported apart)
//! |0⟩s |0⟩l |0⟩r |0⟩v |0…0⟩a ; X on a_0     1 unit
//! for h in 1..=k:
//!     retrieve level-h sibling pairs       4k + 2
//!     split v on (l, r)                    1
//!     uncompute l, r                       4k + 2
//!     left-rotate v ∥ a                    ceil(log2 w_h) swap layers
//! retrieve signs                           4k + 2
//! CZ(s, v)                                 1
//! uncompute signs                          4k + 2
//! ```
//!
//! `w_h` is the number of qubits the rotation actually moves: `h + 2` for
//! `h < k` (the split qubit, the `h` occupied address bits and the zero bit
//! above them) and `k + 1` for the last level. A rotation of `w` qubits is a
//! tree of swap layers of depth `ceil(log2 w)`.
//!
//! Altogether the loop costs
//! `(2k + 2)(4k + 2) + 1 + k + Σ_h ceil(log2 w_h) + 1` units.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layout::{layout_cells, Precision};
use crate::preprocessing::{DenseMatrix, SegTree};
use crate::qram::{query_units, write_units, QramTree, StepCounters};
use crate::quantum_ops::{
    circular_shift_left, cz_sign, dump_state, primitive_siblings, primitive_signs, u2cr,
    uncompute_lr, uncompute_signs, RegisterLayout, SparseState, StateRecord,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrepConfig {
    pub mode: Precision,
    pub prune_threshold: f64,
    pub trace: bool,
}

impl PrepConfig {
    /// Binary64 cells, only exact zeros pruned.
    pub fn exact() -> Self {
        Self {
            mode: Precision::Exact,
            prune_threshold: 0.0,
            trace: false,
        }
    }

    /// Fixed-point cells and arithmetic; prunes below `2^-(frac_bits + 8)`.
    pub fn fixed(fmt: crate::layout::FixedPointFormat) -> Self {
        Self {
            mode: Precision::Fixed(fmt),
            prune_threshold: (-(fmt.frac_bits() as f64) - 8.0).exp2(),
            trace: false,
        }
    }

    pub fn with_trace(mut self, trace: bool) -> Self {
        self.trace = trace;
        self
    }
}

/// Unit costs charged outside the QRAM.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GateCounters {
    pub address_set: u64,
    pub u2cr: u64,
    pub shift_layers: u64,
    pub cz: u64,
}

impl GateCounters {
    pub fn total_units(&self) -> u64 {
        self.address_set + self.u2cr + self.shift_layers + self.cz
    }
}

/// State right after the split at one tree level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub level: u32,
    pub records: Vec<StateRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepResult {
    pub rows: usize,
    pub cols: usize,
    pub k: u32,
    pub mode: Precision,
    /// Row-major output amplitudes over the padded matrix.
    pub amplitudes: Vec<f64>,
    pub frobenius: f64,
    /// QRAM counters for the preparation loop only.
    pub counters: StepCounters,
    /// QRAM counters for writing the cells.
    pub init_counters: StepCounters,
    pub gates: GateCounters,
    pub trace: Option<Vec<IterationTrace>>,
}

impl PrepResult {
    pub fn amplitude(&self, i: usize, j: usize) -> f64 {
        self.amplitudes[i * self.cols + j]
    }
}

/// Swap-layer depth of the rotation after level `h` of a depth-`k` tree.
pub fn shift_layers(h: u32, k: u32) -> u64 {
    let width = if h < k { h + 2 } else { k + 1 };
    width.next_power_of_two().trailing_zeros() as u64
}

/// Documented cost of the preparation loop for depth `k`.
pub fn expected_prep_units(k: u32) -> u64 {
    let queries = 2 * k as u64 + 2;
    let shifts: u64 = (1..=k).map(|h| shift_layers(h, k)).sum();
    queries * query_units(k) + 1 + k as u64 + shifts + 1
}

/// Documented cost of writing all `2^k` cells.
pub fn expected_init_units(k: u32) -> u64 {
    (1u64 << k) * write_units(k)
}

fn check_clean(state: &SparseState, v: bool, stage: &str) -> Result<()> {
    if let Some(bad) = state
        .amplitudes()
        .keys()
        .find(|l| l.s || l.l != 0 || l.r != 0 || l.v != v)
    {
        return Err(Error::DisentanglementFailure(format!(
            "{stage}: expected s = l = r = 0, v = {}, found {bad:?}",
            v as u8
        )));
    }
    Ok(())
}

/// Runs the full preparation loop on `m`.
pub fn prepare_state(m: &DenseMatrix, cfg: &PrepConfig) -> Result<PrepResult> {
    let tree = SegTree::build(m);
    let k = tree.depth();
    let leaves = tree.leaf_count();
    let cells = layout_cells(&tree, cfg.mode)?;

    let mut qram = QramTree::new(k);
    for (z, cell) in cells.into_iter().enumerate() {
        qram.write_cell(z, cell)?;
    }
    let init_counters = qram.counters();

    let mut gates = GateCounters::default();
    let mut trace = cfg.trace.then(Vec::new);
    let layout = RegisterLayout::new(cfg.mode.width(), k);
    let mut state = SparseState::new(layout)
        .with_prune_threshold(cfg.prune_threshold)
        .flip_address_bits(1);
    gates.address_set += 1;

    for h in 1..=k {
        state = primitive_siblings(state, &mut qram, h)?;
        state = u2cr(state, cfg.mode)?;
        gates.u2cr += 1;
        if let Some(t) = trace.as_mut() {
            t.push(IterationTrace {
                level: h,
                records: dump_state(&state, cfg.mode),
            });
        }
        state = uncompute_lr(state, &mut qram, h)?;
        state = circular_shift_left(state);
        gates.shift_layers += shift_layers(h, k);
        debug_assert!(state.len() <= 2 * leaves);
        debug_assert!(qram.all_wait());
    }

    state = primitive_signs(state, &mut qram)?;
    state = cz_sign(state);
    gates.cz += 1;
    state = uncompute_signs(state, &mut qram)?;

    check_clean(&state, true, "after sign correction")?;
    state = state.flip_v();
    check_clean(&state, false, "after clearing v")?;

    let mut amplitudes = vec![0.0; leaves];
    for (label, amp) in state.amplitudes() {
        amplitudes[label.a] = amp.re;
    }

    Ok(PrepResult {
        rows: m.rows(),
        cols: m.cols(),
        k,
        mode: cfg.mode,
        amplitudes,
        frobenius: tree.frobenius(),
        counters: qram.counters().since(&init_counters),
        init_counters,
        gates,
        trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub max_abs_error: f64,
    /// `(i, j)` of the largest deviation.
    pub worst_entry: (usize, usize),
    pub norm_deviation: f64,
    pub sign_mismatches: Vec<(usize, usize)>,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares the prepared amplitudes against `a_{i,j} / ‖A‖_F`.
pub fn verify_state(result: &PrepResult, m: &DenseMatrix, tol: f64) -> Result<VerificationReport> {
    if result.rows != m.rows() || result.cols != m.cols() {
        return Err(Error::DimMismatch {
            result_rows: result.rows,
            result_cols: result.cols,
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    let norm = m.frobenius_sq().sqrt();
    let mut max_abs_error = 0.0f64;
    let mut worst = 0;
    let mut sign_mismatches = Vec::new();
    for (z, (&got, &a)) in result.amplitudes.iter().zip(m.entries()).enumerate() {
        let err = (got - a / norm).abs();
        if err > max_abs_error || err.is_nan() {
            max_abs_error = err;
            worst = z;
        }
        if got * a < 0.0 {
            sign_mismatches.push((z / m.cols(), z % m.cols()));
        }
    }
    let norm_deviation = (result.amplitudes.iter().map(|x| x * x).sum::<f64>() - 1.0).abs();
    let passed = max_abs_error <= tol && norm_deviation <= tol && sign_mismatches.is_empty();
    Ok(VerificationReport {
        max_abs_error,
        worst_entry: (worst / m.cols(), worst % m.cols()),
        norm_deviation,
        sign_mismatches,
        tolerance: tol,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport {
    pub k: u32,
    pub leaves: usize,
    pub queries: u64,
    pub units_per_query: u64,
    pub qram_units: u64,
    pub address_set_units: u64,
    pub u2cr_units: u64,
    pub shift_units: u64,
    pub cz_units: u64,
    pub total_units: u64,
    pub expected_total_units: u64,
    pub deviation: i64,
    pub matches_closed_form: bool,
    pub init_units: u64,
    pub expected_init_units: u64,
    pub counters: StepCounters,
    pub init_counters: StepCounters,
}

/// Summarizes the measured costs next to the closed-form expectation.
pub fn cost_report(result: &PrepResult) -> CostReport {
    let k = result.k;
    let qram_units = result.counters.total_units();
    let total_units = qram_units + result.gates.total_units();
    let expected_total_units = expected_prep_units(k);
    let deviation = total_units as i64 - expected_total_units as i64;
    CostReport {
        k,
        leaves: 1 << k,
        queries: result.counters.queries,
        units_per_query: query_units(k),
        qram_units,
        address_set_units: result.gates.address_set,
        u2cr_units: result.gates.u2cr,
        shift_units: result.gates.shift_layers,
        cz_units: result.gates.cz,
        total_units,
        expected_total_units,
        deviation,
        matches_closed_form: deviation == 0,
        init_units: result.init_counters.total_units(),
        expected_init_units: expected_init_units(k),
        counters: result.counters,
        init_counters: result.init_counters,
    }
}
