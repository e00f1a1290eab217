use std::path::PathBuf;

use anyhow::{Context, Result};
use bbqram::state_prep::{cost_report, verify_state};
use bbqram::{prepare_state, FixedPointFormat, Precision, PrepConfig};
use clap::ValueEnum;

use crate::input::{load_matrix, InputFormat};
use crate::report::{emit, AmplitudeDoc, TraceDoc};
use crate::suite::{run_suite, DEFAULT_SIZES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Mode {
    #[default]
    Exact,
    Fixed,
}

/// Everything one invocation needs.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub input: Option<PathBuf>,
    pub format: Option<InputFormat>,
    pub mode: Mode,
    pub fixed: FixedPointFormat,
    pub out: Option<PathBuf>,
    pub cost_out: Option<PathBuf>,
    pub trace_out: Option<PathBuf>,
    pub verify: bool,
    pub tol: f64,
    pub seed: Option<u64>,
    pub sizes: Vec<usize>,
}

impl Default for RunManifest {
    fn default() -> Self {
        Self {
            input: None,
            format: None,
            mode: Mode::Exact,
            fixed: FixedPointFormat::default(),
            out: None,
            cost_out: None,
            trace_out: None,
            verify: false,
            tol: 1e-9,
            seed: None,
            sizes: DEFAULT_SIZES.to_vec(),
        }
    }
}

impl RunManifest {
    pub fn precision(&self) -> Precision {
        match self.mode {
            Mode::Exact => Precision::Exact,
            Mode::Fixed => Precision::Fixed(self.fixed),
        }
    }

    fn config(&self) -> PrepConfig {
        match self.precision() {
            Precision::Exact => PrepConfig::exact(),
            Precision::Fixed(fmt) => PrepConfig::fixed(fmt),
        }
    }
}

/// How a command ended, short of an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    VerificationFailed,
    SuiteFailed,
}

impl Outcome {
    /// 0 success, 2 failed verification or suite criterion. Errors exit 1.
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::VerificationFailed | Outcome::SuiteFailed => 2,
        }
    }
}

pub const ERROR_EXIT: u8 = 1;

/// Writes the amplitudes to `--out` (stdout if absent) and the cost report to
/// `--cost-out`.
pub fn cmd_prepare(manifest: &RunManifest) -> Result<Outcome> {
    run(manifest, false)
}

/// As [`cmd_prepare`], plus the per-iteration dump. The dump goes to
/// `--trace-out` (stdout if absent) and the amplitudes only to `--out`.
pub fn cmd_trace(manifest: &RunManifest) -> Result<Outcome> {
    run(manifest, true)
}

fn run(manifest: &RunManifest, trace: bool) -> Result<Outcome> {
    let path = manifest.input.as_deref().context("--input is required")?;
    let m = load_matrix(path, manifest.format)?;
    let cfg = manifest.config().with_trace(trace);
    let res = prepare_state(&m, &cfg).context("state preparation failed")?;

    if !trace || manifest.out.is_some() {
        emit(&AmplitudeDoc::from_result(&res), manifest.out.as_deref())?;
    }
    if let Some(cost_out) = manifest.cost_out.as_deref() {
        emit(&cost_report(&res), Some(cost_out))?;
    }
    if let Some(levels) = res.trace.as_deref() {
        emit(&TraceDoc::new(res.k, levels), manifest.trace_out.as_deref())?;
    }

    if manifest.verify {
        let report = verify_state(&res, &m, manifest.tol)?;
        if !report.passed {
            let (i, j) = report.worst_entry;
            eprintln!(
                "verification failed: max |error| {:.3e} at ({i}, {j}), norm deviation {:.3e}, \
                 {} sign mismatches, tolerance {:.3e}",
                report.max_abs_error,
                report.norm_deviation,
                report.sign_mismatches.len(),
                report.tolerance
            );
            return Ok(Outcome::VerificationFailed);
        }
    }
    Ok(Outcome::Success)
}

pub fn cmd_suite(manifest: &RunManifest) -> Result<Outcome> {
    let seed = manifest.seed.context("--seed is required for the suite")?;
    let summary = run_suite(seed, &manifest.sizes)?;
    for c in &summary.criteria {
        eprintln!(
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    emit(&summary, manifest.out.as_deref())?;
    Ok(if summary.passed {
        Outcome::Success
    } else {
        Outcome::SuiteFailed
    })
}
