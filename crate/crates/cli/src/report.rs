//! JSON documents written by the binary.
//!
//! Floats go through [`Num`], which prints 17 significant digits so every
//! value reads back to the same binary64.

use std::fs;
use std::io::Write;
use std::path::Path;

use anyhow::{Context, Result};
use bbqram::state_prep::IterationTrace;
use bbqram::PrepResult;
use serde::{Serialize, Serializer};
use serde_json::value::RawValue;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Num(pub f64);

impl Serialize for Num {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let x = if self.0 == 0.0 { 0.0 } else { self.0 };
        let raw = RawValue::from_string(format!("{x:.16e}")).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

#[derive(Debug, Serialize)]
pub struct AmplitudeEntry {
    pub i: usize,
    pub j: usize,
    pub value: Num,
}

#[derive(Debug, Serialize)]
pub struct AmplitudeDoc {
    pub frobenius: Num,
    pub k: u32,
    pub amplitudes: Vec<AmplitudeEntry>,
}

impl AmplitudeDoc {
    pub fn from_result(res: &PrepResult) -> Self {
        let mut amplitudes = Vec::with_capacity(res.rows * res.cols);
        for i in 0..res.rows {
            for j in 0..res.cols {
                amplitudes.push(AmplitudeEntry {
                    i,
                    j,
                    value: Num(res.amplitude(i, j)),
                });
            }
        }
        Self {
            frobenius: Num(res.frobenius),
            k: res.k,
            amplitudes,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct TraceRecord {
    pub s: u8,
    pub l_decoded: Num,
    pub r_decoded: Num,
    pub v: u8,
    pub a_bits: String,
    pub amp_real: Num,
    pub amp_imag: Num,
}

#[derive(Debug, Serialize)]
pub struct TraceLevel {
    pub level: u32,
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Serialize)]
pub struct TraceDoc {
    pub k: u32,
    pub iterations: Vec<TraceLevel>,
}

impl TraceDoc {
    pub fn new(k: u32, trace: &[IterationTrace]) -> Self {
        let iterations = trace
            .iter()
            .map(|it| TraceLevel {
                level: it.level,
                records: it
                    .records
                    .iter()
                    .map(|r| TraceRecord {
                        s: r.s,
                        l_decoded: Num(r.l_decoded),
                        r_decoded: Num(r.r_decoded),
                        v: r.v,
                        a_bits: r.a_bits.clone(),
                        amp_real: Num(r.amp_real),
                        amp_imag: Num(r.amp_imag),
                    })
                    .collect(),
            })
            .collect();
        Self { k, iterations }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).context("serializing report")?;
    s.push('\n');
    Ok(s)
}

/// Writes to `path`, or to stdout when no path is given.
pub fn emit<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let text = to_json(value)?;
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())
                .context("writing to stdout")?;
            out.flush().context("writing to stdout")
        }
    }
}
