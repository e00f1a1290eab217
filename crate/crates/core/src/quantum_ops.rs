//! Sparse-statevector simulation of the working registers.
//!
//! A basis label is `|s⟩|l⟩|r⟩|v⟩|a⟩`: a sign qubit, two `t`-bit value
//! registers, one split qubit and a `k`-bit address register (LSB rightmost).
//! Retrievals are XOR copies through a [`QramTree`], so running the same
//! query twice clears the loaded registers.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::layout::{FixedPointFormat, Precision};
use crate::qram::{FieldSelector, QramTree};

/// Register widths. `s` and `v` are single qubits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegisterLayout {
    pub t: u32,
    pub k: u32,
}

impl RegisterLayout {
    pub fn new(t: u32, k: u32) -> Self {
        Self { t, k }
    }

    pub fn s_width(&self) -> u32 {
        1
    }

    pub fn l_width(&self) -> u32 {
        self.t
    }

    pub fn r_width(&self) -> u32 {
        self.t
    }

    pub fn v_width(&self) -> u32 {
        1
    }

    pub fn a_width(&self) -> u32 {
        self.k
    }

    pub fn total_qubits(&self) -> u32 {
        2 + 2 * self.t + self.k
    }

    fn address_mask(&self) -> usize {
        (1usize << self.k) - 1
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BasisLabel {
    pub s: bool,
    pub l: u64,
    pub r: u64,
    pub v: bool,
    pub a: usize,
}

impl BasisLabel {
    pub fn address(a: usize) -> Self {
        Self {
            a,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Retrieval {
    Root,
    Siblings(u32),
    Signs,
}

#[derive(Debug, Clone, PartialEq)]
struct Pending {
    kind: Retrieval,
    support: BTreeSet<usize>,
    epoch: u64,
}

/// Map from basis labels to amplitudes, holding only nonzero components.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseState {
    layout: RegisterLayout,
    amps: BTreeMap<BasisLabel, Complex64>,
    prune_threshold: f64,
    pending: Option<Pending>,
    address_epoch: u64,
}

impl SparseState {
    /// `|0⟩|0⟩|0⟩|0⟩|0…0⟩` with amplitude 1.
    pub fn new(layout: RegisterLayout) -> Self {
        Self::from_amplitudes(layout, [(BasisLabel::default(), Complex64::new(1.0, 0.0))])
    }

    pub fn from_amplitudes(
        layout: RegisterLayout,
        amps: impl IntoIterator<Item = (BasisLabel, Complex64)>,
    ) -> Self {
        let mut map = BTreeMap::new();
        for (label, amp) in amps {
            *map.entry(label).or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        map.retain(|_, a: &mut Complex64| a.norm() != 0.0);
        Self {
            layout,
            amps: map,
            prune_threshold: 0.0,
            pending: None,
            address_epoch: 0,
        }
    }

    /// Components with magnitude below `threshold` are dropped after each
    /// split. Exact zeros are always dropped.
    pub fn with_prune_threshold(mut self, threshold: f64) -> Self {
        self.prune_threshold = threshold;
        self
    }

    pub fn layout(&self) -> RegisterLayout {
        self.layout
    }

    pub fn amplitudes(&self) -> &BTreeMap<BasisLabel, Complex64> {
        &self.amps
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amps.is_empty()
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }

    /// Distinct address values carrying amplitude.
    pub fn address_support(&self) -> BTreeSet<usize> {
        self.amps.keys().map(|l| l.a).collect()
    }

    /// Multiplies every amplitude by `factor`.
    pub fn scaled(mut self, factor: Complex64) -> Self {
        for amp in self.amps.values_mut() {
            *amp *= factor;
        }
        self
    }

    fn relabel(mut self, f: impl Fn(BasisLabel) -> BasisLabel) -> Self {
        let old = std::mem::take(&mut self.amps);
        for (label, amp) in old {
            *self
                .amps
                .entry(f(label))
                .or_insert(Complex64::new(0.0, 0.0)) += amp;
        }
        self
    }

    /// X gates on the address qubits selected by `mask`.
    pub fn flip_address_bits(mut self, mask: usize) -> Self {
        let mask = mask & self.layout.address_mask();
        self.address_epoch += 1;
        self.relabel(|l| BasisLabel { a: l.a ^ mask, ..l })
    }

    /// X gate on `v`.
    pub fn flip_v(self) -> Self {
        self.relabel(|l| BasisLabel { v: !l.v, ..l })
    }

    fn require(&self, ok: impl Fn(&BasisLabel) -> bool, what: &str) -> Result<()> {
        match self.amps.keys().find(|l| !ok(l)) {
            Some(bad) => Err(Error::PreconditionViolated(format!(
                "{what}; offending label {bad:?}"
            ))),
            None => Ok(()),
        }
    }

    fn xor_retrieve(mut self, qram: &mut QramTree, sel: FieldSelector) -> Result<Self> {
        let support = self.address_support();
        let copied = qram.query(&support, sel)?;
        self = self.relabel(|l| {
            let c = copied[&l.a];
            BasisLabel {
                s: l.s ^ c.sign,
                l: l.l ^ c.left,
                r: l.r ^ c.right,
                ..l
            }
        });
        Ok(self)
    }

    fn begin(mut self, qram: &mut QramTree, kind: Retrieval, sel: FieldSelector) -> Result<Self> {
        let support = self.address_support();
        self = self.xor_retrieve(qram, sel)?;
        self.pending = Some(Pending {
            kind,
            support,
            epoch: self.address_epoch,
        });
        Ok(self)
    }

    fn finish(mut self, qram: &mut QramTree, kind: Retrieval, sel: FieldSelector) -> Result<Self> {
        let pending = match &self.pending {
            Some(p) if p.kind == kind => p,
            _ => {
                return Err(Error::PreconditionViolated(format!(
                    "no pending {kind:?} retrieval to uncompute"
                )))
            }
        };
        if pending.epoch != self.address_epoch || pending.support != self.address_support() {
            return Err(Error::StaleAddress);
        }
        self = self.xor_retrieve(qram, sel)?;
        self.pending = None;
        Ok(self)
    }
}

/// Loads the root word into `l` from cell 0.
pub fn primitive_root(state: SparseState, qram: &mut QramTree) -> Result<SparseState> {
    if state.len() != 1 {
        return Err(Error::PreconditionViolated(format!(
            "root retrieval needs a single basis state, got {} components",
            state.len()
        )));
    }
    state.require(
        |l| l.a == 0 && l.l == 0 && l.r == 0,
        "root retrieval needs a = 0, l = r = 0",
    )?;
    state.begin(qram, Retrieval::Root, FieldSelector::MiddleWord)
}

pub fn uncompute_root(state: SparseState, qram: &mut QramTree) -> Result<SparseState> {
    state.finish(qram, Retrieval::Root, FieldSelector::MiddleWord)
}

fn check_level(state: &SparseState, h: u32) -> Result<()> {
    if h == 0 || h > state.layout.k {
        return Err(Error::PreconditionViolated(format!(
            "level {h} outside 1..={}",
            state.layout.k
        )));
    }
    Ok(())
}

/// Loads the sibling pair of every address `z ∈ [2^(h-1), 2^h)` into `l`, `r`.
pub fn primitive_siblings(state: SparseState, qram: &mut QramTree, h: u32) -> Result<SparseState> {
    check_level(&state, h)?;
    let (lo, hi) = (1usize << (h - 1), 1usize << h);
    state.require(
        |l| (lo..hi).contains(&l.a) && l.l == 0 && l.r == 0,
        &format!("level-{h} retrieval needs a in [{lo}, {hi}) and l = r = 0"),
    )?;
    state.begin(qram, Retrieval::Siblings(h), FieldSelector::BothWords)
}

/// Clears `l`, `r` by repeating the level-`h` sibling retrieval.
pub fn uncompute_lr(state: SparseState, qram: &mut QramTree, h: u32) -> Result<SparseState> {
    check_level(&state, h)?;
    state.finish(qram, Retrieval::Siblings(h), FieldSelector::BothWords)
}

/// XORs the sign bit of entry `a` into `s` for every address in the support.
pub fn primitive_signs(state: SparseState, qram: &mut QramTree) -> Result<SparseState> {
    state.require(|l| l.l == 0 && l.r == 0, "sign retrieval needs l = r = 0")?;
    state.begin(qram, Retrieval::Signs, FieldSelector::SignBit)
}

pub fn uncompute_signs(state: SparseState, qram: &mut QramTree) -> Result<SparseState> {
    state.finish(qram, Retrieval::Signs, FieldSelector::SignBit)
}

/// `(cos θ/2, sin θ/2)`, the action of `Ry(θ)` on `|0⟩`.
pub fn direct_ry(theta: f64) -> (f64, f64) {
    let half = theta / 2.0;
    (half.cos(), half.sin())
}

/// Applies one controlled `Ry` per set bit of the angle word, most
/// significant bit first, starting from `|0⟩`.
pub fn cascade_ry(theta_word: u64, fmt: FixedPointFormat) -> Result<(f64, f64)> {
    if theta_word == 0 {
        return Err(Error::ZeroAngle);
    }
    let (mut c, mut s) = (1.0f64, 0.0f64);
    for bit in (0..fmt.width()).rev() {
        if theta_word >> bit & 1 == 1 {
            let phi = (bit as f64 - fmt.frac_bits() as f64).exp2();
            let (rc, rs) = direct_ry(phi);
            (c, s) = (rc * c - rs * s, rs * c + rc * s);
        }
    }
    Ok((c, s))
}

/// Fixed-point arithmetic behind the split: sum, quotient `b / (a + b)`,
/// square root, arcsine and doubling, each rounded onto `fmt`. Returns the
/// angle word and the weights produced by the rotation cascade.
pub fn u2cr_fixed_pipeline(
    a_word: u64,
    b_word: u64,
    fmt: FixedPointFormat,
) -> Result<(u64, (f64, f64))> {
    let overflow = |value: f64| Error::Overflow {
        value,
        int_bits: fmt.int_bits(),
    };
    let sum_word = a_word.checked_add(b_word).ok_or(overflow(f64::INFINITY))?;
    let sum = fmt.decode(sum_word);
    if fmt.width() < 64 && sum_word >> fmt.width() != 0 {
        return Err(overflow(sum));
    }
    if sum_word == 0 {
        return Err(Error::PreconditionViolated(
            "fixed-point split needs a + b > 0".into(),
        ));
    }
    let b = fmt.decode(b_word);
    let ratio = fmt.quantize(b / sum)?;
    let root = fmt.quantize(ratio.sqrt())?;
    let half_angle = fmt.encode(root.min(1.0).asin())?;
    let theta_word = half_angle << 1;
    if fmt.width() < 64 && theta_word >> fmt.width() != 0 {
        return Err(overflow(2.0 * fmt.decode(half_angle)));
    }
    if theta_word == 0 {
        return Ok((0, (1.0, 0.0)));
    }
    Ok((theta_word, cascade_ry(theta_word, fmt)?))
}

/// Split weights `(w0, w1)` for the register contents `(l, r)`.
pub fn u2cr_weights(l_word: u64, r_word: u64, mode: Precision) -> Result<(f64, f64)> {
    match mode {
        Precision::Exact => {
            let a = mode.decode(l_word);
            let b = mode.decode(r_word);
            for x in [a, b] {
                if !(x.is_finite() && x >= 0.0) {
                    return Err(Error::NegativeDecode(x));
                }
            }
            let sum = a + b;
            if sum == 0.0 {
                return Ok((FRAC_1_SQRT_2, FRAC_1_SQRT_2));
            }
            Ok(((a / sum).sqrt(), (b / sum).sqrt()))
        }
        Precision::Fixed(fmt) => {
            if l_word == 0 && r_word == 0 {
                return Ok((FRAC_1_SQRT_2, FRAC_1_SQRT_2));
            }
            u2cr_fixed_pipeline(l_word, r_word, fmt).map(|(_, w)| w)
        }
    }
}

/// Splits every label on `v` according to the values held in `l`, `r`.
pub fn u2cr(mut state: SparseState, mode: Precision) -> Result<SparseState> {
    state.require(|l| !l.v, "split needs v = 0")?;
    let threshold = state.prune_threshold;
    let old = std::mem::take(&mut state.amps);
    let mut weights = BTreeMap::new();
    for (label, amp) in old {
        let key = (label.l, label.r);
        let (w0, w1) = match weights.get(&key) {
            Some(w) => *w,
            None => {
                let w = u2cr_weights(label.l, label.r, mode)?;
                weights.insert(key, w);
                w
            }
        };
        for (v, w) in [(false, w0), (true, w1)] {
            let out = amp * w;
            let mag = out.norm();
            if mag == 0.0 || mag < threshold {
                continue;
            }
            state.amps.insert(BasisLabel { v, ..label }, out);
        }
    }
    Ok(state)
}

/// Left rotation of the bit string `v ∥ a`: `v` takes the address MSB, the
/// address moves one place up and its LSB takes the old `v`.
pub fn circular_shift_left(mut state: SparseState) -> SparseState {
    let k = state.layout.k;
    let mask = state.layout.address_mask();
    state.address_epoch += 1;
    state.relabel(|l| BasisLabel {
        v: (l.a >> (k - 1)) & 1 == 1,
        a: ((l.a << 1) & mask) | l.v as usize,
        ..l
    })
}

/// Inverse of [`circular_shift_left`].
pub fn circular_shift_right(mut state: SparseState) -> SparseState {
    let k = state.layout.k;
    state.address_epoch += 1;
    state.relabel(|l| BasisLabel {
        v: l.a & 1 == 1,
        a: (l.a >> 1) | ((l.v as usize) << (k - 1)),
        ..l
    })
}

/// Controlled-Z between `s` and `v`.
pub fn cz_sign(mut state: SparseState) -> SparseState {
    for (label, amp) in state.amps.iter_mut() {
        if label.s && label.v {
            *amp = -*amp;
        }
    }
    state
}

/// One row of a state dump.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateRecord {
    pub s: u8,
    pub l_decoded: f64,
    pub r_decoded: f64,
    pub v: u8,
    pub a_bits: String,
    pub amp_real: f64,
    pub amp_imag: f64,
}

/// Dumps the state sorted by address (then by the remaining registers).
pub fn dump_state(state: &SparseState, mode: Precision) -> Vec<StateRecord> {
    let k = state.layout.k as usize;
    let mut rows: Vec<_> = state.amps.iter().collect();
    rows.sort_by_key(|(l, _)| (l.a, l.v, l.s, l.l, l.r));
    rows.into_iter()
        .map(|(l, amp)| StateRecord {
            s: l.s as u8,
            l_decoded: mode.decode(l.l),
            r_decoded: mode.decode(l.r),
            v: l.v as u8,
            a_bits: format!("{:0k$b}", l.a),
            amp_real: amp.re,
            amp_imag: amp.im,
        })
        .collect()
}
