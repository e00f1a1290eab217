//! Bucket-brigade QRAM switch tree with step accounting.
//!
//! The tree has `2^k - 1` three-state switches above `K = 2^k` memory cells.
//! Switch `i` has children `2i + 1` (address bit 0) and `2i + 2` (address
//! bit 1); the root consumes the most significant address bit.
//!
//! Cost unit: one packet crossing one tree level, or one constant-time
//! CNOT/SWAP layer. Routing is pipelined and charged `k` units. A full query
//! costs `k` (route) + `2k` (bus down and up) + `2` (copy into the bus, copy
//! out to the working register) + `k` (uncompute) = `4k + 2`. A write costs
//! `4k + 1`: the two copies are replaced by a single swap.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::layout::MemoryCell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SwitchState {
    Wait,
    Zero,
    One,
    /// Reached by addresses on both branches.
    Superposed,
}

impl SwitchState {
    fn absorb(self, bit: bool) -> Self {
        match (self, bit) {
            (SwitchState::Wait, false) => SwitchState::Zero,
            (SwitchState::Wait, true) => SwitchState::One,
            (SwitchState::Zero, true) | (SwitchState::One, false) => SwitchState::Superposed,
            (s, _) => s,
        }
    }
}

/// Which slice of a `(1 + 2t)`-bit cell the bus copies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldSelector {
    SignBit,
    /// The first data word (the root in cell 0).
    MiddleWord,
    BothWords,
}

impl FieldSelector {
    /// Number of qubits copied for a `t`-bit word width.
    pub fn width(&self, t: u32) -> u32 {
        match self {
            FieldSelector::SignBit => 1,
            FieldSelector::MiddleWord => t,
            FieldSelector::BothWords => 2 * t,
        }
    }

    /// The cell with everything outside the selection zeroed.
    pub fn mask(&self, cell: &MemoryCell) -> MemoryCell {
        match self {
            FieldSelector::SignBit => MemoryCell {
                sign: cell.sign,
                ..MemoryCell::default()
            },
            FieldSelector::MiddleWord => MemoryCell {
                left: cell.left,
                ..MemoryCell::default()
            },
            FieldSelector::BothWords => MemoryCell {
                left: cell.left,
                right: cell.right,
                ..MemoryCell::default()
            },
        }
    }
}

/// Step counters. All fields only ever grow.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize)]
pub struct StepCounters {
    pub routing_steps: u64,
    pub bus_steps: u64,
    pub copy_ops: u64,
    pub uncompute_steps: u64,
    pub queries: u64,
    pub writes: u64,
}

impl StepCounters {
    /// Sum of all time-step units (routing, bus, copies, uncompute).
    pub fn total_units(&self) -> u64 {
        self.routing_steps + self.bus_steps + self.copy_ops + self.uncompute_steps
    }

    /// Counter growth since an earlier snapshot.
    pub fn since(&self, earlier: &StepCounters) -> StepCounters {
        StepCounters {
            routing_steps: self.routing_steps - earlier.routing_steps,
            bus_steps: self.bus_steps - earlier.bus_steps,
            copy_ops: self.copy_ops - earlier.copy_ops,
            uncompute_steps: self.uncompute_steps - earlier.uncompute_steps,
            queries: self.queries - earlier.queries,
            writes: self.writes - earlier.writes,
        }
    }
}

/// Units charged by one query on a tree of depth `k`.
pub fn query_units(k: u32) -> u64 {
    4 * k as u64 + 2
}

/// Units charged by one cell write on a tree of depth `k`.
pub fn write_units(k: u32) -> u64 {
    4 * k as u64 + 1
}

/// Leaves reached by one routing pass. Only valid until the matching
/// [`QramTree::uncompute_route`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivePaths {
    leaves: BTreeSet<usize>,
    generation: u64,
}

impl ActivePaths {
    pub fn leaves(&self) -> &BTreeSet<usize> {
        &self.leaves
    }
}

#[derive(Debug, Clone)]
pub struct QramTree {
    depth: u32,
    switches: Vec<SwitchState>,
    cells: Vec<MemoryCell>,
    counters: StepCounters,
    bus: MemoryCell,
    active: Option<u64>,
    generation: u64,
}

impl QramTree {
    /// An idle tree over `2^depth` zeroed cells.
    pub fn new(depth: u32) -> Self {
        let leaves = 1usize << depth;
        Self {
            depth,
            switches: vec![SwitchState::Wait; leaves - 1],
            cells: vec![MemoryCell::default(); leaves],
            counters: StepCounters::default(),
            bus: MemoryCell::default(),
            active: None,
            generation: 0,
        }
    }

    /// Loads cells directly, without charging write costs.
    pub fn with_cells(cells: Vec<MemoryCell>) -> Result<Self> {
        if !cells.len().is_power_of_two() {
            return Err(Error::Shape(format!(
                "cell count {} is not a power of two",
                cells.len()
            )));
        }
        let mut tree = Self::new(cells.len().trailing_zeros());
        tree.cells = cells;
        Ok(tree)
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn leaf_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[MemoryCell] {
        &self.cells
    }

    pub fn cell(&self, z: usize) -> Result<&MemoryCell> {
        self.cells.get(z).ok_or(Error::OutOfRange {
            index: z,
            limit: self.cells.len(),
        })
    }

    pub fn switches(&self) -> &[SwitchState] {
        &self.switches
    }

    pub fn counters(&self) -> StepCounters {
        self.counters
    }

    pub fn all_wait(&self) -> bool {
        self.switches.iter().all(|s| *s == SwitchState::Wait)
    }

    pub fn bus_is_clear(&self) -> bool {
        self.bus == MemoryCell::default()
    }

    /// Switch indices on the root-to-leaf path of `addr`, root first.
    fn path(&self, addr: usize) -> impl Iterator<Item = (usize, bool)> + '_ {
        let k = self.depth;
        (0..k).scan(0usize, move |idx, level| {
            let here = *idx;
            let bit = (addr >> (k - 1 - level)) & 1 == 1;
            *idx = 2 * here + 1 + bit as usize;
            Some((here, bit))
        })
    }

    /// Routes the address support down the tree, setting every switch on the
    /// union of paths.
    pub fn route(&mut self, support: &BTreeSet<usize>) -> Result<ActivePaths> {
        if support.is_empty() {
            return Err(Error::EmptySupport);
        }
        if let Some(&addr) = support.iter().find(|a| **a >= self.cells.len()) {
            return Err(Error::OutOfRange {
                index: addr,
                limit: self.cells.len(),
            });
        }
        if let Some(idx) = self.switches.iter().position(|s| *s != SwitchState::Wait) {
            return Err(Error::DirtyTree(idx));
        }
        for &addr in support {
            let steps: Vec<_> = self.path(addr).collect();
            for (idx, bit) in steps {
                self.switches[idx] = self.switches[idx].absorb(bit);
            }
        }
        self.counters.routing_steps += self.depth as u64;
        self.generation += 1;
        self.active = Some(self.generation);
        Ok(ActivePaths {
            leaves: support.clone(),
            generation: self.generation,
        })
    }

    fn check_active(&self, paths: &ActivePaths) -> Result<()> {
        if self.active != Some(paths.generation) {
            return Err(Error::PathMismatch);
        }
        // every leaf must be reachable through the current switch settings
        for &leaf in &paths.leaves {
            for (idx, bit) in self.path(leaf) {
                let ok = match self.switches[idx] {
                    SwitchState::Superposed => true,
                    SwitchState::Zero => !bit,
                    SwitchState::One => bit,
                    SwitchState::Wait => false,
                };
                if !ok {
                    return Err(Error::PathMismatch);
                }
            }
        }
        Ok(())
    }

    /// Sends the bus down the active paths, XOR-copies the selected field of
    /// each reached cell, and brings it back to the root.
    pub fn bus_transfer(
        &mut self,
        paths: &ActivePaths,
        sel: FieldSelector,
    ) -> Result<BTreeMap<usize, MemoryCell>> {
        self.check_active(paths)?;
        let copied = paths
            .leaves
            .iter()
            .map(|&z| (z, sel.mask(&self.cells[z])))
            .collect();
        self.counters.bus_steps += 2 * self.depth as u64;
        self.counters.copy_ops += 2;
        Ok(copied)
    }

    /// Reverses the routing, returning every switch to the wait state.
    pub fn uncompute_route(&mut self, paths: &ActivePaths) -> Result<()> {
        self.check_active(paths)?;
        for &leaf in &paths.leaves {
            let steps: Vec<_> = self.path(leaf).map(|(idx, _)| idx).collect();
            for idx in steps {
                self.switches[idx] = SwitchState::Wait;
            }
        }
        self.counters.uncompute_steps += self.depth as u64;
        self.active = None;
        Ok(())
    }

    /// One full retrieval: route, bus transfer, uncompute.
    pub fn query(
        &mut self,
        support: &BTreeSet<usize>,
        sel: FieldSelector,
    ) -> Result<BTreeMap<usize, MemoryCell>> {
        let paths = self.route(support)?;
        let copied = self.bus_transfer(&paths, sel)?;
        self.uncompute_route(&paths)?;
        self.counters.queries += 1;
        Ok(copied)
    }

    /// Swaps `cell` into slot `z` through the bus, then clears the bus.
    pub fn write_cell(&mut self, z: usize, cell: MemoryCell) -> Result<()> {
        if z >= self.cells.len() {
            return Err(Error::OutOfRange {
                index: z,
                limit: self.cells.len(),
            });
        }
        let paths = self.route(&BTreeSet::from([z]))?;
        self.bus = cell;
        self.counters.bus_steps += self.depth as u64;
        std::mem::swap(&mut self.bus, &mut self.cells[z]);
        self.counters.copy_ops += 1;
        self.counters.bus_steps += self.depth as u64;
        self.bus = MemoryCell::default();
        self.uncompute_route(&paths)?;
        self.counters.writes += 1;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{layout_cells, FixedPointFormat};
    use crate::preprocessing::{DenseMatrix, SegTree};
    use SwitchState::*;

    fn example_cells() -> (FixedPointFormat, Vec<MemoryCell>) {
        let m = DenseMatrix::from_rows(&[vec![2.2, 3.1, -3.0, 1.2], vec![0.3, 1.0, 0.5, -2.5]])
            .unwrap();
        let fmt = FixedPointFormat::default();
        (fmt, layout_cells(&SegTree::build(&m), fmt.into()).unwrap())
    }

    #[test]
    fn single_path_routing() {
        let mut q = QramTree::new(3);
        let paths = q.route(&BTreeSet::from([0b001])).unwrap();
        assert_eq!(paths.leaves(), &BTreeSet::from([1]));
        // root, its left child, then the left-left switch
        assert_eq!(q.switches()[0], Zero);
        assert_eq!(q.switches()[1], Zero);
        assert_eq!(q.switches()[3], One);
        let active = q.switches().iter().filter(|s| **s != Wait).count();
        assert_eq!(active, 3);
        assert_eq!(q.counters().routing_steps, 3);
    }

    #[test]
    fn branching_routing() {
        let mut q = QramTree::new(3);
        let paths = q.route(&BTreeSet::from([0b010, 0b011])).unwrap();
        assert_eq!(paths.leaves(), &BTreeSet::from([2, 3]));
        assert_eq!(q.switches()[0], Zero);
        assert_eq!(q.switches()[1], One);
        assert_eq!(q.switches()[4], Superposed);
        assert_eq!(q.counters().routing_steps, 3);
    }

    #[test]
    fn full_support_activates_every_switch() {
        let mut q = QramTree::new(3);
        let all: BTreeSet<usize> = (0..8).collect();
        let paths = q.route(&all).unwrap();
        assert_eq!(paths.leaves(), &all);
        assert!(q.switches().iter().all(|s| *s == Superposed));
    }

    #[test]
    fn route_rejects_dirty_tree_and_bad_support() {
        let mut q = QramTree::new(2);
        assert_eq!(q.route(&BTreeSet::new()), Err(Error::EmptySupport));
        assert!(matches!(
            q.route(&BTreeSet::from([4])),
            Err(Error::OutOfRange { .. })
        ));
        let _p = q.route(&BTreeSet::from([1])).unwrap();
        assert_eq!(q.route(&BTreeSet::from([2])), Err(Error::DirtyTree(0)));
    }

    #[test]
    fn bus_reads_selected_fields() {
        let (fmt, cells) = example_cells();
        let mut q = QramTree::with_cells(cells).unwrap();
        let got = q
            .query(&BTreeSet::from([1]), FieldSelector::MiddleWord)
            .unwrap();
        assert_eq!(got[&1].left, fmt.encode(24.89).unwrap());
        assert_eq!((got[&1].right, got[&1].sign), (0, false));

        let got = q
            .query(&BTreeSet::from([0]), FieldSelector::MiddleWord)
            .unwrap();
        assert_eq!(got[&0].left, fmt.encode(32.48).unwrap());
        assert_eq!(got[&0].right, 0);

        let got = q
            .query(&BTreeSet::from([2, 3]), FieldSelector::BothWords)
            .unwrap();
        assert_eq!(got[&2].right, fmt.encode(10.44).unwrap());
        assert_eq!(got[&3].left, fmt.encode(1.09).unwrap());
        assert!(!got[&2].sign);
    }

    #[test]
    fn sign_copy_is_self_inverse() {
        let (_, cells) = example_cells();
        let mut q = QramTree::with_cells(cells).unwrap();
        let mut target = false;
        for _ in 0..2 {
            let got = q
                .query(&BTreeSet::from([2]), FieldSelector::SignBit)
                .unwrap();
            target ^= got[&2].sign;
        }
        assert!(!target);
    }

    #[test]
    fn bus_and_uncompute_need_active_paths() {
        let mut q = QramTree::new(3);
        let paths = q.route(&BTreeSet::from([5])).unwrap();
        q.uncompute_route(&paths).unwrap();
        assert!(q.all_wait());
        assert_eq!(
            q.bus_transfer(&paths, FieldSelector::SignBit),
            Err(Error::PathMismatch)
        );
        assert_eq!(q.uncompute_route(&paths), Err(Error::PathMismatch));
        let _fresh = q.route(&BTreeSet::from([2, 6])).unwrap();
        assert_eq!(
            q.bus_transfer(&paths, FieldSelector::SignBit),
            Err(Error::PathMismatch)
        );
    }

    #[test]
    fn route_uncompute_route_again() {
        let mut q = QramTree::new(3);
        let p = q.route(&BTreeSet::from([1])).unwrap();
        q.uncompute_route(&p).unwrap();
        let p = q.route(&BTreeSet::from([4, 5, 6, 7])).unwrap();
        assert!(!q.all_wait());
        q.uncompute_route(&p).unwrap();
        assert!(q.all_wait());
    }

    #[test]
    fn query_cost_is_independent_of_support() {
        for k in 1..=6 {
            let mut q = QramTree::new(k);
            q.query(&BTreeSet::from([0]), FieldSelector::SignBit)
                .unwrap();
            let single = q.counters().total_units();
            let all: BTreeSet<usize> = (0..1 << k).collect();
            q.query(&all, FieldSelector::BothWords).unwrap();
            assert_eq!(single, query_units(k));
            assert_eq!(q.counters().total_units(), 2 * query_units(k));
            assert_eq!(q.counters().queries, 2);
            assert!(q.all_wait());
        }
    }

    #[test]
    fn writes_round_trip_and_cost() {
        let (_, cells) = example_cells();
        let mut q = QramTree::new(3);
        for (z, c) in cells.iter().enumerate() {
            q.write_cell(z, *c).unwrap();
            assert!(q.all_wait() && q.bus_is_clear());
        }
        assert_eq!(q.counters().total_units(), 8 * write_units(3));
        assert_eq!(q.counters().writes, 8);
        assert_eq!(q.cells(), cells.as_slice());

        let got = q
            .query(&BTreeSet::from([5]), FieldSelector::BothWords)
            .unwrap();
        assert_eq!(
            (got[&5].left, got[&5].right),
            (cells[5].left, cells[5].right)
        );

        q.write_cell(5, cells[2]).unwrap();
        assert!(q.bus_is_clear());
        assert_eq!(q.cell(5).unwrap(), &cells[2]);
        assert!(q.write_cell(8, cells[0]).is_err());
    }

    #[test]
    fn identical_sequences_give_identical_counters() {
        let run = || {
            let mut q = QramTree::new(4);
            for s in [vec![1], vec![2, 3], vec![4, 5, 6, 7]] {
                q.query(&s.into_iter().collect(), FieldSelector::BothWords)
                    .unwrap();
            }
            q.counters()
        };
        assert_eq!(run(), run());
    }
}
