//! Packing of the segment tree into QRAM memory cells.
//!
//! Cell `z >= 1` holds the sibling pair `T_{l(z), 2d(z)}`, `T_{l(z), 2d(z)+1}`
//! with `l(z) = floor(log2 z) + 1` and `d(z) = z - 2^floor(log2 z)`. Cell 0
//! holds the root followed by a filler word. Every cell also carries the sign
//! bit of entry `a_z`.

use crate::error::{Error, Result};
use crate::preprocessing::SegTree;

/// Unsigned fixed-point word layout: `int_bits + frac_bits = t` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedPointFormat {
    int_bits: u32,
    frac_bits: u32,
}

impl Default for FixedPointFormat {
    fn default() -> Self {
        Self {
            int_bits: 16,
            frac_bits: 16,
        }
    }
}

impl FixedPointFormat {
    pub fn new(int_bits: u32, frac_bits: u32) -> Result<Self> {
        let t = int_bits + frac_bits;
        if !(2..=64).contains(&t) {
            return Err(Error::Format(format!(
                "word width {t} outside 2..=64 ({int_bits} integer + {frac_bits} fractional bits)"
            )));
        }
        Ok(Self {
            int_bits,
            frac_bits,
        })
    }

    pub fn int_bits(&self) -> u32 {
        self.int_bits
    }

    pub fn frac_bits(&self) -> u32 {
        self.frac_bits
    }

    /// Word width `t`.
    pub fn width(&self) -> u32 {
        self.int_bits + self.frac_bits
    }

    /// Value of one unit in the last place, `2^-frac_bits`.
    pub fn ulp(&self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    fn max_word(&self) -> u64 {
        u64::MAX >> (64 - self.width())
    }

    /// Rounds `x` to the nearest word, ties to even.
    pub fn encode(&self, x: f64) -> Result<u64> {
        let overflow = Error::Overflow {
            value: x,
            int_bits: self.int_bits,
        };
        if x.is_nan() || x < 0.0 || x >= (self.int_bits as f64).exp2() {
            return Err(overflow);
        }
        let scaled = (x * (self.frac_bits as f64).exp2()).round_ties_even();
        // the float max_word rounds up to 2^t when t > 53
        if scaled >= (self.width() as f64).exp2() {
            return Err(overflow);
        }
        let w = scaled as u64;
        if w > self.max_word() {
            return Err(overflow);
        }
        Ok(w)
    }

    pub fn decode(&self, w: u64) -> f64 {
        w as f64 * self.ulp()
    }

    /// Rounds a real onto the format grid.
    pub fn quantize(&self, x: f64) -> Result<f64> {
        self.encode(x).map(|w| self.decode(w))
    }
}

/// Encodes `x` with `fmt`. See [`FixedPointFormat::encode`].
pub fn fp_encode(x: f64, fmt: FixedPointFormat) -> Result<u64> {
    fmt.encode(x)
}

/// Decodes a word with `fmt`. See [`FixedPointFormat::decode`].
pub fn fp_decode(w: u64, fmt: FixedPointFormat) -> f64 {
    fmt.decode(w)
}

/// How node values are basis-encoded in cell words and working registers.
///
/// `Exact` stores the IEEE-754 binary64 bit pattern (a 64-bit word), so
/// decoding returns the stored value unchanged. `Fixed` rounds onto a
/// fixed-point grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Precision {
    Exact,
    Fixed(FixedPointFormat),
}

impl Precision {
    pub fn width(&self) -> u32 {
        match self {
            Precision::Exact => 64,
            Precision::Fixed(fmt) => fmt.width(),
        }
    }

    pub fn encode(&self, x: f64) -> Result<u64> {
        match self {
            Precision::Exact => {
                if x.is_finite() && x >= 0.0 {
                    Ok((x + 0.0).to_bits())
                } else {
                    Err(Error::Overflow {
                        value: x,
                        int_bits: 1024,
                    })
                }
            }
            Precision::Fixed(fmt) => fmt.encode(x),
        }
    }

    pub fn decode(&self, w: u64) -> f64 {
        match self {
            Precision::Exact => f64::from_bits(w),
            Precision::Fixed(fmt) => fmt.decode(w),
        }
    }
}

impl From<FixedPointFormat> for Precision {
    fn from(fmt: FixedPointFormat) -> Self {
        Precision::Fixed(fmt)
    }
}

/// One QRAM cell: sign bit plus two `t`-bit words.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct MemoryCell {
    pub sign: bool,
    pub left: u64,
    pub right: u64,
}

fn check_cell_index(z: usize, leaves: usize) -> Result<()> {
    if z == 0 || z >= leaves {
        return Err(Error::OutOfRange {
            index: z,
            limit: leaves,
        });
    }
    Ok(())
}

/// Tree level `l(z) = floor(log2 z) + 1` of the sibling pair stored in cell `z`.
pub fn level_of(z: usize, leaves: usize) -> Result<u32> {
    check_cell_index(z, leaves)?;
    Ok(z.ilog2() + 1)
}

/// Offset `d(z) = z - 2^floor(log2 z)`; the pair sits at positions `2d, 2d + 1`.
pub fn offset_of(z: usize, leaves: usize) -> Result<usize> {
    check_cell_index(z, leaves)?;
    Ok(z - (1 << z.ilog2()))
}

/// Lays out the tree into `K` cells with a zero filler word in cell 0.
pub fn layout_cells(tree: &SegTree, precision: Precision) -> Result<Vec<MemoryCell>> {
    layout_cells_with_filler(tree, precision, 0)
}

/// Same as [`layout_cells`], with an explicit filler word for cell 0.
pub fn layout_cells_with_filler(
    tree: &SegTree,
    precision: Precision,
    filler: u64,
) -> Result<Vec<MemoryCell>> {
    let leaves = tree.leaf_count();
    let signs = tree.leaf_signs();
    let mut cells = Vec::with_capacity(leaves);
    cells.push(MemoryCell {
        sign: signs[0],
        left: precision.encode(tree.root())?,
        right: filler,
    });
    for (z, &sign) in signs.iter().enumerate().take(leaves).skip(1) {
        let h = level_of(z, leaves)?;
        let d = offset_of(z, leaves)?;
        cells.push(MemoryCell {
            sign,
            left: precision.encode(tree.node(h, 2 * d)?)?,
            right: precision.encode(tree.node(h, 2 * d + 1)?)?,
        });
    }
    Ok(cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocessing::DenseMatrix;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn example_tree() -> SegTree {
        SegTree::build(
            &DenseMatrix::from_rows(&[vec![2.2, 3.1, -3.0, 1.2], vec![0.3, 1.0, 0.5, -2.5]])
                .unwrap(),
        )
    }

    #[test]
    fn level_and_offset() {
        assert_eq!((level_of(1, 8).unwrap(), offset_of(1, 8).unwrap()), (1, 0));
        assert_eq!((level_of(2, 8).unwrap(), offset_of(2, 8).unwrap()), (2, 0));
        assert_eq!((level_of(3, 8).unwrap(), offset_of(3, 8).unwrap()), (2, 1));
        assert_eq!((level_of(7, 8).unwrap(), offset_of(7, 8).unwrap()), (3, 3));
        assert!(level_of(0, 8).is_err());
        assert!(offset_of(8, 8).is_err());
    }

    #[test]
    fn sibling_pairs_cover_every_non_root_node_once() {
        let leaves = 128;
        let mut seen = vec![0u32; 2 * leaves - 1];
        for z in 1..leaves {
            let h = level_of(z, leaves).unwrap();
            let d = offset_of(z, leaves).unwrap();
            seen[SegTree::flat_index(h, 2 * d)] += 1;
            seen[SegTree::flat_index(h, 2 * d + 1)] += 1;
        }
        assert_eq!(seen[0], 0);
        assert!(seen[1..].iter().all(|c| *c == 1));
    }

    #[test]
    fn fixed_point_basics() {
        let fmt = FixedPointFormat::new(8, 16).unwrap();
        assert_eq!(fmt.encode(0.0).unwrap(), 0);
        assert_eq!(fmt.decode(0), 0.0);
        let w = fmt.encode(32.48).unwrap();
        assert!((fmt.decode(w) - 32.48).abs() <= (-17f64).exp2());
        assert!(matches!(fmt.encode(256.0), Err(Error::Overflow { .. })));
        assert!(matches!(fmt.encode(-1.0), Err(Error::Overflow { .. })));
        assert!(matches!(fmt.encode(f64::NAN), Err(Error::Overflow { .. })));
        // just below the top rounds up past the last word
        assert!(fmt.encode(256.0 - (-18f64).exp2()).is_err());
    }

    #[test]
    fn ties_round_to_even() {
        let fmt = FixedPointFormat::new(4, 1).unwrap();
        assert_eq!(fmt.encode(0.25).unwrap(), 0);
        assert_eq!(fmt.encode(0.75).unwrap(), 2);
        assert_eq!(fmt.encode(1.25).unwrap(), 2);
    }

    #[test]
    fn format_width_limits() {
        assert!(FixedPointFormat::new(1, 0).is_err());
        assert!(FixedPointFormat::new(32, 33).is_err());
        assert!(FixedPointFormat::new(16, 48).is_ok());
        let fmt = FixedPointFormat::new(16, 48).unwrap();
        assert!(fmt.encode(65535.9).is_ok());
        assert!(fmt.encode(65536.0).is_err());
        assert_eq!(FixedPointFormat::default().width(), 32);
    }

    #[test]
    fn worked_example_cells() {
        let fmt = FixedPointFormat::new(8, 16).unwrap();
        let cells = layout_cells(&example_tree(), fmt.into()).unwrap();
        let check = |z: usize, sign: bool, l: f64, r: Option<f64>| {
            let c = cells[z];
            assert_eq!(c.sign, sign, "cell {z}");
            assert_eq!(c.left, fmt.encode(l).unwrap(), "cell {z}");
            match r {
                Some(r) => assert_eq!(c.right, fmt.encode(r).unwrap(), "cell {z}"),
                None => assert_eq!(c.right, 0),
            }
        };
        check(0, false, 32.48, None);
        check(1, false, 24.89, Some(7.59));
        check(2, true, 14.45, Some(10.44));
        check(3, false, 1.09, Some(6.50));
        check(4, false, 4.84, Some(9.61));
        check(5, false, 9.00, Some(1.44));
        check(6, false, 0.09, Some(1.00));
        check(7, true, 0.25, Some(6.25));
    }

    #[test]
    fn exact_cells_round_trip() {
        let tree = example_tree();
        let cells = layout_cells(&tree, Precision::Exact).unwrap();
        assert_eq!(Precision::Exact.decode(cells[0].left), tree.root());
        assert_eq!(
            Precision::Exact.decode(cells[7].right),
            tree.node(3, 7).unwrap()
        );
    }

    #[test]
    fn root_overflow_is_an_error() {
        let fmt = FixedPointFormat::new(4, 8).unwrap();
        assert!(matches!(
            layout_cells(&example_tree(), fmt.into()),
            Err(Error::Overflow { .. })
        ));
    }

    proptest! {
        #[test]
        fn encode_error_is_half_ulp(x in 0.0f64..65535.0, frac in 0u32..40) {
            let fmt = FixedPointFormat::new(16, frac).unwrap();
            let w = fmt.encode(x).unwrap();
            let y = fmt.decode(w);
            prop_assert!((y - x).abs() <= fmt.ulp() / 2.0);
            prop_assert_eq!(fmt.encode(y).unwrap(), w);
        }

        #[test]
        fn cells_reconstruct_parents(data in prop::collection::vec(-8.0f64..8.0, 16)) {
            prop_assume!(data.iter().any(|x| *x != 0.0));
            let m = DenseMatrix::pad(4, 4, &data).unwrap();
            let tree = SegTree::build(&m);
            let fmt = FixedPointFormat::new(12, 20).unwrap();
            let cells = layout_cells(&tree, fmt.into()).unwrap();
            let signs: Vec<bool> = cells.iter().map(|c| c.sign).collect();
            prop_assert_eq!(signs.as_slice(), tree.leaf_signs());
            assert_relative_eq!(fmt.decode(cells[0].left), tree.root(), epsilon = fmt.ulp() / 2.0);
            for (z, cell) in cells.iter().enumerate().skip(1) {
                let h = level_of(z, 16).unwrap();
                let d = offset_of(z, 16).unwrap();
                let parent = tree.node(h - 1, d).unwrap();
                let sum = fmt.decode(cell.left) + fmt.decode(cell.right);
                prop_assert!((sum - parent).abs() <= 2.0 * fmt.ulp());
                prop_assert!((fmt.decode(cells[z].left) - tree.node(h, 2 * d).unwrap()).abs() <= fmt.ulp() / 2.0);
            }
        }
    }
}
