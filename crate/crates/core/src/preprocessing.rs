//! Matrix ingest and the segment tree of squared entries.

use crate::error::{Error, Result};

/// A real matrix padded to power-of-two dimensions, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    orig_rows: usize,
    orig_cols: usize,
    entries: Vec<f64>,
}

impl DenseMatrix {
    /// Pads a row-major `rows x cols` block to power-of-two dimensions.
    ///
    /// New cells are zero. A single-entry matrix is widened to `1 x 2` so the
    /// address register always has at least one qubit.
    pub fn pad(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("{rows}x{cols} matrix is empty")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                data.len()
            )));
        }
        for (z, x) in data.iter().enumerate() {
            if !x.is_finite() {
                return Err(Error::NonFinite {
                    row: z / cols,
                    col: z % cols,
                });
            }
        }
        if data.iter().all(|x| *x == 0.0) {
            return Err(Error::ZeroMatrix);
        }

        let padded_rows = rows.next_power_of_two();
        let mut padded_cols = cols.next_power_of_two();
        if padded_rows * padded_cols < 2 {
            padded_cols = 2;
        }
        let mut entries = vec![0.0; padded_rows * padded_cols];
        for i in 0..rows {
            for j in 0..cols {
                // -0.0 + 0.0 == +0.0
                entries[i * padded_cols + j] = data[i * cols + j] + 0.0;
            }
        }
        Ok(Self {
            rows: padded_rows,
            cols: padded_cols,
            orig_rows: rows,
            orig_cols: cols,
            entries,
        })
    }

    /// Builds from a list of rows; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != cols) {
            return Err(Error::Shape(format!(
                "row {bad} has {} entries, expected {cols}",
                rows[bad].len()
            )));
        }
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::pad(rows.len(), cols, &data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn orig_rows(&self) -> usize {
        self.orig_rows
    }

    pub fn orig_cols(&self) -> usize {
        self.orig_cols
    }

    /// Total number of (padded) entries, `K = rows * cols`.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Address width `k = log2 K`.
    pub fn address_bits(&self) -> u32 {
        self.entries.len().trailing_zeros()
    }

    /// Row-major entries `a_z`.
    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        Ok(self.entries[self.index_of(i, j)?])
    }

    pub fn index_of(&self, i: usize, j: usize) -> Result<usize> {
        if i >= self.rows {
            return Err(Error::OutOfRange {
                index: i,
                limit: self.rows,
            });
        }
        row_major(i, j, self.cols)
    }

    pub fn position(&self, z: usize) -> Result<(usize, usize)> {
        if z >= self.entries.len() {
            return Err(Error::OutOfRange {
                index: z,
                limit: self.entries.len(),
            });
        }
        unflatten(z, self.cols)
    }

    /// Squared Frobenius norm by direct summation.
    pub fn frobenius_sq(&self) -> f64 {
        self.entries.iter().map(|x| x * x).sum()
    }

    /// Replaces one entry, keeping the matrix nonzero.
    pub fn set(&mut self, z: usize, value: f64) -> Result<()> {
        if z >= self.entries.len() {
            return Err(Error::OutOfRange {
                index: z,
                limit: self.entries.len(),
            });
        }
        if !value.is_finite() {
            let (row, col) = unflatten(z, self.cols)?;
            return Err(Error::NonFinite { row, col });
        }
        let old = std::mem::replace(&mut self.entries[z], value + 0.0);
        if self.entries.iter().all(|x| *x == 0.0) {
            self.entries[z] = old;
            return Err(Error::ZeroMatrix);
        }
        Ok(())
    }
}

/// Pads a raw row-major matrix. See [`DenseMatrix::pad`].
pub fn pad_matrix(raw: &[f64], rows: usize, cols: usize) -> Result<DenseMatrix> {
    DenseMatrix::pad(rows, cols, raw)
}

/// Row-major flat index `z = i * cols + j`.
pub fn row_major(i: usize, j: usize, cols: usize) -> Result<usize> {
    if j >= cols {
        return Err(Error::OutOfRange {
            index: j,
            limit: cols,
        });
    }
    Ok(i * cols + j)
}

/// Inverse of [`row_major`]: `(z / cols, z % cols)`.
pub fn unflatten(z: usize, cols: usize) -> Result<(usize, usize)> {
    if cols == 0 {
        return Err(Error::OutOfRange { index: z, limit: 0 });
    }
    Ok((z / cols, z % cols))
}

/// Sign bit of an entry: set only for strictly negative values.
pub fn sign_bit(x: f64) -> bool {
    x < 0.0
}

/// Array-backed segment tree over the squared entries of a matrix.
///
/// Node `(h, p)` lives at flat index `2^h + p - 1`, so the root is at 0 and
/// the children of flat index `i` are `2i + 1` and `2i + 2`. Leaves sit at
/// height `k` and carry the sign of the original entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SegTree {
    depth: u32,
    nodes: Vec<f64>,
    leaf_signs: Vec<bool>,
}

impl SegTree {
    /// Builds the tree bottom-up, touching each node once.
    pub fn build(m: &DenseMatrix) -> Self {
        let leaves = m.len();
        let mut nodes = vec![0.0; 2 * leaves - 1];
        for (z, a) in m.entries().iter().enumerate() {
            nodes[leaves - 1 + z] = a * a;
        }
        for i in (0..leaves - 1).rev() {
            nodes[i] = nodes[2 * i + 1] + nodes[2 * i + 2];
        }
        Self {
            depth: m.address_bits(),
            nodes,
            leaf_signs: m.entries().iter().map(|a| sign_bit(*a)).collect(),
        }
    }

    /// Tree depth `k`; leaves are at height `k`.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_signs.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn leaf_signs(&self) -> &[bool] {
        &self.leaf_signs
    }

    /// Squared Frobenius norm held at the root.
    pub fn root(&self) -> f64 {
        self.nodes[0]
    }

    pub fn frobenius(&self) -> f64 {
        self.nodes[0].sqrt()
    }

    pub fn flat_index(h: u32, p: usize) -> usize {
        (1usize << h) + p - 1
    }

    /// Node `T_{h,p}`.
    pub fn node(&self, h: u32, p: usize) -> Result<f64> {
        if h > self.depth {
            return Err(Error::OutOfRange {
                index: h as usize,
                limit: self.depth as usize + 1,
            });
        }
        if p >= 1usize << h {
            return Err(Error::OutOfRange {
                index: p,
                limit: 1 << h,
            });
        }
        Ok(self.nodes[Self::flat_index(h, p)])
    }

    pub fn leaf(&self, z: usize) -> Result<f64> {
        self.node(self.depth, z)
    }

    /// Sets entry `z` to `value`, recomputing the `k + 1` nodes on its root path.
    pub fn update_entry(&mut self, z: usize, value: f64) -> Result<()> {
        let leaves = self.leaf_count();
        if z >= leaves {
            return Err(Error::OutOfRange {
                index: z,
                limit: leaves,
            });
        }
        if !value.is_finite() {
            return Err(Error::NonFinite { row: 0, col: z });
        }
        let value = value + 0.0;
        let mut i = leaves - 1 + z;
        self.nodes[i] = value * value;
        self.leaf_signs[z] = sign_bit(value);
        while i > 0 {
            i = (i - 1) / 2;
            self.nodes[i] = self.nodes[2 * i + 1] + self.nodes[2 * i + 2];
        }
        Ok(())
    }
}

/// Builds the segment tree of squared entries. See [`SegTree::build`].
pub fn build_segment_tree(m: &DenseMatrix) -> SegTree {
    SegTree::build(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    pub(crate) fn example_matrix() -> DenseMatrix {
        DenseMatrix::from_rows(&[vec![2.2, 3.1, -3.0, 1.2], vec![0.3, 1.0, 0.5, -2.5]]).unwrap()
    }

    #[test]
    fn pads_columns_with_zeros() {
        let m = DenseMatrix::pad(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!((m.rows(), m.cols()), (2, 4));
        assert_eq!((m.orig_rows(), m.orig_cols()), (2, 3));
        assert_eq!(m.get(0, 3).unwrap(), 0.0);
        assert_eq!(m.get(1, 3).unwrap(), 0.0);
        assert_eq!(m.get(1, 2).unwrap(), 6.0);
    }

    #[test]
    fn power_of_two_input_is_unchanged() {
        let m = example_matrix();
        assert_eq!((m.rows(), m.cols()), (2, 4));
        assert_eq!(m.entries(), &[2.2, 3.1, -3.0, 1.2, 0.3, 1.0, 0.5, -2.5]);
    }

    #[test]
    fn single_entry_is_widened() {
        let m = DenseMatrix::pad(1, 1, &[-4.0]).unwrap();
        assert_eq!((m.rows(), m.cols()), (1, 2));
        assert_eq!(m.address_bits(), 1);
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(DenseMatrix::pad(2, 2, &[0.0; 4]), Err(Error::ZeroMatrix));
        assert_eq!(
            DenseMatrix::pad(2, 2, &[1.0, f64::NAN, 0.0, 0.0]),
            Err(Error::NonFinite { row: 0, col: 1 })
        );
        assert_eq!(
            DenseMatrix::pad(2, 2, &[1.0, 0.0, f64::INFINITY, 0.0]),
            Err(Error::NonFinite { row: 1, col: 0 })
        );
        assert!(matches!(DenseMatrix::pad(0, 2, &[]), Err(Error::Shape(_))));
        assert!(matches!(
            DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0]]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn negative_zero_is_normalized() {
        let m = DenseMatrix::pad(1, 2, &[-0.0, 1.0]).unwrap();
        assert!(m.entries()[0].is_sign_positive());
        let t = SegTree::build(&m);
        assert!(!t.leaf_signs()[0]);
    }

    #[test]
    fn row_major_indexing() {
        assert_eq!(row_major(0, 0, 4).unwrap(), 0);
        assert_eq!(row_major(1, 3, 4).unwrap(), 7);
        assert_eq!(unflatten(7, 4).unwrap(), (1, 3));
        assert!(row_major(0, 4, 4).is_err());
        let m = example_matrix();
        assert!(m.index_of(2, 0).is_err());
        assert!(m.position(8).is_err());
    }

    #[test]
    fn row_major_bijection_exhaustive() {
        for z in 0..64 {
            let (i, j) = unflatten(z, 8).unwrap();
            assert!(i < 8 && j < 8);
            assert_eq!(row_major(i, j, 8).unwrap(), z);
        }
    }

    #[test]
    fn worked_example_tree() {
        let t = SegTree::build(&example_matrix());
        assert_eq!(t.depth(), 3);
        assert_eq!(t.nodes().len(), 15);
        let leaves = [4.84, 9.61, 9.00, 1.44, 0.09, 1.00, 0.25, 6.25];
        for (z, want) in leaves.iter().enumerate() {
            assert_relative_eq!(t.leaf(z).unwrap(), want, max_relative = 1e-12);
        }
        for (p, want) in [14.45, 10.44, 1.09, 6.50].iter().enumerate() {
            assert_relative_eq!(t.node(2, p).unwrap(), want, max_relative = 1e-12);
        }
        assert_relative_eq!(t.node(1, 0).unwrap(), 24.89, max_relative = 1e-12);
        assert_relative_eq!(t.node(1, 1).unwrap(), 7.59, max_relative = 1e-12);
        assert_relative_eq!(t.root(), 32.48, max_relative = 1e-12);
        assert_eq!(
            t.leaf_signs(),
            &[false, false, true, false, false, false, false, true]
        );
    }

    #[test]
    fn unit_leaf_tree() {
        let m = DenseMatrix::pad(2, 2, &[1.0, 0.0, 0.0, 0.0]).unwrap();
        let t = SegTree::build(&m);
        assert_eq!(t.root(), 1.0);
        assert_eq!(t.leaf(0).unwrap(), 1.0);
        assert!((1..4).all(|z| t.leaf(z).unwrap() == 0.0));
    }

    #[test]
    fn update_matches_rebuild() {
        let mut m = example_matrix();
        let mut t = SegTree::build(&m);
        t.update_entry(0, 0.0).unwrap();
        m.set(0, 0.0).unwrap();
        assert_eq!(t, SegTree::build(&m));
        assert_relative_eq!(t.root(), 32.48 - 4.84, max_relative = 1e-12);
    }

    #[test]
    fn update_same_value_is_idempotent() {
        let m = example_matrix();
        let mut t = SegTree::build(&m);
        t.update_entry(6, 0.5).unwrap();
        assert_eq!(t, SegTree::build(&m));
        assert!(t.update_entry(8, 1.0).is_err());
    }

    #[test]
    fn node_accessor_bounds() {
        let t = SegTree::build(&example_matrix());
        assert!(t.node(4, 0).is_err());
        assert!(t.node(1, 2).is_err());
        assert_eq!(SegTree::flat_index(0, 0), 0);
        assert_eq!(SegTree::flat_index(3, 7), 14);
    }

    fn matrix_strategy() -> impl Strategy<Value = (usize, usize, Vec<f64>)> {
        (1usize..=6, 1usize..=6).prop_flat_map(|(r, c)| {
            (
                Just(r),
                Just(c),
                prop::collection::vec(-10.0f64..10.0, r * c)
                    .prop_filter("nonzero", |v| v.iter().any(|x| *x != 0.0)),
            )
        })
    }

    proptest! {
        #[test]
        fn padding_preserves_sum_of_squares((r, c, data) in matrix_strategy()) {
            let m = DenseMatrix::pad(r, c, &data).unwrap();
            let direct: f64 = data.iter().map(|x| x * x).sum();
            prop_assert!(m.rows().is_power_of_two() && m.cols().is_power_of_two());
            prop_assert!((m.frobenius_sq() - direct).abs() <= 1e-12 * direct);
            for i in 0..m.rows() {
                for j in 0..m.cols() {
                    let want = if i < r && j < c { data[i * c + j] } else { 0.0 };
                    prop_assert_eq!(m.get(i, j).unwrap(), want);
                }
            }
        }

        #[test]
        fn parent_sums_and_signs((r, c, data) in matrix_strategy()) {
            let m = DenseMatrix::pad(r, c, &data).unwrap();
            let t = SegTree::build(&m);
            let n = t.nodes();
            prop_assert_eq!(n.len(), 2 * m.len() - 1);
            for i in 0..m.len() - 1 {
                prop_assert_eq!(n[i], n[2 * i + 1] + n[2 * i + 2]);
            }
            prop_assert!(n.iter().all(|x| *x >= 0.0));
            for (z, a) in m.entries().iter().enumerate() {
                prop_assert_eq!(t.leaf_signs()[z], *a < 0.0);
                prop_assert_eq!(t.leaf(z).unwrap(), a * a);
            }
        }

        #[test]
        fn updates_equal_rebuild(
            (r, c, data) in matrix_strategy(),
            updates in prop::collection::vec((0usize..64, -5.0f64..5.0), 1..20),
        ) {
            let mut m = DenseMatrix::pad(r, c, &data).unwrap();
            let mut t = SegTree::build(&m);
            for (z, v) in updates {
                let z = z % m.len();
                if m.set(z, v).is_ok() {
                    t.update_entry(z, v).unwrap();
                }
                prop_assert_eq!(&t, &SegTree::build(&m));
            }
        }
    }
}
