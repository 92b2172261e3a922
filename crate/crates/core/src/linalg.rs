//! Dense linear algebra over a prime field: rank and row-reduced echelon form.
//!
//! Matrices here are small (tens of columns) so rows are plain `Vec<u32>`.
//! For `q = 2` a bit-packed elimination is also provided; both paths must
//! agree on every input.

use crate::field::FieldSpec;

/// Row-major matrix over `F_q`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix {
    spec: FieldSpec,
    cols: usize,
    rows: Vec<Vec<u32>>,
}

impl Matrix {
    pub fn new(spec: FieldSpec, cols: usize) -> Self {
        Self { spec, cols, rows: Vec::new() }
    }

    pub fn from_rows(spec: FieldSpec, cols: usize, rows: Vec<Vec<u32>>) -> Self {
        debug_assert!(rows.iter().all(|r| r.len() == cols));
        Self { spec, cols, rows }
    }

    pub fn push_row(&mut self, row: Vec<u32>) {
        debug_assert_eq!(row.len(), self.cols);
        self.rows.push(row);
    }

    pub fn extend_rows<I: IntoIterator<Item = Vec<u32>>>(&mut self, rows: I) {
        for r in rows {
            self.push_row(r);
        }
    }

    pub fn rows(&self) -> &[Vec<u32>] {
        &self.rows
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn rank(&self) -> usize {
        rank(self.spec, self.cols, &self.rows)
    }

    /// Nonzero rows of the reduced row echelon form.
    pub fn rref(&self) -> Vec<Vec<u32>> {
        rref(self.spec, self.cols, &self.rows)
    }

    /// True iff `row` is in the row span of `self`.
    pub fn spans(&self, row: &[u32]) -> bool {
        let base = self.rank();
        let mut rows = self.rows.clone();
        rows.push(row.to_vec());
        rank(self.spec, self.cols, &rows) == base
    }
}

/// Rank of the matrix whose rows are `rows`.
pub fn rank(spec: FieldSpec, cols: usize, rows: &[Vec<u32>]) -> usize {
    if spec.q() == 2 && cols <= 64 {
        let packed: Vec<u64> = rows.iter().map(|r| pack_gf2(r)).collect();
        return rank_gf2(&packed);
    }
    let mut m = rows.to_vec();
    eliminate(spec, cols, &mut m)
}

/// Reference elimination, used for every q. Exposed so the bit-packed path
/// can be tested against it.
pub fn rank_reference(spec: FieldSpec, cols: usize, rows: &[Vec<u32>]) -> usize {
    let mut m = rows.to_vec();
    eliminate(spec, cols, &mut m)
}

pub fn rref(spec: FieldSpec, cols: usize, rows: &[Vec<u32>]) -> Vec<Vec<u32>> {
    let mut m = rows.to_vec();
    let r = eliminate(spec, cols, &mut m);
    m.truncate(r);
    m
}

// Gauss-Jordan in place; returns the rank. On return the first `rank` rows
// are the RREF.
fn eliminate(spec: FieldSpec, cols: usize, m: &mut [Vec<u32>]) -> usize {
    let mut pivot_row = 0;
    for col in 0..cols {
        if pivot_row == m.len() {
            break;
        }
        let Some(found) = (pivot_row..m.len()).find(|&r| m[r][col] != 0) else {
            continue;
        };
        m.swap(pivot_row, found);
        let inv = spec.inv(m[pivot_row][col]);
        if inv != 1 {
            for x in m[pivot_row][col..].iter_mut() {
                *x = spec.mul(*x, inv);
            }
        }
        let (head, tail) = m.split_at_mut(pivot_row);
        let (pivot, rest) = tail.split_first_mut().expect("pivot row exists");
        for row in head.iter_mut().chain(rest.iter_mut()) {
            let factor = row[col];
            if factor == 0 {
                continue;
            }
            let nf = spec.neg(factor);
            for (x, &p) in row[col..].iter_mut().zip(&pivot[col..]) {
                *x = spec.add(*x, spec.mul(nf, p));
            }
        }
        pivot_row += 1;
    }
    pivot_row
}

/// Packs a 0/1 row into a bitmask (column `c` -> bit `c`).
pub fn pack_gf2(row: &[u32]) -> u64 {
    row.iter().enumerate().fold(0u64, |acc, (c, &x)| acc | (((x & 1) as u64) << c))
}

/// Rank over `F_2` of bit-packed rows.
pub fn rank_gf2(rows: &[u64]) -> usize {
    // basis[b] holds a vector whose highest set bit is b
    let mut basis = [0u64; 64];
    let mut r = 0;
    for &row in rows {
        let mut x = row;
        while x != 0 {
            let hb = 63 - x.leading_zeros() as usize;
            if basis[hb] == 0 {
                basis[hb] = x;
                r += 1;
                break;
            }
            x ^= basis[hb];
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(q: u32) -> FieldSpec {
        FieldSpec::new(q).unwrap()
    }

    #[test]
    fn identity_and_dependent_rows() {
        let s = spec(3);
        let m = Matrix::from_rows(s, 3, vec![vec![1, 0, 0], vec![0, 1, 0], vec![1, 1, 0]]);
        assert_eq!(m.rank(), 2);
        assert!(m.spans(&[2, 2, 0]));
        assert!(!m.spans(&[0, 0, 1]));
        let m = Matrix::from_rows(s, 2, vec![vec![1, 2], vec![2, 1]]);
        // 2*(1,2) = (2,1) mod 3
        assert_eq!(m.rank(), 1);
    }

    #[test]
    fn empty_and_zero() {
        let s = spec(5);
        assert_eq!(rank(s, 4, &[]), 0);
        assert_eq!(rank(s, 4, &[vec![0; 4], vec![0; 4]]), 0);
        assert!(Matrix::new(s, 4).spans(&[0, 0, 0, 0]));
    }

    #[test]
    fn rref_shape() {
        let s = spec(5);
        let r = rref(s, 3, &[vec![2, 4, 1], vec![1, 3, 3]]);
        assert_eq!(r.len(), 2);
        assert_eq!(r[0][0], 1);
        assert_eq!(r[1][0], 0);
    }

    fn matrix(q: u32) -> impl Strategy<Value = (usize, Vec<Vec<u32>>)> {
        (1usize..20, 0usize..12).prop_flat_map(move |(cols, n)| {
            (Just(cols), prop::collection::vec(prop::collection::vec(0..q, cols), n))
        })
    }

    proptest! {
        #[test]
        fn packed_matches_reference((cols, rows) in matrix(2)) {
            let s = spec(2);
            prop_assert_eq!(rank(s, cols, &rows), rank_reference(s, cols, &rows));
        }

        #[test]
        fn rank_bounds_and_rref_consistency((cols, rows) in matrix(3)) {
            let s = spec(3);
            let r = rank(s, cols, &rows);
            prop_assert!(r <= cols.min(rows.len()));
            let red = rref(s, cols, &rows);
            prop_assert_eq!(red.len(), r);
            prop_assert_eq!(rank(s, cols, &red), r);
            let m = Matrix::from_rows(s, cols, rows.clone());
            for row in &rows {
                prop_assert!(m.spans(row));
            }
        }
    }
}
