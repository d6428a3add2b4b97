//! Dense bit vectors and matrices over GF(2).
//!
//! Rows are packed into `u64` words. Everything here is small-scale
//! (a few hundred columns at most), so the matrices stay dense and the
//! elimination routines are the textbook ones.

use std::fmt;

const WORD: usize = 64;

/// A fixed-length vector over GF(2).
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVec {
    len: usize,
    words: Vec<u64>,
}

impl BitVec {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: vec![0; len.div_ceil(WORD)],
        }
    }

    pub fn from_indices(len: usize, ones: impl IntoIterator<Item = usize>) -> Self {
        let mut v = Self::zeros(len);
        for i in ones {
            v.set(i, true);
        }
        v
    }

    pub fn from_bools(bits: &[bool]) -> Self {
        Self::from_indices(
            bits.len(),
            bits.iter().enumerate().filter(|(_, &b)| b).map(|(i, _)| i),
        )
    }

    /// Low `len` bits of `value`, bit `i` of the integer at position `i`.
    pub fn from_u64(len: usize, value: u64) -> Self {
        assert!(len <= WORD);
        let mut v = Self::zeros(len);
        if len > 0 {
            v.words[0] = if len == WORD { value } else { value & ((1 << len) - 1) };
        }
        v
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        (self.words[i / WORD] >> (i % WORD)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: bool) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        let mask = 1u64 << (i % WORD);
        if value {
            self.words[i / WORD] |= mask;
        } else {
            self.words[i / WORD] &= !mask;
        }
    }

    #[inline]
    pub fn flip(&mut self, i: usize) {
        assert!(i < self.len, "bit index {i} out of range {}", self.len);
        self.words[i / WORD] ^= 1u64 << (i % WORD);
    }

    pub fn xor_assign(&mut self, other: &BitVec) {
        assert_eq!(self.len, other.len, "length mismatch");
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a ^= b;
        }
    }

    pub fn xor(&self, other: &BitVec) -> BitVec {
        let mut out = self.clone();
        out.xor_assign(other);
        out
    }

    pub fn and(&self, other: &BitVec) -> BitVec {
        assert_eq!(self.len, other.len, "length mismatch");
        BitVec {
            len: self.len,
            words: self.words.iter().zip(&other.words).map(|(a, b)| a & b).collect(),
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    /// Parity of the overlap with `other`.
    pub fn dot(&self, other: &BitVec) -> bool {
        assert_eq!(self.len, other.len, "length mismatch");
        self.words
            .iter()
            .zip(&other.words)
            .fold(0u32, |acc, (a, b)| acc ^ (a & b).count_ones())
            & 1
            == 1
    }

    pub fn iter_ones(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut rest = w;
            std::iter::from_fn(move || {
                if rest == 0 {
                    return None;
                }
                let tz = rest.trailing_zeros() as usize;
                rest &= rest - 1;
                Some(wi * WORD + tz)
            })
        })
    }

    pub fn first_one(&self) -> Option<usize> {
        self.iter_ones().next()
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.len).map(|i| self.get(i)).collect()
    }

    /// Lexicographic order on the sorted support: the vector whose smallest
    /// differing index is set comes first.
    pub fn support_cmp(&self, other: &BitVec) -> std::cmp::Ordering {
        let mut a = self.iter_ones();
        let mut b = other.iter_ones();
        loop {
            match (a.next(), b.next()) {
                (None, None) => return std::cmp::Ordering::Equal,
                (None, Some(_)) => return std::cmp::Ordering::Less,
                (Some(_), None) => return std::cmp::Ordering::Greater,
                (Some(x), Some(y)) if x != y => return x.cmp(&y),
                _ => {}
            }
        }
    }
}

impl fmt::Debug for BitVec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = (0..self.len).map(|i| if self.get(i) { '1' } else { '0' }).collect();
        write!(f, "BitVec({s})")
    }
}

/// A dense row-major matrix over GF(2).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct BitMatrix {
    cols: usize,
    rows: Vec<BitVec>,
}

/// Reduced row echelon form together with the pivot column of each
/// non-zero row and the row operations that produced it.
#[derive(Clone, Debug)]
pub struct Echelon {
    pub reduced: BitMatrix,
    pub pivots: Vec<usize>,
    /// `transform.row(r)` lists which original rows were summed into `reduced.row(r)`.
    pub transform: BitMatrix,
}

impl BitMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            cols,
            rows: vec![BitVec::zeros(cols); rows],
        }
    }

    pub fn from_rows(cols: usize, rows: Vec<BitVec>) -> Self {
        for r in &rows {
            assert_eq!(r.len(), cols, "row length mismatch");
        }
        Self { cols, rows }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows(n, (0..n).map(|i| BitVec::from_indices(n, [i])).collect())
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn num_cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &BitVec {
        &self.rows[r]
    }

    pub fn rows(&self) -> &[BitVec] {
        &self.rows
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r].get(c)
    }

    pub fn set(&mut self, r: usize, c: usize, value: bool) {
        self.rows[r].set(c, value);
    }

    pub fn push_row(&mut self, row: BitVec) {
        assert_eq!(row.len(), self.cols, "row length mismatch");
        self.rows.push(row);
    }

    pub fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.cols, self.rows.len());
        for (r, row) in self.rows.iter().enumerate() {
            for c in row.iter_ones() {
                t.set(c, r, true);
            }
        }
        t
    }

    /// `self · v` for a column vector `v`.
    pub fn mul_vec(&self, v: &BitVec) -> BitVec {
        assert_eq!(v.len(), self.cols, "length mismatch");
        BitVec::from_bools(&self.rows.iter().map(|r| r.dot(v)).collect::<Vec<_>>())
    }

    /// `vᵀ · self`, i.e. the sum of the rows selected by `v`.
    pub fn combine_rows(&self, v: &BitVec) -> BitVec {
        assert_eq!(v.len(), self.rows.len(), "length mismatch");
        let mut out = BitVec::zeros(self.cols);
        for r in v.iter_ones() {
            out.xor_assign(&self.rows[r]);
        }
        out
    }

    pub fn echelon(&self) -> Echelon {
        let mut m = self.clone();
        let mut t = BitMatrix::identity(self.rows.len());
        let mut pivots = Vec::new();
        let mut next = 0;
        for c in 0..self.cols {
            let Some(p) = (next..m.rows.len()).find(|&r| m.rows[r].get(c)) else {
                continue;
            };
            m.rows.swap(next, p);
            t.rows.swap(next, p);
            for r in 0..m.rows.len() {
                if r != next && m.rows[r].get(c) {
                    let (src, dst) = pick(&mut m.rows, next, r);
                    dst.xor_assign(src);
                    let (src, dst) = pick(&mut t.rows, next, r);
                    dst.xor_assign(src);
                }
            }
            pivots.push(c);
            next += 1;
            if next == m.rows.len() {
                break;
            }
        }
        Echelon {
            reduced: m,
            pivots,
            transform: t,
        }
    }

    pub fn rank(&self) -> usize {
        self.echelon().pivots.len()
    }

    /// One solution `x` of `self · x = b`, or `None` if the system is inconsistent.
    pub fn solve(&self, b: &BitVec) -> Option<BitVec> {
        assert_eq!(b.len(), self.rows.len(), "length mismatch");
        let ech = self.echelon();
        let rhs = ech.transform.mul_vec(b);
        let rank = ech.pivots.len();
        if (rank..self.rows.len()).any(|r| rhs.get(r)) {
            return None;
        }
        let mut x = BitVec::zeros(self.cols);
        for (r, &c) in ech.pivots.iter().enumerate() {
            x.set(c, rhs.get(r));
        }
        Some(x)
    }

    /// A basis of `{x : self · x = 0}`.
    pub fn nullspace(&self) -> Vec<BitVec> {
        let ech = self.echelon();
        let mut is_pivot = vec![false; self.cols];
        for &c in &ech.pivots {
            is_pivot[c] = true;
        }
        (0..self.cols)
            .filter(|&f| !is_pivot[f])
            .map(|f| {
                let mut v = BitVec::zeros(self.cols);
                v.set(f, true);
                for (r, &c) in ech.pivots.iter().enumerate() {
                    if ech.reduced.get(r, f) {
                        v.set(c, true);
                    }
                }
                v
            })
            .collect()
    }

    /// A basis of the row space.
    pub fn row_basis(&self) -> Vec<BitVec> {
        let ech = self.echelon();
        ech.reduced.rows.into_iter().take(ech.pivots.len()).collect()
    }

    /// Whether `v` lies in the row space.
    pub fn spans(&self, v: &BitVec) -> bool {
        let mut m = self.clone();
        let before = m.rank();
        m.push_row(v.clone());
        m.rank() == before
    }
}

fn pick(rows: &mut [BitVec], src: usize, dst: usize) -> (&BitVec, &mut BitVec) {
    debug_assert_ne!(src, dst);
    if src < dst {
        let (a, b) = rows.split_at_mut(dst);
        (&a[src], &mut b[0])
    } else {
        let (a, b) = rows.split_at_mut(src);
        (&b[0], &mut a[dst])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn m(rows: &[&[u8]]) -> BitMatrix {
        let cols = rows.first().map_or(0, |r| r.len());
        BitMatrix::from_rows(
            cols,
            rows.iter()
                .map(|r| BitVec::from_bools(&r.iter().map(|&b| b == 1).collect::<Vec<_>>()))
                .collect(),
        )
    }

    #[test]
    fn rank_of_small_matrices() {
        assert_eq!(m(&[&[1, 1, 0], &[0, 1, 1], &[1, 0, 1]]).rank(), 2);
        assert_eq!(m(&[&[1, 0], &[0, 1]]).rank(), 2);
        assert_eq!(BitMatrix::zeros(0, 4).rank(), 0);
    }

    #[test]
    fn inconsistent_system_has_no_solution() {
        let a = m(&[&[1, 1], &[1, 1]]);
        assert!(a.solve(&BitVec::from_bools(&[true, false])).is_none());
        let x = a.solve(&BitVec::from_bools(&[true, true])).unwrap();
        assert_eq!(a.mul_vec(&x), BitVec::from_bools(&[true, true]));
    }

    #[test]
    fn iter_ones_crosses_word_boundaries() {
        let v = BitVec::from_indices(200, [0, 63, 64, 130, 199]);
        assert_eq!(v.iter_ones().collect::<Vec<_>>(), vec![0, 63, 64, 130, 199]);
        assert_eq!(v.count_ones(), 5);
    }

    proptest! {
        #[test]
        fn nullspace_vectors_are_annihilated(bits in proptest::collection::vec(any::<bool>(), 5 * 9)) {
            let rows = bits.chunks(9).map(BitVec::from_bools).collect();
            let a = BitMatrix::from_rows(9, rows);
            let null = a.nullspace();
            prop_assert_eq!(null.len() + a.rank(), 9);
            for v in &null {
                prop_assert!(a.mul_vec(v).is_zero());
            }
        }

        #[test]
        fn echelon_transform_reproduces_reduced_rows(bits in proptest::collection::vec(any::<bool>(), 6 * 7)) {
            let rows = bits.chunks(7).map(BitVec::from_bools).collect();
            let a = BitMatrix::from_rows(7, rows);
            let ech = a.echelon();
            for r in 0..a.num_rows() {
                prop_assert_eq!(&a.combine_rows(ech.transform.row(r)), ech.reduced.row(r));
            }
        }
    }
}
