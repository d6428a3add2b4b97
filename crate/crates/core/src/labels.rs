//! Qubit labels: sets of logical indices combined by symmetric difference.
//!
//! A physical qubit labelled `{a, b}` carries the parity of logical qubits
//! `a` and `b` in the Z basis. A product of physical Z operators is a
//! stabilizer exactly when the labels of its qubits cancel, i.e. every
//! logical index appears an even number of times.

use std::collections::BTreeSet;
use std::fmt;

use crate::gf2::{BitMatrix, BitVec};
use crate::Error;

/// Index of a logical qubit.
pub type LogicalIndex = usize;

/// The non-empty, sorted set of logical indices carried by a physical qubit.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct QubitLabel(Vec<LogicalIndex>);

impl QubitLabel {
    pub fn new(indices: impl IntoIterator<Item = LogicalIndex>) -> Result<Self, Error> {
        let mut v: Vec<_> = indices.into_iter().collect();
        v.sort_unstable();
        let before = v.len();
        v.dedup();
        if v.len() != before {
            return Err(Error::InvalidLabel("duplicate logical index".into()));
        }
        if v.is_empty() {
            return Err(Error::InvalidLabel("label must not be empty".into()));
        }
        Ok(Self(v))
    }

    pub fn base(i: LogicalIndex) -> Self {
        Self(vec![i])
    }

    pub fn pair(i: LogicalIndex, j: LogicalIndex) -> Self {
        assert_ne!(i, j, "parity pair needs two distinct indices");
        Self(if i < j { vec![i, j] } else { vec![j, i] })
    }

    pub fn indices(&self) -> &[LogicalIndex] {
        &self.0
    }

    pub fn contains(&self, i: LogicalIndex) -> bool {
        self.0.binary_search(&i).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_base(&self) -> bool {
        self.0.len() == 1
    }

    pub fn is_parity(&self) -> bool {
        self.0.len() >= 2
    }

    pub fn max_index(&self) -> LogicalIndex {
        *self.0.last().expect("labels are non-empty")
    }

    /// Number of indices shared with `set`.
    pub fn overlap(&self, set: &BTreeSet<LogicalIndex>) -> usize {
        self.0.iter().filter(|i| set.contains(i)).count()
    }
}

impl fmt::Debug for QubitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for QubitLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (n, i) in self.0.iter().enumerate() {
            if n > 0 {
                write!(f, ",")?;
            }
            write!(f, "{i}")?;
        }
        write!(f, "}}")
    }
}

/// Symmetric difference of all labels.
pub fn symdiff<'a>(labels: impl IntoIterator<Item = &'a QubitLabel>) -> BTreeSet<LogicalIndex> {
    let mut acc = BTreeSet::new();
    for label in labels {
        for &i in label.indices() {
            if !acc.remove(&i) {
                acc.insert(i);
            }
        }
    }
    acc
}

pub fn is_stabilizer_support<'a>(labels: impl IntoIterator<Item = &'a QubitLabel>) -> bool {
    symdiff(labels).is_empty()
}

/// Membership matrix: row `r` has a one in column `c` iff `c ∈ labels[r]`.
pub fn label_matrix(labels: &[QubitLabel], k: usize) -> Result<BitMatrix, Error> {
    let mut rows = Vec::with_capacity(labels.len());
    for label in labels {
        if let Some(&bad) = label.indices().iter().find(|&&i| i >= k) {
            return Err(Error::IndexOutOfRange { index: bad, bound: k });
        }
        rows.push(BitVec::from_indices(k, label.indices().iter().copied()));
    }
    Ok(BitMatrix::from_rows(k, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn l(ix: &[usize]) -> QubitLabel {
        QubitLabel::new(ix.iter().copied()).unwrap()
    }

    #[test]
    fn plaquette_labels_cancel() {
        let plaquette = [l(&[0, 2]), l(&[0, 3]), l(&[1, 2]), l(&[1, 3])];
        assert!(symdiff(&plaquette).is_empty());
        assert!(is_stabilizer_support(&plaquette));
    }

    #[test]
    fn symdiff_examples() {
        assert_eq!(symdiff(&[l(&[1, 2]), l(&[2, 3])]), BTreeSet::from([1, 3]));
        assert_eq!(symdiff(&[l(&[5])]), BTreeSet::from([5]));
        assert!(symdiff(&[]).is_empty());
    }

    #[test]
    fn triangle_is_a_stabilizer_but_two_bases_are_not() {
        assert!(is_stabilizer_support(&[l(&[1, 2]), l(&[2, 3]), l(&[1, 3])]));
        assert!(!is_stabilizer_support(&[l(&[0]), l(&[1])]));
    }

    #[test]
    fn label_matrix_examples() {
        let a = label_matrix(&[l(&[0, 1]), l(&[1])], 2).unwrap();
        assert_eq!(a.row(0).to_bools(), vec![true, true]);
        assert_eq!(a.row(1).to_bools(), vec![false, true]);
        let b = label_matrix(&[l(&[0, 2])], 3).unwrap();
        assert_eq!(b.row(0).to_bools(), vec![true, false, true]);
        let c = label_matrix(&[], 2).unwrap();
        assert_eq!((c.num_rows(), c.num_cols()), (0, 2));
        assert!(matches!(
            label_matrix(&[l(&[3])], 2),
            Err(Error::IndexOutOfRange { index: 3, bound: 2 })
        ));
    }

    #[test]
    fn labels_are_canonical() {
        assert_eq!(l(&[3, 1]), l(&[1, 3]));
        assert!(QubitLabel::new([]).is_err());
        assert!(QubitLabel::new([2, 2]).is_err());
        assert!(l(&[4]).is_base());
        assert!(l(&[4, 1]).is_parity());
    }

    fn arb_labels() -> impl Strategy<Value = Vec<QubitLabel>> {
        proptest::collection::vec(
            proptest::collection::btree_set(0usize..8, 1..4)
                .prop_map(|s| QubitLabel::new(s).unwrap()),
            0..10,
        )
    }

    proptest! {
        #[test]
        fn symdiff_is_order_independent(labels in arb_labels(), seed in any::<u64>()) {
            let mut shuffled = labels.clone();
            // deterministic Fisher-Yates from the seed
            let mut s = seed;
            for i in (1..shuffled.len()).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                shuffled.swap(i, (s >> 33) as usize % (i + 1));
            }
            prop_assert_eq!(symdiff(&labels), symdiff(&shuffled));
            let (a, b) = labels.split_at(labels.len() / 2);
            let grouped: Vec<usize> = symdiff(a).symmetric_difference(&symdiff(b)).copied().collect();
            prop_assert_eq!(symdiff(&labels).into_iter().collect::<Vec<_>>(), grouped);
        }

        #[test]
        fn doubled_list_cancels(labels in arb_labels()) {
            let doubled: Vec<_> = labels.iter().chain(labels.iter()).cloned().collect();
            prop_assert!(symdiff(&doubled).is_empty());
        }

        #[test]
        fn stabilizer_iff_even_columns(labels in arb_labels()) {
            let m = label_matrix(&labels, 8).unwrap();
            let even = (0..8).all(|c| (0..m.num_rows()).filter(|&r| m.get(r, c)).count() % 2 == 0);
            prop_assert_eq!(is_stabilizer_support(&labels), even);
        }
    }
}
