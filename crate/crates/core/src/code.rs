//! The parity-code data model.
//!
//! A [`ParityCode`] is a list of labelled physical qubits plus Z-type
//! stabilizer generators. The number of logical qubits is not declared; it is
//! the GF(2) rank of the label matrix. For a complete code the generators
//! span the whole left null space of that matrix, so
//! `#generators + k = n`.
//!
//! # Text format
//!
//! One item per line, `#` starts a comment:
//!
//! ```text
//! 0 label=[0] coord=(0,0)
//! 1 label=[0,1] coord=(0,2)
//! stab=[0,1,4] anc=(1,1)
//! ```
//!
//! Qubit lines are `<id> label=[i,j,...]` with an optional `coord=(row,col)`.
//! Ids must be dense `0..n`. Stabilizer lines are `stab=[id,...]` with an
//! optional measurement-ancilla position `anc=(row,col)`. Whitespace inside
//! brackets is ignored. [`ParityCode::to_text`] writes qubits in id order
//! followed by stabilizers in generator order, and parsing that output gives
//! back an equal code.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use num_rational::Ratio;

use crate::gf2::{BitMatrix, BitVec};
use crate::labels::{self, LogicalIndex, QubitLabel};
use crate::Error;

/// Grid position `(row, col)`.
pub type Coord = (i32, i32);

/// Default cap on the number of logical indices for brute-force distance.
pub const DEFAULT_DISTANCE_CAP: usize = 16;

/// Cap on the free-variable enumeration in logical-Z synthesis (`2^16` candidates).
const Z_SEARCH_FREE_BITS: usize = 16;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PhysicalQubit {
    pub id: usize,
    pub label: QubitLabel,
    pub coord: Option<Coord>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stabilizer {
    /// Sorted qubit ids.
    pub support: Vec<usize>,
    /// Position of the measurement ancilla, when the layout places one.
    pub ancilla: Option<Coord>,
}

impl Stabilizer {
    pub fn new(support: impl IntoIterator<Item = usize>) -> Self {
        let mut support: Vec<_> = support.into_iter().collect();
        support.sort_unstable();
        support.dedup();
        Self { support, ancilla: None }
    }

    pub fn with_ancilla(mut self, at: Coord) -> Self {
        self.ancilla = Some(at);
        self
    }

    pub fn weight(&self) -> usize {
        self.support.len()
    }

    pub fn contains(&self, q: usize) -> bool {
        self.support.binary_search(&q).is_ok()
    }
}

/// X and Z supports over the physical qubits of a code.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliMask {
    pub x: BitVec,
    pub z: BitVec,
}

impl PauliMask {
    pub fn identity(n: usize) -> Self {
        Self {
            x: BitVec::zeros(n),
            z: BitVec::zeros(n),
        }
    }

    pub fn from_x(n: usize, ids: impl IntoIterator<Item = usize>) -> Self {
        Self {
            x: BitVec::from_indices(n, ids),
            z: BitVec::zeros(n),
        }
    }

    pub fn from_x_bits(x: BitVec) -> Self {
        let n = x.len();
        Self { x, z: BitVec::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.x.is_zero() && self.z.is_zero()
    }

    pub fn compose(&self, other: &PauliMask) -> PauliMask {
        PauliMask {
            x: self.x.xor(&other.x),
            z: self.z.xor(&other.z),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    StabilizerTooSmall { stabilizer: usize, weight: usize },
    LabelsDoNotCancel { stabilizer: usize, residue: BTreeSet<LogicalIndex> },
    DependentGenerators { generators: usize, rank: usize },
    IncompleteStabilizerGroup { rank: usize, expected: usize },
    PartiallyEncoded { referenced: usize, rank: usize },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::StabilizerTooSmall { stabilizer, weight } => {
                write!(f, "stabilizer {stabilizer} has weight {weight} (< 2)")
            }
            Violation::LabelsDoNotCancel { stabilizer, residue } => {
                write!(f, "stabilizer {stabilizer}: labels combine to {residue:?}, not the empty set")
            }
            Violation::DependentGenerators { generators, rank } => {
                write!(f, "{generators} generators but rank {rank}: generators are dependent")
            }
            Violation::IncompleteStabilizerGroup { rank, expected } => {
                write!(f, "stabilizer rank {rank}, expected n - k = {expected}")
            }
            Violation::PartiallyEncoded { referenced, rank } => {
                write!(f, "{referenced} logical indices referenced but label rank is {rank}")
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCode {
    qubits: Vec<PhysicalQubit>,
    stabilizers: Vec<Stabilizer>,
}

impl ParityCode {
    /// Builds a code, checking only structure: dense ids, known stabilizer
    /// members, distinct coordinates. Stabilizer validity is reported by
    /// [`ParityCode::validate`].
    pub fn new(qubits: Vec<PhysicalQubit>, stabilizers: Vec<Stabilizer>) -> Result<Self, Error> {
        for (pos, q) in qubits.iter().enumerate() {
            if q.id != pos {
                return Err(Error::InvalidCode(format!(
                    "qubit ids must be dense 0..n; found id {} at position {pos}",
                    q.id
                )));
            }
        }
        let mut seen = BTreeMap::new();
        for q in &qubits {
            if let Some(c) = q.coord {
                if let Some(other) = seen.insert(c, q.id) {
                    return Err(Error::InvalidCode(format!(
                        "qubits {other} and {} share coordinate {c:?}",
                        q.id
                    )));
                }
            }
        }
        for s in &stabilizers {
            if let Some(&bad) = s.support.iter().find(|&&id| id >= qubits.len()) {
                return Err(Error::UnknownQubit(bad));
            }
        }
        let stabilizers = stabilizers
            .into_iter()
            .map(|s| Stabilizer {
                support: {
                    let mut v = s.support;
                    v.sort_unstable();
                    v.dedup();
                    v
                },
                ancilla: s.ancilla,
            })
            .collect();
        Ok(Self { qubits, stabilizers })
    }

    /// Convenience constructor from labels and stabilizer supports, without coordinates.
    pub fn from_labels(labels: Vec<QubitLabel>, stabilizers: Vec<Vec<usize>>) -> Result<Self, Error> {
        let qubits = labels
            .into_iter()
            .enumerate()
            .map(|(id, label)| PhysicalQubit { id, label, coord: None })
            .collect();
        Self::new(qubits, stabilizers.into_iter().map(Stabilizer::new).collect())
    }

    pub fn n(&self) -> usize {
        self.qubits.len()
    }

    pub fn qubits(&self) -> &[PhysicalQubit] {
        &self.qubits
    }

    pub fn qubit(&self, id: usize) -> Result<&PhysicalQubit, Error> {
        self.qubits.get(id).ok_or(Error::UnknownQubit(id))
    }

    pub fn stabilizers(&self) -> &[Stabilizer] {
        &self.stabilizers
    }

    pub fn labels(&self) -> Vec<QubitLabel> {
        self.qubits.iter().map(|q| q.label.clone()).collect()
    }

    /// Every logical index that appears in some label, ascending.
    pub fn logical_indices(&self) -> Vec<LogicalIndex> {
        self.qubits
            .iter()
            .flat_map(|q| q.label.indices().iter().copied())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }

    /// Number of label-matrix columns (largest index + 1).
    pub fn index_bound(&self) -> usize {
        self.qubits.iter().map(|q| q.label.max_index() + 1).max().unwrap_or(0)
    }

    pub fn label_matrix(&self) -> BitMatrix {
        labels::label_matrix(&self.labels(), self.index_bound()).expect("bound covers all labels")
    }

    /// Number of logical qubits: rank of the label matrix.
    pub fn k(&self) -> usize {
        self.label_matrix().rank()
    }

    /// Rows are generators, columns are qubits.
    pub fn stabilizer_matrix(&self) -> BitMatrix {
        BitMatrix::from_rows(
            self.n(),
            self.stabilizers
                .iter()
                .map(|s| BitVec::from_indices(self.n(), s.support.iter().copied()))
                .collect(),
        )
    }

    pub fn qubits_with_label(&self, label: &QubitLabel) -> Vec<usize> {
        self.qubits.iter().filter(|q| &q.label == label).map(|q| q.id).collect()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        for (s, stab) in self.stabilizers.iter().enumerate() {
            if stab.weight() < 2 {
                violations.push(Violation::StabilizerTooSmall {
                    stabilizer: s,
                    weight: stab.weight(),
                });
            }
            let residue = labels::symdiff(stab.support.iter().map(|&id| &self.qubits[id].label));
            if !residue.is_empty() {
                violations.push(Violation::LabelsDoNotCancel { stabilizer: s, residue });
            }
        }
        let rank = self.stabilizer_matrix().rank();
        if rank < self.stabilizers.len() {
            violations.push(Violation::DependentGenerators {
                generators: self.stabilizers.len(),
                rank,
            });
        }
        let k = self.k();
        let expected = self.n() - k;
        if rank != expected {
            violations.push(Violation::IncompleteStabilizerGroup { rank, expected });
        }
        let referenced = self.logical_indices().len();
        if k < referenced {
            violations.push(Violation::PartiallyEncoded { referenced, rank: k });
        }
        ValidationReport { violations }
    }

    /// Qubits whose labels combine to exactly `{i}`: the support of a logical Z.
    ///
    /// Returns the base qubit when one exists. Otherwise the smallest
    /// solution of `Lᵀ x = e_i` found by enumerating up to `2^16`
    /// combinations of null-space vectors; ties go to the lexicographically
    /// smallest support.
    pub fn logical_z_support(&self, i: LogicalIndex) -> Result<Vec<usize>, Error> {
        let base = QubitLabel::base(i);
        if let Some(q) = self.qubits.iter().find(|q| q.label == base) {
            return Ok(vec![q.id]);
        }
        let bound = self.index_bound();
        if i >= bound {
            return Err(Error::NotEncoded(i));
        }
        let lt = self.label_matrix().transpose();
        let target = BitVec::from_indices(bound, [i]);
        let particular = lt.solve(&target).ok_or(Error::NotEncoded(i))?;
        let null = lt.nullspace();
        let free = null.len().min(Z_SEARCH_FREE_BITS);
        let mut best = particular.clone();
        let mut current = particular;
        // Gray-code walk over the first `free` null-space generators.
        for step in 1u64..(1u64 << free) {
            let flip = step.trailing_zeros() as usize;
            current.xor_assign(&null[flip]);
            let (cw, bw) = (current.count_ones(), best.count_ones());
            if cw < bw || (cw == bw && current.support_cmp(&best).is_lt()) {
                best = current.clone();
            }
        }
        Ok(best.iter_ones().collect())
    }

    /// Every qubit whose label contains `i`.
    pub fn logical_x_support(&self, i: LogicalIndex) -> Result<Vec<usize>, Error> {
        let ids: Vec<_> = self.qubits.iter().filter(|q| q.label.contains(i)).map(|q| q.id).collect();
        if ids.is_empty() {
            return Err(Error::NotEncoded(i));
        }
        Ok(ids)
    }

    /// Weight of `∏_{i∈T} X̃ᵢ`: qubits whose label meets `T` an odd number of times.
    pub fn combined_x_weight(&self, set: &BTreeSet<LogicalIndex>) -> Result<usize, Error> {
        let present: BTreeSet<_> = self.logical_indices().into_iter().collect();
        if let Some(&missing) = set.iter().find(|i| !present.contains(i)) {
            return Err(Error::NotEncoded(missing));
        }
        Ok(self.qubits.iter().filter(|q| q.label.overlap(set) % 2 == 1).count())
    }

    pub fn code_distance(&self) -> Result<usize, Error> {
        self.code_distance_capped(DEFAULT_DISTANCE_CAP)
    }

    /// Bit-flip distance: the smallest non-trivial combination of logical X
    /// operators, found by enumerating all non-empty index subsets.
    ///
    /// Every zero-syndrome X mask lies in the column space of the label
    /// matrix, so these combinations are all the undetectable errors.
    pub fn code_distance_capped(&self, cap: usize) -> Result<usize, Error> {
        let indices = self.logical_indices();
        if indices.len() > cap {
            return Err(Error::CapExceeded {
                what: "number of logical indices",
                value: indices.len(),
                cap,
            });
        }
        let n = self.n();
        let columns: Vec<BitVec> = indices
            .iter()
            .map(|&i| BitVec::from_indices(n, self.qubits.iter().filter(|q| q.label.contains(i)).map(|q| q.id)))
            .collect();
        let mut mask = BitVec::zeros(n);
        let mut best = usize::MAX;
        for step in 1u64..(1u64 << indices.len()) {
            mask.xor_assign(&columns[step.trailing_zeros() as usize]);
            let w = mask.count_ones();
            if w > 0 && w < best {
                best = w;
            }
        }
        if best == usize::MAX {
            return Err(Error::InvalidCode("code encodes no logical qubit".into()));
        }
        Ok(best)
    }

    pub fn encoding_rate(&self) -> Ratio<usize> {
        Ratio::new(self.k(), self.n())
    }

    /// Logical qubits flipped by a zero-syndrome residual error.
    pub fn residual_logical_flips(&self, residual: &PauliMask) -> Result<BTreeSet<LogicalIndex>, Error> {
        LogicalReadout::new(self)?.flips(self, residual)
    }

    /// Serializes to the line format described in the module docs.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(
            out,
            "# parity code: n={} k={} stabilizers={}",
            self.n(),
            self.k(),
            self.stabilizers.len()
        )
        .unwrap();
        for q in &self.qubits {
            write!(out, "{} label=[{}]", q.id, join(q.label.indices())).unwrap();
            if let Some((r, c)) = q.coord {
                write!(out, " coord=({r},{c})").unwrap();
            }
            out.push('\n');
        }
        for s in &self.stabilizers {
            write!(out, "stab=[{}]", join(&s.support)).unwrap();
            if let Some((r, c)) = s.ancilla {
                write!(out, " anc=({r},{c})").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, Error> {
        let mut qubits: BTreeMap<usize, PhysicalQubit> = BTreeMap::new();
        let mut stabilizers = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = lineno + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line, msg };
            let tokens = tokenize(content);
            if tokens[0].starts_with("stab=") {
                let mut support = None;
                let mut ancilla = None;
                for tok in &tokens {
                    let (key, value) = tok.split_once('=').ok_or_else(|| perr(format!("expected key=value, got `{tok}`")))?;
                    match key {
                        "stab" => support = Some(parse_list(value).map_err(perr)?),
                        "anc" => ancilla = Some(parse_coord(value).map_err(perr)?),
                        other => return Err(perr(format!("unknown stabilizer field `{other}`"))),
                    }
                }
                let mut s = Stabilizer::new(support.expect("first token is stab"));
                s.ancilla = ancilla;
                stabilizers.push(s);
            } else {
                let id: usize = tokens[0]
                    .parse()
                    .map_err(|_| perr(format!("expected qubit id, got `{}`", tokens[0])))?;
                let mut label = None;
                let mut coord = None;
                for tok in &tokens[1..] {
                    let (key, value) = tok.split_once('=').ok_or_else(|| perr(format!("expected key=value, got `{tok}`")))?;
                    match key {
                        "label" => {
                            let ix = parse_list(value).map_err(perr)?;
                            label = Some(QubitLabel::new(ix).map_err(|e| perr(e.to_string()))?);
                        }
                        "coord" => coord = Some(parse_coord(value).map_err(perr)?),
                        other => return Err(perr(format!("unknown qubit field `{other}`"))),
                    }
                }
                let label = label.ok_or_else(|| perr("qubit line without label".into()))?;
                if qubits.insert(id, PhysicalQubit { id, label, coord }).is_some() {
                    return Err(perr(format!("duplicate qubit id {id}")));
                }
            }
        }
        Self::new(qubits.into_values().collect(), stabilizers)
    }
}

/// Precomputed logical-Z supports for reading out logical flips of residual errors.
#[derive(Clone, Debug)]
pub struct LogicalReadout {
    logicals: Vec<(LogicalIndex, BitVec)>,
    stabilizers: BitMatrix,
}

impl LogicalReadout {
    pub fn new(code: &ParityCode) -> Result<Self, Error> {
        let n = code.n();
        let logicals = code
            .logical_indices()
            .into_iter()
            .map(|i| Ok((i, BitVec::from_indices(n, code.logical_z_support(i)?))))
            .collect::<Result<_, Error>>()?;
        Ok(Self {
            logicals,
            stabilizers: code.stabilizer_matrix(),
        })
    }

    pub fn logicals(&self) -> impl Iterator<Item = LogicalIndex> + '_ {
        self.logicals.iter().map(|(i, _)| *i)
    }

    pub fn flips(&self, code: &ParityCode, residual: &PauliMask) -> Result<BTreeSet<LogicalIndex>, Error> {
        if residual.len() != code.n() {
            return Err(Error::LengthMismatch {
                expected: code.n(),
                got: residual.len(),
            });
        }
        if !self.stabilizers.mul_vec(&residual.x).is_zero() {
            return Err(Error::NonZeroSyndrome);
        }
        Ok(self.flips_unchecked(&residual.x))
    }

    /// Logical flips of an X residual, assuming its syndrome is zero.
    pub fn flips_unchecked(&self, x: &BitVec) -> BTreeSet<LogicalIndex> {
        self.logicals.iter().filter(|(_, z)| z.dot(x)).map(|(i, _)| *i).collect()
    }
}

/// `t·k − t(t−1)`: weight of a product of `t` logical X operators in the LHZ layout.
pub fn lhz_weight_formula(k: usize, t: usize) -> Result<usize, Error> {
    if t == 0 || t > k {
        return Err(Error::InvalidArgument(format!("t = {t} outside 1..={k}")));
    }
    Ok(t * k - t * (t - 1))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

/// Whitespace split that keeps bracketed groups together.
fn tokenize(line: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut depth = 0i32;
    for ch in line.chars() {
        match ch {
            '[' | '(' => {
                depth += 1;
                cur.push(ch);
            }
            ']' | ')' => {
                depth -= 1;
                cur.push(ch);
            }
            c if c.is_whitespace() => {
                if depth > 0 {
                    continue;
                }
                if !cur.is_empty() {
                    tokens.push(std::mem::take(&mut cur));
                }
            }
            c => cur.push(c),
        }
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    tokens
}

pub(crate) fn parse_list(value: &str) -> Result<Vec<usize>, String> {
    let inner = value
        .strip_prefix('[')
        .and_then(|v| v.strip_suffix(']'))
        .ok_or_else(|| format!("expected [..], got `{value}`"))?;
    if inner.trim().is_empty() {
        return Ok(Vec::new());
    }
    inner
        .split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| format!("bad integer `{s}`")))
        .collect()
}

pub(crate) fn parse_coord(value: &str) -> Result<Coord, String> {
    let inner = value
        .strip_prefix('(')
        .and_then(|v| v.strip_suffix(')'))
        .ok_or_else(|| format!("expected (row,col), got `{value}`"))?;
    let parts: Vec<_> = inner.split(',').map(str::trim).collect();
    match parts.as_slice() {
        [r, c] => Ok((
            r.parse().map_err(|_| format!("bad row `{r}`"))?,
            c.parse().map_err(|_| format!("bad col `{c}`"))?,
        )),
        _ => Err(format!("expected (row,col), got `{value}`")),
    }
}
