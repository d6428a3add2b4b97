//! Layout generators and grid locality checks.
//!
//! Coordinates are on a doubled square grid. Code qubits sit on even-even
//! sites and measurement ancillas on odd-odd sites, so the device's
//! nearest-neighbour couplings are the diagonal steps (Chebyshev distance 1)
//! between the two sublattices.
//!
//! The LHZ layout puts the base qubits on the bottom row (row 0) with the
//! parity qubits stacked above; see [`lhz_layout`]. Limited-range layouts
//! instead run the base qubits along a diagonal so that truncating long
//! pairs cuts off the tip of the triangle; see [`limited_range_layout`].
//! Plaquette ancillas sit at the cell centres.

use std::collections::{BTreeMap, BTreeSet};

use crate::code::{Coord, ParityCode, PhysicalQubit, Stabilizer, ValidationReport};
use crate::labels::{LogicalIndex, QubitLabel};
use crate::Error;

/// Qubit and ancilla positions of a code.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct GridSpec {
    pub positions: BTreeMap<usize, Coord>,
    /// Keyed by stabilizer index.
    pub ancilla_positions: BTreeMap<usize, Coord>,
}

impl GridSpec {
    pub fn of(code: &ParityCode) -> Self {
        Self {
            positions: code.qubits().iter().filter_map(|q| q.coord.map(|c| (q.id, c))).collect(),
            ancilla_positions: code
                .stabilizers()
                .iter()
                .enumerate()
                .filter_map(|(s, st)| st.ancilla.map(|c| (s, c)))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    pub code: ParityCode,
    pub grid: GridSpec,
}

impl Layout {
    pub fn from_code(code: ParityCode) -> Self {
        let grid = GridSpec::of(&code);
        Self { code, grid }
    }
}

fn chebyshev(a: Coord, b: Coord) -> i32 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

/// Fills in missing ancilla positions: the first free site adjacent to every
/// support qubit, odd-odd sites first.
fn place_ancillas(qubits: &[PhysicalQubit], stabilizers: &mut [Stabilizer]) {
    let mut used: BTreeSet<Coord> = qubits.iter().filter_map(|q| q.coord).collect();
    used.extend(stabilizers.iter().filter_map(|s| s.ancilla));
    for stab in stabilizers.iter_mut().filter(|s| s.ancilla.is_none()) {
        let coords: Option<Vec<Coord>> = stab.support.iter().map(|&q| qubits[q].coord).collect();
        let Some(coords) = coords else { continue };
        let Some(&(r0, c0)) = coords.first() else { continue };
        let mut candidates: Vec<Coord> = (r0 - 1..=r0 + 1)
            .flat_map(|r| (c0 - 1..=c0 + 1).map(move |c| (r, c)))
            .filter(|&p| coords.iter().all(|&q| chebyshev(p, q) <= 1) && !used.contains(&p))
            .collect();
        candidates.sort_by_key(|&(r, c)| (r.rem_euclid(2) == 0 || c.rem_euclid(2) == 0, r, c));
        if let Some(&p) = candidates.first() {
            stab.ancilla = Some(p);
            used.insert(p);
        }
    }
}

fn finish(qubits: Vec<PhysicalQubit>, mut stabilizers: Vec<Stabilizer>) -> Result<Layout, Error> {
    place_ancillas(&qubits, &mut stabilizers);
    Ok(Layout::from_code(ParityCode::new(qubits, stabilizers)?))
}

/// Qubits, stabilizers, and qubit id by index pair.
type Triangle = (Vec<PhysicalQubit>, Vec<Stabilizer>, BTreeMap<(usize, usize), usize>);

/// Band of all pairs with `j - i <= max_range` above a diagonal of base
/// qubits, base qubits first. Adjacent to the diagonal sit two rows of
/// weight-3 triangles, `{i},{i+1},{i,i+1}` and `{i,i+1},{i,i+2},{i+1,i+2}`.
fn banded_triangle(k: usize, max_range: usize) -> Triangle {
    let mut qubits = Vec::new();
    let mut at = BTreeMap::new();
    for d in 0..=max_range {
        for i in 0..k.saturating_sub(d) {
            let j = i + d;
            let label = if d == 0 { QubitLabel::base(i) } else { QubitLabel::pair(i, j) };
            let id = qubits.len();
            at.insert((i, j), id);
            qubits.push(PhysicalQubit {
                id,
                label,
                coord: Some((2 * i as i32, 2 * j as i32)),
            });
        }
    }
    let mut stabilizers = Vec::new();
    // Cell (i, j) spans rows i..=i+1, cols j..=j+1. Its lower-left corner
    // (i+1, j) is dropped when it is below or on the diagonal.
    for d in 0..max_range {
        for i in 0..k.saturating_sub(d + 1) {
            let j = i + d;
            let corners = [(i, j), (i, j + 1), (i + 1, j), (i + 1, j + 1)];
            let support: Vec<usize> = corners
                .iter()
                .filter(|&&(a, b)| !(a == i + 1 && b == j && d <= 1))
                .filter_map(|c| at.get(c).copied())
                .collect();
            stabilizers.push(Stabilizer::new(support).with_ancilla((2 * i as i32 + 1, 2 * j as i32 + 1)));
        }
    }
    (qubits, stabilizers, at)
}

/// LHZ triangle on `k` logicals with base qubits on the bottom row.
///
/// This is the parity-only LHZ triangle on `k + 1` indices with index `k`
/// read as "absent": pair `{a, k}` becomes base qubit `{a}`. Pair `{a, b}`
/// sits at `(2(k - b), 2a)`, so the base qubits fill row 0 and the weight-3
/// plaquettes run along the hypotenuse `{a, a+1}`.
fn lhz_triangle(k: usize) -> Triangle {
    let label = |a: usize, b: usize| if b == k { QubitLabel::base(a) } else { QubitLabel::pair(a, b) };
    let mut order: Vec<(usize, usize)> = (0..k).map(|a| (a, k)).collect();
    for d in 1..k {
        order.extend((0..k - d).map(|a| (a, a + d)));
    }
    let mut at = BTreeMap::new();
    let qubits = order
        .iter()
        .enumerate()
        .map(|(id, &(a, b))| {
            at.insert((a, b), id);
            PhysicalQubit {
                id,
                label: label(a, b),
                coord: Some((2 * (k - b) as i32, 2 * a as i32)),
            }
        })
        .collect();
    let mut stabilizers = Vec::new();
    // Bottom row first, left to right.
    for b in (1..k).rev() {
        for a in 0..b {
            let corners = [(a, b), (a, b + 1), (a + 1, b), (a + 1, b + 1)];
            let support: Vec<usize> = corners.iter().filter_map(|c| at.get(c).copied()).collect();
            stabilizers.push(Stabilizer::new(support).with_ancilla((2 * (k - b) as i32 - 1, 2 * a as i32 + 1)));
        }
    }
    (qubits, stabilizers, at)
}

/// Full LHZ layout: `k` base qubits and one parity qubit per pair.
pub fn lhz_layout(k: usize) -> Result<Layout, Error> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("LHZ layout needs k >= 2, got {k}")));
    }
    let (qubits, stabilizers, _) = lhz_triangle(k);
    finish(qubits, stabilizers)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundaryExtension {
    /// Plain truncated triangle.
    None,
    /// Grow every logical X operator to the longest one in the band.
    Grow,
}

/// LHZ triangle restricted to pairs with `|i - j| <= max_range`.
///
/// Without extension the edge logicals have X weight `max_range + 1`, which
/// is the distance. [`BoundaryExtension::Grow`] hangs a chain of base-qubit
/// copies below each short logical (2-body stabilizers, one step down the
/// grid per copy) until every X operator has the interior weight
/// `min(2·max_range + 1, k)`; that weight is then the distance.
pub fn limited_range_layout(k: usize, max_range: usize, extension: BoundaryExtension) -> Result<Layout, Error> {
    if max_range < 2 || max_range >= k {
        return Err(Error::InvalidArgument(format!(
            "range must satisfy 2 <= range < k, got range {max_range} with k {k}"
        )));
    }
    let (mut qubits, mut stabilizers, at) = banded_triangle(k, max_range);
    if extension == BoundaryExtension::Grow {
        let weight = |i: usize| qubits.iter().filter(|q| q.label.contains(i)).count();
        let weights: Vec<usize> = (0..k).map(weight).collect();
        let target = *weights.iter().max().expect("k >= 3");
        for i in 0..k {
            let mut prev = at[&(i, i)];
            for m in 1..=(target - weights[i]) {
                let id = qubits.len();
                qubits.push(PhysicalQubit {
                    id,
                    label: QubitLabel::base(i),
                    coord: Some((2 * (i + m) as i32, 2 * i as i32)),
                });
                stabilizers.push(Stabilizer::new([prev, id]));
                prev = id;
            }
        }
    }
    finish(qubits, stabilizers)
}

/// Parses a layout file (code text format) and validates it.
pub fn custom_layout(spec: &str) -> Result<(Layout, ValidationReport), Error> {
    let code = ParityCode::from_text(spec)?;
    let report = code.validate();
    Ok((Layout::from_code(code), report))
}

/// Mixed layout with distance 5: LHZ on logicals 0..=4, two extra copies of
/// base qubit 0, and logicals 5 and 6 each as a separate 5-qubit repetition
/// chain.
pub fn mixed_layout() -> Layout {
    let (mut qubits, mut stabilizers, at) = lhz_triangle(5);
    let mut chain = |qubits: &mut Vec<PhysicalQubit>, label: LogicalIndex, start: Option<usize>, coords: &[Coord]| {
        let mut prev = start;
        for &c in coords {
            let id = qubits.len();
            qubits.push(PhysicalQubit {
                id,
                label: QubitLabel::base(label),
                coord: Some(c),
            });
            if let Some(p) = prev {
                stabilizers.push(Stabilizer::new([p, id]));
            }
            prev = Some(id);
        }
    };
    chain(&mut qubits, 0, Some(at[&(0, 5)]), &[(0, -2), (0, -4)]);
    let row = |r: i32| (0..5).map(|c| (r, 2 * c)).collect::<Vec<_>>();
    chain(&mut qubits, 5, None, &row(-4));
    chain(&mut qubits, 6, None, &row(-8));
    finish(qubits, stabilizers).expect("static layout is well formed")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LocalityViolation {
    TooHeavy { stabilizer: usize, weight: usize },
    MissingCoordinate { qubit: usize },
    NotInUnitCell { stabilizer: usize },
    AncillaNotAdjacent { stabilizer: usize, qubit: usize },
    PositionClash { at: Coord },
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct LocalityReport {
    pub violations: Vec<LocalityViolation>,
}

impl LocalityReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that every stabilizer has weight at most 4 and fits one unit
/// plaquette of the grid, with its ancilla (if placed) adjacent to all members.
pub fn check_locality(code: &ParityCode, grid: &GridSpec) -> LocalityReport {
    let mut violations = Vec::new();
    let mut seen = BTreeSet::new();
    for &c in grid.positions.values().chain(grid.ancilla_positions.values()) {
        if !seen.insert(c) {
            violations.push(LocalityViolation::PositionClash { at: c });
        }
    }
    for q in code.qubits() {
        if !grid.positions.contains_key(&q.id) {
            violations.push(LocalityViolation::MissingCoordinate { qubit: q.id });
        }
    }
    for (s, stab) in code.stabilizers().iter().enumerate() {
        if stab.weight() > 4 {
            violations.push(LocalityViolation::TooHeavy {
                stabilizer: s,
                weight: stab.weight(),
            });
        }
        let coords: Vec<Coord> = stab.support.iter().filter_map(|q| grid.positions.get(q).copied()).collect();
        if coords.len() != stab.weight() {
            continue;
        }
        let span = |f: fn(&Coord) -> i32| {
            let (lo, hi) = coords.iter().map(f).fold((i32::MAX, i32::MIN), |(lo, hi), v| (lo.min(v), hi.max(v)));
            hi - lo
        };
        if span(|c| c.0) > 2 || span(|c| c.1) > 2 {
            violations.push(LocalityViolation::NotInUnitCell { stabilizer: s });
        }
        if let Some(&anc) = grid.ancilla_positions.get(&s) {
            for (&q, &c) in stab.support.iter().zip(&coords) {
                if chebyshev(anc, c) > 1 {
                    violations.push(LocalityViolation::AncillaNotAdjacent { stabilizer: s, qubit: q });
                }
            }
        }
    }
    LocalityReport { violations }
}

/// Placement of an ancilla-logical block next to the carriers of a target logical.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OffsetBlock {
    /// `(carrier qubit id, position of its partner copy)`, one per carrier.
    pub placements: Vec<(usize, Coord)>,
    /// Names of the ancilla-logical copies, parallel to `placements`.
    pub names: Vec<String>,
}

/// Finds one free site next to each qubit carrying `target`, all distinct, so
/// a transversal CNOT from an offset ancilla block is nearest-neighbour.
///
/// Measurement-ancilla sites count as free: the offset block takes them over.
pub fn plan_offset_block(
    code: &ParityCode,
    grid: &GridSpec,
    target: LogicalIndex,
    ancilla_name: &str,
) -> Result<OffsetBlock, Error> {
    let carriers = code.logical_x_support(target)?;
    let occupied: BTreeSet<Coord> = grid.positions.values().copied().collect();
    let mut options: Vec<Vec<Coord>> = Vec::with_capacity(carriers.len());
    for &q in &carriers {
        let (r, c) = *grid
            .positions
            .get(&q)
            .ok_or_else(|| Error::Layout(format!("carrier qubit {q} has no coordinate")))?;
        let mut near: Vec<Coord> = [(r - 1, c - 1), (r - 1, c + 1), (r + 1, c - 1), (r + 1, c + 1)]
            .into_iter()
            .filter(|p| !occupied.contains(p))
            .collect();
        near.sort();
        options.push(near);
    }
    // Kuhn's augmenting-path matching, carriers in id order.
    let mut owner: BTreeMap<Coord, usize> = BTreeMap::new();
    fn augment(c: usize, options: &[Vec<Coord>], owner: &mut BTreeMap<Coord, usize>, seen: &mut BTreeSet<Coord>) -> bool {
        for &p in &options[c] {
            if !seen.insert(p) {
                continue;
            }
            let free = match owner.get(&p) {
                None => true,
                Some(&other) => augment(other, options, owner, seen),
            };
            if free {
                owner.insert(p, c);
                return true;
            }
        }
        false
    }
    for (c, carrier) in carriers.iter().enumerate() {
        if !augment(c, &options, &mut owner, &mut BTreeSet::new()) {
            return Err(Error::Layout(format!(
                "no free site next to carrier qubit {carrier} of logical {target}"
            )));
        }
    }
    let mut by_carrier: Vec<(usize, Coord)> = owner.into_iter().map(|(p, c)| (carriers[c], p)).collect();
    by_carrier.sort();
    let names = (0..by_carrier.len()).map(|m| format!("{ancilla_name}{m}")).collect();
    Ok(OffsetBlock {
        placements: by_carrier,
        names,
    })
}
