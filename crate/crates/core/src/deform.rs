//! Code deformation: adding and removing parity qubits.
//!
//! Every operation returns a [`Deformation`] holding the new code, the
//! emitted circuit and the per-step correction records. Circuit qubits are
//! named `q{n}`: the start code's qubit `id` is `q{id}`, and added qubits
//! continue the numbering, so names stay stable while ids are renumbered
//! after removals. Stabilizer-measurement ancillas are `anc{n}`.
//!
//! Conditional Paulis in the emitted circuit are the correction ledger. They
//! are frame updates under [`Corrections::PauliFrame`] and physical gates
//! under [`Corrections::Physical`].
//!
//! # Plan text format
//!
//! ```text
//! # additions run first (one measurement round), then removals
//! add label=[1,3] partners=[10,8] coord=(4,6)
//! add label=[0] partners=[0]
//! remove 15
//! remove 7 partners=[6,10]
//! ```
//!
//! Addition partners are ids in the code as grown so far: the first added
//! qubit gets id `n`, the next `n + 1`. Removal ids refer to the code after
//! all additions.
//!
//! [`Corrections::PauliFrame`]: crate::circuit::Corrections::PauliFrame
//! [`Corrections::Physical`]: crate::circuit::Corrections::Physical

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::circuit::{self, Branch, Circuit, CodeBlock, Cond, Corrections, Gate, GateOp, Outcomes, Statevector};
use crate::code::{parse_coord, parse_list, Coord, ParityCode, PhysicalQubit, Stabilizer};
use crate::gf2::{BitMatrix, BitVec};
use crate::labels::{self, LogicalIndex, QubitLabel};
use crate::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepKind {
    AddCnot,
    AddMeasure,
    RemoveCnot,
    RemoveMeasure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Method {
    Cnot,
    #[default]
    Measure,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PauliKind {
    X,
    Z,
}

/// A classically controlled Pauli: apply `pauli` on `qubits` when `cond` holds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorrectionRecord {
    pub pauli: PauliKind,
    pub qubits: Vec<String>,
    pub cond: Cond,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DeformationStep {
    pub kind: StepKind,
    /// Id in the code the step acts on (the grown code for additions).
    pub subject: usize,
    pub subject_name: String,
    pub label: QubitLabel,
    /// Partner ids; their labels cancel the subject's.
    pub partners: Vec<usize>,
    /// Ops emitted for this step, in circuit order.
    pub fragment: Vec<GateOp>,
    pub corrections: Vec<CorrectionRecord>,
}

#[derive(Clone, Debug)]
pub struct Deformation {
    pub start: ParityCode,
    pub code: ParityCode,
    pub circuit: Circuit,
    /// Circuit name of each start-code qubit id.
    pub names_before: Vec<String>,
    /// Circuit name of each new-code qubit id.
    pub names_after: Vec<String>,
    pub steps: Vec<DeformationStep>,
}

impl Deformation {
    pub fn corrections(&self) -> impl Iterator<Item = &CorrectionRecord> {
        self.steps.iter().flat_map(|s| s.corrections.iter())
    }

    /// Copy with circuit qubit names mapped by `qf` and bit names by `bf`.
    pub fn renamed(&self, qf: &dyn Fn(&str) -> String, bf: &dyn Fn(&str) -> String) -> Result<Deformation, Error> {
        let circuit = self.circuit.renamed(qf, bf)?;
        let mut steps = self.steps.clone();
        for step in &mut steps {
            step.subject_name = qf(&step.subject_name);
            step.fragment = step.fragment.iter().map(|op| op.renamed(qf, bf)).collect();
            for c in &mut step.corrections {
                c.qubits = c.qubits.iter().map(|q| qf(q)).collect();
                c.cond = c.cond.map_bits(bf);
            }
        }
        Ok(Deformation {
            start: self.start.clone(),
            code: self.code.clone(),
            circuit,
            names_before: self.names_before.iter().map(|q| qf(q)).collect(),
            names_after: self.names_after.iter().map(|q| qf(q)).collect(),
            steps,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Addition {
    pub label: QubitLabel,
    pub partners: Vec<usize>,
    pub coord: Option<Coord>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Removal {
    pub qubit: usize,
    /// Preferred stabilizer `partners ∪ {qubit}`; chosen automatically if absent.
    pub partners: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct DeformPlan {
    pub additions: Vec<Addition>,
    pub removals: Vec<Removal>,
}

impl DeformPlan {
    pub fn from_text(text: &str) -> Result<Self, Error> {
        let mut plan = DeformPlan::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let perr = |msg: String| Error::Parse { line: n + 1, msg };
            let mut tokens = line.split_whitespace();
            match tokens.next() {
                Some("add") => {
                    let (mut label, mut partners, mut coord) = (None, None, None);
                    for tok in tokens {
                        let (key, value) = tok.split_once('=').ok_or_else(|| perr(format!("expected key=value, got `{tok}`")))?;
                        match key {
                            "label" => {
                                let ix = parse_list(value).map_err(perr)?;
                                label = Some(QubitLabel::new(ix).map_err(|e| perr(e.to_string()))?);
                            }
                            "partners" => partners = Some(parse_list(value).map_err(perr)?),
                            "coord" => coord = Some(parse_coord(value).map_err(perr)?),
                            other => return Err(perr(format!("unknown field `{other}`"))),
                        }
                    }
                    plan.additions.push(Addition {
                        label: label.ok_or_else(|| perr("add without label".into()))?,
                        partners: partners.ok_or_else(|| perr("add without partners".into()))?,
                        coord,
                    });
                }
                Some("remove") => {
                    let id = tokens
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| perr("remove needs a qubit id".into()))?;
                    let mut partners = None;
                    for tok in tokens {
                        match tok.split_once('=') {
                            Some(("partners", v)) => partners = Some(parse_list(v).map_err(perr)?),
                            _ => return Err(perr(format!("unexpected `{tok}`"))),
                        }
                    }
                    plan.removals.push(Removal { qubit: id, partners });
                }
                Some(other) => return Err(perr(format!("unknown directive `{other}`"))),
                None => unreachable!(),
            }
        }
        Ok(plan)
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let mut out = String::new();
        for a in &self.additions {
            let _ = write!(out, "add label=[{}] partners=[{}]", list(a.label.indices()), list(&a.partners));
            if let Some((r, c)) = a.coord {
                let _ = write!(out, " coord=({r},{c})");
            }
            out.push('\n');
        }
        for r in &self.removals {
            let _ = write!(out, "remove {}", r.qubit);
            if let Some(p) = &r.partners {
                let _ = write!(out, " partners=[{}]", list(p));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchOptions {
    pub method: Method,
    /// Stabilizer measurement repetitions; corrections read the last round.
    pub repeats: usize,
    /// Distance every intermediate code must keep; defaults to the start distance.
    pub min_distance: Option<usize>,
    pub check_distance: bool,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            method: Method::Measure,
            repeats: 1,
            min_distance: None,
            check_distance: true,
        }
    }
}

struct Builder {
    start: ParityCode,
    qubits: Vec<PhysicalQubit>,
    stabs: Vec<Stabilizer>,
    names: Vec<String>,
    circuit: Circuit,
    steps: Vec<DeformationStep>,
    next_name: usize,
    ancillas: usize,
    bits: usize,
}

impl Builder {
    fn new(code: &ParityCode) -> Result<Self, Error> {
        let names: Vec<String> = (0..code.n()).map(|id| format!("q{id}")).collect();
        Ok(Self {
            start: code.clone(),
            qubits: code.qubits().to_vec(),
            stabs: code.stabilizers().to_vec(),
            circuit: Circuit::new(&names)?,
            names,
            steps: Vec::new(),
            next_name: code.n(),
            ancillas: 0,
            bits: 0,
        })
    }

    fn code(&self) -> Result<ParityCode, Error> {
        ParityCode::new(self.qubits.clone(), self.stabs.clone())
    }

    fn emit(&mut self, op: GateOp, fragment: &mut Vec<GateOp>) -> Result<(), Error> {
        self.circuit.push(op.clone())?;
        fragment.push(op);
        Ok(())
    }

    fn fresh_ancilla(&mut self) -> Result<String, Error> {
        let name = format!("anc{}", self.ancillas);
        self.ancillas += 1;
        self.circuit.add_qubit(&name)?;
        Ok(name)
    }

    fn fresh_bit(&mut self, prefix: &str) -> String {
        self.bits += 1;
        format!("{prefix}{}", self.bits - 1)
    }

    /// Checks the relation and appends qubit plus stabilizer; returns the new id.
    fn grow(&mut self, add: &Addition) -> Result<usize, Error> {
        let n = self.qubits.len();
        if add.partners.is_empty() {
            return Err(Error::Deformation("addition needs at least one partner".into()));
        }
        let mut seen = BTreeSet::new();
        for &p in &add.partners {
            if p >= n {
                return Err(Error::UnknownQubit(p));
            }
            if !seen.insert(p) {
                return Err(Error::Deformation(format!("partner {p} listed twice")));
            }
        }
        let residue = labels::symdiff(add.partners.iter().map(|&p| &self.qubits[p].label).chain([&add.label]));
        if !residue.is_empty() {
            return Err(Error::ParityRelation(residue));
        }
        if let Some(c) = add.coord {
            if let Some(q) = self.qubits.iter().find(|q| q.coord == Some(c)) {
                return Err(Error::Deformation(format!("coordinate {c:?} is taken by qubit {}", q.id)));
            }
        }
        self.qubits.push(PhysicalQubit {
            id: n,
            label: add.label.clone(),
            coord: add.coord,
        });
        self.stabs.push(Stabilizer::new(add.partners.iter().copied().chain([n])));
        let name = format!("q{}", self.next_name);
        self.next_name += 1;
        self.circuit.add_qubit(&name)?;
        self.names.push(name);
        Ok(n)
    }

    fn add_all(&mut self, adds: &[Addition], method: Method, repeats: usize) -> Result<(), Error> {
        let first = self.qubits.len();
        let ids: Vec<usize> = adds.iter().map(|a| self.grow(a)).collect::<Result<_, _>>()?;
        let first_step = self.steps.len();
        for (a, &id) in adds.iter().zip(&ids) {
            self.steps.push(DeformationStep {
                kind: if method == Method::Cnot { StepKind::AddCnot } else { StepKind::AddMeasure },
                subject: id,
                subject_name: self.names[id].clone(),
                label: a.label.clone(),
                partners: a.partners.clone(),
                fragment: Vec::new(),
                corrections: Vec::new(),
            });
        }
        match method {
            Method::Cnot => {
                for (s, (a, &id)) in adds.iter().zip(&ids).enumerate() {
                    let mut frag = Vec::new();
                    let target = self.names[id].clone();
                    self.emit(GateOp::new(Gate::Init0, &[&target]), &mut frag)?;
                    for &p in &a.partners {
                        let control = self.names[p].clone();
                        self.emit(GateOp::new(Gate::Cnot, &[&control, &target]), &mut frag)?;
                    }
                    self.steps[first_step + s].fragment = frag;
                }
            }
            Method::Measure => {
                for (s, &id) in ids.iter().enumerate() {
                    let mut frag = Vec::new();
                    let q = self.names[id].clone();
                    self.emit(GateOp::new(Gate::InitPlus, &[&q]), &mut frag)?;
                    self.steps[first_step + s].fragment = frag;
                }
                let mut outcome = Vec::new();
                for (s, &id) in ids.iter().enumerate() {
                    let mut frag = Vec::new();
                    let support = self.stabs[self.stabs.len() - ids.len() + s].support.clone();
                    let mut last = String::new();
                    for _ in 0..repeats.max(1) {
                        let anc = self.fresh_ancilla()?;
                        self.emit(GateOp::new(Gate::Init0, &[&anc]), &mut frag)?;
                        for &q in &support {
                            let control = self.names[q].clone();
                            self.emit(GateOp::new(Gate::Cnot, &[&control, &anc]), &mut frag)?;
                        }
                        last = self.fresh_bit("a");
                        self.emit(GateOp::measure(Gate::MeasureZ, &anc, &last), &mut frag)?;
                    }
                    outcome.push((id, last));
                    self.steps[first_step + s].fragment.extend(frag);
                }
                // X on new qubit j flips every new stabilizer containing it. Each
                // stabilizer contains its own qubit and only earlier new ones, so
                // forward substitution gives the flip of qubit j as an XOR of outcomes.
                let mut flips: Vec<BTreeSet<String>> = Vec::new();
                for (s, (_, bit)) in outcome.iter().enumerate() {
                    let support = &self.stabs[self.stabs.len() - ids.len() + s].support;
                    let mut set = BTreeSet::from([bit.clone()]);
                    for (i, &earlier) in ids[..s].iter().enumerate() {
                        if support.contains(&earlier) {
                            set = set.symmetric_difference(&flips[i]).cloned().collect();
                        }
                    }
                    flips.push(set);
                }
                for (s, set) in flips.into_iter().enumerate() {
                    if set.is_empty() {
                        continue;
                    }
                    let cond = if set.len() == 1 {
                        Cond::Bit(set.into_iter().next().expect("one bit"))
                    } else {
                        Cond::xor_of(set)
                    };
                    let q = self.names[ids[s]].clone();
                    let mut frag = Vec::new();
                    self.emit(GateOp::new(Gate::X, &[&q]).when(cond.clone()), &mut frag)?;
                    let step = &mut self.steps[first_step + s];
                    step.fragment.extend(frag);
                    step.corrections.push(CorrectionRecord {
                        pauli: PauliKind::X,
                        qubits: vec![q],
                        cond,
                    });
                }
            }
        }
        debug_assert_eq!(self.qubits.len(), first + adds.len());
        Ok(())
    }

    fn remove_all(&mut self, removals: &[Removal], method: Method, repeats: usize) -> Result<(), Error> {
        let n = self.qubits.len();
        let removed: Vec<usize> = removals.iter().map(|r| r.qubit).collect();
        let mut seen = BTreeSet::new();
        for &q in &removed {
            if q >= n {
                return Err(Error::UnknownQubit(q));
            }
            if !seen.insert(q) {
                return Err(Error::Deformation(format!("qubit {q} removed twice")));
            }
        }
        let original = BitMatrix::from_rows(n, self.stabs.iter().map(|s| BitVec::from_indices(n, s.support.iter().copied())).collect());
        let mut rows: Vec<BitVec> = original.rows().to_vec();
        let mut modified = vec![false; rows.len()];
        let mut pivots: Vec<usize> = Vec::new();
        for r in removals {
            let q = r.qubit;
            let candidates: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].get(q) && !pivots.contains(&i)).collect();
            if candidates.is_empty() {
                return Err(Error::Deformation(format!(
                    "removing qubit {q} would eliminate a logical degree of freedom"
                )));
            }
            let wanted = r.partners.as_ref().map(|p| BitVec::from_indices(n, p.iter().copied().chain([q])));
            let pick = candidates
                .iter()
                .copied()
                .find(|&i| wanted.as_ref() == Some(&rows[i]))
                .unwrap_or_else(|| *candidates.iter().min_by_key(|&&i| (rows[i].count_ones(), i)).expect("non-empty"));
            let pivot = rows[pick].clone();
            for i in 0..rows.len() {
                if i != pick && rows[i].get(q) {
                    rows[i].xor_assign(&pivot);
                    modified[i] = true;
                }
            }
            pivots.push(pick);
        }

        let mut steps = Vec::new();
        for (r, &pick) in removals.iter().zip(&pivots) {
            let q = r.qubit;
            let rest: Vec<usize> = rows[pick].iter_ones().filter(|&i| i != q).collect();
            let partners = match (&r.partners, method) {
                (Some(p), Method::Cnot) => {
                    let v = BitVec::from_indices(n, p.iter().copied().chain([q]));
                    if p.contains(&q) || !original.spans(&v) {
                        return Err(Error::Deformation(format!("partners {p:?} with qubit {q} do not form a stabilizer")));
                    }
                    let earlier = &removed[..steps.len()];
                    if let Some(other) = p.iter().find(|x| earlier.contains(x)) {
                        return Err(Error::Deformation(format!("partner {other} of qubit {q} is removed before it")));
                    }
                    p.clone()
                }
                _ => rest.clone(),
            };
            steps.push(DeformationStep {
                kind: if method == Method::Cnot { StepKind::RemoveCnot } else { StepKind::RemoveMeasure },
                subject: q,
                subject_name: self.names[q].clone(),
                label: self.qubits[q].label.clone(),
                partners,
                fragment: Vec::new(),
                corrections: Vec::new(),
            });
        }
        match method {
            Method::Cnot => {
                for step in &mut steps {
                    let target = self.names[step.subject].clone();
                    for &p in &step.partners {
                        let op = GateOp::new(Gate::Cnot, &[&self.names[p], &target]);
                        self.circuit.push(op.clone())?;
                        step.fragment.push(op);
                    }
                }
            }
            Method::Measure => {
                let mut bits = Vec::new();
                for step in &mut steps {
                    let q = self.names[step.subject].clone();
                    let mut last = String::new();
                    for _ in 0..repeats.max(1) {
                        self.bits += 1;
                        last = format!("r{}", self.bits - 1);
                        let op = GateOp::measure(Gate::MeasureX, &q, &last);
                        self.circuit.push(op.clone())?;
                        step.fragment.push(op);
                    }
                    bits.push(last);
                }
                // Pivots avoid the other removed qubits, so corrections are independent.
                for (step, bit) in steps.iter_mut().zip(bits) {
                    let targets: Vec<String> = step.partners.iter().map(|&p| self.names[p].clone()).collect();
                    for t in &targets {
                        let op = GateOp::new(Gate::Z, &[t]).when(Cond::Bit(bit.clone()));
                        self.circuit.push(op.clone())?;
                        step.fragment.push(op);
                    }
                    step.corrections.push(CorrectionRecord {
                        pauli: PauliKind::Z,
                        qubits: targets,
                        cond: Cond::Bit(bit),
                    });
                }
            }
        }
        self.steps.extend(steps);

        let keep: Vec<usize> = (0..n).filter(|q| !removed.contains(q)).collect();
        let mut new_id = vec![usize::MAX; n];
        for (i, &q) in keep.iter().enumerate() {
            new_id[q] = i;
        }
        self.qubits = keep
            .iter()
            .enumerate()
            .map(|(i, &q)| PhysicalQubit {
                id: i,
                label: self.qubits[q].label.clone(),
                coord: self.qubits[q].coord,
            })
            .collect();
        self.names = keep.iter().map(|&q| self.names[q].clone()).collect();
        self.stabs = rows
            .iter()
            .enumerate()
            .filter(|(i, _)| !pivots.contains(i))
            .map(|(i, row)| {
                let s = Stabilizer::new(row.iter_ones().map(|q| new_id[q]));
                match self.stabs[i].ancilla {
                    Some(a) if !modified[i] => s.with_ancilla(a),
                    _ => s,
                }
            })
            .collect();
        Ok(())
    }

    fn finish(self) -> Result<Deformation, Error> {
        let code = self.code()?;
        Ok(Deformation {
            names_before: (0..self.start.n()).map(|id| format!("q{id}")).collect(),
            start: self.start,
            code,
            circuit: self.circuit,
            names_after: self.names,
            steps: self.steps,
        })
    }
}

fn single_add(code: &ParityCode, label: QubitLabel, partners: &[usize], coord: Option<Coord>, method: Method) -> Result<Deformation, Error> {
    let mut b = Builder::new(code)?;
    b.add_all(
        &[Addition {
            label,
            partners: partners.to_vec(),
            coord,
        }],
        method,
        1,
    )?;
    b.finish()
}

/// Adds a qubit initialized in `|0⟩` and set by one CNOT per partner.
pub fn add_qubit_cnot(code: &ParityCode, label: QubitLabel, partners: &[usize], coord: Option<Coord>) -> Result<Deformation, Error> {
    single_add(code, label, partners, coord, Method::Cnot)
}

/// Adds a qubit in `|+⟩`, measures the new stabilizer through an ancilla and
/// flips the qubit on outcome −1.
pub fn add_qubit_measure(code: &ParityCode, label: QubitLabel, partners: &[usize], coord: Option<Coord>) -> Result<Deformation, Error> {
    single_add(code, label, partners, coord, Method::Measure)
}

/// Removes a qubit by undoing its parity with CNOTs from `partners`, which
/// together with the qubit must be a stabilizer. Empty `partners` picks one.
pub fn remove_qubit_cnot(code: &ParityCode, qubit: usize, partners: &[usize]) -> Result<Deformation, Error> {
    let mut b = Builder::new(code)?;
    let partners = (!partners.is_empty()).then(|| partners.to_vec());
    b.remove_all(&[Removal { qubit, partners }], Method::Cnot, 1)?;
    b.finish()
}

/// Removes a qubit by an X measurement and, on outcome −1, Z flips on the
/// rest of the pivot stabilizer.
pub fn remove_qubit_measure(code: &ParityCode, qubit: usize) -> Result<Deformation, Error> {
    let mut b = Builder::new(code)?;
    b.remove_all(&[Removal { qubit, partners: None }], Method::Measure, 1)?;
    b.finish()
}

/// Code after removing `ids` (plain bookkeeping, no circuit).
fn code_without(code: &ParityCode, removals: &[Removal]) -> Result<ParityCode, Error> {
    let mut b = Builder::new(code)?;
    b.remove_all(removals, Method::Measure, 1)?;
    b.code()
}

/// All additions in one round, then all removals in one round.
///
/// With `check_distance`, every intermediate code (after each addition, then
/// after each prefix of the removals) must keep distance at least the floor.
pub fn batch_deform(code: &ParityCode, plan: &DeformPlan, opts: &BatchOptions) -> Result<Deformation, Error> {
    if plan.additions.is_empty() && plan.removals.is_empty() {
        return Err(Error::Deformation("empty plan".into()));
    }
    let floor = match (opts.check_distance, opts.min_distance) {
        (false, _) => 0,
        (true, Some(d)) => d,
        (true, None) => code.code_distance()?,
    };
    let check = |step: usize, description: String, c: &ParityCode| -> Result<(), Error> {
        if floor == 0 {
            return Ok(());
        }
        let distance = c.code_distance()?;
        if distance < floor {
            return Err(Error::DistanceViolation {
                step,
                description,
                distance,
                floor,
            });
        }
        Ok(())
    };

    let mut b = Builder::new(code)?;
    for (s, a) in plan.additions.iter().enumerate() {
        let id = b.grow(a)?;
        let c = b.code()?;
        check(s + 1, format!("add {} as qubit {id}", a.label), &c)?;
    }
    let grown = b.code()?;
    for t in 1..=plan.removals.len() {
        let c = code_without(&grown, &plan.removals[..t])?;
        let r = &plan.removals[t - 1];
        check(plan.additions.len() + t, format!("remove qubit {}", r.qubit), &c)?;
    }

    let mut b = Builder::new(code)?;
    if !plan.additions.is_empty() {
        b.add_all(&plan.additions, opts.method, opts.repeats)?;
    }
    if !plan.removals.is_empty() {
        b.remove_all(&plan.removals, opts.method, opts.repeats)?;
    }
    let out = b.finish()?;
    let report = out.code.validate();
    if !report.ok() {
        return Err(Error::Deformation(format!("resulting code is invalid: {:?}", report.violations)));
    }
    Ok(out)
}

/// Adds a qubit carrying a fresh logical index; stabilizers are unchanged.
pub fn introduce_logical(code: &ParityCode, label: QubitLabel, coord: Option<Coord>) -> Result<ParityCode, Error> {
    let used: BTreeSet<LogicalIndex> = code.logical_indices().into_iter().collect();
    let fresh = label.indices().iter().filter(|i| !used.contains(i)).count();
    if fresh != 1 {
        return Err(Error::Deformation(format!(
            "label {label} must contain exactly one unused logical index"
        )));
    }
    let mut qubits = code.qubits().to_vec();
    qubits.push(PhysicalQubit {
        id: qubits.len(),
        label,
        coord,
    });
    ParityCode::new(qubits, code.stabilizers().to_vec())
}

/// Removes the single qubit carrying logical `i`; `i` must occur nowhere else.
pub fn drop_logical(code: &ParityCode, i: LogicalIndex) -> Result<ParityCode, Error> {
    let carriers: Vec<usize> = code.qubits().iter().filter(|q| q.label.contains(i)).map(|q| q.id).collect();
    match carriers.as_slice() {
        [] => Err(Error::NotEncoded(i)),
        [q] if code.stabilizers().iter().all(|s| !s.contains(*q)) => {
            let qubits = code
                .qubits()
                .iter()
                .filter(|p| p.id != *q)
                .enumerate()
                .map(|(id, p)| PhysicalQubit { id, ..p.clone() })
                .collect();
            let stabs = code
                .stabilizers()
                .iter()
                .map(|s| Stabilizer {
                    support: s.support.iter().map(|&x| if x > *q { x - 1 } else { x }).collect(),
                    ancilla: s.ancilla,
                })
                .collect();
            ParityCode::new(qubits, stabs)
        }
        _ => Err(Error::Deformation(format!(
            "logical {i} is carried by {} qubits and cannot be dropped",
            carriers.len()
        ))),
    }
}

/// Whether two codes on the same qubits have the same stabilizer group.
pub fn same_stabilizer_group(a: &ParityCode, b: &ParityCode) -> bool {
    if a.n() != b.n() {
        return false;
    }
    let (ma, mb) = (a.stabilizer_matrix(), b.stabilizer_matrix());
    ma.rank() == mb.rank() && mb.rows().iter().all(|r| ma.spans(r))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyOptions {
    /// Enumerate every outcome pattern up to this many measurements.
    pub exhaustive_up_to: usize,
    /// Sampled patterns above that.
    pub samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            exhaustive_up_to: 10,
            samples: 64,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VerifyReport {
    pub branches: usize,
    /// Sum of branch probabilities (1 when exhaustive).
    pub total_probability: f64,
    /// Largest distance from the logical identity, up to global phase.
    pub max_deviation: f64,
    pub max_leakage: f64,
}

impl VerifyReport {
    pub fn ok(&self) -> bool {
        self.max_deviation < circuit::TOLERANCE && self.max_leakage < circuit::TOLERANCE
    }
}

/// Outcome patterns to check: all of them, or sampled runs on an encoded
/// `|+…+⟩` input.
pub(crate) fn outcome_patterns(circuit: &Circuit, input: &[CodeBlock], opts: &VerifyOptions) -> Result<(Vec<Vec<bool>>, bool), Error> {
    let m = circuit.num_measurements();
    if m <= opts.exhaustive_up_to {
        return Ok((circuit::all_outcomes(m).collect(), true));
    }
    let n = circuit.qubits().len();
    let mut amps = vec![circuit::C64::new(1.0, 0.0)];
    let mut order: Vec<usize> = Vec::new();
    for block in input {
        let k = block.code.k();
        let enc = circuit::encode_logical(block.code, &circuit::LogicalStateSpec::plus(k))?;
        amps = amps.iter().flat_map(|a| enc.amplitudes().iter().map(move |b| a * b)).collect();
        order.extend(block.names.iter().map(|nm| circuit.qubit_index(nm)).collect::<Result<Vec<_>, _>>()?);
    }
    let mut full = vec![circuit::C64::new(0.0, 0.0); 1 << n];
    let width = order.len();
    for (idx, a) in amps.iter().enumerate() {
        let mut reg = 0usize;
        for (pos, &q) in order.iter().enumerate() {
            if idx >> (width - 1 - pos) & 1 == 1 {
                reg |= 1 << (n - 1 - q);
            }
        }
        full[reg] = *a;
    }
    let init = Statevector::from_amplitudes(n, full)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut patterns = BTreeSet::new();
    for _ in 0..opts.samples {
        let r = circuit::simulate(circuit, &init, Outcomes::Sample(&mut rng), Corrections::Physical)?;
        patterns.insert(r.record.iter().map(|(_, b)| *b).collect::<Vec<bool>>());
    }
    Ok((patterns.into_iter().collect(), false))
}

impl Deformation {
    /// Statevector check that every outcome branch acts as the logical
    /// identity from the start code to the new code.
    pub fn verify(&self, opts: &VerifyOptions) -> Result<VerifyReport, Error> {
        let input = CodeBlock::new(&self.start, self.names_before.clone())?;
        let output = CodeBlock::new(&self.code, self.names_after.clone())?;
        let (patterns, _) = outcome_patterns(&self.circuit, std::slice::from_ref(&input), opts)?;
        let dim = 1usize << self.start.k();
        if self.code.k() != self.start.k() {
            return Err(Error::Verification("logical count changed".into()));
        }
        let identity = circuit::CMatrix::identity(dim);
        let results: Vec<Option<(f64, f64, f64)>> = patterns
            .par_iter()
            .map(|p| {
                let branch = Branch::outcomes(p.clone());
                match circuit::logical_action(&self.circuit, std::slice::from_ref(&input), std::slice::from_ref(&output), &branch) {
                    Ok(act) => {
                        let (_, dev) = circuit::compare_up_to_global_phase(&act.matrix, &identity);
                        Ok(Some((act.probability, dev, act.leakage)))
                    }
                    Err(Error::Simulation(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })
            .collect::<Result<_, Error>>()?;
        let live: Vec<(f64, f64, f64)> = results.into_iter().flatten().filter(|r| r.0 > 1e-12).collect();
        Ok(VerifyReport {
            branches: live.len(),
            total_probability: live.iter().map(|r| r.0).sum(),
            max_deviation: live.iter().map(|r| r.1).fold(0.0, f64::max),
            max_leakage: live.iter().map(|r| r.2).fold(0.0, f64::max),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layouts::lhz_layout;

    fn id_of(code: &ParityCode, label: QubitLabel) -> usize {
        code.qubits_with_label(&label)[0]
    }

    fn lhz3() -> ParityCode {
        lhz_layout(3).unwrap().code
    }

    #[test]
    fn add_and_remove_round_trip() {
        let code = lhz_layout(4).unwrap().code;
        let q13 = id_of(&code, QubitLabel::pair(1, 3));
        let reduced = remove_qubit_cnot(&code, q13, &[]).unwrap();
        assert_eq!(reduced.code.n(), code.n() - 1);
        assert_eq!(reduced.code.k(), 4);
        assert!(reduced.code.validate().ok());
        let p12 = id_of(&reduced.code, QubitLabel::pair(1, 2));
        let p23 = id_of(&reduced.code, QubitLabel::pair(2, 3));
        let back = add_qubit_cnot(&reduced.code, QubitLabel::pair(1, 3), &[p12, p23], None).unwrap();
        let s = back.code.stabilizers().last().unwrap();
        assert_eq!(s.support, vec![p12, p23, back.code.n() - 1]);
        assert!(back.code.validate().ok());

        let plus = add_qubit_cnot(&code, QubitLabel::pair(1, 3), &[id_of(&code, QubitLabel::pair(1, 2)), id_of(&code, QubitLabel::pair(2, 3))], None).unwrap();
        let undone = remove_qubit_cnot(&plus.code, code.n(), &[]).unwrap();
        assert_eq!(undone.code, code);
        assert!(same_stabilizer_group(&undone.code, &code));
    }

    #[test]
    fn relation_and_rank_errors() {
        let code = lhz3();
        let p = |a, b| id_of(&code, QubitLabel::pair(a, b));
        let bad = add_qubit_cnot(&code, QubitLabel::pair(1, 2), &[p(0, 1), p(0, 2)], None);
        assert!(bad.is_ok(), "{{0,1}}△{{0,2}} = {{1,2}}");
        let bad = add_qubit_cnot(&code, QubitLabel::pair(0, 1), &[p(0, 1), p(0, 2)], None);
        assert!(matches!(bad, Err(Error::ParityRelation(_))));

        let chain = ParityCode::from_labels(vec![QubitLabel::base(0), QubitLabel::base(0), QubitLabel::base(5)], vec![vec![0, 1]]).unwrap();
        assert!(remove_qubit_measure(&chain, 2).is_err());
        assert!(remove_qubit_measure(&chain, 1).is_ok());
    }

    #[test]
    fn base_copy_is_two_body() {
        let code = lhz3();
        let d = add_qubit_cnot(&code, QubitLabel::base(0), &[0], Some((0, -2))).unwrap();
        assert_eq!(d.code.stabilizers().last().unwrap().support, vec![0, code.n()]);
        assert_eq!(d.circuit.ops().len(), 2);
    }

    #[test]
    fn measured_addition_is_identity_in_every_branch() {
        let code = lhz3();
        let p = |a, b| id_of(&code, QubitLabel::pair(a, b));
        let d = add_qubit_measure(&code, QubitLabel::base(1), &[p(0, 1), 0], None).unwrap();
        assert_eq!(d.corrections().count(), 1);
        let r = d.verify(&VerifyOptions::default()).unwrap();
        assert_eq!(r.branches, 2);
        assert!(r.ok(), "{r:?}");
        assert!((r.total_probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn measured_removal_is_identity_in_every_branch() {
        let code = lhz_layout(4).unwrap().code;
        let q13 = id_of(&code, QubitLabel::pair(1, 3));
        let d = remove_qubit_measure(&code, q13).unwrap();
        let r = d.verify(&VerifyOptions::default()).unwrap();
        assert_eq!(r.branches, 2);
        assert!(r.ok(), "{r:?}");
        let cnot = remove_qubit_cnot(&code, q13, &[]).unwrap();
        assert!(cnot.verify(&VerifyOptions::default()).unwrap().ok());
    }

    #[test]
    fn dependent_additions_share_one_round() {
        let code = lhz3();
        let n = code.n();
        let plan = DeformPlan {
            additions: vec![
                Addition {
                    label: QubitLabel::base(0),
                    partners: vec![0],
                    coord: None,
                },
                Addition {
                    label: QubitLabel::base(0),
                    partners: vec![n],
                    coord: None,
                },
            ],
            removals: vec![],
        };
        let d = batch_deform(&code, &plan, &BatchOptions::default()).unwrap();
        let conds: Vec<String> = d.corrections().map(|c| c.cond.to_string()).collect();
        assert_eq!(conds, ["c[a0]", "xor(c[a0],c[a1])"]);
        let r = d.verify(&VerifyOptions::default()).unwrap();
        assert_eq!(r.branches, 4);
        assert!(r.ok(), "{r:?}");
    }

    #[test]
    fn distance_dip_is_rejected() {
        let rep = ParityCode::from_labels(vec![QubitLabel::base(0); 3], vec![vec![0, 1], vec![1, 2]]).unwrap();
        let plan = DeformPlan {
            additions: vec![],
            removals: vec![Removal { qubit: 0, partners: None }, Removal { qubit: 1, partners: None }],
        };
        match batch_deform(&rep, &plan, &BatchOptions::default()) {
            Err(Error::DistanceViolation { step, distance, floor, .. }) => assert_eq!((step, distance, floor), (1, 2, 3)),
            other => panic!("{other:?}"),
        }
        let relaxed = BatchOptions {
            min_distance: Some(1),
            ..Default::default()
        };
        let d = batch_deform(&rep, &plan, &relaxed).unwrap();
        assert_eq!(d.code.n(), 1);
        assert!(d.verify(&VerifyOptions::default()).unwrap().ok());
    }

    #[test]
    fn logical_introduce_and_drop() {
        let code = lhz3();
        let more = introduce_logical(&code, QubitLabel::base(7), None).unwrap();
        assert_eq!(more.k(), 4);
        assert_eq!(more.stabilizers(), code.stabilizers());
        assert_eq!(drop_logical(&more, 7).unwrap(), code);
        assert!(drop_logical(&code, 0).is_err());
        assert!(introduce_logical(&code, QubitLabel::pair(0, 1), None).is_err());
    }

    #[test]
    fn plan_text_round_trip() {
        let text = "add label=[1,3] partners=[10,8] coord=(4,6)\nadd label=[0] partners=[0]\nremove 15\nremove 7 partners=[6,10]\n";
        let plan = DeformPlan::from_text(text).unwrap();
        assert_eq!(plan.to_text(), text);
        assert!(DeformPlan::from_text("add partners=[1]\n").is_err());
        assert!(DeformPlan::from_text("move 3\n").is_err());
    }
}
