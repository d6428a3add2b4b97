//! Logical gate constructions, each checked against its intended logical
//! unitary by branch-exhaustive statevector simulation.
//!
//! A [`GatePlan`] holds one circuit over one or two code blocks. Block qubits
//! are named `{prefix}{id}`, with prefix `q` for single-block gates and `c`,
//! `t` for the control and target blocks of a transversal CNOT. Extra copies
//! needed by a construction are added with CNOT-based deformation before the
//! gate and removed the same way after it, so every plan maps a code back to
//! itself. Teleportation ancillas are `a{n}` and their outcome bits `m{n}`.
//!
//! Teleported rotations use a code-side control and an ancilla-side target,
//! then measure the ancilla in Z. For an ancilla in `|+i⟩` the outcome +1
//! leaves `S = e^{iπ/4}·e^{-iπ/4·Z}` and the outcome −1 leaves `S†`; a Z on
//! the code qubit conditioned on the majority of the outcomes picks the sign.

use std::collections::{BTreeMap, HashMap};
use std::f64::consts::{FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::ops::Range;

use rayon::prelude::*;

use crate::circuit::{self, Branch, CMatrix, Circuit, CodeBlock, Cond, Gate, GateOp, Resource, C64};
use crate::code::ParityCode;
use crate::deform::{self, Addition, BatchOptions, DeformPlan, DeformationStep, Method, Removal, StepKind};
use crate::labels::{LogicalIndex, QubitLabel};
use crate::Error;

/// Cap on measurements for branch-exhaustive verification.
pub const MAX_VERIFY_MEASUREMENTS: usize = 12;

#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedUnitary {
    pub name: String,
    pub matrix: CMatrix,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct FaultToleranceNotes {
    /// Transversal CNOT only: every physical CNOT has its own control.
    pub distinct_controls: Option<bool>,
    /// Whether the plan is fault tolerant as constructed.
    pub fault_tolerant: bool,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanBlock {
    pub code: ParityCode,
    pub prefix: String,
}

impl PlanBlock {
    fn new(code: &ParityCode, prefix: &str) -> Self {
        Self {
            code: code.clone(),
            prefix: prefix.to_string(),
        }
    }

    pub fn name(&self, id: usize) -> String {
        format!("{}{id}", self.prefix)
    }
}

#[derive(Clone, Debug)]
pub struct GatePlan {
    pub name: String,
    pub circuit: Circuit,
    pub blocks: Vec<PlanBlock>,
    /// Deformations before the gate layer.
    pub pre: Vec<DeformationStep>,
    /// Deformations after it, undoing `pre`.
    pub post: Vec<DeformationStep>,
    pub expected: ExpectedUnitary,
    pub ft: FaultToleranceNotes,
    /// Majority-vote groups, as positions in measurement order.
    pub vote_groups: Vec<Vec<usize>>,
    /// Op indices of the transversal layer.
    pub gate_layer: Range<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ControlMode {
    /// One copy of the control base qubit per target carrier.
    #[default]
    Distinct,
    /// A single control qubit for every CNOT.
    Shared,
}

struct Leg {
    block: usize,
    qubit: usize,
    copies: Vec<String>,
    resource: Resource,
    /// Correction sign: `Some(true)` realizes `e^{+iπ/4·Z}`, `None` skips it.
    correct: Option<bool>,
    enable: Option<Cond>,
    bits: Vec<String>,
}

struct PlanBuilder {
    blocks: Vec<PlanBlock>,
    grown: Vec<ParityCode>,
    circuit: Circuit,
    pre: Vec<DeformationStep>,
    post: Vec<DeformationStep>,
    vote_groups: Vec<Vec<usize>>,
    measurements: usize,
    ancillas: usize,
    gate_layer: Range<usize>,
}

fn cnot_deform() -> BatchOptions {
    BatchOptions {
        method: Method::Cnot,
        repeats: 1,
        min_distance: None,
        check_distance: false,
    }
}

fn vote(bits: &[String]) -> Cond {
    match bits {
        [b] => Cond::bit(b.clone()),
        _ => Cond::maj_of(bits.iter().cloned()),
    }
}

fn and(conds: Vec<Cond>) -> Cond {
    if conds.len() == 1 {
        conds.into_iter().next().expect("one condition")
    } else {
        Cond::And(conds)
    }
}

impl PlanBuilder {
    fn new(blocks: Vec<PlanBlock>) -> Result<Self, Error> {
        let names: Vec<String> = blocks.iter().flat_map(|b| (0..b.code.n()).map(|id| b.name(id))).collect();
        Ok(Self {
            grown: blocks.iter().map(|b| b.code.clone()).collect(),
            blocks,
            circuit: Circuit::new(&names)?,
            pre: Vec::new(),
            post: Vec::new(),
            vote_groups: Vec::new(),
            measurements: 0,
            ancillas: 0,
            gate_layer: 0..0,
        })
    }

    fn push(&mut self, op: GateOp) -> Result<(), Error> {
        if op.gate.is_measurement() {
            self.measurements += 1;
        }
        self.circuit.push(op)
    }

    fn ancilla(&mut self) -> Result<String, Error> {
        let name = format!("a{}", self.ancillas);
        self.ancillas += 1;
        self.circuit.add_qubit(&name)?;
        Ok(name)
    }

    fn apply_deformation(&mut self, b: usize, plan: &DeformPlan, pre: bool) -> Result<(), Error> {
        let def = deform::batch_deform(&self.grown[b], plan, &cnot_deform())?;
        let prefix = self.blocks[b].prefix.clone();
        let def = def.renamed(&|q| format!("{prefix}{}", &q[1..]), &|x| format!("{prefix}{x}"))?;
        self.circuit.append(&def.circuit)?;
        if pre { &mut self.pre } else { &mut self.post }.extend(def.steps);
        self.grown[b] = def.code;
        Ok(())
    }

    /// Adds `count` chained copies of each listed qubit; returns the names
    /// of the qubit followed by its copies.
    fn add_copies(&mut self, b: usize, requests: &[(usize, usize)]) -> Result<Vec<Vec<String>>, Error> {
        let code = &self.grown[b];
        let mut next = code.n();
        let mut plan = DeformPlan::default();
        let mut names = Vec::new();
        for &(q, count) in requests {
            let label = code.qubit(q)?.label.clone();
            let mut chain = vec![self.blocks[b].name(q)];
            let mut prev = q;
            for _ in 0..count {
                plan.additions.push(Addition {
                    label: label.clone(),
                    partners: vec![prev],
                    coord: None,
                });
                chain.push(self.blocks[b].name(next));
                prev = next;
                next += 1;
            }
            names.push(chain);
        }
        if !plan.additions.is_empty() {
            self.apply_deformation(b, &plan, true)?;
        }
        Ok(names)
    }

    /// Removes every qubit added by `add_copies`, last copy first.
    fn remove_copies(&mut self, b: usize) -> Result<(), Error> {
        let n0 = self.blocks[b].code.n();
        let grown = &self.grown[b];
        if grown.n() == n0 {
            return Ok(());
        }
        let mut plan = DeformPlan::default();
        for id in (n0..grown.n()).rev() {
            let partner = grown
                .stabilizers()
                .iter()
                .find(|s| s.support.len() == 2 && s.support[1] == id)
                .map(|s| s.support[0])
                .ok_or_else(|| Error::Deformation(format!("copy {id} has no 2-body stabilizer")))?;
            plan.removals.push(Removal {
                qubit: id,
                partners: Some(vec![partner]),
            });
        }
        self.apply_deformation(b, &plan, false)
    }

    /// One teleportation round: prepare, couple, measure, correct.
    fn teleport_round(&mut self, legs: &mut [Leg]) -> Result<(), Error> {
        let mut ancillas = Vec::new();
        for leg in legs.iter() {
            let anc: Vec<String> = (0..leg.copies.len()).map(|_| self.ancilla()).collect::<Result<_, _>>()?;
            self.push(GateOp::new(Gate::InitState(leg.resource), &[&anc[0]]))?;
            for a in &anc[1..] {
                self.push(GateOp::new(Gate::Cnot, &[&anc[0], a]))?;
            }
            ancillas.push(anc);
        }
        let start = self.circuit.ops().len();
        for (leg, anc) in legs.iter().zip(&ancillas) {
            for (c, a) in leg.copies.iter().zip(anc) {
                let mut op = GateOp::new(Gate::Cnot, &[c, a]);
                op.cond = leg.enable.clone();
                self.push(op)?;
            }
        }
        if self.gate_layer.is_empty() {
            self.gate_layer = start..self.circuit.ops().len();
        }
        for (leg, anc) in legs.iter_mut().zip(&ancillas) {
            let mut group = Vec::new();
            for a in anc {
                let bit = format!("m{}", self.measurements);
                group.push(self.measurements);
                self.push(GateOp::measure(Gate::MeasureZ, a, &bit))?;
                leg.bits.push(bit);
            }
            self.vote_groups.push(group);
        }
        for leg in legs.iter() {
            let Some(sign) = leg.correct else { continue };
            let v = vote(&leg.bits);
            let fire = if sign { v.negate() } else { v };
            let cond = and(leg.enable.iter().cloned().chain([fire]).collect());
            self.push(GateOp::new(Gate::Z, &[&leg.copies[0]]).when(cond))?;
        }
        Ok(())
    }

    fn finish(self, name: String, expected: ExpectedUnitary, ft: FaultToleranceNotes) -> Result<GatePlan, Error> {
        let defect = expected.matrix.unitarity_defect();
        if defect > 1e-12 {
            return Err(Error::Verification(format!("expected matrix is not unitary ({defect:.3e})")));
        }
        for (b, block) in self.blocks.iter().enumerate() {
            if self.grown[b] != block.code {
                return Err(Error::Deformation(format!("block {} was not restored", block.prefix)));
            }
        }
        Ok(GatePlan {
            name,
            circuit: self.circuit,
            blocks: self.blocks,
            pre: self.pre,
            post: self.post,
            expected,
            ft,
            vote_groups: self.vote_groups,
            gate_layer: self.gate_layer,
        })
    }
}

/// Logical values `z̃` of each encoded index for basis state `b`.
fn logical_bits(code: &ParityCode, b: usize) -> BTreeMap<LogicalIndex, bool> {
    let logicals = code.logical_indices();
    let k = logicals.len();
    logicals.into_iter().enumerate().map(|(pos, i)| (i, b >> (k - 1 - pos) & 1 == 1)).collect()
}

/// `∏_{i∈L} z̃ᵢ` as ±1 (bit 0 is +1).
fn parity_sign(bits: &BTreeMap<LogicalIndex, bool>, label: &QubitLabel) -> f64 {
    if label.indices().iter().filter(|i| bits[i]).count() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn diagonal(code: &ParityCode, phase: impl Fn(&BTreeMap<LogicalIndex, bool>) -> f64) -> CMatrix {
    let dim = 1usize << code.k();
    let d: Vec<C64> = (0..dim).map(|b| C64::from_polar(1.0, phase(&logical_bits(code, b)))).collect();
    CMatrix::diag(&d)
}

fn require_encoded(code: &ParityCode) -> Result<(), Error> {
    let refs = code.logical_indices().len();
    if code.k() != refs {
        return Err(Error::InvalidCode(format!("{refs} logical indices referenced but only {} encoded", code.k())));
    }
    Ok(())
}

fn require_odd(d: usize) -> Result<(), Error> {
    if d == 0 || d.is_multiple_of(2) {
        return Err(Error::InvalidArgument(format!("repetition distance must be odd, got {d}")));
    }
    Ok(())
}

fn label_qubit(code: &ParityCode, label: &QubitLabel) -> Result<usize, Error> {
    code.qubits_with_label(label)
        .first()
        .copied()
        .ok_or_else(|| Error::InvalidArgument(format!("no qubit labelled {label}; add one by deformation first")))
}

fn label_name(label: &QubitLabel) -> String {
    label.indices().iter().map(|i| format!("Z{i}")).collect::<Vec<_>>().join("·")
}

/// Logical `CNOT(i → j)` between two blocks: one physical CNOT onto every
/// target-block qubit whose label contains `j`, each controlled by a copy of
/// the control block's base qubit `{i}`.
pub fn transversal_cnot(ctrl: &ParityCode, i: LogicalIndex, tgt: &ParityCode, j: LogicalIndex, mode: ControlMode) -> Result<GatePlan, Error> {
    require_encoded(ctrl)?;
    require_encoded(tgt)?;
    if !tgt.logical_indices().contains(&j) {
        return Err(Error::NotEncoded(j));
    }
    let base = label_qubit(ctrl, &QubitLabel::base(i))?;
    let carriers: Vec<usize> = tgt.qubits().iter().filter(|q| q.label.contains(j)).map(|q| q.id).collect();
    let mut pb = PlanBuilder::new(vec![PlanBlock::new(ctrl, "c"), PlanBlock::new(tgt, "t")])?;
    let controls: Vec<String> = match mode {
        ControlMode::Shared => vec![pb.blocks[0].name(base); carriers.len()],
        ControlMode::Distinct => {
            let existing = ctrl.qubits_with_label(&QubitLabel::base(i));
            let missing = carriers.len().saturating_sub(existing.len());
            let chain = pb.add_copies(0, &[(*existing.last().expect("base exists"), missing)])?;
            let mut names: Vec<String> = existing[..existing.len() - 1].iter().map(|&q| pb.blocks[0].name(q)).collect();
            names.extend(chain.into_iter().flatten());
            names.truncate(carriers.len());
            names
        }
    };
    let start = pb.circuit.ops().len();
    for (c, &t) in controls.iter().zip(&carriers) {
        let t = pb.blocks[1].name(t);
        pb.push(GateOp::new(Gate::Cnot, &[c, &t]))?;
    }
    pb.gate_layer = start..pb.circuit.ops().len();
    pb.remove_copies(0)?;

    let (k1, k2) = (ctrl.k(), tgt.k());
    let (ci, tj) = (
        ctrl.logical_indices().iter().position(|&x| x == i).ok_or(Error::NotEncoded(i))?,
        tgt.logical_indices().iter().position(|&x| x == j).expect("checked"),
    );
    let dim = 1usize << (k1 + k2);
    let mut m = CMatrix::zeros(dim, dim);
    for b in 0..dim {
        let control = b >> (k1 + k2 - 1 - ci) & 1;
        let out = b ^ (control << (k2 - 1 - tj));
        m.set(out, b, C64::new(1.0, 0.0));
    }
    let distinct = {
        let mut c = controls.clone();
        c.sort();
        c.dedup();
        c.len() == controls.len()
    };
    let ft = FaultToleranceNotes {
        distinct_controls: Some(distinct),
        fault_tolerant: distinct,
        notes: if distinct {
            vec![]
        } else {
            vec!["a fault on the shared control spreads to every target carrier".into()]
        },
    };
    let name = format!("cnot c:{i} -> t:{j}");
    pb.finish(name.clone(), ExpectedUnitary { name, matrix: m }, ft)
}

/// One `Rz(angle)` per term on a qubit carrying the term's label, all in one
/// time step. The logical action is `∏ exp(i·angle/2·∏_{i∈label} Z̃ᵢ)`.
pub fn diagonal_rotation(code: &ParityCode, terms: &[(QubitLabel, f64)]) -> Result<GatePlan, Error> {
    require_encoded(code)?;
    let mut pb = PlanBuilder::new(vec![PlanBlock::new(code, "q")])?;
    let mut used: HashMap<QubitLabel, usize> = HashMap::new();
    let start = pb.circuit.ops().len();
    for (label, angle) in terms {
        let carriers = code.qubits_with_label(label);
        let slot = used.entry(label.clone()).or_default();
        let &q = carriers.get(*slot).ok_or_else(|| {
            Error::InvalidArgument(if carriers.is_empty() {
                format!("no qubit labelled {label}; add one by deformation first")
            } else {
                format!("more terms on {label} than qubits carrying it")
            })
        })?;
        *slot += 1;
        pb.push(GateOp::new(Gate::Rz(*angle), &[&pb.blocks[0].name(q)]))?;
    }
    pb.gate_layer = start..pb.circuit.ops().len();
    let matrix = diagonal(code, |bits| terms.iter().map(|(l, a)| a / 2.0 * parity_sign(bits, l)).sum());
    let pauli_only = terms.iter().all(|(_, a)| (a / PI - (a / PI).round()).abs() < 1e-12);
    let ft = FaultToleranceNotes {
        distinct_controls: None,
        fault_tolerant: pauli_only,
        notes: if pauli_only {
            vec![]
        } else {
            vec!["continuous angles are not fault tolerant; use teleportation for multiples of π/2".into()]
        },
    };
    let name = format!("diagonal {} terms", terms.len());
    pb.finish(name.clone(), ExpectedUnitary { name, matrix }, ft)
}

/// Teleported `exp(±iπ/4·∏_{i∈L} Z̃ᵢ)` on qubits with repetition distance `d`.
fn teleported_rotations(code: &ParityCode, legs: &[(usize, bool)], d: usize) -> Result<PlanBuilder, Error> {
    require_encoded(code)?;
    require_odd(d)?;
    let mut seen = Vec::new();
    for &(q, _) in legs {
        code.qubit(q)?;
        if seen.contains(&q) {
            return Err(Error::InvalidArgument(format!("qubit {q} teleported twice in one round")));
        }
        seen.push(q);
    }
    let mut pb = PlanBuilder::new(vec![PlanBlock::new(code, "q")])?;
    let requests: Vec<(usize, usize)> = legs.iter().map(|&(q, _)| (q, d - 1)).collect();
    let copies = pb.add_copies(0, &requests)?;
    let mut round: Vec<Leg> = legs
        .iter()
        .zip(copies)
        .map(|(&(qubit, sign), copies)| Leg {
            block: 0,
            qubit,
            copies,
            resource: Resource::PlusI,
            correct: Some(sign),
            enable: None,
            bits: Vec::new(),
        })
        .collect();
    pb.teleport_round(&mut round)?;
    debug_assert!(round.iter().all(|l| l.block == 0 && l.qubit < code.n()));
    pb.remove_copies(0)?;
    Ok(pb)
}

fn teleport_ft(d: usize) -> FaultToleranceNotes {
    FaultToleranceNotes {
        distinct_controls: None,
        fault_tolerant: d > 1,
        notes: if d == 1 {
            vec!["d = 1: a single measurement error flips the applied rotation".into()]
        } else {
            vec![]
        },
    }
}

/// `exp(iπ/4·∏_{i∈L} Z̃ᵢ)` for the label `L` of `qubit`, teleported from a
/// `|+i⟩` ancilla repeated `d` times.
pub fn s_teleport(code: &ParityCode, qubit: usize, d: usize) -> Result<GatePlan, Error> {
    let pb = teleported_rotations(code, &[(qubit, true)], d)?;
    let label = code.qubit(qubit)?.label.clone();
    let matrix = diagonal(code, |bits| FRAC_PI_4 * parity_sign(bits, &label));
    let name = format!("exp(iπ/4·{})", label_name(&label));
    pb.finish(format!("s_teleport d={d}"), ExpectedUnitary { name, matrix }, teleport_ft(d))
}

/// `exp(iπ/4·Z̃ᵢZ̃ⱼ)` by teleportation on the parity qubit `{i, j}`.
pub fn logical_rzz_pi4(code: &ParityCode, i: LogicalIndex, j: LogicalIndex, d: usize) -> Result<GatePlan, Error> {
    if i == j {
        return Err(Error::InvalidArgument("rzz needs two distinct logicals".into()));
    }
    let q = label_qubit(code, &QubitLabel::pair(i, j))?;
    let mut plan = s_teleport(code, q, d)?;
    plan.name = format!("rzz_pi4 {i},{j} d={d}");
    Ok(plan)
}

/// Signs `(s_ij, s_i, s_j)` with
/// `exp(iπ/4·(s_ij·ZZ + s_i·Z⊗1 + s_j·1⊗Z)) ∝ CZ`, found by enumeration.
pub fn cz_signs() -> (bool, bool, bool) {
    let sign = |s: bool| if s { 1.0 } else { -1.0 };
    for sp in [true, false] {
        for si in [true, false] {
            for sj in [true, false] {
                let phase = |zi: f64, zj: f64| FRAC_PI_4 * (sign(sp) * zi * zj + sign(si) * zi + sign(sj) * zj);
                let base = phase(1.0, 1.0);
                let rel = [phase(1.0, -1.0), phase(-1.0, 1.0), phase(-1.0, -1.0)].map(|p| p - base);
                let want = [0.0, 0.0, PI];
                let ok = rel.iter().zip(want).all(|(r, w)| {
                    let diff = (r - w).rem_euclid(2.0 * PI);
                    diff < 1e-12 || 2.0 * PI - diff < 1e-12
                });
                if ok {
                    return (sp, si, sj);
                }
            }
        }
    }
    unreachable!("CZ is a product of π/4 rotations")
}

/// Logical CZ on each pair, in one teleportation round: three teleported
/// `π/4` rotations per pair, on `{i,j}`, `{i}` and `{j}`.
pub fn logical_cz_parallel(code: &ParityCode, pairs: &[(LogicalIndex, LogicalIndex)], d: usize) -> Result<GatePlan, Error> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no CZ pairs".into()));
    }
    let (sp, si, sj) = cz_signs();
    let mut legs = Vec::new();
    for &(i, j) in pairs {
        if i == j {
            return Err(Error::InvalidArgument(format!("CZ needs two distinct logicals, got {i},{i}")));
        }
        legs.push((label_qubit(code, &QubitLabel::pair(i, j))?, sp));
        legs.push((label_qubit(code, &QubitLabel::base(i))?, si));
        legs.push((label_qubit(code, &QubitLabel::base(j))?, sj));
    }
    let pb = teleported_rotations(code, &legs, d)?;
    let matrix = diagonal(code, |bits| pairs.iter().filter(|(i, j)| bits[i] && bits[j]).count() as f64 * PI);
    let name = pairs.iter().map(|(i, j)| format!("CZ({i},{j})")).collect::<Vec<_>>().join("·");
    let mut ft = teleport_ft(d);
    ft.notes.push(format!(
        "legs: {{i,j}} {}, {{i}} {}, {{j}} {}",
        if sp { "+π/4" } else { "-π/4" },
        if si { "+π/4" } else { "-π/4" },
        if sj { "+π/4" } else { "-π/4" }
    ));
    pb.finish(format!("cz d={d}"), ExpectedUnitary { name, matrix }, ft)
}

pub fn logical_cz(code: &ParityCode, i: LogicalIndex, j: LogicalIndex, d: usize) -> Result<GatePlan, Error> {
    logical_cz_parallel(code, &[(i, j)], d)
}

/// `exp(iπ/8·∏_{i∈L} Z̃ᵢ)` from a `|T⟩` ancilla. On outcome +1 the residual
/// `exp(-iπ/8·…)` is fixed by a chained S teleportation that only couples
/// and corrects when that outcome occurred.
pub fn t_teleport(code: &ParityCode, qubit: usize, d: usize) -> Result<GatePlan, Error> {
    require_encoded(code)?;
    require_odd(d)?;
    let label = code.qubit(qubit)?.label.clone();
    let mut pb = PlanBuilder::new(vec![PlanBlock::new(code, "q")])?;
    let copies = pb.add_copies(0, &[(qubit, d - 1)])?.remove(0);
    let mut t = [Leg {
        block: 0,
        qubit,
        copies: copies.clone(),
        resource: Resource::T,
        correct: None,
        enable: None,
        bits: Vec::new(),
    }];
    pb.teleport_round(&mut t)?;
    let mut s = [Leg {
        block: 0,
        qubit,
        copies,
        resource: Resource::PlusI,
        correct: Some(true),
        enable: Some(vote(&t[0].bits).negate()),
        bits: Vec::new(),
    }];
    pb.teleport_round(&mut s)?;
    pb.remove_copies(0)?;
    let matrix = diagonal(code, |bits| FRAC_PI_4 / 2.0 * parity_sign(bits, &label));
    let mut ft = teleport_ft(d);
    if d > 1 {
        ft.fault_tolerant = false;
        ft.notes.push("experimental: repetition-encoded T correction is not analysed".into());
    }
    let name = format!("exp(iπ/8·{})", label_name(&label));
    pb.finish(format!("t_teleport d={d}"), ExpectedUnitary { name, matrix }, ft)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateReport {
    pub branches: usize,
    /// Largest distance from the expected unitary, up to global phase.
    pub max_deviation: f64,
    pub max_leakage: f64,
    pub max_unitarity_defect: f64,
}

impl GateReport {
    pub fn passed(&self) -> bool {
        self.max_deviation < circuit::TOLERANCE && self.max_leakage < circuit::TOLERANCE && self.max_unitarity_defect < circuit::TOLERANCE
    }
}

/// Maximum number of qubits of one block hit by a single X fault.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultSpread {
    pub worst_per_block: Vec<usize>,
    /// The fault location achieving the worst total.
    pub worst_fault: String,
}

impl GatePlan {
    pub fn code_blocks(&self) -> Vec<CodeBlock<'_>> {
        self.blocks.iter().map(|b| CodeBlock::prefixed(&b.code, &b.prefix)).collect()
    }

    /// Every outcome pattern. Within a vote group, outcomes that disagree
    /// with the majority are produced by injecting an X fault on that
    /// ancilla just before its measurement.
    pub fn branches(&self) -> Result<Vec<Branch>, Error> {
        let meas: Vec<(usize, &GateOp)> = self.circuit.ops().iter().enumerate().filter(|(_, o)| o.gate.is_measurement()).collect();
        if meas.len() > MAX_VERIFY_MEASUREMENTS {
            return Err(Error::CapExceeded {
                what: "measurements for exhaustive verification",
                value: meas.len(),
                cap: MAX_VERIFY_MEASUREMENTS,
            });
        }
        Ok(circuit::all_outcomes(meas.len())
            .map(|outcomes| {
                let mut faults = Vec::new();
                for group in &self.vote_groups {
                    let ones = group.iter().filter(|&&p| outcomes[p]).count();
                    let majority = 2 * ones > group.len();
                    for &p in group {
                        if outcomes[p] != majority {
                            let (k, op) = meas[p];
                            faults.push((k, op.qubits[0].clone()));
                        }
                    }
                }
                Branch { outcomes, faults }
            })
            .collect())
    }

    /// Branch-exhaustive check of the logical action against `expected`.
    pub fn verify(&self) -> Result<GateReport, Error> {
        let blocks = self.code_blocks();
        let branches = self.branches()?;
        let results: Vec<(f64, f64, f64)> = branches
            .par_iter()
            .map(|b| {
                let act = circuit::logical_action(&self.circuit, &blocks, &blocks, b)?;
                let (_, dev) = circuit::compare_up_to_global_phase(&act.matrix, &self.expected.matrix);
                Ok((dev, act.leakage, act.unitarity_defect))
            })
            .collect::<Result<_, Error>>()?;
        Ok(GateReport {
            branches: results.len(),
            max_deviation: results.iter().map(|r| r.0).fold(0.0, f64::max),
            max_leakage: results.iter().map(|r| r.1).fold(0.0, f64::max),
            max_unitarity_defect: results.iter().map(|r| r.2).fold(0.0, f64::max),
        })
    }

    /// Propagates a single X fault on each qubit through the gate layer.
    pub fn single_fault_spread(&self) -> FaultSpread {
        let ops = &self.circuit.ops()[self.gate_layer.clone()];
        let block_of = |name: &str| self.blocks.iter().position(|b| name.strip_prefix(&b.prefix).is_some_and(|r| r.parse::<usize>().is_ok()));
        let mut worst = vec![0; self.blocks.len()];
        let mut worst_fault = String::new();
        let mut worst_total = 0;
        for start in self.circuit.qubits() {
            let mut hit: Vec<&str> = vec![start];
            for op in ops {
                if op.gate == Gate::Cnot && hit.contains(&op.qubits[0].as_str()) {
                    let t = op.qubits[1].as_str();
                    match hit.iter().position(|&h| h == t) {
                        Some(p) => {
                            hit.remove(p);
                        }
                        None => hit.push(t),
                    }
                }
            }
            let mut per = vec![0; self.blocks.len()];
            for h in &hit {
                if let Some(b) = block_of(h) {
                    per[b] += 1;
                }
            }
            for (w, p) in worst.iter_mut().zip(&per) {
                *w = (*w).max(*p);
            }
            let total: usize = per.iter().sum();
            if total > worst_total {
                worst_total = total;
                worst_fault = start.clone();
            }
        }
        FaultSpread {
            worst_per_block: worst,
            worst_fault,
        }
    }

    /// Circuit text preceded by `#!` header lines with the plan metadata.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#! gate {}", self.name);
        let _ = writeln!(out, "#! expected {}", self.expected.name);
        for b in &self.blocks {
            let _ = writeln!(out, "#! block {} n={} k={}", b.prefix, b.code.n(), b.code.k());
        }
        for (tag, steps) in [("pre", &self.pre), ("post", &self.post)] {
            for s in steps {
                let partners = s.partners.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",");
                let kind = match s.kind {
                    StepKind::AddCnot | StepKind::AddMeasure => format!("add label=[{}] partners=[{partners}]", s.label.indices().iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")),
                    StepKind::RemoveCnot | StepKind::RemoveMeasure => format!("remove {} partners=[{partners}]", s.subject),
                };
                let _ = writeln!(out, "#! {tag} {} {kind}", s.subject_name);
            }
        }
        for g in &self.vote_groups {
            let _ = writeln!(out, "#! vote {g:?}");
        }
        let _ = writeln!(
            out,
            "#! fault_tolerant={} distinct_controls={}",
            self.ft.fault_tolerant,
            self.ft.distinct_controls.map_or("n/a".to_string(), |d| d.to_string())
        );
        for n in &self.ft.notes {
            let _ = writeln!(out, "#! note {n}");
        }
        out.push_str(&self.circuit.to_text());
        out
    }
}
