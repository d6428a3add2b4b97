//! Circuit IR, its text format, and a dense statevector simulator with
//! measurement and classical feed-forward.
//!
//! Conventions:
//!
//! - Registry order is tensor order; the first registered qubit is the most
//!   significant bit of a basis index.
//! - `Rz(θ) = exp(iθ/2·Z)` and `Rzz(θ) = exp(iθ/2·Z⊗Z)`, so that a rotation on
//!   a parity qubit labelled `L` acts as `exp(iθ/2·∏_{i∈L} Z̃ᵢ)`.
//! - Outcome bit 0 is eigenvalue +1 (`|0⟩` for Z, `|+⟩` for X).
//!
//! # Text format
//!
//! ```text
//! # comment
//! qreg [q0,q1,a0]
//! INITSTATE q[a0] (plus_i)
//! CNOT q[q0,a0]
//! MZ q[a0] -> c[m0]
//! ?!c[m0] Z q[q0]
//! RZ q[q1] (pi/4)
//! ```
//!
//! Gates: `X Z H S SDG RZ RZZ CNOT CZ MZ MX INIT0 INITPLUS INITSTATE`.
//! Angles are decimal numbers or `[-][N*]pi[/M]`; `INITSTATE` takes
//! `plus_i` or `T`. A gate may carry a condition prefix built from
//! `c[bit]`, `!cond`, `maj(..)`, `and(..)` and `xor(..)`, e.g.
//! `?and(!c[t0],!c[s0]) Z q[q0]`. Conditions may only read bits written by
//! earlier measurements.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_4, PI};
use std::fmt;

use num_complex::Complex64;
use rand::{Rng, RngCore};

use crate::code::ParityCode;
use crate::Error;

pub type C64 = Complex64;

/// Largest register the simulator accepts.
pub const SIM_CAP: usize = 20;

/// Tolerance for equality checks on logical actions.
pub const TOLERANCE: f64 = 1e-9;

const ZERO_PROB: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Resource {
    /// `(|0⟩ + i|1⟩)/√2`
    PlusI,
    /// `(|0⟩ + e^{iπ/4}|1⟩)/√2`
    T,
}

impl Resource {
    fn name(self) -> &'static str {
        match self {
            Resource::PlusI => "plus_i",
            Resource::T => "T",
        }
    }

    fn phase(self) -> C64 {
        match self {
            Resource::PlusI => C64::i(),
            Resource::T => C64::from_polar(1.0, FRAC_PI_4),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Gate {
    X,
    Z,
    H,
    S,
    Sdg,
    Rz(f64),
    Rzz(f64),
    Cnot,
    Cz,
    MeasureZ,
    MeasureX,
    Init0,
    InitPlus,
    InitState(Resource),
}

impl Gate {
    pub fn arity(&self) -> usize {
        match self {
            Gate::Rzz(_) | Gate::Cnot | Gate::Cz => 2,
            _ => 1,
        }
    }

    pub fn is_measurement(&self) -> bool {
        matches!(self, Gate::MeasureZ | Gate::MeasureX)
    }

    pub fn is_init(&self) -> bool {
        matches!(self, Gate::Init0 | Gate::InitPlus | Gate::InitState(_))
    }

    fn mnemonic(&self) -> &'static str {
        match self {
            Gate::X => "X",
            Gate::Z => "Z",
            Gate::H => "H",
            Gate::S => "S",
            Gate::Sdg => "SDG",
            Gate::Rz(_) => "RZ",
            Gate::Rzz(_) => "RZZ",
            Gate::Cnot => "CNOT",
            Gate::Cz => "CZ",
            Gate::MeasureZ => "MZ",
            Gate::MeasureX => "MX",
            Gate::Init0 => "INIT0",
            Gate::InitPlus => "INITPLUS",
            Gate::InitState(_) => "INITSTATE",
        }
    }
}

/// Boolean expression over measurement bits.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Cond {
    Bit(String),
    Not(Box<Cond>),
    /// Strict majority; use an odd number of operands.
    Maj(Vec<Cond>),
    And(Vec<Cond>),
    Xor(Vec<Cond>),
}

impl Cond {
    pub fn bit(name: impl Into<String>) -> Self {
        Cond::Bit(name.into())
    }

    pub fn negate(self) -> Self {
        match self {
            Cond::Not(inner) => *inner,
            other => Cond::Not(Box::new(other)),
        }
    }

    pub fn maj_of<S: Into<String>>(bits: impl IntoIterator<Item = S>) -> Self {
        Cond::Maj(bits.into_iter().map(Cond::bit).collect())
    }

    pub fn xor_of<S: Into<String>>(bits: impl IntoIterator<Item = S>) -> Self {
        Cond::Xor(bits.into_iter().map(Cond::bit).collect())
    }

    pub fn eval(&self, record: &HashMap<String, bool>) -> bool {
        match self {
            Cond::Bit(b) => record[b],
            Cond::Not(c) => !c.eval(record),
            Cond::Maj(cs) => 2 * cs.iter().filter(|c| c.eval(record)).count() > cs.len(),
            Cond::And(cs) => cs.iter().all(|c| c.eval(record)),
            Cond::Xor(cs) => cs.iter().filter(|c| c.eval(record)).count() % 2 == 1,
        }
    }

    pub fn map_bits(&self, f: &dyn Fn(&str) -> String) -> Cond {
        let all = |cs: &[Cond]| cs.iter().map(|c| c.map_bits(f)).collect();
        match self {
            Cond::Bit(b) => Cond::Bit(f(b)),
            Cond::Not(c) => Cond::Not(Box::new(c.map_bits(f))),
            Cond::Maj(cs) => Cond::Maj(all(cs)),
            Cond::And(cs) => Cond::And(all(cs)),
            Cond::Xor(cs) => Cond::Xor(all(cs)),
        }
    }

    pub fn bits(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_bits(&mut out);
        out
    }

    fn collect_bits<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            Cond::Bit(b) => out.push(b),
            Cond::Not(c) => c.collect_bits(out),
            Cond::Maj(cs) | Cond::And(cs) | Cond::Xor(cs) => cs.iter().for_each(|c| c.collect_bits(out)),
        }
    }
}

impl fmt::Display for Cond {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>, name: &str, cs: &[Cond]| {
            write!(f, "{name}(")?;
            for (n, c) in cs.iter().enumerate() {
                if n > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")
        };
        match self {
            Cond::Bit(b) => write!(f, "c[{b}]"),
            Cond::Not(c) => write!(f, "!{c}"),
            Cond::Maj(cs) => list(f, "maj", cs),
            Cond::And(cs) => list(f, "and", cs),
            Cond::Xor(cs) => list(f, "xor", cs),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateOp {
    pub gate: Gate,
    pub qubits: Vec<String>,
    /// Classical bit written by a measurement.
    pub bit: Option<String>,
    pub cond: Option<Cond>,
}

impl GateOp {
    pub fn new<S: AsRef<str>>(gate: Gate, qubits: &[S]) -> Self {
        Self {
            gate,
            qubits: qubits.iter().map(|q| q.as_ref().to_string()).collect(),
            bit: None,
            cond: None,
        }
    }

    pub fn measure(gate: Gate, qubit: &str, bit: &str) -> Self {
        Self {
            gate,
            qubits: vec![qubit.to_string()],
            bit: Some(bit.to_string()),
            cond: None,
        }
    }

    pub fn when(mut self, cond: Cond) -> Self {
        self.cond = Some(cond);
        self
    }
}

impl GateOp {
    pub fn renamed(&self, qf: &dyn Fn(&str) -> String, bf: &dyn Fn(&str) -> String) -> GateOp {
        GateOp {
            gate: self.gate,
            qubits: self.qubits.iter().map(|q| qf(q)).collect(),
            bit: self.bit.as_deref().map(bf),
            cond: self.cond.as_ref().map(|c| c.map_bits(bf)),
        }
    }
}

impl fmt::Display for GateOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(c) = &self.cond {
            write!(f, "?{c} ")?;
        }
        write!(f, "{} q[{}]", self.gate.mnemonic(), self.qubits.join(","))?;
        match self.gate {
            Gate::Rz(t) | Gate::Rzz(t) => write!(f, " ({t:?})")?,
            Gate::InitState(r) => write!(f, " ({})", r.name())?,
            _ => {}
        }
        if let Some(b) = &self.bit {
            write!(f, " -> c[{b}]")?;
        }
        Ok(())
    }
}

/// Qubit registry, classical bits and an ordered op list.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Circuit {
    qubits: Vec<String>,
    index: HashMap<String, usize>,
    bits: Vec<String>,
    ops: Vec<GateOp>,
}

impl Circuit {
    pub fn new<S: AsRef<str>>(qubits: &[S]) -> Result<Self, Error> {
        let mut c = Self::default();
        for q in qubits {
            c.add_qubit(q.as_ref())?;
        }
        Ok(c)
    }

    pub fn add_qubit(&mut self, name: &str) -> Result<usize, Error> {
        if name.is_empty() || name.contains(|ch: char| ch.is_whitespace() || ",[]()".contains(ch)) {
            return Err(Error::InvalidArgument(format!("bad qubit name {name:?}")));
        }
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument(format!("qubit {name} registered twice")));
        }
        self.index.insert(name.to_string(), self.qubits.len());
        self.qubits.push(name.to_string());
        Ok(self.qubits.len() - 1)
    }

    pub fn has_qubit(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn qubit_index(&self, name: &str) -> Result<usize, Error> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown qubit {name}")))
    }

    pub fn qubits(&self) -> &[String] {
        &self.qubits
    }

    pub fn bits(&self) -> &[String] {
        &self.bits
    }

    pub fn ops(&self) -> &[GateOp] {
        &self.ops
    }

    pub fn num_measurements(&self) -> usize {
        self.ops.iter().filter(|o| o.gate.is_measurement()).count()
    }

    /// Appends an op after checking operands, bits and condition.
    pub fn push(&mut self, op: GateOp) -> Result<(), Error> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if op.qubits.len() != op.gate.arity() {
            return bad(format!("{} takes {} qubit(s)", op.gate.mnemonic(), op.gate.arity()));
        }
        for q in &op.qubits {
            self.qubit_index(q)?;
        }
        if op.qubits.len() == 2 && op.qubits[0] == op.qubits[1] {
            return bad(format!("{} on a single qubit", op.gate.mnemonic()));
        }
        if let Gate::Rz(t) | Gate::Rzz(t) = op.gate {
            if !t.is_finite() {
                return bad("angle must be finite".into());
            }
        }
        match (&op.bit, op.gate.is_measurement()) {
            (Some(b), true) => {
                if self.bits.contains(b) {
                    return bad(format!("bit {b} written twice"));
                }
            }
            (None, true) => return bad("measurement needs a classical bit".into()),
            (Some(_), false) => return bad(format!("{} writes no bit", op.gate.mnemonic())),
            (None, false) => {}
        }
        if let Some(c) = &op.cond {
            if op.gate.is_measurement() || op.gate.is_init() {
                return bad("measurements and inits cannot be conditioned".into());
            }
            for b in c.bits() {
                if !self.bits.iter().any(|x| x == b) {
                    return bad(format!("condition reads unwritten bit {b}"));
                }
            }
        }
        if let Some(b) = &op.bit {
            self.bits.push(b.clone());
        }
        self.ops.push(op);
        Ok(())
    }

    pub fn gate(&mut self, gate: Gate, qubits: &[&str]) -> Result<(), Error> {
        self.push(GateOp::new(gate, qubits))
    }

    pub fn measure_z(&mut self, qubit: &str, bit: &str) -> Result<(), Error> {
        self.push(GateOp::measure(Gate::MeasureZ, qubit, bit))
    }

    pub fn measure_x(&mut self, qubit: &str, bit: &str) -> Result<(), Error> {
        self.push(GateOp::measure(Gate::MeasureX, qubit, bit))
    }

    /// Appends all ops of `other`, registering its qubits if missing.
    pub fn append(&mut self, other: &Circuit) -> Result<(), Error> {
        for q in &other.qubits {
            if !self.has_qubit(q) {
                self.add_qubit(q)?;
            }
        }
        for op in &other.ops {
            self.push(op.clone())?;
        }
        Ok(())
    }

    /// Copy with every qubit name mapped by `qf` and bit name by `bf`.
    pub fn renamed(&self, qf: &dyn Fn(&str) -> String, bf: &dyn Fn(&str) -> String) -> Result<Circuit, Error> {
        let names: Vec<String> = self.qubits.iter().map(|q| qf(q)).collect();
        let mut out = Circuit::new(&names)?;
        for op in &self.ops {
            out.push(op.renamed(qf, bf))?;
        }
        Ok(out)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("qreg [{}]\n", self.qubits.join(","));
        for op in &self.ops {
            out.push_str(&op.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, Error> {
        let mut circuit: Option<Circuit> = None;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: n + 1, msg };
            if let Some(rest) = line.strip_prefix("qreg") {
                if circuit.is_some() {
                    return Err(err("second qreg line".into()));
                }
                let names = bracket_list(rest.trim()).map_err(err)?;
                circuit = Some(Circuit::new(&names).map_err(|e| err(e.to_string()))?);
                continue;
            }
            let c = circuit.as_mut().ok_or_else(|| err("ops before qreg".into()))?;
            let op = parse_op(line).map_err(err)?;
            c.push(op).map_err(|e| err(e.to_string()))?;
        }
        circuit.ok_or(Error::Parse {
            line: 0,
            msg: "missing qreg line".into(),
        })
    }
}

fn bracket_list(s: &str) -> Result<Vec<String>, String> {
    let inner = s
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| format!("expected [..], got {s:?}"))?;
    Ok(inner
        .split(',')
        .map(|t| t.trim().to_string())
        .filter(|t| !t.is_empty())
        .collect())
}

/// Parses a number or `[-][N*]pi[/M]`.
pub fn parse_angle(s: &str) -> Result<f64, String> {
    let s = s.trim();
    if let Ok(v) = s.parse::<f64>() {
        return Ok(v);
    }
    let (sign, body) = match s.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, s),
    };
    let (num, den) = match body.split_once('/') {
        Some((a, b)) => (a, b.trim().parse::<f64>().map_err(|_| format!("bad angle {s:?}"))?),
        None => (body, 1.0),
    };
    let mult = match num.trim().split_once('*') {
        Some((m, p)) if p.trim() == "pi" => m.trim().parse::<f64>().map_err(|_| format!("bad angle {s:?}"))?,
        None if num.trim() == "pi" => 1.0,
        _ => return Err(format!("bad angle {s:?}")),
    };
    Ok(sign * mult * PI / den)
}

fn parse_cond(s: &str) -> Result<(Cond, &str), String> {
    let s = s.trim_start();
    if let Some(rest) = s.strip_prefix('!') {
        let (c, rest) = parse_cond(rest)?;
        return Ok((c.negate(), rest));
    }
    if let Some(rest) = s.strip_prefix("c[") {
        let end = rest.find(']').ok_or("unclosed c[")?;
        return Ok((Cond::Bit(rest[..end].trim().to_string()), &rest[end + 1..]));
    }
    for (name, make) in [
        ("maj(", Cond::Maj as fn(Vec<Cond>) -> Cond),
        ("and(", Cond::And),
        ("xor(", Cond::Xor),
    ] {
        if let Some(mut rest) = s.strip_prefix(name) {
            let mut items = Vec::new();
            loop {
                let (c, r) = parse_cond(rest)?;
                items.push(c);
                let r = r.trim_start();
                if let Some(r) = r.strip_prefix(',') {
                    rest = r;
                } else if let Some(r) = r.strip_prefix(')') {
                    return Ok((make(items), r));
                } else {
                    return Err("expected , or ) in condition".into());
                }
            }
        }
    }
    Err(format!("bad condition near {s:?}"))
}

fn parse_op(line: &str) -> Result<GateOp, String> {
    let mut rest = line;
    let mut cond = None;
    if let Some(r) = rest.strip_prefix('?') {
        let (c, r) = parse_cond(r)?;
        if !r.starts_with(char::is_whitespace) {
            return Err("condition must be followed by whitespace".into());
        }
        cond = Some(c);
        rest = r.trim_start();
    }
    let (name, r) = rest.split_once(char::is_whitespace).ok_or("missing operands")?;
    let r = r.trim();
    let close = r.find(']').ok_or("missing q[..]")?;
    let qubits = bracket_list(r.strip_prefix('q').ok_or("expected q[..]")?.get(..close).unwrap_or(""))?;
    let mut tail = r[close + 1..].trim();
    let mut param = None;
    if let Some(t) = tail.strip_prefix('(') {
        let end = t.find(')').ok_or("unclosed (")?;
        param = Some(t[..end].trim().to_string());
        tail = t[end + 1..].trim();
    }
    let mut bit = None;
    if let Some(t) = tail.strip_prefix("->") {
        let t = t.trim();
        let b = t
            .strip_prefix("c[")
            .and_then(|t| t.strip_suffix(']'))
            .ok_or("expected -> c[bit]")?;
        bit = Some(b.trim().to_string());
        tail = "";
    }
    if !tail.is_empty() {
        return Err(format!("trailing input {tail:?}"));
    }
    let angle = || parse_angle(param.as_deref().ok_or("missing angle")?);
    let gate = match name {
        "X" => Gate::X,
        "Z" => Gate::Z,
        "H" => Gate::H,
        "S" => Gate::S,
        "SDG" => Gate::Sdg,
        "RZ" => Gate::Rz(angle()?),
        "RZZ" => Gate::Rzz(angle()?),
        "CNOT" => Gate::Cnot,
        "CZ" => Gate::Cz,
        "MZ" => Gate::MeasureZ,
        "MX" => Gate::MeasureX,
        "INIT0" => Gate::Init0,
        "INITPLUS" => Gate::InitPlus,
        "INITSTATE" => match param.as_deref() {
            Some("plus_i") => Gate::InitState(Resource::PlusI),
            Some("T") => Gate::InitState(Resource::T),
            other => return Err(format!("unknown resource {other:?}")),
        },
        other => return Err(format!("unknown gate {other}")),
    };
    if param.is_some() && !matches!(gate, Gate::Rz(_) | Gate::Rzz(_) | Gate::InitState(_)) {
        return Err(format!("{name} takes no parameter"));
    }
    Ok(GateOp { gate, qubits, bit, cond })
}

/// Dense state over `n` qubits, qubit 0 most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct Statevector {
    n: usize,
    amps: Vec<C64>,
}

impl Statevector {
    fn check_cap(n: usize) -> Result<(), Error> {
        if n > SIM_CAP {
            return Err(Error::CapExceeded {
                what: "simulated qubit count",
                value: n,
                cap: SIM_CAP,
            });
        }
        Ok(())
    }

    pub fn zero(n: usize) -> Result<Self, Error> {
        Self::basis(n, 0)
    }

    pub fn basis(n: usize, index: usize) -> Result<Self, Error> {
        Self::check_cap(n)?;
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
        amps[index] = C64::new(1.0, 0.0);
        Ok(Self { n, amps })
    }

    pub fn from_amplitudes(n: usize, amps: Vec<C64>) -> Result<Self, Error> {
        Self::check_cap(n)?;
        if amps.len() != 1 << n {
            return Err(Error::LengthMismatch {
                expected: 1 << n,
                got: amps.len(),
            });
        }
        Ok(Self { n, amps })
    }

    pub fn num_qubits(&self) -> usize {
        self.n
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &Statevector) -> C64 {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn mask(&self, q: usize) -> usize {
        1 << (self.n - 1 - q)
    }

    fn apply_1q(&mut self, q: usize, m: [[C64; 2]; 2]) {
        let mask = self.mask(q);
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let (a, b) = (self.amps[i], self.amps[i | mask]);
                self.amps[i] = m[0][0] * a + m[0][1] * b;
                self.amps[i | mask] = m[1][0] * a + m[1][1] * b;
            }
        }
    }

    fn apply_diag(&mut self, q: usize, d0: C64, d1: C64) {
        let mask = self.mask(q);
        for (i, a) in self.amps.iter_mut().enumerate() {
            *a *= if i & mask == 0 { d0 } else { d1 };
        }
    }

    fn apply_x(&mut self, q: usize) {
        let mask = self.mask(q);
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                self.amps.swap(i, i | mask);
            }
        }
    }

    fn apply_cnot(&mut self, c: usize, t: usize) {
        let (cm, tm) = (self.mask(c), self.mask(t));
        for i in 0..self.amps.len() {
            if i & cm != 0 && i & tm == 0 {
                self.amps.swap(i, i | tm);
            }
        }
    }

    fn apply_pair_phase(&mut self, a: usize, b: usize, same: C64, differ: C64, both_one: Option<C64>) {
        let (am, bm) = (self.mask(a), self.mask(b));
        for (i, amp) in self.amps.iter_mut().enumerate() {
            let (x, y) = (i & am != 0, i & bm != 0);
            *amp *= match both_one {
                Some(p) if x && y => p,
                Some(_) => C64::new(1.0, 0.0),
                None if x == y => same,
                None => differ,
            };
        }
    }

    fn prob_one(&self, q: usize) -> f64 {
        let mask = self.mask(q);
        self.amps.iter().enumerate().filter(|(i, _)| i & mask != 0).map(|(_, a)| a.norm_sqr()).sum()
    }

    /// Zeroes the amplitudes with qubit `q` different from `bit`.
    fn project(&mut self, q: usize, bit: bool) {
        let mask = self.mask(q);
        for (i, a) in self.amps.iter_mut().enumerate() {
            if (i & mask != 0) != bit {
                *a = C64::new(0.0, 0.0);
            }
        }
    }

    fn scale(&mut self, f: f64) {
        self.amps.iter_mut().for_each(|a| *a *= f);
    }

    /// Applies a unitary gate (no measurement or init).
    fn apply_unitary(&mut self, gate: Gate, q: &[usize]) {
        let one = C64::new(1.0, 0.0);
        let h = C64::new(FRAC_1_SQRT_2, 0.0);
        match gate {
            Gate::X => self.apply_x(q[0]),
            Gate::Z => self.apply_diag(q[0], one, -one),
            Gate::H => self.apply_1q(q[0], [[h, h], [h, -h]]),
            Gate::S => self.apply_diag(q[0], one, C64::i()),
            Gate::Sdg => self.apply_diag(q[0], one, -C64::i()),
            Gate::Rz(t) => self.apply_diag(q[0], C64::from_polar(1.0, t / 2.0), C64::from_polar(1.0, -t / 2.0)),
            Gate::Rzz(t) => self.apply_pair_phase(q[0], q[1], C64::from_polar(1.0, t / 2.0), C64::from_polar(1.0, -t / 2.0), None),
            Gate::Cnot => self.apply_cnot(q[0], q[1]),
            Gate::Cz => self.apply_pair_phase(q[0], q[1], one, one, Some(-one)),
            _ => unreachable!("not a unitary gate"),
        }
    }
}

/// How measurement outcomes are chosen.
pub enum Outcomes<'a> {
    /// Outcomes in measurement order; bit 0 is eigenvalue +1.
    Forced(&'a [bool]),
    Sample(&'a mut dyn RngCore),
}

/// Where conditional Paulis go.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Corrections {
    /// Applied to the statevector when their condition holds.
    #[default]
    Physical,
    /// Tracked classically and propagated through Clifford gates; flushed
    /// onto the state at the end. Non-Clifford gates on a qubit with a
    /// pending X are rejected.
    PauliFrame,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub state: Statevector,
    /// Measurement record in measurement order.
    pub record: Vec<(String, bool)>,
    /// Probability of this record.
    pub probability: f64,
}

struct Engine<'a> {
    circuit: &'a Circuit,
    state: Statevector,
    record: HashMap<String, bool>,
    order: Vec<(String, bool)>,
    frame_x: Vec<bool>,
    frame_z: Vec<bool>,
    probability: f64,
}

enum Policy<'a, 'b> {
    Forced(&'a [bool], usize),
    Sample(&'b mut dyn RngCore),
}

impl<'a> Engine<'a> {
    fn new(circuit: &'a Circuit, initial: &Statevector) -> Result<Self, Error> {
        if initial.num_qubits() != circuit.qubits().len() {
            return Err(Error::LengthMismatch {
                expected: circuit.qubits().len(),
                got: initial.num_qubits(),
            });
        }
        let n = initial.num_qubits();
        Ok(Self {
            circuit,
            state: initial.clone(),
            record: HashMap::new(),
            order: Vec::new(),
            frame_x: vec![false; n],
            frame_z: vec![false; n],
            probability: 1.0,
        })
    }

    /// Runs all ops. With `normalize == false` projections keep the branch
    /// weight in the norm and zero-probability branches are allowed.
    fn run(&mut self, mut policy: Policy, mode: Corrections, normalize: bool, faults: &[(usize, usize)]) -> Result<(), Error> {
        let ops = self.circuit.ops();
        for (k, op) in ops.iter().enumerate() {
            for &(_, q) in faults.iter().filter(|f| f.0 == k) {
                self.state.apply_x(q);
            }
            let q: Vec<usize> = op.qubits.iter().map(|n| self.circuit.index[n]).collect();
            if let Some(c) = &op.cond {
                if !c.eval(&self.record) {
                    continue;
                }
            }
            let frame = mode == Corrections::PauliFrame;
            match op.gate {
                Gate::X | Gate::Z if frame && op.cond.is_some() => {
                    let f = if op.gate == Gate::X { &mut self.frame_x } else { &mut self.frame_z };
                    f[q[0]] ^= true;
                }
                Gate::MeasureZ | Gate::MeasureX => {
                    let x_basis = op.gate == Gate::MeasureX;
                    if x_basis {
                        self.state.apply_unitary(Gate::H, &q);
                    }
                    let flip = if x_basis { self.frame_z[q[0]] } else { self.frame_x[q[0]] };
                    let norm = self.state.norm_sqr();
                    let p1 = self.state.prob_one(q[0]) / norm;
                    let recorded = match &mut policy {
                        Policy::Forced(list, pos) => {
                            let b = *list
                                .get(*pos)
                                .ok_or_else(|| Error::Simulation("fewer forced outcomes than measurements".into()))?;
                            *pos += 1;
                            b
                        }
                        Policy::Sample(rng) => rng.gen::<f64>() < (if flip { 1.0 - p1 } else { p1 }),
                    };
                    let physical = recorded ^ flip;
                    let p = if physical { p1 } else { 1.0 - p1 };
                    if normalize && p < ZERO_PROB {
                        return Err(Error::Simulation(format!(
                            "forced outcome {} on {} has zero probability",
                            recorded as u8, op.qubits[0]
                        )));
                    }
                    self.state.project(q[0], physical);
                    if normalize {
                        self.state.scale(1.0 / (p * norm).sqrt());
                    }
                    self.probability *= p;
                    if x_basis {
                        self.state.apply_unitary(Gate::H, &q);
                    }
                    let bit = op.bit.clone().expect("validated");
                    self.record.insert(bit.clone(), recorded);
                    self.order.push((bit, recorded));
                }
                Gate::Init0 | Gate::InitPlus | Gate::InitState(_) => {
                    let norm = self.state.norm_sqr();
                    let p1 = if norm == 0.0 { 0.0 } else { self.state.prob_one(q[0]) / norm };
                    if p1 > ZERO_PROB && p1 < 1.0 - ZERO_PROB {
                        return Err(Error::Simulation(format!(
                            "init on {} which is not in a Z basis state",
                            op.qubits[0]
                        )));
                    }
                    if p1 >= 1.0 - ZERO_PROB {
                        self.state.apply_x(q[0]);
                    }
                    self.frame_x[q[0]] = false;
                    self.frame_z[q[0]] = false;
                    match op.gate {
                        Gate::Init0 => {}
                        Gate::InitPlus => self.state.apply_unitary(Gate::H, &q),
                        Gate::InitState(r) => {
                            self.state.apply_unitary(Gate::H, &q);
                            self.state.apply_diag(q[0], C64::new(1.0, 0.0), r.phase());
                        }
                        _ => unreachable!(),
                    }
                }
                g => {
                    if frame {
                        self.propagate(g, &q, &op.qubits)?;
                    }
                    self.state.apply_unitary(g, &q);
                }
            }
        }
        for &(_, q) in faults.iter().filter(|f| f.0 >= ops.len()) {
            self.state.apply_x(q);
        }
        for q in 0..self.state.num_qubits() {
            if self.frame_z[q] {
                self.state.apply_unitary(Gate::Z, &[q]);
            }
            if self.frame_x[q] {
                self.state.apply_x(q);
            }
        }
        Ok(())
    }

    fn propagate(&mut self, gate: Gate, q: &[usize], names: &[String]) -> Result<(), Error> {
        let (fx, fz) = (&mut self.frame_x, &mut self.frame_z);
        match gate {
            Gate::X | Gate::Z => {}
            Gate::H => std::mem::swap(&mut fx[q[0]], &mut fz[q[0]]),
            Gate::S | Gate::Sdg => fz[q[0]] ^= fx[q[0]],
            Gate::Cnot => {
                fx[q[1]] ^= fx[q[0]];
                fz[q[0]] ^= fz[q[1]];
            }
            Gate::Cz => {
                let (xa, xb) = (fx[q[0]], fx[q[1]]);
                fz[q[0]] ^= xb;
                fz[q[1]] ^= xa;
            }
            Gate::Rz(_) | Gate::Rzz(_) => {
                if let Some(pos) = q.iter().position(|&i| fx[i]) {
                    return Err(Error::Simulation(format!(
                        "non-Clifford rotation on {} with a pending X correction",
                        names[pos]
                    )));
                }
            }
            _ => unreachable!("handled by caller"),
        }
        Ok(())
    }
}

/// Runs `circuit` on `initial`, returning the normalized post-state.
pub fn simulate(circuit: &Circuit, initial: &Statevector, outcomes: Outcomes, corrections: Corrections) -> Result<RunResult, Error> {
    let mut engine = Engine::new(circuit, initial)?;
    let policy = match outcomes {
        Outcomes::Forced(list) => {
            if list.len() != circuit.num_measurements() {
                return Err(Error::LengthMismatch {
                    expected: circuit.num_measurements(),
                    got: list.len(),
                });
            }
            Policy::Forced(list, 0)
        }
        Outcomes::Sample(rng) => Policy::Sample(rng),
    };
    engine.run(policy, corrections, true, &[])?;
    Ok(RunResult {
        state: engine.state,
        record: engine.order,
        probability: engine.probability,
    })
}

/// Every outcome pattern of `m` measurements, in binary counting order.
pub fn all_outcomes(m: usize) -> impl Iterator<Item = Vec<bool>> {
    (0u64..1 << m).map(move |v| (0..m).map(|b| v >> (m - 1 - b) & 1 == 1).collect())
}

/// Amplitudes over `k` logical bits, first logical most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct LogicalStateSpec {
    amplitudes: Vec<C64>,
}

impl LogicalStateSpec {
    pub fn new(amplitudes: Vec<C64>) -> Result<Self, Error> {
        if !amplitudes.len().is_power_of_two() {
            return Err(Error::InvalidArgument("amplitude count must be a power of two".into()));
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("state has norm² {norm}")));
        }
        Ok(Self { amplitudes })
    }

    pub fn basis(k: usize, index: usize) -> Self {
        let mut amplitudes = vec![C64::new(0.0, 0.0); 1 << k];
        amplitudes[index] = C64::new(1.0, 0.0);
        Self { amplitudes }
    }

    pub fn plus(k: usize) -> Self {
        let a = C64::new(((1usize << k) as f64).recip().sqrt(), 0.0);
        Self {
            amplitudes: vec![a; 1 << k],
        }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn num_logicals(&self) -> usize {
        self.amplitudes.len().trailing_zeros() as usize
    }
}

fn check_fully_encoded(code: &ParityCode) -> Result<Vec<usize>, Error> {
    let logicals = code.logical_indices();
    if logicals.len() != code.k() {
        return Err(Error::InvalidCode(format!(
            "{} logical indices referenced but only {} encoded",
            logicals.len(),
            code.k()
        )));
    }
    Ok(logicals)
}

/// Physical bits (by qubit id) of the codeword for a logical basis state;
/// bit `b` of `logical_bits` (MSB first over `logical_indices`) is `z̃`.
pub fn codeword_bits(code: &ParityCode, logical_bits: usize) -> Result<Vec<bool>, Error> {
    let logicals = check_fully_encoded(code)?;
    let k = logicals.len();
    let z: HashMap<usize, bool> = logicals
        .iter()
        .enumerate()
        .map(|(pos, &i)| (i, logical_bits >> (k - 1 - pos) & 1 == 1))
        .collect();
    Ok(code
        .qubits()
        .iter()
        .map(|q| q.label.indices().iter().fold(false, |acc, i| acc ^ z[i]))
        .collect())
}

/// Statevector over the code's qubits (id order) for a logical state.
pub fn encode_logical(code: &ParityCode, spec: &LogicalStateSpec) -> Result<Statevector, Error> {
    let n = code.n();
    Statevector::check_cap(n)?;
    let k = check_fully_encoded(code)?.len();
    if spec.num_logicals() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            got: spec.num_logicals(),
        });
    }
    let mut amps = vec![C64::new(0.0, 0.0); 1 << n];
    for (b, &a) in spec.amplitudes().iter().enumerate() {
        let bits = codeword_bits(code, b)?;
        let idx = bits.iter().fold(0usize, |acc, &x| acc << 1 | x as usize);
        amps[idx] += a;
    }
    Statevector::from_amplitudes(n, amps)
}

/// Dense complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![C64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::diag(&vec![C64::new(1.0, 0.0); n])
    }

    pub fn diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let cols = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == cols), "ragged matrix");
        Self {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: C64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "dimension mismatch");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(r, k);
                if a == C64::new(0.0, 0.0) {
                    continue;
                }
                for c in 0..other.cols {
                    out.data[r * other.cols + c] += a * other.get(k, c);
                }
            }
        }
        out
    }

    pub fn kron(&self, other: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.rows * other.rows, self.cols * other.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                for r2 in 0..other.rows {
                    for c2 in 0..other.cols {
                        out.set(r * other.rows + r2, c * other.cols + c2, self.get(r, c) * other.get(r2, c2));
                    }
                }
            }
        }
        out
    }

    pub fn dagger(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.set(c, r, self.get(r, c).conj());
            }
        }
        out
    }

    pub fn scale(&self, f: C64) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * f).collect(),
        }
    }

    /// `max |M†M − I|`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.dagger().mul(self);
        let id = CMatrix::identity(self.cols);
        p.data.iter().zip(&id.data).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        (0..self.rows).all(|r| (0..self.cols).all(|c| r == c || self.get(r, c).norm() <= tol))
    }
}

/// Whether `a = e^{iφ}·b` for some phase, and the max entry deviation at
/// the best phase.
pub fn compare_up_to_global_phase(a: &CMatrix, b: &CMatrix) -> (bool, f64) {
    if a.rows != b.rows || a.cols != b.cols {
        return (false, f64::INFINITY);
    }
    let overlap: C64 = a.data.iter().zip(&b.data).map(|(x, y)| y.conj() * x).sum();
    let phase = if overlap.norm() > 0.0 {
        overlap / overlap.norm()
    } else {
        C64::new(1.0, 0.0)
    };
    let dev = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - phase * y).norm())
        .fold(0.0, f64::max);
    (dev < TOLERANCE, dev)
}

/// A code block bound to circuit registry names: `names[id]` is qubit `id`.
#[derive(Clone, Debug)]
pub struct CodeBlock<'a> {
    pub code: &'a ParityCode,
    pub names: Vec<String>,
}

impl<'a> CodeBlock<'a> {
    pub fn new(code: &'a ParityCode, names: Vec<String>) -> Result<Self, Error> {
        if names.len() != code.n() {
            return Err(Error::LengthMismatch {
                expected: code.n(),
                got: names.len(),
            });
        }
        Ok(Self { code, names })
    }

    /// Names `{prefix}{id}`.
    pub fn prefixed(code: &'a ParityCode, prefix: &str) -> Self {
        let names = (0..code.n()).map(|id| format!("{prefix}{id}")).collect();
        Self { code, names }
    }
}

/// One branch to extract: forced outcomes plus X faults injected before the
/// given op index (`ops.len()` means after the last op).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Branch {
    pub outcomes: Vec<bool>,
    pub faults: Vec<(usize, String)>,
}

impl Branch {
    pub fn outcomes(outcomes: Vec<bool>) -> Self {
        Self {
            outcomes,
            faults: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogicalAction {
    /// Normalized logical operator, outputs × inputs.
    pub matrix: CMatrix,
    /// Average branch probability over the input basis states.
    pub probability: f64,
    /// Weight outside (output code space ⊗ common discarded state).
    pub leakage: f64,
    pub unitarity_defect: f64,
}

impl LogicalAction {
    /// Errors unless leakage and unitarity defect are within [`TOLERANCE`].
    pub fn check(&self) -> Result<(), Error> {
        if self.leakage > TOLERANCE {
            return Err(Error::Verification(format!("code-space leakage {:.3e}", self.leakage)));
        }
        if self.unitarity_defect > TOLERANCE {
            return Err(Error::Verification(format!("unitarity defect {:.3e}", self.unitarity_defect)));
        }
        Ok(())
    }
}

fn block_positions(circuit: &Circuit, blocks: &[CodeBlock]) -> Result<Vec<Vec<usize>>, Error> {
    let mut seen = BTreeSet::new();
    blocks
        .iter()
        .map(|b| {
            b.names
                .iter()
                .map(|n| {
                    let q = circuit.qubit_index(n)?;
                    if !seen.insert(q) {
                        return Err(Error::InvalidArgument(format!("qubit {n} in two blocks")));
                    }
                    Ok(q)
                })
                .collect()
        })
        .collect()
}

/// Registry-wide basis masks for every logical basis state of `blocks`.
fn block_basis_masks(blocks: &[CodeBlock], positions: &[Vec<usize>], n: usize) -> Result<Vec<usize>, Error> {
    let ks: Vec<usize> = blocks.iter().map(|b| check_fully_encoded(b.code).map(|l| l.len())).collect::<Result<_, _>>()?;
    let total: usize = ks.iter().sum();
    let mut masks = Vec::with_capacity(1 << total);
    for joint in 0usize..1 << total {
        let mut mask = 0usize;
        let mut shift = total;
        for ((b, pos), &k) in blocks.iter().zip(positions).zip(&ks) {
            shift -= k;
            let bits = codeword_bits(b.code, (joint >> shift) & ((1 << k) - 1))?;
            for (id, &bit) in bits.iter().enumerate() {
                if bit {
                    mask |= 1 << (n - 1 - pos[id]);
                }
            }
        }
        masks.push(mask);
    }
    Ok(masks)
}

/// Logical operator induced by one branch of `circuit`, mapping the
/// logical space of `inputs` to that of `outputs`.
///
/// Each input logical basis state is encoded (other registry qubits start
/// in `|0⟩`), run with forced outcomes and without renormalization, and
/// projected onto the output codewords. Qubits outside the outputs are
/// contracted against their common final state, found as the dominant
/// eigenvector of their reduced density matrix summed over inputs.
pub fn logical_action(circuit: &Circuit, inputs: &[CodeBlock], outputs: &[CodeBlock], branch: &Branch) -> Result<LogicalAction, Error> {
    let n = circuit.qubits().len();
    Statevector::check_cap(n)?;
    if branch.outcomes.len() != circuit.num_measurements() {
        return Err(Error::LengthMismatch {
            expected: circuit.num_measurements(),
            got: branch.outcomes.len(),
        });
    }
    let faults: Vec<(usize, usize)> = branch
        .faults
        .iter()
        .map(|(k, q)| Ok((*k, circuit.qubit_index(q)?)))
        .collect::<Result<_, Error>>()?;
    let in_pos = block_positions(circuit, inputs)?;
    let out_pos = block_positions(circuit, outputs)?;
    let in_masks = block_basis_masks(inputs, &in_pos, n)?;
    let out_masks = block_basis_masks(outputs, &out_pos, n)?;

    let out_set: u64 = out_pos.iter().flatten().fold(0u64, |m, &q| m | 1 << (n - 1 - q));
    let disc_bits: Vec<usize> = (0..n).map(|q| n - 1 - q).filter(|b| out_set >> b & 1 == 0).collect();
    // disc index j → registry bits
    let expand: Vec<usize> = (0usize..1 << disc_bits.len())
        .map(|j| {
            disc_bits
                .iter()
                .rev()
                .enumerate()
                .filter(|(pos, _)| j >> pos & 1 == 1)
                .fold(0usize, |m, (_, &b)| m | 1 << b)
        })
        .collect();

    let finals: Vec<Statevector> = in_masks
        .iter()
        .map(|&mask| {
            let mut engine = Engine::new(circuit, &Statevector::basis(n, mask)?)?;
            engine.run(Policy::Forced(&branch.outcomes, 0), Corrections::Physical, false, &faults)?;
            Ok(engine.state)
        })
        .collect::<Result<_, Error>>()?;
    let total_weight: f64 = finals.iter().map(|s| s.norm_sqr()).sum();
    if total_weight < ZERO_PROB {
        return Err(Error::Simulation("branch has zero probability for every input".into()));
    }

    let dim = expand.len();
    let mut phi = vec![C64::new(0.0, 0.0); dim];
    let weights: Vec<f64> = (0..dim)
        .map(|j| {
            finals
                .iter()
                .map(|s| {
                    s.amps
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| i & !(out_set as usize) == expand[j])
                        .map(|(_, a)| a.norm_sqr())
                        .sum::<f64>()
                })
                .sum()
        })
        .collect();
    let start = (0..dim).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).expect("non-empty");
    phi[start] = C64::new(1.0, 0.0);
    let out_mask = out_set as usize;
    for _ in 0..200 {
        let mut next = vec![C64::new(0.0, 0.0); dim];
        for s in &finals {
            // u[o] = Σ_j conj(ψ[o,j]) φ_j, then next_j += ψ[o,j] u[o]
            let mut u: HashMap<usize, C64> = HashMap::new();
            for (j, &e) in expand.iter().enumerate() {
                if phi[j] == C64::new(0.0, 0.0) {
                    continue;
                }
                for (i, a) in s.amps.iter().enumerate() {
                    if i & !out_mask == e && *a != C64::new(0.0, 0.0) {
                        *u.entry(i & out_mask).or_default() += a.conj() * phi[j];
                    }
                }
            }
            for (j, &e) in expand.iter().enumerate() {
                for (&o, &uo) in &u {
                    next[j] += s.amps[o | e] * uo;
                }
            }
        }
        let norm = next.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            break;
        }
        next.iter_mut().for_each(|v| *v /= norm);
        let change: f64 = next.iter().zip(&phi).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        phi = next;
        if change < 1e-14 {
            break;
        }
    }

    let mut matrix = CMatrix::zeros(out_masks.len(), in_masks.len());
    let mut captured = 0.0;
    for (b, s) in finals.iter().enumerate() {
        for (c, &o) in out_masks.iter().enumerate() {
            let v: C64 = expand.iter().zip(&phi).map(|(&e, p)| p.conj() * s.amps[o | e]).sum();
            captured += v.norm_sqr();
            matrix.set(c, b, v);
        }
    }
    let probability = total_weight / in_masks.len() as f64;
    let matrix = matrix.scale(C64::new(probability.sqrt().recip(), 0.0));
    let defect = matrix.unitarity_defect();
    Ok(LogicalAction {
        matrix,
        probability,
        leakage: (1.0 - captured / total_weight).max(0.0),
        unitarity_defect: defect,
    })
}
