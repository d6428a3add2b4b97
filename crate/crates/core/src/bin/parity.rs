//! `parity` command-line tool.
//!
//! Exit codes: 0 success, 1 usage or size cap, 2 invalid input, 3 undefined
//! ratio in a sweep, 4 deformation distance violation, 5 failed verification.

use std::fs;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;

use paritycode::circuit::parse_angle;
use paritycode::deform::{self, BatchOptions, DeformPlan, Method, VerifyOptions};
use paritycode::gates::{self, ControlMode, GatePlan};
use paritycode::layouts::{self, BoundaryExtension, Layout};
use paritycode::montecarlo::{self, Decoder};
use paritycode::{Error, ParityCode, QubitLabel};

#[derive(Parser)]
#[command(name = "parity", version, about = "Parity (LHZ) code toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or load a layout and report its properties.
    Layout(LayoutArgs),
    /// Parity vs. repetition logical error sweep.
    Simulate(SimulateArgs),
    /// Apply a deformation plan.
    Deform(DeformArgs),
    /// Build a logical gate and verify it branch by branch.
    VerifyGate(VerifyGateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LayoutKind {
    Lhz,
    Limited,
    Custom,
    Mixed,
}

#[derive(clap::Args)]
struct LayoutArgs {
    #[arg(long, value_enum)]
    kind: LayoutKind,
    #[arg(long)]
    k: Option<usize>,
    /// Maximum `|i - j|` for limited-range layouts.
    #[arg(long)]
    range: Option<usize>,
    /// Plain truncation without boundary extension.
    #[arg(long)]
    no_extend: bool,
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Write the code text here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecoderKind {
    Bp,
    Ml,
}

#[derive(clap::Args)]
struct SimulateArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    k: Vec<usize>,
    #[arg(long = "p-dec", value_delimiter = ',', required = true)]
    p_dec: Vec<f64>,
    #[arg(long = "p-cnot", value_delimiter = ',', required = true)]
    p_cnot: Vec<f64>,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "bp")]
    decoder: DecoderKind,
    #[arg(long = "max-iters", default_value_t = paritycode::decode::DEFAULT_MAX_ITERS)]
    max_iters: usize,
    /// CSV output; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Worker threads; output does not depend on it.
    #[arg(long, env = "PARITY_THREADS")]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodKind {
    Cnot,
    Measure,
}

#[derive(clap::Args)]
struct DeformArgs {
    #[arg(long)]
    code: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, value_enum, default_value = "measure")]
    method: MethodKind,
    /// Distance floor for intermediate codes; defaults to the start distance.
    #[arg(long = "min-distance")]
    min_distance: Option<usize>,
    #[arg(long, default_value_t = 1)]
    repeats: usize,
    #[arg(long)]
    verify: bool,
    /// Write the new code text here.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the emitted circuit here.
    #[arg(long)]
    circuit: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GateKind {
    Cnot,
    Cz,
    Rzz,
    S,
    T,
    Gzz,
}

#[derive(clap::Args)]
struct VerifyGateArgs {
    #[arg(long, conflicts_with = "lhz", required_unless_present = "lhz")]
    code: Option<PathBuf>,
    /// Use LHZ(K) instead of a code file.
    #[arg(long)]
    lhz: Option<usize>,
    #[arg(long, value_enum)]
    gate: GateKind,
    /// cnot, cz, rzz: `i,j` (cz accepts `i,j;k,l`); s, t: label indices;
    /// gzz: `i,j:angle;...` with angles like `0.3` or `pi/4`.
    #[arg(long, allow_hyphen_values = true)]
    args: String,
    /// Repetition distance for teleported gates.
    #[arg(long, default_value_t = 1)]
    d: usize,
    /// cnot: one control for every target carrier.
    #[arg(long)]
    shared: bool,
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the plan (header plus circuit text) here.
    #[arg(long)]
    emit: Option<PathBuf>,
}

struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::CapExceeded { .. } => 1,
            Error::DistanceViolation { .. } => 4,
            Error::Verification(_) => 5,
            _ => 2,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure { code, msg: msg.into() }
}

/// Writes a line to stdout, ignoring a closed pipe.
fn emit(text: &str) {
    let _ = writeln!(std::io::stdout(), "{text}");
}

fn read(path: &PathBuf) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(2, format!("{}: {e}", path.display())))
}

fn write(path: &PathBuf, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| fail(2, format!("{}: {e}", path.display())))
}

fn load_code(path: &PathBuf) -> Result<ParityCode, Failure> {
    let code = ParityCode::from_text(&read(path)?)?;
    let report = code.validate();
    if !report.ok() {
        return Err(fail(2, format!("{}: invalid code: {:?}", path.display(), report.violations)));
    }
    Ok(code)
}

fn indices(s: &str) -> Result<Vec<usize>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| fail(1, format!("bad index `{t}` in --args"))))
        .collect()
}

fn pair(s: &str) -> Result<(usize, usize), Failure> {
    match indices(s)?.as_slice() {
        [i, j] => Ok((*i, *j)),
        _ => Err(fail(1, format!("expected `i,j`, got `{s}`"))),
    }
}

fn run_layout(a: LayoutArgs) -> Result<(), Failure> {
    let need_k = || a.k.ok_or_else(|| fail(1, "--k is required for this layout kind"));
    let (layout, report) = match a.kind {
        LayoutKind::Lhz => {
            let l = layouts::lhz_layout(need_k()?)?;
            let r = l.code.validate();
            (l, r)
        }
        LayoutKind::Limited => {
            let range = a.range.ok_or_else(|| fail(1, "--range is required for limited layouts"))?;
            let ext = if a.no_extend { BoundaryExtension::None } else { BoundaryExtension::Grow };
            let l = layouts::limited_range_layout(need_k()?, range, ext)?;
            let r = l.code.validate();
            (l, r)
        }
        LayoutKind::Custom => {
            let spec = a.spec.as_ref().ok_or_else(|| fail(1, "--spec is required for custom layouts"))?;
            layouts::custom_layout(&read(spec)?)?
        }
        LayoutKind::Mixed => {
            let l: Layout = layouts::mixed_layout();
            let r = l.code.validate();
            (l, r)
        }
    };
    let code = &layout.code;
    let locality = layouts::check_locality(code, &layout.grid);
    let distance = if report.ok() { code.code_distance().ok() } else { None };
    let out = json!({
        "n": code.n(),
        "k": code.k(),
        "stabilizers": code.stabilizers().len(),
        "distance": distance,
        "valid": report.ok(),
        "violations": report.violations.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>(),
        "local": locality.ok(),
        "locality_violations": locality.violations.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>(),
    });
    emit(&serde_json::to_string_pretty(&out).expect("json"));
    if let Some(path) = &a.out {
        write(path, &code.to_text())?;
    }
    if !report.ok() {
        return Err(fail(2, "layout failed validation"));
    }
    Ok(())
}

fn run_simulate(a: SimulateArgs) -> Result<(), Failure> {
    let decoder = match a.decoder {
        DecoderKind::Bp => Decoder::Bp { max_iters: a.max_iters },
        DecoderKind::Ml => Decoder::Ml,
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = a.threads {
        if t == 0 {
            return Err(fail(1, "--threads must be positive"));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder.build().map_err(|e| fail(1, e.to_string()))?;
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &k in &a.k {
        eprintln!("k={k}: {} cells x {} trials", a.p_dec.len() * a.p_cnot.len(), a.trials);
        let sweep = pool.install(|| montecarlo::ratio_sweep(&[k], &a.p_dec, &a.p_cnot, a.trials, a.seed, decoder))?;
        rows.extend(sweep.rows);
        warnings.extend(sweep.warnings);
    }
    let csv = montecarlo::to_csv(&rows);
    match &a.out {
        Some(path) => write(path, &csv)?,
        None => emit(csv.trim_end()),
    }
    if let Some(path) = &a.json {
        write(path, &montecarlo::to_json(&rows))?;
    }
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    if rows.iter().any(|r| r.ratio.is_nan()) {
        return Err(fail(3, "some cells had no repetition-code errors; their ratio is NaN"));
    }
    Ok(())
}

fn run_deform(a: DeformArgs) -> Result<(), Failure> {
    let code = load_code(&a.code)?;
    let plan = DeformPlan::from_text(&read(&a.plan)?)?;
    let opts = BatchOptions {
        method: match a.method {
            MethodKind::Cnot => Method::Cnot,
            MethodKind::Measure => Method::Measure,
        },
        repeats: a.repeats,
        min_distance: a.min_distance,
        check_distance: true,
    };
    let d = deform::batch_deform(&code, &plan, &opts)?;
    let mut out = json!({
        "n_before": code.n(),
        "n_after": d.code.n(),
        "k": d.code.k(),
        "distance_before": code.code_distance().ok(),
        "distance_after": d.code.code_distance().ok(),
        "steps": d.steps.len(),
        "measurements": d.circuit.num_measurements(),
        "corrections": d.corrections().map(|c| format!("{:?} {} if {}", c.pauli, c.qubits.join(","), c.cond)).collect::<Vec<_>>(),
    });
    let mut verified = true;
    if a.verify {
        let r = d.verify(&VerifyOptions::default())?;
        verified = r.ok();
        out["verify"] = json!({
            "branches": r.branches,
            "total_probability": r.total_probability,
            "max_deviation": r.max_deviation,
            "max_leakage": r.max_leakage,
            "passed": verified,
        });
    }
    emit(&serde_json::to_string_pretty(&out).expect("json"));
    if let Some(path) = &a.out {
        write(path, &d.code.to_text())?;
    }
    if let Some(path) = &a.circuit {
        write(path, &d.circuit.to_text())?;
    }
    if !verified {
        return Err(fail(5, "deformation changed the logical state in some branch"));
    }
    Ok(())
}

fn build_gate(code: &ParityCode, a: &VerifyGateArgs) -> Result<GatePlan, Failure> {
    let plan = match a.gate {
        GateKind::Cnot => {
            let (i, j) = pair(&a.args)?;
            let mode = if a.shared { ControlMode::Shared } else { ControlMode::Distinct };
            gates::transversal_cnot(code, i, code, j, mode)?
        }
        GateKind::Cz => {
            let pairs = a.args.split(';').map(pair).collect::<Result<Vec<_>, _>>()?;
            gates::logical_cz_parallel(code, &pairs, a.d)?
        }
        GateKind::Rzz => {
            let (i, j) = pair(&a.args)?;
            gates::logical_rzz_pi4(code, i, j, a.d)?
        }
        GateKind::S | GateKind::T => {
            let label = QubitLabel::new(indices(&a.args)?)?;
            let q = *code
                .qubits_with_label(&label)
                .first()
                .ok_or_else(|| fail(2, format!("no qubit labelled {label}")))?;
            if matches!(a.gate, GateKind::S) {
                gates::s_teleport(code, q, a.d)?
            } else {
                gates::t_teleport(code, q, a.d)?
            }
        }
        GateKind::Gzz => {
            let mut terms = Vec::new();
            for t in a.args.split(';') {
                let (ix, angle) = t.split_once(':').ok_or_else(|| fail(1, format!("expected `indices:angle`, got `{t}`")))?;
                let angle = parse_angle(angle).map_err(|e| fail(1, e))?;
                terms.push((QubitLabel::new(indices(ix)?)?, angle));
            }
            gates::diagonal_rotation(code, &terms)?
        }
    };
    Ok(plan)
}

fn run_verify_gate(a: VerifyGateArgs) -> Result<(), Failure> {
    let code = match (&a.code, a.lhz) {
        (Some(path), _) => load_code(path)?,
        (None, Some(k)) => layouts::lhz_layout(k)?.code,
        (None, None) => return Err(fail(1, "--code or --lhz is required")),
    };
    let plan = build_gate(&code, &a)?;
    if let Some(path) = &a.emit {
        write(path, &plan.to_text())?;
    }
    let qubits = plan.circuit.qubits().len();
    if qubits > paritycode::circuit::SIM_CAP {
        return Err(Error::CapExceeded {
            what: "qubits in the gate circuit",
            value: qubits,
            cap: paritycode::circuit::SIM_CAP,
        }
        .into());
    }
    let r = plan.verify()?;
    let out = json!({
        "gate": plan.name,
        "expected": plan.expected.name,
        "qubits": qubits,
        "branches": r.branches,
        "max_deviation": r.max_deviation,
        "max_leakage": r.max_leakage,
        "passed": r.passed(),
        "fault_tolerant": plan.ft.fault_tolerant,
        "distinct_controls": plan.ft.distinct_controls,
        "notes": plan.ft.notes,
    });
    let text = serde_json::to_string_pretty(&out).expect("json");
    emit(&text);
    if let Some(path) = &a.report {
        write(path, &text)?;
    }
    if !r.passed() {
        return Err(fail(5, "logical action differs from the expected unitary"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Layout(a) => run_layout(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Deform(a) => run_deform(a),
        Command::VerifyGate(a) => run_verify_gate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}
