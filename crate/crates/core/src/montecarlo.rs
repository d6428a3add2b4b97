//! Logical error rates of parity codes against a repetition-code baseline
//! at equal qubit count, under independent bit-flip noise with perfect
//! syndrome measurement.
//!
//! Every qubit gets one flip probability combining an environment term
//! `p_dec` with CNOT-induced flips: a qubit touched by `w` CNOTs during a
//! stabilizer round flips when an odd number of them fail. Each trial has its
//! own ChaCha8 stream `(seed, trial index)`, so results do not depend on how
//! trials are spread over threads.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::code::{LogicalReadout, ParityCode, PhysicalQubit, Stabilizer};
use crate::decode::{bp_decode, ml_decode, TannerGraph, DEFAULT_MAX_ITERS, ML_MAX_QUBITS};
use crate::gf2::BitVec;
use crate::labels::{LogicalIndex, QubitLabel};
use crate::layouts::lhz_layout;
use crate::Error;

/// Smallest prior handed to the decoders; BP needs `p > 0`.
pub const MIN_PRIOR: f64 = 1e-15;

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Number of stabilizer generators containing qubit `q`, i.e. the CNOTs it
/// takes part in per measurement round.
pub fn cnot_multiplicity(code: &ParityCode, q: usize) -> Result<usize, Error> {
    code.qubit(q)?;
    Ok(code.stabilizers().iter().filter(|s| s.contains(q)).count())
}

/// Probability of an odd number of events among `w` independent
/// Bernoulli(`p`) trials: `(1 − (1 − 2p)^w) / 2`.
pub fn odd_flip_prob(p: f64, w: usize) -> Result<f64, Error> {
    if w == 0 {
        return Err(Error::InvalidArgument("CNOT multiplicity must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("probability {p} outside [0, 1]")));
    }
    Ok((1.0 - (1.0 - 2.0 * p).powi(w as i32)) / 2.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct NoiseParams {
    pub p_dec: f64,
    pub p_cnot: f64,
}

impl NoiseParams {
    pub fn new(p_dec: f64, p_cnot: f64) -> Result<Self, Error> {
        for (name, p) in [("p_dec", p_dec), ("p_cnot", p_cnot)] {
            if !(0.0..0.5).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} outside [0, 1/2)")));
            }
        }
        Ok(Self { p_dec, p_cnot })
    }
}

/// Total flip probability of a qubit in `w` CNOTs. A qubit in no stabilizer
/// (`w = 0`) only sees `p_dec`.
pub fn qubit_error_prob(params: NoiseParams, w: usize) -> f64 {
    let g = if w == 0 {
        0.0
    } else {
        odd_flip_prob(params.p_cnot, w).expect("validated params")
    };
    (1.0 - params.p_dec) * g + params.p_dec * (1.0 - g)
}

#[derive(Clone, Debug)]
pub struct Baseline {
    pub blocks: Vec<ParityCode>,
    /// Set when `k` is even and the chains were shortened.
    pub warning: Option<String>,
}

/// `k` repetition chains of `⌊(k+1)/2⌋` copies each, one per logical, using
/// the same number of qubits as LHZ(k) when `k` is odd.
pub fn repetition_baseline(k: usize) -> Result<Baseline, Error> {
    if k < 1 {
        return Err(Error::InvalidArgument("baseline needs k >= 1".into()));
    }
    let len = k.div_ceil(2);
    let warning = k.is_multiple_of(2).then(|| {
        format!("k = {k} is even: chains have length {len}, {} qubits short of LHZ({k})", k / 2)
    });
    let blocks = (0..k)
        .map(|i| {
            let qubits = (0..len)
                .map(|c| PhysicalQubit {
                    id: c,
                    label: QubitLabel::base(i),
                    coord: Some((0, 2 * c as i32)),
                })
                .collect();
            let stabs = (1..len).map(|c| Stabilizer::new([c - 1, c]).with_ancilla((1, 2 * c as i32 - 1))).collect();
            ParityCode::new(qubits, stabs)
        })
        .collect::<Result<_, _>>()?;
    Ok(Baseline { blocks, warning })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decoder {
    Bp { max_iters: usize },
    Ml,
}

impl Default for Decoder {
    fn default() -> Self {
        Decoder::Bp {
            max_iters: DEFAULT_MAX_ITERS,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialReport {
    pub trials: u64,
    /// Trials where at least one logical qubit of any block was flipped.
    pub any_logical_error: u64,
    /// `(block, logical, flip count)` for every encoded logical.
    pub per_logical: Vec<(usize, LogicalIndex, u64)>,
    /// BP runs that ended without reproducing the syndrome. Such trials are
    /// counted as logical errors.
    pub bp_nonconverged: u64,
    pub seed: u64,
    pub wall_time: Duration,
}

impl TrialReport {
    pub fn rate(&self) -> f64 {
        self.any_logical_error as f64 / self.trials as f64
    }
}

struct Block {
    n: usize,
    probs: Vec<f64>,
    priors: Vec<f64>,
    graph: TannerGraph,
    readout: LogicalReadout,
    code: ParityCode,
}

#[derive(Clone, Default)]
struct Tally {
    any: u64,
    per_logical: Vec<u64>,
    nonconverged: u64,
}

impl Tally {
    fn merge(mut self, other: Tally) -> Tally {
        self.any += other.any;
        self.nonconverged += other.nonconverged;
        for (a, b) in self.per_logical.iter_mut().zip(other.per_logical) {
            *a += b;
        }
        self
    }
}

/// Per-qubit flip probabilities of a code under `params`.
pub fn error_probs(code: &ParityCode, params: NoiseParams) -> Vec<f64> {
    (0..code.n())
        .map(|q| qubit_error_prob(params, cnot_multiplicity(code, q).expect("dense ids")))
        .collect()
}

/// Samples, decodes and tallies `trials` independent noise rounds on every block.
pub fn run_trials(blocks: &[ParityCode], params: NoiseParams, trials: u64, seed: u64, decoder: Decoder) -> Result<TrialReport, Error> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    let start = Instant::now();
    let blocks: Vec<Block> = blocks
        .iter()
        .map(|code| {
            if decoder == Decoder::Ml && code.n() > ML_MAX_QUBITS {
                return Err(Error::CapExceeded {
                    what: "qubit count for ML decoding",
                    value: code.n(),
                    cap: ML_MAX_QUBITS,
                });
            }
            let probs = error_probs(code, params);
            Ok(Block {
                n: code.n(),
                priors: probs.iter().map(|&p| p.max(MIN_PRIOR)).collect(),
                probs,
                graph: TannerGraph::from_code(code),
                readout: LogicalReadout::new(code)?,
                code: code.clone(),
            })
        })
        .collect::<Result<_, Error>>()?;
    let logicals: Vec<(usize, LogicalIndex)> = blocks
        .iter()
        .enumerate()
        .flat_map(|(b, blk)| blk.readout.logicals().map(move |i| (b, i)))
        .collect();

    let one = |t: u64| -> Result<Tally, Error> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(t);
        let mut tally = Tally {
            per_logical: vec![0; logicals.len()],
            ..Tally::default()
        };
        let mut slot = 0;
        let mut failed = false;
        for blk in &blocks {
            let mut error = BitVec::zeros(blk.n);
            for (q, &p) in blk.probs.iter().enumerate() {
                if rng.gen::<f64>() < p {
                    error.set(q, true);
                }
            }
            let syndrome = blk.graph_syndrome(&error);
            let (correction, converged) = match decoder {
                Decoder::Bp { max_iters } => {
                    let r = bp_decode(&blk.graph, &syndrome, &blk.priors, max_iters)?;
                    (r.correction.x, r.converged)
                }
                Decoder::Ml => (ml_decode(&blk.code, &syndrome, &blk.priors)?.x, true),
            };
            let residual = error.xor(&correction);
            let flips = blk.readout.flips_unchecked(&residual);
            let count = blk.readout.logicals().count();
            for (offset, i) in blk.readout.logicals().enumerate() {
                if flips.contains(&i) {
                    tally.per_logical[slot + offset] += 1;
                }
            }
            slot += count;
            if !converged {
                tally.nonconverged += 1;
            }
            failed |= !converged || !flips.is_empty();
        }
        tally.any = failed as u64;
        Ok(tally)
    };
    let empty = || Tally {
        per_logical: vec![0; logicals.len()],
        ..Tally::default()
    };
    let total = (0..trials)
        .into_par_iter()
        .map(one)
        .try_reduce(empty, |a, b| Ok(a.merge(b)))?;
    Ok(TrialReport {
        trials,
        any_logical_error: total.any,
        per_logical: logicals.into_iter().zip(total.per_logical).map(|((b, i), c)| (b, i, c)).collect(),
        bp_nonconverged: total.nonconverged,
        seed,
        wall_time: start.elapsed(),
    })
}

impl Block {
    fn graph_syndrome(&self, x: &BitVec) -> BitVec {
        let bits: Vec<bool> = (0..self.graph.num_checks())
            .map(|c| self.graph.check(c).iter().filter(|&&q| x.get(q)).count() % 2 == 1)
            .collect();
        BitVec::from_bools(&bits)
    }
}

/// Wilson score interval for `successes` out of `trials` at 95%.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    let low = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let high = if successes == trials { 1.0 } else { (centre + half).min(1.0) };
    (low, high)
}

/// 95% interval for the ratio of two binomial rates: Katz log interval, or
/// the quotient of Wilson bounds when either count is zero.
pub fn ratio_interval(a: u64, n1: u64, b: u64, n2: u64) -> (f64, f64) {
    if a == 0 || b == 0 {
        let (al, ah) = wilson_interval(a, n1);
        let (bl, bh) = wilson_interval(b, n2);
        return (al / bh, ah / bl);
    }
    let ratio = (a as f64 / n1 as f64) / (b as f64 / n2 as f64);
    let se = (1.0 / a as f64 - 1.0 / n1 as f64 + 1.0 / b as f64 - 1.0 / n2 as f64).sqrt();
    (ratio * (-Z95 * se).exp(), ratio * (Z95 * se).exp())
}

/// One cell of a parity vs. repetition sweep.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub k: usize,
    pub p_dec: f64,
    pub p_cnot: f64,
    pub trials: u64,
    pub parity_errors: u64,
    pub rep_errors: u64,
    /// `p_parity / p_rep`; 1 at `p_dec = p_cnot = 0`, NaN when the baseline
    /// saw no errors anywhere else.
    pub ratio: f64,
    pub parity_ci_low: f64,
    pub parity_ci_high: f64,
    pub rep_ci_low: f64,
    pub rep_ci_high: f64,
    pub bp_nonconverged: u64,
    pub seed: u64,
    pub ratio_ci_low: f64,
    pub ratio_ci_high: f64,
}

pub const CSV_HEADER: &str = "k,p_dec,p_cnot,trials,parity_errors,rep_errors,ratio,parity_ci_low,parity_ci_high,rep_ci_low,rep_ci_high,bp_nonconverged,seed,ratio_ci_low,ratio_ci_high";

impl SweepRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.k,
            self.p_dec,
            self.p_cnot,
            self.trials,
            self.parity_errors,
            self.rep_errors,
            self.ratio,
            self.parity_ci_low,
            self.parity_ci_high,
            self.rep_ci_low,
            self.rep_ci_high,
            self.bp_nonconverged,
            self.seed,
            self.ratio_ci_low,
            self.ratio_ci_high
        )
    }
}

pub fn to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv());
        out.push('\n');
    }
    out
}

pub fn to_json(rows: &[SweepRow]) -> String {
    serde_json::to_string_pretty(rows).expect("rows serialize")
}

#[derive(Clone, Debug)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub warnings: Vec<String>,
}

/// Runs LHZ(k) and its repetition baseline on every `(k, p_dec, p_cnot)`
/// cell with the same seed.
pub fn ratio_sweep(ks: &[usize], p_decs: &[f64], p_cnots: &[f64], trials: u64, seed: u64, decoder: Decoder) -> Result<Sweep, Error> {
    if ks.is_empty() || p_decs.is_empty() || p_cnots.is_empty() {
        return Err(Error::InvalidArgument("sweep grids must be non-empty".into()));
    }
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &k in ks {
        let parity = [lhz_layout(k)?.code];
        let baseline = repetition_baseline(k)?;
        warnings.extend(baseline.warning.clone());
        for &p_dec in p_decs {
            for &p_cnot in p_cnots {
                let params = NoiseParams::new(p_dec, p_cnot)?;
                let par = run_trials(&parity, params, trials, seed, decoder)?;
                let rep = run_trials(&baseline.blocks, params, trials, seed, decoder)?;
                let (a, b) = (par.any_logical_error, rep.any_logical_error);
                let (ratio, (rl, rh)) = if p_dec == 0.0 && p_cnot == 0.0 {
                    (1.0, (1.0, 1.0))
                } else if b == 0 {
                    warnings.push(format!(
                        "k={k} p_dec={p_dec} p_cnot={p_cnot}: no baseline errors, ratio undefined"
                    ));
                    (f64::NAN, ratio_interval(a, trials, b, trials))
                } else {
                    (a as f64 / b as f64, ratio_interval(a, trials, b, trials))
                };
                let (pl, ph) = wilson_interval(a, trials);
                let (bl, bh) = wilson_interval(b, trials);
                rows.push(SweepRow {
                    k,
                    p_dec,
                    p_cnot,
                    trials,
                    parity_errors: a,
                    rep_errors: b,
                    ratio,
                    parity_ci_low: pl,
                    parity_ci_high: ph,
                    rep_ci_low: bl,
                    rep_ci_high: bh,
                    bp_nonconverged: par.bp_nonconverged + rep.bp_nonconverged,
                    seed,
                    ratio_ci_low: rl,
                    ratio_ci_high: rh,
                });
            }
        }
    }
    Ok(Sweep { rows, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn odd_flip_examples() {
        assert!(close(odd_flip_prob(0.1, 2).unwrap(), 0.18));
        for p in [0.01f64, 0.05, 0.1] {
            let direct = 4.0 * p.powi(3) * (1.0 - p) + 4.0 * p * (1.0 - p).powi(3);
            assert!(close(odd_flip_prob(p, 4).unwrap(), direct));
            assert!(close(odd_flip_prob(p, 1).unwrap(), p));
        }
        for w in 1..=4 {
            assert_eq!(odd_flip_prob(0.0, w).unwrap(), 0.0);
        }
        assert!(odd_flip_prob(0.1, 0).is_err());
    }

    #[test]
    fn qubit_prob_examples() {
        let p = NoiseParams::new(0.05, 0.02).unwrap();
        // 0.05·(1 − 0.0392) + 0.95·0.0392
        assert!(close(qubit_error_prob(p, 2), 0.08528));
        let no_dec = NoiseParams::new(0.0, 0.03).unwrap();
        assert!(close(qubit_error_prob(no_dec, 4), odd_flip_prob(0.03, 4).unwrap()));
        let no_cnot = NoiseParams::new(0.07, 0.0).unwrap();
        assert!(close(qubit_error_prob(no_cnot, 4), 0.07));
        assert!(NoiseParams::new(0.5, 0.0).is_err());
        assert!(NoiseParams::new(0.0, -0.1).is_err());
    }

    #[test]
    fn multiplicity_examples() {
        let code = lhz_layout(6).unwrap().code;
        let interior = code.qubits_with_label(&QubitLabel::pair(1, 3))[0];
        assert_eq!(cnot_multiplicity(&code, interior).unwrap(), 4);
        let corner = code.qubits_with_label(&QubitLabel::base(0))[0];
        assert_eq!(cnot_multiplicity(&code, corner).unwrap(), 1);
        let chain = &repetition_baseline(5).unwrap().blocks[0];
        assert_eq!(cnot_multiplicity(chain, 1).unwrap(), 2);
        assert!(cnot_multiplicity(chain, 9).is_err());
    }

    #[test]
    fn baseline_shapes() {
        let b5 = repetition_baseline(5).unwrap();
        assert_eq!(b5.blocks.len(), 5);
        assert_eq!(b5.blocks.iter().map(|b| b.n()).sum::<usize>(), 15);
        assert!(b5.warning.is_none());
        let b3 = repetition_baseline(3).unwrap();
        assert!(b3.blocks.iter().all(|b| b.n() == 2 && b.code_distance().unwrap() == 2));
        let b1 = repetition_baseline(1).unwrap();
        assert_eq!((b1.blocks[0].n(), b1.blocks[0].stabilizers().len()), (1, 0));
        assert!(repetition_baseline(4).unwrap().warning.is_some());
        assert!(repetition_baseline(0).is_err());
    }

    #[test]
    fn noiseless_trials_have_no_errors() {
        let code = [lhz_layout(4).unwrap().code];
        let r = run_trials(&code, NoiseParams::new(0.0, 0.0).unwrap(), 200, 1, Decoder::default()).unwrap();
        assert_eq!((r.any_logical_error, r.bp_nonconverged), (0, 0));
    }

    #[test]
    fn trials_are_deterministic() {
        let code = [lhz_layout(5).unwrap().code];
        let p = NoiseParams::new(0.03, 0.01).unwrap();
        let a = run_trials(&code, p, 2000, 42, Decoder::default()).unwrap();
        let b = run_trials(&code, p, 2000, 42, Decoder::default()).unwrap();
        assert_eq!(
            (a.any_logical_error, &a.per_logical, a.bp_nonconverged),
            (b.any_logical_error, &b.per_logical, b.bp_nonconverged)
        );
        let c = run_trials(&code, p, 2000, 43, Decoder::default()).unwrap();
        assert_ne!(a.per_logical, c.per_logical);
    }

    #[test]
    fn single_qubit_code_fails_at_p_dec() {
        let code = [repetition_baseline(1).unwrap().blocks.remove(0)];
        let p = 0.1;
        let trials = 20_000;
        let r = run_trials(&code, NoiseParams::new(p, 0.0).unwrap(), trials, 7, Decoder::default()).unwrap();
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        assert!((r.rate() - p).abs() < 3.0 * sigma, "{}", r.rate());
    }

    #[test]
    fn ml_decoder_refuses_large_codes() {
        let code = [lhz_layout(7).unwrap().code];
        assert!(matches!(
            run_trials(&code, NoiseParams::new(0.01, 0.0).unwrap(), 1, 0, Decoder::Ml),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn intervals() {
        let (lo, hi) = wilson_interval(50, 1000);
        assert!(lo < 0.05 && hi > 0.05 && lo > 0.03 && hi < 0.07);
        assert_eq!(wilson_interval(0, 100).0, 0.0);
        let (lo, hi) = ratio_interval(20, 1000, 40, 1000);
        assert!(lo < 0.5 && hi > 0.5 && hi < 1.0);
        let (lo, hi) = ratio_interval(0, 1000, 40, 1000);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 1.0);
    }

    #[test]
    fn sweep_zero_cell_is_one() {
        let s = ratio_sweep(&[3], &[0.0, 0.05], &[0.0], 500, 3, Decoder::default()).unwrap();
        assert_eq!(s.rows[0].ratio, 1.0);
        assert!(s.rows[1].ratio.is_finite());
        let csv = to_csv(&s.rows);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with("k,p_dec,p_cnot,trials,parity_errors,rep_errors,ratio,"));
        let json: serde_json::Value = serde_json::from_str(&to_json(&s.rows)).unwrap();
        assert_eq!(json[0]["ratio"], 1.0);
    }
}
