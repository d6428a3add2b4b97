//! Syndromes, belief propagation and an exhaustive maximum-likelihood oracle.
//!
//! All decoders work on X errors only; the stabilizers are Z products.

use std::cmp::Ordering;

use crate::code::{ParityCode, PauliMask};
use crate::gf2::BitVec;
use crate::Error;

pub const DEFAULT_MAX_ITERS: usize = 50;

/// Largest code the ML decoder accepts.
pub const ML_MAX_QUBITS: usize = 24;

// Keeps atanh finite; 2·atanh(1 − 1e-15) ≈ 35.
const TANH_CLAMP: f64 = 1.0 - 1e-15;

/// Parity of each stabilizer on the X part of `error`.
pub fn syndrome(code: &ParityCode, error: &PauliMask) -> Result<BitVec, Error> {
    if error.len() != code.n() {
        return Err(Error::LengthMismatch {
            expected: code.n(),
            got: error.len(),
        });
    }
    Ok(code.stabilizer_matrix().mul_vec(&error.x))
}

/// Bipartite check/variable graph of a stabilizer code.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TannerGraph {
    num_vars: usize,
    checks: Vec<Vec<usize>>,
    /// For each variable, `(check, position within that check)`.
    var_edges: Vec<Vec<(usize, usize)>>,
}

impl TannerGraph {
    pub fn from_code(code: &ParityCode) -> Self {
        Self::from_checks(code.n(), code.stabilizers().iter().map(|s| s.support.clone()).collect())
    }

    /// # Panics
    /// If a check refers to a variable `>= num_vars`.
    pub fn from_checks(num_vars: usize, checks: Vec<Vec<usize>>) -> Self {
        let mut var_edges = vec![Vec::new(); num_vars];
        for (c, vars) in checks.iter().enumerate() {
            for (pos, &v) in vars.iter().enumerate() {
                var_edges[v].push((c, pos));
            }
        }
        Self {
            num_vars,
            checks,
            var_edges,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_checks(&self) -> usize {
        self.checks.len()
    }

    pub fn check(&self, c: usize) -> &[usize] {
        &self.checks[c]
    }

    pub fn var_degree(&self, v: usize) -> usize {
        self.var_edges[v].len()
    }

    fn syndrome_of(&self, x: &[bool]) -> impl Iterator<Item = bool> + '_ {
        let x = x.to_vec();
        self.checks.iter().map(move |vars| vars.iter().filter(|&&v| x[v]).count() % 2 == 1)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DecodeResult {
    /// X-only correction.
    pub correction: PauliMask,
    /// Whether the correction reproduces the syndrome.
    pub converged: bool,
    pub iterations: usize,
}

fn llr(p: f64) -> f64 {
    ((1.0 - p) / p).ln()
}

/// Sum-product belief propagation in the log-likelihood domain, flooding
/// schedule, no damping. Stops as soon as the hard decision reproduces the
/// syndrome; a zero posterior LLR decides "no flip".
pub fn bp_decode(graph: &TannerGraph, syndrome: &BitVec, priors: &[f64], max_iters: usize) -> Result<DecodeResult, Error> {
    if syndrome.len() != graph.num_checks() {
        return Err(Error::LengthMismatch {
            expected: graph.num_checks(),
            got: syndrome.len(),
        });
    }
    if priors.len() != graph.num_vars() {
        return Err(Error::LengthMismatch {
            expected: graph.num_vars(),
            got: priors.len(),
        });
    }
    if let Some(p) = priors.iter().find(|p| !(**p > 0.0 && **p < 0.5)) {
        return Err(Error::InvalidArgument(format!("prior {p} outside (0, 1/2)")));
    }
    let n = graph.num_vars();
    let channel: Vec<f64> = priors.iter().map(|&p| llr(p)).collect();
    let target: Vec<bool> = (0..graph.num_checks()).map(|c| syndrome.get(c)).collect();
    let finish = |x: Vec<bool>, converged, iterations| DecodeResult {
        correction: PauliMask::from_x_bits(BitVec::from_bools(&x)),
        converged,
        iterations,
    };

    let mut hard = vec![false; n];
    if graph.syndrome_of(&hard).eq(target.iter().copied()) {
        return Ok(finish(hard, true, 0));
    }
    // var→check messages, stored per check edge
    let mut to_check: Vec<Vec<f64>> = graph.checks.iter().map(|vars| vars.iter().map(|&v| channel[v]).collect()).collect();
    let mut to_var: Vec<Vec<f64>> = graph.checks.iter().map(|vars| vec![0.0; vars.len()]).collect();
    let mut tanhs = Vec::new();
    for it in 1..=max_iters {
        for (c, msgs) in to_check.iter().enumerate() {
            let sign = if target[c] { -1.0 } else { 1.0 };
            tanhs.clear();
            tanhs.extend(msgs.iter().map(|m| (m / 2.0).tanh()));
            for (pos, out) in to_var[c].iter_mut().enumerate() {
                let prod: f64 = tanhs
                    .iter()
                    .enumerate()
                    .filter(|&(other, _)| other != pos)
                    .map(|(_, t)| t)
                    .product();
                *out = sign * 2.0 * prod.clamp(-TANH_CLAMP, TANH_CLAMP).atanh();
            }
        }
        for v in 0..n {
            let total = channel[v] + graph.var_edges[v].iter().map(|&(c, pos)| to_var[c][pos]).sum::<f64>();
            hard[v] = total < 0.0;
            for &(c, pos) in &graph.var_edges[v] {
                to_check[c][pos] = total - to_var[c][pos];
            }
        }
        if graph.syndrome_of(&hard).eq(target.iter().copied()) {
            return Ok(finish(hard, true, it));
        }
    }
    Ok(finish(hard, false, max_iters))
}

/// Most likely X error with the given syndrome.
///
/// Enumerates the whole coset (particular solution plus the kernel of the
/// check matrix). Cost is `Σ ln((1−p)/p)` over the flipped qubits, so
/// uniform priors give minimum weight. Ties go to the lexicographically
/// smallest support.
pub fn ml_decode(code: &ParityCode, syndrome: &BitVec, priors: &[f64]) -> Result<PauliMask, Error> {
    let n = code.n();
    if n > ML_MAX_QUBITS {
        return Err(Error::CapExceeded {
            what: "qubit count for ML decoding",
            value: n,
            cap: ML_MAX_QUBITS,
        });
    }
    if syndrome.len() != code.stabilizers().len() {
        return Err(Error::LengthMismatch {
            expected: code.stabilizers().len(),
            got: syndrome.len(),
        });
    }
    if priors.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: priors.len() });
    }
    if let Some(p) = priors.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::InvalidArgument(format!("prior {p} outside (0, 1)")));
    }
    let h = code.stabilizer_matrix();
    let mut x = h.solve(syndrome).ok_or_else(|| Error::InvalidArgument("syndrome is not reachable".into()))?;
    let kernel = h.nullspace();
    let weights: Vec<f64> = priors.iter().map(|&p| llr(p)).collect();
    let uniform = priors.iter().all(|&p| p == priors[0]) && priors[0] < 0.5;
    let cost = |x: &BitVec| -> f64 {
        if uniform {
            x.count_ones() as f64
        } else {
            x.iter_ones().map(|q| weights[q]).sum()
        }
    };
    let better = |a: &BitVec, ca: f64, b: &BitVec, cb: f64| -> bool {
        let tol = 1e-12 * ca.abs().max(cb.abs()).max(1.0);
        if (ca - cb).abs() <= tol {
            a.support_cmp(b) == Ordering::Less
        } else {
            ca < cb
        }
    };
    let mut best = x.clone();
    let mut best_cost = cost(&x);
    // Gray-code walk over the kernel span.
    for step in 1u64..(1u64 << kernel.len()) {
        x.xor_assign(&kernel[step.trailing_zeros() as usize]);
        let c = cost(&x);
        if better(&x, c, &best, best_cost) {
            best = x.clone();
            best_cost = c;
        }
    }
    Ok(PauliMask::from_x_bits(best))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::QubitLabel;
    use crate::layouts::lhz_layout;
    use proptest::prelude::*;

    fn lhz(k: usize) -> ParityCode {
        lhz_layout(k).unwrap().code
    }

    fn chain(len: usize) -> ParityCode {
        ParityCode::from_labels(vec![QubitLabel::base(0); len], (1..len).map(|i| vec![i - 1, i]).collect()).unwrap()
    }

    /// Brute force over all 2^n masks: lowest cost, then lexicographic support.
    fn oracle(code: &ParityCode, s: &BitVec, priors: &[f64]) -> BitVec {
        let n = code.n();
        let h = code.stabilizer_matrix();
        let mut best: Option<(f64, BitVec)> = None;
        for m in 0u64..(1 << n) {
            let x = BitVec::from_u64(n, m);
            if h.mul_vec(&x) != *s {
                continue;
            }
            let c: f64 = x.iter_ones().map(|q| ((1.0 - priors[q]) / priors[q]).ln()).sum();
            let replace = match &best {
                None => true,
                Some((bc, bx)) => c < bc - 1e-9 || ((c - bc).abs() <= 1e-9 && x.support_cmp(bx) == Ordering::Less),
            };
            if replace {
                best = Some((c, x));
            }
        }
        best.unwrap().1
    }

    #[test]
    fn syndrome_examples() {
        let code = lhz(3);
        let zero = syndrome(&code, &PauliMask::identity(code.n())).unwrap();
        assert!(zero.is_zero());
        let base0 = code.qubits_with_label(&QubitLabel::base(0))[0];
        let s = syndrome(&code, &PauliMask::from_x(code.n(), [base0])).unwrap();
        for (c, st) in code.stabilizers().iter().enumerate() {
            assert_eq!(s.get(c), st.contains(base0));
        }
        let x0 = PauliMask::from_x(code.n(), code.logical_x_support(0).unwrap());
        assert!(syndrome(&code, &x0).unwrap().is_zero());
        assert!(matches!(
            syndrome(&code, &PauliMask::identity(4)),
            Err(Error::LengthMismatch { expected: 6, got: 4 })
        ));
    }

    #[test]
    fn tanner_degrees() {
        let g = TannerGraph::from_code(&lhz(5));
        assert_eq!((g.num_vars(), g.num_checks()), (15, 10));
        assert!((0..g.num_checks()).all(|c| (3..=4).contains(&g.check(c).len())));
    }

    #[test]
    fn bp_zero_syndrome_is_immediate() {
        let code = lhz(4);
        let g = TannerGraph::from_code(&code);
        let r = bp_decode(&g, &BitVec::zeros(g.num_checks()), &vec![0.01; code.n()], DEFAULT_MAX_ITERS).unwrap();
        assert!(r.converged && r.iterations <= 1 && r.correction.is_identity());
    }

    #[test]
    fn bp_rejects_bad_priors() {
        let code = lhz(2);
        let g = TannerGraph::from_code(&code);
        let s = BitVec::zeros(1);
        assert!(bp_decode(&g, &s, &[0.5, 0.1, 0.1], 10).is_err());
        assert!(bp_decode(&g, &s, &[0.0, 0.1, 0.1], 10).is_err());
        assert!(bp_decode(&g, &s, &[0.1, 0.1], 10).is_err());
    }

    #[test]
    fn bp_corrects_single_flips() {
        for k in 3..=7 {
            let code = lhz(k);
            let g = TannerGraph::from_code(&code);
            for q in 0..code.n() {
                let e = PauliMask::from_x(code.n(), [q]);
                let s = syndrome(&code, &e).unwrap();
                let r = bp_decode(&g, &s, &vec![0.01; code.n()], DEFAULT_MAX_ITERS).unwrap();
                assert!(r.converged, "k={k} q={q}");
                assert_eq!(r.correction, e, "k={k} q={q}");
            }
        }
    }

    #[test]
    fn bp_weight_two_on_lhz3_matches_ml_weight() {
        let code = lhz(3);
        let g = TannerGraph::from_code(&code);
        let priors = vec![0.05; code.n()];
        let mut differs = 0;
        for a in 0..code.n() {
            for b in a + 1..code.n() {
                let e = PauliMask::from_x(code.n(), [a, b]);
                let s = syndrome(&code, &e).unwrap();
                let ml = ml_decode(&code, &s, &priors).unwrap();
                let bp = bp_decode(&g, &s, &priors, DEFAULT_MAX_ITERS).unwrap();
                if bp.converged {
                    assert_eq!(bp.correction.x.count_ones(), ml.x.count_ones(), "error {a},{b}");
                }
                if ml.x.count_ones() < 2 {
                    differs += 1;
                    assert_ne!(ml, e);
                }
            }
        }
        assert!(differs > 0);
    }

    #[test]
    fn ml_matches_brute_force() {
        for code in [lhz(3), lhz(4), chain(5)] {
            let priors: Vec<f64> = (0..code.n()).map(|q| 0.02 + 0.03 * (q % 4) as f64).collect();
            for m in 0u64..(1 << code.stabilizers().len()) {
                let s = BitVec::from_u64(code.stabilizers().len(), m);
                if code.stabilizer_matrix().solve(&s).is_some() {
                    let got = ml_decode(&code, &s, &priors).unwrap();
                    assert_eq!(got.x, oracle(&code, &s, &priors));
                    assert_eq!(syndrome(&code, &got).unwrap(), s);
                }
            }
        }
    }

    #[test]
    fn ml_examples_and_bounds() {
        let code = lhz(4);
        let p = vec![0.1; code.n()];
        for q in 0..code.n() {
            let e = PauliMask::from_x(code.n(), [q]);
            assert_eq!(ml_decode(&code, &syndrome(&code, &e).unwrap(), &p).unwrap(), e);
        }
        let x0 = PauliMask::from_x(code.n(), code.logical_x_support(0).unwrap());
        assert!(ml_decode(&code, &syndrome(&code, &x0).unwrap(), &p).unwrap().is_identity());
        let big = lhz(7);
        assert!(matches!(
            ml_decode(&big, &BitVec::zeros(big.stabilizers().len()), &vec![0.1; 28]),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn ml_corrects_up_to_half_distance() {
        for k in [3, 5] {
            let code = lhz(k);
            let n = code.n();
            let t = (k - 1) / 2;
            let p = vec![0.05; n];
            for m in 0u64..(1 << n) {
                if m.count_ones() as usize > t {
                    continue;
                }
                let e = PauliMask::from_x_bits(BitVec::from_u64(n, m));
                let c = ml_decode(&code, &syndrome(&code, &e).unwrap(), &p).unwrap();
                assert!(code.residual_logical_flips(&e.compose(&c)).unwrap().is_empty());
            }
        }
    }

    #[test]
    fn bp_is_exact_on_chains() {
        for len in 1..=7 {
            let code = chain(len);
            let g = TannerGraph::from_code(&code);
            let generic: Vec<f64> = (0..len).map(|q| 0.013 + 0.037 * q as f64 + 0.005 * (q * q) as f64).collect();
            for m in 0u64..(1 << (len - 1)) {
                let s = BitVec::from_u64(len - 1, m);
                let ml = ml_decode(&code, &s, &generic).unwrap();
                let bp = bp_decode(&g, &s, &generic, DEFAULT_MAX_ITERS).unwrap();
                assert!(bp.converged);
                assert_eq!(bp.correction, ml, "len={len} s={m:b}");
            }
        }
    }

    proptest! {
        #[test]
        fn syndrome_is_linear(a in any::<u16>(), b in any::<u16>()) {
            let code = lhz(5);
            let n = code.n();
            let ea = PauliMask::from_x_bits(BitVec::from_u64(n, a as u64 & 0x7fff));
            let eb = PauliMask::from_x_bits(BitVec::from_u64(n, b as u64 & 0x7fff));
            let lhs = syndrome(&code, &ea.compose(&eb)).unwrap();
            let rhs = syndrome(&code, &ea).unwrap().xor(&syndrome(&code, &eb).unwrap());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn bp_converged_reproduces_syndrome(m in any::<u16>(), p in 0.001f64..0.2) {
            let code = lhz(5);
            let g = TannerGraph::from_code(&code);
            let e = PauliMask::from_x_bits(BitVec::from_u64(code.n(), m as u64 & 0x7fff));
            let s = syndrome(&code, &e).unwrap();
            let r = bp_decode(&g, &s, &vec![p; code.n()], DEFAULT_MAX_ITERS).unwrap();
            if r.converged {
                prop_assert_eq!(syndrome(&code, &r.correction).unwrap(), s);
            }
        }
    }
}
