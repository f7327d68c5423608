//! The amplification factor α_K(φ, δ) and the trajectory-mismatch bounds
//! built on it.
//!
//! Three independent evaluators are provided: the piecewise closed form,
//! the max representation `max_m δ^(K-2-m) Σ_{j≤m} (φδ)^j`, and a brute-force
//! maximization of `T_w(0)` over words `w` in the maps `T_Q(z) = δz` and
//! `T_A(z) = δ(φz + 1)`. All three are computed in exact dyadic arithmetic
//! and rounded once, so they agree to the last bit whenever the closed-form
//! regime test is exact.

use alloc::format;
use alloc::vec::Vec;
use core::fmt;

use crate::dyadic::Dyadic;
use crate::error::{LabError, Result};
use crate::num::{abs, ln, snapped_floor};
use crate::AXIOM_TOL;

/// Largest K accepted by [`word_oracle`].
pub const WORD_ORACLE_MAX_K: usize = 22;

/// Which branch of the closed form applies.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Regime {
    Geometric,
    Linear,
    MixedGeometric,
    MixedLinear,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Geometric => "geometric",
            Regime::Linear => "linear",
            Regime::MixedGeometric => "mixed-geometric",
            Regime::MixedLinear => "mixed-linear",
        }
    }

    pub fn classify(phi: f64, delta: f64) -> Regime {
        let unit = is_unit_product(phi, delta);
        let mixed = phi < 1.0 && delta > 1.0;
        match (mixed, unit) {
            (false, false) => Regime::Geometric,
            (false, true) => Regime::Linear,
            (true, false) => Regime::MixedGeometric,
            (true, true) => Regime::MixedLinear,
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn is_unit_product(phi: f64, delta: f64) -> bool {
    abs(phi * delta - 1.0) <= AXIOM_TOL
}

fn check_args(k: usize, phi: f64, delta: f64) -> Result<()> {
    if k < 2 {
        return Err(LabError::param(format!("amplification needs K >= 2, got {k}")));
    }
    for (name, v) in [("phi", phi), ("delta", delta)] {
        if !v.is_finite() || v < 0.0 {
            return Err(LabError::param(format!("{name} must be finite and >= 0, got {v}")));
        }
    }
    Ok(())
}

/// Breakpoints of the mixed regime `φ < 1 < δ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Breakpoints {
    /// `m_K`, defined when `φδ ≠ 1`.
    pub m: Option<usize>,
    /// `n_K`, defined when `φδ = 1`.
    pub n: Option<usize>,
}

pub fn breakpoints(k: usize, phi: f64, delta: f64) -> Result<Breakpoints> {
    check_args(k, phi, delta)?;
    let cap = (k - 2) as f64;
    match Regime::classify(phi, delta) {
        Regime::MixedGeometric => {
            let m = if phi == 0.0 {
                0.0
            } else {
                let ratio = (delta - 1.0) / (delta * (1.0 - phi));
                snapped_floor(ln(ratio) / ln(phi * delta)).max(0.0).min(cap)
            };
            Ok(Breakpoints { m: Some(m as usize), n: None })
        }
        Regime::MixedLinear => {
            let n = snapped_floor(1.0 / (delta - 1.0)).max(0.0).min(cap);
            Ok(Breakpoints { m: None, n: Some(n as usize) })
        }
        other => Err(LabError::Regime(format!(
            "breakpoints exist only for phi < 1 < delta; (phi, delta) = ({phi}, {delta}) is {other}"
        ))),
    }
}

/// `Σ_{j=0}^{m} r^j`.
fn geometric_sum(r: &Dyadic, m: usize) -> Dyadic {
    let mut acc = Dyadic::zero();
    let mut term = Dyadic::one();
    for _ in 0..=m {
        acc = &acc + &term;
        term = &term * r;
    }
    acc
}

/// `(1 - r^n) / (1 - r)`, divided exactly.
/// Exact quotient when dyadic, otherwise the rounded double quotient.
fn quotient(num: &Dyadic, den: &Dyadic) -> Dyadic {
    num.checked_div(den)
        .unwrap_or_else(|| Dyadic::from_f64(num.to_f64() / den.to_f64()))
}

fn closed_form_exact(k: usize, phi: f64, delta: f64) -> Result<(Dyadic, Regime)> {
    let regime = Regime::classify(phi, delta);
    let (p, d) = (Dyadic::from_f64(phi), Dyadic::from_f64(delta));
    let r = &p * &d;
    let one = Dyadic::one();
    let value = match regime {
        Regime::Geometric => quotient(&(&one - &r.pow((k - 1) as u32)), &(&one - &r)),
        Regime::Linear => Dyadic::from_int((k - 1) as i64),
        Regime::MixedGeometric => {
            let m = breakpoints(k, phi, delta)?.m.expect("mixed-geometric has m_K");
            let num = &d.pow((k - 2 - m) as u32) * &(&one - &r.pow((m + 1) as u32));
            quotient(&num, &(&one - &r))
        }
        Regime::MixedLinear => {
            let n = breakpoints(k, phi, delta)?.n.expect("mixed-linear has n_K");
            &d.pow((k - 2 - n) as u32) * &Dyadic::from_int((n + 1) as i64)
        }
    };
    Ok((value, regime))
}

/// Closed-form α_K(φ, δ) and the branch that produced it.
pub fn amplification_closed_form(k: usize, phi: f64, delta: f64) -> Result<(f64, Regime)> {
    check_args(k, phi, delta)?;
    let (v, regime) = closed_form_exact(k, phi, delta)?;
    Ok((v.to_f64(), regime))
}

fn max_form_exact(k: usize, phi: f64, delta: f64) -> (Dyadic, usize) {
    let (p, d) = (Dyadic::from_f64(phi), Dyadic::from_f64(delta));
    let r = &p * &d;
    let mut best: Option<(Dyadic, usize)> = None;
    for m in 0..=k - 2 {
        let cand = &d.pow((k - 2 - m) as u32) * &geometric_sum(&r, m);
        if best.as_ref().is_none_or(|(b, _)| cand > *b) {
            best = Some((cand, m));
        }
    }
    best.expect("at least one candidate")
}

/// α_K(φ, δ) as `max_{0≤m≤K-2} δ^(K-2-m) Σ_{j=0}^{m} (φδ)^j`, with the
/// smallest maximizing `m`.
pub fn amplification_max_form(k: usize, phi: f64, delta: f64) -> Result<(f64, usize)> {
    check_args(k, phi, delta)?;
    let (v, m) = max_form_exact(k, phi, delta);
    Ok((v.to_f64(), m))
}

/// Canonical value of α_K(φ, δ) (the max representation).
pub fn alpha(k: usize, phi: f64, delta: f64) -> Result<f64> {
    Ok(amplification_max_form(k, phi, delta)?.0)
}

/// The three evaluations of α at one point, with their discrepancies
/// computed exactly and rounded once.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Agreement {
    pub closed: f64,
    pub max_form: f64,
    /// `C_(K-1)` from the word oracle.
    pub word: f64,
    /// `closed - max_form`.
    pub closed_minus_max: f64,
    /// `δ·closed - C_(K-1)`.
    pub delta_closed_minus_word: f64,
}

impl Agreement {
    pub fn within(&self, tol: f64) -> bool {
        self.closed_minus_max.abs() <= tol && self.delta_closed_minus_word.abs() <= tol
    }
}

/// Evaluates closed form, max form and word oracle at `(K, φ, δ)`.
pub fn triple_agreement(k: usize, phi: f64, delta: f64) -> Result<Agreement> {
    check_args(k, phi, delta)?;
    let (closed, _) = closed_form_exact(k, phi, delta)?;
    let (max, _) = max_form_exact(k, phi, delta);
    let word = word_oracle_exact(k, phi, delta)?.0;
    let d = Dyadic::from_f64(delta);
    Ok(Agreement {
        closed: closed.to_f64(),
        max_form: max.to_f64(),
        word: word.to_f64(),
        closed_minus_max: (&closed - &max).to_f64(),
        delta_closed_minus_word: (&(&d * &closed) - &word).to_f64(),
    })
}

/// A step type of the word dynamics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Letter {
    /// `T_Q(z) = δz`.
    Q,
    /// `T_A(z) = δ(φz + 1)`.
    A,
}

impl fmt::Display for Letter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Letter::Q => "Q",
            Letter::A => "A",
        })
    }
}

fn apply_letter(letter: Letter, z: &Dyadic, p: &Dyadic, d: &Dyadic) -> Dyadic {
    match letter {
        Letter::Q => d * z,
        Letter::A => d * &(&(p * z) + &Dyadic::one()),
    }
}

/// Values `T_{w_1}(0), T_{w_2}T_{w_1}(0), …`, each computed exactly and then
/// rounded.
pub fn apply_word(word: &[Letter], phi: f64, delta: f64) -> Vec<f64> {
    let (p, d) = (Dyadic::from_f64(phi), Dyadic::from_f64(delta));
    let mut z = Dyadic::zero();
    word.iter()
        .map(|l| {
            z = apply_letter(*l, &z, &p, &d);
            z.to_f64()
        })
        .collect()
}

/// The maximizing word found by [`word_oracle`].
#[derive(Clone, Debug, PartialEq)]
pub struct WordTrace {
    pub word: Vec<Letter>,
    /// `C_{K-1} = T_w(0)`.
    pub value: f64,
    pub per_step: Vec<f64>,
}

impl WordTrace {
    pub fn word_string(&self) -> alloc::string::String {
        self.word.iter().map(|l| format!("{l}")).collect()
    }
}

/// Exhaustive maximization of `T_w(0)` over nonempty words of length at most
/// `K - 1`. Words are visited depth-first with `A` before `Q`; the first
/// word reaching the maximum is reported.
pub fn word_oracle(k: usize, phi: f64, delta: f64) -> Result<WordTrace> {
    let (best_value, word) = word_oracle_exact(k, phi, delta)?;
    Ok(WordTrace {
        per_step: apply_word(&word, phi, delta),
        value: best_value.to_f64(),
        word,
    })
}

fn word_oracle_exact(k: usize, phi: f64, delta: f64) -> Result<(Dyadic, Vec<Letter>)> {
    check_args(k, phi, delta)?;
    if k > WORD_ORACLE_MAX_K {
        return Err(LabError::param(format!(
            "word enumeration is limited to K <= {WORD_ORACLE_MAX_K}, got {k}"
        )));
    }
    let (p, d) = (Dyadic::from_f64(phi), Dyadic::from_f64(delta));
    let mut search = Search { p, d, max_len: k - 1, word: Vec::new(), best: None };
    search.visit(&Dyadic::zero());
    Ok(search.best.expect("K >= 2 gives at least one word"))
}

struct Search {
    p: Dyadic,
    d: Dyadic,
    max_len: usize,
    word: Vec<Letter>,
    best: Option<(Dyadic, Vec<Letter>)>,
}

impl Search {
    fn visit(&mut self, z: &Dyadic) {
        if self.word.len() == self.max_len {
            return;
        }
        for letter in [Letter::A, Letter::Q] {
            let next = apply_letter(letter, z, &self.p, &self.d);
            self.word.push(letter);
            if self.best.as_ref().is_none_or(|(b, _)| next > *b) {
                self.best = Some((next.clone(), self.word.clone()));
            }
            self.visit(&next);
            self.word.pop();
        }
    }
}

/// Inputs of the trajectory-mismatch bound.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AmplificationParams {
    pub k: usize,
    pub phi: f64,
    pub delta: f64,
    pub lambda: f64,
    /// `d(f, g) = sup_x ρ(f(x), g(x))`.
    pub dfg: f64,
}

impl AmplificationParams {
    pub fn new(k: usize, lambda: f64, phi: f64, delta: f64, dfg: f64) -> Result<Self> {
        check_args(k, phi, delta)?;
        for (name, v) in [("lambda", lambda), ("d(f,g)", dfg)] {
            if !v.is_finite() || v < 0.0 {
                return Err(LabError::param(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(AmplificationParams { k, phi, delta, lambda, dfg })
    }

    pub fn alpha(&self) -> f64 {
        max_form_exact(self.k, self.phi, self.delta).0.to_f64()
    }
}

/// `(λφδ/2)·α_K(φ, δ)·d(f, g)`.
pub fn tmr_bound(params: &AmplificationParams) -> f64 {
    params.lambda * params.phi * params.delta / 2.0 * params.alpha() * params.dfg
}

/// The TMR bound plus the oracle-trajectory risk.
pub fn reasoning_risk_bound(params: &AmplificationParams, otr_value: f64) -> f64 {
    tmr_bound(params) + otr_value
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use Letter::{A, Q};

    #[test]
    fn two_steps_give_one() {
        for (phi, delta) in [(0.0, 0.0), (0.7, 0.3), (3.0, 2.5), (0.2, 5.0)] {
            assert_eq!(amplification_closed_form(2, phi, delta).unwrap().0, 1.0);
            assert_eq!(amplification_max_form(2, phi, delta).unwrap(), (1.0, 0));
        }
    }

    #[test]
    fn linear_branch() {
        assert_eq!(amplification_closed_form(3, 1.0, 1.0).unwrap(), (2.0, Regime::Linear));
    }

    #[test]
    fn mixed_linear_branch() {
        assert_eq!(amplification_closed_form(4, 0.5, 2.0).unwrap(), (4.0, Regime::MixedLinear));
        assert_eq!(breakpoints(4, 0.5, 2.0).unwrap(), Breakpoints { m: None, n: Some(1) });
    }

    #[test]
    fn mixed_geometric_breakpoints() {
        assert_eq!(breakpoints(4, 0.0, 2.0).unwrap().m, Some(0));
        assert_eq!(breakpoints(4, 0.25, 2.0).unwrap().m, Some(0));
        assert_eq!(amplification_closed_form(4, 0.25, 2.0).unwrap(), (4.0, Regime::MixedGeometric));
    }

    #[test]
    fn breakpoints_outside_the_mixed_regime() {
        assert!(matches!(breakpoints(4, 1.0, 2.0), Err(LabError::Regime(_))));
        assert!(matches!(breakpoints(4, 0.5, 0.5), Err(LabError::Regime(_))));
    }

    #[test]
    fn max_form_candidates() {
        assert_eq!(amplification_max_form(3, 2.0, 1.0).unwrap(), (3.0, 1));
        assert_eq!(amplification_max_form(4, 0.25, 2.0).unwrap(), (4.0, 0));
    }

    #[test]
    fn short_k_is_rejected() {
        assert!(matches!(amplification_closed_form(1, 1.0, 1.0), Err(LabError::Parameter(_))));
        assert!(matches!(amplification_max_form(0, 1.0, 1.0), Err(LabError::Parameter(_))));
        assert!(word_oracle(1, 1.0, 1.0).is_err());
        assert!(word_oracle(WORD_ORACLE_MAX_K + 1, 1.0, 1.0).is_err());
        assert!(amplification_closed_form(3, -1.0, 1.0).is_err());
        assert!(amplification_closed_form(3, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn word_oracle_examples() {
        let t = word_oracle(3, 2.0, 1.0).unwrap();
        assert_eq!((t.word.clone(), t.value), (vec![A, A], 3.0));
        assert_eq!(t.per_step, vec![1.0, 3.0]);

        let t = word_oracle(4, 0.5, 2.0).unwrap();
        assert_eq!(t.value, 8.0);
        assert_eq!(t.word, vec![A, A, Q]);
        assert_eq!(apply_word(&[A, Q, Q], 0.5, 2.0), vec![2.0, 4.0, 8.0]);

        assert_eq!(word_oracle(2, 0.3, 1.7).unwrap().value, 1.7);
        assert_eq!(word_oracle(2, 0.3, 1.7).unwrap().word, vec![A]);
        assert_eq!(word_oracle(2, 0.3, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn tmr_bound_values() {
        let p = AmplificationParams::new(2, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(tmr_bound(&p), 1.0);
        let p = AmplificationParams::new(3, 2.0, 1.0, 1.0, 1.0).unwrap();
        assert_eq!(tmr_bound(&p), 2.0);
        assert_eq!(reasoning_risk_bound(&p, 0.0), 2.0);
        let p = AmplificationParams::new(7, 3.0, 0.0, 2.0, 4.0).unwrap();
        assert_eq!(tmr_bound(&p), 0.0);
        assert!(AmplificationParams::new(3, -1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn large_values_agree_bit_for_bit() {
        let (c, _) = amplification_closed_form(12, 3.0, 3.0).unwrap();
        let (m, _) = amplification_max_form(12, 3.0, 3.0).unwrap();
        let w = word_oracle(12, 3.0, 3.0).unwrap().value;
        assert_eq!(c, m);
        assert_eq!(w, 3.0 * m);
        assert_eq!(c, (9f64 * 9.0 * 9.0 * 9.0 * 9.0 * 9.0 * 9.0 * 9.0 * 9.0 * 9.0 * 9.0 - 1.0) / 8.0);
    }

    #[test]
    fn regime_names() {
        assert_eq!(Regime::classify(2.0, 1.0).name(), "geometric");
        assert_eq!(Regime::classify(0.5, 2.0).name(), "mixed-linear");
        assert_eq!(Regime::classify(0.25, 2.0).name(), "mixed-geometric");
        assert_eq!(Regime::classify(0.5, 0.5).name(), "geometric");
    }
}
