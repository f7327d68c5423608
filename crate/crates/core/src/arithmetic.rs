//! The one-digit-by-two-digit multiplication chain rule on arithmetic
//! expression strings.
//!
//! Prompts have the form `d1·(10·d2 + d3)`, written as the string
//! `"d1·d2d3"` with `d2 ≠ 0`. The four steps ask for the two partial
//! products, scale the first by ten and add them up.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use num_bigint::BigUint;

use crate::chain::{self, AnswerMap, ChainRule, MapFamily, StepFamily};
use crate::error::{LabError, Result};
use crate::spaces::{Point, Space, TIMES};

/// A parsed expression.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ArithExpr {
    Number(BigUint),
    Sum(BigUint, BigUint),
    Product(BigUint, BigUint),
}

fn digits(s: &str) -> Result<BigUint> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return Err(LabError::Parse(format!("`{s}` is not a decimal number")));
    }
    BigUint::parse_bytes(s.as_bytes(), 10)
        .ok_or_else(|| LabError::Parse(format!("`{s}` is not a decimal number")))
}

impl ArithExpr {
    pub fn parse(text: &str) -> Result<Self> {
        if let Some((l, r)) = text.split_once('+') {
            return Ok(ArithExpr::Sum(digits(l)?, digits(r)?));
        }
        if let Some((l, r)) = text.split_once(TIMES) {
            return Ok(ArithExpr::Product(digits(l)?, digits(r)?));
        }
        Ok(ArithExpr::Number(digits(text).map_err(|_| {
            LabError::Parse(format!("`{text}` is not a number, sum or product"))
        })?))
    }

    pub fn value(&self) -> BigUint {
        match self {
            ArithExpr::Number(n) => n.clone(),
            ArithExpr::Sum(a, b) => a + b,
            ArithExpr::Product(a, b) => a * b,
        }
    }
}

/// The ideal evaluator g: canonical decimal of a sum or product, and the
/// input itself for a bare number.
pub fn ground_truth_eval(text: &str) -> Result<String> {
    match ArithExpr::parse(text)? {
        ArithExpr::Number(_) => Ok(text.to_string()),
        e => Ok(e.value().to_string()),
    }
}

pub(crate) fn ground_truth_point(p: &Point) -> Result<Point> {
    let text = p
        .as_expr()
        .ok_or_else(|| LabError::domain(format!("expected an expression point, got {p}")))?;
    Point::expr(&ground_truth_eval(text)?)
}

/// The ground-truth answer map on the expression space.
pub fn ground_truth_map() -> AnswerMap {
    AnswerMap::new(MapFamily::ArithmeticEval).expect("evaluator map has no parameters")
}

/// Digits `(d1, d2, d3)` of a family prompt `"d1·d2d3"`, if it is one.
pub fn family_digits(text: &str) -> Option<(u8, u8, u8)> {
    let (l, r) = text.split_once(TIMES)?;
    let (l, r) = (l.as_bytes(), r.as_bytes());
    if l.len() != 1 || r.len() != 2 || !l[0].is_ascii_digit() || !r.iter().all(u8::is_ascii_digit) {
        return None;
    }
    let (d1, d2, d3) = (l[0] - b'0', r[0] - b'0', r[1] - b'0');
    (d2 != 0).then_some((d1, d2, d3))
}

/// Family prompt for the digits.
pub fn family_prompt(d1: u8, d2: u8, d3: u8) -> String {
    format!("{d1}{TIMES}{d2}{d3}")
}

/// Output of every step on off-family input.
pub const FALLBACK: &str = "0";

/// The four steps of the multiplication chain rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArithStep {
    /// `"d1·d2"`.
    FirstPartial,
    /// `"10·a1"`.
    ScaleByTen,
    /// `"d1·d3"`.
    SecondPartial,
    /// `"a2+a3"`.
    AddPartials,
}

impl ArithStep {
    pub const ALL: [ArithStep; 4] = [
        ArithStep::FirstPartial,
        ArithStep::ScaleByTen,
        ArithStep::SecondPartial,
        ArithStep::AddPartials,
    ];

    pub fn index(self) -> usize {
        match self {
            ArithStep::FirstPartial => 1,
            ArithStep::ScaleByTen => 2,
            ArithStep::SecondPartial => 3,
            ArithStep::AddPartials => 4,
        }
    }

    pub fn from_index(k: usize) -> Result<Self> {
        Self::ALL
            .get(k.wrapping_sub(1))
            .copied()
            .ok_or_else(|| LabError::param(format!("no arithmetic step D{k}")))
    }

    /// Evaluates on the history `(x, q1, a1, …)`; anything outside the
    /// family or with malformed earlier answers yields `"0"`.
    pub fn eval(self, history: &[Point]) -> Result<Point> {
        let text = self.render(history).unwrap_or_else(|| FALLBACK.to_string());
        Point::expr(&text)
    }

    fn render(self, history: &[Point]) -> Option<String> {
        let (d1, d2, d3) = family_digits(history.first()?.as_expr()?)?;
        let answer = |i: usize| -> Option<&str> {
            let a = history.get(2 * i)?.as_expr()?;
            a.bytes().all(|b| b.is_ascii_digit()).then_some(a)
        };
        Some(match self {
            ArithStep::FirstPartial => format!("{d1}{TIMES}{d2}"),
            ArithStep::ScaleByTen => format!("10{TIMES}{}", answer(1)?),
            ArithStep::SecondPartial => format!("{d1}{TIMES}{d3}"),
            ArithStep::AddPartials => format!("{}+{}", answer(2)?, answer(3)?),
        })
    }
}

/// The chain rule D_4 on the expression space.
pub fn build_multiplication_chain_rule() -> ChainRule {
    ChainRule::new(Space::Expr, ArithStep::ALL.iter().map(|s| StepFamily::Arithmetic(*s)).collect())
        .expect("arithmetic steps are well formed")
}

/// Outcome of the family-wide recoverability sweep.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct FamilyReport {
    pub checked: usize,
    pub recoverable: usize,
    /// Prompts that failed, with a reason.
    pub failures: Vec<(String, String)>,
}

impl FamilyReport {
    pub fn all_recoverable(&self) -> bool {
        self.failures.is_empty() && self.recoverable == self.checked
    }
}

/// Checks one prompt: recoverable with exact string equality and final
/// answer equal to the decimal product. Returns the final answer.
pub fn check_family_member(rule: &ChainRule, g: &AnswerMap, prompt: &str) -> Result<String> {
    let (d1, d2, d3) = family_digits(prompt)
        .ok_or_else(|| LabError::domain(format!("`{prompt}` is not a family member")))?;
    let x = Point::expr(prompt)?;
    let traj = chain::run_trajectory(rule, g, &x)?;
    let fin = traj.final_answer().as_expr().unwrap_or_default().to_string();
    let expected = (u32::from(d1) * (10 * u32::from(d2) + u32::from(d3))).to_string();
    if !chain::is_recoverable(rule, g, &x, 0.0)? {
        return Err(LabError::domain(format!("`{prompt}` is not recoverable: final answer {fin}")));
    }
    if fin != expected {
        return Err(LabError::domain(format!("`{prompt}` ends at {fin}, expected {expected}")));
    }
    Ok(fin)
}

/// Runs all 900 prompts `d1·(10d2+d3)`, `d1 ∈ 0..=9`, `d2 ∈ 1..=9`, `d3 ∈ 0..=9`.
pub fn family_recoverability_report() -> FamilyReport {
    let rule = build_multiplication_chain_rule();
    let g = ground_truth_map();
    let mut report = FamilyReport { checked: 0, recoverable: 0, failures: Vec::new() };
    for d1 in 0..=9 {
        for d2 in 1..=9 {
            for d3 in 0..=9 {
                let prompt = family_prompt(d1, d2, d3);
                report.checked += 1;
                match check_family_member(&rule, &g, &prompt) {
                    Ok(_) => report.recoverable += 1,
                    Err(e) => report.failures.push((prompt, format!("{e}"))),
                }
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn texts(ps: &[Point]) -> Vec<&str> {
        ps.iter().map(|p| p.as_expr().unwrap()).collect()
    }

    #[test]
    fn evaluator_values() {
        assert_eq!(ground_truth_eval("140+42").unwrap(), "182");
        assert_eq!(ground_truth_eval("10·14").unwrap(), "140");
        assert_eq!(ground_truth_eval("7").unwrap(), "7");
        assert_eq!(ground_truth_eval("007").unwrap(), "007");
        assert_eq!(ground_truth_eval("0·10").unwrap(), "0");
        assert_eq!(ground_truth_eval("05+05").unwrap(), "10");
    }

    #[test]
    fn evaluator_rejects_malformed_text() {
        for bad in ["", "+1", "1+", "2*3", "1+2+3", "x"] {
            assert!(matches!(ground_truth_eval(bad), Err(LabError::Parse(_))), "{bad}");
        }
    }

    #[test]
    fn evaluator_is_exact_for_large_operands() {
        assert_eq!(
            ground_truth_eval("99999999999999999999·99999999999999999999").unwrap(),
            "9999999999999999999800000000000000000001"
        );
    }

    #[test]
    fn worked_example_trajectory() {
        let rule = build_multiplication_chain_rule();
        let t = chain::run_trajectory(&rule, &ground_truth_map(), &Point::expr("7·26").unwrap())
            .unwrap();
        assert_eq!(texts(t.questions()), vec!["7·2", "10·14", "7·6", "140+42"]);
        assert_eq!(texts(t.answers()), vec!["14", "140", "42", "182"]);
    }

    #[test]
    fn another_family_member() {
        let rule = build_multiplication_chain_rule();
        let t = chain::run_trajectory(&rule, &ground_truth_map(), &Point::expr("4·23").unwrap())
            .unwrap();
        assert_eq!(texts(t.answers()), vec!["8", "80", "12", "92"]);
    }

    #[test]
    fn zero_prompt_ends_at_zero() {
        let rule = build_multiplication_chain_rule();
        let t = chain::run_trajectory(&rule, &ground_truth_map(), &Point::expr("0·10").unwrap())
            .unwrap();
        assert_eq!(t.final_answer().as_expr(), Some("0"));
    }

    #[test]
    fn off_family_prompts_fall_back_to_zero() {
        let rule = build_multiplication_chain_rule();
        let g = ground_truth_map();
        for prompt in ["123+4", "7·06", "12·34", "5"] {
            let t = chain::run_trajectory(&rule, &g, &Point::expr(prompt).unwrap()).unwrap();
            assert!(t.questions().iter().all(|q| q.as_expr() == Some(FALLBACK)), "{prompt}");
        }
        assert!(family_digits("123+4").is_none());
    }

    #[test]
    fn family_membership() {
        assert_eq!(family_digits("7·26"), Some((7, 2, 6)));
        assert_eq!(family_digits("0·10"), Some((0, 1, 0)));
        assert_eq!(family_digits("7·06"), None);
        assert_eq!(family_digits("7·260"), None);
    }

    #[test]
    fn whole_family_is_recoverable() {
        let rep = family_recoverability_report();
        assert_eq!(rep.checked, 900);
        assert_eq!(rep.recoverable, 900);
        assert!(rep.all_recoverable());
    }

    #[test]
    fn step_indices_round_trip() {
        for s in ArithStep::ALL {
            assert_eq!(ArithStep::from_index(s.index()).unwrap(), s);
        }
        assert!(ArithStep::from_index(0).is_err());
        assert!(ArithStep::from_index(5).is_err());
    }
}
