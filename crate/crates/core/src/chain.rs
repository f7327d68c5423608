//! Chain rules, answer maps and chain-of-thought trajectories.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::arithmetic::{self, ArithStep};
use crate::error::{LabError, Result};
use crate::num::abs;
use crate::spaces::{CertRole, Point, Space, StabilityCertificate};
use crate::AXIOM_TOL;

/// Parametric families available to answer maps.
#[derive(Clone, Debug, PartialEq)]
pub enum MapFamily {
    /// `z ↦ slope·z + offset` on reals.
    Affine { slope: f64, offset: f64 },
    /// `z ↦ |z|` on reals.
    Abs,
    /// Linear interpolation through knots sorted by abscissa, constant
    /// beyond the first and last knot.
    PiecewiseLinear { knots: Vec<(f64, f64)> },
    /// Every point maps to the same value.
    Constant(Point),
    /// Exact evaluator of sums and products on the expression space.
    ArithmeticEval,
}

impl MapFamily {
    pub fn id(&self) -> &'static str {
        match self {
            MapFamily::Affine { .. } => "affine",
            MapFamily::Abs => "abs",
            MapFamily::PiecewiseLinear { .. } => "piecewise_linear",
            MapFamily::Constant(_) => "constant",
            MapFamily::ArithmeticEval => "arithmetic_eval",
        }
    }

    fn eval(&self, p: &Point) -> Result<Point> {
        match self {
            MapFamily::Affine { slope, offset } => Point::real(slope * p.expect_real()? + offset),
            MapFamily::Abs => Point::real(abs(p.expect_real()?)),
            MapFamily::PiecewiseLinear { knots } => Point::real(interpolate(knots, p.expect_real()?)),
            MapFamily::Constant(c) => Ok(c.clone()),
            MapFamily::ArithmeticEval => arithmetic::ground_truth_point(p),
        }
    }
}

fn interpolate(knots: &[(f64, f64)], z: f64) -> f64 {
    let first = knots[0];
    let last = knots[knots.len() - 1];
    if z <= first.0 {
        return first.1;
    }
    if z >= last.0 {
        return last.1;
    }
    for w in knots.windows(2) {
        let (x0, y0) = w[0];
        let (x1, y1) = w[1];
        if z == x1 {
            return y1;
        }
        if z > x0 && z < x1 {
            return y0 + (y1 - y0) * (z - x0) / (x1 - x0);
        }
    }
    last.1
}

/// Whether a point hits an exception key. Real keys match within a relative
/// `1e-12`, which is exact for the key `0`; other kinds match exactly.
fn key_matches(key: &Point, p: &Point) -> bool {
    match (key.as_real(), p.as_real()) {
        (Some(k), Some(z)) => abs(z - k) <= AXIOM_TOL * abs(k),
        _ => key == p,
    }
}

/// An answer map: a base family overridden on a finite exception table.
#[derive(Clone, Debug, PartialEq)]
pub struct AnswerMap {
    base: MapFamily,
    exceptions: Vec<(Point, Point)>,
}

impl AnswerMap {
    pub fn new(base: MapFamily) -> Result<Self> {
        Self::with_exceptions(base, Vec::new())
    }

    pub fn with_exceptions(base: MapFamily, exceptions: Vec<(Point, Point)>) -> Result<Self> {
        match &base {
            MapFamily::Affine { slope, offset } if !(slope.is_finite() && offset.is_finite()) => {
                return Err(LabError::param("affine map parameters must be finite"));
            }
            MapFamily::PiecewiseLinear { knots } => {
                if knots.is_empty() {
                    return Err(LabError::param("piecewise-linear map needs at least one knot"));
                }
                if knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                    return Err(LabError::param("piecewise-linear knots must be finite"));
                }
                if knots.windows(2).any(|w| w[0].0 >= w[1].0) {
                    return Err(LabError::param("piecewise-linear knots must strictly increase"));
                }
            }
            _ => {}
        }
        for (i, (k, _)) in exceptions.iter().enumerate() {
            if exceptions[..i].iter().any(|(other, _)| key_matches(other, k) || key_matches(k, other)) {
                return Err(LabError::param(format!("duplicate exception key {k}")));
            }
        }
        Ok(AnswerMap { base, exceptions })
    }

    pub fn affine(slope: f64, offset: f64) -> Result<Self> {
        Self::new(MapFamily::Affine { slope, offset })
    }

    pub fn identity() -> Self {
        AnswerMap { base: MapFamily::Affine { slope: 1.0, offset: 0.0 }, exceptions: Vec::new() }
    }

    pub fn zero() -> Self {
        AnswerMap { base: MapFamily::Affine { slope: 0.0, offset: 0.0 }, exceptions: Vec::new() }
    }

    pub fn base(&self) -> &MapFamily {
        &self.base
    }

    pub fn exceptions(&self) -> &[(Point, Point)] {
        &self.exceptions
    }

    pub fn id(&self) -> &'static str {
        self.base.id()
    }

    pub fn eval(&self, p: &Point) -> Result<Point> {
        for (key, value) in &self.exceptions {
            if key_matches(key, p) {
                return Ok(value.clone());
            }
        }
        self.base.eval(p)
    }
}

/// A coordinate of the history `(x, q_1, a_1, …, q_{k-1}, a_{k-1})`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Coord {
    Prompt,
    Question(usize),
    Answer(usize),
}

impl Coord {
    /// Position in the history tuple.
    pub fn index(self) -> usize {
        match self {
            Coord::Prompt => 0,
            Coord::Question(i) => 2 * i - 1,
            Coord::Answer(i) => 2 * i,
        }
    }

    pub fn from_index(i: usize) -> Coord {
        match i {
            0 => Coord::Prompt,
            i if i % 2 == 1 => Coord::Question(i.div_ceil(2)),
            i => Coord::Answer(i / 2),
        }
    }

    pub fn parse(s: &str) -> Result<Coord> {
        let bad = || LabError::Parse(format!("unknown coordinate `{s}`"));
        if s == "x" {
            return Ok(Coord::Prompt);
        }
        let (tag, rest) = s.split_at(s.char_indices().nth(1).map_or(s.len(), |(i, _)| i));
        let i: usize = rest.parse().map_err(|_| bad())?;
        if i == 0 {
            return Err(bad());
        }
        match tag {
            "q" => Ok(Coord::Question(i)),
            "a" => Ok(Coord::Answer(i)),
            _ => Err(bad()),
        }
    }

    fn valid_for_step(self, k: usize) -> bool {
        match self {
            Coord::Prompt => true,
            Coord::Question(i) | Coord::Answer(i) => i >= 1 && i < k,
        }
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coord::Prompt => f.write_str("x"),
            Coord::Question(i) => write!(f, "q{i}"),
            Coord::Answer(i) => write!(f, "a{i}"),
        }
    }
}

/// Registered families of chain-rule steps.
#[derive(Clone, Debug, PartialEq)]
pub enum StepFamily {
    Constant(Point),
    /// `slope·h[coord] + offset`.
    Affine { coord: Coord, slope: f64, offset: f64 },
    /// `on_equal` if answer `a_answer` equals `equals` exactly, else `otherwise`.
    BranchOnAnswer { answer: usize, equals: Point, on_equal: Point, otherwise: Point },
    Arithmetic(ArithStep),
}

impl StepFamily {
    pub fn id(&self) -> &'static str {
        match self {
            StepFamily::Constant(_) => "constant",
            StepFamily::Affine { .. } => "affine",
            StepFamily::BranchOnAnswer { .. } => "branch_on_answer",
            StepFamily::Arithmetic(_) => "arithmetic",
        }
    }
}

/// The k-th step of a chain rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainRuleStep {
    index: usize,
    family: StepFamily,
}

impl ChainRuleStep {
    pub fn new(index: usize, family: StepFamily) -> Result<Self> {
        if index == 0 {
            return Err(LabError::param("step indices start at 1"));
        }
        let bad_coord = |c: Coord| {
            LabError::param(format!("step {index} cannot read coordinate {c}"))
        };
        match &family {
            StepFamily::Affine { coord, slope, offset } => {
                if !coord.valid_for_step(index) {
                    return Err(bad_coord(*coord));
                }
                if !slope.is_finite() || !offset.is_finite() {
                    return Err(LabError::param("affine step parameters must be finite"));
                }
            }
            StepFamily::BranchOnAnswer { answer, .. } => {
                if !Coord::Answer(*answer).valid_for_step(index) {
                    return Err(bad_coord(Coord::Answer(*answer)));
                }
            }
            StepFamily::Arithmetic(step) => {
                if step.index() != index {
                    return Err(LabError::param(format!(
                        "arithmetic step D{} placed at position {index}",
                        step.index()
                    )));
                }
            }
            StepFamily::Constant(_) => {}
        }
        Ok(ChainRuleStep { index, family })
    }

    pub fn index(&self) -> usize {
        self.index
    }

    pub fn family(&self) -> &StepFamily {
        &self.family
    }

    /// Number of history coordinates, `2k - 1`.
    pub fn arity(&self) -> usize {
        2 * self.index - 1
    }

    pub fn eval(&self, history: &[Point]) -> Result<Point> {
        if history.len() != self.arity() {
            return Err(LabError::param(format!(
                "step {} expects {} inputs, got {}",
                self.index,
                self.arity(),
                history.len()
            )));
        }
        match &self.family {
            StepFamily::Constant(c) => Ok(c.clone()),
            StepFamily::Affine { coord, slope, offset } => {
                Point::real(slope * history[coord.index()].expect_real()? + offset)
            }
            StepFamily::BranchOnAnswer { answer, equals, on_equal, otherwise } => {
                let a = &history[Coord::Answer(*answer).index()];
                Ok(if a == equals { on_equal.clone() } else { otherwise.clone() })
            }
            StepFamily::Arithmetic(step) => step.eval(history),
        }
    }

    /// Analytic certificate, when the family has one: a constant step is
    /// 0-stable and an affine step is `|slope|`-stable in its coordinate.
    pub fn certificate(&self) -> Option<StabilityCertificate> {
        let mut coords = vec![0.0; self.arity()];
        let total = match &self.family {
            StepFamily::Constant(_) => 0.0,
            StepFamily::Affine { coord, slope, .. } => {
                coords[coord.index()] = abs(*slope);
                abs(*slope)
            }
            _ => return None,
        };
        Some(StabilityCertificate {
            role: CertRole::Step(self.index),
            total,
            coords,
            proven: true,
        })
    }
}

/// A K-step chain rule over a representation space.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainRule {
    space: Space,
    steps: Vec<ChainRuleStep>,
}

impl ChainRule {
    pub fn new(space: Space, families: Vec<StepFamily>) -> Result<Self> {
        if families.is_empty() {
            return Err(LabError::param("a chain rule needs at least one step"));
        }
        let steps = families
            .into_iter()
            .enumerate()
            .map(|(i, fam)| ChainRuleStep::new(i + 1, fam))
            .collect::<Result<Vec<_>>>()?;
        Ok(ChainRule { space, steps })
    }

    pub fn k(&self) -> usize {
        self.steps.len()
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn steps(&self) -> &[ChainRuleStep] {
        &self.steps
    }

    /// The rule made of the first `k` steps.
    pub fn truncated(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.k() {
            return Err(LabError::param(format!("cannot truncate a {}-step rule to {k}", self.k())));
        }
        Ok(ChainRule { space: self.space.clone(), steps: self.steps[..k].to_vec() })
    }
}

/// The record `(x, Q^(1), A^(1), …, Q^(K), A^(K))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    prompt: Point,
    questions: Vec<Point>,
    answers: Vec<Point>,
}

impl Trajectory {
    /// Assembles a trajectory, checking `A^(k) = f(Q^(k))` for every k.
    pub fn from_parts(
        f: &AnswerMap,
        prompt: Point,
        questions: Vec<Point>,
        answers: Vec<Point>,
    ) -> Result<Self> {
        if questions.len() != answers.len() || questions.is_empty() {
            return Err(LabError::param("questions and answers must have equal positive length"));
        }
        for (k, (q, a)) in questions.iter().zip(&answers).enumerate() {
            if f.eval(q)? != *a {
                return Err(LabError::Trajectory {
                    step: k + 1,
                    reason: format!("answer {a} is not f({q})"),
                });
            }
        }
        Ok(Trajectory { prompt, questions, answers })
    }

    pub fn prompt(&self) -> &Point {
        &self.prompt
    }

    pub fn questions(&self) -> &[Point] {
        &self.questions
    }

    pub fn answers(&self) -> &[Point] {
        &self.answers
    }

    pub fn final_question(&self) -> &Point {
        &self.questions[self.questions.len() - 1]
    }

    pub fn final_answer(&self) -> &Point {
        &self.answers[self.answers.len() - 1]
    }
}

/// Simulates the chain rule against an answer map from prompt `x`.
pub fn run_trajectory(rule: &ChainRule, f: &AnswerMap, x: &Point) -> Result<Trajectory> {
    rule.space.check(x)?;
    let mut history = Vec::with_capacity(2 * rule.k() + 1);
    history.push(x.clone());
    let mut questions = Vec::with_capacity(rule.k());
    let mut answers = Vec::with_capacity(rule.k());
    for step in &rule.steps {
        let k = step.index();
        let leave = |what: &str, p: &Point| LabError::Trajectory {
            step: k,
            reason: format!("{what} {p} left the {} space", rule.space.id()),
        };
        let q = step.eval(&history).map_err(|e| LabError::Trajectory {
            step: k,
            reason: format!("{e}"),
        })?;
        if !rule.space.contains(&q) {
            return Err(leave("question", &q));
        }
        let a = f.eval(&q).map_err(|e| LabError::Trajectory { step: k, reason: format!("{e}") })?;
        if !rule.space.contains(&a) {
            return Err(leave("answer", &a));
        }
        history.push(q.clone());
        history.push(a.clone());
        questions.push(q);
        answers.push(a);
    }
    Ok(Trajectory { prompt: x.clone(), questions, answers })
}

/// Whether `f(x)` is within `eq_tol` of the final chain-of-thought answer.
pub fn is_recoverable(rule: &ChainRule, f: &AnswerMap, x: &Point, eq_tol: f64) -> Result<bool> {
    if !(eq_tol >= 0.0) {
        return Err(LabError::param("equality tolerance must be >= 0"));
    }
    let traj = run_trajectory(rule, f, x)?;
    let direct = f.eval(x)?;
    Ok(rule.space.distance(&direct, traj.final_answer())? <= eq_tol)
}

/// Per-step question and answer gaps between the f- and g-trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct Divergence {
    /// `Δ_k = ρ(Q^(k)_f, Q^(k)_g)`.
    pub delta: Vec<f64>,
    /// `Γ_k = ρ(A^(k)_f, A^(k)_g)`.
    pub gamma: Vec<f64>,
}

pub fn trajectory_divergence(
    rule: &ChainRule,
    f: &AnswerMap,
    g: &AnswerMap,
    x: &Point,
) -> Result<Divergence> {
    let tf = run_trajectory(rule, f, x)?;
    let tg = run_trajectory(rule, g, x)?;
    let space = rule.space();
    let gaps = |a: &[Point], b: &[Point]| -> Result<Vec<f64>> {
        a.iter().zip(b).map(|(u, v)| space.distance(u, v)).collect()
    };
    Ok(Divergence {
        delta: gaps(tf.questions(), tg.questions())?,
        gamma: gaps(tf.answers(), tg.answers())?,
    })
}

/// Describes a history coordinate for error messages and reports.
pub fn coord_label(index: usize) -> String {
    format!("{}", Coord::from_index(index))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(v: f64) -> Point {
        Point::real(v).unwrap()
    }

    fn affine(coord: Coord, slope: f64, offset: f64) -> StepFamily {
        StepFamily::Affine { coord, slope, offset }
    }

    #[test]
    fn constant_steps_repeat_their_value() {
        let rule = ChainRule::new(
            Space::real_line(),
            vec![StepFamily::Constant(r(4.0)); 3],
        )
        .unwrap();
        let f = AnswerMap::affine(2.0, 1.0).unwrap();
        let t = run_trajectory(&rule, &f, &r(-1.0)).unwrap();
        assert!(t.questions().iter().all(|q| *q == r(4.0)));
        assert!(t.answers().iter().all(|a| *a == r(9.0)));
    }

    #[test]
    fn geometric_answer_chain() {
        // D1 = 1, Dk = L·a_{k-1}, f = Lz gives A^(k) = L^(2k-1).
        let l = 0.1;
        let rule = ChainRule::new(
            Space::interval(0.0, 1.0).unwrap(),
            vec![StepFamily::Constant(r(1.0)), affine(Coord::Answer(1), l, 0.0)],
        )
        .unwrap();
        let f = AnswerMap::affine(l, 0.0).unwrap();
        let t = run_trajectory(&rule, &f, &r(1.0)).unwrap();
        assert!((t.final_answer().as_real().unwrap() - 0.001).abs() <= 1e-15);
    }

    #[test]
    fn identity_chain_is_always_recoverable() {
        let rule = ChainRule::new(
            Space::real_line(),
            vec![affine(Coord::Prompt, 1.0, 0.0), affine(Coord::Prompt, 1.0, 0.0)],
        )
        .unwrap();
        let f = AnswerMap::new(MapFamily::Abs).unwrap();
        for x in [-3.0, 0.0, 2.5] {
            assert!(is_recoverable(&rule, &f, &r(x), 0.0).unwrap());
        }
    }

    #[test]
    fn shifted_copy_chain_is_not_recoverable() {
        let m = 3.0;
        let rule = ChainRule::new(
            Space::real_line(),
            vec![affine(Coord::Prompt, 1.0, m), affine(Coord::Answer(1), 1.0, 0.0)],
        )
        .unwrap();
        let g = AnswerMap::new(MapFamily::Abs).unwrap();
        let t = run_trajectory(&rule, &g, &r(0.5)).unwrap();
        assert_eq!(t.final_answer(), &r(3.5));
        assert!(!is_recoverable(&rule, &g, &r(0.5), 1e-12).unwrap());
    }

    #[test]
    fn leaving_the_space_names_the_step() {
        let rule = ChainRule::new(
            Space::interval(0.0, 1.0).unwrap(),
            vec![StepFamily::Constant(r(0.5)), affine(Coord::Question(1), 4.0, 0.0)],
        )
        .unwrap();
        let err = run_trajectory(&rule, &AnswerMap::identity(), &r(0.0)).unwrap_err();
        assert!(matches!(err, LabError::Trajectory { step: 2, .. }));
    }

    #[test]
    fn steps_cannot_read_the_future() {
        assert!(ChainRuleStep::new(2, affine(Coord::Answer(2), 1.0, 0.0)).is_err());
        assert!(ChainRuleStep::new(1, affine(Coord::Question(1), 1.0, 0.0)).is_err());
        assert!(ChainRuleStep::new(3, affine(Coord::Question(2), 1.0, 0.0)).is_ok());
    }

    #[test]
    fn coordinates_map_to_history_positions() {
        for i in 0..9 {
            assert_eq!(Coord::from_index(i).index(), i);
            assert_eq!(Coord::parse(&coord_label(i)).unwrap(), Coord::from_index(i));
        }
        assert_eq!(Coord::Question(2).index(), 3);
        assert!(Coord::parse("q0").is_err());
        assert!(Coord::parse("z1").is_err());
    }

    #[test]
    fn exceptions_override_the_base_map() {
        let g = AnswerMap::with_exceptions(
            MapFamily::Affine { slope: 1.0, offset: 0.0 },
            vec![(r(10.0), r(9.0)), (r(0.0), r(5.0))],
        )
        .unwrap();
        assert_eq!(g.eval(&r(10.0)).unwrap(), r(9.0));
        assert_eq!(g.eval(&r(0.0)).unwrap(), r(5.0));
        assert_eq!(g.eval(&r(1e-20)).unwrap(), r(1e-20));
        assert_eq!(g.eval(&r(11.0)).unwrap(), r(11.0));
    }

    #[test]
    fn piecewise_linear_hits_knots_and_extends_flat() {
        let f = AnswerMap::new(MapFamily::PiecewiseLinear {
            knots: vec![(0.0, 0.1), (1.0, 0.0), (3.0, 2.0)],
        })
        .unwrap();
        assert_eq!(f.eval(&r(-5.0)).unwrap(), r(0.1));
        assert_eq!(f.eval(&r(1.0)).unwrap(), r(0.0));
        assert_eq!(f.eval(&r(2.0)).unwrap(), r(1.0));
        assert_eq!(f.eval(&r(3.0)).unwrap(), r(2.0));
        assert_eq!(f.eval(&r(40.0)).unwrap(), r(2.0));
    }

    #[test]
    fn trajectory_parts_are_checked() {
        let f = AnswerMap::affine(2.0, 0.0).unwrap();
        assert!(Trajectory::from_parts(&f, r(0.0), vec![r(1.0)], vec![r(2.0)]).is_ok());
        assert!(Trajectory::from_parts(&f, r(0.0), vec![r(1.0)], vec![r(3.0)]).is_err());
    }

    #[test]
    fn divergence_of_identical_maps_is_zero() {
        let rule = ChainRule::new(
            Space::real_line(),
            vec![affine(Coord::Prompt, 0.5, 1.0), affine(Coord::Answer(1), 2.0, 0.0)],
        )
        .unwrap();
        let f = AnswerMap::affine(1.5, -1.0).unwrap();
        let d = trajectory_divergence(&rule, &f, &f, &r(3.0)).unwrap();
        assert!(d.delta.iter().chain(&d.gamma).all(|v| *v == 0.0));
    }

    #[test]
    fn truncation_keeps_the_prefix() {
        let rule = ChainRule::new(
            Space::real_line(),
            vec![
                affine(Coord::Prompt, 1.0, 1.0),
                affine(Coord::Answer(1), 0.5, 0.0),
                affine(Coord::Question(2), 2.0, -1.0),
            ],
        )
        .unwrap();
        let f = AnswerMap::affine(3.0, 0.0).unwrap();
        let full = run_trajectory(&rule, &f, &r(2.0)).unwrap();
        let short = run_trajectory(&rule.truncated(2).unwrap(), &f, &r(2.0)).unwrap();
        assert_eq!(&full.questions()[..2], short.questions());
        assert_eq!(&full.answers()[..2], short.answers());
        assert!(rule.truncated(0).is_err());
    }

    #[test]
    fn step_certificates_follow_the_family() {
        let step = ChainRuleStep::new(3, affine(Coord::Answer(2), -1.5, 7.0)).unwrap();
        let cert = step.certificate().unwrap();
        assert_eq!(cert.total, 1.5);
        assert_eq!(cert.coords, vec![0.0, 0.0, 0.0, 0.0, 1.5]);
        let branch = StepFamily::BranchOnAnswer {
            answer: 1,
            equals: r(0.0),
            on_equal: r(1.0),
            otherwise: r(2.0),
        };
        assert!(ChainRuleStep::new(2, branch).unwrap().certificate().is_none());
    }
}
