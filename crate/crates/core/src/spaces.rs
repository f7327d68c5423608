//! Representation spaces, ground metrics, quasimetric losses and sampled
//! stability (Lipschitz) certification.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::error::{LabError, Result};
use crate::num::abs;
use crate::AXIOM_TOL;

/// Multiplication sign used by the arithmetic expression grammar.
pub const TIMES: char = '·';

#[derive(Clone, Debug, PartialEq)]
enum Repr {
    Real(f64),
    Expr(String),
    Atom(String),
}

/// An element of a representation space.
///
/// Reals are always finite; expressions always match the arithmetic grammar
/// (a digit string, or two digit strings joined by `+` or `·`).
#[derive(Clone, Debug, PartialEq)]
pub struct Point(Repr);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointKind {
    Real,
    Expr,
    Atom,
}

impl PointKind {
    pub fn name(self) -> &'static str {
        match self {
            PointKind::Real => "real",
            PointKind::Expr => "expr",
            PointKind::Atom => "atom",
        }
    }
}

impl Point {
    pub fn real(value: f64) -> Result<Self> {
        if value.is_finite() {
            Ok(Point(Repr::Real(value)))
        } else {
            Err(LabError::domain(format!("non-finite real point {value}")))
        }
    }

    pub fn expr(text: &str) -> Result<Self> {
        if is_expr_text(text) {
            Ok(Point(Repr::Expr(text.to_string())))
        } else {
            Err(LabError::domain(format!("`{text}` is not a number, sum or product expression")))
        }
    }

    pub fn atom(label: &str) -> Result<Self> {
        let ok = !label.is_empty()
            && label
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-' || c == '.');
        if ok {
            Ok(Point(Repr::Atom(label.to_string())))
        } else {
            Err(LabError::domain(format!("`{label}` is not an atom identifier")))
        }
    }

    pub fn kind(&self) -> PointKind {
        match &self.0 {
            Repr::Real(_) => PointKind::Real,
            Repr::Expr(_) => PointKind::Expr,
            Repr::Atom(_) => PointKind::Atom,
        }
    }

    pub fn as_real(&self) -> Option<f64> {
        match self.0 {
            Repr::Real(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_expr(&self) -> Option<&str> {
        match &self.0 {
            Repr::Expr(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_atom(&self) -> Option<&str> {
        match &self.0 {
            Repr::Atom(s) => Some(s),
            _ => None,
        }
    }

    pub(crate) fn expect_real(&self) -> Result<f64> {
        self.as_real()
            .ok_or_else(|| LabError::domain(format!("expected a real point, got {self}")))
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            Repr::Real(v) => write!(f, "{v}"),
            Repr::Expr(s) => write!(f, "\"{s}\""),
            Repr::Atom(s) => write!(f, ":{s}"),
        }
    }
}

fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Grammar of the expression space: `digits`, `digits+digits` or `digits·digits`.
pub fn is_expr_text(text: &str) -> bool {
    if is_digits(text) {
        return true;
    }
    let split = text
        .split_once('+')
        .or_else(|| text.split_once(TIMES));
    match split {
        Some((lhs, rhs)) => is_digits(lhs) && is_digits(rhs),
        None => false,
    }
}

/// Closed real interval; either end may be infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    lo: f64,
    hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            return Err(LabError::param(format!("invalid interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn unbounded() -> Self {
        Interval { lo: f64::NEG_INFINITY, hi: f64::INFINITY }
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.lo && v <= self.hi
    }
}

/// A representation space together with its canonical ground metric.
#[derive(Clone, Debug, PartialEq)]
pub enum Space {
    /// A real interval with the absolute-value metric.
    Real(Interval),
    /// Arithmetic expression strings with the discrete metric.
    Expr,
    /// Labeled atoms with the discrete metric.
    Atom,
}

impl Space {
    pub fn real_line() -> Self {
        Space::Real(Interval::unbounded())
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Ok(Space::Real(Interval::new(lo, hi)?))
    }

    pub fn id(&self) -> &'static str {
        match self {
            Space::Real(_) => "real",
            Space::Expr => "expr",
            Space::Atom => "atom",
        }
    }

    pub fn point_kind(&self) -> PointKind {
        match self {
            Space::Real(_) => PointKind::Real,
            Space::Expr => PointKind::Expr,
            Space::Atom => PointKind::Atom,
        }
    }

    pub fn contains(&self, p: &Point) -> bool {
        match (self, p.as_real()) {
            (Space::Real(iv), Some(v)) => iv.contains(v),
            (Space::Real(_), None) => false,
            _ => p.kind() == self.point_kind(),
        }
    }

    pub fn check(&self, p: &Point) -> Result<()> {
        if self.contains(p) {
            Ok(())
        } else {
            Err(LabError::domain(format!("{p} is not in the {} space", self.id())))
        }
    }

    pub fn metric(&self) -> Metric {
        match self {
            Space::Real(_) => Metric::Absolute,
            Space::Expr | Space::Atom => Metric::Discrete,
        }
    }

    /// Tolerance under which two points of this space are treated as equal.
    pub fn equality_tolerance(&self) -> f64 {
        match self {
            Space::Real(_) => AXIOM_TOL,
            Space::Expr | Space::Atom => 0.0,
        }
    }

    /// Distance under the space's metric.
    pub fn distance(&self, x: &Point, y: &Point) -> Result<f64> {
        self.metric().eval(x, y)
    }

    /// Whether two points coincide up to the space's equality tolerance.
    pub fn same_point(&self, x: &Point, y: &Point) -> bool {
        points_close(x, y, self.equality_tolerance())
    }
}

/// `|x - y| <= tol` for reals, exact equality otherwise.
pub fn points_close(x: &Point, y: &Point, tol: f64) -> bool {
    match (x.as_real(), y.as_real()) {
        (Some(a), Some(b)) => abs(a - b) <= tol,
        _ => x == y,
    }
}

/// Ground metric ρ.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    /// `|u - v|` on reals.
    Absolute,
    /// 0 if equal, 1 otherwise; defined on every point kind.
    Discrete,
}

impl Metric {
    pub fn id(&self) -> &'static str {
        match self {
            Metric::Absolute => "abs",
            Metric::Discrete => "discrete",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        match id {
            "abs" => Ok(Metric::Absolute),
            "discrete" => Ok(Metric::Discrete),
            other => Err(LabError::Parse(format!("unknown metric `{other}`"))),
        }
    }

    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        match self {
            Metric::Absolute => Ok(abs(x.expect_real()? - y.expect_real()?)),
            Metric::Discrete => {
                if x.kind() != y.kind() {
                    return Err(LabError::domain(format!("cannot compare {x} with {y}")));
                }
                Ok(if x == y { 0.0 } else { 1.0 })
            }
        }
    }
}

/// Loss ℓ with zero diagonal and the triangle inequality.
#[derive(Clone, Debug, PartialEq)]
pub enum QuasimetricLoss {
    /// `scale · ρ(u, v)`.
    Scaled { metric: Metric, scale: f64 },
    /// `min{scale · ρ(u, v), cap}`.
    Capped { metric: Metric, scale: f64, cap: f64 },
    /// `cap · 1[u ≠ v]`; not Lipschitz in the absolute metric.
    Indicator { cap: f64 },
}

impl QuasimetricLoss {
    pub fn scaled(metric: Metric, scale: f64) -> Result<Self> {
        if !(scale >= 0.0) || !scale.is_finite() {
            return Err(LabError::param(format!("loss scale must be finite and >= 0, got {scale}")));
        }
        Ok(QuasimetricLoss::Scaled { metric, scale })
    }

    pub fn indicator(cap: f64) -> Result<Self> {
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(LabError::param(format!("indicator loss needs a positive cap, got {cap}")));
        }
        Ok(QuasimetricLoss::Indicator { cap })
    }

    pub fn id(&self) -> &'static str {
        match self {
            QuasimetricLoss::Scaled { .. } => "scaled_metric",
            QuasimetricLoss::Capped { .. } => "capped_metric",
            QuasimetricLoss::Indicator { .. } => "indicator",
        }
    }

    /// Uniform bound M, when the loss has one.
    pub fn cap(&self) -> Option<f64> {
        match self {
            QuasimetricLoss::Scaled { .. } => None,
            QuasimetricLoss::Capped { cap, .. } | QuasimetricLoss::Indicator { cap } => Some(*cap),
        }
    }

    pub fn eval(&self, x: &Point, y: &Point) -> Result<f64> {
        match self {
            QuasimetricLoss::Scaled { metric, scale } => Ok(scale * metric.eval(x, y)?),
            QuasimetricLoss::Capped { metric, scale, cap } => {
                Ok((scale * metric.eval(x, y)?).min(*cap))
            }
            QuasimetricLoss::Indicator { cap } => {
                if x.kind() != y.kind() {
                    return Err(LabError::domain(format!("cannot compare {x} with {y}")));
                }
                Ok(if x == y { 0.0 } else { *cap })
            }
        }
    }

    /// Analytic stability certificate: `scale·ρ` and its capped version are
    /// `2·scale`-stable with coordinate constants `(scale, scale)`.
    pub fn certificate(&self) -> Option<StabilityCertificate> {
        match self {
            QuasimetricLoss::Scaled { scale, .. } | QuasimetricLoss::Capped { scale, .. } => {
                Some(StabilityCertificate {
                    role: CertRole::Loss,
                    total: 2.0 * scale,
                    coords: alloc::vec![*scale, *scale],
                    proven: true,
                })
            }
            QuasimetricLoss::Indicator { .. } => None,
        }
    }

    pub fn check_axioms(&self, sample: &[Point]) -> Result<AxiomReport> {
        check_quasimetric(|x, y| self.eval(x, y), sample)
    }
}

/// `ℓ(x, y) = min{scale · ρ(x, y), cap}`.
pub fn loss_from_metric_capped(metric: Metric, scale: f64, cap: f64) -> Result<QuasimetricLoss> {
    if !(cap > 0.0) || !cap.is_finite() {
        return Err(LabError::param(format!("cap must be positive and finite, got {cap}")));
    }
    if !(scale >= 0.0) || !scale.is_finite() {
        return Err(LabError::param(format!("scale must be finite and >= 0, got {scale}")));
    }
    Ok(QuasimetricLoss::Capped { metric, scale, cap })
}

/// Outcome of [`check_quasimetric`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct AxiomReport {
    pub max_diagonal_violation: f64,
    pub max_triangle_violation: f64,
    /// `(x, y, z)` sample indices of the worst `ℓ(x,y) - ℓ(x,z) - ℓ(z,y)`.
    pub worst_triple: Option<(usize, usize, usize)>,
    pub pass: bool,
}

/// Exhaustive check of `ℓ(x,x) = 0` and `ℓ(x,y) ≤ ℓ(x,z) + ℓ(z,y)` over
/// all ordered triples of the sample.
pub fn check_quasimetric<F>(loss: F, sample: &[Point]) -> Result<AxiomReport>
where
    F: Fn(&Point, &Point) -> Result<f64>,
{
    if sample.is_empty() {
        return Err(LabError::param("quasimetric check needs a nonempty sample"));
    }
    let n = sample.len();
    let mut table = Vec::with_capacity(n * n);
    for x in sample {
        for y in sample {
            table.push(loss(x, y)?);
        }
    }
    let at = |i: usize, j: usize| table[i * n + j];

    let mut diag = 0.0f64;
    for i in 0..n {
        diag = diag.max(abs(at(i, i)));
    }
    let mut worst = f64::NEG_INFINITY;
    let mut worst_triple = None;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let v = at(i, j) - at(i, k) - at(k, j);
                if v > worst {
                    worst = v;
                    worst_triple = Some((i, j, k));
                }
            }
        }
    }
    let tri = worst.max(0.0);
    Ok(AxiomReport {
        max_diagonal_violation: diag,
        max_triangle_violation: tri,
        worst_triple: if tri > 0.0 { worst_triple } else { None },
        pass: diag <= AXIOM_TOL && tri <= AXIOM_TOL,
    })
}

/// What a stability certificate is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CertRole {
    Loss,
    /// The hypothesis answer map f.
    Hypothesis,
    /// The ground-truth answer map g.
    GroundTruth,
    /// The k-th chain-rule step (1-based).
    Step(usize),
}

impl fmt::Display for CertRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertRole::Loss => f.write_str("loss"),
            CertRole::Hypothesis => f.write_str("hypothesis"),
            CertRole::GroundTruth => f.write_str("ground_truth"),
            CertRole::Step(k) => write!(f, "step:{k}"),
        }
    }
}

impl CertRole {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(CertRole::Loss),
            "hypothesis" => Ok(CertRole::Hypothesis),
            "ground_truth" => Ok(CertRole::GroundTruth),
            other => other
                .strip_prefix("step:")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|k| *k >= 1)
                .map(CertRole::Step)
                .ok_or_else(|| LabError::Parse(format!("unknown certificate role `{other}`"))),
        }
    }
}

/// γ-stability with coordinate-wise Lipschitz constants γ_1..γ_n, Σγ_i ≤ γ.
#[derive(Clone, Debug, PartialEq)]
pub struct StabilityCertificate {
    pub role: CertRole,
    pub total: f64,
    pub coords: Vec<f64>,
    /// Established analytically for the construction that carries it.
    pub proven: bool,
}

impl StabilityCertificate {
    pub fn new(role: CertRole, total: f64, coords: Vec<f64>, proven: bool) -> Result<Self> {
        if coords.is_empty() {
            return Err(LabError::param("certificate arity must be positive"));
        }
        if coords.iter().chain(core::iter::once(&total)).any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(LabError::param("certificate constants must be finite and >= 0"));
        }
        let sum: f64 = coords.iter().sum();
        if sum > total + AXIOM_TOL {
            return Err(LabError::param(format!(
                "coordinate constants sum to {sum}, above the total {total}"
            )));
        }
        Ok(StabilityCertificate { role, total, coords, proven })
    }

    pub fn arity(&self) -> usize {
        self.coords.len()
    }
}

/// Outcome of [`check_stability`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct StabilityVerdict {
    pub pass: bool,
    /// Smallest `bound - output_gap` over the sample (negative on violation).
    pub worst_margin: f64,
    pub worst_pair: Option<usize>,
    pub pairs_checked: usize,
}

/// Sampled necessary-condition check of
/// `ρ_out(h(x), h(x')) ≤ Σ_i γ_i ρ_in(x_i, x'_i)` on every given pair.
pub fn check_stability<F>(
    map: F,
    cert: &StabilityCertificate,
    pairs: &[(Vec<Point>, Vec<Point>)],
    out_metric: Metric,
    in_metric: Metric,
) -> Result<StabilityVerdict>
where
    F: Fn(&[Point]) -> Result<Point>,
{
    let n = cert.arity();
    let mut worst = f64::INFINITY;
    let mut worst_pair = None;
    for (idx, (a, b)) in pairs.iter().enumerate() {
        if a.len() != n || b.len() != n {
            return Err(LabError::param(format!(
                "pair {idx} has arity ({}, {}), certificate arity is {n}",
                a.len(),
                b.len()
            )));
        }
        let gap = out_metric.eval(&map(a)?, &map(b)?)?;
        let mut bound = 0.0;
        for ((x, y), c) in a.iter().zip(b).zip(&cert.coords) {
            bound += c * in_metric.eval(x, y)?;
        }
        let margin = bound - gap;
        if margin < worst {
            worst = margin;
            worst_pair = Some(idx);
        }
    }
    Ok(StabilityVerdict {
        pass: worst >= -AXIOM_TOL,
        worst_margin: if pairs.is_empty() { 0.0 } else { worst },
        worst_pair,
        pairs_checked: pairs.len(),
    })
}
