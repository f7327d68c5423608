//! JSON scenario files.
//!
//! Points are written as JSON numbers (real), strings (expressions) or
//! `{"atom": label}`. Losses, answer maps and chain-rule steps are tagged by
//! a `family` id with a `params` object; unknown ids and unknown parameter
//! names are rejected.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use cot_lab_core::adaptation::{AdaptationInstance, HypothesisClass};
use cot_lab_core::arithmetic::ArithStep;
use cot_lab_core::chain::{AnswerMap, ChainRule, Coord, MapFamily, StepFamily};
use cot_lab_core::constructions::{Expectations, Scenario, StabilityParams, SupGap};
use cot_lab_core::risk::FiniteDistribution;
use cot_lab_core::spaces::{CertRole, Metric, Point, PointKind, QuasimetricLoss, Space, StabilityCertificate};

use crate::error::{CliError, Result};

/// Current file format version.
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PointDoc {
    Real(f64),
    Expr(String),
    Atom { atom: String },
}

impl PointDoc {
    pub fn from_point(p: &Point) -> Self {
        match p.kind() {
            PointKind::Real => PointDoc::Real(p.as_real().unwrap_or_default()),
            PointKind::Expr => PointDoc::Expr(p.as_expr().unwrap_or_default().to_string()),
            PointKind::Atom => PointDoc::Atom { atom: p.as_atom().unwrap_or_default().to_string() },
        }
    }

    pub fn to_point(&self) -> Result<Point> {
        Ok(match self {
            PointDoc::Real(v) => Point::real(*v)?,
            PointDoc::Expr(s) => Point::expr(s)?,
            PointDoc::Atom { atom } => Point::atom(atom)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceDoc {
    /// `real`, `expr` or `atom`.
    pub kind: String,
    /// Bounds of a real interval; `null` means unbounded on that side.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi: Option<f64>,
}

/// A `{family, params}` pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyDoc {
    pub family: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MapDoc {
    pub family: String,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub params: Value,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exceptions: Vec<(PointDoc, PointDoc)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleDoc {
    #[serde(rename = "K")]
    pub k: usize,
    pub steps: Vec<FamilyDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionDoc {
    pub support: Vec<PointDoc>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertificateDoc {
    pub role: String,
    pub total: f64,
    pub coords: Vec<f64>,
    pub proven: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SupGapDoc {
    AtMost(f64),
    Exactly(f64),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpectationsDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reasoning: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tmr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub otr: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omr: Option<f64>,
    #[serde(default)]
    pub decomposition_equality: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recoverable: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sup_gap: Option<SupGapDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle_questions: Option<Vec<PointDoc>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certificate_budget: Option<f64>,
    #[serde(default)]
    pub attains_bound: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityDoc {
    pub lambda: f64,
    pub phi: f64,
    pub delta: f64,
    pub dfg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptationDoc {
    pub mu: DistributionDoc,
    pub hypotheses: Vec<MapDoc>,
}

/// A whole scenario document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub version: u32,
    pub name: String,
    pub space: SpaceDoc,
    pub loss: FamilyDoc,
    pub f: MapDoc,
    pub g: MapDoc,
    pub rule: RuleDoc,
    pub nu: DistributionDoc,
    #[serde(default)]
    pub certificates: Vec<CertificateDoc>,
    #[serde(default)]
    pub expectations: ExpectationsDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_window: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adaptation: Option<AdaptationDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricScale {
    metric: String,
    scale: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricScaleCap {
    metric: String,
    scale: f64,
    cap: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Cap {
    cap: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SlopeOffset {
    slope: f64,
    offset: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Knots {
    knots: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConstantValue {
    value: PointDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AffineStep {
    coord: String,
    slope: f64,
    offset: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BranchStep {
    answer: usize,
    equals: PointDoc,
    on_equal: PointDoc,
    otherwise: PointDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArithParams {
    step: usize,
}

fn params<T: DeserializeOwned>(family: &str, v: &Value) -> Result<T> {
    serde_json::from_value(v.clone())
        .map_err(|e| CliError::Format(format!("bad params for family `{family}`: {e}")))
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("parameter structs serialize")
}

fn no_params(family: &str, v: &Value) -> Result<()> {
    match v {
        Value::Null => Ok(()),
        Value::Object(m) if m.is_empty() => Ok(()),
        _ => Err(CliError::Format(format!("family `{family}` takes no params"))),
    }
}

fn unknown(kind: &str, family: &str) -> CliError {
    CliError::Format(format!("unknown {kind} family `{family}`"))
}

fn points(docs: &[PointDoc]) -> Result<Vec<Point>> {
    docs.iter().map(PointDoc::to_point).collect()
}

fn point_docs(ps: &[Point]) -> Vec<PointDoc> {
    ps.iter().map(PointDoc::from_point).collect()
}

impl SpaceDoc {
    pub fn from_space(s: &Space) -> Self {
        match s {
            Space::Real(iv) => SpaceDoc {
                kind: "real".into(),
                lo: iv.lo().is_finite().then_some(iv.lo()),
                hi: iv.hi().is_finite().then_some(iv.hi()),
            },
            Space::Expr => SpaceDoc { kind: "expr".into(), lo: None, hi: None },
            Space::Atom => SpaceDoc { kind: "atom".into(), lo: None, hi: None },
        }
    }

    pub fn to_space(&self) -> Result<Space> {
        let bounds = self.lo.is_some() || self.hi.is_some();
        Ok(match self.kind.as_str() {
            "real" => Space::interval(self.lo.unwrap_or(f64::NEG_INFINITY), self.hi.unwrap_or(f64::INFINITY))?,
            "expr" if !bounds => Space::Expr,
            "atom" if !bounds => Space::Atom,
            "expr" | "atom" => return Err(CliError::Format(format!("{} space takes no bounds", self.kind))),
            other => return Err(unknown("space", other)),
        })
    }
}

impl FamilyDoc {
    pub fn from_loss(loss: &QuasimetricLoss) -> Self {
        let params = match loss {
            QuasimetricLoss::Scaled { metric, scale } => {
                to_value(&MetricScale { metric: metric.id().into(), scale: *scale })
            }
            QuasimetricLoss::Capped { metric, scale, cap } => {
                to_value(&MetricScaleCap { metric: metric.id().into(), scale: *scale, cap: *cap })
            }
            QuasimetricLoss::Indicator { cap } => to_value(&Cap { cap: *cap }),
        };
        FamilyDoc { family: loss.id().into(), params }
    }

    pub fn to_loss(&self) -> Result<QuasimetricLoss> {
        let f = self.family.as_str();
        Ok(match f {
            "scaled_metric" => {
                let p: MetricScale = params(f, &self.params)?;
                QuasimetricLoss::scaled(Metric::from_id(&p.metric)?, p.scale)?
            }
            "capped_metric" => {
                let p: MetricScaleCap = params(f, &self.params)?;
                cot_lab_core::spaces::loss_from_metric_capped(Metric::from_id(&p.metric)?, p.scale, p.cap)?
            }
            "indicator" => QuasimetricLoss::indicator(params::<Cap>(f, &self.params)?.cap)?,
            other => return Err(unknown("loss", other)),
        })
    }

    pub fn from_step(step: &StepFamily) -> Self {
        let params = match step {
            StepFamily::Constant(p) => to_value(&ConstantValue { value: PointDoc::from_point(p) }),
            StepFamily::Affine { coord, slope, offset } => {
                to_value(&AffineStep { coord: coord.to_string(), slope: *slope, offset: *offset })
            }
            StepFamily::BranchOnAnswer { answer, equals, on_equal, otherwise } => to_value(&BranchStep {
                answer: *answer,
                equals: PointDoc::from_point(equals),
                on_equal: PointDoc::from_point(on_equal),
                otherwise: PointDoc::from_point(otherwise),
            }),
            StepFamily::Arithmetic(s) => to_value(&ArithParams { step: s.index() }),
        };
        FamilyDoc { family: step.id().into(), params }
    }

    pub fn to_step(&self) -> Result<StepFamily> {
        let f = self.family.as_str();
        Ok(match f {
            "constant" => StepFamily::Constant(params::<ConstantValue>(f, &self.params)?.value.to_point()?),
            "affine" => {
                let p: AffineStep = params(f, &self.params)?;
                StepFamily::Affine { coord: Coord::parse(&p.coord)?, slope: p.slope, offset: p.offset }
            }
            "branch_on_answer" => {
                let p: BranchStep = params(f, &self.params)?;
                StepFamily::BranchOnAnswer {
                    answer: p.answer,
                    equals: p.equals.to_point()?,
                    on_equal: p.on_equal.to_point()?,
                    otherwise: p.otherwise.to_point()?,
                }
            }
            "arithmetic" => StepFamily::Arithmetic(ArithStep::from_index(params::<ArithParams>(f, &self.params)?.step)?),
            other => return Err(unknown("step", other)),
        })
    }
}

impl MapDoc {
    pub fn from_map(m: &AnswerMap) -> Self {
        let params = match m.base() {
            MapFamily::Affine { slope, offset } => to_value(&SlopeOffset { slope: *slope, offset: *offset }),
            MapFamily::PiecewiseLinear { knots } => to_value(&Knots { knots: knots.clone() }),
            MapFamily::Constant(p) => to_value(&ConstantValue { value: PointDoc::from_point(p) }),
            MapFamily::Abs | MapFamily::ArithmeticEval => Value::Null,
        };
        MapDoc {
            family: m.id().into(),
            params,
            exceptions: m
                .exceptions()
                .iter()
                .map(|(k, v)| (PointDoc::from_point(k), PointDoc::from_point(v)))
                .collect(),
        }
    }

    pub fn to_map(&self) -> Result<AnswerMap> {
        let f = self.family.as_str();
        let base = match f {
            "affine" => {
                let p: SlopeOffset = params(f, &self.params)?;
                MapFamily::Affine { slope: p.slope, offset: p.offset }
            }
            "abs" => {
                no_params(f, &self.params)?;
                MapFamily::Abs
            }
            "piecewise_linear" => MapFamily::PiecewiseLinear { knots: params::<Knots>(f, &self.params)?.knots },
            "constant" => MapFamily::Constant(params::<ConstantValue>(f, &self.params)?.value.to_point()?),
            "arithmetic_eval" => {
                no_params(f, &self.params)?;
                MapFamily::ArithmeticEval
            }
            other => return Err(unknown("answer map", other)),
        };
        let exceptions = self
            .exceptions
            .iter()
            .map(|(k, v)| Ok((k.to_point()?, v.to_point()?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(AnswerMap::with_exceptions(base, exceptions)?)
    }
}

impl DistributionDoc {
    pub fn from_distribution(d: &FiniteDistribution) -> Self {
        DistributionDoc { support: point_docs(d.support()), weights: d.weights().to_vec() }
    }

    pub fn to_distribution(&self) -> Result<FiniteDistribution> {
        Ok(FiniteDistribution::new(points(&self.support)?, self.weights.clone())?)
    }
}

impl CertificateDoc {
    pub fn from_certificate(c: &StabilityCertificate) -> Self {
        CertificateDoc { role: c.role.to_string(), total: c.total, coords: c.coords.clone(), proven: c.proven }
    }

    pub fn to_certificate(&self) -> Result<StabilityCertificate> {
        Ok(StabilityCertificate::new(CertRole::parse(&self.role)?, self.total, self.coords.clone(), self.proven)?)
    }
}

impl ExpectationsDoc {
    pub fn from_expectations(e: &Expectations) -> Self {
        ExpectationsDoc {
            reasoning: e.reasoning,
            tmr: e.tmr,
            otr: e.otr,
            omr: e.omr,
            decomposition_equality: e.decomposition_equality,
            recoverable: e.recoverable,
            sup_gap: e.sup_gap.map(|g| match g {
                SupGap::AtMost(v) => SupGapDoc::AtMost(v),
                SupGap::Exactly(v) => SupGapDoc::Exactly(v),
            }),
            oracle_questions: e.oracle_questions.as_deref().map(point_docs),
            certificate_budget: e.certificate_budget,
            attains_bound: e.attains_bound,
        }
    }

    pub fn to_expectations(&self) -> Result<Expectations> {
        Ok(Expectations {
            reasoning: self.reasoning,
            tmr: self.tmr,
            otr: self.otr,
            omr: self.omr,
            decomposition_equality: self.decomposition_equality,
            recoverable: self.recoverable,
            sup_gap: self.sup_gap.as_ref().map(|g| match g {
                SupGapDoc::AtMost(v) => SupGap::AtMost(*v),
                SupGapDoc::Exactly(v) => SupGap::Exactly(*v),
            }),
            oracle_questions: self.oracle_questions.as_deref().map(points).transpose()?,
            certificate_budget: self.certificate_budget,
            attains_bound: self.attains_bound,
        })
    }
}

impl ScenarioFile {
    pub fn from_scenario(s: &Scenario) -> Self {
        ScenarioFile {
            version: VERSION,
            name: s.name.clone(),
            space: SpaceDoc::from_space(s.space()),
            loss: FamilyDoc::from_loss(&s.loss),
            f: MapDoc::from_map(&s.f),
            g: MapDoc::from_map(&s.g),
            rule: RuleDoc { k: s.k(), steps: s.rule.steps().iter().map(|st| FamilyDoc::from_step(st.family())).collect() },
            nu: DistributionDoc::from_distribution(&s.nu),
            certificates: s.certificates.iter().map(CertificateDoc::from_certificate).collect(),
            expectations: ExpectationsDoc::from_expectations(&s.expectations),
            stability: s.stability.map(|p| StabilityDoc { lambda: p.lambda, phi: p.phi, delta: p.delta, dfg: p.dfg }),
            sample_window: s.sample_window,
            adaptation: None,
        }
    }

    pub fn from_instance(inst: &AdaptationInstance) -> Self {
        let mut doc = Self::from_scenario(&inst.scenario);
        doc.adaptation = Some(AdaptationDoc {
            mu: DistributionDoc::from_distribution(&inst.mu),
            hypotheses: inst.hypotheses.members().iter().map(MapDoc::from_map).collect(),
        });
        doc
    }

    /// Builds and structurally validates the scenario.
    pub fn to_scenario(&self) -> Result<Scenario> {
        if self.version != VERSION {
            return Err(CliError::Format(format!(
                "unsupported scenario version {} (expected {VERSION})",
                self.version
            )));
        }
        let steps = self.rule.steps.iter().map(FamilyDoc::to_step).collect::<Result<Vec<_>>>()?;
        if steps.len() != self.rule.k {
            return Err(CliError::Format(format!(
                "rule declares K = {} but lists {} steps",
                self.rule.k,
                steps.len()
            )));
        }
        let scenario = Scenario {
            name: self.name.clone(),
            loss: self.loss.to_loss()?,
            f: self.f.to_map()?,
            g: self.g.to_map()?,
            rule: ChainRule::new(self.space.to_space()?, steps)?,
            nu: self.nu.to_distribution()?,
            certificates: self.certificates.iter().map(CertificateDoc::to_certificate).collect::<Result<_>>()?,
            expectations: self.expectations.to_expectations()?,
            stability: self.stability.map(|p| StabilityParams { lambda: p.lambda, phi: p.phi, delta: p.delta, dfg: p.dfg }),
            sample_window: self.sample_window,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    /// The adaptation instance, if the file carries `adaptation`.
    pub fn to_instance(&self) -> Result<AdaptationInstance> {
        let doc = self
            .adaptation
            .as_ref()
            .ok_or_else(|| CliError::Format("scenario has no `adaptation` section".into()))?;
        let hypotheses = doc.hypotheses.iter().map(MapDoc::to_map).collect::<Result<Vec<_>>>()?;
        Ok(AdaptationInstance::new(
            self.to_scenario()?,
            doc.mu.to_distribution()?,
            HypothesisClass::new(hypotheses)?,
        )?)
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Format(format!("invalid scenario JSON: {e}")))
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario documents serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
        Self::parse(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use cot_lab_core::constructions;

    #[test]
    fn point_encoding() {
        let doc: Vec<PointDoc> = serde_json::from_str(r#"[1.5, "7·26", {"atom": "b"}]"#).unwrap();
        let ps = points(&doc).unwrap();
        assert_eq!(ps[0], Point::real(1.5).unwrap());
        assert_eq!(ps[1], Point::expr("7·26").unwrap());
        assert_eq!(ps[2], Point::atom("b").unwrap());
        assert_eq!(serde_json::to_string(&point_docs(&ps)).unwrap(), r#"[1.5,"7·26",{"atom":"b"}]"#);
    }

    #[test]
    fn builtin_scenarios_round_trip() {
        let all = [
            constructions::nfl_instance(1, 3, 10.0, 0.01).unwrap(),
            constructions::nfl_instance(2, 4, 1.0, 0.1).unwrap(),
            constructions::nfl_instance(3, 5, 10.0, 0.1).unwrap(),
            constructions::tight_instance(4, 2.0, 0.5, 2.0).unwrap(),
            constructions::omr_instance(3, 3.0, 7).unwrap(),
            constructions::arithmetic_scenario().unwrap(),
        ];
        for s in all {
            let doc = ScenarioFile::from_scenario(&s);
            let text = doc.to_json();
            let back = ScenarioFile::parse(&text).unwrap();
            assert_eq!(back, doc);
            assert_eq!(back.to_scenario().unwrap(), s, "{}", s.name);
            assert_eq!(back.to_json(), text);
        }
    }

    #[test]
    fn unknown_families_are_rejected() {
        let mut doc = ScenarioFile::from_scenario(&constructions::nfl_instance(2, 2, 1.0, 0.1).unwrap());
        doc.f.family = "spline".into();
        assert!(matches!(doc.to_scenario(), Err(CliError::Format(_))));
        let mut doc = ScenarioFile::from_scenario(&constructions::nfl_instance(2, 2, 1.0, 0.1).unwrap());
        doc.rule.steps[0].family = "teleport".into();
        assert!(matches!(doc.to_scenario(), Err(CliError::Format(_))));
        let mut doc = ScenarioFile::from_scenario(&constructions::nfl_instance(2, 2, 1.0, 0.1).unwrap());
        doc.loss.family = "huber".into();
        assert!(matches!(doc.to_scenario(), Err(CliError::Format(_))));
    }

    #[test]
    fn unknown_params_and_versions_are_rejected() {
        let mut doc = ScenarioFile::from_scenario(&constructions::nfl_instance(2, 2, 1.0, 0.1).unwrap());
        doc.version = 7;
        assert!(doc.to_scenario().is_err());
        let text = ScenarioFile::from_scenario(&constructions::nfl_instance(2, 2, 1.0, 0.1).unwrap())
            .to_json()
            .replacen("\"slope\"", "\"slop\"", 1);
        assert!(ScenarioFile::parse(&text).unwrap().to_scenario().is_err());
        assert!(ScenarioFile::parse("{\"version\": 1}").is_err());
    }

    #[test]
    fn step_count_must_match_k() {
        let mut doc = ScenarioFile::from_scenario(&constructions::nfl_instance(2, 3, 1.0, 0.1).unwrap());
        doc.rule.k = 2;
        assert!(doc.to_scenario().is_err());
    }

    #[test]
    fn adaptation_section_round_trips() {
        let inst = cot_lab_core::adaptation::tiny_fixture().unwrap();
        let doc = ScenarioFile::from_instance(&inst);
        let back = ScenarioFile::parse(&doc.to_json()).unwrap().to_instance().unwrap();
        assert_eq!(back, inst);
        let plain = ScenarioFile::from_scenario(&inst.scenario);
        assert!(plain.to_instance().is_err());
    }
}
