//! Domain-adaptation bound on the oracle-trajectory risk: empirical
//! Rademacher complexity, the `d^ℓ_H` divergence, the β approximation term,
//! the high-probability bound itself and a seeded coverage experiment.
//!
//! The target distribution is `τ = Q^(K)_g # ν`, the law of the oracle's
//! final question, and the OTR of `f` is its statistical risk under `τ`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chain::{AnswerMap, ChainRule, Coord, MapFamily, StepFamily};
use crate::constructions::{Expectations, Scenario};
use crate::error::{LabError, Result};
use crate::num::{ln, sqrt};
use crate::risk::{self, FiniteDistribution};
use crate::spaces::{loss_from_metric_capped, Metric, Point, QuasimetricLoss, Space};

/// Largest sample size for exhaustive sign enumeration.
pub const EXHAUSTIVE_MAX_M: usize = 20;

/// A finite hypothesis class.
#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisClass {
    members: Vec<AnswerMap>,
}

impl HypothesisClass {
    pub fn new(members: Vec<AnswerMap>) -> Result<Self> {
        if members.is_empty() {
            return Err(LabError::param("hypothesis class must be nonempty"));
        }
        Ok(HypothesisClass { members })
    }

    pub fn members(&self) -> &[AnswerMap] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, f: &AnswerMap) -> bool {
        self.members.contains(f)
    }
}

/// Points `X_i` with labels `g(X_i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSample {
    points: Vec<Point>,
    labels: Vec<Point>,
}

impl LabeledSample {
    pub fn new(points: Vec<Point>, labels: Vec<Point>) -> Result<Self> {
        if points.is_empty() || points.len() != labels.len() {
            return Err(LabError::param(format!(
                "labeled sample needs matching nonempty points and labels ({} vs {})",
                points.len(),
                labels.len()
            )));
        }
        Ok(LabeledSample { points, labels })
    }

    pub fn label_with(g: &AnswerMap, points: Vec<Point>) -> Result<Self> {
        let labels = points.iter().map(|x| g.eval(x)).collect::<Result<Vec<_>>>()?;
        Self::new(points, labels)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn labels(&self) -> &[Point] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// How the expectation over sign vectors is taken.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RademacherMode {
    /// All `2^m` sign vectors.
    Exhaustive,
    /// Mean over `n_draws` seeded sign vectors.
    MonteCarlo { n_draws: usize, seed: u64 },
}

fn sup_correlation(realized: &[Vec<f64>], signs: impl Fn(usize) -> f64, m: usize) -> f64 {
    let mut best: f64 = 0.0;
    for row in realized {
        let mut s = 0.0;
        for (i, v) in row.iter().enumerate() {
            s += signs(i) * v;
        }
        best = best.max(crate::num::abs(s) / m as f64);
    }
    best
}

/// `2·E_σ sup_γ |(1/m) Σ_i σ_i γ(S_i)|` for the rows of `realized`
/// (one row per function, one column per sample point).
pub fn empirical_rademacher(realized: &[Vec<f64>], mode: RademacherMode) -> Result<f64> {
    let m = realized.first().map_or(0, Vec::len);
    if m == 0 || realized.iter().any(|row| row.len() != m) {
        return Err(LabError::param("realized matrix must be nonempty and rectangular"));
    }
    match mode {
        RademacherMode::Exhaustive => {
            if m > EXHAUSTIVE_MAX_M {
                return Err(LabError::param(format!(
                    "exhaustive Rademacher needs m <= {EXHAUSTIVE_MAX_M}, got {m}"
                )));
            }
            let count = 1u64 << m;
            let mut acc = 0.0;
            for mask in 0..count {
                acc += sup_correlation(realized, |i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }, m);
            }
            Ok(2.0 * acc / count as f64)
        }
        RademacherMode::MonteCarlo { n_draws, seed } => {
            if n_draws == 0 {
                return Err(LabError::param("Monte Carlo Rademacher needs n_draws >= 1"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut signs = vec![0.0; m];
            let mut acc = 0.0;
            for _ in 0..n_draws {
                for s in signs.iter_mut() {
                    *s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                }
                acc += sup_correlation(realized, |i| signs[i], m);
            }
            Ok(2.0 * acc / n_draws as f64)
        }
    }
}

/// `sup_{h,h'} |E_μ ℓ(h, h') - E_ν ℓ(h, h')|` over ordered pairs.
pub fn dh_divergence(
    loss: &QuasimetricLoss,
    hypotheses: &HypothesisClass,
    mu: &FiniteDistribution,
    nu: &FiniteDistribution,
) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for h in hypotheses.members() {
        for h2 in hypotheses.members() {
            let a = risk::statistical_risk(h, h2, mu, loss)?;
            let b = risk::statistical_risk(h, h2, nu, loss)?;
            sup = sup.max(crate::num::abs(a - b));
        }
    }
    Ok(sup)
}

fn empirical_mean<F>(points: &[Point], mut h: F) -> Result<f64>
where
    F: FnMut(&Point) -> Result<f64>,
{
    let mut acc = 0.0;
    for p in points {
        acc += h(p)?;
    }
    Ok(acc / points.len() as f64)
}

/// The divergence between the empirical measures of two samples of equal size.
pub fn empirical_dh(
    loss: &QuasimetricLoss,
    hypotheses: &HypothesisClass,
    s: &[Point],
    t: &[Point],
) -> Result<f64> {
    if s.is_empty() || s.len() != t.len() {
        return Err(LabError::param(format!(
            "empirical divergence needs equal nonempty samples ({} vs {})",
            s.len(),
            t.len()
        )));
    }
    let mut sup: f64 = 0.0;
    for h in hypotheses.members() {
        for h2 in hypotheses.members() {
            let gap = |x: &Point| loss.eval(&h.eval(x)?, &h2.eval(x)?);
            let a = empirical_mean(s, gap)?;
            let b = empirical_mean(t, gap)?;
            sup = sup.max(crate::num::abs(a - b));
        }
    }
    Ok(sup)
}

/// `β = min_h R_μ(g, h) + R_τ(h, g)`.
pub fn beta_term(
    hypotheses: &HypothesisClass,
    loss: &QuasimetricLoss,
    mu: &FiniteDistribution,
    tau: &FiniteDistribution,
    g: &AnswerMap,
) -> Result<f64> {
    let mut best = f64::INFINITY;
    for h in hypotheses.members() {
        let v = risk::statistical_risk(g, h, mu, loss)? + risk::statistical_risk(h, g, tau, loss)?;
        best = best.min(v);
    }
    Ok(best)
}

/// Where the β addend of the bound comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum BetaSource<'a> {
    Given(f64),
    Population { mu: &'a FiniteDistribution, tau: &'a FiniteDistribution, g: &'a AnswerMap },
}

/// Every addend of the bound.
#[derive(Clone, Debug, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BoundBreakdown {
    pub empirical_risk: f64,
    pub empirical_divergence: f64,
    pub rademacher_s: f64,
    pub rademacher_u: f64,
    pub rademacher_t: f64,
    pub deviation: f64,
    pub beta: f64,
    /// `true` when β was computed from the population distributions.
    pub beta_from_population: bool,
    pub total: f64,
}

impl BoundBreakdown {
    fn sum(&mut self) {
        self.total = self.empirical_risk
            + self.empirical_divergence
            + self.rademacher_s
            + self.rademacher_u
            + self.rademacher_t
            + self.deviation
            + self.beta;
    }
}

/// `9M √(ln(6/ε) / (2m))`.
pub fn deviation_term(cap: f64, eps: f64, m: usize) -> f64 {
    9.0 * cap * sqrt(ln(6.0 / eps) / (2.0 * m as f64))
}

/// Right-hand side of the high-probability OTR bound for hypothesis `f`.
#[allow(clippy::too_many_arguments)]
pub fn otr_bound_rhs(
    f: &AnswerMap,
    hypotheses: &HypothesisClass,
    loss: &QuasimetricLoss,
    s: &LabeledSample,
    u: &[Point],
    t: &[Point],
    eps: f64,
    mode: RademacherMode,
    beta: BetaSource<'_>,
) -> Result<BoundBreakdown> {
    let cap = loss
        .cap()
        .ok_or_else(|| LabError::param("the bound needs a loss bounded by some M"))?;
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LabError::param(format!("confidence eps must lie in (0, 1), got {eps}")));
    }
    let m = s.len();
    if u.len() != m || t.len() != m {
        return Err(LabError::param(format!(
            "samples S, U, T must have equal size ({m}, {}, {})",
            u.len(),
            t.len()
        )));
    }
    if !hypotheses.contains(f) {
        return Err(LabError::param("f must belong to the hypothesis class"));
    }

    let mut out = BoundBreakdown::default();
    let mut acc = 0.0;
    for (x, y) in s.points().iter().zip(s.labels()) {
        acc += loss.eval(&f.eval(x)?, y)?;
    }
    out.empirical_risk = acc / m as f64;
    out.empirical_divergence = empirical_dh(loss, hypotheses, u, t)?;

    let f_rows = hypotheses
        .members()
        .iter()
        .map(|h| {
            s.points()
                .iter()
                .zip(s.labels())
                .map(|(x, y)| loss.eval(&h.eval(x)?, y))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    out.rademacher_s = empirical_rademacher(&f_rows, mode)?;
    out.rademacher_u = empirical_rademacher(&pair_rows(loss, hypotheses, u)?, mode)?;
    out.rademacher_t = empirical_rademacher(&pair_rows(loss, hypotheses, t)?, mode)?;
    out.deviation = deviation_term(cap, eps, m);
    match beta {
        BetaSource::Given(b) => out.beta = b,
        BetaSource::Population { mu, tau, g } => {
            out.beta = beta_term(hypotheses, loss, mu, tau, g)?;
            out.beta_from_population = true;
        }
    }
    out.sum();
    Ok(out)
}

fn pair_rows(loss: &QuasimetricLoss, hypotheses: &HypothesisClass, pts: &[Point]) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(hypotheses.len() * hypotheses.len());
    for h in hypotheses.members() {
        for h2 in hypotheses.members() {
            rows.push(
                pts.iter()
                    .map(|x| loss.eval(&h.eval(x)?, &h2.eval(x)?))
                    .collect::<Result<Vec<_>>>()?,
            );
        }
    }
    Ok(rows)
}

/// A scenario together with a source distribution μ and a hypothesis class.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaptationInstance {
    pub scenario: Scenario,
    pub mu: FiniteDistribution,
    pub hypotheses: HypothesisClass,
    tau: FiniteDistribution,
}

impl AdaptationInstance {
    pub fn new(scenario: Scenario, mu: FiniteDistribution, hypotheses: HypothesisClass) -> Result<Self> {
        if scenario.loss.cap().is_none() {
            return Err(LabError::param("adaptation needs a bounded loss"));
        }
        for p in mu.support() {
            scenario.space().check(p)?;
        }
        let tau = risk::oracle_pushforward(&scenario.rule, &scenario.g, &scenario.nu)?;
        Ok(AdaptationInstance { scenario, mu, hypotheses, tau })
    }

    /// `τ = Q^(K)_g # ν`.
    pub fn tau(&self) -> &FiniteDistribution {
        &self.tau
    }

    pub fn otr(&self, f: &AnswerMap) -> Result<f64> {
        let s = &self.scenario;
        risk::otr(&s.rule, f, &s.g, &s.nu, &s.loss)
    }

    pub fn divergence(&self) -> Result<f64> {
        dh_divergence(&self.scenario.loss, &self.hypotheses, &self.mu, &self.tau)
    }

    pub fn beta(&self) -> Result<f64> {
        beta_term(&self.hypotheses, &self.scenario.loss, &self.mu, &self.tau, &self.scenario.g)
    }

    /// `R_μ(f, g) + d(μ, τ) + β - OTR(f)`, nonnegative for every `f ∈ H`.
    pub fn population_slack(&self, f: &AnswerMap) -> Result<f64> {
        let s = &self.scenario;
        let rhs = risk::statistical_risk(f, &s.g, &self.mu, &s.loss)? + self.divergence()? + self.beta()?;
        Ok(rhs - self.otr(f)?)
    }
}

/// Result of [`bound_experiment`].
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct CoverageReport {
    pub trials: usize,
    pub violations: usize,
    pub frequency: f64,
    pub eps: f64,
    pub m: usize,
    pub seed: u64,
    /// Each addend averaged over trials and hypotheses.
    pub per_addend_means: BoundBreakdown,
}

impl CoverageReport {
    pub fn covered(&self) -> bool {
        self.frequency <= self.eps
    }
}

/// Seed of trial `t`, derived from the base seed with a splitmix step.
pub fn trial_seed(seed: u64, t: usize) -> u64 {
    let mut z = seed.wrapping_add((t as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Draws `S, U ~ μ^m` and `T ~ τ^m` per trial, evaluates the bound for every
/// `f ∈ H` and counts trials where some `f` has OTR above its bound.
pub fn bound_experiment(
    inst: &AdaptationInstance,
    m: usize,
    trials: usize,
    eps: f64,
    seed: u64,
) -> Result<CoverageReport> {
    if trials == 0 {
        return Err(LabError::param("bound experiment needs at least one trial"));
    }
    if m == 0 {
        return Err(LabError::param("sample size m must be >= 1"));
    }
    let s = &inst.scenario;
    let otrs = inst
        .hypotheses
        .members()
        .iter()
        .map(|f| inst.otr(f))
        .collect::<Result<Vec<_>>>()?;
    let beta = inst.beta()?;
    let mut violations = 0;
    let mut means = BoundBreakdown::default();
    let per = (trials * inst.hypotheses.len()) as f64;
    for t in 0..trials {
        let ts = trial_seed(seed, t);
        let mut rng = ChaCha8Rng::seed_from_u64(ts);
        let sample = LabeledSample::label_with(&s.g, inst.mu.sample_n(&mut rng, m))?;
        let u = inst.mu.sample_n(&mut rng, m);
        let tt = inst.tau.sample_n(&mut rng, m);
        let mode = if m <= EXHAUSTIVE_MAX_M {
            RademacherMode::Exhaustive
        } else {
            RademacherMode::MonteCarlo { n_draws: 2000, seed: ts }
        };
        let mut violated = false;
        for (f, otr) in inst.hypotheses.members().iter().zip(&otrs) {
            let b = otr_bound_rhs(
                f,
                &inst.hypotheses,
                &s.loss,
                &sample,
                &u,
                &tt,
                eps,
                mode,
                BetaSource::Given(beta),
            )?;
            violated |= *otr > b.total;
            means.empirical_risk += b.empirical_risk / per;
            means.empirical_divergence += b.empirical_divergence / per;
            means.rademacher_s += b.rademacher_s / per;
            means.rademacher_u += b.rademacher_u / per;
            means.rademacher_t += b.rademacher_t / per;
            means.deviation += b.deviation / per;
            means.beta += b.beta / per;
        }
        violations += usize::from(violated);
    }
    means.beta_from_population = true;
    means.sum();
    Ok(CoverageReport {
        trials,
        violations,
        frequency: violations as f64 / trials as f64,
        eps,
        m,
        seed,
        per_addend_means: means,
    })
}

fn real(v: f64) -> Point {
    Point::real(v).expect("finite literal")
}

fn fixture_scenario(name: &str, f: AnswerMap) -> Result<Scenario> {
    let support: Vec<Point> = (0..4).map(|i| real(i as f64)).collect();
    let rule = ChainRule::new(
        Space::interval(0.0, 3.0)?,
        vec![
            StepFamily::Affine { coord: Coord::Prompt, slope: -1.0, offset: 3.0 },
            StepFamily::Affine { coord: Coord::Answer(1), slope: 1.0, offset: 0.0 },
        ],
    )?;
    let loss = loss_from_metric_capped(Metric::Absolute, 1.0, 1.0)?;
    let mut certificates = vec![loss.certificate().expect("capped loss is certified")];
    certificates.extend(rule.steps().iter().filter_map(|s| s.certificate()));
    Ok(Scenario {
        name: name.into(),
        loss,
        f,
        g: AnswerMap::identity(),
        rule,
        nu: FiniteDistribution::new(support, vec![0.4, 0.3, 0.2, 0.1])?,
        certificates,
        expectations: Expectations { recoverable: Some(false), ..Expectations::default() },
        stability: None,
        sample_window: None,
    })
}

/// The hypothesis class `{identity, 0, x/2 + 1/2}` of the small fixture.
pub fn tiny_hypotheses() -> Result<HypothesisClass> {
    HypothesisClass::new(vec![AnswerMap::identity(), AnswerMap::zero(), AnswerMap::affine(0.5, 0.5)?])
}

/// Four-point space `{0,1,2,3}`, μ uniform, ν skewed, a two-step rule
/// reflecting the prompt, `g` the identity and three hypotheses.
pub fn tiny_fixture() -> Result<AdaptationInstance> {
    let support: Vec<Point> = (0..4).map(|i| real(i as f64)).collect();
    AdaptationInstance::new(
        fixture_scenario("tiny_adaptation", AnswerMap::affine(0.5, 0.5)?)?,
        FiniteDistribution::empirical(&support)?,
        tiny_hypotheses()?,
    )
}

/// The small fixture with `H = {g}`.
pub fn singleton_fixture() -> Result<AdaptationInstance> {
    let support: Vec<Point> = (0..4).map(|i| real(i as f64)).collect();
    AdaptationInstance::new(
        fixture_scenario("singleton_adaptation", AnswerMap::identity())?,
        FiniteDistribution::empirical(&support)?,
        HypothesisClass::new(vec![AnswerMap::identity()])?,
    )
}

fn random_weights(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

fn random_support(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point> {
    let mut pts: Vec<Point> = Vec::with_capacity(n);
    while pts.len() < n {
        let p = real(f64::from(rng.gen_range(-40i32..=40)) / 4.0);
        if !pts.contains(&p) {
            pts.push(p);
        }
    }
    pts
}

fn random_map(rng: &mut ChaCha8Rng) -> Result<AnswerMap> {
    if rng.gen_bool(0.15) {
        return AnswerMap::new(MapFamily::Abs);
    }
    AnswerMap::affine(rng.gen_range(-2.0..2.0), rng.gen_range(-3.0..3.0))
}

/// A random finite instance with a member `f ∈ H`, used to check the
/// population inequality.
pub fn random_fixture(seed: u64) -> Result<(AdaptationInstance, AnswerMap)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=4);
    let mut steps = Vec::with_capacity(k);
    for kk in 1..=k {
        steps.push(StepFamily::Affine {
            coord: Coord::from_index(rng.gen_range(0..2 * kk - 1)),
            slope: rng.gen_range(-1.5..1.5),
            offset: rng.gen_range(-2.0..2.0),
        });
    }
    let rule = ChainRule::new(Space::real_line(), steps)?;
    let g = random_map(&mut rng)?;
    let n_h = rng.gen_range(1..=4);
    let mut members = (0..n_h).map(|_| random_map(&mut rng)).collect::<Result<Vec<_>>>()?;
    if rng.gen_bool(0.3) {
        members.push(g.clone());
    }
    let f = members[rng.gen_range(0..members.len())].clone();
    let loss = if rng.gen_bool(0.5) {
        loss_from_metric_capped(Metric::Absolute, rng.gen_range(0.1..2.0), rng.gen_range(0.5..5.0))?
    } else {
        QuasimetricLoss::indicator(rng.gen_range(0.5..5.0))?
    };
    let n_nu = rng.gen_range(1..=5);
    let n_mu = rng.gen_range(1..=5);
    let nu = FiniteDistribution::new(random_support(&mut rng, n_nu), random_weights(&mut rng, n_nu))?;
    let mu = FiniteDistribution::new(random_support(&mut rng, n_mu), random_weights(&mut rng, n_mu))?;
    let scenario = Scenario {
        name: format!("random_adaptation_{seed}"),
        loss,
        f: f.clone(),
        g,
        rule,
        nu,
        certificates: Vec::new(),
        expectations: Expectations::default(),
        stability: None,
        sample_window: None,
    };
    Ok((AdaptationInstance::new(scenario, mu, HypothesisClass::new(members)?)?, f))
}

/// Name of a Rademacher mode for reports.
pub fn mode_label(mode: RademacherMode) -> String {
    match mode {
        RademacherMode::Exhaustive => "exhaustive".into(),
        RademacherMode::MonteCarlo { n_draws, seed } => format!("monte_carlo(n_draws={n_draws}, seed={seed})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn abs_loss() -> QuasimetricLoss {
        QuasimetricLoss::scaled(Metric::Absolute, 1.0).unwrap()
    }

    fn id_zero() -> HypothesisClass {
        HypothesisClass::new(vec![AnswerMap::identity(), AnswerMap::zero()]).unwrap()
    }

    #[test]
    fn rademacher_of_the_zero_function() {
        assert_eq!(empirical_rademacher(&[vec![0.0; 5]], RademacherMode::Exhaustive).unwrap(), 0.0);
    }

    #[test]
    fn rademacher_of_identity_on_two_ones() {
        let v = empirical_rademacher(&[vec![1.0, 1.0]], RademacherMode::Exhaustive).unwrap();
        assert_eq!(v, 1.0);
        let mc = empirical_rademacher(
            &[vec![1.0, 1.0]],
            RademacherMode::MonteCarlo { n_draws: 100_000, seed: 3 },
        )
        .unwrap();
        assert!((mc - 1.0).abs() <= 0.02, "{mc}");
    }

    #[test]
    fn rademacher_guards() {
        assert!(empirical_rademacher(&[vec![0.0; 21]], RademacherMode::Exhaustive).is_err());
        assert!(empirical_rademacher(&[], RademacherMode::Exhaustive).is_err());
        assert!(empirical_rademacher(&[vec![1.0], vec![1.0, 2.0]], RademacherMode::Exhaustive).is_err());
    }

    #[test]
    fn divergence_between_two_diracs() {
        let mu = FiniteDistribution::dirac(real(1.0));
        let nu = FiniteDistribution::dirac(real(3.0));
        assert_eq!(dh_divergence(&abs_loss(), &id_zero(), &mu, &nu).unwrap(), 2.0);
        assert_eq!(dh_divergence(&abs_loss(), &id_zero(), &mu, &mu).unwrap(), 0.0);
        assert_eq!(empirical_dh(&abs_loss(), &id_zero(), &[real(1.0)], &[real(3.0)]).unwrap(), 2.0);
    }

    #[test]
    fn constant_hypotheses_see_no_divergence() {
        let h = HypothesisClass::new(vec![AnswerMap::affine(0.0, 1.0).unwrap(), AnswerMap::affine(0.0, -2.0).unwrap()])
            .unwrap();
        let mu = FiniteDistribution::dirac(real(1.0));
        let nu = FiniteDistribution::empirical(&[real(5.0), real(-7.0)]).unwrap();
        assert_eq!(dh_divergence(&abs_loss(), &h, &mu, &nu).unwrap(), 0.0);
    }

    #[test]
    fn empirical_divergence_length_mismatch() {
        assert!(matches!(
            empirical_dh(&abs_loss(), &id_zero(), &[real(1.0)], &[real(1.0), real(2.0)]),
            Err(LabError::Parameter(_))
        ));
    }

    #[test]
    fn beta_of_the_zero_class() {
        let h = HypothesisClass::new(vec![AnswerMap::zero()]).unwrap();
        let b = beta_term(
            &h,
            &abs_loss(),
            &FiniteDistribution::dirac(real(1.0)),
            &FiniteDistribution::dirac(real(2.0)),
            &AnswerMap::identity(),
        )
        .unwrap();
        assert_eq!(b, 3.0);
    }

    #[test]
    fn singleton_class_bound_is_the_deviation_term() {
        let inst = singleton_fixture().unwrap();
        let g = &inst.scenario.g;
        let pts: Vec<Point> = (0..4).map(|i| real(i as f64)).collect();
        let s = LabeledSample::label_with(g, pts.clone()).unwrap();
        let b = otr_bound_rhs(
            g,
            &inst.hypotheses,
            &inst.scenario.loss,
            &s,
            &pts,
            &pts,
            0.1,
            RademacherMode::Exhaustive,
            BetaSource::Population { mu: &inst.mu, tau: &inst.mu, g },
        )
        .unwrap();
        assert_eq!(b.total, deviation_term(1.0, 0.1, 4));
        assert!(b.beta_from_population);
    }

    #[test]
    fn bound_argument_checks() {
        let inst = tiny_fixture().unwrap();
        let pts: Vec<Point> = (0..4).map(|i| real(i as f64)).collect();
        let s = LabeledSample::label_with(&inst.scenario.g, pts.clone()).unwrap();
        let f = &inst.hypotheses.members()[0];
        let call = |loss: &QuasimetricLoss, eps: f64, f: &AnswerMap, t: &[Point]| {
            otr_bound_rhs(f, &inst.hypotheses, loss, &s, &pts, t, eps, RademacherMode::Exhaustive, BetaSource::Given(0.0))
        };
        assert!(call(&abs_loss(), 0.1, f, &pts).is_err());
        assert!(call(&inst.scenario.loss, 1.5, f, &pts).is_err());
        assert!(call(&inst.scenario.loss, 0.1, &AnswerMap::affine(3.0, 0.0).unwrap(), &pts).is_err());
        assert!(call(&inst.scenario.loss, 0.1, f, &pts[..3]).is_err());
        let ok = call(&inst.scenario.loss, 0.1, f, &pts).unwrap();
        assert!(ok.total >= ok.empirical_risk);
    }

    #[test]
    fn deviation_halves_when_m_quadruples() {
        let a = deviation_term(2.0, 0.1, 8);
        let b = deviation_term(2.0, 0.1, 32);
        assert!((a / 2.0 - b).abs() <= 1e-15);
    }

    #[test]
    fn tiny_fixture_target_is_the_reflected_prompt_law() {
        let inst = tiny_fixture().unwrap();
        let tau = inst.tau();
        assert_eq!(tau.support(), &[real(3.0), real(2.0), real(1.0), real(0.0)]);
        assert_eq!(tau.weights(), &[0.4, 0.3, 0.2, 0.1]);
    }

    #[test]
    fn singleton_class_never_violates() {
        let rep = bound_experiment(&singleton_fixture().unwrap(), 8, 50, 0.1, 11).unwrap();
        assert_eq!(rep.violations, 0);
    }

    #[test]
    fn zero_trials_is_an_error() {
        assert!(bound_experiment(&tiny_fixture().unwrap(), 8, 0, 0.1, 1).is_err());
    }

    #[test]
    fn population_inequality_on_fixtures() {
        let inst = tiny_fixture().unwrap();
        for f in inst.hypotheses.members() {
            assert!(inst.population_slack(f).unwrap() >= -1e-12);
        }
        for seed in 0..20 {
            let (inst, f) = random_fixture(seed).unwrap();
            assert!(inst.population_slack(&f).unwrap() >= -1e-12, "seed {seed}");
        }
    }

    #[test]
    fn trial_seeds_differ() {
        assert_ne!(trial_seed(1, 0), trial_seed(1, 1));
        assert_ne!(trial_seed(1, 0), trial_seed(2, 0));
    }
}
