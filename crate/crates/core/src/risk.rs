//! Finite-support distributions, push-forwards and the exact risk
//! functionals of a chain rule.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::chain::{self, AnswerMap, ChainRule, Trajectory};
use crate::error::{LabError, Result};
use crate::num::abs;
use crate::spaces::{points_close, Point, QuasimetricLoss};
use crate::{AXIOM_TOL, EQ_TOL};

/// A probability measure with finitely many atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct FiniteDistribution {
    support: Vec<Point>,
    weights: Vec<f64>,
}

impl FiniteDistribution {
    pub fn new(support: Vec<Point>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(LabError::param(format!(
                "distribution needs matching nonempty support and weights ({} vs {})",
                support.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(LabError::param("weights must be positive and finite"));
        }
        let total: f64 = weights.iter().sum();
        if abs(total - 1.0) > AXIOM_TOL {
            return Err(LabError::param(format!("weights sum to {total}, not 1")));
        }
        for (i, p) in support.iter().enumerate() {
            if support[..i].contains(p) {
                return Err(LabError::param(format!("support point {p} is repeated")));
            }
        }
        Ok(FiniteDistribution { support, weights })
    }

    pub fn dirac(p: Point) -> Self {
        FiniteDistribution { support: alloc::vec![p], weights: alloc::vec![1.0] }
    }

    /// Uniform over the listed points, with repeats merged into heavier atoms.
    pub fn empirical(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(LabError::param("empirical distribution of an empty sample"));
        }
        let w = 1.0 / points.len() as f64;
        let mut support: Vec<Point> = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for p in points {
            match support.iter().position(|s| s == p) {
                Some(i) => counts[i] += 1,
                None => {
                    support.push(p.clone());
                    counts.push(1);
                }
            }
        }
        let weights = counts.iter().map(|c| *c as f64 * w).collect();
        Ok(FiniteDistribution { support, weights })
    }

    /// Alias of [`FiniteDistribution::empirical`].
    pub fn uniform(points: &[Point]) -> Result<Self> {
        Self::empirical(points)
    }

    pub fn support(&self) -> &[Point] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Point, f64)> {
        self.support.iter().zip(self.weights.iter().copied())
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Exact expectation, summed in support order.
    pub fn expect<F>(&self, mut h: F) -> Result<f64>
    where
        F: FnMut(&Point) -> Result<f64>,
    {
        let mut acc = 0.0;
        for (p, w) in self.iter() {
            acc += w * h(p)?;
        }
        Ok(acc)
    }

    /// One categorical draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> &Point {
        let u: f64 = rng.gen::<f64>() * self.total_mass();
        let mut acc = 0.0;
        for (p, w) in self.iter() {
            acc += w;
            if u < acc {
                return p;
            }
        }
        &self.support[self.support.len() - 1]
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<Point> {
        (0..n).map(|_| self.sample(rng).clone()).collect()
    }
}

/// Push-forward `q#ν`, merging images within `tol` of each other.
pub fn pushforward<F>(q: F, nu: &FiniteDistribution, tol: f64) -> Result<FiniteDistribution>
where
    F: Fn(&Point) -> Result<Point>,
{
    let mut support: Vec<Point> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (p, w) in nu.iter() {
        let image = q(p)?;
        match support.iter().position(|s| points_close(s, &image, tol)) {
            Some(i) => weights[i] += w,
            None => {
                support.push(image);
                weights.push(w);
            }
        }
    }
    Ok(FiniteDistribution { support, weights })
}

/// `Q^(K)_g # ν`, merged with the rule space's equality tolerance.
pub fn oracle_pushforward(
    rule: &ChainRule,
    g: &AnswerMap,
    nu: &FiniteDistribution,
) -> Result<FiniteDistribution> {
    let tol = rule.space().equality_tolerance();
    pushforward(
        |x| Ok(chain::run_trajectory(rule, g, x)?.final_question().clone()),
        nu,
        tol,
    )
}

/// `E_μ ℓ(f(X), g(X))`.
pub fn statistical_risk(
    f: &AnswerMap,
    g: &AnswerMap,
    mu: &FiniteDistribution,
    loss: &QuasimetricLoss,
) -> Result<f64> {
    mu.expect(|x| loss.eval(&f.eval(x)?, &g.eval(x)?))
}

/// `E_ν ℓ(A^(K)_f(X), g(X))`.
pub fn reasoning_risk(
    rule: &ChainRule,
    f: &AnswerMap,
    g: &AnswerMap,
    nu: &FiniteDistribution,
    loss: &QuasimetricLoss,
) -> Result<f64> {
    nu.expect(|x| {
        let tf = chain::run_trajectory(rule, f, x)?;
        loss.eval(tf.final_answer(), &g.eval(x)?)
    })
}

/// Trajectory-mismatch risk `E_ν ℓ(f(Q^(K)_f), f(Q^(K)_g))`.
pub fn tmr(
    rule: &ChainRule,
    f: &AnswerMap,
    g: &AnswerMap,
    nu: &FiniteDistribution,
    loss: &QuasimetricLoss,
) -> Result<f64> {
    nu.expect(|x| {
        let tf = chain::run_trajectory(rule, f, x)?;
        let tg = chain::run_trajectory(rule, g, x)?;
        loss.eval(tf.final_answer(), &f.eval(tg.final_question())?)
    })
}

/// Oracle-trajectory risk `E_ν ℓ(f(Q^(K)_g), g(Q^(K)_g))`.
pub fn otr(
    rule: &ChainRule,
    f: &AnswerMap,
    g: &AnswerMap,
    nu: &FiniteDistribution,
    loss: &QuasimetricLoss,
) -> Result<f64> {
    nu.expect(|x| {
        let tg = chain::run_trajectory(rule, g, x)?;
        loss.eval(&f.eval(tg.final_question())?, tg.final_answer())
    })
}

/// Oracle-mismatch risk `E_ν ℓ(g(Q^(K)_g), g(X))`.
pub fn omr(
    rule: &ChainRule,
    g: &AnswerMap,
    nu: &FiniteDistribution,
    loss: &QuasimetricLoss,
) -> Result<f64> {
    nu.expect(|x| {
        let tg = chain::run_trajectory(rule, g, x)?;
        loss.eval(tg.final_answer(), &g.eval(x)?)
    })
}

/// All four risks together with the decomposition slacks.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RiskReport {
    pub reasoning: f64,
    pub tmr: f64,
    pub otr: f64,
    pub omr: f64,
    /// `tmr + otr - reasoning`.
    pub decomposition_slack: f64,
    /// `tmr + otr + omr - reasoning`.
    pub three_term_slack: f64,
    /// Every support point is (D_K, g)-recoverable.
    pub recoverable: bool,
    /// `reasoning ≤ tmr + otr` (within tolerance), required on recoverable support.
    pub two_term_holds: bool,
    /// `reasoning ≤ tmr + otr + omr` (within tolerance).
    pub three_term_holds: bool,
}

impl RiskReport {
    /// Whether every inequality that must hold does hold.
    pub fn consistent(&self) -> bool {
        self.three_term_holds && (!self.recoverable || self.two_term_holds)
    }
}

/// Trajectories of f and g from every support point, in support order.
pub(crate) fn paired_trajectories(
    rule: &ChainRule,
    f: &AnswerMap,
    g: &AnswerMap,
    nu: &FiniteDistribution,
) -> Result<Vec<(Trajectory, Trajectory)>> {
    nu.support()
        .iter()
        .map(|x| Ok((chain::run_trajectory(rule, f, x)?, chain::run_trajectory(rule, g, x)?)))
        .collect()
}

pub fn decomposition_check(
    rule: &ChainRule,
    f: &AnswerMap,
    g: &AnswerMap,
    nu: &FiniteDistribution,
    loss: &QuasimetricLoss,
) -> Result<RiskReport> {
    let space = rule.space();
    let trajs = paired_trajectories(rule, f, g, nu)?;
    let (mut reasoning, mut t, mut o, mut m) = (0.0, 0.0, 0.0, 0.0);
    let mut recoverable = true;
    for ((x, w), (tf, tg)) in nu.iter().zip(&trajs) {
        let gx = g.eval(x)?;
        let f_oracle = f.eval(tg.final_question())?;
        reasoning += w * loss.eval(tf.final_answer(), &gx)?;
        t += w * loss.eval(tf.final_answer(), &f_oracle)?;
        o += w * loss.eval(&f_oracle, tg.final_answer())?;
        m += w * loss.eval(tg.final_answer(), &gx)?;
        recoverable &= space.distance(&gx, tg.final_answer())? <= space.equality_tolerance();
    }
    let decomposition_slack = t + o - reasoning;
    let three_term_slack = t + o + m - reasoning;
    Ok(RiskReport {
        reasoning,
        tmr: t,
        otr: o,
        omr: m,
        decomposition_slack,
        three_term_slack,
        recoverable,
        two_term_holds: decomposition_slack >= -EQ_TOL,
        three_term_holds: three_term_slack >= -EQ_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{Coord, MapFamily, StepFamily};
    use crate::spaces::{Metric, Space};
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn r(v: f64) -> Point {
        Point::real(v).unwrap()
    }

    fn abs_loss() -> QuasimetricLoss {
        QuasimetricLoss::scaled(Metric::Absolute, 1.0).unwrap()
    }

    #[test]
    fn distribution_validation() {
        assert!(FiniteDistribution::new(vec![r(0.0), r(1.0)], vec![0.5, 0.5]).is_ok());
        assert!(FiniteDistribution::new(vec![r(0.0), r(1.0)], vec![0.5, 0.6]).is_err());
        assert!(FiniteDistribution::new(vec![r(0.0), r(0.0)], vec![0.5, 0.5]).is_err());
        assert!(FiniteDistribution::new(vec![r(0.0)], vec![]).is_err());
        assert!(FiniteDistribution::new(vec![r(0.0), r(1.0)], vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn empirical_merges_repeats() {
        let d = FiniteDistribution::empirical(&[r(1.0), r(2.0), r(1.0), r(1.0)]).unwrap();
        assert_eq!(d.support(), &[r(1.0), r(2.0)]);
        assert_eq!(d.weights(), &[0.75, 0.25]);
    }

    #[test]
    fn pushforward_of_a_dirac() {
        let d = pushforward(|x| Point::real(x.expect_real()? * 3.0), &FiniteDistribution::dirac(r(2.0)), 0.0)
            .unwrap();
        assert_eq!(d, FiniteDistribution::dirac(r(6.0)));
    }

    #[test]
    fn pushforward_merges_collapsed_points() {
        let nu = FiniteDistribution::empirical(&[r(0.0), r(1.0)]).unwrap();
        let d = pushforward(|_| Ok(r(0.0)), &nu, AXIOM_TOL).unwrap();
        assert_eq!(d.support(), &[r(0.0)]);
        assert_eq!(d.weights(), &[1.0]);
    }

    #[test]
    fn statistical_risk_direct() {
        let mu = FiniteDistribution::dirac(r(2.0));
        let v = statistical_risk(&AnswerMap::identity(), &AnswerMap::zero(), &mu, &abs_loss()).unwrap();
        assert_eq!(v, 2.0);
    }

    #[test]
    fn equal_maps_have_zero_risks() {
        let rule = ChainRule::new(
            Space::real_line(),
            vec![
                StepFamily::Affine { coord: Coord::Prompt, slope: 1.0, offset: 0.0 },
                StepFamily::Affine { coord: Coord::Question(1), slope: 1.0, offset: 0.0 },
            ],
        )
        .unwrap();
        let f = AnswerMap::affine(0.5, 1.0).unwrap();
        let nu = FiniteDistribution::empirical(&[r(-1.0), r(0.0), r(4.0)]).unwrap();
        let rep = decomposition_check(&rule, &f, &f, &nu, &abs_loss()).unwrap();
        assert!(rep.recoverable);
        assert_eq!(
            (rep.reasoning, rep.tmr, rep.otr, rep.omr, rep.decomposition_slack),
            (0.0, 0.0, 0.0, 0.0, 0.0)
        );
    }

    #[test]
    fn otr_is_a_statistical_risk_under_the_pushforward() {
        let rule = ChainRule::new(
            Space::real_line(),
            vec![
                StepFamily::Affine { coord: Coord::Prompt, slope: 0.5, offset: 1.0 },
                StepFamily::Affine { coord: Coord::Answer(1), slope: -1.0, offset: 2.0 },
            ],
        )
        .unwrap();
        let f = AnswerMap::affine(1.0, 0.3).unwrap();
        let g = AnswerMap::new(MapFamily::Abs).unwrap();
        let nu = FiniteDistribution::new(vec![r(-2.0), r(0.5), r(3.0)], vec![0.2, 0.3, 0.5]).unwrap();
        let direct = otr(&rule, &f, &g, &nu, &abs_loss()).unwrap();
        let pushed = oracle_pushforward(&rule, &g, &nu).unwrap();
        let via = statistical_risk(&f, &g, &pushed, &abs_loss()).unwrap();
        assert!((direct - via).abs() <= 1e-12);
    }

    #[test]
    fn sampling_follows_the_weights() {
        let nu = FiniteDistribution::new(vec![r(0.0), r(1.0)], vec![0.25, 0.75]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let ones = nu.sample_n(&mut rng, 20_000).iter().filter(|p| **p == r(1.0)).count();
        let freq = ones as f64 / 20_000.0;
        assert!((freq - 0.75).abs() < 0.02, "{freq}");
    }
}
