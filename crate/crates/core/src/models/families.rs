//! The five built-in reaction systems.

use super::{
    ensure, merge_params, resolve_sigma, ModelError, ModelFamily, ReactionModel, SigmaPolicy,
};
use crate::linalg;
use std::collections::BTreeMap;

/// Solves f(u) = 0 for the interior coexistence state and insists it is
/// strictly positive and inside the box.
fn coexistence(
    name: &'static str,
    a: &[Vec<f64>],
    b0: &[f64],
    box_hi: &[f64],
) -> Result<Vec<f64>, ModelError> {
    let rhs: Vec<f64> = b0.iter().map(|v| -v).collect();
    let state = linalg::solve(a, &rhs).ok_or_else(|| ModelError::Param {
        model: name,
        constraint: "interaction matrix is singular; no isolated coexistence state".into(),
    })?;
    for (u, hi) in state.iter().zip(box_hi) {
        if !(*u > 0.0 && *u <= *hi + 1e-12) {
            return Err(ModelError::Param {
                model: name,
                constraint: format!(
                    "coexistence state {state:?} is not strictly positive inside the box"
                ),
            });
        }
    }
    Ok(state)
}

/// One prey u1 with logistic growth, one predator u2 that dies out alone.
pub struct PredatorPreyTwo;

impl ModelFamily for PredatorPreyTwo {
    fn name(&self) -> &'static str {
        "pp2"
    }

    fn about(&self) -> &'static str {
        "prey with logistic growth invaded by a single predator"
    }

    fn constraints(&self) -> &'static str {
        "r1, r2, a > 0; b > 1; a*b < 1"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[("r1", 1.0), ("r2", 1.0), ("a", 0.4), ("b", 2.0)]
    }

    fn sigma_policy(&self) -> SigmaPolicy {
        SigmaPolicy::BuiltIn
    }

    fn build(
        &self,
        params: &BTreeMap<String, f64>,
        sigma: Option<&[f64]>,
    ) -> Result<ReactionModel, ModelError> {
        let p = merge_params(self.name(), self.defaults(), params)?;
        let (r1, r2, a, b) = (p["r1"], p["r2"], p["a"], p["b"]);
        ensure(r1 > 0.0 && r2 > 0.0 && a > 0.0, self.name(), "r1, r2, a must be positive")?;
        ensure(b > 1.0, self.name(), "b must exceed 1")?;
        ensure(a * b < 1.0, self.name(), "a*b must stay below 1")?;
        let mat = vec![vec![-r1, -r1 * a], vec![r2 * b, -r2]];
        let b0 = vec![r1, -r2];
        let sig = resolve_sigma(
            self.name(),
            self.sigma_policy(),
            Some(vec![1.0 / r1, a / (r2 * b)]),
            sigma,
            2,
        )?;
        let denom = 1.0 + a * b;
        ReactionModel::assemble(
            self.name(),
            mat,
            b0,
            sig,
            vec![1.0, b - 1.0],
            r1.max(r2 * (b - 1.0)),
            r2 * (b - 1.0),
            vec![1.0, 0.0],
            Some(vec![(1.0 + a) / denom, (b - 1.0) / denom]),
            p,
        )
    }
}

/// Two weakly competing predators u1, u2 share one prey u3.
pub struct CompetitorsThree;

impl ModelFamily for CompetitorsThree {
    fn name(&self) -> &'static str {
        "competitors3"
    }

    fn about(&self) -> &'static str {
        "two weakly competing predators invading a single prey"
    }

    fn constraints(&self) -> &'static str {
        "r1, r2, r3 > 0; b > 1; 0 < a < 1/(2(b-1)); 0 < h, k < 1; sigma required"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[
            ("r1", 1.0),
            ("r2", 1.0),
            ("r3", 1.0),
            ("a", 0.3),
            ("b", 2.0),
            ("h", 0.5),
            ("k", 0.5),
        ]
    }

    fn sigma_policy(&self) -> SigmaPolicy {
        SigmaPolicy::Required
    }

    fn build(
        &self,
        params: &BTreeMap<String, f64>,
        sigma: Option<&[f64]>,
    ) -> Result<ReactionModel, ModelError> {
        let p = merge_params(self.name(), self.defaults(), params)?;
        let (r1, r2, r3) = (p["r1"], p["r2"], p["r3"]);
        let (a, b, h, k) = (p["a"], p["b"], p["h"], p["k"]);
        ensure(r1 > 0.0 && r2 > 0.0 && r3 > 0.0, self.name(), "rates must be positive")?;
        ensure(b > 1.0, self.name(), "b must exceed 1")?;
        ensure(
            a > 0.0 && a < 1.0 / (2.0 * (b - 1.0)),
            self.name(),
            "a must lie in (0, 1/(2(b-1)))",
        )?;
        ensure(h > 0.0 && h < 1.0 && k > 0.0 && k < 1.0, self.name(), "h, k must lie in (0, 1)")?;
        let mat = vec![
            vec![-r1, -r1 * h, r1 * b],
            vec![-r2 * k, -r2, r2 * b],
            vec![-r3 * a, -r3 * a, -r3],
        ];
        let b0 = vec![-r1, -r2, r3];
        let box_hi = vec![b - 1.0, b - 1.0, 1.0];
        let e_minus = coexistence(self.name(), &mat, &b0, &box_hi)?;
        let sig = resolve_sigma(self.name(), self.sigma_policy(), None, sigma, 3)?;
        ReactionModel::assemble(
            self.name(),
            mat,
            b0,
            sig,
            box_hi,
            (r1 * (b - 1.0)).max(r2 * (b - 1.0)).max(r3),
            r1.max(r2) * (b - 1.0),
            vec![0.0, 0.0, 1.0],
            Some(e_minus),
            p,
        )
    }
}

/// Two weakly competing preys u1, u2 invaded by one predator u3.
pub struct PreysThreeTyj;

impl ModelFamily for PreysThreeTyj {
    fn name(&self) -> &'static str {
        "preys3_tyj"
    }

    fn about(&self) -> &'static str {
        "predator invading two weakly competing preys"
    }

    fn constraints(&self) -> &'static str {
        "r1, r2, r3, a > 0; b > 0; 0 < h, k < 1; predator invasion rate positive; sigma required"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[
            ("r1", 1.0),
            ("r2", 1.0),
            ("r3", 1.0),
            ("a", 0.5),
            ("b", 1.5),
            ("h", 0.5),
            ("k", 0.5),
        ]
    }

    fn sigma_policy(&self) -> SigmaPolicy {
        SigmaPolicy::Required
    }

    fn build(
        &self,
        params: &BTreeMap<String, f64>,
        sigma: Option<&[f64]>,
    ) -> Result<ReactionModel, ModelError> {
        let p = merge_params(self.name(), self.defaults(), params)?;
        let (r1, r2, r3) = (p["r1"], p["r2"], p["r3"]);
        let (a, b, h, k) = (p["a"], p["b"], p["h"], p["k"]);
        ensure(
            r1 > 0.0 && r2 > 0.0 && r3 > 0.0 && a > 0.0 && b > 0.0,
            self.name(),
            "rates, a, b must be positive",
        )?;
        ensure(h > 0.0 && h < 1.0 && k > 0.0 && k < 1.0, self.name(), "h, k must lie in (0, 1)")?;
        // Prey-only equilibrium of the competition subsystem.
        let up = (1.0 - h) / (1.0 - h * k);
        let vp = (1.0 - k) / (1.0 - h * k);
        let invasion = r3 * (b * (up + vp) - 1.0);
        ensure(
            invasion > 0.0,
            self.name(),
            "predator cannot invade the prey-only state (b(up + vp) <= 1)",
        )?;
        let mat = vec![
            vec![-r1, -r1 * h, -r1 * a],
            vec![-r2 * k, -r2, -r2 * a],
            vec![r3 * b, r3 * b, -r3],
        ];
        let b0 = vec![r1, r2, -r3];
        let box_hi = vec![1.0, 1.0, 2.0 * b - 1.0];
        let e_minus = coexistence(self.name(), &mat, &b0, &box_hi)?;
        let sig = resolve_sigma(self.name(), self.sigma_policy(), None, sigma, 3)?;
        ReactionModel::assemble(
            self.name(),
            mat,
            b0,
            sig,
            box_hi,
            r1.max(r2).max(r3 * (2.0 * b - 1.0)),
            invasion,
            vec![up, vp, 0.0],
            Some(e_minus),
            p,
        )
    }
}

/// Two preys u1, u2 without mutual competition, one predator u3 with
/// optional self-limitation gamma.
pub struct PreysThreeZyl;

impl ModelFamily for PreysThreeZyl {
    fn name(&self) -> &'static str {
        "preys3_zyl"
    }

    fn about(&self) -> &'static str {
        "predator invading two independent preys, optional predator self-limitation"
    }

    fn constraints(&self) -> &'static str {
        "r1, r2, r3, a1, a2, b1, b2 > 0; b1 + b2 > 1; gamma >= 0"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[
            ("r1", 1.0),
            ("r2", 1.0),
            ("r3", 1.0),
            ("a1", 0.5),
            ("a2", 0.5),
            ("b1", 1.0),
            ("b2", 1.0),
            ("gamma", 0.5),
        ]
    }

    fn sigma_policy(&self) -> SigmaPolicy {
        SigmaPolicy::BuiltIn
    }

    fn build(
        &self,
        params: &BTreeMap<String, f64>,
        sigma: Option<&[f64]>,
    ) -> Result<ReactionModel, ModelError> {
        let p = merge_params(self.name(), self.defaults(), params)?;
        let (r1, r2, r3) = (p["r1"], p["r2"], p["r3"]);
        let (a1, a2, b1, b2, gamma) = (p["a1"], p["a2"], p["b1"], p["b2"], p["gamma"]);
        ensure(
            r1 > 0.0 && r2 > 0.0 && r3 > 0.0 && a1 > 0.0 && a2 > 0.0 && b1 > 0.0 && b2 > 0.0,
            self.name(),
            "rates and interaction coefficients must be positive",
        )?;
        ensure(b1 + b2 > 1.0, self.name(), "b1 + b2 must exceed 1")?;
        ensure(gamma >= 0.0, self.name(), "gamma must be nonnegative")?;
        let mat = vec![
            vec![-r1, 0.0, -r1 * a1],
            vec![0.0, -r2, -r2 * a2],
            vec![r3 * b1, r3 * b2, -r3 * gamma],
        ];
        let b0 = vec![r1, r2, -r3];
        let u3 = (b1 + b2 - 1.0) / (a1 * b1 + a2 * b2 + gamma);
        let e_minus = vec![1.0 - a1 * u3, 1.0 - a2 * u3, u3];
        ensure(
            e_minus[0] > 0.0 && e_minus[1] > 0.0,
            self.name(),
            "coexistence state must keep both preys positive (a_i u3 < 1)",
        )?;
        let sig = resolve_sigma(
            self.name(),
            self.sigma_policy(),
            Some(vec![
                1.0 / r1,
                a1 * b2 / (r2 * a2 * b1),
                a1 / (r3 * b1),
            ]),
            sigma,
            3,
        )?;
        ReactionModel::assemble(
            self.name(),
            mat,
            b0,
            sig,
            vec![1.0, 1.0, b1 + b2 - 1.0],
            r1.max(r2).max(r3 * (b1 + b2 - 1.0)),
            r3 * (b1 + b2 - 1.0),
            vec![1.0, 1.0, 0.0],
            Some(e_minus),
            p,
        )
    }
}

/// Susceptible density u1 and infective density u2 with constant removal.
/// The invaded-side limit is a run outcome, not model data, so e_minus is
/// absent here.
pub struct Epidemic;

impl ModelFamily for Epidemic {
    fn name(&self) -> &'static str {
        "epidemic"
    }

    fn about(&self) -> &'static str {
        "infection front moving into a susceptible population"
    }

    fn constraints(&self) -> &'static str {
        "beta, gamma, s_star > 0; beta*s_star > gamma"
    }

    fn defaults(&self) -> &'static [(&'static str, f64)] {
        &[("beta", 2.0), ("gamma", 1.0), ("s_star", 1.0)]
    }

    fn sigma_policy(&self) -> SigmaPolicy {
        SigmaPolicy::BuiltIn
    }

    fn build(
        &self,
        params: &BTreeMap<String, f64>,
        sigma: Option<&[f64]>,
    ) -> Result<ReactionModel, ModelError> {
        let p = merge_params(self.name(), self.defaults(), params)?;
        let (beta, gamma, s_star) = (p["beta"], p["gamma"], p["s_star"]);
        ensure(
            beta > 0.0 && gamma > 0.0 && s_star > 0.0,
            self.name(),
            "beta, gamma, s_star must be positive",
        )?;
        ensure(
            beta * s_star > gamma,
            self.name(),
            "beta*s_star must exceed gamma (otherwise no invasion)",
        )?;
        let mat = vec![vec![0.0, -beta], vec![beta, 0.0]];
        let b0 = vec![0.0, -gamma];
        let sig = resolve_sigma(
            self.name(),
            self.sigma_policy(),
            Some(vec![1.0, 1.0]),
            sigma,
            2,
        )?;
        ReactionModel::assemble(
            self.name(),
            mat,
            b0,
            sig,
            vec![s_star, f64::INFINITY],
            beta * s_star - gamma,
            beta * s_star - gamma,
            vec![s_star, 0.0],
            None,
            p,
        )
    }
}
