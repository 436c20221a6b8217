//! Reaction systems with entropy weights, invariant boxes, and growth bounds.
//!
//! Every built-in nonlinearity has the form u_i f_i(u) with f affine,
//! f(u) = A u + b0 (rates absorbed into A and b0). That shape makes the
//! sign question for the entropy cross term an exact eigenvalue test on
//! the symmetrized weighted interaction matrix.

mod families;

pub use families::{
    CompetitorsThree, Epidemic, PredatorPreyTwo, PreysThreeTyj, PreysThreeZyl,
};

use crate::linalg;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model `{0}`")]
    UnknownName(String),
    #[error("model {model}: {constraint}")]
    Param {
        model: &'static str,
        constraint: String,
    },
    #[error("model {0} does not ship entropy weights; supply sigma explicitly")]
    SigmaRequired(&'static str),
    #[error("sigma needs {expected} entries, got {got}")]
    SigmaLength { expected: usize, got: usize },
    #[error("sigma entries must be positive and finite")]
    SigmaPositive,
    #[error("model {model}: internal consistency check failed: {what}")]
    Internal {
        model: &'static str,
        what: String,
    },
}

/// Whether a family carries its own entropy weights or demands them.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SigmaPolicy {
    BuiltIn,
    Required,
}

/// Result of the exact sign test for the entropy cross term.
#[derive(Clone, Debug)]
pub struct SigmaReport {
    /// True when the largest eigenvalue is at most 1e-12.
    pub valid: bool,
    pub max_eigenvalue: f64,
    /// All eigenvalues of the symmetrized weighted interaction matrix,
    /// ascending.
    pub eigenvalues: Vec<f64>,
}

/// Componentwise supremum check of the per-capita rates along a profile.
#[derive(Clone, Debug)]
pub struct GrowthCheck {
    /// True when every component supremum is at most the growth bound.
    pub ok: bool,
    /// True when the sampled states stay inside the invariant box.
    pub in_box: bool,
    pub sup_f: Vec<f64>,
}

/// An m-component reaction system u_i' = u_i f_i(u), f(u) = A u + b0.
#[derive(Clone, Debug)]
pub struct ReactionModel {
    name: String,
    a: Vec<Vec<f64>>,
    b0: Vec<f64>,
    sigma: Vec<f64>,
    /// Componentwise upper bounds of the invariant box [0, hi]; +infinity
    /// marks an unbounded component.
    box_hi: Vec<f64>,
    r_bound: f64,
    /// Linear growth rate of the invaded state; the infimum problem with
    /// this rate gives the model's own minimal speed.
    spreading_rate: f64,
    e_plus: Vec<f64>,
    /// None when the invaded-side limit is a measured output rather than
    /// model data.
    e_minus: Option<Vec<f64>>,
    params: BTreeMap<String, f64>,
}

impl ReactionModel {
    /// Assembles and validates a model. Intended for family builders;
    /// the checks guard the catalog against inconsistent entries.
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn assemble(
        name: &'static str,
        a: Vec<Vec<f64>>,
        b0: Vec<f64>,
        sigma: Vec<f64>,
        box_hi: Vec<f64>,
        r_bound: f64,
        spreading_rate: f64,
        e_plus: Vec<f64>,
        e_minus: Option<Vec<f64>>,
        params: BTreeMap<String, f64>,
    ) -> Result<Self, ModelError> {
        let m = b0.len();
        let shape_ok = a.len() == m
            && a.iter().all(|row| row.len() == m)
            && sigma.len() == m
            && box_hi.len() == m
            && e_plus.len() == m
            && e_minus.as_ref().map_or(true, |e| e.len() == m);
        if !shape_ok {
            return Err(ModelError::Internal {
                model: name,
                what: "mismatched dimensions".into(),
            });
        }
        let model = ReactionModel {
            name: name.to_string(),
            a,
            b0,
            sigma,
            box_hi,
            r_bound,
            spreading_rate,
            e_plus,
            e_minus,
            params,
        };
        model.validate(name)?;
        Ok(model)
    }

    fn validate(&self, name: &'static str) -> Result<(), ModelError> {
        let fail = |what: String| Err(ModelError::Internal { model: name, what });
        if !self.sigma.iter().all(|s| s.is_finite() && *s > 0.0) {
            return fail("nonpositive sigma".into());
        }
        if !(self.r_bound > 0.0) || !(self.spreading_rate > 0.0) {
            return fail(format!(
                "bounds must be positive: R = {}, spreading rate = {}",
                self.r_bound, self.spreading_rate
            ));
        }
        let mut states: Vec<&[f64]> = vec![&self.e_plus];
        if let Some(e) = &self.e_minus {
            states.push(e);
        }
        for state in states {
            for (u, hi) in state.iter().zip(&self.box_hi) {
                if !(*u >= 0.0 && *u <= *hi) {
                    return fail(format!("equilibrium component {u} escapes [0, {hi}]"));
                }
            }
            let rate = self.reaction(state);
            if rate.iter().any(|v| v.abs() > 1e-10) {
                return fail(format!("reaction at equilibrium is {rate:?}, not zero"));
            }
        }
        // The growth bound must dominate each per-capita rate on the box;
        // for affine f the supremum sits at a corner.
        for i in 0..self.components() {
            let mut hi = self.b0[i];
            for (aij, cap) in self.a[i].iter().zip(&self.box_hi) {
                if *aij > 0.0 {
                    hi += aij * cap;
                }
            }
            if !(hi <= self.r_bound + 1e-9) {
                return fail(format!(
                    "component {i} reaches rate {hi} above the bound {}",
                    self.r_bound
                ));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn components(&self) -> usize {
        self.b0.len()
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Upper bounds of the invariant box; lower bounds are all zero.
    pub fn invariant_box(&self) -> &[f64] {
        &self.box_hi
    }

    pub fn r_bound(&self) -> f64 {
        self.r_bound
    }

    pub fn spreading_rate(&self) -> f64 {
        self.spreading_rate
    }

    pub fn e_plus(&self) -> &[f64] {
        &self.e_plus
    }

    pub fn e_minus(&self) -> Option<&[f64]> {
        self.e_minus.as_deref()
    }

    pub fn params(&self) -> &BTreeMap<String, f64> {
        &self.params
    }

    pub fn interaction(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn intercept(&self) -> &[f64] {
        &self.b0
    }

    /// Same model with replacement entropy weights. Positivity and length
    /// are enforced; whether the weights make the cross term nonpositive
    /// is deliberately left to sigma_validity, so invalid choices can be
    /// studied.
    pub fn with_sigma(&self, sigma: &[f64]) -> Result<Self, ModelError> {
        if sigma.len() != self.components() {
            return Err(ModelError::SigmaLength {
                expected: self.components(),
                got: sigma.len(),
            });
        }
        if !sigma.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(ModelError::SigmaPositive);
        }
        let mut out = self.clone();
        out.sigma = sigma.to_vec();
        Ok(out)
    }

    /// Per-capita rates f(u) = A u + b0.
    pub fn percapita_into(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = self.b0[i];
            for (aij, uj) in self.a[i].iter().zip(u) {
                acc += aij * uj;
            }
            *o = acc;
        }
    }

    pub fn percapita(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components()];
        self.percapita_into(u, &mut out);
        out
    }

    /// Reaction terms u_i f_i(u).
    pub fn reaction_into(&self, u: &[f64], out: &mut [f64]) {
        self.percapita_into(u, out);
        for (o, ui) in out.iter_mut().zip(u) {
            *o *= ui;
        }
    }

    pub fn reaction(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.components()];
        self.reaction_into(u, &mut out);
        out
    }

    /// The weighted cross term sum_i sigma_i (u_i - phi_i)(f_i(u) - f_i(phi)).
    /// For affine f this is the quadratic form d' diag(sigma) A d in
    /// d = u - phi.
    pub fn cross_term(&self, u: &[f64], phi: &[f64]) -> f64 {
        let m = self.components();
        assert!(u.len() == m && phi.len() == m);
        let mut total = 0.0;
        for i in 0..m {
            let di = u[i] - phi[i];
            let mut row = 0.0;
            for j in 0..m {
                row += self.a[i][j] * (u[j] - phi[j]);
            }
            total += self.sigma[i] * di * row;
        }
        total
    }

    /// Exact nonpositivity test for the cross term: the largest eigenvalue
    /// of S = (diag(sigma) A + A' diag(sigma)) / 2 decides the sign of the
    /// quadratic form for every state pair.
    pub fn sigma_validity(&self) -> SigmaReport {
        let m = self.components();
        let mut s = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..m {
                s[i][j] = 0.5 * (self.sigma[i] * self.a[i][j] + self.sigma[j] * self.a[j][i]);
            }
        }
        let eigenvalues = linalg::sym_eigenvalues(&s);
        let max_eigenvalue = *eigenvalues.last().expect("nonempty");
        SigmaReport {
            valid: max_eigenvalue <= 1e-12,
            max_eigenvalue,
            eigenvalues,
        }
    }

    /// Supremum of each per-capita rate along sampled states, checked
    /// against the growth bound. `components` holds one sample array per
    /// model component.
    pub fn growth_check(&self, components: &[Vec<f64>]) -> GrowthCheck {
        let m = self.components();
        assert_eq!(components.len(), m, "one sample array per component");
        let len = components[0].len();
        assert!(components.iter().all(|c| c.len() == len));
        let mut in_box = true;
        let mut sup_f = vec![f64::NEG_INFINITY; m];
        let mut state = vec![0.0; m];
        let mut rates = vec![0.0; m];
        for idx in 0..len {
            for (i, comp) in components.iter().enumerate() {
                state[i] = comp[idx];
                if !(state[i] >= -1e-12 && state[i] <= self.box_hi[i] + 1e-12) {
                    in_box = false;
                }
            }
            self.percapita_into(&state, &mut rates);
            for (s, r) in sup_f.iter_mut().zip(&rates) {
                *s = s.max(*r);
            }
        }
        let ok = sup_f.iter().all(|s| *s <= self.r_bound + 1e-8);
        GrowthCheck { ok, in_box, sup_f }
    }

    /// Largest |f_i| over [0, caps]; affine, so evaluated at box corners.
    /// Used for reaction-rate time-step control.
    pub fn max_rate(&self, caps: &[f64]) -> f64 {
        assert_eq!(caps.len(), self.components());
        let mut worst = 0.0_f64;
        for i in 0..self.components() {
            let mut hi = self.b0[i];
            let mut lo = self.b0[i];
            for (aij, cap) in self.a[i].iter().zip(caps) {
                if *aij > 0.0 {
                    hi += aij * cap;
                } else {
                    lo += aij * cap;
                }
            }
            worst = worst.max(hi.abs()).max(lo.abs());
        }
        worst
    }
}

/// A named constructor in the model catalog.
pub trait ModelFamily: Send + Sync {
    fn name(&self) -> &'static str;
    /// One-line description for catalog listings.
    fn about(&self) -> &'static str;
    /// Human-readable parameter constraints for catalog listings.
    fn constraints(&self) -> &'static str;
    fn defaults(&self) -> &'static [(&'static str, f64)];
    fn sigma_policy(&self) -> SigmaPolicy;
    fn build(
        &self,
        params: &BTreeMap<String, f64>,
        sigma: Option<&[f64]>,
    ) -> Result<ReactionModel, ModelError>;
}

/// Registry of model families, keyed by name.
pub struct ModelCatalog {
    families: BTreeMap<&'static str, Box<dyn ModelFamily>>,
}

impl ModelCatalog {
    pub fn empty() -> Self {
        ModelCatalog {
            families: BTreeMap::new(),
        }
    }

    /// Catalog holding the five built-in systems.
    pub fn builtin() -> Self {
        let mut c = Self::empty();
        c.register(Box::new(PredatorPreyTwo));
        c.register(Box::new(CompetitorsThree));
        c.register(Box::new(PreysThreeTyj));
        c.register(Box::new(PreysThreeZyl));
        c.register(Box::new(Epidemic));
        c
    }

    pub fn register(&mut self, family: Box<dyn ModelFamily>) {
        self.families.insert(family.name(), family);
    }

    pub fn get(&self, name: &str) -> Option<&dyn ModelFamily> {
        self.families.get(name).map(|f| f.as_ref())
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.families.keys().copied().collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &dyn ModelFamily> {
        self.families.values().map(|f| f.as_ref())
    }

    pub fn build(
        &self,
        name: &str,
        params: &BTreeMap<String, f64>,
        sigma: Option<&[f64]>,
    ) -> Result<ReactionModel, ModelError> {
        let family = self
            .get(name)
            .ok_or_else(|| ModelError::UnknownName(name.to_string()))?;
        family.build(params, sigma)
    }
}

impl Default for ModelCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Overlays user parameters on the family defaults, rejecting unknown names.
pub(crate) fn merge_params(
    model: &'static str,
    defaults: &'static [(&'static str, f64)],
    given: &BTreeMap<String, f64>,
) -> Result<BTreeMap<String, f64>, ModelError> {
    let mut merged: BTreeMap<String, f64> = defaults
        .iter()
        .map(|(k, v)| (k.to_string(), *v))
        .collect();
    for (k, v) in given {
        if !merged.contains_key(k) {
            return Err(ModelError::Param {
                model,
                constraint: format!("unknown parameter `{k}`"),
            });
        }
        if !v.is_finite() {
            return Err(ModelError::Param {
                model,
                constraint: format!("parameter `{k}` must be finite"),
            });
        }
        merged.insert(k.clone(), *v);
    }
    Ok(merged)
}

pub(crate) fn ensure(
    cond: bool,
    model: &'static str,
    constraint: &str,
) -> Result<(), ModelError> {
    if cond {
        Ok(())
    } else {
        Err(ModelError::Param {
            model,
            constraint: constraint.to_string(),
        })
    }
}

/// Resolves the sigma for a family: built-in families may be overridden,
/// required families must receive one.
pub(crate) fn resolve_sigma(
    name: &'static str,
    policy: SigmaPolicy,
    builtin: Option<Vec<f64>>,
    given: Option<&[f64]>,
    m: usize,
) -> Result<Vec<f64>, ModelError> {
    let sigma = match (given, policy) {
        (Some(s), _) => s.to_vec(),
        (None, SigmaPolicy::BuiltIn) => builtin.expect("built-in sigma"),
        (None, SigmaPolicy::Required) => return Err(ModelError::SigmaRequired(name)),
    };
    if sigma.len() != m {
        return Err(ModelError::SigmaLength {
            expected: m,
            got: sigma.len(),
        });
    }
    if !sigma.iter().all(|s| s.is_finite() && *s > 0.0) {
        return Err(ModelError::SigmaPositive);
    }
    Ok(sigma)
}
