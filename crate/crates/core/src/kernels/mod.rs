//! Dispersal kernels and their discrete convolution machinery.
//!
//! A dispersal kernel is a symmetric probability density J on the line. The
//! evolution law uses the nonlocal operator N[u] = J*u - u, so everything a
//! kernel must provide is: pointwise evaluation, a truncation radius beyond
//! which it is numerically zero, and the moment generating function
//! M(lambda) = integral of J(y) e^(lambda y) dy together with the supremum
//! lambda_hat of its convergence range.
//!
//! Kernel families (gaussian, laplace, compact_bump, tabulated) live behind
//! the [`KernelFamily`] trait and are selected by name through a
//! [`KernelRegistry`], which is how configuration files and the CLI choose a
//! kernel at run time.

mod conv;
mod grid;
pub(crate) mod quad;
mod shapes;

pub use conv::{d1_c4, d1_c4_symbol, d1_c6, reference_convolution, ConvMode, Convolver};
pub use grid::Grid;
pub use shapes::{CompactBump, Gaussian, Laplace, Tabulated};

use quad::{growing_window, refined_trapezoid, QuadOpts};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

/// Density threshold defining the truncation radius: |J| < 1e-16 is below
/// double-precision relevance next to O(1) field values.
pub const TRUNCATION_DENSITY: f64 = 1e-16;

/// Errors from kernel construction, evaluation, and convolution setup.
#[derive(Debug, thiserror::Error)]
pub enum KernelError {
    #[error("unknown kernel kind `{0}`")]
    UnknownKind(String),
    #[error("kernel parameter `{name}` = {value}: {reason}")]
    BadParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("missing kernel parameter `{0}`")]
    MissingParameter(&'static str),
    #[error("unexpected kernel parameter `{0}`")]
    UnexpectedParameter(String),
    #[error("kernel kind `{0}` requires a sample file")]
    MissingFile(&'static str),
    #[error("mgf domain: lambda = {lambda} is outside [0, {lambda_hat})")]
    MgfDomain { lambda: f64, lambda_hat: f64 },
    #[error("mgf quadrature failed to stabilize at lambda = {lambda} (last estimate {last})")]
    QuadratureDivergence { lambda: f64, last: f64 },
    #[error("quadrature failed to settle while computing {what}")]
    QuadratureFailure { what: &'static str },
    #[error("tabulated kernel `{origin}`: {reason}")]
    Table { origin: String, reason: String },
    #[error("ghost width {ghost} nodes x spacing {dx} does not cover the truncation radius {radius}")]
    GridMismatch { ghost: usize, dx: f64, radius: f64 },
    #[error("grid: {0}")]
    Grid(String),
    #[error("reading kernel samples: {0}")]
    Io(#[from] std::io::Error),
}

/// One kernel shape: the minimal surface a density must expose. Implementors
/// are immutable after construction and safe to share across threads.
pub trait KernelShape: Send + Sync {
    /// Human-readable instance description, e.g. `gaussian{s=1}`.
    fn describe(&self) -> String;
    /// Raw density J(y), without truncation clipping.
    fn density_raw(&self, y: f64) -> f64;
    /// Closed-form M(lambda) when one exists; `None` routes to quadrature.
    fn closed_form_mgf(&self, lambda: f64) -> Option<f64>;
    /// Supremum of the mgf convergence range (may be `f64::INFINITY`).
    fn lambda_hat(&self) -> f64;
    /// Radius beyond which |J| < [`TRUNCATION_DENSITY`].
    fn truncation_radius(&self) -> f64;
    /// Support edge for compactly supported densities, else `None`.
    fn support_radius(&self) -> Option<f64>;
}

/// A symmetric unit-mass dispersal kernel. Cheap to clone (shared shape).
#[derive(Clone)]
pub struct DispersalKernel {
    shape: Arc<dyn KernelShape>,
}

impl fmt::Debug for DispersalKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DispersalKernel({})", self.shape.describe())
    }
}

impl DispersalKernel {
    pub fn from_shape(shape: Arc<dyn KernelShape>) -> Self {
        DispersalKernel { shape }
    }

    /// Instance description, e.g. `laplace{alpha=2}`.
    pub fn describe(&self) -> String {
        self.shape.describe()
    }

    /// Density J(y); exactly 0 beyond the truncation radius.
    pub fn evaluate(&self, y: f64) -> f64 {
        if y.abs() > self.truncation_radius() {
            0.0
        } else {
            self.shape.density_raw(y)
        }
    }

    /// Radius beyond which the density is numerically zero.
    pub fn truncation_radius(&self) -> f64 {
        self.shape.truncation_radius()
    }

    /// Supremum of the mgf convergence range.
    pub fn lambda_hat(&self) -> f64 {
        self.shape.lambda_hat()
    }

    /// M(lambda) for 0 <= lambda < lambda_hat, by closed form when the shape
    /// has one and by quadrature otherwise.
    pub fn mgf(&self, lambda: f64) -> Result<f64, KernelError> {
        if !(0.0..self.lambda_hat()).contains(&lambda) {
            return Err(KernelError::MgfDomain {
                lambda,
                lambda_hat: self.lambda_hat(),
            });
        }
        match self.shape.closed_form_mgf(lambda) {
            Some(m) => Ok(m),
            None => self.mgf_quadrature(lambda),
        }
    }

    /// M(lambda) by quadrature of the raw density, regardless of whether a
    /// closed form exists. Compact supports integrate over their exact
    /// window; unbounded ones grow the window until the weighted tail stops
    /// contributing, so a slowly decaying weighted integrand (lambda close
    /// to lambda_hat) is still captured. Divergence is reported, not hidden.
    pub fn mgf_quadrature(&self, lambda: f64) -> Result<f64, KernelError> {
        if lambda < 0.0 {
            return Err(KernelError::MgfDomain {
                lambda,
                lambda_hat: self.lambda_hat(),
            });
        }
        let o = QuadOpts::default();
        let f = |y: f64| self.shape.density_raw(y) * (lambda * y).exp();
        let res = match self.shape.support_radius() {
            Some(r) => refined_trapezoid(f, -r, r, &o),
            None => growing_window(f, self.truncation_radius().max(1.0), &o),
        };
        res.map_err(|e| KernelError::QuadratureDivergence {
            lambda,
            last: e.last,
        })
    }

    /// Numerical mass, by trapezoidal quadrature over the truncation window.
    /// Unit mass to 1e-10 is a construction invariant of every family.
    pub fn quadrature_mass(&self) -> Result<f64, KernelError> {
        let o = QuadOpts {
            abs_tol: 1e-12,
            ..QuadOpts::default()
        };
        let r = self.truncation_radius();
        refined_trapezoid(|y| self.evaluate(y), -r, r, &o)
            .map_err(|_| KernelError::QuadratureFailure { what: "kernel mass" })
    }
}

/// Declarative kernel selection, as embedded in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    /// Family name: one of the registered kinds.
    pub kind: String,
    /// Family parameters by name (e.g. `s`, `alpha`, `radius`).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, f64>,
    /// Sample file for tabulated kernels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

impl KernelSpec {
    pub fn analytic(kind: &str, params: &[(&str, f64)]) -> Self {
        KernelSpec {
            kind: kind.to_string(),
            params: params
                .iter()
                .map(|(k, v)| (k.to_string(), *v))
                .collect(),
            file: None,
        }
    }
}

/// A buildable kernel family, registered by name.
pub trait KernelFamily: Send + Sync {
    fn name(&self) -> &'static str;
    /// One-line parameter summary for CLI listings.
    fn params_help(&self) -> &'static str;
    fn build(&self, spec: &KernelSpec) -> Result<DispersalKernel, KernelError>;
}

/// Name-keyed registry of kernel families. Immutable after setup; iteration
/// order is the name order, so listings are deterministic.
pub struct KernelRegistry {
    families: BTreeMap<&'static str, Box<dyn KernelFamily>>,
}

impl KernelRegistry {
    /// Registry with the four built-in families.
    pub fn builtin() -> Self {
        let mut reg = KernelRegistry {
            families: BTreeMap::new(),
        };
        reg.register(Box::new(shapes::GaussianFamily));
        reg.register(Box::new(shapes::LaplaceFamily));
        reg.register(Box::new(shapes::CompactBumpFamily));
        reg.register(Box::new(shapes::TabulatedFamily));
        reg
    }

    pub fn register(&mut self, family: Box<dyn KernelFamily>) {
        self.families.insert(family.name(), family);
    }

    pub fn get(&self, name: &str) -> Option<&dyn KernelFamily> {
        self.families.get(name).map(|b| b.as_ref())
    }

    pub fn families(&self) -> impl Iterator<Item = &dyn KernelFamily> {
        self.families.values().map(|b| b.as_ref())
    }

    pub fn build(&self, spec: &KernelSpec) -> Result<DispersalKernel, KernelError> {
        self.get(&spec.kind)
            .ok_or_else(|| KernelError::UnknownKind(spec.kind.clone()))?
            .build(spec)
    }
}

impl Default for KernelRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Checks that a parameter map contains exactly the allowed names.
pub(crate) fn expect_params(
    spec: &KernelSpec,
    allowed: &[&'static str],
) -> Result<(), KernelError> {
    for key in spec.params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(KernelError::UnexpectedParameter(key.clone()));
        }
    }
    Ok(())
}

pub(crate) fn require_param(spec: &KernelSpec, name: &'static str) -> Result<f64, KernelError> {
    spec.params
        .get(name)
        .copied()
        .ok_or(KernelError::MissingParameter(name))
}

pub(crate) fn positive_param(
    name: &'static str,
    value: f64,
) -> Result<f64, KernelError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(KernelError::BadParameter {
            name,
            value,
            reason: "must be a positive finite number",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_lists_builtin_families() {
        let reg = KernelRegistry::builtin();
        let names: Vec<&str> = reg.families().map(|f| f.name()).collect();
        assert_eq!(names, vec!["compact_bump", "gaussian", "laplace", "tabulated"]);
    }

    #[test]
    fn unknown_kind_is_an_error() {
        let reg = KernelRegistry::builtin();
        let spec = KernelSpec::analytic("cauchy", &[("g", 1.0)]);
        assert!(matches!(
            reg.build(&spec),
            Err(KernelError::UnknownKind(_))
        ));
    }

    #[test]
    fn unexpected_parameter_is_an_error() {
        let reg = KernelRegistry::builtin();
        let spec = KernelSpec::analytic("gaussian", &[("s", 1.0), ("tail", 2.0)]);
        assert!(matches!(
            reg.build(&spec),
            Err(KernelError::UnexpectedParameter(k)) if k == "tail"
        ));
    }
}
