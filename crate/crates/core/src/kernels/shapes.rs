//! Built-in kernel shapes and their registry families.

use super::quad::{refined_trapezoid, QuadOpts};
use super::{
    expect_params, positive_param, require_param, DispersalKernel, KernelError, KernelFamily,
    KernelShape, KernelSpec, TRUNCATION_DENSITY,
};
use std::f64::consts::PI;
use std::fs;
use std::path::Path;
use std::sync::Arc;

/// The lambda-doubling search for tabulated kernels stops here; compactly
/// supported samples have every exponential moment, so reaching the cap
/// means "no divergence found" and reports +infinity.
const LAMBDA_SEARCH_CAP: f64 = 32.0;

/// Normal density with standard deviation `s`.
pub struct Gaussian {
    s: f64,
    norm: f64,
    trunc: f64,
}

impl Gaussian {
    pub fn new(s: f64) -> Result<Self, KernelError> {
        let s = positive_param("s", s)?;
        let norm = 1.0 / (s * (2.0 * PI).sqrt());
        // Solve norm * exp(-y^2 / 2 s^2) = threshold for y.
        let trunc = s * (2.0 * (norm / TRUNCATION_DENSITY).ln()).sqrt();
        Ok(Gaussian { s, norm, trunc })
    }
}

impl KernelShape for Gaussian {
    fn describe(&self) -> String {
        format!("gaussian{{s={}}}", self.s)
    }

    fn density_raw(&self, y: f64) -> f64 {
        let t = y / self.s;
        self.norm * (-0.5 * t * t).exp()
    }

    fn closed_form_mgf(&self, lambda: f64) -> Option<f64> {
        let sl = self.s * lambda;
        Some((0.5 * sl * sl).exp())
    }

    fn lambda_hat(&self) -> f64 {
        f64::INFINITY
    }

    fn truncation_radius(&self) -> f64 {
        self.trunc
    }

    fn support_radius(&self) -> Option<f64> {
        None
    }
}

/// Two-sided exponential density with rate `alpha`.
pub struct Laplace {
    alpha: f64,
    trunc: f64,
}

impl Laplace {
    pub fn new(alpha: f64) -> Result<Self, KernelError> {
        let alpha = positive_param("alpha", alpha)?;
        // Solve (alpha/2) exp(-alpha |y|) = threshold.
        let trunc = (alpha / (2.0 * TRUNCATION_DENSITY)).ln().max(0.0) / alpha;
        Ok(Laplace { alpha, trunc })
    }
}

impl KernelShape for Laplace {
    fn describe(&self) -> String {
        format!("laplace{{alpha={}}}", self.alpha)
    }

    fn density_raw(&self, y: f64) -> f64 {
        0.5 * self.alpha * (-self.alpha * y.abs()).exp()
    }

    fn closed_form_mgf(&self, lambda: f64) -> Option<f64> {
        // alpha^2 / (alpha^2 - lambda^2), valid only inside |lambda| < alpha;
        // the boundary itself reads as +infinity.
        let a2 = self.alpha * self.alpha;
        let d = a2 - lambda * lambda;
        Some(if d > 0.0 { a2 / d } else { f64::INFINITY })
    }

    fn lambda_hat(&self) -> f64 {
        self.alpha
    }

    fn truncation_radius(&self) -> f64 {
        self.trunc
    }

    fn support_radius(&self) -> Option<f64> {
        None
    }
}

/// Mollifier bump supported on [-radius, radius]:
/// J(y) = exp(-1 / (1 - (y/radius)^2)) / (radius * i0), where i0 normalizes
/// the unit-radius profile. All derivatives vanish at the support edge, so
/// trapezoid sums converge fast and every exponential moment is finite.
pub struct CompactBump {
    radius: f64,
    norm: f64,
}

impl CompactBump {
    pub fn new(radius: f64) -> Result<Self, KernelError> {
        let radius = positive_param("radius", radius)?;
        let o = QuadOpts::default();
        let i0 = refined_trapezoid(Self::profile, -1.0, 1.0, &o)
            .map_err(|_| KernelError::QuadratureFailure {
                what: "bump normalization",
            })?;
        Ok(CompactBump {
            radius,
            norm: 1.0 / (radius * i0),
        })
    }

    fn profile(t: f64) -> f64 {
        let t2 = t * t;
        if t2 >= 1.0 {
            0.0
        } else {
            (-1.0 / (1.0 - t2)).exp()
        }
    }
}

impl KernelShape for CompactBump {
    fn describe(&self) -> String {
        format!("compact_bump{{radius={}}}", self.radius)
    }

    fn density_raw(&self, y: f64) -> f64 {
        self.norm * Self::profile(y / self.radius)
    }

    fn closed_form_mgf(&self, _lambda: f64) -> Option<f64> {
        None
    }

    fn lambda_hat(&self) -> f64 {
        f64::INFINITY
    }

    fn truncation_radius(&self) -> f64 {
        self.radius
    }

    fn support_radius(&self) -> Option<f64> {
        Some(self.radius)
    }
}

/// Piecewise-linear density built from two-column samples.
///
/// The sample grid must be symmetric about 0 and the values even in y; the
/// loaded table is folded onto y >= 0 and renormalized so the interpolant
/// integrates to exactly 1. Evaluation uses |y|, so the density is even to
/// the last bit.
pub struct Tabulated {
    /// Nonnegative half of the sample grid, ascending. May start above 0 for
    /// even-count tables; the density is constant below the first node.
    ys: Vec<f64>,
    vals: Vec<f64>,
    source: String,
    lambda_hat: f64,
}

impl Tabulated {
    /// Builds from raw (y, J) pairs in any order.
    pub fn from_pairs(pairs: &[(f64, f64)], source: &str) -> Result<Self, KernelError> {
        let err = |reason: String| KernelError::Table {
            origin: source.to_string(),
            reason,
        };
        if pairs.len() < 3 {
            return Err(err(format!("need at least 3 samples, got {}", pairs.len())));
        }
        let mut rows: Vec<(f64, f64)> = pairs.to_vec();
        if rows.iter().any(|(y, v)| !y.is_finite() || !v.is_finite()) {
            return Err(err("non-finite sample".into()));
        }
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in rows.windows(2) {
            if w[1].0 - w[0].0 <= 0.0 {
                return Err(err(format!("duplicate sample location y = {}", w[0].0)));
            }
        }
        let n = rows.len();
        let vmax = rows.iter().map(|(_, v)| v.abs()).fold(0.0_f64, f64::max);
        for i in 0..n / 2 {
            let (yl, vl) = rows[i];
            let (yr, vr) = rows[n - 1 - i];
            if (yl + yr).abs() > 1e-12 {
                return Err(err(format!(
                    "grid not symmetric: y = {yl} pairs with y = {yr}"
                )));
            }
            if (vl - vr).abs() > 1e-14 * vmax.max(1.0) {
                return Err(err(format!(
                    "values not symmetric at |y| = {yr}: {vl} vs {vr}"
                )));
            }
        }
        if n % 2 == 1 && rows[n / 2].0.abs() > 1e-12 {
            return Err(err("odd-count grid must contain y = 0".into()));
        }
        if rows.iter().any(|(_, v)| *v < 0.0) {
            return Err(err("negative density sample".into()));
        }

        // Fold onto y >= 0, averaging mirrored values.
        let half = n / 2;
        let (mut ys, mut vals) = (Vec::new(), Vec::new());
        if n % 2 == 1 {
            ys.push(0.0);
            vals.push(rows[half].1);
        }
        for i in (n + 1) / 2..n {
            ys.push(rows[i].0);
            vals.push(0.5 * (rows[i].1 + rows[n - 1 - i].1));
        }

        // Exact mass of the even piecewise-linear interpolant (constant on
        // [0, ys[0]] when the table has no center sample).
        let mut mass = 2.0 * vals[0] * ys[0];
        for i in 0..ys.len() - 1 {
            mass += (ys[i + 1] - ys[i]) * (vals[i] + vals[i + 1]);
        }
        if !(mass > 0.0) {
            return Err(err("sample mass is not positive".into()));
        }
        for v in &mut vals {
            *v /= mass;
        }

        let mut tab = Tabulated {
            ys,
            vals,
            source: source.to_string(),
            lambda_hat: f64::INFINITY,
        };
        tab.lambda_hat = tab.search_lambda_hat();
        Ok(tab)
    }

    /// Reads a two-column text file: `y value` per line, `#` comments.
    pub fn load(path: &Path) -> Result<Self, KernelError> {
        let text = fs::read_to_string(path)?;
        let source = path.display().to_string();
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let body = line.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let mut cols = body.split_whitespace();
            let parse = |tok: Option<&str>| -> Result<f64, KernelError> {
                tok.and_then(|t| t.parse::<f64>().ok())
                    .ok_or_else(|| KernelError::Table {
                        origin: source.clone(),
                        reason: format!("line {}: expected `y value`", lineno + 1),
                    })
            };
            let y = parse(cols.next())?;
            let v = parse(cols.next())?;
            if cols.next().is_some() {
                return Err(KernelError::Table {
                    origin: source,
                    reason: format!("line {}: more than two columns", lineno + 1),
                });
            }
            pairs.push((y, v));
        }
        Self::from_pairs(&pairs, &source)
    }

    /// Exact exponential moment of the even piecewise-linear interpolant.
    ///
    /// On a segment where the density is p + q (y - ym) around the midpoint,
    /// integrating against 2 cosh(lambda y) gives
    ///   2 cosh(lambda ym) p A + 2 sinh(lambda ym) q B,
    /// with A = 2h sinhc(x), B = 2h^2 g(x), x = lambda h; both carry series
    /// guards so small lambda loses nothing to cancellation.
    fn mgf_exact(&self, lambda: f64) -> f64 {
        let r = *self.ys.last().expect("nonempty table");
        if lambda * r > 700.0 {
            // cosh would overflow; the true value rounds to +infinity anyway.
            return f64::INFINITY;
        }
        let mut total = 0.0;
        let mut segment = |y0: f64, y1: f64, v0: f64, v1: f64| {
            let h = 0.5 * (y1 - y0);
            let ym = 0.5 * (y0 + y1);
            let p = 0.5 * (v0 + v1);
            let q = if h > 0.0 { (v1 - v0) / (2.0 * h) } else { 0.0 };
            let x = lambda * h;
            total += 2.0 * (lambda * ym).cosh() * p * 2.0 * h * sinhc(x)
                + 2.0 * (lambda * ym).sinh() * q * 2.0 * h * h * cosh_minus_sinhc(x);
        };
        if self.ys[0] > 0.0 {
            segment(0.0, self.ys[0], self.vals[0], self.vals[0]);
        }
        for i in 0..self.ys.len() - 1 {
            segment(self.ys[i], self.ys[i + 1], self.vals[i], self.vals[i + 1]);
        }
        total
    }

    /// Doubling search for the smallest lambda whose exponential moment is
    /// not representable. Bounded compact samples have every moment, so the
    /// cap normally reads +infinity.
    fn search_lambda_hat(&self) -> f64 {
        let mut lambda = 1.0;
        while lambda <= LAMBDA_SEARCH_CAP {
            if !self.mgf_exact(lambda).is_finite() {
                return lambda;
            }
            lambda *= 2.0;
        }
        f64::INFINITY
    }
}

/// sinh(x) / x, continuous through 0.
fn sinhc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 + x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sinh() / x
    }
}

/// (cosh x - sinh(x)/x) / x, the odd companion of sinhc; series below 0.1
/// where the direct form loses digits to cancellation.
fn cosh_minus_sinhc(x: f64) -> f64 {
    if x.abs() < 0.1 {
        let x2 = x * x;
        x * (1.0 / 3.0 + x2 * (1.0 / 30.0 + x2 * (1.0 / 840.0 + x2 / 45360.0)))
    } else {
        (x.cosh() - x.sinh() / x) / x
    }
}

impl KernelShape for Tabulated {
    fn describe(&self) -> String {
        format!("tabulated{{{}}}", self.source)
    }

    fn density_raw(&self, y: f64) -> f64 {
        let a = y.abs();
        if a <= self.ys[0] {
            return self.vals[0];
        }
        let last = self.ys.len() - 1;
        if a >= self.ys[last] {
            return 0.0;
        }
        let i = self.ys.partition_point(|&x| x < a) - 1;
        let t = (a - self.ys[i]) / (self.ys[i + 1] - self.ys[i]);
        self.vals[i] + t * (self.vals[i + 1] - self.vals[i])
    }

    fn closed_form_mgf(&self, lambda: f64) -> Option<f64> {
        Some(self.mgf_exact(lambda))
    }

    fn lambda_hat(&self) -> f64 {
        self.lambda_hat
    }

    fn truncation_radius(&self) -> f64 {
        *self.ys.last().expect("nonempty table")
    }

    fn support_radius(&self) -> Option<f64> {
        Some(self.truncation_radius())
    }
}

pub(super) struct GaussianFamily;

impl KernelFamily for GaussianFamily {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn params_help(&self) -> &'static str {
        "s: standard deviation > 0"
    }

    fn build(&self, spec: &KernelSpec) -> Result<DispersalKernel, KernelError> {
        expect_params(spec, &["s"])?;
        let s = require_param(spec, "s")?;
        Ok(DispersalKernel::from_shape(Arc::new(Gaussian::new(s)?)))
    }
}

pub(super) struct LaplaceFamily;

impl KernelFamily for LaplaceFamily {
    fn name(&self) -> &'static str {
        "laplace"
    }

    fn params_help(&self) -> &'static str {
        "alpha: decay rate > 0 (mgf diverges at lambda = alpha)"
    }

    fn build(&self, spec: &KernelSpec) -> Result<DispersalKernel, KernelError> {
        expect_params(spec, &["alpha"])?;
        let alpha = require_param(spec, "alpha")?;
        Ok(DispersalKernel::from_shape(Arc::new(Laplace::new(alpha)?)))
    }
}

pub(super) struct CompactBumpFamily;

impl KernelFamily for CompactBumpFamily {
    fn name(&self) -> &'static str {
        "compact_bump"
    }

    fn params_help(&self) -> &'static str {
        "radius: support half-width > 0"
    }

    fn build(&self, spec: &KernelSpec) -> Result<DispersalKernel, KernelError> {
        expect_params(spec, &["radius"])?;
        let radius = require_param(spec, "radius")?;
        Ok(DispersalKernel::from_shape(Arc::new(CompactBump::new(
            radius,
        )?)))
    }
}

pub(super) struct TabulatedFamily;

impl KernelFamily for TabulatedFamily {
    fn name(&self) -> &'static str {
        "tabulated"
    }

    fn params_help(&self) -> &'static str {
        "file: two-column text samples (y, J) on a symmetric grid"
    }

    fn build(&self, spec: &KernelSpec) -> Result<DispersalKernel, KernelError> {
        expect_params(spec, &[])?;
        let path = spec
            .file
            .as_ref()
            .ok_or(KernelError::MissingFile("tabulated"))?;
        Ok(DispersalKernel::from_shape(Arc::new(Tabulated::load(
            path,
        )?)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_truncation_is_below_threshold() {
        let g = Gaussian::new(1.0).unwrap();
        let r = g.truncation_radius();
        assert!((g.density_raw(r) - TRUNCATION_DENSITY).abs() < 1e-18);
        assert!(g.density_raw(r + 0.01) < TRUNCATION_DENSITY);
    }

    #[test]
    fn laplace_mgf_outside_range_is_infinite() {
        let l = Laplace::new(2.0).unwrap();
        assert_eq!(l.closed_form_mgf(2.5), Some(f64::INFINITY));
        assert_eq!(l.closed_form_mgf(2.0), Some(f64::INFINITY));
        assert!(l.closed_form_mgf(1.0).unwrap().is_finite());
    }

    #[test]
    fn tabulated_rejects_asymmetric_grid() {
        let pairs = [(-1.0, 0.2), (0.0, 0.5), (1.0 + 1e-6, 0.2)];
        assert!(Tabulated::from_pairs(&pairs, "test").is_err());
    }

    #[test]
    fn tabulated_rejects_asymmetric_values() {
        let pairs = [(-1.0, 0.2), (0.0, 0.5), (1.0, 0.2 + 1e-6)];
        assert!(Tabulated::from_pairs(&pairs, "test").is_err());
    }

    #[test]
    fn tabulated_folds_and_normalizes() {
        // Triangle on [-1, 1]: interpolant mass before scaling is 1/2... the
        // hat (0,1),(±1,0) has mass 1, so values stay as given.
        let pairs = [(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)];
        let t = Tabulated::from_pairs(&pairs, "test").unwrap();
        assert!((t.density_raw(0.0) - 1.0).abs() < 1e-15);
        assert!((t.density_raw(0.5) - 0.5).abs() < 1e-15);
        assert_eq!(t.density_raw(0.25), t.density_raw(-0.25));
        assert_eq!(t.density_raw(2.0), 0.0);
        assert!(t.lambda_hat().is_infinite());
    }

    #[test]
    fn tabulated_mgf_matches_triangle_closed_form() {
        // Hat density 1 - |y| on [-1, 1] has moment 4 sinh^2(lambda/2) / lambda^2.
        let pairs = [(-1.0, 0.0), (0.0, 1.0), (1.0, 0.0)];
        let t = Tabulated::from_pairs(&pairs, "test").unwrap();
        for lambda in [1e-9_f64, 1e-3, 0.5, 1.0, 3.0, 10.0] {
            let exact = 4.0 * (0.5 * lambda).sinh().powi(2) / (lambda * lambda);
            let got = t.mgf_exact(lambda);
            assert!(
                (got - exact).abs() <= 1e-13 * exact,
                "lambda = {lambda}: {got} vs {exact}"
            );
        }
        assert!((t.mgf_exact(0.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn tabulated_even_count_table_has_center_plateau() {
        let pairs = [(-1.5, 0.1), (-0.5, 0.4), (0.5, 0.4), (1.5, 0.1)];
        let t = Tabulated::from_pairs(&pairs, "test").unwrap();
        // Constant below the first folded node.
        assert_eq!(t.density_raw(0.0), t.density_raw(0.3));
    }
}
