//! Spectral speed quantities of the linearized invasion problem.
//!
//! Everything here derives from the speed function
//! G(lambda) = (M(lambda) - 1 + R) / lambda, where M is the kernel's
//! exponential moment and R a positive growth rate: its infimum is the
//! minimal admissible wave speed, and the smallest positive root of
//! G(lambda) = c is the decay rate of the entropy weight at speed c.

use crate::kernels::{DispersalKernel, KernelError};
use crate::models::ReactionModel;
use thiserror::Error;

/// Default upper bound of the search interval when the kernel's moment
/// generating function never diverges.
pub const DEFAULT_LAMBDA_CAP: f64 = 20.0;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("lambda = {lambda} outside the admissible interval (0, {cap}]")]
    Domain { lambda: f64, cap: f64 },
    #[error("growth rate must be positive, got {0}")]
    NonpositiveRate(f64),
    #[error("lambda cap {cap} must stay below the divergence rate {lambda_hat}")]
    CapBeyondDivergence { cap: f64, lambda_hat: f64 },
    #[error("speed {c} is below the minimal speed {c_r}; no weight rate exists")]
    NoRoot { c: f64, c_r: f64 },
    #[error("speed search failed: {0}")]
    SearchFailure(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Outcome of minimizing the speed function.
#[derive(Clone, Copy, Debug)]
pub struct MinimalSpeed {
    pub c: f64,
    /// Argmin of G, or the cap when the infimum sits on the boundary.
    pub lambda: f64,
    /// True when G was still decreasing at the cap; c is then an upper
    /// bound for the infimum, not an interior minimum.
    pub boundary_infimum: bool,
}

/// The pair (kernel, R) plus a capped search interval for lambda.
#[derive(Clone, Debug)]
pub struct SpeedProblem {
    kernel: DispersalKernel,
    r: f64,
    lambda_cap: f64,
}

impl SpeedProblem {
    /// Caps the search at min(0.999 lambda_hat, 20): strictly inside the
    /// kernel's moment domain, generous enough for every built-in rate.
    pub fn new(kernel: DispersalKernel, r: f64) -> Result<Self, SpectralError> {
        let cap = (0.999 * kernel.lambda_hat()).min(DEFAULT_LAMBDA_CAP);
        Self::with_cap(kernel, r, cap)
    }

    pub fn with_cap(kernel: DispersalKernel, r: f64, cap: f64) -> Result<Self, SpectralError> {
        if !(r > 0.0) || !r.is_finite() {
            return Err(SpectralError::NonpositiveRate(r));
        }
        if !(cap > 0.0) || cap >= kernel.lambda_hat() {
            return Err(SpectralError::CapBeyondDivergence {
                cap,
                lambda_hat: kernel.lambda_hat(),
            });
        }
        Ok(SpeedProblem {
            kernel,
            r,
            lambda_cap: cap,
        })
    }

    pub fn kernel(&self) -> &DispersalKernel {
        &self.kernel
    }

    pub fn rate(&self) -> f64 {
        self.r
    }

    pub fn lambda_cap(&self) -> f64 {
        self.lambda_cap
    }

    /// G(lambda) = (M(lambda) - 1 + R) / lambda on (0, lambda_cap].
    pub fn speed_function(&self, lambda: f64) -> Result<f64, SpectralError> {
        if !(lambda > 0.0 && lambda <= self.lambda_cap) {
            return Err(SpectralError::Domain {
                lambda,
                cap: self.lambda_cap,
            });
        }
        Ok((self.kernel.mgf(lambda)? - 1.0 + self.r) / lambda)
    }

    /// inf G by geometric bracketing plus golden-section refinement; a
    /// final parabolic step recovers the minimizer well below the
    /// comparison noise floor of pure golden section.
    pub fn minimal_speed(&self) -> Result<MinimalSpeed, SpectralError> {
        let g = |lambda: f64| self.speed_function(lambda);

        // March lambda up geometrically until G turns upward. G(0+) is
        // +infinity, so the first rise brackets an interior minimum.
        let mut cur = 1e-4_f64.min(0.5 * self.lambda_cap);
        let mut g_cur = g(cur)?;
        let mut prev: Option<f64> = None;
        let mut bracket: Option<(f64, f64)> = None;
        while cur < self.lambda_cap {
            let next = (cur * 2.0).min(self.lambda_cap);
            let g_next = g(next)?;
            if g_next > g_cur {
                // G >= R/lambda makes this left end provably above G(cur)
                // even when the rise happened on the first step.
                let left = prev.unwrap_or_else(|| (cur * 0.5).min(self.r / (2.0 * g_cur)));
                bracket = Some((left, next));
                break;
            }
            prev = Some(cur);
            cur = next;
            g_cur = g_next;
        }
        let Some((lo, hi)) = bracket else {
            // Still descending at the cap: report the boundary value.
            return Ok(MinimalSpeed {
                c: g_cur,
                lambda: self.lambda_cap,
                boundary_infimum: true,
            });
        };

        // Golden section on [lo, hi] to relative width 1e-12.
        let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
        let mut a = lo;
        let mut b = hi;
        let mut x1 = b - inv_phi * (b - a);
        let mut x2 = a + inv_phi * (b - a);
        let mut f1 = g(x1)?;
        let mut f2 = g(x2)?;
        for _ in 0..200 {
            if b - a <= 1e-12 * b.abs().max(1.0) {
                break;
            }
            if f1 <= f2 {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - inv_phi * (b - a);
                f1 = g(x1)?;
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + inv_phi * (b - a);
                f2 = g(x2)?;
            }
        }
        let (mut best_l, mut best_g) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };

        // Parabolic polish: golden section alone cannot place the argmin
        // more precisely than about sqrt(eps) because G is flat there; a
        // three-point vertex from well-separated samples can.
        let h = 1e-5 * best_l.abs().max(1.0);
        if best_l - h > 0.0 && best_l + h <= self.lambda_cap {
            let gm = g(best_l - h)?;
            let gp = g(best_l + h)?;
            let denom = gm - 2.0 * best_g + gp;
            if denom > 0.0 {
                let vertex = best_l + 0.5 * h * (gm - gp) / denom;
                if vertex > 0.0 && vertex <= self.lambda_cap {
                    let gv = g(vertex)?;
                    if gv <= best_g {
                        best_l = vertex;
                        best_g = gv;
                    }
                }
            }
        }
        if !(best_g > 0.0) {
            return Err(SpectralError::SearchFailure(format!(
                "minimum {best_g} at lambda = {best_l} is not positive"
            )));
        }
        Ok(MinimalSpeed {
            c: best_g,
            lambda: best_l,
            boundary_infimum: false,
        })
    }

    /// Smallest positive root of G(lambda) = c, the decay rate of the
    /// entropy weight. At c equal to the minimal speed (within 1e-12)
    /// the root is double and the minimizer is returned directly.
    pub fn weight_rate(&self, c: f64) -> Result<f64, SpectralError> {
        let min = self.minimal_speed()?;
        if c < min.c - 1e-12 {
            return Err(SpectralError::NoRoot { c, c_r: min.c });
        }
        if (c - min.c).abs() <= 1e-12 {
            return Ok(min.lambda);
        }
        // G >= R/lambda, so G(R/(2c)) >= 2c > c: a guaranteed left end.
        let mut lo = (self.r / (2.0 * c)).min(0.5 * min.lambda);
        while self.speed_function(lo)? <= c {
            lo *= 0.5;
            if lo < 1e-300 {
                return Err(SpectralError::SearchFailure(
                    "no lower bracket for the weight rate".into(),
                ));
            }
        }
        let mut hi = min.lambda;
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            let gm = self.speed_function(mid)?;
            if (gm - c).abs() <= 1e-10 {
                return Ok(mid);
            }
            if gm > c {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= f64::EPSILON * hi {
                break;
            }
        }
        let root = 0.5 * (lo + hi);
        if (self.speed_function(root)? - c).abs() <= 1e-10 {
            Ok(root)
        } else {
            Err(SpectralError::SearchFailure(format!(
                "bisection stalled at lambda = {root} for speed {c}"
            )))
        }
    }
}

/// The model's own minimal invasion speed: the infimum problem run with
/// the linear spreading rate of the invaded state.
pub fn model_minimal_speed(
    model: &ReactionModel,
    kernel: &DispersalKernel,
) -> Result<MinimalSpeed, SpectralError> {
    SpeedProblem::new(kernel.clone(), model.spreading_rate())?.minimal_speed()
}
