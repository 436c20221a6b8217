//! Trapezoidal quadrature with interval doubling and compensated summation.
//!
//! The integrands here (kernel densities and their exponentially weighted
//! variants) are cheap and either smooth or piecewise linear, so trapezoid
//! sums with doubling plus one Richardson extrapolation level give
//! deterministic results without adaptive-subdivision bookkeeping. Kinks at
//! the window midpoint (the laplace density) stay on a node because interval
//! counts are even, which keeps the extrapolation honest.

/// Tolerances and limits for the refinement loops.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadOpts {
    /// Absolute tolerance on the change between successive refinements.
    pub abs_tol: f64,
    /// Relative tolerance on the change between successive refinements.
    pub rel_tol: f64,
    /// Interval doublings to attempt before reporting failure.
    pub max_doublings: u32,
    /// Doublings required before the convergence test may fire; guards
    /// against accidental agreement on coarse grids.
    pub min_doublings: u32,
    /// Interval count of the first trapezoid sum; kept even.
    pub initial_intervals: usize,
    /// Window doublings for integrals over the whole line.
    pub max_window_doublings: u32,
}

impl Default for QuadOpts {
    fn default() -> Self {
        QuadOpts {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_doublings: 22,
            min_doublings: 3,
            initial_intervals: 64,
            max_window_doublings: 24,
        }
    }
}

/// A refinement loop that exhausted its budget without settling, or produced
/// a non-finite value. Carries the last estimate for diagnostics.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadFailure {
    pub last: f64,
}

/// Kahan-compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Kahan {
    sum: f64,
    carry: f64,
}

impl Kahan {
    pub fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

/// Integrates `f` over `[a, b]`, doubling the interval count until the
/// Richardson-accelerated estimates agree to tolerance.
pub(crate) fn refined_trapezoid<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    o: &QuadOpts,
) -> Result<f64, QuadFailure> {
    assert!(b >= a, "inverted quadrature window");
    if a == b {
        return Ok(0.0);
    }
    let mut n = o.initial_intervals.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let mut t = {
        let h = (b - a) / n as f64;
        let mut acc = Kahan::default();
        acc.add(0.5 * f(a));
        acc.add(0.5 * f(b));
        for i in 1..n {
            acc.add(f(a + i as f64 * h));
        }
        acc.value() * h
    };
    let mut accel_prev: Option<f64> = None;
    for level in 1..=o.max_doublings {
        let h = (b - a) / n as f64;
        let mut mids = Kahan::default();
        for i in 0..n {
            mids.add(f(a + (i as f64 + 0.5) * h));
        }
        let t_next = 0.5 * t + 0.5 * h * mids.value();
        // One Richardson level: exact for the h^2 error term of smooth (or
        // node-aligned piecewise smooth) integrands.
        let accel = t_next + (t_next - t) / 3.0;
        t = t_next;
        n *= 2;
        if !accel.is_finite() {
            return Err(QuadFailure { last: accel });
        }
        if let Some(prev) = accel_prev {
            let delta = (accel - prev).abs();
            if level >= o.min_doublings && delta <= o.abs_tol.max(o.rel_tol * accel.abs()) {
                return Ok(accel);
            }
        }
        accel_prev = Some(accel);
    }
    Err(QuadFailure { last: t })
}

/// Integrates `f` over the whole line by doubling a symmetric window from
/// `[-r0, r0]` until the added flanks stop mattering. Flanks that keep
/// contributing (or overflow) signal a divergent integral.
pub(crate) fn growing_window<F: Fn(f64) -> f64>(
    f: F,
    r0: f64,
    o: &QuadOpts,
) -> Result<f64, QuadFailure> {
    assert!(r0 > 0.0, "window seed must be positive");
    let mut total = refined_trapezoid(&f, -r0, r0, o)?;
    let mut r = r0;
    for _ in 0..o.max_window_doublings {
        let left = refined_trapezoid(&f, -2.0 * r, -r, o)?;
        let right = refined_trapezoid(&f, r, 2.0 * r, o)?;
        let flank = left + right;
        total += flank;
        r *= 2.0;
        if !total.is_finite() {
            return Err(QuadFailure { last: total });
        }
        if flank.abs() <= o.abs_tol.max(o.rel_tol * total.abs()) {
            return Ok(total);
        }
    }
    Err(QuadFailure { last: total })
}
