//! Uniform centered grid for truncated-line computations.

use super::{DispersalKernel, KernelError};

/// Uniform 1-D grid on [-L, L] with an odd node count, node 0 of the
/// interior at z = -L and the center node exactly at z = 0. The ghost
/// width is the number of off-grid nodes a convolution stencil may reach
/// past each end; callers extend fields by far-field constants there.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    half_width: f64,
    dx: f64,
    n: usize,
    ghost: usize,
}

impl Grid {
    /// Grid over [-half_width, half_width] with ghost width sized for
    /// `kernel`: the smallest g with g dx >= truncation radius.
    pub fn for_kernel(
        half_width: f64,
        dx: f64,
        kernel: &DispersalKernel,
    ) -> Result<Self, KernelError> {
        let r = kernel.truncation_radius();
        // The -1e-9 slack keeps an exact multiple from rounding up a node.
        let ghost = ((r / dx - 1e-9).ceil().max(1.0)) as usize;
        Self::with_ghost(half_width, dx, ghost)
    }

    /// Grid with an explicit ghost width (callers must verify coverage).
    pub fn with_ghost(half_width: f64, dx: f64, ghost: usize) -> Result<Self, KernelError> {
        if !(dx > 0.0) || !dx.is_finite() {
            return Err(KernelError::Grid(format!("spacing must be positive, got {dx}")));
        }
        if !(half_width >= dx) || !half_width.is_finite() {
            return Err(KernelError::Grid(format!(
                "half width must be finite and at least one spacing, got {half_width}"
            )));
        }
        if ghost == 0 {
            return Err(KernelError::Grid("ghost width must be at least 1".into()));
        }
        let m = (half_width / dx).round() as usize;
        let n = 2 * m + 1;
        if n > 100_000_000 {
            return Err(KernelError::Grid(format!("grid of {n} nodes is unreasonably large")));
        }
        Ok(Grid {
            half_width: m as f64 * dx,
            dx,
            n,
            ghost,
        })
    }

    /// Effective half width m dx (the requested value rounded to a node).
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Interior node count, always odd.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn ghost(&self) -> usize {
        self.ghost
    }

    /// Index of the node at z = 0.
    pub fn center(&self) -> usize {
        (self.n - 1) / 2
    }

    /// Coordinate of interior node i. Mirror nodes are exact negations.
    pub fn node(&self, i: usize) -> f64 {
        (i as f64 - self.center() as f64) * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Whether the ghost band reaches past a stencil of the given radius.
    pub fn covers(&self, radius: f64) -> bool {
        self.ghost as f64 * self.dx >= radius - 1e-9 * radius.max(1.0)
    }

    /// Same domain at half the spacing; ghost width doubles so coverage
    /// in physical length is preserved exactly.
    pub fn refine_half(&self) -> Self {
        Grid {
            half_width: self.half_width,
            dx: 0.5 * self.dx,
            n: 2 * self.n - 1,
            ghost: 2 * self.ghost,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(l: f64, dx: f64) -> Grid {
        Grid::with_ghost(l, dx, 3).unwrap()
    }

    #[test]
    fn node_count_is_odd_and_centered() {
        let g = grid(10.0, 0.1);
        assert_eq!(g.len() % 2, 1);
        assert_eq!(g.node(g.center()), 0.0);
        assert!((g.node(0) + g.half_width()).abs() < 1e-15);
        assert!((g.node(g.len() - 1) - g.half_width()).abs() < 1e-15);
    }

    #[test]
    fn nodes_are_mirror_symmetric_to_the_bit() {
        let g = grid(7.0, 0.3);
        let c = g.center();
        for k in 0..=c {
            assert_eq!(g.node(c + k), -g.node(c - k));
        }
    }

    #[test]
    fn effective_half_width_is_within_half_a_spacing() {
        let g = grid(10.04, 0.1);
        assert!((g.half_width() - 10.04).abs() <= 0.05 + 1e-12);
        assert!((g.len() as f64 - 1.0) * g.dx() - 2.0 * g.half_width() == 0.0);
    }

    #[test]
    fn refinement_halves_spacing_and_keeps_domain() {
        let g = grid(10.0, 0.1);
        let f = g.refine_half();
        assert_eq!(f.dx(), 0.05);
        assert_eq!(f.half_width(), g.half_width());
        assert_eq!(f.len(), 2 * g.len() - 1);
        assert_eq!(f.ghost(), 2 * g.ghost());
        assert_eq!(f.ghost() as f64 * f.dx(), g.ghost() as f64 * g.dx());
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(Grid::with_ghost(10.0, 0.0, 3).is_err());
        assert!(Grid::with_ghost(10.0, -0.1, 3).is_err());
        assert!(Grid::with_ghost(0.05, 0.1, 3).is_err());
        assert!(Grid::with_ghost(10.0, 0.1, 0).is_err());
    }

    #[test]
    fn ghost_coverage_check() {
        let g = Grid::with_ghost(10.0, 0.1, 30).unwrap();
        assert!(g.covers(3.0));
        assert!(g.covers(2.9));
        assert!(!g.covers(3.2));
    }
}
