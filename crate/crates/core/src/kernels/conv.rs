//! Discrete convolution against a dispersal kernel on a ghosted grid.

use super::{DispersalKernel, Grid, KernelError};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;

/// Strategy for the convolution inner loop. Auto picks the transform path
/// once the direct cost n (2g + 1) passes a fixed threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ConvMode {
    #[default]
    Auto,
    Direct,
    Fft,
}

const FFT_THRESHOLD: usize = 400_000;

struct FftPath {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    /// Forward transform of the zero-padded taps, pre-divided by the
    /// transform length so the inverse needs no extra scaling.
    spectrum: Vec<Complex<f64>>,
    size: usize,
}

/// Precomputed convolution operator J * u for one kernel on one grid.
///
/// Taps are kernel samples scaled by dx and renormalized to unit sum, so a
/// constant field maps to itself up to rounding. Off-grid sources are the
/// caller-supplied far-field constants; suffix sums fold whole tails into
/// one multiply per node.
pub struct Convolver {
    /// w_k for k in [-g, g], stored at index k + g; built from the k >= 0
    /// half by mirroring so w_{-k} == w_k to the bit.
    taps: Vec<f64>,
    /// suffix[t] = sum of w_k for k in [t, g], t in [0, g + 1].
    suffix: Vec<f64>,
    n: usize,
    ghost: usize,
    dx: f64,
    fft: Option<FftPath>,
}

impl Convolver {
    pub fn new(kernel: &DispersalKernel, grid: &Grid, mode: ConvMode) -> Result<Self, KernelError> {
        let r = kernel.truncation_radius();
        if !grid.covers(r) {
            return Err(KernelError::GridMismatch {
                ghost: grid.ghost(),
                dx: grid.dx(),
                radius: r,
            });
        }
        let g = grid.ghost();
        let dx = grid.dx();
        let mut half: Vec<f64> = (0..=g).map(|k| kernel.evaluate(k as f64 * dx) * dx).collect();
        let total: f64 = half[0] + 2.0 * half[1..].iter().sum::<f64>();
        if !(total > 0.0) {
            return Err(KernelError::Grid(
                "kernel mass vanishes on this grid; spacing too coarse".into(),
            ));
        }
        for w in &mut half {
            *w /= total;
        }
        let mut taps = vec![0.0; 2 * g + 1];
        for k in 0..=g {
            taps[g + k] = half[k];
            taps[g - k] = half[k];
        }
        let mut suffix = vec![0.0; g + 2];
        for t in (0..=g).rev() {
            suffix[t] = suffix[t + 1] + half[t];
        }

        let n = grid.len();
        let want_fft = match mode {
            ConvMode::Direct => false,
            ConvMode::Fft => true,
            ConvMode::Auto => n * (2 * g + 1) >= FFT_THRESHOLD,
        };
        let fft = want_fft.then(|| {
            let size = (n + 4 * g).next_power_of_two();
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(size);
            let inverse = planner.plan_fft_inverse(size);
            let mut spectrum: Vec<Complex<f64>> =
                taps.iter().map(|&w| Complex::new(w, 0.0)).collect();
            spectrum.resize(size, Complex::new(0.0, 0.0));
            forward.process(&mut spectrum);
            let scale = 1.0 / size as f64;
            for s in &mut spectrum {
                *s *= scale;
            }
            FftPath {
                forward,
                inverse,
                spectrum,
                size,
            }
        });

        Ok(Convolver {
            taps,
            suffix,
            n,
            ghost: g,
            dx,
            fft,
        })
    }

    /// Moment generating function of the discrete tap weights:
    /// sum of w_k e^{lambda k dx}. This is the growth factor the
    /// discrete convolution reports for an exponential field, the
    /// quadrature-level analogue of the kernel MGF.
    pub fn discrete_mgf(&self, lambda: f64) -> f64 {
        let g = self.ghost;
        let mut m = self.taps[g];
        for k in 1..=g {
            m += 2.0 * self.taps[g + k] * (lambda * k as f64 * self.dx).cosh();
        }
        m
    }

    pub fn ghost(&self) -> usize {
        self.ghost
    }

    pub fn is_fft(&self) -> bool {
        self.fft.is_some()
    }

    /// (J * u)(z_i) for every interior node, sources beyond the ends read
    /// far.0 on the left and far.1 on the right.
    pub fn apply(&self, field: &[f64], far: (f64, f64)) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(field, far, &mut out);
        out
    }

    pub fn apply_into(&self, field: &[f64], far: (f64, f64), out: &mut [f64]) {
        assert_eq!(field.len(), self.n, "field length must match the grid");
        assert_eq!(out.len(), self.n, "output length must match the grid");
        match &self.fft {
            Some(path) => self.apply_fft(path, field, far, out),
            None => self.apply_direct(field, far, out),
        }
    }

    fn apply_direct(&self, field: &[f64], far: (f64, f64), out: &mut [f64]) {
        let g = self.ghost as isize;
        let n = self.n as isize;
        for i in 0..n {
            // Source j = i - k stays inside [0, n); whole tails collapse to
            // suffix sums times the far constants.
            let k_lo = (i - (n - 1)).max(-g);
            let k_hi = i.min(g);
            let mut acc = 0.0;
            for k in k_lo..=k_hi {
                acc += self.taps[(k + g) as usize] * field[(i - k) as usize];
            }
            if i < g {
                acc += far.0 * self.suffix[(i + 1) as usize];
            }
            if n - i <= g {
                acc += far.1 * self.suffix[(n - i) as usize];
            }
            out[i as usize] = acc;
        }
    }

    fn apply_fft(&self, path: &FftPath, field: &[f64], far: (f64, f64), out: &mut [f64]) {
        let g = self.ghost;
        let n = self.n;
        let mut buf = vec![Complex::new(0.0, 0.0); path.size];
        for slot in buf.iter_mut().take(g) {
            slot.re = far.0;
        }
        for (slot, &v) in buf[g..].iter_mut().zip(field) {
            slot.re = v;
        }
        for slot in buf[g + n..].iter_mut().take(g) {
            slot.re = far.1;
        }
        path.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&path.spectrum) {
            *b *= s;
        }
        path.inverse.process(&mut buf);
        // Extended index j corresponds to interior node j - g; the linear
        // convolution of the extension with the taps lands at i + 2g.
        for (i, o) in out.iter_mut().enumerate() {
            *o = buf[i + 2 * g].re;
        }
    }
}

/// Quarter-step quadrature of (J * u)(z_i), independent of the stepping
/// stencil: kernel sampled at dx/4, field values between nodes filled by
/// degree-5 interpolation. Quadrature error is 16x below the stepping
/// stencil's, which makes this usable as a truth value when measuring
/// discretization residuals.
pub fn reference_convolution(
    kernel: &DispersalKernel,
    grid: &Grid,
    field: &[f64],
    far: (f64, f64),
) -> Result<Vec<f64>, KernelError> {
    let r = kernel.truncation_radius();
    if !grid.covers(r) {
        return Err(KernelError::GridMismatch {
            ghost: grid.ghost(),
            dx: grid.dx(),
            radius: r,
        });
    }
    let n = grid.len() as isize;
    assert_eq!(field.len(), grid.len(), "field length must match the grid");
    let dx = grid.dx();
    let h = 0.25 * dx;
    let kk = (r / h - 1e-9).ceil().max(1.0) as isize;
    let mut half: Vec<f64> = (0..=kk).map(|j| kernel.evaluate(j as f64 * h) * h).collect();
    let total = half[0] + 2.0 * half[1..].iter().sum::<f64>();
    for w in &mut half {
        *w /= total;
    }

    // Degree-5 weights for a point delta quarter-steps below a node, on the
    // six nodes base - 3 .. base + 2; row 0 (delta = 0) is the node itself.
    let offsets: [isize; 6] = [-3, -2, -1, 0, 1, 2];
    let mut rows = [[0.0f64; 6]; 4];
    rows[0][3] = 1.0;
    for (r_idx, row) in rows.iter_mut().enumerate().skip(1) {
        let x = -(r_idx as f64) * 0.25;
        for (e, w) in offsets.iter().zip(row.iter_mut()) {
            let mut p = 1.0;
            for o in offsets {
                if o != *e {
                    p *= (x - o as f64) / ((*e - o) as f64);
                }
            }
            *w = p;
        }
    }

    let get = |j: isize| -> f64 {
        if j < 0 {
            far.0
        } else if j >= n {
            far.1
        } else {
            field[j as usize]
        }
    };
    let sample = |i: isize, j: isize| -> f64 {
        // Source point z_i - j h = (i - j/4) dx.
        let q = j.div_euclid(4);
        let rem = j.rem_euclid(4) as usize;
        let base = i - q;
        if rem == 0 {
            get(base)
        } else {
            let row = &rows[rem];
            offsets
                .iter()
                .zip(row)
                .map(|(o, w)| w * get(base + o))
                .sum()
        }
    };

    let mut out = vec![0.0; grid.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let mut acc = half[0] * sample(i, 0);
        for j in 1..=kk {
            acc += half[j as usize] * (sample(i, j) + sample(i, -j));
        }
        *o = acc;
    }
    Ok(out)
}

fn far_get(field: &[f64], i: isize, far: (f64, f64)) -> f64 {
    if i < 0 {
        far.0
    } else if i >= field.len() as isize {
        far.1
    } else {
        field[i as usize]
    }
}

/// Fourth-order central first derivative; ends closed with the far-field
/// constants, consistent with how convolution extends the line.
pub fn d1_c4(field: &[f64], dx: f64, far: (f64, f64)) -> Vec<f64> {
    let n = field.len() as isize;
    let s = 1.0 / (12.0 * dx);
    (0..n)
        .map(|i| {
            let f = |k: isize| far_get(field, i + k, far);
            s * (f(-2) - 8.0 * f(-1) + 8.0 * f(1) - f(2))
        })
        .collect()
}

/// Decay rate the 4th-order stencil reports for a pure exponential:
/// d1_c4 applied to e^{-lambda z} equals -d1_c4_symbol(lambda, dx)
/// times the field. Tends to lambda as dx -> 0.
pub fn d1_c4_symbol(lambda: f64, dx: f64) -> f64 {
    (8.0 * (lambda * dx).sinh() - (2.0 * lambda * dx).sinh()) / (6.0 * dx)
}

/// Sixth-order central first derivative with far-field closure.
pub fn d1_c6(field: &[f64], dx: f64, far: (f64, f64)) -> Vec<f64> {
    let n = field.len() as isize;
    let s = 1.0 / (60.0 * dx);
    (0..n)
        .map(|i| {
            let f = |k: isize| far_get(field, i + k, far);
            s * (-f(-3) + 9.0 * f(-2) - 45.0 * f(-1) + 45.0 * f(1) - 9.0 * f(2) + f(3))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Gaussian;

    fn gaussian_kernel() -> DispersalKernel {
        DispersalKernel::from_shape(Arc::new(Gaussian::new(1.0).unwrap()))
    }

    fn smooth_field(grid: &Grid) -> Vec<f64> {
        grid.nodes()
            .iter()
            .map(|&z| 1.0 / (1.0 + (-0.7 * z).exp()) + 0.05 * (0.9 * z).sin())
            .collect()
    }

    #[test]
    fn constant_field_is_fixed_point() {
        let k = gaussian_kernel();
        let grid = Grid::for_kernel(20.0, 0.1, &k).unwrap();
        let conv = Convolver::new(&k, &grid, ConvMode::Direct).unwrap();
        let field = vec![0.75; grid.len()];
        let out = conv.apply(&field, (0.75, 0.75));
        for v in out {
            assert!((v - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn direct_and_fft_agree() {
        let k = gaussian_kernel();
        let grid = Grid::for_kernel(30.0, 0.1, &k).unwrap();
        let field = smooth_field(&grid);
        let far = (field[0], field[grid.len() - 1]);
        let direct = Convolver::new(&k, &grid, ConvMode::Direct).unwrap();
        let fft = Convolver::new(&k, &grid, ConvMode::Fft).unwrap();
        assert!(!direct.is_fft() && fft.is_fft());
        let a = direct.apply(&field, far);
        let b = fft.apply(&field, far);
        let sup = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup <= 1e-12, "direct vs fft sup difference {sup}");
    }

    #[test]
    fn spike_recovers_kernel_samples() {
        let k = gaussian_kernel();
        let grid = Grid::for_kernel(15.0, 0.05, &k).unwrap();
        let conv = Convolver::new(&k, &grid, ConvMode::Direct).unwrap();
        let mut field = vec![0.0; grid.len()];
        field[grid.center()] = 1.0 / grid.dx();
        let out = conv.apply(&field, (0.0, 0.0));
        let sup = out
            .iter()
            .enumerate()
            .map(|(i, &v)| (v - k.evaluate(grid.node(i))).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup <= grid.dx() * grid.dx(), "spike error {sup}");
    }

    #[test]
    fn far_field_matches_explicit_extension() {
        let k = gaussian_kernel();
        let grid = Grid::for_kernel(12.0, 0.2, &k).unwrap();
        let conv = Convolver::new(&k, &grid, ConvMode::Direct).unwrap();
        let field = smooth_field(&grid);
        let far = (2.0, 0.5);
        let out = conv.apply(&field, far);

        let g = grid.ghost() as isize;
        let n = grid.len() as isize;
        // Brute force against literal tap-by-tap extension.
        let mut taps = Vec::new();
        for kidx in -g..=g {
            taps.push(k.evaluate(kidx as f64 * grid.dx()) * grid.dx());
        }
        let s: f64 = taps.iter().sum();
        for i in 0..n {
            let mut acc = 0.0;
            for (t, w) in taps.iter().enumerate() {
                let kk = t as isize - g;
                acc += w / s * far_get(&field, i - kk, far);
            }
            assert!((acc - out[i as usize]).abs() < 1e-13);
        }
    }

    #[test]
    fn mismatch_between_ghost_and_truncation_is_rejected() {
        let k = gaussian_kernel();
        let grid = Grid::with_ghost(10.0, 0.1, 4).unwrap();
        assert!(matches!(
            Convolver::new(&k, &grid, ConvMode::Auto),
            Err(KernelError::GridMismatch { .. })
        ));
    }

    #[test]
    fn reference_convolution_tracks_fixed_points_and_stencil() {
        let k = gaussian_kernel();
        let grid = Grid::for_kernel(20.0, 0.1, &k).unwrap();
        let field = vec![1.25; grid.len()];
        let out = reference_convolution(&k, &grid, &field, (1.25, 1.25)).unwrap();
        for v in &out {
            assert!((v - 1.25).abs() < 1e-12);
        }
        let smooth = smooth_field(&grid);
        let far = (smooth[0], smooth[grid.len() - 1]);
        let refv = reference_convolution(&k, &grid, &smooth, far).unwrap();
        let conv = Convolver::new(&k, &grid, ConvMode::Direct).unwrap();
        let stencil = conv.apply(&smooth, far);
        let sup = refv
            .iter()
            .zip(&stencil)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0_f64, f64::max);
        assert!(sup < 1e-6, "reference vs stencil sup {sup}");
    }

    #[test]
    fn derivative_stencils_are_exact_on_low_degree_polynomials() {
        let dx = 0.1;
        let n = 101;
        let zs: Vec<f64> = (0..n).map(|i| (i as f64 - 50.0) * dx).collect();
        let quartic: Vec<f64> = zs.iter().map(|z| z.powi(4) - 2.0 * z.powi(2) + 3.0).collect();
        let d4 = d1_c4(&quartic, dx, (0.0, 0.0));
        for i in 10..n - 10 {
            let z: f64 = zs[i];
            let truth = 4.0 * z.powi(3) - 4.0 * z;
            assert!((d4[i] - truth).abs() < 1e-10, "c4 at {z}");
        }
        let quintic: Vec<f64> = zs.iter().map(|z| z.powi(5) + z.powi(3)).collect();
        let d6 = d1_c6(&quintic, dx, (0.0, 0.0));
        for i in 10..n - 10 {
            let z: f64 = zs[i];
            let truth = 5.0 * z.powi(4) + 3.0 * z * z;
            assert!((d6[i] - truth).abs() < 1e-9, "c6 at {z}");
        }
    }
}
