//! Traveling-wave profiles and their residuals.
//!
//! Profiles are computed by relaxation: in the frame moving at speed c
//! the wave is a stationary state of the dynamics, and for admissible
//! speeds it is an attractor, so integrating from a front-like guess
//! converges to it. The phase is fixed by translating the profile after
//! each repin interval so the pin component passes through the midpoint
//! of its far-field values at z = 0.

use crate::kernels::{
    d1_c4, d1_c4_symbol, reference_convolution, ConvMode, Convolver, DispersalKernel, Grid,
    KernelError,
};
use crate::models::ReactionModel;
use crate::simulate::{Frame, SimError, SimState, StepControl, Stepper, TailGuard, CLAMP_BAND};
use crate::spectral::{SpectralError, SpeedProblem};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

/// Strict-positivity floor applied to returned profiles. Far states can
/// contain exact zeros (an extinct component ahead of the front); the
/// floor keeps logarithms finite without affecting any dynamics.
pub const PROFILE_FLOOR: f64 = 1e-100;

#[derive(Debug, Error)]
pub enum WaveError {
    #[error(
        "relaxation stalled: sup |du/dt| = {rate:.3e} after t = {t} (expected for subminimal speeds)"
    )]
    NoConvergence { rate: f64, t: f64 },
    #[error("profile collapsed toward a constant state at t = {t}")]
    CollapseToEquilibrium { t: f64 },
    #[error("half-width {half_width} too narrow: need exp(-{lambda:.4}·L) < 1e-6")]
    GridTooNarrow { lambda: f64, half_width: f64 },
    #[error("component {component} misses its far state by {deviation:.3e} at the clamp join")]
    FarFieldMismatch { component: usize, deviation: f64 },
    #[error("model `{0}` has no left state and no parameters to estimate one")]
    UnknownLeftState(String),
    #[error("profile file `{path}` line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A computed wave: speed, samples, far states, and the sup-norm
/// residual of the stationary equation achieved by the samples.
#[derive(Clone, Debug)]
pub struct WaveProfile {
    pub c: f64,
    pub grid: Grid,
    pub phi: Vec<Vec<f64>>,
    pub e_minus: Vec<f64>,
    pub e_plus: Vec<f64>,
    pub residual_sup: f64,
}

impl WaveProfile {
    pub fn components(&self) -> usize {
        self.phi.len()
    }

    /// The component whose far-field gap is largest: the best
    /// conditioned monotone transition for phase interpolation.
    pub fn pin_component(&self) -> usize {
        pin_of(&self.e_minus, &self.e_plus)
    }

    /// Linear resample onto another grid (constant extension outside),
    /// for warm starts across refinement levels.
    pub fn resample(&self, grid: &Grid) -> WaveProfile {
        let phi = self
            .phi
            .iter()
            .enumerate()
            .map(|(i, comp)| {
                grid.nodes()
                    .into_iter()
                    .map(|z| sample_linear(comp, &self.grid, z, (self.e_minus[i], self.e_plus[i])))
                    .collect()
            })
            .collect();
        WaveProfile {
            c: self.c,
            grid: grid.clone(),
            phi,
            e_minus: self.e_minus.clone(),
            e_plus: self.e_plus.clone(),
            residual_sup: f64::NAN,
        }
    }

    /// Multi-column text: metadata in '#' comments, then rows
    /// z phi_1 ... phi_m with full float precision.
    pub fn save(&self, path: &Path) -> Result<(), WaveError> {
        let mut text = String::new();
        let _ = writeln!(text, "# traveling wave profile");
        let _ = writeln!(text, "# c = {:.16e}", self.c);
        let _ = writeln!(text, "# half_width = {:.16e}", self.grid.half_width());
        let _ = writeln!(text, "# dx = {:.16e}", self.grid.dx());
        let _ = writeln!(text, "# ghost = {}", self.grid.ghost());
        let _ = writeln!(text, "# residual_sup = {:.16e}", self.residual_sup);
        let _ = writeln!(text, "# e_minus = {}", join_floats(&self.e_minus));
        let _ = writeln!(text, "# e_plus = {}", join_floats(&self.e_plus));
        for (j, z) in self.grid.nodes().into_iter().enumerate() {
            let _ = write!(text, "{z:.16e}");
            for comp in &self.phi {
                let _ = write!(text, " {:.16e}", comp[j]);
            }
            text.push('\n');
        }
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<WaveProfile, WaveError> {
        let text = std::fs::read_to_string(path)?;
        let at = |line: usize, reason: String| WaveError::Parse {
            path: path.display().to_string(),
            line,
            reason,
        };
        let mut c = None;
        let mut half_width = None;
        let mut dx = None;
        let mut ghost = None;
        let mut residual = f64::NAN;
        let mut e_minus: Option<Vec<f64>> = None;
        let mut e_plus: Option<Vec<f64>> = None;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                if let Some((key, value)) = comment.split_once('=') {
                    let key = key.trim();
                    let value = value.trim();
                    match key {
                        "c" => c = Some(parse_f64(value, line, path)?),
                        "half_width" => half_width = Some(parse_f64(value, line, path)?),
                        "dx" => dx = Some(parse_f64(value, line, path)?),
                        "ghost" => {
                            ghost = Some(value.parse::<usize>().map_err(|e| {
                                at(line, format!("bad ghost count `{value}`: {e}"))
                            })?)
                        }
                        "residual_sup" => residual = parse_f64(value, line, path)?,
                        "e_minus" => e_minus = Some(parse_floats(value, line, path)?),
                        "e_plus" => e_plus = Some(parse_floats(value, line, path)?),
                        _ => {}
                    }
                }
                continue;
            }
            let row = parse_floats(trimmed, line, path)?;
            if let Some(first) = rows.first() {
                if row.len() != first.len() {
                    return Err(at(
                        line,
                        format!("expected {} columns, found {}", first.len(), row.len()),
                    ));
                }
            }
            if row.len() < 2 {
                return Err(at(line, "need at least z and one component".into()));
            }
            rows.push(row);
        }
        let c = c.ok_or_else(|| at(0, "missing `# c =` header".into()))?;
        let half_width = half_width.ok_or_else(|| at(0, "missing `# half_width =` header".into()))?;
        let dx = dx.ok_or_else(|| at(0, "missing `# dx =` header".into()))?;
        let ghost = ghost.ok_or_else(|| at(0, "missing `# ghost =` header".into()))?;
        let e_minus = e_minus.ok_or_else(|| at(0, "missing `# e_minus =` header".into()))?;
        let e_plus = e_plus.ok_or_else(|| at(0, "missing `# e_plus =` header".into()))?;
        let grid = Grid::with_ghost(half_width, dx, ghost)?;
        if rows.len() != grid.len() {
            return Err(at(
                0,
                format!("{} rows but the grid has {} nodes", rows.len(), grid.len()),
            ));
        }
        let m = rows[0].len() - 1;
        if e_minus.len() != m || e_plus.len() != m {
            return Err(at(0, "far-state length does not match the columns".into()));
        }
        for (j, z) in grid.nodes().into_iter().enumerate() {
            if (rows[j][0] - z).abs() > 1e-9 * dx.max(1.0) {
                return Err(at(0, format!("z column mismatch at row {}", j + 1)));
            }
        }
        let phi = (0..m)
            .map(|i| rows.iter().map(|r| r[i + 1]).collect())
            .collect();
        Ok(WaveProfile {
            c,
            grid,
            phi,
            e_minus,
            e_plus,
            residual_sup: residual,
        })
    }
}

fn join_floats(v: &[f64]) -> String {
    v.iter()
        .map(|x| format!("{x:.16e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn parse_f64(s: &str, line: usize, path: &Path) -> Result<f64, WaveError> {
    s.parse::<f64>().map_err(|e| WaveError::Parse {
        path: path.display().to_string(),
        line,
        reason: format!("bad float `{s}`: {e}"),
    })
}

fn parse_floats(s: &str, line: usize, path: &Path) -> Result<Vec<f64>, WaveError> {
    s.split_whitespace()
        .map(|tok| parse_f64(tok, line, path))
        .collect()
}

/// Nodewise residual of the stationary equation
/// N[phi_i] + c phi_i' + phi_i f_i(phi), measured with operators of
/// higher accuracy than the stepper's (quarter-step quadrature for the
/// convolution, 6th-order differences for the derivative) so the result
/// reflects the profile's own discretization error.
#[derive(Clone, Debug)]
pub struct WaveResidual {
    pub sup: f64,
    /// max over components at each node.
    pub per_node: Vec<f64>,
}

pub fn wave_residual(
    profile: &WaveProfile,
    kernel: &DispersalKernel,
    model: &ReactionModel,
) -> Result<WaveResidual, WaveError> {
    let m = profile.components();
    let n = profile.grid.len();
    let mut per_node = vec![0.0_f64; n];
    let mut per_comp: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let far = (profile.e_minus[i], profile.e_plus[i]);
        let conv = reference_convolution(kernel, &profile.grid, &profile.phi[i], far)?;
        let deriv = d1_c4(&profile.phi[i], profile.grid.dx(), far);
        let res: Vec<f64> = (0..n)
            .map(|j| conv[j] - profile.phi[i][j] + profile.c * deriv[j])
            .collect();
        per_comp.push(res);
    }
    let mut point = vec![0.0; m];
    let mut rates = vec![0.0; m];
    for j in 0..n {
        for (p, comp) in point.iter_mut().zip(&profile.phi) {
            *p = comp[j];
        }
        model.percapita_into(&point, &mut rates);
        for i in 0..m {
            let total = per_comp[i][j] + point[i] * rates[i];
            per_node[j] = per_node[j].max(total.abs());
        }
    }
    let sup = per_node.iter().fold(0.0_f64, |a, v| a.max(*v));
    Ok(WaveResidual { sup, per_node })
}

/// Relaxation controls. `guess` warm-starts from an existing profile
/// (resampled if its grid differs).
#[derive(Clone, Debug)]
pub struct RelaxOptions {
    /// Stop when sup |du/dt| over a repin interval falls below this.
    pub tol: f64,
    /// Give up (NoConvergence) past this much model time.
    pub max_time: f64,
    /// Interval between phase repins and convergence checks.
    pub repin_every: f64,
    /// Allowed deviation from the far states at the clamp join.
    pub far_tol: f64,
    /// Step override; default is the stability bound.
    pub dt: Option<f64>,
    /// Convolution scheme for the relaxation steps. Direct by default:
    /// its rounding error is smooth in z, while the FFT's is white and
    /// keeps re-seeding the amplified modes ahead of the front, which
    /// stalls the relaxation around 1e-7 and leaves a drifting profile.
    pub mode: ConvMode,
    /// Exponential tail maintenance ahead of the front; on by default
    /// because the state ahead of the front is linearly unstable and
    /// amplifies rounding noise into spurious flat tails.
    pub tail_guard: Option<TailGuard>,
    pub guess: Option<WaveProfile>,
}

impl Default for RelaxOptions {
    fn default() -> Self {
        RelaxOptions {
            tol: 1e-8,
            max_time: 600.0,
            repin_every: 1.0,
            far_tol: 1e-4,
            dt: None,
            mode: ConvMode::Direct,
            tail_guard: Some(TailGuard::default()),
            guess: None,
        }
    }
}

fn pin_of(left: &[f64], right: &[f64]) -> usize {
    let mut best = 0;
    let mut gap = -1.0;
    for (i, (l, r)) in left.iter().zip(right).enumerate() {
        let g = (l - r).abs();
        if g > gap {
            gap = g;
            best = i;
        }
    }
    best
}

/// Linear sample of `field` (on `grid`) at position z, constant far
/// extension.
fn sample_linear(field: &[f64], grid: &Grid, z: f64, far: (f64, f64)) -> f64 {
    let pos = (z + grid.half_width()) / grid.dx();
    if pos <= 0.0 {
        return if pos < -1e-9 { far.0 } else { field[0] };
    }
    let last = (field.len() - 1) as f64;
    if pos >= last {
        return if pos > last + 1e-9 {
            far.1
        } else {
            field[field.len() - 1]
        };
    }
    let k = pos.floor() as usize;
    let frac = pos - k as f64;
    (1.0 - frac) * field[k] + frac * field[k + 1]
}

/// z of the sign change of field - target nearest the origin.
fn crossing_nearest_zero(grid: &Grid, field: &[f64], target: f64) -> Option<f64> {
    let mut best: Option<f64> = None;
    for j in 0..field.len() - 1 {
        let d0 = field[j] - target;
        let d1 = field[j + 1] - target;
        let z = if d0 == 0.0 {
            grid.node(j)
        } else if d0 * d1 < 0.0 {
            grid.node(j) + grid.dx() * d0 / (d0 - d1)
        } else {
            continue;
        };
        if best.map_or(true, |b| z.abs() < b.abs()) {
            best = Some(z);
        }
    }
    best
}

/// In-place translation: new(z) = old(z + shift), linear interpolation,
/// constant extension by the far states.
fn translate_profile(phi: &mut [Vec<f64>], dx: f64, shift: f64, far: &[(f64, f64)]) {
    let s = shift / dx;
    let k = s.floor() as isize;
    let frac = s - k as f64;
    for (comp, farc) in phi.iter_mut().zip(far) {
        let n = comp.len() as isize;
        let get = |j: isize, old: &[f64]| -> f64 {
            if j < 0 {
                farc.0
            } else if j >= n {
                farc.1
            } else {
                old[j as usize]
            }
        };
        let old = comp.clone();
        for j in 0..n {
            comp[j as usize] =
                (1.0 - frac) * get(j + k, &old) + frac * get(j + k + 1, &old);
        }
    }
}

/// Initial left state when the model carries none: for the epidemic
/// family, the mass-balance estimate gamma/beta·ln(s*/s0) = s* - s0
/// seeds the susceptible floor; other components start at zero. The
/// relaxation then measures the actual left state from the solution.
fn left_state_guess(model: &ReactionModel) -> Result<Vec<f64>, WaveError> {
    if let Some(em) = model.e_minus() {
        return Ok(em.to_vec());
    }
    let p = model.params();
    let (beta, gamma, s_star) = match (p.get("beta"), p.get("gamma"), p.get("s_star")) {
        (Some(b), Some(g), Some(s)) => (*b, *g, *s),
        _ => return Err(WaveError::UnknownLeftState(model.name().to_string())),
    };
    let h = |s0: f64| gamma / beta * (s_star / s0).ln() - (s_star - s0);
    let mut lo = 1e-12 * s_star;
    let mut hi = s_star * (1.0 - 1e-9);
    if !(h(lo) > 0.0 && h(hi) < 0.0) {
        return Err(WaveError::UnknownLeftState(model.name().to_string()));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut state = vec![0.0; model.components()];
    state[0] = 0.5 * (lo + hi);
    Ok(state)
}

/// Relax the moving-frame dynamics at speed c down to a wave profile.
///
/// Models without a fixed left state (the epidemic family) run in
/// free-left mode: the left far-field constants are re-measured from
/// the solution near the left edge at every repin, and the returned
/// e_minus is that measured state.
/// Tail decay rate of the discrete stationary wave: the small root of
/// the dispersion relation assembled from the stepping operators (tap
/// weight MGF, 4th-order derivative symbol, linear growth rate). The
/// profile the relaxation settles on carries this exponent, not the
/// continuum one; seeding and guarding with it removes the residual
/// drift the continuum rate would leave. Falls back to the continuum
/// rate when no root brackets nearby (speeds at or below minimal).
pub(crate) fn discrete_tail_rate(
    kernel: &DispersalKernel,
    grid: &Grid,
    r: f64,
    c: f64,
    lambda_c: f64,
) -> f64 {
    let Ok(conv) = Convolver::new(kernel, grid, ConvMode::Direct) else {
        return lambda_c;
    };
    let s = |l: f64| conv.discrete_mgf(l) - 1.0 + r - c * d1_c4_symbol(l, grid.dx());
    let mut lo = 0.8 * lambda_c;
    let mut hi = 1.2 * lambda_c;
    if !(s(lo) > 0.0 && s(hi) < 0.0) {
        return lambda_c;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if s(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn compute_profile(
    model: &ReactionModel,
    kernel: &DispersalKernel,
    c: f64,
    grid: &Grid,
    opts: &RelaxOptions,
) -> Result<WaveProfile, WaveError> {
    let m = model.components();
    let e_plus = model.e_plus().to_vec();
    let free_left = model.e_minus().is_none();
    let mut left = match &opts.guess {
        Some(g) if free_left => g.e_minus.clone(),
        _ => left_state_guess(model)?,
    };

    // Decay-scale check: the wave's tail rate must fit in the domain.
    let problem = SpeedProblem::new(kernel.clone(), model.spreading_rate())?;
    let lambda = match problem.weight_rate(c) {
        Ok(l) => l,
        Err(SpectralError::NoRoot { .. }) => problem.minimal_speed()?.lambda,
        Err(e) => return Err(e.into()),
    };
    if lambda * grid.half_width() < -(1e-6_f64).ln() {
        return Err(WaveError::GridTooNarrow {
            lambda,
            half_width: grid.half_width(),
        });
    }
    let lambda_h = discrete_tail_rate(kernel, grid, model.spreading_rate(), c, lambda);

    let n = grid.len();
    let pin = pin_of(&left, &e_plus);
    let pin_gap0 = (left[pin] - e_plus[pin]).abs();

    // Front-like guess: logistic ramp with the tail's decay scale, or a
    // resampled warm start. In free-left mode the extinct components
    // get a pulse seed instead of a flat ramp to zero.
    let phi0: Vec<Vec<f64>> = match &opts.guess {
        Some(g) => {
            let resampled = if g.grid == *grid {
                g.clone()
            } else {
                g.resample(grid)
            };
            resampled.phi
        }
        None => (0..m)
            .map(|i| {
                grid.nodes()
                    .into_iter()
                    .map(|z| {
                        let ramp = 1.0 / (1.0 + (lambda_h * z).exp());
                        let base = e_plus[i] + (left[i] - e_plus[i]) * ramp;
                        if free_left && left[i] == 0.0 && e_plus[i] == 0.0 {
                            // Pulse seed for a component vanishing on both
                            // ends (the infective hump).
                            0.2 * pin_gap0.max(1.0) * (-(lambda_h * z / 5.0).powi(2)).exp()
                        } else {
                            base
                        }
                    })
                    .collect()
            })
            .collect(),
    };

    let far: Vec<(f64, f64)> = left.iter().zip(&e_plus).map(|(l, r)| (*l, *r)).collect();
    let mut state = SimState::new(0.0, phi0, Frame::Moving { c }, far)?;
    let mut stepper = Stepper::new(model, kernel, grid, opts.mode)?;
    // The guarded tail extrapolates at the discrete dispersion root so
    // the maintained tail is the stationary profile's own continuation.
    stepper.set_tail_guard(opts.tail_guard.map(|g| TailGuard {
        rate: Some(g.rate.unwrap_or(lambda_h)),
        ..g
    }));
    let control = match opts.dt {
        Some(dt) => StepControl::with_dt(dt, model, grid, state.frame)?,
        None => StepControl::auto(model, grid, state.frame),
    };
    let steps_per_seg = ((opts.repin_every / control.dt).round() as usize).max(1);
    let band = CLAMP_BAND.min(n / 2);

    let mut converged = false;
    let mut rate = f64::INFINITY;
    while state.t < opts.max_time {
        let before = state.u.clone();
        for _ in 0..steps_per_seg {
            stepper.step(&mut state, &control)?;
        }
        let dt_seg = steps_per_seg as f64 * control.dt;
        rate = 0.0;
        for (new_c, old_c) in state.u.iter().zip(&before) {
            for (a, b) in new_c.iter().zip(old_c) {
                rate = rate.max((a - b).abs());
            }
        }
        rate /= dt_seg;

        if free_left {
            // Measure the emergent left state just inside the clamp band.
            let lo = band;
            let hi = (band + 10).min(n);
            for i in 0..m {
                let mean =
                    state.u[i][lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
                left[i] = mean;
                state.far_field[i].0 = mean;
            }
        }

        // Repin: translate so the pin component crosses its far-field
        // midpoint at z = 0.
        let target = 0.5 * (left[pin] + e_plus[pin]);
        let span = {
            let comp = &state.u[pin];
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for v in comp {
                lo = lo.min(*v);
                hi = hi.max(*v);
            }
            hi - lo
        };
        if span < 0.1 * pin_gap0 {
            return Err(WaveError::CollapseToEquilibrium { t: state.t });
        }
        let Some(z0) = crossing_nearest_zero(grid, &state.u[pin], target) else {
            return Err(WaveError::CollapseToEquilibrium { t: state.t });
        };
        if z0 != 0.0 {
            translate_profile(&mut state.u, grid.dx(), z0, &state.far_field);
        }

        if rate < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(WaveError::NoConvergence { rate, t: state.t });
    }

    // The first unclamped nodes must sit near the far states, or the
    // domain cut the wave's tails.
    for i in 0..m {
        let dl = (state.u[i][band] - left[i]).abs();
        let dr = (state.u[i][n - 1 - band] - e_plus[i]).abs();
        let dev = dl.max(dr);
        if dev > opts.far_tol {
            return Err(WaveError::FarFieldMismatch {
                component: i,
                deviation: dev,
            });
        }
    }

    let mut phi = state.u;
    for comp in &mut phi {
        for v in comp.iter_mut() {
            if *v < PROFILE_FLOOR {
                *v = PROFILE_FLOOR;
            }
        }
    }
    let mut profile = WaveProfile {
        c,
        grid: grid.clone(),
        phi,
        e_minus: left,
        e_plus,
        residual_sup: f64::NAN,
    };
    profile.residual_sup = wave_residual(&profile, kernel, model)?.sup;
    Ok(profile)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Gaussian;
    use crate::models::ModelCatalog;
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn gaussian() -> DispersalKernel {
        DispersalKernel::from_shape(Arc::new(Gaussian::new(1.0).unwrap()))
    }

    fn pp2() -> ReactionModel {
        ModelCatalog::builtin()
            .build("pp2", &BTreeMap::new(), None)
            .unwrap()
    }

    fn constant_profile(model: &ReactionModel, grid: &Grid, c: f64) -> WaveProfile {
        let e = model.e_minus().unwrap().to_vec();
        WaveProfile {
            c,
            grid: grid.clone(),
            phi: e.iter().map(|v| vec![*v; grid.len()]).collect(),
            e_minus: e.clone(),
            e_plus: e,
            residual_sup: f64::NAN,
        }
    }

    #[test]
    fn constant_equilibrium_has_tiny_residual() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(25.0, 0.1, &kernel).unwrap();
        let profile = constant_profile(&model, &grid, 1.7);
        let res = wave_residual(&profile, &kernel, &model).unwrap();
        assert!(res.sup <= 1e-10, "sup = {}", res.sup);
    }

    #[test]
    fn residual_scales_with_a_perturbation() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(25.0, 0.1, &kernel).unwrap();
        let mut profile = constant_profile(&model, &grid, 1.7);
        for (j, z) in grid.nodes().into_iter().enumerate() {
            profile.phi[0][j] += 0.01 * (-z * z / 4.0).exp();
        }
        let res = wave_residual(&profile, &kernel, &model).unwrap();
        assert!(
            res.sup > 1e-3 && res.sup < 1e-1,
            "expected Theta(0.01), got {}",
            res.sup
        );
    }

    #[test]
    fn helpers_translate_and_find_crossings() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(10.0, 0.5, &kernel).unwrap();
        let field: Vec<f64> = grid
            .nodes()
            .into_iter()
            .map(|z| 1.0 / (1.0 + z.exp()))
            .collect();
        // Logistic through 0.5 at z = 0.
        let z0 = crossing_nearest_zero(&grid, &field, 0.5).unwrap();
        assert!(z0.abs() < 1e-12, "z0 = {z0}");
        // Shift right by 1.3 grid units and re-find.
        let mut phi = vec![field.clone()];
        translate_profile(&mut phi, grid.dx(), -1.3 * grid.dx(), &[(1.0, 0.0)]);
        let z1 = crossing_nearest_zero(&grid, &phi[0], 0.5).unwrap();
        assert!(
            (z1 - 1.3 * grid.dx()).abs() < 0.02,
            "crossing moved to {z1}"
        );
    }

    #[test]
    fn pin_picks_the_largest_gap() {
        assert_eq!(pin_of(&[7.0 / 9.0, 5.0 / 9.0], &[1.0, 0.0]), 1);
        assert_eq!(pin_of(&[0.2, 0.0], &[1.0, 0.0]), 0);
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(12.0, 0.3, &kernel).unwrap();
        let mut profile = constant_profile(&model, &grid, 1.654321);
        for (j, z) in grid.nodes().into_iter().enumerate() {
            profile.phi[0][j] = 0.7 + 0.1 * (0.37 * z).sin();
            profile.phi[1][j] = (0.5 + 0.2 * (0.21 * z).cos()).abs();
        }
        profile.residual_sup = 3.25e-7;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("wave.dat");
        profile.save(&path).unwrap();
        let back = WaveProfile::load(&path).unwrap();
        assert_eq!(back.c, profile.c);
        assert_eq!(back.grid, profile.grid);
        assert_eq!(back.phi, profile.phi);
        assert_eq!(back.e_minus, profile.e_minus);
        assert_eq!(back.e_plus, profile.e_plus);
        assert_eq!(back.residual_sup, profile.residual_sup);
    }

    #[test]
    fn load_rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.dat");
        std::fs::write(&path, "# c = 1.0\n0.0 nope 2.0\n").unwrap();
        assert!(matches!(
            WaveProfile::load(&path),
            Err(WaveError::Parse { .. })
        ));
        std::fs::write(&path, "0.0 1.0\n").unwrap();
        assert!(matches!(
            WaveProfile::load(&path),
            Err(WaveError::Parse { .. })
        ));
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(10.0, 0.2, &kernel).unwrap();
        let c = 1.1 * 1.0_f64.exp().sqrt();
        let err = compute_profile(&model, &kernel, c, &grid, &RelaxOptions::default());
        assert!(matches!(err, Err(WaveError::GridTooNarrow { .. })));
    }

    #[test]
    fn pp2_profile_relaxes_on_a_coarse_grid() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(60.0, 0.2, &kernel).unwrap();
        let c = 1.1 * 1.0_f64.exp().sqrt();
        let opts = RelaxOptions {
            tol: 1e-7,
            max_time: 150.0,
            ..Default::default()
        };
        let profile = compute_profile(&model, &kernel, c, &grid, &opts).unwrap();

        // Pin: second component through its far midpoint at z = 0.
        let pin = profile.pin_component();
        assert_eq!(pin, 1);
        let target = 0.5 * (profile.e_minus[pin] + profile.e_plus[pin]);
        let at0 = profile.phi[pin][grid.center()];
        assert!(
            (at0 - target).abs() < 1e-6,
            "pin value {at0} vs target {target}"
        );

        // Positivity, box containment, far-field approach.
        let hi = model.invariant_box();
        for (i, comp) in profile.phi.iter().enumerate() {
            for v in comp {
                assert!(*v > 0.0);
                assert!(*v <= hi[i] + 1e-6);
            }
        }
        for i in 0..2 {
            assert!((profile.phi[i][0] - profile.e_minus[i]).abs() < 1e-4);
            assert!(
                (profile.phi[i][grid.len() - 1] - profile.e_plus[i]).abs() < 1e-4
            );
        }
        assert!((profile.e_minus[0] - 7.0 / 9.0).abs() < 1e-9);
        assert!((profile.e_minus[1] - 5.0 / 9.0).abs() < 1e-9);

        // Residual: refined-quadrature error of the relaxed state, a few
        // orders above the fine-grid level at this coarse dx.
        assert!(profile.residual_sup < 1e-4, "residual {}", profile.residual_sup);

        // Growth bound along the profile.
        assert!(model.growth_check(&profile.phi).ok);

        // Translation by whole nodes changes the residual by at most ~2x.
        let mut shifted = profile.clone();
        translate_profile(
            &mut shifted.phi,
            grid.dx(),
            3.0 * grid.dx(),
            &[
                (profile.e_minus[0], profile.e_plus[0]),
                (profile.e_minus[1], profile.e_plus[1]),
            ],
        );
        let r0 = wave_residual(&profile, &kernel, &model).unwrap().sup;
        let r1 = wave_residual(&shifted, &kernel, &model).unwrap().sup;
        assert!(r1 <= 2.0 * r0 + 1e-12, "r0 = {r0}, r1 = {r1}");
    }

    #[test]
    fn subminimal_speed_fails_honestly() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(40.0, 0.2, &kernel).unwrap();
        let c = 0.3 * 1.0_f64.exp().sqrt();
        let opts = RelaxOptions {
            max_time: 60.0,
            ..Default::default()
        };
        let err = compute_profile(&model, &kernel, c, &grid, &opts);
        assert!(
            matches!(
                err,
                Err(WaveError::NoConvergence { .. })
                    | Err(WaveError::CollapseToEquilibrium { .. })
            ),
            "got {err:?}"
        );
    }

    #[test]
    fn epidemic_profile_measures_its_left_state() {
        let catalog = ModelCatalog::builtin();
        let model = catalog.build("epidemic", &BTreeMap::new(), None).unwrap();
        let kernel = gaussian();
        let grid = Grid::for_kernel(60.0, 0.2, &kernel).unwrap();
        let c = 1.2 * 1.0_f64.exp().sqrt();
        let opts = RelaxOptions {
            tol: 1e-7,
            max_time: 400.0,
            ..Default::default()
        };
        let profile = compute_profile(&model, &kernel, c, &grid, &opts).unwrap();
        let s0 = profile.e_minus[0];
        assert!(s0 > 0.0 && s0 < 1.0, "s0 = {s0}");
        assert!(profile.e_minus[1].abs() < 1e-4);
        // Susceptibles rise from s0 to s*; infectives form a hump.
        assert!(profile.phi[0][0] < profile.phi[0][grid.len() - 1]);
        let hump = profile.phi[1].iter().cloned().fold(0.0_f64, f64::max);
        assert!(hump > 1e-2, "hump = {hump}");
        assert!(profile.phi[1][0] < 1e-3 && profile.phi[1][grid.len() - 1] < 1e-3);
    }
}
