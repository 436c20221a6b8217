//! Explicit time stepping of the nonlocal system, in the lab frame
//! u_t = N[u] + u f(u) or the moving frame u_t = N[u] + c u_z + u f(u),
//! where N[u] = J*u - u with constant far-field extension.
//!
//! The scheme is classical four-stage Runge-Kutta. N is a bounded
//! operator, so no implicit treatment is needed; stability is governed
//! by the advection and reaction CFL numbers carried in `StepControl`.

use crate::kernels::{d1_c4, ConvMode, Convolver, DispersalKernel, Grid, KernelError};
use crate::models::ReactionModel;
use thiserror::Error;

/// Nodes on each edge reset to the far-field constants after every step.
/// Suppresses reflection drift from the truncated domain.
pub const CLAMP_BAND: usize = 5;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("component {component} reached |u| = {value:.3e} at t = {t}: unstable, reduce dt")]
    BlowUp { t: f64, component: usize, value: f64 },
    #[error("dt = {dt} exceeds the stability bound {bound:.6} ({which})")]
    UnstableDt { dt: f64, bound: f64, which: &'static str },
    #[error("state shape mismatch: {0}")]
    Shape(String),
    #[error("{fraction:.3e} of the mass escaped the half-domain before t_end; widen the grid")]
    DomainTooSmall { fraction: f64 },
    #[error("initial data is identically zero")]
    DegenerateInput,
    #[error("observer failed at t = {t}: {reason}")]
    Observer { t: f64, reason: String },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Coordinate frame: lab, or co-moving at speed c (z = x - ct), which
/// adds the advection term +c u_z to the right-hand side.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Frame {
    Lab,
    Moving { c: f64 },
}

impl Frame {
    pub fn speed(&self) -> f64 {
        match self {
            Frame::Lab => 0.0,
            Frame::Moving { c } => *c,
        }
    }
}

/// The evolving fields plus everything a step needs to know about them.
#[derive(Clone, Debug)]
pub struct SimState {
    pub t: f64,
    /// One sample array per component, all of the grid's length.
    pub u: Vec<Vec<f64>>,
    pub frame: Frame,
    /// Per-component (left, right) far-field constants, used both for
    /// the convolution extension and the edge clamp band.
    pub far_field: Vec<(f64, f64)>,
    /// Count of nodes clamped up to zero so far: a discretization
    /// quality signal, not an error.
    pub clamped: u64,
}

impl SimState {
    pub fn new(
        t: f64,
        u: Vec<Vec<f64>>,
        frame: Frame,
        far_field: Vec<(f64, f64)>,
    ) -> Result<Self, SimError> {
        if u.is_empty() {
            return Err(SimError::Shape("no components".into()));
        }
        if far_field.len() != u.len() {
            return Err(SimError::Shape(format!(
                "{} components but {} far-field pairs",
                u.len(),
                far_field.len()
            )));
        }
        let n = u[0].len();
        if u.iter().any(|c| c.len() != n) {
            return Err(SimError::Shape("ragged component arrays".into()));
        }
        if u.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SimError::Shape("non-finite initial values".into()));
        }
        Ok(SimState {
            t,
            u,
            frame,
            far_field,
            clamped: 0,
        })
    }

    /// A spatially constant state, far field included.
    pub fn uniform(value: &[f64], n: usize, frame: Frame) -> Result<Self, SimError> {
        let u = value.iter().map(|v| vec![*v; n]).collect();
        let far = value.iter().map(|v| (*v, *v)).collect();
        SimState::new(0.0, u, frame, far)
    }

    pub fn components(&self) -> usize {
        self.u.len()
    }

    pub fn len(&self) -> usize {
        self.u[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Time-step sizing: dt must respect both the advection bound
/// cfl_advection * dx / |c| and the reaction bound
/// cfl_reaction / (1 + max per-capita rate over the box).
#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub dt: f64,
    pub cfl_advection: f64,
    pub cfl_reaction: f64,
}

/// Box corners with unbounded components replaced by a finite working
/// cap, so rate bounds stay meaningful for models like the epidemic one
/// whose second component has no a-priori ceiling.
pub fn effective_caps(model: &ReactionModel) -> Vec<f64> {
    let finite_max = model
        .invariant_box()
        .iter()
        .filter(|b| b.is_finite())
        .fold(1.0_f64, |acc, b| acc.max(*b));
    model
        .invariant_box()
        .iter()
        .map(|b| if b.is_finite() { *b } else { finite_max })
        .collect()
}

impl StepControl {
    pub const DEFAULT_CFL_ADVECTION: f64 = 0.8;
    pub const DEFAULT_CFL_REACTION: f64 = 0.5;

    /// Largest admissible dt for this model, grid, and frame.
    pub fn max_dt(model: &ReactionModel, grid: &Grid, frame: Frame) -> f64 {
        let adv = if frame.speed().abs() > 0.0 {
            Self::DEFAULT_CFL_ADVECTION * grid.dx() / frame.speed().abs()
        } else {
            f64::INFINITY
        };
        let rate = model.max_rate(&effective_caps(model));
        let react = Self::DEFAULT_CFL_REACTION / (1.0 + rate);
        adv.min(react)
    }

    /// dt set to the stability bound.
    pub fn auto(model: &ReactionModel, grid: &Grid, frame: Frame) -> Self {
        StepControl {
            dt: Self::max_dt(model, grid, frame),
            cfl_advection: Self::DEFAULT_CFL_ADVECTION,
            cfl_reaction: Self::DEFAULT_CFL_REACTION,
        }
    }

    /// Explicit dt, rejected if it violates either bound.
    pub fn with_dt(
        dt: f64,
        model: &ReactionModel,
        grid: &Grid,
        frame: Frame,
    ) -> Result<Self, SimError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(SimError::UnstableDt {
                dt,
                bound: 0.0,
                which: "dt must be positive and finite",
            });
        }
        let adv = if frame.speed().abs() > 0.0 {
            Self::DEFAULT_CFL_ADVECTION * grid.dx() / frame.speed().abs()
        } else {
            f64::INFINITY
        };
        if dt > adv * (1.0 + 1e-12) {
            return Err(SimError::UnstableDt {
                dt,
                bound: adv,
                which: "advection",
            });
        }
        let react =
            Self::DEFAULT_CFL_REACTION / (1.0 + model.max_rate(&effective_caps(model)));
        if dt > react * (1.0 + 1e-12) {
            return Err(SimError::UnstableDt {
                dt,
                bound: react,
                which: "reaction",
            });
        }
        Ok(StepControl {
            dt,
            cfl_advection: Self::DEFAULT_CFL_ADVECTION,
            cfl_reaction: Self::DEFAULT_CFL_REACTION,
        })
    }
}

/// Callback invoked after every accepted step and once for the initial
/// state; `sample` marks the configured output cadence (always true for
/// the initial state and the final one).
pub trait Observer {
    fn on_step(&mut self, state: &SimState, sample: bool) -> Result<(), SimError>;
}

/// An observer that does nothing.
pub struct NullObserver;

impl Observer for NullObserver {
    fn on_step(&mut self, _state: &SimState, _sample: bool) -> Result<(), SimError> {
        Ok(())
    }
}

/// Maintains a fitted exponential tail in components that vanish ahead
/// of a front. The state ahead of an invasion front is linearly
/// unstable, so rounding noise seeded there grows into spurious flat
/// modes that outrun the genuine tail and corrupt the front's speed
/// selection. Replacing sub-floor values by the extrapolation of the
/// resolved tail keeps perturbations inside the exponentially weighted
/// class the stability machinery addresses; the resolved front
/// (amplitudes above `floor`) evolves freely.
#[derive(Clone, Copy, Debug)]
pub struct TailGuard {
    /// Amplitude below which the tail is replaced by the extrapolation.
    pub floor: f64,
    /// Decay rate of the extrapolated tail. When known (a wave run,
    /// where it is the discrete dispersion root), pass it; the guarded
    /// tail then matches the stationary profile's own asymptotics.
    /// When None the rate is fitted from the window just above the
    /// floor each step.
    pub rate: Option<f64>,
    /// Height of the fitting window above `floor`, in decades.
    pub fit_decades: f64,
    /// Minimum credible decay rate; a flatter fit (no front, or a
    /// collapsing profile) disables the guard for that step.
    pub min_rate: f64,
}

impl Default for TailGuard {
    fn default() -> Self {
        TailGuard {
            floor: 1e-10,
            rate: None,
            fit_decades: 3.0,
            min_rate: 0.05,
        }
    }
}

impl TailGuard {
    /// A guard extrapolating at the given fixed decay rate.
    pub fn with_rate(rate: f64) -> Self {
        TailGuard {
            rate: Some(rate),
            ..TailGuard::default()
        }
    }

    /// Overwrite the sub-floor right tail of one component with the
    /// exponential continuation of the value at the floor crossing.
    /// No-op when the field never drops below the floor, or when no
    /// rate is prescribed and the fit is not a clean decay.
    fn apply(&self, u: &mut [f64], dx: f64) {
        let n = u.len();
        let Some(cut) = (0..n).rev().find(|&j| u[j] >= self.floor) else {
            return;
        };
        if cut == n - 1 {
            return;
        }
        let slope = match self.rate {
            Some(r) => -r,
            None => {
                // Fit ln u over the window [floor, ceiling] at the cut.
                let ceiling = self.floor * 10f64.powf(self.fit_decades);
                let mut lo = cut;
                while lo > 0 && u[lo - 1] > 0.0 && u[lo - 1] <= ceiling && cut - lo < 400 {
                    lo -= 1;
                }
                let pts = cut - lo + 1;
                if pts < 6 {
                    return;
                }
                let mut zbar = 0.0;
                let mut ybar = 0.0;
                for j in lo..=cut {
                    zbar += j as f64;
                    ybar += u[j].ln();
                }
                zbar /= pts as f64;
                ybar /= pts as f64;
                let mut num = 0.0;
                let mut den = 0.0;
                for j in lo..=cut {
                    let dz = j as f64 - zbar;
                    num += dz * (u[j].ln() - ybar);
                    den += dz * dz;
                }
                let slope = num / den / dx;
                if !(slope <= -self.min_rate) {
                    return;
                }
                slope
            }
        };
        let factor = (slope * dx).exp();
        let mut val = u[cut];
        for v in u.iter_mut().skip(cut + 1) {
            val *= factor;
            *v = if val < 1e-290 { 0.0 } else { val };
        }
    }
}

/// Pins the far right tail of decaying components to a fixed reference
/// field. A perturbed wave run needs this instead of [`TailGuard`]:
/// the guard extrapolates from the last node above its floor, so a
/// perturbation whose leading edge climbs above the floor drags that
/// anchor forward and the guard then manufactures a coherent tail at
/// the marginal decay rate, with exponentially growing weighted
/// amplitude. Pinning to the reference instead fixes the anchor once:
/// nodes where the reference is below the floor are rewritten with the
/// reference's own values, so the weighted perturbation there is
/// identically zero. On the unbounded line the content deleted this
/// way is exactly the part whose weighted amplitude vanishes; inside a
/// finite box it is the part the box cannot represent faithfully.
#[derive(Clone, Debug)]
pub struct TailPin {
    // Per component: None leaves the component free; (cut, tail) holds
    // the reference values for nodes beyond cut, the last node where
    // the reference is at or above the floor.
    pinned: Vec<Option<(usize, Vec<f64>)>>,
}

impl TailPin {
    pub const DEFAULT_FLOOR: f64 = 1e-10;

    /// Pin components with zero right far-field to `reference`, which
    /// must be on the run grid. Components whose far field is nonzero,
    /// or whose reference never drops below `floor`, stay free.
    pub fn new(reference: &[Vec<f64>], far_field: &[(f64, f64)], floor: f64) -> Self {
        let pinned = reference
            .iter()
            .zip(far_field)
            .map(|(comp, &(_, fr))| {
                if fr != 0.0 {
                    return None;
                }
                let cut = (0..comp.len()).rev().find(|&j| comp[j] >= floor)?;
                if cut + 1 >= comp.len() {
                    return None;
                }
                Some((cut, comp[cut + 1..].to_vec()))
            })
            .collect();
        TailPin { pinned }
    }

    /// Restore the reference tail beyond each component's cut.
    fn apply(&self, u: &mut [Vec<f64>]) {
        for (comp, pin) in u.iter_mut().zip(&self.pinned) {
            if let Some((cut, tail)) = pin {
                comp[cut + 1..].copy_from_slice(tail);
            }
        }
    }

    /// Nodes rewritten in any component, as a guard band for observers
    /// that must ignore pinned data.
    pub fn first_pinned_index(&self) -> Option<usize> {
        self.pinned
            .iter()
            .flatten()
            .map(|(cut, _)| cut + 1)
            .min()
    }
}

/// Conservative sixth-difference low-pass filter, damping factor
/// 1 - strength * sin^6(theta/2) per application at node frequency
/// theta. The centered advection stencil gives grid-scale sawtooth
/// content a spurious forward group velocity, and ahead of a front
/// every frequency is neutral or growing, so that content survives to
/// seed eruptions; time stepping adds no dissipation of its own on the
/// imaginary axis worth relying on. One filter pass per step removes
/// the sawtooth band in a few steps while perturbing structure at the
/// profile's decay rate by under 1e-9 per unit time. The stencil sums
/// to zero, so constants (and far-field plateaus) pass through exactly.
#[derive(Clone, Copy, Debug)]
pub struct GridFilter {
    /// Damping of the two-node sawtooth per application, in (0, 1].
    pub strength: f64,
}

impl Default for GridFilter {
    fn default() -> Self {
        GridFilter { strength: 0.5 }
    }
}

impl GridFilter {
    fn apply(&self, u: &mut [f64], scratch: &mut Vec<f64>) {
        let n = u.len();
        if n < 7 {
            return;
        }
        scratch.clear();
        scratch.extend_from_slice(u);
        let s = self.strength / 64.0;
        for j in 3..n - 3 {
            let d6 = scratch[j - 3] - 6.0 * scratch[j - 2] + 15.0 * scratch[j - 1]
                - 20.0 * scratch[j]
                + 15.0 * scratch[j + 1]
                - 6.0 * scratch[j + 2]
                + scratch[j + 3];
            u[j] += s * d6;
        }
    }
}

/// Owns the convolution plan and scratch buffers for repeated stepping
/// of one (model, kernel, grid) triple.
pub struct Stepper {
    model: ReactionModel,
    conv: Convolver,
    grid: Grid,
    blowup: Vec<f64>,
    tail_guard: Option<TailGuard>,
    tail_pin: Option<TailPin>,
    grid_filter: Option<GridFilter>,
    // RK4 scratch: stage slopes, staged field, J*u buffer, rate buffer.
    k: [Vec<Vec<f64>>; 4],
    stage: Vec<Vec<f64>>,
    jbuf: Vec<f64>,
    rates: Vec<f64>,
}

impl Stepper {
    pub fn new(
        model: &ReactionModel,
        kernel: &DispersalKernel,
        grid: &Grid,
        mode: ConvMode,
    ) -> Result<Self, SimError> {
        let conv = Convolver::new(kernel, grid, mode)?;
        let m = model.components();
        let n = grid.len();
        let zeros = || vec![vec![0.0; n]; m];
        // Instability detector: far beyond any box bound. Unbounded
        // components get a fixed generous ceiling.
        let blowup = model
            .invariant_box()
            .iter()
            .map(|b| if b.is_finite() { 1e3 * b.max(1.0) } else { 1e6 })
            .collect();
        Ok(Stepper {
            model: model.clone(),
            conv,
            grid: grid.clone(),
            blowup,
            tail_guard: None,
            tail_pin: None,
            grid_filter: None,
            k: [zeros(), zeros(), zeros(), zeros()],
            stage: zeros(),
            jbuf: vec![0.0; n],
            rates: vec![0.0; m],
        })
    }

    /// Enable or disable the exponential tail guard. It acts only on
    /// components whose right far-field value is zero.
    pub fn set_tail_guard(&mut self, guard: Option<TailGuard>) {
        self.tail_guard = guard;
    }

    pub fn tail_guard(&self) -> Option<TailGuard> {
        self.tail_guard
    }

    /// Enable or disable the reference tail pin. Takes precedence over
    /// the tail guard on the components it pins.
    pub fn set_tail_pin(&mut self, pin: Option<TailPin>) {
        self.tail_pin = pin;
    }

    pub fn tail_pin(&self) -> Option<&TailPin> {
        self.tail_pin.as_ref()
    }

    /// Enable or disable grid-scale filtering after each step.
    pub fn set_grid_filter(&mut self, filter: Option<GridFilter>) {
        self.grid_filter = filter;
    }

    pub fn grid_filter(&self) -> Option<GridFilter> {
        self.grid_filter
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &ReactionModel {
        &self.model
    }

    /// Right-hand side N[u] + c u_z + u f(u) into `out`.
    fn rhs(&mut self, u: &[Vec<f64>], far: &[(f64, f64)], c: f64, slot: usize) {
        let m = u.len();
        let dx = self.grid.dx();
        for i in 0..m {
            self.conv.apply_into(&u[i], far[i], &mut self.jbuf);
            let out = &mut self.k[slot][i];
            for (o, (jv, uv)) in out.iter_mut().zip(self.jbuf.iter().zip(&u[i])) {
                *o = jv - uv;
            }
            if c != 0.0 {
                let dz = d1_c4(&u[i], dx, far[i]);
                for (o, d) in out.iter_mut().zip(dz) {
                    *o += c * d;
                }
            }
        }
        let n = u[0].len();
        let mut point = vec![0.0; m];
        for j in 0..n {
            for (p, comp) in point.iter_mut().zip(u) {
                *p = comp[j];
            }
            self.model.percapita_into(&point, &mut self.rates);
            for i in 0..m {
                self.k[slot][i][j] += point[i] * self.rates[i];
            }
        }
    }

    /// One RK4 step of size `dt`, in place. Far-field clamping, the
    /// tail guard, the positivity clamp, and the blow-up check run
    /// after the update.
    fn step_dt(&mut self, state: &mut SimState, dt: f64) -> Result<(), SimError> {
        let m = state.components();
        let n = state.len();
        if m != self.model.components() {
            return Err(SimError::Shape(format!(
                "state has {m} components, model has {}",
                self.model.components()
            )));
        }
        if n != self.grid.len() {
            return Err(SimError::Shape(format!(
                "state length {n} does not match grid length {}",
                self.grid.len()
            )));
        }
        let c = state.frame.speed();
        let far = state.far_field.clone();

        self.rhs(&state.u, &far, c, 0);
        for i in 0..m {
            for j in 0..n {
                self.stage[i][j] = state.u[i][j] + 0.5 * dt * self.k[0][i][j];
            }
        }
        let staged = std::mem::take(&mut self.stage);
        self.rhs(&staged, &far, c, 1);
        self.stage = staged;
        for i in 0..m {
            for j in 0..n {
                self.stage[i][j] = state.u[i][j] + 0.5 * dt * self.k[1][i][j];
            }
        }
        let staged = std::mem::take(&mut self.stage);
        self.rhs(&staged, &far, c, 2);
        self.stage = staged;
        for i in 0..m {
            for j in 0..n {
                self.stage[i][j] = state.u[i][j] + dt * self.k[2][i][j];
            }
        }
        let staged = std::mem::take(&mut self.stage);
        self.rhs(&staged, &far, c, 3);
        self.stage = staged;

        let w = dt / 6.0;
        for i in 0..m {
            for j in 0..n {
                state.u[i][j] += w
                    * (self.k[0][i][j]
                        + 2.0 * self.k[1][i][j]
                        + 2.0 * self.k[2][i][j]
                        + self.k[3][i][j]);
            }
        }

        // Blow-up detection on the raw update: the positivity clamp
        // below would otherwise mask an instability that dives negative.
        for (i, comp) in state.u.iter().enumerate() {
            let mut sup = 0.0_f64;
            let mut finite = true;
            for v in comp {
                if !v.is_finite() {
                    finite = false;
                    break;
                }
                sup = sup.max(v.abs());
            }
            if !finite || sup > self.blowup[i] {
                return Err(SimError::BlowUp {
                    t: state.t + dt,
                    component: i,
                    value: if finite { sup } else { f64::INFINITY },
                });
            }
        }

        if let Some(filter) = self.grid_filter {
            for comp in state.u.iter_mut() {
                filter.apply(comp, &mut self.jbuf);
            }
        }

        if let Some(guard) = self.tail_guard {
            for i in 0..m {
                if state.far_field[i].1 == 0.0 {
                    guard.apply(&mut state.u[i], self.grid.dx());
                }
            }
        }
        if let Some(pin) = &self.tail_pin {
            pin.apply(&mut state.u);
        }

        let band = CLAMP_BAND.min(n / 2);
        for i in 0..m {
            let (fl, fr) = state.far_field[i];
            for j in 0..band {
                state.u[i][j] = fl;
                state.u[i][n - 1 - j] = fr;
            }
            for v in state.u[i].iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                    state.clamped += 1;
                }
            }
        }
        state.t += dt;
        Ok(())
    }

    /// One step at the control's dt.
    pub fn step(&mut self, state: &mut SimState, control: &StepControl) -> Result<(), SimError> {
        self.step_dt(state, control.dt)
    }

    /// March to t_end, invoking the observer after every step and
    /// marking samples every `observe_every` time units. A zero-length
    /// run returns the initial state without observer calls.
    pub fn run(
        &mut self,
        mut state: SimState,
        control: &StepControl,
        t_end: f64,
        observe_every: f64,
        observer: &mut dyn Observer,
    ) -> Result<SimState, SimError> {
        if t_end <= state.t {
            return Ok(state);
        }
        let cadence = if observe_every > 0.0 {
            observe_every
        } else {
            f64::INFINITY
        };
        observer.on_step(&state, true)?;
        let mut next_sample = state.t + cadence;
        loop {
            let remaining = t_end - state.t;
            if remaining <= 1e-12 * t_end.abs().max(1.0) {
                break;
            }
            let dt = control.dt.min(remaining);
            self.step_dt(&mut state, dt)?;
            let done = t_end - state.t <= 1e-12 * t_end.abs().max(1.0);
            let sample = done || state.t + 0.5 * control.dt >= next_sample;
            if sample && !done {
                next_sample += cadence;
            }
            observer.on_step(&state, sample)?;
        }
        Ok(state)
    }
}

/// RK4 for the scalar pure-dispersal flow v_t = J*v - v. For dt < 1 the
/// stability polynomial's expansion in the convolution operator has
/// nonnegative coefficients, so the step preserves ordering and
/// positivity exactly (up to rounding).
pub struct LinearStepper {
    conv: Convolver,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
    jbuf: Vec<f64>,
}

impl LinearStepper {
    pub fn new(kernel: &DispersalKernel, grid: &Grid, mode: ConvMode) -> Result<Self, SimError> {
        let conv = Convolver::new(kernel, grid, mode)?;
        let n = grid.len();
        Ok(LinearStepper {
            conv,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
            jbuf: vec![0.0; n],
        })
    }

    fn rhs(&mut self, v: &[f64], far: (f64, f64), slot: usize) {
        self.conv.apply_into(v, far, &mut self.jbuf);
        for (o, (jv, vv)) in self.k[slot].iter_mut().zip(self.jbuf.iter().zip(v)) {
            *o = jv - vv;
        }
    }

    pub fn step(&mut self, v: &mut [f64], far: (f64, f64), dt: f64) {
        self.rhs(v, far, 0);
        for j in 0..v.len() {
            self.stage[j] = v[j] + 0.5 * dt * self.k[0][j];
        }
        let s = std::mem::take(&mut self.stage);
        self.rhs(&s, far, 1);
        self.stage = s;
        for j in 0..v.len() {
            self.stage[j] = v[j] + 0.5 * dt * self.k[1][j];
        }
        let s = std::mem::take(&mut self.stage);
        self.rhs(&s, far, 2);
        self.stage = s;
        for j in 0..v.len() {
            self.stage[j] = v[j] + dt * self.k[2][j];
        }
        let s = std::mem::take(&mut self.stage);
        self.rhs(&s, far, 3);
        self.stage = s;
        let w = dt / 6.0;
        for j in 0..v.len() {
            v[j] += w * (self.k[0][j] + 2.0 * self.k[1][j] + 2.0 * self.k[2][j] + self.k[3][j]);
        }
    }
}

/// Linear decay measurement for v_t = J*v - v from compact data.
#[derive(Clone, Debug)]
pub struct DecayOutcome {
    /// Fitted slope of log sup|v| against log(1+t) over the last decade.
    pub slope: f64,
    pub times: Vec<f64>,
    pub sup_norms: Vec<f64>,
    /// Fraction of the initial mass outside [-L/2, L/2] at t_end.
    pub escaped_fraction: f64,
}

/// Step size for the pure-dispersal flow: the operator's spectrum lies
/// in [-2, 0], well inside RK4's stability interval at this dt.
pub const DECAY_DT: f64 = 0.25;

/// Evolves the scalar linear flow with zero far field, recording the
/// sup norm once per unit time, and fits the decay exponent on the last
/// decade of the run. Fails if the spread reaches the half-domain.
pub fn linear_decay_experiment(
    kernel: &DispersalKernel,
    grid: &Grid,
    v0: &[f64],
    t_end: f64,
    mode: ConvMode,
) -> Result<DecayOutcome, SimError> {
    if v0.len() != grid.len() {
        return Err(SimError::Shape(format!(
            "v0 length {} does not match grid length {}",
            v0.len(),
            grid.len()
        )));
    }
    let total0: f64 = v0.iter().map(|v| v.abs()).sum::<f64>() * grid.dx();
    if total0 == 0.0 {
        return Err(SimError::DegenerateInput);
    }
    if !(t_end > 0.0) {
        return Err(SimError::Shape("t_end must be positive".into()));
    }
    let mut stepper = LinearStepper::new(kernel, grid, mode)?;
    let mut v = v0.to_vec();
    let mut t = 0.0;
    let sup = |v: &[f64]| v.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    let mut times = vec![0.0];
    let mut sup_norms = vec![sup(&v)];
    let mut next_record = 1.0;
    while t < t_end - 1e-9 {
        let dt = DECAY_DT.min(t_end - t).min(next_record - t);
        stepper.step(&mut v, (0.0, 0.0), dt);
        t += dt;
        if t + 1e-9 >= next_record {
            times.push(t);
            sup_norms.push(sup(&v));
            next_record += 1.0;
        }
        if !sup_norms.last().unwrap().is_finite() {
            return Err(SimError::BlowUp {
                t,
                component: 0,
                value: f64::INFINITY,
            });
        }
    }

    let half = 0.5 * grid.half_width();
    let escaped: f64 = grid
        .nodes()
        .into_iter()
        .zip(&v)
        .filter(|(z, _)| z.abs() > half)
        .map(|(_, x)| x.abs())
        .sum::<f64>()
        * grid.dx();
    let escaped_fraction = escaped / total0;
    if escaped_fraction >= 1e-6 {
        return Err(SimError::DomainTooSmall {
            fraction: escaped_fraction,
        });
    }

    // Least squares of ln sup|v| on ln(1+t) over t in [t_end/10, t_end].
    let lo = t_end / 10.0;
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&sup_norms)
        .filter(|(t, s)| **t >= lo && **s > 0.0)
        .map(|(t, s)| ((1.0 + t).ln(), s.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(SimError::DegenerateInput);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(DecayOutcome {
        slope: sxy / sxx,
        times,
        sup_norms,
        escaped_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Gaussian, KernelRegistry};
    use std::collections::BTreeMap;
    use std::sync::Arc;

    fn gaussian() -> DispersalKernel {
        DispersalKernel::from_shape(Arc::new(Gaussian::new(1.0).unwrap()))
    }

    fn pp2() -> ReactionModel {
        crate::models::ModelCatalog::builtin()
            .build("pp2", &BTreeMap::new(), None)
            .unwrap()
    }

    struct CountObserver {
        total: usize,
        samples: usize,
        last_t: f64,
    }

    impl Observer for CountObserver {
        fn on_step(&mut self, state: &SimState, sample: bool) -> Result<(), SimError> {
            self.total += 1;
            if sample {
                self.samples += 1;
            }
            assert!(state.t >= self.last_t);
            self.last_t = state.t;
            Ok(())
        }
    }

    #[test]
    fn equilibrium_is_a_fixed_point() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(30.0, 0.1, &kernel).unwrap();
        let mut stepper = Stepper::new(&model, &kernel, &grid, ConvMode::Auto).unwrap();
        let e = model.e_minus().unwrap().to_vec();
        let mut state =
            SimState::uniform(&e, grid.len(), Frame::Moving { c: 1.8 }).unwrap();
        let control = StepControl::auto(&model, &grid, state.frame);
        for _ in 0..5 {
            stepper.step(&mut state, &control).unwrap();
        }
        for (comp, target) in state.u.iter().zip(&e) {
            for v in comp {
                assert!((v - target).abs() < 1e-12);
            }
        }
        assert_eq!(state.clamped, 0);
    }

    #[test]
    fn auto_dt_respects_both_bounds() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(30.0, 0.1, &kernel).unwrap();
        let moving = StepControl::auto(&model, &grid, Frame::Moving { c: 2.0 });
        assert!((moving.dt - 0.8 * 0.1 / 2.0).abs() < 1e-15);
        let lab = StepControl::auto(&model, &grid, Frame::Lab);
        // pp2 max |f| over the unit box is 2, so the reaction bound rules.
        assert!((lab.dt - 0.5 / 3.0).abs() < 1e-15);
        assert!(StepControl::with_dt(lab.dt * 2.0, &model, &grid, Frame::Lab).is_err());
        assert!(StepControl::with_dt(0.1, &model, &grid, Frame::Lab).is_ok());
    }

    #[test]
    fn mass_is_conserved_by_pure_dispersal() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(60.0, 0.1, &kernel).unwrap();
        let mut stepper = LinearStepper::new(&kernel, &grid, ConvMode::Auto).unwrap();
        let mut v: Vec<f64> = grid
            .nodes()
            .into_iter()
            .map(|z| if z.abs() < 2.0 { 1.0 - 0.5 * z.abs() } else { 0.0 })
            .collect();
        let mass0: f64 = v.iter().sum::<f64>() * grid.dx();
        for _ in 0..1000 {
            stepper.step(&mut v, (0.0, 0.0), 0.02);
        }
        let mass1: f64 = v.iter().sum::<f64>() * grid.dx();
        assert!((mass1 - mass0).abs() < 1e-8, "drift {}", mass1 - mass0);
    }

    #[test]
    fn pure_dispersal_preserves_order() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(40.0, 0.2, &kernel).unwrap();
        let mut sa = LinearStepper::new(&kernel, &grid, ConvMode::Direct).unwrap();
        let mut sb = LinearStepper::new(&kernel, &grid, ConvMode::Direct).unwrap();
        let mut v: Vec<f64> = grid.nodes().into_iter().map(|z| (-z * z / 8.0).exp()).collect();
        let mut w: Vec<f64> = grid
            .nodes()
            .into_iter()
            .map(|z| (-z * z / 8.0).exp() + 0.1 / (1.0 + z * z))
            .collect();
        for _ in 0..200 {
            sa.step(&mut v, (0.0, 0.0), 0.25);
            sb.step(&mut w, (0.0, 0.0), 0.25);
        }
        for (a, b) in v.iter().zip(&w) {
            assert!(a <= &(b + 1e-12), "order violated: {a} > {b}");
        }
    }

    #[test]
    fn time_stepping_is_fourth_order() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(30.0, 0.2, &kernel).unwrap();
        let e = model.e_minus().unwrap().to_vec();
        let init = |_| {
            let u: Vec<Vec<f64>> = (0..2)
                .map(|i| {
                    grid.nodes()
                        .into_iter()
                        .map(|z| e[i] * (1.0 + 0.3 * (-z * z / 20.0).exp()))
                        .collect()
                })
                .collect();
            SimState::new(
                0.0,
                u,
                Frame::Lab,
                e.iter().map(|v| (*v, *v)).collect(),
            )
            .unwrap()
        };
        let run = |dt: f64| {
            let mut stepper = Stepper::new(&model, &kernel, &grid, ConvMode::Direct).unwrap();
            let control = StepControl::with_dt(dt, &model, &grid, Frame::Lab).unwrap();
            let mut state = init(());
            let steps = (1.0 / dt).round() as usize;
            for _ in 0..steps {
                stepper.step(&mut state, &control).unwrap();
            }
            state
        };
        let coarse = run(0.1);
        let medium = run(0.05);
        let fine = run(0.025);
        let diff = |a: &SimState, b: &SimState| {
            let mut d = 0.0_f64;
            for (ca, cb) in a.u.iter().zip(&b.u) {
                for (x, y) in ca.iter().zip(cb) {
                    d = d.max((x - y).abs());
                }
            }
            d
        };
        let ratio = diff(&coarse, &medium) / diff(&medium, &fine);
        assert!(
            (10.0..24.0).contains(&ratio),
            "expected ~16x error reduction, got {ratio}"
        );
    }

    #[test]
    fn run_obeys_cadence_and_zero_length() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.2, &kernel).unwrap();
        let mut stepper = Stepper::new(&model, &kernel, &grid, ConvMode::Direct).unwrap();
        let e = model.e_minus().unwrap().to_vec();
        let state = SimState::uniform(&e, grid.len(), Frame::Lab).unwrap();
        let control = StepControl::auto(&model, &grid, Frame::Lab);

        let mut obs = CountObserver {
            total: 0,
            samples: 0,
            last_t: 0.0,
        };
        let out = stepper
            .run(state.clone(), &control, 0.0, 1.0, &mut obs)
            .unwrap();
        assert_eq!(obs.total, 0);
        assert_eq!(out.t, 0.0);

        let out = stepper.run(state, &control, 2.0, 1.0, &mut obs).unwrap();
        assert!((out.t - 2.0).abs() < 1e-9);
        // Samples at t = 0, 1, 2.
        assert_eq!(obs.samples, 3);
        assert!(obs.total > obs.samples);
    }

    #[test]
    fn blow_up_is_detected() {
        let model = pp2();
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.2, &kernel).unwrap();
        let mut stepper = Stepper::new(&model, &kernel, &grid, ConvMode::Direct).unwrap();
        let n = grid.len();
        let mut state = SimState::uniform(&[0.5, 0.5], n, Frame::Lab).unwrap();
        // Grossly unstable dt for the reaction term, bypassing with_dt.
        let control = StepControl {
            dt: 40.0,
            cfl_advection: StepControl::DEFAULT_CFL_ADVECTION,
            cfl_reaction: StepControl::DEFAULT_CFL_REACTION,
        };
        let mut err = None;
        for _ in 0..200 {
            if let Err(e) = stepper.step(&mut state, &control) {
                err = Some(e);
                break;
            }
        }
        assert!(matches!(err, Some(SimError::BlowUp { .. })));
    }

    #[test]
    fn decay_experiment_linearity_and_slope_sanity() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(80.0, 0.2, &kernel).unwrap();
        let v0: Vec<f64> = grid
            .nodes()
            .into_iter()
            .map(|z| if z.abs() < 1.0 { 1.0 } else { 0.0 })
            .collect();
        let double: Vec<f64> = v0.iter().map(|v| 2.0 * v).collect();
        let a = linear_decay_experiment(&kernel, &grid, &v0, 40.0, ConvMode::Auto).unwrap();
        let b = linear_decay_experiment(&kernel, &grid, &double, 40.0, ConvMode::Auto).unwrap();
        for (x, y) in a.sup_norms.iter().zip(&b.sup_norms) {
            assert!((2.0 * x - y).abs() <= 1e-10 * y.max(1.0));
        }
        // Short horizon: the exponent is still settling toward -1/2.
        assert!(a.slope < -0.3 && a.slope > -0.8, "slope {}", a.slope);
        assert!(a.escaped_fraction < 1e-6);
    }

    #[test]
    fn decay_experiment_rejects_degenerate_and_cramped_input() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(80.0, 0.2, &kernel).unwrap();
        let zeros = vec![0.0; grid.len()];
        assert!(matches!(
            linear_decay_experiment(&kernel, &grid, &zeros, 10.0, ConvMode::Auto),
            Err(SimError::DegenerateInput)
        ));
        let tight = Grid::for_kernel(12.0, 0.2, &kernel).unwrap();
        let v0: Vec<f64> = tight
            .nodes()
            .into_iter()
            .map(|z| if z.abs() < 1.0 { 1.0 } else { 0.0 })
            .collect();
        assert!(matches!(
            linear_decay_experiment(&kernel, &tight, &v0, 60.0, ConvMode::Auto),
            Err(SimError::DomainTooSmall { .. })
        ));
    }

    #[test]
    fn tabulated_kernel_drives_the_stepper() {
        // The registry path exercises the same stepper with a file-backed
        // kernel.
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tri.dat");
        let mut text = String::from("# triangle\n");
        for i in -20..=20 {
            let y = i as f64 * 0.1;
            text.push_str(&format!("{} {}\n", y, (1.0 - y.abs() / 2.0).max(0.0)));
        }
        std::fs::write(&path, text).unwrap();
        let registry = KernelRegistry::builtin();
        let spec = crate::kernels::KernelSpec {
            kind: "tabulated".into(),
            params: BTreeMap::new(),
            file: Some(path),
        };
        let kernel = registry.build(&spec).unwrap();
        let grid = Grid::for_kernel(15.0, 0.1, &kernel).unwrap();
        let model = pp2();
        let mut stepper = Stepper::new(&model, &kernel, &grid, ConvMode::Auto).unwrap();
        let e = model.e_minus().unwrap().to_vec();
        let mut state = SimState::uniform(&e, grid.len(), Frame::Lab).unwrap();
        let control = StepControl::auto(&model, &grid, Frame::Lab);
        stepper.step(&mut state, &control).unwrap();
        for (comp, target) in state.u.iter().zip(&e) {
            for v in comp {
                assert!((v - target).abs() < 1e-12);
            }
        }
    }
}
