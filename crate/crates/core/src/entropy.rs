//! Weighted relative-entropy verification for moving-frame runs.
//!
//! The machinery here measures how a perturbed state relaxes back onto a
//! reference traveling wave. The per-node relative entropy
//!
//! ```text
//! W(z) = sum_i sigma_i [ u_i - phi_i - phi_i ln(u_i / phi_i) ]
//! ```
//!
//! vanishes exactly where the state equals the reference and is positive
//! elsewhere. Its exponentially weighted version `V(z) = e^(lambda_c z) W(z)`
//! is the quantity with a comparison structure: along a converging run its
//! supremum decays, and the discrete residual of the inequality
//! `W_t <= N[W] + c W_z + R W` stays nonpositive up to discretization error.
//! [`EntropyMonitor`] records all of this behind the [`Observer`] hook and
//! [`convergence_verdict`] condenses a trace into a verdict.

use std::collections::VecDeque;

use serde::Serialize;
use thiserror::Error;

use crate::kernels::{d1_c4, ConvMode, Convolver, DispersalKernel, KernelError};
use crate::models::ReactionModel;
use crate::simulate::{Observer, SimError, SimState};
use crate::spectral::{SpeedProblem, SpectralError};
use crate::waves::WaveProfile;

/// Positivity floor inside logarithms.
pub const DEFAULT_FLOOR: f64 = 1e-12;
/// Local sup-distance defining convergence on the window.
pub const DEFAULT_LOCAL_TOL: f64 = 1e-4;
/// Largest tolerated consecutive growth factor of the weighted sup norm.
pub const V_GROWTH_TOL: f64 = 1.01;
/// Weighted-sup monotonicity is asserted only after this much time.
pub const TRANSIENT_TIME: f64 = 5.0;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error(
        "weight identity residual {residual:.3e} at lambda = {lambda} (tolerance 1e-10)"
    )]
    WeightIdentity { lambda: f64, residual: f64 },
    #[error("weighted entropy not finite at z = {z}: domain too wide for rate {lambda}")]
    Overflow { z: f64, lambda: f64 },
    #[error("{have} stored snapshots; a centered time derivative needs 3")]
    InsufficientHistory { have: usize },
    #[error("state has {got} components, reference has {want}")]
    ComponentMismatch { got: usize, want: usize },
    #[error("field length {got} does not match the reference grid ({want} nodes)")]
    LengthMismatch { got: usize, want: usize },
    #[error("snapshot times not strictly increasing: {t0}, {t1}, {t2}")]
    BadHistoryTimes { t0: f64, t1: f64, t2: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// Everything needed to evaluate entropy functionals against one
/// reference wave: the profile, the comparison weights, the tail rate
/// carrying the spatial weight, and the growth rate bounding the
/// reaction terms.
#[derive(Clone, Debug)]
pub struct EntropyConfig {
    pub reference: WaveProfile,
    pub sigma: Vec<f64>,
    /// Weight rate: the root of G(lambda) = c for the reference speed.
    pub lambda_c: f64,
    /// Kernel MGF at `lambda_c`; defines the rescaled time tau = M t.
    pub m_lambda: f64,
    /// Linear growth rate bound R of the model.
    pub r: f64,
    pub floor_epsilon: f64,
    /// Half-width of the compact window for the local sup-distance.
    pub window: f64,
    pub local_tol: f64,
}

impl EntropyConfig {
    /// Build a config for a run of `model` against `reference`, deriving
    /// the weight rate from the kernel and checking the weight identity
    /// M(lambda_c) - 1 - c lambda_c + R = 0 to 1e-10.
    pub fn new(
        reference: WaveProfile,
        model: &ReactionModel,
        kernel: &DispersalKernel,
    ) -> Result<Self, EntropyError> {
        let r = model.spreading_rate();
        let problem = SpeedProblem::new(kernel.clone(), r)?;
        let lambda_c = problem.weight_rate(reference.c)?;
        let m_lambda = kernel.mgf(lambda_c)?;
        let residual = (m_lambda - 1.0 - reference.c * lambda_c + r).abs();
        if residual > 1e-10 {
            return Err(EntropyError::WeightIdentity {
                lambda: lambda_c,
                residual,
            });
        }
        let window = reference.grid.half_width() / 4.0;
        Ok(EntropyConfig {
            reference,
            sigma: model.sigma().to_vec(),
            lambda_c,
            m_lambda,
            r,
            floor_epsilon: DEFAULT_FLOOR,
            window,
            local_tol: DEFAULT_LOCAL_TOL,
        })
    }
}

/// Per-node relative entropy and its per-component parts.
#[derive(Clone, Debug)]
pub struct EntropyField {
    pub w: Vec<f64>,
    /// parts[i][j] = sigma_i phi_i g(u_i/phi_i) at node j; w is their sum.
    pub parts: Vec<Vec<f64>>,
    /// Number of floored evaluations (raw value below `floor_epsilon`);
    /// nonzero is a quality signal, not an error. Deep-tail nodes of
    /// pulse-shaped components floor routinely.
    pub floored: u64,
}

/// x - 1 - ln x at x = 1 + d. The direct form cancels catastrophically
/// near d = 0, where the series keeps the result exact to relative
/// rounding (and nonnegative, which the direct form cannot guarantee).
fn entropy_kernel(d: f64) -> f64 {
    if d.abs() < 1e-5 {
        d * d * (0.5 - d / 3.0 + d * d * 0.25)
    } else {
        d - d.ln_1p()
    }
}

/// Relative entropy of a state field against the reference profile.
/// W >= 0 nodewise, zero exactly where the state matches the reference.
pub fn relative_entropy(
    u: &[Vec<f64>],
    config: &EntropyConfig,
) -> Result<EntropyField, EntropyError> {
    let phi = &config.reference.phi;
    if u.len() != phi.len() {
        return Err(EntropyError::ComponentMismatch {
            got: u.len(),
            want: phi.len(),
        });
    }
    let n = config.reference.grid.len();
    let eps = config.floor_epsilon;
    let mut floored = 0u64;
    let mut parts = Vec::with_capacity(u.len());
    for (ui, pi) in u.iter().zip(phi) {
        if ui.len() != n {
            return Err(EntropyError::LengthMismatch {
                got: ui.len(),
                want: n,
            });
        }
        parts.push(
            ui.iter()
                .zip(pi)
                .map(|(&a, &b)| {
                    if a < eps {
                        floored += 1;
                    }
                    if b < eps {
                        floored += 1;
                    }
                    let af = a.max(eps);
                    let bf = b.max(eps);
                    bf * entropy_kernel((af - bf) / bf)
                })
                .collect::<Vec<f64>>(),
        );
    }
    for (part, s) in parts.iter_mut().zip(&config.sigma) {
        for v in part.iter_mut() {
            *v *= s;
        }
    }
    let w = (0..n)
        .map(|j| parts.iter().map(|p| p[j]).sum())
        .collect();
    Ok(EntropyField { w, parts, floored })
}

/// Weighted entropy V = e^(lambda_c z) W with sup and trapezoid L1 norms.
#[derive(Clone, Debug)]
pub struct WeightedField {
    pub v: Vec<f64>,
    pub sup: f64,
    pub l1: f64,
}

pub fn weighted_entropy(
    w: &[f64],
    config: &EntropyConfig,
) -> Result<WeightedField, EntropyError> {
    let grid = &config.reference.grid;
    if w.len() != grid.len() {
        return Err(EntropyError::LengthMismatch {
            got: w.len(),
            want: grid.len(),
        });
    }
    let lambda = config.lambda_c;
    let mut v = Vec::with_capacity(w.len());
    for (j, &wj) in w.iter().enumerate() {
        // W = 0 maps to V = 0 even where the bare weight overflows.
        let vj = if wj == 0.0 {
            0.0
        } else {
            (lambda * grid.node(j)).exp() * wj
        };
        if !vj.is_finite() {
            return Err(EntropyError::Overflow {
                z: grid.node(j),
                lambda,
            });
        }
        v.push(vj);
    }
    let sup = v.iter().cloned().fold(0.0_f64, f64::max);
    let sum: f64 = v.iter().sum();
    let l1 = grid.dx() * (sum - 0.5 * (v[0] + v[v.len() - 1]));
    Ok(WeightedField { v, sup, l1 })
}

/// Discrete residual of the entropy inequality at one snapshot.
#[derive(Clone, Debug)]
pub struct ResidualField {
    /// rho = W_t - N[W] - c W_z - R W, zeroed on the boundary band.
    pub rho: Vec<f64>,
    /// Sup of max(rho, 0) over interior nodes; the inequality only
    /// constrains the positive part.
    pub sup_pos: f64,
    /// Excluded band width on each side (ghost width + stencil margin).
    pub band: usize,
}

/// Residual of W_t <= N[W] + c W_z + R W from three consecutive
/// entropy snapshots `(w, t)`, evaluated at the middle one. The time
/// derivative is the three-point formula exact on parabolas for the
/// given (possibly uneven) spacing.
pub fn subsolution_residual(
    snaps: [(&[f64], f64); 3],
    conv: &Convolver,
    config: &EntropyConfig,
) -> Result<ResidualField, EntropyError> {
    let [(w0, t0), (w1, t1), (w2, t2)] = snaps;
    if !(t0 < t1 && t1 < t2) {
        return Err(EntropyError::BadHistoryTimes { t0, t1, t2 });
    }
    let grid = &config.reference.grid;
    let n = grid.len();
    for w in [w0, w1, w2] {
        if w.len() != n {
            return Err(EntropyError::LengthMismatch {
                got: w.len(),
                want: n,
            });
        }
    }
    let (h1, h2) = (t1 - t0, t2 - t1);
    let a = -h2 / (h1 * (h1 + h2));
    let b = (h2 - h1) / (h1 * h2);
    let g = h1 / (h2 * (h1 + h2));

    // W vanishes at both far fields (the state matches the reference
    // there), so the nonlocal term and the derivative extend by zero.
    let jw = conv.apply(w1, (0.0, 0.0));
    let wz = d1_c4(w1, grid.dx(), (0.0, 0.0));
    let c = config.reference.c;
    let band = conv.ghost() + 2;
    let mut rho = vec![0.0; n];
    let mut sup_pos = 0.0_f64;
    for j in band..n.saturating_sub(band) {
        let wt = a * w0[j] + b * w1[j] + g * w2[j];
        let r = wt - (jw[j] - w1[j]) - c * wz[j] - config.r * w1[j];
        rho[j] = r;
        sup_pos = sup_pos.max(r);
    }
    Ok(ResidualField {
        rho,
        sup_pos: sup_pos.max(0.0),
        band,
    })
}

/// Largest value of ln X - (X - 1) over sampled pair ratios
/// X = u(y) phi(z) / (u(z) phi(y)); analytically never positive.
pub fn log_inequality_check(samples: &[((f64, f64), (f64, f64))]) -> f64 {
    samples
        .iter()
        .map(|&((uy, py), (uz, pz))| {
            let x = uy * pz / (uz * py);
            x.ln() - (x - 1.0)
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Time series of entropy diagnostics along one run.
#[derive(Clone, Debug, Default, Serialize)]
pub struct EntropyTrace {
    pub times: Vec<f64>,
    pub w_sup: Vec<f64>,
    pub w_l1: Vec<f64>,
    pub v_sup: Vec<f64>,
    pub v_l1: Vec<f64>,
    /// Positive part of the subsolution residual. The value at index k
    /// is computed once the k+1st snapshot exists (centered stencil);
    /// the first row and the final row carry their neighbor's value.
    pub residual_sup: Vec<f64>,
    pub local_sup: Vec<f64>,
    pub floored: Vec<u64>,
    pub clamped: Vec<u64>,
}

impl EntropyTrace {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Largest recorded positive residual part.
    pub fn residual_max(&self) -> f64 {
        self.residual_sup.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Converged,
    NotConverged,
    /// The initial perturbation leaves the theorem's weighted class;
    /// the run is recorded without a pass/fail claim.
    OutOfHypothesis,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Converged => "CONVERGED",
            Verdict::NotConverged => "NOT_CONVERGED",
            Verdict::OutOfHypothesis => "OUT_OF_HYPOTHESIS",
        })
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerdictReport {
    pub verdict: Verdict,
    pub final_local_sup: f64,
    /// Largest consecutive V_sup ratio after the transient.
    pub max_v_growth: f64,
    /// Fitted slope of ln V_sup against ln(1 + tau), tau = M(lambda_c) t.
    /// The reference decay carries slope -1/2.
    pub decay_exponent: Option<f64>,
    pub residual_sup_max: f64,
    pub floored_total: u64,
}

/// Condense a trace into a verdict: converged when the final local
/// sup-distance is below tolerance and V_sup never grew by more than
/// the tolerated wobble after the transient.
pub fn convergence_verdict(
    trace: &EntropyTrace,
    config: &EntropyConfig,
    out_of_hypothesis: bool,
) -> VerdictReport {
    let final_local_sup = trace.local_sup.last().copied().unwrap_or(f64::INFINITY);
    let mut max_growth = 0.0_f64;
    for k in 0..trace.len().saturating_sub(1) {
        if trace.times[k] < TRANSIENT_TIME {
            continue;
        }
        let (v0, v1) = (trace.v_sup[k], trace.v_sup[k + 1]);
        let ratio = if v0 == 0.0 {
            if v1 == 0.0 {
                1.0
            } else {
                f64::INFINITY
            }
        } else {
            v1 / v0
        };
        max_growth = max_growth.max(ratio);
    }

    // Decay fit in the rescaled time of the linear mechanism.
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for k in 0..trace.len() {
        if trace.times[k] >= TRANSIENT_TIME && trace.v_sup[k] > 0.0 {
            xs.push((1.0 + config.m_lambda * trace.times[k]).ln());
            ys.push(trace.v_sup[k].ln());
        }
    }
    let decay_exponent = fit_slope(&xs, &ys);

    let converged = final_local_sup <= config.local_tol && max_growth <= V_GROWTH_TOL;
    let verdict = if out_of_hypothesis {
        Verdict::OutOfHypothesis
    } else if converged {
        Verdict::Converged
    } else {
        Verdict::NotConverged
    };
    VerdictReport {
        verdict,
        final_local_sup,
        max_v_growth: max_growth,
        decay_exponent,
        residual_sup_max: trace.residual_max(),
        floored_total: trace.floored.iter().sum(),
    }
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Observer recording the entropy diagnostics of a moving-frame run.
///
/// Keeps the last three entropy snapshots for the centered residual
/// stencil and backfills `residual_sup` one sample behind. Whether the
/// initial perturbation sits inside the theorem's weighted class is
/// decided on the first sample: weighted entropy concentrated at the
/// right edge of the domain stands in for weighted mass at infinity.
pub struct EntropyMonitor {
    config: EntropyConfig,
    conv: Convolver,
    ring: VecDeque<(f64, Vec<f64>)>,
    trace: EntropyTrace,
    out_of_hypothesis: bool,
    seen_first: bool,
}

impl EntropyMonitor {
    pub fn new(
        config: EntropyConfig,
        kernel: &DispersalKernel,
    ) -> Result<Self, EntropyError> {
        let conv = Convolver::new(kernel, &config.reference.grid, ConvMode::Direct)?;
        Ok(EntropyMonitor {
            config,
            conv,
            ring: VecDeque::with_capacity(3),
            trace: EntropyTrace::default(),
            out_of_hypothesis: false,
            seen_first: false,
        })
    }

    pub fn config(&self) -> &EntropyConfig {
        &self.config
    }

    pub fn trace(&self) -> &EntropyTrace {
        &self.trace
    }

    pub fn out_of_hypothesis(&self) -> bool {
        self.out_of_hypothesis
    }

    /// Residual field at the most recent centered snapshot.
    pub fn latest_residual(&self) -> Result<ResidualField, EntropyError> {
        if self.ring.len() < 3 {
            return Err(EntropyError::InsufficientHistory {
                have: self.ring.len(),
            });
        }
        let s: Vec<(&[f64], f64)> = self
            .ring
            .iter()
            .map(|(t, w)| (w.as_slice(), *t))
            .collect();
        subsolution_residual([s[0], s[1], s[2]], &self.conv, &self.config)
    }

    /// Verdict over everything recorded so far.
    pub fn report(&self) -> VerdictReport {
        convergence_verdict(&self.trace, &self.config, self.out_of_hypothesis)
    }

    pub fn into_trace(self) -> EntropyTrace {
        self.trace
    }

    fn record(&mut self, state: &SimState) -> Result<(), EntropyError> {
        let field = relative_entropy(&state.u, &self.config)?;
        let weighted = weighted_entropy(&field.w, &self.config)?;
        let grid = &self.config.reference.grid;

        if !self.seen_first {
            self.seen_first = true;
            // Weighted entropy still at >= 10% of its interior peak at the
            // last node before the boundary band: the perturbation's
            // weighted mass has not decayed by the edge, so on the real
            // line it would not be integrable.
            let j_edge = grid.len() - 1 - (self.conv.ghost() + 2).min(grid.len() - 1);
            let interior_sup = weighted.v[..=j_edge]
                .iter()
                .cloned()
                .fold(0.0_f64, f64::max);
            self.out_of_hypothesis =
                interior_sup > 0.0 && weighted.v[j_edge] > 0.1 * interior_sup;
        }

        let mut w_sup = 0.0_f64;
        let mut w_sum = 0.0_f64;
        for &wj in &field.w {
            w_sup = w_sup.max(wj);
            w_sum += wj;
        }
        let w_l1 = grid.dx() * (w_sum - 0.5 * (field.w[0] + field.w[grid.len() - 1]));

        let mut local = 0.0_f64;
        for (ui, pi) in state.u.iter().zip(&self.config.reference.phi) {
            for j in 0..grid.len() {
                if grid.node(j).abs() <= self.config.window {
                    local = local.max((ui[j] - pi[j]).abs());
                }
            }
        }

        self.trace.times.push(state.t);
        self.trace.w_sup.push(w_sup);
        self.trace.w_l1.push(w_l1);
        self.trace.v_sup.push(weighted.sup);
        self.trace.v_l1.push(weighted.l1);
        self.trace.residual_sup.push(0.0);
        self.trace.local_sup.push(local);
        self.trace.floored.push(field.floored);
        self.trace.clamped.push(state.clamped);

        if self.ring.len() == 3 {
            self.ring.pop_front();
        }
        self.ring.push_back((state.t, field.w));
        if self.ring.len() == 3 {
            let res = self.latest_residual()?;
            let k = self.trace.len() - 2;
            self.trace.residual_sup[k] = res.sup_pos;
            // A centered value never exists for the first and last rows;
            // carry the neighbor so every entry is a measured quantity.
            if k == 1 {
                self.trace.residual_sup[0] = self.trace.residual_sup[1];
            }
            self.trace.residual_sup[k + 1] = res.sup_pos;
        }
        Ok(())
    }
}

impl Observer for EntropyMonitor {
    fn on_step(&mut self, state: &SimState, sample: bool) -> Result<(), SimError> {
        if !sample {
            return Ok(());
        }
        self.record(state).map_err(|e| SimError::Observer {
            t: state.t,
            reason: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{Gaussian, Grid};
    use crate::models::ModelCatalog;
    use crate::simulate::Frame;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
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

    /// Synthetic reference: exact far-field ramp between the pp2 states,
    /// good enough for functional evaluations (never stepped).
    fn ramp_reference(grid: &Grid, c: f64) -> WaveProfile {
        let model = pp2();
        let e_minus = model.e_minus().unwrap().to_vec();
        let e_plus = model.e_plus().to_vec();
        let phi = (0..2)
            .map(|i| {
                grid.nodes()
                    .into_iter()
                    .map(|z| {
                        let ramp = 1.0 / (1.0 + (0.7 * z).exp());
                        (e_plus[i] + (e_minus[i] - e_plus[i]) * ramp).max(1e-30)
                    })
                    .collect()
            })
            .collect();
        WaveProfile {
            c,
            grid: grid.clone(),
            phi,
            e_minus,
            e_plus,
            residual_sup: f64::NAN,
        }
    }

    fn config_on(grid: &Grid) -> EntropyConfig {
        let c = 1.1 * 1.0_f64.exp().sqrt();
        EntropyConfig::new(ramp_reference(grid, c), &pp2(), &gaussian()).unwrap()
    }

    #[test]
    fn construction_verifies_the_weight_identity() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        assert!((config.lambda_c - 0.708880).abs() < 1e-4);
        let residual =
            (config.m_lambda - 1.0 - config.reference.c * config.lambda_c + config.r).abs();
        assert!(residual <= 1e-10, "identity residual {residual}");
        assert_eq!(config.window, 5.0);
    }

    #[test]
    fn entropy_vanishes_exactly_on_the_reference() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        let field = relative_entropy(&config.reference.phi.clone(), &config).unwrap();
        assert!(field.w.iter().all(|&w| w == 0.0));
        let weighted = weighted_entropy(&field.w, &config).unwrap();
        assert_eq!(weighted.sup, 0.0);
        assert_eq!(weighted.l1, 0.0);
    }

    #[test]
    fn single_node_value_matches_the_closed_form() {
        // sigma = 1, u = 2, phi = 1: W = 2 - 1 - ln 2.
        let d: f64 = 1.0;
        let got = 1.0 * entropy_kernel(d);
        assert!((got - 0.306_852_819_440_054_7).abs() < 1e-15, "got {got}");
    }

    #[test]
    fn second_order_contact_near_the_reference() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        let eps = 1e-4;
        let u: Vec<Vec<f64>> = config
            .reference
            .phi
            .iter()
            .map(|comp| comp.iter().map(|&p| p * (1.0 + eps)).collect())
            .collect();
        let field = relative_entropy(&u, &config).unwrap();
        for j in 0..grid.len() {
            let expect: f64 = (0..2)
                .map(|i| 0.5 * config.sigma[i] * config.reference.phi[i][j] * eps * eps)
                .sum();
            assert!(
                (field.w[j] - expect).abs() <= 1e-4 * expect + 1e-30,
                "node {j}: {} vs {}",
                field.w[j],
                expect
            );
        }
    }

    #[test]
    fn entropy_is_nonnegative_under_random_positive_states() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(10.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let u: Vec<Vec<f64>> = config
                .reference
                .phi
                .iter()
                .map(|comp| {
                    comp.iter()
                        .map(|&p| p * rng.gen_range(0.2..5.0))
                        .collect()
                })
                .collect();
            let field = relative_entropy(&u, &config).unwrap();
            assert!(field.w.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn weight_cancellation_gives_unit_weighted_entropy() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        let w: Vec<f64> = grid
            .nodes()
            .into_iter()
            .map(|z| (-config.lambda_c * z).exp())
            .collect();
        let weighted = weighted_entropy(&w, &config).unwrap();
        assert!((weighted.sup - 1.0).abs() < 1e-12);
        for &v in &weighted.v {
            assert!((v - 1.0).abs() < 1e-12);
        }
        // Trapezoid L1 of the constant 1 over [-L, L].
        assert!((weighted.l1 - 2.0 * grid.half_width()).abs() < 1e-9);
    }

    #[test]
    fn overflow_is_reported_not_truncated() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.5, &kernel).unwrap();
        let mut config = config_on(&grid);
        config.lambda_c = 60.0; // forces e^(lambda L) past the range
        let w = vec![1.0; grid.len()];
        match weighted_entropy(&w, &config) {
            Err(EntropyError::Overflow { .. }) => {}
            other => panic!("expected Overflow, got {other:?}"),
        }
    }

    #[test]
    fn floor_counter_flags_grazing_states() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(10.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        let mut u = config.reference.phi.clone();
        u[1][3] = 0.0;
        let field = relative_entropy(&u, &config).unwrap();
        assert!(field.floored >= 1);
        assert!(field.w.iter().all(|w| w.is_finite()));
    }

    #[test]
    fn residual_vanishes_on_an_exact_reference_history() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        let conv = Convolver::new(&kernel, &grid, ConvMode::Direct).unwrap();
        let w = vec![0.0; grid.len()];
        let res = subsolution_residual(
            [(&w, 0.0), (&w, 1.0), (&w, 2.0)],
            &conv,
            &config,
        )
        .unwrap();
        assert_eq!(res.sup_pos, 0.0);
        assert!(res.rho.iter().all(|&r| r == 0.0));
    }

    #[test]
    fn residual_flags_entropy_production() {
        // A stationary hump of entropy violates the inequality wherever
        // N[W] + c W_z + R W < 0 fails to balance W_t = 0... the growth
        // term R W makes a motionless hump a strict subsolution, so
        // force production by shrinking W in time instead.
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        let conv = Convolver::new(&kernel, &grid, ConvMode::Direct).unwrap();
        let hump: Vec<f64> = grid
            .nodes()
            .into_iter()
            .map(|z| (-z * z / 4.0).exp())
            .collect();
        let shrunk: Vec<f64> = hump.iter().map(|&w| 0.01 * w).collect();
        let grown: Vec<f64> = hump.iter().map(|&w| 100.0 * w).collect();
        let res = subsolution_residual(
            [(&shrunk, 0.0), (&hump, 1.0), (&grown, 2.0)],
            &conv,
            &config,
        )
        .unwrap();
        assert!(res.sup_pos > 1.0, "sup_pos = {}", res.sup_pos);
    }

    #[test]
    fn history_time_order_is_checked() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(10.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        let conv = Convolver::new(&kernel, &grid, ConvMode::Direct).unwrap();
        let w = vec![0.0; grid.len()];
        let res = subsolution_residual(
            [(&w, 0.0), (&w, 0.0), (&w, 1.0)],
            &conv,
            &config,
        );
        assert!(matches!(res, Err(EntropyError::BadHistoryTimes { .. })));
    }

    #[test]
    fn log_inequality_holds_on_random_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<((f64, f64), (f64, f64))> = (0..100_000)
            .map(|_| {
                (
                    (rng.gen_range(1e-6..1e3), rng.gen_range(1e-6..1e3)),
                    (rng.gen_range(1e-6..1e3), rng.gen_range(1e-6..1e3)),
                )
            })
            .collect();
        let max = log_inequality_check(&samples);
        assert!(max <= 1e-15, "max violation {max}");
        // Equality case and a calibrated interior value.
        assert_eq!(log_inequality_check(&[((1.0, 1.0), (1.0, 1.0))]), 0.0);
        let at_e = log_inequality_check(&[((std::f64::consts::E, 1.0), (1.0, 1.0))]);
        assert!((at_e - (2.0 - std::f64::consts::E)).abs() < 1e-15);
    }

    #[test]
    fn monitor_on_unperturbed_state_converges_immediately() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        let reference = config.reference.clone();
        let mut monitor = EntropyMonitor::new(config, &kernel).unwrap();
        assert!(matches!(
            monitor.latest_residual(),
            Err(EntropyError::InsufficientHistory { have: 0 })
        ));

        let far: Vec<(f64, f64)> = reference
            .e_minus
            .iter()
            .zip(&reference.e_plus)
            .map(|(a, b)| (*a, *b))
            .collect();
        let mut state = SimState::new(
            0.0,
            reference.phi.clone(),
            Frame::Moving { c: reference.c },
            far,
        )
        .unwrap();
        for k in 0..4 {
            state.t = k as f64;
            monitor.on_step(&state, true).unwrap();
        }
        let report = monitor.report();
        assert_eq!(report.verdict, Verdict::Converged);
        assert_eq!(report.final_local_sup, 0.0);
        assert_eq!(report.residual_sup_max, 0.0);
        assert!(!monitor.out_of_hypothesis());
        let trace = monitor.trace();
        assert_eq!(trace.len(), 4);
        assert!(trace.v_sup.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn monitor_flags_a_right_edge_offset_as_out_of_hypothesis() {
        let kernel = gaussian();
        let grid = Grid::for_kernel(20.0, 0.5, &kernel).unwrap();
        let config = config_on(&grid);
        let reference = config.reference.clone();
        let mut monitor = EntropyMonitor::new(config, &kernel).unwrap();
        // Constant offset toward E- reaching the right boundary.
        let u: Vec<Vec<f64>> = reference
            .phi
            .iter()
            .map(|comp| comp.iter().map(|&p| p + 0.05).collect())
            .collect();
        let far: Vec<(f64, f64)> = reference
            .e_minus
            .iter()
            .zip(&reference.e_plus)
            .map(|(a, b)| (*a, *b))
            .collect();
        let state =
            SimState::new(0.0, u, Frame::Moving { c: reference.c }, far).unwrap();
        monitor.on_step(&state, true).unwrap();
        assert!(monitor.out_of_hypothesis());
        assert_eq!(monitor.report().verdict, Verdict::OutOfHypothesis);
    }
}
