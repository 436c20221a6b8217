//! One experiment: config in, a directory of artifacts out.
//!
//! The manifest is the record of the run. It is written with status
//! `running` before any computation and rewritten once the run settles,
//! so a crash leaves unambiguous evidence. Module failures do not
//! propagate as errors: they finalize the manifest as `aborted` (a
//! precondition failed before any dynamics) or `failed` (anything
//! later), keeping whatever artifacts exist. Only harness-level
//! problems, a bad config or an unwritable output directory, surface as
//! `Err`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::entropy::{EntropyConfig, EntropyMonitor, EntropyTrace, Verdict, VerdictReport};
use crate::kernels::{ConvMode, Grid, KernelRegistry};
use crate::models::{ModelCatalog, ReactionModel};
use crate::simulate::{
    effective_caps, Frame, Observer, SimState, StepControl, Stepper, TailPin,
};
use crate::spectral::{SpectralError, SpeedProblem};
use crate::waves::{compute_profile, discrete_tail_rate, wave_residual, RelaxOptions, WaveProfile};

use super::config::{
    parse_config, validate, ConfigError, ConvChoice, ExperimentConfig, PerturbationKind,
};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PROFILE_FILE: &str = "profile.dat";
pub const TRACE_FILE: &str = "trace.ndjson";
pub const STATE_FILE: &str = "state.dat";
pub const SUMMARY_FILE: &str = "summary.tsv";

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("duplicate sweep name `{0}`")]
    DuplicateName(String),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("manifest serialization: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Initial manifest state; still present in the file after a crash.
    Running,
    Complete,
    /// A precondition failed before any dynamics (the configured speed
    /// admits no weight rate); artifacts are clean but sparse.
    Aborted,
    /// A module reported an error mid-pipeline; partial artifacts are
    /// retained for diagnosis.
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct ArtifactInfo {
    pub name: &'static str,
    pub version: &'static str,
}

impl ArtifactInfo {
    fn current() -> Self {
        ArtifactInfo {
            name: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
        }
    }
}

/// Quantities computed from the config before and during the run. Every
/// derived number a module consumed appears here, so a manifest plus
/// the code version reproduces the run exactly.
#[derive(Clone, Debug, Serialize)]
pub struct Derived {
    pub c_star: f64,
    pub lambda_star: f64,
    pub boundary_infimum: bool,
    /// Resolved frame speed.
    pub c: f64,
    pub spreading_rate: f64,
    pub growth_bound: f64,
    pub sigma: Vec<f64>,
    pub sigma_valid: bool,
    pub sigma_max_eigenvalue: f64,
    pub sigma_eigenvalues: Vec<f64>,
    pub e_plus: Vec<f64>,
    /// From the profile, so a measured value for free-left models.
    pub e_minus: Option<Vec<f64>>,
    pub lambda_c: Option<f64>,
    pub m_lambda: Option<f64>,
    /// Decay rate maintained by the tail guard (the dispersion root of
    /// the discretized operators).
    pub tail_rate: Option<f64>,
    pub dt: Option<f64>,
    /// Half-width of the window scoring local convergence.
    pub window: Option<f64>,
    pub profile_source: Option<String>,
    pub profile_residual_sup: Option<f64>,
    pub perturbation_sup: Option<f64>,
    pub perturbation_clamped: Option<u64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub artifact: ArtifactInfo,
    pub status: RunStatus,
    pub error: Option<String>,
    pub config: ExperimentConfig,
    pub derived: Option<Derived>,
    pub verdict: Option<VerdictReport>,
    pub trace_sha256: Option<String>,
    pub wall_clock_s: f64,
}

impl RunManifest {
    fn starting(config: &ExperimentConfig) -> Self {
        RunManifest {
            artifact: ArtifactInfo::current(),
            status: RunStatus::Running,
            error: None,
            config: config.clone(),
            derived: None,
            verdict: None,
            trace_sha256: None,
            wall_clock_s: 0.0,
        }
    }
}

/// The in-process view of a finished (or aborted, or failed) run.
pub struct RunOutcome {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
    pub trace: Option<EntropyTrace>,
}

/// Where a run's artifacts go: the config's choice, else the fallback.
pub fn output_dir(config: &ExperimentConfig, fallback: &Path) -> PathBuf {
    config
        .run
        .out_dir
        .clone()
        .unwrap_or_else(|| fallback.to_path_buf())
}

enum StageError {
    Aborted(String),
    Failed(String),
}

fn fail<E: std::fmt::Display>(e: E) -> StageError {
    StageError::Failed(e.to_string())
}

pub fn run_experiment(
    config: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunOutcome, HarnessError> {
    validate(config)?;
    fs::create_dir_all(out_dir)?;
    let started = Instant::now();
    let mut manifest = RunManifest::starting(config);
    write_manifest(out_dir, &manifest)?;

    let trace = match pipeline(config, out_dir, &mut manifest) {
        Ok(trace) => {
            manifest.status = RunStatus::Complete;
            Some(trace)
        }
        Err(StageError::Aborted(msg)) => {
            manifest.status = RunStatus::Aborted;
            manifest.error = Some(msg);
            None
        }
        Err(StageError::Failed(msg)) => {
            manifest.status = RunStatus::Failed;
            manifest.error = Some(msg);
            None
        }
    };
    manifest.wall_clock_s = started.elapsed().as_secs_f64();
    write_manifest(out_dir, &manifest)?;
    Ok(RunOutcome {
        manifest,
        out_dir: out_dir.to_path_buf(),
        trace,
    })
}

fn pipeline(
    config: &ExperimentConfig,
    out_dir: &Path,
    manifest: &mut RunManifest,
) -> Result<EntropyTrace, StageError> {
    let model = ModelCatalog::builtin()
        .build(
            &config.model.name,
            &config.model.params,
            config.model.sigma.as_deref(),
        )
        .map_err(fail)?;
    let kernel = KernelRegistry::builtin()
        .build(&config.kernel.to_spec())
        .map_err(fail)?;
    let grid = Grid::for_kernel(config.grid.half_width, config.grid.dx, &kernel).map_err(fail)?;

    let minimal = crate::spectral::model_minimal_speed(&model, &kernel).map_err(fail)?;
    let c = config.speed.resolve(minimal.c);
    let sigma_report = model.sigma_validity();
    let mut derived = Derived {
        c_star: minimal.c,
        lambda_star: minimal.lambda,
        boundary_infimum: minimal.boundary_infimum,
        c,
        spreading_rate: model.spreading_rate(),
        growth_bound: model.r_bound(),
        sigma: model.sigma().to_vec(),
        sigma_valid: sigma_report.valid,
        sigma_max_eigenvalue: sigma_report.max_eigenvalue,
        sigma_eigenvalues: sigma_report.eigenvalues.clone(),
        e_plus: model.e_plus().to_vec(),
        e_minus: model.e_minus().map(<[f64]>::to_vec),
        lambda_c: None,
        m_lambda: None,
        tail_rate: None,
        dt: None,
        window: None,
        profile_source: None,
        profile_residual_sup: None,
        perturbation_sup: None,
        perturbation_clamped: None,
    };
    manifest.derived = Some(derived.clone());

    let problem = SpeedProblem::new(kernel.clone(), model.spreading_rate()).map_err(fail)?;
    let lambda_c = match problem.weight_rate(c) {
        Ok(l) => l,
        Err(e @ SpectralError::NoRoot { .. }) => return Err(StageError::Aborted(e.to_string())),
        Err(e) => return Err(fail(e)),
    };
    derived.lambda_c = Some(lambda_c);
    derived.m_lambda = Some(kernel.mgf(lambda_c).map_err(fail)?);
    manifest.derived = Some(derived.clone());

    let (profile, source) = match &config.wave.file {
        Some(path) => {
            let loaded = WaveProfile::load(path).map_err(fail)?;
            if (loaded.c - c).abs() > 1e-6 * c.abs().max(1.0) {
                return Err(StageError::Failed(format!(
                    "stored profile speed {} does not match configured speed {c}",
                    loaded.c
                )));
            }
            if loaded.grid == grid {
                (loaded, format!("loaded {}", path.display()))
            } else {
                let resampled = loaded.resample(&grid);
                (resampled, format!("resampled {}", path.display()))
            }
        }
        None => {
            let opts = RelaxOptions {
                tol: config.wave.tol,
                max_time: config.wave.max_time,
                ..RelaxOptions::default()
            };
            let profile = compute_profile(&model, &kernel, c, &grid, &opts).map_err(fail)?;
            (profile, "relaxed".to_string())
        }
    };
    let residual_sup = if profile.residual_sup.is_finite() {
        profile.residual_sup
    } else {
        wave_residual(&profile, &kernel, &model).map_err(fail)?.sup
    };
    profile.save(&out_dir.join(PROFILE_FILE)).map_err(fail)?;
    derived.profile_source = Some(source);
    derived.profile_residual_sup = Some(residual_sup);
    derived.e_minus = Some(profile.e_minus.clone());
    manifest.derived = Some(derived.clone());

    let (u0, perturbation_sup, perturbation_clamped) =
        perturbed_initial_state(config, &model, &grid, &profile);
    derived.perturbation_sup = Some(perturbation_sup);
    derived.perturbation_clamped = Some(perturbation_clamped);

    let mut entropy_config =
        EntropyConfig::new(profile.clone(), &model, &kernel).map_err(fail)?;
    if let Some(w) = config.run.window {
        entropy_config.window = w;
    }
    derived.window = Some(entropy_config.window);
    let mut monitor = EntropyMonitor::new(entropy_config, &kernel).map_err(fail)?;

    let mode = match config.step.mode {
        ConvChoice::Auto => ConvMode::Auto,
        ConvChoice::Direct => ConvMode::Direct,
        ConvChoice::Fft => ConvMode::Fft,
    };
    let mut stepper = Stepper::new(&model, &kernel, &grid, mode).map_err(fail)?;
    stepper.set_grid_filter(Some(GridFilter::default()));
    let tail_rate = discrete_tail_rate(&kernel, &grid, model.spreading_rate(), c, lambda_c);
    derived.tail_rate = Some(tail_rate);

    let frame = Frame::Moving { c };
    let control = match config.step.dt {
        Some(dt) => StepControl::with_dt(dt, &model, &grid, frame).map_err(fail)?,
        None => StepControl::auto(&model, &grid, frame),
    };
    derived.dt = Some(control.dt);
    manifest.derived = Some(derived.clone());

    let far: Vec<(f64, f64)> = profile
        .e_minus
        .iter()
        .zip(&profile.e_plus)
        .map(|(l, r)| (*l, *r))
        .collect();
    // The reference pin, not the extrapolating guard: a perturbation
    // edge climbing over the guard floor would drag its anchor forward
    // and rewrite the phase-determining tail.
    stepper.set_tail_pin(Some(TailPin::new(
        &profile.phi,
        &far,
        TailPin::DEFAULT_FLOOR,
    )));
    let state = SimState::new(0.0, u0, frame, far).map_err(fail)?;
    let final_state = if config.run.t_end > 0.0 {
        stepper
            .run(
                state,
                &control,
                config.run.t_end,
                config.run.observe_every,
                &mut monitor,
            )
            .map_err(fail)?
    } else {
        monitor.on_step(&state, true).map_err(fail)?;
        state
    };

    let report = monitor.report();
    let trace = monitor.into_trace();
    let sha = write_trace(&out_dir.join(TRACE_FILE), &trace).map_err(fail)?;
    write_state(&out_dir.join(STATE_FILE), &final_state, &grid).map_err(fail)?;

    manifest.derived = Some(derived);
    manifest.verdict = Some(report);
    manifest.trace_sha256 = Some(sha);
    Ok(trace)
}

/// Smooth bump of unit height with support |z - center| < width/2.
/// The squared denominator flattens the approach to the support edge,
/// thinning the bump's spectral content at grid scales; the centered
/// advection stencil transports such content with a spurious forward
/// group velocity, into the region ahead of the front where nothing
/// decays, so the less of it the initial data carries the better.
fn bump(z: f64, center: f64, width: f64) -> f64 {
    let x = 2.0 * (z - center) / width;
    if x.abs() >= 1.0 {
        0.0
    } else {
        let q = 1.0 - x * x;
        (1.0 - 1.0 / (q * q)).exp()
    }
}

/// The profile plus the configured bump, directed into the invariant
/// box componentwise: added where the profile sits in the lower half of
/// the component's range at the bump center, subtracted otherwise.
/// Values are clamped to the box as a safeguard; the clamp count lands
/// in the manifest because a nonzero value means the configured
/// amplitude was not realized exactly.
fn perturbed_initial_state(
    config: &ExperimentConfig,
    model: &ReactionModel,
    grid: &Grid,
    profile: &WaveProfile,
) -> (Vec<Vec<f64>>, f64, u64) {
    let mut u0 = profile.phi.clone();
    let p = &config.perturbation;
    if p.kind == PerturbationKind::None || p.amplitude == 0.0 {
        return (u0, 0.0, 0);
    }
    let caps = effective_caps(model);
    let center_index = ((p.center + grid.half_width()) / grid.dx())
        .round()
        .clamp(0.0, (grid.len() - 1) as f64) as usize;
    let mut sup = 0.0_f64;
    let mut clamped = 0u64;
    for (i, comp) in u0.iter_mut().enumerate() {
        let hi = model.invariant_box()[i];
        let amplitude = p.amplitude * caps[i];
        let direction = if profile.phi[i][center_index] <= 0.5 * caps[i] {
            1.0
        } else {
            -1.0
        };
        for (j, v) in comp.iter_mut().enumerate() {
            let psi = bump(grid.node(j), p.center, p.width);
            if psi <= 0.0 {
                continue;
            }
            let mut next = *v + direction * amplitude * psi;
            if next < 0.0 {
                next = 0.0;
                clamped += 1;
            }
            if next > hi {
                next = hi;
                clamped += 1;
            }
            sup = sup.max((next - *v).abs());
            *v = next;
        }
    }
    (u0, sup, clamped)
}

#[derive(Serialize)]
struct TraceRow {
    t: f64,
    w_sup: f64,
    w_l1: f64,
    v_sup: f64,
    v_l1: f64,
    residual_sup: f64,
    local_sup: f64,
    floored: u64,
    clamped: u64,
}

/// NDJSON trace, one row per sample; returns the hex SHA-256 of the
/// exact bytes written, the determinism fingerprint of the run.
fn write_trace(path: &Path, trace: &EntropyTrace) -> Result<String, HarnessError> {
    let mut text = String::new();
    for k in 0..trace.len() {
        let row = TraceRow {
            t: trace.times[k],
            w_sup: trace.w_sup[k],
            w_l1: trace.w_l1[k],
            v_sup: trace.v_sup[k],
            v_l1: trace.v_l1[k],
            residual_sup: trace.residual_sup[k],
            local_sup: trace.local_sup[k],
            floored: trace.floored[k],
            clamped: trace.clamped[k],
        };
        text.push_str(&serde_json::to_string(&row)?);
        text.push('\n');
    }
    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        let _ = write!(hex, "{byte:02x}");
    }
    fs::write(path, text)?;
    Ok(hex)
}

/// Final state snapshot, same multi-column text shape as profiles.
fn write_state(path: &Path, state: &SimState, grid: &Grid) -> Result<(), HarnessError> {
    let mut text = String::new();
    let _ = writeln!(text, "# final state");
    let _ = writeln!(text, "# t = {:.16e}", state.t);
    let _ = writeln!(text, "# frame_speed = {:.16e}", state.frame.speed());
    let _ = writeln!(text, "# clamped = {}", state.clamped);
    for (j, z) in grid.nodes().into_iter().enumerate() {
        let _ = write!(text, "{z:.16e}");
        for comp in &state.u {
            let _ = write!(text, " {:.16e}", comp[j]);
        }
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

fn write_manifest(out_dir: &Path, manifest: &RunManifest) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(out_dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

/// One named unit of a sweep. The text is parsed inside the isolated
/// runner so a malformed config costs one failure row, not the sweep.
#[derive(Clone, Debug)]
pub struct SweepJob {
    pub name: String,
    pub text: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub name: String,
    pub model: Option<String>,
    pub c: Option<f64>,
    pub status: RunStatus,
    pub verdict: Option<Verdict>,
    pub final_local_sup: Option<f64>,
    pub residual_sup_max: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn from_outcome(name: &str, outcome: &RunOutcome) -> Self {
        let m = &outcome.manifest;
        SweepRow {
            name: name.to_string(),
            model: Some(m.config.model.name.clone()),
            c: m.derived.as_ref().map(|d| d.c),
            status: m.status,
            verdict: m.verdict.as_ref().map(|v| v.verdict),
            final_local_sup: m.verdict.as_ref().map(|v| v.final_local_sup),
            residual_sup_max: m.verdict.as_ref().map(|v| v.residual_sup_max),
            error: m.error.clone(),
        }
    }

    fn failure(name: &str, error: String) -> Self {
        SweepRow {
            name: name.to_string(),
            model: None,
            c: None,
            status: RunStatus::Failed,
            verdict: None,
            final_local_sup: None,
            residual_sup_max: None,
            error: Some(error),
        }
    }
}

/// Runs each job in `out_root/<name>/` with at most `parallelism` runs
/// in flight, writes `summary.tsv` at the root, and returns the rows in
/// job order. Failures are isolated: a bad config or failed run yields
/// a marked row and the sweep continues.
pub fn sweep(
    jobs: &[SweepJob],
    parallelism: usize,
    out_root: &Path,
) -> Result<Vec<SweepRow>, HarnessError> {
    let mut names = BTreeSet::new();
    for job in jobs {
        if !names.insert(job.name.as_str()) {
            return Err(HarnessError::DuplicateName(job.name.clone()));
        }
    }
    fs::create_dir_all(out_root)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        jobs.par_iter()
            .map(|job| {
                let dir = out_root.join(&job.name);
                match parse_config(&job.text)
                    .map_err(HarnessError::from)
                    .and_then(|config| run_experiment(&config, &dir))
                {
                    Ok(outcome) => SweepRow::from_outcome(&job.name, &outcome),
                    Err(e) => SweepRow::failure(&job.name, e.to_string()),
                }
            })
            .collect()
    });
    write_summary(&out_root.join(SUMMARY_FILE), &rows)?;
    Ok(rows)
}

fn opt_num(v: Option<f64>, precision: usize) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.precision$e}"))
}

pub fn write_summary(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut text = String::from(
        "name\tmodel\tc\tstatus\tverdict\tfinal_local_sup\tresidual_sup_max\terror\n",
    );
    for row in rows {
        let status = match row.status {
            RunStatus::Running => "running",
            RunStatus::Complete => "complete",
            RunStatus::Aborted => "aborted",
            RunStatus::Failed => "failed",
        };
        let _ = writeln!(
            text,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            row.name,
            row.model.as_deref().unwrap_or("-"),
            row.c.map_or_else(|| "-".to_string(), |c| format!("{c:.6}")),
            status,
            row.verdict
                .map_or_else(|| "-".to_string(), |v| v.to_string()),
            opt_num(row.final_local_sup, 3),
            opt_num(row.residual_sup_max, 3),
            row.error.as_deref().unwrap_or("-"),
        );
    }
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(extra: &str) -> String {
        format!(
            r#"
[model]
name = "pp2"

[kernel]
kind = "gaussian"
params = {{ s = 1.0 }}

[grid]
half_width = 60.0
dx = 0.2

[wave]
tol = 1.0e-6
max_time = 200.0

[run]
t_end = 3.0
observe_every = 1.0
seed = 1
{extra}"#
        )
    }

    #[test]
    fn bump_is_smooth_compact_and_unit_height() {
        assert_eq!(bump(0.0, 0.0, 5.0), 1.0);
        assert_eq!(bump(2.5, 0.0, 5.0), 0.0);
        assert_eq!(bump(-3.0, 0.0, 5.0), 0.0);
        let near_edge = bump(2.4, 0.0, 5.0);
        assert!(near_edge > 0.0 && near_edge < 1e-4, "{near_edge}");
        assert!(bump(1.0, 0.0, 5.0) > bump(2.0, 0.0, 5.0));
        assert_eq!(bump(7.0, 7.0, 2.0), 1.0);
    }

    #[test]
    fn run_writes_the_full_artifact_set() {
        let dir = tempfile::tempdir().unwrap();
        let config = parse_config(&small_config("")).unwrap();
        let outcome = run_experiment(&config, dir.path()).unwrap();

        assert_eq!(outcome.manifest.status, RunStatus::Complete);
        for file in [MANIFEST_FILE, PROFILE_FILE, TRACE_FILE, STATE_FILE] {
            assert!(dir.path().join(file).exists(), "{file} missing");
        }

        let manifest: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap())
                .unwrap();
        assert_eq!(manifest["status"], "complete");
        let c_star = manifest["derived"]["c_star"].as_f64().unwrap();
        assert!((c_star - 1.0_f64.exp().sqrt()).abs() < 1e-6, "{c_star}");
        assert!(manifest["derived"]["lambda_c"].as_f64().is_some());
        assert!(manifest["verdict"]["verdict"].is_string());
        assert_eq!(
            manifest["trace_sha256"].as_str().unwrap().len(),
            64,
            "hex digest"
        );

        let trace = outcome.trace.unwrap();
        assert_eq!(trace.times.first().copied(), Some(0.0));
        assert!((trace.times.last().copied().unwrap() - 3.0).abs() < 1e-9);
        // The bump was directed into the box, so nothing was clamped
        // and its sup matches the configured amplitude times the cap.
        let d = outcome.manifest.derived.unwrap();
        assert_eq!(d.perturbation_clamped, Some(0));
        assert!((d.perturbation_sup.unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn subminimal_speed_aborts_cleanly() {
        let dir = tempfile::tempdir().unwrap();
        let config = parse_config(&small_config("\n[speed]\nmultiplier = 0.5\n")).unwrap();
        let outcome = run_experiment(&config, dir.path()).unwrap();

        assert_eq!(outcome.manifest.status, RunStatus::Aborted);
        let error = outcome.manifest.error.unwrap();
        assert!(error.contains("minimal"), "{error}");
        let derived = outcome.manifest.derived.unwrap();
        assert_eq!(derived.lambda_c, None);
        assert!(!dir.path().join(TRACE_FILE).exists());
        assert!(dir.path().join(MANIFEST_FILE).exists());
    }

    #[test]
    fn identical_seeds_hash_identically() {
        let text = small_config("");
        let config = parse_config(&text).unwrap();
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let first = run_experiment(&config, d1.path()).unwrap();
        let second = run_experiment(&config, d2.path()).unwrap();
        let h1 = first.manifest.trace_sha256.unwrap();
        let h2 = second.manifest.trace_sha256.unwrap();
        assert_eq!(h1, h2);
        assert_eq!(
            fs::read(d1.path().join(TRACE_FILE)).unwrap(),
            fs::read(d2.path().join(TRACE_FILE)).unwrap()
        );
    }

    #[test]
    fn sweep_isolates_the_bad_job() {
        let root = tempfile::tempdir().unwrap();
        let jobs = vec![
            SweepJob {
                name: "good".into(),
                text: small_config(""),
            },
            SweepJob {
                name: "bad".into(),
                text: small_config("\n[model.params]\na = 0.6\nb = 2.0\n"),
            },
        ];
        let rows = sweep(&jobs, 2, root.path()).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].name, "good");
        assert_eq!(rows[0].status, RunStatus::Complete);
        assert!(rows[0].verdict.is_some());
        assert_eq!(rows[1].status, RunStatus::Failed);
        assert!(rows[1].error.as_deref().unwrap().contains("pp2"));

        let summary = fs::read_to_string(root.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary.lines().count(), 3);
        assert!(summary.lines().next().unwrap().starts_with("name\t"));
    }

    #[test]
    fn empty_sweep_writes_a_header_only_summary() {
        let root = tempfile::tempdir().unwrap();
        let rows = sweep(&[], 1, root.path()).unwrap();
        assert!(rows.is_empty());
        let summary = fs::read_to_string(root.path().join(SUMMARY_FILE)).unwrap();
        assert_eq!(summary.lines().count(), 1);
    }
}
