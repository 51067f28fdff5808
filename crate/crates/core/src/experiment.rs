//! Command execution and artifact output.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig, InitialShape, SCHEMA_VERSION};
use crate::diagnostics::{
    self, barenblatt_variant, bernoulli_blowup, blowup_threshold, condition_star, decay_exponent_fit, exp_forced_bound,
    exponential_rate_fit, fit_comparison, front_radius, g_functional, residual_check, ExactVariant, Exponents,
    OdeParams, ResidualOptions,
};
use crate::eigen::{smallest_eigenpair, EigenOptions, EigenPair, Normalization};
use crate::error::{Error, Result};
use crate::grid::{build_grid, Field, Grid, GridMode};
use crate::plap::ReactionSpec;
use crate::timestep::{run_simulation, OutcomeKind, ProblemSpec, RunOutcome, Trajectory};
use crate::weights::{check_doubling, check_muckenhoupt, geometric_radii, WeightKind, WeightSpec};

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitStatus {
    Success,
    ConfigError,
    NumericalFailure,
    Undecided,
}

impl ExitStatus {
    pub fn code(&self) -> i32 {
        match self {
            Self::Success => 0,
            Self::ConfigError => 2,
            Self::NumericalFailure => 3,
            Self::Undecided => 4,
        }
    }
}

pub fn status_for_error(err: &Error) -> ExitStatus {
    match err {
        Error::Config(_)
        | Error::Parse { .. }
        | Error::Parameter(_)
        | Error::OutOfRange { .. }
        | Error::Unsupported(_)
        | Error::Shape(_)
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_)
        | Error::DegenerateBall { .. } => ExitStatus::ConfigError,
        _ => ExitStatus::NumericalFailure,
    }
}

/// Runtime settings that are not part of the experiment definition.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub jobs: usize,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone)]
pub struct CommandReport {
    pub status: ExitStatus,
    pub summary: Value,
}

struct Artifacts<'a> {
    dir: PathBuf,
    cfg: &'a ExperimentConfig,
}

impl<'a> Artifacts<'a> {
    fn new(dir: PathBuf, cfg: &'a ExperimentConfig) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, cfg })
    }

    fn envelope(&self, kind: &str, body: Value) -> Value {
        json!({
            "schema_version": SCHEMA_VERSION,
            "artifact": kind,
            "command": self.cfg.command.name(),
            "config": self.cfg,
            "data": body,
        })
    }

    fn json(&self, name: &str, kind: &str, body: Value) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.envelope(kind, body))?;
        fs::write(self.dir.join(name), text + "\n")?;
        Ok(())
    }

    fn preamble(&self) -> Vec<String> {
        vec![
            format!("schema_version={SCHEMA_VERSION}"),
            format!("config={}", serde_json::to_string(self.cfg).unwrap_or_default()),
        ]
    }

    fn text(&self, name: &str, body: &str) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, body)?;
        Ok(())
    }

    fn csv(&self, name: &str, header: &str, rows: &[Vec<String>]) -> Result<()> {
        let mut out = String::new();
        for line in self.preamble() {
            out.push_str("# ");
            out.push_str(&line);
            out.push('\n');
        }
        out.push_str(header);
        out.push('\n');
        for r in rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        self.text(name, &out)
    }
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

/// Executes `cfg`, writing artifacts under `ctx.out_dir`. Errors are also
/// written as `error.json` and mapped to an exit status.
pub fn run_command(cfg: &ExperimentConfig, ctx: &RunContext) -> CommandReport {
    let result = rayon::ThreadPoolBuilder::new()
        .num_threads(ctx.jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))
        .and_then(|pool| pool.install(|| dispatch(cfg, &ctx.out_dir)));
    match result {
        Ok(report) => {
            let _ = write_summary(cfg, &ctx.out_dir, &report);
            report
        }
        Err(err) => {
            let status = status_for_error(&err);
            let summary = json!({
                "status": status,
                "exit_code": status.code(),
                "error": { "kind": error_kind(&err), "message": err.to_string() },
            });
            let report = CommandReport { status, summary };
            if let Ok(a) = Artifacts::new(ctx.out_dir.clone(), cfg) {
                let _ = a.json("error.json", "error", report.summary.clone());
                if let Error::Numerical { trajectory, .. } = &err {
                    let _ = a.text("trajectory_partial.csv", &trajectory.to_csv(&a.preamble()));
                }
            }
            let _ = write_summary(cfg, &ctx.out_dir, &report);
            report
        }
    }
}

fn write_summary(cfg: &ExperimentConfig, dir: &Path, report: &CommandReport) -> Result<()> {
    let a = Artifacts::new(dir.to_path_buf(), cfg)?;
    a.json("summary.json", "summary", report.summary.clone())?;
    let echo = serde_json::to_string_pretty(&json!({ "schema_version": SCHEMA_VERSION, "config": cfg }))?;
    a.text("resolved_config.json", &(echo + "\n"))
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Parameter(_) => "parameter",
        Error::Config(_) => "config",
        Error::Parse { .. } => "parse",
        Error::OutOfRange { .. } => "out_of_range",
        Error::Divergent(_) => "divergent",
        Error::DegenerateBall { .. } => "degenerate_ball",
        Error::NonFinite(_) => "non_finite",
        Error::DegenerateField(_) => "degenerate_field",
        Error::Unsupported(_) => "unsupported",
        Error::Shape(_) => "shape",
        Error::Singular(_) => "singular",
        Error::EigenConvergence { .. } => "eigen_convergence",
        Error::StepFailure { .. } => "step_failure",
        Error::Numerical { .. } => "numerical",
        Error::Fit(_) => "fit",
        Error::Io(_) => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    }
}

fn dispatch(cfg: &ExperimentConfig, dir: &Path) -> Result<CommandReport> {
    match cfg.command {
        Command::Eigen => cmd_eigen(cfg, dir),
        Command::Solve => cmd_solve(cfg, dir),
        Command::BlowupScan => cmd_scan(cfg, dir),
        Command::VerifyExact => cmd_verify(cfg, dir),
        Command::WeightsCheck => cmd_weights(cfg, dir),
        Command::DecayFit => cmd_decay(cfg, dir),
    }
}

fn ok(summary: Value) -> CommandReport {
    CommandReport { status: ExitStatus::Success, summary }
}

pub fn grid_of(cfg: &ExperimentConfig) -> Result<Arc<Grid>> {
    Ok(Arc::new(build_grid(cfg.grid.mode, cfg.grid.extent, cfg.grid.resolution)?))
}

/// Power of `|x|` in the weight: 0 for constant weights.
pub fn weight_power(w: &WeightSpec) -> Result<f64> {
    match w.kind {
        WeightKind::Constant => Ok(0.0),
        WeightKind::Power { exponent } => Ok(exponent),
        WeightKind::Tabulated(_) => Err(Error::Unsupported("this command needs a constant or power weight".into())),
    }
}

pub fn eigenpair_for(cfg: &ExperimentConfig, grid: Arc<Grid>, normalization: Normalization) -> Result<EigenPair> {
    let opts = EigenOptions { normalization, ..cfg.eigen.options() };
    smallest_eigenpair(grid, &cfg.weight, cfg.problem.p, opts)
}

/// Initial field for `cfg`; `eig` is needed for the `eigen` shape.
pub fn initial_field(cfg: &ExperimentConfig, grid: Arc<Grid>, eig: Option<&EigenPair>) -> Result<Field> {
    use std::f64::consts::PI;
    let a = cfg.initial.amplitude;
    let len = grid.extent();
    let field = match cfg.initial.shape {
        InitialShape::Sine => match grid.mode() {
            GridMode::Interval => Field::from_fn(grid, |x| (PI * x[0] / len).sin()),
            GridMode::Tensor2d => Field::from_fn(grid, |x| (PI * x[0] / len).sin() * (PI * x[1] / len).sin()),
            GridMode::Radial { .. } => Field::from_fn(grid, |x| (0.5 * PI * x[0] / len).cos()),
        },
        InitialShape::Bump => match grid.mode() {
            GridMode::Radial { .. } => Field::from_fn(grid, |x| 1.0 - (x[0] / len).powi(2)),
            _ => Field::from_fn(grid, |x| x.iter().map(|&c| 4.0 * c * (len - c) / (len * len)).product()),
        },
        InitialShape::Eigen => {
            let e = eig.ok_or_else(|| Error::Config("eigen initial data needs an eigenpair".into()))?;
            let mut f = e.u0.clone();
            f.check_same_grid(&Field::zeros(grid))?;
            if e.normalization != Normalization::UnitMass {
                f = e.renormalized(&cfg.weight, Normalization::UnitMass)?.u0;
            }
            f
        }
        InitialShape::Barenblatt => {
            let GridMode::Radial { dim } = grid.mode() else {
                return Err(Error::Unsupported("barenblatt initial data needs a radial grid".into()));
            };
            let exps = Exponents::matched(dim, cfg.problem.p, weight_power(&cfg.weight)?);
            let t0 = cfg.problem.t_start;
            let rf = front_radius(t0, &exps)?;
            if rf >= len {
                return Err(Error::Config(format!("front radius {rf} at t_start exceeds the domain radius {len}")));
            }
            let vals: Result<Vec<f64>> = (0..grid.len())
                .map(|i| {
                    if grid.is_boundary(i) {
                        Ok(0.0)
                    } else {
                        barenblatt_variant(ExactVariant::SelfSimilar, grid.radius(i), t0, &exps)
                    }
                })
                .collect();
            Field::new(grid, vals?)?
        }
        InitialShape::RandomSmooth => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let m = cfg.initial.modes;
            let coef: Vec<f64> = (0..m * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mode = |k: usize, c: f64| match grid.mode() {
                GridMode::Radial { .. } => ((k as f64 + 0.5) * PI * c / len).cos(),
                _ => ((k + 1) as f64 * PI * c / len).sin(),
            };
            let is_2d = grid.mode() == GridMode::Tensor2d;
            Field::from_fn(grid.clone(), |x| {
                let mut s = mode(0, x[0]) * if is_2d { mode(0, x[1]) } else { 1.0 };
                for k in 0..m {
                    for j in 0..if is_2d { m } else { 1 } {
                        let w = 0.5 * coef[k * m + j] / ((k + j + 1) * (k + j + 1)) as f64;
                        s += w * mode(k, x[0]) * if is_2d { mode(j, x[1]) } else { 1.0 };
                    }
                }
                s
            })
        }
        InitialShape::File => {
            let path = cfg.initial.file.as_ref().ok_or_else(|| Error::Config("missing initial file".into()))?;
            let text = fs::read_to_string(path)?;
            Field::from_csv(grid, &text)?
        }
    };
    Ok(field.scaled(a))
}

/// Problem for `cfg` with a prepared initial field; fills `λ₁_ref` and the
/// `g` kernel from `eig` when given.
pub fn problem_for(cfg: &ExperimentConfig, initial: Field, eig: Option<&EigenPair>) -> Result<ProblemSpec> {
    let mut reaction = cfg.reaction.spec.clone();
    if cfg.reaction.lambda1_from_eigen {
        if let ReactionSpec::ExpForced { lambda1_ref, .. } = &mut reaction {
            let e = eig.ok_or_else(|| Error::Config("lambda1_ref = auto needs an eigenpair".into()))?;
            *lambda1_ref = e.lambda1;
        }
    }
    let mut spec =
        ProblemSpec::new(cfg.weight.clone(), cfg.problem.p, reaction, initial, cfg.problem.t_end, cfg.problem.dt0);
    spec.t_start = cfg.problem.t_start;
    spec.controls = cfg.problem.controls;
    spec.snapshot_times = cfg.problem.snapshot_times.clone();
    spec.g_kernel = eig.map(|e| e.u0.clone());
    Ok(spec)
}

fn needs_eigen(cfg: &ExperimentConfig) -> bool {
    !cfg.reaction.spec.is_none() || cfg.initial.shape == InitialShape::Eigen
}

fn outcome_json(out: &RunOutcome) -> Value {
    let (t_est, t_lo, t_hi, rate_fit) = match out.kind {
        OutcomeKind::BlowUp { t_est, t_lo, t_hi } => (Some(t_est), Some(t_lo), Some(t_hi), None),
        OutcomeKind::Decayed { rate_fit } => (None, None, None, Some(rate_fit)),
        OutcomeKind::Completed => (None, None, None, None),
    };
    json!({
        "kind": out.kind.name(),
        "T_est": t_est,
        "T_lo": t_lo,
        "T_hi": t_hi,
        "rate_fit": rate_fit,
        "steps": out.meta.steps,
        "newton_iters_total": out.meta.newton_iters_total,
        "meta": out.meta,
        "final_time": out.trajectory.last().map(|s| s.t),
        "final_sup_abs_u": out.trajectory.last().map(|s| s.sup_abs_u),
    })
}

/// Forcing multiplying `g^σ` in the comparison inequality, relative to the
/// fitted constant.
fn comparison_forcing(reaction: &ReactionSpec) -> impl Fn(f64) -> f64 + '_ {
    move |t| match reaction {
        ReactionSpec::ExpForced { lambda1_ref, sigma, .. } => (lambda1_ref * sigma * t).exp(),
        ReactionSpec::BoundedPower { .. } => reaction.coefficient(t) / reaction.coefficient(0.0).max(1e-300),
        _ => 1.0,
    }
}

/// Comparison-ODE diagnostics of a finished run.
pub fn comparison_report(traj: &Trajectory, eig: &EigenPair, reaction: &ReactionSpec) -> Value {
    let Some(sigma) = reaction.sigma() else {
        return Value::Null;
    };
    let g0 = traj.samples.first().map_or(f64::NAN, |s| s.g);
    let fit = fit_comparison(traj, sigma, Some(eig.lambda1), comparison_forcing(reaction));
    let mut out = json!({ "g0": g0, "lambda1": eig.lambda1, "sigma": sigma });
    match fit {
        Ok(f) => {
            out["C_fit"] = json!(f.c);
            out["fit_points"] = json!(f.points);
            if f.c > 0.0 {
                let th = blowup_threshold(eig.lambda1, f.c, sigma);
                out["threshold"] = json!(th);
                match reaction {
                    ReactionSpec::ExpForced { .. } => {
                        out["T_bound"] = json!(exp_forced_bound(g0, f.c, sigma).ok());
                    }
                    _ => {
                        let params = OdeParams { lambda1: eig.lambda1, c: f.c, sigma, g0: g0.max(0.0) };
                        if let Ok(sol) = bernoulli_blowup(params) {
                            out["bernoulli"] = json!(sol);
                        }
                    }
                }
            }
        }
        Err(e) => out["fit_error"] = json!(e.to_string()),
    }
    out
}

fn cmd_eigen(cfg: &ExperimentConfig, dir: &Path) -> Result<CommandReport> {
    let runs = cfg.runs();
    let many = runs.len() > 1;
    let results: Vec<Result<Value>> = runs
        .par_iter()
        .enumerate()
        .map(|(k, run)| {
            let a = if many {
                Artifacts::new(dir.join(format!("run_{k:03}")), run)?
            } else {
                Artifacts::new(dir.into(), run)?
            };
            let pair = eigenpair_for(run, grid_of(run)?, run.eigen.normalization)?;
            a.text("eigen_u0.csv", &pair.u0.to_csv(&a.preamble()))?;
            let body = json!(pair.summary());
            a.json("eigen.json", "eigen", body.clone())?;
            Ok(body)
        })
        .collect();
    let results: Vec<Value> = results.into_iter().collect::<Result<_>>()?;
    Ok(ok(if many {
        json!({ "status": "ok", "runs": results })
    } else {
        json!({ "status": "ok", "eigen": results[0] })
    }))
}

struct SolveResult {
    outcome: RunOutcome,
    eig: Option<EigenPair>,
    initial: Field,
}

fn solve_one(run: &ExperimentConfig) -> Result<SolveResult> {
    let grid = grid_of(run)?;
    let eig = if needs_eigen(run) { Some(eigenpair_for(run, grid.clone(), Normalization::UnitMass)?) } else { None };
    let initial = initial_field(run, grid, eig.as_ref())?;
    let spec = problem_for(run, initial.clone(), eig.as_ref())?;
    Ok(SolveResult { outcome: run_simulation(&spec)?, eig, initial })
}

fn write_solve(a: &Artifacts, run: &ExperimentConfig, r: &SolveResult) -> Result<Value> {
    let out = &r.outcome;
    a.text("trajectory.csv", &out.trajectory.to_csv(&a.preamble()))?;
    for (k, (t, f)) in out.trajectory.snapshots.iter().enumerate() {
        let mut pre = a.preamble();
        pre.push(format!("t={t:e}"));
        a.text(&format!("snapshots/snapshot_{k:03}.csv"), &f.to_csv(&pre))?;
    }
    let mut body = outcome_json(out);
    if let Some(eig) = &r.eig {
        body["lambda1"] = json!(eig.lambda1);
        body["g0"] = json!(g_functional(&r.initial, eig, &run.weight)?);
        body["condition_star_t0"] = json!(condition_star(&r.initial, eig, &run.weight, run.problem.p)?);
        body["comparison"] = comparison_report(&out.trajectory, eig, &out_reaction(run, eig));
    }
    a.json("outcome.json", "run_outcome", body.clone())?;
    Ok(body)
}

fn out_reaction(run: &ExperimentConfig, eig: &EigenPair) -> ReactionSpec {
    let mut r = run.reaction.spec.clone();
    if let (true, ReactionSpec::ExpForced { lambda1_ref, .. }) = (run.reaction.lambda1_from_eigen, &mut r) {
        *lambda1_ref = eig.lambda1;
    }
    r
}

fn cmd_solve(cfg: &ExperimentConfig, dir: &Path) -> Result<CommandReport> {
    let runs = cfg.runs();
    let many = runs.len() > 1;
    let results: Vec<Result<Value>> = runs
        .par_iter()
        .enumerate()
        .map(|(k, run)| {
            let a = if many {
                Artifacts::new(dir.join(format!("run_{k:03}")), run)?
            } else {
                Artifacts::new(dir.into(), run)?
            };
            match solve_one(run) {
                Ok(r) => write_solve(&a, run, &r),
                Err(e) => {
                    if let Error::Numerical { trajectory, .. } = &e {
                        a.text("trajectory_partial.csv", &trajectory.to_csv(&a.preamble()))?;
                    }
                    Err(e)
                }
            }
        })
        .collect();
    let results: Vec<Value> = results.into_iter().collect::<Result<_>>()?;
    Ok(ok(if many {
        json!({ "status": "ok", "runs": results })
    } else {
        json!({ "status": "ok", "outcome": results[0] })
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeClass {
    Blowup,
    Decay,
    Undecided,
}

#[derive(Debug, Clone, Serialize)]
pub struct Probe {
    pub amplitude: f64,
    pub g0: f64,
    pub class: ProbeClass,
    pub kind: &'static str,
    pub t_est: Option<f64>,
    pub steps: usize,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

/// Result of the amplitude bisection.
#[derive(Debug, Clone, Serialize)]
pub struct ScanResult {
    pub lambda1: f64,
    pub probes: Vec<Probe>,
    pub a_decay: Option<f64>,
    pub a_blowup: Option<f64>,
    pub ratio: Option<f64>,
    pub g_decay: Option<f64>,
    pub g_blowup: Option<f64>,
    /// Geometric midpoint of the bracketing `g(0)` values.
    pub g_critical: Option<f64>,
    pub comparison: Value,
    /// `C = α₀ (∫u₀)^{1-σ}` from Jensen's inequality, for constant weights.
    pub c_jensen: Option<f64>,
    pub threshold_jensen: Option<f64>,
    pub decided: bool,
}

fn probe(cfg: &ExperimentConfig, eig: &EigenPair, shape: &Field, amplitude: f64) -> Result<Probe> {
    let mut run = cfg.clone();
    run.problem.controls.wall_budget = Some(cfg.scan.wall_budget);
    run.initial.amplitude = amplitude;
    let initial = shape.scaled(amplitude);
    let g0 = g_functional(&initial, eig, &cfg.weight)?;
    let spec = problem_for(&run, initial, Some(eig))?;
    let (class, kind, t_est, steps, trajectory) = match run_simulation(&spec) {
        Ok(out) => {
            let class = match out.kind {
                OutcomeKind::BlowUp { .. } => ProbeClass::Blowup,
                OutcomeKind::Decayed { .. } => ProbeClass::Decay,
                OutcomeKind::Completed => ProbeClass::Undecided,
            };
            let t_est = match out.kind {
                OutcomeKind::BlowUp { t_est, .. } => Some(t_est),
                _ => None,
            };
            (class, out.kind.name(), t_est, out.meta.steps, Some(out.trajectory))
        }
        Err(Error::Numerical { trajectory, .. }) => {
            (ProbeClass::Undecided, "NumericalFailure", None, trajectory.samples.len(), None)
        }
        Err(e) => return Err(e),
    };
    Ok(Probe { amplitude, g0, class, kind, t_est, steps, trajectory })
}

/// Brackets the critical amplitude of `A · shape` by bisection in `ln A`.
pub fn blowup_scan(cfg: &ExperimentConfig) -> Result<ScanResult> {
    let sigma = cfg
        .reaction
        .spec
        .sigma()
        .ok_or_else(|| Error::Config("blowup-scan needs a reaction with an exponent sigma".into()))?;
    let grid = grid_of(cfg)?;
    let eig = eigenpair_for(cfg, grid.clone(), Normalization::UnitMass)?;
    let mut unit = cfg.clone();
    unit.initial.amplitude = 1.0;
    let shape = initial_field(&unit, grid, Some(&eig))?;

    let mut amps: Vec<f64> = match &cfg.sweep {
        Some(s) if s.parameter == crate::config::SweepParameter::Amplitude => s.values.clone(),
        _ => vec![cfg.scan.a_low, cfg.scan.a_high],
    };
    amps.sort_by(f64::total_cmp);
    amps.dedup();
    let mut probes: Vec<Probe> = amps.par_iter().map(|&a| probe(cfg, &eig, &shape, a)).collect::<Result<_>>()?;

    let bracket = |probes: &[Probe]| -> Option<(usize, usize)> {
        let mut idx: Vec<usize> = (0..probes.len()).collect();
        idx.sort_by(|&a, &b| probes[a].amplitude.total_cmp(&probes[b].amplitude));
        idx.windows(2)
            .find(|w| probes[w[0]].class == ProbeClass::Decay && probes[w[1]].class == ProbeClass::Blowup)
            .map(|w| (w[0], w[1]))
    };

    let mut decided = bracket(&probes).is_some();
    while let Some((d, b)) = bracket(&probes) {
        let (ad, ab) = (probes[d].amplitude, probes[b].amplitude);
        if ab / ad <= 1.0 + cfg.scan.rel_tol || probes.len() >= cfg.scan.max_probes {
            break;
        }
        let mid = (ad * ab).sqrt();
        let p = probe(cfg, &eig, &shape, mid)?;
        let undecided = p.class == ProbeClass::Undecided;
        probes.push(p);
        if undecided {
            decided = false;
            break;
        }
    }
    let br = bracket(&probes);
    let converged = br.is_some_and(|(d, b)| probes[b].amplitude / probes[d].amplitude <= 1.0 + cfg.scan.rel_tol);
    decided = decided && converged;

    let comparison = match br {
        Some((_, b)) => match &probes[b].trajectory {
            Some(traj) => comparison_report(traj, &eig, &cfg.reaction.spec),
            None => Value::Null,
        },
        None => Value::Null,
    };
    let (c_jensen, threshold_jensen) = match (&cfg.reaction.spec, &cfg.weight.kind) {
        (ReactionSpec::Power { alpha0, .. }, WeightKind::Constant) if *alpha0 > 0.0 => {
            let mass = crate::grid::integrate(&eig.u0, &WeightSpec::constant())?;
            let c = alpha0 * mass.powf(1.0 - sigma);
            (Some(c), Some(blowup_threshold(eig.lambda1, c, sigma).operative))
        }
        _ => (None, None),
    };
    probes.sort_by(|a, b| a.amplitude.total_cmp(&b.amplitude));
    let br = bracket(&probes);
    let pick = |f: fn(&Probe) -> f64, i: Option<usize>| i.map(|k| f(&probes[k]));
    let (a_decay, a_blowup) = (pick(|p| p.amplitude, br.map(|x| x.0)), pick(|p| p.amplitude, br.map(|x| x.1)));
    let (g_decay, g_blowup) = (pick(|p| p.g0, br.map(|x| x.0)), pick(|p| p.g0, br.map(|x| x.1)));
    Ok(ScanResult {
        lambda1: eig.lambda1,
        a_decay,
        a_blowup,
        ratio: a_decay.zip(a_blowup).map(|(d, b)| b / d),
        g_decay,
        g_blowup,
        g_critical: g_decay.zip(g_blowup).map(|(d, b)| (d * b).sqrt()),
        comparison,
        c_jensen,
        threshold_jensen,
        decided,
        probes,
    })
}

fn cmd_scan(cfg: &ExperimentConfig, dir: &Path) -> Result<CommandReport> {
    let a = Artifacts::new(dir.into(), cfg)?;
    let res = blowup_scan(cfg)?;
    let rows: Vec<Vec<String>> = res
        .probes
        .iter()
        .map(|p| {
            vec![
                fmt(p.amplitude),
                fmt(p.g0),
                p.kind.to_string(),
                p.t_est.map_or(String::new(), fmt),
                p.steps.to_string(),
            ]
        })
        .collect();
    a.csv("scan_probes.csv", "amplitude,g0,outcome,t_est,steps", &rows)?;
    let operative = res.comparison.get("threshold").and_then(|t| t.get("operative")).and_then(Value::as_f64);
    let body = json!({
        "scan": res,
        "critical_g0_within_operative_threshold": res.g_critical.zip(operative).map(|(g, t)| g <= t),
    });
    a.json("scan.json", "blowup_scan", body.clone())?;
    let status = if res.decided { ExitStatus::Success } else { ExitStatus::Undecided };
    Ok(CommandReport { status, summary: json!({ "status": status, "exit_code": status.code(), "blowup_scan": body }) })
}

/// Residual table row.
#[derive(Debug, Clone, Serialize)]
pub struct VerifyRow {
    pub variant: ExactVariant,
    pub resolution: usize,
    pub h: f64,
    pub residual: f64,
    pub max_pointwise: f64,
    /// Previous residual over this one (`None` for the coarsest grid).
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyResult {
    pub rows: Vec<VerifyRow>,
    pub convergent_variants: Vec<ExactVariant>,
    /// First convergent variant among the verbatim and amplitude-corrected forms.
    pub convergent_stated_variant: Option<ExactVariant>,
    pub exponents: Exponents,
    pub extent: f64,
}

pub fn verify_exact(cfg: &ExperimentConfig) -> Result<VerifyResult> {
    let GridMode::Radial { dim } = cfg.grid.mode else {
        return Err(Error::Unsupported("verify-exact needs a radial grid".into()));
    };
    if !cfg.reaction.spec.is_none() {
        return Err(Error::Config("verify-exact needs reaction family = none".into()));
    }
    let exps = Exponents::matched(dim, cfg.problem.p, weight_power(&cfg.weight)?);
    let v = &cfg.verify;
    let t_max = v.times.iter().copied().fold(0.0, f64::max);
    let extent = v.extent_factor * front_radius(t_max, &exps)?;
    let opts = ResidualOptions { front_margin: v.front_margin, ..Default::default() };
    let jobs: Vec<(ExactVariant, usize)> =
        ExactVariant::ALL.iter().flat_map(|&var| v.resolutions.iter().map(move |&r| (var, r))).collect();
    let res: Vec<(ExactVariant, usize, f64, f64, f64)> = jobs
        .par_iter()
        .map(|&(var, m)| {
            let grid = Arc::new(build_grid(GridMode::Radial { dim }, extent, m)?);
            let h = grid.h();
            let cand = |x: &[f64], t: f64| barenblatt_variant(var, x[0], t, &exps).unwrap_or(f64::NAN);
            let rep = residual_check(cand, grid, &cfg.weight, cfg.problem.p, &v.times, opts)?;
            Ok((var, m, h, rep.max_residual, rep.max_pointwise))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    let mut convergent = Vec::new();
    for var in ExactVariant::ALL {
        let mut mine: Vec<_> = res.iter().filter(|r| r.0 == var).collect();
        mine.sort_by_key(|r| r.1);
        let mut prev: Option<f64> = None;
        let mut all_good = true;
        for r in &mine {
            let ratio = prev.map(|p| p / r.3);
            if let Some(q) = ratio {
                all_good &= q >= v.min_ratio;
            }
            prev = Some(r.3);
            rows.push(VerifyRow { variant: var, resolution: r.1, h: r.2, residual: r.3, max_pointwise: r.4, ratio });
        }
        if all_good && mine.len() >= 2 {
            convergent.push(var);
        }
    }
    let stated =
        convergent.iter().copied().find(|v| matches!(v, ExactVariant::Verbatim | ExactVariant::AmplitudeCorrected));
    Ok(VerifyResult {
        rows,
        convergent_variants: convergent,
        convergent_stated_variant: stated,
        exponents: exps,
        extent,
    })
}

fn cmd_verify(cfg: &ExperimentConfig, dir: &Path) -> Result<CommandReport> {
    let a = Artifacts::new(dir.into(), cfg)?;
    let res = verify_exact(cfg)?;
    let rows: Vec<Vec<String>> = res
        .rows
        .iter()
        .map(|r| {
            vec![
                r.variant.name().to_string(),
                r.resolution.to_string(),
                fmt(r.h),
                fmt(r.residual),
                fmt(r.max_pointwise),
                r.ratio.map_or(String::new(), fmt),
            ]
        })
        .collect();
    a.csv("residuals.csv", "variant,resolution,h,rms_residual,max_pointwise,ratio", &rows)?;
    let body = json!(res);
    a.json("verify.json", "verify_exact", body.clone())?;
    Ok(ok(json!({
        "status": "ok",
        "convergent_variants": res.convergent_variants,
        "convergent_stated_variant": res.convergent_stated_variant,
        "verify": body,
    })))
}

fn cmd_weights(cfg: &ExperimentConfig, dir: &Path) -> Result<CommandReport> {
    let a = Artifacts::new(dir.into(), cfg)?;
    let w = &cfg.weights_check;
    let radii = geometric_radii(w.r0, -w.octaves_below, w.octaves_above, w.per_octave);
    let muck = check_muckenhoupt(&cfg.weight, w.dimension, &radii, w.options)?;
    let mut pairs = Vec::new();
    for (i, &h) in radii.iter().enumerate() {
        for &s in &radii[i..] {
            pairs.push((s, h));
        }
    }
    let doubling = check_doubling(&cfg.weight, w.dimension, w.mu, &pairs, w.options)?;
    let rows: Vec<Vec<String>> = muck.constants.iter().map(|&(r, c)| vec![fmt(r), fmt(c)]).collect();
    a.csv("muckenhoupt.csv", "r,constant", &rows)?;
    let rows: Vec<Vec<String>> = doubling.ratios.iter().map(|&(s, h, q)| vec![fmt(s), fmt(h), fmt(q)]).collect();
    a.csv("doubling.csv", "s,h,ratio", &rows)?;
    let body = json!({
        "muckenhoupt": { "passes": muck.passes, "worst_constant": muck.worst_constant,
                         "ess_sup_constant": muck.ess_sup_constant, "diagnostic": muck.diagnostic },
        "doubling": { "passes": doubling.passes, "worst_ratio": doubling.worst_ratio, "mu": w.mu,
                      "diagnostic": doubling.diagnostic },
    });
    a.json("weights.json", "weights_check", body.clone())?;
    Ok(ok(json!({ "status": "ok", "weights": body })))
}

/// Decay-fit report of one run.
#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub kind: &'static str,
    pub exponent: Option<diagnostics::ExponentFit>,
    pub exponent_error: Option<String>,
    pub rate: Option<diagnostics::ExponentFit>,
    pub predicted_beta: Option<f64>,
    pub predicted_k: Option<f64>,
    pub exponents: Option<Exponents>,
}

pub fn decay_fit(cfg: &ExperimentConfig) -> Result<(DecayReport, RunOutcome)> {
    let grid = grid_of(cfg)?;
    let eig = if needs_eigen(cfg) { Some(eigenpair_for(cfg, grid.clone(), Normalization::UnitMass)?) } else { None };
    let initial = initial_field(cfg, grid.clone(), eig.as_ref())?;
    let spec = problem_for(cfg, initial, eig.as_ref())?;
    let out = run_simulation(&spec)?;
    let window = (cfg.decay.t_from, cfg.decay.t_to);
    let n = cfg.grid.mode_dimension();
    let exps = weight_power(&cfg.weight).ok().map(|th| Exponents::new(n, cfg.problem.p, cfg.weight.mu, th));
    let (exponent, exponent_error) = match decay_exponent_fit(&out.trajectory, window) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let rate = exponential_rate_fit(&out.trajectory, window).ok();
    let report = DecayReport {
        kind: out.kind.name(),
        exponent,
        exponent_error,
        rate,
        predicted_beta: exps.map(|e| -(n as f64) / e.beta()),
        predicted_k: exps.map(|e| -(n as f64) / e.k()),
        exponents: exps,
    };
    Ok((report, out))
}

fn cmd_decay(cfg: &ExperimentConfig, dir: &Path) -> Result<CommandReport> {
    let runs = cfg.runs();
    let many = runs.len() > 1;
    let results: Vec<Value> = runs
        .par_iter()
        .enumerate()
        .map(|(k, run)| {
            let a = if many {
                Artifacts::new(dir.join(format!("run_{k:03}")), run)?
            } else {
                Artifacts::new(dir.into(), run)?
            };
            let (report, out) = decay_fit(run)?;
            a.text("trajectory.csv", &out.trajectory.to_csv(&a.preamble()))?;
            let body = json!({ "decay": report, "outcome": outcome_json(&out) });
            a.json("decay.json", "decay_fit", body.clone())?;
            Ok(body)
        })
        .collect::<Result<_>>()?;
    Ok(ok(if many {
        json!({ "status": "ok", "runs": results })
    } else {
        json!({ "status": "ok", "decay_fit": results[0] })
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn run(text: &str) -> (CommandReport, tempfile::TempDir) {
        let dir = tempfile::tempdir().unwrap();
        let cfg = parse_config(text).unwrap();
        let rep = run_command(&cfg, &RunContext { jobs: 2, out_dir: dir.path().to_path_buf() });
        (rep, dir)
    }

    #[test]
    fn eigen_command_writes_artifacts() {
        let (rep, dir) = run("command = eigen\np = 2\n[grid]\nresolution = 256\n");
        assert_eq!(rep.status, ExitStatus::Success);
        let l = rep.summary["eigen"]["lambda1"].as_f64().unwrap();
        assert!((l - 9.87).abs() < 0.05);
        for f in ["summary.json", "resolved_config.json", "eigen.json", "eigen_u0.csv"] {
            assert!(dir.path().join(f).exists(), "{f}");
        }
        let s: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("eigen.json")).unwrap()).unwrap();
        assert_eq!(s["schema_version"], json!(SCHEMA_VERSION));
        assert_eq!(s["config"]["command"], json!("eigen"));
    }

    #[test]
    fn numerical_errors_map_to_exit_three() {
        let (rep, dir) = run("command = eigen\np = 3\n[eigen]\nmax_iter = 1\ntol = 1e-14\n");
        assert_eq!(rep.status.code(), 3);
        assert!(dir.path().join("error.json").exists());
    }

    #[test]
    fn unsupported_setups_map_to_exit_two() {
        let (rep, _d) = run("command = verify-exact\np = 3\n");
        assert_eq!(rep.status.code(), 2);
    }

    #[test]
    fn solve_sweep_runs_in_order() {
        let text = "command = solve\n[grid]\nresolution = 32\n[problem]\nt_end = 0.05\ndt0 = 1e-3\n[sweep]\nparameter = amplitude\nvalues = 1, 2\n";
        let (rep, dir) = run(text);
        assert_eq!(rep.status, ExitStatus::Success);
        let runs = rep.summary["runs"].as_array().unwrap();
        assert_eq!(runs.len(), 2);
        let s0 = runs[0]["final_sup_abs_u"].as_f64().unwrap();
        let s1 = runs[1]["final_sup_abs_u"].as_f64().unwrap();
        assert!((s1 / s0 - 2.0).abs() < 1e-6);
        assert!(dir.path().join("run_001/trajectory.csv").exists());
    }
}
