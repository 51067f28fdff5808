//! Line-oriented experiment configuration.
//!
//! ```text
//! command = blowup-scan
//!
//! [grid]
//! mode = interval
//! resolution = 256
//!
//! [reaction]
//! family = power
//! alpha0 = 1
//! sigma = 2
//! ```
//!
//! Keys before the first section header belong to the top level. `#` and
//! `;` start comments. Unknown sections or keys are errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::eigen::{EigenOptions, Normalization};
use crate::error::{Error, Result};
use crate::grid::GridMode;
use crate::plap::ReactionSpec;
use crate::timestep::StepControls;
use crate::weights::{ClassCheckOptions, RadialTable, WeightSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Eigen,
    Solve,
    BlowupScan,
    VerifyExact,
    WeightsCheck,
    DecayFit,
}

impl Command {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "eigen" => Self::Eigen,
            "solve" => Self::Solve,
            "blowup-scan" => Self::BlowupScan,
            "verify-exact" => Self::VerifyExact,
            "weights-check" => Self::WeightsCheck,
            "decay-fit" => Self::DecayFit,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Eigen => "eigen",
            Self::Solve => "solve",
            Self::BlowupScan => "blowup-scan",
            Self::VerifyExact => "verify-exact",
            Self::WeightsCheck => "weights-check",
            Self::DecayFit => "decay-fit",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridConfig {
    pub mode: GridMode,
    pub extent: f64,
    pub resolution: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialShape {
    /// `A sin(πx/L)` (product of sines on the square, `cos(πr/2R)` radially).
    Sine,
    /// `A u₀` with the unit-mass eigenfunction.
    Eigen,
    /// `A (1 - |x|²/R²)` on radial grids, `A · 4x(L-x)/L²` per axis otherwise.
    Bump,
    /// `A` times the self-similar source profile at `t_start`.
    Barenblatt,
    /// `A` times a positive random combination of the first sine modes.
    RandomSmooth,
    /// `A` times a field read from a CSV file on the same grid.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialConfig {
    pub shape: InitialShape,
    pub amplitude: f64,
    pub file: Option<PathBuf>,
    pub modes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemConfig {
    pub p: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub dt0: f64,
    pub controls: StepControls,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReactionConfig {
    pub spec: ReactionSpec,
    /// Take `λ₁_ref` of an exp-forced reaction from the eigensolver.
    pub lambda1_from_eigen: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenConfig {
    pub tol: Option<f64>,
    pub max_iter: usize,
    pub normalization: Normalization,
}

impl EigenConfig {
    pub fn options(&self) -> EigenOptions {
        EigenOptions { tol: self.tol, max_iter: self.max_iter, normalization: self.normalization }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Amplitude,
    P,
    Sigma,
    Alpha0,
    Resolution,
    ThetaW,
    Dt0,
    TEnd,
}

impl SweepParameter {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "amplitude" => Self::Amplitude,
            "p" => Self::P,
            "sigma" => Self::Sigma,
            "alpha0" => Self::Alpha0,
            "resolution" => Self::Resolution,
            "theta_w" => Self::ThetaW,
            "dt0" => Self::Dt0,
            "t_end" => Self::TEnd,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Sweep {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanConfig {
    pub a_low: f64,
    pub a_high: f64,
    /// Stop when `A_blowup / A_decay ≤ 1 + rel_tol`.
    pub rel_tol: f64,
    /// Wall budget per probe run in seconds.
    pub wall_budget: f64,
    pub max_probes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyConfig {
    pub resolutions: Vec<usize>,
    pub times: Vec<f64>,
    pub front_margin: f64,
    /// Domain radius as a multiple of the front radius at the last time.
    pub extent_factor: f64,
    /// Required residual reduction per refinement.
    pub min_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayConfig {
    pub t_from: f64,
    pub t_to: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightsCheckConfig {
    pub dimension: usize,
    pub mu: f64,
    pub r0: f64,
    pub octaves_below: i32,
    pub octaves_above: i32,
    pub per_octave: u32,
    pub options: ClassCheckOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharacteristicsConfig {
    pub radius: f64,
    pub per_octave: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub command: Command,
    pub seed: u64,
    pub grid: GridConfig,
    pub weight: WeightSpec,
    pub problem: ProblemConfig,
    pub reaction: ReactionConfig,
    pub initial: InitialConfig,
    pub eigen: EigenConfig,
    pub sweep: Option<Sweep>,
    pub scan: ScanConfig,
    pub verify: VerifyConfig,
    pub decay: DecayConfig,
    pub weights_check: WeightsCheckConfig,
    pub characteristics: CharacteristicsConfig,
    pub output_dir: Option<PathBuf>,
}

const KEYS: &[(&str, &[&str])] = &[
    ("", &["command", "seed", "output_dir", "p"]),
    ("grid", &["mode", "dim", "extent", "resolution"]),
    ("weight", &["kind", "exponent", "table", "theta_mk", "mu"]),
    (
        "problem",
        &[
            "p",
            "t_start",
            "t_end",
            "dt0",
            "dt_min",
            "dt_max",
            "u_cap",
            "newton_tol",
            "newton_max",
            "reg_eps",
            "max_steps",
            "wall_budget",
            "snapshot_times",
        ],
    ),
    ("reaction", &["family", "alpha0", "sigma", "c3", "c4", "m", "c6", "lambda1_ref"]),
    ("initial", &["shape", "amplitude", "file", "modes"]),
    ("eigen", &["tol", "max_iter", "normalization"]),
    ("sweep", &["parameter", "values"]),
    ("scan", &["a_low", "a_high", "rel_tol", "wall_budget", "max_probes"]),
    ("verify", &["resolutions", "times", "front_margin", "extent_factor", "min_ratio"]),
    ("decay", &["t_from", "t_to"]),
    ("weights_check", &["dimension", "mu", "r0", "octaves_below", "octaves_above", "per_octave", "cap", "trend_tol"]),
    ("characteristics", &["radius", "per_octave"]),
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

/// Raw `section.key -> value` table with line numbers.
struct Table {
    entries: BTreeMap<(String, String), Entry>,
}

impl Table {
    fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = strip_comment(raw).trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let Some(name) = rest.strip_suffix(']') else {
                    return Err(Error::Parse { line, msg: format!("malformed section header '{content}'") });
                };
                let name = name.trim();
                if !KEYS.iter().any(|(s, _)| *s == name) || name.is_empty() {
                    return Err(Error::Parse { line, msg: format!("unknown section [{name}]") });
                }
                section = name.to_string();
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(Error::Parse { line, msg: format!("expected 'key = value', got '{content}'") });
            };
            let key = key.trim();
            let value = value.trim();
            let known = KEYS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k).unwrap_or(&[]);
            if !known.contains(&key) {
                let place = if section.is_empty() { "top level".to_string() } else { format!("[{section}]") };
                return Err(Error::Parse { line, msg: format!("unknown key '{key}' in {place}") });
            }
            if value.is_empty() {
                return Err(Error::Parse { line, msg: format!("key '{key}' has no value") });
            }
            let k = (section.clone(), key.to_string());
            if let Some(prev) = entries.get(&k) {
                let prev: &Entry = prev;
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate key '{key}' (first set on line {})", prev.line),
                });
            }
            entries.insert(k, Entry { value: value.to_string(), line });
        }
        Ok(Self { entries })
    }

    fn get(&self, section: &str, key: &str) -> Option<&Entry> {
        self.entries.get(&(section.to_string(), key.to_string()))
    }

    fn str_or<'a>(&'a self, section: &str, key: &str, default: &'a str) -> (&'a str, usize) {
        match self.get(section, key) {
            Some(e) => (e.value.as_str(), e.line),
            None => (default, 0),
        }
    }

    fn num(&self, section: &str, key: &str) -> Result<Option<f64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => parse_f64(&e.value).map(Some).ok_or_else(|| Error::Parse {
                line: e.line,
                msg: format!("'{key}' expects a number, got '{}'", e.value),
            }),
        }
    }

    fn num_or(&self, section: &str, key: &str, default: f64) -> Result<f64> {
        Ok(self.num(section, key)?.unwrap_or(default))
    }

    fn int(&self, section: &str, key: &str) -> Result<Option<i64>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => e.value.parse::<i64>().map(Some).map_err(|_| Error::Parse {
                line: e.line,
                msg: format!("'{key}' expects an integer, got '{}'", e.value),
            }),
        }
    }

    fn count_or(&self, section: &str, key: &str, default: usize) -> Result<usize> {
        match self.int(section, key)? {
            None => Ok(default),
            Some(v) if v >= 0 => Ok(v as usize),
            Some(v) => Err(self.err(section, key, format!("'{key}' must be nonnegative, got {v}"))),
        }
    }

    fn list(&self, section: &str, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(section, key) {
            None => Ok(None),
            Some(e) => parse_list(&e.value)
                .map(Some)
                .map_err(|msg| Error::Parse { line: e.line, msg: format!("'{key}': {msg}") }),
        }
    }

    fn err(&self, section: &str, key: &str, msg: String) -> Error {
        match self.get(section, key) {
            Some(e) => Error::Parse { line: e.line, msg },
            None => Error::Config(msg),
        }
    }
}

fn strip_comment(s: &str) -> &str {
    let cut = s.find(['#', ';']).unwrap_or(s.len());
    &s[..cut]
}

fn parse_f64(s: &str) -> Option<f64> {
    let v = s.trim().parse::<f64>().ok()?;
    v.is_finite().then_some(v)
}

/// `a, b, c` (optionally bracketed), `linspace(a, b, n)` or `logspace(a, b, n)`.
fn parse_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    let s = s.trim();
    let s = match s.strip_prefix('[') {
        Some(r) => r.strip_suffix(']').ok_or("unterminated '['")?.trim(),
        None => s,
    };
    for (name, log) in [("linspace", false), ("logspace", true)] {
        if let Some(rest) = s.strip_prefix(name) {
            let inner = rest
                .trim()
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .ok_or_else(|| format!("malformed {name}(...)"))?;
            let parts: Vec<&str> = inner.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(format!("{name} takes (start, stop, count)"));
            }
            let a = parse_f64(parts[0]).ok_or("bad start")?;
            let b = parse_f64(parts[1]).ok_or("bad stop")?;
            let n: usize = parts[2].parse().map_err(|_| "bad count".to_string())?;
            if n == 0 {
                return Err("count must be positive".into());
            }
            if log && !(a > 0.0 && b > 0.0) {
                return Err("logspace endpoints must be positive".into());
            }
            return Ok((0..n)
                .map(|k| {
                    let f = if n == 1 { 0.0 } else { k as f64 / (n - 1) as f64 };
                    if log {
                        (a.ln() + f * (b.ln() - a.ln())).exp()
                    } else {
                        a + f * (b - a)
                    }
                })
                .collect());
        }
    }
    let vals: std::result::Result<Vec<f64>, String> =
        s.split(',').map(|x| parse_f64(x).ok_or_else(|| format!("'{}' is not a number", x.trim()))).collect();
    let vals = vals?;
    if vals.is_empty() {
        return Err("empty list".into());
    }
    Ok(vals)
}

/// Parses a configuration; relative file paths stay relative to the
/// working directory.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_at(text, None)
}

/// Parses a configuration, resolving relative file paths against `base`.
pub fn parse_config_at(text: &str, base: Option<&Path>) -> Result<ExperimentConfig> {
    let t = Table::parse(text)?;
    let resolve = |p: &str| -> PathBuf {
        let path = PathBuf::from(p);
        match base {
            Some(b) if path.is_relative() => b.join(path),
            _ => path,
        }
    };

    let command = match t.get("", "command") {
        Some(e) => Command::parse(&e.value)
            .ok_or_else(|| Error::Parse { line: e.line, msg: format!("unknown command '{}'", e.value) })?,
        None => return Err(Error::Config("missing required key 'command'".into())),
    };
    let seed = t.int("", "seed")?.unwrap_or(0);
    if seed < 0 {
        return Err(t.err("", "seed", "seed must be nonnegative".into()));
    }

    // Grid.
    let (mode_s, mode_line) = t.str_or("grid", "mode", "interval");
    let dim = t.count_or("grid", "dim", 2)?;
    let mode = match mode_s {
        "interval" => GridMode::Interval,
        "radial" => GridMode::Radial { dim },
        "tensor2d" => GridMode::Tensor2d,
        other => return Err(Error::Parse { line: mode_line, msg: format!("unknown grid mode '{other}'") }),
    };
    let grid = GridConfig {
        mode,
        extent: t.num_or("grid", "extent", 1.0)?,
        resolution: t.count_or("grid", "resolution", 128)?,
    };
    if grid.resolution < 4 {
        return Err(t.err("grid", "resolution", format!("resolution must be at least 4, got {}", grid.resolution)));
    }
    if !(grid.extent > 0.0) {
        return Err(t.err("grid", "extent", "extent must be positive".into()));
    }

    // Weight.
    let (kind, kind_line) = t.str_or("weight", "kind", "constant");
    let mut weight = match kind {
        "constant" => WeightSpec::constant(),
        "power" => WeightSpec::power(
            t.num("weight", "exponent")?
                .ok_or_else(|| Error::Parse { line: kind_line, msg: "power weight needs 'exponent'".into() })?,
        ),
        "tabulated" => {
            let e = t
                .get("weight", "table")
                .ok_or_else(|| Error::Parse { line: kind_line, msg: "tabulated weight needs 'table'".into() })?;
            let text = std::fs::read_to_string(resolve(&e.value)).map_err(|err| Error::Parse {
                line: e.line,
                msg: format!("cannot read weight table '{}': {err}", e.value),
            })?;
            WeightSpec::tabulated(RadialTable::from_csv(&text)?)
        }
        other => return Err(Error::Parse { line: kind_line, msg: format!("unknown weight kind '{other}'") }),
    };
    if let Some(v) = t.num("weight", "theta_mk")? {
        weight = weight.with_theta_mk(v);
    }
    if let Some(v) = t.num("weight", "mu")? {
        weight = weight.with_mu(v);
    }
    weight.validate().map_err(|e| t.err("weight", "kind", e.to_string()))?;

    // Problem.
    let p = match (t.num("problem", "p")?, t.num("", "p")?) {
        (Some(_), Some(_)) => return Err(t.err("", "p", "'p' given both at top level and in [problem]".into())),
        (Some(v), None) | (None, Some(v)) => v,
        (None, None) => 2.0,
    };
    if !(p >= 2.0) {
        let key_section = if t.get("problem", "p").is_some() { "problem" } else { "" };
        return Err(t.err(key_section, "p", "p must be ≥ 2".into()));
    }
    let t_start = t.num_or("problem", "t_start", 0.0)?;
    let t_end = t.num_or("problem", "t_end", 1.0)?;
    let dt0 = t.num_or("problem", "dt0", 1e-4)?;
    let defaults = StepControls::default();
    let controls = StepControls {
        dt_min: t.num_or("problem", "dt_min", defaults.dt_min)?,
        dt_max: t.num_or("problem", "dt_max", dt0.max(defaults.dt_max))?,
        u_cap: t.num("problem", "u_cap")?,
        newton_tol: t.num_or("problem", "newton_tol", defaults.newton_tol)?,
        newton_max: t.count_or("problem", "newton_max", defaults.newton_max)?,
        reg_eps: t.num_or("problem", "reg_eps", defaults.reg_eps)?,
        max_steps: t.count_or("problem", "max_steps", defaults.max_steps)?,
        wall_budget: t.num("problem", "wall_budget")?,
    };
    if !(t_end > t_start) {
        return Err(t.err("problem", "t_end", format!("t_end = {t_end} must exceed t_start = {t_start}")));
    }
    if !(controls.dt_min > 0.0 && controls.dt_min <= dt0 && dt0 <= controls.dt_max) {
        return Err(t.err("problem", "dt0", "need 0 < dt_min <= dt0 <= dt_max".into()));
    }
    let mut snapshot_times = t.list("problem", "snapshot_times")?.unwrap_or_default();
    snapshot_times.sort_by(f64::total_cmp);
    let problem = ProblemConfig { p, t_start, t_end, dt0, controls, snapshot_times };

    // Reaction.
    let (family, fam_line) = t.str_or("reaction", "family", "none");
    let need = |key: &str| -> Result<f64> {
        t.num("reaction", key)?
            .ok_or_else(|| Error::Parse { line: fam_line, msg: format!("reaction '{family}' needs '{key}'") })
    };
    let mut lambda1_from_eigen = false;
    let spec = match family {
        "none" => ReactionSpec::None,
        "power" => ReactionSpec::Power { alpha0: t.num_or("reaction", "alpha0", 1.0)?, sigma: need("sigma")? },
        "bounded_power" => {
            ReactionSpec::BoundedPower { c3: need("c3")?, c4: need("c4")?, m: need("m")?, sigma: need("sigma")? }
        }
        "exp_forced" => {
            let lambda1_ref = match t.get("reaction", "lambda1_ref") {
                Some(e) if e.value == "auto" => {
                    lambda1_from_eigen = true;
                    0.0
                }
                Some(_) => t.num("reaction", "lambda1_ref")?.unwrap_or(0.0),
                None => {
                    lambda1_from_eigen = true;
                    0.0
                }
            };
            ReactionSpec::ExpForced { c6: need("c6")?, sigma: need("sigma")?, lambda1_ref }
        }
        other => return Err(Error::Parse { line: fam_line, msg: format!("unknown reaction family '{other}'") }),
    };
    spec.validate().map_err(|e| t.err("reaction", "family", e.to_string()))?;
    let reaction = ReactionConfig { spec, lambda1_from_eigen };

    // Initial data.
    let (shape_s, shape_line) = t.str_or("initial", "shape", "sine");
    let shape = match shape_s {
        "sine" => InitialShape::Sine,
        "eigen" => InitialShape::Eigen,
        "bump" => InitialShape::Bump,
        "barenblatt" => InitialShape::Barenblatt,
        "random_smooth" => InitialShape::RandomSmooth,
        "file" => InitialShape::File,
        other => return Err(Error::Parse { line: shape_line, msg: format!("unknown initial shape '{other}'") }),
    };
    let file = t.get("initial", "file").map(|e| resolve(&e.value));
    if shape == InitialShape::File && file.is_none() {
        return Err(Error::Parse { line: shape_line, msg: "initial shape 'file' needs 'file'".into() });
    }
    if shape == InitialShape::Barenblatt && !(t_start > 0.0) {
        return Err(t.err("problem", "t_start", "barenblatt initial data needs t_start > 0".into()));
    }
    let initial = InitialConfig {
        shape,
        amplitude: t.num_or("initial", "amplitude", 1.0)?,
        file,
        modes: t.count_or("initial", "modes", 4)?.max(1),
    };

    // Eigensolver.
    let (norm_s, norm_line) = t.str_or("eigen", "normalization", "unit_mass");
    let normalization = match norm_s {
        "unit_mass" => Normalization::UnitMass,
        "unit_p_norm" => Normalization::UnitPNorm,
        other => return Err(Error::Parse { line: norm_line, msg: format!("unknown normalization '{other}'") }),
    };
    let eigen = EigenConfig {
        tol: t.num("eigen", "tol")?,
        max_iter: t.count_or("eigen", "max_iter", EigenOptions::default().max_iter)?,
        normalization,
    };

    // Sweep.
    let sweep = match (t.get("sweep", "parameter"), t.list("sweep", "values")?) {
        (None, None) => None,
        (Some(e), Some(values)) => {
            let parameter = SweepParameter::parse(&e.value)
                .ok_or_else(|| Error::Parse { line: e.line, msg: format!("unknown sweep parameter '{}'", e.value) })?;
            Some(Sweep { parameter, values })
        }
        (Some(e), None) => return Err(Error::Parse { line: e.line, msg: "sweep needs 'values'".into() }),
        (None, Some(_)) => return Err(t.err("sweep", "values", "sweep needs 'parameter'".into())),
    };

    let scan = ScanConfig {
        a_low: t.num_or("scan", "a_low", 0.01)?,
        a_high: t.num_or("scan", "a_high", 100.0)?,
        rel_tol: t.num_or("scan", "rel_tol", 0.05)?,
        wall_budget: t.num_or("scan", "wall_budget", 120.0)?,
        max_probes: t.count_or("scan", "max_probes", 60)?,
    };
    if !(scan.a_low > 0.0 && scan.a_high > scan.a_low && scan.rel_tol > 0.0) {
        return Err(t.err("scan", "a_low", "need 0 < a_low < a_high and rel_tol > 0".into()));
    }

    let verify = VerifyConfig {
        resolutions: match t.list("verify", "resolutions")? {
            Some(v) => v
                .iter()
                .map(|&x| {
                    if x >= 4.0 && x.fract() == 0.0 {
                        Ok(x as usize)
                    } else {
                        Err(t.err("verify", "resolutions", format!("resolution {x} must be an integer >= 4")))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            None => vec![50, 100, 200],
        },
        times: t.list("verify", "times")?.unwrap_or_else(|| vec![1.0, 2.0]),
        front_margin: t.num_or("verify", "front_margin", 1e-3)?,
        extent_factor: t.num_or("verify", "extent_factor", 1.25)?,
        min_ratio: t.num_or("verify", "min_ratio", 1.5)?,
    };
    if verify.resolutions.len() < 2 || verify.times.iter().any(|&x| !(x > 0.0)) {
        return Err(t.err("verify", "resolutions", "need at least two resolutions and positive times".into()));
    }

    let decay = DecayConfig {
        t_from: t.num_or("decay", "t_from", t_start.max(0.5 * (t_start + t_end)))?,
        t_to: t.num_or("decay", "t_to", t_end)?,
    };

    let copts = ClassCheckOptions::default();
    let weights_check = WeightsCheckConfig {
        dimension: t.count_or("weights_check", "dimension", grid.mode_dimension())?,
        mu: t.num_or("weights_check", "mu", weight.mu)?,
        r0: t.num_or("weights_check", "r0", 1.0)?,
        octaves_below: t.int("weights_check", "octaves_below")?.unwrap_or(8) as i32,
        octaves_above: t.int("weights_check", "octaves_above")?.unwrap_or(8) as i32,
        per_octave: t.count_or("weights_check", "per_octave", 2)?.max(1) as u32,
        options: ClassCheckOptions {
            cap: t.num_or("weights_check", "cap", copts.cap)?,
            trend_tol: t.num_or("weights_check", "trend_tol", copts.trend_tol)?,
        },
    };

    let characteristics = CharacteristicsConfig {
        radius: t.num_or("characteristics", "radius", 0.1 * grid.extent)?,
        per_octave: t.count_or("characteristics", "per_octave", 2)?.max(1) as u32,
    };

    let output_dir = t.get("", "output_dir").map(|e| resolve(&e.value));

    let cfg = ExperimentConfig {
        command,
        seed: seed as u64,
        grid,
        weight,
        problem,
        reaction,
        initial,
        eigen,
        sweep,
        scan,
        verify,
        decay,
        weights_check,
        characteristics,
        output_dir,
    };
    cfg.validate_runs()?;
    Ok(cfg)
}

impl GridConfig {
    pub fn mode_dimension(&self) -> usize {
        match self.mode {
            GridMode::Interval => 1,
            GridMode::Radial { dim } => dim,
            GridMode::Tensor2d => 2,
        }
    }
}

impl ExperimentConfig {
    /// One configuration per sweep value (or just this one).
    pub fn runs(&self) -> Vec<ExperimentConfig> {
        let Some(sweep) = &self.sweep else {
            return vec![self.clone()];
        };
        sweep
            .values
            .iter()
            .map(|&v| {
                let mut c = self.clone();
                c.sweep = None;
                c.apply(sweep.parameter, v);
                c
            })
            .collect()
    }

    fn apply(&mut self, param: SweepParameter, v: f64) {
        match param {
            SweepParameter::Amplitude => self.initial.amplitude = v,
            SweepParameter::P => self.problem.p = v,
            SweepParameter::Resolution => self.grid.resolution = v.round().max(0.0) as usize,
            SweepParameter::ThetaW => {
                let (t, m) = (self.weight.theta_mk, self.weight.mu);
                self.weight = WeightSpec::power(v).with_theta_mk(t).with_mu(m);
            }
            SweepParameter::Dt0 => {
                self.problem.dt0 = v;
                self.problem.controls.dt_max = self.problem.controls.dt_max.max(v);
            }
            SweepParameter::TEnd => self.problem.t_end = v,
            SweepParameter::Sigma => match &mut self.reaction.spec {
                ReactionSpec::Power { sigma, .. }
                | ReactionSpec::BoundedPower { sigma, .. }
                | ReactionSpec::ExpForced { sigma, .. } => *sigma = v,
                ReactionSpec::None => {}
            },
            SweepParameter::Alpha0 => {
                if let ReactionSpec::Power { alpha0, .. } = &mut self.reaction.spec {
                    *alpha0 = v;
                }
            }
        }
    }

    fn validate_runs(&self) -> Result<()> {
        let Some(sweep) = &self.sweep else {
            return Ok(());
        };
        let applicable = match sweep.parameter {
            SweepParameter::Sigma => !self.reaction.spec.is_none(),
            SweepParameter::Alpha0 => matches!(self.reaction.spec, ReactionSpec::Power { .. }),
            _ => true,
        };
        if !applicable {
            return Err(Error::Config(format!(
                "sweep parameter {:?} does not apply to this reaction",
                sweep.parameter
            )));
        }
        for run in self.runs() {
            if !(run.problem.p >= 2.0) {
                return Err(Error::Config("p must be ≥ 2 for every sweep value".into()));
            }
            if run.grid.resolution < 4 {
                return Err(Error::Config("sweep resolution must be at least 4".into()));
            }
            run.reaction.spec.validate()?;
            run.weight.validate()?;
            if !(run.problem.controls.dt_min <= run.problem.dt0) {
                return Err(Error::Config("sweep dt0 below dt_min".into()));
            }
        }
        Ok(())
    }
}
