//! Experiment configuration, orchestration, and report emission.
//!
//! A config is a JSON object `{map, seed, output_dir, solver, experiments}`; each
//! experiment is tagged by `kind` and may override `map`. Reports are written as
//! `<id>.json` (plus `<id>.csv` for tabular results), with `summary.json` and
//! `summary.csv` for the whole run. Wall-clock timings go to `timings.json`, the
//! only output that is not byte-identical across reruns.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::endomorphism::HomogeneousMap;
use crate::error::{Error, Result};
use crate::exceptional::{
    backward_contraction_probe, check_total_invariance, cocycle_scan, declared_for_preset, detect_exceptional_k1,
    tubular_mass_probe, ExceptionalKind, ExceptionalSetModel,
};
use crate::fiber::{FiberSolver, SolverSettings};
use crate::measures::{estimate_mu, EXCEPTIONAL_START_RADIUS};
use crate::operators::{telescope_run, TelescopeOptions};
use crate::projective::ProjectivePoint;
use crate::rate_lab::{
    default_holder_scales, default_mu_start, default_scan_points, fiber_holder_probe, log_prefactor_scan,
    nonconvergence_verdict, rate_report, RateParams, RateReport, Verdict,
};
use crate::rng::{experiment_seed, task_rng};
use crate::test_functions::{builtin, builtin_suite, regularize, RegularizationScheme};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

type Pairs = Vec<[f64; 2]>;

/// Inline map: coefficient tables per component, monomials in the crate's order.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InlineMap {
    pub dim: usize,
    pub degree: usize,
    pub components: Vec<Pairs>,
    /// Required for P^2 maps: the caller vouches that the lift has no common zero.
    #[serde(default)]
    pub nondegenerate: bool,
    #[serde(default)]
    pub exceptional: Option<InlineExceptional>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct InlineExceptional {
    #[serde(default)]
    pub points: Vec<Pairs>,
    #[serde(default)]
    pub lines: Vec<usize>,
}

/// A map together with its declared exceptional set.
#[derive(Clone, Debug)]
pub struct ResolvedMap {
    pub map: Arc<HomogeneousMap>,
    pub exceptional: ExceptionalSetModel,
    pub spec: Value,
}

fn validation(path: &str, message: impl ToString) -> Error {
    Error::Validation {
        path: path.to_string(),
        message: message.to_string(),
    }
}

fn join_path(prefix: &str, inner: &str) -> String {
    match (prefix.is_empty(), inner.is_empty() || inner == ".") {
        (true, _) => inner.to_string(),
        (false, true) => prefix.to_string(),
        (false, false) if inner.starts_with('[') => format!("{prefix}{inner}"),
        (false, false) => format!("{prefix}.{inner}"),
    }
}

/// Typed view of a JSON value; data errors carry the field path under `prefix`.
fn typed<T: DeserializeOwned>(value: &Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = join_path(prefix, &e.path().to_string());
        validation(&path, e.inner())
    })
}

fn point(pairs: &Pairs, dim: usize, path: &str) -> Result<ProjectivePoint> {
    let p = ProjectivePoint::from_pairs(pairs).map_err(|e| validation(path, e))?;
    if p.dim() != dim {
        return Err(validation(
            path,
            format!("point lives in P^{}, map acts on P^{dim}", p.dim()),
        ));
    }
    Ok(p)
}

pub fn resolve_map(spec: &Value, path: &str) -> Result<ResolvedMap> {
    match spec {
        Value::String(name) => {
            let map = HomogeneousMap::preset(name).map_err(|e| validation(path, e))?;
            Ok(ResolvedMap {
                map: Arc::new(map),
                exceptional: declared_for_preset(name).map_err(|e| validation(path, e))?,
                spec: spec.clone(),
            })
        }
        Value::Object(_) => {
            let inline: InlineMap = typed(spec, path)?;
            if inline.degree < 2 {
                return Err(validation(&join_path(path, "degree"), "degree must be at least 2"));
            }
            let map = HomogeneousMap::from_tables(
                inline.dim,
                inline.degree,
                &inline.components,
                "inline",
                inline.nondegenerate,
            )
            .map_err(|e| validation(path, e))?;
            let exceptional = match &inline.exceptional {
                None => ExceptionalSetModel::empty(),
                Some(ex) => {
                    let points = ex
                        .points
                        .iter()
                        .enumerate()
                        .map(|(i, p)| point(p, inline.dim, &format!("{path}.exceptional.points[{i}]")))
                        .collect::<Result<Vec<_>>>()?;
                    if let Some(&bad) = ex.lines.iter().find(|&&l| l > inline.dim || inline.dim < 2) {
                        return Err(validation(
                            &format!("{path}.exceptional.lines"),
                            format!("no coordinate line {bad} on P^{}", inline.dim),
                        ));
                    }
                    ExceptionalSetModel {
                        kind: if ex.lines.is_empty() {
                            ExceptionalKind::FinitePoints
                        } else {
                            ExceptionalKind::DeclaredVariety
                        },
                        points,
                        lines: ex.lines.clone(),
                    }
                }
            };
            Ok(ResolvedMap {
                map: Arc::new(map),
                exceptional,
                spec: spec.clone(),
            })
        }
        _ => Err(validation(path, "expected a preset name or an inline map object")),
    }
}

fn d_samples() -> usize {
    20_000
}
fn d_burn_in() -> usize {
    40
}
fn d_one() -> usize {
    1
}
fn d_alpha() -> f64 {
    2.0
}
fn d_spread() -> f64 {
    4.0
}
fn d_pairs() -> usize {
    100
}
fn d_four() -> usize {
    4
}
fn d_six() -> usize {
    6
}
fn d_twenty() -> usize {
    20
}
fn d_holder_tol() -> f64 {
    0.05
}
fn d_x() -> String {
    "X".into()
}
fn d_m() -> f64 {
    1.0
}
fn d_delta() -> f64 {
    1.5
}
fn d_grid() -> usize {
    41
}
fn d_group() -> usize {
    100
}
fn d_probe() -> usize {
    1000
}
fn d_t_grid() -> Vec<f64> {
    vec![0.4, 0.3, 0.2, 0.1, 0.05]
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FiberExp {
    pub id: Option<String>,
    pub map: Option<Value>,
    pub point: Pairs,
    #[serde(default = "d_one")]
    pub n: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MuExp {
    pub id: Option<String>,
    pub map: Option<Value>,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_burn_in")]
    pub burn_in: usize,
    pub start: Option<Pairs>,
    /// Embed the sampled atoms in the report.
    #[serde(default)]
    pub atoms: bool,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RateExp {
    pub id: Option<String>,
    pub map: Option<Value>,
    /// Base point; absent only for a prefactor scan.
    pub point: Option<Pairs>,
    pub fns: Option<Vec<String>>,
    #[serde(default = "d_one")]
    pub n_min: usize,
    pub n_max: Option<usize>,
    pub lambda: Option<f64>,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    #[serde(default = "d_samples")]
    pub mu_samples: usize,
    #[serde(default = "d_burn_in")]
    pub burn_in: usize,
    /// Run the logarithmic prefactor scan over `scan_points` instead of a single base point.
    #[serde(default)]
    pub scan: bool,
    pub scan_points: Option<Vec<Pairs>>,
    #[serde(default = "d_spread")]
    pub max_spread: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct HolderExp {
    pub id: Option<String>,
    pub map: Option<Value>,
    pub base: Pairs,
    pub direction: Option<Pairs>,
    pub scales: Option<Vec<f64>>,
    /// When set, the verdict compares the fitted exponent with this value.
    pub expected_exponent: Option<f64>,
    #[serde(default = "d_holder_tol")]
    pub tolerance: f64,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ScanMode {
    Detect,
    ProbeTube,
    ProbeContraction,
    Cocycle,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExceptionalExp {
    pub id: Option<String>,
    pub map: Option<Value>,
    pub mode: ScanMode,
    #[serde(default = "d_pairs")]
    pub pairs: usize,
    #[serde(default = "d_four")]
    pub n_max: usize,
    /// Lipschitz estimate for the contraction bound; measured when absent.
    pub a2: Option<f64>,
    #[serde(default = "d_t_grid")]
    pub t_grid: Vec<f64>,
    #[serde(default = "d_samples")]
    pub mu_samples: usize,
    #[serde(default = "d_burn_in")]
    pub burn_in: usize,
    #[serde(default = "d_twenty")]
    pub probe_points: usize,
    #[serde(default = "d_six")]
    pub max_total: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TelescopeExp {
    pub id: Option<String>,
    pub map: Option<Value>,
    #[serde(default = "d_x", rename = "fn")]
    pub function: String,
    pub point: Pairs,
    #[serde(default = "d_four")]
    pub levels: usize,
    #[serde(default = "d_m")]
    pub m: f64,
    #[serde(default = "d_delta")]
    pub delta: f64,
    #[serde(default = "d_grid")]
    pub grid: usize,
    #[serde(default = "d_group")]
    pub group_samples: usize,
    #[serde(default = "d_samples")]
    pub mu_samples: usize,
    #[serde(default = "d_burn_in")]
    pub burn_in: usize,
    pub a2: Option<f64>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizeExp {
    pub id: Option<String>,
    pub map: Option<Value>,
    #[serde(default = "d_x", rename = "fn")]
    pub function: String,
    pub theta: f64,
    #[serde(default = "d_group")]
    pub samples: usize,
    #[serde(default = "d_probe")]
    pub probe_points: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Experiment {
    Fiber(FiberExp),
    Mu(MuExp),
    Rate(RateExp),
    Holder(HolderExp),
    Exceptional(ExceptionalExp),
    Telescope(TelescopeExp),
    Regularize(RegularizeExp),
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Fiber(_) => "fiber",
            Experiment::Mu(_) => "mu",
            Experiment::Rate(_) => "rate",
            Experiment::Holder(_) => "holder",
            Experiment::Exceptional(_) => "exceptional",
            Experiment::Telescope(_) => "telescope",
            Experiment::Regularize(_) => "regularize",
        }
    }

    fn id_and_map(&self) -> (&Option<String>, &Option<Value>) {
        match self {
            Experiment::Fiber(e) => (&e.id, &e.map),
            Experiment::Mu(e) => (&e.id, &e.map),
            Experiment::Rate(e) => (&e.id, &e.map),
            Experiment::Holder(e) => (&e.id, &e.map),
            Experiment::Exceptional(e) => (&e.id, &e.map),
            Experiment::Telescope(e) => (&e.id, &e.map),
            Experiment::Regularize(e) => (&e.id, &e.map),
        }
    }
}

/// A validated experiment with its resolved map.
#[derive(Clone, Debug)]
pub struct ExperimentEntry {
    pub id: String,
    pub spec: Experiment,
    pub raw: Value,
    pub map: ResolvedMap,
}

#[derive(Clone, Debug)]
pub struct ExperimentSuite {
    pub config_path: Option<PathBuf>,
    pub map: ResolvedMap,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub settings: SolverSettings,
    pub experiments: Vec<ExperimentEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSuite {
    map: Value,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    output_dir: Option<String>,
    #[serde(default)]
    solver: Option<Value>,
    #[serde(default)]
    experiments: Vec<Value>,
}

/// Parses and validates a config; relative output directories resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<ExperimentSuite> {
    let mut de = serde_json::Deserializer::from_str(text);
    let raw: RawSuite = match serde_path_to_error::deserialize(&mut de) {
        Ok(r) => r,
        Err(e) => {
            let inner = e.inner();
            return Err(if inner.is_data() {
                validation(&e.path().to_string(), inner)
            } else {
                Error::Parse {
                    line: inner.line(),
                    column: inner.column(),
                    message: inner.to_string(),
                }
            });
        }
    };
    de.end().map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let map = resolve_map(&raw.map, "map")?;
    let settings: SolverSettings = match &raw.solver {
        Some(v) => typed(v, "solver")?,
        None => SolverSettings::default(),
    };
    settings.validate().map_err(|e| validation("solver", e))?;
    let mut seen = HashSet::new();
    let mut experiments = Vec::with_capacity(raw.experiments.len());
    for (i, value) in raw.experiments.iter().enumerate() {
        let path = format!("experiments[{i}]");
        let spec: Experiment = typed(value, &path)?;
        let (id, map_override) = spec.id_and_map();
        let id = id.clone().unwrap_or_else(|| format!("{}-{i}", spec.kind()));
        if id.is_empty() || id.contains(['/', '\\']) || id.starts_with('.') || id == "summary" || id == "timings" {
            return Err(validation(
                &format!("{path}.id"),
                format!("`{id}` is not a usable report name"),
            ));
        }
        if !seen.insert(id.clone()) {
            return Err(validation(
                &format!("{path}.id"),
                format!("duplicate experiment id `{id}`"),
            ));
        }
        let resolved = match map_override {
            Some(m) => resolve_map(m, &format!("{path}.map"))?,
            None => map.clone(),
        };
        validate_experiment(&spec, &resolved, &path)?;
        experiments.push(ExperimentEntry {
            id,
            spec,
            raw: value.clone(),
            map: resolved,
        });
    }
    let output_dir = base_dir.join(raw.output_dir.unwrap_or_else(|| "reports".into()));
    Ok(ExperimentSuite {
        config_path: None,
        map,
        seed: raw.seed,
        output_dir,
        settings,
        experiments,
    })
}

/// Reads, parses and validates a config file.
pub fn load_config(path: &Path) -> Result<ExperimentSuite> {
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut suite = parse_config(&text, base)?;
    suite.config_path = Some(path.to_path_buf());
    Ok(suite)
}

fn validate_experiment(spec: &Experiment, m: &ResolvedMap, path: &str) -> Result<()> {
    let dim = m.map.dim();
    let labels_ok = |labels: &[String], field: &str| -> Result<()> {
        for (i, l) in labels.iter().enumerate() {
            builtin(dim, l).map_err(|e| validation(&format!("{path}.{field}[{i}]"), e))?;
        }
        Ok(())
    };
    match spec {
        Experiment::Fiber(e) => {
            point(&e.point, dim, &format!("{path}.point"))?;
            if e.n == 0 {
                return Err(validation(&format!("{path}.n"), "n must be at least 1"));
            }
        }
        Experiment::Mu(e) => {
            if let Some(s) = &e.start {
                point(s, dim, &format!("{path}.start"))?;
            }
        }
        Experiment::Rate(e) => {
            match (&e.point, e.scan) {
                (Some(p), false) => {
                    point(p, dim, &format!("{path}.point"))?;
                }
                (None, false) => return Err(validation(&format!("{path}.point"), "missing base point")),
                (_, true) => {
                    if let Some(ps) = &e.scan_points {
                        for (i, p) in ps.iter().enumerate() {
                            point(p, dim, &format!("{path}.scan_points[{i}]"))?;
                        }
                    } else if dim != 1 {
                        return Err(validation(&format!("{path}.scan_points"), "required on P^2"));
                    }
                }
            }
            if let Some(f) = &e.fns {
                labels_ok(f, "fns")?;
            }
        }
        Experiment::Holder(e) => {
            point(&e.base, dim, &format!("{path}.base"))?;
            if let Some(d) = &e.direction {
                if d.len() != dim {
                    return Err(validation(
                        &format!("{path}.direction"),
                        format!("expected {dim} entries"),
                    ));
                }
            }
        }
        Experiment::Exceptional(e) => {
            if e.mode == ScanMode::ProbeTube && m.exceptional.is_empty() {
                return Err(validation(
                    &format!("{path}.mode"),
                    "tube probe needs a declared exceptional set",
                ));
            }
        }
        Experiment::Telescope(e) => {
            point(&e.point, dim, &format!("{path}.point"))?;
            labels_ok(std::slice::from_ref(&e.function), "fn")?;
        }
        Experiment::Regularize(e) => {
            labels_ok(std::slice::from_ref(&e.function), "fn")?;
        }
    }
    Ok(())
}

/// Result of one experiment: the JSON payload, an optional CSV table, and a verdict.
#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub result: Value,
    pub csv: Option<String>,
    pub verdict: Option<Verdict>,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report types serialize")
}

fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
    let mut all_pass = true;
    let mut any = false;
    for v in verdicts {
        any = true;
        match v {
            Verdict::Fail => return Verdict::Fail,
            Verdict::Inconclusive => all_pass = false,
            Verdict::Pass => {}
        }
    }
    if any && all_pass {
        Verdict::Pass
    } else {
        Verdict::Inconclusive
    }
}

fn mu_start(start: &Option<Pairs>, m: &ResolvedMap, seed: u64) -> Result<ProjectivePoint> {
    match start {
        Some(p) => ProjectivePoint::from_pairs(p),
        None => Ok(default_mu_start(m.map.dim(), &m.exceptional, seed)),
    }
}

fn lipschitz_estimate(a2: Option<f64>, m: &ResolvedMap, seed: u64) -> Result<f64> {
    match a2 {
        Some(v) => Ok(v),
        None => m.map.spherical_derivative_sup(2000, &mut task_rng(seed, 0xa2)),
    }
}

/// Runs one experiment with its derived seed.
pub fn run_experiment(entry: &ExperimentEntry, settings: &SolverSettings, seed: u64) -> Result<ExperimentOutput> {
    let m = &entry.map;
    let dim = m.map.dim();
    let mut settings = settings.clone();
    settings.rng_seed = seed;
    let solver = Arc::new(FiberSolver::new(m.map.clone(), settings)?);
    match &entry.spec {
        Experiment::Fiber(e) => {
            let a = ProjectivePoint::from_pairs(&e.point)?;
            let f = solver.backward_tree(&a, e.n)?;
            let mut csv = String::new();
            let cols: Vec<String> = (0..=dim)
                .flat_map(|i| [format!("x{i}_re"), format!("x{i}_im")])
                .collect();
            csv.push_str(&format!("{},multiplicity\n", cols.join(",")));
            for (p, k) in &f.points {
                let c: Vec<String> = p
                    .coords()
                    .iter()
                    .flat_map(|z| [z.re.to_string(), z.im.to_string()])
                    .collect();
                csv.push_str(&format!("{},{k}\n", c.join(",")));
            }
            let points: Vec<Value> = f
                .points
                .iter()
                .map(|(p, k)| json!({"coords": p, "multiplicity": k}))
                .collect();
            let total = f.total_multiplicity();
            let expected = (m.map.topological_degree() as u128).pow(e.n as u32);
            let ok = total == expected && f.residual <= crate::fiber::FIBER_RESIDUAL;
            Ok(ExperimentOutput {
                result: json!({
                    "base": f.base_point,
                    "n": f.n,
                    "points": points,
                    "residual": f.residual,
                    "total_multiplicity": total.to_string(),
                    "expected_multiplicity": expected.to_string(),
                }),
                csv: Some(csv),
                verdict: Some(if ok { Verdict::Pass } else { Verdict::Fail }),
            })
        }
        Experiment::Mu(e) => {
            let start = mu_start(&e.start, m, seed)?;
            let mu = estimate_mu(&solver, e.samples, e.burn_in, &start, &m.exceptional, seed)?;
            let mut rows = Vec::new();
            let mut csv = String::from("label,value,stderr\n");
            for phi in builtin_suite(dim)? {
                let (v, se) = (mu.pair(&phi), mu.stderr(&phi));
                csv.push_str(&format!("{},{:e},{:e}\n", phi.label, v, se));
                rows.push(json!({"label": phi.label, "value": v, "stderr": se}));
            }
            let mut result = json!({
                "samples": mu.samples,
                "burn_in": mu.burn_in,
                "start": start,
                "pairings": rows,
            });
            if e.atoms {
                result["atoms"] = to_value(&mu.points().collect::<Vec<_>>());
            }
            Ok(ExperimentOutput {
                result,
                csv: Some(csv),
                verdict: None,
            })
        }
        Experiment::Rate(e) => run_rate(e, m, &solver, seed),
        Experiment::Holder(e) => {
            let base = ProjectivePoint::from_pairs(&e.base)?;
            let dir: Vec<Complex64> = match &e.direction {
                Some(d) => d.iter().map(|p| Complex64::new(p[0], p[1])).collect(),
                None => (0..dim).map(|i| Complex64::new(1.0, 0.3 + 0.2 * i as f64)).collect(),
            };
            let scales = e.scales.clone().unwrap_or_else(default_holder_scales);
            let r = fiber_holder_probe(&solver, &base, &dir, &scales)?;
            let mut csv = String::from("separation,matching_cost\n");
            for (s, c) in r.separations.iter().zip(&r.matching_costs) {
                csv.push_str(&format!("{s:e},{c:e}\n"));
            }
            let verdict = e.expected_exponent.map(|x| match r.fitted_exponent {
                Some(s) if (s - x).abs() <= e.tolerance => Verdict::Pass,
                Some(_) => Verdict::Fail,
                None => Verdict::Inconclusive,
            });
            Ok(ExperimentOutput {
                result: to_value(&r),
                csv: Some(csv),
                verdict,
            })
        }
        Experiment::Exceptional(e) => run_exceptional(e, m, &solver, seed),
        Experiment::Telescope(e) => {
            let a = ProjectivePoint::from_pairs(&e.point)?;
            let start = default_mu_start(dim, &m.exceptional, seed);
            let mu = estimate_mu(&solver, e.mu_samples, e.burn_in, &start, &m.exceptional, seed)?;
            let phi = builtin(dim, &e.function)?;
            let phi0 = phi.shifted(mu.pair(&phi));
            let opts = TelescopeOptions {
                grid: e.grid,
                group_samples: e.group_samples,
                seed,
                a2: lipschitz_estimate(e.a2, m, seed)?,
            };
            let r = telescope_run(&phi0, &solver, &a, e.levels, e.m, e.delta, &mu, &m.exceptional, &opts)?;
            let mut csv = String::from("level,theta,eta,c_i,c_identity,psi_sup_off_tube,phi_sup,phi_bound_ok\n");
            for s in &r.states {
                csv.push_str(&format!(
                    "{},{:e},{:e},{:e},{:e},{:e},{:e},{}\n",
                    s.level, s.theta_i, s.eta, s.c_i, s.c_identity, s.psi_sup_off_tube, s.phi_sup, s.phi_bound_ok
                ));
            }
            let ok = r.c_monotone && r.states.iter().all(|s| s.phi_bound_ok);
            Ok(ExperimentOutput {
                result: to_value(&r),
                csv: Some(csv),
                verdict: Some(if ok { Verdict::Pass } else { Verdict::Fail }),
            })
        }
        Experiment::Regularize(e) => {
            let phi = builtin(dim, &e.function)?;
            let scheme = RegularizationScheme::new(dim, e.theta, e.samples, seed)?;
            let reg = regularize(&phi, &scheme)?;
            let mut rng = task_rng(seed, 0x9e);
            let pts: Vec<ProjectivePoint> = (0..e.probe_points)
                .map(|_| ProjectivePoint::random(dim, &mut rng))
                .collect();
            let vals: Vec<(f64, f64)> = pts.par_iter().map(|x| (phi.eval(x), reg.eval(x))).collect();
            let cols: Vec<String> = (0..=dim)
                .flat_map(|i| [format!("x{i}_re"), format!("x{i}_im")])
                .collect();
            let mut csv = format!("{},phi,phi_theta,abs_diff\n", cols.join(","));
            let mut sup_diff: f64 = 0.0;
            for (x, (a, b)) in pts.iter().zip(&vals) {
                let c: Vec<String> = x
                    .coords()
                    .iter()
                    .flat_map(|z| [z.re.to_string(), z.im.to_string()])
                    .collect();
                csv.push_str(&format!("{},{a:e},{b:e},{:e}\n", c.join(","), (a - b).abs()));
                sup_diff = sup_diff.max((a - b).abs());
            }
            let bound = phi.grad_sup.map(|g| g * scheme.displacement_factor_eta * e.theta);
            let verdict = bound.map(|b| if sup_diff <= b { Verdict::Pass } else { Verdict::Fail });
            Ok(ExperimentOutput {
                result: json!({
                    "label": phi.label,
                    "theta": e.theta,
                    "eta": scheme.displacement_factor_eta,
                    "lipschitz_factor": scheme.lipschitz_factor,
                    "grad_sup": phi.grad_sup,
                    "regularized_grad_sup": reg.grad_sup,
                    "sup_diff": sup_diff,
                    "bound": bound,
                }),
                csv: Some(csv),
                verdict,
            })
        }
    }
}

fn run_rate(e: &RateExp, m: &ResolvedMap, solver: &FiberSolver, seed: u64) -> Result<ExperimentOutput> {
    let dim = m.map.dim();
    let d = m.map.degree() as f64;
    let labels = e
        .fns
        .clone()
        .unwrap_or_else(|| vec![if dim == 1 { "Z" } else { "re_zw" }.to_string()]);
    let fns = labels.iter().map(|l| builtin(dim, l)).collect::<Result<Vec<_>>>()?;
    let n_max = e.n_max.unwrap_or(if dim == 1 { 10 } else { 5 });
    let lambda = e.lambda.unwrap_or(0.95 * d);
    if !(lambda > 1.0 && lambda < d) {
        return Err(Error::InvalidArgument(format!("lambda = {lambda} not in (1, {d})")));
    }
    let start = default_mu_start(dim, &m.exceptional, seed);
    let mu = estimate_mu(solver, e.mu_samples, e.burn_in, &start, &m.exceptional, seed)?;
    if e.scan {
        let points = match &e.scan_points {
            Some(ps) => ps
                .iter()
                .map(|p| ProjectivePoint::from_pairs(p))
                .collect::<Result<Vec<_>>>()?,
            None => default_scan_points(),
        };
        let scans = fns
            .iter()
            .map(|phi| {
                log_prefactor_scan(
                    solver,
                    phi,
                    &points,
                    e.n_min,
                    n_max,
                    lambda,
                    e.alpha,
                    &mu,
                    &m.exceptional,
                    e.max_spread,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut csv = String::from("label,l_value,prefactor_a,ratio\n");
        for (phi, s) in fns.iter().zip(&scans) {
            for r in &s.rows {
                let f = |x: Option<f64>| x.map(|v| format!("{v:e}")).unwrap_or_default();
                csv.push_str(&format!(
                    "{},{:e},{},{}\n",
                    phi.label,
                    r.l_value,
                    f(r.prefactor_a),
                    f(r.ratio)
                ));
            }
        }
        return Ok(ExperimentOutput {
            verdict: Some(combine(scans.iter().map(|s| s.verdict))),
            result: json!({ "scans": scans }),
            csv: Some(csv),
        });
    }
    let a = ProjectivePoint::from_pairs(e.point.as_ref().expect("validated"))?;
    let params = RateParams {
        a,
        n_min: e.n_min,
        n_max,
        lambda_target: lambda,
        alpha: e.alpha,
    };
    let control = m.exceptional.distance(&a) <= EXCEPTIONAL_START_RADIUS;
    let reports = fns
        .iter()
        .map(|phi| {
            let mut r = rate_report(solver, phi, &mu, &m.exceptional, &params)?;
            if control {
                r.exceptional_control = true;
                r.verdict = nonconvergence_verdict(&r.e_n());
            }
            Ok(r)
        })
        .collect::<Result<Vec<RateReport>>>()?;
    let csv = if reports.len() == 1 {
        reports[0].to_csv()
    } else {
        let mut s = String::from("label,n,e_n,noise_floor,in_fit_window\n");
        for r in &reports {
            for line in r.to_csv().lines().skip(1) {
                s.push_str(&format!("{},{line}\n", r.label));
            }
        }
        s
    };
    Ok(ExperimentOutput {
        verdict: Some(combine(reports.iter().map(|r| r.verdict))),
        result: json!({ "exceptional_control": control, "reports": reports }),
        csv: Some(csv),
    })
}

fn run_exceptional(e: &ExceptionalExp, m: &ResolvedMap, solver: &FiberSolver, seed: u64) -> Result<ExperimentOutput> {
    let dim = m.map.dim();
    match e.mode {
        ScanMode::Detect => {
            let mut rng = task_rng(seed, 0xde7);
            let detected = if dim == 1 {
                Some(detect_exceptional_k1(solver, &mut rng)?)
            } else {
                None
            };
            let invariant = check_total_invariance(solver, &m.exceptional, &mut rng)?;
            let agrees = detected.as_ref().map(|d| {
                d.points.len() == m.exceptional.points.len()
                    && d.points
                        .iter()
                        .all(|p| m.exceptional.distance(p) <= crate::fiber::FIBER_RESIDUAL)
            });
            let ok = invariant && agrees.unwrap_or(true);
            Ok(ExperimentOutput {
                result: json!({
                    "declared": m.exceptional,
                    "detected": detected,
                    "declared_totally_invariant": invariant,
                    "detected_matches_declared": agrees,
                }),
                csv: None,
                verdict: Some(if ok { Verdict::Pass } else { Verdict::Fail }),
            })
        }
        ScanMode::ProbeTube => {
            let start = default_mu_start(dim, &m.exceptional, seed);
            let mu = estimate_mu(solver, e.mu_samples, e.burn_in, &start, &m.exceptional, seed)?;
            let r = tubular_mass_probe(&mu, &m.exceptional, &e.t_grid)?;
            let mut csv = String::from("t,mass\n");
            for (t, v) in &r.masses {
                csv.push_str(&format!("{t:e},{v:e}\n"));
            }
            let verdict = match r.beta_hat {
                Some(b) if b > 0.0 => Verdict::Pass,
                Some(_) => Verdict::Fail,
                None => Verdict::Inconclusive,
            };
            Ok(ExperimentOutput {
                result: to_value(&r),
                csv: Some(csv),
                verdict: Some(verdict),
            })
        }
        ScanMode::ProbeContraction => {
            let a2 = lipschitz_estimate(e.a2, m, seed)?;
            let rows = (0..e.pairs)
                .into_par_iter()
                .map(|i| {
                    let mut rng = task_rng(seed, i as u64);
                    let x = ProjectivePoint::random(dim, &mut rng);
                    let y = ProjectivePoint::random(dim, &mut rng);
                    (1..=e.n_max)
                        .map(|n| backward_contraction_probe(solver, &x, &y, n, a2).map(|p| (i, n, p)))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let rows: Vec<_> = rows.into_iter().flatten().collect();
            let violations = rows.iter().filter(|r| r.2.violation).count();
            let min_ratio = rows
                .iter()
                .map(|r| r.2.measured / r.2.bound)
                .fold(f64::INFINITY, f64::min);
            let mut csv = String::from("pair,n,measured,bound,violation\n");
            for (i, n, p) in &rows {
                csv.push_str(&format!("{i},{n},{:e},{:e},{}\n", p.measured, p.bound, p.violation));
            }
            Ok(ExperimentOutput {
                result: json!({
                    "a2": a2,
                    "pairs": e.pairs,
                    "n_max": e.n_max,
                    "violations": violations,
                    "min_ratio": min_ratio,
                }),
                csv: Some(csv),
                verdict: Some(if violations == 0 { Verdict::Pass } else { Verdict::Fail }),
            })
        }
        ScanMode::Cocycle => {
            let scan = cocycle_scan(solver, e.probe_points, e.max_total, seed)?;
            let verdict = if scan.violations > 0 {
                Verdict::Fail
            } else if scan.reports.is_empty() {
                Verdict::Inconclusive
            } else {
                Verdict::Pass
            };
            Ok(ExperimentOutput {
                result: to_value(&scan),
                csv: None,
                verdict: Some(verdict),
            })
        }
    }
}

/// Hex SHA-256 of the canonical JSON of the experiment, its map, and the global seed.
pub fn config_hash(entry: &ExperimentEntry, global_seed: u64) -> String {
    let canonical = json!({
        "map": entry.map.spec,
        "seed": global_seed,
        "experiment": entry.raw,
    });
    let digest = Sha256::digest(serde_json::to_string(&canonical).expect("json").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct SummaryRow {
    pub id: String,
    pub kind: String,
    pub status: String,
    pub verdict: Option<Verdict>,
    pub error: Option<String>,
}

#[derive(Clone, Debug)]
pub struct SuiteOutcome {
    pub summary: Vec<SummaryRow>,
    pub exit_code: i32,
    pub written: Vec<PathBuf>,
}

/// Report JSON for one experiment, without timings.
pub fn report_json(entry: &ExperimentEntry, global_seed: u64, out: &Result<ExperimentOutput>) -> Value {
    let seed = experiment_seed(global_seed, &entry.id);
    let mut config = entry.raw.clone();
    config["map"] = entry.map.spec.clone();
    let mut report = json!({
        "id": entry.id,
        "kind": entry.spec.kind(),
        "version": VERSION,
        "seed": seed,
        "global_seed": global_seed,
        "config_hash": config_hash(entry, global_seed),
        "config": config,
    });
    match out {
        Ok(o) => {
            report["status"] = json!("ok");
            report["verdict"] = to_value(&o.verdict);
            report["result"] = o.result.clone();
        }
        Err(err) => {
            report["status"] = json!("error");
            report["error"] = json!(err.to_string());
        }
    }
    report
}

/// Thread count from `EQUIDIST_THREADS`, if set to a positive integer.
pub fn env_threads() -> Option<usize> {
    std::env::var("EQUIDIST_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

/// Runs every experiment and writes reports; exit code 0 iff no experiment errored.
pub fn run_suite(suite: &ExperimentSuite, threads: Option<usize>) -> Result<SuiteOutcome> {
    fs::create_dir_all(&suite.output_dir)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let outputs: Vec<(Result<ExperimentOutput>, f64)> = pool.install(|| {
        suite
            .experiments
            .par_iter()
            .map(|entry| {
                let t0 = Instant::now();
                let seed = experiment_seed(suite.seed, &entry.id);
                let out = run_experiment(entry, &suite.settings, seed);
                (out, t0.elapsed().as_secs_f64())
            })
            .collect()
    });
    let mut summary = Vec::with_capacity(outputs.len());
    let mut written = Vec::new();
    let mut timings = serde_json::Map::new();
    for (entry, (out, secs)) in suite.experiments.iter().zip(&outputs) {
        let report = report_json(entry, suite.seed, out);
        let path = suite.output_dir.join(format!("{}.json", entry.id));
        fs::write(&path, serde_json::to_string_pretty(&report).expect("json") + "\n")?;
        written.push(path);
        if let Ok(ExperimentOutput { csv: Some(csv), .. }) = out {
            let path = suite.output_dir.join(format!("{}.csv", entry.id));
            fs::write(&path, csv)?;
            written.push(path);
        }
        timings.insert(entry.id.clone(), json!(secs));
        summary.push(SummaryRow {
            id: entry.id.clone(),
            kind: entry.spec.kind().to_string(),
            status: if out.is_ok() { "ok" } else { "error" }.to_string(),
            verdict: out.as_ref().ok().and_then(|o| o.verdict),
            error: out.as_ref().err().map(|e| e.to_string()),
        });
    }
    let path = suite.output_dir.join("summary.json");
    fs::write(&path, serde_json::to_string_pretty(&summary).expect("json") + "\n")?;
    written.push(path);
    let mut csv = String::from("id,kind,status,verdict\n");
    for r in &summary {
        let v = r
            .verdict
            .map(|v| to_value(&v).as_str().unwrap_or_default().to_string())
            .unwrap_or_default();
        csv.push_str(&format!("{},{},{},{}\n", r.id, r.kind, r.status, v));
    }
    let path = suite.output_dir.join("summary.csv");
    fs::write(&path, csv)?;
    written.push(path);
    fs::write(
        suite.output_dir.join("timings.json"),
        serde_json::to_string_pretty(&Value::Object(timings)).expect("json") + "\n",
    )?;
    let errored = summary.iter().any(|r| r.status == "error");
    Ok(SuiteOutcome {
        summary,
        exit_code: i32::from(errored),
        written,
    })
}

/// Builds a single-experiment entry from a JSON value, as the subcommands do.
pub fn single_entry(map: &Value, experiment: Value) -> Result<ExperimentEntry> {
    let text = serde_json::to_string(&json!({"map": map, "experiments": [experiment]})).expect("json");
    let suite = parse_config(&text, Path::new("."))?;
    Ok(suite.experiments.into_iter().next().expect("one experiment"))
}
