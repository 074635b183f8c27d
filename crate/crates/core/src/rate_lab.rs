//! Rate experiments: `e_n = |<nu_n - mu, phi>|` against the decay `lambda^(-alpha n / 2)`,
//! non-convergence controls at exceptional points, the logarithmic prefactor scan,
//! and the fiber Hölder probe.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::assignment::min_cost_assignment;
use crate::endomorphism::HomogeneousMap;
use crate::error::{Error, Result};
use crate::exceptional::ExceptionalSetModel;
use crate::fiber::{FiberSolver, SolverSettings, WeightedFiber};
use crate::measures::{estimate_mu, fiber_measure, MuEstimate, EXCEPTIONAL_START_RADIUS};
use crate::projective::{from_chart, to_chart, ChartIndex, ProjectivePoint};
use crate::rng::task_rng;
use crate::stats::{batch_means, linear_fit};
use crate::test_functions::{builtin, TestFunction};

/// Noise floor multiple of the `<mu-hat, phi>` standard error.
pub const NOISE_MULTIPLE: f64 = 3.0;
/// Absolute lower bound of the noise floor.
pub const NOISE_FLOOR_MIN: f64 = 1e-12;
/// Minimal number of points in a fit window.
pub const MIN_FIT_POINTS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

/// Schedule parameters shared by the rate report variants.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateParams {
    pub a: ProjectivePoint,
    pub n_min: usize,
    pub n_max: usize,
    pub lambda_target: f64,
    pub alpha: f64,
}

/// A full experiment: the map, the base point, the observables, and the mu-hat budget.
#[derive(Clone, Debug)]
pub struct RateExperimentConfig {
    pub map: Arc<HomogeneousMap>,
    pub settings: SolverSettings,
    pub exceptional: ExceptionalSetModel,
    pub params: RateParams,
    pub fn_labels: Vec<String>,
    pub mu_samples: usize,
    pub burn_in: usize,
    /// Start of the mu-hat walks; a seeded random point off `E` when absent.
    pub mu_start: Option<ProjectivePoint>,
    pub seed: u64,
}

impl RateExperimentConfig {
    /// Defaults: `n` in `1..=10` on P^1 and `1..=5` on P^2, `lambda = 0.95 d`, `alpha = 2`.
    pub fn new(map: Arc<HomogeneousMap>, exceptional: ExceptionalSetModel, a: ProjectivePoint) -> Self {
        let n_max = if map.dim() == 1 { 10 } else { 5 };
        let fn_labels = if map.dim() == 1 {
            vec!["Z".to_string()]
        } else {
            vec!["re_zw".to_string()]
        };
        let lambda_target = 0.95 * map.degree() as f64;
        RateExperimentConfig {
            map,
            settings: SolverSettings::default(),
            exceptional,
            params: RateParams {
                a,
                n_min: 1,
                n_max,
                lambda_target,
                alpha: 2.0,
            },
            fn_labels,
            mu_samples: 100_000,
            burn_in: 40,
            mu_start: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = &self.params;
        let d = self.map.degree() as f64;
        if !(p.lambda_target > 1.0 && p.lambda_target < d) {
            return Err(Error::InvalidArgument(format!(
                "lambda_target = {} not in (1, {d})",
                p.lambda_target
            )));
        }
        if !(p.alpha > 0.0 && p.alpha <= 2.0) {
            return Err(Error::InvalidArgument(format!("alpha = {} not in (0, 2]", p.alpha)));
        }
        if p.n_min == 0 || p.n_min > p.n_max {
            return Err(Error::InvalidArgument(format!("bad n range {}..={}", p.n_min, p.n_max)));
        }
        let dk = self.map.topological_degree() as u128;
        let needed = dk.saturating_pow(p.n_max as u32);
        if needed > self.settings.max_tree_nodes as u128 {
            return Err(Error::TreeTooLarge {
                needed,
                limit: self.settings.max_tree_nodes,
            });
        }
        if p.a.dim() != self.map.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.map.dim(),
                got: p.a.dim(),
            });
        }
        if self.fn_labels.is_empty() {
            return Err(Error::InvalidArgument("no observables selected".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateRow {
    pub n: usize,
    pub e_n: f64,
    pub in_fit_window: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateReport {
    pub label: String,
    pub params: RateParams,
    /// `<mu-hat, phi>` and its batch-means standard error.
    pub mu_pairing: f64,
    pub mu_stderr: f64,
    pub rows: Vec<RateRow>,
    pub noise_floor: f64,
    pub fit_window: Vec<usize>,
    /// `rho` in `e_n ~ C rho^n`.
    pub fitted_rate_rho: Option<f64>,
    /// `max over the fit window of e_n lambda^(alpha n / 2)`.
    pub prefactor_a: Option<f64>,
    pub l_value: f64,
    /// `min(alpha, holder exponent of phi)`.
    pub alpha_effective: f64,
    /// `lambda^(-alpha_effective / 2)`.
    pub threshold: f64,
    /// Set on non-convergence controls at points of `E`.
    pub exceptional_control: bool,
    pub verdict: Verdict,
}

impl RateReport {
    pub fn e_n(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.e_n).collect()
    }

    /// Rows as CSV: `n,e_n,noise_floor,in_fit_window`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,e_n,noise_floor,in_fit_window\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{:e},{:e},{}\n",
                r.n, r.e_n, self.noise_floor, r.in_fit_window
            ));
        }
        s
    }
}

/// Pass iff `rho <= lambda^(-alpha / 2)`; no fit means inconclusive.
pub fn rate_verdict(rho: Option<f64>, lambda: f64, alpha: f64) -> Verdict {
    match rho {
        None => Verdict::Inconclusive,
        Some(r) if r <= lambda.powf(-alpha / 2.0) => Verdict::Pass,
        Some(_) => Verdict::Fail,
    }
}

/// Leading run of rows above the noise floor; later rows are indistinguishable from noise.
fn fit_window(ns: &[usize], e: &[f64], floor: f64) -> Vec<usize> {
    ns.iter()
        .zip(e)
        .take_while(|(_, v)| **v > floor)
        .map(|(n, _)| *n)
        .collect()
}

/// The rate report for `phi` against a reference value `<mu, phi>` with standard error `stderr`.
pub fn rate_report_with_reference(
    solver: &FiberSolver,
    phi: &TestFunction,
    reference: f64,
    stderr: f64,
    e: &ExceptionalSetModel,
    params: &RateParams,
) -> Result<RateReport> {
    let ns: Vec<usize> = (params.n_min..=params.n_max).collect();
    let e_n: Vec<f64> = ns
        .iter()
        .map(|&n| Ok((fiber_measure(solver, &params.a, n)?.pair(phi) - reference).abs()))
        .collect::<Result<_>>()?;
    let noise_floor = (NOISE_MULTIPLE * stderr).max(NOISE_FLOOR_MIN);
    let window = fit_window(&ns, &e_n, noise_floor);
    let (lx, ly): (Vec<f64>, Vec<f64>) = window.iter().map(|&n| (n as f64, e_n[n - params.n_min].ln())).unzip();
    let rho = if window.len() >= MIN_FIT_POINTS {
        linear_fit(&lx, &ly).map(|(slope, _)| slope.exp())
    } else {
        None
    };
    let alpha_effective = params.alpha.min(phi.holder_alpha);
    let lam = params.lambda_target;
    let prefactor_a = window
        .iter()
        .map(|&n| e_n[n - params.n_min] * lam.powf(alpha_effective * n as f64 / 2.0))
        .reduce(f64::max);
    let rows = ns
        .iter()
        .zip(&e_n)
        .map(|(&n, &v)| RateRow {
            n,
            e_n: v,
            in_fit_window: window.contains(&n),
        })
        .collect();
    Ok(RateReport {
        label: phi.label.clone(),
        params: params.clone(),
        mu_pairing: reference,
        mu_stderr: stderr,
        rows,
        noise_floor,
        fit_window: window,
        fitted_rate_rho: rho,
        prefactor_a,
        l_value: e.l_value(&params.a),
        alpha_effective,
        threshold: lam.powf(-alpha_effective / 2.0),
        exceptional_control: false,
        verdict: rate_verdict(rho, lam, alpha_effective),
    })
}

/// The rate report for `phi` against the Monte Carlo estimate `mu`.
pub fn rate_report(
    solver: &FiberSolver,
    phi: &TestFunction,
    mu: &MuEstimate,
    e: &ExceptionalSetModel,
    params: &RateParams,
) -> Result<RateReport> {
    rate_report_with_reference(solver, phi, mu.pair(phi), mu.stderr(phi), e, params)
}

/// A seeded random start at distance at least 0.1 from `E`.
pub fn default_mu_start(dim: usize, e: &ExceptionalSetModel, seed: u64) -> ProjectivePoint {
    let mut rng = task_rng(seed, u64::MAX);
    loop {
        let p = ProjectivePoint::random(dim, &mut rng);
        if e.distance(&p) >= 0.1 {
            return p;
        }
    }
}

fn prepare(cfg: &RateExperimentConfig) -> Result<(FiberSolver, MuEstimate, Vec<TestFunction>)> {
    cfg.validate()?;
    let solver = FiberSolver::new(cfg.map.clone(), cfg.settings.clone())?;
    let fns = cfg
        .fn_labels
        .iter()
        .map(|l| builtin(cfg.map.dim(), l))
        .collect::<Result<Vec<_>>>()?;
    let start = cfg
        .mu_start
        .unwrap_or_else(|| default_mu_start(cfg.map.dim(), &cfg.exceptional, cfg.seed));
    let mu = estimate_mu(&solver, cfg.mu_samples, cfg.burn_in, &start, &cfg.exceptional, cfg.seed)?;
    Ok((solver, mu, fns))
}

/// One report per observable. The base point must lie off `E`.
pub fn run_rate_experiment(cfg: &RateExperimentConfig) -> Result<Vec<RateReport>> {
    let dist = cfg.exceptional.distance(&cfg.params.a);
    if dist <= EXCEPTIONAL_START_RADIUS {
        return Err(Error::InvalidArgument(format!(
            "base point lies on E (distance {dist:e}); use the exceptional control"
        )));
    }
    let (solver, mu, fns) = prepare(cfg)?;
    fns.iter()
        .map(|phi| rate_report(&solver, phi, &mu, &cfg.exceptional, &cfg.params))
        .collect()
}

/// Non-convergence is confirmed when `max e_n >= 0.1` and `min e_n >= max e_n / 2`.
pub fn nonconvergence_verdict(e_n: &[f64]) -> Verdict {
    let max = e_n.iter().cloned().fold(0.0, f64::max);
    let min = e_n.iter().cloned().fold(f64::INFINITY, f64::min);
    if max >= 0.1 && min >= 0.5 * max {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

/// Controls at a point of `E`: backward orbits must not converge to `mu`.
pub fn run_exceptional_control(cfg: &RateExperimentConfig) -> Result<Vec<RateReport>> {
    let dist = cfg.exceptional.distance(&cfg.params.a);
    if dist > EXCEPTIONAL_START_RADIUS {
        return Err(Error::InvalidArgument(format!(
            "control point is not on E (distance {dist:e})"
        )));
    }
    let (solver, mu, fns) = prepare(cfg)?;
    fns.iter()
        .map(|phi| {
            let mut r = rate_report(&solver, phi, &mu, &cfg.exceptional, &cfg.params)?;
            r.exceptional_control = true;
            r.verdict = nonconvergence_verdict(&r.e_n());
            Ok(r)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrefactorRow {
    pub a: ProjectivePoint,
    pub l_value: f64,
    pub prefactor_a: Option<f64>,
    /// `prefactor_a / l^(alpha / 2)`.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrefactorScan {
    pub rows: Vec<PrefactorRow>,
    /// `max ratio / min ratio`.
    pub spread: f64,
    pub max_spread: f64,
    pub verdict: Verdict,
}

/// `a_j = affine 10^-j` for `j = 2..=8`.
pub fn default_scan_points() -> Vec<ProjectivePoint> {
    (2..=8)
        .map(|j| ProjectivePoint::affine1(Complex64::new(10f64.powi(-j), 0.0)))
        .collect()
}

/// Prefactors along points approaching `E`, normalized by `l^(alpha / 2)`.
/// Pass when the normalized prefactor varies by less than `max_spread`.
#[allow(clippy::too_many_arguments)]
pub fn log_prefactor_scan(
    solver: &FiberSolver,
    phi: &TestFunction,
    points: &[ProjectivePoint],
    n_min: usize,
    n_max: usize,
    lambda_target: f64,
    alpha: f64,
    mu: &MuEstimate,
    e: &ExceptionalSetModel,
    max_spread: f64,
) -> Result<PrefactorScan> {
    let mut rows = Vec::with_capacity(points.len());
    for a in points {
        let params = RateParams {
            a: *a,
            n_min,
            n_max,
            lambda_target,
            alpha,
        };
        let r = rate_report(solver, phi, mu, e, &params)?;
        let ratio = r.prefactor_a.map(|p| p / r.l_value.powf(r.alpha_effective / 2.0));
        rows.push(PrefactorRow {
            a: *a,
            l_value: r.l_value,
            prefactor_a: r.prefactor_a,
            ratio,
        });
    }
    let ratios: Vec<f64> = rows.iter().filter_map(|r| r.ratio).collect();
    let (spread, verdict) = if ratios.len() < 2 {
        (f64::NAN, Verdict::Inconclusive)
    } else {
        let max = ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = max / min;
        (
            spread,
            if spread < max_spread {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
        )
    };
    Ok(PrefactorScan {
        rows,
        spread,
        max_spread,
        verdict,
    })
}

/// `<nu_n, phi>` from `samples` random inverse branches, with its batch-means standard error.
pub fn sampled_fiber_pairing(
    solver: &FiberSolver,
    a: &ProjectivePoint,
    n: usize,
    phi: &TestFunction,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let v: Vec<f64> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            Ok(phi.eval(&solver.sample_inverse_branch_with(a, n, &mut rng)?))
        })
        .collect::<Result<_>>()?;
    Ok(batch_means(&v))
}

/// Fraction, with multiplicity, of `f^-m(a)` within `radius` of `E`.
pub fn exceptional_fraction(
    solver: &FiberSolver,
    a: &ProjectivePoint,
    m: usize,
    e: &ExceptionalSetModel,
    radius: f64,
) -> Result<f64> {
    let t = solver.backward_tree(a, m)?;
    let near: usize = t
        .points
        .iter()
        .filter(|(y, _)| e.distance(y) <= radius)
        .map(|p| p.1)
        .sum();
    Ok(near as f64 / t.total_multiplicity() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HolderProbeReport {
    pub base: ProjectivePoint,
    pub direction: Vec<[f64; 2]>,
    pub separations: Vec<f64>,
    /// Largest distance among optimally matched fiber points, per separation.
    pub matching_costs: Vec<f64>,
    pub fitted_exponent: Option<f64>,
    /// Largest multiplicity in the fiber of `base`.
    pub local_multiplicity_m: usize,
}

fn expanded(f: &WeightedFiber) -> Vec<ProjectivePoint> {
    f.points.iter().flat_map(|(p, m)| std::iter::repeat_n(*p, *m)).collect()
}

/// Largest matched distance under the minimal-cost assignment between two fibers.
pub fn matched_fiber_distance(fx: &WeightedFiber, fy: &WeightedFiber) -> f64 {
    let (xs, ys) = (expanded(fx), expanded(fy));
    let cost: Vec<Vec<f64>> = xs.iter().map(|x| ys.iter().map(|y| x.distance(y)).collect()).collect();
    let (assign, _) = min_cost_assignment(&cost);
    assign.iter().enumerate().map(|(i, &j)| cost[i][j]).fold(0.0, f64::max)
}

/// Fits the exponent `s` in `dist(f^-1(x), f^-1(y)) ~ dist(x, y)^s` with
/// `y = base + h direction` in the chart of the largest coordinate of `base`.
pub fn fiber_holder_probe(
    solver: &FiberSolver,
    base: &ProjectivePoint,
    direction: &[Complex64],
    scales: &[f64],
) -> Result<HolderProbeReport> {
    let dim = solver.map().dim();
    if direction.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: direction.len(),
        });
    }
    if scales.iter().any(|&h| !(1e-8..=1e-2).contains(&h)) || scales.len() < 2 {
        return Err(Error::InvalidArgument(
            "scales must be at least two values in [1e-8, 1e-2]".into(),
        ));
    }
    let pivot = (0..=dim)
        .max_by(|&i, &j| base.coord(i).norm().total_cmp(&base.coord(j).norm()))
        .expect("nonempty");
    let chart = ChartIndex::new(pivot, dim)?;
    let u = to_chart(base, chart)?;
    let fx = solver.fiber(base)?;
    let mut separations = Vec::with_capacity(scales.len());
    let mut costs = Vec::with_capacity(scales.len());
    for &h in scales {
        let v: Vec<Complex64> = u.iter().zip(direction).map(|(a, b)| a + b * h).collect();
        let y = from_chart(&v, chart)?;
        let fy = solver.fiber(&y)?;
        separations.push(base.distance(&y));
        costs.push(matched_fiber_distance(&fx, &fy));
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = separations
        .iter()
        .zip(&costs)
        .filter(|(s, c)| **s > 0.0 && **c > 0.0)
        .map(|(s, c)| (s.ln(), c.ln()))
        .unzip();
    Ok(HolderProbeReport {
        base: *base,
        direction: direction.iter().map(|c| [c.re, c.im]).collect(),
        separations,
        matching_costs: costs,
        fitted_exponent: linear_fit(&lx, &ly).map(|f| f.0),
        local_multiplicity_m: fx.points.iter().map(|p| p.1).max().unwrap_or(1),
    })
}

/// `10^-8, 10^-7.5, ..., 10^-2`.
pub fn default_holder_scales() -> Vec<f64> {
    (0..=12).map(|i| 10f64.powf(-8.0 + 0.5 * i as f64)).collect()
}
