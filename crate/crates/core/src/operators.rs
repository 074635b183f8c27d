//! The pushforward `f_*` on functions, the normalized operator
//! `Lambda = d^(1-k) f_*`, and the telescoping regularized-iteration diagnostic.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exceptional::ExceptionalSetModel;
use crate::fiber::FiberSolver;
use crate::measures::MuEstimate;
use crate::projective::{canonicalize, ProjectivePoint};
use crate::test_functions::{RegularizationScheme, TestFunction};

/// Memo keys round canonical coordinates to this granularity.
const MEMO_GRANULARITY: f64 = 1e-10;

type MemoKey = [i64; 6];

fn memo_key(x: &ProjectivePoint) -> MemoKey {
    let mut k = [0i64; 6];
    for (i, c) in x.coords().iter().enumerate() {
        k[2 * i] = (c.re / MEMO_GRANULARITY).round() as i64;
        k[2 * i + 1] = (c.im / MEMO_GRANULARITY).round() as i64;
    }
    k
}

/// `x -> scale * sum_{y in f^-n(x)} m(y) phi(y)`, evaluated lazily and memoized.
#[derive(Clone)]
pub struct PushforwardFunction {
    pub base_fn: TestFunction,
    solver: Arc<FiberSolver>,
    pub order: usize,
    pub scale: f64,
    memo: Arc<Mutex<HashMap<MemoKey, f64>>>,
}

impl PushforwardFunction {
    pub fn eval(&self, x: &ProjectivePoint) -> Result<f64> {
        let key = memo_key(x);
        if let Some(v) = self.memo.lock().expect("memo lock").get(&key) {
            return Ok(*v);
        }
        // Evaluate at the rounded point so that equal keys give equal values.
        let tree = self.solver.backward_tree(x, self.order)?;
        let v = self.scale
            * tree
                .points
                .iter()
                .map(|(y, m)| *m as f64 * self.base_fn.eval(y))
                .sum::<f64>();
        Ok(*self.memo.lock().expect("memo lock").entry(key).or_insert(v))
    }

    /// `scale * d^(kn) * sup |phi|`.
    pub fn sup_bound(&self) -> f64 {
        let dk = self.solver.map().topological_degree() as f64;
        self.scale * dk.powi(self.order as i32) * self.base_fn.holder_norm
    }

    /// The pushforward as an observable; solver failures evaluate to NaN.
    pub fn to_test_function(&self) -> TestFunction {
        let me = self.clone();
        TestFunction::with_data(
            &format!("push{}({})", self.order, self.base_fn.label),
            self.base_fn.dim(),
            None,
            self.base_fn.holder_alpha,
            self.sup_bound(),
            Arc::new(move |x| me.eval(x).unwrap_or(f64::NAN)),
        )
    }
}

/// `(f_*)^order phi`.
pub fn pushforward(phi: &TestFunction, solver: Arc<FiberSolver>, order: usize) -> Result<PushforwardFunction> {
    if order == 0 {
        return Err(Error::InvalidArgument("pushforward order must be >= 1".into()));
    }
    if phi.dim() != solver.map().dim() {
        return Err(Error::DimensionMismatch {
            expected: solver.map().dim(),
            got: phi.dim(),
        });
    }
    Ok(PushforwardFunction {
        base_fn: phi.clone(),
        solver,
        order,
        scale: 1.0,
        memo: Arc::new(Mutex::new(HashMap::new())),
    })
}

/// `Lambda phi = d^(1-k) f_* phi`.
pub fn lambda_op(phi: &TestFunction, solver: Arc<FiberSolver>) -> Result<PushforwardFunction> {
    let d = solver.map().degree() as f64;
    let k = solver.map().dim() as i32;
    let mut p = pushforward(phi, solver, 1)?;
    p.scale = d.powi(1 - k);
    Ok(p)
}

/// A function on P^1 tabulated in the charts `z/w` (for `|z| <= |w|`) and
/// `w/z` (otherwise), each on a uniform grid over `[-1.1, 1.1]^2`, read by bilinear interpolation.
#[derive(Clone, Debug)]
pub struct GridFunction {
    n: usize,
    h: f64,
    values: [Vec<f64>; 2],
}

const GRID_HALF_WIDTH: f64 = 1.1;

impl GridFunction {
    fn node_coord(&self, i: usize) -> f64 {
        -GRID_HALF_WIDTH + self.h * i as f64
    }

    /// Chart and affine coordinate of a node.
    pub fn node_point(&self, chart: usize, i: usize, j: usize) -> ProjectivePoint {
        let u = Complex64::new(self.node_coord(i), self.node_coord(j));
        let one = Complex64::new(1.0, 0.0);
        let v = if chart == 0 { [u, one] } else { [one, u] };
        canonicalize(&v).expect("nonzero")
    }

    pub fn tabulate(n: usize, f: &(dyn Fn(&ProjectivePoint) -> f64 + Sync)) -> Self {
        let h = 2.0 * GRID_HALF_WIDTH / (n - 1) as f64;
        let mut g = GridFunction {
            n,
            h,
            values: [Vec::new(), Vec::new()],
        };
        for chart in 0..2 {
            let vals: Vec<f64> = (0..n * n)
                .into_par_iter()
                .map(|idx| f(&g.node_point(chart, idx / n, idx % n)))
                .collect();
            g.values[chart] = vals;
        }
        g
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut g = self.clone();
        for chart in 0..2 {
            g.values[chart].iter_mut().for_each(|v| *v = f(*v));
        }
        g
    }

    pub fn zip(&self, other: &GridFunction, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut g = self.clone();
        for chart in 0..2 {
            for (a, b) in g.values[chart].iter_mut().zip(&other.values[chart]) {
                *a = f(*a, *b);
            }
        }
        g
    }

    pub fn eval(&self, x: &ProjectivePoint) -> f64 {
        let (z, w) = (x.coord(0), x.coord(1));
        let (chart, u) = if z.norm() <= w.norm() { (0, z / w) } else { (1, w / z) };
        let fi = ((u.re + GRID_HALF_WIDTH) / self.h).clamp(0.0, (self.n - 1) as f64);
        let fj = ((u.im + GRID_HALF_WIDTH) / self.h).clamp(0.0, (self.n - 1) as f64);
        let i = (fi.floor() as usize).min(self.n - 2);
        let j = (fj.floor() as usize).min(self.n - 2);
        let (ti, tj) = (fi - i as f64, fj - j as f64);
        let v = &self.values[chart];
        let at = |a: usize, b: usize| v[a * self.n + b];
        (1.0 - ti) * (1.0 - tj) * at(i, j)
            + ti * (1.0 - tj) * at(i + 1, j)
            + (1.0 - ti) * tj * at(i, j + 1)
            + ti * tj * at(i + 1, j + 1)
    }

    /// Nodes whose chart coordinate lies in the closed unit disk, with their values.
    pub fn interior_nodes(&self) -> impl Iterator<Item = (ProjectivePoint, f64)> + '_ {
        (0..2).flat_map(move |chart| {
            (0..self.n * self.n).filter_map(move |idx| {
                let (i, j) = (idx / self.n, idx % self.n);
                let u = Complex64::new(self.node_coord(i), self.node_coord(j));
                (u.norm() <= 1.0).then(|| (self.node_point(chart, i, j), self.values[chart][idx]))
            })
        })
    }
}

/// Options of the telescoping diagnostic that are not schedule parameters.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TelescopeOptions {
    pub grid: usize,
    pub group_samples: usize,
    pub seed: u64,
    /// Lipschitz estimate of `f`, used for the tube radius.
    pub a2: f64,
}

impl Default for TelescopeOptions {
    fn default() -> Self {
        TelescopeOptions {
            grid: 41,
            group_samples: 100,
            seed: 0,
            a2: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScheduleParams {
    pub m: f64,
    pub delta: f64,
    pub l: f64,
    pub n: usize,
}

/// One step of `Lambda(phi_{i-1}) = c_i + phi_i + psi_i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TelescopeState {
    pub level: usize,
    /// `<mu, (Lambda phi_{i-1})_theta>`, which makes `phi_i` mean-zero.
    pub c_i: f64,
    /// `-<mu, psi_i>`, equal to `c_i` when `<mu, Lambda phi_{i-1}> = 0`.
    pub c_identity: f64,
    pub psi_sup_off_tube: f64,
    pub phi_sup: f64,
    /// `sup |phi_i| <= (3d)^i`.
    pub phi_bound_ok: bool,
    pub theta_i: f64,
    pub eta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TelescopeReport {
    pub schedule: ScheduleParams,
    pub tube_radius: f64,
    pub states: Vec<TelescopeState>,
    /// Level at which `theta_i` fell below 1e-300, if any; the run stops there.
    pub underflow_level: Option<usize>,
    /// `|c_i|` non-increasing up to 1e-12, with at most one inversion.
    pub c_monotone: bool,
}

/// `|c_i|` non-increasing with absolute slack 1e-12 and at most one inversion.
pub fn monotone_with_one_inversion(c: &[f64]) -> bool {
    c.windows(2).filter(|w| w[1].abs() > w[0].abs() + 1e-12).count() <= 1
}

/// Runs the regularized telescoping iteration on P^1 with `theta_i = exp(-M l delta^i n)`.
#[allow(clippy::too_many_arguments)]
pub fn telescope_run(
    phi0: &TestFunction,
    solver: &FiberSolver,
    a: &ProjectivePoint,
    n: usize,
    m: f64,
    delta: f64,
    mu: &MuEstimate,
    e: &ExceptionalSetModel,
    opts: &TelescopeOptions,
) -> Result<TelescopeReport> {
    let map = solver.map();
    if map.dim() != 1 {
        return Err(Error::Unsupported(
            "the telescoping diagnostic is implemented on P^1 only".into(),
        ));
    }
    let d = map.degree() as f64;
    if !(delta > 1.0 && delta < d) {
        return Err(Error::InvalidArgument(format!("delta = {delta} not in (1, {d})")));
    }
    if !(m > 0.0) || n == 0 || opts.grid < 3 {
        return Err(Error::InvalidArgument(
            "telescope needs M > 0, n >= 1, grid >= 3".into(),
        ));
    }
    let (mean0, se0) = mu.pairing_with_stderr(&|x| phi0.eval(x));
    if mean0.abs() > 5.0 * se0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "phi_0 is not recentred: <mu, phi_0> = {mean0:e} (stderr {se0:e})"
        )));
    }
    let l = e.l_value(a);
    let tube_radius = 0.5 * opts.a2.powi(-(n as i32)) * (-l).exp();
    let mu_pair = |g: &GridFunction| mu.points().map(|p| g.eval(p)).sum::<f64>() / mu.samples as f64;

    let mut phi = GridFunction::tabulate(opts.grid, &|x| phi0.eval(x));
    let mut states = Vec::with_capacity(n);
    let mut underflow_level = None;
    for i in 1..=n {
        let theta = (-m * l * delta.powi(i as i32) * n as f64).exp();
        if theta < 1e-300 {
            underflow_level = Some(i);
            break;
        }
        let scheme = RegularizationScheme::new(1, theta, opts.group_samples, opts.seed.wrapping_add(i as u64))?;
        // Lambda phi_{i-1} at the nodes; Lambda = f_* on P^1.
        let failed = Mutex::new(None);
        let lam = GridFunction::tabulate(opts.grid, &|x| match solver.fiber(x) {
            Ok(f) => f.points.iter().map(|(y, k)| *k as f64 * phi.eval(y)).sum(),
            Err(err) => {
                *failed.lock().expect("lock") = Some(err);
                f64::NAN
            }
        });
        if let Some(err) = failed.into_inner().expect("lock") {
            return Err(err);
        }
        let reg = GridFunction::tabulate(opts.grid, &|x| scheme.average(&|y| lam.eval(y), x));
        let c_i = mu_pair(&reg);
        let next = reg.map_values(|v| v - c_i);
        let psi = lam.zip(&reg, |a, b| a - b);
        let c_identity = -mu_pair(&psi);
        let psi_sup_off_tube = psi
            .interior_nodes()
            .filter(|(p, _)| e.distance(p) > tube_radius)
            .map(|(_, v)| v.abs())
            .fold(0.0, f64::max);
        let phi_sup = next.interior_nodes().map(|(_, v)| v.abs()).fold(0.0, f64::max);
        states.push(TelescopeState {
            level: i,
            c_i,
            c_identity,
            psi_sup_off_tube,
            phi_sup,
            phi_bound_ok: phi_sup <= (3.0 * d).powi(i as i32),
            theta_i: theta,
            eta: scheme.displacement_factor_eta,
        });
        phi = next;
    }
    let cs: Vec<f64> = states.iter().map(|s| s.c_i).collect();
    Ok(TelescopeReport {
        schedule: ScheduleParams { m, delta, l, n },
        tube_radius,
        c_monotone: monotone_with_one_inversion(&cs),
        states,
        underflow_level,
    })
}
