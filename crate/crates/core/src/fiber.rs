//! Fibers `f^-1(x)` and backward trees `f^-n(a)` counted with multiplicity.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::endomorphism::{HomogeneousMap, MapIterate};
use crate::error::{Error, Result};
use crate::forms::Form;
use crate::linalg::{determinant, orthonormal_complement, random_unitary, solve2, CMatrix};
use crate::poly;
use crate::projective::{canonicalize, ProjectivePoint};

const ABERTH_ITERS: usize = 500;
const ROTATIONS: usize = 8;
const ELIMINATION_ATTEMPTS: usize = 5;
/// Relative size under which a leading coefficient counts as vanished.
const LEADING_FLOOR: f64 = 1e-8;
/// Largest accepted `dist(f(y), x)` for a fiber point.
pub const FIBER_RESIDUAL: f64 = 1e-8;
/// Tree levels smaller than this are expanded on the calling thread.
const PAR_MIN_LEVEL: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub newton_tolerance: f64,
    pub max_newton_iters: usize,
    pub cluster_radius: f64,
    pub max_tree_nodes: u64,
    pub rng_seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            newton_tolerance: 1e-12,
            max_newton_iters: 60,
            cluster_radius: 1e-7,
            max_tree_nodes: 10_000_000,
            rng_seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.newton_tolerance > 0.0) || !(self.cluster_radius > 0.0) {
            return Err(Error::InvalidArgument("solver tolerances must be positive".into()));
        }
        if self.cluster_radius <= self.newton_tolerance {
            return Err(Error::InvalidArgument(
                "cluster_radius must exceed newton_tolerance".into(),
            ));
        }
        if self.max_newton_iters == 0 || self.max_tree_nodes == 0 {
            return Err(Error::InvalidArgument(
                "iteration and node limits must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The preimages of `base_point` under `f^n`, with multiplicities summing to `d^(kn)`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedFiber {
    pub base_point: ProjectivePoint,
    pub n: usize,
    pub points: Vec<(ProjectivePoint, usize)>,
    /// Largest `dist(f^n(y), base_point)` over the fiber.
    pub residual: f64,
}

impl WeightedFiber {
    pub fn total_multiplicity(&self) -> u128 {
        self.points.iter().map(|p| p.1 as u128).sum()
    }

    /// Smallest pairwise distance between distinct fiber points (`None` for fewer than two).
    pub fn min_separation(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for i in 0..self.points.len() {
            for j in (i + 1)..self.points.len() {
                let d = self.points[i].0.distance(&self.points[j].0);
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
        best
    }
}

/// A coordinate change `y = U y'` with the map components precomposed.
#[derive(Clone, Debug)]
struct RotatedChart {
    u: CMatrix,
    /// Per component: for k = 1 one row (coefficients of F'_j(z, 1));
    /// for k = 2 the rows `A_b(s)` of `F'_j(s, r, 1)`, b = d..0.
    rows: Vec<Vec<Vec<Complex64>>>,
}

impl RotatedChart {
    fn new(map: &HomogeneousMap, u: CMatrix) -> Self {
        let rows = map
            .components()
            .iter()
            .map(|f| {
                let g = f.compose_linear(&u);
                if map.dim() == 1 {
                    vec![g.dehomogenize2()]
                } else {
                    g.split_ternary()
                }
            })
            .collect();
        RotatedChart { u, rows }
    }

    /// Rows of `sum_j w_j F'_j`.
    fn combine(&self, w: &[Complex64]) -> Vec<Vec<Complex64>> {
        let mut out = self.rows[0].clone();
        for row in out.iter_mut() {
            for a in row.iter_mut() {
                *a *= w[0];
            }
        }
        for (j, comp) in self.rows.iter().enumerate().skip(1) {
            for (orow, crow) in out.iter_mut().zip(comp) {
                for (a, b) in orow.iter_mut().zip(crow) {
                    *a += w[j] * b;
                }
            }
        }
        out
    }

    fn to_point(&self, affine: &[Complex64]) -> Result<ProjectivePoint> {
        let mut v = affine.to_vec();
        v.push(Complex64::new(1.0, 0.0));
        canonicalize(&self.u.apply(&v))
    }
}

/// Value and partial derivatives of `sum_b r^b A_b(s)` (rows leading-first in r).
fn eval_bivariate(rows: &[Vec<Complex64>], s: Complex64, r: Complex64) -> (Complex64, Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    let (mut v, mut vs, mut vr) = (zero, zero, zero);
    for row in rows {
        let (a, da) = poly::eval_with_derivative(row, s);
        vr = vr * r + v;
        v = v * r + a;
        vs = vs * r + da;
    }
    (v, vs, vr)
}

fn leading_ok(p: &[Complex64]) -> bool {
    let m = p.iter().map(|a| a.norm()).fold(0.0, f64::max);
    m > 0.0 && p[0].norm() > LEADING_FLOOR * m
}

/// Merges points closer than `radius`, summing multiplicities.
fn merge_close(points: Vec<(ProjectivePoint, usize)>, radius: f64) -> Vec<(ProjectivePoint, usize)> {
    let mut out: Vec<(ProjectivePoint, usize)> = Vec::with_capacity(points.len());
    for (p, m) in points {
        match out.iter_mut().find(|(q, _)| q.distance(&p) <= radius) {
            Some(slot) => {
                // Keep the representative of the heavier cluster.
                if m > slot.1 {
                    slot.0 = p;
                }
                slot.1 += m;
            }
            None => out.push((p, m)),
        }
    }
    out
}

/// Roots of a binary form with multiplicities, computed in a random chart.
pub fn binary_form_roots<R: Rng + ?Sized>(
    form: &Form,
    settings: &SolverSettings,
    rng: &mut R,
) -> Result<Vec<(ProjectivePoint, usize)>> {
    for _ in 0..ROTATIONS {
        let u = random_unitary(2, rng);
        let g = form.compose_linear(&u);
        let p = g.dehomogenize2();
        if !leading_ok(&p) {
            continue;
        }
        let roots = poly::roots_with_multiplicity(&p, settings.cluster_radius, ABERTH_ITERS)?;
        let pts = roots
            .into_iter()
            .map(|(z, m)| {
                let v = u.apply(&[z, Complex64::new(1.0, 0.0)]);
                canonicalize(&v).map(|p| (p, m))
            })
            .collect::<Result<Vec<_>>>()?;
        return Ok(merge_close(pts, settings.cluster_radius));
    }
    Err(Error::DegenerateFiber)
}

/// Fiber solver bound to one map, holding a pool of precomposed random charts.
#[derive(Clone, Debug)]
pub struct FiberSolver {
    map: Arc<HomogeneousMap>,
    settings: SolverSettings,
    charts: Vec<RotatedChart>,
}

impl FiberSolver {
    pub fn new(map: Arc<HomogeneousMap>, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(settings.rng_seed);
        rng.set_stream(0xf1be);
        let charts = (0..ROTATIONS)
            .map(|_| RotatedChart::new(&map, random_unitary(map.dim() + 1, &mut rng)))
            .collect();
        Ok(FiberSolver { map, settings, charts })
    }

    pub fn map(&self) -> &Arc<HomogeneousMap> {
        &self.map
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// `f^-1(x)` with multiplicities.
    pub fn fiber(&self, x: &ProjectivePoint) -> Result<WeightedFiber> {
        if x.dim() != self.map.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.map.dim(),
                got: x.dim(),
            });
        }
        let (mut points, residual) = if self.map.dim() == 1 {
            self.fiber_k1(x)?
        } else {
            self.fiber_k2(x)?
        };
        points.sort_by(|a, b| a.0.canonical_cmp(&b.0));
        Ok(WeightedFiber {
            base_point: *x,
            n: 1,
            points,
            residual,
        })
    }

    /// Largest `dist(f(y), x)` when the mass is right and every point is within tolerance.
    fn checked_residual(&self, x: &ProjectivePoint, pts: &[(ProjectivePoint, usize)], expected: usize) -> Option<f64> {
        if pts.iter().map(|p| p.1).sum::<usize>() != expected {
            return None;
        }
        let mut residual: f64 = 0.0;
        for (y, _) in pts {
            let r = self.map.evaluate(y).ok()?.distance(x);
            if !(r <= FIBER_RESIDUAL) {
                return None;
            }
            residual = residual.max(r);
        }
        Some(residual)
    }

    fn fiber_k1(&self, x: &ProjectivePoint) -> Result<(Vec<(ProjectivePoint, usize)>, f64)> {
        let d = self.map.degree();
        // P(y) x_1 - Q(y) x_0 = 0.
        let w = [x.coord(1), -x.coord(0)];
        let mut last_err = None;
        let mut any_chart = false;
        for chart in &self.charts {
            let p = chart.combine(&w).swap_remove(0);
            if !leading_ok(&p) {
                continue;
            }
            any_chart = true;
            let roots = match poly::roots_with_multiplicity(&p, self.settings.cluster_radius, ABERTH_ITERS) {
                Ok(r) => r,
                Err(e) => {
                    last_err = Some(e);
                    continue;
                }
            };
            let pts = roots
                .into_iter()
                .map(|(z, m)| chart.to_point(&[z]).map(|p| (p, m)))
                .collect::<Result<Vec<_>>>()?;
            let pts = merge_close(pts, self.settings.cluster_radius);
            if let Some(r) = self.checked_residual(x, &pts, d) {
                return Ok((pts, r));
            }
            last_err = Some(Error::solver("fiber residual above tolerance"));
        }
        if !any_chart {
            return Err(Error::DegenerateFiber);
        }
        Err(last_err.unwrap_or(Error::DegenerateFiber))
    }

    fn fiber_k2(&self, x: &ProjectivePoint) -> Result<(Vec<(ProjectivePoint, usize)>, f64)> {
        let d = self.map.degree();
        let basis = orthonormal_complement(x.coords());
        let weights: Vec<Vec<Complex64>> = basis.iter().map(|e| e.iter().map(|a| a.conj()).collect()).collect();
        let mut last_err = None;
        let mut degenerate = 0;
        for chart in self.charts.iter().take(ELIMINATION_ATTEMPTS) {
            let g1 = chart.combine(&weights[0]);
            let g2 = chart.combine(&weights[1]);
            let res = match sylvester_resultant_in_r(&g1, &g2, d) {
                Some(r) => r,
                None => {
                    degenerate += 1;
                    continue;
                }
            };
            match self.solve_eliminated(chart, &g1, &g2, &res) {
                Ok(pts) => match self.checked_residual(x, &pts, d * d) {
                    Some(r) => return Ok((pts, r)),
                    None => last_err = Some(Error::solver("fiber residual or mass check failed")),
                },
                Err(e) => last_err = Some(e),
            }
        }
        if degenerate == ELIMINATION_ATTEMPTS {
            return Err(Error::EliminationDegenerate {
                attempts: ELIMINATION_ATTEMPTS,
            });
        }
        Err(last_err.unwrap_or(Error::EliminationDegenerate {
            attempts: ELIMINATION_ATTEMPTS,
        }))
    }

    fn solve_eliminated(
        &self,
        chart: &RotatedChart,
        g1: &[Vec<Complex64>],
        g2: &[Vec<Complex64>],
        res: &[Complex64],
    ) -> Result<Vec<(ProjectivePoint, usize)>> {
        let radius = self.settings.cluster_radius;
        let s_roots = poly::roots_with_multiplicity(res, radius, ABERTH_ITERS)?;
        let mut out = Vec::with_capacity(s_roots.len());
        for (s, m) in s_roots {
            let p1: Vec<Complex64> = g1.iter().map(|row| poly::eval(row, s)).collect();
            let p2: Vec<Complex64> = g2.iter().map(|row| poly::eval(row, s)).collect();
            let r_cands = if leading_ok(&p1) {
                poly::roots_with_multiplicity(&p1, radius, ABERTH_ITERS)?
            } else {
                poly::roots_with_multiplicity(&p2, radius, ABERTH_ITERS)?
            };
            let mut r = r_cands
                .iter()
                .map(|(r, _)| *r)
                .min_by(|a, b| {
                    let fa = poly::eval(&p2, *a).norm() + poly::eval(&p1, *a).norm();
                    let fb = poly::eval(&p2, *b).norm() + poly::eval(&p1, *b).norm();
                    fa.total_cmp(&fb)
                })
                .ok_or_else(|| Error::solver("no candidate for the second coordinate"))?;
            let mut s = s;
            if m == 1 {
                for _ in 0..self.settings.max_newton_iters {
                    let (v1, a, b) = eval_bivariate(g1, s, r);
                    let (v2, c, dd) = eval_bivariate(g2, s, r);
                    let Some(step) = solve2(a, b, c, dd, [v1, v2]) else {
                        break;
                    };
                    s -= step[0];
                    r -= step[1];
                    let size = step[0].norm().max(step[1].norm());
                    if size <= self.settings.newton_tolerance * (1.0 + s.norm().max(r.norm())) {
                        break;
                    }
                }
            }
            out.push((chart.to_point(&[s, r])?, m));
        }
        Ok(merge_close(out, radius))
    }

    /// `f^-n(a)` expanded level by level; multiplicities multiply along branches.
    pub fn backward_tree(&self, a: &ProjectivePoint, n: usize) -> Result<WeightedFiber> {
        let dk = self.map.topological_degree() as u128;
        let needed = dk.checked_pow(n as u32).unwrap_or(u128::MAX);
        if needed > self.settings.max_tree_nodes as u128 {
            return Err(Error::TreeTooLarge {
                needed,
                limit: self.settings.max_tree_nodes,
            });
        }
        let mut level: Vec<(ProjectivePoint, usize)> = vec![(*a, 1)];
        let mut parents: Vec<Vec<usize>> = Vec::with_capacity(n);
        for depth in 0..n {
            let expand = |(p, m): &(ProjectivePoint, usize)| -> Result<Vec<(ProjectivePoint, usize)>> {
                self.fiber(p)
                    .map(|f| f.points.into_iter().map(|(y, k)| (y, k * m)).collect())
            };
            let expanded: Vec<Result<Vec<(ProjectivePoint, usize)>>> = if level.len() >= PAR_MIN_LEVEL {
                level.par_iter().map(expand).collect()
            } else {
                level.iter().map(expand).collect()
            };
            let mut next = Vec::with_capacity(level.len() * dk as usize);
            let mut parent_of = Vec::with_capacity(level.len() * dk as usize);
            for (i, r) in expanded.into_iter().enumerate() {
                match r {
                    Ok(children) => {
                        parent_of.extend(std::iter::repeat_n(i, children.len()));
                        next.extend(children);
                    }
                    Err(e) => {
                        // Path from the root: node indices at levels 0..=depth.
                        let mut err = e.at_node(i);
                        let mut idx = i;
                        for lvl in (0..depth).rev() {
                            idx = parents[lvl][idx];
                            err = err.at_node(idx);
                        }
                        return Err(err);
                    }
                }
            }
            parents.push(parent_of);
            level = next;
        }
        let iterate = MapIterate::new(self.map.clone(), n);
        let res = |(y, _): &(ProjectivePoint, usize)| iterate.evaluate(y).map(|fy| fy.distance(a));
        let residuals: Vec<f64> = if level.len() >= PAR_MIN_LEVEL {
            level.par_sort_by(|x, y| x.0.canonical_cmp(&y.0));
            level.par_iter().map(res).collect::<Result<_>>()?
        } else {
            level.sort_by(|x, y| x.0.canonical_cmp(&y.0));
            level.iter().map(res).collect::<Result<_>>()?
        };
        let residual = residuals.into_iter().fold(0.0, f64::max);
        Ok(WeightedFiber {
            base_point: *a,
            n,
            points: level,
            residual,
        })
    }

    /// One draw from `d^(-kn) (f^n)^* delta_a`, deterministic in `(rng_seed, rng_stream)`.
    pub fn sample_inverse_branch(&self, a: &ProjectivePoint, n: usize, rng_stream: u64) -> Result<ProjectivePoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.settings.rng_seed);
        rng.set_stream(rng_stream);
        self.sample_inverse_branch_with(a, n, &mut rng)
    }

    /// Backward walk choosing each preimage with probability `multiplicity / d^k`.
    pub fn sample_inverse_branch_with<R: Rng + ?Sized>(
        &self,
        a: &ProjectivePoint,
        n: usize,
        rng: &mut R,
    ) -> Result<ProjectivePoint> {
        if n == 0 {
            return Err(Error::InvalidArgument("inverse branch needs n >= 1".into()));
        }
        let dk = self.map.topological_degree();
        let mut x = *a;
        for _ in 0..n {
            let fib = self.fiber(&x)?;
            let mut pick = rng.random_range(0..dk);
            let mut chosen = fib.points[fib.points.len() - 1].0;
            for (y, m) in &fib.points {
                if pick < *m {
                    chosen = *y;
                    break;
                }
                pick -= m;
            }
            x = chosen;
        }
        Ok(x)
    }
}

/// Coefficients (leading-first) of `Res_r(G1, G2)(s)`, by evaluating the
/// Sylvester determinant at the (d^2 + 1)-th roots of unity and inverting the DFT.
/// `None` if the resultant's degree drops below `d^2`.
fn sylvester_resultant_in_r(g1: &[Vec<Complex64>], g2: &[Vec<Complex64>], d: usize) -> Option<Vec<Complex64>> {
    let deg = d * d;
    let npts = deg + 1;
    let size = 2 * d;
    let values: Vec<Complex64> = (0..npts)
        .map(|k| {
            let s = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * k as f64 / npts as f64);
            let a: Vec<Complex64> = g1.iter().map(|row| poly::eval(row, s)).collect();
            let b: Vec<Complex64> = g2.iter().map(|row| poly::eval(row, s)).collect();
            let mut m = CMatrix::zeros(size, size);
            for row in 0..d {
                for j in 0..=d {
                    m[(row, row + j)] = a[j];
                    m[(d + row, row + j)] = b[j];
                }
            }
            determinant(m)
        })
        .collect();
    // Ascending coefficients c_m = (1/N) sum_k v_k w^(-km).
    let mut asc = vec![Complex64::new(0.0, 0.0); npts];
    for (m, c) in asc.iter_mut().enumerate() {
        for (k, v) in values.iter().enumerate() {
            let ang = -2.0 * std::f64::consts::PI * ((k * m) % npts) as f64 / npts as f64;
            *c += v * Complex64::from_polar(1.0, ang);
        }
        *c /= npts as f64;
    }
    asc.reverse();
    if leading_ok(&asc) {
        Some(asc)
    } else {
        None
    }
}
