//! Local topological degrees, exceptional-set models, and the backward
//! contraction and tubular-mass probes.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::endomorphism::MapIterate;
use crate::error::{Error, Result};
use crate::fiber::{FiberSolver, FIBER_RESIDUAL};
use crate::measures::MuEstimate;
use crate::projective::ProjectivePoint;
use crate::rng::task_rng;
use crate::stats::linear_fit;

/// Targets are displaced from `f^n(x)` by these fractions of the image clearance, one per trial.
const TRIAL_OFFSETS: [f64; 3] = [1e-2, 1e-3, 1e-4];
/// `x` must lie this close to some point of `f^-n(f^n(x))` for its local degree to be resolved.
const RECOVERY_TOL: f64 = 1e-6;
/// Directions tried per offset when the perturbed fiber fails to solve.
const DIRECTION_ATTEMPTS: usize = 4;
/// Smallest target displacement; below this the trial degenerates to the unperturbed fiber.
const MIN_OFFSET: f64 = 1e-290;
/// Fiber points closer than this to `x` belong to the cluster of `x`.
const SAME_POINT: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExceptionalKind {
    FinitePoints,
    DeclaredVariety,
}

/// A finite set of points together with coordinate lines `{x_i = 0}` in P^2.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExceptionalSetModel {
    pub kind: ExceptionalKind,
    pub points: Vec<ProjectivePoint>,
    /// Indices `i` of the declared lines `{x_i = 0}`.
    pub lines: Vec<usize>,
}

impl ExceptionalSetModel {
    pub fn empty() -> Self {
        ExceptionalSetModel {
            kind: ExceptionalKind::FinitePoints,
            points: Vec::new(),
            lines: Vec::new(),
        }
    }

    pub fn finite(points: Vec<ProjectivePoint>) -> Self {
        ExceptionalSetModel {
            kind: ExceptionalKind::FinitePoints,
            points,
            lines: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty() && self.lines.is_empty()
    }

    /// Fubini–Study distance to the set; the diameter 1 when the set is empty.
    pub fn distance(&self, x: &ProjectivePoint) -> f64 {
        let to_points = self.points.iter().map(|p| p.distance(x));
        // For a unit representative, the sine distance to {x_i = 0} is |x_i|.
        let to_lines = self.lines.iter().map(|&i| x.coord(i).norm());
        to_points.chain(to_lines).fold(1.0, f64::min)
    }

    /// `1 + log+(1 / dist(a, E))`.
    pub fn l_value(&self, a: &ProjectivePoint) -> f64 {
        1.0 + (1.0 / self.distance(a)).max(1.0).ln()
    }
}

/// The exceptional set declared for a named preset.
pub fn declared_for_preset(name: &str) -> Result<ExceptionalSetModel> {
    let zero = ProjectivePoint::affine1(Complex64::new(0.0, 0.0));
    let inf = ProjectivePoint::infinity1();
    match name {
        "z2" | "z3" => Ok(ExceptionalSetModel::finite(vec![zero, inf])),
        "basilica" | "cheb" => Ok(ExceptionalSetModel::finite(vec![inf])),
        "torus2" => {
            let e = |i: usize| {
                let mut v = [[0.0, 0.0]; 3];
                v[i] = [1.0, 0.0];
                ProjectivePoint::from_pairs(&v).expect("basis vector")
            };
            Ok(ExceptionalSetModel {
                kind: ExceptionalKind::DeclaredVariety,
                points: vec![e(0), e(1), e(2)],
                lines: vec![0, 1, 2],
            })
        }
        other => Err(Error::InvalidMap(format!("unknown preset `{other}`"))),
    }
}

/// Checks `f(E) ⊆ E` and `f^-1(E) ⊆ E` on the model's points and on sampled line points.
pub fn check_total_invariance<R: Rng + ?Sized>(
    solver: &FiberSolver,
    e: &ExceptionalSetModel,
    rng: &mut R,
) -> Result<bool> {
    let mut members = e.points.clone();
    for &i in &e.lines {
        for _ in 0..10 {
            let mut x = ProjectivePoint::random(solver.map().dim(), rng).coords().to_vec();
            x[i] = Complex64::new(0.0, 0.0);
            members.push(crate::projective::canonicalize(&x)?);
        }
    }
    for p in &members {
        if e.distance(&solver.map().evaluate(p)?) > FIBER_RESIDUAL {
            return Ok(false);
        }
        if solver
            .fiber(p)?
            .points
            .iter()
            .any(|(y, _)| e.distance(y) > FIBER_RESIDUAL)
        {
            return Ok(false);
        }
    }
    Ok(true)
}

/// `min dist(f^n(y), f^n(x))` over `dist(y, x) = rho`, from sampled directions refined by
/// a local search over the sphere of directions.
fn image_clearance<R: Rng + ?Sized>(
    iterate: &MapIterate,
    x: &ProjectivePoint,
    target: &ProjectivePoint,
    rho: f64,
    rng: &mut R,
) -> Result<f64> {
    let dim = x.dim();
    let project = |v: &mut Vec<Complex64>| -> bool {
        let proj: Complex64 = v.iter().zip(x.coords()).map(|(a, b)| a * b.conj()).sum();
        for (a, b) in v.iter_mut().zip(x.coords()) {
            *a -= proj * b;
        }
        let nv = v.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if nv < 1e-8 {
            return false;
        }
        v.iter_mut().for_each(|a| *a /= nv);
        true
    };
    let image = |v: &[Complex64]| -> Result<f64> { Ok(iterate.evaluate(&x.displaced(v, rho))?.distance(target)) };
    let mut dirs: Vec<Vec<Complex64>> = (0..32).map(|_| x.random_tangent(rng)).collect();
    for i in 0..=dim {
        for phase in 0..4 {
            let mut v = vec![Complex64::new(0.0, 0.0); dim + 1];
            v[i] = Complex64::from_polar(1.0, phase as f64 * std::f64::consts::FRAC_PI_2);
            if project(&mut v) {
                dirs.push(v);
            }
        }
    }
    let mut best = dirs[0].clone();
    let mut best_val = f64::INFINITY;
    for v in dirs {
        let val = image(&v)?;
        if val < best_val {
            best_val = val;
            best = v;
        }
    }
    let mut step = 0.5;
    while step > 1e-3 {
        let mut v: Vec<Complex64> = best
            .iter()
            .zip(x.random_tangent(rng))
            .map(|(a, b)| a + b * step)
            .collect();
        if project(&mut v) {
            let val = image(&v)?;
            if val < best_val {
                best_val = val;
                best = v;
                continue;
            }
        }
        step *= 0.8;
    }
    Ok(best_val)
}

/// Local topological degree `kappa_n(x)`: preimages under `f^n` near `x` of a
/// generic target near `f^n(x)`, by majority over three offsets.
pub fn local_degree<R: Rng + ?Sized>(
    solver: &FiberSolver,
    x: &ProjectivePoint,
    n: usize,
    rng: &mut R,
) -> Result<usize> {
    if n == 0 {
        return Ok(1);
    }
    let dk = solver.map().topological_degree() as f64;
    if n as f64 * dk.ln() > (solver.settings().max_tree_nodes as f64).ln() + 1e-9 {
        return Err(Error::TreeTooLarge {
            needed: (dk as u128).saturating_pow(n as u32),
            limit: solver.settings().max_tree_nodes,
        });
    }
    let iterate = MapIterate::new(solver.map().clone(), n);
    let target = iterate.evaluate(x)?;
    // Separation of x from the rest of its fiber sets the counting radius.
    let tree = solver.backward_tree(&target, n)?;
    let sep = tree
        .points
        .iter()
        .map(|(y, _)| y.distance(x))
        .filter(|d| *d > SAME_POINT)
        .fold(f64::INFINITY, f64::min);
    // Near a superattracting point f^n(x) can sit within rounding of a critical value,
    // and its computed fiber then no longer contains x.
    if !tree.points.iter().any(|(y, _)| y.distance(x) <= RECOVERY_TOL) {
        return Err(Error::solver("point not recovered in the backward tree of its image"));
    }
    let radius = (sep / 2.0).min(1.0);
    // Targets closer to f^n(x) than the image of the sphere of radius rho around x
    // have exactly kappa_n(x) preimages inside that sphere.
    let rho = radius / 4.0;
    let clearance = image_clearance(&iterate, x, &target, rho, rng)?;
    let mut counts = Vec::with_capacity(TRIAL_OFFSETS.len());
    let mut last_err = None;
    for eps in TRIAL_OFFSETS.map(|t| (t * clearance).max(MIN_OFFSET)) {
        // Elimination loses the residual check in a band of offsets next to a critical
        // value; a trial that fails in every direction is dropped.
        let mut tree = None;
        for _ in 0..DIRECTION_ATTEMPTS {
            let v = target.random_tangent(rng);
            match solver.backward_tree(&target.displaced(&v, eps), n) {
                Ok(t) => {
                    tree = Some(t);
                    break;
                }
                Err(e @ Error::SolverFailure { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        if let Some(t) = tree {
            counts.push(
                t.points
                    .iter()
                    .filter(|(y, _)| y.distance(x) <= rho)
                    .map(|(_, m)| *m)
                    .sum::<usize>(),
            );
        }
    }
    for &c in &counts {
        if counts.iter().filter(|&&o| o == c).count() >= 2 {
            return Ok(c);
        }
    }
    match (counts.len(), last_err) {
        (0, Some(e)) => Err(e),
        _ => Err(Error::AmbiguousCount { counts }),
    }
}

/// Tabulated local degrees at a point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalDegreeProfile {
    pub point: ProjectivePoint,
    pub kappa_n: BTreeMap<usize, usize>,
    /// `max over f^-n(x)` of `kappa_n`, read off the backward tree multiplicities.
    pub kappa_minus_n: BTreeMap<usize, usize>,
    /// Largest one-step fiber multiplicity along the backward tree, off `E`.
    pub delta0_estimate: usize,
}

pub fn local_degree_profile<R: Rng + ?Sized>(
    solver: &FiberSolver,
    x: &ProjectivePoint,
    nmax: usize,
    e: &ExceptionalSetModel,
    rng: &mut R,
) -> Result<LocalDegreeProfile> {
    let mut kappa_n = BTreeMap::new();
    let mut kappa_minus_n = BTreeMap::new();
    for n in 1..=nmax {
        kappa_n.insert(n, local_degree(solver, x, n, rng)?);
        let t = solver.backward_tree(x, n)?;
        kappa_minus_n.insert(n, t.points.iter().map(|p| p.1).max().unwrap_or(1));
    }
    let mut delta0 = 1;
    let mut level = vec![*x];
    for _ in 0..nmax {
        let mut next = Vec::new();
        for p in &level {
            for (y, m) in solver.fiber(p)?.points {
                if e.distance(&y) > FIBER_RESIDUAL {
                    delta0 = delta0.max(m);
                }
                next.push(y);
            }
        }
        level = next;
    }
    Ok(LocalDegreeProfile {
        point: *x,
        kappa_n,
        kappa_minus_n,
        delta0_estimate: delta0,
    })
}

/// The largest totally invariant set of totally ramified critical points of a map on P^1.
pub fn detect_exceptional_k1<R: Rng + ?Sized>(solver: &FiberSolver, rng: &mut R) -> Result<ExceptionalSetModel> {
    let map = solver.map();
    let d = map.degree();
    let mut cands: Vec<ProjectivePoint> = map
        .critical_points_k1(solver.settings(), rng)?
        .into_iter()
        .filter(|(_, m)| *m == d - 1)
        .map(|(p, _)| p)
        .collect();
    let member = |set: &[ProjectivePoint], y: &ProjectivePoint| set.iter().any(|p| p.distance(y) <= FIBER_RESIDUAL);
    loop {
        let mut keep = Vec::with_capacity(cands.len());
        for c in &cands {
            let image_in = member(&cands, &map.evaluate(c)?);
            let fib = solver.fiber(c)?;
            let single_in = fib.points.len() == 1 && member(&cands, &fib.points[0].0);
            if image_in && single_in {
                keep.push(*c);
            }
        }
        if keep.len() == cands.len() {
            break;
        }
        cands = keep;
    }
    assert!(cands.len() <= 2, "a map on P^1 has at most two exceptional points");
    Ok(ExceptionalSetModel::finite(cands))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CocycleViolation {
    pub n: usize,
    pub m: usize,
    pub kappa_n_plus_m: usize,
    pub product: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CocycleReport {
    pub point: ProjectivePoint,
    /// `kappa_n(x)` for `n = 1..=max_total`.
    pub kappa: Vec<usize>,
    pub violations: Vec<CocycleViolation>,
}

/// Checks `kappa_{n+m}(x) = kappa_m(f^n x) kappa_n(x)` for `n, m >= 1`, `n + m <= max_total`.
pub fn cocycle_check<R: Rng + ?Sized>(
    solver: &FiberSolver,
    x: &ProjectivePoint,
    max_total: usize,
    rng: &mut R,
) -> Result<CocycleReport> {
    let kappa = (1..=max_total)
        .map(|n| local_degree(solver, x, n, rng))
        .collect::<Result<Vec<_>>>()?;
    let mut violations = Vec::new();
    let mut fx = *x;
    for n in 1..max_total {
        fx = solver.map().evaluate(&fx)?;
        for m in 1..=max_total - n {
            let product = local_degree(solver, &fx, m, rng)? * kappa[n - 1];
            if product != kappa[n + m - 1] {
                violations.push(CocycleViolation {
                    n,
                    m,
                    kappa_n_plus_m: kappa[n + m - 1],
                    product,
                });
            }
        }
    }
    Ok(CocycleReport {
        point: *x,
        kappa,
        violations,
    })
}

/// A probe point whose orbit came within rounding distance of a superattracting point.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UnresolvedPoint {
    pub point: ProjectivePoint,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CocycleScan {
    pub max_total: usize,
    pub reports: Vec<CocycleReport>,
    pub unresolved: Vec<UnresolvedPoint>,
    pub violations: usize,
}

/// Probe points for the cocycle check. On P^1 the critical points and their first preimages
/// come first; on P^2 one point on each coordinate line. The rest are endpoints of inverse
/// branches of depth `depth` from random points, so that `f^j(x)` stays on a backward orbit
/// for `j <= depth` instead of collapsing onto an attracting point.
pub fn cocycle_probe_points<R: Rng + ?Sized>(
    solver: &FiberSolver,
    count: usize,
    depth: usize,
    rng: &mut R,
) -> Result<Vec<ProjectivePoint>> {
    let dim = solver.map().dim();
    let generic = |rng: &mut R| -> Result<ProjectivePoint> {
        let y = ProjectivePoint::random(dim, rng);
        solver.sample_inverse_branch_with(&y, depth.max(1), rng)
    };
    let mut pts = Vec::new();
    if dim == 1 {
        for (c, _) in solver.map().critical_points_k1(solver.settings(), rng)? {
            pts.push(c);
            for (y, _) in solver.fiber(&c)?.points {
                pts.push(y);
            }
        }
    } else {
        for i in 0..=dim {
            let mut x = generic(rng)?.coords().to_vec();
            x[i] = Complex64::new(0.0, 0.0);
            pts.push(crate::projective::canonicalize(&x)?);
        }
    }
    pts.truncate(count);
    while pts.len() < count {
        pts.push(generic(rng)?);
    }
    Ok(pts)
}

/// Runs [`cocycle_check`] on `count` probe points, point `i` drawing from stream `i` of `seed`.
/// Points whose local degrees cannot be resolved are listed apart instead of failing the scan.
pub fn cocycle_scan(solver: &FiberSolver, count: usize, max_total: usize, seed: u64) -> Result<CocycleScan> {
    let pts = cocycle_probe_points(solver, count, max_total, &mut task_rng(seed, 0xc0c))?;
    let outcomes = pts
        .par_iter()
        .enumerate()
        .map(
            |(i, x)| match cocycle_check(solver, x, max_total, &mut task_rng(seed, i as u64)) {
                Ok(r) => Ok(Ok(r)),
                Err(Error::SolverFailure { reason, .. }) => Ok(Err(UnresolvedPoint { point: *x, reason })),
                Err(e) => Err(e),
            },
        )
        .collect::<Result<Vec<_>>>()?;
    let mut reports = Vec::new();
    let mut unresolved = Vec::new();
    for o in outcomes {
        match o {
            Ok(r) => reports.push(r),
            Err(u) => unresolved.push(u),
        }
    }
    let violations = reports.iter().map(|r| r.violations.len()).sum();
    Ok(CocycleScan {
        max_total,
        reports,
        unresolved,
        violations,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContractionProbe {
    pub measured: f64,
    pub bound: f64,
    pub violation: bool,
}

/// Minimal distance between `f^-n(x)` and `f^-n(y)` against `A_2^-n dist(x, y)`.
pub fn backward_contraction_probe(
    solver: &FiberSolver,
    x: &ProjectivePoint,
    y: &ProjectivePoint,
    n: usize,
    a2: f64,
) -> Result<ContractionProbe> {
    let dist = x.distance(y);
    if dist <= 0.0 {
        return Err(Error::InvalidArgument("contraction probe needs x != y".into()));
    }
    let fx = solver.backward_tree(x, n)?;
    let fy = solver.backward_tree(y, n)?;
    let mut measured = f64::INFINITY;
    for (p, _) in &fx.points {
        for (q, _) in &fy.points {
            measured = measured.min(p.distance(q));
        }
    }
    let bound = a2.powi(-(n as i32)) * dist;
    Ok(ContractionProbe {
        measured,
        bound,
        violation: measured < bound * (1.0 - 1e-6),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TubeReport {
    /// `(t, mu-hat mass of {dist(., E) <= t})`.
    pub masses: Vec<(f64, f64)>,
    /// Fitted exponent of mass versus t, when at least two masses clear `10 / samples`.
    pub beta_hat: Option<f64>,
    pub all_zero: bool,
}

/// Empirical mass of tubular neighbourhoods of `E` and the fitted power law.
pub fn tubular_mass_probe(mu: &MuEstimate, e: &ExceptionalSetModel, t_grid: &[f64]) -> Result<TubeReport> {
    if e.is_empty() {
        return Err(Error::InvalidArgument("tubular probe needs a nonempty set".into()));
    }
    let dists: Vec<f64> = mu.points().map(|p| e.distance(p)).collect();
    let masses: Vec<(f64, f64)> = t_grid
        .iter()
        .map(|&t| (t, dists.iter().filter(|&&d| d <= t).count() as f64 / dists.len() as f64))
        .collect();
    let floor = 10.0 / mu.samples as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = masses
        .iter()
        .filter(|(_, m)| *m >= floor)
        .map(|(t, m)| (t.ln(), m.ln()))
        .unzip();
    Ok(TubeReport {
        beta_hat: linear_fit(&lx, &ly).map(|f| f.0),
        all_zero: masses.iter().all(|m| m.1 == 0.0),
        masses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::endomorphism::{HomogeneousMap, PRESETS};
    use crate::fiber::SolverSettings;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn solver(name: &str) -> FiberSolver {
        FiberSolver::new(
            Arc::new(HomogeneousMap::preset(name).unwrap()),
            SolverSettings::default(),
        )
        .unwrap()
    }

    #[test]
    fn local_degree_examples() {
        let s = solver("z2");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = ProjectivePoint::affine1(c(0.0, 0.0));
        assert_eq!(local_degree(&s, &zero, 1, &mut rng).unwrap(), 2);
        assert_eq!(local_degree(&s, &zero, 2, &mut rng).unwrap(), 4);
        assert_eq!(
            local_degree(&s, &ProjectivePoint::affine1(c(1.0, 0.0)), 3, &mut rng).unwrap(),
            1
        );
    }

    #[test]
    fn detection_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let e = detect_exceptional_k1(&solver("z2"), &mut rng).unwrap();
        assert_eq!(e.points.len(), 2);
        assert!(e.distance(&ProjectivePoint::affine1(c(0.0, 0.0))) < 1e-10);
        assert!(e.distance(&ProjectivePoint::infinity1()) < 1e-10);
        for name in ["basilica", "cheb"] {
            let e = detect_exceptional_k1(&solver(name), &mut rng).unwrap();
            assert_eq!(e.points.len(), 1, "{name}");
            assert!(e.distance(&ProjectivePoint::infinity1()) < 1e-10);
        }
    }

    #[test]
    fn declared_sets_are_totally_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for name in PRESETS {
            let e = declared_for_preset(name).unwrap();
            assert!(check_total_invariance(&solver(name), &e, &mut rng).unwrap(), "{name}");
        }
        assert_eq!(
            ExceptionalSetModel::empty().distance(&ProjectivePoint::infinity1()),
            1.0
        );
        assert_eq!(ExceptionalSetModel::empty().l_value(&ProjectivePoint::infinity1()), 1.0);
    }

    #[test]
    fn contraction_examples() {
        let s = solver("z2");
        let p = backward_contraction_probe(
            &s,
            &ProjectivePoint::affine1(c(1.0, 0.0)),
            &ProjectivePoint::affine1(c(-1.0, 0.0)),
            1,
            2.0,
        )
        .unwrap();
        assert!(p.measured > 0.0 && !p.violation);
        let x = ProjectivePoint::affine1(c(1.0, 0.0));
        assert!(backward_contraction_probe(&s, &x, &x, 1, 2.0).is_err());
        let s3 = solver("z3");
        let p = backward_contraction_probe(
            &s3,
            &ProjectivePoint::affine1(c(0.5, 0.2)),
            &ProjectivePoint::affine1(c(0.6, -0.1)),
            2,
            3.0,
        )
        .unwrap();
        assert!(!p.violation);
    }

    #[test]
    fn cocycle_on_critical_orbits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b = solver("basilica");
        for x in [c(0.0, 0.0), c(1.0, 0.0), c(0.3, 0.2)] {
            let r = cocycle_check(&b, &ProjectivePoint::affine1(x), 6, &mut rng).unwrap();
            assert!(r.violations.is_empty(), "{r:?}");
        }
        // 0 -> -1 -> 0 is a critical cycle: kappa_n(0) = 2^ceil(n/2).
        let r = cocycle_check(&b, &ProjectivePoint::affine1(c(0.0, 0.0)), 6, &mut rng).unwrap();
        assert_eq!(r.kappa, vec![2, 2, 4, 4, 8, 8]);
        let t = solver("torus2");
        let p = ProjectivePoint::from_pairs(&[[0.0, 0.0], [0.6, 0.1], [1.0, 0.0]]).unwrap();
        let r = cocycle_check(&t, &p, 4, &mut rng).unwrap();
        assert_eq!(r.kappa, vec![2, 4, 8, 16]);
        assert!(r.violations.is_empty());
    }

    #[test]
    fn delta0_and_kappa_minus() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = solver("z2");
        let e = declared_for_preset("z2").unwrap();
        let prof = local_degree_profile(&s, &ProjectivePoint::affine1(c(0.3, 0.8)), 3, &e, &mut rng).unwrap();
        assert_eq!(prof.delta0_estimate, 1);
        let b = solver("basilica");
        let eb = declared_for_preset("basilica").unwrap();
        let prof = local_degree_profile(&b, &ProjectivePoint::affine1(c(-1.0, 0.0)), 3, &eb, &mut rng).unwrap();
        assert_eq!(prof.delta0_estimate, 2);
        // kappa_{-n} from the tree equals the direct maximum of kappa_n over the fiber.
        for n in 1..=3 {
            let t = b.backward_tree(&prof.point, n).unwrap();
            let direct = t
                .points
                .iter()
                .map(|(y, _)| local_degree(&b, y, n, &mut rng).unwrap())
                .max()
                .unwrap();
            assert_eq!(prof.kappa_minus_n[&n], direct);
        }
    }
}
