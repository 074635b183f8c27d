//! Univariate complex polynomials (coefficients stored leading-first) and a
//! simultaneous Aberth–Ehrlich root finder with multiplicity detection.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// `|z|` without the overflow guards of `hypot`; coefficients here stay far from the f64 range limits.
pub(crate) trait FastAbs {
    fn abs(&self) -> f64;
}

impl FastAbs for Complex64 {
    #[inline]
    fn abs(&self) -> f64 {
        self.norm_sqr().sqrt()
    }
}

const EPS: f64 = f64::EPSILON;
/// Widest relative radius at which approximate roots are considered one cluster.
const LOOSE_RADIUS: f64 = 1e-2;
/// Relative residual under which a cluster centroid is accepted as a multiple root.
const MULTIPLE_ROOT_TOL: f64 = 1e-11;

/// Horner evaluation; `p[0]` is the leading coefficient.
pub fn eval(p: &[Complex64], z: Complex64) -> Complex64 {
    p.iter().fold(Complex64::new(0.0, 0.0), |acc, &a| acc * z + a)
}

/// Value and first derivative in one pass.
pub fn eval_with_derivative(p: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    let mut v = zero;
    let mut dv = zero;
    for &a in p {
        dv = dv * z + v;
        v = v * z + a;
    }
    (v, dv)
}

/// Sum of |a_i| |z|^(deg - i): the natural scale of a rounding-level residual.
pub fn residual_scale(p: &[Complex64], z: Complex64) -> f64 {
    let r = z.abs();
    p.iter().fold(0.0, |acc, a| acc * r + a.abs())
}

pub fn derivative(p: &[Complex64]) -> Vec<Complex64> {
    let n = p.len().saturating_sub(1);
    p.iter().take(n).enumerate().map(|(i, &a)| a * (n - i) as f64).collect()
}

/// Multiplies two polynomials.
pub fn mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn initial_radius(p: &[Complex64]) -> f64 {
    let n = p.len() - 1;
    let lead = p[0].abs();
    // Geometric mean of root moduli, bounded below by the Fujiwara-type scale.
    let tail = p[n].abs();
    let mut r = if tail > 0.0 {
        (tail / lead).powf(1.0 / n as f64)
    } else {
        0.0
    };
    if r == 0.0 {
        r = (1..=n)
            .map(|i| (p[i].abs() / lead).powf(1.0 / i as f64))
            .fold(0.0, f64::max);
    }
    r
}

/// Roots of `a z^2 + b z + c` without cancellation: the larger root comes from
/// `b` and the discriminant of matching sign, the smaller one from Vieta.
fn quadratic_roots(a: Complex64, b: Complex64, c: Complex64) -> Vec<Complex64> {
    let sq = (b * b - 4.0 * a * c).sqrt();
    let s = if (b.conj() * sq).re >= 0.0 { sq } else { -sq };
    let q = -0.5 * (b + s);
    if q.abs() == 0.0 {
        return vec![Complex64::new(0.0, 0.0); 2];
    }
    vec![q / a, c / q]
}

/// All roots of `p` (degree >= 1, nonzero leading coefficient), unclustered.
pub fn aberth(p: &[Complex64], max_iters: usize) -> Result<Vec<Complex64>> {
    let n = p.len().saturating_sub(1);
    if n == 0 {
        return Ok(Vec::new());
    }
    if p[0].abs() == 0.0 {
        return Err(Error::solver("leading coefficient vanishes"));
    }
    if n == 1 {
        return Ok(vec![-p[1] / p[0]]);
    }
    if n == 2 {
        return Ok(quadratic_roots(p[0], p[1], p[2]));
    }
    let r0 = initial_radius(p);
    if r0 == 0.0 {
        return Ok(vec![Complex64::new(0.0, 0.0); n]);
    }
    let mut z: Vec<Complex64> = (0..n)
        .map(|j| Complex64::from_polar(r0, 0.4 + std::f64::consts::TAU * j as f64 / n as f64))
        .collect();
    let mut done = vec![false; n];
    for _ in 0..max_iters {
        let mut all = true;
        for i in 0..n {
            if done[i] {
                continue;
            }
            let (v, dv) = eval_with_derivative(p, z[i]);
            if v.abs() <= 8.0 * EPS * residual_scale(p, z[i]) {
                done[i] = true;
                continue;
            }
            let ratio = v / dv;
            let s: Complex64 = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d = z[i] - z[j];
                    if d.abs() == 0.0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        d.inv()
                    }
                })
                .sum();
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            if !w.re.is_finite() || !w.im.is_finite() {
                // Zero derivative: nudge off the critical point.
                let bump = Complex64::new(1e-8, 1e-8) * (1.0 + z[i].abs());
                z[i] += bump;
                all = false;
                continue;
            }
            z[i] -= w;
            if w.abs() <= 4.0 * EPS * (1.0 + z[i].abs()) {
                done[i] = true;
            } else {
                all = false;
            }
        }
        if all {
            return Ok(z);
        }
    }
    let worst = z
        .iter()
        .map(|&zi| eval(p, zi).abs() / residual_scale(p, zi).max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    if worst <= 1e3 * EPS {
        Ok(z)
    } else {
        Err(Error::solver(format!(
            "Aberth iteration did not converge (relative residual {worst:e})"
        )))
    }
}

fn newton_polish(p: &[Complex64], mut z: Complex64, steps: usize) -> Complex64 {
    let mut best = eval(p, z).abs();
    for _ in 0..steps {
        let (v, dv) = eval_with_derivative(p, z);
        if dv.abs() == 0.0 {
            break;
        }
        let cand = z - v / dv;
        let r = eval(p, cand).abs();
        if r < best {
            best = r;
            z = cand;
        } else {
            break;
        }
    }
    z
}

fn close(a: Complex64, b: Complex64, radius: f64) -> bool {
    (a - b).abs() <= radius * 1f64.max(a.abs()).max(b.abs())
}

/// Connected components of the "closer than radius" graph.
fn link(roots: &[Complex64], members: &[usize], radius: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut assigned = vec![false; members.len()];
    for s in 0..members.len() {
        if assigned[s] {
            continue;
        }
        assigned[s] = true;
        let mut group = vec![members[s]];
        let mut k = 0;
        while k < group.len() {
            let cur = roots[group[k]];
            for t in 0..members.len() {
                if !assigned[t] && close(cur, roots[members[t]], radius) {
                    assigned[t] = true;
                    group.push(members[t]);
                }
            }
            k += 1;
        }
        group.sort_unstable();
        groups.push(group);
    }
    groups
}

/// If the cluster is a genuine root of multiplicity `m`, returns its refined location.
fn validate_multiple(p: &[Complex64], cluster: &[Complex64]) -> Option<Complex64> {
    let m = cluster.len();
    let centroid = cluster.iter().sum::<Complex64>() / m as f64;
    let spread = cluster.iter().map(|z| (z - centroid).abs()).fold(0.0, f64::max);
    // derivs[j] is the j-th derivative divided by j!.
    let mut derivs = vec![p.to_vec()];
    for j in 1..m {
        let d: Vec<Complex64> = derivative(&derivs[j - 1]).into_iter().map(|a| a / j as f64).collect();
        derivs.push(d);
    }
    let q = &derivs[m - 1];
    let mut c = centroid;
    if q.len() > 1 {
        for _ in 0..30 {
            let (v, dv) = eval_with_derivative(q, c);
            if dv.abs() == 0.0 {
                break;
            }
            let step = v / dv;
            c -= step;
            if step.abs() <= 4.0 * EPS * (1.0 + c.abs()) {
                break;
            }
        }
    }
    if !c.re.is_finite() || (c - centroid).abs() > 2.0 * spread + 1e-12 * (1.0 + c.abs()) {
        return None;
    }
    for d in derivs.iter().take(m - 1) {
        let scale = residual_scale(d, c).max(f64::MIN_POSITIVE);
        if eval(d, c).abs() > MULTIPLE_ROOT_TOL * scale {
            return None;
        }
    }
    Some(c)
}

fn resolve(
    p: &[Complex64],
    roots: &[Complex64],
    members: &[usize],
    radius: f64,
    cluster_radius: f64,
    out: &mut Vec<(Complex64, usize)>,
) {
    if members.len() == 1 {
        out.push((newton_polish(p, roots[members[0]], 3), 1));
        return;
    }
    let cluster: Vec<Complex64> = members.iter().map(|&i| roots[i]).collect();
    if let Some(c) = validate_multiple(p, &cluster) {
        out.push((c, members.len()));
        return;
    }
    if radius <= cluster_radius {
        let c = cluster.iter().sum::<Complex64>() / cluster.len() as f64;
        out.push((c, members.len()));
        return;
    }
    let next = (radius / 10.0).max(cluster_radius);
    for g in link(roots, members, next) {
        resolve(p, roots, &g, next, cluster_radius, out);
    }
}

/// Roots with multiplicities. Approximations closer than `cluster_radius`
/// (relative) are always merged; wider clusters are merged only if their
/// refined centroid is a validated multiple root.
pub fn roots_with_multiplicity(
    p: &[Complex64],
    cluster_radius: f64,
    max_iters: usize,
) -> Result<Vec<(Complex64, usize)>> {
    let roots = aberth(p, max_iters)?;
    Ok(cluster_roots(p, &roots, cluster_radius))
}

pub fn cluster_roots(p: &[Complex64], roots: &[Complex64], cluster_radius: f64) -> Vec<(Complex64, usize)> {
    let all: Vec<usize> = (0..roots.len()).collect();
    let mut out = Vec::with_capacity(roots.len());
    for g in link(roots, &all, LOOSE_RADIUS.max(cluster_radius)) {
        resolve(p, roots, &g, LOOSE_RADIUS.max(cluster_radius), cluster_radius, &mut out);
    }
    out
}
