//! Holomorphic endomorphisms of P^1 and P^2 given by homogeneous lifts.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fiber::{binary_form_roots, SolverSettings};
use crate::forms::{monomial_index, Form};
use crate::linalg::{determinant, orthonormal_complement, CMatrix};
use crate::projective::{canonicalize, vec_norm, ProjectivePoint, ZERO_NORM};

pub const MAX_DEGREE: usize = 6;
/// Names accepted by [`HomogeneousMap::preset`].
pub const PRESETS: [&str; 5] = ["z2", "z3", "basilica", "cheb", "torus2"];

/// A map `f: P^k -> P^k` of algebraic degree `d >= 2`, lifted by `k + 1` forms.
#[derive(Clone, Debug)]
pub struct HomogeneousMap {
    dim: usize,
    degree: usize,
    components: Vec<Form>,
    /// `partials[i][j]` is dF_i / dx_j.
    partials: Vec<Vec<Form>>,
    label: String,
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Sylvester resultant of two binary forms of equal degree (coefficients leading-first).
pub fn binary_resultant(p: &[Complex64], q: &[Complex64]) -> Complex64 {
    let d = p.len() - 1;
    debug_assert_eq!(q.len(), d + 1);
    let n = 2 * d;
    let mut m = CMatrix::zeros(n, n);
    for row in 0..d {
        for (j, a) in q.iter().enumerate() {
            m[(row, row + j)] = *a;
        }
        for (j, a) in p.iter().enumerate() {
            m[(d + row, row + j)] = *a;
        }
    }
    determinant(m)
}

impl HomogeneousMap {
    /// Validates and builds a map. For `dim == 2` the caller must vouch for
    /// nondegeneracy with `certified`; a probabilistic check is run as well.
    pub fn new(dim: usize, degree: usize, components: Vec<Form>, label: &str, certified: bool) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidMap(format!("dimension {dim} not in {{1, 2}}")));
        }
        if degree < 2 {
            return Err(Error::InvalidMap(format!("degree {degree} < 2")));
        }
        if degree > MAX_DEGREE {
            return Err(Error::InvalidMap(format!("degree {degree} > {MAX_DEGREE}")));
        }
        if components.len() != dim + 1 {
            return Err(Error::InvalidMap(format!(
                "expected {} components, got {}",
                dim + 1,
                components.len()
            )));
        }
        if components.iter().any(|f| f.nvars() != dim + 1 || f.degree() != degree) {
            return Err(Error::InvalidMap("component of wrong shape".into()));
        }
        if components.iter().any(|f| f.max_coeff() == 0.0) {
            return Err(Error::InvalidMap("zero component".into()));
        }
        let partials = components
            .iter()
            .map(|f| (0..=dim).map(|j| f.partial(j)).collect())
            .collect();
        let map = HomogeneousMap {
            dim,
            degree,
            components,
            partials,
            label: label.to_string(),
        };
        if dim == 1 {
            let p = map.components[0].scale(c(1.0 / map.components[0].max_coeff(), 0.0));
            let q = map.components[1].scale(c(1.0 / map.components[1].max_coeff(), 0.0));
            let res = binary_resultant(p.coeffs(), q.coeffs()).norm();
            if res <= 1e-10 {
                return Err(Error::InvalidMap(format!(
                    "components share a zero (|resultant| = {res:e})"
                )));
            }
        } else {
            if !certified {
                return Err(Error::InvalidMap("maps on P^2 need a nondegeneracy certificate".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(0x5e_ed0f_d1ce);
            for _ in 0..100 {
                let x = ProjectivePoint::random(2, &mut rng);
                if vec_norm(&map.lift(x.coords())) <= 1e-10 {
                    return Err(Error::InvalidMap("lift vanishes at a sampled point".into()));
                }
            }
        }
        Ok(map)
    }

    /// Builds a map from `[re, im]` coefficient tables.
    pub fn from_tables(
        dim: usize,
        degree: usize,
        tables: &[Vec<[f64; 2]>],
        label: &str,
        certified: bool,
    ) -> Result<Self> {
        let mut comps = Vec::with_capacity(tables.len());
        for (i, t) in tables.iter().enumerate() {
            let coeffs = t.iter().map(|p| c(p[0], p[1])).collect();
            let f = Form::new(dim + 1, degree, coeffs).ok_or_else(|| {
                Error::InvalidMap(format!(
                    "component {i} has {} coefficients, expected {}",
                    t.len(),
                    crate::forms::table_len(dim + 1, degree)
                ))
            })?;
            comps.push(f);
        }
        Self::new(dim, degree, comps, label, certified)
    }

    pub fn preset(name: &str) -> Result<Self> {
        let one = c(1.0, 0.0);
        let mono2 = |e: [usize; 3], a: Complex64| Form::monomial(2, e, a);
        match name {
            "z2" => Self::new(1, 2, vec![mono2([2, 0, 0], one), mono2([0, 2, 0], one)], name, true),
            "z3" => Self::new(1, 3, vec![mono2([3, 0, 0], one), mono2([0, 3, 0], one)], name, true),
            "basilica" => Self::new(
                1,
                2,
                vec![
                    mono2([2, 0, 0], one).add(&mono2([0, 2, 0], c(-1.0, 0.0))),
                    mono2([0, 2, 0], one),
                ],
                name,
                true,
            ),
            "cheb" => Self::new(
                1,
                2,
                vec![
                    mono2([2, 0, 0], one).add(&mono2([0, 2, 0], c(-2.0, 0.0))),
                    mono2([0, 2, 0], one),
                ],
                name,
                true,
            ),
            "torus2" => Self::new(
                2,
                2,
                vec![
                    Form::monomial(3, [2, 0, 0], one),
                    Form::monomial(3, [0, 2, 0], one),
                    Form::monomial(3, [0, 0, 2], one),
                ],
                name,
                true,
            ),
            other => Err(Error::InvalidMap(format!("unknown preset `{other}`"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn components(&self) -> &[Form] {
        &self.components
    }

    /// Topological degree d^k.
    pub fn topological_degree(&self) -> usize {
        self.degree.pow(self.dim as u32)
    }

    /// Coefficient tables as `[re, im]` pairs (the JSON layout).
    pub fn tables(&self) -> Vec<Vec<[f64; 2]>> {
        self.components
            .iter()
            .map(|f| f.coeffs().iter().map(|a| [a.re, a.im]).collect())
            .collect()
    }

    /// The lift F evaluated on a raw vector.
    pub fn lift(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.components.iter().map(|f| f.eval(v)).collect()
    }

    pub fn evaluate(&self, x: &ProjectivePoint) -> Result<ProjectivePoint> {
        let img = self.lift(x.coords());
        if vec_norm(&img) < ZERO_NORM {
            return Err(Error::DegenerateImage);
        }
        canonicalize(&img).map_err(|_| Error::DegenerateImage)
    }

    /// Jacobian matrix of the lift at `v`.
    pub fn jacobian(&self, v: &[Complex64]) -> CMatrix {
        let n = self.dim + 1;
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = self.partials[i][j].eval(v);
            }
        }
        m
    }

    /// `d^-n log ||F^n(v)||_inf`, renormalizing at every step.
    ///
    /// With `u_0 = v / ||v||` and `u_{j+1} = F(u_j) / ||F(u_j)||`, the value is
    /// `log ||v|| + sum_j d^-(j+1) log ||F(u_j)||`.
    pub fn lift_norm_log(&self, v: &[Complex64], n: usize) -> Result<f64> {
        let sup = |w: &[Complex64]| w.iter().map(|a| a.norm()).fold(0.0, f64::max);
        let n0 = sup(v);
        if !(n0 >= ZERO_NORM) {
            return Err(Error::ZeroVector);
        }
        let mut u: Vec<Complex64> = v.iter().map(|a| a / n0).collect();
        let mut acc = n0.ln();
        let mut weight = 1.0;
        let d = self.degree as f64;
        for _ in 0..n {
            let img = self.lift(&u);
            let s = sup(&img);
            if !(s >= ZERO_NORM) {
                return Err(Error::DegenerateImage);
            }
            weight /= d;
            acc += weight * s.ln();
            u = img.into_iter().map(|a| a / s).collect();
        }
        Ok(acc)
    }

    /// Operator norm of the differential of `f` at `x` for the Fubini–Study metric.
    pub fn spherical_derivative(&self, x: &ProjectivePoint) -> f64 {
        let fx = self.lift(x.coords());
        let nf = vec_norm(&fx);
        let fhat: Vec<Complex64> = fx.iter().map(|a| a / nf).collect();
        let jac = self.jacobian(x.coords());
        let cols: Vec<Vec<Complex64>> = orthonormal_complement(x.coords())
            .iter()
            .map(|v| {
                let w = jac.apply(v);
                let proj: Complex64 = w.iter().zip(&fhat).map(|(a, b)| a * b.conj()).sum();
                w.iter().zip(&fhat).map(|(a, b)| (a - proj * b) / nf).collect()
            })
            .collect();
        if cols.len() == 1 {
            return vec_norm(&cols[0]);
        }
        let dot = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };
        let g00 = dot(&cols[0], &cols[0]).re;
        let g11 = dot(&cols[1], &cols[1]).re;
        let g01 = dot(&cols[0], &cols[1]).norm();
        let mid = 0.5 * (g00 + g11);
        let rad = (0.25 * (g00 - g11).powi(2) + g01 * g01).sqrt();
        (mid + rad).max(0.0).sqrt()
    }

    /// Estimate of the Lipschitz constant of `f` for the Fubini–Study distance:
    /// the sup of the spherical derivative over random samples, refined by a
    /// local hill climb from the best candidates.
    pub fn spherical_derivative_sup<R: Rng + ?Sized>(&self, samples: usize, rng: &mut R) -> Result<f64> {
        if samples < 1000 {
            return Err(Error::InvalidArgument(format!("samples = {samples} < 1000")));
        }
        let mut scored: Vec<(f64, ProjectivePoint)> = (0..samples)
            .map(|_| {
                let x = ProjectivePoint::random(self.dim, rng);
                (self.spherical_derivative(&x), x)
            })
            .collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut best = scored[0].0;
        for (mut val, mut x) in scored.into_iter().take(8) {
            let mut step = 0.05;
            while step > 1e-10 {
                let v = x.random_tangent(rng);
                let cand = x.displaced(&v, step);
                let cv = self.spherical_derivative(&cand);
                if cv > val {
                    val = cv;
                    x = cand;
                } else {
                    step *= 0.8;
                }
            }
            best = best.max(val);
        }
        Ok(best.max(1.0))
    }

    /// Wronskian `P_z Q_w - P_w Q_z` of a map on P^1.
    pub fn wronskian(&self) -> Result<Form> {
        if self.dim != 1 {
            return Err(Error::Unsupported("critical points are only computed on P^1".into()));
        }
        let pz = &self.partials[0][0];
        let pw = &self.partials[0][1];
        let qz = &self.partials[1][0];
        let qw = &self.partials[1][1];
        Ok(pz.mul(qw).add(&pw.mul(qz).scale(c(-1.0, 0.0))))
    }

    /// The 2d - 2 critical points of a map on P^1, with multiplicities.
    pub fn critical_points_k1<R: Rng + ?Sized>(
        &self,
        settings: &SolverSettings,
        rng: &mut R,
    ) -> Result<Vec<(ProjectivePoint, usize)>> {
        let w = self.wronskian()?;
        let roots = binary_form_roots(&w, settings, rng)?;
        let scale = w.max_coeff();
        for (p, _) in &roots {
            let r = w.eval(p.coords()).norm() / scale;
            if r > 1e-10 {
                return Err(Error::solver(format!("critical point residual {r:e}")));
            }
        }
        Ok(roots)
    }

    /// Coefficient of the monomial with exponents `e` in component `i`.
    pub fn coefficient(&self, i: usize, e: [usize; 3]) -> Complex64 {
        self.components[i].coeffs()[monomial_index(self.dim + 1, self.degree, e)]
    }
}

/// The iterate `f^n`, evaluated by repeated application.
#[derive(Clone, Debug)]
pub struct MapIterate {
    pub base: Arc<HomogeneousMap>,
    pub n: usize,
}

impl MapIterate {
    pub fn new(base: Arc<HomogeneousMap>, n: usize) -> Self {
        MapIterate { base, n }
    }

    /// Algebraic degree d^n of the iterate (not expanded).
    pub fn degree(&self) -> u128 {
        (self.base.degree() as u128).pow(self.n as u32)
    }

    pub fn evaluate(&self, x: &ProjectivePoint) -> Result<ProjectivePoint> {
        let mut y = *x;
        for _ in 0..self.n {
            y = self.base.evaluate(&y)?;
        }
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(z: f64) -> ProjectivePoint {
        ProjectivePoint::affine1(c(z, 0.0))
    }

    #[test]
    fn evaluate_examples() {
        let z2 = HomogeneousMap::preset("z2").unwrap();
        assert!(z2.evaluate(&pt(2.0)).unwrap().distance(&pt(4.0)) < 1e-15);
        let b = HomogeneousMap::preset("basilica").unwrap();
        assert!(b.evaluate(&pt(1.0)).unwrap().distance(&pt(0.0)) < 1e-15);
        let t = HomogeneousMap::preset("torus2").unwrap();
        let x = ProjectivePoint::from_pairs(&[[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]]).unwrap();
        let y = ProjectivePoint::from_pairs(&[[1.0, 0.0], [4.0, 0.0], [9.0, 0.0]]).unwrap();
        assert!(t.evaluate(&x).unwrap().distance(&y) < 1e-15);
    }

    #[test]
    fn degree_one_and_degenerate_maps_rejected() {
        let lin = Form::monomial(2, [1, 0, 0], c(1.0, 0.0));
        let lin2 = Form::monomial(2, [0, 1, 0], c(1.0, 0.0));
        assert!(matches!(
            HomogeneousMap::new(1, 1, vec![lin, lin2], "id", true),
            Err(Error::InvalidMap(_))
        ));
        // z^2 and zw share the zero [0:1].
        let p = Form::monomial(2, [2, 0, 0], c(1.0, 0.0));
        let q = Form::monomial(2, [1, 1, 0], c(1.0, 0.0));
        assert!(matches!(
            HomogeneousMap::new(1, 2, vec![p, q], "bad", true),
            Err(Error::InvalidMap(_))
        ));
        // P^2 maps need a certificate.
        let t = |e| Form::monomial(3, e, c(1.0, 0.0));
        assert!(HomogeneousMap::new(2, 2, vec![t([2, 0, 0]), t([0, 2, 0]), t([0, 0, 2])], "t", false).is_err());
    }

    #[test]
    fn lift_norm_log_examples() {
        let z2 = HomogeneousMap::preset("z2").unwrap();
        for n in [1, 5, 30, 60] {
            let g = z2.lift_norm_log(&[c(2.0, 0.0), c(1.0, 0.0)], n).unwrap();
            assert!((g - 2f64.ln()).abs() < 1e-14);
            assert_eq!(z2.lift_norm_log(&[c(1.0, 0.0), c(1.0, 0.0)], n).unwrap(), 0.0);
        }
    }

    #[test]
    fn lift_norm_log_matches_escape_rate_oracle() {
        // Oracle: in the chart, log|z_{n+1}| = 2 log|z_n| + log|1 - u_n^2| with u = 1/z,
        // u_{n+1} = u_n^2 / (1 - u_n^2); the Green function is the limit of 2^-n log|z_n|.
        let mut u = c(0.1, 0.0);
        let mut logz = 10f64.ln();
        let mut g = logz;
        for n in 0..60 {
            let u2 = u * u;
            logz = 2.0 * logz + (c(1.0, 0.0) - u2).norm().ln();
            u = u2 / (c(1.0, 0.0) - u2);
            g = logz / 2f64.powi(n + 1);
        }
        let b = HomogeneousMap::preset("basilica").unwrap();
        let val = b.lift_norm_log(&[c(10.0, 0.0), c(1.0, 0.0)], 30).unwrap();
        assert!((val - g).abs() < 1e-6, "{val} vs {g}");
    }

    #[test]
    fn lift_norm_log_converges_geometrically() {
        let b = HomogeneousMap::preset("cheb").unwrap();
        let v = [c(0.7, 1.3), c(1.0, 0.0)];
        let vals: Vec<f64> = (1..=25).map(|n| b.lift_norm_log(&v, n).unwrap()).collect();
        // |acc_n - acc_{n+1}| <= C 2^-n with C fitted from the first increment.
        let cst = (vals[1] - vals[0]).abs() * 4.0 + 1e-12;
        for n in 1..24 {
            assert!((vals[n + 1] - vals[n]).abs() <= cst * 2f64.powi(-(n as i32)) * 4.0);
        }
    }

    #[test]
    fn spherical_derivative_sup_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let z2 = HomogeneousMap::preset("z2").unwrap();
        let a2 = z2.spherical_derivative_sup(2000, &mut rng).unwrap();
        assert!((a2 - 2.0).abs() < 0.01, "{a2}");
        let z3 = HomogeneousMap::preset("z3").unwrap();
        let a3 = z3.spherical_derivative_sup(2000, &mut rng).unwrap();
        assert!((a3 - 3.0).abs() < 0.01, "{a3}");
        // Dense-grid oracle for z^2: 2|z|(1+|z|^2)/(1+|z|^4).
        let grid_max = (1..20000)
            .map(|i| {
                let r = i as f64 * 1e-3;
                2.0 * r * (1.0 + r * r) / (1.0 + r.powi(4))
            })
            .fold(0.0, f64::max);
        assert!((a2 - grid_max).abs() < 1e-3);
        for name in PRESETS {
            let f = HomogeneousMap::preset(name).unwrap();
            assert!(f.spherical_derivative_sup(1000, &mut rng).unwrap() >= 1.0);
        }
    }

    #[test]
    fn critical_point_examples() {
        let s = SolverSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let z2 = HomogeneousMap::preset("z2").unwrap();
        let cp = z2.critical_points_k1(&s, &mut rng).unwrap();
        assert_eq!(cp.len(), 2);
        assert!(cp.iter().all(|(_, m)| *m == 1));
        assert!(cp.iter().any(|(p, _)| p.distance(&pt(0.0)) < 1e-10));
        assert!(cp
            .iter()
            .any(|(p, _)| p.distance(&ProjectivePoint::infinity1()) < 1e-10));
        let b = HomogeneousMap::preset("basilica").unwrap();
        let cp = b.critical_points_k1(&s, &mut rng).unwrap();
        assert!(cp.iter().any(|(p, _)| p.distance(&pt(0.0)) < 1e-10));
        assert!(cp
            .iter()
            .any(|(p, _)| p.distance(&ProjectivePoint::infinity1()) < 1e-10));
        let z3 = HomogeneousMap::preset("z3").unwrap();
        let cp = z3.critical_points_k1(&s, &mut rng).unwrap();
        assert_eq!(cp.len(), 2);
        assert!(cp.iter().all(|(_, m)| *m == 2));
        assert_eq!(cp.iter().map(|x| x.1).sum::<usize>(), 4);
    }

    #[test]
    fn iterate_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for name in PRESETS {
            let f = Arc::new(HomogeneousMap::preset(name).unwrap());
            let (m, n) = (2, 3);
            let fm = MapIterate::new(f.clone(), m);
            let fn_ = MapIterate::new(f.clone(), n);
            let fmn = MapIterate::new(f.clone(), m + n);
            assert_eq!(fmn.degree(), (f.degree() as u128).pow(5));
            for _ in 0..1000 {
                let x = ProjectivePoint::random(f.dim(), &mut rng);
                let a = fmn.evaluate(&x).unwrap();
                let b = fm.evaluate(&fn_.evaluate(&x).unwrap()).unwrap();
                assert!(a.distance(&b) < 1e-9);
            }
        }
    }
}
