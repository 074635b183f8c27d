//! Observables on P^k with Hölder data, and their regularization by
//! averaging over automorphisms near the identity.

use std::fmt;
use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{orthonormal_complement, CMatrix};
use crate::projective::{canonicalize, ProjectivePoint};
use crate::rng::task_rng;

/// Safety factor applied to sampled sup-norms of gradients and Hölder quotients.
pub const SAFETY: f64 = 1.5;
const CERTIFY_POINTS: usize = 4000;
const CERTIFY_SEED: u64 = 0xc0ffee;
const FD_STEP: f64 = 1e-5;

pub type EvalFn = Arc<dyn Fn(&ProjectivePoint) -> f64 + Send + Sync>;

/// A real observable `phi` on P^k with its regularity data.
#[derive(Clone)]
pub struct TestFunction {
    eval: EvalFn,
    dim: usize,
    /// Sup of the gradient norm (Fubini–Study), absent for rough members.
    pub grad_sup: Option<f64>,
    pub holder_alpha: f64,
    /// Bound on `max(sup |phi|, Hölder seminorm at exponent min(alpha, 1))`.
    pub holder_norm: f64,
    pub label: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("grad_sup", &self.grad_sup)
            .field("holder_alpha", &self.holder_alpha)
            .field("holder_norm", &self.holder_norm)
            .finish()
    }
}

/// Directional derivatives of `f` at `x` along an orthonormal real basis of the tangent space.
fn gradient_norm(f: &dyn Fn(&ProjectivePoint) -> f64, x: &ProjectivePoint, h: f64) -> f64 {
    let mut sq = 0.0;
    for v in orthonormal_complement(x.coords()) {
        for rot in [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)] {
            let dir: Vec<Complex64> = v.iter().map(|a| a * rot).collect();
            let plus = f(&x.displaced(&dir, h));
            let minus = f(&x.displaced(&dir, -h));
            sq += ((plus - minus) / (2.0 * h)).powi(2);
        }
    }
    sq.sqrt()
}

/// Sampled regularity data: (sup, gradient sup or `None`, Hölder seminorm).
fn measure_regularity(
    dim: usize,
    f: &dyn Fn(&ProjectivePoint) -> f64,
    alpha: f64,
    fd_step: f64,
    points: usize,
) -> (f64, Option<f64>, f64) {
    let mut rng = task_rng(CERTIFY_SEED, dim as u64);
    let mut sup: f64 = 0.0;
    let mut grad: f64 = 0.0;
    let mut semi: f64 = 0.0;
    let exponent = alpha.min(1.0);
    for _ in 0..points {
        let x = ProjectivePoint::random(dim, &mut rng);
        let fx = f(&x);
        sup = sup.max(fx.abs());
        if alpha >= 1.0 {
            grad = grad.max(gradient_norm(f, &x, fd_step));
        } else {
            let y = ProjectivePoint::random(dim, &mut rng);
            let d = x.distance(&y);
            if d > 0.0 {
                semi = semi.max((fx - f(&y)).abs() / d.powf(exponent));
            }
            let v = x.random_tangent(&mut rng);
            let h = 10f64.powf(-rng.random_range(1.0..6.0));
            let y = x.displaced(&v, h);
            let d = x.distance(&y);
            if d > 0.0 {
                semi = semi.max((fx - f(&y)).abs() / d.powf(exponent));
            }
        }
    }
    if alpha >= 1.0 {
        (sup, Some(grad), grad)
    } else {
        (sup, None, semi)
    }
}

impl TestFunction {
    /// Builds an observable and certifies its data by dense sampling times [`SAFETY`].
    /// Members with `alpha >= 1` get a gradient bound.
    pub fn certified(label: &str, dim: usize, alpha: f64, f: EvalFn) -> Self {
        let (sup, grad, semi) = measure_regularity(dim, f.as_ref(), alpha, FD_STEP, CERTIFY_POINTS);
        TestFunction {
            eval: f,
            dim,
            grad_sup: grad.map(|g| SAFETY * g),
            holder_alpha: alpha,
            holder_norm: SAFETY * sup.max(semi),
            label: label.to_string(),
        }
    }

    /// An observable with caller-supplied data (no certification).
    pub fn with_data(label: &str, dim: usize, grad_sup: Option<f64>, alpha: f64, holder_norm: f64, f: EvalFn) -> Self {
        TestFunction {
            eval: f,
            dim,
            grad_sup,
            holder_alpha: alpha,
            holder_norm,
            label: label.to_string(),
        }
    }

    pub fn constant(dim: usize, c: f64) -> Self {
        Self::with_data(
            &format!("const({c})"),
            dim,
            Some(0.0),
            2.0,
            c.abs(),
            Arc::new(move |_| c),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn eval(&self, x: &ProjectivePoint) -> f64 {
        (self.eval)(x)
    }

    pub fn eval_fn(&self) -> EvalFn {
        self.eval.clone()
    }

    /// `a * self + b * other`, with data bounded by the triangle inequality.
    pub fn linear_combination(&self, a: f64, other: &TestFunction, b: f64) -> TestFunction {
        let (f, g) = (self.eval.clone(), other.eval.clone());
        let grad = match (self.grad_sup, other.grad_sup) {
            (Some(x), Some(y)) => Some(a.abs() * x + b.abs() * y),
            _ => None,
        };
        TestFunction {
            eval: Arc::new(move |x| a * f(x) + b * g(x)),
            dim: self.dim,
            grad_sup: grad,
            holder_alpha: self.holder_alpha.min(other.holder_alpha),
            holder_norm: a.abs() * self.holder_norm + b.abs() * other.holder_norm,
            label: format!("{a}*{}+{b}*{}", self.label, other.label),
        }
    }

    pub fn scaled(&self, a: f64) -> TestFunction {
        let f = self.eval.clone();
        TestFunction {
            eval: Arc::new(move |x| a * f(x)),
            dim: self.dim,
            grad_sup: self.grad_sup.map(|g| g * a.abs()),
            holder_alpha: self.holder_alpha,
            holder_norm: self.holder_norm * a.abs(),
            label: format!("{a}*{}", self.label),
        }
    }

    /// `self - c`.
    pub fn shifted(&self, c: f64) -> TestFunction {
        let f = self.eval.clone();
        TestFunction {
            eval: Arc::new(move |x| f(x) - c),
            dim: self.dim,
            grad_sup: self.grad_sup,
            holder_alpha: self.holder_alpha,
            holder_norm: self.holder_norm + c.abs(),
            label: format!("{}-({c})", self.label),
        }
    }
}

fn zw(x: &ProjectivePoint, i: usize, j: usize) -> Complex64 {
    let c = x.coords();
    c[i] * c[j].conj()
}

fn build_suite(k: usize) -> Vec<TestFunction> {
    type Raw = fn(&ProjectivePoint) -> f64;
    let members: Vec<(&str, f64, Raw)> = if k == 1 {
        vec![
            ("X", 2.0, |x| 2.0 * zw(x, 0, 1).re),
            ("Y", 2.0, |x| 2.0 * zw(x, 0, 1).im),
            ("Z", 2.0, |x| x.coord(1).norm_sqr() - x.coord(0).norm_sqr()),
            ("XY", 2.0, |x| 4.0 * zw(x, 0, 1).re * zw(x, 0, 1).im),
            ("XZ", 2.0, |x| {
                2.0 * zw(x, 0, 1).re * (x.coord(1).norm_sqr() - x.coord(0).norm_sqr())
            }),
            ("rootX", 0.5, |x| (2.0 * zw(x, 0, 1).re).abs().sqrt()),
        ]
    } else {
        vec![
            ("re_zw", 2.0, |x| zw(x, 0, 1).re),
            ("im_zw", 2.0, |x| zw(x, 0, 1).im),
            ("re_zt", 2.0, |x| zw(x, 0, 2).re),
            ("im_zt", 2.0, |x| zw(x, 0, 2).im),
            ("re_wt", 2.0, |x| zw(x, 1, 2).re),
            ("im_wt", 2.0, |x| zw(x, 1, 2).im),
            ("root_re_zw", 0.5, |x| (2.0 * zw(x, 0, 1).re).abs().sqrt()),
        ]
    };
    members
        .into_iter()
        .map(|(label, alpha, f)| TestFunction::certified(label, k, alpha, Arc::new(f)))
        .collect()
}

/// The fixed witness family of observables on P^k (coordinates are unit representatives).
pub fn builtin_suite(k: usize) -> Result<Vec<TestFunction>> {
    static K1: OnceLock<Vec<TestFunction>> = OnceLock::new();
    static K2: OnceLock<Vec<TestFunction>> = OnceLock::new();
    match k {
        1 => Ok(K1.get_or_init(|| build_suite(1)).clone()),
        2 => Ok(K2.get_or_init(|| build_suite(2)).clone()),
        _ => Err(Error::InvalidArgument(format!("no builtin suite for k = {k}"))),
    }
}

/// A builtin observable by label.
pub fn builtin(k: usize, label: &str) -> Result<TestFunction> {
    builtin_suite(k)?
        .into_iter()
        .find(|f| f.label == label)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown observable `{label}` on P^{k}")))
}

/// Frozen draws of automorphisms `tau_u(x) = [(I + U) x]` near the identity.
#[derive(Clone, Debug)]
pub struct RegularizationScheme {
    pub theta: f64,
    pub num_group_samples: usize,
    pub dim: usize,
    perturbations: Arc<Vec<CMatrix>>,
    /// Measured `sup dist(tau_u(x), x) / theta`.
    pub displacement_factor_eta: f64,
    /// Bound on the Lipschitz constant of every `tau_u`.
    pub lipschitz_factor: f64,
}

/// One draw from the density proportional to `exp(-1 / (1 - s^2))` on (-1, 1).
fn bump_sample<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let s: f64 = rng.random_range(-1.0..1.0);
        let accept = (1.0 - 1.0 / (1.0 - s * s)).exp();
        if rng.random::<f64>() < accept {
            return s;
        }
    }
}

impl RegularizationScheme {
    pub fn new(dim: usize, theta: f64, num_group_samples: usize, seed: u64) -> Result<Self> {
        if !(theta > 0.0 && theta < 1.0) {
            return Err(Error::InvalidArgument(format!("theta = {theta} not in (0, 1)")));
        }
        if num_group_samples < 100 {
            return Err(Error::InvalidArgument(format!(
                "num_group_samples = {num_group_samples} < 100"
            )));
        }
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidArgument(format!("dimension {dim} not in {{1, 2}}")));
        }
        let n = dim + 1;
        let mut rng: ChaCha8Rng = task_rng(seed, 0x7e9);
        let scale = theta / n as f64;
        let perturbations: Vec<CMatrix> = (0..num_group_samples)
            .map(|_| {
                let mut u = CMatrix::zeros(n, n);
                for a in u.data.iter_mut() {
                    *a = Complex64::new(bump_sample(&mut rng), bump_sample(&mut rng)) * scale;
                }
                u
            })
            .collect();
        let mut lip: f64 = 1.0;
        for u in &perturbations {
            let nu = u.operator_norm();
            lip = lip.max(((1.0 + nu) / (1.0 - nu)).powi(2));
        }
        let mut scheme = RegularizationScheme {
            theta,
            num_group_samples,
            dim,
            perturbations: Arc::new(perturbations),
            displacement_factor_eta: 0.0,
            lipschitz_factor: lip,
        };
        let mut probe_rng = task_rng(seed, 0xe7a);
        let mut eta: f64 = 0.0;
        for _ in 0..1000 {
            let x = ProjectivePoint::random(dim, &mut probe_rng);
            for u in scheme.perturbations.iter() {
                eta = eta.max(apply_perturbation(u, &x).distance(&x) / theta);
            }
        }
        scheme.displacement_factor_eta = eta;
        Ok(scheme)
    }

    /// The automorphism `tau_u` for draw `j`.
    pub fn tau(&self, j: usize, x: &ProjectivePoint) -> ProjectivePoint {
        apply_perturbation(&self.perturbations[j], x)
    }

    /// Mean of `g(tau_u x)` over the frozen draws (constants are reproduced exactly).
    pub fn average(&self, g: &dyn Fn(&ProjectivePoint) -> f64, x: &ProjectivePoint) -> f64 {
        let mut m = 0.0;
        for (j, u) in self.perturbations.iter().enumerate() {
            let v = g(&apply_perturbation(u, x));
            m += (v - m) / (j + 1) as f64;
        }
        m
    }
}

fn apply_perturbation(u: &CMatrix, x: &ProjectivePoint) -> ProjectivePoint {
    let v = x.coords();
    let uv = u.apply(v);
    let raw: Vec<Complex64> = v.iter().zip(&uv).map(|(a, b)| a + b).collect();
    canonicalize(&raw).expect("I + U is invertible for small U")
}

/// `phi_theta(x) = mean_u phi(tau_u x)` over the scheme's frozen draws.
pub fn regularize(phi: &TestFunction, scheme: &RegularizationScheme) -> Result<TestFunction> {
    if phi.dim != scheme.dim {
        return Err(Error::DimensionMismatch {
            expected: scheme.dim,
            got: phi.dim,
        });
    }
    let f = phi.eval.clone();
    let s = scheme.clone();
    let eval: EvalFn = Arc::new(move |x| s.average(f.as_ref(), x));
    let (_, grad, _) = measure_regularity(scheme.dim, eval.as_ref(), 1.0, scheme.theta / 10.0, 500);
    Ok(TestFunction {
        eval,
        dim: phi.dim,
        grad_sup: grad.map(|g| SAFETY * g),
        holder_alpha: phi.holder_alpha,
        holder_norm: phi.holder_norm * scheme.lipschitz_factor.powf(phi.holder_alpha.min(1.0)),
        label: format!("{}@theta={}", phi.label, scheme.theta),
    })
}

/// Outcome of the sup-norm versus log-gradient comparison.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct SupLogCheck {
    pub sup_norm: f64,
    pub grad_sup: f64,
    pub a0: f64,
    pub bound: f64,
    pub violation: bool,
}

fn log_plus(x: f64) -> f64 {
    x.max(1.0).ln()
}

/// Sampled sup-norm of `phi`.
pub fn sampled_sup(phi: &TestFunction, points: usize) -> f64 {
    let mut rng = task_rng(CERTIFY_SEED, 0x5a9);
    (0..points)
        .map(|_| phi.eval(&ProjectivePoint::random(phi.dim, &mut rng)).abs())
        .fold(0.0, f64::max)
}

/// `A_0 = max sup / (1 + log+ grad_sup)` over the builtin C^1 members.
pub fn fitted_a0(k: usize) -> Result<f64> {
    static A0: [OnceLock<f64>; 2] = [OnceLock::new(), OnceLock::new()];
    let suite = builtin_suite(k)?;
    Ok(*A0[k - 1].get_or_init(|| {
        suite
            .iter()
            .filter_map(|f| f.grad_sup.map(|g| sampled_sup(f, CERTIFY_POINTS) / (1.0 + log_plus(g))))
            .fold(0.0, f64::max)
    }))
}

/// Checks `sup |phi| <= A_0 (1 + log+ grad_sup)` for a sup-normalized C^1 observable.
pub fn sup_vs_log_gradient_check(phi: &TestFunction) -> Result<SupLogCheck> {
    let grad = phi.grad_sup.ok_or_else(|| Error::NotC1(phi.label.clone()))?;
    let sup = sampled_sup(phi, CERTIFY_POINTS);
    if sup > 1.0 + 1e-9 {
        return Err(Error::Unnormalized {
            label: phi.label.clone(),
            sup,
        });
    }
    let a0 = fitted_a0(phi.dim)?;
    let bound = a0 * (1.0 + log_plus(grad));
    Ok(SupLogCheck {
        sup_norm: sup,
        grad_sup: grad,
        a0,
        bound,
        violation: sup > bound * 1.01,
    })
}

/// `sup |phi| + sup |grad phi| + sup |Hessian phi|` by sampled finite differences.
pub fn c2_proxy_norm(phi: &TestFunction, points: usize) -> f64 {
    let mut rng = task_rng(CERTIFY_SEED, 0xc2);
    let h = 1e-4;
    let (mut sup, mut grad, mut hess): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..points {
        let x = ProjectivePoint::random(phi.dim, &mut rng);
        let fx = phi.eval(&x);
        sup = sup.max(fx.abs());
        grad = grad.max(gradient_norm(&|y| phi.eval(y), &x, h));
        let v = x.random_tangent(&mut rng);
        let second = (phi.eval(&x.displaced(&v, h)) - 2.0 * fx + phi.eval(&x.displaced(&v, -h))) / (h * h);
        hess = hess.max(second.abs());
    }
    sup + grad + hess
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn sphere_coordinate_examples() {
        let z = builtin(1, "Z").unwrap();
        let x = builtin(1, "X").unwrap();
        let one = ProjectivePoint::affine1(c(1.0, 0.0));
        assert!(z.eval(&one).abs() < 1e-15);
        assert!((x.eval(&one) - 1.0).abs() < 1e-15);
        assert!((z.eval(&ProjectivePoint::affine1(c(0.0, 0.0))) - 1.0).abs() < 1e-15);
        assert!((z.eval(&ProjectivePoint::infinity1()) + 1.0).abs() < 1e-15);
        // Chart formula Z = (1 - |z|^2) / (1 + |z|^2).
        assert!((z.eval(&ProjectivePoint::affine1(c(2.0, 0.0))) + 0.6).abs() < 1e-15);
    }

    #[test]
    fn certified_data_holds_on_fresh_samples() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for k in [1, 2] {
            for f in builtin_suite(k).unwrap() {
                let e = f.holder_alpha.min(1.0);
                let lip = f.grad_sup.unwrap_or(f.holder_norm);
                for _ in 0..10_000 {
                    let x = ProjectivePoint::random(k, &mut rng);
                    let y = ProjectivePoint::random(k, &mut rng);
                    assert!(f.eval(&x).abs() <= f.holder_norm);
                    let d = x.distance(&y);
                    assert!(
                        (f.eval(&x) - f.eval(&y)).abs() <= lip * d.powf(e) + 1e-12,
                        "{}",
                        f.label
                    );
                }
                assert_eq!(f.grad_sup.is_none(), f.holder_alpha < 1.0);
            }
        }
    }

    #[test]
    fn constants_are_fixed_by_averaging() {
        let s = RegularizationScheme::new(1, 0.05, 100, 1).unwrap();
        let phi = regularize(&TestFunction::constant(1, 0.7), &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            assert_eq!(phi.eval(&ProjectivePoint::random(1, &mut rng)), 0.7);
        }
    }

    #[test]
    fn eta_is_bounded() {
        for k in [1, 2] {
            for theta in [0.1, 0.01] {
                let s = RegularizationScheme::new(k, theta, 100, 3).unwrap();
                assert!(s.displacement_factor_eta > 0.0 && s.displacement_factor_eta <= 4.0);
            }
        }
        assert!(RegularizationScheme::new(1, 1.5, 100, 0).is_err());
        assert!(RegularizationScheme::new(1, 0.1, 99, 0).is_err());
    }

    #[test]
    fn regularization_is_linear_and_sup_preserving() {
        let s = RegularizationScheme::new(1, 0.03, 120, 4).unwrap();
        let x = builtin(1, "X").unwrap();
        let z = builtin(1, "Z").unwrap();
        let comb = regularize(&x.linear_combination(2.0, &z, -0.5), &s).unwrap();
        let rx = regularize(&x, &s).unwrap();
        let rz = regularize(&z, &s).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let p = ProjectivePoint::random(1, &mut rng);
            assert!((comb.eval(&p) - (2.0 * rx.eval(&p) - 0.5 * rz.eval(&p))).abs() < 1e-12);
            assert!(rx.eval(&p).abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn rough_member_gains_a_gradient() {
        let rough = builtin(1, "rootX").unwrap();
        assert!(rough.grad_sup.is_none());
        let s = RegularizationScheme::new(1, 0.01, 100, 6).unwrap();
        let r = regularize(&rough, &s).unwrap();
        assert!(r.grad_sup.is_some_and(|g| g.is_finite()));
    }

    #[test]
    fn sup_log_check() {
        let x = builtin(1, "X").unwrap();
        let chk = sup_vs_log_gradient_check(&x).unwrap();
        assert!(chk.a0 >= chk.sup_norm / (1.0 + log_plus(x.grad_sup.unwrap())));
        assert!(chk.sup_norm > 0.99 && chk.sup_norm <= 1.0);
        assert!(!chk.violation);
        assert!(matches!(
            sup_vs_log_gradient_check(&x.scaled(10.0)),
            Err(Error::Unnormalized { .. })
        ));
        assert!(matches!(
            sup_vs_log_gradient_check(&builtin(1, "rootX").unwrap()),
            Err(Error::NotC1(_))
        ));
        let s = RegularizationScheme::new(1, 1e-3, 100, 8).unwrap();
        let r = regularize(&builtin(1, "rootX").unwrap(), &s).unwrap();
        let chk = sup_vs_log_gradient_check(&r).unwrap();
        assert!(chk.sup_norm <= 1.0 + 1e-12);
        assert!(!chk.violation, "{chk:?}");
    }
}
