//! Points of P^1 and P^2 in canonical homogeneous coordinates, affine charts,
//! and the sine (chordal) form of the Fubini–Study distance.

use std::cmp::Ordering;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Below this norm a raw vector is treated as zero.
pub const ZERO_NORM: f64 = 1e-300;
/// A coordinate smaller than this (after normalization) never fixes the phase.
const PHASE_FLOOR: f64 = 1e-10;
/// A chart coordinate smaller than this is considered vanishing.
pub const CHART_FLOOR: f64 = 1e-12;

/// A point of P^k, k in {1, 2}, stored as a unit vector whose first
/// significant coordinate is real and nonnegative.
#[derive(Clone, Copy, PartialEq)]
pub struct ProjectivePoint {
    coords: [Complex64; 3],
    dim: usize,
}

/// Selects the affine chart `{x_index != 0}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChartIndex(usize);

impl ChartIndex {
    pub fn new(index: usize, dim: usize) -> Result<Self> {
        if index > dim {
            return Err(Error::InvalidArgument(format!(
                "chart {index} does not exist on P^{dim}"
            )));
        }
        Ok(ChartIndex(index))
    }

    pub fn index(self) -> usize {
        self.0
    }
}

fn check_dim(len: usize) -> Result<usize> {
    match len {
        2 | 3 => Ok(len - 1),
        _ => Err(Error::DimensionMismatch { expected: 3, got: len }),
    }
}

/// Scaled Euclidean norm that survives tiny and huge entries.
pub(crate) fn vec_norm(v: &[Complex64]) -> f64 {
    let scale = v.iter().map(|c| c.re.abs().max(c.im.abs())).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return scale;
    }
    let s: f64 = v.iter().map(|c| (c / scale).norm_sqr()).sum();
    scale * s.sqrt()
}

/// Normalizes a nonzero vector of length 2 or 3 to its canonical representative.
pub fn canonicalize(raw: &[Complex64]) -> Result<ProjectivePoint> {
    let dim = check_dim(raw.len())?;
    let norm = vec_norm(raw);
    if !(norm >= ZERO_NORM) || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    let mut coords = [Complex64::new(0.0, 0.0); 3];
    for (c, r) in coords.iter_mut().zip(raw) {
        *c = r / norm;
    }
    let lead = (0..=dim).find(|&i| coords[i].norm() > PHASE_FLOOR).unwrap_or(0);
    let modulus = coords[lead].norm();
    if modulus > 0.0 {
        let phase = coords[lead].conj() / modulus;
        for c in coords.iter_mut().take(dim + 1) {
            *c *= phase;
        }
        coords[lead] = Complex64::new(modulus, 0.0);
    }
    Ok(ProjectivePoint { coords, dim })
}

/// Sine of the angle between the two lines; symmetric, bounded by 1.
pub fn fs_distance(x: &ProjectivePoint, y: &ProjectivePoint) -> Result<f64> {
    if x.dim != y.dim {
        return Err(Error::DimensionMismatch {
            expected: x.dim,
            got: y.dim,
        });
    }
    Ok(x.distance(y))
}

/// Affine coordinates of `x` in the chart `c`.
pub fn to_chart(x: &ProjectivePoint, c: ChartIndex) -> Result<Vec<Complex64>> {
    let i = c.index();
    if i > x.dim {
        return Err(Error::InvalidArgument(format!("chart {i} on P^{}", x.dim)));
    }
    let pivot = x.coords[i];
    if pivot.norm() <= CHART_FLOOR {
        return Err(Error::PointAtInfinity { chart: i });
    }
    Ok((0..=x.dim).filter(|&j| j != i).map(|j| x.coords[j] / pivot).collect())
}

/// Inverse of [`to_chart`]: inserts a unit coordinate at the chart index.
pub fn from_chart(affine: &[Complex64], c: ChartIndex) -> Result<ProjectivePoint> {
    let dim = affine.len();
    if !(1..=2).contains(&dim) || c.index() > dim {
        return Err(Error::DimensionMismatch { expected: 2, got: dim });
    }
    let mut raw = Vec::with_capacity(dim + 1);
    let mut it = affine.iter();
    for j in 0..=dim {
        if j == c.index() {
            raw.push(Complex64::new(1.0, 0.0));
        } else {
            raw.push(*it.next().expect("length checked"));
        }
    }
    canonicalize(&raw)
}

impl ProjectivePoint {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The canonical unit representative (length `dim + 1`).
    pub fn coords(&self) -> &[Complex64] {
        &self.coords[..=self.dim]
    }

    pub fn coord(&self, i: usize) -> Complex64 {
        self.coords[i]
    }

    /// `[z : 1]` on P^1.
    pub fn affine1(z: Complex64) -> Self {
        canonicalize(&[z, Complex64::new(1.0, 0.0)]).expect("nonzero")
    }

    /// `[z : w : 1]` on P^2.
    pub fn affine2(z: Complex64, w: Complex64) -> Self {
        canonicalize(&[z, w, Complex64::new(1.0, 0.0)]).expect("nonzero")
    }

    /// `[1 : 0]` on P^1.
    pub fn infinity1() -> Self {
        canonicalize(&[Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)]).expect("nonzero")
    }

    /// Builds a point from real pairs, e.g. `[[2, 0], [1, 0]]`.
    pub fn from_pairs(pairs: &[[f64; 2]]) -> Result<Self> {
        let raw: Vec<Complex64> = pairs.iter().map(|p| Complex64::new(p[0], p[1])).collect();
        canonicalize(&raw)
    }

    pub fn to_pairs(&self) -> Vec<[f64; 2]> {
        self.coords().iter().map(|c| [c.re, c.im]).collect()
    }

    /// Distance without the dimension check; both points must live on the same P^k.
    pub fn distance(&self, other: &ProjectivePoint) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim + 1;
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += (self.coords[i] * other.coords[j] - self.coords[j] * other.coords[i]).norm_sqr();
            }
        }
        s.sqrt().min(1.0)
    }

    /// Hermitian inner product `<self, other>` of the unit representatives.
    pub fn inner(&self, other: &ProjectivePoint) -> Complex64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| a * b.conj())
            .sum()
    }

    /// Affine coordinate z/w on P^1, `None` at infinity.
    pub fn affine_z(&self) -> Option<Complex64> {
        debug_assert_eq!(self.dim, 1);
        if self.coords[1].norm() <= CHART_FLOOR {
            None
        } else {
            Some(self.coords[0] / self.coords[1])
        }
    }

    /// Total order on canonical coordinates, used to sort fibers reproducibly.
    pub fn canonical_cmp(&self, other: &ProjectivePoint) -> Ordering {
        for (a, b) in self.coords().iter().zip(other.coords()) {
            let o = a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im));
            if o != Ordering::Equal {
                return o;
            }
        }
        self.dim.cmp(&other.dim)
    }

    /// Uniformly distributed point (Fubini–Study volume) on P^dim.
    pub fn random<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        loop {
            let raw: Vec<Complex64> = (0..=dim)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            if let Ok(p) = canonicalize(&raw) {
                return p;
            }
        }
    }

    /// Random unit vector orthogonal to this point's representative.
    pub fn random_tangent<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let n = self.dim + 1;
        loop {
            let mut v: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            let proj: Complex64 = v.iter().zip(self.coords()).map(|(a, b)| a * b.conj()).sum();
            for (a, b) in v.iter_mut().zip(self.coords()) {
                *a -= proj * b;
            }
            let nv = vec_norm(&v);
            if nv > 1e-8 {
                v.iter_mut().for_each(|a| *a /= nv);
                return v;
            }
        }
    }

    /// Moves along the tangent vector `v` by (approximately) distance `h`.
    pub fn displaced(&self, v: &[Complex64], h: f64) -> Self {
        let raw: Vec<Complex64> = self.coords().iter().zip(v).map(|(a, b)| a + b * h).collect();
        canonicalize(&raw).expect("unit vector plus small displacement is nonzero")
    }
}

impl fmt::Debug for ProjectivePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, c) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, " : ")?;
            }
            write!(f, "{:.6}{:+.6}i", c.re, c.im)?;
        }
        write!(f, "]")
    }
}

impl Serialize for ProjectivePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_pairs().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProjectivePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        ProjectivePoint::from_pairs(&pairs).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn canonicalize_examples() {
        let p = canonicalize(&[c(2.0, 0.0), c(0.0, 0.0)]).unwrap();
        assert_eq!(p.coords(), &[c(1.0, 0.0), c(0.0, 0.0)]);
        let p = canonicalize(&[c(0.0, 0.0), c(0.0, 3.0)]).unwrap();
        assert!((p.coord(1) - c(1.0, 0.0)).norm() < 1e-15);
        let a = canonicalize(&[c(1.0, 0.0), c(1.0, 0.0)]).unwrap();
        let b = canonicalize(&[c(5.0, 5.0), c(5.0, 5.0)]).unwrap();
        for (x, y) in a.coords().iter().zip(b.coords()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_vector_rejected() {
        assert_eq!(canonicalize(&[c(0.0, 0.0), c(1e-301, 0.0)]), Err(Error::ZeroVector));
    }

    #[test]
    fn distance_examples() {
        let e0 = ProjectivePoint::infinity1();
        let e1 = ProjectivePoint::affine1(c(0.0, 0.0));
        assert!((e0.distance(&e1) - 1.0).abs() < 1e-15);
        assert_eq!(e0.distance(&e0), 0.0);
        let d = e0.distance(&ProjectivePoint::affine1(c(1.0, 0.0)));
        assert!((d - 0.5f64.sqrt()).abs() < 1e-15);
        let q = ProjectivePoint::affine2(c(1.0, 0.0), c(0.0, 0.0));
        assert!(matches!(fs_distance(&e0, &q), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn chart_examples() {
        let p = ProjectivePoint::from_pairs(&[[2.0, 0.0], [1.0, 0.0]]).unwrap();
        let z = to_chart(&p, ChartIndex::new(1, 1).unwrap()).unwrap();
        assert!((z[0] - c(2.0, 0.0)).norm() < 1e-14);
        let q = ProjectivePoint::from_pairs(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(
            to_chart(&q, ChartIndex::new(0, 1).unwrap()),
            Err(Error::PointAtInfinity { chart: 0 })
        );
        let r = ProjectivePoint::from_pairs(&[[1.0, 0.0], [2.0, 0.0], [4.0, 0.0]]).unwrap();
        let ch = ChartIndex::new(0, 2).unwrap();
        let a = to_chart(&r, ch).unwrap();
        assert!((a[0] - c(2.0, 0.0)).norm() < 1e-14 && (a[1] - c(4.0, 0.0)).norm() < 1e-14);
        let back = from_chart(&a, ch).unwrap();
        assert!(back.distance(&r) < 1e-12);
    }

    #[test]
    fn triangle_inequality_and_unitary_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for dim in [1usize, 2] {
            for _ in 0..10_000 {
                let x = ProjectivePoint::random(dim, &mut rng);
                let y = ProjectivePoint::random(dim, &mut rng);
                let z = ProjectivePoint::random(dim, &mut rng);
                assert!(x.distance(&z) <= x.distance(&y) + y.distance(&z) + 1e-10);
            }
            for _ in 0..200 {
                let u = crate::linalg::random_unitary(dim + 1, &mut rng);
                let x = ProjectivePoint::random(dim, &mut rng);
                let y = ProjectivePoint::random(dim, &mut rng);
                let ux = canonicalize(&u.apply(x.coords())).unwrap();
                let uy = canonicalize(&u.apply(y.coords())).unwrap();
                assert!((ux.distance(&uy) - x.distance(&y)).abs() < 1e-10);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn canonicalize_is_idempotent_and_scale_invariant(
            a in -5.0f64..5.0, b in -5.0f64..5.0, cc in -5.0f64..5.0, d in -5.0f64..5.0,
            sr in 0.1f64..10.0, sphase in 0.0f64..std::f64::consts::TAU,
        ) {
            proptest::prop_assume!(a.abs() + b.abs() + cc.abs() + d.abs() > 1e-3);
            let raw = [c(a, b), c(cc, d)];
            let p = canonicalize(&raw).unwrap();
            let q = canonicalize(p.coords()).unwrap();
            let s = Complex64::from_polar(sr, sphase);
            let r = canonicalize(&[raw[0] * s, raw[1] * s]).unwrap();
            for i in 0..2 {
                proptest::prop_assert!((p.coord(i) - q.coord(i)).norm() < 1e-12);
                proptest::prop_assert!((p.coord(i) - r.coord(i)).norm() < 1e-12);
            }
        }
    }
}
