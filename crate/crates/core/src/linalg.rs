//! Small dense complex matrices (sizes up to 6x6).

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::projective::vec_norm;

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        debug_assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| (0..self.cols).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn column(&self, j: usize) -> Vec<Complex64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    /// Largest singular value, by power iteration on A^H A.
    pub fn operator_norm(&self) -> f64 {
        let mut v = vec![Complex64::new(1.0, 0.3); self.cols];
        let mut sigma = 0.0;
        for _ in 0..200 {
            let av = self.apply(&v);
            let w: Vec<Complex64> = (0..self.cols)
                .map(|j| (0..self.rows).map(|i| self[(i, j)].conj() * av[i]).sum())
                .collect();
            let nw = vec_norm(&w);
            if nw == 0.0 {
                return 0.0;
            }
            let next = nw.sqrt();
            v = w.into_iter().map(|x| x / nw).collect();
            if (next - sigma).abs() <= 1e-15 * next {
                return next;
            }
            sigma = next;
        }
        sigma
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Determinant of a square matrix by Gaussian elimination with partial pivoting.
pub fn determinant(mut a: CMatrix) -> Complex64 {
    let n = a.rows;
    debug_assert_eq!(n, a.cols);
    let mut det = Complex64::new(1.0, 0.0);
    for k in 0..n {
        let (p, best) = (k..n)
            .map(|i| (i, a[(i, k)].norm()))
            .fold((k, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if p != k {
            for j in 0..n {
                a.data.swap(k * n + j, p * n + j);
            }
            det = -det;
        }
        let pivot = a[(k, k)];
        det *= pivot;
        for i in (k + 1)..n {
            let factor = a[(i, k)] / pivot;
            if factor == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in (k + 1)..n {
                let t = a[(k, j)];
                a[(i, j)] -= factor * t;
            }
        }
    }
    det
}

/// Haar-distributed unitary matrix (Gram–Schmidt on a complex Gaussian matrix).
pub fn random_unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    loop {
        let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(n);
        let mut ok = true;
        for _ in 0..n {
            let mut v: Vec<Complex64> = (0..n)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            for q in &cols {
                let proj: Complex64 = v.iter().zip(q).map(|(a, b)| a * b.conj()).sum();
                for (a, b) in v.iter_mut().zip(q) {
                    *a -= proj * b;
                }
            }
            let nv = vec_norm(&v);
            if nv < 1e-6 {
                ok = false;
                break;
            }
            cols.push(v.into_iter().map(|x| x / nv).collect());
        }
        if ok {
            let mut m = CMatrix::zeros(n, n);
            for (j, col) in cols.iter().enumerate() {
                for (i, x) in col.iter().enumerate() {
                    m[(i, j)] = *x;
                }
            }
            return m;
        }
    }
}

/// Orthonormal basis of the Hermitian complement of the unit vector `x`.
pub fn orthonormal_complement(x: &[Complex64]) -> Vec<Vec<Complex64>> {
    let n = x.len();
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(n - 1);
    // Start from the standard basis vectors least aligned with x.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].norm().total_cmp(&x[b].norm()));
    for &e in &order {
        if basis.len() == n - 1 {
            break;
        }
        let mut v = vec![Complex64::new(0.0, 0.0); n];
        v[e] = Complex64::new(1.0, 0.0);
        for q in std::iter::once(x).chain(basis.iter().map(|b| b.as_slice())) {
            let proj: Complex64 = v.iter().zip(q).map(|(a, b)| a * b.conj()).sum();
            for (a, b) in v.iter_mut().zip(q) {
                *a -= proj * b;
            }
        }
        let nv = vec_norm(&v);
        if nv > 1e-8 {
            basis.push(v.into_iter().map(|c| c / nv).collect());
        }
    }
    basis
}

/// Solves the 2x2 system `[[a, b], [c, d]] x = r`; `None` if singular.
pub fn solve2(a: Complex64, b: Complex64, c: Complex64, d: Complex64, r: [Complex64; 2]) -> Option<[Complex64; 2]> {
    let det = a * d - b * c;
    let scale = a.norm().max(b.norm()).max(c.norm()).max(d.norm());
    if det.norm() <= 1e-14 * scale * scale || scale == 0.0 {
        return None;
    }
    Some([(d * r[0] - b * r[1]) / det, (a * r[1] - c * r[0]) / det])
}
