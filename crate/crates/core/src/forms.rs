//! Homogeneous polynomials ("forms") in 2 or 3 variables stored as dense
//! coefficient tables.
//!
//! Monomial layout: for two variables, index `j` is `z^(d-j) w^j`. For three
//! variables, monomials `z^a w^b t^c` are listed with `a` descending from `d`,
//! then `b` descending from `d - a`.

use num_complex::Complex64;

use crate::linalg::CMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Form {
    nvars: usize,
    degree: usize,
    coeffs: Vec<Complex64>,
}

/// Exponent triples of all monomials of degree `d` in `nvars` variables, in table order.
pub fn monomials(nvars: usize, d: usize) -> Vec<[usize; 3]> {
    match nvars {
        2 => (0..=d).map(|j| [d - j, j, 0]).collect(),
        3 => {
            let mut out = Vec::with_capacity((d + 1) * (d + 2) / 2);
            for a in (0..=d).rev() {
                for b in (0..=(d - a)).rev() {
                    out.push([a, b, d - a - b]);
                }
            }
            out
        }
        _ => panic!("forms support 2 or 3 variables"),
    }
}

/// Position of the exponent triple in the table order.
pub fn monomial_index(nvars: usize, d: usize, e: [usize; 3]) -> usize {
    match nvars {
        2 => e[1],
        _ => {
            let a = e[0];
            // Rows for a' = d, d-1, ..., a+1 hold (d - a' + 1) monomials each.
            let before: usize = ((a + 1)..=d).map(|ap| d - ap + 1).sum();
            before + (d - a - e[1])
        }
    }
}

pub fn table_len(nvars: usize, d: usize) -> usize {
    match nvars {
        2 => d + 1,
        _ => (d + 1) * (d + 2) / 2,
    }
}

impl Form {
    pub fn new(nvars: usize, degree: usize, coeffs: Vec<Complex64>) -> Option<Form> {
        if !(2..=3).contains(&nvars) || coeffs.len() != table_len(nvars, degree) {
            return None;
        }
        Some(Form { nvars, degree, coeffs })
    }

    pub fn zero(nvars: usize, degree: usize) -> Form {
        Form {
            nvars,
            degree,
            coeffs: vec![Complex64::new(0.0, 0.0); table_len(nvars, degree)],
        }
    }

    /// A single monomial with coefficient `c`.
    pub fn monomial(nvars: usize, e: [usize; 3], c: Complex64) -> Form {
        let d = e[0] + e[1] + e[2];
        let mut f = Form::zero(nvars, d);
        f.coeffs[monomial_index(nvars, d, e)] = c;
        f
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn max_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn eval(&self, v: &[Complex64]) -> Complex64 {
        let d = self.degree;
        let one = Complex64::new(1.0, 0.0);
        let mut pw = [[one; 8]; 3];
        for (i, row) in pw.iter_mut().enumerate().take(self.nvars) {
            for e in 1..=d {
                row[e] = row[e - 1] * v[i];
            }
        }
        match self.nvars {
            2 => self
                .coeffs
                .iter()
                .enumerate()
                .map(|(j, c)| c * pw[0][d - j] * pw[1][j])
                .sum(),
            _ => {
                let mut s = Complex64::new(0.0, 0.0);
                let mut k = 0;
                for a in (0..=d).rev() {
                    for b in (0..=(d - a)).rev() {
                        s += self.coeffs[k] * pw[0][a] * pw[1][b] * pw[2][d - a - b];
                        k += 1;
                    }
                }
                s
            }
        }
    }

    /// Partial derivative with respect to variable `var`.
    pub fn partial(&self, var: usize) -> Form {
        let d = self.degree;
        if d == 0 {
            return Form::zero(self.nvars, 0);
        }
        let mut out = Form::zero(self.nvars, d - 1);
        for (k, e) in monomials(self.nvars, d).into_iter().enumerate() {
            if e[var] == 0 {
                continue;
            }
            let mut e2 = e;
            e2[var] -= 1;
            out.coeffs[monomial_index(self.nvars, d - 1, e2)] += self.coeffs[k] * e[var] as f64;
        }
        out
    }

    pub fn add(&self, other: &Form) -> Form {
        debug_assert_eq!((self.nvars, self.degree), (other.nvars, other.degree));
        Form {
            nvars: self.nvars,
            degree: self.degree,
            coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn scale(&self, s: Complex64) -> Form {
        Form {
            nvars: self.nvars,
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|a| a * s).collect(),
        }
    }

    pub fn mul(&self, other: &Form) -> Form {
        let d = self.degree + other.degree;
        let mut out = Form::zero(self.nvars, d);
        let ma = monomials(self.nvars, self.degree);
        let mb = monomials(other.nvars, other.degree);
        for (i, ea) in ma.iter().enumerate() {
            if self.coeffs[i] == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (j, eb) in mb.iter().enumerate() {
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2]];
                out.coeffs[monomial_index(self.nvars, d, e)] += self.coeffs[i] * other.coeffs[j];
            }
        }
        out
    }

    /// The form `v -> self(M v)`.
    pub fn compose_linear(&self, m: &CMatrix) -> Form {
        let n = self.nvars;
        // Linear forms L_i(v) = sum_j m[i][j] v_j.
        let linear: Vec<Form> = (0..n)
            .map(|i| {
                let mut f = Form::zero(n, 1);
                for j in 0..n {
                    let mut e = [0usize; 3];
                    e[j] = 1;
                    f.coeffs[monomial_index(n, 1, e)] = m[(i, j)];
                }
                f
            })
            .collect();
        let one = Form::monomial(n, [0, 0, 0], Complex64::new(1.0, 0.0));
        let mut powers: Vec<Vec<Form>> = Vec::with_capacity(n);
        for l in &linear {
            let mut row = vec![one.clone()];
            for e in 1..=self.degree {
                let next = row[e - 1].mul(l);
                row.push(next);
            }
            powers.push(row);
        }
        let mut out = Form::zero(n, self.degree);
        for (k, e) in monomials(n, self.degree).into_iter().enumerate() {
            let c = self.coeffs[k];
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mut term = powers[0][e[0]].mul(&powers[1][e[1]]);
            if n == 3 {
                term = term.mul(&powers[2][e[2]]);
            }
            out = out.add(&term.scale(c));
        }
        out
    }

    /// Coefficients of `self(z, 1)` leading-first (two-variable forms only).
    pub fn dehomogenize2(&self) -> Vec<Complex64> {
        debug_assert_eq!(self.nvars, 2);
        self.coeffs.clone()
    }

    /// For a ternary form, writes `self(s, r, 1) = sum_b r^b A_b(s)` and returns
    /// `A_b` for b = d down to 0, each leading-first in `s` and padded to length d + 1.
    pub fn split_ternary(&self) -> Vec<Vec<Complex64>> {
        debug_assert_eq!(self.nvars, 3);
        let d = self.degree;
        let mut out = vec![vec![Complex64::new(0.0, 0.0); d + 1]; d + 1];
        for (k, e) in monomials(3, d).into_iter().enumerate() {
            // Row indexed by d - b (leading power of r first), column by d - a.
            out[d - e[1]][d - e[0]] += self.coeffs[k];
        }
        out
    }
}
