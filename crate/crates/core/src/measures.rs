//! Discrete probability measures on P^k: fiber measures, Monte Carlo
//! estimates of the equilibrium measure, and pairings with observables.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::endomorphism::HomogeneousMap;
use crate::error::{Error, Result};
use crate::exceptional::ExceptionalSetModel;
use crate::fiber::{FiberSolver, WeightedFiber};
use crate::projective::ProjectivePoint;
use crate::rng::task_rng;
use crate::stats::batch_means;
use crate::test_functions::{builtin_suite, TestFunction};

/// Points closer than this to the exceptional set are refused as walk starts.
pub const EXCEPTIONAL_START_RADIUS: f64 = 1e-9;
pub const MAX_GRID: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Fiber,
    InverseIterationMc,
    External,
}

/// Finitely supported probability measure.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    atoms: Vec<(ProjectivePoint, f64)>,
    pub provenance: Provenance,
}

impl DiscreteMeasure {
    /// Validates positivity and unit mass (within 1e-12).
    pub fn new(atoms: Vec<(ProjectivePoint, f64)>, provenance: Provenance) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidArgument("measure without atoms".into()));
        }
        if atoms.iter().any(|(_, w)| !(*w > 0.0)) {
            return Err(Error::InvalidArgument("atom weights must be positive".into()));
        }
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("total mass {total} is not 1")));
        }
        Ok(DiscreteMeasure { atoms, provenance })
    }

    pub fn dirac(x: ProjectivePoint) -> Self {
        DiscreteMeasure {
            atoms: vec![(x, 1.0)],
            provenance: Provenance::External,
        }
    }

    /// Weights `multiplicity / d^(kn)`.
    pub fn from_fiber(f: &WeightedFiber) -> Self {
        let total = f.total_multiplicity() as f64;
        DiscreteMeasure {
            atoms: f.points.iter().map(|(p, m)| (*p, *m as f64 / total)).collect(),
            provenance: Provenance::Fiber,
        }
    }

    pub fn atoms(&self) -> &[(ProjectivePoint, f64)] {
        &self.atoms
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `sum weight * phi(point)`.
    pub fn pair(&self, phi: &TestFunction) -> f64 {
        self.pair_fn(&|x| phi.eval(x))
    }

    pub fn pair_fn(&self, phi: &dyn Fn(&ProjectivePoint) -> f64) -> f64 {
        self.atoms.iter().map(|(p, w)| w * phi(p)).sum()
    }

    /// Mass of `{x : pred(x)}`.
    pub fn mass_where(&self, pred: impl Fn(&ProjectivePoint) -> bool) -> f64 {
        self.atoms.iter().filter(|(p, _)| pred(p)).map(|a| a.1).sum()
    }
}

/// `d^(-kn) (f^n)^* delta_a`.
pub fn fiber_measure(solver: &FiberSolver, a: &ProjectivePoint, n: usize) -> Result<DiscreteMeasure> {
    Ok(DiscreteMeasure::from_fiber(&solver.backward_tree(a, n)?))
}

/// Inverse-iteration estimate of the equilibrium measure.
#[derive(Clone, Debug)]
pub struct MuEstimate {
    pub measure: DiscreteMeasure,
    pub burn_in: usize,
    pub samples: usize,
    /// Batch-means standard errors of the builtin observables, by label.
    pub stderr_oracle: BTreeMap<String, f64>,
}

impl MuEstimate {
    /// Walk endpoints in walk order.
    pub fn points(&self) -> impl Iterator<Item = &ProjectivePoint> {
        self.measure.atoms.iter().map(|a| &a.0)
    }

    /// Mean and batch-means standard error of `phi` over the endpoints.
    pub fn pairing_with_stderr(&self, phi: &dyn Fn(&ProjectivePoint) -> f64) -> (f64, f64) {
        let v: Vec<f64> = self.points().map(phi).collect();
        batch_means(&v)
    }

    pub fn pair(&self, phi: &TestFunction) -> f64 {
        self.measure.pair(phi)
    }

    /// Standard error of `phi`, from the oracle table when available.
    pub fn stderr(&self, phi: &TestFunction) -> f64 {
        match self.stderr_oracle.get(&phi.label) {
            Some(s) => *s,
            None => self.pairing_with_stderr(&|x| phi.eval(x)).1,
        }
    }
}

/// Runs `samples` independent backward walks of length `burn_in` from `start`.
/// Walk `i` draws from stream `i` of `seed`.
pub fn estimate_mu(
    solver: &FiberSolver,
    samples: usize,
    burn_in: usize,
    start: &ProjectivePoint,
    exceptional: &ExceptionalSetModel,
    seed: u64,
) -> Result<MuEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidArgument(format!("samples = {samples} < 1000")));
    }
    if burn_in < 20 {
        return Err(Error::InvalidArgument(format!("burn_in = {burn_in} < 20")));
    }
    let distance = exceptional.distance(start);
    if distance <= EXCEPTIONAL_START_RADIUS {
        return Err(Error::ExceptionalStart { distance });
    }
    let points: Vec<ProjectivePoint> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = task_rng(seed, i as u64);
            solver
                .sample_inverse_branch_with(start, burn_in, &mut rng)
                .map_err(|e| e.at_node(i))
        })
        .collect::<Result<_>>()?;
    let w = 1.0 / samples as f64;
    let measure = DiscreteMeasure {
        atoms: points.into_iter().map(|p| (p, w)).collect(),
        provenance: Provenance::InverseIterationMc,
    };
    let mut est = MuEstimate {
        measure,
        burn_in,
        samples,
        stderr_oracle: BTreeMap::new(),
    };
    for phi in builtin_suite(solver.map().dim())? {
        let se = est.pairing_with_stderr(&|x| phi.eval(x)).1;
        est.stderr_oracle.insert(phi.label.clone(), se);
    }
    Ok(est)
}

/// Grid estimate of the equilibrium measure of a map on P^1 from the Laplacian
/// of the Green function in two charts: `|z| <= 1` and `|1/z| < 1`.
pub fn green_mu_grid_k1(f: &HomogeneousMap, grid_resolution: usize) -> Result<DiscreteMeasure> {
    if grid_resolution > MAX_GRID {
        return Err(Error::GridOverflow(grid_resolution));
    }
    if f.dim() != 1 {
        return Err(Error::Unsupported("grid estimator is only defined on P^1".into()));
    }
    if grid_resolution < 8 {
        return Err(Error::InvalidArgument(format!("grid resolution {grid_resolution} < 8")));
    }
    let n = grid_resolution;
    let h = 2.2 / (n - 1) as f64;
    let coord = |i: usize| -1.1 + h * i as f64;
    let mut atoms: Vec<(ProjectivePoint, f64)> = Vec::new();
    for chart in 0..2 {
        let g: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let u = Complex64::new(coord(i), coord(j));
                        let v = if chart == 0 {
                            [u, Complex64::new(1.0, 0.0)]
                        } else {
                            [Complex64::new(1.0, 0.0), u]
                        };
                        f.lift_norm_log(&v, 40)
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        for i in 1..n - 1 {
            for j in 1..n - 1 {
                let u = Complex64::new(coord(i), coord(j));
                let inside = if chart == 0 { u.norm() <= 1.0 } else { u.norm() < 1.0 };
                if !inside {
                    continue;
                }
                let lap = (g[i + 1][j] + g[i - 1][j] + g[i][j + 1] + g[i][j - 1] - 4.0 * g[i][j]) / (h * h);
                let mass = lap * h * h / (2.0 * std::f64::consts::PI);
                if mass > 0.0 {
                    let p = if chart == 0 {
                        ProjectivePoint::affine1(u)
                    } else {
                        crate::projective::canonicalize(&[Complex64::new(1.0, 0.0), u])?
                    };
                    atoms.push((p, mass));
                }
            }
        }
    }
    let total: f64 = atoms.iter().map(|a| a.1).sum();
    if !(total > 0.0) {
        return Err(Error::solver("grid Laplacian carries no mass"));
    }
    for a in atoms.iter_mut() {
        a.1 /= total;
    }
    Ok(DiscreteMeasure {
        atoms,
        provenance: Provenance::External,
    })
}
