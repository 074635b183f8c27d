//! C ABI over the equidist laboratory.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns an
//! `EquidistStatus`; the message of the last failure on the calling thread is
//! available from `equidist_last_error`. Points are passed as `2 * (dim + 1)`
//! doubles holding interleaved real and imaginary parts of the homogeneous
//! coordinates.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use num_complex::Complex64;

use equidist::exceptional::{declared_for_preset, ExceptionalSetModel};
use equidist::measures::{estimate_mu, MuEstimate};
use equidist::rate_lab::default_mu_start;
use equidist::suite::{load_config, run_suite};
use equidist::test_functions::builtin;
use equidist::{Error, FiberSolver, HomogeneousMap, ProjectivePoint, SolverSettings, WeightedFiber};

/// Result of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquidistStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidMap = 3,
    SolverFailure = 4,
    ExceptionalStart = 5,
    TreeTooLarge = 6,
    BufferTooSmall = 7,
    Io = 8,
    Config = 9,
    Panic = 10,
}

/// A holomorphic endomorphism together with its declared exceptional set.
pub struct EquidistMap {
    map: Arc<HomogeneousMap>,
    exceptional: ExceptionalSetModel,
}

/// Fiber solver bound to one map.
pub struct EquidistSolver {
    solver: FiberSolver,
    exceptional: ExceptionalSetModel,
}

/// Weighted preimages of a point under an iterate.
pub struct EquidistFiber {
    fiber: WeightedFiber,
}

/// Monte Carlo sample of the equilibrium measure.
pub struct EquidistMeasure {
    estimate: MuEstimate,
    dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Vec<u8>> = const { RefCell::new(Vec::new()) };
}

fn set_error(message: &str) {
    LAST_ERROR.with(|e| {
        let mut buf = e.borrow_mut();
        buf.clear();
        buf.extend(message.bytes().filter(|&b| b != 0));
    });
}

fn status_of(e: &Error) -> EquidistStatus {
    match e {
        Error::InvalidMap(_) | Error::Unsupported(_) => EquidistStatus::InvalidMap,
        Error::SolverFailure { .. }
        | Error::DegenerateFiber
        | Error::DegenerateImage
        | Error::EliminationDegenerate { .. }
        | Error::AmbiguousCount { .. } => EquidistStatus::SolverFailure,
        Error::ExceptionalStart { .. } => EquidistStatus::ExceptionalStart,
        Error::TreeTooLarge { .. } => EquidistStatus::TreeTooLarge,
        Error::Io(_) => EquidistStatus::Io,
        Error::Parse { .. } | Error::Validation { .. } => EquidistStatus::Config,
        _ => EquidistStatus::InvalidArgument,
    }
}

struct Failure(EquidistStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(EquidistStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `body`, recording any failure or panic as the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> EquidistStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => EquidistStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EquidistStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|_| Failure(EquidistStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

unsafe fn point_arg(coords: *const f64, len: usize, dim: usize) -> Result<ProjectivePoint, Failure> {
    if coords.is_null() {
        return Err(null("coords"));
    }
    if len != 2 * (dim + 1) {
        return Err(Failure(
            EquidistStatus::InvalidArgument,
            format!("expected {} doubles for a point of P^{dim}, got {len}", 2 * (dim + 1)),
        ));
    }
    let raw: Vec<Complex64> = std::slice::from_raw_parts(coords, len)
        .chunks_exact(2)
        .map(|c| Complex64::new(c[0], c[1]))
        .collect();
    Ok(equidist::projective::canonicalize(&raw)?)
}

unsafe fn write_point(p: &ProjectivePoint, out: *mut f64, cap: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out_coords"));
    }
    let need = 2 * p.coords().len();
    if cap < need {
        return Err(Failure(
            EquidistStatus::BufferTooSmall,
            format!("need {need} doubles, have {cap}"),
        ));
    }
    let dst = std::slice::from_raw_parts_mut(out, need);
    for (c, z) in dst.chunks_exact_mut(2).zip(p.coords()) {
        c[0] = z.re;
        c[1] = z.im;
    }
    Ok(())
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("out"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn drop_handle<T>(h: *mut T) {
    if !h.is_null() {
        drop(Box::from_raw(h));
    }
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or point to `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn equidist_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Creates a preset map: "z2", "z3", "basilica", "cheb" or "torus2".
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn equidist_map_preset(name: *const c_char, out: *mut *mut EquidistMap) -> EquidistStatus {
    guard(|| {
        let name = str_arg(name, "name")?;
        let map = Arc::new(HomogeneousMap::preset(name)?);
        let exceptional = declared_for_preset(name)?;
        put(out, EquidistMap { map, exceptional })
    })
}

/// Projective dimension k of the map, or 0 for a null handle.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn equidist_map_dim(map: *const EquidistMap) -> usize {
    map.as_ref().map_or(0, |m| m.map.dim())
}

/// Algebraic degree d of the map, or 0 for a null handle.
///
/// # Safety
/// `map` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn equidist_map_degree(map: *const EquidistMap) -> usize {
    map.as_ref().map_or(0, |m| m.map.degree())
}

/// Evaluates the map at a point; the image is written in canonical form.
///
/// # Safety
/// `coords` must hold `len` doubles and `out_coords` `out_cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn equidist_map_evaluate(
    map: *const EquidistMap,
    coords: *const f64,
    len: usize,
    out_coords: *mut f64,
    out_cap: usize,
) -> EquidistStatus {
    guard(|| {
        let m = map.as_ref().ok_or_else(|| null("map"))?;
        let x = point_arg(coords, len, m.map.dim())?;
        write_point(&m.map.evaluate(&x)?, out_coords, out_cap)
    })
}

/// # Safety
/// `map` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn equidist_map_free(map: *mut EquidistMap) {
    drop_handle(map);
}

/// Creates a fiber solver with default settings. The map handle may be freed
/// afterwards.
///
/// # Safety
/// `map` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn equidist_solver_new(map: *const EquidistMap, out: *mut *mut EquidistSolver) -> EquidistStatus {
    guard(|| {
        let m = map.as_ref().ok_or_else(|| null("map"))?;
        let solver = FiberSolver::new(m.map.clone(), SolverSettings::default())?;
        put(
            out,
            EquidistSolver {
                solver,
                exceptional: m.exceptional.clone(),
            },
        )
    })
}

/// # Safety
/// `solver` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn equidist_solver_free(solver: *mut EquidistSolver) {
    drop_handle(solver);
}

/// Computes the weighted fiber of f^n over a point; n = 1 is the plain fiber.
///
/// # Safety
/// `coords` must hold `len` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn equidist_fiber_new(
    solver: *const EquidistSolver,
    coords: *const f64,
    len: usize,
    n: usize,
    out: *mut *mut EquidistFiber,
) -> EquidistStatus {
    guard(|| {
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        if n == 0 {
            return Err(Failure(EquidistStatus::InvalidArgument, "n must be >= 1".into()));
        }
        let a = point_arg(coords, len, s.solver.map().dim())?;
        let fiber = if n == 1 {
            s.solver.fiber(&a)?
        } else {
            s.solver.backward_tree(&a, n)?
        };
        put(out, EquidistFiber { fiber })
    })
}

/// Number of distinct points in the fiber, or 0 for a null handle.
///
/// # Safety
/// `fiber` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn equidist_fiber_len(fiber: *const EquidistFiber) -> usize {
    fiber.as_ref().map_or(0, |f| f.fiber.points.len())
}

/// Sum of multiplicities, saturating at `UINT64_MAX`.
///
/// # Safety
/// `fiber` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn equidist_fiber_total_multiplicity(fiber: *const EquidistFiber) -> u64 {
    fiber
        .as_ref()
        .map_or(0, |f| u64::try_from(f.fiber.total_multiplicity()).unwrap_or(u64::MAX))
}

/// Largest image residual over the fiber, or NaN for a null handle.
///
/// # Safety
/// `fiber` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn equidist_fiber_residual(fiber: *const EquidistFiber) -> f64 {
    fiber.as_ref().map_or(f64::NAN, |f| f.fiber.residual)
}

/// Copies point `index` and its multiplicity out of the fiber.
///
/// # Safety
/// `out_coords` must hold `out_cap` doubles; `multiplicity` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn equidist_fiber_point(
    fiber: *const EquidistFiber,
    index: usize,
    out_coords: *mut f64,
    out_cap: usize,
    multiplicity: *mut usize,
) -> EquidistStatus {
    guard(|| {
        let f = fiber.as_ref().ok_or_else(|| null("fiber"))?;
        let (p, m) = f.fiber.points.get(index).ok_or_else(|| {
            Failure(
                EquidistStatus::InvalidArgument,
                format!("index {index} out of range 0..{}", f.fiber.points.len()),
            )
        })?;
        write_point(p, out_coords, out_cap)?;
        if !multiplicity.is_null() {
            *multiplicity = *m;
        }
        Ok(())
    })
}

/// # Safety
/// `fiber` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn equidist_fiber_free(fiber: *mut EquidistFiber) {
    drop_handle(fiber);
}

/// Samples the equilibrium measure by `samples` random backward walks of
/// length `burn_in`, started away from the declared exceptional set.
/// Identical arguments give identical samples.
///
/// # Safety
/// `solver` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn equidist_mu_estimate(
    solver: *const EquidistSolver,
    samples: usize,
    burn_in: usize,
    seed: u64,
    out: *mut *mut EquidistMeasure,
) -> EquidistStatus {
    guard(|| {
        let s = solver.as_ref().ok_or_else(|| null("solver"))?;
        let dim = s.solver.map().dim();
        let start = default_mu_start(dim, &s.exceptional, seed);
        let estimate = estimate_mu(&s.solver, samples, burn_in, &start, &s.exceptional, seed)?;
        put(out, EquidistMeasure { estimate, dim })
    })
}

/// Pairs the sample with a builtin observable (for example "X", "Z", "re_zw")
/// and reports the mean with its batch-means standard error.
///
/// # Safety
/// `label` must be a NUL-terminated string; `value` and `stderr` must be writable.
#[no_mangle]
pub unsafe extern "C" fn equidist_measure_pair(
    measure: *const EquidistMeasure,
    label: *const c_char,
    value: *mut f64,
    stderr: *mut f64,
) -> EquidistStatus {
    guard(|| {
        let m = measure.as_ref().ok_or_else(|| null("measure"))?;
        let phi = builtin(m.dim, str_arg(label, "label")?)?;
        if value.is_null() || stderr.is_null() {
            return Err(null("value/stderr"));
        }
        let (v, se) = m.estimate.pairing_with_stderr(&|x| phi.eval(x));
        *value = v;
        *stderr = se;
        Ok(())
    })
}

/// # Safety
/// `measure` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn equidist_measure_free(measure: *mut EquidistMeasure) {
    drop_handle(measure);
}

/// Runs every experiment of a JSON config file, writing reports to its output
/// directory. `exit_code` receives 0 when no experiment errored and 1 otherwise.
///
/// # Safety
/// `config_path` must be a NUL-terminated string; `exit_code` must be writable.
#[no_mangle]
pub unsafe extern "C" fn equidist_run_suite(config_path: *const c_char, exit_code: *mut i32) -> EquidistStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        if exit_code.is_null() {
            return Err(null("exit_code"));
        }
        let suite = load_config(Path::new(path))?;
        *exit_code = run_suite(&suite, None)?.exit_code;
        Ok(())
    })
}
