//! C ABI for the heatflow planner.
//!
//! Every entry point returns an [`HfStatus`]. On failure the message is
//! available from [`hf_last_error`] on the same thread. Handles are opaque
//! and must be released with their matching `*_free` function.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use heatflow::cli::{self, RunConfig};
use heatflow::flow::{solve, BoundarySpec, Method, SolveReport, SolverConfig, TrajectoryGrid};
use heatflow::lagrangian::{ConstraintSet, LagrangianContext};
use heatflow::models::{diver3, dynamic_unicycle, initial_grid, unicycle_const_vel, DiverParams, InitKind};
use heatflow::system::SystemModel;
use heatflow::verify::{verify, RolloutResult};
use heatflow::HeatflowError;
use nalgebra::DVector;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidConfig = 3,
    /// Singular frame, non-finite values, rejected steps and similar.
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfMethod {
    Aghf = 0,
    ElAghf = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HfInit {
    Linear = 0,
    LinearWithSineX = 1,
    ThetaOnly = 2,
}

/// Solver settings. Fill with [`hf_solve_options_default`] first.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HfSolveOptions {
    pub method: HfMethod,
    pub init: HfInit,
    pub horizon: f64,
    pub nt: usize,
    pub lambda: f64,
    /// Constraint penalty; values `<= 0` reuse `lambda`.
    pub lambda_c: f64,
    /// Heaviside sharpness shared by all box constraints.
    pub k_s: f64,
    pub epsilon: f64,
    pub s_max: f64,
    pub min_s: f64,
    pub wall_limit: f64,
}

/// `min <= x[index] <= max`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct HfBox {
    pub index: usize,
    pub min: f64,
    pub max: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct HfMetrics {
    pub converged: bool,
    pub s_reached: f64,
    pub wall_time_s: f64,
    pub steps: usize,
    pub final_action: f64,
    pub e_t: f64,
    pub e_hat_t: f64,
    pub e_viol: f64,
}

/// A dynamical system.
pub struct HfModel {
    inner: Arc<dyn SystemModel>,
}

/// A solved trajectory with its rollout check.
pub struct HfSolution {
    grid: TrajectoryGrid,
    report: SolveReport,
    rollout: RolloutResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &HeatflowError) -> HfStatus {
    match err {
        HeatflowError::InvalidConfig(_)
        | HeatflowError::InvalidLambda(_)
        | HeatflowError::DimensionMismatch(_)
        | HeatflowError::InitInfeasibleBoundary { .. } => HfStatus::InvalidConfig,
        HeatflowError::Io(_) => HfStatus::Io,
        _ => HfStatus::Numerical,
    }
}

fn fail(status: HfStatus, msg: impl Into<String>) -> HfStatus {
    set_error(msg);
    status
}

fn from_core(err: HeatflowError) -> HfStatus {
    fail(status_of(&err), err.to_string())
}

/// Runs `f`, converting panics into [`HfStatus::Panic`].
fn guard(f: impl FnOnce() -> HfStatus) -> HfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(HfStatus::Panic, format!("internal panic: {msg}"))
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, len))
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hf_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn hf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn put_model(out: *mut *mut HfModel, model: Arc<dyn SystemModel>) -> HfStatus {
    if out.is_null() {
        return fail(HfStatus::NullPointer, "out is NULL");
    }
    unsafe { *out = Box::into_raw(Box::new(HfModel { inner: model })) };
    HfStatus::Ok
}

/// Kinematic unicycle with unit forward speed (`n = 3`, `m = 1`).
#[no_mangle]
pub extern "C" fn hf_model_unicycle(out: *mut *mut HfModel) -> HfStatus {
    guard(|| put_model(out, Arc::new(unicycle_const_vel())))
}

/// Dynamic unicycle (`n = 5`, `m = 2`).
#[no_mangle]
pub extern "C" fn hf_model_dynamic_unicycle(out: *mut *mut HfModel) -> HfStatus {
    guard(|| put_model(out, Arc::new(dynamic_unicycle())))
}

/// Planar three-link diver (`n = 6`, `m = 2`). Each parameter array holds
/// three values; NULL selects unit values.
///
/// # Safety
/// Non-null arrays must point to three readable doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_model_diver3(
    masses: *const f64,
    lengths: *const f64,
    inertias: *const f64,
    out: *mut *mut HfModel,
) -> HfStatus {
    guard(|| {
        let d = DiverParams::default();
        let read = |p: *const f64, dflt: [f64; 3]| {
            if p.is_null() {
                dflt
            } else {
                let s = unsafe { std::slice::from_raw_parts(p, 3) };
                [s[0], s[1], s[2]]
            }
        };
        let params = DiverParams {
            masses: read(masses, d.masses),
            lengths: read(lengths, d.lengths),
            inertias: read(inertias, d.inertias),
        };
        match diver3(params) {
            Ok(m) => put_model(out, Arc::new(m)),
            Err(e) => from_core(e),
        }
    })
}

/// State dimension, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_model_state_dim(model: *const HfModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.state_dim())
}

/// Control dimension, or 0 for NULL.
///
/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_model_control_dim(model: *const HfModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.control_dim())
}

/// # Safety
/// `model` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hf_model_free(model: *mut HfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Writes the library defaults into `out`.
///
/// # Safety
/// `out` must be NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn hf_solve_options_default(out: *mut HfSolveOptions) -> HfStatus {
    guard(|| {
        let Some(out) = (unsafe { out.as_mut() }) else {
            return fail(HfStatus::NullPointer, "out is NULL");
        };
        let d = SolverConfig::default();
        *out = HfSolveOptions {
            method: HfMethod::ElAghf,
            init: HfInit::Linear,
            horizon: 1.0,
            nt: 101,
            lambda: 10.0,
            lambda_c: 0.0,
            k_s: 100.0,
            epsilon: d.epsilon,
            s_max: d.s_max,
            min_s: d.min_s,
            wall_limit: d.wall_limit,
        };
        HfStatus::Ok
    })
}

/// Solves a two-point problem and rolls out the extracted controls.
///
/// `x0` and `xf` hold `n` values. `free_start`/`free_end` are optional masks
/// of `n` bytes (nonzero = free). `boxes` may be NULL when `n_boxes` is 0.
///
/// # Safety
/// All non-null pointers must reference readable memory of the stated size;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hf_solve(
    model: *const HfModel,
    options: *const HfSolveOptions,
    x0: *const f64,
    xf: *const f64,
    n: usize,
    free_start: *const u8,
    free_end: *const u8,
    boxes: *const HfBox,
    n_boxes: usize,
    out: *mut *mut HfSolution,
) -> HfStatus {
    guard(|| unsafe {
        let (Some(model), Some(opts)) = (model.as_ref(), options.as_ref()) else {
            return fail(HfStatus::NullPointer, "model or options is NULL");
        };
        if out.is_null() || x0.is_null() || xf.is_null() {
            return fail(HfStatus::NullPointer, "x0, xf or out is NULL");
        }
        let dim = model.inner.state_dim();
        if n != dim {
            return fail(HfStatus::InvalidArgument, format!("n = {n}, model state dimension is {dim}"));
        }
        let Some(boxes) = slice(boxes, n_boxes) else {
            return fail(HfStatus::NullPointer, "boxes is NULL");
        };
        let x0 = DVector::from_column_slice(std::slice::from_raw_parts(x0, n));
        let xf = DVector::from_column_slice(std::slice::from_raw_parts(xf, n));
        let mask = |p: *const u8| -> Vec<bool> {
            if p.is_null() {
                vec![false; n]
            } else {
                std::slice::from_raw_parts(p, n).iter().map(|&b| b != 0).collect()
            }
        };
        match solve_inner(model, opts, &x0, &xf, &mask(free_start), &mask(free_end), boxes) {
            Ok(sol) => {
                *out = Box::into_raw(Box::new(sol));
                HfStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

fn solve_inner(
    model: &HfModel,
    o: &HfSolveOptions,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
    free_start: &[bool],
    free_end: &[bool],
    boxes: &[HfBox],
) -> heatflow::Result<HfSolution> {
    let n = x0.len();
    let lambda_c = if o.lambda_c > 0.0 { o.lambda_c } else { o.lambda };
    let mut cs = ConstraintSet::new(Vec::new(), lambda_c, o.k_s)?;
    for b in boxes {
        if b.index >= n || !(b.min < b.max) {
            return Err(HeatflowError::InvalidConfig(format!(
                "box on component {} with [{}, {}] is invalid for n = {n}",
                b.index, b.min, b.max
            )));
        }
        cs.push_box(b.index, b.min, b.max);
    }
    let ctx = LagrangianContext::new(model.inner.clone(), o.lambda, cs)?;
    let boundary = BoundarySpec::with_free(x0, xf, free_start, free_end)?;
    let init = match o.init {
        HfInit::Linear => InitKind::Linear,
        HfInit::LinearWithSineX => InitKind::LinearWithSineX,
        HfInit::ThetaOnly => InitKind::ThetaOnly,
    };
    let grid = initial_grid(init, x0, xf, o.horizon, o.nt, ctx.nc(), ctx.constraints.len())?;
    let config = SolverConfig {
        method: match o.method {
            HfMethod::Aghf => Method::Aghf,
            HfMethod::ElAghf => Method::ElAghf,
        },
        epsilon: o.epsilon,
        s_max: o.s_max,
        min_s: o.min_s,
        wall_limit: o.wall_limit,
        ..SolverConfig::default()
    };
    let (grid, report) = solve(&ctx, &grid, &boundary, &config)?;
    let rollout = verify(model.inner.as_ref(), &grid, &boundary, &ctx.constraints, None)?;
    Ok(HfSolution { grid, report, rollout })
}

/// # Safety
/// `sol` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hf_solution_free(sol: *mut HfSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Number of time nodes, or 0 for NULL.
///
/// # Safety
/// `sol` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn hf_solution_nt(sol: *const HfSolution) -> usize {
    sol.as_ref().map_or(0, |s| s.grid.nt())
}

/// # Safety
/// `sol` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hf_solution_metrics(sol: *const HfSolution, out: *mut HfMetrics) -> HfStatus {
    guard(|| unsafe {
        let (Some(s), Some(out)) = (sol.as_ref(), out.as_mut()) else {
            return fail(HfStatus::NullPointer, "sol or out is NULL");
        };
        *out = HfMetrics {
            converged: s.report.converged,
            s_reached: s.report.s_reached,
            wall_time_s: s.report.wall_time_s,
            steps: s.report.steps,
            final_action: s.report.final_action,
            e_t: s.rollout.e_t,
            e_hat_t: s.rollout.e_hat_t,
            e_viol: s.rollout.e_viol,
        };
        HfStatus::Ok
    })
}

fn copy_rows<'a>(
    rows: impl ExactSizeIterator<Item = &'a [f64]>,
    width: usize,
    buf: *mut f64,
    len: usize,
) -> HfStatus {
    let need = rows.len() * width;
    if buf.is_null() {
        return fail(HfStatus::NullPointer, "buffer is NULL");
    }
    if len < need {
        return fail(HfStatus::BufferTooSmall, format!("buffer holds {len} values, need {need}"));
    }
    let dst = unsafe { std::slice::from_raw_parts_mut(buf, need) };
    for (chunk, row) in dst.chunks_mut(width.max(1)).zip(rows) {
        chunk[..width].copy_from_slice(row);
    }
    HfStatus::Ok
}

/// Copies the states row-major (`nt x n`) into `buf`.
///
/// # Safety
/// `sol` must be a live handle; `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_solution_states(sol: *const HfSolution, buf: *mut f64, len: usize) -> HfStatus {
    guard(|| {
        let Some(s) = (unsafe { sol.as_ref() }) else {
            return fail(HfStatus::NullPointer, "sol is NULL");
        };
        let n = s.grid.state_dim();
        copy_rows(s.grid.states.iter().map(|x| x.as_slice()), n, buf, len)
    })
}

/// Copies the dynamics duals row-major (`nt x (n - m)`) into `buf`.
///
/// # Safety
/// `sol` must be a live handle; `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_solution_duals(sol: *const HfSolution, buf: *mut f64, len: usize) -> HfStatus {
    guard(|| {
        let Some(s) = (unsafe { sol.as_ref() }) else {
            return fail(HfStatus::NullPointer, "sol is NULL");
        };
        let w = s.grid.mu[0].len();
        copy_rows(s.grid.mu.iter().map(|x| x.as_slice()), w, buf, len)
    })
}

/// Copies the extracted controls row-major (`nt x m`) into `buf`.
///
/// # Safety
/// `sol` must be a live handle; `buf` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn hf_solution_controls(sol: *const HfSolution, buf: *mut f64, len: usize) -> HfStatus {
    guard(|| {
        let Some(s) = (unsafe { sol.as_ref() }) else {
            return fail(HfStatus::NullPointer, "sol is NULL");
        };
        let u = s.rollout.u_samples.transpose();
        let m = u.nrows();
        copy_rows(u.as_slice().chunks(m.max(1)).take(s.grid.nt()), m, buf, len)
    })
}

/// Runs a JSON config file like `heatflow run` and stores the process exit
/// code (0 converged, 2 not converged) in `exit_code`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `exit_code` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn hf_run_config(path: *const c_char, exit_code: *mut i32) -> HfStatus {
    guard(|| unsafe {
        if path.is_null() {
            return fail(HfStatus::NullPointer, "path is NULL");
        }
        let Ok(path) = CStr::from_ptr(path).to_str() else {
            return fail(HfStatus::InvalidArgument, "path is not UTF-8");
        };
        let outcome = RunConfig::load(Path::new(path)).and_then(|c| cli::run(&c));
        match outcome {
            Ok(o) => {
                if let Some(code) = exit_code.as_mut() {
                    *code = o.exit_code();
                }
                HfStatus::Ok
            }
            Err(e) => {
                if let Some(code) = exit_code.as_mut() {
                    *code = cli::EXIT_ERROR;
                }
                from_core(e)
            }
        }
    })
}
