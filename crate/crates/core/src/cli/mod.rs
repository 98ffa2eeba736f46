//! Config-driven experiment runner behind the `heatflow` binary.

mod config;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

pub use config::{ConstraintConfig, ModelId, RunConfig, StepConfig};

use crate::error::{HeatflowError, Result};
use crate::flow::{solve, Method, SolveReport, Termination, TrajectoryGrid};
use crate::models::initial_grid;
use crate::verify::{verify, RolloutResult};

/// Process exit status for a finished run.
pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

/// Command-line overrides, applied key for key over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub lambda: Option<f64>,
    pub method: Option<Method>,
    pub nt: Option<usize>,
    pub epsilon: Option<f64>,
    pub s_max: Option<f64>,
    pub min_s: Option<f64>,
    pub wall_limit: Option<f64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = self.method {
            cfg.method = v;
        }
        if let Some(v) = self.nt {
            cfg.nt = v;
        }
        if let Some(v) = self.epsilon {
            cfg.epsilon = v;
        }
        if let Some(v) = self.s_max {
            cfg.s_max = v;
        }
        if let Some(v) = self.min_s {
            cfg.min_s = v;
        }
        if let Some(v) = self.wall_limit {
            cfg.wall_limit = v;
        }
        if let Some(v) = &self.out {
            cfg.output = v.clone();
        }
    }
}

/// Contents of `report.json`. Wall time is kept out so the file is
/// reproducible; it goes to `timing.json` instead.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub model: ModelId,
    pub method: Method,
    pub lambda: f64,
    pub lambda_c: f64,
    pub nt: usize,
    pub horizon: f64,
    pub converged: bool,
    pub termination: Termination,
    pub s_reached: f64,
    pub steps: usize,
    pub rejected_steps: usize,
    pub final_action: f64,
    pub state_residual: f64,
    pub mu_residual: f64,
    pub mu_c_residual: f64,
    pub e_t: f64,
    pub e_hat_t: f64,
    pub e_viol: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub grid: TrajectoryGrid,
    pub solve: SolveReport,
    pub rollout: RolloutResult,
    pub report: RunReport,
    pub output: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.solve.converged {
            EXIT_CONVERGED
        } else {
            EXIT_NOT_CONVERGED
        }
    }
}

/// Solves, rolls out the extracted controls and writes all artifacts.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let ctx = cfg.context()?;
    let boundary = cfg.boundary()?;
    let (x0, xf) = cfg.endpoints();
    let init = initial_grid(cfg.init, &x0, &xf, cfg.horizon, cfg.nt, ctx.nc(), ctx.constraints.len())?;
    let (grid, solve_report) = solve(&ctx, &init, &boundary, &cfg.solver_config())?;
    let rollout = verify(ctx.model.as_ref(), &grid, &boundary, &ctx.constraints, cfg.rollout_dt)?;

    let report = RunReport {
        model: cfg.model,
        method: cfg.method,
        lambda: cfg.lambda,
        lambda_c: cfg.lambda_c(),
        nt: cfg.nt,
        horizon: cfg.horizon,
        converged: solve_report.converged,
        termination: solve_report.termination,
        s_reached: solve_report.s_reached,
        steps: solve_report.steps,
        rejected_steps: solve_report.rejected_steps,
        final_action: solve_report.final_action,
        state_residual: solve_report.state_residual,
        mu_residual: solve_report.mu_residual,
        mu_c_residual: solve_report.mu_c_residual,
        e_t: rollout.e_t,
        e_hat_t: rollout.e_hat_t,
        e_viol: rollout.e_viol,
    };
    let outcome = RunOutcome {
        grid,
        solve: solve_report,
        rollout,
        report,
        output: cfg.output.clone(),
    };
    write_artifacts(&outcome)?;
    Ok(outcome)
}

fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

fn csv_row(out: &mut String, values: impl IntoIterator<Item = f64>) {
    for (i, v) in values.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        num(out, v);
    }
    out.push('\n');
}

fn header(prefix: &str, count: usize) -> impl Iterator<Item = String> + '_ {
    (1..=count).map(move |i| format!("{prefix}{i}"))
}

/// `t,x1..,mu1..,muc1..,u1..` at the grid nodes.
pub fn trajectory_csv(grid: &TrajectoryGrid, u: &nalgebra::DMatrix<f64>) -> String {
    let n = grid.state_dim();
    let n_mu = grid.mu[0].len();
    let nc = grid.mu_c[0].len();
    let cols: Vec<String> = std::iter::once("t".to_string())
        .chain(header("x", n))
        .chain(header("mu", n_mu))
        .chain(header("muc", nc))
        .chain(header("u", u.ncols()))
        .collect();
    let mut out = cols.join(",");
    out.push('\n');
    for k in 0..grid.nt() {
        let u_row: Vec<f64> = u.row(k).iter().copied().collect();
        let row = std::iter::once(grid.time(k))
            .chain(grid.states[k].iter().copied())
            .chain(grid.mu[k].iter().copied())
            .chain(grid.mu_c[k].iter().copied())
            .chain(u_row);
        csv_row(&mut out, row);
    }
    out
}

fn rollout_csv(r: &RolloutResult) -> String {
    let n = r.x_tilde.first().map_or(0, |x| x.len());
    let mut out = std::iter::once("t".to_string()).chain(header("x", n)).collect::<Vec<_>>().join(",");
    out.push('\n');
    for (t, x) in r.times.iter().zip(&r.x_tilde) {
        csv_row(&mut out, std::iter::once(*t).chain(x.iter().copied()));
    }
    out
}

fn history_csv(history: &[(f64, f64)]) -> String {
    let mut out = String::from("s,action\n");
    for &(s, a) in history {
        csv_row(&mut out, [s, a]);
    }
    out
}

fn write_artifacts(o: &RunOutcome) -> Result<()> {
    // render everything before touching the disk so a failure leaves no partial set
    let files = [
        ("trajectory.csv", trajectory_csv(&o.grid, &o.rollout.u_samples)),
        ("rollout.csv", rollout_csv(&o.rollout)),
        ("action_history.csv", history_csv(&o.solve.action_history)),
        ("report.json", to_json(&o.report)?),
        (
            "timing.json",
            to_json(&serde_json::json!({ "wall_time_s": o.solve.wall_time_s }))?,
        ),
    ];
    std::fs::create_dir_all(&o.output)
        .map_err(|e| HeatflowError::Io(format!("{}: {e}", o.output.display())))?;
    for (name, body) in files {
        let path = o.output.join(name);
        std::fs::write(&path, body).map_err(|e| HeatflowError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| HeatflowError::Io(format!("serializing report: {e}")))?;
    s.push('\n');
    Ok(s)
}

/// One line of the sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub method: Method,
    pub lambda: f64,
    pub converged: Option<bool>,
    pub s_reached: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub e_t: Option<f64>,
    pub e_hat_t: Option<f64>,
    pub e_viol: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Whether the constraint columns are shown.
    pub constrained: bool,
}

/// Worker count for sweeps: `HEATFLOW_THREADS` if set and positive, else
/// the machine's parallelism.
pub fn sweep_threads() -> usize {
    std::env::var("HEATFLOW_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn run_dir(base: &Path, method: Method, lambda: f64) -> PathBuf {
    let tag = match method {
        Method::Aghf => "aghf",
        Method::ElAghf => "el_aghf",
    };
    base.join(format!("{tag}_lambda_{lambda}"))
}

/// Runs both methods for every listed penalty. Individual failures become
/// table rows; the sweep itself only fails on invalid input.
pub fn sweep(cfg: &RunConfig) -> Result<SweepTable> {
    let lambdas = match &cfg.sweep {
        Some(l) if !l.is_empty() => l.clone(),
        _ => return Err(HeatflowError::InvalidConfig("sweep list is empty".into())),
    };
    cfg.validate()?;
    let constrained = !cfg.constraints.is_empty();
    let jobs: Vec<(f64, Method)> = lambdas
        .iter()
        .flat_map(|&l| [(l, Method::Aghf), (l, Method::ElAghf)])
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads())
        .build()
        .map_err(|e| HeatflowError::InvalidConfig(format!("thread pool: {e}")))?;
    let rows = pool.install(|| {
        jobs.par_iter()
            .map(|&(lambda, method)| {
                let mut c = cfg.clone();
                c.lambda = lambda;
                c.method = method;
                c.sweep = None;
                if constrained {
                    c.lambda_c = Some(lambda);
                }
                c.output = run_dir(&cfg.output, method, lambda);
                let started = Instant::now();
                match run(&c) {
                    Ok(o) => SweepRow {
                        method,
                        lambda,
                        converged: Some(o.solve.converged),
                        s_reached: Some(o.solve.s_reached),
                        wall_time_s: Some(o.solve.wall_time_s),
                        e_t: Some(o.rollout.e_t),
                        e_hat_t: Some(o.rollout.e_hat_t),
                        e_viol: Some(o.rollout.e_viol),
                        error: None,
                    },
                    Err(e) => SweepRow {
                        method,
                        lambda,
                        converged: None,
                        s_reached: None,
                        wall_time_s: Some(started.elapsed().as_secs_f64()),
                        e_t: None,
                        e_hat_t: None,
                        e_viol: None,
                        error: Some(e.to_string()),
                    },
                }
            })
            .collect()
    });
    let table = SweepTable { rows, constrained };
    std::fs::create_dir_all(&cfg.output)?;
    std::fs::write(cfg.output.join("sweep.csv"), table.to_csv())?;
    Ok(table)
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.prec$e}"))
}

impl SweepTable {
    fn columns(&self) -> Vec<&'static str> {
        let mut c = vec!["method", "lambda", "converged", "s_reached", "wall_time_s", "e_T"];
        if self.constrained {
            c.extend(["e_hat_T", "e_viol"]);
        }
        c.push("error");
        c
    }

    fn cells(&self, r: &SweepRow, prec: usize) -> Vec<String> {
        let mut c = vec![
            r.method.label().to_string(),
            format!("{}", r.lambda),
            r.converged.map_or("-".into(), |b| b.to_string()),
            opt(r.s_reached, prec),
            opt(r.wall_time_s, prec),
            opt(r.e_t, prec),
        ];
        if self.constrained {
            c.push(opt(r.e_hat_t, prec));
            c.push(opt(r.e_viol, prec));
        }
        c.push(r.error.clone().unwrap_or_default());
        c
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns().join(",");
        out.push('\n');
        for r in &self.rows {
            let cells: Vec<String> = self
                .cells(r, 16)
                .into_iter()
                .map(|c| if c.contains([',', '"', '\n']) { format!("\"{}\"", c.replace('"', "\"\"")) } else { c })
                .collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text rendering for the terminal.
    pub fn render(&self) -> String {
        let head: Vec<String> = self.columns().iter().map(|s| s.to_string()).collect();
        let body: Vec<Vec<String>> = self.rows.iter().map(|r| self.cells(r, 3)).collect();
        let widths: Vec<usize> = (0..head.len())
            .map(|i| body.iter().map(|r| r[i].len()).chain([head[i].len()]).max().unwrap_or(0))
            .collect();
        let line = |cells: &[String]| {
            let mut s = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect::<Vec<_>>()
                .join("  ");
            s.truncate(s.trim_end().len());
            s.push('\n');
            s
        };
        let mut out = line(&head);
        for r in &body {
            out.push_str(&line(r));
        }
        out
    }
}
