//! Acceptance criteria, one PASS/FAIL line each. Runs without the libtest
//! harness so the lines always print; exits nonzero if any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use common::*;
use heatflow::flow::{constraint_dual_flow_rhs, dual_flow_rhs};
use heatflow::lagrangian::{extended_lagrangian, extended_lagrangian_completed_square};
use heatflow::prelude::*;
use heatflow::verify::rollout;
use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = std::result::Result<String, String>;

struct Run {
    converged: bool,
    s: f64,
    secs: f64,
    e_t: f64,
    e_hat: f64,
    e_viol: f64,
}

#[allow(clippy::too_many_arguments)]
fn run(
    ctx: &LagrangianContext,
    kind: InitKind,
    x0: &DVector<f64>,
    xf: &DVector<f64>,
    boundary: &BoundarySpec,
    horizon: f64,
    nt: usize,
    cfg: SolverConfig,
) -> Run {
    let init = initial_grid(kind, x0, xf, horizon, nt, ctx.nc(), ctx.constraints.len()).unwrap();
    let started = Instant::now();
    let (grid, report) = solve(ctx, &init, boundary, &cfg).unwrap();
    let check = verify(ctx.model.as_ref(), &grid, boundary, &ctx.constraints, None).unwrap();
    Run {
        converged: report.converged,
        s: report.s_reached,
        secs: started.elapsed().as_secs_f64(),
        e_t: check.e_t,
        e_hat: check.e_hat_t,
        e_viol: check.e_viol,
    }
}

fn el(method: Method) -> SolverConfig {
    SolverConfig { method, epsilon: 1e-4, s_max: 1e4, ..Default::default() }
}

fn unicycle(method: Method, lambda: f64) -> Run {
    let ctx = LagrangianContext::unconstrained(Arc::new(unicycle_const_vel()), lambda).unwrap();
    let (x0, xf) = (v(&[0.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0]));
    run(&ctx, InitKind::Linear, &x0, &xf, &BoundarySpec::fixed(&x0, &xf), 5.0, 101, el(method))
}

fn criterion_1() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for lambda in [1.0, 10.0, 100.0] {
        let r = unicycle(Method::ElAghf, lambda);
        ok &= r.converged && r.e_t <= 5e-3 && r.secs <= 60.0;
        notes.push(format!("lambda={lambda}: converged={} s={:.1} e(T)={:.2e} {:.1}s", r.converged, r.s, r.e_t, r.secs));
    }
    let msg = notes.join("; ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn criterion_2() -> Outcome {
    let lambdas = [1.0, 10.0, 100.0, 1000.0];
    let errs: Vec<f64> = lambdas.iter().map(|&l| unicycle(Method::Aghf, l).e_t).collect();
    let monotone = errs.windows(2).all(|w| w[1] <= 1.1 * w[0]);
    let msg = format!(
        "e(T) over lambda 1,10,100,1000 = {}",
        errs.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
    );
    if monotone && (2.0..=6.0).contains(&errs[0]) && errs[3] <= 0.1 { Ok(msg) } else { Err(msg) }
}

fn criterion_3() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    let (x0, xf) = (v(&[0.0; 5]), v(&[0.0, 1.0, 0.0, 0.0, 0.0]));
    let b = BoundarySpec::fixed(&x0, &xf);
    for lambda in [1.0, 10.0, 100.0] {
        let ctx = LagrangianContext::unconstrained(Arc::new(dynamic_unicycle()), lambda).unwrap();
        let r = run(&ctx, InitKind::LinearWithSineX, &x0, &xf, &b, 10.0, 201, el(Method::ElAghf));
        ok &= r.e_t <= 5e-3 && r.secs <= 120.0;
        notes.push(format!("lambda={lambda}: converged={} e(T)={:.2e} {:.1}s", r.converged, r.e_t, r.secs));
    }
    let msg = format!("nt=201; {}", notes.join("; "));
    if ok { Ok(msg) } else { Err(msg) }
}

fn diver_pair(params: DiverParams, lambda: f64, s_max: f64) -> (Run, Run) {
    let model: Arc<dyn SystemModel> = Arc::new(diver3(params).unwrap());
    let ctx = LagrangianContext::new(model, lambda, diver_box(lambda)).unwrap();
    let (x0, xf, b) = diver_boundary();
    let cfg = |m| SolverConfig { method: m, epsilon: 1e-4, s_max, wall_limit: 600.0, ..Default::default() };
    let e = run(&ctx, InitKind::ThetaOnly, &x0, &xf, &b, 1.0, 101, cfg(Method::ElAghf));
    let a = run(&ctx, InitKind::ThetaOnly, &x0, &xf, &b, 1.0, 101, cfg(Method::Aghf));
    (e, a)
}

fn describe(tag: &str, e: &Run, a: &Run) -> String {
    format!(
        "{tag}: EL converged={} s={:.0} e_hat={:.3e} e_viol={:.3e}, AGHF e_hat={:.3e} e_viol={:.3e}",
        e.converged, e.s, e.e_hat, e.e_viol, a.e_hat, a.e_viol
    )
}

fn criterion_4() -> Outcome {
    let (e, a) = diver_pair(DiverParams::default(), 10.0, 1000.0);
    let pass = e.e_viol <= 1e-2 && e.e_hat < a.e_hat;
    let mut msg = describe("unit params, lambda=10", &e, &a);
    if !pass {
        // context for the failure: the same problem at a larger penalty, and
        // with slender-rod link inertias at the specified penalty
        let (e2, a2) = diver_pair(DiverParams::default(), 100.0, 1000.0);
        msg.push_str(&format!(" | info {}", describe("lambda=100", &e2, &a2)));
        let rods = DiverParams { inertias: [1.0 / 12.0; 3], ..DiverParams::default() };
        let (e3, a3) = diver_pair(rods, 10.0, 1000.0);
        msg.push_str(&format!(" | info {}", describe("rod inertias, lambda=10", &e3, &a3)));
    }
    if pass { Ok(msg) } else { Err(msg) }
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let models: [(Arc<dyn SystemModel>, usize, f64); 3] = [
        (Arc::new(unicycle_const_vel()), 1, 0.5),
        (Arc::new(dynamic_unicycle()), 3, 0.5),
        (diver_unit(), 2, 1.0),
    ];
    let samples = 100;
    for (model, index, bound) in &models {
        let n = model.state_dim();
        for _ in 0..samples {
            let lambda = rng.gen_range(1.0..100.0);
            let ctx = boxed(model.clone(), lambda, *index, *bound);
            let x = random_vec(&mut rng, n, 1.5);
            let xdot = random_vec(&mut rng, n, 2.0);
            let duals = DualState { mu: random_vec(&mut rng, ctx.nc(), 1.0), mu_c: random_vec(&mut rng, 2, 0.5) };
            gradient_mismatch(&ctx, &x, &xdot, &duals)?;
        }
    }
    Ok(format!("{samples} samples x 3 models, all four partials within 1e-5 relative"))
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let model: Arc<dyn SystemModel> = if i % 2 == 0 { Arc::new(RotatingFrame) } else { Arc::new(unicycle_const_vel()) };
        let lambda = 10f64.powf(rng.gen_range(-0.3..4.0));
        let ctx = LagrangianContext::unconstrained(model, lambda).unwrap();
        let x = random_vec(&mut rng, 3, 3.0);
        let xdot = random_vec(&mut rng, 3, 3.0);
        let mu = random_vec(&mut rng, 2, 2.0);
        let a = extended_lagrangian(&ctx, &x, &xdot, &mu).unwrap();
        let b = extended_lagrangian_completed_square(&ctx, &x, &xdot, &mu).unwrap();
        worst = worst.max((a - b).abs() / a.abs().max(b.abs()).max(1.0));
    }
    let msg = format!("1000 samples, worst relative gap {worst:.2e}");
    if worst <= 1e-9 { Ok(msg) } else { Err(msg) }
}

fn criterion_7() -> Outcome {
    let mut notes = Vec::new();
    let mut ok = true;
    for lambda in [1.0, 10.0, 100.0] {
        let ctx = LagrangianContext::unconstrained(Arc::new(unicycle_const_vel()), lambda).unwrap();
        let (x0, xf) = (v(&[0.0, 0.0, 0.0]), v(&[0.0, 1.0, 0.0]));
        let mut g = initial_grid(InitKind::Linear, &x0, &xf, 5.0, 101, 2, 0).unwrap();
        for m in g.mu.iter_mut() {
            m.fill(0.2);
        }
        let u = frozen_descent(&ctx, &g, &BoundarySpec::fixed(&x0, &xf), 100)?;

        let diver = LagrangianContext::new(diver_unit(), lambda, diver_box(lambda)).unwrap();
        let (d0, d1, db) = diver_boundary();
        let mut dg = initial_grid(InitKind::ThetaOnly, &d0, &d1, 1.0, 101, 4, 2).unwrap();
        for m in dg.mu.iter_mut() {
            m.fill(0.1);
        }
        let d = frozen_descent(&diver, &dg, &db, 100)?;
        ok &= u <= 1e-9 && d <= 1e-9;
        notes.push(format!("lambda={lambda}: max relative change unicycle {u:.1e}, diver {d:.1e}"));
    }
    let msg = format!("100 accepted steps each, no action guard; {}", notes.join("; "));
    if ok { Ok(msg) } else { Err(msg) }
}

fn criterion_8() -> Outcome {
    let (ctx, coarse) = feasible_grid(51);
    let (_, fine) = feasible_grid(101);
    let rc = sup(&dual_flow_rhs(&ctx, &coarse).unwrap());
    let rf = sup(&dual_flow_rhs(&ctx, &fine).unwrap());
    let rcon = sup(&constraint_dual_flow_rhs(&ctx, &fine).unwrap());
    let ratio = rc / rf;
    let msg = format!("dual rhs {rc:.2e} (nt=51) -> {rf:.2e} (nt=101), ratio {ratio:.2}; constraint rhs {rcon:.1e}");
    if rf < 1e-3 && (3.0..5.0).contains(&ratio) && rcon < 1e-30 { Ok(msg) } else { Err(msg) }
}

fn criterion_9() -> Outcome {
    let ctx = LagrangianContext::unconstrained(Arc::new(single_integrator(2)), 10.0).unwrap();
    let (x0, xf) = (v(&[0.0, 0.0]), v(&[1.0, -2.0]));
    let b = BoundarySpec::fixed(&x0, &xf);
    let init = initial_grid(InitKind::Linear, &x0, &xf, 1.0, 101, 0, 0).unwrap();
    let mut notes = Vec::new();
    let mut ok = true;
    for min_s in [0.0, 1.0] {
        let cfg = SolverConfig { method: Method::ElAghf, min_s, ..Default::default() };
        let (_, r) = solve(&ctx, &init, &b, &cfg).unwrap();
        let near = r.s_reached >= min_s && r.s_reached <= min_s * 1.2 + 1e-12;
        ok &= r.converged && near && r.state_residual <= 1e-4 && r.mu_residual <= 1e-4;
        notes.push(format!("min_s={min_s}: s={:.3} steps={} residual={:.1e}", r.s_reached, r.steps, r.state_residual));
    }
    let msg = notes.join("; ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn criterion_10() -> Outcome {
    let diver = diver3(DiverParams::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst_skew: f64 = 0.0;
    for _ in 0..100 {
        let q = Vector3::from_fn(|_, _| rng.gen_range(-3.0..3.0));
        let qd = Vector3::from_fn(|_, _| rng.gen_range(-2.0..2.0));
        let d = diver.inertia(&q);
        if d.cholesky().is_none() {
            return Err(format!("inertia not SPD at {q:?}"));
        }
        let h = 1e-5;
        let d_dot: Matrix3<f64> = (diver.inertia(&(q + qd * h)) - diver.inertia(&(q - qd * h))) / (2.0 * h);
        let n = d_dot - diver.coriolis(&q, &qd) * 2.0;
        worst_skew = worst_skew.max((n + n.transpose()).amax());
    }

    // zero control from a tumbling, flexing start
    let x0 = v(&[0.1, 0.4, -0.3, 1.5, -0.8, 1.1]);
    let times = [0.0, 1.0];
    let (_, xs) = rollout(&diver, &DMatrix::zeros(2, 2), &times, &x0, None).unwrap();
    let (p0, p1) = (diver.angular_momentum(&x0), diver.angular_momentum(&xs[xs.len() - 1]));
    let drift = (p1 - p0).abs() / p0.abs();
    let msg = format!("100 SPD samples, max |N + N^T| {worst_skew:.1e}, momentum drift {drift:.1e} over T=1");
    if worst_skew <= 1e-9 && drift <= 1e-6 { Ok(msg) } else { Err(msg) }
}

fn criterion_11() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/unicycle.json");
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let out = dir.path().join(tag);
        let status = Command::new(env!("CARGO_BIN_EXE_heatflow"))
            .arg("run")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?
            .status;
        if status.code() != Some(0) {
            return Err(format!("run exited with {status}"));
        }
        outputs.push(out);
    }
    for f in ["report.json", "trajectory.csv"] {
        let a = std::fs::read(outputs[0].join(f)).unwrap();
        let b = std::fs::read(outputs[1].join(f)).unwrap();
        if a != b {
            return Err(format!("{f} differs between runs"));
        }
    }
    Ok("report.json and trajectory.csv byte-identical across two CLI runs".into())
}

type Criterion = (u32, &'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 11] = [
        (1, "unicycle EL-AGHF e(T) <= 5e-3", criterion_1),
        (2, "unicycle AGHF e(T) trend in lambda", criterion_2),
        (3, "dynamic unicycle EL-AGHF e(T) <= 5e-3", criterion_3),
        (4, "constrained diver EL-AGHF vs AGHF", criterion_4),
        (5, "gradient suite", criterion_5),
        (6, "two-form identity", criterion_6),
        (7, "frozen-dual action descent", criterion_7),
        (8, "feasibility fixed point", criterion_8),
        (9, "trivial stationarity", criterion_9),
        (10, "diver structure", criterion_10),
        (11, "CLI determinism", criterion_11),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = Vec::new();
    for (id, name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| format!("criterion_{id}").contains(p.as_str())) {
            continue;
        }
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {id:>2} PASS  {name} [{secs:.1}s]: {detail}"),
            Err(detail) => {
                println!("criterion {id:>2} FAIL  {name} [{secs:.1}s]: {detail}");
                failed.push(id);
            }
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
