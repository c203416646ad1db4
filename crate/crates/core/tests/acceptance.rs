//! End-to-end acceptance suite, run without the libtest harness so the
//! PASS/FAIL line of each criterion is always shown. Exits nonzero if any
//! criterion fails.

use std::path::{Path, PathBuf};
use std::process::Command as Process;
use std::time::{Duration, Instant};

use asymfix::contraction::{contraction_certificate, picard_with, prepare, Operator};
use asymfix::exponents::{ExponentProfile, FitMode};
use asymfix::family::Model;
use asymfix::grid::geometric_grid;
use asymfix::linalg::Vector;
use asymfix::pipeline::{run, run_check_stage, solve_alpha, Command};
use asymfix::problem::{CliOverrides, Problem};
use asymfix::verify::{integrate_reference, order_check};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn load(name: &str) -> Result<Problem, String> {
    Problem::load(&fixture(name), &CliOverrides::default()).map_err(|e| e.to_string())
}

fn within(label: &str, got: f64, want: f64, tol: f64) -> Result<(), String> {
    ensure!((got - want).abs() <= tol, "{label} = {got}, expected {want} ± {tol}");
    Ok(())
}

fn check_profile(prof: &ExponentProfile, want: [f64; 5], tol: f64) -> Result<(), String> {
    let got = [prof.mu, prof.s, prof.q, prof.r, prof.p];
    for (name, (e, w)) in ["mu", "s", "q", "r", "p"].iter().zip(got.iter().zip(want)) {
        within(name, e.value, w, tol)?;
    }
    Ok(())
}

fn within_budget(start: Instant, budget: Duration) -> Result<(), String> {
    let spent = start.elapsed();
    ensure!(spent <= budget, "took {spent:?}, budget {budget:?}");
    Ok(())
}

fn riccati_end_to_end() -> Outcome {
    let start = Instant::now();
    let problem = load("riccati.json")?;
    let check = run_check_stage(&problem).map_err(|e| e.to_string())?;
    let prof = &check.profile;
    check_profile(prof, [4.0, 0.0, -2.0, 2.0, -2.0], 0.05)?;
    ensure!(check.conditions.verdict, "conditions fail: {:?}", check.conditions);
    within("cond1 margin", check.conditions.cond1.margin, 1.0, 0.05)?;
    within("cond2 margin", check.conditions.cond2.margin, 2.0, 0.05)?;
    within("nu", prof.nu(), 3.0, 0.05)?;

    let alpha = 0.5;
    let run = solve_alpha(&problem, prof, &[alpha], true).map_err(|e| e.to_string())?;
    let sol = &run.solution;
    ensure!(sol.iterations <= 20, "{} Picard iterations", sol.iterations);
    ensure!(sol.max_ratio() <= 0.5, "increment ratio {}", sol.max_ratio());
    let x10 = run.assembled.x.eval(10.0).ok_or("t = 10 outside the solution grid")?[0];
    within("x(10; 0.5)", x10, 0.105263, 1e-6)?;
    within("x(10; 0.5) vs 1/(t - a)", x10, 1.0 / (10.0 - alpha), 1e-6)?;
    let reference = run.reference.as_ref().ok_or("no reference comparison")?;
    within("decay slope", reference.slope, -3.0, 0.1)?;
    within_budget(start, Duration::from_secs(10))?;
    Ok(format!(
        "{} iterations, x(10) = {x10:.9}, slope {:.4}, {:.2?}",
        sol.iterations,
        reference.slope,
        start.elapsed()
    ))
}

fn oscillator_end_to_end() -> Outcome {
    let start = Instant::now();
    let problem = load("oscillator.json")?;
    ensure!(
        problem.settings.profile.mode == FitMode::Envelope,
        "oscillator profile is not envelope-fitted"
    );
    let check = run_check_stage(&problem).map_err(|e| e.to_string())?;
    let prof = &check.profile;
    check_profile(prof, [3.0, 0.0, 0.0, 0.0, 0.0], 0.1)?;
    within("nu", prof.nu(), 2.0, 0.1)?;

    let grid = problem.model.fam.compact.tensor_grid(3);
    ensure!(
        problem.settings.sweep_alphas == grid,
        "sweep grid is not the 3x3 tensor grid"
    );
    let out = run(&problem, Command::Sweep, None);
    let report = &out.report;
    ensure!(report.exit_code == 0, "sweep exit code {}: {:?}", report.exit_code, report.message);
    let uni = report.uniformity.as_ref().ok_or("no uniformity section")?;
    ensure!(uni.samples.len() == 9, "{} samples", uni.samples.len());
    ensure!(uni.constant_spread.0 <= 10.0, "constant ratio {}", uni.constant_spread.0);
    let mut worst = f64::NEG_INFINITY;
    for sol in &report.solutions {
        ensure!(sol.error.is_none(), "alpha {:?}: {:?}", sol.alpha, sol.error);
        let picard = sol.picard.as_ref().ok_or("missing Picard section")?;
        ensure!(
            picard.final_delta.0 <= problem.settings.contraction.picard_tol,
            "Picard did not converge at {:?}",
            sol.alpha
        );
        let reference = sol.reference.as_ref().ok_or("missing reference section")?;
        ensure!(
            reference.slope.0 <= -1.85,
            "slope {} at {:?}",
            reference.slope.0,
            sol.alpha
        );
        worst = worst.max(reference.slope.0);
    }
    within_budget(start, Duration::from_secs(60))?;
    Ok(format!(
        "worst slope {worst:.4}, constant ratio {:.3}, {:.2?}",
        uni.constant_spread.0,
        start.elapsed()
    ))
}

fn pendulum_equilibrium() -> Outcome {
    let problem = load("pendulum-eq.json")?;
    let model = &problem.model;
    let grid = geometric_grid(model.sys.t0, model.sys.t0 * 1e3, 20).map_err(|e| e.to_string())?;
    for alpha in model.fam.compact.tensor_grid(3) {
        for &t in &grid {
            let y = model.residual(t, &alpha).map_err(|e| e.to_string())?;
            ensure!(y.amax() <= f64::EPSILON, "|Y({t}, {alpha:?})| = {}", y.amax());
        }
    }
    let origin = Vector::zeros(2);
    let t0 = model.sys.t0;
    let traj = integrate_reference(&model.sys, t0, &origin, t0 + 1e3, 1e-10, 1e-12)
        .map_err(|e| e.to_string())?;
    let drift = traj.states.iter().map(|s| s.amax()).fold(0.0, f64::max);
    ensure!(drift <= 1e-12, "trajectory drifts to {drift}");
    Ok(format!("max drift {drift:e}"))
}

fn certificate_on(name: &str, alpha: &[f64]) -> Result<String, String> {
    let problem = load(name)?;
    let check = run_check_stage(&problem).map_err(|e| e.to_string())?;
    let opts = &problem.settings.contraction;
    let setup = prepare(&problem.model, &check.profile, alpha, opts).map_err(|e| e.to_string())?;
    let op = Operator::new(&problem.model, &check.profile, &setup, alpha, opts)
        .map_err(|e| e.to_string())?;
    let cert = contraction_certificate(&op, &setup, 20, 17).map_err(|e| e.to_string())?;
    ensure!(cert.pairs == 20, "{} pairs", cert.pairs);
    ensure!(cert.bound < 1.0, "{name}: L0 + L_K = {}", cert.bound);
    ensure!(
        cert.max_ratio <= cert.bound,
        "{name}: ratio {} exceeds L0 + L_K = {}",
        cert.max_ratio,
        cert.bound
    );
    // The certified operator is the one the solver iterates.
    picard_with(&op, &setup, alpha).map_err(|e| e.to_string())?;
    Ok(format!("{name} ratio {:.3e} <= {:.3e}", cert.max_ratio, cert.bound))
}

fn contraction_certificate_holds() -> Outcome {
    let a = certificate_on("riccati.json", &[0.5])?;
    let b = certificate_on("oscillator.json", &[1.0, -0.5])?;
    Ok(format!("{a}; {b}"))
}

fn identity_defect(model: &Model, t: f64, alpha: &[f64]) -> Result<f64, String> {
    let e = |e: asymfix::expr::ExprError| e.to_string();
    let dj = model.jacobian_time_derivative(t, alpha).map_err(e)?;
    let m0 = model.linearization(t, alpha).map_err(e)?;
    let j = model.jacobian(t, alpha).map_err(e)?;
    let dy = model.residual_param_derivative(t, alpha).map_err(e)?;
    Ok((dj - m0 * j * model.sys.time_factor(t) - dy).amax())
}

const FIXTURES: [&str; 5] = [
    "riccati.json",
    "oscillator.json",
    "pendulum-eq.json",
    "failing-boundary.json",
    "exact-family.json",
];

fn jacobian_identity() -> Outcome {
    let mut worst = 0.0f64;
    for name in FIXTURES {
        let problem = load(name)?;
        let model = &problem.model;
        let t0 = model.sys.t0;
        let grid: Vec<f64> = (0..50).map(|i| t0 * 1e3f64.powf(i as f64 / 49.0)).collect();
        for alpha in model.fam.compact.tensor_grid(3) {
            for &t in &grid {
                let d = identity_defect(model, t, &alpha)?;
                ensure!(d <= 1e-8, "{name}: defect {d:e} at t = {t}, alpha {alpha:?}");
                worst = worst.max(d);
            }
        }
    }
    Ok(format!("max defect {worst:e} over {} fixtures", FIXTURES.len()))
}

fn exponent_relations() -> Outcome {
    let mut checked = Vec::new();
    for name in FIXTURES {
        let problem = load(name)?;
        match run_check_stage(&problem) {
            Ok(check) => {
                let rel = check.profile.relations();
                ensure!(rel.p_le_qn.holds, "{name}: p <= qn fails: {:?}", rel.p_le_qn);
                ensure!(
                    rel.r_le_q_n1_minus_p.holds,
                    "{name}: r <= q(n-1) - p fails: {:?}",
                    rel.r_le_q_n1_minus_p
                );
                checked.push(name);
            }
            // The equilibrium family has det J ≡ 0, so p, q, r do not exist.
            Err(_) if name == "pendulum-eq.json" => {}
            Err(e) => return Err(format!("{name}: {e}")),
        }
    }
    Ok(format!("holds on {}", checked.join(", ")))
}

fn boundary_fixture_fails() -> Outcome {
    let problem = load("failing-boundary.json")?;
    let out = run(&problem, Command::Check, None);
    let cond = out.report.conditions.as_ref().ok_or("no conditions section")?;
    ensure!(!cond.verdict, "conditions reported as holding");
    ensure!(out.report.exit_code == 2, "exit code {}", out.report.exit_code);
    let status = Process::new(env!("CARGO_BIN_EXE_asymfix"))
        .args(["check", fixture("failing-boundary.json").to_str().unwrap()])
        .output()
        .map_err(|e| e.to_string())?
        .status;
    ensure!(status.code() == Some(2), "binary exit status {status}");
    Ok(format!("margin {:e}, exit code 2", cond.cond1.margin.0))
}

fn integrator_order() -> Outcome {
    let report = order_check(1e-4, 24).map_err(|e| e.to_string())?;
    ensure!(report.observed_order >= 4.0, "observed order {}", report.observed_order);
    ensure!(report.fixed_step_ratio >= 16.0, "fixed-step halving ratio {}", report.fixed_step_ratio);
    Ok(format!(
        "observed order {:.3}, fixed-step halving ratio {:.2}",
        report.observed_order, report.fixed_step_ratio
    ))
}

fn sweep_is_deterministic() -> Outcome {
    let dirs = [tempfile::tempdir(), tempfile::tempdir()];
    let mut reports = Vec::new();
    for dir in &dirs {
        let dir = dir.as_ref().map_err(|e| e.to_string())?;
        let status = Process::new(env!("CARGO_BIN_EXE_asymfix"))
            .args(["sweep", fixture("riccati.json").to_str().unwrap(), "--out"])
            .arg(dir.path())
            .output()
            .map_err(|e| e.to_string())?
            .status;
        ensure!(status.success(), "sweep exited with {status}");
        reports.push(std::fs::read(dir.path().join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure!(reports[0] == reports[1], "reports differ");
    Ok(format!("{} identical bytes", reports[0].len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("1 riccati end to end", riccati_end_to_end),
        ("2 oscillator end to end", oscillator_end_to_end),
        ("3 pendulum equilibrium", pendulum_equilibrium),
        ("4 contraction certificate", contraction_certificate_holds),
        ("5 jacobian identity", jacobian_identity),
        ("6 exponent relations", exponent_relations),
        ("7 boundary fixture fails", boundary_fixture_fails),
        ("8 integrator order", integrator_order),
        ("9 deterministic sweep", sweep_is_deterministic),
    ];
    let mut failed = Vec::new();
    for (name, criterion) in criteria {
        match criterion() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                println!("FAIL criterion {name}: {why}");
                failed.push(name);
            }
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
