//! Orchestration of the four commands. Every run produces a [`Report`];
//! failures are recorded in it rather than lost.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::contraction::{
    assemble, picard_solve, prepare, Assembled, ContractionError, ContractionSetup,
    RemainderSolution,
};
use crate::exponents::{check_conditions, profile, ConditionReport, ExponentError, ExponentProfile};
use crate::family::FamilyError;
use crate::problem::Problem;
use crate::report::{
    fmt_real, ConditionsReport, ReferenceReport, RelationsReport, RemainderReport,
    Report, SettingsReport, SetupReport, SolutionReport, UniformityOut, Verdict, Real,
};
use crate::verify::{compare_decay, judge_uniformity, AlphaOutcome, DecayComparison, VerifyError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Check,
    Solve,
    Verify,
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Solve => "solve",
            Command::Verify => "verify",
            Command::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PipelineError {
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Family(#[from] FamilyError),
    #[error(transparent)]
    Contraction(#[from] ContractionError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("{0}")]
    Precondition(String),
}

pub struct CheckOutcome {
    pub profile: ExponentProfile,
    pub conditions: ConditionReport,
    pub family_bound: f64,
}

/// Exponent profile and sufficient conditions.
pub fn run_check_stage(problem: &Problem) -> Result<CheckOutcome, PipelineError> {
    let alphas = problem.fit_alphas();
    let family_bound = problem.model.check_bounded(&alphas)?;
    let prof = profile(&problem.model, &alphas, &problem.settings.profile)?;
    let conditions = check_conditions(&prof);
    Ok(CheckOutcome {
        profile: prof,
        conditions,
        family_bound,
    })
}

pub struct AlphaRun {
    pub alpha: Vec<f64>,
    pub setup: ContractionSetup,
    pub solution: RemainderSolution,
    pub assembled: Assembled,
    pub reference: Option<DecayComparison>,
}

/// Threshold, fixed point and assembled solution for one parameter value,
/// optionally checked against the reference integrator.
pub fn solve_alpha(
    problem: &Problem,
    prof: &ExponentProfile,
    alpha: &[f64],
    with_reference: bool,
) -> Result<AlphaRun, PipelineError> {
    let model = &problem.model;
    let opts = &problem.settings.contraction;
    let setup = prepare(model, prof, alpha, opts)?;
    let solution = picard_solve(model, prof, &setup, alpha, opts)?;
    let assembled = assemble(model, alpha, &solution, prof.nu())?;
    let reference = if with_reference {
        Some(compare_decay(
            model,
            alpha,
            &assembled,
            problem.settings.rtol,
            problem.settings.atol,
        )?)
    } else {
        None
    };
    Ok(AlphaRun {
        alpha: alpha.to_vec(),
        setup,
        solution,
        assembled,
        reference,
    })
}

fn settings_report(problem: &Problem) -> SettingsReport {
    let s = &problem.settings;
    SettingsReport {
        fit_window: [Real(s.profile.window.start), Real(s.profile.window.end)],
        fit_points: s.profile.window.points,
        fit_mode: s.profile.mode,
        phase_scale: problem.file.phase_scale.map(Real),
        alpha_grid: s.alpha_grid,
        points_per_decade: s.contraction.points_per_decade,
        tmax_factor: Real(s.contraction.tmax_factor),
        picard_tol: Real(s.contraction.picard_tol),
        max_iters: s.contraction.max_iters,
        rtol: Real(s.rtol),
        atol: Real(s.atol),
        seed: s.contraction.seed,
    }
}

fn solution_report(run: &AlphaRun, nu: f64) -> SolutionReport {
    let mut out = SolutionReport::new(&run.alpha);
    out.setup = Some(SetupReport::from(&run.setup));
    out.picard = Some((&run.solution).into());
    let fit = run.assembled.decay_fit;
    out.remainder = Some(RemainderReport {
        nu: Real(nu),
        slope: Real(fit.slope),
        half_width: Real(fit.half_width),
        fit_mode: fit.mode,
        decay_constant: Real(run.assembled.decay_constant),
    });
    out.reference = run.reference.as_ref().map(|d| {
        let threshold = -nu + crate::verify::SLOPE_SLACK;
        ReferenceReport {
            slope: Real(d.slope),
            constant: Real(d.constant),
            slope_threshold: Real(threshold),
            passes: d.slope <= threshold,
            max_difference: Real(d.max_difference),
            assembled_gap: Real(d.assembled_gap),
            rtol: Real(d.rtol),
            atol: Real(d.atol),
            accepted_steps: d.stats.accepted,
            rejected_steps: d.stats.rejected,
            evaluations: d.stats.evaluations,
        }
    });
    out
}

/// CSV of one solution: `t, X_1..X_n, R_1..R_n, |Y|, |R|, t^nu|R|`.
pub fn solution_csv(problem: &Problem, run: &AlphaRun, nu: f64) -> Result<String, PipelineError> {
    let n = problem.model.n();
    let mut out = String::from("t");
    for i in 1..=n {
        let _ = write!(out, ",X_{i}");
    }
    for i in 1..=n {
        let _ = write!(out, ",R_{i}");
    }
    out.push_str(",|Y|,|R|,t^nu|R|\n");
    let asm = &run.assembled;
    for (i, &t) in asm.r.grid().iter().enumerate() {
        let y = problem
            .model
            .residual(t, &run.alpha)
            .map_err(FamilyError::from)?;
        let r = &asm.r.values()[i];
        let rn = r.norm();
        let weighted = if rn == 0.0 { 0.0 } else { t.powf(nu) * rn };
        out.push_str(&fmt_real(t));
        for v in asm.family.values()[i].iter().chain(r.iter()) {
            out.push(',');
            out.push_str(&fmt_real(*v));
        }
        for v in [y.norm(), rn, weighted] {
            out.push(',');
            out.push_str(&fmt_real(v));
        }
        out.push('\n');
    }
    Ok(out)
}

pub struct RunOutput {
    pub report: Report,
    /// Present for `solve` when the solution was built.
    pub csv: Option<String>,
}

/// Runs `command`. `alphas` overrides the parameter values solved for.
pub fn run(problem: &Problem, command: Command, alphas: Option<Vec<Vec<f64>>>) -> RunOutput {
    let mut report = Report::new(command.name(), &problem.file.name);
    report.settings = Some(settings_report(problem));
    let mut csv = None;
    let check = match run_check_stage(problem) {
        Ok(c) => c,
        Err(e) => {
            report.message = Some(e.to_string());
            report.finish(Verdict::Error);
            return RunOutput { report, csv };
        }
    };
    let prof = &check.profile;
    let nu = prof.nu();
    report.profile = Some(prof.into());
    report.conditions = Some(ConditionsReport {
        cond1: check.conditions.cond1.into(),
        cond2: check.conditions.cond2.into(),
        verdict: check.conditions.verdict,
    });
    let rel = prof.relations();
    report.relations = Some(RelationsReport {
        p_le_qn: rel.p_le_qn.into(),
        r_le_q_n1_minus_p: rel.r_le_q_n1_minus_p.into(),
        holds: rel.holds(),
    });
    report.family_bound = Some(Real(check.family_bound));
    if !check.conditions.verdict {
        report.message = Some("sufficient conditions fail; nothing is constructed".into());
        report.finish(Verdict::Fail);
        return RunOutput { report, csv };
    }
    if command == Command::Check {
        report.finish(Verdict::Pass);
        return RunOutput { report, csv };
    }

    let targets = match (command, alphas) {
        (_, Some(list)) => list,
        (Command::Solve, None) => vec![problem.model.fam.compact.center()],
        (_, None) => problem.settings.sweep_alphas.clone(),
    };
    if command == Command::Sweep && targets.len() < 5 {
        report.message = Some(format!(
            "a sweep needs at least 5 parameter samples, got {}",
            targets.len()
        ));
        report.finish(Verdict::Error);
        return RunOutput { report, csv };
    }
    if let Some(bad) = targets.iter().find(|a| a.len() != problem.model.n()) {
        report.message = Some(format!(
            "alpha {bad:?} has {} components, expected {}",
            bad.len(),
            problem.model.n()
        ));
        report.finish(Verdict::Error);
        return RunOutput { report, csv };
    }
    let with_reference = command != Command::Solve;
    let runs: Vec<Result<AlphaRun, PipelineError>> = targets
        .par_iter()
        .map(|a| solve_alpha(problem, prof, a, with_reference))
        .collect();

    if command == Command::Solve {
        match &runs[0] {
            Ok(run) => {
                report.solutions.push(solution_report(run, nu));
                match solution_csv(problem, run, nu) {
                    Ok(text) => csv = Some(text),
                    Err(e) => {
                        report.message = Some(e.to_string());
                        report.finish(Verdict::Error);
                        return RunOutput { report, csv };
                    }
                }
                report.finish(Verdict::Pass);
            }
            Err(e) => {
                report.solutions.push(SolutionReport::failed(&targets[0], e.to_string()));
                report.message = Some(e.to_string());
                report.finish(Verdict::Error);
            }
        }
        return RunOutput { report, csv };
    }

    let mut outcomes = Vec::with_capacity(runs.len());
    for (alpha, res) in targets.iter().zip(&runs) {
        match res {
            Ok(run) => {
                report.solutions.push(solution_report(run, nu));
                let d = run.reference.as_ref().expect("reference requested");
                outcomes.push(AlphaOutcome::new(alpha, Ok(d), nu));
            }
            Err(e) => {
                report.solutions.push(SolutionReport::failed(alpha, e.to_string()));
                outcomes.push(AlphaOutcome::new(alpha, Err(e.to_string()), nu));
            }
        }
    }
    let all_pass = outcomes.iter().all(|o| o.passes);
    let verdict = if command == Command::Sweep {
        let uni = judge_uniformity(nu, outcomes);
        let pass = uni.verdict;
        report.uniformity = Some(UniformityOut::from(&uni));
        pass
    } else {
        all_pass
    };
    report.finish(if verdict { Verdict::Pass } else { Verdict::Fail });
    RunOutput { report, csv }
}
