//! Reports in two forms: a JSON document and a plain-text summary. Every
//! number in the summary is formatted exactly as in the JSON.

use std::fmt::Write as _;

use serde::{Serialize, Serializer};

/// A real that serializes non-finite values as the strings `"inf"`,
/// `"-inf"` and `"nan"` instead of `null`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Real(pub f64);

impl Real {
    pub fn text(&self) -> String {
        fmt_real(self.0)
    }
}

impl From<f64> for Real {
    fn from(v: f64) -> Self {
        Real(v)
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str(&fmt_real(self.0))
        }
    }
}

/// Shortest round-trip representation, identical to the JSON encoding.
pub fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        ryu::Buffer::new().format_finite(v).to_string()
    }
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

fn fmt_vec(v: &[Real]) -> String {
    let parts: Vec<String> = v.iter().map(Real::text).collect();
    format!("({})", parts.join(", "))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Error,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Error => 1,
            Verdict::Fail => 2,
        }
    }

    fn word(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Error => "error",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SettingsReport {
    pub fit_window: [Real; 2],
    pub fit_points: usize,
    pub fit_mode: crate::exponents::FitMode,
    pub phase_scale: Option<Real>,
    pub alpha_grid: usize,
    pub points_per_decade: usize,
    pub tmax_factor: Real,
    pub picard_tol: Real,
    pub max_iters: usize,
    pub rtol: Real,
    pub atol: Real,
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct EstimateReport {
    pub value: Real,
    pub half_width: Real,
}

impl From<crate::exponents::Estimate> for EstimateReport {
    fn from(e: crate::exponents::Estimate) -> Self {
        EstimateReport {
            value: Real(e.value),
            half_width: Real(e.half_width),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProfileReport {
    pub n: usize,
    pub k: Real,
    pub mu: EstimateReport,
    pub s: EstimateReport,
    pub q: EstimateReport,
    pub r: EstimateReport,
    pub p: EstimateReport,
    pub a: Real,
    pub lambda: Real,
    pub nu: Real,
}

impl From<&crate::exponents::ExponentProfile> for ProfileReport {
    fn from(p: &crate::exponents::ExponentProfile) -> Self {
        ProfileReport {
            n: p.n,
            k: Real(p.k),
            mu: p.mu.into(),
            s: p.s.into(),
            q: p.q.into(),
            r: p.r.into(),
            p: p.p.into(),
            a: Real(p.a),
            lambda: Real(p.lambda()),
            nu: Real(p.nu()),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConditionOut {
    pub margin: Real,
    pub conservative_margin: Real,
    pub holds: bool,
}

impl From<crate::exponents::Condition> for ConditionOut {
    fn from(c: crate::exponents::Condition) -> Self {
        ConditionOut {
            margin: Real(c.margin),
            conservative_margin: Real(c.conservative_margin),
            holds: c.holds,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ConditionsReport {
    pub cond1: ConditionOut,
    pub cond2: ConditionOut,
    pub verdict: bool,
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct RelationOut {
    pub lhs: Real,
    pub rhs: Real,
    pub tol: Real,
    pub holds: bool,
}

impl From<crate::exponents::Relation> for RelationOut {
    fn from(r: crate::exponents::Relation) -> Self {
        RelationOut {
            lhs: Real(r.lhs),
            rhs: Real(r.rhs),
            tol: Real(r.tol),
            holds: r.holds,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RelationsReport {
    pub p_le_qn: RelationOut,
    pub r_le_q_n1_minus_p: RelationOut,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SetupReport {
    pub t: Real,
    pub t_max: Real,
    pub lambda: Real,
    pub k_radius: Real,
    pub m_k: Real,
    pub m1: Real,
    pub l_k: Real,
    pub l0: Real,
}

impl From<&crate::contraction::ContractionSetup> for SetupReport {
    fn from(s: &crate::contraction::ContractionSetup) -> Self {
        SetupReport {
            t: Real(s.t),
            t_max: Real(s.t_max),
            lambda: Real(s.lambda),
            k_radius: Real(s.k_radius),
            m_k: Real(s.m_k),
            m1: Real(s.m1),
            l_k: Real(s.l_k),
            l0: Real(s.l0),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct PicardReport {
    pub iterations: usize,
    pub max_ratio: Real,
    pub final_delta: Real,
    pub tail_bound: Real,
    pub c_norm: Real,
    pub quadrature_nodes: usize,
    pub increments: Vec<Real>,
}

impl From<&crate::contraction::RemainderSolution> for PicardReport {
    fn from(s: &crate::contraction::RemainderSolution) -> Self {
        PicardReport {
            iterations: s.iterations,
            max_ratio: Real(s.max_ratio()),
            final_delta: Real(s.final_delta),
            tail_bound: Real(s.tail_bound),
            c_norm: Real(s.c_norm),
            quadrature_nodes: s.quadrature_nodes,
            increments: reals(&s.increments),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RemainderReport {
    pub nu: Real,
    /// Fitted slope of `|R|` over the top two decades.
    pub slope: Real,
    pub half_width: Real,
    pub fit_mode: crate::exponents::FitMode,
    /// `max t^ν |R|`.
    pub decay_constant: Real,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReferenceReport {
    pub slope: Real,
    pub constant: Real,
    pub slope_threshold: Real,
    pub passes: bool,
    pub max_difference: Real,
    pub assembled_gap: Real,
    pub rtol: Real,
    pub atol: Real,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    pub evaluations: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolutionReport {
    pub alpha: Vec<Real>,
    pub error: Option<String>,
    pub setup: Option<SetupReport>,
    pub picard: Option<PicardReport>,
    pub remainder: Option<RemainderReport>,
    pub reference: Option<ReferenceReport>,
}

impl SolutionReport {
    pub fn failed(alpha: &[f64], error: String) -> Self {
        SolutionReport {
            alpha: reals(alpha),
            error: Some(error),
            setup: None,
            picard: None,
            remainder: None,
            reference: None,
        }
    }

    pub fn new(alpha: &[f64]) -> Self {
        SolutionReport {
            alpha: reals(alpha),
            error: None,
            setup: None,
            picard: None,
            remainder: None,
            reference: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleOut {
    pub alpha: Vec<Real>,
    pub slope: Option<Real>,
    pub constant: Option<Real>,
    pub passes: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformityOut {
    pub nu: Real,
    pub slope_threshold: Real,
    pub max_constant: Real,
    pub median_constant: Real,
    pub constant_spread: Real,
    pub spread_limit: Real,
    pub verdict: bool,
    pub samples: Vec<SampleOut>,
}

impl From<&crate::verify::UniformityReport> for UniformityOut {
    fn from(u: &crate::verify::UniformityReport) -> Self {
        UniformityOut {
            nu: Real(u.nu),
            slope_threshold: Real(-u.nu + crate::verify::SLOPE_SLACK),
            max_constant: Real(u.max_constant),
            median_constant: Real(u.median_constant),
            constant_spread: Real(u.constant_spread),
            spread_limit: Real(crate::verify::CONSTANT_SPREAD),
            verdict: u.verdict,
            samples: u
                .samples
                .iter()
                .map(|s| SampleOut {
                    alpha: reals(&s.alpha),
                    slope: s.slope.map(Real),
                    constant: s.constant.map(Real),
                    passes: s.passes,
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub problem: String,
    pub verdict: Verdict,
    pub exit_code: i32,
    pub message: Option<String>,
    pub settings: Option<SettingsReport>,
    pub profile: Option<ProfileReport>,
    pub conditions: Option<ConditionsReport>,
    pub relations: Option<RelationsReport>,
    /// Sampled bound on `|X|` over the compact.
    pub family_bound: Option<Real>,
    pub solutions: Vec<SolutionReport>,
    pub uniformity: Option<UniformityOut>,
}

impl Report {
    pub fn new(command: &str, problem: &str) -> Self {
        Report {
            command: command.into(),
            problem: problem.into(),
            verdict: Verdict::Error,
            exit_code: 1,
            message: None,
            settings: None,
            profile: None,
            conditions: None,
            relations: None,
            family_bound: None,
            solutions: Vec::new(),
            uniformity: None,
        }
    }

    pub fn verdict_word(&self) -> &'static str {
        self.verdict.word()
    }

    pub fn finish(&mut self, verdict: Verdict) {
        self.verdict = verdict;
        self.exit_code = verdict.exit_code();
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let w = &mut out;
        let _ = writeln!(w, "{} {}: {}", self.command, self.problem, self.verdict.word());
        let _ = writeln!(w, "exit code {}", self.exit_code);
        if let Some(m) = &self.message {
            let _ = writeln!(w, "{m}");
        }
        if let Some(s) = &self.settings {
            let _ = writeln!(
                w,
                "\nsettings: fit window [{}, {}] with {} points, points per decade {}, T_max factor {}, rtol {}, atol {}, seed {}",
                s.fit_window[0].text(),
                s.fit_window[1].text(),
                s.fit_points,
                s.points_per_decade,
                s.tmax_factor.text(),
                s.rtol.text(),
                s.atol.text(),
                s.seed
            );
        }
        if let Some(p) = &self.profile {
            let _ = writeln!(w, "\nexponents");
            for (name, e) in [("mu", p.mu), ("s", p.s), ("q", p.q), ("r", p.r), ("p", p.p)] {
                let _ = writeln!(
                    w,
                    "  {name:<6} {} ± {}",
                    e.value.text(),
                    e.half_width.text()
                );
            }
            let _ = writeln!(w, "  {:<6} {}", "a", p.a.text());
            let _ = writeln!(w, "  {:<6} {}", "lambda", p.lambda.text());
            let _ = writeln!(w, "  {:<6} {}", "nu", p.nu.text());
        }
        if let Some(c) = &self.conditions {
            let _ = writeln!(w, "\nconditions");
            for (name, cond) in [("cond1", c.cond1), ("cond2", c.cond2)] {
                let _ = writeln!(
                    w,
                    "  {name:<6} margin {}, conservative {}: {}",
                    cond.margin.text(),
                    cond.conservative_margin.text(),
                    if cond.holds { "holds" } else { "fails" }
                );
            }
        }
        if let Some(r) = &self.relations {
            let _ = writeln!(w, "\nrelations");
            for (name, rel) in [("p_le_qn", r.p_le_qn), ("r_le_q_n1_minus_p", r.r_le_q_n1_minus_p)] {
                let _ = writeln!(
                    w,
                    "  {name:<17} {} vs {} (tol {}): {}",
                    rel.lhs.text(),
                    rel.rhs.text(),
                    rel.tol.text(),
                    if rel.holds { "holds" } else { "fails" }
                );
            }
        }
        if let Some(b) = &self.family_bound {
            let _ = writeln!(w, "\nsampled bound on |X|: {}", b.text());
        }
        for sol in &self.solutions {
            let _ = writeln!(w, "\nalpha = {}", fmt_vec(&sol.alpha));
            if let Some(e) = &sol.error {
                let _ = writeln!(w, "  error: {e}");
            }
            if let Some(s) = &sol.setup {
                let _ = writeln!(
                    w,
                    "  T {}, T_max {}, K {}, M_K {}, M1 {}, L_K {}, L0 {}",
                    s.t.text(),
                    s.t_max.text(),
                    s.k_radius.text(),
                    s.m_k.text(),
                    s.m1.text(),
                    s.l_k.text(),
                    s.l0.text()
                );
            }
            if let Some(p) = &sol.picard {
                let _ = writeln!(
                    w,
                    "  Picard: {} iterations, max ratio {}, final increment {}, tail bound {}, |C| {}",
                    p.iterations,
                    p.max_ratio.text(),
                    p.final_delta.text(),
                    p.tail_bound.text(),
                    p.c_norm.text()
                );
            }
            if let Some(r) = &sol.remainder {
                let _ = writeln!(
                    w,
                    "  remainder slope {} ± {}, max t^nu|R| {}",
                    r.slope.text(),
                    r.half_width.text(),
                    r.decay_constant.text()
                );
            }
            if let Some(r) = &sol.reference {
                let _ = writeln!(
                    w,
                    "  reference slope {} (threshold {}), constant {}: {}",
                    r.slope.text(),
                    r.slope_threshold.text(),
                    r.constant.text(),
                    if r.passes { "pass" } else { "fail" }
                );
            }
        }
        if let Some(u) = &self.uniformity {
            let _ = writeln!(
                w,
                "\nuniformity: max constant {}, median {}, spread {} (limit {}): {}",
                u.max_constant.text(),
                u.median_constant.text(),
                u.constant_spread.text(),
                u.spread_limit.text(),
                if u.verdict { "pass" } else { "fail" }
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_finite_reals_are_strings() {
        let v = serde_json::to_string(&vec![Real(1.5), Real(f64::INFINITY), Real(f64::NEG_INFINITY)])
            .unwrap();
        assert_eq!(v, r#"[1.5,"inf","-inf"]"#);
        assert_eq!(fmt_real(1e-9), serde_json::to_string(&1e-9).unwrap());
        assert_eq!(fmt_real(4.0), "4.0");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(Verdict::Pass.exit_code(), 0);
        assert_eq!(Verdict::Error.exit_code(), 1);
        assert_eq!(Verdict::Fail.exit_code(), 2);
    }
}
