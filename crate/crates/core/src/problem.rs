//! Problem files: a JSON document naming the system, the family, the
//! parameter boxes and optional numerical overrides.
//!
//! ```json
//! {
//!   "name": "riccati", "n": 1, "k": 0, "t0": 1,
//!   "f": ["-x1^2"], "X": ["1/t + a1/t^2"],
//!   "A0": [[-2, 2]], "compact": [[-1, 1]]
//! }
//! ```

use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::contraction::ContractionOptions;
use crate::exponents::{Density, FitMode, FitWindow, ProfileOptions};
use crate::expr::{parse, Expr};
use crate::family::{AsymptoticFamily, FamilyError, Model, ParamBox, SystemDef};
use crate::quadrature::QuadratureSpec;
use crate::verify::{DEFAULT_ATOL, DEFAULT_RTOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}, column {column}: {message}")]
    Json {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: impl Into<String>, message: impl Into<String>) -> ProblemError {
    ProblemError::Invalid {
        field: field.into(),
        message: message.into(),
    }
}

#[derive(Clone, Debug, Default, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    pub fit_window: Option<[f64; 2]>,
    pub fit_points: Option<usize>,
    pub fit_mode: Option<FitMode>,
    pub points_per_decade: Option<usize>,
    pub tmax_factor: Option<f64>,
    pub picard_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub rtol: Option<f64>,
    pub atol: Option<f64>,
    /// Points per axis of the parameter grid used for exponent fitting.
    pub alpha_grid: Option<usize>,
    pub sweep_alphas: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub name: String,
    pub n: usize,
    pub k: f64,
    pub t0: f64,
    pub f: Vec<String>,
    #[serde(rename = "X")]
    pub x: Vec<String>,
    #[serde(rename = "A0")]
    pub a0: Vec<[f64; 2]>,
    pub compact: Vec<[f64; 2]>,
    /// Angular frequency of the fastest oscillation in `X`, if any.
    #[serde(default)]
    pub phase_scale: Option<f64>,
    #[serde(default)]
    pub domain_hint: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub overrides: Overrides,
}

impl ProblemFile {
    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        serde_json::from_str(text).map_err(|e| ProblemError::Json {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ProblemError> {
        let text = std::fs::read_to_string(path).map_err(|e| ProblemError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_json(&text)
    }
}

/// Command-line adjustments applied on top of the file's overrides.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CliOverrides {
    pub seed: Option<u64>,
    pub tmax_factor: Option<f64>,
    pub points_per_decade: Option<usize>,
}

/// Fully resolved numerical settings.
#[derive(Clone, Debug)]
pub struct Settings {
    pub profile: ProfileOptions,
    pub contraction: ContractionOptions,
    pub rtol: f64,
    pub atol: f64,
    pub alpha_grid: usize,
    pub sweep_alphas: Vec<Vec<f64>>,
}

#[derive(Debug)]
pub struct Problem {
    pub file: ProblemFile,
    pub model: Model,
    pub settings: Settings,
}

fn parse_all(field: &str, sources: &[String], n: usize) -> Result<Vec<Expr>, ProblemError> {
    if sources.len() != n {
        return Err(invalid(
            field,
            format!("expected {n} expressions, got {}", sources.len()),
        ));
    }
    sources
        .iter()
        .enumerate()
        .map(|(i, s)| parse(s, n).map_err(|e| invalid(format!("{field}[{i}]"), e.to_string())))
        .collect()
}

fn param_box(field: &str, bounds: &[[f64; 2]], n: usize) -> Result<ParamBox, ProblemError> {
    if bounds.len() != n {
        return Err(invalid(
            field,
            format!("expected {n} intervals, got {}", bounds.len()),
        ));
    }
    for (i, [lo, hi]) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid(
                format!("{field}[{i}]"),
                format!("[{lo}, {hi}] is not an interval"),
            ));
        }
    }
    Ok(ParamBox::new(bounds.iter().map(|[a, b]| (*a, *b)).collect()))
}

fn positive(field: &str, v: f64) -> Result<f64, ProblemError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(field, format!("{v} must be positive")))
    }
}

impl Problem {
    pub fn load(path: &Path, cli: &CliOverrides) -> Result<Self, ProblemError> {
        Self::build(ProblemFile::load(path)?, cli)
    }

    pub fn build(file: ProblemFile, cli: &CliOverrides) -> Result<Self, ProblemError> {
        let n = file.n;
        if n == 0 {
            return Err(invalid("n", "must be at least 1"));
        }
        let f = parse_all("f", &file.f, n)?;
        let x = parse_all("X", &file.x, n)?;
        let a0 = param_box("A0", &file.a0, n)?;
        let compact = param_box("compact", &file.compact, n)?;
        let hint = file
            .domain_hint
            .as_ref()
            .map(|h| param_box("domain_hint", h, n))
            .transpose()?;
        let sys = SystemDef::new(n, file.k, f, file.t0, hint).map_err(|e| match e {
            FamilyError::InvalidSystem(m) => invalid("system", m),
            other => invalid("system", other.to_string()),
        })?;
        let fam = AsymptoticFamily::new(x, a0, compact).map_err(|e| match e {
            FamilyError::InvalidFamily(m) => invalid("family", m),
            other => invalid("family", other.to_string()),
        })?;
        let model = Model::new(sys, fam).map_err(|e| invalid("family", e.to_string()))?;
        let settings = Self::settings(&file, &model, cli)?;
        Ok(Problem {
            file,
            model,
            settings,
        })
    }

    fn settings(
        file: &ProblemFile,
        model: &Model,
        cli: &CliOverrides,
    ) -> Result<Settings, ProblemError> {
        let o = &file.overrides;
        let t0 = file.t0;
        let [start, end] = o.fit_window.unwrap_or([10.0 * t0, 1000.0 * t0]);
        let window = FitWindow::new(start, end, o.fit_points.unwrap_or(50))
            .map_err(|e| invalid("overrides.fit_window", e.to_string()))?;
        if start < t0 {
            return Err(invalid("overrides.fit_window", "starts before t0"));
        }
        let phase_scale = file
            .phase_scale
            .map(|w| positive("phase_scale", w))
            .transpose()?;
        let profile = ProfileOptions {
            window,
            mode: o.fit_mode.unwrap_or(FitMode::Auto),
            density: Density::from_phase_scale(phase_scale),
        };
        let defaults = ContractionOptions::default();
        let tmax_factor = cli.tmax_factor.or(o.tmax_factor).unwrap_or(defaults.tmax_factor);
        if !(tmax_factor >= 10.0 && tmax_factor.is_finite()) {
            return Err(invalid("tmax_factor", format!("{tmax_factor} must be >= 10")));
        }
        let points_per_decade = cli
            .points_per_decade
            .or(o.points_per_decade)
            .unwrap_or(defaults.points_per_decade);
        if points_per_decade < 4 {
            return Err(invalid("points_per_decade", "must be at least 4"));
        }
        let contraction = ContractionOptions {
            tmax_factor,
            points_per_decade,
            quad: QuadratureSpec {
                phase_scale,
                ..QuadratureSpec::default()
            },
            picard_tol: positive("overrides.picard_tol", o.picard_tol.unwrap_or(defaults.picard_tol))?,
            max_iters: o.max_iters.unwrap_or(defaults.max_iters).max(1),
            seed: cli.seed.unwrap_or(defaults.seed),
            mk_samples: defaults.mk_samples,
        };
        let alpha_grid = o.alpha_grid.unwrap_or(3).max(1);
        let compact = &model.fam.compact;
        let sweep_alphas = match &o.sweep_alphas {
            Some(list) => {
                for (i, a) in list.iter().enumerate() {
                    if !compact.contains_closed(a) {
                        return Err(invalid(
                            format!("overrides.sweep_alphas[{i}]"),
                            "outside the compact",
                        ));
                    }
                }
                list.clone()
            }
            None => compact.tensor_grid(if file.n == 1 { 5 } else { 3 }),
        };
        Ok(Settings {
            profile,
            contraction,
            rtol: positive("overrides.rtol", o.rtol.unwrap_or(DEFAULT_RTOL))?,
            atol: positive("overrides.atol", o.atol.unwrap_or(DEFAULT_ATOL))?,
            alpha_grid,
            sweep_alphas,
        })
    }

    /// Parameter grid used for exponent fitting.
    pub fn fit_alphas(&self) -> Vec<Vec<f64>> {
        self.model.fam.compact.tensor_grid(self.settings.alpha_grid)
    }
}
