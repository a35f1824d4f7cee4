//! Experiment report: tabular rows plus fitted quantities and pass/fail
//! checks against declared tolerances.

use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub name: String,
    pub value: f64,
    pub std_err: f64,
    pub r_squared: f64,
    pub target: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub relative: bool,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub experiment: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub fits: Vec<FitSummary>,
    pub checks: Vec<CheckSummary>,
    pub notes: Vec<String>,
}

impl Report {
    pub fn new(experiment: &str, columns: &[&str]) -> Self {
        Report {
            experiment: experiment.to_string(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
            fits: Vec::new(),
            checks: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn push_row(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn note(&mut self, s: impl Into<String>) {
        self.notes.push(s.into());
    }

    /// Records a fitted quantity with an optional tolerance gate.
    pub fn fit(
        &mut self,
        name: &str,
        fit: &crate::fit::LineFit,
        target: Option<f64>,
        tolerance: Option<f64>,
    ) {
        let pass = match (target, tolerance) {
            (Some(t), Some(tol)) => Some((fit.slope - t).abs() <= tol),
            _ => None,
        };
        self.fits.push(FitSummary {
            name: name.to_string(),
            value: fit.slope,
            std_err: fit.slope_stderr,
            r_squared: fit.r_squared,
            target,
            tolerance,
            pass,
        });
    }

    /// Point check with absolute tolerance.
    pub fn check_abs(&mut self, name: &str, value: f64, target: f64, tol: f64) -> bool {
        let pass = (value - target).abs() <= tol;
        self.checks.push(CheckSummary {
            name: name.to_string(),
            value,
            target,
            tolerance: tol,
            relative: false,
            pass,
        });
        pass
    }

    /// Point check with relative tolerance.
    pub fn check_rel(&mut self, name: &str, value: f64, target: f64, tol: f64) -> bool {
        let denom = target.abs().max(1e-300);
        let pass = ((value - target) / denom).abs() <= tol;
        self.checks.push(CheckSummary {
            name: name.to_string(),
            value,
            target,
            tolerance: tol,
            relative: true,
            pass,
        });
        pass
    }

    /// Boolean condition recorded as a check.
    pub fn check_that(&mut self, name: &str, pass: bool) -> bool {
        self.checks.push(CheckSummary {
            name: name.to_string(),
            value: if pass { 1.0 } else { 0.0 },
            target: 1.0,
            tolerance: 0.0,
            relative: false,
            pass,
        });
        pass
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
            && self.fits.iter().all(|f| f.pass.unwrap_or(true))
    }
}
