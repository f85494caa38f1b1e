//! Small pass/fail records shared by the assumption, condition and property checks.

use serde::Serialize;

const MAX_RECORDED_POINTS: usize = 32;

/// Outcome of one named check evaluated over a probe set.
///
/// `margin` is the worst (smallest) observed slack; the check passes when every
/// slack is at least `-tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    /// Informational checks are recorded but do not decide the overall verdict.
    pub required: bool,
    pub margin: f64,
    pub worst_point: Option<Vec<f64>>,
    pub violations: usize,
    pub points_checked: usize,
    /// The first few violating probe points.
    pub violating_points: Vec<Vec<f64>>,
}

/// Accumulates slacks into a [`CheckOutcome`].
#[derive(Debug, Clone)]
pub struct CheckBuilder {
    outcome: CheckOutcome,
    tol: f64,
}

impl CheckBuilder {
    pub fn new(name: impl Into<String>, required: bool, tol: f64) -> Self {
        Self {
            outcome: CheckOutcome {
                name: name.into(),
                passed: true,
                required,
                margin: f64::INFINITY,
                worst_point: None,
                violations: 0,
                points_checked: 0,
                violating_points: Vec::new(),
            },
            tol,
        }
    }

    /// Record one slack value at `point`. NaN slacks count as violations.
    pub fn observe(&mut self, slack: f64, point: &[f64]) {
        let o = &mut self.outcome;
        o.points_checked += 1;
        if slack.is_nan() || slack < o.margin {
            o.margin = if slack.is_nan() {
                f64::NEG_INFINITY
            } else {
                slack
            };
            o.worst_point = Some(point.to_vec());
        }
        if slack.is_nan() || slack < -self.tol {
            o.passed = false;
            o.violations += 1;
            if o.violating_points.len() < MAX_RECORDED_POINTS {
                o.violating_points.push(point.to_vec());
            }
        }
    }

    pub fn finish(self) -> CheckOutcome {
        self.outcome
    }
}

/// A bundle of checks with an overall verdict over the required ones.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionReport {
    pub passed: bool,
    pub checks: Vec<CheckOutcome>,
}

impl AssumptionReport {
    pub fn from_checks(checks: Vec<CheckOutcome>) -> Self {
        let passed = checks.iter().filter(|c| c.required).all(|c| c.passed);
        Self { passed, checks }
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// Names of the required checks that failed.
    pub fn failures(&self) -> Vec<&str> {
        self.checks
            .iter()
            .filter(|c| c.required && !c.passed)
            .map(|c| c.name.as_str())
            .collect()
    }
}
