//! Residual rows shared by every verification routine.

use serde::{Deserialize, Serialize};

use crate::mc::MeanEstimate;

/// One identity evaluated for one test function: `lhs` against `rhs`,
/// accepted when `|lhs - rhs| ≤ tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub identity: String,
    pub eta: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    /// Combined Monte Carlo standard error (0 for deterministic checks).
    pub stderr: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Residual {
    /// Deterministic comparison with a fixed tolerance.
    pub fn exact(identity: impl Into<String>, eta: impl Into<String>, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let residual = (lhs - rhs).abs();
        Residual {
            identity: identity.into(),
            eta: eta.into(),
            lhs,
            rhs,
            residual,
            stderr: 0.0,
            tolerance,
            pass: residual <= tolerance,
        }
    }

    /// Monte Carlo estimate against a reference that may itself carry a
    /// standard error; accepted within `sigmas` combined standard errors
    /// plus an absolute `floor` for quadrature error in the reference.
    pub fn statistical(
        identity: impl Into<String>,
        eta: impl Into<String>,
        lhs: MeanEstimate,
        rhs: f64,
        rhs_stderr: f64,
        sigmas: f64,
        floor: f64,
    ) -> Self {
        let stderr = lhs.stderr.hypot(rhs_stderr);
        let residual = (lhs.mean - rhs).abs();
        let tolerance = sigmas * stderr + floor;
        Residual {
            identity: identity.into(),
            eta: eta.into(),
            lhs: lhs.mean,
            rhs,
            residual,
            stderr,
            tolerance,
            pass: residual <= tolerance,
        }
    }

    /// Sets a different tolerance and re-evaluates the verdict.
    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self.pass = self.residual <= tolerance;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn verdicts() {
        assert!(Residual::exact("a", "0", 1.0, 1.0 + 1e-12, 1e-10).pass);
        assert!(!Residual::exact("a", "0", 1.0, 1.1, 1e-10).pass);
        let est = MeanEstimate {
            mean: 0.1,
            stderr: 0.03,
            n: 100,
        };
        let r = Residual::statistical("b", "0", est, 0.0, 0.04, 4.0, 0.0);
        assert!((r.stderr - 0.05).abs() < 1e-15);
        assert!(r.pass);
        assert!(!r.with_tolerance(0.05).pass);
    }
}
