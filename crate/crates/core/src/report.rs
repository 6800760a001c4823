//! Shared report records: warnings that bubble up to run reports, and
//! reference-vs-derived comparisons for coefficients whose customary written
//! forms disagree with what the operator oracle produces.

use serde::Serialize;

/// A discrepancy or caveat raised by a module operation. Harness front-ends
/// surface these verbatim.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct Warning {
    pub module: &'static str,
    pub operation: &'static str,
    pub message: String,
}

impl Warning {
    pub fn new(module: &'static str, operation: &'static str, message: impl Into<String>) -> Self {
        Warning {
            module,
            operation,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}: {}", self.module, self.operation, self.message)
    }
}

/// A scalar checked two ways: `reference` is the value as conventionally
/// quoted, `derived` is what this toolkit computes from first principles.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Comparison {
    pub reference: f64,
    pub derived: f64,
    pub rel_gap: f64,
    pub agrees: bool,
}

impl Comparison {
    pub fn of(reference: f64, derived: f64, rel_tol: f64) -> Self {
        let scale = reference.abs().max(derived.abs()).max(f64::MIN_POSITIVE);
        let rel_gap = (reference - derived).abs() / scale;
        Comparison {
            reference,
            derived,
            rel_gap,
            agrees: rel_gap <= rel_tol,
        }
    }
}

/// A (predicted, measured) pair, the shape every expansion fit reports.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PredictedMeasured {
    pub predicted: f64,
    pub measured: f64,
    pub rel_gap: f64,
}

impl PredictedMeasured {
    pub fn of(predicted: f64, measured: f64) -> Self {
        let scale = predicted.abs().max(measured.abs()).max(f64::MIN_POSITIVE);
        PredictedMeasured {
            predicted,
            measured,
            rel_gap: (predicted - measured).abs() / scale,
        }
    }
}
