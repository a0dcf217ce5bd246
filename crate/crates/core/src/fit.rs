use std::fmt;

use serde::Serialize;

use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mgls,
    Pgls,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Mgls => f.write_str("mgls"),
            Method::Pgls => f.write_str("pgls"),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mgls" => Ok(Method::Mgls),
            "pgls" => Ok(Method::Pgls),
            other => Err(format!("unknown method {other:?} (expected mgls or pgls)")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct FitDiagnostics {
    pub grid_size: usize,
    /// Frequencies dropped because every band's regression was degenerate.
    pub degenerate_freqs: usize,
    pub pnll_evals: usize,
    pub converged: bool,
    pub rounds_used: usize,
    /// Objective of the winning fit before amplitude flips and phase wrapping.
    pub pre_canonical_objective: f64,
    /// False when an evaluation cap stopped the pruning loop early.
    pub pruning_complete: bool,
}

/// Outcome of a period search.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub method: Method,
    pub params: ModelParams,
    pub objective: f64,
    /// Bands with observations; parameters of the others are meaningless.
    pub active: Vec<bool>,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn omega(&self) -> f64 {
        self.params.omega
    }

    pub fn period(&self) -> f64 {
        self.params.period()
    }
}
