//! Per-gridpoint records of computed values against envelopes or oracles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub inputs: Vec<f64>,
    pub computed: f64,
    pub reference: f64,
    pub ratio: f64,
    pub pass: bool,
}

impl BoundRow {
    pub fn new(inputs: Vec<f64>, computed: f64, reference: f64, pass: bool) -> Self {
        let ratio = computed / reference;
        Self { inputs, computed, reference, ratio, pass }
    }

    pub fn with_ratio(mut self, ratio: f64) -> Self {
        self.ratio = ratio;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundReport {
    pub name: String,
    /// Names of the entries of `BoundRow::inputs`.
    pub columns: Vec<String>,
    pub rows: Vec<BoundRow>,
    pub config: BTreeMap<String, String>,
    pub fitted: BTreeMap<String, f64>,
    /// Relative change of fitted quantities under refinement.
    pub stability: BTreeMap<String, f64>,
    pub pass: bool,
}

impl BoundReport {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, row: BoundRow) {
        self.rows.push(row);
    }

    /// Sorts rows lexicographically by their inputs.
    pub fn sort_rows(&mut self) {
        self.rows.sort_by(|a, b| {
            a.inputs
                .iter()
                .zip(&b.inputs)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
    }

    pub fn max_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_ratio(&self) -> f64 {
        self.rows.iter().map(|r| r.ratio).fold(f64::INFINITY, f64::min)
    }
}

/// `|b/a - 1|`, the relative change used by the refinement-stability rule.
pub fn relative_change(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (b / a - 1.0).abs()
    }
}

/// Stability rule for fitted constants: the refined value moves by less than 5%.
pub const STABILITY_LIMIT: f64 = 0.05;
