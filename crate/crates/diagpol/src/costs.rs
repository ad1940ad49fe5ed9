//! Test costs and misdiagnosis cost matrices.
//!
//! Every learner trades the cost of measuring attributes against the cost
//! of diagnosing wrongly. A [`CostModel`] binds both to a concrete dataset:
//! one positive cost per attribute, and a square matrix `mc[predicted][truth]`
//! over the dataset's classes. Cost files ([`CostConfig`]) are TOML, keyed by
//! attribute name, and may carry several named matrices ("cost levels") so an
//! experiment can sweep the trade-off.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;

#[derive(Debug, Error)]
pub enum CostError {
    #[error("failed to read {path}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("invalid cost file: {0}")]
    Parse(String),
    #[error("test cost for attribute {0:?} must be positive and finite, got {1}")]
    NonPositiveTestCost(String, f64),
    #[error("no test cost configured for attribute {0:?} and no default_test_cost given")]
    MissingTestCost(String),
    #[error("cost file names unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("misdiagnosis matrix must be square with one row per class, got {rows} row(s) of {cols:?} for {classes} class(es)")]
    BadMatrixShape {
        rows: usize,
        cols: Vec<usize>,
        classes: usize,
    },
    #[error("misdiagnosis cost at (predicted {0}, true {1}) must be nonnegative and finite, got {2}")]
    BadMatrixEntry(usize, usize, f64),
    #[error("cost level {0:?} not found; available: {1}")]
    UnknownLevel(String, String),
    #[error("cost file has no cost levels")]
    NoLevels,
    #[error("duplicate cost level name {0:?}")]
    DuplicateLevel(String),
    #[error("cost file class order {found:?} does not match the dataset's {expected:?}")]
    ClassOrderMismatch {
        found: Vec<String>,
        expected: Vec<String>,
    },
    #[error("misdiagnosis matrix for level {0:?} is all zeros; diagnosing can never cost anything")]
    AllZeroMatrix(String),
    #[error("a cost model needs at least {0} classes")]
    TooFewClasses(usize),
}

/// Costs resolved against a dataset: `test_costs[a]` for attribute `a`, and
/// `mc(predicted, truth)` over class indices. Test costs are strictly
/// positive; misdiagnosis entries are nonnegative (an all-zero matrix is
/// accepted here so boundary behavior can be exercised, but [`CostConfig`]
/// rejects it in user-supplied files).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    test_costs: Vec<f64>,
    mc: Vec<Vec<f64>>,
}

impl CostModel {
    pub fn new(test_costs: Vec<f64>, mc: Vec<Vec<f64>>) -> Result<Self, CostError> {
        for (a, &c) in test_costs.iter().enumerate() {
            if !(c.is_finite() && c > 0.0) {
                return Err(CostError::NonPositiveTestCost(format!("#{a}"), c));
            }
        }
        let k = mc.len();
        if k < 2 {
            return Err(CostError::TooFewClasses(2));
        }
        if mc.iter().any(|row| row.len() != k) {
            return Err(CostError::BadMatrixShape {
                rows: k,
                cols: mc.iter().map(|r| r.len()).collect(),
                classes: k,
            });
        }
        for (p, row) in mc.iter().enumerate() {
            for (t, &v) in row.iter().enumerate() {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(CostError::BadMatrixEntry(p, t, v));
                }
            }
        }
        Ok(CostModel { test_costs, mc })
    }

    /// Uniform test costs (all `cost`) with the given matrix.
    pub fn uniform(n_attributes: usize, cost: f64, mc: Vec<Vec<f64>>) -> Result<Self, CostError> {
        CostModel::new(vec![cost; n_attributes], mc)
    }

    pub fn n_attributes(&self) -> usize {
        self.test_costs.len()
    }

    pub fn n_classes(&self) -> usize {
        self.mc.len()
    }

    pub fn test_cost(&self, attribute: usize) -> f64 {
        self.test_costs[attribute]
    }

    /// Cost of diagnosing `predicted` when the true class is `truth`.
    pub fn mc(&self, predicted: usize, truth: usize) -> f64 {
        self.mc[predicted][truth]
    }

    pub fn max_mc(&self) -> f64 {
        self.mc
            .iter()
            .flatten()
            .copied()
            .fold(0.0f64, f64::max)
    }

    pub fn min_test_cost(&self) -> f64 {
        self.test_costs.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// A parsed cost file, still keyed by attribute name. `resolve` binds it to
/// a dataset's attribute and class order.
///
/// ```toml
/// default_test_cost = 1.0
/// classes = ["healthy", "sick"]   # optional, checked against the dataset
///
/// [test_costs]
/// insulin = 22.78
///
/// [[levels]]
/// name = "mild"
/// matrix = [[0.0, 10.0], [4.0, 0.0]]
/// ```
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostConfig {
    #[serde(default)]
    pub default_test_cost: Option<f64>,
    #[serde(default)]
    pub test_costs: BTreeMap<String, f64>,
    #[serde(default)]
    pub classes: Option<Vec<String>>,
    pub levels: Vec<CostLevel>,
}

/// One named misdiagnosis matrix, rows indexed by predicted class and
/// columns by true class, both in the dataset's class order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CostLevel {
    pub name: String,
    pub matrix: Vec<Vec<f64>>,
}

impl CostConfig {
    pub fn parse(text: &str) -> Result<Self, CostError> {
        let cfg: CostConfig = toml::from_str(text).map_err(|e| CostError::Parse(e.to_string()))?;
        if cfg.levels.is_empty() {
            return Err(CostError::NoLevels);
        }
        for (i, level) in cfg.levels.iter().enumerate() {
            if cfg.levels[..i].iter().any(|l| l.name == level.name) {
                return Err(CostError::DuplicateLevel(level.name.clone()));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CostError> {
        let text = fs::read_to_string(path.as_ref()).map_err(|source| CostError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })?;
        CostConfig::parse(&text)
    }

    pub fn level_names(&self) -> Vec<&str> {
        self.levels.iter().map(|l| l.name.as_str()).collect()
    }

    /// Binds the named level to `data`: every dataset attribute needs a test
    /// cost (explicit or default), the matrix must be square over the
    /// dataset's classes, and at least one off-diagonal entry must be
    /// positive. Extra attribute names in the file are an error, as they
    /// usually mean a typo.
    pub fn resolve(&self, data: &Dataset, level: &str) -> Result<CostModel, CostError> {
        for name in self.test_costs.keys() {
            if data.attribute_index(name).is_none() {
                return Err(CostError::UnknownAttribute(name.clone()));
            }
        }
        if let Some(classes) = &self.classes {
            if *classes != data.classes {
                return Err(CostError::ClassOrderMismatch {
                    found: classes.clone(),
                    expected: data.classes.clone(),
                });
            }
        }
        let mut test_costs = Vec::with_capacity(data.n_attributes());
        for meta in &data.attributes {
            let c = self
                .test_costs
                .get(&meta.name)
                .copied()
                .or(self.default_test_cost)
                .ok_or_else(|| CostError::MissingTestCost(meta.name.clone()))?;
            if !(c.is_finite() && c > 0.0) {
                return Err(CostError::NonPositiveTestCost(meta.name.clone(), c));
            }
            test_costs.push(c);
        }

        let raw = self
            .levels
            .iter()
            .find(|l| l.name == level)
            .ok_or_else(|| {
                CostError::UnknownLevel(level.to_string(), self.level_names().join(", "))
            })?;
        let k = data.n_classes();
        if raw.matrix.len() != k || raw.matrix.iter().any(|r| r.len() != k) {
            return Err(CostError::BadMatrixShape {
                rows: raw.matrix.len(),
                cols: raw.matrix.iter().map(|r| r.len()).collect(),
                classes: k,
            });
        }
        let off_diag_positive = raw
            .matrix
            .iter()
            .enumerate()
            .any(|(p, row)| row.iter().enumerate().any(|(t, &v)| p != t && v > 0.0));
        if !off_diag_positive {
            return Err(CostError::AllZeroMatrix(raw.name.clone()));
        }
        CostModel::new(test_costs, raw.matrix.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AttributeKind, AttributeMeta, Example};

    fn two_attr_dataset() -> Dataset {
        Dataset {
            attributes: ["bmi", "insulin"]
                .iter()
                .map(|name| AttributeMeta {
                    name: name.to_string(),
                    kind: AttributeKind::Discrete,
                    values: vec!["0".into(), "1".into()],
                    thresholds: Vec::new(),
                })
                .collect(),
            classes: vec!["healthy".into(), "sick".into()],
            examples: vec![
                Example { values: vec![0, 1], class: 0 },
                Example { values: vec![1, 0], class: 1 },
            ],
        }
    }

    const FILE: &str = r#"
default_test_cost = 1.0
classes = ["healthy", "sick"]

[test_costs]
insulin = 22.78

[[levels]]
name = "mild"
matrix = [[0.0, 10.0], [4.0, 0.0]]

[[levels]]
name = "severe"
matrix = [[0.0, 100.0], [40.0, 0.0]]
"#;

    #[test]
    fn resolves_costs_by_attribute_name() {
        let cfg = CostConfig::parse(FILE).unwrap();
        let cm = cfg.resolve(&two_attr_dataset(), "mild").unwrap();
        assert_eq!(cm.test_cost(0), 1.0);
        assert_eq!(cm.test_cost(1), 22.78);
        assert_eq!(cm.mc(0, 1), 10.0);
        assert_eq!(cm.mc(1, 0), 4.0);
        assert_eq!(cm.mc(0, 0), 0.0);
    }

    #[test]
    fn unknown_level_lists_the_available_ones() {
        let cfg = CostConfig::parse(FILE).unwrap();
        let err = cfg.resolve(&two_attr_dataset(), "nope").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("mild") && msg.contains("severe"), "{msg}");
    }

    #[test]
    fn zero_test_cost_is_rejected() {
        let text = FILE.replace("insulin = 22.78", "insulin = 0.0");
        let cfg = CostConfig::parse(&text).unwrap();
        let err = cfg.resolve(&two_attr_dataset(), "mild").unwrap_err();
        assert!(matches!(err, CostError::NonPositiveTestCost(_, _)));
    }

    #[test]
    fn all_zero_matrix_is_rejected_in_files() {
        let text = FILE.replace("[[0.0, 10.0], [4.0, 0.0]]", "[[0.0, 0.0], [0.0, 0.0]]");
        let cfg = CostConfig::parse(&text).unwrap();
        let err = cfg.resolve(&two_attr_dataset(), "mild").unwrap_err();
        assert!(matches!(err, CostError::AllZeroMatrix(_)));
    }

    #[test]
    fn all_zero_matrix_is_constructible_directly() {
        // Boundary experiments need MC = 0; only the file loader forbids it.
        let cm = CostModel::uniform(2, 1.0, vec![vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(cm.max_mc(), 0.0);
    }

    #[test]
    fn wrong_class_order_is_rejected() {
        let text = FILE.replace(
            r#"classes = ["healthy", "sick"]"#,
            r#"classes = ["sick", "healthy"]"#,
        );
        let cfg = CostConfig::parse(&text).unwrap();
        let err = cfg.resolve(&two_attr_dataset(), "mild").unwrap_err();
        assert!(matches!(err, CostError::ClassOrderMismatch { .. }));
    }

    #[test]
    fn unknown_attribute_in_file_is_rejected() {
        let text = FILE.replace("insulin = 22.78", "insuline = 22.78");
        let cfg = CostConfig::parse(&text).unwrap();
        let err = cfg.resolve(&two_attr_dataset(), "mild").unwrap_err();
        assert!(matches!(err, CostError::UnknownAttribute(_)));
    }

    #[test]
    fn missing_cost_without_default_is_rejected() {
        let text = FILE.replace("default_test_cost = 1.0", "");
        let cfg = CostConfig::parse(&text).unwrap();
        let err = cfg.resolve(&two_attr_dataset(), "mild").unwrap_err();
        assert!(matches!(err, CostError::MissingTestCost(_)));
    }

    #[test]
    fn negative_matrix_entry_is_rejected() {
        let err = CostModel::new(vec![1.0], vec![vec![0.0, -1.0], vec![1.0, 0.0]]).unwrap_err();
        assert!(matches!(err, CostError::BadMatrixEntry(0, 1, _)));
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let err = CostModel::new(vec![1.0], vec![vec![0.0, 1.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, CostError::BadMatrixShape { .. }));
    }
}
