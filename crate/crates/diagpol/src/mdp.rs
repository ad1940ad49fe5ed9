//! States, actions, and probability estimation.
//!
//! Diagnosis is modeled as a Markov decision process. A state is the set of
//! attribute/value pairs measured so far; in every state the learner either
//! runs another test (paying its cost and branching on the outcome) or
//! diagnoses class `k`, paying the expected misdiagnosis cost
//!
//! ```text
//! C(s, f_k) = sum_y P(y | s) * MC(k, y)
//! ```
//!
//! All probabilities come from the training examples matching the state.
//! Maximum-likelihood estimates use raw fractions and give unobserved
//! outcomes probability zero; Laplace estimates add one fictitious example
//! per class (or per test outcome), which keeps every probability strictly
//! inside (0, 1) and defines a uniform class distribution even at states no
//! training example reaches.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::CostModel;
use crate::dataset::Dataset;

#[derive(Debug, Error)]
pub enum MdpError {
    #[error("no training example matches state {state}; probabilities are undefined without smoothing")]
    UndefinedProbability { state: String },
    #[error("attribute {0} is already measured in state {1}")]
    AlreadyMeasured(usize, String),
}

/// A partial assignment of values to attributes, stored sorted by attribute
/// index, so two states with the same measurements compare and hash equal no
/// matter the measurement order.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct State {
    pairs: Vec<(u16, u16)>,
}

impl State {
    /// The empty state: nothing measured yet.
    pub fn empty() -> Self {
        State::default()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn contains(&self, attribute: usize) -> bool {
        self.get(attribute).is_some()
    }

    pub fn get(&self, attribute: usize) -> Option<usize> {
        let a = attribute as u16;
        self.pairs
            .binary_search_by_key(&a, |&(attr, _)| attr)
            .ok()
            .map(|i| self.pairs[i].1 as usize)
    }

    /// The state extended with one more measurement. The attribute must not
    /// be measured yet.
    pub fn with(&self, attribute: usize, value: usize) -> State {
        debug_assert!(!self.contains(attribute), "attribute measured twice");
        let mut pairs = self.pairs.clone();
        let entry = (attribute as u16, value as u16);
        let pos = pairs.partition_point(|&(a, _)| a < entry.0);
        pairs.insert(pos, entry);
        State { pairs }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|&(a, v)| (a as usize, v as usize))
    }

    /// A canonical text key, e.g. `"1=0,4=2"`; empty state renders as `"{}"`.
    pub fn key(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.pairs.is_empty() {
            return write!(f, "{{}}");
        }
        for (i, (a, v)) in self.pairs.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}={v}")?;
        }
        Ok(())
    }
}

/// What a policy can do in a state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    /// Measure this attribute.
    Test(usize),
    /// Commit to this class.
    Diagnose(usize),
}

/// A probability vector over classes. Entries are nonnegative and sum to one
/// (within 1e-9).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution {
    p: Vec<f64>,
}

impl ClassDistribution {
    pub fn new(p: Vec<f64>) -> Self {
        let sum: f64 = p.iter().sum();
        debug_assert!(
            (sum - 1.0).abs() <= 1e-9 && p.iter().all(|&x| (0.0..=1.0 + 1e-12).contains(&x)),
            "not a distribution: {p:?}"
        );
        ClassDistribution { p }
    }

    pub fn probs(&self) -> &[f64] {
        &self.p
    }

    pub fn n_classes(&self) -> usize {
        self.p.len()
    }
}

/// Probability estimates over a fixed training subset of a dataset, either
/// maximum-likelihood or Laplace-corrected.
#[derive(Debug, Clone)]
pub struct Estimator<'a> {
    data: &'a Dataset,
    train: Vec<u32>,
    laplace: bool,
}

impl<'a> Estimator<'a> {
    pub fn new(data: &'a Dataset, train: &[u32], laplace: bool) -> Self {
        let mut train = train.to_vec();
        train.sort_unstable();
        Estimator { data, train, laplace }
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn train_indices(&self) -> &[u32] {
        &self.train
    }

    pub fn laplace(&self) -> bool {
        self.laplace
    }

    pub fn n_classes(&self) -> usize {
        self.data.n_classes()
    }

    fn example_matches(&self, i: u32, state: &State) -> bool {
        let ex = &self.data.examples[i as usize];
        state
            .iter()
            .all(|(a, v)| ex.values[a] as usize == v)
    }

    /// Indices of training examples consistent with every measurement in
    /// `state`. Prefer [`Estimator::refine`] when the parent state's matches
    /// are already at hand.
    pub fn matching(&self, state: &State) -> Vec<u32> {
        self.train
            .iter()
            .copied()
            .filter(|&i| self.example_matches(i, state))
            .collect()
    }

    /// Filters a parent state's match set down by one more measurement,
    /// which is how search expands children without rescanning the data.
    pub fn refine(&self, matches: &[u32], attribute: usize, value: usize) -> Vec<u32> {
        matches
            .iter()
            .copied()
            .filter(|&i| self.data.examples[i as usize].values[attribute] as usize == value)
            .collect()
    }

    /// Splits a match set into per-value buckets of one attribute.
    pub fn split_by_value(&self, matches: &[u32], attribute: usize) -> Vec<Vec<u32>> {
        let mut buckets = vec![Vec::new(); self.data.arity(attribute)];
        for &i in matches {
            buckets[self.data.examples[i as usize].values[attribute] as usize].push(i);
        }
        buckets
    }

    /// Class counts (rows) per attribute value, i.e. an arity-by-K table.
    pub fn contingency(&self, matches: &[u32], attribute: usize) -> Vec<Vec<u32>> {
        let mut table = vec![vec![0u32; self.n_classes()]; self.data.arity(attribute)];
        for &i in matches {
            let ex = &self.data.examples[i as usize];
            table[ex.values[attribute] as usize][ex.class as usize] += 1;
        }
        table
    }

    /// Class counts over a match set.
    pub fn class_counts(&self, matches: &[u32]) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes()];
        for &i in matches {
            counts[self.data.examples[i as usize].class as usize] += 1;
        }
        counts
    }

    /// Class distribution from counts. Maximum likelihood is undefined on an
    /// empty match set (`None`); Laplace smoothing covers it with the
    /// uniform distribution.
    pub fn class_distribution_of(&self, counts: &[u32]) -> Option<ClassDistribution> {
        let m: u32 = counts.iter().sum();
        let k = counts.len() as f64;
        if self.laplace {
            let denom = f64::from(m) + k;
            Some(ClassDistribution::new(
                counts.iter().map(|&c| (f64::from(c) + 1.0) / denom).collect(),
            ))
        } else if m == 0 {
            None
        } else {
            let denom = f64::from(m);
            Some(ClassDistribution::new(
                counts.iter().map(|&c| f64::from(c) / denom).collect(),
            ))
        }
    }

    /// Per-value outcome probabilities of one attribute, given the counts of
    /// matching examples per value. Maximum likelihood gives unobserved
    /// values probability zero; Laplace adds one per value.
    pub fn outcome_probs_of(&self, value_counts: &[u32]) -> Option<Vec<f64>> {
        let m: u32 = value_counts.iter().sum();
        if self.laplace {
            let denom = f64::from(m) + value_counts.len() as f64;
            Some(value_counts.iter().map(|&c| (f64::from(c) + 1.0) / denom).collect())
        } else if m == 0 {
            None
        } else {
            let denom = f64::from(m);
            Some(value_counts.iter().map(|&c| f64::from(c) / denom).collect())
        }
    }

    /// Expected misdiagnosis cost of diagnosing class `k`, from class counts.
    pub fn diagnosis_cost_of(&self, cm: &CostModel, counts: &[u32], k: usize) -> Option<f64> {
        let dist = self.class_distribution_of(counts)?;
        Some(
            dist.probs()
                .iter()
                .enumerate()
                .map(|(y, &p)| p * cm.mc(k, y))
                .sum(),
        )
    }

    /// The cheapest diagnosis and its expected cost, from class counts. Ties
    /// go to the lowest class index.
    pub fn best_diagnosis_of(&self, cm: &CostModel, counts: &[u32]) -> Option<(usize, f64)> {
        let dist = self.class_distribution_of(counts)?;
        let mut best = (0usize, f64::INFINITY);
        for k in 0..counts.len() {
            let cost: f64 = dist
                .probs()
                .iter()
                .enumerate()
                .map(|(y, &p)| p * cm.mc(k, y))
                .sum();
            if cost < best.1 {
                best = (k, cost);
            }
        }
        Some(best)
    }

    /// `P(attribute = value | state)`.
    pub fn p_outcome(&self, state: &State, attribute: usize, value: usize) -> Result<f64, MdpError> {
        let matches = self.matching(state);
        let counts: Vec<u32> = self
            .split_by_value(&matches, attribute)
            .iter()
            .map(|b| b.len() as u32)
            .collect();
        self.outcome_probs_of(&counts)
            .map(|p| p[value])
            .ok_or_else(|| MdpError::UndefinedProbability { state: state.key() })
    }

    /// `P(class = y | state)`.
    pub fn p_class(&self, state: &State, y: usize) -> Result<f64, MdpError> {
        let counts = self.class_counts(&self.matching(state));
        self.class_distribution_of(&counts)
            .map(|d| d.probs()[y])
            .ok_or_else(|| MdpError::UndefinedProbability { state: state.key() })
    }

    /// Class distribution at a state.
    pub fn class_distribution(&self, state: &State) -> Result<ClassDistribution, MdpError> {
        let counts = self.class_counts(&self.matching(state));
        self.class_distribution_of(&counts)
            .ok_or_else(|| MdpError::UndefinedProbability { state: state.key() })
    }

    /// `C(s, f_k)`: expected misdiagnosis cost of diagnosing `k` at `state`.
    pub fn diagnosis_cost(
        &self,
        cm: &CostModel,
        state: &State,
        k: usize,
    ) -> Result<f64, MdpError> {
        let counts = self.class_counts(&self.matching(state));
        self.diagnosis_cost_of(cm, &counts, k)
            .ok_or_else(|| MdpError::UndefinedProbability { state: state.key() })
    }

    /// The diagnosis minimizing `C(s, f_k)` at `state`, lowest index on ties.
    pub fn best_diagnosis(&self, cm: &CostModel, state: &State) -> Result<(usize, f64), MdpError> {
        let counts = self.class_counts(&self.matching(state));
        self.best_diagnosis_of(cm, &counts)
            .ok_or_else(|| MdpError::UndefinedProbability { state: state.key() })
    }

    /// The most frequent class in a match set, lowest index on ties. Laplace
    /// smoothing never changes this, since adding one to every count keeps
    /// the argmax.
    pub fn most_likely_class(&self, counts: &[u32]) -> usize {
        let mut best = 0usize;
        for (k, &c) in counts.iter().enumerate() {
            if c > counts[best] {
                best = k;
            }
        }
        best
    }
}
