//! Diagnostic policies: decision trees that test, then diagnose.
//!
//! A policy is the artifact every learner in this crate produces. Internal
//! nodes name an attribute to measure and branch on its value; leaves commit
//! to a class. Executing a policy on an example accumulates the test costs
//! along the path plus the misdiagnosis cost `MC(leaf class, true class)` at
//! the end, and the policy's value is the expectation of that total,
//!
//! ```text
//! V(leaf)     = C(s, f_k)
//! V(internal) = C(x_n) + sum_v P(x_n = v | s) * V(child_v)
//! ```
//!
//! computed bottom-up. Nodes carry attribute and class *names* rather than
//! indices, so a saved policy remains valid across re-loads of the dataset
//! that produced it; indices are resolved against dataset metadata when the
//! policy is executed. Learning-time annotations (branch probabilities, node
//! values, reach probabilities) are optional snapshots that execution never
//! reads.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costs::CostModel;
use crate::dataset::{Dataset, Example};
use crate::mdp::{Estimator, State};

const POLICY_FORMAT: &str = "diagpol-policy";
const FILE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("failed to access {path}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed policy file: {0}")]
    BadFile(String),
    #[error("expected a {expected} file, found format {found:?}")]
    WrongFormat { expected: &'static str, found: String },
    #[error("{format} version {found} is not supported (this build reads version {supported})")]
    UnsupportedVersion {
        format: &'static str,
        found: u32,
        supported: u32,
    },
    #[error("policy tests unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("policy diagnoses unknown class {0:?}")]
    UnknownClass(String),
    #[error("branch value {value:?} is not a value of attribute {attribute:?}")]
    UnknownValue { attribute: String, value: String },
    #[error("attribute {attribute:?} has no branch for value {value:?}")]
    MissingBranch { attribute: String, value: String },
    #[error("attribute {attribute:?} has more than one branch for value {value:?}")]
    DuplicateBranch { attribute: String, value: String },
    #[error("attribute {0:?} is tested twice on one path")]
    RepeatedAttribute(String),
    #[error("cannot evaluate a policy on an empty test set")]
    EmptyTestSet,
    #[error(transparent)]
    Undefined(#[from] crate::mdp::MdpError),
}

/// One outgoing edge of an internal node: the attribute value it matches,
/// an optional probability annotation, and the subtree it leads to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub value: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub prob: Option<f64>,
    pub node: PolicyNode,
}

/// A node of the policy tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PolicyNode {
    /// Measure an attribute and follow the branch matching its value.
    Test {
        attribute: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        reach_prob: Option<f64>,
        /// The node's expected total cost under the annotating estimator.
        #[serde(skip_serializing_if = "Option::is_none", default)]
        value: Option<f64>,
        branches: Vec<Branch>,
    },
    /// Stop and diagnose a class.
    Leaf {
        class: String,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        expected_cost: Option<f64>,
    },
}

impl PolicyNode {
    /// A bare leaf without annotations.
    pub fn leaf(class: impl Into<String>) -> PolicyNode {
        PolicyNode::Leaf {
            class: class.into(),
            expected_cost: None,
        }
    }

    /// A bare internal node without annotations.
    pub fn test(attribute: impl Into<String>, branches: Vec<Branch>) -> PolicyNode {
        PolicyNode::Test {
            attribute: attribute.into(),
            reach_prob: None,
            value: None,
            branches,
        }
    }
}

impl Branch {
    pub fn new(value: impl Into<String>, node: PolicyNode) -> Branch {
        Branch {
            value: value.into(),
            prob: None,
            node,
        }
    }
}

/// A complete diagnostic policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy {
    pub root: PolicyNode,
}

/// Name-resolved mirror of the tree, used internally so execution does one
/// string lookup per node per policy rather than per example.
enum Compiled {
    Test { attribute: usize, children: Vec<Compiled> },
    Leaf { class: usize },
}

impl Policy {
    pub fn single_leaf(class: impl Into<String>) -> Policy {
        Policy {
            root: PolicyNode::leaf(class),
        }
    }

    /// Number of internal (test) nodes.
    pub fn n_tests(&self) -> usize {
        fn count(node: &PolicyNode) -> usize {
            match node {
                PolicyNode::Leaf { .. } => 0,
                PolicyNode::Test { branches, .. } => {
                    1 + branches.iter().map(|b| count(&b.node)).sum::<usize>()
                }
            }
        }
        count(&self.root)
    }

    /// Longest chain of tests from the root to a leaf; a bare leaf has
    /// depth zero.
    pub fn depth(&self) -> usize {
        fn depth(node: &PolicyNode) -> usize {
            match node {
                PolicyNode::Leaf { .. } => 0,
                PolicyNode::Test { branches, .. } => {
                    1 + branches.iter().map(|b| depth(&b.node)).max().unwrap_or(0)
                }
            }
        }
        depth(&self.root)
    }

    /// Resolves names to indices and checks the structural invariants: every
    /// tested attribute and diagnosed class exists, each internal node has
    /// exactly one branch per attribute value, and no path tests an
    /// attribute twice.
    fn compile(&self, data: &Dataset) -> Result<Compiled, PolicyError> {
        fn build(
            node: &PolicyNode,
            data: &Dataset,
            seen: &mut Vec<bool>,
        ) -> Result<Compiled, PolicyError> {
            match node {
                PolicyNode::Leaf { class, .. } => {
                    let k = data
                        .class_index(class)
                        .ok_or_else(|| PolicyError::UnknownClass(class.clone()))?;
                    Ok(Compiled::Leaf { class: k })
                }
                PolicyNode::Test {
                    attribute, branches, ..
                } => {
                    let a = data
                        .attribute_index(attribute)
                        .ok_or_else(|| PolicyError::UnknownAttribute(attribute.clone()))?;
                    if seen[a] {
                        return Err(PolicyError::RepeatedAttribute(attribute.clone()));
                    }
                    seen[a] = true;
                    let arity = data.arity(a);
                    let mut children: Vec<Option<Compiled>> = Vec::new();
                    children.resize_with(arity, || None);
                    for branch in branches {
                        let v = data.attributes[a]
                            .values
                            .iter()
                            .position(|label| label == &branch.value)
                            .ok_or_else(|| PolicyError::UnknownValue {
                                attribute: attribute.clone(),
                                value: branch.value.clone(),
                            })?;
                        if children[v].is_some() {
                            return Err(PolicyError::DuplicateBranch {
                                attribute: attribute.clone(),
                                value: branch.value.clone(),
                            });
                        }
                        children[v] = Some(build(&branch.node, data, seen)?);
                    }
                    seen[a] = false;
                    let mut out = Vec::with_capacity(arity);
                    for (v, child) in children.into_iter().enumerate() {
                        out.push(child.ok_or_else(|| PolicyError::MissingBranch {
                            attribute: attribute.clone(),
                            value: data.attributes[a].values[v].clone(),
                        })?);
                    }
                    Ok(Compiled::Test {
                        attribute: a,
                        children: out,
                    })
                }
            }
        }
        let mut seen = vec![false; data.n_attributes()];
        build(&self.root, data, &mut seen)
    }

    /// Runs the policy on one example: the predicted class and the total
    /// cost, i.e. the test costs along the path plus the misdiagnosis cost
    /// against the example's true class.
    pub fn execute(
        &self,
        data: &Dataset,
        example: &Example,
        cm: &CostModel,
    ) -> Result<(usize, f64), PolicyError> {
        let compiled = self.compile(data)?;
        Ok(run(&compiled, example, cm))
    }

    /// Total cost of the policy on each listed example, in order.
    pub fn costs_on(
        &self,
        data: &Dataset,
        indices: &[u32],
        cm: &CostModel,
    ) -> Result<Vec<f64>, PolicyError> {
        let compiled = self.compile(data)?;
        Ok(indices
            .iter()
            .map(|&i| run(&compiled, &data.examples[i as usize], cm).1)
            .collect())
    }

    /// Mean total cost over a test set.
    pub fn v_test(
        &self,
        data: &Dataset,
        indices: &[u32],
        cm: &CostModel,
    ) -> Result<f64, PolicyError> {
        if indices.is_empty() {
            return Err(PolicyError::EmptyTestSet);
        }
        let costs = self.costs_on(data, indices, cm)?;
        Ok(costs.iter().sum::<f64>() / costs.len() as f64)
    }

    /// The policy's expected total cost under an estimator's probabilities,
    /// computed bottom-up. Branches with probability zero contribute nothing
    /// and are not entered.
    pub fn expected_value(&self, est: &Estimator, cm: &CostModel) -> Result<f64, PolicyError> {
        let compiled = self.compile(est.data())?;
        let root_matches = est.matching(&State::empty());
        value_of(&compiled, est, cm, &State::empty(), &root_matches)
    }

    /// A copy of the policy with annotations filled in from an estimator:
    /// branch probabilities, node values, reach probabilities, and leaf
    /// expected misdiagnosis costs. In subtrees the estimator cannot reach
    /// (probability zero under maximum likelihood), only reach probabilities
    /// are written and value annotations stay empty.
    pub fn annotated(&self, est: &Estimator, cm: &CostModel) -> Result<Policy, PolicyError> {
        self.compile(est.data())?;
        let root_matches = est.matching(&State::empty());
        let (root, _) = annotate(&self.root, est, cm, &State::empty(), &root_matches, Some(1.0))?;
        Ok(Policy { root })
    }

    /// Renders the policy in DOT. Internal nodes are boxes labeled with the
    /// attribute (and value annotation when present), leaves are ellipses
    /// labeled with the class (and expected cost), and edges carry the
    /// branch value (and probability).
    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph policy {\n");
        out.push_str("  rankdir=TB;\n");
        out.push_str("  node [fontname=\"Helvetica\"];\n");
        let mut next_id = 0usize;
        emit_dot(&self.root, &mut out, &mut next_id);
        out.push_str("}\n");
        out
    }

    /// Writes the policy as versioned JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        let file = PolicyFile {
            format: POLICY_FORMAT.to_string(),
            version: FILE_VERSION,
            policy: self.clone(),
        };
        let text = serde_json::to_string_pretty(&file).expect("policy serializes");
        fs::write(path.as_ref(), text).map_err(|source| PolicyError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })
    }

    /// Reads a policy written by [`Policy::save`], refusing other formats
    /// and newer versions by name.
    pub fn load(path: impl AsRef<Path>) -> Result<Policy, PolicyError> {
        let text = fs::read_to_string(path.as_ref()).map_err(|source| PolicyError::Io {
            path: path.as_ref().display().to_string(),
            source,
        })?;
        Policy::from_json(&text)
    }

    /// Serializes to the same JSON document [`Policy::save`] writes.
    pub fn to_json(&self) -> String {
        let file = PolicyFile {
            format: POLICY_FORMAT.to_string(),
            version: FILE_VERSION,
            policy: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("policy serializes")
    }

    /// Parses a JSON document produced by [`Policy::to_json`].
    pub fn from_json(text: &str) -> Result<Policy, PolicyError> {
        let file: PolicyFile =
            serde_json::from_str(text).map_err(|e| PolicyError::BadFile(e.to_string()))?;
        if file.format != POLICY_FORMAT {
            return Err(PolicyError::WrongFormat {
                expected: POLICY_FORMAT,
                found: file.format,
            });
        }
        if file.version != FILE_VERSION {
            return Err(PolicyError::UnsupportedVersion {
                format: POLICY_FORMAT,
                found: file.version,
                supported: FILE_VERSION,
            });
        }
        Ok(file.policy)
    }
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    format: String,
    version: u32,
    policy: Policy,
}

fn run(node: &Compiled, example: &Example, cm: &CostModel) -> (usize, f64) {
    let mut cost = 0.0;
    let mut node = node;
    loop {
        match node {
            Compiled::Leaf { class } => {
                return (*class, cost + cm.mc(*class, example.class as usize));
            }
            Compiled::Test { attribute, children } => {
                cost += cm.test_cost(*attribute);
                node = &children[example.values[*attribute] as usize];
            }
        }
    }
}

fn value_of(
    node: &Compiled,
    est: &Estimator,
    cm: &CostModel,
    state: &State,
    matches: &[u32],
) -> Result<f64, PolicyError> {
    match node {
        Compiled::Leaf { class } => {
            let counts = est.class_counts(matches);
            est.diagnosis_cost_of(cm, &counts, *class)
                .ok_or_else(|| crate::mdp::MdpError::UndefinedProbability { state: state.key() }.into())
        }
        Compiled::Test { attribute, children } => {
            let buckets = est.split_by_value(matches, *attribute);
            let counts: Vec<u32> = buckets.iter().map(|b| b.len() as u32).collect();
            let probs = est.outcome_probs_of(&counts).ok_or_else(|| {
                PolicyError::from(crate::mdp::MdpError::UndefinedProbability { state: state.key() })
            })?;
            let mut total = cm.test_cost(*attribute);
            for (v, child) in children.iter().enumerate() {
                if probs[v] == 0.0 {
                    continue;
                }
                let child_state = state.with(*attribute, v);
                total += probs[v] * value_of(child, est, cm, &child_state, &buckets[v])?;
            }
            Ok(total)
        }
    }
}

fn annotate(
    node: &PolicyNode,
    est: &Estimator,
    cm: &CostModel,
    state: &State,
    matches: &[u32],
    reach: Option<f64>,
) -> Result<(PolicyNode, Option<f64>), PolicyError> {
    let data = est.data();
    match node {
        PolicyNode::Leaf { class, .. } => {
            let k = data.class_index(class).expect("checked by compile");
            let counts = est.class_counts(matches);
            let cost = est.diagnosis_cost_of(cm, &counts, k);
            Ok((
                PolicyNode::Leaf {
                    class: class.clone(),
                    expected_cost: cost,
                },
                cost,
            ))
        }
        PolicyNode::Test {
            attribute, branches, ..
        } => {
            let a = data.attribute_index(attribute).expect("checked by compile");
            let buckets = est.split_by_value(matches, a);
            let counts: Vec<u32> = buckets.iter().map(|b| b.len() as u32).collect();
            let probs = est.outcome_probs_of(&counts);
            let mut new_branches = Vec::with_capacity(branches.len());
            let mut total = Some(cm.test_cost(a));
            for branch in branches {
                let v = data.attributes[a]
                    .values
                    .iter()
                    .position(|label| label == &branch.value)
                    .expect("checked by compile");
                let p = probs.as_ref().map(|p| p[v]);
                let child_state = state.with(a, v);
                let child_reach = match (reach, p) {
                    (Some(r), Some(p)) => Some(r * p),
                    _ => None,
                };
                let (child, child_value) = if p == Some(0.0) {
                    // Unreachable under these estimates: keep the subtree,
                    // record the zero reach probability, annotate nothing
                    // else.
                    annotate(&branch.node, est, cm, &child_state, &[], child_reach)?
                } else {
                    annotate(&branch.node, est, cm, &child_state, &buckets[v], child_reach)?
                };
                total = match (total, p, child_value) {
                    (Some(t), Some(0.0), _) => Some(t),
                    (Some(t), Some(p), Some(cv)) => Some(t + p * cv),
                    _ => None,
                };
                new_branches.push(Branch {
                    value: branch.value.clone(),
                    prob: p,
                    node: child,
                });
            }
            Ok((
                PolicyNode::Test {
                    attribute: attribute.clone(),
                    reach_prob: reach,
                    value: total,
                    branches: new_branches,
                },
                total,
            ))
        }
    }
}

fn fmt_ann(x: f64) -> String {
    format!("{x:.2}")
}

fn emit_dot(node: &PolicyNode, out: &mut String, next_id: &mut usize) -> usize {
    let id = *next_id;
    *next_id += 1;
    match node {
        PolicyNode::Leaf {
            class,
            expected_cost,
        } => {
            let label = match expected_cost {
                Some(c) => format!("{class} ({})", fmt_ann(*c)),
                None => class.clone(),
            };
            let _ = writeln!(out, "  n{id} [shape=ellipse, label=\"{label}\"];");
        }
        PolicyNode::Test {
            attribute,
            value,
            branches,
            ..
        } => {
            let label = match value {
                Some(v) => format!("{attribute} ({})", fmt_ann(*v)),
                None => attribute.clone(),
            };
            let _ = writeln!(out, "  n{id} [shape=box, label=\"{label}\"];");
            for branch in branches {
                let child_id = emit_dot(&branch.node, out, next_id);
                let edge_label = match branch.prob {
                    Some(p) => format!("{} ({})", branch.value, fmt_ann(p)),
                    None => branch.value.clone(),
                };
                let _ = writeln!(out, "  n{id} -> n{child_id} [label=\"{edge_label}\"];");
            }
        }
    }
    id
}
