//! Greedy policy learners: Norton's criterion, its cost-sensitive leaf
//! variant, and one-step value of information.
//!
//! All three grow a single decision tree top-down and never revisit a test
//! choice. Nor picks the test maximizing information gain per unit cost,
//!
//! ```text
//! I(x_n; y | s) / C(x_n),
//! I(x_n; y | s) = H(y|s) - sum_v P(x_n = v | s) * H(y | s, x_n = v),
//! ```
//!
//! and labels leaves with the most likely class; it is regularized by a
//! minimum-support rule during growth and C4.5's pessimistic post-pruning
//! afterwards. MC-N grows identically but labels leaves with the diagnosis
//! of minimum expected cost and post-prunes by comparing each subtree's
//! expected total cost against diagnosing immediately. VOI asks, test by
//! test, whether one more measurement pays for itself:
//!
//! ```text
//! 1-step-LA(s, x_n) = C(x_n) + sum_v P(x_n = v | s) * min_k C(s + v, f_k)
//! ```
//!
//! and only tests while `C(s, f_best) - 1-step-LA(s, x_best)` stays strictly
//! positive, which builds its pruning into the growth itself.

use crate::costs::CostModel;
use crate::dataset::Dataset;
use crate::mdp::{ClassDistribution, Estimator, MdpError, State};
use crate::policy::{Branch, Policy, PolicyError, PolicyNode};

/// One-sided z quantile of the 75% confidence level used by C4.5's
/// pessimistic error estimate.
pub const C45_CF_Z: f64 = 0.6744898;

/// Knobs shared by the greedy learners.
#[derive(Debug, Clone)]
pub struct GreedyConfig {
    /// Laplace-correct every probability used while growing and pruning.
    pub laplace: bool,
    /// A test is eligible only if at least this many outcomes have enough
    /// matching examples (Nor and MC-N only).
    pub min_outcomes: usize,
    /// How many real matching examples an outcome needs to count toward
    /// `min_outcomes`.
    pub min_examples: u32,
    /// z quantile for the pessimistic error's confidence interval.
    pub c45_cf_z: f64,
}

impl GreedyConfig {
    pub fn new(laplace: bool) -> Self {
        GreedyConfig {
            laplace,
            min_outcomes: 2,
            min_examples: 2,
            c45_cf_z: C45_CF_Z,
        }
    }
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig::new(false)
    }
}

/// Shannon entropy in bits; `0 log 0` counts as zero.
pub fn entropy(dist: &ClassDistribution) -> f64 {
    dist.probs()
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum()
}

fn entropy_of_counts(est: &Estimator, counts: &[u32]) -> Option<f64> {
    est.class_distribution_of(counts).map(|d| entropy(&d))
}

fn gain_from_buckets(est: &Estimator, parent_counts: &[u32], buckets: &[Vec<u32>]) -> Option<f64> {
    let h_parent = entropy_of_counts(est, parent_counts)?;
    let sizes: Vec<u32> = buckets.iter().map(|b| b.len() as u32).collect();
    let probs = est.outcome_probs_of(&sizes)?;
    let mut h_children = 0.0;
    for (v, bucket) in buckets.iter().enumerate() {
        if probs[v] == 0.0 {
            continue;
        }
        let child_counts = est.class_counts(bucket);
        h_children += probs[v] * entropy_of_counts(est, &child_counts)?;
    }
    Some(h_parent - h_children)
}

/// Information gain of measuring attribute `n` in `state`.
pub fn info_gain(est: &Estimator, state: &State, n: usize) -> Result<f64, MdpError> {
    debug_assert!(!state.contains(n), "attribute already measured");
    let matches = est.matching(state);
    let counts = est.class_counts(&matches);
    let buckets = est.split_by_value(&matches, n);
    gain_from_buckets(est, &counts, &buckets)
        .ok_or_else(|| MdpError::UndefinedProbability { state: state.key() })
}

fn la_from_buckets(
    est: &Estimator,
    cm: &CostModel,
    attribute: usize,
    buckets: &[Vec<u32>],
) -> Option<f64> {
    let sizes: Vec<u32> = buckets.iter().map(|b| b.len() as u32).collect();
    let probs = est.outcome_probs_of(&sizes)?;
    let mut total = cm.test_cost(attribute);
    for (v, bucket) in buckets.iter().enumerate() {
        if probs[v] == 0.0 {
            continue;
        }
        let child_counts = est.class_counts(bucket);
        let (_, best) = est.best_diagnosis_of(cm, &child_counts)?;
        total += probs[v] * best;
    }
    Some(total)
}

/// `1-step-LA(s, x_n)`: the expected cost of measuring `n` once and then
/// diagnosing as cheaply as possible in each outcome.
pub fn one_step_la(
    est: &Estimator,
    cm: &CostModel,
    state: &State,
    n: usize,
) -> Result<f64, MdpError> {
    debug_assert!(!state.contains(n), "attribute already measured");
    let matches = est.matching(state);
    let buckets = est.split_by_value(&matches, n);
    la_from_buckets(est, cm, n, &buckets)
        .ok_or_else(|| MdpError::UndefinedProbability { state: state.key() })
}

/// Pessimistic error count: `n` times the upper limit of the normal-
/// approximation confidence interval around the error rate `p = e / n`,
/// with continuity correction, the limit clamped into [0, 1].
pub fn c45_pessimistic_error(n: u32, e: f64, z: f64) -> f64 {
    debug_assert!(n >= 1, "pessimistic error needs at least one example");
    let nf = f64::from(n);
    pessimistic_count(nf, e / nf, z)
}

fn pessimistic_count(n: f64, p: f64, z: f64) -> f64 {
    let ucl = p + z * (p * (1.0 - p) / n).sqrt() + 1.0 / (2.0 * n);
    n * ucl.clamp(0.0, 1.0)
}

/// The error rate a leaf's pessimistic estimate is built on: observed under
/// maximum likelihood, shifted by one fake example per class under Laplace.
/// The sample size stays the real example count in both modes.
fn leaf_error_rate(est: &Estimator, n: u32, errors: u32) -> f64 {
    if est.laplace() {
        let k = est.n_classes() as f64;
        (f64::from(errors) + k - 1.0) / (f64::from(n) + k)
    } else {
        f64::from(errors) / f64::from(n)
    }
}

fn leaf_pessimistic(est: &Estimator, z: f64, counts: &[u32], class: usize) -> f64 {
    let n: u32 = counts.iter().sum();
    if n == 0 {
        // No examples reach this node, so it can commit no errors.
        return 0.0;
    }
    let errors = n - counts[class];
    pessimistic_count(f64::from(n), leaf_error_rate(est, n, errors), z)
}

fn grow_norton(
    est: &Estimator,
    cm: &CostModel,
    cfg: &GreedyConfig,
    measured: &mut [bool],
    matches: &[u32],
    cost_leaves: bool,
) -> PolicyNode {
    let data = est.data();
    let counts = est.class_counts(matches);
    let leaf_class = if cost_leaves {
        est.best_diagnosis_of(cm, &counts)
            .expect("reachable node has defined probabilities")
            .0
    } else {
        est.most_likely_class(&counts)
    };
    let leaf = || PolicyNode::leaf(data.classes[leaf_class].clone());

    if counts.iter().filter(|&&c| c > 0).count() == 1 {
        return leaf();
    }

    let mut best: Option<(usize, f64, Vec<Vec<u32>>)> = None;
    for a in 0..data.n_attributes() {
        if measured[a] {
            continue;
        }
        let buckets = est.split_by_value(matches, a);
        let supported = buckets
            .iter()
            .filter(|b| b.len() as u32 >= cfg.min_examples)
            .count();
        if supported < cfg.min_outcomes {
            continue;
        }
        let gain = gain_from_buckets(est, &counts, &buckets)
            .expect("reachable node has defined probabilities");
        let score = gain / cm.test_cost(a);
        if best.as_ref().map_or(true, |&(_, s, _)| score > s) {
            best = Some((a, score, buckets));
        }
    }
    let Some((a, _, buckets)) = best else {
        return leaf();
    };

    measured[a] = true;
    let mut branches = Vec::with_capacity(buckets.len());
    for (v, bucket) in buckets.iter().enumerate() {
        let node = if bucket.is_empty() && !est.laplace() {
            // Unobserved outcome: fall back to what this node would have
            // diagnosed.
            PolicyNode::leaf(data.classes[leaf_class].clone())
        } else {
            grow_norton(est, cm, cfg, measured, bucket, cost_leaves)
        };
        branches.push(Branch::new(data.attributes[a].values[v].clone(), node));
    }
    measured[a] = false;
    PolicyNode::test(data.attributes[a].name.clone(), branches)
}

/// Norton's greedy learner: grows by information gain per unit test cost
/// with minimum support, labels leaves with the most likely class, then
/// applies pessimistic post-pruning.
pub fn grow_nor(data: &Dataset, train: &[u32], cm: &CostModel, cfg: &GreedyConfig) -> Policy {
    assert!(!train.is_empty(), "cannot grow a policy from no examples");
    let est = Estimator::new(data, train, cfg.laplace);
    let mut measured = vec![false; data.n_attributes()];
    let root = grow_norton(&est, cm, cfg, &mut measured, est.train_indices(), false);
    c45_post_prune(&Policy { root }, &est, cfg.c45_cf_z)
        .expect("freshly grown policy is structurally valid")
}

/// The cost-sensitive variant of [`grow_nor`]: identical growth, but leaves
/// diagnose with minimum expected cost and pruning compares expected total
/// costs.
pub fn grow_mcn(data: &Dataset, train: &[u32], cm: &CostModel, cfg: &GreedyConfig) -> Policy {
    assert!(!train.is_empty(), "cannot grow a policy from no examples");
    let est = Estimator::new(data, train, cfg.laplace);
    let mut measured = vec![false; data.n_attributes()];
    let root = grow_norton(&est, cm, cfg, &mut measured, est.train_indices(), true);
    post_prune_expected_cost(&Policy { root }, &est, cm)
        .expect("freshly grown policy is structurally valid")
}

fn grow_voi_node(
    est: &Estimator,
    cm: &CostModel,
    measured: &mut [bool],
    matches: &[u32],
) -> PolicyNode {
    let data = est.data();
    let counts = est.class_counts(matches);
    let (f_best, c_best) = est
        .best_diagnosis_of(cm, &counts)
        .expect("reachable node has defined probabilities");
    let leaf = || PolicyNode::leaf(data.classes[f_best].clone());

    let mut best: Option<(usize, f64, Vec<Vec<u32>>)> = None;
    for a in 0..data.n_attributes() {
        if measured[a] {
            continue;
        }
        let buckets = est.split_by_value(matches, a);
        let la = la_from_buckets(est, cm, a, &buckets)
            .expect("reachable node has defined probabilities");
        if best.as_ref().map_or(true, |&(_, l, _)| la < l) {
            best = Some((a, la, buckets));
        }
    }
    let Some((a, la, buckets)) = best else {
        return leaf();
    };
    if c_best - la <= 0.0 {
        return leaf();
    }

    measured[a] = true;
    let mut branches = Vec::with_capacity(buckets.len());
    for (v, bucket) in buckets.iter().enumerate() {
        let node = if bucket.is_empty() && !est.laplace() {
            PolicyNode::leaf(data.classes[f_best].clone())
        } else {
            grow_voi_node(est, cm, measured, bucket)
        };
        branches.push(Branch::new(data.attributes[a].values[v].clone(), node));
    }
    measured[a] = false;
    PolicyNode::test(data.attributes[a].name.clone(), branches)
}

/// The one-step value-of-information learner: tests while the best test's
/// lookahead cost stays strictly below diagnosing immediately, with no
/// support rule and no post-pruning.
pub fn grow_voi(data: &Dataset, train: &[u32], cm: &CostModel, cfg: &GreedyConfig) -> Policy {
    assert!(!train.is_empty(), "cannot grow a policy from no examples");
    let est = Estimator::new(data, train, cfg.laplace);
    let mut measured = vec![false; data.n_attributes()];
    let root = grow_voi_node(&est, cm, &mut measured, est.train_indices());
    Policy { root }
}

/// C4.5's pessimistic post-pruning: bottom-up, an internal node becomes a
/// leaf when its children's summed pessimistic errors reach or exceed the
/// pessimistic error it would have as a leaf.
pub fn c45_post_prune(policy: &Policy, est: &Estimator, z: f64) -> Result<Policy, PolicyError> {
    fn walk(
        node: &PolicyNode,
        est: &Estimator,
        z: f64,
        matches: &[u32],
    ) -> Result<(PolicyNode, f64), PolicyError> {
        let data = est.data();
        match node {
            PolicyNode::Leaf { class, .. } => {
                let k = data
                    .class_index(class)
                    .ok_or_else(|| PolicyError::UnknownClass(class.clone()))?;
                let counts = est.class_counts(matches);
                Ok((node.clone(), leaf_pessimistic(est, z, &counts, k)))
            }
            PolicyNode::Test {
                attribute, branches, ..
            } => {
                let a = data
                    .attribute_index(attribute)
                    .ok_or_else(|| PolicyError::UnknownAttribute(attribute.clone()))?;
                let buckets = est.split_by_value(matches, a);
                let mut new_branches = Vec::with_capacity(branches.len());
                let mut children_sum = 0.0;
                for branch in branches {
                    let v = data.attributes[a]
                        .values
                        .iter()
                        .position(|label| label == &branch.value)
                        .ok_or_else(|| PolicyError::UnknownValue {
                            attribute: attribute.clone(),
                            value: branch.value.clone(),
                        })?;
                    let (child, pess) = walk(&branch.node, est, z, &buckets[v])?;
                    children_sum += pess;
                    new_branches.push(Branch {
                        value: branch.value.clone(),
                        prob: branch.prob,
                        node: child,
                    });
                }
                let counts = est.class_counts(matches);
                let majority = est.most_likely_class(&counts);
                let as_leaf = leaf_pessimistic(est, z, &counts, majority);
                if children_sum >= as_leaf {
                    Ok((
                        PolicyNode::leaf(data.classes[majority].clone()),
                        as_leaf,
                    ))
                } else {
                    Ok((
                        PolicyNode::Test {
                            attribute: attribute.clone(),
                            reach_prob: None,
                            value: None,
                            branches: new_branches,
                        },
                        children_sum,
                    ))
                }
            }
        }
    }
    let (root, _) = walk(&policy.root, est, z, est.train_indices())?;
    Ok(Policy { root })
}

/// Expected-total-cost post-pruning: bottom-up, an internal node becomes the
/// leaf `f_best` when diagnosing immediately is strictly cheaper than the
/// node's expected total cost, values being recomputed as nodes contract.
pub fn post_prune_expected_cost(
    policy: &Policy,
    est: &Estimator,
    cm: &CostModel,
) -> Result<Policy, PolicyError> {
    fn walk(
        node: &PolicyNode,
        est: &Estimator,
        cm: &CostModel,
        matches: &[u32],
    ) -> Result<(PolicyNode, Option<f64>), PolicyError> {
        let data = est.data();
        match node {
            PolicyNode::Leaf { class, .. } => {
                let k = data
                    .class_index(class)
                    .ok_or_else(|| PolicyError::UnknownClass(class.clone()))?;
                let counts = est.class_counts(matches);
                Ok((node.clone(), est.diagnosis_cost_of(cm, &counts, k)))
            }
            PolicyNode::Test {
                attribute, branches, ..
            } => {
                let a = data
                    .attribute_index(attribute)
                    .ok_or_else(|| PolicyError::UnknownAttribute(attribute.clone()))?;
                let buckets = est.split_by_value(matches, a);
                let sizes: Vec<u32> = buckets.iter().map(|b| b.len() as u32).collect();
                let probs = est.outcome_probs_of(&sizes);
                let mut new_branches = Vec::with_capacity(branches.len());
                let mut q = probs.as_ref().map(|_| cm.test_cost(a));
                for branch in branches {
                    let v = data.attributes[a]
                        .values
                        .iter()
                        .position(|label| label == &branch.value)
                        .ok_or_else(|| PolicyError::UnknownValue {
                            attribute: attribute.clone(),
                            value: branch.value.clone(),
                        })?;
                    let (child, child_value) = walk(&branch.node, est, cm, &buckets[v])?;
                    q = match (q, probs.as_ref().map(|p| p[v]), child_value) {
                        (Some(t), Some(0.0), _) => Some(t),
                        (Some(t), Some(p), Some(cv)) => Some(t + p * cv),
                        _ => None,
                    };
                    new_branches.push(Branch {
                        value: branch.value.clone(),
                        prob: branch.prob,
                        node: child,
                    });
                }
                let counts = est.class_counts(matches);
                let best = est.best_diagnosis_of(cm, &counts);
                match (best, q) {
                    (Some((f_best, c_best)), Some(q)) if c_best < q => Ok((
                        PolicyNode::leaf(data.classes[f_best].clone()),
                        Some(c_best),
                    )),
                    (_, q) => Ok((
                        PolicyNode::Test {
                            attribute: attribute.clone(),
                            reach_prob: None,
                            value: None,
                            branches: new_branches,
                        },
                        q,
                    )),
                }
            }
        }
    }
    let (root, _) = walk(&policy.root, est, cm, est.train_indices())?;
    Ok(Policy { root })
}
