//! AO* search for cost-optimal diagnostic policies, with regularizers.
//!
//! The learner grows the AND/OR graph one expansion at a time. Each
//! iteration finds the optimistic policy's most promising unexpanded AND
//! node (the tip with the highest probability of being reached), expands
//! it, and backs up both value functions. The optimistic root value can
//! only rise and the realistic one only fall, so the search converges when
//! the optimistic policy is complete, at which point both values meet and
//! the realistic policy is optimal for the training-estimated model. A
//! byte budget or an iteration cap may stop the search early; either way
//! the realistic policy is complete and is returned as the result.
//!
//! Three overfitting controls beyond the Laplace correction are provided.
//! Statistical pruning discards a node's optimistic action when its value
//! lies within a normal confidence interval of the realistic value,
//!
//! ```text
//! prune  iff  v_opt(s) >= v_real(s) - z * std / sqrt(m)
//! ```
//!
//! with the standard deviation taken over the per-example costs of running
//! the realistic policy from `s`. Early stopping splits the training data
//! in half, searches on one half, and keeps the snapshot that scored best
//! on the other. Pessimistic post-pruning walks the finished policy bottom
//! up and contracts any subtree whose upper confidence bound is no better
//! than diagnosing outright.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::andor::{AndId, Graph, GraphError, OrId, DEFAULT_BYTE_LIMIT};
use crate::costs::CostModel;
use crate::dataset::{stratified_split, Dataset, TrainFrac};
use crate::mdp::{Action, Estimator, MdpError, State};
use crate::policy::{Branch, Policy, PolicyError, PolicyNode};

/// Two-sided 95% standard normal quantile.
pub const CI_Z_95: f64 = 1.959964;

#[derive(Debug, Error)]
pub enum AoError {
    #[error("cannot learn from an empty training set")]
    EmptyTrainingSet,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Undefined(#[from] MdpError),
}

/// Knobs for one search run.
#[derive(Debug, Clone)]
pub struct AoConfig {
    pub laplace: bool,
    /// Statistical pruning of optimistic actions.
    pub sp: bool,
    /// Early stopping against a held-out half of the training data.
    pub es: bool,
    /// Pessimistic post-pruning of the final policy.
    pub ppp: bool,
    pub byte_limit: usize,
    /// Safety valve on search iterations.
    pub max_iterations: usize,
    /// Seeds the early-stopping split.
    pub seed: u64,
    pub ci_z_95: f64,
    /// When set, every prune double-checks that no realistic value moved.
    pub sp_audit: bool,
}

impl AoConfig {
    pub fn new(laplace: bool) -> AoConfig {
        AoConfig {
            laplace,
            sp: false,
            es: false,
            ppp: false,
            byte_limit: DEFAULT_BYTE_LIMIT,
            max_iterations: usize::MAX,
            seed: 0,
            ci_z_95: CI_Z_95,
            sp_audit: true,
        }
    }
}

impl Default for AoConfig {
    fn default() -> Self {
        AoConfig::new(false)
    }
}

/// One record in the search log.
#[derive(Debug, Clone)]
pub enum TraceEvent {
    Expanded {
        iteration: usize,
        state: String,
        attribute: usize,
        root_v_opt: f64,
        root_v_real: f64,
        validation_cost: Option<f64>,
    },
    Pruned {
        iteration: usize,
        state: String,
        attribute: usize,
        v_opt: f64,
        ci_lower: f64,
        v_real: f64,
    },
}

/// Append-only log of a search run, plus how it ended.
#[derive(Debug, Clone, Default)]
pub struct SearchTrace {
    pub events: Vec<TraceEvent>,
    pub expansions: usize,
    pub converged: bool,
    pub memory_limit_hit: bool,
    pub iteration_cap_hit: bool,
    /// Realistic values that moved during a prune; always zero unless the
    /// backup has a bug.
    pub sp_real_value_violations: usize,
}

impl SearchTrace {
    /// Renders the log as one line per event for report output.
    pub fn lines(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.events.len() + 1);
        for ev in &self.events {
            match ev {
                TraceEvent::Expanded {
                    iteration,
                    state,
                    attribute,
                    root_v_opt,
                    root_v_real,
                    validation_cost,
                } => {
                    let mut line = format!(
                        "iter {iteration}: expand {state} / x{attribute}  \
                         root v_opt={root_v_opt:.4} v_real={root_v_real:.4}"
                    );
                    if let Some(v) = validation_cost {
                        line.push_str(&format!("  validation={v:.4}"));
                    }
                    out.push(line);
                }
                TraceEvent::Pruned {
                    iteration,
                    state,
                    attribute,
                    v_opt,
                    ci_lower,
                    v_real,
                } => out.push(format!(
                    "iter {iteration}: prune {state} / x{attribute}  \
                     v_opt={v_opt:.4} >= ci_lower={ci_lower:.4} (v_real={v_real:.4})"
                )),
            }
        }
        let ending = if self.converged {
            "converged"
        } else if self.memory_limit_hit {
            "stopped at the memory limit"
        } else if self.iteration_cap_hit {
            "stopped at the iteration cap"
        } else {
            "stopped"
        };
        out.push(format!("{ending} after {} expansions", self.expansions));
        out
    }
}

/// Finds the unexpanded AND node of the optimistic policy with the highest
/// probability of being reached from the root (summed over all paths);
/// ties go to the lexicographically smallest state key. Returns the node
/// and its parent OR node, or nothing once the optimistic policy is
/// complete.
pub fn select_tip(graph: &Graph) -> Option<(OrId, AndId)> {
    use std::collections::BTreeMap;
    let mut levels: BTreeMap<usize, BTreeMap<OrId, f64>> = BTreeMap::new();
    levels
        .entry(graph.or(graph.root()).state.len())
        .or_default()
        .insert(graph.root(), 1.0);
    let mut best: Option<(f64, String, OrId, AndId)> = None;
    while let Some((&depth, _)) = levels.iter().next() {
        let level = levels.remove(&depth).unwrap();
        for (or_id, reach) in level {
            let node = graph.or(or_id);
            let Action::Test(attr) = node.opt_action else {
                continue;
            };
            let edge = node
                .tests
                .iter()
                .find(|e| e.attribute == attr)
                .expect("optimistic action refers to an existing edge");
            let and = graph.and(edge.and_id);
            if !and.expanded {
                let key = node.state.key();
                let better = match &best {
                    None => true,
                    Some((p, k, _, _)) => reach > *p || (reach == *p && key < *k),
                };
                if better {
                    best = Some((reach, key, or_id, edge.and_id));
                }
            } else {
                for (i, &child) in and.children.iter().enumerate() {
                    let p = reach * and.probs[i];
                    if p == 0.0 {
                        continue;
                    }
                    *levels
                        .entry(graph.or(child).state.len())
                        .or_default()
                        .entry(child)
                        .or_insert(0.0) += p;
                }
            }
        }
    }
    best.map(|(_, _, or_id, and_id)| (or_id, and_id))
}

/// Statistical pruning check at a node whose optimistic action was just
/// selected for expansion. The training examples matching `s` are run
/// through the realistic policy from `s`; if the optimistic value is not
/// below the lower limit of the 95% confidence interval around the
/// realistic value, the action is pruned and `true` is returned. A single
/// matching example gives no variance estimate and never prunes.
pub fn sp_check(
    graph: &mut Graph,
    s: OrId,
    est: &Estimator,
    cm: &CostModel,
    cfg: &AoConfig,
    iteration: usize,
    trace: &mut SearchTrace,
) -> bool {
    let (matches, v_opt, center, attr, key) = {
        let node = graph.or(s);
        let Action::Test(attr) = node.opt_action else {
            return false;
        };
        (
            node.matches.clone(),
            node.v_opt,
            node.v_real,
            attr,
            node.state.key(),
        )
    };
    let m = matches.len();
    if m < 2 {
        return false;
    }
    let data = est.data();
    let samples: Vec<f64> = matches
        .iter()
        .map(|&i| graph.realistic_cost_from(s, &data.examples[i as usize], cm))
        .collect();
    let mean = samples.iter().sum::<f64>() / m as f64;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1) as f64;
    let lower = center - cfg.ci_z_95 * var.sqrt() / (m as f64).sqrt();
    if v_opt < lower {
        return false;
    }
    let audit: Option<Vec<f64>> = cfg
        .sp_audit
        .then(|| graph.or_ids().map(|id| graph.or(id).v_real).collect());
    graph.prune_action(s, attr);
    graph.backup(&[s], cm);
    if let Some(before) = audit {
        let moved = graph
            .or_ids()
            .zip(before)
            .filter(|&(id, old)| graph.or(id).v_real != old)
            .count();
        trace.sp_real_value_violations += moved;
    }
    trace.events.push(TraceEvent::Pruned {
        iteration,
        state: key,
        attribute: attr,
        v_opt,
        ci_lower: lower,
        v_real: center,
    });
    true
}

fn validation_mean(graph: &Graph, data: &Dataset, validation: &[u32], cm: &CostModel) -> f64 {
    let total: f64 = validation
        .iter()
        .map(|&i| graph.realistic_cost_of(&data.examples[i as usize], cm))
        .sum();
    total / validation.len() as f64
}

/// The shared search loop. With a validation set, the realistic policy is
/// evaluated after every iteration and the best-scoring snapshot kept
/// (strict improvement only, so ties favor the earlier, smaller policy).
fn run_search(
    est: &Estimator,
    cm: &CostModel,
    cfg: &AoConfig,
    validation: Option<&[u32]>,
) -> (Graph, SearchTrace, Option<Policy>) {
    let data = est.data();
    let mut graph = Graph::new(est, cm, cfg.byte_limit);
    let mut trace = SearchTrace::default();
    let mut best: Option<(Policy, f64)> = validation.map(|val| {
        let cost = validation_mean(&graph, data, val, cm);
        (graph.realistic_policy(est), cost)
    });
    let mut iteration = 0usize;
    loop {
        let Some((parent, and_id)) = select_tip(&graph) else {
            trace.converged = true;
            break;
        };
        if iteration == cfg.max_iterations {
            trace.iteration_cap_hit = true;
            break;
        }
        iteration += 1;
        if cfg.sp && sp_check(&mut graph, parent, est, cm, cfg, iteration, &mut trace) {
            if let (Some(val), Some((_, best_cost))) = (validation, best.as_mut()) {
                let cost = validation_mean(&graph, data, val, cm);
                if cost < *best_cost {
                    *best_cost = cost;
                    best.as_mut().unwrap().0 = graph.realistic_policy(est);
                }
            }
            continue;
        }
        let (state, attribute) = {
            let and = graph.and(and_id);
            (graph.or(and.parent).state.key(), and.attribute)
        };
        match graph.expand(and_id, est, cm) {
            Ok(_) => {}
            Err(GraphError::MemoryLimitExceeded { .. }) => {
                trace.memory_limit_hit = true;
                break;
            }
            Err(GraphError::AlreadyExpanded) => {
                unreachable!("select_tip only returns unexpanded nodes")
            }
        }
        graph.backup(&[parent], cm);
        trace.expansions += 1;
        let validation_cost = validation.map(|val| validation_mean(&graph, data, val, cm));
        if let (Some(cost), Some((_, best_cost))) = (validation_cost, best.as_mut()) {
            if cost < *best_cost {
                *best_cost = cost;
                best.as_mut().unwrap().0 = graph.realistic_policy(est);
            }
        }
        let root = graph.or(graph.root());
        trace.events.push(TraceEvent::Expanded {
            iteration,
            state,
            attribute,
            root_v_opt: root.v_opt,
            root_v_real: root.v_real,
            validation_cost,
        });
    }
    (graph, trace, best.map(|(p, _)| p))
}

/// Learns a policy by AO* search over the training examples, applying the
/// regularizers selected in the config. Stopping early (memory budget or
/// iteration cap) is not an error: the current realistic policy is
/// returned and the trace says why the search stopped.
pub fn ao_star(
    data: &Dataset,
    train: &[u32],
    cm: &CostModel,
    cfg: &AoConfig,
) -> Result<(Policy, SearchTrace), AoError> {
    if train.is_empty() {
        return Err(AoError::EmptyTrainingSet);
    }
    if cfg.es {
        return es_learn(data, train, cm, cfg);
    }
    let est = Estimator::new(data, train, cfg.laplace);
    let (graph, trace, _) = run_search(&est, cm, cfg, None);
    let mut policy = graph.realistic_policy(&est);
    if cfg.ppp {
        policy = ppp_prune(&policy, &est, cm, cfg.ci_z_95)?;
    }
    Ok((policy, trace))
}

/// Early stopping: the training examples are split in half, stratified by
/// class and seeded by the config; the search runs on one half while the
/// other scores every intermediate realistic policy, and the best-scoring
/// snapshot is returned. Probabilities come from the searched half only.
pub fn es_learn(
    data: &Dataset,
    train: &[u32],
    cm: &CostModel,
    cfg: &AoConfig,
) -> Result<(Policy, SearchTrace), AoError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (sub, val) = stratified_split(data, train, TrainFrac::HALF, &mut rng);
    if sub.is_empty() || val.is_empty() {
        return Err(AoError::EmptyTrainingSet);
    }
    let est = Estimator::new(data, &sub, cfg.laplace);
    let (_, trace, best) = run_search(&est, cm, cfg, Some(&val));
    let mut policy = best.expect("a validation snapshot exists from iteration zero");
    if cfg.ppp {
        policy = ppp_prune(&policy, &est, cm, cfg.ci_z_95)?;
    }
    Ok((policy, trace))
}

/// Upper limit of the normal confidence interval for the cost of
/// diagnosing class `k` at a state, from the misdiagnosis costs of the
/// matching examples. Under the Laplace correction one fake example per
/// class joins the sample. A single sample (or none) gives a zero-width
/// bound.
fn leaf_upper_bound(est: &Estimator, cm: &CostModel, k: usize, matches: &[u32], z: f64) -> f64 {
    let data = est.data();
    if matches.is_empty() {
        // Zero-width bound at the diagnosis cost itself. Such leaves sit
        // under unobserved outcomes: weight zero for maximum likelihood,
        // the uniform-distribution cost under Laplace.
        return est
            .diagnosis_cost_of(cm, &vec![0; data.n_classes()], k)
            .unwrap_or(0.0);
    }
    let mut samples: Vec<f64> = matches
        .iter()
        .map(|&i| cm.mc(k, data.examples[i as usize].class as usize))
        .collect();
    if est.laplace() {
        for c in 0..data.n_classes() {
            samples.push(cm.mc(k, c));
        }
    }
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return mean;
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    mean + z * var.sqrt() / (n as f64).sqrt()
}

/// Pessimistic post-pruning: replaces every policy value by an upper
/// confidence bound, bottom-up, and contracts an internal node to its best
/// diagnosis wherever the diagnosis bound is strictly smaller than the
/// subtree bound. Never adds tests.
pub fn ppp_prune(
    policy: &Policy,
    est: &Estimator,
    cm: &CostModel,
    z: f64,
) -> Result<Policy, AoError> {
    let matches = est.matching(&State::empty());
    let (root, _) = ppp_node(&policy.root, est, cm, z, &matches)?;
    Ok(Policy { root })
}

fn ppp_node(
    node: &PolicyNode,
    est: &Estimator,
    cm: &CostModel,
    z: f64,
    matches: &[u32],
) -> Result<(PolicyNode, f64), AoError> {
    let data = est.data();
    match node {
        PolicyNode::Leaf { class, .. } => {
            let k = data
                .class_index(class)
                .ok_or_else(|| PolicyError::UnknownClass(class.clone()))?;
            Ok((
                PolicyNode::leaf(class.clone()),
                leaf_upper_bound(est, cm, k, matches, z),
            ))
        }
        PolicyNode::Test {
            attribute,
            branches,
            ..
        } => {
            let a = data
                .attribute_index(attribute)
                .ok_or_else(|| PolicyError::UnknownAttribute(attribute.clone()))?;
            let buckets = est.split_by_value(matches, a);
            let sizes: Vec<u32> = buckets.iter().map(|b| b.len() as u32).collect();
            let probs = est
                .outcome_probs_of(&sizes)
                .ok_or(MdpError::UndefinedProbability {
                    state: format!("testing {attribute} where no examples match"),
                })?;
            let mut subtree_ub = cm.test_cost(a);
            let mut pruned_branches = Vec::with_capacity(branches.len());
            for branch in branches {
                let v = data.attributes[a]
                    .values
                    .iter()
                    .position(|name| *name == branch.value)
                    .ok_or_else(|| PolicyError::UnknownValue {
                        attribute: attribute.clone(),
                        value: branch.value.clone(),
                    })?;
                if probs[v] == 0.0 {
                    // Unreachable under these estimates; kept verbatim.
                    pruned_branches.push(Branch::new(branch.value.clone(), branch.node.clone()));
                    continue;
                }
                let (child, child_ub) = ppp_node(&branch.node, est, cm, z, &buckets[v])?;
                subtree_ub += probs[v] * child_ub;
                pruned_branches.push(Branch::new(branch.value.clone(), child));
            }
            let counts = est.class_counts(matches);
            let (k_best, _) = est
                .best_diagnosis_of(cm, &counts)
                .ok_or(MdpError::UndefinedProbability {
                    state: format!("diagnosing at {attribute} where no examples match"),
                })?;
            let alt_ub = leaf_upper_bound(est, cm, k_best, matches, z);
            if alt_ub < subtree_ub {
                Ok((PolicyNode::leaf(data.classes[k_best].clone()), alt_ub))
            } else {
                Ok((
                    PolicyNode::test(attribute.clone(), pruned_branches),
                    subtree_ub,
                ))
            }
        }
    }
}
