//! The explicit AND/OR search graph over diagnostic states.
//!
//! OR nodes are states and choose an action; AND nodes are state-test pairs
//! and average over outcomes. States reached by permuted test orders are
//! shared: the graph keeps one OR node per canonical state. Every node
//! carries two value functions. The optimistic value backs up
//!
//! ```text
//! q_opt(s, x_n) = C(x_n) + sum_v P(x_n = v | s) * v_opt(s + v)
//! ```
//!
//! through expanded AND nodes and uses an admissible heuristic for
//! unexpanded ones: each outcome is charged the cheaper of its best
//! diagnosis and the cheapest still-unmeasured test, since any policy that
//! keeps testing must at least pay for one more test. The realistic value
//! backs up the same sum through expanded AND nodes only, falling back to
//! the best diagnosis elsewhere, so `v_opt(s) <= v_real(s)` always and the
//! realistic policy is complete and executable after every expansion.
//!
//! Graph growth is accounted in bytes against a configurable limit using
//! the per-node and per-edge constants below; an expansion that would cross
//! the limit is refused without changing the graph, which is what makes the
//! search an anytime algorithm.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use thiserror::Error;

use crate::costs::CostModel;
use crate::mdp::{Action, Estimator, State};
use crate::policy::{Branch, Policy, PolicyNode};

/// Accounted bytes for an OR node before its variable-length parts.
pub const OR_NODE_BASE_BYTES: usize = 176;
/// Accounted bytes for an AND node before its outcome list.
pub const AND_NODE_BASE_BYTES: usize = 120;
/// Accounted bytes per measurement stored in a state.
pub const STATE_PAIR_BYTES: usize = 4;
/// Accounted bytes per matching training example index.
pub const MATCH_INDEX_BYTES: usize = 4;
/// Accounted bytes per class count.
pub const CLASS_COUNT_BYTES: usize = 4;
/// Accounted bytes per AND-node outcome (probability, value, child slot).
pub const OUTCOME_BYTES: usize = 24;
/// Accounted bytes per parent back-edge.
pub const PARENT_EDGE_BYTES: usize = 8;
/// Accounted bytes per test edge out of an OR node.
pub const TEST_EDGE_BYTES: usize = 16;

/// Default graph memory budget: 100 MiB of accounted structure.
pub const DEFAULT_BYTE_LIMIT: usize = 100 * (1 << 20);

#[derive(Debug, Error)]
pub enum GraphError {
    #[error(
        "expanding this node needs {bytes_needed} bytes but only {bytes_free} of {byte_limit} remain"
    )]
    MemoryLimitExceeded {
        bytes_needed: usize,
        bytes_free: usize,
        byte_limit: usize,
    },
    #[error("AND node already expanded")]
    AlreadyExpanded,
}

/// Handle to an OR node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrId(u32);

/// Handle to an AND node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AndId(u32);

impl OrId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

impl AndId {
    fn index(self) -> usize {
        self.0 as usize
    }
}

/// An outgoing test action of an OR node.
#[derive(Debug, Clone, Copy)]
pub struct TestEdge {
    pub attribute: usize,
    pub and_id: AndId,
}

/// A state: which examples reach it, what diagnosing now costs, the two
/// value functions, and the chosen actions under each.
#[derive(Debug)]
pub struct OrNode {
    pub state: State,
    pub matches: Vec<u32>,
    pub class_counts: Vec<u32>,
    /// The cheapest diagnosis here and its expected misdiagnosis cost.
    pub best_diag: (usize, f64),
    pub v_opt: f64,
    pub v_real: f64,
    pub opt_action: Action,
    pub real_action: Action,
    /// One edge per unmeasured attribute, ascending; empty for
    /// diagnosis-only states.
    pub tests: Vec<TestEdge>,
    /// Attributes removed from consideration by regularizers.
    pub pruned: BTreeSet<usize>,
    pub parents: Vec<AndId>,
}

impl OrNode {
    fn accounted_bytes(&self) -> usize {
        OR_NODE_BASE_BYTES
            + STATE_PAIR_BYTES * self.state.len()
            + MATCH_INDEX_BYTES * self.matches.len()
            + CLASS_COUNT_BYTES * self.class_counts.len()
            + TEST_EDGE_BYTES * self.tests.len()
    }
}

/// A state-test pair: outcome probabilities and the backed-up costs of
/// paying for the test now.
#[derive(Debug)]
pub struct AndNode {
    pub parent: OrId,
    pub attribute: usize,
    /// Outcome value indices present under the estimator (maximum
    /// likelihood omits unobserved values).
    pub values: Vec<usize>,
    /// Probability of each entry of `values`; sums to one.
    pub probs: Vec<f64>,
    /// Child OR nodes parallel to `values`; empty until expanded.
    pub children: Vec<OrId>,
    pub q_opt: f64,
    pub q_real: f64,
    pub expanded: bool,
}

impl AndNode {
    fn accounted_bytes(&self) -> usize {
        AND_NODE_BASE_BYTES + OUTCOME_BYTES * self.values.len()
    }
}

/// Size and budget counters of a graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphStats {
    pub or_nodes: usize,
    pub and_nodes: usize,
    pub expanded_and_nodes: usize,
    pub bytes_used: usize,
    pub byte_limit: usize,
}

/// The hash-consed AND/OR graph.
pub struct Graph {
    ors: Vec<OrNode>,
    ands: Vec<AndNode>,
    index: HashMap<State, OrId>,
    root: OrId,
    bytes_used: usize,
    byte_limit: usize,
}

/// The optimistic cost of measuring `n` in `state`: the test's own cost
/// plus, per outcome, the cheaper of diagnosing there and the cheapest test
/// that would still remain.
pub fn heuristic_q(est: &Estimator, cm: &CostModel, state: &State, n: usize) -> f64 {
    let matches = est.matching(state);
    let buckets = est.split_by_value(&matches, n);
    heuristic_from_buckets(est, cm, state, n, &buckets)
}

fn cheapest_remaining_test(cm: &CostModel, state: &State, after: usize) -> Option<f64> {
    let mut cheapest: Option<f64> = None;
    for a in 0..cm.n_attributes() {
        if a == after || state.contains(a) {
            continue;
        }
        let c = cm.test_cost(a);
        if cheapest.map_or(true, |best| c < best) {
            cheapest = Some(c);
        }
    }
    cheapest
}

fn heuristic_from_buckets(
    est: &Estimator,
    cm: &CostModel,
    state: &State,
    n: usize,
    buckets: &[Vec<u32>],
) -> f64 {
    let sizes: Vec<u32> = buckets.iter().map(|b| b.len() as u32).collect();
    let probs = est
        .outcome_probs_of(&sizes)
        .expect("heuristic evaluated at a reachable state");
    let cheapest_test = cheapest_remaining_test(cm, state, n);
    let mut total = cm.test_cost(n);
    for (v, bucket) in buckets.iter().enumerate() {
        if probs[v] == 0.0 {
            continue;
        }
        let counts = est.class_counts(bucket);
        let (_, diag) = est
            .best_diagnosis_of(cm, &counts)
            .expect("probability is positive, so the distribution is defined");
        // A state with no data gets no deeper search: diagnosing is its
        // only action, so its floor is the diagnosis cost alone.
        let floor = match cheapest_test {
            Some(c) if !bucket.is_empty() => diag.min(c),
            _ => diag,
        };
        total += probs[v] * floor;
    }
    total
}

fn choose_opt(node: &OrNode, ands: &[AndNode]) -> (f64, Action) {
    let mut best = (node.best_diag.1, Action::Diagnose(node.best_diag.0));
    for edge in &node.tests {
        if node.pruned.contains(&edge.attribute) {
            continue;
        }
        let q = ands[edge.and_id.index()].q_opt;
        if q < best.0 {
            best = (q, Action::Test(edge.attribute));
        }
    }
    best
}

fn choose_real(node: &OrNode, ands: &[AndNode]) -> (f64, Action) {
    let mut best = (node.best_diag.1, Action::Diagnose(node.best_diag.0));
    for edge in &node.tests {
        if node.pruned.contains(&edge.attribute) {
            continue;
        }
        let and = &ands[edge.and_id.index()];
        if !and.expanded {
            continue;
        }
        if and.q_real < best.0 {
            best = (and.q_real, Action::Test(edge.attribute));
        }
    }
    best
}

impl Graph {
    /// Builds a graph containing just the root state.
    pub fn new(est: &Estimator, cm: &CostModel, byte_limit: usize) -> Graph {
        let mut graph = Graph {
            ors: Vec::new(),
            ands: Vec::new(),
            index: HashMap::new(),
            root: OrId(0),
            bytes_used: 0,
            byte_limit,
        };
        let root_matches = est.matching(&State::empty());
        let (node, ands, bytes) = graph.build_or(est, cm, State::empty(), root_matches);
        graph.commit_or(node, ands);
        graph.bytes_used += bytes;
        graph
    }

    pub fn root(&self) -> OrId {
        self.root
    }

    pub fn or(&self, id: OrId) -> &OrNode {
        &self.ors[id.index()]
    }

    pub fn and(&self, id: AndId) -> &AndNode {
        &self.ands[id.index()]
    }

    pub fn lookup(&self, state: &State) -> Option<OrId> {
        self.index.get(state).copied()
    }

    pub fn or_ids(&self) -> impl Iterator<Item = OrId> + '_ {
        (0..self.ors.len()).map(|i| OrId(i as u32))
    }

    pub fn stats(&self) -> GraphStats {
        GraphStats {
            or_nodes: self.ors.len(),
            and_nodes: self.ands.len(),
            expanded_and_nodes: self.ands.iter().filter(|a| a.expanded).count(),
            bytes_used: self.bytes_used,
            byte_limit: self.byte_limit,
        }
    }

    /// Builds (without committing) an OR node and its AND children for a
    /// state, returning the accounted byte cost of the whole bundle.
    fn build_or(
        &self,
        est: &Estimator,
        cm: &CostModel,
        state: State,
        matches: Vec<u32>,
    ) -> (OrNode, Vec<AndNode>, usize) {
        let class_counts = est.class_counts(&matches);
        let best_diag = est
            .best_diagnosis_of(cm, &class_counts)
            .expect("states in the graph have defined distributions");
        let mut ands = Vec::new();
        let mut tests = Vec::new();
        if !matches.is_empty() {
            for a in 0..est.data().n_attributes() {
                if state.contains(a) {
                    continue;
                }
                let buckets = est.split_by_value(&matches, a);
                let sizes: Vec<u32> = buckets.iter().map(|b| b.len() as u32).collect();
                let all_probs = est
                    .outcome_probs_of(&sizes)
                    .expect("match set is non-empty");
                let mut values = Vec::new();
                let mut probs = Vec::new();
                for (v, &p) in all_probs.iter().enumerate() {
                    if p > 0.0 {
                        values.push(v);
                        probs.push(p);
                    }
                }
                let q_opt = heuristic_from_buckets(est, cm, &state, a, &buckets);
                ands.push(AndNode {
                    parent: OrId(0), // patched on commit
                    attribute: a,
                    values,
                    probs,
                    children: Vec::new(),
                    q_opt,
                    q_real: f64::INFINITY,
                    expanded: false,
                });
                tests.push(TestEdge {
                    attribute: a,
                    and_id: AndId(0), // patched on commit
                });
            }
        }
        let mut node = OrNode {
            state,
            matches,
            class_counts,
            best_diag,
            v_opt: 0.0,
            v_real: best_diag.1,
            opt_action: Action::Diagnose(best_diag.0),
            real_action: Action::Diagnose(best_diag.0),
            tests,
            pruned: BTreeSet::new(),
            parents: Vec::new(),
        };
        // v_opt over diagnosis and heuristic test values; ands is parallel
        // to node.tests here.
        let mut v_opt = best_diag.1;
        let mut opt_action = Action::Diagnose(best_diag.0);
        for (i, and) in ands.iter().enumerate() {
            if and.q_opt < v_opt {
                v_opt = and.q_opt;
                opt_action = Action::Test(node.tests[i].attribute);
            }
        }
        node.v_opt = v_opt;
        node.opt_action = opt_action;
        let bytes = node.accounted_bytes()
            + ands.iter().map(AndNode::accounted_bytes).sum::<usize>();
        (node, ands, bytes)
    }

    fn commit_or(&mut self, mut node: OrNode, ands: Vec<AndNode>) -> OrId {
        let or_id = OrId(self.ors.len() as u32);
        for (edge, mut and) in node.tests.iter_mut().zip(ands) {
            let and_id = AndId(self.ands.len() as u32);
            and.parent = or_id;
            edge.and_id = and_id;
            self.ands.push(and);
        }
        self.index.insert(node.state.clone(), or_id);
        self.ors.push(node);
        or_id
    }

    /// Expands an AND node: creates or reuses its children OR nodes. The
    /// expansion is first built and measured; if committing it would push
    /// the accounted bytes past the limit, the graph is left untouched.
    pub fn expand(
        &mut self,
        and_id: AndId,
        est: &Estimator,
        cm: &CostModel,
    ) -> Result<Vec<OrId>, GraphError> {
        if self.ands[and_id.index()].expanded {
            return Err(GraphError::AlreadyExpanded);
        }
        let (parent_id, attribute, values) = {
            let and = &self.ands[and_id.index()];
            (and.parent, and.attribute, and.values.clone())
        };
        let parent_state = self.ors[parent_id.index()].state.clone();

        let mut new_nodes = Vec::new();
        let mut plan = Vec::with_capacity(values.len());
        let mut extra_bytes = 0usize;
        for &v in &values {
            let child_state = parent_state.with(attribute, v);
            if let Some(existing) = self.index.get(&child_state).copied() {
                plan.push(Ok(existing));
                extra_bytes += PARENT_EDGE_BYTES;
            } else {
                let child_matches =
                    est.refine(&self.ors[parent_id.index()].matches, attribute, v);
                let (node, ands, bytes) = self.build_or(est, cm, child_state, child_matches);
                extra_bytes += bytes + PARENT_EDGE_BYTES;
                plan.push(Err(new_nodes.len()));
                new_nodes.push((node, ands));
            }
        }

        if self.bytes_used + extra_bytes > self.byte_limit {
            return Err(GraphError::MemoryLimitExceeded {
                bytes_needed: extra_bytes,
                bytes_free: self.byte_limit - self.bytes_used,
                byte_limit: self.byte_limit,
            });
        }

        let mut created = Vec::new();
        let mut committed: Vec<OrId> = Vec::with_capacity(new_nodes.len());
        for (node, ands) in new_nodes {
            let id = self.commit_or(node, ands);
            committed.push(id);
            created.push(id);
        }
        let children: Vec<OrId> = plan
            .into_iter()
            .map(|slot| match slot {
                Ok(existing) => existing,
                Err(i) => committed[i],
            })
            .collect();
        for &child in &children {
            self.ors[child.index()].parents.push(and_id);
        }
        let and = &mut self.ands[and_id.index()];
        and.children = children;
        and.expanded = true;
        self.bytes_used += extra_bytes;
        Ok(created)
    }

    /// Removes a test action from an OR node's consideration. The caller
    /// must follow with [`Graph::backup`] from this node.
    pub fn prune_action(&mut self, or_id: OrId, attribute: usize) {
        self.ors[or_id.index()].pruned.insert(attribute);
    }

    /// Recomputes values bottom-up from the given nodes, propagating to
    /// parents only where a value actually changed. Deeper states are
    /// processed first, so each pass over a node sees settled children.
    pub fn backup(&mut self, from: &[OrId], cm: &CostModel) {
        let mut worklist: BTreeMap<usize, BTreeSet<OrId>> = BTreeMap::new();
        for &id in from {
            worklist
                .entry(self.ors[id.index()].state.len())
                .or_default()
                .insert(id);
        }
        while let Some((&depth, _)) = worklist.iter().next_back() {
            let bucket = worklist.remove(&depth).unwrap();
            for id in bucket {
                let changed = self.recompute(id, cm);
                if changed {
                    let parents = self.ors[id.index()].parents.clone();
                    for and_id in parents {
                        let parent_or = self.ands[and_id.index()].parent;
                        worklist
                            .entry(self.ors[parent_or.index()].state.len())
                            .or_default()
                            .insert(parent_or);
                    }
                }
            }
        }
    }

    /// Recomputes one OR node (and the q values of its expanded AND edges)
    /// from its children; reports whether either value changed.
    fn recompute(&mut self, id: OrId, cm: &CostModel) -> bool {
        let edges: Vec<TestEdge> = self.ors[id.index()].tests.clone();
        for edge in &edges {
            let and = &self.ands[edge.and_id.index()];
            if !and.expanded {
                continue;
            }
            let mut q_opt = cm.test_cost(and.attribute);
            let mut q_real = q_opt;
            for (i, &child) in and.children.iter().enumerate() {
                let p = and.probs[i];
                q_opt += p * self.ors[child.index()].v_opt;
                q_real += p * self.ors[child.index()].v_real;
            }
            let and = &mut self.ands[edge.and_id.index()];
            and.q_opt = q_opt;
            and.q_real = q_real;
        }
        let node = &self.ors[id.index()];
        let (v_opt, opt_action) = choose_opt(node, &self.ands);
        let (v_real, real_action) = choose_real(node, &self.ands);
        let node = &mut self.ors[id.index()];
        let changed = v_opt != node.v_opt || v_real != node.v_real;
        node.v_opt = v_opt;
        node.v_real = v_real;
        node.opt_action = opt_action;
        node.real_action = real_action;
        changed
    }

    /// Extracts the realistic policy as a decision tree, following
    /// `real_action` from the root and unrolling shared nodes. Outcomes the
    /// estimator never observed branch to a leaf diagnosing what the
    /// current node would.
    pub fn realistic_policy(&self, est: &Estimator) -> Policy {
        Policy {
            root: self.realistic_node(self.root, est),
        }
    }

    fn realistic_node(&self, id: OrId, est: &Estimator) -> PolicyNode {
        let data = est.data();
        let node = &self.ors[id.index()];
        match node.real_action {
            Action::Diagnose(k) => PolicyNode::leaf(data.classes[k].clone()),
            Action::Test(a) => {
                let edge = node
                    .tests
                    .iter()
                    .find(|e| e.attribute == a)
                    .expect("real action refers to an existing edge");
                let and = &self.ands[edge.and_id.index()];
                debug_assert!(and.expanded, "realistic policy uses expanded nodes only");
                let mut branches = Vec::with_capacity(data.arity(a));
                for v in 0..data.arity(a) {
                    let label = data.attributes[a].values[v].clone();
                    let child = match and.values.iter().position(|&pv| pv == v) {
                        Some(i) => self.realistic_node(and.children[i], est),
                        None => PolicyNode::leaf(data.classes[node.best_diag.0].clone()),
                    };
                    branches.push(Branch::new(label, child));
                }
                PolicyNode::test(data.attributes[a].name.clone(), branches)
            }
        }
    }

    /// Total cost of running the current realistic policy on one example,
    /// walked directly on the graph.
    pub fn realistic_cost_of(&self, example: &crate::dataset::Example, cm: &CostModel) -> f64 {
        self.realistic_cost_from(self.root, example, cm)
    }

    /// As [`Graph::realistic_cost_of`], starting from an arbitrary node.
    pub fn realistic_cost_from(
        &self,
        mut id: OrId,
        example: &crate::dataset::Example,
        cm: &CostModel,
    ) -> f64 {
        let mut cost = 0.0;
        loop {
            let node = &self.ors[id.index()];
            match node.real_action {
                Action::Diagnose(k) => {
                    return cost + cm.mc(k, example.class as usize);
                }
                Action::Test(a) => {
                    cost += cm.test_cost(a);
                    let edge = node
                        .tests
                        .iter()
                        .find(|e| e.attribute == a)
                        .expect("real action refers to an existing edge");
                    let and = &self.ands[edge.and_id.index()];
                    let v = example.values[a] as usize;
                    match and.values.iter().position(|&pv| pv == v) {
                        Some(i) => id = and.children[i],
                        None => {
                            return cost + cm.mc(node.best_diag.0, example.class as usize);
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{AttributeKind, AttributeMeta, Dataset, Example};

    fn dataset(examples: Vec<(Vec<u16>, u16)>, arities: &[usize], n_classes: usize) -> Dataset {
        Dataset {
            attributes: arities
                .iter()
                .enumerate()
                .map(|(i, &a)| AttributeMeta {
                    name: format!("x{i}"),
                    kind: AttributeKind::Discrete,
                    values: (0..a).map(|v| format!("v{v}")).collect(),
                    thresholds: Vec::new(),
                })
                .collect(),
            classes: (0..n_classes).map(|k| format!("c{k}")).collect(),
            examples: examples
                .into_iter()
                .map(|(values, class)| Example { values, class })
                .collect(),
        }
    }

    fn xor_data() -> Dataset {
        dataset(
            vec![
                (vec![0, 0], 0),
                (vec![0, 1], 1),
                (vec![1, 0], 1),
                (vec![1, 1], 0),
            ],
            &[2, 2],
            2,
        )
    }

    fn sym_cm(n: usize, test: f64, mc: f64) -> CostModel {
        CostModel::uniform(n, test, vec![vec![0.0, mc], vec![mc, 0.0]]).unwrap()
    }

    fn and_of(graph: &Graph, or: OrId, attribute: usize) -> AndId {
        graph
            .or(or)
            .tests
            .iter()
            .find(|e| e.attribute == attribute)
            .map(|e| e.and_id)
            .unwrap()
    }

    /// Expand the AND node for one test under an OR node, then back up.
    fn step(graph: &mut Graph, or: OrId, attribute: usize, est: &Estimator, cm: &CostModel) {
        let and_id = and_of(graph, or, attribute);
        graph.expand(and_id, est, cm).unwrap();
        graph.backup(&[or], cm);
    }

    #[test]
    fn states_reached_by_permuted_orders_share_one_node() {
        let data = xor_data();
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = sym_cm(2, 1.0, 100.0);
        let mut graph = Graph::new(&est, &cm, DEFAULT_BYTE_LIMIT);
        let root = graph.root();

        step(&mut graph, root, 0, &est, &cm);
        step(&mut graph, root, 1, &est, &cm);
        let x0_0 = graph.lookup(&State::empty().with(0, 0)).unwrap();
        let x1_0 = graph.lookup(&State::empty().with(1, 0)).unwrap();

        // Reach {x0=0, x1=0} through both orders.
        let created_a = graph
            .expand(and_of(&graph, x0_0, 1), &est, &cm)
            .unwrap();
        graph.backup(&[x0_0], &cm);
        let created_b = graph
            .expand(and_of(&graph, x1_0, 0), &est, &cm)
            .unwrap();
        graph.backup(&[x1_0], &cm);

        let shared = graph.lookup(&State::empty().with(0, 0).with(1, 0)).unwrap();
        assert!(created_a.contains(&shared));
        assert!(!created_b.contains(&shared), "second path must reuse the node");
        assert_eq!(graph.or(shared).parents.len(), 2);
    }

    #[test]
    fn heuristic_charges_the_test_plus_outcome_floors() {
        // One attribute, cost 3. Outcomes are equally likely; v0 holds one
        // example of each class (best diagnosis 0.5 * 8 = 4), v1 is pure
        // (0). No other test remains: Q = 3 + 0.5*4 + 0.5*0 = 5.
        let data = dataset(
            vec![(vec![0], 0), (vec![0], 1), (vec![1], 0), (vec![1], 0)],
            &[2],
            2,
        );
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = sym_cm(1, 3.0, 8.0);
        assert_eq!(heuristic_q(&est, &cm, &State::empty(), 0), 5.0);
    }

    #[test]
    fn heuristic_floor_uses_a_cheap_remaining_test() {
        // Two attributes. Measuring x0 (cost 3) leaves x1 (cost 2), which
        // is cheaper than any diagnosis in the mixed children (0.5 * 100 =
        // 50), so each outcome's floor is 2: Q = 3 + 2 = 5.
        let data = xor_data();
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = CostModel::new(vec![3.0, 2.0], vec![vec![0.0, 100.0], vec![100.0, 0.0]])
            .unwrap();
        assert_eq!(heuristic_q(&est, &cm, &State::empty(), 0), 5.0);
    }

    #[test]
    fn fresh_graph_diagnoses_at_the_root() {
        let data = xor_data();
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = sym_cm(2, 1.0, 10.0);
        let graph = Graph::new(&est, &cm, DEFAULT_BYTE_LIMIT);
        let root = graph.or(graph.root());
        assert_eq!(root.v_real, root.best_diag.1);
        assert_eq!(root.real_action, Action::Diagnose(0));
        let policy = graph.realistic_policy(&est);
        assert_eq!(policy.n_tests(), 0);
    }

    #[test]
    fn expanding_the_only_and_node_updates_the_root_optimistically() {
        // One attribute: after expansion the root's v_opt is the exact min
        // of diagnosing and the now-exact q of the test.
        let data = dataset(vec![(vec![0], 0), (vec![1], 1)], &[2], 2);
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = sym_cm(1, 1.0, 10.0);
        let mut graph = Graph::new(&est, &cm, DEFAULT_BYTE_LIMIT);
        let root = graph.root();
        step(&mut graph, root, 0, &est, &cm);
        // Perfect split: q = 1 + 0; diagnosing now costs 5.
        assert_eq!(graph.or(root).v_opt, 1.0);
        assert_eq!(graph.or(root).v_real, 1.0);
        assert_eq!(graph.or(root).opt_action, Action::Test(0));
        assert_eq!(graph.or(root).real_action, Action::Test(0));
    }

    #[test]
    fn ml_mode_omits_unobserved_outcomes_and_renormalizes() {
        // Value v1 of x0 never occurs: the AND node keeps only v0 and v2
        // with probabilities 0.75 and 0.25.
        let data = dataset(
            vec![(vec![0], 0), (vec![0], 0), (vec![0], 1), (vec![2], 1)],
            &[3],
            2,
        );
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = sym_cm(1, 1.0, 10.0);
        let graph = Graph::new(&est, &cm, DEFAULT_BYTE_LIMIT);
        let and = graph.and(and_of(&graph, graph.root(), 0));
        assert_eq!(and.values, vec![0, 2]);
        assert_eq!(and.probs, vec![0.75, 0.25]);
    }

    #[test]
    fn laplace_zero_match_children_are_diagnosis_only() {
        let data = dataset(vec![(vec![0, 0], 0), (vec![0, 1], 1)], &[2, 2], 2);
        let est = Estimator::new(&data, &data.all_indices(), true);
        let cm = sym_cm(2, 1.0, 10.0);
        let mut graph = Graph::new(&est, &cm, DEFAULT_BYTE_LIMIT);
        let root = graph.root();
        graph.expand(and_of(&graph, root, 0), &est, &cm).unwrap();
        graph.backup(&[root], &cm);
        // x0 = 1 matches nothing; the node exists but offers no tests and
        // already has equal optimistic and realistic values.
        let child = graph.lookup(&State::empty().with(0, 1)).unwrap();
        let node = graph.or(child);
        assert!(node.matches.is_empty());
        assert!(node.tests.is_empty());
        assert_eq!(node.v_opt, node.v_real);
        assert_eq!(node.v_opt, node.best_diag.1);
        // Uniform distribution, symmetric costs: 0.5 * 10.
        assert_eq!(node.best_diag.1, 5.0);
    }

    /// Recomputes every node's values from scratch, deepest states first,
    /// mirroring the definitions instead of the incremental backup.
    fn full_recompute(graph: &Graph, cm: &CostModel) -> Vec<(f64, f64)> {
        let mut order: Vec<OrId> = graph.or_ids().collect();
        order.sort_by_key(|id| std::cmp::Reverse(graph.or(*id).state.len()));
        let mut values: Vec<(f64, f64)> = graph
            .or_ids()
            .map(|id| {
                let n = graph.or(id);
                (n.best_diag.1, n.best_diag.1)
            })
            .collect();
        for id in order {
            let node = graph.or(id);
            let mut v_opt = node.best_diag.1;
            let mut v_real = node.best_diag.1;
            for edge in &node.tests {
                if node.pruned.contains(&edge.attribute) {
                    continue;
                }
                let and = graph.and(edge.and_id);
                if and.expanded {
                    let mut q_opt = cm.test_cost(and.attribute);
                    let mut q_real = q_opt;
                    for (i, &child) in and.children.iter().enumerate() {
                        q_opt += and.probs[i] * values[child.index()].0;
                        q_real += and.probs[i] * values[child.index()].1;
                    }
                    v_opt = v_opt.min(q_opt);
                    v_real = v_real.min(q_real);
                } else {
                    v_opt = v_opt.min(and.q_opt);
                }
            }
            values[id.index()] = (v_opt, v_real);
        }
        values
    }

    #[test]
    fn incremental_backup_equals_recomputation_from_scratch() {
        let data = dataset(
            vec![
                (vec![0, 0, 0], 0),
                (vec![0, 1, 1], 1),
                (vec![1, 0, 1], 1),
                (vec![1, 1, 0], 0),
                (vec![0, 0, 1], 0),
                (vec![1, 1, 1], 1),
            ],
            &[2, 2, 2],
            2,
        );
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = CostModel::new(vec![1.0, 2.0, 4.0], vec![vec![0.0, 30.0], vec![20.0, 0.0]])
            .unwrap();
        let mut graph = Graph::new(&est, &cm, DEFAULT_BYTE_LIMIT);
        let root = graph.root();
        // A few levels of expansion along several branches.
        step(&mut graph, root, 0, &est, &cm);
        let s0 = graph.lookup(&State::empty().with(0, 0)).unwrap();
        let s1 = graph.lookup(&State::empty().with(0, 1)).unwrap();
        step(&mut graph, s0, 1, &est, &cm);
        step(&mut graph, s1, 2, &est, &cm);
        let deep = graph.lookup(&State::empty().with(0, 0).with(1, 0)).unwrap();
        step(&mut graph, deep, 2, &est, &cm);

        let expected = full_recompute(&graph, &cm);
        for id in graph.or_ids() {
            let node = graph.or(id);
            let (v_opt, v_real) = expected[id.index()];
            assert_eq!(node.v_opt, v_opt, "v_opt differs at {}", node.state);
            assert_eq!(node.v_real, v_real, "v_real differs at {}", node.state);
        }
    }

    #[test]
    fn root_values_are_monotone_across_expansions() {
        let data = xor_data();
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = sym_cm(2, 1.0, 40.0);
        let mut graph = Graph::new(&est, &cm, DEFAULT_BYTE_LIMIT);
        let root = graph.root();
        let mut last_opt = graph.or(root).v_opt;
        let mut last_real = graph.or(root).v_real;
        // Expand everything, checking monotonicity after each step.
        loop {
            let tip = graph
                .or_ids()
                .flat_map(|id| graph.or(id).tests.iter())
                .find(|e| !graph.and(e.and_id).expanded)
                .map(|e| e.and_id);
            let Some(and_id) = tip else { break };
            let parent = graph.and(and_id).parent;
            graph.expand(and_id, &est, &cm).unwrap();
            graph.backup(&[parent], &cm);
            let node = graph.or(root);
            assert!(node.v_opt >= last_opt, "root v_opt decreased");
            assert!(node.v_real <= last_real, "root v_real increased");
            last_opt = node.v_opt;
            last_real = node.v_real;
            for id in graph.or_ids() {
                let n = graph.or(id);
                assert!(
                    n.v_opt <= n.v_real + 1e-12,
                    "sandwich violated at {}",
                    n.state
                );
            }
        }
        // Fully expanded: the bounds meet.
        assert_eq!(graph.or(root).v_opt, graph.or(root).v_real);
    }

    #[test]
    fn realistic_policy_is_complete_and_matches_the_root_value() {
        let data = xor_data();
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = sym_cm(2, 1.0, 40.0);
        let mut graph = Graph::new(&est, &cm, DEFAULT_BYTE_LIMIT);
        let root = graph.root();
        step(&mut graph, root, 0, &est, &cm);
        let s0 = graph.lookup(&State::empty().with(0, 0)).unwrap();
        step(&mut graph, s0, 1, &est, &cm);

        let policy = graph.realistic_policy(&est);
        let value = policy.expected_value(&est, &cm).unwrap();
        assert!((value - graph.or(root).v_real).abs() < 1e-12);

        // Graph walk agrees with tree execution, example by example.
        for ex in &data.examples {
            let (_, tree_cost) = policy.execute(&data, ex, &cm).unwrap();
            assert_eq!(graph.realistic_cost_of(ex, &cm), tree_cost);
        }
    }

    #[test]
    fn pruning_every_test_pins_both_values_to_the_diagnosis() {
        let data = xor_data();
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = sym_cm(2, 1.0, 40.0);
        let mut graph = Graph::new(&est, &cm, DEFAULT_BYTE_LIMIT);
        let root = graph.root();
        graph.prune_action(root, 0);
        graph.prune_action(root, 1);
        graph.backup(&[root], &cm);
        let node = graph.or(root);
        assert_eq!(node.v_opt, node.best_diag.1);
        assert_eq!(node.v_real, node.best_diag.1);
        assert_eq!(node.opt_action, Action::Diagnose(node.best_diag.0));
    }

    #[test]
    fn refused_expansion_leaves_the_graph_unchanged() {
        let data = xor_data();
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = sym_cm(2, 1.0, 40.0);
        let probe = Graph::new(&est, &cm, DEFAULT_BYTE_LIMIT);
        let root_bytes = probe.stats().bytes_used;

        // Room for the root but not for any expansion.
        let mut graph = Graph::new(&est, &cm, root_bytes + 32);
        let root = graph.root();
        let before = graph.stats();
        let err = graph
            .expand(and_of(&graph, root, 0), &est, &cm)
            .unwrap_err();
        assert!(matches!(err, GraphError::MemoryLimitExceeded { .. }));
        assert_eq!(graph.stats(), before);
        assert!(!graph.and(and_of(&graph, root, 0)).expanded);
        // Still able to produce a complete policy.
        let policy = graph.realistic_policy(&est);
        assert_eq!(policy.n_tests(), 0);
    }

    #[test]
    fn bytes_grow_only_on_expansion_and_respect_the_limit() {
        let data = xor_data();
        let est = Estimator::new(&data, &data.all_indices(), false);
        let cm = sym_cm(2, 1.0, 40.0);
        let mut graph = Graph::new(&est, &cm, 8 * 1024);
        let mut last = graph.stats().bytes_used;
        let mut refused = false;
        for _ in 0..32 {
            let tip = graph
                .or_ids()
                .flat_map(|id| graph.or(id).tests.iter())
                .find(|e| !graph.and(e.and_id).expanded)
                .map(|e| e.and_id);
            let Some(and_id) = tip else { break };
            match graph.expand(and_id, &est, &cm) {
                Ok(_) => {
                    let parent = graph.and(and_id).parent;
                    graph.backup(&[parent], &cm);
                    let now = graph.stats().bytes_used;
                    assert!(now > last);
                    assert!(now <= graph.stats().byte_limit);
                    last = now;
                }
                Err(GraphError::MemoryLimitExceeded { .. }) => {
                    refused = true;
                    break;
                }
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
        let _ = refused;
    }
}
