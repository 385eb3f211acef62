//! Causal DAG structure, d-separation, and the sufficiency checks that
//! decide when conditional and interventional answers coincide.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::values::{Role, Slice, Variable};
use crate::{Error, Result};

/// A directed acyclic graph over role-tagged variables with an
/// observed/latent partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalGraph {
    variables: Vec<Variable>,
    edges: BTreeSet<(String, String)>,
    observed: BTreeSet<String>,
    index: BTreeMap<String, usize>,
}

impl CausalGraph {
    pub fn new(
        variables: Vec<Variable>,
        edges: Vec<(String, String)>,
        observed: Vec<String>,
    ) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, v) in variables.iter().enumerate() {
            if index.insert(v.name.clone(), i).is_some() {
                return Err(Error::Model(format!("duplicate variable {}", v.name)));
            }
            let mut seen = BTreeSet::new();
            for val in &v.domain {
                if !seen.insert(val) {
                    return Err(Error::Model(format!(
                        "duplicate domain value {} for {}",
                        val, v.name
                    )));
                }
            }
            if v.domain.is_empty() {
                return Err(Error::Model(format!("empty domain for {}", v.name)));
            }
        }
        let mut edge_set = BTreeSet::new();
        for (p, c) in edges {
            if !index.contains_key(&p) {
                return Err(Error::UnknownVariable(p));
            }
            if !index.contains_key(&c) {
                return Err(Error::UnknownVariable(c));
            }
            if p == c {
                return Err(Error::CycleDetected(vec![p.clone(), c]));
            }
            edge_set.insert((p, c));
        }
        let mut obs = BTreeSet::new();
        for o in observed {
            if !index.contains_key(&o) {
                return Err(Error::UnknownVariable(o));
            }
            obs.insert(o);
        }
        let g = CausalGraph {
            variables,
            edges: edge_set,
            observed: obs,
            index,
        };
        g.topo_order()?; // acyclicity
        Ok(g)
    }

    pub fn variables(&self) -> &[Variable] {
        &self.variables
    }

    pub fn variable(&self, name: &str) -> Result<&Variable> {
        self.index
            .get(name)
            .map(|&i| &self.variables[i])
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&str, &str)> {
        self.edges.iter().map(|(p, c)| (p.as_str(), c.as_str()))
    }

    pub fn has_edge(&self, p: &str, c: &str) -> bool {
        self.edges.contains(&(p.to_string(), c.to_string()))
    }

    pub fn observed(&self) -> impl Iterator<Item = &str> {
        self.observed.iter().map(|s| s.as_str())
    }

    pub fn is_observed(&self, name: &str) -> bool {
        self.observed.contains(name)
    }

    pub fn latent(&self) -> Vec<&str> {
        self.variables
            .iter()
            .filter(|v| !self.observed.contains(&v.name))
            .map(|v| v.name.as_str())
            .collect()
    }

    pub fn parents(&self, name: &str) -> Vec<&str> {
        // Declaration order for determinism.
        self.variables
            .iter()
            .filter(|v| self.has_edge(&v.name, name))
            .map(|v| v.name.as_str())
            .collect()
    }

    pub fn children(&self, name: &str) -> Vec<&str> {
        self.variables
            .iter()
            .filter(|v| self.has_edge(name, &v.name))
            .map(|v| v.name.as_str())
            .collect()
    }

    pub fn is_source(&self, name: &str) -> bool {
        self.parents(name).is_empty()
    }

    /// All descendants of `name`, excluding `name` itself.
    pub fn descendants(&self, name: &str) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let mut queue: VecDeque<String> = self
            .children(name)
            .into_iter()
            .map(String::from)
            .collect();
        while let Some(n) = queue.pop_front() {
            if out.insert(n.clone()) {
                for c in self.children(&n) {
                    queue.push_back(c.to_string());
                }
            }
        }
        out
    }

    /// Ancestors of any name in `names`, including those names.
    pub fn ancestors_closure(&self, names: &BTreeSet<String>) -> BTreeSet<String> {
        let mut out = names.clone();
        let mut queue: VecDeque<String> = names.iter().cloned().collect();
        while let Some(n) = queue.pop_front() {
            for p in self.parents(&n) {
                if out.insert(p.to_string()) {
                    queue.push_back(p.to_string());
                }
            }
        }
        out
    }

    /// Topological order; parents precede children, ties broken by
    /// declaration order.
    pub fn topo_order(&self) -> Result<Vec<String>> {
        let n = self.variables.len();
        let mut indegree: Vec<usize> = vec![0; n];
        for (_, c) in &self.edges {
            indegree[self.index[c]] += 1;
        }
        let mut out = Vec::with_capacity(n);
        let mut placed = vec![false; n];
        for _ in 0..n {
            let next = (0..n).find(|&i| !placed[i] && indegree[i] == 0);
            match next {
                Some(i) => {
                    placed[i] = true;
                    let name = self.variables[i].name.clone();
                    for c in self.children(&name) {
                        indegree[self.index[c]] -= 1;
                    }
                    out.push(name);
                }
                None => return Err(Error::CycleDetected(self.find_cycle())),
            }
        }
        Ok(out)
    }

    fn find_cycle(&self) -> Vec<String> {
        // Walk parent links from any node until a repeat appears.
        let start = self
            .variables
            .iter()
            .find(|v| !self.parents(&v.name).is_empty())
            .map(|v| v.name.clone())
            .unwrap_or_default();
        let mut path = vec![start.clone()];
        let mut cur = start;
        loop {
            let parents = self.parents(&cur);
            let Some(p) = parents.first() else {
                return path;
            };
            let p = p.to_string();
            if let Some(pos) = path.iter().position(|x| x == &p) {
                let mut cycle: Vec<String> = path[pos..].to_vec();
                cycle.reverse();
                cycle.push(p);
                return cycle;
            }
            path.push(p.clone());
            cur = p;
        }
    }

    /// Drop every edge pointing into any of `targets`.
    pub fn truncate_edges(&self, targets: &BTreeSet<String>) -> CausalGraph {
        let mut g = self.clone();
        g.edges.retain(|(_, c)| !targets.contains(c));
        g
    }

    /// Drop every edge pointing out of any of `sources`.
    pub fn drop_outgoing(&self, sources: &BTreeSet<String>) -> CausalGraph {
        let mut g = self.clone();
        g.edges.retain(|(p, _)| !sources.contains(p));
        g
    }

    /// d-separation via the reachability (Bayes-ball) formulation.
    ///
    /// Returns true iff every path between `x` and `y` is blocked given `z`.
    pub fn d_separated(
        &self,
        x: &BTreeSet<String>,
        y: &BTreeSet<String>,
        z: &BTreeSet<String>,
    ) -> Result<bool> {
        for n in x.iter().chain(y).chain(z) {
            self.variable(n)?;
        }
        if !x.is_disjoint(y) || !x.is_disjoint(z) || !y.is_disjoint(z) {
            return Err(Error::Model(
                "d-separation query sets must be pairwise disjoint".into(),
            ));
        }
        // Active-trail reachability over (node, direction) states, where
        // direction records whether the node was entered from a child (up)
        // or a parent (down).
        let ancestors_of_z = self.ancestors_closure(z);
        let mut visited: BTreeSet<(String, bool)> = BTreeSet::new();
        let mut queue: VecDeque<(String, bool)> = VecDeque::new();
        for s in x {
            queue.push_back((s.clone(), true)); // entered "from a child"
        }
        while let Some((node, up)) = queue.pop_front() {
            if !visited.insert((node.clone(), up)) {
                continue;
            }
            let in_z = z.contains(&node);
            if !in_z && y.contains(&node) {
                return Ok(false);
            }
            if up && !in_z {
                for p in self.parents(&node) {
                    queue.push_back((p.to_string(), true));
                }
                for c in self.children(&node) {
                    queue.push_back((c.to_string(), false));
                }
            } else if !up {
                if !in_z {
                    for c in self.children(&node) {
                        queue.push_back((c.to_string(), false));
                    }
                }
                if ancestors_of_z.contains(&node) {
                    for p in self.parents(&node) {
                        queue.push_back((p.to_string(), true));
                    }
                }
            }
        }
        Ok(true)
    }

    /// CBN-sense action sufficiency: every parent of the action is observed.
    /// Belief-role parents count as observed.
    pub fn is_action_sufficient_cbn(&self, action: &str) -> Result<bool> {
        let v = self.variable(action)?;
        if v.role != Role::Action {
            return Err(Error::Model(format!("{action} does not have role action")));
        }
        Ok(self.parents(action).iter().all(|p| {
            self.is_observed(p) || self.variable(p).map(|v| v.role) == Ok(Role::Belief)
        }))
    }

    /// SCM-sense action sufficiency: every latent parent of the action is a
    /// noise variable, i.e. the action is its only child.
    pub fn is_action_sufficient_scm(&self, action: &str) -> Result<bool> {
        let v = self.variable(action)?;
        if v.role != Role::Action {
            return Err(Error::Model(format!("{action} does not have role action")));
        }
        Ok(self.parents(action).iter().all(|p| {
            self.is_observed(p)
                || self.variable(p).map(|v| v.role) == Ok(Role::Belief)
                || self.children(p) == vec![action]
        }))
    }

    /// Checks the three structural constraints a two-slice decision network
    /// must satisfy.
    pub fn check_ddn_constraints(&self) -> DdnConstraintReport {
        let slice = |n: &str| self.variable(n).map(|v| v.slice).unwrap_or(Slice::Current);
        let role = |n: &str| self.variable(n).map(|v| v.role).unwrap_or(Role::State);
        let mut report = DdnConstraintReport::default();
        for (p, c) in &self.edges {
            let edge = (p.clone(), c.clone());
            if slice(p) == Slice::Next && slice(c) == Slice::Current {
                report.no_backward_edges.push(edge.clone());
            }
            if role(p) == Role::Reward && slice(p) == slice(c) {
                report.no_reward_children.push(edge.clone());
            }
            if role(p) == Role::Action && slice(p) == slice(c) && role(c) != Role::Reward {
                report.no_action_state_edges.push(edge);
            }
        }
        report
    }

    /// A current-slice state variable is conditionally irrelevant when it is
    /// d-separated from the reward and next state given the action and the
    /// action's other parents.
    pub fn conditionally_irrelevant(&self, s: &str, action: &str) -> Result<bool> {
        self.variable(s)?;
        self.variable(action)?;
        let x: BTreeSet<String> = [s.to_string()].into();
        let mut y = BTreeSet::new();
        for v in &self.variables {
            let next_state = v.slice == Slice::Next && v.role == Role::State;
            if (v.role == Role::Reward || next_state) && v.name != s && v.name != action {
                y.insert(v.name.clone());
            }
        }
        if y.is_empty() {
            return Ok(true);
        }
        let mut z: BTreeSet<String> = [action.to_string()].into();
        for p in self.parents(action) {
            if p != s {
                z.insert(p.to_string());
            }
        }
        let y: BTreeSet<String> = y.difference(&z).cloned().collect();
        if y.is_empty() {
            return Ok(true);
        }
        self.d_separated(&x, &y, &z)
    }

    /// The backdoor criterion for adjusting the effect of `action` on
    /// `target` by the set `adj`.
    pub fn satisfies_backdoor(
        &self,
        action: &str,
        target: &str,
        adj: &BTreeSet<String>,
    ) -> Result<bool> {
        self.variable(action)?;
        self.variable(target)?;
        for a in adj {
            self.variable(a)?;
        }
        if adj.contains(action) || adj.contains(target) {
            return Err(Error::Model(
                "adjustment set must exclude action and target".into(),
            ));
        }
        let desc = self.descendants(action);
        if adj.iter().any(|a| desc.contains(a)) {
            return Ok(false);
        }
        let cut = self.drop_outgoing(&[action.to_string()].into());
        let x: BTreeSet<String> = [action.to_string()].into();
        let y: BTreeSet<String> = [target.to_string()].into();
        cut.d_separated(&x, &y, adj)
    }
}

/// Outcome of the three two-slice structural checks; each list holds the
/// offending edges, so empty lists mean a pass.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DdnConstraintReport {
    /// Constraint 1: no edges from the next slice back into the current one.
    pub no_backward_edges: Vec<(String, String)>,
    /// Constraint 2: no edges out of a reward variable within its slice.
    pub no_reward_children: Vec<(String, String)>,
    /// Constraint 3: no edges from an action into same-slice non-reward
    /// variables.
    pub no_action_state_edges: Vec<(String, String)>,
}

impl DdnConstraintReport {
    pub fn all_pass(&self) -> bool {
        self.no_backward_edges.is_empty()
            && self.no_reward_children.is_empty()
            && self.no_action_state_edges.is_empty()
    }

    /// Pass ignoring constraint 3 (action-to-state edges permitted).
    pub fn pass_relaxed(&self) -> bool {
        self.no_backward_edges.is_empty() && self.no_reward_children.is_empty()
    }
}
