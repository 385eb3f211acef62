//! Causal Bayesian networks: product-formula joints, truncation semantics
//! for interventions, exact conditional/interventional queries by
//! enumeration, and the backdoor adjustment.

use std::collections::{BTreeMap, BTreeSet};

use crate::graph::CausalGraph;
use crate::values::{Assignment, Distribution, Prob};
use crate::{check_guard, Error, Result};

/// A conditional probability table for one variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cpt {
    pub child: String,
    pub parents: Vec<String>,
    /// Rows keyed by full parent assignment; each row maps child values to
    /// probabilities summing to exactly 1.
    pub table: BTreeMap<Assignment, BTreeMap<String, Prob>>,
}

impl Cpt {
    pub fn row(&self, parent_values: &Assignment) -> Result<&BTreeMap<String, Prob>> {
        let key = parent_values.restrict(self.parents.iter().map(|s| s.as_str()));
        self.table.get(&key).ok_or_else(|| {
            Error::Model(format!(
                "cpt for {} has no row for parent values {{{key}}}",
                self.child
            ))
        })
    }

    pub fn prob(&self, parent_values: &Assignment, child_value: &str) -> Result<Prob> {
        Ok(self
            .row(parent_values)?
            .get(child_value)
            .cloned()
            .unwrap_or_else(Prob::zero))
    }

    /// A parentless point-mass table at `value`.
    pub fn point(child: &str, value: &str) -> Cpt {
        let mut row = BTreeMap::new();
        row.insert(value.to_string(), Prob::one());
        let mut table = BTreeMap::new();
        table.insert(Assignment::new(), row);
        Cpt {
            child: child.to_string(),
            parents: vec![],
            table,
        }
    }
}

/// A query at one of the levels of the causal hierarchy.
///
/// Plain targets with evidence only are conditional; `interventions` makes
/// the query interventional; `potential` carries subscripted
/// (potential-outcome) targets for counterfactual evaluation by the scm
/// module. All subscripted targets in one query share a single subscript
/// intervention set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Query {
    pub targets: Assignment,
    pub evidence: Assignment,
    pub interventions: Assignment,
    pub potential: Option<Potential>,
}

/// Subscripted targets: the value of `targets` in the world where
/// `interventions` was forced.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Potential {
    pub targets: Assignment,
    pub interventions: Assignment,
}

impl Query {
    pub fn conditional(targets: Assignment, evidence: Assignment) -> Query {
        Query {
            targets,
            evidence,
            ..Query::default()
        }
    }

    pub fn interventional(
        targets: Assignment,
        evidence: Assignment,
        interventions: Assignment,
    ) -> Query {
        Query {
            targets,
            evidence,
            interventions,
            ..Query::default()
        }
    }

    /// Evidence must be disjoint from both targets and interventions.
    /// Targets may name an intervened variable (the truncated point mass
    /// answers such queries).
    pub fn validate(&self) -> Result<()> {
        for v in self.evidence.vars() {
            if self.targets.contains(v) || self.interventions.contains(v) {
                return Err(Error::Conflict(v.to_string()));
            }
        }
        if let Some(p) = &self.potential {
            for v in p.targets.vars() {
                if self.targets.contains(v) {
                    return Err(Error::Conflict(v.to_string()));
                }
            }
        }
        Ok(())
    }
}

/// A causal Bayesian network: a DAG plus one CPT per variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cbn {
    graph: CausalGraph,
    cpts: BTreeMap<String, Cpt>,
}

impl Cbn {
    pub fn new(graph: CausalGraph, cpts: Vec<Cpt>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for cpt in cpts {
            graph.variable(&cpt.child)?;
            if map.insert(cpt.child.clone(), cpt).is_some() {
                return Err(Error::Model("duplicate cpt".into()));
            }
        }
        let m = Cbn { graph, cpts: map };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        for v in self.graph.variables() {
            let cpt = self
                .cpts
                .get(&v.name)
                .ok_or_else(|| Error::Model(format!("missing cpt for {}", v.name)))?;
            let declared: BTreeSet<&str> = cpt.parents.iter().map(|s| s.as_str()).collect();
            let graph_parents: BTreeSet<&str> = self.graph.parents(&v.name).into_iter().collect();
            if declared != graph_parents {
                return Err(Error::Model(format!(
                    "cpt parents for {} do not match graph parents",
                    v.name
                )));
            }
            let mut expected_rows: u128 = 1;
            for p in &cpt.parents {
                expected_rows =
                    expected_rows.saturating_mul(self.graph.variable(p)?.domain.len() as u128);
            }
            if cpt.table.len() as u128 != expected_rows {
                return Err(Error::Model(format!(
                    "cpt for {} covers {} parent configurations, expected {}",
                    v.name,
                    cpt.table.len(),
                    expected_rows
                )));
            }
            for (key, row) in &cpt.table {
                for p in &cpt.parents {
                    let pv = key
                        .get(p)
                        .ok_or_else(|| Error::Model(format!("cpt row for {} misses parent {p}", v.name)))?;
                    if !self.graph.variable(p)?.has_value(pv) {
                        return Err(Error::DomainViolation {
                            variable: p.clone(),
                            value: pv.to_string(),
                        });
                    }
                }
                let mut total = Prob::zero();
                for (val, p) in row {
                    if !v.has_value(val) {
                        return Err(Error::DomainViolation {
                            variable: v.name.clone(),
                            value: val.clone(),
                        });
                    }
                    if p.is_negative() {
                        return Err(Error::Model(format!(
                            "negative probability in cpt for {}",
                            v.name
                        )));
                    }
                    total += p.clone();
                }
                if !total.is_one() {
                    return Err(Error::Model(format!(
                        "cpt row for {} given {{{key}}} sums to {total}, not 1",
                        v.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn cpt(&self, name: &str) -> Result<&Cpt> {
        self.cpts
            .get(name)
            .ok_or_else(|| Error::UnknownVariable(name.to_string()))
    }

    pub fn cpts(&self) -> impl Iterator<Item = &Cpt> {
        self.cpts.values()
    }

    /// Product-formula joint probability of a full assignment.
    pub fn joint(&self, full: &Assignment) -> Result<Prob> {
        let mut p = Prob::one();
        for v in self.graph.variables() {
            let value = full
                .get(&v.name)
                .ok_or_else(|| Error::IncompleteAssignment(v.name.clone()))?;
            if !v.has_value(value) {
                return Err(Error::DomainViolation {
                    variable: v.name.clone(),
                    value: value.to_string(),
                });
            }
            p = p * self.cpts[&v.name].prob(full, value)?;
            if p.is_zero() {
                return Ok(p);
            }
        }
        Ok(p)
    }

    /// Every full assignment consistent with `fixed`, in deterministic
    /// domain order, guarded against blow-up.
    pub fn assignments_consistent_with(&self, fixed: &Assignment) -> Result<Vec<Assignment>> {
        let mut size: u128 = 1;
        for v in self.graph.variables() {
            if !fixed.contains(&v.name) {
                size = size.saturating_mul(v.domain.len() as u128);
            }
        }
        check_guard(size)?;
        let mut out = vec![fixed.clone()];
        for v in self.graph.variables() {
            if fixed.contains(&v.name) {
                if !v.has_value(fixed.get(&v.name).unwrap()) {
                    return Err(Error::DomainViolation {
                        variable: v.name.clone(),
                        value: fixed.get(&v.name).unwrap().to_string(),
                    });
                }
                continue;
            }
            let mut next = Vec::with_capacity(out.len() * v.domain.len());
            for a in &out {
                for val in &v.domain {
                    next.push(a.clone().bind(v.name.clone(), val.clone()));
                }
            }
            out = next;
        }
        Ok(out)
    }

    /// Probability of a (partial) event by enumeration.
    pub fn prob_event(&self, event: &Assignment) -> Result<Prob> {
        let mut total = Prob::zero();
        for a in self.assignments_consistent_with(event)? {
            total += self.joint(&a)?;
        }
        Ok(total)
    }

    /// Exact conditional probability of the query targets given evidence.
    pub fn conditional(&self, q: &Query) -> Result<Prob> {
        q.validate()?;
        if !q.interventions.is_empty() {
            return Err(Error::Model(
                "conditional query must not carry interventions".into(),
            ));
        }
        let denom = self.prob_event(&q.evidence)?;
        if denom.is_zero() {
            return Err(Error::ZeroEvidence);
        }
        // A target value conflicting with folded-in intervention evidence
        // is simply an impossible event.
        let numer = match q.evidence.merge(&q.targets) {
            Ok(both) => self.prob_event(&both)?,
            Err(Error::Conflict(_)) => Prob::zero(),
            Err(e) => return Err(e),
        };
        Ok(numer / denom)
    }

    /// Conditional distribution over full assignments of `target_vars`.
    pub fn conditional_dist(
        &self,
        target_vars: &[&str],
        evidence: &Assignment,
    ) -> Result<Distribution> {
        let mut weights: BTreeMap<Assignment, Prob> = BTreeMap::new();
        for a in self.assignments_consistent_with(evidence)? {
            let key = a.restrict(target_vars.iter().copied());
            *weights.entry(key).or_insert_with(Prob::zero) += self.joint(&a)?;
        }
        Distribution::normalize(weights).map_err(|e| match e {
            Error::ZeroMass => Error::ZeroEvidence,
            other => other,
        })
    }

    /// Truncation semantics: each intervened variable loses its parents and
    /// takes the forced value with probability 1.
    pub fn truncate(&self, interventions: &Assignment) -> Result<Cbn> {
        let mut targets = BTreeSet::new();
        for (name, value) in interventions.iter() {
            let v = self.graph.variable(name)?;
            if !v.has_value(value) {
                return Err(Error::DomainViolation {
                    variable: name.to_string(),
                    value: value.to_string(),
                });
            }
            targets.insert(name.to_string());
        }
        let graph = self.graph.truncate_edges(&targets);
        let mut cpts = self.cpts.clone();
        for (name, value) in interventions.iter() {
            cpts.insert(name.to_string(), Cpt::point(name, value));
        }
        Cbn::new(graph, cpts.into_values().collect())
    }

    /// Interventional query under the truncated model. Conditioning on the
    /// forced values is redundant there (they hold with probability 1), so
    /// only the genuine evidence is folded in; a target naming an intervened
    /// variable then gets its point-mass answer directly.
    pub fn interventional(&self, q: &Query) -> Result<Prob> {
        q.validate()?;
        let truncated = self.truncate(&q.interventions)?;
        let folded = Query::conditional(q.targets.clone(), q.evidence.clone());
        truncated.conditional(&folded)
    }

    /// Dispatch a non-counterfactual query by its level.
    pub fn query(&self, q: &Query) -> Result<Prob> {
        if q.potential.is_some() {
            return Err(Error::Unsupported(
                "counterfactual queries require a structural causal model".into(),
            ));
        }
        if q.interventions.is_empty() {
            self.conditional(q)
        } else {
            self.interventional(q)
        }
    }

    /// Backdoor adjustment of the effect of `action` on `target` given
    /// `evidence`, adjusting over `adj`.
    ///
    /// Strata with zero conditional mass contribute 0.
    pub fn backdoor_adjust(
        &self,
        action: &Assignment,
        target: &Assignment,
        evidence: &Assignment,
        adj: &BTreeSet<String>,
    ) -> Result<Prob> {
        let action_vars: Vec<&str> = action.vars().collect();
        if action_vars.len() != 1 {
            return Err(Error::Model(
                "backdoor adjustment expects a single action variable".into(),
            ));
        }
        let target_vars: Vec<&str> = target.vars().collect();
        if target_vars.len() != 1 {
            return Err(Error::Model(
                "backdoor adjustment expects a single target variable".into(),
            ));
        }
        // The evidence context is part of the blocking set: the criterion
        // must hold for the stratified conditional distributions actually
        // being mixed.
        let mut block: BTreeSet<String> = adj.clone();
        block.extend(evidence.vars().map(|s| s.to_string()));
        if !self
            .graph
            .satisfies_backdoor(action_vars[0], target_vars[0], &block)?
        {
            return Err(Error::CriterionViolated(adj.iter().cloned().collect()));
        }
        let adj_vars: Vec<&str> = adj.iter().map(|s| s.as_str()).collect();
        let strata = self.conditional_dist(&adj_vars, evidence)?;
        let mut total = Prob::zero();
        for (z, pz) in strata.iter() {
            let given = evidence.merge(z)?.merge(action)?;
            if self.prob_event(&given)?.is_zero() {
                continue;
            }
            let cond = self.conditional(&Query::conditional(target.clone(), given))?;
            total += pz.clone() * cond;
        }
        Ok(total)
    }

    /// True iff no conditioning set renders any declared parent of the
    /// action independent of it. Guarded to models of at most 12 variables.
    pub fn check_action_minimality(&self, action: &str) -> Result<bool> {
        self.graph.variable(action)?;
        let n = self.graph.variables().len();
        if n > 12 {
            return Err(Error::TooLarge(n as u128, 12));
        }
        let parents = self.graph.parents(action);
        if parents.is_empty() {
            return Ok(true);
        }
        let others: Vec<&str> = self
            .graph
            .variables()
            .iter()
            .map(|v| v.name.as_str())
            .filter(|name| *name != action)
            .collect();
        for x in &parents {
            let rest: Vec<&str> = others.iter().copied().filter(|n| n != x).collect();
            let mut some_set_breaks = false;
            for mask in 0..(1u32 << rest.len()) {
                let cond: Vec<&str> = rest
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| mask & (1 << i) != 0)
                    .map(|(_, n)| *n)
                    .collect();
                if self.independent_given(x, action, &cond)? {
                    some_set_breaks = true;
                    break;
                }
            }
            if some_set_breaks {
                return Ok(false);
            }
        }
        Ok(true)
    }

    /// Distributional independence of `x` and `y` given every
    /// positive-probability assignment to `cond`.
    fn independent_given(&self, x: &str, y: &str, cond: &[&str]) -> Result<bool> {
        let mut configs = vec![Assignment::new()];
        for c in cond {
            let v = self.graph.variable(c)?;
            let mut next = Vec::new();
            for a in &configs {
                for val in &v.domain {
                    next.push(a.clone().bind(v.name.clone(), val.clone()));
                }
            }
            configs = next;
        }
        let xv = self.graph.variable(x)?.clone();
        let yv = self.graph.variable(y)?.clone();
        for u in configs {
            let pu = self.prob_event(&u)?;
            if pu.is_zero() {
                continue;
            }
            for xval in &xv.domain {
                for yval in &yv.domain {
                    let joint = self.prob_event(
                        &u.clone().bind(x.to_string(), xval.clone()).bind(y.to_string(), yval.clone()),
                    )?;
                    let px = self.prob_event(&u.clone().bind(x.to_string(), xval.clone()))?;
                    let py = self.prob_event(&u.clone().bind(y.to_string(), yval.clone()))?;
                    if joint * pu.clone() != px * py {
                        return Ok(false);
                    }
                }
            }
        }
        Ok(true)
    }
}
