//! Structural causal models: deterministic local functions over source
//! variables, the solution function, submodels, abduction, the three-step
//! counterfactual procedure, and the canonical response-function conversion
//! from a causal Bayesian network.

use std::collections::{BTreeMap, BTreeSet};

use crate::cbn::{Cbn, Query};
use crate::graph::CausalGraph;
use crate::values::{Assignment, Distribution, Prob, Role, Variable};
use crate::{check_guard, Error, Result};

/// A deterministic local mechanism in table form. Expression equations are
/// compiled to this form by the loader.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LocalFn {
    pub child: String,
    pub parents: Vec<String>,
    /// One output value per full parent configuration.
    pub table: BTreeMap<Assignment, String>,
}

impl LocalFn {
    pub fn apply(&self, parent_values: &Assignment) -> Result<&str> {
        let key = parent_values.restrict(self.parents.iter().map(|s| s.as_str()));
        self.table.get(&key).map(|s| s.as_str()).ok_or_else(|| {
            Error::Model(format!(
                "local function for {} has no entry for {{{key}}}",
                self.child
            ))
        })
    }
}

/// A probabilistic structural causal model: deterministic mechanisms for
/// every non-source variable plus an independent prior per source variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scm {
    graph: CausalGraph,
    fns: BTreeMap<String, LocalFn>,
    prior: BTreeMap<String, BTreeMap<String, Prob>>,
}

impl Scm {
    pub fn new(
        graph: CausalGraph,
        fns: Vec<LocalFn>,
        prior: BTreeMap<String, BTreeMap<String, Prob>>,
    ) -> Result<Self> {
        let mut fn_map = BTreeMap::new();
        for f in fns {
            graph.variable(&f.child)?;
            if fn_map.insert(f.child.clone(), f).is_some() {
                return Err(Error::Model("duplicate local function".into()));
            }
        }
        for name in prior.keys() {
            graph.variable(name)?;
        }
        let m = Scm {
            graph,
            fns: fn_map,
            prior,
        };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        for v in self.graph.variables() {
            if self.graph.is_source(&v.name) {
                if self.fns.contains_key(&v.name) {
                    return Err(Error::Model(format!(
                        "source variable {} must not have a local function",
                        v.name
                    )));
                }
                let row = self.prior.get(&v.name).ok_or_else(|| {
                    Error::Model(format!("missing prior for source variable {}", v.name))
                })?;
                let mut total = Prob::zero();
                for (val, p) in row {
                    if !v.has_value(val) {
                        return Err(Error::DomainViolation {
                            variable: v.name.clone(),
                            value: val.clone(),
                        });
                    }
                    if p.is_negative() {
                        return Err(Error::Model(format!("negative prior for {}", v.name)));
                    }
                    total += p.clone();
                }
                if !total.is_one() {
                    return Err(Error::Model(format!(
                        "prior for {} sums to {total}, not 1",
                        v.name
                    )));
                }
            } else {
                if self.prior.contains_key(&v.name) {
                    return Err(Error::Model(format!(
                        "non-source variable {} must not have a prior",
                        v.name
                    )));
                }
                let f = self.fns.get(&v.name).ok_or_else(|| {
                    Error::Model(format!("missing local function for {}", v.name))
                })?;
                let declared: BTreeSet<&str> = f.parents.iter().map(|s| s.as_str()).collect();
                let graph_parents: BTreeSet<&str> =
                    self.graph.parents(&v.name).into_iter().collect();
                if declared != graph_parents {
                    return Err(Error::Model(format!(
                        "local function parents for {} do not match graph parents",
                        v.name
                    )));
                }
                let mut expected: u128 = 1;
                for p in &f.parents {
                    expected = expected.saturating_mul(self.graph.variable(p)?.domain.len() as u128);
                }
                if f.table.len() as u128 != expected {
                    return Err(Error::Model(format!(
                        "local function for {} covers {} configurations, expected {expected}",
                        v.name,
                        f.table.len()
                    )));
                }
                for (key, out) in &f.table {
                    for p in &f.parents {
                        let pv = key.get(p).ok_or_else(|| {
                            Error::Model(format!(
                                "local function entry for {} misses parent {p}",
                                v.name
                            ))
                        })?;
                        if !self.graph.variable(p)?.has_value(pv) {
                            return Err(Error::DomainViolation {
                                variable: p.clone(),
                                value: pv.to_string(),
                            });
                        }
                    }
                    if !v.has_value(out) {
                        return Err(Error::DomainViolation {
                            variable: v.name.clone(),
                            value: out.clone(),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn graph(&self) -> &CausalGraph {
        &self.graph
    }

    pub fn local_fn(&self, name: &str) -> Option<&LocalFn> {
        self.fns.get(name)
    }

    pub fn prior_of(&self, name: &str) -> Option<&BTreeMap<String, Prob>> {
        self.prior.get(name)
    }

    /// Source variables in declaration order.
    pub fn source_vars(&self) -> Vec<&str> {
        self.graph
            .variables()
            .iter()
            .filter(|v| self.graph.is_source(&v.name))
            .map(|v| v.name.as_str())
            .collect()
    }

    /// Evaluates the solution function: a full assignment from source
    /// values.
    pub fn solve(&self, sources: &Assignment) -> Result<Assignment> {
        let mut full = Assignment::new();
        for name in self.graph.topo_order()? {
            if self.graph.is_source(&name) {
                let val = sources
                    .get(&name)
                    .ok_or_else(|| Error::IncompleteAssignment(name.clone()))?;
                if !self.graph.variable(&name)?.has_value(val) {
                    return Err(Error::DomainViolation {
                        variable: name.clone(),
                        value: val.to_string(),
                    });
                }
                full.set(name, val);
            } else {
                let out = self.fns[&name].apply(&full)?.to_string();
                full.set(name, out);
            }
        }
        Ok(full)
    }

    /// Every source assignment, in deterministic domain order.
    pub fn source_assignments(&self) -> Result<Vec<Assignment>> {
        let sources = self.source_vars();
        let mut size: u128 = 1;
        for s in &sources {
            size = size.saturating_mul(self.graph.variable(s)?.domain.len() as u128);
        }
        check_guard(size)?;
        let mut out = vec![Assignment::new()];
        for s in sources {
            let v = self.graph.variable(s)?;
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

    /// Factorized prior probability of a source assignment.
    pub fn prior_prob(&self, sources: &Assignment) -> Result<Prob> {
        let mut p = Prob::one();
        for s in self.source_vars() {
            let val = sources
                .get(s)
                .ok_or_else(|| Error::IncompleteAssignment(s.to_string()))?;
            p = p * self.prior[s].get(val).cloned().unwrap_or_else(Prob::zero);
            if p.is_zero() {
                return Ok(p);
            }
        }
        Ok(p)
    }

    /// Joint probability of a full assignment: the prior of its source part
    /// if the solution function reproduces the rest, else 0.
    pub fn joint(&self, full: &Assignment) -> Result<Prob> {
        for v in self.graph.variables() {
            if !full.contains(&v.name) {
                return Err(Error::IncompleteAssignment(v.name.clone()));
            }
        }
        let sources = full.restrict(self.source_vars());
        if self.solve(&sources)? == *full {
            self.prior_prob(&sources)
        } else {
            Ok(Prob::zero())
        }
    }

    /// Probability of a (partial) event by enumeration over sources.
    pub fn prob_event(&self, event: &Assignment) -> Result<Prob> {
        let mut total = Prob::zero();
        for u in self.source_assignments()? {
            let p = self.prior_prob(&u)?;
            if p.is_zero() {
                continue;
            }
            if self.solve(&u)?.extends(event) {
                total += p;
            }
        }
        Ok(total)
    }

    /// Submodel under an intervention: intervened variables become sources
    /// with point-mass priors, their mechanisms dropped.
    pub fn submodel(&self, interventions: &Assignment) -> Result<Scm> {
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
        let mut fns = self.fns.clone();
        let mut prior = self.prior.clone();
        for (name, value) in interventions.iter() {
            fns.remove(name);
            let mut row = BTreeMap::new();
            row.insert(value.to_string(), Prob::one());
            prior.insert(name.to_string(), row);
        }
        Scm::new(graph, fns.into_values().collect(), prior)
    }

    /// Abduction: the exact joint posterior over source assignments given
    /// evidence. The posterior is generally correlated across sources.
    pub fn abduct(&self, evidence: &Assignment) -> Result<Distribution> {
        let mut weights: Vec<(Assignment, Prob)> = Vec::new();
        for u in self.source_assignments()? {
            let p = self.prior_prob(&u)?;
            if p.is_zero() {
                continue;
            }
            if self.solve(&u)?.extends(evidence) {
                weights.push((u, p));
            }
        }
        Distribution::normalize(weights).map_err(|e| match e {
            Error::ZeroMass => Error::ZeroEvidence,
            other => other,
        })
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
        let numer = match q.evidence.merge(&q.targets) {
            Ok(both) => self.prob_event(&both)?,
            Err(Error::Conflict(_)) => Prob::zero(),
            Err(e) => return Err(e),
        };
        Ok(numer / denom)
    }

    /// Interventional query: conditional in the submodel with interventions
    /// folded in as observed values.
    pub fn interventional(&self, q: &Query) -> Result<Prob> {
        q.validate()?;
        let sub = self.submodel(&q.interventions)?;
        let folded = Query::conditional(q.targets.clone(), q.evidence.merge(&q.interventions)?);
        sub.conditional(&folded)
    }

    /// Three-step counterfactual: abduction, intervention, prediction.
    ///
    /// Abduction conditions on all evidence in the submodel given by the
    /// query's do-terms; the counterfactual world applies the subscript
    /// interventions (do-terms not overridden by subscripts carry over);
    /// prediction evaluates the subscripted targets under the abduced
    /// posterior with no further conditioning.
    pub fn counterfactual(&self, q: &Query) -> Result<Prob> {
        q.validate()?;
        let potential = q
            .potential
            .as_ref()
            .ok_or_else(|| Error::Model("counterfactual query needs subscripted targets".into()))?;
        if !q.targets.is_empty() {
            return Err(Error::Unsupported(
                "mixing plain and subscripted targets in one query".into(),
            ));
        }
        // Abduction in the world the evidence was gathered in.
        let observed_world = self.submodel(&q.interventions)?;
        let posterior = observed_world.abduct(&q.evidence)?;
        // Counterfactual world: subscript interventions override do-terms.
        let world_iv = potential
            .interventions
            .merge(&q.interventions.without(potential.interventions.vars()))?;
        let world = self.submodel(&world_iv)?;
        let forced: Vec<&str> = potential.interventions.vars().collect();
        let mut total = Prob::zero();
        for (u, w) in posterior.iter() {
            let u_world = u.without(forced.iter().copied()).merge(&world_iv)?;
            if world.solve(&u_world)?.extends(&potential.targets) {
                total += w.clone();
            }
        }
        Ok(total)
    }

    /// Dispatch a query by its level.
    pub fn query(&self, q: &Query) -> Result<Prob> {
        if q.potential.is_some() {
            self.counterfactual(q)
        } else if q.interventions.is_empty() {
            self.conditional(q)
        } else {
            self.interventional(q)
        }
    }

    /// Canonical response-function conversion from a CBN.
    ///
    /// Non-deterministic mechanisms gain a latent response variable whose
    /// values are mappings from parent configurations to child values; the
    /// prior of a mapping is the product of the matching CPT entries, and
    /// zero-prior mappings are pruned. Deterministic mechanisms compile
    /// directly to local functions with no extra variable. Source variables
    /// keep their priors. The induced joint over the original variables
    /// equals the CBN joint exactly.
    pub fn from_cbn(m: &Cbn) -> Result<Scm> {
        let g = m.graph();
        let mut variables: Vec<Variable> = Vec::new();
        let mut edges: Vec<(String, String)> = Vec::new();
        let mut observed: Vec<String> = Vec::new();
        for v in g.variables() {
            variables.push(v.clone());
            if g.is_observed(&v.name) {
                observed.push(v.name.clone());
            }
        }
        for (p, c) in g.edges() {
            edges.push((p.to_string(), c.to_string()));
        }
        let mut fns: Vec<LocalFn> = Vec::new();
        let mut prior: BTreeMap<String, BTreeMap<String, Prob>> = BTreeMap::new();
        for v in g.variables() {
            let cpt = m.cpt(&v.name)?;
            if cpt.parents.is_empty() {
                // A source keeps its prior directly.
                let row = cpt.table.values().next().unwrap().clone();
                prior.insert(v.name.clone(), row);
                continue;
            }
            let deterministic = cpt
                .table
                .values()
                .all(|row| row.values().filter(|p| !p.is_zero()).count() == 1);
            if deterministic {
                let table: BTreeMap<Assignment, String> = cpt
                    .table
                    .iter()
                    .map(|(k, row)| {
                        let out = row
                            .iter()
                            .find(|(_, p)| !p.is_zero())
                            .map(|(val, _)| val.clone())
                            .unwrap();
                        (k.clone(), out)
                    })
                    .collect();
                fns.push(LocalFn {
                    child: v.name.clone(),
                    parents: cpt.parents.clone(),
                    table,
                });
                continue;
            }
            // Response-function variable: one value per mapping from parent
            // configurations to child values with nonzero prior.
            let configs: Vec<&Assignment> = cpt.table.keys().collect();
            check_guard((v.domain.len() as u128).saturating_pow(configs.len() as u32))?;
            let mut mappings: Vec<(Vec<String>, Prob)> = vec![(vec![], Prob::one())];
            for config in &configs {
                let row = &cpt.table[*config];
                let mut next = Vec::new();
                for (mapping, p) in &mappings {
                    for val in &v.domain {
                        let q = row.get(val).cloned().unwrap_or_else(Prob::zero);
                        if q.is_zero() {
                            continue;
                        }
                        let mut m2 = mapping.clone();
                        m2.push(val.clone());
                        next.push((m2, p.clone() * q));
                    }
                }
                mappings = next;
            }
            let mut uname = format!("U_{}", v.name);
            while variables.iter().any(|w| w.name == uname) || g.contains(&uname) {
                uname.push('_');
            }
            let udomain: Vec<String> = mappings
                .iter()
                .map(|(mapping, _)| mapping.join(","))
                .collect();
            let uvar = Variable {
                name: uname.clone(),
                domain: udomain.clone(),
                role: Role::State,
                slice: v.slice,
            };
            variables.push(uvar);
            edges.push((uname.clone(), v.name.clone()));
            let mut urow = BTreeMap::new();
            for ((mapping, p), val) in mappings.iter().zip(&udomain) {
                let _ = mapping;
                urow.insert(val.clone(), p.clone());
            }
            prior.insert(uname.clone(), urow);
            // Local function over original parents plus the response var.
            let mut table: BTreeMap<Assignment, String> = BTreeMap::new();
            for (mapping, _) in &mappings {
                let uval = mapping.join(",");
                for (i, config) in configs.iter().enumerate() {
                    let key = (*config).clone().bind(uname.clone(), uval.clone());
                    table.insert(key, mapping[i].clone());
                }
            }
            let mut parents = cpt.parents.clone();
            parents.push(uname);
            fns.push(LocalFn {
                child: v.name.clone(),
                parents,
                table,
            });
        }
        let graph = CausalGraph::new(variables, edges, observed)?;
        Scm::new(graph, fns, prior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn a(pairs: &[(&str, &str)]) -> Assignment {
        Assignment::of(pairs)
    }

    #[test]
    fn solve_table_7() {
        let m = fixtures::online_scm();
        let full = m.solve(&a(&[("PH", "1"), ("CG", "1"), ("GH", "0")])).unwrap();
        assert_eq!(full.get("SH"), Some("1"));
        assert_eq!(full.get("SC"), Some("1"));
        let full = m.solve(&a(&[("PH", "0"), ("CG", "1"), ("GH", "0")])).unwrap();
        assert_eq!(full.get("SH"), Some("0"));
        assert_eq!(full.get("SC"), Some("0"));
    }

    #[test]
    fn scm_joint_one_eighth() {
        let m = fixtures::online_scm();
        let full = a(&[("PH", "1"), ("CG", "1"), ("GH", "0"), ("SH", "1"), ("SC", "1")]);
        assert_eq!(m.joint(&full).unwrap(), Prob::ratio(1, 8));
        // Inconsistent with the solution function.
        let bad = a(&[("PH", "1"), ("CG", "1"), ("GH", "0"), ("SH", "0"), ("SC", "1")]);
        assert_eq!(m.joint(&bad).unwrap(), Prob::zero());
        // Normalization.
        let mut total = Prob::zero();
        for u in m.source_assignments().unwrap() {
            total += m.prior_prob(&u).unwrap();
        }
        assert_eq!(total, Prob::one());
    }

    #[test]
    fn submodel_point_mass() {
        let m = fixtures::offline_confounded_scm();
        let sub = m.submodel(&a(&[("SH", "1")])).unwrap();
        assert!(sub.graph().parents("SH").is_empty());
        assert_eq!(sub.prior_of("SH").unwrap().get("1"), Some(&Prob::one()));
        let again = sub.submodel(&a(&[("SH", "1")])).unwrap();
        assert_eq!(sub, again);
    }

    #[test]
    fn abduct_confounded_health_zero() {
        let m = fixtures::offline_confounded_scm();
        let post = m.abduct(&a(&[("CG", "1"), ("SH", "0")])).unwrap();
        let mut ph1 = Prob::zero();
        for (u, p) in post.iter() {
            if u.get("PH") == Some("1") {
                ph1 += p.clone();
            }
        }
        assert_eq!(ph1, Prob::zero());
    }

    #[test]
    fn abduct_goalie_health() {
        let m = fixtures::online_scm();
        let post = m.abduct(&a(&[("CG", "1"), ("PH", "1"), ("SC", "1")])).unwrap();
        for (u, _) in post.iter() {
            assert_eq!(u.get("GH"), Some("0"));
        }
    }

    #[test]
    fn abduct_empty_evidence_is_prior() {
        let m = fixtures::online_scm();
        let post = m.abduct(&Assignment::new()).unwrap();
        for (u, p) in post.iter() {
            assert_eq!(*p, m.prior_prob(u).unwrap());
        }
    }

    #[test]
    fn table_5_counterfactuals() {
        use crate::cbn::Potential;
        let confounded = fixtures::offline_confounded_scm();
        let q = Query {
            evidence: a(&[("CG", "1"), ("SH", "0")]),
            potential: Some(Potential {
                targets: a(&[("SC", "1")]),
                interventions: a(&[("SH", "1")]),
            }),
            ..Query::default()
        };
        assert_eq!(confounded.counterfactual(&q).unwrap(), Prob::zero());
        let unconfounded = fixtures::offline_unconfounded_scm();
        assert_eq!(unconfounded.counterfactual(&q).unwrap(), Prob::ratio(1, 2));
    }

    #[test]
    fn table_5_conditionals_and_interventionals() {
        for (m, iv_expected) in [
            (fixtures::offline_confounded_scm(), Prob::ratio(1, 4)),
            (fixtures::offline_unconfounded_scm(), Prob::ratio(1, 2)),
        ] {
            let cond = m
                .conditional(&Query::conditional(
                    a(&[("SC", "1")]),
                    a(&[("CG", "1"), ("SH", "1")]),
                ))
                .unwrap();
            assert_eq!(cond, Prob::ratio(1, 2));
            let iv = m
                .interventional(&Query::interventional(
                    a(&[("SC", "1")]),
                    a(&[("CG", "1")]),
                    a(&[("SH", "1")]),
                ))
                .unwrap();
            assert_eq!(iv, iv_expected);
        }
    }

    #[test]
    fn hindsight_reward_probability_one() {
        use crate::cbn::Potential;
        let m = fixtures::online_scm();
        let q = Query {
            evidence: a(&[("CG", "1"), ("PH", "1"), ("SC", "1")]),
            potential: Some(Potential {
                targets: a(&[("SC", "1")]),
                interventions: a(&[("SH", "1")]),
            }),
            ..Query::default()
        };
        assert_eq!(m.counterfactual(&q).unwrap(), Prob::one());
    }

    #[test]
    fn counterfactual_of_evidence_is_one() {
        use crate::cbn::Potential;
        let m = fixtures::online_scm();
        let ev = a(&[("CG", "1"), ("PH", "1"), ("SC", "1")]);
        let q = Query {
            evidence: ev.clone(),
            potential: Some(Potential {
                targets: ev,
                interventions: Assignment::new(),
            }),
            ..Query::default()
        };
        assert_eq!(m.counterfactual(&q).unwrap(), Prob::one());
    }

    #[test]
    fn from_cbn_matches_joint() {
        for m in [fixtures::online_cbn(), fixtures::offline_cbn()] {
            let s = Scm::from_cbn(&m).unwrap();
            for full in m.assignments_consistent_with(&Assignment::new()).unwrap() {
                assert_eq!(s.prob_event(&full).unwrap(), m.joint(&full).unwrap());
            }
        }
    }

    #[test]
    fn from_cbn_preserves_one_eighth() {
        let m = fixtures::online_cbn();
        let s = Scm::from_cbn(&m).unwrap();
        let full = a(&[("PH", "1"), ("CG", "1"), ("GH", "0"), ("SH", "1"), ("SC", "1")]);
        assert_eq!(s.prob_event(&full).unwrap(), Prob::ratio(1, 8));
    }

    #[test]
    fn from_cbn_binary_root() {
        use crate::cbn::Cpt;
        let g = CausalGraph::new(
            vec![Variable::new("X", &["0", "1"])],
            vec![],
            vec!["X".into()],
        )
        .unwrap();
        let mut row = BTreeMap::new();
        row.insert("0".to_string(), Prob::ratio(1, 2));
        row.insert("1".to_string(), Prob::ratio(1, 2));
        let mut table = BTreeMap::new();
        table.insert(Assignment::new(), row);
        let m = Cbn::new(
            g,
            vec![Cpt {
                child: "X".into(),
                parents: vec![],
                table,
            }],
        )
        .unwrap();
        let s = Scm::from_cbn(&m).unwrap();
        let p = s.prior_of("X").unwrap();
        assert_eq!(p.get("0"), Some(&Prob::ratio(1, 2)));
        assert_eq!(p.get("1"), Some(&Prob::ratio(1, 2)));
    }
}
