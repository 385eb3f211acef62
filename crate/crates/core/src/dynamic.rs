//! Two-slice dynamic decision networks: environment dynamics, a reward
//! model, and a network policy in one causal model, plus belief updates,
//! marginal policies, finite-horizon unrolling, and seeded simulation.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cbn::{Cbn, Cpt};
use crate::graph::CausalGraph;
use crate::values::{Assignment, Distribution, Prob, Role, Slice, Variable};
use crate::{check_guard, Error, Result};

/// How a policy's table is keyed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyKind {
    /// Keyed by full-state assignments (may reference latent variables).
    FullState,
    /// Keyed by observed variables only; executable by construction.
    Observation,
}

/// A tabular policy over a subset of current-slice state variables.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    pub name: String,
    pub action: String,
    pub vars: Vec<String>,
    pub rows: BTreeMap<Assignment, BTreeMap<String, Prob>>,
    pub kind: PolicyKind,
}

impl Policy {
    /// Action distribution for a state; the state must bind all policy
    /// variables.
    pub fn dist(&self, state: &Assignment) -> Result<&BTreeMap<String, Prob>> {
        let key = state.restrict(self.vars.iter().map(|s| s.as_str()));
        if key.len() != self.vars.len() {
            let missing = self
                .vars
                .iter()
                .find(|v| !state.contains(v))
                .cloned()
                .unwrap_or_default();
            return Err(Error::IncompleteAssignment(missing));
        }
        self.rows.get(&key).ok_or_else(|| {
            Error::Model(format!("policy {} has no row for {{{key}}}", self.name))
        })
    }

    pub fn prob(&self, state: &Assignment, action_value: &str) -> Result<Prob> {
        Ok(self
            .dist(state)?
            .get(action_value)
            .cloned()
            .unwrap_or_else(Prob::zero))
    }
}

/// An epistemic state: the current observation and an exact belief over the
/// latent state variables.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct EpistemicState {
    pub observation: Assignment,
    pub belief: Distribution,
}

/// One simulated time step.
#[derive(Debug, Clone)]
pub struct Step {
    pub t: usize,
    /// Full state: latent and observed variables.
    pub state: Assignment,
    pub belief: Distribution,
    pub action: String,
    pub reward: String,
}

/// A two-slice dynamic decision network.
#[derive(Debug, Clone)]
pub struct Ddn {
    cbn: Cbn,
    policies: Vec<Policy>,
    discount: Prob,
    state_vars: Vec<String>,
    action: String,
    reward: String,
}

impl Ddn {
    pub fn new(cbn: Cbn, policies: Vec<Policy>, discount: Prob, relax_a3: bool) -> Result<Self> {
        let g = cbn.graph();
        let report = g.check_ddn_constraints();
        let ok = if relax_a3 {
            report.pass_relaxed()
        } else {
            report.all_pass()
        };
        if !ok {
            let offending = report
                .no_backward_edges
                .iter()
                .chain(&report.no_reward_children)
                .chain(if relax_a3 {
                    [].iter()
                } else {
                    report.no_action_state_edges.iter()
                })
                .map(|(p, c)| format!("{p}->{c}"))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::Model(format!(
                "structural constraints violated by edges: {offending}"
            )));
        }
        let mut action = None;
        let mut reward = None;
        let mut state_vars = Vec::new();
        for v in g.variables() {
            match (v.role, v.slice) {
                (Role::Action, Slice::Current) => {
                    if action.replace(v.name.clone()).is_some() {
                        return Err(Error::Model("more than one action variable".into()));
                    }
                }
                (Role::Reward, Slice::Current) => {
                    if reward.replace(v.name.clone()).is_some() {
                        return Err(Error::Model("more than one reward variable".into()));
                    }
                }
                (Role::Action | Role::Reward, Slice::Next) => {
                    return Err(Error::Model(
                        "action and reward variables belong to the current slice".into(),
                    ));
                }
                (Role::State, Slice::Current) => state_vars.push(v.name.clone()),
                _ => {}
            }
        }
        let action = action.ok_or_else(|| Error::Model("model has no action variable".into()))?;
        let reward = reward.ok_or_else(|| Error::Model("model has no reward variable".into()))?;
        // Every next-slice variable is a primed copy of a current state
        // variable, and vice versa.
        let mut next_names = BTreeSet::new();
        for v in g.variables() {
            if v.slice == Slice::Next {
                let base = v.name.strip_suffix('\'').ok_or_else(|| {
                    Error::Model(format!(
                        "next-slice variable {} must be named <current>'",
                        v.name
                    ))
                })?;
                let cur = g.variable(base)?;
                if cur.slice != Slice::Current || cur.role != Role::State {
                    return Err(Error::Model(format!(
                        "next-slice variable {} must shadow a current state variable",
                        v.name
                    )));
                }
                if cur.domain != v.domain {
                    return Err(Error::Model(format!(
                        "domain mismatch between {} and {base}",
                        v.name
                    )));
                }
                next_names.insert(base.to_string());
            }
        }
        for s in &state_vars {
            if !next_names.contains(s) {
                return Err(Error::Model(format!(
                    "state variable {s} has no next-slice counterpart {s}'"
                )));
            }
        }
        if discount.is_zero() || discount.is_negative() || Prob::one() < discount {
            return Err(Error::Model(format!(
                "discount must lie in (0, 1], got {discount}"
            )));
        }
        let rvar = g.variable(&reward)?;
        for val in &rvar.domain {
            if val.parse::<Prob>().is_err() {
                return Err(Error::Model(format!(
                    "reward domain value {val} is not numeric"
                )));
            }
        }
        for p in &policies {
            for v in &p.vars {
                let var = g.variable(v)?;
                if var.slice != Slice::Current || var.role != Role::State {
                    return Err(Error::Model(format!(
                        "policy {} references {v}, which is not a current state variable",
                        p.name
                    )));
                }
            }
        }
        Ok(Ddn {
            cbn,
            policies,
            discount,
            state_vars,
            action,
            reward,
        })
    }

    pub fn as_cbn(&self) -> &Cbn {
        &self.cbn
    }

    pub fn graph(&self) -> &CausalGraph {
        self.cbn.graph()
    }

    pub fn discount(&self) -> &Prob {
        &self.discount
    }

    /// The same model with a different discount in (0, 1].
    pub fn with_discount(&self, discount: Prob) -> Result<Ddn> {
        if discount.is_negative() || discount.is_zero() || Prob::one() < discount {
            return Err(Error::Model(format!(
                "discount {discount} is outside (0, 1]"
            )));
        }
        let mut d = self.clone();
        d.discount = discount;
        Ok(d)
    }

    pub fn action(&self) -> &str {
        &self.action
    }

    pub fn reward(&self) -> &str {
        &self.reward
    }

    pub fn state_vars(&self) -> &[String] {
        &self.state_vars
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn policy(&self, name: &str) -> Result<&Policy> {
        self.policies
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Model(format!("no policy named {name}")))
    }

    /// Observed current-slice state variables per the model declaration.
    pub fn observed_state_vars(&self) -> Vec<String> {
        self.state_vars
            .iter()
            .filter(|s| self.graph().is_observed(s))
            .cloned()
            .collect()
    }

    /// The network policy: the action's own conditional table read as a
    /// policy over the action's parents.
    pub fn network_policy(&self) -> Result<Policy> {
        let cpt = self.cbn.cpt(&self.action)?;
        let latent = cpt
            .parents
            .iter()
            .any(|p| !self.graph().is_observed(p));
        Ok(Policy {
            name: "network".into(),
            action: self.action.clone(),
            vars: cpt.parents.clone(),
            rows: cpt.table.clone(),
            kind: if latent {
                PolicyKind::FullState
            } else {
                PolicyKind::Observation
            },
        })
    }

    /// The static one-slice model: current-slice variables only.
    pub fn static_model(&self) -> Result<Cbn> {
        let g = self.graph();
        let mut vars = Vec::new();
        let mut observed = Vec::new();
        let mut keep = BTreeSet::new();
        for v in g.variables() {
            if v.slice == Slice::Current {
                vars.push(v.clone());
                keep.insert(v.name.clone());
                if g.is_observed(&v.name) {
                    observed.push(v.name.clone());
                }
            }
        }
        let edges: Vec<(String, String)> = g
            .edges()
            .filter(|(p, c)| keep.contains(*p) && keep.contains(*c))
            .map(|(p, c)| (p.to_string(), c.to_string()))
            .collect();
        let graph = CausalGraph::new(vars, edges, observed)?;
        let cpts: Vec<Cpt> = keep
            .iter()
            .map(|n| self.cbn.cpt(n).cloned())
            .collect::<Result<_>>()?;
        Cbn::new(graph, cpts)
    }

    /// Probability of a full next-slice state assignment (primed names)
    /// given the full current state and action.
    pub fn transition_prob(&self, current: &Assignment, next: &Assignment) -> Result<Prob> {
        let merged = current.merge(next)?;
        let mut p = Prob::one();
        for name in self.graph().topo_order()? {
            if self.graph().variable(&name)?.slice != Slice::Next {
                continue;
            }
            let val = next
                .get(&name)
                .ok_or_else(|| Error::IncompleteAssignment(name.clone()))?;
            p = p * self.cbn.cpt(&name)?.prob(&merged, val)?;
            if p.is_zero() {
                return Ok(p);
            }
        }
        Ok(p)
    }

    /// All assignments over the primed copies of `base_vars`.
    fn primed_assignments(&self, base_vars: &[String]) -> Result<Vec<Assignment>> {
        let mut size: u128 = 1;
        for s in base_vars {
            size = size.saturating_mul(self.graph().variable(s)?.domain.len() as u128);
        }
        check_guard(size)?;
        let mut out = vec![Assignment::new()];
        for s in base_vars {
            let v = self.graph().variable(s)?;
            let primed = format!("{s}'");
            let mut nextv = Vec::with_capacity(out.len() * v.domain.len());
            for a in &out {
                for val in &v.domain {
                    nextv.push(a.clone().bind(primed.clone(), val.clone()));
                }
            }
            out = nextv;
        }
        Ok(out)
    }

    fn unprime(a: &Assignment) -> Assignment {
        let mut out = Assignment::new();
        for (k, v) in a.iter() {
            out.set(k.strip_suffix('\'').unwrap_or(k), v);
        }
        out
    }

    fn prime(a: &Assignment) -> Assignment {
        let mut out = Assignment::new();
        for (k, v) in a.iter() {
            out.set(format!("{k}'"), v);
        }
        out
    }

    /// Exact latent posterior update: b'(z') ∝ Σ_z b(z) P(z', o' | z, o, a).
    ///
    /// `o` and `o'` use current-slice names; the latent set is everything
    /// `o` leaves unbound. The returned belief is over current-slice names.
    pub fn belief_update(
        &self,
        b: &Distribution,
        o: &Assignment,
        action_value: &str,
        o_next: &Assignment,
    ) -> Result<Distribution> {
        let latent: Vec<String> = self
            .state_vars
            .iter()
            .filter(|s| !o.contains(s))
            .cloned()
            .collect();
        let primed_obs = Self::prime(o_next);
        let mut weights: BTreeMap<Assignment, Prob> = BTreeMap::new();
        for (z, wz) in b.iter() {
            let current = o
                .merge(z)?
                .bind(self.action.clone(), action_value.to_string());
            for zp in self.primed_assignments(&latent)? {
                let next = primed_obs.merge(&zp)?;
                let p = self.transition_prob(&current, &next)?;
                if p.is_zero() {
                    continue;
                }
                *weights
                    .entry(Self::unprime(&zp))
                    .or_insert_with(Prob::zero) += wz.clone() * p;
            }
        }
        Distribution::normalize(weights)
    }

    /// True iff the policy's action distribution is constant over the
    /// latent variables for every positive-probability observation.
    pub fn is_executable(&self, p: &Policy, observed: &BTreeSet<String>) -> Result<bool> {
        if p.vars.iter().all(|v| observed.contains(v)) {
            return Ok(true);
        }
        let stat = self.static_model()?;
        let obs_vars: Vec<&str> = p
            .vars
            .iter()
            .filter(|v| observed.contains(*v))
            .map(|s| s.as_str())
            .collect();
        let all_vars: Vec<&str> = p.vars.iter().map(|s| s.as_str()).collect();
        // Group positive-probability full keys by their observed part.
        let mut by_obs: BTreeMap<Assignment, Vec<&Assignment>> = BTreeMap::new();
        for key in p.rows.keys() {
            if stat.prob_event(key)?.is_zero() {
                continue;
            }
            by_obs
                .entry(key.restrict(obs_vars.iter().copied()))
                .or_default()
                .push(key);
        }
        let _ = all_vars;
        for keys in by_obs.values() {
            let first = p.rows.get(keys[0]).unwrap();
            for k in &keys[1..] {
                if p.rows.get(*k).unwrap() != first {
                    return Ok(false);
                }
            }
        }
        Ok(true)
    }

    /// Executability against the model's declared observed set.
    pub fn is_executable_declared(&self, p: &Policy) -> Result<bool> {
        let observed: BTreeSet<String> = self
            .observed_state_vars()
            .into_iter()
            .collect();
        self.is_executable(p, &observed)
    }

    /// The observation-level policy obtained by averaging a behavioral
    /// policy over the latent posterior under the initial distribution.
    pub fn marginal_policy(&self, behavioral: &Policy, observed: &[String]) -> Result<Policy> {
        let stat = self.static_model()?;
        let action_domain = self.graph().variable(&self.action)?.domain.clone();
        let mut configs = vec![Assignment::new()];
        for v in observed {
            let var = self.graph().variable(v)?;
            let mut next = Vec::with_capacity(configs.len() * var.domain.len());
            for a in &configs {
                for val in &var.domain {
                    next.push(a.clone().bind(var.name.clone(), val.clone()));
                }
            }
            configs = next;
        }
        let hidden: Vec<&str> = behavioral
            .vars
            .iter()
            .filter(|v| !observed.contains(v))
            .map(|s| s.as_str())
            .collect();
        let mut rows = BTreeMap::new();
        for o in configs {
            if stat.prob_event(&o)?.is_zero() {
                // Unreachable observations get no row; looking one up is an
                // error at use time.
                continue;
            }
            let posterior = stat.conditional_dist(&hidden, &o)?;
            let mut dist: BTreeMap<String, Prob> = BTreeMap::new();
            for a in &action_domain {
                let mut total = Prob::zero();
                for (z, pz) in posterior.iter() {
                    let full = o.merge(z)?;
                    total += pz.clone() * behavioral.prob(&full, a)?;
                }
                dist.insert(a.clone(), total);
            }
            rows.insert(o, dist);
        }
        Ok(Policy {
            name: format!("{}-marginal", behavioral.name),
            action: self.action.clone(),
            vars: observed.to_vec(),
            rows,
            kind: PolicyKind::Observation,
        })
    }

    /// Flattens the network into a `T`-step causal model under the supplied
    /// policy. Slice-`t` variables carry `t` primes.
    pub fn unroll(&self, t_horizon: usize, policy: &Policy) -> Result<Cbn> {
        if t_horizon == 0 {
            return Err(Error::Model("horizon must be at least 1".into()));
        }
        let g = self.graph();
        let mut domain_size: u128 = 1;
        for v in g.variables() {
            if v.slice == Slice::Current {
                domain_size = domain_size
                    .saturating_mul((v.domain.len() as u128).saturating_pow(t_horizon as u32));
            }
        }
        check_guard(domain_size)?;
        let suffix = |name: &str, t: usize| format!("{name}{}", "'".repeat(t));
        let stat = self.static_model()?;
        let order = stat.graph().topo_order()?;
        let mut variables = Vec::new();
        let mut observed = Vec::new();
        let mut edges = Vec::new();
        let mut cpts = Vec::new();
        for t in 0..t_horizon {
            for base in &order {
                let v = g.variable(base)?;
                let name = suffix(base, t);
                variables.push(Variable {
                    name: name.clone(),
                    domain: v.domain.clone(),
                    role: v.role,
                    slice: Slice::Current,
                });
                if g.is_observed(base) {
                    observed.push(name.clone());
                }
                let cpt = if base == &self.action {
                    // The supplied policy decides the action at every step.
                    let parents: Vec<String> =
                        policy.vars.iter().map(|p| suffix(p, t)).collect();
                    let mut table = BTreeMap::new();
                    for (key, dist) in &policy.rows {
                        let mut renamed = Assignment::new();
                        for (k, val) in key.iter() {
                            renamed.set(suffix(k, t), val);
                        }
                        table.insert(renamed, dist.clone());
                    }
                    Cpt {
                        child: name.clone(),
                        parents,
                        table,
                    }
                } else {
                    // States and the reward: slice 0 uses the static
                    // mechanisms, later slices the transition mechanisms.
                    let source = if t == 0 || v.role != Role::State {
                        self.cbn.cpt(base)?
                    } else {
                        self.cbn.cpt(&format!("{base}'"))?
                    };
                    let rename = |pname: &str| -> String {
                        if t == 0 || v.role != Role::State {
                            suffix(pname, t)
                        } else if let Some(b) = pname.strip_suffix('\'') {
                            suffix(b, t)
                        } else {
                            suffix(pname, t - 1)
                        }
                    };
                    let parents: Vec<String> =
                        source.parents.iter().map(|p| rename(p)).collect();
                    let mut table = BTreeMap::new();
                    for (key, dist) in &source.table {
                        let mut renamed = Assignment::new();
                        for (k, val) in key.iter() {
                            renamed.set(rename(k), val);
                        }
                        table.insert(renamed, dist.clone());
                    }
                    Cpt {
                        child: name.clone(),
                        parents,
                        table,
                    }
                };
                for p in &cpt.parents {
                    edges.push((p.clone(), name.clone()));
                }
                cpts.push(cpt);
            }
        }
        let graph = CausalGraph::new(variables, edges, observed)?;
        Cbn::new(graph, cpts)
    }

    /// Seeded trajectory sampling. Requires an executable policy.
    pub fn simulate(&self, policy: &Policy, steps: usize, seed: u64) -> Result<Vec<Step>> {
        let observed: BTreeSet<String> = self.observed_state_vars().into_iter().collect();
        if !self.is_executable(policy, &observed)? {
            let latent: Vec<&String> = policy
                .vars
                .iter()
                .filter(|v| !observed.contains(*v))
                .collect();
            let names: Vec<String> = latent.iter().map(|s| (*s).clone()).collect();
            return Err(Error::NotExecutable(format!(
                "policy {} depends on latent {}",
                policy.name,
                names.join(", ")
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stat = self.static_model()?;
        let g = self.graph();
        let obs_vars: Vec<&str> = observed.iter().map(|s| s.as_str()).collect();
        let latent_vars: Vec<&str> = self
            .state_vars
            .iter()
            .filter(|s| !observed.contains(*s))
            .map(|s| s.as_str())
            .collect();
        let mut out = Vec::with_capacity(steps);
        if steps == 0 {
            return Ok(out);
        }
        // Initial state from the static model.
        let mut state = Assignment::new();
        for name in stat.graph().topo_order()? {
            let v = stat.graph().variable(&name)?;
            if v.role != Role::State {
                continue;
            }
            let row = stat.cpt(&name)?.row(&state)?.clone();
            let val = sample(&mut rng, &v.domain, &row);
            state.set(name, val);
        }
        let mut belief = if latent_vars.is_empty() {
            Distribution::point(Assignment::new())
        } else {
            stat.conditional_dist(&latent_vars, &state.restrict(obs_vars.iter().copied()))?
        };
        for t in 0..steps {
            let adomain = g.variable(&self.action)?.domain.clone();
            let arow = policy.dist(&state)?.clone();
            let a_val = sample(&mut rng, &adomain, &arow);
            let with_a = state.clone().bind(self.action.clone(), a_val.clone());
            let rvar = g.variable(&self.reward)?;
            let rrow = self.cbn.cpt(&self.reward)?.row(&with_a)?.clone();
            let r_val = sample(&mut rng, &rvar.domain, &rrow);
            out.push(Step {
                t,
                state: state.clone(),
                belief: belief.clone(),
                action: a_val.clone(),
                reward: r_val,
            });
            if t + 1 == steps {
                break;
            }
            // Next state, sampled mechanism by mechanism in slice order.
            let mut merged = with_a.clone();
            for name in g.topo_order()? {
                let v = g.variable(&name)?;
                if v.slice != Slice::Next {
                    continue;
                }
                let row = self.cbn.cpt(&name)?.row(&merged)?.clone();
                let val = sample(&mut rng, &v.domain, &row);
                merged.set(name, val);
            }
            let mut next_state = Assignment::new();
            for s in &self.state_vars {
                next_state.set(s.clone(), merged.get(&format!("{s}'")).unwrap());
            }
            let o = state.restrict(obs_vars.iter().copied());
            let o_next = next_state.restrict(obs_vars.iter().copied());
            belief = if latent_vars.is_empty() {
                Distribution::point(Assignment::new())
            } else {
                self.belief_update(&belief, &o, &a_val, &o_next)?
            };
            state = next_state;
        }
        Ok(out)
    }
}

fn sample(rng: &mut ChaCha8Rng, domain: &[String], row: &BTreeMap<String, Prob>) -> String {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for val in domain {
        acc += row.get(val).map(|p| p.to_f64()).unwrap_or(0.0);
        if u < acc {
            return val.clone();
        }
    }
    domain
        .iter()
        .rev()
        .find(|v| row.get(*v).map_or(false, |p| !p.is_zero()))
        .cloned()
        .unwrap_or_else(|| domain.last().cloned().unwrap_or_default())
}
