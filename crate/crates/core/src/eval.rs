//! Policy evaluation: exact fully-observed Bellman solves and
//! epistemic-state evaluation in the conditional, interventional, what-if,
//! and hindsight modes.

use std::collections::BTreeMap;

use crate::dynamic::{Ddn, EpistemicState, Policy};
use crate::linalg;
use crate::values::{Assignment, Distribution, Prob};
use crate::{Error, Result};

/// Evaluation semantics for rewards and transitions.
///
/// Conditional weighs latent states by the network policy's likelihood of
/// the action; the do-modes use the belief unchanged (interventions carry no
/// information about their causes). What-if first abduces the belief on an
/// observed act, hindsight on an observed outcome.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Mode {
    Conditional,
    Interventional,
    WhatIf { observed_action: String },
    Hindsight { outcome: Assignment },
}

impl Mode {
    pub fn tag(&self) -> &'static str {
        match self {
            Mode::Conditional => "conditional",
            Mode::Interventional => "interventional",
            Mode::WhatIf { .. } => "what-if",
            Mode::Hindsight { .. } => "hindsight",
        }
    }

    fn is_conditional(&self) -> bool {
        matches!(self, Mode::Conditional)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    LinearSystem,
}

/// Exact values at one epistemic state.
#[derive(Debug, Clone)]
pub struct StateValue {
    pub state: EpistemicState,
    pub v: Prob,
    /// Q per action value; `None` when the mode leaves the value undefined
    /// (a conditional Q for an action the network policy never takes).
    pub q: Vec<(String, Option<Prob>)>,
}

impl StateValue {
    pub fn q_of(&self, action_value: &str) -> Option<&Prob> {
        self.q
            .iter()
            .find(|(a, _)| a == action_value)
            .and_then(|(_, q)| q.as_ref())
    }
}

#[derive(Debug, Clone)]
pub struct ValueReport {
    pub mode: String,
    pub solver: Solver,
    pub gamma: Prob,
    /// Initial state first, then breadth-first discovery order.
    pub states: Vec<StateValue>,
}

impl ValueReport {
    pub fn initial(&self) -> &StateValue {
        &self.states[0]
    }

    /// Deterministic text table.
    pub fn render(&self, decimal: Option<u32>) -> String {
        let fmt = |p: &Prob| match decimal {
            Some(d) => format!("{p} ({})", p.to_decimal(d)),
            None => p.to_string(),
        };
        let mut out = format!("mode: {}\ngamma: {}\n", self.mode, self.gamma);
        for (i, s) in self.states.iter().enumerate() {
            let belief: Vec<String> = s
                .state
                .belief
                .iter()
                .map(|(z, p)| format!("{{{z}}}:{p}"))
                .collect();
            out.push_str(&format!(
                "state {i}: o={{{}}} b=[{}]\n",
                s.state.observation,
                belief.join(" ")
            ));
            out.push_str(&format!("  V = {}\n", fmt(&s.v)));
            for (a, q) in &s.q {
                match q {
                    Some(q) => out.push_str(&format!("  Q[{a}] = {}\n", fmt(q))),
                    None => out.push_str(&format!("  Q[{a}] = undefined\n")),
                }
            }
        }
        out
    }
}

/// One compared state-action pair from `check_equivalence`.
#[derive(Debug, Clone)]
pub struct EquivalenceEntry {
    pub state: EpistemicState,
    pub action: String,
    pub left: Option<Prob>,
    pub right: Option<Prob>,
    /// Only pairs defined on both sides are compared.
    pub compared: bool,
    pub equal: bool,
}

#[derive(Debug, Clone)]
pub struct EquivalenceReport {
    pub left_mode: String,
    pub right_mode: String,
    pub entries: Vec<EquivalenceEntry>,
    pub all_equal: bool,
}

/// Builds the initial epistemic state for an observation: the belief is the
/// exact latent posterior under the initial distribution.
pub fn initial_state(m: &Ddn, observation: &Assignment) -> Result<EpistemicState> {
    let stat = m.static_model()?;
    let latent: Vec<&str> = m
        .state_vars()
        .iter()
        .filter(|s| !observation.contains(s))
        .map(|s| s.as_str())
        .collect();
    let belief = if latent.is_empty() {
        Distribution::point(Assignment::new())
    } else {
        stat.conditional_dist(&latent, observation)?
    };
    Ok(EpistemicState {
        observation: observation.clone(),
        belief,
    })
}

const CLOSURE_GUARD: usize = 10_000;

/// Expected immediate reward for a full latent/observed state and action.
fn reward_term(m: &Ddn, full_state: &Assignment, action_value: &str) -> Result<Prob> {
    let with_a = full_state
        .clone()
        .bind(m.action().to_string(), action_value.to_string());
    let row = m.as_cbn().cpt(m.reward())?.row(&with_a)?;
    let mut total = Prob::zero();
    for (val, p) in row {
        if p.is_zero() {
            continue;
        }
        let magnitude: Prob = val
            .parse()
            .map_err(|_| Error::Model(format!("reward value {val} is not numeric")))?;
        total += magnitude * p.clone();
    }
    Ok(total)
}

/// Per-mode latent weighting for reward and transition terms at one state.
fn mode_weights(
    m: &Ddn,
    mode: &Mode,
    state: &EpistemicState,
    action_value: &str,
) -> Result<Option<Distribution>> {
    if !mode.is_conditional() {
        return Ok(Some(state.belief.clone()));
    }
    let net = m.network_policy()?;
    let mut weights: Vec<(Assignment, Prob)> = Vec::new();
    for (z, bz) in state.belief.iter() {
        let full = state.observation.merge(z)?;
        let p = net.prob(&full, action_value)?;
        weights.push((z.clone(), bz.clone() * p));
    }
    match Distribution::normalize(weights) {
        Ok(d) => Ok(Some(d)),
        Err(Error::ZeroMass) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Action distribution of the evaluated policy at an epistemic state. A
/// full-state policy must be constant over the belief support.
fn policy_dist(
    m: &Ddn,
    policy: &Policy,
    state: &EpistemicState,
) -> Result<BTreeMap<String, Prob>> {
    if policy
        .vars
        .iter()
        .all(|v| state.observation.contains(v))
    {
        return Ok(policy.dist(&state.observation)?.clone());
    }
    let mut rows: Vec<&BTreeMap<String, Prob>> = Vec::new();
    for (z, _) in state.belief.iter() {
        let full = state.observation.merge(z)?;
        rows.push(policy.dist(&full)?);
    }
    let first = rows
        .first()
        .ok_or_else(|| Error::Model("empty belief support".into()))?;
    for r in &rows[1..] {
        if r != first {
            return Err(Error::NotExecutable(format!(
                "policy {} varies over the belief support of the latent state",
                policy.name
            )));
        }
    }
    let _ = m;
    Ok((*first).clone())
}

struct ActionOutcome {
    reward: Prob,
    /// Successor epistemic-state index with its transition probability.
    successors: Vec<(usize, Prob)>,
}

struct Closure {
    states: Vec<EpistemicState>,
    /// Per state, per action value: `None` when undefined in this mode.
    actions: Vec<Vec<(String, Option<ActionOutcome>)>>,
    policy_rows: Vec<BTreeMap<String, Prob>>,
}

fn build_closure(
    m: &Ddn,
    policy: &Policy,
    mode: &Mode,
    initial: EpistemicState,
) -> Result<Closure> {
    let action_domain = m.graph().variable(m.action())?.domain.clone();
    let mut states = vec![initial.clone()];
    let mut index: BTreeMap<(Assignment, Distribution), usize> = BTreeMap::new();
    index.insert((initial.observation.clone(), initial.belief.clone()), 0);
    let mut actions: Vec<Vec<(String, Option<ActionOutcome>)>> = Vec::new();
    let mut policy_rows = Vec::new();
    let mut next = 0usize;
    while next < states.len() {
        if states.len() > CLOSURE_GUARD {
            return Err(Error::ClosureTooLarge(CLOSURE_GUARD));
        }
        let state = states[next].clone();
        policy_rows.push(policy_dist(m, policy, &state)?);
        let mut per_action = Vec::new();
        for a in &action_domain {
            let Some(w) = mode_weights(m, mode, &state, a)? else {
                per_action.push((a.clone(), None));
                continue;
            };
            // Expected immediate reward.
            let mut reward = Prob::zero();
            for (z, wz) in w.iter() {
                let full = state.observation.merge(z)?;
                reward += wz.clone() * reward_term(m, &full, a)?;
            }
            // Successor observation distribution.
            let mut obs_probs: BTreeMap<Assignment, Prob> = BTreeMap::new();
            for (z, wz) in w.iter() {
                let dist = next_observation_dist(m, &state.observation, z, a)?;
                for (o2, p) in dist {
                    *obs_probs.entry(o2).or_insert_with(Prob::zero) += wz.clone() * p;
                }
            }
            let mut successors = Vec::new();
            for (o2, p) in obs_probs {
                if p.is_zero() {
                    continue;
                }
                let b2 = m.belief_update(&state.belief, &state.observation, a, &o2)?;
                let key = (o2.clone(), b2.clone());
                let idx = match index.get(&key) {
                    Some(&i) => i,
                    None => {
                        let i = states.len();
                        states.push(EpistemicState {
                            observation: o2,
                            belief: b2,
                        });
                        index.insert(key, i);
                        i
                    }
                };
                successors.push((idx, p));
            }
            per_action.push((
                a.clone(),
                Some(ActionOutcome { reward, successors }),
            ));
        }
        actions.push(per_action);
        next += 1;
    }
    Ok(Closure {
        states,
        actions,
        policy_rows,
    })
}

/// Distribution over next observations for one latent state and action.
fn next_observation_dist(
    m: &Ddn,
    o: &Assignment,
    z: &Assignment,
    action_value: &str,
) -> Result<Vec<(Assignment, Prob)>> {
    let g = m.graph();
    let current = o
        .merge(z)?
        .bind(m.action().to_string(), action_value.to_string());
    // Enumerate full next states and marginalize out the latent part.
    let mut all = vec![Assignment::new()];
    for s in m.state_vars() {
        let v = g.variable(s)?;
        let primed = format!("{s}'");
        let mut grown = Vec::with_capacity(all.len() * v.domain.len());
        for a in &all {
            for val in &v.domain {
                grown.push(a.clone().bind(primed.clone(), val.clone()));
            }
        }
        all = grown;
    }
    let obs_vars: Vec<String> = o.vars().map(|s| s.to_string()).collect();
    let mut out: BTreeMap<Assignment, Prob> = BTreeMap::new();
    for nxt in all {
        let p = m.transition_prob(&current, &nxt)?;
        if p.is_zero() {
            continue;
        }
        let mut o2 = Assignment::new();
        for v in &obs_vars {
            o2.set(v.clone(), nxt.get(&format!("{v}'")).unwrap());
        }
        *out.entry(o2).or_insert_with(Prob::zero) += p;
    }
    Ok(out.into_iter().collect())
}

/// Solves a policy-weighted Bellman system over an explicit state space.
///
/// States that cannot reach nonzero expected reward get exactly V = 0; the
/// rest are solved as one exact linear system. A genuinely recurrent
/// positive reward at discount 1 surfaces as a singular system.
fn solve_values(
    n: usize,
    r_pi: &[Prob],
    m_pi: &[Vec<(usize, Prob)>],
    gamma: &Prob,
) -> Result<Vec<Prob>> {
    // Backward reachability to nonzero reward.
    let mut live: Vec<bool> = r_pi.iter().map(|r| !r.is_zero()).collect();
    loop {
        let mut changed = false;
        for s in 0..n {
            if live[s] {
                continue;
            }
            if m_pi[s].iter().any(|(t, p)| live[*t] && !p.is_zero()) {
                live[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let live_idx: Vec<usize> = (0..n).filter(|&s| live[s]).collect();
    let pos: BTreeMap<usize, usize> = live_idx.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    let k = live_idx.len();
    let mut a = vec![vec![Prob::zero(); k]; k];
    let mut b = vec![Prob::zero(); k];
    for (row, &s) in live_idx.iter().enumerate() {
        a[row][row] = Prob::one();
        b[row] = r_pi[s].clone();
        for (t, p) in &m_pi[s] {
            if let Some(&col) = pos.get(t) {
                a[row][col] = a[row][col].clone() - gamma.clone() * p.clone();
            }
        }
    }
    let solved = linalg::solve(a, b)?;
    let mut v = vec![Prob::zero(); n];
    for (i, &s) in live_idx.iter().enumerate() {
        v[s] = solved[i].clone();
    }
    Ok(v)
}

/// Evaluates a policy over the reachable epistemic closure from `initial`,
/// under the given mode's reward/transition semantics.
pub fn evaluate_epistemic(
    m: &Ddn,
    policy: &Policy,
    mode: &Mode,
    initial: &EpistemicState,
) -> Result<ValueReport> {
    let start = preprocess_initial(m, mode, initial)?;
    let closure = build_closure(m, policy, mode, start)?;
    let n = closure.states.len();
    let mut r_pi = vec![Prob::zero(); n];
    let mut m_pi: Vec<Vec<(usize, Prob)>> = vec![Vec::new(); n];
    for s in 0..n {
        let row = &closure.policy_rows[s];
        for (a, outcome) in &closure.actions[s] {
            let pa = row.get(a).cloned().unwrap_or_else(Prob::zero);
            if pa.is_zero() {
                continue;
            }
            let outcome = outcome.as_ref().ok_or(Error::ZeroEvidence)?;
            r_pi[s] += pa.clone() * outcome.reward.clone();
            for (t, p) in &outcome.successors {
                m_pi[s].push((*t, pa.clone() * p.clone()));
            }
        }
    }
    let v = solve_values(n, &r_pi, &m_pi, m.discount())?;
    let mut states = Vec::with_capacity(n);
    for s in 0..n {
        let mut q = Vec::new();
        for (a, outcome) in &closure.actions[s] {
            let value = outcome.as_ref().map(|oc| {
                let mut total = oc.reward.clone();
                for (t, p) in &oc.successors {
                    total += m.discount().clone() * p.clone() * v[*t].clone();
                }
                total
            });
            q.push((a.clone(), value));
        }
        states.push(StateValue {
            state: closure.states[s].clone(),
            v: v[s].clone(),
            q,
        });
    }
    Ok(ValueReport {
        mode: mode.tag().to_string(),
        solver: Solver::LinearSystem,
        gamma: m.discount().clone(),
        states,
    })
}

/// What-if and hindsight modes abduce the initial belief before evaluation.
fn preprocess_initial(m: &Ddn, mode: &Mode, initial: &EpistemicState) -> Result<EpistemicState> {
    match mode {
        Mode::Conditional | Mode::Interventional => Ok(initial.clone()),
        Mode::WhatIf { observed_action } => {
            let net = m.network_policy()?;
            let mut weights = Vec::new();
            for (z, bz) in initial.belief.iter() {
                let full = initial.observation.merge(z)?;
                weights.push((z.clone(), bz.clone() * net.prob(&full, observed_action)?));
            }
            let belief = Distribution::normalize(weights).map_err(|e| match e {
                Error::ZeroMass => Error::ZeroEvidence,
                other => other,
            })?;
            Ok(EpistemicState {
                observation: initial.observation.clone(),
                belief,
            })
        }
        Mode::Hindsight { outcome } => {
            let stat = m.static_model()?;
            let mut weights = Vec::new();
            for (z, bz) in initial.belief.iter() {
                let given = initial.observation.merge(z)?;
                let denom = stat.prob_event(&given)?;
                if denom.is_zero() {
                    weights.push((z.clone(), Prob::zero()));
                    continue;
                }
                let numer = stat.prob_event(&given.merge(outcome)?)?;
                weights.push((z.clone(), bz.clone() * (numer / denom)));
            }
            let belief = Distribution::normalize(weights).map_err(|e| match e {
                Error::ZeroMass => Error::ZeroEvidence,
                other => other,
            })?;
            Ok(EpistemicState {
                observation: initial.observation.clone(),
                belief,
            })
        }
    }
}

/// Fully-observed Bellman policy evaluation over reachable full states.
pub fn evaluate_mdp(m: &Ddn, policy: &Policy) -> Result<ValueReport> {
    let stat = m.static_model()?;
    let g = m.graph();
    let action_domain = g.variable(m.action())?.domain.clone();
    // All full state assignments, reachable ones first discovered from
    // positive-probability initial states.
    let mut states: Vec<Assignment> = Vec::new();
    let mut index: BTreeMap<Assignment, usize> = BTreeMap::new();
    let mut all = vec![Assignment::new()];
    for s in m.state_vars() {
        let v = g.variable(s)?;
        let mut grown = Vec::with_capacity(all.len() * v.domain.len());
        for a in &all {
            for val in &v.domain {
                grown.push(a.clone().bind(v.name.clone(), val.clone()));
            }
        }
        all = grown;
    }
    for s in &all {
        if !stat.prob_event(s)?.is_zero() {
            index.insert(s.clone(), states.len());
            states.push(s.clone());
        }
    }
    let mut next = 0usize;
    let mut actions: Vec<Vec<(String, ActionOutcome)>> = Vec::new();
    while next < states.len() {
        let state = states[next].clone();
        let mut per_action = Vec::new();
        for a in &action_domain {
            let reward = reward_term(m, &state, a)?;
            let dist = next_full_state_dist(m, &state, a)?;
            let mut successors = Vec::new();
            for (s2, p) in dist {
                let idx = match index.get(&s2) {
                    Some(&i) => i,
                    None => {
                        let i = states.len();
                        index.insert(s2.clone(), i);
                        states.push(s2);
                        i
                    }
                };
                successors.push((idx, p));
            }
            per_action.push((a.clone(), ActionOutcome { reward, successors }));
        }
        actions.push(per_action);
        next += 1;
    }
    let n = states.len();
    let mut r_pi = vec![Prob::zero(); n];
    let mut m_pi: Vec<Vec<(usize, Prob)>> = vec![Vec::new(); n];
    for s in 0..n {
        let row = policy.dist(&states[s])?;
        for (a, outcome) in &actions[s] {
            let pa = row.get(a).cloned().unwrap_or_else(Prob::zero);
            if pa.is_zero() {
                continue;
            }
            r_pi[s] += pa.clone() * outcome.reward.clone();
            for (t, p) in &outcome.successors {
                m_pi[s].push((*t, pa.clone() * p.clone()));
            }
        }
    }
    let v = solve_values(n, &r_pi, &m_pi, m.discount())?;
    let mut out = Vec::with_capacity(n);
    for s in 0..n {
        let mut q = Vec::new();
        for (a, outcome) in &actions[s] {
            let mut total = outcome.reward.clone();
            for (t, p) in &outcome.successors {
                total += m.discount().clone() * p.clone() * v[*t].clone();
            }
            q.push((a.clone(), Some(total)));
        }
        out.push(StateValue {
            state: EpistemicState {
                observation: states[s].clone(),
                belief: Distribution::point(Assignment::new()),
            },
            v: v[s].clone(),
            q,
        });
    }
    Ok(ValueReport {
        mode: "mdp".into(),
        solver: Solver::LinearSystem,
        gamma: m.discount().clone(),
        states: out,
    })
}

fn next_full_state_dist(
    m: &Ddn,
    state: &Assignment,
    action_value: &str,
) -> Result<Vec<(Assignment, Prob)>> {
    let g = m.graph();
    let current = state
        .clone()
        .bind(m.action().to_string(), action_value.to_string());
    let mut all = vec![Assignment::new()];
    for s in m.state_vars() {
        let v = g.variable(s)?;
        let primed = format!("{s}'");
        let mut grown = Vec::with_capacity(all.len() * v.domain.len());
        for a in &all {
            for val in &v.domain {
                grown.push(a.clone().bind(primed.clone(), val.clone()));
            }
        }
        all = grown;
    }
    let mut out = Vec::new();
    for nxt in all {
        let p = m.transition_prob(&current, &nxt)?;
        if p.is_zero() {
            continue;
        }
        let mut unprimed = Assignment::new();
        for s in m.state_vars() {
            unprimed.set(s.clone(), nxt.get(&format!("{s}'")).unwrap());
        }
        out.push((unprimed, p));
    }
    Ok(out)
}

/// Evaluates two modes and reports per-(state, action) exact equality of Q
/// over the states both closures share.
pub fn check_equivalence(
    m: &Ddn,
    policy: &Policy,
    left: &Mode,
    right: &Mode,
    initial: &EpistemicState,
) -> Result<EquivalenceReport> {
    let lrep = evaluate_epistemic(m, policy, left, initial)?;
    let rrep = evaluate_epistemic(m, policy, right, initial)?;
    let mut rindex: BTreeMap<(Assignment, Distribution), &StateValue> = BTreeMap::new();
    for s in &rrep.states {
        rindex.insert((s.state.observation.clone(), s.state.belief.clone()), s);
    }
    let mut entries = Vec::new();
    let mut all_equal = true;
    for ls in &lrep.states {
        let key = (ls.state.observation.clone(), ls.state.belief.clone());
        let Some(rs) = rindex.get(&key) else {
            continue;
        };
        for (a, lq) in &ls.q {
            let rq = rs.q.iter().find(|(b, _)| b == a).and_then(|(_, q)| q.clone());
            let compared = lq.is_some() && rq.is_some();
            let equal = match (lq, &rq) {
                (Some(x), Some(y)) => x == y,
                _ => true,
            };
            if compared && !equal {
                all_equal = false;
            }
            entries.push(EquivalenceEntry {
                state: ls.state.clone(),
                action: a.clone(),
                left: lq.clone(),
                right: rq,
                compared,
                equal,
            });
        }
    }
    Ok(EquivalenceReport {
        left_mode: lrep.mode,
        right_mode: rrep.mode,
        entries,
        all_equal,
    })
}
