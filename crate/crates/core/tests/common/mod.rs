//! Shared randomized-model generators and brute-force oracles for the
//! integration suites.

// Not every test target uses every helper.
#![allow(dead_code)]

pub mod suites;

use std::collections::{BTreeMap, BTreeSet};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crl_core::cbn::{Cbn, Cpt};
use crl_core::dynamic::{Ddn, Policy, PolicyKind};
use crl_core::graph::CausalGraph;
use crl_core::values::{Role, Slice, Variable};
use crl_core::{Assignment, Prob};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A random probability k/denom, k in 0..=denom.
pub fn rational(rng: &mut ChaCha8Rng, denom: i64) -> Prob {
    Prob::ratio(rng.gen_range(0..=denom), denom)
}

/// A random probability strictly inside (0, 1).
pub fn inner_rational(rng: &mut ChaCha8Rng, denom: i64) -> Prob {
    Prob::ratio(rng.gen_range(1..denom), denom)
}

fn binary_row(p_one: Prob) -> BTreeMap<String, Prob> {
    let mut row = BTreeMap::new();
    row.insert("0".to_string(), Prob::one() - p_one.clone());
    row.insert("1".to_string(), p_one);
    row
}

/// All assignments over the named binary parents, in a fixed order.
fn parent_configs(parents: &[String]) -> Vec<Assignment> {
    let mut out = vec![Assignment::new()];
    for p in parents {
        let mut next = Vec::with_capacity(out.len() * 2);
        for a in &out {
            for v in ["0", "1"] {
                next.push(a.clone().bind(p.clone(), v.to_string()));
            }
        }
        out = next;
    }
    out
}

fn random_cpt(rng: &mut ChaCha8Rng, child: &str, parents: &[String], denom: i64) -> Cpt {
    let mut table = BTreeMap::new();
    for cfg in parent_configs(parents) {
        table.insert(cfg, binary_row(rational(rng, denom)));
    }
    Cpt {
        child: child.to_string(),
        parents: parents.to_vec(),
        table,
    }
}

/// A random binary CBN with states, one action `A`, and one reward `Y`.
pub struct CbnSpec {
    pub model: Cbn,
    pub states: Vec<String>,
    pub action_parents: Vec<String>,
}

pub const ACTION: &str = "A";
pub const REWARD: &str = "Y";

/// Generates a random CBN. `sufficient` keeps every parent of the action
/// observed; `confounded` forces a latent common cause of action and reward.
pub fn random_cbn(
    rng: &mut ChaCha8Rng,
    max_states: usize,
    sufficient: bool,
    confounded: bool,
) -> CbnSpec {
    assert!(!(sufficient && confounded));
    let k = rng.gen_range(1..=max_states);
    let states: Vec<String> = (1..=k).map(|i| format!("S{i}")).collect();
    let mut edges: Vec<(String, String)> = Vec::new();
    // A sparse DAG over the states in index order, at most two parents each.
    for j in 1..k {
        let mut parents = 0;
        for i in 0..j {
            if parents < 2 && rng.gen_bool(1.0 / 3.0) {
                edges.push((states[i].clone(), states[j].clone()));
                parents += 1;
            }
        }
    }
    let confounder = confounded.then(|| states.choose(rng).unwrap().clone());
    let mut action_parents: Vec<String> = states
        .iter()
        .filter(|_| rng.gen_bool(0.5))
        .take(2)
        .cloned()
        .collect();
    if let Some(c) = &confounder {
        if !action_parents.contains(c) {
            action_parents.insert(0, c.clone());
            action_parents.truncate(2);
        }
    }
    let mut reward_parents: Vec<String> = states
        .iter()
        .filter(|_| rng.gen_bool(0.5))
        .take(1)
        .cloned()
        .collect();
    if let Some(c) = &confounder {
        if !reward_parents.contains(c) {
            reward_parents.insert(0, c.clone());
            reward_parents.truncate(1);
        }
    }
    for p in &action_parents {
        edges.push((p.clone(), ACTION.to_string()));
    }
    for p in &reward_parents {
        edges.push((p.clone(), REWARD.to_string()));
    }
    edges.push((ACTION.to_string(), REWARD.to_string()));

    let mut observed: Vec<String> = vec![ACTION.to_string(), REWARD.to_string()];
    for s in &states {
        let latent = match (&confounder, sufficient) {
            (Some(c), _) => s == c,
            (None, true) => !action_parents.contains(s) && rng.gen_bool(0.3),
            (None, false) => rng.gen_bool(0.3),
        };
        if !latent {
            observed.push(s.clone());
        }
    }

    let mut vars: Vec<Variable> = states
        .iter()
        .map(|s| Variable::new(s.clone(), &["0", "1"]))
        .collect();
    vars.push(Variable::new(ACTION, &["0", "1"]).with_role(Role::Action));
    vars.push(Variable::new(REWARD, &["0", "1"]).with_role(Role::Reward));

    let graph = CausalGraph::new(vars, edges, observed).unwrap();
    let mut cpts = Vec::new();
    for v in ["A", "Y"]
        .iter()
        .map(|s| s.to_string())
        .chain(states.iter().cloned())
    {
        let parents: Vec<String> = graph.parents(&v).iter().map(|p| p.to_string()).collect();
        // Keep action and reward mechanisms away from 0/1 rows when
        // confounding matters, so divergences stay visible.
        let denom = 4;
        let cpt = if (v == ACTION || v == REWARD) && confounded {
            let mut table = BTreeMap::new();
            for cfg in parent_configs(&parents) {
                table.insert(cfg, binary_row(inner_rational(rng, denom)));
            }
            Cpt {
                child: v.clone(),
                parents,
                table,
            }
        } else {
            random_cpt(rng, &v, &parents, denom)
        };
        cpts.push(cpt);
    }
    let model = Cbn::new(graph, cpts).unwrap();
    CbnSpec {
        model,
        states,
        action_parents,
    }
}

/// Draws a full assignment with positive joint probability.
pub fn positive_full_assignment(rng: &mut ChaCha8Rng, m: &Cbn) -> Assignment {
    let all: Vec<Assignment> = m
        .assignments_consistent_with(&Assignment::new())
        .unwrap()
        .into_iter()
        .filter(|a| !m.joint(a).unwrap().is_zero())
        .collect();
    all.choose(rng).unwrap().clone()
}

// ---------------------------------------------------------------------------
// Random two-slice models

pub struct DdnSpec {
    pub model: Ddn,
    pub observed_states: Vec<String>,
    pub initial: Assignment,
}

/// Generates a random two-slice model whose latent states persist and whose
/// observed-state transitions depend only on observed state and action, so
/// the epistemic closure stays finite. `sufficient` keeps the action's
/// parents observed; otherwise a latent state confounds action and reward.
pub fn random_ddn(rng: &mut ChaCha8Rng, max_states: usize, sufficient: bool) -> DdnSpec {
    let k = rng.gen_range(1..=max_states);
    let states: Vec<String> = (1..=k).map(|i| format!("S{i}")).collect();
    // At least one latent confounder when insufficient; otherwise a random
    // latent subset.
    let mut latent: BTreeSet<String> = states
        .iter()
        .filter(|_| rng.gen_bool(0.4))
        .cloned()
        .collect();
    if !sufficient && latent.is_empty() {
        latent.insert(states.choose(rng).unwrap().clone());
    }
    if sufficient {
        // nothing extra: action parents are drawn from observed states below
    }
    let observed: Vec<String> = states
        .iter()
        .filter(|s| !latent.contains(*s))
        .cloned()
        .collect();

    let action_parents: Vec<String> = if sufficient {
        observed
            .iter()
            .filter(|_| rng.gen_bool(0.6))
            .take(2)
            .cloned()
            .collect()
    } else {
        let c = latent.iter().choose(rng).unwrap().clone();
        let mut ps = vec![c];
        if let Some(o) = observed.first() {
            if rng.gen_bool(0.5) {
                ps.push(o.clone());
            }
        }
        ps
    };
    let mut reward_parents: Vec<String> = Vec::new();
    if !sufficient {
        // The confounder must also drive the reward.
        reward_parents.push(action_parents[0].clone());
    }
    for s in &states {
        if reward_parents.len() < 2 && !reward_parents.contains(s) && rng.gen_bool(0.4) {
            reward_parents.push(s.clone());
        }
    }

    let mut vars: Vec<Variable> = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut obs_decl: Vec<String> = Vec::new();
    for s in &states {
        vars.push(Variable::new(s.clone(), &["0", "1"]));
        vars.push(
            Variable::new(format!("{s}'"), &["0", "1"]).with_slice(Slice::Next),
        );
        if !latent.contains(s) {
            obs_decl.push(s.clone());
            obs_decl.push(format!("{s}'"));
        }
    }
    vars.push(Variable::new(ACTION, &["0", "1"]).with_role(Role::Action));
    vars.push(Variable::new(REWARD, &["0", "1"]).with_role(Role::Reward));
    obs_decl.push(ACTION.to_string());
    obs_decl.push(REWARD.to_string());

    for p in &action_parents {
        edges.push((p.clone(), ACTION.to_string()));
    }
    for p in &reward_parents {
        edges.push((p.clone(), REWARD.to_string()));
    }
    edges.push((ACTION.to_string(), REWARD.to_string()));
    // Transitions.
    let mut transition_parents: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for s in &states {
        let primed = format!("{s}'");
        let ps = if latent.contains(s) {
            vec![s.clone()]
        } else {
            let mut ps = vec![s.clone(), ACTION.to_string()];
            for o in &observed {
                if o != s && ps.len() < 3 && rng.gen_bool(0.3) {
                    ps.push(o.clone());
                }
            }
            ps
        };
        for p in &ps {
            edges.push((p.clone(), primed.clone()));
        }
        transition_parents.insert(primed, ps);
    }

    let graph = CausalGraph::new(vars, edges, obs_decl).unwrap();
    let mut cpts = Vec::new();
    for s in &states {
        cpts.push(random_cpt(rng, s, &state_parents(&graph, s), 4));
        let primed = format!("{s}'");
        let parents = transition_parents[&primed].clone();
        if latent.contains(s) {
            // Persistence: the latent feature carries over unchanged.
            let mut table = BTreeMap::new();
            for v in ["0", "1"] {
                let cfg = Assignment::new().bind(s.clone(), v.to_string());
                table.insert(cfg, binary_row(if v == "1" { Prob::one() } else { Prob::zero() }));
            }
            cpts.push(Cpt {
                child: primed,
                parents,
                table,
            });
        } else {
            cpts.push(random_cpt(rng, &primed, &parents, 4));
        }
    }
    // Action and reward rows stay strictly inside (0, 1) so conditional
    // weights and what-if abduction never hit zero mass.
    for v in [ACTION, REWARD] {
        let parents: Vec<String> = graph.parents(v).iter().map(|p| p.to_string()).collect();
        let mut table = BTreeMap::new();
        for cfg in parent_configs(&parents) {
            table.insert(cfg, binary_row(inner_rational(rng, 4)));
        }
        cpts.push(Cpt {
            child: v.to_string(),
            parents,
            table,
        });
    }
    let cbn = Cbn::new(graph, cpts).unwrap();

    // An observation-level policy with full support.
    let mut rows = BTreeMap::new();
    for cfg in parent_configs(&observed) {
        rows.insert(cfg, binary_row(inner_rational(rng, 4)));
    }
    let policy = Policy {
        name: "target".into(),
        action: ACTION.to_string(),
        vars: observed.clone(),
        rows,
        kind: PolicyKind::Observation,
    };
    let model = Ddn::new(cbn, vec![policy], Prob::ratio(1, 2), false).unwrap();

    let stat = model.static_model().unwrap();
    let obs_refs: Vec<&str> = observed.iter().map(|s| s.as_str()).collect();
    let initial = if obs_refs.is_empty() {
        Assignment::new()
    } else {
        let dist = stat.conditional_dist(&obs_refs, &Assignment::new()).unwrap();
        let choices: Vec<Assignment> = dist.iter().map(|(a, _)| a.clone()).collect();
        choices.choose(rng).unwrap().clone()
    };
    DdnSpec {
        model,
        observed_states: observed,
        initial,
    }
}

fn state_parents(graph: &CausalGraph, s: &str) -> Vec<String> {
    graph.parents(s).iter().map(|p| p.to_string()).collect()
}

// ---------------------------------------------------------------------------
// d-separation oracle by path enumeration

/// Brute-force d-separation: enumerate every simple undirected path and test
/// it for activity under the conditioning set.
pub fn dsep_oracle(
    g: &CausalGraph,
    x: &BTreeSet<String>,
    y: &BTreeSet<String>,
    z: &BTreeSet<String>,
) -> bool {
    let mut anc_z: BTreeSet<String> = z.clone();
    for v in z {
        for a in ancestors(g, v) {
            anc_z.insert(a);
        }
    }
    for s in x {
        for t in y {
            let mut path = vec![s.clone()];
            if any_active_path(g, s, t, z, &anc_z, &mut path, None) {
                return false;
            }
        }
    }
    true
}

fn ancestors(g: &CausalGraph, v: &str) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack: Vec<String> = g.parents(v).iter().map(|p| p.to_string()).collect();
    while let Some(p) = stack.pop() {
        if out.insert(p.clone()) {
            stack.extend(g.parents(&p).iter().map(|q| q.to_string()));
        }
    }
    out
}

/// Depth-first search over simple paths; `into_prev` records whether the
/// last edge pointed into the current node.
fn any_active_path(
    g: &CausalGraph,
    current: &str,
    target: &str,
    z: &BTreeSet<String>,
    anc_z: &BTreeSet<String>,
    path: &mut Vec<String>,
    into_prev: Option<bool>,
) -> bool {
    if current == target {
        return true;
    }
    let neighbors: Vec<(String, bool)> = g
        .children(current)
        .iter()
        .map(|c| (c.to_string(), false))
        .chain(g.parents(current).iter().map(|p| (p.to_string(), true)))
        .collect();
    for (next, into_current_reversed) in neighbors {
        if path.contains(&next) {
            continue;
        }
        // Edge current→next (reversed=false) leaves current; next→current
        // (reversed=true) enters... seen from `current`, the edge to `next`
        // points into `current` iff reversed.
        let edge_into_current = into_current_reversed;
        if let Some(prev_into) = into_prev {
            let collider = prev_into && edge_into_current;
            let open = if collider {
                anc_z.contains(current)
            } else {
                !z.contains(current)
            };
            if !open {
                continue;
            }
        }
        path.push(next.clone());
        let into_next = !edge_into_current;
        if any_active_path(g, &next, target, z, anc_z, path, Some(into_next)) {
            return true;
        }
        path.pop();
    }
    false
}

/// A random DAG over `n` nodes for d-separation testing.
pub fn random_dag(rng: &mut ChaCha8Rng, n: usize) -> CausalGraph {
    let names: Vec<String> = (0..n).map(|i| format!("N{i}")).collect();
    let vars: Vec<Variable> = names
        .iter()
        .map(|n| Variable::new(n.clone(), &["0", "1"]))
        .collect();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.gen_bool(0.4) {
                edges.push((names[i].clone(), names[j].clone()));
            }
        }
    }
    CausalGraph::new(vars, edges, vec![]).unwrap()
}

// ---------------------------------------------------------------------------
// Random DSL documents

/// Random model text exercising priors, tables, wildcards, and equations.
pub fn random_model_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(2..=5);
    let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
    let domains: Vec<Vec<String>> = (0..n)
        .map(|_| {
            if rng.gen_bool(0.3) {
                vec!["a".into(), "b".into(), "c".into()]
            } else {
                vec!["0".into(), "1".into()]
            }
        })
        .collect();
    let mut parents: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 1..n {
        for i in 0..j {
            if parents[j].len() < 2 && rng.gen_bool(1.0 / 3.0) {
                parents[j].push(i);
            }
        }
    }
    let mut text = String::from("model cbn \"fuzz\"\n");
    for (i, name) in names.iter().enumerate() {
        let latent = if rng.gen_bool(0.25) { " latent" } else { "" };
        text.push_str(&format!(
            "var {name} {{{}}}{latent} role=state\n",
            domains[i].join(",")
        ));
    }
    for (j, ps) in parents.iter().enumerate() {
        for &i in ps {
            text.push_str(&format!("edge {} -> {}\n", names[i], names[j]));
        }
    }
    for (j, name) in names.iter().enumerate() {
        let dist = |rng: &mut ChaCha8Rng| -> Vec<String> {
            random_distribution(rng, domains[j].len())
        };
        if parents[j].is_empty() {
            text.push_str(&format!("prior {name} : {}\n", dist(rng).join(" ")));
        } else {
            let pnames: Vec<&str> = parents[j].iter().map(|&i| names[i].as_str()).collect();
            text.push_str(&format!("cpt {name} | {} :\n", pnames.join(" ")));
            let configs = {
                let mut out: Vec<Vec<String>> = vec![Vec::new()];
                for &i in &parents[j] {
                    let mut next = Vec::new();
                    for c in &out {
                        for v in &domains[i] {
                            let mut c = c.clone();
                            c.push(v.clone());
                            next.push(c);
                        }
                    }
                    out = next;
                }
                out
            };
            let wildcard = rng.gen_bool(0.3) && configs.len() > 1;
            let explicit = if wildcard {
                rng.gen_range(0..configs.len())
            } else {
                configs.len()
            };
            for cfg in &configs[..explicit] {
                text.push_str(&format!("  {} : {}\n", cfg.join(" "), dist(rng).join(" ")));
            }
            if wildcard {
                text.push_str(&format!("  * : {}\n", dist(rng).join(" ")));
            }
        }
    }
    text
}

/// A random exact distribution over `len` values, as probability strings.
fn random_distribution(rng: &mut ChaCha8Rng, len: usize) -> Vec<String> {
    let denom = 8i64;
    let mut cuts: Vec<i64> = (0..len - 1).map(|_| rng.gen_range(0..=denom)).collect();
    cuts.sort_unstable();
    cuts.insert(0, 0);
    cuts.push(denom);
    cuts.windows(2)
        .map(|w| Prob::ratio(w[1] - w[0], denom).to_string())
        .collect()
}
