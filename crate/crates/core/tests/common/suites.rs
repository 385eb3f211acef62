//! Reusable randomized suites shared by the property and acceptance
//! targets.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crl_core::cbn::{Cbn, Potential, Query};
use crl_core::eval::{self, Mode};
use crl_core::scm::Scm;
use crl_core::{Assignment, Error};

use super::*;

/// Evidence for the hierarchy lemmas: the action's parents plus a random
/// slice of other variables, drawn from a positive-probability world.
fn lemma_evidence(
    rng: &mut ChaCha8Rng,
    m: &Cbn,
    extra_pool: &[String],
    required: &[String],
) -> Assignment {
    let full = positive_full_assignment(rng, m);
    let mut keep: Vec<&str> = required.iter().map(|s| s.as_str()).collect();
    for v in extra_pool {
        if !keep.contains(&v.as_str()) && rng.gen_bool(0.4) {
            keep.push(v);
        }
    }
    full.restrict(keep.into_iter())
}

fn action_value_with_mass(m: &Cbn, x: &Assignment) -> Option<String> {
    for v in ["0", "1"] {
        let with = x.clone().bind(ACTION.to_string(), v.to_string());
        if !m.prob_event(&with).unwrap().is_zero() {
            return Some(v.to_string());
        }
    }
    None
}

/// Lemma 1 executable form: with evidence covering the action's parents,
/// intervening and conditioning on the action agree exactly.
pub fn run_lemma1(seed: u64, count: usize) {
    let mut r = rng(seed);
    let mut done = 0;
    while done < count {
        let spec = random_cbn(&mut r, 4, false, false);
        let m = &spec.model;
        let pool: Vec<String> = spec.states.clone();
        let x = lemma_evidence(&mut r, m, &pool, &spec.action_parents);
        let Some(a_hat) = action_value_with_mass(m, &x) else {
            continue;
        };
        let target = Assignment::of(&[(REWARD, "1")]);
        let int = m
            .interventional(&Query::interventional(
                target.clone(),
                x.clone(),
                Assignment::of(&[(ACTION, &a_hat)]),
            ))
            .unwrap();
        let cond = m
            .conditional(&Query::conditional(
                target,
                x.clone().bind(ACTION.to_string(), a_hat.clone()),
            ))
            .unwrap();
        assert_eq!(int, cond, "lemma 1 violated (seed {seed}, model {done})");
        done += 1;
    }
}

/// Lemma 2 executable form: on action-sufficient models, full observed
/// evidence makes conditional and interventional agree.
pub fn run_lemma2(seed: u64, count: usize) {
    let mut r = rng(seed);
    let mut done = 0;
    while done < count {
        let spec = random_cbn(&mut r, 4, true, false);
        let m = &spec.model;
        assert!(m.graph().is_action_sufficient_cbn(ACTION).unwrap());
        let observed: Vec<String> = m
            .graph()
            .observed()
            .filter(|v| *v != ACTION && *v != REWARD)
            .map(|v| v.to_string())
            .collect();
        let full = positive_full_assignment(&mut r, m);
        let x = full.restrict(observed.iter().map(|s| s.as_str()));
        let Some(a_hat) = action_value_with_mass(m, &x) else {
            continue;
        };
        let target = Assignment::of(&[(REWARD, "1")]);
        let int = m
            .interventional(&Query::interventional(
                target.clone(),
                x.clone(),
                Assignment::of(&[(ACTION, &a_hat)]),
            ))
            .unwrap();
        let cond = m
            .conditional(&Query::conditional(
                target,
                x.clone().bind(ACTION.to_string(), a_hat.clone()),
            ))
            .unwrap();
        assert_eq!(int, cond, "lemma 2 violated (seed {seed}, model {done})");
        done += 1;
    }
}

/// Lemmas 3 and 4 executable form: in the canonical SCM, with evidence
/// covering the action's non-noise parents and free of its descendants, the
/// what-if counterfactual, the interventional, and the conditional coincide.
pub fn run_lemma34(seed: u64, count: usize, sufficient: bool) {
    let mut r = rng(seed);
    let mut done = 0;
    while done < count {
        let spec = random_cbn(&mut r, 2, sufficient, false);
        let m = &spec.model;
        let scm = Scm::from_cbn(m).unwrap();
        let desc = m.graph().descendants(ACTION);
        let pool: Vec<String> = spec
            .states
            .iter()
            .filter(|s| !desc.contains(*s))
            .cloned()
            .collect();
        let x = lemma_evidence(&mut r, m, &pool, &spec.action_parents);
        let Some(a_obs) = action_value_with_mass(m, &x) else {
            continue;
        };
        let a_hat = if r.gen_bool(0.5) { "0" } else { "1" }.to_string();
        if m
            .prob_event(&x.clone().bind(ACTION.to_string(), a_hat.clone()))
            .unwrap()
            .is_zero()
        {
            continue; // the conditional arm would be undefined
        }
        let target = Assignment::of(&[(REWARD, "1")]);
        let cf = scm
            .counterfactual(&Query {
                targets: Assignment::new(),
                evidence: x.clone().bind(ACTION.to_string(), a_obs.clone()),
                interventions: Assignment::new(),
                potential: Some(Potential {
                    targets: target.clone(),
                    interventions: Assignment::of(&[(ACTION, &a_hat)]),
                }),
            })
            .unwrap();
        let int = scm
            .interventional(&Query::interventional(
                target.clone(),
                x.clone(),
                Assignment::of(&[(ACTION, &a_hat)]),
            ))
            .unwrap();
        let cond = scm
            .conditional(&Query::conditional(
                target,
                x.clone().bind(ACTION.to_string(), a_hat.clone()),
            ))
            .unwrap();
        assert_eq!(cf, int, "lemma 3/4 cf≠int (seed {seed}, model {done})");
        assert_eq!(int, cond, "lemma 3/4 int≠cond (seed {seed}, model {done})");
        done += 1;
    }
}

/// Props 1–4 executable form: on action-sufficient dynamic models the
/// conditional, interventional, and what-if Q-functions agree everywhere.
pub fn run_props(seed: u64, count: usize) {
    let mut r = rng(seed);
    for i in 0..count {
        let spec = random_ddn(&mut r, 3, true);
        let m = &spec.model;
        let policy = m.policy("target").unwrap();
        let initial = eval::initial_state(m, &spec.initial).unwrap();
        let ci = eval::check_equivalence(
            m,
            policy,
            &Mode::Conditional,
            &Mode::Interventional,
            &initial,
        )
        .unwrap();
        assert!(ci.all_equal, "props: cond≠int (seed {seed}, model {i})");
        for a in ["0", "1"] {
            let cw = eval::check_equivalence(
                m,
                policy,
                &Mode::Conditional,
                &Mode::WhatIf {
                    observed_action: a.to_string(),
                },
                &initial,
            )
            .unwrap();
            assert!(
                cw.all_equal,
                "props: cond≠what-if({a}) (seed {seed}, model {i})"
            );
        }
    }
}

/// Sanity that the equalities are non-vacuous: confounded generators must
/// produce strict inequalities.
pub fn run_confounded_inequality(seed: u64, count: usize) -> (usize, usize) {
    let mut r = rng(seed);
    let mut cbn_diffs = 0;
    for _ in 0..count {
        let spec = random_cbn(&mut r, 3, false, true);
        let m = &spec.model;
        let x = Assignment::new();
        let target = Assignment::of(&[(REWARD, "1")]);
        let a_hat = Assignment::of(&[(ACTION, "1")]);
        let int = m
            .interventional(&Query::interventional(target.clone(), x.clone(), a_hat))
            .unwrap();
        let cond = m.conditional(&Query::conditional(
            target,
            Assignment::of(&[(ACTION, "1")]),
        ));
        match cond {
            Ok(c) => {
                if c != int {
                    cbn_diffs += 1;
                }
            }
            Err(Error::ZeroEvidence) => {}
            Err(e) => panic!("{e}"),
        }
    }
    let mut ddn_diffs = 0;
    for _ in 0..count {
        let spec = random_ddn(&mut r, 3, false);
        let m = &spec.model;
        let policy = m.policy("target").unwrap();
        let initial = eval::initial_state(m, &spec.initial).unwrap();
        let report = eval::check_equivalence(
            m,
            policy,
            &Mode::Conditional,
            &Mode::Interventional,
            &initial,
        )
        .unwrap();
        if !report.all_equal {
            ddn_diffs += 1;
        }
    }
    (cbn_diffs, ddn_diffs)
}

