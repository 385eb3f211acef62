//! Command-line front end for the causal decision-model engines.

use std::collections::BTreeSet;
use std::path::Path;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use crl_core::cbn::{Cbn, Query};
use crl_core::dsl::{self, Model};
use crl_core::dynamic::Ddn;
use crl_core::eval::{self, Mode};
use crl_core::fixtures;
use crl_core::scm::Scm;
use crl_core::values::{Role, Slice};
use crl_core::{Assignment, Error, Prob};

#[derive(Parser)]
#[command(name = "crl", version, about = "Exact causal decision-model engine")]
struct Cli {
    /// Append a decimal approximation with this many digits.
    #[arg(long, global = true, value_name = "N")]
    decimal: Option<u32>,

    /// Emit machine-readable JSON.
    #[arg(long, global = true)]
    json: bool,

    /// Permit action-to-state edges within a slice.
    #[arg(long = "relax-a3", global = true)]
    relax_a3: bool,

    /// Consent to answering counterfactuals on a plain network through its
    /// canonical structural conversion.
    #[arg(long = "canonical-scm", global = true)]
    canonical_scm: bool,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Structural report: acyclicity, two-slice constraints, action
    /// sufficiency, and policy executability.
    Check { model: String },
    /// Evaluate one probability query, e.g. "P(SC=1 | CG=1, do(SH=1))".
    Query { model: String, query: String },
    /// Exact policy evaluation over epistemic states.
    Eval {
        model: String,
        #[arg(long)]
        policy: String,
        /// conditional | interventional | what-if | hindsight
        #[arg(long, default_value = "conditional")]
        mode: String,
        /// Initial observation, e.g. "CG=1,PH=1". Defaults to every policy
        /// input at its last domain value.
        #[arg(long)]
        initial: Option<String>,
        /// Mode-specific observation: the observed act for what-if, the
        /// observed outcome for hindsight.
        #[arg(long)]
        observe: Option<String>,
        /// Discount override in (0, 1].
        #[arg(long)]
        gamma: Option<String>,
    },
    /// Sample trajectories under an executable policy.
    Simulate {
        model: String,
        #[arg(long)]
        policy: String,
        #[arg(long, default_value_t = 10)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Recompute every reference value against the embedded fixtures.
    Reproduce,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. } => 2,
        Error::ZeroEvidence | Error::ZeroMass => 3,
        Error::Unsupported(_) => 4,
        Error::Unsolvable(_) => 5,
        Error::NotExecutable(_) => 6,
        _ => 1,
    }
}

fn load(model: &str, relax_a3: bool) -> Result<(dsl::ModelDoc, Model), Error> {
    let text = if Path::new(model).exists() {
        std::fs::read_to_string(model)
            .map_err(|e| Error::Model(format!("cannot read {model}: {e}")))?
    } else if let Some(t) = fixtures::find(model) {
        t.to_string()
    } else {
        return Err(Error::Model(format!(
            "{model} is neither a readable file nor a known fixture"
        )));
    };
    dsl::load_model(&text, relax_a3)
}

fn parse_assignment(s: &str) -> Result<Assignment, Error> {
    let mut a = Assignment::new();
    for part in s.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        let (k, v) = part.split_once('=').ok_or_else(|| {
            Error::Model(format!("expected name=value, got `{part}`"))
        })?;
        a.set(k.trim().to_string(), v.trim());
    }
    Ok(a)
}

fn fmt_prob(p: &Prob, decimal: Option<u32>) -> String {
    match decimal {
        Some(d) => format!("{p} ({})", p.to_decimal(d)),
        None => p.to_string(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode, Error> {
    match &cli.command {
        Cmd::Check { model } => cmd_check(cli, model),
        Cmd::Query { model, query } => cmd_query(cli, model, query),
        Cmd::Eval {
            model,
            policy,
            mode,
            initial,
            observe,
            gamma,
        } => cmd_eval(
            cli,
            model,
            policy,
            mode,
            initial.as_deref(),
            observe.as_deref(),
            gamma.as_deref(),
        ),
        Cmd::Simulate {
            model,
            policy,
            steps,
            seed,
        } => cmd_simulate(cli, model, policy, *steps, *seed),
        Cmd::Reproduce => cmd_reproduce(cli),
    }
}

// ---------------------------------------------------------------------------
// check

fn action_vars(g: &crl_core::graph::CausalGraph) -> Vec<String> {
    g.variables()
        .iter()
        .filter(|v| v.role == Role::Action && v.slice == Slice::Current)
        .map(|v| v.name.clone())
        .collect()
}

fn latent_parents(g: &crl_core::graph::CausalGraph, action: &str) -> Vec<String> {
    g.parents(action)
        .into_iter()
        .filter(|p| !g.is_observed(p))
        .map(|p| p.to_string())
        .collect()
}

fn cmd_check(cli: &Cli, model: &str) -> Result<ExitCode, Error> {
    let (doc, m) = load(model, cli.relax_a3)?;
    let mut lines: Vec<String> = Vec::new();
    let mut checks = Vec::new(); // (name, pass, gating)
    lines.push(format!("model: {} ({})", doc.name, doc.kind.as_str()));
    let g = match &m {
        Model::Cbn(c) => c.graph(),
        Model::Scm(s) => s.graph(),
        Model::Ddn(d) => d.graph(),
    };
    // Construction already rejects cycles; report it as an explicit check.
    checks.push(("acyclic".to_string(), g.topo_order().is_ok(), true));
    if let Model::Ddn(_) = &m {
        let report = g.check_ddn_constraints();
        let pass = if cli.relax_a3 {
            report.pass_relaxed()
        } else {
            report.all_pass()
        };
        checks.push(("two-slice constraints".to_string(), pass, true));
    }
    for a in action_vars(g) {
        let lp = latent_parents(g, &a);
        let cbn_ok = g.is_action_sufficient_cbn(&a)?;
        let detail = if cbn_ok {
            String::new()
        } else {
            format!(" (latent parent {} of {a})", lp.join(", "))
        };
        lines.push(format!("action-sufficient (cbn): {cbn_ok}{detail}"));
        let scm_ok = g.is_action_sufficient_scm(&a)?;
        lines.push(format!("action-sufficient (scm): {scm_ok}"));
    }
    if let Model::Ddn(d) = &m {
        for p in d.policies() {
            let ok = d.is_executable_declared(p)?;
            let detail = if ok {
                String::new()
            } else {
                let latent: Vec<&String> =
                    p.vars.iter().filter(|v| !g.is_observed(v)).collect();
                format!(
                    " (depends on latent {})",
                    latent
                        .iter()
                        .map(|s| s.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            };
            lines.push(format!("policy {}: executable: {ok}{detail}", p.name));
        }
    }
    let all_gating = checks.iter().all(|(_, pass, gating)| *pass || !gating);
    if cli.json {
        let payload = json!({
            "model": doc.name,
            "kind": doc.kind.as_str(),
            "checks": checks
                .iter()
                .map(|(n, p, _)| json!({"name": n, "pass": p}))
                .collect::<Vec<_>>(),
            "report": lines,
            "pass": all_gating,
        });
        println!("{payload:#}");
    } else {
        // Model line, then gating checks, then informational details.
        println!("{}", lines[0]);
        for (n, p, _) in &checks {
            println!("{n}: {p}");
        }
        for l in lines.iter().skip(1) {
            println!("{l}");
        }
    }
    Ok(if all_gating {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

// ---------------------------------------------------------------------------
// query

fn counterfactual_model(cbn: &Cbn, consent: bool) -> Result<Scm, Error> {
    if !consent {
        return Err(Error::Unsupported(
            "counterfactual queries are structural-model dependent; pass \
             --canonical-scm to answer through the canonical conversion"
                .into(),
        ));
    }
    Scm::from_cbn(cbn)
}

fn answer_query(m: &Model, q: &Query, consent: bool) -> Result<Prob, Error> {
    match m {
        Model::Scm(s) => s.query(q),
        Model::Cbn(c) => {
            if q.potential.is_some() {
                counterfactual_model(c, consent)?.query(q)
            } else {
                c.query(q)
            }
        }
        Model::Ddn(d) => {
            if q.potential.is_some() {
                counterfactual_model(d.as_cbn(), consent)?.query(q)
            } else {
                d.as_cbn().query(q)
            }
        }
    }
}

fn cmd_query(cli: &Cli, model: &str, query: &str) -> Result<ExitCode, Error> {
    let (_, m) = load(model, cli.relax_a3)?;
    let ast = dsl::parse_query(query)?;
    let q = ast.to_query()?;
    let p = answer_query(&m, &q, cli.canonical_scm)?;
    if cli.json {
        let mut payload = json!({"query": query, "value": p.to_string()});
        if let Some(d) = cli.decimal {
            payload["decimal"] = json!(p.to_decimal(d));
        }
        println!("{payload:#}");
    } else {
        println!("{}", fmt_prob(&p, cli.decimal));
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// eval

fn parse_mode(mode: &str, action: &str, observe: Option<&str>) -> Result<Mode, Error> {
    match mode {
        "conditional" => Ok(Mode::Conditional),
        "interventional" => Ok(Mode::Interventional),
        "what-if" | "whatif" => {
            let obs = observe.ok_or_else(|| {
                Error::Model("what-if mode requires --observe with the observed act".into())
            })?;
            let a = parse_assignment(obs)?;
            let value = a
                .get(action)
                .ok_or_else(|| {
                    Error::Model(format!("what-if --observe must assign the action {action}"))
                })?
                .to_string();
            Ok(Mode::WhatIf {
                observed_action: value,
            })
        }
        "hindsight" => {
            let obs = observe.ok_or_else(|| {
                Error::Model("hindsight mode requires --observe with the observed outcome".into())
            })?;
            Ok(Mode::Hindsight {
                outcome: parse_assignment(obs)?,
            })
        }
        other => Err(Error::Model(format!(
            "unknown mode `{other}` (expected conditional, interventional, what-if, or hindsight)"
        ))),
    }
}

fn require_ddn(m: Model) -> Result<Ddn, Error> {
    match m {
        Model::Ddn(d) => Ok(d),
        _ => Err(Error::Unsupported(
            "policy evaluation and simulation require a dynamic model".into(),
        )),
    }
}

fn cmd_eval(
    cli: &Cli,
    model: &str,
    policy: &str,
    mode: &str,
    initial: Option<&str>,
    observe: Option<&str>,
    gamma: Option<&str>,
) -> Result<ExitCode, Error> {
    let (_, m) = load(model, cli.relax_a3)?;
    let mut d = require_ddn(m)?;
    if let Some(gtext) = gamma {
        let g: Prob = gtext
            .parse()
            .map_err(|_| Error::Model(format!("cannot parse gamma `{gtext}`")))?;
        d = d.with_discount(g)?;
    }
    let pol = d.policy(policy)?.clone();
    let mode = parse_mode(mode, d.action(), observe)?;
    let obs = match initial {
        Some(text) => parse_assignment(text)?,
        None => {
            // Default: every policy input observed at its last domain value
            // (the fixtures' "crucial game, healthy player" configuration).
            let mut a = Assignment::new();
            for v in &pol.vars {
                let domain = &d.graph().variable(v)?.domain;
                a.set(v.clone(), domain.last().unwrap());
            }
            a
        }
    };
    let start = eval::initial_state(&d, &obs)?;
    let report = eval::evaluate_epistemic(&d, &pol, &mode, &start)?;
    if cli.json {
        let states: Vec<_> = report
            .states
            .iter()
            .map(|s| {
                json!({
                    "observation": s.state.observation.to_string(),
                    "belief": s.state.belief.iter()
                        .map(|(z, p)| json!({"state": z.to_string(), "prob": p.to_string()}))
                        .collect::<Vec<_>>(),
                    "v": s.v.to_string(),
                    "q": s.q.iter()
                        .map(|(a, q)| json!({"action": a, "value": q.as_ref().map(|p| p.to_string())}))
                        .collect::<Vec<_>>(),
                })
            })
            .collect();
        let payload = json!({
            "mode": report.mode,
            "gamma": report.gamma.to_string(),
            "states": states,
        });
        println!("{payload:#}");
    } else {
        print!("{}", report.render(cli.decimal));
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// simulate

fn cmd_simulate(
    cli: &Cli,
    model: &str,
    policy: &str,
    steps: usize,
    seed: u64,
) -> Result<ExitCode, Error> {
    let (_, m) = load(model, cli.relax_a3)?;
    let d = require_ddn(m)?;
    let pol = d.policy(policy)?.clone();
    let trajectory = d.simulate(&pol, steps, seed)?;
    if cli.json {
        let steps: Vec<_> = trajectory
            .iter()
            .map(|s| {
                json!({
                    "t": s.t,
                    "state": s.state.to_string(),
                    "action": s.action,
                    "reward": s.reward,
                    "belief": s.belief.iter()
                        .map(|(z, p)| json!({"state": z.to_string(), "prob": p.to_string()}))
                        .collect::<Vec<_>>(),
                })
            })
            .collect();
        println!("{:#}", json!({"seed": seed, "steps": steps}));
    } else {
        for s in &trajectory {
            let state: Vec<String> = s
                .state
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            println!(
                "t={} {} {}={} {}={}",
                s.t,
                state.join(" "),
                d.action(),
                s.action,
                d.reward(),
                s.reward
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// reproduce

struct Check {
    name: &'static str,
    expected: Prob,
    computed: Result<Prob, Error>,
}

fn q(model: &Model, text: &str) -> Result<Prob, Error> {
    answer_query(model, &dsl::parse_query(text)?.to_query()?, true)
}

fn reference_checks() -> Vec<Check> {
    let mut out = Vec::new();
    let mut push = |name: &'static str, expected: Prob, computed: Result<Prob, Error>| {
        out.push(Check {
            name,
            expected,
            computed,
        })
    };
    let online_cbn = Model::Cbn(fixtures::online_cbn());
    let offline_cbn = Model::Cbn(fixtures::offline_cbn());
    let online_scm = fixtures::online_scm();
    let confounded = Model::Scm(fixtures::offline_confounded_scm());
    let unconfounded = Model::Scm(fixtures::offline_unconfounded_scm());
    let ddn = fixtures::sports_ddn();

    let full = Assignment::of(&[
        ("PH", "1"),
        ("CG", "1"),
        ("GH", "0"),
        ("SH", "1"),
        ("SC", "1"),
    ]);
    let cbn_joint = match &online_cbn {
        Model::Cbn(c) => c.joint(&full),
        _ => unreachable!(),
    };
    push("joint-cbn", Prob::ratio(1, 8), cbn_joint);
    push("joint-scm", Prob::ratio(1, 8), online_scm.joint(&full));
    let canonical = match &online_cbn {
        Model::Cbn(c) => Scm::from_cbn(c).and_then(|s| s.joint(&full)),
        _ => unreachable!(),
    };
    push("joint-canonical-scm", Prob::ratio(1, 8), canonical);

    push(
        "table2-online-conditional",
        Prob::ratio(1, 2),
        q(&online_cbn, "P(SC=1 | CG=1, PH=1, SH=1)"),
    );
    push(
        "table2-online-interventional",
        Prob::ratio(1, 2),
        q(&online_cbn, "P(SC=1 | CG=1, PH=1, do(SH=1))"),
    );
    push(
        "table2-offline-conditional",
        Prob::ratio(1, 2),
        q(&offline_cbn, "P(SC=1 | CG=1, SH=1)"),
    );
    push(
        "table2-offline-interventional",
        Prob::ratio(1, 4),
        q(&offline_cbn, "P(SC=1 | CG=1, do(SH=1))"),
    );

    push(
        "table5-confounded-conditional",
        Prob::ratio(1, 2),
        q(&confounded, "P(SC=1 | CG=1, SH=1)"),
    );
    push(
        "table5-confounded-interventional",
        Prob::ratio(1, 4),
        q(&confounded, "P(SC=1 | CG=1, do(SH=1))"),
    );
    push(
        "table5-confounded-whatif",
        Prob::zero(),
        q(&confounded, "P(SC[SH=1]=1 | CG=1, SH=0)"),
    );
    push(
        "table5-unconfounded-conditional",
        Prob::ratio(1, 2),
        q(&unconfounded, "P(SC=1 | CG=1, SH=1)"),
    );
    push(
        "table5-unconfounded-interventional",
        Prob::ratio(1, 2),
        q(&unconfounded, "P(SC=1 | CG=1, do(SH=1))"),
    );
    push(
        "table5-unconfounded-whatif",
        Prob::ratio(1, 2),
        q(&unconfounded, "P(SC[SH=1]=1 | CG=1, SH=0)"),
    );

    // Offline epistemic evaluation of the marginal policy.
    let offline_eval = |mode: Mode| -> Result<eval::ValueReport, Error> {
        let start = eval::initial_state(&ddn, &Assignment::of(&[("CG", "1")]))?;
        eval::evaluate_epistemic(&ddn, ddn.policy("marginal")?, &mode, &start)
    };
    let take = |r: &Result<eval::ValueReport, Error>, f: &dyn Fn(&eval::ValueReport) -> Option<Prob>| match r {
        Ok(rep) => f(rep).ok_or_else(|| Error::Model("value undefined".into())),
        Err(e) => Err(e.clone()),
    };
    let cond = offline_eval(Mode::Conditional);
    push(
        "offline-conditional-v",
        Prob::ratio(1, 3),
        take(&cond, &|r| Some(r.initial().v.clone())),
    );
    push(
        "offline-conditional-q-sh1",
        Prob::ratio(1, 2),
        take(&cond, &|r| r.initial().q_of("1").cloned()),
    );
    let int = offline_eval(Mode::Interventional);
    push(
        "offline-interventional-v",
        Prob::ratio(1, 6),
        take(&int, &|r| Some(r.initial().v.clone())),
    );
    push(
        "offline-interventional-q-do-sh1",
        Prob::ratio(1, 4),
        take(&int, &|r| r.initial().q_of("1").cloned()),
    );

    // Online equivalence for the behavioral policy.
    let online_eval = |mode: Mode| -> Result<eval::ValueReport, Error> {
        let start =
            eval::initial_state(&ddn, &Assignment::of(&[("CG", "1"), ("PH", "1")]))?;
        eval::evaluate_epistemic(&ddn, ddn.policy("behavioral")?, &mode, &start)
    };
    push(
        "online-conditional-q-sh1",
        Prob::ratio(1, 2),
        take(&online_eval(Mode::Conditional), &|r| {
            r.initial().q_of("1").cloned()
        }),
    );
    push(
        "online-interventional-q-do-sh1",
        Prob::ratio(1, 2),
        take(&online_eval(Mode::Interventional), &|r| {
            r.initial().q_of("1").cloned()
        }),
    );

    // Hindsight reward probabilities.
    push(
        "hindsight-reward",
        Prob::one(),
        q(
            &Model::Scm(online_scm.clone()),
            "P(SC[SH=1]=1 | CG=1, PH=1, SH=1, SC=1)",
        ),
    );
    let two_slice = ddn
        .policy("behavioral")
        .and_then(|p| ddn.unroll(2, p))
        .and_then(|flat| Scm::from_cbn(&flat))
        .and_then(|scm| {
            q(
                &Model::Scm(scm),
                "P(SC[SH=1]=1 | CG=1, PH=1, do(SH=0), SC'=1)",
            )
        });
    push("hindsight-two-slice", Prob::one(), two_slice);
    push(
        "hindsight-q-do-sh0",
        Prob::ratio(1, 2),
        take(
            &online_eval(Mode::Hindsight {
                outcome: Assignment::of(&[("SC", "1")]),
            }),
            &|r| r.initial().q_of("0").cloned(),
        ),
    );

    // Backdoor adjustment on the confounded offline network.
    let backdoor = fixtures::offline_cbn().backdoor_adjust(
        &Assignment::of(&[("SH", "1")]),
        &Assignment::of(&[("SC", "1")]),
        &Assignment::of(&[("CG", "1")]),
        &BTreeSet::from(["PH".to_string()]),
    );
    push("backdoor-adjustment", Prob::ratio(1, 4), backdoor);

    // Marginal policy derivation from the behavioral policy.
    let marginal = ddn
        .policy("behavioral")
        .and_then(|p| ddn.marginal_policy(p, &["CG".to_string()]));
    let mprob = |cg: &str, sh: &str| match &marginal {
        Ok(p) => p.prob(&Assignment::of(&[("CG", cg)]), sh),
        Err(e) => Err(e.clone()),
    };
    push("marginal-policy-sh1-cg1", Prob::ratio(1, 2), mprob("1", "1"));
    push("marginal-policy-sh1-cg0", Prob::zero(), mprob("0", "1"));

    out
}

fn cmd_reproduce(cli: &Cli) -> Result<ExitCode, Error> {
    let checks = reference_checks();
    let mut failures = 0usize;
    if cli.json {
        let entries: Vec<_> = checks
            .iter()
            .map(|c| {
                let (computed, pass) = match &c.computed {
                    Ok(p) => (p.to_string(), *p == c.expected),
                    Err(e) => (format!("error: {e}"), false),
                };
                if !pass {
                    failures += 1;
                }
                json!({
                    "name": c.name,
                    "expected": c.expected.to_string(),
                    "computed": computed,
                    "pass": pass,
                })
            })
            .collect();
        let payload = json!({
            "total": checks.len(),
            "failures": failures,
            "pass": failures == 0,
            "checks": entries,
        });
        println!("{payload:#}");
    } else {
        for c in &checks {
            match &c.computed {
                Ok(p) if *p == c.expected => {
                    println!("ok    {}: expected {}, computed {p}", c.name, c.expected);
                }
                Ok(p) => {
                    failures += 1;
                    println!("FAIL  {}: expected {}, computed {p}", c.name, c.expected);
                }
                Err(e) => {
                    failures += 1;
                    println!("FAIL  {}: expected {}, error: {e}", c.name, c.expected);
                }
            }
        }
        println!(
            "reproduce: {}/{} exact matches",
            checks.len() - failures,
            checks.len()
        );
    }
    Ok(if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
