//! The `.crl` model-description language, the expression language for
//! structural equations, and the query language.
//!
//! The grammar is line-oriented. Sections: `model`, `var`, `edge`, `cpt`
//! (with indented rows), `eqn`, `prior`, `policy` (with indented rows),
//! `discount`. Comments start with `#`. Rationals are written `p/q` or as
//! integers. Wildcard (`*`) CPT and policy rows expand to the uncovered
//! parent configurations at parse time, so a parsed document never contains
//! wildcards and `parse(print(doc)) == doc`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use crate::cbn::{Cbn, Cpt, Potential, Query};
use crate::dynamic::{Ddn, Policy, PolicyKind};
use crate::graph::CausalGraph;
use crate::scm::{LocalFn, Scm};
use crate::values::{Assignment, Prob, Role, Slice, Variable};
use crate::{Error, Result};

// ---------------------------------------------------------------------------
// Document model

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Cbn,
    Scm,
    Ddn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cbn => "cbn",
            ModelKind::Scm => "scm",
            ModelKind::Ddn => "ddn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarDecl {
    pub name: String,
    pub domain: Vec<String>,
    pub latent: bool,
    pub role: Role,
    pub next_slice: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CptDecl {
    pub child: String,
    pub parents: Vec<String>,
    /// Parent-value tuples (in header order) to child-value probabilities
    /// (in child domain order). Wildcards are already expanded.
    pub rows: Vec<(Vec<String>, Vec<Prob>)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EqnDecl {
    pub child: String,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDecl {
    pub name: String,
    pub vars: Vec<String>,
    /// Variable-value tuples to action-value probabilities (action domain
    /// order).
    pub rows: Vec<(Vec<String>, Vec<Prob>)>,
}

/// A parsed `.crl` document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDoc {
    pub kind: ModelKind,
    pub name: String,
    pub vars: Vec<VarDecl>,
    pub edges: Vec<(String, String)>,
    pub cpts: Vec<CptDecl>,
    pub eqns: Vec<EqnDecl>,
    pub priors: Vec<(String, Vec<Prob>)>,
    pub policies: Vec<PolicyDecl>,
    pub discount: Option<Prob>,
}

/// Arithmetic over rationals and parent references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Expr {
    Num(Prob),
    Var(String),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn eval(&self, env: &BTreeMap<String, Prob>) -> Result<Prob> {
        match self {
            Expr::Num(p) => Ok(p.clone()),
            Expr::Var(name) => env
                .get(name)
                .cloned()
                .ok_or_else(|| Error::UnknownVariable(name.clone())),
            Expr::Add(a, b) => Ok(a.eval(env)? + b.eval(env)?),
            Expr::Sub(a, b) => Ok(a.eval(env)? - b.eval(env)?),
            Expr::Mul(a, b) => Ok(a.eval(env)? * b.eval(env)?),
        }
    }

    pub fn references(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(name) => {
                out.insert(name.clone());
            }
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) => {
                a.references(out);
                b.references(out);
            }
        }
    }

    fn print(&self) -> String {
        match self {
            Expr::Num(p) => p.to_string(),
            Expr::Var(n) => n.clone(),
            Expr::Add(a, b) => format!("{} + {}", a.print(), paren_if_sum(b)),
            Expr::Sub(a, b) => format!("{} - {}", a.print(), paren_if_sum(b)),
            Expr::Mul(a, b) => format!("{} * {}", paren_if_sum(a), paren_if_sum(b)),
        }
    }
}

fn paren_if_sum(e: &Expr) -> String {
    match e {
        Expr::Add(..) | Expr::Sub(..) => format!("({})", e.print()),
        _ => e.print(),
    }
}

// ---------------------------------------------------------------------------
// Tokenizer

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Atom(String),
    LBrace,
    RBrace,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Pipe,
    Colon,
    Comma,
    Arrow,
    Equals,
    Star,
    Plus,
    Minus,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Atom(a) => format!("`{a}`"),
            Tok::LBrace => "`{`".into(),
            Tok::RBrace => "`}`".into(),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::LBracket => "`[`".into(),
            Tok::RBracket => "`]`".into(),
            Tok::Pipe => "`|`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Arrow => "`->`".into(),
            Tok::Equals => "`=`".into(),
            Tok::Star => "`*`".into(),
            Tok::Plus => "`+`".into(),
            Tok::Minus => "`-`".into(),
        }
    }
}

fn is_atom_char(c: char) -> bool {
    c.is_alphanumeric() || matches!(c, '_' | '\'' | '.' | '/')
}

fn tokenize(line: &str, lineno: usize) -> Result<Vec<(Tok, usize)>> {
    let mut out = Vec::new();
    let chars: Vec<char> = line.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = i + 1;
        if c == '#' {
            break;
        }
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let tok = match c {
            // Quoted strings only appear as the model name, which the model
            // handler reads back from the raw line; skip them here.
            '"' => {
                let mut j = i + 1;
                while j < chars.len() && chars[j] != '"' {
                    j += 1;
                }
                if j == chars.len() {
                    return Err(Error::Parse {
                        line: lineno,
                        column: col,
                        message: "unterminated string".into(),
                    });
                }
                i = j + 1;
                continue;
            }
            '{' => Tok::LBrace,
            '}' => Tok::RBrace,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            '[' => Tok::LBracket,
            ']' => Tok::RBracket,
            '|' => Tok::Pipe,
            ':' => Tok::Colon,
            ',' => Tok::Comma,
            '=' => Tok::Equals,
            '*' => Tok::Star,
            '+' => Tok::Plus,
            '-' => {
                if chars.get(i + 1) == Some(&'>') {
                    i += 1;
                    Tok::Arrow
                } else if chars.get(i + 1).map_or(false, |d| d.is_ascii_digit()) {
                    // Negative number literal.
                    let start = i;
                    i += 1;
                    while i + 1 < chars.len() && is_atom_char(chars[i + 1]) {
                        i += 1;
                    }
                    let atom: String = chars[start..=i].iter().collect();
                    out.push((Tok::Atom(atom), col));
                    i += 1;
                    continue;
                } else {
                    Tok::Minus
                }
            }
            _ if is_atom_char(c) => {
                let start = i;
                while i + 1 < chars.len() && is_atom_char(chars[i + 1]) {
                    i += 1;
                }
                let atom: String = chars[start..=i].iter().collect();
                out.push((Tok::Atom(atom), col));
                i += 1;
                continue;
            }
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    column: col,
                    message: format!("unexpected character `{c}`"),
                })
            }
        };
        out.push((tok, col));
        i += 1;
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Line cursor

struct Cursor<'a> {
    toks: &'a [(Tok, usize)],
    pos: usize,
    line: usize,
}

impl<'a> Cursor<'a> {
    fn new(toks: &'a [(Tok, usize)], line: usize) -> Self {
        Cursor { toks, pos: 0, line }
    }

    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(t, _)| t)
    }

    fn col(&self) -> usize {
        self.toks
            .get(self.pos)
            .map(|(_, c)| *c)
            .unwrap_or_else(|| self.toks.last().map(|(_, c)| c + 1).unwrap_or(1))
    }

    fn next(&mut self) -> Option<&Tok> {
        let t = self.toks.get(self.pos).map(|(t, _)| t);
        if t.is_some() {
            self.pos += 1;
        }
        t
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.col(),
            message: message.into(),
        }
    }

    fn expect(&mut self, want: &Tok) -> Result<()> {
        match self.peek() {
            Some(t) if t == want => {
                self.pos += 1;
                Ok(())
            }
            Some(t) => Err(self.err(format!("expected {}, found {}", want.describe(), t.describe()))),
            None => Err(self.err(format!("expected {}, found end of line", want.describe()))),
        }
    }

    fn atom(&mut self, what: &str) -> Result<String> {
        match self.peek() {
            Some(Tok::Atom(a)) => {
                let a = a.clone();
                self.pos += 1;
                Ok(a)
            }
            Some(t) => Err(self.err(format!("expected {what}, found {}", t.describe()))),
            None => Err(self.err(format!("expected {what}, found end of line"))),
        }
    }

    fn rational(&mut self, what: &str) -> Result<Prob> {
        let col = self.col();
        let a = self.atom(what)?;
        a.parse().map_err(|m: String| Error::Parse {
            line: self.line,
            column: col,
            message: m,
        })
    }

    fn done(&mut self) -> Result<()> {
        if let Some(t) = self.peek() {
            Err(self.err(format!("unexpected trailing {}", t.describe())))
        } else {
            Ok(())
        }
    }
}

/// Identifiers: a letter or underscore, then alphanumerics/underscores,
/// then optional trailing primes.
fn is_identifier(s: &str) -> bool {
    let body = s.trim_end_matches('\'');
    if body.is_empty() || s[body.len()..].chars().any(|c| c != '\'') {
        return false;
    }
    let mut chars = body.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_')
}

// ---------------------------------------------------------------------------
// Model parsing

#[derive(Debug)]
enum OpenBlock {
    None,
    Cpt(usize),
    Policy(usize),
}

/// Raw row key before wildcard expansion.
enum RowKey {
    Wildcard,
    Values(Vec<String>),
}

struct RawRows {
    rows: Vec<(RowKey, Vec<Prob>, usize)>,
}

pub fn parse_model(text: &str) -> Result<ModelDoc> {
    let mut kind: Option<ModelKind> = None;
    let mut name = String::new();
    let mut vars: Vec<VarDecl> = Vec::new();
    let mut edges: Vec<(String, String)> = Vec::new();
    let mut cpt_headers: Vec<(String, Vec<String>, usize)> = Vec::new();
    let mut cpt_rows: Vec<RawRows> = Vec::new();
    let mut eqns: Vec<EqnDecl> = Vec::new();
    let mut priors: Vec<(String, Vec<Prob>)> = Vec::new();
    let mut policy_headers: Vec<(String, Vec<String>, usize)> = Vec::new();
    let mut policy_rows: Vec<RawRows> = Vec::new();
    let mut discount: Option<Prob> = None;
    let mut open = OpenBlock::None;

    for (i, raw_line) in text.lines().enumerate() {
        let lineno = i + 1;
        let toks = tokenize(raw_line, lineno)?;
        if toks.is_empty() {
            continue;
        }
        let mut cur = Cursor::new(&toks, lineno);
        let keyword = match cur.peek() {
            Some(Tok::Atom(a))
                if matches!(
                    a.as_str(),
                    "model" | "var" | "edge" | "cpt" | "eqn" | "prior" | "policy" | "discount"
                ) =>
            {
                Some(a.clone())
            }
            _ => None,
        };
        match keyword.as_deref() {
            Some("model") => {
                open = OpenBlock::None;
                cur.next();
                let k = cur.atom("model kind")?;
                let k = match k.as_str() {
                    "cbn" => ModelKind::Cbn,
                    "scm" => ModelKind::Scm,
                    "ddn" => ModelKind::Ddn,
                    other => {
                        return Err(cur.err(format!(
                            "unknown model kind `{other}` (expected cbn, scm, or ddn)"
                        )))
                    }
                };
                if kind.is_some() {
                    return Err(cur.err("duplicate model declaration"));
                }
                kind = Some(k);
                // Name is a quoted string; the tokenizer has no string
                // literals, so pick it out of the raw line.
                let rest = raw_line.trim();
                let Some(q1) = rest.find('"') else {
                    return Err(cur.err("expected quoted model name"));
                };
                let Some(q2) = rest[q1 + 1..].find('"') else {
                    return Err(cur.err("unterminated model name"));
                };
                name = rest[q1 + 1..q1 + 1 + q2].to_string();
            }
            Some("var") => {
                open = OpenBlock::None;
                cur.next();
                let vname = cur.atom("variable name")?;
                if !is_identifier(&vname) {
                    return Err(cur.err(format!("invalid variable name `{vname}`")));
                }
                cur.expect(&Tok::LBrace)?;
                let mut domain = Vec::new();
                loop {
                    domain.push(cur.atom("domain value")?);
                    match cur.next() {
                        Some(Tok::Comma) => continue,
                        Some(Tok::RBrace) => break,
                        _ => return Err(cur.err("expected `,` or `}` in domain")),
                    }
                }
                if domain.len() < 2 {
                    return Err(cur.err(format!(
                        "variable {vname} needs at least two domain values"
                    )));
                }
                let mut latent = false;
                let mut role = Role::State;
                let mut next_slice = false;
                while let Some(tok) = cur.peek() {
                    match tok {
                        Tok::Atom(a) if a == "latent" => {
                            latent = true;
                            cur.next();
                        }
                        Tok::Atom(a) if a == "role" => {
                            cur.next();
                            cur.expect(&Tok::Equals)?;
                            let r = cur.atom("role")?;
                            role = match r.as_str() {
                                "state" => Role::State,
                                "action" => Role::Action,
                                "reward" => Role::Reward,
                                other => {
                                    return Err(cur.err(format!(
                                        "unknown role `{other}` (expected state, action, or reward)"
                                    )))
                                }
                            };
                        }
                        Tok::Atom(a) if a == "slice" => {
                            cur.next();
                            cur.expect(&Tok::Equals)?;
                            let s = cur.atom("slice")?;
                            next_slice = match s.as_str() {
                                "next" => true,
                                "current" => false,
                                other => {
                                    return Err(cur.err(format!(
                                        "unknown slice `{other}` (expected current or next)"
                                    )))
                                }
                            };
                        }
                        other => {
                            return Err(cur.err(format!(
                                "unexpected {} in var declaration",
                                other.describe()
                            )))
                        }
                    }
                }
                vars.push(VarDecl {
                    name: vname,
                    domain,
                    latent,
                    role,
                    next_slice,
                });
            }
            Some("edge") => {
                open = OpenBlock::None;
                cur.next();
                let p = cur.atom("parent name")?;
                cur.expect(&Tok::Arrow)?;
                let c = cur.atom("child name")?;
                cur.done()?;
                edges.push((p, c));
            }
            Some("cpt") => {
                cur.next();
                let child = cur.atom("child name")?;
                let mut parents = Vec::new();
                if cur.peek() == Some(&Tok::Pipe) {
                    cur.next();
                    while cur.peek() != Some(&Tok::Colon) {
                        parents.push(cur.atom("parent name")?);
                    }
                }
                cur.expect(&Tok::Colon)?;
                cur.done()?;
                cpt_headers.push((child, parents, lineno));
                cpt_rows.push(RawRows { rows: Vec::new() });
                open = OpenBlock::Cpt(cpt_headers.len() - 1);
            }
            Some("eqn") => {
                open = OpenBlock::None;
                cur.next();
                let child = cur.atom("child name")?;
                cur.expect(&Tok::Equals)?;
                let expr = parse_expr(&mut cur)?;
                cur.done()?;
                eqns.push(EqnDecl { child, expr });
            }
            Some("prior") => {
                open = OpenBlock::None;
                cur.next();
                let vname = cur.atom("variable name")?;
                cur.expect(&Tok::Colon)?;
                let mut probs = Vec::new();
                while cur.peek().is_some() {
                    probs.push(cur.rational("probability")?);
                }
                if probs.is_empty() {
                    return Err(cur.err("prior needs at least one probability"));
                }
                priors.push((vname, probs));
            }
            Some("policy") => {
                cur.next();
                let pname = cur.atom("policy name")?;
                cur.expect(&Tok::Pipe)?;
                let mut pvars = Vec::new();
                while cur.peek() != Some(&Tok::Colon) {
                    pvars.push(cur.atom("variable name")?);
                }
                cur.expect(&Tok::Colon)?;
                cur.done()?;
                policy_headers.push((pname, pvars, lineno));
                policy_rows.push(RawRows { rows: Vec::new() });
                open = OpenBlock::Policy(policy_headers.len() - 1);
            }
            Some("discount") => {
                open = OpenBlock::None;
                cur.next();
                let d = cur.rational("discount")?;
                cur.done()?;
                if discount.is_some() {
                    return Err(cur.err("duplicate discount declaration"));
                }
                discount = Some(d);
            }
            Some(_) => unreachable!(),
            None => {
                // A table row belonging to the open cpt/policy block.
                let target = match open {
                    OpenBlock::Cpt(i) => &mut cpt_rows[i],
                    OpenBlock::Policy(i) => &mut policy_rows[i],
                    OpenBlock::None => {
                        return Err(cur.err("expected a section keyword"));
                    }
                };
                let key = if cur.peek() == Some(&Tok::Star) {
                    cur.next();
                    RowKey::Wildcard
                } else {
                    let mut values = Vec::new();
                    while cur.peek() != Some(&Tok::Colon) {
                        values.push(cur.atom("value")?);
                    }
                    RowKey::Values(values)
                };
                cur.expect(&Tok::Colon)?;
                let mut probs = Vec::new();
                while cur.peek().is_some() {
                    probs.push(cur.rational("probability")?);
                }
                if probs.is_empty() {
                    return Err(cur.err("table row needs at least one probability"));
                }
                target.rows.push((key, probs, lineno));
            }
        }
    }

    let Some(kind) = kind else {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "missing model declaration".into(),
        });
    };

    let mut doc = ModelDoc {
        kind,
        name,
        vars,
        edges,
        cpts: Vec::new(),
        eqns,
        priors,
        policies: Vec::new(),
        discount,
    };

    // Resolve headers + raw rows into expanded declarations.
    for ((child, parents, lineno), raw) in cpt_headers.into_iter().zip(cpt_rows) {
        let var = doc
            .vars
            .iter()
            .find(|v| v.name == child)
            .ok_or_else(|| Error::Parse {
                line: lineno,
                column: 1,
                message: format!("cpt for undeclared variable {child}"),
            })?
            .clone();
        let rows = expand_rows(&doc, &parents, raw, var.domain.len(), lineno, "cpt row")?;
        doc.cpts.push(CptDecl {
            child,
            parents,
            rows,
        });
    }
    let action_domain_len = doc
        .vars
        .iter()
        .find(|v| v.role == Role::Action && !v.next_slice)
        .map(|v| v.domain.len());
    for ((pname, pvars, lineno), raw) in policy_headers.into_iter().zip(policy_rows) {
        let len = action_domain_len.ok_or_else(|| Error::Parse {
            line: lineno,
            column: 1,
            message: "policy declared but no action variable exists".into(),
        })?;
        let rows = expand_rows(&doc, &pvars, raw, len, lineno, "policy row")?;
        doc.policies.push(PolicyDecl {
            name: pname,
            vars: pvars,
            rows,
        });
    }

    validate_doc(&doc)?;
    Ok(doc)
}

/// Expands a wildcard row (at most one) to all uncovered configurations and
/// checks row shape and normalization.
fn expand_rows(
    doc: &ModelDoc,
    key_vars: &[String],
    raw: RawRows,
    prob_len: usize,
    header_line: usize,
    what: &str,
) -> Result<Vec<(Vec<String>, Vec<Prob>)>> {
    let mut domains: Vec<Vec<String>> = Vec::new();
    for kv in key_vars {
        let v = doc.vars.iter().find(|v| &v.name == kv).ok_or_else(|| Error::Parse {
            line: header_line,
            column: 1,
            message: format!("undeclared variable {kv}"),
        })?;
        domains.push(v.domain.clone());
    }
    let mut explicit: Vec<(Vec<String>, Vec<Prob>)> = Vec::new();
    let mut wildcard: Option<(Vec<Prob>, usize)> = None;
    for (key, probs, lineno) in raw.rows {
        if probs.len() != prob_len {
            return Err(Error::Parse {
                line: lineno,
                column: 1,
                message: format!(
                    "{what} has {} probabilities, expected {prob_len}",
                    probs.len()
                ),
            });
        }
        let total: Prob = probs.iter().cloned().sum();
        if !total.is_one() {
            return Err(Error::Parse {
                line: lineno,
                column: 1,
                message: format!("{what} sums to {total}, not 1"),
            });
        }
        if probs.iter().any(|p| p.is_negative()) {
            return Err(Error::Parse {
                line: lineno,
                column: 1,
                message: format!("{what} contains a negative probability"),
            });
        }
        match key {
            RowKey::Wildcard => {
                if wildcard.is_some() {
                    return Err(Error::Parse {
                        line: lineno,
                        column: 1,
                        message: format!("more than one wildcard {what}"),
                    });
                }
                wildcard = Some((probs, lineno));
            }
            RowKey::Values(values) => {
                if values.len() != key_vars.len() {
                    return Err(Error::Parse {
                        line: lineno,
                        column: 1,
                        message: format!(
                            "{what} key has {} values, expected {}",
                            values.len(),
                            key_vars.len()
                        ),
                    });
                }
                for (v, dom) in values.iter().zip(&domains) {
                    if !dom.contains(v) {
                        return Err(Error::Parse {
                            line: lineno,
                            column: 1,
                            message: format!("value {v} not in the domain"),
                        });
                    }
                }
                if explicit.iter().any(|(k, _)| k == &values) {
                    return Err(Error::Parse {
                        line: lineno,
                        column: 1,
                        message: format!("duplicate {what} key"),
                    });
                }
                explicit.push((values, probs));
            }
        }
    }
    // Enumerate all configurations in domain order; fill gaps from the
    // wildcard row.
    let mut configs: Vec<Vec<String>> = vec![vec![]];
    for dom in &domains {
        let mut next = Vec::with_capacity(configs.len() * dom.len());
        for c in &configs {
            for val in dom {
                let mut c2 = c.clone();
                c2.push(val.clone());
                next.push(c2);
            }
        }
        configs = next;
    }
    let mut out = Vec::with_capacity(configs.len());
    for config in configs {
        if let Some((_, probs)) = explicit.iter().find(|(k, _)| k == &config) {
            out.push((config, probs.clone()));
        } else if let Some((probs, _)) = &wildcard {
            out.push((config, probs.clone()));
        } else {
            return Err(Error::Parse {
                line: header_line,
                column: 1,
                message: format!(
                    "{what} missing for configuration ({})",
                    config.join(", ")
                ),
            });
        }
    }
    Ok(out)
}

fn validate_doc(doc: &ModelDoc) -> Result<()> {
    let mut names = BTreeSet::new();
    for v in &doc.vars {
        if !names.insert(&v.name) {
            return Err(Error::Model(format!("duplicate variable {}", v.name)));
        }
    }
    let declared = |n: &str| doc.vars.iter().any(|v| v.name == n);
    for (p, c) in &doc.edges {
        for n in [p, c] {
            if !declared(n) {
                return Err(Error::UnknownVariable(n.clone()));
            }
        }
    }
    for c in &doc.cpts {
        for p in &c.parents {
            if !declared(p) {
                return Err(Error::UnknownVariable(p.clone()));
            }
        }
    }
    for e in &doc.eqns {
        if !declared(&e.child) {
            return Err(Error::UnknownVariable(e.child.clone()));
        }
        let mut refs = BTreeSet::new();
        e.expr.references(&mut refs);
        for r in refs {
            if !declared(&r) {
                return Err(Error::UnknownVariable(r));
            }
        }
    }
    for (n, probs) in &doc.priors {
        let v = doc
            .vars
            .iter()
            .find(|v| &v.name == n)
            .ok_or_else(|| Error::UnknownVariable(n.clone()))?;
        if probs.len() != v.domain.len() {
            return Err(Error::Model(format!(
                "prior for {n} has {} entries, domain has {}",
                probs.len(),
                v.domain.len()
            )));
        }
        let total: Prob = probs.iter().cloned().sum();
        if !total.is_one() {
            return Err(Error::Model(format!("prior for {n} sums to {total}, not 1")));
        }
    }
    for p in &doc.policies {
        for v in &p.vars {
            if !declared(v) {
                return Err(Error::UnknownVariable(v.clone()));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Expressions

fn parse_expr(cur: &mut Cursor) -> Result<Expr> {
    let mut lhs = parse_term(cur)?;
    loop {
        match cur.peek() {
            Some(Tok::Plus) => {
                cur.next();
                let rhs = parse_term(cur)?;
                lhs = Expr::Add(Box::new(lhs), Box::new(rhs));
            }
            Some(Tok::Minus) => {
                cur.next();
                let rhs = parse_term(cur)?;
                lhs = Expr::Sub(Box::new(lhs), Box::new(rhs));
            }
            _ => return Ok(lhs),
        }
    }
}

fn parse_term(cur: &mut Cursor) -> Result<Expr> {
    let mut lhs = parse_factor(cur)?;
    while cur.peek() == Some(&Tok::Star) {
        cur.next();
        let rhs = parse_factor(cur)?;
        lhs = Expr::Mul(Box::new(lhs), Box::new(rhs));
    }
    Ok(lhs)
}

fn parse_factor(cur: &mut Cursor) -> Result<Expr> {
    match cur.peek() {
        Some(Tok::LParen) => {
            cur.next();
            let e = parse_expr(cur)?;
            cur.expect(&Tok::RParen)?;
            Ok(e)
        }
        Some(Tok::Atom(a)) => {
            let a = a.clone();
            let col = cur.col();
            cur.next();
            if a.chars().next().map_or(false, |c| c.is_ascii_digit()) || a.starts_with('-') {
                a.parse().map(Expr::Num).map_err(|m: String| Error::Parse {
                    line: cur.line,
                    column: col,
                    message: m,
                })
            } else {
                Ok(Expr::Var(a))
            }
        }
        Some(t) => Err(cur.err(format!("expected expression, found {}", t.describe()))),
        None => Err(cur.err("expected expression, found end of line")),
    }
}

// ---------------------------------------------------------------------------
// Canonical printing

pub fn print_model(doc: &ModelDoc) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "model {} \"{}\"", doc.kind.as_str(), doc.name);
    if !doc.vars.is_empty() {
        s.push('\n');
    }
    for v in &doc.vars {
        let _ = write!(s, "var {} {{{}}}", v.name, v.domain.join(","));
        if v.latent {
            s.push_str(" latent");
        }
        let role = match v.role {
            Role::State => "state",
            Role::Action => "action",
            Role::Reward => "reward",
            Role::Belief => "state",
        };
        let _ = write!(s, " role={role}");
        if v.next_slice {
            s.push_str(" slice=next");
        }
        s.push('\n');
    }
    if !doc.edges.is_empty() {
        s.push('\n');
    }
    for (p, c) in &doc.edges {
        let _ = writeln!(s, "edge {p} -> {c}");
    }
    for cpt in &doc.cpts {
        s.push('\n');
        if cpt.parents.is_empty() {
            let _ = writeln!(s, "cpt {} :", cpt.child);
        } else {
            let _ = writeln!(s, "cpt {} | {} :", cpt.child, cpt.parents.join(" "));
        }
        for (key, probs) in &cpt.rows {
            let probs: Vec<String> = probs.iter().map(|p| p.to_string()).collect();
            if key.is_empty() {
                let _ = writeln!(s, "  : {}", probs.join(" "));
            } else {
                let _ = writeln!(s, "  {} : {}", key.join(" "), probs.join(" "));
            }
        }
    }
    if !doc.eqns.is_empty() {
        s.push('\n');
    }
    for e in &doc.eqns {
        let _ = writeln!(s, "eqn {} = {}", e.child, e.expr.print());
    }
    if !doc.priors.is_empty() {
        s.push('\n');
    }
    for (n, probs) in &doc.priors {
        let probs: Vec<String> = probs.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(s, "prior {n} : {}", probs.join(" "));
    }
    for p in &doc.policies {
        s.push('\n');
        let _ = writeln!(s, "policy {} | {} :", p.name, p.vars.join(" "));
        for (key, probs) in &p.rows {
            let probs: Vec<String> = probs.iter().map(|q| q.to_string()).collect();
            if key.is_empty() {
                let _ = writeln!(s, "  : {}", probs.join(" "));
            } else {
                let _ = writeln!(s, "  {} : {}", key.join(" "), probs.join(" "));
            }
        }
    }
    if let Some(d) = &doc.discount {
        s.push('\n');
        let _ = writeln!(s, "discount {d}");
    }
    s
}

// ---------------------------------------------------------------------------
// Compiling documents to models

/// A loaded model of any kind.
#[derive(Debug, Clone)]
pub enum Model {
    Cbn(Cbn),
    Scm(Scm),
    Ddn(Ddn),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::Cbn(_) => ModelKind::Cbn,
            Model::Scm(_) => ModelKind::Scm,
            Model::Ddn(_) => ModelKind::Ddn,
        }
    }
}

fn doc_graph(doc: &ModelDoc) -> Result<CausalGraph> {
    let mut variables = Vec::new();
    let mut observed = Vec::new();
    for v in &doc.vars {
        let mut var = Variable {
            name: v.name.clone(),
            domain: v.domain.clone(),
            role: v.role,
            slice: if v.next_slice { Slice::Next } else { Slice::Current },
        };
        var.role = v.role;
        variables.push(var);
        if !v.latent {
            observed.push(v.name.clone());
        }
    }
    CausalGraph::new(variables, doc.edges.clone(), observed)
}

/// Evaluates an equation over one parent configuration; values must be
/// numeric.
fn eval_eqn(
    doc: &ModelDoc,
    eqn: &EqnDecl,
    parents: &[String],
    config: &Assignment,
) -> Result<String> {
    let mut env = BTreeMap::new();
    for p in parents {
        let raw = config
            .get(p)
            .ok_or_else(|| Error::IncompleteAssignment(p.clone()))?;
        let num: Prob = raw.parse().map_err(|_| {
            Error::Model(format!(
                "equation for {} references {p}, whose value {raw} is not numeric",
                eqn.child
            ))
        })?;
        env.insert(p.clone(), num);
    }
    let out = eqn.expr.eval(&env)?;
    let rendered = out.to_string();
    let child = doc.vars.iter().find(|v| v.name == eqn.child).unwrap();
    if !child.domain.contains(&rendered) {
        return Err(Error::DomainViolation {
            variable: eqn.child.clone(),
            value: rendered,
        });
    }
    Ok(rendered)
}

fn parent_configs(doc: &ModelDoc, parents: &[String]) -> Result<Vec<Assignment>> {
    let mut out = vec![Assignment::new()];
    for p in parents {
        let v = doc
            .vars
            .iter()
            .find(|v| &v.name == p)
            .ok_or_else(|| Error::UnknownVariable(p.clone()))?;
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

/// One CPT per variable: explicit tables, compiled equations, or priors for
/// parentless variables.
fn doc_cpts(doc: &ModelDoc, g: &CausalGraph) -> Result<Vec<Cpt>> {
    let mut cpts: BTreeMap<String, Cpt> = BTreeMap::new();
    for c in &doc.cpts {
        let child = g.variable(&c.child)?;
        let mut table = BTreeMap::new();
        for (key, probs) in &c.rows {
            let mut a = Assignment::new();
            for (p, v) in c.parents.iter().zip(key) {
                a.set(p.clone(), v.clone());
            }
            let mut row = BTreeMap::new();
            for (val, p) in child.domain.iter().zip(probs) {
                row.insert(val.clone(), p.clone());
            }
            table.insert(a, row);
        }
        let cpt = Cpt {
            child: c.child.clone(),
            parents: c.parents.clone(),
            table,
        };
        if cpts.insert(c.child.clone(), cpt).is_some() {
            return Err(Error::Model(format!("duplicate mechanism for {}", c.child)));
        }
    }
    for e in &doc.eqns {
        let parents: Vec<String> = g.parents(&e.child).into_iter().map(String::from).collect();
        let mut table = BTreeMap::new();
        for config in parent_configs(doc, &parents)? {
            let out = eval_eqn(doc, e, &parents, &config)?;
            let child = g.variable(&e.child)?;
            let mut row = BTreeMap::new();
            for val in &child.domain {
                row.insert(
                    val.clone(),
                    if val == &out { Prob::one() } else { Prob::zero() },
                );
            }
            table.insert(config, row);
        }
        let cpt = Cpt {
            child: e.child.clone(),
            parents,
            table,
        };
        if cpts.insert(e.child.clone(), cpt).is_some() {
            return Err(Error::Model(format!("duplicate mechanism for {}", e.child)));
        }
    }
    for (n, probs) in &doc.priors {
        let v = g.variable(n)?;
        let mut row = BTreeMap::new();
        for (val, p) in v.domain.iter().zip(probs) {
            row.insert(val.clone(), p.clone());
        }
        let mut table = BTreeMap::new();
        table.insert(Assignment::new(), row);
        let cpt = Cpt {
            child: n.clone(),
            parents: vec![],
            table,
        };
        if cpts.insert(n.clone(), cpt).is_some() {
            return Err(Error::Model(format!("duplicate mechanism for {n}")));
        }
    }
    Ok(cpts.into_values().collect())
}

pub fn build_cbn(doc: &ModelDoc) -> Result<Cbn> {
    let g = doc_graph(doc)?;
    let cpts = doc_cpts(doc, &g)?;
    Cbn::new(g, cpts)
}

pub fn build_scm(doc: &ModelDoc) -> Result<Scm> {
    let g = doc_graph(doc)?;
    let mut fns: Vec<LocalFn> = Vec::new();
    let mut prior: BTreeMap<String, BTreeMap<String, Prob>> = BTreeMap::new();
    for c in &doc.cpts {
        // Table mechanisms in an scm must be deterministic.
        let mut table = BTreeMap::new();
        for (key, probs) in &c.rows {
            let child = g.variable(&c.child)?;
            let ones: Vec<&String> = child
                .domain
                .iter()
                .zip(probs)
                .filter(|(_, p)| !p.is_zero())
                .map(|(v, _)| v)
                .collect();
            if ones.len() != 1 {
                return Err(Error::Model(format!(
                    "scm mechanism for {} must be deterministic; use a latent noise variable for randomness",
                    c.child
                )));
            }
            let mut a = Assignment::new();
            for (p, v) in c.parents.iter().zip(key) {
                a.set(p.clone(), v.clone());
            }
            table.insert(a, ones[0].clone());
        }
        fns.push(LocalFn {
            child: c.child.clone(),
            parents: c.parents.clone(),
            table,
        });
    }
    for e in &doc.eqns {
        let parents: Vec<String> = g.parents(&e.child).into_iter().map(String::from).collect();
        let mut table = BTreeMap::new();
        for config in parent_configs(doc, &parents)? {
            let out = eval_eqn(doc, e, &parents, &config)?;
            table.insert(config, out);
        }
        fns.push(LocalFn {
            child: e.child.clone(),
            parents,
            table,
        });
    }
    for (n, probs) in &doc.priors {
        let v = g.variable(n)?;
        let mut row = BTreeMap::new();
        for (val, p) in v.domain.iter().zip(probs) {
            row.insert(val.clone(), p.clone());
        }
        prior.insert(n.clone(), row);
    }
    Scm::new(g, fns, prior)
}

pub fn build_ddn(doc: &ModelDoc, relax_a3: bool) -> Result<Ddn> {
    let cbn = build_cbn(doc)?;
    let mut policies = Vec::new();
    for p in &doc.policies {
        policies.push(build_policy(doc, &cbn, p)?);
    }
    let discount = doc.discount.clone().unwrap_or_else(Prob::one);
    Ddn::new(cbn, policies, discount, relax_a3)
}

fn build_policy(doc: &ModelDoc, cbn: &Cbn, p: &PolicyDecl) -> Result<Policy> {
    let action = cbn
        .graph()
        .variables()
        .iter()
        .find(|v| v.role == Role::Action && v.slice == Slice::Current)
        .ok_or_else(|| Error::Model("model has no action variable".into()))?
        .clone();
    let mut rows = BTreeMap::new();
    for (key, probs) in &p.rows {
        let mut a = Assignment::new();
        for (var, val) in p.vars.iter().zip(key) {
            a.set(var.clone(), val.clone());
        }
        let mut dist = BTreeMap::new();
        for (val, q) in action.domain.iter().zip(probs) {
            dist.insert(val.clone(), q.clone());
        }
        rows.insert(a, dist);
    }
    let latent_dep = p.vars.iter().any(|v| {
        doc.vars
            .iter()
            .find(|d| &d.name == v)
            .map_or(false, |d| d.latent)
    });
    let kind = if latent_dep {
        PolicyKind::FullState
    } else {
        PolicyKind::Observation
    };
    Ok(Policy {
        name: p.name.clone(),
        action: action.name.clone(),
        vars: p.vars.clone(),
        rows,
        kind,
    })
}

/// Parses and compiles a document in one step.
pub fn load_model(text: &str, relax_a3: bool) -> Result<(ModelDoc, Model)> {
    let doc = parse_model(text)?;
    let model = match doc.kind {
        ModelKind::Cbn => Model::Cbn(build_cbn(&doc)?),
        ModelKind::Scm => Model::Scm(build_scm(&doc)?),
        ModelKind::Ddn => Model::Ddn(build_ddn(&doc, relax_a3)?),
    };
    Ok((doc, model))
}

// ---------------------------------------------------------------------------
// Query language

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum QueryTerm {
    /// `name=value`
    Eq(String, String),
    /// `do(name=value)`
    Do(String, String),
    /// `name[sub1=v1,...]=value`
    PotentialTarget {
        var: String,
        subscripts: Vec<(String, String)>,
        value: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryAst {
    pub targets: Vec<QueryTerm>,
    pub evidence: Vec<QueryTerm>,
}

pub fn parse_query(text: &str) -> Result<QueryAst> {
    let toks = tokenize(text, 1)?;
    let mut cur = Cursor::new(&toks, 1);
    match cur.peek() {
        Some(Tok::Atom(a)) if a == "P" => {
            cur.next();
        }
        _ => return Err(cur.err("query must start with `P(`")),
    }
    cur.expect(&Tok::LParen)?;
    let mut targets = Vec::new();
    let mut evidence = Vec::new();
    let mut in_evidence = false;
    loop {
        match cur.peek() {
            Some(Tok::RParen) => {
                cur.next();
                break;
            }
            Some(Tok::Pipe) => {
                if in_evidence {
                    return Err(cur.err("more than one `|` in query"));
                }
                cur.next();
                in_evidence = true;
                continue;
            }
            Some(Tok::Comma) => {
                cur.next();
                continue;
            }
            Some(_) => {
                let term = parse_term_query(&mut cur)?;
                if in_evidence {
                    evidence.push(term);
                } else {
                    targets.push(term);
                }
            }
            None => return Err(cur.err("unterminated query")),
        }
    }
    cur.done()?;
    let ast = QueryAst { targets, evidence };
    check_query_disjoint(&ast, &cur)?;
    Ok(ast)
}

fn parse_term_query(cur: &mut Cursor) -> Result<QueryTerm> {
    let name = cur.atom("variable name")?;
    if name == "do" && cur.peek() == Some(&Tok::LParen) {
        cur.next();
        let var = cur.atom("variable name")?;
        cur.expect(&Tok::Equals)?;
        let value = cur.atom("value")?;
        cur.expect(&Tok::RParen)?;
        return Ok(QueryTerm::Do(var, value));
    }
    if cur.peek() == Some(&Tok::LBracket) {
        cur.next();
        let mut subscripts = Vec::new();
        loop {
            let sv = cur.atom("variable name")?;
            cur.expect(&Tok::Equals)?;
            let sval = cur.atom("value")?;
            subscripts.push((sv, sval));
            match cur.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RBracket) => break,
                _ => return Err(cur.err("expected `,` or `]` in subscript")),
            }
        }
        cur.expect(&Tok::Equals)?;
        let value = cur.atom("value")?;
        return Ok(QueryTerm::PotentialTarget {
            var: name,
            subscripts,
            value,
        });
    }
    cur.expect(&Tok::Equals)?;
    let value = cur.atom("value")?;
    Ok(QueryTerm::Eq(name, value))
}

fn check_query_disjoint(ast: &QueryAst, cur: &Cursor) -> Result<()> {
    let mut plain_ev = BTreeSet::new();
    let mut do_ev = BTreeSet::new();
    for t in &ast.evidence {
        match t {
            QueryTerm::Eq(n, _) => {
                if !plain_ev.insert(n.clone()) || do_ev.contains(n) {
                    return Err(cur.err(format!("variable {n} appears twice in evidence")));
                }
            }
            QueryTerm::Do(n, _) => {
                if !do_ev.insert(n.clone()) || plain_ev.contains(n) {
                    return Err(cur.err(format!("variable {n} appears twice in evidence")));
                }
            }
            QueryTerm::PotentialTarget { .. } => {
                return Err(cur.err("subscripted terms are only allowed as targets"));
            }
        }
    }
    let mut tvars = BTreeSet::new();
    for t in &ast.targets {
        // A subscripted target is a different random variable from its
        // actual-world counterpart, so it may coexist with evidence on the
        // plain variable (that is the whole point of hindsight queries).
        let (n, plain) = match t {
            QueryTerm::Eq(n, _) => (n, true),
            QueryTerm::PotentialTarget { var: n, .. } => (n, false),
            QueryTerm::Do(..) => {
                return Err(cur.err("do() terms are only allowed as evidence"));
            }
        };
        if !tvars.insert((n.clone(), plain)) || (plain && plain_ev.contains(n)) {
            return Err(cur.err(format!("variable {n} appears in both targets and evidence")));
        }
    }
    Ok(())
}

impl QueryAst {
    /// Lowers the AST to an engine query. All subscripted targets must
    /// share one subscript intervention set.
    pub fn to_query(&self) -> Result<Query> {
        let mut q = Query::default();
        let mut potential: Option<Potential> = None;
        for t in &self.targets {
            match t {
                QueryTerm::Eq(n, v) => q.targets.set(n.clone(), v.clone()),
                QueryTerm::PotentialTarget {
                    var,
                    subscripts,
                    value,
                } => {
                    let mut iv = Assignment::new();
                    for (sv, sval) in subscripts {
                        iv.set(sv.clone(), sval.clone());
                    }
                    match &mut potential {
                        None => {
                            let mut targets = Assignment::new();
                            targets.set(var.clone(), value.clone());
                            potential = Some(Potential {
                                targets,
                                interventions: iv,
                            });
                        }
                        Some(p) => {
                            if p.interventions != iv {
                                return Err(Error::Unsupported(
                                    "subscripted targets with differing intervention sets"
                                        .into(),
                                ));
                            }
                            p.targets.set(var.clone(), value.clone());
                        }
                    }
                }
                QueryTerm::Do(..) => unreachable!("rejected during parsing"),
            }
        }
        for t in &self.evidence {
            match t {
                QueryTerm::Eq(n, v) => q.evidence.set(n.clone(), v.clone()),
                QueryTerm::Do(n, v) => q.interventions.set(n.clone(), v.clone()),
                QueryTerm::PotentialTarget { .. } => unreachable!("rejected during parsing"),
            }
        }
        q.potential = potential;
        q.validate()?;
        Ok(q)
    }
}
