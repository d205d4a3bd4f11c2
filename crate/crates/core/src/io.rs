//! Text formats for models, specifications, parameter regions and repair requests.
//!
//! Model files:
//!
//! ```text
//! pmc                      # or pmdp
//! states 3
//! initial 0
//! param p q
//! state 1 heads            # optional state names
//! 0 flip heads p           # state action successor probability
//! 0 flip 2 1 - p
//! 1 done 1 1
//! 2 done 2 1
//! cost 0 flip 1.5          # state action cost
//! label goal heads
//! ```
//!
//! Specification files hold `reach <= L label NAME`, `expcost <= K label NAME`,
//! at most one `maximize reach label NAME` and an optional `region` ... `end`
//! block. Region blocks and region files list `NAME LO HI` boxes and linear
//! constraints `EXPR <= D`; a region file may hold several `box` ... `end` blocks.
//! Repair files list changeable transitions as `state action successor`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::encoder::Region;
use crate::expr::{parse_signomial, ExprError, VarKind, VarRegistry};
use crate::model::{ModelError, Pmdp, PmdpBuilder, Spec, SpecKind, StateId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: {source}")]
    Expr { line: usize, source: ExprError },
    #[error("line {line}: {source}")]
    Model { line: usize, source: ModelError },
    #[error("{0}")]
    Invalid(#[from] ModelError),
}

fn syntax(line: usize, msg: impl Into<String>) -> ParseError {
    ParseError::Syntax { line, msg: msg.into() }
}

/// Non-empty lines with comments removed, numbered from one.
fn lines(src: &str) -> impl Iterator<Item = (usize, &str)> {
    src.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn number(tok: &str, line: usize) -> Result<f64, ParseError> {
    tok.parse::<f64>().map_err(|_| syntax(line, format!("expected a number, got `{tok}`")))
}

/// Splits off the first `n` whitespace-separated words and returns the rest.
fn words(l: &str, n: usize) -> Option<(Vec<&str>, &str)> {
    let mut out = Vec::with_capacity(n);
    let mut rest = l;
    for _ in 0..n {
        rest = rest.trim_start();
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        if end == 0 {
            return None;
        }
        out.push(&rest[..end]);
        rest = &rest[end..];
    }
    Some((out, rest.trim()))
}

const RESERVED: [&str; 8] = ["pmc", "pmdp", "states", "initial", "param", "state", "cost", "label"];

struct Header {
    deterministic: bool,
    states: usize,
    initial: String,
    vars: VarRegistry,
    names: BTreeMap<String, StateId>,
}

fn state_ref(tok: &str, h: &Header, line: usize) -> Result<StateId, ParseError> {
    if let Some(&s) = h.names.get(tok) {
        return Ok(s);
    }
    match tok.parse::<usize>() {
        Ok(s) if s < h.states => Ok(s),
        Ok(s) => Err(ParseError::Model { line, source: ModelError::StateOutOfRange(s) }),
        Err(_) => Err(syntax(line, format!("unknown state `{tok}`"))),
    }
}

pub fn parse_model(src: &str) -> Result<Pmdp, ParseError> {
    let mut h = Header {
        deterministic: false,
        states: 0,
        initial: String::new(),
        vars: VarRegistry::new(),
        names: BTreeMap::new(),
    };
    let mut kind_seen = false;
    let mut body = Vec::new();
    for (ln, l) in lines(src) {
        let (head, rest) = words(l, 1).expect("non-empty line");
        match head[0] {
            "pmc" | "pmdp" if !kind_seen && rest.is_empty() => {
                h.deterministic = head[0] == "pmc";
                kind_seen = true;
            }
            "states" => h.states = rest.parse().map_err(|_| syntax(ln, "expected a state count"))?,
            "initial" => h.initial = rest.to_string(),
            "param" => {
                for name in rest.split_whitespace() {
                    h.vars.declare(name, VarKind::Parameter).map_err(|source| ParseError::Expr { line: ln, source })?;
                }
            }
            "state" => {
                let (w, name) = words(rest, 1).ok_or_else(|| syntax(ln, "expected `state ID NAME`"))?;
                let id: usize = w[0].parse().map_err(|_| syntax(ln, "state id must be an integer"))?;
                if id >= h.states {
                    return Err(ParseError::Model { line: ln, source: ModelError::StateOutOfRange(id) });
                }
                if name.is_empty() || name.contains(char::is_whitespace) || name.parse::<usize>().is_ok() || RESERVED.contains(&name) {
                    return Err(syntax(ln, "state names are single non-numeric words other than keywords"));
                }
                if h.names.insert(name.to_string(), id).is_some() {
                    return Err(syntax(ln, format!("state name `{name}` used twice")));
                }
            }
            _ => body.push((ln, l)),
        }
    }
    if !kind_seen {
        return Err(syntax(1, "missing `pmc` or `pmdp` header"));
    }
    if h.states == 0 {
        return Err(syntax(1, "missing or zero `states`"));
    }
    let initial = state_ref(&h.initial, &h, 1)?;
    let mut b = PmdpBuilder::new(h.states, initial, h.vars.clone());
    for (name, &s) in &h.names {
        b.name_state(s, name).map_err(|source| ParseError::Model { line: 1, source })?;
    }
    for (ln, l) in body {
        let model_err = |source| ParseError::Model { line: ln, source };
        if let Some(rest) = l.strip_prefix("cost ") {
            let (w, v) = words(rest, 2).ok_or_else(|| syntax(ln, "expected `cost STATE ACTION VALUE`"))?;
            let s = state_ref(w[0], &h, ln)?;
            b.cost(s, w[1], number(v, ln)?).map_err(model_err)?;
        } else if let Some(rest) = l.strip_prefix("label ") {
            let mut it = rest.split_whitespace();
            let name = it.next().ok_or_else(|| syntax(ln, "expected `label NAME STATE...`"))?;
            for tok in it {
                b.label(name, state_ref(tok, &h, ln)?).map_err(model_err)?;
            }
        } else {
            let (w, e) = words(l, 3).ok_or_else(|| syntax(ln, "expected `STATE ACTION SUCCESSOR EXPR`"))?;
            if e.is_empty() {
                return Err(syntax(ln, "missing transition probability"));
            }
            let s = state_ref(w[0], &h, ln)?;
            let t = state_ref(w[2], &h, ln)?;
            let expr = parse_signomial(e, |n| h.vars.get(n)).map_err(|source| ParseError::Expr { line: ln, source })?;
            b.transition(s, w[1], t, expr).map_err(model_err)?;
        }
    }
    let m = b.build()?;
    if h.deterministic && !m.is_pmc() {
        let s = m.choices.iter().position(|c| c.len() > 1).unwrap_or(0);
        return Err(syntax(1, format!("`pmc` model has several actions in state {s}")));
    }
    Ok(m)
}

pub fn write_model(m: &Pmdp) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", if m.is_pmc() { "pmc" } else { "pmdp" });
    let _ = writeln!(out, "states {}", m.num_states());
    let _ = writeln!(out, "initial {}", m.initial);
    let params: Vec<&str> = m.vars.iter().map(|v| m.vars.name(v)).collect();
    if !params.is_empty() {
        let _ = writeln!(out, "param {}", params.join(" "));
    }
    for (s, name) in m.state_names.iter().enumerate() {
        if *name != format!("s{s}") {
            let _ = writeln!(out, "state {s} {name}");
        }
    }
    for (s, cs) in m.choices.iter().enumerate() {
        for c in cs {
            for (t, e) in &c.transitions {
                let _ = writeln!(out, "{s} {} {t} {}", c.action, e.display(&m.vars));
            }
            if c.cost != 0.0 {
                let _ = writeln!(out, "cost {s} {} {}", c.action, c.cost);
            }
        }
    }
    for (name, states) in &m.labels {
        let ids: Vec<String> = states.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "label {name} {}", ids.join(" "));
    }
    out
}

#[derive(Clone, Debug, Default)]
pub struct SpecFile {
    pub specs: Vec<Spec>,
    /// Label whose reachability probability is maximised.
    pub maximize: Option<String>,
    pub region: Option<Region>,
}

fn parse_spec_line(l: &str, ln: usize, m: &Pmdp) -> Result<Spec, ParseError> {
    let w: Vec<&str> = l.split_whitespace().collect();
    let kind = match w.first() {
        Some(&"reach") => SpecKind::Reach,
        Some(&"expcost") => SpecKind::ExpectedCost,
        _ => return Err(syntax(ln, "expected `reach` or `expcost`")),
    };
    if w.len() != 5 || w[1] != "<=" || w[3] != "label" {
        return Err(syntax(ln, format!("expected `{} <= BOUND label NAME`", w[0])));
    }
    Spec::new(kind, number(w[2], ln)?, w[4], m).map_err(|source| ParseError::Model { line: ln, source })
}

/// Parses one region line into `region`.
fn region_line(l: &str, ln: usize, m: &Pmdp, region: &mut Region) -> Result<(), ParseError> {
    if let Some((lhs, rhs)) = l.split_once("<=") {
        let expr = parse_signomial(lhs, |n| m.vars.get(n)).map_err(|source| ParseError::Expr { line: ln, source })?;
        region.linear.push((expr, number(rhs.trim(), ln)?));
        return Ok(());
    }
    let w: Vec<&str> = l.split_whitespace().collect();
    if w.len() != 3 {
        return Err(syntax(ln, "expected `PARAM LO HI` or `EXPR <= BOUND`"));
    }
    let v = m.vars.get(w[0]).ok_or_else(|| syntax(ln, format!("unknown parameter `{}`", w[0])))?;
    let (lo, hi) = (number(w[1], ln)?, number(w[2], ln)?);
    if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
        return Err(syntax(ln, format!("bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
    }
    region.boxes.push((v, lo, hi));
    Ok(())
}

pub fn parse_specs(src: &str, m: &Pmdp) -> Result<SpecFile, ParseError> {
    let mut out = SpecFile::default();
    let mut in_region: Option<Region> = None;
    for (ln, l) in lines(src) {
        if let Some(region) = in_region.as_mut() {
            if l == "end" {
                out.region = in_region.take();
            } else {
                region_line(l, ln, m, region)?;
            }
            continue;
        }
        if l == "region" {
            if out.region.is_some() {
                return Err(syntax(ln, "more than one region block"));
            }
            in_region = Some(Region::default());
        } else if let Some(rest) = l.strip_prefix("maximize") {
            let w: Vec<&str> = rest.split_whitespace().collect();
            if w.len() != 3 || w[0] != "reach" || w[1] != "label" {
                return Err(syntax(ln, "expected `maximize reach label NAME`"));
            }
            if out.maximize.is_some() {
                return Err(syntax(ln, "more than one objective"));
            }
            if m.label(w[2]).is_none() {
                return Err(syntax(ln, format!("unknown label `{}`", w[2])));
            }
            out.maximize = Some(w[2].to_string());
        } else {
            out.specs.push(parse_spec_line(l, ln, m)?);
        }
    }
    if in_region.is_some() {
        return Err(syntax(src.lines().count(), "unterminated region block"));
    }
    Ok(out)
}

/// One region per `box` block, or the whole file as a single region.
pub fn parse_regions(src: &str, m: &Pmdp) -> Result<Vec<Region>, ParseError> {
    let mut out = Vec::new();
    let mut current: Option<Region> = None;
    let mut bare = Region::default();
    let mut bare_used = false;
    for (ln, l) in lines(src) {
        match (l, current.as_mut()) {
            ("box", None) => current = Some(Region::default()),
            ("box", Some(_)) => return Err(syntax(ln, "nested `box`")),
            ("end", Some(_)) => out.push(current.take().expect("open box")),
            ("end", None) => return Err(syntax(ln, "`end` without `box`")),
            (_, Some(r)) => region_line(l, ln, m, r)?,
            (_, None) => {
                bare_used = true;
                region_line(l, ln, m, &mut bare)?;
            }
        }
    }
    if current.is_some() {
        return Err(syntax(src.lines().count(), "unterminated box"));
    }
    if bare_used {
        if !out.is_empty() {
            return Err(syntax(1, "mixes `box` blocks with bare region lines"));
        }
        out.push(bare);
    }
    if out.is_empty() {
        return Err(syntax(1, "empty region file"));
    }
    Ok(out)
}

pub fn parse_changeable(src: &str, m: &Pmdp) -> Result<Vec<(StateId, String, StateId)>, ParseError> {
    let names: BTreeMap<&str, StateId> = m.state_names.iter().enumerate().map(|(s, n)| (n.as_str(), s)).collect();
    let state = |tok: &str, ln: usize| -> Result<StateId, ParseError> {
        if let Some(&s) = names.get(tok) {
            return Ok(s);
        }
        match tok.parse::<usize>() {
            Ok(s) if s < m.num_states() => Ok(s),
            _ => Err(syntax(ln, format!("unknown state `{tok}`"))),
        }
    };
    let mut out = Vec::new();
    for (ln, l) in lines(src) {
        let w: Vec<&str> = l.split_whitespace().collect();
        if w.len() != 3 {
            return Err(syntax(ln, "expected `STATE ACTION SUCCESSOR`"));
        }
        out.push((state(w[0], ln)?, w[1].to_string(), state(w[2], ln)?));
    }
    Ok(out)
}
