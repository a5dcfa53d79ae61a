//! Grammar induction from an utterance and its definition: matches, packings, simple
//! packing, best packing and alignment.

use std::collections::BTreeSet;

use crate::lang::{
    canonical, canonical_abstracted, words, BodySym, Category, GrammarRule, Origin, Program,
    Symbol, Template, Value,
};
use crate::semparse::{self, Derivation, Grammar, ModelParams, ParseError};

/// Largest number of maximal packings considered.
pub const PACKING_CAP: usize = 200;

/// Id given to rules before the store assigns a real one.
pub const PENDING_ID: &str = "pending";

/// A span of x whose tokens equal the yield of a sub-derivation of y.
#[derive(Debug, Clone, PartialEq)]
pub struct Match {
    pub span_x: (usize, usize),
    pub span_y: (usize, usize),
    pub category: Category,
    pub value: Value,
    /// Pre-order index of the sub-derivation in y's tree.
    pub node: usize,
}

impl Match {
    pub fn overlaps(&self, o: &Match) -> bool {
        let ov = |a: (usize, usize), b: (usize, usize)| a.0 < b.1 && b.0 < a.1;
        ov(self.span_x, o.span_x) || ov(self.span_y, o.span_y)
    }
}

/// Pairwise non-overlapping matches, ordered by x span.
pub type Packing = Vec<Match>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InductError {
    #[error("definition not parsable: {0}")]
    DefinitionNotParsable(ParseError),
    #[error("no matches between utterance and definition")]
    NoMatches,
    #[error("utterance and definition do not align")]
    NotAlignable,
}

/// The definition as parsed for induction.
#[derive(Debug, Clone)]
pub struct Definition {
    pub tokens: Vec<String>,
    pub derivation: std::sync::Arc<Derivation>,
    pub program: Program,
}

impl Definition {
    /// Parses `y` under `g` and keeps the top-ranked derivation.
    pub fn parse(y: &str, user: &str, g: &Grammar, params: &ModelParams) -> Result<Definition, InductError> {
        let tokens = trimmed(&words(y));
        let cands =
            semparse::parse_text(y, &tokens, user, g, params).map_err(InductError::DefinitionNotParsable)?;
        let top = cands.into_iter().next().expect("parse returns at least one candidate");
        Ok(Definition {
            tokens,
            derivation: top.derivation,
            program: top.program,
        })
    }
}

fn trimmed(t: &[String]) -> Vec<String> {
    let mut v = t.to_vec();
    while v.last().is_some_and(|s| s == ";") {
        v.pop();
    }
    v
}

/// Every (x span, y sub-derivation) pair with equal token yield.
pub fn find_matches(x: &[String], y: &Definition) -> Vec<Match> {
    let mut out = Vec::new();
    for (node, d) in y.derivation.nodes().into_iter().enumerate() {
        if d.rule.is_none() {
            continue;
        }
        let Some(value) = d.value.clone() else { continue };
        let (s, e) = d.span;
        let yield_ = &y.tokens[s..e];
        let len = e - s;
        if len == 0 || len > x.len() {
            continue;
        }
        for i in 0..=(x.len() - len) {
            if &x[i..i + len] == yield_ {
                out.push(Match {
                    span_x: (i, i + len),
                    span_y: (s, e),
                    category: d.category,
                    value: value.clone(),
                    node,
                });
            }
        }
    }
    out.sort_by(|a, b| (a.span_x, a.node).cmp(&(b.span_x, b.node)));
    out
}

/// Maximal packings (no further match can be added), at most `cap` of them.
pub fn maximal_packings(matches: &[Match], cap: usize) -> Vec<Packing> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = Vec::new();
    enumerate(matches, 0, &mut cur, &mut out, cap);
    out
}

fn enumerate(ms: &[Match], i: usize, cur: &mut Vec<usize>, out: &mut Vec<Packing>, cap: usize) {
    if out.len() >= cap {
        return;
    }
    if i == ms.len() {
        let maximal = (0..ms.len())
            .all(|j| cur.contains(&j) || cur.iter().any(|&k| ms[k].overlaps(&ms[j])));
        if maximal && !cur.is_empty() {
            out.push(cur.iter().map(|&k| ms[k].clone()).collect());
        }
        return;
    }
    if cur.iter().all(|&k| !ms[k].overlaps(&ms[i])) {
        cur.push(i);
        enumerate(ms, i + 1, cur, out, cap);
        cur.pop();
    }
    enumerate(ms, i + 1, cur, out, cap);
}

fn same_meaning(cat: Category, v: &Value, m: &Match) -> bool {
    let stmtish = |c: Category| matches!(c, Category::Act | Category::Stmt);
    if stmtish(cat) && stmtish(m.category) {
        return v.clone().into_stmt() == m.value.clone().into_stmt();
    }
    cat == m.category && *v == m.value
}

/// Abstracts every occurrence of the packed values in `v`; `None` if some packed value
/// does not occur.
fn abstract_body(v: &Value, packing: &[Match]) -> Option<Vec<BodySym>> {
    let mut used = vec![false; packing.len()];
    let t: Template = canonical_abstracted(v, &mut |cat, val| {
        let i = packing.iter().position(|m| same_meaning(cat, val, m))?;
        used[i] = true;
        Some((i, packing[i].category))
    });
    used.iter().all(|u| *u).then(|| t.body())
}

/// The rule abstracting `packing` out of x and y.
pub fn rule_for_packing(
    x: &[String],
    y: &Definition,
    packing: &[Match],
    origin: Origin,
    author: &str,
) -> Option<GrammarRule> {
    let mut rhs = Vec::new();
    let mut i = 0;
    let mut packed = packing.iter().peekable();
    while i < x.len() {
        match packed.peek() {
            Some(m) if m.span_x.0 == i => {
                rhs.push(Symbol::slot(m.category));
                i = m.span_x.1;
                packed.next();
            }
            _ => {
                rhs.push(Symbol::t(&x[i]));
                i += 1;
            }
        }
    }
    if !rhs.iter().any(|s| matches!(s, Symbol::Terminal(_))) {
        return None;
    }
    let body = abstract_body(&Value::Stmt(y.program.0.clone()), packing)?;
    Some(GrammarRule {
        id: PENDING_ID.into(),
        lhs: Category::Act,
        rhs,
        body,
        author: author.into(),
        origin,
        context: None,
    })
}

/// Packs primitive-category matches greedily left to right.
pub fn simple_packing(x: &[String], y: &Definition, author: &str) -> Option<GrammarRule> {
    let mut packing: Packing = Vec::new();
    for m in find_matches(x, y) {
        if m.category.is_primitive() && packing.iter().all(|p| !p.overlaps(&m)) {
            packing.push(m);
        }
    }
    if packing.is_empty() {
        return None;
    }
    rule_for_packing(x, y, &packing, Origin::InducedSimple, author)
}

/// Model score of deriving y's program from x once `rule` is added, using the rule.
pub fn rule_score(
    x: &[String],
    y: &Definition,
    rule: &GrammarRule,
    user: &str,
    g: &Grammar,
    params: &ModelParams,
) -> Option<f64> {
    let mut g2 = g.clone();
    let mut r = rule.clone();
    r.id = "induct:candidate".into();
    g2.add_rule(r.clone()).ok()?;
    let cands = semparse::parse(x, user, &g2, params).ok()?;
    cands
        .iter()
        .filter(|c| c.program == y.program && c.derivation.rule_ids().contains(&r.id))
        .map(|c| c.score)
        .fold(None, |acc: Option<f64>, s| Some(acc.map_or(s, |a| a.max(s))))
}

/// The maximal packing whose rule scores best; ties go to the smallest serialization.
pub fn best_packing(
    x: &[String],
    y: &Definition,
    user: &str,
    g: &Grammar,
    params: &ModelParams,
) -> Result<Option<GrammarRule>, InductError> {
    let matches = find_matches(x, y);
    if matches.is_empty() {
        return Err(InductError::NoMatches);
    }
    let mut best: Option<(f64, String, GrammarRule)> = None;
    let mut seen = BTreeSet::new();
    for p in maximal_packings(&matches, PACKING_CAP) {
        let Some(rule) = rule_for_packing(x, y, &p, Origin::InducedBest, user) else {
            continue;
        };
        let key = serde_json::to_string(&rule).expect("rule serializes");
        if !seen.insert(key.clone()) {
            continue;
        }
        let Some(score) = rule_score(x, y, &rule, user, g, params) else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((s, k, _)) => score > *s || (score == *s && (key.len(), &key) < (k.len(), k)),
        };
        if better {
            best = Some((score, key, rule));
        }
    }
    Ok(best.map(|(_, _, r)| r))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Same,
    X,
    Y,
}

/// Differing regions between x and y as `(x range, y range)`, by longest common subsequence.
pub fn diff_hunks(x: &[String], y: &[String]) -> (Vec<((usize, usize), (usize, usize))>, usize) {
    let (n, m) = (x.len(), y.len());
    let mut l = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            l[i][j] = if x[i] == y[j] {
                l[i + 1][j + 1] + 1
            } else {
                l[i + 1][j].max(l[i][j + 1])
            };
        }
    }
    let mut ops = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < n || j < m {
        if i < n && j < m && x[i] == y[j] {
            ops.push(Op::Same);
            i += 1;
            j += 1;
        } else if j < m && (i == n || l[i][j + 1] >= l[i + 1][j]) {
            ops.push(Op::Y);
            j += 1;
        } else {
            ops.push(Op::X);
            i += 1;
        }
    }
    let mut hunks = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut k = 0;
    while k < ops.len() {
        if ops[k] == Op::Same {
            i += 1;
            j += 1;
            k += 1;
            continue;
        }
        let (si, sj) = (i, j);
        while k < ops.len() && ops[k] != Op::Same {
            match ops[k] {
                Op::X => i += 1,
                Op::Y => j += 1,
                Op::Same => unreachable!(),
            }
            k += 1;
        }
        hunks.push(((si, i), (sj, j)));
    }
    (hunks, l[0][0])
}

/// Substitution rules when x and y differ in at most two places.
pub fn align(x: &[String], y: &Definition, author: &str) -> Result<Vec<GrammarRule>, InductError> {
    let (hunks, common) = diff_hunks(x, &y.tokens);
    if hunks.is_empty() {
        return Ok(vec![]);
    }
    if hunks.len() > 2 || common == 0 {
        return Err(InductError::NotAlignable);
    }
    let nodes: Vec<&Derivation> = y.derivation.nodes().into_iter().filter(|d| d.rule.is_some()).collect();
    let mut out = Vec::new();
    for ((xs, xe), (ys, ye)) in hunks {
        if xs == xe || ys == ye {
            return Err(InductError::NotAlignable);
        }
        let repl = &x[xs..xe];
        let inside = |d: &Derivation| d.span.0 <= ys && ye <= d.span.1;
        // Innermost node containing the y side of the hunk (last in pre-order among the
        // smallest spans).
        let host = nodes
            .iter()
            .filter(|d| inside(d))
            .min_by_key(|d| d.span.1 - d.span.0)
            .map(|d| {
                let w = d.span.1 - d.span.0;
                *nodes
                    .iter()
                    .rev()
                    .find(|e| inside(e) && e.span.1 - e.span.0 == w)
                    .expect("exists")
            })
            .ok_or(InductError::NotAlignable)?;
        let rule = if host.span == (ys, ye) {
            GrammarRule {
                id: PENDING_ID.into(),
                lhs: host.category,
                rhs: repl.iter().map(|t| Symbol::t(t)).collect(),
                body: canonical(host.value.as_ref().ok_or(InductError::NotAlignable)?).body(),
                author: author.into(),
                origin: Origin::InducedAlign,
                context: None,
            }
        } else {
            host_substitution(host, (ys, ye), repl, &y.tokens, author)?
        };
        out.push(rule);
    }
    Ok(out)
}

/// A rule for `host` with the hunk's tokens replaced and the host's other children
/// abstracted as slots.
fn host_substitution(
    host: &Derivation,
    hunk: (usize, usize),
    repl: &[String],
    ytoks: &[String],
    author: &str,
) -> Result<GrammarRule, InductError> {
    let (ys, ye) = hunk;
    let mut kept: Vec<&Derivation> = Vec::new();
    for c in &host.children {
        let (cs, ce) = c.span;
        if ce <= ys || cs >= ye {
            kept.push(c);
        } else if !(ys <= cs && ce <= ye) {
            return Err(InductError::NotAlignable);
        }
    }
    let mut rhs = Vec::new();
    let mut pos = host.span.0;
    let mut kids = kept.iter().peekable();
    while pos < host.span.1 {
        if pos == ys {
            rhs.extend(repl.iter().map(|t| Symbol::t(t)));
            pos = ye;
            continue;
        }
        match kids.peek() {
            Some(c) if c.span.0 == pos => {
                rhs.push(Symbol::slot(c.category));
                pos = c.span.1;
                kids.next();
            }
            _ => {
                rhs.push(Symbol::t(&ytoks[pos]));
                pos += 1;
            }
        }
    }
    let packing: Packing = kept
        .iter()
        .enumerate()
        .map(|(i, c)| Match {
            span_x: (i, i + 1),
            span_y: c.span,
            category: c.category,
            value: c.value.clone().expect("parsed value"),
            node: i,
        })
        .collect();
    let body = abstract_body(host.value.as_ref().ok_or(InductError::NotAlignable)?, &packing)
        .ok_or(InductError::NotAlignable)?;
    Ok(GrammarRule {
        id: PENDING_ID.into(),
        lhs: host.category,
        rhs,
        body,
        author: author.into(),
        origin: Origin::InducedAlign,
        context: None,
    })
}

/// Simple packing, best packing and alignment rules for (x, y), without duplicates or
/// productions already in `g`. Rules carry [`PENDING_ID`].
pub fn induce(
    x: &str,
    y: &str,
    user: &str,
    g: &Grammar,
    params: &ModelParams,
) -> Result<Vec<GrammarRule>, InductError> {
    let def = Definition::parse(y, user, g, params)?;
    induce_from(&trimmed(&words(x)), &def, user, g, params)
}

/// As [`induce`], for an already parsed definition.
pub fn induce_from(
    x: &[String],
    def: &Definition,
    user: &str,
    g: &Grammar,
    params: &ModelParams,
) -> Result<Vec<GrammarRule>, InductError> {
    let mut rules = Vec::new();
    rules.extend(simple_packing(x, def, user));
    match best_packing(x, def, user, g, params) {
        Ok(r) => rules.extend(r),
        Err(InductError::NoMatches) => {}
        Err(e) => return Err(e),
    }
    if let Ok(a) = align(x, def, user) {
        rules.extend(a);
    }
    let mut out: Vec<GrammarRule> = Vec::new();
    for r in rules {
        if g.contains_production(&r) || out.iter().any(|o| o.same_production(&r)) {
            continue;
        }
        if semparse::compile_template(&r).is_err() {
            log::warn!("discarding induced rule {r}: body does not compile");
            continue;
        }
        out.push(r);
    }
    Ok(out)
}
