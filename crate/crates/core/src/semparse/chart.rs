//! Bottom-up chart parsing over arbitrary-length productions with per-cell beams.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use crate::lang::{apply_core, Category, Program, Symbol, Template, Value};

use super::grammar::{CompiledRule, Grammar, RuleSem};
use super::model::{local_features, FeatureVector, ModelParams, F_COVERAGE, F_DEPTH};

/// One input position: a word, or (when compiling templates) a typed placeholder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Input {
    Word(String),
    Slot(usize, Category),
}

/// One weighted parse tree over a token span.
#[derive(Debug, Clone)]
pub struct Derivation {
    /// `None` for template placeholders.
    pub rule: Option<Arc<CompiledRule>>,
    pub slot: Option<usize>,
    pub category: Category,
    /// Token span `[start, end)`.
    pub span: (usize, usize),
    pub children: Vec<Arc<Derivation>>,
    /// `None` only below template placeholders.
    pub value: Option<Value>,
    /// Sum of θ·φ over the rule applications in the tree.
    pub additive: f64,
    pub depth: u32,
    pub hash: u64,
    /// Model score θ·φ(d).
    pub score: f64,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl Derivation {
    pub fn program(&self) -> Option<Program> {
        self.value.clone()?.into_stmt().map(Program)
    }

    pub fn rule_id(&self) -> Option<&str> {
        self.rule.as_ref().map(|r| r.rule.id.as_str())
    }

    /// Feature counts φ(d) for user `user`, over an utterance of `n_tokens` tokens.
    pub fn features(&self, user: &str, n_tokens: usize) -> FeatureVector {
        let mut phi = FeatureVector::new();
        self.walk(&mut |d| {
            if let Some(r) = &d.rule {
                for (k, v) in local_features(&r.rule, user) {
                    *phi.entry(k).or_insert(0.0) += v;
                }
            }
        });
        phi.insert(F_DEPTH.to_string(), self.depth as f64);
        phi.insert(F_COVERAGE.to_string(), coverage(self.span, n_tokens));
        phi
    }

    /// Pre-order traversal.
    pub fn walk<'a>(&'a self, f: &mut dyn FnMut(&'a Derivation)) {
        f(self);
        for c in &self.children {
            c.walk(f);
        }
    }

    /// All sub-derivations in pre-order, including `self`.
    pub fn nodes(&self) -> Vec<&Derivation> {
        let mut out = Vec::new();
        self.walk(&mut |d| out.push(d));
        out
    }

    /// Ids of every rule used, in pre-order.
    pub fn rule_ids(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.walk(&mut |d| {
            if let Some(id) = d.rule_id() {
                out.push(id.to_string());
            }
        });
        out
    }

    /// Leftmost-longest structural order, then rule id.
    pub fn structural_order(&self, other: &Derivation) -> Ordering {
        let key = |d: &Derivation| {
            let mut k: Vec<(usize, std::cmp::Reverse<usize>, String)> = Vec::new();
            d.walk(&mut |n| {
                k.push((
                    n.span.0,
                    std::cmp::Reverse(n.span.1 - n.span.0),
                    n.rule_id().unwrap_or("").to_string(),
                ))
            });
            k
        };
        key(self).cmp(&key(other))
    }

    /// The tree as a core template; `None` if any non-core rule occurs.
    pub fn to_template(&self) -> Option<Template> {
        if let Some(i) = self.slot {
            return Some(Template::Slot {
                index: i,
                category: self.category,
            });
        }
        match &self.rule.as_ref()?.sem {
            RuleSem::Core(def) => Some(Template::Node {
                rule: def.clone(),
                children: self
                    .children
                    .iter()
                    .map(|c| c.to_template())
                    .collect::<Option<_>>()?,
            }),
            RuleSem::Template(_) => None,
        }
    }

    /// Bracketed rendering for debugging and logs.
    pub fn render(&self) -> String {
        match &self.rule {
            None => format!("${}", self.slot.unwrap_or(0)),
            Some(r) if self.children.is_empty() => r.rule.id.clone(),
            Some(r) => format!(
                "({} {})",
                r.rule.id,
                self.children.iter().map(|c| c.render()).collect::<Vec<_>>().join(" ")
            ),
        }
    }
}

fn coverage(span: (usize, usize), n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        (span.1 - span.0) as f64 / n as f64
    }
}

/// Ranking order: higher score first, then lower hash.
pub fn rank_order(a: &Derivation, b: &Derivation) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then(a.hash.cmp(&b.hash))
}

type Cell = BTreeMap<Category, Vec<Arc<Derivation>>>;

pub struct Chart {
    n: usize,
    /// `cells[start][len - 1]`.
    cells: Vec<Vec<Cell>>,
}

const UNARY_PASSES: usize = 6;

struct Ctx<'a> {
    grammar: &'a Grammar,
    input: &'a [Input],
    rule_weight: Vec<f64>,
    w_depth: f64,
    w_cov: f64,
    beam: usize,
}

impl Chart {
    /// Parses `input` with every rule of `grammar`, keeping the `beam` best derivations
    /// per (span, category).
    pub fn parse(
        grammar: &Grammar,
        input: &[Input],
        user: &str,
        params: &ModelParams,
        beam: usize,
    ) -> Chart {
        let n = input.len();
        let rule_weight = grammar
            .compiled()
            .iter()
            .map(|r| {
                local_features(&r.rule, user)
                    .iter()
                    .map(|(k, v)| params.weight(k) * v)
                    .sum()
            })
            .collect();
        let ctx = Ctx {
            grammar,
            input,
            rule_weight,
            w_depth: params.weight(F_DEPTH),
            w_cov: params.weight(F_COVERAGE),
            beam: beam.max(1),
        };
        let mut chart = Chart {
            n,
            cells: (0..n).map(|i| vec![Cell::new(); n - i]).collect(),
        };
        for len in 1..=n {
            for start in 0..=(n - len) {
                let cell = chart.fill(&ctx, start, start + len);
                chart.cells[start][len - 1] = cell;
            }
        }
        chart
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn cell(&self, start: usize, end: usize) -> Option<&Cell> {
        if end <= start || end > self.n {
            return None;
        }
        self.cells.get(start)?.get(end - start - 1)
    }

    pub fn get(&self, start: usize, end: usize, cat: Category) -> &[Arc<Derivation>] {
        self.cell(start, end)
            .and_then(|c| c.get(&cat))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// Full-span derivations of `cat`, best first.
    pub fn complete(&self, cat: Category) -> Vec<Arc<Derivation>> {
        if self.n == 0 {
            return Vec::new();
        }
        self.get(0, self.n, cat).to_vec()
    }

    fn make(
        &self,
        ctx: &Ctx<'_>,
        idx: usize,
        rule: &Arc<CompiledRule>,
        span: (usize, usize),
        children: Vec<Arc<Derivation>>,
    ) -> Option<Derivation> {
        let slot_cats: Vec<Category> = rule.rule.slot_categories();
        let n_sym = rule.rule.rhs.len();
        // Precedence: reject same-category infix children in open positions.
        let mut slot_i = 0;
        for (pos, sym) in rule.rule.rhs.iter().enumerate() {
            if sym.category().is_some() {
                let child = &children[slot_i];
                let child_open = child.rule.as_ref().map(|r| r.open).unwrap_or_default();
                if !rule.open.admits(pos, n_sym, child_open) {
                    return None;
                }
                slot_i += 1;
            }
        }
        let value = if children.iter().all(|c| c.value.is_some()) {
            let vals: Vec<Value> = children
                .iter()
                .zip(&slot_cats)
                .map(|(c, cat)| c.value.clone().and_then(|v| v.coerce(*cat)))
                .collect::<Option<_>>()?;
            let v = match &rule.sem {
                RuleSem::Core(def) => apply_core(&def.sem, rule.rule.lhs, vals)?,
                RuleSem::Template(t) => t.instantiate(&vals)?.coerce(rule.rule.lhs)?,
            };
            Some(v)
        } else {
            None
        };
        let additive = ctx.rule_weight[idx] + children.iter().map(|c| c.additive).sum::<f64>();
        let depth = 1 + children.iter().map(|c| c.depth).max().unwrap_or(0);
        let mut h = fnv(FNV_OFFSET, rule.rule.id.as_bytes());
        h = fnv(h, &(span.0 as u64).to_le_bytes());
        h = fnv(h, &(span.1 as u64).to_le_bytes());
        for c in &children {
            h = fnv(h, &c.hash.to_le_bytes());
        }
        let score = additive + ctx.w_depth * depth as f64 + ctx.w_cov * coverage(span, self.n);
        Some(Derivation {
            rule: Some(rule.clone()),
            slot: None,
            category: rule.rule.lhs,
            span,
            children,
            value,
            additive,
            depth,
            hash: h,
            score,
        })
    }

    fn fill(&self, ctx: &Ctx<'_>, start: usize, end: usize) -> Cell {
        let mut cell = Cell::new();
        let mut seen: HashSet<u64> = HashSet::new();
        let mut push = |cell: &mut Cell, d: Derivation| {
            let fresh = seen.insert(d.hash);
            if fresh {
                cell.entry(d.category).or_default().push(Arc::new(d));
            }
            fresh
        };
        if end - start == 1 {
            if let Input::Slot(i, cat) = &ctx.input[start] {
                let h = fnv(fnv(FNV_OFFSET, b"$slot"), &(*i as u64).to_le_bytes());
                push(
                    &mut cell,
                    Derivation {
                        rule: None,
                        slot: Some(*i),
                        category: *cat,
                        span: (start, end),
                        children: vec![],
                        value: None,
                        additive: 0.0,
                        depth: 0,
                        hash: h,
                        score: 0.0,
                    },
                );
            }
        }
        let first_word = match &ctx.input[start] {
            Input::Word(w) => Some(w.as_str()),
            Input::Slot(..) => None,
        };
        let candidates = first_word
            .map(|w| ctx.grammar.rules_by_terminal(w))
            .unwrap_or(&[])
            .iter()
            .chain(ctx.grammar.slot_first_rules());
        for &idx in candidates {
            let rule = &ctx.grammar.compiled()[idx];
            if rule.rule.rhs.len() > end - start {
                continue;
            }
            let mut splits = Vec::new();
            self.split(ctx, &rule.rule.rhs, start, end, &mut Vec::new(), &mut splits);
            for spans in splits {
                let lists: Vec<&[Arc<Derivation>]> = spans
                    .iter()
                    .map(|&(s, e, c)| self.get(s, e, c))
                    .collect();
                for children in product(&lists) {
                    if let Some(d) = self.make(ctx, idx, rule, (start, end), children) {
                        push(&mut cell, d);
                    }
                }
            }
        }
        // Unary closure within the span.
        for _ in 0..UNARY_PASSES {
            let mut added = false;
            for &idx in ctx.grammar.unary_rules() {
                let rule = &ctx.grammar.compiled()[idx];
                let Some(child_cat) = rule.rule.rhs[0].category() else {
                    continue;
                };
                let kids: Vec<Arc<Derivation>> = cell.get(&child_cat).cloned().unwrap_or_default();
                for k in kids {
                    if let Some(d) = self.make(ctx, idx, rule, (start, end), vec![k]) {
                        added |= push(&mut cell, d);
                    }
                }
            }
            if !added {
                break;
            }
        }
        for list in cell.values_mut() {
            list.sort_by(|a, b| rank_order(a, b));
            list.truncate(ctx.beam);
        }
        cell
    }

    /// Enumerates slot span assignments matching `rhs` exactly over `[pos, end)`.
    fn split(
        &self,
        ctx: &Ctx<'_>,
        rhs: &[Symbol],
        pos: usize,
        end: usize,
        acc: &mut Vec<(usize, usize, Category)>,
        out: &mut Vec<Vec<(usize, usize, Category)>>,
    ) {
        let Some((sym, rest)) = rhs.split_first() else {
            if pos == end {
                out.push(acc.clone());
            }
            return;
        };
        if end - pos < rhs.len() {
            return;
        }
        match sym {
            Symbol::Terminal(t) => {
                if matches!(&ctx.input[pos], Input::Word(w) if w == t) {
                    self.split(ctx, rest, pos + 1, end, acc, out);
                }
            }
            Symbol::Slot { slot } => {
                let max_end = end - rest.len();
                for e in (pos + 1)..=max_end {
                    if rest.is_empty() && e != end {
                        continue;
                    }
                    if self.get(pos, e, *slot).is_empty() {
                        continue;
                    }
                    acc.push((pos, e, *slot));
                    self.split(ctx, rest, e, end, acc, out);
                    acc.pop();
                }
            }
        }
    }

    /// The furthest token position a partial parse from the start reaches, with the
    /// symbols (terminals or category names) that could continue there.
    pub fn stuck_point(&self, grammar: &Grammar, input: &[Input]) -> (usize, Vec<String>) {
        let n = self.n;
        let mut reach = vec![false; n + 1];
        reach[0] = true;
        let mut expected: Vec<std::collections::BTreeSet<String>> = vec![Default::default(); n + 1];
        for s in 0..=n {
            if !reach[s] {
                continue;
            }
            for rule in grammar.compiled() {
                self.walk_prefix(input, &rule.rule.rhs, s, false, &mut reach, &mut expected);
            }
        }
        let pos = (0..=n).rev().find(|&p| !expected[p].is_empty()).unwrap_or(0);
        (pos, expected[pos].iter().cloned().collect())
    }

    fn walk_prefix(
        &self,
        input: &[Input],
        rhs: &[Symbol],
        at: usize,
        consumed: bool,
        reach: &mut [bool],
        expected: &mut [std::collections::BTreeSet<String>],
    ) {
        let Some((sym, rest)) = rhs.split_first() else {
            return;
        };
        if consumed {
            expected[at].insert(match sym {
                Symbol::Terminal(t) => t.clone(),
                Symbol::Slot { slot } => slot.name().to_string(),
            });
        }
        match sym {
            Symbol::Terminal(t) => {
                if matches!(input.get(at), Some(Input::Word(w)) if w == t) {
                    self.walk_prefix(input, rest, at + 1, true, reach, expected);
                }
            }
            Symbol::Slot { slot } => {
                reach[at] = true;
                for e in (at + 1)..=self.n {
                    if !self.get(at, e, *slot).is_empty() {
                        self.walk_prefix(input, rest, e, true, reach, expected);
                    }
                }
            }
        }
    }
}

/// Cartesian product of derivation lists.
fn product(lists: &[&[Arc<Derivation>]]) -> Vec<Vec<Arc<Derivation>>> {
    let mut out: Vec<Vec<Arc<Derivation>>> = vec![Vec::new()];
    for list in lists {
        let mut next = Vec::with_capacity(out.len() * list.len());
        for prefix in &out {
            for d in list.iter() {
                let mut v = prefix.clone();
                v.push(d.clone());
                next.push(v);
            }
        }
        out = next;
    }
    out
}
