//! The dynamic grammar: core productions plus induced rules with compiled templates.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use crate::lang::{
    core_def, core_defs, named_area_def, BodySym, Category, CoreRuleDef, GrammarRule, Openness,
    Symbol, Template,
};

use super::chart::{Chart, Input};

#[derive(Debug, Clone)]
pub enum RuleSem {
    Core(Arc<CoreRuleDef>),
    Template(Template),
}

#[derive(Debug, Clone)]
pub struct CompiledRule {
    pub rule: GrammarRule,
    pub sem: RuleSem,
    pub open: Openness,
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum GrammarError {
    #[error("duplicate rule id {0}")]
    DuplicateId(String),
    #[error("unknown core rule {0}")]
    UnknownCoreRule(String),
    #[error("rule {id}: {reason}")]
    BadRule { id: String, reason: String },
}

/// Core plus induced rules. Cloning is cheap (rules are shared), so callers take
/// snapshots and mutate their own copy.
#[derive(Debug, Clone, Default)]
pub struct Grammar {
    rules: Vec<Arc<CompiledRule>>,
    area_names: BTreeSet<String>,
    by_terminal: HashMap<String, Vec<usize>>,
    slot_first: Vec<usize>,
    unary: Vec<usize>,
}

impl Grammar {
    /// Core productions only.
    pub fn core() -> Grammar {
        let mut g = Grammar::default();
        for d in core_defs() {
            g.push(Self::compile_core(d.clone()));
        }
        g.reindex();
        g
    }

    /// Core productions plus `Area → name` for each named area.
    pub fn with_area_names<'a>(names: impl IntoIterator<Item = &'a str>) -> Grammar {
        let mut g = Grammar::core();
        for n in names {
            g.add_area_name(n);
        }
        g
    }

    fn compile_core(d: Arc<CoreRuleDef>) -> CompiledRule {
        CompiledRule {
            rule: d.to_rule(),
            open: Openness::of(d.lhs, &d.rhs),
            sem: RuleSem::Core(d),
        }
    }

    fn push(&mut self, r: CompiledRule) {
        self.rules.push(Arc::new(r));
    }

    fn reindex(&mut self) {
        self.by_terminal.clear();
        self.slot_first.clear();
        self.unary.clear();
        for (i, r) in self.rules.iter().enumerate() {
            match r.rule.rhs.first() {
                Some(Symbol::Terminal(t)) => self.by_terminal.entry(t.clone()).or_default().push(i),
                Some(Symbol::Slot { .. }) if r.rule.rhs.len() == 1 => self.unary.push(i),
                Some(Symbol::Slot { .. }) => self.slot_first.push(i),
                None => {}
            }
        }
    }

    pub fn add_area_name(&mut self, name: &str) {
        if self.area_names.insert(name.to_string()) {
            self.push(Self::compile_core(named_area_def(name)));
            self.reindex();
        }
    }

    pub fn area_names(&self) -> impl Iterator<Item = &str> {
        self.area_names.iter().map(String::as_str)
    }

    pub fn rules(&self) -> impl Iterator<Item = &GrammarRule> {
        self.rules.iter().map(|r| &r.rule)
    }

    pub fn induced_rules(&self) -> impl Iterator<Item = &GrammarRule> {
        self.rules().filter(|r| !r.origin.is_core())
    }

    pub fn compiled(&self) -> &[Arc<CompiledRule>] {
        &self.rules
    }

    pub fn get(&self, id: &str) -> Option<&GrammarRule> {
        self.rules().find(|r| r.id == id)
    }

    pub fn contains_production(&self, rule: &GrammarRule) -> bool {
        self.rules().any(|r| r.same_production(rule))
    }

    /// Adds a rule, compiling the body template of induced rules.
    pub fn add_rule(&mut self, rule: GrammarRule) -> Result<(), GrammarError> {
        if self.get(&rule.id).is_some() {
            return Err(GrammarError::DuplicateId(rule.id));
        }
        let compiled = if rule.origin.is_core() {
            let d = core_def(&rule.id).ok_or_else(|| GrammarError::UnknownCoreRule(rule.id.clone()))?;
            if let crate::lang::CoreSem::Named(n) = &d.sem {
                self.area_names.insert(n.clone());
            }
            Self::compile_core(d)
        } else {
            let template = compile_template(&rule)?;
            CompiledRule {
                open: Openness::of(rule.lhs, &rule.rhs),
                rule,
                sem: RuleSem::Template(template),
            }
        };
        self.push(compiled);
        self.reindex();
        Ok(())
    }

    pub fn remove_rule(&mut self, id: &str) -> Option<GrammarRule> {
        let pos = self.rules.iter().position(|r| r.rule.id == id)?;
        let r = self.rules.remove(pos);
        self.reindex();
        Some(r.rule.clone())
    }

    /// One JSON object per line, in insertion order.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for r in self.rules() {
            out.push_str(&serde_json::to_string(r).expect("rule serializes"));
            out.push('\n');
        }
        out
    }

    pub(crate) fn rules_by_terminal(&self, t: &str) -> &[usize] {
        self.by_terminal.get(t).map(Vec::as_slice).unwrap_or(&[])
    }

    pub(crate) fn slot_first_rules(&self) -> &[usize] {
        &self.slot_first
    }

    pub(crate) fn unary_rules(&self) -> &[usize] {
        &self.unary
    }

    /// Every terminal some rule can consume.
    pub fn is_known_word(&self, w: &str) -> bool {
        self.rules
            .iter()
            .any(|r| r.rule.rhs.iter().any(|s| matches!(s, Symbol::Terminal(t) if t == w)))
    }
}

/// The category a body template of a rule with this lhs is parsed as.
pub fn body_category(lhs: Category) -> Category {
    match lhs {
        Category::Act => Category::Stmt,
        other => other,
    }
}

/// Parses the body of an induced rule into a core template.
///
/// Bodies are core-language text; tokens no core production knows are accepted as named
/// areas, since the worlds that define them need not be loaded.
pub fn compile_template(rule: &GrammarRule) -> Result<Template, GrammarError> {
    let bad = |reason: String| GrammarError::BadRule {
        id: rule.id.clone(),
        reason,
    };
    if rule.rhs.is_empty() {
        return Err(bad("empty rhs".into()));
    }
    if !rule.body_slots_valid() {
        return Err(bad("body slot out of range".into()));
    }
    if rule.rhs.len() == 1 && matches!(rule.lhs, Category::Act | Category::Stmt) {
        if let Some(c) = rule.rhs[0].category() {
            if matches!(c, Category::Act | Category::Stmt) {
                return Err(bad("unit rule over statements".into()));
            }
        }
    }
    let cats = rule.slot_categories();
    let mut g = Grammar::core();
    let mut known: HashSet<String> = HashSet::new();
    for r in g.rules() {
        for s in &r.rhs {
            if let Symbol::Terminal(t) = s {
                known.insert(t.clone());
            }
        }
    }
    let mut input = Vec::with_capacity(rule.body.len());
    for b in &rule.body {
        match b {
            BodySym::Token(t) => {
                if !known.contains(t) {
                    g.add_area_name(t);
                }
                input.push(Input::Word(t.clone()));
            }
            BodySym::Slot { slot } => input.push(Input::Slot(*slot, cats[*slot])),
        }
    }
    let target = body_category(rule.lhs);
    let chart = Chart::parse(&g, &input, crate::lang::CORE_AUTHOR, &Default::default(), usize::MAX);
    let best = chart
        .complete(target)
        .into_iter()
        .min_by(|a, b| a.structural_order(b))
        .ok_or_else(|| bad(format!("body does not parse as {target}")))?;
    best.to_template()
        .ok_or_else(|| bad("body derivation uses non-core rules".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::Origin;

    fn rule(lhs: Category, rhs: Vec<Symbol>, body: &str, slots: &[usize]) -> GrammarRule {
        let mut it = slots.iter();
        let body = body
            .split_whitespace()
            .map(|w| {
                if w == "_" {
                    BodySym::Slot {
                        slot: *it.next().unwrap(),
                    }
                } else {
                    BodySym::Token(w.into())
                }
            })
            .collect();
        GrammarRule {
            id: "t1".into(),
            lhs,
            rhs,
            body,
            author: "u".into(),
            origin: Origin::InducedBest,
            context: None,
        }
    }

    #[test]
    fn compiles_paper_best_rule() {
        let r = rule(
            Category::Act,
            vec![
                Symbol::slot(Category::ItemAct),
                Symbol::slot(Category::Num),
                Symbol::t("items"),
            ],
            "repeat _ times _ item",
            &[1, 0],
        );
        let t = compile_template(&r).unwrap();
        assert_eq!(t.category(), Category::Stmt);
        assert_eq!(t.arity(), 2);
    }

    #[test]
    fn rejects_unparsable_body() {
        let r = rule(Category::Act, vec![Symbol::t("x")], "repeat times", &[]);
        assert!(compile_template(&r).is_err());
    }

    #[test]
    fn unknown_body_tokens_become_areas() {
        let r = rule(Category::Act, vec![Symbol::t("home")], "visit kitchen", &[]);
        assert!(compile_template(&r).is_ok());
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut g = Grammar::core();
        let r = rule(Category::ItemAct, vec![Symbol::t("throw")], "drop", &[]);
        g.add_rule(r.clone()).unwrap();
        assert_eq!(g.add_rule(r), Err(GrammarError::DuplicateId("t1".into())));
    }
}
