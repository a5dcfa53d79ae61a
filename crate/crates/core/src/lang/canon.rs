//! Canonical derivation trees for programs, body templates and pretty-printing.

use std::sync::Arc;

use super::ast::*;
use super::grammar::*;
use super::token::join_tokens;

/// Precedence shape of a production, derived from its rhs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Openness {
    /// First symbol is a slot of the lhs category (`Area containing Itm`, `Stmt ; Stmt`).
    pub left: bool,
    /// Last symbol is a slot of the lhs category (`repeat Num times Stmt`, `not Fltr`).
    pub right: bool,
}

impl Openness {
    pub fn of(lhs: Category, rhs: &[Symbol]) -> Openness {
        let is_self = |s: Option<&Symbol>| s.and_then(Symbol::category) == Some(lhs);
        if rhs.len() < 2 {
            return Openness::default();
        }
        Openness {
            left: is_self(rhs.first()),
            right: is_self(rhs.last()),
        }
    }

    pub fn infix(self) -> bool {
        self.left && self.right
    }

    /// Whether a child with openness `child` may fill slot `pos` (of `n` symbols) without
    /// braces. Infix operators associate to the right and bind looser than every prefix
    /// or postfix operator of the same category.
    pub fn admits(self, pos: usize, n: usize, child: Openness) -> bool {
        if !child.infix() {
            return true;
        }
        if pos == 0 && self.left {
            return false;
        }
        if pos + 1 == n && self.right && !self.infix() {
            return false;
        }
        true
    }
}

/// A tree of core productions whose leaves may be slots referring to rule arguments.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Template {
    Node {
        rule: Arc<CoreRuleDef>,
        children: Vec<Template>,
    },
    Slot {
        index: usize,
        category: Category,
    },
}

impl Template {
    pub fn category(&self) -> Category {
        match self {
            Template::Node { rule, .. } => rule.lhs,
            Template::Slot { category, .. } => *category,
        }
    }

    fn openness(&self) -> Openness {
        match self {
            Template::Node { rule, .. } => Openness::of(rule.lhs, &rule.rhs),
            Template::Slot { .. } => Openness::default(),
        }
    }

    /// Token/slot yield of the tree.
    pub fn body(&self) -> Vec<BodySym> {
        let mut out = Vec::new();
        self.push_body(&mut out);
        out
    }

    fn push_body(&self, out: &mut Vec<BodySym>) {
        match self {
            Template::Slot { index, .. } => out.push(BodySym::Slot { slot: *index }),
            Template::Node { rule, children } => {
                let mut kids = children.iter();
                for sym in &rule.rhs {
                    match sym {
                        Symbol::Terminal(t) => out.push(BodySym::Token(t.clone())),
                        Symbol::Slot { .. } => {
                            if let Some(k) = kids.next() {
                                k.push_body(out);
                            }
                        }
                    }
                }
            }
        }
    }

    /// Highest slot index + 1.
    pub fn arity(&self) -> usize {
        match self {
            Template::Slot { index, .. } => index + 1,
            Template::Node { children, .. } => {
                children.iter().map(Template::arity).max().unwrap_or(0)
            }
        }
    }

    /// Evaluates the tree, substituting `args` for slots.
    pub fn instantiate(&self, args: &[Value]) -> Option<Value> {
        self.instantiate_as(args, self.category())
    }

    fn instantiate_as(&self, args: &[Value], want: Category) -> Option<Value> {
        match self {
            Template::Slot { index, .. } => args.get(*index)?.clone().coerce(want),
            Template::Node { rule, children } => {
                let cats = rule.rhs.iter().filter_map(Symbol::category);
                let mut vals = Vec::with_capacity(children.len());
                for (c, cat) in children.iter().zip(cats) {
                    vals.push(c.instantiate_as(args, cat)?);
                }
                apply_core(&rule.sem, rule.lhs, vals)?.coerce(want)
            }
        }
    }
}

fn def(id: &str) -> Arc<CoreRuleDef> {
    core_def(&format!("core:{id}")).unwrap_or_else(|| panic!("missing core rule {id}"))
}

fn node(id: &str, children: Vec<Template>) -> Template {
    Template::Node {
        rule: def(id),
        children,
    }
}

fn brace_rule(cat: Category) -> Option<&'static str> {
    match cat {
        Category::Stmt => Some("stmt.brace"),
        Category::Area => Some("area.brace"),
        Category::Fltr => Some("fltr.brace"),
        Category::Cnd => Some("cnd.brace"),
        _ => None,
    }
}

/// Callback deciding whether a `(category, value)` node is abstracted to a slot.
pub type Abstractor<'a> = dyn FnMut(Category, &Value) -> Option<(usize, Category)> + 'a;

struct Builder<'a, 'b> {
    abstract_fn: Option<&'a mut Abstractor<'b>>,
}

impl Builder<'_, '_> {
    fn build(&mut self, v: &Value) -> Template {
        if let Some(f) = self.abstract_fn.as_mut() {
            let cat = match v {
                // An `Act` value holding a compound statement is rendered as a statement.
                Value::Act(s) if !matches!(s, Stmt::Act(_)) => Category::Stmt,
                other => other.category(),
            };
            if let Some((index, category)) = f(cat, v) {
                return Template::Slot { index, category };
            }
        }
        let (id, kids): (String, Vec<Value>) = match v {
            Value::Stmt(s) => match s {
                Stmt::Act(_) => ("stmt.act".into(), vec![Value::Act(s.clone())]),
                Stmt::Seq(a, b) => (
                    "stmt.seq".into(),
                    vec![Value::Stmt((**a).clone()), Value::Stmt((**b).clone())],
                ),
                Stmt::Repeat(n, b) => (
                    "stmt.repeat".into(),
                    vec![Value::Num(*n), Value::Stmt((**b).clone())],
                ),
                Stmt::Foreach(a, b) => (
                    "stmt.foreach".into(),
                    vec![Value::Area(a.clone()), Value::Stmt((**b).clone())],
                ),
                Stmt::If(c, b) => (
                    "stmt.if".into(),
                    vec![Value::Cnd(c.clone()), Value::Stmt((**b).clone())],
                ),
                Stmt::While(c, b) => (
                    "stmt.while".into(),
                    vec![Value::Cnd(c.clone()), Value::Stmt((**b).clone())],
                ),
            },
            Value::Act(s) => match s {
                Stmt::Act(a) => match a {
                    Act::Visit(t) => ("act.visit".into(), vec![Value::Area(t.clone())]),
                    Act::VisitAvoiding(t, av) => (
                        "act.visit_avoiding".into(),
                        vec![Value::Area(t.clone()), Value::Area(av.clone())],
                    ),
                    Act::Move(d) => (format!("act.move.{d}"), vec![]),
                    Act::Item(k, q) => (
                        "act.item".into(),
                        vec![Value::ItemAct(*k), Value::QItm(q.clone())],
                    ),
                    Act::Strict(inner) => match &**inner {
                        Stmt::Act(_) => ("act.strict".into(), vec![Value::Act((**inner).clone())]),
                        _ => ("act.strict_block".into(), vec![Value::Stmt((**inner).clone())]),
                    },
                },
                other => return self.build(&Value::Stmt(other.clone())),
            },
            Value::ItemAct(k) => (format!("itemact.{k}"), vec![]),
            Value::Area(a) => match a {
                Area::World => ("area.world".into(), vec![]),
                Area::Point(p) => ("area.pnt".into(), vec![Value::Pnt(*p)]),
                Area::List(ps) if (2..=MAX_POINT_LIST).contains(&ps.len()) => (
                    format!("area.list{}", ps.len()),
                    ps.iter().map(|p| Value::Pnt(*p)).collect(),
                ),
                Area::List(ps) => {
                    // Not expressible as a single list literal: fold into unions.
                    let mut it = ps.iter().rev();
                    let folded = match it.next() {
                        None => Area::Minus(Box::new(Area::World), Box::new(Area::World)),
                        Some(last) => it.fold(Area::Point(*last), |acc, p| {
                            Area::Or(Box::new(Area::Point(*p)), Box::new(acc))
                        }),
                    };
                    return self.build(&Value::Area(folded));
                }
                Area::Containing(a, i) => (
                    "area.containing".into(),
                    vec![Value::Area((**a).clone()), Value::Itm(i.clone())],
                ),
                Area::And(a, b) => (
                    "area.and".into(),
                    vec![Value::Area((**a).clone()), Value::Area((**b).clone())],
                ),
                Area::Or(a, b) => (
                    "area.or".into(),
                    vec![Value::Area((**a).clone()), Value::Area((**b).clone())],
                ),
                Area::Minus(a, b) => (
                    "area.minus".into(),
                    vec![Value::Area((**a).clone()), Value::Area((**b).clone())],
                ),
                Area::Named(n) => {
                    return Template::Node {
                        rule: named_area_def(n),
                        children: vec![],
                    }
                }
            },
            Value::Pnt(p) => match p {
                Pnt::Lit(x, y) => ("pnt.lit".into(), vec![Value::Num(*x), Value::Num(*y)]),
                Pnt::Var => ("pnt.var".into(), vec![]),
            },
            Value::Num(n) => {
                if *n <= MAX_NUM {
                    (format!("num.{n}"), vec![])
                } else {
                    return Template::Node {
                        rule: Arc::new(CoreRuleDef {
                            id: format!("core:num.{n}"),
                            lhs: Category::Num,
                            rhs: vec![Symbol::t(&n.to_string())],
                            sem: CoreSem::Num(*n),
                        }),
                        children: vec![],
                    };
                }
            }
            Value::QItm(q) => match q {
                QItem::Every(i) => ("qitm.every".into(), vec![Value::Itm(i.clone())]),
                QItem::One(i) => ("qitm.one".into(), vec![Value::Itm(i.clone())]),
            },
            Value::Itm(i) => match i {
                Item::Any => ("itm.any".into(), vec![]),
                Item::Filtered(f) => ("itm.filtered".into(), vec![Value::Fltr(f.clone())]),
            },
            Value::Fltr(f) => match f {
                Filter::Is(p) => ("fltr.is".into(), vec![Value::Prop(*p)]),
                Filter::And(a, b) => (
                    "fltr.and".into(),
                    vec![Value::Fltr((**a).clone()), Value::Fltr((**b).clone())],
                ),
                Filter::Or(a, b) => (
                    "fltr.or".into(),
                    vec![Value::Fltr((**a).clone()), Value::Fltr((**b).clone())],
                ),
                Filter::Not(a) => ("fltr.not".into(), vec![Value::Fltr((**a).clone())]),
            },
            Value::Prop(p) => match p {
                Prop::Color(c) => ("prop.color".into(), vec![Value::C(*c)]),
                Prop::Shape(s) => ("prop.shape".into(), vec![Value::S(*s)]),
            },
            Value::C(c) => (format!("c.{c}"), vec![]),
            Value::S(s) => (format!("s.{s}"), vec![]),
            Value::Cnd(c) => match c {
                Cond::ItemAt(i, a) => (
                    "cnd.item_at".into(),
                    vec![Value::Itm(i.clone()), Value::Area(a.clone())],
                ),
                Cond::RobotHas(i) => ("cnd.robot_has".into(), vec![Value::Itm(i.clone())]),
                Cond::RobotAt(a) => ("cnd.robot_at".into(), vec![Value::Area(a.clone())]),
                Cond::Possible(s) => ("cnd.possible".into(), vec![Value::Stmt((**s).clone())]),
            },
        };
        let rule = def(&id);
        let open = Openness::of(rule.lhs, &rule.rhs);
        let n = rule.rhs.len();
        let slot_positions: Vec<usize> = rule
            .rhs
            .iter()
            .enumerate()
            .filter(|(_, s)| s.category().is_some())
            .map(|(i, _)| i)
            .collect();
        let children = kids
            .iter()
            .zip(slot_positions)
            .map(|(k, pos)| {
                let child = self.build(k);
                let needs_brace = !open.admits(pos, n, child.openness())
                    || (matches!(rule.sem, CoreSem::Possible) && child.openness().infix());
                match (needs_brace, brace_rule(child.category())) {
                    (true, Some(b)) => node(b, vec![child]),
                    _ => child,
                }
            })
            .collect();
        Template::Node { rule, children }
    }
}

/// Canonical core derivation of a value.
pub fn canonical(v: &Value) -> Template {
    Builder { abstract_fn: None }.build(v)
}

/// Canonical derivation with some sub-values replaced by slots.
///
/// `abstract_fn` is consulted top-down; the first (outermost) node it claims becomes a
/// slot and its subtree is not visited.
pub fn canonical_abstracted(v: &Value, abstract_fn: &mut Abstractor<'_>) -> Template {
    Builder {
        abstract_fn: Some(abstract_fn),
    }
    .build(v)
}

/// Canonical text of any value.
pub fn pretty_value(v: &Value) -> String {
    let toks: Vec<String> = canonical(v)
        .body()
        .into_iter()
        .map(|b| match b {
            BodySym::Token(t) => t,
            BodySym::Slot { slot } => format!("${slot}"),
        })
        .collect();
    join_tokens(&toks)
}

/// Canonical text of a program; `parse_core(pretty(p)) == p`.
pub fn pretty(p: &Program) -> String {
    pretty_value(&Value::Stmt(p.0.clone()))
}
