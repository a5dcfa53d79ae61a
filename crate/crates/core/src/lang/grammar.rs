//! Categories, grammar rules and the fixed core rule set.

use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::ast::*;
use super::token::join_tokens;

/// Nonterminals of the core grammar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Category {
    Stmt,
    Act,
    ItemAct,
    Area,
    Pnt,
    Num,
    QItm,
    Itm,
    Fltr,
    Prop,
    C,
    S,
    Cnd,
}

impl Category {
    pub const ALL: [Category; 13] = [
        Category::Stmt,
        Category::Act,
        Category::ItemAct,
        Category::Area,
        Category::Pnt,
        Category::Num,
        Category::QItm,
        Category::Itm,
        Category::Fltr,
        Category::Prop,
        Category::C,
        Category::S,
        Category::Cnd,
    ];

    /// Categories used by simple packing.
    pub fn is_primitive(self) -> bool {
        matches!(self, Category::Num | Category::C | Category::S)
    }

    pub fn name(self) -> &'static str {
        match self {
            Category::Stmt => "Stmt",
            Category::Act => "Act",
            Category::ItemAct => "ItemAct",
            Category::Area => "Area",
            Category::Pnt => "Pnt",
            Category::Num => "Num",
            Category::QItm => "QItm",
            Category::Itm => "Itm",
            Category::Fltr => "Fltr",
            Category::Prop => "Prop",
            Category::C => "C",
            Category::S => "S",
            Category::Cnd => "Cnd",
        }
    }

    pub fn from_name(s: &str) -> Option<Category> {
        Category::ALL.into_iter().find(|c| c.name() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One right-hand-side symbol.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Symbol {
    Terminal(String),
    Slot { slot: Category },
}

impl Symbol {
    pub fn slot(c: Category) -> Symbol {
        Symbol::Slot { slot: c }
    }

    pub fn t(s: &str) -> Symbol {
        Symbol::Terminal(s.to_string())
    }

    pub fn category(&self) -> Option<Category> {
        match self {
            Symbol::Slot { slot } => Some(*slot),
            Symbol::Terminal(_) => None,
        }
    }
}

/// One body-template symbol; slots refer to rhs slots by index.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BodySym {
    Token(String),
    Slot { slot: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    Core,
    InducedSimple,
    InducedBest,
    InducedAlign,
    InducedGeneralized,
}

impl Origin {
    pub fn is_core(self) -> bool {
        self == Origin::Core
    }
}

pub const CORE_AUTHOR: &str = "core";

/// A production, core or induced. Serialized one per line in grammar dumps.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GrammarRule {
    pub id: String,
    pub lhs: Category,
    pub rhs: Vec<Symbol>,
    pub body: Vec<BodySym>,
    pub author: String,
    pub origin: Origin,
    #[serde(default)]
    pub context: Option<String>,
}

impl GrammarRule {
    pub fn slot_categories(&self) -> Vec<Category> {
        self.rhs.iter().filter_map(Symbol::category).collect()
    }

    /// Same production regardless of id, author and context.
    pub fn same_production(&self, other: &GrammarRule) -> bool {
        self.lhs == other.lhs && self.rhs == other.rhs && self.body == other.body
    }

    pub fn rhs_text(&self) -> String {
        let toks: Vec<String> = self
            .rhs
            .iter()
            .map(|s| match s {
                Symbol::Terminal(t) => t.clone(),
                Symbol::Slot { slot } => slot.name().to_string(),
            })
            .collect();
        join_tokens(&toks)
    }

    pub fn body_text(&self) -> String {
        let cats = self.slot_categories();
        let toks: Vec<String> = self
            .body
            .iter()
            .map(|s| match s {
                BodySym::Token(t) => t.clone(),
                BodySym::Slot { slot } => cats
                    .get(*slot)
                    .map(|c| c.name().to_string())
                    .unwrap_or_else(|| format!("${slot}")),
            })
            .collect();
        join_tokens(&toks)
    }

    /// `true` when every body slot refers to an existing rhs slot.
    pub fn body_slots_valid(&self) -> bool {
        let n = self.slot_categories().len();
        self.body.iter().all(|b| match b {
            BodySym::Slot { slot } => *slot < n,
            BodySym::Token(_) => true,
        })
    }
}

impl fmt::Display for GrammarRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} → {} ::= {}", self.lhs, self.rhs_text(), self.body_text())
    }
}

/// Built-in meaning of a core production.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CoreSem {
    /// `X → { X }` and other pass-through units with no constructor of their own.
    Pass,
    StmtAct,
    Seq,
    Repeat,
    Foreach,
    If,
    While,
    Visit,
    VisitAvoiding,
    Move(Dir),
    ItemAction,
    Strict,
    ItemKind(ItemKind),
    World,
    AreaPnt,
    AreaList,
    Containing,
    AreaAnd,
    AreaOr,
    AreaMinus,
    Named(String),
    PntLit,
    PntVar,
    Num(u32),
    Every,
    One,
    AnyItem,
    Filtered,
    FltrIs,
    FltrColor,
    FltrShape,
    FltrAnd,
    FltrOr,
    FltrNot,
    PropColor,
    PropShape,
    Color(Color),
    Shape(Shape),
    ItemAt,
    RobotHas,
    RobotAt,
    Possible,
}

/// A core production together with its semantics.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CoreRuleDef {
    pub id: String,
    pub lhs: Category,
    pub rhs: Vec<Symbol>,
    pub sem: CoreSem,
}

impl CoreRuleDef {
    pub fn to_rule(&self) -> GrammarRule {
        let mut slot = 0;
        let body = self
            .rhs
            .iter()
            .map(|s| match s {
                Symbol::Terminal(t) => BodySym::Token(t.clone()),
                Symbol::Slot { .. } => {
                    slot += 1;
                    BodySym::Slot { slot: slot - 1 }
                }
            })
            .collect();
        GrammarRule {
            id: self.id.clone(),
            lhs: self.lhs,
            rhs: self.rhs.clone(),
            body,
            author: CORE_AUTHOR.to_string(),
            origin: Origin::Core,
            context: None,
        }
    }
}

/// Largest number literal in the lexicon.
pub const MAX_NUM: u32 = 99;
/// Longest point list `[Pnt, ..., Pnt]` accepted by the core grammar.
pub const MAX_POINT_LIST: usize = 9;

fn parse_rhs(spec: &str) -> Vec<Symbol> {
    spec.split_whitespace()
        .map(|w| match w.strip_prefix('$') {
            Some(c) => Symbol::slot(Category::from_name(c).expect("known category")),
            None => Symbol::t(w),
        })
        .collect()
}

fn build_core_rules() -> Vec<Arc<CoreRuleDef>> {
    use Category::*;
    let mut rules = Vec::new();
    let mut add = |id: &str, lhs: Category, rhs: &str, sem: CoreSem| {
        rules.push(Arc::new(CoreRuleDef {
            id: format!("core:{id}"),
            lhs,
            rhs: parse_rhs(rhs),
            sem,
        }));
    };

    add("stmt.act", Stmt, "$Act", CoreSem::StmtAct);
    add("stmt.seq", Stmt, "$Stmt ; $Stmt", CoreSem::Seq);
    add("stmt.repeat", Stmt, "repeat $Num times $Stmt", CoreSem::Repeat);
    add("stmt.foreach", Stmt, "foreach point in $Area $Stmt", CoreSem::Foreach);
    add("stmt.if", Stmt, "if $Cnd $Stmt", CoreSem::If);
    add("stmt.while", Stmt, "while $Cnd $Stmt", CoreSem::While);
    add("stmt.brace", Stmt, "{ $Stmt }", CoreSem::Pass);

    add("act.visit", Act, "visit $Area", CoreSem::Visit);
    add("act.visit_avoiding", Act, "visit $Area while avoiding $Area", CoreSem::VisitAvoiding);
    for d in super::ast::Dir::ALL {
        add(&format!("act.move.{d}"), Act, &format!("move {d}"), CoreSem::Move(*d));
    }
    add("act.item", Act, "$ItemAct $QItm", CoreSem::ItemAction);
    add("act.strict", Act, "strict $Act", CoreSem::Strict);
    add("act.strict_block", Act, "strict { $Stmt }", CoreSem::Strict);
    for k in ItemKind::ALL {
        add(&format!("itemact.{k}"), ItemAct, k.as_str(), CoreSem::ItemKind(*k));
    }

    add("area.world", Area, "world", CoreSem::World);
    add("area.pnt", Area, "$Pnt", CoreSem::AreaPnt);
    for n in 2..=MAX_POINT_LIST {
        let inner = vec!["$Pnt"; n].join(" , ");
        add(&format!("area.list{n}"), Area, &format!("[ {inner} ]"), CoreSem::AreaList);
    }
    add("area.containing", Area, "$Area containing $Itm", CoreSem::Containing);
    add("area.and", Area, "$Area and $Area", CoreSem::AreaAnd);
    add("area.or", Area, "$Area or $Area", CoreSem::AreaOr);
    add("area.minus", Area, "$Area minus $Area", CoreSem::AreaMinus);
    add("area.brace", Area, "{ $Area }", CoreSem::Pass);

    add("pnt.lit", Pnt, "[ $Num , $Num ]", CoreSem::PntLit);
    add("pnt.var", Pnt, "point", CoreSem::PntVar);
    for n in 0..=MAX_NUM {
        add(&format!("num.{n}"), Num, &n.to_string(), CoreSem::Num(n));
    }

    add("qitm.every", QItm, "every $Itm", CoreSem::Every);
    add("qitm.one", QItm, "$Itm", CoreSem::One);
    add("itm.any", Itm, "item", CoreSem::AnyItem);
    add("itm.filtered", Itm, "item $Fltr", CoreSem::Filtered);

    add("fltr.is", Fltr, "is $Prop", CoreSem::FltrIs);
    add("fltr.is_color", Fltr, "is color $C", CoreSem::FltrColor);
    add("fltr.is_shape", Fltr, "is shape $S", CoreSem::FltrShape);
    add("fltr.has_color", Fltr, "has color $C", CoreSem::FltrColor);
    add("fltr.has_shape", Fltr, "has shape $S", CoreSem::FltrShape);
    add("fltr.and", Fltr, "$Fltr and $Fltr", CoreSem::FltrAnd);
    add("fltr.or", Fltr, "$Fltr or $Fltr", CoreSem::FltrOr);
    add("fltr.not", Fltr, "not $Fltr", CoreSem::FltrNot);
    add("fltr.brace", Fltr, "{ $Fltr }", CoreSem::Pass);

    add("prop.color", Prop, "$C", CoreSem::PropColor);
    add("prop.shape", Prop, "$S", CoreSem::PropShape);
    for c in super::ast::Color::ALL {
        add(&format!("c.{c}"), C, c.as_str(), CoreSem::Color(*c));
    }
    for s in super::ast::Shape::ALL {
        add(&format!("s.{s}"), S, s.as_str(), CoreSem::Shape(*s));
    }

    add("cnd.item_at", Cnd, "$Itm at $Area", CoreSem::ItemAt);
    add("cnd.robot_has", Cnd, "robot has $Itm", CoreSem::RobotHas);
    add("cnd.robot_at", Cnd, "robot at $Area", CoreSem::RobotAt);
    add("cnd.possible", Cnd, "possible $Stmt", CoreSem::Possible);
    add("cnd.brace", Cnd, "{ $Cnd }", CoreSem::Pass);
    rules
}

/// The immutable core productions (without world-specific named areas).
pub fn core_defs() -> &'static [Arc<CoreRuleDef>] {
    static CORE: OnceLock<Vec<Arc<CoreRuleDef>>> = OnceLock::new();
    CORE.get_or_init(build_core_rules)
}

/// Looks up a core production by id, including `core:area.named.<name>` ids.
pub fn core_def(id: &str) -> Option<Arc<CoreRuleDef>> {
    if let Some(name) = id.strip_prefix("core:area.named.") {
        return Some(named_area_def(name));
    }
    core_defs().iter().find(|r| r.id == id).cloned()
}

pub fn named_area_def(name: &str) -> Arc<CoreRuleDef> {
    Arc::new(CoreRuleDef {
        id: format!("core:area.named.{name}"),
        lhs: Category::Area,
        rhs: vec![Symbol::t(name)],
        sem: CoreSem::Named(name.to_string()),
    })
}

/// One rule per core production, with identity bodies.
pub fn core_rules() -> Vec<GrammarRule> {
    core_defs().iter().map(|d| d.to_rule()).collect()
}

/// Core rules plus one `Area → name` rule per named area of a world.
pub fn core_rules_for<'a>(area_names: impl IntoIterator<Item = &'a str>) -> Vec<GrammarRule> {
    let mut rules = core_rules();
    rules.extend(area_names.into_iter().map(|n| named_area_def(n).to_rule()));
    rules
}

/// Semantic value of a derivation of a given category.
///
/// `Act` values carry a whole statement: induced rules with an `Act` left-hand side may
/// expand to arbitrary statements, and an `Act` only ever occurs where a statement is
/// accepted.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Value {
    Stmt(Stmt),
    Act(Stmt),
    ItemAct(ItemKind),
    Area(Area),
    Pnt(Pnt),
    Num(u32),
    QItm(QItem),
    Itm(Item),
    Fltr(Filter),
    Prop(Prop),
    C(Color),
    S(Shape),
    Cnd(Cond),
}

impl Value {
    pub fn category(&self) -> Category {
        match self {
            Value::Stmt(_) => Category::Stmt,
            Value::Act(_) => Category::Act,
            Value::ItemAct(_) => Category::ItemAct,
            Value::Area(_) => Category::Area,
            Value::Pnt(_) => Category::Pnt,
            Value::Num(_) => Category::Num,
            Value::QItm(_) => Category::QItm,
            Value::Itm(_) => Category::Itm,
            Value::Fltr(_) => Category::Fltr,
            Value::Prop(_) => Category::Prop,
            Value::C(_) => Category::C,
            Value::S(_) => Category::S,
            Value::Cnd(_) => Category::Cnd,
        }
    }

    /// Reinterprets a value for a slot of category `cat` (only `Act`/`Stmt` differ).
    pub fn coerce(self, cat: Category) -> Option<Value> {
        match (self, cat) {
            (Value::Act(s), Category::Stmt) => Some(Value::Stmt(s)),
            (Value::Stmt(s), Category::Act) => Some(Value::Act(s)),
            (v, c) if v.category() == c => Some(v),
            _ => None,
        }
    }

    pub fn into_stmt(self) -> Option<Stmt> {
        match self {
            Value::Stmt(s) | Value::Act(s) => Some(s),
            _ => None,
        }
    }
}

/// Applies a core production to the values of its slot children.
///
/// Children are assumed well-typed (the chart parser only combines matching categories);
/// a mismatch returns `None`.
pub fn apply_core(sem: &CoreSem, lhs: Category, kids: Vec<Value>) -> Option<Value> {
    fn stmt(v: Value) -> Option<Box<Stmt>> {
        v.into_stmt().map(Box::new)
    }
    fn area(v: Value) -> Option<Area> {
        match v {
            Value::Area(a) => Some(a),
            _ => None,
        }
    }
    fn item(v: Value) -> Option<Item> {
        match v {
            Value::Itm(i) => Some(i),
            _ => None,
        }
    }
    fn fltr(v: Value) -> Option<Box<Filter>> {
        match v {
            Value::Fltr(f) => Some(Box::new(f)),
            _ => None,
        }
    }
    fn num(v: Value) -> Option<u32> {
        match v {
            Value::Num(n) => Some(n),
            _ => None,
        }
    }
    fn cond(v: Value) -> Option<Cond> {
        match v {
            Value::Cnd(c) => Some(c),
            _ => None,
        }
    }
    let mut it = kids.into_iter();
    macro_rules! next {
        () => {
            it.next()?
        };
    }
    let act = |a: Act| Some(Value::Act(Stmt::Act(a)));
    match sem {
        CoreSem::Pass => next!().coerce(lhs),
        CoreSem::StmtAct => Some(Value::Stmt(next!().into_stmt()?)),
        CoreSem::Seq => {
            let a = stmt(next!())?;
            let b = stmt(next!())?;
            Some(Value::Stmt(Stmt::Seq(a, b)))
        }
        CoreSem::Repeat => {
            let n = num(next!())?;
            Some(Value::Stmt(Stmt::Repeat(n, stmt(next!())?)))
        }
        CoreSem::Foreach => {
            let a = area(next!())?;
            Some(Value::Stmt(Stmt::Foreach(a, stmt(next!())?)))
        }
        CoreSem::If => {
            let c = cond(next!())?;
            Some(Value::Stmt(Stmt::If(c, stmt(next!())?)))
        }
        CoreSem::While => {
            let c = cond(next!())?;
            Some(Value::Stmt(Stmt::While(c, stmt(next!())?)))
        }
        CoreSem::Visit => act(Act::Visit(area(next!())?)),
        CoreSem::VisitAvoiding => {
            let t = area(next!())?;
            act(Act::VisitAvoiding(t, area(next!())?))
        }
        CoreSem::Move(d) => act(Act::Move(*d)),
        CoreSem::ItemAction => {
            let k = match next!() {
                Value::ItemAct(k) => k,
                _ => return None,
            };
            let q = match next!() {
                Value::QItm(q) => q,
                _ => return None,
            };
            act(Act::Item(k, q))
        }
        CoreSem::Strict => act(Act::Strict(stmt(next!())?)),
        CoreSem::ItemKind(k) => Some(Value::ItemAct(*k)),
        CoreSem::World => Some(Value::Area(Area::World)),
        CoreSem::AreaPnt => match next!() {
            Value::Pnt(p) => Some(Value::Area(Area::Point(p))),
            _ => None,
        },
        CoreSem::AreaList => {
            let mut pts = Vec::new();
            for v in it.by_ref() {
                match v {
                    Value::Pnt(p) => pts.push(p),
                    _ => return None,
                }
            }
            Some(Value::Area(Area::List(pts)))
        }
        CoreSem::Containing => {
            let a = area(next!())?;
            Some(Value::Area(Area::Containing(Box::new(a), item(next!())?)))
        }
        CoreSem::AreaAnd | CoreSem::AreaOr | CoreSem::AreaMinus => {
            let a = Box::new(area(next!())?);
            let b = Box::new(area(next!())?);
            Some(Value::Area(match sem {
                CoreSem::AreaAnd => Area::And(a, b),
                CoreSem::AreaOr => Area::Or(a, b),
                _ => Area::Minus(a, b),
            }))
        }
        CoreSem::Named(n) => Some(Value::Area(Area::Named(n.clone()))),
        CoreSem::PntLit => {
            let x = num(next!())?;
            let y = num(next!())?;
            Some(Value::Pnt(Pnt::Lit(x, y)))
        }
        CoreSem::PntVar => Some(Value::Pnt(Pnt::Var)),
        CoreSem::Num(n) => Some(Value::Num(*n)),
        CoreSem::Every => Some(Value::QItm(QItem::Every(item(next!())?))),
        CoreSem::One => Some(Value::QItm(QItem::One(item(next!())?))),
        CoreSem::AnyItem => Some(Value::Itm(Item::Any)),
        CoreSem::Filtered => Some(Value::Itm(Item::Filtered(*fltr(next!())?))),
        CoreSem::FltrIs => match next!() {
            Value::Prop(p) => Some(Value::Fltr(Filter::Is(p))),
            _ => None,
        },
        CoreSem::FltrColor => match next!() {
            Value::C(c) => Some(Value::Fltr(Filter::Is(Prop::Color(c)))),
            _ => None,
        },
        CoreSem::FltrShape => match next!() {
            Value::S(s) => Some(Value::Fltr(Filter::Is(Prop::Shape(s)))),
            _ => None,
        },
        CoreSem::FltrAnd => {
            let a = fltr(next!())?;
            Some(Value::Fltr(Filter::And(a, fltr(next!())?)))
        }
        CoreSem::FltrOr => {
            let a = fltr(next!())?;
            Some(Value::Fltr(Filter::Or(a, fltr(next!())?)))
        }
        CoreSem::FltrNot => Some(Value::Fltr(Filter::Not(fltr(next!())?))),
        CoreSem::PropColor => match next!() {
            Value::C(c) => Some(Value::Prop(Prop::Color(c))),
            _ => None,
        },
        CoreSem::PropShape => match next!() {
            Value::S(s) => Some(Value::Prop(Prop::Shape(s))),
            _ => None,
        },
        CoreSem::Color(c) => Some(Value::C(*c)),
        CoreSem::Shape(s) => Some(Value::S(*s)),
        CoreSem::ItemAt => {
            let i = item(next!())?;
            Some(Value::Cnd(Cond::ItemAt(i, area(next!())?)))
        }
        CoreSem::RobotHas => Some(Value::Cnd(Cond::RobotHas(item(next!())?))),
        CoreSem::RobotAt => Some(Value::Cnd(Cond::RobotAt(area(next!())?))),
        CoreSem::Possible => Some(Value::Cnd(Cond::Possible(stmt(next!())?))),
    }
}
