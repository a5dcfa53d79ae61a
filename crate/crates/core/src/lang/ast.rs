//! Abstract syntax of the core task language.

use std::fmt;

use serde::{Deserialize, Serialize};

macro_rules! keyword_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
            }

            pub fn from_word(w: &str) -> Option<Self> {
                match w { $($text => Some($name::$variant),)+ _ => None }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

keyword_enum!(Color {
    Red => "red",
    Green => "green",
    Blue => "blue",
    Yellow => "yellow",
    Black => "black",
    White => "white",
});

keyword_enum!(Shape {
    Triangle => "triangle",
    Square => "square",
    Circle => "circle",
    Star => "star",
});

keyword_enum!(
    /// Grid directions; `up` decreases y.
    Dir {
        Up => "up",
        Down => "down",
        Left => "left",
        Right => "right",
    }
);

keyword_enum!(ItemKind {
    Pick => "pick",
    Drop => "drop",
});

impl Dir {
    pub fn delta(self) -> (i64, i64) {
        match self {
            Dir::Up => (0, -1),
            Dir::Down => (0, 1),
            Dir::Left => (-1, 0),
            Dir::Right => (1, 0),
        }
    }

    pub fn opposite(self) -> Dir {
        match self {
            Dir::Up => Dir::Down,
            Dir::Down => Dir::Up,
            Dir::Left => Dir::Right,
            Dir::Right => Dir::Left,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Stmt {
    Act(Act),
    Seq(Box<Stmt>, Box<Stmt>),
    Repeat(u32, Box<Stmt>),
    Foreach(Area, Box<Stmt>),
    If(Cond, Box<Stmt>),
    While(Cond, Box<Stmt>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Act {
    Visit(Area),
    VisitAvoiding(Area, Area),
    Move(Dir),
    Item(ItemKind, QItem),
    Strict(Box<Stmt>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Area {
    World,
    Point(Pnt),
    List(Vec<Pnt>),
    Containing(Box<Area>, Item),
    And(Box<Area>, Box<Area>),
    Or(Box<Area>, Box<Area>),
    Minus(Box<Area>, Box<Area>),
    Named(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pnt {
    Lit(u32, u32),
    /// The `point` bound by the innermost enclosing `foreach`.
    Var,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum QItem {
    Every(Item),
    One(Item),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Item {
    Any,
    Filtered(Filter),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Filter {
    Is(Prop),
    And(Box<Filter>, Box<Filter>),
    Or(Box<Filter>, Box<Filter>),
    Not(Box<Filter>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Prop {
    Color(Color),
    Shape(Shape),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Cond {
    ItemAt(Item, Area),
    RobotHas(Item),
    RobotAt(Area),
    Possible(Box<Stmt>),
}

/// A complete core-language program.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Program(pub Stmt);

impl Program {
    pub fn root(&self) -> &Stmt {
        &self.0
    }
}

impl From<Stmt> for Program {
    fn from(s: Stmt) -> Self {
        Program(s)
    }
}

impl From<Act> for Program {
    fn from(a: Act) -> Self {
        Program(Stmt::Act(a))
    }
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&super::pretty(self))
    }
}

// Small constructors, mostly for tests and rewriting.
impl Stmt {
    pub fn seq(a: Stmt, b: Stmt) -> Stmt {
        Stmt::Seq(Box::new(a), Box::new(b))
    }

    /// Right-nested sequence of `stmts`; `None` when empty.
    pub fn seq_all(stmts: Vec<Stmt>) -> Option<Stmt> {
        let mut it = stmts.into_iter().rev();
        let last = it.next()?;
        Some(it.fold(last, |acc, s| Stmt::seq(s, acc)))
    }

    /// Flattens nested `Seq` nodes into execution order.
    pub fn flatten(&self) -> Vec<&Stmt> {
        let mut out = Vec::new();
        fn go<'a>(s: &'a Stmt, out: &mut Vec<&'a Stmt>) {
            match s {
                Stmt::Seq(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                other => out.push(other),
            }
        }
        go(self, &mut out);
        out
    }
}

impl Item {
    pub fn is(p: Prop) -> Item {
        Item::Filtered(Filter::Is(p))
    }
}

impl Filter {
    pub fn and(a: Filter, b: Filter) -> Filter {
        Filter::And(Box::new(a), Box::new(b))
    }
}

impl Area {
    pub fn containing(a: Area, i: Item) -> Area {
        Area::Containing(Box::new(a), i)
    }
}
