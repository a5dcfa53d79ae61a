//! The grid world (M, I, r): cells and obstacles, items, and the robot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::lang::{Area, Color, Cond, Dir, Filter, Item, Pnt, Prop, Shape};

/// A cell; (0, 0) is the top-left corner, x grows rightward and y downward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i64; 2]", into = "[i64; 2]")]
pub struct Point {
    pub x: i64,
    pub y: i64,
}

impl Point {
    pub const fn new(x: i64, y: i64) -> Point {
        Point { x, y }
    }

    pub fn step(self, d: Dir) -> Point {
        let (dx, dy) = d.delta();
        Point::new(self.x + dx, self.y + dy)
    }

    pub fn manhattan(self, o: Point) -> u64 {
        self.x.abs_diff(o.x) + self.y.abs_diff(o.y)
    }
}

impl From<[i64; 2]> for Point {
    fn from([x, y]: [i64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [i64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl From<(i64, i64)> for Point {
    fn from((x, y): (i64, i64)) -> Self {
        Point { x, y }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WorldItem {
    pub id: String,
    pub color: Color,
    pub shape: Shape,
    /// `None` while the robot carries the item.
    pub position: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Robot {
    pub position: Point,
    pub holding: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WorldError {
    #[error("unknown named area `{0}`")]
    UnknownNamedArea(String),
    #[error("invalid world: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal step: {0}")]
pub struct IllegalStep(pub String);

/// A primitive robot step.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Step {
    Move { dir: Dir },
    Pick { item: String },
    Drop { item: String },
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Move { dir } => write!(f, "move {dir}"),
            Step::Pick { item } => write!(f, "pick {item}"),
            Step::Drop { item } => write!(f, "drop {item}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "WorldFile", into = "WorldFile")]
pub struct GridWorld {
    pub width: u32,
    pub height: u32,
    pub obstacles: BTreeSet<Point>,
    pub items: BTreeMap<String, WorldItem>,
    pub robot: Robot,
    pub named_areas: BTreeMap<String, BTreeSet<Point>>,
}

impl GridWorld {
    /// Reads a world file.
    pub fn load(path: &std::path::Path) -> Result<GridWorld, WorldError> {
        let text = std::fs::read_to_string(path).map_err(|e| WorldError::Invalid(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| WorldError::Invalid(format!("{}: {e}", path.display())))
    }

    /// An empty world with the robot at the origin.
    pub fn new(width: u32, height: u32) -> GridWorld {
        GridWorld {
            width,
            height,
            obstacles: BTreeSet::new(),
            items: BTreeMap::new(),
            robot: Robot {
                position: Point::new(0, 0),
                holding: BTreeSet::new(),
            },
            named_areas: BTreeMap::new(),
        }
    }

    pub fn with_robot(mut self, x: i64, y: i64) -> Self {
        self.robot.position = Point::new(x, y);
        self
    }

    pub fn with_obstacle(mut self, x: i64, y: i64) -> Self {
        self.obstacles.insert(Point::new(x, y));
        self
    }

    pub fn with_item(mut self, id: &str, color: Color, shape: Shape, x: i64, y: i64) -> Self {
        self.items.insert(
            id.to_string(),
            WorldItem {
                id: id.to_string(),
                color,
                shape,
                position: Some(Point::new(x, y)),
            },
        );
        self
    }

    pub fn with_held_item(mut self, id: &str, color: Color, shape: Shape) -> Self {
        self.items.insert(
            id.to_string(),
            WorldItem {
                id: id.to_string(),
                color,
                shape,
                position: None,
            },
        );
        self.robot.holding.insert(id.to_string());
        self
    }

    pub fn with_named_area(mut self, name: &str, points: impl IntoIterator<Item = (i64, i64)>) -> Self {
        self.named_areas
            .insert(name.to_string(), points.into_iter().map(Point::from).collect());
        self
    }

    pub fn in_bounds(&self, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < self.width as i64 && p.y < self.height as i64
    }

    /// In bounds and not an obstacle.
    pub fn is_free(&self, p: Point) -> bool {
        self.in_bounds(p) && !self.obstacles.contains(&p)
    }

    /// All free cells, ordered by (x, y).
    pub fn free_cells(&self) -> BTreeSet<Point> {
        let mut out = BTreeSet::new();
        for x in 0..self.width as i64 {
            for y in 0..self.height as i64 {
                let p = Point::new(x, y);
                if !self.obstacles.contains(&p) {
                    out.insert(p);
                }
            }
        }
        out
    }

    /// Free neighbours in direction order up, down, left, right.
    pub fn neighbours(&self, p: Point) -> impl Iterator<Item = (Dir, Point)> + '_ {
        Dir::ALL
            .iter()
            .map(move |&d| (d, p.step(d)))
            .filter(|(_, q)| self.is_free(*q))
    }

    /// Items lying at `p`, ordered by id.
    pub fn items_at(&self, p: Point) -> Vec<&WorldItem> {
        self.items.values().filter(|i| i.position == Some(p)).collect()
    }

    /// Items carried by the robot, ordered by id.
    pub fn held_items(&self) -> Vec<&WorldItem> {
        self.robot.holding.iter().filter_map(|id| self.items.get(id)).collect()
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let bad = |m: String| Err(WorldError::Invalid(m));
        if self.width == 0 || self.height == 0 {
            return bad("empty grid".into());
        }
        if !self.is_free(self.robot.position) {
            return bad(format!("robot at blocked cell {}", self.robot.position));
        }
        for (id, it) in &self.items {
            if id != &it.id {
                return bad(format!("item key {id} differs from id {}", it.id));
            }
            let held = self.robot.holding.contains(id);
            match it.position {
                Some(p) if held => return bad(format!("item {id} is both held and placed at {p}")),
                Some(p) if !self.is_free(p) => return bad(format!("item {id} at blocked cell {p}")),
                None if !held => return bad(format!("item {id} has no position and is not held")),
                _ => {}
            }
        }
        for id in &self.robot.holding {
            if !self.items.contains_key(id) {
                return bad(format!("robot holds unknown item {id}"));
            }
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn content_hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("world serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Applies one step in place; on error the world is unchanged.
    pub fn apply(&mut self, s: &Step) -> Result<(), IllegalStep> {
        match s {
            Step::Move { dir } => {
                let to = self.robot.position.step(*dir);
                if !self.is_free(to) {
                    return Err(IllegalStep(format!("cannot move {dir} into {to}")));
                }
                self.robot.position = to;
            }
            Step::Pick { item } => {
                let here = self.robot.position;
                match self.items.get_mut(item) {
                    Some(it) if it.position == Some(here) => {
                        it.position = None;
                        self.robot.holding.insert(item.clone());
                    }
                    _ => return Err(IllegalStep(format!("no item {item} at {here}"))),
                }
            }
            Step::Drop { item } => {
                if !self.robot.holding.remove(item) {
                    return Err(IllegalStep(format!("robot does not hold {item}")));
                }
                if let Some(it) = self.items.get_mut(item) {
                    it.position = Some(self.robot.position);
                }
            }
        }
        Ok(())
    }
}

/// Returns the world after `s`.
pub fn step(w: &GridWorld, s: &Step) -> Result<GridWorld, IllegalStep> {
    let mut next = w.clone();
    next.apply(s)?;
    Ok(next)
}

pub fn prop_holds(p: Prop, it: &WorldItem) -> bool {
    match p {
        Prop::Color(c) => it.color == c,
        Prop::Shape(s) => it.shape == s,
    }
}

pub fn filter_matches(f: &Filter, it: &WorldItem) -> bool {
    match f {
        Filter::Is(p) => prop_holds(*p, it),
        Filter::And(a, b) => filter_matches(a, it) && filter_matches(b, it),
        Filter::Or(a, b) => filter_matches(a, it) || filter_matches(b, it),
        Filter::Not(a) => !filter_matches(a, it),
    }
}

pub fn item_matches(i: &Item, it: &WorldItem) -> bool {
    match i {
        Item::Any => true,
        Item::Filtered(f) => filter_matches(f, it),
    }
}

/// The items of `scope` matching `i`, in scope order.
pub fn eval_items<'a>(i: &Item, scope: impl IntoIterator<Item = &'a WorldItem>) -> Vec<&'a WorldItem> {
    scope.into_iter().filter(|it| item_matches(i, it)).collect()
}

/// Evaluates `area` to a set of free cells. `point` binds the innermost `foreach` point;
/// outside any `foreach` it denotes the empty set.
pub fn eval_area(area: &Area, w: &GridWorld, point: Option<Point>) -> Result<BTreeSet<Point>, WorldError> {
    let pnt = |p: &Pnt| -> Option<Point> {
        match p {
            Pnt::Lit(x, y) => Some(Point::new(*x as i64, *y as i64)),
            Pnt::Var => point,
        }
    };
    Ok(match area {
        Area::World => w.free_cells(),
        Area::Point(p) => pnt(p).filter(|q| w.is_free(*q)).into_iter().collect(),
        Area::List(ps) => ps.iter().filter_map(pnt).filter(|q| w.is_free(*q)).collect(),
        Area::Containing(a, i) => eval_area(a, w, point)?
            .into_iter()
            .filter(|p| w.items_at(*p).iter().any(|it| item_matches(i, it)))
            .collect(),
        Area::And(a, b) => {
            let b = eval_area(b, w, point)?;
            eval_area(a, w, point)?.intersection(&b).copied().collect()
        }
        Area::Or(a, b) => {
            let mut s = eval_area(a, w, point)?;
            s.extend(eval_area(b, w, point)?);
            s
        }
        Area::Minus(a, b) => {
            let b = eval_area(b, w, point)?;
            eval_area(a, w, point)?.difference(&b).copied().collect()
        }
        Area::Named(n) => w
            .named_areas
            .get(n)
            .ok_or_else(|| WorldError::UnknownNamedArea(n.clone()))?
            .iter()
            .copied()
            .filter(|q| w.is_free(*q))
            .collect(),
    })
}

/// Evaluates a condition; `possible S` simulates S on a copy of `w`.
pub fn eval_cond(c: &Cond, w: &GridWorld, point: Option<Point>) -> Result<bool, WorldError> {
    Ok(match c {
        Cond::ItemAt(i, a) => eval_area(a, w, point)?
            .into_iter()
            .any(|p| w.items_at(p).iter().any(|it| item_matches(i, it))),
        Cond::RobotHas(i) => w.held_items().iter().any(|it| item_matches(i, it)),
        Cond::RobotAt(a) => eval_area(a, w, point)?.contains(&w.robot.position),
        Cond::Possible(s) => crate::exec::realizable_at(s, w, point),
    })
}

#[derive(Serialize, Deserialize)]
struct ItemEntry {
    id: String,
    color: Color,
    shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    x: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    y: Option<i64>,
}

#[derive(Serialize, Deserialize)]
struct RobotEntry {
    x: i64,
    y: i64,
    #[serde(default)]
    holding: Vec<String>,
}

/// On-disk layout of a world file.
#[derive(Serialize, Deserialize)]
struct WorldFile {
    width: u32,
    height: u32,
    #[serde(default)]
    obstacles: Vec<[i64; 2]>,
    #[serde(default)]
    items: Vec<ItemEntry>,
    robot: RobotEntry,
    #[serde(default)]
    named_areas: BTreeMap<String, Vec<[i64; 2]>>,
}

impl TryFrom<WorldFile> for GridWorld {
    type Error = WorldError;

    fn try_from(f: WorldFile) -> Result<Self, WorldError> {
        let mut items = BTreeMap::new();
        for e in f.items {
            let position = match (e.x, e.y) {
                (Some(x), Some(y)) => Some(Point::new(x, y)),
                (None, None) => None,
                _ => return Err(WorldError::Invalid(format!("item {} has only one coordinate", e.id))),
            };
            let it = WorldItem {
                id: e.id.clone(),
                color: e.color,
                shape: e.shape,
                position,
            };
            if items.insert(e.id.clone(), it).is_some() {
                return Err(WorldError::Invalid(format!("duplicate item id {}", e.id)));
            }
        }
        let w = GridWorld {
            width: f.width,
            height: f.height,
            obstacles: f.obstacles.into_iter().map(Point::from).collect(),
            items,
            robot: Robot {
                position: Point::new(f.robot.x, f.robot.y),
                holding: f.robot.holding.into_iter().collect(),
            },
            named_areas: f
                .named_areas
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().map(Point::from).collect()))
                .collect(),
        };
        w.validate()?;
        Ok(w)
    }
}

impl From<GridWorld> for WorldFile {
    fn from(w: GridWorld) -> Self {
        WorldFile {
            width: w.width,
            height: w.height,
            obstacles: w.obstacles.into_iter().map(Into::into).collect(),
            items: w
                .items
                .into_values()
                .map(|i| ItemEntry {
                    id: i.id,
                    color: i.color,
                    shape: i.shape,
                    x: i.position.map(|p| p.x),
                    y: i.position.map(|p| p.y),
                })
                .collect(),
            robot: RobotEntry {
                x: w.robot.position.x,
                y: w.robot.position.y,
                holding: w.robot.holding.into_iter().collect(),
            },
            named_areas: w
                .named_areas
                .into_iter()
                .map(|(k, v)| (k, v.into_iter().map(Into::into).collect()))
                .collect(),
        }
    }
}
