//! Interpreter for core programs: control flow, lenient and strict realizability, traces.

use serde::{Deserialize, Serialize};

use crate::lang::{Act, Item, ItemKind, Program, QItem, Stmt};
use crate::planner::{shortest_path, visit_order, PathQuery};
use crate::world::{eval_area, eval_cond, item_matches, GridWorld, Point, Step};

/// Iterations after which a `while` loop is abandoned with a warning.
pub const WHILE_CAP: usize = 10_000;

/// A part of the program that could not be realized.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Warning {
    /// Dotted child indices from the root statement; empty for the root.
    pub path: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trace {
    pub steps: Vec<Step>,
    pub warnings: Vec<Warning>,
    #[serde(skip)]
    pub final_world: Option<GridWorld>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExecOutcome {
    pub trace: Trace,
    pub world: GridWorld,
    pub realizable: bool,
}

/// Runs `p` on a copy of `w` in lenient mode.
pub fn execute(p: &Program, w: &GridWorld) -> ExecOutcome {
    run(p.root(), w, None)
}

/// True iff executing `p` on `w` yields no warnings.
pub fn realizable(p: &Program, w: &GridWorld) -> bool {
    realizable_at(p.root(), w, None)
}

pub(crate) fn realizable_at(s: &Stmt, w: &GridWorld, point: Option<Point>) -> bool {
    run(s, w, point).realizable
}

fn run(s: &Stmt, w: &GridWorld, point: Option<Point>) -> ExecOutcome {
    let mut m = Machine {
        world: w.clone(),
        steps: Vec::new(),
        warnings: Vec::new(),
        path: Vec::new(),
    };
    m.stmt(s, point);
    ExecOutcome {
        realizable: m.warnings.is_empty(),
        trace: Trace {
            steps: m.steps,
            warnings: m.warnings,
            final_world: Some(m.world.clone()),
        },
        world: m.world,
    }
}

/// Resolves a warning path to the statement it names.
pub fn node_at<'a>(root: &'a Stmt, path: &str) -> Option<&'a Stmt> {
    let mut cur = root;
    if path.is_empty() {
        return Some(cur);
    }
    for part in path.split('.') {
        let i: usize = part.parse().ok()?;
        cur = match (cur, i) {
            (Stmt::Seq(a, _), 0) => a,
            (Stmt::Seq(_, b), 1) => b,
            (Stmt::Repeat(_, b) | Stmt::Foreach(_, b) | Stmt::If(_, b) | Stmt::While(_, b), 0) => b,
            (Stmt::Act(Act::Strict(b)), 0) => b,
            _ => return None,
        };
    }
    Some(cur)
}

/// Replays `steps` from `w`.
pub fn replay(w: &GridWorld, steps: &[Step]) -> Result<GridWorld, crate::world::IllegalStep> {
    let mut cur = w.clone();
    for s in steps {
        cur.apply(s)?;
    }
    Ok(cur)
}

struct Machine {
    world: GridWorld,
    steps: Vec<Step>,
    warnings: Vec<Warning>,
    path: Vec<usize>,
}

impl Machine {
    fn warn(&mut self, reason: impl Into<String>) {
        let path = self.path.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(".");
        self.warnings.push(Warning {
            path,
            reason: reason.into(),
        });
    }

    fn emit(&mut self, s: Step) {
        self.world.apply(&s).expect("planned step is legal");
        self.steps.push(s);
    }

    fn child(&mut self, i: usize, s: &Stmt, point: Option<Point>) {
        self.path.push(i);
        self.stmt(s, point);
        self.path.pop();
    }

    fn stmt(&mut self, s: &Stmt, point: Option<Point>) {
        match s {
            Stmt::Act(a) => self.act(a, point),
            Stmt::Seq(a, b) => {
                self.child(0, a, point);
                self.child(1, b, point);
            }
            Stmt::Repeat(n, body) => {
                for _ in 0..*n {
                    self.child(0, body, point);
                }
            }
            Stmt::Foreach(area, body) => {
                let sites = match eval_area(area, &self.world, point) {
                    Ok(s) => s,
                    Err(e) => return self.warn(e.to_string()),
                };
                let order = visit_order(self.world.robot.position, &sites, &self.world);
                for p in &order.unreachable {
                    self.warn(format!("cannot reach {p}"));
                }
                for site in order.order {
                    if !self.goto(site) {
                        self.warn(format!("cannot reach {site}"));
                        continue;
                    }
                    self.child(0, body, Some(site));
                }
            }
            Stmt::If(c, body) => match eval_cond(c, &self.world, point) {
                Ok(true) => self.child(0, body, point),
                Ok(false) => {}
                Err(e) => self.warn(e.to_string()),
            },
            Stmt::While(c, body) => {
                for _ in 0..WHILE_CAP {
                    match eval_cond(c, &self.world, point) {
                        Ok(true) => self.child(0, body, point),
                        Ok(false) => return,
                        Err(e) => return self.warn(e.to_string()),
                    }
                }
                self.warn(format!("loop stopped after {WHILE_CAP} iterations"));
            }
        }
    }

    fn goto(&mut self, site: Point) -> bool {
        let q = PathQuery::to(self.world.robot.position, [site].into());
        match shortest_path(&q, &self.world) {
            Ok(p) => {
                for d in p.moves {
                    self.emit(Step::Move { dir: d });
                }
                true
            }
            Err(_) => false,
        }
    }

    fn act(&mut self, a: &Act, point: Option<Point>) {
        match a {
            Act::Visit(t) | Act::VisitAvoiding(t, _) => {
                let targets = match eval_area(t, &self.world, point) {
                    Ok(t) => t,
                    Err(e) => return self.warn(e.to_string()),
                };
                let avoid = match a {
                    Act::VisitAvoiding(_, av) => match eval_area(av, &self.world, point) {
                        Ok(s) => s,
                        Err(e) => return self.warn(e.to_string()),
                    },
                    _ => Default::default(),
                };
                if targets.is_empty() {
                    return self.warn("no location to visit");
                }
                let q = PathQuery {
                    start: self.world.robot.position,
                    targets,
                    avoid,
                };
                match shortest_path(&q, &self.world) {
                    Ok(p) => {
                        for d in p.moves {
                            self.emit(Step::Move { dir: d });
                        }
                    }
                    Err(_) => self.warn("no path to the target area"),
                }
            }
            Act::Move(d) => {
                let to = self.world.robot.position.step(*d);
                if self.world.is_free(to) {
                    self.emit(Step::Move { dir: *d });
                } else {
                    self.warn(format!("cannot move {d} from {}", self.world.robot.position));
                }
            }
            Act::Item(kind, q) => self.item_action(*kind, q),
            Act::Strict(body) => {
                let trial = run(body, &self.world, point);
                if trial.realizable {
                    self.steps.extend(trial.trace.steps);
                    self.world = trial.world;
                } else {
                    let first = &trial.trace.warnings[0];
                    self.warn(format!("strict block not realizable: {}", first.reason));
                }
            }
        }
    }

    fn item_action(&mut self, kind: ItemKind, q: &QItem) {
        let (item, every) = match q {
            QItem::Every(i) => (i, true),
            QItem::One(i) => (i, false),
        };
        let pool: Vec<String> = match kind {
            ItemKind::Pick => self.world.items_at(self.world.robot.position),
            ItemKind::Drop => self.world.held_items(),
        }
        .into_iter()
        .filter(|it| item_matches(item, it))
        .map(|it| it.id.clone())
        .collect();
        let chosen: Vec<String> = if every {
            pool
        } else {
            match pool.into_iter().next() {
                Some(id) => vec![id],
                None => return self.warn(missing(kind, item)),
            }
        };
        for id in chosen {
            self.emit(match kind {
                ItemKind::Pick => Step::Pick { item: id },
                ItemKind::Drop => Step::Drop { item: id },
            });
        }
    }
}

fn missing(kind: ItemKind, item: &Item) -> String {
    let what = crate::lang::pretty(&Program(Stmt::Act(Act::Item(kind, QItem::One(item.clone())))));
    match kind {
        ItemKind::Pick => format!("nothing to pick here for `{what}`"),
        ItemKind::Drop => format!("robot holds nothing for `{what}`"),
    }
}
