#![allow(dead_code)]

use flipper_core::lang::*;
use proptest::prelude::*;

pub fn prop() -> impl Strategy<Value = Prop> {
    prop_oneof![
        prop::sample::select(Color::ALL.to_vec()).prop_map(Prop::Color),
        prop::sample::select(Shape::ALL.to_vec()).prop_map(Prop::Shape),
    ]
}

pub fn filter() -> impl Strategy<Value = Filter> {
    prop().prop_map(Filter::Is).prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Filter::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Filter::Or(Box::new(a), Box::new(b))),
            inner.prop_map(|a| Filter::Not(Box::new(a))),
        ]
    })
}

pub fn item() -> impl Strategy<Value = Item> {
    prop_oneof![Just(Item::Any), filter().prop_map(Item::Filtered)]
}

pub fn pnt() -> impl Strategy<Value = Pnt> {
    prop_oneof![
        4 => (0u32..=99, 0u32..=99).prop_map(|(x, y)| Pnt::Lit(x, y)),
        1 => Just(Pnt::Var),
    ]
}

pub fn area() -> impl Strategy<Value = Area> {
    let leaf = prop_oneof![
        Just(Area::World),
        pnt().prop_map(Area::Point),
        prop::collection::vec(pnt(), 2..=9).prop_map(Area::List),
        Just(Area::Named("room1".into())),
    ];
    leaf.prop_recursive(3, 12, 2, |inner| {
        prop_oneof![
            (inner.clone(), item()).prop_map(|(a, i)| Area::Containing(Box::new(a), i)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Area::And(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Area::Or(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| Area::Minus(Box::new(a), Box::new(b))),
        ]
    })
}

pub fn qitem() -> impl Strategy<Value = QItem> {
    prop_oneof![item().prop_map(QItem::Every), item().prop_map(QItem::One)]
}

pub fn simple_act() -> impl Strategy<Value = Act> {
    prop_oneof![
        area().prop_map(Act::Visit),
        (area(), area()).prop_map(|(a, b)| Act::VisitAvoiding(a, b)),
        prop::sample::select(Dir::ALL.to_vec()).prop_map(Act::Move),
        (prop::sample::select(ItemKind::ALL.to_vec()), qitem()).prop_map(|(k, q)| Act::Item(k, q)),
    ]
}

pub fn cond(stmt: BoxedStrategy<Stmt>) -> impl Strategy<Value = Cond> {
    prop_oneof![
        (item(), area()).prop_map(|(i, a)| Cond::ItemAt(i, a)),
        item().prop_map(Cond::RobotHas),
        area().prop_map(Cond::RobotAt),
        stmt.prop_map(|s| Cond::Possible(Box::new(s))),
    ]
}

/// Random well-typed statements of bounded depth.
pub fn stmt() -> impl Strategy<Value = Stmt> {
    simple_act().prop_map(Stmt::Act).prop_recursive(4, 24, 2, |inner| {
        let b = inner.clone().boxed();
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Stmt::seq(a, b)),
            (0u32..=99, inner.clone()).prop_map(|(n, s)| Stmt::Repeat(n, Box::new(s))),
            (area(), inner.clone()).prop_map(|(a, s)| Stmt::Foreach(a, Box::new(s))),
            (cond(b.clone()), inner.clone()).prop_map(|(c, s)| Stmt::If(c, Box::new(s))),
            (cond(b), inner.clone()).prop_map(|(c, s)| Stmt::While(c, Box::new(s))),
            inner.prop_map(|s| Stmt::Act(Act::Strict(Box::new(s)))),
        ]
    })
}

pub mod worlds {
    use std::collections::{BTreeSet, HashMap, VecDeque};

    use flipper_core::lang::{Color, Shape};
    use flipper_core::world::{GridWorld, Point};
    use rand::Rng;

    /// A random world up to `max`×`max` with obstacle density below 0.35, a few items and
    /// the robot on a free cell.
    pub fn random_world<R: Rng>(rng: &mut R, max: u32) -> GridWorld {
        loop {
            let (w, h) = (rng.gen_range(1..=max), rng.gen_range(1..=max));
            let density: f64 = rng.gen_range(0.0..0.35);
            let mut g = GridWorld::new(w, h);
            for x in 0..w as i64 {
                for y in 0..h as i64 {
                    if rng.gen_bool(density) {
                        g = g.with_obstacle(x, y);
                    }
                }
            }
            let free: Vec<Point> = g.free_cells().into_iter().collect();
            if free.is_empty() {
                continue;
            }
            let r = free[rng.gen_range(0..free.len())];
            g = g.with_robot(r.x, r.y);
            for i in 0..rng.gen_range(0..6) {
                let p = free[rng.gen_range(0..free.len())];
                let c = Color::ALL[rng.gen_range(0..Color::ALL.len())];
                let s = Shape::ALL[rng.gen_range(0..Shape::ALL.len())];
                g = g.with_item(&format!("i{i}"), c, s, p.x, p.y);
            }
            for i in 0..rng.gen_range(0..3) {
                let c = Color::ALL[rng.gen_range(0..Color::ALL.len())];
                let s = Shape::ALL[rng.gen_range(0..Shape::ALL.len())];
                g = g.with_held_item(&format!("h{i}"), c, s);
            }
            return g;
        }
    }

    pub fn random_cells<R: Rng>(rng: &mut R, w: &GridWorld, n: usize) -> BTreeSet<Point> {
        (0..n)
            .map(|_| Point::new(rng.gen_range(0..w.width as i64), rng.gen_range(0..w.height as i64)))
            .collect()
    }

    fn free(w: &GridWorld, p: Point) -> bool {
        p.x >= 0 && p.y >= 0 && p.x < w.width as i64 && p.y < w.height as i64 && !w.obstacles.contains(&p)
    }

    fn nbrs(p: Point) -> [Point; 4] {
        [
            Point::new(p.x, p.y - 1),
            Point::new(p.x, p.y + 1),
            Point::new(p.x - 1, p.y),
            Point::new(p.x + 1, p.y),
        ]
    }

    /// Breadth-first distance from `start` to the nearest target, never stepping on an
    /// `avoid` cell unless it is a target (which ends the walk).
    pub fn bfs_oracle(w: &GridWorld, start: Point, targets: &BTreeSet<Point>, avoid: &BTreeSet<Point>) -> Option<u64> {
        if targets.contains(&start) {
            return Some(0);
        }
        let mut seen = HashMap::from([(start, 0u64)]);
        let mut q = VecDeque::from([start]);
        while let Some(p) = q.pop_front() {
            let d = seen[&p];
            for n in nbrs(p) {
                if !free(w, n) || seen.contains_key(&n) {
                    continue;
                }
                if targets.contains(&n) {
                    return Some(d + 1);
                }
                if avoid.contains(&n) {
                    continue;
                }
                seen.insert(n, d + 1);
                q.push_back(n);
            }
        }
        None
    }

    /// All-pairs grid distances among `pts` (None when disconnected).
    pub fn distances(w: &GridWorld, pts: &[Point]) -> Vec<Vec<Option<u64>>> {
        pts.iter()
            .map(|&a| {
                pts.iter()
                    .map(|&b| bfs_oracle(w, a, &BTreeSet::from([b]), &BTreeSet::new()))
                    .collect()
            })
            .collect()
    }

    /// Cheapest open path from index 0 through all other indices, by exhaustive search.
    pub fn optimal_open_path(d: &[Vec<u64>]) -> u64 {
        fn go(d: &[Vec<u64>], cur: usize, left: &mut Vec<usize>, acc: u64, best: &mut u64) {
            if acc >= *best {
                return;
            }
            if left.is_empty() {
                *best = acc;
                return;
            }
            for i in 0..left.len() {
                let n = left.remove(i);
                go(d, n, left, acc + d[cur][n], best);
                left.insert(i, n);
            }
        }
        let mut left: Vec<usize> = (1..d.len()).collect();
        let mut best = u64::MAX;
        go(d, 0, &mut left, 0, &mut best);
        if d.len() <= 1 {
            0
        } else {
            best
        }
    }
}
