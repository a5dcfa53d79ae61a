mod common;

use std::collections::BTreeSet;

use common::worlds::*;
use common::*;
use flipper_core::exec::*;
use flipper_core::lang::*;
use flipper_core::world::{GridWorld, Point, Step};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Statements without `while` and with small repeat counts, so runs stay short.
fn bounded_stmt() -> impl Strategy<Value = Stmt> {
    simple_act().prop_map(Stmt::Act).prop_recursive(3, 12, 2, |inner| {
        let b = inner.clone().boxed();
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Stmt::seq(a, b)),
            (0u32..=3, inner.clone()).prop_map(|(n, s)| Stmt::Repeat(n, Box::new(s))),
            (area(), inner.clone()).prop_map(|(a, s)| Stmt::Foreach(a, Box::new(s))),
            (cond(b), inner.clone()).prop_map(|(c, s)| Stmt::If(c, Box::new(s))),
            inner.prop_map(|s| Stmt::Act(Act::Strict(Box::new(s)))),
        ]
    })
}

fn small_world() -> impl Strategy<Value = GridWorld> {
    any::<u64>().prop_map(|seed| random_world(&mut ChaCha8Rng::seed_from_u64(seed), 8))
}

fn item_ids(w: &GridWorld) -> BTreeSet<String> {
    w.items.keys().cloned().collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn trace_replays_to_final_world(w in small_world(), s in bounded_stmt()) {
        let out = execute(&Program(s), &w);
        prop_assert_eq!(replay(&w, &out.trace.steps).unwrap(), out.world.clone());
        prop_assert_eq!(out.realizable, out.trace.warnings.is_empty());
    }

    #[test]
    fn worlds_stay_valid(w in small_world(), s in bounded_stmt()) {
        let out = execute(&Program(s), &w);
        prop_assert!(out.world.validate().is_ok());
        prop_assert_eq!(item_ids(&out.world), item_ids(&w));
        prop_assert!(out.world.is_free(out.world.robot.position));
        for it in out.world.items.values() {
            prop_assert_eq!(it.position.is_none(), out.world.robot.holding.contains(&it.id));
        }
    }

    #[test]
    fn strict_is_all_or_nothing(w in small_world(), s in bounded_stmt()) {
        let lenient = execute(&Program(s.clone()), &w);
        let strict = execute(&Program(Stmt::Act(Act::Strict(Box::new(s)))), &w);
        if lenient.realizable {
            prop_assert_eq!(&strict.trace.steps, &lenient.trace.steps);
            prop_assert!(strict.realizable);
        } else {
            prop_assert!(strict.trace.steps.is_empty());
            prop_assert_eq!(strict.trace.warnings.len(), 1);
            prop_assert_eq!(strict.world, w);
        }
    }

    #[test]
    fn warning_paths_point_at_nodes(w in small_world(), s in bounded_stmt()) {
        let out = execute(&Program(s.clone()), &w);
        for wn in &out.trace.warnings {
            prop_assert!(node_at(&s, &wn.path).is_some(), "{}", wn.path);
        }
    }
}

fn or_area(cells: &BTreeSet<Point>) -> Area {
    let mut it = cells.iter().map(|p| Area::Point(Pnt::Lit(p.x as u32, p.y as u32)));
    let first = it.next().expect("non-empty");
    it.fold(first, |a, b| Area::Or(Box::new(a), Box::new(b)))
}

/// ¬A U T over the robot positions from the start to the end of the trace.
fn until_holds(start: Point, steps: &[Step], t: &BTreeSet<Point>, a: &BTreeSet<Point>) -> bool {
    let mut pos = vec![start];
    let mut p = start;
    for s in steps {
        if let Step::Move { dir } = s {
            p = p.step(*dir);
            pos.push(p);
        }
    }
    match pos.iter().position(|q| t.contains(q)) {
        Some(k) => pos[1..k.max(1)].iter().all(|q| !a.contains(q)) && k == pos.len() - 1,
        None => false,
    }
}

#[test]
fn visit_avoiding_obeys_until() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..500 {
        let w = random_world(&mut rng, 12);
        let nt = rng.gen_range(1..4);
        let t = random_cells(&mut rng, &w, nt);
        let na = rng.gen_range(1..12);
        let a = random_cells(&mut rng, &w, na);
        let p = Program(Stmt::Act(Act::VisitAvoiding(or_area(&t), or_area(&a))));
        let out = execute(&p, &w);
        let free_t: BTreeSet<Point> = t.iter().copied().filter(|c| w.is_free(*c)).collect();
        if out.realizable {
            assert!(until_holds(w.robot.position, &out.trace.steps, &free_t, &a));
        } else {
            assert!(out.trace.steps.is_empty());
            assert_eq!(bfs_oracle(&w, w.robot.position, &free_t, &a), None);
        }
    }
}

const LINE: &str = "drop item; while possible {move right; drop item} {move right; drop item}";

#[test]
fn line_placement_places_min_of_room_and_items() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let p = parse_core(LINE).unwrap();
    for _ in 0..200 {
        let width = rng.gen_range(1..10);
        let x0 = rng.gen_range(0..width);
        let mut w = GridWorld::new(width as u32, 2).with_robot(x0, 0);
        for x in 0..width {
            if x != x0 && rng.gen_bool(0.2) {
                w = w.with_obstacle(x, 0);
            }
        }
        let held = rng.gen_range(1..8);
        for i in 0..held {
            w = w.with_held_item(&format!("h{i}"), Color::Red, Shape::Circle);
        }
        let room = (x0 + 1..width).take_while(|x| !w.obstacles.contains(&Point::new(*x, 0))).count();
        let out = execute(&p, &w);
        let placed = out.world.items.values().filter(|i| i.position.is_some()).count();
        assert_eq!(placed, (room + 1).min(held as usize));
        assert!(out.realizable);
    }
}

#[test]
fn strict_line_is_atomic() {
    let p = parse_core("strict {while robot has item {drop item; move right}}").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let width = rng.gen_range(1..8);
        let held = rng.gen_range(1..8);
        let mut w = GridWorld::new(width, 1);
        for i in 0..held {
            w = w.with_held_item(&format!("h{i}"), Color::Blue, Shape::Star);
        }
        let out = execute(&p, &w);
        // Every drop is followed by a move, including the last one.
        if held < width {
            assert!(out.realizable);
            assert!(out.world.robot.holding.is_empty());
        } else {
            assert!(out.trace.steps.is_empty());
            assert_eq!(out.trace.warnings.len(), 1);
            assert_eq!(out.world, w);
        }
    }
}
