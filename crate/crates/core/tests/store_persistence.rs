use flipper_core::lang::*;
use flipper_core::semparse::{parse, ModelParams};
use flipper_core::store::*;
use flipper_core::world::GridWorld;
use proptest::prelude::*;

fn rule(rhs: &[&str], body: &str) -> GrammarRule {
    GrammarRule {
        id: String::new(),
        lhs: Category::Act,
        rhs: rhs.iter().map(|t| Symbol::t(t)).collect(),
        body: words(body).into_iter().map(BodySym::Token).collect(),
        author: String::new(),
        origin: Origin::InducedSimple,
        context: None,
    }
}

#[test]
fn add_list_and_duplicate() {
    let mut s = Store::in_memory();
    let ids = s.add_rules(vec![rule(&["hop"], "move up")], "ann").unwrap();
    let listed = s.list_rules(&RuleFilter::default());
    assert_eq!(listed.len(), 1);
    assert_eq!(listed[0].id, ids[0]);
    let mut dup = rule(&["skip"], "move down");
    dup.id = ids[0].clone();
    assert!(matches!(s.add_rules(vec![dup], "ann"), Err(StoreError::DuplicateId(_))));
}

#[test]
fn empty_store_lists_core_only() {
    let s = Store::in_memory();
    assert!(s.list_rules(&RuleFilter::default()).is_empty());
    let all = s.list_rules(&RuleFilter { include_core: true, author: None });
    assert!(!all.is_empty());
    assert!(all.iter().all(|r| r.origin == Origin::Core));
}

#[test]
fn filter_by_author() {
    let mut s = Store::in_memory();
    s.add_rules(vec![rule(&["hop"], "move up")], "ann").unwrap();
    s.add_rules(vec![rule(&["skip"], "move down")], "bob").unwrap();
    let f = RuleFilter { author: Some("bob".into()), include_core: false };
    let got: Vec<String> = s.list_rules(&f).iter().map(|r| r.rhs_text()).collect();
    assert_eq!(got, vec!["skip"]);
}

#[test]
fn ownership_is_enforced() {
    let mut s = Store::in_memory();
    let ids = s.add_rules(vec![rule(&["hop"], "move up")], "ann").unwrap();
    assert!(matches!(s.delete_rule(&ids[0], "bob"), Err(StoreError::NotOwner { .. })));
    assert!(matches!(s.delete_rule("core:act.move", "core"), Err(StoreError::CoreRuleImmutable(_)) | Err(StoreError::NotFound(_))));
    let core_id = s.grammar().rules().next().unwrap().id.clone();
    assert!(matches!(s.delete_rule(&core_id, "core"), Err(StoreError::CoreRuleImmutable(_))));
    assert!(matches!(s.delete_rule("r99", "ann"), Err(StoreError::NotFound(_))));
    s.delete_rule(&ids[0], "ann").unwrap();
    assert!(s.grammar().get(&ids[0]).is_none());
}

#[test]
fn reopen_restores_rules_params_and_worlds() {
    let dir = tempfile::tempdir().unwrap();
    let w = GridWorld::new(3, 2).with_robot(1, 1);
    let (ids, wid, dump) = {
        let mut s = Store::open(dir.path()).unwrap();
        let ids = s.add_rules(vec![rule(&["hop"], "move up"), rule(&["skip"], "move down")], "ann").unwrap();
        s.delete_rule(&ids[0], "ann").unwrap();
        let mut p = ModelParams::default();
        p.weights.insert("rule:r2".into(), 0.25);
        s.set_params(p).unwrap();
        let wid = s.put_world(&w).unwrap();
        (ids, wid, s.grammar().dump())
    };
    let s = Store::open(dir.path()).unwrap();
    assert_eq!(s.grammar().dump(), dump);
    assert!(s.grammar().get(&ids[0]).is_none());
    assert_eq!(s.params().weight("rule:r2"), 0.25);
    assert_eq!(s.world(&wid).unwrap(), &w);
}

#[test]
fn torn_final_line_is_dropped() {
    let dir = tempfile::tempdir().unwrap();
    {
        let mut s = Store::open(dir.path()).unwrap();
        s.add_rules(vec![rule(&["hop"], "move up")], "ann").unwrap();
    }
    let p = dir.path().join("rules.jsonl");
    let mut text = std::fs::read_to_string(&p).unwrap();
    text.push_str("{\"op\":\"add\",\"seq\":9,\"rule\":{\"id\":");
    std::fs::write(&p, text).unwrap();
    let mut s = Store::open(dir.path()).unwrap();
    assert_eq!(s.list_rules(&RuleFilter::default()).len(), 1);
    std::fs::write(&p, "not json\n").unwrap();
    assert!(matches!(Store::open(dir.path()), Err(StoreError::Corrupt { .. })));
    let _ = s.next_seq();
}

#[test]
fn compaction_keeps_live_rules_and_counters() {
    let dir = tempfile::tempdir().unwrap();
    let mut s = Store::open(dir.path()).unwrap();
    let ids = s.add_rules(vec![rule(&["hop"], "move up"), rule(&["skip"], "move down")], "ann").unwrap();
    s.delete_rule(&ids[1], "ann").unwrap();
    let dump = s.grammar().dump();
    s.compact().unwrap();
    let text = std::fs::read_to_string(dir.path().join("rules.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 2);
    let mut s = Store::open(dir.path()).unwrap();
    assert_eq!(s.grammar().dump(), dump);
    let next = s.add_rules(vec![rule(&["jump"], "move left")], "ann").unwrap();
    assert_eq!(next, vec!["r3"]);
}

#[test]
fn contexts_resolve() {
    let mut s = Store::in_memory();
    let w = GridWorld::new(2, 2);
    let wid = s.put_world(&w).unwrap();
    let mut r = rule(&["hop"], "move up");
    r.context = Some(wid);
    s.add_rules(vec![r], "ann").unwrap();
    for r in s.list_rules(&RuleFilter::default()) {
        assert!(s.world(r.context.as_deref().unwrap()).is_ok());
    }
}

// Parse-diff oracle: deleting a rule removes exactly the derivations that used it.
#[test]
fn delete_drops_only_derivations_using_the_rule() {
    let mut s = Store::in_memory();
    let ids = s
        .add_rules(
            vec![rule(&["hop"], "move up"), rule(&["hop"], "move down"), rule(&["skip"], "move left")],
            "ann",
        )
        .unwrap();
    let th = ModelParams::default();
    let utterances = ["hop", "hop; skip", "skip; move right", "repeat 2 times hop"];
    let snapshot = |s: &Store| -> Vec<Vec<(String, Vec<String>)>> {
        utterances
            .iter()
            .map(|u| match parse(&words(u), "ann", s.grammar(), &th) {
                Ok(c) => {
                    let mut v: Vec<(String, Vec<String>)> = c
                        .iter()
                        .map(|c| (pretty(&c.program), c.derivation.rule_ids()))
                        .collect();
                    v.sort();
                    v
                }
                Err(_) => Vec::new(),
            })
            .collect()
    };
    let before = snapshot(&s);
    s.delete_rule(&ids[0], "ann").unwrap();
    let after = snapshot(&s);
    for (b, a) in before.iter().zip(&after) {
        let expected: Vec<_> = b.iter().filter(|(_, rs)| !rs.contains(&ids[0])).cloned().collect();
        assert_eq!(&expected, a);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn nobody_deletes_what_they_do_not_own(ops in prop::collection::vec((0usize..3, 0usize..3, any::<bool>()), 1..30)) {
        let users = ["ann", "bob", "cy"];
        let mut s = Store::in_memory();
        let words_ = ["hop", "skip", "jump", "leap", "bound", "spring", "vault", "dash", "trot", "amble"];
        let mut n = 0;
        for (u, target, add) in ops {
            let user = users[u];
            if add || s.list_rules(&RuleFilter::default()).is_empty() {
                let w = words_[n % words_.len()];
                n += 1;
                let _ = s.add_rules(vec![rule(&[w, &n.to_string()], "move up")], user);
            } else {
                let live = s.list_rules(&RuleFilter::default());
                let r = &live[target % live.len()];
                let res = s.delete_rule(&r.id, user);
                prop_assert_eq!(res.is_ok(), r.author == user);
                prop_assert_eq!(s.grammar().get(&r.id).is_none(), r.author == user);
            }
        }
        for r in s.grammar().rules().filter(|r| r.origin == Origin::Core).take(5).cloned().collect::<Vec<_>>() {
            prop_assert!(s.delete_rule(&r.id, "core").is_err());
        }
    }
}
