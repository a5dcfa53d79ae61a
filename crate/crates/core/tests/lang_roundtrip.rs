mod common;

use flipper_core::lang::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn pretty_then_parse_is_identity(s in common::stmt()) {
        let p = Program(s);
        let text = pretty(&p);
        let back = parse_core_with_areas(&text, ["room1"]);
        prop_assert!(back.is_ok(), "{text}: {:?}", back.err());
        prop_assert_eq!(back.unwrap(), p, "{}", text);
    }

    #[test]
    fn tokenize_is_idempotent(s in "[a-z0-9 ,;\\[\\]{}]{0,40}") {
        let once = join_tokens(&words(&s));
        prop_assert_eq!(join_tokens(&words(&once)), once);
    }
}
