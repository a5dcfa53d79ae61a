//! The core language: tokens, syntax tree, core grammar, canonical printing.

mod ast;
mod canon;
mod grammar;
mod token;

pub use ast::*;
pub use canon::{canonical, canonical_abstracted, pretty, pretty_value, Abstractor, Openness, Template};
pub use grammar::{
    apply_core, core_def, core_defs, core_rules, core_rules_for, named_area_def, BodySym, Category,
    CoreRuleDef, CoreSem, GrammarRule, Origin, Symbol, Value, CORE_AUTHOR, MAX_NUM, MAX_POINT_LIST,
};
pub use token::{join_tokens, tokenize, words, Token, PUNCT};

use crate::semparse::{self, Grammar, ParseError};

/// Parses core-language text with the core rules only.
pub fn parse_core(text: &str) -> Result<Program, ParseError> {
    parse_core_in(text, &Grammar::core())
}

/// Parses core-language text, additionally accepting the given named areas.
pub fn parse_core_with_areas<'a>(
    text: &str,
    areas: impl IntoIterator<Item = &'a str>,
) -> Result<Program, ParseError> {
    parse_core_in(text, &Grammar::with_area_names(areas))
}

fn parse_core_in(text: &str, g: &Grammar) -> Result<Program, ParseError> {
    let toks = words(text);
    let chart = semparse::chart_for(&toks, g, CORE_AUTHOR, &Default::default(), usize::MAX);
    let full = chart.complete(Category::Stmt);
    match full.into_iter().min_by(|a, b| a.structural_order(b)) {
        Some(d) => Ok(d.program().expect("full Stmt derivation has a program")),
        None => Err(semparse::parse_error(&chart, g, &toks, text)),
    }
}
