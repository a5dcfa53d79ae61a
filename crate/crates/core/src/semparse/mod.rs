//! Chart parsing of utterances against the dynamic grammar and log-linear ranking.

mod chart;
mod grammar;
mod model;

use std::sync::Arc;

use serde::Serialize;

pub use chart::{rank_order, Chart, Derivation, Input};
pub use grammar::{body_category, compile_template, CompiledRule, Grammar, GrammarError, RuleSem};
pub use model::{
    local_features, rule_feature, softmax, FeatureVector, ModelParams, UpdateError, DEFAULT_BEAM,
    DEFAULT_LEARNING_RATE, F_AUTHOR_OTHER, F_AUTHOR_SELF, F_CORE, F_COVERAGE, F_DEPTH, F_INDUCED,
};

use crate::lang::{Category, Program};

/// No full-span statement derivation exists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("cannot parse at token {token} (byte {offset}); expected one of: {}", expected.join(", "))]
pub struct ParseError {
    /// Token index where parsing got stuck.
    pub token: usize,
    /// Byte offset of that token in the original text (text length at end of input).
    pub offset: usize,
    /// Terminals or category names that could continue there.
    pub expected: Vec<String>,
}

/// One ranked interpretation of an utterance.
#[derive(Debug, Clone)]
pub struct Candidate {
    pub derivation: Arc<Derivation>,
    pub program: Program,
    pub features: FeatureVector,
    pub score: f64,
    pub prob: f64,
}

/// Trailing `;` is tolerated as a statement terminator.
fn trim(tokens: &[String]) -> &[String] {
    let mut end = tokens.len();
    while end > 0 && tokens[end - 1] == ";" {
        end -= 1;
    }
    &tokens[..end]
}

pub(crate) fn chart_for(
    tokens: &[String],
    g: &Grammar,
    user: &str,
    params: &ModelParams,
    beam: usize,
) -> Chart {
    let input: Vec<Input> = trim(tokens).iter().cloned().map(Input::Word).collect();
    Chart::parse(g, &input, user, params, beam)
}

pub(crate) fn parse_error(chart: &Chart, g: &Grammar, tokens: &[String], text: &str) -> ParseError {
    let toks = trim(tokens);
        let input: Vec<Input> = toks.iter().cloned().map(Input::Word).collect();
    let (stuck, mut expected) = chart.stuck_point(g, &input);
    let token = match toks.iter().position(|t| !g.is_known_word(t)) {
        Some(u) if u < stuck => {
            expected = Vec::new();
            u
        }
        _ => stuck,
    };
    let spans = crate::lang::tokenize(text);
    let offset = spans.get(token).map(|t| t.span.0).unwrap_or(text.len());
    ParseError {
        token,
        offset,
        expected,
    }
}

/// Parses `tokens` for user `user`, returning full-span statement derivations best first.
pub fn parse(
    tokens: &[String],
    user: &str,
    g: &Grammar,
    params: &ModelParams,
) -> Result<Vec<Candidate>, ParseError> {
    parse_text(&crate::lang::join_tokens(tokens), tokens, user, g, params)
}

/// As [`parse`], with the original text for error offsets.
pub fn parse_text(
    text: &str,
    tokens: &[String],
    user: &str,
    g: &Grammar,
    params: &ModelParams,
) -> Result<Vec<Candidate>, ParseError> {
    let chart = chart_for(tokens, g, user, params, params.beam_size);
    let n = chart.len();
    let full: Vec<Arc<Derivation>> = chart
        .complete(Category::Stmt)
        .into_iter()
        .filter(|d| d.value.is_some())
        .collect();
    if full.is_empty() {
        return Err(parse_error(&chart, g, tokens, text));
    }
    let scores: Vec<f64> = full.iter().map(|d| d.score).collect();
    let probs = softmax(&scores);
    Ok(full
        .into_iter()
        .zip(probs)
        .map(|(d, prob)| Candidate {
            program: d.program().expect("statement value"),
            features: d.features(user, n),
            score: d.score,
            prob,
            derivation: d,
        })
        .collect())
}

/// The first `k` candidates of a ranking.
pub fn top_k<T: Clone>(ranked: &[T], k: usize) -> Vec<T> {
    ranked.iter().take(k).cloned().collect()
}

/// One gradient step on the log-likelihood of `candidates[chosen]`.
pub fn update(
    params: &mut ModelParams,
    candidates: &[Candidate],
    chosen: usize,
) -> Result<(), UpdateError> {
    let feats: Vec<FeatureVector> = candidates.iter().map(|c| c.features.clone()).collect();
    params.update(&feats, chosen)
}
