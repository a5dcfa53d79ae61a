//! Generalization of definitions: w-equivalent rewritings scored by
//! σ = (p_θ(d | x, u), sim(d, x)), compared lexicographically.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use crate::exec::{execute, Trace};
use crate::lang::{
    pretty, words, Act, Area, Filter, Item, ItemKind, Pnt, Program, Prop, QItem, Stmt,
};
use crate::semparse::{self, softmax, Grammar, ModelParams, ParseError};
use crate::world::{GridWorld, Step, WorldItem};

/// Upper bound on rewrite candidates per definition.
pub const CANDIDATE_CAP: usize = 500;

/// Scores closer than this are treated as equal.
pub const TIE_EPS: f64 = 1e-9;

const BUNDLED_EMBEDDINGS: &str = include_str!("../../../data/embeddings.txt");
const BUNDLED_STOPWORDS: &str = include_str!("../../../data/stopwords.txt");

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("reading {0}: {1}")]
    Io(String, std::io::Error),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// Word vectors plus the stop-word list used when averaging.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    vectors: BTreeMap<String, Vec<f64>>,
    stopwords: BTreeSet<String>,
}

pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(BUNDLED_STOPWORDS)
}

fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

impl EmbeddingTable {
    /// Parses "word v1 … vN" lines; every vector must have the same dimension.
    pub fn parse(text: &str, stopwords: BTreeSet<String>) -> Result<EmbeddingTable, EmbeddingError> {
        let mut vectors = BTreeMap::new();
        let mut dim = 0;
        for (i, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(word) = parts.next() else { continue };
            let v: Vec<f64> = parts
                .map(str::parse)
                .collect::<Result<_, _>>()
                .map_err(|e| EmbeddingError::Format {
                    line: i + 1,
                    reason: format!("{e}"),
                })?;
            if dim == 0 {
                dim = v.len();
            }
            if v.len() != dim || dim == 0 {
                return Err(EmbeddingError::Format {
                    line: i + 1,
                    reason: format!("expected {dim} components, found {}", v.len()),
                });
            }
            vectors.insert(word.to_lowercase(), v);
        }
        Ok(EmbeddingTable {
            dim,
            vectors,
            stopwords,
        })
    }

    pub fn load(path: &Path, stopwords: Option<&Path>) -> Result<EmbeddingTable, EmbeddingError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|e| EmbeddingError::Io(p.display().to_string(), e))
        };
        let stop = match stopwords {
            Some(p) => parse_stopwords(&read(p)?),
            None => default_stopwords(),
        };
        EmbeddingTable::parse(&read(path)?, stop)
    }

    /// The vocabulary shipped with the crate.
    pub fn bundled() -> &'static EmbeddingTable {
        static T: OnceLock<EmbeddingTable> = OnceLock::new();
        T.get_or_init(|| {
            EmbeddingTable::parse(BUNDLED_EMBEDDINGS, default_stopwords()).expect("bundled embeddings parse")
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, w: &str) -> Option<&[f64]> {
        self.vectors.get(w).map(Vec::as_slice)
    }

    pub fn is_stopword(&self, w: &str) -> bool {
        self.stopwords.contains(w)
    }

    /// Mean vector of the in-vocabulary content words of `text`.
    pub fn average(&self, text: &str) -> Option<Vec<f64>> {
        let mut sum = vec![0.0; self.dim];
        let mut n = 0usize;
        for w in words(text) {
            if self.is_stopword(&w) {
                continue;
            }
            if let Some(v) = self.get(&w) {
                for (s, x) in sum.iter_mut().zip(v) {
                    *s += x;
                }
                n += 1;
            }
        }
        (n > 0).then(|| sum.into_iter().map(|s| s / n as f64).collect())
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Similarity between a definition's text and the utterance.
///
/// With a table: cosine of averaged content-word vectors (0 when either side has none).
/// Without one: Jaccard overlap of content words.
pub fn sim(definition: &str, utterance: &str, table: Option<&EmbeddingTable>) -> f64 {
    match table {
        Some(t) => match (t.average(definition), t.average(utterance)) {
            (Some(a), Some(b)) => cosine(&a, &b),
            _ => 0.0,
        },
        None => {
            static WARNED: OnceLock<()> = OnceLock::new();
            WARNED.get_or_init(|| log::warn!("no embedding table configured; using token-overlap similarity"));
            let stop = default_stopwords();
            let bag = |s: &str| -> BTreeSet<String> {
                words(s).into_iter().filter(|w| !stop.contains(w)).collect()
            };
            let (a, b) = (bag(definition), bag(utterance));
            let union = a.union(&b).count();
            if union == 0 {
                0.0
            } else {
                a.intersection(&b).count() as f64 / union as f64
            }
        }
    }
}

/// Which rewriting principle produced a candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Principle {
    Loop,
    VisitTarget,
    ItemPredicate,
}

#[derive(Debug, Clone)]
pub struct RewriteCandidate {
    pub program: Program,
    pub provenance: BTreeSet<Principle>,
    pub trace: Trace,
}

/// Property conjunctions (at most one color and one shape) an item satisfies.
pub fn item_predicates(it: &WorldItem) -> Vec<Item> {
    let c = Filter::Is(Prop::Color(it.color));
    let s = Filter::Is(Prop::Shape(it.shape));
    vec![
        Item::Any,
        Item::Filtered(c.clone()),
        Item::Filtered(s.clone()),
        Item::Filtered(Filter::and(c, s)),
    ]
}

fn predicates_over<'a>(items: impl IntoIterator<Item = &'a WorldItem>) -> Vec<Item> {
    let mut out: Vec<Item> = Vec::new();
    for it in items {
        for p in item_predicates(it) {
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

/// One top-level segment choice: replaced statements and the principle used.
type Alt = (Vec<Stmt>, Option<Principle>);

/// The set 𝒮: rewritings of `y` whose trace on `w` equals y's, excluding y itself.
pub fn rewrites(y: &Program, w: &GridWorld) -> Vec<RewriteCandidate> {
    let base = execute(y, w);
    let target = base.trace.steps.clone();
    let stmts: Vec<Stmt> = y.0.flatten().into_iter().cloned().collect();

    // World state before each top-level statement and the steps each one emits.
    let mut states = vec![w.clone()];
    let mut emitted: Vec<Vec<Step>> = Vec::new();
    for s in &stmts {
        let out = execute(&Program(s.clone()), states.last().expect("state"));
        emitted.push(out.trace.steps);
        states.push(out.world);
    }

    // alts[i] = alternatives for a segment starting at statement i: (end, stmts, principle).
    let n = stmts.len();
    let mut alts: Vec<Vec<(usize, Alt)>> = vec![Vec::new(); n];
    for i in 0..n {
        alts[i].push((i + 1, (vec![stmts[i].clone()], None)));
    }
    let is_move = |s: &Stmt| matches!(s, Stmt::Act(Act::Move(_)));
    let item_kind = |s: &Stmt| match s {
        Stmt::Act(Act::Item(k, _)) => Some(*k),
        _ => None,
    };
    let mut i = 0;
    while i < n {
        if is_move(&stmts[i]) {
            let mut j = i;
            while j < n && is_move(&stmts[j]) {
                j += 1;
            }
            let end = &states[j];
            let p = end.robot.position;
            let mut targets = vec![Area::Point(Pnt::Lit(p.x as u32, p.y as u32))];
            for it in predicates_over(end.items_at(p)) {
                targets.push(Area::containing(Area::World, it));
            }
            for t in targets {
                alts[i].push((j, (vec![Stmt::Act(Act::Visit(t))], Some(Principle::VisitTarget))));
            }
            i = j;
        } else if let Some(kind) = item_kind(&stmts[i]) {
            let mut j = i;
            while j < n && item_kind(&stmts[j]) == Some(kind) {
                j += 1;
            }
            let before = &states[i];
            let acted: BTreeSet<String> = emitted[i..j]
                .iter()
                .flatten()
                .filter_map(|s| match s {
                    Step::Pick { item } | Step::Drop { item } => Some(item.clone()),
                    Step::Move { .. } => None,
                })
                .collect();
            let pool: Vec<&WorldItem> = match kind {
                ItemKind::Pick => before.items_at(before.robot.position),
                ItemKind::Drop => before.held_items(),
            };
            let acted_items: Vec<&WorldItem> = pool.iter().copied().filter(|it| acted.contains(&it.id)).collect();
            for phi in predicates_over(acted_items.iter().copied()) {
                let selected: BTreeSet<String> = pool
                    .iter()
                    .filter(|it| crate::world::item_matches(&phi, it))
                    .map(|it| it.id.clone())
                    .collect();
                if !acted.is_empty() && selected == acted {
                    alts[i].push((
                        j,
                        (vec![Stmt::Act(Act::Item(kind, QItem::Every(phi.clone())))], Some(Principle::ItemPredicate)),
                    ));
                }
                if j == i + 1 && acted.len() == 1 {
                    alts[i].push((
                        j,
                        (vec![Stmt::Act(Act::Item(kind, QItem::One(phi)))], Some(Principle::ItemPredicate)),
                    ));
                }
            }
            i = j;
        } else {
            i += 1;
        }
    }

    // Combine segment choices left to right.
    let mut combos: Vec<(Vec<Stmt>, BTreeSet<Principle>)> = Vec::new();
    let mut cur: Vec<Stmt> = Vec::new();
    let mut prov: Vec<Principle> = Vec::new();
    combine(&alts, 0, &mut cur, &mut prov, &mut combos);

    let mut seen: HashSet<Program> = HashSet::new();
    seen.insert(y.clone());
    let mut out = Vec::new();
    let mut consider = |prog: Program, provenance: BTreeSet<Principle>, out: &mut Vec<RewriteCandidate>| {
        if out.len() >= CANDIDATE_CAP || !seen.insert(prog.clone()) {
            return;
        }
        let r = execute(&prog, w);
        if r.realizable && r.trace.steps == target {
            out.push(RewriteCandidate {
                program: prog,
                provenance,
                trace: r.trace,
            });
        }
    };
    for (seq, provenance) in combos {
        let Some(s) = Stmt::seq_all(seq) else { continue };
        for (variant, looped) in loop_variants(&s) {
            let mut p = provenance.clone();
            if looped {
                p.insert(Principle::Loop);
            }
            consider(Program(variant), p, &mut out);
        }
    }
    out
}

fn combine(
    alts: &[Vec<(usize, Alt)>],
    i: usize,
    cur: &mut Vec<Stmt>,
    prov: &mut Vec<Principle>,
    out: &mut Vec<(Vec<Stmt>, BTreeSet<Principle>)>,
) {
    if out.len() >= CANDIDATE_CAP {
        return;
    }
    if i >= alts.len() {
        out.push((cur.clone(), prov.iter().copied().collect()));
        return;
    }
    for (end, (stmts, p)) in &alts[i] {
        let n = cur.len();
        cur.extend(stmts.iter().cloned());
        if let Some(p) = p {
            prov.push(*p);
        }
        combine(alts, *end, cur, prov, out);
        if p.is_some() {
            prov.pop();
        }
        cur.truncate(n);
    }
}

/// `s` itself, plus `s` with every run of k ≥ 2 identical consecutive statements
/// (at any nesting depth) folded into `repeat k times`.
fn loop_variants(s: &Stmt) -> Vec<(Stmt, bool)> {
    let folded = fold_loops(s);
    if folded == *s {
        vec![(s.clone(), false)]
    } else {
        vec![(s.clone(), false), (folded, true)]
    }
}

fn fold_loops(s: &Stmt) -> Stmt {
    match s {
        Stmt::Seq(..) => {
            let parts: Vec<Stmt> = s.flatten().into_iter().map(fold_loops).collect();
            let mut out: Vec<Stmt> = Vec::new();
            let mut i = 0;
            while i < parts.len() {
                let mut j = i + 1;
                while j < parts.len() && parts[j] == parts[i] {
                    j += 1;
                }
                let k = (j - i) as u32;
                if k >= 2 {
                    out.push(Stmt::Repeat(k, Box::new(parts[i].clone())));
                } else {
                    out.push(parts[i].clone());
                }
                i = j;
            }
            Stmt::seq_all(out).expect("non-empty")
        }
        Stmt::Repeat(n, b) => Stmt::Repeat(*n, Box::new(fold_loops(b))),
        Stmt::Foreach(a, b) => Stmt::Foreach(a.clone(), Box::new(fold_loops(b))),
        Stmt::If(c, b) => Stmt::If(c.clone(), Box::new(fold_loops(b))),
        Stmt::While(c, b) => Stmt::While(c.clone(), Box::new(fold_loops(b))),
        Stmt::Act(Act::Strict(b)) => Stmt::Act(Act::Strict(Box::new(fold_loops(b)))),
        Stmt::Act(_) => s.clone(),
    }
}

/// σ for one member of 𝒮 ∪ {y}.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Scored {
    pub text: String,
    #[serde(skip)]
    pub program: Program,
    /// θ·φ of the definition's derivation.
    pub model_score: f64,
    /// p_θ(d | x, u): softmax of `model_score` over the candidate set.
    pub model: f64,
    pub similarity: f64,
    pub is_original: bool,
    pub provenance: BTreeSet<Principle>,
}

#[derive(Debug, Clone)]
pub struct Generalization {
    /// The winning definition.
    pub program: Program,
    pub text: String,
    /// `true` when the winner is the user's own definition.
    pub is_original: bool,
    /// Every scored candidate, winner first.
    pub ranked: Vec<Scored>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeneralizeError {
    #[error("definition not parsable: {0}")]
    NotParsable(ParseError),
    #[error("definition not realizable: {}", .0.join("; "))]
    Unrealizable(Vec<String>),
}

/// Lexicographic σ, then shorter text, then text order. `Less` means `a` ranks first.
pub fn sigma_order(a: &Scored, b: &Scored) -> std::cmp::Ordering {
    use std::cmp::Ordering::*;
    let cmp_f = |x: f64, y: f64| {
        if (x - y).abs() <= TIE_EPS {
            Equal
        } else if x > y {
            Less
        } else {
            Greater
        }
    };
    cmp_f(a.model, b.model)
        .then(cmp_f(a.similarity, b.similarity))
        .then(a.text.len().cmp(&b.text.len()))
        .then(a.text.cmp(&b.text))
}

/// Picks the definition in 𝒮 ∪ {y} maximizing σ = (p_θ(d | x, u), sim(d, x)).
///
/// The paper writes the similarity term as sim(d, u); it is read here as similarity
/// between the definition and the utterance x.
pub fn generalize(
    x: &str,
    y: &str,
    user: &str,
    w: &GridWorld,
    g: &Grammar,
    params: &ModelParams,
    table: Option<&EmbeddingTable>,
) -> Result<Generalization, GeneralizeError> {
    let ytoks = words(y);
    let ycands = semparse::parse_text(y, &ytoks, user, g, params).map_err(GeneralizeError::NotParsable)?;
    let top = &ycands[0];
    let run = execute(&top.program, w);
    if !run.realizable {
        return Err(GeneralizeError::Unrealizable(
            run.trace.warnings.iter().map(|wn| wn.reason.clone()).collect(),
        ));
    }
    let mut pool: Vec<(Program, f64, bool, BTreeSet<Principle>)> =
        vec![(top.program.clone(), top.score, true, BTreeSet::new())];
    for c in rewrites(&top.program, w) {
        let text = pretty(&c.program);
        let Ok(parsed) = semparse::parse_text(&text, &words(&text), user, g, params) else {
            continue;
        };
        let Some(d) = parsed.iter().find(|d| d.program == c.program) else {
            continue;
        };
        pool.push((c.program, d.score, false, c.provenance));
    }
    let probs = softmax(&pool.iter().map(|p| p.1).collect::<Vec<_>>());
    let mut ranked: Vec<Scored> = pool
        .into_iter()
        .zip(probs)
        .map(|((program, score, is_original, provenance), prob)| {
            let text = pretty(&program);
            Scored {
                similarity: sim(&text, x, table),
                text,
                program,
                model_score: score,
                model: prob,
                is_original,
                provenance,
            }
        })
        .collect();
    ranked.sort_by(sigma_order);
    let best = ranked[0].clone();
    Ok(Generalization {
        program: best.program,
        text: best.text,
        is_original: best.is_original,
        ranked,
    })
}
