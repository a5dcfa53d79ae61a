//! The interactive loop: preview the top interpretations of an utterance, commit the
//! one the user chooses, and grow the grammar from definitions.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::exec::{execute, Trace};
use crate::genz::{generalize, EmbeddingTable, GeneralizeError};
use crate::induct::{induce, InductError};
use crate::lang::{pretty, words, GrammarRule, Origin};
use crate::semparse::{parse_text, FeatureVector, Grammar, ParseError};
use crate::store::{params_json, RuleEvent, RuleFilter, Store, StoreError};
use crate::world::GridWorld;

/// Interpretations shown per utterance.
pub const PREVIEW_COUNT: usize = 3;

/// Pending candidates expire after this many milliseconds.
pub const CANDIDATE_TTL_MS: u64 = 10 * 60 * 1000;

/// Milliseconds since the Unix epoch, or a test substitute.
pub type Clock = Arc<dyn Fn() -> u64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Preview {
    pub id: usize,
    pub program_text: String,
    pub trace: Trace,
    pub score: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum UtteranceResult {
    Ok { candidates: Vec<Preview> },
    Unparsable { error: ParseError },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChooseResult {
    pub world: GridWorld,
    pub world_id: String,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DefineResult {
    pub induced_rules: Vec<GrammarRule>,
    /// The definition text induction used; differs from the user's when generalized.
    pub generalized_from: String,
    pub generalized: bool,
}

#[derive(Debug, Clone)]
struct Pending {
    previews: Vec<Preview>,
    worlds: Vec<GridWorld>,
    /// Features of every derivation; `index[i]` locates preview i among them.
    features: Vec<FeatureVector>,
    index: Vec<usize>,
    created: u64,
}

#[derive(Debug, Clone)]
pub struct Session {
    pub id: String,
    pub user: String,
    pub world: GridWorld,
    pub world_id: String,
    pub history: Vec<Trace>,
    pending: Option<Pending>,
    last_choose: Option<(String, ChooseResult)>,
}

impl Session {
    pub fn pending(&self) -> Option<&[Preview]> {
        self.pending.as_ref().map(|p| p.previews.as_slice())
    }
}

/// One line of a session log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SessionEvent {
    Open {
        seq: u64,
        ts: u64,
        session: String,
        user: String,
        world_id: String,
    },
    Utterance {
        seq: u64,
        ts: u64,
        session: String,
        text: String,
        candidates: Vec<String>,
    },
    Choose {
        seq: u64,
        ts: u64,
        session: String,
        candidate: usize,
        program_text: String,
        world_id: String,
        /// Hash of the parameters after the update.
        params: String,
    },
    Define {
        seq: u64,
        ts: u64,
        session: String,
        utterance: String,
        definition: String,
        used: String,
        rules: Vec<String>,
    },
}

impl SessionEvent {
    pub fn seq(&self) -> u64 {
        match self {
            SessionEvent::Open { seq, .. }
            | SessionEvent::Utterance { seq, .. }
            | SessionEvent::Choose { seq, .. }
            | SessionEvent::Define { seq, .. } => *seq,
        }
    }

    pub fn ts(&self) -> u64 {
        match self {
            SessionEvent::Open { ts, .. }
            | SessionEvent::Utterance { ts, .. }
            | SessionEvent::Choose { ts, .. }
            | SessionEvent::Define { ts, .. } => *ts,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("no session {0}")]
    UnknownSession(String),
    #[error("empty text")]
    EmptyText,
    #[error("no pending candidates")]
    NoPending,
    #[error("pending candidates expired")]
    Expired,
    #[error("no candidate {0}")]
    BadCandidate(usize),
    #[error("definition not parsable: {0}")]
    DefinitionNotParsable(ParseError),
    #[error("definition not realizable: {}", .0.join("; "))]
    Unrealizable(Vec<String>),
    #[error("replay diverged at event {seq}: {reason}")]
    Replay { seq: u64, reason: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

impl EngineError {
    /// HTTP status for this error.
    pub fn status(&self) -> u16 {
        match self {
            EngineError::UnknownSession(_) => 404,
            EngineError::EmptyText
            | EngineError::BadCandidate(_)
            | EngineError::DefinitionNotParsable(_)
            | EngineError::Unrealizable(_) => 422,
            EngineError::NoPending | EngineError::Expired => 409,
            EngineError::Replay { .. } => 500,
            EngineError::Store(e) => match e {
                StoreError::NotOwner { .. } | StoreError::CoreRuleImmutable(_) => 403,
                StoreError::NotFound(_) | StoreError::UnknownWorld(_) => 404,
                StoreError::DuplicateId(_) => 409,
                StoreError::BadId(_) => 422,
                _ => 500,
            },
        }
    }
}

pub fn params_hash(p: &crate::semparse::ModelParams) -> String {
    let d = Sha256::digest(params_json(p).as_bytes());
    d.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Sessions over a shared store.
pub struct Engine {
    store: Store,
    sessions: BTreeMap<String, Session>,
    embeddings: Option<Arc<EmbeddingTable>>,
    clock: Clock,
    next_session: u64,
}

impl Engine {
    pub fn new(store: Store, embeddings: Option<Arc<EmbeddingTable>>) -> Engine {
        let next_session = store
            .session_logs()
            .keys()
            .filter_map(|k| k.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()))
            .max()
            .map_or(1, |n| n + 1);
        Engine {
            store,
            sessions: BTreeMap::new(),
            embeddings,
            clock: system_clock(),
            next_session,
        }
    }

    pub fn with_clock(mut self, clock: Clock) -> Engine {
        self.clock = clock;
        self
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut Store {
        &mut self.store
    }

    pub fn embeddings(&self) -> Option<&EmbeddingTable> {
        self.embeddings.as_deref()
    }

    pub fn session(&self, id: &str) -> Result<&Session, EngineError> {
        self.sessions.get(id).ok_or_else(|| EngineError::UnknownSession(id.to_string()))
    }

    fn log(&mut self, session: &str, ev: &SessionEvent) -> Result<(), EngineError> {
        let line = serde_json::to_string(ev).expect("event serializes");
        self.store.append_session(session, &line)?;
        Ok(())
    }

    /// The live grammar plus the named areas of `w`.
    pub fn grammar_for(&self, w: &GridWorld) -> Grammar {
        let mut g = self.store.grammar().clone();
        for name in w.named_areas.keys() {
            g.add_area_name(name);
        }
        g
    }

    pub fn open_session(&mut self, user: &str, world_id: &str) -> Result<(String, GridWorld), EngineError> {
        let world = self.store.world(world_id)?.clone();
        let id = format!("s{}", self.next_session);
        self.next_session += 1;
        let ev = SessionEvent::Open {
            seq: self.store.next_seq(),
            ts: (self.clock)(),
            session: id.clone(),
            user: user.to_string(),
            world_id: world_id.to_string(),
        };
        self.log(&id, &ev)?;
        self.sessions.insert(
            id.clone(),
            Session {
                id: id.clone(),
                user: user.to_string(),
                world: world.clone(),
                world_id: world_id.to_string(),
                history: Vec::new(),
                pending: None,
                last_choose: None,
            },
        );
        Ok((id, world))
    }

    /// Parses and previews; the session world and θ are left untouched.
    pub fn utterance(&mut self, session: &str, text: &str) -> Result<UtteranceResult, EngineError> {
        let s = self.session(session)?;
        let toks = words(text);
        if toks.is_empty() {
            return Err(EngineError::EmptyText);
        }
        let g = self.grammar_for(&s.world);
        let now = (self.clock)();
        let (result, pending) = match parse_text(text, &toks, &s.user, &g, self.store.params()) {
            Err(error) => (UtteranceResult::Unparsable { error }, None),
            Ok(cands) => {
                let mut previews = Vec::new();
                let mut worlds = Vec::new();
                let mut index = Vec::new();
                for (i, c) in cands.iter().enumerate() {
                    if previews.len() == PREVIEW_COUNT {
                        break;
                    }
                    let program_text = pretty(&c.program);
                    if previews.iter().any(|p: &Preview| p.program_text == program_text) {
                        continue;
                    }
                    let out = execute(&c.program, &s.world);
                    previews.push(Preview {
                        id: previews.len(),
                        program_text,
                        trace: out.trace,
                        score: c.score,
                        prob: c.prob,
                    });
                    worlds.push(out.world);
                    index.push(i);
                }
                let pending = Pending {
                    previews: previews.clone(),
                    worlds,
                    features: cands.iter().map(|c| c.features.clone()).collect(),
                    index,
                    created: now,
                };
                (UtteranceResult::Ok { candidates: previews }, Some(pending))
            }
        };
        let shown = match &result {
            UtteranceResult::Ok { candidates } => candidates.iter().map(|c| c.program_text.clone()).collect(),
            UtteranceResult::Unparsable { .. } => Vec::new(),
        };
        let ev = SessionEvent::Utterance {
            seq: self.store.next_seq(),
            ts: now,
            session: session.to_string(),
            text: text.to_string(),
            candidates: shown,
        };
        self.log(session, &ev)?;
        let s = self.sessions.get_mut(session).expect("session exists");
        s.pending = pending;
        Ok(result)
    }

    /// Commits a previewed candidate and updates θ toward it. Repeating a request with
    /// the same idempotency key returns the first response without applying it again.
    pub fn choose(
        &mut self,
        session: &str,
        candidate: usize,
        idempotency_key: Option<&str>,
    ) -> Result<ChooseResult, EngineError> {
        let now = (self.clock)();
        let s = self.sessions.get_mut(session).ok_or_else(|| EngineError::UnknownSession(session.to_string()))?;
        if let (Some(k), Some((last, res))) = (idempotency_key, &s.last_choose) {
            if k == last {
                return Ok(res.clone());
            }
        }
        let pending = s.pending.as_ref().ok_or(EngineError::NoPending)?;
        if now.saturating_sub(pending.created) > CANDIDATE_TTL_MS {
            s.pending = None;
            return Err(EngineError::Expired);
        }
        if candidate >= pending.previews.len() {
            return Err(EngineError::BadCandidate(candidate));
        }
        let pending = s.pending.take().expect("checked");
        let world = pending.worlds[candidate].clone();
        let trace = pending.previews[candidate].trace.clone();
        let program_text = pending.previews[candidate].program_text.clone();

        let mut params = self.store.params().clone();
        params
            .update(&pending.features, pending.index[candidate])
            .expect("preview index is in range");
        self.store.set_params(params)?;
        let world_id = self.store.put_world(&world)?;

        let s = self.sessions.get_mut(session).expect("session exists");
        s.world = world.clone();
        s.world_id = world_id.clone();
        s.history.push(trace.clone());
        let res = ChooseResult {
            world,
            world_id: world_id.clone(),
            trace,
        };
        if let Some(k) = idempotency_key {
            s.last_choose = Some((k.to_string(), res.clone()));
        }
        let ev = SessionEvent::Choose {
            seq: self.store.next_seq(),
            ts: now,
            session: session.to_string(),
            candidate,
            program_text,
            world_id,
            params: params_hash(self.store.params()),
        };
        self.log(session, &ev)?;
        Ok(res)
    }

    /// Generalizes `definition` on the session world, induces rules for `utterance`
    /// from the result, and stores them. The session world is not changed.
    pub fn define(&mut self, session: &str, utterance: &str, definition: &str) -> Result<DefineResult, EngineError> {
        let s = self.session(session)?;
        if words(utterance).is_empty() || words(definition).is_empty() {
            return Err(EngineError::EmptyText);
        }
        let (user, world) = (s.user.clone(), s.world.clone());
        let g = self.grammar_for(&world);
        let params = self.store.params().clone();
        let gen = generalize(utterance, definition, &user, &world, &g, &params, self.embeddings.as_deref())
            .map_err(|e| match e {
                GeneralizeError::NotParsable(p) => EngineError::DefinitionNotParsable(p),
                GeneralizeError::Unrealizable(w) => EngineError::Unrealizable(w),
            })?;
        let used = if gen.is_original { definition.to_string() } else { gen.text.clone() };
        let mut rules = match induce(utterance, &used, &user, &g, &params) {
            Ok(r) => r,
            Err(InductError::DefinitionNotParsable(p)) => return Err(EngineError::DefinitionNotParsable(p)),
            Err(e) => {
                log::info!("no rules induced for {utterance:?}: {e}");
                Vec::new()
            }
        };
        let context = if rules.is_empty() { None } else { Some(self.store.put_world(&world)?) };
        for r in &mut rules {
            r.context = context.clone();
            if !gen.is_original {
                r.origin = Origin::InducedGeneralized;
            }
        }
        let ids = self.store.add_rules(rules, &user)?;
        let induced: Vec<GrammarRule> = ids
            .iter()
            .map(|id| self.store.grammar().get(id).expect("just added").clone())
            .collect();
        let ev = SessionEvent::Define {
            seq: self.store.next_seq(),
            ts: (self.clock)(),
            session: session.to_string(),
            utterance: utterance.to_string(),
            definition: definition.to_string(),
            used: used.clone(),
            rules: ids,
        };
        self.log(session, &ev)?;
        Ok(DefineResult {
            induced_rules: induced,
            generalized_from: used,
            generalized: !gen.is_original,
        })
    }

    pub fn list_rules(&self, filter: &RuleFilter) -> Vec<GrammarRule> {
        self.store.list_rules(filter)
    }

    pub fn delete_rule(&mut self, id: &str, user: &str) -> Result<(), EngineError> {
        Ok(self.store.delete_rule(id, user)?)
    }

    /// Rebuilds state by replaying the session logs and rule deletions of `src` into
    /// `dst`, which should hold the same worlds and no rules. Every recorded outcome
    /// is checked against the recomputed one.
    pub fn replay(src: &Store, dst: Store, embeddings: Option<Arc<EmbeddingTable>>) -> Result<Engine, EngineError> {
        enum Ev {
            Session(SessionEvent),
            Delete(String, String),
        }
        let mut events: Vec<(u64, Ev)> = Vec::new();
        for lines in src.session_logs().values() {
            for l in lines {
                let ev: SessionEvent = serde_json::from_str(l).map_err(|e| EngineError::Replay {
                    seq: 0,
                    reason: format!("bad log line: {e}"),
                })?;
                events.push((ev.seq(), Ev::Session(ev)));
            }
        }
        for ev in src.rule_events()? {
            if let RuleEvent::Delete { seq, id, user } = ev {
                events.push((seq, Ev::Delete(id, user)));
            }
        }
        events.sort_by_key(|e| e.0);

        let now = Arc::new(AtomicU64::new(0));
        let t = now.clone();
        let mut eng = Engine::new(dst, embeddings).with_clock(Arc::new(move || t.load(Ordering::SeqCst)));
        let diverged = |seq: u64, reason: String| EngineError::Replay { seq, reason };
        for (seq, ev) in events {
            match ev {
                Ev::Delete(id, user) => eng.delete_rule(&id, &user)?,
                Ev::Session(ev) => {
                    now.store(ev.ts(), Ordering::SeqCst);
                    match ev {
                        SessionEvent::Open { session, user, world_id, .. } => {
                            let (id, _) = eng.open_session(&user, &world_id)?;
                            if id != session {
                                return Err(diverged(seq, format!("session id {id}, recorded {session}")));
                            }
                        }
                        SessionEvent::Utterance { session, text, candidates, .. } => {
                            let shown = match eng.utterance(&session, &text)? {
                                UtteranceResult::Ok { candidates } => {
                                    candidates.into_iter().map(|c| c.program_text).collect()
                                }
                                UtteranceResult::Unparsable { .. } => Vec::new(),
                            };
                            if shown != candidates {
                                return Err(diverged(seq, format!("candidates {shown:?}, recorded {candidates:?}")));
                            }
                        }
                        SessionEvent::Choose { session, candidate, world_id, params, .. } => {
                            let r = eng.choose(&session, candidate, None)?;
                            if r.world_id != world_id || params_hash(eng.store.params()) != params {
                                return Err(diverged(seq, "world or parameters differ".into()));
                            }
                        }
                        SessionEvent::Define { session, utterance, definition, rules, .. } => {
                            let r = eng.define(&session, &utterance, &definition)?;
                            let ids: Vec<String> = r.induced_rules.into_iter().map(|r| r.id).collect();
                            if ids != rules {
                                return Err(diverged(seq, format!("rules {ids:?}, recorded {rules:?}")));
                            }
                        }
                    }
                }
            }
        }
        Ok(eng)
    }
}
