//! Durable state: the induced-rule log, model parameters, worlds and session logs.
//!
//! Layout of a data directory:
//!
//! ```text
//! rules.jsonl        append-only rule events (add / delete tombstones)
//! params.json        model parameters
//! worlds/<id>.json   world files; snapshots are keyed by content hash
//! sessions/<id>.jsonl  per-session event logs
//! ```
//!
//! A store without a directory keeps everything in memory.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::lang::{GrammarRule, Origin};
use crate::semparse::{Grammar, GrammarError, ModelParams};
use crate::world::GridWorld;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{0}: {1}")]
    Io(String, std::io::Error),
    #[error("{file}:{line}: {reason}")]
    Corrupt { file: String, line: usize, reason: String },
    #[error("duplicate rule id {0}")]
    DuplicateId(String),
    #[error("rule {id} belongs to {author}")]
    NotOwner { id: String, author: String },
    #[error("core rule {0} cannot be deleted")]
    CoreRuleImmutable(String),
    #[error("no rule {0}")]
    NotFound(String),
    #[error("no world {0}")]
    UnknownWorld(String),
    #[error("invalid identifier {0:?}")]
    BadId(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// One line of `rules.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum RuleEvent {
    Add { seq: u64, rule: GrammarRule },
    Delete { seq: u64, id: String, user: String },
    /// Written at the head of a compacted log.
    Meta { next_rule: u64, next_seq: u64 },
}

/// Which rules `list_rules` returns.
#[derive(Debug, Clone, Default)]
pub struct RuleFilter {
    pub author: Option<String>,
    pub include_core: bool,
}

fn io_err(p: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |e| StoreError::Io(p.display().to_string(), e)
}

/// Identifiers used as file names: ASCII alphanumerics, `-` and `_`.
pub fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 128 && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_')
}

/// Appends one line and syncs it to disk before returning.
pub fn append_line(path: &Path, line: &str) -> Result<(), StoreError> {
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    f.write_all(line.as_bytes()).map_err(io_err(path))?;
    f.write_all(b"\n").map_err(io_err(path))?;
    f.sync_data().map_err(io_err(path))
}

/// Writes through a temporary file and renames, so readers never see partial content.
pub fn write_atomic(path: &Path, content: &str) -> Result<(), StoreError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let mut tmp = tempfile_in(dir)?;
    tmp.1.write_all(content.as_bytes()).map_err(io_err(&tmp.0))?;
    tmp.1.sync_data().map_err(io_err(&tmp.0))?;
    fs::rename(&tmp.0, path).map_err(io_err(path))
}

fn tempfile_in(dir: &Path) -> Result<(PathBuf, File), StoreError> {
    for i in 0..1000u32 {
        let p = dir.join(format!(".tmp-{}-{i}", std::process::id()));
        match OpenOptions::new().write(true).create_new(true).open(&p) {
            Ok(f) => return Ok((p, f)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(StoreError::Io(p.display().to_string(), e)),
        }
    }
    Err(StoreError::Io(
        dir.display().to_string(),
        std::io::Error::other("no free temporary file name"),
    ))
}

/// Reads a JSONL file. A torn final line (no trailing newline) is dropped with a warning.
pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, StoreError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(StoreError::Io(path.display().to_string(), e)),
    };
    let complete = text.ends_with('\n');
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(v) => out.push(v),
            Err(_) if i + 1 == lines.len() && !complete => {
                log::warn!("{}: dropping torn final line", path.display());
            }
            Err(e) => {
                return Err(StoreError::Corrupt {
                    file: path.display().to_string(),
                    line: i + 1,
                    reason: e.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Rules, parameters, worlds and session logs, with optional on-disk persistence.
#[derive(Debug)]
pub struct Store {
    dir: Option<PathBuf>,
    grammar: Grammar,
    params: ModelParams,
    worlds: BTreeMap<String, GridWorld>,
    sessions: BTreeMap<String, Vec<String>>,
    next_rule: u64,
    next_seq: u64,
}

impl Store {
    pub fn in_memory() -> Store {
        Store {
            dir: None,
            grammar: Grammar::core(),
            params: ModelParams::default(),
            worlds: BTreeMap::new(),
            sessions: BTreeMap::new(),
            next_rule: 1,
            next_seq: 1,
        }
    }

    /// Opens (creating if needed) a data directory and replays its logs.
    pub fn open(dir: impl Into<PathBuf>) -> Result<Store, StoreError> {
        let dir = dir.into();
        for sub in ["", "worlds", "sessions"] {
            let p = dir.join(sub);
            fs::create_dir_all(&p).map_err(io_err(&p))?;
        }
        let mut s = Store::in_memory();

        let wdir = dir.join("worlds");
        let mut entries: Vec<PathBuf> = fs::read_dir(&wdir)
            .map_err(io_err(&wdir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        entries.sort();
        for p in entries {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            if !valid_id(&id) {
                continue;
            }
            let text = fs::read_to_string(&p).map_err(io_err(&p))?;
            let w: GridWorld = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                file: p.display().to_string(),
                line: e.line(),
                reason: e.to_string(),
            })?;
            s.worlds.insert(id, w);
        }

        let events: Vec<RuleEvent> = read_jsonl(&dir.join("rules.jsonl"))?;
        for (i, ev) in events.into_iter().enumerate() {
            s.apply_rule_event(ev).map_err(|e| StoreError::Corrupt {
                file: "rules.jsonl".into(),
                line: i + 1,
                reason: e.to_string(),
            })?;
        }

        let ppath = dir.join("params.json");
        if ppath.exists() {
            let text = fs::read_to_string(&ppath).map_err(io_err(&ppath))?;
            s.params = serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
                file: ppath.display().to_string(),
                line: e.line(),
                reason: e.to_string(),
            })?;
        }

        let sdir = dir.join("sessions");
        let mut logs: Vec<PathBuf> = fs::read_dir(&sdir)
            .map_err(io_err(&sdir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
            .collect();
        logs.sort();
        for p in logs {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let lines: Vec<serde_json::Value> = read_jsonl(&p)?;
            for l in &lines {
                if let Some(seq) = l.get("seq").and_then(|v| v.as_u64()) {
                    s.next_seq = s.next_seq.max(seq + 1);
                }
            }
            s.sessions.insert(id, lines.iter().map(|l| l.to_string()).collect());
        }
        s.dir = Some(dir);
        Ok(s)
    }

    fn apply_rule_event(&mut self, ev: RuleEvent) -> Result<(), StoreError> {
        match ev {
            RuleEvent::Add { seq, rule } => {
                self.bump_rule_counter(&rule.id);
                self.next_seq = self.next_seq.max(seq + 1);
                self.grammar.add_rule(rule)?;
            }
            RuleEvent::Delete { seq, id, .. } => {
                self.next_seq = self.next_seq.max(seq + 1);
                self.grammar.remove_rule(&id).ok_or(StoreError::NotFound(id))?;
            }
            RuleEvent::Meta { next_rule, next_seq } => {
                self.next_rule = self.next_rule.max(next_rule);
                self.next_seq = self.next_seq.max(next_seq);
            }
        }
        Ok(())
    }

    fn bump_rule_counter(&mut self, id: &str) {
        if let Some(n) = id.strip_prefix('r').and_then(|n| n.parse::<u64>().ok()) {
            self.next_rule = self.next_rule.max(n + 1);
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Core plus live induced rules.
    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    /// Next value of the store-wide event counter.
    pub fn next_seq(&mut self) -> u64 {
        let s = self.next_seq;
        self.next_seq += 1;
        s
    }

    fn rules_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join("rules.jsonl"))
    }

    /// Adds induced rules authored by `user`. Rules with an empty or pending id get a
    /// fresh `r<n>` id. Each rule is on disk before it is visible to the parser.
    pub fn add_rules(&mut self, rules: Vec<GrammarRule>, user: &str) -> Result<Vec<String>, StoreError> {
        let mut ids = Vec::with_capacity(rules.len());
        for mut rule in rules {
            if rule.id.is_empty() || rule.id == crate::induct::PENDING_ID {
                rule.id = format!("r{}", self.next_rule);
            }
            if self.grammar.get(&rule.id).is_some() {
                return Err(StoreError::DuplicateId(rule.id));
            }
            if rule.origin == Origin::Core {
                return Err(StoreError::CoreRuleImmutable(rule.id));
            }
            rule.author = user.to_string();
            crate::semparse::compile_template(&rule)?;
            let seq = self.next_seq;
            let ev = RuleEvent::Add { seq, rule: rule.clone() };
            if let Some(p) = self.rules_path() {
                append_line(&p, &serde_json::to_string(&ev).expect("event serializes"))?;
            }
            self.next_seq += 1;
            self.bump_rule_counter(&rule.id);
            ids.push(rule.id.clone());
            self.grammar.add_rule(rule)?;
        }
        Ok(ids)
    }

    /// Removes `id` if `user` authored it.
    pub fn delete_rule(&mut self, id: &str, user: &str) -> Result<(), StoreError> {
        let rule = self.grammar.get(id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        if rule.origin.is_core() {
            return Err(StoreError::CoreRuleImmutable(id.to_string()));
        }
        if rule.author != user {
            return Err(StoreError::NotOwner {
                id: id.to_string(),
                author: rule.author.clone(),
            });
        }
        let ev = RuleEvent::Delete {
            seq: self.next_seq,
            id: id.to_string(),
            user: user.to_string(),
        };
        if let Some(p) = self.rules_path() {
            append_line(&p, &serde_json::to_string(&ev).expect("event serializes"))?;
        }
        self.next_seq += 1;
        self.grammar.remove_rule(id);
        Ok(())
    }

    /// Rules in creation order (core first).
    pub fn list_rules(&self, filter: &RuleFilter) -> Vec<GrammarRule> {
        self.grammar
            .rules()
            .filter(|r| filter.include_core || !r.origin.is_core())
            .filter(|r| filter.author.as_ref().is_none_or(|a| &r.author == a))
            .cloned()
            .collect()
    }

    /// The rule log events as recorded (deletes included); used for replay.
    pub fn rule_events(&self) -> Result<Vec<RuleEvent>, StoreError> {
        match self.rules_path() {
            Some(p) => read_jsonl(&p),
            None => Ok(Vec::new()),
        }
    }

    pub fn set_params(&mut self, params: ModelParams) -> Result<(), StoreError> {
        if let Some(d) = &self.dir {
            write_atomic(&d.join("params.json"), &params_json(&params))?;
        }
        self.params = params;
        Ok(())
    }

    /// Stores a snapshot under its content hash and returns the id.
    pub fn put_world(&mut self, w: &GridWorld) -> Result<String, StoreError> {
        let id = w.content_hash();
        if !self.worlds.contains_key(&id) {
            self.save_world(&id, w)?;
        }
        Ok(id)
    }

    /// Stores a world under a chosen name, replacing any previous one.
    pub fn import_world(&mut self, name: &str, w: &GridWorld) -> Result<(), StoreError> {
        if !valid_id(name) {
            return Err(StoreError::BadId(name.to_string()));
        }
        self.save_world(name, w)
    }

    fn save_world(&mut self, id: &str, w: &GridWorld) -> Result<(), StoreError> {
        if let Some(d) = &self.dir {
            let text = serde_json::to_string_pretty(w).expect("world serializes");
            write_atomic(&d.join("worlds").join(format!("{id}.json")), &text)?;
        }
        self.worlds.insert(id.to_string(), w.clone());
        Ok(())
    }

    pub fn world(&self, id: &str) -> Result<&GridWorld, StoreError> {
        self.worlds.get(id).ok_or_else(|| StoreError::UnknownWorld(id.to_string()))
    }

    pub fn world_ids(&self) -> impl Iterator<Item = &str> {
        self.worlds.keys().map(String::as_str)
    }

    /// Appends a JSON line to a session's log.
    pub fn append_session(&mut self, session: &str, line: &str) -> Result<(), StoreError> {
        if !valid_id(session) {
            return Err(StoreError::BadId(session.to_string()));
        }
        if let Some(d) = &self.dir {
            append_line(&d.join("sessions").join(format!("{session}.jsonl")), line)?;
        }
        self.sessions.entry(session.to_string()).or_default().push(line.to_string());
        Ok(())
    }

    /// All session logs, keyed by session id, lines in append order.
    pub fn session_logs(&self) -> &BTreeMap<String, Vec<String>> {
        &self.sessions
    }

    /// Rewrites `rules.jsonl` to hold only live rules, preserving ids and counters.
    pub fn compact(&mut self) -> Result<(), StoreError> {
        let Some(p) = self.rules_path() else { return Ok(()) };
        let mut out = serde_json::to_string(&RuleEvent::Meta {
            next_rule: self.next_rule,
            next_seq: self.next_seq,
        })
        .expect("event serializes");
        out.push('\n');
        for ev in self.rule_events()? {
            if let RuleEvent::Add { rule, .. } = &ev {
                if self.grammar.get(&rule.id).is_some() {
                    out.push_str(&serde_json::to_string(&ev).expect("event serializes"));
                    out.push('\n');
                }
            }
        }
        write_atomic(&p, &out)
    }
}

/// Canonical `params.json` text.
pub fn params_json(p: &ModelParams) -> String {
    serde_json::to_string_pretty(p).expect("params serialize")
}
