//! Session bookkeeping around the dialogue engine: creation, expiry,
//! persistence and the request/response shapes of the HTTP API.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use solace_core::classifier::TaskTag;
use solace_core::dialogue::{
    Bot, ChatResponder, Engine, KnowledgeRecord, KnowledgeSink, RouteRecord, ScoreWindow, Session, Turn,
};
use solace_core::responder::Role;

use crate::checkpoint::write_atomic;
use crate::config::Config;
use crate::error::{Error, IoContext, Result};
use crate::files::read_embeddings;
use crate::models::{load_classifier, load_lm, load_seq2seq};
use crate::store::NdjsonStore;

pub const MAX_MESSAGE_CHARS: usize = 2000;

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MessageResponse {
    pub session_id: String,
    pub reply: String,
    pub bot_used: String,
    pub mental_score: f64,
    pub sentiment_score: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TurnJson {
    pub user_text: String,
    pub reply_text: String,
    pub mental_score: f64,
    pub sentiment_score: f64,
    pub bot_used: String,
    pub per_message_bot: String,
    pub forced_bot: Option<String>,
    pub fallback: bool,
    pub error: Option<String>,
    pub timestamp: u64,
}

impl From<&Turn> for TurnJson {
    fn from(t: &Turn) -> Self {
        TurnJson {
            user_text: t.user_text.clone(),
            reply_text: t.reply_text.clone(),
            mental_score: t.mental_score,
            sentiment_score: t.sentiment_score,
            bot_used: t.bot_used().as_str().into(),
            per_message_bot: t.route.per_message.as_str().into(),
            forced_bot: t.route.forced.map(|b| b.as_str().into()),
            fallback: t.fallback,
            error: t.error.clone(),
            timestamp: t.timestamp,
        }
    }
}

fn bot(s: &str) -> Option<Bot> {
    Bot::parse(s)
}

impl TurnJson {
    fn to_turn(&self) -> Option<Turn> {
        Some(Turn {
            user_text: self.user_text.clone(),
            reply_text: self.reply_text.clone(),
            mental_score: self.mental_score,
            sentiment_score: self.sentiment_score,
            route: RouteRecord {
                per_message: bot(&self.per_message_bot)?,
                forced: match &self.forced_bot {
                    Some(b) => Some(bot(b)?),
                    None => None,
                },
                bot_used: bot(&self.bot_used)?,
            },
            fallback: self.fallback,
            error: self.error.clone(),
            timestamp: self.timestamp,
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
struct SessionJson {
    id: String,
    turns: Vec<TurnJson>,
    window: usize,
    mental_buf: Vec<f64>,
    sent_buf: Vec<f64>,
    active_bot: String,
    forced: Option<String>,
    created: u64,
    updated: u64,
}

impl From<&Session> for SessionJson {
    fn from(s: &Session) -> Self {
        SessionJson {
            id: s.id.clone(),
            turns: s.turns.iter().map(TurnJson::from).collect(),
            window: s.mental_buf.capacity(),
            mental_buf: s.mental_buf.values().collect(),
            sent_buf: s.sent_buf.values().collect(),
            active_bot: s.active_bot.as_str().into(),
            forced: s.forced.map(|b| b.as_str().into()),
            created: s.created,
            updated: s.updated,
        }
    }
}

impl SessionJson {
    fn to_session(&self) -> Option<Session> {
        let fill = |vals: &[f64]| {
            let mut w = ScoreWindow::new(self.window);
            vals.iter().for_each(|&v| w.push(v));
            w
        };
        Some(Session {
            id: self.id.clone(),
            turns: self.turns.iter().map(TurnJson::to_turn).collect::<Option<_>>()?,
            mental_buf: fill(&self.mental_buf),
            sent_buf: fill(&self.sent_buf),
            active_bot: bot(&self.active_bot)?,
            forced: match &self.forced {
                Some(b) => Some(bot(b)?),
                None => None,
            },
            created: self.created,
            updated: self.updated,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ServiceError {
    BadRequest(String),
    NotFound(String),
    Internal { message: String, reply: String },
}

impl std::fmt::Display for ServiceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ServiceError::BadRequest(m) | ServiceError::NotFound(m) => f.write_str(m),
            ServiceError::Internal { message, .. } => f.write_str(message),
        }
    }
}

/// Checks a user message before it reaches the engine.
pub fn validate_text(text: &str) -> Result<(), ServiceError> {
    if text.trim().is_empty() {
        return Err(ServiceError::BadRequest("text must not be empty".into()));
    }
    let n = text.chars().count();
    if n > MAX_MESSAGE_CHARS {
        return Err(ServiceError::BadRequest(format!(
            "text has {n} characters; the limit is {MAX_MESSAGE_CHARS}"
        )));
    }
    Ok(())
}

type SharedStore = Mutex<Box<dyn KnowledgeSink + Send>>;

/// Locks the shared store only for the duration of one append.
struct StoreHandle<'a>(&'a SharedStore);

impl KnowledgeSink for StoreHandle<'_> {
    fn append(&mut self, record: &KnowledgeRecord) -> solace_core::Result<()> {
        lock(self.0).append(record)
    }
}

fn lock<T: ?Sized>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

pub struct ChatService {
    engine: Engine,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    store: SharedStore,
    sessions_dir: Option<PathBuf>,
    ttl_secs: u64,
    clock: Box<dyn Fn() -> u64 + Send + Sync>,
}

impl ChatService {
    pub fn new(engine: Engine, store: Box<dyn KnowledgeSink + Send>) -> Self {
        ChatService {
            engine,
            sessions: Mutex::new(HashMap::new()),
            store: Mutex::new(store),
            sessions_dir: None,
            ttl_secs: 24 * 3600,
            clock: Box::new(unix_now),
        }
    }

    pub fn with_ttl(mut self, secs: u64) -> Self {
        self.ttl_secs = secs;
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    /// Persists sessions under `dir` and restores unexpired ones from it.
    pub fn with_sessions_dir(mut self, dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).at(dir)?;
        let now = (self.clock)();
        let mut map = HashMap::new();
        for entry in fs::read_dir(dir).at(dir)? {
            let path = entry.at(dir)?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let text = fs::read_to_string(&path).at(&path)?;
            let Some(session) = serde_json::from_str::<SessionJson>(&text).ok().and_then(|j| j.to_session()) else {
                tracing::warn!(path = %path.display(), "skipping unreadable session file");
                continue;
            };
            if session.is_expired(now, self.ttl_secs) {
                let _ = fs::remove_file(&path);
                continue;
            }
            map.insert(session.id.clone(), Arc::new(Mutex::new(session)));
        }
        self.sessions = Mutex::new(map);
        self.sessions_dir = Some(dir.to_path_buf());
        Ok(self)
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    pub fn session_count(&self) -> usize {
        lock(&self.sessions).len()
    }

    fn session_path(&self, id: &str) -> Option<PathBuf> {
        self.sessions_dir.as_ref().map(|d| d.join(format!("{id}.json")))
    }

    fn persist(&self, s: &Session) {
        if let Some(path) = self.session_path(&s.id) {
            let json = serde_json::to_vec(&SessionJson::from(s)).expect("session serializes");
            if let Err(e) = write_atomic(&path, &json) {
                tracing::warn!(error = %e, "could not persist session");
            }
        }
    }

    fn purge_expired(&self, now: u64) {
        let mut map = lock(&self.sessions);
        let expired: Vec<String> = map
            .iter()
            .filter(|(_, s)| s.try_lock().map(|s| s.is_expired(now, self.ttl_secs)).unwrap_or(false))
            .map(|(id, _)| id.clone())
            .collect();
        for id in expired {
            map.remove(&id);
            if let Some(p) = self.session_path(&id) {
                let _ = fs::remove_file(p);
            }
        }
    }

    pub fn create_session(&self) -> String {
        let now = (self.clock)();
        self.purge_expired(now);
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = self.engine.new_session(id.clone(), now);
        self.persist(&session);
        lock(&self.sessions).insert(id.clone(), Arc::new(Mutex::new(session)));
        id
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>, ServiceError> {
        let now = (self.clock)();
        let s = lock(&self.sessions)
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("unknown session `{id}`")))?;
        if lock(&s).is_expired(now, self.ttl_secs) {
            lock(&self.sessions).remove(id);
            if let Some(p) = self.session_path(id) {
                let _ = fs::remove_file(p);
            }
            return Err(ServiceError::NotFound(format!("session `{id}` has expired")));
        }
        Ok(s)
    }

    /// One chat turn. Messages within a session are handled one at a time.
    pub fn handle_message(&self, session_id: Option<&str>, text: &str) -> Result<MessageResponse, ServiceError> {
        validate_text(text)?;
        let id = match session_id {
            Some(id) => id.to_string(),
            None => self.create_session(),
        };
        let handle = self.get(&id)?;
        let mut session = lock(&handle);
        let now = (self.clock)();
        let mut sink = StoreHandle(&self.store);
        match self.engine.respond(&mut session, text, &mut sink, now) {
            Ok(turn) => {
                if let Some(e) = &turn.error {
                    tracing::warn!(session = %id, error = %e, "turn completed with an error");
                }
                self.persist(&session);
                Ok(MessageResponse {
                    session_id: id,
                    reply: turn.reply_text,
                    bot_used: turn.route.bot_used.as_str().into(),
                    mental_score: turn.mental_score,
                    sentiment_score: turn.sentiment_score,
                    fallback: turn.fallback,
                })
            }
            Err(e) => Err(ServiceError::Internal {
                message: e.to_string(),
                reply: self.engine.fallback.clone(),
            }),
        }
    }

    pub fn history(&self, id: &str) -> Result<Vec<TurnJson>, ServiceError> {
        let s = self.get(id)?;
        let s = lock(&s);
        Ok(s.turns.iter().map(TurnJson::from).collect())
    }
}

/// Loads every model named in the config and assembles the engine.
pub fn build_engine(cfg: &Config) -> Result<Engine> {
    let table = Arc::new(read_embeddings(&cfg.embeddings, cfg.vocab_cap)?);
    let mental = load_classifier(&cfg.models.mental, table.clone())?;
    let sentiment = load_classifier(&cfg.models.sentiment, table.clone())?;
    if mental.task != TaskTag::Relatedness {
        return Err(Error::Config("models.mental must be a relatedness classifier".into()));
    }
    if sentiment.task != TaskTag::Sentiment {
        return Err(Error::Config("models.sentiment must be a sentiment classifier".into()));
    }
    let lm = cfg.models.lm.as_deref().map(|p| load_lm(p, table.clone())).transpose()?;
    let responder = |path: &Path, role: Role| -> Result<ChatResponder> {
        let model = load_seq2seq(path, table.clone())?;
        if model.role != role {
            return Err(Error::Config(format!(
                "{} holds a {} responder, expected {}",
                path.display(),
                model.role.as_str(),
                role.as_str()
            )));
        }
        Ok(ChatResponder {
            model,
            lm: lm.clone(),
            decode: cfg.decode(),
            fallback: cfg.fallback_reply.clone(),
        })
    };
    let casual = responder(&cfg.models.casual, Role::Casual)?;
    let counseling = responder(&cfg.models.counseling, Role::Counseling)?;
    let mut engine = Engine::new(Box::new(mental), Box::new(sentiment), Box::new(casual), Box::new(counseling));
    engine.routing = cfg.routing();
    engine.fallback = cfg.fallback_reply.clone();
    Ok(engine)
}

/// Engine plus the on-disk store and session directory named in the config.
pub fn build_service(cfg: &Config) -> Result<ChatService> {
    let engine = build_engine(cfg)?;
    let store = NdjsonStore::open(&cfg.store)?;
    let svc = ChatService::new(engine, Box::new(store)).with_ttl(cfg.session_ttl_secs);
    match &cfg.sessions_dir {
        Some(dir) => svc.with_sessions_dir(dir),
        None => Ok(svc),
    }
}
