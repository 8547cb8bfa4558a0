//! Per-session routing between the casual and counseling responders.
//!
//! Each message is scored by the mental-health relatedness classifier and the
//! sentiment classifier. A message that is unrelated, or related but
//! positive, goes to the casual bot; a related, negative message goes to the
//! counseling bot. Once five scores of each kind have accumulated, the
//! moving averages take over and pick the bot for the following turn.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::classifier::Scorer;
use crate::corpus::Conversation;
use crate::responder::{generate, DecodeConfig, LanguageModel, Seq2SeqModel, DEFAULT_FALLBACK};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Bot {
    Casual,
    Counseling,
}

impl Bot {
    pub fn as_str(self) -> &'static str {
        match self {
            Bot::Casual => "casual",
            Bot::Counseling => "counseling",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "casual" => Some(Bot::Casual),
            "counseling" => Some(Bot::Counseling),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoutingConfig {
    /// Per-message relatedness threshold.
    pub mental_threshold: f64,
    /// Per-message positivity threshold.
    pub sentiment_threshold: f64,
    /// Moving-average window; the trend rule is inactive until it is full.
    pub window: usize,
    pub trend_mental_threshold: f64,
    pub trend_sentiment_threshold: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            mental_threshold: 0.5,
            sentiment_threshold: 0.5,
            window: 5,
            trend_mental_threshold: 0.5,
            trend_sentiment_threshold: 0.5,
        }
    }
}

impl RoutingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::config("trend window must be at least 1"));
        }
        let ts = [
            self.mental_threshold,
            self.sentiment_threshold,
            self.trend_mental_threshold,
            self.trend_sentiment_threshold,
        ];
        if ts.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::config("routing thresholds must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn route(&self, mental: f64, sentiment: f64) -> Result<Bot> {
        for (name, v) in [("mental", mental), ("sentiment", sentiment)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(alloc::format!("{name} score {v} outside [0, 1]")));
            }
        }
        Ok(if mental >= self.mental_threshold && sentiment < self.sentiment_threshold {
            Bot::Counseling
        } else {
            Bot::Casual
        })
    }
}

/// Routing with the default thresholds.
pub fn route_message(mental: f64, sentiment: f64) -> Result<Bot> {
    RoutingConfig::default().route(mental, sentiment)
}

/// Fixed-capacity window over the most recent scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreWindow {
    cap: usize,
    buf: VecDeque<f64>,
}

impl ScoreWindow {
    pub fn new(cap: usize) -> Self {
        ScoreWindow {
            cap,
            buf: VecDeque::with_capacity(cap),
        }
    }

    pub fn push(&mut self, v: f64) {
        if self.buf.len() == self.cap {
            self.buf.pop_front();
        }
        self.buf.push_back(v);
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.buf.len() == self.cap
    }

    pub fn capacity(&self) -> usize {
        self.cap
    }

    pub fn mean(&self) -> Option<f64> {
        if self.buf.is_empty() {
            return None;
        }
        Some(self.buf.iter().sum::<f64>() / self.buf.len() as f64)
    }

    /// Oldest first.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.buf.iter().copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteRecord {
    /// What the message's own scores selected.
    pub per_message: Bot,
    /// Trend decision in force for this turn, if any.
    pub forced: Option<Bot>,
    pub bot_used: Bot,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Turn {
    pub user_text: String,
    pub reply_text: String,
    pub mental_score: f64,
    pub sentiment_score: f64,
    pub route: RouteRecord,
    pub fallback: bool,
    /// Responder or logging failure, if one happened.
    pub error: Option<String>,
    pub timestamp: u64,
}

impl Turn {
    pub fn bot_used(&self) -> Bot {
        self.route.bot_used
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub id: String,
    pub turns: Vec<Turn>,
    pub mental_buf: ScoreWindow,
    pub sent_buf: ScoreWindow,
    /// Bot that served the latest turn (casual before the first).
    pub active_bot: Bot,
    /// Trend decision for the next turn.
    pub forced: Option<Bot>,
    pub created: u64,
    pub updated: u64,
}

impl Session {
    pub fn new(id: impl Into<String>, window: usize, now: u64) -> Self {
        Session {
            id: id.into(),
            turns: Vec::new(),
            mental_buf: ScoreWindow::new(window),
            sent_buf: ScoreWindow::new(window),
            active_bot: Bot::Casual,
            forced: None,
            created: now,
            updated: now,
        }
    }

    pub fn is_expired(&self, now: u64, ttl_secs: u64) -> bool {
        now.saturating_sub(self.updated) >= ttl_secs
    }
}

/// Recomputes the trend decision once both windows are full. The two
/// conditions are complementary, so with full windows a decision is always
/// in force; it flips when the averages cross back.
pub fn update_trend(session: &mut Session, cfg: &RoutingConfig) -> Option<Bot> {
    if !(session.mental_buf.is_full() && session.sent_buf.is_full()) {
        return None;
    }
    let m = session.mental_buf.mean()?;
    let s = session.sent_buf.mean()?;
    let bot = if m >= cfg.trend_mental_threshold && s < cfg.trend_sentiment_threshold {
        Bot::Counseling
    } else {
        Bot::Casual
    };
    session.forced = Some(bot);
    Some(bot)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub text: String,
    pub fallback: bool,
}

pub trait Responder {
    fn reply(&self, text: &str) -> Result<Reply>;
}

impl<F: Fn(&str) -> Result<Reply>> Responder for F {
    fn reply(&self, text: &str) -> Result<Reply> {
        self(text)
    }
}

/// A trained responder with its reranking language model.
#[derive(Debug, Clone)]
pub struct ChatResponder {
    pub model: Seq2SeqModel,
    pub lm: Option<LanguageModel>,
    pub decode: DecodeConfig,
    pub fallback: String,
}

impl Responder for ChatResponder {
    fn reply(&self, text: &str) -> Result<Reply> {
        let g = generate(&self.model, self.lm.as_ref(), text, &self.decode, &self.fallback)?;
        Ok(Reply {
            text: g.text,
            fallback: g.fallback,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeRecord {
    pub session_id: String,
    pub question: String,
    pub answer: String,
    pub mental_score: f64,
    pub sentiment_score: f64,
    pub bot: Bot,
    pub timestamp: u64,
}

/// Append-only destination for finished turns.
pub trait KnowledgeSink {
    fn append(&mut self, record: &KnowledgeRecord) -> Result<()>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryStore {
    pub records: Vec<KnowledgeRecord>,
}

impl KnowledgeSink for MemoryStore {
    fn append(&mut self, record: &KnowledgeRecord) -> Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Appends the turn's Q&A pair, retrying once on failure.
pub fn log_pair<K: KnowledgeSink + ?Sized>(store: &mut K, session: &Session, turn: &Turn) -> Result<KnowledgeRecord> {
    let rec = KnowledgeRecord {
        session_id: session.id.clone(),
        question: turn.user_text.clone(),
        answer: turn.reply_text.clone(),
        mental_score: turn.mental_score,
        sentiment_score: turn.sentiment_score,
        bot: turn.bot_used(),
        timestamp: turn.timestamp,
    };
    store.append(&rec).or_else(|_| store.append(&rec))?;
    Ok(rec)
}

fn one_line(s: &str) -> String {
    s.split(['\n', '\r']).filter(|p| !p.is_empty()).collect::<Vec<_>>().join(" ")
}

/// Groups records by session, in order of first appearance, into `.conv`
/// conversations of alternating question and answer lines.
pub fn export_conversations<'a>(records: impl IntoIterator<Item = &'a KnowledgeRecord>) -> Vec<Conversation> {
    let mut order: Vec<(&str, Vec<String>)> = Vec::new();
    for r in records {
        let (q, a) = (one_line(&r.question), one_line(&r.answer));
        if q.trim().is_empty() || a.trim().is_empty() {
            continue;
        }
        let slot = match order.iter().position(|(id, _)| *id == r.session_id) {
            Some(i) => i,
            None => {
                order.push((&r.session_id, Vec::new()));
                order.len() - 1
            }
        };
        order[slot].1.push(q);
        order[slot].1.push(a);
    }
    order.into_iter().map(|(_, u)| Conversation::new(u)).collect()
}

/// Everything `respond` needs besides the session and the store.
pub struct Engine {
    pub mental: Box<dyn Scorer + Send + Sync>,
    pub sentiment: Box<dyn Scorer + Send + Sync>,
    pub casual: Box<dyn Responder + Send + Sync>,
    pub counseling: Box<dyn Responder + Send + Sync>,
    pub routing: RoutingConfig,
    pub fallback: String,
}

impl Engine {
    pub fn new(
        mental: Box<dyn Scorer + Send + Sync>,
        sentiment: Box<dyn Scorer + Send + Sync>,
        casual: Box<dyn Responder + Send + Sync>,
        counseling: Box<dyn Responder + Send + Sync>,
    ) -> Self {
        Engine {
            mental,
            sentiment,
            casual,
            counseling,
            routing: RoutingConfig::default(),
            fallback: DEFAULT_FALLBACK.to_string(),
        }
    }

    pub fn new_session(&self, id: impl Into<String>, now: u64) -> Session {
        Session::new(id, self.routing.window, now)
    }

    /// Scores, routes, replies, updates the trend, and logs one turn.
    ///
    /// Responder and storage failures never lose the reply: they are noted
    /// in `Turn::error` and the fallback text is used where needed.
    pub fn respond<K: KnowledgeSink + ?Sized>(
        &self,
        session: &mut Session,
        user_text: &str,
        store: &mut K,
        now: u64,
    ) -> Result<Turn> {
        let mental = clamp_score(self.mental.score(user_text));
        let sentiment = clamp_score(self.sentiment.score(user_text));
        let per_message = self.routing.route(mental, sentiment)?;
        let forced = session.forced;
        let bot = forced.unwrap_or(per_message);
        let responder = match bot {
            Bot::Casual => &self.casual,
            Bot::Counseling => &self.counseling,
        };
        let (reply, mut error) = match responder.reply(user_text) {
            Ok(r) if !r.text.trim().is_empty() => (r, None),
            Ok(_) => (self.canned(), None),
            Err(e) => (self.canned(), Some(e.to_string())),
        };
        let turn = Turn {
            user_text: user_text.to_string(),
            reply_text: reply.text,
            mental_score: mental,
            sentiment_score: sentiment,
            route: RouteRecord {
                per_message,
                forced,
                bot_used: bot,
            },
            fallback: reply.fallback,
            error: None,
            timestamp: now,
        };
        session.mental_buf.push(mental);
        session.sent_buf.push(sentiment);
        session.active_bot = bot;
        session.updated = now;
        update_trend(session, &self.routing);
        if let Err(e) = log_pair(store, session, &turn) {
            error = Some(match error {
                Some(prev) => alloc::format!("{prev}; {e}"),
                None => e.to_string(),
            });
        }
        let turn = Turn { error, ..turn };
        session.turns.push(turn.clone());
        Ok(turn)
    }

    fn canned(&self) -> Reply {
        Reply {
            text: self.fallback.clone(),
            fallback: true,
        }
    }
}

/// Classifier outputs are probabilities; NaN is treated as 0.
fn clamp_score(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}
