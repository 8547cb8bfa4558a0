//! Service configuration: one TOML file, with `SOLACE_*` environment
//! variables taking precedence. Relative paths resolve against the config
//! file's directory.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use solace_core::dialogue::RoutingConfig;
use solace_core::responder::{DecodeConfig, DEFAULT_FALLBACK};
use solace_core::text::DEFAULT_VOCAB_CAP;

use crate::error::{Error, IoContext, Result};

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelPaths {
    pub mental: PathBuf,
    pub sentiment: PathBuf,
    pub casual: PathBuf,
    pub counseling: PathBuf,
    pub lm: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RoutingSection {
    pub mental_threshold: f64,
    pub sentiment_threshold: f64,
    pub window: usize,
    pub trend_mental_threshold: f64,
    pub trend_sentiment_threshold: f64,
}

impl Default for RoutingSection {
    fn default() -> Self {
        let r = RoutingConfig::default();
        RoutingSection {
            mental_threshold: r.mental_threshold,
            sentiment_threshold: r.sentiment_threshold,
            window: r.window,
            trend_mental_threshold: r.trend_mental_threshold,
            trend_sentiment_threshold: r.trend_sentiment_threshold,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeSection {
    pub beam_width: usize,
    pub max_len: usize,
    pub lambda: f64,
    pub min_len: usize,
}

impl Default for DecodeSection {
    fn default() -> Self {
        let d = DecodeConfig::default();
        DecodeSection {
            beam_width: d.beam_width,
            max_len: d.max_len,
            lambda: d.lambda,
            min_len: d.min_len,
        }
    }
}

fn default_listen() -> String {
    "127.0.0.1:8080".into()
}

fn default_ttl() -> u64 {
    24 * 3600
}

fn default_cap() -> usize {
    DEFAULT_VOCAB_CAP
}

fn default_fallback() -> String {
    DEFAULT_FALLBACK.into()
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_listen")]
    pub listen: String,
    pub embeddings: PathBuf,
    #[serde(default = "default_cap")]
    pub vocab_cap: usize,
    pub store: PathBuf,
    #[serde(default)]
    pub sessions_dir: Option<PathBuf>,
    #[serde(default = "default_ttl")]
    pub session_ttl_secs: u64,
    #[serde(default = "default_fallback")]
    pub fallback_reply: String,
    pub models: ModelPaths,
    #[serde(default)]
    pub routing: RoutingSection,
    #[serde(default)]
    pub decode: DecodeSection,
}

fn parse_env<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("environment variable {key}=`{v}` is not valid")))
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads the file, applies process environment overrides, resolves
    /// paths and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.apply_env(|k| std::env::var(k).ok())?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        macro_rules! over {
            ($key:literal, $field:expr) => {
                if let Some(v) = get($key) {
                    $field = parse_env($key, &v)?;
                }
            };
        }
        over!("SOLACE_LISTEN", self.listen);
        over!("SOLACE_EMBEDDINGS", self.embeddings);
        over!("SOLACE_STORE", self.store);
        over!("SOLACE_SESSION_TTL_SECS", self.session_ttl_secs);
        over!("SOLACE_MODEL_MENTAL", self.models.mental);
        over!("SOLACE_MODEL_SENTIMENT", self.models.sentiment);
        over!("SOLACE_MODEL_CASUAL", self.models.casual);
        over!("SOLACE_MODEL_COUNSELING", self.models.counseling);
        over!("SOLACE_TREND_WINDOW", self.routing.window);
        over!("SOLACE_TREND_MENTAL_THRESHOLD", self.routing.trend_mental_threshold);
        over!("SOLACE_TREND_SENTIMENT_THRESHOLD", self.routing.trend_sentiment_threshold);
        over!("SOLACE_MENTAL_THRESHOLD", self.routing.mental_threshold);
        over!("SOLACE_SENTIMENT_THRESHOLD", self.routing.sentiment_threshold);
        over!("SOLACE_LAMBDA", self.decode.lambda);
        if let Some(v) = get("SOLACE_SESSIONS_DIR") {
            self.sessions_dir = Some(v.into());
        }
        if let Some(v) = get("SOLACE_MODEL_LM") {
            self.models.lm = Some(v.into());
        }
        Ok(())
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.embeddings);
        fix(&mut self.store);
        fix(&mut self.models.mental);
        fix(&mut self.models.sentiment);
        fix(&mut self.models.casual);
        fix(&mut self.models.counseling);
        if let Some(p) = self.models.lm.as_mut() {
            fix(p);
        }
        if let Some(p) = self.sessions_dir.as_mut() {
            fix(p);
        }
    }

    pub fn routing(&self) -> RoutingConfig {
        let r = &self.routing;
        RoutingConfig {
            mental_threshold: r.mental_threshold,
            sentiment_threshold: r.sentiment_threshold,
            window: r.window,
            trend_mental_threshold: r.trend_mental_threshold,
            trend_sentiment_threshold: r.trend_sentiment_threshold,
        }
    }

    pub fn decode(&self) -> DecodeConfig {
        let d = &self.decode;
        DecodeConfig {
            beam_width: d.beam_width,
            max_len: d.max_len,
            lambda: d.lambda,
            min_len: d.min_len,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.routing().validate()?;
        self.decode().validate()?;
        if self.fallback_reply.trim().is_empty() {
            return Err(Error::Config("fallback_reply must not be empty".into()));
        }
        if self.session_ttl_secs == 0 {
            return Err(Error::Config("session_ttl_secs must be positive".into()));
        }
        Ok(())
    }
}
