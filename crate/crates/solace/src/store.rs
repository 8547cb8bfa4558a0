//! Append-only knowledge store on disk, one JSON record per line.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use solace_core::dialogue::{Bot, KnowledgeRecord, KnowledgeSink};

use crate::error::{format_err, IoContext, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RecordJson {
    pub session_id: String,
    pub question: String,
    pub answer: String,
    pub mental_score: f64,
    pub sentiment_score: f64,
    pub bot: String,
    pub timestamp: u64,
}

impl From<&KnowledgeRecord> for RecordJson {
    fn from(r: &KnowledgeRecord) -> Self {
        RecordJson {
            session_id: r.session_id.clone(),
            question: r.question.clone(),
            answer: r.answer.clone(),
            mental_score: r.mental_score,
            sentiment_score: r.sentiment_score,
            bot: r.bot.as_str().to_string(),
            timestamp: r.timestamp,
        }
    }
}

impl RecordJson {
    fn into_record(self) -> Option<KnowledgeRecord> {
        Some(KnowledgeRecord {
            bot: Bot::parse(&self.bot)?,
            session_id: self.session_id,
            question: self.question,
            answer: self.answer,
            mental_score: self.mental_score,
            sentiment_score: self.sentiment_score,
            timestamp: self.timestamp,
        })
    }
}

pub struct NdjsonStore {
    path: PathBuf,
    file: File,
}

impl NdjsonStore {
    pub fn open(path: &Path) -> Result<Self> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).at(dir)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).at(path)?;
        Ok(NdjsonStore {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl KnowledgeSink for NdjsonStore {
    fn append(&mut self, record: &KnowledgeRecord) -> solace_core::Result<()> {
        let mut line = serde_json::to_string(&RecordJson::from(record))
            .map_err(|e| solace_core::Error::Storage(e.to_string()))?;
        line.push('\n');
        // A single write keeps concurrent readers from seeing half a record.
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| solace_core::Error::Storage(format!("{}: {e}", self.path.display())))
    }
}

pub fn read_records(path: &Path) -> Result<Vec<KnowledgeRecord>> {
    let reader = BufReader::new(File::open(path).at(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.at(path)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordJson =
            serde_json::from_str(&line).map_err(|e| format_err(path, format!("line {}: {e}", i + 1)))?;
        let bot = rec.bot.clone();
        out.push(
            rec.into_record()
                .ok_or_else(|| format_err(path, format!("line {}: unknown bot `{bot}`", i + 1)))?,
        );
    }
    Ok(out)
}
