//! `.conv` conversation records and the relatedness filter.
//!
//! A record starts at any line whose first character is `E`; the lines that
//! follow, up to the next `E`, are its utterances. Utterance lines may carry
//! a leading `"M "`, which is stripped. Output is always written with the
//! prefix so that utterances which themselves start with `E` survive a
//! round trip.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::classifier::{ClassifierModel, Scorer, TaskTag};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub utterances: Vec<String>,
    /// 1-based line number of the record's `E` line.
    pub line: usize,
}

impl Conversation {
    pub fn new<S: Into<String>>(utterances: impl IntoIterator<Item = S>) -> Self {
        Conversation {
            utterances: utterances.into_iter().map(Into::into).collect(),
            line: 0,
        }
    }

    /// Non-overlapping `(question, answer)` pairs: utterances 0–1, 2–3, …
    /// A trailing unpaired utterance is ignored.
    pub fn qa_pairs(&self) -> impl Iterator<Item = (&str, &str)> {
        self.utterances
            .chunks_exact(2)
            .map(|p| (p[0].as_str(), p[1].as_str()))
    }

    /// Appends the record in `.conv` form to `out`.
    pub fn write_to(&self, out: &mut String) {
        out.push_str("E\n");
        for u in &self.utterances {
            out.push_str("M ");
            out.push_str(u);
            out.push('\n');
        }
    }
}

pub fn serialize_conversations<'a>(convs: impl IntoIterator<Item = &'a Conversation>) -> String {
    let mut s = String::new();
    for c in convs {
        c.write_to(&mut s);
    }
    s
}

/// Line-at-a-time `.conv` parser; holds at most one record in memory.
#[derive(Debug, Default)]
pub struct ConvParser {
    current: Option<Conversation>,
    warnings: Vec<String>,
    line_no: usize,
}

impl ConvParser {
    pub fn new() -> Self {
        Self::default()
    }

    /// Feeds the next line (without its terminator). Returns a completed
    /// record when `line` starts a new one.
    pub fn push_line(&mut self, line: &str) -> Result<Option<Conversation>> {
        self.line_no += 1;
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.starts_with('E') {
            let done = self.current.take().and_then(|c| self.finish_record(c));
            self.current = Some(Conversation {
                utterances: Vec::new(),
                line: self.line_no,
            });
            return Ok(done);
        }
        let utterance = line.strip_prefix("M ").unwrap_or(if line == "M" { "" } else { line });
        match self.current.as_mut() {
            None if line.trim().is_empty() => Ok(None),
            None => Err(Error::parse(self.line_no, "content before the first `E` record line")),
            Some(c) => {
                if !utterance.trim().is_empty() {
                    c.utterances.push(utterance.to_string());
                }
                Ok(None)
            }
        }
    }

    /// Flushes the final record.
    pub fn finish(&mut self) -> Option<Conversation> {
        self.current.take().and_then(|c| self.finish_record(c))
    }

    fn finish_record(&mut self, c: Conversation) -> Option<Conversation> {
        if c.utterances.is_empty() {
            self.warnings
                .push(alloc::format!("line {}: empty conversation skipped", c.line));
            None
        } else {
            Some(c)
        }
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }
}

/// Parses a whole `.conv` document held in memory.
pub fn parse_conv_str(text: &str) -> Result<(Vec<Conversation>, Vec<String>)> {
    let mut p = ConvParser::new();
    let mut out = Vec::new();
    for line in text.lines() {
        if let Some(c) = p.push_line(line)? {
            out.push(c);
        }
    }
    out.extend(p.finish());
    Ok((out, p.warnings.clone()))
}

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub total_conversations: usize,
    pub retained: usize,
    pub dropped: usize,
    pub threshold: f64,
    /// Utterance-score counts over ten equal bins of `[0, 1]`; a score of
    /// exactly 1 lands in the last bin.
    pub histogram: [usize; HISTOGRAM_BINS],
}

impl FilterReport {
    /// `None` when no conversation has been seen.
    pub fn retained_fraction(&self) -> Option<f64> {
        fraction(self.retained, self.total_conversations)
    }
}

pub fn histogram_bin(score: f64) -> usize {
    ((score * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)
}

/// Streaming conversation filter: a record is kept, whole and unmodified,
/// iff any of its utterances scores at or above the threshold.
pub struct CorpusFilter<'a, S: Scorer + ?Sized> {
    scorer: &'a S,
    report: FilterReport,
}

impl<'a, S: Scorer + ?Sized> CorpusFilter<'a, S> {
    pub fn new(scorer: &'a S, threshold: f64) -> Self {
        CorpusFilter {
            scorer,
            report: FilterReport {
                total_conversations: 0,
                retained: 0,
                dropped: 0,
                threshold,
                histogram: [0; HISTOGRAM_BINS],
            },
        }
    }

    /// Scores every utterance of `conv` and decides whether to keep it.
    pub fn accept(&mut self, conv: &Conversation) -> bool {
        let scores: Vec<f64> = conv.utterances.iter().map(|u| self.scorer.score(u)).collect();
        self.accept_scored(&scores)
    }

    /// Records a conversation whose utterance scores were computed elsewhere
    /// (e.g. by parallel workers).
    pub fn accept_scored(&mut self, scores: &[f64]) -> bool {
        let mut keep = false;
        for &s in scores {
            self.report.histogram[histogram_bin(s)] += 1;
            keep |= s >= self.report.threshold;
        }
        self.report.total_conversations += 1;
        if keep {
            self.report.retained += 1;
        } else {
            self.report.dropped += 1;
        }
        keep
    }

    pub fn report(&self) -> &FilterReport {
        &self.report
    }

    pub fn into_report(self) -> FilterReport {
        self.report
    }
}

/// Default relatedness threshold for keeping a conversation.
pub const DEFAULT_FILTER_THRESHOLD: f64 = 0.7;

/// Filters an in-memory corpus with any scorer.
pub fn filter_conversations<S: Scorer + ?Sized>(
    convs: &[Conversation],
    scorer: &S,
    threshold: f64,
) -> (Vec<Conversation>, FilterReport) {
    let mut f = CorpusFilter::new(scorer, threshold);
    let kept = convs.iter().filter(|c| f.accept(c)).cloned().collect();
    (kept, f.into_report())
}

/// Like [`filter_conversations`], but insists on a relatedness model.
pub fn filter_with_model(
    convs: &[Conversation],
    model: &ClassifierModel,
    threshold: f64,
) -> Result<(Vec<Conversation>, FilterReport)> {
    if model.task != TaskTag::Relatedness {
        return Err(Error::invalid("corpus filtering needs a relatedness classifier"));
    }
    Ok(filter_conversations(convs, model, threshold))
}

pub fn fraction(part: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| part as f64 / total as f64)
}

/// Counts and proportions of a two-way split of a corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    pub total: usize,
    /// Related (label 1) or retained items.
    pub related: usize,
    pub other: usize,
    /// `None` for an empty corpus.
    pub related_fraction: Option<f64>,
}

impl CorpusStats {
    pub fn from_counts(related: usize, other: usize) -> Self {
        let total = related + other;
        CorpusStats {
            total,
            related,
            other,
            related_fraction: fraction(related, total),
        }
    }

    pub fn from_labels(labels: impl IntoIterator<Item = u8>) -> Self {
        let (mut pos, mut neg) = (0, 0);
        for l in labels {
            if l == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
        }
        Self::from_counts(pos, neg)
    }

    pub fn from_report(r: &FilterReport) -> Self {
        Self::from_counts(r.retained, r.dropped)
    }
}
