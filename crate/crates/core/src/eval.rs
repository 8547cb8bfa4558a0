//! Response-quality index and sentiment trajectories.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use crate::{Error, Result};

/// Three-level human judgement of a reply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Annotation {
    Unqualified = 0,
    Regular = 1,
    Qualified = 2,
}

impl Annotation {
    pub fn from_level(level: u8) -> Option<Self> {
        match level {
            0 => Some(Annotation::Unqualified),
            1 => Some(Annotation::Regular),
            2 => Some(Annotation::Qualified),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RcheckReport {
    pub n_unqualified: usize,
    pub n_regular: usize,
    pub n_qualified: usize,
    pub total: usize,
    pub frac_unqualified: f64,
    pub frac_regular: f64,
    pub frac_qualified: f64,
    /// Share of replies judged regular or qualified.
    pub r_check: f64,
}

pub fn r_check_counts(n_unqualified: usize, n_regular: usize, n_qualified: usize) -> Result<RcheckReport> {
    let total = n_unqualified + n_regular + n_qualified;
    if total == 0 {
        return Err(Error::invalid("no annotations"));
    }
    let t = total as f64;
    Ok(RcheckReport {
        n_unqualified,
        n_regular,
        n_qualified,
        total,
        frac_unqualified: n_unqualified as f64 / t,
        frac_regular: n_regular as f64 / t,
        frac_qualified: n_qualified as f64 / t,
        r_check: (n_regular + n_qualified) as f64 / t,
    })
}

pub fn r_check(annotations: &[Annotation]) -> Result<RcheckReport> {
    let count = |a| annotations.iter().filter(|&&x| x == a).count();
    r_check_counts(
        count(Annotation::Unqualified),
        count(Annotation::Regular),
        count(Annotation::Qualified),
    )
}

/// One label per line (`0`, `1` or `2`); blank lines are ignored.
pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let a = t
            .parse::<u8>()
            .ok()
            .and_then(Annotation::from_level)
            .ok_or_else(|| Error::parse(i + 1, alloc::format!("expected 0, 1 or 2, found `{t}`")))?;
        out.push(a);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SentimentSample {
    pub cohort: String,
    pub timestamp: u64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub cohort: String,
    /// Inclusive start, exclusive end, in seconds.
    pub window_start: u64,
    pub window_end: u64,
    pub count: usize,
    pub mean: f64,
}

pub const TWO_DAYS: u64 = 2 * 24 * 3600;

/// Mean sentiment per cohort per window. Windows are aligned to the earliest
/// timestamp across all samples so cohorts share boundaries; windows without
/// samples produce no row. Output is sorted by cohort, then time.
pub fn sentiment_trajectory(samples: &[SentimentSample], window_secs: u64) -> Result<Vec<TrajectoryPoint>> {
    if window_secs == 0 {
        return Err(Error::invalid("window length must be positive"));
    }
    let Some(origin) = samples.iter().map(|s| s.timestamp).min() else {
        return Ok(Vec::new());
    };
    let mut buckets: BTreeMap<(&str, u64), (usize, f64)> = BTreeMap::new();
    for s in samples {
        if !s.score.is_finite() {
            return Err(Error::invalid("non-finite sentiment score"));
        }
        let b = (s.timestamp - origin) / window_secs;
        let e = buckets.entry((s.cohort.as_str(), b)).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += s.score;
    }
    Ok(buckets
        .into_iter()
        .map(|((cohort, b), (n, sum))| TrajectoryPoint {
            cohort: cohort.into(),
            window_start: origin + b * window_secs,
            window_end: origin + (b + 1) * window_secs,
            count: n,
            mean: sum / n as f64,
        })
        .collect())
}

pub fn trajectory_csv(points: &[TrajectoryPoint]) -> String {
    let mut s = String::from("cohort,window_start,window_end,count,mean\n");
    for p in points {
        let _ = writeln!(s, "{},{},{},{},{}", p.cohort, p.window_start, p.window_end, p.count, p.mean);
    }
    s
}
