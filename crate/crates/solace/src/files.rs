//! Readers for embedding tables, labeled datasets, `.conv` corpora and
//! annotation files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use solace_core::classifier::LabeledText;
use solace_core::corpus::{ConvParser, Conversation};
use solace_core::eval::{parse_annotations, Annotation};
use solace_core::text::{EmbeddingBuilder, EmbeddingTable};

use crate::error::{format_err, in_file, Error, IoContext, Result};

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).at(path)?))
}

/// Streams a word-vector file, stopping once `cap` words are loaded.
pub fn read_embeddings(path: &Path, cap: usize) -> Result<EmbeddingTable> {
    let mut lines = open(path)?.lines();
    let header = lines
        .next()
        .ok_or_else(|| format_err(path, "empty embedding file"))?
        .at(path)?;
    let mut builder = EmbeddingBuilder::from_header(&header, cap).map_err(|e| in_file(path, e))?;
    for (i, line) in lines.enumerate() {
        if builder.is_full() {
            break;
        }
        let line = line.at(path)?;
        if line.trim().is_empty() {
            continue;
        }
        builder.push_line(i + 2, &line).map_err(|e| in_file(path, e))?;
    }
    Ok(builder.finish())
}

/// `<label>\t<text>` per line; blank lines are skipped.
pub fn read_labeled(path: &Path) -> Result<Vec<LabeledText>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.at(path)?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (label, text) = line
            .split_once('\t')
            .ok_or_else(|| format_err(path, format!("line {}: expected `<label>\\t<text>`", i + 1)))?;
        let label = match label.trim() {
            "0" => 0,
            "1" => 1,
            other => return Err(format_err(path, format!("line {}: label `{other}` is not 0 or 1", i + 1))),
        };
        out.push(LabeledText::new(label, text));
    }
    Ok(out)
}

/// Streaming `.conv` reader yielding one conversation at a time.
pub struct ConvReader {
    lines: std::io::Lines<BufReader<File>>,
    parser: ConvParser,
    path: std::path::PathBuf,
    done: bool,
}

impl ConvReader {
    pub fn open(path: &Path) -> Result<Self> {
        Ok(ConvReader {
            lines: open(path)?.lines(),
            parser: ConvParser::new(),
            path: path.to_path_buf(),
            done: false,
        })
    }

    pub fn warnings(&self) -> &[String] {
        self.parser.warnings()
    }
}

impl Iterator for ConvReader {
    type Item = Result<Conversation>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            match self.lines.next() {
                Some(Ok(line)) => match self.parser.push_line(&line) {
                    Ok(Some(c)) => return Some(Ok(c)),
                    Ok(None) => {}
                    Err(e) => {
                        self.done = true;
                        return Some(Err(in_file(&self.path, e)));
                    }
                },
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(Error::Io {
                        path: self.path.clone(),
                        source: e,
                    }));
                }
                None => {
                    self.done = true;
                    return self.parser.finish().map(Ok);
                }
            }
        }
        None
    }
}

pub fn read_conv(path: &Path) -> Result<Vec<Conversation>> {
    ConvReader::open(path)?.collect()
}

/// Streaming `.conv` writer.
pub struct ConvWriter {
    out: BufWriter<File>,
    path: std::path::PathBuf,
    buf: String,
}

impl ConvWriter {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(ConvWriter {
            out: BufWriter::new(File::create(path).at(path)?),
            path: path.to_path_buf(),
            buf: String::new(),
        })
    }

    pub fn write(&mut self, conv: &Conversation) -> Result<()> {
        self.buf.clear();
        conv.write_to(&mut self.buf);
        self.out.write_all(self.buf.as_bytes()).at(&self.path)
    }

    pub fn finish(mut self) -> Result<()> {
        self.out.flush().at(&self.path)
    }
}

/// Question/answer pairs from every record of a `.conv` corpus.
pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for conv in ConvReader::open(path)? {
        let conv = conv?;
        pairs.extend(conv.qa_pairs().map(|(q, a)| (q.to_string(), a.to_string())));
    }
    Ok(pairs)
}

pub fn read_annotations(path: &Path) -> Result<Vec<Annotation>> {
    let text = std::fs::read_to_string(path).at(path)?;
    parse_annotations(&text).map_err(|e| in_file(path, e))
}
