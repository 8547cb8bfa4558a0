//! Text cleansing, segmentation, embedding tables and index encoding.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Tensor};

/// Default cap on the number of embedding rows kept.
pub const DEFAULT_VOCAB_CAP: usize = 100_000;

/// CJK Unified Ideographs and its extension blocks A through I.
const CJK_UNIFIED: &[(u32, u32)] = &[
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2B73F),
    (0x2B740, 0x2B81F),
    (0x2B820, 0x2CEAF),
    (0x2CEB0, 0x2EBEF),
    (0x2EBF0, 0x2EE5F),
    (0x30000, 0x3134F),
    (0x31350, 0x323AF),
];

pub fn is_cjk_ideograph(c: char) -> bool {
    let u = c as u32;
    CJK_UNIFIED.iter().any(|&(lo, hi)| (lo..=hi).contains(&u))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CleanProfile {
    /// Keep only CJK unified ideographs; punctuation, Latin letters, digits
    /// and everything else is dropped.
    #[default]
    Cjk,
    PassThrough,
}

/// Cleans `raw` with the default CJK profile.
pub fn clean_text(raw: &str) -> String {
    clean_with(raw, CleanProfile::Cjk)
}

pub fn clean_with(raw: &str, profile: CleanProfile) -> String {
    match profile {
        CleanProfile::Cjk => raw.chars().filter(|&c| is_cjk_ideograph(c)).collect(),
        CleanProfile::PassThrough => raw.to_string(),
    }
}

/// A set of known words for longest-match segmentation.
pub trait Lexicon {
    fn contains(&self, word: &str) -> bool;
    /// Length in characters of the longest word.
    fn max_word_chars(&self) -> usize;
}

#[derive(Debug, Clone, Default)]
pub struct WordSet {
    words: BTreeSet<String>,
    max_chars: usize,
}

impl WordSet {
    pub fn insert(&mut self, word: impl Into<String>) {
        let w = word.into();
        self.max_chars = self.max_chars.max(w.chars().count());
        self.words.insert(w);
    }
}

impl<S: Into<String>> FromIterator<S> for WordSet {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        let mut set = WordSet::default();
        for w in iter {
            set.insert(w);
        }
        set
    }
}

impl Lexicon for WordSet {
    fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    fn max_word_chars(&self) -> usize {
        self.max_chars
    }
}

/// Splits cleaned text into tokens.
pub trait Segmenter {
    fn segment(&self, text: &str) -> Vec<String>;
}

/// Greedy left-to-right longest match; characters that start no lexicon word
/// become single-character tokens.
pub struct GreedySegmenter<'a, L: Lexicon + ?Sized>(pub &'a L);

impl<L: Lexicon + ?Sized> Segmenter for GreedySegmenter<'_, L> {
    fn segment(&self, text: &str) -> Vec<String> {
        segment(text, self.0)
    }
}

pub fn segment<L: Lexicon + ?Sized>(text: &str, lexicon: &L) -> Vec<String> {
    // Byte offsets of every char boundary, including the end.
    let bounds: Vec<usize> = text
        .char_indices()
        .map(|(i, _)| i)
        .chain(core::iter::once(text.len()))
        .collect();
    let n = bounds.len() - 1;
    let max = lexicon.max_word_chars().max(1);
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        let longest = (2..=max.min(n - i))
            .rev()
            .find(|&len| lexicon.contains(&text[bounds[i]..bounds[i + len]]))
            .unwrap_or(1);
        out.push(text[bounds[i]..bounds[i + longest]].to_string());
        i += longest;
    }
    out
}

/// Word vectors indexed from 1; index 0 is the shared pad/unknown row and is
/// all zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    index: BTreeMap<String, usize>,
    /// `(K + 1) × dim`, row 0 zero.
    vectors: Tensor,
    max_chars: usize,
}

impl EmbeddingTable {
    /// Builds a table from `(word, vector)` pairs in order, keeping the first
    /// occurrence of duplicated words.
    pub fn from_entries<I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<f64>)>,
    {
        let mut b = EmbeddingBuilder::new(dim, usize::MAX);
        for (w, v) in entries {
            b.push(w, v)?;
        }
        Ok(b.finish())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of real words (`K`); the matrix has `K + 1` rows.
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn index_of(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Word at `index` (1-based); `None` for 0 and out-of-range.
    pub fn word(&self, index: usize) -> Option<&str> {
        index.checked_sub(1).and_then(|i| self.words.get(i)).map(String::as_str)
    }

    pub fn vector(&self, index: usize) -> &[f64] {
        self.vectors.row(index)
    }

    pub fn matrix(&self) -> &Tensor {
        &self.vectors
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    /// FNV-1a over the dimension, the words and the vector bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write(&(self.dim as u64).to_le_bytes());
        for w in &self.words {
            h.write(w.as_bytes());
            h.write(&[0xff]);
        }
        for v in self.vectors.data() {
            h.write(&v.to_bits().to_le_bytes());
        }
        h.0
    }
}

impl Lexicon for EmbeddingTable {
    fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    fn max_word_chars(&self) -> usize {
        self.max_chars
    }
}

struct Fnv1a(u64);

impl Fnv1a {
    fn new() -> Self {
        Fnv1a(0xcbf2_9ce4_8422_2325)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

/// Incremental construction of an [`EmbeddingTable`], so callers can stream
/// rows from a file without holding it in memory.
#[derive(Debug)]
pub struct EmbeddingBuilder {
    dim: usize,
    limit: usize,
    words: Vec<String>,
    index: BTreeMap<String, usize>,
    data: Vec<f64>,
    max_chars: usize,
}

impl EmbeddingBuilder {
    pub fn new(dim: usize, limit: usize) -> Self {
        EmbeddingBuilder {
            dim,
            limit,
            words: Vec::new(),
            index: BTreeMap::new(),
            data: vec![0.0; dim],
            max_chars: 0,
        }
    }

    /// Parses a `"<word_count> <dim>"` header; the builder keeps at most
    /// `min(word_count, cap)` entries.
    pub fn from_header(line: &str, cap: usize) -> Result<Self> {
        let mut parts = line.split_whitespace();
        let count = parts.next().and_then(|s| s.parse::<usize>().ok());
        let dim = parts.next().and_then(|s| s.parse::<usize>().ok());
        match (count, dim, parts.next()) {
            (Some(count), Some(dim), None) if dim > 0 => Ok(Self::new(dim, count.min(cap))),
            _ => Err(Error::parse(1, "header must be \"<word_count> <dim>\"")),
        }
    }

    pub fn is_full(&self) -> bool {
        self.words.len() >= self.limit
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// Parses one `"<word> <v1> … <vdim>"` row; `line_no` is used for errors.
    pub fn push_line(&mut self, line_no: usize, line: &str) -> Result<()> {
        let mut parts = line.split_whitespace();
        let word = parts
            .next()
            .ok_or_else(|| Error::parse(line_no, "empty embedding row"))?;
        let mut vector = Vec::with_capacity(self.dim);
        for tok in parts {
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::parse(line_no, alloc::format!("bad number {tok:?}")))?;
            if !v.is_finite() {
                return Err(Error::parse(line_no, "non-finite vector entry"));
            }
            vector.push(v);
        }
        if vector.len() != self.dim {
            return Err(Error::parse(
                line_no,
                alloc::format!("expected {} values, found {}", self.dim, vector.len()),
            ));
        }
        self.push(word.to_string(), vector)
            .map_err(|e| Error::parse(line_no, alloc::format!("{e}")))
    }

    /// Appends an entry; duplicates and entries beyond the limit are ignored.
    pub fn push(&mut self, word: String, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::invalid(alloc::format!(
                "vector for {word:?} has {} values, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if self.is_full() || self.index.contains_key(&word) {
            return Ok(());
        }
        self.max_chars = self.max_chars.max(word.chars().count());
        self.index.insert(word.clone(), self.words.len() + 1);
        self.words.push(word);
        self.data.extend(vector);
        Ok(())
    }

    pub fn finish(self) -> EmbeddingTable {
        let rows = self.words.len() + 1;
        EmbeddingTable {
            dim: self.dim,
            vectors: Tensor::from_vec(&[rows, self.dim], self.data).expect("row-major layout"),
            words: self.words,
            index: self.index,
            max_chars: self.max_chars,
        }
    }
}

/// Parses a whole embedding file held in memory.
pub fn parse_embeddings(text: &str, cap: usize) -> Result<EmbeddingTable> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::parse(1, "missing header"))?;
    let mut b = EmbeddingBuilder::from_header(header, cap)?;
    for (i, line) in lines.enumerate() {
        if b.is_full() {
            break;
        }
        if line.trim().is_empty() {
            continue;
        }
        b.push_line(i + 2, line)?;
    }
    Ok(b.finish())
}

/// Token indices plus the text they came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedSeq {
    pub indices: Vec<usize>,
    pub source_text: String,
}

impl IndexedSeq {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Maps tokens to table rows; unknown words map to 0.
pub fn tokens_to_indices<S: AsRef<str>>(tokens: &[S], table: &EmbeddingTable) -> IndexedSeq {
    let mut source = String::new();
    let indices = tokens
        .iter()
        .map(|t| {
            source.push_str(t.as_ref());
            table.index_of(t.as_ref()).unwrap_or(0)
        })
        .collect();
    IndexedSeq {
        indices,
        source_text: source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PadPolicy {
    /// Fraction of the dataset whose length must fit the chosen pad length.
    pub coverage: f64,
}

impl Default for PadPolicy {
    fn default() -> Self {
        PadPolicy { coverage: 0.95 }
    }
}

/// Smallest `L` such that at least `coverage` of the sequences have length ≤ `L`.
pub fn compute_pad_length<I>(lengths: I, coverage: f64) -> Result<usize>
where
    I: IntoIterator<Item = usize>,
{
    if !(coverage > 0.0 && coverage <= 1.0) {
        return Err(Error::invalid("coverage must lie in (0, 1]"));
    }
    let mut lens: Vec<usize> = lengths.into_iter().collect();
    if lens.is_empty() {
        return Err(Error::invalid("cannot size padding for an empty dataset"));
    }
    lens.sort_unstable();
    let n = lens.len();
    // Number of sequences that must fit; the float product is nudged down so
    // that e.g. 0.95 * 20 counts as 19, not 19.000000000000004.
    let needed = libm::ceil(coverage * n as f64 - 1e-9).max(1.0) as usize;
    Ok(lens[needed.min(n) - 1])
}

/// Pre-pads with zeros or keeps the last `len` indices.
pub fn pad_truncate(seq: &IndexedSeq, len: usize) -> IndexedSeq {
    let src = &seq.indices;
    let indices = if src.len() >= len {
        src[src.len() - len..].to_vec()
    } else {
        let mut v = vec![0; len - src.len()];
        v.extend_from_slice(src);
        v
    };
    IndexedSeq {
        indices,
        source_text: seq.source_text.clone(),
    }
}

/// Clean → segment → index, shared by every trainable model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TextPipeline {
    pub profile: CleanProfile,
}

impl TextPipeline {
    pub fn tokens(&self, raw: &str, lexicon: &(impl Lexicon + ?Sized)) -> Vec<String> {
        segment(&clean_with(raw, self.profile), lexicon)
    }

    pub fn encode(&self, raw: &str, table: &EmbeddingTable) -> IndexedSeq {
        let toks = self.tokens(raw, table);
        let mut seq = tokens_to_indices(&toks, table);
        seq.source_text = raw.to_string();
        seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(ws: &[&str]) -> WordSet {
        ws.iter().copied().collect()
    }

    #[test]
    fn cleaning_examples() {
        assert_eq!(clean_text("abc123你好!"), "你好");
        assert_eq!(clean_text("hello!"), "");
        assert_eq!(clean_text("我爱2019年"), "我爱年");
        assert_eq!(clean_text("你好，世界。"), "你好世界");
        assert_eq!(clean_with("a b!", CleanProfile::PassThrough), "a b!");
    }

    #[test]
    fn segmentation_examples() {
        assert_eq!(segment("你好世界", &words(&["你好", "世界"])), ["你好", "世界"]);
        assert_eq!(segment("你好世界", &WordSet::default()), ["你", "好", "世", "界"]);
        assert_eq!(segment("研究生命", &words(&["研究生", "研究", "生命"])), ["研究生", "命"]);
        assert!(segment("", &words(&["你好"])).is_empty());
    }

    #[test]
    fn embedding_file_parses() {
        let t = parse_embeddings("2 3\n你好 0.1 0.2 0.3\n世界 1 2 3\n", 100).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.dim(), 3);
        assert_eq!(t.vector(0), &[0.0, 0.0, 0.0]);
        assert_eq!(t.vector(2), &[1.0, 2.0, 3.0]);
        assert_eq!(t.index_of("你好"), Some(1));
        assert_eq!(t.word(2), Some("世界"));
        assert_eq!(t.word(0), None);
    }

    #[test]
    fn embedding_errors_carry_line_numbers() {
        let e = parse_embeddings("2 3\n你好 0.1 0.2 0.3\n世界 1 2\n", 100).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
        let e = parse_embeddings("two 3\n", 100).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        let e = parse_embeddings("1 2\nx 1 nope\n", 100).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn embedding_cap_and_duplicates() {
        let t = parse_embeddings("4 1\na 1\nb 2\na 3\nc 4\n", 2).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.vector(1), &[1.0]);
        let t = parse_embeddings("4 1\na 1\nb 2\na 3\nc 4\n", 10).unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.index_of("c"), Some(3));
        assert_eq!(t.vector(1), &[1.0]);
    }

    #[test]
    fn large_file_is_capped() {
        let mut s = String::from("150000 1\n");
        for i in 0..150_000 {
            s.push_str(&alloc::format!("w{i} 0.5\n"));
        }
        let t = parse_embeddings(&s, DEFAULT_VOCAB_CAP).unwrap();
        assert_eq!(t.len(), 100_000);
    }

    #[test]
    fn index_lookup() {
        let t = EmbeddingTable::from_entries(
            1,
            (0..7).map(|i| (alloc::format!("w{i}"), vec![i as f64])).chain([("你好".to_string(), vec![9.0])]),
        )
        .unwrap();
        assert_eq!(tokens_to_indices(&["你好"], &t).indices, [8]);
        assert_eq!(tokens_to_indices(&["??"], &t).indices, [0]);
        assert_eq!(tokens_to_indices(&["w2", "??", "你好", "w0"], &t).indices, [3, 0, 8, 1]);
    }

    #[test]
    fn pad_length_examples() {
        assert_eq!(compute_pad_length(1..=20, 0.95).unwrap(), 19);
        assert_eq!(compute_pad_length([4, 4, 4], 0.95).unwrap(), 4);
        assert_eq!(compute_pad_length([3, 9, 1], 1.0).unwrap(), 9);
        assert!(compute_pad_length(core::iter::empty(), 0.95).is_err());
    }

    #[test]
    fn pad_truncate_examples() {
        let s = |v: &[usize]| IndexedSeq {
            indices: v.to_vec(),
            source_text: String::new(),
        };
        assert_eq!(pad_truncate(&s(&[5, 6]), 4).indices, [0, 0, 5, 6]);
        assert_eq!(pad_truncate(&s(&[1, 2, 3, 4, 5]), 3).indices, [3, 4, 5]);
        assert_eq!(pad_truncate(&s(&[1, 2, 3]), 3).indices, [1, 2, 3]);
    }

    fn brute_pad_length(lens: &[usize], coverage: f64) -> usize {
        let max = *lens.iter().max().unwrap();
        (0..=max)
            .find(|&l| {
                let fit = lens.iter().filter(|&&x| x <= l).count();
                // exact rational comparison fit/n >= coverage, with coverage
                // given in thousandths
                (fit as f64) / (lens.len() as f64) >= coverage - 1e-12
            })
            .unwrap()
    }

    proptest! {
        #[test]
        fn pad_length_matches_enumeration(
            lens in proptest::collection::vec(0usize..40, 1..60),
            permille in 1u32..=1000,
        ) {
            let coverage = permille as f64 / 1000.0;
            prop_assert_eq!(compute_pad_length(lens.iter().copied(), coverage).unwrap(), brute_pad_length(&lens, coverage));
        }

        #[test]
        fn pad_truncate_len_and_idempotence(v in proptest::collection::vec(0usize..50, 0..30), l in 1usize..20) {
            let s = IndexedSeq { indices: v, source_text: String::new() };
            let once = pad_truncate(&s, l);
            prop_assert_eq!(once.len(), l);
            prop_assert_eq!(pad_truncate(&once, l), once);
        }

        #[test]
        fn clean_is_idempotent(s in "\\PC{0,40}") {
            let once = clean_text(&s);
            prop_assert_eq!(clean_text(&once), once.clone());
        }

        #[test]
        fn segmentation_concatenates_back(
            s in "[你好世界研究生命我爱]{0,20}",
            lex in proptest::collection::vec("[你好世界研究生命我爱]{1,3}", 0..8),
        ) {
            let set: WordSet = lex.into_iter().collect();
            let toks = segment(&s, &set);
            prop_assert_eq!(toks.concat(), s);
        }

        #[test]
        fn indices_are_valid_rows(toks in proptest::collection::vec("[a-e]{1,2}", 0..20)) {
            let t = EmbeddingTable::from_entries(2, ["a", "b", "cd"].iter().map(|w| (w.to_string(), vec![1.0, 2.0]))).unwrap();
            let seq = tokens_to_indices(&toks, &t);
            prop_assert!(seq.indices.iter().all(|&i| i <= t.len()));
        }
    }
}
