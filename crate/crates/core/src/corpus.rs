//! Raw text to lowercased token sequences.
//!
//! Input is one sentence per line. Lines are read as bytes so that stray
//! invalid UTF-8 only costs the whitespace-delimited chunk it sits in
//! instead of aborting the whole stream.

use std::fs::File;
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom};
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("read error in corpus stream: {0}")]
    Stream(#[from] io::Error),
}

impl CorpusError {
    fn io(path: &Path, source: io::Error) -> Self {
        CorpusError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// What counts as a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TokenPattern {
    /// Maximal runs of alphabetic characters. An apostrophe is kept only
    /// when it sits between two letters (`dell'acqua`). Digits and
    /// punctuation separate tokens and are dropped.
    #[default]
    Alphabetic,
    /// Whitespace separated chunks, kept verbatim apart from lowercasing.
    Whitespace,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenizerConfig {
    pub lowercase: bool,
    pub token_pattern: TokenPattern,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        TokenizerConfig {
            lowercase: true,
            token_pattern: TokenPattern::Alphabetic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CorpusStats {
    pub sentence_count: u64,
    pub token_count: u64,
}

impl CorpusStats {
    pub fn to_tsv(&self) -> String {
        format!(
            "sentences\ttokens\n{}\t{}\n",
            self.sentence_count, self.token_count
        )
    }
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Splits one line of text into tokens.
pub fn tokenize(line: &str, config: &TokenizerConfig) -> Vec<String> {
    let mut out = Vec::new();
    tokenize_into(line, config, &mut out);
    out
}

fn tokenize_into(line: &str, config: &TokenizerConfig, out: &mut Vec<String>) {
    // Lowercase before splitting: some uppercase letters lowercase into a
    // letter plus a combining mark, and splitting afterwards keeps the
    // tokenizer idempotent.
    let lowered;
    let text = if config.lowercase {
        lowered = line.to_lowercase();
        lowered.as_str()
    } else {
        line
    };

    match config.token_pattern {
        TokenPattern::Whitespace => {
            out.extend(text.split_whitespace().map(str::to_owned));
        }
        TokenPattern::Alphabetic => {
            let mut chars = text.char_indices().peekable();
            let mut start: Option<usize> = None;
            while let Some((i, c)) = chars.next() {
                if c.is_alphabetic() {
                    start.get_or_insert(i);
                    continue;
                }
                if let Some(s) = start {
                    let next_is_letter = chars.peek().is_some_and(|&(_, n)| n.is_alphabetic());
                    if is_apostrophe(c) && next_is_letter {
                        continue;
                    }
                    out.push(text[s..i].to_owned());
                    start = None;
                }
            }
            if let Some(s) = start {
                out.push(text[s..].to_owned());
            }
        }
    }
}

/// Tokenizes a raw byte line. Whitespace-delimited chunks holding invalid
/// UTF-8 are dropped whole; everything else tokenizes as with [`tokenize`].
pub fn tokenize_bytes(line: &[u8], config: &TokenizerConfig) -> Vec<String> {
    let mut out = Vec::new();
    tokenize_bytes_into(line, config, &mut out);
    out
}

fn tokenize_bytes_into(line: &[u8], config: &TokenizerConfig, out: &mut Vec<String>) {
    if let Ok(text) = std::str::from_utf8(line) {
        tokenize_into(text, config, out);
        return;
    }
    for chunk in line.split(u8::is_ascii_whitespace) {
        if let Ok(text) = std::str::from_utf8(chunk) {
            tokenize_into(text, config, out);
        }
    }
}

/// Approximate sentence splitter: breaks after ". ", "! " and "? ".
/// It knows nothing about abbreviations or quotes.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut start = 0;
    for i in 0..bytes.len().saturating_sub(1) {
        if matches!(bytes[i], b'.' | b'!' | b'?') && bytes[i + 1] == b' ' {
            let piece = text[start..=i].trim();
            if !piece.is_empty() {
                out.push(piece);
            }
            start = i + 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

/// Lazily yields one token sequence per input line that produces at least
/// one token.
pub struct SentenceStream<R> {
    reader: R,
    config: TokenizerConfig,
    buf: Vec<u8>,
    /// Byte offset of the next unread line.
    position: u64,
    /// Lines starting at or after this offset belong to someone else.
    end: Option<u64>,
}

impl<R: BufRead> SentenceStream<R> {
    pub fn new(reader: R, config: TokenizerConfig) -> Self {
        SentenceStream {
            reader,
            config,
            buf: Vec::new(),
            position: 0,
            end: None,
        }
    }
}

impl<R: BufRead> Iterator for SentenceStream<R> {
    type Item = Result<Vec<String>, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if self.end.is_some_and(|end| self.position >= end) {
                return None;
            }
            self.buf.clear();
            let n = match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => return None,
                Ok(n) => n,
                Err(e) => return Some(Err(e.into())),
            };
            self.position += n as u64;
            let mut line = self.buf.as_slice();
            while let Some((&last, rest)) = line.split_last() {
                if last == b'\n' || last == b'\r' {
                    line = rest;
                } else {
                    break;
                }
            }
            let mut tokens = Vec::new();
            tokenize_bytes_into(line, &self.config, &mut tokens);
            if !tokens.is_empty() {
                return Some(Ok(tokens));
            }
        }
    }
}

/// Opens `path` and streams its sentences. Fails before the first yield if
/// the file cannot be opened.
pub fn stream_sentences(
    path: &Path,
    config: TokenizerConfig,
) -> Result<SentenceStream<BufReader<File>>, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    Ok(SentenceStream::new(BufReader::new(file), config))
}

pub fn corpus_stats_from_reader<R: BufRead>(
    reader: R,
    config: TokenizerConfig,
) -> Result<CorpusStats, CorpusError> {
    let mut stats = CorpusStats::default();
    for sentence in SentenceStream::new(reader, config) {
        let sentence = sentence?;
        stats.sentence_count += 1;
        stats.token_count += sentence.len() as u64;
    }
    Ok(stats)
}

pub fn corpus_stats(path: &Path, config: TokenizerConfig) -> Result<CorpusStats, CorpusError> {
    let file = File::open(path).map_err(|e| CorpusError::io(path, e))?;
    corpus_stats_from_reader(BufReader::new(file), config)
}

pub type SentenceIter<'a> = Box<dyn Iterator<Item = Result<Vec<String>, CorpusError>> + Send + 'a>;

/// A corpus that can be read as a whole or as disjoint partitions, one per
/// training worker. The union of all partitions of a given count is the
/// whole corpus, in order.
pub trait SentenceSource: Sync {
    fn partition(&self, part: usize, parts: usize) -> Result<SentenceIter<'_>, CorpusError>;

    fn sentences(&self) -> Result<SentenceIter<'_>, CorpusError> {
        self.partition(0, 1)
    }
}

/// Newline-delimited UTF-8 text file.
#[derive(Debug, Clone)]
pub struct TextCorpus {
    pub path: PathBuf,
    pub config: TokenizerConfig,
}

impl TextCorpus {
    pub fn new(path: impl Into<PathBuf>, config: TokenizerConfig) -> Self {
        TextCorpus {
            path: path.into(),
            config,
        }
    }

    /// Streams the lines whose first byte lies in `[start, end)`.
    pub fn region(
        &self,
        start: u64,
        end: u64,
    ) -> Result<SentenceStream<BufReader<File>>, CorpusError> {
        let file = File::open(&self.path).map_err(|e| CorpusError::io(&self.path, e))?;
        let mut reader = BufReader::new(file);
        let mut position = 0;
        if start > 0 {
            // Back up one byte: if it is a newline, `start` begins a line;
            // otherwise skip the remainder of the line we landed in.
            reader
                .seek(SeekFrom::Start(start - 1))
                .map_err(|e| CorpusError::io(&self.path, e))?;
            let mut skipped = Vec::new();
            let n = reader
                .read_until(b'\n', &mut skipped)
                .map_err(|e| CorpusError::io(&self.path, e))?;
            position = start - 1 + n as u64;
        }
        let mut stream = SentenceStream::new(reader, self.config);
        stream.position = position;
        stream.end = Some(end);
        Ok(stream)
    }
}

impl SentenceSource for TextCorpus {
    fn partition(&self, part: usize, parts: usize) -> Result<SentenceIter<'_>, CorpusError> {
        assert!(parts >= 1 && part < parts);
        let len = std::fs::metadata(&self.path)
            .map_err(|e| CorpusError::io(&self.path, e))?
            .len();
        let start = len * part as u64 / parts as u64;
        let end = len * (part as u64 + 1) / parts as u64;
        Ok(Box::new(self.region(start, end)?))
    }
}

/// Pre-tokenized sentences held in memory. Partitions are contiguous chunks.
#[derive(Debug, Clone, Default)]
pub struct InMemoryCorpus {
    pub sentences: Vec<Vec<String>>,
}

impl InMemoryCorpus {
    pub fn new(sentences: Vec<Vec<String>>) -> Self {
        InMemoryCorpus { sentences }
    }

    /// Tokenizes each line of `text` eagerly.
    pub fn from_text(text: &str, config: &TokenizerConfig) -> Self {
        let sentences = text
            .lines()
            .map(|l| tokenize(l, config))
            .filter(|t| !t.is_empty())
            .collect();
        InMemoryCorpus { sentences }
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }
}

impl SentenceSource for InMemoryCorpus {
    fn partition(&self, part: usize, parts: usize) -> Result<SentenceIter<'_>, CorpusError> {
        assert!(parts >= 1 && part < parts);
        let n = self.sentences.len();
        let range = n * part / parts..n * (part + 1) / parts;
        Ok(Box::new(self.sentences[range].iter().cloned().map(Ok)))
    }
}

/// Reads everything from `reader` into memory and tokenizes line by line.
/// Used by tests as a non-streaming reference.
pub fn tokenize_all<R: Read>(
    mut reader: R,
    config: &TokenizerConfig,
) -> io::Result<Vec<Vec<String>>> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    Ok(bytes
        .split(|&b| b == b'\n')
        .map(|line| tokenize_bytes(line.strip_suffix(b"\r").unwrap_or(line), config))
        .filter(|t| !t.is_empty())
        .collect())
}
