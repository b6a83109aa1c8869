//! Trained embedding spaces: cosine queries, exact nearest neighbors and
//! vector files.
//!
//! Two on-disk formats are supported:
//!
//! * word2vec text: a `<V> <dim>` header, then one `word v1 ... vdim` line
//!   per word, values printed with six decimals.
//! * `.vecbin`: the magic `EMBLVEC\x01`, vocabulary size and dimension as
//!   little-endian `u64`, then per word a little-endian `u32` byte length,
//!   the UTF-8 word and `dim` little-endian `f32` values. Lossless for `f32`
//!   spaces.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::scalar::{dot, norm, Real};
use crate::trainer::TrainedModel;
use crate::vocab::{Vocabulary, WordId};

pub const VECBIN_MAGIC: &[u8; 8] = b"EMBLVEC\x01";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("word {0:?} is not in the vocabulary")]
    Oov(String),
    #[error("word {0:?} has an all-zero vector")]
    DegenerateVector(String),
    #[error("query vector has zero norm")]
    DegenerateQuery,
    #[error("expected {expected} dimensions, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn parse_err(line: usize, message: impl Into<String>) -> EmbeddingError {
    EmbeddingError::Parse {
        line,
        message: message.into(),
    }
}

/// A neighbor returned by similarity queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor<T> {
    pub id: WordId,
    pub word: String,
    pub score: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSpace<T> {
    words: Vec<String>,
    index: HashMap<String, WordId>,
    vectors: Matrix<T>,
    unit: Matrix<T>,
    zero: Vec<bool>,
}

impl<T: Real> EmbeddingSpace<T> {
    /// Fails on duplicate words or when `words` and `vectors` disagree in
    /// length.
    pub fn new(words: Vec<String>, vectors: Matrix<T>) -> Result<Self, EmbeddingError> {
        if words.len() != vectors.rows() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: vectors.rows(),
                got: words.len(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return Err(parse_err(i + 1, format!("duplicate word {w:?}")));
            }
        }
        let mut unit = vectors.clone();
        let mut zero = vec![false; words.len()];
        for (i, z) in zero.iter_mut().enumerate() {
            let row = unit.row_mut(i);
            let n = norm(row);
            if n > T::zero() {
                row.iter_mut().for_each(|x| *x = *x / n);
            } else {
                *z = true;
            }
        }
        Ok(EmbeddingSpace {
            words,
            index,
            vectors,
            unit,
            zero,
        })
    }

    pub fn from_vocab(vocab: &Vocabulary, vectors: Matrix<T>) -> Result<Self, EmbeddingError> {
        Self::new(vocab.words().to_vec(), vectors)
    }

    /// The input vectors of a trained model.
    pub fn from_model(model: &TrainedModel<T>) -> Self {
        Self::from_vocab(&model.vocab, model.matrices.input.clone())
            .expect("vocabulary and matrices agree")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id]
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn vectors(&self) -> &Matrix<T> {
        &self.vectors
    }

    pub fn vector(&self, id: WordId) -> &[T] {
        self.vectors.row(id)
    }

    /// Unit-norm copy of a row; zero rows stay zero.
    pub fn unit_vector(&self, id: WordId) -> &[T] {
        self.unit.row(id)
    }

    pub fn is_zero(&self, id: WordId) -> bool {
        self.zero[id]
    }

    /// Words whose vector is all zeros. They never appear as neighbors.
    pub fn zero_vector_words(&self) -> Vec<&str> {
        self.zero
            .iter()
            .enumerate()
            .filter(|(_, &z)| z)
            .map(|(i, _)| self.words[i].as_str())
            .collect()
    }

    pub fn lookup(&self, word: &str) -> Result<WordId, EmbeddingError> {
        self.id(word)
            .ok_or_else(|| EmbeddingError::Oov(word.to_owned()))
    }

    pub fn cosine(&self, u: &str, v: &str) -> Result<T, EmbeddingError> {
        let (a, b) = (self.lookup(u)?, self.lookup(v)?);
        for (id, w) in [(a, u), (b, v)] {
            if self.zero[id] {
                return Err(EmbeddingError::DegenerateVector(w.to_owned()));
            }
        }
        let c = dot(self.unit.row(a), self.unit.row(b));
        Ok(c.max(-T::one()).min(T::one()))
    }

    /// Exhaustive top-`k` by cosine to `query`, skipping `exclude` and zero
    /// rows. Ties go to the smaller id.
    pub fn nearest_neighbors(
        &self,
        query: &[T],
        k: usize,
        exclude: &HashSet<WordId>,
    ) -> Result<Vec<Neighbor<T>>, EmbeddingError> {
        if query.len() != self.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                expected: self.dim(),
                got: query.len(),
            });
        }
        let qn = norm(query);
        if qn <= T::zero() {
            return Err(EmbeddingError::DegenerateQuery);
        }
        let scores = (0..self.len())
            .filter(|id| !exclude.contains(id))
            .map(|id| (id, dot(self.unit.row(id), query) / qn));
        Ok(self.neighbors(top_k(self.candidates(scores), k)))
    }

    pub(crate) fn candidates<'a, I>(&'a self, scores: I) -> impl Iterator<Item = (WordId, T)> + 'a
    where
        I: Iterator<Item = (WordId, T)> + 'a,
    {
        scores.filter(move |&(id, s)| !self.zero[id] && !s.is_nan())
    }

    pub(crate) fn neighbors(&self, ranked: Vec<(WordId, T)>) -> Vec<Neighbor<T>> {
        ranked
            .into_iter()
            .map(|(id, score)| Neighbor {
                id,
                word: self.words[id].clone(),
                score,
            })
            .collect()
    }

    /// Neighbors of a vocabulary word, excluding the word itself.
    pub fn neighbors_of(&self, word: &str, k: usize) -> Result<Vec<Neighbor<T>>, EmbeddingError> {
        let id = self.lookup(word)?;
        if self.zero[id] {
            return Err(EmbeddingError::DegenerateVector(word.to_owned()));
        }
        self.nearest_neighbors(self.vector(id), k, &HashSet::from([id]))
    }

    pub fn write_text<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        writeln!(out, "{} {}", self.len(), self.dim())?;
        for (i, w) in self.words.iter().enumerate() {
            out.write_all(w.as_bytes())?;
            for x in self.vectors.row(i) {
                write!(out, " {:.6}", x.as_f64())?;
            }
            out.write_all(b"\n")?;
        }
        out.flush()
    }

    pub fn save_text(&self, path: &Path) -> io::Result<()> {
        self.write_text(File::create(path)?)
    }

    pub fn read_text<R: BufRead>(mut reader: R) -> Result<Self, EmbeddingError> {
        let mut buf = Vec::new();
        let mut lineno = 0;
        let mut next_line = |buf: &mut Vec<u8>| -> Result<Option<(usize, String)>, EmbeddingError> {
            loop {
                buf.clear();
                if reader.read_until(b'\n', buf)? == 0 {
                    return Ok(None);
                }
                lineno += 1;
                let text = std::str::from_utf8(buf)
                    .map_err(|_| parse_err(lineno, "invalid UTF-8"))?
                    .trim_end_matches(['\n', '\r'])
                    .to_owned();
                if !text.trim().is_empty() {
                    return Ok(Some((lineno, text)));
                }
            }
        };

        let (hline, header) = next_line(&mut buf)?.ok_or_else(|| parse_err(1, "missing header"))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str| s.parse::<usize>().ok();
        let (size, dim) = match fields.as_slice() {
            [v, d] => match (parse_usize(v), parse_usize(d)) {
                (Some(v), Some(d)) if d > 0 => (v, d),
                _ => return Err(parse_err(hline, format!("malformed header {header:?}"))),
            },
            _ => return Err(parse_err(hline, format!("malformed header {header:?}"))),
        };

        let mut words = Vec::with_capacity(size);
        let mut data = Vec::with_capacity(size * dim);
        let mut seen = HashSet::with_capacity(size);
        while let Some((line, text)) = next_line(&mut buf)? {
            if words.len() == size {
                return Err(parse_err(
                    line,
                    format!("more than the {size} rows declared"),
                ));
            }
            let mut parts = text.split_whitespace();
            let word = parts.next().expect("nonblank line has a field");
            let before = data.len();
            for p in parts {
                let v: T = p
                    .parse()
                    .map_err(|_| parse_err(line, format!("bad number {p:?}")))?;
                data.push(v);
            }
            let got = data.len() - before;
            if got != dim {
                return Err(parse_err(
                    line,
                    format!("expected {dim} values, found {got}"),
                ));
            }
            if !seen.insert(word.to_owned()) {
                return Err(parse_err(line, format!("duplicate word {word:?}")));
            }
            words.push(word.to_owned());
        }
        if words.len() != size {
            return Err(parse_err(
                lineno + 1,
                format!("header declares {size} rows, found {}", words.len()),
            ));
        }
        Self::new(words, Matrix::from_vec(size, dim, data))
    }

    pub fn load_text(path: &Path) -> Result<Self, EmbeddingError> {
        Self::read_text(BufReader::new(File::open(path)?))
    }

    pub fn write_binary<W: Write>(&self, out: W) -> io::Result<()> {
        let mut out = BufWriter::new(out);
        out.write_all(VECBIN_MAGIC)?;
        out.write_all(&(self.len() as u64).to_le_bytes())?;
        out.write_all(&(self.dim() as u64).to_le_bytes())?;
        for (i, w) in self.words.iter().enumerate() {
            out.write_all(&(w.len() as u32).to_le_bytes())?;
            out.write_all(w.as_bytes())?;
            for x in self.vectors.row(i) {
                out.write_all(&x.as_f32().to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn save_binary(&self, path: &Path) -> io::Result<()> {
        self.write_binary(File::create(path)?)
    }

    /// Errors report the 1-based record number (0 for the header).
    pub fn read_binary<R: Read>(mut reader: R) -> Result<Self, EmbeddingError> {
        let mut magic = [0u8; 8];
        reader
            .read_exact(&mut magic)
            .map_err(|_| parse_err(0, "truncated header"))?;
        if &magic != VECBIN_MAGIC {
            return Err(parse_err(0, "not a .vecbin file"));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |r: &mut R| -> Result<u64, EmbeddingError> {
            r.read_exact(&mut u64buf)
                .map_err(|_| parse_err(0, "truncated header"))?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let size = read_u64(&mut reader)? as usize;
        let dim = read_u64(&mut reader)? as usize;
        if dim == 0 {
            return Err(parse_err(0, "dimension is zero"));
        }
        let mut words = Vec::with_capacity(size.min(1 << 24));
        let mut data = Vec::with_capacity(size.saturating_mul(dim).min(1 << 28));
        let mut row = vec![0u8; dim * 4];
        for rec in 1..=size {
            let truncated = |_| parse_err(rec, "truncated record");
            let mut len = [0u8; 4];
            reader.read_exact(&mut len).map_err(truncated)?;
            let mut word = vec![0u8; u32::from_le_bytes(len) as usize];
            reader.read_exact(&mut word).map_err(truncated)?;
            let word = String::from_utf8(word).map_err(|_| parse_err(rec, "invalid UTF-8 word"))?;
            reader.read_exact(&mut row).map_err(truncated)?;
            data.extend(
                row.chunks_exact(4)
                    .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)),
            );
            words.push(word);
        }
        Self::new(words, Matrix::from_vec(size, dim, data))
    }

    pub fn load_binary(path: &Path) -> Result<Self, EmbeddingError> {
        Self::read_binary(BufReader::new(File::open(path)?))
    }

    /// `.vecbin` files load as binary, anything else as text.
    pub fn load(path: &Path) -> Result<Self, EmbeddingError> {
        if path.extension().is_some_and(|e| e == "vecbin") {
            Self::load_binary(path)
        } else {
            Self::load_text(path)
        }
    }
}

/// Heap entry ordered so that the worst candidate is the greatest.
struct Ranked<T>(WordId, T);

impl<T: Real> PartialEq for Ranked<T> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<T: Real> Eq for Ranked<T> {}

impl<T: Real> PartialOrd for Ranked<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<T: Real> Ord for Ranked<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .1
            .partial_cmp(&self.1)
            .expect("scores are never NaN")
            .then(self.0.cmp(&other.0))
    }
}

/// The `k` best `(id, score)` pairs, by descending score then ascending id.
/// Scores must not be NaN.
pub(crate) fn top_k<T: Real>(
    scores: impl Iterator<Item = (WordId, T)>,
    k: usize,
) -> Vec<(WordId, T)> {
    if k == 0 {
        return Vec::new();
    }
    let mut heap = BinaryHeap::with_capacity(k + 1);
    for (id, s) in scores {
        if heap.len() < k {
            heap.push(Ranked(id, s));
        } else if let Some(worst) = heap.peek() {
            let cand = Ranked(id, s);
            if cand < *worst {
                heap.pop();
                heap.push(cand);
            }
        }
    }
    heap.into_sorted_vec()
        .into_iter()
        .map(|Ranked(id, s)| (id, s))
        .collect()
}
