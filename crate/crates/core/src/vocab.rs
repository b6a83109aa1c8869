//! Min-count pruned vocabulary and the negative-sampling distribution.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Distribution;
use thiserror::Error;

use crate::corpus::{CorpusError, SentenceSource};

/// Dense row index of a word, `0..vocab.len()`.
pub type WordId = usize;

/// Default exponent applied to counts when building the sampler.
pub const DEFAULT_SAMPLER_POWER: f64 = 0.75;

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("min_count must be at least 1")]
    ZeroMinCount,
    #[error("vocabulary is empty")]
    Empty,
    #[error("negative sampling needs at least two words, vocabulary has {0}")]
    TooSmall(usize),
    #[error("sampler power must be finite and non-negative, got {0}")]
    BadPower(f64),
    #[error("vocabulary file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

fn parse_err(line: usize, message: impl Into<String>) -> VocabError {
    VocabError::Parse {
        line,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, WordId>,
    min_count: u64,
    total_tokens: u64,
}

/// Accumulates raw word frequencies.
#[derive(Debug, Clone, Default)]
pub struct VocabBuilder {
    counts: HashMap<String, u64>,
}

impl VocabBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_sentence<W: AsRef<str>>(&mut self, sentence: &[W]) {
        for w in sentence {
            let w = w.as_ref();
            match self.counts.get_mut(w) {
                Some(c) => *c += 1,
                None => {
                    self.counts.insert(w.to_owned(), 1);
                }
            }
        }
    }

    pub fn build(self, min_count: u64) -> Result<Vocabulary, VocabError> {
        Vocabulary::from_counts(self.counts, min_count)
    }
}

/// Builds the vocabulary of words occurring at least `min_count` times.
/// Ids follow descending frequency, ties in lexicographic order.
pub fn build_vocabulary<I, S, W>(sentences: I, min_count: u64) -> Result<Vocabulary, VocabError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<[W]>,
    W: AsRef<str>,
{
    let mut builder = VocabBuilder::new();
    for s in sentences {
        builder.add_sentence(s.as_ref());
    }
    builder.build(min_count)
}

impl Vocabulary {
    pub fn from_counts(counts: HashMap<String, u64>, min_count: u64) -> Result<Self, VocabError> {
        if min_count == 0 {
            return Err(VocabError::ZeroMinCount);
        }
        let mut entries: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .collect();
        entries.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let (words, counts): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        Ok(Self::from_parts(words, counts, min_count))
    }

    fn from_parts(words: Vec<String>, counts: Vec<u64>, min_count: u64) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        let total_tokens = counts.iter().sum();
        Vocabulary {
            words,
            counts,
            index,
            min_count,
            total_tokens,
        }
    }

    /// Counts every sentence of `source` and prunes.
    pub fn from_source(source: &dyn SentenceSource, min_count: u64) -> Result<Self, VocabError> {
        if min_count == 0 {
            return Err(VocabError::ZeroMinCount);
        }
        let mut builder = VocabBuilder::new();
        for sentence in source.sentences()? {
            builder.add_sentence(&sentence?);
        }
        builder.build(min_count)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn id(&self, word: &str) -> Option<WordId> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: WordId) -> &str {
        &self.words[id]
    }

    pub fn count(&self, id: WordId) -> u64 {
        self.counts[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    /// Sum of the retained counts.
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    /// Maps a sentence to ids. Pruned words vanish and take no window slot.
    pub fn encode<W: AsRef<str>>(&self, sentence: &[W]) -> Vec<WordId> {
        sentence
            .iter()
            .filter_map(|w| self.id(w.as_ref()))
            .collect()
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "#vocab\t{}\t{}", self.len(), self.min_count)?;
        for (w, c) in self.words.iter().zip(&self.counts) {
            writeln!(out, "{w}\t{c}")?;
        }
        out.flush()
    }

    pub fn read_from<R: BufRead>(reader: R) -> Result<Self, VocabError> {
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err(1, "missing header"))??;
        let fields: Vec<&str> = header.split('\t').collect();
        if fields.len() != 3 || fields[0] != "#vocab" {
            return Err(parse_err(1, "expected `#vocab<TAB>size<TAB>min_count`"));
        }
        let size: usize = fields[1]
            .parse()
            .map_err(|_| parse_err(1, format!("bad size {:?}", fields[1])))?;
        let min_count: u64 = fields[2]
            .parse()
            .map_err(|_| parse_err(1, format!("bad min_count {:?}", fields[2])))?;
        if min_count == 0 {
            return Err(parse_err(1, "min_count must be at least 1"));
        }

        let mut words = Vec::with_capacity(size);
        let mut counts = Vec::with_capacity(size);
        let mut seen = HashMap::with_capacity(size);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (word, count) = line
                .split_once('\t')
                .ok_or_else(|| parse_err(lineno, "expected `word<TAB>count`"))?;
            let count: u64 = count
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad count {count:?}")))?;
            if word.is_empty() {
                return Err(parse_err(lineno, "empty word"));
            }
            if count < min_count {
                return Err(parse_err(
                    lineno,
                    format!("count {count} below min_count {min_count}"),
                ));
            }
            if seen.insert(word.to_owned(), lineno).is_some() {
                return Err(parse_err(lineno, format!("duplicate word {word:?}")));
            }
            words.push(word.to_owned());
            counts.push(count);
        }
        if words.len() != size {
            return Err(parse_err(
                1,
                format!("header declares {size} words, found {}", words.len()),
            ));
        }
        Ok(Self::from_parts(words, counts, min_count))
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self, VocabError> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

/// Frequent-word subsampling: a token of relative frequency `f` is kept with
/// probability `min(1, sqrt(t/f) + t/f)`.
#[derive(Debug, Clone)]
pub struct Subsampler {
    keep: Vec<f64>,
}

impl Subsampler {
    pub fn new(vocab: &Vocabulary, threshold: f64) -> Self {
        let total = vocab.total_tokens().max(1) as f64;
        let keep = vocab
            .counts()
            .iter()
            .map(|&c| {
                let ratio = threshold / (c as f64 / total);
                (ratio.sqrt() + ratio).min(1.0)
            })
            .collect();
        Subsampler { keep }
    }

    pub fn keep_probability(&self, id: WordId) -> f64 {
        self.keep[id]
    }

    pub fn keep<R: Rng>(&self, id: WordId, rng: &mut R) -> bool {
        let p = self.keep[id];
        p >= 1.0 || rng.random::<f64>() < p
    }
}

/// Draws word ids with probability proportional to `count^power`.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    probabilities: Vec<f64>,
    alias: WeightedAliasIndex<f64>,
    power: f64,
    seed: u64,
}

pub fn build_negative_sampler(
    vocab: &Vocabulary,
    power: f64,
    seed: u64,
) -> Result<NegativeSampler, VocabError> {
    NegativeSampler::new(vocab.counts(), power, seed)
}

impl NegativeSampler {
    pub fn new(counts: &[u64], power: f64, seed: u64) -> Result<Self, VocabError> {
        if counts.is_empty() {
            return Err(VocabError::Empty);
        }
        if !(power.is_finite() && power >= 0.0) {
            return Err(VocabError::BadPower(power));
        }
        let weights: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(power)).collect();
        let total: f64 = weights.iter().sum();
        let probabilities = weights.iter().map(|w| w / total).collect();
        let alias = WeightedAliasIndex::new(weights).map_err(|_| VocabError::Empty)?;
        Ok(NegativeSampler {
            probabilities,
            alias,
            power,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn probability(&self, id: WordId) -> f64 {
        self.probabilities[id]
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn power(&self) -> f64 {
        self.power
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for one consumer (a training worker, a test).
    /// The same `(seed, stream)` always yields the same sequence.
    pub fn rng(&self, stream: u64) -> ChaCha8Rng {
        seeded_rng(self.seed, stream)
    }

    #[inline]
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> WordId {
        self.alias.sample(rng)
    }

    /// `n` draws, redrawing any that hit `forbidden`.
    pub fn sample_negatives<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n: usize,
        forbidden: WordId,
    ) -> Result<Vec<WordId>, VocabError> {
        if self.len() < 2 {
            return Err(VocabError::TooSmall(self.len()));
        }
        let mut out = Vec::with_capacity(n);
        self.fill_negatives(rng, n, forbidden, &mut out);
        Ok(out)
    }

    /// Allocation-free variant of [`sample_negatives`](Self::sample_negatives).
    /// The caller guarantees at least two words with nonzero probability.
    #[inline]
    pub fn fill_negatives<R: Rng + ?Sized>(
        &self,
        rng: &mut R,
        n: usize,
        forbidden: WordId,
        out: &mut Vec<WordId>,
    ) {
        out.clear();
        while out.len() < n {
            let id = self.draw(rng);
            if id != forbidden {
                out.push(id);
            }
        }
    }
}

/// ChaCha8 generator keyed by `seed` on stream `stream`.
pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sents(raw: &[&[&str]]) -> Vec<Vec<String>> {
        raw.iter()
            .map(|s| s.iter().map(|w| w.to_string()).collect())
            .collect()
    }

    #[test]
    fn min_count_two_keeps_only_a() {
        let v = build_vocabulary(sents(&[&["a", "b", "a"], &["a", "c"]]), 2).unwrap();
        assert_eq!(v.words(), &["a"]);
        assert_eq!(v.counts(), &[3]);
    }

    #[test]
    fn ids_by_frequency_then_lexicographic() {
        let v = build_vocabulary(sents(&[&["a", "c", "a"], &["a", "b"]]), 1).unwrap();
        assert_eq!(v.words(), &["a", "b", "c"]);
        assert_eq!(v.counts(), &[3, 1, 1]);
        assert_eq!(v.total_tokens(), 5);
        assert_eq!(v.id("c"), Some(2));
        assert_eq!(v.id("zzz"), None);
    }

    #[test]
    fn empty_corpus_is_empty_vocab() {
        let v = build_vocabulary(Vec::<Vec<String>>::new(), 1).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn zero_min_count_rejected() {
        assert!(matches!(
            build_vocabulary(sents(&[&["a"]]), 0),
            Err(VocabError::ZeroMinCount)
        ));
    }

    #[test]
    fn encode_drops_pruned_words() {
        let v = build_vocabulary(sents(&[&["a", "b", "a"], &["a", "c"]]), 2).unwrap();
        assert_eq!(v.encode(&["b", "a", "c", "a"]), vec![0, 0]);
    }

    #[test]
    fn vocab_file_roundtrip() {
        let v = build_vocabulary(sents(&[&["x", "y", "x"], &["z"]]), 1).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "#vocab\t3\t1\nx\t2\ny\t1\nz\t1\n"
        );
        assert_eq!(Vocabulary::read_from(buf.as_slice()).unwrap(), v);
    }

    #[test]
    fn vocab_file_errors_carry_line_numbers() {
        let cases = [
            ("nope\n", 1),
            ("#vocab\t2\t1\na\t3\na\t2\n", 3),
            ("#vocab\t1\t1\na three\n", 2),
            ("#vocab\t1\t5\na\t3\n", 2),
            ("#vocab\t2\t1\na\t3\n", 1),
        ];
        for (text, line) in cases {
            match Vocabulary::read_from(text.as_bytes()) {
                Err(VocabError::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn sampler_power_three_quarters() {
        let s = NegativeSampler::new(&[1, 16], 0.75, 0).unwrap();
        assert!((s.probability(0) - 1.0 / 9.0).abs() < 1e-12);
        assert!((s.probability(1) - 8.0 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn sampler_power_zero_is_uniform() {
        let s = NegativeSampler::new(&[1, 50, 1000, 7], 0.0, 0).unwrap();
        for p in s.probabilities() {
            assert!((p - 0.25).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_rejects_empty_and_bad_power() {
        assert!(matches!(
            NegativeSampler::new(&[], 0.75, 0),
            Err(VocabError::Empty)
        ));
        assert!(matches!(
            NegativeSampler::new(&[1], -1.0, 0),
            Err(VocabError::BadPower(_))
        ));
    }

    #[test]
    fn sampler_uniform_counts_within_three_sigma() {
        let s = NegativeSampler::new(&[5, 5, 5], 0.75, 11).unwrap();
        let mut rng = s.rng(0);
        let mut freq = [0u32; 3];
        for _ in 0..30_000 {
            freq[s.draw(&mut rng)] += 1;
        }
        // Binomial(30000, 1/3): sigma = sqrt(30000 * 1/3 * 2/3) ~ 81.6.
        let sigma = (30_000.0f64 / 3.0 * 2.0 / 3.0).sqrt();
        for f in freq {
            assert!((f as f64 - 10_000.0).abs() < 3.0 * sigma, "{freq:?}");
        }
    }

    #[test]
    fn two_word_vocab_forbidden_zero_always_one() {
        let s = NegativeSampler::new(&[100, 1], 0.75, 3).unwrap();
        let mut rng = s.rng(0);
        let draws = s.sample_negatives(&mut rng, 50, 0).unwrap();
        assert_eq!(draws.len(), 50);
        assert!(draws.iter().all(|&d| d == 1));
        assert_eq!(s.sample_negatives(&mut rng, 5, 1).unwrap().len(), 5);
    }

    #[test]
    fn single_word_vocab_cannot_exclude() {
        let s = NegativeSampler::new(&[4], 0.75, 0).unwrap();
        let mut rng = s.rng(0);
        assert!(matches!(
            s.sample_negatives(&mut rng, 1, 0),
            Err(VocabError::TooSmall(1))
        ));
    }

    #[test]
    fn same_seed_same_draws() {
        let s = NegativeSampler::new(&[3, 9, 27, 81], 0.75, 99).unwrap();
        let a: Vec<_> = {
            let mut r = s.rng(2);
            (0..100).map(|_| s.draw(&mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = s.rng(2);
            (0..100).map(|_| s.draw(&mut r)).collect()
        };
        let c: Vec<_> = {
            let mut r = s.rng(3);
            (0..100).map(|_| s.draw(&mut r)).collect()
        };
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn subsampling_keep_probabilities() {
        let v = build_vocabulary(
            vec![std::iter::repeat_n("a", 999)
                .chain(["b"])
                .collect::<Vec<_>>()],
            1,
        )
        .unwrap();
        let s = Subsampler::new(&v, 1e-3);
        // f(a) = 0.999: t/f ~ 1.001e-3, sqrt ~ 0.03164
        let ratio: f64 = 1e-3 / 0.999;
        assert!((s.keep_probability(0) - (ratio.sqrt() + ratio)).abs() < 1e-12);
        assert_eq!(s.keep_probability(1), 1.0);
    }

    proptest! {
        #[test]
        fn sampler_probabilities_normalized(counts in proptest::collection::vec(1u64..10_000, 1..50), power in 0.0f64..2.0) {
            let s = NegativeSampler::new(&counts, power, 0).unwrap();
            let sum: f64 = s.probabilities().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            // proportional to count^power
            let ratio0 = s.probability(0) / (counts[0] as f64).powf(power);
            for (i, &c) in counts.iter().enumerate() {
                let r = s.probability(i) / (c as f64).powf(power);
                prop_assert!((r - ratio0).abs() <= 1e-9 * ratio0.abs());
            }
        }

        #[test]
        fn vocab_size_monotone_in_min_count(
            corpus in proptest::collection::vec(proptest::collection::vec("[a-e]{1,2}", 0..10), 0..20),
            m in 1u64..6,
        ) {
            let a = build_vocabulary(&corpus, m).unwrap();
            let b = build_vocabulary(&corpus, m + 1).unwrap();
            prop_assert!(b.len() <= a.len());
            for &c in a.counts() {
                prop_assert!(c >= m);
            }
            for (i, w) in a.words().iter().enumerate() {
                prop_assert_eq!(a.id(w), Some(i));
            }
        }
    }
}
