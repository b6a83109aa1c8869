//! Deterministic synthetic corpus with planted relational structure.
//!
//! Every relation has paired words `x_i : y_i`, plus distractor words that
//! share pair `i`'s topic words. Each of these roles has its own marker
//! words, which appear in a fraction of the sentences about the role's word.
//! The offset `y_i - x_i` is therefore the same for every pair of a
//! relation, and analogy queries `x_i : y_i :: x_j : ?` must use it to pick
//! `y_j` over the distractors of pair `j`. Zipf-distributed filler words pad
//! every sentence: function words shared by all text, and words of a
//! per-sentence filler cluster.

#![allow(dead_code)]

use std::fmt::Write as _;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

/// A distinct alphabetic pseudo-word for every index.
pub fn pseudo_word(mut i: usize) -> String {
    let base = CONSONANTS.len() * VOWELS.len();
    let mut out = String::new();
    for _ in 0..3 {
        let s = i % base;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
        i /= base;
    }
    while i > 0 {
        let s = i % base;
        out.push(CONSONANTS[s / VOWELS.len()] as char);
        out.push(VOWELS[s % VOWELS.len()] as char);
        i /= base;
    }
    out
}

pub const RELATIONS: [&str; 4] = [
    "capital-common-countries",
    "family",
    "gram8-plural",
    "gram2-opposite",
];
pub const PAIRS_PER_RELATION: usize = 15;
const MARKERS: usize = 3;
const TOPICS: usize = 4;
const FUNCTION_WORDS: usize = 100;
const CLUSTERS: usize = 40;
const CLUSTER_SIZE: usize = 35;

/// Knobs controlling how clearly the relations show in the text.
#[derive(Debug, Clone, Copy)]
pub struct Shape {
    /// Probability that a relation sentence carries a marker word.
    pub marker_rate: f64,
    /// Extra words per pair that share its topic but play another role.
    pub distractors: usize,
    pub topics_per_sentence: usize,
    pub fillers_per_sentence: usize,
    /// Probability that a filler is a Zipf-distributed function word rather
    /// than a word of the sentence's filler cluster.
    pub function_rate: f64,
}

impl Default for Shape {
    fn default() -> Self {
        Shape {
            marker_rate: 0.25,
            distractors: 2,
            topics_per_sentence: 1,
            fillers_per_sentence: 6,
            function_rate: 0.5,
        }
    }
}

struct Pair {
    /// `x`, `y`, then distractors sharing the pair's topic.
    words: Vec<String>,
    topics: Vec<String>,
}

struct Relation {
    /// Marker words for each role, parallel to `Pair::words`.
    markers: Vec<Vec<String>>,
    pairs: Vec<Pair>,
}

pub struct SyntheticCorpus {
    /// One sentence per line.
    pub text: String,
    pub tokens: usize,
    /// Analogy suite in the usual `: category` / four-word-line format.
    pub suite: String,
    pub questions: usize,
    /// Words that share sentences by construction.
    pub cooccurring: Vec<(String, String)>,
}

pub fn generate(target_tokens: usize, seed: u64) -> SyntheticCorpus {
    generate_with(target_tokens, seed, Shape::default())
}

pub fn generate_with(target_tokens: usize, seed: u64, shape: Shape) -> SyntheticCorpus {
    let roles = 2 + shape.distractors;
    let mut next = 0usize;
    let mut fresh = || {
        next += 1;
        pseudo_word(next + 500)
    };
    let relations: Vec<Relation> = RELATIONS
        .iter()
        .map(|_| Relation {
            markers: (0..roles)
                .map(|_| (0..MARKERS).map(|_| fresh()).collect())
                .collect(),
            pairs: (0..PAIRS_PER_RELATION)
                .map(|_| Pair {
                    words: (0..roles).map(|_| fresh()).collect(),
                    topics: (0..TOPICS).map(|_| fresh()).collect(),
                })
                .collect(),
        })
        .collect();
    let function_words: Vec<String> = (0..FUNCTION_WORDS).map(|_| fresh()).collect();
    let clusters: Vec<Vec<String>> = (0..CLUSTERS)
        .map(|_| (0..CLUSTER_SIZE).map(|_| fresh()).collect())
        .collect();
    let zipf = WeightedIndex::new((1..=FUNCTION_WORDS).map(|r| 1.0 / r as f64)).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    let mut tokens = 0;
    let mut sentence: Vec<&str> = Vec::with_capacity(8);
    while tokens < target_tokens {
        sentence.clear();
        let cluster = &clusters[rng.random_range(0..CLUSTERS)];
        let filler = |rng: &mut ChaCha8Rng| -> &str {
            if rng.random_bool(shape.function_rate) {
                &function_words[zipf.sample(rng)]
            } else {
                cluster.choose(rng).unwrap()
            }
        };
        if rng.random_bool(0.9) {
            let rel = &relations[rng.random_range(0..relations.len())];
            let pair = &rel.pairs[rng.random_range(0..PAIRS_PER_RELATION)];
            let role = rng.random_range(0..roles);
            sentence.push(&pair.words[role]);
            if rng.random_bool(shape.marker_rate) {
                sentence.push(rel.markers[role].choose(&mut rng).unwrap());
            }
            sentence.extend(
                pair.topics
                    .choose_multiple(&mut rng, shape.topics_per_sentence)
                    .map(String::as_str),
            );
            for _ in 0..shape.fillers_per_sentence {
                sentence.push(filler(&mut rng));
            }
        } else {
            for _ in 0..8 {
                sentence.push(filler(&mut rng));
            }
        }
        sentence.shuffle(&mut rng);
        tokens += sentence.len();
        text.push_str(&sentence.join(" "));
        text.push('\n');
    }

    let mut suite = String::new();
    let mut questions = 0;
    for (name, rel) in RELATIONS.iter().zip(&relations) {
        let _ = writeln!(suite, ": {name}");
        for (i, p) in rel.pairs.iter().enumerate() {
            for (j, q) in rel.pairs.iter().enumerate() {
                if i != j {
                    let _ = writeln!(
                        suite,
                        "{} {} {} {}",
                        p.words[0], p.words[1], q.words[0], q.words[1]
                    );
                    questions += 1;
                }
            }
        }
    }

    let cooccurring = relations
        .iter()
        .flat_map(|rel| {
            rel.pairs.iter().flat_map(|p| {
                [
                    (p.words[0].clone(), p.topics[0].clone()),
                    (p.words[1].clone(), p.topics[1].clone()),
                ]
            })
        })
        .take(50)
        .collect();

    SyntheticCorpus {
        text,
        tokens,
        suite,
        questions,
        cooccurring,
    }
}
