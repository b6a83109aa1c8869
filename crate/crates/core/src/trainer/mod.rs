//! Skip-gram and CBOW training with negative sampling.

pub mod config;
mod hogwild;
pub mod objective;

use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::thread;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{ModelKind, SigmoidMode, TrainingConfig};
pub use objective::{
    cbow_pair_loss_and_grads, cbow_step, draw_window, generate_pairs, sg_pair_loss_and_grads,
    sg_step, window_positions, EmptyContext, PairGradients, ParamRows, Scratch, Sigmoid,
    TrainingPair,
};

use crate::corpus::{CorpusError, SentenceSource};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::vocab::{seeded_rng, NegativeSampler, Subsampler, VocabError, Vocabulary, WordId};
use hogwild::SharedMatrices;

/// RNG stream reserved for matrix initialization; workers use 1..=workers.
const INIT_STREAM: u64 = 0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("vocabulary is empty after pruning with min_count {0}")]
    EmptyVocabulary(u64),
    #[error("vocabulary has a single word; negative sampling needs at least two")]
    VocabularyTooSmall,
    #[error(
        "non-finite loss in epoch {epoch}: input id {input} ({input_word:?}), \
         target id {target} ({target_word:?})"
    )]
    NonFiniteLoss {
        epoch: usize,
        input: WordId,
        input_word: String,
        target: WordId,
        target_word: String,
    },
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Input (word) and output (context) vectors, one row per vocabulary entry.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrices<T> {
    pub input: Matrix<T>,
    pub output: Matrix<T>,
}

impl<T: Real> EmbeddingMatrices<T> {
    pub fn vocab_size(&self) -> usize {
        self.input.rows()
    }

    pub fn dim(&self) -> usize {
        self.input.cols()
    }

    pub fn is_finite(&self) -> bool {
        self.input.is_finite() && self.output.is_finite()
    }
}

/// Input rows uniform in `[-0.5/dim, 0.5/dim]`, output rows zero.
pub fn init_matrices<T: Real>(vocab_size: usize, dim: usize, seed: u64) -> EmbeddingMatrices<T> {
    assert!(dim >= 1, "dim must be at least 1");
    let mut rng = seeded_rng(seed, INIT_STREAM);
    let half = 0.5 / dim as f64;
    let input = (0..vocab_size * dim)
        .map(|_| T::of(rng.random_range(-half..=half)))
        .collect();
    EmbeddingMatrices {
        input: Matrix::from_vec(vocab_size, dim, input),
        output: Matrix::zeros(vocab_size, dim),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub pairs: u64,
    pub tokens: u64,
    pub seconds: f64,
    pub tokens_per_sec: f64,
    /// Learning rate reached at the end of the epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(
            "epoch\tmean_loss\tpairs\ttokens\tseconds\ttokens_per_sec\tlearning_rate\n",
        );
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{}\t{:.6}\t{}\t{}\t{:.3}\t{:.1}\t{:.6e}",
                e.epoch,
                e.mean_loss,
                e.pairs,
                e.tokens,
                e.seconds,
                e.tokens_per_sec,
                e.learning_rate
            );
        }
        out
    }

    pub fn save_tsv(&self, path: &Path) -> io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(self.to_tsv().as_bytes())?;
        w.flush()
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel<T> {
    pub config: TrainingConfig,
    pub vocab: Vocabulary,
    pub matrices: EmbeddingMatrices<T>,
    pub log: TrainingLog,
}

/// Builds the vocabulary from `source` and trains on it.
pub fn train<T: Real>(
    source: &dyn SentenceSource,
    config: &TrainingConfig,
) -> Result<TrainedModel<T>, TrainError> {
    config.validate().map_err(TrainError::InvalidConfig)?;
    let vocab = Vocabulary::from_source(source, config.min_count)?;
    train_with_vocab(source, vocab, config)
}

/// Trains with a prebuilt vocabulary. Words of `source` missing from `vocab`
/// are skipped and occupy no window slot.
pub fn train_with_vocab<T: Real>(
    source: &dyn SentenceSource,
    vocab: Vocabulary,
    config: &TrainingConfig,
) -> Result<TrainedModel<T>, TrainError> {
    config.validate().map_err(TrainError::InvalidConfig)?;
    if vocab.is_empty() {
        return Err(TrainError::EmptyVocabulary(config.min_count));
    }
    if vocab.len() < 2 {
        return Err(TrainError::VocabularyTooSmall);
    }

    let sampler = NegativeSampler::new(vocab.counts(), config.sampler_power, config.seed)?;
    let mut matrices = init_matrices::<T>(vocab.len(), config.dim, config.seed);
    let ctx = WorkerContext {
        source,
        vocab: &vocab,
        sampler: &sampler,
        subsampler: config.subsample.map(|t| Subsampler::new(&vocab, t)),
        sigmoid: Sigmoid::new(config.sigmoid),
        config,
        processed: AtomicU64::new(0),
        abort: AtomicBool::new(false),
        total_work: (config.epochs as u64 * vocab.total_tokens()) as f64 + 1.0,
    };
    let mut rngs: Vec<ChaCha8Rng> = (0..config.workers)
        .map(|w| sampler.rng(w as u64 + 1))
        .collect();

    let mut log = TrainingLog::default();
    {
        let shared = SharedMatrices::new(&mut matrices);
        for epoch in 1..=config.epochs {
            let started = Instant::now();
            let outcomes: Vec<Result<EpochTally, TrainError>> = if config.workers == 1 {
                vec![ctx.run(shared.handle(), &mut rngs[0], 0, epoch)]
            } else {
                thread::scope(|s| {
                    let handles: Vec<_> = rngs
                        .iter_mut()
                        .enumerate()
                        .map(|(part, rng)| {
                            let params = shared.handle();
                            let ctx = &ctx;
                            s.spawn(move || ctx.run(params, rng, part, epoch))
                        })
                        .collect();
                    handles
                        .into_iter()
                        .map(|h| h.join().expect("training worker panicked"))
                        .collect()
                })
            };
            let mut tally = EpochTally::default();
            for outcome in outcomes {
                let t = outcome?;
                tally.loss += t.loss;
                tally.pairs += t.pairs;
                tally.tokens += t.tokens;
            }
            let seconds = started.elapsed().as_secs_f64();
            log.epochs.push(EpochLog {
                epoch,
                mean_loss: if tally.pairs > 0 {
                    tally.loss / tally.pairs as f64
                } else {
                    0.0
                },
                pairs: tally.pairs,
                tokens: tally.tokens,
                seconds,
                tokens_per_sec: if seconds > 0.0 {
                    tally.tokens as f64 / seconds
                } else {
                    0.0
                },
                learning_rate: ctx.learning_rate(ctx.processed.load(Ordering::Relaxed)),
            });
        }
    }

    Ok(TrainedModel {
        config: config.clone(),
        vocab,
        matrices,
        log,
    })
}

#[derive(Debug, Default, Clone, Copy)]
struct EpochTally {
    loss: f64,
    pairs: u64,
    tokens: u64,
}

struct WorkerContext<'a, T> {
    source: &'a dyn SentenceSource,
    vocab: &'a Vocabulary,
    sampler: &'a NegativeSampler,
    subsampler: Option<Subsampler>,
    sigmoid: Sigmoid<T>,
    config: &'a TrainingConfig,
    /// Retained tokens consumed so far, over all workers and epochs.
    processed: AtomicU64,
    abort: AtomicBool,
    total_work: f64,
}

impl<T: Real> WorkerContext<'_, T> {
    /// Linear decay with processed-token progress, floored.
    #[inline]
    fn learning_rate(&self, processed: u64) -> f64 {
        let progress = processed as f64 / self.total_work;
        self.config.initial_lr * (1.0 - progress).max(self.config.lr_floor_fraction)
    }

    fn run(
        &self,
        mut params: SharedMatrices<'_, T>,
        rng: &mut ChaCha8Rng,
        part: usize,
        epoch: usize,
    ) -> Result<EpochTally, TrainError> {
        let mut tally = EpochTally::default();
        let mut scratch = Scratch::new(self.config.dim);
        let mut ids: Vec<WordId> = Vec::new();
        let mut negatives: Vec<WordId> = Vec::new();
        let mut context: Vec<WordId> = Vec::new();
        let window = self.config.window;
        let n = self.config.negatives;

        for sentence in self.source.partition(part, self.config.workers)? {
            if self.abort.load(Ordering::Relaxed) {
                break;
            }
            let sentence = sentence?;
            ids.clear();
            ids.extend(sentence.iter().filter_map(|w| self.vocab.id(w)));
            let retained = ids.len() as u64;
            if let Some(sub) = &self.subsampler {
                ids.retain(|&id| sub.keep(id, rng));
            }
            let base = self.processed.load(Ordering::Relaxed);

            for pos in 0..ids.len() {
                let lr = T::of(self.learning_rate(base + pos as u64));
                let center = ids[pos];
                let radius = draw_window(rng, window);
                match self.config.model {
                    ModelKind::SkipGram => {
                        for j in window_positions(ids.len(), pos, radius) {
                            let target = ids[j];
                            self.sampler.fill_negatives(rng, n, target, &mut negatives);
                            let loss = sg_step(
                                &mut params,
                                center,
                                target,
                                &negatives,
                                lr,
                                &self.sigmoid,
                                &mut scratch,
                            );
                            self.check(loss, epoch, center, target)?;
                            tally.loss += loss.as_f64();
                            tally.pairs += 1;
                        }
                    }
                    ModelKind::Cbow => {
                        context.clear();
                        context.extend(window_positions(ids.len(), pos, radius).map(|j| ids[j]));
                        if context.is_empty() {
                            continue;
                        }
                        self.sampler.fill_negatives(rng, n, center, &mut negatives);
                        let loss = cbow_step(
                            &mut params,
                            &context,
                            center,
                            &negatives,
                            lr,
                            &self.sigmoid,
                            &mut scratch,
                        );
                        self.check(loss, epoch, context[0], center)?;
                        tally.loss += loss.as_f64();
                        tally.pairs += 1;
                    }
                }
            }
            self.processed.fetch_add(retained, Ordering::Relaxed);
            tally.tokens += retained;
        }
        Ok(tally)
    }

    #[inline]
    fn check(
        &self,
        loss: T,
        epoch: usize,
        input: WordId,
        target: WordId,
    ) -> Result<(), TrainError> {
        if loss.is_finite() {
            return Ok(());
        }
        self.abort.store(true, Ordering::Relaxed);
        Err(TrainError::NonFiniteLoss {
            epoch,
            input,
            input_word: self.vocab.word(input).to_owned(),
            target,
            target_word: self.vocab.word(target).to_owned(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::InMemoryCorpus;

    fn toy() -> InMemoryCorpus {
        InMemoryCorpus::from_text(
            "il gatto dorme sul divano\nil cane corre nel parco\n",
            &Default::default(),
        )
    }

    fn cfg(model: ModelKind) -> TrainingConfig {
        TrainingConfig {
            dim: 4,
            window: 2,
            min_count: 1,
            negatives: 2,
            epochs: 1,
            seed: 7,
            ..TrainingConfig::new(model)
        }
    }

    #[test]
    fn init_range_and_zero_output() {
        let m = init_matrices::<f32>(10, 4, 3);
        assert!(m.input.as_slice().iter().all(|x| x.abs() <= 0.125));
        assert!(m.input.as_slice().iter().any(|&x| x != 0.0));
        assert!(m.output.as_slice().iter().all(|&x| x == 0.0));
        assert_eq!(m, init_matrices::<f32>(10, 4, 3));
        assert_ne!(m, init_matrices::<f32>(10, 4, 4));
    }

    #[test]
    fn toy_training_is_deterministic() {
        for model in [ModelKind::SkipGram, ModelKind::Cbow] {
            let a = train::<f32>(&toy(), &cfg(model)).unwrap();
            let b = train::<f32>(&toy(), &cfg(model)).unwrap();
            assert_eq!(a.matrices, b.matrices);
            assert_eq!(a.log.epochs.len(), 1);
            assert_eq!(a.log.epochs[0].tokens, 10);
            assert!(a.matrices.is_finite());
            assert_eq!(a.matrices.vocab_size(), a.vocab.len());
        }
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let c = TrainingConfig {
            min_count: 100,
            ..cfg(ModelKind::SkipGram)
        };
        assert!(matches!(
            train::<f32>(&toy(), &c),
            Err(TrainError::EmptyVocabulary(100))
        ));
    }

    #[test]
    fn invalid_config_is_rejected() {
        let c = TrainingConfig {
            window: 0,
            ..cfg(ModelKind::SkipGram)
        };
        assert!(matches!(
            train::<f32>(&toy(), &c),
            Err(TrainError::InvalidConfig(_))
        ));
    }

    #[test]
    fn exploding_learning_rate_is_diagnosed() {
        let c = TrainingConfig {
            initial_lr: 1e30,
            sigmoid: SigmoidMode::Exact,
            epochs: 3,
            ..cfg(ModelKind::SkipGram)
        };
        match train::<f32>(&toy(), &c) {
            Err(TrainError::NonFiniteLoss { input_word, .. }) => assert!(!input_word.is_empty()),
            other => panic!("expected a non-finite loss, got {:?}", other.map(|m| m.log)),
        }
    }

    #[test]
    fn learning_rate_decays_to_floor() {
        let c = TrainingConfig {
            epochs: 2,
            ..cfg(ModelKind::SkipGram)
        };
        let m = train::<f64>(&toy(), &c).unwrap();
        let lr0 = c.initial_lr;
        let e1 = m.log.epochs[0].learning_rate;
        let e2 = m.log.epochs[1].learning_rate;
        assert!(e1 < lr0 && e2 < e1);
        assert!(e2 >= lr0 * c.lr_floor_fraction);
    }

    #[test]
    fn multi_worker_training_runs() {
        let text: String = (0..200)
            .map(|i| format!("a{} b{} c{} d e f\n", i % 5, i % 7, i % 3))
            .collect();
        let corpus = InMemoryCorpus::from_text(&text, &Default::default());
        let c = TrainingConfig {
            workers: 3,
            epochs: 2,
            ..cfg(ModelKind::Cbow)
        };
        let m = train::<f32>(&corpus, &c).unwrap();
        assert!(m.matrices.is_finite());
        assert_eq!(m.log.epochs[0].tokens, corpus.token_count() as u64);
    }

    #[test]
    fn subsampling_runs_and_drops_tokens() {
        let text = "the the the the the the rare word\n".repeat(50);
        let corpus = InMemoryCorpus::from_text(&text, &Default::default());
        let plain = train::<f32>(&corpus, &cfg(ModelKind::SkipGram)).unwrap();
        let sub = train::<f32>(
            &corpus,
            &TrainingConfig {
                subsample: Some(1e-3),
                ..cfg(ModelKind::SkipGram)
            },
        )
        .unwrap();
        assert!(sub.log.epochs[0].pairs < plain.log.epochs[0].pairs);
    }
}
