//! Negative-sampling objectives for skip-gram and CBOW.
//!
//! For a hidden vector `h` (the center input row for skip-gram, the mean of
//! the context input rows for CBOW), a positive output row `u_p` and
//! negative output rows `u_k`:
//!
//! ```text
//! loss = -ln σ(u_p·h) - Σ_k ln σ(-u_k·h)
//! ∂loss/∂h   = Σ_j (σ(u_j·h) - label_j) u_j
//! ∂loss/∂u_j = (σ(u_j·h) - label_j) h
//! ```

use rand::Rng;

use super::config::SigmoidMode;
use super::EmbeddingMatrices;
use crate::scalar::{axpy, dot, Real};
use crate::vocab::WordId;

pub const MAX_EXP: f64 = 6.0;
pub const EXP_TABLE_SIZE: usize = 1000;

/// Logistic function, tabulated or exact.
#[derive(Debug, Clone)]
pub struct Sigmoid<T> {
    mode: SigmoidMode,
    table: Vec<T>,
    scale: T,
}

impl<T: Real> Sigmoid<T> {
    pub fn new(mode: SigmoidMode) -> Self {
        let table = match mode {
            SigmoidMode::Exact => Vec::new(),
            SigmoidMode::Table => (0..EXP_TABLE_SIZE)
                .map(|i| {
                    let x = (i as f64 / EXP_TABLE_SIZE as f64 * 2.0 - 1.0) * MAX_EXP;
                    let e = x.exp();
                    T::of(e / (e + 1.0))
                })
                .collect(),
        };
        Sigmoid {
            mode,
            table,
            scale: T::of(EXP_TABLE_SIZE as f64 / MAX_EXP / 2.0),
        }
    }

    pub fn exact() -> Self {
        Self::new(SigmoidMode::Exact)
    }

    pub fn mode(&self) -> SigmoidMode {
        self.mode
    }

    #[inline]
    pub fn value(&self, x: T) -> T {
        match self.mode {
            SigmoidMode::Exact => T::one() / (T::one() + (-x).exp()),
            SigmoidMode::Table => {
                let max = T::of(MAX_EXP);
                let clamped = x.max(-max).min(max);
                let idx = ((clamped + max) * self.scale).to_usize().unwrap_or(0);
                self.table[idx.min(EXP_TABLE_SIZE - 1)]
            }
        }
    }

    /// `-ln σ(x)`.
    #[inline]
    pub fn neg_log(&self, x: T) -> T {
        match self.mode {
            // softplus(-x), stable for large |x|
            SigmoidMode::Exact => (-x).max(T::zero()) + (-x.abs()).exp().ln_1p(),
            SigmoidMode::Table => -self.value(x).ln(),
        }
    }
}

/// Row access used by the update rules. Implemented by the owned matrices
/// and by the shared view handed to training workers.
pub trait ParamRows<T> {
    fn dim(&self) -> usize;
    fn input_row(&mut self, id: WordId) -> &mut [T];
    fn output_row(&mut self, id: WordId) -> &mut [T];
}

impl<T: Real> ParamRows<T> for EmbeddingMatrices<T> {
    fn dim(&self) -> usize {
        self.input.cols()
    }

    fn input_row(&mut self, id: WordId) -> &mut [T] {
        self.input.row_mut(id)
    }

    fn output_row(&mut self, id: WordId) -> &mut [T] {
        self.output.row_mut(id)
    }
}

/// Reusable buffers for the in-place update rules.
#[derive(Debug, Clone)]
pub struct Scratch<T> {
    pub hidden: Vec<T>,
    pub hidden_grad: Vec<T>,
}

impl<T: Real> Scratch<T> {
    pub fn new(dim: usize) -> Self {
        Scratch {
            hidden: vec![T::zero(); dim],
            hidden_grad: vec![T::zero(); dim],
        }
    }
}

/// Scores `hidden` against the positive and negative output rows, updates
/// those rows in place and leaves `∂loss/∂h` in `hidden_grad`.
#[inline]
fn output_step<T: Real, P: ParamRows<T>>(
    params: &mut P,
    hidden: &[T],
    positive: WordId,
    negatives: &[WordId],
    lr: T,
    sigmoid: &Sigmoid<T>,
    hidden_grad: &mut [T],
) -> T {
    hidden_grad.fill(T::zero());
    let mut loss = T::zero();
    let targets = std::iter::once((positive, true)).chain(negatives.iter().map(|&k| (k, false)));
    for (target, is_positive) in targets {
        let u = params.output_row(target);
        let score = dot(u, hidden);
        let (g, l) = if is_positive {
            (sigmoid.value(score) - T::one(), sigmoid.neg_log(score))
        } else {
            (sigmoid.value(score), sigmoid.neg_log(-score))
        };
        loss += l;
        axpy(g, u, hidden_grad);
        axpy(-lr * g, hidden, u);
    }
    loss
}

/// One SGD step on a skip-gram pair. Returns the loss before the step.
pub fn sg_step<T: Real, P: ParamRows<T>>(
    params: &mut P,
    center: WordId,
    context: WordId,
    negatives: &[WordId],
    lr: T,
    sigmoid: &Sigmoid<T>,
    scratch: &mut Scratch<T>,
) -> T {
    scratch.hidden.copy_from_slice(params.input_row(center));
    let loss = output_step(
        params,
        &scratch.hidden,
        context,
        negatives,
        lr,
        sigmoid,
        &mut scratch.hidden_grad,
    );
    axpy(-lr, &scratch.hidden_grad, params.input_row(center));
    loss
}

/// One SGD step on a CBOW example. `context` must be nonempty.
pub fn cbow_step<T: Real, P: ParamRows<T>>(
    params: &mut P,
    context: &[WordId],
    center: WordId,
    negatives: &[WordId],
    lr: T,
    sigmoid: &Sigmoid<T>,
    scratch: &mut Scratch<T>,
) -> T {
    debug_assert!(!context.is_empty());
    let inv = T::one() / T::of(context.len() as f64);
    scratch.hidden.fill(T::zero());
    for &c in context {
        axpy(inv, params.input_row(c), &mut scratch.hidden);
    }
    let loss = output_step(
        params,
        &scratch.hidden,
        center,
        negatives,
        lr,
        sigmoid,
        &mut scratch.hidden_grad,
    );
    for &c in context {
        axpy(-lr * inv, &scratch.hidden_grad, params.input_row(c));
    }
    loss
}

/// Loss of one training example and its gradient with respect to every row
/// it touches. Rows that occur more than once get one entry per occurrence;
/// their contributions add up.
#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients<T> {
    pub loss: T,
    pub input: Vec<(WordId, Vec<T>)>,
    pub output: Vec<(WordId, Vec<T>)>,
}

impl<T: Real> PairGradients<T> {
    /// `row -= lr * gradient` for every entry.
    pub fn apply(&self, matrices: &mut EmbeddingMatrices<T>, lr: T) {
        for (id, g) in &self.input {
            axpy(-lr, g, matrices.input.row_mut(*id));
        }
        for (id, g) in &self.output {
            axpy(-lr, g, matrices.output.row_mut(*id));
        }
    }
}

/// The CBOW example had no context words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("empty context window")]
pub struct EmptyContext;

type RowGradients<T> = Vec<(WordId, Vec<T>)>;

fn hidden_gradients<T: Real>(
    matrices: &EmbeddingMatrices<T>,
    hidden: &[T],
    positive: WordId,
    negatives: &[WordId],
    sigmoid: &Sigmoid<T>,
) -> (T, Vec<T>, RowGradients<T>) {
    let mut loss = T::zero();
    let mut hidden_grad = vec![T::zero(); hidden.len()];
    let mut output = Vec::with_capacity(negatives.len() + 1);
    let targets = std::iter::once((positive, true)).chain(negatives.iter().map(|&k| (k, false)));
    for (target, is_positive) in targets {
        let u = matrices.output.row(target);
        let score = dot(u, hidden);
        let (g, l) = if is_positive {
            (sigmoid.value(score) - T::one(), sigmoid.neg_log(score))
        } else {
            (sigmoid.value(score), sigmoid.neg_log(-score))
        };
        loss += l;
        axpy(g, u, &mut hidden_grad);
        output.push((target, hidden.iter().map(|&h| g * h).collect()));
    }
    (loss, hidden_grad, output)
}

pub fn sg_pair_loss_and_grads<T: Real>(
    center: WordId,
    context: WordId,
    negatives: &[WordId],
    matrices: &EmbeddingMatrices<T>,
    sigmoid: &Sigmoid<T>,
) -> PairGradients<T> {
    let hidden = matrices.input.row(center);
    let (loss, hidden_grad, output) =
        hidden_gradients(matrices, hidden, context, negatives, sigmoid);
    PairGradients {
        loss,
        input: vec![(center, hidden_grad)],
        output,
    }
}

pub fn cbow_pair_loss_and_grads<T: Real>(
    context: &[WordId],
    center: WordId,
    negatives: &[WordId],
    matrices: &EmbeddingMatrices<T>,
    sigmoid: &Sigmoid<T>,
) -> Result<PairGradients<T>, EmptyContext> {
    if context.is_empty() {
        return Err(EmptyContext);
    }
    let inv = T::one() / T::of(context.len() as f64);
    let mut hidden = vec![T::zero(); matrices.input.cols()];
    for &c in context {
        axpy(inv, matrices.input.row(c), &mut hidden);
    }
    let (loss, hidden_grad, output) =
        hidden_gradients(matrices, &hidden, center, negatives, sigmoid);
    let share: Vec<T> = hidden_grad.iter().map(|&g| g * inv).collect();
    Ok(PairGradients {
        loss,
        input: context.iter().map(|&c| (c, share.clone())).collect(),
        output,
    })
}

/// One (center, context) pair produced by the dynamic window.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrainingPair {
    pub center: WordId,
    pub context: WordId,
    /// Position of the context word relative to the center.
    pub offset: isize,
}

/// Effective window radius, uniform in `1..=window`.
#[inline]
pub fn draw_window<R: Rng + ?Sized>(rng: &mut R, window: usize) -> usize {
    rng.random_range(1..=window)
}

/// In-bounds positions within `radius` of `pos`, excluding `pos`.
#[inline]
pub fn window_positions(len: usize, pos: usize, radius: usize) -> impl Iterator<Item = usize> {
    let lo = pos.saturating_sub(radius);
    let hi = (pos + radius).min(len.saturating_sub(1));
    (lo..=hi).filter(move |&j| j != pos)
}

/// All training pairs of a sentence, drawing one effective window per
/// position.
pub fn generate_pairs<R: Rng + ?Sized>(
    sentence: &[WordId],
    window: usize,
    rng: &mut R,
) -> Vec<TrainingPair> {
    let mut out = Vec::new();
    for (pos, &center) in sentence.iter().enumerate() {
        let radius = draw_window(rng, window);
        for j in window_positions(sentence.len(), pos, radius) {
            out.push(TrainingPair {
                center,
                context: sentence[j],
                offset: j as isize - pos as isize,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;
    use crate::vocab::seeded_rng;
    use rand::Rng;

    fn random_matrices(rows: usize, dim: usize, seed: u64) -> EmbeddingMatrices<f64> {
        let mut rng = seeded_rng(seed, 0);
        let mut gen = |_| rng.random_range(-0.5..0.5);
        EmbeddingMatrices {
            input: Matrix::from_vec(rows, dim, (0..rows * dim).map(&mut gen).collect()),
            output: Matrix::from_vec(rows, dim, (0..rows * dim).map(&mut gen).collect()),
        }
    }

    #[test]
    fn table_matches_exact_closely() {
        let table = Sigmoid::<f64>::new(SigmoidMode::Table);
        let exact = Sigmoid::<f64>::exact();
        for i in -80..=80 {
            let x = i as f64 * 0.1;
            assert!((table.value(x) - exact.value(x)).abs() < 0.01, "x={x}");
        }
        assert_eq!(table.value(0.0), 0.5);
        assert!(table.value(100.0) < 1.0 && table.value(-100.0) > 0.0);
    }

    #[test]
    fn exact_neg_log_is_stable() {
        let s = Sigmoid::<f64>::exact();
        assert!(s.neg_log(1000.0).abs() < 1e-300 + 1e-12);
        assert!((s.neg_log(-1000.0) - 1000.0).abs() < 1e-9);
        assert!((s.neg_log(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn zero_vectors_give_ln2_per_target() {
        let m = EmbeddingMatrices::<f64> {
            input: Matrix::zeros(5, 4),
            output: Matrix::zeros(5, 4),
        };
        for mode in [SigmoidMode::Exact, SigmoidMode::Table] {
            let s = Sigmoid::new(mode);
            for n in 1..4 {
                let negs: Vec<_> = (2..2 + n).collect();
                let sg = sg_pair_loss_and_grads(0, 1, &negs, &m, &s);
                let expected = (1 + n) as f64 * std::f64::consts::LN_2;
                assert!((sg.loss - expected).abs() < 1e-12);
                let cb = cbow_pair_loss_and_grads(&[0, 1], 4, &negs, &m, &s).unwrap();
                assert!((cb.loss - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_positive_has_vanishing_loss() {
        let mut m = EmbeddingMatrices::<f64> {
            input: Matrix::zeros(2, 1),
            output: Matrix::zeros(2, 1),
        };
        m.input.row_mut(0)[0] = 1.0;
        let s = Sigmoid::exact();
        let mut last = f64::INFINITY;
        for scale in [1.0, 10.0, 100.0, 1000.0] {
            m.output.row_mut(1)[0] = scale;
            let loss = sg_pair_loss_and_grads(0, 1, &[], &m, &s).loss;
            assert!(loss < last);
            last = loss;
        }
        assert!(last < 1e-300);
    }

    #[test]
    fn single_word_cbow_equals_skipgram() {
        let m = random_matrices(6, 8, 4);
        let s = Sigmoid::exact();
        let sg = sg_pair_loss_and_grads(2, 3, &[0, 5], &m, &s);
        let cb = cbow_pair_loss_and_grads(&[2], 3, &[0, 5], &m, &s).unwrap();
        assert_eq!(sg, cb);
    }

    #[test]
    fn empty_cbow_context_is_signaled() {
        let m = random_matrices(3, 2, 1);
        let s = Sigmoid::exact();
        assert_eq!(
            cbow_pair_loss_and_grads(&[], 0, &[1], &m, &s),
            Err(EmptyContext)
        );
    }

    #[test]
    fn in_place_steps_match_gradient_application() {
        let s = Sigmoid::exact();
        let lr = 0.05;
        let base = random_matrices(8, 6, 9);

        let mut applied = base.clone();
        sg_pair_loss_and_grads(1, 2, &[3, 4, 7], &base, &s).apply(&mut applied, lr);
        let mut stepped = base.clone();
        let mut scratch = Scratch::new(6);
        let loss = sg_step(&mut stepped, 1, 2, &[3, 4, 7], lr, &s, &mut scratch);
        assert!((loss - sg_pair_loss_and_grads(1, 2, &[3, 4, 7], &base, &s).loss).abs() < 1e-15);
        for (a, b) in applied
            .input
            .as_slice()
            .iter()
            .zip(stepped.input.as_slice())
        {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in applied
            .output
            .as_slice()
            .iter()
            .zip(stepped.output.as_slice())
        {
            assert!((a - b).abs() < 1e-14);
        }

        let mut applied = base.clone();
        cbow_pair_loss_and_grads(&[0, 1, 5], 2, &[6, 3], &base, &s)
            .unwrap()
            .apply(&mut applied, lr);
        let mut stepped = base.clone();
        cbow_step(&mut stepped, &[0, 1, 5], 2, &[6, 3], lr, &s, &mut scratch);
        for (a, b) in applied
            .input
            .as_slice()
            .iter()
            .zip(stepped.input.as_slice())
        {
            assert!((a - b).abs() < 1e-14);
        }
        for (a, b) in applied
            .output
            .as_slice()
            .iter()
            .zip(stepped.output.as_slice())
        {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn small_step_decreases_pair_loss() {
        let s = Sigmoid::exact();
        for seed in 0..20 {
            let m = random_matrices(10, 8, seed);
            let g = sg_pair_loss_and_grads(0, 1, &[2, 3, 4], &m, &s);
            let mut next = m.clone();
            g.apply(&mut next, 1e-3);
            let after = sg_pair_loss_and_grads(0, 1, &[2, 3, 4], &next, &s).loss;
            assert!(after < g.loss, "seed {seed}");

            let g = cbow_pair_loss_and_grads(&[5, 6, 7], 1, &[2, 3], &m, &s).unwrap();
            let mut next = m.clone();
            g.apply(&mut next, 1e-3);
            let after = cbow_pair_loss_and_grads(&[5, 6, 7], 1, &[2, 3], &next, &s)
                .unwrap()
                .loss;
            assert!(after < g.loss, "seed {seed}");
        }
    }

    #[test]
    fn pairs_of_short_sentences() {
        let mut rng = seeded_rng(0, 0);
        assert!(generate_pairs(&[7], 5, &mut rng).is_empty());
        let pairs = generate_pairs(&[7, 9], 1, &mut rng);
        let got: Vec<_> = pairs
            .iter()
            .map(|p| (p.center, p.context, p.offset))
            .collect();
        assert_eq!(got, vec![(7, 9, 1), (9, 7, -1)]);
    }

    #[test]
    fn window_positions_bounds() {
        assert_eq!(
            window_positions(10, 0, 3).collect::<Vec<_>>(),
            vec![1, 2, 3]
        );
        assert_eq!(window_positions(10, 9, 2).collect::<Vec<_>>(), vec![7, 8]);
        assert_eq!(window_positions(1, 0, 2).count(), 0);
    }

    #[test]
    fn mean_pair_count_matches_closed_form() {
        // E[#pairs at position p] = (1/w) Σ_{b=1..w} (min(p, b) + min(len-1-p, b)),
        // averaged over positions.
        let (len, w) = (10usize, 5usize);
        let mut expected = 0.0;
        for p in 0..len {
            for b in 1..=w {
                expected += (p.min(b) + (len - 1 - p).min(b)) as f64;
            }
        }
        expected /= (len * w) as f64;

        let sentence: Vec<WordId> = (0..len).collect();
        let mut rng = seeded_rng(5, 0);
        let sentences = 1000; // 10^4 positions
        let mut total = 0usize;
        for _ in 0..sentences {
            total += generate_pairs(&sentence, w, &mut rng).len();
        }
        let mean = total as f64 / (sentences * len) as f64;
        assert!(
            (mean - expected).abs() / expected < 0.02,
            "mean {mean} expected {expected}"
        );
    }
}
