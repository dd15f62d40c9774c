//! Joint embedding model.
//!
//! One input matrix (the published instruction embeddings) and one output
//! matrix are shared by every architecture. Two kinds of CBOW updates touch
//! them:
//!
//! * mono-architecture steps predict an instruction from its neighbours in
//!   the same block, weighted by `gamma`;
//! * cross-architecture steps predict an instruction from the neighbours of
//!   its linearly aligned position in the equivalent block of the other
//!   architecture, weighted by `beta`.
//!
//! Each step is one negative-sampling update: with `h` the mean of the
//! context input rows, the loss is
//! `-log σ(u_target·h) - Σ_neg log σ(-u_neg·h)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{NegativeSampler, Vocabulary};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

mod io;
mod train;

pub use io::{export_text, load, save, FORMAT_VERSION, MAGIC};
pub use train::{mono_pass, multi_pass, train, EpochStats, PassStats, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dim: usize,
    /// Context half-width `n`.
    pub window: usize,
    pub epochs: u32,
    /// Initial learning rate; decays linearly to (almost) zero.
    pub lr: f64,
    pub negatives: usize,
    /// Subsampling threshold `t`; `0` disables subsampling.
    pub subsample: f64,
    /// Weight of the mono-architecture steps.
    pub gamma: f64,
    /// Weight of the cross-architecture steps.
    pub beta: f64,
    pub min_count: u64,
    pub seed: u64,
    pub workers: usize,
    /// Draw the effective window uniformly from `1..=window` per position.
    pub dynamic_window: bool,
    /// Keep the aligned instruction itself in cross contexts.
    pub include_aligned_center: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 200,
            window: 5,
            epochs: 10,
            lr: 0.05,
            negatives: 30,
            subsample: 1e-5,
            gamma: 1.0,
            beta: 4.0,
            min_count: 5,
            seed: 1,
            workers: 1,
            dynamic_window: false,
            include_aligned_center: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.dim == 0 {
            return fail("dim must be at least 1");
        }
        if self.window == 0 {
            return fail("window must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail("lr must be positive");
        }
        if self.negatives == 0 {
            return fail("negatives must be at least 1");
        }
        if !(self.subsample >= 0.0 && self.subsample.is_finite()) {
            return fail("subsample must be nonnegative");
        }
        if !(self.gamma >= 0.0 && self.beta >= 0.0) || self.gamma + self.beta <= 0.0 {
            return fail("gamma and beta must be nonnegative with a positive sum");
        }
        if self.workers == 0 {
            return fail("workers must be at least 1");
        }
        Ok(())
    }

    /// FNV-1a over every field except `workers`.
    pub fn fingerprint(&self) -> u64 {
        let mut c = self.clone();
        c.workers = 1;
        let text = serde_json::to_string(&c).expect("config serializes");
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainingMeta {
    pub config_hash: u64,
    pub epochs_completed: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel<F: Scalar> {
    dim: usize,
    vocab: Vocabulary,
    input: Vec<F>,
    output: Vec<F>,
    meta: TrainingMeta,
}

impl<F: Scalar> EmbeddingModel<F> {
    /// Input rows uniform on `(-0.5/d, 0.5/d)`, output rows zero.
    pub fn init(vocab: Vocabulary, dim: usize, seed: u64) -> Self {
        assert!(dim > 0, "dimension must be positive");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = F::of(0.5 / dim as f64);
        let scale = F::of(dim as f64);
        let half = F::of(0.5);
        let n = vocab.len() * dim;
        let input = (0..n)
            .map(|_| loop {
                let x = (F::of(rng.random::<f64>()) - half) / scale;
                if x.abs() < bound {
                    break x;
                }
            })
            .collect();
        EmbeddingModel {
            dim,
            vocab,
            input,
            output: vec![F::zero(); n],
            meta: TrainingMeta::default(),
        }
    }

    pub fn from_parts(
        vocab: Vocabulary,
        dim: usize,
        input: Vec<F>,
        output: Vec<F>,
        meta: TrainingMeta,
    ) -> Result<Self> {
        let n = vocab.len() * dim;
        if dim == 0 || input.len() != n || output.len() != n {
            return Err(Error::ConfigMismatch(format!(
                "matrices of {} and {} values do not fit {} tokens x {} dims",
                input.len(),
                output.len(),
                vocab.len(),
                dim
            )));
        }
        Ok(EmbeddingModel {
            dim,
            vocab,
            input,
            output,
            meta,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn meta(&self) -> TrainingMeta {
        self.meta
    }

    pub fn input(&self) -> &[F] {
        &self.input
    }

    pub fn output(&self) -> &[F] {
        &self.output
    }

    pub fn input_row(&self, id: u32) -> &[F] {
        let s = id as usize * self.dim;
        &self.input[s..s + self.dim]
    }

    pub fn output_row(&self, id: u32) -> &[F] {
        let s = id as usize * self.dim;
        &self.output[s..s + self.dim]
    }

    pub fn input_row_mut(&mut self, id: u32) -> &mut [F] {
        let s = id as usize * self.dim;
        &mut self.input[s..s + self.dim]
    }

    pub fn output_row_mut(&mut self, id: u32) -> &mut [F] {
        let s = id as usize * self.dim;
        &mut self.output[s..s + self.dim]
    }

    /// Input embedding of a token.
    pub fn embedding(&self, token: &str) -> Option<&[F]> {
        self.vocab.id(token).map(|id| self.input_row(id))
    }

    /// Both matrices identical bit for bit, same vocabulary and metadata.
    pub fn bit_eq(&self, other: &Self) -> bool {
        let bits = |a: &[F], b: &[F]| {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|(x, y)| x.to_f64_lossy().to_bits() == y.to_f64_lossy().to_bits())
        };
        self.dim == other.dim
            && self.vocab == other.vocab
            && self.meta == other.meta
            && bits(&self.input, &other.input)
            && bits(&self.output, &other.output)
    }

    pub fn all_finite(&self) -> bool {
        self.input.iter().chain(&self.output).all(|x| x.is_finite())
    }

    pub(crate) fn params(&mut self) -> Params<'_, F> {
        Params {
            dim: self.dim,
            input: F::cells(&mut self.input),
            output: F::cells(&mut self.output),
        }
    }

    fn check_ids(&self, ids: &[u32]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.vocab.len()) {
            Some(id) => Err(Error::UnknownToken(format!("#{id}"))),
            None => Ok(()),
        }
    }
}

/// Linear alignment: position `i` of a block of length `len_m` maps to
/// `floor(i * len_n / len_m)` in its partner of length `len_n`.
pub fn align(i: usize, len_m: usize, len_n: usize) -> usize {
    debug_assert!(len_m > 0 && len_n > 0 && i < len_m);
    (i * len_n / len_m).min(len_n.saturating_sub(1))
}

#[inline]
fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `-log σ(x) = log(1 + e^{-x})`, stable for large |x|.
#[inline]
fn neg_log_sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

/// Shared view of the matrices used by the update kernel.
pub(crate) struct Params<'a, F: Scalar> {
    dim: usize,
    input: &'a [F::Cell],
    output: &'a [F::Cell],
}

#[derive(Debug, Default)]
pub(crate) struct Scratch<F> {
    h: Vec<F>,
    neu1e: Vec<F>,
    grads: Vec<F>,
    outputs: Vec<u32>,
}

/// Forward pass. Fills `h` with the context mean and `grads[o]` with
/// `σ(u_o·h) - y_o` for `outputs = [target, negatives...]`; returns the loss.
fn forward<F: Scalar>(
    dim: usize,
    read_in: impl Fn(usize) -> F,
    read_out: impl Fn(usize) -> F,
    context: &[u32],
    outputs: &[u32],
    h: &mut Vec<F>,
    grads: &mut Vec<F>,
) -> F {
    h.clear();
    h.resize(dim, F::zero());
    for &c in context {
        let base = c as usize * dim;
        for (k, hk) in h.iter_mut().enumerate() {
            *hk += read_in(base + k);
        }
    }
    let inv = F::one() / F::of(context.len() as f64);
    h.iter_mut().for_each(|x| *x *= inv);

    grads.clear();
    let mut loss = F::zero();
    for (n, &o) in outputs.iter().enumerate() {
        let base = o as usize * dim;
        let mut dot = F::zero();
        for (k, &hk) in h.iter().enumerate() {
            dot += read_out(base + k) * hk;
        }
        if n == 0 {
            loss += neg_log_sigmoid(dot);
            grads.push(sigmoid(dot) - F::one());
        } else {
            loss += neg_log_sigmoid(-dot);
            grads.push(sigmoid(dot));
        }
    }
    loss
}

impl<'a, F: Scalar> Params<'a, F> {
    /// One SGD step on the negative-sampling loss with rate `lr`; returns
    /// the loss before the update. `scratch.outputs` holds the target
    /// followed by the negatives.
    pub(crate) fn step(&self, context: &[u32], lr: F, scratch: &mut Scratch<F>) -> F {
        let dim = self.dim;
        let Scratch {
            h,
            neu1e,
            grads,
            outputs,
        } = scratch;
        let loss = forward(
            dim,
            |i| F::load(&self.input[i]),
            |i| F::load(&self.output[i]),
            context,
            outputs,
            h,
            grads,
        );
        if lr == F::zero() {
            return loss;
        }
        neu1e.clear();
        neu1e.resize(dim, F::zero());
        for (&o, &g) in outputs.iter().zip(grads.iter()) {
            let base = o as usize * dim;
            for (k, e) in neu1e.iter_mut().enumerate() {
                *e += g * F::load(&self.output[base + k]);
            }
        }
        for (&o, &g) in outputs.iter().zip(grads.iter()) {
            let base = o as usize * dim;
            let scale = lr * g;
            for (k, &hk) in h.iter().enumerate() {
                let cell = &self.output[base + k];
                F::store(cell, F::load(cell) - scale * hk);
            }
        }
        let scale = lr / F::of(context.len() as f64);
        for &c in context.iter() {
            let base = c as usize * dim;
            for (k, &e) in neu1e.iter().enumerate() {
                let cell = &self.input[base + k];
                F::store(cell, F::load(cell) - scale * e);
            }
        }
        loss
    }
}

/// Negative-sampling loss of one (target, context, negatives) sample.
pub fn step_loss<F: Scalar>(
    model: &EmbeddingModel<F>,
    target: u32,
    context: &[u32],
    negatives: &[u32],
) -> Result<F> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    model.check_ids(&[target])?;
    model.check_ids(context)?;
    model.check_ids(negatives)?;
    let mut outputs = vec![target];
    outputs.extend_from_slice(negatives);
    let (mut h, mut grads) = (Vec::new(), Vec::new());
    Ok(forward(
        model.dim,
        |i| model.input[i],
        |i| model.output[i],
        context,
        &outputs,
        &mut h,
        &mut grads,
    ))
}

/// Gradient of [`step_loss`], one entry per distinct row touched.
#[derive(Debug, Clone, PartialEq)]
pub struct StepGradient<F> {
    pub input: Vec<(u32, Vec<F>)>,
    pub output: Vec<(u32, Vec<F>)>,
}

fn accumulate<F: Scalar>(
    rows: &mut Vec<(u32, Vec<F>)>,
    id: u32,
    dim: usize,
    add: impl Fn(usize) -> F,
) {
    let at = match rows.iter().position(|(r, _)| *r == id) {
        Some(at) => at,
        None => {
            rows.push((id, vec![F::zero(); dim]));
            rows.len() - 1
        }
    };
    for (k, x) in rows[at].1.iter_mut().enumerate() {
        *x += add(k);
    }
}

pub fn step_gradient<F: Scalar>(
    model: &EmbeddingModel<F>,
    target: u32,
    context: &[u32],
    negatives: &[u32],
) -> Result<StepGradient<F>> {
    if context.is_empty() {
        return Err(Error::EmptyContext);
    }
    model.check_ids(&[target])?;
    model.check_ids(context)?;
    model.check_ids(negatives)?;
    let dim = model.dim;
    let mut outputs = vec![target];
    outputs.extend_from_slice(negatives);
    let (mut h, mut grads) = (Vec::new(), Vec::new());
    forward(
        dim,
        |i| model.input[i],
        |i| model.output[i],
        context,
        &outputs,
        &mut h,
        &mut grads,
    );
    let mut grad = StepGradient {
        input: Vec::new(),
        output: Vec::new(),
    };
    let mut neu1e = vec![F::zero(); dim];
    for (&o, &g) in outputs.iter().zip(&grads) {
        let row = model.output_row(o);
        for k in 0..dim {
            neu1e[k] += g * row[k];
        }
        accumulate(&mut grad.output, o, dim, |k| g * h[k]);
    }
    let inv = F::one() / F::of(context.len() as f64);
    for &c in context {
        accumulate(&mut grad.input, c, dim, |k| neu1e[k] * inv);
    }
    Ok(grad)
}

/// One stochastic update: target, same-architecture context, component
/// weight and learning rate.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingStep<F> {
    pub target: u32,
    pub context: Vec<u32>,
    pub weight: F,
    pub lr: F,
}

/// Upper bound on redraws when a negative collides with the target.
const MAX_REDRAWS: usize = 32;

/// Fill `out` with `k` negatives of the target's architecture, redrawing
/// collisions with the target. An architecture whose only token is the
/// target yields no negatives.
pub(crate) fn draw_negatives<R: Rng + ?Sized>(
    vocab: &Vocabulary,
    sampler: &NegativeSampler,
    target: u32,
    k: usize,
    rng: &mut R,
    out: &mut Vec<u32>,
) {
    let arch = vocab.arch_index_of(target);
    if sampler.support(arch) < 2 {
        return;
    }
    for _ in 0..k {
        for _ in 0..MAX_REDRAWS {
            let id = sampler.sample_index(arch, rng);
            if id != target {
                out.push(id);
                break;
            }
        }
    }
}

/// Draw `negatives` samples for the step's target and apply one update with
/// effective rate `weight * lr`. Returns the loss before the update.
pub fn cbow_step<F: Scalar, R: Rng + ?Sized>(
    model: &mut EmbeddingModel<F>,
    step: &TrainingStep<F>,
    negatives: usize,
    sampler: &NegativeSampler,
    rng: &mut R,
) -> Result<F> {
    if step.context.is_empty() {
        return Err(Error::EmptyContext);
    }
    model.check_ids(&[step.target])?;
    model.check_ids(&step.context)?;
    let mut scratch = Scratch::default();
    scratch.outputs.push(step.target);
    draw_negatives(
        &model.vocab,
        sampler,
        step.target,
        negatives,
        rng,
        &mut scratch.outputs,
    );
    let lr = step.weight * step.lr;
    let params = model.params();
    Ok(params.step(&step.context, lr, &mut scratch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Block, BlockPair};
    use crate::normalizer::Architecture;

    fn vocab(n: usize) -> Vocabulary {
        let a: Vec<String> = (0..n).map(|i| format!("t{i}")).collect();
        let pair = BlockPair {
            id: "p".into(),
            first: Block::from_bodies(Architecture::new("arm").unwrap(), &a),
            second: Block::from_bodies(Architecture::new("x86").unwrap(), &["z"]),
        };
        Vocabulary::build(&[pair], 1).unwrap()
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = EmbeddingModel::<f32>::init(vocab(30), 16, 7);
        let b = EmbeddingModel::<f32>::init(vocab(30), 16, 7);
        assert!(a.bit_eq(&b));
        let c = EmbeddingModel::<f32>::init(vocab(30), 16, 8);
        assert!(!a.bit_eq(&c));
        let bound = 0.5 / 16.0;
        assert!(a.input().iter().all(|x| x.abs() < bound));
        assert!(a.output().iter().all(|&x| x == 0.0));
        assert_eq!(a.input().len(), 31 * 16);
    }

    #[test]
    fn init_shape() {
        let m = EmbeddingModel::<f32>::init(vocab(999), 200, 1);
        assert_eq!(m.vocab().len(), 1000);
        assert_eq!(m.input().len(), 1000 * 200);
        assert_eq!(m.output().len(), 1000 * 200);
        assert_eq!(m.input_row(999).len(), 200);
    }

    #[test]
    fn align_examples() {
        assert_eq!(align(1, 2, 4), 2);
        assert_eq!(align(3, 4, 2), 1);
        for (m, n) in [(1, 1), (3, 7), (7, 3), (10, 10)] {
            assert_eq!(align(0, m, n), 0);
        }
        for i in 0..6 {
            assert_eq!(align(i, 6, 6), i);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = [
            TrainConfig {
                dim: 0,
                ..Default::default()
            },
            TrainConfig {
                window: 0,
                ..Default::default()
            },
            TrainConfig {
                lr: 0.0,
                ..Default::default()
            },
            TrainConfig {
                negatives: 0,
                ..Default::default()
            },
            TrainConfig {
                gamma: 0.0,
                beta: 0.0,
                ..Default::default()
            },
            TrainConfig {
                gamma: -1.0,
                ..Default::default()
            },
            TrainConfig {
                workers: 0,
                ..Default::default()
            },
        ];
        for c in bad {
            assert!(
                matches!(c.validate(), Err(Error::InvalidConfig(_))),
                "{c:?}"
            );
        }
        let a = TrainConfig::default();
        let b = TrainConfig {
            workers: 4,
            ..Default::default()
        };
        let c = TrainConfig {
            seed: 2,
            ..Default::default()
        };
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn empty_context_is_rejected() {
        let m = EmbeddingModel::<f64>::init(vocab(5), 4, 1);
        assert!(matches!(
            step_loss(&m, 0, &[], &[1]),
            Err(Error::EmptyContext)
        ));
        assert!(matches!(
            step_gradient(&m, 0, &[], &[1]),
            Err(Error::EmptyContext)
        ));
    }

    #[test]
    fn stable_log_sigmoid() {
        assert!((neg_log_sigmoid(0.0f64) - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(neg_log_sigmoid(800.0f64) >= 0.0 && neg_log_sigmoid(800.0f64) < 1e-300);
        assert!((neg_log_sigmoid(-800.0f64) - 800.0).abs() < 1e-9);
        assert!((sigmoid(-800.0f64)).abs() < 1e-300);
        assert_eq!(sigmoid(800.0f64), 1.0);
    }
}
