use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{align, draw_negatives, EmbeddingModel, Params, Scratch, TrainConfig};
use crate::corpus::{keep_probability, Block, BlockPair, NegativeSampler, Vocabulary};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Learning-rate floor as a fraction of the initial rate.
const LR_FLOOR: f64 = 1e-4;

/// Summed loss and step count of one or more passes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PassStats {
    pub loss: f64,
    pub steps: u64,
}

impl PassStats {
    pub fn mean(&self) -> Option<f64> {
        (self.steps > 0).then(|| self.loss / self.steps as f64)
    }

    fn add(&mut self, other: PassStats) {
        self.loss += other.loss;
        self.steps += other.steps;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpochStats {
    pub mono: PassStats,
    pub multi: PassStats,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    pub fn mono_means(&self) -> Vec<Option<f64>> {
        self.epochs.iter().map(|e| e.mono.mean()).collect()
    }

    pub fn multi_means(&self) -> Vec<Option<f64>> {
        self.epochs.iter().map(|e| e.multi.mean()).collect()
    }
}

/// Per-worker training state over the shared matrices.
struct Worker<'a, F: Scalar, R> {
    params: &'a Params<'a, F>,
    vocab: &'a Vocabulary,
    sampler: &'a NegativeSampler,
    keep: &'a [f64],
    cfg: &'a TrainConfig,
    rng: R,
    scratch: Scratch<F>,
    context: Vec<u32>,
    working: Vec<u32>,
}

fn keep_table(vocab: &Vocabulary, rate: f64) -> Vec<f64> {
    (0..vocab.len() as u32)
        .map(|id| {
            if rate > 0.0 {
                keep_probability(
                    vocab.count(id),
                    vocab.arch_total_by_index(vocab.arch_index_of(id)),
                    rate,
                )
            } else {
                1.0
            }
        })
        .collect()
}

impl<'a, F: Scalar, R: Rng> Worker<'a, F, R> {
    fn step(&mut self, target: u32, lr: F) -> f64 {
        self.scratch.outputs.clear();
        self.scratch.outputs.push(target);
        draw_negatives(
            self.vocab,
            self.sampler,
            target,
            self.cfg.negatives,
            &mut self.rng,
            &mut self.scratch.outputs,
        );
        self.params
            .step(&self.context, lr, &mut self.scratch)
            .to_f64_lossy()
    }

    fn half_width(&mut self) -> usize {
        if self.cfg.dynamic_window {
            self.rng.random_range(1..=self.cfg.window)
        } else {
            self.cfg.window
        }
    }

    fn mono(&mut self, ids: &[u32], alpha: f64) -> PassStats {
        let mut working = std::mem::take(&mut self.working);
        working.clear();
        for &id in ids {
            let p = self.keep[id as usize];
            if p >= 1.0 || self.rng.random::<f64>() < p {
                working.push(id);
            }
        }
        let lr = F::of(self.cfg.gamma * alpha);
        let mut stats = PassStats::default();
        if working.len() >= 2 {
            for p in 0..working.len() {
                let b = self.half_width();
                let lo = p.saturating_sub(b);
                let hi = (p + b).min(working.len() - 1);
                self.context.clear();
                self.context
                    .extend((lo..=hi).filter(|&q| q != p).map(|q| working[q]));
                stats.loss += self.step(working[p], lr);
                stats.steps += 1;
            }
        }
        self.working = working;
        stats
    }

    /// Predict every token of `m` from the window around its aligned
    /// position in `n`.
    fn cross(&mut self, m: &[u32], n: &[u32], lr: F) -> PassStats {
        let mut stats = PassStats::default();
        if m.is_empty() || n.is_empty() {
            return stats;
        }
        for i in 0..m.len() {
            let j = align(i, m.len(), n.len());
            let b = self.half_width();
            let lo = j.saturating_sub(b);
            let hi = (j + b).min(n.len() - 1);
            self.context.clear();
            let center = self.cfg.include_aligned_center;
            self.context
                .extend((lo..=hi).filter(|&q| center || q != j).map(|q| n[q]));
            if self.context.is_empty() {
                continue;
            }
            stats.loss += self.step(m[i], lr);
            stats.steps += 1;
        }
        stats
    }

    fn multi(&mut self, a: &[u32], b: &[u32], alpha: f64) -> PassStats {
        let lr = F::of(self.cfg.beta * alpha);
        let mut stats = self.cross(a, b, lr);
        stats.add(self.cross(b, a, lr));
        stats
    }
}

fn worker<'a, F: Scalar, R: Rng>(
    params: &'a Params<'a, F>,
    vocab: &'a Vocabulary,
    sampler: &'a NegativeSampler,
    keep: &'a [f64],
    cfg: &'a TrainConfig,
    rng: R,
) -> Worker<'a, F, R> {
    Worker {
        params,
        vocab,
        sampler,
        keep,
        cfg,
        rng,
        scratch: Scratch::default(),
        context: Vec::new(),
        working: Vec::new(),
    }
}

/// Mono-architecture CBOW over one block with weight `gamma` and rate
/// `alpha`. Unknown tokens are skipped and the rest subsampled first.
pub fn mono_pass<F: Scalar, R: Rng>(
    model: &mut EmbeddingModel<F>,
    block: &Block,
    cfg: &TrainConfig,
    sampler: &NegativeSampler,
    rng: &mut R,
    alpha: f64,
) -> PassStats {
    let ids = model.vocab.encode(block);
    let keep = keep_table(&model.vocab, cfg.subsample);
    let vocab = model.vocab.clone();
    let params = model.params();
    let mut w = worker(&params, &vocab, sampler, &keep, cfg, rng);
    w.mono(&ids, alpha)
}

/// Cross-architecture steps in both directions of one pair, with weight
/// `beta` and rate `alpha`.
pub fn multi_pass<F: Scalar, R: Rng>(
    model: &mut EmbeddingModel<F>,
    pair: &BlockPair,
    cfg: &TrainConfig,
    sampler: &NegativeSampler,
    rng: &mut R,
    alpha: f64,
) -> PassStats {
    let a = model.vocab.encode(&pair.first);
    let b = model.vocab.encode(&pair.second);
    let vocab = model.vocab.clone();
    let params = model.params();
    let mut w = worker(&params, &vocab, sampler, &[], cfg, rng);
    w.multi(&a, &b, alpha)
}

fn stream_seed(seed: u64, epoch: u64, stream: u64) -> u64 {
    // splitmix64 over the triple.
    let mut z = seed
        ^ epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15)
        ^ stream.wrapping_mul(0xbf58_476d_1ce4_e5b9).rotate_left(17);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Train on `pairs` for `cfg.epochs` epochs.
///
/// Each epoch visits the pairs in a seeded random order; for every pair both
/// blocks get a mono pass and the pair gets a cross pass. The learning rate
/// decays linearly with the number of tokens processed. With more than one
/// worker the pairs are split between threads that update the matrices
/// without locks, so only `workers == 1` is reproducible.
pub fn train<F: Scalar>(
    model: &mut EmbeddingModel<F>,
    pairs: &[BlockPair],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if cfg.dim != model.dim {
        return Err(Error::ConfigMismatch(format!(
            "model has dimension {}, config asks for {}",
            model.dim, cfg.dim
        )));
    }
    if cfg.min_count != model.vocab.min_count() {
        return Err(Error::ConfigMismatch(format!(
            "vocabulary built with min_count {}, config asks for {}",
            model.vocab.min_count(),
            cfg.min_count
        )));
    }
    let encoded: Vec<(Vec<u32>, Vec<u32>)> = pairs
        .iter()
        .map(|p| (model.vocab.encode(&p.first), model.vocab.encode(&p.second)))
        .collect();
    let epoch_tokens: u64 = encoded
        .iter()
        .map(|(a, b)| (a.len() + b.len()) as u64)
        .sum();
    let total = (epoch_tokens * u64::from(cfg.epochs)).max(1) as f64;
    let vocab = model.vocab.clone();
    let sampler = NegativeSampler::new(&vocab);
    let keep = keep_table(&vocab, cfg.subsample);
    let progress = AtomicU64::new(0);
    let mut report = TrainReport::default();
    let mut order: Vec<usize> = (0..encoded.len()).collect();

    for epoch in 0..cfg.epochs {
        let mut shuffle_rng =
            ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, epoch.into(), u64::MAX));
        order.shuffle(&mut shuffle_rng);
        let params = model.params();
        let run = |chunk: &[usize], stream: u64| -> EpochStats {
            let rng = ChaCha8Rng::seed_from_u64(stream_seed(cfg.seed, epoch.into(), stream));
            let mut w = worker(&params, &vocab, &sampler, &keep, cfg, rng);
            let mut stats = EpochStats::default();
            for &i in chunk {
                let (a, b) = &encoded[i];
                let done = progress.load(Ordering::Relaxed) as f64;
                let alpha = (cfg.lr * (1.0 - done / total)).max(cfg.lr * LR_FLOOR);
                stats.mono.add(w.mono(a, alpha));
                stats.mono.add(w.mono(b, alpha));
                stats.multi.add(w.multi(a, b, alpha));
                progress.fetch_add((a.len() + b.len()) as u64, Ordering::Relaxed);
            }
            stats
        };
        let stats = if cfg.workers == 1 || order.len() < 2 {
            run(&order, 0)
        } else {
            let size = order.len().div_ceil(cfg.workers);
            std::thread::scope(|s| {
                let handles: Vec<_> = order
                    .chunks(size)
                    .enumerate()
                    .map(|(k, chunk)| {
                        let run = &run;
                        s.spawn(move || run(chunk, k as u64))
                    })
                    .collect();
                handles
                    .into_iter()
                    .fold(EpochStats::default(), |mut acc, h| {
                        let e = h.join().expect("training worker panicked");
                        acc.mono.add(e.mono);
                        acc.multi.add(e.multi);
                        acc
                    })
            })
        };
        report.epochs.push(stats);
        model.meta.epochs_completed += 1;
    }
    model.meta.config_hash = cfg.fingerprint();
    Ok(report)
}
