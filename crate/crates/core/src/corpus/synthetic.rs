//! Synthetic two-architecture corpus with a known token bijection.
//!
//! Architecture `alpha` has opcodes `op0..opN`; architecture `beta` has
//! `ins0..insN`, and a random permutation maps each alpha opcode to its beta
//! counterpart. Alpha blocks are walks of a sparse random Markov chain, so
//! every token has a recognizable neighbourhood. The paired beta block is
//! the image of the alpha block under the bijection, with positional noise:
//! each position is, with probability `noise`, dropped, doubled by an extra
//! random token, or swapped with its successor.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Block, BlockPair, Label, LabeledPair};
use crate::normalizer::Architecture;

pub const ARCH_A: &str = "alpha";
pub const ARCH_B: &str = "beta";

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub vocab_size: usize,
    pub blocks: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub noise: f64,
    /// Preferred successors per token in the Markov chain.
    pub successors: usize,
    /// Probability of moving to a preferred successor.
    pub stickiness: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            vocab_size: 50,
            blocks: 2000,
            min_len: 3,
            max_len: 10,
            noise: 0.1,
            successors: 3,
            stickiness: 0.85,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub pairs: Vec<BlockPair>,
    /// `(alpha token, beta token)` for every opcode.
    pub bijection: Vec<(String, String)>,
    /// One similar pair per opcode plus as many dissimilar ones.
    pub planted: Vec<LabeledPair>,
}

fn alpha_body(i: usize) -> String {
    format!("op{i}")
}

fn beta_body(i: usize) -> String {
    format!("ins{i}")
}

pub fn generate(spec: &SyntheticSpec) -> SyntheticCorpus {
    assert!(spec.vocab_size >= 2, "need at least two opcodes");
    assert!(spec.min_len >= 1 && spec.min_len <= spec.max_len);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.vocab_size;
    let arch_a = Architecture::new(ARCH_A).expect("valid tag");
    let arch_b = Architecture::new(ARCH_B).expect("valid tag");

    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);

    let all: Vec<usize> = (0..n).collect();
    let preferred: Vec<Vec<usize>> = (0..n)
        .map(|_| {
            all.choose_multiple(&mut rng, spec.successors.min(n))
                .copied()
                .collect()
        })
        .collect();

    let mut pairs = Vec::with_capacity(spec.blocks);
    for b in 0..spec.blocks {
        let len = rng.random_range(spec.min_len..=spec.max_len);
        let mut walk = Vec::with_capacity(len);
        let mut cur = rng.random_range(0..n);
        walk.push(cur);
        while walk.len() < len {
            cur = if rng.random::<f64>() < spec.stickiness {
                *preferred[cur].choose(&mut rng).expect("nonempty")
            } else {
                rng.random_range(0..n)
            };
            walk.push(cur);
        }

        let mut image: Vec<usize> = Vec::with_capacity(len + 2);
        let mut p = 0;
        while p < walk.len() {
            let mapped = perm[walk[p]];
            if rng.random::<f64>() >= spec.noise {
                image.push(mapped);
                p += 1;
                continue;
            }
            match rng.random_range(0..3) {
                0 if walk.len() > spec.min_len => {}
                1 if walk.len() < spec.max_len => {
                    image.push(mapped);
                    image.push(rng.random_range(0..n));
                }
                2 if p + 1 < walk.len() => {
                    image.push(perm[walk[p + 1]]);
                    image.push(mapped);
                    p += 1;
                }
                _ => image.push(mapped),
            }
            p += 1;
        }
        while image.len() < spec.min_len {
            image.push(rng.random_range(0..n));
        }
        image.truncate(spec.max_len);

        let first: Vec<String> = walk.iter().map(|&i| alpha_body(i)).collect();
        let second: Vec<String> = image.iter().map(|&i| beta_body(i)).collect();
        pairs.push(BlockPair {
            id: format!("syn{b}"),
            first: Block::from_bodies(arch_a.clone(), &first),
            second: Block::from_bodies(arch_b.clone(), &second),
        });
    }

    let token_a = |i: usize| format!("{ARCH_A}:{}", alpha_body(i));
    let token_b = |i: usize| format!("{ARCH_B}:{}", beta_body(i));
    let bijection: Vec<(String, String)> = (0..n).map(|i| (token_a(i), token_b(perm[i]))).collect();

    let mut planted: Vec<LabeledPair> = bijection
        .iter()
        .map(|(a, b)| LabeledPair {
            left: a.clone(),
            right: b.clone(),
            label: Label::Similar,
        })
        .collect();
    for i in 0..n {
        let j = (i + rng.random_range(1..n)) % n;
        planted.push(LabeledPair {
            left: token_a(i),
            right: token_b(perm[j]),
            label: Label::Dissimilar,
        });
    }

    SyntheticCorpus {
        pairs,
        bijection,
        planted,
    }
}
