use rand::Rng;

use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::normalizer::Architecture;

const POWER: f64 = 0.75;

#[derive(Debug, Clone)]
struct Table {
    ids: Vec<u32>,
    cumulative: Vec<f64>,
}

/// Per-architecture unigram^0.75 sampler. A draw for one architecture only
/// ever returns ids of that architecture.
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    archs: Vec<Architecture>,
    tables: Vec<Table>,
}

impl NegativeSampler {
    pub fn new(vocab: &Vocabulary) -> Self {
        let archs = vocab.architectures().to_vec();
        let mut tables: Vec<Table> = archs
            .iter()
            .map(|_| Table {
                ids: Vec::new(),
                cumulative: Vec::new(),
            })
            .collect();
        for id in 0..vocab.len() as u32 {
            let t = &mut tables[vocab.arch_index_of(id)];
            let w = (vocab.count(id) as f64).powf(POWER);
            let prev = t.cumulative.last().copied().unwrap_or(0.0);
            t.ids.push(id);
            t.cumulative.push(prev + w);
        }
        NegativeSampler { archs, tables }
    }

    pub fn sample<R: Rng + ?Sized>(&self, arch: &Architecture, rng: &mut R) -> Result<u32> {
        let idx = self
            .archs
            .iter()
            .position(|a| a == arch)
            .ok_or_else(|| Error::UnknownArchitecture(arch.to_string()))?;
        Ok(self.sample_index(idx, rng))
    }

    /// Draw for the architecture at `arch` in the vocabulary's
    /// architecture order.
    pub fn sample_index<R: Rng + ?Sized>(&self, arch: usize, rng: &mut R) -> u32 {
        let t = &self.tables[arch];
        let total = *t.cumulative.last().expect("every table is nonempty");
        let u = rng.random::<f64>() * total;
        let at = t.cumulative.partition_point(|&c| c <= u);
        t.ids[at.min(t.ids.len() - 1)]
    }

    /// Number of ids that can be drawn for the architecture.
    pub fn support(&self, arch: usize) -> usize {
        self.tables[arch].ids.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Block, BlockPair};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn arch(s: &str) -> Architecture {
        Architecture::new(s).unwrap()
    }

    fn vocab(a: &[&str], b: &[&str]) -> Vocabulary {
        let pair = BlockPair {
            id: "p".into(),
            first: Block::from_bodies(arch("arm"), a),
            second: Block::from_bodies(arch("x86"), b),
        };
        Vocabulary::build(&[pair], 1).unwrap()
    }

    #[test]
    fn single_token_architecture() {
        let v = vocab(&["a", "b"], &["c"]);
        let s = NegativeSampler::new(&v);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            assert_eq!(
                s.sample(&arch("x86"), &mut rng).unwrap(),
                v.id("x86:c").unwrap()
            );
        }
    }

    #[test]
    fn unknown_architecture() {
        let s = NegativeSampler::new(&vocab(&["a"], &["c"]));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            s.sample(&arch("mips"), &mut rng),
            Err(Error::UnknownArchitecture(_))
        ));
    }

    #[test]
    fn ratio_follows_three_quarter_power() {
        // Counts 16 and 1: 16^0.75 = 8, so P(heavy) = 8/9.
        let mut a = vec!["heavy"; 16];
        a.push("light");
        let v = vocab(&a, &["c"]);
        let s = NegativeSampler::new(&v);
        let heavy = v.id("arm:heavy").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 200_000u32;
        let hits = (0..n)
            .filter(|_| s.sample(&arch("arm"), &mut rng).unwrap() == heavy)
            .count() as f64;
        let p = 8.0 / 9.0;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((hits - n as f64 * p).abs() < 3.0 * sigma, "hits {hits}");
    }

    #[test]
    fn same_seed_same_draws() {
        let v = vocab(&["a", "b", "b", "c"], &["d", "e"]);
        let s = NegativeSampler::new(&v);
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..50)
                .map(|_| s.sample(&arch("arm"), &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(5), draw(5));
    }
}
