use std::collections::{BTreeMap, HashMap};

use crate::corpus::{Block, BlockPair};
use crate::error::{Error, Result};
use crate::normalizer::{split_token, Architecture};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VocabEntry {
    pub token: String,
    pub arch: Architecture,
    pub count: u64,
}

/// Architecture-qualified token table. Ids are dense, ordered by descending
/// count with ties broken by token text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    entries: Vec<VocabEntry>,
    index: HashMap<String, u32>,
    archs: Vec<Architecture>,
    arch_of: Vec<u16>,
    arch_totals: Vec<u64>,
    min_count: u64,
}

impl Vocabulary {
    /// Count every token of every block and keep those seen at least
    /// `min_count` times.
    pub fn build(pairs: &[BlockPair], min_count: u64) -> Result<Self> {
        let mut counts: HashMap<&str, (u64, &Architecture)> = HashMap::new();
        for pair in pairs {
            for block in [&pair.first, &pair.second] {
                for token in &block.tokens {
                    counts.entry(token.as_str()).or_insert((0, &block.arch)).0 += 1;
                }
            }
        }
        let entries = counts
            .into_iter()
            .filter(|(_, (count, _))| *count >= min_count.max(1))
            .map(|(token, (count, arch))| VocabEntry {
                token: token.to_string(),
                arch: arch.clone(),
                count,
            })
            .collect();
        Self::from_entries(entries, min_count)
    }

    /// Assemble a vocabulary from explicit entries, sorting them into id
    /// order.
    pub fn from_entries(mut entries: Vec<VocabEntry>, min_count: u64) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::EmptyVocabulary { min_count });
        }
        entries.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.token.cmp(&b.token)));
        let mut index = HashMap::with_capacity(entries.len());
        let mut archs: Vec<Architecture> = Vec::new();
        let mut arch_of = Vec::with_capacity(entries.len());
        let mut totals: BTreeMap<usize, u64> = BTreeMap::new();
        for (id, e) in entries.iter().enumerate() {
            if index.insert(e.token.clone(), id as u32).is_some() {
                return Err(Error::CorruptFile(format!("duplicate token `{}`", e.token)));
            }
            let a = match archs.iter().position(|x| x == &e.arch) {
                Some(a) => a,
                None => {
                    archs.push(e.arch.clone());
                    archs.len() - 1
                }
            };
            arch_of.push(a as u16);
            *totals.entry(a).or_default() += e.count;
        }
        let arch_totals = (0..archs.len()).map(|a| totals[&a]).collect();
        Ok(Vocabulary {
            entries,
            index,
            archs,
            arch_of,
            arch_totals,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> &str {
        &self.entries[id as usize].token
    }

    pub fn entry(&self, id: u32) -> &VocabEntry {
        &self.entries[id as usize]
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.entries
    }

    pub fn count(&self, id: u32) -> u64 {
        self.entries[id as usize].count
    }

    /// Architectures in order of first appearance by id.
    pub fn architectures(&self) -> &[Architecture] {
        &self.archs
    }

    pub fn arch_index(&self, arch: &Architecture) -> Option<usize> {
        self.archs.iter().position(|a| a == arch)
    }

    /// Index into [`Self::architectures`] of the token's architecture.
    pub fn arch_index_of(&self, id: u32) -> usize {
        self.arch_of[id as usize] as usize
    }

    pub fn arch_of(&self, id: u32) -> &Architecture {
        &self.archs[self.arch_index_of(id)]
    }

    /// Sum of in-vocabulary token counts of one architecture.
    pub fn arch_total(&self, arch: &Architecture) -> u64 {
        self.arch_index(arch).map_or(0, |a| self.arch_totals[a])
    }

    pub(crate) fn arch_total_by_index(&self, arch: usize) -> u64 {
        self.arch_totals[arch]
    }

    /// Ids of the block's in-vocabulary tokens; unknown tokens are skipped.
    pub fn encode(&self, block: &Block) -> Vec<u32> {
        block.tokens.iter().filter_map(|t| self.id(t)).collect()
    }

    /// Architecture prefix of a token as stored in the table.
    pub fn token_arch(token: &str) -> Option<&str> {
        split_token(token).map(|(a, _)| a)
    }
}

/// Probability of keeping one occurrence of a token during subsampling:
/// `min(1, (sqrt(f/t) + 1) * t/f)` with `f = count / arch_total`.
pub fn keep_probability(count: u64, arch_total: u64, rate: f64) -> f64 {
    let f = count as f64 / arch_total as f64;
    (((f / rate).sqrt() + 1.0) * rate / f).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(s: &str) -> Architecture {
        Architecture::new(s).unwrap()
    }

    fn pair(a: &[&str], b: &[&str]) -> BlockPair {
        BlockPair {
            id: "p".into(),
            first: Block::from_bodies(arch("arm"), a),
            second: Block::from_bodies(arch("x86"), b),
        }
    }

    #[test]
    fn hand_counted_vocabulary() {
        let v = Vocabulary::build(&[pair(&["a", "b", "a"], &["c"])], 1).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("arm:a"), Some(0));
        assert_eq!(v.count(0), 2);
        // Tie between arm:b and x86:c resolved by token text.
        assert_eq!(v.token(1), "arm:b");
        assert_eq!(v.token(2), "x86:c");
        assert_eq!(v.arch_total(&arch("arm")), 3);
        assert_eq!(v.arch_total(&arch("x86")), 1);
        assert_eq!(v.arch_of(2), &arch("x86"));
        assert_eq!(Vocabulary::token_arch("x86:c"), Some("x86"));
    }

    #[test]
    fn min_count_drops_rare_tokens() {
        let v = Vocabulary::build(
            &[pair(&["a", "a", "a", "b", "b", "b", "b", "b"], &["c"])],
            5,
        )
        .unwrap();
        assert_eq!(v.len(), 1);
        assert!(v.id("arm:a").is_none());
        assert_eq!(v.token(0), "arm:b");
        assert!(matches!(
            Vocabulary::build(&[pair(&["a"], &["c"])], 5),
            Err(Error::EmptyVocabulary { min_count: 5 })
        ));
    }

    #[test]
    fn same_text_in_two_architectures_is_two_entries() {
        let v = Vocabulary::build(&[pair(&["nop"], &["nop"])], 1).unwrap();
        assert_eq!(v.len(), 2);
        assert!(v.id("arm:nop").is_some() && v.id("x86:nop").is_some());
    }

    #[test]
    fn encode_skips_unknown() {
        let v = Vocabulary::build(&[pair(&["a", "b"], &["c"])], 1).unwrap();
        let block = Block::from_bodies(arch("arm"), &["a", "zzz", "b"]);
        assert_eq!(
            v.encode(&block),
            vec![v.id("arm:a").unwrap(), v.id("arm:b").unwrap()]
        );
    }

    #[test]
    fn keep_probability_values() {
        let t = 1e-5;
        // f <= t clamps to 1.
        assert_eq!(keep_probability(1, 1_000_000, t), 1.0);
        assert_eq!(keep_probability(1, 100_000, t), 1.0);
        // f = 100 t: (10 + 1) / 100.
        let p = keep_probability(1, 1_000, t);
        assert!((p - 0.11).abs() < 1e-12, "{p}");
    }
}
