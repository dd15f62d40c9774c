//! Embedding quality measures: cosine similarity, nearest neighbours,
//! ROC/AUC over labeled pairs, block embeddings and a feature-count
//! baseline for block similarity.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::corpus::{Block, Label, LabeledBlockPair, LabeledPair};
use crate::error::{Error, Result};
use crate::model::EmbeddingModel;
use crate::normalizer::{token_parts, Architecture, LexiconSet, STR_SENTINEL};
use crate::scalar::Scalar;

/// Cosine similarity, accumulated in `f64`.
pub fn cosine<F: Scalar>(a: &[F], b: &[F]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(b) {
        let (x, y) = (x.to_f64_lossy(), y.to_f64_lossy());
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Neighbor {
    pub token: String,
    pub score: f64,
}

/// The `k` tokens closest to `query` by cosine of input embeddings,
/// optionally restricted to one architecture. Ties go to the lower id;
/// zero vectors are skipped.
pub fn nearest<F: Scalar>(
    model: &EmbeddingModel<F>,
    query: &str,
    k: usize,
    arch: Option<&Architecture>,
) -> Result<Vec<Neighbor>> {
    let vocab = model.vocab();
    let q = vocab
        .id(query)
        .ok_or_else(|| Error::UnknownToken(query.to_string()))?;
    let qv = model.input_row(q);
    let mut scored: Vec<(f64, u32)> = Vec::new();
    for id in 0..vocab.len() as u32 {
        if id == q || arch.is_some_and(|a| vocab.arch_of(id) != a) {
            continue;
        }
        match cosine(qv, model.input_row(id)) {
            Ok(s) => scored.push((s, id)),
            Err(Error::ZeroVector) => continue,
            Err(e) => return Err(e),
        }
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored
        .into_iter()
        .take(k)
        .map(|(score, id)| Neighbor {
            token: vocab.token(id).to_string(),
            score,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RocCurve {
    /// `(false positive rate, true positive rate)` from `(0,0)` to `(1,1)`.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

impl RocCurve {
    /// Trapezoidal area under `points`.
    pub fn trapezoid(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    }

    /// Tab-separated `fpr tpr` lines followed by `AUC value`.
    pub fn to_tsv(&self) -> String {
        let mut s = String::new();
        for (x, y) in &self.points {
            s.push_str(&format!("{x}\t{y}\n"));
        }
        s.push_str(&format!("AUC\t{}\n", self.auc));
        s
    }

    pub fn write_tsv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// ROC curve and AUC of positive versus negative scores.
///
/// The AUC is the Mann-Whitney statistic with average ranks for ties, which
/// equals the trapezoidal area under the threshold-sweep curve.
pub fn roc_auc(pos: &[f64], neg: &[f64]) -> Result<RocCurve> {
    if pos.is_empty() {
        return Err(Error::EmptySide("positive"));
    }
    if neg.is_empty() {
        return Err(Error::EmptySide("negative"));
    }
    let mut all: Vec<(f64, bool)> = pos
        .iter()
        .map(|&s| (s, true))
        .chain(neg.iter().map(|&s| (s, false)))
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));

    // Rank sum of positives, ties sharing their average rank.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0.total_cmp(&all[i].0).is_eq() {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        rank_sum += avg * all[i..j].iter().filter(|x| x.1).count() as f64;
        i = j;
    }
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

    // Sweep thresholds from high to low, one point per distinct score.
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut k = all.len();
    while k > 0 {
        let s = all[k - 1].0;
        while k > 0 && all[k - 1].0.total_cmp(&s).is_eq() {
            if all[k - 1].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            k -= 1;
        }
        points.push((fp as f64 / nn, tp as f64 / np));
    }
    Ok(RocCurve { points, auc })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Exclusion {
    pub left: String,
    pub right: String,
    pub unknown: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub positives: usize,
    pub negatives: usize,
    pub excluded: usize,
    pub exclusions: Vec<Exclusion>,
    pub auc: f64,
    #[serde(skip)]
    pub roc: RocCurve,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn report(scored: Vec<(f64, Label)>, exclusions: Vec<Exclusion>) -> Result<EvalReport> {
    let pos: Vec<f64> = scored
        .iter()
        .filter(|s| s.1 == Label::Similar)
        .map(|s| s.0)
        .collect();
    let neg: Vec<f64> = scored
        .iter()
        .filter(|s| s.1 == Label::Dissimilar)
        .map(|s| s.0)
        .collect();
    let roc = roc_auc(&pos, &neg)?;
    Ok(EvalReport {
        positives: pos.len(),
        negatives: neg.len(),
        excluded: exclusions.len(),
        exclusions,
        auc: roc.auc,
        roc,
    })
}

/// Score labeled instruction pairs by cosine of their embeddings. Pairs with
/// an out-of-vocabulary token are excluded and listed in the report.
pub fn eval_instruction_pairs<F: Scalar>(
    model: &EmbeddingModel<F>,
    pairs: &[LabeledPair],
) -> Result<EvalReport> {
    let mut scored = Vec::new();
    let mut exclusions = Vec::new();
    for p in pairs {
        let unknown: Vec<String> = [&p.left, &p.right]
            .into_iter()
            .filter(|t| model.vocab().id(t).is_none())
            .cloned()
            .collect();
        if !unknown.is_empty() {
            exclusions.push(Exclusion {
                left: p.left.clone(),
                right: p.right.clone(),
                unknown,
            });
            continue;
        }
        let a = model.embedding(&p.left).expect("checked");
        let b = model.embedding(&p.right).expect("checked");
        let s = cosine(a, b).unwrap_or(0.0);
        scored.push((s, p.label));
    }
    report(scored, exclusions)
}

/// Sum of the input embeddings of the block's in-vocabulary tokens.
pub fn embed_block<F: Scalar>(model: &EmbeddingModel<F>, block: &Block) -> Result<Vec<F>> {
    let mut out = vec![F::zero(); model.dim()];
    let mut any = false;
    for t in &block.tokens {
        if let Some(v) = model.embedding(t) {
            any = true;
            out.iter_mut().zip(v).for_each(|(o, &x)| *o += x);
        }
    }
    if any {
        Ok(out)
    } else {
        Err(Error::AllTokensUnknown)
    }
}

fn block_exclusion(pair: &LabeledBlockPair) -> Exclusion {
    Exclusion {
        left: pair.pair.first.tokens.join("; "),
        right: pair.pair.second.tokens.join("; "),
        unknown: Vec::new(),
    }
}

/// Score labeled block pairs by cosine of summed embeddings. A pair with a
/// fully out-of-vocabulary side is excluded.
pub fn eval_block_pairs<F: Scalar>(
    model: &EmbeddingModel<F>,
    pairs: &[LabeledBlockPair],
) -> Result<EvalReport> {
    let mut scored = Vec::new();
    let mut exclusions = Vec::new();
    for p in pairs {
        let a = embed_block(model, &p.pair.first);
        let b = embed_block(model, &p.pair.second);
        match (a, b) {
            (Ok(a), Ok(b)) => scored.push((cosine(&a, &b).unwrap_or(0.0), p.label)),
            (a, b) => {
                let mut e = block_exclusion(p);
                if a.is_err() {
                    e.unknown.push(p.pair.first.arch.to_string());
                }
                if b.is_err() {
                    e.unknown.push(p.pair.second.arch.to_string());
                }
                exclusions.push(e);
            }
        }
    }
    report(scored, exclusions)
}

/// Hand-picked block statistics used by the baseline comparator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BlockFeatureVector {
    pub instructions: u64,
    pub constants: u64,
    pub strings: u64,
    pub calls: u64,
    pub branches: u64,
}

impl BlockFeatureVector {
    pub fn to_array(self) -> [f64; 5] {
        [
            self.instructions as f64,
            self.constants as f64,
            self.strings as f64,
            self.calls as f64,
            self.branches as f64,
        ]
    }
}

fn is_leaf_delimiter(c: char) -> bool {
    "[]{}()+-*:,! ".contains(c)
}

/// Count instructions, `0`/`-0` constants, `<STR>` operands, calls and
/// branches. Opcode classes come from the architecture's lexicon.
pub fn baseline_features(block: &Block, lexicons: &LexiconSet) -> BlockFeatureVector {
    let lex = lexicons.get(&block.arch);
    let mut f = BlockFeatureVector::default();
    for token in &block.tokens {
        f.instructions += 1;
        let Some((opcode, operands)) = token_parts(token) else {
            continue;
        };
        f.calls += u64::from(lex.is_call(opcode));
        f.branches += u64::from(lex.is_branch(opcode));
        for op in operands {
            f.constants += op.split(is_leaf_delimiter).filter(|l| *l == "0").count() as u64;
            f.strings += op.matches(STR_SENTINEL).count() as u64;
        }
    }
    f
}

/// The baseline on labeled block pairs: cosine of feature-count vectors,
/// with a zero vector scoring 0.
pub fn eval_block_pairs_baseline(
    pairs: &[LabeledBlockPair],
    lexicons: &LexiconSet,
) -> Result<EvalReport> {
    let scored = pairs
        .iter()
        .map(|p| {
            let a = baseline_features(&p.pair.first, lexicons).to_array();
            let b = baseline_features(&p.pair.second, lexicons).to_array();
            (cosine(&a, &b).unwrap_or(0.0), p.label)
        })
        .collect();
    report(scored, Vec::new())
}

/// Write a report as JSON.
pub fn write_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    writeln!(w, "{}", report.to_json())
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}
