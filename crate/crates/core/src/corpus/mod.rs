//! Equivalent-block-pair datasets and the machinery built on them.
//!
//! Corpus files hold one JSON object per line:
//!
//! ```text
//! {"id": "f1:entry", "a": {"arch": "x86", "ins": ["push rbp", ...]},
//!  "b": {"arch": "arm", "ins": ["push {r11, lr}", ...]}, "normalized": false}
//! ```
//!
//! Instructions are parsed, normalized and rendered to tokens on load unless
//! the record says `"normalized": true`, in which case each entry is already
//! a canonical instruction body. Labeled block-pair files add a top-level
//! `"label": 1 | -1`. Labeled instruction pairs are tab-separated
//! `archA  instrA  archB  instrB  label` lines.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normalizer::{split_token, Architecture, Normalizer};

mod sampler;
pub mod synthetic;
mod vocab;

pub use sampler::NegativeSampler;
pub use vocab::{keep_probability, VocabEntry, Vocabulary};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub arch: Architecture,
    pub tokens: Vec<String>,
}

impl Block {
    /// Build a block from canonical instruction bodies (no arch prefix).
    pub fn from_bodies<S: AsRef<str>>(arch: Architecture, bodies: &[S]) -> Self {
        let tokens = bodies
            .iter()
            .map(|b| format!("{}:{}", arch, b.as_ref()))
            .collect();
        Block { arch, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPair {
    pub id: String,
    pub first: Block,
    pub second: Block,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Similar,
    Dissimilar,
}

impl Label {
    pub fn from_value(v: i64) -> Option<Self> {
        match v {
            1 => Some(Label::Similar),
            -1 => Some(Label::Dissimilar),
            _ => None,
        }
    }

    pub fn value(self) -> i64 {
        match self {
            Label::Similar => 1,
            Label::Dissimilar => -1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledBlockPair {
    pub pair: BlockPair,
    pub label: Label,
}

/// Two canonical tokens with a similarity label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub left: String,
    pub right: String,
    pub label: Label,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Side {
    arch: Architecture,
    ins: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    a: Side,
    b: Side,
    #[serde(default)]
    normalized: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<i64>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn malformed(path: &Path, line: usize, reason: impl ToString) -> Error {
    Error::MalformedRecord {
        path: path.to_path_buf(),
        line,
        reason: reason.to_string(),
    }
}

fn side_to_block(
    side: Side,
    normalized: bool,
    normalizer: &Normalizer,
    id: &str,
    path: &Path,
    line: usize,
) -> Result<Block> {
    if side.ins.is_empty() {
        return Err(Error::EmptyBlock { id: id.to_string() });
    }
    if normalized {
        return Ok(Block::from_bodies(side.arch, &side.ins));
    }
    let tokens = side
        .ins
        .iter()
        .map(|raw| {
            normalizer
                .canonical_token(raw, &side.arch)
                .map_err(|e| malformed(path, line, format!("`{raw}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Block {
        arch: side.arch,
        tokens,
    })
}

fn read_records(
    path: &Path,
    normalizer: &Normalizer,
    mut visit: impl FnMut(BlockPair, Option<i64>, usize) -> Result<()>,
) -> Result<()> {
    for (i, line) in open(path)?.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| malformed(path, lineno, e))?;
        if rec.a.arch == rec.b.arch {
            return Err(Error::ArchMismatch {
                id: rec.id,
                arch: rec.a.arch.to_string(),
            });
        }
        let first = side_to_block(rec.a, rec.normalized, normalizer, &rec.id, path, lineno)?;
        let second = side_to_block(rec.b, rec.normalized, normalizer, &rec.id, path, lineno)?;
        let pair = BlockPair {
            id: rec.id,
            first,
            second,
        };
        visit(pair, rec.label, lineno)?;
    }
    Ok(())
}

/// Load every equivalent block pair of a corpus file, in file order.
pub fn load_pairs(path: impl AsRef<Path>, normalizer: &Normalizer) -> Result<Vec<BlockPair>> {
    let mut out = Vec::new();
    read_records(path.as_ref(), normalizer, |pair, _, _| {
        out.push(pair);
        Ok(())
    })?;
    Ok(out)
}

/// Load a labeled block-pair file; every record must carry `label`.
pub fn load_labeled_pairs(
    path: impl AsRef<Path>,
    normalizer: &Normalizer,
) -> Result<Vec<LabeledBlockPair>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    read_records(path, normalizer, |pair, label, line| {
        let label = label.and_then(Label::from_value).ok_or_else(|| {
            malformed(path, line, "missing or invalid `label` (expected 1 or -1)")
        })?;
        out.push(LabeledBlockPair { pair, label });
        Ok(())
    })?;
    Ok(out)
}

fn block_to_side(block: &Block) -> Side {
    let ins = block
        .tokens
        .iter()
        .map(|t| {
            split_token(t)
                .map_or(t.as_str(), |(_, body)| body)
                .to_string()
        })
        .collect();
    Side {
        arch: block.arch.clone(),
        ins,
    }
}

fn write_records<'a>(
    path: &Path,
    records: impl Iterator<Item = (&'a BlockPair, Option<Label>)>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (pair, label) in records {
        let rec = Record {
            id: pair.id.clone(),
            a: block_to_side(&pair.first),
            b: block_to_side(&pair.second),
            normalized: true,
            label: label.map(Label::value),
        };
        let line = serde_json::to_string(&rec).expect("records serialize");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Write pairs as normalized records.
pub fn save_pairs(path: impl AsRef<Path>, pairs: &[BlockPair]) -> Result<()> {
    write_records(path.as_ref(), pairs.iter().map(|p| (p, None)))
}

pub fn save_labeled_pairs(path: impl AsRef<Path>, pairs: &[LabeledBlockPair]) -> Result<()> {
    write_records(
        path.as_ref(),
        pairs.iter().map(|p| (&p.pair, Some(p.label))),
    )
}

/// Load a tab-separated labeled instruction-pair file. Blank lines and
/// lines starting with `#` are skipped; instructions are canonicalized.
pub fn load_instruction_pairs(
    path: impl AsRef<Path>,
    normalizer: &Normalizer,
) -> Result<Vec<LabeledPair>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let [arch_a, ins_a, arch_b, ins_b, label] = fields[..] else {
            return Err(malformed(
                path,
                lineno,
                format!("expected 5 tab-separated fields, found {}", fields.len()),
            ));
        };
        let token = |arch: &str, ins: &str| -> Result<String> {
            let arch = Architecture::new(arch.trim()).map_err(|e| malformed(path, lineno, e))?;
            normalizer
                .canonical_token(ins, &arch)
                .map_err(|e| malformed(path, lineno, e))
        };
        let label = label
            .trim()
            .parse::<i64>()
            .ok()
            .and_then(Label::from_value)
            .ok_or_else(|| malformed(path, lineno, format!("invalid label `{label}`")))?;
        out.push(LabeledPair {
            left: token(arch_a, ins_a)?,
            right: token(arch_b, ins_b)?,
            label,
        });
    }
    Ok(out)
}

/// Write labeled instruction pairs; each token is split back into
/// architecture and canonical body.
pub fn save_instruction_pairs(path: impl AsRef<Path>, pairs: &[LabeledPair]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for p in pairs {
        let (la, lb) = split_token(&p.left).unwrap_or(("", &p.left));
        let (ra, rb) = split_token(&p.right).unwrap_or(("", &p.right));
        writeln!(w, "{la}\t{lb}\t{ra}\t{rb}\t{}", p.label.value())
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
