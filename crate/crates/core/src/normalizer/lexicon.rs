//! Per-architecture register, call-opcode and branch-opcode tables.
//!
//! Each table is a text file with one identifier per line; `#` starts a
//! comment. The tables for `x86` and `arm` are compiled in, and a directory
//! of `<arch>.registers`, `<arch>.calls` and `<arch>.branches` files can be
//! loaded at runtime to extend or replace them.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::normalizer::Architecture;

const BUILTIN: &[(&str, &str, &str, &str)] = &[
    (
        "x86",
        include_str!("../../lexicons/x86.registers"),
        include_str!("../../lexicons/x86.calls"),
        include_str!("../../lexicons/x86.branches"),
    ),
    (
        "arm",
        include_str!("../../lexicons/arm.registers"),
        include_str!("../../lexicons/arm.calls"),
        include_str!("../../lexicons/arm.branches"),
    ),
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    pub registers: HashSet<String>,
    pub calls: HashSet<String>,
    pub branches: HashSet<String>,
}

impl Lexicon {
    pub fn parse(registers: &str, calls: &str, branches: &str) -> Self {
        Lexicon {
            registers: parse_table(registers),
            calls: parse_table(calls),
            branches: parse_table(branches),
        }
    }

    pub fn is_register(&self, text: &str) -> bool {
        self.registers.contains(&text.to_ascii_lowercase())
    }

    pub fn is_call(&self, opcode: &str) -> bool {
        self.calls.contains(&opcode.to_ascii_lowercase())
    }

    pub fn is_branch(&self, opcode: &str) -> bool {
        self.branches.contains(&opcode.to_ascii_lowercase())
    }
}

fn parse_table(text: &str) -> HashSet<String> {
    text.lines()
        .map(|line| line.split('#').next().unwrap_or("").trim())
        .filter(|s| !s.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconSet {
    by_arch: BTreeMap<String, Lexicon>,
    empty: Lexicon,
}

impl Default for LexiconSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl LexiconSet {
    pub fn builtin() -> Self {
        let by_arch = BUILTIN
            .iter()
            .map(|(arch, regs, calls, branches)| {
                (arch.to_string(), Lexicon::parse(regs, calls, branches))
            })
            .collect();
        LexiconSet {
            by_arch,
            empty: Lexicon::default(),
        }
    }

    /// Start from the built-in tables and merge every `<arch>.<table>` file
    /// found in `dir` into them.
    pub fn with_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mut set = Self::builtin();
        let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
        for entry in entries {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            let (Some(stem), Some(ext)) = (
                path.file_stem().and_then(|s| s.to_str()),
                path.extension().and_then(|s| s.to_str()),
            ) else {
                continue;
            };
            if Architecture::new(stem).is_err() {
                continue;
            }
            let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            let lex = set.by_arch.entry(stem.to_string()).or_default();
            let table = match ext {
                "registers" => &mut lex.registers,
                "calls" => &mut lex.calls,
                "branches" => &mut lex.branches,
                _ => continue,
            };
            table.extend(parse_table(&text));
        }
        Ok(set)
    }

    /// Tables for `arch`; an architecture without tables gets empty ones.
    pub fn get(&self, arch: &Architecture) -> &Lexicon {
        self.by_arch.get(arch.as_str()).unwrap_or(&self.empty)
    }

    pub fn insert(&mut self, arch: &Architecture, lexicon: Lexicon) {
        self.by_arch.insert(arch.as_str().to_string(), lexicon);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let t = parse_table("# header\nEAX\n\n  ebx  # trailing\n#only\n");
        assert_eq!(t.len(), 2);
        assert!(t.contains("eax") && t.contains("ebx"));
    }

    #[test]
    fn builtin_tables() {
        let set = LexiconSet::builtin();
        let x86 = set.get(&Architecture::new("x86").unwrap());
        assert!(x86.is_register("ESP"));
        assert!(x86.is_register("r13d"));
        assert!(x86.is_call("callq"));
        assert!(x86.is_branch("jne"));
        assert!(!x86.is_call("jmp"));
        let arm = set.get(&Architecture::new("arm").unwrap());
        assert!(arm.is_register("sp"));
        assert!(arm.is_call("bl") && arm.is_call("blx"));
        assert!(arm.is_branch("ble") && !arm.is_call("ble"));
        let mips = set.get(&Architecture::new("mips").unwrap());
        assert!(mips.registers.is_empty());
    }

    #[test]
    fn directory_tables_extend_builtin() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("arm.calls"), "# extra\nbleq\n").unwrap();
        fs::write(dir.path().join("mips.registers"), "zero\nra\n").unwrap();
        fs::write(dir.path().join("README"), "ignored").unwrap();
        let set = LexiconSet::with_dir(dir.path()).unwrap();
        let arm = set.get(&Architecture::new("arm").unwrap());
        assert!(arm.is_call("bleq") && arm.is_call("bl"));
        assert!(set
            .get(&Architecture::new("mips").unwrap())
            .is_register("ra"));
    }
}
