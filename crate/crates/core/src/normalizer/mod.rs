//! Instruction parsing and out-of-vocabulary normalization.
//!
//! An instruction is an opcode plus comma-separated operands in Intel
//! syntax. Normalization rewrites the parts that make the instruction
//! vocabulary explode:
//!
//! * numeric constants become `0`, keeping a leading minus sign,
//! * string literals become `<STR>`,
//! * call targets become `FOO`,
//! * every other symbol becomes `<TAG>`.
//!
//! Registers and the structure of address expressions are kept. The
//! canonical token of an instruction is `<arch>:<opcode> <op1>,<op2>,...`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod lexicon;

pub use lexicon::{Lexicon, LexiconSet};

pub const STR_SENTINEL: &str = "<STR>";
pub const CALL_SENTINEL: &str = "FOO";
pub const TAG_SENTINEL: &str = "<TAG>";

/// Lowercase architecture tag such as `x86` or `arm`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Architecture(String);

impl Architecture {
    pub fn new(name: &str) -> Result<Self> {
        let valid = !name.is_empty()
            && name
                .bytes()
                .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_');
        if valid {
            Ok(Architecture(name.to_string()))
        } else {
            Err(Error::InvalidArchitecture(name.to_string()))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::new(s)
    }
}

impl TryFrom<String> for Architecture {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        Architecture::new(&s)
    }
}

impl From<Architecture> for String {
    fn from(a: Architecture) -> String {
        a.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedInstruction {
    pub opcode: String,
    pub operands: Vec<String>,
}

impl ParsedInstruction {
    /// Opcode followed by the operands joined with `", "`.
    pub fn render(&self) -> String {
        if self.operands.is_empty() {
            self.opcode.clone()
        } else {
            format!("{} {}", self.opcode, self.operands.join(", "))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OperandKind {
    Register,
    Immediate,
    /// A bracketed address, or any other operand made of several leaves
    /// (`lsl #2`, `{r4, lr}`, `qword ptr [rbp - 8]`).
    MemoryExpression,
    StringLiteral,
    CallTarget,
    OtherSymbol,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OperandToken {
    pub kind: OperandKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NormalizedInstruction {
    pub opcode: String,
    pub operands: Vec<String>,
}

/// Split one instruction line into opcode and operands.
pub fn parse_instruction(raw: &str) -> Result<ParsedInstruction> {
    let raw = raw.trim();
    if raw.is_empty() {
        return Err(Error::EmptyInstruction);
    }
    let (opcode, rest) = match raw.find(char::is_whitespace) {
        Some(at) => (&raw[..at], raw[at..].trim()),
        None => (raw, ""),
    };
    let operands = split_operands(rest)?;
    if operands.iter().any(String::is_empty) {
        return Err(Error::UnbalancedBrackets(raw.to_string()));
    }
    Ok(ParsedInstruction {
        opcode: opcode.to_lowercase(),
        operands,
    })
}

/// Split on commas outside `[...]`, `{...}` and quotes; pieces are trimmed.
fn split_operands(text: &str) -> Result<Vec<String>> {
    if text.is_empty() {
        return Ok(Vec::new());
    }
    let unbalanced = || Error::UnbalancedBrackets(text.to_string());
    let mut out = Vec::new();
    let mut square = 0i32;
    let mut curly = 0i32;
    let mut quote: Option<char> = None;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        if let Some(q) = quote {
            if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '[' => square += 1,
            ']' => square -= 1,
            '{' => curly += 1,
            '}' => curly -= 1,
            ',' if square == 0 && curly == 0 => {
                out.push(text[start..i].trim().to_string());
                start = i + 1;
            }
            _ => {}
        }
        if square < 0 || curly < 0 {
            return Err(unbalanced());
        }
    }
    if quote.is_some() || square != 0 || curly != 0 {
        return Err(unbalanced());
    }
    out.push(text[start..].trim().to_string());
    Ok(out)
}

fn is_quoted(text: &str) -> bool {
    let b = text.as_bytes();
    b.len() >= 2 && (b[0] == b'"' || b[0] == b'\'') && b[b.len() - 1] == b[0]
}

/// Integer (decimal or `0x` hex) or decimal float literal, with an optional
/// `#` prefix and sign. Returns whether the literal is negative.
fn parse_immediate(text: &str) -> Option<bool> {
    let body = text.strip_prefix('#').unwrap_or(text);
    let (negative, digits) = match body.as_bytes().first()? {
        b'-' => (true, &body[1..]),
        b'+' => (false, &body[1..]),
        _ => (false, body),
    };
    let lower = digits.to_ascii_lowercase();
    let ok = if let Some(hex) = lower.strip_prefix("0x") {
        !hex.is_empty() && hex.bytes().all(|b| b.is_ascii_hexdigit())
    } else {
        is_decimal(&lower)
    };
    ok.then_some(negative)
}

fn is_decimal(s: &str) -> bool {
    let (mantissa, exponent) = match s.find('e') {
        Some(at) => (&s[..at], Some(&s[at + 1..])),
        None => (s, None),
    };
    let mut parts = mantissa.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let frac = parts.next();
    let digits = |p: &str| p.bytes().all(|b| b.is_ascii_digit());
    let mantissa_ok = match frac {
        None => !int.is_empty() && digits(int),
        Some(f) => (!int.is_empty() || !f.is_empty()) && digits(int) && digits(f),
    };
    let exponent_ok = match exponent {
        None => true,
        Some(e) => {
            let e = e.strip_prefix(['+', '-']).unwrap_or(e);
            !e.is_empty() && digits(e)
        }
    };
    mantissa_ok && exponent_ok
}

fn is_identifier(text: &str) -> bool {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || matches!(c, '_' | '.' | '$') => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | '$' | '@'))
}

const STRUCTURAL: &[char] = &['[', ']', '{', '}', '(', ')', '+', '-', '*', ':', ',', '!'];

fn is_compound(text: &str) -> bool {
    text.contains(|c: char| c.is_whitespace() || STRUCTURAL.contains(&c))
}

#[derive(Debug, PartialEq)]
enum Piece<'a> {
    Leaf(&'a str),
    Punct(char),
    Space,
}

fn pieces(text: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut leaf_start: Option<usize> = None;
    let mut iter = text.char_indices().peekable();
    while let Some((i, c)) = iter.next() {
        if let Some(s) = leaf_start {
            // `#-8`: a sign directly after `#` belongs to the literal.
            let signed_hash = c == '-' && &text[s..i] == "#";
            if !signed_hash && (c.is_whitespace() || STRUCTURAL.contains(&c)) {
                out.push(Piece::Leaf(&text[s..i]));
                leaf_start = None;
            } else {
                continue;
            }
        }
        if c == '"' || c == '\'' {
            let mut end = text.len();
            for (j, d) in iter.by_ref() {
                if d == c {
                    end = j + d.len_utf8();
                    break;
                }
            }
            out.push(Piece::Leaf(&text[i..end]));
        } else if c.is_whitespace() {
            if out.last() != Some(&Piece::Space) {
                out.push(Piece::Space);
            }
        } else if STRUCTURAL.contains(&c) {
            out.push(Piece::Punct(c));
        } else {
            leaf_start = Some(i);
        }
    }
    if let Some(s) = leaf_start {
        out.push(Piece::Leaf(&text[s..]));
    }
    out
}

/// Applies the normalization rules using per-architecture lexicons.
#[derive(Debug, Clone, Default)]
pub struct Normalizer {
    lexicons: LexiconSet,
}

impl Normalizer {
    pub fn new(lexicons: LexiconSet) -> Self {
        Normalizer { lexicons }
    }

    pub fn lexicons(&self) -> &LexiconSet {
        &self.lexicons
    }

    pub fn classify_operand(
        &self,
        text: &str,
        opcode: &str,
        position: usize,
        arch: &Architecture,
    ) -> OperandToken {
        let lex = self.lexicons.get(arch);
        let text = text.trim();
        let kind = if is_quoted(text) || text.eq_ignore_ascii_case(STR_SENTINEL) {
            OperandKind::StringLiteral
        } else if text == CALL_SENTINEL {
            OperandKind::CallTarget
        } else if lex.is_register(text) {
            OperandKind::Register
        } else if parse_immediate(text).is_some() {
            OperandKind::Immediate
        } else if text.contains('[') || is_compound(text) {
            OperandKind::MemoryExpression
        } else if is_identifier(text) && position == 0 && lex.is_call(opcode) {
            OperandKind::CallTarget
        } else {
            OperandKind::OtherSymbol
        };
        OperandToken {
            kind,
            text: text.to_string(),
        }
    }

    pub fn normalize(
        &self,
        parsed: &ParsedInstruction,
        arch: &Architecture,
    ) -> NormalizedInstruction {
        let lex = self.lexicons.get(arch);
        let operands = parsed
            .operands
            .iter()
            .enumerate()
            .map(|(pos, text)| {
                let token = self.classify_operand(text, &parsed.opcode, pos, arch);
                match token.kind {
                    OperandKind::Register => token.text.to_lowercase(),
                    OperandKind::Immediate => zero_literal(&token.text),
                    OperandKind::StringLiteral => STR_SENTINEL.to_string(),
                    OperandKind::CallTarget => CALL_SENTINEL.to_string(),
                    OperandKind::OtherSymbol => TAG_SENTINEL.to_string(),
                    OperandKind::MemoryExpression => normalize_expression(&token.text, lex),
                }
            })
            .collect();
        NormalizedInstruction {
            opcode: parsed.opcode.to_lowercase(),
            operands,
        }
    }

    /// Parse, normalize and render in one go.
    pub fn canonical_token(&self, raw: &str, arch: &Architecture) -> Result<String> {
        let parsed = parse_instruction(raw)?;
        Ok(render_token(&self.normalize(&parsed, arch), arch))
    }
}

fn zero_literal(text: &str) -> String {
    match parse_immediate(text) {
        Some(true) => "-0".to_string(),
        _ => "0".to_string(),
    }
}

fn normalize_leaf(leaf: &str, lex: &Lexicon) -> String {
    if leaf == CALL_SENTINEL || leaf.eq_ignore_ascii_case(TAG_SENTINEL) {
        leaf.to_ascii_uppercase()
    } else if is_quoted(leaf) || leaf.eq_ignore_ascii_case(STR_SENTINEL) {
        STR_SENTINEL.to_string()
    } else if lex.is_register(leaf) {
        leaf.to_lowercase()
    } else if parse_immediate(leaf).is_some() {
        zero_literal(leaf)
    } else {
        TAG_SENTINEL.to_string()
    }
}

/// Rewrite each leaf of an expression and keep its punctuation. Inside
/// square brackets a comma separator (ARM `[r5, #4]`) becomes `+`; spaces
/// survive only after a leaf and before a leaf or an opening bracket.
fn normalize_expression(text: &str, lex: &Lexicon) -> String {
    let mut out = String::with_capacity(text.len());
    let mut depth = 0usize;
    let mut pending_space = false;
    let mut last_was_leaf = false;
    for piece in pieces(text) {
        match piece {
            Piece::Space => pending_space = true,
            Piece::Punct(c) => {
                if c == '[' && pending_space && last_was_leaf {
                    out.push(' ');
                }
                match c {
                    '[' => depth += 1,
                    ']' => depth = depth.saturating_sub(1),
                    _ => {}
                }
                out.push(if c == ',' && depth > 0 { '+' } else { c });
                pending_space = false;
                last_was_leaf = false;
            }
            Piece::Leaf(leaf) => {
                if pending_space && last_was_leaf {
                    out.push(' ');
                }
                out.push_str(&normalize_leaf(leaf, lex));
                pending_space = false;
                last_was_leaf = true;
            }
        }
    }
    out
}

/// `<arch>:<opcode> <op1>,<op2>,...`, lowercase except for the sentinels.
pub fn render_token(norm: &NormalizedInstruction, arch: &Architecture) -> String {
    let mut token = format!("{}:{}", arch, norm.opcode.to_lowercase());
    if !norm.operands.is_empty() {
        token.push(' ');
        let ops: Vec<String> = norm
            .operands
            .iter()
            .map(|op| lowercase_keep_sentinels(op))
            .collect();
        token.push_str(&ops.join(","));
    }
    token
}

fn lowercase_keep_sentinels(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    'outer: while !rest.is_empty() {
        for sentinel in [STR_SENTINEL, TAG_SENTINEL, CALL_SENTINEL] {
            if let Some(tail) = rest.strip_prefix(sentinel) {
                out.push_str(sentinel);
                rest = tail;
                continue 'outer;
            }
        }
        let c = rest.chars().next().expect("nonempty");
        out.extend(c.to_lowercase());
        rest = &rest[c.len_utf8()..];
    }
    out
}

/// Split a canonical token into its architecture tag and instruction body.
pub fn split_token(token: &str) -> Option<(&str, &str)> {
    token.split_once(':')
}

/// Opcode and operand list of a canonical token body.
pub fn token_parts(token: &str) -> Option<(&str, Vec<&str>)> {
    let (_, body) = split_token(token)?;
    match body.split_once(' ') {
        None => Some((body, Vec::new())),
        Some((op, rest)) => Some((op, split_canonical_operands(rest))),
    }
}

fn split_canonical_operands(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in text.char_indices() {
        match c {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&text[start..]);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch(s: &str) -> Architecture {
        Architecture::new(s).unwrap()
    }

    fn tok(raw: &str, a: &str) -> String {
        Normalizer::default()
            .canonical_token(raw, &arch(a))
            .unwrap()
    }

    #[test]
    fn architecture_tags() {
        assert!(Architecture::new("x86").is_ok());
        assert!(Architecture::new("arm_v7").is_ok());
        for bad in ["", "X86", "arm-v7", "x 86", "arm:"] {
            assert!(Architecture::new(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn parse_examples() {
        let p = parse_instruction("mov ebp, esp").unwrap();
        assert_eq!(p.opcode, "mov");
        assert_eq!(p.operands, vec!["ebp", "esp"]);

        let p = parse_instruction("bl foo").unwrap();
        assert_eq!(
            (p.opcode.as_str(), p.operands.clone()),
            ("bl", vec!["foo".to_string()])
        );

        let p = parse_instruction("ret").unwrap();
        assert_eq!(p.opcode, "ret");
        assert!(p.operands.is_empty());
    }

    #[test]
    fn parse_keeps_bracketed_commas_together() {
        let p = parse_instruction("\tLDR\tr0, [r5, #4]").unwrap();
        assert_eq!(p.opcode, "ldr");
        assert_eq!(p.operands, vec!["r0", "[r5, #4]"]);
        let p = parse_instruction("push {r4, r5, lr}").unwrap();
        assert_eq!(p.operands, vec!["{r4, r5, lr}"]);
        let p = parse_instruction(r#"db "a,b", 0"#).unwrap();
        assert_eq!(p.operands, vec![r#""a,b""#, "0"]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_instruction("   "),
            Err(Error::EmptyInstruction)
        ));
        assert!(matches!(
            parse_instruction("ldr r0, [r5"),
            Err(Error::UnbalancedBrackets(_))
        ));
        assert!(matches!(
            parse_instruction("ldr r0, r5]"),
            Err(Error::UnbalancedBrackets(_))
        ));
        assert!(matches!(
            parse_instruction(r#"db "abc"#),
            Err(Error::UnbalancedBrackets(_))
        ));
        assert!(matches!(
            parse_instruction("mov eax,"),
            Err(Error::UnbalancedBrackets(_))
        ));
    }

    #[test]
    fn classify_examples() {
        let n = Normalizer::default();
        let k =
            |t: &str, op: &str, pos: usize, a: &str| n.classify_operand(t, op, pos, &arch(a)).kind;
        assert_eq!(k("esp", "mov", 1, "x86"), OperandKind::Register);
        assert_eq!(k("#16", "sub", 2, "arm"), OperandKind::Immediate);
        assert_eq!(k("printf", "callq", 0, "x86"), OperandKind::CallTarget);
        assert_eq!(k("printf@PLT", "call", 0, "x86"), OperandKind::CallTarget);
        assert_eq!(k("rax", "call", 0, "x86"), OperandKind::Register);
        assert_eq!(k(".LBB0_3", "jmp", 0, "x86"), OperandKind::OtherSymbol);
        assert_eq!(k("\"hi\"", "push", 0, "x86"), OperandKind::StringLiteral);
        assert_eq!(
            k("[rbp - 8]", "mov", 0, "x86"),
            OperandKind::MemoryExpression
        );
        assert_eq!(k("-0x1F", "add", 1, "x86"), OperandKind::Immediate);
        assert_eq!(k("1abc", "add", 1, "x86"), OperandKind::OtherSymbol);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(tok("callq printf", "x86"), "x86:callq FOO");
        assert_eq!(tok("sub sp, sp, #16", "arm"), "arm:sub sp,sp,0");
        assert_eq!(
            tok("movq [rip+.L.str], rax", "x86"),
            "x86:movq [rip+<TAG>],rax"
        );
        assert_eq!(tok("add eax, -5", "x86"), "x86:add eax,-0");
        assert_eq!(tok("add eax, 0x1f", "x86"), "x86:add eax,0");
        assert_eq!(tok("ret", "x86"), "x86:ret");
        assert_eq!(tok("bl foo", "arm"), "arm:bl FOO");
        assert_eq!(tok("je .LBB0_4", "x86"), "x86:je <TAG>");
        assert_eq!(tok("push \"hello, world\"", "x86"), "x86:push <STR>");
    }

    #[test]
    fn normalize_address_expressions() {
        assert_eq!(
            tok("mov dword ptr [rbp - 8], edi", "x86"),
            "x86:mov dword ptr [rbp-0],edi"
        );
        assert_eq!(
            tok("lea eax, [rax + 2*rax]", "x86"),
            "x86:lea eax,[rax+0*rax]"
        );
        assert_eq!(
            tok("mov rax, qword ptr fs:[40]", "x86"),
            "x86:mov rax,qword ptr fs:[0]"
        );
        assert_eq!(tok("ldr r0, [r5, #4]", "arm"), "arm:ldr r0,[r5+0]");
        assert_eq!(tok("str r0, [r11, #-4]", "arm"), "arm:str r0,[r11+-0]");
        assert_eq!(tok("str r4, [r0], #4", "arm"), "arm:str r4,[r0],0");
        assert_eq!(
            tok("add r1, r1, r1, lsl #31", "arm"),
            "arm:add r1,r1,r1,lsl 0"
        );
        assert_eq!(tok("push {r11, lr}", "arm"), "arm:push {r11,lr}");
        assert_eq!(tok("ldr r0, .LCPI0_9", "arm"), "arm:ldr r0,<TAG>");
        assert_eq!(tok("str r1, [sp, #-8]!", "arm"), "arm:str r1,[sp+-0]!");
    }

    #[test]
    fn canonical_tokens_are_fixed_points() {
        let n = Normalizer::default();
        for t in [
            "x86:callq FOO",
            "arm:sub sp,sp,0",
            "x86:movq [rip+<TAG>],rax",
            "x86:add eax,-0",
            "arm:str r1,[sp+-0]!",
            "x86:mov dword ptr [rbp-0],edi",
            "arm:push {r11,lr}",
            "x86:push <STR>",
            "x86:ret",
        ] {
            let (a, body) = split_token(t).unwrap();
            assert_eq!(n.canonical_token(body, &arch(a)).unwrap(), t);
        }
    }

    #[test]
    fn render_rules() {
        let a = arch("arm");
        let norm = NormalizedInstruction {
            opcode: "LDR".into(),
            operands: vec!["R0".into(), "[r5+0]".into()],
        };
        assert_eq!(render_token(&norm, &a), "arm:ldr r0,[r5+0]");
        let ret = NormalizedInstruction {
            opcode: "ret".into(),
            operands: vec![],
        };
        assert_eq!(render_token(&ret, &arch("x86")), "x86:ret");
        let bl = NormalizedInstruction {
            opcode: "bl".into(),
            operands: vec!["FOO".into()],
        };
        assert_eq!(render_token(&bl, &a), "arm:bl FOO");
    }

    #[test]
    fn token_parts_splits_top_level() {
        let (op, ops) = token_parts("arm:add r1,r0,[r5+0],{r1,r2}").unwrap();
        assert_eq!(op, "add");
        assert_eq!(ops, vec!["r1", "r0", "[r5+0]", "{r1,r2}"]);
        assert_eq!(token_parts("x86:ret").unwrap(), ("ret", vec![]));
    }

    #[test]
    fn unknown_architecture_has_no_registers() {
        assert_eq!(tok("add t0, t1, 4", "riscv"), "riscv:add <TAG>,<TAG>,0");
    }
}
