//! Parsing of SASS-style disassembly listings and opcode classification.
//!
//! The accepted grammar is line oriented:
//!
//! ```text
//! .L_41:
//!         /*04a0*/ DSETP.LE.AND P0,PT,|R6|,+INF,PT;
//!         /*04a8*/ @P0 BRA `(.L_43);
//! ```
//!
//! Label lines attach to the next instruction. Blank lines, `//` and `#`
//! comments, and stand-alone `/* ... */` comments are skipped. Anything after
//! the terminating `;` must be whitespace or a comment (cuobjdump prints the
//! encoding there).

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use crate::error::{Error, Result};

/// Instruction class used for instruction mixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum InstrClass {
    Fp32,
    Fp64,
    Int,
    Conv,
    Simd,
    Mem,
    Ctrl,
    Pred,
    Move,
    Misc,
}

impl InstrClass {
    pub const ALL: [InstrClass; 10] = [
        InstrClass::Fp32,
        InstrClass::Fp64,
        InstrClass::Int,
        InstrClass::Conv,
        InstrClass::Simd,
        InstrClass::Mem,
        InstrClass::Ctrl,
        InstrClass::Pred,
        InstrClass::Move,
        InstrClass::Misc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InstrClass::Fp32 => "FP32",
            InstrClass::Fp64 => "FP64",
            InstrClass::Int => "INT",
            InstrClass::Conv => "CONV",
            InstrClass::Simd => "SIMD",
            InstrClass::Mem => "MEM",
            InstrClass::Ctrl => "CTRL",
            InstrClass::Pred => "PRED",
            InstrClass::Move => "MOVE",
            InstrClass::Misc => "MISC",
        }
    }

    pub fn index(self) -> usize {
        InstrClass::ALL.iter().position(|c| *c == self).unwrap()
    }
}

impl fmt::Display for InstrClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for InstrClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InstrClass::ALL
            .iter()
            .copied()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownClass(s.to_string()))
    }
}

const CTRL_OPS: &[&str] = &[
    "BRA", "BRX", "JMP", "JMX", "JCAL", "CAL", "CALL", "RET", "EXIT", "SSY", "SYNC", "BAR", "PBK",
    "BRK", "PCNT", "CONT", "BPT", "KIL", "BSSY", "BSYNC", "WARPSYNC",
];
const CONV_OPS: &[&str] = &["F2I", "I2F", "F2F", "I2I", "F2FP", "I2FP"];
const PRED_OPS: &[&str] = &["PSETP", "CSETP", "PSET", "PLOP3", "P2R", "R2P"];
const MEM_PREFIXES: &[&str] = &["LD", "ST", "ATOM", "SULD", "SUST", "TEX", "TLD", "TXQ"];
const MEM_OPS: &[&str] = &["RED", "MEMBAR", "CCTL", "CCTLL", "ERRBAR"];
const MOVE_OPS: &[&str] = &["SHFL", "SEL", "S2R", "CS2R", "PRMT"];
const INT_OPS: &[&str] = &[
    "LOP", "LOP3", "LOP32I", "SHL", "SHR", "SHF", "XMAD", "BFE", "BFI", "POPC", "FLO", "LEA",
    "BREV", "SCADD",
];
const MISC_OPS: &[&str] = &["DEPBAR", "VOTE", "NOP"];

/// Maps an opcode (and its modifiers) to an instruction class. Total and pure.
pub fn classify_opcode(opcode: &str, modifiers: &[String]) -> InstrClass {
    let op = opcode.to_ascii_uppercase();
    let op = op.as_str();
    let has_mod = |m: &str| modifiers.iter().any(|x| x.eq_ignore_ascii_case(m));

    if CTRL_OPS.contains(&op) {
        return InstrClass::Ctrl;
    }
    if CONV_OPS.contains(&op) {
        return InstrClass::Conv;
    }
    if MISC_OPS.contains(&op) {
        return InstrClass::Misc;
    }
    if PRED_OPS.contains(&op) {
        return InstrClass::Pred;
    }
    // compare / set-predicate ops take the class of their operand type prefix
    if op.ends_with("SETP") || op.ends_with("SET") {
        match op.as_bytes()[0] {
            b'I' => return InstrClass::Int,
            b'F' | b'H' => return InstrClass::Fp32,
            b'D' => return InstrClass::Fp64,
            _ => {}
        }
    }
    if MEM_OPS.contains(&op) || MEM_PREFIXES.iter().any(|p| op.starts_with(p)) {
        return InstrClass::Mem;
    }
    if op.starts_with('V') {
        return InstrClass::Simd;
    }
    if op.starts_with("MOV") || MOVE_OPS.contains(&op) {
        return InstrClass::Move;
    }
    if INT_OPS.contains(&op) {
        return InstrClass::Int;
    }
    if op.starts_with('D') || has_mod("F64") {
        return InstrClass::Fp64;
    }
    if op.starts_with('F')
        || op.starts_with('H')
        || op.starts_with("MUFU")
        || op.starts_with("RRO")
        || has_mod("F32")
    {
        return InstrClass::Fp32;
    }
    if op.starts_with('I') {
        return InstrClass::Int;
    }
    InstrClass::Misc
}

/// Opcodes that move control to a label operand.
pub fn is_jump(opcode: &str) -> bool {
    matches!(opcode, "BRA" | "JMP")
}

/// Opcodes that leave the kernel.
pub fn is_exit(opcode: &str) -> bool {
    matches!(opcode, "EXIT" | "RET")
}

/// Indirect branches whose target cannot be resolved statically.
pub fn is_indirect(opcode: &str) -> bool {
    matches!(opcode, "BRX" | "JMX")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Predicate {
    pub register: u32,
    pub negated: bool,
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "@{}P{}",
            if self.negated { "!" } else { "" },
            self.register
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub offset: u64,
    /// Number of hex digits the offset was written with.
    pub offset_width: usize,
    pub predicate: Option<Predicate>,
    pub opcode: String,
    pub modifiers: Vec<String>,
    pub operands: Vec<String>,
    pub branch_target: Option<String>,
    pub raw: String,
}

impl Instruction {
    pub fn class(&self) -> InstrClass {
        classify_opcode(&self.opcode, &self.modifiers)
    }

    pub fn is_ctrl(&self) -> bool {
        self.class() == InstrClass::Ctrl
    }

    /// Hex digits of the offset as they appeared in the source.
    pub fn offset_hex(&self) -> String {
        format!("{:0width$x}", self.offset, width = self.offset_width)
    }

    /// Canonical re-rendering of the parsed tokens.
    pub fn render(&self) -> String {
        let mut s = format!("/*{}*/ ", self.offset_hex());
        if let Some(p) = &self.predicate {
            s.push_str(&p.to_string());
            s.push(' ');
        }
        s.push_str(&self.opcode);
        for m in &self.modifiers {
            s.push('.');
            s.push_str(m);
        }
        if !self.operands.is_empty() {
            s.push(' ');
            s.push_str(&self.operands.join(", "));
        }
        s.push(';');
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ListingLine {
    pub label: Option<String>,
    pub instr: Instruction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Listing {
    pub kernel_id: String,
    pub lines: Vec<ListingLine>,
}

impl Listing {
    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    pub fn instructions(&self) -> impl Iterator<Item = &Instruction> {
        self.lines.iter().map(|l| &l.instr)
    }

    /// Offset of the instruction carrying `label`.
    pub fn label_offset(&self, label: &str) -> Option<u64> {
        self.lines
            .iter()
            .find(|l| l.label.as_deref() == Some(label))
            .map(|l| l.instr.offset)
    }
}

/// Per-class instruction counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MixVector {
    pub counts: BTreeMap<InstrClass, u64>,
}

impl MixVector {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, class: InstrClass, n: u64) {
        *self.counts.entry(class).or_insert(0) += n;
    }

    pub fn get(&self, class: InstrClass) -> u64 {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn as_fractions(&self) -> BTreeMap<InstrClass, f64> {
        let total = self.total();
        InstrClass::ALL
            .iter()
            .map(|&c| {
                let f = if total == 0 {
                    0.0
                } else {
                    self.get(c) as f64 / total as f64
                };
                (c, f)
            })
            .collect()
    }

    /// Fractions in `InstrClass::ALL` order.
    pub fn fraction_vec(&self) -> Vec<f64> {
        self.as_fractions().into_values().collect()
    }

    pub fn from_instructions<'a>(instrs: impl IntoIterator<Item = &'a Instruction>) -> Self {
        let mut mix = MixVector::new();
        for i in instrs {
            mix.add(i.class(), 1);
        }
        mix
    }
}

/// Counts instructions per class over the whole listing.
pub fn static_mix(listing: &Listing) -> MixVector {
    MixVector::from_instructions(listing.instructions())
}

fn syntax(line: usize, reason: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        reason: reason.into(),
    }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.' || c == '$')
}

/// Splits an operand list on top-level commas.
fn split_operands(s: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '[' | '(' | '{' => depth += 1,
            ']' | ')' | '}' => depth -= 1,
            ',' if depth == 0 => {
                out.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

/// Label named by an operand of the form `` `(.L_x) ``.
fn operand_label(op: &str) -> Option<&str> {
    let inner = op.strip_prefix("`(")?.strip_suffix(')')?;
    (inner.starts_with('.') && is_ident(&inner[1..])).then_some(inner)
}

fn parse_instruction(line_no: usize, raw: &str, body: &str) -> Result<Instruction> {
    // body starts right after "/*"
    let close = body
        .find("*/")
        .ok_or_else(|| syntax(line_no, "unterminated offset comment"))?;
    let hex = body[..close].trim();
    if hex.is_empty() || !hex.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(syntax(line_no, format!("malformed offset {hex:?}")));
    }
    let offset = u64::from_str_radix(hex, 16)
        .map_err(|_| syntax(line_no, format!("offset out of range {hex:?}")))?;
    let rest = &body[close + 2..];

    let semi = rest
        .find(';')
        .ok_or_else(|| syntax(line_no, "unterminated instruction (missing ';')"))?;
    let trailer = rest[semi + 1..].trim();
    let trailer_ok = trailer.is_empty()
        || trailer.starts_with("//")
        || (trailer.starts_with("/*") && trailer.ends_with("*/"));
    if !trailer_ok {
        return Err(syntax(
            line_no,
            format!("unexpected text after ';': {trailer:?}"),
        ));
    }
    let mut text = rest[..semi].trim();

    let predicate = if let Some(p) = text.strip_prefix('@') {
        let end = p.find(char::is_whitespace).unwrap_or(p.len());
        let tok = &p[..end];
        let (negated, reg) = match tok.strip_prefix('!') {
            Some(r) => (true, r),
            None => (false, tok),
        };
        let register = reg
            .strip_prefix('P')
            .filter(|d| !d.is_empty() && d.chars().all(|c| c.is_ascii_digit()))
            .and_then(|d| d.parse::<u32>().ok())
            .ok_or_else(|| syntax(line_no, format!("malformed predicate @{tok}")))?;
        text = p[end..].trim_start();
        Some(Predicate { register, negated })
    } else {
        None
    };

    let end = text.find(char::is_whitespace).unwrap_or(text.len());
    let mnemonic = &text[..end];
    if mnemonic.is_empty() {
        return Err(syntax(line_no, "missing opcode"));
    }
    let mut parts = mnemonic.split('.');
    let opcode = parts.next().unwrap_or_default().to_string();
    if opcode.is_empty()
        || !opcode
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return Err(syntax(line_no, format!("malformed opcode {mnemonic:?}")));
    }
    let modifiers: Vec<String> = parts.map(str::to_string).collect();
    if modifiers.iter().any(String::is_empty) {
        return Err(syntax(line_no, format!("empty modifier in {mnemonic:?}")));
    }
    let operands = split_operands(text[end..].trim());

    let is_ctrl = classify_opcode(&opcode, &modifiers) == InstrClass::Ctrl;
    let branch_target = if is_ctrl {
        operands
            .iter()
            .find_map(|o| operand_label(o))
            .map(str::to_string)
    } else {
        None
    };

    Ok(Instruction {
        offset,
        offset_width: hex.len(),
        predicate,
        opcode,
        modifiers,
        operands,
        branch_target,
        raw: raw.to_string(),
    })
}

/// Parses a listing. Labels attach to the following instruction.
pub fn parse_listing(text: &str, kernel_id: &str) -> Result<Listing> {
    let mut lines: Vec<ListingLine> = Vec::new();
    let mut label_lines: HashMap<String, usize> = HashMap::new();
    let mut pending: Option<(String, usize)> = None;
    let mut refs: Vec<(String, usize)> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let t = raw.trim();
        if t.is_empty() || t.starts_with("//") || t.starts_with('#') {
            continue;
        }
        if let Some(body) = t.strip_prefix("/*") {
            let is_comment = match body.find("*/") {
                Some(c) => body[c + 2..].trim().is_empty(),
                None => false,
            };
            if is_comment {
                continue;
            }
            let instr = parse_instruction(line_no, raw, body)?;
            if let Some(prev) = lines.last() {
                if instr.offset <= prev.instr.offset {
                    return Err(syntax(
                        line_no,
                        format!(
                            "offset {:#x} not greater than previous {:#x}",
                            instr.offset, prev.instr.offset
                        ),
                    ));
                }
            }
            if let Some(target) = &instr.branch_target {
                refs.push((target.clone(), line_no));
            }
            lines.push(ListingLine {
                label: pending.take().map(|(l, _)| l),
                instr,
            });
            continue;
        }
        if let Some(name) = t.strip_suffix(':') {
            if name.starts_with('.') && is_ident(&name[1..]) {
                if let Some(first) = label_lines.get(name) {
                    return Err(syntax(
                        line_no,
                        format!("duplicate label {name} (first defined on line {first})"),
                    ));
                }
                if let Some((prev, prev_line)) = &pending {
                    return Err(syntax(
                        line_no,
                        format!("label {name} follows label {prev} (line {prev_line}) with no instruction between"),
                    ));
                }
                label_lines.insert(name.to_string(), line_no);
                pending = Some((name.to_string(), line_no));
                continue;
            }
            return Err(syntax(line_no, format!("malformed label {t:?}")));
        }
        return Err(syntax(line_no, format!("unrecognized line {t:?}")));
    }

    if let Some((label, line)) = pending {
        return Err(syntax(line, format!("label {label} has no instruction")));
    }
    for (target, line) in refs {
        if !label_lines.contains_key(&target) {
            return Err(Error::UnresolvedLabel {
                label: target,
                line,
            });
        }
    }

    Ok(Listing {
        kernel_id: kernel_id.to_string(),
        lines,
    })
}
