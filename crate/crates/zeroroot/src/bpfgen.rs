//! Classic-BPF seccomp filter generation.
//!
//! The generated program uses five opcodes only: 32-bit absolute
//! loads, jump-if-equal, bitwise and, unconditional jump, and return.
//! Classic BPF jump offsets are unsigned, so every jump is forward by
//! construction and the program always terminates.
//!
//! Filter layout, in instruction order:
//!
//! 1. load `seccomp_data.arch`; if it is not the expected audit id,
//!    return ALLOW (a foreign-architecture syscall means the process
//!    switched personalities; faking numbers against the wrong table
//!    would corrupt it)
//! 2. load `seccomp_data.nr`, then one jump-if-equal per intercepted
//!    syscall whose class is faked unconditionally, each targeting a
//!    `ret ERRNO(0)`
//! 3. one jump-if-equal per mknod-family syscall, each targeting a
//!    mode-inspection block
//! 4. `ret ALLOW` for everything else
//! 5. per mknod-family syscall: load the low 32 bits of the mode
//!    argument, mask with S_IFMT, and return ERRNO(0) for block or
//!    character devices, ALLOW otherwise
//!
//! Long equality ladders are emitted in fixed-size chunks, each with
//! its own ERRNO(0) return reached by short jumps and skipped by an
//! unconditional jump, so no jump offset can outgrow the 8-bit field
//! no matter how large the table is.

use std::fmt;

use crate::systable::{Arch, Endianness, SyscallClass, SyscallTable, TableViolation};

// Classic BPF opcodes, composed from the kernel's class/mode/source
// bits (linux/bpf_common.h): BPF_LD|BPF_W|BPF_ABS, BPF_JMP|BPF_JEQ|BPF_K,
// BPF_ALU|BPF_AND|BPF_K, BPF_JMP|BPF_JA, BPF_RET|BPF_K.
pub const OP_LD_W_ABS: u16 = 0x20;
pub const OP_JEQ_K: u16 = 0x15;
pub const OP_AND_K: u16 = 0x54;
pub const OP_JA: u16 = 0x05;
pub const OP_RET_K: u16 = 0x06;

// Seccomp return values (linux/seccomp.h). The low 16 bits of an
// ERRNO action carry the errno; 0 makes the syscall "succeed".
pub const SECCOMP_RET_ALLOW: u32 = 0x7fff_0000;
pub const SECCOMP_RET_ERRNO: u32 = 0x0005_0000;
pub const SECCOMP_RET_ACTION_MASK: u32 = 0xffff_0000;
pub const SECCOMP_RET_DATA_MASK: u32 = 0x0000_ffff;

// struct seccomp_data field offsets (linux/seccomp.h): nr at 0,
// arch at 4, instruction_pointer at 8, args[6] from 16. Total 64.
pub const SECCOMP_DATA_SIZE: u32 = 64;
pub const OFF_NR: u32 = 0;
pub const OFF_ARCH: u32 = 4;
pub const OFF_ARGS: u32 = 16;

// File-type bits of a mode_t (linux/stat.h). Identical on every
// Linux architecture.
pub const S_IFMT: u32 = 0o170000;
pub const S_IFIFO: u32 = 0o010000;
pub const S_IFCHR: u32 = 0o020000;
pub const S_IFDIR: u32 = 0o040000;
pub const S_IFBLK: u32 = 0o060000;
pub const S_IFREG: u32 = 0o100000;
pub const S_IFLNK: u32 = 0o120000;
pub const S_IFSOCK: u32 = 0o140000;

/// Ladder chunk size; the worst-case jump inside a chunk is the chunk
/// length plus a handful of trailing instructions, well under the
/// 255-instruction reach of the 8-bit offset fields.
const CHUNK: usize = 128;

/// Byte offset of the low 32 bits of syscall argument `arg_index`
/// within `seccomp_data`. Arguments are stored as native-endian u64,
/// so the low word sits at the field start on little-endian and four
/// bytes in on big-endian.
pub fn arg_low_word_offset(arg_index: u32, endianness: Endianness) -> u32 {
    let base = OFF_ARGS + 8 * arg_index;
    match endianness {
        Endianness::Little => base,
        Endianness::Big => base + 4,
    }
}

/// Which argument of a mknod-family syscall holds the mode.
pub fn mode_arg_index(name: &str) -> Option<u32> {
    match name {
        "mknod" => Some(1),
        "mknodat" => Some(2),
        _ => None,
    }
}

/// What the filter decides for one syscall invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterAction {
    /// Pass the syscall through to the kernel.
    Allow,
    /// Skip the syscall and return success: ERRNO with data 0.
    FakeSuccess,
    /// Skip the syscall and fail it with this errno.
    Errno(u16),
}

impl FilterAction {
    /// The raw seccomp return word. `FakeSuccess` and `Errno(0)`
    /// encode identically; decoding normalizes to `FakeSuccess`.
    pub fn raw(self) -> u32 {
        match self {
            FilterAction::Allow => SECCOMP_RET_ALLOW,
            FilterAction::FakeSuccess => SECCOMP_RET_ERRNO,
            FilterAction::Errno(e) => SECCOMP_RET_ERRNO | e as u32,
        }
    }

    /// Decodes a raw seccomp return word, if it is one we model.
    pub fn from_raw(raw: u32) -> Option<FilterAction> {
        if raw == SECCOMP_RET_ALLOW {
            Some(FilterAction::Allow)
        } else if raw & SECCOMP_RET_ACTION_MASK == SECCOMP_RET_ERRNO {
            match (raw & SECCOMP_RET_DATA_MASK) as u16 {
                0 => Some(FilterAction::FakeSuccess),
                e => Some(FilterAction::Errno(e)),
            }
        } else {
            None
        }
    }
}

impl fmt::Display for FilterAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterAction::Allow => f.write_str("ALLOW"),
            FilterAction::FakeSuccess => f.write_str("FAKE_SUCCESS"),
            FilterAction::Errno(e) => write!(f, "ERRNO({e})"),
        }
    }
}

/// One classic-BPF instruction, laid out like the kernel's
/// `struct sock_filter`: 8 bytes, no padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(C)]
pub struct BpfInsn {
    pub code: u16,
    pub jt: u8,
    pub jf: u8,
    pub k: u32,
}

impl BpfInsn {
    pub const fn stmt(code: u16, k: u32) -> BpfInsn {
        BpfInsn { code, jt: 0, jf: 0, k }
    }

    pub const fn jump(code: u16, k: u32, jt: u8, jf: u8) -> BpfInsn {
        BpfInsn { code, jt, jf, k }
    }
}

/// A complete filter program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BpfProgram {
    pub insns: Vec<BpfInsn>,
}

/// Kernel limit on filter length (BPF_MAXINSNS).
pub const MAX_INSNS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GenError {
    #[error("unknown architecture {0:?}")]
    UnknownArch(String),
    #[error("table failed verification with {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidTable(Vec<TableViolation>),
    #[error("no mode-argument rule for mknod-class syscall {0:?}")]
    NoModeArgRule(String),
    #[error("jump at instruction {index} needs offset {distance}, limit is 255")]
    JumpTooFar { index: usize, distance: usize },
    #[error("program would have {0} instructions, limit is {MAX_INSNS}")]
    TooLong(usize),
    #[error("program failed validation with {} violation(s), first: {}", .0.len(), .0[0])]
    InvalidProgram(Vec<ProgramViolation>),
    #[error("binary filter length {0} is not a multiple of 8")]
    MalformedBinary(usize),
}

/// A violation found by [`validate`]. Indexes are instruction
/// positions within the program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProgramViolation {
    Empty,
    TooLong { len: usize },
    UnknownOpcode { index: usize, code: u16 },
    UnalignedLoad { index: usize, offset: u32 },
    LoadOutOfBounds { index: usize, offset: u32 },
    JumpOutOfRange { index: usize, target: u64 },
    MissingReturn { index: usize },
}

impl fmt::Display for ProgramViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProgramViolation::Empty => f.write_str("program is empty"),
            ProgramViolation::TooLong { len } => {
                write!(f, "program has {len} instructions, limit is {MAX_INSNS}")
            }
            ProgramViolation::UnknownOpcode { index, code } => {
                write!(f, "instruction {index}: opcode {code:#06x} outside supported subset")
            }
            ProgramViolation::UnalignedLoad { index, offset } => {
                write!(f, "instruction {index}: load offset {offset} not 4-byte aligned")
            }
            ProgramViolation::LoadOutOfBounds { index, offset } => {
                write!(
                    f,
                    "instruction {index}: load offset {offset} outside {SECCOMP_DATA_SIZE}-byte seccomp data"
                )
            }
            ProgramViolation::JumpOutOfRange { index, target } => {
                write!(f, "instruction {index}: jump target {target} past end of program")
            }
            ProgramViolation::MissingReturn { index } => {
                write!(f, "instruction {index}: execution can run past the last instruction")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Label(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Target {
    Next,
    To(Label),
}

/// Two-pass emitter: instructions carry symbolic targets, labels bind
/// to positions, and resolution turns targets into relative offsets.
struct Emitter {
    insns: Vec<(u16, u32, Target, Target)>,
    labels: Vec<Option<usize>>,
}

impl Emitter {
    fn new() -> Emitter {
        Emitter { insns: Vec::new(), labels: Vec::new() }
    }

    fn label(&mut self) -> Label {
        self.labels.push(None);
        Label(self.labels.len() - 1)
    }

    fn bind(&mut self, label: Label) {
        debug_assert!(self.labels[label.0].is_none(), "label bound twice");
        self.labels[label.0] = Some(self.insns.len());
    }

    fn ld_abs(&mut self, offset: u32) {
        self.insns.push((OP_LD_W_ABS, offset, Target::Next, Target::Next));
    }

    fn and_k(&mut self, k: u32) {
        self.insns.push((OP_AND_K, k, Target::Next, Target::Next));
    }

    fn jeq(&mut self, k: u32, jt: Target, jf: Target) {
        self.insns.push((OP_JEQ_K, k, jt, jf));
    }

    fn ja(&mut self, to: Label) {
        self.insns.push((OP_JA, 0, Target::To(to), Target::Next));
    }

    fn ret(&mut self, k: u32) {
        self.insns.push((OP_RET_K, k, Target::Next, Target::Next));
    }

    fn offset_to(&self, index: usize, target: Target) -> Result<usize, GenError> {
        match target {
            Target::Next => Ok(0),
            Target::To(Label(l)) => {
                let pos = self.labels[l].expect("unbound label");
                debug_assert!(pos > index, "backward jump emitted");
                Ok(pos - index - 1)
            }
        }
    }

    fn resolve(self) -> Result<Vec<BpfInsn>, GenError> {
        if self.insns.len() > MAX_INSNS {
            return Err(GenError::TooLong(self.insns.len()));
        }
        let mut out = Vec::with_capacity(self.insns.len());
        for (index, &(code, k, jt, jf)) in self.insns.iter().enumerate() {
            let insn = match code {
                OP_JEQ_K => {
                    let t = self.offset_to(index, jt)?;
                    let f = self.offset_to(index, jf)?;
                    for d in [t, f] {
                        if d > u8::MAX as usize {
                            return Err(GenError::JumpTooFar { index, distance: d });
                        }
                    }
                    BpfInsn::jump(code, k, t as u8, f as u8)
                }
                OP_JA => {
                    let d = self.offset_to(index, jt)?;
                    BpfInsn::stmt(code, d as u32)
                }
                _ => BpfInsn::stmt(code, k),
            };
            out.push(insn);
        }
        Ok(out)
    }
}

/// Generates the filter for `arch`. Deterministic: equal inputs yield
/// byte-for-byte equal programs. The table must verify cleanly and
/// must contain `arch`.
pub fn generate(table: &SyscallTable, arch: &Arch) -> Result<BpfProgram, GenError> {
    let violations = table.verify();
    if !violations.is_empty() {
        return Err(GenError::InvalidTable(violations));
    }
    if table.arch_index(arch).is_none() {
        return Err(GenError::UnknownArch(arch.name.to_string()));
    }

    let mut fake_nrs: Vec<u32> = [SyscallClass::Ownership, SyscallClass::Identity, SyscallClass::SelfTest]
        .iter()
        .flat_map(|&class| table.numbers_for_class(arch, class))
        .map(|(_, nr)| nr)
        .collect();
    fake_nrs.sort_unstable();

    let mut inspected: Vec<(u32, u32)> = Vec::new();
    for (name, nr) in table.numbers_for_class(arch, SyscallClass::MknodInspect) {
        let arg = mode_arg_index(name)
            .ok_or_else(|| GenError::NoModeArgRule(name.to_string()))?;
        inspected.push((nr, arg));
    }
    inspected.sort_unstable();

    let insns = emit(arch.audit_id, arch.endianness, &fake_nrs, &inspected)?;
    Ok(BpfProgram { insns })
}

fn emit(
    audit_id: u32,
    endianness: Endianness,
    fake_nrs: &[u32],
    inspected: &[(u32, u32)],
) -> Result<Vec<BpfInsn>, GenError> {
    let mut e = Emitter::new();

    let arch_ok = e.label();
    e.ld_abs(OFF_ARCH);
    e.jeq(audit_id, Target::To(arch_ok), Target::Next);
    e.ret(SECCOMP_RET_ALLOW);
    e.bind(arch_ok);

    e.ld_abs(OFF_NR);
    for chunk in fake_nrs.chunks(CHUNK) {
        let fake = e.label();
        let after = e.label();
        for &nr in chunk {
            e.jeq(nr, Target::To(fake), Target::Next);
        }
        e.ja(after);
        e.bind(fake);
        e.ret(SECCOMP_RET_ERRNO);
        e.bind(after);
    }

    let blocks: Vec<Label> = inspected.iter().map(|_| e.label()).collect();
    for (&(nr, _), &block) in inspected.iter().zip(&blocks) {
        e.jeq(nr, Target::To(block), Target::Next);
    }
    e.ret(SECCOMP_RET_ALLOW);

    for (&(_, arg_index), &block) in inspected.iter().zip(&blocks) {
        let device = e.label();
        let other = e.label();
        e.bind(block);
        e.ld_abs(arg_low_word_offset(arg_index, endianness));
        e.and_k(S_IFMT);
        e.jeq(S_IFCHR, Target::To(device), Target::Next);
        e.jeq(S_IFBLK, Target::To(device), Target::To(other));
        e.bind(device);
        e.ret(SECCOMP_RET_ERRNO);
        e.bind(other);
        e.ret(SECCOMP_RET_ALLOW);
    }

    e.resolve()
}

/// Checks the structural rules the generator promises: supported
/// opcode subset only, aligned in-bounds loads, in-range jumps, and
/// no execution path that runs off the end. Unreachable instructions
/// are not themselves violations.
pub fn validate(program: &BpfProgram) -> Vec<ProgramViolation> {
    let mut out = Vec::new();
    let len = program.insns.len();
    if len == 0 {
        out.push(ProgramViolation::Empty);
        return out;
    }
    if len > MAX_INSNS {
        out.push(ProgramViolation::TooLong { len });
    }

    for (index, insn) in program.insns.iter().enumerate() {
        match insn.code {
            OP_LD_W_ABS => {
                if insn.k % 4 != 0 {
                    out.push(ProgramViolation::UnalignedLoad { index, offset: insn.k });
                }
                if insn.k.checked_add(4).is_none_or(|end| end > SECCOMP_DATA_SIZE) {
                    out.push(ProgramViolation::LoadOutOfBounds { index, offset: insn.k });
                }
            }
            OP_JEQ_K => {
                for off in [insn.jt, insn.jf] {
                    let target = index as u64 + 1 + off as u64;
                    if target >= len as u64 {
                        out.push(ProgramViolation::JumpOutOfRange { index, target });
                    }
                }
            }
            OP_JA => {
                let target = index as u64 + 1 + insn.k as u64;
                if target >= len as u64 {
                    out.push(ProgramViolation::JumpOutOfRange { index, target });
                }
            }
            OP_AND_K | OP_RET_K => {}
            code => out.push(ProgramViolation::UnknownOpcode { index, code }),
        }
    }

    // Walk every reachable path; flag instructions from which
    // execution would step or jump past the end. Offsets are
    // unsigned, so cycles are impossible and one visit per
    // instruction suffices.
    let mut visited = vec![false; len];
    let mut stack = vec![0usize];
    while let Some(index) = stack.pop() {
        if index >= len || std::mem::replace(&mut visited[index], true) {
            continue;
        }
        let insn = &program.insns[index];
        let successors: &[u64] = match insn.code {
            OP_RET_K => &[],
            OP_JEQ_K => &[index as u64 + 1 + insn.jt as u64, index as u64 + 1 + insn.jf as u64],
            OP_JA => &[index as u64 + 1 + insn.k as u64],
            _ => &[index as u64 + 1],
        };
        let mut past_end = false;
        for &target in successors {
            if target >= len as u64 {
                past_end = true;
            } else {
                stack.push(target as usize);
            }
        }
        if past_end {
            out.push(ProgramViolation::MissingReturn { index });
        }
    }

    out
}

/// Serializes a validated program to the kernel's `sock_filter` wire
/// layout: 8 bytes per instruction, fields native-endian, in program
/// order. Fails on a program that does not validate cleanly.
pub fn serialize_binary(program: &BpfProgram) -> Result<Vec<u8>, GenError> {
    let violations = validate(program);
    if !violations.is_empty() {
        return Err(GenError::InvalidProgram(violations));
    }
    let mut out = Vec::with_capacity(program.insns.len() * 8);
    for insn in &program.insns {
        out.extend_from_slice(&insn.code.to_ne_bytes());
        out.push(insn.jt);
        out.push(insn.jf);
        out.extend_from_slice(&insn.k.to_ne_bytes());
    }
    Ok(out)
}

/// Inverse of [`serialize_binary`]. Does not validate; callers that
/// intend to install the result should validate it first.
pub fn deserialize_binary(bytes: &[u8]) -> Result<BpfProgram, GenError> {
    if !bytes.len().is_multiple_of(8) {
        return Err(GenError::MalformedBinary(bytes.len()));
    }
    let insns = bytes
        .chunks_exact(8)
        .map(|c| BpfInsn {
            code: u16::from_ne_bytes([c[0], c[1]]),
            jt: c[2],
            jf: c[3],
            k: u32::from_ne_bytes([c[4], c[5], c[6], c[7]]),
        })
        .collect();
    Ok(BpfProgram { insns })
}

/// Renders a program as one instruction per line, jump targets as
/// absolute instruction indexes. Instructions outside the supported
/// subset render as `.raw` lines rather than failing, so a dump of a
/// malformed program is still inspectable.
pub fn disassemble(program: &BpfProgram) -> String {
    let mut out = String::new();
    for (index, insn) in program.insns.iter().enumerate() {
        let line = match insn.code {
            OP_LD_W_ABS => format!("ld [{}]", insn.k),
            OP_AND_K => format!("and #{:#x}", insn.k),
            OP_JEQ_K => format!(
                "jeq #{:#x}, {}, {}",
                insn.k,
                index + 1 + insn.jt as usize,
                index + 1 + insn.jf as usize
            ),
            OP_JA => format!("ja {}", index as u64 + 1 + insn.k as u64),
            OP_RET_K => {
                if insn.k == SECCOMP_RET_ALLOW {
                    "ret ALLOW".to_string()
                } else if insn.k & SECCOMP_RET_ACTION_MASK == SECCOMP_RET_ERRNO {
                    format!("ret ERRNO({})", insn.k & SECCOMP_RET_DATA_MASK)
                } else {
                    format!("ret #{:#x}", insn.k)
                }
            }
            code => format!(
                ".raw code={:#06x} jt={} jf={} k={:#x}",
                code, insn.jt, insn.jf, insn.k
            ),
        };
        out.push_str(&format!("{index}: {line}\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}: {reason}")]
pub struct AsmError {
    pub line: usize,
    pub reason: String,
}

fn asm_err<T>(line: usize, reason: impl Into<String>) -> Result<T, AsmError> {
    Err(AsmError { line, reason: reason.into() })
}

fn parse_k(line: usize, token: &str) -> Result<u32, AsmError> {
    let Some(body) = token.strip_prefix('#') else {
        return asm_err(line, format!("expected #immediate, got {token:?}"));
    };
    let parsed = match body.strip_prefix("0x") {
        Some(hex) => u32::from_str_radix(hex, 16),
        None => body.parse(),
    };
    parsed.map_err(|_| AsmError { line, reason: format!("bad immediate {token:?}") })
}

fn parse_target(line: usize, index: usize, token: &str) -> Result<usize, AsmError> {
    let target: usize = token
        .parse()
        .map_err(|_| AsmError { line, reason: format!("bad jump target {token:?}") })?;
    if target <= index {
        return asm_err(line, format!("jump target {target} is not past instruction {index}"));
    }
    Ok(target - index - 1)
}

/// Parses [`disassemble`] output back into a program. Round-trips:
/// `assemble(&disassemble(p)) == p` for any program whose jumps are
/// forward and within offset limits.
pub fn assemble(text: &str) -> Result<BpfProgram, AsmError> {
    let mut insns = Vec::new();
    for (line_no, raw_line) in text.lines().enumerate() {
        let line = line_no + 1;
        let body = raw_line.trim();
        if body.is_empty() {
            continue;
        }
        let index = insns.len();
        let body = match body.split_once(':') {
            Some((prefix, rest)) if prefix.chars().all(|c| c.is_ascii_digit()) && !prefix.is_empty() => {
                let stated: usize = prefix.parse().unwrap();
                if stated != index {
                    return asm_err(line, format!("instruction labeled {stated} is at position {index}"));
                }
                rest.trim()
            }
            _ => body,
        };

        let (mnemonic, rest) = body.split_once(char::is_whitespace).unwrap_or((body, ""));
        let rest = rest.trim();
        let insn = match mnemonic {
            "ld" => {
                let offset = rest
                    .strip_prefix('[')
                    .and_then(|r| r.strip_suffix(']'))
                    .and_then(|r| r.trim().parse::<u32>().ok());
                match offset {
                    Some(k) => BpfInsn::stmt(OP_LD_W_ABS, k),
                    None => return asm_err(line, format!("expected ld [offset], got {body:?}")),
                }
            }
            "and" => BpfInsn::stmt(OP_AND_K, parse_k(line, rest)?),
            "jeq" => {
                let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return asm_err(line, format!("expected jeq #k, t, f, got {body:?}"));
                }
                let k = parse_k(line, parts[0])?;
                let jt = parse_target(line, index, parts[1])?;
                let jf = parse_target(line, index, parts[2])?;
                for d in [jt, jf] {
                    if d > u8::MAX as usize {
                        return asm_err(line, format!("jump offset {d} exceeds 255"));
                    }
                }
                BpfInsn::jump(OP_JEQ_K, k, jt as u8, jf as u8)
            }
            "ja" => {
                let d = parse_target(line, index, rest)?;
                BpfInsn::stmt(OP_JA, d as u32)
            }
            "ret" => {
                let k = if rest == "ALLOW" {
                    SECCOMP_RET_ALLOW
                } else if let Some(e) = rest.strip_prefix("ERRNO(").and_then(|r| r.strip_suffix(')')) {
                    let errno: u32 = e
                        .parse()
                        .map_err(|_| AsmError { line, reason: format!("bad errno {e:?}") })?;
                    if errno > SECCOMP_RET_DATA_MASK {
                        return asm_err(line, format!("errno {errno} exceeds 16 bits"));
                    }
                    SECCOMP_RET_ERRNO | errno
                } else {
                    parse_k(line, rest)?
                };
                BpfInsn::stmt(OP_RET_K, k)
            }
            ".raw" => {
                let mut code = None;
                let mut jt = None;
                let mut jf = None;
                let mut k = None;
                for field in rest.split_whitespace() {
                    let Some((key, value)) = field.split_once('=') else {
                        return asm_err(line, format!("bad .raw field {field:?}"));
                    };
                    let parse_num = |v: &str| -> Option<u32> {
                        match v.strip_prefix("0x") {
                            Some(hex) => u32::from_str_radix(hex, 16).ok(),
                            None => v.parse().ok(),
                        }
                    };
                    let Some(value) = parse_num(value) else {
                        return asm_err(line, format!("bad .raw value {field:?}"));
                    };
                    match key {
                        "code" => code = Some(value),
                        "jt" => jt = Some(value),
                        "jf" => jf = Some(value),
                        "k" => k = Some(value),
                        _ => return asm_err(line, format!("bad .raw field {field:?}")),
                    }
                }
                match (code, jt, jf, k) {
                    (Some(code), Some(jt), Some(jf), Some(k))
                        if code <= u16::MAX as u32 && jt <= u8::MAX as u32 && jf <= u8::MAX as u32 =>
                    {
                        BpfInsn { code: code as u16, jt: jt as u8, jf: jf as u8, k }
                    }
                    _ => return asm_err(line, format!("bad .raw line {body:?}")),
                }
            }
            other => return asm_err(line, format!("unknown mnemonic {other:?}")),
        };
        insns.push(insn);
    }
    Ok(BpfProgram { insns })
}
