//! Userspace interpreter for the generated filters.
//!
//! The VM mirrors the kernel's classic-BPF semantics for exactly the
//! opcode subset the generator emits, evaluating against a serialized
//! 64-byte `seccomp_data` record. It exists to check generated
//! programs against the syscall table without installing them, so it
//! deliberately shares no evaluation logic with the generator.

use crate::bpfgen::{
    BpfProgram, OP_AND_K, OP_JA, OP_JEQ_K, OP_LD_W_ABS, OP_RET_K, SECCOMP_DATA_SIZE, S_IFBLK,
    S_IFCHR, S_IFDIR, S_IFIFO, S_IFLNK, S_IFREG, S_IFSOCK,
};
use crate::systable::Endianness;

/// The record the kernel hands a seccomp filter, as specified by
/// `struct seccomp_data`: syscall number, audit architecture,
/// instruction pointer, six zero-extended arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeccompData {
    pub nr: i32,
    pub arch: u32,
    pub ip: u64,
    pub args: [u64; 6],
}

impl SeccompData {
    pub fn new(nr: i32, arch: u32, args: [u64; 6]) -> SeccompData {
        SeccompData { nr, arch, ip: 0, args }
    }

    /// Serializes the record the way it would sit in memory on a
    /// machine of the given endianness: nr at 0, arch at 4, ip at 8,
    /// args from 16, every field in that byte order.
    pub fn to_bytes(&self, endianness: Endianness) -> [u8; SECCOMP_DATA_SIZE as usize] {
        let mut out = [0u8; SECCOMP_DATA_SIZE as usize];
        let put32 = |buf: &mut [u8; 64], at: usize, v: u32| {
            let bytes = match endianness {
                Endianness::Little => v.to_le_bytes(),
                Endianness::Big => v.to_be_bytes(),
            };
            buf[at..at + 4].copy_from_slice(&bytes);
        };
        let put64 = |buf: &mut [u8; 64], at: usize, v: u64| {
            let bytes = match endianness {
                Endianness::Little => v.to_le_bytes(),
                Endianness::Big => v.to_be_bytes(),
            };
            buf[at..at + 8].copy_from_slice(&bytes);
        };
        put32(&mut out, 0, self.nr as u32);
        put32(&mut out, 4, self.arch);
        put64(&mut out, 8, self.ip);
        for (i, &arg) in self.args.iter().enumerate() {
            put64(&mut out, 16 + 8 * i, arg);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum VmError {
    #[error("program is empty")]
    EmptyProgram,
    #[error("pc {pc}: opcode {code:#06x} outside supported subset")]
    UnsupportedOpcode { pc: usize, code: u16 },
    #[error("pc {pc}: load offset {offset} not 4-byte aligned")]
    UnalignedLoad { pc: usize, offset: u32 },
    #[error("pc {pc}: load offset {offset} outside {SECCOMP_DATA_SIZE}-byte seccomp data")]
    LoadOutOfBounds { pc: usize, offset: u32 },
    #[error("pc {pc}: jump target {target} outside program")]
    JumpOutOfRange { pc: usize, target: u64 },
    #[error("pc {pc}: execution fell off the end of the program")]
    FellOffEnd { pc: usize },
    #[error("inspected argument index {0} exceeds 5")]
    ArgIndexOutOfRange(u32),
}

/// Result of one evaluation: the raw seccomp return word and how many
/// instructions executed before returning.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VmResult {
    pub raw_action: u32,
    pub steps: usize,
}

/// Runs `program` over `data` as laid out on a machine of the given
/// endianness. Jump offsets are unsigned, so the program counter
/// strictly increases and evaluation always terminates within
/// `program.insns.len()` steps.
pub fn eval(
    program: &BpfProgram,
    data: &SeccompData,
    endianness: Endianness,
) -> Result<VmResult, VmError> {
    if program.insns.is_empty() {
        return Err(VmError::EmptyProgram);
    }
    let bytes = data.to_bytes(endianness);
    let len = program.insns.len();
    let mut acc: u32 = 0;
    let mut pc: usize = 0;
    let mut steps: usize = 0;

    loop {
        let insn = &program.insns[pc];
        steps += 1;
        debug_assert!(steps <= len, "forward-only jumps bound steps by len");
        match insn.code {
            OP_LD_W_ABS => {
                let offset = insn.k;
                if !offset.is_multiple_of(4) {
                    return Err(VmError::UnalignedLoad { pc, offset });
                }
                if offset + 4 > SECCOMP_DATA_SIZE {
                    return Err(VmError::LoadOutOfBounds { pc, offset });
                }
                let at = offset as usize;
                let word: [u8; 4] = bytes[at..at + 4].try_into().unwrap();
                acc = match endianness {
                    Endianness::Little => u32::from_le_bytes(word),
                    Endianness::Big => u32::from_be_bytes(word),
                };
                pc += 1;
            }
            OP_AND_K => {
                acc &= insn.k;
                pc += 1;
            }
            OP_JEQ_K => {
                let off = if acc == insn.k { insn.jt } else { insn.jf };
                let target = pc as u64 + 1 + off as u64;
                if target >= len as u64 {
                    return Err(VmError::JumpOutOfRange { pc, target });
                }
                pc = target as usize;
            }
            OP_JA => {
                let target = pc as u64 + 1 + insn.k as u64;
                if target >= len as u64 {
                    return Err(VmError::JumpOutOfRange { pc, target });
                }
                pc = target as usize;
            }
            OP_RET_K => {
                return Ok(VmResult { raw_action: insn.k, steps });
            }
            code => return Err(VmError::UnsupportedOpcode { pc, code }),
        }
        if pc >= len {
            return Err(VmError::FellOffEnd { pc });
        }
    }
}

/// The eight mode patterns the decision matrix evaluates for
/// inspected syscalls: no type bits (legal shorthand for a regular
/// file) plus each of the seven file types, all with permission bits
/// set to prove the filter masks them off.
pub const MODE_PATTERNS: [u32; 8] = [
    0,
    S_IFIFO,
    S_IFCHR,
    S_IFDIR,
    S_IFBLK,
    S_IFREG,
    S_IFLNK,
    S_IFSOCK,
];

const MODE_PERM_BITS: u32 = 0o644;

/// A syscall whose decision may depend on its mode argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct InspectedArg {
    pub nr: u32,
    pub arg_index: u32,
}

/// One row of the decision matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decision {
    /// Same raw action regardless of arguments.
    Uniform(u32),
    /// Raw action per mode pattern, in [`MODE_PATTERNS`] order.
    ByMode(Vec<(u32, u32)>),
}

/// Evaluates `program` for every syscall number in `0..=max_nr`
/// against the given audit architecture. Numbers in `inspected` are
/// evaluated once per mode pattern (placed in their mode argument,
/// with permission bits mixed in); a row collapses to `Uniform` when
/// every pattern agrees.
pub fn decision_matrix(
    program: &BpfProgram,
    audit_id: u32,
    endianness: Endianness,
    max_nr: i32,
    inspected: &[InspectedArg],
) -> Result<Vec<(i32, Decision)>, VmError> {
    for ia in inspected {
        if ia.arg_index > 5 {
            return Err(VmError::ArgIndexOutOfRange(ia.arg_index));
        }
    }
    let mut out = Vec::with_capacity(max_nr.max(0) as usize + 1);
    for nr in 0..=max_nr {
        let row = match inspected.iter().find(|ia| ia.nr as i64 == nr as i64) {
            Some(ia) => {
                let mut per_mode = Vec::with_capacity(MODE_PATTERNS.len());
                for &pattern in &MODE_PATTERNS {
                    let mut args = [0u64; 6];
                    args[ia.arg_index as usize] = (pattern | MODE_PERM_BITS) as u64;
                    let result = eval(program, &SeccompData::new(nr, audit_id, args), endianness)?;
                    per_mode.push((pattern, result.raw_action));
                }
                if per_mode.iter().all(|&(_, a)| a == per_mode[0].1) {
                    Decision::Uniform(per_mode[0].1)
                } else {
                    Decision::ByMode(per_mode)
                }
            }
            None => {
                let result =
                    eval(program, &SeccompData::new(nr, audit_id, [0; 6]), endianness)?;
                Decision::Uniform(result.raw_action)
            }
        };
        out.push((nr, row));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bpfgen::{
        generate, BpfInsn, FilterAction, SECCOMP_RET_ALLOW, SECCOMP_RET_ERRNO,
    };
    use crate::systable::builtin_table;

    fn x86_64_filter() -> (BpfProgram, u32) {
        let t = builtin_table();
        let arch = t.arch("x86_64").unwrap();
        (generate(t, arch).unwrap(), arch.audit_id)
    }

    #[test]
    fn seccomp_data_layout_little_endian() {
        let d = SeccompData::new(92, 0xC000_003E, [0x1122_3344_5566_7788, 0, 0, 0, 0, 0]);
        let b = d.to_bytes(Endianness::Little);
        assert_eq!(&b[0..4], &[92, 0, 0, 0]);
        assert_eq!(&b[4..8], &[0x3E, 0x00, 0x00, 0xC0]);
        assert_eq!(&b[16..24], &[0x88, 0x77, 0x66, 0x55, 0x44, 0x33, 0x22, 0x11]);
        assert_eq!(&b[24..64], &[0u8; 40]);
    }

    #[test]
    fn seccomp_data_layout_big_endian() {
        let d = SeccompData::new(14, 0x8000_0016, [0, 0x2190, 0, 0, 0, 0]);
        let b = d.to_bytes(Endianness::Big);
        assert_eq!(&b[0..4], &[0, 0, 0, 14]);
        assert_eq!(&b[4..8], &[0x80, 0x00, 0x00, 0x16]);
        // arg1 occupies bytes 24..32; its low word is the back half.
        assert_eq!(&b[24..32], &[0, 0, 0, 0, 0, 0, 0x21, 0x90]);
    }

    #[test]
    fn eval_fakes_unconditional_syscalls() {
        let (p, arch) = x86_64_filter();
        for nr in [92, 93, 94, 260, 105, 116, 126, 246] {
            let r = eval(&p, &SeccompData::new(nr, arch, [0; 6]), Endianness::Little).unwrap();
            assert_eq!(r.raw_action, SECCOMP_RET_ERRNO, "nr {nr}");
        }
    }

    #[test]
    fn eval_allows_everything_else() {
        let (p, arch) = x86_64_filter();
        for nr in [0, 1, 2, 57, 59, 257, 511] {
            let r = eval(&p, &SeccompData::new(nr, arch, [0; 6]), Endianness::Little).unwrap();
            assert_eq!(r.raw_action, SECCOMP_RET_ALLOW, "nr {nr}");
        }
    }

    #[test]
    fn eval_inspects_mknod_mode() {
        let (p, arch) = x86_64_filter();
        let run = |nr: i32, arg_index: usize, mode: u32| {
            let mut args = [0u64; 6];
            args[arg_index] = mode as u64;
            eval(&p, &SeccompData::new(nr, arch, args), Endianness::Little)
                .unwrap()
                .raw_action
        };
        // mknod carries the mode in arg 1, mknodat in arg 2.
        for (nr, idx) in [(133, 1), (259, 2)] {
            assert_eq!(run(nr, idx, S_IFCHR | 0o600), SECCOMP_RET_ERRNO);
            assert_eq!(run(nr, idx, S_IFBLK | 0o600), SECCOMP_RET_ERRNO);
            assert_eq!(run(nr, idx, S_IFIFO | 0o600), SECCOMP_RET_ALLOW);
            assert_eq!(run(nr, idx, S_IFREG | 0o644), SECCOMP_RET_ALLOW);
            assert_eq!(run(nr, idx, 0o600), SECCOMP_RET_ALLOW);
            assert_eq!(run(nr, idx, S_IFSOCK | 0o600), SECCOMP_RET_ALLOW);
        }
    }

    #[test]
    fn eval_allows_foreign_architecture_records() {
        let (p, arch) = x86_64_filter();
        let foreign = SeccompData::new(92, arch ^ 1, [0; 6]);
        let r = eval(&p, &foreign, Endianness::Little).unwrap();
        assert_eq!(r.raw_action, SECCOMP_RET_ALLOW);
        assert_eq!(r.steps, 3, "arch load, compare, early return");
    }

    #[test]
    fn eval_counts_steps_and_stays_bounded() {
        let (p, arch) = x86_64_filter();
        let r = eval(&p, &SeccompData::new(0, arch, [0; 6]), Endianness::Little).unwrap();
        assert!(r.steps > 3 && r.steps <= p.insns.len());
    }

    #[test]
    fn eval_errors_are_distinct() {
        let ret = BpfInsn::stmt(OP_RET_K, SECCOMP_RET_ALLOW);
        let d = SeccompData::new(0, 0, [0; 6]);
        let e = Endianness::Little;

        assert_eq!(
            eval(&BpfProgram { insns: vec![] }, &d, e),
            Err(VmError::EmptyProgram)
        );
        assert_eq!(
            eval(&BpfProgram { insns: vec![BpfInsn::stmt(0x87, 0), ret] }, &d, e),
            Err(VmError::UnsupportedOpcode { pc: 0, code: 0x87 })
        );
        assert_eq!(
            eval(&BpfProgram { insns: vec![BpfInsn::stmt(OP_LD_W_ABS, 64), ret] }, &d, e),
            Err(VmError::LoadOutOfBounds { pc: 0, offset: 64 })
        );
        assert_eq!(
            eval(&BpfProgram { insns: vec![BpfInsn::stmt(OP_LD_W_ABS, 2), ret] }, &d, e),
            Err(VmError::UnalignedLoad { pc: 0, offset: 2 })
        );
        assert_eq!(
            eval(&BpfProgram { insns: vec![BpfInsn::stmt(OP_JA, 5), ret] }, &d, e),
            Err(VmError::JumpOutOfRange { pc: 0, target: 6 })
        );
        assert_eq!(
            eval(&BpfProgram { insns: vec![BpfInsn::stmt(OP_LD_W_ABS, 0)] }, &d, e),
            Err(VmError::FellOffEnd { pc: 1 })
        );
    }

    #[test]
    fn eval_handcrafted_program_steps_exact() {
        let p = BpfProgram {
            insns: vec![
                BpfInsn::stmt(OP_LD_W_ABS, 0),
                BpfInsn::jump(OP_JEQ_K, 7, 1, 0),
                BpfInsn::stmt(OP_RET_K, SECCOMP_RET_ALLOW),
                BpfInsn::stmt(OP_RET_K, SECCOMP_RET_ERRNO),
            ],
        };
        let hit = eval(&p, &SeccompData::new(7, 0, [0; 6]), Endianness::Little).unwrap();
        assert_eq!((hit.raw_action, hit.steps), (SECCOMP_RET_ERRNO, 3));
        let miss = eval(&p, &SeccompData::new(8, 0, [0; 6]), Endianness::Little).unwrap();
        assert_eq!((miss.raw_action, miss.steps), (SECCOMP_RET_ALLOW, 3));
    }

    #[test]
    fn big_endian_filter_reads_big_endian_data() {
        let t = builtin_table();
        let s390x = t.arch("s390x").unwrap();
        let p = generate(t, s390x).unwrap();
        let run = |nr: i32, args: [u64; 6]| {
            eval(&p, &SeccompData::new(nr, s390x.audit_id, args), Endianness::Big)
                .unwrap()
                .raw_action
        };
        assert_eq!(run(212, [0; 6]), SECCOMP_RET_ERRNO, "chown");
        // mknod on s390x is 14, mode in arg 1.
        assert_eq!(run(14, [0, (S_IFBLK | 0o600) as u64, 0, 0, 0, 0]), SECCOMP_RET_ERRNO);
        assert_eq!(run(14, [0, (S_IFIFO | 0o600) as u64, 0, 0, 0, 0]), SECCOMP_RET_ALLOW);
        assert_eq!(run(1, [0; 6]), SECCOMP_RET_ALLOW);
    }

    #[test]
    fn matrix_rows_match_expectations() {
        let (p, arch) = x86_64_filter();
        let inspected = [
            InspectedArg { nr: 133, arg_index: 1 },
            InspectedArg { nr: 259, arg_index: 2 },
        ];
        let matrix = decision_matrix(&p, arch, Endianness::Little, 512, &inspected).unwrap();
        assert_eq!(matrix.len(), 513);

        let row = |nr: i32| &matrix.iter().find(|(n, _)| *n == nr).unwrap().1;
        assert_eq!(*row(92), Decision::Uniform(SECCOMP_RET_ERRNO));
        assert_eq!(*row(0), Decision::Uniform(SECCOMP_RET_ALLOW));
        match row(133) {
            Decision::ByMode(cells) => {
                assert_eq!(cells.len(), 8);
                for &(pattern, action) in cells {
                    let expected = if pattern == S_IFCHR || pattern == S_IFBLK {
                        SECCOMP_RET_ERRNO
                    } else {
                        SECCOMP_RET_ALLOW
                    };
                    assert_eq!(action, expected, "pattern {pattern:#o}");
                }
            }
            other => panic!("mknod row not mode-dependent: {other:?}"),
        }
    }

    #[test]
    fn matrix_rejects_bad_arg_index() {
        let (p, arch) = x86_64_filter();
        let bad = [InspectedArg { nr: 133, arg_index: 6 }];
        assert_eq!(
            decision_matrix(&p, arch, Endianness::Little, 10, &bad),
            Err(VmError::ArgIndexOutOfRange(6))
        );
    }

    /// Non-inspected decisions must not depend on arguments at all:
    /// fuzz random argument vectors against the zero-args result.
    #[test]
    fn non_mode_decisions_ignore_arguments() {
        use rand::{Rng, SeedableRng};
        let (p, arch) = x86_64_filter();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x5eccb9f);
        for _ in 0..2000 {
            let nr = rng.random_range(0..=512);
            if nr == 133 || nr == 259 {
                continue;
            }
            let args: [u64; 6] = rng.random();
            let fuzzed =
                eval(&p, &SeccompData::new(nr, arch, args), Endianness::Little).unwrap();
            let zero = eval(&p, &SeccompData::new(nr, arch, [0; 6]), Endianness::Little).unwrap();
            assert_eq!(fuzzed.raw_action, zero.raw_action, "nr {nr}");
        }
    }

    #[test]
    fn actions_decode_to_filter_actions() {
        let (p, arch) = x86_64_filter();
        let fake = eval(&p, &SeccompData::new(92, arch, [0; 6]), Endianness::Little).unwrap();
        assert_eq!(FilterAction::from_raw(fake.raw_action), Some(FilterAction::FakeSuccess));
        let allow = eval(&p, &SeccompData::new(1, arch, [0; 6]), Endianness::Little).unwrap();
        assert_eq!(FilterAction::from_raw(allow.raw_action), Some(FilterAction::Allow));
    }
}
