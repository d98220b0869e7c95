//! Per-architecture table of the syscalls the filter intercepts.
//!
//! The table is plain data: a list of architectures and a list of
//! syscall specs, each spec carrying one optional syscall number per
//! architecture. Numbers were transcribed from the Linux syscall
//! tables (arch/*/ syscall.tbl and the asm-generic unistd layout) as
//! mirrored by the Rust libc crate, and the host column is
//! cross-checked against live `libc::SYS_*` constants in the tests.
//! Adding or removing an architecture is a data change only.

use std::fmt;
use std::sync::OnceLock;

/// Byte order of an architecture's seccomp data words.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Endianness {
    Little,
    Big,
}

/// One supported architecture.
///
/// `audit_id` is the AUDIT_ARCH_* value the kernel stores in
/// `seccomp_data.arch`. The kernel composes it as
/// `EM_<machine> | 0x8000_0000 (64-bit) | 0x4000_0000 (little-endian)`,
/// so `word_width` and `endianness` are redundant with the id; the
/// table verifier checks they agree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arch {
    pub name: &'static str,
    pub audit_id: u32,
    pub endianness: Endianness,
    /// Pointer width in bits: 32 or 64.
    pub word_width: u8,
}

const AUDIT_ARCH_64BIT: u32 = 0x8000_0000;
const AUDIT_ARCH_LE: u32 = 0x4000_0000;

/// Behavioral class of an intercepted syscall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SyscallClass {
    /// chown family: faked unconditionally.
    Ownership,
    /// setuid/setgid/capset family: faked unconditionally.
    Identity,
    /// mknod/mknodat: faked only for block/char device nodes, which
    /// requires inspecting the mode argument in the filter.
    MknodInspect,
    /// kexec_load: never legitimate during a build, always faked, and
    /// used at startup to prove the filter is active.
    SelfTest,
}

impl SyscallClass {
    pub const ALL: [SyscallClass; 4] = [
        SyscallClass::Ownership,
        SyscallClass::Identity,
        SyscallClass::MknodInspect,
        SyscallClass::SelfTest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyscallClass::Ownership => "ownership",
            SyscallClass::Identity => "identity",
            SyscallClass::MknodInspect => "mknod-inspect",
            SyscallClass::SelfTest => "self-test",
        }
    }
}

impl fmt::Display for SyscallClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One intercepted syscall: its name, class, and number on each
/// architecture in [`SyscallTable::archs`] order. `None` means the
/// architecture does not provide the syscall (it is never 0).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyscallSpec {
    pub name: &'static str,
    pub class: SyscallClass,
    pub numbers: Vec<Option<u32>>,
}

/// Result of looking up a syscall number against the table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// The number belongs to an intercepted syscall of this class.
    Filtered(SyscallClass),
    /// The number is not in the table; the filter allows it through.
    NotFiltered,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TableError {
    #[error("unknown architecture {0:?}")]
    UnknownArch(String),
}

/// A violation found by [`SyscallTable::verify`]. Each names the
/// arch/spec involved and the rule broken.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TableViolation {
    SpecCount { expected: usize, actual: usize },
    ClassCount { class: SyscallClass, expected: usize, actual: usize },
    DuplicateName { name: &'static str },
    DuplicateNumber { arch: &'static str, nr: u32, first: &'static str, second: &'static str },
    DuplicateAuditId { first: &'static str, second: &'static str },
    ArchFlagMismatch { arch: &'static str, detail: String },
    NumbersLen { spec: &'static str, expected: usize, actual: usize },
    ZeroNumber { spec: &'static str, arch: &'static str },
    SelfTestNotKexec { spec: &'static str },
}

impl fmt::Display for TableViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TableViolation::SpecCount { expected, actual } => {
                write!(f, "table has {actual} specs, expected {expected}")
            }
            TableViolation::ClassCount { class, expected, actual } => {
                write!(f, "class {class} has {actual} specs, expected {expected}")
            }
            TableViolation::DuplicateName { name } => {
                write!(f, "spec name {name} appears more than once")
            }
            TableViolation::DuplicateNumber { arch, nr, first, second } => {
                write!(f, "{arch}: number {nr} assigned to both {first} and {second}")
            }
            TableViolation::DuplicateAuditId { first, second } => {
                write!(f, "archs {first} and {second} share an audit id")
            }
            TableViolation::ArchFlagMismatch { arch, detail } => {
                write!(f, "{arch}: {detail}")
            }
            TableViolation::NumbersLen { spec, expected, actual } => {
                write!(f, "{spec}: {actual} number columns, expected {expected}")
            }
            TableViolation::ZeroNumber { spec, arch } => {
                write!(f, "{spec} on {arch}: number 0 (absence must be None, and no intercepted syscall is number 0 on any Linux arch)")
            }
            TableViolation::SelfTestNotKexec { spec } => {
                write!(f, "self-test class contains {spec}, expected exactly kexec_load")
            }
        }
    }
}

/// The intercepted-syscall table: architectures plus specs.
/// Immutable after construction and safe to share across threads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyscallTable {
    pub archs: Vec<Arch>,
    pub specs: Vec<SyscallSpec>,
}

pub const SPEC_COUNT: usize = 29;
pub const OWNERSHIP_COUNT: usize = 7;
pub const IDENTITY_COUNT: usize = 19;
pub const MKNOD_COUNT: usize = 2;
pub const SELFTEST_COUNT: usize = 1;

impl SyscallTable {
    /// Looks up an architecture by name.
    pub fn arch(&self, name: &str) -> Option<&Arch> {
        self.archs.iter().find(|a| a.name == name)
    }

    /// Index of `arch` within `self.archs`, by name.
    pub fn arch_index(&self, arch: &Arch) -> Option<usize> {
        self.archs.iter().position(|a| a.name == arch.name)
    }

    /// Syscall number of `spec` on `arch`, if the arch provides it.
    pub fn number(&self, spec: &SyscallSpec, arch: &Arch) -> Option<u32> {
        let idx = self.arch_index(arch)?;
        spec.numbers.get(idx).copied().flatten()
    }

    /// All (name, number) pairs of a given class present on `arch`,
    /// in table order.
    pub fn numbers_for_class(&self, arch: &Arch, class: SyscallClass) -> Vec<(&'static str, u32)> {
        let Some(idx) = self.arch_index(arch) else {
            return Vec::new();
        };
        self.specs
            .iter()
            .filter(|s| s.class == class)
            .filter_map(|s| s.numbers.get(idx).copied().flatten().map(|n| (s.name, n)))
            .collect()
    }

    /// Classifies a raw syscall number for `arch`.
    ///
    /// Negative numbers (seccomp reports the number as a signed 32-bit
    /// value) never match. Unknown architectures are an error, not
    /// `NotFiltered`, so a misconfigured caller cannot silently build
    /// an allow-everything filter.
    pub fn classify(&self, arch: &Arch, nr: i32) -> Result<Classification, TableError> {
        let idx = self
            .arch_index(arch)
            .ok_or_else(|| TableError::UnknownArch(arch.name.to_string()))?;
        if nr < 0 {
            return Ok(Classification::NotFiltered);
        }
        let nr = nr as u32;
        for spec in &self.specs {
            if spec.numbers.get(idx).copied().flatten() == Some(nr) {
                return Ok(Classification::Filtered(spec.class));
            }
        }
        Ok(Classification::NotFiltered)
    }

    /// Checks every table invariant and returns all violations found.
    /// An empty result is the precondition for filter generation.
    pub fn verify(&self) -> Vec<TableViolation> {
        let mut out = Vec::new();

        if self.specs.len() != SPEC_COUNT {
            out.push(TableViolation::SpecCount { expected: SPEC_COUNT, actual: self.specs.len() });
        }
        for (class, expected) in [
            (SyscallClass::Ownership, OWNERSHIP_COUNT),
            (SyscallClass::Identity, IDENTITY_COUNT),
            (SyscallClass::MknodInspect, MKNOD_COUNT),
            (SyscallClass::SelfTest, SELFTEST_COUNT),
        ] {
            let actual = self.specs.iter().filter(|s| s.class == class).count();
            if actual != expected {
                out.push(TableViolation::ClassCount { class, expected, actual });
            }
        }

        for (i, spec) in self.specs.iter().enumerate() {
            if self.specs[..i].iter().any(|s| s.name == spec.name) {
                out.push(TableViolation::DuplicateName { name: spec.name });
            }
            if spec.numbers.len() != self.archs.len() {
                out.push(TableViolation::NumbersLen {
                    spec: spec.name,
                    expected: self.archs.len(),
                    actual: spec.numbers.len(),
                });
            }
            if spec.class == SyscallClass::SelfTest && spec.name != "kexec_load" {
                out.push(TableViolation::SelfTestNotKexec { spec: spec.name });
            }
        }

        for (i, arch) in self.archs.iter().enumerate() {
            if let Some(other) = self.archs[..i].iter().find(|a| a.audit_id == arch.audit_id) {
                out.push(TableViolation::DuplicateAuditId { first: other.name, second: arch.name });
            }
            let want_64 = arch.audit_id & AUDIT_ARCH_64BIT != 0;
            let is_64 = arch.word_width == 64;
            if want_64 != is_64 {
                out.push(TableViolation::ArchFlagMismatch {
                    arch: arch.name,
                    detail: format!(
                        "word_width {} contradicts audit id {:#010x}",
                        arch.word_width, arch.audit_id
                    ),
                });
            }
            let want_le = arch.audit_id & AUDIT_ARCH_LE != 0;
            let is_le = arch.endianness == Endianness::Little;
            if want_le != is_le {
                out.push(TableViolation::ArchFlagMismatch {
                    arch: arch.name,
                    detail: format!(
                        "endianness {:?} contradicts audit id {:#010x}",
                        arch.endianness, arch.audit_id
                    ),
                });
            }

            let mut seen: Vec<(u32, &'static str)> = Vec::new();
            for spec in &self.specs {
                let Some(nr) = spec.numbers.get(i).copied().flatten() else {
                    continue;
                };
                if nr == 0 {
                    out.push(TableViolation::ZeroNumber { spec: spec.name, arch: arch.name });
                }
                if let Some(&(_, first)) = seen.iter().find(|&&(n, _)| n == nr) {
                    out.push(TableViolation::DuplicateNumber {
                        arch: arch.name,
                        nr,
                        first,
                        second: spec.name,
                    });
                } else {
                    seen.push((nr, spec.name));
                }
            }
        }

        out
    }
}

/// The built-in table. Constructed once; `&'static` thereafter.
pub fn builtin_table() -> &'static SyscallTable {
    static TABLE: OnceLock<SyscallTable> = OnceLock::new();
    TABLE.get_or_init(build_table)
}

fn build_table() -> SyscallTable {
    use SyscallClass::{Identity, MknodInspect, Ownership, SelfTest};

    let archs = vec![
        Arch { name: "x86_64", audit_id: 0xC000_003E, endianness: Endianness::Little, word_width: 64 },
        Arch { name: "aarch64", audit_id: 0xC000_00B7, endianness: Endianness::Little, word_width: 64 },
        Arch { name: "arm", audit_id: 0x4000_0028, endianness: Endianness::Little, word_width: 32 },
        Arch { name: "ppc64le", audit_id: 0xC000_0015, endianness: Endianness::Little, word_width: 64 },
        Arch { name: "riscv64", audit_id: 0xC000_00F3, endianness: Endianness::Little, word_width: 64 },
        Arch { name: "s390x", audit_id: 0x8000_0016, endianness: Endianness::Big, word_width: 64 },
    ];

    const NA: Option<u32> = None;
    fn n(nr: u32) -> Option<u32> {
        Some(nr)
    }

    // Columns follow `archs` order: x86_64, aarch64, arm, ppc64le, riscv64, s390x.
    // aarch64 and riscv64 use the asm-generic layout, which dropped the
    // non-at ownership calls (no chown/lchown/mknod) and all legacy
    // 16-bit-uid variants; the *32 rows exist only on 32-bit arm, where
    // the bare names are the legacy 16-bit-uid calls.
    let rows: Vec<(&'static str, SyscallClass, [Option<u32>; 6])> = vec![
        ("chown", Ownership, [n(92), NA, n(182), n(181), NA, n(212)]),
        ("fchown", Ownership, [n(93), n(55), n(95), n(95), n(55), n(207)]),
        ("lchown", Ownership, [n(94), NA, n(16), n(16), NA, n(198)]),
        ("fchownat", Ownership, [n(260), n(54), n(325), n(289), n(54), n(291)]),
        ("chown32", Ownership, [NA, NA, n(212), NA, NA, NA]),
        ("fchown32", Ownership, [NA, NA, n(207), NA, NA, NA]),
        ("lchown32", Ownership, [NA, NA, n(198), NA, NA, NA]),
        ("setuid", Identity, [n(105), n(146), n(23), n(23), n(146), n(213)]),
        ("setgid", Identity, [n(106), n(144), n(46), n(46), n(144), n(214)]),
        ("setreuid", Identity, [n(113), n(145), n(70), n(70), n(145), n(203)]),
        ("setregid", Identity, [n(114), n(143), n(71), n(71), n(143), n(204)]),
        ("setresuid", Identity, [n(117), n(147), n(164), n(164), n(147), n(208)]),
        ("setresgid", Identity, [n(119), n(149), n(170), n(169), n(149), n(210)]),
        ("setfsuid", Identity, [n(122), n(151), n(138), n(138), n(151), n(215)]),
        ("setfsgid", Identity, [n(123), n(152), n(139), n(139), n(152), n(216)]),
        ("setgroups", Identity, [n(116), n(159), n(81), n(81), n(159), n(206)]),
        ("capset", Identity, [n(126), n(91), n(185), n(184), n(91), n(185)]),
        ("setuid32", Identity, [NA, NA, n(213), NA, NA, NA]),
        ("setgid32", Identity, [NA, NA, n(214), NA, NA, NA]),
        ("setreuid32", Identity, [NA, NA, n(203), NA, NA, NA]),
        ("setregid32", Identity, [NA, NA, n(204), NA, NA, NA]),
        ("setresuid32", Identity, [NA, NA, n(208), NA, NA, NA]),
        ("setresgid32", Identity, [NA, NA, n(210), NA, NA, NA]),
        ("setfsuid32", Identity, [NA, NA, n(215), NA, NA, NA]),
        ("setfsgid32", Identity, [NA, NA, n(216), NA, NA, NA]),
        ("setgroups32", Identity, [NA, NA, n(206), NA, NA, NA]),
        ("mknod", MknodInspect, [n(133), NA, n(14), n(14), NA, n(14)]),
        ("mknodat", MknodInspect, [n(259), n(33), n(324), n(288), n(33), n(290)]),
        ("kexec_load", SelfTest, [n(246), n(104), n(347), n(268), n(104), n(277)]),
    ];

    let specs = rows
        .into_iter()
        .map(|(name, class, numbers)| SyscallSpec { name, class, numbers: numbers.to_vec() })
        .collect();

    SyscallTable { archs, specs }
}

/// The table entry matching the compilation target, if the target is
/// one of the supported architectures.
pub fn host_arch() -> Option<&'static Arch> {
    let name = if cfg!(target_arch = "x86_64") {
        "x86_64"
    } else if cfg!(target_arch = "aarch64") {
        "aarch64"
    } else if cfg!(target_arch = "arm") {
        "arm"
    } else if cfg!(all(target_arch = "powerpc64", target_endian = "little")) {
        "ppc64le"
    } else if cfg!(target_arch = "riscv64") {
        "riscv64"
    } else if cfg!(target_arch = "s390x") {
        "s390x"
    } else {
        return None;
    };
    builtin_table().arch(name)
}
