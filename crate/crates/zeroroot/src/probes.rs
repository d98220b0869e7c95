//! Behavioral probes.
//!
//! Each probe invokes intercepted syscalls raw, by the numbers in the
//! built-in table, then verifies the observable outcome through
//! independent reads (stat, getresuid, /proc/self/status, capget).
//! Under an active filter every probe passes: the calls return 0 and
//! nothing changes. Without the filter the discriminating probes fail,
//! which is exactly what `probe --no-filter` demonstrates.
//!
//! Probes run inside the container the `probe` subcommand launches, so
//! even the unfiltered calls are harmless: the ids involved are
//! unmapped in the user namespace, and the one call that would succeed
//! and bite (capset) runs in a fork-isolated child.

use serde::Serialize;

use crate::systable::SyscallClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeReport {
    pub name: &'static str,
    pub expected: String,
    pub observed: String,
    pub verdict: Verdict,
}

impl ProbeReport {
    fn pass(name: &'static str, expected: impl Into<String>, observed: impl Into<String>) -> Self {
        ProbeReport { name, expected: expected.into(), observed: observed.into(), verdict: Verdict::Pass }
    }

    fn fail(name: &'static str, expected: impl Into<String>, observed: impl Into<String>) -> Self {
        ProbeReport { name, expected: expected.into(), observed: observed.into(), verdict: Verdict::Fail }
    }

    fn skip(name: &'static str, expected: impl Into<String>, reason: impl Into<String>) -> Self {
        ProbeReport { name, expected: expected.into(), observed: reason.into(), verdict: Verdict::Skip }
    }
}

/// Probe names in report order, with the syscall classes each one
/// exercises. The coverage test keeps this in step with the table.
pub const PROBE_COVERAGE: &[(&str, &[SyscallClass])] = &[
    ("chown", &[SyscallClass::Ownership]),
    ("identity", &[SyscallClass::Identity]),
    ("mknod-dev", &[SyscallClass::MknodInspect]),
    ("mknod-fifo", &[SyscallClass::MknodInspect]),
    ("mknod-regular", &[SyscallClass::MknodInspect]),
    ("selftest", &[SyscallClass::SelfTest]),
    ("inheritance", &[SyscallClass::Ownership]),
];

/// 0 when nothing failed (skips are fine), 1 otherwise.
pub fn exit_code(reports: &[ProbeReport]) -> i32 {
    if reports.iter().any(|r| r.verdict == Verdict::Fail) {
        1
    } else {
        0
    }
}

/// TAP-style rendering: a plan line, then one result line per probe,
/// with expected/observed diagnostics for failures.
pub fn render_tap(reports: &[ProbeReport]) -> String {
    let mut out = format!("1..{}\n", reports.len());
    for (i, r) in reports.iter().enumerate() {
        let n = i + 1;
        match r.verdict {
            Verdict::Pass => out.push_str(&format!("ok {n} - {}\n", r.name)),
            Verdict::Skip => out.push_str(&format!("ok {n} - {} # SKIP {}\n", r.name, r.observed)),
            Verdict::Fail => {
                out.push_str(&format!("not ok {n} - {}\n", r.name));
                out.push_str(&format!("#   expected: {}\n", r.expected));
                out.push_str(&format!("#   observed: {}\n", r.observed));
            }
        }
    }
    out
}

pub fn render_json(reports: &[ProbeReport]) -> String {
    let mut s = serde_json::to_string_pretty(reports).expect("reports serialize");
    s.push('\n');
    s
}

#[cfg(target_os = "linux")]
mod imp {
    use super::*;
    use std::ffi::CString;
    use std::fs;
    use std::os::unix::ffi::OsStrExt;
    use std::os::unix::fs::{FileTypeExt, MetadataExt};
    use std::path::{Path, PathBuf};

    use crate::systable::{builtin_table, host_arch, Arch, SyscallClass, SyscallTable};

    // Ids that are never mapped inside the probe's user namespace.
    const PROBE_UID: usize = 7001;
    const PROBE_GID: usize = 7002;

    unsafe fn raw(nr: u32, args: [usize; 5]) -> i64 {
        libc::syscall(
            nr as libc::c_long,
            args[0],
            args[1],
            args[2],
            args[3],
            args[4],
        ) as i64
    }

    fn errno() -> String {
        std::io::Error::last_os_error().to_string()
    }

    fn c_path(path: &Path) -> CString {
        CString::new(path.as_os_str().as_bytes()).expect("probe paths contain no NUL")
    }

    fn owner(path: &Path) -> std::io::Result<(u32, u32)> {
        let md = fs::metadata(path)?;
        Ok((md.uid(), md.gid()))
    }

    struct Ctx<'t> {
        table: &'t SyscallTable,
        arch: &'t Arch,
        dir: PathBuf,
    }

    impl Ctx<'_> {
        fn class(&self, class: SyscallClass) -> Vec<(&'static str, u32)> {
            self.table.numbers_for_class(self.arch, class)
        }
    }

    fn probe_chown(ctx: &Ctx) -> ProbeReport {
        let name = "chown";
        let expected =
            "every chown-family syscall returns 0 and ownership does not change".to_string();
        let file = ctx.dir.join("chown-target");
        if let Err(e) = fs::write(&file, "x") {
            return ProbeReport::skip(name, expected, format!("cannot create probe file: {e}"));
        }
        let path = c_path(&file);
        let before = match owner(&file) {
            Ok(o) => o,
            Err(e) => return ProbeReport::skip(name, expected, format!("stat: {e}")),
        };

        let mut failures = Vec::new();
        let mut calls = 0;
        for (sc, nr) in ctx.class(SyscallClass::Ownership) {
            let rc = match sc {
                "chown" | "chown32" | "lchown" | "lchown32" => unsafe {
                    raw(nr, [path.as_ptr() as usize, PROBE_UID, PROBE_GID, 0, 0])
                },
                "fchown" | "fchown32" => {
                    let f = match fs::File::open(&file) {
                        Ok(f) => f,
                        Err(e) => {
                            failures.push(format!("{sc}: open: {e}"));
                            continue;
                        }
                    };
                    use std::os::unix::io::AsRawFd;
                    unsafe { raw(nr, [f.as_raw_fd() as usize, PROBE_UID, PROBE_GID, 0, 0]) }
                }
                "fchownat" => unsafe {
                    raw(
                        nr,
                        [
                            libc::AT_FDCWD as usize,
                            path.as_ptr() as usize,
                            PROBE_UID,
                            PROBE_GID,
                            0,
                        ],
                    )
                },
                other => {
                    failures.push(format!("{other}: no invocation shape"));
                    continue;
                }
            };
            calls += 1;
            if rc != 0 {
                failures.push(format!("{sc}: rc={rc} ({})", errno()));
            }
        }

        match owner(&file) {
            Ok(after) if after != before => failures.push(format!(
                "ownership changed from {}:{} to {}:{}",
                before.0, before.1, after.0, after.1
            )),
            Err(e) => failures.push(format!("re-stat: {e}")),
            _ => {}
        }

        if failures.is_empty() {
            ProbeReport::pass(name, expected, format!("ok ({calls} calls)"))
        } else {
            ProbeReport::fail(name, expected, failures.join("; "))
        }
    }

    fn read_status_ids() -> Option<([u32; 4], [u32; 4])> {
        let status = fs::read_to_string("/proc/self/status").ok()?;
        let mut uid = None;
        let mut gid = None;
        for line in status.lines() {
            let parse = |prefix: &str| -> Option<[u32; 4]> {
                let rest = line.strip_prefix(prefix)?;
                let mut it = rest.split_whitespace().map(|f| f.parse().ok());
                Some([it.next()??, it.next()??, it.next()??, it.next()??])
            };
            if let Some(v) = parse("Uid:") {
                uid = Some(v);
            } else if let Some(v) = parse("Gid:") {
                gid = Some(v);
            }
        }
        Some((uid?, gid?))
    }

    fn current_groups() -> Vec<libc::gid_t> {
        let n = unsafe { libc::getgroups(0, std::ptr::null_mut()) };
        if n <= 0 {
            return Vec::new();
        }
        let mut groups = vec![0 as libc::gid_t; n as usize];
        let n = unsafe { libc::getgroups(groups.len() as libc::c_int, groups.as_mut_ptr()) };
        groups.truncate(n.max(0) as usize);
        groups
    }

    const CAP_VERSION_3: u32 = 0x2008_0522;

    #[repr(C)]
    struct CapHeader {
        version: u32,
        pid: libc::c_int,
    }

    #[repr(C)]
    #[derive(Clone, Copy, PartialEq, Eq, Default)]
    struct CapData {
        effective: u32,
        permitted: u32,
        inheritable: u32,
    }

    /// capset genuinely drops capabilities when it is not intercepted,
    /// so it runs in a throwaway child; the exit code says whether the
    /// call returned 0 and whether capabilities survived.
    fn capset_isolated(nr: u32) -> Result<(), String> {
        let pid = unsafe { libc::fork() };
        if pid < 0 {
            return Err(format!("fork: {}", errno()));
        }
        if pid == 0 {
            let mut header = CapHeader { version: CAP_VERSION_3, pid: 0 };
            let mut before = [CapData::default(); 2];
            let rc = unsafe {
                libc::syscall(libc::SYS_capget, &mut header as *mut _, before.as_mut_ptr())
            };
            if rc != 0 {
                std::process::exit(3);
            }
            let cleared = [CapData::default(); 2];
            let rc = unsafe {
                raw(nr, [&header as *const _ as usize, cleared.as_ptr() as usize, 0, 0, 0])
            };
            if rc != 0 {
                std::process::exit(1);
            }
            let mut after = [CapData::default(); 2];
            let rc = unsafe {
                libc::syscall(libc::SYS_capget, &mut header as *mut _, after.as_mut_ptr())
            };
            if rc != 0 || after != before {
                std::process::exit(2);
            }
            std::process::exit(0);
        }
        let mut status = 0;
        if unsafe { libc::waitpid(pid, &mut status, 0) } != pid {
            return Err(format!("waitpid: {}", errno()));
        }
        match if libc::WIFEXITED(status) { libc::WEXITSTATUS(status) } else { -1 } {
            0 => Ok(()),
            1 => Err("capset: nonzero return".to_string()),
            2 => Err("capset: capabilities changed".to_string()),
            3 => Err("capget unavailable".to_string()),
            c => Err(format!("capset child exited {c}")),
        }
    }

    fn probe_identity(ctx: &Ctx) -> ProbeReport {
        let name = "identity";
        let expected =
            "every identity syscall returns 0 and uids/gids/groups/caps do not change".to_string();

        let mut base_resuid = [0 as libc::uid_t; 3];
        let mut base_resgid = [0 as libc::gid_t; 3];
        unsafe {
            libc::getresuid(&mut base_resuid[0], &mut base_resuid[1], &mut base_resuid[2]);
            libc::getresgid(&mut base_resgid[0], &mut base_resgid[1], &mut base_resgid[2]);
        }
        let base_status = read_status_ids();
        let base_groups = current_groups();

        let mut failures = Vec::new();
        let mut calls = 0;
        // Stable array kept alive across the setgroups calls. The
        // legacy 16-bit variants on 32-bit arms read u16 entries.
        let groups32: [u32; 3] = [7, 8, 9];
        let groups16: [u16; 3] = [7, 8, 9];
        let legacy_layout = ctx.arch.name == "arm";

        for (sc, nr) in ctx.class(SyscallClass::Identity) {
            let rc_matters: bool;
            let rc = match sc {
                "setuid" | "setuid32" => unsafe {
                    rc_matters = true;
                    raw(nr, [PROBE_UID, 0, 0, 0, 0])
                },
                "setgid" | "setgid32" => unsafe {
                    rc_matters = true;
                    raw(nr, [PROBE_GID, 0, 0, 0, 0])
                },
                "setreuid" | "setreuid32" => unsafe {
                    rc_matters = true;
                    raw(nr, [PROBE_UID, PROBE_UID, 0, 0, 0])
                },
                "setregid" | "setregid32" => unsafe {
                    rc_matters = true;
                    raw(nr, [PROBE_GID, PROBE_GID, 0, 0, 0])
                },
                "setresuid" | "setresuid32" => unsafe {
                    rc_matters = true;
                    raw(nr, [PROBE_UID, PROBE_UID, PROBE_UID, 0, 0])
                },
                "setresgid" | "setresgid32" => unsafe {
                    rc_matters = true;
                    raw(nr, [PROBE_GID, PROBE_GID, PROBE_GID, 0, 0])
                },
                // setfsuid/setfsgid report the previous id, not an
                // error; only the state check can judge them.
                "setfsuid" | "setfsuid32" => unsafe {
                    rc_matters = false;
                    raw(nr, [PROBE_UID, 0, 0, 0, 0])
                },
                "setfsgid" | "setfsgid32" => unsafe {
                    rc_matters = false;
                    raw(nr, [PROBE_GID, 0, 0, 0, 0])
                },
                "setgroups" | "setgroups32" => unsafe {
                    rc_matters = true;
                    let ptr = if sc == "setgroups" && legacy_layout {
                        groups16.as_ptr() as usize
                    } else {
                        groups32.as_ptr() as usize
                    };
                    raw(nr, [3, ptr, 0, 0, 0])
                },
                "capset" => {
                    calls += 1;
                    if let Err(e) = capset_isolated(nr) {
                        failures.push(e);
                    }
                    continue;
                }
                other => {
                    failures.push(format!("{other}: no invocation shape"));
                    continue;
                }
            };
            calls += 1;
            if rc_matters && rc != 0 {
                failures.push(format!("{sc}: rc={rc} ({})", errno()));
            }
        }

        let mut resuid = [0 as libc::uid_t; 3];
        let mut resgid = [0 as libc::gid_t; 3];
        unsafe {
            libc::getresuid(&mut resuid[0], &mut resuid[1], &mut resuid[2]);
            libc::getresgid(&mut resgid[0], &mut resgid[1], &mut resgid[2]);
        }
        if resuid != base_resuid {
            failures.push(format!("resuid changed {base_resuid:?} -> {resuid:?}"));
        }
        if resgid != base_resgid {
            failures.push(format!("resgid changed {base_resgid:?} -> {resgid:?}"));
        }
        match (base_status, read_status_ids()) {
            (Some(before), Some(after)) if before != after => {
                failures.push(format!("status ids changed {before:?} -> {after:?}"));
            }
            _ => {}
        }
        if current_groups() != base_groups {
            failures.push("supplementary groups changed".to_string());
        }

        if failures.is_empty() {
            ProbeReport::pass(name, expected, format!("ok ({calls} calls)"))
        } else {
            ProbeReport::fail(name, expected, failures.join("; "))
        }
    }

    enum MknodKind {
        Device,
        Fifo,
        Regular,
    }

    fn probe_mknod(ctx: &Ctx, name: &'static str, kind: MknodKind) -> ProbeReport {
        use crate::bpfgen::{S_IFBLK, S_IFCHR, S_IFIFO};

        let expected = match kind {
            MknodKind::Device => {
                "mknod of char/block devices returns 0 and creates nothing".to_string()
            }
            MknodKind::Fifo => "mknod of a fifo passes through and creates it".to_string(),
            MknodKind::Regular => {
                "mknod of a regular file passes through and creates it".to_string()
            }
        };
        let variants: &[(u32, libc::dev_t)] = match kind {
            MknodKind::Device => &[
                (S_IFCHR | 0o600, libc::makedev(1, 3)),
                (S_IFBLK | 0o600, libc::makedev(7, 0)),
            ],
            MknodKind::Fifo => &[(S_IFIFO | 0o600, 0)],
            MknodKind::Regular => &[(0o600, 0)],
        };

        let mut failures = Vec::new();
        let mut calls = 0;
        for (sc, nr) in ctx.class(SyscallClass::MknodInspect) {
            for &(mode, dev) in variants {
                let node = ctx.dir.join(format!("{name}-{sc}-{mode:o}"));
                let path = c_path(&node);
                let rc = match sc {
                    "mknod" => unsafe {
                        raw(nr, [path.as_ptr() as usize, mode as usize, dev as usize, 0, 0])
                    },
                    "mknodat" => unsafe {
                        raw(
                            nr,
                            [
                                libc::AT_FDCWD as usize,
                                path.as_ptr() as usize,
                                mode as usize,
                                dev as usize,
                                0,
                            ],
                        )
                    },
                    other => {
                        failures.push(format!("{other}: no invocation shape"));
                        continue;
                    }
                };
                calls += 1;
                if rc != 0 {
                    failures.push(format!("{sc} mode {mode:o}: rc={rc} ({})", errno()));
                    continue;
                }
                let created = fs::symlink_metadata(&node);
                match kind {
                    MknodKind::Device => {
                        if created.is_ok() {
                            failures.push(format!("{sc} mode {mode:o}: device node appeared"));
                            let _ = fs::remove_file(&node);
                        }
                    }
                    MknodKind::Fifo => match created {
                        Ok(md) if md.file_type().is_fifo() => {
                            let _ = fs::remove_file(&node);
                        }
                        Ok(md) => {
                            failures.push(format!("{sc}: created {:?}", md.file_type()));
                            let _ = fs::remove_file(&node);
                        }
                        Err(e) => failures.push(format!("{sc}: fifo not created: {e}")),
                    },
                    MknodKind::Regular => match created {
                        Ok(md) if md.file_type().is_file() => {
                            let _ = fs::remove_file(&node);
                        }
                        Ok(md) => {
                            failures.push(format!("{sc}: created {:?}", md.file_type()));
                            let _ = fs::remove_file(&node);
                        }
                        Err(e) => failures.push(format!("{sc}: file not created: {e}")),
                    },
                }
            }
        }

        if calls == 0 {
            ProbeReport::skip(name, expected, "no mknod-family syscall on this architecture")
        } else if failures.is_empty() {
            ProbeReport::pass(name, expected, format!("ok ({calls} calls)"))
        } else {
            ProbeReport::fail(name, expected, failures.join("; "))
        }
    }

    fn selftest_nr(ctx: &Ctx) -> Option<u32> {
        ctx.class(SyscallClass::SelfTest).first().map(|&(_, nr)| nr)
    }

    fn probe_selftest(ctx: &Ctx) -> ProbeReport {
        let name = "selftest";
        let expected = "kexec_load returns 0 (only interception can make it)".to_string();
        let Some(nr) = selftest_nr(ctx) else {
            return ProbeReport::skip(name, expected, "kexec_load not in table here");
        };
        let rc = unsafe { raw(nr, [0, 0, 0, 0, 0]) };
        if rc == 0 {
            ProbeReport::pass(name, expected, "rc=0")
        } else {
            ProbeReport::fail(name, expected, format!("rc={rc} ({})", errno()))
        }
    }

    /// One compact ownership check used by the inheritance probe.
    fn chown_check(ctx: &Ctx, tag: &str) -> Result<(), String> {
        let file = ctx.dir.join(format!("inherit-{tag}"));
        fs::write(&file, "x").map_err(|e| format!("create: {e}"))?;
        let (_, nr) = ctx
            .class(SyscallClass::Ownership)
            .into_iter()
            .find(|&(sc, _)| sc == "fchownat")
            .ok_or("fchownat missing")?;
        let path = c_path(&file);
        let before = owner(&file).map_err(|e| e.to_string())?;
        let rc = unsafe {
            raw(
                nr,
                [libc::AT_FDCWD as usize, path.as_ptr() as usize, PROBE_UID, PROBE_GID, 0],
            )
        };
        if rc != 0 {
            return Err(format!("fchownat rc={rc} ({})", errno()));
        }
        let after = owner(&file).map_err(|e| e.to_string())?;
        if after != before {
            return Err("ownership changed".to_string());
        }
        Ok(())
    }

    /// The filter must ride across fork into children and
    /// grandchildren; each generation re-runs the ownership check.
    fn probe_inheritance(ctx: &Ctx) -> ProbeReport {
        let name = "inheritance";
        let expected = "children and grandchildren inherit interception".to_string();

        let pid = unsafe { libc::fork() };
        if pid < 0 {
            return ProbeReport::skip(name, expected, format!("fork: {}", errno()));
        }
        if pid == 0 {
            let mut bits = 0;
            if chown_check(ctx, "child").is_err() {
                bits |= 1;
            }
            let gpid = unsafe { libc::fork() };
            if gpid < 0 {
                bits |= 4;
            } else if gpid == 0 {
                std::process::exit(if chown_check(ctx, "grandchild").is_ok() { 0 } else { 1 });
            } else {
                let mut status = 0;
                if unsafe { libc::waitpid(gpid, &mut status, 0) } != gpid
                    || !libc::WIFEXITED(status)
                    || libc::WEXITSTATUS(status) != 0
                {
                    bits |= 2;
                }
            }
            std::process::exit(bits);
        }

        let mut status = 0;
        if unsafe { libc::waitpid(pid, &mut status, 0) } != pid {
            return ProbeReport::skip(name, expected, format!("waitpid: {}", errno()));
        }
        let bits = if libc::WIFEXITED(status) { libc::WEXITSTATUS(status) } else { -1 };
        match bits {
            0 => ProbeReport::pass(name, expected, "child and grandchild both intercepted"),
            -1 => ProbeReport::skip(name, expected, "probe child died abnormally"),
            b => {
                let mut parts = Vec::new();
                if b & 1 != 0 {
                    parts.push("child check failed");
                }
                if b & 2 != 0 {
                    parts.push("grandchild check failed");
                }
                if b & 4 != 0 {
                    parts.push("grandchild fork failed");
                }
                ProbeReport::fail(name, expected, parts.join("; "))
            }
        }
    }

    pub fn run_all() -> Vec<ProbeReport> {
        let table = builtin_table();
        let Some(arch) = host_arch() else {
            return PROBE_COVERAGE
                .iter()
                .map(|&(name, _)| {
                    ProbeReport::skip(name, "host architecture in table", "unsupported host")
                })
                .collect();
        };
        let dir = std::env::temp_dir().join(format!("zeroroot-probe-{}", std::process::id()));
        if let Err(e) = fs::create_dir_all(&dir) {
            return PROBE_COVERAGE
                .iter()
                .map(|&(name, _)| {
                    ProbeReport::skip(name, "writable scratch directory", format!("mkdir: {e}"))
                })
                .collect();
        }
        let ctx = Ctx { table, arch, dir };

        let reports = vec![
            probe_chown(&ctx),
            probe_identity(&ctx),
            probe_mknod(&ctx, "mknod-dev", MknodKind::Device),
            probe_mknod(&ctx, "mknod-fifo", MknodKind::Fifo),
            probe_mknod(&ctx, "mknod-regular", MknodKind::Regular),
            probe_selftest(&ctx),
            probe_inheritance(&ctx),
        ];
        let _ = fs::remove_dir_all(&ctx.dir);
        reports
    }
}

#[cfg(target_os = "linux")]
pub use imp::run_all;

#[cfg(not(target_os = "linux"))]
pub fn run_all() -> Vec<ProbeReport> {
    PROBE_COVERAGE
        .iter()
        .map(|&(name, _)| ProbeReport {
            name,
            expected: "Linux host".to_string(),
            observed: "probes require Linux".to_string(),
            verdict: Verdict::Skip,
        })
        .collect()
}
