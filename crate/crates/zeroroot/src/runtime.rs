//! Container setup and launch.
//!
//! A launch forks, and the child performs every process-mutating step
//! in order: single-thread check, user+mount namespace creation and
//! id mapping, optional rootfs pivot, seccomp filter install, filter
//! self-test, exec. The child reports progress over a CLOEXEC pipe
//! using one-letter line records (`W` warning, `S` self-test status,
//! `E` fatal stage error), so the parent can assemble a
//! [`ContainerStatus`] or a stage-tagged error without parsing the
//! payload command's own output. A successful exec closes the pipe,
//! which is the parent's signal that setup finished.

use std::ffi::{CString, OsStr, OsString};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

#[cfg(target_os = "linux")]
use std::os::unix::ffi::OsStrExt;

use crate::bpfgen::{generate, serialize_binary, BpfProgram, GenError};
use crate::rewrite::rewrite_apt;
use crate::systable::{builtin_table, host_arch};

/// Setting this (non-empty, not "0") in the launching environment
/// skips the post-install filter self-test. Escape hatch for kernels
/// where the probe syscall misbehaves; the filter itself still
/// installs.
pub const ENV_NO_SELFTEST: &str = "ZEROROOT_NO_SELFTEST";

pub const STAGE_THREAD: &str = "thread-check";
pub const STAGE_NAMESPACES: &str = "namespaces";
pub const STAGE_ROOTFS: &str = "rootfs";
pub const STAGE_FILTER: &str = "filter";
pub const STAGE_SELFTEST: &str = "self-test";

/// When to rewrite apt invocations in shell-string commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AptRewriteMode {
    /// Rewrite when the command is parseable shell; warn and continue
    /// when it is not.
    Auto,
    /// Rewrite, and fail the launch if the command cannot be parsed
    /// or is not a shell-string form.
    On,
    /// Never rewrite.
    Off,
}

#[derive(Debug, Clone)]
pub struct LaunchConfig {
    /// Command to exec. One element means a shell string, run via
    /// `/bin/sh -c`. Multiple elements are an exec vector.
    pub command: Vec<OsString>,
    /// Directory to pivot into as the container root, if any.
    pub rootfs: Option<PathBuf>,
    /// Working directory after rootfs entry (container-relative when
    /// a rootfs is set). Defaults to "/" inside a rootfs, the
    /// inherited directory otherwise.
    pub workdir: Option<PathBuf>,
    /// Install the seccomp filter (on by default).
    pub filter: bool,
    /// Map the outer uid/gid to 0 inside the namespace (on by
    /// default); otherwise map it to itself.
    pub map_to_root: bool,
    pub apt_rewrite: AptRewriteMode,
    /// Write the exact filter bytes that will be installed to this
    /// host-side path before launching.
    pub filter_dump: Option<PathBuf>,
    /// Replacement environment for the payload. `None` inherits.
    pub env: Option<Vec<(OsString, OsString)>>,
}

impl LaunchConfig {
    pub fn new<I, S>(command: I) -> LaunchConfig
    where
        I: IntoIterator<Item = S>,
        S: Into<OsString>,
    {
        LaunchConfig {
            command: command.into_iter().map(Into::into).collect(),
            rootfs: None,
            workdir: None,
            filter: true,
            map_to_root: true,
            apt_rewrite: AptRewriteMode::Auto,
            filter_dump: None,
            env: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelfTestStatus {
    Passed,
    Failed,
    Skipped,
}

impl fmt::Display for SelfTestStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelfTestStatus::Passed => "passed",
            SelfTestStatus::Failed => "failed",
            SelfTestStatus::Skipped => "skipped",
        })
    }
}

/// Outcome of a completed launch: the payload ran and exited.
#[derive(Debug, Clone)]
pub struct ContainerStatus {
    /// Payload exit code; 128+signal if signal-killed.
    pub exit_code: i32,
    pub self_test: SelfTestStatus,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum RuntimeError {
    #[error("command is empty")]
    EmptyCommand,
    #[error("rootfs {0:?} is not a directory")]
    BadRootfs(PathBuf),
    #[error("unsupported host architecture for filtering: {0}")]
    UnsupportedHost(String),
    #[error("apt rewrite is on but cannot apply: {0}")]
    RewriteForced(String),
    #[error("filter generation: {0}")]
    Gen(#[from] GenError),
    #[error("filter dump {path:?}: {message}")]
    FilterDump { path: PathBuf, message: String },
    #[error("fork: {0}")]
    Fork(String),
    #[error("stage {stage}: {message}")]
    Stage { stage: String, message: String },
    #[error("container setup ended without reporting status (exit code {0})")]
    NoStatus(i32),
    #[error("running containers requires Linux")]
    NotLinux,
}

fn stage_err(stage: &str, message: impl fmt::Display) -> RuntimeError {
    RuntimeError::Stage { stage: stage.to_string(), message: message.to_string() }
}

fn errno_msg(what: &str) -> String {
    format!("{what}: {}", std::io::Error::last_os_error())
}

/// Applies the apt-rewrite policy and normalizes the command into the
/// final exec vector. Single-string commands become `/bin/sh -c`
/// invocations; `sh -c` vectors get their script argument rewritten
/// in place; any other vector passes through untouched.
pub fn effective_command(
    cfg: &LaunchConfig,
) -> Result<(Vec<OsString>, Vec<String>), RuntimeError> {
    fn shell_basename(token: &OsStr) -> bool {
        let bytes = token.to_string_lossy();
        matches!(bytes.rsplit('/').next(), Some("sh" | "bash" | "dash" | "ash"))
    }

    fn rewrite_one(
        mode: AptRewriteMode,
        s: &OsStr,
        warnings: &mut Vec<String>,
    ) -> Result<OsString, RuntimeError> {
        if mode == AptRewriteMode::Off {
            return Ok(s.to_os_string());
        }
        let Some(text) = s.to_str() else {
            let msg = "command is not valid UTF-8; cannot rewrite".to_string();
            return match mode {
                AptRewriteMode::On => Err(RuntimeError::RewriteForced(msg)),
                _ => {
                    warnings.push(format!("apt rewrite skipped: {msg}"));
                    Ok(s.to_os_string())
                }
            };
        };
        let outcome = rewrite_apt(text);
        if outcome.fail_open {
            let msg = "command is not parseable shell".to_string();
            return match mode {
                AptRewriteMode::On => Err(RuntimeError::RewriteForced(msg)),
                _ => {
                    warnings.push(format!("apt rewrite skipped: {msg}"));
                    Ok(s.to_os_string())
                }
            };
        }
        if !outcome.injections.is_empty() {
            warnings.push(format!(
                "apt sandbox rewrite applied ({} injection{})",
                outcome.injections.len(),
                if outcome.injections.len() == 1 { "" } else { "s" }
            ));
        }
        Ok(outcome.text.into())
    }

    let mut warnings = Vec::new();
    let cmd = &cfg.command;
    if cmd.len() == 1 {
        let script = rewrite_one(cfg.apt_rewrite, &cmd[0], &mut warnings)?;
        return Ok((vec!["/bin/sh".into(), "-c".into(), script], warnings));
    }
    if cmd.len() >= 3 && shell_basename(&cmd[0]) && cmd[1] == "-c" {
        let mut out = cmd.clone();
        out[2] = rewrite_one(cfg.apt_rewrite, &cmd[2], &mut warnings)?;
        return Ok((out, warnings));
    }
    if cfg.apt_rewrite == AptRewriteMode::On {
        return Err(RuntimeError::RewriteForced(
            "command is a direct exec vector, not a shell-string form".to_string(),
        ));
    }
    Ok((cmd.clone(), warnings))
}

#[cfg(target_os = "linux")]
mod linux {
    use super::*;
    use std::fs::File;
    use std::os::unix::io::FromRawFd;

    fn cstring(path: &Path) -> Result<CString, String> {
        CString::new(path.as_os_str().as_bytes())
            .map_err(|_| format!("{path:?} contains an interior NUL"))
    }

    /// Unshares user and mount namespaces and writes the id maps.
    /// Must run in a single-threaded process: the kernel refuses
    /// CLONE_NEWUSER from a multi-threaded one, and the gid map can
    /// only be written before any other thread races setgroups.
    pub fn create_namespaces(map_to_root: bool) -> Result<Vec<String>, RuntimeError> {
        let tasks = fs::read_dir("/proc/self/task")
            .map_err(|e| stage_err(STAGE_THREAD, e))?
            .count();
        if tasks != 1 {
            return Err(stage_err(
                STAGE_THREAD,
                format!("process has {tasks} threads; namespace setup needs exactly one"),
            ));
        }

        let uid = unsafe { libc::geteuid() };
        let gid = unsafe { libc::getegid() };

        if unsafe { libc::unshare(libc::CLONE_NEWUSER | libc::CLONE_NEWNS) } != 0 {
            let err = std::io::Error::last_os_error();
            return Err(stage_err(
                STAGE_NAMESPACES,
                format!(
                    "unshare(CLONE_NEWUSER|CLONE_NEWNS): {err}; unprivileged user \
                     namespaces may be disabled (check the sysctls \
                     kernel.unprivileged_userns_clone and user.max_user_namespaces)"
                ),
            ));
        }

        let mut warnings = Vec::new();
        // setgroups must be denied before gid_map is writable by an
        // unprivileged process. Absent on pre-3.19 kernels, where the
        // map write succeeds without it.
        match fs::write("/proc/self/setgroups", "deny") {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                warnings.push("kernel predates /proc/self/setgroups; skipped".to_string());
            }
            Err(e) => {
                return Err(stage_err(STAGE_NAMESPACES, format!("/proc/self/setgroups: {e}")));
            }
        }

        let inner = if map_to_root { 0 } else { uid };
        let inner_gid = if map_to_root { 0 } else { gid };
        for (path, line) in [
            ("/proc/self/uid_map", format!("{inner} {uid} 1")),
            ("/proc/self/gid_map", format!("{inner_gid} {gid} 1")),
        ] {
            fs::write(path, &line)
                .map_err(|e| stage_err(STAGE_NAMESPACES, format!("{path} <- {line:?}: {e}")))?;
        }
        Ok(warnings)
    }

    /// Makes `root` the filesystem root via pivot_root, falling back
    /// to chroot where pivot_root is unavailable. /proc, /sys and
    /// /dev are bind-mounted from the host into the rootfs when it
    /// has those directories. Leaves the working directory at "/".
    pub fn enter_rootfs(root: &Path) -> Result<Vec<String>, RuntimeError> {
        let mut warnings = Vec::new();
        let root = root
            .canonicalize()
            .map_err(|e| stage_err(STAGE_ROOTFS, format!("{root:?}: {e}")))?;
        let root_c = cstring(&root).map_err(|m| stage_err(STAGE_ROOTFS, m))?;

        // New mount namespaces often inherit shared propagation;
        // everything below must stay private to this container.
        if unsafe {
            libc::mount(
                std::ptr::null(),
                c"/".as_ptr(),
                std::ptr::null(),
                libc::MS_REC | libc::MS_PRIVATE,
                std::ptr::null(),
            )
        } != 0
        {
            return Err(stage_err(STAGE_ROOTFS, errno_msg("make / private")));
        }

        // pivot_root needs the new root to be a mount point.
        if unsafe {
            libc::mount(
                root_c.as_ptr(),
                root_c.as_ptr(),
                std::ptr::null(),
                libc::MS_BIND | libc::MS_REC,
                std::ptr::null(),
            )
        } != 0
        {
            return Err(stage_err(STAGE_ROOTFS, errno_msg("bind rootfs onto itself")));
        }

        for name in ["proc", "sys", "dev"] {
            let target = root.join(name);
            if !target.is_dir() {
                warnings.push(format!("rootfs has no /{name}; not mounted"));
                continue;
            }
            let source = CString::new(format!("/{name}")).unwrap();
            let target_c = cstring(&target).map_err(|m| stage_err(STAGE_ROOTFS, m))?;
            if unsafe {
                libc::mount(
                    source.as_ptr(),
                    target_c.as_ptr(),
                    std::ptr::null(),
                    libc::MS_BIND | libc::MS_REC,
                    std::ptr::null(),
                )
            } != 0
            {
                warnings.push(errno_msg(&format!("bind /{name} into rootfs")));
            }
        }

        std::env::set_current_dir(&root)
            .map_err(|e| stage_err(STAGE_ROOTFS, format!("chdir {root:?}: {e}")))?;

        // pivot_root(".", ".") stacks the old root on the new one at
        // the same mount point; detaching "." then drops the old root.
        let rc = unsafe { libc::syscall(libc::SYS_pivot_root, c".".as_ptr(), c".".as_ptr()) };
        if rc == 0 {
            if unsafe { libc::umount2(c".".as_ptr(), libc::MNT_DETACH) } != 0 {
                return Err(stage_err(STAGE_ROOTFS, errno_msg("detach old root")));
            }
        } else {
            let err = std::io::Error::last_os_error();
            warnings.push(format!("pivot_root unavailable ({err}); using chroot"));
            if unsafe { libc::chroot(c".".as_ptr()) } != 0 {
                return Err(stage_err(STAGE_ROOTFS, errno_msg("chroot rootfs")));
            }
        }
        std::env::set_current_dir("/")
            .map_err(|e| stage_err(STAGE_ROOTFS, format!("chdir new /: {e}")))?;
        Ok(warnings)
    }

    /// Installs `program` as a seccomp filter on the calling process.
    /// Sets no_new_privs first, as the kernel requires for
    /// unprivileged filter installation. Installing twice stacks two
    /// copies; every filter still runs on each syscall, so behavior
    /// is unchanged.
    pub fn install_filter(program: &BpfProgram) -> Result<(), RuntimeError> {
        if unsafe { libc::prctl(libc::PR_SET_NO_NEW_PRIVS, 1, 0, 0, 0) } != 0 {
            return Err(stage_err(STAGE_FILTER, errno_msg("prctl(PR_SET_NO_NEW_PRIVS)")));
        }
        let mut insns: Vec<libc::sock_filter> = program
            .insns
            .iter()
            .map(|i| libc::sock_filter { code: i.code, jt: i.jt, jf: i.jf, k: i.k })
            .collect();
        let prog = libc::sock_fprog {
            len: insns.len() as libc::c_ushort,
            filter: insns.as_mut_ptr(),
        };
        if unsafe { libc::prctl(libc::PR_SET_SECCOMP, libc::SECCOMP_MODE_FILTER, &prog) } != 0 {
            let err = std::io::Error::last_os_error();
            let hint = if err.raw_os_error() == Some(libc::EINVAL) {
                "; seccomp filter mode needs Linux 3.5+ and a kernel built \
                 with CONFIG_SECCOMP_FILTER"
            } else {
                ""
            };
            return Err(stage_err(STAGE_FILTER, format!("prctl(PR_SET_SECCOMP): {err}{hint}")));
        }
        Ok(())
    }

    /// Proves the filter intercepts by invoking the self-test syscall
    /// (kexec_load), which only the filter can make return 0: without
    /// interception it fails with EPERM, or ENOSYS on kernels built
    /// without it.
    pub fn self_test() -> Result<(), RuntimeError> {
        let arch = host_arch()
            .ok_or_else(|| stage_err(STAGE_SELFTEST, "host architecture not in table"))?;
        let table = builtin_table();
        let spec = table
            .specs
            .iter()
            .find(|s| s.name == "kexec_load")
            .expect("table always carries kexec_load");
        let nr = table
            .number(spec, arch)
            .ok_or_else(|| stage_err(STAGE_SELFTEST, "kexec_load has no number here"))?;
        let rc = unsafe { libc::syscall(nr as libc::c_long, 0, 0, 0, 0) };
        if rc == 0 {
            Ok(())
        } else {
            let err = std::io::Error::last_os_error();
            Err(stage_err(
                STAGE_SELFTEST,
                format!("kexec_load returned {err}; the filter is not intercepting"),
            ))
        }
    }

    fn selftest_disabled_by_env() -> bool {
        match std::env::var_os(ENV_NO_SELFTEST) {
            Some(v) => !v.is_empty() && v != "0",
            None => false,
        }
    }

    struct Pipe {
        read: File,
        write: File,
    }

    fn cloexec_pipe() -> Result<Pipe, RuntimeError> {
        let mut fds = [0; 2];
        if unsafe { libc::pipe2(fds.as_mut_ptr(), libc::O_CLOEXEC) } != 0 {
            return Err(RuntimeError::Fork(errno_msg("pipe2")));
        }
        unsafe {
            Ok(Pipe { read: File::from_raw_fd(fds[0]), write: File::from_raw_fd(fds[1]) })
        }
    }

    fn die(pipe: &mut File, stage: &str, message: &str) -> ! {
        let _ = writeln!(pipe, "E {stage}: {message}");
        std::process::exit(125);
    }

    fn report(pipe: &mut File, res: Result<Vec<String>, RuntimeError>) {
        match res {
            Ok(warnings) => {
                for w in warnings {
                    let _ = writeln!(pipe, "W {w}");
                }
            }
            Err(RuntimeError::Stage { stage, message }) => die(pipe, &stage, &message),
            Err(other) => die(pipe, "setup", &other.to_string()),
        }
    }

    fn child_main(cfg: &LaunchConfig, argv: &[OsString], program: Option<&BpfProgram>, mut pipe: File) -> ! {
        report(&mut pipe, create_namespaces(cfg.map_to_root));
        if let Some(root) = &cfg.rootfs {
            report(&mut pipe, enter_rootfs(root));
        }
        if let Some(dir) = &cfg.workdir {
            if let Err(e) = std::env::set_current_dir(dir) {
                die(&mut pipe, STAGE_ROOTFS, &format!("chdir {dir:?}: {e}"));
            }
        }

        match program {
            Some(p) => {
                if let Err(e) = install_filter(p) {
                    match e {
                        RuntimeError::Stage { stage, message } => die(&mut pipe, &stage, &message),
                        other => die(&mut pipe, STAGE_FILTER, &other.to_string()),
                    }
                }
                if selftest_disabled_by_env() {
                    let _ = writeln!(pipe, "S skipped {ENV_NO_SELFTEST} is set");
                } else {
                    match self_test() {
                        Ok(()) => {
                            let _ = writeln!(pipe, "S passed");
                        }
                        Err(RuntimeError::Stage { stage, message }) => {
                            let _ = writeln!(pipe, "S failed {message}");
                            die(&mut pipe, &stage, &message);
                        }
                        Err(other) => die(&mut pipe, STAGE_SELFTEST, &other.to_string()),
                    }
                }
            }
            None => {
                let _ = writeln!(pipe, "S skipped filter disabled");
            }
        }

        let prog = match CString::new(argv[0].as_bytes()) {
            Ok(c) => c,
            Err(_) => die(&mut pipe, STAGE_ROOTFS, "argv[0] contains interior NUL"),
        };
        let args: Vec<CString> = match argv
            .iter()
            .map(|a| CString::new(a.as_bytes()))
            .collect::<Result<_, _>>()
        {
            Ok(v) => v,
            Err(_) => die(&mut pipe, STAGE_ROOTFS, "argument contains interior NUL"),
        };
        let mut arg_ptrs: Vec<*const libc::c_char> =
            args.iter().map(|a| a.as_ptr()).collect();
        arg_ptrs.push(std::ptr::null());

        let env_cstrings: Option<Vec<CString>> = cfg.env.as_ref().map(|pairs| {
            pairs
                .iter()
                .map(|(k, v)| {
                    let mut kv = k.as_bytes().to_vec();
                    kv.push(b'=');
                    kv.extend_from_slice(v.as_bytes());
                    CString::new(kv).unwrap_or_default()
                })
                .collect()
        });

        unsafe {
            match &env_cstrings {
                Some(envs) => {
                    let mut env_ptrs: Vec<*const libc::c_char> =
                        envs.iter().map(|e| e.as_ptr()).collect();
                    env_ptrs.push(std::ptr::null());
                    libc::execvpe(prog.as_ptr(), arg_ptrs.as_ptr(), env_ptrs.as_ptr());
                }
                None => {
                    libc::execvp(prog.as_ptr(), arg_ptrs.as_ptr());
                }
            }
        }
        let err = std::io::Error::last_os_error();
        let code = match err.raw_os_error() {
            Some(libc::ENOENT) | Some(libc::ENOTDIR) => 127,
            _ => 126,
        };
        let _ = writeln!(pipe, "W exec {:?}: {err}", argv[0]);
        drop(pipe);
        std::process::exit(code);
    }

    pub fn launch(cfg: &LaunchConfig) -> Result<ContainerStatus, RuntimeError> {
        if cfg.command.is_empty() {
            return Err(RuntimeError::EmptyCommand);
        }
        if let Some(root) = &cfg.rootfs {
            if !root.is_dir() {
                return Err(RuntimeError::BadRootfs(root.clone()));
            }
        }

        let (argv, mut warnings) = effective_command(cfg)?;

        let program = if cfg.filter {
            let arch = host_arch()
                .ok_or_else(|| RuntimeError::UnsupportedHost(std::env::consts::ARCH.to_string()))?;
            Some(generate(builtin_table(), arch)?)
        } else {
            None
        };

        if let Some(path) = &cfg.filter_dump {
            let Some(p) = &program else {
                return Err(RuntimeError::FilterDump {
                    path: path.clone(),
                    message: "filtering is disabled; nothing to dump".to_string(),
                });
            };
            let bytes = serialize_binary(p)?;
            fs::write(path, bytes).map_err(|e| RuntimeError::FilterDump {
                path: path.clone(),
                message: e.to_string(),
            })?;
        }

        let pipe = cloexec_pipe()?;
        let pid = unsafe { libc::fork() };
        if pid < 0 {
            return Err(RuntimeError::Fork(errno_msg("fork")));
        }
        if pid == 0 {
            drop(pipe.read);
            child_main(cfg, &argv, program.as_ref(), pipe.write);
        }
        drop(pipe.write);

        let mut self_test = None;
        let mut stage_error = None;
        for line in BufReader::new(pipe.read).lines() {
            let Ok(line) = line else { break };
            match line.split_once(' ') {
                Some(("W", msg)) => warnings.push(msg.to_string()),
                Some(("S", rest)) => {
                    self_test = Some(match rest.split_once(' ') {
                        None if rest == "passed" => SelfTestStatus::Passed,
                        Some(("failed", _)) => SelfTestStatus::Failed,
                        Some(("skipped", reason)) => {
                            if reason.contains(ENV_NO_SELFTEST) {
                                warnings.push(format!("self-test skipped: {reason}"));
                            }
                            SelfTestStatus::Skipped
                        }
                        _ => SelfTestStatus::Skipped,
                    });
                }
                Some(("E", rest)) => {
                    let (stage, message) = rest
                        .split_once(": ")
                        .unwrap_or(("setup", rest));
                    stage_error = Some(RuntimeError::Stage {
                        stage: stage.to_string(),
                        message: message.to_string(),
                    });
                }
                _ => warnings.push(format!("unrecognized status line: {line}")),
            }
        }

        let mut status = 0;
        loop {
            let rc = unsafe { libc::waitpid(pid, &mut status, 0) };
            if rc == pid {
                break;
            }
            let err = std::io::Error::last_os_error();
            if err.raw_os_error() != Some(libc::EINTR) {
                return Err(RuntimeError::Fork(format!("waitpid: {err}")));
            }
        }
        let exit_code = if libc::WIFEXITED(status) {
            libc::WEXITSTATUS(status)
        } else if libc::WIFSIGNALED(status) {
            128 + libc::WTERMSIG(status)
        } else {
            125
        };

        if let Some(err) = stage_error {
            return Err(err);
        }
        let Some(self_test) = self_test else {
            return Err(RuntimeError::NoStatus(exit_code));
        };
        Ok(ContainerStatus { exit_code, self_test, warnings })
    }
}

#[cfg(target_os = "linux")]
pub use linux::{create_namespaces, enter_rootfs, install_filter, launch, self_test};

#[cfg(not(target_os = "linux"))]
mod stub {
    use super::*;

    pub fn create_namespaces(_map_to_root: bool) -> Result<Vec<String>, RuntimeError> {
        Err(RuntimeError::NotLinux)
    }

    pub fn enter_rootfs(_root: &Path) -> Result<Vec<String>, RuntimeError> {
        Err(RuntimeError::NotLinux)
    }

    pub fn install_filter(_program: &BpfProgram) -> Result<(), RuntimeError> {
        Err(RuntimeError::NotLinux)
    }

    pub fn self_test() -> Result<(), RuntimeError> {
        Err(RuntimeError::NotLinux)
    }

    pub fn launch(_cfg: &LaunchConfig) -> Result<ContainerStatus, RuntimeError> {
        Err(RuntimeError::NotLinux)
    }
}

#[cfg(not(target_os = "linux"))]
pub use stub::{create_namespaces, enter_rootfs, install_filter, launch, self_test};

#[cfg(test)]
mod tests {
    use super::*;

    fn one(s: &str) -> LaunchConfig {
        LaunchConfig::new([s])
    }

    #[test]
    fn single_string_wraps_in_shell() {
        let (argv, _) = effective_command(&one("apt update")).unwrap();
        assert_eq!(argv[0], "/bin/sh");
        assert_eq!(argv[1], "-c");
        assert_eq!(argv[2], "apt -o APT::Sandbox::User=root update");
    }

    #[test]
    fn single_string_with_rewrite_off_still_uses_shell() {
        let mut cfg = one("apt update");
        cfg.apt_rewrite = AptRewriteMode::Off;
        let (argv, warnings) = effective_command(&cfg).unwrap();
        assert_eq!(argv[2], "apt update");
        assert!(warnings.is_empty());
    }

    #[test]
    fn sh_dash_c_vector_rewrites_script_only() {
        let cfg = LaunchConfig::new(["/bin/bash", "-c", "apt-get update", "bash-argv0"]);
        let (argv, _) = effective_command(&cfg).unwrap();
        assert_eq!(argv[0], "/bin/bash");
        assert_eq!(argv[2], "apt-get -o APT::Sandbox::User=root update");
        assert_eq!(argv[3], "bash-argv0");
    }

    #[test]
    fn plain_vector_passes_through() {
        let cfg = LaunchConfig::new(["apt", "update"]);
        let (argv, warnings) = effective_command(&cfg).unwrap();
        assert_eq!(argv, vec![OsString::from("apt"), OsString::from("update")]);
        assert!(warnings.is_empty());
    }

    #[test]
    fn forced_rewrite_rejects_plain_vector() {
        let mut cfg = LaunchConfig::new(["apt", "update"]);
        cfg.apt_rewrite = AptRewriteMode::On;
        assert!(matches!(effective_command(&cfg), Err(RuntimeError::RewriteForced(_))));
    }

    #[test]
    fn forced_rewrite_rejects_unparseable_shell() {
        let mut cfg = one("apt install 'unterminated");
        cfg.apt_rewrite = AptRewriteMode::On;
        assert!(matches!(effective_command(&cfg), Err(RuntimeError::RewriteForced(_))));
    }

    #[test]
    fn auto_rewrite_fails_open_with_warning() {
        let cfg = one("apt install 'unterminated");
        let (argv, warnings) = effective_command(&cfg).unwrap();
        assert_eq!(argv[2], "apt install 'unterminated");
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("skipped"));
    }

    #[test]
    fn launch_rejects_empty_command() {
        let cfg = LaunchConfig::new(Vec::<OsString>::new());
        assert!(matches!(launch(&cfg), Err(RuntimeError::EmptyCommand)));
    }

    #[test]
    fn launch_rejects_missing_rootfs() {
        let mut cfg = one("true");
        cfg.rootfs = Some(PathBuf::from("/nonexistent-zeroroot-rootfs"));
        assert!(matches!(launch(&cfg), Err(RuntimeError::BadRootfs(_))));
    }

    #[test]
    #[cfg(target_os = "linux")]
    fn launch_runs_true_and_self_tests() {
        let status = launch(&LaunchConfig::new(["/bin/true"])).unwrap();
        assert_eq!(status.exit_code, 0);
        assert_eq!(status.self_test, SelfTestStatus::Passed);
    }

    #[test]
    #[cfg(target_os = "linux")]
    fn launch_propagates_exit_codes() {
        assert_eq!(launch(&LaunchConfig::new(["/bin/false"])).unwrap().exit_code, 1);
        assert_eq!(launch(&one("exit 42")).unwrap().exit_code, 42);
    }

    #[test]
    #[cfg(target_os = "linux")]
    fn launch_reports_signal_deaths_as_128_plus() {
        let status = launch(&one("kill -TERM $$")).unwrap();
        assert_eq!(status.exit_code, 128 + libc::SIGTERM);
    }

    #[test]
    #[cfg(target_os = "linux")]
    fn launch_maps_exec_errors_like_a_shell() {
        // Single-string form goes through /bin/sh, which applies the
        // same convention itself.
        let missing_sh =
            launch(&LaunchConfig::new(["exec /no/such/binary 2>/dev/null"])).unwrap();
        assert_eq!(missing_sh.exit_code, 127);

        // Vector form hits our own exec failure path.
        let missing = launch(&LaunchConfig::new(["/no/such/binary", "x"])).unwrap();
        assert_eq!(missing.exit_code, 127);
        assert!(missing.warnings.iter().any(|w| w.contains("exec")));

        let dir = tempfile::tempdir().unwrap();
        let plain = dir.path().join("not-executable");
        fs::write(&plain, "#!/bin/sh\n").unwrap();
        let argv = [plain.into_os_string(), OsString::from("x")];
        let unexecutable = launch(&LaunchConfig::new(argv)).unwrap();
        assert_eq!(unexecutable.exit_code, 126);
    }

    #[test]
    #[cfg(target_os = "linux")]
    fn launch_without_filter_skips_self_test() {
        let mut cfg = LaunchConfig::new(["/bin/true"]);
        cfg.filter = false;
        let status = launch(&cfg).unwrap();
        assert_eq!(status.exit_code, 0);
        assert_eq!(status.self_test, SelfTestStatus::Skipped);
    }

    #[test]
    #[cfg(target_os = "linux")]
    fn launch_fakes_chown_under_filter() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("probe");
        fs::write(&file, "x").unwrap();
        let before = fs::metadata(&file).unwrap();

        let mut cfg = one(&format!("chown 4321:4321 {}", file.display()));
        cfg.workdir = Some(dir.path().to_path_buf());
        let status = launch(&cfg).unwrap();
        assert_eq!(status.exit_code, 0);

        use std::os::unix::fs::MetadataExt;
        let after = fs::metadata(&file).unwrap();
        assert_eq!((after.uid(), after.gid()), (before.uid(), before.gid()));
    }

    #[test]
    #[cfg(target_os = "linux")]
    fn launch_without_filter_fails_chown() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("probe");
        fs::write(&file, "x").unwrap();

        let mut cfg = one(&format!("chown 4321:4321 {}", file.display()));
        cfg.workdir = Some(dir.path().to_path_buf());
        cfg.filter = false;
        let status = launch(&cfg).unwrap();
        assert_ne!(status.exit_code, 0);
    }

    #[test]
    #[cfg(target_os = "linux")]
    fn filter_dump_matches_generated_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let dump = dir.path().join("filter.bpf");
        let mut cfg = LaunchConfig::new(["/bin/true"]);
        cfg.filter_dump = Some(dump.clone());
        launch(&cfg).unwrap();

        let expected =
            serialize_binary(&generate(builtin_table(), host_arch().unwrap()).unwrap()).unwrap();
        assert_eq!(fs::read(&dump).unwrap(), expected);
    }

    #[test]
    fn filter_dump_without_filter_is_an_error() {
        let mut cfg = LaunchConfig::new(["/bin/true"]);
        cfg.filter = false;
        cfg.filter_dump = Some(PathBuf::from("/tmp/never-written"));
        assert!(matches!(launch(&cfg), Err(RuntimeError::FilterDump { .. })));
    }
}
