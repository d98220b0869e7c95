//! Fully unprivileged root emulation for container-style builds.
//!
//! zeroroot launches a command inside unprivileged user and mount
//! namespaces and installs a seccomp BPF filter that intercepts the
//! privileged syscalls an image build tends to issue (chown, setuid,
//! mknod, ...). Intercepted calls do nothing and return success, so
//! build tooling that insists on running as root sees every privileged
//! operation "work" while the kernel never performs it.
//!
//! Module map:
//!
//! * [`systable`] - the per-architecture table of intercepted syscalls
//! * [`bpfgen`] - classic-BPF filter generation, validation, (dis)assembly
//! * [`bpfvm`] - a userspace interpreter for the generated filters
//! * [`rewrite`] - the apt sandbox-user command-line rewrite
//! * [`runtime`] - namespace setup, rootfs pivot, filter install, launch
//! * [`probes`] - in-container behavioral probes (TAP or JSON reports)
//! * [`cli`] - the `zeroroot` command-line interface

pub mod bpfgen;
pub mod bpfvm;
pub mod cli;
pub mod probes;
pub mod rewrite;
pub mod runtime;
pub mod systable;
