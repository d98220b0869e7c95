//! Command-line interface.
//!
//! Exit code conventions: the payload's own exit status for `run` and
//! `probe`, 0/1 from the probe verdicts, 2 for an unknown
//! architecture, 125 for launch and usage errors (the payload never
//! produces 125 through us: stage failures use it precisely because
//! 126/127 are reserved for exec errors).

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::bpfgen::{disassemble, generate, serialize_binary, FilterAction};
use crate::bpfvm::{eval, SeccompData};
use crate::probes;
use crate::runtime::{install_filter, launch, AptRewriteMode, LaunchConfig};
use crate::systable::{builtin_table, host_arch, Arch, SyscallTable};

const EXIT_USAGE: i32 = 125;
const EXIT_BAD_ARCH: i32 = 2;

#[derive(Parser)]
#[command(
    name = "zeroroot",
    version,
    about = "Run commands as an emulated root without any privileges"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a command in fresh namespaces with the success-faking filter.
    Run(RunArgs),
    /// Run the behavioral probe suite in a container and report results.
    Probe(ProbeArgs),
    /// Inspect the generated seccomp filter.
    Filter {
        #[command(subcommand)]
        cmd: FilterCmd,
    },
    /// Inspect the intercepted-syscall table.
    Table {
        #[command(subcommand)]
        cmd: TableCmd,
    },
    /// Internal: execute the probe suite in the current process.
    #[command(name = "__probe-worker", hide = true)]
    ProbeWorker(WorkerArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RewriteChoice {
    Auto,
    On,
    Off,
}

impl From<RewriteChoice> for AptRewriteMode {
    fn from(choice: RewriteChoice) -> AptRewriteMode {
        match choice {
            RewriteChoice::Auto => AptRewriteMode::Auto,
            RewriteChoice::On => AptRewriteMode::On,
            RewriteChoice::Off => AptRewriteMode::Off,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    /// Pivot into this directory as the container root.
    #[arg(long, value_name = "DIR")]
    root: Option<PathBuf>,
    /// Working directory inside the container.
    #[arg(long, value_name = "DIR")]
    workdir: Option<PathBuf>,
    /// Rewrite apt invocations in shell commands to disable its
    /// privilege-dropping sandbox.
    #[arg(long, value_enum, default_value_t = RewriteChoice::Auto, value_name = "MODE")]
    apt_rewrite: RewriteChoice,
    /// Skip installing the seccomp filter.
    #[arg(long)]
    no_filter: bool,
    /// Keep the outer uid/gid instead of mapping them to 0.
    #[arg(long)]
    no_map_root: bool,
    /// Write the exact filter bytes that get installed to this host path.
    #[arg(long, value_name = "FILE")]
    filter_dump: Option<PathBuf>,
    /// Command to run, after `--`. A single element is treated as a
    /// shell string and run via `/bin/sh -c`.
    #[arg(last = true, required = true, value_name = "COMMAND")]
    command: Vec<OsString>,
}

#[derive(Args)]
struct ProbeArgs {
    /// Emit JSON instead of TAP.
    #[arg(long)]
    json: bool,
    /// Launch without the filter; the discriminating probes then fail.
    #[arg(long)]
    no_filter: bool,
    /// Install the filter a second time before probing, demonstrating
    /// that stacked filters still emulate correctly.
    #[arg(long)]
    double_filter: bool,
}

#[derive(Args)]
struct WorkerArgs {
    #[arg(long)]
    json: bool,
    #[arg(long)]
    double_filter: bool,
}

#[derive(Subcommand)]
enum FilterCmd {
    /// Print or write the generated program.
    Dump(DumpArgs),
    /// Evaluate the program against one synthetic syscall.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DumpFormat {
    Text,
    Binary,
}

#[derive(Args)]
struct DumpArgs {
    /// Target architecture (defaults to the host).
    #[arg(long, value_name = "ARCH")]
    arch: Option<String>,
    #[arg(long, value_enum, default_value_t = DumpFormat::Text, value_name = "FORMAT")]
    format: DumpFormat,
    /// Write to a file instead of stdout.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Target architecture (defaults to the host).
    #[arg(long, value_name = "ARCH")]
    arch: Option<String>,
    /// Syscall number to evaluate.
    #[arg(long, allow_negative_numbers = true)]
    nr: i32,
    /// Argument word as INDEX=VALUE (decimal, 0x hex, or 0o octal);
    /// repeatable.
    #[arg(long = "arg", value_name = "INDEX=VALUE")]
    args: Vec<String>,
}

#[derive(Subcommand)]
enum TableCmd {
    /// Print the intercepted syscalls and their numbers.
    Show(ShowArgs),
}

#[derive(Args)]
struct ShowArgs {
    /// Show only this architecture's column.
    #[arg(long, value_name = "ARCH")]
    arch: Option<String>,
}

pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return code;
        }
    };
    match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Probe(args) => cmd_probe(args),
        Cmd::Filter { cmd: FilterCmd::Dump(args) } => cmd_filter_dump(args),
        Cmd::Filter { cmd: FilterCmd::Eval(args) } => cmd_filter_eval(args),
        Cmd::Table { cmd: TableCmd::Show(args) } => cmd_table_show(args),
        Cmd::ProbeWorker(args) => cmd_probe_worker(args),
    }
}

fn fail(message: impl std::fmt::Display) -> i32 {
    eprintln!("zeroroot: {message}");
    EXIT_USAGE
}

fn resolve_arch<'t>(table: &'t SyscallTable, requested: Option<&str>) -> Result<&'t Arch, i32> {
    match requested {
        None => host_arch().ok_or_else(|| {
            eprintln!(
                "zeroroot: host architecture {} is not in the table; pass --arch",
                std::env::consts::ARCH
            );
            EXIT_BAD_ARCH
        }),
        Some(name) => table.arch(name).ok_or_else(|| {
            let known: Vec<&str> = table.archs.iter().map(|a| a.name).collect();
            eprintln!(
                "zeroroot: unknown architecture `{name}` (known: {})",
                known.join(", ")
            );
            EXIT_BAD_ARCH
        }),
    }
}

fn finish_launch(cfg: &LaunchConfig) -> i32 {
    match launch(cfg) {
        Ok(status) => {
            for w in &status.warnings {
                eprintln!("zeroroot: warning: {w}");
            }
            status.exit_code
        }
        Err(e) => fail(e),
    }
}

fn cmd_run(args: RunArgs) -> i32 {
    let mut cfg = LaunchConfig::new(args.command);
    cfg.rootfs = args.root;
    cfg.workdir = args.workdir;
    cfg.filter = !args.no_filter;
    cfg.map_to_root = !args.no_map_root;
    cfg.apt_rewrite = args.apt_rewrite.into();
    cfg.filter_dump = args.filter_dump;
    finish_launch(&cfg)
}

/// The probe suite must observe the filter exactly as a payload would,
/// so `probe` launches this same binary's hidden worker subcommand
/// through the ordinary container path and passes its exit status on.
fn cmd_probe(args: ProbeArgs) -> i32 {
    let exe = match std::env::current_exe() {
        Ok(p) => p,
        Err(e) => return fail(format!("cannot locate own binary: {e}")),
    };
    let mut argv: Vec<OsString> = vec![exe.into_os_string(), OsString::from("__probe-worker")];
    if args.json {
        argv.push("--json".into());
    }
    if args.double_filter {
        argv.push("--double-filter".into());
    }
    let mut cfg = LaunchConfig::new(argv);
    cfg.filter = !args.no_filter;
    cfg.apt_rewrite = AptRewriteMode::Off;
    finish_launch(&cfg)
}

fn cmd_probe_worker(args: WorkerArgs) -> i32 {
    if args.double_filter {
        let table = builtin_table();
        let Some(arch) = host_arch() else {
            return fail("host architecture not in table");
        };
        let program = match generate(table, arch) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        if let Err(e) = install_filter(&program) {
            return fail(e);
        }
    }
    let reports = probes::run_all();
    let out = if args.json {
        probes::render_json(&reports)
    } else {
        probes::render_tap(&reports)
    };
    print!("{out}");
    probes::exit_code(&reports)
}

fn cmd_filter_dump(args: DumpArgs) -> i32 {
    let table = builtin_table();
    let arch = match resolve_arch(table, args.arch.as_deref()) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let program = match generate(table, arch) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let bytes = match args.format {
        DumpFormat::Text => disassemble(&program).into_bytes(),
        DumpFormat::Binary => match serialize_binary(&program) {
            Ok(b) => b,
            Err(e) => return fail(e),
        },
    };
    let written = match &args.out {
        Some(path) => {
            std::fs::write(path, &bytes).map_err(|e| format!("{}: {e}", path.display()))
        }
        None => std::io::stdout().write_all(&bytes).map_err(|e| e.to_string()),
    };
    match written {
        Ok(()) => 0,
        Err(e) => fail(e),
    }
}

fn parse_arg_value(text: &str) -> Result<u64, String> {
    let t = text.trim();
    let (digits, radix) = if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X"))
    {
        (hex, 16)
    } else if let Some(oct) = t.strip_prefix("0o").or_else(|| t.strip_prefix("0O")) {
        (oct, 8)
    } else {
        (t, 10)
    };
    u64::from_str_radix(digits, radix).map_err(|e| format!("bad value `{text}`: {e}"))
}

fn cmd_filter_eval(args: EvalArgs) -> i32 {
    let table = builtin_table();
    let arch = match resolve_arch(table, args.arch.as_deref()) {
        Ok(a) => a,
        Err(code) => return code,
    };
    let program = match generate(table, arch) {
        Ok(p) => p,
        Err(e) => return fail(e),
    };
    let mut call_args = [0u64; 6];
    for spec in &args.args {
        let Some((idx, value)) = spec.split_once('=') else {
            return fail(format!("--arg takes INDEX=VALUE, got `{spec}`"));
        };
        let idx: usize = match idx.trim().parse() {
            Ok(i) if i < 6 => i,
            _ => return fail(format!("--arg index must be 0..=5, got `{idx}`")),
        };
        match parse_arg_value(value) {
            Ok(v) => call_args[idx] = v,
            Err(e) => return fail(e),
        }
    }
    let data = SeccompData::new(args.nr, arch.audit_id, call_args);
    match eval(&program, &data, arch.endianness) {
        Ok(result) => {
            match FilterAction::from_raw(result.raw_action) {
                Some(action) => println!("{action}"),
                None => println!("raw 0x{:08x}", result.raw_action),
            }
            0
        }
        Err(e) => fail(e),
    }
}

fn cmd_table_show(args: ShowArgs) -> i32 {
    let table = builtin_table();
    let cell = |n: Option<u32>| n.map_or_else(|| "-".to_string(), |n| n.to_string());
    match args.arch.as_deref() {
        Some(name) => {
            let arch = match resolve_arch(table, Some(name)) {
                Ok(a) => a,
                Err(code) => return code,
            };
            println!("{:<13} {:<14} {:>8}", "syscall", "class", arch.name);
            for spec in &table.specs {
                println!(
                    "{:<13} {:<14} {:>8}",
                    spec.name,
                    spec.class.name(),
                    cell(table.number(spec, arch))
                );
            }
        }
        None => {
            let mut header = format!("{:<13} {:<14}", "syscall", "class");
            for arch in &table.archs {
                header.push_str(&format!(" {:>8}", arch.name));
            }
            println!("{header}");
            for spec in &table.specs {
                let mut row = format!("{:<13} {:<14}", spec.name, spec.class.name());
                for arch in &table.archs {
                    row.push_str(&format!(" {:>8}", cell(table.number(spec, arch))));
                }
                println!("{row}");
            }
        }
    }
    0
}
