//! The apt sandbox rewrite.
//!
//! apt drops privileges to its sandbox user before fetching, and
//! inside an emulated-root container that user does not resolve, so
//! apt invocations need `-o APT::Sandbox::User=root` spliced in.
//! Commands arrive as opaque shell strings, so this module carries a
//! small quote-aware scanner: enough shell syntax to find statement
//! boundaries and command words, and a strict fail-open rule (return
//! the input untouched) for anything it cannot parse with confidence.
//!
//! The scanner understands single quotes, double quotes, backslash
//! escapes, and the unquoted separators `&&`, `||`, `;`, `|`, `&`,
//! and newline. It does not expand anything: tokens are raw byte
//! ranges of the input, which keeps every edit position-exact.

use std::ops::Range;

/// The spliced option, exactly as injected after the command token.
pub const INJECTION: &str = " -o APT::Sandbox::User=root";

const OPTION_TOKEN: &str = "-o";
const VALUE_TOKEN: &str = "APT::Sandbox::User=root";

/// One shell statement: its overall span, raw token ranges, and the
/// command token (the first token that is not a `VAR=value`
/// assignment), when there is one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub span: Range<usize>,
    pub tokens: Vec<Range<usize>>,
    pub command: Option<Range<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitOutcome {
    pub statements: Vec<Statement>,
    /// False when quoting never closed or a trailing escape was cut
    /// off; token ranges up to that point are still returned.
    pub parse_ok: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum State {
    Normal,
    Single,
    Double,
}

fn scan(text: &str) -> (Vec<Vec<Range<usize>>>, bool) {
    let bytes = text.as_bytes();
    let len = bytes.len();
    let mut statements: Vec<Vec<Range<usize>>> = Vec::new();
    let mut tokens: Vec<Range<usize>> = Vec::new();
    let mut token_start: Option<usize> = None;
    let mut state = State::Normal;
    let mut ok = true;
    let mut i = 0;

    fn end_token(at: usize, start: &mut Option<usize>, tokens: &mut Vec<Range<usize>>) {
        if let Some(s) = start.take() {
            tokens.push(s..at);
        }
    }
    fn end_statement(
        at: usize,
        start: &mut Option<usize>,
        tokens: &mut Vec<Range<usize>>,
        statements: &mut Vec<Vec<Range<usize>>>,
    ) {
        end_token(at, start, tokens);
        if !tokens.is_empty() {
            statements.push(std::mem::take(tokens));
        }
    }

    while i < len {
        match state {
            State::Normal => match bytes[i] {
                b'\'' => {
                    token_start.get_or_insert(i);
                    state = State::Single;
                    i += 1;
                }
                b'"' => {
                    token_start.get_or_insert(i);
                    state = State::Double;
                    i += 1;
                }
                b'\\' => {
                    token_start.get_or_insert(i);
                    if i + 1 < len {
                        i += 2;
                    } else {
                        ok = false;
                        i += 1;
                    }
                }
                b' ' | b'\t' => {
                    end_token(i, &mut token_start, &mut tokens);
                    i += 1;
                }
                b'\n' | b';' => {
                    end_statement(i, &mut token_start, &mut tokens, &mut statements);
                    i += 1;
                }
                c @ (b'&' | b'|') => {
                    end_statement(i, &mut token_start, &mut tokens, &mut statements);
                    if i + 1 < len && bytes[i + 1] == c {
                        i += 2;
                    } else {
                        i += 1;
                    }
                }
                _ => {
                    token_start.get_or_insert(i);
                    i += 1;
                }
            },
            State::Single => {
                if bytes[i] == b'\'' {
                    state = State::Normal;
                }
                i += 1;
            }
            State::Double => match bytes[i] {
                b'"' => {
                    state = State::Normal;
                    i += 1;
                }
                b'\\' => {
                    if i + 1 < len {
                        i += 2;
                    } else {
                        ok = false;
                        i += 1;
                    }
                }
                _ => i += 1,
            },
        }
    }
    if state != State::Normal {
        ok = false;
    }
    end_statement(len, &mut token_start, &mut tokens, &mut statements);
    (statements, ok)
}

/// True for tokens of the form `NAME=...` where NAME is a plain
/// identifier; shells treat leading tokens like these as environment
/// assignments, so they never name the command.
fn is_assignment(token: &str) -> bool {
    let bytes = token.as_bytes();
    let Some(&first) = bytes.first() else { return false };
    if !(first.is_ascii_alphabetic() || first == b'_') {
        return false;
    }
    for &b in &bytes[1..] {
        if b == b'=' {
            return true;
        }
        if !(b.is_ascii_alphanumeric() || b == b'_') {
            return false;
        }
    }
    false
}

/// Splits a shell string into statements at unquoted separators.
pub fn split_statements(text: &str) -> SplitOutcome {
    let (raw, parse_ok) = scan(text);
    let statements = raw
        .into_iter()
        .map(|tokens| {
            let command = tokens
                .iter()
                .find(|r| !is_assignment(&text[(*r).clone()]))
                .cloned();
            let span = tokens.first().unwrap().start..tokens.last().unwrap().end;
            Statement { span, tokens, command }
        })
        .collect();
    SplitOutcome { statements, parse_ok }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewriteOutcome {
    pub text: String,
    /// Byte offset in `text` of each spliced [`INJECTION`], ascending.
    pub injections: Vec<usize>,
    /// True when the input could not be parsed and was returned
    /// untouched.
    pub fail_open: bool,
}

/// Splices `-o APT::Sandbox::User=root` after every apt / apt-get
/// command token that does not already carry that exact option pair.
/// Everything else is preserved byte for byte; unparseable input is
/// returned unchanged with `fail_open` set.
pub fn rewrite_apt(text: &str) -> RewriteOutcome {
    let unchanged = |fail_open| RewriteOutcome {
        text: text.to_string(),
        injections: Vec::new(),
        fail_open,
    };
    if !text.contains("apt") {
        return unchanged(false);
    }
    let split = split_statements(text);
    if !split.parse_ok {
        return unchanged(true);
    }

    let mut insert_at: Vec<usize> = Vec::new();
    for stmt in &split.statements {
        let Some(cmd) = &stmt.command else { continue };
        let cmd_text = &text[cmd.clone()];
        let basename = cmd_text.rsplit('/').next().unwrap_or(cmd_text);
        if basename != "apt" && basename != "apt-get" {
            continue;
        }
        let already = stmt.tokens.windows(2).any(|pair| {
            &text[pair[0].clone()] == OPTION_TOKEN && &text[pair[1].clone()] == VALUE_TOKEN
        });
        if already {
            continue;
        }
        insert_at.push(cmd.end);
    }

    if insert_at.is_empty() {
        return unchanged(false);
    }

    let mut out = String::with_capacity(text.len() + insert_at.len() * INJECTION.len());
    let mut injections = Vec::with_capacity(insert_at.len());
    let mut prev = 0;
    for &at in &insert_at {
        out.push_str(&text[prev..at]);
        injections.push(out.len());
        out.push_str(INJECTION);
        prev = at;
    }
    out.push_str(&text[prev..]);
    RewriteOutcome { text: out, injections, fail_open: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rewritten(input: &str) -> String {
        rewrite_apt(input).text
    }

    #[test]
    fn curated_cases() {
        let cases: &[(&str, &str)] = &[
            // Plain injections.
            ("apt update", "apt -o APT::Sandbox::User=root update"),
            ("apt-get update", "apt-get -o APT::Sandbox::User=root update"),
            ("apt", "apt -o APT::Sandbox::User=root"),
            ("/usr/bin/apt-get install -y gcc", "/usr/bin/apt-get -o APT::Sandbox::User=root install -y gcc"),
            // Assignments before the command are skipped, not treated
            // as the command.
            (
                "DEBIAN_FRONTEND=noninteractive apt-get install -y vim",
                "DEBIAN_FRONTEND=noninteractive apt-get -o APT::Sandbox::User=root install -y vim",
            ),
            (
                "FOO=1 BAR=2 apt update",
                "FOO=1 BAR=2 apt -o APT::Sandbox::User=root update",
            ),
            // Every statement is considered.
            (
                "apt-get update && apt-get install -y gcc",
                "apt-get -o APT::Sandbox::User=root update && apt-get -o APT::Sandbox::User=root install -y gcc",
            ),
            (
                "apt update; apt upgrade",
                "apt -o APT::Sandbox::User=root update; apt -o APT::Sandbox::User=root upgrade",
            ),
            (
                "apt update\napt-get upgrade",
                "apt -o APT::Sandbox::User=root update\napt-get -o APT::Sandbox::User=root upgrade",
            ),
            (
                "apt update | tee log",
                "apt -o APT::Sandbox::User=root update | tee log",
            ),
            ("apt update &", "apt -o APT::Sandbox::User=root update &"),
            (
                "apt update && echo done || echo failed",
                "apt -o APT::Sandbox::User=root update && echo done || echo failed",
            ),
            // Words that merely contain or resemble apt do not match.
            ("aptitude install x", "aptitude install x"),
            ("get-apt update", "get-apt update"),
            ("echo apt update", "echo apt update"),
            ("ls /etc/apt", "ls /etc/apt"),
            // apt inside quotes is data, not a command.
            ("echo 'apt update'", "echo 'apt update'"),
            ("echo \"run apt update && apt upgrade\"", "echo \"run apt update && apt upgrade\""),
            // A quoted command name is left alone: the scanner does
            // not unquote, so it cannot be sure of the basename.
            ("'apt' update", "'apt' update"),
            // The option pair is only recognized as the exact
            // adjacent tokens; other -o options do not count.
            (
                "apt-get -o Acquire::Retries=3 update",
                "apt-get -o APT::Sandbox::User=root -o Acquire::Retries=3 update",
            ),
            // Already-injected statements are left alone.
            (
                "apt -o APT::Sandbox::User=root update",
                "apt -o APT::Sandbox::User=root update",
            ),
            // The rewrite cannot see through command runners; this is
            // a documented limitation, not a target.
            ("sudo apt update", "sudo apt update"),
            ("env A=1 apt update", "env A=1 apt update"),
            // Escaped whitespace fuses tokens.
            ("apt\\ get update", "apt\\ get update"),
            ("", ""),
        ];
        for (input, expected) in cases {
            assert_eq!(&rewritten(input), expected, "input: {input:?}");
        }
    }

    #[test]
    fn unbalanced_quotes_fail_open() {
        for input in [
            "apt install 'foo",
            "apt install \"bar",
            "apt install foo\\",
            "echo 'a && apt update",
        ] {
            let out = rewrite_apt(input);
            assert!(out.fail_open, "input: {input:?}");
            assert_eq!(out.text, input);
            assert!(out.injections.is_empty());
        }
    }

    #[test]
    fn balanced_input_is_not_fail_open() {
        assert!(!rewrite_apt("apt install 'foo bar'").fail_open);
        assert!(!rewrite_apt("echo hi").fail_open);
    }

    #[test]
    fn statements_split_on_unquoted_separators_only() {
        let out = split_statements("a && b 'x; y' | c \"d | e\"");
        assert_eq!(out.statements.len(), 3);
        assert!(out.parse_ok);
        let texts: Vec<&str> = out
            .statements
            .iter()
            .map(|s| "a && b 'x; y' | c \"d | e\"".get(s.span.clone()).unwrap())
            .collect();
        assert_eq!(texts, vec!["a", "b 'x; y'", "c \"d | e\""]);
    }

    #[test]
    fn command_skips_assignments() {
        let text = "A=1 B='q w' apt update";
        let out = split_statements(text);
        let stmt = &out.statements[0];
        let cmd = stmt.command.clone().unwrap();
        assert_eq!(&text[cmd], "apt");
    }

    #[test]
    fn statement_of_only_assignments_has_no_command() {
        let out = split_statements("A=1 B=2");
        assert_eq!(out.statements[0].command, None);
        assert!(rewrite_apt("A=apt B=2").injections.is_empty());
    }

    #[test]
    fn injection_offsets_point_at_injected_text() {
        let out = rewrite_apt("apt update && apt-get upgrade");
        assert_eq!(out.injections.len(), 2);
        for &at in &out.injections {
            assert_eq!(&out.text[at..at + INJECTION.len()], INJECTION);
        }
    }

    #[test]
    fn rewrite_is_idempotent_on_curated_inputs() {
        for input in [
            "apt update",
            "apt-get update && apt-get install -y gcc",
            "DEBIAN_FRONTEND=noninteractive apt-get install -y vim",
            "apt update; echo 'apt upgrade'",
        ] {
            let once = rewrite_apt(input);
            let twice = rewrite_apt(&once.text);
            assert_eq!(twice.text, once.text, "input: {input:?}");
            assert!(twice.injections.is_empty());
        }
    }

    fn strip_injections(out: &RewriteOutcome) -> String {
        let mut original = String::new();
        let mut prev = 0;
        for &at in &out.injections {
            original.push_str(&out.text[prev..at]);
            assert_eq!(&out.text[at..at + INJECTION.len()], INJECTION);
            prev = at + INJECTION.len();
        }
        original.push_str(&out.text[prev..]);
        original
    }

    #[test]
    fn seeded_corpus_properties() {
        use rand::prelude::*;

        let commands = [
            "apt", "apt-get", "aptitude", "/usr/bin/apt", "/usr/bin/apt-get", "get-apt",
            "echo", "ls", "grep", "make",
        ];
        let args = [
            "update",
            "install",
            "-y",
            "gcc",
            "'quoted arg'",
            "\"double quoted\"",
            "'apt update'",
            "\"apt && apt\"",
            "a\\ b",
            "--flag=value",
            "/etc/apt/sources.list",
        ];
        let assignments = ["DEBIAN_FRONTEND=noninteractive", "A=1", "PATH=/bin", "X='a b'"];
        let separators = [" && ", " || ", "; ", " | ", " & ", "\n"];

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0x0a9c7);
        for case in 0..300 {
            let mut input = String::new();
            let n_statements = rng.random_range(1..=4);
            for s in 0..n_statements {
                if s > 0 {
                    input.push_str(separators.choose(&mut rng).unwrap());
                }
                for _ in 0..rng.random_range(0..=2) {
                    input.push_str(assignments.choose(&mut rng).unwrap());
                    input.push(' ');
                }
                input.push_str(commands.choose(&mut rng).unwrap());
                for _ in 0..rng.random_range(0..=3) {
                    input.push(' ');
                    input.push_str(args.choose(&mut rng).unwrap());
                }
            }
            if case % 10 == 0 {
                input.push_str(" '");
            }

            let out = rewrite_apt(&input);

            let again = rewrite_apt(&out.text);
            assert_eq!(again.text, out.text, "not idempotent on {input:?}");

            assert_eq!(strip_injections(&out), input, "bytes lost on {input:?}");

            if !input.contains("apt") {
                assert_eq!(out.text, input);
                assert!(out.injections.is_empty());
            }
            if out.fail_open {
                assert_eq!(out.text, input);
            }
        }
    }
}
