//! Syntactic-validity predicates for mined code blocks.

use std::panic::{catch_unwind, AssertUnwindSafe};

/// Decides whether a code block is plausibly valid source.
pub trait SnippetValidator: Send + Sync {
    fn name(&self) -> &'static str;
    fn accepts(&self, code: &str) -> bool;
}

/// Default predicate: balanced brackets and quotes, and indentation that
/// does not mix tabs and spaces.
#[derive(Debug, Clone, Copy, Default)]
pub struct BalancedValidator;

/// Stricter predicate that also simulates Python's indentation stack:
/// a block opener (`:`) must be followed by a deeper line and dedents must
/// return to an enclosing level.
#[derive(Debug, Clone, Copy, Default)]
pub struct IndentationValidator;

/// Runs a validator; a panicking validator counts as a rejection.
pub fn validate_snippet(code: &str, validator: &dyn SnippetValidator) -> bool {
    match catch_unwind(AssertUnwindSafe(|| validator.accepts(code))) {
        Ok(ok) => ok,
        Err(_) => {
            log::warn!("validator {} panicked; rejecting snippet", validator.name());
            false
        }
    }
}

#[derive(Debug)]
struct LogicalLine {
    indent: String,
    last_char: char,
}

/// Splits code into logical lines, tracking brackets, strings, comments and
/// backslash continuations. Returns `None` when brackets or quotes do not
/// balance.
fn scan(code: &str) -> Option<Vec<LogicalLine>> {
    let chars: Vec<char> = code.chars().collect();
    let n = chars.len();
    let mut lines = Vec::new();
    let mut stack: Vec<char> = Vec::new();
    let mut i = 0;
    while i < n {
        // Start of a physical line at bracket depth zero.
        let start = i;
        while i < n && (chars[i] == ' ' || chars[i] == '\t') {
            i += 1;
        }
        if i >= n {
            break;
        }
        if chars[i] == '\n' || chars[i] == '\r' {
            i += 1;
            continue;
        }
        if chars[i] == '#' {
            while i < n && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let indent: String = chars[start..i].iter().collect();
        let mut last_char = chars[i];
        loop {
            if i >= n {
                break;
            }
            let c = chars[i];
            match c {
                '#' => {
                    while i < n && chars[i] != '\n' {
                        i += 1;
                    }
                    continue;
                }
                '\\' if i + 1 < n && chars[i + 1] == '\n' => {
                    i += 2;
                    continue;
                }
                '\n' => {
                    i += 1;
                    if stack.is_empty() {
                        break;
                    }
                    continue;
                }
                '"' | '\'' => {
                    i = skip_string(&chars, i)?;
                    last_char = c;
                    continue;
                }
                '(' | '[' | '{' => stack.push(c),
                ')' | ']' | '}' => {
                    let open = match c {
                        ')' => '(',
                        ']' => '[',
                        _ => '{',
                    };
                    if stack.pop() != Some(open) {
                        return None;
                    }
                }
                _ => {}
            }
            if !c.is_whitespace() {
                last_char = c;
            }
            i += 1;
        }
        lines.push(LogicalLine { indent, last_char });
    }
    stack.is_empty().then_some(lines)
}

/// Returns the index just past the string literal opening at `i`.
fn skip_string(chars: &[char], i: usize) -> Option<usize> {
    let q = chars[i];
    let n = chars.len();
    let triple = i + 2 < n && chars[i + 1] == q && chars[i + 2] == q;
    let mut j = if triple { i + 3 } else { i + 1 };
    while j < n {
        match chars[j] {
            '\\' => j += 2,
            '\n' if !triple => return None,
            c if c == q => {
                if !triple {
                    return Some(j + 1);
                }
                if j + 2 < n && chars[j + 1] == q && chars[j + 2] == q {
                    return Some(j + 3);
                }
                j += 1;
            }
            _ => j += 1,
        }
    }
    None
}

fn consistent_indent_chars(lines: &[LogicalLine]) -> bool {
    let tabs = lines.iter().any(|l| l.indent.contains('\t'));
    let spaces = lines.iter().any(|l| l.indent.contains(' '));
    !(tabs && spaces)
}

impl SnippetValidator for BalancedValidator {
    fn name(&self) -> &'static str {
        "balanced"
    }

    fn accepts(&self, code: &str) -> bool {
        match scan(code) {
            Some(lines) => !lines.is_empty() && consistent_indent_chars(&lines),
            None => false,
        }
    }
}

impl SnippetValidator for IndentationValidator {
    fn name(&self) -> &'static str {
        "indentation"
    }

    fn accepts(&self, code: &str) -> bool {
        let Some(lines) = scan(code) else { return false };
        if lines.is_empty() || !consistent_indent_chars(&lines) {
            return false;
        }
        let mut levels: Vec<usize> = vec![0];
        let mut expect_block = false;
        for line in &lines {
            let width = line.indent.chars().count();
            let top = *levels.last().expect("levels never empty");
            if expect_block {
                if width <= top {
                    return false;
                }
                levels.push(width);
            } else if width > top {
                return false;
            } else {
                while *levels.last().expect("levels never empty") > width {
                    levels.pop();
                }
                if *levels.last().expect("levels never empty") != width {
                    return false;
                }
            }
            expect_block = line.last_char == ':';
        }
        !expect_block
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_examples() {
        assert!(validate_snippet("x = (1, 2)", &BalancedValidator));
        assert!(!validate_snippet("x = (1,", &BalancedValidator));
        assert!(!validate_snippet("x = [1, 2)", &BalancedValidator));
        assert!(!validate_snippet("s = 'abc", &BalancedValidator));
        assert!(!validate_snippet("   \n", &BalancedValidator));
    }

    #[test]
    fn brackets_inside_strings_and_comments_ignored() {
        assert!(validate_snippet("s = '(' # )\nt = \"\"\"[\n\"\"\"", &BalancedValidator));
    }

    #[test]
    fn missing_indent_diverges_between_predicates() {
        let code = "if x:\nprint(x)";
        assert!(validate_snippet(code, &BalancedValidator));
        assert!(!validate_snippet(code, &IndentationValidator));
    }

    #[test]
    fn indentation_validator_accepts_nested_blocks() {
        let code = "def f(x):\n    if x:\n        return (1,\n  2)\n    return 0\n\nprint(f(1))\n";
        assert!(validate_snippet(code, &IndentationValidator));
        assert!(!validate_snippet("x = 1\n    y = 2", &IndentationValidator));
        assert!(!validate_snippet("if a:\n    b\n  c", &IndentationValidator));
        assert!(!validate_snippet("for x in y:", &IndentationValidator));
    }

    #[test]
    fn mixed_tabs_and_spaces_rejected() {
        assert!(!validate_snippet("if a:\n\tb\nif c:\n    d", &BalancedValidator));
    }

    struct Exploding;

    impl SnippetValidator for Exploding {
        fn name(&self) -> &'static str {
            "exploding"
        }
        fn accepts(&self, _: &str) -> bool {
            panic!("boom")
        }
    }

    #[test]
    fn panicking_validator_rejects() {
        assert!(!validate_snippet("x = 1", &Exploding));
    }
}
