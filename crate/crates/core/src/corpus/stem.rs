//! Table-driven Porter stemmer.
//!
//! The suffix tables for steps 1a, 2, 3 and 4 live in `data/stem_rules.tsv`;
//! the context-sensitive steps (1b, 1c, 5) are implemented in code.

use std::sync::OnceLock;

const RULES_TSV: &str = include_str!("../../data/stem_rules.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    S1a,
    S2,
    S3,
    S4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Condition {
    Always,
    MeasureAbove(usize),
    MeasureAboveEndsST(usize),
}

#[derive(Debug, Clone)]
struct Rule {
    step: Step,
    suffix: &'static str,
    replacement: &'static str,
    condition: Condition,
}

fn rules() -> &'static [Rule] {
    static RULES: OnceLock<Vec<Rule>> = OnceLock::new();
    RULES.get_or_init(|| parse_rules(RULES_TSV))
}

fn parse_rules(text: &'static str) -> Vec<Rule> {
    let mut out = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&'static str> = line.split('\t').collect();
        assert_eq!(cols.len(), 4, "bad stem rule line: {line}");
        let step = match cols[0] {
            "1a" => Step::S1a,
            "2" => Step::S2,
            "3" => Step::S3,
            "4" => Step::S4,
            other => panic!("unknown stem step {other}"),
        };
        let replacement = if cols[2] == "-" { "" } else { cols[2] };
        let condition = match cols[3] {
            "-" => Condition::Always,
            c => {
                let (measure, st) = match c.strip_suffix(";st") {
                    Some(m) => (m, true),
                    None => (c, false),
                };
                let n: usize = measure
                    .strip_prefix("m>")
                    .and_then(|n| n.parse().ok())
                    .unwrap_or_else(|| panic!("bad stem condition {c}"));
                if st {
                    Condition::MeasureAboveEndsST(n)
                } else {
                    Condition::MeasureAbove(n)
                }
            }
        };
        out.push(Rule { step, suffix: cols[1], replacement, condition });
    }
    out
}

fn is_consonant(w: &[u8], i: usize) -> bool {
    match w[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => false,
        b'y' => i == 0 || !is_consonant(w, i - 1),
        _ => true,
    }
}

/// Number of VC sequences in `w`, i.e. `m` in `[C](VC)^m[V]`.
fn measure(w: &[u8]) -> usize {
    let mut m = 0;
    let mut i = 0;
    let n = w.len();
    while i < n && is_consonant(w, i) {
        i += 1;
    }
    loop {
        while i < n && !is_consonant(w, i) {
            i += 1;
        }
        if i >= n {
            return m;
        }
        while i < n && is_consonant(w, i) {
            i += 1;
        }
        m += 1;
        if i >= n {
            return m;
        }
    }
}

fn has_vowel(w: &[u8]) -> bool {
    (0..w.len()).any(|i| !is_consonant(w, i))
}

fn ends_double_consonant(w: &[u8]) -> bool {
    let n = w.len();
    n >= 2 && w[n - 1] == w[n - 2] && is_consonant(w, n - 1)
}

/// `*o`: stem ends consonant-vowel-consonant, final consonant not w, x or y.
fn ends_cvc(w: &[u8]) -> bool {
    let n = w.len();
    n >= 3
        && is_consonant(w, n - 3)
        && !is_consonant(w, n - 2)
        && is_consonant(w, n - 1)
        && !matches!(w[n - 1], b'w' | b'x' | b'y')
}

fn apply_table(w: &mut Vec<u8>, step: Step) {
    let best = rules()
        .iter()
        .filter(|r| r.step == step && w.ends_with(r.suffix.as_bytes()))
        .max_by_key(|r| r.suffix.len());
    let Some(rule) = best else { return };
    let stem_len = w.len() - rule.suffix.len();
    let stem = &w[..stem_len];
    let ok = match rule.condition {
        Condition::Always => true,
        Condition::MeasureAbove(n) => measure(stem) > n,
        Condition::MeasureAboveEndsST(n) => {
            measure(stem) > n && matches!(stem.last(), Some(b's') | Some(b't'))
        }
    };
    if ok {
        w.truncate(stem_len);
        w.extend_from_slice(rule.replacement.as_bytes());
    }
}

fn step1b(w: &mut Vec<u8>) {
    if w.ends_with(b"eed") {
        if measure(&w[..w.len() - 3]) > 0 {
            w.pop();
        }
        return;
    }
    let removed = if w.ends_with(b"ed") && has_vowel(&w[..w.len() - 2]) {
        w.truncate(w.len() - 2);
        true
    } else if w.ends_with(b"ing") && has_vowel(&w[..w.len() - 3]) {
        w.truncate(w.len() - 3);
        true
    } else {
        false
    };
    if !removed {
        return;
    }
    if w.ends_with(b"at") || w.ends_with(b"bl") || w.ends_with(b"iz") {
        w.push(b'e');
    } else if ends_double_consonant(w) && !matches!(w.last(), Some(b'l' | b's' | b'z')) {
        w.pop();
    } else if measure(w) == 1 && ends_cvc(w) {
        w.push(b'e');
    }
}

fn step1c(w: &mut [u8]) {
    let n = w.len();
    if n > 1 && w[n - 1] == b'y' && has_vowel(&w[..n - 1]) {
        w[n - 1] = b'i';
    }
}

fn step5(w: &mut Vec<u8>) {
    if w.last() == Some(&b'e') {
        let stem = &w[..w.len() - 1];
        let m = measure(stem);
        if m > 1 || (m == 1 && !ends_cvc(stem)) {
            w.pop();
        }
    }
    if w.ends_with(b"ll") && measure(w) > 1 {
        w.pop();
    }
}

/// One pass of the Porter algorithm. Words that are not plain lowercase
/// ASCII, or have at most two letters, are returned unchanged.
pub fn stem(word: &str) -> String {
    if word.len() <= 2 || !word.bytes().all(|b| b.is_ascii_lowercase()) {
        return word.to_string();
    }
    let mut w = word.as_bytes().to_vec();
    apply_table(&mut w, Step::S1a);
    step1b(&mut w);
    step1c(&mut w);
    apply_table(&mut w, Step::S2);
    apply_table(&mut w, Step::S3);
    apply_table(&mut w, Step::S4);
    step5(&mut w);
    // Only ASCII bytes were ever written.
    String::from_utf8(w).expect("stemmer produced ascii")
}

/// Repeats [`stem`] until the word stops changing, so the result is a
/// fixed point (`lemma(lemma(w)) == lemma(w)`).
pub fn lemma(word: &str) -> String {
    let mut current = stem(word);
    // Every pass either shortens the word or adds back at most one 'e'
    // that the next pass removes; a small cap is plenty.
    for _ in 0..16 {
        let next = stem(&current);
        if next == current {
            break;
        }
        current = next;
    }
    current
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_porter_examples() {
        let cases = [
            ("caresses", "caress"),
            ("ponies", "poni"),
            ("cats", "cat"),
            ("feed", "feed"),
            ("agreed", "agre"),
            ("plastered", "plaster"),
            ("motoring", "motor"),
            ("sing", "sing"),
            ("conflated", "conflat"),
            ("hopping", "hop"),
            ("falling", "fall"),
            ("filing", "file"),
            ("happy", "happi"),
            ("relational", "relat"),
            ("conditional", "condit"),
            ("triplicate", "triplic"),
            ("hopeful", "hope"),
            ("goodness", "good"),
            ("revival", "reviv"),
            ("adoption", "adopt"),
            ("controll", "control"),
            ("generalizations", "gener"),
            ("plotting", "plot"),
            ("plots", "plot"),
            ("histogram", "histogram"),
            ("uses", "us"),
            ("using", "us"),
        ];
        for (word, expected) in cases {
            assert_eq!(stem(word), expected, "stem({word})");
        }
    }

    #[test]
    fn measure_matches_definition() {
        assert_eq!(measure(b"tr"), 0);
        assert_eq!(measure(b"ee"), 0);
        assert_eq!(measure(b"tree"), 0);
        assert_eq!(measure(b"trouble"), 1);
        assert_eq!(measure(b"oats"), 1);
        assert_eq!(measure(b"troubles"), 2);
        assert_eq!(measure(b"private"), 2);
    }

    #[test]
    fn non_ascii_and_short_words_untouched() {
        assert_eq!(stem("øøø"), "øøø");
        assert_eq!(stem("is"), "is");
        assert_eq!(stem("Plotting"), "Plotting");
        assert_eq!(stem("py3"), "py3");
    }

    #[test]
    fn lemma_is_fixed_point() {
        for w in ["agreed", "conflated", "generalizations", "relational", "dataframes"] {
            let once = lemma(w);
            assert_eq!(lemma(&once), once);
        }
    }
}
