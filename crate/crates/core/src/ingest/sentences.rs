//! Rule-based sentence splitting.
//!
//! A sentence ends at a run of terminal punctuation (`.`, `!`, `?`) that is
//! followed by whitespace or the end of the paragraph. Closing quotes and
//! brackets directly after the punctuation belong to the sentence. A lone
//! `.` after a known abbreviation or an initialism (`U.S.`) does not end a
//! sentence. Text left over
//! at the end of a paragraph is closed as a final sentence.

use crate::document::{is_space, CharRange};

const TERMINALS: &[char] = &['.', '!', '?'];
const CLOSERS: &[char] = &['"', '\'', '\u{201d}', '\u{2019}', ')', ']', '}', '\u{bb}'];
const OPENERS: &[char] = &['"', '\'', '\u{201c}', '\u{2018}', '(', '[', '{', '\u{ab}'];

const ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "sr", "jr", "st", "vs", "mt", "e.g", "i.e", "approx", "dept",
    "fig", "vol",
];

fn is_abbreviation(chars: &[char], dot: usize) -> bool {
    let mut s = dot;
    while s > 0 && !is_space(chars[s - 1]) {
        s -= 1;
    }
    let token: String = chars[s..dot]
        .iter()
        .skip_while(|c| OPENERS.contains(c))
        .collect::<String>()
        .to_lowercase();
    let initialism = token.contains('.')
        && token
            .split('.')
            .all(|seg| seg.chars().count() == 1 && seg.chars().all(char::is_alphabetic));
    initialism || ABBREVIATIONS.contains(&token.as_str())
}

/// Split one paragraph into sentence ranges (char offsets relative to
/// `paragraph`). The ranges cover every non-whitespace char exactly once
/// and never start or end with whitespace.
pub fn split_sentences(paragraph: &str) -> Vec<CharRange> {
    let chars: Vec<char> = paragraph.chars().collect();
    let n = chars.len();
    let mut out = Vec::new();
    let skip_space = |mut i: usize| {
        while i < n && is_space(chars[i]) {
            i += 1;
        }
        i
    };
    let mut start = skip_space(0);
    let mut i = start;
    while i < n {
        if !TERMINALS.contains(&chars[i]) {
            i += 1;
            continue;
        }
        let mut k = i;
        while k < n && TERMINALS.contains(&chars[k]) {
            k += 1;
        }
        let single_dot = k == i + 1 && chars[i] == '.';
        while k < n && CLOSERS.contains(&chars[k]) {
            k += 1;
        }
        let at_gap = k == n || is_space(chars[k]);
        if at_gap && !(single_dot && is_abbreviation(&chars, i)) {
            out.push(CharRange::new(start, k));
            start = skip_space(k);
            i = start;
        } else {
            i = k;
        }
    }
    if start < n {
        let mut end = n;
        while end > start && is_space(chars[end - 1]) {
            end -= 1;
        }
        out.push(CharRange::new(start, end));
    }
    out
}
