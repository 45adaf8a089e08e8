//! Merge-based subword vocabulary with reserved special tokens.
//!
//! Words are whitespace-delimited. The first char of every word carries the
//! `▁` sentinel, so `cat` is segmented from `▁cat`. Encoding is greedy
//! longest-prefix matching; a position where nothing matches becomes
//! `<unk>` and consumes one char.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const SENTINEL: char = '\u{2581}';

/// Special token strings in id order.
pub const SPECIALS: [&str; 8] = [
    "<pad>", "<unk>", "<mask>", "<sep>", "<cls>", "<Source>", "<Target>", "<->",
];

const HEADER: &str = "#vocab v1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    pieces: Vec<String>,
    ids: HashMap<String, usize>,
    max_piece_chars: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TokenizedText {
    pub token_ids: Vec<usize>,
    /// Index of each word's first subword in `token_ids`.
    pub word_alignment: Vec<usize>,
    /// Token position where each unit group starts (sentences, paragraphs),
    /// filled by [`Vocab::encode_groups`].
    pub unit_boundaries: Vec<usize>,
}

fn base_symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                format!("{SENTINEL}{c}")
            } else {
                c.to_string()
            }
        })
        .collect()
}

fn merge_word(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let r = symbols.remove(i + 1);
            symbols[i].push_str(&r);
        }
        i += 1;
    }
}

impl Vocab {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const MASK: usize = 2;
    pub const SEP: usize = 3;
    pub const CLS: usize = 4;
    pub const SOURCE: usize = 5;
    pub const TARGET: usize = 6;
    /// Ignore marker; never produced by text encoding.
    pub const IGNORE: usize = 7;

    fn from_pieces(pieces: Vec<String>) -> Result<Vocab> {
        if pieces.len() < SPECIALS.len() || pieces[..SPECIALS.len()] != SPECIALS {
            return Err(Error::config(
                "vocabulary must start with the special tokens",
            ));
        }
        let mut ids = HashMap::with_capacity(pieces.len());
        for (i, p) in pieces.iter().enumerate().skip(SPECIALS.len()) {
            if p.is_empty() || p.chars().any(char::is_whitespace) {
                return Err(Error::config(format!("bad vocabulary piece {p:?}")));
            }
            if ids.insert(p.clone(), i).is_some() {
                return Err(Error::config(format!("duplicate vocabulary piece {p:?}")));
            }
        }
        let max_piece_chars = pieces[SPECIALS.len()..]
            .iter()
            .map(|p| p.chars().count())
            .max()
            .unwrap_or(1);
        Ok(Vocab {
            pieces,
            ids,
            max_piece_chars,
        })
    }

    fn base_set<S: AsRef<str>>(corpus: &[S]) -> BTreeSet<String> {
        let mut base: BTreeSet<String> = [format!("{SENTINEL}:"), ":".to_string()].into();
        for text in corpus {
            for c in text.as_ref().chars().filter(|c| !c.is_whitespace()) {
                base.insert(c.to_string());
                base.insert(format!("{SENTINEL}{c}"));
            }
        }
        base
    }

    /// Smallest size `train` accepts: specials plus base symbols.
    pub fn min_size<S: AsRef<str>>(corpus: &[S]) -> usize {
        SPECIALS.len() + Self::base_set(corpus).len()
    }

    /// Learn a vocabulary of at most `size` entries (specials, base
    /// symbols, merges). Pair frequency ties go to the lexicographically
    /// smallest pair.
    pub fn train<S: AsRef<str>>(corpus: &[S], size: usize) -> Result<Vocab> {
        let mut word_freq: HashMap<&str, u64> = HashMap::new();
        for text in corpus {
            for w in text.as_ref().split_whitespace() {
                *word_freq.entry(w).or_default() += 1;
            }
        }
        let base = Self::base_set(corpus);
        let floor = SPECIALS.len() + base.len();
        if size < floor {
            return Err(Error::usage(format!(
                "vocabulary size {size} is below the {floor} specials and base symbols"
            )));
        }
        let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        pieces.extend(base);
        let mut known: BTreeSet<String> = pieces.iter().cloned().collect();

        let mut words: Vec<(Vec<String>, u64)> = word_freq
            .into_iter()
            .map(|(w, f)| (base_symbols(w), f))
            .collect();
        words.sort();

        while pieces.len() < size {
            let mut counts: HashMap<(&str, &str), u64> = HashMap::new();
            for (syms, f) in &words {
                for p in syms.windows(2) {
                    *counts.entry((p[0].as_str(), p[1].as_str())).or_default() += f;
                }
            }
            let Some(((l, r), _)) = counts
                .into_iter()
                .max_by(|(pa, ca), (pb, cb)| ca.cmp(cb).then_with(|| pb.cmp(pa)))
            else {
                break;
            };
            let (l, r) = (l.to_string(), r.to_string());
            for (syms, _) in &mut words {
                merge_word(syms, &l, &r);
            }
            let merged = format!("{l}{r}");
            if known.insert(merged.clone()) {
                pieces.push(merged);
            }
        }
        Vocab::from_pieces(pieces)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn piece(&self, id: usize) -> Option<&str> {
        self.pieces.get(id).map(String::as_str)
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.ids.get(piece).copied()
    }

    /// Id of the literal `:` used after the source/target markers.
    pub fn colon(&self) -> usize {
        self.id(":").unwrap_or(Self::UNK)
    }

    fn encode_word(&self, word: &str, out: &mut Vec<usize>) {
        let mut chars: Vec<char> = Vec::with_capacity(word.chars().count() + 1);
        chars.push(SENTINEL);
        chars.extend(word.chars());
        let mut i = 0;
        let mut buf = String::new();
        while i < chars.len() {
            // the sentinel never stands alone
            let min_end = if i == 0 { 2 } else { i + 1 };
            let mut found = None;
            let max_end = chars.len().min(i + self.max_piece_chars);
            for end in (min_end..=max_end).rev() {
                buf.clear();
                buf.extend(&chars[i..end]);
                if let Some(&id) = self.ids.get(buf.as_str()) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    i = end;
                }
                None => {
                    out.push(Self::UNK);
                    i = min_end.min(chars.len());
                }
            }
        }
    }

    pub fn encode_words<S: AsRef<str>>(&self, words: &[S]) -> TokenizedText {
        let mut t = TokenizedText::default();
        for w in words {
            t.word_alignment.push(t.token_ids.len());
            self.encode_word(w.as_ref(), &mut t.token_ids);
        }
        t
    }

    /// Encode groups of words back to back, recording where each group
    /// starts.
    pub fn encode_groups<S: AsRef<str>>(&self, groups: &[Vec<S>]) -> TokenizedText {
        let mut t = TokenizedText::default();
        for g in groups {
            t.unit_boundaries.push(t.token_ids.len());
            for w in g {
                t.word_alignment.push(t.token_ids.len());
                self.encode_word(w.as_ref(), &mut t.token_ids);
            }
        }
        t
    }

    /// Inverse of encoding: pieces joined, sentinels become spaces between
    /// words. Special tokens render as their names.
    pub fn decode(&self, ids: &[usize]) -> String {
        let mut out = String::new();
        for &id in ids {
            let p = self.piece(id).unwrap_or(SPECIALS[Self::UNK]);
            match p.strip_prefix(SENTINEL) {
                Some(rest) => {
                    if !out.is_empty() {
                        out.push(' ');
                    }
                    out.push_str(rest);
                }
                None => out.push_str(p),
            }
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{HEADER}\n#specials {}\n", SPECIALS.join(" "));
        for p in &self.pieces[SPECIALS.len()..] {
            let _ = writeln!(s, "{p}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Vocab> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(Error::parse(1, format!("expected `{HEADER}`")));
        }
        let specials: Vec<&str> = lines
            .next()
            .and_then(|l| l.strip_prefix("#specials "))
            .ok_or_else(|| Error::parse(2, "expected `#specials` line"))?
            .split(' ')
            .collect();
        if specials != SPECIALS {
            return Err(Error::parse(2, "special tokens differ from this build"));
        }
        let mut pieces: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        pieces.extend(lines.map(str::to_string));
        Vocab::from_pieces(pieces)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Vocab> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Vocab::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_len(corpus: &[&str]) -> usize {
        Vocab::min_size(corpus)
    }

    #[test]
    fn first_merge_on_toy_corpus() {
        let corpus = ["aaab", "aaab"];
        let floor = base_len(&corpus);
        let v = Vocab::train(&corpus, floor + 1).unwrap();
        assert_eq!(v.len(), floor + 1);
        assert_eq!(v.piece(floor), Some("aa"));
    }

    #[test]
    fn char_level_without_merges() {
        let corpus = ["abc cab"];
        let floor = base_len(&corpus);
        let v = Vocab::train(&corpus, floor).unwrap();
        assert!(v.pieces[SPECIALS.len()..].iter().all(|p| p
            .trim_start_matches(SENTINEL)
            .chars()
            .count()
            == 1));
        let t = v.encode_words(&["cab"]);
        assert_eq!(t.token_ids.len(), 3);
    }

    #[test]
    fn deterministic() {
        let corpus = ["the cat sat", "on the mat the end"];
        assert_eq!(
            Vocab::train(&corpus, 60).unwrap(),
            Vocab::train(&corpus, 60).unwrap()
        );
    }

    #[test]
    fn too_small() {
        assert!(matches!(Vocab::train(&["abc"], 5), Err(Error::Usage(_))));
    }

    fn toy(pieces: &[&str]) -> Vocab {
        let mut p: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        p.extend(pieces.iter().map(|s| s.to_string()));
        Vocab::from_pieces(p).unwrap()
    }

    #[test]
    fn encode_examples() {
        let v = toy(&["\u{2581}cat", "s", "x", ":"]);
        let t = v.encode_words(&["cat"]);
        assert_eq!((t.token_ids.len(), t.word_alignment.clone()), (1, vec![0]));
        let t = v.encode_words(&["cats"]);
        assert_eq!(
            t.token_ids,
            vec![v.id("\u{2581}cat").unwrap(), v.id("s").unwrap()]
        );
        assert_eq!(t.word_alignment, vec![0]);
        let t = v.encode_words(&["\u{2205}x"]);
        assert_eq!(t.token_ids, vec![Vocab::UNK, v.id("x").unwrap()]);
    }

    #[test]
    fn never_emits_specials_other_than_unk() {
        let v = toy(&["\u{2581}a"]);
        let t = v.encode_words(&["<mask>", "<->", "a"]);
        assert!(t
            .token_ids
            .iter()
            .all(|&i| i == Vocab::UNK || i >= SPECIALS.len()));
    }

    #[test]
    fn round_trip_and_file() {
        let corpus = ["some words here", "and some more words"];
        let v = Vocab::train(&corpus, 70).unwrap();
        let words = ["more", "words", "here", "some"];
        let t = v.encode_words(&words);
        assert_eq!(v.decode(&t.token_ids), words.join(" "));
        assert_eq!(Vocab::from_text(&v.to_text()).unwrap(), v);
    }

    #[test]
    fn groups_record_boundaries() {
        let v = toy(&["\u{2581}a", "\u{2581}b"]);
        let t = v.encode_groups(&[vec!["a", "b"], vec!["a"]]);
        assert_eq!(t.unit_boundaries, vec![0, 2]);
        assert_eq!(t.word_alignment, vec![0, 1, 2]);
    }
}
