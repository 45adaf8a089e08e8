//! Corpus readers. Every reader produces [`AnnotatedDocument`]s in the
//! canonical form written by [`crate::document::write_corpus`].
//!
//! [`AnnotatedDocument`]: crate::document::AnnotatedDocument

pub mod brat;
pub mod dir;
pub mod html;
pub mod persuade;
pub mod sentences;
pub mod stats;

use unicode_normalization::{is_nfc, UnicodeNormalization};

pub use brat::parse_brat_essay;
pub use dir::{read_dir, DirIngest, Format};
pub use html::{parse_html_essay, HtmlEssay};
pub use persuade::{parse_persuade_table, PersuadeOptions, PersuadeTable};
pub use sentences::split_sentences;
pub use stats::{corpus_stats, CorpusStats, StatGroup, StatRow};

/// Maps char offsets in raw input text to offsets in its NFC form.
pub(crate) struct OffsetMap<'a> {
    raw: &'a str,
    identity: bool,
}

impl<'a> OffsetMap<'a> {
    pub(crate) fn new(raw: &'a str) -> Self {
        OffsetMap {
            raw,
            identity: is_nfc(raw),
        }
    }

    pub(crate) fn map(&self, offset: usize) -> usize {
        if self.identity {
            return offset;
        }
        let total = self.raw.chars().count();
        if offset > total {
            return self.raw.nfc().count() + (offset - total);
        }
        let byte = self
            .raw
            .char_indices()
            .nth(offset)
            .map_or(self.raw.len(), |(b, _)| b);
        self.raw[..byte].nfc().count()
    }
}
