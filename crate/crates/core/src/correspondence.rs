//! Word-level collapse of any scheme and human-vs-synthetic cross tables.

use std::fmt::Write as _;

use crate::document::{AnnotatedDocument, Rater, Unit};
use crate::error::{Error, Result};
use crate::schemes::{Granularity, TagId, TagSet};

/// One tag per word from `rater`'s spans of `scheme` (the preferred rater
/// among those spans when `None`). A word covered by several spans takes
/// the one covering its first character.
pub fn collapse_to_words(
    doc: &AnnotatedDocument,
    scheme: &TagSet,
    rater: Option<Rater>,
) -> Vec<TagId> {
    let none = scheme.untagged();
    let unit = match scheme.granularity {
        Granularity::Sentence => Unit::Sentence,
        Granularity::Word => Unit::Word,
        Granularity::Span | Granularity::Pair => Unit::Char,
    };
    let spans: Vec<_> = doc
        .spans
        .iter()
        .filter(|s| s.unit == unit && scheme.tags.contains(&s.tag))
        .collect();
    let rater = rater.or_else(|| spans.iter().map(|s| s.rater).min());
    let mut out = vec![none; doc.words.len()];
    for (wi, w) in doc.words.iter().enumerate() {
        let hit = spans
            .iter()
            .filter(|s| Some(s.rater) == rater)
            .find(|s| match unit {
                Unit::Word => s.range().contains(&wi),
                Unit::Sentence => s.range().any(|si| {
                    doc.sentences
                        .get(si)
                        .is_some_and(|r| r.start <= w.start && w.start < r.end)
                }),
                Unit::Char => s.start <= w.start && w.start < s.end,
            });
        if let Some(s) = hit {
            out[wi] = s.tag.clone();
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorrespondenceMatrix {
    pub rows: Vec<TagId>,
    pub cols: Vec<TagId>,
    pub counts: Vec<Vec<u64>>,
    /// Row-normalized percentages; `None` for rows without support.
    pub cells: Vec<Option<Vec<f64>>>,
    /// Share of all words carrying each row (resp. column) tag.
    pub row_marginals: Vec<f64>,
    pub col_marginals: Vec<f64>,
    pub total: u64,
}

/// Cross-tabulate per-word tags. Row and column order follow the given tag
/// sets' labels; unknown tags are an error.
pub fn cross_tabulate(
    human: &[TagId],
    synthetic: &[TagId],
    rows: &TagSet,
    cols: &TagSet,
) -> Result<CorrespondenceMatrix> {
    if human.len() != synthetic.len() {
        return Err(Error::usage(format!(
            "{} human word tags vs {} synthetic",
            human.len(),
            synthetic.len()
        )));
    }
    let rl = rows.labels();
    let cl = cols.labels();
    let mut counts = vec![vec![0u64; cl.len()]; rl.len()];
    for (h, s) in human.iter().zip(synthetic) {
        let r = rows
            .label_id(h)
            .ok_or_else(|| Error::usage(format!("tag `{h}` is not in {}", rows.name)))?;
        let c = cols
            .label_id(s)
            .ok_or_else(|| Error::usage(format!("tag `{s}` is not in {}", cols.name)))?;
        counts[r][c] += 1;
    }
    let total = human.len() as u64;
    let pct = |n: u64, d: u64| {
        if d == 0 {
            0.0
        } else {
            100.0 * n as f64 / d as f64
        }
    };
    let cells = counts
        .iter()
        .map(|row| {
            let n: u64 = row.iter().sum();
            (n > 0).then(|| row.iter().map(|&c| pct(c, n)).collect())
        })
        .collect();
    let row_marginals = counts.iter().map(|r| pct(r.iter().sum(), total)).collect();
    let col_marginals = (0..cl.len())
        .map(|c| pct(counts.iter().map(|r| r[c]).sum(), total))
        .collect();
    Ok(CorrespondenceMatrix {
        rows: rl,
        cols: cl,
        counts,
        cells,
        row_marginals,
        col_marginals,
        total,
    })
}

/// Collapse both schemes over a corpus and tabulate.
pub fn correspond_corpus(
    docs: &[AnnotatedDocument],
    human: (&TagSet, Option<Rater>),
    synthetic: (&TagSet, Option<Rater>),
) -> Result<CorrespondenceMatrix> {
    let mut h = Vec::new();
    let mut s = Vec::new();
    for d in docs {
        h.extend(collapse_to_words(d, human.0, human.1));
        s.extend(collapse_to_words(d, synthetic.0, synthetic.1));
    }
    cross_tabulate(&h, &s, human.0, synthetic.0)
}

impl CorrespondenceMatrix {
    /// Tab-delimited table: human tags down, synthetic tags across, a `%`
    /// column of row marginals and a `%` row of column marginals.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("human");
        for c in &self.cols {
            let _ = write!(s, "\t{c}");
        }
        s.push_str("\t%\n");
        for (i, r) in self.rows.iter().enumerate() {
            let _ = write!(s, "{r}");
            match &self.cells[i] {
                Some(cells) => cells.iter().for_each(|v| {
                    let _ = write!(s, "\t{v:.1}");
                }),
                None => self.cols.iter().for_each(|_| s.push('\t')),
            }
            let _ = writeln!(s, "\t{:.1}", self.row_marginals[i]);
        }
        s.push('%');
        for v in &self.col_marginals {
            let _ = write!(s, "\t{v:.1}");
        }
        s.push('\n');
        s
    }

    /// Several matrices sharing rows, columns side by side.
    pub fn side_by_side(parts: &[CorrespondenceMatrix]) -> Result<String> {
        let Some(first) = parts.first() else {
            return Ok(String::new());
        };
        if parts.iter().any(|p| p.rows != first.rows) {
            return Err(Error::usage("matrices have different row tags"));
        }
        let mut s = String::from("human");
        for p in parts {
            for c in &p.cols {
                let _ = write!(s, "\t{c}");
            }
        }
        s.push_str("\t%\n");
        for (i, r) in first.rows.iter().enumerate() {
            let _ = write!(s, "{r}");
            for p in parts {
                match &p.cells[i] {
                    Some(cells) => cells.iter().for_each(|v| {
                        let _ = write!(s, "\t{v:.1}");
                    }),
                    None => p.cols.iter().for_each(|_| s.push('\t')),
                }
            }
            let _ = writeln!(s, "\t{:.1}", first.row_marginals[i]);
        }
        s.push('%');
        for p in parts {
            for v in &p.col_marginals {
                let _ = write!(s, "\t{v:.1}");
            }
        }
        s.push('\n');
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::document::AnnotationSpan;
    use crate::schemes::SchemeId;

    fn span(tag: &str, unit: Unit, start: usize, end: usize, rater: Rater) -> AnnotationSpan {
        AnnotationSpan {
            span_id: format!("{tag}{start}"),
            tag: tag.into(),
            unit,
            start,
            end,
            rater,
        }
    }

    #[test]
    fn sentence_tag_copies_to_words() {
        let mut d =
            AnnotatedDocument::from_text("d", "One two three four five. Six.", SchemeId::Arrow);
        d.spans
            .push(span("E1", Unit::Sentence, 0, 1, Rater::Human1));
        let arrow = TagSet::builtin(SchemeId::Arrow);
        let w = collapse_to_words(&d, &arrow, None);
        assert_eq!(w.iter().filter(|t| t.as_str() == "E1").count(), 5);
        assert_eq!(w[5], TagId::none());
    }

    #[test]
    fn first_char_rule_for_components() {
        let mut d = AnnotatedDocument::from_text("d", "alpha beta gamma", SchemeId::AaeComponent);
        d.spans.push(span("Cl", Unit::Char, 0, 8, Rater::Human1));
        d.spans.push(span("Pr", Unit::Char, 8, 16, Rater::Human1));
        let ts = TagSet::builtin(SchemeId::AaeComponent);
        let w = collapse_to_words(&d, &ts, None);
        assert_eq!(
            w.iter().map(|t| t.as_str()).collect::<Vec<_>>(),
            ["Cl", "Cl", "Pr"]
        );
    }

    #[test]
    fn tables() {
        let arrow = TagSet::builtin(SchemeId::Arrow);
        let pers = TagSet::builtin(SchemeId::Persuade);
        let t = |v: &[&str]| v.iter().map(|s| TagId::from(*s)).collect::<Vec<_>>();
        let same = cross_tabulate(
            &t(&["I1", "E1", "C"]),
            &t(&["I1", "E1", "C"]),
            &arrow,
            &arrow,
        )
        .unwrap();
        for (i, row) in same.cells.iter().enumerate() {
            if let Some(row) = row {
                assert_eq!(row[i], 100.0);
            }
        }
        let m = cross_tabulate(&t(&["E1"; 4]), &t(&["E", "E", "C1", "E"]), &arrow, &pers).unwrap();
        let e1 = arrow.label_id(&"E1".into()).unwrap();
        let cells = m.cells[e1].as_ref().unwrap();
        assert_eq!(cells[pers.label_id(&"E".into()).unwrap()], 75.0);
        assert!(m.cells[0].is_none());
        assert!(m.to_tsv().starts_with("human\tL\tP"));
        assert!(cross_tabulate(&t(&["E1"]), &t(&[]), &arrow, &pers).is_err());
        let wide = CorrespondenceMatrix::side_by_side(&[m.clone(), m]).unwrap();
        assert_eq!(wide.lines().next().unwrap().split('\t').count(), 1 + 16 + 1);
    }
}
