//! Whole-directory ingestion for the three input formats.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::document::AnnotatedDocument;
use crate::error::{Error, Result};
use crate::ingest::{parse_brat_essay, parse_html_essay, parse_persuade_table, PersuadeOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Brat,
    Persuade,
    Html,
}

impl FromStr for Format {
    type Err = Error;
    fn from_str(s: &str) -> Result<Format> {
        match s.to_ascii_lowercase().as_str() {
            "brat" | "aae" => Ok(Format::Brat),
            "persuade" | "csv" => Ok(Format::Persuade),
            "html" => Ok(Format::Html),
            _ => Err(Error::usage(format!(
                "unknown input format `{s}` (brat, persuade, html)"
            ))),
        }
    }
}

#[derive(Debug, Default)]
pub struct DirIngest {
    pub docs: Vec<AnnotatedDocument>,
    /// Files that failed to parse, with the reason.
    pub failures: Vec<(PathBuf, Error)>,
    /// Document id → split name, from a brat `ID;SET` file when present.
    pub splits: BTreeMap<String, String>,
    /// PERSUADE rows whose offsets disagreed with their word indices.
    pub adjusted_rows: Vec<usize>,
    /// HTML documents without `<p>` markup.
    pub paragraph_fallbacks: Vec<String>,
}

impl DirIngest {
    /// Documents in split `name` (all documents when no split file was seen).
    pub fn split(&self, name: &str) -> Vec<AnnotatedDocument> {
        self.docs
            .iter()
            .filter(|d| {
                self.splits
                    .get(&d.doc_id)
                    .is_some_and(|s| s.eq_ignore_ascii_case(name))
            })
            .cloned()
            .collect()
    }
}

fn files_with(dir: &Path, exts: &[&str], recursive: bool, out: &mut Vec<PathBuf>) -> Result<()> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_dir() {
            if recursive {
                files_with(&path, exts, true, out)?;
            }
        } else if path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| exts.iter().any(|x| x.eq_ignore_ascii_case(e)))
        {
            out.push(path);
        }
    }
    out.sort();
    Ok(())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or_default()
        .to_string()
}

fn parse_split_file(content: &str) -> Result<BTreeMap<String, String>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(b';')
        .has_headers(true)
        .from_reader(content.as_bytes());
    let mut out = BTreeMap::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() >= 2 {
            out.insert(rec[0].trim().to_string(), rec[1].trim().to_string());
        }
    }
    Ok(out)
}

/// Read every document of `format` under `dir`. Per-file parse problems
/// are collected in `failures`; an unreadable directory is an error.
pub fn read_dir(format: Format, dir: &Path, options: PersuadeOptions) -> Result<DirIngest> {
    let mut out = DirIngest::default();
    match format {
        Format::Brat => {
            let mut txts = Vec::new();
            files_with(dir, &["txt"], false, &mut txts)?;
            for txt in txts {
                let ann = txt.with_extension("ann");
                let parsed = read(&txt).and_then(|t| {
                    let a = if ann.exists() {
                        read(&ann)?
                    } else {
                        String::new()
                    };
                    parse_brat_essay(&stem(&txt), &t, &a)
                });
                match parsed {
                    Ok(d) => out.docs.push(d),
                    Err(e) => out.failures.push((txt, e)),
                }
            }
            let mut csvs = Vec::new();
            files_with(dir, &["csv"], false, &mut csvs)?;
            for c in csvs {
                let text = read(&c)?;
                if text
                    .lines()
                    .next()
                    .is_some_and(|h| h.to_ascii_uppercase().contains("SET"))
                {
                    match parse_split_file(&text) {
                        Ok(s) => out.splits.extend(s),
                        Err(e) => out.failures.push((c, e)),
                    }
                }
            }
        }
        Format::Html => {
            let mut files = Vec::new();
            files_with(dir, &["html", "htm"], false, &mut files)?;
            for f in files {
                match read(&f) {
                    Ok(h) => {
                        let essay = parse_html_essay(&stem(&f), &h);
                        if essay.paragraph_fallback {
                            out.paragraph_fallbacks.push(essay.doc.doc_id.clone());
                        }
                        out.docs.push(essay.doc);
                    }
                    Err(e) => out.failures.push((f, e)),
                }
            }
        }
        Format::Persuade => {
            let mut csvs = Vec::new();
            files_with(dir, &["csv"], false, &mut csvs)?;
            let csv_path = match csvs.as_slice() {
                [] => return Ok(out),
                [one] => one.clone(),
                _ => {
                    return Err(Error::usage(format!(
                        "{} holds {} CSV files; expected one discourse table",
                        dir.display(),
                        csvs.len()
                    )))
                }
            };
            let mut txts = Vec::new();
            files_with(dir, &["txt"], true, &mut txts)?;
            let mut texts = HashMap::new();
            for t in &txts {
                texts.insert(stem(t), read(t)?);
            }
            match parse_persuade_table(&read(&csv_path)?, &texts, options) {
                Ok(table) => {
                    out.docs = table.docs;
                    out.adjusted_rows = table.adjusted_rows;
                }
                Err(e) => out.failures.push((csv_path, e)),
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brat_dir_with_split() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "Title\nWe agree.").unwrap();
        fs::write(dir.path().join("a.ann"), "T1\tMajorClaim 6 14\tWe agree\n").unwrap();
        fs::write(dir.path().join("b.txt"), "Broken").unwrap();
        fs::write(dir.path().join("b.ann"), "T1\tClaim x y\tBroken\n").unwrap();
        fs::write(
            dir.path().join("split.csv"),
            "\"ID\";\"SET\"\n\"a\";\"TRAIN\"\n",
        )
        .unwrap();
        let got = read_dir(Format::Brat, dir.path(), PersuadeOptions::default()).unwrap();
        assert_eq!(got.docs.len(), 1);
        assert_eq!(got.failures.len(), 1);
        assert_eq!(got.split("train").len(), 1);
    }

    #[test]
    fn empty_and_missing_dirs() {
        let dir = tempfile::tempdir().unwrap();
        for f in [Format::Brat, Format::Html, Format::Persuade] {
            let got = read_dir(f, dir.path(), PersuadeOptions::default()).unwrap();
            assert!(got.docs.is_empty() && got.failures.is_empty());
        }
        assert!(read_dir(
            Format::Brat,
            &dir.path().join("nope"),
            PersuadeOptions::default()
        )
        .is_err());
        assert!("xml".parse::<Format>().is_err());
    }
}
