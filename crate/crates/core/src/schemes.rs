//! Tag inventories for the three annotation schemes and the rules used to
//! collapse disagreeing tags (double-scored data, model ensembles) into one.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::document::{AnnotatedDocument, Rater, Unit};
use crate::error::{Error, Result};

/// Tag written for units no span covers.
pub const NONE_TAG: &str = "None";

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TagId(String);

impl TagId {
    pub fn new(tag: impl Into<String>) -> Self {
        TagId(tag.into())
    }

    pub fn none() -> Self {
        TagId(NONE_TAG.to_string())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_none_tag(&self) -> bool {
        self.0 == NONE_TAG
    }
}

impl fmt::Display for TagId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TagId {
    fn from(s: &str) -> Self {
        TagId(s.to_string())
    }
}

impl From<String> for TagId {
    fn from(s: String) -> Self {
        TagId(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeId {
    #[serde(rename = "ARROW")]
    Arrow,
    #[serde(rename = "PERSUADE")]
    Persuade,
    #[serde(rename = "AAE_BIO")]
    AaeBio,
    #[serde(rename = "AAE_COMPONENT")]
    AaeComponent,
    #[serde(rename = "AAE_RELATION")]
    AaeRelation,
    #[serde(rename = "AAE_STANCE")]
    AaeStance,
}

impl SchemeId {
    pub const ALL: [SchemeId; 6] = [
        SchemeId::Arrow,
        SchemeId::Persuade,
        SchemeId::AaeBio,
        SchemeId::AaeComponent,
        SchemeId::AaeRelation,
        SchemeId::AaeStance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SchemeId::Arrow => "ARROW",
            SchemeId::Persuade => "PERSUADE",
            SchemeId::AaeBio => "AAE_BIO",
            SchemeId::AaeComponent => "AAE_COMPONENT",
            SchemeId::AaeRelation => "AAE_RELATION",
            SchemeId::AaeStance => "AAE_STANCE",
        }
    }

    /// The four AAE sub-schemes all describe documents ingested from the
    /// same brat corpus.
    pub fn is_aae(self) -> bool {
        matches!(
            self,
            SchemeId::AaeBio | SchemeId::AaeComponent | SchemeId::AaeRelation | SchemeId::AaeStance
        )
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        SchemeId::ALL
            .into_iter()
            .find(|id| id.as_str() == up)
            .or(match up.as_str() {
                "AAE" => Some(SchemeId::AaeComponent),
                _ => None,
            })
            .ok_or_else(|| Error::usage(format!("unknown scheme `{s}`")))
    }
}

/// The unit an annotation scheme natively tags.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    Sentence,
    Word,
    Span,
    Pair,
}

/// A named tag inventory.
///
/// `labels()` is the model label space: the tags in declaration order,
/// followed by the none tag when the scheme has one. Label ids used by the
/// encoder index into this list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TagSet {
    pub scheme: SchemeId,
    pub name: String,
    pub granularity: Granularity,
    pub tags: Vec<TagId>,
    #[serde(default)]
    pub none_tag: Option<TagId>,
    /// Priority order applied when more than one tag applies.
    #[serde(default)]
    pub hierarchy: Option<Vec<TagId>>,
    /// Total order used to break ties; must contain every label.
    #[serde(default)]
    pub tie_order: Option<Vec<TagId>>,
    /// Whether the none tag takes part in per-tag averages.
    #[serde(default)]
    pub none_scored: bool,
}

fn tags(list: &[&str]) -> Vec<TagId> {
    list.iter().map(|t| TagId::from(*t)).collect()
}

impl TagSet {
    pub fn builtin(scheme: SchemeId) -> TagSet {
        match scheme {
            SchemeId::Arrow => TagSet {
                scheme,
                name: "ARROW".into(),
                granularity: Granularity::Sentence,
                tags: tags(&["I1", "I2", "E1", "E2", "O", "C", "T"]),
                none_tag: Some(TagId::none()),
                hierarchy: Some(tags(&["I2", "O", "E1", "E2", "T"])),
                tie_order: Some(tags(&["I1", "I2", "O", "E1", "E2", "T", "C", NONE_TAG])),
                none_scored: true,
            },
            SchemeId::Persuade => TagSet {
                scheme,
                name: "PERSUADE".into(),
                granularity: Granularity::Word,
                tags: tags(&["L", "P", "C1", "C2", "R", "E", "C3"]),
                none_tag: Some(TagId::none()),
                hierarchy: None,
                tie_order: None,
                none_scored: false,
            },
            SchemeId::AaeBio => TagSet {
                scheme,
                name: "AAE_BIO".into(),
                granularity: Granularity::Word,
                tags: tags(&["B", "I", "O"]),
                none_tag: None,
                hierarchy: None,
                tie_order: None,
                none_scored: false,
            },
            SchemeId::AaeComponent => TagSet {
                scheme,
                name: "AAE_COMPONENT".into(),
                granularity: Granularity::Span,
                tags: tags(&["MC", "Cl", "Pr"]),
                none_tag: None,
                hierarchy: None,
                tie_order: None,
                none_scored: false,
            },
            SchemeId::AaeRelation => TagSet {
                scheme,
                name: "AAE_RELATION".into(),
                granularity: Granularity::Pair,
                tags: tags(&["NotLinked", "Linked"]),
                none_tag: None,
                hierarchy: None,
                tie_order: None,
                none_scored: false,
            },
            SchemeId::AaeStance => TagSet {
                scheme,
                name: "AAE_STANCE".into(),
                granularity: Granularity::Pair,
                tags: tags(&["Support", "Attack"]),
                none_tag: None,
                hierarchy: None,
                tie_order: None,
                none_scored: false,
            },
        }
    }

    /// Load a scheme definition from a TOML file.
    pub fn from_file(path: &Path) -> Result<TagSet> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TagSet::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<TagSet> {
        let set: TagSet =
            toml::from_str(text).map_err(|e| Error::config(format!("scheme file: {e}")))?;
        set.check()?;
        Ok(set)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("tag set serializes")
    }

    fn check(&self) -> Result<()> {
        let labels = self.labels();
        let distinct: HashSet<_> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(Error::config(format!("{}: duplicate tags", self.name)));
        }
        if let Some(h) = &self.hierarchy {
            let hs: HashSet<_> = h.iter().collect();
            if hs.len() != h.len() {
                return Err(Error::config(format!(
                    "{}: duplicate hierarchy tags",
                    self.name
                )));
            }
            if let Some(t) = h.iter().find(|t| !self.tags.contains(t)) {
                return Err(Error::config(format!(
                    "{}: hierarchy tag `{t}` not in tags",
                    self.name
                )));
            }
        }
        if let Some(order) = &self.tie_order {
            let os: HashSet<_> = order.iter().collect();
            if os != distinct || order.len() != labels.len() {
                return Err(Error::config(format!(
                    "{}: tie order must list every label exactly once",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Vec<TagId> {
        let mut out = self.tags.clone();
        out.extend(self.none_tag.clone());
        out
    }

    pub fn num_labels(&self) -> usize {
        self.tags.len() + usize::from(self.none_tag.is_some())
    }

    pub fn label_id(&self, tag: &TagId) -> Option<usize> {
        if let Some(i) = self.tags.iter().position(|t| t == tag) {
            return Some(i);
        }
        match &self.none_tag {
            Some(none) if none == tag => Some(self.tags.len()),
            _ => None,
        }
    }

    pub fn label(&self, id: usize) -> Option<TagId> {
        if id < self.tags.len() {
            Some(self.tags[id].clone())
        } else if id == self.tags.len() {
            self.none_tag.clone()
        } else {
            None
        }
    }

    pub fn contains(&self, tag: &TagId) -> bool {
        self.label_id(tag).is_some()
    }

    /// Tag given to units that carry no annotation.
    pub fn untagged(&self) -> TagId {
        self.none_tag.clone().unwrap_or_else(TagId::none)
    }

    /// Tags that take part in per-tag averages and metric sums.
    pub fn scored_tags(&self) -> Vec<TagId> {
        if self.none_scored {
            self.labels()
        } else {
            self.tags.clone()
        }
    }

    /// Total order over all labels used for resolution: the explicit tie
    /// order if given, else the hierarchy followed by the remaining labels
    /// in declaration order.
    pub fn resolution_order(&self) -> Vec<TagId> {
        if let Some(order) = &self.tie_order {
            return order.clone();
        }
        let mut order = self.hierarchy.clone().unwrap_or_default();
        for t in self.labels() {
            if !order.contains(&t) {
                order.push(t);
            }
        }
        order
    }

    fn rank_table(&self) -> HashMap<TagId, usize> {
        self.resolution_order()
            .into_iter()
            .enumerate()
            .map(|(i, t)| (t, i))
            .collect()
    }

    fn rank(&self, tag: &TagId) -> Result<usize> {
        self.resolution_order()
            .iter()
            .position(|t| t == tag)
            .ok_or_else(|| Error::usage(format!("tag `{tag}` is not in scheme {}", self.name)))
    }
}

/// Resolve two raters' tags for one unit: agreement wins, otherwise the tag
/// ranked first in the resolution order.
pub fn resolve_pair(tag_a: &TagId, tag_b: &TagId, scheme: &TagSet) -> Result<TagId> {
    let ra = scheme.rank(tag_a)?;
    let rb = scheme.rank(tag_b)?;
    Ok(if ra <= rb {
        tag_a.clone()
    } else {
        tag_b.clone()
    })
}

/// Majority vote with ties broken by the resolution order.
pub fn resolve_votes(votes: &[TagId], scheme: &TagSet) -> Result<TagId> {
    if votes.is_empty() {
        return Err(Error::usage("resolve_votes needs at least one vote"));
    }
    let ranks = scheme.rank_table();
    let mut counts: HashMap<&TagId, usize> = HashMap::new();
    for v in votes {
        if !ranks.contains_key(v) {
            return Err(Error::usage(format!(
                "tag `{v}` is not in scheme {}",
                scheme.name
            )));
        }
        *counts.entry(v).or_default() += 1;
    }
    let best = counts
        .into_iter()
        .min_by_key(|(tag, n)| (std::cmp::Reverse(*n), ranks[*tag]))
        .map(|(tag, _)| tag.clone())
        .expect("non-empty");
    Ok(best)
}

/// A structural problem found by [`validate_annotation`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    UnknownTag {
        span_id: String,
        tag: TagId,
    },
    Overlap {
        first: String,
        second: String,
    },
    /// An `I` word label with no `B` or `I` before it.
    OrphanInside {
        word: usize,
    },
    BadRange {
        span_id: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownTag { span_id, tag } => write!(f, "{span_id}: unknown tag `{tag}`"),
            Violation::Overlap { first, second } => write!(f, "{first} overlaps {second}"),
            Violation::OrphanInside { word } => write!(f, "word {word}: I without preceding B"),
            Violation::BadRange { span_id } => write!(f, "{span_id}: empty or out-of-range span"),
        }
    }
}

/// Report tags outside the inventory, same-rater overlaps at the same unit,
/// and orphan `I` labels in BIO-tagged documents.
pub fn validate_annotation(doc: &AnnotatedDocument, scheme: &TagSet) -> Vec<Violation> {
    let mut out = Vec::new();
    for span in &doc.spans {
        if !scheme.contains(&span.tag) {
            out.push(Violation::UnknownTag {
                span_id: span.span_id.clone(),
                tag: span.tag.clone(),
            });
        }
        if span.start >= span.end || span.end > doc.unit_len(span.unit) {
            out.push(Violation::BadRange {
                span_id: span.span_id.clone(),
            });
        }
    }

    let mut groups: HashMap<(Unit, Rater), Vec<usize>> = HashMap::new();
    for (i, span) in doc.spans.iter().enumerate() {
        groups.entry((span.unit, span.rater)).or_default().push(i);
    }
    let mut keys: Vec<_> = groups.keys().copied().collect();
    keys.sort();
    for key in keys {
        let mut idx = groups[&key].clone();
        idx.sort_by_key(|&i| (doc.spans[i].start, doc.spans[i].end));
        for (a_pos, &a) in idx.iter().enumerate() {
            for &b in &idx[a_pos + 1..] {
                let (sa, sb) = (&doc.spans[a], &doc.spans[b]);
                if sb.start >= sa.end {
                    break;
                }
                out.push(Violation::Overlap {
                    first: sa.span_id.clone(),
                    second: sb.span_id.clone(),
                });
            }
        }
    }

    if scheme.scheme == SchemeId::AaeBio {
        let labels = doc.word_tags(None, &TagId::from("O"));
        out.extend(
            orphan_inside(&labels)
                .into_iter()
                .map(|word| Violation::OrphanInside { word }),
        );
    }
    out
}

/// Indices of `I` labels not preceded by `B` or `I`.
pub fn orphan_inside(labels: &[TagId]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut inside = false;
    for (i, l) in labels.iter().enumerate() {
        match l.as_str() {
            "B" => inside = true,
            "I" => {
                if !inside {
                    out.push(i);
                }
                inside = true;
            }
            _ => inside = false,
        }
    }
    out
}
