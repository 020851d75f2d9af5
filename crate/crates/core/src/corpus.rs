//! Dated paper records, property keyword matching and temporal partitioning.

use std::collections::{BTreeSet, HashSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One paper: its authors, the extracted entities (e.g. material formulas)
/// and optionally the abstract tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub id: String,
    pub year: i32,
    pub authors: Vec<String>,
    pub entities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
}

impl PaperRecord {
    fn validate(&self) -> std::result::Result<(), String> {
        if self.year <= 0 {
            return Err(format!("record {:?} has non-positive year {}", self.id, self.year));
        }
        if let Some(dup) = first_duplicate(&self.authors) {
            return Err(format!("record {:?} lists author {:?} twice", self.id, dup));
        }
        if let Some(dup) = first_duplicate(&self.entities) {
            return Err(format!("record {:?} lists entity {:?} twice", self.id, dup));
        }
        Ok(())
    }

    pub fn tokens(&self) -> &[String] {
        self.tokens.as_deref().unwrap_or(&[])
    }
}

fn first_duplicate(items: &[String]) -> Option<&str> {
    let mut seen = HashSet::with_capacity(items.len());
    items.iter().find(|s| !seen.insert(s.as_str())).map(String::as_str)
}

/// Lower-cased property keywords. The first keyword names the property node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Keywords {
    ordered: Vec<String>,
    lookup: BTreeSet<String>,
}

impl TryFrom<Vec<String>> for Keywords {
    type Error = Error;

    fn try_from(words: Vec<String>) -> Result<Self> {
        Keywords::new(words)
    }
}

impl From<Keywords> for Vec<String> {
    fn from(k: Keywords) -> Self {
        k.ordered
    }
}

impl Keywords {
    pub fn new<I, S>(words: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut ordered = Vec::new();
        let mut lookup = BTreeSet::new();
        for w in words {
            let w = w.as_ref().trim().to_lowercase();
            if w.is_empty() {
                continue;
            }
            if lookup.insert(w.clone()) {
                ordered.push(w);
            }
        }
        if ordered.is_empty() {
            return Err(Error::Validation("property keyword set is empty".into()));
        }
        Ok(Keywords { ordered, lookup })
    }

    /// One keyword per line; blank lines and `#` comments are ignored.
    pub fn parse<R: BufRead>(reader: R) -> Result<Self> {
        let mut words = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            words.push(line.to_string());
        }
        Keywords::new(words)
    }

    pub fn primary(&self) -> &str {
        &self.ordered[0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.ordered.iter().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ordered.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ordered.is_empty()
    }

    /// Case-insensitive whole-token match.
    pub fn matches(&self, token: &str) -> bool {
        if token.chars().any(char::is_uppercase) {
            self.lookup.contains(&token.to_lowercase())
        } else {
            self.lookup.contains(token)
        }
    }
}

/// True iff any keyword appears among the record's entities or tokens.
pub fn record_mentions_property(rec: &PaperRecord, keywords: &Keywords) -> bool {
    rec.entities.iter().chain(rec.tokens()).any(|t| keywords.matches(t))
}

#[derive(Debug, Clone)]
pub struct Corpus {
    records: Vec<PaperRecord>,
    keywords: Keywords,
}

impl Corpus {
    pub fn new(records: Vec<PaperRecord>, keywords: Keywords) -> Result<Self> {
        let mut ids = HashSet::with_capacity(records.len());
        for rec in &records {
            rec.validate().map_err(Error::Validation)?;
            if !ids.insert(rec.id.as_str()) {
                return Err(Error::Validation(format!("duplicate record id {:?}", rec.id)));
            }
        }
        Ok(Corpus { records, keywords })
    }

    pub fn records(&self) -> &[PaperRecord] {
        &self.records
    }

    pub fn keywords(&self) -> &Keywords {
        &self.keywords
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Records ordered by year; input order is kept within a year.
    pub fn sorted_by_year(&self) -> Vec<&PaperRecord> {
        let mut out: Vec<&PaperRecord> = self.records.iter().collect();
        out.sort_by_key(|r| r.year);
        out
    }

    pub fn year_range(&self) -> Option<(i32, i32)> {
        let min = self.records.iter().map(|r| r.year).min()?;
        let max = self.records.iter().map(|r| r.year).max()?;
        Some((min, max))
    }

    pub fn mentions_property(&self, rec: &PaperRecord) -> bool {
        record_mentions_property(rec, &self.keywords)
    }

    /// Splits into `(year < t, year >= t)`, preserving input order in both halves.
    pub fn partition_by_year(&self, t: i32) -> (Corpus, Corpus) {
        let (before, from): (Vec<_>, Vec<_>) =
            self.records.iter().cloned().partition(|r| r.year < t);
        (
            Corpus { records: before, keywords: self.keywords.clone() },
            Corpus { records: from, keywords: self.keywords.clone() },
        )
    }

    pub fn write_jsonl<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        for rec in &self.records {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Reads JSON Lines records. Blank lines are skipped; line numbers are 1-based.
pub fn parse_corpus<R: BufRead>(reader: R, keywords: Keywords) -> Result<Corpus> {
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PaperRecord =
            serde_json::from_str(&line).map_err(|e| Error::parse(idx + 1, e.to_string()))?;
        records.push(rec);
    }
    Corpus::new(records, keywords)
}
