//! The task-specific database: concepts, each with a canonical label and an
//! ordered value set, stored as a label-value table.
//!
//! On disk the table is a UTF-8 CSV file preceded by one metadata line:
//!
//! ```text
//! #task-db<TAB>domain=books<TAB>cursors=0,0,0,0,0
//! ISBN,Title,Author,Publisher,Keywords,@source,@fetched_at
//! 9780340734216,The jungle boo,Franklin W Dix,Coronet Books,"jungle , rainbo",http://…,2026-01-01T00:00:00Z
//! ```
//!
//! Header cells name the concepts, followed by the two provenance columns.
//! Each data line is one value tuple; empty cells are allowed. Cells holding
//! the delimiter, a quote or a line break are quoted with `"` and inner
//! quotes doubled. The `cursors` list holds each concept's rotation counter
//! in header order.

use std::collections::HashMap;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::Extractor;
use crate::form::WebPage;
use crate::text::{fold_value, label_phrase};

const META_PREFIX: &str = "#task-db";
const SOURCE_COLUMN: &str = "@source";
const FETCHED_COLUMN: &str = "@fetched_at";

#[derive(Debug, Error)]
pub enum TaskDbError {
    #[error("unknown concept {0:?}")]
    UnknownConcept(String),
    #[error("bootstrap extracted no values ({} diagnostics)", diagnostics.len())]
    EmptyBootstrap { diagnostics: Vec<String> },
    #[error("task database {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("task database line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("task database csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Where a value came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    /// RFC 3339, whole seconds, UTC.
    pub fetched_at: String,
}

impl Provenance {
    pub fn new(source: impl Into<String>, at: DateTime<Utc>) -> Self {
        Self { source: source.into(), fetched_at: at.to_rfc3339_opts(SecondsFormat::Secs, true) }
    }

    pub fn now(source: impl Into<String>) -> Self {
        Self::new(source, Utc::now())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskRow {
    /// One cell per concept, in concept order.
    pub cells: Vec<Option<String>>,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Concept {
    pub canonical_label: String,
    values: Vec<String>,
    rows_of: Vec<Vec<usize>>,
    folded: HashMap<String, usize>,
    /// Rotation counter; the next lookup starts at `last_used_index % len`.
    pub last_used_index: u64,
}

impl Concept {
    fn new(label: &str) -> Self {
        Self {
            canonical_label: label.to_owned(),
            values: Vec::new(),
            rows_of: Vec::new(),
            folded: HashMap::new(),
            last_used_index: 0,
        }
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn contains(&self, value: &str) -> bool {
        self.folded.contains_key(&fold_value(value))
    }

    /// Rows in which the value (under normalization) appears.
    pub fn rows_with(&self, value: &str) -> &[usize] {
        self.folded.get(&fold_value(value)).map(|&i| self.rows_of[i].as_slice()).unwrap_or(&[])
    }

    /// Records `value` as seen in `row`; returns true if it is a new value.
    fn observe(&mut self, value: &str, row: usize) -> bool {
        let key = fold_value(value);
        match self.folded.get(&key) {
            Some(&i) => {
                self.rows_of[i].push(row);
                false
            }
            None => {
                self.folded.insert(key, self.values.len());
                self.values.push(value.to_owned());
                self.rows_of.push(vec![row]);
                true
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskDatabase {
    pub domain_name: String,
    concepts: Vec<Concept>,
    rows: Vec<TaskRow>,
}

impl TaskDatabase {
    pub fn new(domain_name: impl Into<String>) -> Self {
        Self { domain_name: domain_name.into(), concepts: Vec::new(), rows: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.iter().all(|c| c.values.is_empty())
    }

    pub fn concepts(&self) -> &[Concept] {
        &self.concepts
    }

    pub fn concept_labels(&self) -> Vec<&str> {
        self.concepts.iter().map(|c| c.canonical_label.as_str()).collect()
    }

    pub fn rows(&self) -> &[TaskRow] {
        &self.rows
    }

    fn concept_index(&self, label: &str) -> Option<usize> {
        if let Some(i) = self.concepts.iter().position(|c| c.canonical_label == label) {
            return Some(i);
        }
        let phrase = label_phrase(label);
        self.concepts.iter().position(|c| label_phrase(&c.canonical_label) == phrase)
    }

    pub fn concept(&self, label: &str) -> Option<&Concept> {
        self.concept_index(label).map(|i| &self.concepts[i])
    }

    fn ensure_concept(&mut self, label: &str) -> usize {
        if let Some(i) = self.concept_index(label) {
            return i;
        }
        self.concepts.push(Concept::new(label.trim()));
        for row in &mut self.rows {
            row.cells.push(None);
        }
        self.concepts.len() - 1
    }

    /// Value of `concept` in row `row`, if the row has one.
    pub fn cell(&self, row: usize, concept: &str) -> Option<&str> {
        let c = self.concept_index(concept)?;
        self.rows.get(row)?.cells.get(c)?.as_deref()
    }

    /// Appends a value tuple. Unknown concept labels become new concepts.
    /// The row is kept only if it brings at least one new value; the count
    /// of new values is returned.
    pub fn add_row<'a, I>(&mut self, cells: I, provenance: &Provenance) -> usize
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let cells: Vec<(usize, String)> = cells
            .into_iter()
            .filter(|(_, v)| !v.trim().is_empty())
            .map(|(label, v)| (self.ensure_concept(label), v.trim().to_owned()))
            .collect();
        let fresh = cells.iter().any(|(c, v)| !self.concepts[*c].contains(v));
        if !fresh {
            return 0;
        }
        let row_idx = self.rows.len();
        let mut row = TaskRow { cells: vec![None; self.concepts.len()], provenance: provenance.clone() };
        let mut inserted = 0;
        for (c, v) in cells {
            if row.cells[c].is_some() {
                continue;
            }
            if self.concepts[c].observe(&v, row_idx) {
                inserted += 1;
            }
            row.cells[c] = Some(v);
        }
        self.rows.push(row);
        inserted
    }

    /// Inserts values for one concept, each as its own row. Values already
    /// present under normalization are skipped. Returns how many were new.
    pub fn update(&mut self, concept_label: &str, new_values: &[String], provenance: &Provenance) -> usize {
        new_values
            .iter()
            .map(|v| self.add_row([(concept_label, v.as_str())], provenance))
            .sum()
    }

    /// Next `k` values of a concept in rotation, advancing its cursor. Never
    /// returns more than the concept holds.
    pub fn lookup_values(&mut self, concept_label: &str, k: usize) -> Result<Vec<String>, TaskDbError> {
        let idx = self
            .concept_index(concept_label)
            .ok_or_else(|| TaskDbError::UnknownConcept(concept_label.to_owned()))?;
        let concept = &mut self.concepts[idx];
        let n = concept.values.len();
        if n == 0 || k == 0 {
            return Ok(Vec::new());
        }
        let take = k.min(n);
        let start = (concept.last_used_index % n as u64) as usize;
        let out = (0..take).map(|i| concept.values[(start + i) % n].clone()).collect();
        concept.last_used_index += take as u64;
        Ok(out)
    }

    pub fn cursor(&self, concept_label: &str) -> Option<u64> {
        self.concept(concept_label).map(|c| c.last_used_index)
    }

    /// Moves a concept's cursor forward to `position` if it is behind it.
    pub fn advance_cursor_to(&mut self, concept_label: &str, position: u64) {
        if let Some(i) = self.concept_index(concept_label) {
            let c = &mut self.concepts[i];
            c.last_used_index = c.last_used_index.max(position);
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TaskDbError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| TaskDbError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TaskDbError> {
        let path = path.as_ref();
        let io = |source| TaskDbError::Io { path: path.display().to_string(), source };
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_file_string()?).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn to_file_string(&self) -> Result<String, TaskDbError> {
        let cursors: Vec<String> = self.concepts.iter().map(|c| c.last_used_index.to_string()).collect();
        let mut out = format!("{META_PREFIX}\tdomain={}\tcursors={}\n", self.domain_name, cursors.join(","));
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut header: Vec<&str> = self.concept_labels();
        header.extend([SOURCE_COLUMN, FETCHED_COLUMN]);
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec: Vec<&str> = row.cells.iter().map(|c| c.as_deref().unwrap_or("")).collect();
            rec.push(&row.provenance.source);
            rec.push(&row.provenance.fetched_at);
            w.write_record(&rec)?;
        }
        let bytes = w.into_inner().map_err(|e| TaskDbError::Csv(e.into_error().into()))?;
        out.push_str(&String::from_utf8(bytes).expect("csv of utf-8 input is utf-8"));
        Ok(out)
    }

    pub fn parse(text: &str) -> Result<Self, TaskDbError> {
        let (meta, body) = text.split_once('\n').unwrap_or((text, ""));
        let meta = meta.trim_end_matches('\r');
        let mut parts = meta.split('\t');
        if parts.next() != Some(META_PREFIX) {
            return Err(TaskDbError::Format { line: 1, message: format!("expected {META_PREFIX:?} metadata line") });
        }
        let mut domain = None;
        let mut cursors: Vec<u64> = Vec::new();
        for part in parts {
            match part.split_once('=') {
                Some(("domain", v)) => domain = Some(v.to_owned()),
                Some(("cursors", v)) if v.is_empty() => {}
                Some(("cursors", v)) => {
                    cursors = v
                        .split(',')
                        .map(|c| c.parse::<u64>())
                        .collect::<Result<_, _>>()
                        .map_err(|e| TaskDbError::Format { line: 1, message: format!("bad cursor list: {e}") })?;
                }
                _ => return Err(TaskDbError::Format { line: 1, message: format!("unknown metadata field {part:?}") }),
            }
        }
        let mut db = TaskDatabase::new(domain.unwrap_or_default());
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
        let header = reader.headers()?.clone();
        let n = header.len();
        if n < 2 || &header[n - 2] != SOURCE_COLUMN || &header[n - 1] != FETCHED_COLUMN {
            return Err(TaskDbError::Format {
                line: 2,
                message: format!("header must end with {SOURCE_COLUMN},{FETCHED_COLUMN}"),
            });
        }
        let labels: Vec<String> = header.iter().take(n - 2).map(str::to_owned).collect();
        for label in &labels {
            if db.concept_index(label).is_some() {
                return Err(TaskDbError::Format { line: 2, message: format!("duplicate concept {label:?}") });
            }
            db.concepts.push(Concept::new(label));
        }
        if !cursors.is_empty() && cursors.len() != labels.len() {
            return Err(TaskDbError::Format { line: 1, message: "cursor count does not match concept count".into() });
        }
        for record in reader.records() {
            let record = record?;
            let line = record.position().map(|p| p.line() as usize + 1).unwrap_or(0);
            if record.len() != n {
                return Err(TaskDbError::Format { line, message: format!("expected {n} cells, found {}", record.len()) });
            }
            let row_idx = db.rows.len();
            let mut cells = Vec::with_capacity(labels.len());
            for (c, cell) in record.iter().take(n - 2).enumerate() {
                if cell.is_empty() {
                    cells.push(None);
                } else {
                    db.concepts[c].observe(cell, row_idx);
                    cells.push(Some(cell.to_owned()));
                }
            }
            let provenance = Provenance { source: record[n - 2].to_owned(), fetched_at: record[n - 1].to_owned() };
            db.rows.push(TaskRow { cells, provenance });
        }
        for (c, cursor) in cursors.into_iter().enumerate() {
            db.concepts[c].last_used_index = cursor;
        }
        Ok(db)
    }
}

/// Result of building a task database from seed pages.
#[derive(Debug)]
pub struct Bootstrap {
    pub db: TaskDatabase,
    pub diagnostics: Vec<String>,
}

/// Builds a task database from already-downloaded seed result pages.
///
/// Each page's repeating record region is found, its column labels are
/// mapped to lexicon concepts, and every row's mapped values are inserted
/// with the page as provenance. Labels that map to nothing are skipped with
/// a diagnostic each.
pub fn bootstrap(domain: &str, seed_pages: &[WebPage], extractor: &Extractor, concepts: &[&str]) -> Result<Bootstrap, TaskDbError> {
    let mut db = TaskDatabase::new(domain);
    let mut diagnostics = Vec::new();
    let mut inserted = 0;
    for page in seed_pages {
        let template = match extractor.detect_template(page, concepts) {
            Ok(t) => t,
            Err(e) => {
                diagnostics.push(format!("{}: {e}", page.url));
                continue;
            }
        };
        for label in template.unassigned_labels() {
            diagnostics.push(format!("{}: label {label:?} maps to no concept; skipped", page.url));
        }
        let provenance = Provenance::new(page.url.clone(), page.fetched_at);
        for (n, row) in extractor.extract_rows(page, &template).into_iter().enumerate() {
            if row.cells.is_empty() {
                diagnostics.push(format!("{}: row #{n} has no mappable cells; skipped", page.url));
                continue;
            }
            inserted += db.add_row(row.cells.iter().map(|(c, v)| (c.as_str(), v.as_str())), &provenance);
        }
    }
    if inserted == 0 {
        return Err(TaskDbError::EmptyBootstrap { diagnostics });
    }
    Ok(Bootstrap { db, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn prov() -> Provenance {
        Provenance::new("http://seed.test/catalog", DateTime::from_timestamp(1_700_000_000, 0).unwrap())
    }

    fn sample() -> TaskDatabase {
        let mut db = TaskDatabase::new("books");
        db.add_row([("Title", "The jungle boo"), ("Author", "Franklin W Dix")], &prov());
        db.add_row([("Title", "The Love Affair"), ("Author", "Hunter, Jillian")], &prov());
        db.add_row([("Title", "Lipstick Jungle"), ("Author", "Rudyard Kiplin")], &prov());
        db
    }

    #[test]
    fn existing_value_inserts_nothing() {
        let mut db = sample();
        assert_eq!(db.update("Author", &["franklin  w dix".into()], &prov()), 0);
        assert_eq!(db.rows().len(), 3);
    }

    #[test]
    fn new_value_inserted_once() {
        let mut db = sample();
        assert_eq!(db.update("Author", &["Yashwant Singh".into()], &prov()), 1);
        assert_eq!(db.update("Author", &["Yashwant Singh".into()], &prov()), 0);
        assert!(db.concept("Author").unwrap().contains("YASHWANT SINGH"));
    }

    #[test]
    fn unknown_concept_is_created_by_update() {
        let mut db = sample();
        assert_eq!(db.update("Price", &["$5".into(), "$6".into()], &prov()), 2);
        assert_eq!(db.concept_labels(), ["Title", "Author", "Price"]);
        assert_eq!(db.cell(0, "Price"), None);
    }

    #[test]
    fn lookup_rotates_and_wraps() {
        let mut db = sample();
        assert_eq!(db.lookup_values("Author", 1).unwrap(), ["Franklin W Dix"]);
        assert_eq!(db.lookup_values("Author", 2).unwrap(), ["Hunter, Jillian", "Rudyard Kiplin"]);
        assert_eq!(db.lookup_values("Author", 1).unwrap(), ["Franklin W Dix"]);
    }

    #[test]
    fn lookup_zero_is_empty() {
        let mut db = sample();
        assert!(db.lookup_values("Title", 0).unwrap().is_empty());
        assert_eq!(db.cursor("Title"), Some(0));
    }

    #[test]
    fn lookup_more_than_available_returns_each_once() {
        let mut db = sample();
        let got = db.lookup_values("Title", 3 + 3).unwrap();
        assert_eq!(got.len(), 3);
        let set: std::collections::HashSet<_> = got.iter().collect();
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn lookup_unknown_concept() {
        let mut db = sample();
        assert!(matches!(db.lookup_values("Binding", 1), Err(TaskDbError::UnknownConcept(_))));
    }

    #[test]
    fn concept_lookup_is_label_normalized() {
        let db = sample();
        assert!(db.concept("author").is_some());
        assert!(db.concept("AUTHOR:").is_some());
    }

    #[test]
    fn row_coherence_is_tracked() {
        let db = sample();
        let rows = db.concept("Title").unwrap().rows_with("the jungle boo");
        assert_eq!(rows, [0]);
        assert_eq!(db.cell(rows[0], "Author"), Some("Franklin W Dix"));
    }

    #[test]
    fn file_round_trip_with_escaping() {
        let mut db = sample();
        db.add_row([("Title", "Commas, \"quotes\"\nand newlines"), ("Keywords", "a,b")], &prov());
        db.lookup_values("Title", 2).unwrap();
        let text = db.to_file_string().unwrap();
        let back = TaskDatabase::parse(&text).unwrap();
        assert_eq!(back, db);
        assert_eq!(back.to_file_string().unwrap(), text);
    }

    #[test]
    fn rejects_bad_header() {
        let err = TaskDatabase::parse("#task-db\tdomain=x\tcursors=\nTitle,Author\n").unwrap_err();
        assert!(matches!(err, TaskDbError::Format { line: 2, .. }));
        let err = TaskDatabase::parse("Title\n").unwrap_err();
        assert!(matches!(err, TaskDbError::Format { line: 1, .. }));
    }
}
