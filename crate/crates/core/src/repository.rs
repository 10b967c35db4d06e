//! The integrated, deduplicated record store.
//!
//! Records are keyed by normalized title and author. The backing file is a
//! CSV table with the columns of [`COLUMNS`]; empty cells mean "absent".
//! New records are appended; any enrichment of an existing record makes the
//! next save rewrite the whole file.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::record::{DataRecord, RecordField};

pub const COLUMNS: [&str; 9] =
    ["isbn", "title", "author", "publisher", "keywords", "price", "availability", "source_url", "extracted_at"];

#[derive(Debug, Error)]
pub enum RepositoryError {
    #[error("query needs at least one non-empty criterion")]
    EmptyCriteria,
    #[error("repository storage: {0}")]
    Storage(#[from] std::io::Error),
    #[error("repository csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("repository json line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("repository file line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeStats {
    pub inserted: usize,
    pub duplicates_dropped: usize,
    /// Duplicates that filled at least one empty field of the stored record.
    pub enriched: usize,
}

impl std::ops::AddAssign for MergeStats {
    fn add_assign(&mut self, o: Self) {
        self.inserted += o.inserted;
        self.duplicates_dropped += o.duplicates_dropped;
        self.enriched += o.enriched;
    }
}

/// Per-field substring criteria, all of which must hold.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryCriteria {
    pub isbn: Option<String>,
    pub title: Option<String>,
    pub author: Option<String>,
    pub publisher: Option<String>,
    pub keywords: Option<String>,
    pub price: Option<String>,
}

impl QueryCriteria {
    pub fn get(&self, field: RecordField) -> Option<&str> {
        let v = match field {
            RecordField::Isbn => &self.isbn,
            RecordField::Title => &self.title,
            RecordField::Author => &self.author,
            RecordField::Publisher => &self.publisher,
            RecordField::Keywords => &self.keywords,
            RecordField::Price => &self.price,
        };
        v.as_deref().filter(|s| !s.is_empty())
    }

    pub fn with(mut self, field: RecordField, pattern: impl Into<String>) -> Self {
        let slot = match field {
            RecordField::Isbn => &mut self.isbn,
            RecordField::Title => &mut self.title,
            RecordField::Author => &mut self.author,
            RecordField::Publisher => &mut self.publisher,
            RecordField::Keywords => &mut self.keywords,
            RecordField::Price => &mut self.price,
        };
        *slot = Some(pattern.into());
        self
    }

    pub fn is_empty(&self) -> bool {
        RecordField::ALL.iter().all(|&f| self.get(f).is_none())
    }

    /// Case-insensitive containment of every non-empty criterion.
    pub fn matches(&self, record: &DataRecord) -> bool {
        RecordField::ALL.iter().all(|&f| match self.get(f) {
            None => true,
            Some(pattern) => record
                .get(f)
                .is_some_and(|v| v.to_lowercase().contains(&pattern.to_lowercase())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

impl FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" | "json-lines" => Ok(Self::Jsonl),
            other => Err(format!("unknown export format {other:?} (expected csv or jsonl)")),
        }
    }
}

#[derive(Debug, Default)]
pub struct Repository {
    path: Option<PathBuf>,
    records: Vec<DataRecord>,
    index: HashMap<String, usize>,
    /// Records already present in the backing file.
    persisted: usize,
    /// A stored record changed since the last save.
    dirty: bool,
}

impl PartialEq for Repository {
    fn eq(&self, other: &Self) -> bool {
        self.records == other.records
    }
}

impl Repository {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the store at `path`, loading it when the file exists.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, RepositoryError> {
        let path = path.as_ref().to_path_buf();
        let mut repo = if path.exists() {
            let file = std::fs::File::open(&path)?;
            let mut repo = Self::import(ExportFormat::Csv, file)?;
            repo.persisted = repo.records.len();
            repo
        } else {
            Self::default()
        };
        repo.path = Some(path);
        Ok(repo)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[DataRecord] {
        &self.records
    }

    pub fn get_by_key(&self, dedup_key: &str) -> Option<&DataRecord> {
        self.index.get(dedup_key).map(|&i| &self.records[i])
    }

    /// Merges records. A record whose key is already stored is dropped
    /// after filling the stored record's empty fields from it.
    pub fn upsert<I: IntoIterator<Item = DataRecord>>(&mut self, records: I) -> MergeStats {
        let mut stats = MergeStats::default();
        for record in records {
            let key = record.dedup_key();
            match self.index.get(&key) {
                Some(&i) => {
                    stats.duplicates_dropped += 1;
                    if self.records[i].enrich_from(&record) {
                        stats.enriched += 1;
                        if i < self.persisted {
                            self.dirty = true;
                        }
                    }
                }
                None => {
                    self.index.insert(key, self.records.len());
                    self.records.push(record);
                    stats.inserted += 1;
                }
            }
        }
        stats
    }

    /// Matching records in insertion order.
    pub fn query(&self, criteria: &QueryCriteria) -> Result<Vec<&DataRecord>, RepositoryError> {
        if criteria.is_empty() {
            return Err(RepositoryError::EmptyCriteria);
        }
        Ok(self.records.iter().filter(|r| criteria.matches(r)).collect())
    }

    /// Writes pending changes to the backing file: new records are appended,
    /// or the file is rewritten when a stored record was enriched.
    pub fn save(&mut self) -> Result<(), RepositoryError> {
        let Some(path) = self.path.clone() else { return Ok(()) };
        if self.dirty || !path.exists() {
            return self.compact();
        }
        if self.persisted < self.records.len() {
            let file = OpenOptions::new().append(true).open(&path)?;
            let mut w = csv_writer(file);
            for r in &self.records[self.persisted..] {
                w.write_record(csv_row(r))?;
            }
            w.flush()?;
            self.persisted = self.records.len();
        }
        Ok(())
    }

    /// Rewrites the backing file from memory.
    pub fn compact(&mut self) -> Result<(), RepositoryError> {
        let Some(path) = self.path.clone() else { return Ok(()) };
        let tmp = path.with_extension("tmp");
        {
            let file = std::fs::File::create(&tmp)?;
            self.export(ExportFormat::Csv, file)?;
        }
        std::fs::rename(&tmp, &path)?;
        self.persisted = self.records.len();
        self.dirty = false;
        Ok(())
    }

    /// Dumps every record, in insertion order.
    pub fn export<W: Write>(&self, format: ExportFormat, mut out: W) -> Result<(), RepositoryError> {
        match format {
            ExportFormat::Csv => {
                let mut w = csv_writer(out);
                w.write_record(COLUMNS)?;
                for r in &self.records {
                    w.write_record(csv_row(r))?;
                }
                w.flush()?;
            }
            ExportFormat::Jsonl => {
                for r in &self.records {
                    serde_json::to_writer(&mut out, r).map_err(std::io::Error::from)?;
                    out.write_all(b"\n")?;
                }
                out.flush()?;
            }
        }
        Ok(())
    }

    /// Builds an in-memory repository from an export.
    pub fn import<R: Read>(format: ExportFormat, input: R) -> Result<Self, RepositoryError> {
        let mut repo = Self::default();
        match format {
            ExportFormat::Csv => {
                let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
                let header = reader.headers()?.clone();
                if header.iter().ne(COLUMNS) {
                    return Err(RepositoryError::Format {
                        line: 1,
                        message: format!("expected header {}", COLUMNS.join(",")),
                    });
                }
                for row in reader.records() {
                    let row = row?;
                    let line = row.position().map_or(0, |p| p.line() as usize);
                    repo.upsert([record_from_row(&row, line)?]);
                }
            }
            ExportFormat::Jsonl => {
                for (n, line) in BufReader::new(input).lines().enumerate() {
                    let line = line?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let record: DataRecord =
                        serde_json::from_str(&line).map_err(|source| RepositoryError::Json { line: n + 1, source })?;
                    repo.upsert([record]);
                }
            }
        }
        Ok(repo)
    }
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

fn csv_row(r: &DataRecord) -> Vec<String> {
    let mut row: Vec<String> = RecordField::ALL.iter().map(|&f| r.get(f).unwrap_or("").to_owned()).collect();
    row.push(r.availability.clone().unwrap_or_default());
    row.push(r.source_url.clone());
    row.push(
        r.extracted_at
            .map(|t| t.to_rfc3339_opts(SecondsFormat::AutoSi, true))
            .unwrap_or_default(),
    );
    row
}

fn record_from_row(row: &csv::StringRecord, line: usize) -> Result<DataRecord, RepositoryError> {
    let mut r = DataRecord::default();
    for (i, &f) in RecordField::ALL.iter().enumerate() {
        r.set(f, &row[i]);
    }
    r.availability = Some(row[6].to_owned()).filter(|s| !s.is_empty());
    r.source_url = row[7].to_owned();
    r.extracted_at = match &row[8] {
        "" => None,
        s => Some(
            DateTime::parse_from_rfc3339(s)
                .map_err(|e| RepositoryError::Format { line, message: format!("bad timestamp {s:?}: {e}") })?
                .with_timezone(&Utc),
        ),
    };
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(isbn: &str, title: &str, author: &str) -> DataRecord {
        let mut r = DataRecord { source_url: "http://s.test/".into(), ..Default::default() };
        r.set(RecordField::Isbn, isbn);
        r.set(RecordField::Title, title);
        r.set(RecordField::Author, author);
        r
    }

    fn fig9() -> Vec<DataRecord> {
        vec![
            rec("9780340734209", "Addison-Wesle", "DePasquale, Pi"),
            rec("9780340734209", "Second Jungle", "Bushnell, Cand"),
            rec("9780349115696", "The Jungle Dur", "Hawkins, Jack"),
            rec("9780345461223", "The Love Affair", "Hunter, Jillian"),
        ]
    }

    #[test]
    fn second_upsert_drops_everything() {
        let mut repo = Repository::in_memory();
        assert_eq!(repo.upsert(fig9()).inserted, 4);
        let again = repo.upsert(fig9());
        assert_eq!((again.inserted, again.duplicates_dropped), (0, 4));
        assert_eq!(repo.len(), 4);
    }

    #[test]
    fn shared_isbn_records_stay_distinct() {
        let mut repo = Repository::in_memory();
        repo.upsert(fig9());
        let same: Vec<_> = repo.records().iter().filter(|r| r.isbn.as_deref() == Some("9780340734209")).collect();
        assert_eq!(same.len(), 2);
    }

    #[test]
    fn duplicate_enriches() {
        let mut repo = Repository::in_memory();
        repo.upsert([rec("", "The Jungle Dur", "Hawkins, Jack")]);
        let mut richer = rec("9780349115696", "the jungle dur", "HAWKINS JACK");
        richer.set(RecordField::Price, "$4");
        let stats = repo.upsert([richer]);
        assert_eq!(stats, MergeStats { inserted: 0, duplicates_dropped: 1, enriched: 1 });
        let r = &repo.records()[0];
        assert_eq!(r.title.as_deref(), Some("The Jungle Dur"));
        assert_eq!(r.isbn.as_deref(), Some("9780349115696"));
        assert_eq!(r.price.as_deref(), Some("$4"));
    }

    #[test]
    fn query_is_conjunctive_case_insensitive() {
        let mut repo = Repository::in_memory();
        repo.upsert(fig9());
        let q = QueryCriteria::default().with(RecordField::Title, "jungle");
        let titles: Vec<_> = repo.query(&q).unwrap().iter().map(|r| r.title.clone().unwrap()).collect();
        assert_eq!(titles, ["Second Jungle", "The Jungle Dur"]);
        let q = q.with(RecordField::Author, "hawk");
        assert_eq!(repo.query(&q).unwrap().len(), 1);
        let empty = QueryCriteria::default().with(RecordField::Title, "").with(RecordField::Author, "");
        assert!(matches!(repo.query(&empty), Err(RepositoryError::EmptyCriteria)));
    }

    #[test]
    fn export_import_round_trip() {
        let mut repo = Repository::in_memory();
        let mut records = fig9();
        records[0].extracted_at = Some(Utc::now());
        records[1].availability = Some("Out of stock".into());
        records[2].set(RecordField::Keywords, "Jungle, \"Durami\"\nline");
        repo.upsert(records);
        for format in [ExportFormat::Csv, ExportFormat::Jsonl] {
            let mut buf = Vec::new();
            repo.export(format, &mut buf).unwrap();
            assert_eq!(Repository::import(format, buf.as_slice()).unwrap(), repo);
        }
    }

    #[test]
    fn empty_export_is_header_only() {
        let mut buf = Vec::new();
        Repository::in_memory().export(ExportFormat::Csv, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{}\n", COLUMNS.join(",")));
    }

    #[test]
    fn file_append_and_compaction() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("repo.csv");
        let mut repo = Repository::open(&path).unwrap();
        repo.upsert(fig9()[..2].to_vec());
        repo.save().unwrap();
        repo.upsert(fig9()[2..].to_vec());
        repo.save().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 5);
        let mut enrich = rec("", "Addison-Wesle", "DePasquale, Pi");
        enrich.set(RecordField::Publisher, "Addison-Wesle");
        repo.upsert([enrich]);
        repo.save().unwrap();
        let reopened = Repository::open(&path).unwrap();
        assert_eq!(reopened, repo);
        assert_eq!(reopened.records()[0].publisher.as_deref(), Some("Addison-Wesle"));
    }
}
