//! Backing datasets: CSV files with the book schema.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Columns every dataset must have, in this order.
pub const REQUIRED_COLUMNS: [&str; 5] = ["isbn", "title", "author", "publisher", "keywords"];
/// Columns a dataset may add after the required ones.
pub const OPTIONAL_COLUMNS: [&str; 2] = ["price", "availability"];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("dataset {path} line {line}: {message}")]
    Invalid { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub isbn: String,
    pub title: String,
    pub author: String,
    pub publisher: String,
    pub keywords: String,
    #[serde(default)]
    pub price: String,
    #[serde(default)]
    pub availability: String,
}

impl DatasetRow {
    pub fn get(&self, column: &str) -> Option<&str> {
        Some(match column {
            "isbn" => &self.isbn,
            "title" => &self.title,
            "author" => &self.author,
            "publisher" => &self.publisher,
            "keywords" => &self.keywords,
            "price" => &self.price,
            "availability" => &self.availability,
            _ => return None,
        })
    }

    pub fn is_blank(&self) -> bool {
        [&self.isbn, &self.title, &self.author, &self.publisher, &self.keywords, &self.price, &self.availability]
            .iter()
            .all(|c| c.trim().is_empty())
    }
}

pub fn is_column(name: &str) -> bool {
    REQUIRED_COLUMNS.contains(&name) || OPTIONAL_COLUMNS.contains(&name)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub rows: Vec<DatasetRow>,
}

impl Dataset {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses CSV text; `name` is only used in error messages.
    pub fn parse(text: &str, name: &str) -> Result<Self, DatasetError> {
        let invalid = |line: usize, message: String| DatasetError::Invalid { path: name.to_owned(), line, message };
        let mut reader = csv::ReaderBuilder::new().from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| invalid(1, e.to_string()))?.clone();
        let columns: Vec<String> = header.iter().map(str::to_owned).collect();
        if columns.len() < REQUIRED_COLUMNS.len() || columns[..REQUIRED_COLUMNS.len()] != REQUIRED_COLUMNS {
            return Err(invalid(1, format!("header must start with {}", REQUIRED_COLUMNS.join(","))));
        }
        for extra in &columns[REQUIRED_COLUMNS.len()..] {
            if !OPTIONAL_COLUMNS.contains(&extra.as_str()) {
                return Err(invalid(1, format!("unknown column {extra:?}")));
            }
        }
        let mut rows = Vec::new();
        for record in reader.deserialize::<DatasetRow>() {
            let line = rows.len() + 2;
            let row = record.map_err(|e| invalid(line, e.to_string()))?;
            if row.is_blank() {
                return Err(invalid(line, "row has no non-empty cell".into()));
            }
            rows.push(row);
        }
        Ok(Self { columns, rows })
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }
}
