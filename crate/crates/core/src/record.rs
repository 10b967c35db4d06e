//! Extracted result records.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::text::{key_part, label_phrase};

/// The concept columns a record carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordField {
    Isbn,
    Title,
    Author,
    Publisher,
    Keywords,
    Price,
}

impl RecordField {
    pub const ALL: [RecordField; 6] = [
        RecordField::Isbn,
        RecordField::Title,
        RecordField::Author,
        RecordField::Publisher,
        RecordField::Keywords,
        RecordField::Price,
    ];

    /// Concept label used when matching headers and feeding the task database.
    pub fn concept_label(self) -> &'static str {
        match self {
            RecordField::Isbn => "ISBN",
            RecordField::Title => "Title",
            RecordField::Author => "Author",
            RecordField::Publisher => "Publisher",
            RecordField::Keywords => "Keywords",
            RecordField::Price => "Price",
        }
    }

    pub fn column_name(self) -> &'static str {
        match self {
            RecordField::Isbn => "isbn",
            RecordField::Title => "title",
            RecordField::Author => "author",
            RecordField::Publisher => "publisher",
            RecordField::Keywords => "keywords",
            RecordField::Price => "price",
        }
    }

    /// The field whose concept label normalizes to the same phrase.
    pub fn from_concept_label(label: &str) -> Option<Self> {
        let phrase = label_phrase(label);
        Self::ALL.into_iter().find(|f| label_phrase(f.concept_label()) == phrase)
    }
}

/// One extracted result.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DataRecord {
    pub isbn: Option<String>,
    pub title: Option<String>,
    pub author: Option<String>,
    pub publisher: Option<String>,
    pub keywords: Option<String>,
    pub price: Option<String>,
    pub availability: Option<String>,
    pub source_url: String,
    pub extracted_at: Option<DateTime<Utc>>,
}

impl DataRecord {
    pub fn get(&self, field: RecordField) -> Option<&str> {
        match field {
            RecordField::Isbn => self.isbn.as_deref(),
            RecordField::Title => self.title.as_deref(),
            RecordField::Author => self.author.as_deref(),
            RecordField::Publisher => self.publisher.as_deref(),
            RecordField::Keywords => self.keywords.as_deref(),
            RecordField::Price => self.price.as_deref(),
        }
    }

    pub fn slot_mut(&mut self, field: RecordField) -> &mut Option<String> {
        match field {
            RecordField::Isbn => &mut self.isbn,
            RecordField::Title => &mut self.title,
            RecordField::Author => &mut self.author,
            RecordField::Publisher => &mut self.publisher,
            RecordField::Keywords => &mut self.keywords,
            RecordField::Price => &mut self.price,
        }
    }

    /// Sets a field; empty strings clear it.
    pub fn set(&mut self, field: RecordField, value: impl Into<String>) {
        let v: String = value.into();
        *self.slot_mut(field) = (!v.is_empty()).then_some(v);
    }

    /// A record needs a title or an ISBN to be kept.
    pub fn is_valid(&self) -> bool {
        self.title.as_deref().is_some_and(|t| !t.trim().is_empty())
            || self.isbn.as_deref().is_some_and(|i| !i.trim().is_empty())
    }

    /// Normalized title and author joined by `§`.
    pub fn dedup_key(&self) -> String {
        format!(
            "{}§{}",
            key_part(self.title.as_deref().unwrap_or("")),
            key_part(self.author.as_deref().unwrap_or(""))
        )
    }

    /// Fills empty fields from `other`. Returns true if anything changed.
    pub fn enrich_from(&mut self, other: &DataRecord) -> bool {
        let mut changed = false;
        for field in RecordField::ALL {
            if self.get(field).is_none() {
                if let Some(v) = other.get(field) {
                    *self.slot_mut(field) = Some(v.to_owned());
                    changed = true;
                }
            }
        }
        if self.availability.is_none() && other.availability.is_some() {
            self.availability.clone_from(&other.availability);
            changed = true;
        }
        changed
    }
}
