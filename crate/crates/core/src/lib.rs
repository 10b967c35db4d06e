//! Core of a domain-driven hidden-web crawler.
//!
//! The crawl runs in four steps per site: find the search form on a landing
//! page, fill it from a task-specific database using semantic label
//! matching, download the response pages, and pull structured records out
//! of them into a deduplicated repository. Newly seen values are fed back
//! into the task database so later crawls can use them.

pub mod extract;
pub mod fetcher;
pub mod filler;
pub mod form;
pub mod lexicon;
pub mod matcher;
pub mod metrics;
pub mod pipeline;
pub mod record;
pub mod repository;
pub mod task_db;
pub mod text;

pub use extract::{Extractor, ExtractorConfig, RecordTemplate};
pub use fetcher::{FetchError, FetchPolicy, Fetcher, VisitedSet};
pub use filler::{build_submission, plan_fills, FilledForm, SubmissionRequest};
pub use form::{detect_forms, Control, FieldDomain, FormField, FormKind, Method, SearchForm, WebPage};
pub use lexicon::{LabelLexicon, LexiconError};
pub use matcher::{FieldMapping, LabelMatcher, MatcherMode};
pub use metrics::valid_page_ratio;
pub use pipeline::{crawl, CrawlConfig, CrawlOutcome, CrawlReport};
pub use record::{DataRecord, RecordField};
pub use repository::{QueryCriteria, Repository};
pub use task_db::TaskDatabase;
