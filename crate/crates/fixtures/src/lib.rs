//! Synthetic hidden-web book sites served on loopback.
//!
//! A [`Manifest`] describes each site's search form, backing dataset and
//! result layout; [`FixtureServer`] serves them and logs every request.
//! [`Site::answer`] is the ground truth: the rows a submission renders.

pub mod dataset;
pub mod manifest;
pub mod render;
pub mod server;

use std::path::PathBuf;

pub use dataset::{Dataset, DatasetError, DatasetRow};
pub use manifest::{Catalog, Manifest, ManifestError, Site};
pub use server::{FixtureServer, LogEntry, ServeError};

/// Directory holding the shipped manifests and datasets.
pub fn fixtures_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// The shipped six-site manifest.
pub fn default_manifest_path() -> PathBuf {
    fixtures_dir().join("default.toml")
}

/// The two-site manifest used to exercise task-database feedback.
pub fn feedback_manifest_path() -> PathBuf {
    fixtures_dir().join("feedback.toml")
}
