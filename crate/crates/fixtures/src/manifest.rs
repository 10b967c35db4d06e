//! Site manifests: which fixture sites exist, what their forms look like,
//! how results render and which misbehaviours they simulate.
//!
//! A manifest is a TOML file. Dataset paths are relative to it.
//!
//! ```toml
//! [catalog]                        # optional seed page listing a dataset
//! dataset = "data/fig9_catalog.csv"
//! columns = [{ field = "isbn", label = "ISBN" }, { field = "title", label = "Title" }]
//!
//! [[site]]
//! name = "single"
//! dataset = "data/site1_single.csv"
//! layout = "blocks"                # table | blocks | list
//! results_per_page = 10
//! landing = "/"                    # where the search form lives
//! redirects = [{ from = "/old", to = "/" }]
//! transient_failures = [{ path = "/", count = 2 }]   # 503s before success
//! error_routes = []                # paths that always answer "No results found"
//!
//! [site.form]
//! action = "/search"
//! method = "get"                   # get | post
//! label_style = "label-for"        # label-for | table-cell | enclosing | placeholder
//!
//! [[site.form.field]]
//! name = "q"
//! label = "Title"
//! control = "text"                 # text | select | radio | hidden
//! filter = ["title"]               # dataset columns searched; empty = ignored
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::dataset::{is_column, Dataset, DatasetError, DatasetRow};

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("manifest {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("manifest line {line}, {field}: {message}")]
    Invalid { line: usize, field: String, message: String },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Layout {
    #[default]
    Table,
    Blocks,
    List,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelStyle {
    #[default]
    LabelFor,
    TableCell,
    Enclosing,
    Placeholder,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HttpMethod {
    #[default]
    Get,
    Post,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControlSpec {
    #[default]
    Text,
    Select,
    Radio,
    Hidden,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub field: String,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSpec {
    pub name: String,
    #[serde(default)]
    pub label: String,
    #[serde(default)]
    pub control: ControlSpec,
    #[serde(default)]
    pub filter: Vec<String>,
    /// Select and radio choices. An empty string renders as "Any".
    #[serde(default)]
    pub options: Vec<String>,
    /// Value of a hidden field.
    #[serde(default)]
    pub value: String,
    pub label_style: Option<LabelStyle>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    #[serde(default = "default_action")]
    pub action: String,
    #[serde(default)]
    pub method: HttpMethod,
    #[serde(default)]
    pub label_style: LabelStyle,
    /// Value of the submit button; no button when empty.
    #[serde(default = "default_submit")]
    pub submit: String,
    #[serde(rename = "field")]
    pub fields: Vec<Spanned<FieldSpec>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Redirect {
    pub from: String,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransientFailure {
    pub path: String,
    pub count: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SiteSpec {
    pub name: String,
    #[serde(default)]
    pub port: u16,
    pub dataset: PathBuf,
    #[serde(default)]
    pub layout: Layout,
    #[serde(default = "default_rpp")]
    pub results_per_page: usize,
    #[serde(default = "default_landing")]
    pub landing: String,
    #[serde(default)]
    pub columns: Vec<ColumnSpec>,
    #[serde(default)]
    pub redirects: Vec<Redirect>,
    #[serde(default)]
    pub transient_failures: Vec<TransientFailure>,
    #[serde(default)]
    pub error_routes: Vec<String>,
    pub form: FormSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogSpec {
    #[serde(default = "default_catalog_name")]
    pub name: String,
    #[serde(default)]
    pub port: u16,
    pub dataset: PathBuf,
    #[serde(default = "default_catalog_path")]
    pub path: String,
    #[serde(default)]
    pub columns: Vec<ColumnSpec>,
}

fn default_action() -> String {
    "/search".into()
}
fn default_submit() -> String {
    "Search".into()
}
fn default_rpp() -> usize {
    20
}
fn default_landing() -> String {
    "/".into()
}
fn default_catalog_name() -> String {
    "catalog".into()
}
fn default_catalog_path() -> String {
    "/catalog".into()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawManifest {
    catalog: Option<Spanned<CatalogSpec>>,
    #[serde(default)]
    site: Vec<Spanned<SiteSpec>>,
}

/// A validated site with its dataset loaded.
#[derive(Debug, Clone, PartialEq)]
pub struct Site {
    pub spec: SiteSpec,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub spec: CatalogSpec,
    pub dataset: Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub sites: Vec<Site>,
    pub catalog: Option<Catalog>,
}

/// Columns rendered when a site lists none.
pub fn default_columns() -> Vec<ColumnSpec> {
    [
        ("isbn", "ISBN"),
        ("title", "Title"),
        ("author", "Author"),
        ("publisher", "Publisher"),
        ("keywords", "Keywords"),
        ("price", "Price"),
        ("availability", "Availability"),
    ]
    .into_iter()
    .map(|(f, l)| ColumnSpec { field: f.into(), label: l.into() })
    .collect()
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ManifestError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| ManifestError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Parses and validates manifest text, loading datasets relative to
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ManifestError> {
        let raw: RawManifest = toml::from_str(text).map_err(|e| ManifestError::Syntax {
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_owned(),
        })?;
        let mut names = HashSet::new();
        let mut ports = HashSet::new();
        let mut sites = Vec::new();
        for (i, spanned) in raw.site.into_iter().enumerate() {
            let line = line_of(text, spanned.span().start);
            let mut spec = spanned.into_inner();
            let invalid = |field: &str, message: String| ManifestError::Invalid {
                line,
                field: format!("site[{i}].{field}"),
                message,
            };
            if spec.name.trim().is_empty() {
                return Err(invalid("name", "must not be empty".into()));
            }
            if !names.insert(spec.name.clone()) {
                return Err(invalid("name", format!("duplicate site name {:?}", spec.name)));
            }
            if spec.port != 0 && !ports.insert(spec.port) {
                return Err(invalid("port", format!("port {} used twice", spec.port)));
            }
            if spec.results_per_page == 0 {
                return Err(invalid("results_per_page", "must be at least 1".into()));
            }
            for (field, path) in [("landing", &spec.landing), ("form.action", &spec.form.action)] {
                if !path.starts_with('/') {
                    return Err(invalid(field, format!("{path:?} must start with '/'")));
                }
            }
            for r in &spec.redirects {
                if r.from == r.to {
                    return Err(invalid("redirects", format!("{:?} redirects to itself", r.from)));
                }
            }
            let dataset = Dataset::load(&base_dir.join(&spec.dataset))?;
            if spec.columns.is_empty() {
                spec.columns = default_columns().into_iter().filter(|c| dataset.has_column(&c.field)).collect();
            }
            check_columns(&spec.columns, &dataset).map_err(|m| invalid("columns", m))?;
            check_form(&spec.form, text, i)?;
            sites.push(Site { spec, dataset });
        }
        let catalog = match raw.catalog {
            None => None,
            Some(spanned) => {
                let line = line_of(text, spanned.span().start);
                let mut spec = spanned.into_inner();
                let dataset = Dataset::load(&base_dir.join(&spec.dataset))?;
                if spec.columns.is_empty() {
                    spec.columns = default_columns().into_iter().filter(|c| dataset.has_column(&c.field)).collect();
                }
                check_columns(&spec.columns, &dataset).map_err(|message| ManifestError::Invalid {
                    line,
                    field: "catalog.columns".into(),
                    message,
                })?;
                if spec.port != 0 && ports.contains(&spec.port) {
                    return Err(ManifestError::Invalid {
                        line,
                        field: "catalog.port".into(),
                        message: format!("port {} used twice", spec.port),
                    });
                }
                Some(Catalog { spec, dataset })
            }
        };
        Ok(Self { sites, catalog })
    }

    pub fn site(&self, name: &str) -> Option<&Site> {
        self.sites.iter().find(|s| s.spec.name == name)
    }
}

fn check_columns(columns: &[ColumnSpec], dataset: &Dataset) -> Result<(), String> {
    let mut seen = HashSet::new();
    for c in columns {
        if !is_column(&c.field) || !dataset.has_column(&c.field) {
            return Err(format!("column {:?} is not in the dataset", c.field));
        }
        if !seen.insert(&c.field) {
            return Err(format!("column {:?} listed twice", c.field));
        }
    }
    Ok(())
}

fn check_form(form: &FormSpec, text: &str, site: usize) -> Result<(), ManifestError> {
    let mut names = HashSet::new();
    if form.fields.is_empty() {
        return Err(ManifestError::Invalid {
            line: 0,
            field: format!("site[{site}].form.field"),
            message: "a form needs at least one field".into(),
        });
    }
    for (j, spanned) in form.fields.iter().enumerate() {
        let line = line_of(text, spanned.span().start);
        let f = spanned.get_ref();
        let invalid = |field: &str, message: String| ManifestError::Invalid {
            line,
            field: format!("site[{site}].form.field[{j}].{field}"),
            message,
        };
        if f.name.trim().is_empty() {
            return Err(invalid("name", "must not be empty".into()));
        }
        if !names.insert(f.name.as_str()) {
            return Err(invalid("name", format!("duplicate field name {:?}", f.name)));
        }
        for c in &f.filter {
            if !is_column(c) {
                return Err(invalid("filter", format!("unknown dataset column {c:?}")));
            }
        }
        match f.control {
            ControlSpec::Select | ControlSpec::Radio if f.options.is_empty() => {
                return Err(invalid("options", "select and radio fields need options".into()));
            }
            ControlSpec::Hidden if !f.filter.is_empty() => {
                return Err(invalid("filter", "hidden fields cannot filter".into()));
            }
            _ => {}
        }
    }
    Ok(())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl Site {
    pub fn fields(&self) -> impl Iterator<Item = &FieldSpec> {
        self.spec.form.fields.iter().map(|f| f.get_ref())
    }

    /// The rows a submission with `params` renders: every dataset row that
    /// contains each non-empty filtered parameter as a case-insensitive
    /// substring of one of its filter columns, capped at the page size.
    /// Error routes answer nothing.
    pub fn answer(&self, path: &str, params: &[(String, String)]) -> Vec<&DatasetRow> {
        if self.spec.error_routes.iter().any(|r| r == path) {
            return Vec::new();
        }
        let constraints: Vec<(&[String], String)> = self
            .fields()
            .filter(|f| !f.filter.is_empty())
            .filter_map(|f| {
                let v = params.iter().find(|(k, _)| *k == f.name).map(|(_, v)| v.trim().to_lowercase())?;
                (!v.is_empty()).then_some((f.filter.as_slice(), v))
            })
            .collect();
        self.dataset
            .rows
            .iter()
            .filter(|row| {
                constraints.iter().all(|(cols, v)| {
                    cols.iter().any(|c| row.get(c).is_some_and(|cell| cell.to_lowercase().contains(v.as_str())))
                })
            })
            .take(self.spec.results_per_page)
            .collect()
    }
}
