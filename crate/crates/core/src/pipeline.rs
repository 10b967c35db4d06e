//! End-to-end crawl: landing page, form detection, matching, filling,
//! submission, extraction, merging and task-database feedback.
//!
//! Sites are crawled on their own threads against a snapshot of the task
//! database. Results are merged into the repository and the database one
//! site at a time, in seed order, once every site has finished.

use std::path::PathBuf;
use std::thread;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extract::{record_concepts, Extractor, ExtractorConfig, RecordTemplate};
use crate::fetcher::{FetchPolicy, Fetcher};
use crate::filler::{build_submission, plan_fills, SubmissionRequest, DEFAULT_MAX_SUBMISSIONS};
use crate::form::{detect_forms, WebPage};
use crate::lexicon::LabelLexicon;
use crate::matcher::{LabelMatcher, MatcherMode, DEFAULT_THRESHOLD};
use crate::metrics::valid_page_ratio;
use crate::record::{DataRecord, RecordField};
use crate::repository::{MergeStats, Repository};
use crate::task_db::{bootstrap, Provenance, TaskDatabase};

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    TaskDb(#[from] crate::task_db::TaskDbError),
    #[error(transparent)]
    Lexicon(#[from] crate::lexicon::LexiconError),
    #[error(transparent)]
    Repository(#[from] crate::repository::RepositoryError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrawlConfig {
    pub seeds: Vec<String>,
    pub task_db_path: Option<PathBuf>,
    pub repo_path: Option<PathBuf>,
    /// The built-in book lexicon is used when unset.
    pub lexicon_path: Option<PathBuf>,
    pub threshold: f64,
    pub max_submissions_per_form: usize,
    pub matcher: MatcherMode,
    pub fetch: FetchPolicy,
    pub extractor: ExtractorConfig,
    /// Feed unseen values back into the task database.
    pub update_task_db: bool,
}

impl Default for CrawlConfig {
    fn default() -> Self {
        Self {
            seeds: Vec::new(),
            task_db_path: None,
            repo_path: None,
            lexicon_path: None,
            threshold: DEFAULT_THRESHOLD,
            max_submissions_per_form: DEFAULT_MAX_SUBMISSIONS,
            matcher: MatcherMode::Semantic,
            fetch: FetchPolicy::default(),
            extractor: ExtractorConfig::default(),
            update_task_db: true,
        }
    }
}

impl CrawlConfig {
    pub fn validate(&self) -> Result<(), CrawlError> {
        if self.seeds.is_empty() {
            return Err(CrawlError::Config("no seed URLs".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(CrawlError::Config(format!("threshold {} is outside [0, 1]", self.threshold)));
        }
        if self.max_submissions_per_form == 0 {
            return Err(CrawlError::Config("max submissions per form must be positive".into()));
        }
        self.fetch.validate().map_err(CrawlError::Config)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SiteReport {
    pub seed: String,
    pub forms_found: usize,
    pub forms_filled: usize,
    pub total_pages: usize,
    pub valid_pages: usize,
    pub records_extracted: usize,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CrawlReport {
    pub websites_visited: usize,
    pub forms_found: usize,
    /// Form submissions sent, one per filled plan.
    pub forms_filled: usize,
    pub total_pages: usize,
    pub valid_pages: usize,
    /// Records that survived the validity filters.
    pub records_extracted: usize,
    pub records_inserted: usize,
    pub duplicates_dropped: usize,
    pub task_db_values_added: usize,
    pub sites: Vec<SiteReport>,
}

impl CrawlReport {
    /// Valid pages over total pages; `None` when no page was retrieved.
    pub fn valid_page_ratio(&self) -> Option<f64> {
        valid_page_ratio(self.valid_pages as u64, self.total_pages as u64).ok()
    }

    pub fn errors(&self) -> impl Iterator<Item = (&str, &str)> {
        self.sites.iter().flat_map(|s| s.errors.iter().map(move |e| (s.seed.as_str(), e.as_str())))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PageVerdict {
    Valid,
    ErrorPage,
    NoRecords,
    FetchFailed,
    DuplicateSkipped,
}

/// What happened to one planned submission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmissionTrace {
    pub seed: String,
    pub form_index: usize,
    pub plan_id: usize,
    pub request: SubmissionRequest,
    pub status: Option<u16>,
    pub verdict: PageVerdict,
    /// Records surviving the validity filters.
    pub records: Vec<DataRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrawlOutcome {
    pub report: CrawlReport,
    pub traces: Vec<SubmissionTrace>,
    pub merge: MergeStats,
}

/// Runs a crawl with files named in the config: loads the lexicon, task
/// database and repository, crawls, then saves both stores. A failed save
/// is retried once and then reported as a site-independent error.
pub fn crawl(config: &CrawlConfig) -> Result<CrawlOutcome, CrawlError> {
    config.validate()?;
    let lexicon = match &config.lexicon_path {
        Some(p) => LabelLexicon::load(p)?,
        None => LabelLexicon::books(),
    };
    let db_path = config
        .task_db_path
        .as_ref()
        .ok_or_else(|| CrawlError::Config("no task database path".into()))?;
    let mut db = TaskDatabase::load(db_path)?;
    let mut repo = match &config.repo_path {
        Some(p) => Repository::open(p)?,
        None => Repository::in_memory(),
    };
    let mut outcome = crawl_with(config, &mut db, &mut repo, &lexicon)?;
    let mut save_errors = Vec::new();
    if config.update_task_db {
        if let Err(e) = db.save(db_path).or_else(|_| db.save(db_path)) {
            save_errors.push(format!("saving task database: {e}"));
        }
    }
    if let Err(e) = repo.save().or_else(|_| repo.save()) {
        save_errors.push(format!("saving repository: {e}"));
    }
    if !save_errors.is_empty() {
        outcome.report.sites.push(SiteReport { seed: "(storage)".into(), errors: save_errors, ..Default::default() });
    }
    Ok(outcome)
}

/// Crawls the configured seeds against in-memory stores.
pub fn crawl_with(
    config: &CrawlConfig,
    db: &mut TaskDatabase,
    repo: &mut Repository,
    lexicon: &LabelLexicon,
) -> Result<CrawlOutcome, CrawlError> {
    config.validate()?;
    if db.is_empty() {
        return Err(CrawlError::Config("task database is empty; run bootstrap first".into()));
    }
    let matcher = LabelMatcher::new(lexicon.clone(), config.matcher, config.threshold);
    let extractor = Extractor::new(
        LabelMatcher::new(lexicon.clone(), MatcherMode::Semantic, config.threshold),
        config.extractor.clone(),
    );
    let fetcher = Fetcher::new(config.fetch.clone());
    let base: &TaskDatabase = db;

    let results: Vec<SiteResult> = thread::scope(|scope| {
        let handles: Vec<_> = config
            .seeds
            .iter()
            .map(|seed| {
                let site = SiteCrawler {
                    seed,
                    fetcher: &fetcher,
                    matcher: &matcher,
                    extractor: &extractor,
                    lexicon,
                    max_submissions: config.max_submissions_per_form,
                };
                let snapshot = base.clone();
                scope.spawn(move || site.run(snapshot))
            })
            .collect();
        handles
            .into_iter()
            .zip(&config.seeds)
            .map(|(h, seed)| {
                h.join().unwrap_or_else(|_| SiteResult::failed(seed, "site worker panicked".into()))
            })
            .collect()
    });

    let mut report = CrawlReport { websites_visited: config.seeds.len(), ..Default::default() };
    let mut traces = Vec::new();
    let mut merge = MergeStats::default();
    for site in results {
        let records: Vec<DataRecord> = site.traces.iter().flat_map(|t| t.records.iter().cloned()).collect();
        let stats = repo.upsert(records.iter().cloned());
        merge += stats;
        if config.update_task_db {
            report.task_db_values_added += feed_back(db, &records);
            for concept in site.snapshot.concepts() {
                db.advance_cursor_to(&concept.canonical_label, concept.last_used_index);
            }
        }
        let r = &site.report;
        report.forms_found += r.forms_found;
        report.forms_filled += r.forms_filled;
        report.total_pages += r.total_pages;
        report.valid_pages += r.valid_pages;
        report.records_extracted += r.records_extracted;
        report.sites.push(site.report);
        traces.extend(site.traces);
    }
    report.records_inserted = merge.inserted;
    report.duplicates_dropped = merge.duplicates_dropped;
    Ok(CrawlOutcome { report, traces, merge })
}

/// Inserts each record's values into the task database as one row,
/// returning how many values were new.
fn feed_back(db: &mut TaskDatabase, records: &[DataRecord]) -> usize {
    records
        .iter()
        .map(|r| {
            let provenance = match r.extracted_at {
                Some(at) => Provenance::new(r.source_url.clone(), at),
                None => Provenance::now(r.source_url.clone()),
            };
            let cells: Vec<(&str, &str)> = RecordField::ALL
                .iter()
                .filter_map(|&f| r.get(f).map(|v| (f.concept_label(), v)))
                .collect();
            db.add_row(cells, &provenance)
        })
        .sum()
}

struct SiteResult {
    report: SiteReport,
    traces: Vec<SubmissionTrace>,
    snapshot: TaskDatabase,
}

impl SiteResult {
    fn failed(seed: &str, error: String) -> Self {
        Self {
            report: SiteReport { seed: seed.to_owned(), errors: vec![error], ..Default::default() },
            traces: Vec::new(),
            snapshot: TaskDatabase::new(""),
        }
    }
}

struct SiteCrawler<'a> {
    seed: &'a str,
    fetcher: &'a Fetcher,
    matcher: &'a LabelMatcher,
    extractor: &'a Extractor,
    lexicon: &'a LabelLexicon,
    max_submissions: usize,
}

impl SiteCrawler<'_> {
    fn run(&self, mut db: TaskDatabase) -> SiteResult {
        let mut report = SiteReport { seed: self.seed.to_owned(), ..Default::default() };
        let mut traces = Vec::new();
        let landing = match self.fetcher.fetch_page(self.seed) {
            Ok(f) if f.page.status < 400 => f.page,
            Ok(f) => {
                report.errors.push(format!("landing page {} returned status {}", f.page.url, f.page.status));
                return SiteResult { report, traces, snapshot: db };
            }
            Err(e) => {
                report.errors.push(e.to_string());
                return SiteResult { report, traces, snapshot: db };
            }
        };
        let forms = detect_forms(&landing);
        report.forms_found = forms.len();
        if forms.is_empty() {
            report.errors.push(format!("{}: no search form found", landing.url));
        }

        let concepts = record_concepts();
        let mut template: Option<RecordTemplate> = None;
        // Pages that arrived before any template was learned.
        let mut deferred: Vec<(usize, WebPage)> = Vec::new();
        for (form_index, form) in forms.iter().enumerate() {
            let labels: Vec<String> = db.concept_labels().into_iter().map(str::to_owned).collect();
            let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            let mapping = self.matcher.match_form(form, &label_refs);
            let plans = match plan_fills(form, &mapping, &mut db, self.max_submissions, self.lexicon) {
                Ok(p) if !p.is_empty() => p,
                Ok(_) => {
                    report.errors.push(format!("form #{form_index}: no values available for mapped fields"));
                    continue;
                }
                Err(e) => {
                    report.errors.push(format!("form #{form_index}: {e}"));
                    continue;
                }
            };
            for plan in plans {
                let request = build_submission(&plan);
                let mut trace = SubmissionTrace {
                    seed: self.seed.to_owned(),
                    form_index,
                    plan_id: plan.submission_plan_id,
                    request,
                    status: None,
                    verdict: PageVerdict::DuplicateSkipped,
                    records: Vec::new(),
                    error: None,
                };
                if !self.fetcher.visited().insert_fingerprint(&trace.request.fingerprint()) {
                    traces.push(trace);
                    continue;
                }
                report.forms_filled += 1;
                let page = match self.fetcher.submit_form(&trace.request) {
                    Ok(f) => f.page,
                    Err(e) => {
                        trace.verdict = PageVerdict::FetchFailed;
                        trace.error = Some(e.to_string());
                        report.errors.push(e.to_string());
                        traces.push(trace);
                        continue;
                    }
                };
                report.total_pages += 1;
                trace.status = Some(page.status);
                if self.extractor.has_error_signal(&page) {
                    trace.verdict = PageVerdict::ErrorPage;
                    traces.push(trace);
                    continue;
                }
                if template.is_none() {
                    template = self.extractor.detect_template(&page, &concepts).ok();
                }
                match &template {
                    Some(t) => self.extract_into(&mut trace, &page, t),
                    None => {
                        trace.verdict = PageVerdict::NoRecords;
                        deferred.push((traces.len(), page));
                    }
                }
                traces.push(trace);
            }
        }
        for (i, page) in deferred {
            match &template {
                Some(t) => self.extract_into(&mut traces[i], &page, t),
                None => traces[i].error = Some("no repeating record region found".into()),
            }
        }
        for t in &traces {
            if t.verdict == PageVerdict::Valid {
                report.valid_pages += 1;
                report.records_extracted += t.records.len();
            }
        }
        SiteResult { report, traces, snapshot: db }
    }

    fn extract_into(&self, trace: &mut SubmissionTrace, page: &WebPage, template: &RecordTemplate) {
        let mut records = self.extractor.extract_records(page, template);
        if records.is_empty() {
            // The learned template may not fit this page; try the page's own.
            if let Ok(own) = self.extractor.detect_template(page, &record_concepts()) {
                records = self.extractor.extract_records(page, &own);
            }
        }
        trace.records = self.extractor.filter_invalid(records);
        trace.verdict = if trace.records.is_empty() { PageVerdict::NoRecords } else { PageVerdict::Valid };
    }
}

/// Downloads seed result pages and builds a task database from them.
pub fn bootstrap_from_urls(
    domain: &str,
    urls: &[String],
    policy: FetchPolicy,
    lexicon: &LabelLexicon,
    threshold: f64,
) -> Result<crate::task_db::Bootstrap, CrawlError> {
    let fetcher = Fetcher::new(policy);
    let mut pages = Vec::new();
    let mut diagnostics = Vec::new();
    for url in urls {
        match fetcher.fetch_page(url) {
            Ok(f) if f.page.status < 400 => pages.push(f.page),
            Ok(f) => diagnostics.push(format!("{url}: status {}", f.page.status)),
            Err(e) => diagnostics.push(e.to_string()),
        }
    }
    let extractor = Extractor::new(
        LabelMatcher::new(lexicon.clone(), MatcherMode::Semantic, threshold),
        ExtractorConfig::default(),
    );
    let concepts: Vec<&str> = lexicon.canonical_labels().collect();
    match bootstrap(domain, &pages, &extractor, &concepts) {
        Ok(mut b) => {
            diagnostics.append(&mut b.diagnostics);
            b.diagnostics = diagnostics;
            Ok(b)
        }
        Err(crate::task_db::TaskDbError::EmptyBootstrap { diagnostics: mut d }) => {
            diagnostics.append(&mut d);
            Err(crate::task_db::TaskDbError::EmptyBootstrap { diagnostics }.into())
        }
        Err(e) => Err(e.into()),
    }
}
