//! Crawl settings resolved from flags, environment, config file and
//! defaults, in that order of precedence. Clap already folds flags and
//! environment together, so this module only layers the file underneath.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use semcrawl_core::{CrawlConfig, FetchPolicy, MatcherMode};
use serde::Deserialize;

/// Settings that may appear in a `--config` TOML file.
#[derive(Debug, Default, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seeds: Option<Vec<String>>,
    pub task_db: Option<PathBuf>,
    pub repo: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub max_submissions: Option<usize>,
    pub matcher: Option<String>,
    pub delay_ms: Option<u64>,
    pub timeout_ms: Option<u64>,
    pub retries: Option<u32>,
    pub user_agent: Option<String>,
    pub respect_robots: Option<bool>,
    pub update_task_db: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

/// Values given on the command line or through the environment.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct CrawlOverrides {
    pub seeds: Vec<String>,
    pub task_db: Option<PathBuf>,
    pub repo: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub threshold: Option<f64>,
    pub max_submissions: Option<usize>,
    pub matcher: Option<MatcherMode>,
    pub delay_ms: Option<u64>,
    pub timeout_ms: Option<u64>,
    pub retries: Option<u32>,
    pub user_agent: Option<String>,
    pub no_robots: bool,
    pub no_update: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resolved {
    pub config: CrawlConfig,
    pub report_path: Option<PathBuf>,
}

pub fn resolve(over: CrawlOverrides, file: FileConfig) -> Result<Resolved> {
    let defaults = CrawlConfig::default();
    let seed_args = if over.seeds.is_empty() { file.seeds.unwrap_or_default() } else { over.seeds };
    let seeds = expand_seeds(&seed_args)?;
    let matcher = match (over.matcher, file.matcher) {
        (Some(m), _) => m,
        (None, Some(s)) => s.parse().map_err(anyhow::Error::msg)?,
        (None, None) => defaults.matcher,
    };
    let fetch_defaults = FetchPolicy::default();
    let fetch = FetchPolicy {
        per_host_delay: over
            .delay_ms
            .or(file.delay_ms)
            .map(Duration::from_millis)
            .unwrap_or(fetch_defaults.per_host_delay),
        max_retries: over.retries.or(file.retries).unwrap_or(fetch_defaults.max_retries),
        timeout: over.timeout_ms.or(file.timeout_ms).map(Duration::from_millis).unwrap_or(fetch_defaults.timeout),
        user_agent: over.user_agent.or(file.user_agent).unwrap_or(fetch_defaults.user_agent),
        respect_robots: !over.no_robots && file.respect_robots.unwrap_or(fetch_defaults.respect_robots),
        ..fetch_defaults
    };
    let repo_path = over.repo.or(file.repo);
    let report_path = over.report.or(file.report).or_else(|| repo_path.as_deref().map(default_report_path));
    let config = CrawlConfig {
        seeds,
        task_db_path: over.task_db.or(file.task_db),
        repo_path,
        lexicon_path: over.lexicon.or(file.lexicon),
        threshold: over.threshold.or(file.threshold).unwrap_or(defaults.threshold),
        max_submissions_per_form: over.max_submissions.or(file.max_submissions).unwrap_or(defaults.max_submissions_per_form),
        matcher,
        fetch,
        extractor: defaults.extractor,
        update_task_db: !over.no_update && file.update_task_db.unwrap_or(defaults.update_task_db),
    };
    Ok(Resolved { config, report_path })
}

/// Where `crawl` leaves its report when no path is given: next to the repository.
pub fn default_report_path(repo: &Path) -> PathBuf {
    let mut name = repo.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".report.json");
    repo.with_file_name(name)
}

/// Each argument is either a URL or a file listing one URL per line.
/// Blank lines and `#` comments are skipped.
pub fn expand_seeds(args: &[String]) -> Result<Vec<String>> {
    let mut seeds = Vec::new();
    for arg in args {
        if arg.starts_with("http://") || arg.starts_with("https://") {
            seeds.push(arg.clone());
            continue;
        }
        let text = std::fs::read_to_string(arg).with_context(|| format!("reading seed file {arg}"))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if !(line.starts_with("http://") || line.starts_with("https://")) {
                bail!("{arg} line {}: {line:?} is not an http(s) URL", n + 1);
            }
            seeds.push(line.to_owned());
        }
    }
    Ok(seeds)
}
