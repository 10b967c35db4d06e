//! `semcrawl`: bootstrap a task database, crawl hidden-web search forms,
//! query and export the collected records, and run fixture sites.

mod output;
mod settings;

use std::fmt;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use semcrawl_core::pipeline::{bootstrap_from_urls, CrawlReport};
use semcrawl_core::repository::{ExportFormat, RepositoryError};
use semcrawl_core::{crawl, FetchPolicy, LabelLexicon, MatcherMode, QueryCriteria, Repository};
use semcrawl_fixtures::{FixtureServer, Manifest};

use crate::output::Output;
use crate::settings::{CrawlOverrides, FileConfig};

#[derive(Debug, Parser)]
#[command(name = "semcrawl", version, about = "Domain-driven hidden-web crawler", arg_required_else_help = true)]
struct Cli {
    /// Output style: aligned text or one JSON object per line.
    #[arg(long, global = true, value_enum, default_value = "human", env = "SEMCRAWL_OUTPUT")]
    output: Output,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build a task database from result pages listing known records.
    Bootstrap(BootstrapArgs),
    /// Fill and submit search forms on seed sites and store the records found.
    Crawl(CrawlArgs),
    /// Print repository records matching every given substring.
    Query(QueryArgs),
    /// Print the report of the last crawl.
    Stats(StatsArgs),
    /// Write the whole repository as CSV or JSON lines.
    Export(ExportArgs),
    /// Fixture sites for local testing.
    #[command(subcommand, arg_required_else_help = true)]
    Fixtures(FixturesCommand),
}

#[derive(Debug, Args)]
struct BootstrapArgs {
    /// Seed page URLs, or files with one URL per line.
    #[arg(long, required = true, num_args = 1..)]
    seeds: Vec<String>,
    /// Task database file to write.
    #[arg(long, env = "SEMCRAWL_TASK_DB")]
    task_db: PathBuf,
    #[arg(long, default_value = "books")]
    domain: String,
    /// Synonym lexicon file; the built-in book lexicon when omitted.
    #[arg(long, env = "SEMCRAWL_LEXICON")]
    lexicon: Option<PathBuf>,
    #[arg(long, env = "SEMCRAWL_THRESHOLD", default_value_t = 0.6)]
    threshold: f64,
    #[arg(long, env = "SEMCRAWL_DELAY_MS", default_value_t = 1000)]
    delay_ms: u64,
    #[arg(long, env = "SEMCRAWL_TIMEOUT_MS", default_value_t = 10_000)]
    timeout_ms: u64,
    #[arg(long)]
    no_robots: bool,
}

#[derive(Debug, Args)]
struct CrawlArgs {
    /// TOML file with crawl settings; flags and environment take precedence.
    #[arg(long, env = "SEMCRAWL_CONFIG")]
    config: Option<PathBuf>,
    /// Seed URLs, or files with one URL per line.
    #[arg(long, num_args = 1..)]
    seeds: Vec<String>,
    #[arg(long, env = "SEMCRAWL_TASK_DB")]
    task_db: Option<PathBuf>,
    #[arg(long, env = "SEMCRAWL_REPO")]
    repo: Option<PathBuf>,
    #[arg(long, env = "SEMCRAWL_LEXICON")]
    lexicon: Option<PathBuf>,
    /// Where to write the crawl report; defaults to `<repo>.report.json`.
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long, env = "SEMCRAWL_THRESHOLD")]
    threshold: Option<f64>,
    #[arg(long, env = "SEMCRAWL_MAX_SUBMISSIONS")]
    max_submissions: Option<usize>,
    #[arg(long, env = "SEMCRAWL_MATCHER", value_enum)]
    matcher: Option<MatcherArg>,
    /// Minimum gap between requests to one host.
    #[arg(long, env = "SEMCRAWL_DELAY_MS")]
    delay_ms: Option<u64>,
    #[arg(long, env = "SEMCRAWL_TIMEOUT_MS")]
    timeout_ms: Option<u64>,
    #[arg(long, env = "SEMCRAWL_RETRIES")]
    retries: Option<u32>,
    #[arg(long, env = "SEMCRAWL_USER_AGENT")]
    user_agent: Option<String>,
    /// Ignore robots.txt.
    #[arg(long)]
    no_robots: bool,
    /// Leave the task database unchanged.
    #[arg(long)]
    no_update: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MatcherArg {
    Semantic,
    Exact,
}

impl From<MatcherArg> for MatcherMode {
    fn from(m: MatcherArg) -> Self {
        match m {
            MatcherArg::Semantic => MatcherMode::Semantic,
            MatcherArg::Exact => MatcherMode::Exact,
        }
    }
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long, env = "SEMCRAWL_REPO")]
    repo: PathBuf,
    #[arg(long)]
    isbn: Option<String>,
    #[arg(long)]
    title: Option<String>,
    #[arg(long)]
    author: Option<String>,
    #[arg(long)]
    publisher: Option<String>,
    #[arg(long)]
    keywords: Option<String>,
    #[arg(long)]
    price: Option<String>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Report file written by `crawl`.
    #[arg(long, required_unless_present = "repo")]
    report: Option<PathBuf>,
    /// Read the report stored next to this repository.
    #[arg(long, env = "SEMCRAWL_REPO")]
    repo: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long, env = "SEMCRAWL_REPO")]
    repo: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Output file; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Jsonl,
}

#[derive(Debug, Subcommand)]
enum FixturesCommand {
    /// Serve every site of a manifest until interrupted.
    Serve {
        #[arg(long)]
        manifest: PathBuf,
        /// First port for sites whose manifest entry names none.
        #[arg(long)]
        port: Option<u16>,
    },
    /// Check a manifest and its datasets.
    Validate {
        #[arg(long)]
        manifest: PathBuf,
    },
}

/// A problem with the invocation or its configuration rather than with the work itself.
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(e: impl fmt::Display) -> anyhow::Error {
    ConfigError(e.to_string()).into()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// The reader of our output went away, as with `semcrawl export | head`.
fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<io::Error>().is_some_and(|io| io.kind() == io::ErrorKind::BrokenPipe)
            || c.downcast_ref::<RepositoryError>().is_some_and(|r| {
                matches!(r, RepositoryError::Storage(io) if io.kind() == io::ErrorKind::BrokenPipe)
            })
    })
}

fn run(cli: Cli) -> Result<()> {
    let out = cli.output;
    let stdout = io::stdout();
    let mut w = stdout.lock();
    match cli.command {
        Command::Bootstrap(a) => run_bootstrap(a, out, &mut w),
        Command::Crawl(a) => run_crawl(a, out, &mut w),
        Command::Query(a) => run_query(a, out, &mut w),
        Command::Stats(a) => {
            let path = match (a.report, a.repo) {
                (Some(p), _) => p,
                (None, Some(repo)) => settings::default_report_path(&repo),
                (None, None) => unreachable!("clap requires one of --report and --repo"),
            };
            let text = std::fs::read_to_string(&path).with_context(|| format!("reading report {}", path.display()))?;
            let report: CrawlReport =
                serde_json::from_str(&text).with_context(|| format!("parsing report {}", path.display()))?;
            output::report(out, &mut w, &report)
        }
        Command::Export(a) => {
            let repo = Repository::open(&a.repo).map_err(config_error)?;
            let format = match a.format {
                FormatArg::Csv => ExportFormat::Csv,
                FormatArg::Jsonl => ExportFormat::Jsonl,
            };
            match a.out {
                Some(p) => {
                    let f = File::create(&p).with_context(|| format!("creating {}", p.display()))?;
                    let mut f = BufWriter::new(f);
                    repo.export(format, &mut f)?;
                    f.flush()?;
                }
                None => repo.export(format, &mut w)?,
            }
            Ok(())
        }
        Command::Fixtures(FixturesCommand::Validate { manifest }) => {
            let m = Manifest::load(&manifest).map_err(config_error)?;
            output::manifest(out, &mut w, &m)
        }
        Command::Fixtures(FixturesCommand::Serve { manifest, port }) => {
            let m = Manifest::load(&manifest).map_err(config_error)?;
            let server = FixtureServer::start_with_base_port(m, port).map_err(config_error)?;
            output::serving(out, &mut w, &server)?;
            w.flush()?;
            drop(w);
            loop {
                std::thread::park();
            }
        }
    }
}

fn run_bootstrap(a: BootstrapArgs, out: Output, w: &mut impl Write) -> Result<()> {
    let seeds = settings::expand_seeds(&a.seeds).map_err(config_error)?;
    let lexicon = match &a.lexicon {
        Some(p) => LabelLexicon::load(p).map_err(config_error)?,
        None => LabelLexicon::books(),
    };
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(config_error(format!("threshold {} is outside [0, 1]", a.threshold)));
    }
    let policy = FetchPolicy {
        per_host_delay: Duration::from_millis(a.delay_ms),
        timeout: Duration::from_millis(a.timeout_ms),
        respect_robots: !a.no_robots,
        ..FetchPolicy::default()
    };
    policy.validate().map_err(config_error)?;
    let boot = bootstrap_from_urls(&a.domain, &seeds, policy, &lexicon, a.threshold)?;
    boot.db.save(&a.task_db).with_context(|| format!("writing {}", a.task_db.display()))?;
    output::bootstrap(out, w, &a.task_db, &boot)
}

fn run_crawl(a: CrawlArgs, out: Output, w: &mut impl Write) -> Result<()> {
    let file = match &a.config {
        Some(p) => FileConfig::load(p).map_err(config_error)?,
        None => FileConfig::default(),
    };
    let over = CrawlOverrides {
        seeds: a.seeds,
        task_db: a.task_db,
        repo: a.repo,
        lexicon: a.lexicon,
        report: a.report,
        threshold: a.threshold,
        max_submissions: a.max_submissions,
        matcher: a.matcher.map(Into::into),
        delay_ms: a.delay_ms,
        timeout_ms: a.timeout_ms,
        retries: a.retries,
        user_agent: a.user_agent,
        no_robots: a.no_robots,
        no_update: a.no_update,
    };
    let resolved = settings::resolve(over, file).map_err(config_error)?;
    let outcome = crawl(&resolved.config).map_err(config_error)?;
    if let Some(p) = &resolved.report_path {
        let json = serde_json::to_string_pretty(&outcome.report)?;
        std::fs::write(p, json + "\n").with_context(|| format!("writing report {}", p.display()))?;
    }
    output::report(out, w, &outcome.report)
}

fn run_query(a: QueryArgs, out: Output, w: &mut impl Write) -> Result<()> {
    let repo = Repository::open(&a.repo).map_err(config_error)?;
    let criteria = QueryCriteria {
        isbn: a.isbn,
        title: a.title,
        author: a.author,
        publisher: a.publisher,
        keywords: a.keywords,
        price: a.price,
    };
    let hits = match repo.query(&criteria) {
        Err(RepositoryError::EmptyCriteria) => {
            return Err(config_error("query needs at least one of --isbn --title --author --publisher --keywords --price"))
        }
        other => other?,
    };
    output::records(out, w, &hits)
}
