use std::path::Path;
use std::process::{Command, Output};

use semcrawl_core::pipeline::CrawlReport;
use semcrawl_core::DataRecord;
use semcrawl_fixtures::{default_manifest_path, FixtureServer, Manifest};

fn semcrawl(args: &[&str]) -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_semcrawl"));
    cmd.args(args);
    for var in ["SEMCRAWL_OUTPUT", "SEMCRAWL_THRESHOLD", "SEMCRAWL_MATCHER", "SEMCRAWL_CONFIG", "SEMCRAWL_REPO", "SEMCRAWL_TASK_DB"] {
        cmd.env_remove(var);
    }
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn no_arguments_prints_help_and_fails() {
    let o = run(&mut semcrawl(&[]));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("Usage:"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&mut semcrawl(&["crawl", "--bogus"]));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn validate_reports_sites_and_bad_manifests() {
    let o = run(&mut semcrawl(&["--output", "lines", "fixtures", "validate", "--manifest", p(&default_manifest_path())]));
    assert!(o.status.success(), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 7);
    assert_eq!(lines[2]["site"], "synonym");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[[site]]\nname = \"x\"\ndataset = \"missing.csv\"\n[site.form]\n").unwrap();
    let o = run(&mut semcrawl(&["fixtures", "validate", "--manifest", p(&bad)]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));
}

#[test]
fn crawl_query_stats_export_round_trip() {
    let srv = FixtureServer::start(Manifest::load(default_manifest_path()).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("books.taskdb");
    let repo = dir.path().join("repo.csv");
    let seeds = dir.path().join("seeds.txt");
    std::fs::write(&seeds, srv.seeds().join("\n")).unwrap();

    let o = run(&mut semcrawl(&["bootstrap", "--seeds", &srv.catalog_url().unwrap(), "--task-db", p(&db), "--delay-ms", "5"]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("13 rows"));

    let o = run(&mut semcrawl(&[
        "--output", "lines", "crawl", "--seeds", p(&seeds), "--task-db", p(&db), "--repo", p(&repo), "--delay-ms", "10",
    ]));
    assert!(o.status.success(), "{}", stderr(&o));
    let report: CrawlReport = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(report.websites_visited, 6);
    assert!(report.records_inserted > 0);

    let o = run(&mut semcrawl(&["--output", "lines", "stats", "--repo", p(&repo)]));
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(serde_json::from_str::<CrawlReport>(stdout(&o).trim()).unwrap(), report);
    let o = run(&mut semcrawl(&["stats", "--repo", p(&repo)]));
    assert!(stdout(&o).contains("valid page ratio"));

    let o = run(&mut semcrawl(&["--output", "lines", "query", "--repo", p(&repo), "--title", "jungle"]));
    assert!(o.status.success(), "{}", stderr(&o));
    let hits: Vec<DataRecord> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!hits.is_empty());
    assert!(hits.iter().all(|r| r.title.as_deref().unwrap().to_lowercase().contains("jungle")));
    let o = run(&mut semcrawl(&["--output", "lines", "query", "--repo", p(&repo), "--title", "jungle", "--author", "kipling"]));
    let narrowed: Vec<DataRecord> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!narrowed.is_empty() && narrowed.len() < hits.len());
    assert_eq!(run(&mut semcrawl(&["query", "--repo", p(&repo)])).status.code(), Some(2));

    let out = dir.path().join("export.jsonl");
    let o = run(&mut semcrawl(&["export", "--repo", p(&repo), "--format", "jsonl", "--out", p(&out)]));
    assert!(o.status.success(), "{}", stderr(&o));
    let exported = std::fs::read_to_string(&out).unwrap();
    assert_eq!(exported.lines().count(), report.records_inserted);
    for l in exported.lines() {
        serde_json::from_str::<DataRecord>(l).unwrap();
    }
}

#[test]
fn configuration_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("crawl.toml");
    std::fs::write(&config, "seeds = [\"http://127.0.0.1:9/\"]\nthreshold = 7.0\n").unwrap();
    let db = dir.path().join("missing.taskdb");

    // A bad file value is a configuration error.
    let o = run(&mut semcrawl(&["crawl", "--config", p(&config), "--task-db", p(&db)]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("threshold"), "{}", stderr(&o));

    // The environment beats the file; the bad threshold is gone and the missing task DB is reported instead.
    let o = run(semcrawl(&["crawl", "--config", p(&config), "--task-db", p(&db)]).env("SEMCRAWL_THRESHOLD", "0.5"));
    assert_eq!(o.status.code(), Some(2));
    assert!(!stderr(&o).contains("threshold"), "{}", stderr(&o));

    // A flag beats the environment.
    let o = run(semcrawl(&["crawl", "--config", p(&config), "--task-db", p(&db), "--threshold", "9"])
        .env("SEMCRAWL_THRESHOLD", "0.5"));
    assert!(stderr(&o).contains("threshold 9"), "{}", stderr(&o));

    let o = run(&mut semcrawl(&["crawl", "--task-db", p(&db)]));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no seed"), "{}", stderr(&o));
}
