//! Human and line-delimited JSON renderings of command results.

use std::io::Write;
use std::path::Path;

use anyhow::Result;
use clap::ValueEnum;
use semcrawl_core::pipeline::CrawlReport;
use semcrawl_core::record::RecordField;
use semcrawl_core::task_db::Bootstrap;
use semcrawl_core::DataRecord;
use semcrawl_fixtures::{FixtureServer, Manifest};
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Output {
    Human,
    Lines,
}

fn line(w: &mut impl Write, value: &impl serde::Serialize) -> Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    writeln!(w)?;
    Ok(())
}

pub fn report(out: Output, w: &mut impl Write, r: &CrawlReport) -> Result<()> {
    if out == Output::Lines {
        return line(w, r);
    }
    let ratio = r.valid_page_ratio().map_or_else(|| "n/a".to_owned(), |x| format!("{x:.4}"));
    let rows = [
        ("websites visited", r.websites_visited.to_string()),
        ("forms found", r.forms_found.to_string()),
        ("forms filled", r.forms_filled.to_string()),
        ("pages retrieved", r.total_pages.to_string()),
        ("valid pages", r.valid_pages.to_string()),
        ("valid page ratio", ratio),
        ("records extracted", r.records_extracted.to_string()),
        ("records inserted", r.records_inserted.to_string()),
        ("duplicates dropped", r.duplicates_dropped.to_string()),
        ("task db values added", r.task_db_values_added.to_string()),
    ];
    for (k, v) in rows {
        writeln!(w, "{k:<22}{v}")?;
    }
    if !r.sites.is_empty() {
        writeln!(w)?;
        writeln!(w, "{:<32} {:>5} {:>6} {:>5} {:>5} {:>7}", "site", "forms", "filled", "pages", "valid", "records")?;
        for s in &r.sites {
            writeln!(
                w,
                "{:<32} {:>5} {:>6} {:>5} {:>5} {:>7}",
                s.seed, s.forms_found, s.forms_filled, s.total_pages, s.valid_pages, s.records_extracted
            )?;
        }
    }
    let errors: Vec<_> = r.errors().collect();
    if !errors.is_empty() {
        writeln!(w)?;
        writeln!(w, "errors:")?;
        for (seed, e) in errors {
            writeln!(w, "  {seed}: {e}")?;
        }
    }
    Ok(())
}

pub fn records(out: Output, w: &mut impl Write, records: &[&DataRecord]) -> Result<()> {
    if out == Output::Lines {
        for r in records {
            line(w, r)?;
        }
        return Ok(());
    }
    let fields = RecordField::ALL;
    let cell = |r: &DataRecord, f: RecordField| r.get(f).unwrap_or("").to_owned();
    let widths: Vec<usize> = fields
        .iter()
        .map(|&f| {
            records
                .iter()
                .map(|r| cell(r, f).chars().count())
                .chain([f.column_name().len()])
                .max()
                .unwrap_or(0)
                .min(40)
        })
        .collect();
    let fit = |s: &str, width: usize| -> String {
        let n = s.chars().count();
        if n <= width {
            format!("{s}{}", " ".repeat(width - n))
        } else {
            let cut: String = s.chars().take(width.saturating_sub(1)).collect();
            format!("{cut}~")
        }
    };
    let header: Vec<String> = fields.iter().zip(&widths).map(|(f, &wd)| fit(f.column_name(), wd)).collect();
    writeln!(w, "{}", header.join("  ").trim_end())?;
    for r in records {
        let row: Vec<String> = fields.iter().zip(&widths).map(|(&f, &wd)| fit(&cell(r, f), wd)).collect();
        writeln!(w, "{}", row.join("  ").trim_end())?;
    }
    writeln!(w, "({} record{})", records.len(), if records.len() == 1 { "" } else { "s" })?;
    Ok(())
}

pub fn bootstrap(out: Output, w: &mut impl Write, path: &Path, b: &Bootstrap) -> Result<()> {
    let concepts: Vec<_> = b
        .db
        .concepts()
        .iter()
        .map(|c| json!({ "concept": c.canonical_label, "values": c.values().len() }))
        .collect();
    if out == Output::Lines {
        return line(
            w,
            &json!({
                "task_db": path.display().to_string(),
                "rows": b.db.rows().len(),
                "concepts": concepts,
                "diagnostics": b.diagnostics,
            }),
        );
    }
    writeln!(w, "wrote {} ({} rows)", path.display(), b.db.rows().len())?;
    for c in b.db.concepts() {
        writeln!(w, "  {:<12}{} values", c.canonical_label, c.values().len())?;
    }
    for d in &b.diagnostics {
        writeln!(w, "note: {d}")?;
    }
    Ok(())
}

pub fn manifest(out: Output, w: &mut impl Write, m: &Manifest) -> Result<()> {
    for s in &m.sites {
        let fields: Vec<&str> = s.fields().map(|f| f.name.as_str()).collect();
        if out == Output::Lines {
            line(
                w,
                &json!({
                    "site": s.spec.name,
                    "rows": s.dataset.rows.len(),
                    "action": s.spec.form.action,
                    "fields": fields,
                }),
            )?;
        } else {
            writeln!(
                w,
                "{:<14}{:>4} rows  {} {}",
                s.spec.name,
                s.dataset.rows.len(),
                s.spec.form.action,
                fields.join(",")
            )?;
        }
    }
    if let Some(c) = &m.catalog {
        if out == Output::Lines {
            line(w, &json!({ "catalog": c.spec.name, "rows": c.dataset.rows.len(), "path": c.spec.path }))?;
        } else {
            writeln!(w, "{:<14}{:>4} rows  {}", c.spec.name, c.dataset.rows.len(), c.spec.path)?;
        }
    }
    if out == Output::Human {
        writeln!(w, "manifest ok")?;
    }
    Ok(())
}

pub fn serving(out: Output, w: &mut impl Write, server: &FixtureServer) -> Result<()> {
    let m = server.manifest();
    for s in &m.sites {
        let url = server.site_url(&s.spec.name).unwrap_or_default();
        if out == Output::Lines {
            line(w, &json!({ "site": s.spec.name, "url": url }))?;
        } else {
            writeln!(w, "{:<14}{url}", s.spec.name)?;
        }
    }
    if let Some(url) = server.catalog_url() {
        if out == Output::Lines {
            line(w, &json!({ "catalog": url }))?;
        } else {
            writeln!(w, "{:<14}{url}", "catalog")?;
        }
    }
    Ok(())
}
