//! Structured record extraction from response pages.
//!
//! The record region is found by counting tag-path signatures: every
//! element gets the path of tags from the root (ancestor classes included)
//! plus the set of its child tags. The signature that repeats most often,
//! at least three times, marks one record per repetition. Leaf elements
//! inside a record are slots; each value slot is tied to a concept through
//! nearby header or label text, then class/itemprop hints, then the shape of
//! its values.

use std::collections::{BTreeSet, HashMap};
use std::sync::LazyLock;

use chrono::Utc;
use ego_tree::NodeId;
use regex::Regex;
use scraper::{ElementRef, Html, Node};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::form::WebPage;
use crate::matcher::LabelMatcher;
use crate::record::{DataRecord, RecordField};
use crate::text::{collapse_whitespace, label_phrase, trim_label};

pub const MIN_REPETITIONS: usize = 3;

static ISBN_SHAPE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^(?:97[89])?\d{9}[\dXx]$").unwrap());
static PRICE_SHAPE: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(?:[$£€¥₹]|(?i:rs\.?|usd|eur|gbp|inr))\s*\d[\d,]*(?:\.\d+)?$|^\d[\d,]*(?:\.\d+)?\s*(?i:usd|eur|gbp|inr)$")
        .unwrap()
});
const AVAILABILITY_LABELS: &[&str] = &["availability", "available", "stock", "status"];
const AVAILABILITY_VALUES: &[&str] = &["in stock", "out of stock", "available", "unavailable", "not available", "sold out"];
const SKIPPED_LEAVES: &[&str] = &["input", "select", "textarea", "button", "script", "style", "br", "img", "hr"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExtractError {
    #[error("no tag-path signature repeats at least {min} times")]
    NoTemplate { min: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub error_phrases: Vec<String>,
    pub invalid_phrases: Vec<String>,
    pub min_repetitions: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            error_phrases: ["no results", "not found", "0 results", "error"].map(String::from).to_vec(),
            invalid_phrases: ["out of stock", "not available", "unavailable"].map(String::from).to_vec(),
            min_repetitions: MIN_REPETITIONS,
        }
    }
}

/// How a value slot got its concept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Association {
    HeaderText,
    TagMeta,
    ValuePattern,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SlotRole {
    /// Constant descriptive text such as `Written by:`.
    Label(String),
    Value {
        concept: Option<String>,
        via: Option<Association>,
        /// The label text the association was made from, if any.
        label: Option<String>,
    },
    Availability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSlot {
    /// Path from the record node, e.g. `td:2` or `div:0/span:1`.
    pub path: String,
    pub role: SlotRole,
}

/// The repeating result region of a page and what each of its slots means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordTemplate {
    pub signature: String,
    pub repetitions: usize,
    pub slots: Vec<TemplateSlot>,
}

impl RecordTemplate {
    pub fn concept_slots(&self) -> impl Iterator<Item = (&str, &str)> {
        self.slots.iter().filter_map(|s| match &s.role {
            SlotRole::Value { concept: Some(c), .. } => Some((s.path.as_str(), c.as_str())),
            _ => None,
        })
    }

    /// Labels of value slots that could not be tied to any concept.
    pub fn unassigned_labels(&self) -> Vec<String> {
        self.slots
            .iter()
            .filter_map(|s| match &s.role {
                SlotRole::Value { concept: None, label: Some(l), .. } => Some(l.clone()),
                _ => None,
            })
            .collect()
    }
}

/// One repetition's concept cells, before they are turned into a record.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExtractedRow {
    pub cells: Vec<(String, String)>,
    pub availability: Option<String>,
}

#[derive(Debug, Clone)]
pub struct Extractor {
    matcher: LabelMatcher,
    config: ExtractorConfig,
    error_re: Option<Regex>,
}

impl Extractor {
    pub fn new(matcher: LabelMatcher, config: ExtractorConfig) -> Self {
        let error_re = phrase_regex(&config.error_phrases);
        Self { matcher, config, error_re }
    }

    pub fn config(&self) -> &ExtractorConfig {
        &self.config
    }

    /// Error pages: HTTP status of 400 or more, a configured error phrase in
    /// the visible text, or no repeating region.
    pub fn is_error_page(&self, page: &WebPage) -> bool {
        self.has_error_signal(page) || self.detect_template(page, &record_concepts()).is_err()
    }

    /// The status and phrase checks of [`Self::is_error_page`] without the
    /// structural one.
    pub fn has_error_signal(&self, page: &WebPage) -> bool {
        if page.status >= 400 {
            return true;
        }
        let Some(re) = &self.error_re else { return false };
        let doc = Html::parse_document(&page.body);
        re.is_match(&visible_text(&doc))
    }

    pub fn detect_template(&self, page: &WebPage, concepts: &[&str]) -> Result<RecordTemplate, ExtractError> {
        let doc = Html::parse_document(&page.body);
        self.detect_in(&doc, concepts)
    }

    fn detect_in(&self, doc: &Html, concepts: &[&str]) -> Result<RecordTemplate, ExtractError> {
        let min = self.config.min_repetitions.max(1);
        let groups = signature_groups(doc);
        let best = groups
            .iter()
            .filter(|g| g.nodes.len() >= min)
            .max_by(|a, b| {
                a.nodes
                    .len()
                    .cmp(&b.nodes.len())
                    .then(a.depth.cmp(&b.depth))
                    .then(b.first_order.cmp(&a.first_order))
            })
            .ok_or(ExtractError::NoTemplate { min })?;
        let records: Vec<ElementRef<'_>> = best
            .nodes
            .iter()
            .filter_map(|&id| doc.tree.get(id).and_then(ElementRef::wrap))
            .collect();
        let slots = self.associate(&records, concepts);
        Ok(RecordTemplate { signature: best.signature.clone(), repetitions: records.len(), slots })
    }

    fn associate(&self, records: &[ElementRef<'_>], concepts: &[&str]) -> Vec<TemplateSlot> {
        let per_record: Vec<Vec<Leaf<'_>>> = records.iter().map(|r| leaves(*r)).collect();
        let mut order: Vec<String> = Vec::new();
        let mut info: HashMap<String, SlotInfo> = HashMap::new();
        for leaves in &per_record {
            for leaf in leaves {
                let entry = info.entry(leaf.path.clone()).or_insert_with(|| {
                    order.push(leaf.path.clone());
                    SlotInfo { column: leaf.column, meta: leaf_meta(leaf.el), values: Vec::new() }
                });
                entry.values.push(leaf.text.clone());
            }
        }
        let header = records.first().and_then(|r| header_cells(*r));

        // Labels first: constant text that reads like a label.
        let n = records.len();
        let mut roles: Vec<Option<SlotRole>> = vec![None; order.len()];
        for (i, path) in order.iter().enumerate() {
            let slot = &info[path];
            if header.as_ref().and_then(|h| h.get(slot.column)).is_some_and(|h| !h.is_empty()) {
                continue;
            }
            let first = &slot.values[0];
            let constant = n >= 2 && slot.values.len() == n && !first.is_empty() && slot.values.iter().all(|v| v == first);
            if constant {
                let raw = first.trim_end();
                let looks_like_label = !is_availability_value(raw)
                    && (raw.ends_with(':')
                    || self.matcher.best_concept(raw, concepts).is_some()
                        || is_availability_label(raw));
                if looks_like_label {
                    roles[i] = Some(SlotRole::Label(trim_label(raw)));
                }
            }
        }

        // Candidate concepts per value slot.
        let mut candidates: Vec<(usize, String, f64, Association, Option<String>)> = Vec::new();
        let mut slot_label: Vec<Option<String>> = vec![None; order.len()];
        for (i, path) in order.iter().enumerate() {
            if roles[i].is_some() {
                continue;
            }
            let slot = &info[path];
            let mut texts: Vec<String> = Vec::new();
            if let Some(h) = header.as_ref().and_then(|h| h.get(slot.column)).filter(|h| !h.is_empty()) {
                texts.push(h.clone());
            }
            if i > 0 {
                if let Some(SlotRole::Label(l)) = &roles[i - 1] {
                    texts.push(l.clone());
                }
            }
            slot_label[i] = texts.first().cloned().or_else(|| slot.meta.first().cloned());
            if texts.iter().chain(slot.meta.iter()).any(|t| is_availability_label(t))
                || all_nonempty(&slot.values, is_availability_value)
            {
                roles[i] = Some(SlotRole::Availability);
                continue;
            }
            let mut found = false;
            for t in &texts {
                if let Some((c, s)) = self.matcher.best_concept(t, concepts) {
                    candidates.push((i, c.to_owned(), s, Association::HeaderText, Some(t.clone())));
                    found = true;
                }
            }
            if !found {
                for m in &slot.meta {
                    if let Some((c, s)) = self.matcher.best_concept(m, concepts) {
                        candidates.push((i, c.to_owned(), s, Association::TagMeta, Some(m.clone())));
                        found = true;
                    }
                }
            }
            if !found {
                let pattern = if all_nonempty(&slot.values, |v| ISBN_SHAPE.is_match(&v.replace(['-', ' '], ""))) {
                    Some(RecordField::Isbn)
                } else if all_nonempty(&slot.values, |v| PRICE_SHAPE.is_match(v.trim())) {
                    Some(RecordField::Price)
                } else {
                    None
                };
                if let Some(field) = pattern {
                    if let Some(c) = concepts.iter().find(|c| RecordField::from_concept_label(c) == Some(field)) {
                        candidates.push((i, (*c).to_owned(), 1.0, Association::ValuePattern, None));
                    }
                }
            }
        }

        // One slot per concept: better association tier, then score, then slot order.
        candidates.sort_by(|a, b| a.3.cmp(&b.3).then(b.2.total_cmp(&a.2)).then(a.0.cmp(&b.0)));
        let mut taken_concepts: BTreeSet<String> = BTreeSet::new();
        for (i, concept, _, via, label) in candidates {
            if roles[i].is_some() || taken_concepts.contains(&concept) {
                continue;
            }
            taken_concepts.insert(concept.clone());
            roles[i] = Some(SlotRole::Value { concept: Some(concept), via: Some(via), label });
        }

        order
            .into_iter()
            .enumerate()
            .map(|(i, path)| {
                let role = roles[i].take().unwrap_or_else(|| SlotRole::Value {
                    concept: None,
                    via: None,
                    label: slot_label[i].take(),
                });
                TemplateSlot { path, role }
            })
            .collect()
    }

    /// Concept cells of every repetition of `template` on `page`.
    pub fn extract_rows(&self, page: &WebPage, template: &RecordTemplate) -> Vec<ExtractedRow> {
        let doc = Html::parse_document(&page.body);
        let availability_paths: Vec<&str> = template
            .slots
            .iter()
            .filter(|s| s.role == SlotRole::Availability)
            .map(|s| s.path.as_str())
            .collect();
        let mut rows = Vec::new();
        for group in signature_groups(&doc) {
            if group.signature != template.signature {
                continue;
            }
            for id in group.nodes {
                let Some(record) = doc.tree.get(id).and_then(ElementRef::wrap) else { continue };
                let by_path: HashMap<String, String> = leaves(record).into_iter().map(|l| (l.path, l.text)).collect();
                let mut row = ExtractedRow::default();
                for (path, concept) in template.concept_slots() {
                    if let Some(v) = by_path.get(path).filter(|v| !v.is_empty()) {
                        row.cells.push((concept.to_owned(), v.clone()));
                    }
                }
                row.availability = availability_paths
                    .iter()
                    .find_map(|p| by_path.get(*p).filter(|v| !v.is_empty()).cloned());
                rows.push(row);
            }
        }
        rows
    }

    pub fn extract_records(&self, page: &WebPage, template: &RecordTemplate) -> Vec<DataRecord> {
        self.extract_records_with_diagnostics(page, template).0
    }

    /// One record per repetition. Records without a title or ISBN are
    /// dropped and reported.
    pub fn extract_records_with_diagnostics(&self, page: &WebPage, template: &RecordTemplate) -> (Vec<DataRecord>, Vec<String>) {
        let now = Utc::now();
        let mut records = Vec::new();
        let mut diagnostics = Vec::new();
        for (n, row) in self.extract_rows(page, template).into_iter().enumerate() {
            let mut record = DataRecord {
                source_url: page.url.clone(),
                extracted_at: Some(now),
                availability: row.availability,
                ..DataRecord::default()
            };
            for (concept, value) in row.cells {
                if let Some(field) = RecordField::from_concept_label(&concept) {
                    record.set(field, value);
                }
            }
            if record.is_valid() {
                records.push(record);
            } else {
                diagnostics.push(format!("{}: repetition #{n} has neither title nor isbn; dropped", page.url));
            }
        }
        (records, diagnostics)
    }

    /// Drops records whose availability cell carries an invalid phrase such
    /// as "out of stock". Order is preserved.
    pub fn filter_invalid(&self, records: Vec<DataRecord>) -> Vec<DataRecord> {
        let phrases: Vec<String> = self.config.invalid_phrases.iter().map(|p| p.to_lowercase()).collect();
        records
            .into_iter()
            .filter(|r| {
                let Some(a) = r.availability.as_deref() else { return true };
                let a = a.to_lowercase();
                !phrases.iter().any(|p| a.contains(p.as_str()))
            })
            .collect()
    }
}

/// Concept labels of the record fields.
pub fn record_concepts() -> Vec<&'static str> {
    RecordField::ALL.iter().map(|f| f.concept_label()).collect()
}

fn phrase_regex(phrases: &[String]) -> Option<Regex> {
    let alts: Vec<String> = phrases
        .iter()
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| regex::escape(&collapse_whitespace(p)).replace(' ', r"\s+"))
        .collect();
    if alts.is_empty() {
        return None;
    }
    Regex::new(&format!(r"(?i)\b(?:{})\b", alts.join("|"))).ok()
}

fn visible_text(doc: &Html) -> String {
    let mut out = String::new();
    for node in doc.tree.root().descendants() {
        if let Node::Text(t) = node.value() {
            let hidden = node.ancestors().any(|a| {
                matches!(a.value(), Node::Element(e) if matches!(e.name(), "script" | "style" | "title" | "head"))
            });
            if !hidden {
                out.push_str(t);
                out.push(' ');
            }
        }
    }
    out
}

fn is_availability_label(text: &str) -> bool {
    let phrase = label_phrase(text);
    phrase.split(' ').any(|t| AVAILABILITY_LABELS.contains(&t))
}

fn is_availability_value(text: &str) -> bool {
    let folded = collapse_whitespace(&text.to_lowercase());
    AVAILABILITY_VALUES.contains(&folded.as_str())
}

fn all_nonempty(values: &[String], pred: impl Fn(&str) -> bool) -> bool {
    let mut any = false;
    for v in values.iter().filter(|v| !v.is_empty()) {
        if !pred(v) {
            return false;
        }
        any = true;
    }
    any
}

struct SignatureGroup {
    signature: String,
    depth: usize,
    first_order: usize,
    nodes: Vec<NodeId>,
}

struct SlotInfo {
    column: usize,
    meta: Vec<String>,
    values: Vec<String>,
}

fn signature_groups(doc: &Html) -> Vec<SignatureGroup> {
    let mut groups: Vec<SignatureGroup> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for (order, node) in doc.tree.root().descendants().enumerate() {
        let Some(el) = ElementRef::wrap(node) else { continue };
        let child_tags: BTreeSet<&str> = el.children().filter_map(ElementRef::wrap).map(|c| c.value().name()).collect();
        if child_tags.is_empty() {
            continue;
        }
        let mut path: Vec<String> = Vec::new();
        let mut inside_form = false;
        for anc in el.ancestors().filter_map(ElementRef::wrap) {
            if anc.value().name() == "form" {
                inside_form = true;
                break;
            }
            path.push(tag_with_classes(anc));
        }
        if inside_form || el.value().name() == "form" || text_leaf_count(el) < 2 {
            continue;
        }
        path.reverse();
        path.push(el.value().name().to_owned());
        let depth = path.len();
        let signature = format!("{}{{{}}}", path.join("/"), child_tags.into_iter().collect::<Vec<_>>().join(","));
        match index.get(&signature) {
            Some(&g) => groups[g].nodes.push(el.id()),
            None => {
                index.insert(signature.clone(), groups.len());
                groups.push(SignatureGroup { signature, depth, first_order: order, nodes: vec![el.id()] });
            }
        }
    }
    groups
}

fn tag_with_classes(el: ElementRef<'_>) -> String {
    let mut classes: Vec<&str> = el.value().classes().collect();
    if classes.is_empty() {
        return el.value().name().to_owned();
    }
    classes.sort_unstable();
    format!("{}.{}", el.value().name(), classes.join("."))
}

fn text_leaf_count(el: ElementRef<'_>) -> usize {
    el.descendants()
        .skip(1)
        .filter_map(ElementRef::wrap)
        .filter(|d| !SKIPPED_LEAVES.contains(&d.value().name()) && !d.children().any(|c| c.value().is_element()))
        .count()
}

struct Leaf<'a> {
    path: String,
    column: usize,
    text: String,
    el: ElementRef<'a>,
}

fn leaves(record: ElementRef<'_>) -> Vec<Leaf<'_>> {
    let mut out = Vec::new();
    let mut column = 0;
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for child in record.children().filter_map(ElementRef::wrap) {
        let name = child.value().name();
        let nth = counts.entry(name).or_insert(0);
        let seg = format!("{name}:{nth}");
        *nth += 1;
        collect_leaves(child, seg, column, &mut out);
        column += 1;
    }
    out
}

fn collect_leaves<'a>(el: ElementRef<'a>, path: String, column: usize, out: &mut Vec<Leaf<'a>>) {
    if SKIPPED_LEAVES.contains(&el.value().name()) {
        return;
    }
    let children: Vec<ElementRef<'a>> = el.children().filter_map(ElementRef::wrap).collect();
    if children.is_empty() {
        let text = collapse_whitespace(&el.text().collect::<String>());
        out.push(Leaf { path, column, text, el });
        return;
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for child in children {
        let name = child.value().name();
        let nth = counts.entry(name).or_insert(0);
        let seg = format!("{path}/{name}:{nth}");
        *nth += 1;
        collect_leaves(child, seg, column, out);
    }
}

/// Class and itemprop hints on a leaf, as space-separated words.
fn leaf_meta(el: ElementRef<'_>) -> Vec<String> {
    let mut out = Vec::new();
    for attr in ["itemprop", "data-field", "class"] {
        if let Some(v) = el.value().attr(attr) {
            for token in v.split_whitespace() {
                let words = token.replace(['-', '_'], " ");
                if !words.trim().is_empty() && !out.contains(&words) {
                    out.push(words);
                }
            }
        }
    }
    out
}

/// Header texts by column for a table-row record: the first row of the
/// enclosing table made of `th` cells.
fn header_cells(record: ElementRef<'_>) -> Option<Vec<String>> {
    if record.value().name() != "tr" {
        return None;
    }
    let table = record.ancestors().filter_map(ElementRef::wrap).find(|a| a.value().name() == "table")?;
    let header_row = table.descendants().filter_map(ElementRef::wrap).find(|r| {
        r.value().name() == "tr"
            && r.ancestors().filter_map(ElementRef::wrap).find(|a| a.value().name() == "table").map(|t| t.id())
                == Some(table.id())
            && r.children().filter_map(ElementRef::wrap).any(|c| c.value().name() == "th")
    })?;
    Some(
        header_row
            .children()
            .filter_map(ElementRef::wrap)
            .map(|c| trim_label(&c.text().collect::<String>()))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::LabelLexicon;
    use crate::matcher::{MatcherMode, DEFAULT_THRESHOLD};

    fn extractor() -> Extractor {
        Extractor::new(
            LabelMatcher::new(LabelLexicon::books(), MatcherMode::Semantic, DEFAULT_THRESHOLD),
            ExtractorConfig::default(),
        )
    }

    fn table_page(header: &[&str], rows: &[Vec<&str>]) -> WebPage {
        let mut html = String::from("<html><body><h1>Results</h1><table class=\"results\"><tr>");
        for h in header {
            html.push_str(&format!("<th>{h}</th>"));
        }
        html.push_str("</tr>");
        for r in rows {
            html.push_str("<tr>");
            for c in r {
                html.push_str(&format!("<td>{c}</td>"));
            }
            html.push_str("</tr>");
        }
        html.push_str("</table></body></html>");
        WebPage::new("http://shop.test/search?q=x", html)
    }

    fn ten_rows() -> Vec<Vec<&'static str>> {
        (0..10).map(|i| vec![["A", "B", "C", "D", "E", "F", "G", "H", "I", "J"][i], "Someone", "Press"]).collect()
    }

    #[test]
    fn status_404_is_error() {
        let p = WebPage::with_status("http://x.test/", "<p>gone</p>", 404);
        assert!(extractor().is_error_page(&p));
    }

    #[test]
    fn no_results_phrase_is_error() {
        let p = WebPage::new("http://x.test/", "<p>No results found for your query</p>");
        assert!(extractor().has_error_signal(&p));
        assert!(extractor().is_error_page(&p));
    }

    #[test]
    fn ten_results_is_not_error() {
        let p = table_page(&["Title", "Author", "Publisher"], &ten_rows());
        assert!(!extractor().is_error_page(&p));
    }

    #[test]
    fn zero_results_phrase_needs_word_boundary() {
        let p = WebPage::new("http://x.test/", "<p>Showing 10 results</p>");
        assert!(!extractor().has_error_signal(&p));
    }

    #[test]
    fn header_columns_map_to_concepts() {
        let p = table_page(&["Title", "Author", "Publisher"], &ten_rows());
        let t = extractor().detect_template(&p, &record_concepts()).unwrap();
        assert_eq!(t.repetitions, 10);
        let mapped: Vec<_> = t.concept_slots().collect();
        assert_eq!(mapped, [("td:0", "Title"), ("td:1", "Author"), ("td:2", "Publisher")]);
    }

    #[test]
    fn writer_header_maps_to_author() {
        let rows: Vec<Vec<&str>> = (0..10).map(|_| vec!["Same Book", "Same Person"]).collect();
        let p = table_page(&["Title", "Writer"], &rows);
        let t = extractor().detect_template(&p, &record_concepts()).unwrap();
        assert!(t.concept_slots().any(|(_, c)| c == "Author"));
    }

    #[test]
    fn decoy_nav_region_loses_to_results() {
        let mut html = String::from("<html><body><ul class=\"nav\">");
        for i in 0..5 {
            html.push_str(&format!("<li><a href=\"/{i}\">Link {i}</a><span>hint</span></li>"));
        }
        html.push_str("</ul><div class=\"hits\">");
        for i in 0..10 {
            html.push_str(&format!("<div class=\"hit\"><span class=\"title\">Book {i}</span><span class=\"author\">Writer {i}</span></div>"));
        }
        html.push_str("</div></body></html>");
        let p = WebPage::new("http://x.test/", html);
        let t = extractor().detect_template(&p, &record_concepts()).unwrap();
        assert_eq!(t.repetitions, 10);
        assert!(t.signature.contains("div.hits"), "{}", t.signature);
        let records = extractor().extract_records(&p, &t);
        assert_eq!(records.len(), 10);
        assert_eq!(records[3].title.as_deref(), Some("Book 3"));
        assert_eq!(records[3].author.as_deref(), Some("Writer 3"));
    }

    #[test]
    fn label_value_blocks() {
        let mut html = String::from("<div class=\"results\">");
        for i in 0..4 {
            html.push_str(&format!(
                "<div class=\"r\"><span>Title:</span><span>T{i}</span><span>Written by:</span><span>A{i}</span>\
                 <span>Availability:</span><span>{}</span></div>",
                if i == 1 { "Out of stock" } else { "In stock" }
            ));
        }
        html.push_str("</div>");
        let p = WebPage::new("http://x.test/", html);
        let ex = extractor();
        let t = ex.detect_template(&p, &record_concepts()).unwrap();
        let recs = ex.extract_records(&p, &t);
        assert_eq!(recs.len(), 4);
        assert_eq!(recs[2].author.as_deref(), Some("A2"));
        assert_eq!(recs[1].availability.as_deref(), Some("Out of stock"));
        let kept = ex.filter_invalid(recs);
        assert_eq!(kept.len(), 3);
        assert!(kept.iter().all(|r| r.title.as_deref() != Some("T1")));
    }

    #[test]
    fn value_patterns_fill_in_for_missing_headers() {
        let rows: Vec<Vec<&str>> = (0..5)
            .map(|i| vec![["Book A", "Book B", "Book C", "Book D", "Book E"][i], "9780340734216", "$12.99"])
            .collect();
        let p = table_page(&["Name", "", ""], &rows);
        let t = extractor().detect_template(&p, &record_concepts()).unwrap();
        let mapped: Vec<_> = t.concept_slots().collect();
        assert!(mapped.contains(&("td:1", "ISBN")), "{mapped:?}");
        assert!(mapped.contains(&("td:2", "Price")), "{mapped:?}");
    }

    #[test]
    fn fewer_than_three_repetitions_is_no_template() {
        let rows: Vec<Vec<&str>> = vec![vec!["A", "B"], vec!["C", "D"]];
        let p = table_page(&["Title", "Author"], &rows);
        assert_eq!(
            extractor().detect_template(&p, &record_concepts()),
            Err(ExtractError::NoTemplate { min: 3 })
        );
        assert!(extractor().is_error_page(&p));
    }

    #[test]
    fn records_without_title_or_isbn_are_dropped() {
        let rows: Vec<Vec<&str>> = vec![vec!["", "B"], vec!["C", "D"], vec!["E", "F"]];
        let p = table_page(&["Title", "Author"], &rows);
        let ex = extractor();
        let t = ex.detect_template(&p, &record_concepts()).unwrap();
        let (recs, diags) = ex.extract_records_with_diagnostics(&p, &t);
        assert_eq!(recs.len(), 2);
        assert_eq!(diags.len(), 1);
    }

    #[test]
    fn filter_invalid_on_empty_input() {
        assert!(extractor().filter_invalid(Vec::new()).is_empty());
    }

    #[test]
    fn template_applies_to_smaller_page_with_same_signature() {
        let ex = extractor();
        let big = table_page(&["Title", "Author"], &[vec!["A", "x"], vec!["B", "y"], vec!["C", "z"]]);
        let small = table_page(&["Title", "Author"], &[vec!["Only", "One"]]);
        let t = ex.detect_template(&big, &record_concepts()).unwrap();
        let recs = ex.extract_records(&small, &t);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].title.as_deref(), Some("Only"));
    }

    #[test]
    fn signature_is_stable_across_pages() {
        let ex = extractor();
        let a = table_page(&["Title", "Author"], &[vec!["A", "x"], vec!["B", "y"], vec!["C", "z"]]);
        let b = table_page(&["Title", "Author"], &ten_rows().iter().map(|r| r[..2].to_vec()).collect::<Vec<_>>());
        assert_eq!(
            ex.detect_template(&a, &record_concepts()).unwrap().signature,
            ex.detect_template(&b, &record_concepts()).unwrap().signature
        );
    }
}
