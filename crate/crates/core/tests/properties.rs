use std::collections::{BTreeSet, HashMap};

use chrono::{TimeZone, Utc};
use proptest::prelude::*;
use semcrawl_core::filler::{build_submission, plan_fills};
use semcrawl_core::form::{detect_forms, WebPage};
use semcrawl_core::matcher::{greedy_assignment, score_label_match};
use semcrawl_core::repository::ExportFormat;
use semcrawl_core::task_db::{Provenance, TaskDatabase};
use semcrawl_core::text::{normalize_label, STOPWORDS};
use semcrawl_core::{valid_page_ratio, DataRecord, LabelLexicon, LabelMatcher, MatcherMode, Repository};

const CONCEPTS: [&str; 5] = ["ISBN", "Title", "Author", "Publisher", "Keywords"];

fn provenance(n: u32) -> Provenance {
    Provenance::new(format!("http://seed.test/{n}"), Utc.timestamp_opt(1_700_000_000 + i64::from(n), 0).unwrap())
}

/// Cell text including the characters the file format has to escape.
fn cell() -> impl Strategy<Value = String> {
    "[A-Za-z0-9 ,\"\t\n;|#=-]{1,12}".prop_filter("needs a visible character", |s| !s.trim().is_empty())
}

fn rows() -> impl Strategy<Value = Vec<Vec<(usize, String)>>> {
    prop::collection::vec(prop::collection::vec((0..CONCEPTS.len(), cell()), 1..4), 1..12)
}

fn build_db(rows: &[Vec<(usize, String)>]) -> TaskDatabase {
    let mut db = TaskDatabase::new("books");
    for (n, row) in rows.iter().enumerate() {
        let cells: Vec<(&str, &str)> = row.iter().map(|(c, v)| (CONCEPTS[*c], v.as_str())).collect();
        db.add_row(cells, &provenance(n as u32));
    }
    db
}

fn record() -> impl Strategy<Value = DataRecord> {
    let opt = || prop::option::of("[A-Za-z ,\"]{1,10}".prop_map(|s| s.trim().to_owned()).prop_filter("blank", |s| !s.is_empty()));
    (opt(), "[A-Za-z]{1,8}( [A-Za-z]{1,8})?", opt(), opt(), opt(), prop::option::of("\\$[0-9]{1,3}\\.[0-9]{2}"))
        .prop_map(|(isbn, title, author, publisher, keywords, price)| DataRecord {
            isbn,
            title: Some(title),
            author,
            publisher,
            keywords,
            price,
            availability: None,
            source_url: "http://site.test/search".into(),
            extracted_at: Some(Utc.timestamp_opt(1_700_000_000, 0).unwrap()),
        })
}

proptest! {
    #[test]
    fn task_db_file_round_trips(rows in rows(), pulls in prop::collection::vec(0..CONCEPTS.len(), 0..6)) {
        let mut db = build_db(&rows);
        for c in pulls {
            let _ = db.lookup_values(CONCEPTS[c], 2);
        }
        let text = db.to_file_string().unwrap();
        let back = TaskDatabase::parse(&text).unwrap();
        prop_assert_eq!(&back, &db);
        prop_assert_eq!(back.to_file_string().unwrap(), text);
    }

    #[test]
    fn rotation_visits_every_value_equally(rows in rows(), rounds in 1usize..4) {
        let mut db = build_db(&rows);
        for label in CONCEPTS {
            let Some(n) = db.concept(label).map(|c| c.values().len()) else { continue };
            let mut seen: HashMap<String, usize> = HashMap::new();
            for _ in 0..rounds * n {
                for v in db.lookup_values(label, 1).unwrap() {
                    *seen.entry(v).or_default() += 1;
                }
            }
            prop_assert_eq!(seen.len(), n);
            prop_assert!(seen.values().all(|&k| k == rounds));
        }
    }

    #[test]
    fn lookup_never_repeats_within_a_call(rows in rows(), k in 1usize..20) {
        let mut db = build_db(&rows);
        for label in CONCEPTS {
            let Some(n) = db.concept(label).map(|c| c.values().len()) else { continue };
            let got = db.lookup_values(label, k).unwrap();
            prop_assert_eq!(got.len(), k.min(n));
            let distinct: BTreeSet<_> = got.iter().collect();
            prop_assert_eq!(distinct.len(), got.len());
        }
    }

    #[test]
    fn plans_are_distinct_bounded_and_inside_finite_domains(
        rows in rows(),
        options in prop::collection::btree_set("[a-z]{2,6}", 1..5),
        max in 1usize..12,
    ) {
        let mut db = build_db(&rows);
        let opts: String = options.iter().map(|o| format!("<option value=\"{o}\">{o}</option>")).collect();
        let html = format!(
            "<form action=\"/s\"><label for=\"a\">Author</label><input id=\"a\" name=\"a\">\
             <label for=\"t\">Title</label><input id=\"t\" name=\"t\">\
             <label for=\"k\">Keywords</label><select id=\"k\" name=\"k\"><option value=\"\">Any</option>{opts}</select>\
             <input type=\"submit\" value=\"Go\"></form>"
        );
        let form = detect_forms(&WebPage::new("http://site.test/", html)).remove(0);
        let lexicon = LabelLexicon::books();
        let labels: Vec<String> = db.concept_labels().into_iter().map(str::to_owned).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let mapping = LabelMatcher::new(lexicon.clone(), MatcherMode::Semantic, 0.6).match_form(&form, &refs);
        let Ok(plans) = plan_fills(&form, &mapping, &mut db, max, &lexicon) else { return Ok(()) };
        prop_assert!(plans.len() <= max);
        let fingerprints: BTreeSet<String> = plans.iter().map(|p| build_submission(p).fingerprint()).collect();
        prop_assert_eq!(fingerprints.len(), plans.len());
        let k = form.fields.iter().position(|f| f.name == "k").unwrap();
        for p in &plans {
            if let Some(v) = p.value_of(k) {
                prop_assert!(form.fields[k].domain.values().iter().any(|o| o == v));
            }
        }
    }

    #[test]
    fn upsert_is_idempotent(records in prop::collection::vec(record(), 0..30)) {
        let mut repo = Repository::in_memory();
        let first = repo.upsert(records.clone());
        let snapshot = repo.records().to_vec();
        let again = repo.upsert(records.clone());
        prop_assert_eq!(again.inserted, 0);
        prop_assert_eq!(again.enriched, 0);
        prop_assert_eq!(again.duplicates_dropped, records.len());
        prop_assert_eq!(repo.records(), &snapshot[..]);
        prop_assert_eq!(first.inserted + first.duplicates_dropped, records.len());
        let keys: BTreeSet<String> = repo.records().iter().map(DataRecord::dedup_key).collect();
        prop_assert_eq!(keys.len(), repo.len());
    }

    #[test]
    fn repository_export_import_round_trips(records in prop::collection::vec(record(), 0..20)) {
        let mut repo = Repository::in_memory();
        repo.upsert(records);
        for format in [ExportFormat::Csv, ExportFormat::Jsonl] {
            let mut buf = Vec::new();
            repo.export(format, &mut buf).unwrap();
            let back = Repository::import(format, buf.as_slice()).unwrap();
            prop_assert_eq!(back.records(), repo.records());
        }
    }

    #[test]
    fn repository_file_round_trips(records in prop::collection::vec(record(), 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("repo.csv");
        let mut repo = Repository::open(&path).unwrap();
        let (a, b) = records.split_at(records.len() / 2);
        repo.upsert(a.to_vec());
        repo.save().unwrap();
        repo.upsert(b.to_vec());
        repo.save().unwrap();
        let back = Repository::open(&path).unwrap();
        prop_assert_eq!(back.records(), repo.records());
    }

    #[test]
    fn normalized_labels_are_lowercase_tokens(raw in "[A-Za-z ,./:<>&;-]{0,30}") {
        let tokens = normalize_label(&raw);
        for t in &tokens {
            prop_assert!(!t.is_empty());
            prop_assert!(t.chars().all(|c| c.is_alphanumeric()));
            prop_assert_eq!(t.to_lowercase(), t.clone());
        }
        if tokens.iter().any(|t| STOPWORDS.contains(&t.as_str())) {
            prop_assert!(tokens.iter().all(|t| STOPWORDS.contains(&t.as_str())));
        }
        prop_assert_eq!(normalize_label(&tokens.join(" ")), tokens);
    }

    #[test]
    fn scores_are_symmetric_and_bounded(a in label(), b in label()) {
        let lex = LabelLexicon::books();
        let ab = score_label_match(&a, &b, &lex);
        prop_assert_eq!(ab, score_label_match(&b, &a, &lex));
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(score_label_match(&a, &a, &lex), if normalize_label(&a).is_empty() { 0.0 } else { 1.0 });
    }

    #[test]
    fn greedy_is_injective_and_threshold_monotone(
        scores in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..6), 1..6),
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
    ) {
        let width = scores.iter().map(Vec::len).min().unwrap();
        let scores: Vec<Vec<f64>> = scores.into_iter().map(|r| r[..width].to_vec()).collect();
        let labels: Vec<String> = (0..width).map(|c| format!("c{c}")).collect();
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        let low = greedy_assignment(&scores, &refs, lo);
        let high = greedy_assignment(&scores, &refs, hi);
        let rows: BTreeSet<_> = low.iter().map(|p| p.0).collect();
        let cols: BTreeSet<_> = low.iter().map(|p| p.1).collect();
        prop_assert_eq!(rows.len(), low.len());
        prop_assert_eq!(cols.len(), low.len());
        prop_assert!(low.iter().all(|p| p.2 >= lo));
        let low_pairs: BTreeSet<_> = low.iter().map(|p| (p.0, p.1)).collect();
        prop_assert!(high.iter().all(|p| low_pairs.contains(&(p.0, p.1))));
    }

    #[test]
    fn ratio_is_the_plain_quotient(total in 1u64..100_000, frac in 0.0f64..=1.0) {
        let valid = ((total as f64) * frac).floor() as u64;
        let r = valid_page_ratio(valid, total).unwrap();
        prop_assert_eq!(r, valid as f64 / total as f64);
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!(valid_page_ratio(total + 1, total).is_err());
    }
}

fn label() -> impl Strategy<Value = String> {
    let lex = LabelLexicon::books();
    let phrases: Vec<String> = lex.sets().iter().flat_map(|s| s.phrases.iter().cloned()).collect();
    prop_oneof![
        prop::sample::select(phrases.clone()),
        (prop::sample::select(phrases), "[a-z]{1,6}").prop_map(|(p, w)| format!("{p} {w}")),
        "[A-Za-z]{1,8}( [A-Za-z/]{1,8}){0,2}",
    ]
}

#[test]
fn lexicon_file_round_trips() {
    let content = |l: &LabelLexicon| -> Vec<(String, Vec<String>)> {
        l.sets().iter().map(|s| (s.canonical.clone(), s.phrases.clone())).collect()
    };
    let lex = LabelLexicon::books();
    let back = LabelLexicon::parse(&lex.to_file_string()).unwrap();
    assert_eq!(content(&back), content(&lex));
    assert_eq!(back.to_file_string(), lex.to_file_string());
}
