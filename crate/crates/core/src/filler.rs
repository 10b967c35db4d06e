//! Choosing values for mapped form fields and encoding the submission.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::form_urlencoded;
use url::Url;

use crate::form::{Control, FieldDomain, FormField, Method, SearchForm};
use crate::lexicon::LabelLexicon;
use crate::matcher::{score_label_match, FieldMapping};
use crate::task_db::TaskDatabase;
use crate::text::collapse_whitespace;

pub const DEFAULT_MAX_SUBMISSIONS: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FillError {
    #[error("the field mapping covers no fillable field")]
    NoFillableMapping,
}

/// One concrete way of filling a form.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilledForm {
    pub form: SearchForm,
    /// `(field_index, value)` sorted by field index.
    pub assignments: Vec<(usize, String)>,
    pub submission_plan_id: usize,
}

impl FilledForm {
    pub fn value_of(&self, field_index: usize) -> Option<&str> {
        self.assignments.iter().find(|(i, _)| *i == field_index).map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubmissionRequest {
    pub method: Method,
    /// For GET this already carries the encoded query string.
    pub url: String,
    pub parameters: Vec<(String, String)>,
}

impl SubmissionRequest {
    pub const CONTENT_TYPE: &'static str = "application/x-www-form-urlencoded";

    /// `application/x-www-form-urlencoded` serialization of the parameters.
    pub fn encoded_parameters(&self) -> String {
        encode_pairs(&self.parameters)
    }

    /// Request body; empty for GET.
    pub fn body(&self) -> String {
        match self.method {
            Method::Get => String::new(),
            Method::Post => self.encoded_parameters(),
        }
    }

    /// Identity of the request for revisit checks: method, URL and body.
    pub fn fingerprint(&self) -> String {
        format!("{} {} {}", self.method, self.url, self.body())
    }
}

fn encode_pairs(pairs: &[(String, String)]) -> String {
    let mut s = form_urlencoded::Serializer::new(String::new());
    for (k, v) in pairs {
        s.append_pair(k, v);
    }
    s.finish()
}

/// Select options that constrain nothing: empty values and the usual
/// "any"/"all"/dash fillers.
pub fn is_placeholder_option(value: &str) -> bool {
    let v = collapse_whitespace(value).to_lowercase();
    let v = v.trim_matches(|c: char| c == '-' || c == '*' || c.is_whitespace());
    matches!(v, "" | "any" | "all" | "select" | "none" | "choose" | "select one" | "any value")
}

/// Plans up to `max_submissions` fills of `form`.
///
/// When two or more fields are mapped, value tuples taken from single rows
/// of the task database come first, in row order; a row qualifies when it
/// has a value for every mapped free-text concept. After that, each mapped
/// field is filled on its own, concepts taking turns and values taken in
/// rotation (which advances the database cursors). Select-style fields get
/// the option that best matches the database values. Plans never repeat an
/// assignment tuple.
pub fn plan_fills(
    form: &SearchForm,
    mapping: &FieldMapping,
    db: &mut TaskDatabase,
    max_submissions: usize,
    lexicon: &LabelLexicon,
) -> Result<Vec<FilledForm>, FillError> {
    let mapped: Vec<(usize, &str)> = mapping
        .assignments
        .iter()
        .filter(|a| form.fields.get(a.field_index).is_some_and(|f| f.control.is_fillable()))
        .map(|a| (a.field_index, a.concept_label.as_str()))
        .collect();
    if mapped.is_empty() {
        return Err(FillError::NoFillableMapping);
    }
    let mut plans: Vec<FilledForm> = Vec::new();
    let mut seen: HashSet<Vec<(usize, String)>> = HashSet::new();
    let mut push = |assignments: Vec<(usize, String)>, plans: &mut Vec<FilledForm>| {
        if !assignments.is_empty() && seen.insert(assignments.clone()) {
            let id = plans.len();
            plans.push(FilledForm { form: form.clone(), assignments, submission_plan_id: id });
        }
    };

    if mapped.len() >= 2 {
        let text: Vec<(usize, &str)> =
            mapped.iter().copied().filter(|(i, _)| !form.fields[*i].domain.is_finite()).collect();
        for row in 0..db.rows().len() {
            if plans.len() >= max_submissions {
                break;
            }
            if text.iter().any(|(_, c)| db.cell(row, c).is_none()) {
                continue;
            }
            let mut assignments = Vec::new();
            for &(i, concept) in &mapped {
                let field = &form.fields[i];
                let value = match &field.domain {
                    FieldDomain::Infinite => db.cell(row, concept).map(str::to_owned),
                    FieldDomain::Finite(options) => {
                        let row_value: Vec<String> = db.cell(row, concept).map(str::to_owned).into_iter().collect();
                        best_option(options, &row_value, lexicon)
                            .or_else(|| best_option(options, concept_values(db, concept), lexicon))
                            .or_else(|| first_real_option(options))
                    }
                };
                if let Some(v) = value {
                    assignments.push((i, v));
                }
            }
            push(assignments, &mut plans);
        }
    }

    // Single-field fills, concepts taking turns.
    let mut ranked_options: Vec<Vec<String>> = mapped
        .iter()
        .map(|&(i, concept)| match &form.fields[i].domain {
            FieldDomain::Finite(options) => ranked_options(options, concept_values(db, concept), lexicon),
            FieldDomain::Infinite => Vec::new(),
        })
        .collect();
    let mut exhausted = vec![false; mapped.len()];
    let mut attempts = vec![0usize; mapped.len()];
    while plans.len() < max_submissions && exhausted.iter().any(|e| !e) {
        for (slot, &(i, concept)) in mapped.iter().enumerate() {
            if plans.len() >= max_submissions {
                break;
            }
            if exhausted[slot] {
                continue;
            }
            let value = if form.fields[i].domain.is_finite() {
                if ranked_options[slot].is_empty() {
                    exhausted[slot] = true;
                    continue;
                }
                Some(ranked_options[slot].remove(0))
            } else {
                let limit = db.concept(concept).map_or(0, |c| c.values().len());
                if attempts[slot] >= limit {
                    exhausted[slot] = true;
                    continue;
                }
                attempts[slot] += 1;
                db.lookup_values(concept, 1).ok().and_then(|mut v| v.pop())
            };
            if let Some(v) = value {
                push(vec![(i, v)], &mut plans);
            }
        }
    }
    Ok(plans)
}

fn concept_values<'a>(db: &'a TaskDatabase, concept: &str) -> &'a [String] {
    db.concept(concept).map_or(&[], |c| c.values())
}

fn option_score(option: &str, values: &[String], lexicon: &LabelLexicon) -> f64 {
    values.iter().map(|v| score_label_match(option, v, lexicon)).fold(0.0, f64::max)
}

/// The non-placeholder option scoring best against `values`, if any scores
/// above zero. Ties go to the earlier option.
fn best_option(options: &[String], values: &[String], lexicon: &LabelLexicon) -> Option<String> {
    let mut best: Option<(&String, f64)> = None;
    for o in options.iter().filter(|o| !is_placeholder_option(o)) {
        let s = option_score(o, values, lexicon);
        if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
            best = Some((o, s));
        }
    }
    best.map(|(o, _)| o.clone())
}

fn first_real_option(options: &[String]) -> Option<String> {
    options.iter().find(|o| !is_placeholder_option(o)).cloned()
}

/// Non-placeholder options, best match against `values` first; options
/// with equal scores keep document order.
fn ranked_options(options: &[String], values: &[String], lexicon: &LabelLexicon) -> Vec<String> {
    let mut scored: Vec<(f64, &String)> = options
        .iter()
        .filter(|o| !is_placeholder_option(o))
        .map(|o| (option_score(o, values, lexicon), o))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored.into_iter().map(|(_, o)| o.clone()).collect()
}

/// Encodes a filled form as an HTTP request.
///
/// Parameters follow document order. Text fields without a value are sent
/// empty, selects fall back to their default option, unchecked radios and
/// checkboxes are left out, hidden fields carry their defaults and only the
/// first submit control is included.
pub fn build_submission(filled: &FilledForm) -> SubmissionRequest {
    let mut parameters = Vec::new();
    let mut submit_seen = false;
    for (i, field) in filled.form.fields.iter().enumerate() {
        let assigned = filled.value_of(i).map(str::to_owned);
        let value = match field.control {
            Control::TextBox => Some(assigned.unwrap_or_default()),
            Control::SelectList | Control::Radio | Control::Checkbox => assigned.or_else(|| default_of(field)),
            Control::Hidden => Some(field.default_value.clone().unwrap_or_default()),
            Control::Submit => {
                if submit_seen {
                    None
                } else {
                    submit_seen = true;
                    Some(field.default_value.clone().unwrap_or_default())
                }
            }
        };
        if let Some(v) = value {
            parameters.push((field.name.clone(), v));
        }
    }
    let url = match filled.form.method {
        Method::Get => match Url::parse(&filled.form.action_url) {
            Ok(mut u) => {
                u.set_query(None);
                let query = encode_pairs(&parameters);
                format!("{}?{}", u, query)
            }
            Err(_) => format!("{}?{}", filled.form.action_url, encode_pairs(&parameters)),
        },
        Method::Post => filled.form.action_url.clone(),
    };
    SubmissionRequest { method: filled.form.method, url, parameters }
}

fn default_of(field: &FormField) -> Option<String> {
    match field.control {
        Control::SelectList => field.default_value.clone().or_else(|| field.domain.values().first().cloned()),
        _ => field.default_value.clone(),
    }
}
