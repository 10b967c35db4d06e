//! Maps form-field labels onto task-database concepts.
//!
//! A label pair scores 1.0 when the normalized phrases are equal or sit in
//! the same synonym set. Otherwise the score is the Jaccard overlap of the
//! two token sets after each token is expanded with its single-token
//! synonyms. Fields are then assigned greedily by descending score.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::form::SearchForm;
use crate::lexicon::LabelLexicon;
use crate::text::normalize_label;

pub const DEFAULT_THRESHOLD: f64 = 0.6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatcherMode {
    #[default]
    Semantic,
    /// Baseline: 1.0 on identical normalized labels, 0.0 otherwise.
    Exact,
}

impl FromStr for MatcherMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "semantic" => Ok(Self::Semantic),
            "exact" => Ok(Self::Exact),
            other => Err(format!("unknown matcher mode {other:?} (expected semantic or exact)")),
        }
    }
}

/// Semantic similarity of two labels in `[0, 1]`. Symmetric.
pub fn score_label_match(form_label: &str, concept_label: &str, lexicon: &LabelLexicon) -> f64 {
    let a = normalize_label(form_label);
    let b = normalize_label(concept_label);
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let pa = a.join(" ");
    let pb = b.join(" ");
    if pa == pb {
        return 1.0;
    }
    if let (Some(sa), Some(sb)) = (lexicon.set_of_phrase(&pa), lexicon.set_of_phrase(&pb)) {
        if sa == sb {
            return 1.0;
        }
    }
    let expand = |tokens: &[String]| -> BTreeSet<String> {
        tokens
            .iter()
            .flat_map(|t| lexicon.expand_token(t))
            .map(str::to_owned)
            .collect()
    };
    let ea = expand(&a);
    let eb = expand(&b);
    let inter = ea.intersection(&eb).count();
    let union = ea.union(&eb).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn score_exact(form_label: &str, concept_label: &str) -> f64 {
    let a = normalize_label(form_label);
    if !a.is_empty() && a == normalize_label(concept_label) {
        1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub field_index: usize,
    pub concept_label: String,
    pub score: f64,
}

/// Threshold-scored assignment of form fields to concepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMapping {
    pub assignments: Vec<Assignment>,
    pub threshold: f64,
}

impl FieldMapping {
    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn concept_for(&self, field_index: usize) -> Option<&str> {
        self.assignments
            .iter()
            .find(|a| a.field_index == field_index)
            .map(|a| a.concept_label.as_str())
    }
}

/// Greedy injective assignment over a score matrix.
///
/// Rows are fields, columns are concepts. Pairs are taken by descending
/// score; ties go to the earlier row, then the lexicographically smaller
/// column label. Pairs scoring below `threshold` are never taken. Returns
/// `(row, column, score)` in the order chosen.
pub fn greedy_assignment(scores: &[Vec<f64>], column_labels: &[&str], threshold: f64) -> Vec<(usize, usize, f64)> {
    let mut pairs: Vec<(usize, usize, f64)> = Vec::new();
    for (r, row) in scores.iter().enumerate() {
        for (c, &s) in row.iter().enumerate() {
            if s >= threshold {
                pairs.push((r, c, s));
            }
        }
    }
    pairs.sort_by(|x, y| {
        y.2.total_cmp(&x.2)
            .then(x.0.cmp(&y.0))
            .then_with(|| column_labels[x.1].cmp(column_labels[y.1]))
            .then(x.1.cmp(&y.1))
    });
    let mut used_rows = vec![false; scores.len()];
    let mut used_cols = vec![false; column_labels.len()];
    let mut chosen = Vec::new();
    for (r, c, s) in pairs {
        if !used_rows[r] && !used_cols[c] {
            used_rows[r] = true;
            used_cols[c] = true;
            chosen.push((r, c, s));
        }
    }
    chosen
}

#[derive(Debug, Clone)]
pub struct LabelMatcher {
    pub lexicon: LabelLexicon,
    pub mode: MatcherMode,
    pub threshold: f64,
}

impl LabelMatcher {
    pub fn new(lexicon: LabelLexicon, mode: MatcherMode, threshold: f64) -> Self {
        Self { lexicon, mode, threshold }
    }

    pub fn score(&self, form_label: &str, concept_label: &str) -> f64 {
        match self.mode {
            MatcherMode::Semantic => score_label_match(form_label, concept_label, &self.lexicon),
            MatcherMode::Exact => score_exact(form_label, concept_label),
        }
    }

    /// Best concept for a free-standing label, if any clears the threshold.
    /// Ties go to the earlier concept.
    pub fn best_concept<'c>(&self, label: &str, concepts: &[&'c str]) -> Option<(&'c str, f64)> {
        let mut best: Option<(&str, f64)> = None;
        for &c in concepts {
            let s = self.score(label, c);
            if s >= self.threshold && best.is_none_or(|(_, b)| s.total_cmp(&b) == Ordering::Greater) {
                best = Some((c, s));
            }
        }
        best
    }

    /// Assigns fillable fields of `form` to concepts. Hidden and submit
    /// controls never take part. Unmatched fields stay unmapped.
    pub fn match_form(&self, form: &SearchForm, concepts: &[&str]) -> FieldMapping {
        let fillable: Vec<usize> = form.fillable_indices().collect();
        let scores: Vec<Vec<f64>> = fillable
            .iter()
            .map(|&i| concepts.iter().map(|c| self.score(&form.fields[i].label, c)).collect())
            .collect();
        let mut assignments: Vec<Assignment> = greedy_assignment(&scores, concepts, self.threshold)
            .into_iter()
            .map(|(r, c, score)| Assignment {
                field_index: fillable[r],
                concept_label: concepts[c].to_owned(),
                score,
            })
            .collect();
        assignments.sort_by_key(|a| a.field_index);
        FieldMapping { assignments, threshold: self.threshold }
    }
}

/// Semantic matching with an explicit lexicon and threshold.
pub fn match_form(form: &SearchForm, concepts: &[&str], lexicon: &LabelLexicon, threshold: f64) -> FieldMapping {
    LabelMatcher::new(lexicon.clone(), MatcherMode::Semantic, threshold).match_form(form, concepts)
}
