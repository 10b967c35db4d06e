//! String normalization shared by label matching, value dedup and record keys.

use std::sync::LazyLock;

use regex::Regex;

/// Words dropped from labels before matching, unless dropping them would
/// leave nothing.
pub const STOPWORDS: &[&str] = &["the", "a", "an", "of", "by", "in", "for"];

static MARKUP: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"<[^>]*>|&#?[A-Za-z0-9]+;").unwrap());

/// Lowercases, strips punctuation and markup remnants, splits on whitespace
/// and drops stopwords.
///
/// `"Written by"` becomes `["written"]`, `"Title/Subject"` becomes
/// `["title", "subject"]`. A label made only of stopwords keeps them.
pub fn normalize_label(raw: &str) -> Vec<String> {
    let stripped = MARKUP.replace_all(raw, " ");
    let lowered = stripped.to_lowercase();
    let tokens: Vec<String> = lowered
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_owned)
        .collect();
    let kept: Vec<String> = tokens
        .iter()
        .filter(|t| !STOPWORDS.contains(&t.as_str()))
        .cloned()
        .collect();
    if kept.is_empty() {
        tokens
    } else {
        kept
    }
}

/// The normalized label as a single space-joined phrase.
pub fn label_phrase(raw: &str) -> String {
    normalize_label(raw).join(" ")
}

/// Collapses runs of whitespace into single spaces and trims the ends.
pub fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Case-fold plus whitespace collapse. Used to decide whether two task
/// database values are the same value.
pub fn fold_value(s: &str) -> String {
    collapse_whitespace(&s.to_lowercase())
}

/// Case-fold, punctuation strip and whitespace collapse. One half of a
/// record dedup key.
pub fn key_part(s: &str) -> String {
    let cleaned: String = s
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    collapse_whitespace(&cleaned)
}

/// Trims whitespace and trailing punctuation such as `:` or `*` from label
/// text.
pub fn trim_label(s: &str) -> String {
    let collapsed = collapse_whitespace(s);
    collapsed
        .trim_end_matches(|c: char| c.is_ascii_punctuation() && c != ')' || c.is_whitespace())
        .trim()
        .to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_stopwords() {
        assert_eq!(normalize_label("Written by"), vec!["written"]);
        assert_eq!(normalize_label("Published By"), vec!["published"]);
    }

    #[test]
    fn splits_on_slash() {
        assert_eq!(normalize_label("Title/Subject"), vec!["title", "subject"]);
    }

    #[test]
    fn keeps_stopwords_when_nothing_else_remains() {
        assert_eq!(normalize_label("By"), vec!["by"]);
        assert_eq!(normalize_label("of the"), vec!["of", "the"]);
    }

    #[test]
    fn empty_input() {
        assert!(normalize_label("").is_empty());
        assert!(normalize_label("  :: ").is_empty());
    }

    #[test]
    fn strips_markup_remnants() {
        assert_eq!(normalize_label("<b>Author</b>&nbsp;Name:"), vec!["author", "name"]);
    }

    #[test]
    fn trims_label_punctuation() {
        assert_eq!(trim_label("  Title: "), "Title");
        assert_eq!(trim_label("Author *"), "Author");
        assert_eq!(trim_label("Windows 95 (T)"), "Windows 95 (T)");
    }

    #[test]
    fn key_part_strips_punctuation() {
        assert_eq!(key_part("Kolata,  Gina"), "kolata gina");
        assert_eq!(key_part("P.Galvin"), "p galvin");
    }
}
