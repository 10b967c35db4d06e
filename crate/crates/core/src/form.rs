//! Search-form detection and field modelling.
//!
//! A page is parsed with an error-tolerant HTML parser; every `<form>` with
//! at least one fillable control becomes a [`SearchForm`]. Each field gets a
//! human label, a control kind and a value domain.

use chrono::{DateTime, Utc};
use ego_tree::NodeRef;
use scraper::{ElementRef, Html, Node, Selector};
use serde::{Deserialize, Serialize};
use std::sync::LazyLock;
use url::Url;

use crate::text::{collapse_whitespace, trim_label};

static FORM: LazyLock<Selector> = LazyLock::new(|| Selector::parse("form").unwrap());
static CONTROLS: LazyLock<Selector> =
    LazyLock::new(|| Selector::parse("input, select, textarea, button").unwrap());
static OPTION: LazyLock<Selector> = LazyLock::new(|| Selector::parse("option").unwrap());
static LABEL: LazyLock<Selector> = LazyLock::new(|| Selector::parse("label").unwrap());

/// Parses and canonicalizes an absolute URL: scheme and host lowercased,
/// default port dropped, fragment removed.
pub fn canonicalize_url(raw: &str) -> Result<Url, url::ParseError> {
    let mut url = Url::parse(raw.trim())?;
    url.set_fragment(None);
    Ok(url)
}

/// A downloaded page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WebPage {
    pub url: String,
    pub body: String,
    pub fetched_at: DateTime<Utc>,
    pub status: u16,
}

impl WebPage {
    /// A 200 page fetched now. The URL is canonicalized when it parses.
    pub fn new(url: &str, body: impl Into<String>) -> Self {
        Self::with_status(url, body, 200)
    }

    pub fn with_status(url: &str, body: impl Into<String>, status: u16) -> Self {
        let url = canonicalize_url(url).map(String::from).unwrap_or_else(|_| url.to_owned());
        Self { url, body: body.into(), fetched_at: Utc::now(), status }
    }

    /// Decodes raw response bytes. A supported charset in the content type
    /// wins; anything else is decoded as UTF-8 with replacement.
    pub fn from_bytes(url: &str, bytes: &[u8], content_type: Option<&str>, status: u16) -> Self {
        let encoding = content_type
            .and_then(charset_param)
            .and_then(|label| encoding_rs::Encoding::for_label(label.as_bytes()))
            .unwrap_or(encoding_rs::UTF_8);
        let (body, _, _) = encoding.decode(bytes);
        Self::with_status(url, body.into_owned(), status)
    }
}

fn charset_param(content_type: &str) -> Option<String> {
    content_type.split(';').skip(1).find_map(|p| {
        let (k, v) = p.split_once('=')?;
        k.trim()
            .eq_ignore_ascii_case("charset")
            .then(|| v.trim().trim_matches('"').to_owned())
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Method::Get => "GET",
            Method::Post => "POST",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Control {
    TextBox,
    SelectList,
    Checkbox,
    Radio,
    Hidden,
    Submit,
}

impl Control {
    pub fn is_fillable(self) -> bool {
        !matches!(self, Control::Hidden | Control::Submit)
    }
}

/// Values a field accepts: the options embedded in the page, or free text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldDomain {
    Finite(Vec<String>),
    Infinite,
}

impl FieldDomain {
    pub fn is_finite(&self) -> bool {
        matches!(self, FieldDomain::Finite(_))
    }

    pub fn values(&self) -> &[String] {
        match self {
            FieldDomain::Finite(v) => v,
            FieldDomain::Infinite => &[],
        }
    }

    fn push_unique(&mut self, value: String) {
        if let FieldDomain::Finite(values) = self {
            if !values.contains(&value) {
                values.push(value);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FormField {
    pub name: String,
    pub label: String,
    pub control: Control,
    pub domain: FieldDomain,
    pub default_value: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FormKind {
    SingleAttribute,
    MultiAttribute,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchForm {
    pub source_url: String,
    pub action_url: String,
    pub method: Method,
    pub fields: Vec<FormField>,
    pub kind: FormKind,
}

impl SearchForm {
    pub fn fillable_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.fields
            .iter()
            .enumerate()
            .filter(|(_, f)| f.control.is_fillable())
            .map(|(i, _)| i)
    }

    pub fn fillable_count(&self) -> usize {
        self.fillable_indices().count()
    }
}

/// Finds search forms on a page. Never fails; see
/// [`detect_forms_with_diagnostics`] for the reasons forms were skipped.
pub fn detect_forms(page: &WebPage) -> Vec<SearchForm> {
    detect_forms_with_diagnostics(page).0
}

pub fn detect_forms_with_diagnostics(page: &WebPage) -> (Vec<SearchForm>, Vec<String>) {
    let doc = Html::parse_document(&page.body);
    let mut diagnostics = Vec::new();
    let base = Url::parse(&page.url).ok();
    if base.is_none() {
        diagnostics.push(format!("page url {:?} is not absolute; actions left unresolved", page.url));
    }
    let mut forms = Vec::new();
    for (n, form_el) in doc.select(&FORM).enumerate() {
        let fields = collect_fields(&doc, form_el);
        let fillable = fields.iter().filter(|f| f.control.is_fillable()).count();
        if fillable == 0 {
            diagnostics.push(format!("form #{n} has no fillable fields; skipped"));
            continue;
        }
        let action_attr = form_el.value().attr("action").map(str::trim).unwrap_or("");
        let action_url = match &base {
            Some(base) if action_attr.is_empty() => base.to_string(),
            Some(base) => match base.join(action_attr) {
                Ok(mut u) => {
                    u.set_fragment(None);
                    u.to_string()
                }
                Err(e) => {
                    diagnostics.push(format!("form #{n}: action {action_attr:?} does not resolve ({e}); using page url"));
                    base.to_string()
                }
            },
            None => page.url.clone(),
        };
        let method = match form_el.value().attr("method") {
            Some(m) if m.trim().eq_ignore_ascii_case("post") => Method::Post,
            _ => Method::Get,
        };
        let kind = if fillable == 1 { FormKind::SingleAttribute } else { FormKind::MultiAttribute };
        forms.push(SearchForm { source_url: page.url.clone(), action_url, method, fields, kind });
    }
    (forms, diagnostics)
}

fn collect_fields(doc: &Html, form_el: ElementRef<'_>) -> Vec<FormField> {
    let mut fields: Vec<FormField> = Vec::new();
    for el in form_el.select(&CONTROLS) {
        let Some(name) = el.value().attr("name").map(str::trim).filter(|n| !n.is_empty()) else {
            continue;
        };
        let Some(control) = control_kind(el) else { continue };
        let value_attr = el.value().attr("value").map(str::to_owned);

        if matches!(control, Control::Radio | Control::Checkbox) {
            let value = value_attr.unwrap_or_else(|| "on".to_owned());
            let checked = el.value().attr("checked").is_some();
            if let Some(existing) = fields.iter_mut().find(|f| f.name == name && f.control == control) {
                existing.domain.push_unique(value.clone());
                if checked && existing.default_value.is_none() {
                    existing.default_value = Some(value);
                }
                continue;
            }
            fields.push(FormField {
                name: name.to_owned(),
                label: group_label(el, name),
                control,
                domain: FieldDomain::Finite(vec![value.clone()]),
                default_value: checked.then_some(value),
            });
            continue;
        }

        let domain = extract_field_domain(el);
        let default_value = match control {
            Control::SelectList => select_default(el),
            Control::TextBox if el.value().name() == "textarea" => {
                Some(el.text().collect::<String>()).filter(|t| !t.is_empty())
            }
            _ => value_attr,
        };
        let label = match control {
            Control::Hidden | Control::Submit => name.to_owned(),
            _ => extract_field_label(doc, el),
        };
        fields.push(FormField { name: name.to_owned(), label, control, domain, default_value });
    }
    fields
}

fn control_kind(el: ElementRef<'_>) -> Option<Control> {
    match el.value().name() {
        "select" => Some(Control::SelectList),
        "textarea" => Some(Control::TextBox),
        "button" => match el.value().attr("type").map(str::to_ascii_lowercase).as_deref() {
            None | Some("submit") => Some(Control::Submit),
            _ => None,
        },
        "input" => {
            let ty = el.value().attr("type").unwrap_or("text").trim().to_ascii_lowercase();
            match ty.as_str() {
                "hidden" => Some(Control::Hidden),
                "submit" | "image" => Some(Control::Submit),
                "radio" => Some(Control::Radio),
                "checkbox" => Some(Control::Checkbox),
                "password" | "file" | "reset" | "button" => None,
                _ => Some(Control::TextBox),
            }
        }
        _ => None,
    }
}

/// The value domain of a single control element. Selects enumerate their
/// options (value attribute, else option text); radios and checkboxes
/// contribute their own value; everything else is free text.
pub fn extract_field_domain(el: ElementRef<'_>) -> FieldDomain {
    match el.value().name() {
        "select" => {
            let mut domain = FieldDomain::Finite(Vec::new());
            for opt in el.select(&OPTION) {
                domain.push_unique(option_value(opt));
            }
            domain
        }
        "input" => match el.value().attr("type").map(str::to_ascii_lowercase).as_deref() {
            Some("radio") | Some("checkbox") => {
                FieldDomain::Finite(vec![el.value().attr("value").unwrap_or("on").to_owned()])
            }
            _ => FieldDomain::Infinite,
        },
        _ => FieldDomain::Infinite,
    }
}

fn option_value(opt: ElementRef<'_>) -> String {
    match opt.value().attr("value") {
        Some(v) => v.to_owned(),
        None => collapse_whitespace(&opt.text().collect::<String>()),
    }
}

fn select_default(el: ElementRef<'_>) -> Option<String> {
    let mut first = None;
    for opt in el.select(&OPTION) {
        if opt.value().attr("selected").is_some() {
            return Some(option_value(opt));
        }
        first.get_or_insert_with(|| option_value(opt));
    }
    first
}

/// Resolves a control's human label. Precedence: a `<label for=id>`, an
/// enclosing `<label>`, the nearest preceding text in the same table cell,
/// row or block, the placeholder attribute, and finally the name.
pub fn extract_field_label(doc: &Html, el: ElementRef<'_>) -> String {
    if let Some(id) = el.value().attr("id").filter(|id| !id.is_empty()) {
        for label in doc.select(&LABEL) {
            if label.value().attr("for") == Some(id) {
                let text = trim_label(&label.text().collect::<String>());
                if !text.is_empty() {
                    return text;
                }
            }
        }
    }
    if let Some(label) = el.ancestors().filter_map(ElementRef::wrap).find(|a| a.value().name() == "label") {
        let text = trim_label(&own_label_text(label));
        if !text.is_empty() {
            return text;
        }
    }
    fallback_label(el)
}

/// Radio and checkbox groups: `<label>` elements name the individual
/// options, so the group label comes from surrounding text.
fn group_label(el: ElementRef<'_>, name: &str) -> String {
    if let Some(legend) = el
        .ancestors()
        .filter_map(ElementRef::wrap)
        .find(|a| a.value().name() == "fieldset")
        .and_then(|fs| fs.children().filter_map(ElementRef::wrap).find(|c| c.value().name() == "legend"))
    {
        let text = trim_label(&legend.text().collect::<String>());
        if !text.is_empty() {
            return text;
        }
    }
    let anchor = el
        .ancestors()
        .filter_map(ElementRef::wrap)
        .find(|a| a.value().name() == "label")
        .unwrap_or(el);
    preceding_text(anchor).unwrap_or_else(|| name.to_owned())
}

fn fallback_label(el: ElementRef<'_>) -> String {
    if let Some(text) = preceding_text(el) {
        return text;
    }
    if let Some(p) = el.value().attr("placeholder").map(trim_label).filter(|p| !p.is_empty()) {
        return p;
    }
    el.value().attr("name").unwrap_or_default().trim().to_owned()
}

/// Text of a label element excluding the text of controls nested in it.
fn own_label_text(label: ElementRef<'_>) -> String {
    let mut out = String::new();
    for node in label.descendants() {
        if let Node::Text(t) = node.value() {
            if !inside_excluded(node, label.id()) {
                out.push_str(t);
                out.push(' ');
            }
        }
    }
    out
}

const BLOCKS: &[&str] = &[
    "p", "div", "li", "dd", "dt", "fieldset", "form", "section", "td", "th", "tr", "table", "body",
];
const EXCLUDED: &[&str] = &["option", "select", "textarea", "button", "script", "style", "datalist"];

fn preceding_text(el: ElementRef<'_>) -> Option<String> {
    let mut containers = Vec::new();
    for anc in el.ancestors().filter_map(ElementRef::wrap) {
        let name = anc.value().name();
        if name == "td" || name == "th" {
            containers.push(anc);
            continue;
        }
        if BLOCKS.contains(&name) {
            containers.push(anc);
            break;
        }
    }
    for container in containers {
        if let Some(text) = last_text_before(container, el) {
            return Some(text);
        }
    }
    None
}

fn last_text_before(container: ElementRef<'_>, target: ElementRef<'_>) -> Option<String> {
    let mut last: Option<String> = None;
    for node in container.descendants() {
        if node.id() == target.id() {
            return last;
        }
        match node.value() {
            Node::Text(t) => {
                if inside_excluded(node, container.id()) {
                    continue;
                }
                let text = trim_label(t);
                if !text.is_empty() {
                    last = Some(text);
                }
            }
            Node::Element(e) if matches!(e.name(), "input" | "select" | "textarea") => {
                if node.ancestors().any(|a| a.id() == target.id()) {
                    continue;
                }
                last = None;
            }
            _ => {}
        }
    }
    None
}

fn inside_excluded(node: NodeRef<'_, Node>, stop: ego_tree::NodeId) -> bool {
    for anc in node.ancestors() {
        if anc.id() == stop {
            return false;
        }
        if let Node::Element(e) = anc.value() {
            if EXCLUDED.contains(&e.name()) {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn page(body: &str) -> WebPage {
        WebPage::new("http://Books.Test:80/shop/index.html#top", body)
    }

    #[test]
    fn canonicalizes_page_url() {
        assert_eq!(page("").url, "http://books.test/shop/index.html");
    }

    #[test]
    fn no_form_yields_nothing() {
        assert!(detect_forms(&page("<html><body><p>hello</p></body></html>")).is_empty());
    }

    #[test]
    fn single_text_box_is_single_attribute() {
        let forms = detect_forms(&page(r#"<form action="search"><input name="q"><input type="submit" value="Go"></form>"#));
        assert_eq!(forms.len(), 1);
        let f = &forms[0];
        assert_eq!(f.kind, FormKind::SingleAttribute);
        assert_eq!(f.method, Method::Get);
        assert_eq!(f.action_url, "http://books.test/shop/search");
        assert_eq!(f.fields[0].label, "q");
        assert_eq!(f.fields[0].domain, FieldDomain::Infinite);
    }

    #[test]
    fn three_labelled_boxes_are_multi_attribute() {
        let html = r#"<form method="POST" action="/adv">
            <label for="t">Title</label><input id="t" name="title">
            <label for="a">Author:</label><input id="a" name="author">
            <label for="p">Publisher</label><input id="p" name="pub">
        </form>"#;
        let f = &detect_forms(&page(html))[0];
        assert_eq!(f.kind, FormKind::MultiAttribute);
        assert_eq!(f.method, Method::Post);
        let labels: Vec<_> = f.fields.iter().map(|x| x.label.as_str()).collect();
        assert_eq!(labels, ["Title", "Author", "Publisher"]);
    }

    #[test]
    fn submit_only_form_is_omitted() {
        let (forms, diags) = detect_forms_with_diagnostics(&page(r#"<form><input type="submit" name="go"></form>"#));
        assert!(forms.is_empty());
        assert_eq!(diags.len(), 1);
    }

    #[test]
    fn missing_action_defaults_to_page() {
        let f = &detect_forms(&page(r#"<form><input name="q"></form>"#))[0];
        assert_eq!(f.action_url, "http://books.test/shop/index.html");
    }

    #[test]
    fn label_for_binding() {
        let f = &detect_forms(&page(r#"<form><label for="a">Written by</label><input id="a" name="auth"></form>"#))[0];
        assert_eq!(f.fields[0].label, "Written by");
    }

    #[test]
    fn enclosing_label() {
        let f = &detect_forms(&page(r#"<form><label>Author: <input name="au"></label></form>"#))[0];
        assert_eq!(f.fields[0].label, "Author");
    }

    #[test]
    fn table_cell_text() {
        let html = r#"<form><table>
            <tr><td>Title</td><td><input name="t"></td></tr>
            <tr><td>Published By</td><td><input name="p"></td></tr>
        </table></form>"#;
        let f = &detect_forms(&page(html))[0];
        assert_eq!(f.fields[0].label, "Title");
        assert_eq!(f.fields[1].label, "Published By");
    }

    #[test]
    fn placeholder_then_name() {
        let html = r#"<form><div><input name="a" placeholder="Author"></div><div><input name="isbn"></div></form>"#;
        let f = &detect_forms(&page(html))[0];
        assert_eq!(f.fields[0].label, "Author");
        assert_eq!(f.fields[1].label, "isbn");
    }

    #[test]
    fn preceding_text_does_not_cross_other_controls() {
        let html = r#"<form><div>Title <input name="t"> <input name="x"></div></form>"#;
        let f = &detect_forms(&page(html))[0];
        assert_eq!(f.fields[0].label, "Title");
        assert_eq!(f.fields[1].label, "x");
    }

    #[test]
    fn select_domain_and_default() {
        let html = r#"<form><label for="b">Binding</label><select id="b" name="bind">
            <option>Any</option><option value="Hardcover">Hard cover</option><option>Paperback</option><option>Any</option>
        </select></form>"#;
        let f = &detect_forms(&page(html))[0];
        let field = &f.fields[0];
        assert_eq!(field.control, Control::SelectList);
        assert_eq!(field.domain, FieldDomain::Finite(vec!["Any".into(), "Hardcover".into(), "Paperback".into()]));
        assert_eq!(field.default_value.as_deref(), Some("Any"));
        assert_eq!(field.label, "Binding");
    }

    #[test]
    fn radio_group_is_one_field() {
        let html = r#"<form><input name="q"><p>Condition
            <label><input type="radio" name="fmt" value="new"> New</label>
            <label><input type="radio" name="fmt" value="used" checked> Used</label></p></form>"#;
        let f = &detect_forms(&page(html))[0];
        assert_eq!(f.fields.len(), 2);
        let radio = &f.fields[1];
        assert_eq!(radio.control, Control::Radio);
        assert_eq!(radio.domain, FieldDomain::Finite(vec!["new".into(), "used".into()]));
        assert_eq!(radio.default_value.as_deref(), Some("used"));
        assert_eq!(radio.label, "Condition");
        assert_eq!(f.kind, FormKind::MultiAttribute);
    }

    #[test]
    fn hidden_and_submit_kept_but_not_counted() {
        let html = r#"<form><input type="hidden" name="src" value="home"><input name="q"><button name="go" value="1">Go</button></form>"#;
        let f = &detect_forms(&page(html))[0];
        assert_eq!(f.fields.len(), 3);
        assert_eq!(f.kind, FormKind::SingleAttribute);
        assert_eq!(f.fields[0].default_value.as_deref(), Some("home"));
        assert_eq!(f.fields[2].control, Control::Submit);
    }

    #[test]
    fn password_forms_have_no_fillable_text_from_password() {
        let f = detect_forms(&page(r#"<form><input type="password" name="pw"></form>"#));
        assert!(f.is_empty());
    }

    #[test]
    fn decodes_declared_charset() {
        let bytes = [b'c', b'a', b'f', 0xE9];
        let p = WebPage::from_bytes("http://x.test/", &bytes, Some("text/html; charset=ISO-8859-1"), 200);
        assert_eq!(p.body, "café");
        let lossy = WebPage::from_bytes("http://x.test/", &bytes, Some("text/html"), 200);
        assert_eq!(lossy.body, "caf\u{FFFD}");
    }

    #[test]
    fn detection_is_deterministic() {
        let html = r#"<form action="/s"><td>Title<input name="t"></td><select name="s"><option>a</option></select></form>"#;
        assert_eq!(detect_forms(&page(html)), detect_forms(&page(html)));
    }
}
