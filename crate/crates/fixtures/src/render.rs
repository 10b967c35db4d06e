//! HTML for fixture pages. Output is a pure function of its inputs.

use std::fmt::Write;

use crate::dataset::DatasetRow;
use crate::manifest::{Catalog, ColumnSpec, ControlSpec, FieldSpec, HttpMethod, LabelStyle, Layout, Site};

pub fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            c => out.push(c),
        }
    }
    out
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html><head><meta charset=\"utf-8\"><title>{t}</title></head>\n<body>\n\
         <ul class=\"nav\"><li><a href=\"/\">Home</a></li><li><a href=\"/new\">New titles</a></li>\
         <li><a href=\"/offers\">Offers</a></li><li><a href=\"/help\">Help</a></li></ul>\n\
         <h1>{t}</h1>\n{body}\n<p class=\"footer\">Fixture bookshop</p>\n</body></html>\n",
        t = escape(title)
    )
}

pub fn landing(site: &Site) -> String {
    let mut body = String::from("<p>Search our catalogue.</p>\n");
    body.push_str(&form(site));
    page(&format!("{} books", site.spec.name), &body)
}

fn form(site: &Site) -> String {
    let f = &site.spec.form;
    let method = match f.method {
        HttpMethod::Get => "get",
        HttpMethod::Post => "post",
    };
    let mut html = format!("<form action=\"{}\" method=\"{method}\">\n", escape(&f.action));
    let table = f.label_style == LabelStyle::TableCell;
    if table {
        html.push_str("<table class=\"search\">\n");
    }
    for field in site.fields() {
        let style = field.label_style.unwrap_or(f.label_style);
        html.push_str(&field_html(field, style, &site.spec.name));
    }
    if !f.submit.is_empty() {
        let button = format!("<input type=\"submit\" value=\"{}\">", escape(&f.submit));
        if table {
            let _ = writeln!(html, "<tr><td></td><td>{button}</td></tr>");
        } else {
            let _ = writeln!(html, "<p>{button}</p>");
        }
    }
    if table {
        html.push_str("</table>\n");
    }
    html.push_str("</form>\n");
    html
}

fn field_html(field: &FieldSpec, style: LabelStyle, site: &str) -> String {
    let id = format!("{}-{}", escape(site), escape(&field.name));
    let name = escape(&field.name);
    let label = escape(&field.label);
    let control = match field.control {
        ControlSpec::Hidden => return format!("<input type=\"hidden\" name=\"{name}\" value=\"{}\">\n", escape(&field.value)),
        ControlSpec::Text => {
            let placeholder =
                if style == LabelStyle::Placeholder { format!(" placeholder=\"{label}\"") } else { String::new() };
            format!("<input type=\"text\" id=\"{id}\" name=\"{name}\"{placeholder}>")
        }
        ControlSpec::Select => {
            let mut s = format!("<select id=\"{id}\" name=\"{name}\">");
            for o in &field.options {
                let text = if o.is_empty() { "Any" } else { o.as_str() };
                let _ = write!(s, "<option value=\"{}\">{}</option>", escape(o), escape(text));
            }
            s.push_str("</select>");
            s
        }
        ControlSpec::Radio => {
            let mut s = String::new();
            for (k, o) in field.options.iter().enumerate() {
                let checked = if k == 0 { " checked" } else { "" };
                let text = if o.is_empty() { "Any" } else { o.as_str() };
                let _ = write!(s, "<input type=\"radio\" name=\"{name}\" value=\"{}\"{checked}> {} ", escape(o), escape(text));
            }
            s
        }
    };
    if field.control == ControlSpec::Radio {
        return match style {
            LabelStyle::TableCell => format!("<tr><td>{label}</td><td>{control}</td></tr>\n"),
            _ => format!("<fieldset><legend>{label}</legend>{control}</fieldset>\n"),
        };
    }
    match style {
        LabelStyle::LabelFor => format!("<p><label for=\"{id}\">{label}</label> {control}</p>\n"),
        LabelStyle::TableCell => format!("<tr><td>{label}</td><td>{control}</td></tr>\n"),
        LabelStyle::Enclosing => format!("<p><label>{label} {control}</label></p>\n"),
        LabelStyle::Placeholder => format!("<p>{control}</p>\n"),
    }
}

pub fn results(site: &Site, rows: &[&DatasetRow]) -> String {
    let mut body = format!("<p class=\"summary\">Showing {} matching books.</p>\n", rows.len());
    body.push_str(&rows_html(site.spec.layout, &site.spec.columns, rows));
    page(&format!("{} search results", site.spec.name), &body)
}

pub fn no_results(site: &Site) -> String {
    page(&format!("{} search results", site.spec.name), "<p class=\"summary\">No results found.</p>\n<p><a href=\"/\">Try another search</a></p>")
}

pub fn catalog(catalog: &Catalog) -> String {
    let rows: Vec<&DatasetRow> = catalog.dataset.rows.iter().collect();
    page("Catalogue", &rows_html(Layout::Table, &catalog.spec.columns, &rows))
}

pub fn unavailable() -> String {
    page("Service unavailable", "<p>The service is temporarily unavailable. Please retry.</p>")
}

pub fn not_found() -> String {
    page("Missing page", "<p>This page does not exist.</p>")
}

fn cell<'r>(row: &'r DatasetRow, col: &ColumnSpec) -> &'r str {
    row.get(&col.field).unwrap_or("")
}

fn rows_html(layout: Layout, columns: &[ColumnSpec], rows: &[&DatasetRow]) -> String {
    let mut html = String::new();
    match layout {
        Layout::Table => {
            html.push_str("<table class=\"results\">\n<tr>");
            for c in columns {
                let _ = write!(html, "<th>{}</th>", escape(&c.label));
            }
            html.push_str("</tr>\n");
            for r in rows {
                html.push_str("<tr>");
                for c in columns {
                    let _ = write!(html, "<td>{}</td>", escape(cell(r, c)));
                }
                html.push_str("</tr>\n");
            }
            html.push_str("</table>\n");
        }
        Layout::Blocks => {
            html.push_str("<div class=\"results\">\n");
            for r in rows {
                html.push_str("<div class=\"result\">");
                for c in columns {
                    let _ = write!(html, "<span>{}:</span> <span>{}</span> ", escape(&c.label), escape(cell(r, c)));
                }
                html.push_str("</div>\n");
            }
            html.push_str("</div>\n");
        }
        Layout::List => {
            html.push_str("<ul class=\"books\">\n");
            for r in rows {
                html.push_str("<li class=\"book\">");
                for c in columns {
                    let _ = write!(html, "<span class=\"{}\">{}</span> ", escape(&c.label), escape(cell(r, c)));
                }
                html.push_str("</li>\n");
            }
            html.push_str("</ul>\n");
        }
    }
    html
}
