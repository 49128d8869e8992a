//! Prompt templates.
//!
//! A template is plain text with placeholders `{atomic}`, `{complex}`,
//! `{sensor-location}` and `{color}`. Text inside `[...]` is an optional group:
//! it is dropped when any placeholder inside it has no value. Groups do not
//! nest; braces and brackets cannot appear literally.

use std::collections::BTreeMap;

use super::manifest::ExplanationManifest;
use crate::error::{Error, Result};

pub const DEFAULT_TEMPLATE: &str =
    "[Someone is {atomic}, ]complex activity \"{complex}\"[; highlight the {sensor-location} sensor in {color}]";
pub const DEFAULT_COLOR: &str = "yellow";

const PLACEHOLDERS: [&str; 4] = ["atomic", "complex", "sensor-location", "color"];

#[derive(Debug, Clone, PartialEq)]
enum Piece {
    Text(String),
    Slot(String),
    Group(Vec<Piece>),
}

fn parse(template: &str) -> Result<Vec<Piece>> {
    let err = |m: String| Error::Template(m);
    let mut stack: Vec<Vec<Piece>> = vec![Vec::new()];
    let mut text = String::new();
    let mut chars = template.char_indices();
    while let Some((at, c)) = chars.next() {
        match c {
            '{' => {
                let mut name = String::new();
                loop {
                    match chars.next() {
                        Some((_, '}')) => break,
                        Some((_, ch)) if ch != '{' && ch != '[' && ch != ']' => name.push(ch),
                        _ => return Err(err(format!("unterminated placeholder at byte {at}"))),
                    }
                }
                if !PLACEHOLDERS.contains(&name.as_str()) {
                    return Err(err(format!("unknown placeholder `{{{name}}}`")));
                }
                let top = stack.last_mut().unwrap();
                if !text.is_empty() {
                    top.push(Piece::Text(std::mem::take(&mut text)));
                }
                top.push(Piece::Slot(name));
            }
            '[' => {
                if stack.len() > 1 {
                    return Err(err(format!("nested optional group at byte {at}")));
                }
                if !text.is_empty() {
                    stack[0].push(Piece::Text(std::mem::take(&mut text)));
                }
                stack.push(Vec::new());
            }
            ']' => {
                if stack.len() == 1 {
                    return Err(err(format!("unmatched `]` at byte {at}")));
                }
                let mut group = stack.pop().unwrap();
                if !text.is_empty() {
                    group.push(Piece::Text(std::mem::take(&mut text)));
                }
                stack[0].push(Piece::Group(group));
            }
            '}' => return Err(err(format!("unmatched `}}` at byte {at}"))),
            _ => text.push(c),
        }
    }
    if stack.len() > 1 {
        return Err(err("unterminated optional group".into()));
    }
    let mut pieces = stack.pop().unwrap();
    if !text.is_empty() {
        pieces.push(Piece::Text(text));
    }
    Ok(pieces)
}

/// Checks a template without rendering it.
pub fn validate_template(template: &str) -> Result<()> {
    parse(template).map(|_| ())
}

fn render_pieces(pieces: &[Piece], values: &BTreeMap<&str, Option<String>>, out: &mut String) {
    for piece in pieces {
        match piece {
            Piece::Text(t) => out.push_str(t),
            Piece::Slot(name) => {
                if let Some(Some(v)) = values.get(name.as_str()) {
                    out.push_str(v);
                }
            }
            Piece::Group(inner) => {
                let complete = inner.iter().all(|p| match p {
                    Piece::Slot(name) => matches!(values.get(name.as_str()), Some(Some(_))),
                    _ => true,
                });
                if complete {
                    render_pieces(inner, values, out);
                }
            }
        }
    }
}

/// Substitutes `values` into `template`. Missing values render as empty text
/// outside groups and drop the enclosing group inside one.
pub fn render_template(template: &str, values: &BTreeMap<&str, Option<String>>) -> Result<String> {
    let pieces = parse(template.trim_end_matches(['\n', '\r']))?;
    let mut out = String::new();
    render_pieces(&pieces, values, &mut out);
    Ok(out)
}

fn join(items: Vec<&str>) -> Option<String> {
    if items.is_empty() {
        None
    } else {
        Some(items.join(" and "))
    }
}

/// Renders the prompt for a manifest. Atomic activities and highlighted
/// sensor locations are joined with " and ", in manifest order.
pub fn render_prompt(manifest: &ExplanationManifest, template: &str) -> Result<String> {
    let mut values = BTreeMap::new();
    values.insert("atomic", join(manifest.atomic.iter().map(|a| a.name.as_str()).collect()));
    values.insert("complex", Some(manifest.complex.name.clone()));
    let locations = manifest.sensors.iter().filter(|s| s.highlight).map(|s| s.location.as_str()).collect();
    values.insert("sensor-location", join(locations));
    values.insert("color", Some(manifest.color.clone()));
    render_template(template, &values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn values(atomic: Option<&str>, location: Option<&str>) -> BTreeMap<&'static str, Option<String>> {
        BTreeMap::from([
            ("atomic", atomic.map(str::to_string)),
            ("complex", Some("making coffee".to_string())),
            ("sensor-location", location.map(str::to_string)),
            ("color", Some(DEFAULT_COLOR.to_string())),
        ])
    }

    #[test]
    fn default_template_sentence() {
        let s = render_template(DEFAULT_TEMPLATE, &values(Some("opening the door"), None)).unwrap();
        assert_eq!(s, "Someone is opening the door, complex activity \"making coffee\"");
        let s = render_template(DEFAULT_TEMPLATE, &values(None, Some("left foot"))).unwrap();
        assert_eq!(s, "complex activity \"making coffee\"; highlight the left foot sensor in yellow");
    }

    #[test]
    fn template_errors() {
        for bad in ["{speed}", "[a [b]]", "a]", "{atomic", "[open", "x}"] {
            assert!(matches!(validate_template(bad), Err(Error::Template(_))), "{bad}");
        }
        assert!(validate_template("plain text").is_ok());
    }
}
