use quick_xml::errors::IllFormedError;
use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use sha2::{Digest, Sha256};

use super::{parse_instant, strip_html, ParseFailure, RawDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Title,
    Link,
    Guid,
    Description,
    Content,
    Date,
    Author,
}

#[derive(Debug, Default)]
struct Item {
    title: String,
    link: String,
    guid: String,
    description: String,
    content: String,
    date: Option<String>,
    author: String,
}

impl Item {
    fn slot(&mut self, field: Field) -> &mut String {
        match field {
            Field::Title => &mut self.title,
            Field::Link => &mut self.link,
            Field::Guid => &mut self.guid,
            Field::Description => &mut self.description,
            Field::Content => &mut self.content,
            Field::Date => self.date.get_or_insert_with(String::new),
            Field::Author => &mut self.author,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Dialect {
    Rss,
    Atom,
}

fn field_for(dialect: Dialect, name: &[u8]) -> Option<Field> {
    match (dialect, name) {
        (_, b"title") => Some(Field::Title),
        (Dialect::Rss, b"link") => Some(Field::Link),
        (Dialect::Rss, b"guid") | (Dialect::Atom, b"id") => Some(Field::Guid),
        (Dialect::Rss, b"description") | (Dialect::Atom, b"summary") => Some(Field::Description),
        (Dialect::Rss, b"content:encoded") | (Dialect::Atom, b"content") => Some(Field::Content),
        (Dialect::Rss, b"pubDate") | (Dialect::Atom, b"updated") => Some(Field::Date),
        (Dialect::Rss, b"author") | (Dialect::Rss, b"dc:creator") => Some(Field::Author),
        _ => None,
    }
}

fn atom_link(e: &BytesStart<'_>) -> Result<Option<String>, quick_xml::Error> {
    let rel = match e.try_get_attribute("rel")? {
        Some(a) => a.unescape_value()?.into_owned(),
        None => "alternate".to_string(),
    };
    if rel != "alternate" {
        return Ok(None);
    }
    Ok(match e.try_get_attribute("href")? {
        Some(a) => Some(a.unescape_value()?.into_owned()),
        None => None,
    })
}

/// Parses an RSS 2.0 or Atom document into one [`RawDocument`] per item or
/// entry, in document order.
///
/// The body is the HTML-stripped description (`summary`) followed by the
/// content (`content:encoded` / `content`), falling back to the title when
/// both are empty. `published_at` comes from `pubDate` or Atom `updated`. The
/// external id is the guid (`id`), else the link, else a hash of the item.
/// Any malformed input yields a [`ParseFailure`] and no documents.
pub fn parse_rss(bytes: &[u8], source_id: &str) -> Result<Vec<RawDocument>, ParseFailure> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ParseFailure::at_offset(e.valid_up_to() as u64, "invalid UTF-8"))?;
    let mut reader = Reader::from_str(text);
    let xml_err = |reader: &Reader<&[u8]>, e: quick_xml::Error| {
        // Report mismatched end tags at the name, after `</`.
        let shift = match e {
            quick_xml::Error::IllFormed(IllFormedError::MismatchedEndTag { .. }) => 2,
            _ => 0,
        };
        ParseFailure::at_offset(reader.error_position() + shift, format!("malformed XML: {e}"))
    };

    let mut dialect: Option<Dialect> = None;
    let mut depth = 0usize;
    let mut item_depth: Option<usize> = None;
    let mut current: Option<Item> = None;
    let mut field: Option<(Field, usize)> = None;
    let mut in_atom_author = false;
    let mut items: Vec<Item> = Vec::new();
    let mut saw_root = false;

    loop {
        let before = reader.buffer_position();
        let event = match reader.read_event() {
            Ok(ev) => ev,
            Err(e) => return Err(xml_err(&reader, e)),
        };
        match event {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let is_empty = matches!(event, Event::Empty(_));
                let qname = e.name();
                let name = qname.as_ref();
                if depth == 0 {
                    if saw_root {
                        return Err(ParseFailure::at_offset(
                            before,
                            "content after the root element",
                        ));
                    }
                    saw_root = true;
                    dialect = match name {
                        b"rss" | b"rdf:RDF" => Some(Dialect::Rss),
                        b"feed" => Some(Dialect::Atom),
                        _ => {
                            return Err(ParseFailure::at_offset(
                                0,
                                format!(
                                    "root element <{}> is neither RSS nor Atom",
                                    String::from_utf8_lossy(name)
                                ),
                            ))
                        }
                    };
                }
                let d = dialect.expect("root seen");
                let is_item = match d {
                    Dialect::Rss => name == b"item",
                    Dialect::Atom => name == b"entry",
                };
                if item_depth.is_none() && is_item {
                    item_depth = Some(depth);
                    current = Some(Item::default());
                } else if let (Some(id), Some(item)) = (item_depth, current.as_mut()) {
                    if depth == id + 1 {
                        if d == Dialect::Atom && name == b"link" {
                            if item.link.is_empty() {
                                if let Some(href) = atom_link(e).map_err(|e| xml_err(&reader, e))? {
                                    item.link = href;
                                }
                            }
                        } else if d == Dialect::Atom && name == b"author" {
                            in_atom_author = !is_empty;
                        } else if let Some(f) = field_for(d, name) {
                            item.slot(f);
                            if !is_empty {
                                field = Some((f, depth));
                            }
                        }
                    } else if in_atom_author && depth == id + 2 && name == b"name" && !is_empty {
                        field = Some((Field::Author, depth));
                    }
                }
                if !is_empty {
                    depth += 1;
                }
            }
            Event::End(_) => {
                depth -= 1;
                if field.is_some_and(|(_, d)| d == depth) {
                    field = None;
                }
                if let Some(id) = item_depth {
                    if depth == id + 1 {
                        in_atom_author = false;
                    }
                    if depth == id {
                        items.push(current.take().expect("open item"));
                        item_depth = None;
                    }
                }
            }
            Event::Text(t) => {
                let raw = std::str::from_utf8(&t).expect("input is UTF-8");
                check_references(raw, bytes.len() - before as usize)
                    .map_err(|(at, m)| ParseFailure::at_offset(before + at as u64, m))?;
                if depth == 0 {
                    if let Some(at) = raw.find(|c: char| !c.is_whitespace()) {
                        let m = if saw_root {
                            "content after the root element"
                        } else {
                            "text before the root element"
                        };
                        return Err(ParseFailure::at_offset(before + at as u64, m));
                    }
                }
                if let (Some((f, _)), Some(item)) = (field, current.as_mut()) {
                    let s = t.unescape().map_err(|e| xml_err(&reader, e))?;
                    item.slot(f).push_str(&s);
                }
            }
            Event::CData(c) => {
                if let (Some((f, _)), Some(item)) = (field, current.as_mut()) {
                    let raw = c.into_inner();
                    item.slot(f).push_str(&String::from_utf8_lossy(&raw));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    if depth > 0 {
        return Err(ParseFailure::at_offset(
            bytes.len() as u64,
            "document ends inside an open element",
        ));
    }
    if !saw_root {
        return Err(ParseFailure::at_offset(bytes.len() as u64, "no root element"));
    }

    items
        .into_iter()
        .enumerate()
        .map(|(index, item)| into_raw(index, item, source_id))
        .collect()
}

fn is_name_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || matches!(c, b'_' | b':' | b'.' | b'-') || c >= 0x80
}

/// Checks entity and character references in raw text. On failure returns
/// the offset of the first byte that cannot be accepted: the `&` itself for
/// an undefined entity or one cut off by the end of input, else the first
/// character that cannot continue the reference.
fn check_references(raw: &str, remaining: usize) -> Result<(), (usize, &'static str)> {
    let b = raw.as_bytes();
    let mut i = 0;
    while let Some(p) = raw[i..].find('&') {
        let amp = i + p;
        let mut j = amp + 1;
        let (valid, named): (fn(u8) -> bool, bool) = if b.get(j) == Some(&b'#') {
            j += 1;
            if b.get(j) == Some(&b'x') {
                j += 1;
                (|c: u8| c.is_ascii_hexdigit(), false)
            } else {
                (|c: u8| c.is_ascii_digit(), false)
            }
        } else {
            (is_name_char, true)
        };
        let start = j;
        while j < b.len() && valid(b[j]) {
            j += 1;
        }
        if j == b.len() {
            if j == remaining {
                return Err((amp, "reference cut off by end of input"));
            }
            return Err((j, "unterminated reference"));
        }
        if b[j] != b';' || j == start || (named && b[start].is_ascii_digit()) {
            let at = if j == start || b[j] != b';' { j } else { start };
            return Err((at, "malformed reference"));
        }
        if named {
            let name = &raw[start..j];
            if !matches!(name, "amp" | "lt" | "gt" | "quot" | "apos") {
                return Err((amp, "undefined entity"));
            }
        } else {
            let digits = &raw[start..j];
            let radix = if b[amp + 2] == b'x' { 16 } else { 10 };
            let ok = u32::from_str_radix(digits, radix)
                .ok()
                .and_then(char::from_u32)
                .is_some_and(|c| c != '\0');
            if !ok {
                return Err((amp, "reference to invalid character"));
            }
        }
        i = j + 1;
    }
    Ok(())
}

fn into_raw(index: usize, item: Item, source_id: &str) -> Result<RawDocument, ParseFailure> {
    let title = strip_html(&item.title);
    let mut body = strip_html(&format!("{} {}", item.description, item.content));
    if body.is_empty() {
        body = title.clone();
    }
    if body.is_empty() {
        return Err(ParseFailure::at_record(index, "item has no text"));
    }
    let published_at = match item.date.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(
            parse_instant(s)
                .ok_or_else(|| ParseFailure::at_record(index, format!("bad date `{s}`")))?,
        ),
    };
    let link = item.link.trim().to_string();
    let guid = item.guid.trim();
    let external_id = if !guid.is_empty() {
        guid.to_string()
    } else if !link.is_empty() {
        link.clone()
    } else {
        let mut h = Sha256::new();
        h.update(title.as_bytes());
        h.update([0x1f]);
        h.update(body.as_bytes());
        format!("sha256:{}", hex::encode(h.finalize()))
    };
    let author = item.author.trim();
    Ok(RawDocument {
        source_id: source_id.to_string(),
        external_id,
        body,
        author_hint: (!author.is_empty()).then(|| author.to_string()),
        published_at,
        url: link,
        title: (!title.is_empty()).then_some(title),
    })
}
