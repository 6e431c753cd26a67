use serde::{Deserialize, Serialize};

use super::{parse_instant, ParseFailure, RawDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TranscriptFormat {
    /// Blank-line separated blocks, each starting with `SPEAKER: name`,
    /// optionally followed by `DATE:` and `URL:` header lines.
    PlainSections,
    /// A JSON array of `{speaker, text, date?, url?, id?}` objects.
    JsonRecords,
}

/// Splits a transcript into one [`RawDocument`] per speech.
///
/// `origin` names the file the bytes came from; it prefixes the external ids
/// (`origin#index`) and stands in for the URL when a speech has none.
pub fn parse_transcript(
    bytes: &[u8],
    format: TranscriptFormat,
    source_id: &str,
    origin: &str,
) -> Result<Vec<RawDocument>, ParseFailure> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ParseFailure::at_offset(e.valid_up_to() as u64, "invalid UTF-8"))?;
    match format {
        TranscriptFormat::PlainSections => plain_sections(text, source_id, origin),
        TranscriptFormat::JsonRecords => json_records(text, source_id, origin),
    }
}

struct Block<'a> {
    offset: usize,
    lines: Vec<&'a str>,
}

fn blocks(text: &str) -> Vec<Block<'_>> {
    let mut out = Vec::new();
    let mut current: Option<Block<'_>> = None;
    let mut offset = 0;
    for raw in text.split_inclusive('\n') {
        let line = raw.trim_end_matches(['\n', '\r']);
        if line.trim().is_empty() {
            out.extend(current.take());
        } else {
            current
                .get_or_insert_with(|| Block {
                    offset,
                    lines: Vec::new(),
                })
                .lines
                .push(line);
        }
        offset += raw.len();
    }
    out.extend(current);
    out
}

fn header<'a>(line: &'a str, key: &str) -> Option<&'a str> {
    let (k, v) = line.split_once(':')?;
    (k.trim() == key).then(|| v.trim())
}

fn plain_sections(
    text: &str,
    source_id: &str,
    origin: &str,
) -> Result<Vec<RawDocument>, ParseFailure> {
    let mut docs = Vec::new();
    for (index, block) in blocks(text).into_iter().enumerate() {
        let fail = |message: &str| ParseFailure {
            offset: Some(block.offset as u64),
            record: Some(index),
            message: message.to_string(),
        };
        let speaker = header(block.lines[0], "SPEAKER")
            .filter(|s| !s.is_empty())
            .ok_or_else(|| fail("block does not start with a `SPEAKER:` header"))?;
        let mut published_at = None;
        let mut url = None;
        let mut body_start = 1;
        for line in &block.lines[1..] {
            if let Some(d) = header(line, "DATE") {
                published_at =
                    Some(parse_instant(d).ok_or_else(|| fail(&format!("bad date `{d}`")))?);
            } else if let Some(u) = header(line, "URL") {
                url = Some(u.to_string());
            } else {
                break;
            }
            body_start += 1;
        }
        let body = block.lines[body_start..].join("\n").trim().to_string();
        if body.is_empty() {
            return Err(fail("speech has no text"));
        }
        let external_id = format!("{origin}#{index}");
        docs.push(RawDocument {
            source_id: source_id.to_string(),
            url: url.unwrap_or_else(|| external_id.clone()),
            external_id,
            body,
            author_hint: Some(speaker.to_string()),
            published_at,
            title: None,
        });
    }
    Ok(docs)
}

fn json_records(
    text: &str,
    source_id: &str,
    origin: &str,
) -> Result<Vec<RawDocument>, ParseFailure> {
    let value: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| ParseFailure::at_offset(line_col_offset(text, e.line(), e.column()), e.to_string()))?;
    let records = value
        .as_array()
        .ok_or_else(|| ParseFailure::at_offset(0, "expected a JSON array of records"))?;
    let mut docs = Vec::with_capacity(records.len());
    for (index, record) in records.iter().enumerate() {
        let fail = |m: String| ParseFailure::at_record(index, m);
        let obj = record
            .as_object()
            .ok_or_else(|| fail("record is not an object".into()))?;
        let string_field = |name: &str, required: bool| -> Result<Option<String>, ParseFailure> {
            match obj.get(name) {
                None | Some(serde_json::Value::Null) if required => {
                    Err(fail(format!("missing field `{name}`")))
                }
                None | Some(serde_json::Value::Null) => Ok(None),
                Some(serde_json::Value::String(s)) => Ok(Some(s.clone())),
                Some(_) => Err(fail(format!("field `{name}` is not a string"))),
            }
        };
        let speaker = string_field("speaker", true)?.expect("required");
        let body = string_field("text", true)?.expect("required").trim().to_string();
        if speaker.trim().is_empty() {
            return Err(fail("empty `speaker`".into()));
        }
        if body.is_empty() {
            return Err(fail("empty `text`".into()));
        }
        let published_at = match string_field("date", false)? {
            Some(d) => Some(parse_instant(&d).ok_or_else(|| fail(format!("bad date `{d}`")))?),
            None => None,
        };
        let external_id = match string_field("id", false)? {
            Some(id) => id,
            None => format!("{origin}#{index}"),
        };
        docs.push(RawDocument {
            source_id: source_id.to_string(),
            url: string_field("url", false)?.unwrap_or_else(|| external_id.clone()),
            external_id,
            body,
            author_hint: Some(speaker.trim().to_string()),
            published_at,
            title: None,
        });
    }
    Ok(docs)
}

/// Byte offset of a 1-based line / column position reported by serde_json.
pub(super) fn line_col_offset(text: &str, line: usize, column: usize) -> u64 {
    let start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (start + column.saturating_sub(1)).min(text.len()) as u64
}
