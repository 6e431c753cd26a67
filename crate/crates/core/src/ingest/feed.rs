use serde::Deserialize;

use super::transcript::line_col_offset;
use super::{parse_instant, ParseFailure, RawDocument};

#[derive(Debug, Deserialize)]
struct FeedRecord {
    external_id: String,
    body: String,
    #[serde(default)]
    author: Option<String>,
    #[serde(default)]
    published_at: Option<String>,
    #[serde(default)]
    url: Option<String>,
    #[serde(default)]
    title: Option<String>,
}

fn into_raw(
    record: FeedRecord,
    index: usize,
    source_id: &str,
) -> Result<RawDocument, ParseFailure> {
    let fail = |m: String| ParseFailure::at_record(index, m);
    let body = record.body.trim().to_string();
    if body.is_empty() {
        return Err(fail("empty `body`".into()));
    }
    if record.external_id.is_empty() {
        return Err(fail("empty `external_id`".into()));
    }
    let published_at = match record.published_at.as_deref().map(str::trim) {
        None | Some("") => None,
        Some(s) => Some(parse_instant(s).ok_or_else(|| fail(format!("bad date `{s}`")))?),
    };
    Ok(RawDocument {
        source_id: source_id.to_string(),
        external_id: record.external_id,
        body,
        author_hint: record
            .author
            .map(|a| a.trim().to_string())
            .filter(|a| !a.is_empty()),
        published_at,
        url: record.url.unwrap_or_default(),
        title: record.title.filter(|t| !t.is_empty()),
    })
}

/// Parses the newline-delimited feed format: one JSON object per line with
/// keys `external_id`, `body`, `author`, `published_at`, `url` (and an
/// optional `title`). Blank lines are ignored.
pub fn parse_feed_file(bytes: &[u8], source_id: &str) -> Result<Vec<RawDocument>, ParseFailure> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ParseFailure::at_offset(e.valid_up_to() as u64, "invalid UTF-8"))?;
    let mut docs = Vec::new();
    let mut offset = 0usize;
    let mut index = 0usize;
    for raw in text.split_inclusive('\n') {
        let line = raw.trim();
        if !line.is_empty() {
            let record: FeedRecord = serde_json::from_str(line).map_err(|e| {
                let lead = raw.len() - raw.trim_start().len();
                ParseFailure {
                    offset: Some(offset as u64 + lead as u64 + line_col_offset(line, e.line(), e.column())),
                    record: Some(index),
                    message: e.to_string(),
                }
            })?;
            docs.push(into_raw(record, index, source_id)?);
            index += 1;
        }
        offset += raw.len();
    }
    Ok(docs)
}

/// Parses an `http_json` payload: a JSON array of feed records.
pub fn parse_http_json(bytes: &[u8], source_id: &str) -> Result<Vec<RawDocument>, ParseFailure> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| ParseFailure::at_offset(e.valid_up_to() as u64, "invalid UTF-8"))?;
    let values: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| {
        ParseFailure::at_offset(line_col_offset(text, e.line(), e.column()), e.to_string())
    })?;
    values
        .into_iter()
        .enumerate()
        .map(|(index, v)| {
            let record: FeedRecord = serde_json::from_value(v)
                .map_err(|e| ParseFailure::at_record(index, e.to_string()))?;
            into_raw(record, index, source_id)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_entries() {
        let text = concat!(
            r#"{"external_id":"1","body":"one","author":"A","published_at":"2021-01-01T00:00:00Z","url":"u1"}"#, "\n",
            "\n",
            r#"{"external_id":"2","body":"two","author":null,"url":"u2"}"#, "\n",
            r#"{"external_id":"3","body":"three","published_at":""}"#, "\n",
        );
        let docs = parse_feed_file(text.as_bytes(), "f").unwrap();
        assert_eq!(docs.len(), 3);
        assert_eq!(docs[1].author_hint, None);
        assert_eq!(docs[2].published_at, None);
        assert_eq!(docs[2].url, "");
    }

    #[test]
    fn bad_line_reports_offset_and_record() {
        let text = "{\"external_id\":\"1\",\"body\":\"b\"}\n{\"external_id\": 2,\"body\":\"b\"}\n";
        let err = parse_feed_file(text.as_bytes(), "f").unwrap_err();
        assert_eq!(err.record, Some(1));
        assert!(err.offset.unwrap() > 31);
    }

    #[test]
    fn empty_body_rejected() {
        let text = "{\"external_id\":\"1\",\"body\":\"  \"}\n";
        assert_eq!(parse_feed_file(text.as_bytes(), "f").unwrap_err().record, Some(0));
    }

    #[test]
    fn http_json_array() {
        let text = r#"[{"external_id":"1","body":"x y"},{"external_id":"2","body":"z w"}]"#;
        assert_eq!(parse_http_json(text.as_bytes(), "h").unwrap().len(), 2);
        assert!(parse_http_json(b"{}", "h").is_err());
    }
}
