/// Reduces an HTML fragment to plain text.
///
/// `<script>` and `<style>` elements are dropped with their content, every
/// other tag is removed, the five predefined XML entities and numeric
/// character references are decoded, and whitespace runs collapse to a single
/// space. Tags are treated as word boundaries.
pub fn strip_html(input: &str) -> String {
    let mut text = String::with_capacity(input.len());
    let lower = input.to_ascii_lowercase();
    let mut i = 0;
    let bytes = input.as_bytes();
    while i < bytes.len() {
        if bytes[i] == b'<' {
            let rest = &lower[i..];
            let skip_to = ["script", "style"].iter().find_map(|name| {
                let open = format!("<{name}");
                let boundary = rest.as_bytes().get(open.len()).copied();
                if rest.starts_with(&open)
                    && matches!(boundary, Some(b'>' | b' ' | b'\t' | b'\n' | b'\r' | b'/'))
                {
                    let close = format!("</{name}");
                    Some(match rest.find(&close) {
                        Some(pos) => {
                            let after = i + pos;
                            lower[after..].find('>').map_or(bytes.len(), |g| after + g + 1)
                        }
                        None => bytes.len(),
                    })
                } else {
                    None
                }
            });
            i = match skip_to {
                Some(end) => end,
                None => lower[i..].find('>').map_or(bytes.len(), |g| i + g + 1),
            };
            text.push(' ');
            continue;
        }
        let next = input[i..].find('<').map_or(bytes.len(), |p| i + p);
        text.push_str(&input[i..next]);
        i = next;
    }
    collapse_whitespace(&decode_entities(&text))
}

fn decode_entities(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(amp) = rest.find('&') {
        out.push_str(&rest[..amp]);
        rest = &rest[amp..];
        let decoded = rest.find(';').filter(|&semi| semi <= 10).and_then(|semi| {
            let name = &rest[1..semi];
            let c = match name {
                "amp" => Some('&'),
                "lt" => Some('<'),
                "gt" => Some('>'),
                "quot" => Some('"'),
                "apos" => Some('\''),
                _ => {
                    let code = if let Some(hex) =
                        name.strip_prefix("#x").or_else(|| name.strip_prefix("#X"))
                    {
                        u32::from_str_radix(hex, 16).ok()
                    } else {
                        name.strip_prefix('#').and_then(|d| d.parse().ok())
                    };
                    code.and_then(char::from_u32)
                }
            };
            c.map(|c| (c, semi + 1))
        });
        match decoded {
            Some((c, len)) => {
                out.push(c);
                rest = &rest[len..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
