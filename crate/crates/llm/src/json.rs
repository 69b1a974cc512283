use serde_json::Value;

/// Strips a surrounding markdown code fence, with or without a language tag.
pub(crate) fn strip_fences(text: &str) -> &str {
    let t = text.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let body = match rest.find('\n') {
        Some(nl) => &rest[nl + 1..],
        None => rest,
    };
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

pub(crate) fn parse_lenient(text: &str) -> Result<Value, serde_json::Error> {
    serde_json::from_str(strip_fences(text))
}
