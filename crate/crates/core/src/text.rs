//! Small text utilities shared by the reply parsers.

use serde_json::Value;

/// Returns the body of the first fenced code block, or the input unchanged
/// when it contains no fence.
pub fn strip_code_fences(text: &str) -> String {
    let Some(open) = text.find("```") else {
        return text.to_string();
    };
    let after_open = &text[open + 3..];
    // Skip the info string (`json`, `python`, ...) up to the end of the line.
    let body_start = match after_open.find('\n') {
        Some(nl) => nl + 1,
        None => return after_open.trim_end_matches('`').to_string(),
    };
    let body = &after_open[body_start..];
    match body.find("```") {
        Some(close) => body[..close].trim_end_matches(['\n', '\r']).to_string(),
        None => body.trim_end_matches(['\n', '\r']).to_string(),
    }
}

/// Drops leading lines that read like natural-language preamble
/// ("Here is the updated code:") rather than code.
pub fn trim_leading_prose(text: &str) -> String {
    let mut lines = text.lines().peekable();
    let mut skipped = 0usize;
    while let Some(line) = lines.peek() {
        let t = line.trim();
        if t.is_empty() || looks_like_prose(t) {
            skipped += line.len() + 1;
            lines.next();
        } else {
            break;
        }
    }
    if skipped >= text.len() {
        String::new()
    } else {
        text[skipped..].to_string()
    }
}

fn looks_like_prose(line: &str) -> bool {
    let first = match line.chars().next() {
        Some(c) => c,
        None => return false,
    };
    if !first.is_uppercase() {
        return false;
    }
    if line.split_whitespace().count() < 3 {
        return false;
    }
    const CODE_CHARS: &[char] = &['=', '(', ')', '{', '}', '[', ']', '"', '#', ';', '<', '>', '`'];
    if line.contains(CODE_CHARS) {
        return false;
    }
    // Colons are fine only as the trailing "...code:" of a lead-in sentence.
    let inner = line.trim_end_matches([':', '.', '!']);
    !inner.contains(':')
}

/// Extracts the first JSON value (array or object) embedded in a model reply.
pub fn extract_json(text: &str) -> Option<Value> {
    let unfenced = strip_code_fences(text);
    for candidate in [unfenced.as_str(), text] {
        if let Ok(v) = serde_json::from_str::<Value>(candidate.trim()) {
            if v.is_array() || v.is_object() {
                return Some(v);
            }
        }
        for (idx, ch) in candidate.char_indices() {
            if ch != '[' && ch != '{' {
                continue;
            }
            let mut stream = serde_json::Deserializer::from_str(&candidate[idx..]).into_iter::<Value>();
            if let Some(Ok(v)) = stream.next() {
                return Some(v);
            }
        }
    }
    None
}

/// First decimal number in `text` (`0.92`, `-1`, `.5`), if any.
pub fn first_number(text: &str) -> Option<f64> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let starts_number = c.is_ascii_digit() || (c == b'.' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit));
        if starts_number {
            let negative = i > 0 && bytes[i - 1] == b'-';
            let start = i;
            let mut seen_dot = false;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || (bytes[i] == b'.' && !seen_dot)) {
                if bytes[i] == b'.' {
                    seen_dot = true;
                }
                i += 1;
            }
            let literal = text[start..i].trim_end_matches('.');
            if let Ok(v) = literal.parse::<f64>() {
                return Some(if negative { -v } else { v });
            }
        }
        i += 1;
    }
    None
}

/// First run of ASCII digits in `text` together with the byte offset just
/// past it. Digits that belong to a decimal (`7.5`) are still returned as
/// the integer part.
pub fn first_integer(text: &str) -> Option<(i64, usize)> {
    let bytes = text.as_bytes();
    let start = bytes.iter().position(u8::is_ascii_digit)?;
    let end = bytes[start..].iter().position(|b| !b.is_ascii_digit()).map_or(bytes.len(), |p| start + p);
    text[start..end].parse().ok().map(|v| (v, end))
}

/// Truncates to at most `max_chars` characters, appending an ellipsis.
pub fn truncate_chars(text: &str, max_chars: usize) -> String {
    if text.chars().count() <= max_chars {
        return text.to_string();
    }
    let mut out: String = text.chars().take(max_chars).collect();
    out.push('…');
    out
}
