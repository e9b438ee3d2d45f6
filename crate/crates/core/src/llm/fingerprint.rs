use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{GenerationConfig, PromptRequest};

/// SHA-256 over the canonical form of a request and its sampling config.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Fingerprint(String);

impl Fingerprint {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn from_hex(hex: impl Into<String>) -> Self {
        Self(hex.into())
    }
}

impl fmt::Display for Fingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Serializes `value` with object keys sorted at every level and no
/// insignificant whitespace. String contents are kept byte-for-byte.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push('{');
            for (i, key) in keys.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(key.clone()).to_string());
                out.push(':');
                write_canonical(&map[key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        other => out.push_str(&other.to_string()),
    }
}

pub fn fingerprint(request: &PromptRequest, config: &GenerationConfig) -> Fingerprint {
    let doc = json!({
        "request": request,
        "config": config,
    });
    let digest = Sha256::digest(canonical_json(&doc).as_bytes());
    Fingerprint(hex::encode(digest))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::Message;

    fn request() -> PromptRequest {
        PromptRequest::completion("sys", vec![Message::user("  keep   spacing\n")])
            .with_meta("task", "goals")
            .with_meta("dataset", "cars")
    }

    #[test]
    fn identical_requests_hash_identically() {
        let cfg = GenerationConfig::default();
        assert_eq!(fingerprint(&request(), &cfg), fingerprint(&request(), &cfg));
        assert_eq!(fingerprint(&request(), &cfg).as_str().len(), 64);
    }

    #[test]
    fn temperature_is_part_of_identity() {
        let a = GenerationConfig::default();
        let b = GenerationConfig::default().with_temperature(0.7);
        assert_ne!(fingerprint(&request(), &a), fingerprint(&request(), &b));
    }

    #[test]
    fn metadata_order_does_not_matter() {
        let reordered = PromptRequest::completion("sys", vec![Message::user("  keep   spacing\n")])
            .with_meta("dataset", "cars")
            .with_meta("task", "goals");
        let cfg = GenerationConfig::default();
        assert_eq!(fingerprint(&request(), &cfg), fingerprint(&reordered, &cfg));

        // Oracle: hash of a document whose keys were sorted independently.
        let sorted_meta: std::collections::BTreeMap<_, _> = reordered.metadata.iter().collect();
        let oracle_doc = format!(
            "{{\"config\":{{\"max_tokens\":1024,\"model_id\":\"gpt-3.5-turbo\",\"n_candidates\":1,\"seed\":null,\"temperature\":0.0}},\"request\":{{\"messages\":[{{\"content\":\"  keep   spacing\\n\",\"role\":\"user\"}}],\"metadata\":{},\"mode\":\"completion\",\"system\":\"sys\"}}}}",
            serde_json::to_string(&sorted_meta).unwrap()
        );
        let expected = hex::encode(Sha256::digest(oracle_doc.as_bytes()));
        assert_eq!(fingerprint(&reordered, &cfg).as_str(), expected);
    }

    #[test]
    fn message_whitespace_is_significant() {
        let cfg = GenerationConfig::default();
        let other = PromptRequest::completion("sys", vec![Message::user(" keep spacing\n")])
            .with_meta("task", "goals")
            .with_meta("dataset", "cars");
        assert_ne!(fingerprint(&request(), &cfg), fingerprint(&other, &cfg));
    }
}
