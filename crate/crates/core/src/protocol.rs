//! Line-delimited JSON wire protocol spoken with external reconstruction
//! algorithms, and its error codes.
//!
//! Finite-dimensional exchange (one object per line, UTF-8):
//!
//! ```text
//! harness → client  {"type":"plan","n":N,"d":d}
//! client  → harness {"type":"points","points":[[x_1…x_d],…]}        (exactly N)
//! harness → client  {"type":"values","values":[v_1,…,v_N]}
//! client  → harness {"type":"model_ready"}
//! harness → client  {"type":"query","points":[[…],…]}                (repeated)
//! client  → harness {"type":"predictions","values":[…]}
//! harness → client  {"type":"end"}
//! ```
//!
//! The operator-level exchange replaces points by grid functions:
//! `{"type":"plan","n":N,"grid":G}`, answered by
//! `{"type":"inputs","grid":G,"functions":[[…G values…],…]}`, and queries
//! `{"type":"query","grid":G,"functions":[…]}`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Protocol error codes attributed to an external process.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtoCode {
    /// A point or value list has the wrong length.
    #[serde(rename = "PROTO_POINTCOUNT")]
    PointCount,
    /// A returned number is NaN or infinite.
    #[serde(rename = "PROTO_NONFINITE")]
    NonFinite,
    /// A line is not valid JSON, has an unexpected type, or a bad shape.
    #[serde(rename = "PROTO_MALFORMED")]
    Malformed,
    /// A point lies outside `[0,1]^d`.
    #[serde(rename = "PROTO_RANGE")]
    Range,
    /// No reply within the configured timeout.
    #[serde(rename = "PROTO_TIMEOUT")]
    Timeout,
    /// The process exited early, or with a nonzero status.
    #[serde(rename = "PROTO_EXIT")]
    Exit,
    /// The process could not be started or written to.
    #[serde(rename = "PROTO_IO")]
    Io,
}

impl ProtoCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtoCode::PointCount => "PROTO_POINTCOUNT",
            ProtoCode::NonFinite => "PROTO_NONFINITE",
            ProtoCode::Malformed => "PROTO_MALFORMED",
            ProtoCode::Range => "PROTO_RANGE",
            ProtoCode::Timeout => "PROTO_TIMEOUT",
            ProtoCode::Exit => "PROTO_EXIT",
            ProtoCode::Io => "PROTO_IO",
        }
    }
}

impl fmt::Display for ProtoCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A protocol violation with its code and a human-readable detail.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[error("{code}: {detail}")]
pub struct ProtocolError {
    pub code: ProtoCode,
    pub detail: String,
}

impl ProtocolError {
    pub fn new(code: ProtoCode, detail: impl Into<String>) -> Self {
        Self {
            code,
            detail: detail.into(),
        }
    }
}

/// Messages sent by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum HarnessMessage {
    Plan {
        n: usize,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        d: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        grid: Option<usize>,
    },
    Values {
        values: Vec<f64>,
    },
    Query {
        #[serde(skip_serializing_if = "Option::is_none", default)]
        points: Option<Vec<Vec<f64>>>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        grid: Option<usize>,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        functions: Option<Vec<Vec<f64>>>,
    },
    End,
}

/// Messages sent by the client.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Points { points: Vec<Vec<f64>> },
    Inputs { grid: usize, functions: Vec<Vec<f64>> },
    ModelReady,
    Predictions { values: Vec<f64> },
}

impl HarnessMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("harness message serializes")
    }
}

impl ClientMessage {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("client message serializes")
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ClientMessage::Points { .. } => "points",
            ClientMessage::Inputs { .. } => "inputs",
            ClientMessage::ModelReady => "model_ready",
            ClientMessage::Predictions { .. } => "predictions",
        }
    }
}

/// Parses one client line, classifying failures.
///
/// Non-finite literals (`NaN`, `Infinity`) and numbers that overflow a
/// double are reported as [`ProtoCode::NonFinite`]; anything else that does
/// not parse is [`ProtoCode::Malformed`].
pub fn parse_client_line(line: &str) -> Result<ClientMessage, ProtocolError> {
    match serde_json::from_str::<ClientMessage>(line) {
        Ok(msg) => Ok(msg),
        Err(e) => {
            if has_nonfinite_token(line) || e.to_string().contains("out of range") {
                Err(ProtocolError::new(
                    ProtoCode::NonFinite,
                    format!("non-finite number in {:?}", truncate(line)),
                ))
            } else {
                Err(ProtocolError::new(
                    ProtoCode::Malformed,
                    format!("{e} in {:?}", truncate(line)),
                ))
            }
        }
    }
}

fn has_nonfinite_token(line: &str) -> bool {
    // Tokens outside string literals only.
    let mut in_str = false;
    let mut escaped = false;
    let mut word = String::new();
    let mut found = false;
    let mut flush = |w: &mut String| {
        if matches!(w.as_str(), "NaN" | "Infinity" | "inf" | "nan") {
            found = true;
        }
        w.clear();
    };
    for ch in line.chars() {
        if in_str {
            match (escaped, ch) {
                (true, _) => escaped = false,
                (false, '\\') => escaped = true,
                (false, '"') => in_str = false,
                _ => {}
            }
            continue;
        }
        if ch == '"' {
            flush(&mut word);
            in_str = true;
        } else if ch.is_ascii_alphabetic() {
            word.push(ch);
        } else {
            flush(&mut word);
        }
    }
    flush(&mut word);
    found
}

fn truncate(line: &str) -> String {
    line.chars().take(120).collect()
}

/// Checks that every number is finite.
pub fn check_finite<'a>(values: impl IntoIterator<Item = &'a f64>, what: &str) -> Result<(), ProtocolError> {
    for (i, v) in values.into_iter().enumerate() {
        if !v.is_finite() {
            return Err(ProtocolError::new(ProtoCode::NonFinite, format!("{what}[{i}] = {v}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn message_grammar() {
        let plan = HarnessMessage::Plan {
            n: 4,
            d: Some(2),
            grid: None,
        };
        assert_eq!(plan.to_line(), r#"{"type":"plan","n":4,"d":2}"#);
        assert_eq!(HarnessMessage::End.to_line(), r#"{"type":"end"}"#);
        let pts = parse_client_line(r#"{"type":"points","points":[[0.5,0.25]]}"#).unwrap();
        assert_eq!(
            pts,
            ClientMessage::Points {
                points: vec![vec![0.5, 0.25]]
            }
        );
        assert_eq!(
            parse_client_line(r#"{"type":"model_ready"}"#).unwrap(),
            ClientMessage::ModelReady
        );
    }

    #[test]
    fn classification_of_bad_lines() {
        let nan = parse_client_line(r#"{"type":"predictions","values":[NaN]}"#).unwrap_err();
        assert_eq!(nan.code, ProtoCode::NonFinite);
        let big = parse_client_line(r#"{"type":"predictions","values":[1e999]}"#).unwrap_err();
        assert_eq!(big.code, ProtoCode::NonFinite);
        let junk = parse_client_line("hello").unwrap_err();
        assert_eq!(junk.code, ProtoCode::Malformed);
        let unknown = parse_client_line(r#"{"type":"Nan"}"#).unwrap_err();
        assert_eq!(unknown.code, ProtoCode::Malformed);
    }
}
