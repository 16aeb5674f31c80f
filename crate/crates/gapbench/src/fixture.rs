//! A reference external client and the conformance vectors it produces.
//!
//! `echo-zero` follows the protocol faithfully and always predicts zero. The
//! other modes break it in one documented way each.

use std::io::{BufRead, Write};

use gapbench_core::points::balanced_midpoint_grid;
use gapbench_core::protocol::{ClientMessage, HarnessMessage};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FixtureMode {
    /// Well-behaved: grid points (or zero functions), zero predictions.
    EchoZero,
    /// Predictions contain a NaN literal (`PROTO_NONFINITE`).
    Nan,
    /// One point or function fewer than requested (`PROTO_POINTCOUNT`).
    Short,
    /// Answers the plan with a line that is not JSON (`PROTO_MALFORMED`).
    Garbage,
}

/// Protocol state of the fixture client.
#[derive(Debug, Clone)]
pub struct FixtureClient {
    mode: FixtureMode,
}

impl FixtureClient {
    pub fn new(mode: FixtureMode) -> Self {
        Self { mode }
    }

    /// The reply lines to one harness line; `None` after `end`.
    pub fn respond(&mut self, line: &str) -> Option<Vec<String>> {
        let msg: HarnessMessage = match serde_json::from_str(line) {
            Ok(m) => m,
            Err(_) => return Some(vec!["{\"type\":\"error\"}".into()]),
        };
        let short = usize::from(self.mode == FixtureMode::Short);
        let reply = match msg {
            HarnessMessage::Plan { n, d, grid } => {
                if self.mode == FixtureMode::Garbage {
                    return Some(vec!["this is not json".into()]);
                }
                let count = n.saturating_sub(short);
                match (grid, d) {
                    (Some(g), _) => ClientMessage::Inputs {
                        grid: g,
                        functions: vec![vec![0.0; g]; count],
                    }
                    .to_line(),
                    (None, Some(d)) => ClientMessage::Points {
                        points: balanced_midpoint_grid(n, d).to_rows().into_iter().take(count).collect(),
                    }
                    .to_line(),
                    (None, None) => "{\"type\":\"error\"}".into(),
                }
            }
            HarnessMessage::Values { .. } => ClientMessage::ModelReady.to_line(),
            HarnessMessage::Query { points, functions, .. } => {
                let k = points.map_or(0, |p| p.len()) + functions.map_or(0, |f| f.len());
                if self.mode == FixtureMode::Nan && k > 0 {
                    let mut vals = vec!["0".to_string(); k];
                    vals[0] = "NaN".into();
                    format!("{{\"type\":\"predictions\",\"values\":[{}]}}", vals.join(","))
                } else {
                    ClientMessage::Predictions { values: vec![0.0; k] }.to_line()
                }
            }
            HarnessMessage::End => return None,
        };
        Some(vec![reply])
    }
}

/// Serves the protocol on the given streams until `end` or end of input.
pub fn serve(mode: FixtureMode, input: impl BufRead, mut output: impl Write) -> std::io::Result<()> {
    let mut client = FixtureClient::new(mode);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match client.respond(&line) {
            Some(replies) => {
                for r in replies {
                    writeln!(output, "{r}")?;
                }
                output.flush()?;
            }
            None => break,
        }
    }
    Ok(())
}

/// One line of a recorded exchange.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VectorLine {
    pub exchange: &'static str,
    pub from: &'static str,
    pub line: String,
}

fn transcript(exchange: &'static str, mode: FixtureMode, script: &[HarnessMessage]) -> Vec<VectorLine> {
    let mut client = FixtureClient::new(mode);
    let mut out = Vec::new();
    for msg in script {
        let line = msg.to_line();
        out.push(VectorLine {
            exchange,
            from: "harness",
            line: line.clone(),
        });
        if let Some(replies) = client.respond(&line) {
            out.extend(replies.into_iter().map(|line| VectorLine {
                exchange,
                from: "client",
                line,
            }));
        }
    }
    out
}

/// Reference exchanges of the `echo-zero` client and the three faulty modes.
pub fn conformance_vectors() -> Vec<VectorLine> {
    let finite = [
        HarnessMessage::Plan {
            n: 4,
            d: Some(2),
            grid: None,
        },
        HarnessMessage::Values {
            values: vec![0.0, 0.25, -0.5, 1.0],
        },
        HarnessMessage::Query {
            points: Some(vec![vec![0.1, 0.2], vec![0.9, 0.5]]),
            grid: None,
            functions: None,
        },
        HarnessMessage::End,
    ];
    let operator = [
        HarnessMessage::Plan {
            n: 2,
            d: None,
            grid: Some(4),
        },
        HarnessMessage::Values {
            values: vec![0.5, -0.5],
        },
        HarnessMessage::Query {
            points: None,
            grid: Some(4),
            functions: Some(vec![vec![1.0, 0.5, 0.0, -0.5]]),
        },
        HarnessMessage::End,
    ];
    let mut v = transcript("finite/echo-zero", FixtureMode::EchoZero, &finite);
    v.extend(transcript("operator/echo-zero", FixtureMode::EchoZero, &operator));
    v.extend(transcript("finite/short", FixtureMode::Short, &finite[..1]));
    v.extend(transcript("finite/nan", FixtureMode::Nan, &finite[..3]));
    v.extend(transcript("finite/garbage", FixtureMode::Garbage, &finite[..1]));
    v
}

/// The vectors as JSON lines.
pub fn conformance_jsonl() -> String {
    conformance_vectors()
        .iter()
        .map(|v| serde_json::to_string(v).expect("vectors serialize") + "\n")
        .collect()
}

#[cfg(test)]
mod tests {
    use gapbench_core::protocol::{parse_client_line, ProtoCode};

    use super::*;

    fn client_lines(exchange: &str) -> Vec<String> {
        conformance_vectors()
            .into_iter()
            .filter(|v| v.exchange == exchange && v.from == "client")
            .map(|v| v.line)
            .collect()
    }

    #[test]
    fn echo_zero_is_well_formed() {
        let lines = client_lines("finite/echo-zero");
        assert_eq!(lines.len(), 3);
        let ClientMessage::Points { points } = parse_client_line(&lines[0]).unwrap() else {
            panic!()
        };
        assert_eq!(
            points,
            vec![vec![0.25, 0.25], vec![0.75, 0.25], vec![0.25, 0.75], vec![0.75, 0.75]]
        );
        assert_eq!(parse_client_line(&lines[1]).unwrap(), ClientMessage::ModelReady);
        assert_eq!(
            parse_client_line(&lines[2]).unwrap(),
            ClientMessage::Predictions { values: vec![0.0, 0.0] }
        );
        let op = client_lines("operator/echo-zero");
        assert_eq!(
            parse_client_line(&op[0]).unwrap(),
            ClientMessage::Inputs {
                grid: 4,
                functions: vec![vec![0.0; 4]; 2]
            }
        );
    }

    #[test]
    fn faulty_modes_map_to_their_codes() {
        let short = client_lines("finite/short");
        let ClientMessage::Points { points } = parse_client_line(&short[0]).unwrap() else {
            panic!()
        };
        assert_eq!(points.len(), 3);
        let nan = client_lines("finite/nan");
        assert_eq!(parse_client_line(&nan[2]).unwrap_err().code, ProtoCode::NonFinite);
        let garbage = client_lines("finite/garbage");
        assert_eq!(parse_client_line(&garbage[0]).unwrap_err().code, ProtoCode::Malformed);
    }

    #[test]
    fn serve_stops_at_end() {
        let input = "{\"type\":\"plan\",\"n\":1,\"d\":1}\n{\"type\":\"end\"}\n{\"type\":\"plan\",\"n\":1,\"d\":1}\n";
        let mut out = Vec::new();
        serve(FixtureMode::EchoZero, input.as_bytes(), &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text, "{\"type\":\"points\",\"points\":[[0.5]]}\n");
    }
}
