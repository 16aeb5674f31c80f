//! Adapter running a reconstruction algorithm in a child process that
//! speaks the line-delimited JSON protocol of [`crate::protocol`].

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{Reconstruction, ReconstructionAlgorithm, Session};
use crate::points::PointSet;
use crate::protocol::{check_finite, parse_client_line, ClientMessage, HarnessMessage, ProtoCode, ProtocolError};
use crate::quadrature::{EvalError, Evaluable};

const STDERR_TAIL: usize = 2048;
/// Points per `query` message.
const QUERY_CHUNK: usize = 4096;

fn default_timeout() -> f64 {
    30.0
}

fn default_env() -> Vec<String> {
    vec!["PATH".into()]
}

/// How to launch an external algorithm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalAlgorithmSpec {
    /// Program followed by its arguments.
    pub command: Vec<String>,
    /// Seconds to wait for each reply.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Environment variables passed through; everything else is cleared.
    #[serde(default = "default_env")]
    pub env: Vec<String>,
    /// Display name; defaults to the program name.
    #[serde(default)]
    pub name: Option<String>,
}

impl ExternalAlgorithmSpec {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            timeout: default_timeout(),
            env: default_env(),
            name: None,
        }
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout.max(0.0))
    }

    pub fn display_name(&self) -> String {
        self.name
            .clone()
            .unwrap_or_else(|| format!("external({})", self.command.first().map_or("", String::as_str)))
    }
}

/// A running client process with a line reader on its standard output.
pub struct ExternalProcess {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    stderr: Arc<Mutex<String>>,
    timeout: Duration,
    ended: bool,
}

impl ExternalProcess {
    pub fn spawn(spec: &ExternalAlgorithmSpec) -> Result<Self, ProtocolError> {
        let (program, args) = spec
            .command
            .split_first()
            .ok_or_else(|| ProtocolError::new(ProtoCode::Io, "empty command"))?;
        let mut cmd = Command::new(program);
        cmd.args(args)
            .env_clear()
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped());
        for key in &spec.env {
            if let Some(v) = std::env::var_os(key) {
                cmd.env(key, v);
            }
        }
        let mut child = cmd
            .spawn()
            .map_err(|e| ProtocolError::new(ProtoCode::Io, format!("cannot start {program:?}: {e}")))?;
        let stdout = child.stdout.take().expect("piped stdout");
        let stderr_pipe = child.stderr.take().expect("piped stderr");
        let (tx, rx) = mpsc::channel();
        thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        let stderr = Arc::new(Mutex::new(String::new()));
        let sink = Arc::clone(&stderr);
        thread::spawn(move || {
            let mut buf = [0u8; 1024];
            let mut pipe = stderr_pipe;
            while let Ok(k) = pipe.read(&mut buf) {
                if k == 0 {
                    break;
                }
                let mut tail = sink.lock().expect("stderr buffer");
                tail.push_str(&String::from_utf8_lossy(&buf[..k]));
                if tail.len() > STDERR_TAIL {
                    let mut cut = tail.len() - STDERR_TAIL;
                    while !tail.is_char_boundary(cut) {
                        cut += 1;
                    }
                    tail.drain(..cut);
                }
            }
        });
        Ok(Self {
            stdin: child.stdin.take(),
            child,
            lines: rx,
            stderr,
            timeout: spec.timeout(),
            ended: false,
        })
    }

    fn stderr_tail(&self) -> String {
        let tail = self.stderr.lock().expect("stderr buffer");
        if tail.trim().is_empty() {
            String::new()
        } else {
            format!("; stderr: {}", tail.trim())
        }
    }

    fn exit_error(&mut self, context: &str) -> ProtocolError {
        let status = self.wait_for(Duration::from_millis(500));
        let status = match status {
            Some(s) => s.to_string(),
            None => "still running".into(),
        };
        ProtocolError::new(ProtoCode::Exit, format!("{context} ({status}){}", self.stderr_tail()))
    }

    fn wait_for(&mut self, limit: Duration) -> Option<std::process::ExitStatus> {
        let start = Instant::now();
        loop {
            match self.child.try_wait() {
                Ok(Some(s)) => return Some(s),
                Ok(None) if start.elapsed() < limit => thread::sleep(Duration::from_millis(2)),
                _ => return None,
            }
        }
    }

    pub fn send(&mut self, msg: &HarnessMessage) -> Result<(), ProtocolError> {
        let mut line = msg.to_line();
        line.push('\n');
        let Some(stdin) = self.stdin.as_mut() else {
            return Err(ProtocolError::new(ProtoCode::Io, "input already closed"));
        };
        if stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()).is_err() {
            return Err(self.exit_error("process stopped reading its input"));
        }
        Ok(())
    }

    pub fn recv(&mut self) -> Result<ClientMessage, ProtocolError> {
        loop {
            match self.lines.recv_timeout(self.timeout) {
                Ok(Ok(line)) if line.trim().is_empty() => continue,
                Ok(Ok(line)) => return parse_client_line(&line),
                Ok(Err(e)) => {
                    return Err(ProtocolError::new(
                        ProtoCode::Malformed,
                        format!("unreadable output: {e}"),
                    ))
                }
                Err(RecvTimeoutError::Timeout) => {
                    let _ = self.child.kill();
                    return Err(ProtocolError::new(
                        ProtoCode::Timeout,
                        format!("no reply within {:?}{}", self.timeout, self.stderr_tail()),
                    ));
                }
                Err(RecvTimeoutError::Disconnected) => return Err(self.exit_error("output closed")),
            }
        }
    }

    /// Receives a message of the given kind.
    pub fn expect(&mut self, kind: &str) -> Result<ClientMessage, ProtocolError> {
        let msg = self.recv()?;
        if msg.kind() != kind {
            return Err(ProtocolError::new(
                ProtoCode::Malformed,
                format!("expected {kind:?}, received {:?}", msg.kind()),
            ));
        }
        Ok(msg)
    }

    /// Sends `end`, closes the input and waits for a zero exit status.
    pub fn end(mut self) -> Result<(), ProtocolError> {
        let limit = self.timeout;
        self.shutdown(limit)
    }

    fn shutdown(&mut self, limit: Duration) -> Result<(), ProtocolError> {
        if self.ended {
            return Ok(());
        }
        self.ended = true;
        let sent = self.send(&HarnessMessage::End);
        self.stdin = None;
        let status = self.wait_for(limit);
        match status {
            None => {
                let _ = self.child.kill();
                let _ = self.child.wait();
                Err(ProtocolError::new(ProtoCode::Timeout, "process did not exit after end"))
            }
            Some(s) if !s.success() => Err(ProtocolError::new(
                ProtoCode::Exit,
                format!("nonzero exit ({s}){}", self.stderr_tail()),
            )),
            Some(_) => sent,
        }
    }
}

impl Drop for ExternalProcess {
    fn drop(&mut self) {
        if !self.ended {
            let _ = self.shutdown(self.timeout.min(Duration::from_millis(250)));
        }
    }
}

/// Validates a point list against the plan.
pub(crate) fn check_points(rows: &[Vec<f64>], n: usize, d: usize) -> Result<PointSet, ProtocolError> {
    if rows.len() != n {
        return Err(ProtocolError::new(
            ProtoCode::PointCount,
            format!("expected {n} points, received {}", rows.len()),
        ));
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
        return Err(ProtocolError::new(
            ProtoCode::Malformed,
            format!("point {i} has {} coordinates, expected {d}", r.len()),
        ));
    }
    check_finite(rows.iter().flatten(), "points")?;
    if let Some(i) = rows.iter().position(|r| r.iter().any(|v| !(0.0..=1.0).contains(v))) {
        return Err(ProtocolError::new(
            ProtoCode::Range,
            format!("point {i} outside [0,1]^{d}"),
        ));
    }
    Ok(PointSet::from_rows(d, rows).expect("checked lengths"))
}

/// An algorithm served by an external process, one process per trial.
#[derive(Debug, Clone)]
pub struct ExternalAlgorithm {
    pub spec: ExternalAlgorithmSpec,
}

pub fn external_algorithm(spec: ExternalAlgorithmSpec) -> ExternalAlgorithm {
    ExternalAlgorithm { spec }
}

struct ExternalSession {
    proc: ExternalProcess,
    points: PointSet,
}

impl ReconstructionAlgorithm for ExternalAlgorithm {
    fn name(&self) -> String {
        self.spec.display_name()
    }

    fn start(&self, n: usize, d: usize, _omega: u64) -> Result<Box<dyn Session + '_>, ProtocolError> {
        let mut proc = ExternalProcess::spawn(&self.spec)?;
        proc.send(&HarnessMessage::Plan {
            n,
            d: Some(d),
            grid: None,
        })?;
        let ClientMessage::Points { points } = proc.expect("points")? else {
            unreachable!("kind checked")
        };
        let points = check_points(&points, n, d)?;
        Ok(Box::new(ExternalSession { proc, points }))
    }
}

impl Session for ExternalSession {
    fn points(&self) -> &PointSet {
        &self.points
    }

    fn finish(self: Box<Self>, values: &[f64]) -> Result<Box<dyn Reconstruction>, ProtocolError> {
        let ExternalSession { mut proc, points } = *self;
        proc.send(&HarnessMessage::Values {
            values: values.to_vec(),
        })?;
        proc.expect("model_ready")?;
        Ok(Box::new(ExternalReconstruction {
            dim: points.dim(),
            proc: Mutex::new(proc),
        }))
    }
}

/// Reconstruction evaluated by querying the external process.
pub struct ExternalReconstruction {
    dim: usize,
    proc: Mutex<ExternalProcess>,
}

impl Evaluable for ExternalReconstruction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval_batch(&self, xs: &[f64], out: &mut [f64]) -> Result<(), EvalError> {
        let mut proc = self
            .proc
            .lock()
            .map_err(|_| EvalError::Failed("adapter poisoned".into()))?;
        for (xc, oc) in xs.chunks(QUERY_CHUNK * self.dim).zip(out.chunks_mut(QUERY_CHUNK)) {
            let points = xc.chunks_exact(self.dim).map(<[f64]>::to_vec).collect();
            proc.send(&HarnessMessage::Query {
                points: Some(points),
                grid: None,
                functions: None,
            })?;
            let ClientMessage::Predictions { values } = proc.expect("predictions")? else {
                unreachable!("kind checked")
            };
            if values.len() != oc.len() {
                return Err(ProtocolError::new(
                    ProtoCode::PointCount,
                    format!("expected {} predictions, received {}", oc.len(), values.len()),
                )
                .into());
            }
            check_finite(&values, "predictions")?;
            oc.copy_from_slice(&values);
        }
        Ok(())
    }
}

impl Reconstruction for ExternalReconstruction {
    fn close(self: Box<Self>) -> Result<(), ProtocolError> {
        self.proc
            .into_inner()
            .map_err(|_| ProtocolError::new(ProtoCode::Io, "adapter poisoned"))?
            .end()
    }
}
