//! Client for the Isabelle server's line protocol.
//!
//! After connecting, the client sends the server password as its first
//! line. Requests are `name {json}` lines; replies are `OK`, `ERROR`,
//! `NOTE`, `FINISHED` or `FAILED` followed by an optional JSON value. A
//! message that does not fit on one line is sent as a decimal byte count on
//! its own line followed by that many bytes.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpStream, ToSocketAddrs};
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{sort_diagnostics, CheckContext, CheckerError, Severity, SyntaxChecker, SyntaxDiagnostic};

#[derive(Debug, Clone, PartialEq)]
pub enum ServerReply {
    Ok(Value),
    Error(Value),
    Note(Value),
    Finished(Value),
    Failed(Value),
}

impl ServerReply {
    fn parse(message: &str) -> Result<Self, CheckerError> {
        let message = message.trim_end_matches(['\r', '\n']);
        let (name, rest) = message.split_once(' ').unwrap_or((message, ""));
        let value = if rest.trim().is_empty() {
            Value::Null
        } else {
            serde_json::from_str(rest)
                .map_err(|e| CheckerError::Protocol(format!("bad reply argument: {e}")))?
        };
        Ok(match name {
            "OK" => ServerReply::Ok(value),
            "ERROR" => ServerReply::Error(value),
            "NOTE" => ServerReply::Note(value),
            "FINISHED" => ServerReply::Finished(value),
            "FAILED" => ServerReply::Failed(value),
            other => return Err(CheckerError::Protocol(format!("unknown reply `{other}`"))),
        })
    }
}

fn unavailable(e: std::io::Error) -> CheckerError {
    CheckerError::BackendUnavailable(e.to_string())
}

/// One connection; commands on it are strictly sequential.
pub struct ServerConnection {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl ServerConnection {
    pub fn connect(address: &str, password: &str, timeout: Duration) -> Result<Self, CheckerError> {
        let addr = address
            .to_socket_addrs()
            .map_err(unavailable)?
            .next()
            .ok_or_else(|| CheckerError::BackendUnavailable(format!("cannot resolve {address}")))?;
        let stream = TcpStream::connect_timeout(&addr, timeout).map_err(unavailable)?;
        stream.set_read_timeout(Some(timeout)).map_err(unavailable)?;
        let writer = stream.try_clone().map_err(unavailable)?;
        let mut conn = ServerConnection {
            reader: BufReader::new(stream),
            writer,
        };
        conn.write_message(password)?;
        match conn.read_reply()? {
            ServerReply::Ok(_) => Ok(conn),
            other => Err(CheckerError::Protocol(format!(
                "server rejected the password: {other:?}"
            ))),
        }
    }

    fn write_message(&mut self, message: &str) -> Result<(), CheckerError> {
        if message.contains('\n') {
            write!(self.writer, "{}\n{}", message.len(), message).map_err(unavailable)?;
        } else {
            writeln!(self.writer, "{message}").map_err(unavailable)?;
        }
        self.writer.flush().map_err(unavailable)
    }

    pub fn send(&mut self, command: &str, argument: &Value) -> Result<(), CheckerError> {
        let message = if argument.is_null() {
            command.to_string()
        } else {
            format!("{command} {argument}")
        };
        self.write_message(&message)
    }

    pub fn read_reply(&mut self) -> Result<ServerReply, CheckerError> {
        let mut line = String::new();
        let n = self.reader.read_line(&mut line).map_err(unavailable)?;
        if n == 0 {
            return Err(CheckerError::BackendUnavailable(
                "server closed the connection".into(),
            ));
        }
        let trimmed = line.trim_end();
        if !trimmed.is_empty() && trimmed.bytes().all(|b| b.is_ascii_digit()) {
            let len: usize = trimmed
                .parse()
                .map_err(|_| CheckerError::Protocol("bad message length".into()))?;
            let mut buf = vec![0u8; len];
            self.reader.read_exact(&mut buf).map_err(unavailable)?;
            let text = String::from_utf8(buf)
                .map_err(|_| CheckerError::Protocol("reply is not UTF-8".into()))?;
            return ServerReply::parse(&text);
        }
        ServerReply::parse(trimmed)
    }

    /// A command answered by a single `OK`.
    pub fn call(&mut self, command: &str, argument: &Value) -> Result<Value, CheckerError> {
        self.send(command, argument)?;
        match self.read_reply()? {
            ServerReply::Ok(v) => Ok(v),
            other => Err(CheckerError::Protocol(format!("{command}: {other:?}"))),
        }
    }

    /// An asynchronous task: `OK {"task": ...}`, any number of notes, then
    /// `FINISHED` or `FAILED`.
    pub fn call_task(&mut self, command: &str, argument: &Value) -> Result<Value, CheckerError> {
        self.send(command, argument)?;
        match self.read_reply()? {
            ServerReply::Ok(_) => {}
            ServerReply::Error(v) => {
                return Err(CheckerError::Protocol(format!("{command} refused: {v}")))
            }
            other => return Err(CheckerError::Protocol(format!("{command}: {other:?}"))),
        }
        loop {
            match self.read_reply()? {
                ServerReply::Note(_) => continue,
                ServerReply::Finished(v) => return Ok(v),
                ServerReply::Failed(v) => {
                    return Err(CheckerError::BackendUnavailable(format!(
                        "{command} failed: {}",
                        v.get("message").and_then(Value::as_str).unwrap_or("")
                    )))
                }
                other => return Err(CheckerError::Protocol(format!("{command}: {other:?}"))),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsabelleServerConfig {
    /// `host:port`.
    pub address: String,
    /// Name of the environment variable holding the server password.
    pub password_env: String,
    pub session: String,
    /// Directory where the wrapper theories are written; must be visible
    /// to the server.
    pub master_dir: PathBuf,
    pub timeout_secs: u64,
}

impl Default for IsabelleServerConfig {
    fn default() -> Self {
        IsabelleServerConfig {
            address: "127.0.0.1:4711".into(),
            password_env: "ISABELLE_SERVER_PASSWORD".into(),
            session: "IsarMathLib".into(),
            master_dir: std::env::temp_dir().join("autoformal-check"),
            timeout_secs: 300,
        }
    }
}

/// Checks statements by loading them into a running Isabelle server. The
/// session is started once, on first use, and reused.
pub struct ServerChecker {
    config: IsabelleServerConfig,
    context: CheckContext,
    state: Mutex<Option<(ServerConnection, String)>>,
    counter: AtomicU64,
}

impl ServerChecker {
    pub fn new(config: IsabelleServerConfig, context: CheckContext) -> Result<Self, CheckerError> {
        if context.imports.is_empty() {
            return Err(CheckerError::Config(
                "the server backend needs at least one import".into(),
            ));
        }
        Ok(ServerChecker {
            config,
            context,
            state: Mutex::new(None),
            counter: AtomicU64::new(0),
        })
    }

    fn start(&self) -> Result<(ServerConnection, String), CheckerError> {
        let password = std::env::var(&self.config.password_env).map_err(|_| {
            CheckerError::Config(format!("{} is not set", self.config.password_env))
        })?;
        let mut conn = ServerConnection::connect(
            &self.config.address,
            &password,
            Duration::from_secs(self.config.timeout_secs),
        )?;
        let started = conn.call_task(
            "session_start",
            &json!({ "session": self.config.session }),
        )?;
        let id = started
            .get("session_id")
            .and_then(Value::as_str)
            .ok_or_else(|| CheckerError::Protocol("session_start without session_id".into()))?
            .to_string();
        Ok((conn, id))
    }
}

impl SyntaxChecker for ServerChecker {
    fn backend(&self) -> &str {
        "isabelle"
    }

    fn check(&self, statement: &str) -> Result<Vec<SyntaxDiagnostic>, CheckerError> {
        if statement.trim().is_empty() {
            return Err(CheckerError::EmptyStatement);
        }
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        let name = format!("Check_{}_{n}", std::process::id());
        let theory = super::wrap_theory(statement, &self.context)
            .replacen("theory Check ", &format!("theory {name} "), 1);
        fs::create_dir_all(&self.config.master_dir)
            .map_err(|e| CheckerError::Config(e.to_string()))?;
        let path = self.config.master_dir.join(format!("{name}.thy"));
        fs::write(&path, &theory).map_err(|e| CheckerError::Config(e.to_string()))?;

        let mut guard = self.state.lock().expect("checker lock poisoned");
        if guard.is_none() {
            *guard = Some(self.start()?);
        }
        let (conn, session_id) = guard.as_mut().expect("session started");
        let result = conn.call_task(
            "use_theories",
            &json!({
                "session_id": session_id,
                "theories": [name],
                "master_dir": self.config.master_dir,
            }),
        );
        let _ = fs::remove_file(&path);
        let result = match result {
            Ok(v) => v,
            Err(e @ CheckerError::BackendUnavailable(_)) => {
                *guard = None;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        Ok(diagnostics_from_result(&result, &theory, statement))
    }
}

/// Maps `use_theories` messages back onto the statement. Positions in the
/// wrapper theory are shifted by its two header lines.
pub(crate) fn diagnostics_from_result(result: &Value, theory: &str, statement: &str) -> Vec<SyntaxDiagnostic> {
    let header_lines = 2;
    let body_start = theory
        .match_indices('\n')
        .nth(header_lines - 1)
        .map_or(0, |(i, _)| i + 1);
    let mut messages: Vec<&Value> = Vec::new();
    if let Some(errors) = result.get("errors").and_then(Value::as_array) {
        messages.extend(errors);
    }
    if let Some(nodes) = result.get("nodes").and_then(Value::as_array) {
        for node in nodes {
            if let Some(ms) = node.get("messages").and_then(Value::as_array) {
                messages.extend(ms.iter().filter(|m| {
                    m.get("kind").and_then(Value::as_str) == Some("error")
                }));
            }
        }
    }
    let statement = statement.trim();
    let mut out: Vec<SyntaxDiagnostic> = messages
        .into_iter()
        .map(|m| {
            let message = m
                .get("message")
                .and_then(Value::as_str)
                .unwrap_or("error")
                .to_string();
            let pos = m.get("pos");
            let byte = pos
                .and_then(|p| p.get("offset"))
                .and_then(Value::as_u64)
                .map(|o| symbol_offset_to_byte(theory, o as usize));
            let (line, offset) = match byte {
                Some(b) if b >= body_start => {
                    crate::isar::line_col(statement, (b - body_start).min(statement.len()))
                }
                _ => {
                    let line = pos
                        .and_then(|p| p.get("line"))
                        .and_then(Value::as_u64)
                        .unwrap_or(1) as usize;
                    (line.saturating_sub(header_lines).max(1), 0)
                }
            };
            SyntaxDiagnostic {
                line,
                offset,
                end_offset: None,
                message,
                severity: Severity::Error,
            }
        })
        .collect();
    sort_diagnostics(&mut out);
    out.dedup();
    out
}

/// Isabelle offsets count symbols from 1, with `\<name>` as one symbol.
fn symbol_offset_to_byte(text: &str, offset: usize) -> usize {
    let mut remaining = offset.saturating_sub(1);
    let mut i = 0;
    while remaining > 0 && i < text.len() {
        i += crate::isar::symbol_len(text, i)
            .unwrap_or_else(|| text[i..].chars().next().map_or(1, char::len_utf8));
        remaining -= 1;
    }
    i.min(text.len())
}
