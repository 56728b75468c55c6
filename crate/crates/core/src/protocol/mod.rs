//! Newline-delimited JSON between the ear and its cognition clients.

mod messages;
pub mod server;

pub use messages::*;

use serde_json::Value;
use thiserror::Error;

use crate::engine::{ClientId, Engine};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("line is not a single message: {0}")]
    Json(#[from] serde_json::Error),
    #[error("line contains a newline")]
    Multiline,
}

/// One message as a line of text, without the trailing newline.
pub fn encode(message: &Message) -> String {
    match message {
        Message::Command(m) => serde_json::to_string(m),
        Message::Ack(m) => serde_json::to_string(m),
        Message::Event(m) => serde_json::to_string(m),
    }
    .expect("messages always serialise")
}

pub fn decode(line: &str) -> Result<Message, DecodeError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    if line.contains('\n') {
        return Err(DecodeError::Multiline);
    }
    Ok(serde_json::from_str(line)?)
}

/// Why a command line was refused before reaching the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct Rejection {
    pub seq: Option<u64>,
    pub code: ErrorCode,
    pub detail: String,
}

/// Parses a command line, naming the offending part when it is malformed.
pub fn decode_command(line: &str) -> Result<CommandMessage, Rejection> {
    let reject = |seq, detail: String| Rejection {
        seq,
        code: ErrorCode::BadRequest,
        detail,
    };
    let line = line.trim_end_matches(['\n', '\r']);
    let value: Value = serde_json::from_str(line).map_err(|e| reject(None, format!("malformed line: {e}")))?;
    let seq = value.get("seq").and_then(Value::as_u64);
    let Some(obj) = value.as_object() else {
        return Err(reject(None, "command must be an object".into()));
    };
    match obj.get("cmd") {
        Some(Value::String(name)) if Command::from_name(name).is_none() => {
            return Err(reject(seq, format!("unknown cmd `{name}`")));
        }
        Some(Value::String(_)) => {}
        Some(other) => return Err(reject(seq, format!("unknown cmd `{other}`"))),
        None => return Err(reject(seq, "missing `cmd`".into())),
    }
    if seq.is_none() {
        return Err(reject(None, "missing or invalid `seq`".into()));
    }
    serde_json::from_value(value).map_err(|e| reject(seq, format!("bad command: {e}")))
}

/// Per-connection protocol state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Session {
    pub client: ClientId,
    pub last_seq: Option<u64>,
}

impl Session {
    pub fn new(client: ClientId) -> Self {
        Session { client, last_seq: None }
    }

    /// Checks the seq discipline and hands the command to the engine.
    pub fn handle(&mut self, engine: &mut Engine, msg: &CommandMessage) -> AckMessage {
        if self.last_seq.is_some_and(|last| msg.seq <= last) {
            return AckMessage::error(
                Some(msg.seq),
                engine.now(),
                ErrorCode::BadSeq,
                format!("seq {} not above {}", msg.seq, self.last_seq.unwrap_or_default()),
            );
        }
        self.last_seq = Some(msg.seq);
        engine.handle_command(self.client, msg)
    }

    /// Exactly one ack for any line of input.
    pub fn handle_line(&mut self, engine: &mut Engine, line: &str) -> AckMessage {
        match decode_command(line) {
            Ok(msg) => self.handle(engine, &msg),
            Err(r) => AckMessage::error(r.seq, engine.now(), r.code, r.detail),
        }
    }
}
