use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::attention::{HeardObject, ListKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Command {
    CurrentSound,
    Subscribe,
    Unsubscribe,
    ListenPrimary,
    ListenSecondary,
    TakeInterrupts,
    IgnoreInterrupts,
    Vigilance,
    ListAdd,
    ListRemove,
    ListQuery,
    TurnHead,
}

impl Command {
    pub const ALL: [Command; 12] = [
        Command::CurrentSound,
        Command::Subscribe,
        Command::Unsubscribe,
        Command::ListenPrimary,
        Command::ListenSecondary,
        Command::TakeInterrupts,
        Command::IgnoreInterrupts,
        Command::Vigilance,
        Command::ListAdd,
        Command::ListRemove,
        Command::ListQuery,
        Command::TurnHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::CurrentSound => "CURRENT_SOUND",
            Command::Subscribe => "SUBSCRIBE",
            Command::Unsubscribe => "UNSUBSCRIBE",
            Command::ListenPrimary => "LISTEN_PRIMARY",
            Command::ListenSecondary => "LISTEN_SECONDARY",
            Command::TakeInterrupts => "TAKE_INTERRUPTS",
            Command::IgnoreInterrupts => "IGNORE_INTERRUPTS",
            Command::Vigilance => "VIGILANCE",
            Command::ListAdd => "LIST_ADD",
            Command::ListRemove => "LIST_REMOVE",
            Command::ListQuery => "LIST_QUERY",
            Command::TurnHead => "TURN_HEAD",
        }
    }

    pub fn from_name(name: &str) -> Option<Command> {
        Command::ALL.into_iter().find(|c| c.name() == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandMessage {
    pub seq: u64,
    pub cmd: Command,
    #[serde(default)]
    pub args: Map<String, Value>,
}

impl CommandMessage {
    pub fn new(seq: u64, cmd: Command, args: Value) -> Self {
        let args = match args {
            Value::Object(m) => m,
            _ => Map::new(),
        };
        CommandMessage { seq, cmd, args }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AckStatus {
    Ok,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    BadSeq,
    CapacityFull,
    NotFound,
    DeadStream,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AckMessage {
    /// Echo of the command's seq; null when the line carried no readable seq.
    pub seq: Option<u64>,
    pub status: AckStatus,
    /// Engine time at which the command took effect.
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_code: Option<ErrorCode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub payload: Option<Value>,
}

impl AckMessage {
    pub fn ok(seq: u64, t: f64, payload: Option<Value>) -> Self {
        AckMessage {
            seq: Some(seq),
            status: AckStatus::Ok,
            t,
            error_code: None,
            detail: None,
            payload,
        }
    }

    pub fn error(seq: Option<u64>, t: f64, code: ErrorCode, detail: impl Into<String>) -> Self {
        AckMessage {
            seq,
            status: AckStatus::Error,
            t,
            error_code: Some(code),
            detail: Some(detail.into()),
            payload: None,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == AckStatus::Ok
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventKind {
    Sound,
    Found,
    Interrupt,
    Alarm,
    HeadDone,
    HeadCancelled,
    StreamEnded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventMessage {
    pub event_id: String,
    pub kind: EventKind,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heard: Option<HeardObject>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matched_entry: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub list_kind: Option<ListKind>,
    /// Why an INTERRUPT fired: `name`, `loud` or `listed`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// seq of the command that caused a head event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause_seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stream_id: Option<String>,
}

impl EventMessage {
    /// An event without an id yet; the engine numbers events as it emits them.
    pub fn new(kind: EventKind, t: f64) -> Self {
        EventMessage {
            event_id: String::new(),
            kind,
            t,
            heard: None,
            matched_entry: None,
            list_kind: None,
            reason: None,
            cause_seq: None,
            stream_id: None,
        }
    }

    pub fn with_heard(mut self, heard: HeardObject) -> Self {
        self.stream_id = Some(heard.stream_id.clone());
        self.heard = Some(heard);
        self
    }
}

/// Any line on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Message {
    Command(CommandMessage),
    Ack(AckMessage),
    Event(EventMessage),
}
