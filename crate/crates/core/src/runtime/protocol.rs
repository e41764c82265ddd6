//! Telemetry wire protocol.
//!
//! Each frame is a 4-byte big-endian payload length followed by one UTF-8
//! JSON object. Every object carries a `type` field:
//!
//! | type            | direction       | fields                                             |
//! |-----------------|-----------------|----------------------------------------------------|
//! | `hello`         | server → client | `schema`, `version`, `channels`, `actions`, `backlog` (records about to be replayed) |
//! | `step_record`   | server → client | `record` (a trace [`StepRecord`])                  |
//! | `set_threshold` | client → server | `kind` (`rho` or `phi`), `value`                   |
//! | `threshold_ack` | server → client | `kind`, `value`, `effective_step`                  |
//! | `msx_request`   | client → server | `step`                                             |
//! | `msx_reply`     | server → client | `step`, `explanation` (`chosen`, `best_alternative`, `channels`) |
//! | `pause`         | client → server | none                                               |
//! | `resume`        | client → server | none                                               |
//! | `error`         | server → client | `message`                                          |
//!
//! Units follow the trace: rates in requests per second, response times in
//! seconds, rewards per control step.

use std::io::{ErrorKind, Read, Write};

use serde::{Deserialize, Serialize};

use super::record::{StepRecord, TraceHeader};
use crate::dine::{MinimalSufficientExplanation, ThresholdKind};
use crate::{Error, Result};

pub const PROTOCOL_SCHEMA: &str = "dine-telemetry";
pub const PROTOCOL_VERSION: u32 = 1;
/// Frames larger than this are treated as a broken stream.
pub const MAX_FRAME_BYTES: usize = 16 << 20;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Hello {
        schema: String,
        version: u32,
        channels: Vec<String>,
        actions: Vec<String>,
        backlog: usize,
    },
    StepRecord {
        record: Box<StepRecord>,
    },
    SetThreshold {
        kind: ThresholdKind,
        value: f64,
    },
    ThresholdAck {
        kind: ThresholdKind,
        value: f64,
        effective_step: u64,
    },
    MsxRequest {
        step: u64,
    },
    MsxReply {
        step: u64,
        explanation: MinimalSufficientExplanation,
    },
    Pause,
    Resume,
    Error {
        message: String,
    },
}

impl Message {
    pub fn hello(header: &TraceHeader, backlog: usize) -> Self {
        Message::Hello {
            schema: PROTOCOL_SCHEMA.into(),
            version: PROTOCOL_VERSION,
            channels: header.channels.clone(),
            actions: header.actions.clone(),
            backlog,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Message::Error {
            message: message.into(),
        }
    }

    /// Messages a client may send.
    pub fn is_control(&self) -> bool {
        matches!(
            self,
            Message::SetThreshold { .. }
                | Message::MsxRequest { .. }
                | Message::Pause
                | Message::Resume
        )
    }
}

pub fn encode_frame(msg: &Message) -> Result<Vec<u8>> {
    let body = serde_json::to_vec(msg)?;
    if body.len() > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!(
            "frame of {} bytes exceeds limit",
            body.len()
        )));
    }
    let mut out = Vec::with_capacity(body.len() + 4);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    Ok(out)
}

pub fn write_message<W: Write>(w: &mut W, msg: &Message) -> Result<()> {
    w.write_all(&encode_frame(msg)?)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame payload; `None` on a clean end of stream before a frame.
pub fn read_frame<R: Read>(r: &mut R) -> Result<Option<Vec<u8>>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME_BYTES {
        return Err(Error::Protocol(format!(
            "frame of {len} bytes exceeds limit"
        )));
    }
    let mut body = vec![0u8; len];
    r.read_exact(&mut body)
        .map_err(|e| Error::Protocol(format!("truncated frame: {e}")))?;
    Ok(Some(body))
}

/// Decodes a payload. Failure here leaves the stream usable.
pub fn decode_message(body: &[u8]) -> Result<Message> {
    serde_json::from_slice(body).map_err(|e| Error::Protocol(format!("malformed message: {e}")))
}

pub fn read_message<R: Read>(r: &mut R) -> Result<Option<Message>> {
    read_frame(r)?.map(|b| decode_message(&b)).transpose()
}
