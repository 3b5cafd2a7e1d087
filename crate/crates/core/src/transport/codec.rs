//! Binary envelope for every message the simulator sends.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SPL1"
//! 4       1     version (1)
//! 5       1     msg_type
//! 6       2     sender      u16 LE
//! 8       2     receiver    u16 LE
//! 10      4     round       u32 LE
//! 14      4     seq         u32 LE
//! 18      1     rank
//! 19      4*r   dims        u32 LE each
//! ...     8*n   payload     f64 LE, n = product(dims)
//! ```
//!
//! Control messages carry rank 0 followed by a single control-code byte.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{checked_volume, Tensor};

pub const MAGIC: [u8; 4] = *b"SPL1";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 19;

pub type ParticipantId = u16;

/// The server always has participant id 0; client `k` is participant `k + 1`.
pub const SERVER: ParticipantId = 0;

pub fn client_participant(client_id: u16) -> ParticipantId {
    client_id + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("corrupt stream: {0}")]
    CorruptStream(String),
    #[error("truncated frame: need {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("unsupported message: {0}")]
    UnsupportedMessage(String),
    #[error("tensor rank {0} exceeds 255")]
    RankTooLarge(usize),
    #[error("tensor dimension {0} exceeds u32")]
    DimensionTooLarge(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum MessageType {
    /// Client front output, client -> server.
    SmashedActivations = 1,
    /// Server body output, server -> client (U-shaped only).
    BodyOutput = 2,
    /// dL/d(body output), client -> server (U-shaped only).
    BodyOutputGrad = 3,
    /// dL/d(smashed activations), server -> client.
    SmashedGrad = 4,
    /// Flattened model parameters in canonical layer order.
    ParamBlob = 5,
    /// Batch labels, client -> server (vanilla only).
    Labels = 6,
    Control = 7,
}

impl MessageType {
    pub const ALL: [MessageType; 7] = [
        MessageType::SmashedActivations,
        MessageType::BodyOutput,
        MessageType::BodyOutputGrad,
        MessageType::SmashedGrad,
        MessageType::ParamBlob,
        MessageType::Labels,
        MessageType::Control,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Result<Self, CodecError> {
        Self::ALL
            .into_iter()
            .find(|t| t.code() == code)
            .ok_or_else(|| CodecError::UnsupportedMessage(format!("msg_type {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            MessageType::SmashedActivations => "SmashedActivations",
            MessageType::BodyOutput => "BodyOutput",
            MessageType::BodyOutputGrad => "BodyOutputGrad",
            MessageType::SmashedGrad => "SmashedGrad",
            MessageType::ParamBlob => "ParamBlob",
            MessageType::Labels => "Labels",
            MessageType::Control => "Control",
        }
    }
}

impl std::fmt::Display for MessageType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum ControlCode {
    RoundStart = 1,
    ClientDone = 2,
    RoundEnd = 3,
}

impl ControlCode {
    pub const ALL: [ControlCode; 3] = [
        ControlCode::RoundStart,
        ControlCode::ClientDone,
        ControlCode::RoundEnd,
    ];

    pub fn from_code(code: u8) -> Result<Self, CodecError> {
        Self::ALL
            .into_iter()
            .find(|c| *c as u8 == code)
            .ok_or_else(|| CodecError::UnsupportedMessage(format!("control code {code}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Tensor(Tensor),
    Control(ControlCode),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    kind: MessageType,
    pub round: u32,
    /// Per-channel sequence number, stamped by the bus on send.
    pub seq: u32,
    pub sender: ParticipantId,
    pub receiver: ParticipantId,
    payload: Payload,
}

impl Message {
    /// A tensor-carrying message. `kind` must not be `Control`.
    pub fn tensor(
        kind: MessageType,
        sender: ParticipantId,
        receiver: ParticipantId,
        round: u32,
        tensor: Tensor,
    ) -> Self {
        assert_ne!(kind, MessageType::Control, "control messages carry a code");
        Self {
            kind,
            round,
            seq: 0,
            sender,
            receiver,
            payload: Payload::Tensor(tensor),
        }
    }

    pub fn control(
        sender: ParticipantId,
        receiver: ParticipantId,
        round: u32,
        code: ControlCode,
    ) -> Self {
        Self {
            kind: MessageType::Control,
            round,
            seq: 0,
            sender,
            receiver,
            payload: Payload::Control(code),
        }
    }

    pub fn kind(&self) -> MessageType {
        self.kind
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn tensor_payload(&self) -> Option<&Tensor> {
        match &self.payload {
            Payload::Tensor(t) => Some(t),
            Payload::Control(_) => None,
        }
    }

    pub fn into_tensor(self) -> Option<Tensor> {
        match self.payload {
            Payload::Tensor(t) => Some(t),
            Payload::Control(_) => None,
        }
    }

    pub fn control_code(&self) -> Option<ControlCode> {
        match self.payload {
            Payload::Control(c) => Some(c),
            Payload::Tensor(_) => None,
        }
    }

    /// Size of this message on the wire.
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN
            + match &self.payload {
                Payload::Control(_) => 1,
                Payload::Tensor(t) => 4 * t.rank() + 8 * t.len(),
            }
    }

    /// Bitwise equality, including payload values.
    pub fn bit_eq(&self, other: &Message) -> bool {
        self.kind == other.kind
            && self.round == other.round
            && self.seq == other.seq
            && self.sender == other.sender
            && self.receiver == other.receiver
            && match (&self.payload, &other.payload) {
                (Payload::Tensor(a), Payload::Tensor(b)) => a.bit_eq(b),
                (Payload::Control(a), Payload::Control(b)) => a == b,
                _ => false,
            }
    }
}

pub fn encode(message: &Message) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::with_capacity(message.encoded_len());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(message.kind.code());
    out.extend_from_slice(&message.sender.to_le_bytes());
    out.extend_from_slice(&message.receiver.to_le_bytes());
    out.extend_from_slice(&message.round.to_le_bytes());
    out.extend_from_slice(&message.seq.to_le_bytes());
    match &message.payload {
        Payload::Control(code) => {
            out.push(0);
            out.push(*code as u8);
        }
        Payload::Tensor(t) => {
            let rank = u8::try_from(t.rank()).map_err(|_| CodecError::RankTooLarge(t.rank()))?;
            out.push(rank);
            for &d in t.shape() {
                let d = u32::try_from(d).map_err(|_| CodecError::DimensionTooLarge(d))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in t.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CodecError::Truncated {
                needed: self.pos.saturating_add(n),
                available: self.bytes.len(),
            }),
        }
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Message, CodecError> {
    let mut r = Reader { bytes, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(CodecError::CorruptStream(format!("bad magic {magic:?}")));
    }
    let version = r.u8()?;
    if version != VERSION {
        return Err(CodecError::CorruptStream(format!(
            "unknown version {version}"
        )));
    }
    let kind = MessageType::from_code(r.u8()?)?;
    let sender = r.u16()?;
    let receiver = r.u16()?;
    let round = r.u32()?;
    let seq = r.u32()?;
    let rank = r.u8()? as usize;

    let payload = if kind == MessageType::Control {
        if rank != 0 {
            return Err(CodecError::CorruptStream(format!(
                "control message with rank {rank}"
            )));
        }
        Payload::Control(ControlCode::from_code(r.u8()?)?)
    } else {
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let d = r.u32()? as usize;
            if d == 0 {
                return Err(CodecError::CorruptStream("zero tensor dimension".into()));
            }
            shape.push(d);
        }
        let count = checked_volume(&shape)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| CodecError::CorruptStream("declared payload overflows".into()))?;
        let raw = r.take(count)?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor =
            Tensor::new(shape, values).map_err(|e| CodecError::CorruptStream(e.to_string()))?;
        Payload::Tensor(tensor)
    };

    if r.pos != bytes.len() {
        return Err(CodecError::CorruptStream(format!(
            "{} trailing bytes",
            bytes.len() - r.pos
        )));
    }
    Ok(Message {
        kind,
        round,
        seq,
        sender,
        receiver,
        payload,
    })
}
