//! Simulated client/server network: a bit-exact binary codec and an
//! in-process FIFO bus with byte accounting.

mod bus;
mod codec;

pub use bus::{ChannelBus, LogRecord, TrafficSummary};
pub use codec::{
    client_participant, decode, encode, CodecError, ControlCode, Message, MessageType,
    ParticipantId, Payload, HEADER_LEN, MAGIC, SERVER, VERSION,
};
