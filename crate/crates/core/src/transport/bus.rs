use std::collections::{BTreeMap, HashMap, VecDeque};
use std::io::Write;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::codec::{decode, encode, Message, MessageType, ParticipantId, SERVER};
use crate::Result;

/// One line of the message log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogRecord {
    pub round: u32,
    pub seq: u32,
    pub sender: ParticipantId,
    pub receiver: ParticipantId,
    #[serde(rename = "type")]
    pub kind: MessageType,
    pub bytes: usize,
}

/// Cumulative traffic since the bus was created.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrafficSummary {
    pub messages: u64,
    pub total_bytes: u64,
    /// Bytes sent by clients to the server.
    pub upstream_bytes: u64,
    /// Bytes sent by the server to clients.
    pub downstream_bytes: u64,
    pub bytes_by_type: BTreeMap<MessageType, u64>,
    pub count_by_type: BTreeMap<MessageType, u64>,
}

impl TrafficSummary {
    pub fn bytes_of(&self, kind: MessageType) -> u64 {
        self.bytes_by_type.get(&kind).copied().unwrap_or(0)
    }

    pub fn count_of(&self, kind: MessageType) -> u64 {
        self.count_by_type.get(&kind).copied().unwrap_or(0)
    }
}

#[derive(Debug)]
struct Frame {
    sender: ParticipantId,
    bytes: Vec<u8>,
}

#[derive(Debug, Default)]
struct BusState {
    inboxes: HashMap<ParticipantId, VecDeque<Frame>>,
    next_seq: HashMap<(ParticipantId, ParticipantId), u32>,
    channel_bytes: BTreeMap<(ParticipantId, ParticipantId), u64>,
    traffic: TrafficSummary,
    log: Vec<LogRecord>,
}

/// In-process network. Messages are encoded on send and decoded on receive,
/// so everything crossing the bus goes through the wire format.
///
/// Each receiver has one inbox in arrival order, which gives FIFO delivery
/// per `(sender, receiver)` channel. Byte counters and the log are updated
/// under the same lock as the enqueue.
#[derive(Debug, Default)]
pub struct ChannelBus {
    state: Mutex<BusState>,
}

impl ChannelBus {
    pub fn new() -> Self {
        Self::default()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BusState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Stamps the next per-channel sequence number, encodes, and enqueues.
    /// Returns the encoded length.
    pub fn send(&self, mut message: Message) -> Result<usize> {
        let mut st = self.lock();
        let channel = (message.sender, message.receiver);
        let seq = st.next_seq.entry(channel).or_insert(0);
        message.seq = *seq;
        *seq = seq.wrapping_add(1);
        let bytes = encode(&message)?;
        let len = bytes.len();

        *st.channel_bytes.entry(channel).or_insert(0) += len as u64;
        let t = &mut st.traffic;
        t.messages += 1;
        t.total_bytes += len as u64;
        if message.receiver == SERVER && message.sender != SERVER {
            t.upstream_bytes += len as u64;
        } else if message.sender == SERVER && message.receiver != SERVER {
            t.downstream_bytes += len as u64;
        }
        *t.bytes_by_type.entry(message.kind()).or_insert(0) += len as u64;
        *t.count_by_type.entry(message.kind()).or_insert(0) += 1;
        st.log.push(LogRecord {
            round: message.round,
            seq: message.seq,
            sender: message.sender,
            receiver: message.receiver,
            kind: message.kind(),
            bytes: len,
        });
        st.inboxes
            .entry(message.receiver)
            .or_default()
            .push_back(Frame {
                sender: message.sender,
                bytes,
            });
        Ok(len)
    }

    /// Oldest pending message for `receiver` from any sender, or `None` when
    /// the inbox is empty.
    pub fn recv(&self, receiver: ParticipantId) -> Result<Option<Message>> {
        let frame = self
            .lock()
            .inboxes
            .get_mut(&receiver)
            .and_then(VecDeque::pop_front);
        match frame {
            Some(f) => Ok(Some(decode(&f.bytes)?)),
            None => Ok(None),
        }
    }

    /// Oldest pending message on the `(sender, receiver)` channel.
    pub fn recv_from(
        &self,
        sender: ParticipantId,
        receiver: ParticipantId,
    ) -> Result<Option<Message>> {
        let frame = {
            let mut st = self.lock();
            st.inboxes.get_mut(&receiver).and_then(|q| {
                let idx = q.iter().position(|f| f.sender == sender)?;
                q.remove(idx)
            })
        };
        match frame {
            Some(f) => Ok(Some(decode(&f.bytes)?)),
            None => Ok(None),
        }
    }

    pub fn pending(&self, receiver: ParticipantId) -> usize {
        self.lock().inboxes.get(&receiver).map_or(0, VecDeque::len)
    }

    pub fn is_idle(&self) -> bool {
        self.lock().inboxes.values().all(VecDeque::is_empty)
    }

    pub fn channel_bytes(&self, sender: ParticipantId, receiver: ParticipantId) -> u64 {
        self.lock()
            .channel_bytes
            .get(&(sender, receiver))
            .copied()
            .unwrap_or(0)
    }

    pub fn traffic(&self) -> TrafficSummary {
        self.lock().traffic.clone()
    }

    pub fn log(&self) -> Vec<LogRecord> {
        self.lock().log.clone()
    }

    /// Writes the message log as newline-delimited JSON, one record per line.
    pub fn write_log(&self, path: &Path) -> Result<()> {
        let log = self.log();
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for rec in &log {
            serde_json::to_writer(&mut out, rec)?;
            out.write_all(b"\n")?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;
    use crate::transport::codec::ControlCode;

    fn act(sender: ParticipantId, v: f64) -> Message {
        Message::tensor(
            MessageType::SmashedActivations,
            sender,
            SERVER,
            0,
            Tensor::new(vec![2, 3], vec![v; 6]).unwrap(),
        )
    }

    #[test]
    fn fifo_per_channel() {
        let bus = ChannelBus::new();
        bus.send(act(1, 1.0)).unwrap();
        bus.send(act(1, 2.0)).unwrap();
        let a = bus.recv(SERVER).unwrap().unwrap();
        let b = bus.recv(SERVER).unwrap().unwrap();
        assert_eq!(a.tensor_payload().unwrap().values()[0], 1.0);
        assert_eq!(b.tensor_payload().unwrap().values()[0], 2.0);
        assert_eq!((a.seq, b.seq), (0, 1));
    }

    #[test]
    fn counter_tracks_encoded_length() {
        let bus = ChannelBus::new();
        assert_eq!(bus.send(act(1, 0.5)).unwrap(), 75);
        assert_eq!(bus.traffic().total_bytes, 75);
        assert_eq!(bus.traffic().upstream_bytes, 75);
        assert_eq!(bus.channel_bytes(1, SERVER), 75);
    }

    #[test]
    fn empty_inbox_is_none() {
        let bus = ChannelBus::new();
        assert!(bus.recv(SERVER).unwrap().is_none());
        bus.send(Message::control(SERVER, 2, 0, ControlCode::RoundStart))
            .unwrap();
        assert!(bus.recv_from(SERVER, 3).unwrap().is_none());
        assert!(bus.recv_from(SERVER, 2).unwrap().is_some());
    }

    #[test]
    fn recv_from_skips_other_senders() {
        let bus = ChannelBus::new();
        bus.send(act(1, 1.0)).unwrap();
        bus.send(act(2, 2.0)).unwrap();
        let m = bus.recv_from(2, SERVER).unwrap().unwrap();
        assert_eq!(m.sender, 2);
        assert_eq!(bus.recv(SERVER).unwrap().unwrap().sender, 1);
    }

    #[test]
    fn producer_and_consumer_on_different_threads() {
        let bus = ChannelBus::new();
        let n = 200;
        std::thread::scope(|s| {
            s.spawn(|| {
                for i in 0..n {
                    bus.send(act(1, i as f64)).unwrap();
                }
            });
            s.spawn(|| {
                let mut expected = 0;
                while expected < n {
                    if let Some(m) = bus.recv(SERVER).unwrap() {
                        assert_eq!(m.seq, expected);
                        assert_eq!(m.tensor_payload().unwrap().values()[0], expected as f64);
                        expected += 1;
                    } else {
                        std::thread::yield_now();
                    }
                }
            });
        });
        assert_eq!(bus.traffic().total_bytes, 75 * n as u64);
    }

    #[test]
    fn log_file_has_one_line_per_message() {
        let bus = ChannelBus::new();
        bus.send(act(1, 1.0)).unwrap();
        bus.send(Message::control(SERVER, 1, 3, ControlCode::RoundEnd))
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("messages.ndjson");
        bus.write_log(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let rec: LogRecord = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(rec.kind, MessageType::Control);
        assert_eq!(rec.round, 3);
        assert_eq!(rec.bytes, 20);
    }
}
