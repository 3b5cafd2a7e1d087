//! Per-batch activation/gradient exchange between one client and the
//! server body it trains against.
//!
//! U-shaped, per batch:
//!
//! ```text
//! client --SmashedActivations--> server
//! client <-----BodyOutput------- server
//! client ---BodyOutputGrad-----> server
//! client <----SmashedGrad------- server
//! ```
//!
//! Vanilla, per batch: `SmashedActivations` and `Labels` up, `SmashedGrad`
//! down. A pass is opened by a `RoundStart` control from the server and
//! closed by `ClientDone` from the client.

use crate::data::{Batch, DataSplit};
use crate::nn::{adam_step, bce_loss, AdamState, ForwardCache, SequentialModel, Tensor};
use crate::split::SplitKind;
use crate::transport::{
    client_participant, ChannelBus, ControlCode, Message, MessageType, ParticipantId, SERVER,
};
use crate::{Error, Result};

use super::ClientState;

#[derive(Debug)]
enum Phase {
    Idle,
    AwaitActivations,
    AwaitLabels { smashed: Tensor },
    AwaitBodyGrad { cache: ForwardCache },
    Done,
}

impl Phase {
    fn name(&self) -> &'static str {
        match self {
            Phase::Idle => "idle",
            Phase::AwaitActivations => "awaiting activations",
            Phase::AwaitLabels { .. } => "awaiting labels",
            Phase::AwaitBodyGrad { .. } => "awaiting body-output gradient",
            Phase::Done => "done",
        }
    }
}

/// Server side of one client's pass. Any message arriving in the wrong
/// phase is a protocol violation.
pub struct ServerSession<'a> {
    body: &'a mut SequentialModel,
    opt: &'a mut AdamState,
    kind: SplitKind,
    peer: ParticipantId,
    round: u32,
    phase: Phase,
}

impl<'a> ServerSession<'a> {
    pub fn new(
        body: &'a mut SequentialModel,
        opt: &'a mut AdamState,
        kind: SplitKind,
        peer: ParticipantId,
        round: u32,
    ) -> Self {
        Self {
            body,
            opt,
            kind,
            peer,
            round,
            phase: Phase::Idle,
        }
    }

    pub fn is_done(&self) -> bool {
        matches!(self.phase, Phase::Done)
    }

    /// Grants the client its turn.
    pub fn open(&mut self, bus: &ChannelBus) -> Result<()> {
        if !matches!(self.phase, Phase::Idle) {
            return Err(Error::protocol(format!(
                "session opened while {}",
                self.phase.name()
            )));
        }
        bus.send(Message::control(
            SERVER,
            self.peer,
            self.round,
            ControlCode::RoundStart,
        ))?;
        self.phase = Phase::AwaitActivations;
        Ok(())
    }

    /// Handles every message waiting on the client's channel.
    pub fn pump(&mut self, bus: &ChannelBus) -> Result<()> {
        while let Some(msg) = bus.recv_from(self.peer, SERVER)? {
            self.on_message(msg, bus)?;
        }
        Ok(())
    }

    pub fn on_message(&mut self, msg: Message, bus: &ChannelBus) -> Result<()> {
        if msg.sender != self.peer || msg.round != self.round {
            return Err(Error::protocol(format!(
                "unexpected sender {} / round {} (session is peer {} round {})",
                msg.sender, msg.round, self.peer, self.round
            )));
        }
        let kind = msg.kind();
        let phase = std::mem::replace(&mut self.phase, Phase::Idle);
        self.phase = match (phase, kind) {
            (Phase::AwaitActivations, MessageType::SmashedActivations) => {
                let smashed = into_tensor(msg)?;
                match self.kind {
                    SplitKind::Vanilla => Phase::AwaitLabels { smashed },
                    SplitKind::UShaped => {
                        let (out, cache) = self.body.forward(&smashed)?;
                        self.send(bus, MessageType::BodyOutput, out)?;
                        Phase::AwaitBodyGrad { cache }
                    }
                }
            }
            (Phase::AwaitLabels { smashed }, MessageType::Labels) => {
                let labels = into_tensor(msg)?;
                let (probs, cache) = self.body.forward(&smashed)?;
                let (_, loss_grad) = bce_loss(&probs, &labels)?;
                self.backward_and_reply(bus, &cache, &loss_grad)?;
                Phase::AwaitActivations
            }
            (Phase::AwaitBodyGrad { cache }, MessageType::BodyOutputGrad) => {
                let grad = into_tensor(msg)?;
                self.backward_and_reply(bus, &cache, &grad)?;
                Phase::AwaitActivations
            }
            (Phase::AwaitActivations, MessageType::Control)
                if msg.control_code() == Some(ControlCode::ClientDone) =>
            {
                Phase::Done
            }
            (phase, kind) => {
                let what = if kind == MessageType::Labels && self.kind == SplitKind::UShaped {
                    " (labels never leave the client in a u-shaped split)"
                } else {
                    ""
                };
                let err = Error::protocol(format!(
                    "server received {kind} while {}{what}",
                    phase.name()
                ));
                self.phase = phase;
                return Err(err);
            }
        };
        Ok(())
    }

    fn backward_and_reply(
        &mut self,
        bus: &ChannelBus,
        cache: &ForwardCache,
        out_grad: &Tensor,
    ) -> Result<()> {
        let (grads, smashed_grad) = self.body.backward(cache, out_grad)?;
        adam_step(self.body, &grads, self.opt)?;
        self.send(bus, MessageType::SmashedGrad, smashed_grad)
    }

    fn send(&self, bus: &ChannelBus, kind: MessageType, t: Tensor) -> Result<()> {
        bus.send(Message::tensor(kind, SERVER, self.peer, self.round, t))?;
        Ok(())
    }
}

fn into_tensor(msg: Message) -> Result<Tensor> {
    let kind = msg.kind();
    msg.into_tensor()
        .ok_or_else(|| Error::protocol(format!("{kind} without a tensor payload")))
}

/// Receives the next message on `sender -> receiver`, requiring `kind`.
pub(crate) fn expect(
    bus: &ChannelBus,
    sender: ParticipantId,
    receiver: ParticipantId,
    kind: MessageType,
) -> Result<Message> {
    let msg = bus.recv_from(sender, receiver)?.ok_or_else(|| {
        Error::protocol(format!(
            "participant {receiver} expected {kind} from {sender}, channel empty"
        ))
    })?;
    if msg.kind() != kind {
        return Err(Error::protocol(format!(
            "participant {receiver} expected {kind} from {sender}, got {}",
            msg.kind()
        )));
    }
    Ok(msg)
}

fn client_batch(
    client: &mut ClientState,
    server: &mut ServerSession<'_>,
    bus: &ChannelBus,
    batch: &Batch,
    kind: SplitKind,
    round: u32,
) -> Result<()> {
    let me = client_participant(client.id);
    let (smashed, front_cache) = client.front.forward(&batch.features)?;
    bus.send(Message::tensor(
        MessageType::SmashedActivations,
        me,
        SERVER,
        round,
        smashed,
    ))?;
    if kind == SplitKind::Vanilla {
        bus.send(Message::tensor(
            MessageType::Labels,
            me,
            SERVER,
            round,
            batch.labels.clone(),
        ))?;
    }
    server.pump(bus)?;

    if kind == SplitKind::UShaped {
        let body_out = into_tensor(expect(bus, SERVER, me, MessageType::BodyOutput)?)?;
        let (probs, tail_cache) = client.tail.forward(&body_out)?;
        let (_, loss_grad) = bce_loss(&probs, &batch.labels)?;
        let (tail_grads, body_out_grad) = client.tail.backward(&tail_cache, &loss_grad)?;
        adam_step(&mut client.tail, &tail_grads, &mut client.tail_opt)?;
        bus.send(Message::tensor(
            MessageType::BodyOutputGrad,
            me,
            SERVER,
            round,
            body_out_grad,
        ))?;
        server.pump(bus)?;
    }

    let smashed_grad = into_tensor(expect(bus, SERVER, me, MessageType::SmashedGrad)?)?;
    let (front_grads, _) = client.front.backward(&front_cache, &smashed_grad)?;
    adam_step(&mut client.front, &front_grads, &mut client.front_opt)
}

/// One full local pass of `client` over `split` against `body`.
pub(crate) fn split_pass(
    client: &mut ClientState,
    body: &mut SequentialModel,
    body_opt: &mut AdamState,
    bus: &ChannelBus,
    kind: SplitKind,
    round: u32,
    batch_size: usize,
) -> Result<()> {
    let me = client_participant(client.id);
    let data = client.data.clone();
    let mut server = ServerSession::new(body, body_opt, kind, me, round);
    server.open(bus)?;
    expect(bus, SERVER, me, MessageType::Control)?;
    for batch in data.train.batches(batch_size) {
        client_batch(client, &mut server, bus, &batch, kind, round)?;
    }
    bus.send(Message::control(me, SERVER, round, ControlCode::ClientDone))?;
    server.pump(bus)?;
    if !server.is_done() {
        return Err(Error::protocol("server did not close the client pass"));
    }
    Ok(())
}

/// Plain local training of a full model, one pass over `split`.
pub(crate) fn local_pass(
    model: &mut SequentialModel,
    opt: &mut AdamState,
    split: &DataSplit,
    batch_size: usize,
) -> Result<()> {
    for batch in split.batches(batch_size) {
        let (probs, cache) = model.forward(&batch.features)?;
        let (_, loss_grad) = bce_loss(&probs, &batch.labels)?;
        let (grads, _) = model.backward(&cache, &loss_grad)?;
        adam_step(model, &grads, opt)?;
    }
    Ok(())
}
