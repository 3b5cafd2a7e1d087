//! Round engines for the five collaborative training protocols.
//!
//! | protocol | client training | averaged at round end        |
//! |----------|-----------------|------------------------------|
//! | FL       | parallel        | full model                   |
//! | SL       | sequential      | nothing                      |
//! | SFv1     | parallel        | client segments and body     |
//! | SFv2     | sequential      | client segments              |
//! | SFv3     | parallel        | body                         |
//!
//! "Parallel" protocols give every client its own copy of the server-side
//! state for the round and aggregate in ascending client-id order, so their
//! result does not depend on the plan's client order. Sequential protocols
//! visit clients in plan order and update one shared body in place.

mod aggregate;
mod exchange;

use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use aggregate::{average_params, select_checkpoint, Checkpoint};
pub use exchange::ServerSession;

use crate::data::ClientDataset;
use crate::nn::{AdamConfig, AdamState, SequentialModel, Tensor};
use crate::split::{split_model, ModelSegments, SplitConfig};
use crate::transport::{client_participant, ChannelBus, Message, MessageType, SERVER};
use crate::{Error, Result};

use aggregate::average_flat;
use exchange::{expect, local_pass, split_pass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Fl,
    Sl,
    Sfv1,
    Sfv2,
    Sfv3,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 5] = [
        ProtocolKind::Fl,
        ProtocolKind::Sl,
        ProtocolKind::Sfv1,
        ProtocolKind::Sfv2,
        ProtocolKind::Sfv3,
    ];

    /// Whether client order within a round affects the result.
    pub fn is_sequential(self) -> bool {
        matches!(self, ProtocolKind::Sl | ProtocolKind::Sfv2)
    }

    pub fn is_split(self) -> bool {
        self != ProtocolKind::Fl
    }

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Fl => "fl",
            ProtocolKind::Sl => "sl",
            ProtocolKind::Sfv1 => "sfv1",
            ProtocolKind::Sfv2 => "sfv2",
            ProtocolKind::Sfv3 => "sfv3",
        }
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown protocol {s:?}")))
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-round schedule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub kind: ProtocolKind,
    /// Client visiting order. Only sequential protocols act on it.
    pub order: Vec<u16>,
    pub epochs: usize,
    pub seed: u64,
}

impl RoundPlan {
    /// Checks that `order` is a permutation of `ids`.
    pub fn validate(&self, ids: &[u16]) -> Result<()> {
        if ids.is_empty() {
            return Err(Error::config("a round needs at least one client"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be at least 1"));
        }
        let mut a = self.order.clone();
        let mut b = ids.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        if a != b {
            return Err(Error::config(format!(
                "order {:?} is not a permutation of clients {:?}",
                self.order, ids
            )));
        }
        Ok(())
    }
}

/// A client's models, optimizers, and local data.
///
/// Under FL `front` holds the whole model and `tail` is empty. Under a
/// vanilla split `tail` is empty.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: u16,
    pub front: SequentialModel,
    pub tail: SequentialModel,
    pub(crate) front_opt: AdamState,
    pub(crate) tail_opt: AdamState,
    pub data: Arc<ClientDataset>,
}

impl ClientState {
    pub fn sample_count(&self) -> usize {
        self.data.train.len()
    }

    fn segment_blob(&self) -> Tensor {
        let mut flat = self.front.flatten_params();
        flat.extend(self.tail.flatten_params());
        Tensor::from_parts(vec![flat.len()], flat)
    }

    fn load_segment_blob(&mut self, blob: &Tensor) -> Result<()> {
        let n = self.front.param_count();
        let values = blob.values();
        if values.len() != n + self.tail.param_count() {
            return Err(Error::protocol("client segment blob has the wrong length"));
        }
        self.front.load_flat(&values[..n])?;
        self.tail.load_flat(&values[n..])
    }
}

/// Server-side models: one shared body (SL, SFv2), one replica per client
/// (SFv1, SFv3, indexed like the client list), or the global model (FL).
#[derive(Debug, Clone)]
pub struct ServerState {
    pub bodies: Vec<SequentialModel>,
    pub(crate) opts: Vec<AdamState>,
}

/// Static settings shared by every round of a run.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub bus: &'a ChannelBus,
    pub split: SplitConfig,
    pub batch_size: usize,
    pub round: u32,
    /// Run the client phases of parallel protocols on worker threads.
    pub threaded: bool,
}

fn blob(model: &SequentialModel) -> Tensor {
    let flat = model.flatten_params();
    Tensor::from_parts(vec![flat.len()], flat)
}

fn into_blob(msg: Message) -> Result<Tensor> {
    msg.into_tensor()
        .ok_or_else(|| Error::protocol("parameter blob without payload"))
}

fn sample_weights(clients: &[ClientState]) -> Vec<f64> {
    clients.iter().map(|c| c.sample_count() as f64).collect()
}

fn check_id_order(clients: &[ClientState]) -> Result<()> {
    if clients.windows(2).any(|w| w[0].id >= w[1].id) {
        return Err(Error::state("clients must be held in ascending id order"));
    }
    Ok(())
}

/// Runs `f` once per client index, on scoped threads when `threaded`.
fn for_each_client<T, F>(items: &mut [T], threaded: bool, f: F) -> Result<()>
where
    T: Send,
    F: Fn(usize, &mut T) -> Result<()> + Sync,
{
    if threaded && items.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = items
                .iter_mut()
                .enumerate()
                .map(|(i, item)| {
                    let f = &f;
                    s.spawn(move || f(i, item))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("client worker panicked"))
                .collect::<Result<Vec<()>>>()
        })?;
    } else {
        for (i, item) in items.iter_mut().enumerate() {
            f(i, item)?;
        }
    }
    Ok(())
}

/// Federated averaging: every client trains its own full copy for one pass,
/// uploads it, and receives the sample-weighted average.
pub fn run_round_fl(
    clients: &mut [ClientState],
    server: &mut ServerState,
    plan: &RoundPlan,
    ctx: &RoundContext<'_>,
) -> Result<()> {
    validate_round(clients, plan, ProtocolKind::Fl)?;
    let (bus, round) = (ctx.bus, ctx.round);
    for_each_client(clients, ctx.threaded, |_, c| {
        let data = c.data.clone();
        local_pass(&mut c.front, &mut c.front_opt, &data.train, ctx.batch_size)?;
        bus.send(Message::tensor(
            MessageType::ParamBlob,
            client_participant(c.id),
            SERVER,
            round,
            blob(&c.front),
        ))?;
        Ok(())
    })?;

    let mut uploads = Vec::with_capacity(clients.len());
    for c in clients.iter() {
        let t = into_blob(expect(
            bus,
            client_participant(c.id),
            SERVER,
            MessageType::ParamBlob,
        )?)?;
        let mut m = server.bodies[0].clone();
        m.load_flat(t.values())?;
        uploads.push(m);
    }
    let refs: Vec<&SequentialModel> = uploads.iter().collect();
    server.bodies[0] = average_params(&refs, &sample_weights(clients))?;
    for c in clients.iter_mut() {
        let me = client_participant(c.id);
        bus.send(Message::tensor(
            MessageType::ParamBlob,
            SERVER,
            me,
            round,
            blob(&server.bodies[0]),
        ))?;
        let t = into_blob(expect(bus, SERVER, me, MessageType::ParamBlob)?)?;
        c.front.load_flat(t.values())?;
    }
    Ok(())
}

/// Split learning: clients train one after another, in plan order, against
/// the single server body. Client segments are never shared.
pub fn run_round_sl(
    clients: &mut [ClientState],
    server: &mut ServerState,
    plan: &RoundPlan,
    ctx: &RoundContext<'_>,
) -> Result<()> {
    validate_round(clients, plan, ProtocolKind::Sl)?;
    sequential_passes(clients, server, plan, ctx)
}

/// SplitFed v1: parallel passes against per-client body replicas, then both
/// the client segments and the body replicas are averaged.
pub fn run_round_sfv1(
    clients: &mut [ClientState],
    server: &mut ServerState,
    plan: &RoundPlan,
    ctx: &RoundContext<'_>,
) -> Result<()> {
    validate_round(clients, plan, ProtocolKind::Sfv1)?;
    parallel_passes(clients, server, ctx)?;
    average_bodies(clients, server)?;
    average_client_segments(clients, ctx)
}

/// SplitFed v2: sequential passes against the shared body, then the client
/// segments are averaged. The body is not.
pub fn run_round_sfv2(
    clients: &mut [ClientState],
    server: &mut ServerState,
    plan: &RoundPlan,
    ctx: &RoundContext<'_>,
) -> Result<()> {
    validate_round(clients, plan, ProtocolKind::Sfv2)?;
    sequential_passes(clients, server, plan, ctx)?;
    average_client_segments(clients, ctx)
}

/// SplitFed v3: parallel passes against per-client body replicas, then only
/// the body replicas are averaged. Client segments stay private.
pub fn run_round_sfv3(
    clients: &mut [ClientState],
    server: &mut ServerState,
    plan: &RoundPlan,
    ctx: &RoundContext<'_>,
) -> Result<()> {
    validate_round(clients, plan, ProtocolKind::Sfv3)?;
    parallel_passes(clients, server, ctx)?;
    average_bodies(clients, server)
}

fn validate_round(clients: &[ClientState], plan: &RoundPlan, kind: ProtocolKind) -> Result<()> {
    if plan.kind != kind {
        return Err(Error::config(format!(
            "{} plan given to the {kind} engine",
            plan.kind
        )));
    }
    check_id_order(clients)?;
    let ids: Vec<u16> = clients.iter().map(|c| c.id).collect();
    plan.validate(&ids)
}

fn sequential_passes(
    clients: &mut [ClientState],
    server: &mut ServerState,
    plan: &RoundPlan,
    ctx: &RoundContext<'_>,
) -> Result<()> {
    if server.bodies.len() != 1 {
        return Err(Error::state(
            "sequential protocols keep exactly one server body",
        ));
    }
    for id in &plan.order {
        let client = clients
            .iter_mut()
            .find(|c| c.id == *id)
            .expect("plan validated against client ids");
        split_pass(
            client,
            &mut server.bodies[0],
            &mut server.opts[0],
            ctx.bus,
            ctx.split.kind,
            ctx.round,
            ctx.batch_size,
        )?;
    }
    Ok(())
}

fn parallel_passes(
    clients: &mut [ClientState],
    server: &mut ServerState,
    ctx: &RoundContext<'_>,
) -> Result<()> {
    if server.bodies.len() != clients.len() {
        return Err(Error::state(
            "parallel split protocols keep one body replica per client",
        ));
    }
    let mut work: Vec<(&mut ClientState, &mut SequentialModel, &mut AdamState)> = clients
        .iter_mut()
        .zip(server.bodies.iter_mut())
        .zip(server.opts.iter_mut())
        .map(|((c, b), o)| (c, b, o))
        .collect();
    for_each_client(&mut work, ctx.threaded, |_, (c, body, opt)| {
        split_pass(
            c,
            body,
            opt,
            ctx.bus,
            ctx.split.kind,
            ctx.round,
            ctx.batch_size,
        )
    })
}

fn average_bodies(clients: &[ClientState], server: &mut ServerState) -> Result<()> {
    let refs: Vec<&SequentialModel> = server.bodies.iter().collect();
    let avg = average_params(&refs, &sample_weights(clients))?;
    for b in &mut server.bodies {
        *b = avg.clone();
    }
    Ok(())
}

fn average_client_segments(clients: &mut [ClientState], ctx: &RoundContext<'_>) -> Result<()> {
    let (bus, round) = (ctx.bus, ctx.round);
    for c in clients.iter() {
        bus.send(Message::tensor(
            MessageType::ParamBlob,
            client_participant(c.id),
            SERVER,
            round,
            c.segment_blob(),
        ))?;
    }
    let mut uploads = Vec::with_capacity(clients.len());
    for c in clients.iter() {
        let t = into_blob(expect(
            bus,
            client_participant(c.id),
            SERVER,
            MessageType::ParamBlob,
        )?)?;
        if t.len() != c.front.param_count() + c.tail.param_count() {
            return Err(Error::protocol("client segment blob has the wrong length"));
        }
        uploads.push(t.into_values());
    }
    let avg = average_flat(&uploads, &sample_weights(clients));
    let avg = Tensor::from_parts(vec![avg.len()], avg);
    for c in clients.iter_mut() {
        let me = client_participant(c.id);
        bus.send(Message::tensor(
            MessageType::ParamBlob,
            SERVER,
            me,
            round,
            avg.clone(),
        ))?;
        let t = into_blob(expect(bus, SERVER, me, MessageType::ParamBlob)?)?;
        c.load_segment_blob(&t)?;
    }
    Ok(())
}

/// Everything one protocol run needs, advanced a round at a time.
pub struct Simulation {
    kind: ProtocolKind,
    split: SplitConfig,
    batch_size: usize,
    threaded: bool,
    clients: Vec<ClientState>,
    server: ServerState,
    bus: ChannelBus,
    round: u32,
}

/// A client's complete model at one point in time, for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientModel {
    pub id: u16,
    pub segments: ModelSegments,
}

impl Simulation {
    /// Sets up clients (sorted by id) and server from one initial model.
    /// Every client starts from the same front/tail copy, and every body
    /// replica from the same body.
    pub fn new(
        kind: ProtocolKind,
        model: SequentialModel,
        split: SplitConfig,
        datasets: Vec<Arc<ClientDataset>>,
        adam: AdamConfig,
        batch_size: usize,
    ) -> Result<Self> {
        adam.validate()?;
        if batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        if datasets.is_empty() {
            return Err(Error::config("a simulation needs at least one client"));
        }
        if !model.is_classifier() {
            return Err(Error::input("model must end in a single sigmoid unit"));
        }
        let mut datasets = datasets;
        datasets.sort_by_key(|d| d.id);
        if datasets.windows(2).any(|w| w[0].id == w[1].id) {
            return Err(Error::config("duplicate client id"));
        }
        if let Some(d) = datasets
            .iter()
            .find(|d| Some(d.train.dim()) != model.in_width())
        {
            return Err(Error::config(format!(
                "client {} has {}-dimensional data, model expects {:?}",
                d.id,
                d.train.dim(),
                model.in_width()
            )));
        }

        let (front, body, tail) = if kind.is_split() {
            let seg = split_model(model, split)?;
            (seg.front, seg.body, seg.tail)
        } else {
            (model, SequentialModel::empty(), SequentialModel::empty())
        };

        let clients: Vec<ClientState> = datasets
            .into_iter()
            .map(|data| ClientState {
                id: data.id,
                front_opt: AdamState::for_model(adam, &front),
                tail_opt: AdamState::for_model(adam, &tail),
                front: front.clone(),
                tail: tail.clone(),
                data,
            })
            .collect();

        let replicas = match kind {
            ProtocolKind::Sfv1 | ProtocolKind::Sfv3 => clients.len(),
            _ => 1,
        };
        // FL keeps the global model in bodies[0]; its optimizers live on the clients.
        let server_model = if kind == ProtocolKind::Fl {
            &front
        } else {
            &body
        };
        let server = ServerState {
            bodies: vec![server_model.clone(); replicas],
            opts: if kind == ProtocolKind::Fl {
                Vec::new()
            } else {
                vec![AdamState::for_model(adam, &body); replicas]
            },
        };

        Ok(Self {
            kind,
            split,
            batch_size,
            threaded: false,
            clients,
            server,
            bus: ChannelBus::new(),
            round: 0,
        })
    }

    /// Runs client phases of FL/SFv1/SFv3 on worker threads.
    pub fn with_threads(mut self, threaded: bool) -> Self {
        self.threaded = threaded;
        self
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn bus(&self) -> &ChannelBus {
        &self.bus
    }

    pub fn rounds_completed(&self) -> u32 {
        self.round
    }

    pub fn client_ids(&self) -> Vec<u16> {
        self.clients.iter().map(|c| c.id).collect()
    }

    /// One global epoch with clients visited in `order`.
    pub fn run_round(&mut self, order: &[u16], seed: u64) -> Result<()> {
        let plan = RoundPlan {
            kind: self.kind,
            order: order.to_vec(),
            epochs: 1,
            seed,
        };
        let ctx = RoundContext {
            bus: &self.bus,
            split: self.split,
            batch_size: self.batch_size,
            round: self.round,
            threaded: self.threaded,
        };
        let (clients, server) = (&mut self.clients, &mut self.server);
        match self.kind {
            ProtocolKind::Fl => run_round_fl(clients, server, &plan, &ctx),
            ProtocolKind::Sl => run_round_sl(clients, server, &plan, &ctx),
            ProtocolKind::Sfv1 => run_round_sfv1(clients, server, &plan, &ctx),
            ProtocolKind::Sfv2 => run_round_sfv2(clients, server, &plan, &ctx),
            ProtocolKind::Sfv3 => run_round_sfv3(clients, server, &plan, &ctx),
        }?;
        if !self.bus.is_idle() {
            return Err(Error::protocol("messages left undelivered at round end"));
        }
        self.round += 1;
        Ok(())
    }

    /// The body client `index` trains against.
    fn body_for(&self, index: usize) -> &SequentialModel {
        match self.server.bodies.len() {
            1 => &self.server.bodies[0],
            _ => &self.server.bodies[index],
        }
    }

    /// Each client's full model: its own front and tail around the body it
    /// uses (FL: the global model).
    pub fn client_models(&self) -> Vec<ClientModel> {
        self.clients
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let segments = if self.kind == ProtocolKind::Fl {
                    ModelSegments {
                        front: self.server.bodies[0].clone(),
                        body: SequentialModel::empty(),
                        tail: SequentialModel::empty(),
                    }
                } else {
                    ModelSegments {
                        front: c.front.clone(),
                        body: self.body_for(i).clone(),
                        tail: c.tail.clone(),
                    }
                };
                ClientModel { id: c.id, segments }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_clients, DataSpec, PartitionManifest};
    use crate::nn::init_model;
    use crate::split::SplitKind;
    use crate::transport::ControlCode;

    fn fixture(n: usize) -> Vec<Arc<ClientDataset>> {
        let m = PartitionManifest::hospitals().scaled(20).unwrap();
        let spec = DataSpec {
            dim: 4,
            ..DataSpec::default()
        };
        generate_clients(n, &m, &spec, 5)
            .unwrap()
            .into_iter()
            .map(Arc::new)
            .collect()
    }

    fn sim(kind: ProtocolKind, split: SplitKind, n: usize) -> Simulation {
        let model = init_model(&[4, 6, 6, 4, 1], 1).unwrap();
        let cfg = SplitConfig::default_for(split, model.len());
        Simulation::new(
            kind,
            model,
            cfg,
            fixture(n),
            AdamConfig {
                lr: 1e-3,
                ..Default::default()
            },
            8,
        )
        .unwrap()
    }

    #[test]
    fn plan_must_be_a_permutation() {
        let mut s = sim(ProtocolKind::Sl, SplitKind::UShaped, 3);
        assert!(matches!(
            s.run_round(&[0, 1], 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(matches!(
            s.run_round(&[0, 1, 1], 0),
            Err(Error::InvalidConfig(_))
        ));
        assert!(s.run_round(&[2, 0, 1], 0).is_ok());
    }

    #[test]
    fn u_shaped_batch_trace() {
        let mut s = sim(ProtocolKind::Sl, SplitKind::UShaped, 1);
        s.run_round(&[0], 0).unwrap();
        let kinds: Vec<MessageType> = s.bus().log().iter().map(|r| r.kind).collect();
        assert_eq!(kinds[0], MessageType::Control);
        assert_eq!(
            &kinds[1..5],
            &[
                MessageType::SmashedActivations,
                MessageType::BodyOutput,
                MessageType::BodyOutputGrad,
                MessageType::SmashedGrad,
            ]
        );
        assert_eq!(*kinds.last().unwrap(), MessageType::Control);
    }

    #[test]
    fn vanilla_batch_trace() {
        let mut s = sim(ProtocolKind::Sl, SplitKind::Vanilla, 1);
        s.run_round(&[0], 0).unwrap();
        let kinds: Vec<MessageType> = s.bus().log().iter().map(|r| r.kind).collect();
        assert_eq!(
            &kinds[1..4],
            &[
                MessageType::SmashedActivations,
                MessageType::Labels,
                MessageType::SmashedGrad,
            ]
        );
    }

    #[test]
    fn sl_body_depends_on_order() {
        let mut a = sim(ProtocolKind::Sl, SplitKind::UShaped, 2);
        let mut b = sim(ProtocolKind::Sl, SplitKind::UShaped, 2);
        a.run_round(&[0, 1], 0).unwrap();
        b.run_round(&[1, 0], 0).unwrap();
        assert!(!a.server().bodies[0].bit_eq(&b.server().bodies[0]));
    }

    #[test]
    fn sfv2_averages_fronts_but_keeps_sequential_body() {
        let mut a = sim(ProtocolKind::Sfv2, SplitKind::UShaped, 3);
        a.run_round(&[0, 1, 2], 0).unwrap();
        let c = a.clients();
        assert!(c[0].front.bit_eq(&c[1].front) && c[1].front.bit_eq(&c[2].front));
        assert!(c[0].tail.bit_eq(&c[2].tail));
        let mut b = sim(ProtocolKind::Sfv2, SplitKind::UShaped, 3);
        b.run_round(&[2, 1, 0], 0).unwrap();
        assert!(!a.server().bodies[0].bit_eq(&b.server().bodies[0]));
    }

    #[test]
    fn sfv3_averages_bodies_only() {
        let mut s = sim(ProtocolKind::Sfv3, SplitKind::UShaped, 3);
        s.run_round(&[1, 2, 0], 0).unwrap();
        let b = &s.server().bodies;
        assert_eq!(b.len(), 3);
        assert!(b[0].bit_eq(&b[1]) && b[1].bit_eq(&b[2]));
        let c = s.clients();
        assert!(!c[0].front.bit_eq(&c[1].front));
        assert_eq!(s.bus().traffic().bytes_of(MessageType::ParamBlob), 0);
    }

    #[test]
    fn sfv1_averages_everything() {
        let mut s = sim(ProtocolKind::Sfv1, SplitKind::UShaped, 3);
        s.run_round(&[0, 1, 2], 0).unwrap();
        let b = &s.server().bodies;
        assert!(b[0].bit_eq(&b[2]));
        let c = s.clients();
        assert!(c[0].front.bit_eq(&c[2].front));
        assert!(s.bus().traffic().bytes_of(MessageType::ParamBlob) > 0);
    }

    #[test]
    fn threaded_parallel_rounds_match_sequential_execution() {
        for kind in [ProtocolKind::Fl, ProtocolKind::Sfv1, ProtocolKind::Sfv3] {
            let mut a = sim(kind, SplitKind::UShaped, 3);
            let mut b = sim(kind, SplitKind::UShaped, 3).with_threads(true);
            for _ in 0..2 {
                a.run_round(&[0, 1, 2], 0).unwrap();
                b.run_round(&[0, 1, 2], 0).unwrap();
            }
            for (x, y) in a.client_models().iter().zip(b.client_models().iter()) {
                assert!(x.segments.concat().bit_eq(&y.segments.concat()), "{kind}");
            }
            assert_eq!(a.bus().traffic(), b.bus().traffic());
        }
    }

    #[test]
    fn fl_clients_hold_the_global_model_after_a_round() {
        let mut s = sim(ProtocolKind::Fl, SplitKind::UShaped, 3);
        s.run_round(&[0, 1, 2], 0).unwrap();
        for c in s.clients() {
            assert!(c.front.bit_eq(&s.server().bodies[0]));
        }
    }

    #[test]
    fn round_start_controls_are_sent_per_client_pass() {
        let mut s = sim(ProtocolKind::Sl, SplitKind::UShaped, 3);
        s.run_round(&[0, 1, 2], 0).unwrap();
        let starts = s
            .bus()
            .log()
            .iter()
            .filter(|r| r.kind == MessageType::Control && r.sender == SERVER)
            .count();
        assert_eq!(starts, 3);
        let _ = ControlCode::RoundStart;
    }

    #[test]
    fn engine_rejects_foreign_plan() {
        let mut s = sim(ProtocolKind::Sl, SplitKind::UShaped, 2);
        let plan = RoundPlan {
            kind: ProtocolKind::Fl,
            order: vec![0, 1],
            epochs: 1,
            seed: 0,
        };
        let ctx = RoundContext {
            bus: &s.bus,
            split: s.split,
            batch_size: 8,
            round: 0,
            threaded: false,
        };
        assert!(run_round_sl(&mut s.clients, &mut s.server, &plan, &ctx).is_err());
    }
}
