#![allow(dead_code)]

pub mod oracles;

use std::sync::Arc;

use splitsim_core::data::{generate_clients, ClientDataset, DataSpec, PartitionManifest};
use splitsim_core::nn::{adam_step, bce_loss, init_model, AdamConfig, AdamState, SequentialModel};
use splitsim_core::protocols::{ProtocolKind, Simulation};
use splitsim_core::split::{SplitConfig, SplitKind};

pub const WIDTHS: [usize; 6] = [8, 16, 16, 16, 8, 1];

/// Clients drawn from the 1/`scale` manifest.
pub fn clients(n: usize, scale: usize, shift_scale: f64, seed: u64) -> Vec<Arc<ClientDataset>> {
    let manifest = PartitionManifest::hospitals().scaled(scale).unwrap();
    let spec = DataSpec {
        shift_scale,
        ..DataSpec::default()
    };
    generate_clients(n, &manifest, &spec, seed)
        .unwrap()
        .into_iter()
        .map(Arc::new)
        .collect()
}

/// Plain minibatch training of the uncut model on one client's batch stream.
pub fn centralized(
    data: &ClientDataset,
    seed: u64,
    adam: AdamConfig,
    batch: usize,
    epochs: usize,
) -> SequentialModel {
    let mut model = init_model(&WIDTHS, seed).unwrap();
    let mut opt = AdamState::for_model(adam, &model);
    for _ in 0..epochs {
        for b in data.train.batches(batch) {
            let (y, cache) = model.forward(&b.features).unwrap();
            let (_, g) = bce_loss(&y, &b.labels).unwrap();
            let (grads, _) = model.backward(&cache, &g).unwrap();
            adam_step(&mut model, &grads, &mut opt).unwrap();
        }
    }
    model
}

pub fn simulation(
    kind: ProtocolKind,
    split: SplitKind,
    data: Vec<Arc<ClientDataset>>,
    seed: u64,
    adam: AdamConfig,
    batch: usize,
) -> Simulation {
    let model = init_model(&WIDTHS, seed).unwrap();
    let cfg = SplitConfig::default_for(split, model.len());
    Simulation::new(kind, model, cfg, data, adam, batch).unwrap()
}

/// Every protocol/split pairing worth exercising.
pub const CONFIGS: [(ProtocolKind, SplitKind); 6] = [
    (ProtocolKind::Sl, SplitKind::UShaped),
    (ProtocolKind::Sl, SplitKind::Vanilla),
    (ProtocolKind::Sfv1, SplitKind::UShaped),
    (ProtocolKind::Sfv2, SplitKind::UShaped),
    (ProtocolKind::Sfv3, SplitKind::UShaped),
    (ProtocolKind::Fl, SplitKind::UShaped),
];

pub fn permutations(items: &[u16]) -> Vec<Vec<u16>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}
