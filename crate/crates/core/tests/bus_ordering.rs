use std::sync::Arc;

use splitsim_core::nn::Tensor;
use splitsim_core::transport::{client_participant, ChannelBus, Message, MessageType, SERVER};

#[test]
fn interleaved_producers_keep_per_channel_order() {
    let bus = Arc::new(ChannelBus::new());
    let per_client = 200;
    std::thread::scope(|s| {
        for k in 0..4u16 {
            let bus = bus.clone();
            s.spawn(move || {
                for i in 0..per_client {
                    let t = Tensor::new(vec![1, 2], vec![f64::from(k), i as f64]).unwrap();
                    bus.send(Message::tensor(
                        MessageType::SmashedActivations,
                        client_participant(k),
                        SERVER,
                        0,
                        t,
                    ))
                    .unwrap();
                }
            });
        }
    });

    let mut next = [0u32; 4];
    let mut total = 0;
    while let Some(m) = bus.recv(SERVER).unwrap() {
        let k = usize::from(m.sender - 1);
        let v = m.tensor_payload().unwrap().values().to_vec();
        assert_eq!(v[0], k as f64);
        assert_eq!(v[1], f64::from(next[k]));
        assert_eq!(m.seq, next[k]);
        next[k] += 1;
        total += 1;
    }
    assert_eq!(total, 4 * per_client);
    assert_eq!(bus.traffic().total_bytes, 4 * per_client as u64 * 43);
    for k in 0..4u16 {
        assert_eq!(
            bus.channel_bytes(client_participant(k), SERVER),
            per_client as u64 * 43
        );
    }
}
