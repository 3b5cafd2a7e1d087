mod common;

use common::oracles::{gradient_check, naive_forward, random_tensor, random_trial};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use splitsim_core::nn::{bce_loss, init_model, Tensor};
use splitsim_core::split::{split_model, SplitConfig};

#[test]
fn analytic_gradients_match_central_differences() {
    let worst = gradient_check(100, 17, 1e-6);
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn gradient_check_holds_with_a_coarser_step() {
    let worst = gradient_check(100, 18, 1e-5);
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn forward_matches_naive_loop_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let t = random_trial(&mut rng);
        let (_, expect) = naive_forward(&t.model, &t.x);
        let got = t.model.predict(&t.x).unwrap();
        assert!(got
            .values()
            .iter()
            .zip(&expect)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn composed_segments_equal_uncut_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let model = init_model(&[6, 9, 7, 5, 4, 1], 21).unwrap();
    let x = random_tensor(&mut rng, vec![11, 6], 2.0);
    let labels = Tensor::vector((0..11).map(|i| f64::from(i % 2)).collect()).unwrap();
    let (y, cache) = model.forward(&x).unwrap();
    let (_, g) = bce_loss(&y, &labels).unwrap();
    let (grads, dx) = model.backward(&cache, &g).unwrap();

    for cfg in [
        SplitConfig::u_shaped(1, 4),
        SplitConfig::u_shaped(2, 3),
        SplitConfig::u_shaped(3, 3),
        SplitConfig::vanilla(2, 5),
    ] {
        let seg = split_model(model.clone(), cfg).unwrap();
        let (ys, caches) = seg.composed_forward(&x).unwrap();
        assert!(ys.bit_eq(&y), "{cfg:?}");
        let sg = seg.composed_backward(&caches, &g).unwrap();
        assert!(sg.input.bit_eq(&dx));
        let mut flat = sg.front.flatten();
        flat.extend(sg.body.flatten());
        flat.extend(sg.tail.flatten());
        let want = grads.flatten();
        assert!(flat
            .iter()
            .zip(&want)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
        assert!(seg.concat().bit_eq(&model));
    }
}
