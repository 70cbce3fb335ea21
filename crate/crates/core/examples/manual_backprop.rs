//! Forward and backward through a toy conv net, with a finite-difference
//! check of a few weights.
//!
//! Run: cargo run --example manual_backprop

use mgd::nets::softmax_cross_entropy;
use mgd::{NetConfig, ToyNet};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn loss(net: &ToyNet, image: &[f64], label: usize) -> f64 {
    let fwd = net.forward(image).unwrap();
    softmax_cross_entropy(&fwd.logits, label).unwrap().0
}

fn main() -> mgd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let config = NetConfig { in_channels: 1, image_size: 6, widths: vec![3, 4], classes: 3 };
    let mut net = ToyNet::init(config.clone(), &mut rng)?;
    let image: Vec<f64> = (0..36).map(|_| rng.random_range(-1.0..1.0)).collect();

    let fwd = net.forward(&image)?;
    for (p, tap) in fwd.taps.iter().enumerate() {
        println!("tap {p}: {} channels x {} positions", tap.channels(), tap.spatial());
    }
    let (ce, d_logits) = softmax_cross_entropy(&fwd.logits, 1)?;
    println!("logits {:?}, loss {ce:.4}", fwd.logits);

    net.zero_grad();
    net.backward(&fwd, &d_logits, None)?;
    println!("{} trainable parameters", net.trainable_parameter_count());

    let h = 1e-6;
    for p in 0..net.params().len() {
        let name = net.params()[p].name.clone();
        let analytic = net.params()[p].grad[0];
        let mut probe = net.clone();
        probe.params_mut()[p].value[0] += h;
        let up = loss(&probe, &image, 1);
        probe.params_mut()[p].value[0] -= 2.0 * h;
        let down = loss(&probe, &image, 1);
        println!("{name:>14}[0]: analytic {analytic:+.6e}  numeric {:+.6e}", (up - down) / (2.0 * h));
    }
    Ok(())
}
