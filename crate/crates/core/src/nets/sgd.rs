use super::ToyNet;

/// Momentum SGD with L2 weight decay:
/// `v <- momentum·v + (g + wd·w)`, `w <- w - lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd {
    pub momentum: f64,
    pub weight_decay: f64,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(net: &ToyNet, momentum: f64, weight_decay: f64) -> Self {
        let velocity = net.params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self { momentum, weight_decay, velocity }
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }

    pub fn step(&mut self, net: &mut ToyNet, lr: f64) {
        for (p, vel) in net.params_mut().iter_mut().zip(&mut self.velocity) {
            for ((w, &g), v) in p.value.iter_mut().zip(&p.grad).zip(vel.iter_mut()) {
                *v = self.momentum * *v + g + self.weight_decay * *w;
                *w -= lr * *v;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::NetConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net_with_grads() -> ToyNet {
        let cfg = NetConfig { in_channels: 1, image_size: 3, widths: vec![2], classes: 2 };
        let mut net = ToyNet::init(cfg, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        for (k, p) in net.params_mut().iter_mut().enumerate() {
            for (i, g) in p.grad.iter_mut().enumerate() {
                *g = 0.1 * (k + 1) as f64 - 0.03 * i as f64;
            }
        }
        net
    }

    #[test]
    fn zero_lr_keeps_weights() {
        let mut net = net_with_grads();
        let before = net.flat_parameters();
        let mut opt = Sgd::new(&net, 0.9, 5e-4);
        opt.step(&mut net, 0.0);
        assert_eq!(net.flat_parameters(), before);
    }

    #[test]
    fn plain_step() {
        let mut net = net_with_grads();
        let before = net.clone();
        let mut opt = Sgd::new(&net, 0.0, 0.0);
        opt.step(&mut net, 0.05);
        for (a, b) in net.params().iter().zip(before.params()) {
            for ((w, w0), g) in a.value.iter().zip(&b.value).zip(&b.grad) {
                assert_eq!(*w, w0 - 0.05 * g);
            }
        }
    }

    #[test]
    fn momentum_recursion_two_steps() {
        // scalar recomputation: v1 = g + wd·w0, w1 = w0 - lr·v1,
        // v2 = m·v1 + g + wd·w1, w2 = w1 - lr·v2 (gradient held fixed)
        let (lr, m, wd) = (0.1, 0.9, 5e-4);
        let mut net = net_with_grads();
        let before = net.clone();
        let mut opt = Sgd::new(&net, m, wd);
        opt.step(&mut net, lr);
        opt.step(&mut net, lr);
        for (a, b) in net.params().iter().zip(before.params()) {
            for ((w, &w0), &g) in a.value.iter().zip(&b.value).zip(&b.grad) {
                let v1 = g + wd * w0;
                let w1 = w0 - lr * v1;
                let v2 = m * v1 + g + wd * w1;
                let w2 = w1 - lr * v2;
                assert!((w - w2).abs() < 1e-15);
            }
        }
    }
}
