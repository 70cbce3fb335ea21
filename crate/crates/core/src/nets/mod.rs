//! Small plain conv nets with hand-written backprop.
//!
//! A net is a stack of stages (3x3 conv + bias + ReLU, stride 1 for the first
//! stage and 2 afterwards) followed by global average pooling and a linear
//! classifier. Each stage's pre-activation output is exposed as a tap.

mod checkpoint;
mod conv;
mod sgd;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use sgd::Sgd;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MgdError, Result};
use crate::feature::FeatureMap;
use conv::ConvShape;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetConfig {
    pub in_channels: usize,
    pub image_size: usize,
    pub widths: Vec<usize>,
    pub classes: usize,
}

impl NetConfig {
    pub fn teacher() -> Self {
        Self { in_channels: 1, image_size: 16, widths: vec![16, 32, 64], classes: 8 }
    }

    pub fn student() -> Self {
        Self { in_channels: 1, image_size: 16, widths: vec![4, 8, 16], classes: 8 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.image_size == 0 || self.classes == 0 {
            return Err(MgdError::Config(format!("degenerate net config {self:?}")));
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(MgdError::Config(format!("stage widths must be non-empty and positive: {:?}", self.widths)));
        }
        Ok(())
    }

    fn conv_shapes(&self) -> Vec<ConvShape> {
        let mut shapes = Vec::with_capacity(self.widths.len());
        let (mut c, mut h) = (self.in_channels, self.image_size);
        for (p, &w) in self.widths.iter().enumerate() {
            let s = ConvShape { in_c: c, out_c: w, stride: if p == 0 { 1 } else { 2 }, in_h: h, in_w: h };
            h = s.out_h();
            c = w;
            shapes.push(s);
        }
        shapes
    }

    /// `(channels, spatial)` of every tap.
    pub fn tap_shapes(&self) -> Vec<(usize, usize)> {
        self.conv_shapes().iter().map(|s| (s.out_c, s.out_spatial())).collect()
    }

    /// Side length of every tap's square feature map.
    pub fn tap_sides(&self) -> Vec<usize> {
        self.conv_shapes().iter().map(|s| s.out_h()).collect()
    }

    pub fn input_len(&self) -> usize {
        self.in_channels * self.image_size * self.image_size
    }
}

/// A named trainable tensor together with its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    pub grad: Vec<f64>,
}

impl Param {
    fn zeros(name: String, shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self { name, shape, value: vec![0.0; n], grad: vec![0.0; n] }
    }
}

/// Everything `backward` needs from one sample's forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    pub logits: Vec<f64>,
    /// Pre-activation output of each stage, `C x (H·W)`.
    pub taps: Vec<FeatureMap>,
    input: Vec<f64>,
    pooled: Vec<f64>,
}

impl Forward {
    /// Post-ReLU output of stage `p`.
    pub fn activation(&self, p: usize) -> Vec<f64> {
        self.taps[p].as_slice().iter().map(|&z| z.max(0.0)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyNet {
    config: NetConfig,
    shapes: Vec<ConvShape>,
    /// conv weights and biases interleaved per stage, then head weight, head bias
    params: Vec<Param>,
}

impl ToyNet {
    /// All parameters zero.
    pub fn zeros(config: NetConfig) -> Result<Self> {
        config.validate()?;
        let shapes = config.conv_shapes();
        let mut params = Vec::with_capacity(2 * shapes.len() + 2);
        for (p, s) in shapes.iter().enumerate() {
            params.push(Param::zeros(format!("conv{p}.weight"), vec![s.out_c, s.in_c, 3, 3]));
            params.push(Param::zeros(format!("conv{p}.bias"), vec![s.out_c]));
        }
        let last = *config.widths.last().expect("validated non-empty");
        params.push(Param::zeros("head.weight".into(), vec![config.classes, last]));
        params.push(Param::zeros("head.bias".into(), vec![config.classes]));
        Ok(Self { config, shapes, params })
    }

    /// He-normal conv weights, `N(0, 1/fan_in)` head weights, zero biases.
    pub fn init<R: Rng + ?Sized>(config: NetConfig, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(config)?;
        for p in net.params.iter_mut().filter(|p| p.name.ends_with("weight")) {
            let fan_in: usize = p.shape[1..].iter().product();
            let gain = if p.name.starts_with("conv") { 2.0 } else { 1.0 };
            let normal = Normal::new(0.0, (gain / fan_in as f64).sqrt()).expect("positive std");
            p.value.iter_mut().for_each(|v| *v = normal.sample(rng));
        }
        Ok(net)
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn trainable_parameter_count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// All parameter values, concatenated in declaration order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn forward(&self, image: &[f64]) -> Result<Forward> {
        if image.len() != self.config.input_len() {
            return Err(MgdError::Dimension(format!(
                "input has {} values, net expects {}",
                image.len(),
                self.config.input_len()
            )));
        }
        let mut taps = Vec::with_capacity(self.shapes.len());
        let mut act: Vec<f64> = image.to_vec();
        for (p, s) in self.shapes.iter().enumerate() {
            let mut z = vec![0.0; s.out_c * s.out_spatial()];
            conv::forward(s, &self.params[2 * p].value, &self.params[2 * p + 1].value, &act, &mut z);
            act = z.iter().map(|&v| v.max(0.0)).collect();
            taps.push(FeatureMap::from_rows(s.out_c, s.out_spatial(), z)?);
        }
        let last = self.shapes.last().expect("validated non-empty");
        let n = last.out_spatial() as f64;
        let pooled: Vec<f64> = act.chunks(last.out_spatial()).map(|c| c.iter().sum::<f64>() / n).collect();

        let (hw, hb) = self.head();
        let logits = (0..self.config.classes)
            .map(|k| hb[k] + pooled.iter().enumerate().map(|(c, g)| hw[k * pooled.len() + c] * g).sum::<f64>())
            .collect();
        Ok(Forward { logits, taps, input: image.to_vec(), pooled })
    }

    pub fn forward_batch(&self, images: &[&[f64]]) -> Result<Vec<Forward>> {
        images.iter().map(|x| self.forward(x)).collect()
    }

    fn head(&self) -> (&[f64], &[f64]) {
        let n = self.params.len();
        (&self.params[n - 2].value, &self.params[n - 1].value)
    }

    /// Accumulates parameter gradients for one sample. `d_taps`, when given,
    /// adds a gradient directly at each stage's pre-activation output on top
    /// of whatever flows back from the layers above.
    pub fn backward(&mut self, fwd: &Forward, d_logits: &[f64], d_taps: Option<&[FeatureMap]>) -> Result<()> {
        let stages = self.shapes.len();
        if d_logits.len() != self.config.classes || fwd.logits.len() != self.config.classes {
            return Err(MgdError::Dimension(format!(
                "logit gradient has {} entries, net has {} classes",
                d_logits.len(),
                self.config.classes
            )));
        }
        if fwd.taps.len() != stages
            || fwd.taps.iter().zip(&self.shapes).any(|(t, s)| t.shape() != (s.out_c, s.out_spatial()))
        {
            return Err(MgdError::Dimension("forward pass does not belong to this network".into()));
        }
        if let Some(d) = d_taps {
            if d.len() != stages || d.iter().zip(&fwd.taps).any(|(g, t)| g.shape() != t.shape()) {
                return Err(MgdError::Dimension("tap gradients do not match tap shapes".into()));
            }
        }

        // head
        let n = self.params.len();
        let width = fwd.pooled.len();
        {
            let (w_part, b_part) = self.params.split_at_mut(n - 1);
            let hw = &mut w_part[n - 2];
            for (k, &dl) in d_logits.iter().enumerate() {
                b_part[0].grad[k] += dl;
                for c in 0..width {
                    hw.grad[k * width + c] += dl * fwd.pooled[c];
                }
            }
        }
        let hw = &self.params[n - 2].value;
        let last_sp = self.shapes[stages - 1].out_spatial();
        let mut d_act = vec![0.0; width * last_sp];
        for c in 0..width {
            let dg: f64 = d_logits.iter().enumerate().map(|(k, dl)| dl * hw[k * width + c]).sum();
            d_act[c * last_sp..(c + 1) * last_sp].iter_mut().for_each(|v| *v = dg / last_sp as f64);
        }

        for p in (0..stages).rev() {
            let s = self.shapes[p];
            let z = fwd.taps[p].as_slice();
            let mut d_z: Vec<f64> = d_act.iter().zip(z).map(|(&d, &zv)| if zv > 0.0 { d } else { 0.0 }).collect();
            if let Some(d) = d_taps {
                d_z.iter_mut().zip(d[p].as_slice()).for_each(|(a, b)| *a += b);
            }
            let input = if p == 0 { fwd.input.clone() } else { fwd.activation(p - 1) };
            let mut d_in = if p > 0 { Some(vec![0.0; s.in_len()]) } else { None };
            let (before, rest) = self.params.split_at_mut(2 * p + 1);
            let weight_param = &mut before[2 * p];
            conv::backward(
                &s,
                &weight_param.value,
                &input,
                &d_z,
                &mut weight_param.grad,
                &mut rest[0].grad,
                d_in.as_deref_mut(),
            );
            if let Some(d) = d_in {
                d_act = d;
            }
        }
        Ok(())
    }
}

/// Softmax cross-entropy for one sample: `(loss, d loss / d logits)`.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(MgdError::Value(format!("label {label} out of range for {} classes", logits.len())));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    let loss = z.ln() + max - logits[label];
    let mut grad: Vec<f64> = exps.iter().map(|e| e / z).collect();
    grad[label] -= 1.0;
    Ok((loss, grad))
}

pub fn argmax(xs: &[f64]) -> usize {
    xs.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> NetConfig {
        NetConfig { in_channels: 1, image_size: 5, widths: vec![3, 4], classes: 3 }
    }

    #[test]
    fn zero_net_gives_zero_outputs() {
        let net = ToyNet::zeros(NetConfig::student()).unwrap();
        let img = vec![0.3; 256];
        let f = net.forward(&img).unwrap();
        assert!(f.logits.iter().all(|&l| l == 0.0));
        assert!(f.taps.iter().all(|t| t.as_slice().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn tap_shapes_follow_strides() {
        assert_eq!(NetConfig::teacher().tap_shapes(), vec![(16, 256), (32, 64), (64, 16)]);
        assert_eq!(NetConfig::student().tap_shapes(), vec![(4, 256), (8, 64), (16, 16)]);
        assert_eq!(NetConfig::student().tap_sides(), vec![16, 8, 4]);
    }

    #[test]
    fn batch_has_no_cross_sample_effects() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = ToyNet::init(tiny(), &mut rng).unwrap();
        let img: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = net.forward_batch(&[&img, &img]).unwrap();
        assert_eq!(out[0].logits, out[1].logits);
        assert_eq!(out[0].taps, out[1].taps);
        let again = net.forward(&img).unwrap();
        assert_eq!(again.logits, out[0].logits);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = ToyNet::init(NetConfig::student(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = ToyNet::init(NetConfig::student(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn taps_are_pre_activation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = ToyNet::init(tiny(), &mut rng).unwrap();
        let img: Vec<f64> = (0..25).map(|i| (i as f64 * 0.9).cos()).collect();
        let f = net.forward(&img).unwrap();
        assert!(f.taps[0].as_slice().iter().any(|&v| v < 0.0));
        // re-running stage 2 on relu(tap 0) reproduces tap 1
        let s = net.shapes[1];
        let mut z = vec![0.0; s.out_c * s.out_spatial()];
        conv::forward(&s, &net.params[2].value, &net.params[3].value, &f.activation(0), &mut z);
        assert_eq!(z, f.taps[1].as_slice());
    }

    #[test]
    fn parameter_count() {
        let net = ToyNet::zeros(NetConfig::student()).unwrap();
        let expected = (4 * 9 + 4) + (8 * 4 * 9 + 8) + (16 * 8 * 9 + 16) + (8 * 16 + 8);
        assert_eq!(net.trainable_parameter_count(), expected);
    }

    #[test]
    fn cross_entropy_gradient() {
        let (loss, grad) = softmax_cross_entropy(&[0.0, 0.0], 1).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert_eq!(grad, vec![0.5, -0.5]);
        assert!(softmax_cross_entropy(&[0.0], 1).is_err());
    }

    #[test]
    fn backward_rejects_foreign_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ToyNet::init(tiny(), &mut rng).unwrap();
        let mut b = ToyNet::init(NetConfig::student(), &mut rng).unwrap();
        let f = a.forward(&[0.1; 25]).unwrap();
        assert!(b.backward(&f, &[0.0; 8], None).is_err());
        assert!(a.clone().backward(&f, &[0.0; 2], None).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut net = ToyNet::init(tiny(), &mut rng).unwrap();
        let img: Vec<f64> = (0..25).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = 1;
        let loss = |net: &ToyNet| softmax_cross_entropy(&net.forward(&img).unwrap().logits, label).unwrap().0;
        let f = net.forward(&img).unwrap();
        let (_, d_logits) = softmax_cross_entropy(&f.logits, label).unwrap();
        net.zero_grad();
        net.backward(&f, &d_logits, None).unwrap();
        let h = 1e-6;
        for pi in 0..net.params.len() {
            for k in 0..net.params[pi].value.len() {
                let mut plus = net.clone();
                plus.params[pi].value[k] += h;
                let mut minus = net.clone();
                minus.params[pi].value[k] -= h;
                let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
                let analytic = net.params[pi].grad[k];
                assert!(
                    (numeric - analytic).abs() <= 1e-5 * numeric.abs().max(analytic.abs()).max(1e-3),
                    "{} [{k}]: {analytic} vs {numeric}",
                    net.params[pi].name
                );
            }
        }
    }
}
