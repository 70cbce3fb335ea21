//! Deterministic synthetic image classification data.
//!
//! Class `c` of `K` is a sinusoidal grating at orientation `π·c/K` whose
//! spatial frequency alternates between two values for even and odd classes,
//! under a soft circular window. Samples differ only by i.i.d. Gaussian pixel
//! noise; pixels are clamped to [-1, 1].

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{MgdError, Result};
use crate::pgm::GrayImage;

/// Peak amplitude of the clean class pattern.
pub const PATTERN_AMPLITUDE: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub image_size: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self { n_classes: 8, samples_per_class: 40, image_size: 16, noise_sigma: 0.55, seed: 0 }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(MgdError::Config(format!("need at least 2 classes, got {}", self.n_classes)));
        }
        if self.samples_per_class == 0 || self.image_size < 2 {
            return Err(MgdError::Config("samples_per_class and image_size must be positive".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(MgdError::Config(format!("noise_sigma must be >= 0, got {}", self.noise_sigma)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    image_size: usize,
    n_classes: usize,
    images: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_size(&self) -> usize {
        self.image_size
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn image(&self, i: usize) -> &[f64] {
        let len = self.image_size * self.image_size;
        &self.images[i * len..(i + 1) * len]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Stratified split: `val_fraction` of every class goes to validation,
    /// chosen by a shuffle seeded with `seed`. Both index lists are sorted.
    pub fn split(&self, val_fraction: f64, seed: u64) -> Result<Split> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(MgdError::Config(format!("validation fraction {val_fraction} not in [0, 1)")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut train = Vec::new();
        let mut val = Vec::new();
        for c in 0..self.n_classes {
            let mut members: Vec<usize> = (0..self.len()).filter(|&i| self.labels[i] == c).collect();
            members.shuffle(&mut rng);
            let n_val = (members.len() as f64 * val_fraction).round() as usize;
            val.extend_from_slice(&members[..n_val]);
            train.extend_from_slice(&members[n_val..]);
        }
        train.sort_unstable();
        val.sort_unstable();
        Ok(Split { train, val })
    }

    /// Writes `img_<index>.pgm` per sample (pixels mapped from [-1,1]) and a
    /// `labels.csv` with `index,file,label`.
    pub fn export(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut labels = csv::Writer::from_path(dir.join("labels.csv"))?;
        labels.write_record(["index", "file", "label"])?;
        for i in 0..self.len() {
            let pixels = self.image(i).iter().map(|v| ((v + 1.0) * 0.5 * 255.0).round() as u8).collect();
            let name = format!("img_{i:05}.pgm");
            GrayImage { width: self.image_size, height: self.image_size, pixels }.write(&dir.join(&name))?;
            labels.write_record([i.to_string(), name, self.labels[i].to_string()])?;
        }
        labels.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
}

/// The noise-free pattern for `class`.
pub fn class_pattern(class: usize, n_classes: usize, size: usize) -> Vec<f64> {
    let theta = PI * class as f64 / n_classes as f64;
    let cycles = if class.is_multiple_of(2) { 2.0 } else { 3.5 };
    let (c, s) = (theta.cos(), theta.sin());
    let centre = (size as f64 - 1.0) / 2.0;
    let radius = size as f64 / 2.0;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let (dx, dy) = (x as f64 - centre, y as f64 - centre);
            let along = dx * c + dy * s;
            let r2 = (dx * dx + dy * dy) / (radius * radius);
            let window = (-r2 * 1.5).exp();
            out.push(PATTERN_AMPLITUDE * window * (2.0 * PI * cycles * along / size as f64).sin());
        }
    }
    out
}

pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let size = spec.image_size;
    let patterns: Vec<Vec<f64>> = (0..spec.n_classes).map(|c| class_pattern(c, spec.n_classes, size)).collect();
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| MgdError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let total = spec.n_classes * spec.samples_per_class;
    let mut images = Vec::with_capacity(total * size * size);
    let mut labels = Vec::with_capacity(total);
    for i in 0..total {
        let class = i % spec.n_classes;
        for &p in &patterns[class] {
            let v = if spec.noise_sigma > 0.0 { p + noise.sample(&mut rng) } else { p };
            images.push(v.clamp(-1.0, 1.0));
        }
        labels.push(class);
    }
    Ok(Dataset { image_size: size, n_classes: spec.n_classes, images, labels })
}
