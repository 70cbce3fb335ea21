//! Generate the grating dataset and export it as PGM images plus labels.csv.
//!
//! Run: cargo run --example synthetic_data -- [out_dir] [noise_sigma]

use std::path::PathBuf;

use mgd::{generate, SynthSpec};

fn main() -> mgd::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "synthetic".into()));
    let noise = args.next().map_or(Ok(0.55), |s| s.parse()).expect("noise_sigma must be a number");

    let spec = SynthSpec { noise_sigma: noise, samples_per_class: 4, ..SynthSpec::default() };
    let data = generate(&spec)?;
    data.export(&out)?;

    let split = data.split(0.2, spec.seed)?;
    println!(
        "{} images of {}x{} in {} classes -> {} (train {}, val {})",
        data.len(),
        data.image_size(),
        data.image_size(),
        data.n_classes(),
        out.display(),
        split.train.len(),
        split.val.len()
    );
    Ok(())
}
