//! Train one short AMP run and render, for one image, each student channel
//! next to the teacher channels it owns and their reductions.
//!
//! Run: cargo run --release --example dump_features -- [out_dir] [tap]

use std::path::PathBuf;

use mgd::experiment::dump_features;
use mgd::trainer::pretrain_teacher;
use mgd::{generate, train, SynthSpec, TrainConfig, TrainData};

fn main() -> mgd::Result<()> {
    let mut args = std::env::args().skip(1);
    let out = PathBuf::from(args.next().unwrap_or_else(|| "features".into()));
    let tap: usize = args.next().map_or(1, |s| s.parse().expect("tap must be an integer"));

    let spec = SynthSpec::default();
    let dataset = generate(&spec)?;
    let split = dataset.split(0.2, 0)?;
    let data = TrainData { dataset: &dataset, split: &split };
    let config = TrainConfig { epochs: 10, teacher_epochs: 15, ..TrainConfig::default() };

    let teacher = pretrain_teacher(&config, data)?;
    let outcome = train(&config, data, Some(&teacher))?;
    let matching = &outcome.matchings[tap];
    println!("tap {tap} matching:\n{}", matching.to_text());

    let files = dump_features(&teacher.net, &outcome.student, matching, dataset.image(split.val[0]), tap, &out)?;
    println!("wrote {} PGM files and ranges.csv to {}", files.len(), out.display());
    Ok(())
}
