//! AMP against max and average pooling (and fixed contiguous blocks) over
//! several seeds. Writes the usual run directory.
//!
//! Run: cargo run --release --example pooling_comparison -- [seeds] [out_dir]

use mgd::experiment::{run_experiment, Arm, ExperimentConfig};

fn main() -> mgd::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(3, |s| s.parse().expect("seeds must be an integer"));
    let out_dir = args.next().unwrap_or_else(|| "runs/pooling".into()).into();

    let config = ExperimentConfig {
        arms: vec![Arm::Baseline, Arm::Amp, Arm::Mp, Arm::Avgp, Arm::NoMatching],
        seeds: (0..seeds).collect(),
        out_dir,
        ..ExperimentConfig::default()
    };
    let report = run_experiment(&config)?;

    println!("teacher val acc per seed: {:?}", report.teacher_acc);
    println!("{:<12} {:>8} {:>8}", "arm", "mean", "std");
    for row in &report.summary {
        println!("{:<12} {:>8.4} {:>8.4}", row.arm.name(), row.mean_acc, row.std_acc);
    }
    for arm in [Arm::Amp, Arm::Mp, Arm::Avgp] {
        let falling = report
            .runs_of(arm)
            .filter(|r| {
                let c = r.log.matching_costs();
                c.last() < c.first()
            })
            .count();
        println!("{}: matching cost fell in {falling}/{seeds} seeds", arm.name());
    }
    Ok(())
}
