//! Coordinate descent on one seed: pretrain a teacher, then alternate
//! matching rounds with SGD epochs on the student and print the trace.
//!
//! Run: cargo run --release --example toy_training -- [reducer] [seed]

use mgd::trainer::pretrain_teacher;
use mgd::{generate, train, ReducerKind, SynthSpec, TrainConfig, TrainData};

fn main() -> mgd::Result<()> {
    let mut args = std::env::args().skip(1);
    let reducer: ReducerKind = args.next().map_or(Ok(ReducerKind::Amp), |s| s.parse())?;
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed must be an integer"));

    let spec = SynthSpec { seed, ..SynthSpec::default() };
    let dataset = generate(&spec)?;
    let split = dataset.split(0.2, seed)?;
    let data = TrainData { dataset: &dataset, split: &split };
    let config = TrainConfig { seed, reducer, ..TrainConfig::default() };

    let teacher = pretrain_teacher(&config, data)?;
    println!("teacher val acc {:.3}", teacher.val_accuracy);

    let baseline = train(&config, data, None)?;
    let outcome = train(&config, data, Some(&teacher))?;
    let churn = outcome.log.churn();

    println!("round epoch  cost(per tap)                 total   churn");
    for (k, round) in outcome.log.rounds.iter().enumerate() {
        let per_tap: Vec<String> = round.costs.iter().map(|c| format!("{c:8.1}")).collect();
        let moved = if k == 0 { "-".to_string() } else { churn[k - 1].to_string() };
        println!("{k:5} {:5}  {}  {:8.1} {moved:>5}", round.epoch, per_tap.join(" "), round.total_cost());
    }
    println!(
        "val acc: student alone {:.3}, with {} distillation {:.3}",
        baseline.log.final_val_acc(),
        reducer.name(),
        outcome.log.final_val_acc()
    );
    Ok(())
}
