//! The five parameter-free reducers applied to one matched group.
//!
//! Run: cargo run --example reducers

use mgd::{reduce, solve_sparse, CostMatrix, FeatureMap, Matching, ReducerKind};
use ndarray::array;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> mgd::Result<()> {
    // four teacher channels over three positions, all owned by student channel 0
    let teacher = FeatureMap::new(array![
        [0.5, -2.0, 0.1],
        [1.5, 0.3, -0.2],
        [-3.0, 0.4, 0.0],
        [0.2, 1.0, -0.1],
    ])?;
    let m = Matching::new(vec![Some(0); 4], 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    println!("teacher:\n{}", teacher.view());
    for kind in ReducerKind::ALL {
        let out = if kind == ReducerKind::Sm {
            // SM keeps the single teacher channel the sparse solver picked
            let d = CostMatrix::new(array![[3.0, 1.0, 4.0, 2.0]], 1)?;
            let pick = solve_sparse(&d)?.to_matching();
            reduce(kind, &teacher, &pick, &mut rng)?
        } else {
            reduce(kind, &teacher, &m, &mut rng)?
        };
        println!("{:>5}: {:?}", kind.name(), out.as_slice());
    }
    // AMP keeps the signed value of largest magnitude: -3.0, -2.0, -0.2.
    Ok(())
}
