//! Exact square assignment with the O(n³) solver, checked against brute force.
//!
//! Run: cargo run --example assignment

use mgd::{brute_force_assignment, hungarian, BIG};
use ndarray::{array, s, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mgd::Result<()> {
    let cost = array![[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
    let fast = hungarian(cost.view())?;
    println!("cost matrix:\n{cost}");
    println!("rows -> cols {:?}, total {}", fast.permutation.as_slice(), fast.total_cost);

    // A 3x4 problem becomes square with a row of BIG; the column that row
    // takes is the one left unassigned.
    let mut padded = Array2::from_elem((4, 4), BIG);
    padded.slice_mut(s![..3, ..]).assign(&array![[4.0, 1.0, 3.0, 0.5], [2.0, 0.0, 5.0, 6.0], [3.0, 2.0, 2.0, 1.0]]);
    let p = hungarian(padded.view())?;
    println!("3x4 padded: rows -> cols {:?}, real cost {}", &p.permutation.as_slice()[..3], p.total_cost - BIG);

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for n in 1..=7 {
        for _ in 0..20 {
            let a = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
            let gap = (hungarian(a.view())?.total_cost - brute_force_assignment(a.view())?.total_cost).abs();
            worst = worst.max(gap);
        }
    }
    println!("140 random matrices up to 7x7, largest gap to brute force: {worst:.2e}");
    Ok(())
}
