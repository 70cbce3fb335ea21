//! Balanced and sparse channel matching between a wide and a narrow feature map.
//!
//! Six teacher channels are noisy copies of two student channels; the balanced
//! solver gives each student channel three of them, the sparse solver picks one.
//!
//! Run: cargo run --example channel_matching

use mgd::{channel_distance, matching_cost, solve_balanced, solve_sparse, FeatureMap, Matching};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> mgd::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 16;
    let student = FeatureMap::from_rows(2, n, (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect())?;

    // teacher channel j copies student channel `source[j]`
    let source = [1, 0, 0, 1, 1, 0];
    let mut rows = Vec::new();
    for &i in &source {
        rows.extend(student.channel(i).iter().map(|v| v + rng.random_range(-0.1..0.1)));
    }
    let teacher = FeatureMap::from_rows(source.len(), n, rows)?;

    let d = channel_distance(&student, &teacher)?;
    println!("distance matrix (student x teacher):\n{:.2}", d.view());

    let m = solve_balanced(&d)?;
    println!("balanced, alpha = {}:\n{}", m.alpha(), m.to_text());
    println!("cost {:.3}", matching_cost(&d, &m));

    let fixed = Matching::contiguous_blocks(2, 6)?;
    println!("contiguous blocks cost {:.3} ({} channels differ)", matching_cost(&d, &fixed), fixed.hamming(&m));

    let sparse = solve_sparse(&d)?;
    println!("sparse picks {:?}, cost {:.3}", sparse.pairs(), sparse.cost(&d));

    // With 7 teacher channels one is left over and gets shaved.
    let mut rows = teacher.as_slice().to_vec();
    rows.extend((0..n).map(|_| rng.random_range(-3.0..3.0)));
    let wider = FeatureMap::from_rows(7, n, rows)?;
    let m7 = solve_balanced(&channel_distance(&student, &wider)?)?;
    println!("7 teacher channels, shaved: {:?}", m7.shaved().collect::<Vec<_>>());
    Ok(())
}
