//! Independent oracles shared by the integration tests. Nothing here calls
//! the solvers under test.

#![allow(dead_code)]

use mgd::{CostMatrix, FeatureMap};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(0.0..scale))
}

pub fn random_cost(rng: &mut impl Rng, students: usize, teachers: usize) -> CostMatrix {
    CostMatrix::new(random_matrix(rng, students, teachers, 10.0), 1).unwrap()
}

pub fn random_features(rng: &mut impl Rng, channels: usize, spatial: usize) -> FeatureMap {
    FeatureMap::new(Array2::from_shape_fn((channels, spatial), |_| rng.random_range(-3.0..3.0))).unwrap()
}

/// Calls `f` with every owner array over `teachers` channels in which each of
/// the `students` owns exactly `alpha` teachers and the rest are unowned.
pub fn for_each_balanced_owner(students: usize, teachers: usize, alpha: usize, mut f: impl FnMut(&[Option<usize>])) {
    fn go(
        j: usize,
        owner: &mut Vec<Option<usize>>,
        load: &mut Vec<usize>,
        left_out: usize,
        alpha: usize,
        f: &mut dyn FnMut(&[Option<usize>]),
    ) {
        if j == owner.len() {
            if load.iter().all(|&l| l == alpha) {
                f(owner);
            }
            return;
        }
        if left_out > 0 {
            owner[j] = None;
            go(j + 1, owner, load, left_out - 1, alpha, f);
        }
        for i in 0..load.len() {
            if load[i] < alpha {
                load[i] += 1;
                owner[j] = Some(i);
                go(j + 1, owner, load, left_out, alpha, f);
                load[i] -= 1;
            }
        }
        owner[j] = None;
    }
    let left_out = teachers - alpha * students;
    go(0, &mut vec![None; teachers], &mut vec![0; students], left_out, alpha, &mut f);
}

/// Minimum of Σ d[owner[j], j] over all balanced owner arrays.
pub fn exhaustive_balanced_min(d: &CostMatrix) -> f64 {
    let (cs, ct) = (d.students(), d.teachers());
    let alpha = ct / cs;
    let mut best = f64::INFINITY;
    for_each_balanced_owner(cs, ct, alpha, |owner| {
        let c: f64 = owner.iter().enumerate().filter_map(|(j, o)| o.map(|i| d.get(i, j))).sum();
        best = best.min(c);
    });
    best
}

/// Minimum of Σ d[i, pick[i]] over all injective picks.
pub fn exhaustive_injective_min(d: &CostMatrix) -> f64 {
    fn go(i: usize, used: &mut Vec<bool>, acc: f64, d: &CostMatrix, best: &mut f64) {
        if i == d.students() {
            *best = best.min(acc);
            return;
        }
        for j in 0..d.teachers() {
            if !used[j] {
                used[j] = true;
                go(i + 1, used, acc + d.get(i, j), d, best);
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(0, &mut vec![false; d.teachers()], 0.0, d, &mut best);
    best
}

/// Minimum of Σ a[i, σ(i)] over all permutations, by Heap's algorithm.
pub fn exhaustive_square_min(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut perm: Vec<usize> = (0..n).collect();
    let cost = |p: &[usize]| p.iter().enumerate().map(|(i, &j)| a[[i, j]]).sum::<f64>();
    let mut best = cost(&perm);
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    best
}

/// Central difference of `f` along coordinate `k` of `x`.
pub fn central_difference(f: &mut impl FnMut(&[f64]) -> f64, x: &[f64], k: usize, h: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[k] += h;
    let mut xm = x.to_vec();
    xm[k] -= h;
    (f(&xp) - f(&xm)) / (2.0 * h)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
