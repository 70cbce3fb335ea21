//! Exact min-cost linear assignment on square cost matrices.
//!
//! [`hungarian`] is the shortest-augmenting-path form of the Kuhn-Munkres
//! method with row/column potentials, O(n³). [`brute_force_assignment`]
//! enumerates all permutations and exists as an independent oracle for small
//! matrices.

use ndarray::{Array2, ArrayView2};

use crate::error::{MgdError, Result};

/// Sentinel cost for padding rows. Finite so that sums stay well defined.
pub const BIG: f64 = 1e10;

/// Largest side accepted by [`brute_force_assignment`].
pub const BRUTE_FORCE_MAX_N: usize = 9;

/// A bijection rows -> columns; `assign[i]` is the column matched to row `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    assign: Vec<usize>,
}

impl Permutation {
    pub fn new(assign: Vec<usize>) -> Result<Self> {
        let n = assign.len();
        let mut seen = vec![false; n];
        for &c in &assign {
            if c >= n || seen[c] {
                return Err(MgdError::Value(format!("{assign:?} is not a permutation")));
            }
            seen[c] = true;
        }
        Ok(Self { assign })
    }

    pub fn identity(n: usize) -> Self {
        Self { assign: (0..n).collect() }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.assign
    }

    pub fn len(&self) -> usize {
        self.assign.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assign.is_empty()
    }

    /// Σ_i cost[i, assign[i]], summed in row order.
    pub fn cost(&self, cost: ArrayView2<'_, f64>) -> f64 {
        self.assign.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum()
    }

    pub fn into_vec(self) -> Vec<usize> {
        self.assign
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub permutation: Permutation,
    pub total_cost: f64,
}

fn validate_square(cost: ArrayView2<'_, f64>) -> Result<usize> {
    let (rows, cols) = cost.dim();
    if rows != cols {
        return Err(MgdError::Dimension(format!("cost matrix is {rows}x{cols}, expected square")));
    }
    if rows == 0 {
        return Err(MgdError::Dimension("cost matrix is empty".into()));
    }
    for (idx, &c) in cost.indexed_iter() {
        if !c.is_finite() {
            return Err(MgdError::Value(format!("non-finite cost {c} at {idx:?}")));
        }
        if c < 0.0 {
            return Err(MgdError::Value(format!("negative cost {c} at {idx:?}")));
        }
    }
    Ok(rows)
}

/// Solves min Σ_i cost[i, π(i)] over permutations π.
///
/// Each row is shifted by its minimum before solving. This leaves the argmin
/// unchanged and turns rows made entirely of [`BIG`] into exact zeros, so
/// padding never mixes 1e10-scale potentials with the real costs.
pub fn hungarian(cost: ArrayView2<'_, f64>) -> Result<Assignment> {
    let n = validate_square(cost)?;

    let mut reduced = Array2::<f64>::zeros((n, n));
    for (i, row) in cost.rows().into_iter().enumerate() {
        let min = row.iter().copied().fold(f64::INFINITY, f64::min);
        for (j, &c) in row.iter().enumerate() {
            reduced[[i, j]] = c - min;
        }
    }

    // 1-based bookkeeping: index 0 is the virtual root column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut row_of_col = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![0.0f64; n + 1];
    let mut used = vec![false; n + 1];

    for i in 1..=n {
        row_of_col[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|m| *m = f64::INFINITY);
        used.iter_mut().for_each(|u| *u = false);

        loop {
            used[j0] = true;
            let i0 = row_of_col[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = reduced[[i0 - 1, j - 1]] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[row_of_col[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of_col[j0] == 0 {
                break;
            }
        }

        // augment along the alternating path
        loop {
            let j1 = way[j0];
            row_of_col[j0] = row_of_col[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut assign = vec![0usize; n];
    for j in 1..=n {
        assign[row_of_col[j] - 1] = j - 1;
    }
    let permutation = Permutation { assign };
    let total_cost = permutation.cost(cost);
    Ok(Assignment { permutation, total_cost })
}

/// Exhaustive search over all n! permutations in lexicographic order.
///
/// Only a strictly smaller total replaces the incumbent, so among tied optima
/// the lexicographically smallest assignment is returned.
pub fn brute_force_assignment(cost: ArrayView2<'_, f64>) -> Result<Assignment> {
    let n = validate_square(cost)?;
    if n > BRUTE_FORCE_MAX_N {
        return Err(MgdError::Dimension(format!(
            "brute force limited to n <= {BRUTE_FORCE_MAX_N}, got {n}"
        )));
    }

    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = perm.clone();
    let mut best_cost = f64::INFINITY;
    loop {
        let c: f64 = perm.iter().enumerate().map(|(i, &j)| cost[[i, j]]).sum();
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
        if !next_permutation(&mut perm) {
            break;
        }
    }
    Ok(Assignment { permutation: Permutation { assign: best }, total_cost: best_cost })
}

/// Advances `xs` to the next lexicographic permutation; false once exhausted.
pub(crate) fn next_permutation(xs: &mut [usize]) -> bool {
    if xs.len() < 2 {
        return false;
    }
    let mut i = xs.len() - 1;
    while i > 0 && xs[i - 1] >= xs[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = xs.len() - 1;
    while xs[j] <= xs[i - 1] {
        j -= 1;
    }
    xs.swap(i - 1, j);
    xs[i..].reverse();
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_is_optimal_for_diagonal_dominance() {
        let a = hungarian(array![[1.0, 2.0], [2.0, 1.0]].view()).unwrap();
        assert_eq!(a.permutation.as_slice(), &[0, 1]);
        assert_eq!(a.total_cost, 2.0);
    }

    #[test]
    fn two_by_two_swap() {
        // enumeration: [0,1] -> 4+3 = 7, [1,0] -> 1+2 = 3
        let cost = array![[4.0, 1.0], [2.0, 3.0]];
        let a = hungarian(cost.view()).unwrap();
        assert_eq!(a.permutation.as_slice(), &[1, 0]);
        assert_eq!(a.total_cost, 3.0);
        let b = brute_force_assignment(cost.view()).unwrap();
        assert_eq!(b.total_cost, 3.0);
    }

    #[test]
    fn one_by_one() {
        let a = hungarian(array![[5.0]].view()).unwrap();
        assert_eq!(a.permutation.as_slice(), &[0]);
        assert_eq!(a.total_cost, 5.0);
    }

    #[test]
    fn brute_force_ties_pick_lexicographically_smallest() {
        let cost = Array2::from_elem((5, 5), 0.37);
        let b = brute_force_assignment(cost.view()).unwrap();
        assert_eq!(b.permutation.as_slice(), &[0, 1, 2, 3, 4]);
        assert_eq!(b.total_cost, 0.37 + 0.37 + 0.37 + 0.37 + 0.37);
        assert_eq!(brute_force_assignment(array![[1.0, 2.0], [2.0, 1.0]].view()).unwrap().total_cost, 2.0);
    }

    #[test]
    fn brute_force_rejects_large_n() {
        let cost = Array2::<f64>::zeros((10, 10));
        assert!(matches!(brute_force_assignment(cost.view()), Err(MgdError::Dimension(_))));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(hungarian(Array2::<f64>::zeros((2, 3)).view()), Err(MgdError::Dimension(_))));
        assert!(matches!(hungarian(Array2::<f64>::zeros((0, 0)).view()), Err(MgdError::Dimension(_))));
        assert!(matches!(hungarian(array![[1.0, f64::NAN], [0.0, 1.0]].view()), Err(MgdError::Value(_))));
        assert!(matches!(hungarian(array![[1.0, f64::INFINITY], [0.0, 1.0]].view()), Err(MgdError::Value(_))));
        assert!(matches!(hungarian(array![[1.0, -1.0], [0.0, 1.0]].view()), Err(MgdError::Value(_))));
    }

    #[test]
    fn big_rows_are_ordinary_costs() {
        let cost = array![[3.0, 1.0, 2.0], [BIG, BIG, BIG], [BIG, BIG, BIG]];
        let a = hungarian(cost.view()).unwrap();
        assert_eq!(a.permutation.as_slice()[0], 1);
        assert_eq!(a.total_cost, 1.0 + 2.0 * BIG);
    }

    #[test]
    fn permutation_validation() {
        assert!(Permutation::new(vec![1, 0, 2]).is_ok());
        assert!(Permutation::new(vec![1, 1, 2]).is_err());
        assert!(Permutation::new(vec![0, 3, 1]).is_err());
    }

    #[test]
    fn next_permutation_counts_factorial() {
        let mut p: Vec<usize> = (0..5).collect();
        let mut count = 1;
        while next_permutation(&mut p) {
            count += 1;
        }
        assert_eq!(count, 120);
    }

    #[test]
    fn matches_brute_force_on_random_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..300 {
            let n = 1 + trial % 7;
            let cost = Array2::from_shape_fn((n, n), |_| rng.random::<f64>());
            let h = hungarian(cost.view()).unwrap();
            let b = brute_force_assignment(cost.view()).unwrap();
            assert!((h.total_cost - b.total_cost).abs() < 1e-9, "trial {trial}: {} vs {}", h.total_cost, b.total_cost);
        }
    }

    proptest! {
        #[test]
        fn row_permutation_keeps_cost(
            n in 1usize..7,
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cost = Array2::from_shape_fn((n, n), |_| rng.random::<f64>() * 10.0);
            let mut order: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                order.swap(i, rng.random_range(0..=i));
            }
            let permuted = Array2::from_shape_fn((n, n), |(i, j)| cost[[order[i], j]]);
            let a = hungarian(cost.view()).unwrap();
            let b = hungarian(permuted.view()).unwrap();
            prop_assert!((a.total_cost - b.total_cost).abs() < 1e-9);
        }

        #[test]
        fn deterministic_output(n in 1usize..12, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let cost = Array2::from_shape_fn((n, n), |_| (rng.random::<f64>() * 4.0).floor());
            let a = hungarian(cost.view()).unwrap();
            let b = hungarian(cost.view()).unwrap();
            prop_assert_eq!(a.permutation, b.permutation);
        }
    }
}
