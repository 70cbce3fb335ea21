//! Channel-pair cost matrices and the balanced many-to-one / sparse one-to-one
//! channel matchings solved on top of them.

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{MgdError, Result};
use crate::feature::FeatureMap;
use crate::la::{hungarian, BIG};

/// Accumulated student x teacher channel distances (`C_S` rows, `C_T` columns).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    values: Array2<f64>,
    sample_count: usize,
}

impl CostMatrix {
    pub fn new(values: Array2<f64>, sample_count: usize) -> Result<Self> {
        if let Some((idx, v)) = values.indexed_iter().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(MgdError::Value(format!("cost {v} at {idx:?} must be finite and >= 0")));
        }
        Ok(Self { values, sample_count })
    }

    pub fn zeros(students: usize, teachers: usize) -> Self {
        Self { values: Array2::zeros((students, teachers)), sample_count: 0 }
    }

    pub fn students(&self) -> usize {
        self.values.nrows()
    }

    pub fn teachers(&self) -> usize {
        self.values.ncols()
    }

    pub fn sample_count(&self) -> usize {
        self.sample_count
    }

    pub fn view(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn get(&self, student: usize, teacher: usize) -> f64 {
        self.values[[student, teacher]]
    }

    /// Element-wise sum with `batch`; sample counts add up.
    pub fn accumulate(&mut self, batch: &CostMatrix) -> Result<()> {
        if self.values.dim() != batch.values.dim() {
            return Err(MgdError::Dimension(format!(
                "cannot accumulate {:?} into {:?}",
                batch.values.dim(),
                self.values.dim()
            )));
        }
        self.values += &batch.values;
        self.sample_count += batch.sample_count;
        Ok(())
    }

    fn alpha(&self) -> Result<usize> {
        let (c_s, c_t) = self.values.dim();
        if c_s == 0 || c_t < c_s {
            return Err(MgdError::Dimension(format!(
                "matching needs 0 < C_S <= C_T, got C_S={c_s} C_T={c_t}"
            )));
        }
        Ok(c_t / c_s)
    }
}

/// d[i][j] = Σ_k (s[i,k] - t[j,k])², computed from raw activations.
pub fn channel_distance(student: &FeatureMap, teacher: &FeatureMap) -> Result<CostMatrix> {
    if student.spatial() != teacher.spatial() {
        return Err(MgdError::Dimension(format!(
            "spatial sizes differ: student N={} teacher N={}",
            student.spatial(),
            teacher.spatial()
        )));
    }
    let s = student.as_slice();
    let t = teacher.as_slice();
    let n = student.spatial();
    let values = Array2::from_shape_fn((student.channels(), teacher.channels()), |(i, j)| {
        s[i * n..(i + 1) * n]
            .iter()
            .zip(&t[j * n..(j + 1) * n])
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    });
    Ok(CostMatrix { values, sample_count: 1 })
}

pub fn accumulate_cost(acc: &CostMatrix, batch: &CostMatrix) -> Result<CostMatrix> {
    let mut out = acc.clone();
    out.accumulate(batch)?;
    Ok(out)
}

/// Balanced many-to-one assignment of teacher channels to student channels.
///
/// Every student owns exactly `alpha = ⌊C_T/C_S⌋` teachers. When `C_S` does
/// not divide `C_T` the remaining `C_T - alpha·C_S` teachers are shaved
/// (`owner[j] == None`) and take part in no reduction.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Matching {
    owner: Vec<Option<usize>>,
    students: usize,
    alpha: usize,
    groups: Vec<Vec<usize>>,
}

impl Matching {
    /// Validates the balance constraint: each student appears exactly
    /// `⌊C_T/C_S⌋` times and nothing else is assigned.
    pub fn new(owner: Vec<Option<usize>>, students: usize) -> Result<Self> {
        let teachers = owner.len();
        if students == 0 || teachers < students {
            return Err(MgdError::Dimension(format!(
                "matching needs 0 < C_S <= C_T, got C_S={students} C_T={teachers}"
            )));
        }
        Self::with_alpha(owner, students, teachers / students)
    }

    /// Like [`Matching::new`] but with an explicit group size, which may be
    /// smaller than `⌊C_T/C_S⌋` (a sparse selection is `alpha = 1`).
    pub fn with_alpha(owner: Vec<Option<usize>>, students: usize, alpha: usize) -> Result<Self> {
        let teachers = owner.len();
        if students == 0 || alpha == 0 || alpha * students > teachers {
            return Err(MgdError::Dimension(format!(
                "cannot give {students} students {alpha} of {teachers} teachers each"
            )));
        }
        let mut groups = vec![Vec::with_capacity(alpha); students];
        for (j, o) in owner.iter().enumerate() {
            if let Some(i) = *o {
                if i >= students {
                    return Err(MgdError::Value(format!("teacher {j} owned by unknown student {i}")));
                }
                groups[i].push(j);
            }
        }
        if let Some((i, g)) = groups.iter().enumerate().find(|(_, g)| g.len() != alpha) {
            return Err(MgdError::Value(format!(
                "student {i} owns {} teachers, expected alpha={alpha}",
                g.len()
            )));
        }
        Ok(Self { owner, students, alpha, groups })
    }

    /// Teacher channels `[i·alpha, (i+1)·alpha)` go to student `i`; the tail
    /// beyond `alpha·C_S` is shaved.
    pub fn contiguous_blocks(students: usize, teachers: usize) -> Result<Self> {
        if students == 0 || teachers < students {
            return Err(MgdError::Dimension(format!(
                "matching needs 0 < C_S <= C_T, got C_S={students} C_T={teachers}"
            )));
        }
        let alpha = teachers / students;
        let owner = (0..teachers).map(|j| (j < alpha * students).then_some(j / alpha)).collect();
        Self::new(owner, students)
    }

    pub fn owner(&self) -> &[Option<usize>] {
        &self.owner
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn students(&self) -> usize {
        self.students
    }

    pub fn teachers(&self) -> usize {
        self.owner.len()
    }

    /// Teacher channels owned by `student`, ascending.
    pub fn group(&self, student: usize) -> &[usize] {
        &self.groups[student]
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn shaved(&self) -> impl Iterator<Item = usize> + '_ {
        self.owner.iter().enumerate().filter(|(_, o)| o.is_none()).map(|(j, _)| j)
    }

    pub fn shaved_count(&self) -> usize {
        self.owner.iter().filter(|o| o.is_none()).count()
    }

    /// Number of teacher channels whose owner differs between two matchings.
    pub fn hamming(&self, other: &Matching) -> usize {
        self.owner.iter().zip(&other.owner).filter(|(a, b)| a != b).count()
    }

    /// Plain-text dump: a header line then one `teacher -> student` line per
    /// teacher channel, `-` marking shaved channels.
    pub fn to_text(&self) -> String {
        let mut out = format!("C_S={} C_T={} alpha={}\n", self.students, self.teachers(), self.alpha);
        for (j, o) in self.owner.iter().enumerate() {
            match o {
                Some(i) => writeln!(out, "{j} -> {i}"),
                None => writeln!(out, "{j} -> -"),
            }
            .expect("writing to a String cannot fail");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let perr = |msg: String| MgdError::Parse { what: "matching".into(), msg };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| perr("empty input".into()))?;
        let mut students = None;
        let mut teachers = None;
        let mut alpha = None;
        for field in header.split_whitespace() {
            let (key, value) = field.split_once('=').ok_or_else(|| perr(format!("bad header field {field:?}")))?;
            let value: usize = value.parse().map_err(|_| perr(format!("bad header value {field:?}")))?;
            match key {
                "C_S" => students = Some(value),
                "C_T" => teachers = Some(value),
                "alpha" => alpha = Some(value),
                _ => return Err(perr(format!("unknown header key {key:?}"))),
            }
        }
        let (students, teachers, alpha) = match (students, teachers, alpha) {
            (Some(s), Some(t), Some(a)) => (s, t, a),
            _ => return Err(perr("header needs C_S, C_T and alpha".into())),
        };
        let mut owner = vec![None; teachers];
        let mut seen = vec![false; teachers];
        for line in lines {
            let (j, i) = line.split_once("->").ok_or_else(|| perr(format!("bad line {line:?}")))?;
            let j: usize = j.trim().parse().map_err(|_| perr(format!("bad teacher index in {line:?}")))?;
            if j >= teachers || seen[j] {
                return Err(perr(format!("teacher index {j} out of range or repeated")));
            }
            seen[j] = true;
            owner[j] = match i.trim() {
                "-" => None,
                s => Some(s.parse().map_err(|_| perr(format!("bad student index in {line:?}")))?),
            };
        }
        if seen.iter().any(|s| !s) {
            return Err(perr("not every teacher channel is listed".into()));
        }
        Self::with_alpha(owner, students, alpha)
    }
}

impl Serialize for Matching {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_text())
    }
}

impl<'de> Deserialize<'de> for Matching {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        Matching::from_text(&text).map_err(serde::de::Error::custom)
    }
}

/// One distinct teacher channel per student channel.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SparseMatching {
    pairs: Vec<usize>,
    teachers: usize,
}

impl SparseMatching {
    pub fn new(pairs: Vec<usize>, teachers: usize) -> Result<Self> {
        let mut seen = vec![false; teachers];
        for &j in &pairs {
            if j >= teachers || seen[j] {
                return Err(MgdError::Value(format!("pairs {pairs:?} are not distinct teachers < {teachers}")));
            }
            seen[j] = true;
        }
        if pairs.is_empty() {
            return Err(MgdError::Dimension("sparse matching needs at least one student".into()));
        }
        Ok(Self { pairs, teachers })
    }

    pub fn pairs(&self) -> &[usize] {
        &self.pairs
    }

    pub fn teachers(&self) -> usize {
        self.teachers
    }

    /// Σ_i d[i, pairs[i]].
    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        self.pairs.iter().enumerate().map(|(i, &j)| cost.get(i, j)).sum()
    }

    /// The same selection as a balanced matching with `alpha = 1`: unpicked
    /// teachers are shaved.
    pub fn to_matching(&self) -> Matching {
        let mut owner = vec![None; self.teachers];
        for (i, &j) in self.pairs.iter().enumerate() {
            owner[j] = Some(i);
        }
        Matching::with_alpha(owner, self.pairs.len(), 1).expect("distinct pairs always form an alpha=1 matching")
    }
}

/// Minimizes Σ d_ij m_ij over balanced many-to-one matchings.
///
/// Stacks `alpha` copies of `D` into a square matrix (padding with rows of
/// [`BIG`] when `C_S ∤ C_T`), solves one square assignment, and folds each row
/// block back onto the student rows.
pub fn solve_balanced(cost: &CostMatrix) -> Result<Matching> {
    let alpha = cost.alpha()?;
    let (c_s, c_t) = (cost.students(), cost.teachers());
    let real_rows = alpha * c_s;
    let square = Array2::from_shape_fn((c_t, c_t), |(r, j)| {
        if r < real_rows {
            cost.values[[r % c_s, j]]
        } else {
            BIG
        }
    });
    let solution = hungarian(square.view())?;
    let mut owner = vec![None; c_t];
    for (r, &j) in solution.permutation.as_slice().iter().enumerate() {
        if r < real_rows {
            owner[j] = Some(r % c_s);
        }
    }
    Matching::new(owner, c_s)
}

/// Minimizes Σ_i d[i, pairs[i]] over injective student -> teacher maps by
/// padding `D` with `C_T - C_S` rows of [`BIG`].
pub fn solve_sparse(cost: &CostMatrix) -> Result<SparseMatching> {
    cost.alpha()?;
    let (c_s, c_t) = (cost.students(), cost.teachers());
    let square = Array2::from_shape_fn((c_t, c_t), |(r, j)| if r < c_s { cost.values[[r, j]] } else { BIG });
    let solution = hungarian(square.view())?;
    SparseMatching::new(solution.permutation.as_slice()[..c_s].to_vec(), c_t)
}

/// Σ_j d[owner[j], j] over non-shaved teacher channels.
pub fn matching_cost(cost: &CostMatrix, matching: &Matching) -> f64 {
    matching
        .owner()
        .iter()
        .enumerate()
        .filter_map(|(j, o)| o.map(|i| cost.get(i, j)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fm(rows: &[&[f64]]) -> FeatureMap {
        let n = rows[0].len();
        FeatureMap::from_rows(rows.len(), n, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(channel_distance(&fm(&[&[1.0, 0.0]]), &fm(&[&[0.0, 0.0]])).unwrap().get(0, 0), 1.0);
        assert_eq!(channel_distance(&fm(&[&[0.3, -2.0]]), &fm(&[&[0.3, -2.0]])).unwrap().get(0, 0), 0.0);
        let d = channel_distance(&fm(&[&[1.0, 2.0]]), &fm(&[&[3.0, 5.0]])).unwrap();
        assert_eq!(d.get(0, 0), 13.0);
        assert_eq!(d.sample_count(), 1);
    }

    #[test]
    fn distance_rejects_spatial_mismatch() {
        let r = channel_distance(&fm(&[&[1.0, 2.0]]), &fm(&[&[3.0, 5.0, 1.0]]));
        assert!(matches!(r, Err(MgdError::Dimension(_))));
    }

    #[test]
    fn distance_is_transpose_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = FeatureMap::new(Array2::from_shape_fn((3, 7), |_| rng.random_range(-2.0..2.0))).unwrap();
        let t = FeatureMap::new(Array2::from_shape_fn((5, 7), |_| rng.random_range(-2.0..2.0))).unwrap();
        let st = channel_distance(&s, &t).unwrap();
        let ts = channel_distance(&t, &s).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                assert_eq!(st.get(i, j), ts.get(j, i));
            }
        }
    }

    #[test]
    fn accumulate_examples() {
        let a = CostMatrix::new(array![[3.0]], 1).unwrap();
        let b = CostMatrix::new(array![[4.0]], 1).unwrap();
        let c = accumulate_cost(&a, &b).unwrap();
        assert_eq!(c.get(0, 0), 7.0);
        assert_eq!(c.sample_count(), 2);

        let d = CostMatrix::new(array![[1.0, 2.5], [0.5, 4.0]], 1).unwrap();
        assert_eq!(accumulate_cost(&CostMatrix::zeros(2, 2), &d).unwrap().view(), d.view());
        assert_eq!(accumulate_cost(&d, &d).unwrap().view(), (&d.values * 2.0).view());
        assert!(accumulate_cost(&d, &a).is_err());
    }

    #[test]
    fn cost_matrix_rejects_negative() {
        assert!(CostMatrix::new(array![[-1.0]], 1).is_err());
        assert!(CostMatrix::new(array![[f64::NAN]], 1).is_err());
    }

    #[test]
    fn balanced_zero_cost_example() {
        let d = CostMatrix::new(array![[0.0, 0.0, 9.0, 9.0], [9.0, 9.0, 0.0, 0.0]], 1).unwrap();
        let m = solve_balanced(&d).unwrap();
        assert_eq!(m.owner(), &[Some(0), Some(0), Some(1), Some(1)]);
        assert_eq!(matching_cost(&d, &m), 0.0);
    }

    #[test]
    fn balanced_six_to_three() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let d = CostMatrix::new(Array2::from_shape_fn((3, 6), |_| rng.random::<f64>()), 1).unwrap();
        let m = solve_balanced(&d).unwrap();
        assert_eq!(m.alpha(), 2);
        for i in 0..3 {
            assert_eq!(m.owner().iter().filter(|o| **o == Some(i)).count(), 2);
        }
        assert_eq!(m.shaved_count(), 0);
    }

    #[test]
    fn balanced_shaves_remainder() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let d = CostMatrix::new(Array2::from_shape_fn((3, 7), |_| rng.random::<f64>()), 1).unwrap();
        let m = solve_balanced(&d).unwrap();
        assert_eq!(m.alpha(), 2);
        assert_eq!(m.shaved_count(), 1);
    }

    #[test]
    fn balanced_rejects_wide_student() {
        let d = CostMatrix::zeros(3, 2);
        assert!(matches!(solve_balanced(&d), Err(MgdError::Dimension(_))));
        assert!(matches!(solve_sparse(&d), Err(MgdError::Dimension(_))));
    }

    #[test]
    fn sparse_examples() {
        let d = CostMatrix::new(array![[5.0, 1.0, 2.0]], 1).unwrap();
        assert_eq!(solve_sparse(&d).unwrap().pairs(), &[1]);

        let d = CostMatrix::new(array![[4.0, 1.0], [2.0, 3.0]], 1).unwrap();
        let p = solve_sparse(&d).unwrap();
        let h = hungarian(d.view()).unwrap();
        assert_eq!(p.cost(&d), h.total_cost);
    }

    #[test]
    fn matching_cost_examples() {
        let d = CostMatrix::zeros(2, 4);
        assert_eq!(matching_cost(&d, &Matching::contiguous_blocks(2, 4).unwrap()), 0.0);
        let d = CostMatrix::new(array![[2.0, 3.0]], 1).unwrap();
        let m = Matching::new(vec![Some(0), Some(0)], 1).unwrap();
        assert_eq!(matching_cost(&d, &m), 5.0);
    }

    #[test]
    fn matching_validation() {
        assert!(Matching::new(vec![Some(0), Some(0), Some(1), Some(0)], 2).is_err());
        assert!(Matching::new(vec![Some(0), Some(2)], 2).is_err());
        assert!(Matching::new(vec![Some(0), Some(1), None], 2).is_ok());
        assert!(Matching::new(vec![Some(0), None, None], 2).is_err());
    }

    #[test]
    fn contiguous_blocks_layout() {
        let m = Matching::contiguous_blocks(3, 7).unwrap();
        assert_eq!(m.owner(), &[Some(0), Some(0), Some(1), Some(1), Some(2), Some(2), None]);
        assert_eq!(m.group(1), &[2, 3]);
    }

    #[test]
    fn text_round_trip() {
        let m = Matching::new(vec![Some(1), None, Some(0), Some(1), Some(0)], 2).unwrap();
        let text = m.to_text();
        assert!(text.starts_with("C_S=2 C_T=5 alpha=2\n"));
        assert!(text.contains("1 -> -\n"));
        assert_eq!(Matching::from_text(&text).unwrap(), m);
        assert!(Matching::from_text("C_S=1 C_T=2 alpha=2\n0 -> 0\n").is_err());
        assert!(Matching::from_text("C_S=1 C_T=2 alpha=1\n0 -> 0\n1 -> 0\n").is_err());
        let sparse = SparseMatching::new(vec![3, 1], 5).unwrap().to_matching();
        assert_eq!(Matching::from_text(&sparse.to_text()).unwrap(), sparse);
    }

    #[test]
    fn sparse_to_matching() {
        let p = SparseMatching::new(vec![2, 0], 4).unwrap();
        let m = p.to_matching();
        assert_eq!(m.owner(), &[Some(1), None, Some(0), None]);
        assert_eq!(m.alpha(), 1);
        assert_eq!(m.group(0), &[2]);
    }

    #[test]
    fn hamming_counts_changes() {
        let a = Matching::contiguous_blocks(2, 4).unwrap();
        let b = Matching::new(vec![Some(1), Some(0), Some(1), Some(0)], 2).unwrap();
        assert_eq!(a.hamming(&b), 2);
        assert_eq!(a.hamming(&a), 0);
    }
}
