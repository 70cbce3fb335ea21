//! Teacher transform and partial-L2 distillation loss.
//!
//! The teacher side goes through reduction then a marginal ReLU
//! `max(x, m_c)`; the student side is used raw. The distance ignores entries
//! where the student already sits below a non-positive teacher target.

use ndarray::Array2;
use rand::Rng;

use crate::error::{MgdError, Result};
use crate::feature::FeatureMap;
use crate::matching::Matching;
use crate::reduction::{reduce, ReducerKind};

/// Margin used for channels that never go negative.
pub const MIN_MARGIN: f64 = -1e-6;

/// Per-channel margins for the marginal ReLU, all strictly negative.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginVector {
    margins: Vec<f64>,
}

impl MarginVector {
    pub fn new(margins: Vec<f64>) -> Result<Self> {
        if let Some((c, m)) = margins.iter().enumerate().find(|(_, m)| !(m.is_finite() && **m <= 0.0)) {
            return Err(MgdError::Value(format!("margin {m} of channel {c} must be finite and <= 0")));
        }
        Ok(Self { margins })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.margins
    }

    pub fn len(&self) -> usize {
        self.margins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.margins.is_empty()
    }

    /// Margins for the reduced channels: each student channel takes the
    /// smallest margin among the teachers it owns.
    pub fn reduce(&self, matching: &Matching) -> Result<MarginVector> {
        if self.margins.len() != matching.teachers() {
            return Err(MgdError::Dimension(format!(
                "{} margins for {} teacher channels",
                self.margins.len(),
                matching.teachers()
            )));
        }
        let margins = matching
            .groups()
            .iter()
            .map(|g| g.iter().map(|&j| self.margins[j]).fold(f64::INFINITY, f64::min))
            .collect();
        Ok(MarginVector { margins })
    }
}

/// Streaming mean of the negative activations of every channel.
#[derive(Debug, Clone)]
pub struct MarginEstimator {
    sums: Vec<f64>,
    counts: Vec<u64>,
    samples: usize,
}

impl MarginEstimator {
    pub fn new(channels: usize) -> Self {
        Self { sums: vec![0.0; channels], counts: vec![0; channels], samples: 0 }
    }

    pub fn add(&mut self, features: &FeatureMap) -> Result<()> {
        if features.channels() != self.sums.len() {
            return Err(MgdError::Dimension(format!(
                "margin estimator tracks {} channels, got {}",
                self.sums.len(),
                features.channels()
            )));
        }
        for (c, row) in features.view().rows().into_iter().enumerate() {
            for &x in row.iter().filter(|x| **x < 0.0) {
                self.sums[c] += x;
                self.counts[c] += 1;
            }
        }
        self.samples += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<MarginVector> {
        if self.samples == 0 {
            return Err(MgdError::Value("cannot estimate margins from zero samples".into()));
        }
        let margins = self
            .sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &n)| if n == 0 { MIN_MARGIN } else { s / n as f64 })
            .collect();
        MarginVector::new(margins)
    }
}

pub fn estimate_margins<'a, I>(teacher_features: I) -> Result<MarginVector>
where
    I: IntoIterator<Item = &'a FeatureMap>,
{
    let mut iter = teacher_features.into_iter().peekable();
    let first = iter.peek().ok_or_else(|| MgdError::Value("cannot estimate margins from zero samples".into()))?;
    let mut est = MarginEstimator::new(first.channels());
    for f in iter {
        est.add(f)?;
    }
    est.finish()
}

/// Element-wise `max(x, m_c)` with the margin of each row's channel.
pub fn marginal_relu(features: &FeatureMap, margins: &MarginVector) -> Result<FeatureMap> {
    if features.channels() != margins.len() {
        return Err(MgdError::Dimension(format!(
            "{} margins for {} channels",
            margins.len(),
            features.channels()
        )));
    }
    let mut out = features.clone().into_inner();
    for (mut row, &m) in out.rows_mut().into_iter().zip(&margins.margins) {
        row.mapv_inplace(|x| x.max(m));
    }
    Ok(FeatureMap::from_array_unchecked(out))
}

#[inline]
fn in_zero_branch(t: f64, s: f64) -> bool {
    s <= t && t <= 0.0
}

/// Σ over entries of 0 when `s <= t <= 0`, else `(t - s)²`.
pub fn partial_l2(teacher: &FeatureMap, student: &FeatureMap) -> Result<f64> {
    teacher.ensure_same_shape(student, "partial L2")?;
    Ok(teacher
        .as_slice()
        .iter()
        .zip(student.as_slice())
        .map(|(&t, &s)| if in_zero_branch(t, s) { 0.0 } else { (t - s) * (t - s) })
        .sum())
}

/// Gradient of [`partial_l2`] with respect to the student map.
pub fn partial_l2_grad(teacher: &FeatureMap, student: &FeatureMap) -> Result<FeatureMap> {
    teacher.ensure_same_shape(student, "partial L2 gradient")?;
    let data = teacher
        .as_slice()
        .iter()
        .zip(student.as_slice())
        .map(|(&t, &s)| if in_zero_branch(t, s) { 0.0 } else { 2.0 * (s - t) })
        .collect();
    let (c, n) = student.shape();
    Ok(FeatureMap::from_array_unchecked(Array2::from_shape_vec((c, n), data).expect("shape matches")))
}

/// The reduced, margin-clipped teacher target for one tap.
pub fn teacher_target<R: Rng + ?Sized>(
    teacher: &FeatureMap,
    matching: &Matching,
    reducer: ReducerKind,
    margins: &MarginVector,
    rng: &mut R,
) -> Result<FeatureMap> {
    let reduced = reduce(reducer, teacher, matching, rng)?;
    marginal_relu(&reduced, &margins.reduce(matching)?)
}

/// Partial L2 between a precomputed target and the student map, divided by
/// `C_S·N`, together with its gradient with respect to the student map.
pub fn normalized_distill(target: &FeatureMap, student: &FeatureMap) -> Result<(f64, FeatureMap)> {
    let scale = 1.0 / (student.channels() * student.spatial()) as f64;
    let loss = partial_l2(target, student)? * scale;
    let mut grad = partial_l2_grad(target, student)?;
    grad.view_mut().mapv_inplace(|g| g * scale);
    Ok((loss, grad))
}

/// Partial L2 between the teacher target and the student map over `C_S·N`, for one tap.
pub fn distill_loss<R: Rng + ?Sized>(
    teacher: &FeatureMap,
    student: &FeatureMap,
    matching: &Matching,
    reducer: ReducerKind,
    margins: &MarginVector,
    rng: &mut R,
) -> Result<f64> {
    let target = teacher_target(teacher, matching, reducer, margins, rng)?;
    let scale = 1.0 / (student.channels() * student.spatial()) as f64;
    Ok(partial_l2(&target, student)? * scale)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub task_loss: f64,
    pub distill_loss: f64,
    pub gamma: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(task_loss: f64, distill_loss: f64, gamma: f64) -> Self {
        Self { task_loss, distill_loss, gamma, total: task_loss + gamma * distill_loss }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fm(rows: &[&[f64]]) -> FeatureMap {
        let n = rows[0].len();
        FeatureMap::from_rows(rows.len(), n, rows.iter().flat_map(|r| r.iter().copied()).collect()).unwrap()
    }

    fn scalar(x: f64) -> FeatureMap {
        fm(&[&[x]])
    }

    #[test]
    fn margin_examples() {
        let m = estimate_margins([&fm(&[&[-2.0, -4.0, 1.0, 3.0]])]).unwrap();
        assert_eq!(m.as_slice(), &[-3.0]);
        let m = estimate_margins([&fm(&[&[0.5, 2.0]])]).unwrap();
        assert_eq!(m.as_slice(), &[MIN_MARGIN]);
        let m = estimate_margins([&fm(&[&[-1.0, 2.0]]), &fm(&[&[-3.0, 0.0]])]).unwrap();
        assert_eq!(m.as_slice(), &[-2.0]);
        assert!(estimate_margins(std::iter::empty::<&FeatureMap>()).is_err());
        assert!(estimate_margins([&fm(&[&[1.0]]), &fm(&[&[1.0], &[2.0]])]).is_err());
    }

    #[test]
    fn marginal_relu_examples() {
        let m = MarginVector::new(vec![-1.0]).unwrap();
        assert_eq!(marginal_relu(&scalar(5.0), &m).unwrap(), scalar(5.0));
        assert_eq!(marginal_relu(&scalar(-3.0), &m).unwrap(), scalar(-1.0));
        assert_eq!(marginal_relu(&scalar(-0.5), &m).unwrap(), scalar(-0.5));
        assert!(marginal_relu(&fm(&[&[1.0], &[2.0]]), &m).is_err());
        assert!(MarginVector::new(vec![0.5]).is_err());
    }

    #[test]
    fn partial_l2_examples() {
        assert_eq!(partial_l2(&scalar(-2.0), &scalar(-3.0)).unwrap(), 0.0);
        assert_eq!(partial_l2(&scalar(1.0), &scalar(0.0)).unwrap(), 1.0);
        assert_eq!(partial_l2(&scalar(-1.0), &scalar(0.5)).unwrap(), 2.25);
        assert!(partial_l2(&scalar(1.0), &fm(&[&[1.0, 2.0]])).is_err());
    }

    #[test]
    fn partial_l2_grad_examples() {
        assert_eq!(partial_l2_grad(&scalar(-2.0), &scalar(-3.0)).unwrap(), scalar(0.0));
        assert_eq!(partial_l2_grad(&scalar(1.0), &scalar(0.0)).unwrap(), scalar(-2.0));
        assert_eq!(partial_l2_grad(&scalar(-1.0), &scalar(0.5)).unwrap(), scalar(3.0));
    }

    #[test]
    fn reduced_margins_take_group_minimum() {
        let margins = MarginVector::new(vec![-1.0, -3.0, -0.5, -2.0]).unwrap();
        let m = Matching::new(vec![Some(1), Some(0), Some(1), Some(0)], 2).unwrap();
        assert_eq!(margins.reduce(&m).unwrap().as_slice(), &[-3.0, -1.0]);
    }

    #[test]
    fn perfect_mimicry_has_zero_loss() {
        let t = fm(&[&[1.0, 2.0], &[0.5, 3.0], &[4.0, 0.1], &[2.0, 2.0]]);
        let m = Matching::new(vec![Some(0), Some(1), Some(0), Some(1)], 2).unwrap();
        let margins = MarginVector::new(vec![-1.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = teacher_target(&t, &m, ReducerKind::Amp, &margins, &mut rng).unwrap();
        assert_eq!(distill_loss(&t, &s, &m, ReducerKind::Amp, &margins, &mut rng).unwrap(), 0.0);
    }

    #[test]
    fn one_channel_end_to_end() {
        // Hand evaluation. Teacher rows [1,-3] and [-2,2] pooled by AMP give
        // [-2,-3]; margins -1.5 and -0.5 reduce to -1.5, clipping to
        // [-1.5,-1.5]. Student [-1,-2]: entry 0 is (−1.5+1)² = 0.25, entry 1
        // has s=-2 <= t=-1.5 <= 0 so contributes 0. Normalized by 1·2.
        let t = fm(&[&[1.0, -3.0], &[-2.0, 2.0]]);
        let s = fm(&[&[-1.0, -2.0]]);
        let m = Matching::new(vec![Some(0), Some(0)], 1).unwrap();
        let margins = MarginVector::new(vec![-1.5, -0.5]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let loss = distill_loss(&t, &s, &m, ReducerKind::Amp, &margins, &mut rng).unwrap();
        assert_eq!(loss, 0.125);
    }

    #[test]
    fn breakdown_total() {
        let b = LossBreakdown::new(1.25, 3.0, 0.1);
        assert!((b.total - (1.25 + 0.1 * 3.0)).abs() < 1e-12);
        assert_eq!(LossBreakdown::new(0.7, 5.0, 0.0).total, 0.7);
    }

    proptest! {
        #[test]
        fn partial_l2_nonnegative_and_full_when_teacher_positive(
            t in proptest::collection::vec(-3.0f64..3.0, 1..20),
            s_seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = ChaCha8Rng::seed_from_u64(s_seed);
            let n = t.len();
            let s: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
            let tf = FeatureMap::from_rows(1, n, t.clone()).unwrap();
            let sf = FeatureMap::from_rows(1, n, s.clone()).unwrap();
            prop_assert!(partial_l2(&tf, &sf).unwrap() >= 0.0);

            let tp: Vec<f64> = t.iter().map(|x| x.abs() + 1e-3).collect();
            let full: f64 = tp.iter().zip(&s).map(|(a, b)| (a - b) * (a - b)).sum();
            let tpf = FeatureMap::from_rows(1, n, tp).unwrap();
            prop_assert!((partial_l2(&tpf, &sf).unwrap() - full).abs() < 1e-12);
        }

        #[test]
        fn zero_branch_ignores_lower_student(t in -3.0f64..0.0, gap in 0.0f64..2.0, push in 0.0f64..5.0) {
            let s = t - gap;
            prop_assert_eq!(partial_l2(&scalar(t), &scalar(s)).unwrap(), 0.0);
            prop_assert_eq!(partial_l2(&scalar(t), &scalar(s - push)).unwrap(), 0.0);
        }

        #[test]
        fn marginal_relu_bounds(xs in proptest::collection::vec(-5.0f64..5.0, 1..16), m in -3.0f64..0.0) {
            let n = xs.len();
            let f = FeatureMap::from_rows(1, n, xs.clone()).unwrap();
            let out = marginal_relu(&f, &MarginVector::new(vec![m]).unwrap()).unwrap();
            for (o, x) in out.as_slice().iter().zip(&xs) {
                prop_assert!(*o >= x.min(0.0));
                prop_assert!(*o >= m);
            }
        }
    }
}
