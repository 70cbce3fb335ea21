//! Parameter-free reducers that collapse a `C_T x N` teacher map to
//! the student's `C_S x N` shape.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MgdError, Result};
use crate::feature::FeatureMap;
use crate::matching::{Matching, SparseMatching};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReducerKind {
    /// Sparse matching: one teacher channel per student.
    Sm,
    /// Random drop: a uniformly drawn owned teacher per (channel, position).
    Rd,
    /// Absolute max pooling: the signed value of largest magnitude.
    Amp,
    /// Signed max pooling.
    Mp,
    /// Average pooling.
    Avgp,
}

impl ReducerKind {
    pub const ALL: [ReducerKind; 5] = [Self::Sm, Self::Rd, Self::Amp, Self::Mp, Self::Avgp];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sm => "sm",
            Self::Rd => "rd",
            Self::Amp => "amp",
            Self::Mp => "mp",
            Self::Avgp => "avgp",
        }
    }

    /// SM works on a one-to-one selection; the rest pool a balanced group.
    pub fn needs_sparse_matching(self) -> bool {
        self == Self::Sm
    }
}

impl fmt::Display for ReducerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReducerKind {
    type Err = MgdError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| MgdError::Config(format!("unknown reducer {s:?}")))
    }
}

/// The element of largest magnitude, sign kept; the first index wins ties.
pub fn amp(xs: &[f64]) -> Result<f64> {
    let (&first, rest) = xs
        .split_first()
        .ok_or_else(|| MgdError::Value("absolute max pooling of an empty vector".into()))?;
    Ok(rest.iter().fold(first, |best, &x| if x.abs() > best.abs() { x } else { best }))
}

fn check_teacher(teacher: &FeatureMap, teachers: usize) -> Result<()> {
    if teacher.channels() != teachers {
        return Err(MgdError::Dimension(format!(
            "teacher map has {} channels, matching expects {teachers}",
            teacher.channels()
        )));
    }
    Ok(())
}

/// Applies `pool` to the owned teacher values at every (student, position).
fn pool_groups(teacher: &FeatureMap, matching: &Matching, mut pool: impl FnMut(&[f64]) -> f64) -> Result<FeatureMap> {
    check_teacher(teacher, matching.teachers())?;
    let n = teacher.spatial();
    let t = teacher.view();
    let mut out = Array2::zeros((matching.students(), n));
    let mut buf = Vec::with_capacity(matching.alpha());
    for (i, group) in matching.groups().iter().enumerate() {
        if group.is_empty() {
            return Err(MgdError::Internal(format!("student channel {i} owns no teacher channels")));
        }
        for k in 0..n {
            buf.clear();
            buf.extend(group.iter().map(|&j| t[[j, k]]));
            out[[i, k]] = pool(&buf);
        }
    }
    Ok(FeatureMap::from_array_unchecked(out))
}

/// Row selection: output row `i` is teacher row `pairs[i]`.
pub fn reduce_sm(teacher: &FeatureMap, pairs: &SparseMatching) -> Result<FeatureMap> {
    check_teacher(teacher, pairs.teachers())?;
    let t = teacher.view();
    let out = Array2::from_shape_fn((pairs.pairs().len(), teacher.spatial()), |(i, k)| t[[pairs.pairs()[i], k]]);
    Ok(FeatureMap::from_array_unchecked(out))
}

/// Picks one owned teacher uniformly at random, independently for every
/// (student channel, spatial position). Draws run channel-major.
pub fn reduce_rd<R: Rng + ?Sized>(teacher: &FeatureMap, matching: &Matching, rng: &mut R) -> Result<FeatureMap> {
    pool_groups(teacher, matching, |xs| xs[rng.random_range(0..xs.len())])
}

pub fn reduce_amp(teacher: &FeatureMap, matching: &Matching) -> Result<FeatureMap> {
    pool_groups(teacher, matching, |xs| amp(xs).expect("groups are non-empty"))
}

pub fn reduce_mp(teacher: &FeatureMap, matching: &Matching) -> Result<FeatureMap> {
    pool_groups(teacher, matching, |xs| xs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

pub fn reduce_avgp(teacher: &FeatureMap, matching: &Matching) -> Result<FeatureMap> {
    pool_groups(teacher, matching, |xs| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Dispatches on `kind`. SM expects the `alpha = 1` form produced by
/// [`SparseMatching::to_matching`].
pub fn reduce<R: Rng + ?Sized>(
    kind: ReducerKind,
    teacher: &FeatureMap,
    matching: &Matching,
    rng: &mut R,
) -> Result<FeatureMap> {
    match kind {
        ReducerKind::Sm => {
            if matching.alpha() != 1 {
                return Err(MgdError::Config(format!(
                    "sparse matching reducer needs a one-to-one selection, got alpha={}",
                    matching.alpha()
                )));
            }
            let pairs = SparseMatching::new(matching.groups().iter().map(|g| g[0]).collect(), matching.teachers())?;
            reduce_sm(teacher, &pairs)
        }
        ReducerKind::Rd => reduce_rd(teacher, matching, rng),
        ReducerKind::Amp => reduce_amp(teacher, matching),
        ReducerKind::Mp => reduce_mp(teacher, matching),
        ReducerKind::Avgp => reduce_avgp(teacher, matching),
    }
}
