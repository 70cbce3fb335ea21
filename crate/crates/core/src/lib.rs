//! Matching-guided feature distillation for small conv nets.
//!
//! Teacher channels are assigned to student channels by solving a balanced
//! min-cost assignment over channel distances ([`matching`], [`la`]); the
//! teacher map is then collapsed to the student's width by a parameter-free
//! reducer ([`reduction`]) and compared with a partial L2 loss ([`loss`]).
//! [`trainer`] alternates matching rounds with SGD epochs on the toy networks
//! in [`nets`], trained on the procedural data from [`synth`]. [`experiment`]
//! drives multi-arm, multi-seed runs and writes their artifacts.

pub mod error;
pub mod experiment;
pub mod feature;
pub mod la;
pub mod loss;
pub mod matching;
pub mod nets;
pub mod pgm;
pub mod reduction;
pub mod synth;
pub mod trainer;

pub use error::{MgdError, Result};
pub use feature::FeatureMap;
pub use la::{brute_force_assignment, hungarian, Assignment, Permutation, BIG};
pub use loss::{
    distill_loss, estimate_margins, marginal_relu, partial_l2, partial_l2_grad, LossBreakdown, MarginVector,
};
pub use matching::{
    accumulate_cost, channel_distance, matching_cost, solve_balanced, solve_sparse, CostMatrix, Matching,
    SparseMatching,
};
pub use nets::{NetConfig, Sgd, ToyNet};
pub use reduction::{amp, reduce, reduce_amp, reduce_avgp, reduce_mp, reduce_rd, reduce_sm, ReducerKind};
pub use synth::{generate, Dataset, SynthSpec};
pub use trainer::{ablation_no_matching, train, update_matchings, RunLog, TrainConfig, TrainData};
