//! Coordinate-descent distillation: matching rounds on a sampled subset of the
//! training data alternate with epochs of SGD on the student.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MgdError, Result};
use crate::feature::FeatureMap;
use crate::loss::{normalized_distill, teacher_target, LossBreakdown, MarginEstimator, MarginVector};
use crate::matching::{channel_distance, matching_cost, solve_balanced, solve_sparse, CostMatrix, Matching};
use crate::nets::{argmax, softmax_cross_entropy, NetConfig, Sgd, ToyNet};
use crate::reduction::ReducerKind;
use crate::synth::{Dataset, Split};

/// Independent RNG streams derived from one experiment seed, so that e.g.
/// matching-subset draws never perturb weight initialization or batch order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stream {
    StudentInit = 1,
    StudentShuffle = 2,
    MatchingSubset = 3,
    TeacherInit = 4,
    TeacherShuffle = 5,
    RandomDrop = 16,
}

fn stream_rng(seed: u64, stream: Stream, step: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((stream as u64) << 48) | step);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub student: NetConfig,
    pub teacher: NetConfig,
    pub epochs: usize,
    pub teacher_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub teacher_lr: f64,
    /// Epochs at which the learning rate is multiplied by `lr_decay_factor`;
    /// `None` means 50% and 75% of the run.
    pub lr_decay_epochs: Option<Vec<usize>>,
    pub lr_decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub gamma: f64,
    pub reducer: ReducerKind,
    pub match_update_period: usize,
    pub match_subset_fraction: f64,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            student: NetConfig::student(),
            teacher: NetConfig::teacher(),
            epochs: 40,
            teacher_epochs: 30,
            batch_size: 32,
            lr: 0.05,
            teacher_lr: 0.05,
            lr_decay_epochs: None,
            lr_decay_factor: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            gamma: 0.1,
            reducer: ReducerKind::Amp,
            match_update_period: 2,
            match_subset_fraction: 0.25,
            val_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.student.validate()?;
        self.teacher.validate()?;
        let bad = |msg: String| Err(MgdError::Config(msg));
        if self.match_update_period == 0 {
            return bad("match_update_period must be >= 1".into());
        }
        if !(self.gamma.is_finite() && self.gamma >= 0.0) {
            return bad(format!("gamma must be >= 0, got {}", self.gamma));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1".into());
        }
        if !(self.match_subset_fraction > 0.0 && self.match_subset_fraction <= 1.0) {
            return bad(format!("match_subset_fraction {} not in (0, 1]", self.match_subset_fraction));
        }
        for lr in [self.lr, self.teacher_lr, self.lr_decay_factor] {
            if !(lr.is_finite() && lr >= 0.0) {
                return bad(format!("learning rates and decay must be >= 0, got {lr}"));
            }
        }
        if self.student.image_size != self.teacher.image_size
            || self.student.in_channels != self.teacher.in_channels
            || self.student.classes != self.teacher.classes
        {
            return bad("teacher and student must share input geometry and classes".into());
        }
        let (ts, ss) = (self.teacher.tap_shapes(), self.student.tap_shapes());
        if ts.len() != ss.len() {
            return bad("teacher and student need the same number of stages".into());
        }
        for (p, ((ct, nt), (cs, ns))) in ts.iter().zip(&ss).enumerate() {
            if nt != ns {
                return bad(format!("tap {p}: spatial sizes differ ({nt} vs {ns})"));
            }
            if ct < cs {
                return bad(format!("tap {p}: teacher width {ct} < student width {cs}"));
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize, base: f64, total: usize) -> f64 {
        let default = [total / 2, total * 3 / 4];
        let milestones: &[usize] = self.lr_decay_epochs.as_deref().unwrap_or(&default);
        let drops = milestones.iter().filter(|&&m| m > 0 && epoch >= m).count();
        base * self.lr_decay_factor.powi(drops as i32)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub dataset: &'a Dataset,
    pub split: &'a Split,
}

/// A frozen, trained teacher with its tap features cached for every sample.
#[derive(Debug, Clone)]
pub struct Teacher {
    pub net: ToyNet,
    pub val_accuracy: f64,
    taps: Vec<Vec<FeatureMap>>,
}

impl Teacher {
    pub fn new(net: ToyNet, dataset: &Dataset, val: &[usize]) -> Result<Self> {
        let taps = (0..dataset.len())
            .map(|i| net.forward(dataset.image(i)).map(|f| f.taps))
            .collect::<Result<Vec<_>>>()?;
        let val_accuracy = accuracy(&net, dataset, val)?;
        Ok(Self { net, val_accuracy, taps })
    }

    pub fn taps(&self, sample: usize) -> &[FeatureMap] {
        &self.taps[sample]
    }
}

/// Trains the teacher net without distillation and caches its taps.
pub fn pretrain_teacher(config: &TrainConfig, data: TrainData<'_>) -> Result<Teacher> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, Stream::TeacherInit, 0);
    let mut net = ToyNet::init(config.teacher.clone(), &mut rng)?;
    let mut opt = Sgd::new(&net, config.momentum, config.weight_decay);
    for epoch in 0..config.teacher_epochs {
        let lr = config.lr_at(epoch, config.teacher_lr, config.teacher_epochs);
        let mut shuffle = stream_rng(config.seed, Stream::TeacherShuffle, epoch as u64);
        let order = shuffled(&data.split.train, &mut shuffle);
        for batch in order.chunks(config.batch_size) {
            net.zero_grad();
            for &idx in batch {
                let fwd = net.forward(data.dataset.image(idx))?;
                let (_, mut d) = softmax_cross_entropy(&fwd.logits, data.dataset.label(idx))?;
                d.iter_mut().for_each(|g| *g /= batch.len() as f64);
                net.backward(&fwd, &d, None)?;
            }
            opt.step(&mut net, lr);
        }
    }
    Teacher::new(net, data.dataset, &data.split.val)
}

fn shuffled(indices: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order = indices.to_vec();
    order.shuffle(rng);
    order
}

pub fn accuracy(net: &ToyNet, dataset: &Dataset, indices: &[usize]) -> Result<f64> {
    if indices.is_empty() {
        return Ok(0.0);
    }
    let mut correct = 0usize;
    for &i in indices {
        if argmax(&net.forward(dataset.image(i))?.logits) == dataset.label(i) {
            correct += 1;
        }
    }
    Ok(correct as f64 / indices.len() as f64)
}

/// How the teacher -> student channel assignment is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchingPolicy {
    /// Re-solved from channel distances at every matching round.
    Solve,
    /// Contiguous teacher blocks, never updated.
    FixedBlocks,
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub student: ToyNet,
    pub optimizer: Sgd,
    pub matchings: Vec<Matching>,
    pub margins: Vec<MarginVector>,
    pub epoch: usize,
    pub seed: u64,
    /// Cached reduced, margin-clipped targets per training sample (deterministic reducers only).
    targets: Vec<Option<Vec<FeatureMap>>>,
}

impl TrainState {
    pub fn new(config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = stream_rng(config.seed, Stream::StudentInit, 0);
        let student = ToyNet::init(config.student.clone(), &mut rng)?;
        let optimizer = Sgd::new(&student, config.momentum, config.weight_decay);
        Ok(Self { student, optimizer, matchings: Vec::new(), margins: Vec::new(), epoch: 0, seed: config.seed, targets: Vec::new() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchingRound {
    /// Epoch before which the round ran.
    pub epoch: usize,
    /// Matching cost per tap, distances accumulated over the subset.
    pub costs: Vec<f64>,
    pub matchings: Vec<Matching>,
}

impl MatchingRound {
    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }
}

/// Draws the matching subset for round `round`: a fixed-size sample of the
/// training indices, sorted so accumulation order is fixed.
pub fn matching_subset(config: &TrainConfig, train: &[usize], round: usize) -> Vec<usize> {
    let size = ((train.len() as f64 * config.match_subset_fraction).round() as usize).clamp(1, train.len().max(1));
    let mut rng = stream_rng(config.seed, Stream::MatchingSubset, round as u64);
    let mut picked: Vec<usize> = sample(&mut rng, train.len(), size.min(train.len())).into_iter().map(|k| train[k]).collect();
    picked.sort_unstable();
    picked
}

/// One matching round: accumulate per-tap costs over `subset`, re-solve (or
/// keep the fixed blocks), and re-estimate teacher margins.
pub fn update_matchings(
    state: &mut TrainState,
    config: &TrainConfig,
    teacher: &Teacher,
    dataset: &Dataset,
    subset: &[usize],
    policy: MatchingPolicy,
) -> Result<MatchingRound> {
    if subset.is_empty() {
        return Err(MgdError::Value("matching subset is empty".into()));
    }
    let tap_shapes: Vec<(usize, usize)> = config.student.tap_shapes();
    let teacher_shapes = config.teacher.tap_shapes();
    let mut costs: Vec<CostMatrix> =
        tap_shapes.iter().zip(&teacher_shapes).map(|((cs, _), (ct, _))| CostMatrix::zeros(*cs, *ct)).collect();
    let mut estimators: Vec<MarginEstimator> = teacher_shapes.iter().map(|(ct, _)| MarginEstimator::new(*ct)).collect();

    for &idx in subset {
        let fwd = state.student.forward(dataset.image(idx))?;
        let t_taps = teacher.taps(idx);
        for p in 0..tap_shapes.len() {
            costs[p].accumulate(&channel_distance(&fwd.taps[p], &t_taps[p])?)?;
            estimators[p].add(&t_taps[p])?;
        }
    }

    let matchings = costs
        .iter()
        .enumerate()
        .map(|(p, d)| match policy {
            MatchingPolicy::FixedBlocks => Matching::contiguous_blocks(tap_shapes[p].0, teacher_shapes[p].0),
            MatchingPolicy::Solve if config.reducer.needs_sparse_matching() => Ok(solve_sparse(d)?.to_matching()),
            MatchingPolicy::Solve => solve_balanced(d),
        })
        .collect::<Result<Vec<_>>>()?;
    let round_costs = costs.iter().zip(&matchings).map(|(d, m)| matching_cost(d, m)).collect();

    state.margins = estimators.iter().map(MarginEstimator::finish).collect::<Result<_>>()?;
    state.matchings = matchings.clone();
    state.targets.clear();
    Ok(MatchingRound { epoch: state.epoch, costs: round_costs, matchings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub task_loss: f64,
    pub distill_loss: f64,
    pub total_loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub seed: u64,
    pub epochs: Vec<EpochRecord>,
    pub rounds: Vec<MatchingRound>,
}

impl RunLog {
    pub fn final_val_acc(&self) -> f64 {
        self.epochs.last().map_or(0.0, |e| e.val_acc)
    }

    /// Σ over taps of the matching cost, one entry per round.
    pub fn matching_costs(&self) -> Vec<f64> {
        self.rounds.iter().map(MatchingRound::total_cost).collect()
    }

    /// Teacher channels that changed owner between consecutive rounds,
    /// summed over taps.
    pub fn churn(&self) -> Vec<usize> {
        self.rounds
            .windows(2)
            .map(|w| w[0].matchings.iter().zip(&w[1].matchings).map(|(a, b)| a.hamming(b)).sum())
            .collect()
    }

    /// Mean churn over the first and second half of the churn series; the
    /// middle entry of an odd-length series is left out.
    pub fn churn_halves(&self) -> Option<(f64, f64)> {
        let c = self.churn();
        let half = c.len() / 2;
        if half == 0 {
            return None;
        }
        let mean = |xs: &[usize]| xs.iter().sum::<usize>() as f64 / xs.len() as f64;
        Some((mean(&c[..half]), mean(&c[c.len() - half..])))
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: RunLog,
    pub student: ToyNet,
    pub matchings: Vec<Matching>,
}

/// Full coordinate-descent run with solved matchings. With `teacher = None`
/// (or `gamma = 0`) this is plain supervised training of the student.
pub fn train(config: &TrainConfig, data: TrainData<'_>, teacher: Option<&Teacher>) -> Result<TrainOutcome> {
    run(config, data, teacher, MatchingPolicy::Solve)
}

/// Same loop with contiguous-block matchings that are never re-solved.
pub fn ablation_no_matching(config: &TrainConfig, data: TrainData<'_>, teacher: &Teacher) -> Result<TrainOutcome> {
    run(config, data, Some(teacher), MatchingPolicy::FixedBlocks)
}

pub fn run(
    config: &TrainConfig,
    data: TrainData<'_>,
    teacher: Option<&Teacher>,
    policy: MatchingPolicy,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.split.train.is_empty() {
        return Err(MgdError::Config("training split is empty".into()));
    }
    let mut state = TrainState::new(config)?;
    let distill = teacher.is_some() && config.gamma > 0.0;
    let mut rounds = Vec::new();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut step: u64 = 0;

    for epoch in 0..config.epochs {
        state.epoch = epoch;
        if let Some(t) = teacher {
            if epoch % config.match_update_period == 0 {
                let subset = matching_subset(config, &data.split.train, rounds.len());
                rounds.push(update_matchings(&mut state, config, t, data.dataset, &subset, policy)?);
                if distill && config.reducer != ReducerKind::Rd {
                    cache_targets(&mut state, config, t, data)?;
                }
            }
        }

        let lr = config.lr_at(epoch, config.lr, config.epochs);
        let mut shuffle = stream_rng(config.seed, Stream::StudentShuffle, epoch as u64);
        let order = shuffled(&data.split.train, &mut shuffle);
        let (mut task_sum, mut distill_sum, mut correct) = (0.0, 0.0, 0usize);

        for batch in order.chunks(config.batch_size) {
            state.student.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            let mut rd_rng = stream_rng(config.seed, Stream::RandomDrop, step);
            for &idx in batch {
                let fwd = state.student.forward(data.dataset.image(idx))?;
                let label = data.dataset.label(idx);
                let (task, mut d_logits) = softmax_cross_entropy(&fwd.logits, label)?;
                task_sum += task;
                if argmax(&fwd.logits) == label {
                    correct += 1;
                }
                d_logits.iter_mut().for_each(|g| *g *= scale);

                let d_taps = match teacher {
                    Some(t) if distill => {
                        let fresh;
                        let targets: &[FeatureMap] = match state.targets.get(idx).and_then(Option::as_ref) {
                            Some(cached) => cached,
                            None => {
                                fresh = sample_targets(&state, config, t.taps(idx), &mut rd_rng)?;
                                &fresh
                            }
                        };
                        let mut grads = Vec::with_capacity(targets.len());
                        for (target, s) in targets.iter().zip(&fwd.taps) {
                            let (l, mut g) = normalized_distill(target, s)?;
                            distill_sum += l;
                            g.view_mut().mapv_inplace(|v| v * config.gamma * scale);
                            grads.push(g);
                        }
                        Some(grads)
                    }
                    _ => None,
                };
                state.student.backward(&fwd, &d_logits, d_taps.as_deref())?;
            }
            state.optimizer.step(&mut state.student, lr);
            step += 1;
        }

        let n = order.len() as f64;
        let breakdown = LossBreakdown::new(task_sum / n, distill_sum / n, if distill { config.gamma } else { 0.0 });
        epochs.push(EpochRecord {
            epoch,
            lr,
            task_loss: breakdown.task_loss,
            distill_loss: breakdown.distill_loss,
            total_loss: breakdown.total,
            train_acc: correct as f64 / n,
            val_acc: accuracy(&state.student, data.dataset, &data.split.val)?,
        });
    }

    Ok(TrainOutcome {
        log: RunLog { seed: config.seed, epochs, rounds },
        student: state.student,
        matchings: state.matchings,
    })
}

fn sample_targets(
    state: &TrainState,
    config: &TrainConfig,
    teacher_taps: &[FeatureMap],
    rng: &mut ChaCha8Rng,
) -> Result<Vec<FeatureMap>> {
    teacher_taps
        .iter()
        .zip(&state.matchings)
        .zip(&state.margins)
        .map(|((t, m), margins)| teacher_target(t, m, config.reducer, margins, rng))
        .collect()
}

fn cache_targets(state: &mut TrainState, config: &TrainConfig, teacher: &Teacher, data: TrainData<'_>) -> Result<()> {
    // deterministic reducers never touch the generator
    let mut unused = stream_rng(config.seed, Stream::RandomDrop, u64::MAX >> 16);
    let mut targets = vec![None; data.dataset.len()];
    for &idx in &data.split.train {
        targets[idx] = Some(sample_targets(state, config, teacher.taps(idx), &mut unused)?);
    }
    state.targets = targets;
    Ok(())
}
