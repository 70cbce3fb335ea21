//! Multi-arm, multi-seed experiment runner and its on-disk artifacts.
//!
//! A run directory holds:
//!
//! - `manifest.json`: resolved config, its SHA-256, seeds and code version
//! - `summary.csv`: mean and sample std of final validation accuracy per arm
//! - `teachers.csv`: teacher validation accuracy per seed
//! - `epochs_<arm>_<seed>.csv`: one row per epoch
//! - `costs_<arm>_<seed>.csv`: matching cost per tap and churn per round
//! - `matching_<arm>_<seed>_round<k>.txt`: owner arrays of every tap
//! - `checkpoints/`: teacher and student weights
//! - `features/`: PGM dumps of matched teacher, reduced and student channels

use std::fmt;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{MgdError, Result};
use crate::feature::FeatureMap;
use crate::matching::Matching;
use crate::nets::{load_checkpoint, save_checkpoint, ToyNet};
use crate::pgm::normalized_gray;
use crate::reduction::{reduce_amp, reduce_avgp, reduce_mp, ReducerKind};
use crate::synth::{generate, Dataset, Split, SynthSpec};
use crate::trainer::{run, MatchingPolicy, MatchingRound, RunLog, Teacher, TrainConfig, TrainData};

/// One experimental condition, trained once per seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arm {
    /// Student trained on labels only.
    Baseline,
    Sm,
    Rd,
    Amp,
    Mp,
    Avgp,
    /// AMP over fixed contiguous teacher blocks, never re-matched.
    NoMatching,
}

impl Arm {
    pub const ALL: [Arm; 7] = [Self::Baseline, Self::Sm, Self::Rd, Self::Amp, Self::Mp, Self::Avgp, Self::NoMatching];

    pub fn name(self) -> &'static str {
        match self {
            Self::Baseline => "baseline",
            Self::Sm => "sm",
            Self::Rd => "rd",
            Self::Amp => "amp",
            Self::Mp => "mp",
            Self::Avgp => "avgp",
            Self::NoMatching => "no-matching",
        }
    }

    /// Reducer used by the arm; `None` for the undistilled baseline.
    pub fn reducer(self) -> Option<ReducerKind> {
        match self {
            Self::Baseline => None,
            Self::Sm => Some(ReducerKind::Sm),
            Self::Rd => Some(ReducerKind::Rd),
            Self::Amp | Self::NoMatching => Some(ReducerKind::Amp),
            Self::Mp => Some(ReducerKind::Mp),
            Self::Avgp => Some(ReducerKind::Avgp),
        }
    }

    pub fn policy(self) -> MatchingPolicy {
        if self == Self::NoMatching {
            MatchingPolicy::FixedBlocks
        } else {
            MatchingPolicy::Solve
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = MgdError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| MgdError::Config(format!("unknown arm {s:?}")))
    }
}

/// Which sample and tap to render as images after training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DumpConfig {
    pub enabled: bool,
    /// Dataset index of the rendered sample.
    pub sample: usize,
    pub tap: usize,
}

impl Default for DumpConfig {
    fn default() -> Self {
        Self { enabled: true, sample: 0, tap: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `train.seed` is replaced by each entry of `seeds`.
    pub train: TrainConfig,
    /// The dataset of run seed `s` is generated with `data.seed + s`.
    pub data: SynthSpec,
    pub out_dir: PathBuf,
    pub arms: Vec<Arm>,
    pub seeds: Vec<u64>,
    pub dump: DumpConfig,
    pub checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            data: SynthSpec::default(),
            out_dir: PathBuf::from("runs/default"),
            arms: vec![Arm::Baseline, Arm::Amp, Arm::NoMatching, Arm::Mp, Arm::Avgp],
            seeds: (0..5).collect(),
            dump: DumpConfig::default(),
            checkpoints: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        Ok(config)
    }

    /// Reads and parses a JSON config; a missing file is reported as such.
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(MgdError::MissingFile { path: path.to_path_buf() });
        }
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.data.validate()?;
        if self.arms.is_empty() {
            return Err(MgdError::Config("at least one arm is required".into()));
        }
        if self.seeds.is_empty() {
            return Err(MgdError::Config("at least one seed is required".into()));
        }
        let mut arms = self.arms.clone();
        arms.sort_by_key(|a| a.name());
        arms.dedup();
        if arms.len() != self.arms.len() {
            return Err(MgdError::Config("arms must not repeat".into()));
        }
        if self.data.image_size != self.train.student.image_size || self.data.n_classes != self.train.student.classes {
            return Err(MgdError::Config(format!(
                "data ({}px, {} classes) does not fit the nets ({}px, {} classes)",
                self.data.image_size, self.data.n_classes, self.train.student.image_size, self.train.student.classes
            )));
        }
        if self.train.student.in_channels != 1 {
            return Err(MgdError::Config("synthetic data is single-channel".into()));
        }
        let total = self.data.n_classes * self.data.samples_per_class;
        if self.dump.enabled && (self.dump.sample >= total || self.dump.tap >= self.train.student.widths.len()) {
            return Err(MgdError::Config(format!(
                "dump sample {} / tap {} out of range",
                self.dump.sample, self.dump.tap
            )));
        }
        Ok(())
    }

    /// SHA-256 of the compact JSON serialization.
    pub fn hash(&self) -> String {
        let compact = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(compact.as_bytes()))
    }

    /// Training config for one run seed.
    pub fn train_config(&self, arm: Arm, seed: u64) -> TrainConfig {
        TrainConfig { seed, reducer: arm.reducer().unwrap_or(self.train.reducer), ..self.train.clone() }
    }

    pub fn data_spec(&self, seed: u64) -> SynthSpec {
        SynthSpec { seed: self.data.seed.wrapping_add(seed), ..self.data.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub code_version: String,
    pub config_sha256: String,
    pub seeds: Vec<u64>,
    pub arms: Vec<Arm>,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(config: &ExperimentConfig) -> Self {
        Self {
            code_version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).into(),
            config_sha256: config.hash(),
            seeds: config.seeds.clone(),
            arms: config.arms.clone(),
            config: config.clone(),
        }
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("manifest.json");
        if !path.exists() {
            return Err(MgdError::MissingFile { path });
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// One arm trained with one seed.
#[derive(Debug, Clone)]
pub struct ArmRun {
    pub arm: Arm,
    pub seed: u64,
    pub log: RunLog,
    pub student: ToyNet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub arm: Arm,
    pub seeds: usize,
    pub mean_acc: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub std_acc: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    /// Ordered by seed, then by arm as listed in the config.
    pub runs: Vec<ArmRun>,
    pub teacher_acc: Vec<(u64, f64)>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentReport {
    pub fn runs_of(&self, arm: Arm) -> impl Iterator<Item = &ArmRun> {
        self.runs.iter().filter(move |r| r.arm == arm)
    }

    pub fn row(&self, arm: Arm) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.arm == arm)
    }
}

pub fn mean_and_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(config: &ExperimentConfig, runs: &[ArmRun]) -> Vec<SummaryRow> {
    config
        .arms
        .iter()
        .map(|&arm| {
            let accs: Vec<f64> = runs.iter().filter(|r| r.arm == arm).map(|r| r.log.final_val_acc()).collect();
            let (mean_acc, std_acc) = mean_and_std(&accs);
            SummaryRow { arm, seeds: accs.len(), mean_acc, std_acc }
        })
        .collect()
}

struct SeedOutcome {
    teacher: Teacher,
    runs: Vec<ArmRun>,
    dataset: Dataset,
}

fn run_seed(config: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let dataset = generate(&config.data_spec(seed))?;
    let split: Split = dataset.split(config.train.val_fraction, seed)?;
    let data = TrainData { dataset: &dataset, split: &split };
    let teacher = crate::trainer::pretrain_teacher(&config.train_config(Arm::Baseline, seed), data)?;
    let runs = config
        .arms
        .iter()
        .map(|&arm| {
            let cfg = config.train_config(arm, seed);
            let outcome = match arm {
                Arm::Baseline => run(&cfg, data, None, MatchingPolicy::Solve)?,
                _ => run(&cfg, data, Some(&teacher), arm.policy())?,
            };
            Ok(ArmRun { arm, seed, log: outcome.log, student: outcome.student })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedOutcome { teacher, runs, dataset })
}

/// Trains every arm for every seed (seeds in parallel, one shared teacher per
/// seed) and writes all artifacts into `config.out_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let out = &config.out_dir;
    fs::create_dir_all(out)?;
    fs::write(out.join("manifest.json"), serde_json::to_string_pretty(&Manifest::new(config))?)?;

    let outcomes = config.seeds.par_iter().map(|&seed| run_seed(config, seed)).collect::<Result<Vec<_>>>()?;

    let mut runs = Vec::new();
    let mut teacher_acc = Vec::new();
    for (outcome, &seed) in outcomes.into_iter().zip(&config.seeds) {
        for r in &outcome.runs {
            write_run_artifacts(out, r)?;
        }
        if config.checkpoints {
            let dir = out.join("checkpoints");
            save_checkpoint(&outcome.teacher.net, &dir.join(format!("teacher_{seed}")))?;
            for r in &outcome.runs {
                save_checkpoint(&r.student, &dir.join(format!("{}_{seed}", r.arm)))?;
            }
        }
        if config.dump.enabled && seed == config.seeds[0] {
            for r in outcome.runs.iter().filter(|r| r.arm != Arm::Baseline) {
                let Some(last) = r.log.rounds.last() else { continue };
                let dir = out.join("features").join(format!("{}_{seed}", r.arm));
                dump_features(
                    &outcome.teacher.net,
                    &r.student,
                    &last.matchings[config.dump.tap],
                    outcome.dataset.image(config.dump.sample),
                    config.dump.tap,
                    &dir,
                )?;
            }
        }
        teacher_acc.push((seed, outcome.teacher.val_accuracy));
        runs.extend(outcome.runs);
    }

    let summary = summarize(config, &runs);
    write_summary(&out.join("summary.csv"), &summary)?;
    let mut teachers = csv::Writer::from_path(out.join("teachers.csv"))?;
    teachers.write_record(["seed", "val_acc"])?;
    for (seed, acc) in &teacher_acc {
        teachers.write_record([seed.to_string(), acc.to_string()])?;
    }
    teachers.flush()?;
    Ok(ExperimentReport { runs, teacher_acc, summary })
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_run_artifacts(out: &Path, r: &ArmRun) -> Result<()> {
    let mut epochs = csv::Writer::from_path(out.join(format!("epochs_{}_{}.csv", r.arm, r.seed)))?;
    for e in &r.log.epochs {
        epochs.serialize(e)?;
    }
    epochs.flush()?;
    if r.log.rounds.is_empty() {
        return Ok(());
    }

    let taps = r.log.rounds[0].costs.len();
    let mut costs = csv::Writer::from_path(out.join(format!("costs_{}_{}.csv", r.arm, r.seed)))?;
    let mut header = vec!["round".to_string(), "epoch".to_string()];
    header.extend((0..taps).map(|p| format!("cost_tap{p}")));
    header.extend(["total_cost".to_string(), "churn".to_string()]);
    costs.write_record(&header)?;
    let churn = r.log.churn();
    for (k, round) in r.log.rounds.iter().enumerate() {
        let mut rec = vec![k.to_string(), round.epoch.to_string()];
        rec.extend(round.costs.iter().map(f64::to_string));
        rec.push(round.total_cost().to_string());
        rec.push(if k == 0 { String::new() } else { churn[k - 1].to_string() });
        costs.write_record(&rec)?;
    }
    costs.flush()?;

    for (k, round) in r.log.rounds.iter().enumerate() {
        fs::write(out.join(format!("matching_{}_{}_round{k}.txt", r.arm, r.seed)), round_trace(round))?;
    }
    Ok(())
}

/// Text form of one matching round: a header line, then per tap a
/// `[tap p] cost=c` line followed by the matching's own text.
pub fn round_trace(round: &MatchingRound) -> String {
    let mut out = format!("epoch={} total_cost={}\n", round.epoch, round.total_cost());
    for (p, (m, c)) in round.matchings.iter().zip(&round.costs).enumerate() {
        writeln!(out, "[tap {p}] cost={c}").expect("writing to a String cannot fail");
        out.push_str(&m.to_text());
    }
    out
}

pub fn parse_round_trace(text: &str) -> Result<Vec<Matching>> {
    let mut sections: Vec<String> = Vec::new();
    for line in text.lines().skip(1) {
        if line.starts_with("[tap ") {
            sections.push(String::new());
        } else if let Some(current) = sections.last_mut() {
            current.push_str(line);
            current.push('\n');
        }
    }
    if sections.is_empty() {
        return Err(MgdError::Parse { what: "matching trace".into(), msg: "no tap sections".into() });
    }
    sections.iter().map(|s| Matching::from_text(s)).collect()
}

fn write_gray(values: &[f64], side: usize, path: &Path, ranges: &mut csv::Writer<fs::File>) -> Result<PathBuf> {
    let (img, min, max) = normalized_gray(values, side, side)?;
    img.write(path)?;
    let name = path.file_name().expect("file path").to_string_lossy().into_owned();
    ranges.write_record([name, min.to_string(), max.to_string()])?;
    Ok(path.to_path_buf())
}

/// Renders, for every student channel at `tap`, the owned teacher channels,
/// their AMP / MP / AvgP reductions and the student channel itself for one
/// image. Each map is min-max normalized; `ranges.csv` keeps the original
/// min and max of every file.
pub fn dump_features(
    teacher: &ToyNet,
    student: &ToyNet,
    matching: &Matching,
    image: &[f64],
    tap: usize,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    let sides = student.config().tap_sides();
    let side = *sides.get(tap).ok_or_else(|| MgdError::Config(format!("tap {tap} out of range")))?;
    let t: FeatureMap = teacher.forward(image)?.taps.swap_remove(tap);
    let s: FeatureMap = student.forward(image)?.taps.swap_remove(tap);
    if t.channels() != matching.teachers() || s.channels() != matching.students() {
        return Err(MgdError::Dimension("matching does not fit the networks at this tap".into()));
    }
    let reduced = [("amp", reduce_amp(&t, matching)?), ("mp", reduce_mp(&t, matching)?), ("avgp", reduce_avgp(&t, matching)?)];

    fs::create_dir_all(dir)?;
    let mut ranges = csv::Writer::from_path(dir.join("ranges.csv"))?;
    ranges.write_record(["file", "min", "max"])?;
    let mut files = Vec::new();
    for i in 0..matching.students() {
        for &j in matching.group(i) {
            let v = t.channel(j).to_vec();
            files.push(write_gray(&v, side, &dir.join(format!("s{i}_teacher{j}.pgm")), &mut ranges)?);
        }
        for (name, r) in &reduced {
            let v = r.channel(i).to_vec();
            files.push(write_gray(&v, side, &dir.join(format!("s{i}_{name}.pgm")), &mut ranges)?);
        }
        let v = s.channel(i).to_vec();
        files.push(write_gray(&v, side, &dir.join(format!("s{i}_student.pgm")), &mut ranges)?);
    }
    ranges.flush()?;
    Ok(files)
}

/// Re-renders features from a finished run directory using its checkpoints
/// and the last matching round of `arm` / `seed`.
pub fn dump_features_from_run(run_dir: &Path, arm: Arm, seed: u64, sample: usize, tap: usize, out: &Path) -> Result<Vec<PathBuf>> {
    let manifest = Manifest::load(run_dir)?;
    let ckpt = run_dir.join("checkpoints");
    let teacher = load_checkpoint(&ckpt.join(format!("teacher_{seed}")))?;
    let student = load_checkpoint(&ckpt.join(format!("{arm}_{seed}")))?;

    let prefix = format!("matching_{arm}_{seed}_round");
    let mut last: Option<(usize, PathBuf)> = None;
    for entry in fs::read_dir(run_dir)? {
        let path = entry?.path();
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        if let Some(k) = name.strip_prefix(&prefix).and_then(|r| r.strip_suffix(".txt")).and_then(|k| k.parse().ok()) {
            if last.as_ref().is_none_or(|(best, _)| k > *best) {
                last = Some((k, path));
            }
        }
    }
    let (_, trace) = last.ok_or_else(|| MgdError::MissingFile { path: run_dir.join(format!("{prefix}0.txt")) })?;
    let matchings = parse_round_trace(&fs::read_to_string(trace)?)?;
    let matching = matchings.get(tap).ok_or_else(|| MgdError::Config(format!("tap {tap} out of range")))?;

    let dataset = generate(&manifest.config.data_spec(seed))?;
    if sample >= dataset.len() {
        return Err(MgdError::Config(format!("sample {sample} out of range ({} samples)", dataset.len())));
    }
    dump_features(&teacher, &student, matching, dataset.image(sample), tap, out)
}
