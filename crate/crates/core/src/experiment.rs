//! Sweep runner for the regression, surrogate and theory studies.
//!
//! Each `(n, X, seed)` cell is trained independently and deterministically;
//! cells run on the rayon pool and results are written in sweep order.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::dataset::{enhance, sample_uniform_cube, Dataset, EnhancementSpec};
use crate::error::{Error, Result};
use crate::network::{truncate, TwoLayerNet};
use crate::optimizer::{train, write_history_csv, LossRecord, TrainConfig};
use crate::pde::{generate_uq_dataset, Grid2D, PdeProblem};
use crate::rng::derive_seed;
use crate::targets::{gaussian_target, target_by_name, Target};
use crate::theory::{
    check_generalization_gap, empirical_rademacher_gradient_family, empirical_rademacher_value_family,
    gradient_family_bound, risk_upper_bound_check, value_family_bound, verify_approximation_theorem, BarronMixture,
    RademacherOptions, RiskCheckOptions,
};

// stream ids for child seeds of a replication seed
const DATA_STREAM: u64 = 1;
const ENHANCE_STREAM: u64 = 2;
const INIT_STREAM: u64 = 3;
const SHUFFLE_STREAM: u64 = 4;
const GRADIENT_STREAM: u64 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FunctionApprox,
    PdeUq,
    TheoryCheck,
}

/// One entry of the theory battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "kebab-case")]
pub enum TheoryCheck {
    /// Event frequencies of the random-subnetwork construction.
    Approximation { n_atoms: usize, d: usize, m: usize, n_trials: usize, n_mc: usize, seed: u64 },
    /// Value-family Rademacher estimate vs. its bound.
    RademacherValue { d: usize, n: usize, q: f64, seed: u64 },
    /// Gradient-family Rademacher estimate vs. its bound.
    RademacherGradient { d: usize, n: usize, q: f64, seed: u64 },
    /// Trained Gaussian-target network: measured gap vs. posterior bound.
    GeneralizationGap { d: usize, n: usize, beta: f64, delta: f64, n_test: usize, seed: u64 },
    /// Subnetwork objective vs. the a-priori risk bound.
    RiskUpperBound { n_atoms: usize, d: usize, m: usize, n: usize, beta: f64, delta: f64, seed: u64 },
}

impl TheoryCheck {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Approximation { .. } => "approximation",
            Self::RademacherValue { .. } => "rademacher-value",
            Self::RademacherGradient { .. } => "rademacher-gradient",
            Self::GeneralizationGap { .. } => "generalization-gap",
            Self::RiskUpperBound { .. } => "risk-upper-bound",
        }
    }
}

pub fn default_battery() -> Vec<TheoryCheck> {
    vec![
        TheoryCheck::Approximation { n_atoms: 5, d: 4, m: 32, n_trials: 1000, n_mc: 4096, seed: 0 },
        TheoryCheck::RademacherValue { d: 4, n: 100, q: 3.0, seed: 0 },
        TheoryCheck::RademacherGradient { d: 4, n: 100, q: 3.0, seed: 0 },
        TheoryCheck::GeneralizationGap { d: 2, n: 200, beta: 10.0, delta: 0.05, n_test: 10_000, seed: 0 },
        TheoryCheck::RiskUpperBound { n_atoms: 5, d: 4, m: 64, n: 500, beta: 10.0, delta: 0.05, seed: 0 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub target: String,
    pub d: usize,
    pub sample_counts: Vec<usize>,
    /// Percentages of samples carrying gradients.
    pub enhancement_levels: Vec<f64>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    pub n_test: usize,
    /// Seed of the shared test set.
    pub test_seed: u64,
    /// Interior grid size for the surrogate study.
    pub grid_n: usize,
    pub battery: Vec<TheoryCheck>,
    /// Feed `(x, 1)` to the network so that the bias-free model can
    /// represent targets with `f(0) ≠ 0`.
    pub input_bias: bool,
    /// Output directory; not part of the config hash.
    pub out: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::function_approx()
    }
}

impl ExperimentConfig {
    pub fn function_approx() -> Self {
        Self {
            kind: ExperimentKind::FunctionApprox,
            target: "gaussian".into(),
            d: 2,
            sample_counts: vec![400],
            enhancement_levels: vec![0.0, 20.0, 100.0],
            seeds: (0..5).collect(),
            train: TrainConfig::function_approx(),
            n_test: 10_000,
            test_seed: 0x7E57,
            grid_n: 63,
            battery: default_battery(),
            input_bias: true,
            out: None,
        }
    }

    pub fn pde_uq() -> Self {
        Self {
            kind: ExperimentKind::PdeUq,
            target: "pde-qoi".into(),
            d: 5,
            sample_counts: vec![80, 160, 320],
            enhancement_levels: vec![0.0, 100.0],
            seeds: (0..3).collect(),
            train: TrainConfig::uq(),
            n_test: 2000,
            ..Self::function_approx()
        }
    }

    pub fn theory_check() -> Self {
        Self { kind: ExperimentKind::TheoryCheck, ..Self::function_approx() }
    }

    pub fn for_kind(kind: ExperimentKind) -> Self {
        match kind {
            ExperimentKind::FunctionApprox => Self::function_approx(),
            ExperimentKind::PdeUq => Self::pde_uq(),
            ExperimentKind::TheoryCheck => Self::theory_check(),
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.kind == ExperimentKind::TheoryCheck {
            return Ok(());
        }
        if self.sample_counts.is_empty() || self.enhancement_levels.is_empty() || self.seeds.is_empty() {
            return bad("sweeps must be nonempty".into());
        }
        if self.sample_counts.contains(&0) {
            return bad("sample counts must be positive".into());
        }
        let mut seeds = self.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        if seeds.len() != self.seeds.len() {
            return bad("replication seeds must be distinct".into());
        }
        for &x in &self.enhancement_levels {
            EnhancementSpec::new(x, 0)?;
        }
        if self.n_test == 0 {
            return bad("n_test must be positive".into());
        }
        self.train.validate()
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory.
    pub fn hash(&self) -> String {
        let canonical = Self { out: None, ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// One trained cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub experiment: ExperimentKind,
    pub config_hash: String,
    pub target: String,
    pub d: usize,
    pub n: usize,
    pub enhancement: f64,
    pub seed: u64,
    pub n_gradient: usize,
    pub width: usize,
    pub epochs: usize,
    pub beta: f64,
    /// Empty when training diverged.
    pub rel_l2_error: Option<f64>,
    pub final_loss: Option<f64>,
    pub status: String,
    pub loss_file: String,
}

/// `‖pred − truth‖₂ / ‖truth‖₂`.
pub fn relative_l2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    crate::error::check_dim(truth.len(), pred.len())?;
    let den = truth.iter().map(|t| t * t).sum::<f64>().sqrt();
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    let num = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>().sqrt();
    Ok(num / den)
}

/// Records plus per-cell loss histories, in sweep order.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub records: Vec<ErrorRecord>,
    pub histories: Vec<Vec<LossRecord>>,
    pub summary: Value,
}

impl ExperimentRun {
    /// Writes `records.csv`, `loss_<cell>.csv` and `report.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("records.csv"))?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        for (r, h) in self.records.iter().zip(&self.histories) {
            write_history_csv(h, fs::File::create(dir.join(&r.loss_file))?)?;
        }
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&self.summary)? + "\n")?;
        Ok(())
    }
}

/// Test inputs and reference values shared by every cell of a sweep.
struct TestSet {
    points: Vec<Vec<f64>>,
    truth: Vec<f64>,
}

struct Cell {
    n: usize,
    enhancement: f64,
    seed: u64,
}

fn cells(config: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &n in &config.sample_counts {
        for &enhancement in &config.enhancement_levels {
            for &seed in &config.seeds {
                out.push(Cell { n, enhancement, seed });
            }
        }
    }
    out
}

fn cell_name(cell: &Cell) -> String {
    format!("n{}_x{}_s{}", cell.n, cell.enhancement, cell.seed)
}

fn with_constant(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.push(1.0);
    v
}

/// Lifts samples to `(x, 1)`. The label for the derivative in the constant
/// direction is that of the degree-one homogeneous extension
/// `f̃(x, t) = t f(x/t)`, namely `y − ⟨y', x⟩` at `t = 1`; bias-free ReLU
/// networks are themselves homogeneous, so this label is consistent.
pub fn append_constant_input(data: &Dataset) -> Result<Dataset> {
    let samples = data
        .samples()
        .iter()
        .map(|s| {
            let grad = s.y_grad.as_ref().map(|g| {
                let euler = s.y - g.iter().zip(&s.x).map(|(a, b)| a * b).sum::<f64>();
                g.iter().copied().chain([euler]).collect()
            });
            crate::dataset::LabeledSample::new(with_constant(&s.x), s.y, grad)
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples)
}

/// Trains one cell on the first `n` rows of `full`, which must carry
/// gradients on every row, keeping gradients on `X%` of them.
fn run_cell(config: &ExperimentConfig, hash: &str, cell: &Cell, full: &Dataset, test: &TestSet) -> Result<(ErrorRecord, Vec<LossRecord>)> {
    let data = full.truncated(cell.n)?;
    let spec = EnhancementSpec::new(cell.enhancement, derive_seed(cell.seed, ENHANCE_STREAM))?;
    let data = enhance(&data, spec)?;
    let data = if config.input_bias { append_constant_input(&data)? } else { data };
    let mut train_cfg = config.train.clone();
    train_cfg.seed = derive_seed(cell.seed, SHUFFLE_STREAM);
    let net0 = TwoLayerNet::init_glorot(train_cfg.width, data.dim(), derive_seed(cell.seed, INIT_STREAM))?;

    let mut record = ErrorRecord {
        experiment: config.kind,
        config_hash: hash.to_string(),
        target: config.target.clone(),
        d: config.d,
        n: cell.n,
        enhancement: cell.enhancement,
        seed: cell.seed,
        n_gradient: data.gradient_count(),
        width: train_cfg.width,
        epochs: train_cfg.epochs,
        beta: train_cfg.beta,
        rel_l2_error: None,
        final_loss: None,
        status: "ok".into(),
        loss_file: format!("loss_{}.csv", cell_name(cell)),
    };
    match train(&net0, &data, &train_cfg) {
        Ok(outcome) => {
            let pred: Vec<f64> = test
                .points
                .iter()
                .map(|x| {
                    let v = if config.input_bias {
                        outcome.net.forward_unchecked(&with_constant(x))
                    } else {
                        outcome.net.forward_unchecked(x)
                    };
                    if train_cfg.truncate { truncate(v) } else { v }
                })
                .collect();
            record.rel_l2_error = Some(relative_l2(&pred, &test.truth)?);
            record.final_loss = outcome.final_loss();
            Ok((record, outcome.history))
        }
        Err(e @ (Error::NonFinite(_) | Error::SolverDiverged { .. })) => {
            record.status = format!("diverged: {e}");
            Ok((record, Vec::new()))
        }
        Err(e) => Err(e),
    }
}

fn run_sweep(config: &ExperimentConfig, full: &[Dataset], test: &TestSet) -> Result<ExperimentRun> {
    let hash = config.hash();
    let cells = cells(config);
    let results = cells
        .par_iter()
        .map(|cell| {
            let idx = config.seeds.iter().position(|&s| s == cell.seed).expect("seed in sweep");
            run_cell(config, &hash, cell, &full[idx], test)
        })
        .collect::<Result<Vec<_>>>()?;
    let (records, histories): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let summary = json!({
        "config": ExperimentConfig { out: None, ..config.clone() },
        "config_hash": hash,
        "medians": median_table(&records),
    });
    Ok(ExperimentRun { records, histories, summary })
}

/// Median relative error over seeds for every `(n, X)` pair, in sweep order.
pub fn median_table(records: &[ErrorRecord]) -> Vec<Value> {
    let mut keys: Vec<(usize, f64)> = Vec::new();
    for r in records {
        if !keys.contains(&(r.n, r.enhancement)) {
            keys.push((r.n, r.enhancement));
        }
    }
    keys.into_iter()
        .map(|(n, x)| {
            let errs: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n && r.enhancement == x)
                .filter_map(|r| r.rel_l2_error)
                .collect();
            json!({ "n": n, "enhancement": x, "median_rel_l2_error": median(&errs), "runs": errs.len() })
        })
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[mid] } else { 0.5 * (v[mid - 1] + v[mid]) })
}

fn max_count(config: &ExperimentConfig) -> usize {
    config.sample_counts.iter().copied().max().unwrap_or(0)
}

fn labelled(target: &dyn Target, points: Vec<Vec<f64>>) -> Result<Dataset> {
    let samples = points
        .into_iter()
        .map(|x| {
            let (y, g) = target.value_and_gradient(&x);
            crate::dataset::LabeledSample::new(x, y, Some(g))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(samples)
}

fn finish(config: &ExperimentConfig, run: ExperimentRun) -> Result<ExperimentRun> {
    if let Some(dir) = &config.out {
        run.write(dir)?;
    }
    Ok(run)
}

/// Regression of an analytic target. Sample sets are nested in `n` and
/// shared across enhancement levels for a given seed.
pub fn run_function_approx(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let target = target_by_name(&config.target, config.d)?;
    let points = sample_uniform_cube(config.n_test, config.d, config.test_seed);
    let truth = points.iter().map(|x| target.value(x)).collect();
    let test = TestSet { points, truth };
    let full = config
        .seeds
        .iter()
        .map(|&s| labelled(target.as_ref(), sample_uniform_cube(max_count(config), config.d, derive_seed(s, DATA_STREAM))))
        .collect::<Result<Vec<_>>>()?;
    finish(config, run_sweep(config, &full, &test)?)
}

/// Surrogate of the PDE quantity of interest. Reference values come from
/// fresh solves shared across all cells.
pub fn run_pde_uq(config: &ExperimentConfig) -> Result<ExperimentRun> {
    config.validate()?;
    let problem = PdeProblem::new(Grid2D::new(config.grid_n)?)?;
    let points = sample_uniform_cube(config.n_test, config.d, config.test_seed);
    let truth = points.par_iter().map(|y| problem.qoi_only(y)).collect::<Result<Vec<_>>>()?;
    let test = TestSet { points, truth };
    let full = config
        .seeds
        .iter()
        .map(|&s| generate_uq_dataset(config.d, max_count(config), &problem, derive_seed(s, DATA_STREAM)).map(|r| r.0))
        .collect::<Result<Vec<_>>>()?;
    finish(config, run_sweep(config, &full, &test)?)
}

/// Outcome of one battery entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub check: TheoryCheck,
    pub passed: bool,
    pub details: Value,
}

/// Trains a truncated network on the Gaussian target and measures its
/// generalization gap against the posterior bound.
#[allow(clippy::too_many_arguments)]
pub fn generalization_gap_replication(
    d: usize,
    n: usize,
    beta: f64,
    delta: f64,
    n_test: usize,
    train_cfg: &TrainConfig,
    seed: u64,
) -> Result<crate::theory::BoundReport> {
    let target = gaussian_target(d)?;
    let data = labelled(&target, sample_uniform_cube(n, d, derive_seed(seed, DATA_STREAM)))?;
    let cfg = TrainConfig { beta, truncate: true, seed: derive_seed(seed, SHUFFLE_STREAM), ..train_cfg.clone() };
    let net0 = TwoLayerNet::init_glorot(cfg.width, d, derive_seed(seed, INIT_STREAM))?;
    let net = train(&net0, &data, &cfg)?.net;
    check_generalization_gap(&net, &data, beta, target.gradient_bound(), delta, &target, n_test, derive_seed(seed, GRADIENT_STREAM), true)
}

/// Labelled sample of a mixture target with full gradients.
pub fn mixture_dataset(mix: &BarronMixture, n: usize, seed: u64) -> Result<Dataset> {
    labelled(mix, sample_uniform_cube(n, mix.dim(), seed))
}

pub fn run_check(check: &TheoryCheck, train_cfg: &TrainConfig) -> Result<CheckOutcome> {
    let (passed, details) = match *check {
        TheoryCheck::Approximation { n_atoms, d, m, n_trials, n_mc, seed } => {
            let mix = BarronMixture::random(n_atoms, d, seed)?;
            let r = verify_approximation_theorem(&mix, m, n_trials, n_mc, derive_seed(seed, 1))?;
            let passed = r.freq_value >= 2.0 / 3.0 - 0.05
                && r.freq_gradient >= 6.0 / 7.0 - 0.05
                && r.freq_path_norm >= 0.5 - 0.05
                && r.freq_all >= 1.0 / 42.0;
            (passed, serde_json::to_value(r)?)
        }
        TheoryCheck::RademacherValue { d, n, q, seed } => {
            let pts = sample_uniform_cube(n, d, seed);
            let opts = RademacherOptions { seed: derive_seed(seed, 1), ..Default::default() };
            let est = empirical_rademacher_value_family(&pts, q, &opts)?;
            let bound = value_family_bound(q, d, n);
            (est <= bound, json!({ "estimate": est, "bound": bound }))
        }
        TheoryCheck::RademacherGradient { d, n, q, seed } => {
            let pts = sample_uniform_cube(n, d, seed);
            let labels = sample_uniform_cube(n, d, derive_seed(seed, 2));
            let opts = RademacherOptions { seed: derive_seed(seed, 1), ..Default::default() };
            let est = empirical_rademacher_gradient_family(&pts, &labels, q, &opts)?;
            let bound = gradient_family_bound(q, d, n);
            (est <= bound, json!({ "estimate": est, "bound": bound }))
        }
        TheoryCheck::GeneralizationGap { d, n, beta, delta, n_test, seed } => {
            let r = generalization_gap_replication(d, n, beta, delta, n_test, train_cfg, seed)?;
            (r.holds, serde_json::to_value(r)?)
        }
        TheoryCheck::RiskUpperBound { n_atoms, d, m, n, beta, delta, seed } => {
            let mix = BarronMixture::random(n_atoms, d, seed)?;
            let data = mixture_dataset(&mix, n, derive_seed(seed, DATA_STREAM))?;
            let opts = RiskCheckOptions { seed: derive_seed(seed, 2), ..Default::default() };
            let r = risk_upper_bound_check(&mix, m, &data, beta, delta, &opts)?;
            (r.holds, serde_json::to_value(r)?)
        }
    };
    Ok(CheckOutcome { check: check.clone(), passed, details })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryReport {
    pub config_hash: String,
    pub all_passed: bool,
    pub checks: Vec<CheckOutcome>,
}

/// Runs the configured battery; `all_passed` is false if any check fails
/// or errors. Writes `report.json` when an output directory is set.
pub fn run_theory_checks(config: &ExperimentConfig) -> Result<TheoryReport> {
    let checks: Vec<CheckOutcome> = config
        .battery
        .par_iter()
        .map(|c| {
            run_check(c, &config.train).unwrap_or_else(|e| CheckOutcome {
                check: c.clone(),
                passed: false,
                details: json!({ "error": e.to_string() }),
            })
        })
        .collect();
    let report = TheoryReport { config_hash: config.hash(), all_passed: checks.iter().all(|c| c.passed), checks };
    if let Some(dir) = &config.out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    }
    Ok(report)
}
