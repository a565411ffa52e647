//! Seeded, persisted experiment drivers tying the laboratory together.
//!
//! Five experiment kinds cover the crate's quantitative claims:
//!
//! - **pac-scaling** — Monte-Carlo calibration of the brute-force scan's
//!   per-cell budget over a grid of coin-pair counts `K`, fitting the
//!   log-log slope of the calibrated episode budget against `K`. The
//!   collision budget is `Θ(√D/t²)` with domain `D ∝ K`, so the expected
//!   slope is `1/2` (accepted window [`PAC_SLOPE_WINDOW`]).
//! - **sigma-scaling** — the same calibration over a grid of coin biases
//!   `σ`. The detection gap is `t = εσ/2`, so the budget scales like
//!   `σ⁻²` and the expected slope is `−2` ([`SIGMA_SLOPE_WINDOW`]).
//! - **regret-compare** — cumulative-regret traces for optimistic MLE,
//!   explore-then-exploit, and a uniform-random baseline on planted
//!   instances, plus the structural separation check: every enumerated
//!   episode that presses a reveal action inside the lock earns terminal
//!   reward zero.
//! - **certify-sweep** — a certificate table over families, planted and
//!   null variants, and window offsets: certified `(*→1)` norms against
//!   the closed-form bound `1 + 2/σ` (planted), `1` (null), and — for
//!   lifted windows — against the previous window's certified norm.
//! - **identity-suite** — a pass/fail table of the finite-space
//!   information-theoretic identities: divergence inequalities, the
//!   mixture-vs-null chi-square identity, chi-square inner-product
//!   bounds with their exact closed forms, Hellinger conditioning,
//!   observable-operator factorization residuals, and B-stability.
//!
//! Every run is reproducible from its config and seeds: workers derive
//! all randomness through [`crate::util::child_seed`], results are
//! collected in task order, and the CSV artifacts are byte-identical
//! across re-runs. Timing and timestamps are quarantined to a
//! `manifest.toml` sidecar; an `index.csv` at the output root is
//! append-only, so re-running never mutates prior records.

mod certify_sweep;
mod identities;
mod persist;
mod regret_cmp;
mod scaling;

pub use certify_sweep::run_certify_sweep;
pub use identities::run_identity_suite;
pub use regret_cmp::{reveal_zero_reward_fraction, run_regret_compare};
pub use scaling::{run_pac_scaling, run_sigma_scaling, PAC_SLOPE_WINDOW, SIGMA_SLOPE_WINDOW};

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::instances::{FamilyConfig, FamilyKind, PacParams, RegretParams, SingleStepParams};
use crate::util::fnv1a_hex;

/// Version stamped into every record and manifest.
pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// The five experiment kinds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    PacScaling,
    SigmaScaling,
    RegretCompare,
    CertifySweep,
    IdentitySuite,
}

impl ExperimentKind {
    pub fn slug(self) -> &'static str {
        match self {
            ExperimentKind::PacScaling => "pac-scaling",
            ExperimentKind::SigmaScaling => "sigma-scaling",
            ExperimentKind::RegretCompare => "regret-compare",
            ExperimentKind::CertifySweep => "certify-sweep",
            ExperimentKind::IdentitySuite => "identity-suite",
        }
    }
}

impl std::fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.slug())
    }
}

/// Per-run resource knobs. All kinds share one struct; fields irrelevant
/// to a kind are simply unused.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Budgets {
    /// Monte-Carlo trials per calibration probe / random draws per
    /// identity check.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Node cap for trajectory and tuple enumerations.
    #[serde(default = "default_cap")]
    pub cap: usize,
    /// Episode allowance per learner run (regret-compare uses the grid
    /// instead; this caps auxiliary runs).
    #[serde(default = "default_episodes")]
    pub episodes: usize,
    /// Target confidence of calibrated learners, `1 − δ`.
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

fn default_trials() -> usize {
    8
}
fn default_cap() -> usize {
    2_000_000
}
fn default_episodes() -> usize {
    10_000
}
fn default_confidence() -> f64 {
    0.9
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            trials: default_trials(),
            cap: default_cap(),
            episodes: default_episodes(),
            confidence: default_confidence(),
        }
    }
}

/// One experiment: kind, family templates, a parameter grid, seeds,
/// budgets, and where to persist the artifacts.
///
/// The grid's meaning depends on the kind: coin-pair counts `K`
/// (pac-scaling), biases `σ` (sigma-scaling), episode horizons `T`
/// (regret-compare), window offsets from each family's certification
/// window (certify-sweep), or episode counts `T` for the mixture
/// identity (identity-suite).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Family templates. Scaling kinds substitute grid values into the
    /// first entry; the other kinds run over all entries.
    pub families: Vec<FamilyConfig>,
    #[serde(deserialize_with = "de_grid")]
    pub grid: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Worker threads; `0` uses all available cores.
    #[serde(default)]
    pub jobs: usize,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

/// Accept both `[4, 8]` and `[4.0, 8.0]` in config files.
fn de_grid<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Num {
        I(i64),
        F(f64),
    }
    Ok(Vec::<Num>::deserialize(d)?
        .into_iter()
        .map(|n| match n {
            Num::I(i) => i as f64,
            Num::F(f) => f,
        })
        .collect())
}

impl ExperimentConfig {
    /// Structural validation: non-empty distinct seeds, a non-empty grid
    /// of the kind's expected shape, and family templates that actually
    /// construct.
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(LabError::BadParams("experiment grid is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(LabError::BadParams("experiment needs at least one seed".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(LabError::BadParams("experiment seeds must be distinct".into()));
        }
        if self.families.is_empty() {
            return Err(LabError::BadParams("experiment needs at least one family".into()));
        }
        for f in &self.families {
            f.clone().into_family()?;
        }
        if !self.budgets.trials.ge(&1) || self.budgets.cap == 0 || self.budgets.episodes == 0 {
            return Err(LabError::BadParams("budgets must be positive".into()));
        }
        if !(self.budgets.confidence > 0.0 && self.budgets.confidence < 1.0) {
            return Err(LabError::BadParams(format!(
                "confidence {} outside (0,1)",
                self.budgets.confidence
            )));
        }
        match self.kind {
            ExperimentKind::PacScaling => {
                if self.grid.len() < 4 {
                    return Err(LabError::BadParams(
                        "pac-scaling needs a grid of at least 4 coin-pair counts".into(),
                    ));
                }
                grid_integers(&self.grid, 1.0, "coin-pair count")?;
            }
            ExperimentKind::SigmaScaling => {
                if self.grid.len() < 4 {
                    return Err(LabError::BadParams(
                        "sigma-scaling needs a grid of at least 4 biases".into(),
                    ));
                }
                if self.grid.iter().any(|&s| !(s > 0.0 && s <= 1.0)) {
                    return Err(LabError::BadParams("biases must lie in (0, 1]".into()));
                }
            }
            ExperimentKind::RegretCompare => {
                grid_integers(&self.grid, 1.0, "episode horizon")?;
            }
            ExperimentKind::CertifySweep => {
                grid_integers(&self.grid, 0.0, "window offset")?;
                let offs: BTreeSet<usize> = self.grid.iter().map(|&v| v as usize).collect();
                if !offs.iter().copied().eq(0..offs.len()) {
                    return Err(LabError::BadParams(
                        "certify-sweep offsets must be contiguous from 0 (lift chains build on \
                         the previous window)"
                            .into(),
                    ));
                }
            }
            ExperimentKind::IdentitySuite => {
                grid_integers(&self.grid, 1.0, "episode count")?;
                let kinds: Vec<FamilyKind> =
                    self.families.iter().map(|f| f.clone().into_family().map(|x| x.kind())).collect::<Result<_>>()?;
                if !kinds.contains(&FamilyKind::SingleStep) || !kinds.contains(&FamilyKind::Regret)
                {
                    return Err(LabError::BadParams(
                        "identity-suite needs at least one single-step and one multi-step \
                         (regret) family"
                            .into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Deterministic fingerprint of the scientific content (kind,
    /// families, grid, seeds, budgets). Output directory and worker
    /// count do not change what is computed, so they are excluded.
    pub fn config_hash(&self) -> String {
        #[derive(Serialize)]
        struct HashView<'a> {
            kind: ExperimentKind,
            families: &'a [FamilyConfig],
            grid: &'a [f64],
            seeds: &'a [u64],
            budgets: &'a Budgets,
        }
        let view = HashView {
            kind: self.kind,
            families: &self.families,
            grid: &self.grid,
            seeds: &self.seeds,
            budgets: &self.budgets,
        };
        let bytes = serde_json::to_string(&view).expect("config serializes");
        fnv1a_hex(bytes.as_bytes())
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| LabError::Format(format!("config to TOML: {e}")))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| LabError::Format(format!("config from TOML: {e}")))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }
}

fn grid_integers(grid: &[f64], min: f64, what: &str) -> Result<()> {
    for &v in grid {
        if v < min || v.fract() != 0.0 || !v.is_finite() {
            return Err(LabError::BadParams(format!(
                "{what} grid values must be integers ≥ {min}, got {v}"
            )));
        }
    }
    Ok(())
}

pub(crate) fn grid_as_usize(grid: &[f64]) -> Vec<usize> {
    grid.iter().map(|&v| v as usize).collect()
}

/// One scalar measurement. Long format: one row per metric, so every
/// kind shares a schema and the CSVs stay diff-able.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub code_version: String,
    pub seed: u64,
    pub family: String,
    pub grid_value: f64,
    /// Sub-dimension within a grid point: algorithm, variant, or phase.
    pub detail: String,
    pub metric: String,
    pub value: f64,
    /// Success flag where the metric carries one.
    pub pass: Option<bool>,
}

/// One cumulative-regret sample (regret-compare).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub family: String,
    pub algorithm: String,
    pub seed: u64,
    pub episodes: usize,
    pub cumulative_regret: f64,
}

/// One certificate-table row (certify-sweep).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: String,
    /// `planted` or `null`.
    pub variant: String,
    pub window: usize,
    /// Certified `(*→1)` norm; `NaN` when certification failed.
    pub alpha_inv: f64,
    /// Closed-form bound at the base window, previous certified norm on
    /// lifted windows.
    pub bound: f64,
    pub pass: bool,
}

/// One identity-check row (identity-suite; also the `diverge` CLI
/// output): a left side, the right side or bound it must not exceed,
/// and their gap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckRow {
    pub check: String,
    pub family: String,
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub pass: bool,
}

/// One aggregate line (fitted slopes, pass fractions).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub value: f64,
    pub pass: Option<bool>,
}

/// Everything one experiment produced, already persisted under
/// [`ExperimentOutcome::run_dir`].
#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub records: Vec<RunRecord>,
    pub traces: Vec<TraceRow>,
    pub sweep: Vec<SweepRow>,
    pub checks: Vec<CheckRow>,
    pub summary: Vec<SummaryRow>,
    /// Conjunction of every judged row and summary line.
    pub all_pass: bool,
    pub run_dir: PathBuf,
}

/// Dispatch on the config's kind.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    match config.kind {
        ExperimentKind::PacScaling => run_pac_scaling(config),
        ExperimentKind::SigmaScaling => run_sigma_scaling(config),
        ExperimentKind::RegretCompare => run_regret_compare(config),
        ExperimentKind::CertifySweep => run_certify_sweep(config),
        ExperimentKind::IdentitySuite => run_identity_suite(config),
    }
}

/// The default configuration shipped for each kind: desk-scale
/// instances sized so the whole battery runs in minutes.
pub fn shipped_config(kind: ExperimentKind) -> ExperimentConfig {
    let single_step_tiny = FamilyConfig::SingleStep(SingleStepParams {
        horizon: 4,
        tree_level: 1,
        n_actions: 2,
        coin_pairs: 1,
        eps: 0.25,
        sigma: 0.8,
        unchecked: true,
    });
    let single_step_small_bias = FamilyConfig::SingleStep(SingleStepParams {
        horizon: 4,
        tree_level: 1,
        n_actions: 2,
        coin_pairs: 1,
        eps: 0.1,
        sigma: 0.2,
        unchecked: true,
    });
    let regret_tiny = FamilyConfig::Regret(RegretParams {
        horizon: 4,
        tree_level: 1,
        n_actions: 3,
        coin_pairs: 1,
        stride: 1,
        eps: 0.3,
        sigma: 1.0,
        unchecked: true,
    });
    let regret_gentle = FamilyConfig::Regret(RegretParams {
        horizon: 4,
        tree_level: 1,
        n_actions: 2,
        coin_pairs: 1,
        stride: 1,
        eps: 0.125,
        sigma: 0.5,
        unchecked: true,
    });
    let pac_tiny = FamilyConfig::Pac(PacParams {
        horizon: 6,
        tree_level: 1,
        n_actions: 3,
        coin_pairs: 2,
        stride: 2,
        lock_copies: 2,
        eps: 0.1,
        sigma: 0.5,
        unchecked: true,
    });
    let pac_loud = FamilyConfig::Pac(PacParams {
        horizon: 6,
        tree_level: 1,
        n_actions: 3,
        coin_pairs: 4,
        stride: 2,
        lock_copies: 2,
        eps: 0.3,
        sigma: 1.0,
        unchecked: true,
    });
    match kind {
        ExperimentKind::PacScaling => ExperimentConfig {
            kind,
            families: vec![pac_loud],
            grid: vec![4.0, 8.0, 16.0, 32.0],
            seeds: vec![11, 12],
            budgets: Budgets { trials: 6, ..Budgets::default() },
            out_dir: default_out_dir(),
            jobs: 0,
        },
        ExperimentKind::SigmaScaling => ExperimentConfig {
            kind,
            families: vec![regret_tiny.clone()],
            grid: vec![0.1, 0.2, 0.4, 0.8],
            seeds: vec![21, 22],
            budgets: Budgets { trials: 6, ..Budgets::default() },
            out_dir: default_out_dir(),
            jobs: 0,
        },
        ExperimentKind::RegretCompare => ExperimentConfig {
            kind,
            families: vec![single_step_tiny.clone(), regret_tiny],
            grid: vec![100.0, 316.0, 1000.0, 3162.0, 10000.0],
            seeds: vec![1, 2, 3],
            budgets: Budgets::default(),
            out_dir: default_out_dir(),
            jobs: 0,
        },
        ExperimentKind::CertifySweep => ExperimentConfig {
            kind,
            families: vec![
                single_step_tiny.clone(),
                single_step_small_bias,
                regret_gentle.clone(),
                pac_tiny,
            ],
            grid: vec![0.0, 1.0],
            seeds: vec![5],
            budgets: Budgets::default(),
            out_dir: default_out_dir(),
            jobs: 0,
        },
        ExperimentKind::IdentitySuite => {
            let single_step_gentle = FamilyConfig::SingleStep(SingleStepParams {
                horizon: 4,
                tree_level: 1,
                n_actions: 2,
                coin_pairs: 1,
                eps: 0.125,
                sigma: 0.5,
                unchecked: true,
            });
            ExperimentConfig {
                kind,
                families: vec![single_step_gentle, regret_gentle],
                grid: vec![1.0, 2.0],
                seeds: vec![9],
                budgets: Budgets { trials: 200, ..Budgets::default() },
                out_dir: default_out_dir(),
                jobs: 0,
            }
        }
    }
}

/// Compact family fingerprint used in record and trace rows.
pub fn family_label(config: &FamilyConfig) -> String {
    match config {
        FamilyConfig::SingleStep(p) => format!(
            "single-step:H{}:n{}:A{}:K{}:e{}:s{}",
            p.horizon, p.tree_level, p.n_actions, p.coin_pairs, p.eps, p.sigma
        ),
        FamilyConfig::Regret(p) => format!(
            "regret:H{}:n{}:A{}:K{}:st{}:e{}:s{}",
            p.horizon, p.tree_level, p.n_actions, p.coin_pairs, p.stride, p.eps, p.sigma
        ),
        FamilyConfig::Pac(p) => format!(
            "pac:H{}:n{}:A{}:K{}:st{}:L{}:e{}:s{}",
            p.horizon,
            p.tree_level,
            p.n_actions,
            p.coin_pairs,
            p.stride,
            p.lock_copies,
            p.eps,
            p.sigma
        ),
    }
}

/// Substitute a grid value into the first family template.
pub(crate) fn with_coin_pairs(config: &FamilyConfig, k: usize) -> FamilyConfig {
    let mut c = config.clone();
    match &mut c {
        FamilyConfig::SingleStep(p) => p.coin_pairs = k,
        FamilyConfig::Regret(p) => p.coin_pairs = k,
        FamilyConfig::Pac(p) => p.coin_pairs = k,
    }
    c
}

pub(crate) fn with_sigma(config: &FamilyConfig, sigma: f64) -> FamilyConfig {
    let mut c = config.clone();
    match &mut c {
        FamilyConfig::SingleStep(p) => p.sigma = sigma,
        FamilyConfig::Regret(p) => p.sigma = sigma,
        FamilyConfig::Pac(p) => p.sigma = sigma,
    }
    c
}

/// Run `f` on a dedicated `jobs`-thread worker pool, or on the global
/// pool when `jobs == 0`.
pub(crate) fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| LabError::BadParams(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

pub(crate) fn record(
    hash: &str,
    seed: u64,
    family: &str,
    grid_value: f64,
    detail: &str,
    metric: &str,
    value: f64,
    pass: Option<bool>,
) -> RunRecord {
    RunRecord {
        config_hash: hash.to_string(),
        code_version: CODE_VERSION.to_string(),
        seed,
        family: family.to_string(),
        grid_value,
        detail: detail.to_string(),
        metric: metric.to_string(),
        value,
        pass,
    }
}
