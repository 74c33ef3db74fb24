//! Experiment configuration, schema version 1.
//!
//! ```json
//! {
//!   "schema": 1,
//!   "seed": 42,
//!   "trials": 10000,
//!   "mode": "both",
//!   "kernels": [
//!     {"id": "half", "factory": "uniform_rank1(n=2)"},
//!     {"id": "mixed", "corpus": {"seed": 7, "count": 20, "n_min": 2, "n_max": 8}}
//!   ],
//!   "checks": [
//!     {"check": "one_step_martingale", "kernels": ["half"], "params": {"window": [0]}},
//!     {"check": "variance_bound"}
//!   ]
//! }
//! ```
//!
//! Check parameters left out are drawn at random per kernel from the master
//! seed, so a corpus gets a fresh window for every entry.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use dppcond::verification::{Mode, Tolerances};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::corpus::CorpusSpec;
use crate::{CliError, CliResult};

pub const SCHEMA_VERSION: u32 = 1;

/// Trials used by Monte Carlo checks when the config does not say.
pub const DEFAULT_TRIALS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeSelection {
    #[default]
    Exact,
    Mc,
    Both,
}

impl ModeSelection {
    pub fn parse(text: &str) -> CliResult<Self> {
        match text {
            "exact" => Ok(Self::Exact),
            "mc" => Ok(Self::Mc),
            "both" => Ok(Self::Both),
            other => Err(CliError::Config(format!("mode must be exact, mc or both, not {other:?}"))),
        }
    }

    pub fn modes(&self) -> &'static [Mode] {
        match self {
            Self::Exact => &[Mode::Exact],
            Self::Mc => &[Mode::MonteCarlo],
            Self::Both => &[Mode::Exact, Mode::MonteCarlo],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSource {
    pub id: String,
    /// Kernel JSON file, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    /// Factory call such as `sine(64, 8.0)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factory: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BTreeMap<String, Value>>,
    /// Generated corpus; each entry becomes one kernel instance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corpus: Option<CorpusSpec>,
    /// Manifest written by `gen-corpus`, relative to the config file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
}

/// Per-check parameters. Windows are lists of site indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w1: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2: Option<Vec<usize>>,
    /// Nested windows for the martingale sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<Vec<usize>>>,
    /// Enclosing window for the martingale sequence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w: Option<Vec<usize>>,
    /// Number of random nested windows when `windows` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stages: Option<usize>,
    /// Real test function, one value per site.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi: Option<Vec<f64>>,
    /// Conditioning points for the Palm part of the local identities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<usize>>,
    /// Largest rank of the random projection in the local identities.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depths: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSpec {
    pub check: String,
    /// Kernel ids; all kernels when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<String>>,
    /// Overrides the experiment mode for this check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ModeSelection>,
    /// Overrides the experiment trial count for this check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default)]
    pub params: CheckParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub trials: Option<usize>,
    #[serde(default)]
    pub mode: ModeSelection,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default)]
    pub oracle_cap: Option<usize>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub kernels: Vec<KernelSource>,
    pub checks: Vec<CheckSpec>,
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub mode: Option<ModeSelection>,
    pub output_dir: Option<PathBuf>,
    pub tolerances: Vec<(String, f64)>,
}

impl Overrides {
    /// Parses `KEY=VAL` for `--tol-override`.
    pub fn parse_tolerance(text: &str) -> CliResult<(String, f64)> {
        let (key, value) = text
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("tolerance override {text:?} is not KEY=VAL")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| CliError::Config(format!("tolerance override {text:?} has a non-numeric value")))?;
        Ok((key.trim().to_string(), value))
    }
}

/// Names accepted in `checks[].check`.
pub const CHECKS: &[&str] = &[
    "completeness",
    "dilation",
    "local_identities",
    "martingale_sequence",
    "measure_consistency",
    "one_step_martingale",
    "sampler_agreement",
    "tail_mixing",
    "two_window_commutation",
    "variance_bound",
];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("cannot parse config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = Some(seed);
        }
        if let Some(trials) = overrides.trials {
            self.trials = Some(trials);
        }
        if let Some(mode) = overrides.mode {
            self.mode = mode;
        }
        if let Some(dir) = &overrides.output_dir {
            self.output_dir = Some(dir.clone());
        }
        for (key, value) in &overrides.tolerances {
            self.tolerances.insert(key.clone(), *value);
        }
    }

    /// Structural validation; kernels are resolved later.
    pub fn validate(&self) -> CliResult<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(CliError::Config(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema)));
        }
        if self.seed.is_none() {
            return Err(CliError::Config("a master seed is required (config \"seed\" or --seed)".into()));
        }
        if self.trials == Some(0) {
            return Err(CliError::Config("trials must be at least 1".into()));
        }
        self.tolerances()?;
        let mut ids = std::collections::BTreeSet::new();
        for k in &self.kernels {
            let sources = [k.file.is_some(), k.factory.is_some(), k.corpus.is_some(), k.manifest.is_some()];
            if sources.iter().filter(|&&s| s).count() != 1 {
                return Err(CliError::Config(format!("kernel {:?} needs exactly one of file, factory, corpus, manifest", k.id)));
            }
            if k.params.is_some() && k.factory.is_none() {
                return Err(CliError::Config(format!("kernel {:?}: params only apply to factories", k.id)));
            }
            if !ids.insert(k.id.as_str()) {
                return Err(CliError::Config(format!("duplicate kernel id {:?}", k.id)));
            }
        }
        for c in &self.checks {
            if !CHECKS.contains(&c.check.as_str()) {
                return Err(CliError::Config(format!("unknown check {:?}", c.check)));
            }
            for id in c.kernels.iter().flatten() {
                if !ids.contains(id.as_str()) {
                    return Err(CliError::Config(format!("check {} references unknown kernel {id:?}", c.check)));
                }
            }
        }
        Ok(())
    }

    pub fn tolerances(&self) -> CliResult<Tolerances> {
        let mut t = Tolerances::default();
        for (key, value) in &self.tolerances {
            t.set(key, *value)?;
        }
        Ok(t)
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(DEFAULT_TRIALS)
    }
}
