//! Experiment configuration: JSON-backed, unknown keys rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oed::LinearGaussianModel;
use crate::problems::{
    assemble_model, empirical_model_from_ensemble, load_ensemble_csv, random_forward_model,
    GeneratorSpec, KernelSpec,
};

/// Splitmix-style seed derivation so every (instance, purpose) pair gets an
/// independent, reproducible stream.
pub(crate) fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// Random structured operator with kernel prior/noise covariances.
    Generator {
        n: usize,
        m: usize,
        prior: KernelSpec,
        noise: KernelSpec,
        /// Defaults to the rate that spans four orders of magnitude across
        /// the singular spectrum.
        #[serde(default)]
        decay_rate: Option<f64>,
        #[serde(default = "one")]
        top_singular: f64,
    },
    /// Model fitted from paired sample CSV files.
    Ensemble {
        x_csv: PathBuf,
        y_csv: PathBuf,
        variance_floor: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl ProblemSpec {
    /// Number of candidate observations the built models will have; `None`
    /// for ensembles (unknown until the files are read).
    pub fn observation_dim(&self) -> Option<usize> {
        match self {
            ProblemSpec::Generator { m, .. } => Some(*m),
            ProblemSpec::Ensemble { .. } => None,
        }
    }

    /// Builds the model for one instance. Generator problems draw a fresh
    /// forward operator per instance seed; ensemble problems always yield
    /// the single fitted model.
    pub fn build_instance(&self, instance_seed: u64) -> Result<LinearGaussianModel> {
        match self {
            ProblemSpec::Generator {
                n,
                m,
                prior,
                noise,
                decay_rate,
                top_singular,
            } => {
                let mut spec = GeneratorSpec::with_default_decay(*n, *m, instance_seed);
                if let Some(rate) = decay_rate {
                    spec.decay_rate = *rate;
                }
                spec.top_singular = *top_singular;
                let forward = random_forward_model(&spec)?;
                assemble_model(forward, prior, noise)
            }
            ProblemSpec::Ensemble {
                x_csv,
                y_csv,
                variance_floor,
            } => {
                let (_, x) = load_ensemble_csv(x_csv)?;
                let (_, y) = load_ensemble_csv(y_csv)?;
                Ok(empirical_model_from_ensemble(&x, &y, *variance_floor)?.model)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Heuristic {
    StdGreedy,
    MmGreedy,
    MmReverseGreedy,
    Distributed,
    Stochastic,
    RandomSelection,
}

impl Heuristic {
    pub fn name(&self) -> &'static str {
        match self {
            Heuristic::StdGreedy => "std_greedy",
            Heuristic::MmGreedy => "mm_greedy",
            Heuristic::MmReverseGreedy => "mm_reverse_greedy",
            Heuristic::Distributed => "distributed",
            Heuristic::Stochastic => "stochastic",
            Heuristic::RandomSelection => "random_selection",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub heuristics: Vec<Heuristic>,
    /// Batch sizes as fractions of the candidate-set size, in `(0, 1]`.
    pub batch_fractions: Vec<f64>,
    pub num_instances: usize,
    #[serde(default)]
    pub num_random_selections: usize,
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Enables the `verify` subcommand, which insists on desk-scale guards.
    #[serde(default)]
    pub verify_mode: bool,
    #[serde(default = "default_verify_cardinality")]
    pub verify_cardinality: usize,
    #[serde(default = "default_verify_batch_sizes")]
    pub verify_batch_sizes: Vec<usize>,
    #[serde(default = "default_partitions")]
    pub distributed_partitions: usize,
    #[serde(default = "default_epsilon")]
    pub stochastic_epsilon: f64,
}

fn default_verify_cardinality() -> usize {
    4
}

fn default_verify_batch_sizes() -> Vec<usize> {
    vec![1, 2, 4]
}

fn default_partitions() -> usize {
    2
}

fn default_epsilon() -> f64 {
    0.5
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config parse error: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_instances == 0 {
            return Err(Error::InvalidConfig(
                "num_instances must be at least 1".into(),
            ));
        }
        if self.heuristics.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one heuristic is required".into(),
            ));
        }
        if self.batch_fractions.is_empty() {
            return Err(Error::InvalidConfig(
                "at least one batch fraction is required".into(),
            ));
        }
        if self.batch_fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0)) {
            return Err(Error::InvalidConfig(
                "batch fractions must lie in (0, 1]".into(),
            ));
        }
        if self.heuristics.contains(&Heuristic::RandomSelection) && self.num_random_selections == 0
        {
            return Err(Error::InvalidConfig(
                "random_selection requires num_random_selections >= 1".into(),
            ));
        }
        if self.distributed_partitions == 0 {
            return Err(Error::InvalidConfig(
                "distributed_partitions must be at least 1".into(),
            ));
        }
        if !(self.stochastic_epsilon > 0.0 && self.stochastic_epsilon < 1.0) {
            return Err(Error::InvalidConfig(
                "stochastic_epsilon must lie in (0, 1)".into(),
            ));
        }
        if matches!(self.problem, ProblemSpec::Ensemble { .. }) && self.num_instances != 1 {
            return Err(Error::InvalidConfig(
                "ensemble problems are deterministic; set num_instances = 1".into(),
            ));
        }
        Ok(())
    }

    /// Per-instance base seed.
    pub fn instance_seed(&self, instance: usize) -> u64 {
        derive_seed(self.seed, instance as u64)
    }

    /// Batch fraction to batch size: `q = max(1, round(f m))`.
    pub fn batch_size(fraction: f64, m: usize) -> usize {
        ((fraction * m as f64).round() as usize).clamp(1, m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_json() -> String {
        r#"{
            "problem": {"kind": "generator", "n": 4, "m": 8,
                        "prior": {"kind": "squared_exponential", "length_scale": 0.2},
                        "noise": {"kind": "squared_exponential", "length_scale": 0.1}},
            "heuristics": ["std_greedy"],
            "batch_fractions": [0.25, 1.0],
            "num_instances": 2,
            "seed": 7
        }"#
        .to_string()
    }

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        assert_eq!(cfg.num_instances, 2);
        assert_eq!(cfg.heuristics, vec![Heuristic::StdGreedy]);
        assert_eq!(cfg.problem.observation_dim(), Some(8));
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = minimal_json().replace("\"seed\": 7", "\"seed\": 7, \"typo_key\": 1");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn rejects_bad_fractions() {
        let bad = minimal_json().replace("[0.25, 1.0]", "[0.0]");
        assert!(ExperimentConfig::from_json(&bad).is_err());
    }

    #[test]
    fn batch_size_rounding() {
        assert_eq!(ExperimentConfig::batch_size(0.01, 60), 1);
        assert_eq!(ExperimentConfig::batch_size(0.1, 60), 6);
        assert_eq!(ExperimentConfig::batch_size(1.0, 60), 60);
        assert_eq!(ExperimentConfig::batch_size(0.5, 3), 2);
    }

    #[test]
    fn derive_seed_is_stable_and_spread() {
        let a = derive_seed(1, 0);
        let b = derive_seed(1, 1);
        assert_ne!(a, b);
        assert_eq!(a, derive_seed(1, 0));
    }

    #[test]
    fn instance_models_are_deterministic() {
        let cfg = ExperimentConfig::from_json(&minimal_json()).unwrap();
        let a = cfg.problem.build_instance(cfg.instance_seed(0)).unwrap();
        let b = cfg.problem.build_instance(cfg.instance_seed(0)).unwrap();
        assert_eq!(a.forward(), b.forward());
    }
}
