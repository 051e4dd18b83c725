//! Experiment configuration: one JSON document per run; flags carry only the
//! config path, output directory, and verbosity.

use std::path::PathBuf;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    Construct,
    OracleCheck,
    TrainLatent,
    EndToEnd,
    DiscretizationSweep,
    RateSweep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    N,
    M,
    T,
    Steps,
}

/// All scientific inputs of a run. Every stochastic draw flows from `seed`
/// (or the explicit `seeds` list for sweeps); there are no wall-clock
/// defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,

    // dimensions: ambient D and latent d
    #[serde(default)]
    pub data_dim: Option<usize>,
    #[serde(default)]
    pub latent_dim: Option<usize>,

    // sizes: pre-training m, flow-matching n, sampling budget
    #[serde(default)]
    pub pretrain_size: Option<usize>,
    #[serde(default)]
    pub train_size: Option<usize>,
    #[serde(default)]
    pub sample_count: Option<usize>,

    // scientific overrides: horizon T, box radius R, step-size scale c
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub box_radius: Option<f64>,
    #[serde(default)]
    pub step_scale: Option<f64>,

    // optimization knobs
    #[serde(default)]
    pub epochs: Option<usize>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub n_layers: Option<usize>,
    #[serde(default)]
    pub heads: Option<usize>,
    #[serde(default)]
    pub d_ff: Option<usize>,
    #[serde(default)]
    pub clip_threshold: Option<f64>,
    #[serde(default)]
    pub eval_mc: Option<usize>,

    // discrete target (oracle-check, train-latent, discretization-sweep)
    #[serde(default)]
    pub target_atoms: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub target_weights: Option<Vec<f64>>,

    // construct kind
    #[serde(default)]
    pub d_patch: Option<usize>,
    #[serde(default)]
    pub tokens: Option<usize>,
    #[serde(default)]
    pub exponents: Option<Vec<Vec<u32>>>,
    #[serde(default)]
    pub accumulator_seed: Option<f64>,

    // discretization sweep
    #[serde(default)]
    pub step_counts: Option<Vec<usize>>,

    // rate sweep
    #[serde(default)]
    pub axis: Option<Axis>,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

fn require<T: Clone>(field: &Option<T>, name: &str, kind: &str) -> Result<T> {
    match field {
        Some(v) => Ok(v.clone()),
        None => bail!("config.{name}: required for kind {kind}"),
    }
}

impl ExperimentConfig {
    /// Kind-specific required fields; returns a field-level message on the
    /// first violation.
    pub fn validate(&self) -> Result<()> {
        match self.kind {
            Kind::Construct => {
                require(&self.d_patch, "d_patch", "construct")?;
                require(&self.tokens, "tokens", "construct")?;
                let exps = require(&self.exponents, "exponents", "construct")?;
                if exps.is_empty() {
                    bail!("config.exponents: must list at least one multi-index");
                }
            }
            Kind::OracleCheck => {
                require(&self.target_atoms, "target_atoms", "oracle-check")?;
            }
            Kind::TrainLatent => {
                require(&self.target_atoms, "target_atoms", "train-latent")?;
                require(&self.train_size, "train_size", "train-latent")?;
            }
            Kind::EndToEnd => {
                let dd = require(&self.data_dim, "data_dim", "end-to-end")?;
                if dd != 4 && dd != 8 {
                    bail!("config.data_dim: only the built-in generators (4 or 8) are supported");
                }
                require(&self.latent_dim, "latent_dim", "end-to-end")?;
                require(&self.pretrain_size, "pretrain_size", "end-to-end")?;
                require(&self.train_size, "train_size", "end-to-end")?;
            }
            Kind::DiscretizationSweep => {
                require(&self.target_atoms, "target_atoms", "discretization-sweep")?;
            }
            Kind::RateSweep => {
                require(&self.axis, "axis", "rate-sweep")?;
                let values = require(&self.values, "values", "rate-sweep")?;
                if values.len() < 2 {
                    bail!("config.values: a sweep needs at least 2 values");
                }
                self.validate_base_for_axis()?;
            }
        }
        if let Some(w) = &self.target_weights {
            let atoms = self.target_atoms.as_deref().unwrap_or(&[]);
            if w.len() != atoms.len() {
                bail!("config.target_weights: length must match target_atoms");
            }
        }
        if let Some(seeds) = &self.seeds {
            if seeds.is_empty() {
                bail!("config.seeds: must be nonempty when present");
            }
        }
        Ok(())
    }

    fn validate_base_for_axis(&self) -> Result<()> {
        match self.axis.unwrap() {
            Axis::N | Axis::T => {
                require(&self.target_atoms, "target_atoms", "rate-sweep")?;
                if self.axis == Some(Axis::T) {
                    require(&self.train_size, "train_size", "rate-sweep over T")?;
                }
            }
            Axis::M => {
                require(&self.data_dim, "data_dim", "rate-sweep over m")?;
                require(&self.latent_dim, "latent_dim", "rate-sweep over m")?;
            }
            Axis::Steps => {
                require(&self.target_atoms, "target_atoms", "rate-sweep over steps")?;
            }
        }
        Ok(())
    }

    pub fn sweep_seeds(&self) -> Vec<u64> {
        self.seeds.clone().unwrap_or_else(|| vec![self.seed])
    }
}
