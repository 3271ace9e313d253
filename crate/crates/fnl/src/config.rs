//! Experiment config files and command-line overrides.

use std::path::Path;

use fnl_core::harness::{ExperimentConfig, SweepNotion};
use sha2::{Digest, Sha256};

use crate::{io, Result};

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let config: ExperimentConfig = io::read_json(path)?;
    Ok(config)
}

/// Values given on the command line; each replaces the config's value.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub alphas: Vec<f64>,
    pub notion: Option<SweepNotion>,
    pub grid_n: Option<usize>,
    pub seed: Option<u64>,
    pub output: Option<String>,
}

pub fn apply(mut config: ExperimentConfig, o: &Overrides) -> Result<ExperimentConfig> {
    if !o.alphas.is_empty() {
        let mut alphas = o.alphas.clone();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        config.alphas = alphas;
    }
    if let Some(n) = o.notion {
        config.notions = vec![n];
    }
    if let Some(g) = o.grid_n {
        config.grid_n = g;
    }
    if let Some(s) = o.seed {
        config.seed = s;
    }
    if let Some(out) = &o.output {
        config.output = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

/// SHA-256 of the compact JSON encoding, in lowercase hex.
pub fn hash(config: &ExperimentConfig) -> String {
    let bytes = serde_json::to_vec(config).expect("config serializes");
    Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}
