//! Sweeps evaluated concurrently with an ordered reduction.

use fnl_core::harness::{evaluate_point, summarize, ExperimentConfig, RobustnessReport};
use rayon::prelude::*;

use crate::{config, Result};

/// Runs every sweep point on at most `jobs` threads (`0` picks the number of
/// cores). The report does not depend on `jobs`.
pub fn run(config: &ExperimentConfig, jobs: usize) -> Result<RobustnessReport> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    let points = config.points();
    log::info!("{}: {} sweep point(s) on {} thread(s)", config.name, points.len(), pool.current_num_threads());
    let records = pool.install(|| {
        points
            .par_iter()
            .map(|(n, a)| {
                log::debug!("evaluating {n} at alpha={a}");
                evaluate_point(config, *n, *a)
            })
            .collect::<Vec<_>>()
    });
    let records = records.into_iter().collect::<fnl_core::Result<Vec<_>>>()?;
    let mut report = summarize(config, records);
    report.config_hash = config::hash(config);
    Ok(report)
}
