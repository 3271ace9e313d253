//! Experiment configuration and budget sweeps.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::instances::{Family, Instance};
use super::{fit_loglog, verdict, LogLogFit, Verdict};
use crate::adversaries::{AttackKind, AttackSpec};
use crate::calibration::{
    calibration_report, expected_error, recalibrate_per_group, value_shift, BinnedPredictor,
};
use crate::classifiers::{BaseClassifier, HypothesisClass, Notion, PQClassifier};
use crate::dist::{Distribution, GroupId};
use crate::num;
use crate::repair::{best_response, dp_repair, eopp_repair, BestResponseConfig};
use crate::{Error, Result, EXACT_TOL};

/// Constraint studied by a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum SweepNotion {
    Binary(Notion),
    /// Per-group calibration of a binned predictor.
    Calibration,
}

impl SweepNotion {
    pub fn name(self) -> &'static str {
        match self {
            SweepNotion::Binary(n) => n.name(),
            SweepNotion::Calibration => "calibration",
        }
    }
}

impl fmt::Display for SweepNotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepNotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<SweepNotion> {
        if s.eq_ignore_ascii_case("calibration") {
            Ok(SweepNotion::Calibration)
        } else {
            s.parse().map(SweepNotion::Binary)
        }
    }
}

impl Serialize for SweepNotion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> core::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for SweepNotion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> core::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Hypothesis class of the learner.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HypothesisSpec {
    /// Every group-aware table on the support (falls back to the family's
    /// base classifier on large supports).
    #[default]
    AllTables,
    /// Only the family's base classifier.
    BaseOnly,
    Members { members: Vec<BaseClassifier> },
}

impl HypothesisSpec {
    fn resolve(&self, inst: &Instance) -> Result<HypothesisClass> {
        match self {
            HypothesisSpec::AllTables => Ok(inst.hypotheses.clone()),
            HypothesisSpec::BaseOnly => HypothesisClass::new(alloc::vec![inst.h_star.clone()])?.with_optimum(0),
            HypothesisSpec::Members { members } => HypothesisClass::new(members.clone()),
        }
    }
}

fn default_grid() -> usize {
    101
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub instance: Family,
    #[serde(default)]
    pub hypotheses: HypothesisSpec,
    /// Overrides the family's default attack.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attack: Option<AttackKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_group: Option<GroupId>,
    pub notions: Vec<SweepNotion>,
    pub alphas: Vec<f64>,
    #[serde(default = "default_grid")]
    pub grid_n: usize,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; relative paths resolve against the working directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl ExperimentConfig {
    pub fn new(instance: Family, notions: Vec<SweepNotion>, alphas: Vec<f64>) -> ExperimentConfig {
        ExperimentConfig {
            name: String::from(instance.name()),
            instance,
            hypotheses: HypothesisSpec::AllTables,
            attack: None,
            target_group: None,
            notions,
            alphas,
            grid_n: default_grid(),
            seed: 0,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::InvalidArgument("alpha grid is empty".into()));
        }
        for a in &self.alphas {
            if !(*a > 0.0 && *a < 1.0) {
                return Err(Error::AlphaOutOfRange(*a));
            }
        }
        if self.alphas.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("alpha grid must be strictly ascending".into()));
        }
        if self.notions.is_empty() {
            return Err(Error::InvalidArgument("no notion given".into()));
        }
        if self.grid_n < 11 {
            return Err(Error::InvalidArgument(alloc::format!(
                "grid_n must be at least 11, got {}",
                self.grid_n
            )));
        }
        Ok(())
    }

    /// Every (notion, alpha) pair in report order.
    pub fn points(&self) -> Vec<(SweepNotion, f64)> {
        self.notions
            .iter()
            .flat_map(|n| self.alphas.iter().map(move |a| (*n, *a)))
            .collect()
    }
}

/// One evaluated sweep point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub alpha: f64,
    pub notion: SweepNotion,
    pub attack: String,
    /// Fairness (or calibration) gap of the witness on `D~`.
    pub gap_corrupted: f64,
    /// Excess error of the witness on `D`; for calibration, the weighted
    /// value shift on `D~`.
    pub beta: f64,
    /// Excess error on `D` of the grid best response; for calibration, the
    /// change in expected error on `D`.
    pub excess_oracle: f64,
    /// Clean error of the witness and of the best response.
    pub witness_error: Option<f64>,
    pub oracle_error: Option<f64>,
    /// Best response is no worse than the witness up to grid slack.
    pub dominance: Option<bool>,
    pub witness_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<PQClassifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictor: Option<BinnedPredictor>,
    pub clean: Distribution,
    pub d_tilde: Distribution,
}

/// Evaluates one `(notion, alpha)` point. Deterministic in the config.
pub fn evaluate_point(config: &ExperimentConfig, notion: SweepNotion, alpha: f64) -> Result<SweepRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let inst = config.instance.instance(alpha, &mut rng)?;
    let hypotheses = config.hypotheses.resolve(&inst)?;
    let kind = config.attack.clone().unwrap_or_else(|| inst.default_attack.clone());
    let target = config.target_group.clone().or_else(|| inst.target_group.clone());
    let attack = AttackSpec::new(kind, alpha, target);
    let outcome = attack.apply(&inst.clean, &hypotheses)?;
    let d = &inst.clean;
    let dt = &outcome.d_tilde;

    match notion {
        SweepNotion::Calibration => {
            let h = inst.predictor.as_ref().ok_or(Error::UnsupportedNotion {
                notion: "calibration",
                operation: "sweep on a family without a binned predictor",
            })?;
            let h_hat = recalibrate_per_group(h, dt)?;
            let gap = calibration_report(&h_hat, dt)?.max_gap;
            if gap > EXACT_TOL {
                return Err(Error::WitnessGapViolated {
                    notion: "calibration",
                    alpha,
                    gap,
                });
            }
            let excess = expected_error(&h_hat, d)? - expected_error(h, d)?;
            Ok(SweepRecord {
                alpha,
                notion,
                attack: outcome.description,
                gap_corrupted: gap,
                beta: value_shift(h, &h_hat, dt)?,
                excess_oracle: excess,
                witness_error: None,
                oracle_error: None,
                dominance: None,
                witness_label: String::from("recalibrated"),
                witness: None,
                predictor: Some(h_hat),
                clean: d.clone(),
                d_tilde: dt.clone(),
            })
        }
        SweepNotion::Binary(n) => {
            let witness = match n {
                Notion::DemographicParity => Some(dp_repair(&inst.h_star, d, dt)?),
                Notion::EqualOpportunity => Some(eopp_repair(&inst.h_star, d, dt)?),
                _ => None,
            };
            if let Some(w) = &witness {
                if w.gap_on_corrupted > EXACT_TOL {
                    return Err(Error::WitnessGapViolated {
                        notion: n.name(),
                        alpha,
                        gap: w.gap_on_corrupted,
                    });
                }
            }
            let cfg = BestResponseConfig::new(config.grid_n);
            let opt = best_response(d, d, &hypotheses, n, &cfg)?.error_on_original;
            let oracle = best_response(dt, d, &hypotheses, n, &cfg.clone().with_baseline(opt))?;
            let slack = cfg.tolerance();
            let (gap, beta, label, witness_error, dominance, classifier) = match witness {
                Some(w) => (
                    w.gap_on_corrupted,
                    w.excess_error_on_original,
                    w.candidate_label.to_string(),
                    Some(w.error_on_original),
                    Some(oracle.error_on_original <= w.error_on_original + slack),
                    w.classifier,
                ),
                None => (
                    oracle.gap_on_corrupted,
                    oracle.excess_error_on_original,
                    String::from("best_response"),
                    None,
                    None,
                    oracle.classifier.clone(),
                ),
            };
            Ok(SweepRecord {
                alpha,
                notion,
                attack: outcome.description,
                gap_corrupted: gap,
                beta,
                excess_oracle: oracle.excess_error_on_original,
                witness_error,
                oracle_error: Some(oracle.error_on_original),
                dominance,
                witness_label: label,
                witness: Some(classifier),
                predictor: None,
                clean: d.clone(),
                d_tilde: dt.clone(),
            })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub notion: SweepNotion,
    pub records: Vec<SweepRecord>,
    pub fit: Option<LogLogFit>,
    pub verdict: Verdict,
    /// `max beta / sqrt(alpha)` over the sweep.
    pub max_beta_over_sqrt_alpha: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub name: String,
    pub seed: u64,
    /// Hash of the canonical config JSON, filled in by callers that have one.
    #[serde(default)]
    pub config_hash: String,
    pub config: ExperimentConfig,
    pub sweeps: Vec<SweepSummary>,
}

/// Groups records by notion (config order), fits each sweep and assigns a
/// verdict.
pub fn summarize(config: &ExperimentConfig, records: Vec<SweepRecord>) -> RobustnessReport {
    let mut sweeps = Vec::new();
    for n in &config.notions {
        let mine: Vec<SweepRecord> = records.iter().filter(|r| r.notion == *n).cloned().collect();
        let pts: Vec<(f64, f64)> = mine.iter().map(|r| (r.alpha, r.beta)).collect();
        let fit = fit_loglog(&pts).ok();
        let min_beta = mine.iter().map(|r| r.beta).fold(f64::INFINITY, f64::min);
        let v = fit.map_or(Verdict::Inconclusive, |f| verdict(f.slope, min_beta));
        let ratio = mine
            .iter()
            .map(|r| r.beta / num::sqrt(r.alpha))
            .fold(0.0, f64::max);
        sweeps.push(SweepSummary {
            notion: *n,
            records: mine,
            fit,
            verdict: v,
            max_beta_over_sqrt_alpha: ratio,
        });
    }
    RobustnessReport {
        name: config.name.clone(),
        seed: config.seed,
        config_hash: String::new(),
        config: config.clone(),
        sweeps,
    }
}

/// Sequential sweep; the `fnl` crate runs the same points in parallel.
pub fn run_sweep(config: &ExperimentConfig) -> Result<RobustnessReport> {
    config.validate()?;
    let records = config
        .points()
        .into_iter()
        .map(|(n, a)| evaluate_point(config, n, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(config, records))
}
