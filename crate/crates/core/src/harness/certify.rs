//! Numeric floors for the Ω(√α) and Ω(1) claims, and the minimax
//! demonstration.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversaries::{duplicate_flip_attack, needle_eopp_attack};
use crate::calibration::{balanced_instance, parity_calibration_floor, predictive_parity_attack_certify};
use crate::classifiers::{BaseClassifier, HypothesisClass, Notion, PQClassifier, PQParams};
use crate::dist::{Distribution, GroupId};
use crate::num;
use crate::repair::{best_response, from_acceptance, BestResponseConfig};
use crate::{Error, Result};

/// Small-group mass of the duplication instances, relative to `alpha`.
pub const SMALL_GROUP_RATIO: f64 = 0.9;

/// Number of bins enumerated for the parity-calibration floor.
pub const CALIBRATION_BINS: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundNotion {
    #[serde(rename = "eopp")]
    EqualOpportunity,
    #[serde(rename = "eodds")]
    EqualizedOdds,
    PredictiveParity,
    ParityCalibration,
}

impl BoundNotion {
    pub fn name(self) -> &'static str {
        match self {
            BoundNotion::EqualOpportunity => "eopp",
            BoundNotion::EqualizedOdds => "eodds",
            BoundNotion::PredictiveParity => "predictive_parity",
            BoundNotion::ParityCalibration => "parity_calibration",
        }
    }

    /// Floor claimed at budget `alpha`.
    pub fn claimed(self, alpha: f64) -> f64 {
        match self {
            BoundNotion::EqualOpportunity => num::sqrt(alpha) / 2.0,
            BoundNotion::EqualizedOdds => (1.0 - alpha) / 2.0,
            BoundNotion::PredictiveParity | BoundNotion::ParityCalibration => 0.2,
        }
    }
}

impl fmt::Display for BoundNotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BoundNotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<BoundNotion> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        if matches!(key.as_str(), "parity_calibration" | "pc") {
            return Ok(BoundNotion::ParityCalibration);
        }
        match key.parse::<Notion>() {
            Ok(Notion::EqualOpportunity) => Ok(BoundNotion::EqualOpportunity),
            Ok(Notion::EqualizedOdds) => Ok(BoundNotion::EqualizedOdds),
            Ok(Notion::PredictiveParity) => Ok(BoundNotion::PredictiveParity),
            _ => Err(Error::UnsupportedNotion {
                notion: "requested",
                operation: "lower-bound certification (use eopp, eodds, predictive_parity or parity_calibration)",
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub notion: BoundNotion,
    pub alpha: f64,
    pub grid_n: usize,
    /// Least excess error on `D` found under the constraint on `D~`.
    pub floor: f64,
    pub claimed: f64,
    pub slack: f64,
    pub pass: bool,
    pub clean_optimum: f64,
    pub detail: String,
}

fn excess_floor(
    d: &Distribution,
    dt: &Distribution,
    notion: Notion,
    grid_n: usize,
) -> Result<(f64, f64, String)> {
    let h = HypothesisClass::all_tables(d)?;
    let cfg = BestResponseConfig::new(grid_n);
    let opt = best_response(d, d, &h, notion, &cfg)?.error_on_original;
    let w = best_response(dt, d, &h, notion, &cfg.with_baseline(opt))?;
    Ok((w.excess_error_on_original, opt, crate::repair::describe(&w)))
}

/// Builds the canonical instance for `notion` at `alpha` and certifies the
/// claimed floor up to grid slack `2 / grid_n`.
pub fn certify_lower_bound(notion: BoundNotion, alpha: f64, grid_n: usize) -> Result<Certificate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let (floor, clean_optimum, detail) = match notion {
        BoundNotion::EqualOpportunity => {
            let n = needle_eopp_attack(alpha)?;
            excess_floor(&n.clean, &n.d_tilde, Notion::EqualOpportunity, grid_n)?
        }
        BoundNotion::EqualizedOdds => {
            let d = balanced_instance(SMALL_GROUP_RATIO * alpha)?;
            let (_, dt) = duplicate_flip_attack(&d, &"B".into(), alpha)?;
            excess_floor(&d, &dt, Notion::EqualizedOdds, grid_n)?
        }
        BoundNotion::PredictiveParity => {
            let c = predictive_parity_attack_certify(alpha, SMALL_GROUP_RATIO * alpha, grid_n)?;
            (c.floor, c.clean_optimum, crate::repair::describe(&c.witness))
        }
        BoundNotion::ParityCalibration => {
            let d = balanced_instance(SMALL_GROUP_RATIO * alpha)?;
            let (_, dt) = duplicate_flip_attack(&d, &"B".into(), alpha)?;
            let attacked = parity_calibration_floor(&dt, &d, CALIBRATION_BINS)?;
            let clean = parity_calibration_floor(&d, &d, CALIBRATION_BINS)?;
            let detail = alloc::format!(
                "{} of {} assignments parity-calibrated",
                attacked.feasible, attacked.examined
            );
            (attacked.floor - clean.floor, clean.floor, detail)
        }
    };
    let claimed = notion.claimed(alpha);
    let slack = 2.0 / grid_n as f64;
    Ok(Certificate {
        notion,
        alpha,
        grid_n,
        floor,
        claimed,
        slack,
        pass: floor >= claimed - slack,
        clean_optimum,
        detail,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupError {
    pub group: GroupId,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimaxReport {
    pub alpha: f64,
    pub small_group_mass: f64,
    /// `eps_z` of the minimax classifier on `D~`.
    pub groups: Vec<GroupError>,
    pub max_group_error: f64,
    /// Minimax group error on the clean distribution.
    pub opt_clean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Whether `max_group_error <= gamma`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_feasible: Option<bool>,
    pub classifier: PQClassifier,
}

/// Least worst-group error over the grid of `PQ(H)`, with errors measured on
/// `d`. Groups decouple for a fixed base, so each group is minimized alone.
fn minimax(d: &Distribution, h: &HypothesisClass, grid_n: usize) -> Result<(f64, Vec<GroupError>, PQClassifier)> {
    let grid: Vec<f64> = num::unit_grid(grid_n).collect();
    let mut best: Option<(f64, Vec<GroupError>, PQClassifier)> = None;
    for base in &h.members {
        let mut params = PQParams::default();
        let mut errors = Vec::new();
        for g in d.groups() {
            let (err, u, v) = best_group_error(base, d, g, &grid)?;
            params.set(g.clone(), from_acceptance(u, v));
            errors.push(GroupError {
                group: g.clone(),
                error: err,
            });
        }
        let worst = errors.iter().map(|e| e.error).fold(0.0, f64::max);
        if best.as_ref().is_none_or(|(w, _, _)| worst < *w) {
            best = Some((worst, errors, PQClassifier::new(base.clone(), params)));
        }
    }
    best.ok_or(Error::EmptyDistribution)
}

fn best_group_error(base: &BaseClassifier, d: &Distribution, g: &GroupId, grid: &[f64]) -> Result<(f64, f64, f64)> {
    // masses split by (label, base prediction)
    let mut m = [[0.0f64; 2]; 2];
    for a in d.group_atoms(g) {
        m[usize::from(a.label.is_positive())][usize::from(base.predict(a)?)] += a.mass;
    }
    let total = d.group_mass(g);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for &u in grid {
        for &v in grid.iter().take_while(|&&v| v <= u) {
            let err = u * m[0][1] + (1.0 - u) * m[1][1] + v * m[0][0] + (1.0 - v) * m[1][0];
            let err = err / total;
            if err < best.0 {
                best = (err, u, v);
            }
        }
    }
    Ok(best)
}

/// Duplicates and flips a small group and reports the least achievable
/// worst-group error against the clean minimax optimum.
pub fn minimax_demo(alpha: f64, grid_n: usize, gamma: Option<f64>) -> Result<MinimaxReport> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let small = if alpha > 0.0 { SMALL_GROUP_RATIO * alpha } else { 0.09 };
    let d = balanced_instance(small)?;
    let dt = if alpha > 0.0 {
        duplicate_flip_attack(&d, &"B".into(), alpha)?.1
    } else {
        d.clone()
    };
    let h = HypothesisClass::all_tables(&d)?;
    let (opt_clean, _, _) = minimax(&d, &h, grid_n)?;
    let (max_group_error, groups, classifier) = minimax(&dt, &h, grid_n)?;
    Ok(MinimaxReport {
        alpha,
        small_group_mass: small,
        groups,
        max_group_error,
        opt_clean,
        gamma,
        gamma_feasible: gamma.map(|g| max_group_error <= g),
        classifier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::approx_eq;

    #[test]
    fn eopp_floor() {
        let c = certify_lower_bound(BoundNotion::EqualOpportunity, 0.04, 201).unwrap();
        assert!(approx_eq(c.claimed, 0.1));
        assert!(c.floor >= 0.09 && c.pass, "{c:?}");
        let c = certify_lower_bound(BoundNotion::EqualOpportunity, 0.01, 201).unwrap();
        assert!(c.floor >= 0.04 && c.pass, "{c:?}");
        let tiny = certify_lower_bound(BoundNotion::EqualOpportunity, 1e-6, 201).unwrap();
        assert!(tiny.floor <= 1e-3);
    }

    #[test]
    fn eodds_floor() {
        let c = certify_lower_bound(BoundNotion::EqualizedOdds, 0.1, 201).unwrap();
        assert!(c.floor >= 0.44 && c.pass, "{c:?}");
        assert_eq!(c.clean_optimum, 0.0);
    }

    #[test]
    fn parity_calibration_floor_certified() {
        let c = certify_lower_bound(BoundNotion::ParityCalibration, 0.1, 101).unwrap();
        assert!(approx_eq(c.floor, 0.5) && c.pass, "{c:?}");
    }

    #[test]
    fn minimax_examples() {
        let r = minimax_demo(0.1, 51, Some(0.1)).unwrap();
        assert!(r.max_group_error >= 0.45);
        assert_eq!(r.opt_clean, 0.0);
        assert_eq!(r.gamma_feasible, Some(false));
        for g in &r.groups {
            assert!(r.max_group_error >= g.error);
        }
        let clean = minimax_demo(0.0, 51, None).unwrap();
        assert_eq!(clean.max_group_error, clean.opt_clean);
    }

    #[test]
    fn bound_notion_parsing() {
        assert_eq!("eopp".parse::<BoundNotion>().unwrap(), BoundNotion::EqualOpportunity);
        assert_eq!("parity-calibration".parse::<BoundNotion>().unwrap(), BoundNotion::ParityCalibration);
        assert!("dp".parse::<BoundNotion>().is_err());
    }
}
