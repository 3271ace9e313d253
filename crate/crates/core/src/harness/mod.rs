//! Robustness sweeps over the budget `alpha`, scaling-exponent fits, Ω(1)
//! floor certificates and the minimax demonstration.

mod certify;
pub mod instances;
mod sweep;

pub use certify::{
    certify_lower_bound, minimax_demo, BoundNotion, Certificate, GroupError, MinimaxReport,
};
pub use instances::{Family, Instance};
pub use sweep::{
    evaluate_point, run_sweep, summarize, ExperimentConfig, HypothesisSpec, RobustnessReport,
    SweepNotion, SweepRecord, SweepSummary,
};

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::num;
use crate::{Error, Result};

/// Least-squares fit of `ln beta` on `ln alpha`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Points dropped because `beta <= 0`.
    pub excluded: usize,
}

pub fn fit_loglog(points: &[(f64, f64)]) -> Result<LogLogFit> {
    let kept: Vec<(f64, f64)> = points
        .iter()
        .filter(|(a, b)| *a > 0.0 && *b > 0.0)
        .map(|(a, b)| (num::ln(*a), num::ln(*b)))
        .collect();
    let excluded = points.len() - kept.len();
    if excluded > 0 {
        log::warn!("log-log fit dropped {excluded} non-positive point(s)");
    }
    if kept.len() < 3 {
        return Err(Error::TooFewPoints {
            remaining: kept.len(),
        });
    }
    let n = kept.len() as f64;
    let mx = num::sum(kept.iter().map(|p| p.0)) / n;
    let my = num::sum(kept.iter().map(|p| p.1)) / n;
    let sxx = num::sum(kept.iter().map(|p| (p.0 - mx) * (p.0 - mx)));
    let sxy = num::sum(kept.iter().map(|p| (p.0 - mx) * (p.1 - my)));
    let syy = num::sum(kept.iter().map(|p| (p.1 - my) * (p.1 - my)));
    if sxx <= 0.0 {
        return Err(Error::InvalidArgument("log-log fit needs distinct alphas".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy <= 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(LogLogFit {
        slope,
        intercept,
        r_squared,
        excluded,
    })
}

/// Scaling regime read off a log-log slope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Linear,
    Sqrt,
    Constant,
    Inconclusive,
}

impl Verdict {
    pub fn name(self) -> &'static str {
        match self {
            Verdict::Linear => "linear",
            Verdict::Sqrt => "sqrt",
            Verdict::Constant => "constant",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

impl core::fmt::Display for Verdict {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

pub const LINEAR_BAND: (f64, f64) = (0.85, 1.15);
pub const SQRT_BAND: (f64, f64) = (0.4, 0.6);
pub const FLAT_SLOPE: f64 = 0.1;
/// Smallest `beta` that counts as bounded away from zero.
pub const CONSTANT_FLOOR: f64 = 0.05;

pub fn verdict(slope: f64, min_beta: f64) -> Verdict {
    let within = |(lo, hi): (f64, f64)| slope >= lo && slope <= hi;
    if within(LINEAR_BAND) {
        Verdict::Linear
    } else if within(SQRT_BAND) {
        Verdict::Sqrt
    } else if num::abs(slope) <= FLAT_SLOPE && min_beta >= CONSTANT_FLOOR {
        Verdict::Constant
    } else {
        Verdict::Inconclusive
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::approx_eq;
    use alloc::vec;
    use proptest::prelude::*;

    #[test]
    fn exact_power_laws() {
        let alphas = [0.01, 0.02, 0.04, 0.08];
        let lin: Vec<(f64, f64)> = alphas.iter().map(|a| (*a, *a)).collect();
        let f = fit_loglog(&lin).unwrap();
        assert!(approx_eq(f.slope, 1.0) && approx_eq(f.r_squared, 1.0));
        let sq: Vec<(f64, f64)> = alphas.iter().map(|a| (*a, a.sqrt())).collect();
        let f = fit_loglog(&sq).unwrap();
        assert!(approx_eq(f.slope, 0.5) && approx_eq(f.r_squared, 1.0));
        let flat: Vec<(f64, f64)> = alphas.iter().map(|a| (*a, 0.45)).collect();
        let f = fit_loglog(&flat).unwrap();
        assert!(f.slope.abs() <= 1e-12);
        assert!(approx_eq(f.intercept, 0.45f64.ln()));
    }

    #[test]
    fn non_positive_points_are_dropped() {
        let pts = vec![(0.01, 0.0), (0.02, 0.02), (0.04, 0.04), (0.08, 0.08)];
        let f = fit_loglog(&pts).unwrap();
        assert_eq!(f.excluded, 1);
        assert!(approx_eq(f.slope, 1.0));
        let err = fit_loglog(&pts[..3]).unwrap_err();
        assert_eq!(err, Error::TooFewPoints { remaining: 2 });
    }

    #[test]
    fn verdict_bands() {
        assert_eq!(verdict(0.92, 0.0), Verdict::Linear);
        assert_eq!(verdict(0.48, 0.0), Verdict::Sqrt);
        assert_eq!(verdict(-0.05, 0.44), Verdict::Constant);
        assert_eq!(verdict(0.05, 0.001), Verdict::Inconclusive);
        assert_eq!(verdict(0.7, 0.3), Verdict::Inconclusive);
    }

    proptest! {
        #[test]
        fn recovers_any_power_law(k in -2.0f64..2.0, c in 0.01f64..10.0) {
            let pts: Vec<(f64, f64)> = [0.01f64, 0.03, 0.1, 0.3]
                .iter()
                .map(|a| (*a, c * a.powf(k)))
                .collect();
            let f = fit_loglog(&pts).unwrap();
            prop_assert!((f.slope - k).abs() <= 1e-9);
            prop_assert!((f.intercept - c.ln()).abs() <= 1e-9);
        }
    }
}
