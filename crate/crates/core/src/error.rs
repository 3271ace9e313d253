use alloc::string::String;

use crate::dist::{GroupId, PointId};

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("distribution has no atoms with positive mass")]
    EmptyDistribution,
    #[error("atom ({point}, {group}) has negative mass {mass}")]
    NegativeMass {
        point: PointId,
        group: GroupId,
        mass: f64,
    },
    #[error("atom ({point}, {group}) has a non-finite mass or feature")]
    NonFinite { point: PointId, group: GroupId },
    #[error("total mass {total} differs from 1 by more than the input tolerance")]
    NotNormalized { total: f64 },
    #[error("group {0} is not part of the distribution")]
    UnknownGroup(GroupId),
    #[error("group {0} has no mass")]
    EmptyGroup(GroupId),
    #[error("point {point} in group {group} carries conflicting feature values")]
    ConflictingFeature { point: PointId, group: GroupId },
    #[error("label must be 0 or 1, got {0}")]
    InvalidLabel(u8),
    #[error("corruption budget {0} is outside its admissible range")]
    AlphaOutOfRange(f64),
    #[error("classifier is undefined at point {point} in group {group}")]
    UndefinedPoint { point: PointId, group: GroupId },
    #[error("threshold classifier needs a feature at point {point} in group {group}")]
    MissingFeature { point: PointId, group: GroupId },
    #[error("{statistic} is undefined for group {group}, so {notion} cannot be evaluated")]
    AbsentConditional {
        notion: &'static str,
        statistic: &'static str,
        group: GroupId,
    },
    #[error("attack needs budget {required} but only {alpha} is available")]
    InsufficientBudget { required: f64, alpha: f64 },
    #[error("no eligible point for the attack in group {group}")]
    NoEligiblePoint { group: GroupId },
    #[error("support has {size} entries but the brute-force search accepts at most {limit}; use a smaller instance")]
    SupportTooLarge { size: usize, limit: usize },
    #[error("h* violates {notion} on the clean distribution (gap {gap})")]
    RealizabilityViolated { notion: &'static str, gap: f64 },
    #[error("no grid classifier satisfies {notion} within tolerance {tolerance}")]
    Infeasible { notion: &'static str, tolerance: f64 },
    #[error("point {point} in group {group} has no bin")]
    UnassignedPoint { point: PointId, group: GroupId },
    #[error("bin {bin} has no value for group {group}")]
    MissingBinValue { bin: u32, group: GroupId },
    #[error("log-log fit needs at least 3 positive points, {remaining} remain")]
    TooFewPoints { remaining: usize },
    #[error("drift identity for group {group} predicts {predicted} but {measured} was measured")]
    DriftIdentityMismatch {
        group: GroupId,
        predicted: f64,
        measured: f64,
    },
    #[error("{notion} witness at alpha={alpha} leaves gap {gap} on the corrupted distribution")]
    WitnessGapViolated {
        notion: &'static str,
        alpha: f64,
        gap: f64,
    },
    #[error("{notion} is not supported by {operation}")]
    UnsupportedNotion {
        notion: &'static str,
        operation: &'static str,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
