//! Binned real-valued predictors, group-wise calibration, per-group
//! recalibration, and the parity-calibration and predictive-parity floors.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::adversaries::duplicate_flip_attack;
use crate::classifiers::{HypothesisClass, Notion};
use crate::dist::{Atom, Distribution, GroupId, Label, PointId};
use crate::num;
use crate::repair::{best_response, BestResponseConfig, RepairWitness};
use crate::{Error, Result, EXACT_TOL};

/// Values of one bin: a shared value and per-group overrides.
#[derive(Clone, Debug, Default, PartialEq)]
struct BinValues {
    shared: Option<f64>,
    per_group: BTreeMap<GroupId, f64>,
}

/// Assigns every point to one of finitely many bins, each carrying a value in
/// `[0, 1]` that may differ per group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "PredictorRepr", try_from = "PredictorRepr")]
pub struct BinnedPredictor {
    bins: BTreeMap<u32, BinValues>,
    shared_assignment: BTreeMap<PointId, u32>,
    group_assignment: BTreeMap<(GroupId, PointId), u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinRepr {
    pub index: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub values: BTreeMap<GroupId, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRepr {
    pub point: PointId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<GroupId>,
    pub bin: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictorRepr {
    pub bins: Vec<BinRepr>,
    pub assignment: Vec<AssignmentRepr>,
}

impl From<BinnedPredictor> for PredictorRepr {
    fn from(h: BinnedPredictor) -> PredictorRepr {
        let bins = h
            .bins
            .into_iter()
            .map(|(index, v)| BinRepr {
                index,
                value: v.shared,
                values: v.per_group,
            })
            .collect();
        let mut assignment: Vec<AssignmentRepr> = h
            .shared_assignment
            .into_iter()
            .map(|(point, bin)| AssignmentRepr {
                point,
                group: None,
                bin,
            })
            .collect();
        assignment.extend(h.group_assignment.into_iter().map(|((g, point), bin)| {
            AssignmentRepr {
                point,
                group: Some(g),
                bin,
            }
        }));
        PredictorRepr { bins, assignment }
    }
}

impl TryFrom<PredictorRepr> for BinnedPredictor {
    type Error = Error;

    fn try_from(r: PredictorRepr) -> Result<BinnedPredictor> {
        let mut h = BinnedPredictor::empty();
        for b in r.bins {
            if let Some(v) = b.value {
                h.set_value(b.index, None, v)?;
            }
            for (g, v) in b.values {
                h.set_value(b.index, Some(g), v)?;
            }
        }
        for a in r.assignment {
            h.assign(a.point, a.group, a.bin);
        }
        h.validate()?;
        Ok(h)
    }
}

impl BinnedPredictor {
    pub fn empty() -> BinnedPredictor {
        BinnedPredictor {
            bins: BTreeMap::new(),
            shared_assignment: BTreeMap::new(),
            group_assignment: BTreeMap::new(),
        }
    }

    /// Predictor with shared bin values and the given (optionally
    /// group-specific) assignments.
    pub fn from_parts(
        values: &[(u32, f64)],
        assignment: impl IntoIterator<Item = (PointId, Option<GroupId>, u32)>,
    ) -> Result<BinnedPredictor> {
        let mut h = BinnedPredictor::empty();
        for (bin, v) in values {
            h.set_value(*bin, None, *v)?;
        }
        for (p, g, bin) in assignment {
            h.assign(p, g, bin);
        }
        h.validate()?;
        Ok(h)
    }

    pub fn set_value(&mut self, bin: u32, group: Option<GroupId>, value: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&value) {
            return Err(Error::InvalidArgument(alloc::format!(
                "bin {bin} value {value} outside [0, 1]"
            )));
        }
        let entry = self.bins.entry(bin).or_default();
        match group {
            Some(g) => {
                entry.per_group.insert(g, value);
            }
            None => entry.shared = Some(value),
        }
        Ok(())
    }

    pub fn assign(&mut self, point: PointId, group: Option<GroupId>, bin: u32) {
        match group {
            Some(g) => {
                self.group_assignment.insert((g, point), bin);
            }
            None => {
                self.shared_assignment.insert(point, bin);
            }
        }
        self.bins.entry(bin).or_default();
    }

    fn validate(&self) -> Result<()> {
        let used = self
            .shared_assignment
            .values()
            .map(|b| (*b, None))
            .chain(self.group_assignment.iter().map(|((g, _), b)| (*b, Some(g))));
        for (bin, g) in used {
            let v = &self.bins[&bin];
            let ok = v.shared.is_some() || g.is_some_and(|g| v.per_group.contains_key(g));
            if !ok {
                return Err(Error::MissingBinValue {
                    bin,
                    group: g.cloned().unwrap_or_else(|| GroupId::from("*")),
                });
            }
        }
        Ok(())
    }

    pub fn bin_of(&self, atom: &Atom) -> Result<u32> {
        self.group_assignment
            .get(&(atom.group.clone(), atom.point.clone()))
            .or_else(|| self.shared_assignment.get(&atom.point))
            .copied()
            .ok_or_else(|| Error::UnassignedPoint {
                point: atom.point.clone(),
                group: atom.group.clone(),
            })
    }

    pub fn value(&self, bin: u32, group: &GroupId) -> Result<f64> {
        self.bins
            .get(&bin)
            .and_then(|v| v.per_group.get(group).copied().or(v.shared))
            .ok_or_else(|| Error::MissingBinValue {
                bin,
                group: group.clone(),
            })
    }

    pub fn predict(&self, atom: &Atom) -> Result<f64> {
        self.value(self.bin_of(atom)?, &atom.group)
    }

    /// Same assignment maps (prediction structure), values aside.
    pub fn same_assignment(&self, other: &BinnedPredictor) -> bool {
        self.shared_assignment == other.shared_assignment
            && self.group_assignment == other.group_assignment
    }

    pub fn bin_indices(&self) -> impl Iterator<Item = u32> + '_ {
        self.bins.keys().copied()
    }
}

/// Cell of one group and bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationCell {
    pub group: GroupId,
    pub bin: u32,
    pub value: f64,
    /// Joint mass of the cell.
    pub mass: f64,
    /// `P[x in bin | z]`.
    pub occupancy: f64,
    /// `E[y | bin, z]`; `None` for empty cells.
    pub conditional_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub cells: Vec<CalibrationCell>,
    pub max_gap: f64,
    pub weighted_l1: f64,
}

impl CalibrationReport {
    pub fn group_max_gap(&self, g: &GroupId) -> f64 {
        self.cells
            .iter()
            .filter(|c| &c.group == g)
            .filter_map(|c| c.conditional_mean.map(|m| num::abs(c.value - m)))
            .fold(0.0, f64::max)
    }
}

fn cell_masses(h: &BinnedPredictor, d: &Distribution) -> Result<BTreeMap<(GroupId, u32), [f64; 2]>> {
    let mut parts: BTreeMap<(GroupId, u32), [Vec<f64>; 2]> = BTreeMap::new();
    for a in d.atoms() {
        let bin = h.bin_of(a)?;
        let slot = parts.entry((a.group.clone(), bin)).or_default();
        slot[0].push(a.mass);
        if a.label.is_positive() {
            slot[1].push(a.mass);
        }
    }
    Ok(parts
        .into_iter()
        .map(|(k, [m, p])| (k, [num::sum(m), num::sum(p)]))
        .collect())
}

/// Exact occupancies and conditional means of every occupied (group, bin).
pub fn calibration_report(h: &BinnedPredictor, d: &Distribution) -> Result<CalibrationReport> {
    let masses = cell_masses(h, d)?;
    let mut cells = Vec::with_capacity(masses.len());
    let mut gaps = Vec::new();
    let mut max_gap: f64 = 0.0;
    for ((group, bin), [mass, pos]) in masses {
        let value = h.value(bin, &group)?;
        let group_mass = d.group_mass(&group);
        let conditional_mean = (mass > 0.0).then(|| pos / mass);
        if let Some(m) = conditional_mean {
            let gap = num::abs(value - m);
            max_gap = max_gap.max(gap);
            gaps.push(mass * gap);
        }
        cells.push(CalibrationCell {
            occupancy: mass / group_mass,
            group,
            bin,
            value,
            mass,
            conditional_mean,
        });
    }
    Ok(CalibrationReport {
        cells,
        max_gap,
        weighted_l1: num::sum(gaps),
    })
}

/// Replaces each occupied cell's value with its conditional label mean under
/// `d_tilde`. Empty cells and the assignment are left as they were.
pub fn recalibrate_per_group(h: &BinnedPredictor, d_tilde: &Distribution) -> Result<BinnedPredictor> {
    let mut out = h.clone();
    for ((group, bin), [mass, pos]) in cell_masses(h, d_tilde)? {
        if mass > 0.0 {
            out.set_value(bin, Some(group), (pos / mass).clamp(0.0, 1.0))?;
        }
    }
    Ok(out)
}

/// `sum_cells P_d[cell] |r - r_hat|` between two predictors with the same
/// assignment.
pub fn value_shift(h: &BinnedPredictor, h_hat: &BinnedPredictor, d: &Distribution) -> Result<f64> {
    if !h.same_assignment(h_hat) {
        return Err(Error::InvalidArgument("predictors differ in bin assignment".into()));
    }
    let terms = d
        .atoms()
        .iter()
        .map(|a| Ok(a.mass * num::abs(h.predict(a)? - h_hat.predict(a)?)))
        .collect::<Result<Vec<f64>>>()?;
    Ok(num::sum(terms))
}

/// `E_d |h(x) - y|`, the error of predicting 1 with probability `h(x)`.
pub fn expected_error(h: &BinnedPredictor, d: &Distribution) -> Result<f64> {
    let terms = d
        .atoms()
        .iter()
        .map(|a| Ok(a.mass * num::abs(h.predict(a)? - a.label.value())))
        .collect::<Result<Vec<f64>>>()?;
    Ok(num::sum(terms))
}

/// Classification error of `1[h(x) >= threshold]`.
pub fn thresholded_error(h: &BinnedPredictor, d: &Distribution, threshold: f64) -> Result<f64> {
    let terms = d
        .atoms()
        .iter()
        .map(|a| {
            let yes = h.predict(a)? >= threshold;
            Ok(if yes == a.label.is_positive() { 0.0 } else { a.mass })
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(num::sum(terms))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParityCalibrationCheck {
    pub is_calibrated: bool,
    /// Largest difference across groups of `P[h(x) = r | z]` over output
    /// values `r`.
    pub occupancy_gap: f64,
    pub parity_calibrated: bool,
}

/// `(value, mass)` pairs of one group's output distribution.
type Occupancy = Vec<(f64, f64)>;

/// Output-value distribution of each group; values within `EXACT_TOL` are
/// merged.
fn value_occupancy(h: &BinnedPredictor, d: &Distribution) -> Result<Vec<(GroupId, Occupancy)>> {
    let mut out = Vec::new();
    for g in d.groups() {
        let total = d.group_mass(g);
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for a in d.group_atoms(g) {
            let v = h.predict(a)?;
            match pairs.iter_mut().find(|(x, _)| num::abs(*x - v) <= EXACT_TOL) {
                Some(slot) => slot.1 += a.mass / total,
                None => pairs.push((v, a.mass / total)),
            }
        }
        out.push((g.clone(), pairs));
    }
    Ok(out)
}

pub fn parity_calibration_check(h: &BinnedPredictor, d: &Distribution) -> Result<ParityCalibrationCheck> {
    let report = calibration_report(h, d)?;
    let is_calibrated = report.max_gap <= EXACT_TOL;
    let occ = value_occupancy(h, d)?;
    let mut values: Vec<f64> = occ.iter().flat_map(|(_, p)| p.iter().map(|x| x.0)).collect();
    values.sort_by(f64::total_cmp);
    values.dedup_by(|a, b| num::abs(*a - *b) <= EXACT_TOL);
    let at = |pairs: &[(f64, f64)], v: f64| {
        pairs
            .iter()
            .find(|(x, _)| num::abs(*x - v) <= EXACT_TOL)
            .map_or(0.0, |p| p.1)
    };
    let mut occupancy_gap: f64 = 0.0;
    for v in values {
        let shares: Vec<f64> = occ.iter().map(|(_, p)| at(p, v)).collect();
        let hi = shares.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = shares.iter().copied().fold(f64::INFINITY, f64::min);
        if shares.len() > 1 {
            occupancy_gap = occupancy_gap.max(hi - lo);
        }
    }
    Ok(ParityCalibrationCheck {
        is_calibrated,
        occupancy_gap,
        parity_calibrated: is_calibrated && occupancy_gap <= EXACT_TOL,
    })
}

/// Largest support enumerated by [`parity_calibration_floor`].
pub const FLOOR_POINT_LIMIT: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationFloor {
    /// Smallest expected error on `D` among parity-calibrated predictors.
    pub floor: f64,
    pub best: Option<BinnedPredictor>,
    /// Number of enumerated predictors passing the check.
    pub feasible: usize,
    pub examined: usize,
}

/// Enumerates every group-aware assignment of the points of `d_tilde` into at
/// most `bins` bins, with values calibrated on `d_tilde`, and returns the
/// smallest expected error on `d` among those passing the parity-calibration
/// check on `d_tilde`.
pub fn parity_calibration_floor(
    d_tilde: &Distribution,
    d: &Distribution,
    bins: u32,
) -> Result<CalibrationFloor> {
    let points = d_tilde.points();
    if points.len() > FLOOR_POINT_LIMIT {
        return Err(Error::SupportTooLarge {
            size: points.len(),
            limit: FLOOR_POINT_LIMIT,
        });
    }
    if bins == 0 {
        return Err(Error::InvalidArgument("at least one bin is required".into()));
    }
    let total = (bins as usize).pow(points.len() as u32);
    let mut best: Option<(f64, BinnedPredictor)> = None;
    let mut feasible = 0;
    for code in 0..total {
        let mut h = BinnedPredictor::empty();
        let mut rest = code;
        for p in &points {
            let bin = (rest % bins as usize) as u32;
            rest /= bins as usize;
            h.assign(p.point.clone(), Some(p.group.clone()), bin);
        }
        // placeholder values, overwritten for every occupied cell
        for b in 0..bins {
            h.set_value(b, None, 0.0)?;
        }
        let h = recalibrate_per_group(&h, d_tilde)?;
        if !parity_calibration_check(&h, d_tilde)?.parity_calibrated {
            continue;
        }
        feasible += 1;
        let err = expected_error(&h, d)?;
        if best.as_ref().is_none_or(|(e, _)| err < *e) {
            best = Some((err, h));
        }
    }
    let (floor, best) = match best {
        Some((e, h)) => (e, Some(h)),
        None => (f64::INFINITY, None),
    };
    Ok(CalibrationFloor {
        floor,
        best,
        feasible,
        examined: total,
    })
}

/// Balanced two-group instance with a deterministic label at every point.
pub fn balanced_instance(small_group_mass: f64) -> Result<Distribution> {
    if !(small_group_mass > 0.0 && small_group_mass < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "group mass {small_group_mass} outside (0, 1)"
        )));
    }
    let r_a = 1.0 - small_group_mass;
    Distribution::new(vec![
        Atom::new("x1", Label::Positive, "A", r_a / 2.0).with_feature(1.0),
        Atom::new("x2", Label::Negative, "A", r_a / 2.0).with_feature(0.0),
        Atom::new("x3", Label::Positive, "B", small_group_mass / 2.0).with_feature(1.0),
        Atom::new("x4", Label::Negative, "B", small_group_mass / 2.0).with_feature(0.0),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictiveParityCertificate {
    pub alpha: f64,
    pub small_group_mass: f64,
    pub floor: f64,
    pub clean_optimum: f64,
    pub witness: RepairWitness,
}

/// Duplicates and flips the small group of the balanced instance, then finds
/// the least clean error of any grid classifier with equal precision on `D~`
/// and a positive acceptance rate in every group.
pub fn predictive_parity_attack_certify(
    alpha: f64,
    small_group_mass: f64,
    grid_n: usize,
) -> Result<PredictiveParityCertificate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let d = balanced_instance(small_group_mass)?;
    let (_, dt) = duplicate_flip_attack(&d, &"B".into(), alpha)?;
    let h = HypothesisClass::all_tables(&d)?;
    let clean = best_response(&d, &d, &h, Notion::PredictiveParity, &BestResponseConfig::new(grid_n))?;
    let cfg = BestResponseConfig::new(grid_n).with_baseline(clean.error_on_original);
    let witness = best_response(&dt, &d, &h, Notion::PredictiveParity, &cfg)?;
    Ok(PredictiveParityCertificate {
        alpha,
        small_group_mass,
        floor: witness.excess_error_on_original,
        clean_optimum: clean.error_on_original,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Label::{Negative as N, Positive as P};
    use crate::num::approx_eq;
    use alloc::format;
    use alloc::string::String;
    use proptest::prelude::*;

    fn skewed() -> Distribution {
        Distribution::new(vec![
            Atom::new("a1", P, "A", 0.21),
            Atom::new("a1", N, "A", 0.09),
            Atom::new("a2", P, "A", 0.06),
            Atom::new("a2", N, "A", 0.24),
            Atom::new("b1", P, "B", 0.1),
            Atom::new("b1", N, "B", 0.1),
            Atom::new("b2", P, "B", 0.05),
            Atom::new("b2", N, "B", 0.15),
        ])
        .unwrap()
    }

    fn shared(values: &[(u32, f64)], assign: &[(&str, u32)]) -> BinnedPredictor {
        BinnedPredictor::from_parts(
            values,
            assign.iter().map(|(p, b)| (PointId::from(*p), None, *b)),
        )
        .unwrap()
    }

    #[test]
    fn calibrated_predictor_has_no_gap() {
        let d = skewed();
        let mut h = shared(&[(0, 0.5), (1, 0.5)], &[("a1", 0), ("a2", 1), ("b1", 0), ("b2", 1)]);
        h.set_value(0, Some("A".into()), 0.7).unwrap();
        h.set_value(1, Some("A".into()), 0.2).unwrap();
        h.set_value(1, Some("B".into()), 0.25).unwrap();
        let r = calibration_report(&h, &d).unwrap();
        assert!(r.max_gap <= 1e-12);
        for g in d.groups() {
            let occ: f64 = r.cells.iter().filter(|c| &c.group == g).map(|c| c.occupancy).sum();
            assert!(approx_eq(occ, 1.0));
        }
    }

    #[test]
    fn single_bin_gap() {
        let d = Distribution::new(vec![Atom::new("x", P, "A", 0.5), Atom::new("x", N, "A", 0.5)])
            .unwrap();
        let h = shared(&[(0, 0.7)], &[("x", 0)]);
        let r = calibration_report(&h, &d).unwrap();
        assert!(approx_eq(r.max_gap, 0.2));
        assert!(approx_eq(r.weighted_l1, 0.2));
    }

    #[test]
    fn unassigned_point_is_an_error() {
        let d = skewed();
        let h = shared(&[(0, 0.5)], &[("a1", 0)]);
        assert!(matches!(calibration_report(&h, &d), Err(Error::UnassignedPoint { .. })));
    }

    #[test]
    fn missing_value_is_rejected() {
        let repr = PredictorRepr {
            bins: vec![BinRepr {
                index: 0,
                value: None,
                values: BTreeMap::new(),
            }],
            assignment: vec![AssignmentRepr {
                point: "x".into(),
                group: None,
                bin: 0,
            }],
        };
        assert!(BinnedPredictor::try_from(repr).is_err());
    }

    #[test]
    fn duplication_washes_out_cells() {
        let d = balanced_instance(0.09).unwrap();
        let (_, dt) = duplicate_flip_attack(&d, &"B".into(), 0.1).unwrap();
        let h = shared(&[(0, 1.0), (1, 0.0)], &[("x1", 0), ("x2", 1), ("x3", 0), ("x4", 1)]);
        let r = calibration_report(&h, &dt).unwrap();
        for c in r.cells.iter().filter(|c| c.group.0 == "B") {
            assert!(approx_eq(c.conditional_mean.unwrap(), 0.5));
        }
    }

    #[test]
    fn recalibration_fixed_point_without_corruption() {
        let d = skewed();
        let h = shared(&[(0, 0.5)], &[("a1", 0), ("a2", 0), ("b1", 0), ("b2", 0)]);
        let h_star = recalibrate_per_group(&h, &d).unwrap();
        assert_eq!(recalibrate_per_group(&h_star, &d).unwrap(), h_star);
    }

    #[test]
    fn single_bin_negative_injection() {
        // bin mass 0.2 with value 0.5; adversary adds 0.05 of negatives
        let d = Distribution::new(vec![
            Atom::new("x", P, "A", 0.1),
            Atom::new("x", N, "A", 0.1),
            Atom::new("y", P, "A", 0.8),
        ])
        .unwrap();
        let h = shared(&[(0, 0.5), (1, 1.0)], &[("x", 0), ("y", 1)]);
        let alpha = 0.05;
        let q = Distribution::new(vec![Atom::new("x", N, "A", 1.0)]).unwrap();
        let dt = d.mix(&q, alpha).unwrap();
        let h_hat = recalibrate_per_group(&h, &dt).unwrap();
        let r_hat = h_hat.value(0, &"A".into()).unwrap();
        let bin_mass = 0.2 * (1.0 - alpha) + alpha;
        assert!(approx_eq(r_hat, 0.1 * (1.0 - alpha) / bin_mass));
        assert!(0.5 - r_hat <= alpha / bin_mass + 1e-12);
        assert!(approx_eq(value_shift(&h, &h_hat, &dt).unwrap(), bin_mass * (0.5 - r_hat)));
        assert!(value_shift(&h, &h_hat, &dt).unwrap() <= alpha + 1e-12);
    }

    #[test]
    fn empty_cells_keep_value() {
        let d = Distribution::new(vec![Atom::new("x", P, "A", 1.0)]).unwrap();
        let mut h = shared(&[(0, 0.3), (1, 0.6)], &[("x", 0), ("z", 1)]);
        h.assign("z".into(), None, 1);
        let h_hat = recalibrate_per_group(&h, &d).unwrap();
        assert_eq!(h_hat.value(1, &"A".into()).unwrap(), 0.6);
        assert_eq!(h_hat.value(0, &"A".into()).unwrap(), 1.0);
    }

    #[test]
    fn parity_check_examples() {
        let same = Distribution::new(vec![
            Atom::new("x", P, "A", 0.25),
            Atom::new("x", N, "A", 0.25),
            Atom::new("x", P, "B", 0.25),
            Atom::new("x", N, "B", 0.25),
        ])
        .unwrap();
        let h = shared(&[(0, 0.5)], &[("x", 0)]);
        let c = parity_calibration_check(&h, &same).unwrap();
        assert!(c.is_calibrated && c.parity_calibrated);
        assert_eq!(c.occupancy_gap, 0.0);

        let single = Distribution::new(vec![Atom::new("x", P, "A", 1.0)]).unwrap();
        let h = shared(&[(0, 1.0)], &[("x", 0)]);
        assert_eq!(parity_calibration_check(&h, &single).unwrap().occupancy_gap, 0.0);
    }

    #[test]
    fn duplication_separates_occupancy() {
        let d = balanced_instance(0.09).unwrap();
        let (_, dt) = duplicate_flip_attack(&d, &"B".into(), 0.1).unwrap();
        let h = shared(&[(0, 1.0), (1, 0.0)], &[("x1", 0), ("x2", 1), ("x3", 0), ("x4", 1)]);
        let h = recalibrate_per_group(&h, &dt).unwrap();
        let c = parity_calibration_check(&h, &dt).unwrap();
        assert!(c.is_calibrated);
        // A spreads over {0, 1}; B sits entirely at 1/2
        assert!(approx_eq(c.occupancy_gap, 1.0));
        assert!(!c.parity_calibrated);
    }

    #[test]
    fn parity_calibration_floor_on_duplication() {
        let d = balanced_instance(0.09).unwrap();
        let (_, dt) = duplicate_flip_attack(&d, &"B".into(), 0.1).unwrap();
        let f = parity_calibration_floor(&dt, &d, 3).unwrap();
        assert_eq!(f.examined, 81);
        assert!(f.feasible > 0);
        // the only passing predictors put everything at 1/2
        assert!(approx_eq(f.floor, 0.5));
        let clean = parity_calibration_floor(&d, &d, 3).unwrap();
        assert!(clean.floor <= 1e-12);
    }

    #[test]
    fn predictive_parity_floor() {
        let c = predictive_parity_attack_certify(0.1, 0.09, 51).unwrap();
        assert!(c.clean_optimum <= 1e-12);
        assert!(c.floor >= 0.2 && c.floor <= 0.5, "{}", c.floor);
        let stats = c.witness.classifier.group_stats(&duplicate_flip_attack(
            &balanced_instance(0.09).unwrap(),
            &"B".into(),
            0.1,
        )
        .unwrap()
        .1)
        .unwrap();
        for r in &stats.groups {
            assert!(r.positive_rate > 0.0);
        }
        assert!(approx_eq(stats.group(&"B".into()).unwrap().ppv.unwrap(), 0.5));
    }

    #[test]
    fn predictive_parity_needs_budget() {
        let err = predictive_parity_attack_certify(0.1, 0.3, 51).unwrap_err();
        assert!(matches!(err, Error::InsufficientBudget { .. }));
    }

    #[test]
    fn predictor_json_round_trip() {
        let mut h = shared(&[(0, 0.25), (3, 0.75)], &[("a", 0), ("b", 3)]);
        h.set_value(3, Some("B".into()), 0.5).unwrap();
        h.assign("c".into(), Some("B".into()), 3);
        let s: String = serde_json::to_string(&h).unwrap();
        let back: BinnedPredictor = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }

    fn arb_binned() -> impl Strategy<Value = (Distribution, BinnedPredictor, Distribution, f64)> {
        let atoms = prop::collection::vec((0u8..6, any::<bool>(), any::<bool>(), 0.01f64..1.0), 2..16);
        let q = prop::collection::vec((0u8..6, any::<bool>(), any::<bool>(), 0.01f64..1.0), 1..6);
        (atoms, q, prop::collection::vec(0u32..3, 12), 0.0f64..0.3).prop_map(|(raw, qraw, bins, alpha)| {
            let build = |raw: &[(u8, bool, bool, f64)]| {
                let total: f64 = raw.iter().map(|r| r.3).sum();
                Distribution::new(
                    raw.iter()
                        .map(|(i, l, g, m)| {
                            Atom::new(&format!("p{i}"), (*l).into(), if *g { "B" } else { "A" }, m / total)
                        })
                        .collect(),
                )
                .unwrap()
            };
            let d = build(&raw);
            let pts = d.points();
            let q_total: f64 = qraw.iter().map(|r| r.3).sum();
            let q = Distribution::new(
                qraw.iter()
                    .map(|(i, l, _, m)| Atom {
                        label: (*l).into(),
                        mass: m / q_total,
                        ..pts[*i as usize % pts.len()].clone()
                    })
                    .collect(),
            )
            .unwrap();
            let mut h = BinnedPredictor::empty();
            for b in 0..3 {
                h.set_value(b, None, 0.5).unwrap();
            }
            for i in 0..6u8 {
                for (k, g) in ["A", "B"].iter().enumerate() {
                    h.assign(format!("p{i}").as_str().into(), Some((*g).into()), bins[i as usize * 2 + k]);
                }
            }
            // start from a predictor calibrated on the clean distribution
            let h = recalibrate_per_group(&h, &d).unwrap();
            (d, h, q, alpha)
        })
    }

    proptest! {
        #[test]
        fn recalibration_contract((d, h, q, alpha) in arb_binned()) {
            let dt = d.mix(&q, alpha).unwrap();
            let h_hat = recalibrate_per_group(&h, &dt).unwrap();
            prop_assert!(h_hat.same_assignment(&h));
            let r = calibration_report(&h_hat, &dt).unwrap();
            prop_assert!(r.max_gap <= 1e-9);
            prop_assert!(value_shift(&h, &h_hat, &dt).unwrap() <= alpha + 1e-9);
            prop_assert_eq!(recalibrate_per_group(&h_hat, &dt).unwrap(), h_hat.clone());
            let c = parity_calibration_check(&h_hat, &dt).unwrap();
            prop_assert!(c.is_calibrated);
            if c.parity_calibrated {
                prop_assert!(c.is_calibrated);
            }
        }
    }
}
