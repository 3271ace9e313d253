//! Canonical and randomized instance families.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adversaries::{AttackKind, Direction};
use crate::calibration::{balanced_instance, recalibrate_per_group, BinnedPredictor};
use crate::classifiers::{BaseClassifier, HypothesisClass};
use crate::dist::{Atom, Distribution, GroupId, Label, PointId};
use crate::{Error, Result};

/// Instance generator of a sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Two balanced groups of mass 1/2, corrupted by positives at an accepted
    /// point of group B.
    DpWorked,
    /// Four-point instance with a `sqrt(alpha)` group and a positive needle.
    Needle,
    /// Balanced instance whose small group is duplicated with flipped labels.
    /// The small group has mass `small_group_mass`, or `ratio * alpha`.
    Duplication {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        small_group_mass: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        ratio: Option<f64>,
    },
    /// Calibrated two-bin predictor with a fixed corruption.
    Calibration,
    /// Caller-supplied distribution.
    Inline {
        distribution: Distribution,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        h_star: Option<BaseClassifier>,
    },
    /// Seeded random instance on which accepting the positives is fair.
    Random {
        #[serde(default = "default_points")]
        points_per_group: usize,
    },
}

fn default_points() -> usize {
    3
}

/// Everything a sweep point needs besides the attack.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub clean: Distribution,
    pub h_star: BaseClassifier,
    pub hypotheses: HypothesisClass,
    pub default_attack: AttackKind,
    pub target_group: Option<GroupId>,
    pub predictor: Option<BinnedPredictor>,
}

/// Table accepting exactly the positively labelled points of `d`.
pub fn accept_positives(d: &Distribution) -> BaseClassifier {
    let names: Vec<&str> = d
        .points()
        .into_iter()
        .filter(|p| d.mass_of(&p.point, Label::Positive, &p.group) > 0.0)
        .map(|p| p.point.0.as_str())
        .collect();
    BaseClassifier::accepting(d, names)
}

fn tables_or_single(d: &Distribution, h: &BaseClassifier) -> Result<HypothesisClass> {
    match HypothesisClass::all_tables(d) {
        Ok(mut class) => {
            let index = class.members.iter().position(|m| same_predictions(m, h, d));
            if let Some(i) = index {
                class = class.with_optimum(i)?;
            } else {
                class.members.push(h.clone());
                let i = class.members.len() - 1;
                class = class.with_optimum(i)?;
            }
            Ok(class)
        }
        Err(Error::SupportTooLarge { .. }) => HypothesisClass::new(vec![h.clone()])?.with_optimum(0),
        Err(e) => Err(e),
    }
}

fn same_predictions(a: &BaseClassifier, b: &BaseClassifier, d: &Distribution) -> bool {
    d.points()
        .into_iter()
        .all(|p| matches!((a.predict(p), b.predict(p)), (Ok(x), Ok(y)) if x == y))
}

/// Clean distribution, predictor and corruption of the calibration family.
pub fn calibration_family() -> Result<(Distribution, BinnedPredictor, Distribution)> {
    use Label::{Negative as N, Positive as P};
    let d = Distribution::new(vec![
        Atom::new("a1", P, "A", 0.21),
        Atom::new("a1", N, "A", 0.09),
        Atom::new("a2", P, "A", 0.06),
        Atom::new("a2", N, "A", 0.24),
        Atom::new("b1", P, "B", 0.1),
        Atom::new("b1", N, "B", 0.1),
        Atom::new("b2", P, "B", 0.05),
        Atom::new("b2", N, "B", 0.15),
    ])?;
    let h = BinnedPredictor::from_parts(
        &[(0, 0.5), (1, 0.5)],
        [("a1", 0), ("b1", 0), ("a2", 1), ("b2", 1)]
            .into_iter()
            .map(|(p, b)| (PointId::from(p), None, b)),
    )?;
    let h = recalibrate_per_group(&h, &d)?;
    let q = Distribution::new(vec![Atom::new("a1", N, "A", 0.5), Atom::new("b2", P, "B", 0.5)])?;
    Ok((d, h, q))
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::DpWorked => "dp_worked",
            Family::Needle => "needle",
            Family::Duplication { .. } => "duplication",
            Family::Calibration => "calibration",
            Family::Inline { .. } => "inline",
            Family::Random { .. } => "random",
        }
    }

    /// Small-group mass of the duplication family at `alpha`.
    pub fn small_group_mass(&self, alpha: f64) -> Option<f64> {
        match self {
            Family::Duplication {
                small_group_mass,
                ratio,
            } => Some(small_group_mass.unwrap_or(ratio.unwrap_or(0.9) * alpha)),
            _ => None,
        }
    }

    pub fn instance<R: Rng>(&self, alpha: f64, rng: &mut R) -> Result<Instance> {
        let b = Some(GroupId::from("B"));
        let build = |clean: Distribution, h: BaseClassifier, attack, target| -> Result<Instance> {
            Ok(Instance {
                hypotheses: tables_or_single(&clean, &h)?,
                clean,
                h_star: h,
                default_attack: attack,
                target_group: target,
                predictor: None,
            })
        };
        match self {
            Family::DpWorked => {
                let d = balanced_instance(0.5)?;
                let h = accept_positives(&d);
                let attack = AttackKind::TprShift {
                    direction: Direction::Raise,
                    classifier: None,
                };
                build(d, h, attack, b)
            }
            Family::Needle => {
                let n = crate::adversaries::needle_eopp_attack(alpha)?;
                let h = accept_positives(&n.clean);
                build(n.clean, h, AttackKind::NeedleEopp, b)
            }
            Family::Duplication { .. } => {
                let r_b = self.small_group_mass(alpha).unwrap_or(0.0);
                let d = balanced_instance(r_b)?;
                let h = accept_positives(&d);
                build(d, h, AttackKind::DuplicateFlip, b)
            }
            Family::Calibration => {
                let (d, predictor, q) = calibration_family()?;
                let h = accept_positives(&d);
                let mut inst = build(d, h, AttackKind::Custom { q }, None)?;
                inst.predictor = Some(predictor);
                Ok(inst)
            }
            Family::Inline {
                distribution,
                h_star,
            } => {
                let h = h_star
                    .clone()
                    .unwrap_or_else(|| BaseClassifier::bayes_table(distribution));
                build(distribution.clone(), h, AttackKind::Identity, None)
            }
            Family::Random { points_per_group } => {
                let d = random_fair_distribution(rng, *points_per_group)?;
                let q = random_corruption(rng, &d)?;
                let h = accept_positives(&d);
                build(d, h, AttackKind::Custom { q }, None)
            }
        }
    }
}

/// Two groups with the same positive fraction and one label per point, so
/// accepting the positives has zero error and satisfies parity and equal
/// opportunity. At most `2 * 2 * points_per_group` atoms.
pub fn random_fair_distribution<R: Rng>(rng: &mut R, points_per_group: usize) -> Result<Distribution> {
    let k = points_per_group.max(1);
    let base_rate: f64 = rng.random_range(0.1..0.9);
    let r_b: f64 = rng.random_range(0.05..0.95);
    let mut atoms = Vec::new();
    for (g, share) in [("A", 1.0 - r_b), ("B", r_b)] {
        for (label, part) in [(Label::Positive, base_rate), (Label::Negative, 1.0 - base_rate)] {
            let n = rng.random_range(1..=k);
            let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = w.iter().sum();
            for (i, x) in w.iter().enumerate() {
                let tag = if label.is_positive() { "p" } else { "n" };
                let name = format!("{}{tag}{i}", g.to_ascii_lowercase());
                atoms.push(Atom::new(&name, label, g, share * part * x / total));
            }
        }
    }
    Distribution::new(atoms)
}

/// Random corruption on the support of `d`: up to four atoms with random
/// labels, or a point mass.
pub fn random_corruption<R: Rng>(rng: &mut R, d: &Distribution) -> Result<Distribution> {
    let mut points = d.points();
    points.shuffle(rng);
    let n = rng.random_range(1..=points.len().min(4));
    let atoms: Vec<Atom> = points[..n]
        .iter()
        .map(|p| Atom {
            label: Label::from(rng.random_bool(0.5)),
            mass: rng.random_range(0.05..1.0),
            ..(*p).clone()
        })
        .collect();
    let total: f64 = atoms.iter().map(|a| a.mass).sum();
    Distribution::new(
        atoms
            .into_iter()
            .map(|a| Atom {
                mass: a.mass / total,
                ..a
            })
            .collect(),
    )
}

/// Budget drawn uniformly from `[0.01, 0.2]`.
pub fn random_alpha<R: Rng>(rng: &mut R) -> f64 {
    rng.random_range(0.01..=0.2)
}

/// Random clean distribution over up to 12 points with mixed labels, a
/// group-aware binned predictor calibrated on it, and a random corruption.
pub fn random_binned_instance<R: Rng>(
    rng: &mut R,
) -> Result<(Distribution, BinnedPredictor, Distribution)> {
    let n_points = rng.random_range(2..=6);
    let mut atoms = Vec::new();
    for i in 0..n_points {
        for g in ["A", "B"] {
            if rng.random_bool(0.8) || atoms.is_empty() {
                let m: f64 = rng.random_range(0.05..1.0);
                let pos: f64 = rng.random_range(0.0..=1.0);
                let name = format!("p{i}");
                atoms.push(Atom::new(&name, Label::Positive, g, m * pos));
                atoms.push(Atom::new(&name, Label::Negative, g, m * (1.0 - pos)));
            }
        }
    }
    let total: f64 = atoms.iter().map(|a| a.mass).sum();
    for a in &mut atoms {
        a.mass /= total;
    }
    let d = Distribution::new(atoms)?;
    let bins = rng.random_range(1..=4u32);
    let mut h = BinnedPredictor::empty();
    for b in 0..bins {
        h.set_value(b, None, rng.random_range(0.0..=1.0))?;
    }
    for p in d.points() {
        h.assign(p.point.clone(), Some(p.group.clone()), rng.random_range(0..bins));
    }
    let h = recalibrate_per_group(&h, &d)?;
    let q = random_corruption(rng, &d)?;
    Ok((d, h, q))
}
