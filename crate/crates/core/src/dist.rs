//! Finite-support joint distributions over `(point, label, group)`.
//!
//! A [`Distribution`] is immutable once built. Construction merges duplicate
//! `(group, point, label)` atoms, drops zero-mass atoms and sorts the support
//! canonically so that every reduction over atoms is deterministic. The same
//! point may carry both labels; that is how indistinguishable examples with
//! opposite labels are represented.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::num;
use crate::{Error, Result, INPUT_MASS_TOL};

/// Opaque identifier of a feature point.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PointId(pub String);

/// Identifier of a protected group.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(pub String);

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PointId {
    fn from(s: &str) -> Self {
        PointId(s.into())
    }
}

impl From<&str> for GroupId {
    fn from(s: &str) -> Self {
        GroupId(s.into())
    }
}

/// Binary label, serialized as `0` / `1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    pub fn flip(self) -> Label {
        match self {
            Label::Negative => Label::Positive,
            Label::Positive => Label::Negative,
        }
    }

    pub fn is_positive(self) -> bool {
        self == Label::Positive
    }

    /// `1.0` for positives, `0.0` for negatives.
    pub fn value(self) -> f64 {
        if self.is_positive() {
            1.0
        } else {
            0.0
        }
    }
}

impl From<Label> for u8 {
    fn from(l: Label) -> u8 {
        l.is_positive() as u8
    }
}

impl TryFrom<u8> for Label {
    type Error = Error;

    fn try_from(v: u8) -> Result<Label> {
        match v {
            0 => Ok(Label::Negative),
            1 => Ok(Label::Positive),
            other => Err(Error::InvalidLabel(other)),
        }
    }
}

impl From<bool> for Label {
    fn from(b: bool) -> Label {
        if b {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

/// One weighted support element.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub point: PointId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<f64>,
    pub label: Label,
    pub group: GroupId,
    pub mass: f64,
}

impl Atom {
    pub fn new(point: &str, label: Label, group: &str, mass: f64) -> Atom {
        Atom {
            point: point.into(),
            feature: None,
            label,
            group: group.into(),
            mass,
        }
    }

    pub fn with_feature(mut self, feature: f64) -> Atom {
        self.feature = Some(feature);
        self
    }

    fn key(&self) -> (&GroupId, &PointId, Label) {
        (&self.group, &self.point, self.label)
    }

    /// Same point and group, mass untouched.
    pub fn same_point(&self, other: &Atom) -> bool {
        self.group == other.group && self.point == other.point
    }
}

/// Validated, canonically ordered distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr")]
pub struct Distribution {
    atoms: Vec<Atom>,
    groups: Vec<GroupId>,
}

#[derive(Deserialize)]
struct DistributionRepr {
    atoms: Vec<Atom>,
    #[serde(default)]
    groups: Option<Vec<GroupId>>,
}

impl TryFrom<DistributionRepr> for Distribution {
    type Error = Error;

    fn try_from(repr: DistributionRepr) -> Result<Distribution> {
        let d = Distribution::new(repr.atoms)?;
        if let Some(listed) = repr.groups {
            for g in d.groups() {
                if !listed.contains(g) {
                    return Err(Error::UnknownGroup(g.clone()));
                }
            }
            if let Some(missing) = listed.iter().find(|g| !d.groups.contains(g)) {
                return Err(Error::EmptyGroup(missing.clone()));
            }
        }
        Ok(d)
    }
}

/// Group masses and positive masses of a distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMassProfile {
    pub groups: Vec<GroupShare>,
    /// Smallest integer `c` with `r_z+ >= r_z / c` for every group; `None`
    /// when some group has no positives.
    pub c_bound: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupShare {
    pub group: GroupId,
    /// `r_z`
    pub mass: f64,
    /// `r_z+`, mass of positives in the group
    pub positive_mass: f64,
}

impl GroupMassProfile {
    pub fn share(&self, group: &GroupId) -> Option<&GroupShare> {
        self.groups.iter().find(|s| &s.group == group)
    }
}

impl Distribution {
    /// Merges, validates and canonically orders a list of atoms.
    ///
    /// Totals within `1e-6` of one are renormalized; anything further off is
    /// rejected.
    pub fn new(atoms: Vec<Atom>) -> Result<Distribution> {
        if atoms.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        for a in &atoms {
            if !a.mass.is_finite() || a.feature.is_some_and(|f| !f.is_finite()) {
                return Err(Error::NonFinite {
                    point: a.point.clone(),
                    group: a.group.clone(),
                });
            }
            if a.mass < 0.0 {
                return Err(Error::NegativeMass {
                    point: a.point.clone(),
                    group: a.group.clone(),
                    mass: a.mass,
                });
            }
        }

        let mut sorted = atoms;
        sorted.sort_by(|a, b| a.key().cmp(&b.key()));

        let mut merged: Vec<Atom> = Vec::with_capacity(sorted.len());
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i + 1;
            while j < sorted.len() && sorted[j].key() == sorted[i].key() {
                if sorted[j].feature != sorted[i].feature {
                    return Err(Error::ConflictingFeature {
                        point: sorted[j].point.clone(),
                        group: sorted[j].group.clone(),
                    });
                }
                j += 1;
            }
            let mass = num::sum(sorted[i..j].iter().map(|a| a.mass));
            merged.push(Atom {
                mass,
                ..sorted[i].clone()
            });
            i = j;
        }

        // Both labels of a point must agree on its feature.
        for pair in merged.windows(2) {
            if pair[0].same_point(&pair[1]) && pair[0].feature != pair[1].feature {
                return Err(Error::ConflictingFeature {
                    point: pair[1].point.clone(),
                    group: pair[1].group.clone(),
                });
            }
        }

        merged.retain(|a| a.mass > 0.0);
        if merged.is_empty() {
            return Err(Error::EmptyDistribution);
        }

        let total = num::sum(merged.iter().map(|a| a.mass));
        if num::abs(total - 1.0) > INPUT_MASS_TOL {
            return Err(Error::NotNormalized { total });
        }
        if num::abs(total - 1.0) > 1e-12 {
            for a in &mut merged {
                a.mass /= total;
            }
        }

        let mut groups: Vec<GroupId> = Vec::new();
        for a in &merged {
            if groups.last() != Some(&a.group) {
                groups.push(a.group.clone());
            }
        }

        Ok(Distribution {
            atoms: merged,
            groups,
        })
    }

    /// Single atom carrying all the mass.
    pub fn point_mass(point: &str, label: Label, group: &str) -> Distribution {
        Distribution {
            atoms: alloc::vec![Atom::new(point, label, group, 1.0)],
            groups: alloc::vec![group.into()],
        }
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Groups with positive mass, in canonical order.
    pub fn groups(&self) -> &[GroupId] {
        &self.groups
    }

    pub fn has_group(&self, group: &GroupId) -> bool {
        self.groups.contains(group)
    }

    pub fn total_mass(&self) -> f64 {
        num::sum(self.atoms.iter().map(|a| a.mass))
    }

    pub fn group_atoms<'a>(&'a self, group: &'a GroupId) -> impl Iterator<Item = &'a Atom> + 'a {
        self.atoms.iter().filter(move |a| &a.group == group)
    }

    /// `r_z`
    pub fn group_mass(&self, group: &GroupId) -> f64 {
        num::sum(self.group_atoms(group).map(|a| a.mass))
    }

    /// `r_z+`
    pub fn positive_mass(&self, group: &GroupId) -> f64 {
        num::sum(
            self.group_atoms(group)
                .filter(|a| a.label.is_positive())
                .map(|a| a.mass),
        )
    }

    /// Mass at a `(point, label, group)` triple, zero off the support.
    pub fn mass_of(&self, point: &PointId, label: Label, group: &GroupId) -> f64 {
        self.atoms
            .binary_search_by(|a| a.key().cmp(&(group, point, label)))
            .map(|i| self.atoms[i].mass)
            .unwrap_or(0.0)
    }

    /// Distinct `(group, point)` pairs with one representative atom each.
    pub fn points(&self) -> Vec<&Atom> {
        let mut out: Vec<&Atom> = Vec::new();
        for a in &self.atoms {
            if !out.last().is_some_and(|p| p.same_point(a)) {
                out.push(a);
            }
        }
        out
    }

    pub fn profile(&self) -> GroupMassProfile {
        let groups: Vec<GroupShare> = self
            .groups
            .iter()
            .map(|g| GroupShare {
                group: g.clone(),
                mass: self.group_mass(g),
                positive_mass: self.positive_mass(g),
            })
            .collect();
        let mut c_bound = Some(1u64);
        for s in &groups {
            if s.positive_mass <= 0.0 {
                c_bound = None;
                break;
            }
            // Guard against ratios like 2.0000000000000004.
            let c = num::ceil(s.mass / s.positive_mass - 1e-9).max(1.0) as u64;
            c_bound = c_bound.map(|cur| cur.max(c));
        }
        GroupMassProfile { groups, c_bound }
    }

    /// `D_z`: the conditional distribution of group `z`.
    pub fn conditional(&self, group: &GroupId) -> Result<Distribution> {
        if !self.has_group(group) {
            return Err(Error::UnknownGroup(group.clone()));
        }
        let r = self.group_mass(group);
        if r <= 0.0 {
            return Err(Error::EmptyGroup(group.clone()));
        }
        let atoms = self
            .group_atoms(group)
            .map(|a| Atom {
                mass: a.mass / r,
                ..a.clone()
            })
            .collect();
        Distribution::new(atoms)
    }

    /// `(1 - alpha) * self + alpha * q`.
    pub fn mix(&self, q: &Distribution, alpha: f64) -> Result<Distribution> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        if let Some(g) = q.groups().iter().find(|g| !self.has_group(g)) {
            return Err(Error::UnknownGroup(g.clone()));
        }
        let atoms = self
            .atoms
            .iter()
            .map(|a| Atom {
                mass: (1.0 - alpha) * a.mass,
                ..a.clone()
            })
            .chain(q.atoms.iter().map(|a| Atom {
                mass: alpha * a.mass,
                ..a.clone()
            }))
            .collect();
        Distribution::new(atoms)
    }

    /// Total variation distance over the union of supports.
    pub fn tv_distance(&self, other: &Distribution) -> f64 {
        let mut diffs: BTreeMap<(&GroupId, &PointId, Label), f64> = BTreeMap::new();
        for a in &self.atoms {
            *diffs.entry(a.key()).or_insert(0.0) += a.mass;
        }
        for a in &other.atoms {
            *diffs.entry(a.key()).or_insert(0.0) -= a.mass;
        }
        let tv = 0.5 * num::sum(diffs.values().map(|d| num::abs(*d)));
        tv.clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::num::approx_eq;
    use alloc::vec;
    use proptest::prelude::*;

    use Label::{Negative as N, Positive as P};

    pub(crate) fn four_point() -> Distribution {
        Distribution::new(vec![
            Atom::new("x1", P, "A", 0.4),
            Atom::new("x2", N, "A", 0.4),
            Atom::new("x3", P, "B", 0.1),
            Atom::new("x4", N, "B", 0.1),
        ])
        .unwrap()
    }

    #[test]
    fn two_halves_normalize() {
        let d = Distribution::new(vec![Atom::new("a", P, "A", 0.5), Atom::new("b", N, "A", 0.5)])
            .unwrap();
        assert_eq!(d.atoms().len(), 2);
        assert!(approx_eq(d.total_mass(), 1.0));
    }

    #[test]
    fn four_point_instance_is_valid() {
        let d = four_point();
        assert_eq!(d.atoms().len(), 4);
        assert_eq!(d.groups(), &[GroupId::from("A"), GroupId::from("B")]);
    }

    #[test]
    fn negative_mass_rejected() {
        let err = Distribution::new(vec![
            Atom::new("a", P, "A", 1.1),
            Atom::new("b", N, "A", -0.1),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::NegativeMass { .. }));
    }

    #[test]
    fn unnormalized_total_rejected() {
        let err = Distribution::new(vec![Atom::new("a", P, "A", 0.9)]).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
        assert_eq!(Distribution::new(vec![]).unwrap_err(), Error::EmptyDistribution);
    }

    #[test]
    fn small_drift_is_renormalized() {
        let d = Distribution::new(vec![
            Atom::new("a", P, "A", 0.5 + 4e-7),
            Atom::new("b", N, "A", 0.5),
        ])
        .unwrap();
        assert!(approx_eq(d.total_mass(), 1.0));
    }

    #[test]
    fn duplicates_merge_and_labels_coexist() {
        let d = Distribution::new(vec![
            Atom::new("a", P, "A", 0.25),
            Atom::new("a", P, "A", 0.25),
            Atom::new("a", N, "A", 0.5),
        ])
        .unwrap();
        assert_eq!(d.atoms().len(), 2);
        assert!(approx_eq(d.mass_of(&"a".into(), P, &"A".into()), 0.5));
        assert_eq!(d.points().len(), 1);
    }

    #[test]
    fn conflicting_feature_rejected() {
        let err = Distribution::new(vec![
            Atom::new("a", P, "A", 0.5).with_feature(1.0),
            Atom::new("a", N, "A", 0.5).with_feature(2.0),
        ])
        .unwrap_err();
        assert!(matches!(err, Error::ConflictingFeature { .. }));
    }

    #[test]
    fn profile_of_four_point_instance() {
        let p = four_point().profile();
        let a = p.share(&"A".into()).unwrap();
        let b = p.share(&"B".into()).unwrap();
        assert!(approx_eq(a.mass, 0.8) && approx_eq(a.positive_mass, 0.4));
        assert!(approx_eq(b.mass, 0.2) && approx_eq(b.positive_mass, 0.1));
        assert_eq!(p.c_bound, Some(2));
    }

    #[test]
    fn profile_degenerate_cases() {
        let all_pos =
            Distribution::new(vec![Atom::new("a", P, "A", 0.3), Atom::new("b", P, "A", 0.7)])
                .unwrap();
        let p = all_pos.profile();
        assert!(approx_eq(p.groups[0].positive_mass, p.groups[0].mass));
        assert_eq!(p.c_bound, Some(1));

        let no_pos = Distribution::new(vec![
            Atom::new("a", P, "A", 0.5),
            Atom::new("b", N, "B", 0.5),
        ])
        .unwrap();
        let p = no_pos.profile();
        assert_eq!(p.share(&"B".into()).unwrap().positive_mass, 0.0);
        assert_eq!(p.c_bound, None);
    }

    #[test]
    fn conditional_divides_by_group_mass() {
        let b = four_point().conditional(&"B".into()).unwrap();
        assert_eq!(b.atoms().len(), 2);
        assert!(approx_eq(b.mass_of(&"x3".into(), P, &"B".into()), 0.5));
        assert!(approx_eq(b.mass_of(&"x4".into(), N, &"B".into()), 0.5));
        assert_eq!(b.groups(), &[GroupId::from("B")]);

        let single = b.conditional(&"B".into()).unwrap();
        assert_eq!(single, b);

        assert_eq!(
            four_point().conditional(&"C".into()).unwrap_err(),
            Error::UnknownGroup("C".into())
        );
    }

    #[test]
    fn mix_matches_needle_corruption() {
        let d = four_point();
        let q = Distribution::point_mass("x4", P, "B");
        let dt = d.mix(&q, 0.04).unwrap();
        assert_eq!(dt.atoms().len(), 5);
        let m = |p: &str, l, g: &str| dt.mass_of(&p.into(), l, &g.into());
        assert!(approx_eq(m("x1", P, "A"), 0.384));
        assert!(approx_eq(m("x2", N, "A"), 0.384));
        assert!(approx_eq(m("x3", P, "B"), 0.096));
        assert!(approx_eq(m("x4", N, "B"), 0.096));
        assert!(approx_eq(m("x4", P, "B"), 0.04));
    }

    #[test]
    fn mix_endpoints() {
        let d = four_point();
        let q = Distribution::point_mass("x4", P, "B");
        assert_eq!(d.mix(&q, 0.0).unwrap(), d);
        assert_eq!(d.mix(&q, 1.0).unwrap(), q);
        assert_eq!(d.mix(&q, 1.5).unwrap_err(), Error::AlphaOutOfRange(1.5));
        let foreign = Distribution::point_mass("y", P, "C");
        assert!(matches!(d.mix(&foreign, 0.1), Err(Error::UnknownGroup(_))));
    }

    #[test]
    fn tv_examples() {
        let d = four_point();
        assert_eq!(d.tv_distance(&d), 0.0);
        let other = Distribution::point_mass("z", P, "A");
        assert!(approx_eq(d.tv_distance(&other), 1.0));
    }

    fn arb_atoms() -> impl Strategy<Value = Vec<Atom>> {
        prop::collection::vec((0u8..6, any::<bool>(), 0u8..2, 0.01f64..1.0), 1..16).prop_map(
            |raw| {
                let total: f64 = raw.iter().map(|r| r.3).sum();
                raw.into_iter()
                    .map(|(p, l, g, m)| {
                        let point = alloc::format!("p{p}");
                        let group = if g == 0 { "A" } else { "B" };
                        Atom::new(&point, l.into(), group, m / total)
                    })
                    .collect()
            },
        )
    }

    proptest! {
        #[test]
        fn mixing_contracts_tv(atoms in arb_atoms(), q_atoms in arb_atoms(), alpha in 0.0f64..=1.0) {
            let d = Distribution::new(atoms).unwrap();
            let q_atoms: Vec<Atom> = q_atoms.into_iter().filter(|a| d.has_group(&a.group)).collect();
            prop_assume!(!q_atoms.is_empty());
            let total: f64 = q_atoms.iter().map(|a| a.mass).sum();
            let q_atoms = q_atoms.into_iter().map(|a| Atom { mass: a.mass / total, ..a }).collect();
            let q = Distribution::new(q_atoms).unwrap();
            let dt = d.mix(&q, alpha).unwrap();
            prop_assert!(d.tv_distance(&dt) <= alpha + 1e-9);
        }

        #[test]
        fn construction_is_order_invariant(atoms in arb_atoms(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut shuffled = atoms.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let a = Distribution::new(atoms).unwrap();
            let b = Distribution::new(shuffled).unwrap();
            prop_assert_eq!(a.atoms().len(), b.atoms().len());
            for (x, y) in a.atoms().iter().zip(b.atoms()) {
                prop_assert_eq!(&x.point, &y.point);
                prop_assert_eq!(x.label, y.label);
                prop_assert!((x.mass - y.mass).abs() <= 1e-12);
            }
        }

        #[test]
        fn profile_reconstructs_masses(atoms in arb_atoms()) {
            let p = Distribution::new(atoms).unwrap().profile();
            let total: f64 = p.groups.iter().map(|s| s.mass).sum();
            prop_assert!((total - 1.0).abs() <= 1e-9);
            for s in &p.groups {
                prop_assert!(s.positive_mass <= s.mass + 1e-12);
                prop_assert!(s.mass > 0.0);
            }
        }

        #[test]
        fn conditional_is_idempotent(atoms in arb_atoms()) {
            let d = Distribution::new(atoms).unwrap();
            let g = d.groups()[0].clone();
            let once = d.conditional(&g).unwrap();
            let twice = once.conditional(&g).unwrap();
            for (x, y) in once.atoms().iter().zip(twice.atoms()) {
                prop_assert!((x.mass - y.mass).abs() <= 1e-12);
            }
        }
    }
}
