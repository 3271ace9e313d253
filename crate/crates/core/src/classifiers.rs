//! Base hypotheses, the per-group `(p, q)` randomized expansion, and exact
//! group statistics.
//!
//! A [`PQClassifier`] outputs the base prediction with probability `1 - p_z`
//! and an independent Bernoulli(`q_z`) coin otherwise. All statistics are
//! expectations over atoms of the acceptance probability
//! `(1 - p_z) * h(x) + p_z * q_z`; nothing is sampled.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dist::{Atom, Distribution, GroupId, Label, PointId};
use crate::num;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdDirection {
    /// Accept when `feature >= threshold`.
    Above,
    /// Accept when `feature <= threshold`.
    Below,
}

/// Deterministic, possibly group-aware hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BaseClassifier {
    Table {
        #[serde(default)]
        table: BTreeMap<PointId, Label>,
        /// Group-specific entries; these win over `table`.
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        by_group: BTreeMap<GroupId, BTreeMap<PointId, Label>>,
    },
    Threshold {
        threshold: f64,
        direction: ThresholdDirection,
        #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
        per_group: BTreeMap<GroupId, f64>,
    },
    Constant {
        value: Label,
    },
}

impl BaseClassifier {
    /// Table accepting exactly the listed points (group-agnostic), rejecting
    /// the other points of `support`.
    pub fn accepting<'a, I>(support: &Distribution, accepted: I) -> BaseClassifier
    where
        I: IntoIterator<Item = &'a str>,
    {
        let accepted: Vec<&str> = accepted.into_iter().collect();
        let table = support
            .points()
            .into_iter()
            .map(|a| {
                let yes = accepted.contains(&a.point.0.as_str());
                (a.point.clone(), Label::from(yes))
            })
            .collect();
        BaseClassifier::Table {
            table,
            by_group: BTreeMap::new(),
        }
    }

    /// Table that predicts each point's majority label (ties accept).
    pub fn bayes_table(d: &Distribution) -> BaseClassifier {
        let mut by_group: BTreeMap<GroupId, BTreeMap<PointId, Label>> = BTreeMap::new();
        for p in d.points() {
            let pos = d.mass_of(&p.point, Label::Positive, &p.group);
            let neg = d.mass_of(&p.point, Label::Negative, &p.group);
            by_group
                .entry(p.group.clone())
                .or_default()
                .insert(p.point.clone(), Label::from(pos >= neg));
        }
        BaseClassifier::Table {
            table: BTreeMap::new(),
            by_group,
        }
    }

    pub fn constant(accept: bool) -> BaseClassifier {
        BaseClassifier::Constant {
            value: accept.into(),
        }
    }

    pub fn predict(&self, atom: &Atom) -> Result<bool> {
        match self {
            BaseClassifier::Table { table, by_group } => by_group
                .get(&atom.group)
                .and_then(|t| t.get(&atom.point))
                .or_else(|| table.get(&atom.point))
                .map(|l| l.is_positive())
                .ok_or_else(|| Error::UndefinedPoint {
                    point: atom.point.clone(),
                    group: atom.group.clone(),
                }),
            BaseClassifier::Threshold {
                threshold,
                direction,
                per_group,
            } => {
                let x = atom.feature.ok_or_else(|| Error::MissingFeature {
                    point: atom.point.clone(),
                    group: atom.group.clone(),
                })?;
                let t = per_group.get(&atom.group).copied().unwrap_or(*threshold);
                Ok(match direction {
                    ThresholdDirection::Above => x >= t,
                    ThresholdDirection::Below => x <= t,
                })
            }
            BaseClassifier::Constant { value } => Ok(value.is_positive()),
        }
    }
}

/// Finite hypothesis class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HypothesisClass {
    pub members: Vec<BaseClassifier>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub designated_optimum: Option<usize>,
}

impl HypothesisClass {
    pub fn new(members: Vec<BaseClassifier>) -> Result<HypothesisClass> {
        if members.is_empty() {
            return Err(Error::InvalidArgument("hypothesis class is empty".into()));
        }
        Ok(HypothesisClass {
            members,
            designated_optimum: None,
        })
    }

    pub fn with_optimum(mut self, index: usize) -> Result<HypothesisClass> {
        if index >= self.members.len() {
            return Err(Error::InvalidArgument("designated optimum out of range".into()));
        }
        self.designated_optimum = Some(index);
        Ok(self)
    }

    /// Every group-aware table over the points of `d`. Together with the
    /// `(p, q)` expansion this spans all randomized classifiers on the support.
    pub fn all_tables(d: &Distribution) -> Result<HypothesisClass> {
        let points = d.points();
        if points.len() > 16 {
            return Err(Error::SupportTooLarge {
                size: points.len(),
                limit: 16,
            });
        }
        let members = (0u32..1 << points.len())
            .map(|mask| {
                let mut by_group: BTreeMap<GroupId, BTreeMap<PointId, Label>> = BTreeMap::new();
                for (i, p) in points.iter().enumerate() {
                    by_group
                        .entry(p.group.clone())
                        .or_default()
                        .insert(p.point.clone(), Label::from(mask >> i & 1 == 1));
                }
                BaseClassifier::Table {
                    table: BTreeMap::new(),
                    by_group,
                }
            })
            .collect();
        HypothesisClass::new(members)
    }

    pub fn optimum(&self) -> Option<&BaseClassifier> {
        self.designated_optimum.map(|i| &self.members[i])
    }
}

/// Override probability `p` and coin bias `q` for one group.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Randomization {
    pub p: f64,
    pub q: f64,
}

impl Randomization {
    pub fn new(p: f64, q: f64) -> Result<Randomization> {
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(Error::InvalidArgument(alloc::format!(
                "randomization (p={p}, q={q}) outside [0,1]"
            )));
        }
        Ok(Randomization { p, q })
    }

    /// Acceptance probability given the base decision.
    #[inline]
    pub fn accept(&self, base: bool) -> f64 {
        let b = if base { 1.0 } else { 0.0 };
        (1.0 - self.p) * b + self.p * self.q
    }
}

/// Per-group `(p_z, q_z)`; absent groups behave as the base classifier.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PQParams(pub BTreeMap<GroupId, Randomization>);

impl PQParams {
    pub fn get(&self, group: &GroupId) -> Randomization {
        self.0.get(group).copied().unwrap_or_default()
    }

    pub fn set(&mut self, group: GroupId, r: Randomization) {
        self.0.insert(group, r);
    }
}

/// Element of the randomized expansion of a hypothesis class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PQClassifier {
    pub base: BaseClassifier,
    #[serde(default)]
    pub params: PQParams,
}

impl From<BaseClassifier> for PQClassifier {
    fn from(base: BaseClassifier) -> Self {
        PQClassifier {
            base,
            params: PQParams::default(),
        }
    }
}

impl PQClassifier {
    pub fn new(base: BaseClassifier, params: PQParams) -> PQClassifier {
        PQClassifier { base, params }
    }

    /// Exact probability of predicting 1 at this atom's point.
    pub fn accept_prob(&self, atom: &Atom) -> Result<f64> {
        let base = self.base.predict(atom)?;
        Ok(self.params.get(&atom.group).accept(base))
    }

    /// One draw of the randomized prediction from two independent uniforms.
    /// Only used to cross-check [`Self::accept_prob`].
    pub fn sample(&self, atom: &Atom, u_override: f64, u_coin: f64) -> Result<bool> {
        let r = self.params.get(&atom.group);
        if u_override < r.p {
            Ok(u_coin < r.q)
        } else {
            self.base.predict(atom)
        }
    }

    /// `E_D[1(h(x) != y)]`.
    pub fn error(&self, d: &Distribution) -> Result<f64> {
        let terms = d
            .atoms()
            .iter()
            .map(|a| {
                let acc = self.accept_prob(a)?;
                Ok(a.mass * if a.label.is_positive() { 1.0 - acc } else { acc })
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(num::sum(terms))
    }

    pub fn group_stats(&self, d: &Distribution) -> Result<GroupStats> {
        let mut groups = Vec::with_capacity(d.groups().len());
        let mut errors = Vec::with_capacity(d.groups().len());
        for g in d.groups() {
            let mut mass = Vec::new();
            let mut pos = Vec::new();
            let mut neg = Vec::new();
            let mut acc = Vec::new();
            let mut acc_pos = Vec::new();
            let mut acc_neg = Vec::new();
            let mut err = Vec::new();
            for a in d.group_atoms(g) {
                let pr = self.accept_prob(a)?;
                mass.push(a.mass);
                acc.push(a.mass * pr);
                if a.label.is_positive() {
                    pos.push(a.mass);
                    acc_pos.push(a.mass * pr);
                    err.push(a.mass * (1.0 - pr));
                } else {
                    neg.push(a.mass);
                    acc_neg.push(a.mass * pr);
                    err.push(a.mass * pr);
                }
            }
            let [mass, pos, neg, acc, acc_pos, acc_neg, err] =
                [mass, pos, neg, acc, acc_pos, acc_neg, err].map(num::sum);
            let ratio = |n: f64, d: f64| (d > 0.0).then(|| (n / d).clamp(0.0, 1.0));
            groups.push(GroupRates {
                group: g.clone(),
                mass,
                positive_rate: ratio(acc, mass).unwrap_or(0.0),
                tpr: ratio(acc_pos, pos),
                fpr: ratio(acc_neg, neg),
                ppv: ratio(acc_pos, acc),
                error: ratio(err, mass).unwrap_or(0.0),
            });
            errors.push(err);
        }
        Ok(GroupStats {
            groups,
            error: num::sum(errors),
        })
    }
}

/// Group fairness notions for binary classifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Notion {
    #[serde(rename = "dp")]
    DemographicParity,
    #[serde(rename = "eopp")]
    EqualOpportunity,
    #[serde(rename = "eodds")]
    EqualizedOdds,
    #[serde(rename = "predictive_parity")]
    PredictiveParity,
    #[serde(rename = "error_parity")]
    ErrorParity,
}

impl Notion {
    pub fn name(self) -> &'static str {
        match self {
            Notion::DemographicParity => "dp",
            Notion::EqualOpportunity => "eopp",
            Notion::EqualizedOdds => "eodds",
            Notion::PredictiveParity => "predictive_parity",
            Notion::ErrorParity => "error_parity",
        }
    }
}

impl fmt::Display for Notion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Notion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Notion> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "dp" | "demographic_parity" => Notion::DemographicParity,
            "eopp" | "equal_opportunity" => Notion::EqualOpportunity,
            "eodds" | "equalized_odds" => Notion::EqualizedOdds,
            "pp" | "predictive_parity" => Notion::PredictiveParity,
            "error_parity" | "err" => Notion::ErrorParity,
            other => return Err(Error::InvalidArgument(alloc::format!("unknown notion {other}"))),
        })
    }
}

/// Rates of one group. Undefined conditionals are `None`, never zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupRates {
    pub group: GroupId,
    pub mass: f64,
    /// `F_z`, probability of predicting 1.
    pub positive_rate: f64,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
    /// `P[y = 1 | predict 1]` as a ratio of expected masses.
    pub ppv: Option<f64>,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    pub groups: Vec<GroupRates>,
    /// Overall error, `sum_z r_z * err_z`.
    pub error: f64,
}

impl GroupStats {
    pub fn group(&self, g: &GroupId) -> Option<&GroupRates> {
        self.groups.iter().find(|r| &r.group == g)
    }

    fn spread(
        &self,
        notion: Notion,
        statistic: &'static str,
        pick: impl Fn(&GroupRates) -> Option<f64>,
    ) -> Result<f64> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in &self.groups {
            let v = pick(r).ok_or_else(|| Error::AbsentConditional {
                notion: notion.name(),
                statistic,
                group: r.group.clone(),
            })?;
            lo = lo.min(v);
            hi = hi.max(v);
        }
        Ok(if self.groups.len() < 2 { 0.0 } else { hi - lo })
    }

    /// Largest pairwise difference of the notion's statistic.
    pub fn gap(&self, notion: Notion) -> Result<f64> {
        match notion {
            Notion::DemographicParity => {
                self.spread(notion, "positive rate", |r| Some(r.positive_rate))
            }
            Notion::EqualOpportunity => self.spread(notion, "TPR", |r| r.tpr),
            Notion::EqualizedOdds => {
                let t = self.spread(notion, "TPR", |r| r.tpr)?;
                let f = self.spread(notion, "FPR", |r| r.fpr)?;
                Ok(t.max(f))
            }
            Notion::PredictiveParity => self.spread(notion, "PPV", |r| r.ppv),
            Notion::ErrorParity => self.spread(notion, "group error", |r| Some(r.error)),
        }
    }
}
