//! (P,Q)-repair witnesses for parity and equal opportunity, and a grid
//! best-response learner over `PQ(H)`.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::classifiers::{
    BaseClassifier, GroupStats, HypothesisClass, Notion, PQClassifier, PQParams, Randomization,
};
use crate::dist::{Distribution, GroupId};
use crate::num;
use crate::{Error, Result, EXACT_TOL};

/// Which construction produced a witness.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateLabel {
    Direct,
    /// Every group matched to this group's corrupted statistic.
    Match(GroupId),
}

impl fmt::Display for CandidateLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CandidateLabel::Direct => f.write_str("direct"),
            CandidateLabel::Match(g) => write!(f, "match_{g}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepairWitness {
    pub classifier: PQClassifier,
    pub notion: Notion,
    /// Fairness gap measured on `D~`.
    pub gap_on_corrupted: f64,
    pub error_on_original: f64,
    /// `error_on_original` minus the reference error (the base classifier for
    /// analytic witnesses, the configured baseline for best responses).
    pub excess_error_on_original: f64,
    pub candidate_label: CandidateLabel,
}

/// Randomization moving a rate `current` to `target` exactly.
pub fn match_rate(target: f64, current: f64) -> Randomization {
    let (p, q) = if current <= 0.0 {
        (target, 1.0)
    } else if current >= 1.0 {
        (1.0 - target, 0.0)
    } else if target >= current {
        ((target - current) / (1.0 - current), 1.0)
    } else {
        ((current - target) / current, 0.0)
    };
    Randomization {
        p: p.clamp(0.0, 1.0),
        q,
    }
}

fn check_realizable(stats: &GroupStats, notion: Notion) -> Result<()> {
    let gap = stats.gap(notion)?;
    if gap > EXACT_TOL {
        return Err(Error::RealizabilityViolated {
            notion: notion.name(),
            gap,
        });
    }
    Ok(())
}

fn check_groups(d: &Distribution, d_tilde: &Distribution) -> Result<()> {
    for g in d.groups().iter().chain(d_tilde.groups()) {
        if d.group_mass(g) <= 0.0 || d_tilde.group_mass(g) <= 0.0 {
            return Err(Error::EmptyGroup(g.clone()));
        }
    }
    Ok(())
}

fn witness(
    classifier: PQClassifier,
    notion: Notion,
    d: &Distribution,
    d_tilde: &Distribution,
    reference: f64,
    candidate_label: CandidateLabel,
) -> Result<RepairWitness> {
    let gap_on_corrupted = classifier.group_stats(d_tilde)?.gap(notion)?;
    let error_on_original = classifier.error(d)?;
    Ok(RepairWitness {
        classifier,
        notion,
        gap_on_corrupted,
        error_on_original,
        excess_error_on_original: error_on_original - reference,
        candidate_label,
    })
}

/// Moves every group's corrupted positive rate back to the clean rate of the
/// first group, given a base classifier that satisfies parity on `D`.
pub fn dp_repair(
    h_star: &BaseClassifier,
    d: &Distribution,
    d_tilde: &Distribution,
) -> Result<RepairWitness> {
    check_groups(d, d_tilde)?;
    let base = PQClassifier::from(h_star.clone());
    let clean = base.group_stats(d)?;
    check_realizable(&clean, Notion::DemographicParity)?;
    let corrupted = base.group_stats(d_tilde)?;
    let target = clean.groups[0].positive_rate;
    let mut params = PQParams::default();
    for r in &corrupted.groups {
        params.set(r.group.clone(), match_rate(target, r.positive_rate));
    }
    witness(
        PQClassifier::new(h_star.clone(), params),
        Notion::DemographicParity,
        d,
        d_tilde,
        clean.error,
        CandidateLabel::Direct,
    )
}

/// One candidate per group `i`: every group's corrupted TPR is moved to the
/// corrupted TPR of group `i`. Randomization is label-blind.
pub fn eopp_candidates(
    h_star: &BaseClassifier,
    d: &Distribution,
    d_tilde: &Distribution,
) -> Result<Vec<RepairWitness>> {
    check_groups(d, d_tilde)?;
    let base = PQClassifier::from(h_star.clone());
    let clean = base.group_stats(d)?;
    check_realizable(&clean, Notion::EqualOpportunity)?;
    let corrupted = base.group_stats(d_tilde)?;
    let mut tprs = Vec::with_capacity(corrupted.groups.len());
    for r in &corrupted.groups {
        let t = r.tpr.ok_or_else(|| Error::AbsentConditional {
            notion: Notion::EqualOpportunity.name(),
            statistic: "TPR",
            group: r.group.clone(),
        })?;
        tprs.push((r.group.clone(), t));
    }
    tprs.iter()
        .map(|(anchor, target)| {
            let mut params = PQParams::default();
            for (g, t) in &tprs {
                params.set(g.clone(), match_rate(*target, *t));
            }
            witness(
                PQClassifier::new(h_star.clone(), params),
                Notion::EqualOpportunity,
                d,
                d_tilde,
                clean.error,
                CandidateLabel::Match(anchor.clone()),
            )
        })
        .collect()
}

/// The equal-opportunity candidate with the smallest error on `D`; ties go to
/// the earliest group.
pub fn eopp_repair(
    h_star: &BaseClassifier,
    d: &Distribution,
    d_tilde: &Distribution,
) -> Result<RepairWitness> {
    eopp_candidates(h_star, d, d_tilde)?
        .into_iter()
        .reduce(|best, c| {
            if c.error_on_original < best.error_on_original {
                c
            } else {
                best
            }
        })
        .ok_or(Error::EmptyDistribution)
}

/// Distribution on which the best response minimizes error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Oracle learner: error on the clean distribution.
    #[default]
    Clean,
    /// Practical learner: error on the corrupted distribution it observes.
    Corrupted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BestResponseConfig {
    pub grid_n: usize,
    /// Gap tolerance on `D~`; defaults to `2 / grid_n`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub selection: Selection,
    /// Reference error subtracted to report excess error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub baseline: Option<f64>,
}

impl BestResponseConfig {
    pub fn new(grid_n: usize) -> BestResponseConfig {
        BestResponseConfig {
            grid_n,
            tolerance: None,
            selection: Selection::Clean,
            baseline: None,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> BestResponseConfig {
        self.tolerance = Some(tolerance);
        self
    }

    pub fn with_baseline(mut self, baseline: f64) -> BestResponseConfig {
        self.baseline = Some(baseline);
        self
    }

    pub fn with_selection(mut self, selection: Selection) -> BestResponseConfig {
        self.selection = selection;
        self
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance.unwrap_or(2.0 / self.grid_n as f64)
    }
}

/// Masses of one group split by base prediction (`1` then `0`).
#[derive(Clone, Copy, Debug, Default)]
struct Split {
    pos: [f64; 2],
    neg: [f64; 2],
}

impl Split {
    fn of(h: &BaseClassifier, d: &Distribution, g: &GroupId) -> Result<Split> {
        let mut parts: [Vec<f64>; 4] = Default::default();
        for a in d.group_atoms(g) {
            let slot = usize::from(!h.predict(a)?) + if a.label.is_positive() { 0 } else { 2 };
            parts[slot].push(a.mass);
        }
        let [p1, p0, n1, n0] = parts.map(num::sum);
        Ok(Split {
            pos: [p1, p0],
            neg: [n1, n0],
        })
    }

    fn accepted(&self, u: f64, v: f64) -> f64 {
        u * (self.pos[0] + self.neg[0]) + v * (self.pos[1] + self.neg[1])
    }

    fn accepted_pos(&self, u: f64, v: f64) -> f64 {
        u * self.pos[0] + v * self.pos[1]
    }

    fn accepted_neg(&self, u: f64, v: f64) -> f64 {
        u * self.neg[0] + v * self.neg[1]
    }

    fn error(&self, u: f64, v: f64) -> f64 {
        self.accepted_neg(u, v) + (1.0 - u) * self.pos[0] + (1.0 - v) * self.pos[1]
    }

    fn mass(&self) -> f64 {
        self.pos[0] + self.pos[1] + self.neg[0] + self.neg[1]
    }

    fn positives(&self) -> f64 {
        self.pos[0] + self.pos[1]
    }

    fn negatives(&self) -> f64 {
        self.neg[0] + self.neg[1]
    }

    /// Statistic vector constrained by `notion`; `None` when undefined at
    /// this `(u, v)`.
    fn statistic(&self, notion: Notion, u: f64, v: f64) -> Option<[f64; 2]> {
        match notion {
            Notion::DemographicParity => Some([self.accepted(u, v) / self.mass(), 0.0]),
            Notion::EqualOpportunity => Some([self.accepted_pos(u, v) / self.positives(), 0.0]),
            Notion::EqualizedOdds => Some([
                self.accepted_pos(u, v) / self.positives(),
                self.accepted_neg(u, v) / self.negatives(),
            ]),
            Notion::PredictiveParity => {
                let acc = self.accepted(u, v);
                (acc > EXACT_TOL * self.mass()).then(|| [self.accepted_pos(u, v) / acc, 0.0])
            }
            Notion::ErrorParity => Some([self.error(u, v) / self.mass(), 0.0]),
        }
    }

    fn require(&self, notion: Notion, g: &GroupId) -> Result<()> {
        let missing = |statistic| Error::AbsentConditional {
            notion: notion.name(),
            statistic,
            group: g.clone(),
        };
        match notion {
            Notion::EqualOpportunity if self.positives() <= 0.0 => Err(missing("TPR")),
            Notion::EqualizedOdds if self.positives() <= 0.0 => Err(missing("TPR")),
            Notion::EqualizedOdds if self.negatives() <= 0.0 => Err(missing("FPR")),
            _ => Ok(()),
        }
    }
}

/// Grid point of one group: statistic, cost, and the grid coordinates.
#[derive(Clone, Copy, Debug)]
struct Cell {
    stat: [f64; 2],
    cost: f64,
    u: f64,
    v: f64,
}

fn cells(
    fair: &Split,
    cost: &Split,
    notion: Notion,
    grid: &[f64],
) -> Vec<Cell> {
    let mut out = Vec::with_capacity(grid.len() * (grid.len() + 1) / 2);
    for &u in grid {
        for &v in grid.iter().take_while(|&&v| v <= u) {
            if let Some(stat) = fair.statistic(notion, u, v) {
                out.push(Cell {
                    stat,
                    cost: cost.error(u, v),
                    u,
                    v,
                });
            }
        }
    }
    out.sort_by(|a, b| a.cost.total_cmp(&b.cost));
    out
}

fn dims(notion: Notion) -> usize {
    if notion == Notion::EqualizedOdds {
        2
    } else {
        1
    }
}

/// Cheapest pair of grid points whose statistics agree within `tol`.
fn best_pair(a: &[Cell], b: &[Cell], tol: f64, k: usize) -> Option<(f64, Cell, Cell)> {
    use alloc::collections::BTreeMap;
    let key = |c: &Cell| -> [i64; 2] {
        let mut out = [0; 2];
        for (i, s) in c.stat.iter().take(k).enumerate() {
            out[i] = libm::floor(s / tol) as i64;
        }
        out
    };
    // `b` is sorted by cost, so every bucket is too
    let mut buckets: BTreeMap<[i64; 2], Vec<Cell>> = BTreeMap::new();
    for c in b {
        buckets.entry(key(c)).or_default().push(*c);
    }
    let min_b = b.first()?.cost;
    let slack = tol + 1e-12;
    let mut best: Option<(f64, Cell, Cell)> = None;
    for ca in a {
        if let Some((cost, _, _)) = best {
            if ca.cost + min_b >= cost {
                break;
            }
        }
        let center = key(ca);
        let offsets: &[[i64; 2]] = if k == 1 {
            &[[-1, 0], [0, 0], [1, 0]]
        } else {
            &[
                [-1, -1], [-1, 0], [-1, 1],
                [0, -1], [0, 0], [0, 1],
                [1, -1], [1, 0], [1, 1],
            ]
        };
        for off in offsets {
            let Some(bucket) = buckets.get(&[center[0] + off[0], center[1] + off[1]]) else {
                continue;
            };
            for cb in bucket {
                let total = ca.cost + cb.cost;
                if best.is_some_and(|(c, _, _)| total >= c) {
                    break;
                }
                let close = (0..k).all(|i| num::abs(ca.stat[i] - cb.stat[i]) <= slack);
                if close {
                    best = Some((total, *ca, *cb));
                    break;
                }
            }
        }
    }
    best
}

/// `(p, q)` whose acceptance probabilities are `u` on base-accepted and `v`
/// on base-rejected points (`v <= u`).
pub fn from_acceptance(u: f64, v: f64) -> Randomization {
    let p = (1.0 - u + v).clamp(0.0, 1.0);
    let q = if p > 0.0 { (v / p).clamp(0.0, 1.0) } else { 0.0 };
    Randomization { p, q }
}

/// Minimum-error member of `PQ(H)` on the `(u, v)` grid whose fairness gap on
/// `D~` is within the configured tolerance. `u` and `v` are the acceptance
/// probabilities on base-accepted and base-rejected points, so `v <= u`.
pub fn best_response(
    d_tilde: &Distribution,
    d: &Distribution,
    hypotheses: &HypothesisClass,
    notion: Notion,
    config: &BestResponseConfig,
) -> Result<RepairWitness> {
    if config.grid_n < 11 {
        return Err(Error::InvalidArgument(alloc::format!(
            "grid_n must be at least 11, got {}",
            config.grid_n
        )));
    }
    let groups = d_tilde.groups();
    if groups.len() > 2 {
        return Err(Error::UnsupportedNotion {
            notion: notion.name(),
            operation: "best_response over more than two groups",
        });
    }
    for g in d.groups() {
        if !d_tilde.has_group(g) {
            return Err(Error::UnknownGroup(g.clone()));
        }
    }
    let tol = config.tolerance();
    let grid: Vec<f64> = num::unit_grid(config.grid_n).collect();
    let k = dims(notion);

    // (cost, member index, per-group (u, v))
    type Choice = (f64, usize, Vec<(f64, f64)>);
    let mut best: Option<Choice> = None;
    for (index, h) in hypotheses.members.iter().enumerate() {
        let mut per_group = Vec::with_capacity(groups.len());
        for g in groups {
            let fair = Split::of(h, d_tilde, g)?;
            fair.require(notion, g)?;
            let cost = match config.selection {
                Selection::Clean => Split::of(h, d, g)?,
                Selection::Corrupted => fair,
            };
            per_group.push(cells(&fair, &cost, notion, &grid));
        }
        let found = match per_group.as_slice() {
            [only] => only.first().map(|c| (c.cost, vec![(c.u, c.v)])),
            [a, b] => best_pair(a, b, tol, k).map(|(c, x, y)| (c, vec![(x.u, x.v), (y.u, y.v)])),
            _ => None,
        };
        if let Some((cost, uv)) = found {
            if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
                best = Some((cost, index, uv));
            }
        }
    }
    let (_, index, uv) = best.ok_or(Error::Infeasible {
        notion: notion.name(),
        tolerance: tol,
    })?;
    let mut params = PQParams::default();
    for (g, (u, v)) in groups.iter().zip(uv) {
        params.set(g.clone(), from_acceptance(u, v));
    }
    let classifier = PQClassifier::new(hypotheses.members[index].clone(), params);
    let mut w = witness(
        classifier,
        notion,
        d,
        d_tilde,
        config.baseline.unwrap_or(0.0),
        CandidateLabel::Direct,
    )?;
    if w.gap_on_corrupted > tol + 1e-9 {
        return Err(Error::Infeasible {
            notion: notion.name(),
            tolerance: tol,
        });
    }
    w.gap_on_corrupted = w.gap_on_corrupted.max(0.0);
    Ok(w)
}

/// Short human-readable summary of a witness's randomization.
pub fn describe(w: &RepairWitness) -> String {
    let mut s = alloc::format!("{} {}", w.notion, w.candidate_label);
    for (g, r) in &w.classifier.params.0 {
        s.push_str(&alloc::format!(" {g}:p={:.6},q={:.6}", r.p, r.q));
    }
    s
}
