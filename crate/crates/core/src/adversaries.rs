//! Malicious-noise corruption strategies `D~ = (1 - alpha) D + alpha Q`,
//! drift bounds, and a brute-force worst-case corruption search.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::classifiers::{BaseClassifier, HypothesisClass, Notion, PQClassifier};
use crate::dist::{Atom, Distribution, GroupId, Label, PointId};
use crate::num;
use crate::repair::{best_response, BestResponseConfig};
use crate::{Error, Result, EXACT_TOL};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Raise,
    Lower,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AttackKind {
    /// `Q = D`.
    Identity,
    /// Mirror every target-group example with the opposite label.
    DuplicateFlip,
    /// Positive point mass at `x4` of the four-point instance.
    NeedleEopp,
    /// Point mass of positives at a target-group point that a classifier
    /// accepts (raise) or rejects (lower).
    TprShift {
        direction: Direction,
        /// Index into the hypothesis class; defaults to its designated optimum.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        classifier: Option<usize>,
    },
    /// Brute-force worst case over point masses, duplications and small
    /// simplex mixtures.
    GridWorstCase {
        notion: Notion,
        #[serde(default = "default_resolution")]
        resolution: usize,
        #[serde(default = "default_search_grid")]
        grid_n: usize,
    },
    /// Caller-supplied `Q`.
    Custom { q: Distribution },
}

fn default_resolution() -> usize {
    10
}

fn default_search_grid() -> usize {
    21
}

/// Adversary strategy with its budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(flatten)]
    pub kind: AttackKind,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_group: Option<GroupId>,
}

/// Result of applying an attack to a clean distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub q: Distribution,
    pub d_tilde: Distribution,
    pub description: String,
}

impl AttackSpec {
    pub fn new(kind: AttackKind, alpha: f64, target_group: Option<GroupId>) -> AttackSpec {
        AttackSpec {
            kind,
            alpha,
            target_group,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            AttackKind::Identity => "identity",
            AttackKind::DuplicateFlip => "duplicate_flip",
            AttackKind::NeedleEopp => "needle_eopp",
            AttackKind::TprShift { .. } => "tpr_shift",
            AttackKind::GridWorstCase { .. } => "grid_worst_case",
            AttackKind::Custom { .. } => "custom",
        }
    }

    fn target<'a>(&'a self, d: &'a Distribution) -> Result<&'a GroupId> {
        let g = match &self.target_group {
            Some(g) => g,
            // the smaller group is the natural target
            None => d
                .groups()
                .iter()
                .min_by(|a, b| d.group_mass(a).total_cmp(&d.group_mass(b)))
                .ok_or(Error::EmptyDistribution)?,
        };
        if !d.has_group(g) {
            return Err(Error::UnknownGroup(g.clone()));
        }
        Ok(g)
    }

    pub fn apply(&self, d: &Distribution, hypotheses: &HypothesisClass) -> Result<AttackOutcome> {
        let alpha = self.alpha;
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        let (q, d_tilde, description) = match &self.kind {
            AttackKind::Identity => (d.clone(), d.clone(), String::from("identity")),
            AttackKind::DuplicateFlip => {
                let g = self.target(d)?;
                let (q, dt) = duplicate_flip_attack(d, g, alpha)?;
                (q, dt, format!("duplicate_flip:{g}"))
            }
            AttackKind::NeedleEopp => {
                let b = GroupId::from("B");
                if d.group_atoms(&b).all(|a| a.point.0 != "x4") {
                    return Err(Error::NoEligiblePoint { group: b });
                }
                let q = needle_q(d);
                let dt = d.mix(&q, alpha)?;
                (q, dt, String::from("needle_eopp"))
            }
            AttackKind::TprShift {
                direction,
                classifier,
            } => {
                let h = match classifier {
                    Some(i) => hypotheses.members.get(*i).ok_or_else(|| {
                        Error::InvalidArgument(format!("classifier index {i} out of range"))
                    })?,
                    None => hypotheses.optimum().unwrap_or(&hypotheses.members[0]),
                };
                let g = self.target(d)?;
                let (q, dt) = tpr_shift_attack(d, h, g, alpha, *direction)?;
                (q, dt, format!("tpr_shift:{g}:{direction:?}").to_lowercase())
            }
            AttackKind::GridWorstCase {
                notion,
                resolution,
                grid_n,
            } => {
                let w = grid_worst_case(d, alpha, hypotheses, *notion, *resolution, *grid_n)?;
                (w.q, w.d_tilde, format!("grid_worst_case:{}", w.description))
            }
            AttackKind::Custom { q } => (q.clone(), d.mix(q, alpha)?, String::from("custom")),
        };
        Ok(AttackOutcome {
            q,
            d_tilde,
            description,
        })
    }
}

fn needle_q(d: &Distribution) -> Distribution {
    let feature = d
        .group_atoms(&"B".into())
        .find(|a| a.point.0 == "x4")
        .and_then(|a| a.feature);
    let mut atom = Atom::new("x4", Label::Positive, "B", 1.0);
    atom.feature = feature;
    Distribution::new(vec![atom]).expect("point mass is valid")
}

/// Builds `Q` from masses already scaled by `alpha` (i.e. `alpha * Q`).
fn scaled_q(scaled: Vec<Atom>, alpha: f64) -> Result<Distribution> {
    let atoms = scaled
        .into_iter()
        .map(|a| Atom {
            mass: a.mass / alpha,
            ..a
        })
        .collect();
    Distribution::new(atoms)
}

/// Every target-group example `(x, y)` receives a copy `(x, 1 - y)` of equal
/// corrupted mass, so `E_{D~_B}[y | x] = 1/2` everywhere in the target group.
/// Budget left over after `(1 - alpha) r_B` duplicates the other groups with
/// unchanged labels.
pub fn duplicate_flip_attack(
    d: &Distribution,
    target: &GroupId,
    alpha: f64,
) -> Result<(Distribution, Distribution)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if !d.has_group(target) {
        return Err(Error::UnknownGroup(target.clone()));
    }
    let r_b = d.group_mass(target);
    let needed = (1.0 - alpha) * r_b;
    if alpha <= 0.0 || needed > alpha + EXACT_TOL {
        return Err(Error::InsufficientBudget {
            required: r_b / (1.0 + r_b),
            alpha,
        });
    }
    let leftover = (alpha - needed).max(0.0);

    let mut scaled: Vec<Atom> = d
        .group_atoms(target)
        .map(|a| Atom {
            label: a.label.flip(),
            mass: (1.0 - alpha) * a.mass,
            ..a.clone()
        })
        .collect();
    let rest = 1.0 - r_b;
    if leftover > 0.0 {
        if rest > 0.0 {
            scaled.extend(d.atoms().iter().filter(|a| &a.group != target).map(|a| Atom {
                mass: leftover * a.mass / rest,
                ..a.clone()
            }));
        } else {
            for a in d.group_atoms(target) {
                let m = leftover * a.mass / (2.0 * r_b);
                scaled.push(Atom { mass: m, ..a.clone() });
                scaled.push(Atom {
                    mass: m,
                    label: a.label.flip(),
                    ..a.clone()
                });
            }
        }
    }
    let q = scaled_q(scaled, alpha)?;
    let dt = d.mix(&q, alpha)?;
    Ok((q, dt))
}

/// Canonical four-point needle instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeedleInstance {
    pub alpha: f64,
    pub clean: Distribution,
    pub q: Distribution,
    pub d_tilde: Distribution,
    /// Share of target-group positives in `D~` that are adversarial.
    pub alpha_prime: f64,
}

/// Group B of mass `sqrt(alpha)`, balanced labels in both groups, and a
/// positive point mass at the rejected B point.
pub fn needle_eopp_attack(alpha: f64) -> Result<NeedleInstance> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    let s = num::sqrt(alpha);
    let clean = Distribution::new(vec![
        Atom::new("x1", Label::Positive, "A", (1.0 - s) / 2.0).with_feature(1.0),
        Atom::new("x2", Label::Negative, "A", (1.0 - s) / 2.0).with_feature(0.0),
        Atom::new("x3", Label::Positive, "B", s / 2.0).with_feature(1.0),
        Atom::new("x4", Label::Negative, "B", s / 2.0).with_feature(0.0),
    ])?;
    let q = needle_q(&clean);
    let d_tilde = clean.mix(&q, alpha)?;
    Ok(NeedleInstance {
        alpha,
        clean,
        q,
        d_tilde,
        alpha_prime: 2.0 * s / ((1.0 - alpha) + 2.0 * s),
    })
}

/// Positive point mass at the first (canonical order) target-group point that
/// `h` accepts (`Raise`) or rejects (`Lower`).
pub fn tpr_shift_attack(
    d: &Distribution,
    h: &BaseClassifier,
    target: &GroupId,
    alpha: f64,
    direction: Direction,
) -> Result<(Distribution, Distribution)> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::AlphaOutOfRange(alpha));
    }
    if !d.has_group(target) {
        return Err(Error::UnknownGroup(target.clone()));
    }
    if d.positive_mass(target) <= 0.0 {
        return Err(Error::NoEligiblePoint {
            group: target.clone(),
        });
    }
    let want = direction == Direction::Raise;
    let mut chosen = None;
    for p in d.points().into_iter().filter(|p| &p.group == target) {
        if h.predict(p)? == want {
            chosen = Some(p);
            break;
        }
    }
    let p = chosen.ok_or_else(|| Error::NoEligiblePoint {
        group: target.clone(),
    })?;
    let q = Distribution::new(vec![Atom {
        label: Label::Positive,
        mass: 1.0,
        ..p.clone()
    }])?;
    let dt = d.mix(&q, alpha)?;
    Ok((q, dt))
}

/// `alpha / ((1 - alpha) r_z + alpha)`: largest possible change of a
/// group's positive-prediction rate.
pub fn drift_bound_dp(alpha: f64, group_mass: f64) -> f64 {
    let den = (1.0 - alpha) * group_mass + alpha;
    if den <= 0.0 {
        0.0
    } else {
        alpha / den
    }
}

/// `alpha / ((1 - alpha) r_z+ + alpha)`: largest possible change of a
/// group's true positive rate.
pub fn drift_bound_tpr(alpha: f64, positive_mass: f64) -> f64 {
    drift_bound_dp(alpha, positive_mass)
}

/// Corrupted mass bookkeeping of one group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupCorruption {
    pub group: GroupId,
    /// `alpha_z`: corrupted mass in the group.
    pub alpha_z: f64,
    /// Corrupted positive mass in the group.
    pub alpha_z_plus: f64,
    /// `E_z`: corrupted mass in the group predicted positive.
    pub e_z: f64,
    /// `E_z+`: corrupted positive mass in the group predicted positive.
    pub e_z_plus: f64,
    /// Positive-prediction rate on `D~` rebuilt from the decomposition.
    pub corrupted_positive_rate: f64,
    pub corrupted_tpr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionDecomposition {
    pub alpha: f64,
    pub groups: Vec<GroupCorruption>,
}

impl CorruptionDecomposition {
    pub fn group(&self, g: &GroupId) -> Option<&GroupCorruption> {
        self.groups.iter().find(|c| &c.group == g)
    }
}

/// Splits the corruption by group and re-derives the corrupted rates
///
/// `F~_z = ((1-a) F_z r_z + E_z) / ((1-a) r_z + a_z)` and
/// `TPR~_z = ((1-a) TPR_z r_z+ + E_z+) / ((1-a) r_z+ + a_z+)`,
///
/// failing if either disagrees with direct evaluation on `mix(d, q, alpha)`.
pub fn decompose_corruption(
    d: &Distribution,
    q: &Distribution,
    alpha: f64,
    h: &PQClassifier,
) -> Result<CorruptionDecomposition> {
    let dt = d.mix(q, alpha)?;
    let clean = h.group_stats(d)?;
    let measured = h.group_stats(&dt)?;
    let mut groups = Vec::new();
    for rates in &clean.groups {
        let g = &rates.group;
        let mut mass = Vec::new();
        let mut pos = Vec::new();
        let mut acc = Vec::new();
        let mut acc_pos = Vec::new();
        for a in q.group_atoms(g) {
            let pr = h.accept_prob(a)?;
            mass.push(alpha * a.mass);
            acc.push(alpha * a.mass * pr);
            if a.label.is_positive() {
                pos.push(alpha * a.mass);
                acc_pos.push(alpha * a.mass * pr);
            }
        }
        let [alpha_z, alpha_z_plus, e_z, e_z_plus] = [mass, pos, acc, acc_pos].map(num::sum);

        let r = rates.mass;
        let r_plus = d.positive_mass(g);
        let f_t = ((1.0 - alpha) * rates.positive_rate * r + e_z) / ((1.0 - alpha) * r + alpha_z);
        let den_tpr = (1.0 - alpha) * r_plus + alpha_z_plus;
        let tpr_t = (den_tpr > 0.0).then(|| {
            ((1.0 - alpha) * rates.tpr.unwrap_or(0.0) * r_plus + e_z_plus) / den_tpr
        });

        let seen = measured.group(g).ok_or_else(|| Error::EmptyGroup(g.clone()))?;
        if num::abs(f_t - seen.positive_rate) > EXACT_TOL {
            return Err(Error::DriftIdentityMismatch {
                group: g.clone(),
                predicted: f_t,
                measured: seen.positive_rate,
            });
        }
        if let (Some(p), Some(m)) = (tpr_t, seen.tpr) {
            if num::abs(p - m) > EXACT_TOL {
                return Err(Error::DriftIdentityMismatch {
                    group: g.clone(),
                    predicted: p,
                    measured: m,
                });
            }
        }
        groups.push(GroupCorruption {
            group: g.clone(),
            alpha_z,
            alpha_z_plus,
            e_z,
            e_z_plus,
            corrupted_positive_rate: f_t,
            corrupted_tpr: tpr_t,
        });
    }
    Ok(CorruptionDecomposition { alpha, groups })
}

/// Largest support accepted by [`grid_worst_case`].
pub const WORST_CASE_SUPPORT_LIMIT: usize = 64;

/// Number of strongest point masses combined in simplex mixtures.
pub const MIXTURE_POOL: usize = 6;

/// One adversary strategy explored by the worst-case search.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub q: Distribution,
    pub description: String,
}

impl Candidate {
    /// Canonical encoding used to break ties deterministically.
    pub fn encoding(&self) -> Vec<(&GroupId, &PointId, Label, u64)> {
        self.q
            .atoms()
            .iter()
            .map(|a| (&a.group, &a.point, a.label, a.mass.to_bits()))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoredCandidate {
    pub candidate: Candidate,
    pub excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstCase {
    pub q: Distribution,
    pub d_tilde: Distribution,
    pub excess: f64,
    pub description: String,
    pub examined: usize,
}

/// Point masses on every support point with either label, plus a duplicate
/// flip of every group the budget covers.
pub fn point_mass_candidates(d: &Distribution, alpha: f64) -> Result<Vec<Candidate>> {
    let mut out = Vec::new();
    for p in d.points() {
        for label in [Label::Negative, Label::Positive] {
            let q = Distribution::new(vec![Atom {
                label,
                mass: 1.0,
                ..p.clone()
            }])?;
            out.push(Candidate {
                q,
                description: format!("point:{}/{}/{}", p.group, p.point, u8::from(label)),
            });
        }
    }
    for g in d.groups() {
        if let Ok((q, _)) = duplicate_flip_attack(d, g, alpha) {
            out.push(Candidate {
                q,
                description: format!("duplicate_flip:{g}"),
            });
        }
    }
    Ok(out)
}

/// Mixtures over pairs and triples of the given point masses with weights on a
/// `1/resolution` simplex grid (all weights positive).
pub fn mixture_candidates(pool: &[Candidate], resolution: usize) -> Result<Vec<Candidate>> {
    let res = resolution.max(2);
    let mut out = Vec::new();
    let n = pool.len();
    let combine = |parts: &[(usize, usize)]| -> Result<Candidate> {
        let mut atoms = Vec::new();
        let mut desc = String::from("mix[");
        for (k, (i, w)) in parts.iter().enumerate() {
            let w = *w as f64 / res as f64;
            atoms.extend(pool[*i].q.atoms().iter().map(|a| Atom {
                mass: a.mass * w,
                ..a.clone()
            }));
            if k > 0 {
                desc.push(',');
            }
            desc.push_str(&format!("{}*{}", w, pool[*i].description));
        }
        desc.push(']');
        Ok(Candidate {
            q: Distribution::new(atoms)?,
            description: desc,
        })
    };
    for i in 0..n {
        for j in i + 1..n {
            for wi in 1..res {
                out.push(combine(&[(i, wi), (j, res - wi)])?);
            }
            for k in j + 1..n {
                for wi in 1..res {
                    for wj in 1..res - wi {
                        out.push(combine(&[(i, wi), (j, wj), (k, res - wi - wj)])?);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Clean fair optimum and search settings shared by every candidate.
pub struct WorstCaseContext<'a> {
    pub clean: &'a Distribution,
    pub alpha: f64,
    pub hypotheses: &'a HypothesisClass,
    pub notion: Notion,
    pub config: BestResponseConfig,
    pub clean_optimum: f64,
}

impl<'a> WorstCaseContext<'a> {
    pub fn new(
        clean: &'a Distribution,
        alpha: f64,
        hypotheses: &'a HypothesisClass,
        notion: Notion,
        grid_n: usize,
    ) -> Result<WorstCaseContext<'a>> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::AlphaOutOfRange(alpha));
        }
        if clean.atoms().len() > WORST_CASE_SUPPORT_LIMIT {
            return Err(Error::SupportTooLarge {
                size: clean.atoms().len(),
                limit: WORST_CASE_SUPPORT_LIMIT,
            });
        }
        let config = BestResponseConfig::new(grid_n);
        let clean_optimum =
            best_response(clean, clean, hypotheses, notion, &config)?.error_on_original;
        Ok(WorstCaseContext {
            clean,
            alpha,
            hypotheses,
            notion,
            config,
            clean_optimum,
        })
    }

    /// Excess clean error of the learner's best response to `candidate`.
    pub fn score(&self, candidate: &Candidate) -> Result<f64> {
        let dt = self.clean.mix(&candidate.q, self.alpha)?;
        let w = best_response(&dt, self.clean, self.hypotheses, self.notion, &self.config)?;
        Ok(w.error_on_original - self.clean_optimum)
    }

    pub fn score_all(&self, candidates: Vec<Candidate>) -> Result<Vec<ScoredCandidate>> {
        candidates
            .into_iter()
            .map(|c| {
                let excess = self.score(&c)?;
                Ok(ScoredCandidate {
                    candidate: c,
                    excess,
                })
            })
            .collect()
    }
}

/// Largest excess; exact ties go to the lexicographically smallest encoding.
pub fn select_worst(scored: &[ScoredCandidate]) -> Option<&ScoredCandidate> {
    scored.iter().reduce(|best, c| {
        if c.excess > best.excess
            || (c.excess == best.excess && c.candidate.encoding() < best.candidate.encoding())
        {
            c
        } else {
            best
        }
    })
}

/// The strongest point masses, feeding the mixture stage.
pub fn mixture_pool(scored: &[ScoredCandidate]) -> Vec<Candidate> {
    let mut singles: Vec<&ScoredCandidate> = scored
        .iter()
        .filter(|s| s.candidate.q.atoms().len() == 1)
        .collect();
    singles.sort_by(|a, b| {
        b.excess
            .total_cmp(&a.excess)
            .then_with(|| a.candidate.encoding().cmp(&b.candidate.encoding()))
    });
    singles
        .into_iter()
        .take(MIXTURE_POOL)
        .map(|s| s.candidate.clone())
        .collect()
}

/// Brute-force search for the corruption maximizing the learner's excess
/// error on the clean distribution.
pub fn grid_worst_case(
    d: &Distribution,
    alpha: f64,
    hypotheses: &HypothesisClass,
    notion: Notion,
    resolution: usize,
    grid_n: usize,
) -> Result<WorstCase> {
    if resolution < 2 {
        return Err(Error::InvalidArgument("simplex resolution must be at least 2".into()));
    }
    let ctx = WorstCaseContext::new(d, alpha, hypotheses, notion, grid_n)?;
    let mut scored = ctx.score_all(point_mass_candidates(d, alpha)?)?;
    let pool = mixture_pool(&scored);
    scored.extend(ctx.score_all(mixture_candidates(&pool, resolution)?)?);
    finish_worst_case(d, alpha, &scored)
}

pub fn finish_worst_case(
    d: &Distribution,
    alpha: f64,
    scored: &[ScoredCandidate],
) -> Result<WorstCase> {
    let best = select_worst(scored).ok_or(Error::EmptyDistribution)?;
    Ok(WorstCase {
        q: best.candidate.q.clone(),
        d_tilde: d.mix(&best.candidate.q, alpha)?,
        excess: best.excess,
        description: best.candidate.description.clone(),
        examined: scored.len(),
    })
}
