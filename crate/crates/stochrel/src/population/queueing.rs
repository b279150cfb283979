//! The two-queue load-balancing case study.
//!
//! Two exponential queues with arrival rates `λ1, λ2 ∈ (0,1)` and unit
//! service run either independently or with arrivals routed to the
//! shorter queue. Neither the coordinatewise order nor the total-count
//! order `|x| ≤ |y|` is preserved by the pair, but the subrelation
//! iteration started from the total-count order settles on the weak
//! majorization order, certifying that load balancing keeps the total
//! queue length stochastically smaller. The intermediate iterates have
//! the closed form
//! `{ (x, y) : |x| ≤ |y|, x1∨x2 ≤ y1∨y2 + (y1∧y2 − n)⁺ }`,
//! which this module replays and checks exactly.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::ctmc::ct_subrelation;
use crate::error::{Error, Result};
use crate::rational::{format_rat, Rat};
use crate::relation::{Relation, RelationKind};
use crate::subrelation::{SubrelationOptions, SubrelationTrace};

use super::{parse_rate, PopulationModel};

/// The pair of models under comparison.
#[derive(Clone, Debug)]
pub struct QueueingModels {
    pub load_balanced: PopulationModel,
    pub independent: PopulationModel,
}

/// Builds the independent and load-balanced two-queue models on the box
/// `[0, cap]²`, with arrivals into a full queue blocked.
pub fn queueing_models(lambda1: &Rat, lambda2: &Rat, cap: i64) -> Result<QueueingModels> {
    for (k, l) in [(1, lambda1), (2, lambda2)] {
        if l <= &Rat::zero() || l >= &Rat::one() {
            return Err(Error::BadModel(format!(
                "arrival rate λ{k} = {l} must lie strictly between 0 and 1"
            )));
        }
    }
    if cap < 2 {
        return Err(Error::BadModel("queue capacity must be at least 2".into()));
    }
    let bounds = vec![(0, cap), (0, cap)];
    let l1 = format_rat(lambda1);
    let l2 = format_rat(lambda2);
    let lsum = format_rat(&(lambda1 + lambda2));

    let mut independent = BTreeMap::new();
    independent.insert((0, 1), parse_rate(&l1)?);
    independent.insert((0, 2), parse_rate(&l2)?);
    independent.insert((1, 0), parse_rate("ind(x[1]>0)")?);
    independent.insert((2, 0), parse_rate("ind(x[2]>0)")?);

    let mut balanced = BTreeMap::new();
    balanced.insert(
        (0, 1),
        parse_rate(&format!("{lsum}*ind(x[1]<x[2]) + {l1}*ind(x[1]==x[2])"))?,
    );
    balanced.insert(
        (0, 2),
        parse_rate(&format!("{lsum}*ind(x[1]>x[2]) + {l2}*ind(x[1]==x[2])"))?,
    );
    balanced.insert((1, 0), parse_rate("ind(x[1]>0)")?);
    balanced.insert((2, 0), parse_rate("ind(x[2]>0)")?);

    Ok(QueueingModels {
        load_balanced: PopulationModel::new(2, bounds.clone(), balanced)?,
        independent: PopulationModel::new(2, bounds, independent)?,
    })
}

/// `α_n(x) = x1 ∨ x2 ∨ (|x| − n)`, the slack function behind the closed
/// form of the iterates. Integer-valued on integer points.
pub fn alpha_eval(n: i64, x: (i64, i64)) -> i64 {
    x.0.max(x.1).max(x.0 + x.1 - n)
}

#[derive(Clone, Debug)]
pub struct AlphaViolation {
    pub item: u8,
    pub n: i64,
    pub x: (i64, i64),
}

#[derive(Clone, Debug)]
pub struct AlphaReport {
    pub grid: (i64, i64),
    pub n_max: i64,
    pub points_checked: usize,
    pub violations: Vec<AlphaViolation>,
}

impl AlphaReport {
    pub fn holds(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Pointwise check of the six slack-function identities over the grid
/// `[lo, hi]²` for `n = 0..=n_max`.
pub fn alpha_properties(lo: i64, hi: i64, n_max: i64) -> AlphaReport {
    let mut violations = Vec::new();
    let mut points = 0usize;
    let mut record = |item: u8, n: i64, x: (i64, i64)| {
        violations.push(AlphaViolation { item, n, x });
    };
    for n in 0..=n_max {
        for x1 in lo..=hi {
            for x2 in lo..=hi {
                points += 1;
                let x = (x1, x2);
                let a = |p: (i64, i64)| alpha_eval(n, p);
                // (i) α_n(x) = |x| − x1 ∧ x2 ∧ n
                if a(x) != x1 + x2 - x1.min(x2).min(n) {
                    record(1, n, x);
                }
                // (ii) α_n(x − e_k) ≤ α_{n+1}(x)
                if a((x1 - 1, x2)) > alpha_eval(n + 1, x) || a((x1, x2 - 1)) > alpha_eval(n + 1, x)
                {
                    record(2, n, x);
                }
                // (iii) α_n(x+e1) > α_n(x+e2) ⟺ x1 > x2 ∨ (|x| − n)
                let lhs3 = a((x1 + 1, x2)) > a((x1, x2 + 1));
                let rhs3 = x1 > x2.max(x1 + x2 - n);
                if lhs3 != rhs3 {
                    record(3, n, x);
                }
                // (iv) α_n(x−e1) < α_n(x−e2) ⟺ x1 > x2 ∨ (|x| − n − 1)
                let lhs4 = a((x1 - 1, x2)) < a((x1, x2 - 1));
                let rhs4 = x1 > x2.max(x1 + x2 - n - 1);
                if lhs4 != rhs4 {
                    record(4, n, x);
                }
                // (v) α_n(x+e_k) > α_n(x) for k with x_k = x1 ∨ x2
                let hi_coord = x1.max(x2);
                if (x1 == hi_coord && a((x1 + 1, x2)) <= a(x))
                    || (x2 == hi_coord && a((x1, x2 + 1)) <= a(x))
                {
                    record(5, n, x);
                }
                // (vi) α_n(x−e_k) = α_{n+1}(x) for k with x_k = x1 ∧ x2
                let lo_coord = x1.min(x2);
                if (x1 == lo_coord && a((x1 - 1, x2)) != alpha_eval(n + 1, x))
                    || (x2 == lo_coord && a((x1, x2 - 1)) != alpha_eval(n + 1, x))
                {
                    record(6, n, x);
                }
            }
        }
    }
    AlphaReport { grid: (lo, hi), n_max, points_checked: points, violations }
}

/// The closed form of the `n`-th iterate on a pair of two-dimensional
/// points: `|x| ≤ |y|` and `x1∨x2 ≤ y1∨y2 + (y1∧y2 − n)⁺`.
pub fn queueing_formula(n: i64, x: (i64, i64), y: (i64, i64)) -> bool {
    x.0 + x.1 <= y.0 + y.1
        && x.0.max(x.1) <= y.0.max(y.1) + (y.0.min(y.1) - n).max(0)
}

/// Materializes the closed-form iterate as a relation on a grid space
/// pair (both spaces must be two-dimensional grids).
pub fn queueing_formula_relation(n: i64, space: &crate::space::StateSpace) -> Relation {
    Relation::from_predicate(space.clone(), space.clone(), |a, b| {
        let (pa, pb) = (a.point().expect("grid"), b.point().expect("grid"));
        queueing_formula(n, (pa[0], pa[1]), (pb[0], pb[1]))
    })
}

/// One iterate compared with the closed form on its safe region.
#[derive(Clone, Debug)]
pub struct IterateCheck {
    pub n: usize,
    /// Coordinates up to this bound are provably unaffected by the
    /// boundary truncation after `n` rounds.
    pub safe_bound: i64,
    /// Pairs disagreeing with the formula inside the safe region.
    pub mismatches: Vec<((i64, i64), (i64, i64))>,
    /// Disagreements outside the safe region, reported but not failures.
    pub outside_mismatches: usize,
}

impl IterateCheck {
    pub fn matches(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Final-iterate comparison with weak majorization.
#[derive(Clone, Debug)]
pub struct WeakMajCheck {
    pub bound: i64,
    pub mismatches: Vec<((i64, i64), (i64, i64))>,
}

impl WeakMajCheck {
    pub fn matches(&self) -> bool {
        self.mismatches.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct QueueingReport {
    pub lambda1: Rat,
    pub lambda2: Rat,
    pub cap: i64,
    pub iterations: usize,
    pub trace: SubrelationTrace,
    pub per_iterate: Vec<IterateCheck>,
    pub weak_majorization: WeakMajCheck,
}

impl QueueingReport {
    /// All iterate checks match and the final weak-majorization
    /// comparison matches.
    pub fn matches_all(&self) -> bool {
        self.per_iterate.iter().all(IterateCheck::matches) && self.weak_majorization.matches()
    }
}

/// Compares a computed iterate against a formula on the region where all
/// coordinates of both states sit within `bound`.
fn mismatches_on_region<F>(
    computed: &Relation,
    bound_lo: i64,
    bound_hi: i64,
    formula: F,
) -> (Vec<((i64, i64), (i64, i64))>, usize)
where
    F: Fn((i64, i64), (i64, i64)) -> bool,
{
    let left = computed.left_space();
    let right = computed.right_space();
    let mut inside = Vec::new();
    let mut outside = 0usize;
    for i in 0..left.len() {
        let p = left.point(i).expect("grid");
        let x = (p[0], p[1]);
        for j in 0..right.len() {
            let q = right.point(j).expect("grid");
            let y = (q[0], q[1]);
            if computed.contains(i, j) != formula(x, y) {
                let in_region = [x.0, x.1, y.0, y.1]
                    .iter()
                    .all(|&c| bound_lo <= c && c <= bound_hi);
                if in_region {
                    inside.push((x, y));
                } else {
                    outside += 1;
                }
            }
        }
    }
    (inside, outside)
}

/// Replays the case study: builds both models on `[0, cap]²`, runs the
/// continuous-time subrelation iteration from the total-count order for
/// `iterations` rounds, and compares every iterate with the closed form
/// on its safe region. The final iterate is also compared with weak
/// majorization on the final safe region.
pub fn reproduce_queueing(
    lambda1: &Rat,
    lambda2: &Rat,
    cap: i64,
    iterations: usize,
) -> Result<QueueingReport> {
    if cap < iterations as i64 + 4 {
        return Err(Error::BadModel(format!(
            "capacity {cap} too small for {iterations} iterations; need cap ≥ iterations + 4"
        )));
    }
    let models = queueing_models(lambda1, lambda2, cap)?;
    let q_lb = models.load_balanced.to_rate_kernel()?;
    let q_ind = models.independent.to_rate_kernel()?;
    let space = models.load_balanced.space().clone();
    let r_sum = Relation::build(&RelationKind::SumLeq, space.clone(), space.clone())?;
    let opts = SubrelationOptions {
        max_iterations: Some(iterations),
        ..SubrelationOptions::worklist()
    };
    let trace = ct_subrelation(&r_sum, &q_lb, &q_ind, &opts)?;

    let mut per_iterate = Vec::with_capacity(iterations + 1);
    for n in 0..=iterations {
        let safe_bound = cap - n as i64 - 1;
        let (mismatches, outside_mismatches) =
            mismatches_on_region(trace.iterate(n), 0, safe_bound, |x, y| {
                queueing_formula(n as i64, x, y)
            });
        per_iterate.push(IterateCheck { n, safe_bound, mismatches, outside_mismatches });
    }

    let wm_bound = cap - iterations as i64 - 1;
    let (wm_mismatches, _) =
        mismatches_on_region(trace.iterate(iterations), 0, wm_bound, |x, y| {
            weak_majorization_2d(x, y)
        });

    Ok(QueueingReport {
        lambda1: lambda1.clone(),
        lambda2: lambda2.clone(),
        cap,
        iterations,
        trace,
        per_iterate,
        weak_majorization: WeakMajCheck { bound: wm_bound, mismatches: wm_mismatches },
    })
}

pub(crate) fn weak_majorization_2d(x: (i64, i64), y: (i64, i64)) -> bool {
    x.0.max(x.1) <= y.0.max(y.1) && x.0 + x.1 <= y.0 + y.1
}

/// Pairs within the box `[0, bound]²` on both sides where a relation
/// differs from weak majorization.
pub fn weak_majorization_mismatches(
    computed: &Relation,
    bound: i64,
) -> Vec<((i64, i64), (i64, i64))> {
    mismatches_on_region(computed, 0, bound, weak_majorization_2d).0
}
