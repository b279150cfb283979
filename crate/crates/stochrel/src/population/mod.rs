//! Markov population processes on truncated integer grids.
//!
//! A population model moves one individual at a time: the transition
//! `x ↦ x + e_{i,j}` (one individual from colony `i` to colony `j`,
//! index 0 being the outside world) fires at rate `α_{i,j}(x)`, given by
//! a rate expression. The state space is a finite box; transitions that
//! would leave the box are blocked, which keeps interior rates exact.

mod expr;
mod queueing;

pub use expr::{parse_rate, Cmp, RateExpr};
pub use queueing::{
    alpha_eval, alpha_properties, queueing_formula_relation, reproduce_queueing, weak_majorization_mismatches,
    AlphaReport, AlphaViolation, IterateCheck, QueueingModels, QueueingReport, WeakMajCheck,
    queueing_models,
};

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::ctmc::{ct_preserves, RateKernel};
use crate::error::{Error, Result};
use crate::rational::Rat;
use crate::relation::{Relation, RelationKind};
use crate::space::{Label, StateSpace};

/// A population model: colony count, truncation box, and per-move rate
/// expressions.
#[derive(Clone, Debug)]
pub struct PopulationModel {
    m: usize,
    bounds: Vec<(i64, i64)>,
    rates: BTreeMap<(usize, usize), RateExpr>,
    space: StateSpace,
}

impl PopulationModel {
    /// Validates and builds a model. Every rate expression must evaluate
    /// to a nonnegative value at every state of the box.
    pub fn new(
        m: usize,
        bounds: Vec<(i64, i64)>,
        rates: BTreeMap<(usize, usize), RateExpr>,
    ) -> Result<Self> {
        if m == 0 {
            return Err(Error::BadModel("need at least one colony".into()));
        }
        if bounds.len() != m {
            return Err(Error::BadModel(format!(
                "box must bound {m} coordinates, got {}",
                bounds.len()
            )));
        }
        for (&(i, j), e) in &rates {
            if i == j || i > m || j > m {
                return Err(Error::BadModel(format!(
                    "rate index ({i},{j}) is not a move between distinct colonies 0..={m}"
                )));
            }
            if e.max_coordinate() > m {
                return Err(Error::BadModel(format!(
                    "rate ({i},{j}) mentions coordinate x[{}] beyond {m}",
                    e.max_coordinate()
                )));
            }
        }
        let space = StateSpace::grid(&bounds)?;
        let model = PopulationModel { m, bounds, rates, space };
        for idx in 0..model.space.len() {
            let x = model.space.point(idx).expect("grid labels are points");
            for (&(i, j), e) in &model.rates {
                let v = e.eval(x);
                if v < Rat::zero() {
                    return Err(Error::NegativeRate {
                        state: model.space.label(idx).to_string(),
                        rate: format!("rate ({i},{j}) = {v}"),
                    });
                }
            }
        }
        Ok(model)
    }

    pub fn colonies(&self) -> usize {
        self.m
    }

    pub fn bounds(&self) -> &[(i64, i64)] {
        &self.bounds
    }

    pub fn rate_exprs(&self) -> &BTreeMap<(usize, usize), RateExpr> {
        &self.rates
    }

    /// The truncated grid the process lives on.
    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    /// The displacement `e_{i,j} = e_j − e_i` (with `e_0 = 0`).
    pub fn displacement(&self, i: usize, j: usize) -> Vec<i64> {
        let mut d = vec![0i64; self.m];
        if i > 0 {
            d[i - 1] -= 1;
        }
        if j > 0 {
            d[j - 1] += 1;
        }
        d
    }

    pub fn in_box(&self, x: &[i64]) -> bool {
        x.iter()
            .zip(&self.bounds)
            .all(|(&c, &(lo, hi))| lo <= c && c <= hi)
    }

    /// Target of the move `(i, j)` from `x`, when it stays in the box.
    pub fn target(&self, x: &[i64], i: usize, j: usize) -> Option<Vec<i64>> {
        let d = self.displacement(i, j);
        let y: Vec<i64> = x.iter().zip(&d).map(|(&c, &dc)| c + dc).collect();
        self.in_box(&y).then_some(y)
    }

    /// Effective rate of the move `(i, j)` at `x`: the expression value,
    /// or zero when no expression is given or the target leaves the box.
    pub fn rate_at(&self, x: &[i64], i: usize, j: usize) -> Rat {
        let Some(e) = self.rates.get(&(i, j)) else {
            return Rat::zero();
        };
        if self.target(x, i, j).is_none() {
            return Rat::zero();
        }
        e.eval(x)
    }

    /// All moves `(i, j)`, `i ≠ j`, in lexicographic order — including
    /// moves without a rate expression, whose rate is zero.
    pub fn all_moves(&self) -> Vec<(usize, usize)> {
        let mut moves = Vec::new();
        for i in 0..=self.m {
            for j in 0..=self.m {
                if i != j {
                    moves.push((i, j));
                }
            }
        }
        moves
    }

    /// Materializes the rate kernel on the truncated grid, accumulating
    /// rates when distinct moves hit the same target.
    pub fn to_rate_kernel(&self) -> Result<RateKernel> {
        let mut rows = Vec::with_capacity(self.space.len());
        for idx in 0..self.space.len() {
            let x = self.space.point(idx).expect("grid labels are points");
            let mut row: BTreeMap<usize, Rat> = BTreeMap::new();
            for &(i, j) in self.rates.keys() {
                let rate = self.rate_at(x, i, j);
                if rate.is_zero() {
                    continue;
                }
                let y = self.target(x, i, j).expect("positive rate implies in-box target");
                let yidx = self
                    .space
                    .index_of(&Label::Point(y))
                    .expect("in-box targets are states");
                *row.entry(yidx).or_insert_with(Rat::zero) += rate;
            }
            rows.push(row.into_iter().collect());
        }
        RateKernel::from_rates(self.space.clone(), rows)
    }
}

/// Which route decided a population preservation check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PopulationMethod {
    /// Move-subset enumeration over the transition structure.
    MoveSubsets,
    /// Too many colonies to enumerate move subsets: decided by the
    /// uniformized kernel check instead.
    UniformizedFallback,
}

/// A failed inequality, with the witnessing subset of moves.
#[derive(Clone, Debug)]
pub struct PopulationFailure {
    pub left: usize,
    pub right: usize,
    pub witness: PopulationWitness,
}

#[derive(Clone, Debug)]
pub enum PopulationWitness {
    /// `Σ_{(i,j) ∈ U} α(x) > Σ_{(k,l) ∈ U→} α'(y)`.
    Upper { subset: Vec<(usize, usize)>, lhs: Rat, rhs: Rat },
    /// `Σ_{(i,j) ∈ V←} α(x) < Σ_{(k,l) ∈ V} α'(y)`.
    Lower { subset: Vec<(usize, usize)>, lhs: Rat, rhs: Rat },
    /// Fallback witness from the uniformized check.
    Rows(crate::coupling::ViolatingSet),
}

#[derive(Clone, Debug)]
pub struct PopulationReport {
    pub method: PopulationMethod,
    pub checked_pairs: usize,
    pub failures: Vec<PopulationFailure>,
}

impl PopulationReport {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Decides whether two population processes stochastically preserve `r`
/// by checking, for every related pair of states, the two families of
/// move-subset inequalities. With more than three colonies a side, falls
/// back to the uniformized kernel check.
pub fn population_check(
    r: &Relation,
    model1: &PopulationModel,
    model2: &PopulationModel,
) -> Result<PopulationReport> {
    r.left_space().expect_same(model1.space(), "relation left space must be model 1's box")?;
    r.right_space().expect_same(model2.space(), "relation right space must be model 2's box")?;
    if model1.m > 3 || model2.m > 3 {
        let report = ct_preserves(r, &model1.to_rate_kernel()?, &model2.to_rate_kernel()?)?;
        return Ok(PopulationReport {
            method: PopulationMethod::UniformizedFallback,
            checked_pairs: report.checked_pairs,
            failures: report
                .failures
                .into_iter()
                .map(|f| PopulationFailure {
                    left: f.left,
                    right: f.right,
                    witness: PopulationWitness::Rows(f.violation),
                })
                .collect(),
        });
    }

    let moves1 = model1.all_moves();
    let moves2 = model2.all_moves();
    let mut failures = Vec::new();
    // membership of a pair of (possibly out-of-box) targets
    let related = |x: &[i64], y: &[i64]| -> bool {
        match (
            model1.space().index_of(&Label::Point(x.to_vec())),
            model2.space().index_of(&Label::Point(y.to_vec())),
        ) {
            (Some(a), Some(b)) => r.contains(a, b),
            _ => false,
        }
    };

    for (xi, yi) in r.pairs() {
        let x = model1.space().point(xi).expect("grid labels are points").to_vec();
        let y = model2.space().point(yi).expect("grid labels are points").to_vec();
        let alpha1: Vec<Rat> = moves1.iter().map(|&(i, j)| model1.rate_at(&x, i, j)).collect();
        let alpha2: Vec<Rat> = moves2.iter().map(|&(k, l)| model2.rate_at(&y, k, l)).collect();
        let target1: Vec<Option<Vec<i64>>> =
            moves1.iter().map(|&(i, j)| model1.target(&x, i, j)).collect();
        let target2: Vec<Option<Vec<i64>>> =
            moves2.iter().map(|&(k, l)| model2.target(&y, k, l)).collect();

        // upper family: U over moves of x whose targets are unrelated to y
        let eligible1: Vec<usize> = (0..moves1.len())
            .filter(|&a| match &target1[a] {
                Some(t) => !related(t, &y),
                None => true,
            })
            .collect();
        // arrows a -> mask of moves b with x+e_a ~ y+e_b
        let arrows1: Vec<u64> = eligible1
            .iter()
            .map(|&a| {
                let mut mask = 0u64;
                if let Some(t) = &target1[a] {
                    for (b, t2) in target2.iter().enumerate() {
                        if let Some(t2) = t2 {
                            if related(t, t2) {
                                mask |= 1 << b;
                            }
                        }
                    }
                }
                mask
            })
            .collect();
        'upper: for u in 1u64..1 << eligible1.len() {
            let mut lhs = Rat::zero();
            let mut conj = 0u64;
            for (k, &a) in eligible1.iter().enumerate() {
                if u >> k & 1 == 1 {
                    lhs += &alpha1[a];
                    conj |= arrows1[k];
                }
            }
            let rhs: Rat = (0..moves2.len())
                .filter(|&b| conj >> b & 1 == 1)
                .map(|b| alpha2[b].clone())
                .sum();
            if lhs > rhs {
                failures.push(PopulationFailure {
                    left: xi,
                    right: yi,
                    witness: PopulationWitness::Upper {
                        subset: eligible1
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| u >> k & 1 == 1)
                            .map(|(_, &a)| moves1[a])
                            .collect(),
                        lhs,
                        rhs,
                    },
                });
                break 'upper;
            }
        }

        // lower family: V over moves of y whose targets are unrelated to x
        let eligible2: Vec<usize> = (0..moves2.len())
            .filter(|&b| match &target2[b] {
                Some(t) => !related(&x, t),
                None => true,
            })
            .collect();
        let arrows2: Vec<u64> = eligible2
            .iter()
            .map(|&b| {
                let mut mask = 0u64;
                if let Some(t2) = &target2[b] {
                    for (a, t) in target1.iter().enumerate() {
                        if let Some(t) = t {
                            if related(t, t2) {
                                mask |= 1 << a;
                            }
                        }
                    }
                }
                mask
            })
            .collect();
        'lower: for v in 1u64..1 << eligible2.len() {
            let mut rhs = Rat::zero();
            let mut conj = 0u64;
            for (k, &b) in eligible2.iter().enumerate() {
                if v >> k & 1 == 1 {
                    rhs += &alpha2[b];
                    conj |= arrows2[k];
                }
            }
            let lhs: Rat = (0..moves1.len())
                .filter(|&a| conj >> a & 1 == 1)
                .map(|a| alpha1[a].clone())
                .sum();
            if lhs < rhs {
                failures.push(PopulationFailure {
                    left: xi,
                    right: yi,
                    witness: PopulationWitness::Lower {
                        subset: eligible2
                            .iter()
                            .enumerate()
                            .filter(|(k, _)| v >> k & 1 == 1)
                            .map(|(_, &b)| moves2[b])
                            .collect(),
                        lhs,
                        rhs,
                    },
                });
                break 'lower;
            }
        }
    }

    Ok(PopulationReport {
        method: PopulationMethod::MoveSubsets,
        checked_pairs: r.pair_count(),
        failures,
    })
}

/// A failed partial-order inequality at a pair `x ≤_M y`.
#[derive(Clone, Debug)]
pub struct PartialOrderFailure {
    pub left: usize,
    pub right: usize,
    /// The coordinate `k ∈ M` with `x_k = y_k` being tested.
    pub coordinate: usize,
    pub witness: PopulationWitness,
}

#[derive(Clone, Debug)]
pub struct PartialOrderReport {
    pub relation: Relation,
    pub checked_pairs: usize,
    pub failures: Vec<PartialOrderFailure>,
}

impl PartialOrderReport {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Specialized preservation test for the partial coordinatewise order
/// `≤_M`: per related pair and per tied coordinate `k`, arrival sums
/// into `k` must be dominated and departure sums from `k` must dominate.
pub fn partial_order_check(
    coords: &[usize],
    model1: &PopulationModel,
    model2: &PopulationModel,
) -> Result<PartialOrderReport> {
    let shared = model1.m.min(model2.m);
    for &c in coords {
        if c == 0 || c > shared {
            return Err(Error::BadRelationParams(format!(
                "coordinate {c} is not shared by both models (1..={shared})"
            )));
        }
    }
    let r = Relation::build(
        &RelationKind::CoordinatewiseLeq(coords.to_vec()),
        model1.space().clone(),
        model2.space().clone(),
    )?;
    let mut failures = Vec::new();
    for (xi, yi) in r.pairs() {
        let x = model1.space().point(xi).expect("grid labels are points").to_vec();
        let y = model2.space().point(yi).expect("grid labels are points").to_vec();
        let tied: Vec<usize> =
            coords.iter().copied().filter(|&k| x[k - 1] == y[k - 1]).collect();
        let m0: std::collections::BTreeSet<usize> = tied.iter().copied().collect();
        for &k in &tied {
            // arrivals into colony k
            let sources1: Vec<usize> = (0..=model1.m).filter(|&i| i != k).collect();
            let extra_in: Vec<usize> =
                (0..=model2.m).filter(|i| !m0.contains(i) && *i != k).collect();
            for mask in 0u64..1 << sources1.len() {
                let chosen: Vec<usize> = sources1
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &i)| i)
                    .collect();
                let lhs: Rat = chosen.iter().map(|&i| model1.rate_at(&x, i, k)).sum();
                let mut rhs_set: std::collections::BTreeSet<usize> =
                    chosen.iter().copied().collect();
                rhs_set.extend(&extra_in);
                let rhs: Rat = rhs_set.iter().map(|&i| model2.rate_at(&y, i, k)).sum();
                if lhs > rhs {
                    failures.push(PartialOrderFailure {
                        left: xi,
                        right: yi,
                        coordinate: k,
                        witness: PopulationWitness::Upper {
                            subset: chosen.iter().map(|&i| (i, k)).collect(),
                            lhs,
                            rhs,
                        },
                    });
                    break;
                }
            }
            // departures out of colony k
            let sinks2: Vec<usize> = (0..=model2.m).filter(|&j| j != k).collect();
            let extra_out: Vec<usize> =
                (0..=model1.m).filter(|j| !m0.contains(j) && *j != k).collect();
            for mask in 0u64..1 << sinks2.len() {
                let chosen: Vec<usize> = sinks2
                    .iter()
                    .enumerate()
                    .filter(|(b, _)| mask >> b & 1 == 1)
                    .map(|(_, &j)| j)
                    .collect();
                let rhs: Rat = chosen.iter().map(|&j| model2.rate_at(&y, k, j)).sum();
                let mut lhs_set: std::collections::BTreeSet<usize> =
                    chosen.iter().copied().collect();
                lhs_set.extend(&extra_out);
                let lhs: Rat = lhs_set.iter().map(|&j| model1.rate_at(&x, k, j)).sum();
                if lhs < rhs {
                    failures.push(PartialOrderFailure {
                        left: xi,
                        right: yi,
                        coordinate: k,
                        witness: PopulationWitness::Lower {
                            subset: chosen.iter().map(|&j| (k, j)).collect(),
                            lhs,
                            rhs,
                        },
                    });
                    break;
                }
            }
        }
    }
    Ok(PartialOrderReport { relation: r.clone(), checked_pairs: r.pair_count(), failures })
}
