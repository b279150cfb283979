//! The maximal stochastically preserved subrelation.
//!
//! Removing from a relation every pair whose kernel rows fail the
//! relatedness check, and repeating against the shrunken relation, is a
//! monotone iteration `R ⊇ M(R) ⊇ M(M(R)) ⊇ …`. On finite spaces it
//! reaches a fixed point in at most `|R|` rounds, and that fixed point is
//! the largest subrelation of `R` the kernel pair stochastically
//! preserves — possibly empty, which certifies that no nontrivial
//! preserved subrelation exists.
//!
//! Two iteration strategies are provided and produce identical traces:
//! a full rescan of all surviving pairs each round, and a worklist that
//! rechecks only pairs whose one-step neighbourhoods lost members.

use num_traits::ToPrimitive;

use crate::bits::BitIter;
use crate::coupling::{st_check_sparse, SparseDecision, ViolatingSet};
use crate::error::{Error, Result};
use crate::flow::FlowBuffer;
use crate::kernel::Kernel;
use crate::parallel::run_pooled;
use crate::rational::Rat;
use crate::relation::Relation;

/// How the iteration chooses which pairs to recheck each round.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum IterationStrategy {
    /// Recheck every surviving pair every round.
    #[default]
    FullRescan,
    /// Recheck only pairs whose row supports touch a removed pair.
    Worklist,
}

#[derive(Clone, Debug, Default)]
pub struct SubrelationOptions {
    pub strategy: IterationStrategy,
    /// Stop after this many removal rounds even if not yet converged.
    pub max_iterations: Option<usize>,
}

impl SubrelationOptions {
    pub fn worklist() -> Self {
        SubrelationOptions { strategy: IterationStrategy::Worklist, max_iterations: None }
    }
}

/// A pair dropped by one round, with the certificate that its rows are
/// not stochastically related.
#[derive(Clone, Debug)]
pub struct RemovedPair {
    pub left: usize,
    pub right: usize,
    pub violation: ViolatingSet,
}

/// The decreasing sequence of relations produced by the iteration.
#[derive(Clone, Debug)]
pub struct SubrelationTrace {
    /// Distinct iterates, starting from the input relation.
    pub steps: Vec<Relation>,
    /// Pairs removed between consecutive iterates, sorted.
    pub removed: Vec<Vec<RemovedPair>>,
    /// Whether the last entry is a genuine fixed point.
    pub converged: bool,
}

impl SubrelationTrace {
    /// The maximal preserved subrelation, when the iteration converged.
    pub fn fixed_point(&self) -> Option<&Relation> {
        self.converged.then(|| self.steps.last().expect("trace is never empty"))
    }

    /// The `n`-th iterate; past the end the last one (constant once
    /// converged).
    pub fn iterate(&self, n: usize) -> &Relation {
        &self.steps[n.min(self.steps.len() - 1)]
    }

    pub fn rounds(&self) -> usize {
        self.steps.len() - 1
    }
}

/// Row data for the pair checks of one iteration.
///
/// The exact rows are the contract; integer rows are an optional fast
/// path where every mass is pre-scaled by a common denominator, letting
/// the flow run on machine words. Decisions agree because the scaled
/// network is order-isomorphic to the exact one.
pub(crate) trait PairRows: Sync {
    fn rat_rows(&self, x1: usize, x2: usize) -> (Vec<(usize, Rat)>, Vec<(usize, Rat)>);

    /// Fills integer-scaled rows sharing one total; `false` when the
    /// scaling does not fit.
    fn int_rows(
        &self,
        x1: usize,
        x2: usize,
        mu: &mut Vec<(usize, u128)>,
        nu: &mut Vec<(usize, u128)>,
    ) -> bool;

    /// Left states whose row support contains `state` (including any
    /// self-loop contribution).
    fn rev_left(&self, state: usize) -> &[usize];
    fn rev_right(&self, state: usize) -> &[usize];
}

struct CheckScratch {
    flow: FlowBuffer<u128>,
    mu: Vec<(usize, u128)>,
    nu: Vec<(usize, u128)>,
    mu_mass: Vec<u128>,
    nu_mass: Vec<u128>,
}

impl Default for CheckScratch {
    fn default() -> Self {
        CheckScratch {
            flow: FlowBuffer::default(),
            mu: Vec::new(),
            nu: Vec::new(),
            mu_mass: Vec::new(),
            nu_mass: Vec::new(),
        }
    }
}

/// Checks one pair against `current`; returns the violation when the
/// rows are not related.
fn check_pair<P: PairRows>(
    rows: &P,
    current: &Relation,
    x1: usize,
    x2: usize,
    scratch: &mut CheckScratch,
) -> Option<ViolatingSet> {
    scratch.mu.clear();
    scratch.nu.clear();
    if rows.int_rows(x1, x2, &mut scratch.mu, &mut scratch.nu) {
        scratch.mu_mass.clear();
        scratch.mu_mass.extend(scratch.mu.iter().map(|&(_, m)| m));
        scratch.nu_mass.clear();
        scratch.nu_mass.extend(scratch.nu.iter().map(|&(_, m)| m));
        let (mu, nu) = (&scratch.mu, &scratch.nu);
        let feasible = scratch
            .flow
            .check(
                &scratch.mu_mass,
                &scratch.nu_mass,
                |i, j| current.contains(mu[i].0, nu[j].0),
                &0,
            )
            .is_ok();
        if feasible {
            return None;
        }
        // rebuild the certificate in exact arithmetic
        let (rmu, rnu) = rows.rat_rows(x1, x2);
        match st_check_sparse(current, &rmu, &rnu) {
            SparseDecision::Feasible(_) => {
                unreachable!("scaled and exact networks decide identically")
            }
            SparseDecision::Infeasible(v) => Some(v),
        }
    } else {
        let (rmu, rnu) = rows.rat_rows(x1, x2);
        match st_check_sparse(current, &rmu, &rnu) {
            SparseDecision::Feasible(_) => None,
            SparseDecision::Infeasible(v) => Some(v),
        }
    }
}

/// Core fixed-point loop shared by the discrete- and continuous-time
/// front ends. Each round synchronizes on the full removed set before
/// the next one begins.
pub(crate) fn run_iteration<P: PairRows>(
    r0: &Relation,
    rows: &P,
    opts: &SubrelationOptions,
) -> SubrelationTrace {
    use rayon::prelude::*;

    let n2 = r0.right_space().len();
    let mut current = r0.clone();
    let mut steps = vec![r0.clone()];
    let mut removed: Vec<Vec<RemovedPair>> = Vec::new();
    let mut to_check: Vec<(usize, usize)> = current.pairs().collect();
    let mut converged = false;

    loop {
        if opts.max_iterations.is_some_and(|cap| steps.len() > cap) {
            break;
        }
        let current_ref = &current;
        let mut round: Vec<RemovedPair> = run_pooled(|| {
            to_check
                .par_iter()
                .map_init(CheckScratch::default, |scratch, &(x1, x2)| {
                    check_pair(rows, current_ref, x1, x2, scratch)
                        .map(|violation| RemovedPair { left: x1, right: x2, violation })
                })
                .flatten()
                .collect()
        });
        if round.is_empty() {
            converged = true;
            break;
        }
        round.sort_by_key(|rp| (rp.left, rp.right));
        for rp in &round {
            current.remove(rp.left, rp.right);
        }
        steps.push(current.clone());

        to_check = match opts.strategy {
            IterationStrategy::FullRescan => current.pairs().collect(),
            IterationStrategy::Worklist => {
                let words = n2.div_ceil(64);
                let mut seen = vec![0u64; current.left_space().len() * words];
                for rp in &round {
                    for &a in rows.rev_left(rp.left) {
                        for &b in rows.rev_right(rp.right) {
                            if current.contains(a, b) {
                                seen[a * words + b / 64] |= 1 << (b % 64);
                            }
                        }
                    }
                }
                let mut next = Vec::new();
                for a in 0..current.left_space().len() {
                    for (k, &w) in seen[a * words..(a + 1) * words].iter().enumerate() {
                        for b in BitIter(w) {
                            next.push((a, k * 64 + b));
                        }
                    }
                }
                next
            }
        };
        removed.push(round);
    }

    SubrelationTrace { steps, removed, converged }
}

struct KernelRows<'a> {
    p1: &'a Kernel,
    p2: &'a Kernel,
    int1: Option<Vec<Vec<(usize, u128)>>>,
    int2: Option<Vec<Vec<(usize, u128)>>>,
    rev1: Vec<Vec<usize>>,
    rev2: Vec<Vec<usize>>,
}

impl<'a> KernelRows<'a> {
    fn new(p1: &'a Kernel, p2: &'a Kernel) -> Self {
        let scaled = scale_kernels(&[p1, p2]);
        let (int1, int2) = match scaled {
            Some(mut v) => {
                let b = v.pop().unwrap();
                let a = v.pop().unwrap();
                (Some(a), Some(b))
            }
            None => (None, None),
        };
        KernelRows {
            p1,
            p2,
            int1,
            int2,
            rev1: p1.reverse_supports(),
            rev2: p2.reverse_supports(),
        }
    }
}

impl PairRows for KernelRows<'_> {
    fn rat_rows(&self, x1: usize, x2: usize) -> (Vec<(usize, Rat)>, Vec<(usize, Rat)>) {
        (self.p1.row(x1).to_vec(), self.p2.row(x2).to_vec())
    }

    fn int_rows(
        &self,
        x1: usize,
        x2: usize,
        mu: &mut Vec<(usize, u128)>,
        nu: &mut Vec<(usize, u128)>,
    ) -> bool {
        match (&self.int1, &self.int2) {
            (Some(a), Some(b)) => {
                mu.extend_from_slice(&a[x1]);
                nu.extend_from_slice(&b[x2]);
                true
            }
            _ => false,
        }
    }

    fn rev_left(&self, state: usize) -> &[usize] {
        &self.rev1[state]
    }

    fn rev_right(&self, state: usize) -> &[usize] {
        &self.rev2[state]
    }
}

/// Scales every row of every kernel to integers over one common
/// denominator, when that fits comfortably in `u128`.
fn scale_kernels(kernels: &[&Kernel]) -> Option<Vec<Vec<Vec<(usize, u128)>>>> {
    let mut l: u128 = 1;
    for k in kernels {
        for i in 0..k.from_space().len() {
            for (_, m) in k.row(i) {
                let d = m.denom().to_u128()?;
                l = l.checked_div(gcd(l, d))?.checked_mul(d)?;
                if l > 1 << 96 {
                    return None;
                }
            }
        }
    }
    let mut out = Vec::with_capacity(kernels.len());
    for k in kernels {
        let mut rows = Vec::with_capacity(k.from_space().len());
        for i in 0..k.from_space().len() {
            let row: Option<Vec<(usize, u128)>> = k
                .row(i)
                .iter()
                .map(|(j, m)| {
                    let num = m.numer().to_u128()?;
                    let den = m.denom().to_u128()?;
                    Some((*j, num.checked_mul(l / den)?))
                })
                .collect();
            rows.push(row?);
        }
        out.push(rows);
    }
    Some(out)
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Runs the subrelation iteration for a pair of discrete-time kernels,
/// starting from `r`.
pub fn subrelation(
    r: &Relation,
    p1: &Kernel,
    p2: &Kernel,
    opts: &SubrelationOptions,
) -> Result<SubrelationTrace> {
    r.left_space().expect_same(p1.from_space(), "p1 must act on the left space")?;
    r.left_space().expect_same(p1.to_space(), "p1 must map the left space to itself")?;
    r.right_space().expect_same(p2.from_space(), "p2 must act on the right space")?;
    r.right_space().expect_same(p2.to_space(), "p2 must map the right space to itself")?;
    if p1.from_space().len() == 0 {
        return Err(Error::BadInput("empty state space".into()));
    }
    let rows = KernelRows::new(p1, p2);
    Ok(run_iteration(r, &rows, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::st_related;
    use crate::kernel::preserves;
    use crate::rational::{rat, rat_int};
    use crate::relation::RelationKind;
    use crate::space::StateSpace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn chain(n: i64) -> StateSpace {
        StateSpace::integers(0..=n - 1)
    }

    fn random_kernel(space: &StateSpace, rng: &mut ChaCha8Rng) -> Kernel {
        let n = space.len();
        let rows = (0..n)
            .map(|_| {
                let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(0..4)).collect();
                let total: i64 = weights.iter().sum::<i64>().max(1);
                let mut row: Vec<Rat> = weights.iter().map(|&w| rat(w, total)).collect();
                let s: Rat = row.iter().sum();
                row[0] += rat_int(1) - s;
                row
            })
            .collect();
        Kernel::new(space.clone(), space.clone(), rows).unwrap()
    }

    #[test]
    fn preserved_relation_converges_immediately() {
        let s = chain(3);
        let r = Relation::build(&RelationKind::Full, s.clone(), s.clone()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p1 = random_kernel(&s, &mut rng);
        let p2 = random_kernel(&s, &mut rng);
        let trace = subrelation(&r, &p1, &p2, &SubrelationOptions::default()).unwrap();
        assert_eq!(trace.steps.len(), 1);
        assert!(trace.converged);
        assert_eq!(trace.fixed_point().unwrap(), &r);
    }

    #[test]
    fn engineered_two_state_chains_empty_fixed_point() {
        // one chain drifts to state 0, the other to state 1; no subrelation
        // of equality survives
        let s = chain(2);
        let eq = Relation::build(&RelationKind::Equality, s.clone(), s.clone()).unwrap();
        let to0 = Kernel::new(
            s.clone(),
            s.clone(),
            vec![vec![rat_int(1), rat_int(0)], vec![rat_int(1), rat_int(0)]],
        )
        .unwrap();
        let to1 = Kernel::new(
            s.clone(),
            s.clone(),
            vec![vec![rat_int(0), rat_int(1)], vec![rat_int(0), rat_int(1)]],
        )
        .unwrap();
        let trace = subrelation(&eq, &to0, &to1, &SubrelationOptions::default()).unwrap();
        assert!(trace.converged);
        assert!(!trace.fixed_point().unwrap().is_nontrivial());
        // brute force: no nonempty subrelation of equality is preserved
        for mask in 1u32..4 {
            let pairs: Vec<(usize, usize)> =
                (0..2).filter(|&i| mask >> i & 1 == 1).map(|i| (i, i)).collect();
            let sub = Relation::build(
                &RelationKind::FromPairs(pairs),
                s.clone(),
                s.clone(),
            )
            .unwrap();
            let mut ok = true;
            for (i, j) in sub.pairs() {
                ok &= st_related(&sub, &to0.row_dist(i), &to1.row_dist(j))
                    .unwrap()
                    .related();
            }
            assert!(!ok, "mask {mask} should not be preserved");
        }
    }

    #[test]
    fn trace_is_strictly_decreasing_and_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let s = chain(4);
        for _ in 0..25 {
            let r = Relation::from_predicate(s.clone(), s.clone(), |_, _| rng.gen_bool(0.7));
            let p1 = random_kernel(&s, &mut rng);
            let p2 = random_kernel(&s, &mut rng);
            let trace = subrelation(&r, &p1, &p2, &SubrelationOptions::default()).unwrap();
            assert!(trace.converged);
            for w in trace.steps.windows(2) {
                assert!(w[1].is_subset_of(&w[0]));
                assert!(w[1].pair_count() < w[0].pair_count());
            }
            // the fixed point is preserved (M(R*) = R*)
            let fp = trace.fixed_point().unwrap();
            if fp.is_nontrivial() {
                assert!(preserves(fp, &p1, &p2).unwrap().holds());
            }
        }
    }

    #[test]
    fn worklist_and_full_rescan_traces_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let s = chain(5);
        for _ in 0..25 {
            let r = Relation::from_predicate(s.clone(), s.clone(), |_, _| rng.gen_bool(0.8));
            let p1 = random_kernel(&s, &mut rng);
            let p2 = random_kernel(&s, &mut rng);
            let full = subrelation(&r, &p1, &p2, &SubrelationOptions::default()).unwrap();
            let fast = subrelation(&r, &p1, &p2, &SubrelationOptions::worklist()).unwrap();
            assert_eq!(full.steps.len(), fast.steps.len());
            for (a, b) in full.steps.iter().zip(&fast.steps) {
                assert_eq!(a, b);
            }
            for (a, b) in full.removed.iter().zip(&fast.removed) {
                let pa: Vec<_> = a.iter().map(|rp| (rp.left, rp.right)).collect();
                let pb: Vec<_> = b.iter().map(|rp| (rp.left, rp.right)).collect();
                assert_eq!(pa, pb);
                for (va, vb) in a.iter().zip(b) {
                    assert_eq!(va.violation, vb.violation);
                }
            }
        }
    }

    #[test]
    fn monotone_map_on_nested_relations() {
        // R ⊆ R' implies M(R) ⊆ M(R'): compare first-round survivors
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let s = chain(4);
        for _ in 0..25 {
            let big = Relation::from_predicate(s.clone(), s.clone(), |_, _| rng.gen_bool(0.8));
            let small = big.restrict(|_, _| rng.gen_bool(0.7));
            let p1 = random_kernel(&s, &mut rng);
            let p2 = random_kernel(&s, &mut rng);
            let opts = SubrelationOptions {
                max_iterations: Some(1),
                ..SubrelationOptions::default()
            };
            let m_small = subrelation(&small, &p1, &p2, &opts).unwrap();
            let m_big = subrelation(&big, &p1, &p2, &opts).unwrap();
            assert!(m_small
                .iterate(1)
                .is_subset_of(m_big.iterate(1)));
        }
    }

    #[test]
    fn maximality_against_exhaustive_enumeration() {
        // every preserved subrelation of R is contained in the fixed point
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let s = chain(3);
        for _ in 0..20 {
            let r = Relation::from_predicate(s.clone(), s.clone(), |_, _| rng.gen_bool(0.6));
            let p1 = random_kernel(&s, &mut rng);
            let p2 = random_kernel(&s, &mut rng);
            let trace = subrelation(&r, &p1, &p2, &SubrelationOptions::default()).unwrap();
            let rstar = trace.fixed_point().unwrap();
            let pairs: Vec<(usize, usize)> = r.pairs().collect();
            for mask in 1u32..1 << pairs.len() {
                let chosen: Vec<(usize, usize)> = pairs
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask >> k & 1 == 1)
                    .map(|(_, &p)| p)
                    .collect();
                let sub = Relation::build(
                    &RelationKind::FromPairs(chosen.clone()),
                    s.clone(),
                    s.clone(),
                )
                .unwrap();
                let preserved = chosen.iter().all(|&(i, j)| {
                    st_related(&sub, &p1.row_dist(i), &p2.row_dist(j))
                        .unwrap()
                        .related()
                });
                if preserved {
                    assert!(sub.is_subset_of(rstar));
                }
            }
        }
    }
}
