//! Probability kernels, stochastic preservation, and coupling kernels.
//!
//! A pair of kernels `(P1, P2)` *stochastically preserves* a relation
//! when every related pair of states has stochastically related rows.
//! When it does, the rows' witness couplings assemble into a coupling
//! kernel on the product space that never leaves the relation — the
//! constructive form of the Markovian-coupling characterization.

use num_traits::{One, Zero};
use rand::Rng;

use crate::coupling::{st_check_sparse, SparseDecision, ViolatingSet};
use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::parallel::run_pooled;
use crate::rational::Rat;
use crate::relation::Relation;
use crate::space::StateSpace;

/// A probability kernel between finite spaces: one exactly row-stochastic
/// sparse row per source state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Kernel {
    from: StateSpace,
    to: StateSpace,
    rows: Vec<Vec<(usize, Rat)>>,
}

impl Kernel {
    /// Builds a kernel from dense rows.
    pub fn new(from: StateSpace, to: StateSpace, dense_rows: Vec<Vec<Rat>>) -> Result<Self> {
        if dense_rows.len() != from.len() {
            return Err(Error::BadInput("row count must match the source space".into()));
        }
        let mut rows = Vec::with_capacity(dense_rows.len());
        for (i, dense) in dense_rows.into_iter().enumerate() {
            if dense.len() != to.len() {
                return Err(Error::NotStochastic {
                    row: i,
                    reason: "row length must match the target space".into(),
                });
            }
            rows.push(Self::check_row(i, dense.into_iter().enumerate().collect())?);
        }
        Ok(Kernel { from, to, rows })
    }

    /// Builds a kernel from sparse rows `(target, mass)`.
    pub fn from_sparse_rows(
        from: StateSpace,
        to: StateSpace,
        sparse_rows: Vec<Vec<(usize, Rat)>>,
    ) -> Result<Self> {
        if sparse_rows.len() != from.len() {
            return Err(Error::BadInput("row count must match the source space".into()));
        }
        let mut rows = Vec::with_capacity(sparse_rows.len());
        for (i, row) in sparse_rows.into_iter().enumerate() {
            for &(j, _) in &row {
                to.check_index(j)?;
            }
            rows.push(Self::check_row(i, row)?);
        }
        Ok(Kernel { from, to, rows })
    }

    fn check_row(i: usize, mut row: Vec<(usize, Rat)>) -> Result<Vec<(usize, Rat)>> {
        row.retain(|(_, m)| !m.is_zero());
        row.sort_by_key(|&(j, _)| j);
        for w in row.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::NotStochastic { row: i, reason: "duplicate target".into() });
            }
        }
        if row.iter().any(|(_, m)| m < &Rat::zero()) {
            return Err(Error::NotStochastic { row: i, reason: "negative mass".into() });
        }
        let total: Rat = row.iter().map(|(_, m)| m).sum();
        if !total.is_one() {
            return Err(Error::NotStochastic {
                row: i,
                reason: format!("row sums to {total} instead of 1"),
            });
        }
        Ok(row)
    }

    /// The identity kernel on a space.
    pub fn identity(space: StateSpace) -> Self {
        let rows = (0..space.len()).map(|i| vec![(i, Rat::one())]).collect();
        Kernel { from: space.clone(), to: space, rows }
    }

    pub fn from_space(&self) -> &StateSpace {
        &self.from
    }

    pub fn to_space(&self) -> &StateSpace {
        &self.to
    }

    /// Sparse row of state `i`, sorted by target.
    pub fn row(&self, i: usize) -> &[(usize, Rat)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> Rat {
        match self.rows[i].binary_search_by_key(&j, |&(t, _)| t) {
            Ok(k) => self.rows[i][k].1.clone(),
            Err(_) => Rat::zero(),
        }
    }

    /// Row as a distribution on the target space.
    pub fn row_dist(&self, i: usize) -> Dist {
        let mut mass = vec![Rat::zero(); self.to.len()];
        for (j, m) in &self.rows[i] {
            mass[*j] = m.clone();
        }
        Dist::new(self.to.clone(), mass).expect("rows are stochastic")
    }

    /// Kernel composition `(PQ)(x, ·) = Σ_y P(x, y) Q(y, ·)`.
    pub fn compose(&self, other: &Kernel) -> Result<Kernel> {
        self.to.expect_same(&other.from, "composition endpoint mismatch")?;
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut acc = vec![Rat::zero(); other.to.len()];
                for (y, m) in row {
                    for (z, w) in &other.rows[*y] {
                        acc[*z] += m * w;
                    }
                }
                acc.into_iter()
                    .enumerate()
                    .filter(|(_, m)| !m.is_zero())
                    .collect()
            })
            .collect();
        Ok(Kernel { from: self.from.clone(), to: other.to.clone(), rows })
    }

    /// States `x` with `P(x, {target}) > 0`, per target: the reverse
    /// support map used by worklist iteration.
    pub(crate) fn reverse_supports(&self) -> Vec<Vec<usize>> {
        let mut rev = vec![Vec::new(); self.to.len()];
        for (x, row) in self.rows.iter().enumerate() {
            for (y, _) in row {
                rev[*y].push(x);
            }
        }
        rev
    }
}

/// Push-forward of a distribution through a kernel, `μP`.
pub fn push(mu: &Dist, p: &Kernel) -> Result<Dist> {
    mu.space().expect_same(p.from_space(), "push: μ must live on the kernel source")?;
    let mut mass = vec![Rat::zero(); p.to_space().len()];
    for i in mu.support() {
        for (j, w) in p.row(i) {
            mass[*j] += mu.mass(i) * w;
        }
    }
    Dist::new(p.to_space().clone(), mass)
}

/// One failed pair of a preservation check, with its exact certificate.
#[derive(Clone, Debug)]
pub struct PairFailure {
    pub left: usize,
    pub right: usize,
    pub violation: ViolatingSet,
}

/// Outcome of a preservation check over every related pair.
#[derive(Clone, Debug)]
pub struct PreservationReport {
    pub checked_pairs: usize,
    pub failures: Vec<PairFailure>,
}

impl PreservationReport {
    pub fn holds(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Does `(p1, p2)` stochastically preserve `r`? Every pair `(x1, x2) ∈ r`
/// must have rows `p1(x1,·) ∼st p2(x2,·)` with respect to `r` itself.
pub fn preserves(r: &Relation, p1: &Kernel, p2: &Kernel) -> Result<PreservationReport> {
    preserves_into(r, r, p1, p2)
}

/// Preservation from `r` into `r_prime`, for kernels whose targets may
/// differ from their sources: rows of `r`-pairs must be related with
/// respect to `r_prime`.
pub fn preserves_into(
    r: &Relation,
    r_prime: &Relation,
    p1: &Kernel,
    p2: &Kernel,
) -> Result<PreservationReport> {
    r.left_space().expect_same(p1.from_space(), "p1 source must be the left space")?;
    r.right_space().expect_same(p2.from_space(), "p2 source must be the right space")?;
    r_prime.left_space().expect_same(p1.to_space(), "p1 target must be the left target space")?;
    r_prime
        .right_space()
        .expect_same(p2.to_space(), "p2 target must be the right target space")?;
    let pairs: Vec<(usize, usize)> = r.pairs().collect();
    let mut failures: Vec<PairFailure> = run_pooled(|| {
        use rayon::prelude::*;
        pairs
            .par_iter()
            .filter_map(|&(i, j)| {
                match st_check_sparse(r_prime, p1.row(i), p2.row(j)) {
                    SparseDecision::Feasible(_) => None,
                    SparseDecision::Infeasible(v) => {
                        Some(PairFailure { left: i, right: j, violation: v })
                    }
                }
            })
            .collect()
    });
    failures.sort_by_key(|f| (f.left, f.right));
    Ok(PreservationReport { checked_pairs: pairs.len(), failures })
}

/// A coupling of two kernels: a kernel on the product space whose rows
/// couple the component rows, and whose `r`-rows stay inside `r_prime`.
#[derive(Clone, Debug)]
pub struct CouplingKernel {
    from: StateSpace,
    to: StateSpace,
    from_dims: (usize, usize),
    to_dims: (usize, usize),
    rows: Vec<Vec<(usize, Rat)>>,
}

impl CouplingKernel {
    pub fn from_space(&self) -> &StateSpace {
        &self.from
    }

    pub fn to_space(&self) -> &StateSpace {
        &self.to
    }

    /// Pair index in the source product space.
    pub fn pair_index(&self, x1: usize, x2: usize) -> usize {
        x1 * self.from_dims.1 + x2
    }

    /// Sparse row over target pair indices.
    pub fn row(&self, x1: usize, x2: usize) -> &[(usize, Rat)] {
        &self.rows[self.pair_index(x1, x2)]
    }

    fn split(&self, target: usize) -> (usize, usize) {
        (target / self.to_dims.1, target % self.to_dims.1)
    }

    /// Left marginal of a row: must equal `p1(x1, ·)`.
    pub fn row_left_marginal(&self, x1: usize, x2: usize) -> Vec<(usize, Rat)> {
        let mut acc = std::collections::BTreeMap::new();
        for (t, m) in self.row(x1, x2) {
            let (a, _) = self.split(*t);
            *acc.entry(a).or_insert_with(Rat::zero) += m;
        }
        acc.into_iter().collect()
    }

    /// Right marginal of a row: must equal `p2(x2, ·)`.
    pub fn row_right_marginal(&self, x1: usize, x2: usize) -> Vec<(usize, Rat)> {
        let mut acc = std::collections::BTreeMap::new();
        for (t, m) in self.row(x1, x2) {
            let (_, b) = self.split(*t);
            *acc.entry(b).or_insert_with(Rat::zero) += m;
        }
        acc.into_iter().collect()
    }

    /// Row mass landing inside a relation on the target pair space.
    pub fn row_mass_in(&self, x1: usize, x2: usize, r: &Relation) -> Rat {
        self.row(x1, x2)
            .iter()
            .filter(|(t, _)| {
                let (a, b) = self.split(*t);
                r.contains(a, b)
            })
            .map(|(_, m)| m.clone())
            .sum()
    }

    /// View as an ordinary kernel on product spaces.
    pub fn as_kernel(&self) -> Kernel {
        Kernel::from_sparse_rows(self.from.clone(), self.to.clone(), self.rows.clone())
            .expect("coupling rows are stochastic")
    }

    /// Samples one step from the row of `(x1, x2)`.
    pub fn sample_step<R: Rng>(&self, x1: usize, x2: usize, rng: &mut R) -> (usize, usize) {
        let row = self.row(x1, x2);
        debug_assert!(!row.is_empty());
        // cumulative sampling over positive entries only, so the sampled
        // state always carries positive mass
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = row.len() - 1;
        for (k, (_, m)) in row.iter().enumerate() {
            acc += crate::rational::rat_to_f64(m);
            if u < acc {
                chosen = k;
                break;
            }
        }
        self.split(row[chosen].0)
    }

    /// Simulates the coupled chain for `steps` steps (endo-kernels only).
    pub fn sample_path<R: Rng>(
        &self,
        start: (usize, usize),
        steps: usize,
        rng: &mut R,
    ) -> Vec<(usize, usize)> {
        assert_eq!(
            (self.from_dims, &self.from),
            (self.to_dims, &self.to),
            "path simulation needs matching source and target spaces"
        );
        let mut path = Vec::with_capacity(steps + 1);
        let mut state = start;
        path.push(state);
        for _ in 0..steps {
            state = self.sample_step(state.0, state.1, rng);
            path.push(state);
        }
        path
    }
}

/// Builds the relation-invariant coupling kernel of a preserving pair.
///
/// For `(x1, x2) ∈ r` the row is the witness coupling of the component
/// rows (supported inside `r_prime`); elsewhere the independent coupling
/// is used, which is equally valid there. Fails on the first pair whose
/// rows are not related.
pub fn build_coupling_kernel(
    r: &Relation,
    r_prime: &Relation,
    p1: &Kernel,
    p2: &Kernel,
) -> Result<CouplingKernel> {
    r.left_space().expect_same(p1.from_space(), "p1 source must be the left space")?;
    r.right_space().expect_same(p2.from_space(), "p2 source must be the right space")?;
    r_prime.left_space().expect_same(p1.to_space(), "p1 target must be the left target space")?;
    r_prime
        .right_space()
        .expect_same(p2.to_space(), "p2 target must be the right target space")?;
    let (n1, n2) = (p1.from_space().len(), p2.from_space().len());
    let m2 = p2.to_space().len();
    let mut rows = Vec::with_capacity(n1 * n2);
    for x1 in 0..n1 {
        for x2 in 0..n2 {
            let row = if r.contains(x1, x2) {
                match st_check_sparse(r_prime, p1.row(x1), p2.row(x2)) {
                    SparseDecision::Feasible(plan) => plan,
                    SparseDecision::Infeasible(_) => {
                        return Err(Error::NotPreserving {
                            left: p1.from_space().label(x1).to_string(),
                            right: p2.from_space().label(x2).to_string(),
                        })
                    }
                }
            } else {
                let mut plan = Vec::new();
                for (a, ma) in p1.row(x1) {
                    for (b, mb) in p2.row(x2) {
                        plan.push((*a, *b, ma * mb));
                    }
                }
                plan
            };
            let mut sparse: Vec<(usize, Rat)> =
                row.into_iter().map(|(a, b, m)| (a * m2 + b, m)).collect();
            sparse.sort_by_key(|&(t, _)| t);
            rows.push(sparse);
        }
    }
    Ok(CouplingKernel {
        from: StateSpace::product(p1.from_space(), p2.from_space()),
        to: StateSpace::product(p1.to_space(), p2.to_space()),
        from_dims: (n1, n2),
        to_dims: (p1.to_space().len(), m2),
        rows,
    })
}
