//! Deciding stochastic relatedness of two distributions.
//!
//! `μ` is stochastically related to `ν` through a relation `R` when some
//! coupling of `μ` and `ν` puts all its mass on `R`. On finite spaces
//! this is a transportation-feasibility question, decided here by exact
//! max-flow; the decision always carries a certificate — a coupling
//! matrix when related, or a set `B` with `μ(B) > ν(B→)` when not.

use num_traits::Zero;

use crate::dist::Dist;
use crate::error::{Error, Result};
use crate::flow::{transport, Transport};
use crate::rational::Rat;
use crate::relation::{mask_of, RealFn, Relation, Side};
use crate::space::StateSpace;

/// A joint distribution with prescribed marginals, stored sparsely as
/// `(left, right, mass)` triples in row-major order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CouplingMatrix {
    left: StateSpace,
    right: StateSpace,
    entries: Vec<(usize, usize, Rat)>,
}

impl CouplingMatrix {
    pub fn new(
        left: StateSpace,
        right: StateSpace,
        mut entries: Vec<(usize, usize, Rat)>,
    ) -> Result<Self> {
        for &(i, j, ref m) in &entries {
            left.check_index(i)?;
            right.check_index(j)?;
            if m < &Rat::zero() {
                return Err(Error::NotNormalized("negative joint mass".into()));
            }
        }
        entries.retain(|(_, _, m)| !m.is_zero());
        entries.sort_by_key(|&(i, j, _)| (i, j));
        Ok(CouplingMatrix { left, right, entries })
    }

    /// Independent coupling `μ ⊗ ν`.
    pub fn product(mu: &Dist, nu: &Dist) -> Self {
        let mut entries = Vec::new();
        for i in mu.support() {
            for j in nu.support() {
                entries.push((i, j, mu.mass(i) * nu.mass(j)));
            }
        }
        CouplingMatrix {
            left: mu.space().clone(),
            right: nu.space().clone(),
            entries,
        }
    }

    pub fn left_space(&self) -> &StateSpace {
        &self.left
    }

    pub fn right_space(&self) -> &StateSpace {
        &self.right
    }

    pub fn entries(&self) -> &[(usize, usize, Rat)] {
        &self.entries
    }

    pub fn entry(&self, i: usize, j: usize) -> Rat {
        match self.entries.binary_search_by_key(&(i, j), |&(a, b, _)| (a, b)) {
            Ok(k) => self.entries[k].2.clone(),
            Err(_) => Rat::zero(),
        }
    }

    pub fn left_marginal(&self) -> Dist {
        let mut mass = vec![Rat::zero(); self.left.len()];
        for (i, _, m) in &self.entries {
            mass[*i] += m;
        }
        Dist::new(self.left.clone(), mass).expect("coupling marginals are normalized")
    }

    pub fn right_marginal(&self) -> Dist {
        let mut mass = vec![Rat::zero(); self.right.len()];
        for (_, j, m) in &self.entries {
            mass[*j] += m;
        }
        Dist::new(self.right.clone(), mass).expect("coupling marginals are normalized")
    }

    /// Does every positive entry sit inside `r`?
    pub fn supported_in(&self, r: &Relation) -> bool {
        self.entries.iter().all(|&(i, j, _)| r.contains(i, j))
    }

    /// Total mass the coupling puts on `r`.
    pub fn mass_on(&self, r: &Relation) -> Rat {
        self.entries
            .iter()
            .filter(|&&(i, j, _)| r.contains(i, j))
            .map(|(_, _, m)| m.clone())
            .sum()
    }
}

/// Certificate that `μ(B) > ν(B→)` for the recorded set `B`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ViolatingSet {
    /// Left states forming `B`.
    pub states: Vec<usize>,
    /// Right conjugate `B→`.
    pub conjugate: Vec<usize>,
    pub mu_mass: Rat,
    pub nu_conjugate_mass: Rat,
}

impl ViolatingSet {
    /// Re-evaluates the certificate against fresh data.
    pub fn verify(&self, r: &Relation, mu: &Dist, nu: &Dist) -> Result<bool> {
        let conj = r.conjugate_set(&self.states, Side::Right)?;
        Ok(mu.mass_of(&self.states) > nu.mass_of(&conj))
    }
}

/// Outcome of the stochastic-relatedness decision, with exactly one
/// witness: a coupling on success, a violating set on failure.
#[derive(Clone, Debug)]
pub enum StDecision {
    Related(CouplingMatrix),
    Unrelated(ViolatingSet),
}

impl StDecision {
    pub fn related(&self) -> bool {
        matches!(self, StDecision::Related(_))
    }

    pub fn coupling(&self) -> Option<&CouplingMatrix> {
        match self {
            StDecision::Related(c) => Some(c),
            StDecision::Unrelated(_) => None,
        }
    }

    pub fn violation(&self) -> Option<&ViolatingSet> {
        match self {
            StDecision::Related(_) => None,
            StDecision::Unrelated(v) => Some(v),
        }
    }
}

/// Decides `μ ∼st ν` for the relation `r` by exact flow feasibility.
pub fn st_related(r: &Relation, mu: &Dist, nu: &Dist) -> Result<StDecision> {
    r.left_space().expect_same(mu.space(), "μ must live on the left space")?;
    r.right_space().expect_same(nu.space(), "ν must live on the right space")?;
    let mu_sparse: Vec<(usize, Rat)> =
        mu.support().into_iter().map(|i| (i, mu.mass(i).clone())).collect();
    let nu_sparse: Vec<(usize, Rat)> =
        nu.support().into_iter().map(|j| (j, nu.mass(j).clone())).collect();
    match st_check_sparse(r, &mu_sparse, &nu_sparse) {
        SparseDecision::Feasible(entries) => Ok(StDecision::Related(CouplingMatrix::new(
            mu.space().clone(),
            nu.space().clone(),
            entries,
        )?)),
        SparseDecision::Infeasible(v) => Ok(StDecision::Unrelated(v)),
    }
}

pub(crate) enum SparseDecision {
    Feasible(Vec<(usize, usize, Rat)>),
    Infeasible(ViolatingSet),
}

/// Core feasibility check on sparse mass vectors (state index, mass).
/// Both vectors must each sum to one.
///
/// Denominators are cleared up front so the flow runs on machine
/// integers whenever the common denominator fits; otherwise the same
/// algorithm runs on rationals directly.
pub(crate) fn st_check_sparse(
    r: &Relation,
    mu: &[(usize, Rat)],
    nu: &[(usize, Rat)],
) -> SparseDecision {
    if let Some((mu_int, nu_int, scale)) = scale_to_integers(mu, nu) {
        let result = transport(&mu_int, &nu_int, |i, j| r.contains(mu[i].0, nu[j].0), &0u128);
        return match result {
            Transport::Feasible(plan) => SparseDecision::Feasible(
                plan.into_iter()
                    .map(|(i, j, m)| {
                        (mu[i].0, nu[j].0, Rat::new(m.into(), scale.into()))
                    })
                    .collect(),
            ),
            Transport::Infeasible { cut_left, .. } => {
                SparseDecision::Infeasible(violating_set(r, mu, nu, cut_left))
            }
        };
    }
    let mu_mass: Vec<Rat> = mu.iter().map(|(_, m)| m.clone()).collect();
    let nu_mass: Vec<Rat> = nu.iter().map(|(_, m)| m.clone()).collect();
    let result = transport(
        &mu_mass,
        &nu_mass,
        |i, j| r.contains(mu[i].0, nu[j].0),
        &Rat::zero(),
    );
    match result {
        Transport::Feasible(plan) => SparseDecision::Feasible(
            plan.into_iter().map(|(i, j, m)| (mu[i].0, nu[j].0, m)).collect(),
        ),
        Transport::Infeasible { cut_left, .. } => {
            SparseDecision::Infeasible(violating_set(r, mu, nu, cut_left))
        }
    }
}

/// Builds the `μ(B) > ν(B→)` certificate from the source side of a cut,
/// given as positions into `mu`.
fn violating_set(
    r: &Relation,
    mu: &[(usize, Rat)],
    nu: &[(usize, Rat)],
    cut_left: Vec<usize>,
) -> ViolatingSet {
    let states: Vec<usize> = cut_left.iter().map(|&i| mu[i].0).collect();
    let conjugate = r
        .conjugate_set(&states, Side::Right)
        .expect("cut states are valid left indices");
    let mu_total = cut_left.iter().map(|&i| mu[i].1.clone()).sum();
    let nu_total = conjugate
        .iter()
        .map(|s| {
            nu.iter()
                .find(|(j, _)| j == s)
                .map(|(_, m)| m.clone())
                .unwrap_or_else(Rat::zero)
        })
        .sum();
    ViolatingSet {
        states,
        conjugate,
        mu_mass: mu_total,
        nu_conjugate_mass: nu_total,
    }
}

/// Clears denominators: returns masses scaled by the common denominator
/// when everything fits in `u128`.
fn scale_to_integers(
    mu: &[(usize, Rat)],
    nu: &[(usize, Rat)],
) -> Option<(Vec<u128>, Vec<u128>, u128)> {
    use num_traits::ToPrimitive;
    let mut l: u128 = 1;
    for (_, m) in mu.iter().chain(nu) {
        let d = m.denom().to_u128()?;
        l = l.checked_div(gcd_u128(l, d))?.checked_mul(d)?;
    }
    let scale = |v: &[(usize, Rat)]| -> Option<Vec<u128>> {
        v.iter()
            .map(|(_, m)| {
                let num = m.numer().to_u128()?;
                let den = m.denom().to_u128()?;
                num.checked_mul(l / den)
            })
            .collect()
    };
    Some((scale(mu)?, scale(nu)?, l))
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.max(1)
}

/// Brute-force criterion: `μ(B) ≤ ν(B→)` for every subset `B` of the
/// left space. Exponential; refuses spaces beyond 20 states.
pub fn subset_oracle(r: &Relation, mu: &Dist, nu: &Dist) -> Result<bool> {
    r.left_space().expect_same(mu.space(), "μ must live on the left space")?;
    r.right_space().expect_same(nu.space(), "ν must live on the right space")?;
    let n1 = r.left_space().len();
    if n1 > 20 {
        return Err(Error::TooLarge(format!(
            "subset oracle enumerates 2^{n1} sets; limit is 2^20"
        )));
    }
    let n2 = r.right_space().len();
    for mask in 0u32..1u32 << n1 {
        let states: Vec<usize> = (0..n1).filter(|&i| mask >> i & 1 == 1).collect();
        let mu_mass = mu.mass_of(&states);
        let mut conj_mass = Rat::zero();
        let lmask = mask_of(&states, n1);
        for j in 0..n2 {
            if r.in_right_conjugate(&lmask, j) {
                conj_mass += mu_nu_mass(nu, j);
            }
        }
        if mu_mass > conj_mass {
            return Ok(false);
        }
    }
    Ok(true)
}

fn mu_nu_mass(d: &Dist, j: usize) -> Rat {
    d.mass(j).clone()
}

/// Float-mode decision: related within a feasibility tolerance.
/// Approximate by construction — boundary cases may be misclassified —
/// and meant only for grids too large for exact arithmetic.
#[derive(Clone, Debug)]
pub struct ApproxStDecision {
    pub related: bool,
    pub max_flow: f64,
    pub tolerance: f64,
    /// Left states of the deficient cut when unrelated.
    pub cut: Vec<usize>,
}

/// Flow feasibility in `f64` arithmetic: related when the shipped mass
/// is within `tolerance` of one. Masses must be approximately normalized.
pub fn st_related_f64(
    r: &Relation,
    mu: &[f64],
    nu: &[f64],
    tolerance: f64,
) -> Result<ApproxStDecision> {
    if mu.len() != r.left_space().len() || nu.len() != r.right_space().len() {
        return Err(Error::SpaceMismatch("mass vector lengths must match the spaces".into()));
    }
    for &m in mu.iter().chain(nu) {
        if !(m >= 0.0 && m.is_finite()) {
            return Err(Error::NotNormalized("masses must be finite and nonnegative".into()));
        }
    }
    for (name, v) in [("mu", mu), ("nu", nu)] {
        let total: f64 = v.iter().sum();
        if (total - 1.0).abs() > tolerance.max(1e-9) {
            return Err(Error::NotNormalized(format!("{name} sums to {total}")));
        }
    }
    let support = |v: &[f64]| -> Vec<usize> {
        (0..v.len()).filter(|&i| v[i] > 0.0).collect()
    };
    let (si, sj) = (support(mu), support(nu));
    let mu_mass: Vec<f64> = si.iter().map(|&i| mu[i]).collect();
    let nu_mass: Vec<f64> = sj.iter().map(|&j| nu[j]).collect();
    let eps = (tolerance / ((si.len() + sj.len() + 1) as f64)).max(f64::MIN_POSITIVE);
    match transport(&mu_mass, &nu_mass, |i, j| r.contains(si[i], sj[j]), &eps) {
        Transport::Feasible(plan) => Ok(ApproxStDecision {
            related: true,
            max_flow: plan.iter().map(|(_, _, m)| m).sum(),
            tolerance,
            cut: Vec::new(),
        }),
        Transport::Infeasible { cut_left, shipped } => Ok(ApproxStDecision {
            related: (1.0 - shipped) <= tolerance,
            max_flow: shipped,
            tolerance,
            cut: cut_left.into_iter().map(|i| si[i]).collect(),
        }),
    }
}

/// One functional inequality `∫ f dμ ≤ ∫ f→ dν` — a necessary condition
/// for relatedness, useful as a cheap diagnostic.
pub fn functional_test(r: &Relation, mu: &Dist, nu: &Dist, f: &RealFn) -> Result<bool> {
    let fc = r.conjugate_fn(f, Side::Right)?;
    Ok(mu.expect(f)? <= nu.expect(&fc)?)
}
