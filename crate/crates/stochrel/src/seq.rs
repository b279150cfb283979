//! Coupled laws for finite random sequences.
//!
//! Given an initial coupling supported on the relation and, at every
//! step, conditional kernels whose rows are related whenever the
//! histories are, the chained couplings assemble an explicit joint law
//! on pairs of paths that stays inside the coordinatewise relation and
//! projects onto the two sequence laws. This certifies the sufficient
//! direction only: sequences can be related without any such stepwise
//! witness existing.

use std::collections::BTreeMap;

use num_traits::Zero;
use rand::Rng;

use crate::coupling::{st_check_sparse, CouplingMatrix, SparseDecision};
use crate::error::{Error, Result};
use crate::kernel::Kernel;
use crate::rational::{rat_to_f64, Rat};
use crate::relation::Relation;
use crate::space::StateSpace;

/// An explicit coupled law over pairs of length-`horizon` paths.
#[derive(Clone, Debug)]
pub struct SequenceCoupling {
    left: StateSpace,
    right: StateSpace,
    horizon: usize,
    /// `(left path, right path) -> mass`, positive entries only.
    paths: Vec<(Vec<usize>, Vec<usize>, Rat)>,
}

impl SequenceCoupling {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn paths(&self) -> &[(Vec<usize>, Vec<usize>, Rat)] {
        &self.paths
    }

    /// Marginal law of the left path.
    pub fn left_law(&self) -> BTreeMap<Vec<usize>, Rat> {
        let mut law = BTreeMap::new();
        for (l, _, m) in &self.paths {
            *law.entry(l.clone()).or_insert_with(Rat::zero) += m;
        }
        law
    }

    /// Marginal law of the right path.
    pub fn right_law(&self) -> BTreeMap<Vec<usize>, Rat> {
        let mut law = BTreeMap::new();
        for (_, r, m) in &self.paths {
            *law.entry(r.clone()).or_insert_with(Rat::zero) += m;
        }
        law
    }

    /// Mass on path pairs related at every coordinate.
    pub fn mass_coordinatewise(&self, r: &Relation) -> Rat {
        self.paths
            .iter()
            .filter(|(l, rt, _)| l.iter().zip(rt).all(|(&a, &b)| r.contains(a, b)))
            .map(|(_, _, m)| m.clone())
            .sum()
    }

    /// Samples one coupled path pair.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (l, r, m) in &self.paths {
            acc += rat_to_f64(m);
            if u < acc {
                return (l.clone(), r.clone());
            }
        }
        let last = self.paths.last().expect("laws are nonempty");
        (last.0.clone(), last.1.clone())
    }

    pub fn left_space(&self) -> &StateSpace {
        &self.left
    }

    pub fn right_space(&self) -> &StateSpace {
        &self.right
    }
}

const MAX_PATH_PAIRS: usize = 1 << 20;

/// Chains an initial coupling with per-step witness couplings of two
/// Markov kernels, producing the explicit coupled law at `horizon`
/// steps (horizon 1 is the initial coupling itself).
///
/// Fails with [`Error::RelationHypothesis`] at the first reachable
/// related state pair whose rows are not related.
pub fn seq_coupling_markov(
    r: &Relation,
    initial: &CouplingMatrix,
    p1: &Kernel,
    p2: &Kernel,
    horizon: usize,
) -> Result<SequenceCoupling> {
    if horizon == 0 {
        return Err(Error::BadInput("horizon must be at least 1".into()));
    }
    r.left_space().expect_same(initial.left_space(), "initial coupling left space")?;
    r.right_space().expect_same(initial.right_space(), "initial coupling right space")?;
    r.left_space().expect_same(p1.from_space(), "p1 must act on the left space")?;
    r.left_space().expect_same(p1.to_space(), "p1 must be an endo-kernel")?;
    r.right_space().expect_same(p2.from_space(), "p2 must act on the right space")?;
    r.right_space().expect_same(p2.to_space(), "p2 must be an endo-kernel")?;

    // step couplings built lazily per visited state pair
    let mut step_rows: BTreeMap<(usize, usize), Vec<(usize, usize, Rat)>> = BTreeMap::new();
    let mut paths: Vec<(Vec<usize>, Vec<usize>, Rat)> = initial
        .entries()
        .iter()
        .map(|&(i, j, ref m)| (vec![i], vec![j], m.clone()))
        .collect();

    for step in 1..horizon {
        let mut next = Vec::with_capacity(paths.len() * 4);
        for (l, rt, mass) in paths {
            let (x1, x2) = (*l.last().unwrap(), *rt.last().unwrap());
            if !step_rows.contains_key(&(x1, x2)) {
                let row = coupled_row(r, p1, p2, x1, x2).map_err(|e| match e {
                    Error::NotPreserving { left, right } => {
                        Error::RelationHypothesis { step, left, right }
                    }
                    other => other,
                })?;
                step_rows.insert((x1, x2), row);
            }
            for (y1, y2, w) in &step_rows[&(x1, x2)] {
                let mut l2 = l.clone();
                let mut r2 = rt.clone();
                l2.push(*y1);
                r2.push(*y2);
                next.push((l2, r2, &mass * w));
            }
            if next.len() > MAX_PATH_PAIRS {
                return Err(Error::TooLarge(format!(
                    "coupled path law exceeds {MAX_PATH_PAIRS} atoms"
                )));
            }
        }
        paths = next;
    }
    paths.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    Ok(SequenceCoupling {
        left: r.left_space().clone(),
        right: r.right_space().clone(),
        horizon,
        paths,
    })
}

fn coupled_row(
    r: &Relation,
    p1: &Kernel,
    p2: &Kernel,
    x1: usize,
    x2: usize,
) -> Result<Vec<(usize, usize, Rat)>> {
    if r.contains(x1, x2) {
        match st_check_sparse(r, p1.row(x1), p2.row(x2)) {
            SparseDecision::Feasible(plan) => Ok(plan),
            SparseDecision::Infeasible(_) => Err(Error::NotPreserving {
                left: p1.from_space().label(x1).to_string(),
                right: p2.from_space().label(x2).to_string(),
            }),
        }
    } else {
        let mut plan = Vec::new();
        for (a, ma) in p1.row(x1) {
            for (b, mb) in p2.row(x2) {
                plan.push((*a, *b, ma * mb));
            }
        }
        Ok(plan)
    }
}

/// History-dependent variant: `step_kernels_left[i]` maps length-`i+1`
/// histories (as product-power spaces of the base space) to the next
/// state. Exposed only up to horizon 4; the history spaces grow
/// exponentially beyond that.
pub fn seq_coupling_history(
    r: &Relation,
    initial: &CouplingMatrix,
    step_kernels_left: &[Kernel],
    step_kernels_right: &[Kernel],
    horizon: usize,
) -> Result<SequenceCoupling> {
    if horizon == 0 {
        return Err(Error::BadInput("horizon must be at least 1".into()));
    }
    if horizon > 4 {
        return Err(Error::TooLarge(
            "history-dependent coupling is limited to horizon 4".into(),
        ));
    }
    if step_kernels_left.len() + 1 < horizon || step_kernels_right.len() + 1 < horizon {
        return Err(Error::BadInput("need one step kernel per transition".into()));
    }
    r.left_space().expect_same(initial.left_space(), "initial coupling left space")?;
    r.right_space().expect_same(initial.right_space(), "initial coupling right space")?;

    let mut paths: Vec<(Vec<usize>, Vec<usize>, Rat)> = initial
        .entries()
        .iter()
        .map(|&(i, j, ref m)| (vec![i], vec![j], m.clone()))
        .collect();

    let n1 = r.left_space().len();
    let n2 = r.right_space().len();
    for step in 1..horizon {
        let pl = &step_kernels_left[step - 1];
        let pr = &step_kernels_right[step - 1];
        let expect1 = n1.pow(step as u32);
        let expect2 = n2.pow(step as u32);
        if pl.from_space().len() != expect1 || pl.to_space().len() != n1 {
            return Err(Error::SpaceMismatch(format!(
                "left step kernel {step} must map {expect1} histories to {n1} states"
            )));
        }
        if pr.from_space().len() != expect2 || pr.to_space().len() != n2 {
            return Err(Error::SpaceMismatch(format!(
                "right step kernel {step} must map {expect2} histories to {n2} states"
            )));
        }
        let mut next = Vec::with_capacity(paths.len() * 4);
        for (l, rt, mass) in &paths {
            let h1 = history_index(l, n1);
            let h2 = history_index(rt, n2);
            let related_history = l.iter().zip(rt).all(|(&a, &b)| r.contains(a, b));
            let plan = if related_history {
                match st_check_sparse(r, pl.row(h1), pr.row(h2)) {
                    SparseDecision::Feasible(plan) => plan,
                    SparseDecision::Infeasible(_) => {
                        return Err(Error::RelationHypothesis {
                            step,
                            left: format!("{l:?}"),
                            right: format!("{rt:?}"),
                        })
                    }
                }
            } else {
                let mut plan = Vec::new();
                for (a, ma) in pl.row(h1) {
                    for (b, mb) in pr.row(h2) {
                        plan.push((*a, *b, ma * mb));
                    }
                }
                plan
            };
            for (y1, y2, w) in plan {
                let mut l2 = l.clone();
                let mut r2 = rt.clone();
                l2.push(y1);
                r2.push(y2);
                next.push((l2, r2, mass * &w));
            }
        }
        paths = next;
    }
    paths.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
    Ok(SequenceCoupling {
        left: r.left_space().clone(),
        right: r.right_space().clone(),
        horizon,
        paths,
    })
}

/// Index of a history in the lexicographic power space.
fn history_index(path: &[usize], base: usize) -> usize {
    path.iter().fold(0, |acc, &s| acc * base + s)
}

/// The `k`-fold product power of a space, for building history kernels.
pub fn power_space(space: &StateSpace, k: usize) -> StateSpace {
    assert!(k >= 1);
    let mut acc = space.clone();
    for _ in 1..k {
        acc = StateSpace::product(&acc, space);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::st_related;
    use crate::kernel::build_coupling_kernel;
    use crate::dist::Dist;
    use crate::rational::{rat, rat_int};
    use crate::relation::RelationKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain(n: i64) -> StateSpace {
        StateSpace::integers(0..=n - 1)
    }

    fn leq(n: i64) -> Relation {
        Relation::build(&RelationKind::CoordinatewiseLeq(vec![1]), chain(n), chain(n)).unwrap()
    }

    fn monotone_pair(s: &StateSpace) -> (Kernel, Kernel, Relation) {
        // lazy upward walks with dominated drift preserve ≤
        let n = s.len();
        let up1 = rat(1, 4);
        let up2 = rat(1, 2);
        let mk = |up: &Rat| {
            let rows: Vec<Vec<Rat>> = (0..n)
                .map(|x| {
                    let mut row = vec![Rat::zero(); n];
                    let next = (x + 1).min(n - 1);
                    row[next] = up.clone();
                    row[x] += rat_int(1) - up;
                    row
                })
                .collect();
            Kernel::new(s.clone(), s.clone(), rows).unwrap()
        };
        (mk(&up1), mk(&up2), leq(n as i64))
    }

    #[test]
    fn horizon_one_is_the_initial_coupling() {
        let s = chain(3);
        let r = leq(3);
        let mu = Dist::new(s.clone(), vec![rat(1, 2), rat(1, 2), rat_int(0)]).unwrap();
        let nu = Dist::new(s.clone(), vec![rat_int(0), rat(1, 2), rat(1, 2)]).unwrap();
        let init = st_related(&r, &mu, &nu).unwrap().coupling().unwrap().clone();
        let p = Kernel::identity(s.clone());
        let sc = seq_coupling_markov(&r, &init, &p, &p, 1).unwrap();
        let expect: Vec<(Vec<usize>, Vec<usize>, Rat)> = init
            .entries()
            .iter()
            .map(|&(i, j, ref m)| (vec![i], vec![j], m.clone()))
            .collect();
        assert_eq!(sc.paths(), &expect[..]);
    }

    #[test]
    fn markov_case_equals_iterated_coupling_kernel() {
        // the path law from chaining per-state witness rows must equal the
        // law of the coupling kernel's chain, computed independently
        let s = chain(3);
        let (p1, p2, r) = monotone_pair(&s);
        let mu = Dist::new(s.clone(), vec![rat(1, 2), rat(1, 2), rat_int(0)]).unwrap();
        let nu = Dist::new(s.clone(), vec![rat(1, 4), rat(1, 4), rat(1, 2)]).unwrap();
        let init = st_related(&r, &mu, &nu).unwrap().coupling().unwrap().clone();
        let ck = build_coupling_kernel(&r, &r, &p1, &p2).unwrap();
        for horizon in [2usize, 3] {
            let sc = seq_coupling_markov(&r, &init, &p1, &p2, horizon).unwrap();
            // brute-force law from the coupling kernel
            let mut law: BTreeMap<(Vec<usize>, Vec<usize>), Rat> = BTreeMap::new();
            let mut stack: Vec<(Vec<usize>, Vec<usize>, Rat)> = init
                .entries()
                .iter()
                .map(|&(i, j, ref m)| (vec![i], vec![j], m.clone()))
                .collect();
            while let Some((l, rt, m)) = stack.pop() {
                if l.len() == horizon {
                    *law.entry((l, rt)).or_insert_with(Rat::zero) += &m;
                    continue;
                }
                let (x1, x2) = (*l.last().unwrap(), *rt.last().unwrap());
                for (t, w) in ck.row(x1, x2) {
                    let (y1, y2) = (t / 3, t % 3);
                    let mut l2 = l.clone();
                    let mut r2 = rt.clone();
                    l2.push(y1);
                    r2.push(y2);
                    stack.push((l2, r2, &m * w));
                }
            }
            for (l, rt, m) in sc.paths() {
                assert_eq!(law.get(&(l.clone(), rt.clone())), Some(m));
            }
            let total: Rat = sc.paths().iter().map(|(_, _, m)| m.clone()).sum();
            assert_eq!(total, rat_int(1));
        }
    }

    #[test]
    fn marginals_reproduce_the_chain_laws() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = chain(3);
        let (p1, p2, r) = monotone_pair(&s);
        let mu = Dist::dirac(s.clone(), 0).unwrap();
        let nu = Dist::dirac(s.clone(), 1).unwrap();
        let init = st_related(&r, &mu, &nu).unwrap().coupling().unwrap().clone();
        let sc = seq_coupling_markov(&r, &init, &p1, &p2, 3).unwrap();
        // left marginal: brute force over the left chain alone
        let mut expect: BTreeMap<Vec<usize>, Rat> = BTreeMap::new();
        let mut stack = vec![(vec![0usize], rat_int(1))];
        while let Some((l, m)) = stack.pop() {
            if l.len() == 3 {
                *expect.entry(l).or_insert_with(Rat::zero) += &m;
                continue;
            }
            for (y, w) in p1.row(*l.last().unwrap()) {
                let mut l2 = l.clone();
                l2.push(*y);
                stack.push((l2, &m * w));
            }
        }
        let got = sc.left_law();
        for (path, mass) in expect {
            if !mass.is_zero() {
                assert_eq!(got.get(&path), Some(&mass));
            }
        }
        // the construction keeps all mass on coordinatewise-related pairs
        assert_eq!(sc.mass_coordinatewise(&r), rat_int(1));
        // and sampled paths stay related coordinatewise
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let (l, rt) = sc.sample(&mut rng);
            assert!(l.iter().zip(&rt).all(|(&a, &b)| r.contains(a, b)));
        }
    }

    #[test]
    fn failing_hypothesis_is_reported_with_the_pair() {
        let s = chain(2);
        let r = leq(2);
        let up = Kernel::new(
            s.clone(),
            s.clone(),
            vec![vec![rat_int(0), rat_int(1)], vec![rat_int(0), rat_int(1)]],
        )
        .unwrap();
        let down = Kernel::new(
            s.clone(),
            s.clone(),
            vec![vec![rat_int(1), rat_int(0)], vec![rat_int(1), rat_int(0)]],
        )
        .unwrap();
        let init = CouplingMatrix::new(s.clone(), s.clone(), vec![(0, 0, rat_int(1))]).unwrap();
        match seq_coupling_markov(&r, &init, &up, &down, 3) {
            Err(Error::RelationHypothesis { step, .. }) => assert_eq!(step, 1),
            other => panic!("expected a hypothesis failure, got {other:?}"),
        }
    }

    #[test]
    fn history_variant_agrees_with_markov_on_lifted_kernels() {
        let s = chain(2);
        let (p1, p2, r) = monotone_pair(&s);
        let mu = Dist::dirac(s.clone(), 0).unwrap();
        let nu = Dist::dirac(s.clone(), 1).unwrap();
        let init = st_related(&r, &mu, &nu).unwrap().coupling().unwrap().clone();
        // lift the Markov kernels to history kernels (depend on the last state)
        let lift = |p: &Kernel, k: usize| {
            let hist = power_space(&s, k);
            let rows: Vec<Vec<(usize, Rat)>> = (0..hist.len())
                .map(|h| p.row(h % s.len()).to_vec())
                .collect();
            Kernel::from_sparse_rows(hist, s.clone(), rows).unwrap()
        };
        let horizon = 3;
        let lk: Vec<Kernel> = (1..horizon).map(|k| lift(&p1, k)).collect();
        let rk: Vec<Kernel> = (1..horizon).map(|k| lift(&p2, k)).collect();
        let via_history = seq_coupling_history(&r, &init, &lk, &rk, horizon).unwrap();
        let via_markov = seq_coupling_markov(&r, &init, &p1, &p2, horizon).unwrap();
        assert_eq!(via_history.paths(), via_markov.paths());
    }
}
