//! Binary relations between finite state spaces and their conjugates.
//!
//! A [`Relation`] is a dense bit matrix over `left × right`. The *right
//! conjugate* of a set `B` of left states collects every right state
//! related to some member of `B`; the *left conjugate* mirrors it. For a
//! nonnegative function `f` on the left space, the conjugate
//! `f→(y) = max { f(x) : x ∼ y }` (zero over an empty row) links set and
//! function views: the conjugate of an indicator is the indicator of the
//! conjugate set, and level sets commute with conjugation.

use crate::bits::{word_ones, BitMatrix};
use crate::error::{Error, Result};
use crate::rational::Rat;
use crate::space::{Label, StateSpace};
use num_traits::Zero;

/// Which conjugate to take: `Right` maps subsets of the left space
/// forward through the relation, `Left` maps subsets of the right space
/// backward.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Right,
    Left,
}

/// Named relation constructions on label structure.
#[derive(Clone, Debug)]
pub enum RelationKind {
    /// Pairs with equal labels.
    Equality,
    /// All pairs.
    Full,
    /// `|x - y| <= eps` on one-dimensional integer labels.
    EpsilonDistance(Rat),
    /// `x_i <= y_i` for every listed coordinate (1-based).
    CoordinatewiseLeq(Vec<usize>),
    /// `x_1 + … + x_m <= y_1 + … + y_m`.
    SumLeq,
    /// Partial sums of decreasingly sorted coordinates dominated; on
    /// two-dimensional grids this is `x1∨x2 <= y1∨y2` and `|x| <= |y|`.
    WeakMajorization,
    /// Explicit pair list by index.
    FromPairs(Vec<(usize, usize)>),
    /// Explicit boolean table, row-major over the left space.
    FromPredicateTable(Vec<Vec<bool>>),
}

/// A measurable relation between two finite spaces, stored densely.
#[derive(Clone, PartialEq, Eq)]
pub struct Relation {
    left: StateSpace,
    right: StateSpace,
    bits: BitMatrix,
}

impl Relation {
    pub fn empty(left: StateSpace, right: StateSpace) -> Self {
        let bits = BitMatrix::new(left.len(), right.len());
        Relation { left, right, bits }
    }

    /// Builds one of the named relations on the given spaces.
    pub fn build(kind: &RelationKind, left: StateSpace, right: StateSpace) -> Result<Self> {
        let mut rel = Relation::empty(left, right);
        match kind {
            RelationKind::Equality => {
                for (i, l) in rel.left.labels().iter().enumerate() {
                    if let Some(j) = rel.right.index_of(l) {
                        rel.bits.set(i, j);
                    }
                }
            }
            RelationKind::Full => {
                for i in 0..rel.left.len() {
                    for j in 0..rel.right.len() {
                        rel.bits.set(i, j);
                    }
                }
            }
            RelationKind::EpsilonDistance(eps) => {
                if eps < &Rat::zero() {
                    return Err(Error::BadRelationParams("epsilon must be >= 0".into()));
                }
                for i in 0..rel.left.len() {
                    let x = scalar_label(&rel.left, i)?;
                    for j in 0..rel.right.len() {
                        let y = scalar_label(&rel.right, j)?;
                        let diff = Rat::from_integer((x - y).abs().into());
                        if diff <= *eps {
                            rel.bits.set(i, j);
                        }
                    }
                }
            }
            RelationKind::CoordinatewiseLeq(coords) => {
                let dims = shared_dims(&rel.left, &rel.right)?;
                for &c in coords {
                    if c == 0 || c > dims {
                        return Err(Error::BadRelationParams(format!(
                            "coordinate {c} is not shared by both spaces (1..={dims})"
                        )));
                    }
                }
                rel.fill_points(|x, y| coords.iter().all(|&c| x[c - 1] <= y[c - 1]))?;
            }
            RelationKind::SumLeq => {
                rel.fill_points(|x, y| x.iter().sum::<i64>() <= y.iter().sum::<i64>())?;
            }
            RelationKind::WeakMajorization => {
                rel.fill_points(weakly_majorized)?;
            }
            RelationKind::FromPairs(pairs) => {
                for &(i, j) in pairs {
                    rel.left.check_index(i)?;
                    rel.right.check_index(j)?;
                    rel.bits.set(i, j);
                }
            }
            RelationKind::FromPredicateTable(table) => {
                if table.len() != rel.left.len()
                    || table.iter().any(|row| row.len() != rel.right.len())
                {
                    return Err(Error::BadRelationParams(
                        "predicate table shape must be left × right".into(),
                    ));
                }
                for (i, row) in table.iter().enumerate() {
                    for (j, &b) in row.iter().enumerate() {
                        if b {
                            rel.bits.set(i, j);
                        }
                    }
                }
            }
        }
        Ok(rel)
    }

    /// Relation built from an arbitrary predicate on labels.
    pub fn from_predicate<F>(left: StateSpace, right: StateSpace, mut pred: F) -> Self
    where
        F: FnMut(&Label, &Label) -> bool,
    {
        let mut rel = Relation::empty(left, right);
        for i in 0..rel.left.len() {
            for j in 0..rel.right.len() {
                if pred(rel.left.label(i), rel.right.label(j)) {
                    rel.bits.set(i, j);
                }
            }
        }
        rel
    }

    fn fill_points<F>(&mut self, pred: F) -> Result<()>
    where
        F: Fn(&[i64], &[i64]) -> bool,
    {
        for i in 0..self.left.len() {
            let x = point_label(&self.left, i)?;
            for j in 0..self.right.len() {
                let y = point_label(&self.right, j)?;
                if pred(x, y) {
                    self.bits.set(i, j);
                }
            }
        }
        Ok(())
    }

    pub fn left_space(&self) -> &StateSpace {
        &self.left
    }

    pub fn right_space(&self) -> &StateSpace {
        &self.right
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.bits.get(i, j)
    }

    pub fn insert(&mut self, i: usize, j: usize) -> Result<()> {
        self.left.check_index(i)?;
        self.right.check_index(j)?;
        self.bits.set(i, j);
        Ok(())
    }

    pub fn remove(&mut self, i: usize, j: usize) {
        self.bits.clear(i, j);
    }

    pub fn pair_count(&self) -> usize {
        self.bits.count_ones()
    }

    /// A relation is nontrivial when it holds at least one pair.
    pub fn is_nontrivial(&self) -> bool {
        self.bits.any()
    }

    /// Pairs in row-major (lexicographic) order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bits.ones()
    }

    /// Right states related to left state `i`, ascending.
    pub fn related_to_left(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.bits.row_ones(i)
    }

    /// Conjugate of a set of states through the relation.
    ///
    /// `Side::Right` takes `B ⊆ left` to `B→ ⊆ right`; `Side::Left` takes
    /// `B ⊆ right` to `B← ⊆ left`. The empty set maps to the empty set.
    pub fn conjugate_set(&self, states: &[usize], side: Side) -> Result<Vec<usize>> {
        match side {
            Side::Right => {
                for &i in states {
                    self.left.check_index(i)?;
                }
                let mask = self.bits.union_of_rows(states.iter().copied());
                Ok(word_ones(&mask).collect())
            }
            Side::Left => {
                for &j in states {
                    self.right.check_index(j)?;
                }
                let mut mask = vec![0u64; self.right.len().div_ceil(64)];
                for &j in states {
                    mask[j / 64] |= 1 << (j % 64);
                }
                let mut out = Vec::new();
                for i in 0..self.left.len() {
                    if self.bits.row(i).iter().zip(&mask).any(|(a, b)| a & b != 0) {
                        out.push(i);
                    }
                }
                Ok(out)
            }
        }
    }

    /// Conjugate of a nonnegative function: the running maximum over the
    /// related states, zero where nothing is related.
    pub fn conjugate_fn(&self, f: &RealFn, side: Side) -> Result<RealFn> {
        match side {
            Side::Right => {
                f.space().expect_same(&self.left, "function must live on the left space")?;
                let mut values = vec![Rat::zero(); self.right.len()];
                for i in 0..self.left.len() {
                    let v = f.value(i);
                    for j in self.bits.row_ones(i) {
                        if v > &values[j] {
                            values[j] = v.clone();
                        }
                    }
                }
                RealFn::new(self.right.clone(), values)
            }
            Side::Left => {
                f.space().expect_same(&self.right, "function must live on the right space")?;
                let mut values = vec![Rat::zero(); self.left.len()];
                for i in 0..self.left.len() {
                    for j in self.bits.row_ones(i) {
                        let v = f.value(j);
                        if v > &values[i] {
                            values[i] = v.clone();
                        }
                    }
                }
                RealFn::new(self.left.clone(), values)
            }
        }
    }

    /// Mass-free membership test for a right conjugate: is `j ∈ B→`?
    pub(crate) fn in_right_conjugate(&self, b_mask: &[u64], j: usize) -> bool {
        // b_mask is over left states
        word_ones(b_mask).any(|i| self.bits.get(i, j))
    }

    pub fn intersect(&self, other: &Relation) -> Result<Relation> {
        self.left.expect_same(&other.left, "intersect: left spaces differ")?;
        self.right.expect_same(&other.right, "intersect: right spaces differ")?;
        Ok(Relation {
            left: self.left.clone(),
            right: self.right.clone(),
            bits: self.bits.intersect(&other.bits),
        })
    }

    pub fn is_subset_of(&self, other: &Relation) -> bool {
        self.left.same_as(&other.left)
            && self.right.same_as(&other.right)
            && self.bits.is_subset_of(&other.bits)
    }

    /// Keeps the pairs satisfying `pred`, dropping the rest.
    pub fn restrict<F>(&self, mut pred: F) -> Relation
    where
        F: FnMut(usize, usize) -> bool,
    {
        let mut out = self.clone();
        for (i, j) in self.pairs() {
            if !pred(i, j) {
                out.bits.clear(i, j);
            }
        }
        out
    }

    /// Keeps pairs whose labels are points with every coordinate within
    /// the given inclusive bounds, on both sides.
    pub fn restrict_to_box(&self, lo: i64, hi: i64) -> Relation {
        let in_box = |space: &StateSpace, k: usize| {
            space
                .point(k)
                .map(|p| p.iter().all(|&c| lo <= c && c <= hi))
                .unwrap_or(false)
        };
        self.restrict(|i, j| in_box(&self.left, i) && in_box(&self.right, j))
    }

    /// Pullback along a pair of total maps: the induced relation holds at
    /// `(x', y')` exactly when the images are related.
    pub fn induced(
        &self,
        phi_left: &[usize],
        from_left: StateSpace,
        phi_right: &[usize],
        from_right: StateSpace,
    ) -> Result<Relation> {
        if phi_left.len() != from_left.len() || phi_right.len() != from_right.len() {
            return Err(Error::BadInput("map length must equal its domain size".into()));
        }
        for &i in phi_left {
            self.left.check_index(i)?;
        }
        for &j in phi_right {
            self.right.check_index(j)?;
        }
        let mut out = Relation::empty(from_left, from_right);
        for i in 0..out.left.len() {
            for j in 0..out.right.len() {
                if self.bits.get(phi_left[i], phi_right[j]) {
                    out.bits.set(i, j);
                }
            }
        }
        Ok(out)
    }
}

impl std::fmt::Debug for Relation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "Relation({}×{}, {} pairs)",
            self.left.len(),
            self.right.len(),
            self.pair_count()
        )
    }
}

fn point_label<'a>(space: &'a StateSpace, i: usize) -> Result<&'a [i64]> {
    space
        .point(i)
        .ok_or_else(|| Error::NonNumericLabel(space.label(i).to_string()))
}

fn scalar_label(space: &StateSpace, i: usize) -> Result<i64> {
    let p = point_label(space, i)?;
    if p.len() == 1 {
        Ok(p[0])
    } else {
        Err(Error::NonNumericLabel(space.label(i).to_string()))
    }
}

fn shared_dims(left: &StateSpace, right: &StateSpace) -> Result<usize> {
    let dl = point_dim(left)?;
    let dr = point_dim(right)?;
    Ok(dl.min(dr))
}

fn point_dim(space: &StateSpace) -> Result<usize> {
    let d = point_label(space, 0)?.len();
    for i in 1..space.len() {
        if point_label(space, i)?.len() != d {
            return Err(Error::BadRelationParams("mixed label dimensions".into()));
        }
    }
    Ok(d)
}

fn weakly_majorized(x: &[i64], y: &[i64]) -> bool {
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_unstable_by(|a, b| b.cmp(a));
    ys.sort_unstable_by(|a, b| b.cmp(a));
    let (mut sx, mut sy) = (0i64, 0i64);
    for k in 0..xs.len().max(ys.len()) {
        sx += xs.get(k).copied().unwrap_or(0);
        sy += ys.get(k).copied().unwrap_or(0);
        if sx > sy {
            return false;
        }
    }
    true
}

/// A nonnegative rational function on a state space, the class closed
/// under conjugation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RealFn {
    space: StateSpace,
    values: Vec<Rat>,
}

impl RealFn {
    pub fn new(space: StateSpace, values: Vec<Rat>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::BadInput("value vector length must match the space".into()));
        }
        if let Some(k) = values.iter().position(|v| v < &Rat::zero()) {
            return Err(Error::NegativeValue(space.label(k).to_string()));
        }
        Ok(RealFn { space, values })
    }

    /// Indicator function of a set of states.
    pub fn indicator(space: StateSpace, states: &[usize]) -> Result<Self> {
        let mut values = vec![Rat::zero(); space.len()];
        for &i in states {
            space.check_index(i)?;
            values[i] = Rat::from_integer(1.into());
        }
        Ok(RealFn { space, values })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn value(&self, i: usize) -> &Rat {
        &self.values[i]
    }

    pub fn values(&self) -> &[Rat] {
        &self.values
    }

    /// The set `{x : f(x) > r}`.
    pub fn level_set(&self, r: &Rat) -> Vec<usize> {
        (0..self.values.len()).filter(|&i| &self.values[i] > r).collect()
    }
}

/// Membership helper used by decision procedures: builds the word mask of
/// a state subset.
pub(crate) fn mask_of(states: &[usize], size: usize) -> Vec<u64> {
    let mut mask = vec![0u64; size.div_ceil(64)];
    for &s in states {
        mask[s / 64] |= 1 << (s % 64);
    }
    mask
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{rat, rat_int};

    fn chain(n: i64) -> StateSpace {
        StateSpace::integers(0..=n - 1)
    }

    fn leq(n: i64) -> Relation {
        Relation::build(&RelationKind::CoordinatewiseLeq(vec![1]), chain(n), chain(n)).unwrap()
    }

    #[test]
    fn equality_fixes_sets() {
        let s = StateSpace::named(["a", "b", "c"]).unwrap();
        let r = Relation::build(&RelationKind::Equality, s.clone(), s).unwrap();
        assert_eq!(r.pair_count(), 3);
        assert_eq!(r.conjugate_set(&[1], Side::Right).unwrap(), vec![1]);
    }

    #[test]
    fn order_conjugate_is_up_set() {
        let r = leq(3);
        assert_eq!(r.conjugate_set(&[1], Side::Right).unwrap(), vec![1, 2]);
        assert_eq!(r.conjugate_set(&[1], Side::Left).unwrap(), vec![0, 1]);
        assert!(r.conjugate_set(&[], Side::Right).unwrap().is_empty());
    }

    #[test]
    fn conjugate_rejects_bad_index() {
        let r = leq(3);
        assert!(r.conjugate_set(&[7], Side::Right).is_err());
    }

    #[test]
    fn indicator_conjugate_is_conjugate_indicator() {
        let r = leq(4);
        let b = vec![1, 3];
        let f = RealFn::indicator(r.left_space().clone(), &b).unwrap();
        let fc = r.conjugate_fn(&f, Side::Right).unwrap();
        let bc = r.conjugate_set(&b, Side::Right).unwrap();
        let expect = RealFn::indicator(r.right_space().clone(), &bc).unwrap();
        assert_eq!(fc, expect);
    }

    #[test]
    fn equality_relation_fixes_functions() {
        let s = chain(4);
        let r = Relation::build(&RelationKind::Equality, s.clone(), s.clone()).unwrap();
        let f = RealFn::new(s, vec![rat(1, 2), rat_int(0), rat(3, 4), rat_int(2)]).unwrap();
        assert_eq!(r.conjugate_fn(&f, Side::Right).unwrap(), f);
    }

    #[test]
    fn level_sets_commute_with_conjugation() {
        let r = leq(5);
        let f = RealFn::new(
            r.left_space().clone(),
            vec![rat(1, 3), rat_int(1), rat(1, 2), rat_int(0), rat(2, 3)],
        )
        .unwrap();
        let fc = r.conjugate_fn(&f, Side::Right).unwrap();
        for v in f.values() {
            let lhs = r.conjugate_set(&f.level_set(v), Side::Right).unwrap();
            let rhs = fc.level_set(v);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn weak_majorization_example() {
        let g = StateSpace::grid(&[(0, 2), (0, 2)]).unwrap();
        let r = Relation::build(&RelationKind::WeakMajorization, g.clone(), g.clone()).unwrap();
        let x = g.index_of(&Label::Point(vec![2, 0])).unwrap();
        let y = g.index_of(&Label::Point(vec![1, 2])).unwrap();
        assert!(r.contains(x, y)); // 2 <= 2 and 2 <= 3
        assert!(!r.contains(y, x));
    }

    #[test]
    fn epsilon_distance_pairs() {
        let s = StateSpace::integers(0..=3);
        let r =
            Relation::build(&RelationKind::EpsilonDistance(rat_int(1)), s.clone(), s).unwrap();
        let (a, b, c) = (0, 1, 2);
        assert!(r.contains(a, b));
        assert!(!r.contains(a, c));
        assert!(
            Relation::build(&RelationKind::EpsilonDistance(rat(-1, 2)), chain(2), chain(2))
                .is_err()
        );
    }

    #[test]
    fn induced_by_identity_and_constants() {
        let r = leq(3);
        let id = vec![0, 1, 2];
        let same = r
            .induced(&id, chain(3), &id, chain(3))
            .unwrap();
        assert_eq!(same, r);

        // constant maps landing on a related pair induce the full relation
        let s2 = StateSpace::named(["u", "v"]).unwrap();
        let full = r
            .induced(&[0, 0], s2.clone(), &[2, 2], s2.clone())
            .unwrap();
        assert_eq!(full.pair_count(), 4);
    }

    #[test]
    fn induced_lumping_blocks() {
        // merge states 1 and 2 of a 4-state space, pull equality back
        let s4 = chain(4);
        let s3 = StateSpace::named(["a", "bc", "d"]).unwrap();
        let f = vec![0, 1, 1, 2]; // 4-state -> 3 lumps
        let eq3 = Relation::build(&RelationKind::Equality, s3.clone(), s3).unwrap();
        let r = eq3.induced(&f, s4.clone(), &f, s4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(r.contains(i, j), f[i] == f[j]);
            }
        }
    }

    #[test]
    fn induced_matches_brute_force() {
        // pullback computed by a double loop over the new spaces
        let r = Relation::build(
            &RelationKind::FromPairs(vec![(0, 1), (2, 0), (1, 1)]),
            chain(3),
            chain(2),
        )
        .unwrap();
        let phi1 = vec![2, 0, 1, 2];
        let phi2 = vec![1, 1, 0];
        let ind = r
            .induced(&phi1, chain(4), &phi2, chain(3))
            .unwrap();
        for i in 0..4 {
            for j in 0..3 {
                assert_eq!(ind.contains(i, j), r.contains(phi1[i], phi2[j]));
            }
        }
    }

    #[test]
    fn restrict_to_box_keeps_interior() {
        let g = StateSpace::grid(&[(0, 3)]).unwrap();
        let r = Relation::build(&RelationKind::Full, g.clone(), g).unwrap();
        let r2 = r.restrict_to_box(0, 1);
        assert_eq!(r2.pair_count(), 4);
    }

    #[test]
    fn order_conjugates_are_monotone_and_idempotent() {
        let r = leq(6);
        // exhaustive over all subsets of a 6-chain
        for mask in 0u32..64 {
            let b: Vec<usize> = (0..6).filter(|&i| mask >> i & 1 == 1).collect();
            let bc = r.conjugate_set(&b, Side::Right).unwrap();
            // reflexive-transitive: B ⊆ B→ and (B→)→ = B→
            for &i in &b {
                assert!(bc.contains(&i));
            }
            assert_eq!(r.conjugate_set(&bc, Side::Right).unwrap(), bc);
            for mask2 in 0u32..64 {
                if mask & mask2 == mask {
                    let b2: Vec<usize> = (0..6).filter(|&i| mask2 >> i & 1 == 1).collect();
                    let b2c = r.conjugate_set(&b2, Side::Right).unwrap();
                    assert!(bc.iter().all(|j| b2c.contains(j)));
                }
            }
        }
    }
}
