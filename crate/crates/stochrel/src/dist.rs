//! Exact probability distributions on finite state spaces.

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rational::{format_rat, Rat};
use crate::relation::RealFn;
use crate::space::StateSpace;

/// A probability distribution with exactly normalized rational masses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dist {
    space: StateSpace,
    mass: Vec<Rat>,
}

impl Dist {
    pub fn new(space: StateSpace, mass: Vec<Rat>) -> Result<Self> {
        if mass.len() != space.len() {
            return Err(Error::BadInput("mass vector length must match the space".into()));
        }
        if mass.iter().any(|m| m < &Rat::zero()) {
            return Err(Error::NotNormalized("negative mass".into()));
        }
        let total: Rat = mass.iter().sum();
        if !total.is_one() {
            return Err(Error::NotNormalized(format_rat(&total)));
        }
        Ok(Dist { space, mass })
    }

    /// Point mass at state `i`.
    pub fn dirac(space: StateSpace, i: usize) -> Result<Self> {
        space.check_index(i)?;
        let mut mass = vec![Rat::zero(); space.len()];
        mass[i] = Rat::one();
        Ok(Dist { space, mass })
    }

    pub fn uniform(space: StateSpace) -> Self {
        let n = space.len();
        let m = Rat::new(1.into(), (n as i64).into());
        Dist { space, mass: vec![m; n] }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn mass(&self, i: usize) -> &Rat {
        &self.mass[i]
    }

    pub fn masses(&self) -> &[Rat] {
        &self.mass
    }

    /// Indices with positive mass, ascending.
    pub fn support(&self) -> Vec<usize> {
        (0..self.mass.len()).filter(|&i| !self.mass[i].is_zero()).collect()
    }

    /// Total mass of a set of states.
    pub fn mass_of(&self, states: &[usize]) -> Rat {
        states.iter().map(|&i| &self.mass[i]).sum()
    }

    /// Expectation of a nonnegative function, `Σ f(x) μ(x)`.
    pub fn expect(&self, f: &RealFn) -> Result<Rat> {
        self.space.expect_same(f.space(), "expectation over mismatched space")?;
        Ok(self
            .mass
            .iter()
            .zip(f.values())
            .map(|(m, v)| m * v)
            .sum())
    }

    /// Image distribution under a total map given by indices into `to`.
    pub fn pushforward(&self, phi: &[usize], to: StateSpace) -> Result<Dist> {
        if phi.len() != self.space.len() {
            return Err(Error::BadInput("map length must equal its domain size".into()));
        }
        let mut mass = vec![Rat::zero(); to.len()];
        for (i, m) in self.mass.iter().enumerate() {
            to.check_index(phi[i])?;
            mass[phi[i]] += m;
        }
        Ok(Dist { space: to, mass })
    }

    /// Cumulative distribution function at integer `t` for a distribution
    /// on one-dimensional integer labels: `F(t) = μ{x <= t}`.
    pub fn cdf_at(&self, t: &Rat) -> Result<Rat> {
        let mut acc = Rat::zero();
        for i in 0..self.space.len() {
            let p = self
                .space
                .point(i)
                .filter(|p| p.len() == 1)
                .ok_or_else(|| Error::NonNumericLabel(self.space.label(i).to_string()))?;
            if &Rat::from_integer(p[0].into()) <= t {
                acc += &self.mass[i];
            }
        }
        Ok(acc)
    }
}
