//! Comparing functions of Markov chains.
//!
//! Two observed processes `f1 ∘ X1` and `f2 ∘ X2` are stochastically
//! related whenever the hidden chains preserve the relation *induced*
//! by pulling the observation relation back through `(f1, f2)` — and
//! relatedness of hidden distributions under the induced relation is the
//! same as relatedness of their images under the original one. This also
//! covers lumpability: a chain is lumpable for `f` exactly when `(P, P)`
//! preserves the kernel of `f` induced from equality.

use crate::dist::Dist;
use crate::error::Result;
use crate::kernel::{preserves, Kernel, PreservationReport};
use crate::relation::Relation;

/// Outcome of the observed-process comparison.
#[derive(Clone, Debug)]
pub struct HiddenMarkovReport {
    /// The relation on the hidden spaces induced by the observation maps.
    pub induced: Relation,
    /// Preservation of the induced relation by the hidden kernels.
    pub preservation: PreservationReport,
}

impl HiddenMarkovReport {
    pub fn holds(&self) -> bool {
        self.preservation.holds()
    }
}

/// Checks whether the hidden pair `(p1, p2)` keeps the observed
/// processes related: builds the induced relation of the observation
/// maps `f1`, `f2` (total, given as indices into `r`'s spaces) and tests
/// its preservation.
pub fn hidden_markov_check(
    r: &Relation,
    f1: &[usize],
    f2: &[usize],
    p1: &Kernel,
    p2: &Kernel,
) -> Result<HiddenMarkovReport> {
    p1.from_space().expect_same(p1.to_space(), "p1 must be an endo-kernel")?;
    p2.from_space().expect_same(p2.to_space(), "p2 must be an endo-kernel")?;
    let induced = r.induced(f1, p1.from_space().clone(), f2, p2.from_space().clone())?;
    let preservation = preserves(&induced, p1, p2)?;
    Ok(HiddenMarkovReport { induced, preservation })
}

/// Image of a hidden distribution under an observation map, for checking
/// the equivalence between relatedness under the induced relation and
/// relatedness of the pushed-forward distributions.
pub fn observe(mu: &Dist, f: &[usize], observed: &crate::space::StateSpace) -> Result<Dist> {
    mu.pushforward(f, observed.clone())
}
