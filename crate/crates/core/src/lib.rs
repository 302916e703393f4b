//! Weighted dyadic harmonic analysis and first-order `DB` operators on the
//! periodic unit interval.
//!
//! The boundary is the torus `[0, 1)` with an A₂ weight `w`. Functions live on
//! an `N`-point grid (`N` a power of two) so that grid cells line up with the
//! dyadic arcs. Vector fields have a normal (`⊥`) and a tangential (`∥`)
//! component and are stored flat as `[⊥ values, ∥ values]`.

pub mod bvp;
pub mod checks;
pub mod coefficients;
pub mod corona;
pub mod dyadic;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod operators;
pub mod oracle;
mod quadrature;
pub mod quadratic;
pub mod weights;

pub use error::{Error, Result};
pub use faer::c64;

/// Deterministic generator used for every seeded computation.
pub type Rng = rand_chacha::ChaCha8Rng;

/// Seeded generator; all randomness in the crate flows through this.
pub fn rng(seed: u64) -> Rng {
    use rand::SeedableRng;
    Rng::seed_from_u64(seed)
}
