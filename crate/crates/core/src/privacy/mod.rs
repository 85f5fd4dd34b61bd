//! Laplace noise, the Laplace mechanism over counts, and budget accounting.
//!
//! Noise is drawn from real-valued Laplace via the inverse CDF on `f64`.
//! That sampler is exact in distribution only over the reals: floating-point
//! artifacts (Mironov 2012) can leak through the low-order bits of released
//! values. Deployments facing adversaries who see raw outputs should snap or
//! use a discrete sampler; this crate does not.

mod accountant;
mod laplace;
pub(crate) mod mechanism;

pub use accountant::{Epsilon, MAX_EPSILON, LedgerEntry, PrivacyAccountant};
pub use laplace::{laplace_cdf, laplace_mech, laplace_sample};
pub use mechanism::{noisy_range_query, privatize_marginal, NoisyMarginal};
