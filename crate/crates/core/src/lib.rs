//! Bayesian sparse-coding estimators and stochastic-resonance (SR)
//! approximations of the MMSE estimator.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: dictionaries, support priors and seeded signal synthesis.
//! * [`pursuits`]: OMP, basis pursuit, subspace pursuit and exhaustive MAP.
//! * [`bayes`]: oracle estimator, support posterior weights, exact MMSE.
//! * [`sr`]: the posterior-weighted and the plain-averaging SR estimators.
//! * [`unitary`]: closed forms for orthonormal dictionaries and SURE tuning.
//! * [`single_atom`]: support-selection probabilities for one-atom signals.
//! * [`experiments`]: Monte-Carlo sweeps, config files and image denoising.

pub mod bayes;
pub mod error;
pub mod experiments;
mod linalg;
pub mod model;
pub mod pursuits;
mod quadrature;
pub mod single_atom;
pub mod sr;
pub mod unitary;

pub use error::{Error, Result};
pub use model::{
    enumerate_supports, make_random_dictionary, make_unitary_dictionary, sample_signal, CoefficientModel, Dictionary,
    DictionaryKind, PriorSpec, RngSeed, SparseSignal, SupportPrior, SupportSet,
};
