//! Low-rank personalized reward modeling from pairwise comparisons.
//!
//! A shared basis `A` (`B x D`) maps item embeddings to `B` basis rewards; each
//! user mixes them with weights on the probability simplex. The basis and
//! the weights of seen users are trained jointly; new users are adapted from
//! a handful of comparisons with the basis frozen.

pub mod baselines;
pub mod io;
pub mod error;
pub mod eval;
pub mod kernel;
pub mod optim;
pub mod par;
pub mod policy;
pub mod rng;
pub mod synth;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    ComparisonRecord, FeatureVector, PreferenceDataset, RewardBasisModel, SplitSpec, UserWeights,
};
