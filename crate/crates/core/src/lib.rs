//! Double feature allocation model for ordinal collaborative filtering.
//!
//! Users and items are jointly allocated to latent features: `A` (users,
//! Indian buffet process prior) and `B` (items, Bernoulli) share columns,
//! and each shared feature shifts the probit score of an ordinal rating.
//! The crate provides the MCMC sampler, consensus Monte Carlo over user
//! shards, prediction and evaluation, posterior summaries, a simulator and
//! a matrix factorization baseline.

pub mod consensus;
pub mod draws;
pub mod error;
pub mod ibp;
pub mod mf;
pub mod model;
pub mod normal;
pub mod predict;
pub mod ratings;
pub mod rng;
pub mod sampler;
pub mod simulate;
pub mod summarize;

pub use consensus::{FilterRule, GlobalRho, MergePrior, ResampleMode, ShardPlan, SplitStrategy};
pub use error::{Error, Result};
pub use model::{
    BinaryMatrix, FeatureAllocation, Hyperparams, LatentScores, McmcDraw, ModelParams, PbPrior, RhoPrior,
};
pub use ratings::{Entry, Rating, RatingMatrix};
pub use rng::{derive, ChainRng, Purpose};
pub use sampler::{run_chain, ChainConfig, ChainState, Init, NewFeatureRate};
pub use simulate::{HoldoutMode, SimParams};
