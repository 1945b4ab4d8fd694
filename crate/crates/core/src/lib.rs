//! Stochastic multi-armed bandits under reward poisoning, with learners that
//! use a limited verification channel to resist it.
//!
//! ```
//! use secbandit::engine::{ExperimentConfig, run_experiment};
//! use secbandit::learner::LearnerSpec;
//! use secbandit::attack::AttackerSpec;
//!
//! let mut cfg = ExperimentConfig::new(
//!     vec![0.9, 0.8],
//!     LearnerSpec::Ucb,
//!     AttackerSpec::None,
//!     1_000,
//! );
//! cfg.trials = 4;
//! let out = run_experiment(&cfg, None).unwrap();
//! assert_eq!(out.results.len(), 4);
//! ```

pub mod analysis;
pub mod attack;
pub mod channel;
pub mod config;
pub mod emit;
pub mod engine;
pub mod environment;
pub mod error;
pub mod learner;
pub mod protocol;

pub use error::{Error, Result};
pub use protocol::{ArmId, BanditInstance, Ledgers, RewardFamily, RngStream, RoundRecord};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
    #[doc = include_str!("../../../book/src/attacks.md")]
    mod attacks {}
    #[doc = include_str!("../../../book/src/ucb.md")]
    mod ucb {}
    #[doc = include_str!("../../../book/src/secure_ucb.md")]
    mod secure_ucb {}
    #[doc = include_str!("../../../book/src/secure_etc.md")]
    mod secure_etc {}
    #[doc = include_str!("../../../book/src/secure_barbar.md")]
    mod secure_barbar {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    mod experiments {}
}
