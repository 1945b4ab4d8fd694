//! Bandit algorithms behind one sequential contract: `select` picks an arm and
//! says whether to ask for verification, `observe` receives what the channel
//! delivered for that same round.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::ArmId;

mod barbar;
mod secure_etc;
mod secure_ucb;
mod ucb;

pub use barbar::{
    epoch_estimate, next_gaps, Barbar, BarbarParams, EpochClose, VerificationPlacement,
};
pub use secure_etc::{elimination_radius, SecureEtc};
pub use secure_ucb::SecureUcb;
pub use ucb::Ucb;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Selection {
    pub arm: ArmId,
    pub verify: bool,
}

/// Learner-specific state worth reporting after a trial.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diagnostics {
    #[default]
    None,
    Etc {
        committed: Option<ArmId>,
        /// First round played in the committed phase.
        commit_round: Option<u64>,
    },
    Barbar {
        epochs: Vec<EpochClose>,
    },
}

pub trait Learner: Send {
    fn select(&mut self, t: u64, rng: &mut ChaCha8Rng) -> Selection;

    /// `verified` is what the channel granted, which may differ from the request.
    fn observe(&mut self, t: u64, arm: ArmId, observed: f64, verified: bool) -> Result<()>;

    fn name(&self) -> &'static str;

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics::None
    }
}

/// Enforces select-then-observe ordering around any learner.
pub struct Sequenced<L> {
    inner: L,
    pending: Option<(u64, ArmId)>,
}

impl<L: Learner> Sequenced<L> {
    pub fn new(inner: L) -> Self {
        Self {
            inner,
            pending: None,
        }
    }

    pub fn into_inner(self) -> L {
        self.inner
    }

    pub fn inner(&self) -> &L {
        &self.inner
    }
}

impl<L: Learner> Learner for Sequenced<L> {
    fn select(&mut self, t: u64, rng: &mut ChaCha8Rng) -> Selection {
        let s = self.inner.select(t, rng);
        self.pending = Some((t, s.arm));
        s
    }

    fn observe(&mut self, t: u64, arm: ArmId, observed: f64, verified: bool) -> Result<()> {
        match self.pending.take() {
            Some((pt, pa)) if pt == t && pa == arm => {
                self.inner.observe(t, arm, observed, verified)
            }
            Some((pt, pa)) => Err(Error::Protocol(format!(
                "observe(t = {t}, arm {arm}) does not match select(t = {pt}, arm {pa})"
            ))),
            None => Err(Error::Protocol(format!(
                "observe(t = {t}) without a matching select"
            ))),
        }
    }

    fn name(&self) -> &'static str {
        self.inner.name()
    }

    fn diagnostics(&self) -> Diagnostics {
        self.inner.diagnostics()
    }
}

impl Learner for Box<dyn Learner> {
    fn select(&mut self, t: u64, rng: &mut ChaCha8Rng) -> Selection {
        (**self).select(t, rng)
    }

    fn observe(&mut self, t: u64, arm: ArmId, observed: f64, verified: bool) -> Result<()> {
        (**self).observe(t, arm, observed, verified)
    }

    fn name(&self) -> &'static str {
        (**self).name()
    }

    fn diagnostics(&self) -> Diagnostics {
        (**self).diagnostics()
    }
}

pub(crate) fn check_reward(observed: f64) -> Result<()> {
    if (0.0..=1.0).contains(&observed) {
        Ok(())
    } else {
        Err(Error::RewardOutOfRange { value: observed })
    }
}

fn default_kappa() -> f64 {
    1.0
}

fn default_confidence() -> f64 {
    0.1
}

/// Config-level learner selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LearnerSpec {
    Ucb,
    SecureEtc {
        /// Defaults to `1 / T`.
        #[serde(default)]
        delta: Option<f64>,
    },
    SecureUcb {
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
    /// Secure-BARBAR without verification budget.
    Barbar {
        #[serde(default = "default_confidence")]
        delta: f64,
        #[serde(default = "default_kappa")]
        kappa_lambda: f64,
    },
    SecureBarbar {
        #[serde(default = "default_confidence")]
        delta: f64,
        #[serde(default = "default_confidence")]
        beta: f64,
        budget: u64,
        #[serde(default = "default_kappa")]
        kappa_lambda: f64,
        #[serde(default)]
        placement: VerificationPlacement,
    },
}

impl LearnerSpec {
    pub fn key(&self) -> &'static str {
        match self {
            LearnerSpec::Ucb => "ucb",
            LearnerSpec::SecureEtc { .. } => "secure_etc",
            LearnerSpec::SecureUcb { .. } => "secure_ucb",
            LearnerSpec::Barbar { .. } => "barbar",
            LearnerSpec::SecureBarbar { .. } => "secure_barbar",
        }
    }

    /// The constant-scale knob, if this learner has one.
    pub fn kappa(&self) -> Option<f64> {
        match *self {
            LearnerSpec::SecureUcb { kappa } => Some(kappa),
            LearnerSpec::Barbar { kappa_lambda, .. }
            | LearnerSpec::SecureBarbar { kappa_lambda, .. } => Some(kappa_lambda),
            _ => None,
        }
    }

    pub fn verification_budget(&self) -> Option<u64> {
        match *self {
            LearnerSpec::SecureBarbar { budget, .. } => Some(budget),
            _ => None,
        }
    }

    pub fn build(&self, k: usize, horizon: u64) -> Result<Box<dyn Learner>> {
        Ok(match *self {
            LearnerSpec::Ucb => Box::new(Ucb::new(k)),
            LearnerSpec::SecureEtc { delta } => {
                Box::new(SecureEtc::new(k, delta.unwrap_or(1.0 / horizon as f64))?)
            }
            LearnerSpec::SecureUcb { kappa } => Box::new(SecureUcb::new(k, horizon, kappa)?),
            LearnerSpec::Barbar {
                delta,
                kappa_lambda,
            } => Box::new(Barbar::new(BarbarParams {
                k,
                horizon,
                delta,
                beta: 0.5,
                budget: 0,
                kappa_lambda,
                placement: VerificationPlacement::Phase1,
            })?),
            LearnerSpec::SecureBarbar {
                delta,
                beta,
                budget,
                kappa_lambda,
                placement,
            } => Box::new(Barbar::new(BarbarParams {
                k,
                horizon,
                delta,
                beta,
                budget,
                kappa_lambda,
                placement,
            })?),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn sequenced_rejects_unmatched_observe() {
        let mut l = Sequenced::new(Ucb::new(2));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            l.observe(1, ArmId(0), 0.5, false),
            Err(Error::Protocol(_))
        ));
        let s = l.select(1, &mut rng);
        assert!(l.observe(1, ArmId(1 - s.arm.0), 0.5, false).is_err());
        let s = l.select(2, &mut rng);
        l.observe(2, s.arm, 0.5, false).unwrap();
        assert!(l.observe(2, s.arm, 0.5, false).is_err());
    }

    #[test]
    fn spec_keys_parse() {
        let spec: LearnerSpec = toml::from_str("kind = \"secure_ucb\"").unwrap();
        assert_eq!(spec, LearnerSpec::SecureUcb { kappa: 1.0 });
        let spec: LearnerSpec =
            toml::from_str("kind = \"secure_barbar\"\nbudget = 64\nplacement = \"in_epoch\"")
                .unwrap();
        assert_eq!(spec.verification_budget(), Some(64));
        assert!(toml::from_str::<LearnerSpec>("kind = \"secure_ucb\"\nkapa = 2.0").is_err());
    }
}
