//! The man-in-the-middle channel between environment and learner.

use serde::{Deserialize, Serialize};

use crate::attack::{Adversary, ContaminationBudget, StrongAttackContext, WeakAttackPlan};
use crate::error::{Error, Result};
use crate::protocol::{clamp_corruption, ArmId, RoundRecord};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationMode {
    Unlimited,
    Fixed(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct VerificationBudget {
    pub mode: VerificationMode,
    pub used: u64,
}

impl VerificationBudget {
    pub fn unlimited() -> Self {
        Self {
            mode: VerificationMode::Unlimited,
            used: 0,
        }
    }

    pub fn fixed(b: u64) -> Self {
        Self {
            mode: VerificationMode::Fixed(b),
            used: 0,
        }
    }

    pub fn available(&self) -> bool {
        match self.mode {
            VerificationMode::Unlimited => true,
            VerificationMode::Fixed(b) => self.used < b,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transmission {
    pub observed: f64,
    pub verified: bool,
    pub applied_eps: f64,
    /// A verification was requested but the budget was exhausted.
    pub denied: bool,
}

/// One channel per trial: owns the adversary and both budgets.
pub struct Channel {
    adversary: Adversary,
    pub verification: VerificationBudget,
    pub contamination: ContaminationBudget,
}

impl Channel {
    pub fn new(
        adversary: Adversary,
        verification: VerificationBudget,
        contamination: ContaminationBudget,
    ) -> Self {
        Self {
            adversary,
            verification,
            contamination,
        }
    }

    pub fn adversary_name(&self) -> &'static str {
        self.adversary.name()
    }

    /// Lets a weak adversary commit its plan for round `t`. Must run before
    /// the learner selects.
    pub fn precommit(&mut self, t: u64, history: &[RoundRecord]) -> Option<WeakAttackPlan> {
        match &mut self.adversary {
            Adversary::Weak(w) => Some(w.plan(t, history, &self.contamination)),
            _ => None,
        }
    }

    /// Delivers the reward of round `t` to the learner.
    pub fn transmit(
        &mut self,
        t: u64,
        arm: ArmId,
        true_reward: f64,
        verify_request: bool,
        weak_plan: Option<&WeakAttackPlan>,
        history: &[RoundRecord],
    ) -> Result<Transmission> {
        if !(0.0..=1.0).contains(&true_reward) {
            return Err(Error::RewardOutOfRange { value: true_reward });
        }
        if let Adversary::Strong(s) = &mut self.adversary {
            s.observe_pull(arm, true_reward);
        }
        let mut denied = false;
        if verify_request {
            if self.verification.available() {
                self.verification.used += 1;
                return Ok(Transmission {
                    observed: true_reward,
                    verified: true,
                    applied_eps: 0.0,
                    denied: false,
                });
            }
            denied = true;
        }
        let requested = match (&mut self.adversary, weak_plan) {
            (Adversary::None, _) => 0.0,
            (Adversary::Weak(_), Some(plan)) => {
                plan.eps_by_arm
                    .get(arm.0)
                    .copied()
                    .ok_or(Error::ArmOutOfRange {
                        arm: arm.0,
                        k: plan.eps_by_arm.len(),
                    })?
            }
            (Adversary::Weak(_), None) => {
                return Err(Error::Protocol(format!(
                    "weak adversary has no committed plan for round {t}"
                )));
            }
            (Adversary::Strong(s), _) => s.corrupt(&StrongAttackContext {
                t,
                arm,
                true_reward,
                history,
            }),
        };
        let clamped = clamp_corruption(true_reward, requested)?;
        let applied_eps = self.contamination.truncate_and_charge(clamped);
        Ok(Transmission {
            observed: true_reward + applied_eps,
            verified: false,
            applied_eps,
            denied,
        })
    }
}
