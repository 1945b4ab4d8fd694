//! Reward-poisoning strategies.
//!
//! Strong attackers act after seeing the pulled arm and its true reward.
//! Weak attackers commit a per-arm corruption vector before the learner
//! chooses. Every value returned here is a *request*: the channel clamps it
//! to the feasible range and charges it against the contamination budget.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::protocol::{ArmId, RoundRecord};

/// What a strong attacker sees when it intercepts round `t`.
#[derive(Clone, Copy, Debug)]
pub struct StrongAttackContext<'a> {
    pub t: u64,
    pub arm: ArmId,
    pub true_reward: f64,
    /// All earlier rounds, `history.len() == t - 1`.
    pub history: &'a [RoundRecord],
}

/// Per-arm corruption committed before round `t`'s arm is chosen.
#[derive(Clone, Debug, PartialEq)]
pub struct WeakAttackPlan {
    pub eps_by_arm: Vec<f64>,
}

impl WeakAttackPlan {
    pub fn zero(k: usize) -> Self {
        Self {
            eps_by_arm: vec![0.0; k],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetMode {
    Unlimited,
    Deterministic(f64),
}

/// Contamination budget with the amount already charged.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContaminationBudget {
    pub mode: BudgetMode,
    pub spent: f64,
}

impl ContaminationBudget {
    pub fn unlimited() -> Self {
        Self {
            mode: BudgetMode::Unlimited,
            spent: 0.0,
        }
    }

    pub fn deterministic(c: f64) -> Self {
        Self {
            mode: BudgetMode::Deterministic(c),
            spent: 0.0,
        }
    }

    pub fn remaining(&self) -> f64 {
        match self.mode {
            BudgetMode::Unlimited => f64::INFINITY,
            BudgetMode::Deterministic(c) => (c - self.spent).max(0.0),
        }
    }

    /// Shrinks `eps` so its magnitude fits the remaining budget and charges it.
    pub fn truncate_and_charge(&mut self, eps: f64) -> f64 {
        let applied = match self.mode {
            BudgetMode::Unlimited => eps,
            BudgetMode::Deterministic(c) => {
                let mut mag = eps.abs().min(self.remaining());
                while mag > 0.0 && self.spent + mag > c {
                    mag = mag.next_down();
                }
                eps.signum() * mag.max(0.0)
            }
        };
        let applied = if applied == 0.0 { 0.0 } else { applied };
        self.spent += applied.abs();
        applied
    }
}

/// Zeroes the observation whenever the pulled arm is not the target.
pub fn oblivious_zero_eps(ctx: &StrongAttackContext<'_>, target: ArmId) -> f64 {
    if ctx.arm == target || ctx.true_reward == 0.0 {
        0.0
    } else {
        -ctx.true_reward
    }
}

/// Zeroes every unverified observation regardless of arm.
pub fn blackout_eps(ctx: &StrongAttackContext<'_>) -> f64 {
    if ctx.true_reward == 0.0 {
        0.0
    } else {
        -ctx.true_reward
    }
}

/// Replaces the observation with a fresh fair coin flip drawn from `rng`.
pub fn uniformizing_eps<R: Rng + ?Sized>(ctx: &StrongAttackContext<'_>, rng: &mut R) -> f64 {
    let coin = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
    coin - ctx.true_reward
}

/// Sign of the target-arm confidence radical in the gap estimate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapRadical {
    /// `μ̂(i) + rad(i) − μ̂(i_A) + rad(i_A)`.
    #[default]
    Added,
    /// `μ̂(i) + rad(i) − μ̂(i_A) − rad(i_A)`.
    Subtracted,
}

/// True-reward statistics the gap-estimation attacker keeps for every arm.
#[derive(Clone, Debug, PartialEq)]
pub struct GapAttackState {
    sums: Vec<f64>,
    counts: Vec<u64>,
    pub target: ArmId,
    pub radical: GapRadical,
}

impl GapAttackState {
    pub fn new(k: usize, target: ArmId) -> Self {
        Self {
            sums: vec![0.0; k],
            counts: vec![0; k],
            target,
            radical: GapRadical::Added,
        }
    }

    pub fn with_radical(mut self, radical: GapRadical) -> Self {
        self.radical = radical;
        self
    }

    pub fn count(&self, arm: ArmId) -> u64 {
        self.counts[arm.0]
    }

    pub fn mean(&self, arm: ArmId) -> Option<f64> {
        let n = self.counts[arm.0];
        (n > 0).then(|| self.sums[arm.0] / n as f64)
    }

    /// Confidence-inflated gap estimate between `arm` and the target, given `ln t`.
    pub fn gap_estimate(&self, arm: ArmId, ln_t: f64) -> Option<f64> {
        let (mu_i, mu_a) = (self.mean(arm)?, self.mean(self.target)?);
        let rad = |a: ArmId| (2.0 * ln_t / self.counts[a.0] as f64).sqrt();
        let target_rad = match self.radical {
            GapRadical::Added => rad(self.target),
            GapRadical::Subtracted => -rad(self.target),
        };
        Some(mu_i + rad(arm) - mu_a + target_rad)
    }
}

/// Folds one pull's TRUE reward into the attacker's statistics.
pub fn gap_attack_update(state: &mut GapAttackState, arm: ArmId, true_reward: f64) {
    state.sums[arm.0] += true_reward;
    state.counts[arm.0] += 1;
}

/// Pushes a non-target arm down by twice its estimated gap to the target.
/// Returns 0 until both arms have been seen at least once.
pub fn gap_attack_eps(state: &GapAttackState, ctx: &StrongAttackContext<'_>) -> f64 {
    if ctx.arm == state.target {
        return 0.0;
    }
    let ln_t = (ctx.t as f64).ln();
    match state.gap_estimate(ctx.arm, ln_t) {
        Some(gap) if gap > 0.0 => -2.0 * gap,
        _ => 0.0,
    }
}

/// Requests `−1` on every non-target arm, filling arms in index order until
/// the remaining budget is used up.
pub fn weak_budgeted_plan(k: usize, target: ArmId, budget: &ContaminationBudget) -> WeakAttackPlan {
    let mut remaining = budget.remaining();
    let eps_by_arm = (0..k)
        .map(|i| {
            if i == target.0 || remaining <= 0.0 {
                0.0
            } else {
                let e = remaining.min(1.0);
                remaining -= e;
                -e
            }
        })
        .collect();
    WeakAttackPlan { eps_by_arm }
}

pub trait StrongAttacker: Send {
    /// Called on every pull, verified or not, before any corruption request.
    fn observe_pull(&mut self, _arm: ArmId, _true_reward: f64) {}

    fn corrupt(&mut self, ctx: &StrongAttackContext<'_>) -> f64;

    fn name(&self) -> &'static str;
}

pub trait WeakAttacker: Send {
    /// Must depend only on information available before round `t` starts.
    fn plan(
        &mut self,
        t: u64,
        history: &[RoundRecord],
        budget: &ContaminationBudget,
    ) -> WeakAttackPlan;

    fn name(&self) -> &'static str;
}

pub struct ZeroOblivious {
    pub target: ArmId,
}

impl StrongAttacker for ZeroOblivious {
    fn corrupt(&mut self, ctx: &StrongAttackContext<'_>) -> f64 {
        oblivious_zero_eps(ctx, self.target)
    }

    fn name(&self) -> &'static str {
        "zero_oblivious"
    }
}

pub struct Blackout;

impl StrongAttacker for Blackout {
    fn corrupt(&mut self, ctx: &StrongAttackContext<'_>) -> f64 {
        blackout_eps(ctx)
    }

    fn name(&self) -> &'static str {
        "blackout"
    }
}

pub struct Uniformizing {
    rng: ChaCha8Rng,
}

impl Uniformizing {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Self { rng }
    }
}

impl StrongAttacker for Uniformizing {
    fn corrupt(&mut self, ctx: &StrongAttackContext<'_>) -> f64 {
        uniformizing_eps(ctx, &mut self.rng)
    }

    fn name(&self) -> &'static str {
        "uniformizing"
    }
}

pub struct GapEstimation {
    pub state: GapAttackState,
}

impl StrongAttacker for GapEstimation {
    fn observe_pull(&mut self, arm: ArmId, true_reward: f64) {
        gap_attack_update(&mut self.state, arm, true_reward);
    }

    fn corrupt(&mut self, ctx: &StrongAttackContext<'_>) -> f64 {
        gap_attack_eps(&self.state, ctx)
    }

    fn name(&self) -> &'static str {
        "gap_estimation"
    }
}

pub struct WeakBudgeted {
    pub k: usize,
    pub target: ArmId,
}

impl WeakAttacker for WeakBudgeted {
    fn plan(
        &mut self,
        _t: u64,
        _history: &[RoundRecord],
        budget: &ContaminationBudget,
    ) -> WeakAttackPlan {
        weak_budgeted_plan(self.k, self.target, budget)
    }

    fn name(&self) -> &'static str {
        "weak_budgeted"
    }
}

/// The single adversary active in a trial.
#[derive(Default)]
pub enum Adversary {
    #[default]
    None,
    Strong(Box<dyn StrongAttacker>),
    Weak(Box<dyn WeakAttacker>),
}

impl Adversary {
    pub fn name(&self) -> &'static str {
        match self {
            Adversary::None => "none",
            Adversary::Strong(a) => a.name(),
            Adversary::Weak(a) => a.name(),
        }
    }
}

/// Config-level attacker selection.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackerSpec {
    #[default]
    None,
    ZeroOblivious {
        target: usize,
    },
    GapEstimation {
        target: usize,
        #[serde(default)]
        radical: GapRadical,
    },
    Blackout,
    Uniformizing,
    WeakBudgeted {
        target: usize,
    },
}

impl AttackerSpec {
    pub fn key(&self) -> &'static str {
        match self {
            AttackerSpec::None => "none",
            AttackerSpec::ZeroOblivious { .. } => "zero_oblivious",
            AttackerSpec::GapEstimation { .. } => "gap_estimation",
            AttackerSpec::Blackout => "blackout",
            AttackerSpec::Uniformizing => "uniformizing",
            AttackerSpec::WeakBudgeted { .. } => "weak_budgeted",
        }
    }

    pub fn target(&self) -> Option<ArmId> {
        match *self {
            AttackerSpec::ZeroOblivious { target }
            | AttackerSpec::GapEstimation { target, .. }
            | AttackerSpec::WeakBudgeted { target } => Some(ArmId(target)),
            _ => None,
        }
    }

    pub fn build(&self, k: usize, rng: ChaCha8Rng) -> Adversary {
        match *self {
            AttackerSpec::None => Adversary::None,
            AttackerSpec::ZeroOblivious { target } => Adversary::Strong(Box::new(ZeroOblivious {
                target: ArmId(target),
            })),
            AttackerSpec::GapEstimation { target, radical } => {
                Adversary::Strong(Box::new(GapEstimation {
                    state: GapAttackState::new(k, ArmId(target)).with_radical(radical),
                }))
            }
            AttackerSpec::Blackout => Adversary::Strong(Box::new(Blackout)),
            AttackerSpec::Uniformizing => Adversary::Strong(Box::new(Uniformizing::new(rng))),
            AttackerSpec::WeakBudgeted { target } => Adversary::Weak(Box::new(WeakBudgeted {
                k,
                target: ArmId(target),
            })),
        }
    }
}
