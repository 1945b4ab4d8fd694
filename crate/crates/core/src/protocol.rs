//! Shared protocol types: arms, instances, per-round records, ledgers and
//! seeded random streams.
//!
//! Every round the learner picks an arm `i_t`, the environment draws a true
//! reward `r_t(i_t)`, and the channel delivers `r_t(i_t) + ε_t(i_t)` where the
//! corruption is restricted to keep the observation inside `[0, 1]`.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of an arm in `[0, K)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmId(pub usize);

impl ArmId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for ArmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardFamily {
    Bernoulli,
    DiscreteSupport,
    Scripted,
}

/// The hidden environment: one mean per arm plus the reward family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BanditInstance {
    means: Vec<f64>,
    family: RewardFamily,
    optimal: ArmId,
}

impl BanditInstance {
    pub fn new(means: Vec<f64>, family: RewardFamily) -> Result<Self> {
        if means.is_empty() {
            return Err(Error::InvalidInstance(
                "at least one arm is required".into(),
            ));
        }
        if let Some((i, m)) = means
            .iter()
            .enumerate()
            .find(|(_, m)| !(0.0..=1.0).contains(*m))
        {
            return Err(Error::InvalidInstance(format!(
                "mean of arm {i} is {m}, outside [0, 1]"
            )));
        }
        let optimal = ArmId(argmax_lowest(means.iter().copied()));
        Ok(Self {
            means,
            family,
            optimal,
        })
    }

    pub fn bernoulli(means: Vec<f64>) -> Result<Self> {
        Self::new(means, RewardFamily::Bernoulli)
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn family(&self) -> RewardFamily {
        self.family
    }

    /// `i* = argmax μ_i`, lowest index on ties.
    pub fn optimal_arm(&self) -> ArmId {
        self.optimal
    }

    pub fn gap(&self, arm: ArmId) -> f64 {
        self.means[self.optimal.0] - self.means[arm.0]
    }

    pub fn gaps(&self) -> Vec<f64> {
        (0..self.k()).map(|i| self.gap(ArmId(i))).collect()
    }

    pub fn max_gap(&self) -> f64 {
        self.gaps().into_iter().fold(0.0, f64::max)
    }

    pub fn check_arm(&self, arm: ArmId) -> Result<()> {
        if arm.0 < self.k() {
            Ok(())
        } else {
            Err(Error::ArmOutOfRange {
                arm: arm.0,
                k: self.k(),
            })
        }
    }
}

/// Index of the largest value; the first one wins ties.
pub(crate) fn argmax_lowest(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// One round of the protocol as the channel saw it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: u64,
    pub arm: ArmId,
    #[serde(rename = "r_true")]
    pub true_reward: f64,
    #[serde(rename = "eps")]
    pub applied_eps: f64,
    #[serde(rename = "r_obs")]
    pub observed: f64,
    pub verified: bool,
}

impl RoundRecord {
    /// Checks `observed = true + ε`, `observed ∈ [0,1]` and `verified ⇒ ε = 0`.
    pub fn is_consistent(&self) -> bool {
        self.observed == self.true_reward + self.applied_eps
            && (0.0..=1.0).contains(&self.observed)
            && (0.0..=1.0).contains(&self.true_reward)
            && (!self.verified || self.applied_eps == 0.0)
    }

    /// One JSON-lines row; reals carry 17 significant digits.
    pub fn to_jsonl(&self) -> String {
        format!(
            "{{\"t\":{},\"arm\":{},\"r_true\":{},\"eps\":{},\"r_obs\":{},\"verified\":{}}}",
            self.t,
            self.arm.0,
            fmt_f64(self.true_reward),
            fmt_f64(self.applied_eps),
            fmt_f64(self.observed),
            self.verified
        )
    }

    pub fn from_jsonl(line: &str) -> Result<Self> {
        Ok(serde_json::from_str(line)?)
    }
}

/// Formats a real with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Running totals charged by the channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ledgers {
    pub rounds: u64,
    pub contamination_amount: f64,
    pub attack_count: u64,
    pub verification_count: u64,
    /// Verification requests the channel refused because its budget ran out.
    pub denied_verifications: u64,
    pub pull_counts: Vec<u64>,
    pub pseudo_regret: f64,
    /// `Σ_t r_t(i*) − r_t(i_t)` on the realized reward draws.
    pub sampled_regret: f64,
}

impl Ledgers {
    pub fn new(k: usize) -> Self {
        Self {
            rounds: 0,
            contamination_amount: 0.0,
            attack_count: 0,
            verification_count: 0,
            denied_verifications: 0,
            pull_counts: vec![0; k],
            pseudo_regret: 0.0,
            sampled_regret: 0.0,
        }
    }

    /// Charges one round. `gaps` are the instance gaps; `optimal_reward` is the
    /// realized reward of `i*` in this round.
    pub fn charge(&mut self, rec: &RoundRecord, gaps: &[f64], optimal_reward: f64) {
        self.rounds += 1;
        self.pull_counts[rec.arm.0] += 1;
        if rec.verified {
            self.verification_count += 1;
        }
        if rec.applied_eps != 0.0 {
            self.attack_count += 1;
            self.contamination_amount += rec.applied_eps.abs();
        }
        self.sampled_regret += optimal_reward - rec.true_reward;
        // Recomputed from the counts so that it matches `pseudo_regret` bit for bit.
        self.pseudo_regret = gap_weighted(gaps, &self.pull_counts);
    }

    pub fn target_fraction(&self, arm: ArmId) -> f64 {
        if self.rounds == 0 {
            0.0
        } else {
            self.pull_counts[arm.0] as f64 / self.rounds as f64
        }
    }
}

fn gap_weighted(gaps: &[f64], counts: &[u64]) -> f64 {
    gaps.iter().zip(counts).map(|(g, &n)| g * n as f64).sum()
}

/// Restricts a requested corruption to `[−r, 1 − r]`, keeping its sign.
pub fn clamp_corruption(true_reward: f64, requested_eps: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&true_reward) {
        return Err(Error::RewardOutOfRange { value: true_reward });
    }
    let mut eps = requested_eps.clamp(-true_reward, 1.0 - true_reward);
    // `1 - r` is inexact for r < 1/2; step down until the sum stays in range.
    while true_reward + eps > 1.0 {
        eps = eps.next_down();
    }
    // Normalize −0.0 so that "no corruption" has a single representation.
    Ok(if eps == 0.0 { 0.0 } else { eps })
}

/// Gap-weighted pseudo-regret `Σ_i Δ(i) N(i)`.
pub fn pseudo_regret(instance: &BanditInstance, pull_counts: &[u64]) -> Result<f64> {
    if pull_counts.len() != instance.k() {
        return Err(Error::LengthMismatch {
            expected: instance.k(),
            found: pull_counts.len(),
        });
    }
    Ok(gap_weighted(&instance.gaps(), pull_counts))
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8: the seed picks the key, the id picks the ChaCha stream,
/// so distinct pairs never share output blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

pub fn make_rng_streams(seed: u64, n: usize) -> Result<Vec<RngStream>> {
    if n == 0 {
        return Err(Error::NoStreams);
    }
    Ok((0..n as u64).map(|id| RngStream::new(seed, id)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn clamp_examples() {
        assert_eq!(clamp_corruption(0.7, -0.7).unwrap(), -0.7);
        assert_eq!(clamp_corruption(0.3, -0.5).unwrap(), -0.3);
        assert_eq!(clamp_corruption(1.0, 0.2).unwrap(), 0.0);
        assert!(matches!(
            clamp_corruption(1.2, 0.0),
            Err(Error::RewardOutOfRange { .. })
        ));
    }

    #[test]
    fn pseudo_regret_examples() {
        let inst = BanditInstance::bernoulli(vec![0.9, 0.8]).unwrap();
        let r = pseudo_regret(&inst, &[90, 10]).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert_eq!(pseudo_regret(&inst, &[100, 0]).unwrap(), 0.0);
        let flat = BanditInstance::bernoulli(vec![0.5, 0.5]).unwrap();
        assert_eq!(pseudo_regret(&flat, &[3, 7]).unwrap(), 0.0);
        assert!(matches!(
            pseudo_regret(&inst, &[1, 2, 3]),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn optimal_arm_ties_to_lowest() {
        let inst = BanditInstance::bernoulli(vec![0.4, 0.7, 0.7]).unwrap();
        assert_eq!(inst.optimal_arm(), ArmId(1));
        assert!(BanditInstance::bernoulli(vec![0.2, 1.3]).is_err());
        assert!(BanditInstance::bernoulli(vec![]).is_err());
    }

    #[test]
    fn rng_streams() {
        let s = make_rng_streams(42, 3).unwrap();
        assert_eq!(
            s,
            vec![
                RngStream::new(42, 0),
                RngStream::new(42, 1),
                RngStream::new(42, 2)
            ]
        );
        assert!(make_rng_streams(42, 0).is_err());

        let draw = |s: RngStream| -> Vec<u64> {
            let mut r = s.rng();
            (0..100).map(|_| r.random()).collect()
        };
        assert_eq!(draw(RngStream::new(42, 1)), draw(RngStream::new(42, 1)));
        let a = draw(RngStream::new(42, 1));
        let b = draw(RngStream::new(43, 1));
        let c = draw(RngStream::new(42, 2));
        assert!(a.iter().zip(&b).all(|(x, y)| x != y));
        assert!(a.iter().zip(&c).all(|(x, y)| x != y));
    }

    #[test]
    fn jsonl_row_shape() {
        let rec = RoundRecord {
            t: 3,
            arm: ArmId(1),
            true_reward: 0.7,
            applied_eps: -0.7,
            observed: 0.0,
            verified: false,
        };
        let line = rec.to_jsonl();
        assert!(line.starts_with("{\"t\":3,\"arm\":1,\"r_true\":6.9999999999999996e-1"));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        let keys: Vec<_> = v.as_object().unwrap().keys().cloned().collect();
        assert_eq!(keys.len(), 6);
    }

    proptest! {
        #[test]
        fn clamp_is_feasible_and_shrinks(r in 0.0f64..=1.0, eps in -3.0f64..3.0) {
            let a = clamp_corruption(r, eps).unwrap();
            prop_assert!((0.0..=1.0).contains(&(r + a)));
            prop_assert!(a.abs() <= eps.abs());
            prop_assert!(a == 0.0 || a.signum() == eps.signum());
            if (-r..=1.0 - r).contains(&eps) {
                prop_assert_eq!(a, if eps == 0.0 { 0.0 } else { eps });
            }
        }

        #[test]
        fn jsonl_round_trips_exactly(t in 1u64..1_000_000, arm in 0usize..8, r in 0.0f64..=1.0, e in -1.0f64..=1.0, v: bool) {
            let eps = clamp_corruption(r, e).unwrap();
            let rec = RoundRecord { t, arm: ArmId(arm), true_reward: r, applied_eps: eps, observed: r + eps, verified: v };
            let back = RoundRecord::from_jsonl(&rec.to_jsonl()).unwrap();
            prop_assert_eq!(back, rec);
        }
    }
}
