use rand_chacha::ChaCha8Rng;

use super::{check_reward, Learner, Selection};
use crate::error::{Error, Result};
use crate::protocol::{argmax_lowest, ArmId};

/// UCB whose statistics come only from verified rounds.
///
/// Arms are chosen by `μ̂(i) + sqrt(400κ ln T / N(i))`. A pull is verified
/// while `N(i_t) ≤ 1200κ ln T / Δ̂*²`, where `Δ̂*` is the gap between the
/// largest lower confidence bound and the best competing upper bound
/// (radius `sqrt(3κ ln T / N)`). Unverified observations are discarded.
#[derive(Clone, Debug, PartialEq)]
pub struct SecureUcb {
    sums: Vec<f64>,
    counts: Vec<u64>,
    horizon: u64,
    kappa: f64,
    ln_horizon: f64,
    gap: f64,
}

impl SecureUcb {
    pub fn new(k: usize, horizon: u64, kappa: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k", "at least one arm"));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::param("kappa", "must be positive and finite"));
        }
        if horizon == 0 {
            return Err(Error::param("horizon", "must be at least 1"));
        }
        Ok(Self {
            sums: vec![0.0; k],
            counts: vec![0; k],
            horizon,
            kappa,
            ln_horizon: (horizon as f64).ln(),
            gap: 0.0,
        })
    }

    pub fn k(&self) -> usize {
        self.counts.len()
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn mean(&self, arm: ArmId) -> f64 {
        match self.counts[arm.0] {
            0 => 0.0,
            n => self.sums[arm.0] / n as f64,
        }
    }

    /// Cached `Δ̂*` as of the last verified update.
    pub fn cached_gap(&self) -> f64 {
        self.gap
    }

    /// Overrides verified statistics directly; used to pin down formula checks.
    pub fn set_stats(&mut self, means: &[f64], counts: &[u64]) -> Result<()> {
        if means.len() != self.k() || counts.len() != self.k() {
            return Err(Error::LengthMismatch {
                expected: self.k(),
                found: means.len().min(counts.len()),
            });
        }
        self.counts.copy_from_slice(counts);
        for (s, (m, &n)) in self.sums.iter_mut().zip(means.iter().zip(counts)) {
            *s = m * n as f64;
        }
        self.refresh_gap();
        Ok(())
    }

    /// Replaces `ln T` in every radius and threshold; see [`Self::set_stats`].
    pub fn set_log_horizon(&mut self, ln_horizon: f64) {
        self.ln_horizon = ln_horizon;
        self.refresh_gap();
    }

    fn radius(&self, coef: f64, arm: usize) -> f64 {
        (coef * self.kappa * self.ln_horizon / self.counts[arm] as f64).sqrt()
    }

    /// `Δ̂* = max{0, LCB(a*) − UCB(ã)}`; requires every arm to be verified once.
    pub fn gap_estimate(&self) -> Result<f64> {
        if let Some(i) = self.counts.iter().position(|&n| n == 0) {
            return Err(Error::param(
                "counts",
                format!("arm {i} has no verified pulls"),
            ));
        }
        let k = self.k();
        if k == 1 {
            return Ok(0.0);
        }
        let lcb = |i: usize| self.mean(ArmId(i)) - self.radius(3.0, i);
        let ucb = |i: usize| self.mean(ArmId(i)) + self.radius(3.0, i);
        let leader = argmax_lowest((0..k).map(lcb));
        let mut rival = usize::MAX;
        let mut rival_ucb = f64::NEG_INFINITY;
        for i in (0..k).filter(|&i| i != leader) {
            let u = ucb(i);
            if u > rival_ucb {
                rival = i;
                rival_ucb = u;
            }
        }
        debug_assert!(rival < k);
        Ok((lcb(leader) - rival_ucb).max(0.0))
    }

    fn refresh_gap(&mut self) {
        self.gap = self.gap_estimate().unwrap_or(0.0);
    }

    /// Verification threshold `1200κ ln T / Δ̂*²`; infinite when `Δ̂* = 0`.
    pub fn verification_threshold(&self) -> f64 {
        if self.gap == 0.0 {
            f64::INFINITY
        } else {
            1200.0 * self.kappa * self.ln_horizon / (self.gap * self.gap)
        }
    }

    pub fn step(&self, t: u64) -> Selection {
        let k = self.k() as u64;
        if t <= k {
            return Selection {
                arm: ArmId((t - 1) as usize),
                verify: true,
            };
        }
        let arm = argmax_lowest((0..self.k()).map(|i| match self.counts[i] {
            0 => f64::INFINITY,
            _ => self.mean(ArmId(i)) + self.radius(400.0, i),
        }));
        Selection {
            arm: ArmId(arm),
            verify: self.counts[arm] as f64 <= self.verification_threshold(),
        }
    }

    pub fn update(&mut self, arm: ArmId, observed: f64, verified: bool) -> Result<()> {
        check_reward(observed)?;
        if verified {
            self.sums[arm.0] += observed;
            self.counts[arm.0] += 1;
            self.refresh_gap();
        }
        Ok(())
    }
}

impl Learner for SecureUcb {
    fn select(&mut self, t: u64, _rng: &mut ChaCha8Rng) -> Selection {
        self.step(t)
    }

    fn observe(&mut self, _t: u64, arm: ArmId, observed: f64, verified: bool) -> Result<()> {
        self.update(arm, observed, verified)
    }

    fn name(&self) -> &'static str {
        "secure_ucb"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// State with `ln T` exactly 5 (T need not be an integer for the formula).
    fn with_ln_t(ln_t: f64, means: &[f64], counts: &[u64]) -> SecureUcb {
        let mut s = SecureUcb::new(means.len(), 100, 1.0).unwrap();
        s.ln_horizon = ln_t;
        s.set_stats(means, counts).unwrap();
        s
    }

    #[test]
    fn gap_estimate_positive_case() {
        let s = with_ln_t(5.0, &[0.9, 0.5], &[1000, 1000]);
        let rad = (15.0f64 / 1000.0).sqrt();
        let oracle = (0.9 - rad) - (0.5 + rad);
        let got = s.gap_estimate().unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
        assert!((got - 0.15505).abs() < 1e-5);
    }

    #[test]
    fn gap_estimate_clamps_to_zero() {
        let s = with_ln_t(5.0, &[0.9, 0.5], &[100, 100]);
        let rad = (15.0f64 / 100.0).sqrt();
        assert!((rad - 0.38730).abs() < 1e-5);
        assert!(0.9 - rad < 0.5 + rad);
        assert_eq!(s.gap_estimate().unwrap(), 0.0);
        let same = with_ln_t(5.0, &[0.7, 0.7], &[500, 500]);
        assert_eq!(same.gap_estimate().unwrap(), 0.0);
        let fresh = SecureUcb::new(2, 100, 1.0).unwrap();
        assert!(fresh.gap_estimate().is_err());
    }

    #[test]
    fn zero_gap_always_verifies() {
        let s = with_ln_t(5.0, &[0.6, 0.6], &[10, 10]);
        assert_eq!(s.cached_gap(), 0.0);
        assert!(s.step(10).verify);
    }

    #[test]
    fn verification_threshold_gate() {
        let mut s = with_ln_t(10.0, &[0.9, 0.1], &[100, 100]);
        s.gap = 0.5;
        let threshold = 1200.0 * 10.0 / 0.25;
        assert_eq!(s.verification_threshold(), threshold);
        assert_eq!(threshold, 48000.0);
        assert_eq!(
            s.step(500),
            Selection {
                arm: ArmId(0),
                verify: true
            }
        );

        s.counts = vec![48001, 48001];
        s.sums = vec![0.9 * 48001.0, 0.1 * 48001.0];
        let sel = s.step(500);
        assert_eq!(
            sel,
            Selection {
                arm: ArmId(0),
                verify: false
            }
        );
        let before = s.clone();
        s.update(sel.arm, 0.0, false).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn warm_up_verifies_round_robin() {
        let s = SecureUcb::new(3, 1000, 1.0).unwrap();
        for t in 1..=3 {
            assert_eq!(
                s.step(t),
                Selection {
                    arm: ArmId(t as usize - 1),
                    verify: true
                }
            );
        }
    }

    proptest! {
        #[test]
        fn only_verified_rounds_move_state(obs in proptest::collection::vec((0usize..3, 0.0f64..=1.0, any::<bool>()), 1..200)) {
            let mut s = SecureUcb::new(3, 10_000, 0.1).unwrap();
            for (arm, x, v) in obs {
                let before = s.clone();
                s.update(ArmId(arm), x, v).unwrap();
                if !v {
                    prop_assert_eq!(&s, &before);
                }
                prop_assert!(s.cached_gap() >= 0.0);
            }
        }
    }
}
