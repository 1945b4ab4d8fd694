use rand_chacha::ChaCha8Rng;

use super::{check_reward, Diagnostics, Learner, Selection};
use crate::error::{Error, Result};
use crate::protocol::ArmId;

/// Successive-elimination radius after `s` verified sweeps:
/// `sqrt(ln(4K s² / δ) / (2s))`.
pub fn elimination_radius(k: usize, sweeps: u64, delta: f64) -> f64 {
    let s = sweeps as f64;
    ((4.0 * k as f64 * s * s / delta).ln() / (2.0 * s)).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Explore,
    Committed { arm: ArmId, since: u64 },
}

/// Explore-then-commit where exploration is fixed-confidence best-arm
/// identification on verified pulls only, and exploitation never verifies.
#[derive(Clone, Debug, PartialEq)]
pub struct SecureEtc {
    sums: Vec<f64>,
    counts: Vec<u64>,
    active: Vec<ArmId>,
    sweeps: u64,
    delta: f64,
    phase: Phase,
}

impl SecureEtc {
    pub fn new(k: usize, delta: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::param("k", "at least one arm"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        let phase = if k == 1 {
            Phase::Committed {
                arm: ArmId(0),
                since: 1,
            }
        } else {
            Phase::Explore
        };
        Ok(Self {
            sums: vec![0.0; k],
            counts: vec![0; k],
            active: (0..k).map(ArmId).collect(),
            sweeps: 0,
            delta,
            phase,
        })
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn active(&self) -> &[ArmId] {
        &self.active
    }

    pub fn sweeps(&self) -> u64 {
        self.sweeps
    }

    fn mean(&self, arm: ArmId) -> f64 {
        match self.counts[arm.0] {
            0 => 0.0,
            n => self.sums[arm.0] / n as f64,
        }
    }

    pub fn step(&self) -> Selection {
        match self.phase {
            Phase::Committed { arm, .. } => Selection { arm, verify: false },
            Phase::Explore => {
                // Round robin over survivors: the least-sampled active arm.
                let arm = *self
                    .active
                    .iter()
                    .min_by_key(|a| (self.counts[a.0], a.0))
                    .expect("explore phase keeps at least two arms");
                Selection { arm, verify: true }
            }
        }
    }

    pub fn update(&mut self, t: u64, arm: ArmId, observed: f64, verified: bool) -> Result<()> {
        check_reward(observed)?;
        if self.phase != Phase::Explore || !verified {
            return Ok(());
        }
        self.sums[arm.0] += observed;
        self.counts[arm.0] += 1;
        let completed = self
            .active
            .iter()
            .map(|a| self.counts[a.0])
            .min()
            .unwrap_or(0);
        if completed > self.sweeps {
            self.sweeps = completed;
            self.eliminate();
            if let [survivor] = self.active[..] {
                self.phase = Phase::Committed {
                    arm: survivor,
                    since: t + 1,
                };
            }
        }
        Ok(())
    }

    fn eliminate(&mut self) {
        let radius = elimination_radius(self.sums.len(), self.sweeps, self.delta);
        let best = self
            .active
            .iter()
            .map(|&a| self.mean(a))
            .fold(f64::NEG_INFINITY, f64::max);
        let means: Vec<f64> = self.active.iter().map(|&a| self.mean(a)).collect();
        let mut i = 0;
        self.active.retain(|_| {
            let keep = best - means[i] <= 2.0 * radius;
            i += 1;
            keep
        });
    }
}

impl Learner for SecureEtc {
    fn select(&mut self, _t: u64, _rng: &mut ChaCha8Rng) -> Selection {
        self.step()
    }

    fn observe(&mut self, t: u64, arm: ArmId, observed: f64, verified: bool) -> Result<()> {
        self.update(t, arm, observed, verified)
    }

    fn name(&self) -> &'static str {
        "secure_etc"
    }

    fn diagnostics(&self) -> Diagnostics {
        match self.phase {
            Phase::Explore => Diagnostics::Etc {
                committed: None,
                commit_round: None,
            },
            Phase::Committed { arm, since } => Diagnostics::Etc {
                committed: Some(arm),
                commit_round: Some(since),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_value() {
        let oracle = ((8.0e6f64).ln() / 200.0).sqrt();
        let got = elimination_radius(2, 100, 0.01);
        assert!((got - oracle).abs() <= 1e-12 * oracle);
        assert!((got - 0.28192).abs() < 1e-5);
    }

    #[test]
    fn explore_verifies_and_commits_to_survivor() {
        let mut etc = SecureEtc::new(2, 0.01).unwrap();
        let mut t = 1;
        while etc.phase() == Phase::Explore {
            let s = etc.step();
            assert!(s.verify);
            let r = if s.arm.0 == 0 { 1.0 } else { 0.0 };
            etc.update(t, s.arm, r, true).unwrap();
            t += 1;
        }
        let Phase::Committed { arm, since } = etc.phase() else {
            unreachable!()
        };
        assert_eq!(arm, ArmId(0));
        assert_eq!(since, t);
        assert_eq!(etc.active(), &[ArmId(0)]);
        // Committed: no verification, observations ignored.
        for _ in 0..10 {
            let s = etc.step();
            assert_eq!(
                s,
                Selection {
                    arm: ArmId(0),
                    verify: false
                }
            );
            etc.update(t, s.arm, 0.0, false).unwrap();
            t += 1;
        }
    }

    #[test]
    fn elimination_needs_twice_the_radius() {
        // 1 vs 0 separates once 2·radius < 1.
        let mut etc = SecureEtc::new(2, 0.01).unwrap();
        for t in 1.. {
            let s = etc.step();
            etc.update(t, s.arm, if s.arm.0 == 0 { 1.0 } else { 0.0 }, true)
                .unwrap();
            if etc.phase() != Phase::Explore {
                break;
            }
        }
        let s = etc.sweeps();
        assert!(2.0 * elimination_radius(2, s, 0.01) < 1.0);
        assert!(2.0 * elimination_radius(2, s - 1, 0.01) >= 1.0);
    }

    #[test]
    fn single_arm_is_committed() {
        let etc = SecureEtc::new(1, 0.1).unwrap();
        assert_eq!(
            etc.step(),
            Selection {
                arm: ArmId(0),
                verify: false
            }
        );
    }

    #[test]
    fn identical_arms_keep_exploring() {
        let mut etc = SecureEtc::new(2, 1e-4).unwrap();
        for t in 1..=5000 {
            let s = etc.step();
            assert!(s.verify);
            etc.update(t, s.arm, 0.5, true).unwrap();
        }
        assert_eq!(etc.phase(), Phase::Explore);
    }

    #[test]
    fn denied_verification_is_not_counted() {
        let mut etc = SecureEtc::new(2, 0.1).unwrap();
        let s = etc.step();
        etc.update(1, s.arm, 1.0, false).unwrap();
        assert_eq!(etc.step(), s);
    }
}
