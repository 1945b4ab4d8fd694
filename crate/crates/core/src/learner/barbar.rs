//! Secure-BARBAR: epoch-based arm elimination whose per-epoch reward
//! estimates are clipped into a band around verified means.
//!
//! Epoch `m` plays arm `i` with probability `n_i / N` where
//! `n_i = ⌈λ (Δ_i^{m-1})^{-2}⌉`. At the end of the epoch each arm's estimate
//! `r_i = S_i / n_i` is clipped to `μ_i^B ± (Δ_i/16 + sqrt(ln(2/β) / 2n_B))`
//! unless every pull of that arm was verified, and the new gaps are
//! `Δ_i^m = max{2^{-m}, r* − r_i}` with `r* = max_i (r_i − Δ_i^{m-1}/16)`.
//! A zero budget gives plain BARBAR: unclipped estimates, no verification.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_reward, Diagnostics, Learner, Selection};
use crate::error::{Error, Result};
use crate::protocol::ArmId;

/// Where the verification budget is spent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerificationPlacement {
    /// The first `B` rounds are verified round-robin pulls that fix `μ_i^B`;
    /// epochs start afterwards.
    #[default]
    Phase1,
    /// Epochs start at round 1 and each arm's first `⌊B/K⌋` epoch pulls are
    /// verified; `μ_i^B` is the running verified mean.
    InEpoch,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarbarParams {
    pub k: usize,
    pub horizon: u64,
    pub delta: f64,
    pub beta: f64,
    pub budget: u64,
    pub kappa_lambda: f64,
    pub placement: VerificationPlacement,
}

impl BarbarParams {
    /// `λ = 1024 κ_λ ln((8K/δ) log₂ T)`.
    pub fn lambda(&self) -> f64 {
        1024.0
            * self.kappa_lambda
            * ((8.0 * self.k as f64 / self.delta) * (self.horizon as f64).log2()).ln()
    }

    /// Per-arm verification allowance `⌊B/K⌋`.
    pub fn per_arm_budget(&self) -> u64 {
        self.budget / self.k as u64
    }
}

/// What happened when an epoch closed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochClose {
    pub epoch: u32,
    /// Last round of the epoch.
    pub end_round: u64,
    pub planned: Vec<u64>,
    pub pulls: Vec<u64>,
    pub estimates: Vec<f64>,
    pub r_star: f64,
    pub gaps: Vec<f64>,
}

/// Clipped epoch estimate for one arm.
///
/// `verified_mean` is `None` when no verified information exists (plain
/// BARBAR or an arm never verified), in which case the raw estimate is used.
pub fn epoch_estimate(
    empirical: f64,
    all_verified: bool,
    verified_mean: Option<f64>,
    prev_gap: f64,
    beta: f64,
    n_b: u64,
) -> f64 {
    let Some(mu_b) = verified_mean else {
        return empirical;
    };
    if all_verified {
        return empirical;
    }
    let band = prev_gap / 16.0 + ((2.0 / beta).ln() / (2.0 * n_b as f64)).sqrt();
    if empirical >= mu_b {
        empirical.min(mu_b + band)
    } else {
        empirical.max(mu_b - band)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Barbar {
    params: BarbarParams,
    lambda: f64,
    n_b: u64,
    /// Rounds `1..=phase1_end` belong to Phase 1 (0 when there is none).
    phase1_end: u64,
    verified_sums: Vec<f64>,
    verified_counts: Vec<u64>,
    /// Verifications still available per arm in `InEpoch` placement.
    allowance: Vec<u64>,
    epoch: u32,
    prev_gaps: Vec<f64>,
    planned: Vec<u64>,
    cumulative: Vec<u64>,
    epoch_end: u64,
    epoch_sums: Vec<f64>,
    epoch_pulls: Vec<u64>,
    epoch_verified: Vec<u64>,
    history: Vec<EpochClose>,
}

impl Barbar {
    pub fn new(params: BarbarParams) -> Result<Self> {
        let BarbarParams {
            k,
            horizon,
            delta,
            beta,
            budget,
            kappa_lambda,
            placement,
        } = params;
        if k < 2 {
            return Err(Error::param("k", "BARBAR needs at least two arms"));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::param("delta", "must lie in (0, 1)"));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::param("beta", "must lie in (0, 1)"));
        }
        if horizon < 2 {
            return Err(Error::param(
                "horizon",
                "log2 T must be positive; need T >= 2",
            ));
        }
        if budget > horizon {
            return Err(Error::param("budget", "B may not exceed the horizon"));
        }
        if !(kappa_lambda > 0.0 && kappa_lambda.is_finite()) {
            return Err(Error::param("kappa_lambda", "must be positive and finite"));
        }
        let n_b = params.per_arm_budget();
        if budget > 0 && n_b == 0 {
            log::warn!(
                "verification budget {budget} is smaller than K = {k}; no arm gets a verified mean"
            );
        }
        let phase1_end = match placement {
            VerificationPlacement::Phase1 => budget,
            VerificationPlacement::InEpoch => 0,
        };
        let allowance = match placement {
            VerificationPlacement::Phase1 => vec![0; k],
            VerificationPlacement::InEpoch => vec![n_b; k],
        };
        let mut state = Self {
            params,
            lambda: params.lambda(),
            n_b,
            phase1_end,
            verified_sums: vec![0.0; k],
            verified_counts: vec![0; k],
            allowance,
            epoch: 0,
            prev_gaps: vec![1.0; k],
            planned: vec![0; k],
            cumulative: vec![0; k],
            epoch_end: phase1_end,
            epoch_sums: vec![0.0; k],
            epoch_pulls: vec![0; k],
            epoch_verified: vec![0; k],
            history: Vec::new(),
        };
        state.open_epoch();
        Ok(state)
    }

    pub fn params(&self) -> &BarbarParams {
        &self.params
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n_b(&self) -> u64 {
        self.n_b
    }

    pub fn phase1_end(&self) -> u64 {
        self.phase1_end
    }

    /// Index of the epoch currently being played (1-based).
    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn planned(&self) -> &[u64] {
        &self.planned
    }

    pub fn epoch_end(&self) -> u64 {
        self.epoch_end
    }

    /// `Δ^{m-1}` used to plan the current epoch.
    pub fn gaps(&self) -> &[f64] {
        &self.prev_gaps
    }

    pub fn history(&self) -> &[EpochClose] {
        &self.history
    }

    pub fn verified_mean(&self, arm: ArmId) -> Option<f64> {
        let n = self.verified_counts[arm.0];
        (self.params.budget > 0 && n > 0).then(|| self.verified_sums[arm.0] / n as f64)
    }

    fn open_epoch(&mut self) {
        self.epoch += 1;
        let mut acc = 0u64;
        for (i, &gap) in self.prev_gaps.iter().enumerate() {
            // f64 -> u64 casts saturate, which only matters far past any horizon.
            let n = (self.lambda / (gap * gap)).ceil().max(1.0) as u64;
            self.planned[i] = n;
            acc = acc.saturating_add(n);
            self.cumulative[i] = acc;
        }
        self.epoch_end = self.epoch_end.saturating_add(acc);
        self.epoch_sums.iter_mut().for_each(|s| *s = 0.0);
        self.epoch_pulls.iter_mut().for_each(|n| *n = 0);
        self.epoch_verified.iter_mut().for_each(|n| *n = 0);
    }

    /// Closes the current epoch from its accumulated sums and opens the next.
    pub fn close_epoch(&mut self) {
        let m = self.epoch;
        let estimates: Vec<f64> = (0..self.params.k)
            .map(|i| {
                let empirical = self.epoch_sums[i] / self.planned[i] as f64;
                let all_verified =
                    self.epoch_pulls[i] > 0 && self.epoch_verified[i] == self.epoch_pulls[i];
                epoch_estimate(
                    empirical,
                    all_verified,
                    self.verified_mean(ArmId(i)),
                    self.prev_gaps[i],
                    self.params.beta,
                    self.n_b,
                )
            })
            .collect();
        let (r_star, gaps) = next_gaps(&estimates, &self.prev_gaps, m);
        self.history.push(EpochClose {
            epoch: m,
            end_round: self.epoch_end,
            planned: self.planned.clone(),
            pulls: self.epoch_pulls.clone(),
            estimates,
            r_star,
            gaps: gaps.clone(),
        });
        self.prev_gaps = gaps;
        self.open_epoch();
    }

    fn sample_arm(&self, rng: &mut ChaCha8Rng) -> ArmId {
        let total = *self.cumulative.last().expect("k >= 2");
        let u = rng.random_range(0..total);
        ArmId(self.cumulative.partition_point(|&c| c <= u))
    }

    pub fn choose(&mut self, t: u64, rng: &mut ChaCha8Rng) -> Selection {
        if t <= self.phase1_end {
            return Selection {
                arm: ArmId(((t - 1) % self.params.k as u64) as usize),
                verify: true,
            };
        }
        let arm = self.sample_arm(rng);
        let verify = self.allowance[arm.0] > 0;
        if verify {
            self.allowance[arm.0] -= 1;
        }
        Selection { arm, verify }
    }

    pub fn update(&mut self, t: u64, arm: ArmId, observed: f64, verified: bool) -> Result<()> {
        check_reward(observed)?;
        if verified {
            self.verified_sums[arm.0] += observed;
            self.verified_counts[arm.0] += 1;
        }
        if t <= self.phase1_end {
            return Ok(());
        }
        self.epoch_sums[arm.0] += observed;
        self.epoch_pulls[arm.0] += 1;
        if verified {
            self.epoch_verified[arm.0] += 1;
        }
        if t == self.epoch_end {
            self.close_epoch();
        }
        Ok(())
    }

    /// Overrides the epoch accumulators; used by formula checks.
    pub fn set_epoch_stats(&mut self, sums: &[f64], pulls: &[u64], verified: &[u64]) {
        self.epoch_sums.copy_from_slice(sums);
        self.epoch_pulls.copy_from_slice(pulls);
        self.epoch_verified.copy_from_slice(verified);
    }
}

/// `r* = max_i (r_i − Δ_i/16)` and `Δ_i^m = max{2^{-m}, r* − r_i}`.
pub fn next_gaps(estimates: &[f64], prev_gaps: &[f64], m: u32) -> (f64, Vec<f64>) {
    let r_star = estimates
        .iter()
        .zip(prev_gaps)
        .map(|(r, g)| r - g / 16.0)
        .fold(f64::NEG_INFINITY, f64::max);
    let floor = 0.5f64.powi(m as i32);
    let gaps = estimates.iter().map(|r| floor.max(r_star - r)).collect();
    (r_star, gaps)
}

impl Learner for Barbar {
    fn select(&mut self, t: u64, rng: &mut ChaCha8Rng) -> Selection {
        self.choose(t, rng)
    }

    fn observe(&mut self, t: u64, arm: ArmId, observed: f64, verified: bool) -> Result<()> {
        self.update(t, arm, observed, verified)
    }

    fn name(&self) -> &'static str {
        if self.params.budget == 0 {
            "barbar"
        } else {
            "secure_barbar"
        }
    }

    fn diagnostics(&self) -> Diagnostics {
        Diagnostics::Barbar {
            epochs: self.history.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn params(k: usize, horizon: u64, budget: u64) -> BarbarParams {
        BarbarParams {
            k,
            horizon,
            delta: 0.1,
            beta: 0.1,
            budget,
            kappa_lambda: 1.0,
            placement: VerificationPlacement::Phase1,
        }
    }

    #[test]
    fn lambda_value() {
        let oracle = 1024.0 * 1600f64.ln();
        let got = params(2, 1024, 0).lambda();
        assert!((got - oracle).abs() <= 1e-12 * oracle);
        assert!((got - 7554.825).abs() < 5e-4);
    }

    #[test]
    fn init_schedule() {
        let b = Barbar::new(params(4, 100_000, 100)).unwrap();
        assert_eq!(b.n_b(), 25);
        assert_eq!(b.phase1_end(), 100);
        assert_eq!(b.gaps(), &[1.0; 4]);
        assert_eq!(b.epoch(), 1);
        let n1 = b.lambda().ceil() as u64;
        assert_eq!(b.planned(), &[n1; 4]);
        assert_eq!(b.epoch_end(), 100 + 4 * n1);
    }

    #[test]
    fn init_rejects_bad_parameters() {
        assert!(Barbar::new(params(1, 1000, 0)).is_err());
        assert!(Barbar::new(BarbarParams {
            delta: 1.0,
            ..params(2, 1000, 0)
        })
        .is_err());
        assert!(Barbar::new(BarbarParams {
            beta: 0.0,
            ..params(2, 1000, 0)
        })
        .is_err());
        assert!(Barbar::new(params(2, 1000, 2000)).is_err());
        // Budget below K only warns.
        let b = Barbar::new(params(4, 1000, 3)).unwrap();
        assert_eq!(b.n_b(), 0);
    }

    #[test]
    fn clip_upper_band() {
        let band = 0.25 / 16.0 + ((20.0f64).ln() / 100.0).sqrt();
        let oracle = 0.6 + band;
        let got = epoch_estimate(0.95, false, Some(0.6), 0.25, 0.1, 50);
        assert!((got - oracle).abs() <= 1e-12 * oracle);
        assert!((got - 0.78871).abs() < 1e-5);
        // The lower side mirrors it.
        let low = epoch_estimate(0.1, false, Some(0.6), 0.25, 0.1, 50);
        assert!((low - (0.6 - band)).abs() < 1e-15);
        // Inside the band or fully verified: untouched.
        assert_eq!(epoch_estimate(0.65, false, Some(0.6), 0.25, 0.1, 50), 0.65);
        assert_eq!(epoch_estimate(0.95, true, Some(0.6), 0.25, 0.1, 50), 0.95);
        assert_eq!(epoch_estimate(0.95, false, None, 0.25, 0.1, 50), 0.95);
    }

    #[test]
    fn gap_update_tables() {
        let (r_star, gaps) = next_gaps(&[0.8, 0.55], &[1.0, 1.0], 1);
        assert!((r_star - 0.7375).abs() < 1e-15);
        assert_eq!(gaps, vec![0.5, 0.5]);

        let (r_star, gaps) = next_gaps(&[0.8, 0.55], &[0.25, 0.25], 3);
        assert!((r_star - 0.784375).abs() < 1e-15);
        assert_eq!(gaps[0], 0.125);
        assert!((gaps[1] - 0.234375).abs() < 1e-15);
    }

    #[test]
    fn phase1_is_verified_round_robin() {
        let mut b = Barbar::new(params(2, 10_000, 6)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for t in 1..=6 {
            let s = b.choose(t, &mut rng);
            assert_eq!(
                s,
                Selection {
                    arm: ArmId((t as usize - 1) % 2),
                    verify: true
                }
            );
            b.update(t, s.arm, 1.0, true).unwrap();
        }
        assert_eq!(b.verified_mean(ArmId(0)), Some(1.0));
        let s = b.choose(7, &mut rng);
        assert!(!s.verify);
        assert_eq!(b.choose(1, &mut rng).arm, ArmId(0));
    }

    #[test]
    fn epoch_sampling_frequency() {
        let mut b = Barbar::new(params(2, 1 << 40, 0)).unwrap();
        b.planned = vec![75, 25];
        b.cumulative = vec![75, 100];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let zeros = (0..n)
            .filter(|_| b.sample_arm(&mut rng) == ArmId(0))
            .count();
        let freq = zeros as f64 / n as f64;
        assert!((0.74..=0.76).contains(&freq), "{freq}");
    }

    #[test]
    fn epochs_keep_gap_floor() {
        let mut b = Barbar::new(BarbarParams {
            kappa_lambda: 0.01,
            ..params(3, 200_000, 30)
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let means = [0.9, 0.6, 0.3];
        for t in 1..=200_000 {
            let s = b.choose(t, &mut rng);
            let r = if rng.random::<f64>() < means[s.arm.0] {
                1.0
            } else {
                0.0
            };
            b.update(t, s.arm, r, s.verify).unwrap();
        }
        assert!(b.history().len() >= 4);
        for close in b.history() {
            let floor = 0.5f64.powi(close.epoch as i32);
            let min = close.gaps.iter().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(min, floor);
            assert!(close.gaps.iter().all(|&g| g >= floor));
            assert_eq!(
                close.pulls.iter().sum::<u64>(),
                close.planned.iter().sum::<u64>()
            );
        }
    }

    #[test]
    fn in_epoch_placement_spends_allowance_first() {
        let mut b = Barbar::new(BarbarParams {
            placement: VerificationPlacement::InEpoch,
            ..params(2, 100_000, 10)
        })
        .unwrap();
        assert_eq!(b.phase1_end(), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut verified = [0u64; 2];
        for t in 1..=2000 {
            let s = b.choose(t, &mut rng);
            if s.verify {
                verified[s.arm.0] += 1;
            }
            b.update(t, s.arm, 0.5, s.verify).unwrap();
        }
        assert_eq!(verified, [5, 5]);
    }
}
