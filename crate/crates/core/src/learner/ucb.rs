use rand_chacha::ChaCha8Rng;

use super::{check_reward, Learner, Selection};
use crate::error::Result;
use crate::protocol::{argmax_lowest, ArmId};

/// Classical UCB on observed rewards: round robin for the first `K` rounds,
/// then `argmax μ̂(i) + sqrt(8 ln t / N(i))`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ucb {
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl Ucb {
    pub fn new(k: usize) -> Self {
        Self {
            sums: vec![0.0; k],
            counts: vec![0; k],
        }
    }

    pub fn k(&self) -> usize {
        self.counts.len()
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

    /// Upper confidence index of `arm` given `ln t`.
    pub fn index(&self, arm: ArmId, ln_t: f64) -> f64 {
        match self.counts[arm.0] {
            0 => f64::INFINITY,
            n => self.mean(arm) + (8.0 * ln_t / n as f64).sqrt(),
        }
    }

    pub fn choose(&self, t: u64) -> ArmId {
        let k = self.k() as u64;
        if t <= k {
            return ArmId((t - 1) as usize);
        }
        let ln_t = (t as f64).ln();
        ArmId(argmax_lowest(
            (0..self.k()).map(|i| self.index(ArmId(i), ln_t)),
        ))
    }

    pub fn update(&mut self, arm: ArmId, observed: f64) -> Result<()> {
        check_reward(observed)?;
        self.sums[arm.0] += observed;
        self.counts[arm.0] += 1;
        Ok(())
    }
}

impl Learner for Ucb {
    fn select(&mut self, t: u64, _rng: &mut ChaCha8Rng) -> Selection {
        Selection {
            arm: self.choose(t),
            verify: false,
        }
    }

    fn observe(&mut self, _t: u64, arm: ArmId, observed: f64, _verified: bool) -> Result<()> {
        self.update(arm, observed)
    }

    fn name(&self) -> &'static str {
        "ucb"
    }
}
