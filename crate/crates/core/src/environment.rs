//! Reward generators: i.i.d. bounded arms and fixed reward scripts.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::protocol::{ArmId, BanditInstance, RewardFamily};

#[derive(Clone, Debug, PartialEq)]
enum Source {
    Bernoulli,
    /// Per-arm support points and their cumulative probabilities.
    Discrete {
        support: Vec<Vec<f64>>,
        cumulative: Vec<Vec<f64>>,
    },
    /// `table[t - 1][arm]`.
    Scripted {
        table: Vec<Vec<f64>>,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Environment {
    instance: BanditInstance,
    source: Source,
}

impl Environment {
    pub fn bernoulli(means: Vec<f64>) -> Result<Self> {
        Ok(Self {
            instance: BanditInstance::new(means, RewardFamily::Bernoulli)?,
            source: Source::Bernoulli,
        })
    }

    /// Arms with finite support in `[0, 1]`; `probs[i]` must sum to one.
    pub fn discrete(support: Vec<Vec<f64>>, probs: Vec<Vec<f64>>) -> Result<Self> {
        if support.len() != probs.len() {
            return Err(Error::LengthMismatch {
                expected: support.len(),
                found: probs.len(),
            });
        }
        let mut means = Vec::with_capacity(support.len());
        let mut cumulative = Vec::with_capacity(support.len());
        for (i, (xs, ps)) in support.iter().zip(&probs).enumerate() {
            if xs.is_empty() || xs.len() != ps.len() {
                return Err(Error::InvalidInstance(format!(
                    "arm {i}: support and probabilities must be non-empty and of equal length"
                )));
            }
            if xs.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidInstance(format!(
                    "arm {i}: support point outside [0, 1]"
                )));
            }
            if ps.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidInstance(format!(
                    "arm {i}: probability outside [0, 1]"
                )));
            }
            let total: f64 = ps.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInstance(format!(
                    "arm {i}: probabilities sum to {total}"
                )));
            }
            means.push(
                xs.iter()
                    .zip(ps)
                    .map(|(x, p)| x * p)
                    .sum::<f64>()
                    .clamp(0.0, 1.0),
            );
            let mut acc = 0.0;
            cumulative.push(
                ps.iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect(),
            );
        }
        Ok(Self {
            instance: BanditInstance::new(means, RewardFamily::DiscreteSupport)?,
            source: Source::Discrete {
                support,
                cumulative,
            },
        })
    }

    /// A fixed reward table, one row per round. The instance means are the
    /// column averages, which is what regret is measured against.
    pub fn scripted(table: Vec<Vec<f64>>) -> Result<Self> {
        let k = table.first().map(Vec::len).unwrap_or(0);
        if table.is_empty() || k == 0 {
            return Err(Error::InvalidInstance("empty script".into()));
        }
        for (row, r) in table.iter().enumerate() {
            if r.len() != k {
                return Err(Error::InvalidInstance(format!(
                    "script row {} has {} arms, expected {k}",
                    row + 1,
                    r.len()
                )));
            }
            if r.iter().any(|x| !(0.0..=1.0).contains(x)) {
                return Err(Error::InvalidInstance(format!(
                    "script row {} has a reward outside [0, 1]",
                    row + 1
                )));
            }
        }
        let n = table.len() as f64;
        let means = (0..k)
            .map(|a| (table.iter().map(|r| r[a]).sum::<f64>() / n).clamp(0.0, 1.0))
            .collect();
        Ok(Self {
            instance: BanditInstance::new(means, RewardFamily::Scripted)?,
            source: Source::Scripted { table },
        })
    }

    /// Loads a script CSV with header `t,arm0,arm1,...`.
    pub fn from_script_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        if headers.get(0) != Some("t") || headers.len() < 2 {
            return Err(Error::Parse(
                "script header must be `t,arm0,arm1,...`".into(),
            ));
        }
        for (i, h) in headers.iter().skip(1).enumerate() {
            if h != format!("arm{i}") {
                return Err(Error::Parse(format!("unexpected script column `{h}`")));
            }
        }
        let mut table = Vec::new();
        for (row, record) in reader.records().enumerate() {
            let record = record?;
            let t: u64 = record[0]
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad round index on row {}", row + 1)))?;
            if t != row as u64 + 1 {
                return Err(Error::Parse(format!("row {} has t = {t}", row + 1)));
            }
            let rewards = record
                .iter()
                .skip(1)
                .map(|x| {
                    x.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Parse(format!("bad reward `{x}` at t = {t}")))
                })
                .collect::<Result<Vec<_>>>()?;
            table.push(rewards);
        }
        Self::scripted(table)
    }

    pub fn write_script_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let Source::Scripted { table } = &self.source else {
            return Err(Error::Parse(
                "only scripted environments can be written".into(),
            ));
        };
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["t".to_string()];
        header.extend((0..self.instance.k()).map(|i| format!("arm{i}")));
        w.write_record(&header)?;
        for (t, row) in table.iter().enumerate() {
            let mut rec = vec![(t + 1).to_string()];
            rec.extend(row.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn instance(&self) -> &BanditInstance {
        &self.instance
    }

    pub fn k(&self) -> usize {
        self.instance.k()
    }

    /// Number of rounds a script covers; `None` for stochastic arms.
    pub fn script_len(&self) -> Option<usize> {
        match &self.source {
            Source::Scripted { table } => Some(table.len()),
            _ => None,
        }
    }

    /// Draws the reward of `arm` at round `t` (1-based).
    pub fn sample_reward<R: Rng + ?Sized>(&self, arm: ArmId, t: u64, rng: &mut R) -> Result<f64> {
        self.instance.check_arm(arm)?;
        match &self.source {
            Source::Bernoulli => Ok(bernoulli(self.instance.means()[arm.0], rng)),
            Source::Discrete {
                support,
                cumulative,
            } => Ok(discrete(&support[arm.0], &cumulative[arm.0], rng)),
            Source::Scripted { table } => {
                let row = script_row(table, t)?;
                Ok(row[arm.0])
            }
        }
    }

    /// Draws every arm's reward for round `t` into `out`, arm 0 first.
    pub fn sample_all<R: Rng + ?Sized>(&self, t: u64, rng: &mut R, out: &mut [f64]) -> Result<()> {
        if out.len() != self.k() {
            return Err(Error::LengthMismatch {
                expected: self.k(),
                found: out.len(),
            });
        }
        match &self.source {
            Source::Bernoulli => {
                for (o, &m) in out.iter_mut().zip(self.instance.means()) {
                    *o = bernoulli(m, rng);
                }
            }
            Source::Discrete {
                support,
                cumulative,
            } => {
                for (i, o) in out.iter_mut().enumerate() {
                    *o = discrete(&support[i], &cumulative[i], rng);
                }
            }
            Source::Scripted { table } => out.copy_from_slice(script_row(table, t)?),
        }
        Ok(())
    }
}

fn script_row(table: &[Vec<f64>], t: u64) -> Result<&[f64]> {
    if t == 0 || t as usize > table.len() {
        return Err(Error::ScriptOutOfRange {
            t,
            len: table.len(),
        });
    }
    Ok(&table[t as usize - 1])
}

#[inline]
fn bernoulli<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> f64 {
    if rng.random::<f64>() < mean {
        1.0
    } else {
        0.0
    }
}

fn discrete<R: Rng + ?Sized>(support: &[f64], cumulative: &[f64], rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let idx = cumulative
        .partition_point(|&c| c <= u)
        .min(support.len() - 1);
    support[idx]
}

/// Script families for the conservativeness harness.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScriptKind {
    /// Arm 0 always pays 1, every other arm 0.
    ConstantBest,
    AllZero,
    /// Rewards flip between 0 and 1 each round, out of phase across arms.
    AlternatingExtremes,
    /// Independent uniform rewards from the given seed.
    SeededRandom(u64),
    /// Piecewise-constant extreme rewards with random block lengths.
    SeededBlocks(u64),
}

pub fn adversarial_script(kind: ScriptKind, k: usize, t_max: usize) -> Result<Environment> {
    if k < 2 {
        return Err(Error::param("k", "scripts need at least two arms"));
    }
    if t_max == 0 {
        return Err(Error::param("t_max", "must be at least 1"));
    }
    let table: Vec<Vec<f64>> = match kind {
        ScriptKind::ConstantBest => (0..t_max)
            .map(|_| (0..k).map(|a| if a == 0 { 1.0 } else { 0.0 }).collect())
            .collect(),
        ScriptKind::AllZero => vec![vec![0.0; k]; t_max],
        ScriptKind::AlternatingExtremes => (0..t_max)
            .map(|t| (0..k).map(|a| ((t + a) % 2) as f64).collect())
            .collect(),
        ScriptKind::SeededRandom(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..t_max)
                .map(|_| (0..k).map(|_| rng.random::<f64>()).collect())
                .collect()
        }
        ScriptKind::SeededBlocks(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut table = Vec::with_capacity(t_max);
            while table.len() < t_max {
                let len = 1usize << rng.random_range(0..14);
                let row: Vec<f64> = (0..k).map(|_| rng.random_range(0..2) as f64).collect();
                for _ in 0..len.min(t_max - table.len()) {
                    table.push(row.clone());
                }
            }
            table
        }
    };
    Environment::scripted(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn degenerate_bernoulli() {
        let env = Environment::bernoulli(vec![1.0, 0.0]).unwrap();
        let mut r = rng();
        for t in 1..100 {
            assert_eq!(env.sample_reward(ArmId(0), t, &mut r).unwrap(), 1.0);
            assert_eq!(env.sample_reward(ArmId(1), t, &mut r).unwrap(), 0.0);
        }
    }

    #[test]
    fn bernoulli_mean_concentrates() {
        let env = Environment::bernoulli(vec![0.3]).unwrap();
        let mut r = rng();
        let n = 100_000;
        let total: f64 = (1..=n)
            .map(|t| env.sample_reward(ArmId(0), t, &mut r).unwrap())
            .sum();
        let mean = total / n as f64;
        assert!((0.29..=0.31).contains(&mean), "mean {mean}");
    }

    #[test]
    fn discrete_support_draws_from_support() {
        let env =
            Environment::discrete(vec![vec![0.0, 0.5, 1.0]], vec![vec![0.2, 0.5, 0.3]]).unwrap();
        assert!((env.instance().means()[0] - 0.55).abs() < 1e-12);
        let mut r = rng();
        let n = 50_000;
        let mut hits = [0usize; 3];
        for t in 1..=n {
            let x = env.sample_reward(ArmId(0), t, &mut r).unwrap();
            let i = [0.0, 0.5, 1.0].iter().position(|&s| s == x).unwrap();
            hits[i] += 1;
        }
        let freq = hits[1] as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01);
        assert!(Environment::discrete(vec![vec![0.5]], vec![vec![0.7]]).is_err());
    }

    #[test]
    fn script_kinds() {
        let env = adversarial_script(ScriptKind::ConstantBest, 2, 10).unwrap();
        let mut r = rng();
        for t in 1..=10 {
            assert_eq!(env.sample_reward(ArmId(0), t, &mut r).unwrap(), 1.0);
            assert_eq!(env.sample_reward(ArmId(1), t, &mut r).unwrap(), 0.0);
        }
        assert!(matches!(
            env.sample_reward(ArmId(0), 11, &mut r),
            Err(Error::ScriptOutOfRange { t: 11, len: 10 })
        ));

        let zero = adversarial_script(ScriptKind::AllZero, 3, 5).unwrap();
        assert_eq!(zero.k(), 3);
        assert_eq!(zero.script_len(), Some(5));
        let mut row = [1.0; 3];
        for t in 1..=5 {
            zero.sample_all(t, &mut r, &mut row).unwrap();
            assert_eq!(row, [0.0; 3]);
        }

        let a = adversarial_script(ScriptKind::SeededRandom(9), 2, 100).unwrap();
        let b = adversarial_script(ScriptKind::SeededRandom(9), 2, 100).unwrap();
        assert_eq!(a, b);
        assert!(adversarial_script(ScriptKind::AllZero, 1, 5).is_err());
    }

    #[test]
    fn scripts_stay_in_unit_interval() {
        for kind in [
            ScriptKind::AlternatingExtremes,
            ScriptKind::SeededRandom(1),
            ScriptKind::SeededBlocks(2),
        ] {
            let env = adversarial_script(kind, 3, 500).unwrap();
            let mut r = rng();
            let mut row = [0.0; 3];
            for t in 1..=500 {
                env.sample_all(t, &mut r, &mut row).unwrap();
                assert!(row.iter().all(|x| (0.0..=1.0).contains(x)));
            }
        }
    }

    #[test]
    fn script_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("script.csv");
        let env = adversarial_script(ScriptKind::SeededRandom(3), 2, 20).unwrap();
        env.write_script_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("t,arm0,arm1\n1,"));
        assert_eq!(Environment::from_script_csv(&path).unwrap(), env);
    }
}
