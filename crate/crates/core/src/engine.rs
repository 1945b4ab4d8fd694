//! Round loop, seeded trial batches and the UCB conservativeness harness.
//!
//! Per round: weak pre-commit, learner select, environment draw, channel
//! transmit, learner observe, ledgers. Each trial derives three sub-streams
//! from its `(seed, trial_id)` stream, in the fixed order environment,
//! attacker, learner.

use std::path::PathBuf;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{summarize, ExperimentSummary};
use crate::attack::{Adversary, AttackerSpec, ContaminationBudget};
use crate::channel::{Channel, VerificationBudget};
use crate::environment::{adversarial_script, Environment, ScriptKind};
use crate::error::{Error, Result};
use crate::learner::{Diagnostics, Learner, LearnerSpec, Sequenced, Ucb};
use crate::protocol::{ArmId, Ledgers, RngStream, RoundRecord};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceEmission {
    Full,
    #[default]
    #[serde(alias = "summary")]
    SummaryOnly,
}

/// How the environment is specified in a config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    Bernoulli {
        means: Vec<f64>,
    },
    DiscreteSupport {
        support: Vec<Vec<f64>>,
        probs: Vec<Vec<f64>>,
    },
    /// A reward table loaded from CSV (`t,arm0,arm1,...`).
    Scripted {
        script: PathBuf,
    },
}

impl InstanceSpec {
    pub fn build(&self) -> Result<Environment> {
        match self {
            InstanceSpec::Bernoulli { means } => Environment::bernoulli(means.clone()),
            InstanceSpec::DiscreteSupport { support, probs } => {
                Environment::discrete(support.clone(), probs.clone())
            }
            InstanceSpec::Scripted { script } => Environment::from_script_csv(script),
        }
    }
}

fn default_trials() -> u64 {
    32
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub learner: LearnerSpec,
    #[serde(default)]
    pub attacker: AttackerSpec,
    pub horizon: u64,
    /// Channel-side verification cap; unlimited when absent.
    #[serde(default)]
    pub verification_budget: Option<u64>,
    /// Deterministic contamination budget `C`; unlimited when absent.
    #[serde(default)]
    pub contamination_budget: Option<f64>,
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub trace: TraceEmission,
}

impl ExperimentConfig {
    /// A config with defaults for everything but the essentials.
    pub fn new(
        means: Vec<f64>,
        learner: LearnerSpec,
        attacker: AttackerSpec,
        horizon: u64,
    ) -> Self {
        Self {
            instance: InstanceSpec::Bernoulli { means },
            learner,
            attacker,
            horizon,
            verification_budget: None,
            contamination_budget: None,
            trials: default_trials(),
            seed: 0,
            trace: TraceEmission::SummaryOnly,
        }
    }

    pub fn verification(&self) -> VerificationBudget {
        match self.verification_budget {
            Some(b) => VerificationBudget::fixed(b),
            None => VerificationBudget::unlimited(),
        }
    }

    pub fn contamination(&self) -> ContaminationBudget {
        match self.contamination_budget {
            Some(c) => ContaminationBudget::deterministic(c),
            None => ContaminationBudget::unlimited(),
        }
    }

    pub fn trial_stream(&self, trial_id: u64) -> RngStream {
        RngStream::new(self.seed, trial_id)
    }
}

/// Cumulative metrics at one checkpoint round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: u64,
    pub pseudo_regret: f64,
    pub sampled_regret: f64,
    pub verifications: u64,
    pub contamination: f64,
    pub attack_count: u64,
}

impl Snapshot {
    fn of(t: u64, l: &Ledgers) -> Self {
        Self {
            t,
            pseudo_regret: l.pseudo_regret,
            sampled_regret: l.sampled_regret,
            verifications: l.verification_count,
            contamination: l.contamination_amount,
            attack_count: l.attack_count,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial_id: u64,
    pub ledgers: Ledgers,
    pub snapshots: Vec<Snapshot>,
    pub diagnostics: Diagnostics,
    pub last_verified_round: Option<u64>,
    /// Per-round records, kept only with full trace emission.
    pub trace: Option<Vec<RoundRecord>>,
}

/// `{⌈T 2^{-j}⌉}` together with the powers of ten up to `T`.
pub fn checkpoints(horizon: u64) -> Vec<u64> {
    let mut pts = Vec::new();
    let mut j = 0;
    loop {
        let t = (horizon as f64 / 2f64.powi(j)).ceil() as u64;
        pts.push(t.max(1));
        if t <= 1 {
            break;
        }
        j += 1;
    }
    let mut decade = 10u64;
    while decade <= horizon {
        pts.push(decade);
        decade = decade.saturating_mul(10);
    }
    pts.sort_unstable();
    pts.dedup();
    pts
}

/// Independent generators for one trial, in the fixed split order.
pub struct TrialStreams {
    pub environment: ChaCha8Rng,
    pub attacker: ChaCha8Rng,
    pub learner: ChaCha8Rng,
}

impl TrialStreams {
    pub fn split(stream: RngStream) -> Self {
        let mut root = stream.rng();
        let environment = ChaCha8Rng::seed_from_u64(root.next_u64());
        let attacker = ChaCha8Rng::seed_from_u64(root.next_u64());
        let learner = ChaCha8Rng::seed_from_u64(root.next_u64());
        Self {
            environment,
            attacker,
            learner,
        }
    }
}

/// Runs `horizon` rounds of the protocol with explicit components.
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    env: &Environment,
    learner: Box<dyn Learner>,
    mut channel: Channel,
    horizon: u64,
    mut env_rng: ChaCha8Rng,
    mut learner_rng: ChaCha8Rng,
    emission: TraceEmission,
    trial_id: u64,
) -> Result<TrialResult> {
    let k = env.k();
    let gaps = env.instance().gaps();
    let optimal = env.instance().optimal_arm();
    let mut learner = Sequenced::new(learner);
    let mut ledgers = Ledgers::new(k);
    let checkpoints = checkpoints(horizon);
    let mut next_checkpoint = checkpoints.iter().peekable();
    let mut snapshots = Vec::with_capacity(checkpoints.len());
    let keep_history = emission == TraceEmission::Full || channel.adversary_name() != "none";
    let mut history: Vec<RoundRecord> =
        Vec::with_capacity(if keep_history { horizon as usize } else { 0 });
    let mut rewards = vec![0.0; k];
    let mut last_verified_round = None;

    for t in 1..=horizon {
        let plan = channel.precommit(t, &history);
        let sel = learner.select(t, &mut learner_rng);
        env.instance().check_arm(sel.arm)?;
        env.sample_all(t, &mut env_rng, &mut rewards)?;
        let true_reward = rewards[sel.arm.0];
        let out = channel.transmit(t, sel.arm, true_reward, sel.verify, plan.as_ref(), &history)?;
        learner.observe(t, sel.arm, out.observed, out.verified)?;

        let rec = RoundRecord {
            t,
            arm: sel.arm,
            true_reward,
            applied_eps: out.applied_eps,
            observed: out.observed,
            verified: out.verified,
        };
        ledgers.charge(&rec, &gaps, rewards[optimal.0]);
        if out.denied {
            ledgers.denied_verifications += 1;
        }
        if out.verified {
            last_verified_round = Some(t);
        }
        if keep_history {
            history.push(rec);
        }
        if next_checkpoint.peek() == Some(&&t) {
            snapshots.push(Snapshot::of(t, &ledgers));
            next_checkpoint.next();
        }
    }

    Ok(TrialResult {
        trial_id,
        ledgers,
        snapshots,
        diagnostics: learner.diagnostics(),
        last_verified_round,
        trace: (emission == TraceEmission::Full).then_some(history),
    })
}

fn run_prepared(
    config: &ExperimentConfig,
    env: &Environment,
    trial_id: u64,
) -> Result<TrialResult> {
    let TrialStreams {
        environment,
        attacker,
        learner: learner_rng,
    } = TrialStreams::split(config.trial_stream(trial_id));
    let adversary: Adversary = config.attacker.build(env.k(), attacker);
    let learner = config.learner.build(env.k(), config.horizon)?;
    let channel = Channel::new(adversary, config.verification(), config.contamination());
    simulate(
        env,
        learner,
        channel,
        config.horizon,
        environment,
        learner_rng,
        config.trace,
        trial_id,
    )
}

/// One trial of `config` on `stream`; the trial id is the stream id.
pub fn run_trial(config: &ExperimentConfig, stream: RngStream) -> Result<TrialResult> {
    let env = config.instance.build()?;
    let cfg = ExperimentConfig {
        seed: stream.seed,
        ..config.clone()
    };
    run_prepared(&cfg, &env, stream.stream_id)
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub results: Vec<TrialResult>,
    pub summary: ExperimentSummary,
}

/// Runs every trial of `config` on the rayon pool (or a dedicated pool of
/// `workers` threads). Results are ordered by trial id.
pub fn run_experiment(
    config: &ExperimentConfig,
    workers: Option<usize>,
) -> Result<ExperimentOutput> {
    if config.trials == 0 {
        return Err(Error::param("trials", "must be at least 1"));
    }
    let env = config.instance.build()?;
    let run = || -> Result<Vec<TrialResult>> {
        (0..config.trials)
            .into_par_iter()
            .map(|id| {
                run_prepared(config, &env, id).map_err(|e| Error::Trial {
                    trial_id: id,
                    source: Box::new(e),
                })
            })
            .collect()
    };
    let results = match workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::param("workers", e.to_string()))?
            .install(run)?,
        None => run()?,
    };
    let summary = ExperimentSummary::new(config, summarize(&results)?);
    Ok(ExperimentOutput { results, summary })
}

/// Minimum per-arm pull count of UCB at one checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservativenessRow {
    pub t: u64,
    pub min_count: u64,
    /// `ln(t/2)`.
    pub bound: f64,
    /// Whether `t / (ln t)² ≥ 36 K²`, i.e. the guarantee applies at `t`.
    pub asserted: bool,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservativenessReport {
    pub rows: Vec<ConservativenessRow>,
    pub pass: bool,
}

/// `t / (ln t)² ≥ 36 K²`.
pub fn conservativeness_applies(t: u64, k: usize) -> bool {
    let ln_t = (t as f64).ln();
    t >= 2 && t as f64 / (ln_t * ln_t) >= 36.0 * (k * k) as f64
}

/// Runs UCB on a scripted reward table and checks that every arm has been
/// pulled at least `ln(t/2)` times at each applicable checkpoint.
pub fn conservativeness_check(
    script: &Environment,
    checkpoints: &[u64],
    k: usize,
) -> Result<ConservativenessReport> {
    if k < 2 || script.k() != k {
        return Err(Error::param("k", "needs K >= 2 matching the script"));
    }
    let last = checkpoints.iter().copied().max().unwrap_or(0);
    match script.script_len() {
        Some(len) if len as u64 >= last => {}
        Some(len) => return Err(Error::ScriptOutOfRange { t: last, len }),
        None => return Err(Error::param("script", "expected a scripted environment")),
    }
    let mut sorted = checkpoints.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut ucb = Ucb::new(k);
    // Scripts are deterministic; the generator is never consulted.
    let mut unused = ChaCha8Rng::seed_from_u64(0);
    let mut rows = Vec::with_capacity(sorted.len());
    let mut next = sorted.iter().peekable();
    for t in 1..=last {
        let arm = ucb.choose(t);
        let r = script.sample_reward(arm, t, &mut unused)?;
        ucb.update(arm, r)?;
        if next.peek() == Some(&&t) {
            next.next();
            let min_count = ucb.counts().iter().copied().min().unwrap_or(0);
            let bound = (t as f64 / 2.0).ln();
            let asserted = conservativeness_applies(t, k);
            rows.push(ConservativenessRow {
                t,
                min_count,
                bound,
                asserted,
                pass: !asserted || min_count as f64 >= bound,
            });
        }
    }
    let pass = rows.iter().all(|r| r.pass);
    Ok(ConservativenessReport { rows, pass })
}

/// Target-arm pull fraction averaged over trials.
pub fn mean_pull_fraction(results: &[TrialResult], arm: ArmId) -> f64 {
    results
        .iter()
        .map(|r| r.ledgers.target_fraction(arm))
        .sum::<f64>()
        / results.len().max(1) as f64
}

/// Three fixed scripts followed by `n` seeded random and block scripts.
pub fn fuzz_corpus(n: usize, seed: u64) -> Vec<ScriptKind> {
    let mut kinds = vec![
        ScriptKind::ConstantBest,
        ScriptKind::AllZero,
        ScriptKind::AlternatingExtremes,
    ];
    kinds.extend((0..n as u64).map(|i| {
        let s = seed.wrapping_add(i);
        if i % 2 == 0 {
            ScriptKind::SeededRandom(s)
        } else {
            ScriptKind::SeededBlocks(s)
        }
    }));
    kinds
}

/// Conservativeness check of every corpus script at the checkpoints up to `t_max`.
pub fn conservativeness_fuzz(
    corpus: &[ScriptKind],
    k: usize,
    t_max: u64,
) -> Result<Vec<(ScriptKind, ConservativenessReport)>> {
    let grid = checkpoints(t_max);
    corpus
        .par_iter()
        .map(|&kind| {
            let env = adversarial_script(kind, k, t_max as usize)?;
            Ok((kind, conservativeness_check(&env, &grid, k)?))
        })
        .collect()
}
