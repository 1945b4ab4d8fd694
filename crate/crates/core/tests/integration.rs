use std::fs;
use std::sync::{Arc, Mutex};

use rand_chacha::ChaCha8Rng;

use secbandit::analysis::Metric;
use secbandit::attack::{
    Adversary, AttackerSpec, ContaminationBudget, WeakAttackPlan, WeakAttacker,
};
use secbandit::channel::{Channel, VerificationBudget};
use secbandit::config::{expand_sweep, parse_config};
use secbandit::emit::{emit, read_summary_csv, read_trace, SUMMARY_HEADER};
use secbandit::engine::{checkpoints, run_experiment, simulate, ExperimentConfig, TraceEmission};
use secbandit::environment::Environment;
use secbandit::learner::{Learner, LearnerSpec, Selection, VerificationPlacement};
use secbandit::protocol::{ArmId, RngStream, RoundRecord};
use secbandit::{Error, Result};

fn small(learner: LearnerSpec, attacker: AttackerSpec) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(vec![0.9, 0.7, 0.4], learner, attacker, 5_000);
    cfg.trials = 8;
    cfg.seed = 11;
    cfg
}

#[test]
fn same_seed_same_results() {
    let cfg = small(LearnerSpec::Ucb, AttackerSpec::Uniformizing);
    let a = run_experiment(&cfg, None).unwrap();
    let b = run_experiment(&cfg, None).unwrap();
    assert_eq!(a.results, b.results);
    assert_eq!(a.summary, b.summary);
    let mut other = cfg.clone();
    other.seed = 12;
    let c = run_experiment(&other, None).unwrap();
    assert_ne!(a.results[0].ledgers, c.results[0].ledgers);
}

#[test]
fn worker_count_does_not_change_results() {
    let cfg = small(
        LearnerSpec::SecureUcb { kappa: 0.05 },
        AttackerSpec::GapEstimation {
            target: 2,
            radical: Default::default(),
        },
    );
    let seq = run_experiment(&cfg, Some(1)).unwrap();
    let par = run_experiment(&cfg, Some(4)).unwrap();
    assert_eq!(seq.results, par.results);
    let ids: Vec<u64> = par.results.iter().map(|r| r.trial_id).collect();
    assert_eq!(ids, (0..8).collect::<Vec<_>>());
}

type Log = Arc<Mutex<Vec<(char, u64)>>>;

struct LoggingAttacker(Log);

impl WeakAttacker for LoggingAttacker {
    fn plan(&mut self, t: u64, history: &[RoundRecord], _: &ContaminationBudget) -> WeakAttackPlan {
        assert_eq!(history.len() as u64, t - 1);
        self.0.lock().unwrap().push(('p', t));
        WeakAttackPlan {
            eps_by_arm: vec![-0.1, -0.1],
        }
    }

    fn name(&self) -> &'static str {
        "logging"
    }
}

struct LoggingLearner(Log);

impl Learner for LoggingLearner {
    fn select(&mut self, t: u64, _: &mut ChaCha8Rng) -> Selection {
        self.0.lock().unwrap().push(('s', t));
        Selection {
            arm: ArmId((t % 2) as usize),
            verify: t.is_multiple_of(3),
        }
    }

    fn observe(&mut self, t: u64, _: ArmId, _: f64, _: bool) -> Result<()> {
        self.0.lock().unwrap().push(('o', t));
        Ok(())
    }

    fn name(&self) -> &'static str {
        "logging"
    }
}

#[test]
fn weak_plan_precedes_selection() {
    let log: Log = Arc::default();
    let env = Environment::bernoulli(vec![0.5, 0.5]).unwrap();
    let channel = Channel::new(
        Adversary::Weak(Box::new(LoggingAttacker(log.clone()))),
        VerificationBudget::fixed(4),
        ContaminationBudget::unlimited(),
    );
    let streams = RngStream::new(1, 0);
    let res = simulate(
        &env,
        Box::new(LoggingLearner(log.clone())),
        channel,
        30,
        streams.rng(),
        RngStream::new(1, 1).rng(),
        TraceEmission::Full,
        0,
    )
    .unwrap();
    let events = log.lock().unwrap().clone();
    let expected: Vec<(char, u64)> = (1..=30)
        .flat_map(|t| [('p', t), ('s', t), ('o', t)])
        .collect();
    assert_eq!(events, expected);
    // Rounds 3, 6, 9, 12 are granted; later requests are denied.
    assert_eq!(res.ledgers.verification_count, 4);
    assert_eq!(res.ledgers.denied_verifications, 6);
    assert_eq!(res.last_verified_round, Some(12));
}

#[test]
fn trace_rows_are_consistent() {
    let mut cfg = small(
        LearnerSpec::SecureEtc { delta: None },
        AttackerSpec::ZeroOblivious { target: 1 },
    );
    cfg.trace = TraceEmission::Full;
    cfg.verification_budget = Some(300);
    cfg.contamination_budget = Some(25.0);
    let out = run_experiment(&cfg, None).unwrap();
    for r in &out.results {
        let trace = r.trace.as_ref().unwrap();
        assert_eq!(trace.len(), 5_000);
        assert!(trace.iter().all(RoundRecord::is_consistent));
        assert!(trace
            .iter()
            .enumerate()
            .all(|(i, rec)| rec.t == i as u64 + 1));
        let verified = trace.iter().filter(|r| r.verified).count() as u64;
        assert_eq!(verified, r.ledgers.verification_count);
        assert!(verified <= 300);
        let spent: f64 = trace.iter().map(|r| r.applied_eps.abs()).sum();
        assert!(spent <= 25.0 + 1e-9);
    }
}

#[test]
fn single_arm_has_no_regret() {
    let mut cfg = ExperimentConfig::new(vec![0.4], LearnerSpec::Ucb, AttackerSpec::Blackout, 2_000);
    cfg.trials = 3;
    let out = run_experiment(&cfg, None).unwrap();
    for r in &out.results {
        assert_eq!(r.ledgers.pseudo_regret, 0.0);
        assert_eq!(r.ledgers.pull_counts, vec![2_000]);
    }
}

#[test]
fn ucb_regret_in_classical_envelope() {
    let mut cfg = ExperimentConfig::new(
        vec![0.9, 0.8],
        LearnerSpec::Ucb,
        AttackerSpec::None,
        100_000,
    );
    cfg.trials = 50;
    cfg.seed = 5;
    let out = run_experiment(&cfg, None).unwrap();
    let regret = out.summary.final_row(Metric::PseudoRegret).unwrap().mean;
    let envelope = 8.0 * 100_000f64.ln() / 0.1;
    assert!(
        regret <= 3.0 * envelope && regret >= envelope / 3.0,
        "{regret} vs {envelope}"
    );
}

#[test]
fn secure_barbar_without_budget_is_barbar() {
    let plain = small(
        LearnerSpec::Barbar {
            delta: 0.1,
            kappa_lambda: 0.01,
        },
        AttackerSpec::WeakBudgeted { target: 1 },
    );
    let mut secure = plain.clone();
    secure.learner = LearnerSpec::SecureBarbar {
        delta: 0.1,
        beta: 0.3,
        budget: 0,
        kappa_lambda: 0.01,
        placement: VerificationPlacement::InEpoch,
    };
    secure.contamination_budget = Some(200.0);
    let mut plain = plain;
    plain.contamination_budget = Some(200.0);
    let a = run_experiment(&plain, None).unwrap();
    let b = run_experiment(&secure, None).unwrap();
    for (x, y) in a.results.iter().zip(&b.results) {
        assert_eq!(x.ledgers, y.ledgers);
    }
}

#[test]
fn emitted_files_have_expected_shape_and_replay() {
    let mut cfg = small(LearnerSpec::Ucb, AttackerSpec::Blackout);
    cfg.trials = 3;
    cfg.trace = TraceEmission::Full;
    let out = run_experiment(&cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let written = emit(dir.path(), &out, TraceEmission::Full, true).unwrap();
    assert_eq!(written.len(), 1 + 3 + 1);

    let rows = read_summary_csv(dir.path().join("summary.csv")).unwrap();
    assert_eq!(rows.len(), checkpoints(5_000).len() * Metric::ALL.len());
    assert!(rows
        .iter()
        .all(|r| r.horizon == 5_000 && r.learner == "ucb" && r.attacker == "blackout"));
    let header = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), SUMMARY_HEADER.join(","));

    let trace = read_trace(dir.path().join("trace_trial2.jsonl")).unwrap();
    assert_eq!(&trace, out.results[2].trace.as_ref().unwrap());
    let svg = fs::read_to_string(dir.path().join("regret.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));

    let again = tempfile::tempdir().unwrap();
    emit(
        again.path(),
        &run_experiment(&cfg, Some(2)).unwrap(),
        TraceEmission::Full,
        true,
    )
    .unwrap();
    for f in ["summary.csv", "trace_trial0.jsonl", "regret.svg"] {
        assert_eq!(
            fs::read(dir.path().join(f)).unwrap(),
            fs::read(again.path().join(f)).unwrap()
        );
    }
}

#[test]
fn summary_only_writes_no_traces() {
    let cfg = small(LearnerSpec::Ucb, AttackerSpec::None);
    let out = run_experiment(&cfg, None).unwrap();
    assert!(out.results.iter().all(|r| r.trace.is_none()));
    let dir = tempfile::tempdir().unwrap();
    let written = emit(dir.path(), &out, TraceEmission::SummaryOnly, false).unwrap();
    assert_eq!(written, vec![dir.path().join("summary.csv")]);
}

#[test]
fn config_file_round_trip_with_script() {
    let dir = tempfile::tempdir().unwrap();
    let script =
        Environment::scripted(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
    script
        .write_script_csv(dir.path().join("script.csv"))
        .unwrap();
    let path = dir.path().join("exp.toml");
    fs::write(
        &path,
        "horizon = 3\ntrials = 2\n[instance]\nfamily = \"scripted\"\nscript = \"script.csv\"\n\
         [learner]\nkind = \"ucb\"\n[sweep]\nattackers = [{ kind = \"none\" }, { kind = \"blackout\" }]\n",
    )
    .unwrap();
    let file = parse_config(&path).unwrap();
    let points = expand_sweep(&file.experiment, file.sweep.as_ref().unwrap()).unwrap();
    assert_eq!(points.len(), 2);
    assert_eq!(points[1].dir.to_str().unwrap(), "attacker=1-blackout");
    let out = run_experiment(&points[0].config, None).unwrap();
    // UCB plays arm 0, then arm 1, then arm 0 again.
    assert_eq!(out.results[0].ledgers.pull_counts, vec![2, 1]);

    fs::write(&path, "horizon = 10\n[instance]\nfamily = \"scripted\"\nscript = \"script.csv\"\n[learner]\nkind = \"ucb\"\n").unwrap();
    assert!(matches!(parse_config(&path), Err(Error::Config { .. })));
}
