//! TOML experiment configs: parsing, validation and sweep expansion.
//!
//! ```toml
//! horizon = 10000
//! trials = 32
//! seed = 7
//!
//! [instance]
//! family = "bernoulli"
//! means = [0.9, 0.8]
//!
//! [learner]
//! kind = "ucb"
//!
//! [attacker]
//! kind = "zero_oblivious"
//! target = 1
//!
//! [sweep]
//! horizons = [1000, 10000, 100000]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::AttackerSpec;
use crate::engine::{ExperimentConfig, InstanceSpec};
use crate::error::{Error, Result};
use crate::learner::LearnerSpec;

/// Grid axes; an empty axis keeps the base value.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    #[serde(default)]
    pub horizons: Vec<u64>,
    /// Verification budgets `B`: the channel cap, and Secure-BARBAR's budget.
    #[serde(default)]
    pub budgets: Vec<u64>,
    /// Deterministic contamination budgets `C`.
    #[serde(default)]
    pub contaminations: Vec<f64>,
    #[serde(default)]
    pub learners: Vec<LearnerSpec>,
    #[serde(default)]
    pub attackers: Vec<AttackerSpec>,
}

impl SweepSpec {
    pub fn is_empty(&self) -> bool {
        self.horizons.is_empty()
            && self.budgets.is_empty()
            && self.contaminations.is_empty()
            && self.learners.is_empty()
            && self.attackers.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConfigFile {
    pub experiment: ExperimentConfig,
    pub sweep: Option<SweepSpec>,
}

/// One expanded sweep point: its relative output directory and config.
#[derive(Clone, Debug, PartialEq)]
pub struct GridPoint {
    pub dir: PathBuf,
    pub config: ExperimentConfig,
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ConfigFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// Parses and validates a config; relative script paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<ConfigFile> {
    let mut table: toml::Table =
        toml::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
    let raw = table.clone();
    let sweep = match table.remove("sweep") {
        None => None,
        Some(v) => Some(
            serde_path_to_error::deserialize::<_, SweepSpec>(v)
                .map_err(|e| Error::config(format!("sweep.{}", e.path()), e.inner().to_string()))?,
        ),
    };
    let mut experiment: ExperimentConfig =
        serde_path_to_error::deserialize(toml::Value::Table(table))
            .map_err(|e| Error::config(e.path().to_string(), e.inner().to_string()))?;
    reject_unknown(raw.get("learner"), &experiment.learner, "learner")?;
    reject_unknown(raw.get("attacker"), &experiment.attacker, "attacker")?;
    if let (Some(s), Some(toml::Value::Table(raw_sweep))) = (&sweep, raw.get("sweep")) {
        check_array(raw_sweep.get("learners"), &s.learners, "learners")?;
        check_array(raw_sweep.get("attackers"), &s.attackers, "attackers")?;
    }
    if let InstanceSpec::Scripted { script } = &mut experiment.instance {
        if script.is_relative() {
            *script = base_dir.join(&*script);
        }
    }
    validate(&experiment)?;
    if let Some(s) = &sweep {
        validate_sweep(&experiment, s)?;
    }
    Ok(ConfigFile { experiment, sweep })
}

/// Internally tagged unit variants (`kind = "ucb"`) accept stray keys under
/// serde, so compare the input keys against what the parsed value serializes to.
fn reject_unknown<T: Serialize>(raw: Option<&toml::Value>, parsed: &T, path: &str) -> Result<()> {
    let Some(toml::Value::Table(input)) = raw else {
        return Ok(());
    };
    let known = toml::Table::try_from(parsed).map_err(|e| Error::config(path, e.to_string()))?;
    match input.keys().find(|k| !known.contains_key(*k)) {
        Some(k) => Err(Error::config(
            format!("{path}.{k}"),
            format!("unknown field `{k}`"),
        )),
        None => Ok(()),
    }
}

fn check_array<T: Serialize>(raw: Option<&toml::Value>, parsed: &[T], key: &str) -> Result<()> {
    if let Some(toml::Value::Array(items)) = raw {
        for (i, (r, p)) in items.iter().zip(parsed).enumerate() {
            reject_unknown(Some(r), p, &format!("sweep.{key}[{i}]"))?;
        }
    }
    Ok(())
}

fn in_open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

fn positive(x: f64) -> bool {
    x > 0.0 && x.is_finite()
}

fn check_learner(l: &LearnerSpec, k: usize, horizon: u64, path: &str) -> Result<()> {
    let err = |field: &str, msg: &str| Err(Error::config(format!("{path}.{field}"), msg));
    match *l {
        LearnerSpec::Ucb => {}
        LearnerSpec::SecureEtc { delta } => {
            if let Some(d) = delta {
                if !in_open_unit(d) {
                    return err("delta", "must lie in (0, 1)");
                }
            }
        }
        LearnerSpec::SecureUcb { kappa } => {
            if !positive(kappa) {
                return err("kappa", "must be positive");
            }
        }
        LearnerSpec::Barbar {
            delta,
            kappa_lambda,
        } => {
            if !in_open_unit(delta) {
                return err("delta", "must lie in (0, 1)");
            }
            if !positive(kappa_lambda) {
                return err("kappa_lambda", "must be positive");
            }
        }
        LearnerSpec::SecureBarbar {
            delta,
            beta,
            budget,
            kappa_lambda,
            ..
        } => {
            if !in_open_unit(delta) {
                return err("delta", "must lie in (0, 1)");
            }
            if !in_open_unit(beta) {
                return err("beta", "must lie in (0, 1)");
            }
            if budget > horizon {
                return err("budget", "may not exceed the horizon");
            }
            if !positive(kappa_lambda) {
                return err("kappa_lambda", "must be positive");
            }
        }
    }
    if matches!(
        l,
        LearnerSpec::Barbar { .. } | LearnerSpec::SecureBarbar { .. }
    ) {
        if k < 2 {
            return Err(Error::config(
                format!("{path}.kind"),
                "BARBAR needs at least two arms",
            ));
        }
        if horizon < 2 {
            return Err(Error::config("horizon", "BARBAR needs T >= 2"));
        }
    }
    Ok(())
}

fn check_attacker(a: &AttackerSpec, k: usize, path: &str) -> Result<()> {
    match a.target() {
        Some(t) if t.0 >= k => Err(Error::config(
            format!("{path}.target"),
            format!("target arm {} is not below K = {k}", t.0),
        )),
        _ => Ok(()),
    }
}

/// Arm count implied by the instance, with path-qualified range checks.
fn check_instance(inst: &InstanceSpec) -> Result<usize> {
    match inst {
        InstanceSpec::Bernoulli { means } => {
            if means.is_empty() {
                return Err(Error::config(
                    "instance.means",
                    "at least one arm is required",
                ));
            }
            for (i, m) in means.iter().enumerate() {
                if !(0.0..=1.0).contains(m) {
                    return Err(Error::config(
                        format!("instance.means[{i}]"),
                        format!("{m} is outside [0, 1]"),
                    ));
                }
            }
            Ok(means.len())
        }
        InstanceSpec::DiscreteSupport { .. } => inst
            .build()
            .map(|e| e.k())
            .map_err(|e| Error::config("instance", e.to_string())),
        InstanceSpec::Scripted { script } => {
            if !script.exists() {
                return Err(Error::config(
                    "instance.script",
                    format!("{} does not exist", script.display()),
                ));
            }
            inst.build()
                .map(|e| e.k())
                .map_err(|e| Error::config("instance.script", e.to_string()))
        }
    }
}

pub fn validate(c: &ExperimentConfig) -> Result<()> {
    if c.horizon == 0 {
        return Err(Error::config("horizon", "must be at least 1"));
    }
    if c.trials == 0 {
        return Err(Error::config("trials", "must be at least 1"));
    }
    let k = check_instance(&c.instance)?;
    if let InstanceSpec::Scripted { .. } = c.instance {
        let len = c.instance.build()?.script_len().unwrap_or(0) as u64;
        if len < c.horizon {
            return Err(Error::config(
                "instance.script",
                format!("script has {len} rounds, horizon is {}", c.horizon),
            ));
        }
    }
    check_learner(&c.learner, k, c.horizon, "learner")?;
    check_attacker(&c.attacker, k, "attacker")?;
    if let Some(cb) = c.contamination_budget {
        if !(cb >= 0.0 && cb.is_finite()) {
            return Err(Error::config(
                "contamination_budget",
                "must be a finite value >= 0",
            ));
        }
    }
    Ok(())
}

fn validate_sweep(base: &ExperimentConfig, s: &SweepSpec) -> Result<()> {
    let k = check_instance(&base.instance)?;
    let horizon = s.horizons.iter().copied().min().unwrap_or(base.horizon);
    if s.horizons.contains(&0) {
        return Err(Error::config(
            "sweep.horizons",
            "horizons must be at least 1",
        ));
    }
    for (i, l) in s.learners.iter().enumerate() {
        check_learner(l, k, horizon, &format!("sweep.learners[{i}]"))?;
    }
    for (i, a) in s.attackers.iter().enumerate() {
        check_attacker(a, k, &format!("sweep.attackers[{i}]"))?;
    }
    if let Some(c) = s
        .contaminations
        .iter()
        .find(|c| !(**c >= 0.0 && c.is_finite()))
    {
        return Err(Error::config(
            "sweep.contaminations",
            format!("{c} is not a valid budget"),
        ));
    }
    Ok(())
}

/// Resolved config as TOML, written next to results for reproducibility.
pub fn to_toml(config: &ExperimentConfig) -> Result<String> {
    toml::to_string(config).map_err(|e| Error::config("<document>", e.to_string()))
}

/// 64-bit FNV-1a; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn axis<T: Copy>(values: &[T]) -> Vec<Option<T>> {
    if values.is_empty() {
        vec![None]
    } else {
        values.iter().copied().map(Some).collect()
    }
}

/// Expands the grid in a fixed order (T, B, C, learner, attacker). Each point
/// gets a directory built from its coordinates and a seed derived from the
/// base seed and a hash of those coordinates.
pub fn expand_sweep(base: &ExperimentConfig, sweep: &SweepSpec) -> Result<Vec<GridPoint>> {
    let mut points = Vec::new();
    for h in axis(&sweep.horizons) {
        for b in axis(&sweep.budgets) {
            for c in axis(&sweep.contaminations) {
                for (li, l) in axis_indexed(&sweep.learners) {
                    for (ai, a) in axis_indexed(&sweep.attackers) {
                        let mut cfg = base.clone();
                        let mut parts: Vec<String> = Vec::new();
                        if let Some(h) = h {
                            cfg.horizon = h;
                            parts.push(format!("T={h}"));
                        }
                        if let Some(l) = l {
                            cfg.learner = l.clone();
                        }
                        if let Some(b) = b {
                            cfg.verification_budget = Some(b);
                            if let LearnerSpec::SecureBarbar { budget, .. } = &mut cfg.learner {
                                *budget = b;
                            }
                            parts.push(format!("B={b}"));
                        }
                        if let Some(c) = c {
                            cfg.contamination_budget = Some(c);
                            parts.push(format!("C={c}"));
                        }
                        if let (Some(i), Some(l)) = (li, l) {
                            parts.push(format!("learner={i}-{}", l.key()));
                        }
                        if let (Some(i), Some(a)) = (ai, a) {
                            cfg.attacker = a.clone();
                            parts.push(format!("attacker={i}-{}", a.key()));
                        }
                        if parts.is_empty() {
                            parts.push("base".into());
                        }
                        let coords = parts.join("/");
                        cfg.seed = base.seed ^ fnv1a(coords.as_bytes());
                        validate(&cfg).map_err(|e| match e {
                            Error::Config { path, message } => {
                                Error::config(format!("{coords}: {path}"), message)
                            }
                            other => other,
                        })?;
                        points.push(GridPoint {
                            dir: PathBuf::from(coords),
                            config: cfg,
                        });
                    }
                }
            }
        }
    }
    Ok(points)
}

fn axis_indexed<T>(values: &[T]) -> Vec<(Option<usize>, Option<&T>)> {
    if values.is_empty() {
        vec![(None, None)]
    } else {
        values
            .iter()
            .enumerate()
            .map(|(i, v)| (Some(i), Some(v)))
            .collect()
    }
}
