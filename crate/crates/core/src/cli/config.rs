//! Run configuration: defaults, an optional TOML file, and command-line
//! overrides, applied in that order.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::advantage::{Algorithm, TagpoScope};
use crate::rewards::RewardConfig;
use crate::sandbox::{JudgeMode, SandboxConfig};
use crate::synth::script::Profile;
use crate::synth::{RemoteConfig, SynthConfig};
use crate::toolkit::BudgetConfig;
use crate::trainer::TrainerConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerSection {
    pub max_turns: usize,
    pub rollouts: usize,
    pub lr: f64,
    pub steps: usize,
    pub batch: usize,
    pub judge: JudgeMode,
    pub corruption_rate: f64,
    pub tagpo_scope: TagpoScope,
}

impl Default for TrainerSection {
    fn default() -> Self {
        let t = TrainerConfig::default();
        Self {
            max_turns: t.max_turns,
            rollouts: t.rollouts,
            lr: t.lr,
            steps: t.steps,
            batch: t.batch,
            judge: t.judge,
            corruption_rate: t.corruption_rate,
            tagpo_scope: t.tagpo_scope,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    /// Episodes played per question.
    pub episodes: usize,
    /// Take the most likely head instead of sampling.
    pub greedy: bool,
    /// Emission noise during evaluation; zero scores the routing alone.
    pub corruption_rate: f64,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            episodes: 1,
            greedy: false,
            corruption_rate: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClientKind {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub client: ClientKind,
    /// Script played by the mock client.
    pub profile: Profile,
    pub candidates: usize,
    pub retry_cap: usize,
    pub trials: usize,
    pub band_low: usize,
    pub band_high: usize,
    pub remote: RemoteConfig,
}

impl Default for SynthSection {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            client: ClientKind::Mock,
            profile: Profile::Optimal,
            candidates: s.candidates,
            retry_cap: s.retry_cap,
            trials: s.trials,
            band_low: s.band_low,
            band_high: s.band_high,
            remote: RemoteConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportSection {
    /// Valid-tool-reward level whose first crossing is reported.
    pub threshold: f64,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { threshold: 0.45 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: String,
    /// Corpus file written by gen-sandbox and read by train, eval and synth.
    /// Empty means `{output_dir}/corpus.jsonl`.
    pub corpus: String,
    /// Questions written by gen-sandbox.
    pub count: usize,
    pub algorithm: Algorithm,
    pub sandbox: SandboxConfig,
    pub reward: RewardConfig,
    pub budget: BudgetConfig,
    pub trainer: TrainerSection,
    pub eval: EvalSection,
    pub synth: SynthSection,
    pub report: ReportSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: "out".into(),
            corpus: String::new(),
            count: 200,
            algorithm: Algorithm::Composite,
            sandbox: SandboxConfig::default(),
            reward: RewardConfig::default(),
            budget: BudgetConfig::default(),
            trainer: TrainerSection::default(),
            eval: EvalSection::default(),
            synth: SynthSection::default(),
            report: ReportSection::default(),
        }
    }
}

impl RunConfig {
    pub fn corpus_path(&self) -> PathBuf {
        if self.corpus.is_empty() {
            Path::new(&self.output_dir).join("corpus.jsonl")
        } else {
            PathBuf::from(&self.corpus)
        }
    }

    pub fn trainer_config(&self) -> TrainerConfig {
        let t = &self.trainer;
        TrainerConfig {
            max_turns: t.max_turns,
            rollouts: t.rollouts,
            lr: t.lr,
            steps: t.steps,
            batch: t.batch,
            seed: self.seed,
            judge: t.judge,
            corruption_rate: t.corruption_rate,
            algorithm: self.algorithm,
            tagpo_scope: t.tagpo_scope,
            reward: self.reward.clone(),
            budget: self.budget.clone(),
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        let s = &self.synth;
        SynthConfig {
            candidates: s.candidates,
            max_turns: self.trainer.max_turns,
            retry_cap: s.retry_cap,
            trials: s.trials,
            band_low: s.band_low,
            band_high: s.band_high,
            budget: self.budget.clone(),
            reward: self.reward.clone(),
        }
    }
}

/// Parse a command-line value as TOML, falling back to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Set a dotted key inside a TOML table, creating intermediate tables.
pub fn set_key(table: &mut toml::Table, key: &str, value: toml::Value) -> Result<()> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts
        .pop()
        .filter(|k| !k.is_empty())
        .ok_or_else(|| anyhow!("empty config key"))?;
    let mut cur = table;
    for p in parts {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("config key '{key}': '{p}' is not a table"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Layer the config file, `--set` assignments and dedicated flags over the
/// defaults. Later layers win.
pub fn load(file: Option<&Path>, sets: &[String], flags: &[(&str, toml::Value)]) -> Result<RunConfig> {
    let mut table = match file {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            toml::from_str::<toml::Table>(&text).with_context(|| format!("parsing config {}", path.display()))?
        }
        None => toml::Table::new(),
    };
    for s in sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{s}'"))?;
        set_key(&mut table, k.trim(), parse_value(v.trim()))?;
    }
    for (k, v) in flags {
        set_key(&mut table, k, v.clone())?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| anyhow!("invalid configuration: {}", e.message()))?;
    cfg.sandbox.validate()?;
    cfg.trainer_config().validate()?;
    if !(0.0..=1.0).contains(&cfg.eval.corruption_rate) {
        bail!(
            "eval.corruption_rate must lie in [0, 1], got {}",
            cfg.eval.corruption_rate
        );
    }
    if cfg.synth.band_low >= cfg.synth.band_high {
        bail!("synth.band_low must be below synth.band_high");
    }
    Ok(cfg)
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<String>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        other => out.push(format!("  {prefix} = {other}")),
    }
}

/// Every configuration key with its default, one per line.
pub fn defaults_listing() -> String {
    let value = toml::Value::try_from(RunConfig::default()).expect("defaults serialize");
    let mut lines = Vec::new();
    flatten("", &value, &mut lines);
    format!(
        "Configuration keys (defaults shown; set in a --config TOML file or with --set KEY=VALUE;\n\
         precedence: flags > --set > config file > defaults):\n{}",
        lines.join("\n")
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let text = toml::to_string(&RunConfig::default()).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, RunConfig::default());
    }

    #[test]
    fn precedence_and_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 5\nalgorithm = \"grpo\"\n[trainer]\nlr = 0.5\nsteps = 3\n",
        )
        .unwrap();
        let cfg = load(
            Some(&path),
            &["trainer.steps=7".into(), "sandbox.margin = 0.5".into()],
            &[("seed", toml::Value::Integer(9))],
        )
        .unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.algorithm, Algorithm::Grpo);
        assert_eq!(cfg.trainer.lr, 0.5);
        assert_eq!(cfg.trainer.steps, 7);
        assert_eq!(cfg.sandbox.margin, 0.5);
        assert_eq!(cfg.trainer_config().seed, 9);
    }

    #[test]
    fn unknown_keys_and_bad_values_rejected() {
        assert!(load(None, &["trainer.nope=1".into()], &[]).is_err());
        assert!(load(None, &["bogus=1".into()], &[]).is_err());
        assert!(load(None, &["algorithm=ppo".into()], &[]).is_err());
        assert!(load(None, &["trainer.rollouts=1".into()], &[]).is_err());
        assert!(load(None, &["novalue".into()], &[]).is_err());
    }

    #[test]
    fn listing_covers_every_key() {
        let listing = defaults_listing();
        for key in [
            "seed = 0",
            "algorithm = \"composite\"",
            "sandbox.frames = 64",
            "sandbox.mix.global = 0.25",
            "reward.gamma = 0.9",
            "budget.total_tokens = 1960",
            "trainer.lr = 0.1",
            "synth.remote.token_env = \"TIRLAB_API_KEY\"",
            "report.threshold = 0.45",
        ] {
            assert!(listing.contains(key), "missing {key}");
        }
    }
}
