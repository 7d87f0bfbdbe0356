//! Command-line surface: corpus generation, training, evaluation, trajectory
//! synthesis and run comparison.

pub mod config;
pub mod report;

use std::fmt::Write as _;
use std::io::{BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};

use crate::sandbox::{generate_corpus, EvidenceGranularity, IntentCue, SandboxItem};
use crate::synth::script::scripted_client;
use crate::synth::{run_pipeline, write_exemplars, write_provenance, ModelClient, RemoteClient, Stage, StageStatus};
use crate::trainer::metrics::write_metrics;
use crate::trainer::{evaluate, train_from, Actor, EpisodeStats, Greedy, OptimalActor, PolicyTable};
use crate::trajectory::{ActionHead, ToolKind};
use crate::util::cosine;
use config::{ClientKind, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "tirlab",
    version,
    about = "Tool-integrated RL lab for long-video QA on a synthetic sandbox"
)]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set trainer.lr=0.05`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for every output file.
    #[arg(long, global = true, value_name = "DIR")]
    pub out_dir: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScriptedPolicy {
    /// Browse for global questions, the retrieval chain for local ones.
    Optimal,
    /// Zero-initialized table: uniform over action heads.
    Zero,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a question/video corpus.
    GenSandbox {
        #[arg(long)]
        count: Option<usize>,
        /// Corpus path (default `{out_dir}/corpus.jsonl`).
        #[arg(long)]
        out: Option<String>,
    },
    /// Train a routing policy; writes a metrics table and the final policy.
    Train {
        #[arg(long)]
        corpus: Option<String>,
        /// grpo, tagpo or composite.
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Evaluate a policy file or a scripted policy on a corpus.
    Eval {
        #[arg(long, conflicts_with = "scripted", required_unless_present = "scripted")]
        policy: Option<PathBuf>,
        #[arg(long, value_enum)]
        scripted: Option<ScriptedPolicy>,
        #[arg(long)]
        corpus: Option<String>,
        /// Episodes per question.
        #[arg(long)]
        episodes: Option<usize>,
        /// Pick the most likely head instead of sampling.
        #[arg(long)]
        greedy: bool,
    },
    /// Run the trajectory synthesis pipeline.
    Synth {
        #[arg(long)]
        corpus: Option<String>,
        /// mock or remote.
        #[arg(long)]
        client: Option<String>,
        /// Mock script: optimal, chain-violating, banded or repairing.
        #[arg(long)]
        profile: Option<String>,
    },
    /// Compare training runs from their metrics files.
    Report {
        #[arg(required = true, value_name = "METRICS_CSV")]
        files: Vec<PathBuf>,
        /// Valid-tool-reward level for the crossing step.
        #[arg(long)]
        threshold: Option<f64>,
    },
}

/// The clap command with the configuration listing appended to `--help`.
pub fn command() -> clap::Command {
    Cli::command().after_help(config::defaults_listing())
}

pub fn parse_args<I, T>(args: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let matches = command().try_get_matches_from(args)?;
    Cli::from_arg_matches(&matches)
}

fn str_value(s: &str) -> toml::Value {
    toml::Value::String(s.to_string())
}

fn int_value(n: impl TryInto<i64>) -> Result<toml::Value> {
    Ok(toml::Value::Integer(
        n.try_into().map_err(|_| anyhow::anyhow!("integer out of range"))?,
    ))
}

/// Dedicated flags as configuration assignments.
fn flag_overrides(cli: &Cli) -> Result<Vec<(&'static str, toml::Value)>> {
    let mut f = Vec::new();
    if let Some(s) = cli.seed {
        f.push(("seed", int_value(s)?));
    }
    if let Some(d) = &cli.out_dir {
        f.push(("output_dir", str_value(d)));
    }
    match &cli.command {
        Command::GenSandbox { count, out } => {
            if let Some(c) = count {
                f.push(("count", int_value(*c)?));
            }
            if let Some(o) = out {
                f.push(("corpus", str_value(o)));
            }
        }
        Command::Train {
            corpus,
            algo,
            steps,
            lr,
        } => {
            if let Some(c) = corpus {
                f.push(("corpus", str_value(c)));
            }
            if let Some(a) = algo {
                f.push(("algorithm", str_value(a)));
            }
            if let Some(s) = steps {
                f.push(("trainer.steps", int_value(*s)?));
            }
            if let Some(lr) = lr {
                f.push(("trainer.lr", toml::Value::Float(*lr)));
            }
        }
        Command::Eval {
            corpus,
            episodes,
            greedy,
            ..
        } => {
            if let Some(c) = corpus {
                f.push(("corpus", str_value(c)));
            }
            if let Some(e) = episodes {
                f.push(("eval.episodes", int_value(*e)?));
            }
            if *greedy {
                f.push(("eval.greedy", toml::Value::Boolean(true)));
            }
        }
        Command::Synth {
            corpus,
            client,
            profile,
        } => {
            if let Some(c) = corpus {
                f.push(("corpus", str_value(c)));
            }
            if let Some(c) = client {
                f.push(("synth.client", str_value(c)));
            }
            if let Some(p) = profile {
                f.push(("synth.profile", str_value(p)));
            }
        }
        Command::Report { threshold, .. } => {
            if let Some(t) = threshold {
                f.push(("report.threshold", toml::Value::Float(*t)));
            }
        }
    }
    Ok(f)
}

pub fn run(cli: &Cli) -> Result<()> {
    let flags = flag_overrides(cli)?;
    let cfg = config::load(cli.config.as_deref(), &cli.set, &flags)?;
    let mut stdout = std::io::stdout().lock();
    match &cli.command {
        Command::GenSandbox { .. } => cmd_gen_sandbox(&cfg, &mut stdout),
        Command::Train { .. } => cmd_train(&cfg, &mut stdout),
        Command::Eval { policy, scripted, .. } => cmd_eval(&cfg, policy.as_deref(), *scripted, &mut stdout),
        Command::Synth { .. } => cmd_synth(&cfg, &mut stdout),
        Command::Report { files, .. } => cmd_report(&cfg, files, &mut stdout),
    }
}

fn create_file(path: &Path) -> Result<BufWriter<std::fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = create_file(path)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn write_corpus(path: &Path, corpus: &[SandboxItem]) -> Result<()> {
    let mut w = create_file(path)?;
    for item in corpus {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<SandboxItem>> {
    let f = std::fs::File::open(path).with_context(|| format!("opening corpus {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: SandboxItem =
            serde_json::from_str(&line).with_context(|| format!("{}: line {}", path.display(), i + 1))?;
        out.push(item);
    }
    if out.is_empty() {
        bail!("corpus {} is empty", path.display());
    }
    Ok(out)
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    Path::new(&cfg.output_dir).join(name)
}

fn summary_stats(xs: &[f64]) -> (f64, f64, f64) {
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, crate::util::mean(xs), max)
}

pub fn cmd_gen_sandbox(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let corpus = generate_corpus(cfg.seed, &cfg.sandbox, cfg.count)?;
    let path = cfg.corpus_path();
    write_corpus(&path, &corpus)?;
    writeln!(out, "wrote {} questions to {}", corpus.len(), path.display())?;
    writeln!(out, "granularity mix:")?;
    for g in EvidenceGranularity::ALL {
        let n = corpus.iter().filter(|i| i.granularity() == g).count();
        writeln!(
            out,
            "  {:<8} {:>5}  ({:.3})",
            g.name(),
            n,
            n as f64 / corpus.len() as f64
        )?;
    }
    let global = corpus.iter().filter(|i| i.question.cue == IntentCue::Global).count();
    writeln!(out, "intent cues: global {global}, local {}", corpus.len() - global)?;
    let distractor: Vec<f64> = corpus
        .iter()
        .map(|i| i.video.max_distractor_similarity(&i.question.query))
        .collect();
    let (lo, mean, hi) = summary_stats(&distractor);
    writeln!(
        out,
        "max distractor similarity (margin {}): min {lo:.4} mean {mean:.4} max {hi:.4}",
        cfg.sandbox.margin
    )?;
    let evidence: Vec<f64> = corpus
        .iter()
        .filter_map(|i| {
            let ev = &i.video.evidence;
            let q = &i.question.query;
            match ev.granularity {
                EvidenceGranularity::Global => None,
                EvidenceGranularity::Segment => Some(cosine(q, &i.video.segment_mean(ev.segment?))),
                EvidenceGranularity::Frame => Some(cosine(q, &i.video.frame_embeddings[ev.frame?])),
                EvidenceGranularity::Region => Some(cosine(q, &i.video.region_embeddings[ev.frame?][ev.region?])),
            }
        })
        .collect();
    if !evidence.is_empty() {
        let (lo, mean, hi) = summary_stats(&evidence);
        writeln!(out, "evidence similarity: min {lo:.4} mean {mean:.4} max {hi:.4}")?;
    }
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let corpus = read_corpus(&cfg.corpus_path())?;
    let tcfg = cfg.trainer_config();
    let every = (tcfg.steps / 10).max(1);
    let outcome = train_from(&tcfg, &corpus, PolicyTable::zeros(tcfg.max_turns), |m| {
        if m.step % every == 0 || m.step + 1 == tcfg.steps {
            eprintln!(
                "step {:>4}  reward {:.3}  acc {:.3}  vtr {:.3}  calls {:.3}",
                m.step, m.stats.mean_reward, m.stats.accuracy, m.stats.valid_tool_reward, m.stats.mean_tool_calls
            );
        }
    })?;
    let stem = format!("{}-seed{}", cfg.algorithm, cfg.seed);
    let metrics_path = out_path(cfg, &format!("{stem}.metrics.csv"));
    let policy_path = out_path(cfg, &format!("{stem}.policy.tsv"));
    let mut w = create_file(&metrics_path)?;
    write_metrics(&mut w, &outcome.metrics)?;
    w.flush()?;
    write_text(&policy_path, &outcome.policy.to_text())?;
    writeln!(out, "trained {} for {} steps", cfg.algorithm, outcome.metrics.len())?;
    if let Some(last) = outcome.metrics.last() {
        let s = &last.stats;
        writeln!(
            out,
            "final step: accuracy {:.4}  valid_tool_reward {:.4}  mean_tool_calls {:.4}",
            s.accuracy, s.valid_tool_reward, s.mean_tool_calls
        )?;
    }
    writeln!(out, "metrics: {}", metrics_path.display())?;
    writeln!(out, "policy: {}", policy_path.display())?;
    Ok(())
}

/// Plain-text evaluation report with the first-action routing table.
pub fn render_eval(label: &str, stats: &EpisodeStats) -> String {
    let mut s = String::new();
    writeln!(s, "policy: {label}").unwrap();
    writeln!(s, "episodes: {}", stats.episodes).unwrap();
    writeln!(s, "accuracy: {:.4}", stats.accuracy).unwrap();
    writeln!(s, "format_quality: {:.4}", stats.format_quality).unwrap();
    writeln!(s, "valid_tool_reward: {:.4}", stats.valid_tool_reward).unwrap();
    writeln!(s, "mean_tool_calls: {:.4}", stats.mean_tool_calls).unwrap();
    writeln!(s, "mean_reward: {:.4}", stats.mean_reward).unwrap();
    let calls: Vec<String> = ToolKind::ALL
        .iter()
        .map(|k| format!("{} {}", k.wire_name(), stats.tool_counts[k.index()]))
        .collect();
    writeln!(s, "tool calls: {}", calls.join(", ")).unwrap();
    writeln!(s, "\nfirst action by intent cue:").unwrap();
    write!(s, "{:<8} {:>8}", "cue", "episodes").unwrap();
    for h in ActionHead::ALL {
        write!(s, " {:>8}", h.name()).unwrap();
    }
    writeln!(s).unwrap();
    for (cue, r) in [
        (IntentCue::Global, &stats.routing_global),
        (IntentCue::Local, &stats.routing_local),
    ] {
        write!(s, "{:<8} {:>8}", cue.name(), r.episodes).unwrap();
        for h in ActionHead::ALL {
            write!(s, " {:>8.4}", r.fraction(h)).unwrap();
        }
        writeln!(s).unwrap();
    }
    s
}

pub fn cmd_eval(
    cfg: &RunConfig,
    policy: Option<&Path>,
    scripted: Option<ScriptedPolicy>,
    out: &mut dyn Write,
) -> Result<()> {
    let corpus = read_corpus(&cfg.corpus_path())?;
    let mut tcfg = cfg.trainer_config();
    tcfg.corruption_rate = cfg.eval.corruption_rate;
    let table;
    let (label, actor): (String, Box<dyn Actor + '_>) = match (policy, scripted) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading policy {}", path.display()))?;
            table =
                PolicyTable::from_text(&text).with_context(|| format!("malformed policy file {}", path.display()))?;
            tcfg.max_turns = table.max_turns;
            let actor: Box<dyn Actor> = if cfg.eval.greedy {
                Box::new(Greedy(&table))
            } else {
                Box::new(table.clone())
            };
            (path.display().to_string(), actor)
        }
        (None, Some(ScriptedPolicy::Optimal)) => ("scripted optimal".into(), Box::new(OptimalActor)),
        (None, Some(ScriptedPolicy::Zero)) => {
            table = PolicyTable::zeros(tcfg.max_turns);
            ("zero-initialized".into(), Box::new(table.clone()))
        }
        (None, None) => bail!("eval needs --policy FILE or --scripted NAME"),
    };
    let stats = evaluate(actor.as_ref(), &corpus, &tcfg, cfg.seed, cfg.eval.episodes.max(1));
    let text = render_eval(&label, &stats);
    let path = out_path(cfg, "eval_report.txt");
    write_text(&path, &text)?;
    out.write_all(text.as_bytes())?;
    writeln!(out, "report: {}", path.display())?;
    Ok(())
}

pub fn cmd_synth(cfg: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let corpus = read_corpus(&cfg.corpus_path())?;
    let scfg = cfg.synth_config();
    let client: Box<dyn ModelClient> = match cfg.synth.client {
        ClientKind::Mock => Box::new(scripted_client(cfg.synth.profile, &corpus, &scfg, cfg.seed)),
        ClientKind::Remote => Box::new(RemoteClient::new(cfg.synth.remote.clone())?),
    };
    let report = run_pipeline(&corpus, client.as_ref(), &scfg);
    if cfg.synth.client == ClientKind::Remote {
        let failures: Vec<&str> = report
            .items
            .iter()
            .filter_map(|i| match i.stages.get(&Stage::Necessity) {
                Some(StageStatus::Failed { reason }) => Some(reason.as_str()),
                _ => None,
            })
            .collect();
        if failures.len() == report.items.len() {
            bail!(
                "remote client at {} is unreachable: {}",
                cfg.synth.remote.base_url,
                failures[0]
            );
        }
    }
    let exemplars = out_path(cfg, "exemplars.jsonl");
    let provenance = out_path(cfg, "provenance.jsonl");
    let mut w = create_file(&exemplars)?;
    write_exemplars(&mut w, &report)?;
    w.flush()?;
    let mut w = create_file(&provenance)?;
    write_provenance(&mut w, &report)?;
    w.flush()?;
    writeln!(
        out,
        "{:<12} {:>7} {:>8} {:>7} {:>8}",
        "stage", "passed", "flagged", "failed", "skipped"
    )?;
    for (stage, c) in report.stage_counts() {
        writeln!(
            out,
            "{:<12} {:>7} {:>8} {:>7} {:>8}",
            stage.name(),
            c.passed,
            c.flagged,
            c.failed,
            c.skipped
        )?;
    }
    writeln!(out, "kept {} of {} items", report.kept().count(), report.items.len())?;
    writeln!(out, "exemplars: {}", exemplars.display())?;
    writeln!(out, "provenance: {}", provenance.display())?;
    Ok(())
}

pub fn cmd_report(cfg: &RunConfig, files: &[PathBuf], out: &mut dyn Write) -> Result<()> {
    let mut tables = files
        .iter()
        .map(|p| report::MetricsTable::load(p))
        .collect::<Result<Vec<_>>>()?;
    report::check_schemas(&tables)?;
    report::dedupe_labels(&mut tables);
    let threshold = cfg.report.threshold;
    let summaries = tables
        .iter()
        .map(|t| report::summarize(t, threshold))
        .collect::<Result<Vec<_>>>()?;
    let text = report::render_summary(&summaries, threshold);
    write_text(&out_path(cfg, "report.txt"), &text)?;
    out.write_all(text.as_bytes())?;
    for metric in report::PLOT_METRICS {
        if tables[0].header.iter().any(|h| h == metric) {
            let path = out_path(cfg, &format!("plot_{metric}.tsv"));
            write_text(&path, &report::plot_data(&tables, metric)?)?;
        }
    }
    writeln!(out, "plot data written to {}", cfg.output_dir)?;
    Ok(())
}
