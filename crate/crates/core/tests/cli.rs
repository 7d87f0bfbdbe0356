use std::path::Path;
use std::process::{Command, Output};

fn tirlab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tirlab"))
        .current_dir(dir)
        .args(args)
        .env_remove("TIRLAB_API_KEY")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = tirlab(dir, args);
    assert!(
        out.status.success(),
        "tirlab {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(dir: &Path, args: &[&str]) -> String {
    let out = tirlab(dir, args);
    assert!(!out.status.success(), "tirlab {args:?} should fail");
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(!err.trim().is_empty());
    err
}

fn field(report: &str, name: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{name}: ")))
        .unwrap_or_else(|| panic!("no {name} in report"))
        .trim()
        .parse()
        .unwrap()
}

#[test]
fn help_lists_every_key() {
    let dir = tempfile::tempdir().unwrap();
    let help = ok(dir.path(), &["--help"]);
    for key in [
        "seed = 0",
        "trainer.lr = 0.1",
        "trainer.rollouts = 8",
        "reward.tool_bonus = 0.5",
        "sandbox.margin = 0.6",
        "synth.trials = 10",
        "eval.corruption_rate = 0.0",
        "report.threshold = 0.45",
    ] {
        assert!(help.contains(key), "help lacks {key}");
    }
}

#[test]
fn gen_sandbox_mix_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &["gen-sandbox", "--count", "200", "--seed", "7"]);
    assert!(out.contains("global      50"));
    let corpus = std::fs::read_to_string(dir.path().join("out/corpus.jsonl")).unwrap();
    assert_eq!(corpus.lines().count(), 200);
    for g in ["global", "segment", "frame", "region"] {
        let n = corpus
            .lines()
            .filter(|l| l.contains(&format!("\"granularity\":\"{g}\"")))
            .count();
        assert_eq!(n, 50, "{g}");
    }
    fails(dir.path(), &["gen-sandbox", "--count", "0"]);
    fails(dir.path(), &["gen-sandbox", "--set", "sandbox.bogus=1"]);
    fails(dir.path(), &["train", "--corpus", "missing.jsonl"]);
}

#[test]
fn train_eval_report_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-sandbox", "--count", "80", "--seed", "2"]);
    ok(d, &["train", "--algo", "tagpo", "--steps", "200", "--seed", "1"]);
    let metrics = std::fs::read_to_string(d.join("out/tagpo-seed1.metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 201);
    ok(d, &["train", "--algo", "composite", "--steps", "5"]);
    let header = std::fs::read_to_string(d.join("out/composite-seed0.metrics.csv")).unwrap();
    let header = header.lines().next().unwrap();
    assert!(header.contains("mean_abs_grpo") && header.contains("mean_abs_tagpo"));
    fails(d, &["train", "--algo", "ppo"]);

    let optimal = ok(d, &["eval", "--scripted", "optimal"]);
    assert_eq!(field(&optimal, "accuracy"), 1.0);
    let zero = ok(d, &["eval", "--scripted", "zero", "--episodes", "50"]);
    let row = zero.lines().find(|l| l.starts_with("local")).unwrap();
    let fractions: Vec<f64> = row.split_whitespace().skip(2).map(|x| x.parse().unwrap()).collect();
    assert_eq!(fractions.len(), 5);
    assert!(fractions.iter().all(|f| (f - 0.2).abs() < 0.03), "{row}");
    ok(d, &["eval", "--policy", "out/tagpo-seed1.policy.tsv"]);
    std::fs::write(d.join("bad.tsv"), "# max_turns=4\nlocal/none/hidden/t0\tbrowse\tnot-a-number\n").unwrap();
    let err = fails(d, &["eval", "--policy", "bad.tsv"]);
    assert!(err.contains("malformed policy file"));

    let report = ok(d, &["report", "out/tagpo-seed1.metrics.csv", "out/composite-seed0.metrics.csv"]);
    assert!(report.contains("tagpo-seed1.metrics") && report.contains("composite-seed0.metrics"));
    let single = ok(d, &["report", "out/tagpo-seed1.metrics.csv", "--threshold", "2.0"]);
    assert!(single.lines().nth(2).unwrap().contains("none"));
    let plot = std::fs::read_to_string(d.join("out/plot_valid_tool_reward.tsv")).unwrap();
    assert_eq!(plot.lines().next().unwrap(), "step\ttagpo-seed1.metrics");
    std::fs::write(d.join("other.csv"), "step,valid_tool_reward,mean_tool_calls,accuracy\n0,0,0,0\n").unwrap();
    let err = fails(d, &["report", "out/tagpo-seed1.metrics.csv", "other.csv"]);
    assert!(err.contains("schema mismatch"));
}

#[test]
fn synth_profiles_and_remote_errors() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["gen-sandbox", "--count", "20", "--seed", "4"]);
    let out = ok(d, &["synth", "--client", "mock"]);
    assert!(out.contains("kept 20 of 20 items"));
    let exemplars = std::fs::read_to_string(d.join("out/exemplars.jsonl")).unwrap();
    assert_eq!(exemplars.lines().count(), 20);

    let out = ok(d, &["synth", "--profile", "chain-violating"]);
    let order = out.lines().find(|l| l.starts_with("order")).unwrap();
    let counts: Vec<usize> = order.split_whitespace().skip(1).map(|x| x.parse().unwrap()).collect();
    assert_eq!(counts, vec![0, 0, 20, 0]);
    assert!(out.contains("kept 0 of 20 items"));

    let err = fails(d, &["synth", "--client", "remote"]);
    assert!(err.contains("TIRLAB_API_KEY"));
    let closed = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("synth.remote.base_url=\"http://{}/v1\"", closed.local_addr().unwrap());
    drop(closed);
    let out = Command::new(env!("CARGO_BIN_EXE_tirlab"))
        .current_dir(d)
        .args(["synth", "--client", "remote", "--set", &url, "--set", "synth.remote.retries=0"])
        .env("TIRLAB_API_KEY", "test")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unreachable"));
}
