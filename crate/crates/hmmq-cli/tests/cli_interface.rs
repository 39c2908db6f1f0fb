//! End-to-end behavior of the experiment runner and the `hmmq` binary:
//! determinism of files, checkpoint restore, report output, exit codes.

use std::path::Path;
use std::process::Command;

use hmmq_cli::checkpoint::Checkpoint;
use hmmq_cli::config::{expand_config, preset_document, RunConfig};
use hmmq_cli::metrics::read_metrics;
use hmmq_cli::report::emit_report;
use hmmq_cli::runner::{final_checkpoint_path, run_eval, run_train};

fn small_config(out: &Path, seed: u64, steps: u64) -> RunConfig {
    let mut config = expand_config(preset_document("paper-s4").unwrap()).unwrap();
    config.out_dir = out.to_path_buf();
    config.seed = seed;
    config.steps = steps;
    config.eval_interval = 1000;
    config.eval_episodes = 3;
    config.eval_steps = 50;
    config
}

#[test]
fn identical_seeds_give_byte_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    run_train(&small_config(&out_a, 9, 2_000)).unwrap();
    run_train(&small_config(&out_b, 9, 2_000)).unwrap();
    let metrics_a = std::fs::read(out_a.join("metrics.csv")).unwrap();
    let metrics_b = std::fs::read(out_b.join("metrics.csv")).unwrap();
    assert_eq!(metrics_a, metrics_b, "metrics must be byte-identical");
    let ck_a = std::fs::read(out_a.join("checkpoint_final.txt")).unwrap();
    let ck_b = std::fs::read(out_b.join("checkpoint_final.txt")).unwrap();
    assert_eq!(ck_a, ck_b, "checkpoints must be byte-identical");

    let out_c = dir.path().join("c");
    run_train(&small_config(&out_c, 10, 2_000)).unwrap();
    assert_ne!(metrics_a, std::fs::read(out_c.join("metrics.csv")).unwrap());
}

#[test]
fn metrics_rows_land_on_log_and_eval_intervals() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 3, 2_550);
    run_train(&config).unwrap();
    let rows = read_metrics(&config.out_dir.join("metrics.csv")).unwrap();
    // 25 interval rows plus the final off-interval step.
    assert_eq!(rows.len(), 26);
    assert_eq!(rows.last().unwrap().step, 2_550);
    for row in &rows {
        let on_eval = row.step % 1000 == 0;
        assert_eq!(row.eval.is_some(), on_eval, "step {}", row.step);
    }
    assert!(dir.path().join("checkpoint_1000.txt").exists());
    assert!(dir.path().join("checkpoint_2000.txt").exists());
    assert!(dir.path().join("timing.log").exists());
}

#[test]
fn checkpoint_restores_the_exact_session() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 4, 1_500);
    run_train(&config).unwrap();
    let ck = Checkpoint::load(&final_checkpoint_path(&config.out_dir)).unwrap();
    assert_eq!(ck.step, 1_500);
    let (session, baselines) = ck.restore(&config).unwrap();
    assert_eq!(session.step_count(), 1_500);
    assert_eq!(session.theta().sigma_param(), ck.sigma);
    assert_eq!(baselines.q_full().values(), &ck.baseline_q_full[..]);

    // Round trip through save again: byte-identical file.
    let resaved = dir.path().join("resaved.txt");
    ck.save(&resaved).unwrap();
    assert_eq!(
        std::fs::read(&resaved).unwrap(),
        std::fs::read(final_checkpoint_path(&config.out_dir)).unwrap()
    );
}

#[test]
fn eval_is_deterministic_and_untrained_matches_partial_within_noise() {
    let dir = tempfile::tempdir().unwrap();
    // One step leaves all Q tables at zero: the belief policy and the
    // observation-keyed baseline collapse to the same constant action, so
    // their mean rewards differ only by rollout noise.
    let config = small_config(dir.path(), 5, 1);
    run_train(&config).unwrap();
    let row = run_eval(&config, &final_checkpoint_path(&config.out_dir)).unwrap();
    let again = run_eval(&config, &final_checkpoint_path(&config.out_dir)).unwrap();
    assert_eq!(row, again, "evaluation must be deterministic given the seed");
    let eval = row.eval.unwrap();
    assert!(
        (eval.belief - eval.partial).abs() < 1.5,
        "untrained belief policy {:.3} vs partial {:.3}",
        eval.belief,
        eval.partial
    );
}

#[test]
fn report_writes_series_and_q_comparison() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), 6, 2_000);
    run_train(&config).unwrap();
    let summary = emit_report(&config.out_dir).unwrap();
    assert_eq!(summary.rows, 20);
    assert_eq!(summary.eval_rows, 2);
    assert!(summary.q_deviation.is_some());
    for name in [
        "series_loglik.csv",
        "series_sigma.csv",
        "series_max_q.csv",
        "series_mean_reward.csv",
        "q_comparison.txt",
    ] {
        assert!(config.out_dir.join(name).exists(), "{name} missing");
    }
    let rewards = std::fs::read_to_string(config.out_dir.join("series_mean_reward.csv")).unwrap();
    assert_eq!(rewards.lines().count(), 3);
}

/// Preset training run at 1e5 steps: the noise-scale estimate in the final
/// metrics row must sit near the generating value.
#[test]
fn preset_run_recovers_the_noise_scale() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = small_config(dir.path(), 1, 100_000);
    config.eval_interval = 0;
    run_train(&config).unwrap();
    let rows = read_metrics(&config.out_dir.join("metrics.csv")).unwrap();
    let last = rows.last().unwrap();
    assert!(
        (0.8..=1.3).contains(&last.sigma_theta),
        "final sigma {}",
        last.sigma_theta
    );
}

mod binary {
    use super::*;

    fn hmmq() -> Command {
        Command::new(env!("CARGO_BIN_EXE_hmmq"))
    }

    #[test]
    fn train_eval_report_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let status = hmmq()
            .args(["train", "--preset", "paper-s4", "--seed", "2", "--steps", "1200"])
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
        assert!(out.join("metrics.csv").exists());

        let status = hmmq().args(["eval", "--preset", "paper-s4"]).arg("--out").arg(&out).status().unwrap();
        assert!(status.success());
        assert!(out.join("metrics_eval.csv").exists());

        let status = hmmq().arg("report").arg("--out").arg(&out).status().unwrap();
        assert!(status.success());
        assert!(out.join("series_sigma.csv").exists());
    }

    #[test]
    fn train_flags_select_modes() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let status = hmmq()
            .args([
                "train",
                "--preset",
                "paper-s4",
                "--steps",
                "200",
                "--t-mode",
                "literal",
                "--q-timing",
                "eq14",
            ])
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert!(status.success());
    }

    #[test]
    fn invalid_inputs_exit_nonzero() {
        let status = hmmq()
            .args(["train", "--preset", "no-such-preset", "--steps", "10"])
            .status()
            .unwrap();
        assert!(!status.success());

        let status = hmmq().args(["train", "--steps", "10"]).status().unwrap();
        assert!(!status.success(), "missing config/preset must fail");

        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.toml");
        std::fs::write(
            &bad,
            "[model]\nnum_states = 2\nnum_actions = 1\nnum_obs = 2\nnoise_sigma = 1.0\ndiscount = 0.9\ntransition = [[[0.6, 0.5], [0.5, 0.5]]]\nreward_mean = [[0.0, 0.0]]\nobs = [[1.0, 0.0], [0.0, 1.0]]\n\n[behavior]\nprobs = [[1.0], [1.0]]\n",
        )
        .unwrap();
        let status = hmmq().arg("validate-config").arg("--config").arg(&bad).status().unwrap();
        assert!(!status.success(), "non-stochastic row must be rejected");
    }

    #[test]
    fn validate_config_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("preset.toml");
        std::fs::write(&path, "preset = \"paper-s4\"\n").unwrap();
        let output = hmmq().arg("validate-config").arg("--config").arg(&path).output().unwrap();
        assert!(output.status.success());
        let expanded = String::from_utf8(output.stdout).unwrap();
        let reparsed: hmmq_cli::config::ConfigFile = toml::from_str(&expanded).unwrap();
        let config = hmmq_cli::config::expand_config(reparsed).unwrap();
        assert_eq!(config.model.obs_prob(0, 0), 0.95);
        assert_eq!(config, expand_config(preset_document("paper-s4").unwrap()).unwrap());
    }
}
