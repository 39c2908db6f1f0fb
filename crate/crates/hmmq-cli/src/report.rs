//! Report generation: splits a metrics file into plot-ready series files and
//! compares the learned and fully observed Q tables from the final
//! checkpoint under the best state relabeling.

use std::fmt::Write as _;
use std::path::Path;

use hmmq_core::baseline::best_permutation_match;

use crate::checkpoint::Checkpoint;
use crate::metrics::read_metrics;
use crate::runner::{final_checkpoint_path, metrics_path};
use crate::{Error, Result};

/// What `emit_report` wrote and found.
#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub rows: usize,
    pub eval_rows: usize,
    /// Best-permutation max deviation between the learned and fully
    /// observed Q tables, when a final checkpoint was present.
    pub q_deviation: Option<f64>,
    pub warnings: Vec<String>,
}

/// Reads `<out>/metrics.csv` (and `<out>/checkpoint_final.txt` if present)
/// and writes the series files next to them:
///
/// * `series_loglik.csv` - step, moving-average log-likelihood
/// * `series_sigma.csv` - step, noise-scale estimate
/// * `series_max_q.csv` - step, max Q per learner
/// * `series_mean_reward.csv` - step, evaluation mean rewards per policy
/// * `q_comparison.txt` - relabeled Q tables side by side
pub fn emit_report(out_dir: &Path) -> Result<ReportSummary> {
    let rows = read_metrics(&metrics_path(out_dir))?;
    let mut warnings = Vec::new();
    if rows.is_empty() {
        warnings.push("metrics file has no data rows; series files are empty".to_string());
    }

    let write = |name: &str, header: &str, body: String| -> Result<()> {
        let path = out_dir.join(name);
        std::fs::write(&path, format!("{header}\n{body}")).map_err(Error::io(&path))
    };

    let mut loglik = String::new();
    let mut sigma = String::new();
    let mut max_q = String::new();
    let mut rewards = String::new();
    let mut eval_rows = 0;
    for row in &rows {
        let _ = writeln!(loglik, "{},{:.16e}", row.step, row.loglik_ma);
        let _ = writeln!(sigma, "{},{:.16e}", row.step, row.sigma_theta);
        let _ = writeln!(
            max_q,
            "{},{:.16e},{:.16e},{:.16e}",
            row.step, row.max_q_hmm, row.max_q_full, row.max_q_partial
        );
        if let Some(e) = &row.eval {
            eval_rows += 1;
            let _ = writeln!(
                rewards,
                "{},{:.16e},{:.16e},{:.16e}",
                row.step, e.belief, e.full, e.partial
            );
        }
    }
    write("series_loglik.csv", "step,loglik_ma", loglik)?;
    write("series_sigma.csv", "step,sigma_theta", sigma)?;
    write(
        "series_max_q.csv",
        "step,max_q_hmm,max_q_full,max_q_partial",
        max_q,
    )?;
    write(
        "series_mean_reward.csv",
        "step,eval_reward_hmm,eval_reward_full,eval_reward_partial",
        rewards,
    )?;

    let checkpoint_file = final_checkpoint_path(out_dir);
    let q_deviation = if checkpoint_file.exists() {
        let ck = Checkpoint::load(&checkpoint_file)?;
        let (perm, dev) = best_permutation_match(
            &ck.q_values,
            &ck.baseline_q_full,
            ck.num_states,
            ck.num_actions,
        )?;
        let mut text = String::new();
        let _ = writeln!(text, "step = {}", ck.step);
        let _ = writeln!(text, "state relabeling (belief-keyed -> fully observed) = {perm:?}");
        let _ = writeln!(text, "max abs deviation after relabeling = {dev}");
        let _ = writeln!(text, "rows: relabeled_q_hmm | q_full");
        for s in 0..ck.num_states {
            let hmm_row: Vec<String> = (0..ck.num_actions)
                .map(|a| format!("{:9.2}", ck.q_values[perm[s] * ck.num_actions + a]))
                .collect();
            let full_row: Vec<String> = (0..ck.num_actions)
                .map(|a| format!("{:9.2}", ck.baseline_q_full[s * ck.num_actions + a]))
                .collect();
            let _ = writeln!(text, "  [{}] | [{}]", hmm_row.join(" "), full_row.join(" "));
        }
        let path = out_dir.join("q_comparison.txt");
        std::fs::write(&path, text).map_err(Error::io(&path))?;
        Some(dev)
    } else {
        warnings.push(format!(
            "no final checkpoint at {}; skipping the Q comparison",
            checkpoint_file.display()
        ));
        None
    };

    Ok(ReportSummary {
        rows: rows.len(),
        eval_rows,
        q_deviation,
        warnings,
    })
}
