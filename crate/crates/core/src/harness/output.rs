//! CSV emission. Column sets are fixed per command; each file opens with a
//! `#` line carrying the trial count and base seed.

use std::io::Write;

use super::config::ExperimentConfig;
use super::run::TrialRecord;
use super::sweep::SweepRow;
use crate::error::Result;

pub const SUMMARY_COLUMNS: &[&str] = &[
    "n",
    "k",
    "m",
    "km_over_n",
    "policy",
    "delta",
    "capital_c",
    "offer_mode",
    "balls",
    "trials",
    "failure_rate",
    "max_load_mean",
    "max_load_median",
    "max_load_max",
    "col2_mean",
    "col2_median",
    "bits_used_peak",
    "thm2_bound",
    "random_alloc_bound",
    "error",
];

/// Per-trial columns; one `col_{q}` column per collision order sits after
/// `max_load`.
pub fn trial_columns(collision_orders: &[u32]) -> Vec<String> {
    let mut cols: Vec<String> = ["trial_index", "base_seed", "balls", "balls_placed", "max_load"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(collision_orders.iter().map(|q| format!("col_{q}")));
    cols.extend(
        ["failed", "failure_cause", "failure_round", "failure_phase", "bits_used_peak", "wall_time"]
            .iter()
            .map(|s| s.to_string()),
    );
    cols
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trials<W: Write>(mut out: W, config: &ExperimentConfig, records: &[TrialRecord]) -> Result<()> {
    let p = &config.problem;
    writeln!(
        out,
        "# policy={} n={} k={} m={} offer_mode={} trials={} base_seed={}",
        config.policy.kind, p.n, p.k, p.m, config.offer_mode, config.trials, config.base_seed
    )?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(trial_columns(&config.collision_orders))?;
    for r in records {
        let mut row = vec![
            r.trial_index.to_string(),
            r.base_seed.to_string(),
            r.balls.to_string(),
            r.balls_placed.to_string(),
            r.max_load.to_string(),
        ];
        row.extend(config.collision_orders.iter().map(|&q| opt(r.col(q))));
        row.extend([
            r.failed.to_string(),
            opt(r.failure_cause.map(|c| c.name())),
            opt(r.failure_round),
            opt(r.failure_phase),
            r.bits_used_peak.to_string(),
            format!("{:.6}", r.wall_time),
        ]);
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary<W: Write>(mut out: W, trials: u64, base_seed: u64, rows: &[SweepRow]) -> Result<()> {
    writeln!(out, "# trials={trials} base_seed={base_seed}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        let s = r.summary.as_ref();
        w.write_record([
            r.n.to_string(),
            r.k.to_string(),
            r.m.to_string(),
            format!("{}", r.km_over_n),
            r.policy.clone(),
            r.delta.to_string(),
            r.capital_c.to_string(),
            r.offer_mode.clone(),
            opt(r.balls),
            r.trials.to_string(),
            opt(s.map(|s| s.failure_rate)),
            opt(s.map(|s| s.max_load.mean)),
            opt(s.map(|s| s.max_load.median)),
            opt(s.map(|s| s.max_load.max)),
            opt(s.map(|s| s.col2.mean)),
            opt(s.map(|s| s.col2.median)),
            opt(s.map(|s| s.bits_used_peak)),
            opt(s.and_then(|s| s.bounds.thm2_load_lower)),
            opt(s.and_then(|s| s.bounds.random_alloc_load)),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
