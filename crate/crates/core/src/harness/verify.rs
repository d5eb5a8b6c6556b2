//! The acceptance suite behind `verify`. Each check reports what it
//! measured next to its threshold; `Scale::Quick` trims trial counts and
//! scales count thresholds with them.

use std::fmt;
use std::time::Instant;

use rand::Rng;

use super::config::{ExperimentConfig, OfferMode};
use super::run::{run_experiment, TrialRecord};
use crate::algorithms::{PolicyKind, PolicySpec};
use crate::diagnostics::{
    check_claim_sum_lower_bound, check_packing_bound, freedman_event_rate, random_capped_strategy, Scenario,
};
use crate::error::{Error, Result};
use crate::membits::{unary_decode, unary_encode, BitLedger};
use crate::model::LoadVector;
use crate::rng::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Full,
    Quick,
}

impl Scale {
    /// `full` at full scale, about a fifth of it (at least 2) in quick mode.
    fn count(self, full: u64) -> u64 {
        match self {
            Scale::Full => full,
            Scale::Quick => (full / 5).max(2),
        }
    }
}

/// Seed shared by every check so `verify` output is reproducible.
pub const VERIFY_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: u32,
    pub name: &'static str,
    pub measured: String,
    pub threshold: String,
    pub pass: bool,
    pub seconds: f64,
    pub budget_seconds: f64,
}

impl CheckResult {
    pub fn within_budget(&self) -> bool {
        self.seconds <= self.budget_seconds
    }
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {:>2} {:<28} measured: {}  threshold: {}  time: {:.1}s/{:.0}s",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.threshold,
            self.seconds,
            self.budget_seconds
        )
    }
}

struct Outcome {
    measured: String,
    threshold: String,
    pass: bool,
}

fn timed(id: u32, name: &'static str, budget: f64, f: impl FnOnce() -> Result<Outcome>) -> CheckResult {
    let start = Instant::now();
    let out = f().unwrap_or_else(|e| Outcome {
        measured: format!("error: {e}"),
        threshold: "no error".into(),
        pass: false,
    });
    CheckResult {
        id,
        name,
        measured: out.measured,
        threshold: out.threshold,
        pass: out.pass,
        seconds: start.elapsed().as_secs_f64(),
        budget_seconds: budget,
    }
}

fn experiment(kind: PolicyKind, n: usize, k: usize, m: u64, trials: u64) -> Result<Vec<TrialRecord>> {
    let config = ExperimentConfig::new(n, k, m, PolicySpec::new(kind))?
        .with_trials(trials)
        .with_seed(VERIFY_SEED);
    Ok(run_experiment(&config)?.records)
}

/// Trials that must succeed out of `trials`, keeping the full-scale ratio.
fn required(trials: u64, of_full: u64, full: u64) -> u64 {
    (trials * of_full).div_ceil(full)
}

pub fn random_baseline_load(scale: Scale) -> CheckResult {
    timed(1, "random_baseline_load", 30.0, || {
        let trials = scale.count(20);
        let records = experiment(PolicyKind::Random, 1_000_000, 1, 0, trials)?;
        let loads: Vec<f64> = records.iter().map(|r| r.max_load as f64).collect();
        let median = super::run::Stats::of(&loads).median;
        Ok(Outcome {
            measured: format!("median max_load {median} over {trials} trials"),
            threshold: "in [8, 11]".into(),
            pass: (8.0..=11.0).contains(&median),
        })
    })
}

pub fn random_baseline_collisions(scale: Scale) -> CheckResult {
    timed(2, "random_baseline_collisions", 5.0, || {
        let n = 10_000;
        let trials = scale.count(200);
        let records = experiment(PolicyKind::Random, n, 1, 0, trials)?;
        let mean = records.iter().map(|r| r.col(2).unwrap_or(0) as f64).sum::<f64>() / trials as f64;
        let expected = (n as f64 - 1.0) / 2.0;
        let rel = (mean - expected).abs() / expected;
        Ok(Outcome {
            measured: format!("mean Col_2 {mean:.1} (rel. error {rel:.4})"),
            threshold: format!("within 5% of {expected}"),
            pass: rel <= 0.05,
        })
    })
}

pub fn greedy_two_choice(scale: Scale) -> CheckResult {
    timed(3, "greedy_two_choice", 60.0, || {
        let trials = scale.count(20);
        let records = experiment(PolicyKind::GreedyUnbounded, 1_000_000, 2, 0, trials)?;
        let lo = records.iter().map(|r| r.max_load).min().unwrap_or(0);
        let hi = records.iter().map(|r| r.max_load).max().unwrap_or(0);
        Ok(Outcome {
            measured: format!("max_load range [{lo}, {hi}] over {trials} trials"),
            threshold: "every trial in [3, 5]".into(),
            pass: lo >= 3 && hi <= 5,
        })
    })
}

/// Parameters of the perfect-matching check: `n = 2^18`, `delta = 1/2`,
/// `k = ceil((3/delta) ln n)`, `C = 40`, `m = ceil(C n / k)`.
pub fn perfect_matching_params() -> (usize, usize, u64) {
    let n = 1usize << 18;
    let k = (6.0 * (n as f64).ln()).ceil() as usize;
    let m = (40.0 * n as f64 / k as f64).ceil() as u64;
    (n, k, m)
}

/// Parameters of the basic-matching check: `n = 2^14`, `m = n/2` (blocks
/// of `n/4` bins), `k` the least value with `km >= (3/delta) n ln n`.
pub fn basic_matching_params() -> (usize, usize, u64) {
    let n = 1usize << 14;
    let m = (n / 2) as u64;
    let k = (6.0 * n as f64 * (n as f64).ln() / m as f64).ceil() as usize;
    (n, k, m)
}

fn perfect(records: &[TrialRecord], balls: u64) -> u64 {
    records
        .iter()
        .filter(|r| !r.failed && r.col(2) == Some(0) && r.balls_placed == balls)
        .count() as u64
}

pub fn perfect_matching_above_threshold(scale: Scale) -> CheckResult {
    timed(4, "perfect_matching_threshold", 120.0, || {
        let (n, k, m) = perfect_matching_params();
        let trials = scale.count(20);
        let need = required(trials, 18, 20);
        let records = experiment(PolicyKind::TieredMatching, n, k, m, trials)?;
        let ok = perfect(&records, (n / 2) as u64);
        let cause = records
            .iter()
            .find_map(|r| r.failure_cause)
            .map_or(String::new(), |c| format!(", first failure: {}", c.name()));
        Ok(Outcome {
            measured: format!("{ok}/{trials} perfect (n={n}, k={k}, m={m}{cause})"),
            threshold: format!(">= {need}/{trials}"),
            pass: ok >= need,
        })
    })
}

pub fn basic_matching_regime(scale: Scale) -> CheckResult {
    timed(5, "basic_matching_regime", 30.0, || {
        let (n, k, m) = basic_matching_params();
        let trials = scale.count(20);
        let need = required(trials, 19, 20);
        let records = experiment(PolicyKind::BasicMatching, n, k, m, trials)?;
        let ok = perfect(&records, (n / 2) as u64);
        Ok(Outcome {
            measured: format!("{ok}/{trials} without failure (n={n}, k={k}, m={m})"),
            threshold: format!(">= {need}/{trials}"),
            pass: ok >= need,
        })
    })
}

pub fn collision_floor_below_threshold(scale: Scale) -> CheckResult {
    timed(6, "collision_floor", 60.0, || {
        let n = 1usize << 20;
        let trials = scale.count(20);
        let floor = (n as f64).powi(2) / (16.0 * n as f64);
        let mut worst = Vec::new();
        let mut pass = true;
        for kind in [PolicyKind::Random, PolicyKind::GreedyUnbounded] {
            let records = experiment(kind, n, 2, 64, trials)?;
            let min = records.iter().map(|r| r.col(2).unwrap_or(0)).min().unwrap_or(0);
            pass &= min as f64 >= floor;
            worst.push(format!("{kind} min Col_2 {min}"));
        }
        Ok(Outcome {
            measured: worst.join(", "),
            threshold: format!(">= n/16 = {floor} in every trial"),
            pass,
        })
    })
}

pub fn nonadaptive_cyclic(scale: Scale) -> CheckResult {
    timed(7, "nonadaptive_cyclic", 30.0, || {
        let n = 1usize << 16;
        let trials = scale.count(20);
        let config = ExperimentConfig::new(n, 1, 0, PolicySpec::new(PolicyKind::NonadaptiveCyclic))?
            .with_offer_mode(OfferMode::Bernoulli(0.5))
            .with_trials(trials)
            .with_seed(VERIFY_SEED);
        let records = run_experiment(&config)?.records;
        let upper = 3.0 * (n as f64).ln().sqrt();
        let lo = records.iter().map(|r| r.max_load).min().unwrap_or(0);
        let hi = records.iter().map(|r| r.max_load).max().unwrap_or(0);
        Ok(Outcome {
            measured: format!("max_load range [{lo}, {hi}]"),
            threshold: format!("every trial in [2, {upper:.3}]"),
            pass: lo >= 2 && hi as f64 <= upper && records.iter().all(|r| !r.failed),
        })
    })
}

pub fn claim_sum_lower_bound(scale: Scale) -> CheckResult {
    timed(8, "claim_sum_lower_bound", 10.0, || {
        let sequences = scale.count(1000);
        let base = RngStream::new(VERIFY_SEED).child(8);
        let mut violations = 0;
        let mut min_slack = f64::INFINITY;
        for i in 0..sequences {
            let mut rng = base.child(i).rng();
            let n = rng.gen_range(1..=64);
            let k = rng.gen_range(1..=n);
            let t = rng.gen_range(1..=64);
            let strategies: Vec<_> = (0..t).map(|_| random_capped_strategy(n, k, &mut rng)).collect();
            let c = check_claim_sum_lower_bound(&strategies, t, k, n)?;
            violations += (!c.holds) as u64;
            min_slack = min_slack.min(c.lhs - c.rhs);
        }
        Ok(Outcome {
            measured: format!("{violations} violations in {sequences} sequences (min lhs-rhs {min_slack:.3e})"),
            threshold: "0 violations at relative tolerance 1e-9".into(),
            pass: violations == 0,
        })
    })
}

pub fn packing_bound_tiny(scale: Scale) -> CheckResult {
    timed(9, "packing_bound_tiny", 10.0, || {
        let instances = scale.count(500);
        let base = RngStream::new(VERIFY_SEED).child(9);
        let mut violations = 0;
        let mut nontrivial = 0;
        for i in 0..instances {
            let mut rng = base.child(i).rng();
            let n = rng.gen_range(1..=16);
            let k = rng.gen_range(1..=n);
            let t = rng.gen_range(1..=12);
            let q = rng.gen_range(1..=4);
            let strategies: Vec<_> = (0..t).map(|_| random_capped_strategy(n, k, &mut rng)).collect();
            let c = check_packing_bound(&strategies, t, k, q, 1.0)?;
            violations += (!c.holds) as u64;
            nontrivial += (c.bound > 0.0) as u64;
        }
        Ok(Outcome {
            measured: format!("{violations} violations in {instances} instances ({nontrivial} with a positive bound)"),
            threshold: "0 violations".into(),
            pass: violations == 0,
        })
    })
}

pub fn deviation_event_frequency(scale: Scale) -> CheckResult {
    timed(10, "deviation_event_frequency", 60.0, || {
        let trials = scale.count(10_000);
        let base = RngStream::new(VERIFY_SEED).child(10);
        let mut parts = Vec::new();
        let mut pass = true;
        for (si, scenario) in Scenario::BUILT_IN.iter().enumerate() {
            for (hi, h) in [40.0, 100.0, 200.0].into_iter().enumerate() {
                let r = freedman_event_rate(*scenario, 1.0, h, trials, &base.child(si as u64).child(hi as u64));
                pass &= r.within_bound();
                parts.push(format!(
                    "{}@h={h}: {:.4} vs {:.4}+{:.4}",
                    scenario.name(),
                    r.empirical_rate,
                    r.paper_bound,
                    r.allowance()
                ));
            }
        }
        Ok(Outcome {
            measured: parts.join("; "),
            threshold: "rate <= exp(-h/20 + 2) + 3 sigma".into(),
            pass,
        })
    })
}

pub fn memory_honesty(scale: Scale) -> CheckResult {
    timed(11, "memory_honesty", 150.0, || {
        let trials = scale.count(20).min(4);
        let mut parts = Vec::new();
        let mut pass = true;
        let (n4, k4, m4) = perfect_matching_params();
        let (n5, k5, m5) = basic_matching_params();
        for (kind, n, k, m) in [
            (PolicyKind::TieredMatching, n4, k4, m4),
            (PolicyKind::BasicMatching, n5, k5, m5),
        ] {
            let peak = experiment(kind, n, k, m, trials)?
                .iter()
                .map(|r| r.bits_used_peak)
                .max()
                .unwrap_or(0);
            pass &= peak <= m;
            parts.push(format!("{kind} peak {peak}/{m} bits"));
        }
        // a region one bit past capacity must fail without side effects
        let mut ledger = BitLedger::new(64);
        ledger.alloc_region(40, "a")?;
        let over = ledger.alloc_region(25, "b");
        let clean = matches!(over, Err(Error::BudgetExceeded { .. })) && ledger.bits_used() == 40;
        pass &= clean;
        parts.push(format!("over-allocation {}", if clean { "rejected cleanly" } else { "NOT rejected" }));
        Ok(Outcome {
            measured: parts.join(", "),
            threshold: "bits_used_peak <= m; over-allocation errors".into(),
            pass,
        })
    })
}

pub fn unary_encoding(scale: Scale) -> CheckResult {
    timed(12, "unary_encoding", 1.0, || {
        let vectors = scale.count(1000);
        let base = RngStream::new(VERIFY_SEED).child(12);
        let mut bad = 0;
        for i in 0..vectors {
            let mut rng = base.child(i).rng();
            let n = rng.gen_range(1..=64);
            let b = rng.gen_range(0..=256);
            let mut v = LoadVector::new(n);
            for _ in 0..b {
                v.apply_placement(rng.gen_range(0..n))?;
            }
            let code = unary_encode(&v);
            let ok = code.len() == n + b - 1 && unary_decode(&code, n)? == v;
            bad += (!ok) as u64;
        }
        Ok(Outcome {
            measured: format!("{bad} mismatches in {vectors} vectors"),
            threshold: "round trip exact, length n+b-1".into(),
            pass: bad == 0,
        })
    })
}

/// Parameters of the phase-picture check: `n = 2^16`, one `k`, and
/// `m = ceil(r n / k)` for `r` in `{0.1, 1, 10}`.
pub const PHASE_N: usize = 1 << 16;
pub const PHASE_K: usize = 64;
pub const PHASE_RATIOS: [f64; 3] = [0.1, 1.0, 10.0];

/// Failure rate of one phase-picture cell; a cell whose policy cannot be
/// built at all counts as failing every trial.
pub fn phase_cell_failure_rate(ratio: f64, trials: u64, seed: u64) -> Result<(f64, Option<String>)> {
    let m = (ratio * PHASE_N as f64 / PHASE_K as f64).ceil() as u64;
    let config = ExperimentConfig::new(PHASE_N, PHASE_K, m, PolicySpec::new(PolicyKind::TieredMatching))?
        .with_trials(trials)
        .with_seed(seed);
    match run_experiment(&config) {
        Ok(e) => Ok((e.summary.failure_rate, None)),
        Err(Error::Config(msg)) => Ok((1.0, Some(msg))),
        Err(e) => Err(e),
    }
}

pub fn phase_picture(scale: Scale) -> CheckResult {
    timed(13, "phase_picture", 180.0, || {
        let reps = scale.count(20);
        let trials = scale.count(20);
        let need = required(reps, 18, 20);
        let mut decreasing = 0;
        let mut last = Vec::new();
        let mut notes = Vec::new();
        for rep in 0..reps {
            let mut rates = Vec::new();
            for r in PHASE_RATIOS {
                let (rate, err) = phase_cell_failure_rate(r, trials, VERIFY_SEED + 1000 * rep)?;
                if let Some(msg) = err {
                    if rep == 0 {
                        notes.push(format!("km/n={r} unbuildable: {msg}"));
                    }
                }
                rates.push(rate);
            }
            decreasing += rates.windows(2).all(|w| w[1] < w[0]) as u64;
            last = rates;
        }
        let mut measured = format!(
            "{decreasing}/{reps} repetitions strictly decreasing (k={PHASE_K}, last rates {last:?})"
        );
        if !notes.is_empty() {
            measured.push_str(&format!("; {}", notes.join("; ")));
        }
        Ok(Outcome {
            measured,
            threshold: format!(">= {need}/{reps}"),
            pass: decreasing >= need,
        })
    })
}

/// Summary CSV columns must match the documented schema exactly.
pub const GOLDEN_SUMMARY_HEADER: &str = "n,k,m,km_over_n,policy,delta,capital_c,offer_mode,balls,trials,failure_rate,max_load_mean,max_load_median,max_load_max,col2_mean,col2_median,bits_used_peak,thm2_bound,random_alloc_bound,error";
pub const GOLDEN_TRIAL_HEADER: &str = "trial_index,base_seed,balls,balls_placed,max_load,col_2,failed,failure_cause,failure_round,failure_phase,bits_used_peak,wall_time";

pub fn csv_schema(_scale: Scale) -> CheckResult {
    timed(14, "csv_schema", 1.0, || {
        let summary = super::output::SUMMARY_COLUMNS.join(",");
        let trial = super::output::trial_columns(&[2]).join(",");
        let pass = summary == GOLDEN_SUMMARY_HEADER && trial == GOLDEN_TRIAL_HEADER;
        Ok(Outcome {
            measured: format!("{} summary / {} trial columns", summary.split(',').count(), trial.split(',').count()),
            threshold: "identical to the documented headers".into(),
            pass,
        })
    })
}

pub fn reproducibility(scale: Scale) -> CheckResult {
    timed(15, "reproducibility", 10.0, || {
        let config = ExperimentConfig::new(4096, 512, 320, PolicySpec::new(PolicyKind::TieredMatching))?
            .with_trials(scale.count(10))
            .with_seed(VERIFY_SEED);
        let serial = super::run::run_experiment_with(&config, super::run::Execution::Serial)?.records;
        let parallel = run_experiment(&config)?.records;
        let again = run_experiment(&config)?.records;
        let same = serial.len() == parallel.len()
            && serial.iter().zip(&parallel).zip(&again).all(|((a, b), c)| a.same_outcome(b) && b.same_outcome(c));
        Ok(Outcome {
            measured: format!("{} trials, serial/parallel/rerun {}", serial.len(), if same { "identical" } else { "DIFFER" }),
            threshold: "identical records".into(),
            pass: same,
        })
    })
}

pub type Check = fn(Scale) -> CheckResult;

pub const CHECKS: [Check; 15] = [
    random_baseline_load,
    random_baseline_collisions,
    greedy_two_choice,
    perfect_matching_above_threshold,
    basic_matching_regime,
    collision_floor_below_threshold,
    nonadaptive_cyclic,
    claim_sum_lower_bound,
    packing_bound_tiny,
    deviation_event_frequency,
    memory_honesty,
    unary_encoding,
    phase_picture,
    csv_schema,
    reproducibility,
];

pub fn verify(scale: Scale) -> Vec<CheckResult> {
    CHECKS.iter().map(|check| check(scale)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_parameters() {
        assert_eq!(perfect_matching_params(), (1 << 18, 75, 139_811));
        let (n, k, m) = basic_matching_params();
        assert_eq!((n, k, m), (1 << 14, 117, 8192));
        assert!(k as f64 * m as f64 >= 6.0 * n as f64 * (n as f64).ln());
        assert!(((k - 1) as f64 * m as f64) < 6.0 * n as f64 * (n as f64).ln());
    }

    #[test]
    fn quick_counts() {
        assert_eq!(Scale::Quick.count(20), 4);
        assert_eq!(Scale::Quick.count(3), 2);
        assert_eq!(Scale::Full.count(20), 20);
        assert_eq!(required(4, 18, 20), 4);
        assert_eq!(required(20, 19, 20), 19);
    }

    #[test]
    fn cheap_checks_pass_quickly() {
        for check in [claim_sum_lower_bound, packing_bound_tiny, unary_encoding, csv_schema, reproducibility] {
            let r = check(Scale::Quick);
            assert!(r.pass, "{r}");
        }
    }
}
