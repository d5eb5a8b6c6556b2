//! Checkable quantities from the lower-bound machinery.
//!
//! The relaxed allocation model replaces "pick one of k offered bins" by
//! "pick a distribution over bins with every entry at most k/n". The
//! functions here evaluate the collision predictors and the deterministic
//! inequalities of that model, estimate how often the martingale deviation
//! event fires, and tabulate the asymptotic load formulas.

mod bounds;
mod freedman;

pub use bounds::{theoretical_bounds, BoundReport};
pub use freedman::{freedman_event_rate, FreedmanResult, Scenario};

use crate::error::{Error, Result};

/// Slack allowed on probability sums and the `k/n` cap.
const DIST_TOL: f64 = 1e-12;
/// Relative tolerance for the exact inequalities.
pub const REL_TOL: f64 = 1e-9;

/// A strategy of the relaxed model: a distribution over `n` bins with
/// every entry at most `k/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyDistribution {
    probs: Vec<f64>,
    cap: f64,
}

impl StrategyDistribution {
    pub fn new(probs: Vec<f64>, k: usize) -> Result<Self> {
        let n = probs.len();
        if n == 0 {
            return Err(Error::invalid("strategy over zero bins"));
        }
        let cap = k as f64 / n as f64;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DIST_TOL {
            return Err(Error::invalid(format!("strategy sums to {sum}, not 1")));
        }
        if let Some((i, &p)) = probs
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p >= 0.0 && p <= cap + DIST_TOL))
        {
            return Err(Error::invalid(format!("strategy entry {i} = {p} outside [0, k/n = {cap}]")));
        }
        Ok(StrategyDistribution { probs, cap })
    }

    /// Uniform over all `n` bins.
    pub fn uniform(n: usize, k: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n], k)
    }

    /// Mass `k/n` on each of the first `n/k` bins (requires `k | n`).
    pub fn capped_prefix(n: usize, k: usize) -> Result<Self> {
        if k == 0 || !n.is_multiple_of(k) {
            return Err(Error::invalid(format!("capped prefix needs k | n (n={n}, k={k})")));
        }
        let cap = k as f64 / n as f64;
        let probs = (0..n).map(|i| if i < n / k { cap } else { 0.0 }).collect();
        Self::new(probs, k)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n(&self) -> usize {
        self.probs.len()
    }

    pub fn cap(&self) -> f64 {
        self.cap
    }

    pub fn inner(&self, other: &StrategyDistribution) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| a * b).sum()
    }
}

/// Realized and predicted collision increments of a run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PredictionTrace {
    /// `x_s = N_{s-1}(J_s)`: balls already in the bin ball `s` lands in.
    pub x: Vec<u64>,
    /// `v_s = sum_i Q_s(i) N_{s-1}(i)`: the conditional expectation of `x_s`.
    pub v: Vec<f64>,
    /// Running sums of `x`; `X_t` equals `Col_2` after `t` balls.
    pub cum_x: Vec<u64>,
    pub cum_v: Vec<f64>,
}

pub fn collision_predictor(
    strategies: &[StrategyDistribution],
    placements: &[usize],
) -> Result<PredictionTrace> {
    if strategies.len() != placements.len() {
        return Err(Error::invalid(format!(
            "{} strategies but {} placements",
            strategies.len(),
            placements.len()
        )));
    }
    let Some(n) = strategies.first().map(StrategyDistribution::n) else {
        return Ok(PredictionTrace::default());
    };
    let mut loads = vec![0u64; n];
    let mut trace = PredictionTrace::default();
    let (mut sx, mut sv) = (0u64, 0f64);
    for (q, &bin) in strategies.iter().zip(placements) {
        if q.n() != n || bin >= n {
            return Err(Error::invalid("strategies and placements disagree on n"));
        }
        let x = loads[bin];
        let v: f64 = q.probs().iter().zip(&loads).map(|(p, &c)| p * c as f64).sum();
        sx += x;
        sv += v;
        trace.x.push(x);
        trace.v.push(v);
        trace.cum_x.push(sx);
        trace.cum_v.push(sv);
        loads[bin] += 1;
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaimCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn check_strategies(strategies: &[StrategyDistribution], n: usize, k: usize) -> Result<()> {
    let cap = k as f64 / n as f64;
    for (s, q) in strategies.iter().enumerate() {
        if q.n() != n {
            return Err(Error::invalid(format!("strategy {s} is over {} bins, expected {n}", q.n())));
        }
        if q.probs().iter().any(|&p| p > cap + DIST_TOL) {
            return Err(Error::invalid(format!("strategy {s} exceeds the k/n cap")));
        }
    }
    Ok(())
}

/// `sum_{s<=t} V_{s-1}^{Q_s} = sum_{r<s<=t} <Q_r, Q_s>` against
/// `t (t - k) / (2n)`, which holds for every capped strategy sequence.
pub fn check_claim_sum_lower_bound(
    strategies: &[StrategyDistribution],
    t: usize,
    k: usize,
    n: usize,
) -> Result<ClaimCheck> {
    if t > strategies.len() {
        return Err(Error::invalid(format!("t = {t} but only {} strategies", strategies.len())));
    }
    let used = &strategies[..t];
    check_strategies(used, n, k)?;
    let mut lhs = 0.0;
    for s in 0..t {
        for r in 0..s {
            lhs += used[r].inner(&used[s]);
        }
    }
    let rhs = t as f64 * (t as f64 - k as f64) / (2.0 * n as f64);
    Ok(ClaimCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - REL_TOL * rhs.abs(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackingCheck {
    pub v1q: f64,
    pub bound: f64,
    pub holds: bool,
}

pub const PACKING_MAX_T: usize = 12;
pub const PACKING_MAX_Q: usize = 4;
pub const PACKING_MAX_N: usize = 16;

/// `V_t^{1;q} = sum_{s_1<...<s_q<=t} sum_i Q_{s_1}(i) ... Q_{s_q}(i)` by
/// explicit enumeration of the index tuples.
pub fn v1q_brute_force(strategies: &[StrategyDistribution], q: usize) -> f64 {
    fn rec(strats: &[StrategyDistribution], q: usize, from: usize, prod: &mut Vec<f64>) -> f64 {
        if q == 0 {
            return prod.iter().sum();
        }
        let mut total = 0.0;
        for s in from..strats.len() {
            let saved = prod.clone();
            for (p, &x) in prod.iter_mut().zip(strats[s].probs()) {
                *p *= x;
            }
            total += rec(strats, q - 1, s + 1, prod);
            *prod = saved;
        }
        total
    }
    let Some(n) = strategies.first().map(StrategyDistribution::n) else {
        return 0.0;
    };
    rec(strategies, q, 0, &mut vec![1.0; n])
}

/// `(t - (1+alpha) k q)^q / (e^{q/(2 alpha)} n^{q-1} q!)`, clamped to 0
/// when the base is not positive.
pub fn packing_bound(t: usize, k: usize, q: usize, n: usize, alpha: f64) -> f64 {
    let base = t as f64 - (1.0 + alpha) * k as f64 * q as f64;
    if base <= 0.0 {
        return 0.0;
    }
    let q_fact: f64 = (1..=q).map(|i| i as f64).product();
    base.powi(q as i32) / ((q as f64 / (2.0 * alpha)).exp() * (n as f64).powi(q as i32 - 1) * q_fact)
}

pub fn check_packing_bound(
    strategies: &[StrategyDistribution],
    t: usize,
    k: usize,
    q: usize,
    alpha: f64,
) -> Result<PackingCheck> {
    let n = strategies.first().map_or(0, StrategyDistribution::n);
    if t > PACKING_MAX_T || q > PACKING_MAX_Q || n > PACKING_MAX_N {
        return Err(Error::invalid(format!(
            "instance too large for enumeration (t={t}, q={q}, n={n}; limits {PACKING_MAX_T}, {PACKING_MAX_Q}, {PACKING_MAX_N})"
        )));
    }
    if q == 0 || t > strategies.len() || !(alpha > 0.0) {
        return Err(Error::invalid(format!("need q >= 1, alpha > 0 and t <= {}", strategies.len())));
    }
    let used = &strategies[..t];
    check_strategies(used, n, k)?;
    let v1q = v1q_brute_force(used, q);
    let bound = packing_bound(t, k, q, n, alpha);
    Ok(PackingCheck {
        v1q,
        bound,
        holds: v1q >= bound - REL_TOL,
    })
}

/// A random strategy over `n` bins respecting the `k/n` cap: water-fill
/// random weights under the cap.
pub fn random_capped_strategy<R: rand::Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> StrategyDistribution {
    let cap = k as f64 / n as f64;
    let mut w: Vec<f64> = (0..n)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    if w.iter().sum::<f64>() <= 0.0 {
        w.iter_mut().for_each(|x| *x = 1.0);
    }
    // scale the uncapped entries so the total is 1, capping as needed;
    // terminates because k >= 1 leaves room for mass 1
    let mut probs = vec![0.0; n];
    let mut fixed = vec![false; n];
    loop {
        let fixed_mass: f64 = (0..n).filter(|&i| fixed[i]).map(|i| probs[i]).sum();
        let free_weight: f64 = (0..n).filter(|&i| !fixed[i]).map(|i| w[i]).sum();
        let scale = (1.0 - fixed_mass) / free_weight;
        let mut changed = false;
        for i in 0..n {
            if !fixed[i] {
                probs[i] = w[i] * scale;
                if probs[i] > cap {
                    probs[i] = cap;
                    fixed[i] = true;
                    changed = true;
                }
            }
        }
        if !changed || free_weight <= 0.0 {
            break;
        }
        if (0..n).all(|i| fixed[i] || w[i] == 0.0) {
            // every positive-weight bin is capped; spread the rest evenly
            let rest = 1.0 - (0..n).filter(|&i| fixed[i]).map(|i| probs[i]).sum::<f64>();
            let open: Vec<usize> = (0..n).filter(|&i| !fixed[i]).collect();
            if rest > 0.0 {
                for &i in &open {
                    probs[i] = rest / open.len() as f64;
                }
            }
            break;
        }
    }
    let sum: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= sum);
    probs.iter_mut().for_each(|p| *p = p.min(cap));
    let sum: f64 = probs.iter().sum();
    StrategyDistribution::new(probs.iter().map(|p| p / sum).collect(), k)
        .expect("water-filled strategy is valid")
}
