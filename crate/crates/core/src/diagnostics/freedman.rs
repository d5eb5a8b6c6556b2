use rand::Rng;
use rayon::prelude::*;

use crate::rng::RngStream;

/// Built-in adapted sequences with `0 <= X_i <= M` and `Y_i = E[X_i | past]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Scenario {
    /// Indicator (scaled by `M`) that a ball lands in a fixed set `S` of
    /// `n/k` bins, under capped strategies chosen from the previous outcome:
    /// uniform over all bins after a hit, a `k/n`-capped window half inside
    /// `S` after a miss.
    CappedUniformAllocation,
    /// `X_i = M * Bernoulli(p_i)` where `p_i` steps up after a head and down
    /// after a tail, clamped to `[0.05, 0.95]`.
    DriftingCoin,
    /// `X_i = Y_i = c` for every `i`.
    Constant(f64),
}

impl Scenario {
    pub const BUILT_IN: [Scenario; 2] = [Scenario::CappedUniformAllocation, Scenario::DriftingCoin];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::CappedUniformAllocation => "capped_uniform_allocation",
            Scenario::DriftingCoin => "drifting_coin",
            Scenario::Constant(_) => "constant",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FreedmanResult {
    pub empirical_rate: f64,
    pub paper_bound: f64,
    pub events: u64,
    pub trials: u64,
}

impl FreedmanResult {
    /// Three binomial standard deviations at the bound's rate.
    pub fn allowance(&self) -> f64 {
        let p = self.paper_bound.min(1.0);
        3.0 * (p * (1.0 - p) / self.trials as f64).sqrt()
    }

    pub fn within_bound(&self) -> bool {
        self.empirical_rate <= self.paper_bound + self.allowance()
    }
}

const ALLOC_N: usize = 64;
const ALLOC_K: usize = 4;
/// Each trial runs until the cumulative conditional mean reaches this
/// multiple of `h`; past it a relative deviation of 1/2 is vanishingly rare.
const HORIZON_FACTOR: f64 = 8.0;
const MAX_STEPS: u64 = 50_000_000;

fn step<R: Rng>(scenario: Scenario, m: f64, state: &mut (bool, f64), rng: &mut R) -> (f64, f64) {
    match scenario {
        Scenario::CappedUniformAllocation => {
            // S = bins [0, n/k); a hit is a ball landing in S
            let s_len = ALLOC_N / ALLOC_K;
            let (lo, len) = if state.0 { (0, ALLOC_N) } else { (s_len / 2, s_len) };
            let bin = lo + rng.gen_range(0..len);
            let q_s = (s_len.min(lo + len).saturating_sub(lo)) as f64 / len as f64;
            let hit = bin < s_len;
            state.0 = hit;
            (if hit { m } else { 0.0 }, m * q_s)
        }
        Scenario::DriftingCoin => {
            let p = state.1;
            let head = rng.gen_bool(p);
            state.1 = (p + if head { 0.05 } else { -0.05 }).clamp(0.05, 0.95);
            (if head { m } else { 0.0 }, m * p)
        }
        Scenario::Constant(c) => (c, c),
    }
}

fn trial_fires(scenario: Scenario, m: f64, h: f64, stream: &RngStream) -> bool {
    let mut rng = stream.rng();
    let mut state = (false, 0.5);
    let (mut sx, mut sy) = (0.0, 0.0);
    let horizon = HORIZON_FACTOR * h;
    for _ in 0..MAX_STEPS {
        let (x, y) = step(scenario, m, &mut state, &mut rng);
        sx += x;
        sy += y;
        if sy >= h && (sx / sy - 1.0).abs() >= 0.5 {
            return true;
        }
        if sy >= horizon {
            break;
        }
    }
    false
}

/// Fraction of trials in which `|sum X / sum Y - 1| >= 1/2` while
/// `sum Y >= h`, against `exp(-h/(20M) + 2)`.
pub fn freedman_event_rate(scenario: Scenario, m: f64, h: f64, trials: u64, stream: &RngStream) -> FreedmanResult {
    let events = (0..trials)
        .into_par_iter()
        .filter(|&i| trial_fires(scenario, m, h, &stream.child(i)))
        .count() as u64;
    FreedmanResult {
        empirical_rate: if trials == 0 { 0.0 } else { events as f64 / trials as f64 },
        paper_bound: (-h / (20.0 * m) + 2.0).exp(),
        events,
        trials,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_values() {
        let r = freedman_event_rate(Scenario::Constant(1.0), 1.0, 100.0, 1, &RngStream::new(0));
        assert!((r.paper_bound - (-3f64).exp()).abs() < 1e-15);
        let r = freedman_event_rate(Scenario::Constant(1.0), 1.0, 40.0, 1, &RngStream::new(0));
        assert!(r.paper_bound >= 1.0 && r.within_bound());
    }

    #[test]
    fn constant_sequence_never_fires() {
        let r = freedman_event_rate(Scenario::Constant(0.7), 1.0, 50.0, 100, &RngStream::new(1));
        assert_eq!(r.events, 0);
        assert_eq!(r.empirical_rate, 0.0);
    }

    #[test]
    fn allocation_increments_are_conditional_means() {
        // hit frequency after a miss must match Q(S) = 1/2, after a hit 1/k
        let mut rng = RngStream::new(2).rng();
        let mut state = (false, 0.5);
        let mut counts = [[0u64; 2]; 2];
        for _ in 0..400_000 {
            let prev = state.0 as usize;
            let (x, y) = step(Scenario::CappedUniformAllocation, 1.0, &mut state, &mut rng);
            assert_eq!(y, if prev == 1 { 0.25 } else { 0.5 });
            counts[prev][(x > 0.0) as usize] += 1;
        }
        let after_miss = counts[0][1] as f64 / (counts[0][0] + counts[0][1]) as f64;
        let after_hit = counts[1][1] as f64 / (counts[1][0] + counts[1][1]) as f64;
        assert!((after_miss - 0.5).abs() < 0.01, "{after_miss}");
        assert!((after_hit - 0.25).abs() < 0.01, "{after_hit}");
    }

    #[test]
    fn reproducible() {
        let s = RngStream::new(9);
        let a = freedman_event_rate(Scenario::DriftingCoin, 1.0, 20.0, 300, &s);
        let b = freedman_event_rate(Scenario::DriftingCoin, 1.0, 20.0, 300, &s);
        assert_eq!(a, b);
        assert!(a.events > 0);
    }
}
