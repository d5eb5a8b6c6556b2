//! Balls-and-bins ground truth: problem sizes, offers, loads and collision
//! statistics. Bins are 0-indexed.

use rand::Rng;

use crate::error::{Error, Result};

/// Sizes of one allocation problem: `n` bins, `b` balls, `k` choices per
/// round and an `m`-bit persistent state budget.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProblemSize {
    pub n: usize,
    pub b: usize,
    pub k: usize,
    pub m: u64,
}

impl ProblemSize {
    pub fn new(n: usize, b: usize, k: usize, m: u64) -> Result<Self> {
        let size = ProblemSize { n, b, k, m };
        size.validate()?;
        Ok(size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        if self.k == 0 || self.k > self.n {
            return Err(Error::invalid(format!(
                "k must satisfy 1 <= k <= n (k={}, n={})",
                self.k, self.n
            )));
        }
        if self.b > self.n {
            return Err(Error::invalid(format!(
                "b must not exceed n (b={}, n={})",
                self.b, self.n
            )));
        }
        Ok(())
    }

    /// `k*m/n`, the quantity that governs the choice-memory tradeoff.
    pub fn km_over_n(&self) -> f64 {
        self.k as f64 * self.m as f64 / self.n as f64
    }
}

/// Per-bin ball counts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LoadVector {
    counts: Vec<u32>,
    total: u64,
}

impl LoadVector {
    pub fn new(n: usize) -> Self {
        LoadVector {
            counts: vec![0; n],
            total: 0,
        }
    }

    pub fn from_counts(counts: Vec<u32>) -> Self {
        let total = counts.iter().map(|&c| c as u64).sum();
        LoadVector { counts, total }
    }

    pub fn n(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn get(&self, bin: usize) -> u32 {
        self.counts[bin]
    }

    /// Number of balls placed so far.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn apply_placement(&mut self, bin: usize) -> Result<()> {
        let n = self.counts.len();
        let slot = self
            .counts
            .get_mut(bin)
            .ok_or_else(|| Error::invalid(format!("bin {bin} out of range for n={n}")))?;
        *slot += 1;
        self.total += 1;
        Ok(())
    }

    pub fn max_load(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// `Col_q = sum_i C(N(i), q)`, the number of q-subsets of balls that
    /// share a bin. Computed in 128-bit arithmetic; overflow is an error.
    pub fn collisions(&self, q: u32) -> Result<u128> {
        if q < 2 {
            return Err(Error::invalid(format!("collision order q must be >= 2, got {q}")));
        }
        let mut sum: u128 = 0;
        for &c in &self.counts {
            let term = binomial(c as u64, q as u64)?;
            sum = sum
                .checked_add(term)
                .ok_or_else(|| Error::Overflow(format!("Col_{q} exceeds u128")))?;
        }
        Ok(sum)
    }

    /// `Col_2`. Cannot overflow for any vector that fits in memory.
    pub fn col2(&self) -> u128 {
        self.counts
            .iter()
            .map(|&c| {
                let c = c as u128;
                c * c.saturating_sub(1) / 2
            })
            .sum()
    }
}

/// Exact binomial coefficient, `0` when `a < q`.
pub fn binomial(a: u64, q: u64) -> Result<u128> {
    if q > a {
        return Ok(0);
    }
    let q = q.min(a - q);
    let mut acc: u128 = 1;
    for i in 1..=q as u128 {
        // acc * (a - q + i) / i stays integral at every step
        acc = acc
            .checked_mul(a as u128 - q as u128 + i)
            .ok_or_else(|| Error::Overflow(format!("C({a},{q}) exceeds u128")))?
            / i;
    }
    Ok(acc)
}

/// One round's choice set.
#[derive(Debug, Clone, PartialEq)]
pub enum Offer {
    /// `k` bins in draw order.
    Uniform {
        bins: Vec<usize>,
        repetitions_allowed: bool,
    },
    /// Bins included independently with probability `alpha`, ascending.
    Bernoulli { included: Vec<usize>, alpha: f64 },
}

impl Offer {
    /// Offered bins; draw order for uniform offers, ascending for Bernoulli.
    pub fn bins(&self) -> &[usize] {
        match self {
            Offer::Uniform { bins, .. } => bins,
            Offer::Bernoulli { included, .. } => included,
        }
    }

    pub fn contains(&self, bin: usize) -> bool {
        match self {
            Offer::Uniform { bins, .. } => bins.contains(&bin),
            Offer::Bernoulli { included, .. } => included.binary_search(&bin).is_ok(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.bins().is_empty()
    }
}

/// Draws `k` uniform bins out of `n`, i.i.d. with repetitions or as a
/// uniformly random k-subset in draw order.
pub fn sample_offer_uniform<R: Rng + ?Sized>(
    n: usize,
    k: usize,
    repetitions_allowed: bool,
    rng: &mut R,
) -> Result<Offer> {
    let mut bins = Vec::with_capacity(k);
    fill_uniform(&mut bins, n, k, repetitions_allowed, rng)?;
    Ok(Offer::Uniform {
        bins,
        repetitions_allowed,
    })
}

/// Buffer-reusing form of [`sample_offer_uniform`].
pub fn fill_uniform<R: Rng + ?Sized>(
    bins: &mut Vec<usize>,
    n: usize,
    k: usize,
    repetitions_allowed: bool,
    rng: &mut R,
) -> Result<()> {
    if n == 0 || k == 0 {
        return Err(Error::invalid(format!("need n >= 1 and k >= 1 (n={n}, k={k})")));
    }
    bins.clear();
    if repetitions_allowed {
        // draw as u64 so the stream does not depend on pointer width
        bins.extend((0..k).map(|_| rng.gen_range(0..n as u64) as usize));
    } else {
        if k > n {
            return Err(Error::invalid(format!(
                "cannot draw {k} distinct bins out of {n}"
            )));
        }
        bins.extend(rand::seq::index::sample(rng, n, k));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0,1), got {alpha}")));
    }
    Ok(())
}

/// Includes each of the `n` bins independently with probability `alpha`.
pub fn sample_offer_bernoulli<R: Rng + ?Sized>(n: usize, alpha: f64, rng: &mut R) -> Result<Offer> {
    check_alpha(alpha)?;
    let included = (0..n).filter(|_| rng.gen_bool(alpha)).collect();
    Ok(Offer::Bernoulli { included, alpha })
}

/// Lazily reveals a Bernoulli offer in cyclic order starting just after
/// `start`. Reading the inclusion coins in this order has the same law as
/// sampling the whole set first, but a scan that stops at the first
/// included bin costs `1/alpha` draws on average instead of `n`.
pub struct BernoulliScan<'a, R: Rng + ?Sized> {
    n: usize,
    alpha: f64,
    start: usize,
    step: usize,
    rng: &'a mut R,
}

impl<'a, R: Rng + ?Sized> BernoulliScan<'a, R> {
    pub fn new(n: usize, alpha: f64, start: usize, rng: &'a mut R) -> Result<Self> {
        check_alpha(alpha)?;
        if n == 0 {
            return Err(Error::invalid("n must be at least 1"));
        }
        Ok(BernoulliScan {
            n,
            alpha,
            start: start % n,
            step: 0,
            rng,
        })
    }
}

impl<R: Rng + ?Sized> Iterator for BernoulliScan<'_, R> {
    type Item = usize;

    /// Next included bin at cyclic distance 1, 2, ..., n from `start`.
    fn next(&mut self) -> Option<usize> {
        while self.step < self.n {
            self.step += 1;
            if self.rng.gen_bool(self.alpha) {
                return Some((self.start + self.step) % self.n);
            }
        }
        None
    }
}
