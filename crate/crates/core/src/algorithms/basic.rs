use log::warn;

use super::{AllocationPolicy, FailureCause, PolicyKind, PolicyOutcome, PolicySpec, RoundContext};
use crate::error::{Error, Result};
use crate::membits::{bits_for, BitLedger, RegionHandle};
use crate::model::ProblemSize;

/// Stage-by-stage matching into one block at a time.
///
/// Bins are cut into `l` contiguous blocks of `floor(m/2)` bins, the last
/// block absorbing the remainder. Stage `j` tracks only block `j` with one
/// occupancy bit per bin and places `floor((1-delta)|B_j|)` balls there,
/// always in the lowest-indexed offered bin still marked empty. The ledger
/// holds the bitmap and the stage index; balls placed in the current stage
/// are the bitmap's popcount.
pub struct BasicMatching {
    n: usize,
    block_size: usize,
    blocks: usize,
    stage_quota: Vec<u64>,
    /// Balls the final stage may take beyond its own quota so the stages
    /// add up to `floor((1-delta) n)`.
    final_slack: u64,
    ledger: BitLedger,
    bitmap: RegionHandle,
    stage: RegionHandle,
    stage_width: u32,
}

impl BasicMatching {
    pub fn new(spec: &PolicySpec, size: &ProblemSize) -> Result<Self> {
        spec.validate()?;
        let n = size.n;
        let m = size.m;
        if (m as f64) < 2.0 * (n as f64).log2() {
            return Err(Error::invalid(format!(
                "basic matching needs m >= 2 log2 n to hold the bitmap and stage counter (m={m}, n={n})"
            )));
        }
        // A single block covering every bin when the budget allows it,
        // otherwise half-budget blocks so the stage counter fits beside the
        // bitmap.
        let (block_size, blocks) = if m >= n as u64 {
            (n, 1)
        } else {
            let half = (m / 2) as usize;
            (half, n / half)
        };
        let block_len = |j: usize| {
            if j + 1 == blocks {
                n - j * block_size
            } else {
                block_size
            }
        };
        if spec.delta * (block_size as f64) < 1.0 {
            return Err(Error::invalid(format!(
                "delta * |B_j| < 1 (delta={}, block size {block_size})",
                spec.delta
            )));
        }
        let stage_quota: Vec<u64> = (0..blocks)
            .map(|j| ((1.0 - spec.delta) * block_len(j) as f64).floor() as u64)
            .collect();
        let target = ((1.0 - spec.delta) * n as f64).floor() as u64;
        let final_slack = target.saturating_sub(stage_quota.iter().sum());

        let km = size.k as f64 * m as f64;
        let need = 3.0 / spec.delta * n as f64 * (n as f64).ln();
        if km < need {
            warn!("basic matching: km = {km} is below (3/delta) n ln n = {need:.1}");
        }

        let mut ledger = BitLedger::new(m);
        let bitmap = ledger.alloc_region(block_len(blocks - 1) as u64, "basic.bitmap")?;
        let stage_width = bits_for(blocks as u64 - 1);
        let stage = ledger.alloc_region(stage_width as u64, "basic.stage")?;
        Ok(BasicMatching {
            n,
            block_size,
            blocks,
            stage_quota,
            final_slack,
            ledger,
            bitmap,
            stage,
            stage_width,
        })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn current_stage(&self) -> usize {
        self.ledger.read_uint(&self.stage, 0, self.stage_width).expect("stage region") as usize
    }

    /// Bin range of block `j`.
    pub fn block_range(&self, j: usize) -> std::ops::Range<usize> {
        let start = j * self.block_size;
        let end = if j + 1 == self.blocks {
            self.n
        } else {
            start + self.block_size
        };
        start..end
    }

    /// Whether bin `bin` of the current block is marked occupied.
    pub fn is_marked(&self, bin: usize) -> bool {
        let range = self.block_range(self.current_stage());
        range.contains(&bin)
            && self
                .ledger
                .get_bit(&self.bitmap, (bin - range.start) as u64)
                .expect("bitmap region")
    }
}

impl AllocationPolicy for BasicMatching {
    fn kind(&self) -> PolicyKind {
        PolicyKind::BasicMatching
    }

    fn decide(&mut self, ctx: &RoundContext<'_>) -> PolicyOutcome {
        let stage = self.current_stage();
        let range = self.block_range(stage);
        let placed = self.ledger.count_ones(&self.bitmap).expect("bitmap region");
        let last = stage + 1 == self.blocks;
        if last && placed >= self.stage_quota[stage] + self.final_slack {
            return PolicyOutcome::failed(FailureCause::StagePreconditionViolated);
        }

        let chosen = ctx
            .offer
            .bins()
            .iter()
            .copied()
            .filter(|b| range.contains(b))
            .filter(|&b| {
                !self
                    .ledger
                    .get_bit(&self.bitmap, (b - range.start) as u64)
                    .expect("bitmap region")
            })
            .min();
        let Some(bin) = chosen else {
            return PolicyOutcome::failed(FailureCause::MissAllArrays);
        };
        self.ledger
            .set_bit(&self.bitmap, (bin - range.start) as u64, true)
            .expect("bitmap region");
        if !last && placed + 1 >= self.stage_quota[stage] {
            self.ledger.clear_region(&self.bitmap).expect("bitmap region");
            self.ledger
                .write_uint(&self.stage, 0, self.stage_width, stage as u64 + 1)
                .expect("stage region");
        }
        PolicyOutcome::Placed { bin }
    }

    fn bits_used(&self) -> u64 {
        self.ledger.bits_used()
    }

    fn ledger(&self) -> Option<&BitLedger> {
        Some(&self.ledger)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fill_uniform, LoadVector, Offer};
    use crate::rng::RngStream;

    fn offer(bins: &[usize]) -> Offer {
        Offer::Uniform {
            bins: bins.to_vec(),
            repetitions_allowed: true,
        }
    }

    fn basic(n: usize, k: usize, m: u64) -> BasicMatching {
        let size = ProblemSize::new(n, n / 2, k, m).unwrap();
        BasicMatching::new(&PolicySpec::new(PolicyKind::BasicMatching), &size).unwrap()
    }

    fn decide(p: &mut BasicMatching, bins: &[usize], round: u64) -> PolicyOutcome {
        let loads = LoadVector::new(p.n);
        p.decide(&RoundContext {
            offer: &offer(bins),
            loads: &loads,
            round,
        })
    }

    #[test]
    fn layout_uses_half_budget_blocks() {
        let p = basic(100, 10, 20);
        assert_eq!(p.block_size(), 10);
        assert_eq!(p.blocks(), 10);
        assert_eq!(p.block_range(9), 90..100);
        let p = basic(105, 10, 20);
        assert_eq!(p.blocks(), 10);
        assert_eq!(p.block_range(9), 90..105);
        assert_eq!(p.bits_used(), 15 + 4);
    }

    #[test]
    fn places_lowest_indexed_empty_bin_of_current_block() {
        let mut p = basic(100, 10, 20);
        assert_eq!(decide(&mut p, &[55, 7, 3, 9], 0), PolicyOutcome::Placed { bin: 3 });
        assert!(p.is_marked(3));
        assert_eq!(decide(&mut p, &[3, 42], 1), PolicyOutcome::failed(FailureCause::MissAllArrays));
        assert_eq!(decide(&mut p, &[50, 60, 70], 1), PolicyOutcome::failed(FailureCause::MissAllArrays));
    }

    #[test]
    fn stage_advances_after_quota() {
        // blocks of 10, quota 5 per stage
        let mut p = basic(100, 10, 20);
        for (r, b) in [0usize, 1, 2, 3, 4].into_iter().enumerate() {
            assert_eq!(decide(&mut p, &[b], r as u64), PolicyOutcome::Placed { bin: b });
        }
        assert_eq!(p.current_stage(), 1);
        assert!(!p.is_marked(10));
        assert_eq!(decide(&mut p, &[5, 12], 5), PolicyOutcome::Placed { bin: 12 });
    }

    #[test]
    fn final_stage_stops_at_total_quota() {
        let mut p = basic(20, 4, 20);
        // m >= n: one block of 20 bins, quota 10
        assert_eq!(p.blocks(), 1);
        for b in 0..10 {
            assert_eq!(decide(&mut p, &[b], b as u64), PolicyOutcome::Placed { bin: b });
        }
        assert_eq!(
            decide(&mut p, &[15], 10),
            PolicyOutcome::failed(FailureCause::StagePreconditionViolated)
        );
    }

    #[test]
    fn parameter_guards() {
        let spec = PolicySpec::new(PolicyKind::BasicMatching);
        let size = ProblemSize::new(1 << 10, 1 << 9, 4, 19).unwrap();
        assert!(matches!(BasicMatching::new(&spec, &size), Err(Error::InvalidParameter(_))));
        let size = ProblemSize::new(64, 32, 4, 12).unwrap();
        let tight = spec.with_delta(0.1);
        assert!(matches!(BasicMatching::new(&tight, &size), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn miss_rate_within_closed_form() {
        // n = 2^12, m = 2^9, delta = 1/2, k = 2^9. Blocks of 256 bins with
        // quota 128, so at least m/2 - r = 128 empty bins remain in every
        // round: P(miss) <= (1 - 128/n)^k.
        let n = 1usize << 12;
        let k = 1usize << 9;
        let m = 1u64 << 9;
        let empty = (m / 2) as f64 - ((m / 2) as f64 * 0.5).floor();
        let bound = (1.0 - empty / n as f64).powi(k as i32);
        let mut misses = 0u64;
        let mut rounds = 0u64;
        let base = RngStream::new(77);
        let mut buf = Vec::new();
        for trial in 0..200 {
            let mut p = basic(n, k, m);
            let mut rng = base.child(trial).rng();
            let loads = LoadVector::new(n);
            for r in 0..(n / 2) as u64 {
                fill_uniform(&mut buf, n, k, true, &mut rng).unwrap();
                let o = Offer::Uniform { bins: buf.clone(), repetitions_allowed: true };
                rounds += 1;
                if p.decide(&RoundContext { offer: &o, loads: &loads, round: r }).bin().is_none() {
                    misses += 1;
                    break;
                }
            }
        }
        let rate = misses as f64 / rounds as f64;
        assert!(rate <= 3.0 * bound, "rate={rate} bound={bound}");
    }
}
