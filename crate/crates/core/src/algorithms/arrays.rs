//! Array-based matching: the intermediate and the tiered (final) policy.
//!
//! Both cut the bins into `l = floor(n / floor(m/2))` blocks of
//! `floor(m/2)` bins (leftover bins are never used) and keep `d` arrays
//! `A_0..A_{d-1}`. Array `j` spans some contiguous blocks and is tracked at
//! tuple resolution: one bit per tuple, set as soon as any bin of the tuple
//! takes a ball. A ball goes to the minimal `j` whose array has an offered
//! bin in an unmarked tuple (first such bin in offer order). Once an
//! array's fraction of unmarked tuples drops below `delta/2` it moves to
//! fresh blocks at the frontier; blocks behind the frontier are never
//! reused.
//!
//! | policy       | blocks in `A_j` | tuple size | `d`                                 |
//! |--------------|-----------------|------------|-------------------------------------|
//! | intermediate | 1               | `2^j`      | `floor(log2(m) / 4)`                |
//! | tiered       | `2^j`           | `4^j`      | `ceil(log2(5 log(n) / (C delta)))`  |
//!
//! Ledger contents: per array the tuple bits, a start-block pointer and an
//! unmarked-tuple counter; plus one frontier counter.

use std::marker::PhantomData;

use log::warn;

use super::{AllocationPolicy, FailureCause, PolicyKind, PolicyOutcome, PolicySpec, RoundContext};
use crate::error::{Error, Result};
use crate::membits::{bits_for, BitLedger, RegionHandle};
use crate::model::{LoadVector, ProblemSize};

pub trait Layout: Send + Sync + 'static {
    const KIND: PolicyKind;

    fn depth(spec: &PolicySpec, size: &ProblemSize) -> i64;

    fn span_blocks(j: usize) -> usize;

    fn tuple_size(j: usize) -> usize;

    fn check_preconditions(_spec: &PolicySpec, _size: &ProblemSize) {}
}

pub struct Intermediate;

impl Layout for Intermediate {
    const KIND: PolicyKind = PolicyKind::IntermediateMatching;

    fn depth(_spec: &PolicySpec, size: &ProblemSize) -> i64 {
        if size.m == 0 {
            return 0;
        }
        ((size.m as f64).log2() / 4.0).floor() as i64
    }

    fn span_blocks(_j: usize) -> usize {
        1
    }

    fn tuple_size(j: usize) -> usize {
        1 << j
    }
}

pub struct Tiered;

/// `d = ceil(log2((5 / (C delta)) log n))`.
pub fn tiered_depth(spec: &PolicySpec, n: usize) -> i64 {
    let arg = 5.0 / (spec.capital_c * spec.delta) * spec.log(n as f64);
    if arg <= 0.0 {
        return 0;
    }
    arg.log2().ceil() as i64
}

impl Layout for Tiered {
    const KIND: PolicyKind = PolicyKind::TieredMatching;

    fn depth(spec: &PolicySpec, size: &ProblemSize) -> i64 {
        tiered_depth(spec, size.n)
    }

    fn span_blocks(j: usize) -> usize {
        1 << j
    }

    fn tuple_size(j: usize) -> usize {
        1 << (2 * j)
    }

    fn check_preconditions(spec: &PolicySpec, size: &ProblemSize) {
        let n = size.n as f64;
        let k_need = 3.0 / spec.delta * n.ln();
        if (size.k as f64) < k_need {
            warn!("tiered matching: k = {} is below (3/delta) ln n = {k_need:.2}", size.k);
        }
        let m_need = n.log2() * n.log2().log2();
        if (size.m as f64) < m_need {
            warn!("tiered matching: m = {} is below log2 n * log2 log2 n = {m_need:.1}", size.m);
        }
        let km = size.k as f64 * size.m as f64;
        if km < spec.capital_c * n {
            warn!("tiered matching: km = {km} is below C n = {:.0}", spec.capital_c * n);
        }
    }
}

pub type IntermediateMatching = ArrayMatching<Intermediate>;
pub type TieredMatching = ArrayMatching<Tiered>;

/// Snapshot of one array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayView {
    pub start_block: usize,
    pub span_blocks: usize,
    pub tuple_size: usize,
    pub tuples: u64,
    pub empty_tuples: u64,
}

struct ArrayRegions {
    tuples: RegionHandle,
    start: RegionHandle,
    empty: RegionHandle,
    empty_width: u32,
}

pub struct ArrayMatching<L: Layout> {
    n: usize,
    block_size: usize,
    blocks: usize,
    delta: f64,
    rounds: u64,
    span: Vec<usize>,
    tuple_size: Vec<usize>,
    tuple_count: Vec<u64>,
    ledger: BitLedger,
    arrays: Vec<ArrayRegions>,
    frontier: RegionHandle,
    pointer_width: u32,
    frontier_width: u32,
    // per-round scratch
    starts: Vec<usize>,
    _layout: PhantomData<L>,
}

impl<L: Layout> ArrayMatching<L> {
    pub fn new(spec: &PolicySpec, size: &ProblemSize) -> Result<Self> {
        spec.validate()?;
        size.validate()?;
        let n = size.n;
        let block_size = (size.m / 2) as usize;
        if block_size == 0 {
            return Err(Error::invalid(format!("m = {} leaves empty blocks", size.m)));
        }
        let blocks = n / block_size;
        let d = L::depth(spec, size);
        if d < 1 {
            return Err(Error::invalid(format!("array count d = {d} is below 1")));
        }
        let d = d as usize;
        if d >= 32 {
            return Err(Error::invalid(format!("array count d = {d} is too large")));
        }
        let span: Vec<usize> = (0..d).map(L::span_blocks).collect();
        let tuple_size: Vec<usize> = (0..d).map(L::tuple_size).collect();
        let initial: usize = span.iter().sum();
        if initial > blocks {
            return Err(Error::invalid(format!(
                "initial layout needs {initial} blocks but only {blocks} blocks of {block_size} bins exist"
            )));
        }
        let tuple_count: Vec<u64> = (0..d)
            .map(|j| (span[j] * block_size / tuple_size[j]) as u64)
            .collect();
        if let Some(j) = tuple_count.iter().position(|&t| t == 0) {
            return Err(Error::invalid(format!("array {j} has no whole tuple")));
        }
        if spec.delta / 2.0 * (tuple_count[d - 1] as f64) < 1.0 {
            return Err(Error::invalid(format!(
                "array {} has {} tuples; delta/2 of that is below one",
                d - 1,
                tuple_count[d - 1]
            )));
        }
        L::check_preconditions(spec, size);

        let mut ledger = BitLedger::new(size.m);
        let pointer_width = bits_for(blocks as u64 - 1);
        let frontier_width = bits_for(blocks as u64);
        let mut arrays = Vec::with_capacity(d);
        for (j, &tuples) in tuple_count.iter().enumerate() {
            let empty_width = bits_for(tuples);
            arrays.push(ArrayRegions {
                tuples: ledger.alloc_region(tuples, &format!("A{j}.tuples"))?,
                start: ledger.alloc_region(pointer_width as u64, &format!("A{j}.start"))?,
                empty: ledger.alloc_region(empty_width as u64, &format!("A{j}.empty"))?,
                empty_width,
            });
        }
        let frontier = ledger.alloc_region(frontier_width as u64, "frontier")?;
        let mut matcher = ArrayMatching {
            n,
            block_size,
            blocks,
            delta: spec.delta,
            rounds: spec.default_balls(n) as u64,
            span,
            tuple_size,
            tuple_count,
            ledger,
            arrays,
            frontier,
            pointer_width,
            frontier_width,
            starts: vec![0; d],
            _layout: PhantomData,
        };
        matcher.reset();
        Ok(matcher)
    }

    /// Back to the initial layout: `A_0` first, arrays contiguous, frontier
    /// right after `A_{d-1}`, every tuple unmarked.
    pub fn reset(&mut self) {
        let mut next = 0usize;
        for j in 0..self.arrays.len() {
            let a = &self.arrays[j];
            self.ledger.clear_region(&a.tuples).expect("tuple region");
            self.ledger
                .write_uint(&a.start, 0, self.pointer_width, next as u64)
                .expect("pointer region");
            self.ledger
                .write_uint(&a.empty, 0, a.empty_width, self.tuple_count[j])
                .expect("counter region");
            next += self.span[j];
        }
        self.ledger
            .write_uint(&self.frontier, 0, self.frontier_width, next as u64)
            .expect("frontier region");
    }

    pub fn d(&self) -> usize {
        self.arrays.len()
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn frontier(&self) -> usize {
        self.ledger
            .read_uint(&self.frontier, 0, self.frontier_width)
            .expect("frontier region") as usize
    }

    fn start_block(&self, j: usize) -> usize {
        self.ledger
            .read_uint(&self.arrays[j].start, 0, self.pointer_width)
            .expect("pointer region") as usize
    }

    fn empty_tuples(&self, j: usize) -> u64 {
        let a = &self.arrays[j];
        self.ledger.read_uint(&a.empty, 0, a.empty_width).expect("counter region")
    }

    pub fn arrays(&self) -> Vec<ArrayView> {
        (0..self.d())
            .map(|j| ArrayView {
                start_block: self.start_block(j),
                span_blocks: self.span[j],
                tuple_size: self.tuple_size[j],
                tuples: self.tuple_count[j],
                empty_tuples: self.empty_tuples(j),
            })
            .collect()
    }

    pub fn tuple_marked(&self, j: usize, tuple: u64) -> bool {
        self.ledger.get_bit(&self.arrays[j].tuples, tuple).expect("tuple region")
    }

    /// Checks the bookkeeping against ground truth: every counter equals
    /// its array's unmarked tuples, and a tuple is marked exactly when one
    /// of its bins holds a ball. Relocations only ever move to blocks that
    /// never held balls, so "since the last relocation" is "ever".
    pub fn audit(&self, loads: &LoadVector) -> std::result::Result<(), String> {
        for (j, view) in self.arrays().into_iter().enumerate() {
            let zeros = view.tuples - self.ledger.count_ones(&self.arrays[j].tuples).unwrap();
            if zeros != view.empty_tuples {
                return Err(format!("A{j}: counter {} but {zeros} unmarked tuples", view.empty_tuples));
            }
            let base = view.start_block * self.block_size;
            for t in 0..view.tuples {
                let lo = base + t as usize * view.tuple_size;
                let occupied = loads.counts()[lo..lo + view.tuple_size].iter().any(|&c| c > 0);
                if occupied != self.tuple_marked(j, t) {
                    return Err(format!("A{j} tuple {t}: marked={} occupied={occupied}", !occupied));
                }
            }
        }
        Ok(())
    }

    /// Minimal `j`, then first offered bin, among bins in unmarked tuples.
    fn select(&mut self, bins: &[usize]) -> Option<(usize, usize, u64)> {
        let d = self.d();
        for j in 0..d {
            self.starts[j] = self.start_block(j);
        }
        let mut best: Option<(usize, usize, u64)> = None;
        for &bin in bins {
            let block = bin / self.block_size;
            if block >= self.blocks {
                continue;
            }
            let limit = best.map_or(d, |(j, _, _)| j);
            for j in 0..limit {
                let start = self.starts[j];
                if block < start || block >= start + self.span[j] {
                    continue;
                }
                let tuple = ((bin - start * self.block_size) / self.tuple_size[j]) as u64;
                if tuple < self.tuple_count[j] && !self.tuple_marked(j, tuple) {
                    best = Some((j, bin, tuple));
                }
                break;
            }
            if matches!(best, Some((0, _, _))) {
                break;
            }
        }
        best
    }

    fn place(&mut self, bins: &[usize], round: u64) -> PolicyOutcome {
        if round >= self.rounds {
            return PolicyOutcome::failed(FailureCause::StagePreconditionViolated);
        }
        let Some((j, bin, tuple)) = self.select(bins) else {
            return PolicyOutcome::failed(FailureCause::MissAllArrays);
        };
        let a = &self.arrays[j];
        self.ledger.set_bit(&a.tuples, tuple, true).expect("tuple region");
        let empty = self.empty_tuples(j) - 1;
        let a = &self.arrays[j];
        self.ledger.write_uint(&a.empty, 0, a.empty_width, empty).expect("counter region");

        if (empty as f64) < self.delta / 2.0 * self.tuple_count[j] as f64 {
            let frontier = self.frontier();
            if frontier + self.span[j] > self.blocks {
                return PolicyOutcome::failed(FailureCause::BlockExhaustion);
            }
            let a = &self.arrays[j];
            self.ledger.clear_region(&a.tuples).expect("tuple region");
            self.ledger
                .write_uint(&a.start, 0, self.pointer_width, frontier as u64)
                .expect("pointer region");
            self.ledger
                .write_uint(&a.empty, 0, a.empty_width, self.tuple_count[j])
                .expect("counter region");
            self.ledger
                .write_uint(&self.frontier, 0, self.frontier_width, (frontier + self.span[j]) as u64)
                .expect("frontier region");
        }
        PolicyOutcome::Placed { bin }
    }

    /// One round over an explicit list of offered bins (in offer order).
    pub fn decide_bins(&mut self, bins: &[usize], round: u64) -> PolicyOutcome {
        self.place(bins, round)
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

impl<L: Layout> AllocationPolicy for ArrayMatching<L> {
    fn kind(&self) -> PolicyKind {
        L::KIND
    }

    fn decide(&mut self, ctx: &RoundContext<'_>) -> PolicyOutcome {
        self.place(ctx.offer.bins(), ctx.round)
    }

    fn bits_used(&self) -> u64 {
        self.ledger.bits_used()
    }

    fn ledger(&self) -> Option<&BitLedger> {
        Some(&self.ledger)
    }
}
