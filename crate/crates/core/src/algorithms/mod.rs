//! Allocation policies.
//!
//! Every policy sees one [`Offer`] per round and answers with a
//! [`PolicyOutcome`]. Memory-bounded policies ([`BasicMatching`],
//! [`IntermediateMatching`], [`TieredMatching`], [`ConstantLoadWrapper`])
//! keep all state that survives between rounds in a [`BitLedger`]; the
//! round index is supplied by the caller as a clock and is not memory.

mod arrays;
mod basic;
mod constant_load;

use std::fmt;
use std::str::FromStr;

pub use arrays::{ArrayView, IntermediateMatching, TieredMatching};
pub use basic::BasicMatching;
pub use constant_load::ConstantLoadWrapper;

use crate::error::{Error, Result};
use crate::membits::BitLedger;
use crate::model::{LoadVector, Offer, ProblemSize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Random,
    GreedyUnbounded,
    BasicMatching,
    IntermediateMatching,
    TieredMatching,
    ConstantLoadWrapper,
    NonadaptiveCyclic,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 7] = [
        PolicyKind::Random,
        PolicyKind::GreedyUnbounded,
        PolicyKind::BasicMatching,
        PolicyKind::IntermediateMatching,
        PolicyKind::TieredMatching,
        PolicyKind::ConstantLoadWrapper,
        PolicyKind::NonadaptiveCyclic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Random => "random",
            PolicyKind::GreedyUnbounded => "greedy",
            PolicyKind::BasicMatching => "basic",
            PolicyKind::IntermediateMatching => "intermediate",
            PolicyKind::TieredMatching => "tiered",
            PolicyKind::ConstantLoadWrapper => "constant_load",
            PolicyKind::NonadaptiveCyclic => "cyclic",
        }
    }

    /// Policies that aim for a perfect allocation of `(1-delta) n` balls.
    pub fn is_matching(self) -> bool {
        matches!(
            self,
            PolicyKind::BasicMatching | PolicyKind::IntermediateMatching | PolicyKind::TieredMatching
        )
    }

    pub fn is_memory_bounded(self) -> bool {
        self.is_matching() || self == PolicyKind::ConstantLoadWrapper
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "random" => PolicyKind::Random,
            "greedy" | "greedy_unbounded" | "greedyunbounded" => PolicyKind::GreedyUnbounded,
            "basic" | "basic_matching" | "basicmatching" => PolicyKind::BasicMatching,
            "intermediate" | "intermediate_matching" | "intermediatematching" => {
                PolicyKind::IntermediateMatching
            }
            "tiered" | "tiered_matching" | "tieredmatching" => PolicyKind::TieredMatching,
            "constant_load" | "constant_load_wrapper" | "constantloadwrapper" => {
                PolicyKind::ConstantLoadWrapper
            }
            "cyclic" | "nonadaptive_cyclic" | "nonadaptivecyclic" => PolicyKind::NonadaptiveCyclic,
            _ => return Err(Error::Config(format!("unknown policy kind {s:?}"))),
        };
        Ok(kind)
    }
}

/// Policy selection and its tuning constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySpec {
    pub kind: PolicyKind,
    /// Fraction of bins left empty by the matching policies.
    pub delta: f64,
    /// The constant `C` in `km >= C n` that sizes the tiered arrays.
    pub capital_c: f64,
    /// Read unsubscripted `log` as natural log (`true`) or base 2.
    pub log_base_natural: bool,
    /// The `c` in `km >= c n` for the constant-load wrapper; defaults to the
    /// problem's own `km/n`.
    pub load_c: Option<f64>,
}

pub const DEFAULT_DELTA: f64 = 0.5;
pub const DEFAULT_CAPITAL_C: f64 = 40.0;

impl PolicySpec {
    pub fn new(kind: PolicyKind) -> Self {
        PolicySpec {
            kind,
            delta: DEFAULT_DELTA,
            capital_c: DEFAULT_CAPITAL_C,
            log_base_natural: true,
            load_c: None,
        }
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_capital_c(mut self, c: f64) -> Self {
        self.capital_c = c;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid(format!("delta must lie in (0,1), got {}", self.delta)));
        }
        if !(self.capital_c > 0.0 && self.capital_c.is_finite()) {
            return Err(Error::invalid(format!("capital_c must be positive, got {}", self.capital_c)));
        }
        if let Some(c) = self.load_c {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::invalid(format!("load_c must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// The unsubscripted `log x` of the matching formulas.
    pub fn log(&self, x: f64) -> f64 {
        if self.log_base_natural {
            x.ln()
        } else {
            x.log2()
        }
    }

    /// Balls a run places by default: `floor((1-delta) n)` for the matching
    /// policies, `n` otherwise.
    pub fn default_balls(&self, n: usize) -> usize {
        if self.kind.is_matching() {
            ((1.0 - self.delta) * n as f64).floor() as usize
        } else {
            n
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FailureCause {
    /// No offered bin qualified.
    MissAllArrays,
    /// A relocation needed fresh blocks past the last one.
    BlockExhaustion,
    /// The policy was driven past the rounds its layout can serve.
    StagePreconditionViolated,
}

impl FailureCause {
    pub fn name(self) -> &'static str {
        match self {
            FailureCause::MissAllArrays => "miss_all_arrays",
            FailureCause::BlockExhaustion => "block_exhaustion",
            FailureCause::StagePreconditionViolated => "stage_precondition_violated",
        }
    }
}

impl fmt::Display for FailureCause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Failure {
    pub cause: FailureCause,
    /// Phase index, for failures raised inside the constant-load wrapper.
    pub phase: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyOutcome {
    Placed { bin: usize },
    Failed(Failure),
}

impl PolicyOutcome {
    pub fn failed(cause: FailureCause) -> Self {
        PolicyOutcome::Failed(Failure { cause, phase: None })
    }

    pub fn bin(&self) -> Option<usize> {
        match *self {
            PolicyOutcome::Placed { bin } => Some(bin),
            PolicyOutcome::Failed(_) => None,
        }
    }
}

/// What a policy may look at in one round.
pub struct RoundContext<'a> {
    pub offer: &'a Offer,
    /// Ground-truth loads. Only the unbounded greedy reference reads these.
    pub loads: &'a LoadVector,
    /// 0-based round index.
    pub round: u64,
}

pub trait AllocationPolicy: Send {
    fn kind(&self) -> PolicyKind;

    fn decide(&mut self, ctx: &RoundContext<'_>) -> PolicyOutcome;

    /// Persistent bits held right now.
    fn bits_used(&self) -> u64 {
        0
    }

    fn ledger(&self) -> Option<&BitLedger> {
        None
    }
}

/// Places the ball in the first offered bin.
pub fn policy_random(offer: &Offer) -> PolicyOutcome {
    match offer.bins().first() {
        Some(&bin) => PolicyOutcome::Placed { bin },
        None => PolicyOutcome::failed(FailureCause::MissAllArrays),
    }
}

/// Least loaded offered bin, ties to the first occurrence in the offer.
pub fn policy_greedy_unbounded(offer: &Offer, loads: &LoadVector) -> PolicyOutcome {
    let mut best: Option<(u32, usize)> = None;
    for &bin in offer.bins() {
        let load = loads.get(bin);
        if best.is_none_or(|(l, _)| load < l) {
            best = Some((load, bin));
        }
    }
    match best {
        Some((_, bin)) => PolicyOutcome::Placed { bin },
        None => PolicyOutcome::failed(FailureCause::MissAllArrays),
    }
}

/// Cyclic distance from `from` to `to`, in `1..=n`.
pub fn cyclic_distance(from: usize, to: usize, n: usize) -> usize {
    let d = (to + n - from % n) % n;
    if d == 0 {
        n
    } else {
        d
    }
}

/// First offered bin following bin `round mod n` in cyclic order.
pub fn policy_nonadaptive_cyclic(offer: &Offer, round: u64, n: usize) -> PolicyOutcome {
    let start = (round % n as u64) as usize;
    offer
        .bins()
        .iter()
        .copied()
        .min_by_key(|&b| cyclic_distance(start, b, n))
        .map_or(PolicyOutcome::failed(FailureCause::MissAllArrays), |bin| {
            PolicyOutcome::Placed { bin }
        })
}

struct RandomPolicy;

impl AllocationPolicy for RandomPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::Random
    }

    fn decide(&mut self, ctx: &RoundContext<'_>) -> PolicyOutcome {
        policy_random(ctx.offer)
    }
}

struct GreedyPolicy;

impl AllocationPolicy for GreedyPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::GreedyUnbounded
    }

    fn decide(&mut self, ctx: &RoundContext<'_>) -> PolicyOutcome {
        policy_greedy_unbounded(ctx.offer, ctx.loads)
    }
}

struct CyclicPolicy {
    n: usize,
}

impl AllocationPolicy for CyclicPolicy {
    fn kind(&self) -> PolicyKind {
        PolicyKind::NonadaptiveCyclic
    }

    fn decide(&mut self, ctx: &RoundContext<'_>) -> PolicyOutcome {
        policy_nonadaptive_cyclic(ctx.offer, ctx.round, self.n)
    }
}

/// Constructs the policy named by `spec` for `size`. Parameter problems
/// surface here, never mid-run.
pub fn build_policy(spec: &PolicySpec, size: &ProblemSize) -> Result<Box<dyn AllocationPolicy>> {
    spec.validate()?;
    size.validate()?;
    Ok(match spec.kind {
        PolicyKind::Random => Box::new(RandomPolicy),
        PolicyKind::GreedyUnbounded => Box::new(GreedyPolicy),
        PolicyKind::NonadaptiveCyclic => Box::new(CyclicPolicy { n: size.n }),
        PolicyKind::BasicMatching => Box::new(BasicMatching::new(spec, size)?),
        PolicyKind::IntermediateMatching => Box::new(IntermediateMatching::new(spec, size)?),
        PolicyKind::TieredMatching => Box::new(TieredMatching::new(spec, size)?),
        PolicyKind::ConstantLoadWrapper => Box::new(ConstantLoadWrapper::new(spec, size)?),
    })
}
