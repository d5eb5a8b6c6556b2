use super::{
    AllocationPolicy, Failure, PolicyKind, PolicyOutcome, PolicySpec, RoundContext, TieredMatching,
};
use crate::error::{Error, Result};
use crate::membits::BitLedger;
use crate::model::ProblemSize;

/// Constant maximal load from repeated perfect matchings.
///
/// Consecutive runs of `s = ceil(C / c)` bins form super-bins, `n' =
/// floor(n / s)` of them (trailing bins are unused). Tiered matching with
/// `delta = 1/2` runs over the super-bins in phases of `floor(n'/2)` balls;
/// a super-bin is offered when any member bin is, and the ball lands in the
/// lowest-indexed offered member. The matcher's ledger is reset at every
/// phase boundary. Each phase puts at most one ball in a super-bin, so on
/// success no bin holds more balls than there are phases.
pub struct ConstantLoadWrapper {
    superbin: usize,
    super_n: usize,
    phase_len: u64,
    load_c: f64,
    capital_c: f64,
    inner: TieredMatching,
    // per-round scratch
    super_bins: Vec<usize>,
}

impl ConstantLoadWrapper {
    pub fn new(spec: &PolicySpec, size: &ProblemSize) -> Result<Self> {
        spec.validate()?;
        size.validate()?;
        let load_c = spec.load_c.unwrap_or_else(|| size.km_over_n());
        if !(load_c > 0.0) {
            return Err(Error::invalid("constant-load wrapper needs km/n > 0"));
        }
        let superbin = (spec.capital_c / load_c).ceil().max(1.0) as usize;
        let super_n = size.n / superbin;
        if super_n < 2 {
            return Err(Error::invalid(format!(
                "super-bins of {superbin} bins leave only {super_n} super-bins"
            )));
        }
        let inner_spec = PolicySpec {
            kind: PolicyKind::TieredMatching,
            delta: 0.5,
            load_c: None,
            ..*spec
        };
        let inner_size = ProblemSize {
            n: super_n,
            b: super_n / 2,
            k: size.k.min(super_n),
            m: size.m,
        };
        let inner = TieredMatching::new(&inner_spec, &inner_size)?;
        Ok(ConstantLoadWrapper {
            superbin,
            super_n,
            phase_len: (super_n / 2) as u64,
            load_c,
            capital_c: spec.capital_c,
            inner,
            super_bins: Vec::with_capacity(size.k),
        })
    }

    pub fn superbin_size(&self) -> usize {
        self.superbin
    }

    pub fn superbins(&self) -> usize {
        self.super_n
    }

    pub fn phase_len(&self) -> u64 {
        self.phase_len
    }

    /// Phases needed for `balls` balls.
    pub fn phases_for(&self, balls: u64) -> u64 {
        balls.div_ceil(self.phase_len)
    }

    /// The nominal load guarantee `2 C / c`.
    pub fn load_bound(&self) -> f64 {
        2.0 * self.capital_c / self.load_c
    }

    pub fn inner(&self) -> &TieredMatching {
        &self.inner
    }
}

impl AllocationPolicy for ConstantLoadWrapper {
    fn kind(&self) -> PolicyKind {
        PolicyKind::ConstantLoadWrapper
    }

    fn decide(&mut self, ctx: &RoundContext<'_>) -> PolicyOutcome {
        let phase = ctx.round / self.phase_len;
        if phase > 0 && ctx.round.is_multiple_of(self.phase_len) {
            self.inner.reset();
        }
        let limit = self.super_n * self.superbin;
        self.super_bins.clear();
        self.super_bins.extend(
            ctx.offer
                .bins()
                .iter()
                .filter(|&&b| b < limit)
                .map(|&b| b / self.superbin),
        );
        match self.inner.decide_bins(&self.super_bins, ctx.round % self.phase_len) {
            PolicyOutcome::Placed { bin: sb } => {
                let bin = ctx
                    .offer
                    .bins()
                    .iter()
                    .copied()
                    .filter(|&b| b < limit && b / self.superbin == sb)
                    .min()
                    .expect("chosen super-bin has an offered member");
                PolicyOutcome::Placed { bin }
            }
            PolicyOutcome::Failed(f) => PolicyOutcome::Failed(Failure {
                cause: f.cause,
                phase: Some(phase),
            }),
        }
    }

    fn bits_used(&self) -> u64 {
        self.inner.bits_used()
    }

    fn ledger(&self) -> Option<&BitLedger> {
        self.inner.ledger()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fill_uniform, LoadVector, Offer};
    use crate::rng::RngStream;

    fn run(
        policy: &mut dyn AllocationPolicy,
        n: usize,
        k: usize,
        balls: u64,
        seed: u64,
    ) -> (LoadVector, Vec<PolicyOutcome>) {
        let mut rng = RngStream::new(seed).rng();
        let mut loads = LoadVector::new(n);
        let mut buf = Vec::new();
        let mut outcomes = Vec::new();
        for r in 0..balls {
            fill_uniform(&mut buf, n, k, true, &mut rng).unwrap();
            let offer = Offer::Uniform { bins: buf.clone(), repetitions_allowed: true };
            let out = policy.decide(&RoundContext { offer: &offer, loads: &loads, round: r });
            outcomes.push(out);
            match out {
                PolicyOutcome::Placed { bin } => {
                    assert!(buf.contains(&bin));
                    loads.apply_placement(bin).unwrap();
                }
                PolicyOutcome::Failed(_) => break,
            }
        }
        (loads, outcomes)
    }

    #[test]
    fn unit_superbins_repeat_tiered_matching() {
        // c = C makes s = 1: each phase is a fresh tiered run on raw bins
        let n = 4096;
        let k = 512;
        let m = 320;
        let size = ProblemSize::new(n, n, k, m).unwrap();
        let spec = PolicySpec {
            load_c: Some(40.0),
            ..PolicySpec::new(PolicyKind::ConstantLoadWrapper)
        };
        let mut wrapper = ConstantLoadWrapper::new(&spec, &size).unwrap();
        assert_eq!(wrapper.superbin_size(), 1);
        assert_eq!(wrapper.phase_len(), 2048);

        let (_, wrapped) = run(&mut wrapper, n, k, n as u64, 5);

        // same offers through tiered matching restarted every 2048 rounds
        let tiered_spec = PolicySpec::new(PolicyKind::TieredMatching);
        let mut rng = RngStream::new(5).rng();
        let mut buf = Vec::new();
        let mut plain = Vec::new();
        let mut inner = TieredMatching::new(&tiered_spec, &size).unwrap();
        for r in 0..wrapped.len() as u64 {
            if r % 2048 == 0 {
                inner = TieredMatching::new(&tiered_spec, &size).unwrap();
            }
            fill_uniform(&mut buf, n, k, true, &mut rng).unwrap();
            plain.push(inner.decide_bins(&buf, r % 2048));
        }
        let strip = |o: &PolicyOutcome| match *o {
            PolicyOutcome::Failed(f) => PolicyOutcome::failed(f.cause),
            placed => placed,
        };
        assert_eq!(wrapped.iter().map(strip).collect::<Vec<_>>(), plain);
    }

    #[test]
    fn places_all_balls_with_bounded_load() {
        // n = 2^16, k = 256, m = 2560: km/n = 10, C = 40 gives s = 4,
        // n' = 16384 super-bins, phases of 8192 balls, 8 phases in total.
        let n = 1usize << 16;
        let k = 256;
        let size = ProblemSize::new(n, n, k, 2560).unwrap();
        let spec = PolicySpec::new(PolicyKind::ConstantLoadWrapper);
        let mut wrapper = ConstantLoadWrapper::new(&spec, &size).unwrap();
        assert_eq!(wrapper.superbin_size(), 4);
        assert_eq!(wrapper.superbins(), 16384);
        let phases = wrapper.phases_for(n as u64);
        assert_eq!(phases, 8);
        assert!((wrapper.load_bound() - 8.0).abs() < 1e-12);
        let (loads, outcomes) = run(&mut wrapper, n, k, n as u64, 1);
        assert!(wrapper.bits_used() <= 2560);
        if outcomes.iter().all(|o| o.bin().is_some()) {
            assert_eq!(loads.total(), n as u64);
            assert!(loads.max_load() as u64 <= phases);
        } else {
            let last = outcomes.last().unwrap();
            let PolicyOutcome::Failed(f) = last else { unreachable!() };
            assert_eq!(f.phase, Some((outcomes.len() as u64 - 1) / wrapper.phase_len()));
        }
    }

    #[test]
    fn rejects_degenerate_superbins() {
        let size = ProblemSize::new(64, 64, 8, 16).unwrap();
        let spec = PolicySpec {
            load_c: Some(0.5),
            ..PolicySpec::new(PolicyKind::ConstantLoadWrapper)
        };
        assert!(ConstantLoadWrapper::new(&spec, &size).is_err());
    }
}
