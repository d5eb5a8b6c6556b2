//! Flat `key = value` configuration with dotted keys.
//!
//! ```text
//! # tiered matching at the threshold
//! problem.n = 2^16
//! problem.k = 64
//! problem.m = 40960
//! policy.kind = tiered
//! run.trials = 20
//! ```
//!
//! Blank lines and `#` comments are ignored. Integers accept `2^p` and
//! integral scientific notation (`1e6`). Every key may be overridden from
//! the command line.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::algorithms::{PolicyKind, PolicySpec};
use crate::error::{Error, Result};
use crate::model::ProblemSize;

pub const DEFAULT_TRIALS: u64 = 20;
pub const DEFAULT_BASE_SEED: u64 = 0;

pub const KEYS: &[&str] = &[
    "problem.n",
    "problem.k",
    "problem.m",
    "policy.kind",
    "policy.delta",
    "policy.capital_c",
    "policy.log_base",
    "policy.load_c",
    "offer.mode",
    "offer.alpha",
    "run.balls",
    "run.trials",
    "run.base_seed",
    "run.collision_orders",
];

/// Raw key/value pairs before interpretation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut settings = Settings::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim();
            if settings.values.contains_key(key) {
                return Err(config_err(format!("line {}: duplicate key `{key}`", lineno + 1)));
            }
            settings.set(key, value.trim())?;
        }
        Ok(settings)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        if !KEYS.contains(&key) {
            return Err(config_err(format!("unknown key `{key}`")));
        }
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| config_err(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| v.parse::<T>().map_err(|e| config_err(format!("`{key}`: {e}"))))
            .transpose()
    }

    fn integer(&self, key: &str) -> Result<Option<u64>> {
        self.get(key)
            .map(|v| parse_integer(v).map_err(|e| config_err(format!("`{key}`: {e}"))))
            .transpose()
    }

    fn required_integer(&self, key: &str) -> Result<u64> {
        self.integer(key)?
            .ok_or_else(|| config_err(format!("missing required key `{key}`")))
    }
}

/// Parses `123`, `2^16` or `1e6`.
pub fn parse_integer(text: &str) -> std::result::Result<u64, String> {
    let text = text.trim().replace('_', "");
    if let Some((base, exp)) = text.split_once('^') {
        let base: u64 = base.trim().parse().map_err(|e| format!("{text}: {e}"))?;
        let exp: u32 = exp.trim().parse().map_err(|e| format!("{text}: {e}"))?;
        return base.checked_pow(exp).ok_or_else(|| format!("{text} overflows"));
    }
    if let Ok(v) = text.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = text.parse().map_err(|_| format!("`{text}` is not an integer"))?;
    if f >= 0.0 && f.fract() == 0.0 && f < 2f64.powi(63) {
        Ok(f as u64)
    } else {
        Err(format!("`{text}` is not a non-negative integer"))
    }
}

/// How each round's choice set is drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OfferMode {
    UniformWithRep,
    UniformNoRep,
    Bernoulli(f64),
}

impl OfferMode {
    pub fn name(&self) -> String {
        match self {
            OfferMode::UniformWithRep => "uniform_with_rep".into(),
            OfferMode::UniformNoRep => "uniform_no_rep".into(),
            OfferMode::Bernoulli(a) => format!("bernoulli({a})"),
        }
    }
}

impl fmt::Display for OfferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// `problem.b` is the number of balls per trial.
    pub problem: ProblemSize,
    pub policy: PolicySpec,
    pub offer_mode: OfferMode,
    pub trials: u64,
    pub base_seed: u64,
    pub collision_orders: Vec<u32>,
}

impl ExperimentConfig {
    /// A configuration with default balls, trials, seed and offers.
    pub fn new(n: usize, k: usize, m: u64, policy: PolicySpec) -> Result<Self> {
        let config = ExperimentConfig {
            problem: ProblemSize {
                n,
                b: policy.default_balls(n),
                k,
                m,
            },
            policy,
            offer_mode: OfferMode::UniformWithRep,
            trials: DEFAULT_TRIALS,
            base_seed: DEFAULT_BASE_SEED,
            collision_orders: vec![2],
        };
        config.validate()?;
        Ok(config)
    }

    pub fn balls(&self) -> usize {
        self.problem.b
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.base_seed = seed;
        self
    }

    pub fn with_offer_mode(mut self, mode: OfferMode) -> Self {
        self.offer_mode = mode;
        self
    }

    pub fn from_settings(s: &Settings) -> Result<Self> {
        let n = s.required_integer("problem.n")? as usize;
        let kind: PolicyKind = s
            .get("policy.kind")
            .ok_or_else(|| config_err("missing required key `policy.kind`"))?
            .parse()?;
        let offer_mode = match s.get("offer.mode").unwrap_or("uniform_with_rep") {
            "uniform_with_rep" => OfferMode::UniformWithRep,
            "uniform_no_rep" => OfferMode::UniformNoRep,
            "bernoulli" => OfferMode::Bernoulli(s.parsed("offer.alpha")?.unwrap_or(0.5)),
            other => return Err(config_err(format!("unknown offer.mode `{other}`"))),
        };
        if s.get("offer.alpha").is_some() && !matches!(offer_mode, OfferMode::Bernoulli(_)) {
            return Err(config_err("offer.alpha only applies to offer.mode = bernoulli"));
        }
        // k is meaningless for Bernoulli offers; default it to 1 there
        let k = match (s.integer("problem.k")?, offer_mode) {
            (Some(k), _) => k as usize,
            (None, OfferMode::Bernoulli(_)) => 1,
            (None, _) => return Err(config_err("missing required key `problem.k`")),
        };
        let m = s.integer("problem.m")?.unwrap_or(0);

        let mut policy = PolicySpec::new(kind);
        if let Some(d) = s.parsed("policy.delta")? {
            policy.delta = d;
        }
        if let Some(c) = s.parsed("policy.capital_c")? {
            policy.capital_c = c;
        }
        if let Some(c) = s.parsed("policy.load_c")? {
            policy.load_c = Some(c);
        }
        policy.log_base_natural = match s.get("policy.log_base").unwrap_or("e") {
            "e" | "natural" => true,
            "2" => false,
            other => return Err(config_err(format!("policy.log_base must be `e` or `2`, got `{other}`"))),
        };

        let balls = match s.integer("run.balls")? {
            Some(b) => b as usize,
            None => policy.default_balls(n),
        };
        let collision_orders = match s.get("run.collision_orders") {
            None => vec![2],
            Some(list) => list
                .split(',')
                .map(|q| q.trim().parse::<u32>().map_err(|e| config_err(format!("run.collision_orders: {e}"))))
                .collect::<Result<Vec<_>>>()?,
        };
        let config = ExperimentConfig {
            problem: ProblemSize { n, b: balls, k, m },
            policy,
            offer_mode,
            trials: s.integer("run.trials")?.unwrap_or(DEFAULT_TRIALS),
            base_seed: s.integer("run.base_seed")?.unwrap_or(DEFAULT_BASE_SEED),
            collision_orders,
        };
        config.validate()?;
        Ok(config)
    }

    /// Checks everything that can be checked without building the policy.
    /// All failures are configuration errors.
    pub fn validate(&self) -> Result<()> {
        let as_config = |e: Error| match e {
            Error::InvalidParameter(msg) => Error::Config(msg),
            other => other,
        };
        self.problem.validate().map_err(as_config)?;
        self.policy.validate().map_err(as_config)?;
        if self.trials == 0 {
            return Err(config_err("run.trials must be at least 1"));
        }
        if self.collision_orders.is_empty() || self.collision_orders.iter().any(|&q| q < 2) {
            return Err(config_err("run.collision_orders must list orders q >= 2"));
        }
        if let OfferMode::Bernoulli(a) = self.offer_mode {
            if !(a > 0.0 && a < 1.0) {
                return Err(config_err(format!("offer.alpha must lie in (0,1), got {a}")));
            }
        }
        Ok(())
    }

    /// The configuration as settings, the inverse of
    /// [`ExperimentConfig::from_settings`].
    pub fn to_settings(&self) -> Settings {
        let mut s = Settings::default();
        let mut put = |k: &str, v: String| {
            s.values.insert(k.to_string(), v);
        };
        put("problem.n", self.problem.n.to_string());
        put("problem.k", self.problem.k.to_string());
        put("problem.m", self.problem.m.to_string());
        put("policy.kind", self.policy.kind.name().to_string());
        put("policy.delta", self.policy.delta.to_string());
        put("policy.capital_c", self.policy.capital_c.to_string());
        put("policy.log_base", if self.policy.log_base_natural { "e" } else { "2" }.to_string());
        if let Some(c) = self.policy.load_c {
            put("policy.load_c", c.to_string());
        }
        match self.offer_mode {
            OfferMode::UniformWithRep => put("offer.mode", "uniform_with_rep".into()),
            OfferMode::UniformNoRep => put("offer.mode", "uniform_no_rep".into()),
            OfferMode::Bernoulli(a) => {
                put("offer.mode", "bernoulli".into());
                put("offer.alpha", a.to_string());
            }
        }
        put("run.balls", self.problem.b.to_string());
        put("run.trials", self.trials.to_string());
        put("run.base_seed", self.base_seed.to_string());
        put(
            "run.collision_orders",
            self.collision_orders.iter().map(u32::to_string).collect::<Vec<_>>().join(","),
        );
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "
        # comment
        problem.n = 2^10
        problem.k = 8   # trailing comment
        problem.m = 1e3
        policy.kind = tiered
        run.trials = 3
    ";

    #[test]
    fn parses_sample() {
        let c = ExperimentConfig::from_settings(&Settings::parse(SAMPLE).unwrap()).unwrap();
        assert_eq!(c.problem, ProblemSize { n: 1024, b: 512, k: 8, m: 1000 });
        assert_eq!(c.policy.kind, PolicyKind::TieredMatching);
        assert_eq!(c.trials, 3);
        assert_eq!(c.base_seed, 0);
        assert_eq!(c.collision_orders, vec![2]);
        assert_eq!(c.offer_mode, OfferMode::UniformWithRep);
    }

    #[test]
    fn overrides_replace_file_values() {
        let mut s = Settings::parse(SAMPLE).unwrap();
        s.apply_override("policy.kind=random").unwrap();
        s.apply_override("run.base_seed = 7").unwrap();
        let c = ExperimentConfig::from_settings(&s).unwrap();
        assert_eq!(c.policy.kind, PolicyKind::Random);
        assert_eq!(c.balls(), 1024);
        assert_eq!(c.base_seed, 7);
    }

    #[test]
    fn rejects_malformed_input() {
        for bad in [
            "problem.n 5",
            "problem.x = 5",
            "problem.n = 5\nproblem.n = 6",
            "problem.n = -3\nproblem.k = 1\npolicy.kind = random",
            "problem.n = 8\nproblem.k = 1\npolicy.kind = nope",
            "problem.n = 8\nproblem.k = 1\npolicy.kind = random\nrun.trials = 0",
            "problem.n = 8\nproblem.k = 9\npolicy.kind = random",
            "problem.n = 8\nproblem.k = 1\npolicy.kind = random\noffer.mode = bernoulli\noffer.alpha = 1.5",
            "problem.n = 8\nproblem.k = 1\npolicy.kind = random\noffer.alpha = 0.5",
            "problem.n = 8\nproblem.k = 1\npolicy.kind = random\nrun.collision_orders = 1",
            "problem.k = 1\npolicy.kind = random",
        ] {
            let r = Settings::parse(bad).and_then(|s| ExperimentConfig::from_settings(&s));
            assert!(matches!(r, Err(Error::Config(_))), "{bad:?} gave {r:?}");
        }
    }

    #[test]
    fn bernoulli_defaults() {
        let s = Settings::parse("problem.n = 64\npolicy.kind = cyclic\noffer.mode = bernoulli").unwrap();
        let c = ExperimentConfig::from_settings(&s).unwrap();
        assert_eq!(c.offer_mode, OfferMode::Bernoulli(0.5));
        assert_eq!(c.problem.k, 1);
    }

    #[test]
    fn integer_forms() {
        assert_eq!(parse_integer("2^16"), Ok(65536));
        assert_eq!(parse_integer("1e6"), Ok(1_000_000));
        assert_eq!(parse_integer("1_000"), Ok(1000));
        assert!(parse_integer("1.5").is_err());
        assert!(parse_integer("2^70").is_err());
    }

    #[test]
    fn settings_round_trip() {
        let c = ExperimentConfig::new(256, 4, 64, PolicySpec::new(PolicyKind::BasicMatching))
            .unwrap()
            .with_offer_mode(OfferMode::UniformNoRep)
            .with_seed(11);
        assert_eq!(ExperimentConfig::from_settings(&c.to_settings()).unwrap(), c);
    }
}
