//! Grid sweeps over `(n, k, m)` and policies, one summary row per cell.
//!
//! A grid file uses the configuration syntax with comma-separated lists:
//!
//! ```text
//! grid.n = 2^16
//! grid.k = 16, 64, 256
//! grid.km_over_n = 0.1, 1, 10   # or grid.m = ...
//! grid.policy = tiered
//! ```
//!
//! With `grid.km_over_n` the budget of each cell is `m = ceil(r n / k)`.

use std::path::Path;

use super::config::{parse_integer, ExperimentConfig, Settings};
use super::run::{run_experiment, Summary};
use crate::algorithms::PolicyKind;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum MemoryAxis {
    Bits(Vec<u64>),
    KmOverN(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub memory: MemoryAxis,
    pub policies: Vec<PolicyKind>,
}

fn list<T>(key: &str, value: &str, parse: impl Fn(&str) -> std::result::Result<T, String>) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(s).map_err(|e| Error::Config(format!("`{key}`: {e}"))))
        .collect()
}

impl Grid {
    pub fn parse(text: &str) -> Result<Self> {
        let (mut n, mut k, mut m, mut r, mut policies) = (None, None, None, None, None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("grid line {}: expected `key = value`", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |s: &str| parse_integer(s);
            match key {
                "grid.n" => n = Some(list(key, value, |s| int(s).map(|v| v as usize))?),
                "grid.k" => k = Some(list(key, value, |s| int(s).map(|v| v as usize))?),
                "grid.m" => m = Some(list(key, value, int)?),
                "grid.km_over_n" => r = Some(list(key, value, |s| s.parse::<f64>().map_err(|e| e.to_string()))?),
                "grid.policy" => {
                    policies = Some(list(key, value, |s| s.parse::<PolicyKind>().map_err(|e| e.to_string()))?)
                }
                other => return Err(Error::Config(format!("unknown grid key `{other}`"))),
            }
        }
        let memory = match (m, r) {
            (Some(m), None) => MemoryAxis::Bits(m),
            (None, Some(r)) => MemoryAxis::KmOverN(r),
            (Some(_), Some(_)) => return Err(Error::Config("give grid.m or grid.km_over_n, not both".into())),
            (None, None) => return Err(Error::Config("grid needs grid.m or grid.km_over_n".into())),
        };
        let grid = Grid {
            n: n.ok_or_else(|| Error::Config("missing grid.n".into()))?,
            k: k.ok_or_else(|| Error::Config("missing grid.k".into()))?,
            memory,
            policies: policies.unwrap_or_default(),
        };
        Ok(grid)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn memory_len(&self) -> usize {
        match &self.memory {
            MemoryAxis::Bits(v) => v.len(),
            MemoryAxis::KmOverN(v) => v.len(),
        }
    }

    pub fn cells(&self) -> usize {
        self.n.len() * self.k.len() * self.memory_len() * self.policies.len()
    }

    fn validate(&self) -> Result<()> {
        if self.policies.is_empty() {
            return Err(Error::invalid("sweep grid lists no policies"));
        }
        if self.cells() == 0 {
            return Err(Error::invalid("sweep grid has an empty axis"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub n: usize,
    pub k: usize,
    pub m: u64,
    pub km_over_n: f64,
    pub policy: String,
    pub delta: f64,
    pub capital_c: f64,
    pub offer_mode: String,
    pub balls: Option<usize>,
    pub trials: u64,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

/// Runs every cell of `grid` on top of `base`. A cell that cannot be
/// configured or run keeps its row with the message in `error`.
pub fn sweep(base: &Settings, grid: &Grid) -> Result<Vec<SweepRow>> {
    grid.validate()?;
    let mut rows = Vec::with_capacity(grid.cells());
    for &n in &grid.n {
        for &k in &grid.k {
            let budgets: Vec<u64> = match &grid.memory {
                MemoryAxis::Bits(v) => v.clone(),
                MemoryAxis::KmOverN(v) => v.iter().map(|r| (r * n as f64 / k as f64).ceil() as u64).collect(),
            };
            for &m in &budgets {
                for &kind in &grid.policies {
                    rows.push(run_cell(base, n, k, m, kind));
                }
            }
        }
    }
    Ok(rows)
}

fn run_cell(base: &Settings, n: usize, k: usize, m: u64, kind: PolicyKind) -> SweepRow {
    let mut s = base.clone();
    let mut fill = || -> Result<ExperimentConfig> {
        s.set("problem.n", &n.to_string())?;
        s.set("problem.k", &k.to_string())?;
        s.set("problem.m", &m.to_string())?;
        s.set("policy.kind", kind.name())?;
        ExperimentConfig::from_settings(&s)
    };
    let config = fill();
    let mut row = SweepRow {
        n,
        k,
        m,
        km_over_n: k as f64 * m as f64 / n as f64,
        policy: kind.name().to_string(),
        delta: s.get("policy.delta").and_then(|v| v.parse().ok()).unwrap_or(crate::algorithms::DEFAULT_DELTA),
        capital_c: s
            .get("policy.capital_c")
            .and_then(|v| v.parse().ok())
            .unwrap_or(crate::algorithms::DEFAULT_CAPITAL_C),
        offer_mode: s.get("offer.mode").unwrap_or("uniform_with_rep").to_string(),
        balls: None,
        trials: s.get("run.trials").and_then(|v| parse_integer(v).ok()).unwrap_or(super::config::DEFAULT_TRIALS),
        summary: None,
        error: None,
    };
    match config.and_then(|c| {
        row.balls = Some(c.balls());
        row.offer_mode = c.offer_mode.name();
        run_experiment(&c)
    }) {
        Ok(e) => row.summary = Some(e.summary),
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> Settings {
        Settings::parse("policy.kind = random\nproblem.n = 1\nproblem.k = 1\nrun.trials = 2").unwrap()
    }

    #[test]
    fn row_count_is_grid_product() {
        let grid = Grid::parse("grid.n = 256, 512\ngrid.k = 2,4\ngrid.m = 16, 32, 64\ngrid.policy = random, greedy").unwrap();
        assert_eq!(grid.cells(), 24);
        let rows = sweep(&base(), &grid).unwrap();
        assert_eq!(rows.len(), 24);
        assert!(rows.iter().all(|r| r.error.is_none()));
        assert_eq!((rows[0].n, rows[0].k, rows[0].m, rows[0].policy.as_str()), (256, 2, 16, "random"));
        assert_eq!((rows[1].policy.as_str(), rows[2].m), ("greedy", 32));
    }

    #[test]
    fn ratio_axis_sets_budget() {
        let grid = Grid::parse("grid.n = 1000\ngrid.k = 3\ngrid.km_over_n = 0.1, 1\ngrid.policy = random").unwrap();
        let rows = sweep(&base(), &grid).unwrap();
        assert_eq!(rows.iter().map(|r| r.m).collect::<Vec<_>>(), vec![34, 334]);
    }

    #[test]
    fn cell_errors_are_recorded() {
        let grid = Grid::parse("grid.n = 4096\ngrid.k = 2\ngrid.m = 0, 64\ngrid.policy = tiered, random").unwrap();
        let rows = sweep(&base(), &grid).unwrap();
        assert_eq!(rows.len(), 4);
        assert!(rows[0].error.is_some() && rows[0].summary.is_none());
        assert!(rows[1].error.is_none() && rows[1].summary.is_some());
    }

    #[test]
    fn empty_policy_list_is_invalid() {
        let grid = Grid::parse("grid.n = 64\ngrid.k = 2\ngrid.m = 8").unwrap();
        assert!(matches!(sweep(&base(), &grid), Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn malformed_grids() {
        for bad in [
            "grid.n = 64\ngrid.k = 2\ngrid.policy = random",
            "grid.n = 64\ngrid.k = 2\ngrid.m = 1\ngrid.km_over_n = 1\ngrid.policy = random",
            "grid.q = 1",
            "grid.n = x\ngrid.k = 2\ngrid.m = 1",
        ] {
            assert!(matches!(Grid::parse(bad), Err(Error::Config(_))), "{bad}");
        }
    }
}
