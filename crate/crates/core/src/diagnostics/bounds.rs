use std::fmt;

/// Asymptotic load formulas with lower-order terms dropped. Values are
/// approximations for annotation and ordering; `None` marks a formula
/// outside its domain (for instance a double log of a value at most `e`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundReport {
    pub n: u64,
    pub k: u64,
    pub m: u64,
    /// `ln(n/m) / (ln ln(n/m) + ln k)`.
    pub thm2_load_lower: Option<f64>,
    /// `ln ln(n/(km))`.
    pub thm3_loglog_load: Option<f64>,
    /// `log2 ln(n/(km))`, the explicit form of the previous field.
    pub thm3_log2_form: Option<f64>,
    /// `500 k m`: from this many balls on, `Col_2(t) >= t^2/(16n)`.
    pub col2_threshold_t: u128,
    /// `ln n / ln ln n`.
    pub random_alloc_load: Option<f64>,
    /// `log_k ln n`.
    pub greedy_load: Option<f64>,
}

pub const CAVEAT: &str = "asymptotic, constants suppressed";

fn positive(x: f64) -> Option<f64> {
    (x.is_finite() && x > 0.0).then_some(x)
}

pub fn theoretical_bounds(n: u64, k: u64, m: u64) -> BoundReport {
    let nf = n as f64;
    let kf = k as f64;
    let mf = m as f64;
    let ln_nm = (nf / mf).ln();
    let ln_nkm = (nf / (kf * mf)).ln();
    let ln_n = nf.ln();
    BoundReport {
        n,
        k,
        m,
        thm2_load_lower: (ln_nm > 1.0).then(|| ln_nm / (ln_nm.ln() + kf.ln())).and_then(positive),
        thm3_loglog_load: (ln_nkm > 1.0).then(|| ln_nkm.ln()).and_then(positive),
        thm3_log2_form: (ln_nkm > 1.0).then(|| ln_nkm.log2()).and_then(positive),
        col2_threshold_t: 500 * k as u128 * m as u128,
        random_alloc_load: (ln_n > 1.0).then(|| ln_n / ln_n.ln()).and_then(positive),
        greedy_load: (k >= 2 && ln_n > 1.0).then(|| ln_n.ln() / kf.ln()).and_then(positive),
    }
}

impl BoundReport {
    /// `t^2 / (16 n)`.
    pub fn col2_floor_at(&self, t: u64) -> f64 {
        (t as f64).powi(2) / (16.0 * self.n as f64)
    }

    pub fn rows(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<f64>| v.map_or_else(|| "unavailable".to_string(), |x| format!("{x:.4}"));
        vec![
            ("thm2_load_lower", opt(self.thm2_load_lower)),
            ("thm3_loglog_load", opt(self.thm3_loglog_load)),
            ("thm3_log2_form", opt(self.thm3_log2_form)),
            ("col2_threshold_t", self.col2_threshold_t.to_string()),
            ("col2_floor_at(n)", format!("{:.4}", self.col2_floor_at(self.n))),
            ("random_alloc_load", opt(self.random_alloc_load)),
            ("greedy_load", opt(self.greedy_load)),
        ]
    }
}

impl fmt::Display for BoundReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "n = {}, k = {}, m = {}  ({CAVEAT})", self.n, self.k, self.m)?;
        for (name, value) in self.rows() {
            writeln!(f, "  {name:<20} {value}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula_examples() {
        let r = theoretical_bounds(1 << 20, 8, 1 << 10);
        let l = 1024f64.ln();
        assert!((r.thm2_load_lower.unwrap() - l / (l.ln() + 8f64.ln())).abs() < 1e-12);
        assert!((r.thm2_load_lower.unwrap() - 1.73).abs() < 0.005);

        let r = theoretical_bounds(1_000_000, 1, 1);
        assert!((r.random_alloc_load.unwrap() - 5.26).abs() < 0.005);
        assert_eq!(r.greedy_load, None);

        assert_eq!(theoretical_bounds(1 << 20, 2, 64).col2_threshold_t, 64_000);
    }

    #[test]
    fn greedy_two_choice() {
        let r = theoretical_bounds(1_000_000, 2, 64);
        assert!((r.greedy_load.unwrap() - 1_000_000f64.ln().log2()).abs() < 1e-12);
    }

    #[test]
    fn domain_errors_are_unavailable() {
        let r = theoretical_bounds(100, 4, 50);
        assert_eq!(r.thm2_load_lower, None);
        assert_eq!(r.thm3_loglog_load, None);
        assert!(r.to_string().contains("unavailable"));
    }

    #[test]
    fn floor_and_purity() {
        let r = theoretical_bounds(1 << 20, 2, 64);
        assert_eq!(r.col2_floor_at(1 << 20), (1u64 << 16) as f64);
        assert_eq!(r, theoretical_bounds(1 << 20, 2, 64));
    }
}
