//! Between-condition inference on projected coordinates.

use statrs::function::beta::beta_reg;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("each group needs at least 2 samples (got {0} and {1})")]
    TooFewSamples(usize, usize),
    #[error("both groups have zero variance")]
    BothZeroVariance,
    #[error("pooled standard deviation is zero")]
    ZeroPooledVariance,
    #[error("non-finite sample value")]
    NonFinite,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupSummary {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: f64,
    pub n: usize,
}

impl GroupSummary {
    pub fn of(x: &[f64]) -> GroupSummary {
        let n = x.len();
        let mean = x.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        GroupSummary {
            mean,
            sd: var.sqrt(),
            n,
        }
    }

    fn var(&self) -> f64 {
        self.sd * self.sd
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    /// Free-form axis label such as `SVD1`.
    pub dimension: String,
    pub groups: [GroupSummary; 2],
    pub t_statistic: f64,
    /// Welch–Satterthwaite degrees of freedom.
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
    /// `None` when the pooled SD is zero.
    pub cohens_d: Option<f64>,
    pub alpha: f64,
    pub significant: bool,
}

fn check(a: &[f64], b: &[f64]) -> Result<(), StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::TooFewSamples(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    Ok(())
}

/// CDF of Student's t with `df` (possibly non-integer) degrees of freedom.
pub fn t_cdf(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return if t > 0.0 { 1.0 } else { 0.0 };
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Two-sided p-value `P(|T| ≥ |t|)`.
pub fn t_two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    beta_reg(df / 2.0, 0.5, df / (df + t * t)).clamp(0.0, 1.0)
}

/// Quantile of Student's t by bracketing and bisection on [`t_cdf`].
pub fn t_quantile(p: f64, df: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0 && df > 0.0, "t_quantile domain");
    if p == 0.5 {
        return 0.0;
    }
    if p < 0.5 {
        return -t_quantile(1.0 - p, df);
    }
    let mut hi = 1.0;
    while t_cdf(hi, df) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if t_cdf(mid, df) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Welch's unequal-variance two-sample t-test, two-sided.
pub fn welch_t_test(a: &[f64], b: &[f64], alpha: f64) -> Result<TestReport, StatsError> {
    welch_t_test_on("", a, b, alpha)
}

pub fn welch_t_test_on(dimension: &str, a: &[f64], b: &[f64], alpha: f64) -> Result<TestReport, StatsError> {
    check(a, b)?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidArgument(format!("alpha {alpha}")));
    }
    let (ga, gb) = (GroupSummary::of(a), GroupSummary::of(b));
    let (va, vb) = (ga.var() / ga.n as f64, gb.var() / gb.n as f64);
    if va + vb == 0.0 {
        return Err(StatsError::BothZeroVariance);
    }
    let t = (ga.mean - gb.mean) / (va + vb).sqrt();
    let df = (va + vb).powi(2) / (va * va / (ga.n - 1) as f64 + vb * vb / (gb.n - 1) as f64);
    let p = t_two_sided_p(t, df);
    Ok(TestReport {
        dimension: dimension.to_string(),
        groups: [ga, gb],
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
        cohens_d: cohens_d(a, b).ok(),
        alpha,
        significant: p < alpha,
    })
}

/// Cohen's d with the pooled standard deviation.
pub fn cohens_d(a: &[f64], b: &[f64]) -> Result<f64, StatsError> {
    check(a, b)?;
    let (ga, gb) = (GroupSummary::of(a), GroupSummary::of(b));
    let (na, nb) = (ga.n as f64, gb.n as f64);
    let pooled = (((na - 1.0) * ga.var() + (nb - 1.0) * gb.var()) / (na + nb - 2.0)).sqrt();
    if pooled == 0.0 {
        return Err(StatsError::ZeroPooledVariance);
    }
    Ok((ga.mean - gb.mean) / pooled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn identical_groups() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], 0.05).unwrap();
        assert_eq!(r.t_statistic, 0.0);
        assert_abs_diff_eq!(r.p_value, 1.0, epsilon = 1e-15);
        assert!(!r.significant);
        assert_eq!(cohens_d(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            welch_t_test(&[0.0; 3], &[0.0; 3], 0.05).unwrap_err(),
            StatsError::BothZeroVariance
        );
        assert_eq!(welch_t_test(&[1.0], &[1.0, 2.0], 0.05).unwrap_err(), StatsError::TooFewSamples(1, 2));
        assert_eq!(cohens_d(&[1.0, 1.0], &[2.0, 2.0]).unwrap_err(), StatsError::ZeroPooledVariance);
        assert_eq!(welch_t_test(&[1.0, f64::NAN], &[1.0, 2.0], 0.05).unwrap_err(), StatsError::NonFinite);
    }

    #[test]
    fn cohens_d_examples() {
        assert_abs_diff_eq!(cohens_d(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap(), 2.0 / 2.5f64.sqrt(), epsilon = 1e-12);
        assert_abs_diff_eq!(cohens_d(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0]).unwrap(), 1.2649, epsilon = 1e-4);
        // mean 1 vs mean 0, both sd 1, equal n
        let a = [0.0, 1.0, 2.0];
        let b = [-1.0, 0.0, 1.0];
        assert_abs_diff_eq!(cohens_d(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn t_quantile_reference() {
        // df = 1 is Cauchy: quantile = tan(pi (p - 1/2))
        let q = t_quantile(0.975, 1.0);
        assert_abs_diff_eq!(q, (std::f64::consts::PI * 0.475).tan(), epsilon = 1e-9);
        assert_abs_diff_eq!(q, 12.706, epsilon = 1e-3);
        for df in [2.0, 7.5, 30.0] {
            assert_abs_diff_eq!(t_cdf(t_quantile(0.9, df), df), 0.9, epsilon = 1e-12);
        }
        // df = 2 closed form: F(t) = 1/2 + t / (2 sqrt(t^2 + 2))
        for t in [-3.0, -0.4, 0.0, 1.1, 8.0] {
            let exact = 0.5 + t / (2.0 * (t * t + 2.0f64).sqrt());
            assert_abs_diff_eq!(t_cdf(t, 2.0), exact, epsilon = 1e-13);
        }
    }

    proptest! {
        #[test]
        fn antisymmetry_shift_scale(
            a in prop::collection::vec(-10.0f64..10.0, 2..12),
            b in prop::collection::vec(-10.0f64..10.0, 2..12),
            shift in -10.0f64..10.0,
            scale in 0.01f64..100.0,
        ) {
            let r = welch_t_test(&a, &b, 0.05);
            prop_assume!(r.is_ok());
            let r = r.unwrap();
            prop_assume!(r.cohens_d.is_some());
            let s = welch_t_test(&b, &a, 0.05).unwrap();
            prop_assert_eq!(s.t_statistic, -r.t_statistic);
            prop_assert_eq!(s.p_value, r.p_value);
            prop_assert_eq!(s.degrees_of_freedom, r.degrees_of_freedom);
            prop_assert_eq!(s.cohens_d.unwrap(), -r.cohens_d.unwrap());

            let tol = |x: f64| 1e-12 * x.abs().max(1.0);
            let sa: Vec<f64> = a.iter().map(|v| v + shift).collect();
            let sb: Vec<f64> = b.iter().map(|v| v + shift).collect();
            let sh = welch_t_test(&sa, &sb, 0.05).unwrap();
            prop_assert!((sh.t_statistic - r.t_statistic).abs() <= tol(r.t_statistic));
            prop_assert!((sh.p_value - r.p_value).abs() <= 1e-12);
            prop_assert!((sh.cohens_d.unwrap() - r.cohens_d.unwrap()).abs() <= tol(r.cohens_d.unwrap()));

            let ca: Vec<f64> = a.iter().map(|v| v * scale).collect();
            let cb: Vec<f64> = b.iter().map(|v| v * scale).collect();
            let sc = welch_t_test(&ca, &cb, 0.05).unwrap();
            prop_assert!((sc.t_statistic - r.t_statistic).abs() <= tol(r.t_statistic));
            prop_assert!((sc.p_value - r.p_value).abs() <= 1e-12);
            prop_assert!((sc.cohens_d.unwrap() - r.cohens_d.unwrap()).abs() <= tol(r.cohens_d.unwrap()));
        }
    }
}
