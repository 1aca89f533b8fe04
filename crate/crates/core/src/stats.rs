//! Hypothesis tests and intervals: Welch's t, one-way ANOVA, Pearson's r,
//! two-sample Kolmogorov-Smirnov, and the Wilson score interval, together
//! with the regularized incomplete beta function backing the t and F CDFs.
//!
//! P-values are asymptotic two-sided throughout and should be treated as
//! approximate below roughly n=8 per group. Sample variance uses the n-1
//! denominator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, StatError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestKind {
    WelchT,
    AnovaF,
    PearsonR,
    KS2,
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TestKind::WelchT => "welch_t",
            TestKind::AnovaF => "anova_f",
            TestKind::PearsonR => "pearson_r",
            TestKind::KS2 => "ks_2samp",
        };
        f.write_str(s)
    }
}

/// A statistic (t, F, r, or D) with degrees of freedom and a two-sided p-value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub df1: f64,
    /// Zero when the test has a single degrees-of-freedom parameter.
    pub df2: f64,
    pub p_value: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with n-1 denominator.
fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// ln Γ(x) via the Lanczos approximation (g=7, n=9), accurate to ~1e-13.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return pi.ln() - (pi * x).sin().ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + 7.5;
    for (i, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized incomplete beta function I_x(a, b), evaluated by Lentz's
/// continued fraction. Relative error below 1e-10 over the tested domain;
/// satisfies the reflection identity I_x(a,b) + I_{1-x}(b,a) = 1.
pub fn reg_incomplete_beta(a: f64, b: f64, x: f64) -> Result<f64> {
    if !(a > 0.0) || !(b > 0.0) {
        return Err(StatError::Domain(format!("shape parameters must be positive: a={a}, b={b}")));
    }
    if !(0.0..=1.0).contains(&x) {
        return Err(StatError::Domain(format!("x={x} outside [0,1]")));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    if x == 1.0 {
        return Ok(1.0);
    }
    // The continued fraction converges fast for x < (a+1)/(a+b+2); otherwise
    // use the reflection identity.
    if x > (a + 1.0) / (a + b + 2.0) {
        return Ok(1.0 - reg_incomplete_beta(b, a, 1.0 - x)?);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() + ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b);
    let front = ln_front.exp() / a;

    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let mut c = 1.0;
    let mut d = 1.0 - (a + b) * x / (a + 1.0);
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        // even step
        let num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
        d = 1.0 + num * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // odd step
        let num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
        d = 1.0 + num * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + num / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    Ok((front * h).clamp(0.0, 1.0))
}

/// Two-sided p-value for a Student-t statistic with `df` degrees of freedom.
fn student_t_p_two_sided(t: f64, df: f64) -> Result<f64> {
    if t == 0.0 {
        return Ok(1.0);
    }
    let x = df / (df + t * t);
    // P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
    reg_incomplete_beta(df / 2.0, 0.5, x)
}

/// Upper-tail p-value for an F statistic with (df1, df2) degrees of freedom.
fn f_p_upper(f_stat: f64, df1: f64, df2: f64) -> Result<f64> {
    if f_stat <= 0.0 {
        return Ok(1.0);
    }
    let x = df2 / (df2 + df1 * f_stat);
    reg_incomplete_beta(df2 / 2.0, df1 / 2.0, x)
}

/// Welch's two-sample t-test with Welch-Satterthwaite degrees of freedom.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatError::Domain(format!(
            "each sample needs at least 2 observations (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (va, vb) = (variance(a), variance(b));
    if va == 0.0 && vb == 0.0 {
        return Err(StatError::Degenerate("both samples have zero variance".into()));
    }
    let sa = va / na;
    let sb = vb / nb;
    let t = (mean(a) - mean(b)) / (sa + sb).sqrt();
    let df = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p = student_t_p_two_sided(t, df)?;
    Ok(TestResult {
        kind: TestKind::WelchT,
        statistic: t,
        df1: df,
        df2: 0.0,
        p_value: p,
    })
}

/// One-way ANOVA over two or more groups.
pub fn one_way_anova(groups: &[Vec<f64>]) -> Result<TestResult> {
    if groups.len() < 2 {
        return Err(StatError::Domain(format!(
            "need at least 2 groups, got {}",
            groups.len()
        )));
    }
    for (i, g) in groups.iter().enumerate() {
        if g.len() < 2 {
            return Err(StatError::Domain(format!(
                "group {i} has fewer than 2 observations"
            )));
        }
    }
    let n_total: usize = groups.iter().map(Vec::len).sum();
    let grand = groups.iter().flatten().sum::<f64>() / n_total as f64;
    let ssb: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.len() as f64 * (m - grand) * (m - grand)
        })
        .sum();
    let ssw: f64 = groups
        .iter()
        .map(|g| {
            let m = mean(g);
            g.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
        })
        .sum();
    let df1 = groups.len() as f64 - 1.0;
    let df2 = n_total as f64 - groups.len() as f64;
    if ssw == 0.0 {
        if ssb == 0.0 {
            return Err(StatError::Degenerate("all observations identical".into()));
        }
        // group means differ with zero within-group variance
        return Ok(TestResult {
            kind: TestKind::AnovaF,
            statistic: f64::INFINITY,
            df1,
            df2,
            p_value: 0.0,
        });
    }
    let f_stat = (ssb / df1) / (ssw / df2);
    let p = f_p_upper(f_stat, df1, df2)?;
    Ok(TestResult {
        kind: TestKind::AnovaF,
        statistic: f_stat,
        df1,
        df2,
        p_value: p,
    })
}

/// Pearson's correlation with a two-sided p-value from the t transform.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<TestResult> {
    if x.len() != y.len() {
        return Err(StatError::Domain(format!(
            "samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 3 {
        return Err(StatError::Domain("need at least 3 paired observations".into()));
    }
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        sxy += (xi - mx) * (yi - my);
        sxx += (xi - mx) * (xi - mx);
        syy += (yi - my) * (yi - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatError::Degenerate("zero variance in a sample".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = n - 2.0;
    let p = if (1.0 - r * r) <= f64::EPSILON {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        student_t_p_two_sided(t, df)?
    };
    Ok(TestResult {
        kind: TestKind::PearsonR,
        statistic: r,
        df1: df,
        df2: 0.0,
        p_value: p,
    })
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value.
///
/// D is the supremum gap between the two right-continuous empirical CDFs,
/// evaluated at every pooled sample point.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(StatError::Domain("samples must be non-empty".into()));
    }
    let xs = sorted(a);
    let ys = sorted(b);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);

    let mut pooled: Vec<f64> = xs.iter().chain(ys.iter()).copied().collect();
    pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pooled.dedup();

    let cdf_at = |sorted_xs: &[f64], v: f64| -> f64 {
        // right-continuous: count of points <= v
        let count = sorted_xs.partition_point(|&x| x <= v);
        count as f64 / sorted_xs.len() as f64
    };
    let d = pooled
        .iter()
        .map(|&v| (cdf_at(&xs, v) - cdf_at(&ys, v)).abs())
        .fold(0.0_f64, f64::max);

    let n_eff = na * nb / (na + nb);
    let lambda = (n_eff.sqrt() + 0.12 + 0.11 / n_eff.sqrt()) * d;
    let p = ks_asymptotic_p(lambda);
    Ok(TestResult {
        kind: TestKind::KS2,
        statistic: d,
        df1: 0.0,
        df2: 0.0,
        p_value: p,
    })
}

/// Kolmogorov survival function 2*sum_{k>=1} (-1)^{k-1} exp(-2 k^2 lambda^2),
/// truncated once a term's magnitude drops below 1e-10.
fn ks_asymptotic_p(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-10 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Wilson score interval for a binomial proportion at normal quantile `z`.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(StatError::Domain("n must be at least 1".into()));
    }
    if successes > n {
        return Err(StatError::Domain(format!("successes {successes} exceed n {n}")));
    }
    if !(z > 0.0) {
        return Err(StatError::Domain(format!("z must be positive, got {z}")));
    }
    let nf = n as f64;
    let p_hat = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = p_hat + z2 / (2.0 * nf);
    let margin = z * (p_hat * (1.0 - p_hat) / nf + z2 / (4.0 * nf * nf)).sqrt();
    let lo = ((center - margin) / denom).max(0.0);
    let hi = ((center + margin) / denom).min(1.0);
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TOL: f64 = 1e-9;

    #[test]
    fn beta_boundaries() {
        assert_eq!(reg_incomplete_beta(2.0, 3.0, 0.0).unwrap(), 0.0);
        assert_eq!(reg_incomplete_beta(2.0, 3.0, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn beta_uniform_case() {
        assert!((reg_incomplete_beta(1.0, 1.0, 0.3).unwrap() - 0.3).abs() < TOL);
    }

    #[test]
    fn beta_closed_form() {
        // I_x(2,3) = 1 - (1-x)^3 (1+3x)
        let got = reg_incomplete_beta(2.0, 3.0, 0.5).unwrap();
        assert!((got - 0.6875).abs() < TOL, "got {got}");
    }

    #[test]
    fn beta_domain_errors() {
        assert!(reg_incomplete_beta(0.0, 1.0, 0.5).is_err());
        assert!(reg_incomplete_beta(1.0, -1.0, 0.5).is_err());
        assert!(reg_incomplete_beta(1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn beta_reflection_grid() {
        for ai in 1..=10 {
            for bi in 1..=10 {
                let a = ai as f64 * 0.7;
                let b = bi as f64 * 0.9;
                for xi in 1..10 {
                    let x = xi as f64 / 10.0;
                    let lhs = reg_incomplete_beta(a, b, x).unwrap()
                        + reg_incomplete_beta(b, a, 1.0 - x).unwrap();
                    assert!((lhs - 1.0).abs() < 1e-9, "a={a} b={b} x={x}: {lhs}");
                }
            }
        }
    }

    #[test]
    fn welch_identical_samples() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn welch_known_case() {
        let r = welch_t_test(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]).unwrap();
        assert!((r.statistic + 1.224744871391589).abs() < 1e-9, "t={}", r.statistic);
        assert!((r.df1 - 4.0).abs() < 1e-9, "df={}", r.df1);
        assert!((r.p_value - 0.2878641347266908).abs() < 1e-6, "p={}", r.p_value);
    }

    #[test]
    fn welch_zero_variance() {
        assert!(matches!(
            welch_t_test(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]),
            Err(StatError::Degenerate(_))
        ));
    }

    #[test]
    fn welch_antisymmetry() {
        let a = [1.0, 2.5, 3.0, 4.2];
        let b = [2.0, 2.2, 5.1];
        let r1 = welch_t_test(&a, &b).unwrap();
        let r2 = welch_t_test(&b, &a).unwrap();
        assert!((r1.statistic + r2.statistic).abs() < TOL);
        assert!((r1.p_value - r2.p_value).abs() < TOL);
    }

    #[test]
    fn anova_identical_groups() {
        let r = one_way_anova(&[vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0]]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn anova_known_case() {
        let r = one_way_anova(&[
            vec![1.0, 2.0, 3.0],
            vec![4.0, 5.0, 6.0],
            vec![7.0, 8.0, 9.0],
        ])
        .unwrap();
        assert!((r.statistic - 27.0).abs() < TOL, "F={}", r.statistic);
        assert_eq!(r.df1, 2.0);
        assert_eq!(r.df2, 6.0);
    }

    #[test]
    fn anova_one_group_is_domain_error() {
        assert!(matches!(
            one_way_anova(&[vec![1.0, 2.0]]),
            Err(StatError::Domain(_))
        ));
    }

    #[test]
    fn anova_shift_and_scale_invariance() {
        let base = vec![vec![1.0, 2.0, 3.5], vec![2.0, 4.0, 4.5], vec![0.5, 1.0, 3.0]];
        let f0 = one_way_anova(&base).unwrap().statistic;
        let shifted: Vec<Vec<f64>> = base
            .iter()
            .map(|g| g.iter().map(|x| x + 7.3).collect())
            .collect();
        let scaled: Vec<Vec<f64>> = base
            .iter()
            .map(|g| g.iter().map(|x| x * -2.5).collect())
            .collect();
        assert!((one_way_anova(&shifted).unwrap().statistic - f0).abs() < 1e-9);
        assert!((one_way_anova(&scaled).unwrap().statistic - f0).abs() < 1e-9);
    }

    #[test]
    fn pearson_perfect() {
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
        assert_eq!(r.p_value, 0.0);
        let r = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(r.statistic, -1.0);
    }

    #[test]
    fn pearson_known_case() {
        let r = pearson(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!((r.statistic - 0.8).abs() < TOL, "r={}", r.statistic);
    }

    #[test]
    fn pearson_zero_variance() {
        assert!(matches!(
            pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(StatError::Degenerate(_))
        ));
    }

    #[test]
    fn pearson_affine_invariance() {
        let x = [1.0, 2.0, 4.0, 8.0, 9.0];
        let y = [2.0, 1.0, 5.0, 7.0, 6.0];
        let r0 = pearson(&x, &y).unwrap().statistic;
        let x2: Vec<f64> = x.iter().map(|v| 3.0 * v + 5.0).collect();
        assert!((pearson(&x2, &y).unwrap().statistic - r0).abs() < TOL);
        let x3: Vec<f64> = x.iter().map(|v| -2.0 * v).collect();
        assert!((pearson(&x3, &y).unwrap().statistic + r0).abs() < TOL);
    }

    #[test]
    fn ks_identical() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn ks_disjoint() {
        let r = ks_two_sample(&[1.0, 2.0], &[10.0, 11.0]).unwrap();
        assert_eq!(r.statistic, 1.0);
    }

    #[test]
    fn ks_known_case() {
        let r = ks_two_sample(&[1.0, 2.0, 3.0, 4.0], &[1.5, 2.5, 3.5, 4.5]).unwrap();
        assert!((r.statistic - 0.25).abs() < TOL, "D={}", r.statistic);
    }

    #[test]
    fn ks_monotone_transform_invariance() {
        let a = [0.1, 0.4, 0.9, 1.7, 2.2];
        let b = [0.3, 0.5, 1.1, 1.9];
        let d0 = ks_two_sample(&a, &b).unwrap().statistic;
        let ta: Vec<f64> = a.iter().map(|v| v.exp()).collect();
        let tb: Vec<f64> = b.iter().map(|v| v.exp()).collect();
        assert!((ks_two_sample(&ta, &tb).unwrap().statistic - d0).abs() < TOL);
    }

    #[test]
    fn ks_empty_is_domain_error() {
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn wilson_boundaries() {
        let (lo, _) = wilson_interval(0, 10, 1.96).unwrap();
        assert_eq!(lo, 0.0);
        let (_, hi) = wilson_interval(10, 10, 1.96).unwrap();
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn wilson_half() {
        let (lo, hi) = wilson_interval(50, 100, 1.96).unwrap();
        assert!((lo - 0.40383).abs() < 5e-4, "lo={lo}");
        assert!((hi - 0.59617).abs() < 5e-4, "hi={hi}");
    }

    #[test]
    fn wilson_n_zero() {
        assert!(wilson_interval(0, 0, 1.96).is_err());
    }
}
