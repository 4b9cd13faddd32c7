use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Result, XmsError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample variance, `1/(n-1)` normalization (0 for a single value).
    pub var: f64,
    pub std: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_variance(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64
}

/// `None` for an empty slice.
pub fn summary(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let var = sample_variance(values);
    Some(Summary {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: mean(values),
        var,
        std: var.sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    /// Two-sided.
    pub p_value: f64,
}

impl TTest {
    pub fn significant_at_005(&self) -> bool {
        self.p_value < 0.05
    }
}

/// Two-sample t-test of equal means. `welch = false` gives Student's
/// pooled-variance form with `n_a + n_b − 2` degrees of freedom.
///
/// With zero standard error the test is degenerate: equal means give
/// `t = 0, p = 1`, unequal means `t = ±∞, p = 0`.
pub fn students_t_test(a: &[f64], b: &[f64], welch: bool) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(XmsError::InvalidArgument(format!(
            "t-test needs at least 2 values per sample (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, mb) = (mean(a), mean(b));
    let (va, vb) = (sample_variance(a), sample_variance(b));
    let (se2, df) = if welch {
        let (qa, qb) = (va / na, vb / nb);
        let se2 = qa + qb;
        let df = if se2 > 0.0 {
            se2 * se2 / (qa * qa / (na - 1.0) + qb * qb / (nb - 1.0))
        } else {
            na + nb - 2.0
        };
        (se2, df)
    } else {
        let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
        (pooled * (1.0 / na + 1.0 / nb), na + nb - 2.0)
    };
    let diff = ma - mb;
    if se2 <= 0.0 {
        return Ok(if diff == 0.0 {
            TTest {
                t_statistic: 0.0,
                degrees_of_freedom: df,
                p_value: 1.0,
            }
        } else {
            TTest {
                t_statistic: f64::INFINITY.copysign(diff),
                degrees_of_freedom: df,
                p_value: 0.0,
            }
        });
    }
    let t = diff / se2.sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| XmsError::Numerical(format!("t distribution: {e}")))?;
    let p = (2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0);
    Ok(TTest {
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: Vec<f64>,
}

/// Quantile by linear interpolation between order statistics of sorted
/// data: position `(n − 1)·p`.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Box-plot statistics with whiskers at the most extreme points inside
/// `[q25 − 1.5·IQR, q75 + 1.5·IQR]`. `None` for an empty slice.
pub fn box_stats(values: &[f64]) -> Option<BoxStats> {
    if values.is_empty() {
        return None;
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q25 = quantile_sorted(&s, 0.25);
    let q75 = quantile_sorted(&s, 0.75);
    let iqr = q75 - q25;
    let (lo, hi) = (q25 - 1.5 * iqr, q75 + 1.5 * iqr);
    let inside: Vec<f64> = s.iter().copied().filter(|v| *v >= lo && *v <= hi).collect();
    Some(BoxStats {
        median: quantile_sorted(&s, 0.5),
        q25,
        q75,
        whisker_low: inside.first().copied().unwrap_or(q25),
        whisker_high: inside.last().copied().unwrap_or(q75),
        outliers: s.iter().copied().filter(|v| *v < lo || *v > hi).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    /// Two-sided p from a composite Simpson integration of the t density.
    fn p_by_quadrature(t: f64, df: f64) -> f64 {
        let ln_c = ln_gamma((df + 1.0) / 2.0) - ln_gamma(df / 2.0) - 0.5 * (df * std::f64::consts::PI).ln();
        let pdf = |x: f64| (ln_c - (df + 1.0) / 2.0 * (1.0 + x * x / df).ln()).exp();
        let (a, b, n) = (0.0, t.abs(), 20_000);
        let h = (b - a) / n as f64;
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            s += pdf(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        1.0 - 2.0 * s * h / 3.0
    }

    /// Lanczos approximation (g = 7).
    fn ln_gamma(x: f64) -> f64 {
        const C: [f64; 9] = [
            0.999_999_999_999_809_9,
            676.520_368_121_885_1,
            -1_259.139_216_722_402_8,
            771.323_428_777_653_1,
            -176.615_029_162_140_6,
            12.507_343_278_686_905,
            -0.138_571_095_265_720_12,
            9.984_369_578_019_572e-6,
            1.505_632_735_149_311_6e-7,
        ];
        let x = x - 1.0;
        let mut a = C[0];
        let t = x + 7.5;
        for (i, &c) in C.iter().enumerate().skip(1) {
            a += c / (x + i as f64);
        }
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
    }

    #[test]
    fn summary_fields() {
        let s = summary(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!((s.min, s.max, s.mean), (1.0, 4.0, 2.5));
        assert!((s.var - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.std * s.std - s.var).abs() < 1e-12);
        let one = summary(&[0.7]).unwrap();
        assert_eq!((one.min, one.max, one.mean, one.var), (0.7, 0.7, 0.7, 0.0));
        assert!(summary(&[]).is_none());
    }

    #[test]
    fn t_test_conventions() {
        let a = [0.5, 0.6, 0.7];
        let r = students_t_test(&a, &a, false).unwrap();
        assert_eq!((r.t_statistic, r.p_value), (0.0, 1.0));
        let r = students_t_test(&[0.0; 4], &[1.0; 4], false).unwrap();
        assert_eq!(r.p_value, 0.0);
        assert!(!students_t_test(&[0.0; 4], &[0.0; 4], true)
            .unwrap()
            .significant_at_005());
        assert!(students_t_test(&[1.0], &[1.0, 2.0], false).is_err());
    }

    #[test]
    fn t_test_matches_quadrature_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let n0 = Normal::new(0.0, 1.0).unwrap();
        let n1 = Normal::new(0.5, 1.0).unwrap();
        let a: Vec<f64> = (0..50).map(|_| n0.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..50).map(|_| n1.sample(&mut rng)).collect();
        let r = students_t_test(&a, &b, false).unwrap();
        assert_eq!(r.degrees_of_freedom, 98.0);
        let p = p_by_quadrature(r.t_statistic, 98.0);
        assert!((r.p_value - p).abs() < 1e-6, "{} vs {}", r.p_value, p);

        let w = students_t_test(&a, &b[..30], true).unwrap();
        let p = p_by_quadrature(w.t_statistic, w.degrees_of_freedom);
        assert!((w.p_value - p).abs() < 1e-6);
    }

    #[test]
    fn box_examples() {
        let b = box_stats(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!((b.median, b.q25, b.q75), (3.0, 2.0, 4.0));
        assert!(b.outliers.is_empty());
        let c = box_stats(&[0.4; 6]).unwrap();
        assert_eq!(
            (c.median, c.q25, c.q75, c.whisker_low, c.whisker_high),
            (0.4, 0.4, 0.4, 0.4, 0.4)
        );
        assert!(c.outliers.is_empty());
        let o = box_stats(&[1.0, 2.0, 3.0, 100.0]).unwrap();
        assert_eq!(o.outliers, vec![100.0]);
        assert_eq!(o.whisker_high, 3.0);
    }
}
