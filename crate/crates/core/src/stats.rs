//! Small statistical helpers: binomial and mean intervals, order-statistic
//! quantile intervals, least squares with slope intervals, and the
//! one-sample Kolmogorov-Smirnov statistic.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A point estimate with a two-sided confidence interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate { value, lo: value, hi: value }
    }

    pub fn halfwidth(&self) -> f64 {
        0.5 * (self.hi - self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// Scale by a positive constant.
    pub fn scale(&self, c: f64) -> Estimate {
        Estimate { value: self.value * c, lo: self.lo * c, hi: self.hi * c }
    }
}

/// Normal quantile for a two-sided level (0.95 gives 1.96).
pub fn z_for(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(0.5 + level / 2.0)
}

/// Student-t quantile for a two-sided level with `df` degrees of freedom.
pub fn t_for(level: f64, df: f64) -> f64 {
    if df <= 0.0 || !df.is_finite() {
        return z_for(level);
    }
    StudentsT::new(0.0, 1.0, df).expect("valid t").inverse_cdf(0.5 + level / 2.0)
}

/// Wilson score interval for a binomial proportion at 95%.
pub fn wilson(successes: u64, trials: u64) -> Estimate {
    wilson_z(successes, trials, Z95)
}

pub fn wilson_z(successes: u64, trials: u64, z: f64) -> Estimate {
    if trials == 0 {
        return Estimate { value: f64::NAN, lo: 0.0, hi: 1.0 };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Estimate { value: p, lo: (centre - half).max(0.0), hi: (centre + half).min(1.0) }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Mean with a 95% Student-t interval.
pub fn mean_ci(xs: &[f64]) -> Estimate {
    let n = xs.len();
    if n == 0 {
        return Estimate { value: f64::NAN, lo: f64::NAN, hi: f64::NAN };
    }
    let m = mean(xs);
    if n == 1 {
        return Estimate::exact(m);
    }
    let se = (variance(xs) / n as f64).sqrt();
    let t = t_for(0.95, (n - 1) as f64);
    Estimate { value: m, lo: m - t * se, hi: m + t * se }
}

/// Empirical `q`-quantile of sorted data with a distribution-free 95%
/// interval from binomial order-statistic ranks. The point value is the
/// order statistic of rank `ceil(q n)`.
pub fn quantile_ci(sorted: &[f64], q: f64) -> Estimate {
    let n = sorted.len();
    assert!(n > 0, "quantile of empty sample");
    let nf = n as f64;
    let k = ((q * nf).ceil() as usize).clamp(1, n);
    let spread = Z95 * (nf * q * (1.0 - q)).sqrt();
    let lo_rank = ((q * nf - spread).floor() as isize).clamp(1, n as isize) as usize;
    let hi_rank = ((q * nf + spread).ceil() as isize).clamp(1, n as isize) as usize;
    Estimate { value: sorted[k - 1], lo: sorted[lo_rank - 1], hi: sorted[hi_rank - 1] }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    /// 95% interval for the slope.
    pub slope_lo: f64,
    pub slope_hi: f64,
    pub r2: f64,
}

/// Ordinary least squares `y = intercept + slope x`. With `weights`, each
/// point counts with the given weight (e.g. inverse variance).
pub fn linear_fit(x: &[f64], y: &[f64], weights: Option<&[f64]>) -> LinearFit {
    let n = x.len();
    assert!(n >= 2 && y.len() == n, "need at least two points");
    let w: Vec<f64> = weights.map(|w| w.to_vec()).unwrap_or_else(|| vec![1.0; n]);
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, b)| b * (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).zip(&w).map(|((a, c), b)| b * (a - mx) * (c - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x.iter().zip(y).zip(&w).map(|((a, c), b)| b * (c - intercept - slope * a).powi(2)).sum();
    let syy: f64 = y.iter().zip(&w).map(|(c, b)| b * (c - my) * (c - my)).sum();
    let df = (n as f64 - 2.0).max(1.0);
    let slope_se = if n > 2 {
        // for normalized weights scale the residual variance back to the data
        let sigma2 = rss / df * if weights.is_some() { n as f64 / sw } else { 1.0 };
        (sigma2 / (sxx * if weights.is_some() { n as f64 / sw } else { 1.0 })).sqrt()
    } else {
        0.0
    };
    let t = t_for(0.95, df);
    LinearFit {
        slope,
        intercept,
        slope_se,
        slope_lo: slope - t * slope_se,
        slope_hi: slope + t * slope_se,
        r2: if syy > 0.0 { 1.0 - rss / syy } else { 1.0 },
    }
}

/// Kolmogorov-Smirnov distance between the sample and Uniform[a, b].
pub fn ks_uniform(samples: &[f64], a: f64, b: f64) -> f64 {
    let mut s: Vec<f64> = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = ((x - a) / (b - a)).clamp(0.0, 1.0);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    d
}

/// Asymptotic KS critical value `c(α)/√n` with `c(α) = √(-ln(α/2)/2)`
/// (1.358 at α = 0.05).
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Spread of a family of positive estimates as `max / min`, using the
/// interval ends that make the family look as flat as possible. A family
/// whose adjusted spread exceeds `F` is inconsistent with "within factor F".
pub fn adjusted_spread(es: &[Estimate]) -> f64 {
    let max_lo = es.iter().map(|e| e.lo).fold(f64::NEG_INFINITY, f64::max);
    let min_hi = es.iter().map(|e| e.hi).fold(f64::INFINITY, f64::min);
    if max_lo <= min_hi {
        1.0
    } else {
        max_lo / min_hi
    }
}

/// Plain `max / min` of the point values.
pub fn point_spread(es: &[Estimate]) -> f64 {
    let max = es.iter().map(|e| e.value).fold(f64::NEG_INFINITY, f64::max);
    let min = es.iter().map(|e| e.value).fold(f64::INFINITY, f64::min);
    max / min
}

/// Ratio of two independent positive estimates with a delta-method interval
/// on the log scale.
pub fn ratio(num: Estimate, den: Estimate) -> Estimate {
    let v = num.value / den.value;
    let rel = |e: Estimate| if e.value > 0.0 { e.halfwidth() / Z95 / e.value } else { f64::INFINITY };
    let s = (rel(num).powi(2) + rel(den).powi(2)).sqrt();
    if !s.is_finite() || !v.is_finite() || v <= 0.0 {
        return Estimate { value: v, lo: 0.0, hi: f64::INFINITY };
    }
    Estimate { value: v, lo: v * (-Z95 * s).exp(), hi: v * (Z95 * s).exp() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 15 of 20 at 95%: (0.5313, 0.8881)
        let e = wilson(15, 20);
        assert!((e.lo - 0.5313).abs() < 1e-3 && (e.hi - 0.8881).abs() < 1e-3, "{e:?}");
        let all = wilson(100, 100);
        assert_eq!(all.value, 1.0);
        assert_eq!(all.hi, 1.0);
    }

    #[test]
    fn t_and_z_quantiles() {
        assert!((z_for(0.95) - Z95).abs() < 1e-9);
        assert!((t_for(0.95, 10.0) - 2.228_138_85).abs() < 1e-6);
        assert!((ks_critical(1, 0.05) - 1.358_1).abs() < 1e-3);
    }

    #[test]
    fn exact_line_fit() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [3.0, 5.0, 7.0, 9.0];
        let f = linear_fit(&x, &y, None);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!(f.slope_se < 1e-9);
        let g = linear_fit(&x, &[3.0, 5.5, 6.5, 9.0], None);
        assert!(g.slope_lo < g.slope && g.slope < g.slope_hi);
    }

    #[test]
    fn ks_of_perfect_grid() {
        let s: Vec<f64> = (0..100).map(|i| (i as f64 + 0.5) / 200.0).collect();
        assert!((ks_uniform(&s, 0.0, 0.5) - 0.005).abs() < 1e-12);
    }

    #[test]
    fn quantile_ranks() {
        let s: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let q = quantile_ci(&s, 0.95);
        assert_eq!(q.value, 95.0);
        assert!(q.lo < 95.0 && q.hi > 95.0);
    }

    #[test]
    fn spreads() {
        let es = [Estimate { value: 1.0, lo: 0.8, hi: 1.2 }, Estimate { value: 3.0, lo: 2.4, hi: 3.6 }];
        assert!((point_spread(&es) - 3.0).abs() < 1e-12);
        assert!((adjusted_spread(&es) - 2.0).abs() < 1e-12);
    }
}
