//! One-pass summaries of per-replica scalars.

use serde::Serialize;

use crate::numeric::CompensatedSum;

/// Welford accumulator extended to the fourth central moment.
#[derive(Clone, Copy, Debug, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Welford {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn summary(&self) -> Summary {
        let n = self.n as f64;
        let var = if self.n > 1 { self.m2 / (n - 1.0) } else { f64::NAN };
        let se = (var / n).sqrt();
        // Var(s²) ≈ (μ4 − σ⁴(n−3)/(n−1))/n with plug-in central moments.
        let mu4 = self.m4 / n;
        let mu2 = self.m2 / n;
        let var_se = if self.n > 3 { ((mu4 - mu2 * mu2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt() } else { f64::NAN };
        Summary { n: self.n, mean: self.mean, var, se, var_se }
    }
}

impl Extend<f64> for Welford {
    fn extend<I: IntoIterator<Item = f64>>(&mut self, iter: I) {
        for x in iter {
            self.push(x);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n: u64,
    pub mean: f64,
    /// Unbiased sample variance.
    pub var: f64,
    /// `√(var/n)`.
    pub se: f64,
    /// Standard error of the sample variance.
    pub var_se: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        let mut w = Welford::new();
        w.extend(xs.iter().copied());
        w.summary()
    }

    /// Compensated two-pass summary; insensitive to the order of `xs`.
    pub fn stable(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = crate::numeric::compensated_sum(xs.iter().copied()) / n;
        let mut m2 = CompensatedSum::new();
        let mut m4 = CompensatedSum::new();
        for &x in xs {
            let d = (x - mean) * (x - mean);
            m2.add(d);
            m4.add(d * d);
        }
        let (m2, m4) = (m2.value(), m4.value());
        let var = if xs.len() > 1 { m2 / (n - 1.0) } else { f64::NAN };
        let (mu2, mu4) = (m2 / n, m4 / n);
        let var_se = if xs.len() > 3 { ((mu4 - mu2 * mu2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt() } else { f64::NAN };
        Summary { n: xs.len() as u64, mean, var, se: (var / n).sqrt(), var_se }
    }

    /// `|mean − target| ≤ k·se`.
    pub fn mean_within(&self, target: f64, k: f64) -> bool {
        (self.mean - target).abs() <= k * self.se
    }
}

/// Paired one-sided test that `E[a − b] > 0` at `k` standard errors.
pub fn paired_greater(a: &[f64], b: &[f64], k: f64) -> (bool, Summary) {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = Summary::stable(&d);
    (s.mean > k * s.se, s)
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
