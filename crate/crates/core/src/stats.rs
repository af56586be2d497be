//! Small statistics helpers shared by the experiment harness and tests.

/// Mean, unbiased variance and standard error of a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
}

impl Summary {
    /// Exact for integer data: sums are accumulated in `u128`, so the
    /// result does not depend on the order of the samples.
    pub fn from_counts(values: &[u32]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                count,
                mean: f64::NAN,
                variance: f64::NAN,
            };
        }
        let (sum, sum_sq) = values.iter().fold((0u128, 0u128), |(s, q), &v| {
            (s + v as u128, q + (v as u128) * (v as u128))
        });
        let nf = count as f64;
        let mean = sum as f64 / nf;
        let variance = if count > 1 {
            let num = count as u128 * sum_sq - sum * sum;
            num as f64 / (nf * (nf - 1.0))
        } else {
            0.0
        };
        Self {
            count,
            mean,
            variance,
        }
    }

    pub fn from_values(values: &[f64]) -> Self {
        let count = values.len();
        let nf = count as f64;
        let mean = values.iter().sum::<f64>() / nf;
        let variance = if count > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nf - 1.0)
        } else {
            0.0
        };
        Self {
            count,
            mean,
            variance,
        }
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.count as f64).sqrt()
    }
}

/// Two-sample Kolmogorov-Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS critical value at significance `level`.
pub fn ks_critical(level: f64, na: usize, nb: usize) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    let (na, nb) = (na as f64, nb as f64);
    c * ((na + nb) / (na * nb)).sqrt()
}

/// Least-squares line through `(x, y)`: returns `(slope, intercept, r²)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, my - slope * mx, r2)
}
