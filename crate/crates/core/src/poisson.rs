//! Truncated expectations under a Poisson law.

use statrs::function::gamma::ln_gamma;

/// Default tail-mass tolerance for Poisson series.
pub const DEFAULT_TOL: f64 = 1e-14;

/// `E[f(X)]` for `X ~ Poisson(mean)`.
///
/// Terms are summed outward from the mode. Summation stops once the
/// accumulated mass reaches `1 - tol` or a geometric bound on the remaining
/// upper tail drops below `tol`; the neglected part is at most
/// `tol * sup |f|`.
pub fn expectation(mean: f64, tol: f64, f: impl Fn(u64) -> f64) -> f64 {
    assert!(mean >= 0.0 && mean.is_finite(), "Poisson mean must be finite and >= 0");
    if mean == 0.0 {
        return f(0);
    }
    let mode = mean.floor() as u64;
    let pmf_mode = (-mean + mode as f64 * mean.ln() - ln_gamma(mode as f64 + 1.0)).exp();

    let mut sum = 0.0;
    let mut mass = 0.0;

    // Downward from the mode; terms shrink monotonically.
    let mut pmf = pmf_mode;
    let mut x = mode;
    loop {
        sum += pmf * f(x);
        mass += pmf;
        if x == 0 || pmf == 0.0 {
            break;
        }
        pmf *= x as f64 / mean;
        x -= 1;
    }

    // Upward from mode + 1.
    let mut pmf = pmf_mode;
    let mut x = mode;
    loop {
        if mass >= 1.0 - tol {
            break;
        }
        pmf *= mean / (x + 1) as f64;
        x += 1;
        sum += pmf * f(x);
        mass += pmf;
        // For x >= mean the ratio of successive terms is below mean / (x + 1).
        let ratio = mean / (x + 1) as f64;
        if ratio < 1.0 && pmf * ratio / (1.0 - ratio) < tol {
            break;
        }
    }
    sum
}
