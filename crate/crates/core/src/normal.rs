//! Standard normal CDF, log-CDF, interval masses and truncated sampling.
//!
//! Everything here works on the standardized scale. The probit scale
//! used by the model (`tau` = 0.25 with integer thresholds) routinely puts
//! rating brackets 10-40 standard deviations away from the current mean,
//! so interval masses are computed in log space and the far tail of the
//! log-CDF switches to an asymptotic expansion before `erfc` underflows.

use rand::Rng;
use libm::{erf, erfc};
use statrs::function::erf::erfc_inv;
use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI, SQRT_2};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Below this standardized value `log_cdf` uses the asymptotic series.
const ASYMPTOTIC_CUTOFF: f64 = -30.0;

/// Standard normal CDF.
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal log-density.
#[inline]
pub fn log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// `ln Φ(x)`, accurate across the whole real line.
pub fn log_cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    if x < ASYMPTOTIC_CUTOFF {
        // Φ(x) = φ(x)/|x| · (1 - 1/x² + 3/x⁴ - 15/x⁶ + ...)
        let x2 = x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..10 {
            term *= -((2 * k - 1) as f64) / x2;
            sum += term;
        }
        return log_pdf(x) - (-x).ln() + sum.ln();
    }
    if x > 5.0 {
        return (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p();
    }
    cdf(x).ln()
}

/// `ln(1 - e^d)` for `d <= 0`.
#[inline]
fn ln_one_minus_exp(d: f64) -> f64 {
    if d > -LN_2 {
        (-d.exp_m1()).ln()
    } else {
        (-d.exp()).ln_1p()
    }
}

/// `ln(Φ(b) - Φ(a))` for standardized bounds `a < b` (either may be infinite).
pub fn log_interval_mass(a: f64, b: f64) -> f64 {
    if !(a < b) {
        return f64::NEG_INFINITY;
    }
    if a >= 0.0 {
        // Mirror into the lower tail where Φ keeps relative precision.
        return log_interval_mass(-b, -a);
    }
    if b <= 0.0 {
        let pb = cdf(b);
        if pb > 1e-290 {
            return (pb - cdf(a)).ln();
        }
        let lb = log_cdf(b);
        let la = log_cdf(a);
        if la == f64::NEG_INFINITY {
            return lb;
        }
        return lb + ln_one_minus_exp(la - lb);
    }
    // a < 0 < b: the two erf terms have opposite sign, so no cancellation.
    (0.5 * (erf(b * FRAC_1_SQRT_2) - erf(a * FRAC_1_SQRT_2))).ln()
}

/// Inverse standard normal CDF for `p` in (0, 1).
pub fn quantile(p: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * p)
}

/// Inverse of `log_cdf` for arguments on the lower half (`lp <= ln 0.5`).
fn inverse_log_cdf_lower(lp: f64) -> f64 {
    let mut x = if lp > -700.0 {
        quantile(lp.exp())
    } else {
        // Leading-order inversion of the asymptotic tail.
        let t = -2.0 * lp;
        -(t - t.ln() - (2.0 * PI).ln()).sqrt()
    };
    for _ in 0..4 {
        if !x.is_finite() {
            break;
        }
        let f = log_cdf(x) - lp;
        if f.abs() < 1e-15 {
            break;
        }
        // d/dx ln Φ(x) = φ(x)/Φ(x)
        let slope = (log_pdf(x) - log_cdf(x)).exp();
        x -= f / slope;
    }
    x
}

/// Draws from N(mean, sd²) restricted to the bracket `(lo, hi]`.
///
/// Uses inverse-CDF sampling, carried out in log space whenever the
/// bracket lies entirely in one tail. Returned values always satisfy
/// `lo < z <= hi`.
pub fn sample_truncated<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    debug_assert!(lo < hi && sd > 0.0);
    let a = (lo - mean) / sd;
    let b = (hi - mean) / sd;
    let u: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
    let x = if a >= 0.0 {
        -standard_truncated(-b, -a, u)
    } else {
        standard_truncated(a, b, u)
    };
    let z = mean + sd * x;
    if z <= lo {
        lo.next_up()
    } else if z > hi {
        hi
    } else {
        z
    }
}

/// Standard normal restricted to `(a, b)` with `a < 0`, driven by `u` in (0, 1].
fn standard_truncated(a: f64, b: f64, u: f64) -> f64 {
    if b <= 0.0 {
        let lb = log_cdf(b);
        let la = log_cdf(a);
        // Φ(a) + u·(Φ(b) - Φ(a)) = Φ(b)·(u + (1-u)·Φ(a)/Φ(b))
        let target = lb + (u + (1.0 - u) * (la - lb).exp()).ln();
        return inverse_log_cdf_lower(target).clamp(a, b);
    }
    let mass = 0.5 * (erf(b * FRAC_1_SQRT_2) - erf(a * FRAC_1_SQRT_2));
    let p = cdf(a) + u * mass;
    if p <= 0.5 {
        quantile(p).clamp(a, b)
    } else {
        let upper = cdf(-b) + (1.0 - u) * mass;
        (-quantile(upper)).clamp(a, b)
    }
}

/// Mean of a standard normal truncated to `(a, b)`.
pub fn truncated_mean(a: f64, b: f64) -> f64 {
    let log_mass = log_interval_mass(a, b);
    let pa = if a.is_finite() { (log_pdf(a) - log_mass).exp() } else { 0.0 };
    let pb = if b.is_finite() { (log_pdf(b) - log_mass).exp() } else { 0.0 };
    pa - pb
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn cdf_reference_values() {
        // Φ(2) and Φ(-6) from high-precision tables.
        assert!((cdf(2.0) - 0.977_249_868_051_820_8).abs() < 1e-15);
        assert!((cdf(-6.0) / 9.865_876_450_376_981e-10 - 1.0).abs() < 1e-12);
        assert_eq!(cdf(0.0), 0.5);
    }

    #[test]
    fn log_cdf_is_continuous_at_the_asymptotic_switch() {
        let x = ASYMPTOTIC_CUTOFF;
        let below = log_cdf(x - 1e-9);
        let above = log_cdf(x + 1e-9);
        // difference should be the slope |x| times the step
        assert!(((above - below) - 2e-9 * x.abs()).abs() < 1e-9);
        // ln Φ(-30) = -454.3212...
        assert!((log_cdf(-30.0) + 454.321_243_956_343).abs() < 1e-6);
        assert!(log_cdf(-100.0).is_finite());
        assert!(log_cdf(40.0) <= 0.0);
    }

    #[test]
    fn interval_mass_matches_direct_difference_where_stable() {
        for &(a, b) in &[(-1.0, 1.0), (-3.0, -2.0), (0.5, 2.0), (-0.1, 0.1)] {
            let direct = cdf(b) - cdf(a);
            assert!((log_interval_mass(a, b).exp() - direct).abs() < 1e-15);
        }
        // Far tails stay finite.
        assert!(log_interval_mass(40.0, 44.0).is_finite());
        assert!(log_interval_mass(-44.0, -40.0).is_finite());
        assert!(log_interval_mass(f64::NEG_INFINITY, -60.0).is_finite());
        assert_eq!(log_interval_mass(f64::NEG_INFINITY, f64::INFINITY), 0.0);
    }

    #[test]
    fn inverse_log_cdf_round_trips() {
        for &x in &[-0.3, -2.0, -8.0, -25.0, -45.0, -120.0] {
            let back = inverse_log_cdf_lower(log_cdf(x));
            assert!((back - x).abs() < 1e-9 * x.abs().max(1.0), "{x} -> {back}");
        }
    }

    #[test]
    fn truncated_draws_stay_inside_far_tail_brackets() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(mean, lo, hi) in &[(2.5, 4.0, f64::INFINITY), (-5.0, 4.0, f64::INFINITY), (9.0, f64::NEG_INFINITY, 1.0), (2.5, 2.0, 3.0), (12.0, 1.0, 2.0)] {
            for _ in 0..2000 {
                let z = sample_truncated(mean, 0.25, lo, hi, &mut rng);
                assert!(z > lo && z <= hi, "mean {mean}: {z} outside ({lo}, {hi}]");
            }
        }
    }
}
