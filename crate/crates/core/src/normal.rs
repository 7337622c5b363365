//! Standard normal density and distribution function.
//!
//! The CDF is computed from `erfc` so that both tails keep full relative
//! precision; `Φ(x) = ½ erfc(-x/√2)`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Standard normal density.
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function.
pub fn cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation.
pub fn sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        assert_eq!(cdf(0.0), 0.5);
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-16);
        // Φ(1.96)
        assert!((cdf(1.96) - 0.975_002_104_851_780_1).abs() < 1e-15);
        // Φ(-8) = 6.220960574271784e-16
        let tail = cdf(-8.0);
        assert!(((tail - 6.220_960_574_271_784e-16) / tail).abs() < 1e-13);
    }

    #[test]
    fn tails_are_complementary() {
        for &x in &[-8.0, -3.3, -1.0, 0.25, 2.0, 7.5] {
            assert!((cdf(x) + sf(x) - 1.0).abs() < 1e-15);
            assert_eq!(sf(x), cdf(-x));
        }
    }

    #[test]
    fn density_integrates_to_cdf_increment() {
        // Simpson on [a, b] against Φ(b) - Φ(a).
        let (a, b) = (-1.3, 2.1);
        let n = 2000;
        let h = (b - a) / n as f64;
        let mut s = pdf(a) + pdf(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * pdf(a + i as f64 * h);
        }
        let integral = s * h / 3.0;
        assert!((integral - (cdf(b) - cdf(a))).abs() < 1e-13);
    }
}
