use crate::error::{PricerError, Result};
use crate::maker::{HProvider, MakerSpec};
use crate::normal::{cdf, pdf};
use crate::payoff::BrownianSpace;

/// Maker with no endowment quoting the digital `Ψ = 1{B_T ≥ 0}`, `d = k = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DigitalSpec {
    pub gamma: f64,
    pub horizon: f64,
}

impl DigitalSpec {
    pub fn new(gamma: f64, horizon: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) || !(horizon > 0.0 && horizon.is_finite()) {
            return Err(PricerError::invalid("digital model needs γ > 0 and T > 0"));
        }
        Ok(DigitalSpec { gamma, horizon })
    }

    pub fn space(&self) -> BrownianSpace {
        BrownianSpace::new(1, self.horizon).expect("validated horizon")
    }

    pub fn maker(&self) -> Result<MakerSpec> {
        MakerSpec::new(
            self.gamma,
            crate::payoff::PayoffExpr::zero(),
            vec![self.space().indicator(0, 0.0)?],
        )
    }

    fn tau(&self, t: f64) -> f64 {
        self.horizon - t
    }
}

/// `v(t,b;q) = −log(e^{−γq}Φ(x) + Φ(−x))`, `x = b/√τ`.
pub fn digital_v(spec: &DigitalSpec, t: f64, b: f64, q: f64) -> f64 {
    let x = b / spec.tau(t).sqrt();
    let gq = spec.gamma * q;
    if gq >= 0.0 {
        -((-gq).exp() * cdf(x) + cdf(-x)).ln()
    } else {
        gq - (cdf(x) + gq.exp() * cdf(-x)).ln()
    }
}

/// `H_t(q) = −∂_b v(t,b;q) = (e^{−γq} − 1)φ(x) / (√τ (e^{−γq}Φ(x) + Φ(−x)))`.
pub fn digital_h(spec: &DigitalSpec, t: f64, b: f64, q: f64) -> f64 {
    let st = spec.tau(t).sqrt();
    let x = b / st;
    let gq = spec.gamma * q;
    // Scale numerator and denominator by e^{min(γq, 0)} to keep both bounded.
    if gq >= 0.0 {
        let e = (-gq).exp();
        (e - 1.0) * pdf(x) / (st * (e * cdf(x) + cdf(-x)))
    } else {
        let e = gq.exp();
        (1.0 - e) * pdf(x) / (st * (cdf(x) + e * cdf(-x)))
    }
}

/// Open range of `q ↦ H_t(q)` on `{B_t = b}`:
/// `(−φ(x)/(√τ Φ(−x)), φ(x)/(√τ Φ(x)))`, approached as `q → +∞` and `q → −∞`.
pub fn digital_constraint_interval(spec: &DigitalSpec, t: f64, b: f64) -> (f64, f64) {
    let st = spec.tau(t).sqrt();
    let x = b / st;
    (-pdf(x) / (st * cdf(-x)), pdf(x) / (st * cdf(x)))
}

/// `(H_t(q) − lo, hi − H_t(q))` in closed form:
/// `φ e^{−γq} / (√τ D Φ(−x))` and `φ / (√τ D Φ(x))` with `D = e^{−γq}Φ(x) + Φ(−x)`.
/// Both stay positive where `H` itself rounds onto an endpoint.
pub fn digital_interval_gaps(spec: &DigitalSpec, t: f64, b: f64, q: f64) -> (f64, f64) {
    let st = spec.tau(t).sqrt();
    let x = b / st;
    let gq = spec.gamma * q;
    let (p, lo_mass, hi_mass) = (pdf(x), cdf(-x), cdf(x));
    if gq >= 0.0 {
        let e = (-gq).exp();
        let d = e * hi_mass + lo_mass;
        (p * e / (st * d * lo_mass), p / (st * d * hi_mass))
    } else {
        let e = gq.exp();
        let d = hi_mass + e * lo_mass;
        (p / (st * d * lo_mass), p * e / (st * d * hi_mass))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DigitalMaker(pub DigitalSpec);

impl HProvider for DigitalMaker {
    fn dim(&self) -> usize {
        1
    }

    fn n_assets(&self) -> usize {
        1
    }

    fn h(&self, t: f64, state: &[f64], q: &[f64]) -> Vec<f64> {
        vec![digital_h(&self.0, t, state[0], q[0])]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maker::static_quote;
    use crate::payoff::ExpectationEngine;

    fn unit() -> DigitalSpec {
        DigitalSpec::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn zero_order_has_zero_h() {
        assert_eq!(digital_h(&unit(), 0.2, 0.7, 0.0), 0.0);
        assert_eq!(digital_v(&unit(), 0.2, 0.7, 0.0), 0.0);
    }

    #[test]
    fn analytic_derivative_matches_central_difference() {
        let s = unit();
        let eps = 1e-5;
        let fd = (digital_v(&s, 0.0, 0.3 + eps, 1.0) - digital_v(&s, 0.0, 0.3 - eps, 1.0)) / (2.0 * eps);
        assert!((fd + digital_h(&s, 0.0, 0.3, 1.0)).abs() < 1e-6);
    }

    #[test]
    fn interval_at_the_money() {
        let (lo, hi) = digital_constraint_interval(&unit(), 0.0, 0.0);
        let two_phi0 = 2.0 / (2.0 * std::f64::consts::PI).sqrt();
        assert!((lo + two_phi0).abs() < 1e-15 && (hi - two_phi0).abs() < 1e-15);
        assert!((hi - 0.79788).abs() < 1e-5);
    }

    #[test]
    fn endpoints_are_limits_not_values() {
        let s = unit();
        for &(t, b) in &[(0.0, 0.0), (0.5, 0.4), (0.9, -0.3)] {
            let (lo, hi) = digital_constraint_interval(&s, t, b);
            let up = digital_h(&s, t, b, 50.0);
            let down = digital_h(&s, t, b, -50.0);
            // The true gaps are ~e^{-50}, below f64 resolution of H itself.
            assert!(lo <= up && up <= hi && lo <= down && down <= hi);
            for q in [-50.0, -1.0, 0.0, 2.0, 50.0] {
                let (g_lo, g_hi) = digital_interval_gaps(&s, t, b, q);
                assert!(g_lo > 0.0 && g_hi > 0.0, "q = {q}");
                let h = digital_h(&s, t, b, q);
                assert!((h - lo - g_lo).abs() < 1e-12 && (hi - h - g_hi).abs() < 1e-12);
            }
            assert!((up - lo).abs() < 1e-12 * lo.abs().max(1.0));
            assert!((down - hi).abs() < 1e-12 * hi.max(1.0));
            assert!(digital_h(&s, t, b, 1e4).is_finite() && digital_h(&s, t, b, -1e4).is_finite());
        }
    }

    #[test]
    fn far_strike_widens_one_endpoint() {
        // φ(x)/Φ(−x) grows like x, φ(x)/Φ(x) vanishes.
        let (lo, hi) = digital_constraint_interval(&unit(), 0.0, 8.0);
        assert!(hi < 1e-14);
        assert!((lo + 8.0).abs() < 0.2);
    }

    #[test]
    fn quote_is_log_moment() {
        // E[e^{−γqΨ}] = (1 + e^{−γq})/2 at b = 0.
        let s = DigitalSpec::new(2.0, 1.0).unwrap();
        let x = static_quote(&s.maker().unwrap(), &ExpectationEngine::default(), &[0.5]).unwrap();
        let expected = ((1.0 + (-1.0f64).exp()) / 2.0).ln() / 2.0;
        assert!((x - expected).abs() < 1e-12);
    }
}
