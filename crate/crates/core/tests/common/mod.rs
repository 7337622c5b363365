#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use impact_core::equilibrium::BachelierSide;
use impact_core::models::BachelierSpec;
use impact_core::payoff::{StepFunction, TimeGrid};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    r.random_range(lo..hi)
}

/// `E[f(Z)]` for a standard normal `Z` by composite Simpson on `[-12, 0]` and
/// `[0, 12]`, so integrands with a jump at zero are integrated piecewise smooth.
pub fn gaussian_expect(f: impl Fn(f64) -> f64) -> f64 {
    let density = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let simpson = |a: f64, b: f64, n: usize| {
        let h = (b - a) / n as f64;
        let mut s = f(a) * density(a) + f(b) * density(b);
        for i in 1..n {
            let z = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(z) * density(z);
        }
        s * h / 3.0
    };
    // Evaluate the right piece at 0 with the right limit.
    simpson(-12.0, -1e-300, 20_000) + simpson(0.0, 12.0, 20_000)
}

/// `log E[e^{f(Z)}]` on the same rule, shifted by `shift` to stay in range.
pub fn gaussian_log_mean_exp(f: impl Fn(f64) -> f64, shift: f64) -> f64 {
    gaussian_expect(|z| (f(z) - shift).exp()).ln() + shift
}

/// Random piecewise-constant Bachelier data in dimension `d` on `[0, 1]`,
/// with `ψ` a well-conditioned perturbation of the identity.
pub fn random_bachelier(r: &mut ChaCha8Rng, d: usize, scale: f64) -> BachelierSpec {
    let grid = TimeGrid::from_nodes(vec![0.0, 0.3, 0.7, 1.0]).unwrap();
    let vec_fn = |r: &mut ChaCha8Rng, s: f64| {
        let v = (0..3).map(|_| (0..d).map(|_| uniform(r, -s, s)).collect()).collect();
        StepFunction::vector(grid.clone(), v).unwrap()
    };
    let f = vec_fn(r, scale);
    let g = vec_fn(r, scale);
    // Claim loadings bounded away from zero keep ∫|y|² of order one.
    let y = (0..3)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let m = uniform(r, 0.4, 1.0);
                    if r.random_bool(0.5) { m } else { -m }
                })
                .collect()
        })
        .collect();
    let y = StepFunction::vector(grid.clone(), y).unwrap();
    let psi = (0..3)
        .map(|_| {
            (0..d)
                .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 } + uniform(r, -0.3, 0.3)).collect())
                .collect()
        })
        .collect();
    let psi = StepFunction::matrix(grid.clone(), psi).unwrap();
    BachelierSpec::new(f, g, psi, Some(y)).unwrap()
}

/// Two Bachelier sides sharing `ψ` and `y` with independent `f`, `g`, `γ`, `α`.
pub fn random_bachelier_market(r: &mut ChaCha8Rng, d: usize) -> (BachelierSide, BachelierSide) {
    let base = random_bachelier(r, d, 1.0);
    let side = |r: &mut ChaCha8Rng| {
        let other = random_bachelier(r, d, 1.0);
        BachelierSide {
            spec: BachelierSpec::new(
                other.f().clone(),
                other.g().clone(),
                base.psi().clone(),
                base.y().cloned(),
            )
            .unwrap(),
            gamma: uniform(r, 0.3, 2.0),
            alpha: uniform(r, 0.3, 2.0),
        }
    };
    let a = side(r);
    let b = side(r);
    (a, b)
}
