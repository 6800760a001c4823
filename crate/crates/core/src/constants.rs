//! Closed-form constants of the radial theory: Beta-type integrals
//! I_p^q = ∫_0^∞ t^q (1+t)^{-p} dt, unit-sphere areas, and the inverse-square
//! best constant of the second-order Sobolev embedding.
//!
//! Every closed form here is Gamma-based and is cross-checked against an
//! independent tanh-sinh quadrature oracle (`beta_integral_quadrature`).

use crate::quad::{self, QuadError};
use libm::lgamma;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DomainError {
    #[error("dimension must be at least {min}, got n = {n}")]
    Dimension { n: u32, min: u32 },
    #[error("I_p^q diverges: need p - q - 1 > 0 (p = {p}, q = {q})")]
    BetaDivergent { p: f64, q: f64 },
    #[error("I_p^q diverges at the origin: need q > -1 (q = {q})")]
    BetaOrigin { q: f64 },
    #[error("recursion step undefined: need p - q - 2 > 0 (p = {p}, q = {q})")]
    RecursionStep { p: f64, q: f64 },
}

/// Dimension bookkeeping for the fourth-order critical problem.
///
/// `N = 2n/(n-4)` is kept as an exact reduced fraction; the float value is
/// derived from it on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DimensionSpec {
    n: u32,
    crit_num: i64,
    crit_den: i64,
    omega: f64,
}

impl DimensionSpec {
    /// Requires n ≥ 5 so that N = 2n/(n-4) is defined and exceeds 2.
    pub fn new(n: u32) -> Result<Self, DomainError> {
        if n < 5 {
            return Err(DomainError::Dimension { n, min: 5 });
        }
        let g = gcd(2 * n as i64, (n - 4) as i64);
        Ok(DimensionSpec {
            n,
            crit_num: 2 * n as i64 / g,
            crit_den: (n - 4) as i64 / g,
            omega: sphere_area(n)?,
        })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    /// The critical exponent N = 2n/(n-4) as a float.
    pub fn critical_exponent(&self) -> f64 {
        self.crit_num as f64 / self.crit_den as f64
    }

    /// The critical exponent as an exact reduced fraction (numerator, denominator).
    pub fn critical_exponent_rational(&self) -> (i64, i64) {
        (self.crit_num, self.crit_den)
    }

    /// Area of the unit (n-1)-sphere.
    pub fn omega(&self) -> f64 {
        self.omega
    }
}

fn gcd(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a.abs()
}

/// I_p^q = Γ(q+1) Γ(p-q-1) / Γ(p), the closed form of ∫_0^∞ t^q (1+t)^{-p} dt.
///
/// Log-Gamma is used internally so the value stays representable well past
/// the range where Γ itself overflows.
pub fn beta_integral(p: f64, q: f64) -> Result<f64, DomainError> {
    if !(q > -1.0) {
        return Err(DomainError::BetaOrigin { q });
    }
    if !(p - q - 1.0 > 0.0) {
        return Err(DomainError::BetaDivergent { p, q });
    }
    Ok((lgamma(q + 1.0) + lgamma(p - q - 1.0) - lgamma(p)).exp())
}

/// One step of the ladder I_p^{q+1} = (q+1)/(p-q-2) · I_p^q.
pub fn beta_recursion_step(p: f64, q: f64, prior: f64) -> Result<f64, DomainError> {
    if !(p - q - 2.0 > 0.0) {
        return Err(DomainError::RecursionStep { p, q });
    }
    Ok((q + 1.0) / (p - q - 2.0) * prior)
}

/// Quadrature oracle for I_p^q, independent of the Gamma route.
///
/// The substitution t = s/(1-s) maps the half-line onto [0, 1) and turns the
/// integrand into s^q (1-s)^{p-q-2}, which the tanh-sinh rule integrates to
/// full precision even when an exponent lies in (-1, 0).
pub fn beta_integral_quadrature(p: f64, q: f64) -> Result<f64, QuadError> {
    let f = |s: f64, oms: f64| s.powf(q) * oms.powf(p - q - 2.0);
    quad::tanh_sinh(&f, 1e-13).map(|r| r.value)
}

/// Area of the unit (n-1)-sphere: 2 π^{n/2} / Γ(n/2).
pub fn sphere_area(n: u32) -> Result<f64, DomainError> {
    if n < 2 {
        return Err(DomainError::Dimension { n, min: 2 });
    }
    let half = n as f64 / 2.0;
    Ok((std::f64::consts::PI.ln() * half + std::f64::consts::LN_2 - lgamma(half)).exp())
}

/// K_2^{-2} = n(n+2)(n-2)(n-4) (I_n^{n/2-1} ω_{n-1} / 2)^{4/n}: the inverse
/// square of the best constant in H_2 ↪ L^N. This is the flat-bubble quotient
/// limit that every strict-inequality test is measured against.
pub fn best_sobolev_sq_inv(dim: &DimensionSpec) -> f64 {
    let n = dim.n() as f64;
    let i = beta_integral(n, n / 2.0 - 1.0).expect("n ≥ 5 keeps I_n^{n/2-1} convergent");
    n * (n + 2.0) * (n - 2.0) * (n - 4.0) * (i * dim.omega() / 2.0).powf(4.0 / n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    #[test]
    fn beta_integral_known_values() {
        // I_6^2 = ∫ t^2/(1+t)^6 = 1/30 (quadrature oracle agrees below).
        assert!((beta_integral(6.0, 2.0).unwrap() - 1.0 / 30.0).abs() < 1e-14);
        // Ladder from I_6^2 gives I_6^3 = 1/20.
        assert!((beta_integral(6.0, 3.0).unwrap() - 1.0 / 20.0).abs() < 1e-14);
        // ∫ (1+t)^{-2} = 1.
        assert!((beta_integral(2.0, 0.0).unwrap() - 1.0).abs() < 1e-14);
        // Γ(2)Γ(1)/Γ(3) = 1/2.
        assert!((beta_integral(3.0, 1.0).unwrap() - 0.5).abs() < 1e-14);
    }

    #[test]
    fn beta_integral_rejects_divergent_exponents() {
        assert!(matches!(
            beta_integral(5.0, 4.0),
            Err(DomainError::BetaDivergent { .. })
        ));
        assert!(matches!(
            beta_integral(5.0, -1.0),
            Err(DomainError::BetaOrigin { .. })
        ));
    }

    #[test]
    fn quadrature_oracle_matches_closed_form() {
        for &(p, q) in &[
            (6.0, 2.0),
            (6.0, 3.0),
            (2.0, 0.0),
            (9.5, 2.25),
            (7.0, -0.5),
            (4.5, 2.9), // (1-s) exponent -0.4, endpoint-singular
        ] {
            let cf = beta_integral(p, q).unwrap();
            let quad = beta_integral_quadrature(p, q).unwrap();
            assert!(
                (cf - quad).abs() / quad < 1e-10,
                "p={p} q={q}: closed {cf} vs quadrature {quad}"
            );
        }
    }

    #[test]
    fn recursion_step_consistency() {
        let base = beta_integral(6.0, 2.0).unwrap();
        let stepped = beta_recursion_step(6.0, 2.0, base).unwrap();
        assert!((stepped - beta_integral(6.0, 3.0).unwrap()).abs() < 1e-15);
        let half = beta_recursion_step(3.0, 0.0, beta_integral(3.0, 0.0).unwrap()).unwrap();
        assert!((half - 0.5).abs() < 1e-15);
        // Chain at (p = n, q = n/2 - 1) used by the bubble energies.
        let n = 8.0;
        let i1 = beta_integral(n, n / 2.0 - 1.0).unwrap();
        let i2 = beta_recursion_step(n, n / 2.0 - 1.0, i1).unwrap();
        assert!((i2 - beta_integral(n, n / 2.0).unwrap()).abs() < 1e-15);
        assert!(matches!(
            beta_recursion_step(3.0, 1.0, 0.5),
            Err(DomainError::RecursionStep { .. })
        ));
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(2).unwrap() - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4).unwrap() - 2.0 * PI * PI).abs() < 1e-13);
        assert!((sphere_area(6).unwrap() - PI.powi(3)).abs() < 1e-13);
    }

    #[test]
    fn best_sobolev_constant_n6() {
        let dim = DimensionSpec::new(6).unwrap();
        let k = best_sobolev_sq_inv(&dim);
        let direct = 384.0 * (PI.powi(3) / 60.0).powf(2.0 / 3.0);
        assert!((k - direct).abs() / direct < 1e-13);
        assert!((k - 247.287).abs() < 0.01, "K_2^{{-2}}(6) = {k}");
    }

    #[test]
    fn best_sobolev_constant_n8_composes() {
        let dim = DimensionSpec::new(8).unwrap();
        let i = beta_integral(8.0, 3.0).unwrap();
        let direct = 8.0 * 10.0 * 6.0 * 4.0 * (i * sphere_area(8).unwrap() / 2.0).sqrt();
        assert!((best_sobolev_sq_inv(&dim) - direct).abs() / direct < 1e-13);
    }

    #[test]
    fn best_sobolev_increases_with_dimension() {
        let mut prev = 0.0;
        for n in 6..=12 {
            let k = best_sobolev_sq_inv(&DimensionSpec::new(n).unwrap());
            assert!(k > prev, "K_2^{{-2}} not increasing at n = {n}");
            prev = k;
        }
    }

    #[test]
    fn critical_exponent_is_exact_rational() {
        let d6 = DimensionSpec::new(6).unwrap();
        assert_eq!(d6.critical_exponent_rational(), (6, 1));
        let d10 = DimensionSpec::new(10).unwrap();
        assert_eq!(d10.critical_exponent_rational(), (10, 3));
        assert!(DimensionSpec::new(4).is_err());
    }

    proptest! {
        // B(q+1, p-q-1) is symmetric in its two slots, so I_p^q = I_p^{p-q-2}.
        #[test]
        fn beta_symmetry(p in 3.0_f64..20.0, frac in 0.05_f64..0.95) {
            let q = frac * (p - 1.0) - 1.0 + frac * 0.0; // q in (-1, p-1)
            let q = q.max(-0.95);
            let qr = p - q - 2.0;
            if qr > -1.0 && p - qr - 1.0 > 0.0 && p - q - 1.0 > 0.0 {
                let a = beta_integral(p, q).unwrap();
                let b = beta_integral(p, qr).unwrap();
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(b.abs()));
            }
        }
    }
}
