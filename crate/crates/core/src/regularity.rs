//! Exponent algebra of the kernel-decay theory: the three-regime classifier
//! for iterated weak-singularity kernels, the smeared-density functional
//! φ_f(t) whose vanishing at t → 0 gates local boundedness, and the Hoelder
//! regularity class.

use crate::constants::{sphere_area, DimensionSpec};
use crate::quad::{self, QuadError};
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegularityError {
    #[error("need p > n/4 (p = {p}, n = {n})")]
    BadP { n: u32, p: f64 },
    #[error("need n >= 5, got {n}")]
    BadDimension { n: u32 },
    #[error("kernel exponent must satisfy l < n (l = {l}, n = {n})")]
    BadKernelExponent { l: f64, n: u32 },
    #[error("density is not integrable against the kernel near the origin (shells stop decaying at radius {radius:.3e})")]
    NonIntegrable { radius: f64 },
    #[error(transparent)]
    Quad(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecayRegime {
    Power,
    Log,
    Bounded,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct KernelIterate {
    pub j: u32,
    pub n: u32,
    pub p: f64,
    pub regime: DecayRegime,
    /// (j+1)(4-n) + j n (1 - 1/p), filled in the power regime.
    pub exponent: Option<f64>,
}

/// Kernel exponent of the j-th iterate in the smeared-density functional:
/// l = (j+1)(n-4) - j n (1 - 1/p). Equals the negated power-regime decay
/// exponent of `giraud_classify`.
pub fn kernel_exponent(n: u32, p: f64, j: u32) -> f64 {
    let n = n as f64;
    let j = j as f64;
    (j + 1.0) * (n - 4.0) - j * n * (1.0 - 1.0 / p)
}

/// Classifies the decay of the j-th iterated kernel: the comparison of
/// (j+1)p/(p+j) with n/4 decides between a power bound, a logarithmic bound,
/// and plain boundedness.
pub fn giraud_classify(n: u32, p: f64, j: u32) -> Result<KernelIterate, RegularityError> {
    if n < 5 {
        return Err(RegularityError::BadDimension { n });
    }
    let nf = n as f64;
    if !(p > nf / 4.0) {
        return Err(RegularityError::BadP { n, p });
    }
    let jf = j as f64;
    let lhs = (jf + 1.0) * p / (p + jf);
    let rhs = nf / 4.0;
    let scale = lhs.abs().max(rhs.abs());
    let regime = if (lhs - rhs).abs() <= 1e-9 * scale {
        DecayRegime::Log
    } else if lhs < rhs {
        DecayRegime::Power
    } else {
        DecayRegime::Bounded
    };
    let exponent = match regime {
        DecayRegime::Power => Some((jf + 1.0) * (4.0 - nf) + jf * nf * (1.0 - 1.0 / p)),
        _ => None,
    };
    Ok(KernelIterate {
        j,
        n,
        p,
        regime,
        exponent,
    })
}

/// Smallest j whose iterate is bounded. The comparison quantity
/// (j+1)p/(p+j) is strictly increasing in j (for p > 1) with limit p > n/4,
/// so the scan terminates; j* = p(n-4)/(4p-n) bounds it from above.
pub fn first_bounded_iterate(n: u32, p: f64) -> Result<u32, RegularityError> {
    if n < 5 {
        return Err(RegularityError::BadDimension { n });
    }
    let nf = n as f64;
    if !(p > nf / 4.0) {
        return Err(RegularityError::BadP { n, p });
    }
    let cap = (p * (nf - 4.0) / (4.0 * p - nf)).ceil() as u32 + 2;
    for j in 0..=cap {
        if giraud_classify(n, p, j)?.regime == DecayRegime::Bounded {
            return Ok(j);
        }
    }
    unreachable!("scan cap {cap} is a proven upper bound for (n={n}, p={p})");
}

/// A radial density on (0, t], shareable across threads.
#[derive(Clone)]
pub struct RadialDensity(Arc<dyn Fn(f64) -> f64 + Send + Sync>);

impl RadialDensity {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RadialDensity(Arc::new(f))
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.0)(r)
    }
}

impl std::fmt::Debug for RadialDensity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RadialDensity(..)")
    }
}

#[derive(Debug, Clone)]
pub struct KatoStummelQuery {
    pub density: RadialDensity,
    /// Kernel exponent l; integrability at the origin needs n - 1 - l > -1.
    pub l: f64,
    pub t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KatoReport {
    pub phi: f64,
    /// φ(t·2^{-k}) for k = 0..8 — exhibits (or refutes) the t → 0 limit.
    pub decay_table: Vec<(f64, f64)>,
}

fn kato_integral(
    density: &RadialDensity,
    l: f64,
    t: f64,
    dim: &DimensionSpec,
) -> Result<f64, RegularityError> {
    let n = dim.n() as f64;
    let omega = dim.omega();
    let integrand = |r: f64| density.eval(r).abs() * r.powf(n - 1.0 - l);
    // Dyadic shells toward the origin: decaying shells certify integrability,
    // non-decaying shells flag divergence before it poisons the sum.
    let mut total = 0.0;
    let mut prev_shell = f64::INFINITY;
    let mut hi = t;
    for k in 0..60 {
        let lo = hi * 0.5;
        let r = quad::adaptive(&integrand, lo, hi, 1e-11, 1e-300)?;
        let shell = r.value;
        // Constant shells mean a log-divergent integral; growing shells a
        // power-divergent one. Either way the sum cannot converge.
        if k >= 6 && shell > prev_shell * 0.999 {
            return Err(RegularityError::NonIntegrable { radius: hi });
        }
        total += shell;
        if shell.abs() <= 1e-14 * total.abs().max(f64::MIN_POSITIVE) {
            return Ok(omega * total);
        }
        prev_shell = shell;
        hi = lo;
    }
    // Shells still decaying geometrically: extrapolate the remaining tail.
    let r_last = quad::adaptive(&integrand, hi * 0.5, hi, 1e-11, 1e-300)?;
    let ratio = (r_last.value / prev_shell).abs().min(0.9);
    total += r_last.value / (1.0 - ratio);
    Ok(omega * total)
}

/// φ_f(t) = ω_{n-1} ∫_0^t |f(r)| r^{n-1-l} dr — the radial reduction of the
/// kernel-smeared supremum, which for radial non-increasing densities is
/// attained at the center (see `kato_offset_sup` for off-center probes).
pub fn kato_stummel_phi(
    query: &KatoStummelQuery,
    dim: &DimensionSpec,
) -> Result<KatoReport, RegularityError> {
    if query.l >= dim.n() as f64 {
        return Err(RegularityError::BadKernelExponent {
            l: query.l,
            n: dim.n(),
        });
    }
    let phi = kato_integral(&query.density, query.l, query.t, dim)?;
    let mut decay_table = Vec::with_capacity(9);
    decay_table.push((query.t, phi));
    for k in 1..=8 {
        let tk = query.t * 0.5_f64.powi(k);
        decay_table.push((tk, kato_integral(&query.density, query.l, tk, dim)?));
    }
    Ok(KatoReport { phi, decay_table })
}

/// Kernel-smeared mass seen from an off-center point at distance q from the
/// origin: ∫_{B_t} |f(|x|)| d(x, q e₁)^{-l} dx, via the polar-angle kernel
/// average. Returns (q, value) pairs; for radial non-increasing densities the
/// center (q = 0) dominates.
pub fn kato_offset_sup(
    query: &KatoStummelQuery,
    dim: &DimensionSpec,
    offsets: &[f64],
) -> Result<Vec<(f64, f64)>, RegularityError> {
    let n = dim.n() as f64;
    if query.l >= n - 1.0 {
        return Err(RegularityError::BadKernelExponent {
            l: query.l,
            n: dim.n(),
        });
    }
    let omega_sub = sphere_area(dim.n() - 1).expect("n - 1 >= 2");
    let l = query.l;
    let mut out = Vec::with_capacity(offsets.len());
    for &q in offsets {
        let radial = |r: f64| -> f64 {
            if r == 0.0 {
                return 0.0;
            }
            let angular = |theta: f64| {
                let d2 = r * r + q * q - 2.0 * r * q * theta.cos();
                theta.sin().powf(n - 2.0) * d2.max(1e-300).powf(-l / 2.0)
            };
            let breaks = [0.0, 1e-3, std::f64::consts::PI];
            let a = quad::adaptive_with_breaks(&angular, &breaks, 1e-9, 1e-300)
                .map(|r| r.value)
                .unwrap_or(f64::NAN);
            query.density.eval(r).abs() * r.powf(n - 1.0) * a
        };
        let mut breaks = vec![0.0, query.t];
        if q > 0.0 && q < query.t {
            breaks.push(q * 0.999);
            breaks.push(q);
            breaks.push((q * 1.001).min(query.t));
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
        let v = quad::adaptive_with_breaks(&radial, &breaks, 1e-8, 1e-300)?;
        out.push((q, omega_sub * v.value));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct RegularityClass {
    /// 3 - (p/n - floor(p/n)) ∈ (2, 3].
    pub exponent: f64,
    pub integer_part: u32,
    /// Open Hoelder interval (0, sup).
    pub holder_sup: f64,
}

/// Hoelder class of solutions: exponent 3 - frac(p/n) with β ∈ (0, 1 - frac(p/n)).
pub fn regularity_class(n: u32, p: f64) -> Result<RegularityClass, RegularityError> {
    if n < 5 {
        return Err(RegularityError::BadDimension { n });
    }
    let nf = n as f64;
    if !(p > nf / 4.0) {
        return Err(RegularityError::BadP { n, p });
    }
    let frac = p / nf - (p / nf).floor();
    let exponent = 3.0 - frac;
    let (integer_part, holder_sup) = if frac == 0.0 {
        (3, 1.0)
    } else {
        (2, 1.0 - frac)
    };
    Ok(RegularityClass {
        exponent,
        integer_part,
        holder_sup,
    })
}
