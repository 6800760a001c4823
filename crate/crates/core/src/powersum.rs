//! Exact calculus for radial power sums Σ c_k ρ^{e_k} under the geometer's
//! Laplacian Δ = -(1/ρ^{n-1}) ∂_ρ (ρ^{n-1} ∂_ρ), together with a
//! finite-difference oracle that arbitrates every symbolic identity.
//!
//! Sign convention throughout: Δ = -div grad (nonnegative spectrum). Each
//! monomial maps as Δ(c ρ^β) = -c β(β+n-2) ρ^{β-2}, so β ∈ {0, 2-n} spans the
//! kernel.

use serde::Serialize;
use thiserror::Error;

/// Exponents closer than this are merged during canonicalization; floating
/// exponent arithmetic (2-α, 2-2α, ...) otherwise produces spurious twins.
const EXPONENT_MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum RadialOpError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(u32, u32),
    #[error("gradient square is only power-sum closed for a single monomial; got {terms} terms")]
    NotMonomial { terms: usize },
    #[error("sample at rho = {rho} too close to the origin for stencil width {width}")]
    SampleTooClose { rho: f64, width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term {
    pub coeff: f64,
    pub exponent: f64,
}

/// A canonical radial expression Σ c_k ρ^{e_k}: terms sorted by exponent,
/// no duplicate exponents, no zero coefficients.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerSum {
    dim: u32,
    terms: Vec<Term>,
}

impl PowerSum {
    pub fn new(dim: u32, terms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut raw: Vec<Term> = terms
            .into_iter()
            .map(|(coeff, exponent)| Term { coeff, exponent })
            .collect();
        raw.sort_by(|a, b| a.exponent.total_cmp(&b.exponent));
        let mut out: Vec<Term> = Vec::with_capacity(raw.len());
        for t in raw {
            match out.last_mut() {
                Some(last) if (last.exponent - t.exponent).abs() < EXPONENT_MERGE_TOL => {
                    last.coeff += t.coeff;
                }
                _ => out.push(t),
            }
        }
        out.retain(|t| t.coeff != 0.0);
        PowerSum { dim, terms: out }
    }

    pub fn monomial(dim: u32, coeff: f64, exponent: f64) -> Self {
        Self::new(dim, [(coeff, exponent)])
    }

    pub fn zero(dim: u32) -> Self {
        PowerSum { dim, terms: vec![] }
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn eval(&self, rho: f64) -> f64 {
        self.terms
            .iter()
            .map(|t| t.coeff * rho.powf(t.exponent))
            .sum()
    }

    pub fn add(&self, other: &PowerSum) -> Result<PowerSum, RadialOpError> {
        if self.dim != other.dim {
            return Err(RadialOpError::DimensionMismatch(self.dim, other.dim));
        }
        Ok(PowerSum::new(
            self.dim,
            self.terms
                .iter()
                .chain(other.terms.iter())
                .map(|t| (t.coeff, t.exponent)),
        ))
    }

    pub fn sub(&self, other: &PowerSum) -> Result<PowerSum, RadialOpError> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, c: f64) -> PowerSum {
        PowerSum::new(self.dim, self.terms.iter().map(|t| (c * t.coeff, t.exponent)))
    }

    /// Product of two power sums (closed: exponents add).
    pub fn mul(&self, other: &PowerSum) -> Result<PowerSum, RadialOpError> {
        if self.dim != other.dim {
            return Err(RadialOpError::DimensionMismatch(self.dim, other.dim));
        }
        let mut prods = Vec::with_capacity(self.terms.len() * other.terms.len());
        for a in &self.terms {
            for b in &other.terms {
                prods.push((a.coeff * b.coeff, a.exponent + b.exponent));
            }
        }
        Ok(PowerSum::new(self.dim, prods))
    }

    /// d/dρ, term by term.
    pub fn derivative(&self) -> PowerSum {
        PowerSum::new(
            self.dim,
            self.terms
                .iter()
                .filter(|t| t.exponent != 0.0)
                .map(|t| (t.coeff * t.exponent, t.exponent - 1.0)),
        )
    }

    /// Geometer's radial Laplacian: c ρ^β ↦ -c β(β+n-2) ρ^{β-2}.
    pub fn laplacian(&self) -> PowerSum {
        let n = self.dim as f64;
        PowerSum::new(
            self.dim,
            self.terms.iter().filter_map(|t| {
                let factor = -t.exponent * (t.exponent + n - 2.0);
                if factor == 0.0 {
                    None
                } else {
                    Some((t.coeff * factor, t.exponent - 2.0))
                }
            }),
        )
    }

    pub fn bilaplacian(&self) -> PowerSum {
        self.laplacian().laplacian()
    }

    /// |d/dρ expr|² for a single monomial c ρ^β: returns c²β² ρ^{2β-2}.
    ///
    /// Squares of general power sums are also power sums, but the callers
    /// only ever need the monomial case and restricting the input keeps the
    /// contract obvious.
    pub fn grad_sq(&self) -> Result<PowerSum, RadialOpError> {
        match self.terms.len() {
            0 => Ok(PowerSum::zero(self.dim)),
            1 => {
                let t = self.terms[0];
                if t.exponent == 0.0 {
                    return Ok(PowerSum::zero(self.dim));
                }
                Ok(PowerSum::monomial(
                    self.dim,
                    (t.coeff * t.exponent).powi(2),
                    2.0 * t.exponent - 2.0,
                ))
            }
            k => Err(RadialOpError::NotMonomial { terms: k }),
        }
    }

    /// Coefficient-wise comparison with relative tolerance; exponent sets may
    /// differ by terms whose coefficients are below the tolerance scale.
    pub fn approx_eq(&self, other: &PowerSum, rel_tol: f64) -> bool {
        if self.dim != other.dim {
            return false;
        }
        let scale = self
            .terms
            .iter()
            .chain(other.terms.iter())
            .map(|t| t.coeff.abs())
            .fold(0.0_f64, f64::max)
            .max(f64::MIN_POSITIVE);
        let diff = match self.sub(other) {
            Ok(d) => d,
            Err(_) => return false,
        };
        diff.terms.iter().all(|t| t.coeff.abs() <= rel_tol * scale)
    }
}

/// Radial operators the oracle knows how to replay by finite differences.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RadialOp {
    Laplacian,
    Bilaplacian,
    GradSq,
}

/// One oracle evaluation point, kept away from the origin so the nested
/// stencil (full half-width 4h) never crosses the singularity.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RadialSample {
    pub rho: f64,
    pub value: f64,
    pub stencil_width: f64,
}

impl RadialSample {
    pub fn of(expr: &PowerSum, rho: f64, stencil_width: f64) -> Self {
        RadialSample {
            rho,
            value: expr.eval(rho),
            stencil_width,
        }
    }

    /// Evenly spaced samples on (lo, hi) with stencil width tied to position.
    pub fn span(expr: &PowerSum, lo: f64, hi: f64, count: usize) -> Vec<RadialSample> {
        (0..count)
            .map(|i| {
                let rho = lo + (hi - lo) * (i as f64 + 0.5) / count as f64;
                RadialSample::of(expr, rho, rho * 3e-2)
            })
            .collect()
    }
}

// Fourth-order central stencils, Richardson-extrapolated once (h and h/2),
// giving ~O(h^6) truncation for smooth radial functions.

fn d1_stencil<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 8.0 * f(x + h) - 8.0 * f(x - h) + f(x - 2.0 * h)) / (12.0 * h)
}

fn d2_stencil<F: Fn(f64) -> f64>(f: &F, x: f64, h: f64) -> f64 {
    (-f(x + 2.0 * h) + 16.0 * f(x + h) - 30.0 * f(x) + 16.0 * f(x - h) - f(x - 2.0 * h))
        / (12.0 * h * h)
}

fn richardson<G: Fn(f64) -> f64>(apply: G, h: f64) -> f64 {
    (16.0 * apply(h / 2.0) - apply(h)) / 15.0
}

/// Numerical first derivative.
pub fn fd_derivative<F: Fn(f64) -> f64>(f: &F, rho: f64, h: f64) -> f64 {
    richardson(|h| d1_stencil(f, rho, h), h)
}

/// Numerical radial Laplacian -(f'' + (n-1)/ρ f').
pub fn fd_laplacian<F: Fn(f64) -> f64>(f: &F, n: u32, rho: f64, h: f64) -> f64 {
    richardson(
        |h| {
            -(d2_stencil(f, rho, h) + (n as f64 - 1.0) / rho * d1_stencil(f, rho, h))
        },
        h,
    )
}

/// Numerical bilaplacian: the FD Laplacian applied to the FD Laplacian.
pub fn fd_bilaplacian<F: Fn(f64) -> f64>(f: &F, n: u32, rho: f64, h: f64) -> f64 {
    let inner = |x: f64| fd_laplacian(f, n, x, h);
    richardson(
        |hh| -(d2_stencil(&inner, rho, hh) + (n as f64 - 1.0) / rho * d1_stencil(&inner, rho, hh)),
        h,
    )
}

/// Numerical |f'|².
pub fn fd_grad_sq<F: Fn(f64) -> f64>(f: &F, rho: f64, h: f64) -> f64 {
    fd_derivative(f, rho, h).powi(2)
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleRow {
    pub rho: f64,
    pub symbolic: f64,
    pub numeric: f64,
    pub rel_dev: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleReport {
    /// The operator replayed by finite differences; `None` for composite
    /// quantities checked through a hand-built numeric replica.
    pub op: Option<RadialOp>,
    pub rows: Vec<OracleRow>,
    pub max_rel_dev: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Compares a symbolic expression against an arbitrary numeric replica at the
/// sample points. Used for composite quantities assembled from several
/// individually oracle-checked pieces.
pub fn oracle_check_fn(
    symbolic: &PowerSum,
    numeric: impl Fn(f64) -> f64,
    samples: &[RadialSample],
    tol: f64,
) -> OracleReport {
    let scale_floor = samples
        .iter()
        .map(|s| symbolic.eval(s.rho).abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let mut rows = Vec::with_capacity(samples.len());
    let mut max_rel = 0.0_f64;
    for s in samples {
        let sym = symbolic.eval(s.rho);
        let num = numeric(s.rho);
        let rel_dev = (sym - num).abs() / sym.abs().max(scale_floor * 1e-3);
        max_rel = max_rel.max(rel_dev);
        rows.push(OracleRow {
            rho: s.rho,
            symbolic: sym,
            numeric: num,
            rel_dev,
        });
    }
    OracleReport {
        op: None,
        rows,
        max_rel_dev: max_rel,
        tol,
        pass: max_rel <= tol,
    }
}

/// Replays `op` on `expr` by finite differences at each sample and compares
/// against the symbolic `op_result`. Deviations are relative to the sample's
/// symbolic scale (guarded below by the max scale over the sample set).
pub fn oracle_check(
    expr: &PowerSum,
    op: RadialOp,
    op_result: &PowerSum,
    samples: &[RadialSample],
    tol: f64,
) -> Result<OracleReport, RadialOpError> {
    let n = expr.dim();
    let f = |x: f64| expr.eval(x);
    let mut rows = Vec::with_capacity(samples.len());
    let mut max_rel = 0.0_f64;
    let scale_floor = samples
        .iter()
        .map(|s| op_result.eval(s.rho).abs())
        .fold(0.0_f64, f64::max)
        .max(f64::MIN_POSITIVE);
    for s in samples {
        // The nested bilaplacian stencil reaches 4 sub-steps of width h/2·2.
        let reach = 4.0 * s.stencil_width;
        if s.rho <= reach {
            return Err(RadialOpError::SampleTooClose {
                rho: s.rho,
                width: s.stencil_width,
            });
        }
        let numeric = match op {
            RadialOp::Laplacian => fd_laplacian(&f, n, s.rho, s.stencil_width),
            RadialOp::Bilaplacian => fd_bilaplacian(&f, n, s.rho, s.stencil_width),
            RadialOp::GradSq => fd_grad_sq(&f, s.rho, s.stencil_width),
        };
        let symbolic = op_result.eval(s.rho);
        let rel_dev = (symbolic - numeric).abs() / symbolic.abs().max(scale_floor * 1e-3);
        max_rel = max_rel.max(rel_dev);
        rows.push(OracleRow {
            rho: s.rho,
            symbolic,
            numeric,
            rel_dev,
        });
    }
    Ok(OracleReport {
        op: Some(op),
        rows,
        max_rel_dev: max_rel,
        tol,
        pass: max_rel <= tol,
    })
}
