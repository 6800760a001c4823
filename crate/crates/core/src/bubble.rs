//! Concentrating test functions φ_ε(r) = η(r)(r²+ε²)^{-(n-4)/2} and the
//! quadrature verification of their energy expansions: leading coefficients,
//! ε² (or ε²·log) curvature corrections, the strict-inequality test against
//! the best-constant threshold, and the weighted-mass scaling exponents.

use crate::constants::{best_sobolev_sq_inv, beta_integral, DimensionSpec};
use crate::minimizer::SingularWeightConfig;
use crate::quad::{self, QuadError};
use crate::report::{Comparison, PredictedMeasured, Warning};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BubbleError {
    #[error("epsilon must be positive, got {epsilon}")]
    BadEpsilon { epsilon: f64 },
    #[error("cutoff must satisfy 0 < start < end <= delta (start {start}, end {end}, delta {delta})")]
    BadCutoff { start: f64, end: f64, delta: f64 },
    #[error("expansion checks need n >= {needed}, got n = {n}")]
    DimensionTooSmall { n: u32, needed: u32 },
    #[error("Hoelder exponent must satisfy p > n/4 (p = {p}, n = {n})")]
    BadExponent { p: f64, n: u32 },
    #[error("quadrature under-resolved for {what}: relative error {rel_err:.3e}")]
    Resolution { what: &'static str, rel_err: f64 },
    #[error("expansion fit residual {residual:.3e} exceeds tolerance; widen the epsilon range")]
    FitResidual { residual: f64 },
    #[error("scaling regression residual {residual:.3e} in log units; quadrature under-resolved")]
    RegressionFailure { residual: f64 },
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// C^∞ plateau cutoff: 1 below `start`, 0 above `end`, with the exponential
/// smoothstep σ(t) = e^{-1/t}/(e^{-1/t} + e^{-1/(1-t)}) in between.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SmoothCutoff {
    pub start: f64,
    pub end: f64,
}

/// (σ, σ', σ'') with the plateau clamp; the neglected tails are below 1e-80.
fn sigma_parts(t: f64) -> (f64, f64, f64) {
    if t <= 5e-3 {
        return (0.0, 0.0, 0.0);
    }
    if t >= 1.0 - 5e-3 {
        return (1.0, 0.0, 0.0);
    }
    let u = 1.0 / t;
    let v = 1.0 / (1.0 - t);
    let a = (-u).exp();
    let b = (-v).exp();
    let s = a + b;
    let (u2, v2) = (u * u, v * v);
    let (u3, v3) = (u2 * u, v2 * v);
    let (u4, v4) = (u2 * u2, v2 * v2);
    let sig = a / s;
    let d1 = a * b * (u2 + v2) / (s * s);
    let d2 = a * b * ((u4 - v4) + 2.0 * (v3 - u3)) / (s * s)
        - 2.0 * a * b * (u2 + v2) * (a * u2 - b * v2) / (s * s * s);
    (sig, d1, d2)
}

impl SmoothCutoff {
    /// (η, η', η'') at radius r.
    pub fn parts(&self, r: f64) -> (f64, f64, f64) {
        if r <= self.start {
            return (1.0, 0.0, 0.0);
        }
        if r >= self.end {
            return (0.0, 0.0, 0.0);
        }
        let w = self.end - self.start;
        let t = (self.end - r) / w;
        let (s, d1, d2) = sigma_parts(t);
        (s, -d1 / w, d2 / (w * w))
    }

    pub fn value(&self, r: f64) -> f64 {
        self.parts(r).0
    }
}

/// The cut-off concentrating profile. Below the cutoff start it is exactly
/// (r²+ε²)^{-(n-4)/2}; above the cutoff end it vanishes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BubbleProfile {
    pub epsilon: f64,
    pub delta: f64,
    dim: DimensionSpec,
    pub cutoff: SmoothCutoff,
}

impl BubbleProfile {
    pub fn new(
        dim: DimensionSpec,
        epsilon: f64,
        delta: f64,
        cutoff: Option<SmoothCutoff>,
    ) -> Result<Self, BubbleError> {
        if !(epsilon > 0.0) {
            return Err(BubbleError::BadEpsilon { epsilon });
        }
        let cutoff = cutoff.unwrap_or(SmoothCutoff {
            start: delta / 4.0,
            end: delta / 2.0,
        });
        if !(cutoff.start > 0.0 && cutoff.start < cutoff.end && cutoff.end <= delta) {
            return Err(BubbleError::BadCutoff {
                start: cutoff.start,
                end: cutoff.end,
                delta,
            });
        }
        Ok(BubbleProfile {
            epsilon,
            delta,
            dim,
            cutoff,
        })
    }

    pub fn dim(&self) -> &DimensionSpec {
        &self.dim
    }

    fn pure(&self, r: f64) -> f64 {
        let m = self.dim.n() as f64 - 4.0;
        (r * r + self.epsilon * self.epsilon).powf(-m / 2.0)
    }

    fn pure_d1(&self, r: f64) -> f64 {
        let m = self.dim.n() as f64 - 4.0;
        -m * r * (r * r + self.epsilon * self.epsilon).powf(-(m + 2.0) / 2.0)
    }

    /// Geometer-sign Laplacian of the uncut profile:
    /// (n-4)(2r² + nε²)(r²+ε²)^{-n/2}.
    fn pure_laplacian(&self, r: f64) -> f64 {
        let n = self.dim.n() as f64;
        let e2 = self.epsilon * self.epsilon;
        (n - 4.0) * (2.0 * r * r + n * e2) * (r * r + e2).powf(-n / 2.0)
    }

    pub fn value(&self, r: f64) -> f64 {
        let (eta, _, _) = self.cutoff.parts(r);
        if eta == 0.0 {
            0.0
        } else {
            eta * self.pure(r)
        }
    }

    pub fn d1(&self, r: f64) -> f64 {
        let (eta, eta1, _) = self.cutoff.parts(r);
        if eta == 0.0 && eta1 == 0.0 {
            return 0.0;
        }
        eta1 * self.pure(r) + eta * self.pure_d1(r)
    }

    /// Δφ_ε: analytic below the cutoff start, closed-form product rule in the
    /// transition band (Δ(ηψ) = ηΔψ + ψΔη - 2η'ψ').
    pub fn laplacian(&self, r: f64) -> f64 {
        let (eta, eta1, eta2) = self.cutoff.parts(r);
        if eta == 0.0 && eta1 == 0.0 {
            return 0.0;
        }
        if eta1 == 0.0 && eta2 == 0.0 {
            return eta * self.pure_laplacian(r);
        }
        let n = self.dim.n() as f64;
        let lap_eta = -(eta2 + (n - 1.0) / r * eta1);
        eta * self.pure_laplacian(r) + self.pure(r) * lap_eta - 2.0 * eta1 * self.pure_d1(r)
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct EnergyBreakdown {
    /// ∫ (Δφ_ε)² dμ
    pub bilap: f64,
    /// ∫ w_a |∇φ_ε|² dμ
    pub grad_weighted: f64,
    /// ∫ w_b φ_ε² dμ
    pub pot_weighted: f64,
    /// ∫ f φ_ε^N dμ
    pub f_mass: f64,
    pub max_rel_err: f64,
}

fn integrate_radial(
    profile: &BubbleProfile,
    integrand: &impl Fn(f64) -> f64,
    what: &'static str,
) -> Result<(f64, f64), BubbleError> {
    let eps = profile.epsilon;
    let mut breaks = vec![
        0.0,
        eps / 2.0,
        2.0 * eps,
        (8.0 * eps).min(profile.cutoff.start),
        profile.cutoff.start,
        0.5 * (profile.cutoff.start + profile.cutoff.end),
        profile.cutoff.end,
        profile.delta,
    ];
    breaks.retain(|&b| b >= 0.0 && b <= profile.delta);
    breaks.sort_by(f64::total_cmp);
    breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-300);
    let r = quad::adaptive_with_breaks(integrand, &breaks, 1e-10, 0.0)?;
    let rel = r.abs_error / r.value.abs().max(f64::MIN_POSITIVE);
    if r.value != 0.0 && rel > 1e-3 {
        return Err(BubbleError::Resolution { what, rel_err: rel });
    }
    Ok((r.value, rel))
}

/// The four energies of a bubble profile under the radial measure
/// ω_{n-1} r^{n-1}(1 - S_g r²/(6n)) dr. Curvature enters only through that
/// analytic volume multiplier; the background is flat.
pub fn bubble_energy(
    profile: &BubbleProfile,
    weights: Option<&SingularWeightConfig>,
    f: impl Fn(f64) -> f64,
    s_g: f64,
) -> Result<EnergyBreakdown, BubbleError> {
    let n = profile.dim().n() as f64;
    let omega = profile.dim().omega();
    let ncrit = profile.dim().critical_exponent();
    let measure = move |r: f64| omega * r.powf(n - 1.0) * (1.0 - s_g * r * r / (6.0 * n));

    let (bilap, e1) = integrate_radial(
        profile,
        &|r| profile.laplacian(r).powi(2) * measure(r),
        "bilaplacian energy",
    )?;
    let (f_mass, e2) = integrate_radial(
        profile,
        &|r| f(r) * profile.value(r).powf(ncrit) * measure(r),
        "f mass",
    )?;
    let (grad_weighted, pot_weighted, e3, e4) = match weights {
        None => (0.0, 0.0, 0.0, 0.0),
        Some(w) => {
            let (g, e3) = integrate_radial(
                profile,
                &|r| w.weight_a(r) * profile.d1(r).powi(2) * measure(r),
                "weighted gradient energy",
            )?;
            let (p, e4) = integrate_radial(
                profile,
                &|r| w.weight_b(r) * profile.value(r).powi(2) * measure(r),
                "weighted potential energy",
            )?;
            (g, p, e3, e4)
        }
    };
    Ok(EnergyBreakdown {
        bilap,
        grad_weighted,
        pot_weighted,
        f_mass,
        max_rel_err: e1.max(e2).max(e3).max(e4),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExpansionTerm {
    BGradient,
    Bprime,
    CPotential,
    FMass,
    BilaplacianEnergy,
    Quotient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CorrectionOrder {
    EpsSquared,
    EpsSquaredLog,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrectionReport {
    pub order: CorrectionOrder,
    /// c₁/c₀ from the fit (the coefficient of the stated order).
    pub measured_rel: f64,
    /// At n = 6 the fit carries a plain-ε² regressor alongside the log one;
    /// its coefficient (cutoff-band constant, configuration-dependent) lands
    /// here rather than polluting the log coefficient.
    pub measured_eps_sq_rel: Option<f64>,
    /// The part a flat-background quadrature with the volume multiplier can
    /// see; this is what `measured_rel` is expected to reproduce.
    pub predicted_measure_part_rel: Option<f64>,
    /// Measure part plus the analytic curved-operator part.
    pub predicted_full_rel: Option<f64>,
    /// The customary written (consolidated) coefficient.
    pub reference_rel: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TermExpansion {
    pub term: ExpansionTerm,
    pub leading: PredictedMeasured,
    pub correction: CorrectionReport,
    pub fit_residual_rel: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FModel {
    pub f_p: f64,
    pub lap_f_p: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExpansionSet {
    pub n: u32,
    pub f_model: FModel,
    pub s_g: f64,
    pub epsilons: Vec<f64>,
    pub terms: Vec<TermExpansion>,
    /// Componentwise curvature fractions summed vs the consolidated form
    /// (n > 6): (n²+4)(n-4)/(6(n-6)n(n²-4)) + 4(n-1)/(3n(n-6)(n+2))
    /// against (n²+4n-20)/(6(n-6)(n²-4)).
    pub consolidated_identity: Option<Comparison>,
    /// Sign verdict: a negative full quotient correction means the quotient
    /// dips strictly below the best-constant threshold for small ε.
    pub strict_inequality_predicted: Option<bool>,
    pub warnings: Vec<Warning>,
}

fn fit_affine(ms: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let k = ms.len() as f64;
    let sm: f64 = ms.iter().sum();
    let smm: f64 = ms.iter().map(|m| m * m).sum();
    let sy: f64 = ys.iter().sum();
    let smy: f64 = ms.iter().zip(ys).map(|(m, y)| m * y).sum();
    let det = k * smm - sm * sm;
    let c0 = (smm * sy - sm * smy) / det;
    let c1 = (k * smy - sm * sy) / det;
    let rms = (ms
        .iter()
        .zip(ys)
        .map(|(m, y)| (y - c0 - c1 * m).powi(2))
        .sum::<f64>()
        / k)
        .sqrt();
    (c0, c1, rms / c0.abs().max(f64::MIN_POSITIVE))
}

/// Least squares of ys against columns (intercept first). Columns are
/// normalized before forming the normal equations; coefficients come back in
/// original units, along with the rms residual relative to the intercept.
fn fit_ls(cols: &[&[f64]], ys: &[f64]) -> (Vec<f64>, f64) {
    let k = cols.len();
    let n = ys.len();
    assert!(n >= k, "need at least as many samples as regressors");
    let scales: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE))
        .collect();
    let mut a = vec![vec![0.0_f64; k]; k];
    let mut b = vec![0.0_f64; k];
    for i in 0..n {
        for r in 0..k {
            let xr = cols[r][i] / scales[r];
            for c in 0..k {
                a[r][c] += xr * cols[c][i] / scales[c];
            }
            b[r] += xr * ys[i];
        }
    }
    // Gaussian elimination with partial pivoting on the normal equations.
    let mut idx: Vec<usize> = (0..k).collect();
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&r1, &r2| a[idx[r1]][col].abs().total_cmp(&a[idx[r2]][col].abs()))
            .expect("nonempty");
        idx.swap(col, piv);
        for r in col + 1..k {
            let f = a[idx[r]][col] / a[idx[col]][col];
            for c in col..k {
                a[idx[r]][c] -= f * a[idx[col]][c];
            }
            b[idx[r]] -= f * b[idx[col]];
        }
    }
    let mut x = vec![0.0_f64; k];
    for r in (0..k).rev() {
        let mut s = b[idx[r]];
        for c in r + 1..k {
            s -= a[idx[r]][c] * x[c];
        }
        x[r] = s / a[idx[r]][r];
    }
    for (xi, s) in x.iter_mut().zip(&scales) {
        *xi /= s;
    }
    let rms = (ys
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let fit: f64 = (0..k).map(|r| x[r] * cols[r][i]).sum();
            (y - fit).powi(2)
        })
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let rel = rms / x[0].abs().max(f64::MIN_POSITIVE);
    (x, rel)
}

/// Measure-visible relative ε² coefficient of the bilaplacian energy for
/// n > 6: -S_g (n²+4)(n-4) / (6(n-6)n(n²-4)).
pub fn bilap_measure_correction(n: u32, s_g: f64) -> f64 {
    let n = n as f64;
    -s_g * (n * n + 4.0) * (n - 4.0) / (6.0 * (n - 6.0) * n * (n * n - 4.0))
}

/// Curved-operator part, analytic only: -S_g · 4(n-1) / (3n(n-6)(n+2)).
pub fn bilap_operator_correction(n: u32, s_g: f64) -> f64 {
    let n = n as f64;
    -s_g * 4.0 * (n - 1.0) / (3.0 * n * (n - 6.0) * (n + 2.0))
}

/// Consolidated written form: -S_g (n²+4n-20) / (6(n-6)(n²-4)).
pub fn bilap_consolidated_correction(n: u32, s_g: f64) -> f64 {
    let n = n as f64;
    -s_g * (n * n + 4.0 * n - 20.0) / (6.0 * (n - 6.0) * (n * n - 4.0))
}

/// Relative ε² coefficient of ∫ f φ^N: -(Δf/(2f(P)) + S_g/6)/(n-2).
pub fn f_mass_correction(n: u32, f_model: FModel, s_g: f64) -> f64 {
    let n = n as f64;
    -(f_model.lap_f_p / (2.0 * f_model.f_p) + s_g / 6.0) / (n - 2.0)
}

/// Verifies the small-ε energy expansions against quadrature: fits the
/// ε-scaled bilaplacian energy, the f-mass, and the quotient
/// J(φ_ε)/‖φ_ε‖_N² to c₀ + c₁ ε² (c₀ + c₁ ε² log(1/ε²) at n = 6) and
/// compares each coefficient with its closed-form prediction.
pub fn verify_expansion(
    dim: &DimensionSpec,
    f_model: FModel,
    s_g: f64,
    epsilons: &[f64],
) -> Result<ExpansionSet, BubbleError> {
    let n = dim.n();
    if n < 6 {
        return Err(BubbleError::DimensionTooSmall { n, needed: 6 });
    }
    let nf = n as f64;
    let min_points = if n == 6 { 5 } else { 4 };
    if epsilons.len() < min_points {
        return Err(BubbleError::FitResidual { residual: f64::NAN });
    }
    let f_radial = move |r: f64| f_model.f_p - f_model.lap_f_p / (2.0 * nf) * r * r;

    let mut bilap_scaled = Vec::new();
    let mut mass_scaled = Vec::new();
    let mut quotients = Vec::new();
    let two_over_ncrit = 2.0 / dim.critical_exponent();
    for &eps in epsilons {
        let profile = BubbleProfile::new(*dim, eps, 1.0, None)?;
        let e = bubble_energy(&profile, None, f_radial, s_g)?;
        bilap_scaled.push(e.bilap * eps.powf(nf - 4.0));
        mass_scaled.push(e.f_mass * eps.powf(nf));
        quotients.push(e.bilap / e.f_mass.powf(two_over_ncrit));
    }

    let order = if n == 6 {
        CorrectionOrder::EpsSquaredLog
    } else {
        CorrectionOrder::EpsSquared
    };
    let ones: Vec<f64> = vec![1.0; epsilons.len()];
    let ms_sq: Vec<f64> = epsilons.iter().map(|&e| e * e).collect();
    let ms_log: Vec<f64> = epsilons
        .iter()
        .map(|&e| e * e * (1.0 / (e * e)).ln())
        .collect();
    let ms_quart: Vec<f64> = epsilons.iter().map(|&e| e.powi(4)).collect();
    // The fixed-scale cutoff band contributes an exact ε^{n-4} term to the
    // scaled energies. At n = 6 that is ε² itself (a plain regressor rides
    // along with the log one); for n > 6 the ε⁴ regressor absorbs it together
    // with the physical next-order corrections, keeping the ε² coefficient
    // clean.
    let fit = |ys: &[f64]| -> (f64, f64, Option<f64>, f64) {
        if n == 6 {
            let (x, res) = fit_ls(&[&ones, &ms_sq, &ms_log, &ms_quart], ys);
            (x[0], x[2], Some(x[1]), res)
        } else {
            let (x, res) = fit_ls(&[&ones, &ms_sq, &ms_quart], ys);
            (x[0], x[1], None, res)
        }
    };

    let i_n = beta_integral(nf, nf / 2.0 - 1.0).expect("n >= 6");
    let omega = dim.omega();
    let k2_inv = best_sobolev_sq_inv(dim);

    let bilap_leading_pred = omega * nf * (nf - 4.0) * (nf * nf - 4.0) / 2.0 * i_n;
    let mass_leading_pred = omega * i_n / 2.0 * f_model.f_p;
    let quot_leading_pred = k2_inv * f_model.f_p.powf(-two_over_ncrit);

    let mut warnings = Vec::new();
    let mut terms = Vec::new();

    // Bilaplacian energy.
    let (c0, c1, c_sq_extra, res) = fit(&bilap_scaled);
    let measured_rel = c1 / c0;
    let measured_eps_sq_rel = c_sq_extra.map(|c| c / c0);
    let (pred_measure, pred_full, reference) = if n > 6 {
        (
            bilap_measure_correction(n, s_g),
            Some(bilap_consolidated_correction(n, s_g)),
            Some(bilap_consolidated_correction(n, s_g)),
        )
    } else {
        // n = 6: the measure multiplier produces the log term with relative
        // coefficient -S_g·(n-4)²·4 / (6n·leading/ω) = -S_g/28.8; the written
        // consolidated claim is recorded verbatim for comparison.
        let log_coeff = -s_g / (6.0 * nf) * omega * 8.0 / bilap_leading_pred;
        let reference_abs =
            -4.0 * (omega / 2.0).powf(0.75) * (f_model.f_p * i_n).powf(-1.0 / 3.0) * s_g / 3.0;
        (log_coeff, None, Some(reference_abs / bilap_leading_pred))
    };
    if res > 2e-3 {
        return Err(BubbleError::FitResidual { residual: res });
    }
    terms.push(TermExpansion {
        term: ExpansionTerm::BilaplacianEnergy,
        leading: PredictedMeasured::of(bilap_leading_pred, c0),
        correction: CorrectionReport {
            order,
            measured_rel,
            measured_eps_sq_rel,
            predicted_measure_part_rel: Some(pred_measure),
            predicted_full_rel: pred_full,
            reference_rel: reference,
        },
        fit_residual_rel: res,
    });

    // f-mass: its correction is plain ε² in every dimension.
    let (xm, resm) = fit_ls(&[&ones, &ms_sq, &ms_quart], &mass_scaled);
    let (c0m, c1m) = (xm[0], xm[1]);
    if resm > 2e-3 {
        return Err(BubbleError::FitResidual { residual: resm });
    }
    let mass_pred_rel = f_mass_correction(n, f_model, s_g);
    terms.push(TermExpansion {
        term: ExpansionTerm::FMass,
        leading: PredictedMeasured::of(mass_leading_pred, c0m),
        correction: CorrectionReport {
            order: CorrectionOrder::EpsSquared,
            measured_rel: c1m / c0m,
            measured_eps_sq_rel: None,
            predicted_measure_part_rel: Some(mass_pred_rel),
            predicted_full_rel: Some(mass_pred_rel),
            reference_rel: Some(mass_pred_rel),
        },
        fit_residual_rel: resm,
    });

    // Quotient.
    let (c0q, c1q, cq_sq_extra, resq) = fit(&quotients);
    if resq > 2e-3 {
        return Err(BubbleError::FitResidual { residual: resq });
    }
    let mass_share = -(nf - 4.0) / nf * mass_pred_rel;
    let (q_measure, q_full, q_reference) = if n > 6 {
        let full = bilap_consolidated_correction(n, s_g) + mass_share;
        // The customary final display drops the S_g/6 share of the mass term.
        let reference = bilap_consolidated_correction(n, s_g)
            + (nf - 4.0) / (2.0 * nf * (nf - 2.0)) * f_model.lap_f_p / f_model.f_p;
        (
            Some(bilap_measure_correction(n, s_g) + mass_share),
            Some(full),
            Some(reference),
        )
    } else {
        (Some(pred_measure), None, reference)
    };
    if let (Some(full), Some(refr)) = (q_full, q_reference) {
        if (full - refr).abs() > 1e-12 * full.abs().max(refr.abs()).max(1e-300) {
            warnings.push(Warning::new(
                "bubble_expansion",
                "verify_expansion",
                format!(
                    "quotient correction: derived coefficient {full:.8e} differs from the \
                     written consolidated claim {refr:.8e} (the S_g/6 mass share is absent \
                     from the written form)"
                ),
            ));
        }
    }
    terms.push(TermExpansion {
        term: ExpansionTerm::Quotient,
        leading: PredictedMeasured::of(quot_leading_pred, c0q),
        correction: CorrectionReport {
            order,
            measured_rel: c1q / c0q,
            measured_eps_sq_rel: cq_sq_extra.map(|c| c / c0q),
            predicted_measure_part_rel: q_measure,
            predicted_full_rel: q_full,
            reference_rel: q_reference,
        },
        fit_residual_rel: resq,
    });

    let consolidated_identity = if n > 6 {
        let componentwise = bilap_measure_correction(n, 1.0) + bilap_operator_correction(n, 1.0);
        let consolidated = bilap_consolidated_correction(n, 1.0);
        let cmp = Comparison::of(consolidated, componentwise, 1e-12);
        if !cmp.agrees {
            warnings.push(Warning::new(
                "bubble_expansion",
                "verify_expansion",
                format!(
                    "componentwise curvature fractions {componentwise:.8e} do not consolidate \
                     to the written coefficient {consolidated:.8e}"
                ),
            ));
        }
        Some(cmp)
    } else {
        None
    };

    let strict_inequality_predicted = if n > 6 {
        q_full.map(|c| c < 0.0)
    } else {
        Some(s_g > 0.0)
    };

    Ok(ExpansionSet {
        n,
        f_model,
        s_g,
        epsilons: epsilons.to_vec(),
        terms,
        consolidated_identity,
        strict_inequality_predicted,
        warnings,
    })
}

/// Reference (as customarily written) ε-exponent of the Hoelder-raised
/// gradient mass (∫|∇φ_ε|^{2p/(p-1)})^{1-1/p}.
pub fn bprime_pow_exponent_reference(n: u32, p: f64) -> f64 {
    let n = n as f64;
    -(n - 4.0) + 2.0 + (n - 4.0) / p
}

/// Exponent of the same quantity derived from the integral itself:
/// n(p-1)/p - 2(n-3).
pub fn bprime_pow_exponent_derived(n: u32, p: f64) -> f64 {
    let n = n as f64;
    n * (p - 1.0) / p - 2.0 * (n - 3.0)
}

/// ε-exponent of (∫ φ_ε^{2p/(p-1)})^{1-1/p}: -2(n-4) + n(p-1)/p.
pub fn c_pow_exponent(n: u32, p: f64) -> f64 {
    let n = n as f64;
    -2.0 * (n - 4.0) + n * (p - 1.0) / p
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct GiraudMass {
    /// ∫ w_a |∇φ_ε|² dμ (w_a ≡ 1 without weights).
    pub b: f64,
    /// (∫ |∇φ_ε|^{2p/(p-1)} dμ)^{1-1/p}.
    pub bprime_pow: f64,
    /// (∫ φ_ε^{2p/(p-1)} dμ)^{1-1/p}.
    pub c: f64,
}

/// The three weighted bubble masses entering the Hoelder bounds.
pub fn giraud_mass(
    profile: &BubbleProfile,
    p: f64,
    weights: Option<&SingularWeightConfig>,
) -> Result<GiraudMass, BubbleError> {
    let n = profile.dim().n();
    let nf = n as f64;
    if !(p > nf / 4.0) {
        return Err(BubbleError::BadExponent { p, n });
    }
    let omega = profile.dim().omega();
    let measure = move |r: f64| omega * r.powf(nf - 1.0);
    let q = 2.0 * p / (p - 1.0);

    let (b, _) = integrate_radial(
        profile,
        &|r| {
            let wa = weights.map_or(1.0, |w| w.weight_a(r));
            wa * profile.d1(r).powi(2) * measure(r)
        },
        "gradient mass",
    )?;
    let (bp_raw, _) = integrate_radial(
        profile,
        &|r| profile.d1(r).abs().powf(q) * measure(r),
        "raised gradient mass",
    )?;
    let (c_raw, _) = integrate_radial(
        profile,
        &|r| profile.value(r).powf(q) * measure(r),
        "raised potential mass",
    )?;
    Ok(GiraudMass {
        b,
        bprime_pow: bp_raw.powf(1.0 - 1.0 / p),
        c: c_raw.powf(1.0 - 1.0 / p),
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct SlopeCheck {
    pub term: ExpansionTerm,
    pub measured: f64,
    pub reference: f64,
    pub derived: f64,
    pub matches_reference: bool,
    pub matches_derived: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GiraudScalingReport {
    pub n: u32,
    pub p: f64,
    pub epsilons: Vec<f64>,
    pub bilap: SlopeCheck,
    pub bprime: SlopeCheck,
    pub c_term: SlopeCheck,
    pub warnings: Vec<Warning>,
}

fn log_slope(epsilons: &[f64], values: &[f64]) -> Result<f64, BubbleError> {
    let xs: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (_, slope, res) = fit_affine(&xs, &ys);
    // fit_affine normalizes the residual by c0; redo in absolute log units.
    let k = xs.len() as f64;
    let xbar = xs.iter().sum::<f64>() / k;
    let ybar = ys.iter().sum::<f64>() / k;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        num += (x - xbar) * (y - ybar);
        den += (x - xbar) * (x - xbar);
    }
    let b = num / den;
    let a = ybar - b * xbar;
    let max_resid = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (y - a - b * x).abs())
        .fold(0.0_f64, f64::max);
    let _ = (slope, res);
    if max_resid > 0.02 {
        return Err(BubbleError::RegressionFailure { residual: max_resid });
    }
    Ok(b)
}

/// Log-log scaling of the bilaplacian energy and the two Hoelder masses over
/// an ε sequence, checked against both the reference exponents and the
/// exponents derived from the integrals. Slope tolerance is 0.05 absolute.
pub fn giraud_scaling(
    dim: &DimensionSpec,
    p: f64,
    epsilons: &[f64],
    weights: Option<&SingularWeightConfig>,
) -> Result<GiraudScalingReport, BubbleError> {
    let n = dim.n();
    let nf = n as f64;
    if n <= 6 {
        return Err(BubbleError::DimensionTooSmall { n, needed: 7 });
    }
    if !(p > nf / 4.0) {
        return Err(BubbleError::BadExponent { p, n });
    }
    let mut warnings = Vec::new();
    if p <= nf / 2.0 {
        warnings.push(Warning::new(
            "bubble_expansion",
            "giraud_mass",
            format!(
                "p = {p} is at or below n/2 = {}; the gradient-side Hoelder bound needs the \
                 stronger exponent, so the B' mass grows faster than the leading energy",
                nf / 2.0
            ),
        ));
    }

    let mut bilap_vals = Vec::new();
    let mut bprime_vals = Vec::new();
    let mut c_vals = Vec::new();
    for &eps in epsilons {
        let profile = BubbleProfile::new(*dim, eps, 1.0, None)?;
        let e = bubble_energy(&profile, None, |_| 1.0, 0.0)?;
        let g = giraud_mass(&profile, p, weights)?;
        bilap_vals.push(e.bilap);
        bprime_vals.push(g.bprime_pow);
        c_vals.push(g.c);
    }

    let tol = 0.05;
    let make = |term: ExpansionTerm, measured: f64, reference: f64, derived: f64| SlopeCheck {
        term,
        measured,
        reference,
        derived,
        matches_reference: (measured - reference).abs() <= tol,
        matches_derived: (measured - derived).abs() <= tol,
    };

    let bilap = make(
        ExpansionTerm::BilaplacianEnergy,
        log_slope(epsilons, &bilap_vals)?,
        -(nf - 4.0),
        -(nf - 4.0),
    );
    let bprime = make(
        ExpansionTerm::Bprime,
        log_slope(epsilons, &bprime_vals)?,
        bprime_pow_exponent_reference(n, p),
        bprime_pow_exponent_derived(n, p),
    );
    let c_term = make(
        ExpansionTerm::CPotential,
        log_slope(epsilons, &c_vals)?,
        c_pow_exponent(n, p),
        c_pow_exponent(n, p),
    );
    if !bprime.matches_reference && bprime.matches_derived {
        warnings.push(Warning::new(
            "bubble_expansion",
            "giraud_mass",
            format!(
                "B' mass: measured slope {:.4} matches the integral-derived exponent {:.4}, \
                 not the reference exponent {:.4} (gap (2n-4)/p = {:.4}); the reference \
                 bookkeeping loses the Hoelder power on the kernel factor",
                bprime.measured,
                bprime.derived,
                bprime.reference,
                (2.0 * nf - 4.0) / p
            ),
        ));
    }

    Ok(GiraudScalingReport {
        n,
        p,
        epsilons: epsilons.to_vec(),
        bilap,
        bprime,
        c_term,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::powersum::{fd_derivative, fd_laplacian};

    fn dim(n: u32) -> DimensionSpec {
        DimensionSpec::new(n).unwrap()
    }

    #[test]
    fn cutoff_plateaus_and_smoothness() {
        let c = SmoothCutoff { start: 0.25, end: 0.5 };
        assert_eq!(c.parts(0.1), (1.0, 0.0, 0.0));
        assert_eq!(c.parts(0.25), (1.0, 0.0, 0.0));
        assert_eq!(c.parts(0.6), (0.0, 0.0, 0.0));
        let (v, _, _) = c.parts(0.375);
        assert!(v > 0.0 && v < 1.0);
        // Closed-form derivatives against finite differences.
        for &r in &[0.30, 0.37, 0.44, 0.48] {
            let (_, d1, d2) = c.parts(r);
            let h = 1e-5;
            let f = |x: f64| c.value(x);
            let fd1 = (f(r + h) - f(r - h)) / (2.0 * h);
            let fd2 = (f(r + h) - 2.0 * f(r) + f(r - h)) / (h * h);
            assert!((d1 - fd1).abs() < 1e-5 * d1.abs().max(1.0), "d1 at {r}");
            assert!((d2 - fd2).abs() < 1e-3 * d2.abs().max(1.0), "d2 at {r}");
        }
    }

    #[test]
    fn profile_laplacian_matches_finite_differences() {
        let p = BubbleProfile::new(dim(6), 0.05, 1.0, None).unwrap();
        let f = |r: f64| p.value(r);
        // Points in the pure region, the transition band, and near epsilon.
        for &r in &[0.03, 0.1, 0.2, 0.3, 0.42] {
            let sym = p.laplacian(r);
            let num = fd_laplacian(&f, 6, r, r * 2e-3);
            assert!(
                (sym - num).abs() < 1e-5 * sym.abs().max(1.0),
                "r = {r}: {sym} vs {num}"
            );
            let d = p.d1(r);
            let nd = fd_derivative(&f, r, r * 2e-3);
            assert!((d - nd).abs() < 1e-7 * d.abs().max(1.0));
        }
    }

    #[test]
    fn gradient_identity_below_cutoff() {
        // |∇φ_ε| = (n-4) r (ε²+r²)^{-(n-2)/2} wherever η ≡ 1.
        let p = BubbleProfile::new(dim(8), 0.1, 1.0, None).unwrap();
        for &r in &[0.02, 0.1, 0.2] {
            let expect = 4.0 * r * (0.01_f64 + r * r).powf(-3.0);
            assert!((p.d1(r).abs() - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn bilap_energy_leading_coefficient_n6() {
        // ε^{n-4}·∫(Δφ_ε)² → ω n(n-4)(n²-4)/2 · I_n^{n/2-1} = 192π³/30.
        // The scaled values carry an exact ε² band term, so the limit is
        // extracted by Richardson extrapolation over the halving sequence.
        let target = 192.0 * std::f64::consts::PI.powi(3) / 30.0;
        let mut scaled = Vec::new();
        let mut prev_gap = f64::INFINITY;
        for &eps in &[0.04, 0.02, 0.01] {
            let p = BubbleProfile::new(dim(6), eps, 1.0, None).unwrap();
            let e = bubble_energy(&p, None, |_| 1.0, 0.0).unwrap();
            scaled.push(e.bilap * eps * eps);
            let gap = (scaled.last().unwrap() - target).abs() / target;
            assert!(gap < prev_gap, "gap should shrink along the ε sequence");
            prev_gap = gap;
        }
        let extrapolated = (4.0 * scaled[2] - scaled[1]) / 3.0;
        assert!(
            (extrapolated - target).abs() / target < 1e-2,
            "Richardson value {extrapolated} vs {target}"
        );
    }

    #[test]
    fn f_mass_leading_coefficient() {
        let d = dim(6);
        let i6 = beta_integral(6.0, 2.0).unwrap();
        let target = d.omega() * i6 / 2.0 * 3.0; // f ≡ 3
        let p = BubbleProfile::new(d, 0.01, 1.0, None).unwrap();
        let e = bubble_energy(&p, None, |_| 3.0, 0.0).unwrap();
        let scaled = e.f_mass * 0.01_f64.powi(6);
        assert!((scaled - target).abs() / target < 1e-2);
    }

    #[test]
    fn inert_weights_contribute_nothing() {
        let p = BubbleProfile::new(dim(6), 0.05, 1.0, None).unwrap();
        let w = SingularWeightConfig::inert();
        let e = bubble_energy(&p, Some(&w), |_| 1.0, 0.0).unwrap();
        assert_eq!(e.grad_weighted, 0.0);
        assert_eq!(e.pot_weighted, 0.0);
    }

    #[test]
    fn uncut_scaling_law() {
        // With the cutoff far beyond the sampled radii the bilap energy obeys
        // the exact power law ε^{-(n-4)}; check the log-log slope to 1e-3.
        let d = dim(8);
        let epsilons = [4e-4, 2e-4, 1e-4];
        let mut vals = Vec::new();
        for &eps in &epsilons {
            // Integrate the pure profile out to 4000ε: the tail is O(1e-11)
            // relative and scales identically, so the slope stays exact.
            let p = BubbleProfile::new(
                d,
                eps,
                8000.0 * eps,
                Some(SmoothCutoff {
                    start: 4000.0 * eps,
                    end: 8000.0 * eps,
                }),
            )
            .unwrap();
            let e = bubble_energy(&p, None, |_| 1.0, 0.0).unwrap();
            vals.push(e.bilap);
        }
        let slope = log_slope(&epsilons, &vals).unwrap();
        assert!((slope + 4.0).abs() < 1e-3, "slope {slope}");
    }

    #[test]
    fn cutoff_independence_of_leading_coefficient() {
        let d = dim(6);
        let target = 192.0 * std::f64::consts::PI.powi(3) / 30.0;
        let narrow = SmoothCutoff { start: 0.25, end: 0.5 };
        let wide = SmoothCutoff { start: 0.5, end: 1.0 };
        let mut prev_drift = f64::INFINITY;
        for &eps in &[0.04, 0.02, 0.01] {
            let e1 = bubble_energy(
                &BubbleProfile::new(d, eps, 1.0, Some(narrow)).unwrap(),
                None,
                |_| 1.0,
                0.0,
            )
            .unwrap();
            let e2 = bubble_energy(
                &BubbleProfile::new(d, eps, 1.0, Some(wide)).unwrap(),
                None,
                |_| 1.0,
                0.0,
            )
            .unwrap();
            let drift = ((e1.bilap - e2.bilap) * eps * eps).abs() / target;
            assert!(drift < prev_drift, "drift must shrink as ε → 0");
            prev_drift = drift;
        }
        assert!(prev_drift < 2e-2, "final drift {prev_drift}");
    }

    #[test]
    fn expansion_flat_n6_hits_best_constant() {
        let d = dim(6);
        let eps = [0.04, 0.028, 0.02, 0.014, 0.01];
        let set = verify_expansion(&d, FModel { f_p: 1.0, lap_f_p: 0.0 }, 0.0, &eps).unwrap();
        let q = set
            .terms
            .iter()
            .find(|t| t.term == ExpansionTerm::Quotient)
            .unwrap();
        assert!(
            q.leading.rel_gap < 0.01,
            "quotient c0 {} vs {}",
            q.leading.measured,
            q.leading.predicted
        );
    }

    #[test]
    fn expansion_correction_sign_bookkeeping_n8() {
        // S_g = 0, Δf/f = -1: the quotient correction is negative, so the
        // strict inequality is attained; margin-side coefficient (n-4)/(2n(n-2)).
        let d = dim(8);
        let eps = [0.05, 0.04, 0.03, 0.02];
        let set = verify_expansion(&d, FModel { f_p: 1.0, lap_f_p: -1.0 }, 0.0, &eps).unwrap();
        assert_eq!(set.strict_inequality_predicted, Some(true));
        let q = set
            .terms
            .iter()
            .find(|t| t.term == ExpansionTerm::Quotient)
            .unwrap();
        let expect = -(8.0 - 4.0) / (2.0 * 8.0 * 6.0); // -(n-4)/(2n(n-2)) · |Δf/f|
        let got = q.correction.predicted_full_rel.unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!(got < 0.0);
    }

    #[test]
    fn consolidated_identity_holds_exactly() {
        for n in [8_u32, 10, 12] {
            let comp = bilap_measure_correction(n, 1.0) + bilap_operator_correction(n, 1.0);
            let cons = bilap_consolidated_correction(n, 1.0);
            assert!(
                (comp - cons).abs() < 1e-15 * cons.abs(),
                "componentwise vs consolidated at n = {n}"
            );
        }
    }

    #[test]
    fn giraud_exponent_formulas() {
        // (n=8, p=3): C-scaling -8/3, reference B' -2/3, derived B' -14/3.
        assert!((c_pow_exponent(8, 3.0) + 8.0 / 3.0).abs() < 1e-12);
        assert!((bprime_pow_exponent_reference(8, 3.0) + 2.0 / 3.0).abs() < 1e-12);
        assert!((bprime_pow_exponent_derived(8, 3.0) + 14.0 / 3.0).abs() < 1e-12);
        // p → ∞ limits: -2(n-4)+n and -(n-4)+2.
        let big = 1e9;
        assert!((c_pow_exponent(8, big) - (-2.0 * 4.0 + 8.0)).abs() < 1e-6);
        assert!((bprime_pow_exponent_reference(8, big) - (-4.0 + 2.0)).abs() < 1e-6);
    }

    #[test]
    fn giraud_mass_rejects_small_p() {
        let p = BubbleProfile::new(dim(8), 0.05, 1.0, None).unwrap();
        assert!(matches!(
            giraud_mass(&p, 1.5, None),
            Err(BubbleError::BadExponent { .. })
        ));
    }
}
