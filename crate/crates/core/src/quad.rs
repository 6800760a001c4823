//! One-dimensional quadrature: adaptive Gauss–Kronrod panels for smooth
//! integrands and a tanh-sinh rule for endpoint-singular integrands on [0, 1].

use thiserror::Error;

#[derive(Debug, Error)]
pub enum QuadError {
    #[error("quadrature did not converge: estimated error {error:.3e} over value {value:.3e}")]
    NoConvergence { value: f64, error: f64 },
    #[error("integrand returned a non-finite value at x = {x}")]
    NonFinite { x: f64 },
    #[error("empty or reversed interval [{a}, {b}]")]
    BadInterval { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
}

// Gauss–Kronrod 7-15 pair on [-1, 1].
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Single Gauss–Kronrod 15-point panel. Returns (integral, error estimate).
pub fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut resabs = fc.abs() * WGK[7];
    for k in 0..7 {
        let x = h * XGK[k];
        let f1 = f(c - x);
        let f2 = f(c + x);
        let fs = f1 + f2;
        kronrod += fs * WGK[k];
        resabs += (f1.abs() + f2.abs()) * WGK[k];
        if k % 2 == 1 {
            gauss += fs * WG[k / 2];
        }
    }
    let mean = kronrod * 0.5;
    let mut resasc = WGK[7] * (fc - mean).abs();
    for k in 0..7 {
        let x = h * XGK[k];
        resasc += WGK[k] * ((f(c - x) - mean).abs() + (f(c + x) - mean).abs());
    }
    let value = kronrod * h;
    let raw = ((kronrod - gauss) * h).abs();
    let resasc = resasc * h.abs();
    // QUADPACK-style rescaling of the raw error estimate.
    let mut err = raw;
    if resasc != 0.0 && raw != 0.0 {
        let scale = (200.0 * raw / resasc).powf(1.5);
        err = if scale < 1.0 { resasc * scale } else { resasc };
    }
    let min_err = 50.0 * f64::EPSILON * resabs * h.abs();
    if min_err > err {
        err = min_err;
    }
    (value, err)
}

struct Panel {
    err: f64,
    a: f64,
    b: f64,
    val: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.err == other.err
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&other.err)
    }
}

/// Globally adaptive integration of `f` over [a, b]: the worst panel is
/// bisected until the summed error estimate meets the tolerance.
pub fn adaptive<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult, QuadError> {
    adaptive_with_breaks(f, &[a, b], rel_tol, abs_tol)
}

/// Adaptive integration with interior breakpoints seeding the initial panels,
/// so that known feature scales (a bubble width, a cutoff band) are resolved
/// before global refinement starts.
pub fn adaptive_with_breaks<F: Fn(f64) -> f64>(
    f: &F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
) -> Result<QuadResult, QuadError> {
    const MAX_PANELS: usize = 20_000;
    if breaks.len() < 2 {
        return Err(QuadError::BadInterval {
            a: f64::NAN,
            b: f64::NAN,
        });
    }
    let mut heap = std::collections::BinaryHeap::new();
    let mut total = 0.0_f64;
    let mut total_err = 0.0_f64;
    for w in breaks.windows(2) {
        let (a, b) = (w[0], w[1]);
        if !(b > a) {
            return Err(QuadError::BadInterval { a, b });
        }
        let (v, e) = gk15(f, a, b);
        if !v.is_finite() {
            return Err(QuadError::NonFinite { x: 0.5 * (a + b) });
        }
        total += v;
        total_err += e;
        heap.push(Panel { err: e, a, b, val: v });
    }
    loop {
        let budget = abs_tol.max(rel_tol * total.abs());
        if total_err <= budget || heap.len() >= MAX_PANELS {
            break;
        }
        let worst = heap.pop().expect("heap holds at least one panel");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval at floating-point resolution; keep its estimate.
            heap.push(worst);
            break;
        }
        let (v1, e1) = gk15(f, worst.a, mid);
        let (v2, e2) = gk15(f, mid, worst.b);
        if !(v1.is_finite() && v2.is_finite()) {
            return Err(QuadError::NonFinite { x: mid });
        }
        total += v1 + v2 - worst.val;
        total_err += e1 + e2 - worst.err;
        heap.push(Panel {
            err: e1,
            a: worst.a,
            b: mid,
            val: v1,
        });
        heap.push(Panel {
            err: e2,
            a: mid,
            b: worst.b,
            val: v2,
        });
    }
    let budget = abs_tol.max(rel_tol * total.abs());
    if total_err > budget * 10.0 {
        return Err(QuadError::NoConvergence {
            value: total,
            error: total_err,
        });
    }
    Ok(QuadResult {
        value: total,
        abs_error: total_err,
    })
}

/// Tanh-sinh quadrature of `f` over [0, 1]. The integrand receives both `x`
/// and `1 - x` computed without cancellation, so integrable endpoint
/// singularities like x^q (1-x)^s with q, s > -1 converge at full precision.
pub fn tanh_sinh<F: Fn(f64, f64) -> f64>(f: &F, rel_tol: f64) -> Result<QuadResult, QuadError> {
    const T_MAX: f64 = 3.6;
    const MAX_LEVEL: u32 = 12;

    let eval = |t: f64| -> Result<f64, QuadError> {
        let w = std::f64::consts::FRAC_PI_2 * t.sinh();
        let x = 1.0 / (1.0 + (-2.0 * w).exp());
        let omx = 1.0 / (1.0 + (2.0 * w).exp());
        let ch = w.cosh();
        let weight = std::f64::consts::FRAC_PI_4 * t.cosh() / (ch * ch);
        if weight == 0.0 || !weight.is_finite() {
            return Ok(0.0);
        }
        let v = f(x, omx);
        if !v.is_finite() {
            // A singular endpoint value with vanishing weight integrates to 0.
            if weight < 1e-280 {
                return Ok(0.0);
            }
            return Err(QuadError::NonFinite { x });
        }
        Ok(v * weight)
    };

    let mut h = 0.9_f64;
    let mut sum = eval(0.0)?;
    {
        let mut k = 1;
        while (k as f64) * h <= T_MAX {
            let t = (k as f64) * h;
            sum += eval(t)? + eval(-t)?;
            k += 1;
        }
    }
    let mut value = sum * h;
    for _level in 0..MAX_LEVEL {
        // Refine: add the midpoints (odd multiples of h/2).
        let h2 = h * 0.5;
        let mut k = 1;
        while (k as f64) * h2 <= T_MAX {
            let t = (k as f64) * h2;
            sum += eval(t)? + eval(-t)?;
            k += 2;
        }
        let new_value = sum * h2;
        let change = (new_value - value).abs();
        value = new_value;
        h = h2;
        if change <= rel_tol * value.abs().max(f64::MIN_POSITIVE) && _level >= 2 {
            return Ok(QuadResult {
                value,
                abs_error: change,
            });
        }
    }
    Err(QuadError::NoConvergence {
        value,
        error: f64::NAN,
    })
}
