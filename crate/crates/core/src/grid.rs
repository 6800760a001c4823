//! Uniform radial grids carrying the measure ω_{n-1} ρ^{n-1} dρ with exact
//! cell volumes, a conservative finite-volume radial Laplacian, and a
//! symmetric banded Cholesky solver.
//!
//! Boundary conventions: the inner face of the center cell has zero area, so
//! u'(0) = 0 is built in; the outer boundary is clamped, u(ρ_max) = 0 with a
//! mirror ghost node enforcing u'(ρ_max) = 0.

use crate::constants::DimensionSpec;
use serde::Serialize;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs at least {min} cells, got {cells}")]
    TooCoarse { cells: usize, min: usize },
    #[error("rho_max must be positive, got {rho_max}")]
    BadExtent { rho_max: f64 },
    #[error("field length {len} does not match grid with {nodes} nodes")]
    LengthMismatch { len: usize, nodes: usize },
    #[error("matrix is not positive definite (pivot {pivot:.3e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
}

#[derive(Debug)]
pub struct RadialGrid {
    dim: DimensionSpec,
    rho_max: f64,
    h: f64,
    nodes: Vec<f64>,
    cell_volumes: Vec<f64>,
    face_areas: Vec<f64>, // A_{i+1/2} for i = 0..cells, last entry is the ghost face
}

impl RadialGrid {
    pub fn uniform(dim: DimensionSpec, rho_max: f64, cells: usize) -> Result<Arc<Self>, GridError> {
        if !(rho_max > 0.0) {
            return Err(GridError::BadExtent { rho_max });
        }
        if cells < 8 {
            return Err(GridError::TooCoarse { cells, min: 8 });
        }
        let n = dim.n() as f64;
        let omega = dim.omega();
        let h = rho_max / cells as f64;
        let nodes: Vec<f64> = (0..=cells).map(|i| i as f64 * h).collect();
        let shell = |a: f64, b: f64| omega * (b.powf(n) - a.powf(n)) / n;
        let mut cell_volumes = Vec::with_capacity(cells + 1);
        for (i, &rho) in nodes.iter().enumerate() {
            let lo = if i == 0 { 0.0 } else { rho - 0.5 * h };
            let hi = if i == cells { rho_max } else { rho + 0.5 * h };
            cell_volumes.push(shell(lo, hi));
        }
        let face_areas: Vec<f64> = (0..=cells)
            .map(|i| omega * (nodes[i] + 0.5 * h).powf(n - 1.0))
            .collect();
        Ok(Arc::new(RadialGrid {
            dim,
            rho_max,
            h,
            nodes,
            cell_volumes,
            face_areas,
        }))
    }

    pub fn dim(&self) -> &DimensionSpec {
        &self.dim
    }

    pub fn rho_max(&self) -> f64 {
        self.rho_max
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of genuine unknowns (the clamped boundary node is excluded).
    pub fn n_unknowns(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn cell_volumes(&self) -> &[f64] {
        &self.cell_volumes
    }

    /// Face area A_{i+1/2}; index `cells` addresses the mirror ghost face.
    pub fn face_areas(&self) -> &[f64] {
        &self.face_areas
    }

    /// Volume of the shell between consecutive nodes (the face-centered cell).
    pub fn face_volume(&self, i: usize) -> f64 {
        let n = self.dim.n() as f64;
        self.dim.omega() * (self.nodes[i + 1].powf(n) - self.nodes[i].powf(n)) / n
    }

    /// Σ V_i g_i — midpoint integration against the radial measure.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values
            .iter()
            .zip(&self.cell_volumes)
            .map(|(g, v)| g * v)
            .sum()
    }

    /// Conservative radial Laplacian with the clamped-boundary ghost row.
    /// `u` spans all nodes; the caller maintains u[last] = 0.
    pub fn apply_laplacian(&self, u: &[f64]) -> Vec<f64> {
        let m = self.nodes.len() - 1;
        assert_eq!(u.len(), m + 1);
        let h = self.h;
        let mut out = vec![0.0; m + 1];
        for i in 0..=m {
            let flux_out = if i == m {
                // ghost mirror: u_{m+1} = u_{m-1}
                self.face_areas[m] * (u[m - 1] - u[m]) / h
            } else {
                self.face_areas[i] * (u[i + 1] - u[i]) / h
            };
            let flux_in = if i == 0 {
                0.0
            } else {
                self.face_areas[i - 1] * (u[i] - u[i - 1]) / h
            };
            out[i] = -(flux_out - flux_in) / self.cell_volumes[i];
        }
        out
    }
}

/// A field sampled at the grid nodes. The outer node is the clamped boundary
/// and is held at zero by every operation that constructs fields.
#[derive(Debug, Clone, Serialize)]
pub struct RadialField {
    #[serde(skip)]
    grid: Arc<RadialGrid>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn zeros(grid: &Arc<RadialGrid>) -> Self {
        RadialField {
            grid: grid.clone(),
            values: vec![0.0; grid.n_nodes()],
        }
    }

    pub fn from_fn(grid: &Arc<RadialGrid>, f: impl Fn(f64) -> f64) -> Self {
        let mut values: Vec<f64> = grid.nodes().iter().map(|&r| f(r)).collect();
        *values.last_mut().expect("grid has nodes") = 0.0;
        RadialField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn from_values(grid: &Arc<RadialGrid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n_nodes() {
            return Err(GridError::LengthMismatch {
                len: values.len(),
                nodes: grid.n_nodes(),
            });
        }
        let mut values = values;
        *values.last_mut().expect("nonempty") = 0.0;
        Ok(RadialField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn grid(&self) -> &Arc<RadialGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn scale_in_place(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }
}

/// Symmetric banded matrix in lower-diagonal storage:
/// `diag[k][i]` holds A[i+k][i] for offsets k = 0..=bw.
#[derive(Debug, Clone)]
pub struct SymBanded {
    pub n: usize,
    pub bw: usize,
    diags: Vec<Vec<f64>>,
}

impl SymBanded {
    pub fn zeros(n: usize, bw: usize) -> Self {
        SymBanded {
            n,
            bw,
            diags: (0..=bw).map(|k| vec![0.0; n.saturating_sub(k)]) .collect(),
        }
    }

    /// Accumulate A[i][j] += v (and its mirror), |i-j| ≤ bw.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        debug_assert!(k <= self.bw, "entry ({i},{j}) outside bandwidth {}", self.bw);
        self.diags[k][lo] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let k = hi - lo;
        if k > self.bw || hi >= self.n {
            0.0
        } else {
            self.diags[k][lo]
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            y[i] += self.diags[0][i] * x[i];
        }
        for k in 1..=self.bw {
            for i in 0..self.n.saturating_sub(k) {
                let v = self.diags[k][i];
                y[i + k] += v * x[i];
                y[i] += v * x[i + k];
            }
        }
        y
    }

    /// Nonzero entries of row i as (column, value).
    pub fn row_entries(&self, i: usize) -> Vec<(usize, f64)> {
        let mut out = Vec::with_capacity(2 * self.bw + 1);
        for k in (1..=self.bw).rev() {
            if i >= k {
                out.push((i - k, self.diags[k][i - k]));
            }
        }
        out.push((i, self.diags[0][i]));
        for k in 1..=self.bw {
            if i + k < self.n {
                out.push((i + k, self.diags[k][i]));
            }
        }
        out
    }

    /// Banded LLᵀ factorization.
    pub fn cholesky(&self) -> Result<BandedChol, GridError> {
        let n = self.n;
        let bw = self.bw;
        let mut l = self.diags.clone();
        for j in 0..n {
            let mut d = l[0][j];
            let start = j.saturating_sub(bw);
            for p in start..j {
                let lj = l[j - p][p];
                d -= lj * lj;
            }
            if !(d > 0.0) {
                return Err(GridError::NotPositiveDefinite { row: j, pivot: d });
            }
            let d = d.sqrt();
            l[0][j] = d;
            let end = (j + bw).min(n - 1);
            for i in j + 1..=end {
                let mut s = l[i - j][j];
                let start = i.saturating_sub(bw).max(0);
                for p in start..j {
                    if i - p <= bw {
                        s -= l[i - p][p] * l[j - p][p];
                    }
                }
                l[i - j][j] = s / d;
            }
        }
        Ok(BandedChol { n, bw, l })
    }
}

/// General banded matrix with partial-pivoting LU, for symmetric indefinite
/// Newton systems the Cholesky path cannot factor. Rows carry flexible
/// (start, window) storage so pivot swaps stay cheap; fill-in from partial
/// pivoting is bounded by kl extra upper diagonals.
#[derive(Debug, Clone)]
pub struct BandedLU {
    n: usize,
    kl: usize,
    rows: Vec<(usize, Vec<f64>)>,
    /// pivot chosen at elimination step k (row slot swapped with k)
    pivots: Vec<usize>,
}

impl BandedLU {
    /// Builds from a symmetric banded matrix plus a diagonal shift:
    /// A = sym + diag(shift).
    pub fn from_sym_with_diag(sym: &SymBanded, shift: &[f64]) -> Self {
        let n = sym.n;
        let kl = sym.bw;
        let width = 3 * kl + 1;
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let start = i.saturating_sub(kl);
            let mut w = vec![0.0; width];
            for j in start..(i + kl + 1).min(n) {
                w[j - start] = sym.get(i, j) + if i == j { shift[i] } else { 0.0 };
            }
            rows.push((start, w));
        }
        BandedLU {
            n,
            kl,
            rows,
            pivots: Vec::new(),
        }
    }

    fn entry(&self, slot: usize, col: usize) -> f64 {
        let (start, w) = &self.rows[slot];
        if col < *start || col >= *start + w.len() {
            0.0
        } else {
            w[col - *start]
        }
    }

    fn entry_mut(&mut self, slot: usize, col: usize) -> &mut f64 {
        let (start, w) = &mut self.rows[slot];
        debug_assert!(col >= *start, "write left of window (slot {slot}, col {col})");
        // Pivot swaps can push a row a few slots down; grow right on demand.
        if col - *start >= w.len() {
            w.resize(col - *start + 1, 0.0);
        }
        &mut w[col - *start]
    }

    /// In-place LU with partial pivoting. Fails only on exact singularity.
    pub fn factor(mut self) -> Result<Self, GridError> {
        let n = self.n;
        let kl = self.kl;
        self.pivots = Vec::with_capacity(n);
        for k in 0..n {
            let hi = (k + kl).min(n - 1);
            let piv = (k..=hi)
                .max_by(|&a, &b| self.entry(a, k).abs().total_cmp(&self.entry(b, k).abs()))
                .expect("nonempty pivot range");
            if self.entry(piv, k) == 0.0 {
                return Err(GridError::NotPositiveDefinite {
                    row: k,
                    pivot: 0.0,
                });
            }
            self.pivots.push(piv);
            if piv != k {
                self.rows.swap(k, piv);
            }
            let pivot_val = self.entry(k, k);
            let jmax = {
                let (start, w) = &self.rows[k];
                (*start + w.len() - 1).min(n - 1)
            };
            for r in k + 1..=hi {
                let f = self.entry(r, k) / pivot_val;
                if f != 0.0 {
                    for j in k..=jmax {
                        let v = self.entry(k, j);
                        if v != 0.0 {
                            *self.entry_mut(r, j) -= f * v;
                        }
                    }
                }
                *self.entry_mut(r, k) = f; // store the multiplier
            }
        }
        Ok(self)
    }

    /// Row swaps during factorization carry the stored multipliers along
    /// (dense-getrf semantics), so the solve applies every interchange first
    /// and then runs row-oriented unit-lower / upper sweeps over the final
    /// stored windows.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let n = self.n;
        let mut x = b.to_vec();
        for (k, &piv) in self.pivots.iter().enumerate() {
            if piv != k {
                x.swap(k, piv);
            }
        }
        for r in 0..n {
            let (start, w) = &self.rows[r];
            let mut s = x[r];
            for j in *start..r.min(*start + w.len()) {
                s -= w[j - *start] * x[j];
            }
            x[r] = s;
        }
        for r in (0..n).rev() {
            let (start, w) = &self.rows[r];
            let jmax = (*start + w.len() - 1).min(n - 1);
            let mut s = x[r];
            for j in r + 1..=jmax {
                s -= self.entry(r, j) * x[j];
            }
            x[r] = s / self.entry(r, r);
        }
        x
    }
}

#[derive(Debug, Clone)]
pub struct BandedChol {
    n: usize,
    bw: usize,
    l: Vec<Vec<f64>>,
}

impl BandedChol {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y = b.to_vec();
        // Forward: L y = b
        for i in 0..self.n {
            let start = i.saturating_sub(self.bw);
            let mut s = y[i];
            for p in start..i {
                s -= self.l[i - p][p] * y[p];
            }
            y[i] = s / self.l[0][i];
        }
        // Backward: Lᵀ x = y
        for i in (0..self.n).rev() {
            let end = (i + self.bw).min(self.n - 1);
            let mut s = y[i];
            for r in i + 1..=end {
                s -= self.l[r - i][i] * y[r];
            }
            y[i] = s / self.l[0][i];
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid6(cells: usize) -> Arc<RadialGrid> {
        RadialGrid::uniform(DimensionSpec::new(6).unwrap(), 1.0, cells).unwrap()
    }

    #[test]
    fn cell_volumes_sum_to_ball_volume() {
        let g = grid6(128);
        let total: f64 = g.cell_volumes().iter().sum();
        let exact = g.dim().omega() / 6.0; // ω ∫_0^1 ρ^5 dρ
        assert!((total - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn integrate_polynomial() {
        let g = grid6(512);
        let vals: Vec<f64> = g.nodes().iter().map(|&r| r * r).collect();
        let exact = g.dim().omega() / 8.0; // ω ∫_0^1 ρ^7 dρ
        let got = g.integrate(&vals);
        assert!((got - exact).abs() < 2e-4 * exact, "got {got}, want {exact}");
    }

    #[test]
    fn laplacian_matches_symbolic_interior() {
        // Δ(ρ² - stuff) under the geometer convention; n = 6: Δρ² = -12.
        let g = grid6(256);
        let u: Vec<f64> = g.nodes().iter().map(|&r| r * r).collect();
        let lap = g.apply_laplacian(&u);
        for i in 2..g.n_nodes() - 2 {
            assert!(
                (lap[i] + 12.0).abs() < 1e-6,
                "node {i}: {} vs -12",
                lap[i]
            );
        }
    }

    #[test]
    fn laplacian_self_adjoint_in_cell_volumes() {
        let g = grid6(64);
        let m = g.n_nodes() - 1;
        let mut u: Vec<f64> = g.nodes().iter().map(|&r| (3.1 * r).sin()).collect();
        let mut v: Vec<f64> = g.nodes().iter().map(|&r| (2.0 - r) * r * r).collect();
        u[m] = 0.0;
        v[m] = 0.0;
        let lu = g.apply_laplacian(&u);
        let lv = g.apply_laplacian(&v);
        let vol = g.cell_volumes();
        let a: f64 = (0..=m).map(|i| vol[i] * lu[i] * v[i]).sum();
        let b: f64 = (0..=m).map(|i| vol[i] * u[i] * lv[i]).sum();
        assert!(
            (a - b).abs() < 1e-10 * a.abs().max(b.abs()).max(1.0),
            "asymmetry: {a} vs {b}"
        );
    }

    #[test]
    fn banded_cholesky_solves() {
        let n = 40;
        let mut a = SymBanded::zeros(n, 2);
        for i in 0..n {
            a.add(i, i, 4.0 + (i as f64 * 0.37).sin().abs());
            if i + 1 < n {
                a.add(i + 1, i, -1.2);
            }
            if i + 2 < n {
                a.add(i + 2, i, 0.3);
            }
        }
        let x_true: Vec<f64> = (0..n).map(|i| ((i * 7 % 13) as f64) - 6.0).collect();
        let b = a.apply(&x_true);
        let x = a.cholesky().unwrap().solve(&b);
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-10, "row {i}");
        }
    }

    #[test]
    fn banded_lu_solves_indefinite_system() {
        let n = 60;
        let mut a = SymBanded::zeros(n, 3);
        for i in 0..n {
            // Sign-alternating diagonal makes this firmly indefinite.
            a.add(i, i, if i % 3 == 0 { -2.5 } else { 3.0 } + 0.1 * (i as f64 * 0.7).sin());
            if i + 1 < n {
                a.add(i + 1, i, 1.1);
            }
            if i + 3 < n {
                a.add(i + 3, i, -0.4);
            }
        }
        let shift: Vec<f64> = (0..n).map(|i| 0.05 * (i as f64 * 1.3).cos()).collect();
        let x_true: Vec<f64> = (0..n).map(|i| ((i * 11 % 17) as f64) - 8.0).collect();
        let mut b = a.apply(&x_true);
        for i in 0..n {
            b[i] += shift[i] * x_true[i];
        }
        let lu = BandedLU::from_sym_with_diag(&a, &shift).factor().unwrap();
        let x = lu.solve(&b);
        for i in 0..n {
            assert!((x[i] - x_true[i]).abs() < 1e-9, "row {i}: {} vs {}", x[i], x_true[i]);
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let mut a = SymBanded::zeros(4, 1);
        for i in 0..4 {
            a.add(i, i, -1.0);
        }
        assert!(matches!(
            a.cholesky(),
            Err(GridError::NotPositiveDefinite { .. })
        ));
    }
}
