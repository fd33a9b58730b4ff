//! Phase-space grid, spectral wavenumber tables, and discretized Wigner fields.
//!
//! Fields are stored row-major as `values[ix * np + ip]`, so transforms along
//! the momentum axis run on contiguous rows and transforms along the position
//! axis run on a transposed scratch buffer. Both axes are periodic and all
//! spectral work uses real-to-complex half spectra; the field therefore stays
//! real by construction.

use std::sync::Arc;

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discretized phase-space box. Endpoints are cell edges: `x` samples start at
/// `x_min` and stop one spacing short of `x_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub np: usize,
    pub x_min: f64,
    pub x_max: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl GridSpec {
    /// Domain that comfortably contains the driven double-well dynamics for
    /// the standard parameter set.
    pub fn duffing_default() -> Self {
        GridSpec {
            nx: 256,
            np: 256,
            x_min: -6.0,
            x_max: 6.0,
            p_min: -16.0,
            p_max: 16.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("grid.nx", self.nx), ("grid.np", self.np)] {
            if !n.is_power_of_two() || n < 32 {
                return Err(Error::Config(format!(
                    "{name} must be a power of two >= 32, got {n}"
                )));
            }
        }
        for (name, lo, hi) in [
            ("x", self.x_min, self.x_max),
            ("p", self.p_min, self.p_max),
        ] {
            if !lo.is_finite() || !hi.is_finite() || !(hi > lo) {
                return Err(Error::Config(format!(
                    "grid.{name}_min..{name}_max must be a finite increasing range, got {lo}..{hi}"
                )));
            }
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / self.nx as f64
    }

    pub fn dp(&self) -> f64 {
        (self.p_max - self.p_min) / self.np as f64
    }

    /// Quadrature weight of one cell.
    pub fn cell_area(&self) -> f64 {
        self.dx() * self.dp()
    }

    pub fn num_points(&self) -> usize {
        self.nx * self.np
    }
}

/// Angular wavenumbers in DFT bin order (non-negative bins first, then the
/// negative branch). `kx` is conjugate to `x`, `lam` to `p`.
#[derive(Debug, Clone)]
pub struct SpectralTables {
    pub kx: Vec<f64>,
    pub lam: Vec<f64>,
}

fn dft_wavenumbers(n: usize, spacing: f64) -> Vec<f64> {
    let dk = 2.0 * std::f64::consts::PI / (n as f64 * spacing);
    (0..n)
        .map(|j| {
            let m = if j < n / 2 { j as i64 } else { j as i64 - n as i64 };
            m as f64 * dk
        })
        .collect()
}

/// Half-spectrum wavenumbers `0..=n/2` as produced by a real-to-complex
/// transform; the last entry is the (positive) Nyquist wavenumber.
fn half_wavenumbers(n: usize, spacing: f64) -> Vec<f64> {
    let dk = 2.0 * std::f64::consts::PI / (n as f64 * spacing);
    (0..=n / 2).map(|j| j as f64 * dk).collect()
}

/// Grid geometry plus the FFT plans shared by every field living on it.
pub struct Grid {
    spec: GridSpec,
    tables: SpectralTables,
    x: Vec<f64>,
    p: Vec<f64>,
    kx_half: Vec<f64>,
    lam_half: Vec<f64>,
    r2c_x: Arc<dyn RealToComplex<f64>>,
    c2r_x: Arc<dyn ComplexToReal<f64>>,
    r2c_p: Arc<dyn RealToComplex<f64>>,
    c2r_p: Arc<dyn ComplexToReal<f64>>,
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Grid> {
        spec.validate()?;
        let mut planner = RealFftPlanner::<f64>::new();
        let x = (0..spec.nx)
            .map(|i| spec.x_min + i as f64 * spec.dx())
            .collect();
        let p = (0..spec.np)
            .map(|i| spec.p_min + i as f64 * spec.dp())
            .collect();
        Ok(Grid {
            tables: SpectralTables {
                kx: dft_wavenumbers(spec.nx, spec.dx()),
                lam: dft_wavenumbers(spec.np, spec.dp()),
            },
            x,
            p,
            kx_half: half_wavenumbers(spec.nx, spec.dx()),
            lam_half: half_wavenumbers(spec.np, spec.dp()),
            r2c_x: planner.plan_fft_forward(spec.nx),
            c2r_x: planner.plan_fft_inverse(spec.nx),
            r2c_p: planner.plan_fft_forward(spec.np),
            c2r_p: planner.plan_fft_inverse(spec.np),
            spec,
        })
    }

    pub fn shared(spec: GridSpec) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::new(spec)?))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn tables(&self) -> &SpectralTables {
        &self.tables
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Wavenumbers conjugate to `x` for half-spectrum rows, length `nx/2 + 1`.
    pub fn kx_half(&self) -> &[f64] {
        &self.kx_half
    }

    /// Wavenumbers conjugate to `p` for half-spectrum rows, length `np/2 + 1`.
    pub fn lam_half(&self) -> &[f64] {
        &self.lam_half
    }

    pub(crate) fn half_len_x(&self) -> usize {
        self.spec.nx / 2 + 1
    }

    pub(crate) fn half_len_p(&self) -> usize {
        self.spec.np / 2 + 1
    }

    pub(crate) fn scratch_len(&self) -> usize {
        self.r2c_x
            .get_scratch_len()
            .max(self.c2r_x.get_scratch_len())
            .max(self.r2c_p.get_scratch_len())
            .max(self.c2r_p.get_scratch_len())
    }

    /// Forward transform along `p` of every row. `real` is consumed as
    /// scratch. Output layout: `spec[ix * (np/2+1) + il]`. Unnormalized.
    pub(crate) fn forward_p(
        &self,
        real: &mut [f64],
        out: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        let np = self.spec.np;
        let hl = self.half_len_p();
        for (row, srow) in real.chunks_exact_mut(np).zip(out.chunks_exact_mut(hl)) {
            self.r2c_p
                .process_with_scratch(row, srow, scratch)
                .expect("forward p transform");
        }
    }

    /// Inverse of [`forward_p`]; consumes `spec` as scratch and leaves the
    /// caller to apply the 1/np normalization (or fold it into multipliers).
    pub(crate) fn inverse_p(
        &self,
        spec: &mut [Complex64],
        out: &mut [f64],
        scratch: &mut [Complex64],
    ) {
        let np = self.spec.np;
        let hl = self.half_len_p();
        for (srow, row) in spec.chunks_exact_mut(hl).zip(out.chunks_exact_mut(np)) {
            // The inverse requires purely real DC/Nyquist bins; roundoff can
            // leave them infinitesimally complex.
            srow[0].im = 0.0;
            srow[hl - 1].im = 0.0;
            self.c2r_p
                .process_with_scratch(srow, row, scratch)
                .expect("inverse p transform");
        }
    }

    /// Forward transform along `x`. Operates on the transposed layout
    /// `real[ip * nx + ix]`, consumed as scratch. Unnormalized.
    pub(crate) fn forward_x(
        &self,
        real: &mut [f64],
        out: &mut [Complex64],
        scratch: &mut [Complex64],
    ) {
        let nx = self.spec.nx;
        let hl = self.half_len_x();
        for (row, srow) in real.chunks_exact_mut(nx).zip(out.chunks_exact_mut(hl)) {
            self.r2c_x
                .process_with_scratch(row, srow, scratch)
                .expect("forward x transform");
        }
    }

    pub(crate) fn inverse_x(
        &self,
        spec: &mut [Complex64],
        out: &mut [f64],
        scratch: &mut [Complex64],
    ) {
        let nx = self.spec.nx;
        let hl = self.half_len_x();
        for (srow, row) in spec.chunks_exact_mut(hl).zip(out.chunks_exact_mut(nx)) {
            srow[0].im = 0.0;
            srow[hl - 1].im = 0.0;
            self.c2r_x
                .process_with_scratch(srow, row, scratch)
                .expect("inverse x transform");
        }
    }
}

/// Cache-blocked transpose of an `rows x cols` matrix into `dst` (`cols x rows`).
pub(crate) fn transpose(src: &[f64], rows: usize, cols: usize, dst: &mut [f64]) {
    debug_assert_eq!(src.len(), rows * cols);
    debug_assert_eq!(dst.len(), rows * cols);
    const B: usize = 32;
    let mut r0 = 0;
    while r0 < rows {
        let r1 = (r0 + B).min(rows);
        let mut c0 = 0;
        while c0 < cols {
            let c1 = (c0 + B).min(cols);
            for r in r0..r1 {
                for c in c0..c1 {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
            c0 = c1;
        }
        r0 = r1;
    }
}

/// Two-level blocked summation: accurate enough that quadrature roundoff
/// stays far below the 1e-10 per-step mass budget, and fully deterministic.
pub(crate) fn stable_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut block = 0.0f64;
    let mut blocks = Vec::with_capacity(64);
    let mut n = 0usize;
    for v in values {
        block += v;
        n += 1;
        if n == 4096 {
            blocks.push(block);
            block = 0.0;
            n = 0;
        }
    }
    blocks.push(block);
    blocks.iter().sum()
}

/// Real Wigner quasi-distribution sampled on a shared grid.
#[derive(Clone)]
pub struct WignerField {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl std::fmt::Debug for WignerField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WignerField")
            .field("spec", self.grid.spec())
            .finish_non_exhaustive()
    }
}

impl WignerField {
    pub fn zeros(grid: Arc<Grid>) -> WignerField {
        let n = grid.spec().num_points();
        WignerField {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: Arc<Grid>, mut f: impl FnMut(f64, f64) -> f64) -> WignerField {
        let spec = *grid.spec();
        let mut values = Vec::with_capacity(spec.num_points());
        for ix in 0..spec.nx {
            let x = grid.x[ix];
            for ip in 0..spec.np {
                values.push(f(x, grid.p[ip]));
            }
        }
        WignerField { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn idx(&self, ix: usize, ip: usize) -> usize {
        ix * self.grid.spec().np + ip
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }

    /// Total mass under the trapezoid-free periodic quadrature (all cells
    /// carry equal weight on a periodic box).
    pub fn integrate(&self) -> f64 {
        stable_sum(self.values.iter().copied()) * self.grid.spec().cell_area()
    }

    pub fn l2_norm_sq(&self) -> f64 {
        stable_sum(self.values.iter().map(|v| v * v)) * self.grid.spec().cell_area()
    }

    /// L2 distance between two fields on the same grid.
    pub fn l2_distance(&self, other: &WignerField) -> Result<f64> {
        if self.grid.spec() != other.grid.spec() {
            return Err(Error::Alignment(
                "fields live on different grids".to_string(),
            ));
        }
        let sq = stable_sum(
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| (a - b) * (a - b)),
        ) * self.grid.spec().cell_area();
        Ok(sq.max(0.0).sqrt())
    }

    /// Absolute mass inside the outermost 5% band of the domain on each axis.
    /// Used to detect states that are about to collide with the periodic
    /// boundary.
    pub fn tail_band_mass(&self) -> f64 {
        let spec = self.grid.spec();
        let bx = (spec.nx as f64 * 0.05).ceil() as usize;
        let bp = (spec.np as f64 * 0.05).ceil() as usize;
        let mut acc = 0.0;
        for ix in 0..spec.nx {
            let edge_x = ix < bx || ix >= spec.nx - bx;
            let row = &self.values[ix * spec.np..(ix + 1) * spec.np];
            if edge_x {
                acc += stable_sum(row.iter().map(|v| v.abs()));
            } else {
                acc += stable_sum(row[..bp].iter().map(|v| v.abs()));
                acc += stable_sum(row[spec.np - bp..].iter().map(|v| v.abs()));
            }
        }
        acc * spec.cell_area()
    }
}
