//! Instantaneous field diagnostics and time-series post-processing.
//!
//! Purity is `P = 2 pi hbar Int rho^2 dx dp` and the linear (Renyi-2) entropy
//! is `S2 = ln P` (negated sign convention folded into the rate: purity decay
//! makes `-dS2/dt` the entropy production rate). The gradient content
//!
//! ```text
//! chi^2 = Int |grad rho|^2 dx dp / Int rho^2 dx dp
//! ```
//!
//! is evaluated by Parseval sums over half spectra; the momentum-only variant
//! keeps just the d/dp term and is the one entering the production identity
//! `dS2/dt = -2 D chi_p^2` for momentum diffusion.

use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{stable_sum, transpose, WignerField};

/// Relative-residual floor: rates below this are treated as zero when
/// normalizing the production identity.
pub const RATE_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChiVariant {
    /// Both gradient components.
    Full,
    /// Momentum derivative only; pairs with momentum diffusion.
    POnly,
}

/// One sampled row of the evolution time series. `s2_rate` and
/// `identity_residual` are series-level quantities filled by
/// [`finalize_series`]; they are NaN on freshly sampled records.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub purity: f64,
    pub s2: f64,
    pub s2_rate: f64,
    pub chi2_full: f64,
    pub chi2_p: f64,
    pub mean_x: f64,
    pub mean_p: f64,
    pub var_x: f64,
    pub var_p: f64,
    pub mass_residual: f64,
    pub identity_residual: f64,
}

impl DiagnosticsRecord {
    /// Column order used by every CSV writer and reader in the project.
    pub const COLUMNS: [&'static str; 12] = [
        "t",
        "purity",
        "s2",
        "s2_rate",
        "chi2_full",
        "chi2_p",
        "mean_x",
        "mean_p",
        "var_x",
        "var_p",
        "mass_residual",
        "identity_residual",
    ];

    pub fn column_values(&self) -> [f64; 12] {
        [
            self.t,
            self.purity,
            self.s2,
            self.s2_rate,
            self.chi2_full,
            self.chi2_p,
            self.mean_x,
            self.mean_p,
            self.var_x,
            self.var_p,
            self.mass_residual,
            self.identity_residual,
        ]
    }

    /// Inverse of [`column_values`](Self::column_values).
    pub fn from_columns(v: [f64; 12]) -> Self {
        DiagnosticsRecord {
            t: v[0],
            purity: v[1],
            s2: v[2],
            s2_rate: v[3],
            chi2_full: v[4],
            chi2_p: v[5],
            mean_x: v[6],
            mean_p: v[7],
            var_x: v[8],
            var_p: v[9],
            mass_residual: v[10],
            identity_residual: v[11],
        }
    }

    /// A record at time `t` with every other column NaN; synthetic-series
    /// builders fill in what they need.
    pub fn nan_at(t: f64) -> Self {
        let mut v = [f64::NAN; 12];
        v[0] = t;
        Self::from_columns(v)
    }
}

pub fn purity(field: &WignerField, hbar: f64) -> f64 {
    2.0 * std::f64::consts::PI * hbar * field.l2_norm_sq()
}

pub fn entropy_s2(field: &WignerField, hbar: f64) -> Result<f64> {
    let p = purity(field, hbar);
    if !(p > 0.0) {
        return Err(Error::Domain(format!(
            "purity {p} is not positive; S2 undefined"
        )));
    }
    Ok(p.ln())
}

/// Squared-gradient content of the field along p and along x, as the pair
/// `(Int (d rho/dp)^2, Int (d rho/dx)^2)`.
fn gradient_norms(field: &WignerField) -> (f64, f64) {
    let grid = field.grid();
    let spec = *grid.spec();
    let cell = spec.cell_area();
    let mut scratch = vec![Complex64::default(); grid.scratch_len()];

    // Momentum axis: rows are contiguous.
    let mut work = field.values().to_vec();
    let hp = grid.half_len_p();
    let mut spectrum = vec![Complex64::default(); spec.nx * hp];
    grid.forward_p(&mut work, &mut spectrum, &mut scratch);
    let lam = grid.lam_half();
    let p_sum = stable_sum(spectrum.chunks_exact(hp).flat_map(|row| {
        row.iter().enumerate().map(|(l, v)| {
            let w = if l == 0 || l == hp - 1 { 1.0 } else { 2.0 };
            w * lam[l] * lam[l] * v.norm_sqr()
        })
    }));

    // Position axis: transform the transposed layout.
    let mut tr = vec![0.0; spec.num_points()];
    transpose(field.values(), spec.nx, spec.np, &mut tr);
    let hx = grid.half_len_x();
    let mut spectrum_x = vec![Complex64::default(); spec.np * hx];
    grid.forward_x(&mut tr, &mut spectrum_x, &mut scratch);
    let kx = grid.kx_half();
    let x_sum = stable_sum(spectrum_x.chunks_exact(hx).flat_map(|row| {
        row.iter().enumerate().map(|(k, v)| {
            let w = if k == 0 || k == hx - 1 { 1.0 } else { 2.0 };
            w * kx[k] * kx[k] * v.norm_sqr()
        })
    }));

    (
        p_sum * cell / spec.np as f64,
        x_sum * cell / spec.nx as f64,
    )
}

pub fn chi_squared(field: &WignerField, variant: ChiVariant) -> Result<f64> {
    let l2 = field.l2_norm_sq();
    if !(l2 > 0.0) {
        return Err(Error::Domain(
            "chi^2 undefined for a field with vanishing L2 norm".to_string(),
        ));
    }
    let (gp, gx) = gradient_norms(field);
    Ok(match variant {
        ChiVariant::POnly => gp / l2,
        ChiVariant::Full => (gp + gx) / l2,
    })
}

/// First and second moments `(mean_x, mean_p, var_x, var_p)` of the
/// quasi-distribution, normalized by its current mass.
pub fn moments(field: &WignerField) -> (f64, f64, f64, f64) {
    let grid = field.grid();
    let spec = *grid.spec();
    let x = grid.x();
    let p = grid.p();
    let mut m0 = 0.0;
    let mut mx = 0.0;
    let mut mp = 0.0;
    let mut mxx = 0.0;
    let mut mpp = 0.0;
    for ix in 0..spec.nx {
        let row = &field.values()[ix * spec.np..(ix + 1) * spec.np];
        let rs = stable_sum(row.iter().copied());
        let rp = stable_sum(row.iter().zip(p).map(|(v, pi)| v * pi));
        let rpp = stable_sum(row.iter().zip(p).map(|(v, pi)| v * pi * pi));
        m0 += rs;
        mx += rs * x[ix];
        mxx += rs * x[ix] * x[ix];
        mp += rp;
        mpp += rpp;
    }
    let mean_x = mx / m0;
    let mean_p = mp / m0;
    (
        mean_x,
        mean_p,
        mxx / m0 - mean_x * mean_x,
        mpp / m0 - mean_p * mean_p,
    )
}

/// Sample every instantaneous diagnostic of a field. Series-level columns are
/// left NaN for [`finalize_series`].
pub fn sample(field: &WignerField, t: f64, hbar: f64) -> DiagnosticsRecord {
    let mass = field.integrate();
    let l2 = field.l2_norm_sq();
    let pur = 2.0 * std::f64::consts::PI * hbar * l2;
    let (gp, gx) = gradient_norms(field);
    let (mean_x, mean_p, var_x, var_p) = moments(field);
    DiagnosticsRecord {
        t,
        purity: pur,
        s2: if pur > 0.0 { pur.ln() } else { f64::NAN },
        s2_rate: f64::NAN,
        chi2_full: if l2 > 0.0 { (gp + gx) / l2 } else { f64::NAN },
        chi2_p: if l2 > 0.0 { gp / l2 } else { f64::NAN },
        mean_x,
        mean_p,
        var_x,
        var_p,
        mass_residual: (mass - 1.0).abs(),
        identity_residual: f64::NAN,
    }
}

fn check_uniform_times(series: &[DiagnosticsRecord]) -> Result<f64> {
    if series.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 samples for rate estimates, got {}",
            series.len()
        )));
    }
    let tau = series[1].t - series[0].t;
    if !(tau > 0.0) {
        return Err(Error::Alignment("non-increasing sample times".to_string()));
    }
    for w in series.windows(2) {
        let dt = w[1].t - w[0].t;
        if (dt - tau).abs() > 1e-9 * tau.max(1.0) {
            return Err(Error::Alignment(format!(
                "sample interval drifts from {tau} to {dt}; rates need a uniform series"
            )));
        }
    }
    Ok(tau)
}

/// Residual of the production identity `dS2/dt = -2 D chi_p^2`, normalized by
/// `max(|dS2/dt|, RATE_FLOOR)`, for each interior sample.
pub fn identity_residual(series: &[DiagnosticsRecord], d: f64) -> Result<Vec<f64>> {
    let tau = check_uniform_times(series)?;
    Ok((1..series.len() - 1)
        .map(|i| {
            let rate = (series[i + 1].s2 - series[i - 1].s2) / (2.0 * tau);
            (rate + 2.0 * d * series[i].chi2_p).abs() / rate.abs().max(RATE_FLOOR)
        })
        .collect())
}

/// Fill the series-level columns: centered-difference `s2_rate` (one-sided at
/// the ends) and the production-identity residual (NaN at the ends).
pub fn finalize_series(series: &mut [DiagnosticsRecord], d: f64) -> Result<()> {
    let tau = check_uniform_times(series)?;
    let n = series.len();
    for i in 0..n {
        let rate = if i == 0 {
            (series[1].s2 - series[0].s2) / tau
        } else if i == n - 1 {
            (series[n - 1].s2 - series[n - 2].s2) / tau
        } else {
            (series[i + 1].s2 - series[i - 1].s2) / (2.0 * tau)
        };
        series[i].s2_rate = rate;
        series[i].identity_residual = if i == 0 || i == n - 1 {
            f64::NAN
        } else {
            (rate + 2.0 * d * series[i].chi2_p).abs() / rate.abs().max(RATE_FLOOR)
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Grid, GridSpec};
    use crate::states::{gaussian_wigner, GaussianInit};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn default_grid() -> Arc<Grid> {
        Grid::shared(GridSpec::duffing_default()).unwrap()
    }

    fn default_state(hbar: f64) -> WignerField {
        let grid = default_grid();
        gaussian_wigner(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05),
            hbar,
            &grid,
        )
        .unwrap()
    }

    #[test]
    fn gaussian_chi_squared_matches_closed_form() {
        // For a Gaussian, chi^2 = 1/(2 var_x) + 1/(2 var_p); the momentum
        // variant keeps only its term. With var_x = 0.05, hbar = 0.1:
        // var_p = 0.05, so both terms are 10.
        let field = default_state(0.1);
        let full = chi_squared(&field, ChiVariant::Full).unwrap();
        let ponly = chi_squared(&field, ChiVariant::POnly).unwrap();
        assert_relative_eq!(full, 20.0, max_relative = 1e-5);
        assert_relative_eq!(ponly, 10.0, max_relative = 1e-5);
    }

    #[test]
    fn purity_and_entropy_of_pure_and_mixed_states() {
        let field = default_state(0.1);
        assert_relative_eq!(purity(&field, 0.1), 1.0, max_relative = 1e-6);
        assert_relative_eq!(entropy_s2(&field, 0.1).unwrap(), 0.0, epsilon = 1e-6);
        let grid = default_grid();
        let mixed = gaussian_wigner(
            &GaussianInit {
                x0: 1.0,
                p0: 0.0,
                var_x: 0.05,
                var_p: Some(0.2),
            },
            0.1,
            &grid,
        )
        .unwrap();
        assert_relative_eq!(purity(&mixed, 0.1), 0.5, max_relative = 1e-6);
        assert_relative_eq!(
            entropy_s2(&mixed, 0.1).unwrap(),
            0.5f64.ln(),
            max_relative = 1e-5
        );
    }

    #[test]
    fn zero_field_diagnostics_are_domain_errors() {
        let field = WignerField::zeros(default_grid());
        assert!(entropy_s2(&field, 0.1).is_err());
        assert!(chi_squared(&field, ChiVariant::Full).is_err());
    }

    #[test]
    fn moments_of_offset_gaussian() {
        let grid = default_grid();
        let field = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(-0.8, 2.5, 0.08),
            0.2,
            &grid,
        )
        .unwrap();
        let (mx, mp, vx, vp) = moments(&field);
        assert_relative_eq!(mx, -0.8, epsilon = 1e-9);
        assert_relative_eq!(mp, 2.5, epsilon = 1e-9);
        assert_relative_eq!(vx, 0.08, epsilon = 1e-8);
        assert_relative_eq!(vp, 0.04 / (4.0 * 0.08), epsilon = 1e-8);
    }

    #[test]
    fn spectral_gradients_match_finite_differences() {
        // Smooth non-Gaussian field: compare the Parseval gradient norms with
        // high-order central differences on the grid.
        let grid = default_grid();
        let field = WignerField::from_fn(grid.clone(), |x, p| {
            (-(x * x / 3.0 + p * p / 7.0)).exp() * (1.0 + 0.3 * (x * 0.9).sin() * (p * 0.5).cos())
        });
        let spec = *grid.spec();
        let (gp, gx) = gradient_norms(&field);
        let v = field.values();
        let np = spec.np;
        let mut fd_p = 0.0;
        let mut fd_x = 0.0;
        for ix in 0..spec.nx {
            for ip in 0..np {
                let xm = v[((ix + spec.nx - 1) % spec.nx) * np + ip];
                let xp = v[((ix + 1) % spec.nx) * np + ip];
                let xm2 = v[((ix + spec.nx - 2) % spec.nx) * np + ip];
                let xp2 = v[((ix + 2) % spec.nx) * np + ip];
                let dvdx = (8.0 * (xp - xm) - (xp2 - xm2)) / (12.0 * spec.dx());
                let pm = v[ix * np + (ip + np - 1) % np];
                let pp = v[ix * np + (ip + 1) % np];
                let pm2 = v[ix * np + (ip + np - 2) % np];
                let pp2 = v[ix * np + (ip + 2) % np];
                let dvdp = (8.0 * (pp - pm) - (pp2 - pm2)) / (12.0 * spec.dp());
                fd_x += dvdx * dvdx;
                fd_p += dvdp * dvdp;
            }
        }
        fd_x *= spec.cell_area();
        fd_p *= spec.cell_area();
        assert_relative_eq!(gx, fd_x, max_relative = 1e-4);
        assert_relative_eq!(gp, fd_p, max_relative = 1e-4);
    }

    #[test]
    fn finalize_recovers_exponential_rate() {
        // Synthetic series S2 = -0.3 t with chi2_p chosen to satisfy the
        // production identity for D = 0.01 exactly.
        let d = 0.01;
        let lam = 0.3;
        let mut series: Vec<DiagnosticsRecord> = (0..50)
            .map(|i| {
                let t = i as f64 * 0.1;
                let mut rec = DiagnosticsRecord {
                    t,
                    purity: (-lam * t).exp(),
                    s2: -lam * t,
                    s2_rate: f64::NAN,
                    chi2_full: f64::NAN,
                    chi2_p: lam / (2.0 * d),
                    mean_x: 0.0,
                    mean_p: 0.0,
                    var_x: 0.0,
                    var_p: 0.0,
                    mass_residual: 0.0,
                    identity_residual: f64::NAN,
                };
                rec.chi2_full = rec.chi2_p;
                rec
            })
            .collect();
        finalize_series(&mut series, d).unwrap();
        for rec in &series[1..49] {
            assert_relative_eq!(rec.s2_rate, -lam, epsilon = 1e-12);
            assert!(rec.identity_residual < 1e-12);
        }
        assert!(series[0].identity_residual.is_nan());
        let res = identity_residual(&series, d).unwrap();
        assert_eq!(res.len(), 48);
        assert!(res.iter().all(|r| *r < 1e-12));
    }

    #[test]
    fn nonuniform_series_is_rejected() {
        let mut series: Vec<DiagnosticsRecord> = (0..5)
            .map(|i| {
                let t = (i as f64) * 0.1;
                DiagnosticsRecord {
                    t: if i == 3 { t + 0.05 } else { t },
                    purity: 1.0,
                    s2: 0.0,
                    s2_rate: f64::NAN,
                    chi2_full: 0.0,
                    chi2_p: 0.0,
                    mean_x: 0.0,
                    mean_p: 0.0,
                    var_x: 0.0,
                    var_p: 0.0,
                    mass_residual: 0.0,
                    identity_residual: f64::NAN,
                }
            })
            .collect();
        assert!(identity_residual(&series, 0.1).is_err());
        assert!(finalize_series(&mut series, 0.1).is_err());
        assert!(finalize_series(&mut series[..2], 0.1).is_err());
    }
}
