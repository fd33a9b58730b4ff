//! Gaussian Wigner state preparation.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, WignerField};

/// Gaussian initial condition. When `var_p` is `None` the momentum variance
/// is fixed by minimum uncertainty, `var_p = hbar^2 / (4 var_x)`, giving a
/// pure coherent-squeezed state; an explicit `var_p` describes a mixed state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianInit {
    pub x0: f64,
    pub p0: f64,
    pub var_x: f64,
    #[serde(default)]
    pub var_p: Option<f64>,
}

impl GaussianInit {
    pub fn minimum_uncertainty(x0: f64, p0: f64, var_x: f64) -> Self {
        GaussianInit {
            x0,
            p0,
            var_x,
            var_p: None,
        }
    }

    /// Momentum variance actually used at the given hbar.
    pub fn resolved_var_p(&self, hbar: f64) -> f64 {
        self.var_p
            .unwrap_or(hbar * hbar / (4.0 * self.var_x))
    }

    pub fn validate(&self, hbar: f64) -> Result<()> {
        if !(self.var_x > 0.0) || !self.var_x.is_finite() {
            return Err(Error::Init(format!(
                "initial.var_x must be finite and positive, got {}",
                self.var_x
            )));
        }
        if !self.x0.is_finite() || !self.p0.is_finite() {
            return Err(Error::Init("initial centroid must be finite".to_string()));
        }
        let vp = self.resolved_var_p(hbar);
        if !(vp > 0.0) || !vp.is_finite() {
            return Err(Error::Init(format!(
                "initial.var_p must resolve finite and positive, got {vp}"
            )));
        }
        Ok(())
    }
}

/// Sample the Gaussian Wigner function on a grid and renormalize to unit
/// discrete mass.
///
/// Rejects states the grid cannot carry: either standard deviation below one
/// grid spacing (aliasing would corrupt the purity at the 1e-4 level) or a
/// tail mass above 1e-8 in the outermost 5% band (the periodic boundary would
/// fold the state onto itself).
pub fn gaussian_wigner(init: &GaussianInit, hbar: f64, grid: &Arc<Grid>) -> Result<WignerField> {
    if !(hbar > 0.0) || !hbar.is_finite() {
        return Err(Error::Init(format!(
            "hbar must be finite and positive, got {hbar}"
        )));
    }
    init.validate(hbar)?;
    let var_x = init.var_x;
    let var_p = init.resolved_var_p(hbar);
    let (sx, sp) = (var_x.sqrt(), var_p.sqrt());
    let spec = grid.spec();
    if sx < spec.dx() {
        return Err(Error::Init(format!(
            "sigma_x = {sx:.4} under-resolved by dx = {:.4}; refine grid.nx or widen the state",
            spec.dx()
        )));
    }
    if sp < spec.dp() {
        return Err(Error::Init(format!(
            "sigma_p = {sp:.4} under-resolved by dp = {:.4}; refine grid.np or widen the state",
            spec.dp()
        )));
    }

    let norm = 1.0 / (2.0 * std::f64::consts::PI * sx * sp);
    let mut field = WignerField::from_fn(grid.clone(), |x, p| {
        let ex = (x - init.x0) * (x - init.x0) / (2.0 * var_x);
        let ep = (p - init.p0) * (p - init.p0) / (2.0 * var_p);
        norm * (-(ex + ep)).exp()
    });

    let tail = field.tail_band_mass();
    if tail >= 1e-8 {
        return Err(Error::Init(format!(
            "initial state leaks {tail:.3e} of its mass into the outer 5% band; enlarge the domain"
        )));
    }
    let mass = field.integrate();
    if !(mass > 0.0) {
        return Err(Error::Init("initial state has no mass on the grid".to_string()));
    }
    field.scale(1.0 / mass);
    Ok(field)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use approx::assert_relative_eq;

    fn default_grid() -> Arc<Grid> {
        Grid::shared(GridSpec::duffing_default()).unwrap()
    }

    #[test]
    fn default_state_is_unit_mass_and_pure() {
        let grid = default_grid();
        let init = GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05);
        // All hbar values of the scaling study must initialize cleanly on the
        // default box.
        for &hbar in &[0.004f64.sqrt(), 0.1, 0.2, 0.5, 1.0] {
            let field = gaussian_wigner(&init, hbar, &grid).unwrap();
            assert_relative_eq!(field.integrate(), 1.0, epsilon = 1e-13);
            let purity = 2.0 * std::f64::consts::PI * hbar * field.l2_norm_sq();
            assert!(
                (purity - 1.0).abs() < 1e-4,
                "purity {purity} off at hbar {hbar}"
            );
        }
    }

    #[test]
    fn minimum_uncertainty_product_holds() {
        let init = GaussianInit::minimum_uncertainty(0.0, 0.0, 0.05);
        let hbar = 0.1;
        let prod = init.var_x * init.resolved_var_p(hbar);
        assert_relative_eq!(prod, hbar * hbar / 4.0, epsilon = 1e-12 * hbar * hbar);
    }

    #[test]
    fn explicit_var_p_describes_a_mixed_state() {
        let grid = default_grid();
        let hbar = 0.1;
        let mut init = GaussianInit::minimum_uncertainty(0.0, 0.0, 0.05);
        init.var_p = Some(4.0 * init.resolved_var_p(hbar));
        let field = gaussian_wigner(&init, hbar, &grid).unwrap();
        let purity = 2.0 * std::f64::consts::PI * hbar * field.l2_norm_sq();
        assert_relative_eq!(purity, 0.5, epsilon = 1e-4);
    }

    #[test]
    fn grid_moments_match_request() {
        let grid = default_grid();
        let init = GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05);
        let field = gaussian_wigner(&init, 0.1, &grid).unwrap();
        let spec = *grid.spec();
        let cell = spec.cell_area();
        let mut mx = 0.0;
        let mut vx = 0.0;
        for ix in 0..spec.nx {
            let x = grid.x()[ix];
            for ip in 0..spec.np {
                let w = field.values()[field.idx(ix, ip)] * cell;
                mx += w * x;
                vx += w * x * x;
            }
        }
        assert_relative_eq!(mx, 1.0, epsilon = 1e-8);
        assert_relative_eq!(vx - mx * mx, 0.05, epsilon = 1e-8);
    }

    #[test]
    fn rejects_states_the_grid_cannot_carry() {
        let grid = default_grid();
        // Narrow in p: hbar small enough that sigma_p < dp.
        let init = GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05);
        assert!(gaussian_wigner(&init, 0.02, &grid).is_err());
        // Centered on the boundary: tail mass check trips.
        let off = GaussianInit::minimum_uncertainty(-5.9, 0.0, 0.05);
        assert!(gaussian_wigner(&off, 0.1, &grid).is_err());
        // Bad variance.
        let bad = GaussianInit::minimum_uncertainty(0.0, 0.0, -1.0);
        assert!(gaussian_wigner(&bad, 0.1, &grid).is_err());
    }
}
