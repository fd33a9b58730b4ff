//! Driven double-well (Duffing) potential and its phase-space kernels.
//!
//! The potential-stage multipliers of the split-step solver act in the mixed
//! `(x, lambda)` representation, where lambda is conjugate to momentum. For a
//! quartic potential the Moyal bracket kernel
//!
//! ```text
//! theta(x, lambda, t) = [V(x + hbar lambda / 2, t) - V(x - hbar lambda / 2, t)] / hbar
//! ```
//!
//! terminates after the first quantum correction, so it is evaluated here in
//! closed form: `lambda V'(x, t) + (C/2) hbar^2 x lambda^3`. The first term is
//! the classical (Poisson) kernel, the cubic-in-lambda term is the entire
//! quantum excess.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of `V(x, t) = -B x^2 + (C/2) x^4 + A x cos(omega t)` with
/// kinetic term `p^2 / 2m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DuffingParams {
    pub m: f64,
    pub b: f64,
    pub c: f64,
    pub a: f64,
    pub omega: f64,
}

impl Default for DuffingParams {
    /// Standard chaotic working point used throughout the diagnostics study.
    fn default() -> Self {
        DuffingParams {
            m: 1.0,
            b: 10.0,
            c: 1.0,
            a: 1.0,
            omega: 5.35,
        }
    }
}

impl DuffingParams {
    /// Stronger drive variant with a larger chaotic sea.
    pub fn strong_drive() -> Self {
        DuffingParams {
            a: 10.0,
            omega: 6.07,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 0.0) || !self.m.is_finite() {
            return Err(Error::Config(format!(
                "hamiltonian.m must be finite and positive, got {}",
                self.m
            )));
        }
        if self.c < 0.0 {
            return Err(Error::Config(format!(
                "hamiltonian.c must be non-negative (confining quartic), got {}",
                self.c
            )));
        }
        for (name, v) in [
            ("hamiltonian.b", self.b),
            ("hamiltonian.c", self.c),
            ("hamiltonian.a", self.a),
            ("hamiltonian.omega", self.omega),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Drive period `2 pi / omega`; falls back to 1 for an undriven system so
    /// period-derived defaults stay usable.
    pub fn drive_period(&self) -> f64 {
        if self.omega.abs() > 0.0 {
            2.0 * std::f64::consts::PI / self.omega.abs()
        } else {
            1.0
        }
    }

    /// Copy with the drive switched off; the propagator folds the drive into
    /// a separate per-step factor.
    pub fn undriven(&self) -> DuffingParams {
        DuffingParams { a: 0.0, ..*self }
    }

    pub fn potential(&self, x: f64, t: f64) -> f64 {
        -self.b * x * x + 0.5 * self.c * x.powi(4) + self.a * x * (self.omega * t).cos()
    }

    /// dV/dx, the force gradient entering both kernels and the classical
    /// equations of motion.
    pub fn force_gradient(&self, x: f64, t: f64) -> f64 {
        -2.0 * self.b * x + 2.0 * self.c * x.powi(3) + self.a * (self.omega * t).cos()
    }

    /// d2V/dx2, used by the tangent-space dynamics of the Lyapunov solver.
    pub fn curvature(&self, x: f64) -> f64 {
        -2.0 * self.b + 6.0 * self.c * x * x
    }

    /// Kinetic plus potential energy of a point; with the drive off this is
    /// the conserved Hamiltonian.
    pub fn energy(&self, x: f64, p: f64, t: f64) -> f64 {
        p * p / (2.0 * self.m) + self.potential(x, t)
    }

    /// Classical limit of the bracket kernel: `lambda V'(x, t)`.
    pub fn classical_kernel(&self, x: f64, lambda: f64, t: f64) -> f64 {
        lambda * self.force_gradient(x, t)
    }

    /// Full Moyal kernel for the quartic potential (exact, the Taylor series
    /// in hbar terminates): classical kernel plus `(C/2) hbar^2 x lambda^3`.
    pub fn moyal_kernel(&self, hbar: f64, x: f64, lambda: f64, t: f64) -> f64 {
        self.classical_kernel(x, lambda, t) + self.quantum_excess(hbar, x, lambda)
    }

    /// Difference between the Moyal and classical kernels.
    pub fn quantum_excess(&self, hbar: f64, x: f64, lambda: f64) -> f64 {
        0.5 * self.c * hbar * hbar * x * lambda * lambda * lambda
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Finite-difference form of the kernel straight from its definition.
    fn kernel_from_definition(p: &DuffingParams, hbar: f64, x: f64, lam: f64, t: f64) -> f64 {
        let s = 0.5 * hbar * lam;
        (p.potential(x + s, t) - p.potential(x - s, t)) / hbar
    }

    #[test]
    fn gradient_matches_numerical_derivative() {
        let p = DuffingParams::default();
        let h = 1e-6;
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.9] {
            for &t in &[0.0, 0.3, 1.1] {
                let num = (p.potential(x + h, t) - p.potential(x - h, t)) / (2.0 * h);
                assert_relative_eq!(p.force_gradient(x, t), num, epsilon = 1e-6, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn curvature_matches_numerical_second_derivative() {
        let p = DuffingParams::strong_drive();
        let h = 1e-5;
        for &x in &[-2.5, -1.0, 0.0, 1.3, 3.2] {
            let num =
                (p.potential(x + h, 0.0) - 2.0 * p.potential(x, 0.0) + p.potential(x - h, 0.0))
                    / (h * h);
            assert_relative_eq!(p.curvature(x), num, epsilon = 1e-4, max_relative = 1e-5);
        }
    }

    #[test]
    fn moyal_kernel_equals_potential_difference_quotient() {
        // The closed form is exact for quartic potentials, so even a crude
        // sample net must agree to roundoff.
        let p = DuffingParams::default();
        let hbar = 0.1;
        for i in 0..20 {
            let x = -6.0 + 0.63 * i as f64;
            for j in 0..20 {
                let lam = -25.0 + 2.6 * j as f64;
                for &t in &[0.0, 0.7] {
                    let exact = p.moyal_kernel(hbar, x, lam, t);
                    let fd = kernel_from_definition(&p, hbar, x, lam, t);
                    assert_relative_eq!(exact, fd, epsilon = 1e-9, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn classical_kernel_is_the_hbar_to_zero_limit() {
        let p = DuffingParams::default();
        let (x, lam, t) = (1.4, -7.0, 0.25);
        let small = kernel_from_definition(&p, 1e-5, x, lam, t);
        assert_relative_eq!(p.classical_kernel(x, lam, t), small, max_relative = 1e-9);
    }

    #[test]
    fn rejects_unphysical_parameters() {
        let mut p = DuffingParams::default();
        p.m = 0.0;
        assert!(p.validate().is_err());
        p.m = 1.0;
        p.c = -1.0;
        assert!(p.validate().is_err());
    }

    proptest! {
        /// theta is odd in lambda and supports only odd derivatives of V,
        /// which for the quartic means the finite-difference form matches the
        /// closed form everywhere, not just on nice points.
        #[test]
        fn kernel_closed_form_is_exact(
            x in -8.0f64..8.0,
            lam in -60.0f64..60.0,
            hbar in 1e-3f64..2.0,
            t in 0.0f64..10.0,
        ) {
            let p = DuffingParams::default();
            let exact = p.moyal_kernel(hbar, x, lam, t);
            let fd = kernel_from_definition(&p, hbar, x, lam, t);
            let scale = exact.abs().max(fd.abs()).max(1.0);
            prop_assert!((exact - fd).abs() <= 1e-9 * scale);
            prop_assert!((p.moyal_kernel(hbar, x, -lam, t) + exact).abs() <= 1e-9 * scale);
        }
    }
}
