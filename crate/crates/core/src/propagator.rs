//! Strang split-step spectral propagator for the Wigner master equation.
//!
//! One step of size `dt` is
//!
//! ```text
//! exp(K dt/2) exp((V + Q + D) dt) exp(K dt/2)
//! ```
//!
//! where the kinetic half-steps act diagonally in `(k_x, p)` with multiplier
//! `exp(-i k_x p dt / 2m)` and the potential stage acts diagonally in
//! `(x, lambda)` with multiplier `exp(i theta(x, lambda, t_mid) dt)`
//! `exp(-D lambda^2 dt)`; `theta` is the full Moyal kernel in quantum mode
//! and its `lambda V'` classical limit otherwise, both evaluated at the
//! temporal midpoint of the step so the drive enters at second order.
//!
//! Structural guarantees of the multiplier form: the `(k_x, lambda) = (0, 0)`
//! modes are untouched, so mass is conserved to roundoff per step; with
//! `D = 0` and no dealias mask every multiplier is unimodular, so the L2 norm
//! (hence purity) is conserved to roundoff; with `D > 0` purity is monotone
//! non-increasing. Real-to-complex transforms keep the field real by
//! construction, with the Nyquist-bin phases zeroed (an unresolved mode must
//! not rotate into an imaginary part).
//!
//! Between diagnostic/check boundaries adjacent kinetic half-steps are fused
//! into full steps; the operator product is identical, only the transform
//! count drops.

use std::sync::Arc;

use realfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::grid::{transpose, Grid, WignerField};
use crate::potentials::DuffingParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Quantum,
    Classical,
}

/// Policy for the 2/3-rule mask on the lambda axis. `Auto` enables it in
/// quantum mode when the quantum phase advance per step at the grid corner
/// exceeds pi (the cubic kernel would wrap and alias).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dealias {
    Auto,
    On,
    Off,
}

#[derive(Debug, Clone, Copy)]
pub struct EvolutionParams {
    pub hbar: f64,
    pub d: f64,
    pub dt: f64,
    pub t_final: f64,
    pub mode: Mode,
    pub record_every: usize,
    pub dealias: Dealias,
}

impl EvolutionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hbar > 0.0) || !self.hbar.is_finite() {
            return Err(Error::Config(format!(
                "evolution.hbar must be finite and positive, got {} \
                 (classical mode also needs it: initial state width and purity normalization)",
                self.hbar
            )));
        }
        if self.d < 0.0 || !self.d.is_finite() {
            return Err(Error::Config(format!(
                "evolution.d must be finite and >= 0, got {}",
                self.d
            )));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!(
                "evolution.dt must be finite and positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(Error::Config(format!(
                "evolution.t_final must be finite and >= 0, got {}",
                self.t_final
            )));
        }
        if self.record_every == 0 {
            return Err(Error::Config(
                "evolution.record_every must be >= 1".to_string(),
            ));
        }
        Ok(())
    }

    pub fn num_steps(&self) -> u64 {
        (self.t_final / self.dt).round() as u64
    }
}

/// Precomputed multiplier tables plus scratch buffers for one evolution
/// setting on one grid.
pub struct Stepper {
    grid: Arc<Grid>,
    params: DuffingParams,
    evo: EvolutionParams,
    dealias_active: bool,
    has_drive: bool,
    steps_taken: u64,
    /// `[ip][ikx]`, phase for dt/2, scaled by 1/nx.
    kin_half: Vec<Complex64>,
    /// Same layout for a fused full step.
    kin_full: Vec<Complex64>,
    /// `[ix][il]`: static kernel phase, diffusion decay, mask; scaled by 1/np.
    pot_static: Vec<Complex64>,
    /// `lambda * dt` with the Nyquist entry zeroed, for per-step drive phases.
    drive_lam_dt: Vec<f64>,
    drive_row: Vec<Complex64>,
    tr: Vec<f64>,
    spec: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Stepper {
    pub fn new(grid: Arc<Grid>, params: DuffingParams, evo: EvolutionParams) -> Result<Stepper> {
        params.validate()?;
        evo.validate()?;
        let spec = *grid.spec();
        let (nx, np) = (spec.nx, spec.np);
        let hx = grid.half_len_x();
        let hp = grid.half_len_p();

        let x_absmax = grid.x().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let lam_max = grid.lam_half()[hp - 1];
        let quantum_phase_max =
            params.c * 0.5 * evo.hbar * evo.hbar * x_absmax * lam_max.powi(3) * evo.dt;
        let dealias_active = match evo.dealias {
            Dealias::On => true,
            Dealias::Off => false,
            Dealias::Auto => {
                evo.mode == Mode::Quantum && quantum_phase_max > std::f64::consts::PI
            }
        };

        let mut kin_half = Vec::with_capacity(np * hx);
        let mut kin_full = Vec::with_capacity(np * hx);
        let inv_nx = 1.0 / nx as f64;
        for &p in grid.p() {
            for (ikx, &kx) in grid.kx_half().iter().enumerate() {
                let nyquist = ikx == hx - 1;
                let base = if nyquist { 0.0 } else { -kx * p / params.m };
                kin_half.push(Complex64::from_polar(inv_nx, base * 0.5 * evo.dt));
                kin_full.push(Complex64::from_polar(inv_nx, base * evo.dt));
            }
        }

        let undriven = params.undriven();
        let mask_start = 2 * (np / 2) / 3 + 1;
        let mut pot_static = Vec::with_capacity(nx * hp);
        let inv_np = 1.0 / np as f64;
        let mut drive_lam_dt = Vec::with_capacity(hp);
        for (il, &lam) in grid.lam_half().iter().enumerate() {
            let nyquist = il == hp - 1;
            drive_lam_dt.push(if nyquist { 0.0 } else { lam * evo.dt });
        }
        for &x in grid.x() {
            for (il, &lam) in grid.lam_half().iter().enumerate() {
                if dealias_active && il >= mask_start {
                    pot_static.push(Complex64::new(0.0, 0.0));
                    continue;
                }
                let nyquist = il == hp - 1;
                let lam_ph = if nyquist { 0.0 } else { lam };
                let theta = match evo.mode {
                    Mode::Quantum => undriven.moyal_kernel(evo.hbar, x, lam_ph, 0.0),
                    Mode::Classical => undriven.classical_kernel(x, lam_ph, 0.0),
                };
                let decay = (-evo.d * lam * lam * evo.dt).exp();
                pot_static.push(Complex64::from_polar(decay * inv_np, theta * evo.dt));
            }
        }

        let scratch_len = grid.scratch_len();
        Ok(Stepper {
            params,
            evo,
            dealias_active,
            has_drive: params.a != 0.0,
            steps_taken: 0,
            kin_half,
            kin_full,
            pot_static,
            drive_lam_dt,
            drive_row: vec![Complex64::default(); hp],
            tr: vec![0.0; spec.num_points()],
            spec: vec![Complex64::default(); (nx * hp).max(np * hx)],
            scratch: vec![Complex64::default(); scratch_len],
            grid,
        })
    }

    pub fn dealias_active(&self) -> bool {
        self.dealias_active
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    fn kinetic(&mut self, field: &mut WignerField, full: bool) {
        let spec = *self.grid.spec();
        let hx = self.grid.half_len_x();
        let table = if full { &self.kin_full } else { &self.kin_half };
        transpose(field.values(), spec.nx, spec.np, &mut self.tr);
        let sp = &mut self.spec[..spec.np * hx];
        self.grid.forward_x(&mut self.tr, sp, &mut self.scratch);
        for (v, m) in sp.iter_mut().zip(table) {
            *v *= m;
        }
        self.grid.inverse_x(sp, &mut self.tr, &mut self.scratch);
        transpose(&self.tr, spec.np, spec.nx, field.values_mut());
    }

    fn potential(&mut self, field: &mut WignerField, t_mid: f64) {
        let spec = *self.grid.spec();
        let hp = self.grid.half_len_p();
        let sp = &mut self.spec[..spec.nx * hp];
        self.grid
            .forward_p(field.values_mut(), sp, &mut self.scratch);
        if self.has_drive {
            let amp = self.params.a * (self.params.omega * t_mid).cos();
            for (dr, &ldt) in self.drive_row.iter_mut().zip(&self.drive_lam_dt) {
                *dr = Complex64::from_polar(1.0, ldt * amp);
            }
            for (row, mrow) in sp
                .chunks_exact_mut(hp)
                .zip(self.pot_static.chunks_exact(hp))
            {
                for ((v, m), dr) in row.iter_mut().zip(mrow).zip(&self.drive_row) {
                    *v *= m * dr;
                }
            }
        } else {
            for (v, m) in sp.iter_mut().zip(&self.pot_static) {
                *v *= m;
            }
        }
        self.grid
            .inverse_p(sp, field.values_mut(), &mut self.scratch);
    }

    fn check_alignment(&self, field: &WignerField) -> Result<()> {
        if field.grid().spec() != self.grid.spec() {
            return Err(Error::Alignment(
                "field grid does not match the stepper's grid".to_string(),
            ));
        }
        Ok(())
    }

    /// One full Strang step from `t` to `t + dt`.
    pub fn step(&mut self, field: &mut WignerField, t: f64) -> Result<()> {
        self.check_alignment(field)?;
        self.kinetic(field, false);
        self.potential(field, t + 0.5 * self.evo.dt);
        self.kinetic(field, false);
        self.steps_taken += 1;
        verify_field(field, self.steps_taken, t + self.evo.dt)
    }
}

/// Catastrophe test run at check boundaries; thresholds are far beyond any
/// legitimate roundoff drift.
fn verify_field(field: &WignerField, step: u64, t: f64) -> Result<()> {
    let mut max_abs = 0.0f64;
    for &v in field.values() {
        if !v.is_finite() {
            return Err(Error::Blowup {
                step,
                t,
                what: "non-finite field value".to_string(),
            });
        }
        max_abs = max_abs.max(v.abs());
    }
    if max_abs > 1e12 {
        return Err(Error::Blowup {
            step,
            t,
            what: format!("field magnitude {max_abs:.3e} is runaway"),
        });
    }
    let mass = field.integrate();
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::Blowup {
            step,
            t,
            what: format!("mass drifted to {mass:.12}"),
        });
    }
    Ok(())
}

/// Evolution output: the sampled time series plus the final field for
/// field-level comparisons and checkpointing.
#[derive(Debug)]
pub struct EvolveOutput {
    pub records: Vec<DiagnosticsRecord>,
    pub final_field: WignerField,
    pub dealias_active: bool,
}

/// Interval (in steps) between blowup checks; record boundaries also check.
const CHECK_EVERY: u64 = 64;

/// Integrate `init` to `t_final`, sampling diagnostics at `t = 0` and every
/// `record_every` steps. The sink sees every sampled record together with the
/// field it was sampled from (checkpoint writers hook in here).
///
/// `t_final` must be an integer multiple of `record_every * dt` so the series
/// is uniformly sampled; rate and identity columns depend on that.
pub fn evolve(
    init: &WignerField,
    params: &DuffingParams,
    evo: &EvolutionParams,
    mut sink: impl FnMut(&DiagnosticsRecord, &WignerField),
) -> Result<EvolveOutput> {
    let mut stepper = Stepper::new(init.grid().clone(), *params, *evo)?;
    stepper.check_alignment(init)?;
    let n_steps = evo.num_steps();
    if (n_steps as f64 * evo.dt - evo.t_final).abs() > 1e-6 * evo.t_final.max(1.0) {
        return Err(Error::Config(format!(
            "t_final = {} is not an integer number of dt = {} steps",
            evo.t_final, evo.dt
        )));
    }
    if n_steps % evo.record_every as u64 != 0 {
        return Err(Error::Config(format!(
            "{n_steps} steps do not divide into record_every = {} sampling blocks; \
             the diagnostic series must stay uniform",
            evo.record_every
        )));
    }

    let mut field = init.clone();
    verify_field(&field, 0, 0.0)?;
    let mut records = Vec::with_capacity((n_steps / evo.record_every as u64 + 1) as usize);
    let first = diagnostics::sample(&field, 0.0, evo.hbar);
    sink(&first, &field);
    records.push(first);

    if n_steps > 0 {
        let record_every = evo.record_every as u64;
        stepper.kinetic(&mut field, false);
        for i in 0..n_steps {
            let t = i as f64 * evo.dt;
            stepper.potential(&mut field, t + 0.5 * evo.dt);
            stepper.steps_taken += 1;
            let done = i + 1;
            let boundary =
                done == n_steps || done % record_every == 0 || done % CHECK_EVERY == 0;
            if boundary {
                stepper.kinetic(&mut field, false);
                let t_now = done as f64 * evo.dt;
                verify_field(&field, done, t_now)?;
                if done % record_every == 0 || done == n_steps {
                    let rec = diagnostics::sample(&field, t_now, evo.hbar);
                    sink(&rec, &field);
                    records.push(rec);
                }
                if done < n_steps {
                    stepper.kinetic(&mut field, false);
                }
            } else {
                stepper.kinetic(&mut field, true);
            }
        }
    }

    if records.len() >= 3 {
        diagnostics::finalize_series(&mut records, evo.d)?;
    }
    Ok(EvolveOutput {
        records,
        final_field: field,
        dealias_active: stepper.dealias_active,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use crate::oracle::{
        gaussian_purity, propagate_moments, GaussianMoments, LinearDynamics,
    };
    use crate::states::{gaussian_wigner, GaussianInit};
    use approx::assert_relative_eq;

    fn grid_128(x: f64, p: f64) -> Arc<Grid> {
        Grid::shared(GridSpec {
            nx: 128,
            np: 128,
            x_min: -x,
            x_max: x,
            p_min: -p,
            p_max: p,
        })
        .unwrap()
    }

    fn evo(hbar: f64, d: f64, dt: f64, t_final: f64, mode: Mode, record_every: usize) -> EvolutionParams {
        EvolutionParams {
            hbar,
            d,
            dt,
            t_final,
            mode,
            record_every,
            dealias: Dealias::Auto,
        }
    }

    fn free_params() -> DuffingParams {
        DuffingParams {
            m: 1.0,
            b: 0.0,
            c: 0.0,
            a: 0.0,
            omega: 0.0,
        }
    }

    /// V = x^2 / 2: unit-frequency harmonic well.
    fn harmonic_params() -> DuffingParams {
        DuffingParams {
            m: 1.0,
            b: -0.5,
            c: 0.0,
            a: 0.0,
            omega: 0.0,
        }
    }

    #[test]
    fn free_shear_transports_the_packet_exactly() {
        let grid = grid_128(6.0, 4.0);
        let init = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(-2.0, 0.5, 0.05),
            0.1,
            &grid,
        )
        .unwrap();
        let out = evolve(
            &init,
            &free_params(),
            &evo(0.1, 0.0, 2e-3, 4.0, Mode::Quantum, 500),
            |_, _| {},
        )
        .unwrap();
        let last = out.records.last().unwrap();
        // Spectral advection of a band-limited packet is exact: x = -2 + 0.5 t.
        assert_relative_eq!(last.mean_x, 0.0, epsilon = 1e-9);
        assert_relative_eq!(last.mean_p, 0.5, epsilon = 1e-10);
        // var_x(t) = var_x + var_p t^2, var_p = hbar^2/(4 var_x) = 0.05.
        assert_relative_eq!(last.var_x, 0.05 + 0.05 * 16.0, max_relative = 1e-8);
        assert_relative_eq!(last.var_p, 0.05, max_relative = 1e-9);
        // Unimodular multipliers: purity exact to roundoff.
        assert!((last.purity - out.records[0].purity).abs() < 1e-10);
        assert!(last.mass_residual < 1e-12);
    }

    #[test]
    fn harmonic_rotation_direction_and_period() {
        let grid = grid_128(4.0, 4.0);
        // Coherent state of the unit oscillator: var_x = var_p = hbar/2.
        let hbar = 0.1;
        let init = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, hbar / 2.0),
            hbar,
            &grid,
        )
        .unwrap();
        let period = 2.0 * std::f64::consts::PI;
        let dt = period / 4096.0;
        let out = evolve(
            &init,
            &harmonic_params(),
            &evo(hbar, 0.0, dt, period, Mode::Quantum, 1024),
            |_, _| {},
        )
        .unwrap();
        // Quarter period: (1, 0) -> (0, -1). Pins the sign conventions of
        // both split stages at once.
        let quarter = &out.records[1];
        assert_relative_eq!(quarter.t, period / 4.0, max_relative = 1e-12);
        assert_relative_eq!(quarter.mean_x, 0.0, epsilon = 1e-6);
        assert_relative_eq!(quarter.mean_p, -1.0, epsilon = 1e-5);
        // Full period: back to the start, purity untouched.
        let last = out.records.last().unwrap();
        assert_relative_eq!(last.mean_x, 1.0, epsilon = 1e-5);
        assert_relative_eq!(last.mean_p, 0.0, epsilon = 1e-5);
        let dist = out.final_field.l2_distance(&init).unwrap();
        assert!(dist < 1e-3, "period-return distance {dist}");
        assert!((last.purity - 1.0).abs() < 1e-4);
        assert!((last.purity - out.records[0].purity).abs() < 1e-10);
    }

    #[test]
    fn diffusion_matches_the_moment_oracle() {
        let grid = grid_128(4.0, 4.0);
        let hbar = 0.1;
        let d = 1e-3;
        let init = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, hbar / 2.0),
            hbar,
            &grid,
        )
        .unwrap();
        let out = evolve(
            &init,
            &harmonic_params(),
            &evo(hbar, d, 1e-3, 5.0, Mode::Quantum, 100),
            |_, _| {},
        )
        .unwrap();
        let dynamics = LinearDynamics::from_duffing(&harmonic_params()).unwrap();
        let m0 = GaussianMoments::from_init(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, hbar / 2.0),
            hbar,
        );
        for rec in out.records.iter().step_by(10) {
            let m = propagate_moments(&dynamics, d, &m0, rec.t).unwrap();
            let pref = gaussian_purity(&m, hbar).unwrap();
            assert_relative_eq!(rec.purity, pref, max_relative = 2e-4);
            assert_relative_eq!(rec.var_x, m.s_xx, max_relative = 2e-4);
            assert_relative_eq!(rec.var_p, m.s_pp, max_relative = 2e-4);
        }
        // Purity must fall monotonically under diffusion.
        for w in out.records.windows(2) {
            assert!(w[1].purity <= w[0].purity + 1e-12);
        }
        // Interior samples satisfy the production identity.
        for rec in &out.records[1..out.records.len() - 1] {
            assert!(
                rec.identity_residual < 0.02,
                "identity residual {} at t = {}",
                rec.identity_residual,
                rec.t
            );
        }
    }

    #[test]
    fn classical_mode_drops_exactly_the_quantum_excess() {
        // Linear dynamics: the two modes coincide bit-for-bit up to roundoff.
        let grid = grid_128(4.0, 4.0);
        let hbar = 0.2;
        let init = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, hbar / 2.0),
            hbar,
            &grid,
        )
        .unwrap();
        let run = |mode| {
            evolve(
                &init,
                &harmonic_params(),
                &evo(hbar, 0.0, 2e-3, 1.0, mode, 100),
                |_, _| {},
            )
            .unwrap()
        };
        let q = run(Mode::Quantum);
        let c = run(Mode::Classical);
        assert!(q.final_field.l2_distance(&c.final_field).unwrap() < 1e-13);

        // Quartic dynamics: they must diverge.
        let grid = Grid::shared(GridSpec::duffing_default()).unwrap();
        let init = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05),
            0.5,
            &grid,
        )
        .unwrap();
        let run = |mode| {
            evolve(
                &init,
                &DuffingParams::default(),
                &evo(0.5, 0.0, 5e-4, 0.5, mode, 100),
                |_, _| {},
            )
            .unwrap()
        };
        let q = run(Mode::Quantum);
        let c = run(Mode::Classical);
        assert!(q.final_field.l2_distance(&c.final_field).unwrap() > 1e-4);
    }

    #[test]
    fn quantum_excess_distance_scales_as_hbar_squared() {
        // One fixed mixed state, hbar halved: only the cubic kernel term
        // changes, so while its accumulated phase is perturbative the
        // quantum-classical L2 distance drops by 4. The horizon must stay
        // short: chaotic stretching grows the state's lambda-support
        // exponentially and the scaling washes out past t ~ 0.25.
        let grid = Grid::shared(GridSpec {
            nx: 256,
            np: 512,
            x_min: -6.0,
            x_max: 6.0,
            p_min: -16.0,
            p_max: 16.0,
        })
        .unwrap();
        let init = GaussianInit {
            x0: 1.0,
            p0: 0.0,
            var_x: 0.05,
            var_p: Some(0.05),
        };
        let dist = |hbar: f64| {
            let field = gaussian_wigner(&init, hbar, &grid).unwrap();
            let run = |mode| {
                evolve(
                    &field,
                    &DuffingParams::default(),
                    &evo(hbar, 5e-4, 5e-4, 0.2, mode, 400),
                    |_, _| {},
                )
                .unwrap()
            };
            run(Mode::Quantum)
                .final_field
                .l2_distance(&run(Mode::Classical).final_field)
                .unwrap()
        };
        let slope = (dist(0.1) / dist(0.05)).ln() / 2f64.ln();
        assert!(
            (slope - 2.0).abs() <= 0.3,
            "hbar-halving log2 distance ratio {slope:.3}, want 2 +- 0.3"
        );
    }

    #[test]
    fn duffing_run_conserves_mass_and_decays_purity() {
        let grid = Grid::shared(GridSpec::duffing_default()).unwrap();
        let init = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05),
            0.1,
            &grid,
        )
        .unwrap();
        let out = evolve(
            &init,
            &DuffingParams::default(),
            &evo(0.1, 5e-4, 5e-4, 1.0, Mode::Quantum, 250),
            |_, _| {},
        )
        .unwrap();
        for rec in &out.records {
            assert!(rec.mass_residual < 1e-9, "mass residual {}", rec.mass_residual);
            assert!(rec.purity.is_finite() && rec.purity > 0.0);
        }
        for w in out.records.windows(2) {
            assert!(w[1].purity <= w[0].purity + 1e-12);
        }
    }

    #[test]
    fn step_sequence_equals_evolve() {
        let grid = grid_128(6.0, 6.0);
        let init = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05),
            0.1,
            &grid,
        )
        .unwrap();
        let params = DuffingParams::default();
        let e = evo(0.1, 1e-3, 1e-3, 0.128, Mode::Quantum, 128);
        let out = evolve(&init, &params, &e, |_, _| {}).unwrap();

        let mut stepper = Stepper::new(grid, params, e).unwrap();
        let mut field = init.clone();
        for i in 0..128 {
            stepper.step(&mut field, i as f64 * e.dt).unwrap();
        }
        // Fused and unfused paths are the same operator product; only
        // floating-point association differs.
        assert!(out.final_field.l2_distance(&field).unwrap() < 1e-12);
    }

    #[test]
    fn blowup_and_misalignment_are_reported() {
        let grid = grid_128(4.0, 4.0);
        let mut init = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05),
            0.1,
            &grid,
        )
        .unwrap();
        init.values_mut()[7] = f64::NAN;
        let err = evolve(
            &init,
            &harmonic_params(),
            &evo(0.1, 0.0, 1e-3, 0.1, Mode::Quantum, 10),
            |_, _| {},
        )
        .unwrap_err();
        assert!(matches!(err, Error::Blowup { .. }), "got {err:?}");

        let other = grid_128(5.0, 5.0);
        let field_other = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05),
            0.1,
            &other,
        )
        .unwrap();
        let mut stepper = Stepper::new(
            grid,
            harmonic_params(),
            evo(0.1, 0.0, 1e-3, 0.1, Mode::Quantum, 10),
        )
        .unwrap();
        let mut f = field_other;
        assert!(matches!(
            stepper.step(&mut f, 0.0),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn misaligned_sampling_is_rejected_up_front() {
        let grid = grid_128(4.0, 4.0);
        let init = gaussian_wigner(
            &GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05),
            0.1,
            &grid,
        )
        .unwrap();
        // 100 steps, record_every 64: off-cadence tail sample.
        let err = evolve(
            &init,
            &harmonic_params(),
            &evo(0.1, 0.0, 1e-3, 0.1, Mode::Quantum, 64),
            |_, _| {},
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn dealias_policy_follows_mode_and_phase() {
        let grid = Grid::shared(GridSpec::duffing_default()).unwrap();
        let params = DuffingParams::default();
        let make = |hbar, mode, dealias| {
            Stepper::new(
                grid.clone(),
                params,
                EvolutionParams {
                    hbar,
                    d: 0.0,
                    dt: 5.734e-4,
                    t_final: 1.0,
                    mode,
                    record_every: 64,
                    dealias,
                },
            )
            .unwrap()
        };
        // Small hbar: quantum phase per step stays under pi.
        assert!(!make(0.1, Mode::Quantum, Dealias::Auto).dealias_active());
        // hbar = 1 at the grid corner wraps many times.
        assert!(make(1.0, Mode::Quantum, Dealias::Auto).dealias_active());
        // The classical kernel is linear in lambda; never auto-mask.
        assert!(!make(1.0, Mode::Classical, Dealias::Auto).dealias_active());
        assert!(make(0.1, Mode::Classical, Dealias::On).dealias_active());
        assert!(!make(1.0, Mode::Quantum, Dealias::Off).dealias_active());
    }
}
