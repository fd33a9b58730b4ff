//! Classical reference dynamics: trajectories and the maximal Lyapunov
//! exponent of the driven Duffing flow.
//!
//! The exponent comes from the tangent-space (Benettin) method: co-integrate
//! `d(dx)/dt = dp/m`, `d(dp)/dt = -V''(x) dx` along the trajectory with a
//! fixed-step RK4, renormalize the tangent vector on a fixed cadence, and
//! average the accumulated log stretch per unit time. Driving enters only
//! the base trajectory; `V''` is drive-free, so the tangent flow picks up the
//! drive through `x(t)`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::potentials::DuffingParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub p: f64,
}

#[inline]
fn rhs4(params: &DuffingParams, t: f64, y: &[f64; 4]) -> [f64; 4] {
    [
        y[1] / params.m,
        -params.force_gradient(y[0], t),
        y[3] / params.m,
        -params.curvature(y[0]) * y[2],
    ]
}

#[inline]
fn rk4_step(params: &DuffingParams, t: f64, y: &mut [f64; 4], dt: f64) {
    let k1 = rhs4(params, t, y);
    let y2 = std::array::from_fn(|i| y[i] + 0.5 * dt * k1[i]);
    let k2 = rhs4(params, t + 0.5 * dt, &y2);
    let y3 = std::array::from_fn(|i| y[i] + 0.5 * dt * k2[i]);
    let k3 = rhs4(params, t + 0.5 * dt, &y3);
    let y4 = std::array::from_fn(|i| y[i] + dt * k3[i]);
    let k4 = rhs4(params, t + dt, &y4);
    for i in 0..4 {
        y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

fn validate_step(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Config(format!(
            "{name} must be finite and positive, got {v}"
        )));
    }
    Ok(())
}

/// Fixed-step RK4 trajectory of the classical flow, sampled every step.
pub fn integrate_trajectory(
    params: &DuffingParams,
    x0: f64,
    p0: f64,
    t0: f64,
    t_final: f64,
    dt: f64,
) -> Result<Vec<TrajectoryPoint>> {
    params.validate()?;
    validate_step("dt", dt)?;
    if !(t_final > t0) {
        return Err(Error::Config(format!(
            "t_final = {t_final} must exceed t0 = {t0}"
        )));
    }
    let n = ((t_final - t0) / dt).round().max(1.0) as u64;
    let mut y = [x0, p0, 0.0, 0.0];
    let mut out = Vec::with_capacity(n as usize + 1);
    out.push(TrajectoryPoint { t: t0, x: x0, p: p0 });
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        rk4_step(params, t, &mut y, dt);
        if !y[0].is_finite() || !y[1].is_finite() {
            return Err(Error::Blowup {
                step: i + 1,
                t: t + dt,
                what: "trajectory left the representable range".to_string(),
            });
        }
        out.push(TrajectoryPoint {
            t: t0 + (i + 1) as f64 * dt,
            x: y[0],
            p: y[1],
        });
    }
    Ok(out)
}

/// Benettin estimate for one initial condition.
#[derive(Debug, Clone, Serialize)]
pub struct LyapunovResult {
    pub lambda_max: f64,
    /// Initial condition (x, p) and launch time (drive phase).
    pub x0: f64,
    pub p0: f64,
    pub t0: f64,
    /// Running estimate `(t, lambda(t))` at each renormalization.
    pub finite_time: Vec<(f64, f64)>,
    /// Standard deviation of the running estimate over the last quarter of
    /// the horizon; a convergence figure of merit.
    pub tail_std: f64,
}

/// Maximal Lyapunov exponent by tangent-space integration with periodic
/// renormalization. `renorm_interval` is rounded to a whole number of `dt`
/// steps.
pub fn max_lyapunov(
    params: &DuffingParams,
    x0: f64,
    p0: f64,
    t0: f64,
    t_total: f64,
    renorm_interval: f64,
    dt: f64,
) -> Result<LyapunovResult> {
    params.validate()?;
    validate_step("dt", dt)?;
    validate_step("t_total", t_total)?;
    validate_step("renorm_interval", renorm_interval)?;
    let per_block = (renorm_interval / dt).round().max(1.0) as u64;
    let blocks = (t_total / (per_block as f64 * dt)).round().max(1.0) as u64;

    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    let mut y = [x0, p0, inv_sqrt2, inv_sqrt2];
    let mut log_sum = 0.0;
    let mut finite_time = Vec::with_capacity(blocks as usize);
    for b in 0..blocks {
        for s in 0..per_block {
            let t = t0 + (b * per_block + s) as f64 * dt;
            rk4_step(params, t, &mut y, dt);
        }
        let r = y[2].hypot(y[3]);
        if !r.is_finite() || r == 0.0 {
            return Err(Error::Blowup {
                step: (b + 1) * per_block,
                t: t0 + ((b + 1) * per_block) as f64 * dt,
                what: format!("tangent norm degenerated to {r}"),
            });
        }
        log_sum += r.ln();
        y[2] /= r;
        y[3] /= r;
        let elapsed = ((b + 1) * per_block) as f64 * dt;
        finite_time.push((t0 + elapsed, log_sum / elapsed));
    }

    let lambda_max = finite_time.last().map(|&(_, l)| l).unwrap_or(0.0);
    let tail = &finite_time[finite_time.len() - (finite_time.len() / 4).max(1)..];
    let mean = tail.iter().map(|&(_, l)| l).sum::<f64>() / tail.len() as f64;
    let var = tail
        .iter()
        .map(|&(_, l)| (l - mean) * (l - mean))
        .sum::<f64>()
        / tail.len() as f64;
    Ok(LyapunovResult {
        lambda_max,
        x0,
        p0,
        t0,
        finite_time,
        tail_std: var.sqrt(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleLyapunov {
    pub mean: f64,
    pub std: f64,
    pub members: Vec<LyapunovResult>,
}

/// Ensemble average of [`max_lyapunov`] over 16 deterministic initial
/// conditions on the 0.5 and 1.0 sigma contours of a Gaussian centered at
/// `(x0, p0)`: two rings of eight phase angles each.
pub fn ensemble_lyapunov(
    params: &DuffingParams,
    x0: f64,
    p0: f64,
    sigma_x: f64,
    sigma_p: f64,
    t_total: f64,
    renorm_interval: f64,
    dt: f64,
) -> Result<EnsembleLyapunov> {
    if !(sigma_x >= 0.0) || !(sigma_p >= 0.0) {
        return Err(Error::Config("ensemble radii must be >= 0".to_string()));
    }
    let mut members = Vec::with_capacity(16);
    for &radius in &[0.5, 1.0] {
        for j in 0..8 {
            let ang = 2.0 * std::f64::consts::PI * j as f64 / 8.0;
            members.push(max_lyapunov(
                params,
                x0 + radius * sigma_x * ang.cos(),
                p0 + radius * sigma_p * ang.sin(),
                0.0,
                t_total,
                renorm_interval,
                dt,
            )?);
        }
    }
    let mean = members.iter().map(|m| m.lambda_max).sum::<f64>() / members.len() as f64;
    let var = members
        .iter()
        .map(|m| (m.lambda_max - mean) * (m.lambda_max - mean))
        .sum::<f64>()
        / members.len() as f64;
    Ok(EnsembleLyapunov {
        mean,
        std: var.sqrt(),
        members,
    })
}
