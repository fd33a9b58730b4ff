// nx-convergence of sweep member (hbar=0.0632, D=1e-4): does x-fringe
// resolution move its entropy curve at the scale of the group deviation?
use std::sync::Arc;
use wignerflow::grid::{Grid, GridSpec};
use wignerflow::potentials::DuffingParams;
use wignerflow::propagator::{evolve, Dealias, EvolutionParams, Mode};
use wignerflow::states::{gaussian_wigner, GaussianInit};

fn run(nx: usize) -> Vec<(f64, f64)> {
    let period = 2.0 * std::f64::consts::PI / 5.35;
    let spec = GridSpec { nx, np: 512, x_min: -6.0, x_max: 6.0, p_min: -12.0, p_max: 12.0 };
    let grid = Arc::new(Grid::new(spec).unwrap());
    let params = DuffingParams { m: 1.0, b: 10.0, c: 1.0, a: 1.0, omega: 5.35 };
    let hbar = 0.004f64.sqrt();
    let init = GaussianInit::minimum_uncertainty(1.0, 0.0, 0.05);
    let field = gaussian_wigner(&init, hbar, &grid).unwrap();
    let evo = EvolutionParams {
        hbar, d: 1e-4, dt: period / 2048.0, t_final: 20.0 * period,
        mode: Mode::Quantum, record_every: 64, dealias: Dealias::Auto,
    };
    let out = evolve(&field, &params, &evo, |_, _| {}).unwrap();
    out.records.iter().map(|r| (r.t, r.s2)).collect()
}

fn main() {
    let a = run(512);
    let b = run(1024);
    let period = 2.0 * std::f64::consts::PI / 5.35;
    let mut worst = 0.0f64;
    let mut at = 0.0;
    for (ra, rb) in a.iter().zip(&b) {
        if ra.0 <= 10.0 * period {
            let d = (ra.1 - rb.1).abs();
            if d > worst { worst = d; at = ra.0; }
        }
    }
    println!("member (0.0632, 1e-4): max |S2_512 - S2_1024| over [0, 10T] = {worst:.4} at t = {at:.2}");
    for i in [0usize, 160, 320, 480, 640] {
        if i < a.len() {
            println!("t={:6.2}  S2_512={:.4}  S2_1024={:.4}", a[i].0, a[i].1, b[i].1);
        }
    }
}
