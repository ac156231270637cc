//! Free diffusion on a circle with the overdamped constrained sampler.
//!
//! The slack pair (θ, ξ) stays on θ² + ξ² = 1 to rounding error, and the
//! long-run angle is uniform, so ⟨θ²⟩ → ½.
//!
//! cargo run --release --example circle_sampler

use cola::constraints::CircleGroup;
use cola::diagnostics::{histogram, TrajectoryStats};
use cola::integrators::{od_step, IntegratorConfig, ParamStore, ZeroPotential};
use cola::numerics::Rng;

fn main() -> cola::Result<()> {
    let cfg = IntegratorConfig::od(0.01, 1.0);
    let mut rng = Rng::new(0);
    let mut p = ParamStore {
        circles: vec![CircleGroup::new(vec![0.0], vec![1.0])?],
        ..Default::default()
    };
    let mut theta_sq = TrajectoryStats::new();
    let mut angles = Vec::new();
    let mut worst: f64 = 0.0;
    for k in 0..500_000 {
        p = od_step(&p, &ZeroPotential, &(), &cfg, &mut rng)?;
        worst = worst.max(p.constraint_residual().max_abs);
        if k >= 1000 {
            let c = &p.circles[0];
            theta_sq.push(c.theta[0] * c.theta[0]);
            angles.push(c.xi[0].atan2(c.theta[0]));
        }
    }
    println!(
        "<theta^2> = {:.4} +- {:.4} (uniform: 0.5)",
        theta_sq.mean()?,
        theta_sq.standard_error(50)?
    );
    println!("max |theta^2 + xi^2 - 1| = {worst:.1e}");
    let counts = histogram(&angles, -std::f64::consts::PI, std::f64::consts::PI, 12);
    let top = *counts.iter().max().unwrap() as f64;
    for (i, c) in counts.iter().enumerate() {
        let bar = "#".repeat((40.0 * *c as f64 / top) as usize);
        println!("{:>5.0} deg {bar}", -180.0 + 30.0 * i as f64);
    }
    Ok(())
}
