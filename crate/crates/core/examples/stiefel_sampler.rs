//! Underdamped sampling on the Stiefel manifold of 6 x 3 orthonormal frames,
//! compared with exact Haar draws. Under the uniform law E[Q_ij²] = 1/6.
//!
//! cargo run --release --example stiefel_sampler

use cola::constraints::{Orientation, OrthoGroup};
use cola::diagnostics::{haar_stiefel_sample, ks_distance};
use cola::integrators::{oba_step, IntegratorConfig, ParamStore, PhasePoint, ZeroPotential};
use cola::numerics::Rng;

fn main() -> cola::Result<()> {
    let (r, s) = (6, 3);
    let mut cfg = IntegratorConfig::ud(0.02, 1.0, 1.0);
    cfg.k_max = 20;
    let mut rng = Rng::new(1);
    let start = ParamStore {
        orthos: vec![OrthoGroup { q: haar_stiefel_sample(r, s, &mut rng)?, orientation: Orientation::AsIs }],
        ..Default::default()
    };
    let mut ph = PhasePoint::at_rest(start);
    let (mut chain, mut worst) = (Vec::new(), 0.0f64);
    for k in 0..400_000 {
        ph = oba_step(&ph, &ZeroPotential, &(), &cfg, &mut rng)?;
        worst = worst.max(ph.position.constraint_residual().max_abs);
        if k >= 1000 && k % 10 == 0 {
            chain.push(ph.position.orthos[0].q[(0, 0)]);
        }
    }
    let haar: Vec<f64> = (0..chain.len())
        .map(|_| haar_stiefel_sample(r, s, &mut rng).map(|q| q[(0, 0)]))
        .collect::<cola::Result<_>>()?;
    let m2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64;
    println!("E[Q11^2]: sampler {:.4}, Haar {:.4}, exact {:.4}", m2(&chain), m2(&haar), 1.0 / r as f64);
    println!("KS distance of Q11 between the two: {:.4}", ks_distance(&chain, &haar));
    println!("max |QtQ - I|_F along the chain: {worst:.1e}");
    Ok(())
}
