//! Without noise, the underdamped scheme on unconstrained weights is momentum
//! SGD: μ = e^{−γh} and lr = h². Both are run on a quadratic and compared.
//!
//! cargo run --example sgdm_equivalence

use cola::integrators::{FnOracle, Gradient, Integrator, IntegratorConfig, ParamStore, Scheme};
use cola::numerics::Rng;

fn main() -> cola::Result<()> {
    let curvature = [0.2, 1.0, 3.0];
    let oracle = FnOracle(move |p: &ParamStore| Gradient {
        unconstrained: vec![p.unconstrained[0].iter().zip(&curvature).map(|(x, a)| a * x).collect()],
        ..Default::default()
    });
    let start = ParamStore { unconstrained: vec![vec![1.0, -2.0, 0.5]], ..Default::default() };
    let (lr, mu) = (0.05, 0.8);

    let ud = IntegratorConfig::ud_matching_sgdm(lr, mu);
    println!("h = {:.4}, gamma = {:.4}", ud.h, ud.gamma);
    let mut sgdm = IntegratorConfig::new(Scheme::BaselineSgdm, lr);
    sgdm.momentum = mu;
    let mut a = Integrator::new(ud, start.clone())?;
    let mut b = Integrator::new(sgdm, start)?;
    let mut rng = Rng::new(0);
    for k in 1..=50 {
        a.step(&oracle, &(), &mut rng)?;
        b.step(&oracle, &(), &mut rng)?;
        if k % 10 == 0 {
            let diff = a.params().unconstrained[0]
                .iter()
                .zip(&b.params().unconstrained[0])
                .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            println!("step {k:>3}: theta = {:?}, max difference {diff:.1e}", b.params().unconstrained[0]);
        }
    }
    Ok(())
}
