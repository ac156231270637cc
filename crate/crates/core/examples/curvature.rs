//! Projection and mean curvature of implicitly defined manifolds, computed
//! only from the constraint function. On a sphere of radius r in d
//! dimensions, H = −(d − 1)q/r².
//!
//! cargo run --example curvature

use cola::diagnostics::{mean_curvature, numeric_projection, GenericConstraint, DEFAULT_FD_STEP};

fn main() -> cola::Result<()> {
    let r = 2.0;
    let sphere = GenericConstraint::sphere(3, r);
    let q = [r * 0.6, 0.0, r * 0.8];
    let h = mean_curvature(&sphere, &q, DEFAULT_FD_STEP)?;
    let exact: Vec<f64> = q.iter().map(|x| -2.0 * x / (r * r)).collect();
    println!("sphere   H = {h:.6?}\n  exact    {exact:.6?}");

    // A torus: (√(x² + y²) − R)² + z² = a²
    let (big, small) = (2.0, 0.5);
    let torus = GenericConstraint::new(3, 1, move |q: &[f64]| {
        let rho = q[0].hypot(q[1]);
        vec![(rho - big).powi(2) + q[2] * q[2] - small * small]
    });
    let q = [big + small, 0.0, 0.0];
    let pi = numeric_projection(&torus, &q)?;
    let h = mean_curvature(&torus, &q, DEFAULT_FD_STEP)?;
    // outer equator: principal curvatures 1/a and 1/(R + a)
    println!("torus    H = {h:.6?}\n  exact    [{:.6}, 0, 0]", -(1.0 / small + 1.0 / (big + small)));
    println!("tangent projection at the outer equator:");
    for i in 0..3 {
        println!("  {:?}", (0..3).map(|j| (pi[(i, j)] * 1e9).round() / 1e9).collect::<Vec<_>>());
    }
    Ok(())
}
