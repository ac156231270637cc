//! Built-in invariant suite behind the `verify` subcommand.
//!
//! Every check runs in well under a second or two and reports the measured
//! value next to its tolerance; a failure is a report entry, not an error.

use serde::Serialize;

use crate::constraints::{CircleGroup, Orientation, OrthoGroup};
use crate::diagnostics::{haar_stiefel_sample, mean_curvature, numeric_projection, GenericConstraint, DEFAULT_FD_STEP};
use crate::error::Result;
use crate::experiment::{gradcheck, max_relative_error};
use crate::integrators::{
    oba_step_with, od_step, sgdm_reference_step, FnOracle, Gradient, IntegratorConfig, ParamStore,
    PhasePoint, StepOptions, ZeroPotential,
};
use crate::model::{Batch, LossKind, Mlp, MlpSpec, ParamLayout};
use crate::numerics::{standard_normal_matrix, Matrix, Rng};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub check_id: String,
    pub measured: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    /// Passes when `measured ≤ tolerance`.
    fn at_most(id: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            check_id: id.into(),
            measured,
            tolerance,
            pass: measured <= tolerance,
        }
    }
}

/// Deliberate defects for exercising the suite itself.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Faults {
    /// Leave out the cotangent projection in the underdamped O and B steps.
    pub skip_cotangent_projection: bool,
}

fn circle_store(n: usize, rng: &mut Rng) -> ParamStore {
    let theta = (0..n).map(|_| rng.uniform_range(-0.9, 0.9)).collect();
    ParamStore {
        circles: vec![CircleGroup::new(theta, vec![1.0; n]).expect("feasible")],
        ..Default::default()
    }
}

fn ortho_store(r: usize, s: usize, rng: &mut Rng) -> ParamStore {
    ParamStore {
        orthos: vec![OrthoGroup {
            q: haar_stiefel_sample(r, s, rng).expect("r >= s"),
            orientation: Orientation::AsIs,
        }],
        ..Default::default()
    }
}

/// `V = ½Σθ²` on circles and `V = ½‖Q − A‖²` on orthogonal groups (with
/// `A` on the manifold), so the gradients have components off the manifold.
fn quadratic_oracle(target: Matrix) -> impl Fn(&ParamStore) -> Gradient {
    move |p: &ParamStore| {
        let mut g = Gradient::zeros_like(p);
        for (gc, c) in g.circles.iter_mut().zip(&p.circles) {
            gc.clone_from(&c.theta);
        }
        for (go, o) in g.orthos.iter_mut().zip(&p.orthos) {
            *go = o.q.sub(&target);
        }
        g
    }
}

fn constraint_checks(out: &mut Vec<Check>) -> Result<()> {
    let mut rng = Rng::new(1);
    let steps = 2_000;
    for tau in [0.0, 0.01] {
        let oracle = FnOracle(quadratic_oracle(Matrix::zeros(1, 1)));
        let cfg = IntegratorConfig::od(0.1, tau);
        let mut p = circle_store(100, &mut rng);
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            p = od_step(&p, &oracle, &(), &cfg, &mut rng)?;
            worst = worst.max(p.constraint_residual().max_abs);
        }
        out.push(Check::at_most(&format!("circle_od_residual_tau_{tau}"), worst, 1e-10));

        let cfg = IntegratorConfig::ud(0.1, 1.0, tau);
        let mut ph = PhasePoint::at_rest(circle_store(100, &mut rng));
        let (mut worst, mut cot): (f64, f64) = (0.0, 0.0);
        for _ in 0..steps {
            ph = oba_step_with(&ph, &oracle, &(), &cfg, &mut rng, StepOptions::default())?;
            worst = worst.max(ph.position.constraint_residual().max_abs);
            cot = cot.max(ph.cotangency_residual());
        }
        out.push(Check::at_most(&format!("circle_ud_residual_tau_{tau}"), worst, 1e-10));
        out.push(Check::at_most(&format!("circle_ud_cotangency_tau_{tau}"), cot, 1e-9));
    }

    let target = haar_stiefel_sample(20, 10, &mut rng)?;
    let oracle = FnOracle(quadratic_oracle(target));
    let steps = 300;
    let cfg = IntegratorConfig::od(0.05, 1e-6);
    let mut p = ortho_store(20, 10, &mut rng);
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        p = od_step(&p, &oracle, &(), &cfg, &mut rng)?;
        worst = worst.max(p.constraint_residual().max_abs);
    }
    out.push(Check::at_most("ortho_od_residual", worst, 1e-7));

    let cfg = IntegratorConfig::ud(0.05, 1.0, 0.01);
    let mut ph = PhasePoint::at_rest(ortho_store(20, 10, &mut rng));
    let (mut worst, mut cot): (f64, f64) = (0.0, 0.0);
    for _ in 0..steps {
        ph = oba_step_with(&ph, &oracle, &(), &cfg, &mut rng, StepOptions::default())?;
        worst = worst.max(ph.position.constraint_residual().max_abs);
        cot = cot.max(ph.cotangency_residual());
    }
    out.push(Check::at_most("ortho_ud_residual", worst, 1e-7));
    out.push(Check::at_most("ortho_ud_cotangency", cot, 1e-9));
    Ok(())
}

/// Cotangency after single underdamped steps, honoring injected faults.
fn cotangency_checks(out: &mut Vec<Check>, faults: Faults) -> Result<()> {
    let opts = StepOptions {
        skip_cotangent_projection: faults.skip_cotangent_projection,
    };
    let mut rng = Rng::new(2);
    let cfg = IntegratorConfig::ud(0.05, 1.0, 0.1);
    let oracle = FnOracle(quadratic_oracle(haar_stiefel_sample(6, 3, &mut rng)?));
    let mut store = circle_store(10, &mut rng);
    store.orthos = ortho_store(6, 3, &mut rng).orthos;
    let mut ph = PhasePoint::at_rest(store);
    let mut cot: f64 = 0.0;
    for _ in 0..50 {
        ph = oba_step_with(&ph, &oracle, &(), &cfg, &mut rng, opts)?;
        cot = cot.max(ph.cotangency_residual());
    }
    out.push(Check::at_most("ud_step_cotangency", cot, 1e-9));
    Ok(())
}

fn sgdm_equivalence_check(out: &mut Vec<Check>) -> Result<()> {
    // L = ½ θᵀAθ − bᵀθ with a fixed diagonal A
    let a = [0.5, 1.0, 2.0, 4.0];
    let b = [1.0, -1.0, 0.5, 0.25];
    let grad_of = |t: &[f64]| -> Vec<f64> { t.iter().zip(a.iter().zip(&b)).map(|(x, (ai, bi))| ai * x - bi).collect() };
    let (lr, mu) = (0.01, 0.9);
    let cfg = IntegratorConfig::ud_matching_sgdm(lr, mu);
    let theta0 = vec![1.0, 2.0, -1.0, 0.5];

    let oracle = FnOracle(move |p: &ParamStore| Gradient {
        unconstrained: vec![grad_of(&p.unconstrained[0])],
        ..Default::default()
    });
    let store = ParamStore {
        unconstrained: vec![theta0.clone()],
        ..Default::default()
    };
    let g0 = grad_of(&theta0);
    let mut ph = PhasePoint::from_gradient(store, &Gradient { unconstrained: vec![g0.clone()], ..Default::default() }, cfg.h);
    let (mut theta, mut v) = (theta0, g0);
    let mut rng = Rng::new(0);
    let mut dev: f64 = 0.0;
    for _ in 0..100 {
        ph = oba_step_with(&ph, &oracle, &(), &cfg, &mut rng, StepOptions::default())?;
        let g = grad_of(&theta);
        (theta, v) = sgdm_reference_step(&theta, &v, &g, lr, mu);
        dev = dev.max(max_relative_error(&ph.position.unconstrained[0], &theta));
    }
    out.push(Check::at_most("sgdm_equivalence_max_rel_dev", dev, 1e-12));
    Ok(())
}

fn gradcheck_checks(out: &mut Vec<Check>) -> Result<()> {
    let mut rng = Rng::new(3);
    let spec = MlpSpec::new(vec![3, 10, 10, 10, 1], LossKind::BceWithLogits);
    let mlp = Mlp::new(spec, ParamLayout::orthogonal_hidden(4))?;
    let (params, _) = mlp.init(&mut rng)?;
    let batch = Batch::new(standard_normal_matrix(8, 3, &mut rng), vec![0, 1, 1, 0, 1, 0, 0, 1])?;
    let report = gradcheck(&mlp, &params, &batch)?;
    let worst = report
        .layers
        .iter()
        .map(|l| l.weight_rel_error.max(l.bias_rel_error))
        .fold(0.0, f64::max);
    out.push(Check::at_most("backprop_vs_finite_differences", worst, 1e-6));
    Ok(())
}

fn geometry_checks(out: &mut Vec<Check>) -> Result<()> {
    let mut rng = Rng::new(4);
    let (mut curv, mut tangency, mut idem): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for k in 0..20 {
        let r = [0.5, 1.0, 2.0][k % 3];
        let c = GenericConstraint::circle(r);
        let phi = rng.uniform_range(-std::f64::consts::PI, std::f64::consts::PI);
        let q = [r * phi.cos(), r * phi.sin()];
        let h = mean_curvature(&c, &q, DEFAULT_FD_STEP)?;
        curv = curv.max((h[0] + q[0] / (r * r)).abs()).max((h[1] + q[1] / (r * r)).abs());
        let pi = numeric_projection(&c, &q)?;
        let ph = [pi[(0, 0)] * h[0] + pi[(0, 1)] * h[1], pi[(1, 0)] * h[0] + pi[(1, 1)] * h[1]];
        tangency = tangency.max(ph[0].abs()).max(ph[1].abs());
        idem = idem.max(pi.matmul(&pi)?.sub(&pi).max_abs());
    }
    out.push(Check::at_most("mean_curvature_circle", curv, 1e-6));
    out.push(Check::at_most("projection_annihilates_curvature", tangency, 1e-6));
    out.push(Check::at_most("projection_idempotent", idem, 1e-9));
    Ok(())
}

fn distribution_checks(out: &mut Vec<Check>) -> Result<()> {
    let mut rng = Rng::new(5);
    let cfg = IntegratorConfig::od(0.01, 1.0);
    let mut p = circle_store(1, &mut rng);
    let (mut sum, n) = (0.0, 200_000);
    for _ in 0..n {
        p = od_step(&p, &ZeroPotential, &(), &cfg, &mut rng)?;
        sum += p.circles[0].theta[0].powi(2);
    }
    out.push(Check::at_most("circle_uniform_theta_sq", (sum / n as f64 - 0.5).abs(), 0.02));

    let (mut sum, n) = (0.0, 20_000);
    for _ in 0..n {
        sum += haar_stiefel_sample(8, 4, &mut rng)?[(0, 0)].powi(2);
    }
    out.push(Check::at_most("haar_q11_sq_rel_dev", (sum / n as f64 * 8.0 - 1.0).abs(), 0.05));
    Ok(())
}

/// Runs the whole suite.
pub fn run_verify(faults: Faults) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    constraint_checks(&mut out)?;
    cotangency_checks(&mut out, faults)?;
    sgdm_equivalence_check(&mut out)?;
    gradcheck_checks(&mut out)?;
    geometry_checks(&mut out)?;
    distribution_checks(&mut out)?;
    Ok(out)
}
