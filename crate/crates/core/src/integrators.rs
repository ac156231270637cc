//! Constrained Langevin steppers.
//!
//! Overdamped schemes take an Euler–Maruyama proposal and project it back
//! onto the constraint manifold. Underdamped schemes split each step into
//! O (Ornstein–Uhlenbeck kick), B (gradient impulse) and A (constrained
//! drift) sub-steps, each of which keeps the phase point on the cotangent
//! bundle. Unconstrained blocks always take the plain sub-steps.
//!
//! Random draws are consumed in store order: unconstrained blocks, then
//! circle groups (all `θ` noise before all `ξ` noise), then orthogonal
//! groups. Nothing is drawn when `τ = 0`.

use serde::{Deserialize, Serialize};

use crate::constraints::{
    circle_cotangent_project, circle_project_oblique, circle_project_orthogonal,
    ortho_cotangency_residual, ortho_cotangent_project, ortho_quasi_newton_project, CircleGroup,
    ConstraintResidual, OrthoGroup,
};
use crate::error::{Error, Result};
use crate::numerics::{standard_normal_matrix, Matrix, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Constrained overdamped: EM proposal plus projection.
    Od,
    /// Constrained underdamped, split into O, B and A sub-steps.
    UdOba,
    /// Euler–Maruyama on every parameter (plain SGD when `τ = 0`).
    BaselineEm,
    /// Momentum SGD, `v ← μv + ∇L`, `θ ← θ − lr·v`.
    BaselineSgdm,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionVariant {
    /// Nearest point on the circle; always defined away from the origin.
    #[default]
    Orthogonal,
    /// Along the normal at the previous point; may have no solution for
    /// large steps.
    Oblique,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Splitting {
    #[default]
    Oba,
    Abo,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Stepsize `h` (the learning rate for the baselines).
    pub h: f64,
    #[serde(default)]
    pub gamma: f64,
    #[serde(default)]
    pub tau: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub projection_variant: ProjectionVariant,
    #[serde(default)]
    pub splitting: Splitting,
    /// Momentum `μ` of [`Scheme::BaselineSgdm`].
    #[serde(default = "default_momentum")]
    pub momentum: f64,
}

fn default_k_max() -> usize {
    5
}

fn default_tol() -> f64 {
    1e-10
}

fn default_momentum() -> f64 {
    0.9
}

impl IntegratorConfig {
    pub fn new(scheme: Scheme, h: f64) -> Self {
        Self {
            scheme,
            h,
            gamma: 0.0,
            tau: 0.0,
            k_max: default_k_max(),
            tol: default_tol(),
            projection_variant: ProjectionVariant::Orthogonal,
            splitting: Splitting::Oba,
            momentum: default_momentum(),
        }
    }

    pub fn od(h: f64, tau: f64) -> Self {
        Self {
            tau,
            ..Self::new(Scheme::Od, h)
        }
    }

    pub fn ud(h: f64, gamma: f64, tau: f64) -> Self {
        Self {
            gamma,
            tau,
            ..Self::new(Scheme::UdOba, h)
        }
    }

    /// Underdamped settings whose `τ = 0` unconstrained trajectory equals
    /// momentum SGD with learning rate `lr` and momentum `mu`:
    /// `h = √lr`, `γ = −ln(μ)/h`.
    pub fn ud_matching_sgdm(lr: f64, mu: f64) -> Self {
        let h = lr.sqrt();
        Self::ud(h, -mu.ln() / h, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.h > 0.0) || !self.h.is_finite() {
            return bad(format!("stepsize h must be positive, got {}", self.h));
        }
        if !(self.tau >= 0.0) {
            return bad(format!("temperature tau must be >= 0, got {}", self.tau));
        }
        if !(self.gamma >= 0.0) {
            return bad(format!("friction gamma must be >= 0, got {}", self.gamma));
        }
        if self.scheme == Scheme::UdOba && !(self.gamma > 0.0) {
            return bad("friction gamma must be > 0 for the underdamped scheme".into());
        }
        if self.k_max == 0 {
            return bad("k_max must be at least 1".into());
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        Ok(())
    }

    fn em_noise_scale(&self) -> f64 {
        (2.0 * self.tau * self.h).sqrt()
    }

    fn ou_coefficients(&self) -> (f64, f64) {
        let decay = (-self.gamma * self.h).exp();
        let noise = (self.tau * (1.0 - (-2.0 * self.gamma * self.h).exp())).sqrt();
        (decay, noise)
    }
}

/// Model parameters split by constraint kind.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    pub unconstrained: Vec<Vec<f64>>,
    pub circles: Vec<CircleGroup>,
    pub orthos: Vec<OrthoGroup>,
}

impl ParamStore {
    pub fn constraint_residual(&self) -> ConstraintResidual {
        let mut out = ConstraintResidual::default();
        for (i, g) in self.circles.iter().enumerate() {
            out.record(format!("circle[{i}]"), g.max_residual());
        }
        for (i, g) in self.orthos.iter().enumerate() {
            out.record(format!("ortho[{i}]"), g.residual());
        }
        out
    }

    pub fn is_unconstrained(&self) -> bool {
        self.circles.is_empty() && self.orthos.is_empty()
    }

    /// Total number of model parameters (slack variables excluded).
    pub fn parameter_count(&self) -> usize {
        self.unconstrained.iter().map(Vec::len).sum::<usize>()
            + self.circles.iter().map(CircleGroup::len).sum::<usize>()
            + self.orthos.iter().map(|g| g.q.as_slice().len()).sum::<usize>()
    }
}

/// Loss gradient laid out like a [`ParamStore`]. Circle entries hold the
/// derivative with respect to `θᶜ`; the slack derivative is identically zero
/// and is not stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradient {
    pub unconstrained: Vec<Vec<f64>>,
    pub circles: Vec<Vec<f64>>,
    pub orthos: Vec<Matrix>,
}

impl Gradient {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Self {
            unconstrained: params
                .unconstrained
                .iter()
                .map(|b| vec![0.0; b.len()])
                .collect(),
            circles: params.circles.iter().map(|g| vec![0.0; g.len()]).collect(),
            orthos: params
                .orthos
                .iter()
                .map(|g| Matrix::zeros(g.q.rows(), g.q.cols()))
                .collect(),
        }
    }

    /// Flat view of every entry, in store order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.unconstrained.iter().for_each(|b| out.extend_from_slice(b));
        self.circles.iter().for_each(|b| out.extend_from_slice(b));
        self.orthos.iter().for_each(|m| out.extend_from_slice(m.as_slice()));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CircleMomenta {
    pub p_c: Vec<f64>,
    pub p_xi: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Momenta {
    pub unconstrained: Vec<Vec<f64>>,
    pub circles: Vec<CircleMomenta>,
    pub orthos: Vec<Matrix>,
}

/// A position together with a momentum on the cotangent space at it.
#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub position: ParamStore,
    pub momentum: Momenta,
}

impl PhasePoint {
    /// Zero momentum at `position`.
    pub fn at_rest(position: ParamStore) -> Self {
        let momentum = Momenta {
            unconstrained: position
                .unconstrained
                .iter()
                .map(|b| vec![0.0; b.len()])
                .collect(),
            circles: position
                .circles
                .iter()
                .map(|g| CircleMomenta {
                    p_c: vec![0.0; g.len()],
                    p_xi: vec![0.0; g.len()],
                })
                .collect(),
            orthos: position
                .orthos
                .iter()
                .map(|g| Matrix::zeros(g.q.rows(), g.q.cols()))
                .collect(),
        };
        Self { position, momentum }
    }

    /// Momentum set to `−h·∇L(θ₀)` and projected onto the cotangent space,
    /// the initialization matching the momentum-SGD buffer.
    pub fn from_gradient(position: ParamStore, grad: &Gradient, h: f64) -> Self {
        let unconstrained = grad
            .unconstrained
            .iter()
            .map(|g| g.iter().map(|v| -h * v).collect())
            .collect();
        let circles = position
            .circles
            .iter()
            .zip(&grad.circles)
            .map(|(grp, g)| {
                let mut m = CircleMomenta {
                    p_c: g.iter().map(|v| -h * v).collect(),
                    p_xi: vec![0.0; grp.len()],
                };
                project_circle_momenta(grp, &mut m);
                m
            })
            .collect();
        let orthos = position
            .orthos
            .iter()
            .zip(&grad.orthos)
            .map(|(grp, g)| ortho_cotangent_project(&grp.q, &g.scaled(-h)))
            .collect();
        Self {
            position,
            momentum: Momenta {
                unconstrained,
                circles,
                orthos,
            },
        }
    }

    /// Largest violation of `∇gᵀp = 0` over all constrained groups.
    pub fn cotangency_residual(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (g, m) in self.position.circles.iter().zip(&self.momentum.circles) {
            for i in 0..g.len() {
                let v = (g.theta[i] * m.p_c[i] + g.xi[i] * m.p_xi[i]).abs();
                worst = worst.max(v);
            }
        }
        for (g, p) in self.position.orthos.iter().zip(&self.momentum.orthos) {
            worst = worst.max(ortho_cotangency_residual(&g.q, p));
        }
        worst
    }

    /// Kinetic energy `½|p|²`.
    pub fn kinetic_energy(&self) -> f64 {
        let mut sum = 0.0;
        for b in &self.momentum.unconstrained {
            sum += b.iter().map(|v| v * v).sum::<f64>();
        }
        for m in &self.momentum.circles {
            sum += m.p_c.iter().chain(&m.p_xi).map(|v| v * v).sum::<f64>();
        }
        for p in &self.momentum.orthos {
            sum += p.frobenius_dot(p);
        }
        0.5 * sum
    }
}

/// Gradient of the loss at a parameter store for a given minibatch.
///
/// Implementations must be pure: the same inputs give the same gradient.
pub trait GradientOracle {
    type Batch: ?Sized;

    fn gradient(&self, params: &ParamStore, batch: &Self::Batch) -> Result<Gradient>;
}

/// Adapts a closure `Fn(&ParamStore) -> Gradient` (no batch) into an oracle.
pub struct FnOracle<F>(pub F);

impl<F> GradientOracle for FnOracle<F>
where
    F: Fn(&ParamStore) -> Gradient,
{
    type Batch = ();

    fn gradient(&self, params: &ParamStore, _batch: &()) -> Result<Gradient> {
        Ok((self.0)(params))
    }
}

/// Zero potential on any store.
pub struct ZeroPotential;

impl GradientOracle for ZeroPotential {
    type Batch = ();

    fn gradient(&self, params: &ParamStore, _batch: &()) -> Result<Gradient> {
        Ok(Gradient::zeros_like(params))
    }
}

/// Negative-control switches used by the verification suite.
#[derive(Clone, Copy, Debug, Default)]
pub struct StepOptions {
    /// Leave momenta unprojected in the O and B steps and at the end of the
    /// orthogonal A step. (The circle A step is cotangent by construction.)
    pub skip_cotangent_projection: bool,
}

fn add_noise(values: &mut [f64], scale: f64, rng: &mut Rng) {
    if scale == 0.0 {
        return;
    }
    for v in values {
        *v += scale * rng.normal();
    }
}

fn project_circle_momenta(g: &CircleGroup, m: &mut CircleMomenta) {
    for i in 0..g.len() {
        let (a, b) = circle_cotangent_project(m.p_c[i], m.p_xi[i], g.theta[i], g.xi[i], g.radii[i]);
        m.p_c[i] = a;
        m.p_xi[i] = b;
    }
}

// ---------------------------------------------------------------------------
// Overdamped
// ---------------------------------------------------------------------------

/// `θ' = θ − h·∇ + √(2τh)·R`.
pub fn em_step_unconstrained(
    theta: &[f64],
    grad: &[f64],
    cfg: &IntegratorConfig,
    rng: &mut Rng,
) -> Vec<f64> {
    let mut out: Vec<f64> = theta.iter().zip(grad).map(|(t, g)| t - cfg.h * g).collect();
    add_noise(&mut out, cfg.em_noise_scale(), rng);
    out
}

pub fn cola_od_circle_step(
    group: &CircleGroup,
    grad_theta_c: &[f64],
    cfg: &IntegratorConfig,
    rng: &mut Rng,
) -> Result<CircleGroup> {
    let mut theta_bar: Vec<f64> = group
        .theta
        .iter()
        .zip(grad_theta_c)
        .map(|(t, g)| t - cfg.h * g)
        .collect();
    let mut xi_bar = group.xi.clone();
    let scale = cfg.em_noise_scale();
    add_noise(&mut theta_bar, scale, rng);
    add_noise(&mut xi_bar, scale, rng);

    let mut out = group.clone();
    for i in 0..group.len() {
        let r = group.radii[i];
        let (t, x) = match cfg.projection_variant {
            ProjectionVariant::Orthogonal => circle_project_orthogonal(theta_bar[i], xi_bar[i], r)?,
            ProjectionVariant::Oblique => circle_project_oblique(
                theta_bar[i],
                xi_bar[i],
                group.theta[i],
                group.xi[i],
                r,
            )?,
        };
        out.theta[i] = t;
        out.xi[i] = x;
    }
    Ok(out)
}

pub fn cola_od_ortho_step(
    group: &OrthoGroup,
    grad_q: &Matrix,
    cfg: &IntegratorConfig,
    rng: &mut Rng,
) -> Result<OrthoGroup> {
    let mut proposal = group.q.clone();
    proposal.axpy(-cfg.h, grad_q);
    let scale = cfg.em_noise_scale();
    if scale > 0.0 {
        let noise = standard_normal_matrix(proposal.rows(), proposal.cols(), rng);
        proposal.axpy(scale, &noise);
    }
    let projected = ortho_quasi_newton_project(&group.q, &proposal, cfg.k_max, cfg.tol)?;
    Ok(OrthoGroup {
        q: projected.q,
        orientation: group.orientation,
    })
}

/// One overdamped step over a whole store (or a plain EM step if it has no
/// constrained groups).
pub fn od_step<O: GradientOracle + ?Sized>(
    params: &ParamStore,
    oracle: &O,
    batch: &O::Batch,
    cfg: &IntegratorConfig,
    rng: &mut Rng,
) -> Result<ParamStore> {
    let grad = oracle.gradient(params, batch)?;
    od_step_with_gradient(params, &grad, cfg, rng)
}

pub fn od_step_with_gradient(
    params: &ParamStore,
    grad: &Gradient,
    cfg: &IntegratorConfig,
    rng: &mut Rng,
) -> Result<ParamStore> {
    let unconstrained = params
        .unconstrained
        .iter()
        .zip(&grad.unconstrained)
        .map(|(t, g)| em_step_unconstrained(t, g, cfg, rng))
        .collect();
    let circles = params
        .circles
        .iter()
        .zip(&grad.circles)
        .map(|(grp, g)| cola_od_circle_step(grp, g, cfg, rng))
        .collect::<Result<_>>()?;
    let orthos = params
        .orthos
        .iter()
        .zip(&grad.orthos)
        .map(|(grp, g)| cola_od_ortho_step(grp, g, cfg, rng))
        .collect::<Result<_>>()?;
    Ok(ParamStore {
        unconstrained,
        circles,
        orthos,
    })
}

// ---------------------------------------------------------------------------
// Underdamped sub-steps, circle groups
// ---------------------------------------------------------------------------

/// Exact geodesic flow: each `(θᵢ, ξᵢ)` rotates at angular speed
/// `ωᵢ = (ξᵢpᶜᵢ − θᵢp^ξᵢ)/rᵢ²` for time `h`.
pub fn a_step_circle(
    group: &CircleGroup,
    momenta: &CircleMomenta,
    h: f64,
) -> (CircleGroup, CircleMomenta) {
    let mut g = group.clone();
    let mut m = momenta.clone();
    for i in 0..group.len() {
        let (t, x) = (group.theta[i], group.xi[i]);
        let r2 = group.radii[i] * group.radii[i];
        let omega = (x * momenta.p_c[i] - t * momenta.p_xi[i]) / r2;
        let (s, c) = (omega * h).sin_cos();
        let t1 = c * t + s * x;
        let x1 = -s * t + c * x;
        g.theta[i] = t1;
        g.xi[i] = x1;
        m.p_c[i] = omega * x1;
        m.p_xi[i] = -omega * t1;
    }
    (g, m)
}

/// Gradient impulse restricted to the cotangent space; positions unchanged.
pub fn b_step_circle(
    group: &CircleGroup,
    momenta: &CircleMomenta,
    grad_theta_c: &[f64],
    h: f64,
) -> CircleMomenta {
    b_step_circle_with(group, momenta, grad_theta_c, h, StepOptions::default())
}

fn b_step_circle_with(
    group: &CircleGroup,
    momenta: &CircleMomenta,
    grad_theta_c: &[f64],
    h: f64,
    opts: StepOptions,
) -> CircleMomenta {
    let mut m = momenta.clone();
    for (p, g) in m.p_c.iter_mut().zip(grad_theta_c) {
        *p -= h * g;
    }
    if !opts.skip_cotangent_projection {
        project_circle_momenta(group, &mut m);
    }
    m
}

/// Ornstein–Uhlenbeck kick on `(pᶜ, p^ξ)` followed by cotangent projection.
pub fn o_step_circle(
    group: &CircleGroup,
    momenta: &CircleMomenta,
    cfg: &IntegratorConfig,
    rng: &mut Rng,
) -> CircleMomenta {
    o_step_circle_with(group, momenta, cfg, rng, StepOptions::default())
}

fn o_step_circle_with(
    group: &CircleGroup,
    momenta: &CircleMomenta,
    cfg: &IntegratorConfig,
    rng: &mut Rng,
    opts: StepOptions,
) -> CircleMomenta {
    let (decay, noise) = cfg.ou_coefficients();
    let mut m = momenta.clone();
    m.p_c.iter_mut().for_each(|p| *p *= decay);
    m.p_xi.iter_mut().for_each(|p| *p *= decay);
    add_noise(&mut m.p_c, noise, rng);
    add_noise(&mut m.p_xi, noise, rng);
    if !opts.skip_cotangent_projection {
        project_circle_momenta(group, &mut m);
    }
    m
}

// ---------------------------------------------------------------------------
// Underdamped sub-steps, orthogonal groups
// ---------------------------------------------------------------------------

/// RATTLE-type drift: `Q̄ = Q + hP`, quasi-Newton back to the manifold, then
/// the momentum implied by the position correction, projected at the new
/// point.
pub fn a_step_ortho(
    group: &OrthoGroup,
    p: &Matrix,
    h: f64,
    k_max: usize,
    tol: f64,
) -> Result<(OrthoGroup, Matrix)> {
    a_step_ortho_with(group, p, h, k_max, tol, StepOptions::default())
}

fn a_step_ortho_with(
    group: &OrthoGroup,
    p: &Matrix,
    h: f64,
    k_max: usize,
    tol: f64,
    opts: StepOptions,
) -> Result<(OrthoGroup, Matrix)> {
    let mut proposal = group.q.clone();
    proposal.axpy(h, p);
    let projected = ortho_quasi_newton_project(&group.q, &proposal, k_max, tol)?;
    let q_new = projected.q;
    let mut p_bar = p.clone();
    let correction = q_new.sub(&proposal);
    p_bar.axpy(1.0 / h, &correction);
    let p_new = if opts.skip_cotangent_projection {
        p_bar
    } else {
        ortho_cotangent_project(&q_new, &p_bar)
    };
    Ok((
        OrthoGroup {
            q: q_new,
            orientation: group.orientation,
        },
        p_new,
    ))
}

pub fn b_step_ortho(group: &OrthoGroup, p: &Matrix, grad_q: &Matrix, h: f64) -> Matrix {
    b_step_ortho_with(group, p, grad_q, h, StepOptions::default())
}

fn b_step_ortho_with(
    group: &OrthoGroup,
    p: &Matrix,
    grad_q: &Matrix,
    h: f64,
    opts: StepOptions,
) -> Matrix {
    let mut p_bar = p.clone();
    p_bar.axpy(-h, grad_q);
    if opts.skip_cotangent_projection {
        p_bar
    } else {
        ortho_cotangent_project(&group.q, &p_bar)
    }
}

pub fn o_step_ortho(group: &OrthoGroup, p: &Matrix, cfg: &IntegratorConfig, rng: &mut Rng) -> Matrix {
    o_step_ortho_with(group, p, cfg, rng, StepOptions::default())
}

fn o_step_ortho_with(
    group: &OrthoGroup,
    p: &Matrix,
    cfg: &IntegratorConfig,
    rng: &mut Rng,
    opts: StepOptions,
) -> Matrix {
    let (decay, noise) = cfg.ou_coefficients();
    let mut p_bar = p.scaled(decay);
    if noise > 0.0 {
        let r = standard_normal_matrix(p.rows(), p.cols(), rng);
        p_bar.axpy(noise, &r);
    }
    if opts.skip_cotangent_projection {
        p_bar
    } else {
        ortho_cotangent_project(&group.q, &p_bar)
    }
}

// ---------------------------------------------------------------------------
// Store-level composition
// ---------------------------------------------------------------------------

fn o_step_all(phase: &mut PhasePoint, cfg: &IntegratorConfig, rng: &mut Rng, opts: StepOptions) {
    let (decay, noise) = cfg.ou_coefficients();
    for p in &mut phase.momentum.unconstrained {
        p.iter_mut().for_each(|v| *v *= decay);
        add_noise(p, noise, rng);
    }
    for (g, m) in phase.position.circles.iter().zip(&mut phase.momentum.circles) {
        *m = o_step_circle_with(g, m, cfg, rng, opts);
    }
    for (g, p) in phase.position.orthos.iter().zip(&mut phase.momentum.orthos) {
        *p = o_step_ortho_with(g, p, cfg, rng, opts);
    }
}

fn b_step_all(phase: &mut PhasePoint, grad: &Gradient, h: f64, opts: StepOptions) {
    for (p, g) in phase.momentum.unconstrained.iter_mut().zip(&grad.unconstrained) {
        p.iter_mut().zip(g).for_each(|(v, gi)| *v -= h * gi);
    }
    for ((grp, m), g) in phase
        .position
        .circles
        .iter()
        .zip(&mut phase.momentum.circles)
        .zip(&grad.circles)
    {
        *m = b_step_circle_with(grp, m, g, h, opts);
    }
    for ((grp, p), g) in phase
        .position
        .orthos
        .iter()
        .zip(&mut phase.momentum.orthos)
        .zip(&grad.orthos)
    {
        *p = b_step_ortho_with(grp, p, g, h, opts);
    }
}

fn a_step_all(phase: &mut PhasePoint, cfg: &IntegratorConfig, opts: StepOptions) -> Result<()> {
    let h = cfg.h;
    for (t, p) in phase
        .position
        .unconstrained
        .iter_mut()
        .zip(&phase.momentum.unconstrained)
    {
        t.iter_mut().zip(p).for_each(|(ti, pi)| *ti += h * pi);
    }
    for (g, m) in phase
        .position
        .circles
        .iter_mut()
        .zip(&mut phase.momentum.circles)
    {
        let (g1, m1) = a_step_circle(g, m, h);
        *g = g1;
        *m = m1;
    }
    for (g, p) in phase
        .position
        .orthos
        .iter_mut()
        .zip(&mut phase.momentum.orthos)
    {
        let (g1, p1) = a_step_ortho_with(g, p, h, cfg.k_max, cfg.tol, opts)?;
        *g = g1;
        *p = p1;
    }
    Ok(())
}

/// One underdamped step with a single gradient evaluation.
///
/// The default order is O, B, A; [`Splitting::Abo`] runs A, B, O instead
/// (the gradient is then taken after the drift).
pub fn oba_step<O: GradientOracle + ?Sized>(
    phase: &PhasePoint,
    oracle: &O,
    batch: &O::Batch,
    cfg: &IntegratorConfig,
    rng: &mut Rng,
) -> Result<PhasePoint> {
    oba_step_with(phase, oracle, batch, cfg, rng, StepOptions::default())
}

pub fn oba_step_with<O: GradientOracle + ?Sized>(
    phase: &PhasePoint,
    oracle: &O,
    batch: &O::Batch,
    cfg: &IntegratorConfig,
    rng: &mut Rng,
    opts: StepOptions,
) -> Result<PhasePoint> {
    let mut next = phase.clone();
    match cfg.splitting {
        Splitting::Oba => {
            o_step_all(&mut next, cfg, rng, opts);
            let grad = oracle.gradient(&next.position, batch)?;
            b_step_all(&mut next, &grad, cfg.h, opts);
            a_step_all(&mut next, cfg, opts)?;
        }
        Splitting::Abo => {
            a_step_all(&mut next, cfg, opts)?;
            let grad = oracle.gradient(&next.position, batch)?;
            b_step_all(&mut next, &grad, cfg.h, opts);
            o_step_all(&mut next, cfg, rng, opts);
        }
    }
    Ok(next)
}

/// Reference momentum-SGD recursion: `v' = μv + ∇`, `θ' = θ − lr·v'`.
pub fn sgdm_reference_step(
    theta: &[f64],
    v: &[f64],
    grad: &[f64],
    lr: f64,
    mu: f64,
) -> (Vec<f64>, Vec<f64>) {
    let v_new: Vec<f64> = v.iter().zip(grad).map(|(vi, g)| mu * vi + g).collect();
    let theta_new = theta.iter().zip(&v_new).map(|(t, vi)| t - lr * vi).collect();
    (theta_new, v_new)
}

// ---------------------------------------------------------------------------
// Stateful driver
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
enum State {
    Positions(ParamStore),
    Phase(PhasePoint),
    Momentum { params: ParamStore, velocity: Vec<Vec<f64>> },
}

/// Advances a parameter store with the scheme named in its config.
///
/// Momentum schemes initialize their momentum from the first gradient they
/// see: `p₀ = −h·∇L(θ₀)` (projected) for the underdamped scheme and
/// `v₀ = ∇L(θ₀)` for momentum SGD, so the two coincide under the
/// `μ = e^{−γh}`, `lr = h²` mapping.
#[derive(Clone, Debug)]
pub struct Integrator {
    cfg: IntegratorConfig,
    state: State,
    initialized: bool,
    steps: u64,
}

impl Integrator {
    pub fn new(cfg: IntegratorConfig, params: ParamStore) -> Result<Self> {
        cfg.validate()?;
        let state = match cfg.scheme {
            Scheme::Od => State::Positions(params),
            Scheme::BaselineEm => {
                if !params.is_unconstrained() {
                    return Err(Error::Config(
                        "baseline_em requires a layout without constrained groups".into(),
                    ));
                }
                State::Positions(params)
            }
            Scheme::UdOba => State::Phase(PhasePoint::at_rest(params)),
            Scheme::BaselineSgdm => {
                if !params.is_unconstrained() {
                    return Err(Error::Config(
                        "baseline_sgdm requires a layout without constrained groups".into(),
                    ));
                }
                let velocity = params.unconstrained.iter().map(|b| vec![0.0; b.len()]).collect();
                State::Momentum { params, velocity }
            }
        };
        Ok(Self {
            cfg,
            state,
            initialized: false,
            steps: 0,
        })
    }

    pub fn config(&self) -> &IntegratorConfig {
        &self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn params(&self) -> &ParamStore {
        match &self.state {
            State::Positions(p) => p,
            State::Phase(ph) => &ph.position,
            State::Momentum { params, .. } => params,
        }
    }

    pub fn phase(&self) -> Option<&PhasePoint> {
        match &self.state {
            State::Phase(ph) => Some(ph),
            _ => None,
        }
    }

    pub fn step<O: GradientOracle + ?Sized>(
        &mut self,
        oracle: &O,
        batch: &O::Batch,
        rng: &mut Rng,
    ) -> Result<()> {
        let cfg = &self.cfg;
        match &mut self.state {
            State::Positions(p) => {
                *p = od_step(p, oracle, batch, cfg, rng)?;
            }
            State::Phase(ph) => {
                if !self.initialized {
                    let g = oracle.gradient(&ph.position, batch)?;
                    *ph = PhasePoint::from_gradient(ph.position.clone(), &g, cfg.h);
                }
                *ph = oba_step(ph, oracle, batch, cfg, rng)?;
            }
            State::Momentum { params, velocity } => {
                let g = oracle.gradient(params, batch)?;
                if !self.initialized {
                    velocity.clone_from(&g.unconstrained);
                }
                for ((t, v), gi) in params
                    .unconstrained
                    .iter_mut()
                    .zip(velocity.iter_mut())
                    .zip(&g.unconstrained)
                {
                    let (t1, v1) = sgdm_reference_step(t, v, gi, cfg.h, cfg.momentum);
                    *t = t1;
                    *v = v1;
                }
            }
        }
        self.initialized = true;
        self.steps += 1;
        Ok(())
    }
}
