//! Circle and orthogonality constraints: residuals, position projections,
//! cotangent projections and feasible initialization.
//!
//! A circle group bounds each constrained parameter by `|θᵢ| ≤ rᵢ` through a
//! slack coordinate with `θᵢ² + ξᵢ² = rᵢ²`. An orthogonality group stores a
//! tall matrix `Q` (`r ≥ s`) subject to `QᵀQ = I_s`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Below this norm a point in the (θ, ξ) plane has no well-defined nearest
/// point on the circle.
pub const DEGENERATE_EPS: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct CircleGroup {
    pub theta: Vec<f64>,
    pub xi: Vec<f64>,
    pub radii: Vec<f64>,
}

impl CircleGroup {
    /// Builds an on-manifold group from constrained values, solving for the
    /// nonnegative slack.
    pub fn new(theta: Vec<f64>, radii: Vec<f64>) -> Result<Self> {
        let xi = circle_slack_init(&theta, &radii)?;
        Ok(Self { theta, xi, radii })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// `maxᵢ |θᵢ² + ξᵢ² − rᵢ²|`.
    pub fn max_residual(&self) -> f64 {
        circle_residual(self)
            .into_iter()
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Which way a layer's weight matrix is stored as `Q`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `Q = W`; the constraint is `WᵀW = I`.
    AsIs,
    /// `Q = Wᵀ`; the constraint is `WWᵀ = I`.
    Transposed,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OrthoGroup {
    pub q: Matrix,
    pub orientation: Orientation,
}

impl OrthoGroup {
    /// Wraps a weight matrix (`out × in`), transposing it if it is wide.
    pub fn from_weight(w: &Matrix) -> Self {
        let orientation = ortho_orientation(w.rows(), w.cols());
        let q = match orientation {
            Orientation::AsIs => w.clone(),
            Orientation::Transposed => w.transpose(),
        };
        Self { q, orientation }
    }

    pub fn weight(&self) -> Matrix {
        match self.orientation {
            Orientation::AsIs => self.q.clone(),
            Orientation::Transposed => self.q.transpose(),
        }
    }

    /// Number of columns `s` of the stored `Q`.
    pub fn s(&self) -> usize {
        self.q.cols()
    }

    pub fn residual(&self) -> f64 {
        ortho_residual(self)
    }
}

/// Largest constraint violation across a parameter store.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize)]
pub struct ConstraintResidual {
    pub max_abs: f64,
    pub per_group: BTreeMap<String, f64>,
}

impl ConstraintResidual {
    pub fn record(&mut self, group: impl Into<String>, value: f64) {
        self.max_abs = self.max_abs.max(value);
        self.per_group.insert(group.into(), value);
    }
}

pub fn circle_residual(g: &CircleGroup) -> Vec<f64> {
    g.theta
        .iter()
        .zip(&g.xi)
        .zip(&g.radii)
        .map(|((t, x), r)| t * t + x * x - r * r)
        .collect()
}

/// `ξᵢ = +√(rᵢ² − θᵢ²)`; fails if some `|θᵢ| > rᵢ`.
pub fn circle_slack_init(theta_c: &[f64], radii: &[f64]) -> Result<Vec<f64>> {
    if theta_c.len() != radii.len() {
        return Err(Error::DimensionMismatch {
            op: "circle_slack_init",
            left: (theta_c.len(), 1),
            right: (radii.len(), 1),
        });
    }
    theta_c
        .iter()
        .zip(radii)
        .enumerate()
        .map(|(index, (&theta, &radius))| {
            if !(radius > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "radius {radius} at index {index} must be positive"
                )));
            }
            if theta.abs() > radius {
                return Err(Error::InfeasibleInit {
                    index,
                    theta,
                    radius,
                });
            }
            Ok(((radius - theta) * (radius + theta)).sqrt())
        })
        .collect()
}

/// Nearest point on the circle of radius `r` to `(θ̄, ξ̄)`.
///
/// Valid in every quadrant. Points already on the circle to rounding
/// accuracy are returned unchanged, which makes the map exactly idempotent.
pub fn circle_project_orthogonal(theta_bar: f64, xi_bar: f64, r: f64) -> Result<(f64, f64)> {
    let norm = theta_bar.hypot(xi_bar);
    if norm < DEGENERATE_EPS {
        return Err(Error::DegeneratePoint {
            theta: theta_bar,
            xi: xi_bar,
        });
    }
    let g = theta_bar * theta_bar + xi_bar * xi_bar - r * r;
    if g.abs() <= 4.0 * f64::EPSILON * r * r {
        return Ok((theta_bar, xi_bar));
    }
    let scale = r / norm;
    Ok((theta_bar * scale, xi_bar * scale))
}

/// Multiplier `λ` such that `(θ̄, ξ̄) − 2λ(θₙ, ξₙ)` lies on the circle,
/// choosing the root of smaller magnitude (the landing point nearest the
/// base point).
pub fn circle_oblique_multiplier(
    theta_bar: f64,
    xi_bar: f64,
    theta_n: f64,
    xi_n: f64,
    r: f64,
) -> Result<f64> {
    // 4r²λ² − 4sλ + c = 0 with s = b·n, c = |b|² − r², using |n|² = r².
    let r2 = r * r;
    let s = theta_bar * theta_n + xi_bar * xi_n;
    let c = theta_bar * theta_bar + xi_bar * xi_bar - r2;
    let disc = s * s - r2 * c;
    if disc < 0.0 {
        return Err(Error::NoRealRoot { discriminant: disc });
    }
    let big = s + s.signum() * disc.sqrt();
    if big == 0.0 {
        return Ok(0.0);
    }
    Ok(c / (2.0 * big))
}

/// Projection of `(θ̄, ξ̄)` onto the circle along the normal at the base point
/// `(θₙ, ξₙ)`.
pub fn circle_project_oblique(
    theta_bar: f64,
    xi_bar: f64,
    theta_n: f64,
    xi_n: f64,
    r: f64,
) -> Result<(f64, f64)> {
    let lambda = circle_oblique_multiplier(theta_bar, xi_bar, theta_n, xi_n, r)?;
    Ok((
        theta_bar - 2.0 * lambda * theta_n,
        xi_bar - 2.0 * lambda * xi_n,
    ))
}

/// Removes the radial component of `(p̄ᶜ, p̄^ξ)` at the on-circle point `(θ, ξ)`.
pub fn circle_cotangent_project(p_c: f64, p_xi: f64, theta: f64, xi: f64, r: f64) -> (f64, f64) {
    let radial = (theta * p_c + xi * p_xi) / (r * r);
    (p_c - theta * radial, p_xi - xi * radial)
}

/// Orientation rule for a weight of shape `rows_out × cols_in`: keep it when
/// it is tall or square, transpose it when it is wide.
pub fn ortho_orientation(rows_out: usize, cols_in: usize) -> Orientation {
    if cols_in <= rows_out {
        Orientation::AsIs
    } else {
        Orientation::Transposed
    }
}

/// `‖QᵀQ − I_s‖_F`.
pub fn ortho_residual(g: &OrthoGroup) -> f64 {
    g.q.orthonormality_residual()
}

#[derive(Clone, Debug)]
pub struct QuasiNewtonOutcome {
    pub q: Matrix,
    /// Corrective updates applied.
    pub iterations: usize,
    /// `‖Λ‖_F` at the last evaluation (before the last update when the
    /// iteration cap was hit).
    pub last_multiplier_norm: f64,
    /// Whether the tolerance on `‖Λ‖_F` was reached.
    pub converged: bool,
}

/// Returns a proposal `q0` to the Stiefel manifold along the normal space of
/// the base point: `Q ← Q − Q_base·½(QᵀQ − I)`, repeated until `‖Λ‖_F ≤ tol`
/// or `k_max` updates have been made.
pub fn ortho_quasi_newton_project(
    q_base: &Matrix,
    q0: &Matrix,
    k_max: usize,
    tol: f64,
) -> Result<QuasiNewtonOutcome> {
    if q_base.shape() != q0.shape() {
        return Err(Error::DimensionMismatch {
            op: "ortho_quasi_newton_project",
            left: q_base.shape(),
            right: q0.shape(),
        });
    }
    let mut q = q0.clone();
    let mut initial = None;
    let mut lam_norm = f64::NAN;
    for k in 0..=k_max {
        let mut lambda = q.t_matmul(&q);
        lambda.sub_identity(1.0);
        lambda.scale(0.5);
        lam_norm = lambda.frobenius_norm();
        let init = *initial.get_or_insert(lam_norm);
        if lam_norm <= tol {
            return Ok(QuasiNewtonOutcome {
                q,
                iterations: k,
                last_multiplier_norm: lam_norm,
                converged: true,
            });
        }
        if !lam_norm.is_finite() || lam_norm > 10.0 * init {
            return Err(Error::QuasiNewtonDiverged {
                iteration: k,
                residual: 2.0 * lam_norm,
                initial: 2.0 * init,
            });
        }
        if k == k_max {
            break;
        }
        crate::numerics::gemm(
            -1.0,
            q_base,
            crate::numerics::Trans::No,
            &lambda,
            crate::numerics::Trans::No,
            1.0,
            &mut q,
        );
    }
    Ok(QuasiNewtonOutcome {
        q,
        iterations: k_max,
        last_multiplier_norm: lam_norm,
        converged: false,
    })
}

/// `Π_Q P̄ = P̄ − ½Q(P̄ᵀQ + QᵀP̄)`.
pub fn ortho_cotangent_project(q: &Matrix, p_bar: &Matrix) -> Matrix {
    let mut sym = q.t_matmul(p_bar);
    let t = sym.transpose();
    sym.axpy(1.0, &t);
    let mut p = p_bar.clone();
    crate::numerics::gemm(
        -0.5,
        q,
        crate::numerics::Trans::No,
        &sym,
        crate::numerics::Trans::No,
        1.0,
        &mut p,
    );
    p
}

/// `‖PᵀQ + QᵀP‖_F`, zero on the cotangent space.
pub fn ortho_cotangency_residual(q: &Matrix, p: &Matrix) -> f64 {
    let s = q.t_matmul(p);
    s.add(&s.transpose()).frobenius_norm()
}

/// Matrix shape of a convolution kernel `(n_out, n_in, k_h, k_w)`:
/// `n_out × (n_in·k_h·k_w)`.
pub fn reshape_conv_weight(tensor_dims: (usize, usize, usize, usize)) -> (usize, usize) {
    let (n_out, n_in, k_h, k_w) = tensor_dims;
    (n_out, n_in * k_h * k_w)
}
