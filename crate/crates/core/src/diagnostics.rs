//! Numerical oracles for constrained dynamics on a general manifold
//! `Σ = {q : g(q) = 0}`: the tangent projection, the mean curvature vector,
//! the equivalent unconstrained SDE, and statistics of trajectories.

use crate::error::{Error, Result};
use crate::numerics::{orthonormalize_columns, standard_normal_matrix, Matrix, Rng};

type ConstraintFn = Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
type JacobianFn = Box<dyn Fn(&[f64]) -> Matrix + Send + Sync>;

/// Smallest admissible Cholesky pivot of `GGᵀ`.
pub const RANK_TOL: f64 = 1e-8;

/// Default central-difference step for derivatives of `Π`.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// `m` equality constraints on `ℝ^d`, with an optional analytic Jacobian.
pub struct GenericConstraint {
    dim: usize,
    count: usize,
    eval: ConstraintFn,
    jacobian: Option<JacobianFn>,
    /// Step of the central differences used when no Jacobian is given.
    pub fd_step: f64,
}

impl std::fmt::Debug for GenericConstraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GenericConstraint")
            .field("dim", &self.dim)
            .field("count", &self.count)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl GenericConstraint {
    pub fn new(
        dim: usize,
        count: usize,
        eval: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            count,
            eval: Box::new(eval),
            jacobian: None,
            fd_step: 1e-6,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&[f64]) -> Matrix + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Box::new(jac));
        self
    }

    /// `|q|² − r² = 0` in `ℝ^d`.
    pub fn sphere(dim: usize, r: f64) -> Self {
        Self::new(dim, 1, move |q| vec![q.iter().map(|v| v * v).sum::<f64>() - r * r])
            .with_jacobian(move |q| {
                Matrix::from_vec(1, q.len(), q.iter().map(|v| 2.0 * v).collect()).expect("1 row")
            })
    }

    /// Circle of radius `r` in the plane.
    pub fn circle(r: f64) -> Self {
        Self::sphere(2, r)
    }

    /// No constraint at all.
    pub fn none(dim: usize) -> Self {
        Self::new(dim, 0, |_| Vec::new())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn eval(&self, q: &[f64]) -> Vec<f64> {
        (self.eval)(q)
    }

    /// `G(q) = ∇ᵀg(q)`, `m × d`.
    pub fn jacobian(&self, q: &[f64]) -> Matrix {
        if let Some(jac) = &self.jacobian {
            return jac(q);
        }
        let mut g = Matrix::zeros(self.count, self.dim);
        let mut x = q.to_vec();
        for j in 0..self.dim {
            let orig = x[j];
            x[j] = orig + self.fd_step;
            let up = self.eval(&x);
            x[j] = orig - self.fd_step;
            let down = self.eval(&x);
            x[j] = orig;
            for i in 0..self.count {
                g[(i, j)] = (up[i] - down[i]) / (2.0 * self.fd_step);
            }
        }
        g
    }
}

/// In-place Cholesky of a symmetric positive definite matrix; returns the
/// smallest squared pivot.
fn cholesky(a: &mut Matrix) -> f64 {
    let n = a.rows();
    let mut min_pivot = f64::INFINITY;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= a[(j, k)] * a[(j, k)];
        }
        min_pivot = min_pivot.min(d);
        if !(d > 0.0) {
            return d;
        }
        let l = d.sqrt();
        a[(j, j)] = l;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= a[(i, k)] * a[(j, k)];
            }
            a[(i, j)] = s / l;
        }
    }
    min_pivot
}

/// Solves `L Lᵀ X = B` column by column.
fn cholesky_solve(l: &Matrix, b: &mut Matrix) {
    let n = l.rows();
    for c in 0..b.cols() {
        for i in 0..n {
            let mut s = b[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = b[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * b[(k, c)];
            }
            b[(i, c)] = s / l[(i, i)];
        }
    }
}

/// `Π = I − Gᵀ(GGᵀ)⁻¹G`, computed by solving with `GGᵀ` rather than
/// inverting it.
pub fn numeric_projection(c: &GenericConstraint, q: &[f64]) -> Result<Matrix> {
    let d = c.dim();
    let mut pi = Matrix::identity(d);
    if c.count() == 0 {
        return Ok(pi);
    }
    let g = c.jacobian(q);
    let mut ggt = g.matmul_t(&g);
    let pivot = cholesky(&mut ggt);
    if !(pivot > RANK_TOL) {
        return Err(Error::JacobianRankDeficient { pivot });
    }
    let mut x = g.clone();
    cholesky_solve(&ggt, &mut x);
    pi.axpy(-1.0, &g.t_matmul(&x));
    Ok(pi)
}

/// Mean curvature vector `Hᵢ = Σⱼₖ Πⱼₖ ∂ⱼΠᵢₖ`, with `∂ⱼΠ` by central
/// differences of step `fd_step` (Π recomputed at every stencil point).
pub fn mean_curvature(c: &GenericConstraint, q: &[f64], fd_step: f64) -> Result<Vec<f64>> {
    let d = c.dim();
    let pi = numeric_projection(c, q)?;
    let mut h = vec![0.0; d];
    let mut x = q.to_vec();
    for j in 0..d {
        let orig = x[j];
        x[j] = orig + fd_step;
        let up = numeric_projection(c, &x)?;
        x[j] = orig - fd_step;
        let down = numeric_projection(c, &x)?;
        x[j] = orig;
        for (i, hi) in h.iter_mut().enumerate() {
            for k in 0..d {
                let deriv = (up[(i, k)] - down[(i, k)]) / (2.0 * fd_step);
                *hi += pi[(j, k)] * deriv;
            }
        }
    }
    Ok(h)
}

fn mat_vec(a: &Matrix, v: &[f64]) -> Vec<f64> {
    (0..a.rows())
        .map(|i| a.row(i).iter().zip(v).map(|(x, y)| x * y).sum())
        .collect()
}

/// One Euler–Maruyama step of the unconstrained rewriting of constrained
/// overdamped Langevin,
/// `q' = q − hΠ∇V + √(2τh)·Πξ + τhH`.
///
/// Iterates drift off the manifold at `O(h)`; use only for comparisons of
/// distributions.
pub fn underlying_sde_step(
    c: &GenericConstraint,
    q: &[f64],
    grad: &[f64],
    h: f64,
    tau: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let pi = numeric_projection(c, q)?;
    let drift = mat_vec(&pi, grad);
    let mut out: Vec<f64> = q.iter().zip(&drift).map(|(qi, di)| qi - h * di).collect();
    if tau > 0.0 {
        let mut xi = vec![0.0; q.len()];
        rng.fill_normal(&mut xi);
        let noise = mat_vec(&pi, &xi);
        let curv = mean_curvature(c, q, DEFAULT_FD_STEP)?;
        let scale = (2.0 * tau * h).sqrt();
        for i in 0..out.len() {
            out[i] += scale * noise[i] + tau * h * curv[i];
        }
    }
    Ok(out)
}

/// Mean of `phi` over the recorded states.
pub fn time_average<T>(trajectory: &[T], phi: impl Fn(&T) -> f64) -> Result<f64> {
    if trajectory.is_empty() {
        return Err(Error::TooFewSamples {
            samples: 0,
            batches: 1,
        });
    }
    Ok(trajectory.iter().map(phi).sum::<f64>() / trajectory.len() as f64)
}

/// Batch-means estimate of the asymptotic variance `σ²` in
/// `√T(⟨φ⟩_T − E φ) → N(0, σ²)`: the series is cut into `n_batches`
/// contiguous blocks of length `b` (a leftover tail shorter than one block
/// is dropped), and the result is `b` times the sample variance of the
/// block means.
pub fn batch_means_variance(series: &[f64], n_batches: usize) -> Result<f64> {
    if n_batches < 2 || series.len() < n_batches {
        return Err(Error::TooFewSamples {
            samples: series.len(),
            batches: n_batches,
        });
    }
    let b = series.len() / n_batches;
    let means: Vec<f64> = series
        .chunks_exact(b)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / b as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / n_batches as f64;
    let var = means.iter().map(|m| (m - grand).powi(2)).sum::<f64>() / (n_batches - 1) as f64;
    Ok(b as f64 * var)
}

/// Running record of a scalar observable along a trajectory.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrajectoryStats {
    samples: Vec<f64>,
}

impl TrajectoryStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.samples.push(value);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn mean(&self) -> Result<f64> {
        time_average(&self.samples, |v| *v)
    }

    pub fn batch_means_variance(&self, n_batches: usize) -> Result<f64> {
        batch_means_variance(&self.samples, n_batches)
    }

    /// Standard error of the mean implied by the batch-means variance.
    pub fn standard_error(&self, n_batches: usize) -> Result<f64> {
        Ok((self.batch_means_variance(n_batches)? / self.len() as f64).sqrt())
    }
}

/// Uniformly distributed `r × s` matrix with orthonormal columns.
pub fn haar_stiefel_sample(r: usize, s: usize, rng: &mut Rng) -> Result<Matrix> {
    if r < s {
        return Err(Error::InvalidArgument(format!(
            "Stiefel sample needs r >= s, got {r} x {s}"
        )));
    }
    orthonormalize_columns(&standard_normal_matrix(r, s, rng))
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Counts of `values` in `bins` equal-width bins over `[lo, hi)`; values
/// outside the range are ignored.
pub fn histogram(values: &[f64], lo: f64, hi: f64, bins: usize) -> Vec<u64> {
    let mut counts = vec![0; bins];
    let width = (hi - lo) / bins as f64;
    for &v in values {
        if v >= lo && v < hi {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
    }
    counts
}
