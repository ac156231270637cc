//! Fully-connected ReLU networks with exact backpropagation.
//!
//! Layer `ℓ` computes `z = a·Wᵀ + b` with `W` stored `out × in` (row-major).
//! Every weight matrix is mapped to one parameter group according to a
//! [`ParamLayout`]; biases are always unconstrained.

use serde::{Deserialize, Serialize};

use crate::constraints::{circle_slack_init, ortho_orientation, CircleGroup, Orientation, OrthoGroup};
use crate::error::{Error, Result};
use crate::integrators::{Gradient, GradientOracle, ParamStore};
use crate::numerics::{gemm, orthonormalize_columns, standard_normal_matrix, Matrix, Rng, Trans};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Single logit per example, labels in `{0, 1}`.
    BceWithLogits,
    /// One logit per class, integer labels.
    SoftmaxCrossEntropy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    /// Input width, hidden widths, output width.
    pub layer_widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub loss: LossKind,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, loss: LossKind) -> Self {
        Self {
            layer_widths,
            activation: Activation::Relu,
            loss,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.layer_widths.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(format!(
                "layer_widths needs at least 2 entries, got {}",
                self.layer_widths.len()
            )));
        }
        if let Some(i) = self.layer_widths.iter().position(|&w| w == 0) {
            return Err(Error::Config(format!("layer_widths[{i}] must be positive")));
        }
        if self.loss == LossKind::BceWithLogits && *self.layer_widths.last().unwrap() != 1 {
            return Err(Error::Config(
                "bce_with_logits needs an output width of 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum LayerConstraint {
    Unconstrained,
    /// Every weight satisfies `|w| ≤ radius`.
    Circle { radius: f64 },
    /// The weight matrix (or its transpose, whichever is tall) has
    /// orthonormal columns.
    Orthogonal,
}

/// Constraint kind of each layer's weight matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamLayout {
    pub layers: Vec<LayerConstraint>,
}

impl ParamLayout {
    pub fn unconstrained(n_layers: usize) -> Self {
        Self {
            layers: vec![LayerConstraint::Unconstrained; n_layers],
        }
    }

    /// Orthogonal hidden-to-hidden weights; input and output layers free.
    pub fn orthogonal_hidden(n_layers: usize) -> Self {
        let layers = (0..n_layers)
            .map(|l| {
                if l == 0 || l + 1 == n_layers {
                    LayerConstraint::Unconstrained
                } else {
                    LayerConstraint::Orthogonal
                }
            })
            .collect();
        Self { layers }
    }

    /// Circle constraint on every weight, with one radius per layer.
    pub fn circle(radii: &[f64]) -> Self {
        Self {
            layers: radii
                .iter()
                .map(|&radius| LayerConstraint::Circle { radius })
                .collect(),
        }
    }
}

/// Inputs (`n × d_in`) and integer labels of a minibatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn new(inputs: Matrix, labels: Vec<usize>) -> Result<Self> {
        if inputs.rows() != labels.len() {
            return Err(Error::DimensionMismatch {
                op: "batch",
                left: inputs.shape(),
                right: (labels.len(), 1),
            });
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Slot {
    Unconstrained(usize),
    Circle(usize),
    Ortho(usize),
}

/// Result of [`Mlp::init`].
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct InitReport {
    /// Circle-constrained weights whose uniform draw fell outside `[−r, r]`
    /// and were clipped onto the boundary.
    pub clipped_circle_weights: usize,
}

/// A network architecture bound to a parameter layout.
#[derive(Clone, Debug)]
pub struct Mlp {
    spec: MlpSpec,
    layout: ParamLayout,
    weight_slots: Vec<Slot>,
    bias_slots: Vec<usize>,
    faulty_derivative: bool,
}

impl Mlp {
    pub fn new(spec: MlpSpec, layout: ParamLayout) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_layers();
        if layout.layers.len() != n {
            return Err(Error::Config(format!(
                "layout lists {} layers but the network has {n}",
                layout.layers.len()
            )));
        }
        let (mut nu, mut nc, mut no) = (0, 0, 0);
        let mut weight_slots = Vec::with_capacity(n);
        for c in &layout.layers {
            weight_slots.push(match *c {
                LayerConstraint::Unconstrained => {
                    nu += 1;
                    Slot::Unconstrained(nu - 1)
                }
                LayerConstraint::Circle { radius } => {
                    if !(radius > 0.0) || !radius.is_finite() {
                        return Err(Error::Config(format!("circle radius must be positive, got {radius}")));
                    }
                    nc += 1;
                    Slot::Circle(nc - 1)
                }
                LayerConstraint::Orthogonal => {
                    no += 1;
                    Slot::Ortho(no - 1)
                }
            });
        }
        let bias_slots = (nu..nu + n).collect();
        Ok(Self {
            spec,
            layout,
            weight_slots,
            bias_slots,
            faulty_derivative: false,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.layout
    }

    /// Test fixture: replaces the ReLU derivative with a wrong one, so
    /// backprop disagrees with finite differences.
    pub fn set_faulty_activation_derivative(&mut self, on: bool) {
        self.faulty_derivative = on;
    }

    fn dims(&self, l: usize) -> (usize, usize) {
        (self.spec.layer_widths[l + 1], self.spec.layer_widths[l])
    }

    /// Human-readable name of each layer's weight group, e.g. `W1 (orthogonal)`.
    pub fn layer_names(&self) -> Vec<String> {
        self.layout
            .layers
            .iter()
            .enumerate()
            .map(|(l, c)| {
                let kind = match c {
                    LayerConstraint::Unconstrained => "unconstrained",
                    LayerConstraint::Circle { .. } => "circle",
                    LayerConstraint::Orthogonal => "orthogonal",
                };
                format!("W{l} ({kind})")
            })
            .collect()
    }

    /// Draws initial parameters.
    ///
    /// Unconstrained weights and all biases: `U(−1/√N_in, 1/√N_in)`.
    /// Orthogonal weights: orthonormalized Gaussian. Circle weights: the
    /// same uniform draw, clipped into `[−r, r]` if needed, with the slack
    /// chosen nonnegative.
    pub fn init(&self, rng: &mut Rng) -> Result<(ParamStore, InitReport)> {
        let mut store = ParamStore::default();
        let mut biases = Vec::new();
        let mut report = InitReport::default();
        for (l, c) in self.layout.layers.iter().enumerate() {
            let (out, inp) = self.dims(l);
            let bound = 1.0 / (inp as f64).sqrt();
            match *c {
                LayerConstraint::Unconstrained => {
                    let w = (0..out * inp).map(|_| rng.uniform_range(-bound, bound)).collect();
                    store.unconstrained.push(w);
                }
                LayerConstraint::Circle { radius } => {
                    let mut theta = Vec::with_capacity(out * inp);
                    for _ in 0..out * inp {
                        let v: f64 = rng.uniform_range(-bound, bound);
                        if v.abs() > radius {
                            report.clipped_circle_weights += 1;
                        }
                        theta.push(v.clamp(-radius, radius));
                    }
                    let radii = vec![radius; theta.len()];
                    let xi = circle_slack_init(&theta, &radii)?;
                    store.circles.push(CircleGroup { theta, xi, radii });
                }
                LayerConstraint::Orthogonal => {
                    let orientation = ortho_orientation(out, inp);
                    let (r, s) = match orientation {
                        Orientation::AsIs => (out, inp),
                        Orientation::Transposed => (inp, out),
                    };
                    let q = orthonormalize_columns(&standard_normal_matrix(r, s, rng))?;
                    store.orthos.push(OrthoGroup { q, orientation });
                }
            }
            biases.push((0..out).map(|_| rng.uniform_range(-bound, bound)).collect());
        }
        store.unconstrained.extend(biases);
        Ok((store, report))
    }

    fn check_store(&self, params: &ParamStore) -> Result<()> {
        let mismatch = |what: &str| Err(Error::InvalidArgument(format!("parameter store does not match the layout ({what})")));
        let nu = self.weight_slots.iter().filter(|s| matches!(s, Slot::Unconstrained(_))).count();
        let nc = self.weight_slots.iter().filter(|s| matches!(s, Slot::Circle(_))).count();
        let no = self.weight_slots.len() - nu - nc;
        if params.unconstrained.len() != nu + self.spec.n_layers()
            || params.circles.len() != nc
            || params.orthos.len() != no
        {
            return mismatch("group counts");
        }
        for (l, slot) in self.weight_slots.iter().enumerate() {
            let (out, inp) = self.dims(l);
            let ok = match *slot {
                Slot::Unconstrained(i) => params.unconstrained[i].len() == out * inp,
                Slot::Circle(i) => params.circles[i].len() == out * inp,
                Slot::Ortho(i) => {
                    let g = &params.orthos[i];
                    match g.orientation {
                        Orientation::AsIs => g.q.shape() == (out, inp),
                        Orientation::Transposed => g.q.shape() == (inp, out),
                    }
                }
            };
            if !ok || params.unconstrained[self.bias_slots[l]].len() != out {
                return mismatch(&format!("layer {l} shape"));
            }
        }
        Ok(())
    }

    /// `z ← a·Wᵀ` for layer `l`.
    fn apply_weight(&self, params: &ParamStore, l: usize, a: &Matrix, z: &mut Matrix) {
        let (out, inp) = self.dims(l);
        match self.weight_slots[l] {
            Slot::Unconstrained(i) => {
                let w = Matrix::from_vec(out, inp, params.unconstrained[i].clone()).expect("checked");
                gemm(1.0, a, Trans::No, &w, Trans::Yes, 0.0, z);
            }
            Slot::Circle(i) => {
                let w = Matrix::from_vec(out, inp, params.circles[i].theta.clone()).expect("checked");
                gemm(1.0, a, Trans::No, &w, Trans::Yes, 0.0, z);
            }
            Slot::Ortho(i) => {
                let g = &params.orthos[i];
                match g.orientation {
                    Orientation::AsIs => gemm(1.0, a, Trans::No, &g.q, Trans::Yes, 0.0, z),
                    Orientation::Transposed => gemm(1.0, a, Trans::No, &g.q, Trans::No, 0.0, z),
                }
            }
        }
    }

    /// Pre-activations of every layer (the last one being the logits).
    fn forward_all(&self, params: &ParamStore, inputs: &Matrix) -> Result<Vec<Matrix>> {
        self.check_store(params)?;
        if inputs.cols() != self.spec.layer_widths[0] {
            return Err(Error::DimensionMismatch {
                op: "mlp_forward",
                left: inputs.shape(),
                right: (inputs.rows(), self.spec.layer_widths[0]),
            });
        }
        let n = inputs.rows();
        let mut zs: Vec<Matrix> = Vec::with_capacity(self.spec.n_layers());
        for l in 0..self.spec.n_layers() {
            let (out, _) = self.dims(l);
            let mut z = Matrix::zeros(n, out);
            match zs.last() {
                None => self.apply_weight(params, l, inputs, &mut z),
                Some(prev) => self.apply_weight(params, l, &relu(prev), &mut z),
            }
            let b = &params.unconstrained[self.bias_slots[l]];
            for r in 0..n {
                z.row_mut(r).iter_mut().zip(b).for_each(|(v, bi)| *v += bi);
            }
            zs.push(z);
        }
        Ok(zs)
    }

    /// Logits (`n × output width`).
    pub fn forward(&self, params: &ParamStore, inputs: &Matrix) -> Result<Matrix> {
        Ok(self.forward_all(params, inputs)?.pop().expect("at least one layer"))
    }

    /// Smallest `|z|` over all hidden pre-activations, or `∞` without hidden
    /// layers. Finite-difference checks need this well above their step.
    pub fn min_abs_preactivation(&self, params: &ParamStore, inputs: &Matrix) -> Result<f64> {
        let zs = self.forward_all(params, inputs)?;
        Ok(zs[..zs.len() - 1]
            .iter()
            .flat_map(|z| z.as_slice())
            .fold(f64::INFINITY, |m, v| m.min(v.abs())))
    }

    /// Mean loss and its exact gradient over `batch`. An empty batch has
    /// zero loss and zero gradient.
    pub fn loss_and_gradient(&self, params: &ParamStore, batch: &Batch) -> Result<(f64, Gradient)> {
        let zs = self.forward_all(params, &batch.inputs)?;
        let n = batch.len();
        let logits = zs.last().expect("at least one layer");
        let loss = loss_eval(logits, &batch.labels, self.spec.loss);
        let mut grad = Gradient::zeros_like(params);
        if n == 0 {
            return Ok((loss, grad));
        }

        let mut delta = loss_logit_gradient(logits, &batch.labels, self.spec.loss);
        delta.scale(1.0 / n as f64);
        for l in (0..self.spec.n_layers()).rev() {
            let (out, inp) = self.dims(l);
            let a_prev = if l == 0 { batch.inputs.clone() } else { relu(&zs[l - 1]) };

            let mut dw = Matrix::zeros(out, inp);
            gemm(1.0, &delta, Trans::Yes, &a_prev, Trans::No, 0.0, &mut dw);
            let db = &mut grad.unconstrained[self.bias_slots[l]];
            for r in 0..n {
                db.iter_mut().zip(delta.row(r)).for_each(|(g, d)| *g += d);
            }

            let mut next = if l > 0 { Some(Matrix::zeros(n, inp)) } else { None };
            match self.weight_slots[l] {
                Slot::Unconstrained(i) => {
                    if let Some(da) = next.as_mut() {
                        let w = Matrix::from_vec(out, inp, params.unconstrained[i].clone())?;
                        gemm(1.0, &delta, Trans::No, &w, Trans::No, 0.0, da);
                    }
                    grad.unconstrained[i] = dw.into_vec();
                }
                Slot::Circle(i) => {
                    if let Some(da) = next.as_mut() {
                        let w = Matrix::from_vec(out, inp, params.circles[i].theta.clone())?;
                        gemm(1.0, &delta, Trans::No, &w, Trans::No, 0.0, da);
                    }
                    grad.circles[i] = dw.into_vec();
                }
                Slot::Ortho(i) => {
                    let g = &params.orthos[i];
                    match g.orientation {
                        Orientation::AsIs => {
                            if let Some(da) = next.as_mut() {
                                gemm(1.0, &delta, Trans::No, &g.q, Trans::No, 0.0, da);
                            }
                            grad.orthos[i] = dw;
                        }
                        Orientation::Transposed => {
                            if let Some(da) = next.as_mut() {
                                gemm(1.0, &delta, Trans::No, &g.q, Trans::Yes, 0.0, da);
                            }
                            grad.orthos[i] = dw.transpose();
                        }
                    }
                }
            }

            if let Some(mut da) = next {
                let z = &zs[l - 1];
                for (d, zv) in da.as_mut_slice().iter_mut().zip(z.as_slice()) {
                    let active = if self.faulty_derivative { *zv < 0.0 } else { *zv > 0.0 };
                    if !active {
                        *d = 0.0;
                    }
                }
                delta = da;
            }
        }
        Ok((loss, grad))
    }

    /// Mean loss and accuracy over a whole labelled set.
    pub fn evaluate(&self, params: &ParamStore, batch: &Batch) -> Result<(f64, f64)> {
        let logits = self.forward(params, &batch.inputs)?;
        Ok((
            loss_eval(&logits, &batch.labels, self.spec.loss),
            accuracy_eval(&logits, &batch.labels, self.spec.loss),
        ))
    }

    pub fn loss(&self, params: &ParamStore, batch: &Batch) -> Result<f64> {
        let logits = self.forward(params, &batch.inputs)?;
        Ok(loss_eval(&logits, &batch.labels, self.spec.loss))
    }

    /// Central differences of the mean loss with respect to every stored
    /// parameter (slack variables excluded; orthogonal entries perturbed
    /// off the manifold).
    pub fn finite_difference_grad(&self, params: &ParamStore, batch: &Batch, eps: f64) -> Result<Gradient> {
        if !(eps > 0.0) {
            return Err(Error::InvalidArgument(format!("finite-difference step must be positive, got {eps}")));
        }
        self.check_store(params)?;
        let mut grad = Gradient::zeros_like(params);
        let mut work = params.clone();
        let central = |work: &mut ParamStore, get: &dyn Fn(&mut ParamStore) -> &mut f64| -> Result<f64> {
            let orig = *get(work);
            *get(work) = orig + eps;
            let up = self.loss(work, batch)?;
            *get(work) = orig - eps;
            let down = self.loss(work, batch)?;
            *get(work) = orig;
            Ok((up - down) / (2.0 * eps))
        };
        for b in 0..params.unconstrained.len() {
            for j in 0..params.unconstrained[b].len() {
                grad.unconstrained[b][j] = central(&mut work, &|p| &mut p.unconstrained[b][j])?;
            }
        }
        for c in 0..params.circles.len() {
            for j in 0..params.circles[c].len() {
                grad.circles[c][j] = central(&mut work, &|p| &mut p.circles[c].theta[j])?;
            }
        }
        for o in 0..params.orthos.len() {
            let len = params.orthos[o].q.as_slice().len();
            for j in 0..len {
                grad.orthos[o].as_mut_slice()[j] =
                    central(&mut work, &|p| &mut p.orthos[o].q.as_mut_slice()[j])?;
            }
        }
        Ok(grad)
    }

    /// Gradient entries of layer `l`'s weights and bias, flattened.
    pub fn layer_gradient(&self, grad: &Gradient, l: usize) -> (Vec<f64>, Vec<f64>) {
        let w = match self.weight_slots[l] {
            Slot::Unconstrained(i) => grad.unconstrained[i].clone(),
            Slot::Circle(i) => grad.circles[i].clone(),
            Slot::Ortho(i) => grad.orthos[i].as_slice().to_vec(),
        };
        (w, grad.unconstrained[self.bias_slots[l]].clone())
    }
}

impl GradientOracle for Mlp {
    type Batch = Batch;

    fn gradient(&self, params: &ParamStore, batch: &Batch) -> Result<Gradient> {
        Ok(self.loss_and_gradient(params, batch)?.1)
    }
}

fn relu(z: &Matrix) -> Matrix {
    let mut a = z.clone();
    a.as_mut_slice().iter_mut().for_each(|v| *v = v.max(0.0));
    a
}

fn log1p_exp(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Mean loss over the rows of `logits`; zero for an empty batch.
pub fn loss_eval(logits: &Matrix, labels: &[usize], kind: LossKind) -> f64 {
    let n = logits.rows();
    if n == 0 {
        return 0.0;
    }
    let total: f64 = (0..n)
        .map(|i| {
            let row = logits.row(i);
            match kind {
                // softplus(z) − y·z
                LossKind::BceWithLogits => log1p_exp(row[0]) - labels[i] as f64 * row[0],
                LossKind::SoftmaxCrossEntropy => log_sum_exp(row) - row[labels[i]],
            }
        })
        .sum();
    total / n as f64
}

/// Per-example derivative of the loss with respect to the logits.
fn loss_logit_gradient(logits: &Matrix, labels: &[usize], kind: LossKind) -> Matrix {
    let mut d = logits.clone();
    for i in 0..logits.rows() {
        let row = d.row_mut(i);
        match kind {
            LossKind::BceWithLogits => row[0] = sigmoid(row[0]) - labels[i] as f64,
            LossKind::SoftmaxCrossEntropy => {
                let lse = log_sum_exp(row);
                row.iter_mut().for_each(|v| *v = (*v - lse).exp());
                row[labels[i]] -= 1.0;
            }
        }
    }
    d
}

/// Predicted class of each row: `z > 0` for a single logit, otherwise the
/// argmax with ties going to the lower index.
pub fn predict(logits: &Matrix, kind: LossKind) -> Vec<usize> {
    (0..logits.rows())
        .map(|i| {
            let row = logits.row(i);
            match kind {
                LossKind::BceWithLogits => usize::from(row[0] > 0.0),
                LossKind::SoftmaxCrossEntropy => {
                    let mut best = 0;
                    for (j, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = j;
                        }
                    }
                    best
                }
            }
        })
        .collect()
}

/// Fraction of rows predicted correctly; zero for an empty batch.
pub fn accuracy_eval(logits: &Matrix, labels: &[usize], kind: LossKind) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predict(logits, kind)
        .iter()
        .zip(labels)
        .filter(|(p, y)| p == y)
        .count();
    hits as f64 / labels.len() as f64
}
