use cola::experiment::gradcheck;
use cola::integrators::ParamStore;
use cola::model::{accuracy_eval, loss_eval, predict, Batch, LossKind, Mlp, MlpSpec, ParamLayout};
use cola::numerics::{standard_normal_matrix, Matrix, Rng};
use proptest::prelude::*;

/// Scalar-loop forward pass for an all-unconstrained layout, whose store is
/// `[W0, …, W_{L-1}, b0, …, b_{L-1}]` with row-major `out × in` weights.
fn naive_logits(widths: &[usize], store: &ParamStore, x: &[f64]) -> Vec<f64> {
    let n = widths.len() - 1;
    let mut a = x.to_vec();
    for l in 0..n {
        let (inp, out) = (widths[l], widths[l + 1]);
        let w = &store.unconstrained[l];
        let b = &store.unconstrained[n + l];
        let mut z = vec![0.0; out];
        for o in 0..out {
            z[o] = b[o] + (0..inp).map(|i| w[o * inp + i] * a[i]).sum::<f64>();
        }
        a = if l + 1 < n { z.iter().map(|v| v.max(0.0)).collect() } else { z };
    }
    a
}

fn naive_loss(logits: &[f64], label: usize, kind: LossKind) -> f64 {
    match kind {
        LossKind::BceWithLogits => {
            let p = 1.0 / (1.0 + (-logits[0]).exp());
            if label == 1 { -p.ln() } else { -(1.0 - p).ln() }
        }
        LossKind::SoftmaxCrossEntropy => {
            let total: f64 = logits.iter().map(|z| z.exp()).sum();
            -(logits[label].exp() / total).ln()
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn forward_and_loss_match_scalar_oracle(seed in 0u64..10_000, hidden in 1usize..4, softmax in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let (loss, out) = if softmax { (LossKind::SoftmaxCrossEntropy, 3) } else { (LossKind::BceWithLogits, 1) };
        let mut widths = vec![4];
        widths.extend(std::iter::repeat_n(6, hidden));
        widths.push(out);
        let mlp = Mlp::new(MlpSpec::new(widths.clone(), loss), ParamLayout::unconstrained(widths.len() - 1)).unwrap();
        let (params, _) = mlp.init(&mut rng).unwrap();
        let x = standard_normal_matrix(5, 4, &mut rng);
        let labels: Vec<usize> = (0..5).map(|_| rng.below(out.max(2))).collect();
        let logits = mlp.forward(&params, &x).unwrap();
        let mut want_loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let z = naive_logits(&widths, &params, x.row(r));
            for (a, b) in logits.row(r).iter().zip(&z) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            want_loss += naive_loss(&z, label, loss) / 5.0;
        }
        let batch = Batch::new(x, labels).unwrap();
        prop_assert!((mlp.loss(&params, &batch).unwrap() - want_loss).abs() <= 1e-12);
    }

    #[test]
    fn backprop_matches_finite_differences(seed in 0u64..10_000, layout_kind in 0usize..3, softmax in any::<bool>()) {
        let mut rng = Rng::new(seed);
        let (loss, out) = if softmax { (LossKind::SoftmaxCrossEntropy, 3) } else { (LossKind::BceWithLogits, 1) };
        let widths = vec![3, 7, 5, out];
        let layout = match layout_kind {
            0 => ParamLayout::unconstrained(3),
            1 => ParamLayout::orthogonal_hidden(3),
            _ => ParamLayout::circle(&[0.5, 0.5, 0.5]),
        };
        let mlp = Mlp::new(MlpSpec::new(widths, loss), layout).unwrap();
        let (params, _) = mlp.init(&mut rng).unwrap();
        let x = standard_normal_matrix(4, 3, &mut rng);
        prop_assume!(mlp.min_abs_preactivation(&params, &x).unwrap() > 1e-3);
        let labels = (0..4).map(|_| rng.below(out.max(2))).collect();
        let report = gradcheck(&mlp, &params, &Batch::new(x, labels).unwrap()).unwrap();
        prop_assert!(report.pass, "{report:?}");
    }
}

#[test]
fn faulty_activation_derivative_is_caught() {
    let mut rng = Rng::new(11);
    let mut mlp = Mlp::new(MlpSpec::new(vec![3, 8, 8, 1], LossKind::BceWithLogits), ParamLayout::unconstrained(3)).unwrap();
    let (params, _) = mlp.init(&mut rng).unwrap();
    let batch = Batch::new(standard_normal_matrix(6, 3, &mut rng), vec![0, 1, 0, 1, 1, 0]).unwrap();
    assert!(gradcheck(&mlp, &params, &batch).unwrap().pass);
    mlp.set_faulty_activation_derivative(true);
    assert!(!gradcheck(&mlp, &params, &batch).unwrap().pass);
}

#[test]
fn losses_stay_finite_for_extreme_logits() {
    let z = Matrix::from_rows(&[[1000.0], [-1000.0]]);
    // BCE of logit ±1000 with the wrong label is 1000 up to e^{-1000}
    let l = loss_eval(&z, &[0, 1], LossKind::BceWithLogits);
    assert!((l - 1000.0).abs() < 1e-9);
    assert_eq!(loss_eval(&z, &[1, 0], LossKind::BceWithLogits), 0.0);

    let z = Matrix::from_rows(&[[800.0, 0.0, -800.0]]);
    assert!((loss_eval(&z, &[1], LossKind::SoftmaxCrossEntropy) - 800.0).abs() < 1e-9);
    assert!(loss_eval(&z, &[0], LossKind::SoftmaxCrossEntropy) < 1e-300);
}

#[test]
fn empty_batch_has_zero_loss() {
    let z = Matrix::zeros(0, 3);
    assert_eq!(loss_eval(&z, &[], LossKind::SoftmaxCrossEntropy), 0.0);
}

#[test]
fn predictions_and_ties() {
    let z = Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 2.0, 2.0], [-1.0, -3.0, -0.5]]);
    assert_eq!(predict(&z, LossKind::SoftmaxCrossEntropy), vec![0, 1, 2]);
    let z = Matrix::from_rows(&[[0.0], [1e-9], [-2.0]]);
    assert_eq!(predict(&z, LossKind::BceWithLogits), vec![0, 1, 0]);
    assert!((accuracy_eval(&z, &[0, 1, 1], LossKind::BceWithLogits) - 2.0 / 3.0).abs() < 1e-15);
}

#[test]
fn initialization_respects_constraints() {
    let mut rng = Rng::new(12);
    // wide first layer → transposed orientation
    let spec = MlpSpec::new(vec![2, 30, 10, 10, 1], LossKind::BceWithLogits);
    let layout = ParamLayout { layers: vec![
        cola::model::LayerConstraint::Unconstrained,
        cola::model::LayerConstraint::Orthogonal,
        cola::model::LayerConstraint::Orthogonal,
        cola::model::LayerConstraint::Circle { radius: 0.05 },
    ]};
    let mlp = Mlp::new(spec, layout).unwrap();
    let (params, report) = mlp.init(&mut rng).unwrap();
    assert_eq!(params.orthos.len(), 2);
    assert_eq!(params.orthos[0].q.shape(), (30, 10));
    assert!(params.orthos.iter().all(|g| g.residual() < 1e-12));
    let c = &params.circles[0];
    assert!(c.theta.iter().all(|t| t.abs() <= 0.05));
    assert!(c.max_residual() < 1e-15);
    // U(±1/√10) exceeds 0.05 most of the time
    assert!(report.clipped_circle_weights > 0);
}

#[test]
fn bad_architectures_are_rejected() {
    assert!(MlpSpec::new(vec![2, 5, 2], LossKind::BceWithLogits).validate().is_err());
    assert!(MlpSpec::new(vec![2, 0, 1], LossKind::BceWithLogits).validate().is_err());
    assert!(Mlp::new(MlpSpec::new(vec![2, 5, 1], LossKind::BceWithLogits), ParamLayout::unconstrained(3)).is_err());
    assert!(Mlp::new(MlpSpec::new(vec![2, 5, 1], LossKind::BceWithLogits), ParamLayout::circle(&[1.0, -1.0])).is_err());
}
