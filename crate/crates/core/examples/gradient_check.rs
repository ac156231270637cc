//! Backpropagation against central differences, layer by layer, for a
//! network mixing free, orthogonal and circle-constrained weights. A
//! deliberately wrong ReLU derivative shows what a failure looks like.
//!
//! cargo run --example gradient_check

use cola::experiment::gradcheck;
use cola::model::{Batch, LayerConstraint, LossKind, Mlp, MlpSpec, ParamLayout};
use cola::numerics::{standard_normal_matrix, Rng};

fn main() -> cola::Result<()> {
    let mut rng = Rng::new(3);
    let spec = MlpSpec::new(vec![4, 16, 16, 3], LossKind::SoftmaxCrossEntropy);
    let layout = ParamLayout {
        layers: vec![
            LayerConstraint::Circle { radius: 0.5 },
            LayerConstraint::Orthogonal,
            LayerConstraint::Unconstrained,
        ],
    };
    let mut mlp = Mlp::new(spec, layout)?;
    let (params, _) = mlp.init(&mut rng)?;
    let batch = Batch::new(standard_normal_matrix(10, 4, &mut rng), (0..10).map(|i| i % 3).collect())?;

    for faulty in [false, true] {
        mlp.set_faulty_activation_derivative(faulty);
        let report = gradcheck(&mlp, &params, &batch)?;
        println!("faulty derivative: {faulty}");
        for l in &report.layers {
            println!("  {:<18} weights {:.1e}  biases {:.1e}", l.name, l.weight_rel_error, l.bias_rel_error);
        }
        println!("  pass (tolerance {:.0e}): {}", report.tolerance, report.pass);
    }
    Ok(())
}
