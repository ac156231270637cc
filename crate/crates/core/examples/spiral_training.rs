//! Deep ReLU network on the two-spiral problem: plain SGD against the
//! overdamped constrained scheme with orthogonal hidden weights.
//!
//! cargo run --release --example spiral_training [epochs]

use std::time::Instant;

use cola::experiment::{run_train_config, ExperimentConfig};

const BASE: &str = r#"
[model]
layer_widths = [2, 100, 100, 100, 100, 100, 1]
loss = "bce_with_logits"

[integrator]
h = 0.1

[data]
source = "spiral"
batch_fraction = 0.05

[run]
epochs = 200
seeds = [0, 1]
output_dir = "target/spiral_example"
"#;

fn main() -> cola::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(200, |a| a.parse().expect("epochs"));
    for (name, layout, scheme) in [
        ("sgd", "unconstrained", "baseline_em"),
        ("orthogonal od", "orthogonal_hidden", "od"),
    ] {
        let text = BASE
            .replace("[integrator]", &format!("[layout]\npreset = \"{layout}\"\n\n[integrator]\nscheme = \"{scheme}\""))
            .replace("output_dir = \"target/spiral_example\"", &format!("output_dir = \"target/spiral_example/{scheme}\""));
        let mut cfg = ExperimentConfig::from_toml(&text)?;
        cfg.run.epochs = epochs;
        let start = Instant::now();
        let out = run_train_config(&cfg, std::path::Path::new("."))?;
        let last = out.aggregate.last().expect("at least one epoch");
        println!(
            "{name:>14}: test acc {:.3} +- {:.3} after {epochs} epochs, max residual {:.1e} ({:.0}s)",
            last.test_acc.0,
            last.test_acc.1,
            last.max_constraint_residual.0,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
