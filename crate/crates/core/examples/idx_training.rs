//! Trains on image data in IDX format (the format of MNIST-style datasets)
//! with every weight held inside |w| ≤ r by the circle constraint. Pass the
//! four IDX files to use real data; without arguments a small synthetic set
//! of bar images is written and used.
//!
//! cargo run --release --example idx_training [train-images train-labels test-images test-labels]

use std::path::PathBuf;

use cola::data::{load_idx, write_idx, IdxArray};
use cola::experiment::{run_train_config, ExperimentConfig};
use cola::numerics::Rng;

fn synthetic(dir: &std::path::Path, tag: &str, n: usize, rng: &mut Rng) -> cola::Result<(PathBuf, PathBuf)> {
    let (mut px, mut labels) = (Vec::new(), Vec::new());
    for i in 0..n {
        let class = i % 4;
        let pos = rng.below(4) + 4 * (class % 2);
        for r in 0..8 {
            for c in 0..8 {
                let on = if class < 2 { r == pos } else { c == pos };
                px.push((if on { 200.0 } else { 30.0 } + 25.0 * rng.normal()).clamp(0.0, 255.0) as u8);
            }
        }
        labels.push(class as u8);
    }
    let (a, b) = (dir.join(format!("{tag}-images.idx")), dir.join(format!("{tag}-labels.idx")));
    write_idx(&a, &IdxArray { dims: vec![n, 8, 8], data: px })?;
    write_idx(&b, &IdxArray { dims: vec![n], data: labels })?;
    Ok((a, b))
}

fn main() -> cola::Result<()> {
    let args: Vec<PathBuf> = std::env::args().skip(1).map(PathBuf::from).collect();
    let files = if args.len() == 4 {
        args
    } else {
        let dir = PathBuf::from("target/idx_example");
        std::fs::create_dir_all(&dir).map_err(|e| cola::Error::Config(e.to_string()))?;
        let mut rng = Rng::new(0);
        let (a, b) = synthetic(&dir, "train", 2000, &mut rng)?;
        let (c, d) = synthetic(&dir, "test", 500, &mut rng)?;
        vec![a, b, c, d]
    };
    let train = load_idx(&files[0], &files[1])?;
    println!("{} training images of {} pixels, {} classes", train.len(), train.dim(), train.class_count);

    let text = format!(
        r#"
[model]
layer_widths = [{}, 64, {}]
loss = "softmax_cross_entropy"

[layout]
preset = "circle"
radius = 0.3

[integrator]
scheme = "od"
h = 0.1
tau = 1e-6

[data]
source = "idx"
batch_size = 100
[data.idx]
train_images = {:?}
train_labels = {:?}
test_images = {:?}
test_labels = {:?}

[run]
epochs = 10
seeds = [0]
output_dir = "target/idx_example/run"
"#,
        train.dim(),
        train.class_count,
        files[0],
        files[1],
        files[2],
        files[3]
    );
    let cfg = ExperimentConfig::from_toml(&text)?;
    let out = run_train_config(&cfg, std::path::Path::new("."))?;
    for r in &out.runs[0].records {
        println!(
            "epoch {:>2}: train loss {:.4}, test acc {:.3}, max residual {:.1e}",
            r.epoch, r.train_loss, r.test_acc, r.max_constraint_residual
        );
    }
    Ok(())
}
