//! The built-in invariant suite (also `cola verify`): constraint residuals,
//! cotangency, momentum-SGD equivalence, gradients, curvature and simple
//! distributional checks, each against its tolerance.
//!
//! cargo run --release --example invariants

use cola::verify::{run_verify, Faults};

fn main() -> cola::Result<()> {
    for faults in [Faults::default(), Faults { skip_cotangent_projection: true }] {
        println!("skip cotangent projection: {}", faults.skip_cotangent_projection);
        for c in run_verify(faults)? {
            println!(
                "  {} {:<36} {:.2e} (tolerance {:.0e})",
                if c.pass { "ok  " } else { "FAIL" },
                c.check_id,
                c.measured,
                c.tolerance
            );
        }
    }
    Ok(())
}
