//! The Hellinger-type objective between two sample sets and its gradient
//! with the bandwidth held fixed, plus the per-sample losses behind it.
//!
//! cargo run --example divergence_objective

use hellinger_align::bandwidth::compute_bandwidth;
use hellinger_align::datasets::{make_shift_pair, ShiftSpec};
use hellinger_align::divergence::{gradient, objective};
use hellinger_align::optimizer::random_orthonormal;

fn main() -> hellinger_align::Result<()> {
    for shift in [0.0, 1.0, 3.0, 8.0] {
        let spec = ShiftSpec {
            d: 3,
            n_per_domain: 60,
            shift_magnitude: shift,
            seed: 7,
            ..Default::default()
        };
        let (source, target) = make_shift_pair(&spec)?;
        let w = random_orthonormal(3, 2, 1)?;
        let bw = compute_bandwidth(&source, &target, &w)?;
        let obj = objective(&source, &target, &w, &bw)?;
        let grad = gradient(&source, &target, &w, &bw)?;
        let worst = obj.per_source_losses.iter().copied().fold(0.0, f64::max);
        println!(
            "shift {shift:>3}: d_hat {:.5}  |grad|_F {:.5}  worst source loss {worst:.4}",
            obj.d_hat,
            grad.frobenius_norm()
        );
    }
    Ok(())
}
