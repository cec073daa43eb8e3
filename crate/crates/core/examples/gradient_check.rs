//! Check the analytic gradient against central differences of the objective,
//! then measure how much the frozen-bandwidth gradient misses when the
//! bandwidth is allowed to follow `W`.
//!
//! cargo run --example gradient_check

use hellinger_align::bandwidth::{compute_bandwidth, BandwidthConfig};
use hellinger_align::datasets::{make_shift_pair, ShiftSpec};
use hellinger_align::divergence::{bandwidth_coupling_discrepancy, gradient, objective_with, DivergenceOptions};
use hellinger_align::gradcheck::{central_difference, compare, DEFAULT_FD_STEP, DEFAULT_REL_FLOOR};
use hellinger_align::optimizer::random_orthonormal;
use hellinger_align::Matrix;

fn main() -> hellinger_align::Result<()> {
    let spec = ShiftSpec {
        d: 6,
        n_per_domain: 30,
        shift_magnitude: 1.5,
        rotation_angle: 0.4,
        ..Default::default()
    };
    let (source, target) = make_shift_pair(&spec)?;
    let w = random_orthonormal(6, 2, 11)?;
    let bw = compute_bandwidth(&source, &target, &w)?;

    let analytic = gradient(&source, &target, &w, &bw)?.into_inner();
    let numeric = central_difference(
        |m: &Matrix| {
            objective_with(&source, &target, m, &bw, DivergenceOptions::default()).map_or(f64::NAN, |o| o.d_hat)
        },
        w.as_matrix(),
        DEFAULT_FD_STEP,
    )?;
    let report = compare(&analytic, &numeric, DEFAULT_REL_FLOOR)?;
    println!(
        "frozen bandwidth: max rel error {:.2e}, max abs error {:.2e}, worst entry {:?}",
        report.max_rel_error, report.max_abs_error, report.worst_entry
    );

    let coupling = bandwidth_coupling_discrepancy(&source, &target, &w, &BandwidthConfig::default(), DEFAULT_FD_STEP)?;
    println!(
        "bandwidth following W: max abs gap {:.3e}, relative gap {:.3}",
        coupling.max_abs_discrepancy, coupling.relative_discrepancy
    );
    Ok(())
}
