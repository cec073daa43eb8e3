//! Round-trip a generated pair through CSV files, fit a projection on the
//! loaded data and score 1-NN transfer from source labels to target labels.
//!
//! cargo run --release --example transfer_eval

use hellinger_align::datasets::{evaluate_transfer, load_csv, make_shift_pair, to_csv_string, ShiftSpec};
use hellinger_align::optimizer::{fit, FitConfig};
use hellinger_align::DomainTag;

fn main() -> hellinger_align::Result<()> {
    let spec = ShiftSpec {
        d: 5,
        n_per_domain: 80,
        informative_dims: 2,
        shift_magnitude: 5.0,
        rotation_angle: 0.6,
        seed: 3,
        ..Default::default()
    };
    let (source, target) = make_shift_pair(&spec)?;
    let dir = tempfile::tempdir().map_err(|e| hellinger_align::Error::InvalidInput(e.to_string()))?;
    let (sp, tp) = (dir.path().join("source.csv"), dir.path().join("target.csv"));
    std::fs::write(&sp, to_csv_string(&source)).expect("write source");
    std::fs::write(&tp, to_csv_string(&target)).expect("write target");

    let source = load_csv(&sp, true, DomainTag::Source)?;
    let target = load_csv(&tp, true, DomainTag::Target)?;

    let report = fit(&source, &target, &FitConfig { subspace_dim: 2, seed: 3, ..Default::default() })?;
    println!("fit: {} iterations ({})", report.iterations_used, report.converged_reason.as_str());
    let eval = evaluate_transfer(&source, &target, &report.final_w, 3)?;
    println!(
        "1-NN accuracy on {} target rows: adapted {:.3}, unadapted {:.3}, PCA {:.3}",
        eval.n_test, eval.accuracy_adapted, eval.accuracy_unadapted, eval.accuracy_pca
    );
    Ok(())
}
