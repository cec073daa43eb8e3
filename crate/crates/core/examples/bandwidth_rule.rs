//! Normal-reference bandwidths in the projected space, and what happens to
//! them when the data are rescaled or a projected direction is constant.
//!
//! cargo run --example bandwidth_rule

use hellinger_align::bandwidth::{compute_bandwidth, normal_reference_factor};
use hellinger_align::datasets::{make_shift_pair, ShiftSpec};
use hellinger_align::{DomainTag, ProjectionMatrix, SampleSet};

fn main() -> hellinger_align::Result<()> {
    let (source, target) = make_shift_pair(&ShiftSpec::default())?;
    let w = ProjectionMatrix::identity(source.dim(), 2)?;
    let bw = compute_bandwidth(&source, &target, &w)?;
    let n = source.n() + target.n();
    println!("factor (4/((p+2)n))^(1/(p+4)) at p=2, n={n}: {:.6}", normal_reference_factor(2, n));
    let h: Vec<String> = bw.variances().iter().map(|v| format!("{:.4}", v.sqrt())).collect();
    println!("per-dimension h: {h:?}");

    let scaled = |s: &SampleSet, tag| SampleSet::new(s.data() * 10.0, tag);
    let bw10 = compute_bandwidth(&scaled(&source, DomainTag::Source)?, &scaled(&target, DomainTag::Target)?, &w)?;
    let ratio: Vec<String> = bw10.variances().iter().zip(bw.variances()).map(|(a, b)| format!("{:.3}", (a / b).sqrt())).collect();
    println!("h ratio after scaling data by 10: {ratio:?}");

    let flat = SampleSet::from_rows(&[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]], DomainTag::Source)?;
    match compute_bandwidth(&flat, &flat.clone().with_domain(DomainTag::Target), &ProjectionMatrix::identity(2, 2)?) {
        Ok(_) => println!("constant direction unexpectedly accepted"),
        Err(e) => println!("constant direction rejected: {e}"),
    }
    Ok(())
}
