//! Evaluate a projected Gaussian KDE: log-density, softmax weights, local
//! scatter and the gradient of the log-density with respect to `W`.
//!
//! cargo run --example kde_density

use hellinger_align::{Bandwidth, DomainTag, KdeModel, Matrix, ProjectionMatrix, SampleSet};

fn main() -> hellinger_align::Result<()> {
    let samples = SampleSet::from_rows(
        &[vec![0.0, 0.0, 1.0], vec![1.0, -0.5, 0.0], vec![-0.5, 2.0, 0.5], vec![0.3, 0.3, -1.0]],
        DomainTag::Source,
    )?;
    let s = 0.5_f64.sqrt();
    let w = ProjectionMatrix::new(Matrix::from_row_slice(3, 2, &[s, 0.0, s, 0.0, 0.0, 1.0]))?;
    let bw = Bandwidth::new(vec![0.4, 0.25])?;
    let kde = KdeModel::new(&samples, &w, &bw)?;

    let query = [0.2, 0.1, 0.4];
    println!("projected query: {:?}", kde.project_query(&query));
    println!("log density:     {:.6}", kde.log_density(&query)?);
    let weights = kde.softmax_weights(&query)?;
    println!("softmax weights: {:?}", weights.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>());
    println!("scatter C(x):{:.4}", kde.scatter_matrix(&query)?);

    let direct = kde.log_density_gradient(&query)?;
    let via_scatter = kde.log_density_gradient_via_scatter(&query, None)?;
    println!("d log s / dW:{direct:.5}");
    println!("max gap to -C W H^-1 form: {:.2e}", (&direct - &via_scatter).amax());
    Ok(())
}
