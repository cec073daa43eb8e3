//! Gaussian kernel density estimation of projected samples.
//!
//! A [`KdeModel`] binds a [`SampleSet`] to a projection `W` (d x p) and a
//! diagonal bandwidth `H` (p variances). For a query `x` in ambient space the
//! kernel against sample `x_i` is
//!
//! ```text
//! k(x, x_i) = exp(-(x - x_i)^T W H^-1 W^T (x - x_i) / 2)
//! ```
//!
//! and the density is `(1/n) sum_i (2 pi)^(-p/2) |H|^(-1/2) k(x, x_i)`.
//! All kernel evaluations happen in projected coordinates, so the cost of a
//! query is `O(n p)` plus `O(n d p)` when the gradient is requested.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, log_sum_exp, orthonormality_error};
use crate::Matrix;

/// Maximum `||W^T W - I||_F` accepted by [`ProjectionMatrix::new`].
pub const ORTHONORMAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    Source,
    Target,
}

/// `n x d` samples from one domain, rows are samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Matrix,
    labels: Option<Vec<i64>>,
    domain: DomainTag,
}

impl SampleSet {
    pub fn new(data: Matrix, domain: DomainTag) -> Result<Self> {
        Self::build(data, None, domain)
    }

    pub fn with_labels(data: Matrix, labels: Vec<i64>, domain: DomainTag) -> Result<Self> {
        Self::build(data, Some(labels), domain)
    }

    /// Builds a sample set from row vectors, which must all have the same length.
    pub fn from_rows(rows: &[Vec<f64>], domain: DomainTag) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::mismatch("sample row length", d, bad.len()));
        }
        Self::new(Matrix::from_fn(n, d, |i, j| rows[i][j]), domain)
    }

    fn build(data: Matrix, labels: Option<Vec<i64>>, domain: DomainTag) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "sample set must have n >= 1 and d >= 1, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (i, j) = (pos % data.nrows(), pos / data.nrows());
            return Err(Error::InvalidInput(format!(
                "non-finite sample value at row {i}, column {j}"
            )));
        }
        if let Some(l) = &labels {
            if l.len() != data.nrows() {
                return Err(Error::mismatch("label count", data.nrows(), l.len()));
            }
        }
        Ok(Self {
            data,
            labels,
            domain,
        })
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    pub fn domain(&self) -> DomainTag {
        self.domain
    }

    pub fn with_domain(mut self, domain: DomainTag) -> Self {
        self.domain = domain;
        self
    }

    pub fn without_labels(mut self) -> Self {
        self.labels = None;
        self
    }

    /// Copy of sample `i` as a `d`-vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }

    /// Stacks `self` on top of `other`. Labels survive only if both sets carry them.
    pub fn concat(&self, other: &SampleSet) -> Result<SampleSet> {
        if self.dim() != other.dim() {
            return Err(Error::mismatch("pooled sample dimension", self.dim(), other.dim()));
        }
        let (n1, n2) = (self.n(), other.n());
        let data = Matrix::from_fn(n1 + n2, self.dim(), |i, j| {
            if i < n1 {
                self.data[(i, j)]
            } else {
                other.data[(i - n1, j)]
            }
        });
        let labels = match (&self.labels, &other.labels) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).copied().collect()),
            _ => None,
        };
        Ok(SampleSet {
            data,
            labels,
            domain: self.domain,
        })
    }
}

/// A `d x p` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix(Matrix);

impl ProjectionMatrix {
    pub fn new(w: Matrix) -> Result<Self> {
        let (d, p) = w.shape();
        if p == 0 || p > d {
            return Err(Error::InvalidInput(format!(
                "projection must satisfy 1 <= p <= d, got d={d}, p={p}"
            )));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("projection has non-finite entries".into()));
        }
        let deviation = orthonormality_error(&w);
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(Self(w))
    }

    /// First `p` columns of the `d x d` identity.
    pub fn identity(d: usize, p: usize) -> Result<Self> {
        Self::new(Matrix::identity(d, p))
    }

    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn orthonormality_error(&self) -> f64 {
        orthonormality_error(&self.0)
    }

    /// Projected samples `X W` (n x p).
    pub fn project(&self, samples: &SampleSet) -> Result<Matrix> {
        if samples.dim() != self.dim() {
            return Err(Error::mismatch("projection rows vs sample dimension", self.dim(), samples.dim()));
        }
        Ok(samples.data() * &self.0)
    }
}

/// Diagonal of the bandwidth matrix `H`: one kernel variance per projected
/// dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandwidth {
    variances: Vec<f64>,
}

impl Bandwidth {
    pub fn new(variances: Vec<f64>) -> Result<Self> {
        if variances.is_empty() {
            return Err(Error::InvalidInput("bandwidth must have at least one entry".into()));
        }
        if let Some((j, v)) = variances
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v > 0.0))
        {
            return Err(Error::InvalidInput(format!(
                "bandwidth variance {j} must be strictly positive and finite, got {v}"
            )));
        }
        Ok(Self { variances })
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn len(&self) -> usize {
        self.variances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variances.is_empty()
    }

    /// `log((2 pi)^(-p/2) |H|^(-1/2))`.
    pub fn log_normalizer(&self) -> f64 {
        let p = self.variances.len() as f64;
        let log_det: f64 = self.variances.iter().map(|v| v.ln()).sum();
        -0.5 * p * (2.0 * std::f64::consts::PI).ln() - 0.5 * log_det
    }
}

/// A sample set bound to a projection and a bandwidth.
///
/// The projection is borrowed as a plain matrix so the same model can be
/// evaluated off the Stiefel manifold (finite-difference probes). Use
/// [`KdeModel::new`] for the usual orthonormal case.
#[derive(Debug, Clone)]
pub struct KdeModel<'a> {
    samples: &'a SampleSet,
    projection: &'a Matrix,
    bandwidth: &'a Bandwidth,
    projected: Matrix,
    inv_var: Vec<f64>,
}

/// Log-density at one query and, optionally, its gradient with respect to `W`.
#[derive(Debug, Clone)]
pub(crate) struct QueryEval {
    pub log_density: f64,
    pub gradient: Option<Matrix>,
}

impl<'a> KdeModel<'a> {
    pub fn new(samples: &'a SampleSet, projection: &'a ProjectionMatrix, bandwidth: &'a Bandwidth) -> Result<Self> {
        Self::from_matrix(samples, projection.as_matrix(), bandwidth)
    }

    /// Like [`KdeModel::new`] but accepts any `d x p` matrix.
    pub fn from_matrix(samples: &'a SampleSet, projection: &'a Matrix, bandwidth: &'a Bandwidth) -> Result<Self> {
        if projection.nrows() != samples.dim() {
            return Err(Error::mismatch("projection rows vs sample dimension", samples.dim(), projection.nrows()));
        }
        if projection.ncols() != bandwidth.len() {
            return Err(Error::mismatch("bandwidth length vs projection columns", projection.ncols(), bandwidth.len()));
        }
        let projected = samples.data() * projection;
        let inv_var = bandwidth.variances().iter().map(|v| 1.0 / v).collect();
        Ok(Self {
            samples,
            projection,
            bandwidth,
            projected,
            inv_var,
        })
    }

    pub fn samples(&self) -> &SampleSet {
        self.samples
    }

    pub fn projection(&self) -> &Matrix {
        self.projection
    }

    pub fn bandwidth(&self) -> &Bandwidth {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.projection.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.projection.ncols()
    }

    fn check_query(&self, query: &[f64]) -> Result<()> {
        if query.len() != self.dim() {
            return Err(Error::mismatch("query dimension", self.dim(), query.len()));
        }
        if query.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("query has non-finite entries".into()));
        }
        Ok(())
    }

    /// `W^T x`.
    pub fn project_query(&self, query: &[f64]) -> Vec<f64> {
        let (d, p) = self.projection.shape();
        (0..p)
            .map(|j| (0..d).map(|k| self.projection[(k, j)] * query[k]).sum())
            .collect()
    }

    /// Kernel exponents `-(1/2) |W^T (x - x_i)|^2_{H^-1}` for every sample;
    /// the excluded sample (leave-one-out) gets `-inf`.
    fn exponents(&self, projected_query: &[f64], exclude: Option<usize>) -> Vec<f64> {
        (0..self.samples.n())
            .map(|i| {
                if exclude == Some(i) {
                    return f64::NEG_INFINITY;
                }
                let q: f64 = projected_query
                    .iter()
                    .zip(&self.inv_var)
                    .enumerate()
                    .map(|(j, (zq, iv))| {
                        let diff = zq - self.projected[(i, j)];
                        diff * diff * iv
                    })
                    .sum();
                -0.5 * q
            })
            .collect()
    }

    fn effective_n(&self, exclude: Option<usize>) -> Result<f64> {
        let n = self.samples.n();
        match exclude {
            Some(i) if i >= n => Err(Error::mismatch("excluded sample index bound", n, i)),
            Some(_) if n < 2 => Err(Error::InvalidInput(
                "leave-one-out evaluation needs at least two samples".into(),
            )),
            Some(_) => Ok((n - 1) as f64),
            None => Ok(n as f64),
        }
    }

    fn softmax_from_exponents(exponents: &[f64]) -> Vec<f64> {
        let max = exponents.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = exponents.iter().map(|e| (e - max).exp()).collect();
        let total = compensated_sum(raw.iter().copied());
        raw.into_iter().map(|r| r / total).collect()
    }

    /// `k(x, x_i)`, a value in `(0, 1]`.
    pub fn kernel_value(&self, query: &[f64], sample_index: usize) -> Result<f64> {
        self.check_query(query)?;
        if sample_index >= self.samples.n() {
            return Err(Error::mismatch("sample index bound", self.samples.n(), sample_index));
        }
        let z = self.project_query(query);
        let q: f64 = (0..self.subspace_dim())
            .map(|j| {
                let diff = z[j] - self.projected[(sample_index, j)];
                diff * diff * self.inv_var[j]
            })
            .sum();
        Ok((-0.5 * q).exp())
    }

    /// Normalized kernel weights `k(x, x_i) / sum_j k(x, x_j)`.
    pub fn softmax_weights(&self, query: &[f64]) -> Result<Vec<f64>> {
        self.softmax_weights_excluding(query, None)
    }

    pub fn softmax_weights_excluding(&self, query: &[f64], exclude: Option<usize>) -> Result<Vec<f64>> {
        self.check_query(query)?;
        self.effective_n(exclude)?;
        let z = self.project_query(query);
        Ok(Self::softmax_from_exponents(&self.exponents(&z, exclude)))
    }

    /// Log of the fully normalized KDE at `query`.
    pub fn log_density(&self, query: &[f64]) -> Result<f64> {
        self.log_density_excluding(query, None)
    }

    /// Leave-one-out variant: the kernel term of sample `exclude` is dropped
    /// and the average runs over the remaining `n - 1` samples.
    pub fn log_density_excluding(&self, query: &[f64], exclude: Option<usize>) -> Result<f64> {
        self.check_query(query)?;
        Ok(self.evaluate(query, exclude, false)?.log_density)
    }

    /// `C(x) = sum_i A_i (x - x_i)(x - x_i)^T`, a symmetric PSD `d x d` matrix.
    pub fn scatter_matrix(&self, query: &[f64]) -> Result<Matrix> {
        self.scatter_matrix_excluding(query, None)
    }

    pub fn scatter_matrix_excluding(&self, query: &[f64], exclude: Option<usize>) -> Result<Matrix> {
        let weights = self.softmax_weights_excluding(query, exclude)?;
        let d = self.dim();
        let data = self.samples.data();
        let mut c = Matrix::zeros(d, d);
        for (i, &a) in weights.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            let delta: Vec<f64> = (0..d).map(|k| query[k] - data[(i, k)]).collect();
            for r in 0..d {
                let s = a * delta[r];
                for col in r..d {
                    c[(r, col)] += s * delta[col];
                }
            }
        }
        for r in 0..d {
            for col in 0..r {
                c[(r, col)] = c[(col, r)];
            }
        }
        Ok(c)
    }

    /// `d log s(W^T x) / dW = -C(x) W H^-1` with `H` held fixed.
    pub fn log_density_gradient(&self, query: &[f64]) -> Result<Matrix> {
        self.log_density_gradient_excluding(query, None)
    }

    pub fn log_density_gradient_excluding(&self, query: &[f64], exclude: Option<usize>) -> Result<Matrix> {
        self.check_query(query)?;
        Ok(self
            .evaluate(query, exclude, true)?
            .gradient
            .expect("gradient requested"))
    }

    /// Same quantity as [`log_density_gradient`](Self::log_density_gradient),
    /// assembled literally as `-C(x) W H^-1` from the explicit scatter matrix.
    pub fn log_density_gradient_via_scatter(&self, query: &[f64], exclude: Option<usize>) -> Result<Matrix> {
        let c = self.scatter_matrix_excluding(query, exclude)?;
        let mut g = -(c * self.projection);
        for (j, iv) in self.inv_var.iter().enumerate() {
            g.column_mut(j).scale_mut(*iv);
        }
        Ok(g)
    }

    /// Shared kernel pass: one set of exponents feeds both the log-density and,
    /// when asked, `-sum_i A_i (x - x_i) (W^T (x - x_i))^T H^-1`, which equals
    /// `-C(x) W H^-1` without forming the `d x d` scatter matrix.
    pub(crate) fn evaluate(&self, query: &[f64], exclude: Option<usize>, with_gradient: bool) -> Result<QueryEval> {
        let n_eff = self.effective_n(exclude)?;
        let z = self.project_query(query);
        let exponents = self.exponents(&z, exclude);
        let log_density = self.bandwidth.log_normalizer() + log_sum_exp(&exponents) - n_eff.ln();

        let gradient = with_gradient.then(|| {
            let weights = Self::softmax_from_exponents(&exponents);
            let (d, p) = self.projection.shape();
            let data = self.samples.data();
            let mut g = Matrix::zeros(d, p);
            let mut scaled = vec![0.0; p];
            for (i, &a) in weights.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for j in 0..p {
                    scaled[j] = a * (z[j] - self.projected[(i, j)]) * self.inv_var[j];
                }
                for k in 0..d {
                    let delta = query[k] - data[(i, k)];
                    for j in 0..p {
                        g[(k, j)] -= delta * scaled[j];
                    }
                }
            }
            g
        });
        Ok(QueryEval {
            log_density,
            gradient,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::central_difference;
    use nalgebra::SymmetricEigen;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn random_instance(seed: u64, n: usize, d: usize, p: usize) -> (SampleSet, ProjectionMatrix, Bandwidth) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = SampleSet::new(gaussian_matrix(&mut rng, n, d), DomainTag::Source).unwrap();
        let q = gaussian_matrix(&mut rng, d, p).qr().q();
        let variances = (0..p).map(|j| 0.3 + 0.2 * j as f64).collect();
        (samples, ProjectionMatrix::new(q).unwrap(), Bandwidth::new(variances).unwrap())
    }

    fn single(point: &[f64]) -> SampleSet {
        SampleSet::from_rows(&[point.to_vec()], DomainTag::Source).unwrap()
    }

    #[test]
    fn sample_set_rejects_bad_input() {
        assert!(SampleSet::new(Matrix::zeros(0, 2), DomainTag::Source).is_err());
        let m = Matrix::from_row_slice(2, 1, &[1.0, f64::NAN]);
        assert!(SampleSet::new(m, DomainTag::Source).is_err());
        let m = Matrix::from_row_slice(2, 1, &[1.0, 2.0]);
        assert!(matches!(
            SampleSet::with_labels(m, vec![0], DomainTag::Target),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn projection_and_bandwidth_invariants() {
        assert!(ProjectionMatrix::new(Matrix::from_row_slice(2, 1, &[1.0, 1.0])).is_err());
        assert!(ProjectionMatrix::new(Matrix::identity(2, 3)).is_err());
        assert!(ProjectionMatrix::identity(3, 2).is_ok());
        assert!(Bandwidth::new(vec![1.0, 0.0]).is_err());
        assert!(Bandwidth::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn kernel_value_examples() {
        let s = SampleSet::from_rows(&[vec![0.0, 0.0], vec![3.0, -1.0]], DomainTag::Source).unwrap();
        let w = ProjectionMatrix::identity(2, 1).unwrap();
        let bw = Bandwidth::new(vec![1.0]).unwrap();
        let m = KdeModel::new(&s, &w, &bw).unwrap();
        assert_eq!(m.kernel_value(&[0.0, 0.0], 0).unwrap(), 1.0);
        // delta orthogonal to W
        assert_eq!(m.kernel_value(&[3.0, 7.0], 1).unwrap(), 1.0);
        // delta = (2, 5): only the first coordinate survives, exponent -2
        let k = m.kernel_value(&[2.0, 5.0], 0).unwrap();
        assert!((k - (-2.0_f64).exp()).abs() < 1e-15);
        assert!((k - 0.1353353).abs() < 1e-7);
        assert!(m.kernel_value(&[0.0], 0).is_err());
        assert!(m.kernel_value(&[0.0, 0.0], 2).is_err());
    }

    #[test]
    fn softmax_examples() {
        let s = single(&[1.0, 2.0]);
        let w = ProjectionMatrix::identity(2, 2).unwrap();
        let bw = Bandwidth::new(vec![1.0, 1.0]).unwrap();
        let m = KdeModel::new(&s, &w, &bw).unwrap();
        assert_eq!(m.softmax_weights(&[5.0, -3.0]).unwrap(), vec![1.0]);

        // four samples on a circle around the query
        let s = SampleSet::from_rows(
            &[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0], vec![0.0, -1.0]],
            DomainTag::Source,
        )
        .unwrap();
        let m = KdeModel::new(&s, &w, &bw).unwrap();
        for a in m.softmax_weights(&[0.0, 0.0]).unwrap() {
            assert!((a - 0.25).abs() < 1e-15);
        }

        // projected distance^2 / h^2 = 100 -> exponent -50
        let s = SampleSet::from_rows(&[vec![0.0], vec![20.0]], DomainTag::Source).unwrap();
        let w1 = ProjectionMatrix::identity(1, 1).unwrap();
        let bw4 = Bandwidth::new(vec![4.0]).unwrap();
        let m = KdeModel::new(&s, &w1, &bw4).unwrap();
        let a = m.softmax_weights(&[0.0]).unwrap();
        let e = (-50.0_f64).exp();
        assert!((a[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((a[1] - e / (1.0 + e)).abs() < 1e-30);
    }

    #[test]
    fn log_density_examples() {
        let s = single(&[0.7]);
        let w = ProjectionMatrix::identity(1, 1).unwrap();
        let bw = Bandwidth::new(vec![1.0]).unwrap();
        let m = KdeModel::new(&s, &w, &bw).unwrap();
        let expected = -(2.0 * std::f64::consts::PI).sqrt().ln();
        assert!((m.log_density(&[0.7]).unwrap() - expected).abs() < 1e-15);
        assert!((expected + 0.9189385).abs() < 1e-7);
    }

    #[test]
    fn log_density_distant_samples_stay_finite() {
        let s = SampleSet::from_rows(&[vec![0.0], vec![1.0]], DomainTag::Source).unwrap();
        let w = ProjectionMatrix::identity(1, 1).unwrap();
        let bw = Bandwidth::new(vec![1e-4]).unwrap();
        let m = KdeModel::new(&s, &w, &bw).unwrap();
        let v = m.log_density(&[50.0]).unwrap();
        assert!(v.is_finite() && v < -1e6);
    }

    #[test]
    fn leave_one_out_drops_self_term() {
        let s = SampleSet::from_rows(&[vec![0.0], vec![1.0], vec![3.0]], DomainTag::Source).unwrap();
        let w = ProjectionMatrix::identity(1, 1).unwrap();
        let bw = Bandwidth::new(vec![0.5]).unwrap();
        let m = KdeModel::new(&s, &w, &bw).unwrap();
        let loo = m.log_density_excluding(&[0.0], Some(0)).unwrap();
        let direct = bw.log_normalizer()
            + (0.5 * ((-1.0_f64 / (2.0 * 0.5)).exp() + (-9.0_f64 / (2.0 * 0.5)).exp())).ln();
        assert!((loo - direct).abs() < 1e-14);
        let full = m.log_density(&[0.0]).unwrap();
        assert!(full > loo);
        let a = m.softmax_weights_excluding(&[0.0], Some(0)).unwrap();
        assert_eq!(a[0], 0.0);
        let single_set = single(&[0.0]);
        let m1 = KdeModel::new(&single_set, &w, &bw).unwrap();
        assert!(m1.log_density_excluding(&[0.0], Some(0)).is_err());
    }

    #[test]
    fn scatter_examples() {
        let s = single(&[1.0, -2.0]);
        let w = ProjectionMatrix::identity(2, 1).unwrap();
        let bw = Bandwidth::new(vec![1.0]).unwrap();
        let m = KdeModel::new(&s, &w, &bw).unwrap();
        assert_eq!(m.scatter_matrix(&[1.0, -2.0]).unwrap(), Matrix::zeros(2, 2));

        // deltas (1,0) and (0,1) at equal projected distance along (1,1)/sqrt(2)
        let s = SampleSet::from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0]], DomainTag::Source).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let w = ProjectionMatrix::new(Matrix::from_row_slice(2, 1, &[r, r])).unwrap();
        let m = KdeModel::new(&s, &w, &bw).unwrap();
        let c = m.scatter_matrix(&[0.0, 0.0]).unwrap();
        let expected = Matrix::identity(2, 2) * 0.5;
        assert!((c - expected).norm() < 1e-15);
    }

    #[test]
    fn scatter_is_symmetric_psd_on_random_instances() {
        for seed in 0..20 {
            let (s, w, bw) = random_instance(seed, 15, 5, 2);
            let m = KdeModel::new(&s, &w, &bw).unwrap();
            let q = vec![0.3, -0.1, 0.5, 1.0, -0.7];
            let c = m.scatter_matrix(&q).unwrap();
            assert_eq!(c, c.transpose());
            let min_eig = SymmetricEigen::new(c).eigenvalues.min();
            assert!(min_eig >= -1e-10, "seed {seed}: {min_eig}");
        }
    }

    #[test]
    fn gradient_is_zero_for_single_sample_at_query() {
        let s = single(&[0.5, 0.5, -1.0]);
        let w = ProjectionMatrix::identity(3, 2).unwrap();
        for c in [0.01, 1.0, 100.0] {
            let bw = Bandwidth::new(vec![c, 2.0 * c]).unwrap();
            let m = KdeModel::new(&s, &w, &bw).unwrap();
            assert_eq!(m.log_density_gradient(&[0.5, 0.5, -1.0]).unwrap(), Matrix::zeros(3, 2));
        }
    }

    #[test]
    fn gradient_paths_agree() {
        let (s, w, bw) = random_instance(3, 20, 5, 2);
        let m = KdeModel::new(&s, &w, &bw).unwrap();
        let q = s.row(4);
        let fast = m.log_density_gradient(&q).unwrap();
        let literal = m.log_density_gradient_via_scatter(&q, None).unwrap();
        assert!((fast - literal).amax() < 1e-12);
    }

    #[test]
    fn gradient_matches_central_differences() {
        for seed in 0..20 {
            let (s, w, bw) = random_instance(100 + seed, 20, 5, 2);
            let m = KdeModel::new(&s, &w, &bw).unwrap();
            let q = vec![0.2, -0.4, 0.9, 0.1, -0.3];
            let analytic = m.log_density_gradient(&q).unwrap();
            let numeric = central_difference(
                |wp: &Matrix| KdeModel::from_matrix(&s, wp, &bw).unwrap().log_density(&q).unwrap(),
                w.as_matrix(),
                1e-6,
            )
            .unwrap();
            for (a, n) in analytic.iter().zip(numeric.iter()) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
                assert!(rel <= 1e-5, "seed {seed}: analytic {a}, numeric {n}, rel {rel}");
            }
        }
    }

    #[test]
    fn translation_and_duplication_invariance() {
        let (s, w, bw) = random_instance(9, 12, 4, 2);
        let q = vec![0.1, 0.2, -0.3, 0.4];
        let base = KdeModel::new(&s, &w, &bw).unwrap().log_density(&q).unwrap();

        let shift = [10.0, -4.0, 2.5, 7.0];
        let moved = SampleSet::new(
            Matrix::from_fn(s.n(), s.dim(), |i, j| s.data()[(i, j)] + shift[j]),
            DomainTag::Source,
        )
        .unwrap();
        let q_moved: Vec<f64> = q.iter().zip(shift).map(|(a, b)| a + b).collect();
        let translated = KdeModel::new(&moved, &w, &bw).unwrap().log_density(&q_moved).unwrap();
        assert!((base - translated).abs() <= 1e-12);

        let doubled = s.concat(&s).unwrap();
        let dup = KdeModel::new(&doubled, &w, &bw).unwrap().log_density(&q).unwrap();
        assert!((base - dup).abs() <= 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_is_a_probability_vector(
                seed in 0u64..1000,
                n in 1usize..30,
                scale in 0.01f64..100.0,
                q in proptest::collection::vec(-20.0f64..20.0, 4),
            ) {
                let (s, w, _) = random_instance(seed, n, 4, 2);
                let bw = Bandwidth::new(vec![scale, 1.0 / scale]).unwrap();
                let m = KdeModel::new(&s, &w, &bw).unwrap();
                let a = m.softmax_weights(&q).unwrap();
                prop_assert!(a.iter().all(|v| *v >= 0.0));
                prop_assert!((a.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            }

            #[test]
            fn duplicated_mixture_has_single_point_density(
                n in 1usize..20,
                point in proptest::collection::vec(-5.0f64..5.0, 3),
                q in proptest::collection::vec(-5.0f64..5.0, 3),
            ) {
                let one = single(&point);
                let many = SampleSet::from_rows(&vec![point.clone(); n], DomainTag::Source).unwrap();
                let w = ProjectionMatrix::identity(3, 2).unwrap();
                let bw = Bandwidth::new(vec![0.8, 1.3]).unwrap();
                let a = KdeModel::new(&one, &w, &bw).unwrap().log_density(&q).unwrap().exp();
                let b = KdeModel::new(&many, &w, &bw).unwrap().log_density(&q).unwrap().exp();
                prop_assert!((a - b).abs() <= 1e-12 * a.max(1e-300));
            }
        }
    }
}
