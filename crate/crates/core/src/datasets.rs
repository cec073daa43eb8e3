//! Data ingestion, synthetic covariate shift and transfer evaluation.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::{DomainTag, ProjectionMatrix, SampleSet};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::optimizer::init_projection;
use crate::{Matrix, Vector};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CsvOptions {
    /// Last column holds integer class labels.
    pub has_labels: bool,
    /// Skip the first line.
    pub header: bool,
}

/// Loads a headerless numeric CSV.
pub fn load_csv(path: impl AsRef<Path>, has_labels: bool, domain: DomainTag) -> Result<SampleSet> {
    load_csv_with(
        path,
        CsvOptions {
            has_labels,
            header: false,
        },
        domain,
    )
}

pub fn load_csv_with(path: impl AsRef<Path>, options: CsvOptions, domain: DomainTag) -> Result<SampleSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parse_err = |line: u64, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(options.header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<i64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let expected = *width.get_or_insert(record.len());
        if record.len() != expected {
            return Err(parse_err(
                line,
                format!("expected {expected} fields, found {}", record.len()),
            ));
        }
        let features = if options.has_labels {
            if record.len() < 2 {
                return Err(parse_err(line, "labeled row needs at least one feature and a label".into()));
            }
            let raw = &record[record.len() - 1];
            let label = raw
                .parse::<i64>()
                .map_err(|_| parse_err(line, format!("label '{raw}' is not an integer")))?;
            labels.push(label);
            record.len() - 1
        } else {
            record.len()
        };
        for (col, field) in record.iter().take(features).enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(line, format!("column {}: '{field}' is not a number", col + 1)))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {}: non-finite value '{field}'", col + 1)));
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::InvalidInput(format!("{}: empty file", path.display())));
    }
    let d = values.len() / rows;
    let data = Matrix::from_row_slice(rows, d, &values);
    if options.has_labels {
        SampleSet::with_labels(data, labels, domain)
    } else {
        SampleSet::new(data, domain)
    }
}

/// Renders samples as CSV rows (labels appended as the last column when present).
pub fn to_csv_string(set: &SampleSet) -> String {
    matrix_to_csv(set.data(), set.labels())
}

pub fn matrix_to_csv(m: &Matrix, labels: Option<&[i64]>) -> String {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", m[(i, j)]).unwrap();
        }
        if let Some(l) = labels {
            write!(out, ",{}", l[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Parameters of the two-domain synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub d: usize,
    pub n_per_domain: usize,
    pub informative_dims: usize,
    pub shift_magnitude: f64,
    /// Radians, applied in the plane of the first two nuisance dimensions.
    pub rotation_angle: f64,
    pub class_separation: f64,
    pub seed: u64,
}

impl Default for ShiftSpec {
    fn default() -> Self {
        Self {
            d: 4,
            n_per_domain: 100,
            informative_dims: 1,
            shift_magnitude: 8.0,
            rotation_angle: 0.0,
            class_separation: 4.0,
            seed: 42,
        }
    }
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidConfig("d must be at least 1".into()));
        }
        if self.informative_dims > self.d {
            return Err(Error::InvalidConfig(format!(
                "informative_dims ({}) must not exceed d ({})",
                self.informative_dims, self.d
            )));
        }
        if self.n_per_domain < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_per_domain >= 2 required, got {}",
                self.n_per_domain
            )));
        }
        if ![self.shift_magnitude, self.rotation_angle, self.class_separation]
            .iter()
            .all(|v| v.is_finite())
        {
            return Err(Error::InvalidConfig("generator parameters must be finite".into()));
        }
        Ok(())
    }
}

/// Two labeled two-class Gaussian mixtures.
///
/// Row `i` has label `i % 2`. Class means sit at `-/+ class_separation / 2`
/// on every informative dimension; all noise is standard normal. The target
/// domain is shifted by `shift_magnitude` on every nuisance dimension and then
/// rotated by `rotation_angle` in the plane of the first two nuisance
/// dimensions. Source rows are drawn before target rows from one seeded stream.
pub fn make_shift_pair(spec: &ShiftSpec) -> Result<(SampleSet, SampleSet)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d, k) = (spec.n_per_domain, spec.d, spec.informative_dims);
    let labels: Vec<i64> = (0..n).map(|i| (i % 2) as i64).collect();

    let mut draw = |shifted: bool| {
        let mut m = Matrix::zeros(n, d);
        for i in 0..n {
            let sign = if labels[i] == 1 { 1.0 } else { -1.0 };
            for j in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                m[(i, j)] = z + if j < k { sign * spec.class_separation / 2.0 } else { 0.0 };
            }
            if shifted {
                for j in k..d {
                    m[(i, j)] += spec.shift_magnitude;
                }
                if d >= k + 2 {
                    let (c, s) = (spec.rotation_angle.cos(), spec.rotation_angle.sin());
                    let (a, b) = (m[(i, k)], m[(i, k + 1)]);
                    m[(i, k)] = c * a - s * b;
                    m[(i, k + 1)] = s * a + c * b;
                }
            }
        }
        m
    };
    let source = draw(false);
    let target = draw(true);
    Ok((
        SampleSet::with_labels(source, labels.clone(), DomainTag::Source)?,
        SampleSet::with_labels(target, labels, DomainTag::Target)?,
    ))
}

/// Per-dimension affine map fitted on pooled source and target samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub mean: Vector,
    pub scale: Vector,
}

impl Standardization {
    pub fn apply(&self, set: &SampleSet) -> Result<SampleSet> {
        if set.dim() != self.mean.len() {
            return Err(Error::mismatch("standardization dimension", self.mean.len(), set.dim()));
        }
        let data = Matrix::from_fn(set.n(), set.dim(), |i, j| {
            (set.data()[(i, j)] - self.mean[j]) / self.scale[j]
        });
        let out = SampleSet::new(data, set.domain())?;
        Ok(match set.labels() {
            Some(l) => SampleSet::with_labels(out.data().clone(), l.to_vec(), set.domain())?,
            None => out,
        })
    }
}

/// Subtracts the pooled mean and divides by the pooled standard deviation
/// (n - 1 denominator) in each dimension.
pub fn standardize(source: &SampleSet, target: &SampleSet) -> Result<(SampleSet, SampleSet, Standardization)> {
    let pooled = source.concat(target)?;
    let n = pooled.n();
    if n < 2 {
        return Err(Error::InvalidInput("standardization needs at least two pooled samples".into()));
    }
    let d = pooled.dim();
    let mut mean = Vector::zeros(d);
    let mut scale = Vector::zeros(d);
    for j in 0..d {
        let col = pooled.data().column(j);
        let m = compensated_sum(col.iter().copied()) / n as f64;
        let ss = compensated_sum(col.iter().map(|v| (v - m) * (v - m)));
        let sd = (ss / (n - 1) as f64).sqrt();
        let magnitude = col.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        if sd == 0.0 || sd < 1e-15 * magnitude {
            return Err(Error::ZeroVariance { dim: j });
        }
        mean[j] = m;
        scale[j] = sd;
    }
    let t = Standardization { mean, scale };
    Ok((t.apply(source)?, t.apply(target)?, t))
}

/// 1-NN accuracy on the target when the classifier is trained on the
/// projected source. Distance ties go to the smaller source row.
pub fn knn_transfer_eval(source: &SampleSet, target: &SampleSet, w: &ProjectionMatrix) -> Result<f64> {
    let source_labels = source.labels().ok_or(Error::Unlabeled("source"))?;
    let target_labels = target.labels().ok_or(Error::Unlabeled("target"))?;
    let zs = w.project(source)?;
    let zt = w.project(target)?;
    let correct = (0..zt.nrows())
        .filter(|&i| {
            let query = zt.row(i);
            let mut best = (f64::INFINITY, 0usize);
            for k in 0..zs.nrows() {
                let dist = (zs.row(k) - query).norm_squared();
                if dist < best.0 {
                    best = (dist, k);
                }
            }
            source_labels[best.1] == target_labels[i]
        })
        .count();
    Ok(correct as f64 / zt.nrows() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy_adapted: f64,
    /// 1-NN in the full ambient space.
    pub accuracy_unadapted: f64,
    /// 1-NN under the principal-component initialization with the same `p`.
    pub accuracy_pca: f64,
    pub n_test: usize,
}

/// Transfer accuracy of `w` next to the unadapted and PCA baselines.
pub fn evaluate_transfer(source: &SampleSet, target: &SampleSet, w: &ProjectionMatrix, seed: u64) -> Result<EvalReport> {
    let identity = ProjectionMatrix::identity(source.dim(), source.dim())?;
    let pca = init_projection(source, target, w.subspace_dim(), seed)?;
    Ok(EvalReport {
        accuracy_adapted: knn_transfer_eval(source, target, w)?,
        accuracy_unadapted: knn_transfer_eval(source, target, &identity)?,
        accuracy_pca: knn_transfer_eval(source, target, &pca)?,
        n_test: target.n(),
    })
}
