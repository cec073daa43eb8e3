//! Shared diagonal bandwidth for the source and target KDEs.
//!
//! Both densities use one `H`, derived from the pooled projected samples.
//! The default rule is the normal-reference rule of thumb applied per
//! projected dimension:
//!
//! ```text
//! h_j = sigma_j * (4 / ((p + 2) n))^(1 / (p + 4)),    H_jj = h_j^2
//! ```
//!
//! where `sigma_j` is the sample standard deviation (n - 1 denominator) of the
//! pooled projected coordinate `j` and `n = n_s + n_t`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::density::{Bandwidth, ProjectionMatrix, SampleSet};
use crate::error::{Error, Result};
use crate::numeric::compensated_sum;
use crate::Matrix;

pub const DEFAULT_VARIANCE_FLOOR: f64 = 1e-12;

/// Relative threshold below which a projected dimension counts as constant.
const ZERO_VARIANCE_REL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandwidthRule {
    /// Per-dimension normal-reference rule of thumb on pooled samples.
    #[default]
    NormalReference,
}

impl BandwidthRule {
    pub fn name(self) -> &'static str {
        match self {
            BandwidthRule::NormalReference => "normal-reference",
        }
    }

    /// Multiplier applied to the pooled standard deviation.
    pub fn scale_factor(self, p: usize, n: usize) -> f64 {
        match self {
            BandwidthRule::NormalReference => normal_reference_factor(p, n),
        }
    }
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal-reference" | "rule-of-thumb" => Ok(BandwidthRule::NormalReference),
            other => Err(Error::InvalidConfig(format!(
                "unknown bandwidth rule '{other}' (expected 'normal-reference')"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthConfig {
    pub rule: BandwidthRule,
    /// Lower bound applied to every variance.
    pub floor: f64,
}

impl Default for BandwidthConfig {
    fn default() -> Self {
        Self {
            rule: BandwidthRule::default(),
            floor: DEFAULT_VARIANCE_FLOOR,
        }
    }
}

/// `(4 / ((p + 2) n))^(1 / (p + 4))`.
pub fn normal_reference_factor(p: usize, n: usize) -> f64 {
    let p = p as f64;
    (4.0 / ((p + 2.0) * n as f64)).powf(1.0 / (p + 4.0))
}

/// Bandwidth at `w` under the default rule and floor.
pub fn compute_bandwidth(source: &SampleSet, target: &SampleSet, w: &ProjectionMatrix) -> Result<Bandwidth> {
    compute_bandwidth_with(source, target, w, &BandwidthConfig::default())
}

pub fn compute_bandwidth_with(
    source: &SampleSet,
    target: &SampleSet,
    w: &ProjectionMatrix,
    config: &BandwidthConfig,
) -> Result<Bandwidth> {
    compute_bandwidth_for_matrix(source, target, w.as_matrix(), config)
}

/// Same as [`compute_bandwidth_with`] for any `d x p` matrix.
pub fn compute_bandwidth_for_matrix(
    source: &SampleSet,
    target: &SampleSet,
    w: &Matrix,
    config: &BandwidthConfig,
) -> Result<Bandwidth> {
    if source.dim() != target.dim() {
        return Err(Error::mismatch("source vs target dimension", source.dim(), target.dim()));
    }
    if w.nrows() != source.dim() {
        return Err(Error::mismatch("projection rows vs sample dimension", source.dim(), w.nrows()));
    }
    if !(config.floor > 0.0 && config.floor.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "bandwidth floor must be positive, got {}",
            config.floor
        )));
    }
    let n = source.n() + target.n();
    if n < 2 {
        return Err(Error::InvalidInput("bandwidth needs at least two pooled samples".into()));
    }
    let p = w.ncols();
    let zs = source.data() * w;
    let zt = target.data() * w;
    let factor = config.rule.scale_factor(p, n);

    let variances = (0..p)
        .map(|j| {
            let (cs, ct) = (zs.column(j), zt.column(j));
            let column = || cs.iter().chain(ct.iter()).copied();
            let mean = compensated_sum(column()) / n as f64;
            let ss = compensated_sum(column().map(|v| (v - mean) * (v - mean)));
            let sigma = (ss / (n - 1) as f64).sqrt();
            let scale = column().fold(0.0_f64, |m, v| m.max(v.abs()));
            if sigma == 0.0 || sigma < ZERO_VARIANCE_REL * scale {
                return Err(Error::ZeroVariance { dim: j });
            }
            let h = sigma * factor;
            let var = h * h;
            if var < config.floor {
                log::warn!(
                    "bandwidth variance {var:e} in projected dimension {j} raised to floor {:e}",
                    config.floor
                );
                Ok(config.floor)
            } else {
                Ok(var)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Bandwidth::new(variances)
}
