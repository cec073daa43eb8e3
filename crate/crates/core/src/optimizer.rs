//! Minimization of the projected Hellinger objective over orthonormal `W`.
//!
//! Each outer iteration refreshes the shared bandwidth (every
//! `refresh_bandwidth_every` iterations), evaluates the objective and its
//! frozen-bandwidth gradient, projects the gradient onto the tangent space of
//! the Stiefel manifold and runs an Armijo backtracking search along the
//! negative tangent direction, pulling every trial point back with a
//! sign-fixed thin QR retraction.

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::bandwidth::{compute_bandwidth_with, BandwidthConfig};
use crate::density::{Bandwidth, ProjectionMatrix, SampleSet};
use crate::divergence::{objective_and_gradient, objective_with, DivergenceOptions};
use crate::error::{Error, Result};
use crate::Matrix;

/// Smallest step tried before the line search gives up.
pub const MIN_STEP: f64 = 1e-14;
/// `|R_jj|` below this makes a retraction candidate rank deficient.
pub const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub subspace_dim: usize,
    pub max_iters: usize,
    pub initial_step: f64,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub seed: u64,
    pub refresh_bandwidth_every: usize,
    pub bandwidth: BandwidthConfig,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            subspace_dim: 1,
            max_iters: 200,
            initial_step: 1.0,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            rel_tol: 1e-9,
            grad_tol: 1e-8,
            seed: 0,
            refresh_bandwidth_every: 1,
            bandwidth: BandwidthConfig::default(),
        }
    }
}

impl FitConfig {
    pub fn with_subspace_dim(mut self, p: usize) -> Self {
        self.subspace_dim = p;
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidConfig(msg));
        if self.subspace_dim == 0 || self.subspace_dim > d {
            return fail(format!("subspace_dim must be in 1..={d}, got {}", self.subspace_dim));
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            return fail(format!("initial_step must be positive, got {}", self.initial_step));
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return fail(format!("armijo_c must be in (0, 1), got {}", self.armijo_c));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return fail(format!("backtrack_factor must be in (0, 1), got {}", self.backtrack_factor));
        }
        if !(self.rel_tol > 0.0) || !(self.grad_tol > 0.0) {
            return fail("rel_tol and grad_tol must be positive".into());
        }
        if self.refresh_bandwidth_every == 0 {
            return fail("refresh_bandwidth_every must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergedReason {
    RelTol,
    GradTol,
    MaxIters,
    LineSearchFailure,
}

impl ConvergedReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ConvergedReason::RelTol => "rel_tol",
            ConvergedReason::GradTol => "grad_tol",
            ConvergedReason::MaxIters => "max_iters",
            ConvergedReason::LineSearchFailure => "line_search_failure",
        }
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Objective at the iterate, under this iteration's bandwidth.
    pub objective: f64,
    /// Frobenius norm of the tangent-space gradient.
    pub grad_norm: f64,
    /// Accepted step size, 0 when no step was taken.
    pub step: f64,
    /// Objective after the accepted step, same bandwidth.
    pub objective_after: Option<f64>,
    /// Incremented every time the bandwidth is recomputed.
    pub bandwidth_segment: usize,
    /// `||W^T W - I||_F` of the iterate.
    pub orthonormality_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub initial_w: ProjectionMatrix,
    pub final_w: ProjectionMatrix,
    pub final_bandwidth: Bandwidth,
    pub objective_trace: Vec<f64>,
    pub grad_norm_trace: Vec<f64>,
    pub iterations_used: usize,
    pub converged_reason: ConvergedReason,
    pub records: Vec<IterationRecord>,
}

impl FitReport {
    /// Objective at `final_w` under the last bandwidth used by the fit.
    pub fn final_objective(&self) -> f64 {
        self.records
            .last()
            .map(|r| r.objective_after.unwrap_or(r.objective))
            .unwrap_or(f64::NAN)
    }
}

/// Thin-QR retraction onto the Stiefel manifold with `diag(R) > 0`.
pub fn retract(candidate: &Matrix) -> Result<ProjectionMatrix> {
    let (d, p) = candidate.shape();
    if p == 0 || p > d {
        return Err(Error::InvalidInput(format!(
            "retraction needs 1 <= p <= d, got {d}x{p}"
        )));
    }
    if candidate.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("retraction candidate has non-finite entries".into()));
    }
    let qr = candidate.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        let rjj = r[(j, j)];
        if rjj.abs() < RANK_TOL {
            return Err(Error::RankDeficient { col: j, value: rjj.abs() });
        }
        if rjj < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    ProjectionMatrix::new(q)
}

/// Seeded Gaussian `d x p` matrix pushed through [`retract`].
pub fn random_orthonormal(d: usize, p: usize, seed: u64) -> Result<ProjectionMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = Matrix::from_fn(d, p, |_, _| StandardNormal.sample(&mut rng));
    retract(&g)
}

/// Top-`p` principal directions of the pooled, per-dimension standardized
/// samples. Constant dimensions are centered but not rescaled. Each column
/// is signed so its largest-magnitude entry is positive. When the pooled
/// covariance has rank below `p`, a seeded random orthonormal matrix is
/// returned instead.
pub fn init_projection(source: &SampleSet, target: &SampleSet, p: usize, seed: u64) -> Result<ProjectionMatrix> {
    let pooled = source.concat(target)?;
    let (n, d) = (pooled.n(), pooled.dim());
    if p == 0 || p > d {
        return Err(Error::InvalidConfig(format!("subspace_dim must be in 1..={d}, got {p}")));
    }
    if n < 2 {
        return Err(Error::InvalidInput("initialization needs at least two pooled samples".into()));
    }
    let data = pooled.data();
    let mut z = data.clone();
    for j in 0..d {
        let col = data.column(j);
        let mean = col.mean();
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        let sd = var.sqrt();
        let scale = if sd > 0.0 { sd } else { 1.0 };
        z.column_mut(j).iter_mut().for_each(|v| *v = (*v - mean) / scale);
    }
    let cov = (z.transpose() * &z) / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&v| top > 0.0 && v > 1e-10 * top)
        .count();
    if rank < p {
        log::warn!("pooled covariance has rank {rank} < {p}; using seeded random initialization");
        return random_orthonormal(d, p, seed);
    }

    let mut w = Matrix::zeros(d, p);
    for (c, &idx) in order.iter().take(p).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = v
            .iter()
            .enumerate()
            .fold((0, 0.0_f64), |best, (i, x)| if x.abs() > best.1.abs() { (i, *x) } else { best });
        let sign = if pivot.1 < 0.0 { -1.0 } else { 1.0 };
        w.set_column(c, &(v * sign));
    }
    ProjectionMatrix::new(w)
}

/// Projection of `g` onto the tangent space at `w`: `g - w sym(w^T g)`.
pub fn tangent_projection(w: &Matrix, g: &Matrix) -> Matrix {
    let wtg = w.transpose() * g;
    let sym = (&wtg + wtg.transpose()) * 0.5;
    g - w * sym
}

/// Fits `W` starting from [`init_projection`].
pub fn fit(source: &SampleSet, target: &SampleSet, config: &FitConfig) -> Result<FitReport> {
    if source.dim() != target.dim() {
        return Err(Error::mismatch("source vs target dimension", source.dim(), target.dim()));
    }
    config.validate(source.dim())?;
    let init = init_projection(source, target, config.subspace_dim, config.seed)?;
    fit_from(source, target, init, config)
}

/// Fits `W` starting from a given orthonormal matrix.
pub fn fit_from(source: &SampleSet, target: &SampleSet, init: ProjectionMatrix, config: &FitConfig) -> Result<FitReport> {
    if source.dim() != target.dim() {
        return Err(Error::mismatch("source vs target dimension", source.dim(), target.dim()));
    }
    config.validate(source.dim())?;
    if init.dim() != source.dim() || init.subspace_dim() != config.subspace_dim {
        return Err(Error::InvalidConfig(format!(
            "initial projection is {}x{}, expected {}x{}",
            init.dim(),
            init.subspace_dim(),
            source.dim(),
            config.subspace_dim
        )));
    }
    let opts = DivergenceOptions::default();
    let at = |iteration: usize| move |e: Error| Error::AtIteration { iteration, source: Box::new(e) };

    let mut w = init.clone();
    let mut bw: Option<Bandwidth> = None;
    let mut segment = 0usize;
    let mut trial_step = config.initial_step;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut iterations_used = 0usize;
    let mut reason = ConvergedReason::MaxIters;

    for k in 0..config.max_iters {
        if k % config.refresh_bandwidth_every == 0 {
            if bw.is_some() {
                segment += 1;
            }
            bw = Some(compute_bandwidth_with(source, target, &w, &config.bandwidth).map_err(at(k))?);
        }
        let h = bw.as_ref().expect("bandwidth set on first iteration");
        let (obj, egrad) = objective_and_gradient(source, target, w.as_matrix(), h, opts).map_err(at(k))?;
        let direction = tangent_projection(w.as_matrix(), egrad.as_matrix());
        let grad_norm = direction.norm();
        let mut record = IterationRecord {
            iteration: k,
            objective: obj.d_hat,
            grad_norm,
            step: 0.0,
            objective_after: None,
            bandwidth_segment: segment,
            orthonormality_error: w.orthonormality_error(),
        };
        if grad_norm < config.grad_tol {
            records.push(record);
            reason = ConvergedReason::GradTol;
            break;
        }

        let slope = grad_norm * grad_norm;
        let mut t = trial_step;
        let accepted = loop {
            if t < MIN_STEP {
                break None;
            }
            let moved = w.as_matrix() - &direction * t;
            if let Ok(candidate) = retract(&moved) {
                let f_new = objective_with(source, target, candidate.as_matrix(), h, opts)
                    .map_err(at(k))?
                    .d_hat;
                if f_new <= obj.d_hat - config.armijo_c * t * slope {
                    break Some((candidate, f_new));
                }
            }
            t *= config.backtrack_factor;
        };

        let Some((candidate, f_new)) = accepted else {
            records.push(record);
            reason = ConvergedReason::LineSearchFailure;
            break;
        };
        record.step = t;
        record.objective_after = Some(f_new);
        records.push(record);
        w = candidate;
        iterations_used += 1;
        trial_step = 2.0 * t;

        let rel_change = (obj.d_hat - f_new).abs() / obj.d_hat.abs().max(f64::MIN_POSITIVE);
        if rel_change < config.rel_tol {
            reason = ConvergedReason::RelTol;
            break;
        }
    }

    // max_iters == 0 never enters the loop
    let final_bandwidth = match bw {
        Some(h) => h,
        None => compute_bandwidth_with(source, target, &w, &config.bandwidth)?,
    };
    Ok(FitReport {
        initial_w: init,
        final_w: w,
        final_bandwidth,
        objective_trace: records.iter().map(|r| r.objective).collect(),
        grad_norm_trace: records.iter().map(|r| r.grad_norm).collect(),
        iterations_used,
        converged_reason: reason,
        records,
    })
}
