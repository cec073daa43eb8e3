//! Empirical Hellinger objective between projected source and target KDEs.
//!
//! With `s` and `t` the projected source and target densities, the contrast
//! `T(x) = s / (s + t)` is the posterior probability that `x` came from the
//! source. The per-sample loss is `G(T) = 1 - 2 sqrt(T (1 - T))`, which
//! satisfies `T (1 - T) G'(T) = sqrt(T (1 - T)) (2T - 1)`, and the objective
//! averages it over both sample sets:
//!
//! ```text
//! D(W) = (1/n_s) sum_i G(T(x_i^s)) + (1/n_t) sum_i G(T(x_i^t))
//! ```
//!
//! Its gradient with the bandwidth held fixed is
//!
//! ```text
//! dD/dW = mean over queries of sqrt(T (1 - T)) (2T - 1) (-C^s(x) + C^t(x)) W H^-1
//! ```
//!
//! Queries are evaluated in parallel; partial results are reduced in index
//! order with compensated summation so the thread count never changes a bit
//! of the output.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bandwidth::{compute_bandwidth_for_matrix, BandwidthConfig};
use crate::density::{Bandwidth, KdeModel, ProjectionMatrix, SampleSet};
use crate::error::{Error, Result};
use crate::gradcheck::central_difference;
use crate::numeric::{compensated_matrix_sum, compensated_mean, sigmoid};
use crate::Matrix;

/// Contrast values are clamped to `[CONTRAST_EPS, 1 - CONTRAST_EPS]`.
pub const CONTRAST_EPS: f64 = 1e-12;

/// `T = s / (s + t)`, kept strictly inside `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct ContrastValue(f64);

impl ContrastValue {
    pub fn new(t: f64) -> Result<Self> {
        if t > 0.0 && t < 1.0 {
            Ok(Self(t))
        } else {
            Err(Error::InvalidInput(format!("contrast must lie in (0, 1), got {t}")))
        }
    }

    /// `sigmoid(log s - log t)`, clamped.
    pub fn from_log_ratio(log_ratio: f64) -> Self {
        Self(sigmoid(log_ratio).clamp(CONTRAST_EPS, 1.0 - CONTRAST_EPS))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveValue {
    pub d_hat: f64,
    pub per_source_losses: Vec<f64>,
    pub per_target_losses: Vec<f64>,
}

/// `dD/dW`, a `d x p` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMatrix(pub Matrix);

impl GradientMatrix {
    pub fn as_matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_inner(self) -> Matrix {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DivergenceOptions {
    /// Drop each query's own kernel term from the density of its own domain.
    pub leave_one_out: bool,
}

/// Ways of assembling the frozen-bandwidth gradient. All three are the same
/// quantity; they differ only in the order of operations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GradientPath {
    /// `sqrt(T(1-T)) (2T-1) (dlog s/dW - dlog t/dW)`.
    #[default]
    FinalForm,
    /// `G'(T) * dT/dW` with `dT/dW = T(1-T) (dlog s/dW - dlog t/dW)`.
    ChainRule,
    /// Final form with `dlog f/dW = -C^f(x) W H^-1` built from explicit
    /// `d x d` scatter matrices.
    Scatter,
}

/// Contrast of the two models at `query`.
pub fn contrast(source_model: &KdeModel<'_>, target_model: &KdeModel<'_>, query: &[f64]) -> Result<ContrastValue> {
    check_models(source_model, target_model)?;
    let ls = source_model.log_density(query)?;
    let lt = target_model.log_density(query)?;
    Ok(ContrastValue::from_log_ratio(ls - lt))
}

fn check_models(a: &KdeModel<'_>, b: &KdeModel<'_>) -> Result<()> {
    if a.projection() != b.projection() || a.bandwidth() != b.bandwidth() {
        return Err(Error::ModelMismatch);
    }
    Ok(())
}

/// `G(T) = 1 - 2 sqrt(T (1 - T))`, in `[0, 1]` with its minimum at `T = 1/2`.
pub fn g_value(t: ContrastValue) -> f64 {
    let t = t.0;
    1.0 - 2.0 * (t * (1.0 - t)).sqrt()
}

/// `G'(T) = (2T - 1) / sqrt(T (1 - T))`.
pub fn g_derivative(t: ContrastValue) -> f64 {
    let t = t.0;
    (2.0 * t - 1.0) / (t * (1.0 - t)).sqrt()
}

/// Per-query gradient weight `sqrt(T (1 - T)) (2T - 1)`.
pub fn gradient_weight(t: ContrastValue) -> f64 {
    let t = t.0;
    (t * (1.0 - t)).sqrt() * (2.0 * t - 1.0)
}

/// `T (1 - T) G'(T) - sqrt(T (1 - T)) (2T - 1)`; zero up to round-off when
/// `G` is consistent with the gradient weight.
pub fn g_derivative_identity_check(t: ContrastValue) -> f64 {
    let v = t.0;
    v * (1.0 - v) * g_derivative(t) - gradient_weight(t)
}

struct QueryTerm {
    loss: f64,
    gradient: Option<Matrix>,
}

fn check_shapes(source: &SampleSet, target: &SampleSet, w: &Matrix, bw: &Bandwidth) -> Result<()> {
    if source.dim() != target.dim() {
        return Err(Error::mismatch("source vs target dimension", source.dim(), target.dim()));
    }
    if w.nrows() != source.dim() {
        return Err(Error::mismatch("projection rows vs sample dimension", source.dim(), w.nrows()));
    }
    if bw.len() != w.ncols() {
        return Err(Error::mismatch("bandwidth length vs projection columns", w.ncols(), bw.len()));
    }
    Ok(())
}

fn query_term(
    s_model: &KdeModel<'_>,
    t_model: &KdeModel<'_>,
    query: &[f64],
    exclude: (Option<usize>, Option<usize>),
    path: Option<GradientPath>,
) -> Result<QueryTerm> {
    let want = path.is_some();
    let s_eval = s_model.evaluate(query, exclude.0, want && path != Some(GradientPath::Scatter))?;
    let t_eval = t_model.evaluate(query, exclude.1, want && path != Some(GradientPath::Scatter))?;
    let t = ContrastValue::from_log_ratio(s_eval.log_density - t_eval.log_density);
    let loss = g_value(t);
    let gradient = match path {
        None => None,
        Some(GradientPath::FinalForm) => {
            let diff = s_eval.gradient.unwrap() - t_eval.gradient.unwrap();
            Some(diff * gradient_weight(t))
        }
        Some(GradientPath::ChainRule) => {
            let v = t.value();
            let dt_dw = (s_eval.gradient.unwrap() - t_eval.gradient.unwrap()) * (v * (1.0 - v));
            Some(dt_dw * g_derivative(t))
        }
        Some(GradientPath::Scatter) => {
            let gs = s_model.log_density_gradient_via_scatter(query, exclude.0)?;
            let gt = t_model.log_density_gradient_via_scatter(query, exclude.1)?;
            Some((gs - gt) * gradient_weight(t))
        }
    };
    Ok(QueryTerm { loss, gradient })
}

fn evaluate_all(
    source: &SampleSet,
    target: &SampleSet,
    w: &Matrix,
    bw: &Bandwidth,
    opts: DivergenceOptions,
    path: Option<GradientPath>,
) -> Result<(ObjectiveValue, Option<GradientMatrix>)> {
    check_shapes(source, target, w, bw)?;
    let s_model = KdeModel::from_matrix(source, w, bw)?;
    let t_model = KdeModel::from_matrix(target, w, bw)?;

    let run = |set: &SampleSet, own_is_source: bool| -> Result<Vec<QueryTerm>> {
        (0..set.n())
            .into_par_iter()
            .with_min_len(16)
            .map(|i| {
                let q = set.row(i);
                let own = opts.leave_one_out.then_some(i);
                let exclude = if own_is_source { (own, None) } else { (None, own) };
                query_term(&s_model, &t_model, &q, exclude, path)
            })
            .collect()
    };
    let s_terms = run(source, true)?;
    let t_terms = run(target, false)?;

    let per_source_losses: Vec<f64> = s_terms.iter().map(|q| q.loss).collect();
    let per_target_losses: Vec<f64> = t_terms.iter().map(|q| q.loss).collect();
    let d_hat = compensated_mean(&per_source_losses) + compensated_mean(&per_target_losses);
    debug_assert!((0.0..=2.0).contains(&d_hat), "d_hat out of range: {d_hat}");
    if !d_hat.is_finite() {
        return Err(Error::Numerical(format!("objective is not finite: {d_hat}")));
    }

    let gradient = path.map(|_| {
        let (d, p) = w.shape();
        let mean_of = |terms: Vec<QueryTerm>| {
            let n = terms.len() as f64;
            let mats: Vec<Matrix> = terms.into_iter().map(|q| q.gradient.unwrap()).collect();
            compensated_matrix_sum(&mats, d, p) / n
        };
        GradientMatrix(mean_of(s_terms) + mean_of(t_terms))
    });
    if let Some(g) = &gradient {
        if g.0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("gradient has non-finite entries".into()));
        }
    }

    Ok((
        ObjectiveValue {
            d_hat,
            per_source_losses,
            per_target_losses,
        },
        gradient,
    ))
}

/// `D(W)` at a fixed bandwidth.
pub fn objective(source: &SampleSet, target: &SampleSet, w: &ProjectionMatrix, bw: &Bandwidth) -> Result<ObjectiveValue> {
    objective_with(source, target, w.as_matrix(), bw, DivergenceOptions::default())
}

/// [`objective`] for an arbitrary `d x p` matrix.
pub fn objective_with(
    source: &SampleSet,
    target: &SampleSet,
    w: &Matrix,
    bw: &Bandwidth,
    opts: DivergenceOptions,
) -> Result<ObjectiveValue> {
    Ok(evaluate_all(source, target, w, bw, opts, None)?.0)
}

/// Frozen-bandwidth gradient `dD/dW`.
pub fn gradient(source: &SampleSet, target: &SampleSet, w: &ProjectionMatrix, bw: &Bandwidth) -> Result<GradientMatrix> {
    gradient_with(source, target, w.as_matrix(), bw, DivergenceOptions::default(), GradientPath::default())
}

pub fn gradient_with(
    source: &SampleSet,
    target: &SampleSet,
    w: &Matrix,
    bw: &Bandwidth,
    opts: DivergenceOptions,
    path: GradientPath,
) -> Result<GradientMatrix> {
    Ok(evaluate_all(source, target, w, bw, opts, Some(path))?.1.unwrap())
}

/// Objective and gradient from one shared pass over the queries.
pub fn objective_and_gradient(
    source: &SampleSet,
    target: &SampleSet,
    w: &Matrix,
    bw: &Bandwidth,
    opts: DivergenceOptions,
) -> Result<(ObjectiveValue, GradientMatrix)> {
    let (obj, grad) = evaluate_all(source, target, w, bw, opts, Some(GradientPath::FinalForm))?;
    Ok((obj, grad.unwrap()))
}

/// Size of the term the frozen-bandwidth gradient leaves out.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthCouplingReport {
    pub frozen_gradient: Matrix,
    /// Central differences of `W -> D(W, H(W))` with the bandwidth re-derived
    /// at every probe.
    pub coupled_gradient: Matrix,
    pub max_abs_discrepancy: f64,
    /// `||coupled - frozen||_F / max(||coupled||_F, tiny)`.
    pub relative_discrepancy: f64,
}

/// Measures how far the frozen-bandwidth gradient is from the derivative of
/// the objective when the bandwidth follows `W`. The coupled side is numeric
/// only; no analytic form of the bandwidth term is claimed.
pub fn bandwidth_coupling_discrepancy(
    source: &SampleSet,
    target: &SampleSet,
    w: &ProjectionMatrix,
    config: &BandwidthConfig,
    fd_step: f64,
) -> Result<BandwidthCouplingReport> {
    let bw = compute_bandwidth_for_matrix(source, target, w.as_matrix(), config)?;
    let frozen = gradient(source, target, w, &bw)?.into_inner();
    let coupled = central_difference(
        |probe: &Matrix| {
            compute_bandwidth_for_matrix(source, target, probe, config)
                .and_then(|b| objective_with(source, target, probe, &b, DivergenceOptions::default()))
                .map_or(f64::NAN, |o| o.d_hat)
        },
        w.as_matrix(),
        fd_step,
    )?;
    let diff = &coupled - &frozen;
    Ok(BandwidthCouplingReport {
        max_abs_discrepancy: diff.amax(),
        relative_discrepancy: diff.norm() / coupled.norm().max(f64::MIN_POSITIVE),
        frozen_gradient: frozen,
        coupled_gradient: coupled,
    })
}
