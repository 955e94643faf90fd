//! Nested Laplace approximation of the posterior marginals.
//!
//! The model is latent Gaussian: observations enter through a log likelihood
//! that is a sum of per-cell terms in the latent vector `gamma`, the prior
//! on `gamma` is the intrinsic rw1 field with precision `tau * S`, and `tau`
//! carries a Gamma prior. Inference runs in three nested steps:
//!
//! 1. For fixed `tau`, Newton iterations find the mode `gamma*(tau)` of the
//!    full conditional; the Gaussian approximation at the mode has precision
//!    `tau S + diag(c)` with `c` the likelihood curvature.
//! 2. The marginal of `tau` is approximated by the ratio of the joint to the
//!    Gaussian approximation, both evaluated at the mode. Exploring it on
//!    the log scale yields a grid of precision values with quadrature
//!    weights.
//! 3. Per-cell marginals conditional on each grid value (Gaussian, or the
//!    tabulated conditional-mean correction) are mixed with the grid
//!    weights; medians, credible bounds, and means come from the mixture.
//!
//! With a Gaussian likelihood every approximation in this chain is exact,
//! which the test suites use as the primary correctness oracle.

use crate::coalescent::{CellStats, CoalescentError, LikelihoodEval};
use crate::gmrf::{gmrf_logdensity, GmrfError, StructureMatrix, TriFactor, LN_2PI};
use crate::marginal::{CorrectedMarginal, MarginalComponent, MarginalMixture};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

/// Gradient threshold declaring the Newton iteration converged.
const NEWTON_GRAD_TOL: f64 = 1e-8;
/// Iteration cap before mode finding reports failure.
const NEWTON_MAX_ITER: usize = 50;
/// Step halvings attempted per Newton iteration.
const NEWTON_MAX_HALVINGS: usize = 30;
/// Log-density drop below the mode at which the precision grid stops.
const TAU_GRID_DROP: f64 = 5.0;
/// Cap on grid points added per side of the mode.
const TAU_GRID_MAX_SIDE: usize = 35;
/// Evaluation points for the tabulated conditional-mean correction.
const LAPLACE_GRID_POINTS: usize = 25;
/// Half-width of that evaluation grid in marginal standard deviations.
const LAPLACE_GRID_SPAN: f64 = 4.0;

#[derive(Debug, Error)]
pub enum InlaError {
    #[error(transparent)]
    Likelihood(#[from] CoalescentError),
    #[error(transparent)]
    Gmrf(#[from] GmrfError),
    #[error("dimension mismatch: structure has {structure} nodes, model has {model}")]
    DimMismatch { structure: usize, model: usize },
    #[error("Newton iteration failed to converge after {iterations} iterations (|grad| = {grad_norm:.3e})")]
    NonConvergence { iterations: usize, grad_norm: f64 },
    #[error("singular latent precision (pivot <= 0 at index {index}); no cell carries exposure")]
    SingularPrecision { index: usize },
    #[error("no interior mode for log tau in [{lo}, {hi}]")]
    NoInteriorMode { lo: f64, hi: f64 },
    #[error("non-finite marginal evaluation at cell {cell}")]
    NonFiniteMarginal { cell: usize },
    #[error("invalid gamma prior: alpha and beta must be positive, got ({alpha}, {beta})")]
    InvalidPrior { alpha: f64, beta: f64 },
}

/// Observation model seen by the engine: a per-node log likelihood with
/// gradient and nonnegative curvature. The coalescent cells implement it;
/// a Gaussian observation model is provided for validation, where the whole
/// approximation chain is exact.
pub trait ObservationModel {
    fn dim(&self) -> usize;
    /// Coordinate of each latent node (cell midpoints for coalescent data).
    fn positions(&self) -> Vec<f64>;
    /// Starting point for mode finding.
    fn initial_point(&self) -> Vec<f64>;
    fn eval(&self, gamma: &[f64]) -> Result<LikelihoodEval, InlaError>;
    fn eval_value(&self, gamma: &[f64]) -> Result<f64, InlaError> {
        Ok(self.eval(gamma)?.value)
    }
}

impl ObservationModel for CellStats {
    fn dim(&self) -> usize {
        self.num_cells()
    }

    fn positions(&self) -> Vec<f64> {
        self.midpoints().to_vec()
    }

    fn initial_point(&self) -> Vec<f64> {
        let level = (self.total_exposure() / self.total_events() as f64).ln();
        vec![level; self.num_cells()]
    }

    fn eval(&self, gamma: &[f64]) -> Result<LikelihoodEval, InlaError> {
        Ok(self.log_likelihood(gamma)?)
    }

    fn eval_value(&self, gamma: &[f64]) -> Result<f64, InlaError> {
        Ok(self.log_likelihood_value(gamma)?)
    }
}

/// Independent Gaussian observations of the latent nodes, `z_i ~ N(gamma_i,
/// 1/p_i)`. The likelihood curvature is constant, making the Gaussian
/// approximation, the precision marginal, and both latent strategies exact.
#[derive(Debug, Clone)]
pub struct GaussianObservations {
    obs: Vec<f64>,
    precision: Vec<f64>,
}

impl GaussianObservations {
    pub fn new(obs: Vec<f64>, precision: Vec<f64>) -> Self {
        assert_eq!(obs.len(), precision.len());
        assert!(precision.iter().all(|&p| p > 0.0 && p.is_finite()));
        assert!(obs.iter().all(|z| z.is_finite()));
        Self { obs, precision }
    }

    pub fn obs(&self) -> &[f64] {
        &self.obs
    }

    pub fn precision(&self) -> &[f64] {
        &self.precision
    }
}

impl ObservationModel for GaussianObservations {
    fn dim(&self) -> usize {
        self.obs.len()
    }

    fn positions(&self) -> Vec<f64> {
        (0..self.obs.len()).map(|i| i as f64).collect()
    }

    fn initial_point(&self) -> Vec<f64> {
        self.obs.clone()
    }

    fn eval(&self, gamma: &[f64]) -> Result<LikelihoodEval, InlaError> {
        if gamma.len() != self.obs.len() {
            return Err(CoalescentError::DimMismatch {
                expected: self.obs.len(),
                got: gamma.len(),
            }
            .into());
        }
        let mut value = 0.0;
        let mut gradient = Vec::with_capacity(gamma.len());
        let mut curvature = Vec::with_capacity(gamma.len());
        for i in 0..gamma.len() {
            let r = gamma[i] - self.obs[i];
            value += 0.5 * (self.precision[i].ln() - LN_2PI) - 0.5 * self.precision[i] * r * r;
            gradient.push(-self.precision[i] * r);
            curvature.push(self.precision[i]);
        }
        Ok(LikelihoodEval {
            value,
            gradient,
            curvature,
        })
    }
}

/// Gamma prior (shape-rate) on the field precision `tau`.
#[derive(Debug, Clone, Copy)]
pub struct GammaPrior {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for GammaPrior {
    fn default() -> Self {
        Self {
            alpha: 0.001,
            beta: 0.001,
        }
    }
}

impl GammaPrior {
    pub fn validate(&self) -> Result<(), InlaError> {
        if self.alpha > 0.0 && self.beta > 0.0 && self.alpha.is_finite() && self.beta.is_finite() {
            Ok(())
        } else {
            Err(InlaError::InvalidPrior {
                alpha: self.alpha,
                beta: self.beta,
            })
        }
    }

    pub fn log_pdf(&self, tau: f64) -> f64 {
        self.alpha * self.beta.ln() - ln_gamma(self.alpha) + (self.alpha - 1.0) * tau.ln()
            - self.beta * tau
    }
}

/// Mode of the latent full conditional at a fixed precision, with the
/// curvature and the factored Gaussian-approximation precision at the mode.
#[derive(Debug, Clone)]
pub struct ModeResult {
    pub gamma_star: Vec<f64>,
    pub curvature: Vec<f64>,
    pub precision_factor: TriFactor,
    /// Log likelihood plus the GMRF log prior density at the mode.
    pub log_joint_at_mode: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn precision_factor(
    s: &StructureMatrix,
    tau: f64,
    curvature: &[f64],
) -> Result<TriFactor, InlaError> {
    let diag: Vec<f64> = s
        .diag()
        .iter()
        .zip(curvature)
        .map(|(d, c)| tau * d + c)
        .collect();
    let offdiag: Vec<f64> = s.offdiag().iter().map(|o| tau * o).collect();
    TriFactor::tri_cholesky(&diag, &offdiag).map_err(|e| match e {
        GmrfError::NotPositiveDefinite(index) => InlaError::SingularPrecision { index },
        other => InlaError::Gmrf(other),
    })
}

/// Newton-Raphson ascent of `psi(gamma) = log_lik(gamma) - (tau/2) g'Sg`,
/// with step halving whenever a full step fails to increase `psi`.
pub fn find_mode(
    model: &impl ObservationModel,
    s: &StructureMatrix,
    tau: f64,
    init: Option<&[f64]>,
) -> Result<ModeResult, InlaError> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(GmrfError::InvalidTau(tau).into());
    }
    let b = s.dim();
    if model.dim() != b {
        return Err(InlaError::DimMismatch {
            structure: b,
            model: model.dim(),
        });
    }
    let mut gamma = match init {
        Some(v) => v.to_vec(),
        None => model.initial_point(),
    };
    let mut eval = model.eval(&gamma)?;
    let mut psi = eval.value - 0.5 * tau * s.quad_form(&gamma);
    let mut iterations = 0;
    loop {
        let sg = s.mul(&gamma);
        let grad: Vec<f64> = (0..b).map(|i| eval.gradient[i] - tau * sg[i]).collect();
        let grad_norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if grad_norm < NEWTON_GRAD_TOL {
            let factor = precision_factor(s, tau, &eval.curvature)?;
            let log_joint = eval.value + gmrf_logdensity(s, tau, &gamma)?;
            return Ok(ModeResult {
                gamma_star: gamma,
                curvature: eval.curvature,
                precision_factor: factor,
                log_joint_at_mode: log_joint,
                iterations,
                converged: true,
            });
        }
        if iterations >= NEWTON_MAX_ITER {
            return Err(InlaError::NonConvergence {
                iterations,
                grad_norm,
            });
        }
        iterations += 1;
        let factor = precision_factor(s, tau, &eval.curvature)?;
        let direction = factor.solve(&grad);
        let mut step = 1.0;
        let mut advanced = false;
        for _ in 0..=NEWTON_MAX_HALVINGS {
            let trial: Vec<f64> = (0..b).map(|i| gamma[i] + step * direction[i]).collect();
            if let Ok(trial_eval) = model.eval(&trial) {
                let trial_psi = trial_eval.value - 0.5 * tau * s.quad_form(&trial);
                if trial_psi > psi {
                    gamma = trial;
                    eval = trial_eval;
                    psi = trial_psi;
                    advanced = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !advanced {
            return Err(InlaError::NonConvergence {
                iterations,
                grad_norm,
            });
        }
    }
}

/// Unnormalized log marginal of `tau` and the mode computation behind it.
#[derive(Debug, Clone)]
pub struct TauPosterior {
    pub log_density: f64,
    pub mode_result: ModeResult,
}

/// Laplace approximation of the `tau` marginal: joint over Gaussian
/// approximation, both at the conditional mode.
pub fn log_tau_posterior(
    model: &impl ObservationModel,
    s: &StructureMatrix,
    prior: &GammaPrior,
    tau: f64,
) -> Result<TauPosterior, InlaError> {
    log_tau_posterior_from(model, s, prior, tau, None)
}

fn log_tau_posterior_from(
    model: &impl ObservationModel,
    s: &StructureMatrix,
    prior: &GammaPrior,
    tau: f64,
    init: Option<&[f64]>,
) -> Result<TauPosterior, InlaError> {
    prior.validate()?;
    let mode_result = find_mode(model, s, tau, init)?;
    let b = s.dim() as f64;
    let log_density = mode_result.log_joint_at_mode + prior.log_pdf(tau) + 0.5 * b * LN_2PI
        - 0.5 * mode_result.precision_factor.log_det();
    Ok(TauPosterior {
        log_density,
        mode_result,
    })
}

/// Quadrature grid over the precision, explored on the log scale.
///
/// `log_densities` holds the unnormalized log posterior of `theta = log tau`
/// (the `tau` marginal with the change-of-variables term), which stays
/// bounded near zero where the bare `tau` density can diverge under the
/// diffuse Gamma prior. Weights are trapezoid masses on the theta grid and
/// sum to one, so mixture expectations approximate posterior expectations
/// over `tau`.
#[derive(Debug, Clone)]
pub struct TauGrid {
    pub log_tau_values: Vec<f64>,
    pub log_densities: Vec<f64>,
    pub weights: Vec<f64>,
    pub mode_log_tau: f64,
}

impl TauGrid {
    /// Single-point grid pinning the precision, mostly for validation.
    pub fn fixed(tau: f64) -> Self {
        Self {
            log_tau_values: vec![tau.ln()],
            log_densities: vec![0.0],
            weights: vec![1.0],
            mode_log_tau: tau.ln(),
        }
    }
}

/// Locate the mode of the `theta = log tau` posterior and lay a quadrature
/// grid around it: golden-section search from a coarse bracket, spread from
/// a second-difference curvature estimate, extension until the log density
/// drops `TAU_GRID_DROP` below the mode.
pub fn explore_tau(
    model: &impl ObservationModel,
    s: &StructureMatrix,
    prior: &GammaPrior,
) -> Result<TauGrid, InlaError> {
    prior.validate()?;
    let mut warm: Option<Vec<f64>> = None;
    let objective = |theta: f64, warm: &mut Option<Vec<f64>>| -> Result<f64, InlaError> {
        let tp = log_tau_posterior_from(model, s, prior, theta.exp(), warm.as_deref())?;
        *warm = Some(tp.mode_result.gamma_star.clone());
        Ok(tp.log_density + theta)
    };

    // coarse scan, extended while the maximum sits on the boundary
    let (mut lo, mut hi) = (-10.0f64, 10.0f64);
    let mut best_theta;
    loop {
        let mut best = (f64::NEG_INFINITY, lo);
        let mut theta = lo;
        while theta <= hi + 1e-9 {
            let f = objective(theta, &mut warm)?;
            if f > best.0 {
                best = (f, theta);
            }
            theta += 1.0;
        }
        best_theta = best.1;
        let on_edge = (best_theta - lo).abs() < 0.5 || (best_theta - hi).abs() < 0.5;
        if !on_edge {
            break;
        }
        if lo <= -400.0 || hi >= 400.0 {
            return Err(InlaError::NoInteriorMode { lo, hi });
        }
        if (best_theta - lo).abs() < 0.5 {
            lo -= 10.0;
        } else {
            hi += 10.0;
        }
    }

    // golden-section refinement on the bracketing interval
    let inv_phi = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (best_theta - 1.0, best_theta + 1.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = objective(c, &mut warm)?;
    let mut fd = objective(d, &mut warm)?;
    while (b - a).abs() > 1e-5 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c, &mut warm)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d, &mut warm)?;
        }
    }
    let theta_mode = 0.5 * (a + b);
    let f_mode = objective(theta_mode, &mut warm)?;

    // spread from a centered second difference
    let h = 0.1;
    let d2 = (objective(theta_mode + h, &mut warm)? - 2.0 * f_mode
        + objective(theta_mode - h, &mut warm)?)
        / (h * h);
    let sigma = if d2 < -1e-12 { (-1.0 / d2).sqrt() } else { 1.0 };
    let step = 0.5 * sigma;

    let mut thetas = vec![theta_mode];
    let mut values = vec![f_mode];
    for dir in [-1.0, 1.0] {
        let mut warm_side = warm.clone();
        for j in 1..=TAU_GRID_MAX_SIDE {
            let theta = theta_mode + dir * step * j as f64;
            let f = objective(theta, &mut warm_side)?;
            if f < f_mode - TAU_GRID_DROP {
                break;
            }
            thetas.push(theta);
            values.push(f);
        }
    }
    let mut order: Vec<usize> = (0..thetas.len()).collect();
    order.sort_by(|&i, &j| thetas[i].partial_cmp(&thetas[j]).unwrap());
    let log_tau_values: Vec<f64> = order.iter().map(|&i| thetas[i]).collect();
    let log_densities: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    // trapezoid weights on the uniform theta grid, normalized
    let m = log_tau_values.len();
    let mut weights: Vec<f64> = log_densities
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            let coeff = if m > 1 && (i == 0 || i == m - 1) {
                0.5
            } else {
                1.0
            };
            coeff * (f - f_mode).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }

    Ok(TauGrid {
        log_tau_values,
        log_densities,
        weights,
        mode_log_tau: theta_mode,
    })
}

/// Latent marginal strategy: plain Gaussian approximation, or the tabulated
/// conditional-mean correction of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    Gaussian,
    Laplace,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Strategy::Gaussian => write!(f, "gaussian"),
            Strategy::Laplace => write!(f, "laplace"),
        }
    }
}

/// Pointwise posterior summaries of the latent field on the log scale.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub times: Vec<f64>,
    pub median: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    pub mean: Vec<f64>,
    pub tau_grid: TauGrid,
    pub strategy: Strategy,
}

/// Mix per-precision latent marginals over the quadrature grid and summarize
/// each cell by its median, 95% bounds, and mean.
pub fn latent_marginals(
    model: &impl ObservationModel,
    s: &StructureMatrix,
    grid: &TauGrid,
    strategy: Strategy,
) -> Result<PosteriorSummary, InlaError> {
    assert!(!grid.log_tau_values.is_empty(), "empty precision grid");
    let b = s.dim();
    let mut modes = Vec::with_capacity(grid.log_tau_values.len());
    let mut warm: Option<Vec<f64>> = None;
    for &theta in &grid.log_tau_values {
        let mode = find_mode(model, s, theta.exp(), warm.as_deref())?;
        let sd: Vec<f64> = mode
            .precision_factor
            .inverse_diag()
            .iter()
            .map(|v| v.sqrt())
            .collect();
        warm = Some(mode.gamma_star.clone());
        modes.push((mode, sd));
    }

    let mut median = Vec::with_capacity(b);
    let mut lower95 = Vec::with_capacity(b);
    let mut upper95 = Vec::with_capacity(b);
    let mut mean = Vec::with_capacity(b);
    for i in 0..b {
        let mut components = Vec::with_capacity(modes.len());
        for (g, (mode, sd)) in modes.iter().enumerate() {
            let component = match strategy {
                Strategy::Gaussian => MarginalComponent::Gaussian {
                    mean: mode.gamma_star[i],
                    sd: sd[i],
                },
                Strategy::Laplace => laplace_component(
                    model,
                    s,
                    grid.log_tau_values[g].exp(),
                    mode,
                    sd[i],
                    i,
                )?,
            };
            components.push(component);
        }
        let mix = MarginalMixture::new(grid.weights.clone(), components);
        let med = mix.quantile(0.5);
        let lo = mix.quantile(0.025);
        let hi = mix.quantile(0.975);
        let mu = mix.mean();
        for v in [med, lo, hi, mu] {
            if !v.is_finite() {
                return Err(InlaError::NonFiniteMarginal { cell: i });
            }
        }
        median.push(med);
        lower95.push(lo);
        upper95.push(hi);
        mean.push(mu);
    }
    Ok(PosteriorSummary {
        times: model.positions(),
        median,
        lower95,
        upper95,
        mean,
        tau_grid: grid.clone(),
        strategy,
    })
}

/// Build the corrected component for node `i` at one precision value.
///
/// The joint is profiled along the ray where the remaining nodes sit at
/// their Gaussian conditional mean given `gamma_i`; because that mean is
/// affine in `gamma_i`, one tridiagonal solve per block yields the ray and
/// the determinant of the conditional denominator is constant and drops out
/// under normalization. The profile is evaluated on a fixed grid around the
/// mode and tabulated against the Gaussian-approximation carrier.
fn laplace_component(
    model: &impl ObservationModel,
    s: &StructureMatrix,
    tau: f64,
    mode: &ModeResult,
    sd_i: f64,
    i: usize,
) -> Result<MarginalComponent, InlaError> {
    let b = s.dim();
    let h_diag: Vec<f64> = s
        .diag()
        .iter()
        .zip(&mode.curvature)
        .map(|(d, c)| tau * d + c)
        .collect();
    let h_off: Vec<f64> = s.offdiag().iter().map(|o| tau * o).collect();

    // conditional-mean slope: H_{-i,-i} slope = -H_{-i,i}
    let mut slope = vec![0.0; b];
    slope[i] = 1.0;
    if i > 0 {
        let mut rhs = vec![0.0; i];
        rhs[i - 1] = -h_off[i - 1];
        let factor =
            TriFactor::tri_cholesky(&h_diag[..i], &h_off[..i.saturating_sub(1)]).map_err(|e| {
                match e {
                    GmrfError::NotPositiveDefinite(index) => InlaError::SingularPrecision { index },
                    other => InlaError::Gmrf(other),
                }
            })?;
        let sol = factor.solve(&rhs);
        slope[..i].copy_from_slice(&sol);
    }
    if i + 1 < b {
        let mut rhs = vec![0.0; b - i - 1];
        rhs[0] = -h_off[i];
        let factor = TriFactor::tri_cholesky(&h_diag[i + 1..], &h_off[i + 1..]).map_err(|e| {
            match e {
                GmrfError::NotPositiveDefinite(index) => InlaError::SingularPrecision { index },
                other => InlaError::Gmrf(other),
            }
        })?;
        let sol = factor.solve(&rhs);
        slope[i + 1..].copy_from_slice(&sol);
    }

    let center = mode.gamma_star[i];
    let mut grid = Vec::with_capacity(LAPLACE_GRID_POINTS);
    let mut log_density = Vec::with_capacity(LAPLACE_GRID_POINTS);
    let mut point = vec![0.0; b];
    for t in 0..LAPLACE_GRID_POINTS {
        let offset = -LAPLACE_GRID_SPAN
            + 2.0 * LAPLACE_GRID_SPAN * t as f64 / (LAPLACE_GRID_POINTS - 1) as f64;
        let x = center + sd_i * offset;
        let delta = x - center;
        for j in 0..b {
            point[j] = mode.gamma_star[j] + delta * slope[j];
        }
        let value = model.eval_value(&point)? - 0.5 * tau * s.quad_form(&point);
        if !value.is_finite() {
            return Err(InlaError::NonFiniteMarginal { cell: i });
        }
        grid.push(x);
        log_density.push(value);
    }
    Ok(MarginalComponent::Corrected(CorrectedMarginal::from_log_density(
        center,
        sd_i,
        grid,
        &log_density,
    )))
}

/// Options for the end-to-end run.
#[derive(Debug, Clone, Copy)]
pub struct InferOptions {
    pub strategy: Strategy,
    pub tau_prior: GammaPrior,
}

impl Default for InferOptions {
    fn default() -> Self {
        Self {
            strategy: Strategy::Gaussian,
            tau_prior: GammaPrior::default(),
        }
    }
}

/// rw1 structure on the cell midpoints; a single cell degenerates to the
/// rank-zero structure where the prior contributes nothing.
pub fn structure_for(cells: &CellStats) -> Result<StructureMatrix, InlaError> {
    if cells.num_cells() == 1 {
        Ok(StructureMatrix::trivial())
    } else {
        Ok(StructureMatrix::build_rw1(cells.midpoints())?)
    }
}

/// End-to-end run: build the rw1 structure, explore the precision, and mix
/// the latent marginals. Deterministic.
pub fn infer(cells: &CellStats, opts: &InferOptions) -> Result<PosteriorSummary, InlaError> {
    let s = structure_for(cells)?;
    infer_with(cells, &s, opts)
}

/// The same pipeline for any observation model with an explicit structure.
pub fn infer_with(
    model: &impl ObservationModel,
    s: &StructureMatrix,
    opts: &InferOptions,
) -> Result<PosteriorSummary, InlaError> {
    let grid = explore_tau(model, s, &opts.tau_prior)?;
    latent_marginals(model, s, &grid, opts.strategy)
}
