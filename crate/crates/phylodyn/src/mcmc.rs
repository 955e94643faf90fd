//! MCMC sampler targeting the same posterior, used to validate the
//! deterministic approximation.
//!
//! The chain alternates an exact conjugate Gibbs draw of the field precision
//! with a one-block Metropolis independence update of the latent field. The
//! block proposal is the Gaussian approximation at the conditional mode,
//! recomputed every iteration because the precision moves; when the
//! likelihood is Gaussian the proposal equals the full conditional and every
//! update is accepted, another exactness oracle the tests lean on.

use crate::genealogy::GenealogyError;
use crate::gmrf::StructureMatrix;
use crate::inla::{find_mode, structure_for, GammaPrior, InlaError, ObservationModel};
use crate::coalescent::CellStats;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum McmcError {
    #[error("invalid MCMC configuration: {0}")]
    Config(String),
    #[error("chain aborted: {failures} block updates failed mode finding (> 1% of {iterations})")]
    ChainAborted { failures: usize, iterations: usize },
    #[error(transparent)]
    Inla(#[from] InlaError),
    #[error(transparent)]
    Genealogy(#[from] GenealogyError),
}

/// Chain configuration; the defaults match the reference protocol of one
/// million iterations with one hundred thousand of burn-in.
#[derive(Debug, Clone, Copy)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub seed: u64,
    pub tau_prior: GammaPrior,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            iterations: 1_000_000,
            burn_in: 100_000,
            thin: 100,
            seed: 0,
            tau_prior: GammaPrior::default(),
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<(), McmcError> {
        if self.burn_in >= self.iterations {
            return Err(McmcError::Config(format!(
                "burn_in {} must be below iterations {}",
                self.burn_in, self.iterations
            )));
        }
        if self.thin == 0 {
            return Err(McmcError::Config("thin must be at least 1".into()));
        }
        self.tau_prior.validate()?;
        Ok(())
    }
}

/// Kept draws and pointwise summaries.
#[derive(Debug, Clone)]
pub struct McmcOutput {
    /// Kept latent draws, one row per kept iteration.
    pub gamma_samples: Vec<Vec<f64>>,
    /// Kept precision draws.
    pub tau_samples: Vec<f64>,
    pub acceptance_rate: f64,
    pub ess_tau: f64,
    /// Latent node coordinates (cell midpoints).
    pub times: Vec<f64>,
    pub median: Vec<f64>,
    pub lower95: Vec<f64>,
    pub upper95: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Conjugate Gibbs draw of the precision:
/// `tau | gamma ~ Gamma(alpha + rank/2, beta + g'Sg / 2)` in shape-rate form.
pub fn gibbs_tau<R: Rng>(
    gamma: &[f64],
    s: &StructureMatrix,
    prior: &GammaPrior,
    rng: &mut R,
) -> f64 {
    let shape = prior.alpha + 0.5 * s.rank() as f64;
    let rate = prior.beta + 0.5 * s.quad_form(gamma).max(0.0);
    Gamma::new(shape, 1.0 / rate)
        .expect("valid Gamma parameters")
        .sample(rng)
}

/// Outcome of one block update.
#[derive(Debug, Clone)]
pub struct BlockUpdate {
    pub gamma: Vec<f64>,
    pub accepted: bool,
    pub log_ratio: f64,
}

/// One-block Metropolis independence update of the latent field: propose
/// from the Gaussian approximation `N(gamma*(tau), (tau S + diag(c*))^-1)`
/// and accept with the independence-sampler ratio.
pub fn update_gamma_block<R: Rng>(
    model: &impl ObservationModel,
    s: &StructureMatrix,
    tau: f64,
    current: &[f64],
    rng: &mut R,
) -> Result<BlockUpdate, McmcError> {
    let b = s.dim();
    let mode = find_mode(model, s, tau, Some(current))?;
    let noise: Vec<f64> = (0..b).map(|_| rng.sample(StandardNormal)).collect();
    let shift = mode.precision_factor.solve_lt(&noise);
    let proposal: Vec<f64> = (0..b).map(|i| mode.gamma_star[i] + shift[i]).collect();

    // log pi(gamma | tau, t) up to constants, and the proposal kernel
    let log_target = |g: &[f64]| -> Result<f64, McmcError> {
        Ok(model.eval_value(g)? - 0.5 * tau * s.quad_form(g))
    };
    let log_kernel = |g: &[f64]| {
        let centered: Vec<f64> = (0..b).map(|i| g[i] - mode.gamma_star[i]).collect();
        let mut quad = tau * s.quad_form(&centered);
        for i in 0..b {
            quad += mode.curvature[i] * centered[i] * centered[i];
        }
        -0.5 * quad
    };
    let log_ratio = log_target(&proposal)? - log_target(current)? + log_kernel(current)
        - log_kernel(&proposal);
    let u: f64 = rng.random();
    if u.ln() < log_ratio {
        Ok(BlockUpdate {
            gamma: proposal,
            accepted: true,
            log_ratio,
        })
    } else {
        Ok(BlockUpdate {
            gamma: current.to_vec(),
            accepted: false,
            log_ratio,
        })
    }
}

/// Run the alternating chain on coalescent cells (rw1 structure on the cell
/// midpoints).
pub fn run_mcmc(cells: &CellStats, config: &McmcConfig) -> Result<McmcOutput, McmcError> {
    let s = structure_for(cells)?;
    run_mcmc_with(cells, &s, config)
}

/// The same chain for any observation model with an explicit structure.
pub fn run_mcmc_with(
    model: &impl ObservationModel,
    s: &StructureMatrix,
    config: &McmcConfig,
) -> Result<McmcOutput, McmcError> {
    config.validate()?;
    let b = s.dim();
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let mut gamma = model.initial_point();
    let kept = (config.iterations - config.burn_in).div_ceil(config.thin);
    let mut gamma_samples: Vec<Vec<f64>> = Vec::with_capacity(kept);
    let mut tau_samples: Vec<f64> = Vec::with_capacity(kept);
    let mut accepted = 0usize;
    let mut failures = 0usize;

    for i in 0..config.iterations {
        let tau = gibbs_tau(&gamma, s, &config.tau_prior, &mut rng);
        match update_gamma_block(model, s, tau, &gamma, &mut rng) {
            Ok(update) => {
                gamma = update.gamma;
                if update.accepted {
                    accepted += 1;
                }
            }
            Err(_) => {
                failures += 1;
                if failures * 100 > config.iterations {
                    return Err(McmcError::ChainAborted {
                        failures,
                        iterations: config.iterations,
                    });
                }
            }
        }
        if i >= config.burn_in && (i - config.burn_in) % config.thin == 0 {
            gamma_samples.push(gamma.clone());
            tau_samples.push(tau);
        }
    }

    let acceptance_rate = accepted as f64 / config.iterations as f64;
    let ess_tau = effective_sample_size(&tau_samples);

    let mut median = Vec::with_capacity(b);
    let mut lower95 = Vec::with_capacity(b);
    let mut upper95 = Vec::with_capacity(b);
    let mut mean = Vec::with_capacity(b);
    for j in 0..b {
        let mut col: Vec<f64> = gamma_samples.iter().map(|g| g[j]).collect();
        col.sort_by(|a, b| a.partial_cmp(b).unwrap());
        median.push(sample_quantile(&col, 0.5));
        lower95.push(sample_quantile(&col, 0.025));
        upper95.push(sample_quantile(&col, 0.975));
        mean.push(col.iter().sum::<f64>() / col.len() as f64);
    }

    Ok(McmcOutput {
        gamma_samples,
        tau_samples,
        acceptance_rate,
        ess_tau,
        times: model.positions(),
        median,
        lower95,
        upper95,
        mean,
    })
}

/// Linearly interpolated quantile of a sorted sample.
pub fn sample_quantile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    assert!(n > 0 && (0.0..=1.0).contains(&p));
    let h = p * (n as f64 - 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Effective sample size by the initial positive sequence estimator: sum
/// consecutive autocorrelation pairs while their sum stays positive.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let acov = |lag: usize| -> f64 {
        (0..n - lag)
            .map(|i| (x[i] - mean) * (x[i + lag] - mean))
            .sum::<f64>()
            / n as f64
    };
    let c0 = acov(0);
    if c0 <= 0.0 {
        return n as f64;
    }
    let mut sum_pairs = 0.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = (acov(lag) + acov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        sum_pairs += pair;
        lag += 2;
    }
    (n as f64 / (1.0 + 2.0 * sum_pairs)).clamp(1.0, n as f64)
}
