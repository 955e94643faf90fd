//! Bayesian nonparametric inference of effective population size
//! trajectories from fixed genealogies.
//!
//! Given a rooted binary genealogy with node ages, the crate estimates the
//! log effective population size as a piecewise constant function of time
//! under an intrinsic random-walk smoothing prior, using a nested Laplace
//! approximation in place of sampling. An MCMC sampler targeting the same
//! posterior and a coalescent simulator close the loop for end-to-end
//! verification.
//!
//! The pipeline:
//!
//! 1. [`genealogy`] parses Newick trees and extracts coalescent and sampling
//!    ages with their lineage counts.
//! 2. [`coalescent`] reduces the timeline to per-cell event counts and
//!    exposures, on either the coalescent-time grid or a regular grid, and
//!    evaluates the log likelihood.
//! 3. [`gmrf`] supplies the rw1 structure matrix and tridiagonal kernels.
//! 4. [`inla`] approximates the posterior marginals deterministically.
//! 5. [`mcmc`] samples the same posterior as an oracle.
//! 6. [`simulate`] draws genealogies under known trajectories.
//!
//! ```
//! use phylodyn::prelude::*;
//!
//! let genealogy = simulate_isochronous(&TrajectorySpec::Constant { size: 1.0 }, 50, 7)?;
//! let data = extract_coalescent_data(&genealogy)?;
//! let cells = build_cells_cggp(&data);
//! let summary = infer(&cells, &InferOptions::default())?;
//! assert_eq!(summary.median.len(), 49);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod coalescent;
pub mod genealogy;
pub mod gmrf;
pub mod inla;
pub mod marginal;
pub mod mcmc;
pub mod simulate;

#[cfg(test)]
pub(crate) mod testutil;

#[cfg(doctest)]
mod book;

/// Convenience re-exports of the main entry points.
pub mod prelude {
    pub use crate::coalescent::{build_cells_cggp, build_cells_rggp, CellStats};
    pub use crate::genealogy::{
        extract_coalescent_data, parse_newick, serialize_newick, CoalescentData, Genealogy,
    };
    pub use crate::gmrf::{gmrf_logdensity, StructureMatrix, TriFactor};
    pub use crate::inla::{
        explore_tau, find_mode, infer, latent_marginals, log_tau_posterior, GammaPrior,
        GaussianObservations, InferOptions, ObservationModel, PosteriorSummary, Strategy, TauGrid,
    };
    pub use crate::mcmc::{run_mcmc, McmcConfig, McmcOutput};
    pub use crate::simulate::{simulate, simulate_isochronous, TrajectorySpec};
}
