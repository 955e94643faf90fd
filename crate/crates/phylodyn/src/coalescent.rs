//! Per-cell sufficient statistics and the coalescent log likelihood.
//!
//! Both trajectory models reduce the timeline to the same statistics: per
//! cell `j`, the number of coalescent events `y_j` and the coalescent
//! exposure `A_j = integral over the cell of C_k(t) dt`, where
//! `C_k = k(k-1)/2` is the pairwise coalescence factor for `k` active
//! lineages. With a constant log population size `gamma_j` per cell the log
//! likelihood is
//!
//! `log L = log_const + sum_j [ -y_j gamma_j - A_j exp(-gamma_j) ]`,
//!
//! a Poisson-style kernel whose gradient and curvature come for free. The
//! coalescent-grid model (one cell per inter-coalescent interval) and the
//! regular-grid model (equal-width cells) differ only in where the cell
//! boundaries sit.

use crate::genealogy::CoalescentData;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoalescentError {
    #[error("regular grid needs at least 2 cells, got {0}")]
    GridTooSmall(usize),
    #[error("gamma has length {got}, expected {expected}")]
    DimMismatch { expected: usize, got: usize },
    #[error("gamma[{0}] is not finite")]
    NonFiniteGamma(usize),
}

/// Pairwise coalescence factor `k (k-1) / 2`.
pub fn coal_factor(k: i64) -> f64 {
    (k * (k - 1)) as f64 / 2.0
}

/// Sufficient statistics of a cell partition of `[0, root_age]`.
#[derive(Debug, Clone)]
pub struct CellStats {
    /// Cell boundaries `s_0 = 0 < s_1 < ... < s_B = root age`.
    boundaries: Vec<f64>,
    /// Cell midpoints, the grid carrying the smoothing prior.
    midpoints: Vec<f64>,
    /// Coalescent events per cell.
    y: Vec<u32>,
    /// Coalescent exposure per cell.
    exposure: Vec<f64>,
    /// `sum over events of log C_k` with `k` the count just below the event.
    log_const: f64,
}

impl CellStats {
    pub fn num_cells(&self) -> usize {
        self.midpoints.len()
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn midpoints(&self) -> &[f64] {
        &self.midpoints
    }

    pub fn event_counts(&self) -> &[u32] {
        &self.y
    }

    pub fn exposures(&self) -> &[f64] {
        &self.exposure
    }

    pub fn log_const(&self) -> f64 {
        self.log_const
    }

    pub fn total_events(&self) -> u32 {
        self.y.iter().sum()
    }

    pub fn total_exposure(&self) -> f64 {
        self.exposure.iter().sum()
    }

    /// Log likelihood with its gradient and (nonnegative) curvature vector.
    ///
    /// `value = log_const + sum_j [-y_j g_j - A_j exp(-g_j)]`,
    /// `gradient_j = -y_j + A_j exp(-g_j)`, `curvature_j = A_j exp(-g_j)`.
    pub fn log_likelihood(&self, gamma: &[f64]) -> Result<LikelihoodEval, CoalescentError> {
        let b = self.num_cells();
        if gamma.len() != b {
            return Err(CoalescentError::DimMismatch {
                expected: b,
                got: gamma.len(),
            });
        }
        if let Some(i) = gamma.iter().position(|x| !x.is_finite()) {
            return Err(CoalescentError::NonFiniteGamma(i));
        }
        let mut value = self.log_const;
        let mut gradient = Vec::with_capacity(b);
        let mut curvature = Vec::with_capacity(b);
        for j in 0..b {
            let rate = self.exposure[j] * (-gamma[j]).exp();
            value += -(self.y[j] as f64) * gamma[j] - rate;
            gradient.push(-(self.y[j] as f64) + rate);
            curvature.push(rate);
        }
        Ok(LikelihoodEval {
            value,
            gradient,
            curvature,
        })
    }

    /// Likelihood value only, skipping the derivative allocations.
    pub fn log_likelihood_value(&self, gamma: &[f64]) -> Result<f64, CoalescentError> {
        let b = self.num_cells();
        if gamma.len() != b {
            return Err(CoalescentError::DimMismatch {
                expected: b,
                got: gamma.len(),
            });
        }
        let mut value = self.log_const;
        for j in 0..b {
            if !gamma[j].is_finite() {
                return Err(CoalescentError::NonFiniteGamma(j));
            }
            value += -(self.y[j] as f64) * gamma[j] - self.exposure[j] * (-gamma[j]).exp();
        }
        Ok(value)
    }
}

/// Value, gradient, and curvature (negated second derivative, elementwise
/// nonnegative) of a latent log likelihood.
#[derive(Debug, Clone)]
pub struct LikelihoodEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub curvature: Vec<f64>,
}

/// One cell per inter-coalescent interval, knots at the coalescent times.
/// Every cell holds exactly one event; exposure splits internally at
/// sampling ages falling inside the cell.
pub fn build_cells_cggp(data: &CoalescentData) -> CellStats {
    let mut boundaries = Vec::with_capacity(data.n());
    boundaries.push(0.0);
    boundaries.extend_from_slice(data.coal_ages());
    build_from_boundaries(data, boundaries)
}

/// `b` equal-width cells spanning `[0, root_age]`.
pub fn build_cells_rggp(data: &CoalescentData, b: usize) -> Result<CellStats, CoalescentError> {
    if b < 2 {
        return Err(CoalescentError::GridTooSmall(b));
    }
    let t1 = data.root_age();
    let mut boundaries: Vec<f64> = (0..=b).map(|j| t1 * j as f64 / b as f64).collect();
    boundaries[b] = t1;
    Ok(build_from_boundaries(data, boundaries))
}

fn build_from_boundaries(data: &CoalescentData, boundaries: Vec<f64>) -> CellStats {
    let b = boundaries.len() - 1;
    let timeline = data.lineage_timeline();

    // events: cell j is the half-open interval (s_{j-1}, s_j]
    let mut y = vec![0u32; b];
    let mut log_const = 0.0;
    for &t in data.coal_ages() {
        let j = boundaries[1..].partition_point(|&s| s < t);
        y[j.min(b - 1)] += 1;
        log_const += coal_factor(timeline.count_below(t)).ln();
    }

    // exposure: merge the lineage step function with the cell boundaries
    let mut exposure = vec![0.0; b];
    let mut seg = 0;
    for j in 0..b {
        let (lo, hi) = (boundaries[j], boundaries[j + 1]);
        while seg + 1 < timeline.breaks.len() && timeline.breaks[seg + 1] <= lo {
            seg += 1;
        }
        let mut cursor = lo;
        let mut s = seg;
        while cursor < hi {
            let seg_end = timeline.breaks[s + 1].min(hi);
            exposure[j] += coal_factor(timeline.counts[s]) * (seg_end - cursor);
            cursor = seg_end;
            if cursor >= timeline.breaks[s + 1] && s + 2 < timeline.breaks.len() {
                s += 1;
            }
        }
    }

    let midpoints = boundaries
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1]))
        .collect();
    CellStats {
        boundaries,
        midpoints,
        y,
        exposure,
        log_const,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genealogy::CoalescentData;

    fn iso3() -> CoalescentData {
        CoalescentData::new(vec![0.5, 1.5], vec![0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn cggp_isochronous_three() {
        let cells = build_cells_cggp(&iso3());
        assert_eq!(cells.num_cells(), 2);
        assert_eq!(cells.boundaries(), &[0.0, 0.5, 1.5]);
        assert_eq!(cells.event_counts(), &[1, 1]);
        // C_3 = 3 over 0.5, C_2 = 1 over 1.0
        assert!((cells.exposures()[0] - 1.5).abs() < 1e-14);
        assert!((cells.exposures()[1] - 1.0).abs() < 1e-14);
        assert!((cells.log_const() - 3f64.ln()).abs() < 1e-14);
        assert_eq!(cells.midpoints(), &[0.25, 1.0]);
    }

    #[test]
    fn cggp_two_samples() {
        let d = CoalescentData::new(vec![2.0], vec![0.0, 0.0]).unwrap();
        let cells = build_cells_cggp(&d);
        assert_eq!(cells.num_cells(), 1);
        assert_eq!(cells.exposures(), &[2.0]);
        assert_eq!(cells.event_counts(), &[1]);
        assert_eq!(cells.log_const(), 0.0);
    }

    #[test]
    fn cggp_heterochronous_splits_exposure() {
        let d = CoalescentData::new(vec![2.0, 3.0], vec![0.0, 0.0, 1.0]).unwrap();
        let cells = build_cells_cggp(&d);
        assert_eq!(cells.num_cells(), 2);
        // cell (0,2]: k=2 on (0,1) and k=3 on (1,2) -> 1*1 + 3*1 = 4
        assert!((cells.exposures()[0] - 4.0).abs() < 1e-14);
        assert!((cells.exposures()[1] - 1.0).abs() < 1e-14);
        // events at 2 (k=3 below) and 3 (k=2 below)
        assert!((cells.log_const() - 3f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn rggp_two_samples_two_cells() {
        let d = CoalescentData::new(vec![2.0], vec![0.0, 0.0]).unwrap();
        let cells = build_cells_rggp(&d, 2).unwrap();
        assert_eq!(cells.boundaries(), &[0.0, 1.0, 2.0]);
        assert_eq!(cells.exposures(), &[1.0, 1.0]);
        assert_eq!(cells.event_counts(), &[0, 1]);
    }

    #[test]
    fn rggp_three_cells() {
        let cells = build_cells_rggp(&iso3(), 3).unwrap();
        assert_eq!(cells.event_counts(), &[1, 0, 1]);
        let a = cells.exposures();
        assert!((a[0] - 1.5).abs() < 1e-14);
        assert!((a[1] - 0.5).abs() < 1e-14);
        assert!((a[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn rggp_rejects_tiny_grid() {
        assert!(matches!(
            build_cells_rggp(&iso3(), 1),
            Err(CoalescentError::GridTooSmall(1))
        ));
    }

    #[test]
    fn exposure_conserved_under_refinement() {
        let d = CoalescentData::new(vec![0.37, 1.11, 2.9], vec![0.0, 0.0, 0.2, 1.5]).unwrap();
        let total = build_cells_cggp(&d).total_exposure();
        for b in [2, 3, 10, 97, 500] {
            let r = build_cells_rggp(&d, b).unwrap().total_exposure();
            assert!(
                (r - total).abs() < 1e-12 * total.max(1.0),
                "B={b}: {r} vs {total}"
            );
        }
    }

    #[test]
    fn likelihood_hand_values() {
        let cells = build_cells_cggp(&iso3());
        let e1 = cells.log_likelihood(&[0.0, 0.0]).unwrap();
        // log 3 - 2.5
        assert!((e1.value - (3f64.ln() - 2.5)).abs() < 1e-12);
        assert!((e1.value - (-1.4013877113318902)).abs() < 1e-9);
        let g = 2f64.ln();
        let e2 = cells.log_likelihood(&[g, g]).unwrap();
        // log 3 - 2 log 2 - 1.25
        assert!((e2.value - (3f64.ln() - 2.0 * 2f64.ln() - 1.25)).abs() < 1e-12);
        assert!((e2.value - (-1.5376820724517808)).abs() < 1e-9);
    }

    #[test]
    fn likelihood_gradient_matches_finite_differences() {
        let d = CoalescentData::new(vec![0.4, 1.2, 2.5], vec![0.0, 0.0, 0.0, 0.3]).unwrap();
        for cells in [build_cells_cggp(&d), build_cells_rggp(&d, 7).unwrap()] {
            let b = cells.num_cells();
            let gamma: Vec<f64> = (0..b).map(|i| 0.3 * i as f64 - 0.5).collect();
            let eval = cells.log_likelihood(&gamma).unwrap();
            let h = 1e-6;
            for j in 0..b {
                let mut gp = gamma.clone();
                let mut gm = gamma.clone();
                gp[j] += h;
                gm[j] -= h;
                let fd = (cells.log_likelihood_value(&gp).unwrap()
                    - cells.log_likelihood_value(&gm).unwrap())
                    / (2.0 * h);
                let rel = (eval.gradient[j] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-6, "cell {j}: grad {} fd {fd}", eval.gradient[j]);

                // curvature = -(d/dg) gradient, differenced on the gradient
                let fd2 = -(cells.log_likelihood(&gp).unwrap().gradient[j]
                    - cells.log_likelihood(&gm).unwrap().gradient[j])
                    / (2.0 * h);
                let rel2 = (eval.curvature[j] - fd2).abs() / fd2.abs().max(1e-8);
                assert!(rel2 < 1e-6, "cell {j}: curv {} fd {fd2}", eval.curvature[j]);
            }
        }
    }

    #[test]
    fn likelihood_curvature_nonnegative() {
        let cells = build_cells_cggp(&iso3());
        for g in [-5.0, -1.0, 0.0, 2.0, 8.0] {
            let eval = cells.log_likelihood(&[g, -g]).unwrap();
            assert!(eval.curvature.iter().all(|&c| c >= 0.0));
        }
    }

    #[test]
    fn likelihood_rejects_bad_gamma() {
        let cells = build_cells_cggp(&iso3());
        assert!(matches!(
            cells.log_likelihood(&[0.0]),
            Err(CoalescentError::DimMismatch { .. })
        ));
        assert!(matches!(
            cells.log_likelihood(&[0.0, f64::NAN]),
            Err(CoalescentError::NonFiniteGamma(1))
        ));
    }

    #[test]
    fn no_event_without_exposure() {
        let d = CoalescentData::new(vec![0.37, 1.11, 2.9], vec![0.0, 0.0, 0.2, 1.5]).unwrap();
        for b in [2, 5, 40] {
            let cells = build_cells_rggp(&d, b).unwrap();
            for j in 0..cells.num_cells() {
                if cells.exposures()[j] == 0.0 {
                    assert_eq!(cells.event_counts()[j], 0);
                }
            }
        }
    }
}
