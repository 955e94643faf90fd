//! Posterior marginals as weighted mixtures over the precision grid.
//!
//! Each grid value of the precision contributes one component per latent
//! node: either a plain Gaussian (mode and marginal standard deviation from
//! the Gaussian approximation) or a tabulated correction of that Gaussian.
//! A corrected component stores the log ratio of the evaluated density to
//! its Gaussian carrier at the evaluation grid and treats the ratio as
//! piecewise log-linear, so every segment mass has a closed form in the
//! normal CDF. A Gaussian target therefore round-trips exactly: the log
//! ratio is constant and the component collapses to its carrier. Medians and
//! credible bounds come from bisection on the mixture CDF; means from the
//! closed-form component moments.

use crate::gmrf::LN_2PI;
use statrs::function::erf::erfc;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const INV_SQRT_2PI: f64 = 0.3989422804014327;

pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

pub fn std_normal_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// `ln Phi(z)`, stable deep into the lower tail where `erfc` underflows.
fn ln_std_normal_cdf(z: f64) -> f64 {
    if z.is_infinite() {
        return if z > 0.0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if z < -8.0 {
        let z2 = z * z;
        -0.5 * z2 - 0.5 * LN_2PI - (-z).ln() + (1.0 - 1.0 / z2 + 3.0 / (z2 * z2)).ln()
    } else {
        std_normal_cdf(z).ln()
    }
}

/// `ln(Phi(zu) - Phi(zl))` for `zl < zu`, stable in both tails.
fn ln_phi_diff(zl: f64, zu: f64) -> f64 {
    if zu <= 0.0 {
        let a = ln_std_normal_cdf(zu);
        let b = ln_std_normal_cdf(zl);
        a + (-((b - a).exp())).ln_1p()
    } else if zl >= 0.0 {
        ln_phi_diff(-zu, -zl)
    } else {
        (std_normal_cdf(zu) - std_normal_cdf(zl)).ln()
    }
}

/// One mixture component.
#[derive(Debug, Clone)]
pub enum MarginalComponent {
    Gaussian { mean: f64, sd: f64 },
    Corrected(CorrectedMarginal),
}

impl MarginalComponent {
    fn cdf(&self, x: f64) -> f64 {
        match self {
            MarginalComponent::Gaussian { mean, sd } => std_normal_cdf((x - mean) / sd),
            MarginalComponent::Corrected(c) => c.cdf(x),
        }
    }

    fn mean(&self) -> f64 {
        match self {
            MarginalComponent::Gaussian { mean, .. } => *mean,
            MarginalComponent::Corrected(c) => c.mean(),
        }
    }

    fn rough_bounds(&self) -> (f64, f64) {
        match self {
            MarginalComponent::Gaussian { mean, sd } => (mean - 10.0 * sd, mean + 10.0 * sd),
            MarginalComponent::Corrected(c) => {
                let span = c.carrier_sd * 10.0;
                (
                    c.grid[0].min(c.carrier_mean) - span,
                    c.grid[c.grid.len() - 1].max(c.carrier_mean) + span,
                )
            }
        }
    }
}

/// Density tabulated against a Gaussian carrier on an evaluation grid, with
/// the log correction interpolated linearly between nodes and extended by
/// the end slopes into the tails. All segment masses and first moments are
/// closed-form, so quantiles are exact up to the interpolation of the
/// correction itself.
#[derive(Debug, Clone)]
pub struct CorrectedMarginal {
    carrier_mean: f64,
    carrier_sd: f64,
    grid: Vec<f64>,
    log_ratio: Vec<f64>,
    /// Unnormalized mass of `(-inf, grid[i]]` per node.
    cum_mass: Vec<f64>,
    total_mass: f64,
    first_moment: f64,
}

/// Mass and first moment of `exp(a + b x) N(x; m, s)` over `[lo, hi]`.
fn segment_moments(a_at: (f64, f64), b: f64, m: f64, s: f64, lo: f64, hi: f64) -> (f64, f64) {
    // a_at = (x0, log ratio at x0): the log correction is r(x) = r0 + b (x - x0)
    let (x0, r0) = a_at;
    let shifted_mean = m + b * s * s;
    let scale = (r0 + b * (m - x0) + 0.5 * b * b * s * s).exp();
    let zl = (lo - shifted_mean) / s;
    let zu = (hi - shifted_mean) / s;
    let (cl, cu) = (
        if lo.is_infinite() { 0.0 } else { std_normal_cdf(zl) },
        if hi.is_infinite() { 1.0 } else { std_normal_cdf(zu) },
    );
    let (pl, pu) = (
        if lo.is_infinite() { 0.0 } else { std_normal_pdf(zl) },
        if hi.is_infinite() { 0.0 } else { std_normal_pdf(zu) },
    );
    let mass = scale * (cu - cl);
    let moment = scale * (shifted_mean * (cu - cl) - s * (pu - pl));
    (mass, moment)
}

impl CorrectedMarginal {
    /// Build from density evaluations: `log_density[i]` is the unnormalized
    /// log target at `grid[i]`. The carrier is the Gaussian approximation at
    /// the same node.
    pub fn from_log_density(
        carrier_mean: f64,
        carrier_sd: f64,
        grid: Vec<f64>,
        log_density: &[f64],
    ) -> Self {
        assert!(grid.len() >= 2 && grid.len() == log_density.len());
        let mut log_ratio: Vec<f64> = grid
            .iter()
            .zip(log_density)
            .map(|(&x, &ld)| {
                let z = (x - carrier_mean) / carrier_sd;
                ld - (-0.5 * z * z - carrier_sd.ln() + INV_SQRT_2PI.ln())
            })
            .collect();
        let shift = log_ratio.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for r in &mut log_ratio {
            *r -= shift;
        }

        let m = grid.len();
        let slope = |i: usize| (log_ratio[i + 1] - log_ratio[i]) / (grid[i + 1] - grid[i]);
        let mut cum_mass = vec![0.0; m];
        let mut first_moment = 0.0;

        // left tail, extended with the slope of the first segment
        let (mass, mom) = segment_moments(
            (grid[0], log_ratio[0]),
            slope(0),
            carrier_mean,
            carrier_sd,
            f64::NEG_INFINITY,
            grid[0],
        );
        cum_mass[0] = mass;
        first_moment += mom;

        for i in 0..m - 1 {
            let (mass, mom) = segment_moments(
                (grid[i], log_ratio[i]),
                slope(i),
                carrier_mean,
                carrier_sd,
                grid[i],
                grid[i + 1],
            );
            cum_mass[i + 1] = cum_mass[i] + mass;
            first_moment += mom;
        }

        // right tail with the slope of the last segment
        let (mass, mom) = segment_moments(
            (grid[m - 1], log_ratio[m - 1]),
            slope(m - 2),
            carrier_mean,
            carrier_sd,
            grid[m - 1],
            f64::INFINITY,
        );
        let total_mass = cum_mass[m - 1] + mass;
        first_moment += mom;

        Self {
            carrier_mean,
            carrier_sd,
            grid,
            log_ratio,
            cum_mass,
            total_mass,
            first_moment,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let m = self.grid.len();
        let slope = |i: usize| {
            (self.log_ratio[i + 1] - self.log_ratio[i]) / (self.grid[i + 1] - self.grid[i])
        };
        let unnorm = if x <= self.grid[0] {
            segment_moments(
                (self.grid[0], self.log_ratio[0]),
                slope(0),
                self.carrier_mean,
                self.carrier_sd,
                f64::NEG_INFINITY,
                x,
            )
            .0
        } else if x >= self.grid[m - 1] {
            let (tail, _) = segment_moments(
                (self.grid[m - 1], self.log_ratio[m - 1]),
                slope(m - 2),
                self.carrier_mean,
                self.carrier_sd,
                x,
                f64::INFINITY,
            );
            self.total_mass - tail
        } else {
            let i = self.grid.partition_point(|&g| g <= x) - 1;
            let (partial, _) = segment_moments(
                (self.grid[i], self.log_ratio[i]),
                slope(i),
                self.carrier_mean,
                self.carrier_sd,
                self.grid[i],
                x,
            );
            self.cum_mass[i] + partial
        };
        (unnorm / self.total_mass).clamp(0.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.first_moment / self.total_mass
    }
}

/// Weighted mixture of marginal components over the precision grid.
#[derive(Debug, Clone)]
pub struct MarginalMixture {
    weights: Vec<f64>,
    components: Vec<MarginalComponent>,
}

impl MarginalMixture {
    pub fn new(weights: Vec<f64>, components: Vec<MarginalComponent>) -> Self {
        assert_eq!(weights.len(), components.len());
        assert!(!components.is_empty());
        Self {
            weights,
            components,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.cdf(x))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.components)
            .map(|(w, c)| w * c.mean())
            .sum()
    }

    /// Quantile by bisection on the CDF to an absolute tolerance of 1e-8.
    pub fn quantile(&self, p: f64) -> f64 {
        assert!((0.0..=1.0).contains(&p));
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for c in &self.components {
            let (l, h) = c.rough_bounds();
            lo = lo.min(l);
            hi = hi.max(h);
        }
        let mut width = hi - lo;
        while self.cdf(lo) > p && width.is_finite() {
            lo -= width;
            width *= 2.0;
        }
        while self.cdf(hi) < p && width.is_finite() {
            hi += width;
            width *= 2.0;
        }
        for _ in 0..200 {
            if hi - lo <= 1e-8 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_normal_quantiles() {
        let m = MarginalMixture::new(
            vec![1.0],
            vec![MarginalComponent::Gaussian { mean: 0.0, sd: 1.0 }],
        );
        assert!((m.quantile(0.5) - 0.0).abs() < 1e-8);
        assert!((m.quantile(0.975) - 1.959963984540054).abs() < 1e-6);
        assert!((m.quantile(0.025) + 1.959963984540054).abs() < 1e-6);
        assert!((m.mean() - 0.0).abs() < 1e-14);
    }

    #[test]
    fn corrected_component_reproduces_its_gaussian_carrier() {
        // constant log ratio: the correction must vanish identically
        let (mu, sd) = (1.3, 0.7);
        let grid: Vec<f64> = (0..25).map(|t| mu + sd * (-4.0 + t as f64 / 3.0)).collect();
        let logd: Vec<f64> = grid
            .iter()
            .map(|&x| {
                let z = (x - mu) / sd;
                -0.5 * z * z + 7.0 // arbitrary normalization offset
            })
            .collect();
        let c = CorrectedMarginal::from_log_density(mu, sd, grid, &logd);
        let mix = MarginalMixture::new(vec![1.0], vec![MarginalComponent::Corrected(c)]);
        assert!((mix.mean() - mu).abs() < 1e-9);
        assert!((mix.quantile(0.5) - mu).abs() < 1e-8);
        assert!((mix.quantile(0.975) - (mu + 1.959963984540054 * sd)).abs() < 1e-6);
    }

    #[test]
    fn corrected_component_tracks_a_shifted_gaussian() {
        // target N(0.5, 1) evaluated against carrier N(0, 1): the log ratio
        // is linear, so the closed-form segments capture the shift exactly
        let grid: Vec<f64> = (0..25).map(|t| -4.0 + 8.0 * t as f64 / 24.0).collect();
        let logd: Vec<f64> = grid.iter().map(|&x| -0.5 * (x - 0.5) * (x - 0.5)).collect();
        let c = CorrectedMarginal::from_log_density(0.0, 1.0, grid, &logd);
        let mix = MarginalMixture::new(vec![1.0], vec![MarginalComponent::Corrected(c)]);
        assert!((mix.mean() - 0.5).abs() < 1e-9, "mean {}", mix.mean());
        assert!((mix.quantile(0.5) - 0.5).abs() < 1e-8);
        assert!((mix.quantile(0.975) - (0.5 + 1.959963984540054)).abs() < 1e-6);
    }

    #[test]
    fn two_component_mixture_median() {
        // symmetric two-point mixture: median at the midpoint
        let m = MarginalMixture::new(
            vec![0.5, 0.5],
            vec![
                MarginalComponent::Gaussian { mean: -2.0, sd: 1.0 },
                MarginalComponent::Gaussian { mean: 2.0, sd: 1.0 },
            ],
        );
        assert!((m.quantile(0.5) - 0.0).abs() < 1e-8);
        assert!((m.mean() - 0.0).abs() < 1e-14);
        // quantiles are monotone
        assert!(m.quantile(0.025) < m.quantile(0.5));
        assert!(m.quantile(0.5) < m.quantile(0.975));
    }

    #[test]
    fn cdf_is_monotone_for_skewed_corrections() {
        // strongly skewed target: log density of a log-gamma shape-1 kernel
        let grid: Vec<f64> = (0..25).map(|t| -4.0 + 8.0 * t as f64 / 24.0).collect();
        let logd: Vec<f64> = grid.iter().map(|&x| -x - (-x).exp()).collect();
        let c = CorrectedMarginal::from_log_density(0.0, 1.0, grid, &logd);
        let mix = MarginalMixture::new(vec![1.0], vec![MarginalComponent::Corrected(c)]);
        let mut prev = 0.0;
        let mut x = -6.0;
        while x <= 6.0 {
            let f = mix.cdf(x);
            assert!(f >= prev - 1e-12, "cdf not monotone at {x}");
            prev = f;
            x += 0.05;
        }
        assert!((mix.cdf(-20.0)).abs() < 1e-10);
        assert!((mix.cdf(30.0) - 1.0).abs() < 1e-10);
    }
}
