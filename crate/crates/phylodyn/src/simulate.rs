//! Genealogy simulation under the heterochronous coalescent.
//!
//! Lineages accumulate integrated coalescence intensity `C_k(t) / Ne(t)`
//! forward in age. A coalescent event fires when the accumulated intensity
//! reaches an Exp(1) draw; sampling ages update the lineage count mid
//! accumulation without restarting the draw, which is the correct first-event
//! construction for an inhomogeneous process. All supported trajectories are
//! piecewise log-linear, so the accumulated intensity and its inverse have
//! closed forms per segment.

use crate::coalescent::coal_factor;
use crate::genealogy::{Genealogy, GenealogyError, Node};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::Exp1;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("need at least 2 samples in total, got {0}")]
    TooFewSamples(usize),
    #[error("at least one sample must be taken at age 0")]
    NoPresentSample,
    #[error("invalid sampling schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("coalescent process is improper: lineages fail to coalesce under this trajectory")]
    ImproperCoalescent,
    #[error(transparent)]
    Genealogy(#[from] GenealogyError),
}

/// Effective population size trajectory, in coalescent time units with age
/// increasing into the past.
#[derive(Debug, Clone, PartialEq)]
pub enum TrajectorySpec {
    /// `Ne(t) = size`.
    Constant { size: f64 },
    /// `Ne(t) = initial * exp(-rate * t)`.
    Exponential { initial: f64, rate: f64 },
    /// Expansion then crash: `Ne(t) = exp(4t)` for `t <= 1/2`, then
    /// `Ne(t) = exp(-2t + 3)`; continuous at the breakpoint.
    BoomBust,
    /// Piecewise constant: `values[0]` on `[0, breakpoints[0])`, `values[i]`
    /// on `[breakpoints[i-1], breakpoints[i])`, last value beyond.
    PiecewiseConstant {
        breakpoints: Vec<f64>,
        values: Vec<f64>,
    },
}

/// One log-linear piece: `Ne(t) = size_at_start * exp(-rate * (t - start))`.
#[derive(Debug, Clone, Copy)]
struct Segment {
    start: f64,
    size_at_start: f64,
    rate: f64,
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |m: String| Err(SimulateError::InvalidTrajectory(m));
        match self {
            TrajectorySpec::Constant { size } => {
                if !(size.is_finite() && *size > 0.0) {
                    return bad(format!("constant size must be positive, got {size}"));
                }
            }
            TrajectorySpec::Exponential { initial, rate } => {
                if !(initial.is_finite() && *initial > 0.0) {
                    return bad(format!("initial size must be positive, got {initial}"));
                }
                if !rate.is_finite() {
                    return bad("growth rate must be finite".into());
                }
            }
            TrajectorySpec::BoomBust => {}
            TrajectorySpec::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                if values.len() != breakpoints.len() + 1 {
                    return bad(format!(
                        "need {} values for {} breakpoints, got {}",
                        breakpoints.len() + 1,
                        breakpoints.len(),
                        values.len()
                    ));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1])
                    || breakpoints.first().is_some_and(|&b| b <= 0.0)
                {
                    return bad("breakpoints must be positive and strictly increasing".into());
                }
                if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                    return bad("population sizes must be positive".into());
                }
            }
        }
        Ok(())
    }

    fn segments(&self) -> Vec<Segment> {
        match self {
            TrajectorySpec::Constant { size } => vec![Segment {
                start: 0.0,
                size_at_start: *size,
                rate: 0.0,
            }],
            TrajectorySpec::Exponential { initial, rate } => vec![Segment {
                start: 0.0,
                size_at_start: *initial,
                rate: *rate,
            }],
            TrajectorySpec::BoomBust => vec![
                Segment {
                    start: 0.0,
                    size_at_start: 1.0,
                    rate: -4.0,
                },
                Segment {
                    start: 0.5,
                    size_at_start: (2.0f64).exp(),
                    rate: 2.0,
                },
            ],
            TrajectorySpec::PiecewiseConstant {
                breakpoints,
                values,
            } => {
                let mut segs = Vec::with_capacity(values.len());
                let mut start = 0.0;
                for (i, &v) in values.iter().enumerate() {
                    segs.push(Segment {
                        start,
                        size_at_start: v,
                        rate: 0.0,
                    });
                    if i < breakpoints.len() {
                        start = breakpoints[i];
                    }
                }
                segs
            }
        }
    }

    /// Log effective population size at age `t`.
    pub fn log_ne(&self, t: f64) -> f64 {
        let segs = self.segments();
        let idx = segs.partition_point(|s| s.start <= t).saturating_sub(1);
        let s = segs[idx];
        s.size_at_start.ln() - s.rate * (t - s.start)
    }

    pub fn ne(&self, t: f64) -> f64 {
        self.log_ne(t).exp()
    }
}

/// Integral of `1/Ne` over `[a, b]` within one segment (`b` may be infinite
/// when the segment is the last one).
fn segment_inverse_integral(seg: &Segment, a: f64, b: f64) -> f64 {
    if b.is_infinite() {
        if seg.rate < 0.0 {
            return -((seg.rate * (a - seg.start)).exp()) / (seg.size_at_start * seg.rate);
        }
        return f64::INFINITY;
    }
    if seg.rate == 0.0 {
        (b - a) / seg.size_at_start
    } else {
        ((seg.rate * (b - seg.start)).exp() - (seg.rate * (a - seg.start)).exp())
            / (seg.size_at_start * seg.rate)
    }
}

/// Age `t > a` at which `integral_a^t 1/Ne = target`, inside one segment;
/// caller guarantees the target fits.
fn segment_invert(seg: &Segment, a: f64, target: f64) -> f64 {
    if seg.rate == 0.0 {
        a + target * seg.size_at_start
    } else {
        let base = (seg.rate * (a - seg.start)).exp();
        seg.start + (base + target * seg.size_at_start * seg.rate).ln() / seg.rate
    }
}

enum Advance {
    /// Event fired at this age.
    Fired(f64),
    /// Budget consumed over the whole window without firing.
    Spent(f64),
}

/// Walk the trajectory from `from` to `until` (possibly infinite) with
/// intensity `ck / Ne(t)`, spending `budget`; either the event fires or the
/// window is exhausted.
fn advance(segs: &[Segment], from: f64, until: f64, ck: f64, budget: f64) -> Advance {
    let mut remaining = budget;
    let mut cursor = from;
    let mut idx = segs.partition_point(|s| s.start <= cursor).saturating_sub(1);
    loop {
        let seg_end = if idx + 1 < segs.len() {
            segs[idx + 1].start.min(until)
        } else {
            until
        };
        let cap = ck * segment_inverse_integral(&segs[idx], cursor, seg_end);
        if remaining <= cap {
            return Advance::Fired(segment_invert(&segs[idx], cursor, remaining / ck));
        }
        remaining -= cap;
        cursor = seg_end;
        if cursor >= until {
            return Advance::Spent(budget - remaining);
        }
        idx += 1;
    }
}

/// Simulate a genealogy under the given trajectory and sampling schedule
/// (age, count pairs). Deterministic for a fixed seed.
pub fn simulate(
    spec: &TrajectorySpec,
    schedule: &[(f64, u32)],
    seed: u64,
) -> Result<Genealogy, SimulateError> {
    spec.validate()?;
    let total: u32 = schedule.iter().map(|&(_, c)| c).sum();
    if (total as usize) < 2 {
        return Err(SimulateError::TooFewSamples(total as usize));
    }
    for &(age, count) in schedule {
        if !(age.is_finite() && age >= 0.0) {
            return Err(SimulateError::InvalidSchedule(format!(
                "sampling age {age} must be finite and nonnegative"
            )));
        }
        if count == 0 {
            return Err(SimulateError::InvalidSchedule(
                "sampling counts must be at least 1".into(),
            ));
        }
    }
    if !schedule.iter().any(|&(age, _)| age == 0.0) {
        return Err(SimulateError::NoPresentSample);
    }

    let mut batches: Vec<(f64, u32)> = schedule.to_vec();
    batches.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let segs = spec.segments();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut nodes: Vec<Node> = Vec::with_capacity(2 * total as usize - 1);
    let mut active: Vec<usize> = Vec::new();
    let mut tip_counter = 0usize;
    let mut batch_idx = 0usize;
    let mut age = 0.0f64;
    let mut budget: f64 = rng.sample(Exp1);

    let mut add_batch = |nodes: &mut Vec<Node>, active: &mut Vec<usize>, b: (f64, u32)| {
        for _ in 0..b.1 {
            tip_counter += 1;
            nodes.push(Node {
                label: Some(format!("t{tip_counter}")),
                age: b.0,
                parent: None,
                children: Vec::new(),
            });
            active.push(nodes.len() - 1);
        }
    };

    while batch_idx < batches.len() && batches[batch_idx].0 <= age {
        add_batch(&mut nodes, &mut active, batches[batch_idx]);
        batch_idx += 1;
    }

    loop {
        let k = active.len();
        let next_sample = batches.get(batch_idx).map(|b| b.0);
        if k < 2 {
            match next_sample {
                Some(t) => {
                    age = t;
                    add_batch(&mut nodes, &mut active, batches[batch_idx]);
                    batch_idx += 1;
                    continue;
                }
                None => break, // single lineage left, nothing pending: done
            }
        }
        let window_end = next_sample.unwrap_or(f64::INFINITY);
        match advance(&segs, age, window_end, coal_factor(k as i64), budget) {
            Advance::Fired(t) => {
                age = t;
                let i = rng.random_range(0..k);
                let mut j = rng.random_range(0..k - 1);
                if j >= i {
                    j += 1;
                }
                let (a_idx, b_idx) = (active[i], active[j]);
                let parent = nodes.len();
                nodes.push(Node {
                    label: None,
                    age: t,
                    parent: None,
                    children: vec![a_idx, b_idx],
                });
                nodes[a_idx].parent = Some(parent);
                nodes[b_idx].parent = Some(parent);
                let (hi, lo) = (i.max(j), i.min(j));
                active.swap_remove(hi);
                active.swap_remove(lo);
                active.push(parent);
                budget = rng.sample(Exp1);
            }
            Advance::Spent(consumed) => {
                budget -= consumed;
                match next_sample {
                    Some(t) => {
                        age = t;
                        add_batch(&mut nodes, &mut active, batches[batch_idx]);
                        batch_idx += 1;
                    }
                    None => return Err(SimulateError::ImproperCoalescent),
                }
            }
        }
    }

    let root = active[0];
    Ok(Genealogy::from_nodes(nodes, root)?)
}

/// Convenience: isochronous simulation with all `n` samples at age 0.
pub fn simulate_isochronous(
    spec: &TrajectorySpec,
    n: u32,
    seed: u64,
) -> Result<Genealogy, SimulateError> {
    simulate(spec, &[(0.0, n)], seed)
}
