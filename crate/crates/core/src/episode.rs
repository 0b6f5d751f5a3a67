//! One escape attempt under the true intensity: capture sampling along the
//! planned path and the per-cell right-censored observations it produces.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use crate::censored::CellStats;
use crate::grid::{CellId, ObsGrid, Point, ScalarField};
use crate::path::{segment_by_cells, Trajectory};

/// Seeded random stream for capture thresholds.
///
/// ChaCha8 keyed by the 64-bit seed; `stream` selects an independent
/// ChaCha stream under the same key, so runs that share a seed but use
/// different streams never share draws.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        RngStream { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Draws from Exponential(1).
    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        use rand::Rng;
        self.rng.random::<f64>()
    }
}

/// Right-censored observation of one cell visit: `captured` is δ and
/// `time` is R = min(S, t).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub cell: CellId,
    pub captured: bool,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub captured: bool,
    pub capture_point: Option<Point>,
    pub capture_arc_length: Option<f64>,
    /// Cumulative true intensity along the whole planned path.
    pub cumulative_intensity: f64,
    pub observations: Vec<Observation>,
}

impl EpisodeOutcome {
    /// Capture probability of the planned path, `1 - exp(-J)`.
    pub fn plan_capture_probability(&self) -> f64 {
        -(-self.cumulative_intensity).exp_m1()
    }
}

/// Midpoint-rule integral of `K / f` along the trajectory.
/// Segment times already carry the `1/f` factor.
pub fn cumulative_intensity(t: &Trajectory, k: &ScalarField) -> f64 {
    t.segments()
        .enumerate()
        .map(|(idx, (a, b))| k.interpolate_unchecked(a.lerp(b, 0.5)) * t.segment_time(idx))
        .sum()
}

/// Samples one episode: draws E ~ Exp(1) and captures at the first arc
/// length where the accumulated hazard reaches E.
pub fn simulate_episode(
    t: &Trajectory,
    k: &ScalarField,
    grid: &ObsGrid,
    rng: &mut RngStream,
) -> EpisodeOutcome {
    let threshold = rng.exp1();
    simulate_with_threshold(t, k, grid, threshold)
}

/// [`simulate_episode`] with a fixed hazard threshold.
pub fn simulate_with_threshold(
    t: &Trajectory,
    k: &ScalarField,
    grid: &ObsGrid,
    threshold: f64,
) -> EpisodeOutcome {
    let mut hazard = 0.0;
    let mut capture_s = None;
    for (idx, (a, b)) in t.segments().enumerate() {
        let dh = k.interpolate_unchecked(a.lerp(b, 0.5)) * t.segment_time(idx);
        if capture_s.is_none() && dh > 0.0 && hazard + dh >= threshold {
            let frac = ((threshold - hazard) / dh).clamp(0.0, 1.0);
            let s0 = t.arc_lengths()[idx];
            capture_s = Some(s0 + frac * (t.arc_lengths()[idx + 1] - s0));
        }
        hazard += dh;
    }

    let visits = segment_by_cells(t, grid);
    let mut observations = Vec::with_capacity(visits.len());
    let last = visits.len().saturating_sub(1);
    for (n, v) in visits.iter().enumerate() {
        match capture_s {
            Some(s) if s <= v.exit_arc_length() || n == last => {
                let r = (t.time_at(s) - v.entry_time).clamp(0.0, v.duration);
                observations.push(Observation { cell: v.cell, captured: true, time: r });
                break;
            }
            _ => observations.push(Observation { cell: v.cell, captured: false, time: v.duration }),
        }
    }

    EpisodeOutcome {
        captured: capture_s.is_some(),
        capture_point: capture_s.map(|s| t.point_at(s)),
        capture_arc_length: capture_s,
        cumulative_intensity: hazard,
        observations,
    }
}

/// Adds an episode's observations to the running cell statistics.
pub fn update_stats(stats: &mut CellStats, outcome: &EpisodeOutcome) {
    for obs in &outcome.observations {
        stats.record(obs.cell, obs.captured, obs.time);
    }
}
