//! Policy-gradient controller for the sampler's mean and spread.
//!
//! The action `a ∈ (0,1)⁴` is `sigmoid(θ)` and maps affinely onto
//! `[depth mean, width mean, depth spread, width spread]` inside the search
//! space. Each generation the population, sorted best first, is summarized by
//! zero-sum recombination weights into four statistics. The first two updates
//! take those statistics as the new action directly; later updates move `θ`
//! by the cumulative reward times a Gaussian-score surrogate gradient
//! `(s̃ − a) ⊙ a ⊙ (1 − a)`, where `s̃` is the statistics vector mapped into
//! the unit cube.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::sigmoid;
use crate::search_space::{Chromosome, SamplerParams, SearchSpace};

/// Actions are kept inside `[ACTION_EPS, 1 − ACTION_EPS]` before any logit.
pub const ACTION_EPS: f64 = 1e-6;
/// Guard for a zero previous best in the reward ratio.
pub const REWARD_EPS: f64 = 1e-8;

/// `ω_p = (N + 1 − 2p) / Z`, `p = 1..N`, normalized so the positive weights
/// sum to one. The weights sum to zero and strictly decrease.
pub fn recombination_weights(n: usize) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "recombination weights need at least 2 members, got {n}"
        )));
    }
    let raw: Vec<f64> = (1..=n).map(|p| (n + 1) as f64 - 2.0 * p as f64).collect();
    let z: f64 = raw.iter().filter(|&&v| v > 0.0).sum();
    Ok(raw.into_iter().map(|v| v / z).collect())
}

/// Sum of relative improvements of the per-generation best fitness.
pub fn cumulative_reward(best_history: &[f64]) -> f64 {
    best_history
        .windows(2)
        .map(|w| (w[1] - w[0]) / w[0].max(REWARD_EPS))
        .sum()
}

/// Weighted population statistics `(s_m, s_σ)`.
///
/// `s_m = [Σ n_p ω_p, Σ mean(H_p) ω_p]` and
/// `s_σ = [Σ (n̄ − n_p) ω_p, Σ (δ_p / 2) ω_p]`, where `n_p` is the depth of
/// member `p`, `H_p` its widths, `δ_p = max(H_p) − min(H_p)` and `n̄` the mean
/// depth. `sorted` must be ordered best first.
pub fn weighted_stats(sorted: &[Chromosome], weights: &[f64]) -> Result<([f64; 2], [f64; 2])> {
    if sorted.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} chromosomes but {} weights",
            sorted.len(),
            weights.len()
        )));
    }
    if sorted.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    let mean_depth = sorted.iter().map(|c| c.depth() as f64).sum::<f64>() / sorted.len() as f64;
    let mut s_m = [0.0; 2];
    let mut s_sigma = [0.0; 2];
    for (c, &w) in sorted.iter().zip(weights) {
        let depth = c.depth() as f64;
        s_m[0] += depth * w;
        s_m[1] += c.mean_width() * w;
        s_sigma[0] += (mean_depth - depth) * w;
        s_sigma[1] += c.width_span() as f64 / 2.0 * w;
    }
    Ok((s_m, s_sigma))
}

/// Affine map from the unit cube onto the search space:
/// means span `[min, max]`, spreads span `[0, (max − min) / 2]`.
pub fn action_to_sampler(a: [f64; 4], space: &SearchSpace) -> SamplerParams {
    let depth_range = (space.depth_max - space.depth_min) as f64;
    let width_range = (space.width_max - space.width_min) as f64;
    SamplerParams {
        depth_mean: space.depth_min as f64 + a[0] * depth_range,
        width_mean: space.width_min as f64 + a[1] * width_range,
        depth_sigma: a[2] * depth_range / 2.0,
        width_sigma: a[3] * width_range / 2.0,
    }
}

/// Inverse of [`action_to_sampler`], without clamping. A zero-width range
/// maps to 0.5.
pub fn sampler_to_action(p: &SamplerParams, space: &SearchSpace) -> [f64; 4] {
    let depth_range = (space.depth_max - space.depth_min) as f64;
    let width_range = (space.width_max - space.width_min) as f64;
    let ratio = |num: f64, den: f64| if den > 0.0 { num / den } else { 0.5 };
    [
        ratio(p.depth_mean - space.depth_min as f64, depth_range),
        ratio(p.width_mean - space.width_min as f64, width_range),
        ratio(2.0 * p.depth_sigma, depth_range),
        ratio(2.0 * p.width_sigma, width_range),
    ]
}

fn clamp_action(a: [f64; 4]) -> [f64; 4] {
    a.map(|v| {
        if v.is_nan() {
            0.5
        } else {
            v.clamp(ACTION_EPS, 1.0 - ACTION_EPS)
        }
    })
}

fn logit(a: f64) -> f64 {
    (a / (1.0 - a)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub theta: [f64; 4],
    pub action: [f64; 4],
    pub alpha: f64,
}

impl ControllerState {
    /// Starts from the action equivalent of `params`.
    pub fn new(alpha: f64, params: &SamplerParams, space: &SearchSpace) -> Self {
        let action = clamp_action(sampler_to_action(params, space));
        Self {
            theta: action.map(logit),
            action,
            alpha,
        }
    }
}

/// What one controller update saw and produced; logged every generation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControllerUpdate {
    pub generation: usize,
    pub cold_start: bool,
    pub reward: f64,
    pub stats_mean: [f64; 2],
    pub stats_sigma: [f64; 2],
    pub normalized_stats: [f64; 4],
    pub state: ControllerState,
    pub sampler: SamplerParams,
}

/// One controller step at generation `generation` on a population sorted
/// best first.
pub fn update_policy(
    state: &ControllerState,
    sorted: &[Chromosome],
    best_history: &[f64],
    space: &SearchSpace,
    generation: usize,
) -> Result<ControllerUpdate> {
    let weights = recombination_weights(sorted.len())?;
    let (s_m, s_sigma) = weighted_stats(sorted, &weights)?;
    let observed = SamplerParams {
        depth_mean: s_m[0],
        width_mean: s_m[1],
        depth_sigma: s_sigma[0],
        width_sigma: s_sigma[1],
    };
    let normalized = clamp_action(sampler_to_action(&observed, space));

    let (next, reward, cold_start) = if generation <= 1 {
        let next = ControllerState {
            theta: normalized.map(logit),
            action: normalized,
            alpha: state.alpha,
        };
        (next, 0.0, true)
    } else {
        let prev = clamp_action(state.action);
        let reward = cumulative_reward(best_history);
        let mut theta = [0.0; 4];
        let mut action = [0.0; 4];
        for j in 0..4 {
            let theta_prev = logit(prev[j]);
            let score = (normalized[j] - prev[j]) * prev[j] * (1.0 - prev[j]);
            theta[j] = theta_prev + state.alpha * reward * score;
            // an unmoved θ keeps the previous action bit for bit
            action[j] = if theta[j] == theta_prev {
                prev[j]
            } else {
                sigmoid(theta[j])
            };
        }
        (
            ControllerState {
                theta,
                action,
                alpha: state.alpha,
            },
            reward,
            false,
        )
    };
    Ok(ControllerUpdate {
        generation,
        cold_start,
        reward,
        stats_mean: s_m,
        stats_sigma: s_sigma,
        normalized_stats: normalized,
        state: next,
        sampler: action_to_sampler(next.action, space),
    })
}
