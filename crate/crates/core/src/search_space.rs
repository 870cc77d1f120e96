//! Architecture search space, variable-length genome, and guided Gaussian
//! population sampling.
//!
//! A [`Chromosome`] encodes a dense network's hidden stack: its length is the
//! number of hidden layers and each gene is one layer's width. New
//! chromosomes are drawn around a depth/width mean with a depth/width spread
//! ([`SamplerParams`]); draws are rounded half away from zero and then clamped
//! into the [`SearchSpace`] bounds.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inclusive bounds on hidden-layer count and hidden-layer width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub depth_min: usize,
    pub depth_max: usize,
    pub width_min: usize,
    pub width_max: usize,
}

impl SearchSpace {
    pub fn new(depth_min: usize, depth_max: usize, width_min: usize, width_max: usize) -> Result<Self> {
        let space = Self {
            depth_min,
            depth_max,
            width_min,
            width_max,
        };
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth_min == 0 || self.width_min == 0 {
            return Err(Error::Config("search-space bounds must be strictly positive".into()));
        }
        if self.depth_min > self.depth_max {
            return Err(Error::Config(format!(
                "depth_min {} exceeds depth_max {}",
                self.depth_min, self.depth_max
            )));
        }
        if self.width_min > self.width_max {
            return Err(Error::Config(format!(
                "width_min {} exceeds width_max {}",
                self.width_min, self.width_max
            )));
        }
        Ok(())
    }

    /// Depth range 1..=10, width range 10..=400.
    pub fn standard() -> Self {
        Self {
            depth_min: 1,
            depth_max: 10,
            width_min: 10,
            width_max: 400,
        }
    }

    pub fn clamp_depth(&self, raw: f64) -> usize {
        clamp_round(raw, self.depth_min, self.depth_max)
    }

    pub fn clamp_width(&self, raw: f64) -> usize {
        clamp_round(raw, self.width_min, self.width_max)
    }

    pub fn contains(&self, c: &Chromosome) -> bool {
        (self.depth_min..=self.depth_max).contains(&c.depth())
            && c.genes().iter().all(|g| (self.width_min..=self.width_max).contains(g))
    }
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self::standard()
    }
}

// Round half away from zero, then clamp.
fn clamp_round(raw: f64, lo: usize, hi: usize) -> usize {
    let r = raw.round();
    if r.is_nan() || r <= lo as f64 {
        lo
    } else if r >= hi as f64 {
        hi
    } else {
        r as usize
    }
}

/// Hidden-layer widths, input side first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Chromosome(Vec<usize>);

impl Chromosome {
    pub fn new(genes: Vec<usize>) -> Self {
        Self(genes)
    }

    pub fn genes(&self) -> &[usize] {
        &self.0
    }

    pub fn depth(&self) -> usize {
        self.0.len()
    }

    pub fn into_genes(self) -> Vec<usize> {
        self.0
    }

    pub fn mean_width(&self) -> f64 {
        if self.0.is_empty() {
            return 0.0;
        }
        self.0.iter().sum::<usize>() as f64 / self.0.len() as f64
    }

    /// Difference between the widest and narrowest hidden layer.
    pub fn width_span(&self) -> usize {
        match (self.0.iter().max(), self.0.iter().min()) {
            (Some(hi), Some(lo)) => hi - lo,
            _ => 0,
        }
    }
}

impl From<Vec<usize>> for Chromosome {
    fn from(genes: Vec<usize>) -> Self {
        Self(genes)
    }
}

impl std::fmt::Display for Chromosome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[")?;
        for (i, g) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, "-")?;
            }
            write!(f, "{g}")?;
        }
        write!(f, "]")
    }
}

/// Mean and spread of the depth and width Gaussians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub depth_mean: f64,
    pub width_mean: f64,
    pub depth_sigma: f64,
    pub width_sigma: f64,
}

/// Closed-form starting point: centre of the ranges `[1, n_R]` and `[1, h_R]`
/// with half-range spreads.
pub fn init_sampler_params(space: &SearchSpace) -> SamplerParams {
    let n_r = space.depth_max as f64;
    let h_r = space.width_max as f64;
    SamplerParams {
        depth_mean: (1.0 + n_r) / 2.0,
        width_mean: (1.0 + h_r) / 2.0,
        depth_sigma: (n_r - 1.0) / 2.0,
        width_sigma: (h_r - 1.0) / 2.0,
    }
}

/// One unrounded depth draw `m1 + σ1·z`.
pub fn raw_depth<R: Rng + ?Sized>(params: &SamplerParams, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    params.depth_mean + params.depth_sigma * z
}

/// One unrounded width draw `m2 + σ2·z`.
pub fn raw_width<R: Rng + ?Sized>(params: &SamplerParams, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    params.width_mean + params.width_sigma * z
}

pub fn sample_chromosome<R: Rng + ?Sized>(params: &SamplerParams, space: &SearchSpace, rng: &mut R) -> Chromosome {
    let depth = space.clamp_depth(raw_depth(params, rng));
    let genes = (0..depth)
        .map(|_| space.clamp_width(raw_width(params, rng)))
        .collect();
    Chromosome(genes)
}

/// Draw `n` chromosomes around `params`.
pub fn sample_population<R: Rng + ?Sized>(
    params: &SamplerParams,
    space: &SearchSpace,
    n: usize,
    rng: &mut R,
) -> Vec<Chromosome> {
    (0..n).map(|_| sample_chromosome(params, space, rng)).collect()
}

/// Total weights plus biases of the dense network `[n_f, genes.., classes]`.
pub fn param_count(genes: &[usize], n_features: usize, n_classes: usize) -> u64 {
    let mut total = 0u64;
    let mut fan_in = n_features as u64;
    for &w in genes.iter().chain(std::iter::once(&n_classes)) {
        let w = w as u64;
        total += fan_in * w + w;
        fan_in = w;
    }
    total
}
