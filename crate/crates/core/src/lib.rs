//! Guided-sampling evolutionary search over dense classifier architectures.
//!
//! A candidate network is a [`Chromosome`]: the list of hidden-layer widths.
//! Each generation the search
//!
//! 1. draws new chromosomes from a Gaussian sampler over depth and width,
//!    mixing some of them with parents by variable-length crossover
//!    ([`nsga2::generate_offspring`]),
//! 2. builds each candidate from the current best network by function
//!    preserving transfer ([`net2net::transform_to`]) and fine-tunes it with
//!    L-BFGS ([`fitness::evaluate_population`]),
//! 3. keeps the best half of parents and children by non-dominated sorting on
//!    (validation accuracy, parameter count) ([`nsga2::RankedPopulation`]),
//! 4. moves the sampler toward the statistics of the better members, scaled
//!    by the improvement of the best accuracy so far
//!    ([`controller::update_policy`]).
//!
//! ```
//! use gsevo::config::{Preset, SynthConfig};
//! use gsevo::search::{prepare_data, run_search, NullSink};
//!
//! let mut cfg = Preset::Desk.config();
//! cfg.search.population = 4;
//! cfg.search.max_generations = 1;
//! cfg.training.initial_iterations = 20;
//! cfg.data.synth = Some(SynthConfig { classes: 2, features: 3, per_class: 20, separation: 4.0 });
//!
//! let data = prepare_data(&cfg, None)?;
//! let report = run_search(&cfg, &data, &mut NullSink)?;
//! assert!(report.records.len() <= 2);
//! assert!(report.best_fitness.accuracy > 0.5);
//! # Ok::<(), gsevo::Error>(())
//! ```

pub mod config;
pub mod controller;
pub mod data;
pub mod error;
pub mod fitness;
pub mod lbfgs;
pub mod model;
pub mod net2net;
pub mod nsga2;
pub mod report;
pub mod rng;
pub mod search;
pub mod search_space;

pub use config::{Preset, SearchConfig};
pub use data::Dataset;
pub use error::{Error, Result};
pub use model::{Activation, DnnModel};
pub use nsga2::FitnessPoint;
pub use search::{run_search, SearchReport};
pub use search_space::{Chromosome, SamplerParams, SearchSpace};
