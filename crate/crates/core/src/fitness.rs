//! Population fitness: build or transfer a model per chromosome, train it,
//! score validation accuracy and parameter count.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::lbfgs::LbfgsConfig;
use crate::model::{pretrain_sae, Activation, DnnModel};
use crate::net2net::transform_to;
use crate::nsga2::FitnessPoint;
use crate::rng::SeedTree;
use crate::search_space::{param_count, Chromosome};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitnessConfig {
    /// L-BFGS iterations for freshly initialized models (generation 0).
    pub initial_iterations: usize,
    /// L-BFGS iterations after a transfer from the incumbent.
    pub finetune_iterations: usize,
    /// Symmetric noise on replicated units when widening.
    pub noise: f64,
    /// Multiplier on the Glorot range at initialization.
    pub init_scale: f64,
    pub activation: Activation,
    /// Autoencoder pretraining iterations per hidden layer; 0 disables it.
    pub pretrain_iterations: usize,
    /// Evaluate members on the rayon pool.
    pub parallel: bool,
    pub lbfgs_memory: usize,
    pub grad_tol: f64,
}

impl Default for FitnessConfig {
    fn default() -> Self {
        Self {
            initial_iterations: 200,
            finetune_iterations: 30,
            noise: 1e-4,
            init_scale: 1.0,
            activation: Activation::Relu,
            pretrain_iterations: 0,
            parallel: true,
            lbfgs_memory: 10,
            grad_tol: 1e-5,
        }
    }
}

impl FitnessConfig {
    pub fn lbfgs(&self, max_iters: usize) -> LbfgsConfig {
        LbfgsConfig {
            memory: self.lbfgs_memory,
            max_iters,
            grad_tol: self.grad_tol,
            ..LbfgsConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return Err(Error::Config(format!("noise must be finite and non-negative, got {}", self.noise)));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::Config(format!("init_scale must be positive, got {}", self.init_scale)));
        }
        self.lbfgs(1).validate()
    }
}

/// Result of evaluating one population.
#[derive(Debug, Clone)]
pub struct Evaluation {
    /// One point per member, in population order.
    pub fitness: Vec<FitnessPoint>,
    /// Index chosen by [`select_best`].
    pub best_index: usize,
    /// Trained model of the best member.
    pub best_model: DnnModel,
}

/// Lexicographic best: highest accuracy at 4-decimal precision, then fewest
/// parameters, then higher raw accuracy, then lowest index. `None` when empty.
pub fn select_best(fitness: &[FitnessPoint]) -> Option<usize> {
    let key = |f: &FitnessPoint| (f.accuracy * 1e4).round() as i64;
    (0..fitness.len()).min_by(|&a, &b| {
        let (fa, fb) = (&fitness[a], &fitness[b]);
        key(fb)
            .cmp(&key(fa))
            .then(fa.params.cmp(&fb.params))
            .then(fb.accuracy.total_cmp(&fa.accuracy))
            .then(a.cmp(&b))
    })
}

fn check_datasets(train: &Dataset, val: &Dataset) -> Result<()> {
    if train.n_features() != val.n_features() || train.n_classes() != val.n_classes() {
        return Err(Error::Shape(format!(
            "train is {} features / {} classes, validation is {} / {}",
            train.n_features(),
            train.n_classes(),
            val.n_features(),
            val.n_classes()
        )));
    }
    if train.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    Ok(())
}

/// Builds and trains the model for one chromosome.
///
/// Without an incumbent the model is initialized at random (and optionally
/// pretrained) and trained for the full budget; otherwise the incumbent is
/// transferred onto the chromosome and fine-tuned for the short budget. The
/// stream is keyed by `(generation, key)`.
pub fn train_member(
    genes: &Chromosome,
    incumbent: Option<&DnnModel>,
    train: &Dataset,
    cfg: &FitnessConfig,
    seeds: &SeedTree,
    generation: usize,
    key: usize,
) -> Result<DnnModel> {
    let mut rng = seeds.stream("member", &[generation as u64, key as u64]);
    let (nf, c) = (train.n_features(), train.n_classes());
    let x = train.features.view();
    let (mut model, iterations) = match incumbent {
        None => {
            let m = DnnModel::random_init(genes.genes(), nf, c, cfg.init_scale, cfg.activation, &mut rng);
            let m = pretrain_sae(&m, x, cfg.pretrain_iterations, &mut rng)?;
            (m, cfg.initial_iterations)
        }
        Some(inc) => (
            transform_to(inc, genes.genes(), nf, c, cfg.noise, &mut rng)?,
            cfg.finetune_iterations,
        ),
    };
    model.train(x, &train.labels, &cfg.lbfgs(iterations))?;
    Ok(model)
}

/// Trains and scores every member of `pop` on the validation set.
///
/// Identical chromosomes are trained once; each unique chromosome uses the
/// stream of its first occurrence, so results do not depend on `cfg.parallel`.
pub fn evaluate_population(
    pop: &[Chromosome],
    incumbent: Option<&DnnModel>,
    train: &Dataset,
    val: &Dataset,
    cfg: &FitnessConfig,
    seeds: &SeedTree,
    generation: usize,
) -> Result<Evaluation> {
    if pop.is_empty() {
        return Err(Error::EmptyPopulation);
    }
    check_datasets(train, val)?;
    if val.is_empty() {
        return Err(Error::EmptyEvaluationSet);
    }
    if let Some(inc) = incumbent {
        if inc.n_features() != train.n_features() || inc.n_classes() != train.n_classes() {
            return Err(Error::Shape("incumbent model does not match the data".into()));
        }
    }

    let mut first: HashMap<&Chromosome, usize> = HashMap::new();
    let mut unique = Vec::new();
    let owner: Vec<usize> = pop
        .iter()
        .enumerate()
        .map(|(i, c)| {
            *first.entry(c).or_insert_with(|| {
                unique.push(i);
                unique.len() - 1
            })
        })
        .collect();

    let run = |&i: &usize| -> Result<(FitnessPoint, DnnModel)> {
        let model = train_member(&pop[i], incumbent, train, cfg, seeds, generation, i)?;
        let params = param_count(pop[i].genes(), train.n_features(), train.n_classes());
        Ok((FitnessPoint::new(model.accuracy(val)?, params), model))
    };
    let results: Vec<(FitnessPoint, DnnModel)> = if cfg.parallel {
        unique.par_iter().map(run).collect::<Result<_>>()?
    } else {
        unique.iter().map(run).collect::<Result<_>>()?
    };

    let fitness: Vec<FitnessPoint> = owner.iter().map(|&u| results[u].0).collect();
    let best_index = select_best(&fitness).expect("non-empty population");
    let best_model = results[owner[best_index]].1.clone();
    Ok(Evaluation {
        fitness,
        best_index,
        best_model,
    })
}
