//! The search loop: guided sampling, NSGA-II selection, Net2Net warm starts
//! and the sampler controller, one generation at a time.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::SearchConfig;
use crate::controller::{update_policy, ControllerState, ControllerUpdate};
use crate::data::{self, DataSplit, Dataset, Normalizer};
use crate::error::{Error, Result};
use crate::fitness::{evaluate_population, select_best};
use crate::model::DnnModel;
use crate::nsga2::{binary_tournament, generate_offspring, FitnessPoint, RankedPopulation};
use crate::rng::SeedTree;
use crate::search_space::{init_sampler_params, sample_population, Chromosome, SamplerParams};

/// Best accuracies closer than this count as unchanged.
pub const STAGNATION_TOL: f64 = 1e-4;
/// Consecutive unchanged generations that end a run.
pub const STAGNATION_WINDOW: usize = 3;

pub const REASON_PERFECT: &str = "perfect validation accuracy";
pub const REASON_STAGNATION: &str = "stagnation 3 generations";
pub const REASON_CAP: &str = "generation cap";

/// Stop test after generation `generation` has been evaluated; `history`
/// holds the best validation accuracy of generations `0..=generation`.
pub fn check_termination(history: &[f64], generation: usize, max_generations: usize) -> Option<&'static str> {
    let last = *history.last()?;
    if last >= 1.0 {
        return Some(REASON_PERFECT);
    }
    if history.len() > STAGNATION_WINDOW
        && (1..=STAGNATION_WINDOW).all(|k| (last - history[history.len() - 1 - k]).abs() < STAGNATION_TOL)
    {
        return Some(REASON_STAGNATION);
    }
    if generation >= max_generations {
        return Some(REASON_CAP);
    }
    None
}

/// One line of the run log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub generation: usize,
    /// Evaluated pool: `P₀` at generation 0, `P ∪ Q` afterwards.
    pub population: Vec<Chromosome>,
    pub fitness: Vec<FitnessPoint>,
    /// Non-dominated fronts over `population`, best first.
    pub fronts: Vec<Vec<usize>>,
    /// Indices into `population` kept for the next generation.
    pub survivors: Vec<usize>,
    /// Incumbent after this generation.
    pub best_architecture: Chromosome,
    pub best_fitness: FitnessPoint,
    /// Mean validation accuracy of the survivors.
    pub mean_accuracy: f64,
    /// `None` when the run stops here or the controller is disabled.
    pub controller: Option<ControllerUpdate>,
    /// Sampler used for the next offspring.
    pub sampler: SamplerParams,
    pub termination: Option<String>,
    /// Wall time since the start of the run; the only non-reproducible field.
    pub elapsed_ms: u64,
}

impl GenerationRecord {
    /// Copy with timing removed, for reproducibility comparisons.
    pub fn without_timing(&self) -> Self {
        Self {
            elapsed_ms: 0,
            ..self.clone()
        }
    }
}

/// Receives each generation record as soon as it exists.
pub trait LogSink {
    fn record(&mut self, rec: &GenerationRecord) -> Result<()>;
}

/// Discards records.
pub struct NullSink;

impl LogSink for NullSink {
    fn record(&mut self, _: &GenerationRecord) -> Result<()> {
        Ok(())
    }
}

impl LogSink for Vec<GenerationRecord> {
    fn record(&mut self, rec: &GenerationRecord) -> Result<()> {
        self.push(rec.clone());
        Ok(())
    }
}

/// One JSON object per line, flushed after every record.
pub struct JsonlSink {
    out: BufWriter<File>,
}

impl JsonlSink {
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
        Ok(Self { out: BufWriter::new(f) })
    }
}

impl LogSink for JsonlSink {
    fn record(&mut self, rec: &GenerationRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out
            .write_all(b"\n")
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io("writing run log", e))
    }
}

pub fn read_run_log(path: &Path) -> Result<Vec<GenerationRecord>> {
    let f = File::open(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut out = Vec::new();
    for line in BufReader::new(f).lines() {
        let line = line.map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Normalized train / validation / test data plus the fitted normalizer.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub split: DataSplit,
    pub normalizer: Normalizer,
}

/// Loads the configured source (`data_override` replaces the configured CSV
/// path), splits it by class and normalizes it with training statistics.
pub fn prepare_data(cfg: &SearchConfig, data_override: Option<&Path>) -> Result<PreparedData> {
    let seeds = SeedTree::new(cfg.seed);
    let d = &cfg.data;
    let dataset = if let Some(p) = data_override.or(d.csv.as_deref()) {
        data::load_csv(p, d.skip_header)?
    } else if let Some(dir) = &d.signal_dir {
        data::load_signal_dir(dir, d.segment_length)?
    } else if let Some(m) = &d.signal_manifest {
        data::load_signal_manifest(m, d.segment_length)?
    } else if let Some(s) = &d.synth {
        data::synth_blobs(s.classes, s.features, s.per_class, s.separation, &mut seeds.stream("synth", &[]))?
    } else {
        return Err(Error::Config(
            "no data source: give --data, data.csv, data.signal_dir, data.signal_manifest or [data.synth]".into(),
        ));
    };
    prepare_dataset(cfg, &dataset)
}

/// Splits and normalizes an in-memory dataset with the config's settings.
pub fn prepare_dataset(cfg: &SearchConfig, dataset: &Dataset) -> Result<PreparedData> {
    let seeds = SeedTree::new(cfg.seed);
    let (split, normalizer) =
        data::prepare_split(dataset, cfg.data.split, cfg.data.normalization, &mut seeds.stream("split", &[]))?;
    Ok(PreparedData { split, normalizer })
}

/// Everything a finished run produced.
#[derive(Debug, Clone)]
pub struct SearchReport {
    pub config: SearchConfig,
    pub records: Vec<GenerationRecord>,
    pub best_model: DnnModel,
    pub best_architecture: Chromosome,
    pub best_fitness: FitnessPoint,
    pub termination: String,
    /// `None` when the test fraction is zero.
    pub test_accuracy: Option<f64>,
    /// `[true][predicted]` counts on the test split.
    pub confusion: Option<Vec<Vec<usize>>>,
    pub classes: Vec<String>,
    pub normalizer: Normalizer,
    pub wall_ms: u64,
}

impl SearchReport {
    /// Best validation accuracy per generation.
    pub fn best_history(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.best_fitness.accuracy).collect()
    }
}

pub fn run_search(cfg: &SearchConfig, data: &PreparedData, sink: &mut dyn LogSink) -> Result<SearchReport> {
    run_search_with(cfg, data, sink, &mut |_| None)
}

/// [`run_search`] with an observer called after each record has reached the
/// sink. Returning `Some(reason)` stops the run with [`Error::Interrupted`].
pub fn run_search_with(
    cfg: &SearchConfig,
    data: &PreparedData,
    sink: &mut dyn LogSink,
    observer: &mut dyn FnMut(&GenerationRecord) -> Option<String>,
) -> Result<SearchReport> {
    cfg.validate()?;
    let start = Instant::now();
    let seeds = SeedTree::new(cfg.seed);
    let space = cfg.search.space()?;
    let offspring_cfg = cfg.search.offspring();
    let n = cfg.search.population;
    let (train, val) = (&data.split.train, &data.split.validation);

    let mut sampler = init_sampler_params(&space);
    let mut ctrl = ControllerState::new(cfg.search.alpha, &sampler, &space);

    let pop0 = sample_population(&sampler, &space, n, &mut seeds.stream("sample", &[0]));
    let ev = evaluate_population(&pop0, None, train, val, &cfg.training, &seeds, 0)?;
    let mut incumbent = ev.best_model;
    let mut best_fit = ev.fitness[ev.best_index];
    let mut best_arch = pop0[ev.best_index].clone();
    let mut history = vec![best_fit.accuracy];

    let mut ranked = RankedPopulation::new(pop0, ev.fitness)?;
    let mut pool = (ranked.chromosomes.clone(), ranked.fitness.clone(), ranked.fronts.clone());
    let mut survivors: Vec<usize> = (0..n).collect();
    let mut records = Vec::new();
    let mut generation = 0;

    let termination = loop {
        let reason = check_termination(&history, generation, cfg.search.max_generations);
        let mut controller = None;
        let mut offspring = None;
        if reason.is_none() {
            let mut trng = seeds.stream("tournament", &[generation as u64]);
            let parents: Vec<Chromosome> = (0..n)
                .map(|_| ranked.chromosomes[binary_tournament(&ranked, &mut trng)].clone())
                .collect();
            if cfg.search.controller {
                let mut order: Vec<usize> = (0..ranked.len()).collect();
                order.sort_by(|&a, &b| ranked.better(a, b).then(a.cmp(&b)));
                let sorted: Vec<Chromosome> = order.iter().map(|&i| ranked.chromosomes[i].clone()).collect();
                let up = update_policy(&ctrl, &sorted, &history, &space, generation)?;
                ctrl = up.state;
                sampler = up.sampler;
                controller = Some(up);
            }
            let mut orng = seeds.stream("offspring", &[generation as u64]);
            offspring = Some(generate_offspring(&parents, &sampler, &space, &offspring_cfg, &mut orng)?.chromosomes);
        }

        let mean_accuracy = ranked.fitness.iter().map(|f| f.accuracy).sum::<f64>() / ranked.len() as f64;
        let rec = GenerationRecord {
            generation,
            population: pool.0.clone(),
            fitness: pool.1.clone(),
            fronts: pool.2.clone(),
            survivors: survivors.clone(),
            best_architecture: best_arch.clone(),
            best_fitness: best_fit,
            mean_accuracy,
            controller,
            sampler,
            termination: reason.map(str::to_string),
            elapsed_ms: start.elapsed().as_millis() as u64,
        };
        sink.record(&rec)?;
        log::info!(
            "generation {generation}: best {:.4} {} ({} params), mean {:.4}",
            best_fit.accuracy,
            best_arch,
            best_fit.params,
            mean_accuracy
        );
        if let Some(why) = observer(&rec) {
            return Err(Error::Interrupted { generation, reason: why });
        }
        records.push(rec);
        if let Some(r) = reason {
            break r.to_string();
        }

        generation += 1;
        let q = offspring.expect("offspring exist while running");
        let ev = evaluate_population(&q, Some(&incumbent), train, val, &cfg.training, &seeds, generation)?;
        let cand = ev.fitness[ev.best_index];
        if select_best(&[best_fit, cand]) == Some(1) && cand.accuracy >= best_fit.accuracy {
            incumbent = ev.best_model;
            best_fit = cand;
            best_arch = q[ev.best_index].clone();
        }
        history.push(best_fit.accuracy);

        let mut chromosomes = ranked.chromosomes;
        chromosomes.extend(q);
        let mut fitness = ranked.fitness;
        fitness.extend(ev.fitness);
        let combined = RankedPopulation::new(chromosomes, fitness)?;
        survivors = combined.select_survivors(n);
        ranked = RankedPopulation::new(
            survivors.iter().map(|&i| combined.chromosomes[i].clone()).collect(),
            survivors.iter().map(|&i| combined.fitness[i]).collect(),
        )?;
        pool = (combined.chromosomes, combined.fitness, combined.fronts);
    };

    let test = &data.split.test;
    let (test_accuracy, confusion) = if test.is_empty() {
        (None, None)
    } else {
        (Some(incumbent.accuracy(test)?), Some(incumbent.confusion_matrix(test)?))
    };
    Ok(SearchReport {
        config: cfg.clone(),
        records,
        best_model: incumbent,
        best_architecture: best_arch,
        best_fitness: best_fit,
        termination,
        test_accuracy,
        confusion,
        classes: data.split.train.classes.clone(),
        normalizer: data.normalizer.clone(),
        wall_ms: start.elapsed().as_millis() as u64,
    })
}
