use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use gsevo::config::{Preset, SearchConfig};
use gsevo::data::{load_csv, synth_blobs, Dataset};
use gsevo::model::ModelFile;
use gsevo::report::{confusion_csv, emit_report, ReportPaths};
use gsevo::rng::SeedTree;
use gsevo::search::{prepare_data, run_search, JsonlSink};
use gsevo::{Error, Result};

#[derive(Parser)]
#[command(name = "gsevo", version, about = "Evolutionary architecture search for dense classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a search and write the run log, summary, confusion matrix and best model.
    Search {
        /// TOML config; without it the preset is used as is.
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV with numeric features and an integer label in the last column.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "gsevo-out")]
        out: PathBuf,
        /// desk, or full (also spelled paper)
        #[arg(long)]
        preset: Option<Preset>,
        /// Evaluate members one at a time.
        #[arg(long)]
        serial: bool,
    },
    /// Score a saved model on a labelled CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        skip_header: bool,
    },
    /// Write Gaussian blobs as CSV.
    Synth {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        features: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        separation: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn search(
    config: Option<PathBuf>,
    data: Option<PathBuf>,
    seed: Option<u64>,
    out: PathBuf,
    preset: Option<Preset>,
    serial: bool,
) -> Result<()> {
    let mut cfg = match &config {
        Some(p) => SearchConfig::load(p, preset)?,
        None => preset.unwrap_or_default().config(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if serial {
        cfg.training.parallel = false;
    }
    cfg.validate()?;
    let prepared = prepare_data(&cfg, data.as_deref())?;
    std::fs::create_dir_all(&out).map_err(|e| Error::Io {
        context: format!("creating {}", out.display()),
        source: e,
    })?;
    let paths = ReportPaths::in_dir(&out);
    let mut sink = JsonlSink::create(&paths.run_log)?;
    let report = run_search(&cfg, &prepared, &mut sink)?;
    emit_report(&report, &out)?;
    println!("termination: {}", report.termination);
    println!("generations: {}", report.records.len());
    println!("best architecture: {} ({} params)", report.best_architecture, report.best_fitness.params);
    println!("validation accuracy: {:.4}", report.best_fitness.accuracy);
    if let Some(a) = report.test_accuracy {
        println!("test accuracy: {a:.4}");
    }
    println!("outputs: {}", out.display());
    Ok(())
}

/// Maps the CSV's class names onto the model's class indices.
fn align_classes(d: Dataset, classes: Option<&[String]>) -> Result<Dataset> {
    let Some(known) = classes else {
        return Ok(d);
    };
    let labels = d
        .labels
        .iter()
        .map(|&l| {
            let name = &d.classes[l];
            known
                .iter()
                .position(|k| k == name)
                .ok_or_else(|| Error::InvalidArgument(format!("label {name} is not a class of the model")))
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(d.features, labels, known.to_vec())
}

fn eval(model: PathBuf, data: PathBuf, skip_header: bool) -> Result<()> {
    let file = ModelFile::load(&model)?;
    let net = file.model()?;
    let mut d = align_classes(load_csv(&data, skip_header)?, file.classes.as_deref())?;
    if let Some(norm) = &file.normalizer {
        d = norm.apply_dataset(&d)?;
    }
    if d.n_classes() > net.n_classes() {
        return Err(Error::Shape(format!(
            "data has {} classes, model predicts {}",
            d.n_classes(),
            net.n_classes()
        )));
    }
    while d.classes.len() < net.n_classes() {
        d.classes.push(format!("class{}", d.classes.len()));
    }
    let acc = net.accuracy(&d)?;
    println!("samples: {}", d.len());
    println!("accuracy: {acc:.6}");
    print!("{}", confusion_csv(&d.classes, &net.confusion_matrix(&d)?));
    Ok(())
}

fn synth(classes: usize, features: usize, per_class: usize, separation: f64, out: PathBuf, seed: u64) -> Result<()> {
    let d = synth_blobs(classes, features, per_class, separation, &mut SeedTree::new(seed).stream("synth", &[]))?;
    d.write_csv(&out)?;
    println!("wrote {} rows to {}", d.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Search {
            config,
            data,
            seed,
            out,
            preset,
            serial,
        } => search(config, data, seed, out, preset, serial),
        Command::Eval {
            model,
            data,
            skip_header,
        } => eval(model, data, skip_header),
        Command::Synth {
            classes,
            features,
            per_class,
            separation,
            out,
            seed,
        } => synth(classes, features, per_class, separation, out, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::FAILURE
        }
    }
}
