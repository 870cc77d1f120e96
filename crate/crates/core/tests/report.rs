use std::time::Instant;

use gsevo::config::{Preset, SearchConfig, SynthConfig};
use gsevo::fitness::{evaluate_population, FitnessConfig};
use gsevo::model::ModelFile;
use gsevo::report::emit_report;
use gsevo::rng::SeedTree;
use gsevo::search::{prepare_data, read_run_log, run_search, run_search_with, JsonlSink, NullSink};
use gsevo::{Chromosome, Error};

fn config(seed: u64, separation: f64) -> SearchConfig {
    let mut cfg = Preset::Desk.config();
    cfg.seed = seed;
    cfg.search.population = 6;
    cfg.training.initial_iterations = 60;
    cfg.training.finetune_iterations = 15;
    cfg.data.synth = Some(SynthConfig {
        classes: 3,
        features: 8,
        per_class: 60,
        separation,
    });
    cfg
}

#[test]
fn finished_run_round_trips_through_files() {
    let cfg = config(3, 3.0);
    let data = prepare_data(&cfg, None).unwrap();
    let rep = run_search(&cfg, &data, &mut NullSink).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&rep, dir.path()).unwrap();

    let summary = std::fs::read_to_string(&paths.summary).unwrap();
    let row: Vec<&str> = summary.lines().nth(1).unwrap().split(',').collect();
    let reported: f64 = row[0].parse().unwrap();
    let model = ModelFile::load(&paths.best_model).unwrap();
    let recomputed = model.model().unwrap().accuracy(&data.split.test).unwrap();
    assert_eq!(reported, recomputed);
    assert_eq!(model.normalizer.as_ref(), Some(&data.normalizer));
    assert_eq!(row[2], rep.best_architecture.genes().iter().map(|g| g.to_string()).collect::<Vec<_>>().join("-"));
    assert_eq!(row[3].parse::<u64>().unwrap(), rep.best_fitness.params);

    assert_eq!(read_run_log(&paths.run_log).unwrap(), rep.records);

    let confusion = std::fs::read_to_string(&paths.confusion).unwrap();
    let counts = data.split.test.class_counts();
    for (line, want) in confusion.lines().skip(1).zip(&counts) {
        let total: usize = line.split(',').skip(1).map(|v| v.parse::<usize>().unwrap()).sum();
        assert_eq!(total, *want);
    }
    assert_eq!(confusion.lines().count(), counts.len() + 1);
}

#[test]
fn interrupted_run_keeps_flushed_generations() {
    let mut cfg = config(11, 1.0);
    cfg.search.max_generations = 10;
    let data = prepare_data(&cfg, None).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run_log.jsonl");
    let mut sink = JsonlSink::create(&path).unwrap();
    let err = run_search_with(&cfg, &data, &mut sink, &mut |r| (r.generation == 3).then(|| "stop requested".to_string()))
        .unwrap_err();
    assert!(matches!(err, Error::Interrupted { generation: 3, .. }), "{err}");
    drop(sink);
    let recs = read_run_log(&path).unwrap();
    assert_eq!(recs.iter().map(|r| r.generation).collect::<Vec<_>>(), vec![0, 1, 2, 3]);
}

#[test]
fn run_logs_match_across_repeats() {
    let cfg = config(21, 1.5);
    let data = prepare_data(&cfg, None).unwrap();
    let mut a = Vec::new();
    let mut b = Vec::new();
    run_search(&cfg, &data, &mut a).unwrap();
    run_search(&cfg, &data, &mut b).unwrap();
    let strip = |v: &Vec<gsevo::search::GenerationRecord>| v.iter().map(|r| r.without_timing()).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
    let last = a.last().unwrap();
    assert_eq!(last.generation + 1, a.len());
    assert!(last.termination.is_some());
    assert!(a.iter().skip(1).all(|r| r.population.len() == 12 && r.survivors.len() == 6));
}

// coarse: per-generation cost should grow roughly linearly with N
#[test]
fn evaluation_time_scales_with_population() {
    let cfg = config(1, 3.0);
    let data = prepare_data(&cfg, None).unwrap();
    let fit = FitnessConfig {
        parallel: false,
        initial_iterations: 40,
        grad_tol: 0.0,
        ..FitnessConfig::default()
    };
    let seeds = SeedTree::new(1);
    let time = |n: usize| {
        // distinct members so memoization does not hide work
        let p: Vec<Chromosome> = (0..n).map(|i| Chromosome::new(vec![30 + i, 20])).collect();
        (0..3)
            .map(|_| {
                let t = Instant::now();
                evaluate_population(&p, None, &data.split.train, &data.split.validation, &fit, &seeds, 0).unwrap();
                t.elapsed().as_secs_f64()
            })
            .fold(f64::INFINITY, f64::min)
    };
    let (small, large) = (time(4), time(8));
    let ratio = large / small;
    assert!((1.3..=3.5).contains(&ratio), "N=4 {small:.4}s, N=8 {large:.4}s, ratio {ratio:.2}");
}
