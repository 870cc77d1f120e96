//! Acceptance criteria, one PASS/FAIL line each.
//!
//! Runs without the libtest harness so the lines always reach the console.
//! Any failing gated criterion makes the process exit nonzero.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use gsevo::config::{Preset, SearchConfig, SynthConfig};
use gsevo::controller::{cumulative_reward, recombination_weights, update_policy, ControllerState};
use gsevo::lbfgs::{minimize, LbfgsConfig};
use gsevo::net2net::transform_to;
use gsevo::nsga2::{crowding_distance, non_dominated_sort, sbx_beta, sbx_pair, spdc, FitnessPoint};
use gsevo::rng::{SeedTree, Stream};
use gsevo::search::{prepare_data, run_search, GenerationRecord, NullSink};
use gsevo::search_space::{raw_depth, SearchSpace};
use gsevo::{Activation, Chromosome, DnnModel, SamplerParams};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn normal_matrix(rows: usize, cols: usize, rng: &mut Stream) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

fn max_abs_diff(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn function_preservation() -> Outcome {
    let (nf, c) = (6, 3);
    let mut worst = 0.0_f64;
    for k in 0..10u64 {
        let mut rng = SeedTree::new(k).stream("c1", &[]);
        let depth = rng.random_range(1..=3);
        let hidden: Vec<usize> = (0..depth).map(|_| rng.random_range(2..=8)).collect();
        let src = DnnModel::random_init(&hidden, nf, c, 1.0, Activation::Relu, &mut rng);
        // keep every width, grow some, append 0..2 layers no narrower than the last
        let mut target: Vec<usize> = hidden.iter().map(|&w| w + rng.random_range(0..=4)).collect();
        let last = *hidden.last().unwrap();
        for _ in 0..rng.random_range(0..=2) {
            target.push(last + rng.random_range(0..=3));
        }
        let dst = transform_to(&src, &target, nf, c, 0.0, &mut rng).unwrap();
        assert_eq!(dst.hidden_widths(), &target[..]);
        let x = normal_matrix(100, nf, &mut rng);
        let before = src.logits(x.view()).unwrap();
        let after = dst.logits(x.view()).unwrap();
        worst = worst.max(max_abs_diff(&before, &after));
        let pb = src.forward(x.view()).unwrap();
        let pa = dst.forward(x.view()).unwrap();
        worst = worst.max(max_abs_diff(&pb, &pa));
    }
    outcome(worst <= 1e-9, format!("max |Δ output| = {worst:.3e} (limit 1e-9)"))
}

fn gradient_check() -> Outcome {
    let shapes: [&[usize]; 4] = [&[], &[5], &[4], &[5, 4]];
    let (nf, c, n, h) = (8, 3, 16, 1e-6);
    let mut worst = 0.0_f64;
    for seed in 0..10u64 {
        for (si, hidden) in shapes.iter().enumerate() {
            for act in [Activation::Relu, Activation::Sigmoid] {
                let mut rng = SeedTree::new(seed).stream("c2", &[si as u64]);
                let mut m = DnnModel::random_init(hidden, nf, c, 1.0, act, &mut rng);
                // zero biases put ReLU kinks exactly at z = 0 for samples whose
                // previous layer is fully inactive; jitter every parameter so the
                // check runs at a differentiable point
                let jittered: Vec<f64> = m.to_flat().iter().map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal)).collect();
                m.set_flat(&jittered).unwrap();
                let x = normal_matrix(n, nf, &mut rng);
                let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..c)).collect();
                let (_, g) = m.loss_and_grad(x.view(), &labels).unwrap();
                let p0 = m.to_flat();
                let mut fd = vec![0.0; p0.len()];
                for i in 0..p0.len() {
                    let mut p = p0.clone();
                    p[i] = p0[i] + h;
                    m.set_flat(&p).unwrap();
                    let up = m.loss_and_grad(x.view(), &labels).unwrap().0;
                    p[i] = p0[i] - h;
                    m.set_flat(&p).unwrap();
                    let down = m.loss_and_grad(x.view(), &labels).unwrap().0;
                    fd[i] = (up - down) / (2.0 * h);
                }
                let diff: f64 = g.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let norm = |v: &[f64]| v.iter().map(|a| a * a).sum::<f64>().sqrt();
                let rel = diff / (norm(&g) + norm(&fd)).max(1e-12);
                worst = worst.max(rel);
            }
        }
    }
    outcome(
        worst <= 1e-5,
        format!("worst ‖g − fd‖ / (‖g‖ + ‖fd‖) = {worst:.3e} over widths up to [8,5,4,3], 10 seeds, both activations"),
    )
}

fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
    let (a, b) = (x[0], x[1]);
    let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
    let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
    (f, g)
}

fn lbfgs_rosenbrock() -> Outcome {
    let cfg = LbfgsConfig {
        max_iters: 100,
        grad_tol: 1e-10,
        ..LbfgsConfig::default()
    };
    let r = minimize(rosenbrock, &[-1.2, 1.0], &cfg).unwrap();
    let wolfe = r.steps.iter().all(|s| s.satisfies_strong_wolfe(cfg.wolfe_c1, cfg.wolfe_c2));
    outcome(
        r.value < 1e-8 && r.iterations() <= 100 && wolfe,
        format!(
            "f = {:.3e} after {} iterations, strong Wolfe at all {} steps: {wolfe}",
            r.value,
            r.iterations(),
            r.steps.len()
        ),
    )
}

fn brute_force_fronts(points: &[FitnessPoint]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| points[j].dominates(&points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn nsga2_oracle() -> Outcome {
    let mut mismatches = 0;
    for seed in 0..100u64 {
        let mut rng = SeedTree::new(seed).stream("c4", &[]);
        // coarse grids half the time so ties are common
        let coarse = seed % 2 == 0;
        let pts: Vec<FitnessPoint> = (0..200)
            .map(|_| {
                if coarse {
                    FitnessPoint::new(f64::from(rng.random_range(0..15u32)) / 15.0, rng.random_range(1..40))
                } else {
                    FitnessPoint::new(rng.random::<f64>(), rng.random_range(1..100_000))
                }
            })
            .collect();
        if non_dominated_sort(&pts) != brute_force_fronts(&pts) {
            mismatches += 1;
        }
    }
    let d = crowding_distance(&[
        FitnessPoint::new(0.7, 30),
        FitnessPoint::new(0.8, 20),
        FitnessPoint::new(0.9, 10),
    ]);
    let hand = d[1] == 2.0 && d[0].is_infinite() && d[2].is_infinite();
    outcome(
        mismatches == 0 && hand,
        format!("{mismatches}/100 seeds differ from the oracle; middle crowding distance = {}", d[1]),
    )
}

fn multiset(genes: &[&[usize]]) -> HashMap<usize, usize> {
    let mut m = HashMap::new();
    for g in genes.iter().flat_map(|s| s.iter()) {
        *m.entry(*g).or_insert(0) += 1;
    }
    m
}

fn crossover_invariants() -> Outcome {
    let mut rng = SeedTree::new(5).stream("c5", &[]);
    let mut spdc_bad = 0;
    let mut worst_mid = 0.0_f64;
    for _ in 0..1000 {
        let l1 = rng.random_range(2..=10);
        let l2 = rng.random_range(2..=10);
        let p1 = Chromosome::new((0..l1).map(|_| rng.random_range(10..=400)).collect());
        let p2 = Chromosome::new((0..l2).map(|_| rng.random_range(10..=400)).collect());
        let cut = rng.random_range(1..l1.min(l2));
        let (c1, c2) = spdc(&p1, &p2, cut).unwrap();
        if multiset(&[p1.genes(), p2.genes()]) != multiset(&[c1.genes(), c2.genes()])
            || c1.depth() != l2
            || c2.depth() != l1
        {
            spdc_bad += 1;
        }
        for (&g1, &g2) in c1.genes().iter().zip(c2.genes()) {
            let u: f64 = rng.random();
            let (a, b) = sbx_pair(g1 as f64, g2 as f64, u, 15.0);
            let mid = ((a + b) / 2.0 - (g1 + g2) as f64 / 2.0).abs();
            worst_mid = worst_mid.max(mid);
        }
    }
    let beta = sbx_beta(0.5, 15.0);
    let fixed = sbx_pair(120.0, 345.0, 0.5, 15.0);
    let pass = spdc_bad == 0 && worst_mid <= 1e-12 && beta == 1.0 && fixed == (120.0, 345.0);
    outcome(
        pass,
        format!("SPDC violations {spdc_bad}/1000; worst midpoint drift {worst_mid:.2e}; β(u=0.5) = {beta}"),
    )
}

fn controller_arithmetic() -> Outcome {
    let u = cumulative_reward(&[0.50, 0.55, 0.605]);
    let reward_ok = (u - 0.2).abs() <= 1e-12;

    let weights_ok = (2..=200).all(|n| {
        let w = recombination_weights(n).unwrap();
        w.iter().sum::<f64>().abs() <= 1e-12 && w.windows(2).all(|p| p[0] > p[1])
    });

    let space = SearchSpace::standard();
    let pop: Vec<Chromosome> = [vec![120, 80], vec![60], vec![200, 10, 30], vec![40, 40]]
        .into_iter()
        .map(Chromosome::new)
        .collect();
    let a = [0.3, 0.6, 0.2, 0.9];
    let st = ControllerState {
        theta: a.map(|v: f64| (v / (1.0 - v)).ln()),
        action: a,
        alpha: 0.1,
    };
    let zero = update_policy(&st, &pop, &[0.8, 0.8, 0.8], &space, 4).unwrap();
    let zero_ok = zero.state.action == a;

    // pick the action equal to the normalized observation, then update with positive reward
    let probe = update_policy(&st, &pop, &[0.8], &space, 4).unwrap();
    let s = probe.normalized_stats;
    let at_obs = ControllerState {
        theta: s.map(|v: f64| (v / (1.0 - v)).ln()),
        action: s,
        alpha: 0.1,
    };
    let same = update_policy(&at_obs, &pop, &[0.5, 0.7, 0.9], &space, 4).unwrap();
    let obs_ok = same.reward > 0.0 && same.state.action == s;

    outcome(
        reward_ok && weights_ok && zero_ok && obs_ok,
        format!(
            "U = {u:.15}; Σω and ordering ok: {weights_ok}; zero-reward fixed: {zero_ok}; s̃ = a fixed: {obs_ok}"
        ),
    )
}

fn sampling_statistics() -> Outcome {
    let p = SamplerParams {
        depth_mean: 5.0,
        width_mean: 205.0,
        depth_sigma: 1.5,
        width_sigma: 50.0,
    };
    let space = SearchSpace::standard();
    let mut rng = SeedTree::new(7).stream("c7", &[]);
    let n = 10_000;
    let raw: Vec<f64> = (0..n).map(|_| raw_depth(&p, &mut rng)).collect();
    let stats = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64;
        (m, var.sqrt())
    };
    let (m, s) = stats(&raw);
    let rounded: Vec<f64> = raw.iter().map(|&r| space.clamp_depth(r) as f64).collect();
    let (rm, rs) = stats(&rounded);
    let pass = (m - 5.0).abs() <= 0.05 && (s - 1.5).abs() <= 0.05 && (rm - 5.0).abs() <= 0.1 && (rs - 1.5).abs() <= 0.1;
    outcome(
        pass,
        format!("raw mean {m:.4}, sd {s:.4}; rounded mean {rm:.4}, sd {rs:.4}"),
    )
}

fn desk_config(seed: u64) -> SearchConfig {
    let mut cfg = Preset::Desk.config();
    cfg.seed = seed;
    cfg.data.synth = Some(SynthConfig {
        classes: 3,
        features: 20,
        per_class: 300,
        separation: 6.0,
    });
    cfg
}

fn end_to_end() -> Outcome {
    let cfg = desk_config(42);
    let data = prepare_data(&cfg, None).unwrap();
    let rep = run_search(&cfg, &data, &mut NullSink).unwrap();
    let h = rep.best_history();
    let monotone = h.windows(2).all(|w| w[1] >= w[0]);
    let val = rep.best_fitness.accuracy;
    let test = rep.test_accuracy.unwrap();
    outcome(
        val >= 0.99 && test >= 0.97 && monotone && rep.records.len() <= 11,
        format!(
            "validation {val:.4}, test {test:.4}, best {} after {} generations ({}), best history non-decreasing: {monotone}",
            rep.best_architecture,
            rep.records.len(),
            rep.termination
        ),
    )
}

fn stripped(records: &[GenerationRecord]) -> Vec<String> {
    records
        .iter()
        .map(|r| serde_json::to_string(&r.without_timing()).unwrap())
        .collect()
}

fn reproducibility() -> Outcome {
    // the easy problem stops early; the overlapping one runs several
    // generations of transfer, crossover and controller updates
    let mut lengths = Vec::new();
    let mut same = true;
    for separation in [6.0, 2.0] {
        let mut runs = Vec::new();
        for parallel in [true, true, false] {
            let mut cfg = desk_config(11);
            cfg.data.synth.as_mut().unwrap().separation = separation;
            cfg.training.parallel = parallel;
            let data = prepare_data(&cfg, None).unwrap();
            let mut log = Vec::new();
            run_search(&cfg, &data, &mut log).unwrap();
            runs.push(stripped(&log));
        }
        same &= runs[0] == runs[1] && runs[0] == runs[2];
        lengths.push(runs[0].len());
    }
    outcome(
        same,
        format!("generations per problem {lengths:?}; parallel/parallel/serial logs identical: {same}"),
    )
}

fn generations_to(records: &[GenerationRecord], target: f64) -> Option<usize> {
    records.iter().find(|r| r.best_fitness.accuracy >= target).map(|r| r.generation)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn guidance_efficacy() -> Outcome {
    let mut with = Vec::new();
    let mut without = Vec::new();
    let mut misses = [0, 0];
    for seed in 0..10 {
        for (k, controller) in [true, false].into_iter().enumerate() {
            let mut cfg = desk_config(1000 + seed);
            cfg.search.controller = controller;
            let data = prepare_data(&cfg, None).unwrap();
            let rep = run_search(&cfg, &data, &mut NullSink).unwrap();
            // runs that never reach the target count as one past the cap
            let g = generations_to(&rep.records, 0.99).unwrap_or_else(|| {
                misses[k] += 1;
                cfg.search.max_generations + 1
            });
            if controller { &mut with } else { &mut without }.push(g as f64);
        }
    }
    let (a, b) = (median(with), median(without));
    outcome(
        a <= b,
        format!(
            "median generations to 0.99: controller {a}, fixed sampling {b} (misses {} / {})",
            misses[0], misses[1]
        ),
    )
}

fn main() {
    let criteria: Vec<(u32, &str, Duration, bool, fn() -> Outcome)> = vec![
        (1, "function preservation", Duration::from_secs(5), true, function_preservation),
        (2, "gradient correctness", Duration::from_secs(10), true, gradient_check),
        (3, "L-BFGS on Rosenbrock", Duration::from_secs(1), true, lbfgs_rosenbrock),
        (4, "non-dominated sort oracle", Duration::from_secs(10), true, nsga2_oracle),
        (5, "crossover invariants", Duration::from_secs(5), true, crossover_invariants),
        (6, "controller arithmetic", Duration::from_secs(1), true, controller_arithmetic),
        (7, "guided sampling statistics", Duration::from_secs(1), true, sampling_statistics),
        (8, "end-to-end desk search", Duration::from_secs(300), true, end_to_end),
        (9, "reproducibility", Duration::from_secs(300), true, reproducibility),
        (10, "guidance efficacy (reported)", Duration::from_secs(600), false, guidance_efficacy),
    ];
    let mut failed = Vec::new();
    for (id, name, limit, gated, run) in criteria {
        let t = Instant::now();
        let o = run();
        let elapsed = t.elapsed();
        let in_time = elapsed <= limit;
        let ok = o.pass && in_time;
        let tag = match (ok, gated) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "SOFT-FAIL",
        };
        println!(
            "criterion {id:>2} {tag} {name}: {} [{:.2}s, limit {}s]",
            o.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
        if !ok && gated {
            failed.push(id);
        }
    }
    if !failed.is_empty() {
        println!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
    println!("all gated criteria passed");
}
