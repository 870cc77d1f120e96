//! Bi-objective NSGA-II machinery over `(accuracy ↑, parameter count ↓)`
//! plus the two-step variable-length crossover.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::search_space::{sample_population, Chromosome, SamplerParams, SearchSpace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessPoint {
    /// Validation accuracy, maximized.
    pub accuracy: f64,
    /// Parameter count, minimized.
    pub params: u64,
}

impl FitnessPoint {
    pub fn new(accuracy: f64, params: u64) -> Self {
        Self { accuracy, params }
    }

    /// At least as good in both objectives and strictly better in one.
    pub fn dominates(&self, other: &FitnessPoint) -> bool {
        self.accuracy >= other.accuracy
            && self.params <= other.params
            && (self.accuracy > other.accuracy || self.params < other.params)
    }
}

/// Fast non-dominated sort. Returns fronts best first; indices inside a front
/// are ascending.
pub fn non_dominated_sort(points: &[FitnessPoint]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in (p + 1)..n {
            if points[p].dominates(&points[q]) {
                dominated_by_me[p].push(q);
                domination_count[q] += 1;
            } else if points[q].dominates(&points[p]) {
                dominated_by_me[q].push(p);
                domination_count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(std::mem::replace(&mut current, next));
    }
    fronts
}

/// Crowding distance of each member of one front.
pub fn crowding_distance(front: &[FitnessPoint]) -> Vec<f64> {
    let n = front.len();
    let mut dist = vec![0.0; n];
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let objectives: [fn(&FitnessPoint) -> f64; 2] = [|p| p.accuracy, |p| p.params as f64];
    for value in objectives {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| value(&front[a]).total_cmp(&value(&front[b])));
        let lo = value(&front[order[0]]);
        let hi = value(&front[order[n - 1]]);
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let span = hi - lo;
        if span > 0.0 {
            for w in order.windows(3) {
                dist[w[1]] += (value(&front[w[2]]) - value(&front[w[0]])) / span;
            }
        }
    }
    dist
}

/// Chromosomes with their fitness, Pareto rank (1 = best front), and
/// crowding distance within their front.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedPopulation {
    pub chromosomes: Vec<Chromosome>,
    pub fitness: Vec<FitnessPoint>,
    pub rank: Vec<usize>,
    pub crowding: Vec<f64>,
    pub fronts: Vec<Vec<usize>>,
}

impl RankedPopulation {
    pub fn new(chromosomes: Vec<Chromosome>, fitness: Vec<FitnessPoint>) -> Result<Self> {
        if chromosomes.is_empty() {
            return Err(Error::EmptyPopulation);
        }
        if chromosomes.len() != fitness.len() {
            return Err(Error::Shape(format!(
                "{} chromosomes but {} fitness points",
                chromosomes.len(),
                fitness.len()
            )));
        }
        let fronts = non_dominated_sort(&fitness);
        let mut rank = vec![0; fitness.len()];
        let mut crowding = vec![0.0; fitness.len()];
        for (r, front) in fronts.iter().enumerate() {
            let pts: Vec<FitnessPoint> = front.iter().map(|&i| fitness[i]).collect();
            for (&i, d) in front.iter().zip(crowding_distance(&pts)) {
                rank[i] = r + 1;
                crowding[i] = d;
            }
        }
        Ok(Self {
            chromosomes,
            fitness,
            rank,
            crowding,
            fronts,
        })
    }

    pub fn len(&self) -> usize {
        self.chromosomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chromosomes.is_empty()
    }

    /// Crowded comparison: lower rank first, then larger crowding distance.
    pub fn better(&self, a: usize, b: usize) -> std::cmp::Ordering {
        self.rank[a]
            .cmp(&self.rank[b])
            .then_with(|| self.crowding[b].total_cmp(&self.crowding[a]))
    }

    /// Elitist survival: whole fronts in order, the last partial front by
    /// decreasing crowding distance (lower index on ties).
    pub fn select_survivors(&self, n: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        for front in &self.fronts {
            if out.len() + front.len() <= n {
                out.extend_from_slice(front);
            } else {
                let mut rest = front.clone();
                rest.sort_by(|&a, &b| self.crowding[b].total_cmp(&self.crowding[a]).then(a.cmp(&b)));
                out.extend_from_slice(&rest[..n - out.len()]);
            }
            if out.len() == n {
                break;
            }
        }
        out
    }
}

/// Binary tournament on the crowded comparison; a full tie is a fair coin.
pub fn binary_tournament<R: Rng + ?Sized>(pop: &RankedPopulation, rng: &mut R) -> usize {
    let a = rng.random_range(0..pop.len());
    let b = rng.random_range(0..pop.len());
    match pop.better(a, b) {
        std::cmp::Ordering::Less => a,
        std::cmp::Ordering::Greater => b,
        std::cmp::Ordering::Equal => {
            if rng.random_bool(0.5) {
                a
            } else {
                b
            }
        }
    }
}

/// Single point depth crossover: swap tails after the first `cut` genes.
pub fn spdc(p1: &Chromosome, p2: &Chromosome, cut: usize) -> Result<(Chromosome, Chromosome)> {
    let (a, b) = (p1.genes(), p2.genes());
    if cut == 0 || cut >= a.len().min(b.len()) {
        return Err(Error::InvalidArgument(format!(
            "cut point {cut} outside 1..{}",
            a.len().min(b.len())
        )));
    }
    let c1 = a[..cut].iter().chain(&b[cut..]).copied().collect();
    let c2 = b[..cut].iter().chain(&a[cut..]).copied().collect();
    Ok((Chromosome::new(c1), Chromosome::new(c2)))
}

/// SBX spread factor for a uniform draw `u` in `[0, 1)`.
pub fn sbx_beta(u: f64, eta: f64) -> f64 {
    let e = 1.0 / (eta + 1.0);
    if u <= 0.5 {
        (2.0 * u).powf(e)
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(e)
    }
}

/// Unrounded SBX children of genes `g1`, `g2`.
pub fn sbx_pair(g1: f64, g2: f64, u: f64, eta: f64) -> (f64, f64) {
    let beta = sbx_beta(u, eta);
    (
        0.5 * ((1.0 + beta) * g1 + (1.0 - beta) * g2),
        0.5 * ((1.0 - beta) * g1 + (1.0 + beta) * g2),
    )
}

/// Common depth simulated binary crossover over the shared gene positions.
///
/// Each common position takes part with probability `p_gene`; children are
/// rounded and clamped to the width bounds. Genes past the shorter length are
/// untouched.
pub fn cdsbc<R: Rng + ?Sized>(
    c1: &Chromosome,
    c2: &Chromosome,
    eta: f64,
    p_gene: f64,
    space: &SearchSpace,
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    let mut a = c1.genes().to_vec();
    let mut b = c2.genes().to_vec();
    let common = a.len().min(b.len());
    for i in 0..common {
        if rng.random::<f64>() >= p_gene {
            continue;
        }
        let u: f64 = rng.random();
        let (x, y) = sbx_pair(a[i] as f64, b[i] as f64, u, eta);
        a[i] = space.clamp_width(x);
        b[i] = space.clamp_width(y);
    }
    (Chromosome::new(a), Chromosome::new(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OffspringConfig {
    pub crossover_prob: f64,
    /// SBX distribution index.
    pub eta: f64,
    /// Probability that a common-depth gene undergoes SBX.
    pub p_gene: f64,
    /// Optional Gaussian width mutation (probability 1/len per gene, step σ2/10).
    pub mutation: bool,
}

impl Default for OffspringConfig {
    fn default() -> Self {
        Self {
            crossover_prob: 0.5,
            eta: 15.0,
            p_gene: 1.0,
            mutation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Offspring {
    pub chromosomes: Vec<Chromosome>,
    /// Indices chosen for crossover (including pairs skipped for lack of a cut point).
    pub crossover_indices: Vec<usize>,
}

/// Guided samples, with `⌊p_c·N⌋` of them replaced by a crossover child of
/// the same-index parent.
pub fn generate_offspring<R: Rng + ?Sized>(
    parents: &[Chromosome],
    sampler: &SamplerParams,
    space: &SearchSpace,
    cfg: &OffspringConfig,
    rng: &mut R,
) -> Result<Offspring> {
    if !(0.0..=1.0).contains(&cfg.crossover_prob) {
        return Err(Error::Config(format!("crossover probability {} outside [0,1]", cfg.crossover_prob)));
    }
    if cfg.eta <= 0.0 {
        return Err(Error::Config("SBX distribution index must be positive".into()));
    }
    let n = parents.len();
    let mut q = sample_population(sampler, space, n, rng);
    let k = ((cfg.crossover_prob * n as f64) + 1e-9).floor() as usize;
    let picked = index::sample(rng, n, k.min(n)).into_vec();
    for &i in &picked {
        let (p1, p2) = (&parents[i], &q[i]);
        let common = p1.depth().min(p2.depth());
        if common < 2 {
            continue;
        }
        let cut = rng.random_range(1..common);
        let (c1, c2) = spdc(p1, p2, cut)?;
        let (c1, c2) = cdsbc(&c1, &c2, cfg.eta, cfg.p_gene, space, rng);
        q[i] = if rng.random_bool(0.5) { c1 } else { c2 };
    }
    if cfg.mutation {
        let step = sampler.width_sigma / 10.0;
        for c in &mut q {
            let mut genes = c.genes().to_vec();
            let p = 1.0 / genes.len() as f64;
            for g in &mut genes {
                if rng.random_bool(p) {
                    let z: f64 = rng.sample(StandardNormal);
                    *g = space.clamp_width(*g as f64 + step * z);
                }
            }
            *c = Chromosome::new(genes);
        }
    }
    Ok(Offspring {
        chromosomes: q,
        crossover_indices: picked,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;
    use crate::search_space::init_sampler_params;

    fn fp(a: f64, p: u64) -> FitnessPoint {
        FitnessPoint::new(a, p)
    }

    #[test]
    fn sort_hand_examples() {
        let pts = [fp(0.9, 100), fp(0.8, 50), fp(0.8, 200)];
        assert_eq!(non_dominated_sort(&pts), vec![vec![0, 1], vec![2]]);
        let same = [fp(0.5, 10); 4];
        assert_eq!(non_dominated_sort(&same), vec![vec![0, 1, 2, 3]]);
        let chain = [fp(0.9, 10), fp(0.8, 20), fp(0.7, 30)];
        assert_eq!(non_dominated_sort(&chain), vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn crowding_hand_examples() {
        assert_eq!(crowding_distance(&[fp(0.1, 1), fp(0.2, 2)]), vec![f64::INFINITY; 2]);
        let d = crowding_distance(&[fp(0.7, 30), fp(0.8, 20), fp(0.9, 10)]);
        assert_eq!(d[1], 2.0);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        let d = crowding_distance(&[fp(0.5, 5); 4]);
        assert_eq!(d.iter().filter(|v| v.is_infinite()).count(), 2);
        assert_eq!(d.iter().filter(|&&v| v == 0.0).count(), 2);
    }

    #[test]
    fn tournament_rules() {
        let pop = RankedPopulation::new(
            vec![Chromosome::new(vec![1]), Chromosome::new(vec![2])],
            vec![fp(0.9, 10), fp(0.8, 20)],
        )
        .unwrap();
        assert_eq!(pop.rank, vec![1, 2]);
        assert_eq!(pop.better(0, 1), std::cmp::Ordering::Less);
        // the rank-2 member only wins when it is drawn twice
        let mut rng = SeedTree::new(1).stream("t", &[]);
        let wins = (0..10_000).filter(|_| binary_tournament(&pop, &mut rng) == 1).count();
        assert!((wins as f64 / 10_000.0 - 0.25).abs() <= 0.03, "{wins}");

        let front = RankedPopulation::new(
            vec![Chromosome::new(vec![1]); 3],
            vec![fp(0.7, 10), fp(0.8, 20), fp(0.9, 30)],
        )
        .unwrap();
        assert_eq!(front.rank, vec![1, 1, 1]);
        assert_eq!(front.better(0, 1), std::cmp::Ordering::Less);
    }

    #[test]
    fn tournament_full_tie_is_fair() {
        let pop = RankedPopulation::new(vec![Chromosome::new(vec![1]); 2], vec![fp(0.5, 1); 2]).unwrap();
        let mut rng = SeedTree::new(2).stream("t", &[]);
        let mut picks = [0usize; 2];
        for _ in 0..10_000 {
            picks[binary_tournament(&pop, &mut rng)] += 1;
        }
        assert!((picks[0] as f64 / 10_000.0 - 0.5).abs() <= 0.03, "{picks:?}");
    }

    #[test]
    fn survivors_fill_by_front_then_crowding() {
        let pts = vec![fp(0.9, 100), fp(0.8, 50), fp(0.7, 10), fp(0.85, 70), fp(0.6, 200)];
        let pop = RankedPopulation::new(vec![Chromosome::new(vec![1]); 5], pts).unwrap();
        assert_eq!(pop.fronts[0], vec![0, 1, 2, 3]);
        let s = pop.select_survivors(3);
        assert_eq!(s.len(), 3);
        // boundaries (infinite distance) survive
        assert!(s.contains(&0) && s.contains(&2));
        assert_eq!(pop.select_survivors(5).len(), 5);
    }

    #[test]
    fn spdc_examples() {
        let p1 = Chromosome::new(vec![11, 12, 13, 14]);
        let p2 = Chromosome::new(vec![21, 22, 23]);
        let (c1, c2) = spdc(&p1, &p2, 2).unwrap();
        assert_eq!(c1.genes(), &[11, 12, 23]);
        assert_eq!(c2.genes(), &[21, 22, 13, 14]);
        let (a, b) = spdc(&p1, &p1, 1).unwrap();
        assert_eq!((a, b), (p1.clone(), p1.clone()));
        assert!(spdc(&p1, &p2, 3).is_err());
        assert!(spdc(&p1, &p2, 0).is_err());
    }

    #[test]
    fn sbx_examples() {
        assert_eq!(sbx_beta(0.5, 15.0), 1.0);
        assert_eq!(sbx_pair(100.0, 200.0, 0.5, 15.0), (100.0, 200.0));
        // β = 5^(1/16)
        let beta = sbx_beta(0.9, 15.0);
        assert!((beta - 5f64.powf(1.0 / 16.0)).abs() < 1e-15);
        assert!((beta - 1.1058).abs() < 1e-4);
        let (x, y) = sbx_pair(100.0, 200.0, 0.9, 15.0);
        assert!((x + y - 300.0).abs() < 1e-12);
        let space = SearchSpace::standard();
        assert_eq!((space.clamp_width(x), space.clamp_width(y)), (95, 205));
    }

    #[test]
    fn offspring_counts() {
        let space = SearchSpace::standard();
        let sampler = init_sampler_params(&space);
        let mut rng = SeedTree::new(3).stream("o", &[]);
        let parents = crate::search_space::sample_population(&sampler, &space, 100, &mut rng);

        let cfg0 = OffspringConfig {
            crossover_prob: 0.0,
            ..Default::default()
        };
        let off = generate_offspring(&parents, &sampler, &space, &cfg0, &mut SeedTree::new(4).stream("o", &[])).unwrap();
        let sampled = sample_population(&sampler, &space, 100, &mut SeedTree::new(4).stream("o", &[]));
        assert_eq!(off.chromosomes, sampled);
        assert!(off.crossover_indices.is_empty());

        let off = generate_offspring(
            &parents,
            &sampler,
            &space,
            &OffspringConfig::default(),
            &mut SeedTree::new(5).stream("o", &[]),
        )
        .unwrap();
        assert_eq!(off.crossover_indices.len(), 50);
        assert_eq!(off.chromosomes.len(), 100);
        assert!(off.chromosomes.iter().all(|c| space.contains(c)));

        let mutated = OffspringConfig {
            mutation: true,
            ..Default::default()
        };
        let off = generate_offspring(&parents, &sampler, &space, &mutated, &mut SeedTree::new(6).stream("o", &[])).unwrap();
        assert!(off.chromosomes.iter().all(|c| space.contains(c)));

        let bad = OffspringConfig {
            crossover_prob: 1.5,
            ..Default::default()
        };
        assert!(generate_offspring(&parents, &sampler, &space, &bad, &mut rng).is_err());
    }
}
