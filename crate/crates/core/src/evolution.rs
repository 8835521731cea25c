//! Genetic search over derivation trees: subtree-regenerating mutation,
//! same-symbol subtree crossover, elitism and tournament selection.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use thiserror::Error;

use crate::constraints::FitnessScore;
use crate::grammar::{DerivationTree, Generator, GrammarError, DEFAULT_DEPTH_BUDGET};
use crate::rng::Rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("invalid evolution setting: {0}")]
    Config(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub elite_fraction: f64,
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub tournament_size: usize,
    pub seed: u64,
}

impl Default for EvolutionConfig {
    fn default() -> Self {
        EvolutionConfig {
            population_size: 100,
            elite_fraction: 0.1,
            mutation_rate: 0.8,
            crossover_rate: 0.6,
            tournament_size: 3,
            seed: 0,
        }
    }
}

impl EvolutionConfig {
    pub fn validate(&self) -> Result<(), EvolutionError> {
        let bad = |m: &str| Err(EvolutionError::Config(m.to_string()));
        if self.population_size == 0 {
            return bad("population_size must be at least 1");
        }
        if !(self.elite_fraction > 0.0 && self.elite_fraction < 1.0) {
            return bad("elite_fraction must lie strictly between 0 and 1");
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) || !(0.0..=1.0).contains(&self.crossover_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if self.tournament_size < 2 {
            return bad("tournament_size must be at least 2");
        }
        Ok(())
    }

    /// Number of elites carried unchanged each generation (at least one).
    pub fn elite_count(&self) -> usize {
        ((self.population_size as f64 * self.elite_fraction + 1e-9).floor() as usize).clamp(1, self.population_size)
    }
}

/// Scores one candidate. Implementations must be pure so scoring can run
/// in parallel.
pub trait Fitness: Sync {
    fn score(&self, tree: &DerivationTree) -> FitnessScore;
}

impl<F: Fn(&DerivationTree) -> FitnessScore + Sync> Fitness for F {
    fn score(&self, tree: &DerivationTree) -> FitnessScore {
        self(tree)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Member {
    pub tree: DerivationTree,
    pub text: String,
    pub fitness: FitnessScore,
    /// False for elites copied from the previous generation.
    pub fresh: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub members: Vec<Member>,
    pub generation: u64,
}

/// Higher fitness first. Callers shuffle before a stable sort so equal
/// scores are ordered at random rather than by some property of the text.
pub(crate) fn rank(a: &Member, b: &Member) -> Ordering {
    b.fitness.value().total_cmp(&a.fitness.value())
}

fn score_all(trees: Vec<(DerivationTree, bool)>, fitness: &dyn Fitness) -> Vec<Member> {
    trees
        .into_par_iter()
        .map(|(tree, fresh)| {
            let text = tree.text();
            let fitness = fitness.score(&tree);
            Member { tree, text, fitness, fresh }
        })
        .collect()
}

impl Population {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&Member> {
        self.members.iter().min_by(|a, b| rank(a, b))
    }

    pub fn rescore(&mut self, fitness: &dyn Fitness) {
        self.members.par_iter_mut().for_each(|m| m.fitness = fitness.score(&m.tree));
    }
}

/// Replaces one uniformly chosen nonterminal subtree with a fresh random
/// expansion of the same symbol. The tree is returned unchanged when the
/// remaining depth budget cannot fit any expansion.
pub fn mutate(tree: &DerivationTree, generator: &Generator<'_>, rng: &mut Rng) -> DerivationTree {
    let paths = tree.nonterminal_paths();
    let path = &paths[rng.gen_range(0..paths.len())];
    let symbol = tree.get(path).and_then(DerivationTree::symbol).expect("nonterminal path").to_string();
    let budget = DEFAULT_DEPTH_BUDGET.saturating_sub(tree.nonterminal_depth(path));
    let mut out = tree.clone();
    if let Ok(sub) = generator.generate(&symbol, budget, rng) {
        out.replace(path, sub);
    }
    out
}

/// Swaps a pair of subtrees rooted at the same nonterminal below both roots.
/// Parents without such a shared symbol, or equal parents, come back as is.
pub fn crossover(a: &DerivationTree, b: &DerivationTree, rng: &mut Rng) -> (DerivationTree, DerivationTree) {
    if a == b {
        return (a.clone(), b.clone());
    }
    let below_root = |t: &DerivationTree| -> Vec<(String, Vec<usize>)> {
        t.nonterminal_paths()
            .into_iter()
            .filter(|p| !p.is_empty())
            .map(|p| (t.get(&p).and_then(DerivationTree::symbol).unwrap_or_default().to_string(), p))
            .collect()
    };
    let (pa, pb) = (below_root(a), below_root(b));
    let sa: BTreeSet<&str> = pa.iter().map(|(s, _)| s.as_str()).collect();
    let shared: Vec<&str> = pb.iter().map(|(s, _)| s.as_str()).filter(|s| sa.contains(s)).collect::<BTreeSet<_>>().into_iter().collect();
    if shared.is_empty() {
        return (a.clone(), b.clone());
    }
    let symbol = shared[rng.gen_range(0..shared.len())];
    let pick = |paths: &[(String, Vec<usize>)], rng: &mut Rng| -> Vec<usize> {
        let matching: Vec<&Vec<usize>> = paths.iter().filter(|(s, _)| s == symbol).map(|(_, p)| p).collect();
        matching[rng.gen_range(0..matching.len())].clone()
    };
    let (path_a, path_b) = (pick(&pa, rng), pick(&pb, rng));
    let (mut ca, mut cb) = (a.clone(), b.clone());
    let sub_b = b.get(&path_b).expect("path").clone();
    let sub_a = ca.replace(&path_a, sub_b).expect("path");
    cb.replace(&path_b, sub_a);
    (ca, cb)
}

fn tournament<'p>(pop: &'p Population, size: usize, rng: &mut Rng) -> &'p Member {
    let n = pop.members.len();
    let mut best = &pop.members[rng.gen_range(0..n)];
    for _ in 1..size {
        let m = &pop.members[rng.gen_range(0..n)];
        if rank(m, best) == Ordering::Less {
            best = m;
        }
    }
    best
}

/// Builds a scored population of `population_size` members from `good`
/// trees (a uniform random subset when there are too many), topping up
/// with random expansions of `symbol`.
pub fn seed_population(
    good: &[DerivationTree],
    config: &EvolutionConfig,
    generator: &Generator<'_>,
    symbol: &str,
    fitness: &dyn Fitness,
    rng: &mut Rng,
) -> Result<Population, EvolutionError> {
    config.validate()?;
    let size = config.population_size;
    let mut trees: Vec<(DerivationTree, bool)> = if good.len() > size {
        let mut idx = sample(rng, good.len(), size).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| (good[i].clone(), true)).collect()
    } else {
        good.iter().map(|t| (t.clone(), true)).collect()
    };
    while trees.len() < size {
        trees.push((generator.generate(symbol, DEFAULT_DEPTH_BUDGET, rng)?, true));
    }
    Ok(Population { members: score_all(trees, fitness), generation: 0 })
}

/// One generation: elites survive unchanged, the rest are bred by
/// tournament selection, crossover and mutation, and everything is
/// rescored.
pub fn evolve_step(
    pop: &Population,
    fitness: &dyn Fitness,
    config: &EvolutionConfig,
    generator: &Generator<'_>,
    rng: &mut Rng,
) -> Population {
    let n = pop.members.len();
    let mut ranked: Vec<&Member> = pop.members.iter().collect();
    ranked.shuffle(rng);
    ranked.sort_by(|a, b| rank(a, b));
    let elites = config.elite_count().min(n);
    let mut next: Vec<(DerivationTree, bool)> = ranked[..elites].iter().map(|m| (m.tree.clone(), false)).collect();
    while next.len() < n {
        let p1 = tournament(pop, config.tournament_size, rng);
        let p2 = tournament(pop, config.tournament_size, rng);
        let (c1, c2) = if rng.gen_bool(config.crossover_rate) {
            crossover(&p1.tree, &p2.tree, rng)
        } else {
            (p1.tree.clone(), p2.tree.clone())
        };
        for child in [c1, c2] {
            if next.len() < n {
                let child = if rng.gen_bool(config.mutation_rate) { mutate(&child, generator, rng) } else { child };
                next.push((child, true));
            }
        }
    }
    Population { members: score_all(next, fitness), generation: pop.generation + 1 }
}
