//! Treatment allocation rules under a capacity constraint.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact;
use crate::meanfield::{self, MeanFieldSolution, SolverSettings};
use crate::model::{Allocation, Instance};
use crate::seed;

/// Relative gap below which two welfare values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

fn beats(candidate: f64, incumbent: f64) -> bool {
    candidate > incumbent + TIE_TOLERANCE * incumbent.abs().max(1.0)
}

/// `floor(fraction · n)`, the default capacity rule.
pub fn kappa_from_fraction(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64 + 1e-9).floor() as usize).min(n)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyStep {
    pub round: usize,
    pub unit: usize,
    pub delta: f64,
    /// Candidate solves in this round that hit the iteration limit.
    pub nonconverged: usize,
}

#[derive(Debug, Clone)]
pub struct GreedyResult {
    pub allocation: Allocation,
    /// Mean-field solution at the final allocation.
    pub solution: MeanFieldSolution,
    pub trace: Vec<GreedyStep>,
}

impl GreedyResult {
    /// Approximated welfare `W̃` of the chosen allocation.
    pub fn welfare(&self) -> f64 {
        self.solution.welfare()
    }
}

/// Greedy maximisation of approximated welfare: starting from no treatment,
/// treat the unit with the largest welfare gain until `kappa` units are
/// treated. Ties go to the smallest index.
pub fn greedy(instance: &Instance, kappa: usize, settings: &SolverSettings, seed: u64) -> Result<GreedyResult> {
    let n = instance.n();
    if kappa > n {
        return Err(Error::invalid(format!("kappa {kappa} exceeds the number of units {n}")));
    }
    let mut d = Allocation::none(n);
    let mut incumbent = meanfield::solve_allocation(instance, &d, settings, seed::derive(seed, &[0]), None);
    let mut trace = Vec::with_capacity(kappa);
    for round in 1..=kappa {
        let base = incumbent.welfare();
        let warm = settings.warm_start.then_some(incumbent.mu.as_slice());
        let candidates: Vec<(usize, MeanFieldSolution)> = (0..n)
            .into_par_iter()
            .filter(|&i| !d.is_treated(i))
            .map(|i| {
                let s = seed::derive(seed, &[round as u64, i as u64]);
                (i, meanfield::solve_allocation(instance, &d.with_treated(i), settings, s, warm))
            })
            .collect();
        let nonconverged = candidates.iter().filter(|(_, s)| !s.converged).count();
        let mut best = 0;
        for k in 1..candidates.len() {
            if beats(candidates[k].1.welfare(), candidates[best].1.welfare()) {
                best = k;
            }
        }
        let (unit, solution) = candidates.into_iter().nth(best).expect("an untreated unit remains");
        trace.push(GreedyStep { round, unit, delta: solution.welfare() - base, nonconverged });
        d = d.with_treated(unit);
        incumbent = solution;
    }
    Ok(GreedyResult { allocation: d, solution: incumbent, trace })
}

fn allocation_seed(master: u64, d: &Allocation) -> u64 {
    let tags: Vec<u64> = d.treated().into_iter().map(|i| i as u64).collect();
    seed::derive(master, &tags)
}

/// Brute-force search over all allocations with at most `kappa` treated
/// units, scored by approximated welfare.
pub fn bfva(instance: &Instance, kappa: usize, settings: &SolverSettings, seed: u64) -> Result<(Allocation, f64)> {
    exact::search_allocations(instance.n(), kappa, |d| {
        let s = allocation_seed(seed, d);
        Ok(meanfield::approx_welfare(instance, d, settings, s).welfare())
    })
}

/// Draws an allocation with exactly `kappa` treated units uniformly.
pub fn random_allocation(n: usize, kappa: usize, seed: u64) -> Result<Allocation> {
    if kappa > n {
        return Err(Error::invalid(format!("kappa {kappa} exceeds the number of units {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let treated = index::sample(&mut rng, n, kappa).into_vec();
    Allocation::from_treated(n, &treated)
}

/// Mean welfare over `draws` uniform allocations with exactly `kappa`
/// treated units. `evaluator` receives each allocation and a seed for any
/// randomness it needs.
pub fn random_allocation_welfare<F>(
    instance: &Instance,
    kappa: usize,
    draws: usize,
    seed: u64,
    evaluator: F,
) -> Result<f64>
where
    F: Fn(&Allocation, u64) -> Result<f64> + Sync,
{
    if draws == 0 {
        return Err(Error::invalid("draws must be at least 1"));
    }
    let values: Vec<f64> = (0..draws)
        .into_par_iter()
        .map(|r| {
            let d = random_allocation(instance.n(), kappa, seed::derive(seed, &[r as u64, 0]))?;
            evaluator(&d, seed::derive(seed, &[r as u64, 1]))
        })
        .collect::<Result<_>>()?;
    Ok(values.iter().sum::<f64>() / draws as f64)
}

pub fn no_treatment(instance: &Instance) -> Allocation {
    Allocation::none(instance.n())
}
