//! Exact inference by full enumeration of the Gibbs law, for small N.
//!
//! Configurations are visited in Gray-code order so consecutive states
//! differ in one site and the potential and local fields update in
//! O(degree) per step.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::meanfield;
use crate::model::{Allocation, Instance, WeightSystem};

/// Default largest N accepted by the enumeration routines.
pub const DEFAULT_ENUMERATION_CAP: usize = 20;

/// Largest number of candidate allocations brute-force search will try.
pub const MAX_CANDIDATE_ALLOCATIONS: usize = 1 << 20;

/// The Gibbs law `P(y) ∝ exp(w1'y + y'w2 y)` computed by enumeration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactDistribution {
    pub log_partition: f64,
    pub marginals: Vec<f64>,
    /// `P(y)` indexed by the bit pattern of `y` (bit `i` is `y_i`).
    pub probs: Option<Vec<f64>>,
}

impl ExactDistribution {
    /// `Σ_i μ_i^P`, the expected number of units choosing 1.
    pub fn welfare(&self) -> f64 {
        self.marginals.iter().sum()
    }
}

fn check_cap(n: usize, cap: usize) -> Result<()> {
    if n > cap || n >= usize::BITS as usize - 1 {
        return Err(Error::EnumerationInfeasible { n, cap });
    }
    Ok(())
}

/// Running sums of `exp(Φ(y) - shift)` with a shift that tracks the largest
/// potential seen so far.
struct Accumulator {
    shift: f64,
    total: f64,
    count: f64,
}

impl Accumulator {
    /// Adds a configuration; returns its weight relative to the current
    /// shift and the factor by which earlier sums were rescaled.
    fn add(&mut self, phi: f64, ones: u32) -> (f64, f64) {
        let mut rescale = 1.0;
        if phi > self.shift {
            rescale = (self.shift - phi).exp();
            self.total *= rescale;
            self.count *= rescale;
            self.shift = phi;
        }
        let weight = (phi - self.shift).exp();
        self.total += weight;
        self.count += weight * ones as f64;
        (weight, rescale)
    }
}

/// Walks all `2^N` configurations in Gray-code order and calls `visit`
/// with the bit pattern, its potential and the number of ones.
fn gray_walk(w: &WeightSystem, mut visit: impl FnMut(u64, f64, u32)) {
    let n = w.n();
    let mut field = w.w1.clone();
    let mut phi = 0.0;
    let mut state = 0u64;
    visit(0, 0.0, 0);
    for t in 1..(1u64 << n) {
        let k = t.trailing_zeros() as usize;
        let on = state >> k & 1 == 0;
        let sign = if on { 1.0 } else { -1.0 };
        phi += sign * field[k];
        state ^= 1 << k;
        for &(j, wkj) in w.row(k) {
            field[j] += sign * 2.0 * wkj;
        }
        visit(state, phi, state.count_ones());
    }
}

/// Log partition function and expected number of ones, without
/// materialising marginals.
pub fn log_partition_and_welfare(w: &WeightSystem, cap: usize) -> Result<(f64, f64)> {
    check_cap(w.n(), cap)?;
    let mut acc = Accumulator { shift: 0.0, total: 0.0, count: 0.0 };
    gray_walk(w, |_, phi, ones| {
        acc.add(phi, ones);
    });
    Ok((acc.shift + acc.total.ln(), acc.count / acc.total))
}

/// Enumerates the Gibbs law of `w`: log partition function and exact
/// marginals. Probabilities are kept only when `with_probs` is set.
pub fn enumerate_gibbs(w: &WeightSystem, cap: usize, with_probs: bool) -> Result<ExactDistribution> {
    let n = w.n();
    check_cap(n, cap)?;
    let mut acc = Accumulator { shift: 0.0, total: 0.0, count: 0.0 };
    let mut ones_mass = vec![0.0; n];
    let mut energies = if with_probs { vec![0.0; 1 << n] } else { Vec::new() };
    gray_walk(w, |state, phi, ones| {
        let (weight, rescale) = acc.add(phi, ones);
        if rescale != 1.0 {
            ones_mass.iter_mut().for_each(|m| *m *= rescale);
        }
        let mut bits = state;
        while bits != 0 {
            let i = bits.trailing_zeros() as usize;
            ones_mass[i] += weight;
            bits &= bits - 1;
        }
        if with_probs {
            energies[state as usize] = phi;
        }
    });
    let log_partition = acc.shift + acc.total.ln();
    let marginals = ones_mass.iter().map(|m| m / acc.total).collect();
    let probs =
        with_probs.then(|| energies.iter().map(|phi| (phi - log_partition).exp()).collect());
    Ok(ExactDistribution { log_partition, marginals, probs })
}

/// Exact welfare `Σ_i E_P[Y_i]` under allocation `d`.
pub fn exact_welfare(instance: &Instance, d: &Allocation, cap: usize) -> Result<f64> {
    let w = instance.weights(d);
    Ok(log_partition_and_welfare(&w, cap)?.1)
}

/// All treated sets of size at most `kappa`, in lexicographic order of
/// their sorted index sequences (so the empty set comes first).
pub fn allocations_up_to(n: usize, kappa: usize) -> Vec<Vec<usize>> {
    fn extend(n: usize, kappa: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        out.push(cur.clone());
        if cur.len() == kappa {
            return;
        }
        for i in start..n {
            cur.push(i);
            extend(n, kappa, i + 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    extend(n, kappa.min(n), 0, &mut Vec::new(), &mut out);
    out
}

/// `Σ_{k≤κ} C(n, k)`, saturating.
pub fn count_allocations(n: usize, kappa: usize) -> usize {
    let mut total: usize = 0;
    let mut c: u128 = 1;
    for k in 0..=kappa.min(n) {
        total = total.saturating_add(usize::try_from(c).unwrap_or(usize::MAX));
        c = c * (n - k) as u128 / (k + 1) as u128;
    }
    total
}

/// Evaluates every allocation with at most `kappa` treated units and
/// returns the best one. Near-ties (relative 1e-12) go to the
/// lexicographically smallest treated set.
pub fn search_allocations<F>(n: usize, kappa: usize, eval: F) -> Result<(Allocation, f64)>
where
    F: Fn(&Allocation) -> Result<f64> + Sync,
{
    let count = count_allocations(n, kappa);
    if count > MAX_CANDIDATE_ALLOCATIONS {
        return Err(Error::invalid(format!(
            "{count} candidate allocations exceed the search limit {MAX_CANDIDATE_ALLOCATIONS}"
        )));
    }
    let sets = allocations_up_to(n, kappa);
    let values: Vec<f64> = sets
        .par_iter()
        .map(|s| eval(&Allocation::from_treated(n, s)?))
        .collect::<Result<_>>()?;
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        let b = values[best];
        if v > b + 1e-12 * b.abs().max(1.0) {
            best = k;
        }
    }
    Ok((Allocation::from_treated(n, &sets[best])?, values[best]))
}

/// Exact optimum of `exact_welfare` subject to at most `kappa` treated.
pub fn brute_force_optimal(instance: &Instance, kappa: usize, cap: usize) -> Result<(Allocation, f64)> {
    check_cap(instance.n(), cap)?;
    search_allocations(instance.n(), kappa, |d| exact_welfare(instance, d, cap))
}

/// `KL(Q || P)` for the product-Bernoulli law `Q` with means `mu`.
pub fn exact_kl(mu: &[f64], w: &WeightSystem, p: &ExactDistribution) -> Result<f64> {
    if mu.len() != w.n() || p.marginals.len() != w.n() {
        return Err(Error::invalid("dimension mismatch in exact_kl"));
    }
    if let Some((index, &value)) = mu.iter().enumerate().find(|(_, &m)| !(m > 0.0 && m < 1.0)) {
        return Err(Error::Domain { index, value });
    }
    Ok(p.log_partition - meanfield::objective(mu, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{logistic, ThetaParams};
    use crate::network::{Covariates, Network, SimilarityKernel};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_weights(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> WeightSystem {
        let mut w2 = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in (i + 1)..n {
                if rng.gen_bool(0.5) {
                    let v = rng.gen_range(-scale..scale);
                    w2[i][j] = v;
                    w2[j][i] = v;
                }
            }
        }
        let w1 = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        WeightSystem::from_dense(w1, &w2).unwrap()
    }

    /// Direct enumeration in natural order, no incremental updates.
    fn naive(w: &WeightSystem) -> (f64, Vec<f64>, Vec<f64>) {
        let n = w.n();
        let energies: Vec<f64> = (0..1u32 << n)
            .map(|b| w.energy(&(0..n).map(|i| b >> i & 1 == 1).collect::<Vec<_>>()))
            .collect();
        let z: f64 = energies.iter().map(|e| e.exp()).sum();
        let probs: Vec<f64> = energies.iter().map(|e| e.exp() / z).collect();
        let marg = (0..n)
            .map(|i| (0..1usize << n).filter(|b| b >> i & 1 == 1).map(|b| probs[b]).sum())
            .collect();
        (z.ln(), marg, probs)
    }

    #[test]
    fn single_unit_at_zero() {
        let p = enumerate_gibbs(&WeightSystem::independent(vec![0.0]), 20, true).unwrap();
        assert_abs_diff_eq!(p.marginals[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(p.probs.unwrap()[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn coupled_pair_closed_form() {
        for a in [-1.5, 0.3, 2.0] {
            let w = WeightSystem::from_dense(vec![0.0, 0.0], &[vec![0.0, a], vec![a, 0.0]]).unwrap();
            let p = enumerate_gibbs(&w, 20, true).unwrap();
            let e = (2.0 * a).exp();
            assert_abs_diff_eq!(p.probs.unwrap()[3], e / (3.0 + e), epsilon = 1e-14);
        }
    }

    #[test]
    fn matches_naive_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=10 {
            let w = random_weights(&mut rng, n, 1.5);
            let (lz, marg, probs) = naive(&w);
            let p = enumerate_gibbs(&w, 20, true).unwrap();
            assert_abs_diff_eq!(p.log_partition, lz, epsilon = 1e-10);
            let ps = p.probs.as_ref().unwrap();
            assert!((ps.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for i in 0..n {
                assert!((p.marginals[i] - marg[i]).abs() <= 1e-12);
                assert!(p.marginals[i] > 0.0 && p.marginals[i] < 1.0);
            }
            for (a, b) in ps.iter().zip(&probs) {
                assert!((a - b).abs() <= 1e-12);
            }
            let (lz2, wel) = log_partition_and_welfare(&w, 20).unwrap();
            assert_abs_diff_eq!(lz2, p.log_partition, epsilon = 1e-12);
            assert_abs_diff_eq!(wel, p.welfare(), epsilon = 1e-12);
        }
    }

    #[test]
    fn stable_under_large_potentials() {
        let w = WeightSystem::independent(vec![800.0, -800.0, 900.0]);
        let p = enumerate_gibbs(&w, 20, false).unwrap();
        assert_abs_diff_eq!(p.log_partition, 1700.0, epsilon = 1e-9);
        assert_abs_diff_eq!(p.welfare(), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn cap_enforced() {
        let w = WeightSystem::independent(vec![0.0; 6]);
        assert!(matches!(
            enumerate_gibbs(&w, 5, false),
            Err(Error::EnumerationInfeasible { n: 6, cap: 5 })
        ));
    }

    #[test]
    fn independent_welfare_is_sum_of_logistics() {
        let inst = Instance::new(
            Network::empty(4),
            Covariates::scalar(&[0.0, 1.0, 0.0, 1.0]).unwrap(),
            SimilarityKernel::AbsDiff,
            ThetaParams::set1(1.0),
        )
        .unwrap();
        let d = Allocation::from_treated(4, &[1, 2]).unwrap();
        let w = inst.weights(&d);
        let expect: f64 = w.w1.iter().map(|&v| logistic(v)).sum();
        assert_abs_diff_eq!(exact_welfare(&inst, &d, 20).unwrap(), expect, epsilon = 1e-13);
    }

    #[test]
    fn allocation_order_is_lexicographic() {
        let sets = allocations_up_to(3, 2);
        let expect: Vec<Vec<usize>> =
            vec![vec![], vec![0], vec![0, 1], vec![0, 2], vec![1], vec![1, 2], vec![2]];
        assert_eq!(sets, expect);
        assert_eq!(count_allocations(15, 4), 1941);
        assert_eq!(count_allocations(15, 15), 32768);
        assert_eq!(allocations_up_to(5, 9).len(), 32);
    }

    #[test]
    fn ties_go_to_smallest_set() {
        let (d, v) = search_allocations(4, 2, |d| Ok(d.treated_count().min(1) as f64)).unwrap();
        assert_eq!(d.treated(), vec![0]);
        assert_eq!(v, 1.0);
    }

    #[test]
    fn kl_zero_for_independent_units() {
        let w = WeightSystem::independent(vec![-1.0, 0.5, 2.0]);
        let p = enumerate_gibbs(&w, 20, false).unwrap();
        let mu: Vec<f64> = w.w1.iter().map(|&v| logistic(v)).collect();
        assert_abs_diff_eq!(exact_kl(&mu, &w, &p).unwrap(), 0.0, epsilon = 1e-12);
        assert!(matches!(exact_kl(&[0.0, 0.5, 0.5], &w, &p), Err(Error::Domain { index: 0, .. })));
    }
}
