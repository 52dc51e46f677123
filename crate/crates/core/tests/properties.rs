mod common;

use approx::assert_abs_diff_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{mild_instance, random_instance};
use netgame_core::allocate::{bfva, greedy};
use netgame_core::bounds::{guarantee_factor, kl_upper_bound, zeta};
use netgame_core::dynamics::{mcmc_welfare, stationarity_check, SamplerSettings};
use netgame_core::exact::{brute_force_optimal, enumerate_gibbs, exact_kl, exact_welfare};
use netgame_core::meanfield::{self, instance_certified, SolverSettings, SweepMode};
use netgame_core::model::{Allocation, Instance, ThetaParams};

/// Settings resolving fixed points well below the default FOC tolerance.
fn tight() -> SolverSettings {
    SolverSettings { foc_tol: 1e-13, ..SolverSettings::default() }
}

fn random_allocation(n: usize, rng: &mut impl Rng) -> Allocation {
    Allocation::from_bools((0..n).map(|_| rng.gen_bool(0.4)).collect())
}

/// ζ written out from scratch over every unit, without the summary struct.
fn zeta_oracle(inst: &Instance) -> f64 {
    let t = inst.theta();
    let n = inst.n();
    let dlogit = |x: f64| {
        let p = 1.0 / (1.0 + (-x).exp());
        p * (1.0 - p)
    };
    let x2 = inst.x_theta2();
    let x3 = inst.x_theta3();
    let min2 = x2.iter().cloned().fold(f64::MAX, f64::min);
    let max2 = x2.iter().cloned().fold(f64::MIN, f64::max);
    let max3 = x3.iter().cloned().fold(f64::MIN, f64::max);
    let mut m_hi = f64::MIN;
    let mut m_lo = f64::MAX;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m_hi = m_hi.max(inst.similarity().get(i, j));
                m_lo = m_lo.min(inst.similarity().get(i, j));
            }
        }
    }
    let degrees: Vec<usize> = (0..n).map(|i| inst.network().neighbors(i).len()).collect();
    let (dmax, dmin) = (*degrees.iter().max().unwrap() as f64, *degrees.iter().min().unwrap() as f64);
    let lo = t.theta0 + min2;
    let hi = t.theta0 + t.theta1 + max2 + max3 + t.a_n * (t.theta4 + t.theta5 + t.theta6) * m_hi * dmax;
    dlogit(lo).min(dlogit(hi)) * (t.a_n * t.theta4 * dmin * m_lo + t.theta1) / n as f64
}

#[test]
fn zeta_matches_transcription() {
    for s in 0..1000u64 {
        let n = 2 + (s % 29) as usize;
        let inst = mild_instance(n, s);
        let z = zeta(&inst).zeta;
        assert!((z - zeta_oracle(&inst)).abs() <= 1e-12 * z.abs().max(1e-300), "seed {s}");
    }
}

#[test]
fn guarantee_factor_is_continuous_at_zero_curvature() {
    for &g in &[0.01, 0.3, 1.0] {
        let at_zero = guarantee_factor(0.0, g).unwrap();
        assert_eq!(at_zero, g);
        assert_abs_diff_eq!(guarantee_factor(1e-9, g).unwrap(), g, epsilon = 1e-9);
    }
    assert_abs_diff_eq!(guarantee_factor(1.0, 1.0).unwrap(), 1.0 - (-1.0f64).exp(), epsilon = 1e-15);
    assert!(guarantee_factor(1.1, 0.5).is_err());
    assert!(guarantee_factor(0.5, 0.0).is_err());
}

#[test]
fn mcmc_matches_exact_on_five_units() {
    let sampler = SamplerSettings { sweeps: 60_000, burn_in: 5_000, ..SamplerSettings::default() };
    for s in 0..4u64 {
        let inst = mild_instance(5, 100 + s);
        let mut rng = ChaCha8Rng::seed_from_u64(s);
        let d = random_allocation(5, &mut rng);
        let w = inst.weights(&d);
        let exact = enumerate_gibbs(&w, 20, false).unwrap().welfare() / 5.0;
        let est = mcmc_welfare(&w, &sampler, s).unwrap();
        assert!((est.estimate - exact).abs() <= 0.005, "seed {s}: {} vs {exact}", est.estimate);
    }
}

#[test]
fn greedy_with_full_capacity_treats_everyone() {
    let inst = mild_instance(9, 3);
    let g = greedy(&inst, 9, &SolverSettings::default(), 1).unwrap();
    assert_eq!(g.allocation, Allocation::all(9));
    assert_eq!(g.trace.len(), 9);
}

#[test]
fn set_two_is_handled_by_restarts() {
    let inst = random_instance(10, 0.6, ThetaParams::set2(0.1), 5);
    assert!(!instance_certified(&inst));
    let d = Allocation::none(10);
    let sol = meanfield::solve_allocation(&inst, &d, &SolverSettings::default(), 2, None);
    assert!(sol.converged);
    let w = inst.weights(&d);
    let p = enumerate_gibbs(&w, 20, false).unwrap();
    assert!(exact_kl(&sol.mu, &w, &p).unwrap() >= -1e-10);
    assert!(stationarity_check(&w, 20).unwrap() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_differences_equal_potential_differences(n in 2usize..9, seed in any::<u64>()) {
        let inst = mild_instance(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_allocation(n, &mut rng);
        let w = inst.weights(&d);
        let zero = vec![false; n];
        for _ in 0..20 {
            let y: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
            let lhs = w.energy(&y) - w.energy(&zero);
            let rhs = inst.potential(&y, &d) - inst.potential(&zero, &d);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }
    }

    #[test]
    fn exact_welfare_is_monotone(n in 2usize..9, seed in any::<u64>()) {
        let inst = mild_instance(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_allocation(n, &mut rng);
        let base = exact_welfare(&inst, &d, 20).unwrap();
        for k in (0..n).filter(|&k| !d.is_treated(k)) {
            prop_assert!(exact_welfare(&inst, &d.with_treated(k), 20).unwrap() >= base - 1e-12);
        }
    }

    #[test]
    fn brute_force_is_label_free(n in 2usize..8, seed in any::<u64>()) {
        let inst = mild_instance(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let kappa = rng.gen_range(0..=n);
        let (_, a) = brute_force_optimal(&inst, kappa, 20).unwrap();
        let (_, b) = brute_force_optimal(&inst.relabel(&perm).unwrap(), kappa, 20).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }

    #[test]
    fn greedy_welfare_is_label_free(n in 2usize..12, seed in any::<u64>()) {
        let inst = mild_instance(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut perm: Vec<usize> = (0..n).collect();
        rand::seq::SliceRandom::shuffle(perm.as_mut_slice(), &mut rng);
        let kappa = rng.gen_range(0..=n);
        let settings = SolverSettings::default();
        let a = greedy(&inst, kappa, &settings, 1).unwrap();
        let b = greedy(&inst.relabel(&perm).unwrap(), kappa, &settings, 2).unwrap();
        prop_assert_eq!(a.allocation.treated_count(), kappa);
        prop_assert!((a.welfare() - b.welfare()).abs() <= 1e-6);
    }

    #[test]
    fn kl_is_nonnegative_and_bounded(n in 2usize..10, seed in any::<u64>()) {
        let inst = mild_instance(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_allocation(n, &mut rng);
        let w = inst.weights(&d);
        let p = enumerate_gibbs(&w, 20, false).unwrap();
        let sol = meanfield::solve_allocation(&inst, &d, &SolverSettings::default(), seed, None);
        let kl = exact_kl(&sol.mu, &w, &p).unwrap();
        prop_assert!(kl >= -1e-10);
        prop_assert!(kl <= kl_upper_bound(&inst));
        let mu: Vec<f64> = (0..n).map(|_| rng.gen_range(0.01..0.99)).collect();
        let kl_any = exact_kl(&mu, &w, &p).unwrap();
        prop_assert!(kl_any >= kl - 1e-9);
    }

    #[test]
    fn certified_fixed_point_is_unique_and_ascent(n in 2usize..20, seed in any::<u64>(), jacobi in any::<bool>()) {
        let inst = mild_instance(n, seed);
        prop_assume!(instance_certified(&inst));
        let mode = if jacobi { SweepMode::Jacobi } else { SweepMode::GaussSeidel };
        let settings = SolverSettings { mode, ..tight() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_allocation(n, &mut rng);
        let w = inst.weights(&d);
        let reference = meanfield::fixed_point_solve(&w, 0, &settings);
        prop_assert!(reference.converged);
        for r in 1..10 {
            let mut last = f64::NEG_INFINITY;
            let mut ascent = true;
            let init = meanfield::random_init(n, r);
            let sol = meanfield::solve_from_traced(&w, &init, &settings, |v| {
                ascent &= v >= last - 1e-12;
                last = v;
            });
            prop_assert!(ascent);
            let gap = sol.mu.iter().zip(&reference.mu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(gap <= 1e-8, "gap {}", gap);
        }
    }

    #[test]
    fn approximated_welfare_is_monotone(n in 2usize..16, seed in any::<u64>()) {
        let inst = mild_instance(n, seed);
        prop_assume!(instance_certified(&inst));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = random_allocation(n, &mut rng);
        let k = rng.gen_range(0..n);
        prop_assume!(!d.is_treated(k));
        let settings = tight();
        let before = meanfield::solve_allocation(&inst, &d, &settings, 1, None);
        let after = meanfield::solve_allocation(&inst, &d.with_treated(k), &settings, 2, None);
        for i in 0..n {
            prop_assert!(after.mu[i] >= before.mu[i] - 1e-10);
        }
    }

    #[test]
    fn greedy_never_beats_exhaustive_search(n in 2usize..9, seed in any::<u64>()) {
        let inst = mild_instance(n, seed);
        let kappa = (n * 3) / 10 + 1;
        let settings = SolverSettings::default();
        let g = greedy(&inst, kappa, &settings, 1).unwrap();
        let (_, best) = bfva(&inst, kappa, &settings, 1).unwrap();
        prop_assert!(g.welfare() <= best + 1e-7);
        let factor = netgame_core::bounds::guarantee_from_zeta(&zeta(&inst));
        prop_assert!(g.welfare() >= factor * best - 1e-9);
    }
}
