//! Naive mean-field approximation of the Gibbs law.
//!
//! The best product-Bernoulli approximation maximises
//! `𝒜(μ) = w1'μ + μ'w2 μ + H(μ)`, whose first-order condition is
//! `μ_i = Λ(w1[i] + 2 Σ_j w2[i][j] μ_j)`. The solver iterates that map.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{logistic, Allocation, Instance, ThetaParams, WeightSystem};
use crate::seed;

/// Smallest distance to 0 or 1 that the solver lets a mean reach.
pub const CLAMP: f64 = 1e-15;

/// Order in which a sweep updates the means.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepMode {
    /// In-place updates in unit order; every update is a coordinate-ascent
    /// step so the objective never decreases.
    #[default]
    GaussSeidel,
    /// All units updated simultaneously from the previous sweep.
    Jacobi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Stop once the objective changes by at most this much in a sweep.
    pub rho: f64,
    /// ... and the largest first-order-condition residual is at most this.
    pub foc_tol: f64,
    pub max_iter: usize,
    pub mode: SweepMode,
    /// Random restarts used when the contraction certificate fails.
    pub restarts: usize,
    /// Start candidate solves from the incumbent solution during greedy
    /// search instead of a fresh random draw.
    pub warm_start: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            rho: 1e-9,
            foc_tol: 1e-8,
            max_iter: 100_000,
            mode: SweepMode::GaussSeidel,
            restarts: 10,
            warm_start: true,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.rho > 0.0 && self.foc_tol > 0.0) {
            return Err(crate::Error::InvalidInput(
                "solver tolerances must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(crate::Error::InvalidInput("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanFieldSolution {
    pub mu: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    pub foc_residual: f64,
    pub contraction_certified: bool,
}

impl MeanFieldSolution {
    /// Approximated welfare `Σ μ_i`.
    pub fn welfare(&self) -> f64 {
        self.mu.iter().sum()
    }

    pub fn per_person(&self) -> f64 {
        self.welfare() / self.mu.len().max(1) as f64
    }
}

fn clamp(p: f64) -> f64 {
    p.clamp(CLAMP, 1.0 - CLAMP)
}

fn neg_entropy_term(p: f64) -> f64 {
    let p = clamp(p);
    p * p.ln() + (1.0 - p) * (-p).ln_1p()
}

/// `𝒜(μ) = w1'μ + μ'w2 μ − Σ_i [μ_i ln μ_i + (1 − μ_i) ln(1 − μ_i)]`, with
/// the entropy evaluated at means clamped into `[1e-15, 1 − 1e-15]`.
pub fn objective(mu: &[f64], w: &WeightSystem) -> f64 {
    w.mean_energy(mu) - mu.iter().map(|&p| neg_entropy_term(p)).sum::<f64>()
}

/// Largest `|μ_i − Λ(field_i(μ))|`.
pub fn foc_residual(mu: &[f64], w: &WeightSystem) -> f64 {
    (0..w.n())
        .map(|i| (mu[i] - clamp(logistic(w.field(i, mu)))).abs())
        .fold(0.0, f64::max)
}

/// True iff `A_N · m̄ · (|θ5| + |θ6|) · N̄ <= 4`, under which the update
/// map is a contraction and the maximiser is unique.
pub fn contraction_certificate(theta: &ThetaParams, m_upper: f64, max_degree: usize) -> bool {
    theta.a_n * m_upper * (theta.theta5.abs() + theta.theta6.abs()) * max_degree as f64 <= 4.0
}

/// The certificate evaluated on an instance's own `m̄` and `N̄`.
pub fn instance_certified(instance: &Instance) -> bool {
    contraction_certificate(
        instance.theta(),
        instance.similarity().upper(),
        instance.network().max_degree(),
    )
}

fn sweep(mu: &mut [f64], scratch: &mut [f64], w: &WeightSystem, mode: SweepMode) {
    match mode {
        SweepMode::GaussSeidel => {
            for i in 0..w.n() {
                mu[i] = clamp(logistic(w.field(i, mu)));
            }
        }
        SweepMode::Jacobi => {
            for i in 0..w.n() {
                scratch[i] = clamp(logistic(w.field(i, mu)));
            }
            mu.copy_from_slice(scratch);
        }
    }
}

/// Iterates from `init`, calling `on_sweep` with the objective after each
/// sweep.
pub fn solve_from_traced(
    w: &WeightSystem,
    init: &[f64],
    settings: &SolverSettings,
    mut on_sweep: impl FnMut(f64),
) -> MeanFieldSolution {
    assert_eq!(init.len(), w.n(), "initial point has the wrong length");
    let mut mu: Vec<f64> = init.iter().map(|&p| clamp(p)).collect();
    let mut scratch = vec![0.0; w.n()];
    let mut value = objective(&mu, w);
    let mut residual = foc_residual(&mu, w);
    let mut iterations = 0;
    let mut converged = false;
    while iterations < settings.max_iter {
        sweep(&mut mu, &mut scratch, w, settings.mode);
        iterations += 1;
        let next = objective(&mu, w);
        residual = foc_residual(&mu, w);
        on_sweep(next);
        let step = (next - value).abs();
        value = next;
        if step <= settings.rho && residual <= settings.foc_tol {
            converged = true;
            break;
        }
    }
    MeanFieldSolution {
        mu,
        objective: value,
        iterations,
        converged,
        foc_residual: residual,
        contraction_certified: false,
    }
}

pub fn solve_from(w: &WeightSystem, init: &[f64], settings: &SolverSettings) -> MeanFieldSolution {
    solve_from_traced(w, init, settings, |_| {})
}

/// `U[0,1]` starting point drawn from `seed`.
pub fn random_init(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen::<f64>()).collect()
}

/// One solve from a `U[0,1]` draw.
pub fn fixed_point_solve(w: &WeightSystem, seed: u64, settings: &SolverSettings) -> MeanFieldSolution {
    solve_from(w, &random_init(w.n(), seed), settings)
}

/// Solves with the restart policy: a single run when `certified`,
/// otherwise `settings.restarts` runs (the first from `warm` if given)
/// keeping the largest objective.
pub fn solve(
    w: &WeightSystem,
    settings: &SolverSettings,
    seed: u64,
    warm: Option<&[f64]>,
    certified: bool,
) -> MeanFieldSolution {
    let runs = if certified { 1 } else { settings.restarts.max(1) };
    let mut best: Option<MeanFieldSolution> = None;
    for r in 0..runs {
        let init = match warm {
            Some(m) if r == 0 => m.to_vec(),
            _ => random_init(w.n(), seed::derive(seed, &[r as u64])),
        };
        let sol = solve_from(w, &init, settings);
        let better = match &best {
            None => true,
            Some(b) => (sol.converged && !b.converged)
                || (sol.converged == b.converged && sol.objective > b.objective),
        };
        if better {
            best = Some(sol);
        }
    }
    let mut sol = best.expect("at least one run");
    sol.contraction_certified = certified;
    sol
}

/// Mean-field solution for `instance` under allocation `d`.
pub fn solve_allocation(
    instance: &Instance,
    d: &Allocation,
    settings: &SolverSettings,
    seed: u64,
    warm: Option<&[f64]>,
) -> MeanFieldSolution {
    solve(&instance.weights(d), settings, seed, warm, instance_certified(instance))
}

/// Approximated welfare `W̃(d) = Σ μ̃_i`.
pub fn approx_welfare(
    instance: &Instance,
    d: &Allocation,
    settings: &SolverSettings,
    seed: u64,
) -> MeanFieldSolution {
    solve_allocation(instance, d, settings, seed, None)
}
