//! The sequential decision process: at each step one uniformly chosen unit
//! redraws its choice from the logit conditional given everyone else. This
//! is a single-site Gibbs sampler for the equilibrium law.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exact;
use crate::model::{logistic, Allocation, Instance, WeightSystem};

/// What one "iteration" in the sampler settings counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IterationUnit {
    /// N single-site updates.
    #[default]
    Sweep,
    /// One single-site update.
    Step,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerSettings {
    pub sweeps: usize,
    pub burn_in: usize,
    pub batches: usize,
    pub unit: IterationUnit,
}

impl Default for SamplerSettings {
    fn default() -> Self {
        SamplerSettings { sweeps: 10_000, burn_in: 5_000, batches: 50, unit: IterationUnit::Sweep }
    }
}

impl SamplerSettings {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps <= self.burn_in {
            return Err(Error::invalid(format!(
                "sweeps ({}) must exceed burn_in ({})",
                self.sweeps, self.burn_in
            )));
        }
        if self.batches < 2 {
            return Err(Error::invalid("at least 2 batches are needed for a standard error"));
        }
        Ok(())
    }

    fn steps(&self, n: usize, count: usize) -> usize {
        match self.unit {
            IterationUnit::Sweep => count * n,
            IterationUnit::Step => count,
        }
    }
}

/// Current profile of the chain plus its random stream.
#[derive(Debug, Clone)]
pub struct ChainState {
    pub y: Vec<bool>,
    pub t: u64,
    rng: ChaCha8Rng,
}

impl ChainState {
    pub fn new(y: Vec<bool>, seed: u64) -> Self {
        ChainState { y, t: 0, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    /// Initial profile drawn uniformly from the same stream as the chain.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y = (0..n).map(|_| rng.gen_bool(0.5)).collect();
        ChainState { y, t: 0, rng }
    }

    /// One update; returns the chosen unit.
    pub fn step(&mut self, w: &WeightSystem) -> usize {
        let n = self.y.len();
        let i = self.rng.gen_range(0..n);
        let p = logistic(w.field(i, &self.y));
        self.y[i] = self.rng.gen::<f64>() < p;
        self.t += 1;
        i
    }

    /// One update of the game defined by `instance` under allocation `d`.
    pub fn step_instance(&mut self, instance: &Instance, d: &Allocation) -> usize {
        let n = self.y.len();
        let i = self.rng.gen_range(0..n);
        let p = instance.conditional_choice_prob(i, &self.y, d);
        self.y[i] = self.rng.gen::<f64>() < p;
        self.t += 1;
        i
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McmcEstimate {
    /// Time average of the per-person mean outcome after burn-in.
    pub estimate: f64,
    /// Batch-means standard error of `estimate`.
    pub stderr: f64,
}

/// Estimates per-person welfare `(1/N) Σ E[Y_i]` by running the chain.
pub fn mcmc_welfare(w: &WeightSystem, settings: &SamplerSettings, seed: u64) -> Result<McmcEstimate> {
    settings.validate()?;
    let n = w.n();
    if n == 0 {
        return Err(Error::invalid("cannot sample an empty network"));
    }
    let burn = settings.steps(n, settings.burn_in);
    let kept = settings.steps(n, settings.sweeps) - burn;
    let batches = settings.batches.min(kept);
    let mut chain = ChainState::random(n, seed);
    let mut ones = chain.y.iter().filter(|&&b| b).count() as i64;
    let mut advance = |chain: &mut ChainState| {
        let i = chain.rng.gen_range(0..n);
        let was = chain.y[i];
        let now = chain.rng.gen::<f64>() < logistic(w.field(i, &chain.y));
        chain.y[i] = now;
        chain.t += 1;
        ones += now as i64 - was as i64;
        ones
    };
    for _ in 0..burn {
        advance(&mut chain);
    }
    let mut means = Vec::with_capacity(batches);
    for b in 0..batches {
        let len = kept * (b + 1) / batches - kept * b / batches;
        let mut total = 0i64;
        for _ in 0..len {
            total += advance(&mut chain);
        }
        means.push(total as f64 / (len as f64 * n as f64));
    }
    let lens: Vec<f64> = (0..batches)
        .map(|b| (kept * (b + 1) / batches - kept * b / batches) as f64)
        .collect();
    let estimate = means.iter().zip(&lens).map(|(m, l)| m * l).sum::<f64>() / kept as f64;
    let k = batches as f64;
    let stderr = if batches < 2 {
        0.0
    } else {
        let var = means.iter().map(|m| (m - estimate).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    };
    Ok(McmcEstimate { estimate, stderr })
}

/// MCMC welfare for `instance` under allocation `d`.
pub fn mcmc_allocation_welfare(
    instance: &Instance,
    d: &Allocation,
    settings: &SamplerSettings,
    seed: u64,
) -> Result<McmcEstimate> {
    mcmc_welfare(&instance.weights(d), settings, seed)
}

/// Dense single-site transition matrix, rows indexed by the bit pattern of
/// the current profile. Only for tiny N.
pub fn transition_kernel(w: &WeightSystem) -> Result<Vec<Vec<f64>>> {
    let n = w.n();
    if n > 12 {
        return Err(Error::EnumerationInfeasible { n, cap: 12 });
    }
    let size = 1usize << n;
    let mut k = vec![vec![0.0; size]; size];
    for (s, row) in k.iter_mut().enumerate() {
        let y: Vec<bool> = (0..n).map(|i| s >> i & 1 == 1).collect();
        for i in 0..n {
            let p1 = logistic(w.field(i, &y));
            row[s | 1 << i] += p1 / n as f64;
            row[s & !(1 << i)] += (1.0 - p1) / n as f64;
        }
    }
    Ok(k)
}

/// `πK` for the single-site kernel, applied without forming `K`.
pub fn apply_kernel(w: &WeightSystem, pi: &[f64]) -> Vec<f64> {
    let n = w.n();
    let mut out = vec![0.0; pi.len()];
    let mut y = vec![false; n];
    for (s, &mass) in pi.iter().enumerate() {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = s >> i & 1 == 1;
        }
        let share = mass / n as f64;
        for i in 0..n {
            let p1 = logistic(w.field(i, &y));
            out[s | 1 << i] += share * p1;
            out[s & !(1 << i)] += share * (1.0 - p1);
        }
    }
    out
}

/// `‖πK − π‖₁` with `π` the enumerated Gibbs law.
pub fn stationarity_check(w: &WeightSystem, cap: usize) -> Result<f64> {
    let p = exact::enumerate_gibbs(w, cap, true)?;
    let pi = p.probs.expect("requested probabilities");
    let moved = apply_kernel(w, &pi);
    Ok(moved.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum())
}

/// Largest `|π(y)K(y,y') − π(y')K(y',y)|` over profiles differing in one
/// site.
pub fn detailed_balance_gap(w: &WeightSystem, cap: usize) -> Result<f64> {
    let n = w.n();
    let pi = exact::enumerate_gibbs(w, cap, true)?.probs.expect("requested probabilities");
    let mut worst: f64 = 0.0;
    let mut y = vec![false; n];
    for (s, &ps) in pi.iter().enumerate() {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = s >> i & 1 == 1;
        }
        for i in 0..n {
            if y[i] {
                continue;
            }
            // s has y_i = 0, t has y_i = 1; the kernel moves between them
            // by picking i and drawing the other value
            let t = s | 1 << i;
            let p1 = logistic(w.field(i, &y));
            let forward = ps * p1 / n as f64;
            let backward = pi[t] * (1.0 - p1) / n as f64;
            worst = worst.max((forward - backward).abs());
        }
    }
    Ok(worst)
}
