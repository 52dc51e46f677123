//! The four runner operations: `simulate`, `validate`, `allocate` and
//! `bounds`, plus report writers.

use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::allocate::{self, GreedyStep};
use crate::bounds::{self, BoundsReport};
use crate::config::{AnRule, Evaluator, ExperimentConfig, Method};
use crate::dynamics;
use crate::error::{Error, Result};
use crate::exact;
use crate::format::{fmt_sig, round_sig};
use crate::meanfield::{self, MeanFieldSolution};
use crate::model::{Allocation, Instance};
use crate::network::{erdos_renyi, load_network_and_covariates, Covariates};
use crate::seed;

/// Machine-readable reasons for a report cell without a number.
pub mod na {
    pub const EXACT_INFEASIBLE: &str = "exact-infeasible";
    pub const SEARCH_INFEASIBLE: &str = "search-infeasible";
}

/// Allocation searches above this many candidates are skipped where they
/// are optional (regret scaling, guarantee checks).
const OPTIONAL_SEARCH_LIMIT: usize = 20_000;

fn path_seed(master: u64, n: usize, density: f64, rep: usize) -> u64 {
    seed::derive(master, &[n as u64, density.to_bits(), rep as u64])
}

/// Random instance for replication `rep` of the `(n, density)` cell: an
/// Erdős–Rényi network with a fixed edge count and one Bernoulli covariate
/// per unit.
pub fn generate_instance(cfg: &ExperimentConfig, n: usize, density: f64, rep: usize) -> Result<Instance> {
    let base = path_seed(cfg.seed, n, density, rep);
    let network = erdos_renyi(n, density, seed::derive(base, &[0]))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(base, &[1]));
    let x: Vec<f64> = (0..n).map(|_| if rng.gen_bool(cfg.covariate_p) { 1.0 } else { 0.0 }).collect();
    let theta = cfg.theta_for(n, AnRule::InverseN)?;
    Instance::new(network, Covariates::scalar(&x)?, cfg.kernel, theta)
}

/// Instance from the config's network and covariate files.
pub fn load_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    let (net_path, cov_path) = match (&cfg.network, &cfg.covariates) {
        (Some(n), Some(c)) => (n, c),
        _ => return Err(Error::invalid("both a network file and a covariates file are required")),
    };
    let (network, covariates) = load_network_and_covariates(net_path, cov_path)?;
    let default_an = if cfg.sparse { AnRule::Fixed(1.0) } else { AnRule::InverseN };
    let theta = cfg.theta_for(network.n(), default_an)?;
    Instance::new(network, covariates, cfg.kernel, theta)
}

/// An instance together with where it came from.
#[derive(Debug, Clone)]
pub struct LabeledInstance {
    pub density: Option<f64>,
    pub replication: usize,
    pub instance: Instance,
}

/// The loaded instance when files are configured, otherwise every
/// generated `(n, density, replication)` instance.
pub fn config_instances(cfg: &ExperimentConfig) -> Result<Vec<LabeledInstance>> {
    if cfg.network.is_some() {
        return Ok(vec![LabeledInstance { density: None, replication: 0, instance: load_instance(cfg)? }]);
    }
    let mut out = Vec::new();
    for &n in &cfg.n {
        for &density in &cfg.density {
            for rep in 0..cfg.replications {
                out.push(LabeledInstance {
                    density: Some(density),
                    replication: rep,
                    instance: generate_instance(cfg, n, density, rep)?,
                });
            }
        }
    }
    Ok(out)
}

/// Evaluates allocations on one instance, memoised so an allocation
/// reached by several rules gets one number per evaluator.
struct Evaluations<'a> {
    cfg: &'a ExperimentConfig,
    instance: &'a Instance,
    base: u64,
    cache: HashMap<(Allocation, Evaluator), f64>,
}

impl<'a> Evaluations<'a> {
    fn new(cfg: &'a ExperimentConfig, instance: &'a Instance, base: u64) -> Self {
        Evaluations { cfg, instance, base, cache: HashMap::new() }
    }

    fn allocation_seed(&self, tag: u64, d: &Allocation) -> u64 {
        let mut tags = vec![tag];
        tags.extend(d.treated().into_iter().map(|i| i as u64));
        seed::derive(self.base, &tags)
    }

    /// Per-person welfare, or the NA reason.
    fn per_person(&mut self, d: &Allocation, e: Evaluator) -> Result<std::result::Result<f64, &'static str>> {
        let n = self.instance.n();
        if e == Evaluator::Exact && n > self.cfg.exact_cap {
            return Ok(Err(na::EXACT_INFEASIBLE));
        }
        if let Some(&v) = self.cache.get(&(d.clone(), e)) {
            return Ok(Ok(v));
        }
        let v = match e {
            Evaluator::Exact => exact::exact_welfare(self.instance, d, self.cfg.exact_cap)? / n as f64,
            Evaluator::Va => {
                let s = self.allocation_seed(5, d);
                meanfield::approx_welfare(self.instance, d, &self.cfg.solver, s).per_person()
            }
            Evaluator::Mcmc => {
                let s = self.allocation_seed(6, d);
                dynamics::mcmc_allocation_welfare(self.instance, d, &self.cfg.sampler, s)?.estimate
            }
        };
        self.cache.insert((d.clone(), e), v);
        Ok(Ok(v))
    }

    fn store_va(&mut self, d: &Allocation, sol: &MeanFieldSolution) {
        self.cache.entry((d.clone(), Evaluator::Va)).or_insert(sol.per_person());
    }
}

/// The allocations a rule produces on one instance (several for the random
/// rule), or the NA reason.
fn rule_allocations(
    cfg: &ExperimentConfig,
    instance: &Instance,
    method: Method,
    kappa: usize,
    base: u64,
    evals: &mut Evaluations,
) -> Result<std::result::Result<Vec<Allocation>, &'static str>> {
    let n = instance.n();
    let searchable = n <= cfg.brute_cap;
    Ok(Ok(match method {
        Method::None => vec![allocate::no_treatment(instance)],
        Method::Greedy => {
            let g = allocate::greedy(instance, kappa, &cfg.solver, seed::derive(base, &[2]))?;
            evals.store_va(&g.allocation, &g.solution);
            vec![g.allocation]
        }
        Method::Bfva if !searchable => return Ok(Err(na::SEARCH_INFEASIBLE)),
        Method::Bfva => vec![allocate::bfva(instance, kappa, &cfg.solver, seed::derive(base, &[3]))?.0],
        Method::Brute if !searchable || n > cfg.exact_cap => return Ok(Err(na::SEARCH_INFEASIBLE)),
        Method::Brute => vec![exact::brute_force_optimal(instance, kappa, cfg.exact_cap)?.0],
        Method::Random => (0..cfg.draws_for(n))
            .map(|r| allocate::random_allocation(n, kappa, seed::derive(base, &[4, r as u64])))
            .collect::<Result<_>>()?,
    }))
}

type Outcome = std::result::Result<f64, &'static str>;

fn replication_cells(
    cfg: &ExperimentConfig,
    n: usize,
    density: f64,
    rep: usize,
) -> Result<Vec<((Method, Evaluator), Outcome)>> {
    let instance = generate_instance(cfg, n, density, rep)?;
    let kappa = cfg.kappa_for(n)?;
    let base = seed::derive(path_seed(cfg.seed, n, density, rep), &[7]);
    let mut evals = Evaluations::new(cfg, &instance, base);
    let mut out = Vec::new();
    for &method in &cfg.methods {
        let allocations = rule_allocations(cfg, &instance, method, kappa, base, &mut evals)?;
        for &e in &cfg.evaluators {
            let outcome = match &allocations {
                Err(reason) => Err(*reason),
                Ok(list) => {
                    let mut total = 0.0;
                    let mut reason = None;
                    for d in list {
                        match evals.per_person(d, e)? {
                            Ok(v) => total += v,
                            Err(r) => {
                                reason = Some(r);
                                break;
                            }
                        }
                    }
                    match reason {
                        Some(r) => Err(r),
                        None => Ok(total / list.len() as f64),
                    }
                }
            };
            out.push(((method, e), outcome));
        }
    }
    Ok(out)
}

/// One aggregated cell of a welfare table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WelfareCell {
    pub param_set: String,
    pub density: f64,
    pub n: usize,
    pub method: Method,
    pub evaluator: Evaluator,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub replications: usize,
    pub na_reason: Option<&'static str>,
    /// Per-replication per-person values, in replication order.
    #[serde(skip)]
    pub values: Vec<f64>,
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

/// Runs every configured rule and evaluator on `replications` generated
/// instances for each `(n, density)` and aggregates per-person welfare.
pub fn simulate(cfg: &ExperimentConfig) -> Result<Vec<WelfareCell>> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &n in &cfg.n {
        for &density in &cfg.density {
            let per_rep: Vec<Vec<((Method, Evaluator), Outcome)>> = (0..cfg.replications)
                .into_par_iter()
                .map(|rep| replication_cells(cfg, n, density, rep))
                .collect::<Result<_>>()?;
            for (k, &(key, _)) in per_rep[0].iter().enumerate() {
                let outcomes: Vec<Outcome> = per_rep.iter().map(|r| r[k].1).collect();
                let reason = outcomes.iter().find_map(|o| o.err());
                let values: Vec<f64> = outcomes.iter().filter_map(|o| o.ok()).collect();
                let (mean, stderr) = match reason {
                    Some(_) => (None, None),
                    None => {
                        let (m, s) = mean_stderr(&values);
                        (Some(m), Some(s))
                    }
                };
                cells.push(WelfareCell {
                    param_set: cfg.param_label(),
                    density,
                    n,
                    method: key.0,
                    evaluator: key.1,
                    mean,
                    stderr,
                    replications: cfg.replications,
                    na_reason: reason,
                    values: if reason.is_some() { Vec::new() } else { values },
                });
            }
        }
    }
    Ok(cells)
}

fn opt_sig(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), fmt_sig)
}

fn csv_error(e: csv::Error) -> Error {
    Error::invalid(format!("writing CSV: {e}"))
}

pub fn write_welfare_csv<W: Write>(cells: &[WelfareCell], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param_set", "density", "n", "method", "evaluator", "mean", "stderr", "replications", "na_reason"])
        .map_err(csv_error)?;
    for c in cells {
        w.write_record([
            c.param_set.clone(),
            fmt_sig(c.density),
            c.n.to_string(),
            c.method.to_string(),
            c.evaluator.to_string(),
            opt_sig(c.mean),
            opt_sig(c.stderr),
            c.replications.to_string(),
            c.na_reason.unwrap_or("").to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("writing CSV: {e}")))
}

/// Comparison of VA, MCMC and (small N) exact welfare for one rule on one
/// instance, with the checks that apply at that size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub n: usize,
    pub density: Option<f64>,
    pub replication: usize,
    pub rule: Method,
    pub va: f64,
    pub mcmc: f64,
    pub mcmc_stderr: f64,
    pub exact: Option<f64>,
    pub kl: Option<f64>,
    pub kl_bound: f64,
    pub kl_ok: Option<bool>,
    pub pinsker_ok: Option<bool>,
    pub stationarity: Option<f64>,
    pub stationarity_ok: Option<bool>,
    pub guarantee_ok: Option<bool>,
}

impl ValidationRow {
    pub fn va_mcmc_gap(&self) -> f64 {
        (self.va - self.mcmc).abs()
    }

    pub fn va_exact_gap(&self) -> Option<f64> {
        self.exact.map(|e| (self.va - e).abs())
    }

    pub fn mcmc_exact_gap(&self) -> Option<f64> {
        self.exact.map(|e| (self.mcmc - e).abs())
    }

    pub fn passed(&self) -> bool {
        [self.kl_ok, self.pinsker_ok, self.stationarity_ok, self.guarantee_ok]
            .iter()
            .all(|c| c.unwrap_or(true))
    }
}

/// Largest allowed `‖πK − π‖₁`.
pub const STATIONARITY_TOL: f64 = 1e-12;

fn validate_instance(cfg: &ExperimentConfig, li: &LabeledInstance) -> Result<Vec<ValidationRow>> {
    let inst = &li.instance;
    let n = inst.n();
    let kappa = cfg.kappa_for(n)?;
    let base = seed::derive(
        path_seed(cfg.seed, n, li.density.unwrap_or(0.0), li.replication),
        &[8],
    );
    let g = allocate::greedy(inst, kappa, &cfg.solver, seed::derive(base, &[2]))?;
    let none = Allocation::none(n);
    let none_sol = meanfield::approx_welfare(inst, &none, &cfg.solver, seed::derive(base, &[3]));
    let kl_bound = bounds::kl_upper_bound(inst);
    let guarantee = if n <= cfg.brute_cap && exact::count_allocations(n, kappa) <= OPTIONAL_SEARCH_LIMIT {
        let (_, best) = allocate::bfva(inst, kappa, &cfg.solver, seed::derive(base, &[4]))?;
        let factor = bounds::guarantee_from_zeta(&bounds::zeta(inst));
        Some(g.welfare() >= factor * best - 1e-9)
    } else {
        None
    };
    let mut rows = Vec::new();
    for (rule, d, sol) in [(Method::Greedy, &g.allocation, &g.solution), (Method::None, &none, &none_sol)] {
        let w = inst.weights(d);
        let mcmc = dynamics::mcmc_welfare(&w, &cfg.sampler, seed::derive(base, &[5, rule as u64]))?;
        let (exact, kl, kl_ok, pinsker_ok) = if n <= cfg.exact_cap {
            let p = exact::enumerate_gibbs(&w, cfg.exact_cap, false)?;
            let kl = exact::exact_kl(&sol.mu, &w, &p)?;
            let gap = (p.welfare() - sol.welfare()).abs();
            let pinsker = gap <= (2.0 * kl.max(0.0)).sqrt() + 1e-9;
            (Some(p.welfare() / n as f64), Some(kl), Some(kl >= -1e-10 && kl <= kl_bound), Some(pinsker))
        } else {
            (None, None, None, None)
        };
        let stationarity = if n <= cfg.stationarity_cap.min(cfg.exact_cap) {
            Some(dynamics::stationarity_check(&w, cfg.exact_cap)?)
        } else {
            None
        };
        rows.push(ValidationRow {
            n,
            density: li.density,
            replication: li.replication,
            rule,
            va: sol.per_person(),
            mcmc: mcmc.estimate,
            mcmc_stderr: mcmc.stderr,
            exact,
            kl,
            kl_bound,
            kl_ok,
            pinsker_ok,
            stationarity,
            stationarity_ok: stationarity.map(|s| s <= STATIONARITY_TOL),
            guarantee_ok: if rule == Method::Greedy { guarantee } else { None },
        });
    }
    Ok(rows)
}

/// Cross-checks VA against MCMC and, for small N, against exact
/// enumeration; also runs the stationarity, KL, Pinsker and greedy
/// guarantee checks.
pub fn validate(cfg: &ExperimentConfig) -> Result<Vec<ValidationRow>> {
    cfg.validate()?;
    let instances = config_instances(cfg)?;
    let rows: Vec<Vec<ValidationRow>> =
        instances.par_iter().map(|li| validate_instance(cfg, li)).collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn opt_flag(v: Option<bool>) -> String {
    v.map_or_else(|| "NA".to_string(), |b| if b { "pass".into() } else { "fail".into() })
}

pub fn write_validation_csv<W: Write>(rows: &[ValidationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "n", "density", "replication", "rule", "va", "mcmc", "mcmc_stderr", "exact", "abs_va_mcmc",
        "abs_va_exact", "abs_mcmc_exact", "kl", "kl_bound", "kl_check", "pinsker_check",
        "stationarity", "stationarity_check", "guarantee_check",
    ])
    .map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.n.to_string(),
            opt_sig(r.density),
            r.replication.to_string(),
            r.rule.to_string(),
            fmt_sig(r.va),
            fmt_sig(r.mcmc),
            fmt_sig(r.mcmc_stderr),
            opt_sig(r.exact),
            fmt_sig(r.va_mcmc_gap()),
            opt_sig(r.va_exact_gap()),
            opt_sig(r.mcmc_exact_gap()),
            opt_sig(r.kl),
            fmt_sig(r.kl_bound),
            opt_flag(r.kl_ok),
            opt_flag(r.pinsker_ok),
            opt_sig(r.stationarity),
            opt_flag(r.stationarity_ok),
            opt_flag(r.guarantee_ok),
        ])
        .map_err(csv_error)?;
    }
    w.flush().map_err(|e| Error::invalid(format!("writing CSV: {e}")))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceEntry {
    pub round: usize,
    pub unit: usize,
    pub delta: f64,
}

impl From<&GreedyStep> for TraceEntry {
    fn from(s: &GreedyStep) -> Self {
        TraceEntry { round: s.round, unit: s.unit, delta: round_sig(s.delta) }
    }
}

/// Contents of the allocation file. Welfare values are per person.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationOutput {
    pub n: usize,
    pub kappa: usize,
    pub method: Method,
    pub a_n: f64,
    pub treated: Vec<usize>,
    pub welfare_va: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub welfare_mcmc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub welfare_mcmc_stderr: Option<f64>,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

/// Chooses an allocation on the configured instance (loaded from files, or
/// the first generated instance) and reports its bounds.
pub fn allocate(cfg: &ExperimentConfig) -> Result<(AllocationOutput, BoundsReport)> {
    cfg.validate()?;
    let inst = if cfg.network.is_some() {
        load_instance(cfg)?
    } else {
        generate_instance(cfg, cfg.n[0], cfg.density[0], 0)?
    };
    let n = inst.n();
    let kappa = cfg.kappa_for(n)?;
    let base = seed::derive(cfg.seed, &[9]);
    let mut trace = Vec::new();
    let (allocation, solution) = match cfg.method {
        Method::Greedy => {
            let g = allocate::greedy(&inst, kappa, &cfg.solver, seed::derive(base, &[2]))?;
            trace = g.trace.iter().map(TraceEntry::from).collect();
            (g.allocation, g.solution)
        }
        other => {
            let d = match other {
                Method::Bfva => allocate::bfva(&inst, kappa, &cfg.solver, seed::derive(base, &[3]))?.0,
                Method::Brute => exact::brute_force_optimal(&inst, kappa, cfg.exact_cap)?.0,
                Method::Random => allocate::random_allocation(n, kappa, seed::derive(base, &[4]))?,
                _ => Allocation::none(n),
            };
            let sol = meanfield::approx_welfare(&inst, &d, &cfg.solver, seed::derive(base, &[5]));
            (d, sol)
        }
    };
    let mcmc = if cfg.mcmc_check {
        Some(dynamics::mcmc_allocation_welfare(&inst, &allocation, &cfg.sampler, seed::derive(base, &[6]))?)
    } else {
        None
    };
    let bfva_welfare = if n <= cfg.brute_cap && exact::count_allocations(n, kappa) <= OPTIONAL_SEARCH_LIMIT {
        Some(allocate::bfva(&inst, kappa, &cfg.solver, seed::derive(base, &[3]))?.1)
    } else {
        None
    };
    let output = AllocationOutput {
        n,
        kappa,
        method: cfg.method,
        a_n: inst.theta().a_n,
        treated: allocation.treated(),
        welfare_va: round_sig(solution.per_person()),
        welfare_mcmc: mcmc.map(|m| round_sig(m.estimate)),
        welfare_mcmc_stderr: mcmc.map(|m| round_sig(m.stderr)),
        converged: solution.converged,
        trace,
    };
    Ok((output, bounds::report(&inst, bfva_welfare)))
}

/// Bounds for one instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsEntry {
    pub n: usize,
    pub density: Option<f64>,
    pub replication: usize,
    pub report: BoundsReport,
}

/// Bound reports for the loaded instance or every generated instance.
/// The regret bound is scaled by the BFVA welfare where the search is
/// cheap, otherwise by N.
pub fn bounds(cfg: &ExperimentConfig) -> Result<Vec<BoundsEntry>> {
    cfg.validate()?;
    let instances = config_instances(cfg)?;
    instances
        .par_iter()
        .map(|li| {
            let inst = &li.instance;
            let n = inst.n();
            let kappa = cfg.kappa_for(n)?;
            let bfva = if n <= cfg.brute_cap && exact::count_allocations(n, kappa) <= OPTIONAL_SEARCH_LIMIT {
                let s = seed::derive(path_seed(cfg.seed, n, li.density.unwrap_or(0.0), li.replication), &[10]);
                Some(allocate::bfva(inst, kappa, &cfg.solver, s)?.1)
            } else {
                None
            };
            Ok(BoundsEntry { n, density: li.density, replication: li.replication, report: bounds::report(inst, bfva) })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> ExperimentConfig {
        ExperimentConfig {
            n: vec![6],
            density: vec![0.4],
            replications: 3,
            evaluators: vec![Evaluator::Exact, Evaluator::Va],
            random_draws: Some(4),
            ..Default::default()
        }
    }

    #[test]
    fn generated_instances_are_reproducible() {
        let cfg = small_cfg();
        let a = generate_instance(&cfg, 10, 0.3, 2).unwrap();
        let b = generate_instance(&cfg, 10, 0.3, 2).unwrap();
        assert_eq!(a.network(), b.network());
        assert_eq!(a.covariates(), b.covariates());
        let c = generate_instance(&cfg, 10, 0.3, 3).unwrap();
        assert_ne!(a.network(), c.network());
        assert_eq!(a.theta().a_n, 0.1);
    }

    #[test]
    fn zero_capacity_rules_coincide() {
        let cfg = ExperimentConfig { kappa: Some(0), replications: 1, ..small_cfg() };
        let cells = simulate(&cfg).unwrap();
        for e in [Evaluator::Exact, Evaluator::Va] {
            let vals: Vec<f64> = cells.iter().filter(|c| c.evaluator == e).map(|c| c.mean.unwrap()).collect();
            assert_eq!(vals.len(), 5);
            assert!(vals.iter().all(|&v| v == vals[0]), "{e}: {vals:?}");
        }
    }

    #[test]
    fn large_exact_cells_are_na() {
        let cfg = ExperimentConfig {
            n: vec![25],
            replications: 1,
            methods: vec![Method::Brute, Method::Greedy],
            ..small_cfg()
        };
        let cells = simulate(&cfg).unwrap();
        let brute = cells.iter().find(|c| c.method == Method::Brute).unwrap();
        assert_eq!(brute.na_reason, Some(na::SEARCH_INFEASIBLE));
        let greedy_exact = cells
            .iter()
            .find(|c| c.method == Method::Greedy && c.evaluator == Evaluator::Exact)
            .unwrap();
        assert_eq!(greedy_exact.na_reason, Some(na::EXACT_INFEASIBLE));
        let greedy_va = cells.iter().find(|c| c.method == Method::Greedy && c.evaluator == Evaluator::Va).unwrap();
        assert!(greedy_va.mean.unwrap() > 0.0);

        let mut buf = Vec::new();
        write_welfare_csv(&cells, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("brute,exact,NA,NA,1,search-infeasible"));
    }

    #[test]
    fn simulate_cells_are_ordered_and_bounded() {
        let cells = simulate(&small_cfg()).unwrap();
        assert_eq!(cells.len(), 10);
        for c in &cells {
            let m = c.mean.unwrap();
            assert!((0.0..=1.0).contains(&m) && c.stderr.unwrap() >= 0.0);
        }
        let get = |m: Method| cells.iter().find(|c| c.method == m && c.evaluator == Evaluator::Exact).unwrap().mean.unwrap();
        assert!(get(Method::Brute) >= get(Method::Greedy) - 1e-12);
        assert!(get(Method::Greedy) >= get(Method::None));
    }

    #[test]
    fn validation_rows_pass_on_small_instances() {
        let cfg = ExperimentConfig {
            sampler: dynamics::SamplerSettings { sweeps: 2000, burn_in: 500, ..Default::default() },
            ..small_cfg()
        };
        let rows = validate(&cfg).unwrap();
        assert_eq!(rows.len(), 6);
        for r in &rows {
            assert!(r.passed(), "{r:?}");
            assert!(r.exact.is_some() && r.stationarity.is_some());
            assert!(r.va_exact_gap().unwrap() < 0.01);
        }
        let mut buf = Vec::new();
        write_validation_csv(&rows, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 7);
    }

    #[test]
    fn allocate_on_generated_instance() {
        let cfg = ExperimentConfig { n: vec![8], kappa: Some(2), ..small_cfg() };
        let (out, report) = allocate(&cfg).unwrap();
        assert_eq!(out.treated.len(), 2);
        assert_eq!(out.trace.len(), 2);
        assert!(out.welfare_mcmc.is_none());
        assert!(report.regret_upper_bound > 0.0);
    }

    #[test]
    fn bounds_for_each_instance() {
        let entries = bounds(&small_cfg()).unwrap();
        assert_eq!(entries.len(), 3);
        assert!(entries.iter().all(|e| e.report.kl_upper_bound > 0.0));
    }
}
