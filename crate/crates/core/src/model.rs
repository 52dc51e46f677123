//! Structural parameters, utilities, the potential function and the
//! quadratic weight system that parameterises the stationary Gibbs law.
//!
//! With treatment vector `d`, the potential of an outcome vector `y` is
//! `w1'y + y'w2 y` where
//!
//! ```text
//! w1[i]    = θ0 + θ1 d_i + X_i'θ2 + X_i'θ3 d_i + A_N Σ_j θ4 m_ij G_ij d_j
//! w2[i][j] = (A_N / 2) m_ij G_ij (θ5 + θ6 d_i d_j)
//! ```

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::network::{similarity_matrix, Covariates, Network, SimilarityKernel, SimilarityMatrix};

/// Standard logistic function, stable for large `|x|`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Derivative of the logistic function, `Λ(x)(1 - Λ(x))`.
pub fn logistic_derivative(x: f64) -> f64 {
    let p = logistic(x);
    p * (1.0 - p)
}

pub(crate) fn scalar_or_vec<'de, D>(de: D) -> std::result::Result<Vec<f64>, D::Error>
where
    D: Deserializer<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum ScalarOrVec {
        Scalar(f64),
        Vec(Vec<f64>),
    }
    Ok(match ScalarOrVec::deserialize(de)? {
        ScalarOrVec::Scalar(v) => vec![v],
        ScalarOrVec::Vec(v) => v,
    })
}

/// Structural parameters θ0..θ6 plus the spillover scaling `A_N`.
///
/// `theta2` and `theta3` carry one coefficient per covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaParams {
    pub theta0: f64,
    pub theta1: f64,
    #[serde(deserialize_with = "scalar_or_vec")]
    pub theta2: Vec<f64>,
    #[serde(deserialize_with = "scalar_or_vec")]
    pub theta3: Vec<f64>,
    pub theta4: f64,
    pub theta5: f64,
    pub theta6: f64,
    pub a_n: f64,
}

impl ThetaParams {
    /// The weak-spillover benchmark parameters (satisfies the contraction
    /// condition whenever `A_N N̄ <= 2`).
    pub fn set1(a_n: f64) -> Self {
        ThetaParams {
            theta0: -2.0,
            theta1: 0.5,
            theta2: vec![0.1],
            theta3: vec![0.6],
            theta4: 0.7,
            theta5: 0.8,
            theta6: 0.9,
            a_n,
        }
    }

    /// The strong-spillover benchmark parameters.
    pub fn set2(a_n: f64) -> Self {
        ThetaParams {
            theta5: 7.0,
            theta6: 7.0,
            ..Self::set1(a_n)
        }
    }

    pub fn param_set(id: u8, a_n: f64) -> Option<Self> {
        match id {
            1 => Some(Self::set1(a_n)),
            2 => Some(Self::set2(a_n)),
            _ => None,
        }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if !(self.a_n > 0.0 && self.a_n.is_finite()) {
            return Err(Error::invalid(format!("a_n must be positive, got {}", self.a_n)));
        }
        if self.theta2.len() != k || self.theta3.len() != k {
            return Err(Error::invalid(format!(
                "theta2/theta3 need {k} coefficients (one per covariate), got {}/{}",
                self.theta2.len(),
                self.theta3.len()
            )));
        }
        let all = [self.theta0, self.theta1, self.theta4, self.theta5, self.theta6];
        if all.iter().chain(&self.theta2).chain(&self.theta3).any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta values must be finite"));
        }
        Ok(())
    }

    /// θ1, θ3, θ4, θ5, θ6 >= 0 with θ1, θ4 > 0: the sign profile under which
    /// approximated welfare is monotone in the treated set.
    pub fn positivity_holds(&self) -> bool {
        self.theta1 > 0.0
            && self.theta4 > 0.0
            && self.theta3.iter().all(|&v| v >= 0.0)
            && self.theta5 >= 0.0
            && self.theta6 >= 0.0
    }
}

/// Binary treatment vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Allocation {
    d: Vec<bool>,
}

impl Allocation {
    pub fn none(n: usize) -> Self {
        Allocation { d: vec![false; n] }
    }

    pub fn all(n: usize) -> Self {
        Allocation { d: vec![true; n] }
    }

    pub fn from_treated(n: usize, treated: &[usize]) -> Result<Self> {
        let mut d = vec![false; n];
        for &i in treated {
            if i >= n {
                return Err(Error::invalid(format!("treated unit {i} out of range for {n} units")));
            }
            d[i] = true;
        }
        Ok(Allocation { d })
    }

    pub fn from_bools(d: Vec<bool>) -> Self {
        Allocation { d }
    }

    pub fn n(&self) -> usize {
        self.d.len()
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.d[i]
    }

    pub fn treated_count(&self) -> usize {
        self.d.iter().filter(|&&t| t).count()
    }

    /// Treated indices in increasing order.
    pub fn treated(&self) -> Vec<usize> {
        (0..self.d.len()).filter(|&i| self.d[i]).collect()
    }

    pub fn with_treated(&self, i: usize) -> Self {
        let mut d = self.d.clone();
        d[i] = true;
        Allocation { d }
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.d
    }
}

/// `w1` and the sparse symmetric zero-diagonal `w2` of a Gibbs law.
///
/// `w2` is stored per row as `(column, weight)` pairs over the nonzero
/// pattern, which for model-built systems is the network's edge set.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSystem {
    pub w1: Vec<f64>,
    couplings: Vec<Vec<(usize, f64)>>,
}

impl WeightSystem {
    /// Builds a weight system from a dense `w2`, which must be symmetric
    /// with zero diagonal.
    pub fn from_dense(w1: Vec<f64>, w2: &[Vec<f64>]) -> Result<Self> {
        let n = w1.len();
        if w2.len() != n || w2.iter().any(|row| row.len() != n) {
            return Err(Error::invalid("w2 must be N x N"));
        }
        let mut couplings = vec![Vec::new(); n];
        for i in 0..n {
            if w2[i][i] != 0.0 {
                return Err(Error::invalid("w2 must have a zero diagonal"));
            }
            for j in 0..n {
                if w2[i][j] != w2[j][i] {
                    return Err(Error::invalid("w2 must be symmetric"));
                }
                if i != j && w2[i][j] != 0.0 {
                    couplings[i].push((j, w2[i][j]));
                }
            }
        }
        Ok(WeightSystem { w1, couplings })
    }

    /// Independent units: `w2 = 0`.
    pub fn independent(w1: Vec<f64>) -> Self {
        let n = w1.len();
        WeightSystem { w1, couplings: vec![Vec::new(); n] }
    }

    pub fn n(&self) -> usize {
        self.w1.len()
    }

    /// Nonzero `(j, w2[i][j])` entries of row `i`.
    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.couplings[i]
    }

    pub fn w2(&self, i: usize, j: usize) -> f64 {
        self.couplings[i]
            .iter()
            .find(|&&(k, _)| k == j)
            .map_or(0.0, |&(_, w)| w)
    }

    pub fn dense_w2(&self) -> Vec<Vec<f64>> {
        let n = self.n();
        let mut out = vec![vec![0.0; n]; n];
        for (i, row) in self.couplings.iter().enumerate() {
            for &(j, w) in row {
                out[i][j] = w;
            }
        }
        out
    }

    /// `w1[i] + 2 Σ_j w2[i][j] v_j`: the change in potential from switching
    /// unit `i` on, or the mean-field input of unit `i` when `v` is a mean.
    pub fn field<V: Copy + Into<f64>>(&self, i: usize, v: &[V]) -> f64 {
        let s: f64 = self.couplings[i].iter().map(|&(j, w)| w * v[j].into()).sum();
        self.w1[i] + 2.0 * s
    }

    /// `w1'y + y'w2 y` for a binary `y`.
    pub fn energy(&self, y: &[bool]) -> f64 {
        let mut total = 0.0;
        for i in 0..self.n() {
            if y[i] {
                total += self.w1[i];
                total += self.couplings[i]
                    .iter()
                    .filter(|&&(j, _)| y[j])
                    .map(|&(_, w)| w)
                    .sum::<f64>();
            }
        }
        total
    }

    /// `w1'μ + μ'w2 μ` for a real vector `μ`.
    pub fn mean_energy(&self, mu: &[f64]) -> f64 {
        (0..self.n())
            .map(|i| {
                let s: f64 = self.couplings[i].iter().map(|&(j, w)| w * mu[j]).sum();
                mu[i] * (self.w1[i] + s)
            })
            .sum()
    }

    /// Upper bound on the ℓ1 Lipschitz constant of the mean-field update
    /// map, `max_j Σ_i |2 w2[i][j]| / 4`.
    pub fn lipschitz_bound(&self) -> f64 {
        self.couplings
            .iter()
            .map(|row| row.iter().map(|&(_, w)| 2.0 * w.abs()).sum::<f64>() / 4.0)
            .fold(0.0, f64::max)
    }
}

/// A network, its covariates and similarity weights, and the parameters:
/// everything needed to evaluate welfare for any allocation.
#[derive(Debug, Clone)]
pub struct Instance {
    network: Network,
    covariates: Covariates,
    similarity: SimilarityMatrix,
    theta: ThetaParams,
    x_theta2: Vec<f64>,
    x_theta3: Vec<f64>,
}

impl Instance {
    pub fn new(
        network: Network,
        covariates: Covariates,
        kernel: SimilarityKernel,
        theta: ThetaParams,
    ) -> Result<Self> {
        let similarity = similarity_matrix(&covariates, kernel)?;
        Self::with_similarity(network, covariates, similarity, theta)
    }

    pub fn with_similarity(
        network: Network,
        covariates: Covariates,
        similarity: SimilarityMatrix,
        theta: ThetaParams,
    ) -> Result<Self> {
        if network.n() != covariates.n() || similarity.n() != network.n() {
            return Err(Error::invalid(format!(
                "dimension mismatch: network {} units, covariates {} rows, similarity {}",
                network.n(),
                covariates.n(),
                similarity.n()
            )));
        }
        theta.validate(covariates.k())?;
        let x_theta2 = covariates.project(&theta.theta2);
        let x_theta3 = covariates.project(&theta.theta3);
        Ok(Instance {
            network,
            covariates,
            similarity,
            theta,
            x_theta2,
            x_theta3,
        })
    }

    pub fn n(&self) -> usize {
        self.network.n()
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn covariates(&self) -> &Covariates {
        &self.covariates
    }

    pub fn similarity(&self) -> &SimilarityMatrix {
        &self.similarity
    }

    pub fn theta(&self) -> &ThetaParams {
        &self.theta
    }

    /// `X_i'θ2` per unit.
    pub fn x_theta2(&self) -> &[f64] {
        &self.x_theta2
    }

    /// `X_i'θ3` per unit.
    pub fn x_theta3(&self) -> &[f64] {
        &self.x_theta3
    }

    /// Same instance with different parameters.
    pub fn with_theta(&self, theta: ThetaParams) -> Result<Self> {
        Self::with_similarity(
            self.network.clone(),
            self.covariates.clone(),
            self.similarity.clone(),
            theta,
        )
    }

    fn check_allocation(&self, d: &Allocation) {
        assert_eq!(d.n(), self.n(), "allocation length must match the instance");
    }

    /// Linear coefficient of `y_i` given treatments `d`.
    fn linear_term(&self, i: usize, d: &Allocation) -> f64 {
        let t = &self.theta;
        let di = if d.is_treated(i) { 1.0 } else { 0.0 };
        let treated_nbrs: f64 = self
            .network
            .neighbors(i)
            .iter()
            .filter(|&&j| d.is_treated(j))
            .map(|&j| self.similarity.get(i, j))
            .sum();
        t.theta0
            + t.theta1 * di
            + self.x_theta2[i]
            + self.x_theta3[i] * di
            + t.a_n * t.theta4 * treated_nbrs
    }

    fn pair_strength(&self, i: usize, j: usize, d: &Allocation) -> f64 {
        let t = &self.theta;
        let both = d.is_treated(i) && d.is_treated(j);
        self.similarity.get(i, j) * (t.theta5 + if both { t.theta6 } else { 0.0 })
    }

    /// Utility of unit `i` at outcome profile `y`, relative to `y_i = 0`.
    pub fn utility(&self, i: usize, y: &[bool], d: &Allocation) -> f64 {
        self.check_allocation(d);
        if !y[i] {
            return 0.0;
        }
        let spill: f64 = self
            .network
            .neighbors(i)
            .iter()
            .filter(|&&j| y[j])
            .map(|&j| self.pair_strength(i, j, d))
            .sum();
        self.linear_term(i, d) + self.theta.a_n * spill
    }

    /// The potential Φ(y): linear terms plus half the pairwise terms summed
    /// over ordered pairs.
    pub fn potential(&self, y: &[bool], d: &Allocation) -> f64 {
        self.check_allocation(d);
        let mut linear = 0.0;
        let mut pairs = 0.0;
        for i in (0..self.n()).filter(|&i| y[i]) {
            linear += self.linear_term(i, d);
            for &j in self.network.neighbors(i) {
                if y[j] {
                    pairs += self.pair_strength(i, j, d);
                }
            }
        }
        linear + 0.5 * self.theta.a_n * pairs
    }

    /// The weight system induced by allocation `d`.
    pub fn weights(&self, d: &Allocation) -> WeightSystem {
        self.check_allocation(d);
        let half = 0.5 * self.theta.a_n;
        let w1 = (0..self.n()).map(|i| self.linear_term(i, d)).collect();
        let couplings = (0..self.n())
            .map(|i| {
                self.network
                    .neighbors(i)
                    .iter()
                    .map(|&j| (j, half * self.pair_strength(i, j, d)))
                    .collect()
            })
            .collect();
        WeightSystem { w1, couplings }
    }

    /// Probability that unit `i`, when selected, chooses 1 given the others'
    /// current outcomes. `y[i]` is ignored.
    pub fn conditional_choice_prob(&self, i: usize, y: &[bool], d: &Allocation) -> f64 {
        let mut y1 = y.to_vec();
        y1[i] = true;
        logistic(self.utility(i, &y1, d))
    }

    /// The instance with units relabelled so that old unit `i` becomes
    /// `perm[i]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        let network = self.network.relabel(perm)?;
        let covariates = self.covariates.relabel(perm)?;
        let n = self.n();
        // rebuild m by permuting rather than re-evaluating a kernel
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                rows[perm[i]][perm[j]] = self.similarity.get(i, j);
            }
        }
        let similarity = SimilarityMatrix::from_rows(&rows)?;
        Self::with_similarity(network, covariates, similarity, self.theta.clone())
    }
}
