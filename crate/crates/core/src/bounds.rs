//! Closed-form guarantees: the curvature and submodularity-ratio bounds that
//! drive the greedy guarantee, the KL bound on the mean-field
//! approximation, and the resulting regret bound.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::meanfield;
use crate::model::{logistic_derivative, Instance};

/// Per-instance extremes that enter every bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InstanceSummary {
    pub n: usize,
    pub max_degree: usize,
    pub min_degree: usize,
    pub m_upper: f64,
    pub m_lower: f64,
    pub min_x_theta2: f64,
    pub max_x_theta2: f64,
    pub max_x_theta3: f64,
    pub max_abs_x_theta2: f64,
    pub max_abs_x_theta3: f64,
}

impl InstanceSummary {
    pub fn of(instance: &Instance) -> Self {
        let fold = |v: &[f64], f: fn(f64, f64) -> f64, init: f64| v.iter().copied().fold(init, f);
        let (x2, x3) = (instance.x_theta2(), instance.x_theta3());
        let nonempty = |v: f64| if instance.n() == 0 { 0.0 } else { v };
        InstanceSummary {
            n: instance.n(),
            max_degree: instance.network().max_degree(),
            min_degree: instance.network().min_degree(),
            m_upper: instance.similarity().upper(),
            m_lower: instance.similarity().lower(),
            min_x_theta2: nonempty(fold(x2, f64::min, f64::INFINITY)),
            max_x_theta2: nonempty(fold(x2, f64::max, f64::NEG_INFINITY)),
            max_x_theta3: nonempty(fold(x3, f64::max, f64::NEG_INFINITY)),
            max_abs_x_theta2: x2.iter().fold(0.0, |a, v| a.max(v.abs())),
            max_abs_x_theta3: x3.iter().fold(0.0, |a, v| a.max(v.abs())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaReport {
    pub zeta: f64,
    pub positivity_holds: bool,
    pub assumption_n_holds: bool,
}

impl ZetaReport {
    /// Whether `zeta` certifies the greedy guarantee.
    pub fn certifying(&self) -> bool {
        self.positivity_holds && self.assumption_n_holds && self.zeta > 0.0 && self.zeta < 1.0
    }

    pub fn xi_up(&self) -> f64 {
        1.0 - self.zeta
    }

    pub fn gamma_low(&self) -> f64 {
        self.zeta
    }
}

/// `ζ = (1/N) · min{Λ'(lo), Λ'(hi)} · (A_N θ4 N_lower m_lower + θ1)`, where
/// `lo` and `hi` bracket every unit's field over all allocations and
/// outcome profiles.
pub fn zeta(instance: &Instance) -> ZetaReport {
    let t = instance.theta();
    let s = InstanceSummary::of(instance);
    let n = s.n as f64;
    let lo = t.theta0 + s.min_x_theta2;
    let hi = t.theta0
        + t.theta1
        + s.max_x_theta2
        + s.max_x_theta3
        + t.a_n * (t.theta4 + t.theta5 + t.theta6) * s.m_upper * s.max_degree as f64;
    let slope = logistic_derivative(lo).min(logistic_derivative(hi));
    let direct = t.a_n * t.theta4 * s.min_degree as f64 * s.m_lower + t.theta1;
    ZetaReport {
        zeta: slope * direct / n,
        positivity_holds: t.positivity_holds(),
        assumption_n_holds: n >= direct / 4.0,
    }
}

/// `(1/ξ)(1 − e^{−ξγ})`, equal to `γ` at `ξ = 0`.
pub fn guarantee_factor(xi: f64, gamma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&xi) || !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::invalid(format!(
            "guarantee factor needs xi in [0,1] and gamma in (0,1], got xi={xi}, gamma={gamma}"
        )));
    }
    if xi == 0.0 {
        return Ok(gamma);
    }
    Ok(-(-xi * gamma).exp_m1() / xi)
}

/// The guarantee factor implied by a ζ report; 0 when ζ gives no
/// guarantee.
pub fn guarantee_from_zeta(z: &ZetaReport) -> f64 {
    if z.zeta.is_nan() || z.zeta <= 0.0 {
        return 0.0;
    }
    let gamma = z.zeta.min(1.0);
    guarantee_factor(1.0 - gamma, gamma).unwrap_or(0.0)
}

/// The coefficients `ã`, `b̃`, `c̃` of the KL bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

pub fn kl_coefficients(instance: &Instance) -> KlCoefficients {
    let t = instance.theta();
    let s = InstanceSummary::of(instance);
    let n = s.n as f64;
    let nbar = s.max_degree as f64;
    let direct = t.theta0.abs() + t.theta1.abs() + s.max_abs_x_theta2 + s.max_abs_x_theta3;
    let spill = t.theta4.abs() + t.theta5.abs() + t.theta6.abs();
    KlCoefficients {
        a: n * direct + s.m_upper * t.a_n * n * nbar * spill,
        b: direct + s.m_upper * t.a_n * nbar * spill,
        c: s.m_upper * t.a_n * (t.theta5.abs() + t.theta6.abs()),
    }
}

/// Explicit upper bound on `KL(Q* || P)`:
///
/// ```text
/// b̃/4 + 3 + 2N log 2 + log(N³ + N)
///     + 4 sqrt(b̃² N + ¼ N̄ N (ã c̃² + b̃² c̃ + 4 b̃ c̃))
/// ```
pub fn kl_upper_bound(instance: &Instance) -> f64 {
    let KlCoefficients { a, b, c } = kl_coefficients(instance);
    let n = instance.n() as f64;
    let nbar = instance.network().max_degree() as f64;
    let ln2 = std::f64::consts::LN_2;
    let root = (b * b * n + 0.25 * nbar * n * (a * c * c + b * b * c + 4.0 * b * c)).sqrt();
    b / 4.0 + 3.0 + 2.0 * n * ln2 + (n.powi(3) + n).ln() + 4.0 * root
}

/// Constants of the asymptotic form of the KL bound; reported for
/// reference only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AsymptoticConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub c8: f64,
    pub c9: f64,
}

pub fn asymptotic_constants(instance: &Instance) -> AsymptoticConstants {
    let t = instance.theta();
    let s = InstanceSummary::of(instance);
    let m = s.m_upper;
    let direct = t.theta0.abs() + t.theta1.abs() + s.max_abs_x_theta2 + s.max_abs_x_theta3;
    let spill = t.theta4.abs() + t.theta5.abs() + t.theta6.abs();
    let pair = t.theta5.abs() + t.theta6.abs();
    AsymptoticConstants {
        c1: 0.25 * m * spill,
        c2: 2.0 * std::f64::consts::LN_2,
        c3: 32.0 * m * direct * spill,
        c4: 16.0 * m * m * spill * spill,
        c5: 4.0 * m * (direct + 4.0) * direct * pair,
        c6: 8.0 * m * m * (direct + 2.0) * spill * pair,
        c7: 4.0 * m.powi(3) * spill * spill * pair,
        c8: 4.0 * m * m * direct * pair * pair,
        c9: 4.0 * m.powi(3) * spill * pair * pair,
    }
}

/// `sqrt(8 · KL bound) + (1 − guarantee) · U` with `U` the BFVA welfare
/// when known and `N` otherwise.
pub fn regret_upper_bound(instance: &Instance, bfva_welfare: Option<f64>) -> f64 {
    let scale = bfva_welfare.unwrap_or(instance.n() as f64);
    let factor = guarantee_from_zeta(&zeta(instance));
    (8.0 * kl_upper_bound(instance)).sqrt() + (1.0 - factor) * scale
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsReport {
    pub zeta: f64,
    pub xi_up: f64,
    pub gamma_low: f64,
    pub guarantee_factor: f64,
    pub kl_upper_bound: f64,
    pub regret_upper_bound: f64,
    pub assumption_n_holds: bool,
    pub positivity_holds: bool,
    pub contraction_holds: bool,
    pub asymptotic: AsymptoticConstants,
    pub diagnostics: Vec<String>,
}

pub fn report(instance: &Instance, bfva_welfare: Option<f64>) -> BoundsReport {
    let z = zeta(instance);
    let mut diagnostics = Vec::new();
    if !z.positivity_holds {
        diagnostics.push(
            "theta violates the sign profile (theta1, theta4 > 0; theta3, theta5, theta6 >= 0); \
             the greedy guarantee is not certified"
                .to_string(),
        );
    }
    if !z.assumption_n_holds {
        diagnostics.push("network too small relative to the direct effect bound; guarantee not certified".into());
    }
    if instance.similarity().lower() == 0.0 || instance.network().min_degree() == 0 {
        diagnostics.push(
            "smallest similarity or degree is 0: zeta reduces to the direct treatment effect theta1".into(),
        );
    }
    let contraction = meanfield::instance_certified(instance);
    if !contraction {
        diagnostics.push("contraction certificate fails: the fixed point may not be unique".into());
    }
    BoundsReport {
        zeta: z.zeta,
        xi_up: z.xi_up(),
        gamma_low: z.gamma_low(),
        guarantee_factor: guarantee_from_zeta(&z),
        kl_upper_bound: kl_upper_bound(instance),
        regret_upper_bound: regret_upper_bound(instance, bfva_welfare),
        assumption_n_holds: z.assumption_n_holds,
        positivity_holds: z.positivity_holds,
        contraction_holds: contraction,
        asymptotic: asymptotic_constants(instance),
        diagnostics,
    }
}
