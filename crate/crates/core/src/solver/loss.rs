//! Parametric Dinkelbach loss with the constraint penalty.
//!
//! `L = -min(C, D) (1 - xi) + eta P_T + kappa Omega`, where capacity is the
//! lower bound `C_S` and `Omega` sums hinge violations of the CSAT floor, the
//! bandwidth budget and each BS power cap.

use crate::capacity::PowerModel;
use crate::error::{Error, Result};
use crate::metrics::js_divergence_with_gradient;
use crate::propagation::Deployment;

/// Constraint levels covered by the penalty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constraints {
    pub zeta_min: f64,
    pub p_max: f64,
    pub b_max: f64,
}

/// Every term of one loss evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub loss: f64,
    /// `min(C, D) (1 - xi)`.
    pub utility: f64,
    pub xi: f64,
    pub c_tot: f64,
    pub p_t: f64,
    pub csat: f64,
    pub penalty: f64,
}

impl LossTerms {
    /// Penalty-adjusted utility per watt, the Dinkelbach ratio of this point.
    pub fn ratio(&self, kappa: f64) -> f64 {
        (self.utility - kappa * self.penalty) / self.p_t
    }
}

/// Excess over a budget, ignoring the last-bit overshoot left by projections.
fn excess(value: f64, cap: f64) -> f64 {
    let over = value - cap;
    if over > 1e-12 * cap.abs() {
        over
    } else {
        0.0
    }
}

/// Hinge violations of the bandwidth budget and per-BS power caps.
pub(crate) fn resource_violation(dep: &Deployment, c: &Constraints) -> f64 {
    let bw: f64 = dep.bs.iter().map(|b| b.bandwidth).sum();
    let power: f64 = dep.bs.iter().map(|b| excess(b.beam_power(), c.p_max)).sum();
    excess(bw, c.b_max) + power
}

/// Mismatch, utility and CSAT of a capacity field; zero capacity counts as `xi = 1`.
fn mismatch(cap: &[f64], traffic: &[f64]) -> Result<(f64, f64, Option<Vec<f64>>)> {
    let c_tot: f64 = cap.iter().sum();
    match js_divergence_with_gradient(cap, traffic) {
        Ok((xi, g)) => Ok((c_tot, xi, Some(g))),
        Err(Error::UndefinedMismatch(_)) => Ok((c_tot, 1.0, None)),
        Err(e) => Err(e),
    }
}

pub fn penalty_omega(dep: &Deployment, cap: &[f64], traffic: &[f64], constraints: &Constraints) -> Result<f64> {
    let (c_tot, xi, _) = mismatch(cap, traffic)?;
    let d_tot: f64 = traffic.iter().sum();
    let csat = c_tot.min(d_tot) * (1.0 - xi) / d_tot;
    Ok((constraints.zeta_min - csat).max(0.0) + resource_violation(dep, constraints))
}

/// Loss terms and, optionally, the loss gradient with respect to each capacity cell.
#[allow(clippy::too_many_arguments)]
pub(crate) fn compose(
    cap: &[f64],
    traffic: &[f64],
    d_tot: f64,
    p_t: f64,
    resource: f64,
    constraints: &Constraints,
    eta: f64,
    kappa: f64,
    want_grad: bool,
) -> Result<(LossTerms, Option<Vec<f64>>)> {
    let (c_tot, xi, dxi) = mismatch(cap, traffic)?;
    let utility = c_tot.min(d_tot) * (1.0 - xi);
    let csat = utility / d_tot;
    let csat_gap = constraints.zeta_min - csat;
    let penalty = csat_gap.max(0.0) + resource;
    let loss = -utility + eta * p_t + kappa * penalty;
    let terms = LossTerms {
        loss,
        utility,
        xi,
        c_tot,
        p_t,
        csat,
        penalty,
    };
    if !loss.is_finite() {
        return Err(Error::GradientEvaluation { index: 0, value: loss });
    }
    if !want_grad {
        return Ok((terms, None));
    }
    let grad = match dxi {
        Some(dxi) => {
            // The min kink takes the capacity branch when C <= D.
            let capacity_branch = c_tot <= d_tot;
            let scale = 1.0 + if csat_gap > 0.0 { kappa / d_tot } else { 0.0 };
            dxi.iter()
                .map(|g| {
                    let du = if capacity_branch {
                        (1.0 - xi) - c_tot * g
                    } else {
                        -d_tot * g
                    };
                    -du * scale
                })
                .collect()
        }
        None => vec![0.0; cap.len()],
    };
    Ok((terms, Some(grad)))
}

/// Loss terms of a deployment given its lower-bound capacity field.
pub fn loss_terms(
    dep: &Deployment,
    cap: &[f64],
    traffic: &[f64],
    power: &PowerModel,
    constraints: &Constraints,
    eta: f64,
    kappa: f64,
) -> Result<LossTerms> {
    let d_tot: f64 = traffic.iter().sum();
    let p_t = crate::capacity::total_power(dep, power);
    let resource = resource_violation(dep, constraints);
    Ok(compose(cap, traffic, d_tot, p_t, resource, constraints, eta, kappa, false)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point;
    use crate::propagation::BsConfig;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn constraints() -> Constraints {
        Constraints {
            zeta_min: 0.8,
            p_max: 60.0,
            b_max: 6e9,
        }
    }

    fn one_bs(power_w: f64) -> Deployment {
        Deployment {
            bs: vec![BsConfig {
                location: Point::default(),
                beams: vec![vec![Complex64::new(power_w.sqrt(), 0.0)]],
                bandwidth: 6e9,
            }],
            ris: vec![],
        }
    }

    #[test]
    fn feasible_has_no_penalty() {
        let d = [1.0, 2.0, 3.0];
        assert_eq!(penalty_omega(&one_bs(10.0), &d, &d, &constraints()).unwrap(), 0.0);
    }

    #[test]
    fn csat_shortfall_is_penalized() {
        // Matched shape at 70% of the demand gives CSAT 0.7.
        let d = [1.0, 2.0, 3.0];
        let c: Vec<f64> = d.iter().map(|v| v * 0.7).collect();
        assert_relative_eq!(
            penalty_omega(&one_bs(10.0), &c, &d, &constraints()).unwrap(),
            0.1,
            max_relative = 1e-12
        );
    }

    #[test]
    fn power_excess_is_penalized() {
        let d = [1.0, 2.0];
        assert_relative_eq!(
            penalty_omega(&one_bs(61.0), &d, &d, &constraints()).unwrap(),
            1.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_capacity_keeps_loss_finite() {
        let power = PowerModel::reference();
        let dep = one_bs(0.0);
        let d = [1.0, 3.0];
        let kappa = 1e6;
        let t = loss_terms(&dep, &[0.0, 0.0], &d, &power, &constraints(), 2.0, kappa).unwrap();
        assert_eq!(t.utility, 0.0);
        assert_relative_eq!(t.loss, 2.0 * 100.0 + kappa * 0.8, max_relative = 1e-12);
    }

    #[test]
    fn matched_field_gives_negative_demand() {
        let power = PowerModel::reference();
        let d = [2.0, 5.0];
        let t = loss_terms(&one_bs(1.0), &d, &d, &power, &constraints(), 0.0, 0.0).unwrap();
        assert_relative_eq!(t.loss, -7.0, max_relative = 1e-12);
    }

    #[test]
    fn random_loss_matches_composition_oracle() {
        let power = PowerModel::reference();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            let n = rng.gen_range(2..30);
            let c: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 1e9).collect();
            let d: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 1e9).collect();
            let dep = one_bs(rng.gen_range(0.0..80.0));
            let eta = rng.gen_range(0.0..1e7);
            let kappa = rng.gen_range(0.0..1e10);
            let t = loss_terms(&dep, &c, &d, &power, &constraints(), eta, kappa).unwrap();
            let ct: f64 = c.iter().sum();
            let dt: f64 = d.iter().sum();
            let xi = crate::metrics::js_divergence(&c, &d).unwrap();
            let u = ct.min(dt) * (1.0 - xi);
            let omega = penalty_omega(&dep, &c, &d, &constraints()).unwrap();
            let p = crate::capacity::total_power(&dep, &power);
            let oracle = -u + eta * p + kappa * omega;
            assert_relative_eq!(t.loss, oracle, max_relative = 1e-12, epsilon = 1e-3);
        }
    }

    #[test]
    fn capacity_gradient_matches_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..40 {
            let n = 10;
            let scale = if trial % 2 == 0 { 0.5 } else { 3.0 };
            let c: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0) * scale).collect();
            let d: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
            let dt: f64 = d.iter().sum();
            let cons = Constraints {
                zeta_min: 0.9,
                ..constraints()
            };
            let f = |c: &[f64]| compose(c, &d, dt, 10.0, 0.0, &cons, 0.1, 5.0, false).unwrap().0.loss;
            let (_, g) = compose(&c, &d, dt, 10.0, 0.0, &cons, 0.1, 5.0, true).unwrap();
            let g = g.unwrap();
            for k in 0..n {
                let h = 1e-6;
                let mut up = c.clone();
                let mut dn = c.clone();
                up[k] += h;
                dn[k] -= h;
                let fd = (f(&up) - f(&dn)) / (2.0 * h);
                assert!(
                    (fd - g[k]).abs() < 1e-5 * (1.0 + g[k].abs()),
                    "{trial}/{k}: {fd} vs {}",
                    g[k]
                );
            }
        }
    }
}
