//! Traffic-capacity mismatch and efficiency metrics.
//!
//! Capacity and traffic are normalized into spatial densities and compared with
//! the Jensen-Shannon divergence (base-2 logs, so values lie in `[0, 1]`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Summary metrics of one deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub c_tot: f64,
    pub d_tot: f64,
    pub p_t: f64,
    pub xi: f64,
    pub csat: f64,
    pub ee: f64,
    pub iree: f64,
}

impl Metrics {
    /// Evaluates every metric; zero total capacity is reported as the worst mismatch.
    pub fn evaluate(cap: &[f64], traffic: &[f64], p_t: f64) -> Result<Self> {
        check_power(p_t)?;
        check_lengths(cap, traffic)?;
        let c_tot: f64 = cap.iter().sum();
        let d_tot: f64 = traffic.iter().sum();
        let xi = match js_divergence(cap, traffic) {
            Ok(x) => x,
            Err(Error::UndefinedMismatch(_)) => 1.0,
            Err(e) => return Err(e),
        };
        let utility = c_tot.min(d_tot) * (1.0 - xi);
        Ok(Metrics {
            c_tot,
            d_tot,
            p_t,
            xi,
            csat: (utility / d_tot).clamp(0.0, 1.0),
            ee: c_tot / p_t,
            iree: utility / p_t,
        })
    }

    /// Mean of several metric records, field by field.
    pub fn mean(items: &[Metrics]) -> Option<Metrics> {
        if items.is_empty() {
            return None;
        }
        let k = items.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / k;
        Some(Metrics {
            c_tot: avg(|m| m.c_tot),
            d_tot: avg(|m| m.d_tot),
            p_t: avg(|m| m.p_t),
            xi: avg(|m| m.xi),
            csat: avg(|m| m.csat),
            ee: avg(|m| m.ee),
            iree: avg(|m| m.iree),
        })
    }
}

fn check_lengths(cap: &[f64], traffic: &[f64]) -> Result<()> {
    if cap.len() != traffic.len() {
        return Err(Error::invalid(format!(
            "capacity has {} cells, traffic has {}",
            cap.len(),
            traffic.len()
        )));
    }
    Ok(())
}

fn check_power(p_t: f64) -> Result<()> {
    if !(p_t > 0.0) {
        return Err(Error::invalid(format!("total power must be positive, got {p_t}")));
    }
    Ok(())
}

fn totals(cap: &[f64], traffic: &[f64]) -> Result<(f64, f64)> {
    check_lengths(cap, traffic)?;
    let c: f64 = cap.iter().sum();
    let d: f64 = traffic.iter().sum();
    if !(c > 0.0) {
        return Err(Error::UndefinedMismatch("total capacity is zero".into()));
    }
    if !(d > 0.0) {
        return Err(Error::UndefinedMismatch("total traffic is zero".into()));
    }
    Ok((c, d))
}

/// `x log2(2x / (x + y))` with the zero conventions of the discrete divergence.
#[inline]
fn js_term(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * (2.0 * x / (x + y)).log2()
    }
}

pub fn js_divergence(cap: &[f64], traffic: &[f64]) -> Result<f64> {
    let (c, d) = totals(cap, traffic)?;
    let mut acc = 0.0;
    for (&cq, &dq) in cap.iter().zip(traffic) {
        let p = cq / c;
        let r = dq / d;
        acc += js_term(p, r) + js_term(r, p);
    }
    Ok((0.5 * acc).clamp(0.0, 1.0))
}

/// Divergence and its gradient with respect to every capacity cell.
pub fn js_divergence_with_gradient(cap: &[f64], traffic: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (c, d) = totals(cap, traffic)?;
    let xi = js_divergence(cap, traffic)?;
    // d xi / d p_q = 0.5 log2(2p / (p + r)); cells without capacity get a zero slope.
    let g: Vec<f64> = cap
        .iter()
        .zip(traffic)
        .map(|(&cq, &dq)| {
            let p = cq / c;
            let r = dq / d;
            if p > 0.0 {
                0.5 * (2.0 * p / (p + r)).log2()
            } else {
                0.0
            }
        })
        .collect();
    let mean: f64 = cap.iter().zip(&g).map(|(cq, gq)| cq / c * gq).sum();
    Ok((xi, g.into_iter().map(|gq| (gq - mean) / c).collect()))
}

pub fn iree(cap: &[f64], traffic: &[f64], p_t: f64) -> Result<f64> {
    Ok(Metrics::evaluate(cap, traffic, p_t)?.iree)
}

pub fn csat(cap: &[f64], traffic: &[f64]) -> Result<f64> {
    let (c, d) = totals(cap, traffic)?;
    let xi = js_divergence(cap, traffic)?;
    Ok((c.min(d) * (1.0 - xi) / d).clamp(0.0, 1.0))
}

pub fn ee(cap: &[f64], p_t: f64) -> Result<f64> {
    check_power(p_t)?;
    Ok(cap.iter().sum::<f64>() / p_t)
}

/// The three quantities of the divergence lower-bound chain
/// `xi >= sum (sqrt p - sqrt r)^2 >= sqrt(sum (p - r)^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HellingerReport {
    pub xi: f64,
    pub hellinger_sq: f64,
    pub l2_of_density_gap: f64,
}

impl HellingerReport {
    /// Whether the divergence dominates the squared Hellinger term.
    pub fn first_step_holds(&self) -> bool {
        self.xi >= self.hellinger_sq
    }

    /// Whether the squared Hellinger term dominates the L2 density gap.
    pub fn second_step_holds(&self) -> bool {
        self.hellinger_sq >= self.l2_of_density_gap
    }
}

pub fn hellinger_chain_report(cap: &[f64], traffic: &[f64]) -> Result<HellingerReport> {
    let (c, d) = totals(cap, traffic)?;
    let mut h = 0.0;
    let mut l2 = 0.0;
    for (&cq, &dq) in cap.iter().zip(traffic) {
        let p = cq / c;
        let r = dq / d;
        h += (p.sqrt() - r.sqrt()).powi(2);
        l2 += (p - r).powi(2);
    }
    Ok(HellingerReport {
        xi: js_divergence(cap, traffic)?,
        hellinger_sq: h,
        l2_of_density_gap: l2.sqrt(),
    })
}

/// Violation counts of each step of the lower-bound chain over field pairs.
pub fn chain_violations(pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<(usize, usize)> {
    let mut first = 0;
    let mut second = 0;
    for (c, d) in pairs {
        let r = hellinger_chain_report(c, d)?;
        first += usize::from(!r.first_step_holds());
        second += usize::from(!r.second_step_holds());
    }
    Ok((first, second))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct two-term evaluation written independently of the library.
    fn oracle_js(c: &[f64], d: &[f64]) -> f64 {
        let ct: f64 = c.iter().sum();
        let dt: f64 = d.iter().sum();
        let mut s = 0.0;
        for i in 0..c.len() {
            let p = c[i] / ct;
            let r = d[i] / dt;
            let m = 0.5 * (p + r);
            if p > 0.0 {
                s += 0.5 * p * (p / m).ln() / 2f64.ln();
            }
            if r > 0.0 {
                s += 0.5 * r * (r / m).ln() / 2f64.ln();
            }
        }
        s
    }

    #[test]
    fn two_cell_case() {
        let c = [0.75, 0.25];
        let d = [0.25, 0.75];
        let xi = js_divergence(&c, &d).unwrap();
        assert_relative_eq!(xi, oracle_js(&c, &d), max_relative = 1e-14);
        // Frozen from the oracle: 0.75 log2(1.5) - 0.25.
        assert_relative_eq!(xi, 0.188_721_875_540_867, max_relative = 1e-12);
    }

    #[test]
    fn identical_and_disjoint() {
        let d = [1.0, 2.0, 3.0];
        let c = [10.0, 20.0, 30.0];
        assert!(js_divergence(&c, &d).unwrap().abs() < 1e-15);
        assert_eq!(js_divergence(&[1.0, 0.0], &[0.0, 5.0]).unwrap(), 1.0);
        assert!(matches!(
            js_divergence(&[0.0, 0.0], &d[..2]),
            Err(Error::UndefinedMismatch(_))
        ));
    }

    #[test]
    fn iree_examples() {
        let d_tot = 9.7e12;
        let d = vec![d_tot / 4.0; 4];
        let v = iree(&d, &d, 3708.0).unwrap();
        assert_relative_eq!(v, 9.7e12 / 3708.0, max_relative = 1e-14);
        assert_relative_eq!(v, 2.615_965_480_043e9, max_relative = 1e-12);
        assert_eq!(iree(&[1.0, 0.0], &[0.0, 1.0], 10.0).unwrap(), 0.0);
        assert!(iree(&d, &d, 0.0).is_err());
        assert_eq!(iree(&[0.0; 4], &d, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn csat_examples() {
        let d = [1.0, 3.0];
        assert_relative_eq!(csat(&d, &d).unwrap(), 1.0);
        assert_relative_eq!(csat(&[0.5, 1.5], &d).unwrap(), 0.5);
    }

    #[test]
    fn ee_examples() {
        assert_eq!(ee(&[0.0, 0.0], 5.0).unwrap(), 0.0);
        assert_eq!(ee(&[2.0, 3.0], 5.0).unwrap(), 1.0);
        assert!(ee(&[1.0], -1.0).is_err());
    }

    #[test]
    fn hellinger_examples() {
        let r = hellinger_chain_report(&[1.0, 2.0], &[2.0, 4.0]).unwrap();
        assert!(r.xi.abs() < 1e-15 && r.hellinger_sq.abs() < 1e-15 && r.l2_of_density_gap.abs() < 1e-15);
        let r = hellinger_chain_report(&[0.75, 0.25], &[0.25, 0.75]).unwrap();
        let h = 2.0 * (0.75f64.sqrt() - 0.25f64.sqrt()).powi(2);
        let l2 = (2.0 * 0.5f64.powi(2)).sqrt();
        assert_relative_eq!(r.hellinger_sq, h, max_relative = 1e-14);
        assert_relative_eq!(r.hellinger_sq, 0.267_949_192_431_123, max_relative = 1e-12);
        assert_relative_eq!(r.l2_of_density_gap, l2, max_relative = 1e-14);
        assert_relative_eq!(r.xi, 0.188_721_875_540_867, max_relative = 1e-12);
    }

    #[test]
    fn chain_violation_sweep_is_reported() {
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..100)
            .map(|_| {
                let n = rng.gen_range(2..20);
                (
                    (0..n).map(|_| rng.gen::<f64>()).collect(),
                    (0..n).map(|_| rng.gen::<f64>()).collect(),
                )
            })
            .collect();
        let (a, b) = chain_violations(&pairs).unwrap();
        assert!(a <= 100 && b <= 100);
        // Even the two-cell case breaks the first step, so the chain is not a valid bound.
        assert!(!hellinger_chain_report(&[0.75, 0.25], &[0.25, 0.75])
            .unwrap()
            .first_step_holds());
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c: Vec<f64> = (0..12).map(|_| rng.gen_range(0.1..2.0)).collect();
        let d: Vec<f64> = (0..12).map(|_| rng.gen_range(0.1..2.0)).collect();
        let (_, g) = js_divergence_with_gradient(&c, &d).unwrap();
        for k in 0..c.len() {
            let h = 1e-6;
            let mut up = c.clone();
            let mut dn = c.clone();
            up[k] += h;
            dn[k] -= h;
            let fd = (oracle_js(&up, &d) - oracle_js(&dn, &d)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-7, "{k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn random_pairs_match_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(1000);
        for _ in 0..1000 {
            let n = rng.gen_range(1..40);
            let c: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen::<f64>() * 1e9 })
                .collect();
            let mut d: Vec<f64> = (0..n)
                .map(|_| if rng.gen_bool(0.1) { 0.0 } else { rng.gen::<f64>() * 1e9 })
                .collect();
            if c.iter().sum::<f64>() == 0.0 {
                continue;
            }
            if d.iter().sum::<f64>() == 0.0 {
                d[0] = 1.0;
            }
            let p = rng.gen_range(1.0..5000.0);
            let xi = js_divergence(&c, &d).unwrap();
            let ox = oracle_js(&c, &d);
            assert!((xi - ox).abs() <= 1e-12 * ox.max(1e-300) || (xi - ox).abs() < 1e-15);
            assert!((0.0..=1.0).contains(&xi));
            let ct: f64 = c.iter().sum();
            let dt: f64 = d.iter().sum();
            let u = ct.min(dt) * (1.0 - ox);
            assert_relative_eq!(iree(&c, &d, p).unwrap(), u / p, max_relative = 1e-12, epsilon = 1e-300);
            assert_relative_eq!(csat(&c, &d).unwrap(), u / dt, max_relative = 1e-12, epsilon = 1e-300);
            assert_relative_eq!(ee(&c, p).unwrap(), ct / p, max_relative = 1e-12);
        }
    }

    fn field() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..1e6, 8)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn symmetric(c in field(), d in field()) {
            prop_assume!(c.iter().sum::<f64>() > 0.0 && d.iter().sum::<f64>() > 0.0);
            let a = js_divergence(&c, &d).unwrap();
            let b = js_divergence(&d, &c).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn scale_invariant(c in field(), d in field(), k in 1e-6f64..1e6) {
            prop_assume!(c.iter().sum::<f64>() > 0.0 && d.iter().sum::<f64>() > 0.0);
            let scaled: Vec<f64> = c.iter().map(|v| v * k).collect();
            let a = js_divergence(&c, &d).unwrap();
            let b = js_divergence(&scaled, &d).unwrap();
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn bounded_metrics(c in field(), d in field(), p in 1.0f64..1e4) {
            prop_assume!(c.iter().sum::<f64>() > 0.0 && d.iter().sum::<f64>() > 0.0);
            let m = Metrics::evaluate(&c, &d, p).unwrap();
            prop_assert!((0.0..=1.0).contains(&m.xi));
            prop_assert!((0.0..=1.0).contains(&m.csat));
            prop_assert!(m.iree <= m.c_tot.min(m.d_tot) / p * (1.0 + 1e-12));
            if m.c_tot <= m.d_tot {
                prop_assert!(m.iree <= m.ee * (1.0 + 1e-12));
            }
        }
    }
}
